//! Bethe free energy, sum-product belief propagation, and naive mean field.

mod bp;
mod mean_field;
mod objective;
mod optimize;

pub use bp::{run_bp, BpInit, BpOptions, BpResult, BpState};
pub use mean_field::{mean_field, mean_field_with, MeanFieldOptions, MeanFieldSolution};
pub use objective::{bethe_gradient, bethe_objective, bethe_objective_raw, flatten, unflatten};
pub use optimize::{
    maximize_bethe, maximize_bethe_with, project_to_polytope, BetheOptions, BetheSolution,
    CandidateSource,
};

use crate::model::FactorGraph;
use crate::scalar::Scalar;

/// Per-factor lookup of the joint state of every table entry.
#[derive(Clone, Debug)]
pub(crate) struct Layout {
    /// `entries[α][k]` is the scope state of flat entry `k`.
    pub entries: Vec<Vec<Vec<usize>>>,
    /// `(factor, position)` pairs incident to each variable.
    pub incidences: Vec<Vec<(usize, usize)>>,
}

impl Layout {
    pub fn new<T: Scalar>(model: &FactorGraph<T>) -> Self {
        let entries = model
            .factors()
            .iter()
            .map(|f| (0..f.table.len()).map(|k| f.table.states_of(k)).collect())
            .collect();
        Self {
            entries,
            incidences: model.incidences(),
        }
    }
}

/// States that can carry mass: node states with `φ > 0` that are supported
/// by every incident factor, and factor entries with `ψ > 0` over live node
/// states. Computed by propagation to a fixpoint.
#[derive(Clone, Debug)]
pub(crate) struct Support {
    pub nodes: Vec<Vec<bool>>,
    pub factors: Vec<Vec<bool>>,
}

impl Support {
    pub fn new<T: Scalar>(model: &FactorGraph<T>, layout: &Layout) -> Self {
        let mut nodes: Vec<Vec<bool>> = (0..model.num_variables())
            .map(|i| {
                (0..model.cardinality(i))
                    .map(|x| model.phi(i, x) > T::zero())
                    .collect()
            })
            .collect();
        let mut factors: Vec<Vec<bool>> = model
            .factors()
            .iter()
            .map(|f| f.table.values().iter().map(|&v| v > T::zero()).collect())
            .collect();
        loop {
            let mut changed = false;
            for (a, f) in model.factors().iter().enumerate() {
                for (k, s) in layout.entries[a].iter().enumerate() {
                    if factors[a][k] && f.scope.iter().zip(s).any(|(&v, &x)| !nodes[v][x]) {
                        factors[a][k] = false;
                        changed = true;
                    }
                }
                for (p, &v) in f.scope.iter().enumerate() {
                    let mut seen = vec![false; model.cardinality(v)];
                    for (k, s) in layout.entries[a].iter().enumerate() {
                        if factors[a][k] {
                            seen[s[p]] = true;
                        }
                    }
                    for (x, alive) in nodes[v].iter_mut().enumerate() {
                        if *alive && !seen[x] {
                            *alive = false;
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                return Self { nodes, factors };
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.iter().any(|n| n.iter().all(|&a| !a))
    }
}
