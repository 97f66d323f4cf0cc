use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FactorGraph;
use crate::scalar::Scalar;

/// Node and factor beliefs. Factor beliefs use the owning table's layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudoMarginals<T> {
    pub nodes: Vec<Vec<T>>,
    pub factors: Vec<Vec<T>>,
}

impl<T: Scalar> PseudoMarginals<T> {
    /// Product beliefs `τ_α(x_α) = ∏ τ_i(x_i)` from node beliefs.
    pub fn product(model: &FactorGraph<T>, nodes: Vec<Vec<T>>) -> Self {
        let factors = model
            .factors()
            .iter()
            .map(|f| {
                (0..f.table.len())
                    .map(|k| {
                        let s = f.table.states_of(k);
                        f.scope
                            .iter()
                            .zip(&s)
                            .fold(T::one(), |acc, (&v, &x)| acc * nodes[v][x])
                    })
                    .collect()
            })
            .collect();
        Self { nodes, factors }
    }

    /// Largest violation of the local-polytope constraints
    /// (negativity, normalization, and marginal consistency).
    pub fn polytope_violation(&self, model: &FactorGraph<T>) -> Result<T> {
        self.check_shape(model)?;
        let mut worst = T::zero();
        for node in &self.nodes {
            let mut s = T::zero();
            for &t in node {
                worst = worst.max(-t);
                s = s + t;
            }
            worst = worst.max((s - T::one()).abs());
        }
        for (a, f) in model.factors().iter().enumerate() {
            let tau = &self.factors[a];
            for &t in tau {
                worst = worst.max(-t);
            }
            if f.scope.is_empty() {
                worst = worst.max((tau[0] - T::one()).abs());
                continue;
            }
            for (p, &v) in f.scope.iter().enumerate() {
                let mut marg = vec![T::zero(); model.cardinality(v)];
                for (k, &t) in tau.iter().enumerate() {
                    let x = f.table.states_of(k)[p];
                    marg[x] = marg[x] + t;
                }
                for (x, m) in marg.iter().enumerate() {
                    worst = worst.max((*m - self.nodes[v][x]).abs());
                }
            }
        }
        Ok(worst)
    }

    pub fn check_shape(&self, model: &FactorGraph<T>) -> Result<()> {
        if self.nodes.len() != model.num_variables() {
            return Err(Error::DimensionMismatch {
                expected: model.num_variables(),
                got: self.nodes.len(),
            });
        }
        if self.factors.len() != model.num_factors() {
            return Err(Error::DimensionMismatch {
                expected: model.num_factors(),
                got: self.factors.len(),
            });
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.len() != model.cardinality(i) {
                return Err(Error::DimensionMismatch {
                    expected: model.cardinality(i),
                    got: n.len(),
                });
            }
        }
        for (a, f) in self.factors.iter().enumerate() {
            if f.len() != model.factor(a).table.len() {
                return Err(Error::DimensionMismatch {
                    expected: model.factor(a).table.len(),
                    got: f.len(),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_beliefs_are_in_polytope() {
        let mut g = FactorGraph::<f64>::new(vec![2, 3]).unwrap();
        g.add_factor(vec![0, 1], vec![1.0; 6]).unwrap();
        let tau = PseudoMarginals::product(&g, vec![vec![0.3, 0.7], vec![0.2, 0.5, 0.3]]);
        assert!(tau.polytope_violation(&g).unwrap() < 1e-15);
    }

    #[test]
    fn inconsistent_beliefs_detected() {
        let mut g = FactorGraph::<f64>::new(vec![2, 2]).unwrap();
        g.add_factor(vec![0, 1], vec![1.0; 4]).unwrap();
        let tau = PseudoMarginals {
            nodes: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            factors: vec![vec![0.5, 0.0, 0.5, 0.0]],
        };
        assert!((tau.polytope_violation(&g).unwrap() - 0.5).abs() < 1e-15);
    }
}
