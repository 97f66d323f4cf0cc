use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::covers::sample_seed;
use crate::error::{Error, Result};
use crate::marginals::PseudoMarginals;
use crate::model::FactorGraph;
use crate::scalar::Scalar;

use super::objective::bethe_objective_raw;
use super::Layout;

#[derive(Clone, Copy, Debug)]
pub struct MeanFieldOptions {
    pub restarts: usize,
    pub seed: u64,
    pub max_sweeps: usize,
    pub tol: f64,
}

impl Default for MeanFieldOptions {
    fn default() -> Self {
        Self {
            restarts: 64,
            seed: 0,
            max_sweeps: 10_000,
            tol: 1e-13,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MeanFieldSolution<T> {
    /// Product beliefs at the best optimum found.
    pub marginals: PseudoMarginals<T>,
    pub node_beliefs: Vec<Vec<T>>,
    pub log_z: T,
    pub converged: bool,
}

/// Naive mean field by coordinate ascent from `restarts` starting points.
pub fn mean_field<T: Scalar>(
    model: &FactorGraph<T>,
    restarts: usize,
    seed: u64,
) -> Result<MeanFieldSolution<T>> {
    mean_field_with(
        model,
        &MeanFieldOptions {
            restarts,
            seed,
            ..Default::default()
        },
    )
}

pub fn mean_field_with<T: Scalar>(
    model: &FactorGraph<T>,
    options: &MeanFieldOptions,
) -> Result<MeanFieldSolution<T>> {
    for (a, f) in model.factors().iter().enumerate() {
        if f.table.is_all_zero() {
            return Err(Error::ZeroFactor(a));
        }
    }
    let layout = Layout::new(model);
    let mut best: Option<MeanFieldSolution<T>> = None;
    for r in 0..options.restarts.max(1) {
        let start: Vec<Vec<T>> = if r == 0 {
            model
                .cards()
                .iter()
                .map(|&c| vec![T::one() / T::from_count(c); c])
                .collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(options.seed, r as u64));
            model
                .cards()
                .iter()
                .map(|&c| {
                    let v: Vec<f64> = (0..c).map(|_| rng.gen_range(0.01..1.0)).collect();
                    let s: f64 = v.iter().sum();
                    v.into_iter().map(|x| T::lit(x / s)).collect()
                })
                .collect()
        };
        let Some((nodes, converged)) = ascend(model, &layout, start, options) else {
            continue;
        };
        let marginals = PseudoMarginals::product(model, nodes.clone());
        let log_z = bethe_objective_raw(model, &marginals);
        if !log_z.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|b| log_z > b.log_z) {
            best = Some(MeanFieldSolution {
                marginals,
                node_beliefs: nodes,
                log_z,
                converged,
            });
        }
    }
    best.ok_or(Error::Unnormalizable)
}

/// Sequential updates `τ_i(x) ∝ φ_i(x) exp(Σ_α E[log ψ_α | x_i = x])`,
/// taken in the limit where zero potentials are replaced by `ε → 0`.
fn ascend<T: Scalar>(
    model: &FactorGraph<T>,
    layout: &Layout,
    mut tau: Vec<Vec<T>>,
    options: &MeanFieldOptions,
) -> Option<(Vec<Vec<T>>, bool)> {
    let tol = T::lit(options.tol);
    for _ in 0..options.max_sweeps {
        let mut change = T::zero();
        for i in 0..model.num_variables() {
            let c = model.cardinality(i);
            // states are ranked first by the mass they put on zero potentials
            let mut penalty = vec![T::zero(); c];
            let mut logits = vec![T::zero(); c];
            for x in 0..c {
                let phi = model.phi(i, x);
                if phi > T::zero() {
                    logits[x] = phi.ln();
                } else {
                    penalty[x] = T::infinity();
                }
            }
            for &(a, p) in &layout.incidences[i] {
                let f = model.factor(a);
                for (k, s) in layout.entries[a].iter().enumerate() {
                    let mut w = T::one();
                    for (q, &x) in s.iter().enumerate() {
                        if q != p {
                            w = w * tau[f.scope[q]][x];
                        }
                    }
                    if w == T::zero() {
                        continue;
                    }
                    let psi = f.table.values()[k];
                    if psi > T::zero() {
                        logits[s[p]] = logits[s[p]] + w * psi.ln();
                    } else {
                        penalty[s[p]] = penalty[s[p]] + w;
                    }
                }
            }
            let least = penalty.iter().copied().fold(T::infinity(), T::min);
            if !least.is_finite() {
                return None;
            }
            let slack = T::lit(1e-12) * (T::one() + least);
            let top = (0..c)
                .filter(|&x| penalty[x] <= least + slack)
                .map(|x| logits[x])
                .fold(T::neg_infinity(), T::max);
            let mut next: Vec<T> = (0..c)
                .map(|x| {
                    if penalty[x] <= least + slack {
                        (logits[x] - top).exp()
                    } else {
                        T::zero()
                    }
                })
                .collect();
            let s: T = next.iter().copied().sum();
            next.iter_mut().for_each(|v| *v = *v / s);
            for (x, v) in next.iter().enumerate() {
                change = change.max((*v - tau[i][x]).abs());
            }
            tau[i] = next;
        }
        if change < tol {
            return Some((tau, true));
        }
    }
    Some((tau, false))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn independent_model_is_exact() {
        let mut g = FactorGraph::<f64>::new(vec![2, 3]).unwrap();
        g.set_node_potential(0, vec![1.0, 3.0]).unwrap();
        g.set_node_potential(1, vec![1.0, 2.0, 0.5]).unwrap();
        let mf = mean_field(&g, 4, 1).unwrap();
        assert!((mf.log_z - g.exact_partition().unwrap().ln()).abs() < 1e-12);
    }

    #[test]
    fn lower_bound_on_coupled_pair() {
        let w = 1.3f64.exp();
        let mut g = FactorGraph::new(vec![2, 2]).unwrap();
        g.add_factor(vec![0, 1], vec![w, 1.0, 1.0, w]).unwrap();
        let mf = mean_field(&g, 8, 2).unwrap();
        let z = g.exact_partition().unwrap();
        assert!(mf.log_z <= z.ln() + 1e-12);
        assert!(mf.converged);
        assert!(mf.marginals.polytope_violation(&g).unwrap() < 1e-12);
    }

    #[test]
    fn hard_constraint_forces_state() {
        let mut g = FactorGraph::<f64>::new(vec![2, 2]).unwrap();
        g.add_factor(vec![0, 1], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        g.set_node_potential(0, vec![0.0, 1.0]).unwrap();
        let mf = mean_field(&g, 4, 0).unwrap();
        assert!((mf.node_beliefs[1][0] - 1.0).abs() < 1e-12);
        assert!(mf.log_z.abs() < 1e-12);
    }
}
