use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marginals::PseudoMarginals;
use crate::model::FactorGraph;
use crate::scalar::Scalar;

use super::objective::bethe_objective_raw;
use super::Layout;

#[derive(Clone, Copy, Debug)]
pub struct BpOptions<T> {
    /// Weight kept on the previous message; `0` is undamped.
    pub damping: T,
    pub max_iters: usize,
    pub tol: T,
}

impl<T: Scalar> Default for BpOptions<T> {
    fn default() -> Self {
        Self {
            damping: T::lit(0.5),
            max_iters: 10_000,
            tol: T::lit(1e-10),
        }
    }
}

/// Starting messages.
#[derive(Clone, Debug)]
pub enum BpInit<T> {
    Uniform,
    Random(u64),
    Messages(BpState<T>),
}

/// Message state indexed by `[factor][position][state]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BpState<T> {
    pub factor_to_var: Vec<Vec<Vec<T>>>,
    pub var_to_factor: Vec<Vec<Vec<T>>>,
    pub damping: T,
    pub iterations: usize,
    pub residual: T,
}

#[derive(Clone, Debug)]
pub struct BpResult<T> {
    pub state: BpState<T>,
    pub converged: bool,
    pub beliefs: PseudoMarginals<T>,
    /// Bethe objective at the returned beliefs.
    pub log_zb: T,
}

fn normalize<T: Scalar>(v: &mut [T]) -> bool {
    let s: T = v.iter().copied().sum();
    if !(s > T::zero()) || !s.is_finite() {
        return false;
    }
    for x in v.iter_mut() {
        *x = *x / s;
    }
    true
}

fn shape<T: Scalar>(model: &FactorGraph<T>, mut fill: impl FnMut(usize) -> Vec<T>) -> Vec<Vec<Vec<T>>> {
    model
        .factors()
        .iter()
        .map(|f| f.scope.iter().map(|&v| fill(model.cardinality(v))).collect())
        .collect()
}

/// Damped synchronous sum-product. Errors on an all-zero factor table.
pub fn run_bp<T: Scalar>(
    model: &FactorGraph<T>,
    init: BpInit<T>,
    options: &BpOptions<T>,
) -> Result<BpResult<T>> {
    for (a, f) in model.factors().iter().enumerate() {
        if f.table.is_all_zero() {
            return Err(Error::ZeroFactor(a));
        }
    }
    let layout = Layout::new(model);
    let mut f2v = match init {
        BpInit::Uniform => shape(model, |c| vec![T::one() / T::from_count(c); c]),
        BpInit::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            shape(model, |c| {
                let mut v: Vec<T> = (0..c).map(|_| T::lit(rng.gen_range(0.05..1.0))).collect();
                normalize(&mut v);
                v
            })
        }
        BpInit::Messages(state) => {
            if state.factor_to_var.len() != model.num_factors() {
                return Err(Error::DimensionMismatch {
                    expected: model.num_factors(),
                    got: state.factor_to_var.len(),
                });
            }
            state.factor_to_var
        }
    };
    let mut v2f = var_messages(model, &layout, &f2v);
    let lambda = options.damping;
    let mut residual = T::infinity();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < options.max_iters {
        iterations += 1;
        let fresh = factor_messages(model, &layout, &v2f);
        residual = T::zero();
        for (a, msgs) in fresh.into_iter().enumerate() {
            for (p, mut m) in msgs.into_iter().enumerate() {
                let old = &f2v[a][p];
                for (x, v) in m.iter_mut().enumerate() {
                    *v = lambda * old[x] + (T::one() - lambda) * *v;
                }
                normalize(&mut m);
                for (x, v) in m.iter().enumerate() {
                    residual = residual.max((*v - old[x]).abs());
                }
                f2v[a][p] = m;
            }
        }
        let next_v2f = var_messages(model, &layout, &f2v);
        for (a, msgs) in next_v2f.iter().enumerate() {
            for (p, m) in msgs.iter().enumerate() {
                for (x, v) in m.iter().enumerate() {
                    residual = residual.max((*v - v2f[a][p][x]).abs());
                }
            }
        }
        v2f = next_v2f;
        if !residual.is_finite() {
            break;
        }
        if residual < options.tol {
            converged = true;
            break;
        }
    }
    let beliefs = beliefs(model, &layout, &f2v, &v2f);
    let log_zb = bethe_objective_raw(model, &beliefs);
    Ok(BpResult {
        state: BpState {
            factor_to_var: f2v,
            var_to_factor: v2f,
            damping: lambda,
            iterations,
            residual,
        },
        converged,
        beliefs,
        log_zb,
    })
}

/// `n_{i→α}(x) ∝ φ_i(x) ∏_{β∋i, β≠α} m_{β→i}(x)`.
fn var_messages<T: Scalar>(
    model: &FactorGraph<T>,
    layout: &Layout,
    f2v: &[Vec<Vec<T>>],
) -> Vec<Vec<Vec<T>>> {
    let mut out = shape(model, |c| vec![T::zero(); c]);
    for (i, inc) in layout.incidences.iter().enumerate() {
        for &(a, p) in inc {
            let m = &mut out[a][p];
            for (x, v) in m.iter_mut().enumerate() {
                let mut prod = model.phi(i, x);
                for &(b, q) in inc {
                    if (b, q) != (a, p) {
                        prod = prod * f2v[b][q][x];
                    }
                }
                *v = prod;
            }
            if !normalize(m) {
                let c = m.len();
                m.iter_mut().for_each(|v| *v = T::one() / T::from_count(c));
            }
        }
    }
    out
}

/// `m_{α→i}(x_i) ∝ Σ_{x_α ∖ x_i} ψ_α(x_α) ∏_{j≠i} n_{j→α}(x_j)`.
fn factor_messages<T: Scalar>(
    model: &FactorGraph<T>,
    layout: &Layout,
    v2f: &[Vec<Vec<T>>],
) -> Vec<Vec<Vec<T>>> {
    let mut out = shape(model, |c| vec![T::zero(); c]);
    for (a, f) in model.factors().iter().enumerate() {
        let vals = f.table.values();
        for (k, s) in layout.entries[a].iter().enumerate() {
            if vals[k] == T::zero() {
                continue;
            }
            for p in 0..s.len() {
                let mut w = vals[k];
                for (q, &x) in s.iter().enumerate() {
                    if q != p {
                        w = w * v2f[a][q][x];
                    }
                }
                out[a][p][s[p]] = out[a][p][s[p]] + w;
            }
        }
        for m in out[a].iter_mut() {
            if !normalize(m) {
                let c = m.len();
                m.iter_mut().for_each(|v| *v = T::one() / T::from_count(c));
            }
        }
    }
    out
}

fn beliefs<T: Scalar>(
    model: &FactorGraph<T>,
    layout: &Layout,
    f2v: &[Vec<Vec<T>>],
    v2f: &[Vec<Vec<T>>],
) -> PseudoMarginals<T> {
    let nodes = layout
        .incidences
        .iter()
        .enumerate()
        .map(|(i, inc)| {
            let mut b: Vec<T> = (0..model.cardinality(i))
                .map(|x| {
                    inc.iter()
                        .fold(model.phi(i, x), |acc, &(a, p)| acc * f2v[a][p][x])
                })
                .collect();
            normalize(&mut b);
            b
        })
        .collect();
    let factors = model
        .factors()
        .iter()
        .enumerate()
        .map(|(a, f)| {
            let mut b: Vec<T> = layout.entries[a]
                .iter()
                .enumerate()
                .map(|(k, s)| {
                    s.iter()
                        .enumerate()
                        .fold(f.table.values()[k], |acc, (p, &x)| acc * v2f[a][p][x])
                })
                .collect();
            normalize(&mut b);
            b
        })
        .collect();
    PseudoMarginals { nodes, factors }
}
