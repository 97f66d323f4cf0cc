use crate::error::{Error, Result};
use crate::marginals::PseudoMarginals;
use crate::model::FactorGraph;
use crate::scalar::{xlogx, KahanSum, Scalar};

use super::Layout;

/// Tolerance on local-polytope membership accepted by [`bethe_objective`].
pub const POLYTOPE_TOL: f64 = 1e-9;

/// `log Z_B(G, τ)` for `τ` in the local polytope.
///
/// Returns `-∞` when `τ` puts mass where a potential vanishes and rejects
/// beliefs that violate the polytope constraints by more than `1e-9`.
pub fn bethe_objective<T: Scalar>(model: &FactorGraph<T>, tau: &PseudoMarginals<T>) -> Result<T> {
    let violation = tau.polytope_violation(model)?;
    if violation > T::lit(POLYTOPE_TOL) {
        return Err(Error::NotInPolytope(violation.as_f64()));
    }
    Ok(bethe_objective_raw(model, tau))
}

/// The Bethe objective evaluated without the polytope check (for any
/// nonnegative `τ` of the right shape).
///
/// energy: `Σ τ_i log φ_i + Σ τ_α log ψ_α`
/// entropy: `−Σ τ_i log τ_i − Σ τ_α log(τ_α / ∏ τ_i)`
pub fn bethe_objective_raw<T: Scalar>(model: &FactorGraph<T>, tau: &PseudoMarginals<T>) -> T {
    let mut acc = KahanSum::new();
    for (i, node) in tau.nodes.iter().enumerate() {
        for (x, &t) in node.iter().enumerate() {
            if t <= T::zero() {
                continue;
            }
            let phi = model.phi(i, x);
            if phi <= T::zero() {
                return T::neg_infinity();
            }
            acc.add(t * phi.ln());
            acc.add(-xlogx(t));
        }
    }
    for (a, f) in model.factors().iter().enumerate() {
        for (k, &t) in tau.factors[a].iter().enumerate() {
            if t <= T::zero() {
                continue;
            }
            let psi = f.table.values()[k];
            if psi <= T::zero() {
                return T::neg_infinity();
            }
            let s = f.table.states_of(k);
            let mut log_prod = T::zero();
            for (&v, &x) in f.scope.iter().zip(&s) {
                let ti = tau.nodes[v][x];
                if ti <= T::zero() {
                    // τ_α > 0 over a zero node belief: the ratio is unbounded
                    return T::neg_infinity();
                }
                log_prod = log_prod + ti.ln();
            }
            acc.add(t * psi.ln());
            acc.add(-(xlogx(t) - t * log_prod));
        }
    }
    acc.value()
}

/// Gradient of [`bethe_objective_raw`] with respect to every entry of `τ`
/// (treated as free coordinates), valid where all entries are positive.
pub fn bethe_gradient<T: Scalar>(
    model: &FactorGraph<T>,
    tau: &PseudoMarginals<T>,
) -> PseudoMarginals<T> {
    let layout = Layout::new(model);
    gradient_with_layout(model, &layout, tau)
}

pub(crate) fn gradient_with_layout<T: Scalar>(
    model: &FactorGraph<T>,
    layout: &Layout,
    tau: &PseudoMarginals<T>,
) -> PseudoMarginals<T> {
    let one = T::one();
    // Σ_α Σ_{x_α : x_i = x} τ_α(x_α), accumulated per node state
    let mut incoming: Vec<Vec<T>> = tau.nodes.iter().map(|n| vec![T::zero(); n.len()]).collect();
    let mut factors = Vec::with_capacity(model.num_factors());
    for (a, f) in model.factors().iter().enumerate() {
        let mut grad = Vec::with_capacity(f.table.len());
        for (k, s) in layout.entries[a].iter().enumerate() {
            let t = tau.factors[a][k];
            let mut log_prod = T::zero();
            for (&v, &x) in f.scope.iter().zip(s) {
                log_prod = log_prod + tau.nodes[v][x].ln();
                incoming[v][x] = incoming[v][x] + t;
            }
            grad.push(f.table.values()[k].ln() - t.ln() - one + log_prod);
        }
        factors.push(grad);
    }
    let nodes = tau
        .nodes
        .iter()
        .enumerate()
        .map(|(i, node)| {
            node.iter()
                .enumerate()
                .map(|(x, &t)| model.phi(i, x).ln() - t.ln() - one + incoming[i][x] / t)
                .collect()
        })
        .collect();
    PseudoMarginals { nodes, factors }
}

/// Concatenates node beliefs then factor beliefs.
pub fn flatten<T: Scalar>(tau: &PseudoMarginals<T>) -> Vec<T> {
    tau.nodes
        .iter()
        .chain(tau.factors.iter())
        .flat_map(|v| v.iter().copied())
        .collect()
}

/// Inverse of [`flatten`] for the shapes of `model`.
pub fn unflatten<T: Scalar>(model: &FactorGraph<T>, flat: &[T]) -> PseudoMarginals<T> {
    let mut it = flat.iter().copied();
    let nodes = model
        .cards()
        .iter()
        .map(|&c| it.by_ref().take(c).collect())
        .collect();
    let factors = model
        .factors()
        .iter()
        .map(|f| it.by_ref().take(f.table.len()).collect())
        .collect();
    PseudoMarginals { nodes, factors }
}
