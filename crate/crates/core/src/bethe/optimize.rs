use rayon::prelude::*;

use crate::covers::sample_seed;
use crate::error::{Error, Result};
use crate::marginals::PseudoMarginals;
use crate::model::FactorGraph;
use crate::scalar::Scalar;

use super::bp::{run_bp, BpInit, BpOptions};
use super::mean_field::{mean_field_with, MeanFieldOptions};
use super::objective::{bethe_objective_raw, flatten, gradient_with_layout, unflatten};
use super::{Layout, Support};

#[derive(Clone, Copy, Debug)]
pub struct BetheOptions {
    pub restarts: usize,
    pub seed: u64,
    pub damping: f64,
    pub bp_max_iters: usize,
    pub bp_tol: f64,
    /// How many of the best distinct starting points are refined.
    pub refine_candidates: usize,
    pub refine_iters: usize,
    pub max_variables: usize,
    pub max_factors: usize,
}

impl Default for BetheOptions {
    fn default() -> Self {
        Self {
            restarts: 64,
            seed: 0,
            damping: 0.5,
            bp_max_iters: 10_000,
            bp_tol: 1e-10,
            refine_candidates: 4,
            refine_iters: 3000,
            max_variables: 20,
            max_factors: 40,
        }
    }
}

/// Where the returned optimum started from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CandidateSource {
    Bp { restart: usize, converged: bool },
    MeanField,
}

#[derive(Clone, Debug)]
pub struct BetheSolution<T> {
    pub marginals: PseudoMarginals<T>,
    pub log_z: T,
    pub source: CandidateSource,
    /// BP restarts that met the convergence tolerance.
    pub converged_runs: usize,
}

impl<T: Scalar> BetheSolution<T> {
    pub fn z(&self) -> T {
        self.log_z.exp()
    }
}

/// Best Bethe optimum found from BP restarts and the mean-field optimum,
/// each refined by projected gradient ascent over the local polytope.
///
/// The result is a certified point of the polytope, so `exp(log_z)` is a
/// lower bound on the true maximum `Z_B`.
pub fn maximize_bethe<T: Scalar>(
    model: &FactorGraph<T>,
    restarts: usize,
    seed: u64,
) -> Result<BetheSolution<T>> {
    maximize_bethe_with(
        model,
        &BetheOptions {
            restarts,
            seed,
            ..Default::default()
        },
    )
}

pub fn maximize_bethe_with<T: Scalar>(
    model: &FactorGraph<T>,
    options: &BetheOptions,
) -> Result<BetheSolution<T>> {
    if model.num_variables() > options.max_variables || model.num_factors() > options.max_factors {
        return Err(Error::BudgetExceeded(format!(
            "{} variables and {} factors exceed the limit of {} and {}",
            model.num_variables(),
            model.num_factors(),
            options.max_variables,
            options.max_factors
        )));
    }
    for (a, f) in model.factors().iter().enumerate() {
        if f.table.is_all_zero() {
            return Err(Error::ZeroFactor(a));
        }
    }
    let layout = Layout::new(model);
    let support = Support::new(model, &layout);
    if support.is_empty() {
        return Err(Error::Unnormalizable);
    }
    let projector = Projector::new(model, &layout, &support);

    let bp_options = BpOptions {
        damping: T::lit(options.damping),
        max_iters: options.bp_max_iters,
        tol: T::lit(options.bp_tol).max(T::epsilon() * T::lit(16.0)),
    };
    let runs: Vec<_> = (0..options.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let init = if r == 0 {
                BpInit::Uniform
            } else {
                BpInit::Random(sample_seed(options.seed, r as u64))
            };
            run_bp(model, init, &bp_options).map(|res| (r, res))
        })
        .collect::<Result<_>>()?;
    let converged_runs = runs.iter().filter(|(_, r)| r.converged).count();

    let mut candidates: Vec<(T, Vec<T>, CandidateSource)> = Vec::new();
    for (r, res) in runs {
        let source = CandidateSource::Bp {
            restart: r,
            converged: res.converged,
        };
        if let Some(x) = projector.snap(&flatten(&res.beliefs)) {
            let v = projector.value(model, &x);
            if v.is_finite() {
                candidates.push((v, x, source));
            }
        }
    }
    let mf = mean_field_with(
        model,
        &MeanFieldOptions {
            restarts: options.restarts,
            seed: options.seed,
            ..Default::default()
        },
    );
    if let Ok(mf) = mf {
        let x = projector.restrict(&flatten(&mf.marginals));
        let v = projector.value(model, &x);
        if v.is_finite() && projector.residual(&x) < T::lit(1e-12) {
            candidates.push((v, x, CandidateSource::MeanField));
        }
    }
    if candidates.is_empty() {
        return Err(Error::Unnormalizable);
    }
    candidates.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));

    let mut picked: Vec<(T, Vec<T>, CandidateSource)> = Vec::new();
    for c in candidates {
        if picked.len() >= options.refine_candidates.max(1) {
            break;
        }
        if picked
            .iter()
            .all(|p| (p.0 - c.0).abs() > T::lit(1e-9) * (T::one() + c.0.abs()))
        {
            picked.push(c);
        }
    }
    let refined: Vec<(T, Vec<T>, CandidateSource)> = picked
        .into_par_iter()
        .map(|(v, x, s)| {
            let (v2, x2) = projector.ascend(model, &layout, x.clone(), options.refine_iters);
            if v2 >= v {
                (v2, x2, s)
            } else {
                (v, x, s)
            }
        })
        .collect();
    let (log_z, x, source) = refined
        .into_iter()
        .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal))
        .expect("at least one candidate");
    Ok(BetheSolution {
        marginals: unflatten(model, &projector.expand(&x)),
        log_z,
        source,
        converged_runs,
    })
}

/// Moves beliefs of the right shape onto the local polytope: affine
/// projection onto the constraint set followed by alternating projection
/// with the nonnegative orthant. Mass on impossible states is removed.
pub fn project_to_polytope<T: Scalar>(
    model: &FactorGraph<T>,
    tau: &PseudoMarginals<T>,
) -> Result<PseudoMarginals<T>> {
    tau.check_shape(model)?;
    let layout = Layout::new(model);
    let support = Support::new(model, &layout);
    if support.is_empty() {
        return Err(Error::Unnormalizable);
    }
    let projector = Projector::new(model, &layout, &support);
    let x = projector
        .snap(&flatten(tau))
        .ok_or(Error::NotInPolytope(f64::INFINITY))?;
    Ok(unflatten(model, &projector.expand(&x)))
}

/// Affine constraints of the local polytope restricted to the live
/// coordinates, held as an orthonormal row basis with matching right-hand side.
struct Projector<T> {
    full_len: usize,
    free: Vec<usize>,
    basis: Vec<Vec<T>>,
    rhs: Vec<T>,
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

impl<T: Scalar> Projector<T> {
    fn new(model: &FactorGraph<T>, layout: &Layout, support: &Support) -> Self {
        let mut full_pos = Vec::new();
        let mut node_off = Vec::new();
        let mut off = 0;
        for (i, alive) in support.nodes.iter().enumerate() {
            node_off.push(off);
            for (x, &a) in alive.iter().enumerate() {
                full_pos.push(a.then_some(off + x));
            }
            off += model.cardinality(i);
        }
        let mut factor_off = Vec::new();
        for (a, alive) in support.factors.iter().enumerate() {
            factor_off.push(off);
            for (k, &l) in alive.iter().enumerate() {
                full_pos.push(l.then_some(off + k));
            }
            off += model.factor(a).table.len();
        }
        let free: Vec<usize> = full_pos.into_iter().flatten().collect();
        let mut index = vec![usize::MAX; off];
        for (j, &f) in free.iter().enumerate() {
            index[f] = j;
        }
        let n = free.len();
        let mut rows: Vec<(Vec<T>, T)> = Vec::new();
        for (i, alive) in support.nodes.iter().enumerate() {
            let mut row = vec![T::zero(); n];
            for (x, &a) in alive.iter().enumerate() {
                if a {
                    row[index[node_off[i] + x]] = T::one();
                }
            }
            rows.push((row, T::one()));
        }
        for (a, f) in model.factors().iter().enumerate() {
            let alive = &support.factors[a];
            if f.scope.is_empty() {
                let mut row = vec![T::zero(); n];
                for (k, &l) in alive.iter().enumerate() {
                    if l {
                        row[index[factor_off[a] + k]] = T::one();
                    }
                }
                rows.push((row, T::one()));
            }
            for (p, &v) in f.scope.iter().enumerate() {
                for x in 0..model.cardinality(v) {
                    if !support.nodes[v][x] {
                        continue;
                    }
                    let mut row = vec![T::zero(); n];
                    for (k, s) in layout.entries[a].iter().enumerate() {
                        if alive[k] && s[p] == x {
                            row[index[factor_off[a] + k]] = T::one();
                        }
                    }
                    row[index[node_off[v] + x]] = -T::one();
                    rows.push((row, T::zero()));
                }
            }
        }
        let mut basis: Vec<Vec<T>> = Vec::new();
        let mut rhs: Vec<T> = Vec::new();
        for (mut row, mut b) in rows {
            let norm0 = dot(&row, &row).sqrt();
            for _ in 0..2 {
                for (q, &r) in basis.iter().zip(&rhs) {
                    let c = dot(&row, q);
                    for (x, &y) in row.iter_mut().zip(q) {
                        *x = *x - c * y;
                    }
                    b = b - c * r;
                }
            }
            let norm = dot(&row, &row).sqrt();
            if norm > T::lit(1e-9) * norm0 {
                row.iter_mut().for_each(|x| *x = *x / norm);
                basis.push(row);
                rhs.push(b / norm);
            }
        }
        Self {
            full_len: off,
            free,
            basis,
            rhs,
        }
    }

    fn restrict(&self, full: &[T]) -> Vec<T> {
        self.free.iter().map(|&f| full[f]).collect()
    }

    fn expand(&self, x: &[T]) -> Vec<T> {
        let mut full = vec![T::zero(); self.full_len];
        for (&f, &v) in self.free.iter().zip(x) {
            full[f] = v;
        }
        full
    }

    fn project_point(&self, x: &mut [T]) {
        for (q, &r) in self.basis.iter().zip(&self.rhs) {
            let c = dot(x, q) - r;
            for (v, &y) in x.iter_mut().zip(q) {
                *v = *v - c * y;
            }
        }
    }

    fn project_direction(&self, d: &mut [T]) {
        for q in &self.basis {
            let c = dot(d, q);
            for (v, &y) in d.iter_mut().zip(q) {
                *v = *v - c * y;
            }
        }
    }

    fn residual(&self, x: &[T]) -> T {
        self.basis
            .iter()
            .zip(&self.rhs)
            .fold(T::zero(), |acc, (q, &r)| acc.max((dot(x, q) - r).abs()))
    }

    fn snap(&self, full: &[T]) -> Option<Vec<T>> {
        let mut x = self.restrict(full);
        for _ in 0..2000 {
            self.project_point(&mut x);
            if x.iter().all(|&v| v >= T::zero()) {
                return Some(x);
            }
            x.iter_mut().for_each(|v| *v = v.max(T::zero()));
        }
        None
    }

    fn value(&self, model: &FactorGraph<T>, x: &[T]) -> T {
        bethe_objective_raw(model, &unflatten(model, &self.expand(x)))
    }

    fn gradient(&self, model: &FactorGraph<T>, layout: &Layout, x: &[T]) -> Vec<T> {
        let tau = unflatten(model, &self.expand(x));
        let g = flatten(&gradient_with_layout(model, layout, &tau));
        self.restrict(&g)
    }

    /// Projected gradient ascent with Barzilai–Borwein steps, an Armijo
    /// backtrack, and a step cap that keeps every live coordinate positive.
    fn ascend(
        &self,
        model: &FactorGraph<T>,
        layout: &Layout,
        mut x: Vec<T>,
        iters: usize,
    ) -> (T, Vec<T>) {
        let mut f = self.value(model, &x);
        if x.iter().any(|&v| v <= T::zero()) || !f.is_finite() {
            return (f, x);
        }
        let mut d = self.gradient(model, layout, &x);
        self.project_direction(&mut d);
        let mut step = T::one();
        let mut stalls = 0;
        for _ in 0..iters {
            let gn2 = dot(&d, &d);
            if gn2.sqrt() < T::lit(1e-12) {
                break;
            }
            let mut t_max = T::infinity();
            for (&v, &dv) in x.iter().zip(&d) {
                if dv < T::zero() {
                    t_max = t_max.min(-v / dv);
                }
            }
            let mut t = step.min(T::lit(0.95) * t_max);
            let mut accepted = None;
            for _ in 0..60 {
                let trial: Vec<T> = x.iter().zip(&d).map(|(&v, &dv)| v + t * dv).collect();
                if trial.iter().all(|&v| v > T::zero()) {
                    let ft = self.value(model, &trial);
                    if ft.is_finite() && ft >= f + T::lit(1e-4) * t * gn2 {
                        accepted = Some((trial, ft));
                        break;
                    }
                }
                t = t * T::lit(0.5);
            }
            let Some((mut xn, fn_)) = accepted else {
                break;
            };
            self.project_point(&mut xn);
            if xn.iter().any(|&v| v <= T::zero()) {
                break;
            }
            let fn_ = {
                let fp = self.value(model, &xn);
                if fp.is_finite() {
                    fp
                } else {
                    fn_
                }
            };
            let mut dn = self.gradient(model, layout, &xn);
            self.project_direction(&mut dn);
            let s: Vec<T> = xn.iter().zip(&x).map(|(&a, &b)| a - b).collect();
            let y: Vec<T> = dn.iter().zip(&d).map(|(&a, &b)| a - b).collect();
            let sy = dot(&s, &y);
            step = if sy < T::zero() {
                dot(&s, &s) / (-sy)
            } else {
                t * T::lit(2.0)
            };
            let gain = fn_ - f;
            x = xn;
            d = dn;
            f = fn_;
            if gain <= T::lit(1e-15) * (T::one() + f.abs()) {
                stalls += 1;
                if stalls >= 5 {
                    break;
                }
            } else {
                stalls = 0;
            }
        }
        (f, x)
    }
}
