//! Boolean-lattice tools: meet/join, sorted stacks, log-supermodularity
//! checks, the multi-function correlation inequality, and bipartite
//! switching of log-submodular binary models.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::FactorGraph;
use crate::scalar::{kahan_sum, Scalar};

/// Default dimension cap for exhaustive pairwise checks (4^n pairs).
pub const DEFAULT_LSM_CAP: usize = 16;
/// Relative tolerance used in multiplicative lattice comparisons.
pub const LSM_REL_TOL: f64 = 1e-12;
/// Largest joint dimension `M·n` accepted by the correlation check.
pub const CORRELATION_CAP: usize = 20;

/// A point of `{0,1}^n`, `n ≤ 64`; coordinate `i` is bit `i`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct BitVector {
    n: usize,
    mask: u64,
}

impl BitVector {
    pub fn new(n: usize, mask: u64) -> Self {
        assert!(n <= 64, "BitVector supports at most 64 coordinates");
        let mask = if n == 64 { mask } else { mask & ((1u64 << n) - 1) };
        Self { n, mask }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(n, 0)
    }

    pub fn ones(n: usize) -> Self {
        Self::new(n, u64::MAX)
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mask = bits
            .iter()
            .enumerate()
            .fold(0u64, |m, (i, &b)| m | ((b as u64) << i));
        Self::new(bits.len(), mask)
    }

    pub fn from_indices(n: usize, idx: impl IntoIterator<Item = usize>) -> Self {
        Self::new(n, idx.into_iter().fold(0u64, |m, i| m | (1u64 << i)))
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn mask(&self) -> u64 {
        self.mask
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        (self.mask >> i) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.n);
        if value {
            self.mask |= 1 << i;
        } else {
            self.mask &= !(1 << i);
        }
    }

    /// `|x|`, the number of ones.
    pub fn count_ones(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&i| self.get(i))
    }

    pub fn to_bits(&self) -> Vec<bool> {
        (0..self.n).map(|i| self.get(i)).collect()
    }

    pub fn complement(&self) -> Self {
        Self::new(self.n, !self.mask)
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.mask & !other.mask == 0
    }

    /// All `2^n` points in mask order.
    pub fn all(n: usize) -> impl Iterator<Item = BitVector> {
        assert!(n < 64);
        (0..1u64 << n).map(move |m| BitVector::new(n, m))
    }
}

impl fmt::Debug for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for i in 0..self.n {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", self.get(i) as u8)?;
        }
        write!(f, ")")
    }
}

/// Coordinatewise minimum and maximum.
pub fn meet_join(x: &BitVector, y: &BitVector) -> Result<(BitVector, BitVector)> {
    if x.n != y.n {
        return Err(Error::DimensionMismatch {
            expected: x.n,
            got: y.n,
        });
    }
    Ok((
        BitVector::new(x.n, x.mask & y.mask),
        BitVector::new(x.n, x.mask | y.mask),
    ))
}

/// The family `x^[1] ≥ … ≥ x^[M]`: `x^[m]_i = 1` iff at least `m` inputs
/// have coordinate `i` set.
pub fn sorted_stack(xs: &[BitVector]) -> Result<Vec<BitVector>> {
    let first = xs
        .first()
        .ok_or_else(|| Error::InvalidParameter("sorted stack of an empty family".into()))?;
    let n = first.n;
    if let Some(bad) = xs.iter().find(|x| x.n != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: bad.n,
        });
    }
    let counts: Vec<usize> = (0..n)
        .map(|i| xs.iter().filter(|x| x.get(i)).count())
        .collect();
    Ok((1..=xs.len())
        .map(|m| BitVector::from_indices(n, (0..n).filter(|&i| counts[i] >= m)))
        .collect())
}

/// A nonnegative function on `{0,1}^n`, indexed by bit mask.
#[derive(Clone, Debug, PartialEq)]
pub struct BoolTable<T> {
    n: usize,
    values: Vec<T>,
}

impl<T: Scalar> BoolTable<T> {
    pub fn new(n: usize, values: Vec<T>) -> Result<Self> {
        if n >= 40 {
            return Err(Error::InvalidParameter(format!("dimension {n} too large")));
        }
        if values.len() != 1usize << n {
            return Err(Error::DimensionMismatch {
                expected: 1 << n,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::InvalidParameter(
                "table entries must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { n, values })
    }

    pub fn from_fn(n: usize, f: impl Fn(BitVector) -> T) -> Result<Self> {
        if n >= 40 {
            return Err(Error::InvalidParameter(format!("dimension {n} too large")));
        }
        Self::new(n, BitVector::all(n).map(f).collect())
    }

    /// Like `from_fn` but for fallible evaluators.
    pub fn try_from_fn(n: usize, f: impl Fn(BitVector) -> Result<T>) -> Result<Self> {
        if n >= 40 {
            return Err(Error::InvalidParameter(format!("dimension {n} too large")));
        }
        let values = BitVector::all(n).map(f).collect::<Result<Vec<_>>>()?;
        Self::new(n, values)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn at(&self, x: BitVector) -> T {
        self.values[x.mask as usize]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn total(&self) -> T {
        kahan_sum(self.values.iter().copied())
    }

    /// The table of a binary factor; scope position `p` becomes bit `p`.
    pub fn from_binary_factor(model: &FactorGraph<T>, factor: usize) -> Result<Self> {
        let f = model.factor(factor);
        if f.table.cards().iter().any(|&c| c != 2) {
            return Err(Error::NotSwitchable(format!(
                "binary variables (factor {factor} is not binary)"
            )));
        }
        let n = f.scope.len();
        Self::from_fn(n, |x| {
            let states: Vec<usize> = (0..n).map(|p| x.get(p) as usize).collect();
            f.table.get(&states)
        })
    }
}

/// Outcome of a pairwise lattice-inequality check.
#[derive(Clone, Debug, PartialEq)]
pub struct LsmReport {
    pub holds: bool,
    /// First violating pair `(x, y)` in mask order.
    pub witness: Option<(BitVector, BitVector)>,
    pub pairs_checked: u64,
}

/// `a ≤ b` up to relative tolerance; a positive `a` against `b = 0` fails.
#[inline]
pub(crate) fn le_rel<T: Scalar>(a: T, b: T, tol: T) -> bool {
    a <= b + tol * b.abs().max(a.abs())
}

/// Exhaustive check of `f(x) f(y) ≤ f(x∧y) f(x∨y)` with the default cap.
pub fn is_log_supermodular<T: Scalar>(f: &BoolTable<T>) -> Result<LsmReport> {
    is_log_supermodular_capped(f, DEFAULT_LSM_CAP)
}

pub fn is_log_supermodular_capped<T: Scalar>(f: &BoolTable<T>, cap: usize) -> Result<LsmReport> {
    if f.n > cap {
        return Err(Error::CapExceeded {
            size: 1u128 << (2 * f.n),
            cap: 1u128 << (2 * cap),
        });
    }
    let tol = T::lit(LSM_REL_TOL);
    let n = f.n;
    let size = 1u64 << n;
    let violation = (0..size).into_par_iter().find_map_first(|xm| {
        let x = BitVector::new(n, xm);
        let fx = f.at(x);
        (xm + 1..size).find_map(|ym| {
            // comparable pairs satisfy the inequality with equality
            if xm & ym == xm || xm & ym == ym {
                return None;
            }
            let y = BitVector::new(n, ym);
            let lhs = fx * f.at(y);
            let rhs = f.at(BitVector::new(n, xm & ym)) * f.at(BitVector::new(n, xm | ym));
            (!le_rel(lhs, rhs, tol)).then_some((x, y))
        })
    });
    Ok(LsmReport {
        holds: violation.is_none(),
        witness: violation,
        pairs_checked: size * size.saturating_sub(1) / 2,
    })
}

/// Exhaustive check of additive supermodularity `f(x)+f(y) ≤ f(x∧y)+f(x∨y)`
/// on integer-valued functions (used for `k_G` and `-r_S`).
pub fn is_supermodular_int(n: usize, f: impl Fn(BitVector) -> i64 + Sync) -> LsmReport {
    let size = 1u64 << n;
    let table: Vec<i64> = (0..size).map(|m| f(BitVector::new(n, m))).collect();
    let violation = (0..size).into_par_iter().find_map_first(|xm| {
        (xm + 1..size).find_map(|ym| {
            let lhs = table[xm as usize] + table[ym as usize];
            let rhs = table[(xm & ym) as usize] + table[(xm | ym) as usize];
            (lhs > rhs).then(|| (BitVector::new(n, xm), BitVector::new(n, ym)))
        })
    });
    LsmReport {
        holds: violation.is_none(),
        witness: violation,
        pairs_checked: size * size.saturating_sub(1) / 2,
    }
}

/// Definition-level check that every factor of a binary model is log-supermodular.
pub fn is_model_log_supermodular<T: Scalar>(model: &FactorGraph<T>) -> Result<bool> {
    for a in 0..model.num_factors() {
        let t = BoolTable::from_binary_factor(model, a)?;
        if !is_log_supermodular(&t)?.holds {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Result of checking the hypotheses and conclusion of the correlation
/// inequality for `g` on `({0,1}^n)^M` against `f_1, …, f_M` on `{0,1}^n`.
#[derive(Clone, Debug)]
pub struct CorrelationReport<T> {
    pub g_log_supermodular: LsmReport,
    /// `g(x¹,…,x^M) ≤ ∏ f_m(x^[m])` for every joint point.
    pub pointwise_holds: bool,
    /// Smallest relative slack `(rhs − lhs) / max(lhs, rhs)` of the pointwise bound.
    pub worst_pointwise_slack: T,
    pub pointwise_witness: Option<Vec<BitVector>>,
    /// `Σ g ≤ ∏ Σ f_m`.
    pub sum_holds: bool,
    pub sum_lhs: T,
    pub sum_rhs: T,
    pub sum_slack: T,
}

fn rel_slack<T: Scalar>(lhs: T, rhs: T) -> T {
    let scale = lhs.abs().max(rhs.abs());
    if scale == T::zero() {
        T::zero()
    } else {
        (rhs - lhs) / scale
    }
}

/// Splits a joint mask of dimension `M·n` into its `M` blocks of `n` bits.
pub fn split_blocks(joint: BitVector, m: usize, n: usize) -> Vec<BitVector> {
    let block = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    (0..m)
        .map(|k| BitVector::new(n, (joint.mask >> (k * n)) & block))
        .collect()
}

pub fn join_blocks(parts: &[BitVector]) -> BitVector {
    let n = parts.first().map_or(0, |p| p.n);
    let mask = parts
        .iter()
        .enumerate()
        .fold(0u64, |acc, (k, p)| acc | (p.mask << (k * n)));
    BitVector::new(n * parts.len(), mask)
}

/// Checks (a) `g` log-supermodular, (b) the pointwise sorted-stack bound,
/// and (c) the summed bound. Block `m` of `g`'s argument is bits `m·n..(m+1)·n`.
pub fn check_correlation_inequality<T: Scalar>(
    g: &BoolTable<T>,
    fs: &[BoolTable<T>],
) -> Result<CorrelationReport<T>> {
    let m = fs.len();
    if m == 0 {
        return Err(Error::InvalidParameter("need at least one f_m".into()));
    }
    let n = fs[0].n;
    if let Some(bad) = fs.iter().find(|f| f.n != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: bad.n,
        });
    }
    if g.n != m * n {
        return Err(Error::DimensionMismatch {
            expected: m * n,
            got: g.n,
        });
    }
    if g.n > CORRELATION_CAP {
        return Err(Error::CapExceeded {
            size: 1u128 << g.n,
            cap: 1u128 << CORRELATION_CAP,
        });
    }
    let g_lsm = is_log_supermodular_capped(g, CORRELATION_CAP)?;
    let tol = T::lit(LSM_REL_TOL);
    let mut worst = T::infinity();
    let mut witness = None;
    for joint in BitVector::all(g.n) {
        let parts = split_blocks(joint, m, n);
        let stack = sorted_stack(&parts)?;
        let rhs = stack
            .iter()
            .zip(fs)
            .fold(T::one(), |acc, (x, f)| acc * f.at(*x));
        let lhs = g.at(joint);
        let slack = rel_slack(lhs, rhs);
        if slack < worst {
            worst = slack;
        }
        if witness.is_none() && !le_rel(lhs, rhs, tol) {
            witness = Some(parts);
        }
    }
    let sum_lhs = g.total();
    let sum_rhs = fs.iter().fold(T::one(), |acc, f| acc * f.total());
    Ok(CorrelationReport {
        g_log_supermodular: g_lsm,
        pointwise_holds: witness.is_none(),
        worst_pointwise_slack: worst,
        pointwise_witness: witness,
        sum_holds: le_rel(sum_lhs, sum_rhs, tol),
        sum_lhs,
        sum_rhs,
        sum_slack: rel_slack(sum_lhs, sum_rhs),
    })
}

/// Change of variables `x_b ↦ 1 − x_b` on side `b` of a bipartite pairwise
/// binary model. Log-submodular edge tables become log-supermodular and the
/// partition function is unchanged.
pub fn switch_bipartite<T: Scalar>(
    model: &FactorGraph<T>,
    side_a: &[usize],
    side_b: &[usize],
) -> Result<FactorGraph<T>> {
    let n = model.num_variables();
    let mut in_b: Vec<Option<bool>> = vec![None; n];
    for (&v, flag) in side_a
        .iter()
        .map(|v| (v, false))
        .chain(side_b.iter().map(|v| (v, true)))
    {
        if v >= n {
            return Err(Error::UnknownVertex(v));
        }
        if in_b[v].replace(flag).is_some() {
            return Err(Error::NotSwitchable(format!(
                "a partition of the variables (variable {v} listed twice)"
            )));
        }
    }
    let in_b: Vec<bool> = in_b
        .into_iter()
        .enumerate()
        .map(|(v, s)| {
            s.ok_or_else(|| {
                Error::NotSwitchable(format!("a partition of the variables ({v} missing)"))
            })
        })
        .collect::<Result<_>>()?;
    if let Some(v) = (0..n).find(|&v| model.cardinality(v) != 2) {
        return Err(Error::NotSwitchable(format!(
            "binary variables (variable {v} has cardinality {})",
            model.cardinality(v)
        )));
    }
    for (a, f) in model.factors().iter().enumerate() {
        if f.scope.len() != 2 {
            return Err(Error::NotSwitchable(format!(
                "pairwise factors (factor {a} has arity {})",
                f.scope.len()
            )));
        }
        if in_b[f.scope[0]] == in_b[f.scope[1]] {
            return Err(Error::NotSwitchable(format!(
                "every edge to cross the partition (factor {a} joins {} and {})",
                f.scope[0], f.scope[1]
            )));
        }
    }
    let mut out = FactorGraph::new(model.cards().to_vec())?;
    for f in model.factors() {
        let flip = |p: usize, s: usize| if in_b[f.scope[p]] { 1 - s } else { s };
        out.add_factor_fn(f.scope.clone(), |x| {
            f.table.get(&[flip(0, x[0]), flip(1, x[1])])
        })?;
    }
    for (v, &b) in in_b.iter().enumerate() {
        if let Some(phi) = model.node_potential(v) {
            let values = if b { vec![phi[1], phi[0]] } else { phi.to_vec() };
            out.set_node_potential(v, values)?;
        }
    }
    Ok(out)
}
