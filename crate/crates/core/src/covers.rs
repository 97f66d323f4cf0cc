//! M-covers of factor graphs built from one permutation per
//! (factor, variable) incidence.
//!
//! Copy `c` of base variable `i` is lifted variable `c·|V| + i` and copy `c`
//! of factor `α` is lifted factor `c·|A| + α`. The layer of a lifted variable
//! is its copy index, so layer `m` holds exactly one copy of each base
//! variable and lifted assignments split as `x = (x¹, …, x^M)`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FactorGraph, DEFAULT_ENUMERATION_CAP};
use crate::scalar::{KahanSum, Scalar};

/// A cover given by a permutation of `0..m` for every incidence.
///
/// `permutations[α][p][c]` is the copy of variable `scope(α)[p]` attached to
/// copy `c` of factor `α`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverSpec<T> {
    pub base: FactorGraph<T>,
    pub m: usize,
    pub permutations: Vec<Vec<Vec<usize>>>,
}

/// Homomorphism from a cover onto its base.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CopyMap {
    pub variables: Vec<usize>,
    pub factors: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct LiftedModel<T> {
    pub m: usize,
    pub cover: FactorGraph<T>,
    pub copy_map: CopyMap,
    pub layer_map: Vec<usize>,
}

impl<T: Scalar> LiftedModel<T> {
    /// Lifted variable holding copy `layer` of base variable `var`.
    pub fn variable(&self, layer: usize, var: usize) -> usize {
        layer * (self.cover.num_variables() / self.m) + var
    }
}

fn is_permutation(p: &[usize], m: usize) -> bool {
    if p.len() != m {
        return false;
    }
    let mut seen = vec![false; m];
    p.iter().all(|&c| c < m && !std::mem::replace(&mut seen[c], true))
}

impl<T: Scalar> CoverSpec<T> {
    pub fn new(base: FactorGraph<T>, m: usize, permutations: Vec<Vec<Vec<usize>>>) -> Result<Self> {
        let spec = Self {
            base,
            m,
            permutations,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// All-identity permutations: `m` disjoint copies of the base.
    pub fn identity(base: FactorGraph<T>, m: usize) -> Self {
        let permutations = base
            .factors()
            .iter()
            .map(|f| vec![(0..m).collect(); f.scope.len()])
            .collect();
        Self {
            base,
            m,
            permutations,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::MalformedCover("M must be positive".into()));
        }
        if self.permutations.len() != self.base.num_factors() {
            return Err(Error::MalformedCover(format!(
                "expected permutations for {} factors, got {}",
                self.base.num_factors(),
                self.permutations.len()
            )));
        }
        for (a, (perms, f)) in self.permutations.iter().zip(self.base.factors()).enumerate() {
            if perms.len() != f.scope.len() {
                return Err(Error::MalformedCover(format!(
                    "factor {a} has {} incidences but {} permutations",
                    f.scope.len(),
                    perms.len()
                )));
            }
            if let Some(p) = perms.iter().position(|p| !is_permutation(p, self.m)) {
                return Err(Error::MalformedCover(format!(
                    "incidence ({a}, {p}) is not a permutation of 0..{}",
                    self.m
                )));
            }
        }
        Ok(())
    }

    /// Lifts the base model along the permutations.
    pub fn build(&self) -> Result<LiftedModel<T>> {
        self.validate()?;
        let base = &self.base;
        let n = base.num_variables();
        let na = base.num_factors();
        let m = self.m;
        let cards: Vec<usize> = (0..m).flat_map(|_| base.cards().iter().copied()).collect();
        let mut cover = FactorGraph::new(cards)?;
        for c in 0..m {
            for i in 0..n {
                if let Some(phi) = base.node_potential(i) {
                    cover.set_node_potential(c * n + i, phi.to_vec())?;
                }
            }
        }
        for c in 0..m {
            for (a, f) in base.factors().iter().enumerate() {
                let scope = f
                    .scope
                    .iter()
                    .enumerate()
                    .map(|(p, &i)| self.permutations[a][p][c] * n + i)
                    .collect();
                cover.add_factor(scope, f.table.values().to_vec())?;
            }
        }
        let variables = (0..m * n).map(|j| j % n).collect();
        let factors = (0..m * na).map(|b| b % na.max(1)).collect();
        let layer_map = (0..m * n).map(|j| j / n.max(1)).collect();
        Ok(LiftedModel {
            m,
            cover,
            copy_map: CopyMap { variables, factors },
            layer_map,
        })
    }

    /// Number of incidences (one permutation each).
    pub fn num_incidences(&self) -> usize {
        self.permutations.iter().map(Vec::len).sum()
    }
}

/// Result of checking that a candidate is a cover of a base model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoverDiagnosis {
    pub valid: bool,
    /// Number of copies per base node when valid.
    pub m: Option<usize>,
    /// First violation found, naming the offending node.
    pub problem: Option<String>,
}

impl CoverDiagnosis {
    fn fail(msg: String) -> Self {
        Self {
            valid: false,
            m: None,
            problem: Some(msg),
        }
    }
}

/// Checks that `map` is a factor-graph homomorphism from `candidate` onto
/// `base` that is bijective on every neighbourhood, preserves potentials,
/// and gives every base node the same number of preimages.
pub fn validate_cover<T: Scalar>(
    candidate: &FactorGraph<T>,
    base: &FactorGraph<T>,
    map: &CopyMap,
) -> CoverDiagnosis {
    if map.variables.len() != candidate.num_variables() {
        return CoverDiagnosis::fail(format!(
            "copy map covers {} of {} variables",
            map.variables.len(),
            candidate.num_variables()
        ));
    }
    if map.factors.len() != candidate.num_factors() {
        return CoverDiagnosis::fail(format!(
            "copy map covers {} of {} factors",
            map.factors.len(),
            candidate.num_factors()
        ));
    }
    for (j, &i) in map.variables.iter().enumerate() {
        if i >= base.num_variables() {
            return CoverDiagnosis::fail(format!("variable {j} maps to unknown base variable {i}"));
        }
        if candidate.cardinality(j) != base.cardinality(i) {
            return CoverDiagnosis::fail(format!("variable {j}: cardinality differs from base {i}"));
        }
        let same_phi = match (candidate.node_potential(j), base.node_potential(i)) {
            (None, None) => true,
            (Some(a), Some(b)) => a == b,
            (Some(a), None) | (None, Some(a)) => a.iter().all(|&v| v == T::one()),
        };
        if !same_phi {
            return CoverDiagnosis::fail(format!("variable {j}: node potential differs from base {i}"));
        }
    }
    for (b, &a) in map.factors.iter().enumerate() {
        if a >= base.num_factors() {
            return CoverDiagnosis::fail(format!("factor {b} maps to unknown base factor {a}"));
        }
        let (fb, fa) = (candidate.factor(b), base.factor(a));
        if fb.table != fa.table {
            return CoverDiagnosis::fail(format!("factor {b}: table differs from base {a}"));
        }
        for (p, (&j, &i)) in fb.scope.iter().zip(&fa.scope).enumerate() {
            if map.variables[j] != i {
                return CoverDiagnosis::fail(format!(
                    "factor {b}: scope position {p} (variable {j}) maps to {} instead of {i}",
                    map.variables[j]
                ));
            }
        }
    }
    // local bijectivity at variable nodes
    let base_inc = base.incidences();
    let cand_inc = candidate.incidences();
    for (j, inc) in cand_inc.iter().enumerate() {
        let i = map.variables[j];
        let mut image: Vec<(usize, usize)> = inc.iter().map(|&(b, p)| (map.factors[b], p)).collect();
        let mut expected = base_inc[i].clone();
        image.sort_unstable();
        expected.sort_unstable();
        if image != expected {
            return CoverDiagnosis::fail(format!(
                "variable {j}: neighbourhood is not mapped bijectively onto that of base variable {i}"
            ));
        }
    }
    let mut var_count = vec![0usize; base.num_variables()];
    for &i in &map.variables {
        var_count[i] += 1;
    }
    let mut fac_count = vec![0usize; base.num_factors()];
    for &a in &map.factors {
        fac_count[a] += 1;
    }
    let m = var_count.first().copied().or(fac_count.first().copied()).unwrap_or(0);
    if let Some(i) = var_count.iter().position(|&c| c != m) {
        return CoverDiagnosis::fail(format!(
            "base variable {i} has {} copies, expected {m}",
            var_count[i]
        ));
    }
    if let Some(a) = fac_count.iter().position(|&c| c != m) {
        return CoverDiagnosis::fail(format!(
            "base factor {a} has {} copies, expected {m}",
            fac_count[a]
        ));
    }
    CoverDiagnosis {
        valid: true,
        m: Some(m),
        problem: None,
    }
}

/// Independent uniform permutations per incidence, deterministic in `seed`.
pub fn sample_cover<T: Scalar>(base: &FactorGraph<T>, m: usize, seed: u64) -> Result<CoverSpec<T>> {
    if m == 0 {
        return Err(Error::MalformedCover("M must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let permutations = base
        .factors()
        .iter()
        .map(|f| {
            f.scope
                .iter()
                .map(|_| {
                    let mut p: Vec<usize> = (0..m).collect();
                    p.shuffle(&mut rng);
                    p
                })
                .collect()
        })
        .collect();
    Ok(CoverSpec {
        base: base.clone(),
        m,
        permutations,
    })
}

fn permutations_of(m: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                prefix.push(c);
                rec(prefix, used, out);
                prefix.pop();
                used[c] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; m], &mut out);
    out
}

/// Every cover in canonical form: the first incidence of each factor carries
/// the identity (relabelling factor copies) and the remaining incidences
/// range over all permutations. Refuses more than `limit` covers.
pub fn enumerate_covers<T: Scalar>(
    base: &FactorGraph<T>,
    m: usize,
    limit: usize,
) -> Result<Vec<CoverSpec<T>>> {
    if m == 0 {
        return Err(Error::MalformedCover("M must be positive".into()));
    }
    let perms = permutations_of(m);
    let free: Vec<(usize, usize)> = base
        .factors()
        .iter()
        .enumerate()
        .flat_map(|(a, f)| (1..f.scope.len()).map(move |p| (a, p)))
        .collect();
    let total = (perms.len() as u128).saturating_pow(free.len() as u32);
    if total > limit as u128 {
        return Err(Error::CapExceeded {
            size: total,
            cap: limit as u128,
        });
    }
    let mut out = Vec::with_capacity(total as usize);
    let mut digits = vec![0usize; free.len()];
    loop {
        let mut spec = CoverSpec::identity(base.clone(), m);
        for (&(a, p), &d) in free.iter().zip(&digits) {
            spec.permutations[a][p] = perms[d].clone();
        }
        out.push(spec);
        let mut k = 0;
        loop {
            if k == digits.len() {
                return Ok(out);
            }
            digits[k] += 1;
            if digits[k] < perms.len() {
                break;
            }
            digits[k] = 0;
            k += 1;
        }
    }
}

/// Monte Carlo summary of `(mean Z(H))^{1/M}` over covers.
///
/// This is a finite-`M` heuristic for the Bethe partition function, not the
/// limit; covers are sampled as labelled permutation assignments.
#[derive(Clone, Debug, Serialize)]
pub struct CoverEstimate {
    pub m: usize,
    pub samples: usize,
    pub mean_z: f64,
    pub variance_z: f64,
    /// `mean_z^{1/M}`.
    pub estimate: f64,
    pub heuristic: bool,
}

fn summarize(m: usize, zs: &[f64], heuristic: bool) -> CoverEstimate {
    let n = zs.len();
    let mean = zs.iter().copied().collect::<KahanSum<f64>>().value() / n as f64;
    let variance = if n > 1 {
        zs.iter()
            .map(|z| (z - mean) * (z - mean))
            .collect::<KahanSum<f64>>()
            .value()
            / (n - 1) as f64
    } else {
        0.0
    };
    CoverEstimate {
        m,
        samples: n,
        mean_z: mean,
        variance_z: variance,
        estimate: mean.powf(1.0 / m as f64),
        heuristic,
    }
}

/// Derives the seed of sample `index` from a master seed (splitmix64).
pub fn sample_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn bethe_estimate_via_covers<T: Scalar>(
    base: &FactorGraph<T>,
    m: usize,
    num_samples: usize,
    seed: u64,
) -> Result<CoverEstimate> {
    if num_samples == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let zs = (0..num_samples as u64)
        .into_par_iter()
        .map(|k| {
            let spec = sample_cover(base, m, sample_seed(seed, k))?;
            let lifted = spec.build()?;
            Ok(lifted
                .cover
                .exact_partition_capped(DEFAULT_ENUMERATION_CAP)?
                .as_f64())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(summarize(m, &zs, true))
}

/// Same statistic averaged over every canonical cover.
pub fn bethe_estimate_exhaustive<T: Scalar>(
    base: &FactorGraph<T>,
    m: usize,
    limit: usize,
) -> Result<CoverEstimate> {
    let zs = enumerate_covers(base, m, limit)?
        .par_iter()
        .map(|spec| Ok(spec.build()?.cover.exact_partition()?.as_f64()))
        .collect::<Result<Vec<f64>>>()?;
    Ok(summarize(m, &zs, true))
}
