//! Seeded check suites for the bounds and identities, plus the random
//! instance generators they draw from.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bethe::{maximize_bethe, mean_field};
use crate::covers::{enumerate_covers, sample_cover, sample_seed};
use crate::error::{Error, Result};
use crate::gf::{GFMatrix, GaloisField};
use crate::graph::Graph;
use crate::hom::{edge_partition, hom_partition, HomModel};
use crate::lattice::BitVector;
use crate::matroid::{
    check_rank_cover_inequality, incidence_factor_graph, matroid_factor_graph,
    matroid_potts_partition,
};
use crate::model::FactorGraph;
use crate::potts::{
    check_cover_component_inequality, counterexample_model, evaluate_conventions, potts_partition,
    rc_partition, PottsModel, COUNTEREXAMPLE_GAP, SELECTED_CONVENTION,
};
use crate::scalar::rel_diff;

/// Tolerance on the partition-function identities.
pub const IDENTITY_TOL: f64 = 1e-9;
/// Tolerance on the cover inequality `Z(H) ≤ Z(G)^M`.
pub const COVER_TOL: f64 = 1e-9;
/// Tolerance on the `Z_MF ≤ Z_B ≤ Z` orderings.
pub const ORDERING_TOL: f64 = 1e-6;
/// Relative tolerance on the published counterexample gap.
pub const COUNTEREXAMPLE_TOL: f64 = 0.01;

/// Suite tags accepted by [`run_suite`].
pub const SUITES: &[&str] = &[
    "3.5",
    "5.1",
    "5.2-ordering",
    "5.3",
    "5.5",
    "5.6",
    "6.2",
    "appendix-a",
    "appendix-b",
    "counterexample",
];

#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    /// Number of random instances; each suite has its own default.
    pub trials: Option<usize>,
    pub seed: u64,
    /// Optimizer starts for Bethe and mean-field values.
    pub restarts: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            trials: None,
            seed: 0,
            restarts: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub index: usize,
    pub passed: bool,
    /// The suite's metric for this trial.
    pub value: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub tag: String,
    /// What `value` and `worst` measure.
    pub metric: String,
    pub tolerance: f64,
    pub seed: u64,
    pub trials: usize,
    pub passed: usize,
    pub worst: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub values: BTreeMap<String, f64>,
    pub outcomes: Vec<TrialOutcome>,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.passed == self.trials
    }
}

enum Worst {
    Max,
    Min,
}

fn report(
    tag: &str,
    metric: &str,
    worst: Worst,
    tolerance: f64,
    seed: u64,
    outcomes: Vec<TrialOutcome>,
) -> SuiteReport {
    let values = outcomes.iter().map(|o| o.value).filter(|v| v.is_finite());
    let worst = match worst {
        Worst::Max => values.fold(f64::NEG_INFINITY, f64::max),
        Worst::Min => values.fold(f64::INFINITY, f64::min),
    };
    SuiteReport {
        tag: tag.to_string(),
        metric: metric.to_string(),
        tolerance,
        seed,
        trials: outcomes.len(),
        passed: outcomes.iter().filter(|o| o.passed).count(),
        worst,
        values: BTreeMap::new(),
        outcomes,
    }
}

fn failed(index: usize, e: Error) -> TrialOutcome {
    TrialOutcome {
        index,
        passed: false,
        value: f64::NAN,
        note: e.to_string(),
    }
}

/// Runs trial `i` for `i in 0..n` in parallel, ordered by index.
fn trials(n: usize, seed: u64, f: impl Fn(usize, &mut ChaCha8Rng) -> Result<TrialOutcome> + Sync) -> Vec<TrialOutcome> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(seed, i as u64));
            f(i, &mut rng).unwrap_or_else(|e| failed(i, e))
        })
        .collect()
}

pub fn run_suite(tag: &str, options: &VerifyOptions) -> Result<SuiteReport> {
    let o = options;
    let n = |default: usize| o.trials.unwrap_or(default);
    match tag {
        "3.5" => Ok(cover_inequality_suite(n(100), o.seed)),
        "5.1" => Ok(component_suite(n(200), o.seed)),
        "5.2-ordering" => Ok(potts_ordering_suite(n(30), o.seed, o.restarts)),
        "5.3" => Ok(field_weight_suite(n(1000), o.seed)),
        "5.5" => Ok(rank_suite(n(2), o.seed)),
        "5.6" => Ok(matroid_ordering_suite(n(30), o.seed, o.restarts)),
        "6.2" => Ok(hom_ordering_suite(n(30), o.seed, o.restarts)),
        "appendix-a" => Ok(random_cluster_identity_suite(n(50), o.seed)),
        "appendix-b" => Ok(edge_colouring_identity_suite(n(50), o.seed)),
        "counterexample" => counterexample_suite(o.seed, o.restarts.max(64)),
        other => Err(Error::InvalidParameter(format!(
            "unknown suite {other:?}; expected one of {}",
            SUITES.join(", ")
        ))),
    }
}

/// Random simple graph with `2..=max_v` vertices and at most `max_e` edges.
pub fn random_graph(rng: &mut impl Rng, max_v: usize, max_e: usize) -> Graph {
    let n = rng.gen_range(2..=max_v.max(2));
    let mut pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    pairs.shuffle(rng);
    let m = rng.gen_range(0..=max_e.min(pairs.len()));
    pairs.truncate(m);
    Graph::new(n, pairs).expect("simple graph")
}

/// Connected random graph: a random spanning tree plus extra edges.
pub fn random_connected_graph(rng: &mut impl Rng, max_v: usize, max_e: usize) -> Graph {
    let n = rng.gen_range(2..=max_v.max(2));
    let mut edges: Vec<(usize, usize)> = (1..n).map(|v| (rng.gen_range(0..v), v)).collect();
    let mut rest: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|e| !edges.contains(e))
        .collect();
    rest.shuffle(rng);
    let extra = rng.gen_range(0..=max_e.saturating_sub(edges.len()).min(rest.len()));
    edges.extend(rest.into_iter().take(extra));
    Graph::new(n, edges).expect("simple graph")
}

/// Pairwise binary model on a random graph whose edge tables satisfy
/// `ψ(0,0)ψ(1,1) ≥ ψ(0,1)ψ(1,0)`, with random positive node potentials.
pub fn random_lsm_binary_model(rng: &mut impl Rng, max_v: usize) -> FactorGraph<f64> {
    let g = random_graph(rng, max_v, 2 * max_v);
    let mut fg = FactorGraph::new(vec![2; g.n_vertices]).expect("binary variables");
    for &(u, v) in &g.edges {
        let a: f64 = rng.gen_range(0.2..2.0);
        let b: f64 = rng.gen_range(0.2..2.0);
        let c: f64 = rng.gen_range(0.2..2.0);
        let d = b * c / a * rng.gen_range(1.0..3.0);
        fg.add_factor(vec![u, v], vec![a, b, c, d]).expect("pairwise factor");
    }
    for i in 0..g.n_vertices {
        fg.set_node_potential(i, vec![rng.gen_range(0.2..2.0), rng.gen_range(0.2..2.0)])
            .expect("node potential");
    }
    fg
}

/// Random tree-structured model with cardinalities 2 or 3.
pub fn random_tree_model(rng: &mut impl Rng, max_v: usize) -> FactorGraph<f64> {
    let n = rng.gen_range(2..=max_v.max(2));
    let cards: Vec<usize> = (0..n).map(|_| rng.gen_range(2..=3)).collect();
    let mut g = FactorGraph::new(cards.clone()).expect("positive cardinalities");
    for v in 1..n {
        let u = rng.gen_range(0..v);
        let len = cards[u] * cards[v];
        let table = (0..len).map(|_| rng.gen_range(0.1..3.0)).collect();
        g.add_factor(vec![u, v], table).expect("pairwise factor");
    }
    for (i, &c) in cards.iter().enumerate() {
        if rng.gen_bool(0.5) {
            let phi = (0..c).map(|_| rng.gen_range(0.1..3.0)).collect();
            g.set_node_potential(i, phi).expect("node potential");
        }
    }
    g
}

/// Rank-2 homomorphism model with nonnegative `w`, `a`, `b`.
pub fn random_hom_model(rng: &mut impl Rng, max_v: usize, max_e: usize, max_n: usize) -> HomModel<f64> {
    let graph = random_graph(rng, max_v, max_e);
    let n = rng.gen_range(1..=max_n);
    let mut draw = |zero: f64| -> Vec<f64> {
        (0..n)
            .map(|_| if rng.gen_bool(zero) { 0.0 } else { rng.gen_range(0.05..2.0) })
            .collect()
    };
    let w = draw(0.0);
    let a = draw(0.15);
    let b = draw(0.15);
    HomModel::new(graph, w, a, b).expect("nonnegative vectors")
}

/// Random `k × n` matrix over GF(q) without zero columns.
pub fn random_matrix(rng: &mut impl Rng, q: usize, k: usize, n: usize) -> GFMatrix {
    let field = GaloisField::new(q).expect("supported field");
    let mut rows = vec![vec![0; n]; k];
    for c in 0..n {
        loop {
            for row in rows.iter_mut() {
                row[c] = rng.gen_range(0..q);
            }
            if rows.iter().any(|r| r[c] != 0) {
                break;
            }
        }
    }
    GFMatrix::new(field, rows).expect("entries in range")
}

fn cover_inequality_suite(n: usize, seed: u64) -> SuiteReport {
    let outcomes = trials(n, seed, |i, rng| {
        let g = random_lsm_binary_model(rng, 5);
        let m = if i % 2 == 0 { 2 } else { 3 };
        let spec = sample_cover(&g, m, rng.gen())?;
        let z = g.exact_partition()?;
        let zh = spec.build()?.cover.exact_partition()?;
        let bound = z.powi(m as i32);
        let slack = (bound - zh) / bound;
        Ok(TrialOutcome {
            index: i,
            passed: slack >= -COVER_TOL,
            value: slack,
            note: format!("M = {m}"),
        })
    });
    report("3.5", "relative slack (Z(G)^M - Z(H)) / Z(G)^M", Worst::Min, COVER_TOL, seed, outcomes)
}

/// Exhaustive over the canonical 2-covers of the triangle, then sampled
/// `(graph, cover, layers)` tuples.
fn component_suite(n: usize, seed: u64) -> SuiteReport {
    let mut outcomes = Vec::new();
    let tri = PottsModel::uniform(Graph::complete(3), 2.0, 0.5).expect("valid model");
    let fg = tri.to_factor_graph().expect("integer q");
    let covers = enumerate_covers(&fg, 2, 1000).expect("small enumeration");
    let mut worst = i64::MAX;
    let mut ok = true;
    let mut checked = 0;
    for spec in &covers {
        for mask in 0u64..64 {
            let layers = [BitVector::new(3, mask & 7), BitVector::new(3, mask >> 3)];
            match check_cover_component_inequality(&tri, spec, &layers) {
                Ok(r) => {
                    worst = worst.min(r.slack);
                    ok &= r.holds;
                }
                Err(_) => ok = false,
            }
            checked += 1;
        }
    }
    outcomes.push(TrialOutcome {
        index: 0,
        passed: ok,
        value: worst as f64,
        note: format!("triangle: {} covers, {checked} layer tuples", covers.len()),
    });
    let sampled = trials(n, seed, |i, rng| {
        let g = random_graph(rng, 5, 8);
        let model = PottsModel::uniform(g, 2.0, 0.5)?;
        let m = rng.gen_range(2..=3);
        let spec = sample_cover(&model.to_factor_graph()?, m, rng.gen())?;
        let e = model.graph.num_edges();
        let layers: Vec<BitVector> = (0..m)
            .map(|_| BitVector::from_bits(&(0..e).map(|_| rng.gen_bool(0.5)).collect::<Vec<_>>()))
            .collect();
        let r = check_cover_component_inequality(&model, &spec, &layers)?;
        Ok(TrialOutcome {
            index: i + 1,
            passed: r.holds,
            value: r.slack as f64,
            note: String::new(),
        })
    });
    outcomes.extend(sampled);
    report("5.1", "component slack sum k_G(A^[m]) - k_H(A)", Worst::Min, 0.0, seed, outcomes)
}

/// Random uniform fields on random graphs and covers: the field
/// random-cluster weight inequality on sampled layer tuples.
fn field_weight_suite(n: usize, seed: u64) -> SuiteReport {
    let outcomes = trials(n, seed, |i, rng| {
        let g = random_graph(rng, 4, 6);
        let q = rng.gen_range(2..=3);
        let j: Vec<f64> = (0..g.num_edges()).map(|_| rng.gen_range(0.05..2.0)).collect();
        let h: Vec<f64> = (0..q).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let model = PottsModel::new(g, q as f64, j, Some(h))?;
        let m = rng.gen_range(2..=3);
        let spec = sample_cover(&model.to_factor_graph()?, m, rng.gen())?;
        let e = model.graph.num_edges();
        let layers: Vec<BitVector> = (0..m)
            .map(|_| BitVector::from_bits(&(0..e).map(|_| rng.gen_bool(0.5)).collect::<Vec<_>>()))
            .collect();
        let r = check_cover_component_inequality(&model, &spec, &layers)?;
        Ok(TrialOutcome {
            index: i,
            passed: r.weight_holds,
            value: r.log_stacked_weight - r.log_cover_weight,
            note: String::new(),
        })
    });
    report(
        "5.3",
        "log slack log prod f_G(A^[m]) - log f_H(A)",
        Worst::Min,
        1e-12,
        seed,
        outcomes,
    )
}

/// Exhaustive over the canonical 2-covers of random `2 × 3` matrices; trial
/// `i` uses GF(2) for even `i` and GF(3) for odd `i`.
fn rank_suite(n: usize, seed: u64) -> SuiteReport {
    let outcomes = trials(n, seed, |i, rng| {
        let q = if i % 2 == 0 { 2 } else { 3 };
        let s = loop {
            let s = random_matrix(rng, q, 2, 3);
            if (0..3).filter(|&c| s.support(c).len() == 2).count() >= 2 {
                break s;
            }
        };
        let base = incidence_factor_graph::<f64>(&s)?;
        let covers = enumerate_covers(&base, 2, 10_000)?;
        let mut worst = i64::MAX;
        let mut witness = None;
        for spec in &covers {
            for mask in 0u64..64 {
                let layers = [BitVector::new(3, mask & 7), BitVector::new(3, mask >> 3)];
                let r = check_rank_cover_inequality(&s, spec, &layers)?;
                worst = worst.min(r.slack);
                if !r.holds && witness.is_none() {
                    witness = Some(format!(
                        "; violated by S = {:?}, permutations {:?}, layers {:?}: {} < {}",
                        (0..2).map(|r| s.row(r).to_vec()).collect::<Vec<_>>(),
                        spec.permutations,
                        layers.map(|l| l.to_bits()),
                        r.cover_rank,
                        r.stacked_rank
                    ));
                }
            }
        }
        Ok(TrialOutcome {
            index: i,
            passed: witness.is_none(),
            value: worst as f64,
            note: format!("GF({q}), {} covers{}", covers.len(), witness.unwrap_or_default()),
        })
    });
    report("5.5", "rank slack r_SH(A) - sum r_S(A^[m])", Worst::Min, 0.0, seed, outcomes)
}

/// Ordering check `Z_MF(1 − ε) ≤ Z_B ≤ Z(1 + ε)`; the metric is the smaller
/// relative margin of the two sides.
fn ordering_outcome(index: usize, z: f64, zb: f64, zmf: f64, note: String) -> TrialOutcome {
    let upper = (z - zb) / z;
    let lower = (zb - zmf) / zb;
    TrialOutcome {
        index,
        passed: zmf * (1.0 - ORDERING_TOL) <= zb && zb <= z * (1.0 + ORDERING_TOL),
        value: upper.min(lower),
        note,
    }
}

fn bethe_pair(g: &FactorGraph<f64>, restarts: usize, seed: u64) -> Result<(f64, f64)> {
    let zb = maximize_bethe(g, restarts, seed)?.log_z;
    let zmf = mean_field(g, restarts, seed)?.log_z;
    Ok((zb.exp(), zmf.exp()))
}

/// Ferromagnetic Potts instances with `q ∈ {2, 3, 4}`, then the same number
/// with a random uniform field.
fn potts_ordering_suite(n: usize, seed: u64, restarts: usize) -> SuiteReport {
    let outcomes = trials(2 * n, seed, |i, rng| {
        let g = random_graph(rng, 5, 8);
        let q = 2 + i % 3;
        let j: Vec<f64> = (0..g.num_edges()).map(|_| rng.gen_range(0.05..1.5)).collect();
        let field = i >= n;
        let h = field.then(|| (0..q).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let model = PottsModel::new(g, q as f64, j, h)?;
        let z = potts_partition(&model)?;
        let (zb, zmf) = bethe_pair(&model.to_factor_graph()?, restarts, rng.gen())?;
        let note = format!("q = {q}{}", if field { ", uniform field" } else { "" });
        Ok(ordering_outcome(i, z, zb, zmf, note))
    });
    report("5.2-ordering", "relative margin", Worst::Min, ORDERING_TOL, seed, outcomes)
}

fn matroid_ordering_suite(n: usize, seed: u64, restarts: usize) -> SuiteReport {
    let outcomes = trials(n, seed, |i, rng| {
        let q = if i % 2 == 0 { 2 } else { 3 };
        let k = rng.gen_range(1..=4);
        let cols = rng.gen_range(1..=6);
        let s = random_matrix(rng, q, k, cols);
        let j: Vec<f64> = (0..cols).map(|_| rng.gen_range(0.0..2.0)).collect();
        let z = matroid_potts_partition(&s, &j)?;
        let norm = (q as f64).powi(k as i32);
        let (zb, zmf) = bethe_pair(&matroid_factor_graph(&s, &j)?, restarts, rng.gen())?;
        Ok(ordering_outcome(i, z, zb / norm, zmf / norm, format!("GF({q}) {k}x{cols}")))
    });
    report("5.6", "relative margin", Worst::Min, ORDERING_TOL, seed, outcomes)
}

fn hom_ordering_suite(n: usize, seed: u64, restarts: usize) -> SuiteReport {
    let outcomes = trials(n, seed, |i, rng| {
        let model = random_hom_model(rng, 5, 8, 4);
        let z = hom_partition(&model)?;
        let (zb, zmf) = bethe_pair(&model.to_factor_graph()?, restarts, rng.gen())?;
        Ok(ordering_outcome(i, z, zb, zmf, format!("n = {}", model.n())))
    });
    report("6.2", "relative margin", Worst::Min, ORDERING_TOL, seed, outcomes)
}

fn random_cluster_identity_suite(n: usize, seed: u64) -> SuiteReport {
    let outcomes = trials(n, seed, |i, rng| {
        let g = random_graph(rng, 5, 8);
        let q = rng.gen_range(1..=4);
        let j: Vec<f64> = (0..g.num_edges())
            .map(|_| 3.0 - rng.gen_range(0.0..3.0))
            .collect();
        let model = PottsModel::new(g, q as f64, j, None)?;
        let err = rel_diff(rc_partition(&model)?, potts_partition(&model)?);
        Ok(TrialOutcome {
            index: i,
            passed: err <= IDENTITY_TOL,
            value: err,
            note: format!("q = {q}"),
        })
    });
    report("appendix-a", "relative error |Z_rc - Z_Potts| / Z_Potts", Worst::Max, IDENTITY_TOL, seed, outcomes)
}

fn edge_colouring_identity_suite(n: usize, seed: u64) -> SuiteReport {
    let outcomes = trials(n, seed, |i, rng| {
        let model = random_hom_model(rng, 5, 8, 4);
        let z = hom_partition(&model)?;
        let err = if z == 0.0 {
            edge_partition(&model)?.abs()
        } else {
            rel_diff(edge_partition(&model)?, z)
        };
        Ok(TrialOutcome {
            index: i,
            passed: err <= IDENTITY_TOL,
            value: err,
            note: format!("n = {}", model.n()),
        })
    });
    report("appendix-b", "relative error |Z_edge - Z_hom| / Z_hom", Worst::Max, IDENTITY_TOL, seed, outcomes)
}

fn counterexample_suite(seed: u64, restarts: usize) -> Result<SuiteReport> {
    let g = counterexample_model::<f64>(SELECTED_CONVENTION);
    let z = g.exact_partition()?;
    let zb = maximize_bethe(&g, restarts, seed)?.z();
    let gap = zb - z;
    let err = (gap - COUNTEREXAMPLE_GAP).abs() / COUNTEREXAMPLE_GAP;
    let mut r = report(
        "counterexample",
        "relative error of Z_B - Z against 973.046",
        Worst::Max,
        COUNTEREXAMPLE_TOL,
        seed,
        vec![TrialOutcome {
            index: 0,
            passed: err <= COUNTEREXAMPLE_TOL,
            value: err,
            note: format!("{SELECTED_CONVENTION:?}"),
        }],
    );
    r.values.insert("z".into(), z);
    r.values.insert("z_bethe".into(), zb);
    r.values.insert("gap".into(), gap);
    r.values.insert("target_gap".into(), COUNTEREXAMPLE_GAP);
    for o in evaluate_conventions(restarts, seed)? {
        let name = format!("{:?}_{:?}", o.convention.pairs, o.convention.fields).to_lowercase();
        r.values.insert(format!("gap_{name}"), o.gap);
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_tag_is_rejected() {
        assert!(matches!(
            run_suite("4.2", &VerifyOptions::default()),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn generators_respect_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let g = random_graph(&mut rng, 5, 8);
            assert!(g.n_vertices <= 5 && g.num_edges() <= 8);
            let c = random_connected_graph(&mut rng, 5, 8);
            assert_eq!(c.count_components(&c.full_subset()).unwrap(), 1);
            let t = random_tree_model(&mut rng, 6);
            assert!(t.is_forest());
            let s = random_matrix(&mut rng, 3, 2, 4);
            assert!((0..4).all(|c| !s.support(c).is_empty()));
            let m = random_lsm_binary_model(&mut rng, 4);
            assert!(crate::lattice::is_model_log_supermodular(&m).unwrap());
        }
    }

    #[test]
    fn suites_are_deterministic() {
        let o = VerifyOptions {
            trials: Some(5),
            seed: 11,
            restarts: 4,
        };
        assert_eq!(run_suite("appendix-a", &o).unwrap(), run_suite("appendix-a", &o).unwrap());
        assert!(run_suite("3.5", &o).unwrap().all_passed());
    }
}
