//! Weighted graph homomorphisms with target matrix `Γ = aa' + bb'` and the
//! equivalent edge-colouring model over edge subsets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bethe::{maximize_bethe, mean_field};
use crate::error::{Error, Result};
use crate::graph::{EdgeSubset, Graph};
use crate::lattice::{
    is_log_supermodular_capped, le_rel, BitVector, BoolTable, LsmReport, DEFAULT_LSM_CAP,
    LSM_REL_TOL,
};
use crate::model::{for_each_state, FactorGraph, DEFAULT_ENUMERATION_CAP};
use crate::scalar::{KahanSum, Scalar};

#[derive(Clone, Debug, PartialEq)]
enum Target<T> {
    Rank2 { a: Vec<T>, b: Vec<T> },
    General(Vec<Vec<T>>),
}

/// `f(σ) = ∏_i w_{σ_i} ∏_{(i,j)∈E} Γ_{σ_i σ_j}`.
#[derive(Clone, Debug, PartialEq)]
pub struct HomModel<T> {
    pub graph: Graph,
    w: Vec<T>,
    target: Target<T>,
}

fn check_nonnegative<T: Scalar>(name: &str, v: &[T]) -> Result<()> {
    if let Some(x) = v.iter().find(|x| !(**x >= T::zero()) || !x.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "{name} has entry {x}; entries must be finite and nonnegative"
        )));
    }
    Ok(())
}

/// `x^k` with `0^0 = 1`.
fn pow0<T: Scalar>(x: T, k: usize) -> T {
    if k == 0 {
        T::one()
    } else {
        x.powi(k as i32)
    }
}

impl<T: Scalar> HomModel<T> {
    /// Rank-2 model `Γ = aa' + bb'` with nonnegative `w`, `a`, `b`.
    pub fn new(graph: Graph, w: Vec<T>, a: Vec<T>, b: Vec<T>) -> Result<Self> {
        let n = w.len();
        if n == 0 {
            return Err(Error::InvalidParameter("target size must be positive".into()));
        }
        for v in [&a, &b] {
            if v.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: v.len(),
                });
            }
        }
        check_nonnegative("w", &w)?;
        check_nonnegative("a", &a)?;
        check_nonnegative("b", &b)?;
        Ok(Self {
            graph,
            w,
            target: Target::Rank2 { a, b },
        })
    }

    /// Arbitrary symmetric nonnegative `Γ`; only [`hom_partition`] and
    /// [`HomModel::to_factor_graph`] accept such models.
    pub fn general(graph: Graph, w: Vec<T>, gamma: Vec<Vec<T>>) -> Result<Self> {
        let n = w.len();
        if n == 0 {
            return Err(Error::InvalidParameter("target size must be positive".into()));
        }
        check_nonnegative("w", &w)?;
        if gamma.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: gamma.len(),
            });
        }
        for (s, row) in gamma.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            check_nonnegative("gamma", row)?;
            for t in 0..s {
                if row[t] != gamma[t][s] {
                    return Err(Error::InvalidParameter(format!(
                        "gamma is not symmetric at ({s}, {t})"
                    )));
                }
            }
        }
        Ok(Self {
            graph,
            w,
            target: Target::General(gamma),
        })
    }

    pub fn n(&self) -> usize {
        self.w.len()
    }

    pub fn w(&self) -> &[T] {
        &self.w
    }

    /// `(a, b)` for rank-2 models.
    pub fn rank2(&self) -> Result<(&[T], &[T])> {
        match &self.target {
            Target::Rank2 { a, b } => Ok((a, b)),
            Target::General(_) => Err(Error::NotRank2),
        }
    }

    pub fn gamma(&self, s: usize, t: usize) -> T {
        match &self.target {
            Target::Rank2 { a, b } => a[s] * a[t] + b[s] * b[t],
            Target::General(g) => g[s][t],
        }
    }

    pub fn gamma_matrix(&self) -> Vec<Vec<T>> {
        (0..self.n())
            .map(|s| (0..self.n()).map(|t| self.gamma(s, t)).collect())
            .collect()
    }

    /// Pairwise factor graph: node potentials `w`, one table `Γ` per edge.
    pub fn to_factor_graph(&self) -> Result<FactorGraph<T>> {
        let n = self.n();
        let mut g = FactorGraph::new(vec![n; self.graph.n_vertices])?;
        for &(u, v) in &self.graph.edges {
            g.add_factor_fn(vec![u, v], |s| self.gamma(s[0], s[1]))?;
        }
        for i in 0..self.graph.n_vertices {
            g.set_node_potential(i, self.w.clone())?;
        }
        Ok(g)
    }

    /// Same model with `a` and `b` exchanged.
    pub fn swapped(&self) -> Result<Self> {
        let (a, b) = self.rank2()?;
        Self::new(self.graph.clone(), self.w.clone(), b.to_vec(), a.to_vec())
    }
}

/// `Z_hom = Σ_σ ∏ w ∏ Γ` by enumeration of `n^{|V|}` maps.
pub fn hom_partition<T: Scalar>(model: &HomModel<T>) -> Result<T> {
    let n = model.n();
    let size = (n as u128)
        .checked_pow(model.graph.n_vertices as u32)
        .unwrap_or(u128::MAX);
    if size > DEFAULT_ENUMERATION_CAP {
        return Err(Error::CapExceeded {
            size,
            cap: DEFAULT_ENUMERATION_CAP,
        });
    }
    let gamma = model.gamma_matrix();
    let mut acc = KahanSum::new();
    for_each_state(&vec![n; model.graph.n_vertices], |s| {
        let mut v = s.iter().fold(T::one(), |acc, &x| acc * model.w[x]);
        for &(i, j) in &model.graph.edges {
            v = v * gamma[s[i]][s[j]];
        }
        acc.add(v);
    });
    Ok(acc.value())
}

/// `s_i(A)`: edges of `A` incident to vertex `i`.
pub fn s_count(graph: &Graph, i: usize, a: &EdgeSubset) -> Result<usize> {
    if i >= graph.n_vertices {
        return Err(Error::UnknownVertex(i));
    }
    graph.check_subset(a)?;
    Ok(a
        .iter_ones()
        .filter(|&e| {
            let (u, v) = graph.edges[e];
            u == i || v == i
        })
        .count())
}

/// Per-vertex factor `Σ_σ w_σ a_σ^s b_σ^{d−s}`.
fn vertex_term<T: Scalar>(w: &[T], a: &[T], b: &[T], s: usize, d: usize) -> T {
    (0..w.len())
        .map(|x| w[x] * pow0(a[x], s) * pow0(b[x], d - s))
        .sum()
}

/// `f_edge(A) = ∏_i Σ_σ w_σ a_σ^{s_i(A)} b_σ^{|∂i|−s_i(A)}` with `0^0 = 1`.
pub fn edge_weight<T: Scalar>(model: &HomModel<T>, a_set: &EdgeSubset) -> Result<T> {
    let (a, b) = model.rank2()?;
    model.graph.check_subset(a_set)?;
    let mut s = vec![0; model.graph.n_vertices];
    let mut d = vec![0; model.graph.n_vertices];
    for (e, &(u, v)) in model.graph.edges.iter().enumerate() {
        d[u] += 1;
        d[v] += 1;
        if a_set.get(e) {
            s[u] += 1;
            s[v] += 1;
        }
    }
    Ok((0..model.graph.n_vertices).fold(T::one(), |acc, i| {
        acc * vertex_term(&model.w, a, b, s[i], d[i])
    }))
}

/// `Z_edge = Σ_{A⊆E} f_edge(A)`.
pub fn edge_partition<T: Scalar>(model: &HomModel<T>) -> Result<T> {
    model.rank2()?;
    let m = model.graph.num_edges();
    let size = 1u128 << m.min(127);
    if m >= 64 || size > DEFAULT_ENUMERATION_CAP {
        return Err(Error::CapExceeded {
            size,
            cap: DEFAULT_ENUMERATION_CAP,
        });
    }
    let parts: Vec<T> = (0..size as u64)
        .into_par_iter()
        .map(|mask| edge_weight(model, &BitVector::new(m, mask)))
        .collect::<Result<_>>()?;
    Ok(parts.into_iter().collect::<KahanSum<T>>().value())
}

/// One sampled instance of the two-state exchange inequality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExchangeWitness {
    pub vertex: usize,
    pub sigma: usize,
    pub gamma: usize,
    pub a1: Vec<bool>,
    pub a2: Vec<bool>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug)]
pub struct Rank2LsmReport {
    pub table: LsmReport,
    pub tuples_checked: usize,
    pub tuples_violated: usize,
    /// Smallest `rhs − lhs` over sampled tuples, relative to `max(|lhs|, |rhs|, 1)`.
    pub worst_slack: f64,
    pub witness: Option<ExchangeWitness>,
}

impl Rank2LsmReport {
    pub fn holds(&self) -> bool {
        self.table.holds && self.tuples_violated == 0
    }
}

/// Checks the edge-colouring weight for log-supermodularity over all pairs
/// of edge subsets, then samples `(A¹, A², σ, γ, i)` and checks
/// `t_σ(s₁)t_γ(s₂) + t_σ(s₂)t_γ(s₁) ≤ t_σ(s∨)t_γ(s∧) + t_σ(s∧)t_γ(s∨)`
/// for the vertex terms `t_σ(s) = w_σ a_σ^s b_σ^{d−s}`.
pub fn check_rank2_lsm<T: Scalar>(
    model: &HomModel<T>,
    samples: usize,
    seed: u64,
) -> Result<Rank2LsmReport> {
    let (a, b) = model.rank2()?;
    let m = model.graph.num_edges();
    if m > DEFAULT_LSM_CAP {
        return Err(Error::CapExceeded {
            size: 1u128 << m.min(127),
            cap: 1u128 << DEFAULT_LSM_CAP,
        });
    }
    let table = BoolTable::try_from_fn(m, |x| edge_weight(model, &x))?;
    let table = is_log_supermodular_capped(&table, DEFAULT_LSM_CAP)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = model.n();
    let nv = model.graph.n_vertices;
    let term = |x: usize, s: usize, d: usize| model.w[x] * pow0(a[x], s) * pow0(b[x], d - s);
    let mut violated = 0;
    let mut worst = f64::INFINITY;
    let mut witness = None;
    let mut checked = 0;
    if nv > 0 {
        for _ in 0..samples {
            let a1 = BitVector::new(m, if m == 0 { 0 } else { rng.gen::<u64>() >> (64 - m) });
            let a2 = BitVector::new(m, if m == 0 { 0 } else { rng.gen::<u64>() >> (64 - m) });
            let i = rng.gen_range(0..nv);
            let (sg, gm) = (rng.gen_range(0..n), rng.gen_range(0..n));
            let (meet, join) = crate::lattice::meet_join(&a1, &a2)?;
            let d = model.graph.degree(i);
            let s1 = s_count(&model.graph, i, &a1)?;
            let s2 = s_count(&model.graph, i, &a2)?;
            let sm = s_count(&model.graph, i, &meet)?;
            let sj = s_count(&model.graph, i, &join)?;
            let lhs = term(sg, s1, d) * term(gm, s2, d) + term(sg, s2, d) * term(gm, s1, d);
            let rhs = term(sg, sj, d) * term(gm, sm, d) + term(sg, sm, d) * term(gm, sj, d);
            checked += 1;
            let scale = lhs.abs().max(rhs.abs()).max(T::one());
            let slack = ((rhs - lhs) / scale).as_f64();
            worst = worst.min(slack);
            if !le_rel(lhs, rhs, T::lit(LSM_REL_TOL)) {
                violated += 1;
                witness.get_or_insert(ExchangeWitness {
                    vertex: i,
                    sigma: sg,
                    gamma: gm,
                    a1: a1.to_bits(),
                    a2: a2.to_bits(),
                    lhs: lhs.as_f64(),
                    rhs: rhs.as_f64(),
                });
            }
        }
    }
    Ok(Rank2LsmReport {
        table,
        tuples_checked: checked,
        tuples_violated: violated,
        worst_slack: if checked == 0 { 0.0 } else { worst },
        witness,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomBounds {
    pub z: f64,
    pub z_bethe: f64,
    pub z_mean_field: f64,
}

/// `Z_hom` with Bethe and mean-field values of its pairwise factor graph;
/// refused for models not given as `aa' + bb'`.
pub fn hom_bounds(model: &HomModel<f64>, restarts: usize, seed: u64) -> Result<HomBounds> {
    model.rank2()?;
    let g = model.to_factor_graph()?;
    Ok(HomBounds {
        z: hom_partition(model)?,
        z_bethe: maximize_bethe(&g, restarts, seed)?.z(),
        z_mean_field: mean_field(&g, restarts, seed)?.log_z.exp(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge() -> Graph {
        Graph::new(2, vec![(0, 1)]).unwrap()
    }

    #[test]
    fn all_ones_single_edge() {
        for n in 1..5 {
            let m = HomModel::<f64>::new(edge(), vec![1.0; n], vec![1.0; n], vec![1.0; n]).unwrap();
            let expect = 2.0 * (n * n) as f64;
            assert!((hom_partition(&m).unwrap() - expect).abs() < 1e-12);
            assert!((edge_partition(&m).unwrap() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn no_edges() {
        let g = Graph::new(3, vec![]).unwrap();
        let m = HomModel::<f64>::new(g, vec![0.5, 2.0], vec![1.0, 0.0], vec![0.3, 0.2]).unwrap();
        let expect = 2.5f64.powi(3);
        assert!((hom_partition(&m).unwrap() - expect).abs() < 1e-12);
        assert!((edge_partition(&m).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn identity_target_forces_constant_maps() {
        let m = HomModel::<f64>::new(Graph::complete(3), vec![1.0; 2], vec![1.0, 0.0], vec![0.0, 1.0])
            .unwrap();
        assert!((hom_partition(&m).unwrap() - 2.0).abs() < 1e-12);
        assert!((edge_partition(&m).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn s_count_examples() {
        let tri = Graph::complete(3);
        assert_eq!(s_count(&tri, 0, &tri.empty_subset()).unwrap(), 0);
        assert_eq!(s_count(&tri, 0, &tri.full_subset()).unwrap(), 2);
        let one = BitVector::from_bits(&[true, false, false]);
        assert_eq!(s_count(&tri, 0, &one).unwrap(), 1);
        assert!(matches!(s_count(&tri, 3, &one), Err(Error::UnknownVertex(3))));
    }

    #[test]
    fn zero_power_convention() {
        let g = Graph::new(1, vec![]).unwrap();
        let m = HomModel::<f64>::new(g, vec![2.0, 3.0], vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(edge_weight(&m, &BitVector::zeros(0)).unwrap(), 5.0);
    }

    #[test]
    fn all_ones_edge_weight_is_constant() {
        let m = HomModel::<f64>::new(Graph::cycle(4), vec![1.0; 3], vec![1.0; 3], vec![1.0; 3]).unwrap();
        for a in BitVector::all(4) {
            assert_eq!(edge_weight(&m, &a).unwrap(), 81.0);
        }
    }

    #[test]
    fn negative_entries_rejected() {
        assert!(HomModel::<f64>::new(edge(), vec![1.0], vec![-0.1], vec![1.0]).is_err());
    }

    #[test]
    fn general_target_refuses_rank2_operations() {
        let adj = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let m = HomModel::<f64>::general(Graph::cycle(4), vec![1.0; 2], adj).unwrap();
        // proper 2-colourings of the 4-cycle
        assert_eq!(hom_partition(&m).unwrap(), 2.0);
        assert!(matches!(edge_partition(&m), Err(Error::NotRank2)));
        assert!(matches!(hom_bounds(&m, 2, 0), Err(Error::NotRank2)));
        assert!(HomModel::<f64>::general(edge(), vec![1.0; 2], vec![vec![0.0, 1.0], vec![2.0, 0.0]]).is_err());
    }

    #[test]
    fn lsm_check_passes_and_equal_states_are_tight() {
        let m = HomModel::<f64>::new(
            Graph::complete(4),
            vec![0.7, 1.3, 0.2],
            vec![0.9, 0.1, 2.0],
            vec![0.4, 1.5, 0.3],
        )
        .unwrap();
        let r = check_rank2_lsm(&m, 500, 3).unwrap();
        assert!(r.holds(), "{r:?}");
        assert!(r.worst_slack >= -1e-12);
        let single = HomModel::<f64>::new(Graph::complete(4), vec![0.7], vec![0.9], vec![0.4]).unwrap();
        let r = check_rank2_lsm(&single, 200, 1).unwrap();
        assert!(r.worst_slack.abs() < 1e-12);
    }
}
