//! Potts and random-cluster models on simple graphs, with optional uniform
//! external field, their factor-graph form, and cover inequalities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bethe::maximize_bethe;
use crate::covers::CoverSpec;
use crate::error::{Error, Result};
use crate::graph::{EdgeSubset, Graph};
use crate::lattice::{sorted_stack, BitVector};
use crate::model::{for_each_state, FactorGraph, DEFAULT_ENUMERATION_CAP};
use crate::scalar::{KahanSum, Scalar};

/// `f(σ) = ∏_k e^{h_{σ_k}} ∏_{(i,j)∈E} e^{J_ij δ(σ_i, σ_j)}`.
///
/// `q` is real so the random-cluster side can use non-integer values; the
/// spin side and the field require an integer `q`.
#[derive(Clone, Debug, PartialEq)]
pub struct PottsModel<T> {
    pub graph: Graph,
    pub q: T,
    pub j: Vec<T>,
    pub h: Option<Vec<T>>,
}

impl<T: Scalar> PottsModel<T> {
    pub fn new(graph: Graph, q: T, j: Vec<T>, h: Option<Vec<T>>) -> Result<Self> {
        if !(q >= T::one()) {
            return Err(Error::InvalidParameter(format!("q = {q} must be at least 1")));
        }
        if j.len() != graph.num_edges() {
            return Err(Error::DimensionMismatch {
                expected: graph.num_edges(),
                got: j.len(),
            });
        }
        if let Some(h) = &h {
            let q = integer_q(q)?;
            if h.len() != q {
                return Err(Error::DimensionMismatch {
                    expected: q,
                    got: h.len(),
                });
            }
        }
        Ok(Self { graph, q, j, h })
    }

    /// Uniform coupling on every edge, no field.
    pub fn uniform(graph: Graph, q: T, j: T) -> Result<Self> {
        let m = graph.num_edges();
        Self::new(graph, q, vec![j; m], None)
    }

    pub fn is_ferromagnetic(&self) -> bool {
        self.j.iter().all(|&j| j > T::zero())
    }

    /// Edge probabilities `p_ij = e^{J_ij} − 1`.
    pub fn p(&self) -> Vec<T> {
        self.j.iter().map(|&j| j.exp_m1()).collect()
    }

    pub fn spin_states(&self) -> Result<usize> {
        integer_q(self.q)
    }

    /// Variables are vertices with `q` states, one factor per edge in edge
    /// order with table `e^{J δ}`, node potentials `e^{h_w}` when a field is set.
    pub fn to_factor_graph(&self) -> Result<FactorGraph<T>> {
        let q = self.spin_states()?;
        let mut g = FactorGraph::new(vec![q; self.graph.n_vertices])?;
        for (&(u, v), &j) in self.graph.edges.iter().zip(&self.j) {
            let w = j.exp();
            g.add_factor_fn(vec![u, v], |s| if s[0] == s[1] { w } else { T::one() })?;
        }
        if let Some(h) = &self.h {
            let phi: Vec<T> = h.iter().map(|x| x.exp()).collect();
            for i in 0..self.graph.n_vertices {
                g.set_node_potential(i, phi.clone())?;
            }
        }
        Ok(g)
    }
}

fn integer_q<T: Scalar>(q: T) -> Result<usize> {
    if q.fract() != T::zero() || q < T::one() {
        return Err(Error::InvalidParameter(format!(
            "q = {q} must be a positive integer for spin models"
        )));
    }
    Ok(q.to_usize().expect("integral q"))
}

/// `k_G(A)`, the number of connected components of `(V, A)`.
pub fn count_components(graph: &Graph, a: &EdgeSubset) -> Result<usize> {
    graph.count_components(a)
}

pub fn potts_partition<T: Scalar>(model: &PottsModel<T>) -> Result<T> {
    potts_partition_capped(model, DEFAULT_ENUMERATION_CAP)
}

pub fn potts_partition_capped<T: Scalar>(model: &PottsModel<T>, cap: u128) -> Result<T> {
    let q = model.spin_states()?;
    let n = model.graph.n_vertices;
    let size = (q as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if size > cap {
        return Err(Error::CapExceeded { size, cap });
    }
    let edge_w: Vec<T> = model.j.iter().map(|j| j.exp()).collect();
    let field: Option<Vec<T>> = model.h.as_ref().map(|h| h.iter().map(|x| x.exp()).collect());
    let mut acc = KahanSum::new();
    for_each_state(&vec![q; n], |s| {
        let mut w = T::one();
        for (&(u, v), &e) in model.graph.edges.iter().zip(&edge_w) {
            if s[u] == s[v] {
                w = w * e;
            }
        }
        if let Some(f) = &field {
            for &x in s {
                w = w * f[x];
            }
        }
        acc.add(w);
    });
    Ok(acc.value())
}

/// Random-cluster weight of `A`: `q^{k(A)} ∏_A p` without a field, and
/// `∏_C [Σ_w e^{h_w |V(C)|}] ∏_A p` over the components `C` with one.
pub fn rc_weight<T: Scalar>(model: &PottsModel<T>, a: &EdgeSubset) -> Result<T> {
    let p = checked_p(model)?;
    rc_weight_with(model, &p, a)
}

fn checked_p<T: Scalar>(model: &PottsModel<T>) -> Result<Vec<T>> {
    let p = model.p();
    if let Some((edge, &pe)) = p.iter().enumerate().find(|(_, &x)| x < T::zero()) {
        return Err(Error::NegativeWeight {
            edge,
            p: pe.as_f64(),
        });
    }
    Ok(p)
}

fn rc_weight_with<T: Scalar>(model: &PottsModel<T>, p: &[T], a: &EdgeSubset) -> Result<T> {
    let mut w = a.iter_ones().fold(T::one(), |acc, e| acc * p[e]);
    match &model.h {
        None => {
            let k = model.graph.count_components(a)?;
            w = w * model.q.powi(k as i32);
        }
        Some(h) => {
            for size in model.graph.component_sizes(a)? {
                let s = T::from_count(size);
                w = w * h.iter().map(|&hw| (hw * s).exp()).sum::<T>();
            }
        }
    }
    Ok(w)
}

/// `Z_rc = Σ_{A⊆E} rc_weight(A)`.
pub fn rc_partition<T: Scalar>(model: &PottsModel<T>) -> Result<T> {
    rc_partition_capped(model, DEFAULT_ENUMERATION_CAP)
}

pub fn rc_partition_capped<T: Scalar>(model: &PottsModel<T>, cap: u128) -> Result<T> {
    let m = model.graph.num_edges();
    let size = 1u128 << m.min(127);
    if m >= 64 || size > cap {
        return Err(Error::CapExceeded { size, cap });
    }
    let p = checked_p(model)?;
    let parts: Vec<T> = (0..size as u64)
        .into_par_iter()
        .map(|mask| rc_weight_with(model, &p, &BitVector::new(m, mask)))
        .collect::<Result<_>>()?;
    Ok(parts.into_iter().collect::<KahanSum<T>>().value())
}

/// The Potts model on the cover graph, with couplings copied from the base.
#[derive(Clone, Debug)]
pub struct LiftedPotts<T> {
    pub model: PottsModel<T>,
    pub m: usize,
    /// Cover edge `c·|E| + e` is copy `c` of base edge `e`.
    pub base_edges: usize,
}

impl<T: Scalar> LiftedPotts<T> {
    /// Cover-edge indicator with layer `c` taking the base subset `layers[c]`.
    pub fn join_layers(&self, layers: &[EdgeSubset]) -> Result<EdgeSubset> {
        if layers.len() != self.m {
            return Err(Error::LayerMismatch {
                expected: self.m,
                got: layers.len(),
            });
        }
        let mut out = BitVector::zeros(self.m * self.base_edges);
        for (c, a) in layers.iter().enumerate() {
            if a.len() != self.base_edges {
                return Err(Error::DimensionMismatch {
                    expected: self.base_edges,
                    got: a.len(),
                });
            }
            for e in a.iter_ones() {
                out.set(c * self.base_edges + e, true);
            }
        }
        Ok(out)
    }
}

/// Lifts a Potts model along a cover of its factor-graph form.
pub fn lift_potts<T: Scalar>(base: &PottsModel<T>, spec: &CoverSpec<T>) -> Result<LiftedPotts<T>> {
    let e = base.graph.num_edges();
    let fg = &spec.base;
    let matches = fg.num_variables() == base.graph.n_vertices
        && fg.num_factors() == e
        && fg
            .factors()
            .iter()
            .zip(&base.graph.edges)
            .all(|(f, &(u, v))| f.scope == [u, v]);
    if !matches {
        return Err(Error::MalformedCover(
            "cover base is not the factor graph of the Potts model".into(),
        ));
    }
    let lifted = spec.build()?;
    let edges = lifted
        .cover
        .factors()
        .iter()
        .map(|f| (f.scope[0], f.scope[1]))
        .collect();
    let graph = Graph::new(lifted.cover.num_variables(), edges)?;
    let j = (0..spec.m).flat_map(|_| base.j.iter().copied()).collect();
    Ok(LiftedPotts {
        model: PottsModel::new(graph, base.q, j, base.h.clone())?,
        m: spec.m,
        base_edges: e,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverComponentReport {
    /// `k_H(A¹, …, A^M)`.
    pub cover_components: usize,
    /// `Σ_m k_G(A^[m])` over the sorted stack.
    pub stacked_components: usize,
    pub slack: i64,
    pub holds: bool,
    /// `log f^H_rc(A)` and `Σ_m log f^G_rc(A^[m])`; the weight inequality
    /// `f^H_rc ≤ ∏ f^G_rc` uses the field when the model has one.
    pub log_cover_weight: f64,
    pub log_stacked_weight: f64,
    pub weight_holds: bool,
}

/// Compares the cover's component count (and random-cluster weight) on
/// `A = (A¹, …, A^M)` against the base values on the sorted stack `A^[m]`.
pub fn check_cover_component_inequality<T: Scalar>(
    base: &PottsModel<T>,
    spec: &CoverSpec<T>,
    a_layers: &[EdgeSubset],
) -> Result<CoverComponentReport> {
    let lifted = lift_potts(base, spec)?;
    let a = lifted.join_layers(a_layers)?;
    let stack = sorted_stack(a_layers)?;
    let cover_components = lifted.model.graph.count_components(&a)?;
    let mut stacked_components = 0;
    for s in &stack {
        stacked_components += base.graph.count_components(s)?;
    }
    let p = checked_p(base)?;
    let p_cover = checked_p(&lifted.model)?;
    let lhs = rc_weight_with(&lifted.model, &p_cover, &a)?.ln();
    let mut rhs = KahanSum::new();
    for s in &stack {
        rhs.add(rc_weight_with(base, &p, s)?.ln());
    }
    let rhs = rhs.value();
    let tol = T::lit(1e-12) * (T::one() + lhs.abs().max(rhs.abs()));
    Ok(CoverComponentReport {
        cover_components,
        stacked_components,
        slack: stacked_components as i64 - cover_components as i64,
        holds: cover_components <= stacked_components,
        log_cover_weight: lhs.as_f64(),
        log_stacked_weight: rhs.as_f64(),
        weight_holds: lhs <= rhs + tol || lhs == T::neg_infinity(),
    })
}

/// How `∏_{i≠j} e^{2δ(x_i,x_j)}` is read on the triangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairConvention {
    /// One factor `e^{2δ}` per edge.
    Unordered,
    /// Both orientations counted: `e^{4δ}` per edge.
    Ordered,
}

/// How the displayed field entries become node weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldConvention {
    /// Weight `exp(entry)`.
    Exponential,
    /// The entry is the weight.
    Multiplicative,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Convention {
    pub pairs: PairConvention,
    pub fields: FieldConvention,
}

impl Convention {
    pub const ALL: [Convention; 4] = [
        Convention {
            pairs: PairConvention::Unordered,
            fields: FieldConvention::Multiplicative,
        },
        Convention {
            pairs: PairConvention::Unordered,
            fields: FieldConvention::Exponential,
        },
        Convention {
            pairs: PairConvention::Ordered,
            fields: FieldConvention::Multiplicative,
        },
        Convention {
            pairs: PairConvention::Ordered,
            fields: FieldConvention::Exponential,
        },
    ];
}

/// Published value of `Z_B − Z` for the field triangle.
pub const COUNTEREXAMPLE_GAP: f64 = 973.046;

/// The reading whose computed gap lies closest to [`COUNTEREXAMPLE_GAP`]:
/// one `e^{2δ}` factor per edge and the field entries used as weights.
pub const SELECTED_CONVENTION: Convention = Convention {
    pairs: PairConvention::Unordered,
    fields: FieldConvention::Multiplicative,
};

/// The `q = 3` triangle with field vectors rotating `(e², e⁻¹, e⁻¹)`.
pub fn counterexample_model<T: Scalar>(convention: Convention) -> FactorGraph<T> {
    let e = T::one().exp();
    let strong = e * e;
    let weak = T::one() / e;
    let coupling = match convention.pairs {
        PairConvention::Unordered => strong,
        PairConvention::Ordered => strong * strong,
    };
    let mut g = FactorGraph::new(vec![3; 3]).expect("valid cardinalities");
    for (u, v) in [(0, 1), (1, 2), (0, 2)] {
        g.add_factor_fn(vec![u, v], |s| if s[0] == s[1] { coupling } else { T::one() })
            .expect("valid factor");
    }
    for k in 0..3 {
        let h: Vec<T> = (0..3)
            .map(|x| {
                let entry = if x == k { strong } else { weak };
                match convention.fields {
                    FieldConvention::Exponential => entry.exp(),
                    FieldConvention::Multiplicative => entry,
                }
            })
            .collect();
        g.set_node_potential(k, h).expect("valid potential");
    }
    g
}

/// The field triangle under [`SELECTED_CONVENTION`].
pub fn build_counterexample<T: Scalar>() -> FactorGraph<T> {
    counterexample_model(SELECTED_CONVENTION)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConventionOutcome {
    pub convention: Convention,
    pub z: f64,
    pub z_bethe: f64,
    pub gap: f64,
}

/// `Z` and `Z_B` of the field triangle under every reading.
pub fn evaluate_conventions(restarts: usize, seed: u64) -> Result<Vec<ConventionOutcome>> {
    Convention::ALL
        .iter()
        .map(|&convention| {
            let g = counterexample_model::<f64>(convention);
            let z = g.exact_partition()?;
            let z_bethe = maximize_bethe(&g, restarts, seed)?.z();
            Ok(ConventionOutcome {
                convention,
                z,
                z_bethe,
                gap: z_bethe - z,
            })
        })
        .collect()
}

/// The outcome whose gap is nearest the published value.
pub fn select_convention(outcomes: &[ConventionOutcome]) -> Option<&ConventionOutcome> {
    outcomes.iter().min_by(|a, b| {
        (a.gap - COUNTEREXAMPLE_GAP)
            .abs()
            .total_cmp(&(b.gap - COUNTEREXAMPLE_GAP).abs())
    })
}
