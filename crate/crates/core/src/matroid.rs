//! Potts and random-cluster models of a linear matroid given by a matrix `S`
//! over GF(q), covers of its incidence hypergraph, and weight enumerators of
//! the code generated by `S`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bethe::{maximize_bethe, mean_field};
use crate::covers::CoverSpec;
use crate::error::{Error, Result};
use crate::gf::GFMatrix;
use crate::lattice::{sorted_stack, BitVector};
use crate::model::{for_each_state, FactorGraph, DEFAULT_ENUMERATION_CAP};
use crate::scalar::{KahanSum, Scalar};

/// A subset of the columns of `S`.
pub type ColumnSubset = BitVector;

fn spin_space(s: &GFMatrix, cap: u128) -> Result<()> {
    let size = (s.field().order() as u128)
        .checked_pow(s.rows() as u32)
        .unwrap_or(u128::MAX);
    if size > cap {
        return Err(Error::CapExceeded { size, cap });
    }
    Ok(())
}

fn check_len(s: &GFMatrix, got: usize) -> Result<()> {
    if got != s.cols() {
        return Err(Error::DimensionMismatch {
            expected: s.cols(),
            got,
        });
    }
    Ok(())
}

/// `(1/q^{|V|}) Σ_σ ∏_α exp[J_α δ(Σ_i S_{iα} σ_i, 0)]`.
pub fn matroid_potts_partition<T: Scalar>(s: &GFMatrix, j: &[T]) -> Result<T> {
    check_len(s, j.len())?;
    spin_space(s, DEFAULT_ENUMERATION_CAP)?;
    let w: Vec<T> = j.iter().map(|x| x.exp()).collect();
    let q = s.field().order();
    let mut acc = KahanSum::new();
    for_each_state(&vec![q; s.rows()], |sigma| {
        let c = s.encode(sigma);
        acc.add(
            c.iter()
                .zip(&w)
                .fold(T::one(), |a, (&x, &wx)| if x == 0 { a * wx } else { a }),
        );
    });
    Ok(acc.value() / T::from_count(q).powi(s.rows() as i32))
}

/// `q^{−r_S(A)} ∏_{α∈A} p_α`.
pub fn matroid_rc_weight<T: Scalar>(s: &GFMatrix, p: &[T], a: &ColumnSubset) -> Result<T> {
    check_len(s, p.len())?;
    let r = s.rank(a)?;
    let prod = a.iter_ones().fold(T::one(), |acc, k| acc * p[k]);
    Ok(prod / T::from_count(s.field().order()).powi(r as i32))
}

/// `Σ_{A⊆cols} q^{−r_S(A)} ∏_{α∈A} p_α`.
pub fn matroid_rc_partition<T: Scalar>(s: &GFMatrix, p: &[T]) -> Result<T> {
    check_len(s, p.len())?;
    if let Some((edge, &pe)) = p.iter().enumerate().find(|(_, &x)| x < T::zero()) {
        return Err(Error::NegativeWeight {
            edge,
            p: pe.as_f64(),
        });
    }
    let n = s.cols();
    let size = 1u128 << n.min(127);
    if n >= 64 || size > DEFAULT_ENUMERATION_CAP {
        return Err(Error::CapExceeded {
            size,
            cap: DEFAULT_ENUMERATION_CAP,
        });
    }
    let parts: Vec<T> = (0..size as u64)
        .into_par_iter()
        .map(|mask| matroid_rc_weight(s, p, &BitVector::new(n, mask)))
        .collect::<Result<_>>()?;
    Ok(parts.into_iter().collect::<KahanSum<T>>().value())
}

/// Rows become `q`-state variables and column `α` a factor over the rows
/// where it is nonzero, with table `exp[J_α δ(Σ S_{iα} x_i, 0)]`. The
/// `1/q^{|V|}` normalization is left out.
pub fn matroid_factor_graph<T: Scalar>(s: &GFMatrix, j: &[T]) -> Result<FactorGraph<T>> {
    check_len(s, j.len())?;
    let f = s.field();
    let mut g = FactorGraph::new(vec![f.order(); s.rows()])?;
    for (c, &jc) in j.iter().enumerate() {
        let support = s.support(c);
        let coeffs: Vec<usize> = support.iter().map(|&r| s.get(r, c)).collect();
        let w = jc.exp();
        g.add_factor_fn(support, |x| {
            let sum = x
                .iter()
                .zip(&coeffs)
                .fold(0, |acc, (&xi, &a)| f.add(acc, f.mul(a, xi)));
            if sum == 0 {
                w
            } else {
                T::one()
            }
        })?;
    }
    Ok(g)
}

/// The incidence hypergraph of `S` as a factor graph with unit tables; its
/// covers are the covers of the matroid model.
pub fn incidence_factor_graph<T: Scalar>(s: &GFMatrix) -> Result<FactorGraph<T>> {
    matroid_factor_graph(s, &vec![T::zero(); s.cols()])
}

/// `S^H` for a cover of the incidence hypergraph: column copy `c·n + α`
/// carries the entries of column `α` against the row copies it is wired to.
pub fn cover_matrix<T: Scalar>(s: &GFMatrix, spec: &CoverSpec<T>) -> Result<GFMatrix> {
    let base = &spec.base;
    let matches = base.num_variables() == s.rows()
        && base.num_factors() == s.cols()
        && (0..s.cols()).all(|c| base.factor(c).scope == s.support(c));
    if !matches {
        return Err(Error::MalformedCover(
            "cover base is not the incidence hypergraph of the matrix".into(),
        ));
    }
    let lifted = spec.build()?;
    let (k, n, m) = (s.rows(), s.cols(), spec.m);
    let mut rows = vec![vec![0; m * n]; m * k];
    for (col, f) in lifted.cover.factors().iter().enumerate() {
        let alpha = col % n;
        for &u in &f.scope {
            rows[u][col] = s.get(u % k, alpha);
        }
    }
    GFMatrix::new(s.field().clone(), rows)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankCoverReport {
    /// `r_{S^H}(A¹, …, A^M)`.
    pub cover_rank: usize,
    /// `Σ_m r_S(A^[m])`.
    pub stacked_rank: usize,
    pub slack: i64,
    pub holds: bool,
}

/// Compares the cover-matrix rank of `A = (A¹, …, A^M)` with the base ranks
/// of the sorted stack.
pub fn check_rank_cover_inequality<T: Scalar>(
    s: &GFMatrix,
    spec: &CoverSpec<T>,
    a_layers: &[ColumnSubset],
) -> Result<RankCoverReport> {
    let sh = cover_matrix(s, spec)?;
    if a_layers.len() != spec.m {
        return Err(Error::LayerMismatch {
            expected: spec.m,
            got: a_layers.len(),
        });
    }
    let n = s.cols();
    let mut joined = BitVector::zeros(spec.m * n);
    for (c, a) in a_layers.iter().enumerate() {
        check_len(s, a.len())?;
        for e in a.iter_ones() {
            joined.set(c * n + e, true);
        }
    }
    let cover_rank = sh.rank(&joined)?;
    let mut stacked_rank = 0;
    for layer in sorted_stack(a_layers)? {
        stacked_rank += s.rank(&layer)?;
    }
    Ok(RankCoverReport {
        cover_rank,
        stacked_rank,
        slack: cover_rank as i64 - stacked_rank as i64,
        holds: cover_rank >= stacked_rank,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightEnumerator {
    pub lambda: f64,
    /// `Σ_σ λ^{w(σS)}` by enumeration.
    pub exact: f64,
    /// `q^k λ^n Z_Potts(S; q, log 1/λ)`.
    pub identity: f64,
    /// `q^k λ^n Z_B` and `q^k λ^n Z_MF`; present only for `λ ∈ (0, 1]`.
    pub bethe: Option<f64>,
    pub mean_field: Option<f64>,
}

/// Weight enumerator of the code spanned by the rows of `s`, with Bethe and
/// mean-field lower bounds from `restarts` optimizer starts.
pub fn weight_enumerator(
    s: &GFMatrix,
    lambda: f64,
    restarts: usize,
    seed: u64,
) -> Result<WeightEnumerator> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "lambda = {lambda} must be positive"
        )));
    }
    spin_space(s, DEFAULT_ENUMERATION_CAP)?;
    let q = s.field().order();
    let mut acc = KahanSum::new();
    for_each_state(&vec![q; s.rows()], |sigma| {
        let w = s.encode(sigma).iter().filter(|&&x| x != 0).count();
        acc.add(lambda.powi(w as i32));
    });
    let exact = acc.value();
    let j = vec![(1.0 / lambda).ln(); s.cols()];
    let scale = (q as f64).powi(s.rows() as i32) * lambda.powi(s.cols() as i32);
    let identity = scale * matroid_potts_partition(s, &j)?;
    let (bethe, mean) = if lambda <= 1.0 {
        let g = matroid_factor_graph(s, &j)?;
        let lam_n = lambda.powi(s.cols() as i32);
        let zb = maximize_bethe(&g, restarts, seed)?.z();
        let zmf = mean_field(&g, restarts, seed)?.log_z.exp();
        (Some(lam_n * zb), Some(lam_n * zmf))
    } else {
        (None, None)
    };
    Ok(WeightEnumerator {
        lambda,
        exact,
        identity,
        bethe,
        mean_field: mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covers::enumerate_covers;
    use crate::gf::{parse_generator, GaloisField};
    use crate::graph::Graph;

    #[test]
    fn potts_examples() {
        let one = parse_generator("2 1 1\n1").unwrap();
        assert!((matroid_potts_partition(&one, &[0.0f64]).unwrap() - 1.0).abs() < 1e-15);
        let rep = parse_generator("2 1 3\n1 1 1").unwrap();
        let lam: f64 = 0.3;
        let j = vec![(1.0 / lam).ln(); 3];
        let expect = 0.5 * (lam.powi(-3) + 1.0);
        assert!((matroid_potts_partition(&rep, &j).unwrap() - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn rc_examples() {
        let empty = GFMatrix::new(GaloisField::new(3).unwrap(), vec![vec![]; 2]).unwrap();
        assert!((matroid_rc_partition::<f64>(&empty, &[]).unwrap() - 1.0).abs() < 1e-15);
        let one = parse_generator("2 1 1\n1").unwrap();
        assert!((matroid_rc_partition(&one, &[1.0f64]).unwrap() - 1.5).abs() < 1e-15);
        assert!((matroid_potts_partition(&one, &[2f64.ln()]).unwrap() - 1.5).abs() < 1e-15);
        assert!(matches!(
            matroid_rc_partition(&one, &[-0.1]),
            Err(Error::NegativeWeight { .. })
        ));
    }

    #[test]
    fn factor_graph_matches_normalized_partition() {
        let s = parse_generator("3 2 4\n1 0 2 1\n0 1 1 2").unwrap();
        let j = [0.3f64, 0.9, 0.1, 0.5];
        let g = matroid_factor_graph(&s, &j).unwrap();
        let z = g.exact_partition().unwrap() / 9.0;
        let direct = matroid_potts_partition(&s, &j).unwrap();
        assert!((z - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn graph_incidence_rank() {
        let g = Graph::new(4, vec![(0, 1), (1, 2), (2, 0), (2, 3)]).unwrap();
        let s = GFMatrix::graph_incidence(&g);
        for a in BitVector::all(4) {
            let k = g.count_components(&a).unwrap();
            assert_eq!(s.rank(&a).unwrap(), 4 - k);
        }
    }

    #[test]
    fn rank_cover_examples() {
        let s = parse_generator("2 2 3\n1 1 0\n0 1 1").unwrap();
        let base = incidence_factor_graph::<f64>(&s).unwrap();
        let id = CoverSpec::identity(base.clone(), 2);
        let r = check_rank_cover_inequality(&s, &id, &[BitVector::zeros(3); 2]).unwrap();
        assert_eq!((r.cover_rank, r.stacked_rank), (0, 0));
        let same = [BitVector::from_bits(&[true, true, false]); 2];
        assert_eq!(check_rank_cover_inequality(&s, &id, &same).unwrap().slack, 0);
        for spec in enumerate_covers(&base, 2, 100).unwrap() {
            for mask in 0u64..64 {
                let layers = [BitVector::new(3, mask & 7), BitVector::new(3, mask >> 3)];
                let r = check_rank_cover_inequality(&s, &spec, &layers).unwrap();
                assert!(r.holds, "{layers:?}");
            }
        }
    }

    #[test]
    fn rank_cover_inequality_fails_over_gf3() {
        let s = parse_generator("3 2 3\n2 2 2\n0 1 2").unwrap();
        let base = incidence_factor_graph::<f64>(&s).unwrap();
        // column 1 crosses the layers, columns 0 and 2 stay in place
        let spec = CoverSpec::new(
            base,
            2,
            vec![vec![vec![0, 1]], vec![vec![0, 1], vec![1, 0]], vec![vec![0, 1], vec![0, 1]]],
        )
        .unwrap();
        let a = BitVector::from_bits(&[false, true, true]);
        let r = check_rank_cover_inequality(&s, &spec, &[a, a]).unwrap();
        assert_eq!((r.cover_rank, r.stacked_rank), (3, 4));
        assert!(!r.holds);
        // the cover still satisfies Z(H) ≤ Z(G)^2
        let sh = cover_matrix(&s, &spec).unwrap();
        for j in [0.5, 2.0, 8.0] {
            let zg: f64 = matroid_potts_partition(&s, &[j; 3]).unwrap();
            let zh: f64 = matroid_potts_partition(&sh, &[j; 6]).unwrap();
            assert!(zh <= zg * zg * (1.0 + 1e-12));
        }
    }

    #[test]
    fn rank_cover_inequality_holds_in_characteristic_two() {
        for text in ["2 2 3\n1 1 1\n0 1 1", "4 2 3\n1 2 3\n3 1 2", "4 2 3\n1 1 0\n2 3 1"] {
            let s = parse_generator(text).unwrap();
            let base = incidence_factor_graph::<f64>(&s).unwrap();
            for spec in enumerate_covers(&base, 2, 100).unwrap() {
                for mask in 0u64..64 {
                    let layers = [BitVector::new(3, mask & 7), BitVector::new(3, mask >> 3)];
                    assert!(check_rank_cover_inequality(&s, &spec, &layers).unwrap().holds);
                }
            }
        }
    }

    #[test]
    fn wrong_base_rejected() {
        let s = parse_generator("2 2 3\n1 1 0\n0 1 1").unwrap();
        let other = parse_generator("2 2 3\n1 0 0\n0 1 1").unwrap();
        let id = CoverSpec::identity(incidence_factor_graph::<f64>(&other).unwrap(), 2);
        assert!(matches!(
            check_rank_cover_inequality(&s, &id, &[BitVector::zeros(3); 2]),
            Err(Error::MalformedCover(_))
        ));
    }

    #[test]
    fn repetition_code_enumerator() {
        let rep = parse_generator("2 1 3\n1 1 1").unwrap();
        for lam in [0.2, 0.7, 1.0] {
            let w = weight_enumerator(&rep, lam, 4, 0).unwrap();
            let expect = 1.0 + lam.powi(3);
            assert!((w.exact - expect).abs() < 1e-12);
            assert!((w.identity - expect).abs() < 1e-12);
            assert!(w.bethe.unwrap() <= expect * (1.0 + 1e-9));
        }
        let big = weight_enumerator(&rep, 2.0, 4, 0).unwrap();
        assert!(big.bethe.is_none() && (big.exact - 9.0).abs() < 1e-12);
        assert!(weight_enumerator(&rep, 0.0, 4, 0).is_err());
    }
}
