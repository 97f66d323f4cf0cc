//! Library values against independent brute-force implementations and
//! closed forms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bethe_core::bethe::{maximize_bethe, mean_field, run_bp, BpInit, BpOptions};
use bethe_core::covers::sample_seed;
use bethe_core::gf::{parse_generator, GFMatrix};
use bethe_core::graph::Graph;
use bethe_core::hom::{edge_partition, hom_partition};
use bethe_core::io::ModelFile;
use bethe_core::lattice::BitVector;
use bethe_core::matroid::{matroid_potts_partition, matroid_rc_partition, weight_enumerator};
use bethe_core::potts::{potts_partition, rc_partition};
use bethe_core::verify::{random_graph, random_hom_model, random_matrix, random_tree_model};
use bethe_core::{FactorGraph64, PottsModel64};

fn rng(i: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sample_seed(0x0ac1e, i))
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

/// All assignments of `n` variables with `q` states, as nested loops over an odometer.
fn assignments(n: usize, q: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|v| {
                (0..q).map(move |s| {
                    let mut w = v.clone();
                    w.push(s);
                    w
                })
            })
            .collect();
    }
    out
}

fn components(n: usize, edges: &[(usize, usize)]) -> usize {
    // label propagation until stable
    let mut label: Vec<usize> = (0..n).collect();
    loop {
        let mut changed = false;
        for &(u, v) in edges {
            let m = label[u].min(label[v]);
            for x in [u, v] {
                if label[x] != m {
                    label[x] = m;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut l = label;
    l.sort();
    l.dedup();
    l.len()
}

fn rank_mod_p(p: usize, cols: &[Vec<usize>]) -> usize {
    let mut m: Vec<Vec<usize>> = cols.to_vec();
    let k = m.first().map_or(0, Vec::len);
    let inv = |a: usize| (1..p).find(|&b| a * b % p == 1).unwrap();
    let mut rank = 0;
    for c in 0..k {
        let Some(piv) = (rank..m.len()).find(|&r| m[r][c] != 0) else { continue };
        m.swap(rank, piv);
        let f = inv(m[rank][c]);
        for x in m[rank].iter_mut() {
            *x = *x * f % p;
        }
        for r in 0..m.len() {
            if r != rank && m[r][c] != 0 {
                let t = m[r][c];
                for j in 0..k {
                    m[r][j] = (m[r][j] + p * p - t * m[rank][j]) % p;
                }
            }
        }
        rank += 1;
    }
    rank
}

#[test]
fn single_variable_partition() {
    let g = ModelFile::parse(
        r#"{"variables": [{"id": "x", "cardinality": 3}], "factors": [{"scope": ["x"], "table": [1, 1, 1]}]}"#,
    )
    .unwrap()
    .to_factor_graph::<f64>()
    .unwrap();
    assert_eq!(g.exact_partition().unwrap(), 3.0);
}

#[test]
fn potts_and_rc_against_direct_sums() {
    for i in 0..40 {
        let mut r = rng(i);
        let g = random_graph(&mut r, 5, 8);
        let q = r.gen_range(1..=4);
        let j: Vec<f64> = (0..g.num_edges()).map(|_| r.gen_range(0.01..3.0)).collect();
        let model = PottsModel64::new(g.clone(), q as f64, j.clone(), None).unwrap();
        let mut z = 0.0;
        for s in assignments(g.n_vertices, q) {
            let e: f64 = g.edges.iter().zip(&j).filter(|((u, v), _)| s[*u] == s[*v]).map(|(_, w)| w).sum();
            z += e.exp();
        }
        let mut zrc = 0.0;
        for mask in 0u64..1 << g.num_edges() {
            let chosen: Vec<_> = (0..g.num_edges()).filter(|b| mask >> b & 1 == 1).collect();
            let edges: Vec<_> = chosen.iter().map(|&b| g.edges[b]).collect();
            let p: f64 = chosen.iter().map(|&b| j[b].exp() - 1.0).product();
            zrc += (q as f64).powi(components(g.n_vertices, &edges) as i32) * p;
        }
        assert!(close(potts_partition(&model).unwrap(), z, 1e-12));
        assert!(close(rc_partition(&model).unwrap(), zrc, 1e-12));
        assert!(close(z, zrc, 1e-9));
    }
}

#[test]
fn potts_with_field_against_direct_sum() {
    let g = Graph::cycle(4);
    let h = vec![0.3, -0.2, 0.1];
    let model = PottsModel64::new(g.clone(), 3.0, vec![0.7; 4], Some(h.clone())).unwrap();
    let mut z = 0.0;
    for s in assignments(4, 3) {
        let e: f64 = g.edges.iter().filter(|(u, v)| s[*u] == s[*v]).count() as f64 * 0.7
            + s.iter().map(|&x| h[x]).sum::<f64>();
        z += e.exp();
    }
    assert!(close(potts_partition(&model).unwrap(), z, 1e-12));
    assert!(close(rc_partition(&model).unwrap(), z, 1e-9));
}

#[test]
fn hom_against_direct_sum() {
    for i in 0..40 {
        let mut r = rng(100 + i);
        let m = random_hom_model(&mut r, 5, 8, 4);
        let (a, b) = m.rank2().unwrap();
        let n = m.n();
        let mut z = 0.0;
        for s in assignments(m.graph.n_vertices, n) {
            let mut t: f64 = s.iter().map(|&x| m.w()[x]).product();
            for &(u, v) in &m.graph.edges {
                t *= a[s[u]] * a[s[v]] + b[s[u]] * b[s[v]];
            }
            z += t;
        }
        let zh = hom_partition(&m).unwrap();
        let ze = edge_partition(&m).unwrap();
        if z == 0.0 {
            assert_eq!(zh, 0.0);
            assert!(ze.abs() < 1e-12);
        } else {
            assert!(close(zh, z, 1e-12));
            assert!(close(ze, z, 1e-9));
        }
    }
}

#[test]
fn rank_against_elimination_mod_p() {
    for i in 0..60 {
        let mut r = rng(200 + i);
        let p = [2, 3, 5, 7][i as usize % 4];
        let k = r.gen_range(1..=4);
        let n = r.gen_range(1..=6);
        let s = random_matrix(&mut r, p, k, n);
        for mask in 0u64..1 << n {
            let a = BitVector::new(n, mask);
            let cols: Vec<Vec<usize>> = a.iter_ones().map(|c| (0..k).map(|row| s.get(row, c)).collect()).collect();
            assert_eq!(s.rank(&a).unwrap(), rank_mod_p(p, &cols));
        }
    }
}

#[test]
fn matroid_potts_and_rc_against_direct_sums() {
    for i in 0..30 {
        let mut r = rng(300 + i);
        let q = [2, 3][i as usize % 2];
        let (k, n) = (r.gen_range(1..=3), r.gen_range(1..=5));
        let s = random_matrix(&mut r, q, k, n);
        let j: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..2.0)).collect();
        let mut z = 0.0;
        for sigma in assignments(k, q) {
            let e: f64 = (0..n)
                .filter(|&c| (0..k).map(|row| s.get(row, c) * sigma[row]).sum::<usize>() % q == 0)
                .map(|c| j[c])
                .sum();
            z += e.exp();
        }
        z /= (q as f64).powi(k as i32);
        let p: Vec<f64> = j.iter().map(|x| x.exp() - 1.0).collect();
        assert!(close(matroid_potts_partition(&s, &j).unwrap(), z, 1e-12));
        assert!(close(matroid_rc_partition(&s, &p).unwrap(), z, 1e-9));
    }
}

#[test]
fn single_column_rc_example() {
    let s = parse_generator("2 1 1\n1").unwrap();
    assert!(close(matroid_rc_partition(&s, &[1.0]).unwrap(), 1.5, 1e-15));
    assert!(close(matroid_potts_partition(&s, &[2f64.ln()]).unwrap(), 1.5, 1e-15));
}

fn codeword_sum(s: &GFMatrix, lambda: f64) -> f64 {
    let q = s.field().order();
    let mut words = std::collections::BTreeSet::new();
    for sigma in assignments(s.rows(), q) {
        words.insert(s.encode(&sigma));
    }
    words
        .iter()
        .map(|w| lambda.powi(w.iter().filter(|&&x| x != 0).count() as i32))
        .sum()
}

#[test]
fn weight_enumerators_of_known_codes() {
    let hamming = parse_generator("2 4 7\n1 0 0 0 1 1 0\n0 1 0 0 1 0 1\n0 0 1 0 0 1 1\n0 0 0 1 1 1 1").unwrap();
    let rep = parse_generator("2 1 3\n1 1 1").unwrap();
    for lambda in [0.25f64, 0.5, 1.0] {
        // 1 + 7λ³ + 7λ⁴ + λ⁷
        let closed = 1.0 + 7.0 * lambda.powi(3) + 7.0 * lambda.powi(4) + lambda.powi(7);
        let w = weight_enumerator(&hamming, lambda, 16, 1).unwrap();
        assert!(close(w.exact, closed, 1e-12));
        assert!(close(codeword_sum(&hamming, lambda), closed, 1e-12));
        assert!(close(w.identity, closed, 1e-9));
        assert!(w.bethe.unwrap() <= closed * (1.0 + 1e-9));
        assert!(w.mean_field.unwrap() <= w.bethe.unwrap() * (1.0 + 1e-9));
        let r = weight_enumerator(&rep, lambda, 16, 1).unwrap();
        assert!(close(r.exact, 1.0 + lambda.powi(3), 1e-12));
    }
}

#[test]
fn factor_graph_partition_against_direct_product() {
    for i in 0..20 {
        let mut r = rng(400 + i);
        let g: FactorGraph64 = random_tree_model(&mut r, 5);
        let cards = g.cards().to_vec();
        let mut z = 0.0;
        let mut x = vec![0; cards.len()];
        loop {
            let mut w = 1.0;
            for (v, &s) in x.iter().enumerate() {
                w *= g.phi(v, s);
            }
            for f in g.factors() {
                let states: Vec<usize> = f.scope.iter().map(|&v| x[v]).collect();
                w *= f.table.get(&states);
            }
            z += w;
            let mut p = cards.len();
            loop {
                if p == 0 {
                    break;
                }
                p -= 1;
                x[p] += 1;
                if x[p] < cards[p] {
                    break;
                }
                x[p] = 0;
            }
            if x.iter().all(|&s| s == 0) {
                break;
            }
        }
        assert!(close(g.exact_partition().unwrap(), z, 1e-12));
    }
}

#[test]
fn bp_exact_on_trees() {
    for i in 0..30 {
        let mut r = rng(500 + i);
        let g = random_tree_model(&mut r, 6);
        let res = run_bp(&g, BpInit::Uniform, &BpOptions::default()).unwrap();
        assert!(res.converged);
        let z = g.exact_partition().unwrap();
        assert!(close(res.log_zb.exp(), z, 1e-8), "{} vs {z}", res.log_zb.exp());
        let exact = g.exact_marginals().unwrap();
        for (a, b) in res.beliefs.nodes.iter().flatten().zip(exact.nodes.iter().flatten()) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}

#[test]
fn ordering_on_ferromagnetic_cycles() {
    for n in 3..=6 {
        let model = PottsModel64::uniform(Graph::cycle(n), 2.0, 0.8).unwrap();
        let g = model.to_factor_graph().unwrap();
        let z = potts_partition(&model).unwrap();
        let zb = maximize_bethe(&g, 16, 0).unwrap().z();
        let zmf = mean_field(&g, 16, 0).unwrap().log_z.exp();
        assert!(zmf <= zb * (1.0 + 1e-9) && zb <= z * (1.0 + 1e-9));
        // the cycle is not a tree, so Bethe is strictly below Z
        assert!(zb < z * (1.0 - 1e-6));
    }
}
