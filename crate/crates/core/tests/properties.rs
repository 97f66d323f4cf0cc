use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bethe_core::bethe::{bethe_objective, maximize_bethe, mean_field};
use bethe_core::covers::{sample_cover, CoverSpec};
use bethe_core::gf::GaloisField;
use bethe_core::hom::{edge_partition, hom_partition};
use bethe_core::io::ModelFile;
use bethe_core::lattice::{is_supermodular_int, meet_join, sorted_stack, BitVector};
use bethe_core::potts::{potts_partition, rc_partition};
use bethe_core::verify::{
    random_graph, random_hom_model, random_lsm_binary_model, random_matrix, random_tree_model,
};
use bethe_core::{FactorGraph32, FactorGraph64, PottsModel64, PseudoMarginals};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn bits(n: usize) -> impl Strategy<Value = BitVector> {
    (0u64..1 << n).prop_map(move |m| BitVector::new(n, m))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cover_partition_bounded_by_power(seed in any::<u64>(), m in 2usize..=3) {
        let g = random_lsm_binary_model(&mut rng(seed), 4);
        let spec = sample_cover(&g, m, seed ^ 1).unwrap();
        let z = g.exact_partition().unwrap();
        let zh = spec.build().unwrap().cover.exact_partition().unwrap();
        prop_assert!(zh <= z.powi(m as i32) * (1.0 + 1e-9));
    }

    #[test]
    fn one_cover_and_disjoint_copies(seed in any::<u64>(), m in 1usize..=3) {
        let g = random_tree_model(&mut rng(seed), 4);
        let z = g.exact_partition().unwrap();
        let one = sample_cover(&g, 1, seed).unwrap().build().unwrap();
        prop_assert!(rel(one.cover.exact_partition().unwrap(), z) < 1e-12);
        let copies = CoverSpec::identity(g.clone(), m).build().unwrap();
        prop_assert!(rel(copies.cover.exact_partition().unwrap(), z.powi(m as i32)) < 1e-10);
    }

    #[test]
    fn tree_covers_have_power_partition(seed in any::<u64>()) {
        // every cover of a tree is a disjoint union of copies
        let g = random_tree_model(&mut rng(seed), 4);
        let z = g.exact_partition().unwrap();
        let zh = sample_cover(&g, 2, seed).unwrap().build().unwrap().cover.exact_partition().unwrap();
        prop_assert!(rel(zh, z * z) < 1e-10);
    }

    #[test]
    fn random_cluster_identity(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = random_graph(&mut r, 5, 7);
        let q = r.gen_range(1..=4) as f64;
        let j = (0..g.num_edges()).map(|_| r.gen_range(0.0..3.0)).collect();
        let model = PottsModel64::new(g, q, j, None).unwrap();
        prop_assert!(rel(rc_partition(&model).unwrap(), potts_partition(&model).unwrap()) < 1e-9);
    }

    #[test]
    fn edge_colouring_identity(seed in any::<u64>()) {
        let m = random_hom_model(&mut rng(seed), 5, 7, 4);
        let z = hom_partition(&m).unwrap();
        let ze = edge_partition(&m).unwrap();
        prop_assert!((ze - z).abs() <= 1e-9 * z.max(1e-300) || (z == 0.0 && ze.abs() < 1e-12));
    }

    #[test]
    fn bethe_sandwich_on_lsm_models(seed in any::<u64>()) {
        let g = random_lsm_binary_model(&mut rng(seed), 4);
        let z = g.exact_partition().unwrap();
        let zb = maximize_bethe(&g, 8, seed).unwrap().z();
        let zmf = mean_field(&g, 8, seed).unwrap().log_z.exp();
        prop_assert!(zmf <= zb * (1.0 + 1e-6));
        prop_assert!(zb <= z * (1.0 + 1e-6));
    }

    #[test]
    fn objective_at_product_beliefs_is_below_log_z(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = random_tree_model(&mut r, 4);
        let nodes: Vec<Vec<f64>> = g.cards().iter().map(|&c| {
            let w: Vec<f64> = (0..c).map(|_| r.gen_range(0.05..1.0)).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect()
        }).collect();
        let tau = PseudoMarginals::product(&g, nodes);
        let value = bethe_objective(&g, &tau).unwrap();
        prop_assert!(value <= g.exact_partition().unwrap().ln() + 1e-9);
    }

    #[test]
    fn meet_join_preserves_counts(n in 1usize..=10, x in any::<u64>(), y in any::<u64>()) {
        let x = BitVector::new(n, x & ((1 << n) - 1));
        let y = BitVector::new(n, y & ((1 << n) - 1));
        let (lo, hi) = meet_join(&x, &y).unwrap();
        prop_assert!(lo.is_subset_of(&hi));
        prop_assert_eq!(lo.count_ones() + hi.count_ones(), x.count_ones() + y.count_ones());
    }

    #[test]
    fn sorted_stack_is_a_chain(xs in proptest::collection::vec(bits(6), 1..5)) {
        let s = sorted_stack(&xs).unwrap();
        prop_assert_eq!(s.len(), xs.len());
        for w in s.windows(2) {
            prop_assert!(w[1].is_subset_of(&w[0]));
        }
        for i in 0..6 {
            let a = xs.iter().filter(|x| x.get(i)).count();
            let b = s.iter().filter(|x| x.get(i)).count();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn rank_is_submodular_and_monotone(seed in any::<u64>(), q in prop::sample::select(vec![2usize, 3, 4, 5])) {
        let mut r = rng(seed);
        let (k, n) = (r.gen_range(1..=4), r.gen_range(1..=6));
        let s = random_matrix(&mut r, q, k, n);
        prop_assert!(is_supermodular_int(n, |a| -(s.rank(&a).unwrap() as i64)).holds);
        for mask in 0u64..1 << n {
            let a = BitVector::new(n, mask);
            for e in 0..n {
                let mut b = a;
                b.set(e, true);
                prop_assert!(s.rank(&a).unwrap() <= s.rank(&b).unwrap());
            }
        }
    }

    #[test]
    fn components_are_supermodular(seed in any::<u64>()) {
        let g = random_graph(&mut rng(seed), 5, 8);
        prop_assert!(is_supermodular_int(g.num_edges(), |a| g.count_components(&a).unwrap() as i64).holds);
    }

    #[test]
    fn field_axioms(q in prop::sample::select(vec![2usize, 3, 4, 5, 7, 8, 9, 16, 25, 27]), a in 0usize..27, b in 0usize..27, c in 0usize..27) {
        let f = GaloisField::new(q).unwrap();
        let (a, b, c) = (a % q, b % q, c % q);
        prop_assert_eq!(f.mul(a, f.add(b, c)), f.add(f.mul(a, b), f.mul(a, c)));
        prop_assert_eq!(f.add(a, f.neg(a)), 0);
        if a != 0 {
            prop_assert_eq!(f.mul(a, f.inv(a).unwrap()), 1);
        }
    }

    #[test]
    fn model_file_round_trip(seed in any::<u64>()) {
        let g: FactorGraph64 = random_tree_model(&mut rng(seed), 5);
        let text = ModelFile::from_factor_graph(&g).to_json();
        let back: FactorGraph64 = ModelFile::parse(&text).unwrap().to_factor_graph().unwrap();
        prop_assert_eq!(g.exact_partition().unwrap(), back.exact_partition().unwrap());
    }

    #[test]
    fn single_precision_tracks_double(seed in any::<u64>()) {
        let g: FactorGraph64 = random_tree_model(&mut rng(seed), 5);
        let h: FactorGraph32 = ModelFile::from_factor_graph(&g).to_factor_graph().unwrap();
        let z64 = g.exact_partition().unwrap();
        let z32 = h.exact_partition().unwrap() as f64;
        prop_assert!(rel(z32, z64) < 1e-5);
    }
}
