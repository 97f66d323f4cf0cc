//! One pass/fail line per acceptance criterion. Exits nonzero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bethe_core::bethe::{bethe_gradient, bethe_objective_raw, flatten, maximize_bethe, unflatten};
use bethe_core::covers::sample_seed;
use bethe_core::gf::{parse_generator, GaloisField};
use bethe_core::graph::Graph;
use bethe_core::hom::{edge_weight, HomModel};
use bethe_core::lattice::{is_log_supermodular, is_supermodular_int, BitVector, BoolTable};
use bethe_core::matroid::weight_enumerator;
use bethe_core::verify::{random_hom_model, random_matrix, random_tree_model, run_suite, VerifyOptions};

const SEED: u64 = 20240611;

struct Line {
    passed: bool,
    summary: String,
}

fn suite(tag: &str, trials: Option<usize>, seed: u64) -> Line {
    let r = run_suite(
        tag,
        &VerifyOptions {
            trials,
            seed,
            restarts: 64,
        },
    )
    .expect("suite runs");
    Line {
        passed: r.all_passed(),
        summary: format!("{}: {}/{} (worst {:.3e}, tol {:e})", tag, r.passed, r.trials, r.worst, r.tolerance),
    }
}

fn counterexample() -> Line {
    let r = run_suite(
        "counterexample",
        &VerifyOptions {
            trials: None,
            seed: SEED,
            restarts: 64,
        },
    )
    .expect("suite runs");
    let v = |k: &str| r.values[k];
    Line {
        passed: r.all_passed(),
        summary: format!(
            "Z = {:.3}, Z_B = {:.3}, Z_B - Z = {:.3} vs {:.3} (rel err {:.3}, tol 1%)",
            v("z"),
            v("z_bethe"),
            v("gap"),
            v("target_gap"),
            r.worst
        ),
    }
}

fn orderings() -> Line {
    let parts = ["5.2-ordering", "5.6", "6.2"].map(|t| {
        run_suite(
            t,
            &VerifyOptions {
                trials: Some(30),
                seed: SEED,
                restarts: 64,
            },
        )
        .expect("suite runs")
    });
    let passed: usize = parts.iter().map(|r| r.passed).sum();
    let trials: usize = parts.iter().map(|r| r.trials).sum();
    let worst = parts.iter().map(|r| r.worst).fold(f64::INFINITY, f64::min);
    Line {
        passed: passed == trials && trials == 120,
        summary: format!("{passed}/{trials} orderings (worst margin {worst:.3e}, tol 1e-6)"),
    }
}

fn component_and_field_inequalities() -> Line {
    let a = run_suite("5.1", &VerifyOptions { trials: Some(0), seed: SEED, restarts: 1 }).expect("suite runs");
    let b = run_suite("5.3", &VerifyOptions { trials: Some(1000), seed: SEED, restarts: 1 }).expect("suite runs");
    Line {
        passed: a.all_passed() && b.all_passed(),
        summary: format!(
            "{}; field weights {}/{}",
            a.outcomes[0].note, b.passed, b.trials
        ),
    }
}

fn weight_enumerators() -> Line {
    let codes = [("repetition [3,1]", "2 1 3\n1 1 1"), (
        "Hamming [7,4]",
        "2 4 7\n1 0 0 0 1 1 0\n0 1 0 0 1 0 1\n0 0 1 0 0 1 1\n0 0 0 1 1 1 1",
    )];
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for (_, text) in codes {
        let s = parse_generator(text).unwrap();
        for lambda in [0.25, 0.5, 1.0] {
            let w = weight_enumerator(&s, lambda, 64, SEED).unwrap();
            let err = (w.exact - w.identity).abs() / w.exact;
            worst = worst.max(err);
            ok &= err <= 1e-9 && w.bethe.unwrap() <= w.exact * (1.0 + 1e-9);
        }
    }
    Line {
        passed: ok,
        summary: format!("6 enumerators, worst identity error {worst:.3e}, Bethe below exact: {ok}"),
    }
}

fn tree_exactness() -> Line {
    let mut worst_z: f64 = 0.0;
    for i in 0..30 {
        let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(SEED, i));
        let g = random_tree_model(&mut rng, 6);
        let z = g.exact_partition().unwrap();
        let zb = maximize_bethe(&g, 8, i).unwrap().z();
        worst_z = worst_z.max((zb - z).abs() / z);
    }
    let mut worst_g: f64 = 0.0;
    for i in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(SEED ^ 0xfd, i));
        let g = random_tree_model(&mut rng, 4);
        // exact marginals of a random model are interior points of the polytope
        let tau = g.exact_marginals().unwrap();
        let grad = flatten(&bethe_gradient(&g, &tau));
        let x = flatten(&tau);
        let h = 1e-6;
        let mut diff: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for k in 0..x.len() {
            let eval = |d: f64| {
                let mut y = x.clone();
                y[k] += d;
                bethe_objective_raw(&g, &unflatten(&g, &y))
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            diff = diff.max((fd - grad[k]).abs());
            scale = scale.max(grad[k].abs());
        }
        worst_g = worst_g.max(diff / scale.max(1.0));
        let _ = rng.gen::<u8>();
    }
    Line {
        passed: worst_z <= 1e-6 && worst_g <= 1e-5,
        summary: format!(
            "30 trees, worst |Z_B - Z|/Z {worst_z:.3e} (tol 1e-6); 20 points, worst gradient error {worst_g:.3e} (tol 1e-5)"
        ),
    }
}

fn lattice_suites() -> Line {
    let mut graphs = 0;
    let mut k_ok = true;
    for n in 1..=4usize {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        for mask in 0u64..(1 << pairs.len()) {
            let edges: Vec<_> = pairs.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, &e)| e).collect();
            let g = Graph::new(n, edges).unwrap();
            let e = g.num_edges();
            k_ok &= is_supermodular_int(e, |a| g.count_components(&a).unwrap() as i64).holds;
            graphs += 1;
        }
    }
    let mut matrices = 0;
    let mut r_ok = true;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for q in [2, 3, 4] {
        assert!(GaloisField::new(q).is_ok());
        for _ in 0..10 {
            let k = rng.gen_range(1..=4);
            let n = rng.gen_range(1..=6);
            let s = random_matrix(&mut rng, q, k, n);
            r_ok &= is_supermodular_int(n, |a| -(s.rank(&a).unwrap() as i64)).holds;
            matrices += 1;
        }
    }
    let mut models = 0;
    let mut f_ok = true;
    for i in 0..30 {
        let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(SEED ^ 0x61, i));
        let m: HomModel<f64> = random_hom_model(&mut rng, 5, 6, 4);
        let e = m.graph.num_edges();
        let t = BoolTable::try_from_fn(e, |a: BitVector| edge_weight(&m, &a)).unwrap();
        f_ok &= is_log_supermodular(&t).unwrap().holds;
        models += 1;
    }
    Line {
        passed: k_ok && r_ok && f_ok,
        summary: format!(
            "k_G supermodular on {graphs} graphs: {k_ok}; r_S submodular on {matrices} matrices: {r_ok}; f_edge log-supermodular on {models} models: {f_ok}"
        ),
    }
}

fn main() {
    type Check = fn() -> Line;
    let criteria: [(&str, Duration, Check); 10] = [
        ("counterexample gap", Duration::from_secs(30), counterexample),
        ("random-cluster identity", Duration::from_secs(10), || suite("appendix-a", Some(50), SEED)),
        ("edge-colouring identity", Duration::from_secs(10), || suite("appendix-b", Some(50), SEED)),
        ("cover inequality", Duration::from_secs(60), || suite("3.5", Some(100), SEED)),
        ("component and field-weight inequalities", Duration::from_secs(30), component_and_field_inequalities),
        ("rank inequality on 2-covers", Duration::from_secs(30), || suite("5.5", Some(2), SEED)),
        ("Z_MF <= Z_B <= Z orderings", Duration::from_secs(300), orderings),
        ("weight-enumerator identity", Duration::from_secs(10), weight_enumerators),
        ("tree exactness and gradient", Duration::from_secs(60), tree_exactness),
        ("lattice suites", Duration::from_secs(60), lattice_suites),
    ];
    let mut failures = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let line = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| Line {
            passed: false,
            summary: format!("panicked: {:?}", e.downcast_ref::<String>().cloned().unwrap_or_default()),
        });
        let elapsed = start.elapsed();
        let status = if line.passed { "PASS" } else { "FAIL" };
        failures += !line.passed as usize;
        let slow = if elapsed > *budget { " (over budget)" } else { "" };
        println!(
            "criterion {:>2} {status} {name}: {} [{:.2}s / {}s{slow}]",
            i + 1,
            line.summary,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("{} of 10 criteria passed", 10 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
