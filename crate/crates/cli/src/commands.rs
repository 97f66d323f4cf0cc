use std::path::Path;

use serde_json::json;

use bethe_core::bethe::{
    bethe_objective, maximize_bethe_with, mean_field, run_bp, BetheOptions, BpInit, BpOptions,
    CandidateSource,
};
use bethe_core::covers::{
    bethe_estimate_exhaustive, bethe_estimate_via_covers, sample_cover, validate_cover, CopyMap,
};
use bethe_core::gf::{parse_generator, GFMatrix};
use bethe_core::hom::{check_rank2_lsm, edge_partition, hom_bounds, hom_partition};
use bethe_core::io::{parse_graph, CoverFile, HomFile, ModelFile};
use bethe_core::lattice::{is_log_supermodular, BitVector, BoolTable};
use bethe_core::matroid::{
    matroid_factor_graph, matroid_potts_partition, matroid_rc_partition, weight_enumerator,
};
use bethe_core::potts::{
    counterexample_model, potts_partition, rc_partition, rc_weight, select_convention, Convention,
    ConventionOutcome, FieldConvention, PairConvention, COUNTEREXAMPLE_GAP, SELECTED_CONVENTION,
};
use bethe_core::verify::{run_suite, VerifyOptions};
use bethe_core::{maximize_bethe, FactorGraph64, PottsModel64};

use crate::record::{digest, ResultRecord};
use crate::{Command, ConventionArg, CoverAction, Failure, ModelArg, OptimizerArgs, PottsArgs};

type Outcome = Result<ResultRecord, Failure>;

/// Relative tolerance reported with identities checked by the CLI.
const IDENTITY_TOL: f64 = 1e-9;
const COUNTEREXAMPLE_TOL: f64 = 0.01;

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<(String, String), Failure> {
    let bytes = read(path)?;
    let d = digest(&bytes);
    let text = String::from_utf8(bytes)
        .map_err(|_| Failure::Input(format!("{}: not valid UTF-8", path.display())))?;
    Ok((text, d))
}

fn load_model(arg: &ModelArg) -> Result<(FactorGraph64, String), Failure> {
    let (text, d) = read_text(&arg.model)?;
    Ok((ModelFile::parse(&text)?.to_factor_graph()?, d))
}

fn load_code(path: &Path) -> Result<(GFMatrix, String), Failure> {
    let (text, d) = read_text(path)?;
    Ok((parse_generator(&text)?, d))
}

fn load_potts(args: &PottsArgs) -> Result<(PottsModel64, String), Failure> {
    let (text, d) = read_text(&args.graph)?;
    let graph = parse_graph(&text)?;
    let j = match (&args.j, &args.couplings) {
        (Some(j), None) => vec![*j; graph.num_edges()],
        (None, Some(c)) => c.clone(),
        _ => return Err(Failure::Input("give exactly one of --j and --couplings".into())),
    };
    Ok((PottsModel64::new(graph, args.q, j, args.field.clone())?, d))
}

fn potts_settings(r: &mut ResultRecord, args: &PottsArgs) {
    r.setting("q", args.q);
    if let Some(j) = args.j {
        r.setting("j", j);
    }
    if let Some(c) = &args.couplings {
        r.setting("couplings", c);
    }
    if let Some(h) = &args.field {
        r.setting("field", h);
    }
}

fn optimizer_settings(r: &mut ResultRecord, opt: &OptimizerArgs) {
    let d = BetheOptions::default();
    r.setting("restarts", opt.restarts)
        .setting("bp_damping", d.damping)
        .setting("bp_tol", d.bp_tol)
        .setting("bp_max_iters", d.bp_max_iters);
}

fn arg_digest(parts: &[&str]) -> String {
    digest(parts.join(" ").as_bytes())
}

fn convention_of(arg: ConventionArg) -> Convention {
    let (pairs, fields) = match arg {
        ConventionArg::UnorderedMultiplicative => {
            (PairConvention::Unordered, FieldConvention::Multiplicative)
        }
        ConventionArg::UnorderedExponential => (PairConvention::Unordered, FieldConvention::Exponential),
        ConventionArg::OrderedMultiplicative => (PairConvention::Ordered, FieldConvention::Multiplicative),
        ConventionArg::OrderedExponential => (PairConvention::Ordered, FieldConvention::Exponential),
    };
    Convention { pairs, fields }
}

fn convention_name(c: Convention) -> String {
    format!("{:?}-{:?}", c.pairs, c.fields).to_lowercase()
}

pub fn run(command: &Command) -> Outcome {
    match command {
        Command::Z { model, cap } => {
            let (g, d) = load_model(model)?;
            let z = g.exact_partition_capped(*cap)?;
            let mut r = ResultRecord::new("z", d);
            r.setting("cap", cap.to_string());
            r.push("z", z, None).push("log_z", z.ln(), None);
            Ok(r)
        }
        Command::Bp {
            model,
            damping,
            max_iters,
            tol,
            seed,
        } => {
            let (g, d) = load_model(model)?;
            let opts = BpOptions {
                damping: *damping,
                max_iters: *max_iters,
                tol: *tol,
            };
            let init = seed.map_or(BpInit::Uniform, BpInit::Random);
            let res = run_bp(&g, init, &opts)?;
            let objective = bethe_objective(&g, &res.beliefs).unwrap_or(res.log_zb);
            let mut r = ResultRecord::new("bp", d);
            if let Some(s) = seed {
                r = r.seed(*s);
            }
            r.setting("damping", damping)
                .setting("max_iters", max_iters)
                .setting("tol", tol);
            r.push("log_objective", objective, Some(*tol))
                .push("z_bethe", objective.exp(), Some(*tol))
                .push("iterations", res.state.iterations as f64, None)
                .push("residual", res.state.residual, Some(*tol))
                .push("converged", res.converged as u8 as f64, None);
            r.details(json!({ "beliefs": res.beliefs }));
            Ok(r)
        }
        Command::ZBethe {
            model,
            opt,
            refine_iters,
        } => {
            let (g, d) = load_model(model)?;
            let options = BetheOptions {
                restarts: opt.restarts,
                seed: opt.seed,
                refine_iters: *refine_iters,
                ..Default::default()
            };
            let sol = maximize_bethe_with(&g, &options)?;
            let mut r = ResultRecord::new("z-bethe", d).seed(opt.seed);
            optimizer_settings(&mut r, opt);
            r.setting("refine_iters", refine_iters);
            let source = match sol.source {
                CandidateSource::Bp { restart, converged } => {
                    json!({"kind": "bp", "restart": restart, "converged": converged})
                }
                CandidateSource::MeanField => json!({"kind": "mean_field"}),
            };
            r.push("z_bethe", sol.z(), None)
                .push("log_z_bethe", sol.log_z, None)
                .push("converged_runs", sol.converged_runs as f64, None);
            r.details(json!({ "source": source, "marginals": sol.marginals }));
            Ok(r)
        }
        Command::ZMeanfield { model, opt } => {
            let (g, d) = load_model(model)?;
            let sol = mean_field(&g, opt.restarts, opt.seed)?;
            let mut r = ResultRecord::new("z-meanfield", d).seed(opt.seed);
            r.setting("restarts", opt.restarts);
            r.push("z_mean_field", sol.log_z.exp(), None)
                .push("log_z_mean_field", sol.log_z, None)
                .push("converged", sol.converged as u8 as f64, None);
            r.details(json!({ "node_beliefs": sol.node_beliefs }));
            Ok(r)
        }
        Command::Cover { action } => cover(action),
        Command::Potts { potts, bounds, opt } => {
            let (model, d) = load_potts(potts)?;
            let mut r = ResultRecord::new("potts", d);
            potts_settings(&mut r, potts);
            let z = potts_partition(&model)?;
            r.push("z", z, None);
            if let Ok(zrc) = rc_partition(&model) {
                r.push("z_rc", zrc, Some(IDENTITY_TOL));
            }
            if *bounds {
                r = r.seed(opt.seed);
                optimizer_settings(&mut r, opt);
                let g = model.to_factor_graph()?;
                let zb = maximize_bethe(&g, opt.restarts, opt.seed)?.z();
                let zmf = mean_field(&g, opt.restarts, opt.seed)?.log_z.exp();
                r.push("z_bethe", zb, None).push("z_mean_field", zmf, None);
            }
            Ok(r)
        }
        Command::Rc { potts, subset } => {
            let (model, d) = load_potts(potts)?;
            let mut r = ResultRecord::new("rc", d);
            potts_settings(&mut r, potts);
            match subset {
                Some(bits) => {
                    if bits.iter().any(|&b| b > 1) {
                        return Err(Failure::Input("--subset takes 0/1 flags".into()));
                    }
                    let a = BitVector::from_bits(&bits.iter().map(|&b| b == 1).collect::<Vec<_>>());
                    r.setting("subset", bits);
                    r.push("weight", rc_weight(&model, &a)?, None)
                        .push("components", model.graph.count_components(&a)? as f64, None);
                }
                None => {
                    r.push("z_rc", rc_partition(&model)?, None);
                }
            }
            Ok(r)
        }
        Command::Counterexample {
            opt,
            convention,
            emit_model,
        } => counterexample(opt, *convention, *emit_model),
        Command::Wef { code, lambda, opt } => {
            let (s, d) = load_code(code)?;
            let w = weight_enumerator(&s, *lambda, opt.restarts, opt.seed)?;
            let mut r = ResultRecord::new("wef", d).seed(opt.seed);
            r.setting("lambda", lambda);
            optimizer_settings(&mut r, opt);
            r.push("exact", w.exact, None)
                .push("identity", w.identity, Some(IDENTITY_TOL));
            let mut ok = (w.exact - w.identity).abs() <= IDENTITY_TOL * w.exact;
            if let Some(b) = w.bethe {
                r.push("bethe", b, None);
                ok &= b <= w.exact * (1.0 + 1e-6);
            }
            if let Some(m) = w.mean_field {
                r.push("mean_field", m, None);
            }
            r.passed = Some(ok);
            Ok(r)
        }
        Command::Matroid {
            code,
            j,
            couplings,
            bounds,
            opt,
        } => {
            let (s, d) = load_code(code)?;
            let j = match (j, couplings) {
                (Some(j), None) => vec![*j; s.cols()],
                (None, Some(c)) => c.clone(),
                _ => return Err(Failure::Input("give exactly one of --j and --couplings".into())),
            };
            let mut r = ResultRecord::new("matroid", d);
            r.setting("couplings", &j);
            let z = matroid_potts_partition(&s, &j)?;
            r.push("z", z, None).push("rank", s.rank(&BitVector::ones(s.cols()))? as f64, None);
            let p: Vec<f64> = j.iter().map(|x| x.exp_m1()).collect();
            if p.iter().all(|&x| x >= 0.0) {
                r.push("z_rc", matroid_rc_partition(&s, &p)?, Some(IDENTITY_TOL));
            }
            if *bounds {
                r = r.seed(opt.seed);
                optimizer_settings(&mut r, opt);
                let g = matroid_factor_graph(&s, &j)?;
                let norm = (s.field().order() as f64).powi(s.rows() as i32);
                let zb = maximize_bethe(&g, opt.restarts, opt.seed)?.z() / norm;
                let zmf = mean_field(&g, opt.restarts, opt.seed)?.log_z.exp() / norm;
                r.push("z_bethe", zb, None).push("z_mean_field", zmf, None);
            }
            Ok(r)
        }
        Command::Hom {
            model,
            lsm_samples,
            bounds,
            opt,
        } => {
            let (text, d) = read_text(model)?;
            let m = HomFile::parse(&text)?.to_model()?;
            let mut r = ResultRecord::new("hom", d).seed(opt.seed);
            let z = hom_partition(&m)?;
            r.push("z_hom", z, None);
            if m.rank2().is_ok() {
                r.push("z_edge", edge_partition(&m)?, Some(IDENTITY_TOL));
                if *lsm_samples > 0 {
                    r.setting("lsm_samples", lsm_samples);
                    let rep = check_rank2_lsm(&m, *lsm_samples, opt.seed)?;
                    r.push("lsm_pairs_checked", rep.table.pairs_checked as f64, None)
                        .push("exchange_tuples_checked", rep.tuples_checked as f64, None)
                        .push("exchange_tuples_violated", rep.tuples_violated as f64, None)
                        .push("exchange_worst_slack", rep.worst_slack, None);
                    r.passed = Some(rep.holds());
                    r.details(json!({
                        "edge_weight_log_supermodular": rep.table.holds,
                        "table_witness": rep.table.witness.map(|(x, y)| (x.to_bits(), y.to_bits())),
                        "exchange_witness": rep.witness,
                    }));
                }
            }
            if *bounds {
                optimizer_settings(&mut r, opt);
                let b = hom_bounds(&m, opt.restarts, opt.seed)?;
                r.push("z_bethe", b.z_bethe, None)
                    .push("z_mean_field", b.z_mean_field, None);
            }
            Ok(r)
        }
        Command::CheckLsm { model } => {
            let (g, d) = load_model(model)?;
            let mut r = ResultRecord::new("check-lsm", d);
            let mut all = true;
            let mut per_factor = Vec::new();
            for a in 0..g.num_factors() {
                let t = BoolTable::from_binary_factor(&g, a)?;
                let rep = is_log_supermodular(&t)?;
                all &= rep.holds;
                per_factor.push(json!({
                    "factor": a,
                    "holds": rep.holds,
                    "witness": rep.witness.map(|(x, y)| (x.to_bits(), y.to_bits())),
                }));
            }
            r.push("factors", g.num_factors() as f64, None)
                .push("log_supermodular", all as u8 as f64, None);
            r.passed = Some(all);
            r.details(json!({ "factors": per_factor }));
            Ok(r)
        }
        Command::Verify {
            suite,
            trials,
            seed,
            restarts,
        } => {
            let opts = VerifyOptions {
                trials: *trials,
                seed: *seed,
                restarts: *restarts,
            };
            let rep = run_suite(suite, &opts)?;
            let trials_s = trials.map(|t| t.to_string()).unwrap_or_default();
            let mut r = ResultRecord::new("verify", arg_digest(&["verify", suite, &trials_s]))
                .seed(*seed);
            r.setting("suite", suite)
                .setting("restarts", restarts)
                .setting("metric", &rep.metric);
            r.push("trials", rep.trials as f64, None)
                .push("passed", rep.passed as f64, None)
                .push("worst", rep.worst, Some(rep.tolerance));
            for (k, v) in &rep.values {
                r.push(k, *v, None);
            }
            if suite == "counterexample" {
                r.conventions
                    .insert("counterexample".into(), convention_name(SELECTED_CONVENTION));
            }
            r.passed = Some(rep.all_passed());
            r.details(&rep.outcomes);
            Ok(r)
        }
    }
}

fn cover(action: &CoverAction) -> Outcome {
    match action {
        CoverAction::Sample { model, m, seed } => {
            let (g, d) = load_model(model)?;
            let spec = sample_cover(&g, *m, *seed)?;
            let mut r = ResultRecord::new("cover-sample", d).seed(*seed);
            r.setting("M", m);
            r.push("M", *m as f64, None)
                .push("incidences", spec.num_incidences() as f64, None);
            r.details(CoverFile::from_spec(&spec));
            Ok(r)
        }
        CoverAction::Build { cover } => {
            let (text, d) = read_text(cover)?;
            let spec = CoverFile::parse(&text)?.to_spec::<f64>()?;
            let lifted = spec.build()?;
            let mut r = ResultRecord::new("cover-build", d);
            r.push("M", lifted.m as f64, None)
                .push("variables", lifted.cover.num_variables() as f64, None)
                .push("factors", lifted.cover.num_factors() as f64, None);
            r.details(json!({
                "model": ModelFile::from_factor_graph(&lifted.cover),
                "copy_map": lifted.copy_map,
                "layer_map": lifted.layer_map,
            }));
            Ok(r)
        }
        CoverAction::Validate {
            base,
            candidate,
            map,
        } => {
            let (bt, bd) = read_text(base)?;
            let (ct, cd) = read_text(candidate)?;
            let (mt, md) = read_text(map)?;
            let base: FactorGraph64 = ModelFile::parse(&bt)?.to_factor_graph()?;
            let cand: FactorGraph64 = ModelFile::parse(&ct)?.to_factor_graph()?;
            let map: CopyMap = serde_json::from_str(&mt)
                .map_err(|e| Failure::Input(format!("copy map: {e}")))?;
            let diag = validate_cover(&cand, &base, &map);
            let mut r = ResultRecord::new("cover-validate", digest([bd, cd, md].concat().as_bytes()));
            r.push("valid", diag.valid as u8 as f64, None);
            if let Some(m) = diag.m {
                r.push("M", m as f64, None);
            }
            r.passed = Some(diag.valid);
            r.details(json!({ "problem": diag.problem }));
            Ok(r)
        }
        CoverAction::Estimate {
            model,
            m,
            samples,
            seed,
            exhaustive,
            limit,
        } => {
            let (g, d) = load_model(model)?;
            let est = if *exhaustive {
                bethe_estimate_exhaustive(&g, *m, *limit)?
            } else {
                bethe_estimate_via_covers(&g, *m, *samples, *seed)?
            };
            let mut r = ResultRecord::new("cover-estimate", d);
            if !exhaustive {
                r = r.seed(*seed);
            }
            r.setting("M", m).setting("exhaustive", exhaustive);
            r.push("samples", est.samples as f64, None)
                .push("mean_z", est.mean_z, None)
                .push("variance_z", est.variance_z, None)
                .push("estimate", est.estimate, None);
            r.details(json!({ "heuristic": est.heuristic }));
            Ok(r)
        }
    }
}

fn counterexample(opt: &OptimizerArgs, convention: Option<ConventionArg>, emit_model: bool) -> Outcome {
    let conventions: Vec<Convention> = match convention {
        Some(c) => vec![convention_of(c)],
        None => Convention::ALL.to_vec(),
    };
    let outcomes = conventions
        .iter()
        .map(|&c| {
            let g = counterexample_model::<f64>(c);
            let z = g.exact_partition()?;
            let z_bethe = maximize_bethe(&g, opt.restarts, opt.seed)?.z();
            Ok(ConventionOutcome {
                convention: c,
                z,
                z_bethe,
                gap: z_bethe - z,
            })
        })
        .collect::<Result<Vec<_>, bethe_core::Error>>()?;
    let reported = outcomes
        .iter()
        .find(|o| o.convention == SELECTED_CONVENTION)
        .or_else(|| select_convention(&outcomes))
        .expect("at least one convention");
    let mut r = ResultRecord::new(
        "counterexample",
        arg_digest(&["counterexample", &convention_name(reported.convention)]),
    )
    .seed(opt.seed);
    optimizer_settings(&mut r, opt);
    r.conventions
        .insert("reported".into(), convention_name(reported.convention));
    let rel = (reported.gap - COUNTEREXAMPLE_GAP).abs() / COUNTEREXAMPLE_GAP;
    r.push("z", reported.z, None)
        .push("z_bethe", reported.z_bethe, None)
        .push("gap", reported.gap, None)
        .push("target_gap", COUNTEREXAMPLE_GAP, None)
        .push("relative_error", rel, Some(COUNTEREXAMPLE_TOL));
    for o in &outcomes {
        r.push(&format!("gap_{}", convention_name(o.convention)), o.gap, None);
    }
    let mut details = json!({ "conventions": outcomes });
    if emit_model {
        details["model"] = serde_json::to_value(ModelFile::from_factor_graph(
            &counterexample_model::<f64>(reported.convention),
        ))
        .expect("model serializes");
    }
    r.details(details);
    Ok(r)
}
