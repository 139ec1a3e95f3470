//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Every tolerance is pinned below.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use fairalloc_core::analysis::{
    check_pf_inequality, sweep_alpha, sweep_alpha_with_results, verify_pareto_optimality, FeasibleSampler,
};
use fairalloc_core::experiments::{
    run_oracle_check, run_pofpoe, run_twoclass, OracleCheckConfig, PofPoeConfig, TwoClassConfig,
};
use fairalloc_core::fairness::{parse_alpha_list, phi, phi_gradient};
use fairalloc_core::joint::solve_joint_quadratic;
use fairalloc_core::outer::{self, check_trace_unimodality, grid_search};
use fairalloc_core::scenario_gen::{generate, RandomSpec};
use fairalloc_core::{CostModel, FairnessParam, OuterConfig, QuadraticUtility, Scenario, SolverConfig, SurplusProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const ORACLE_TOL: f64 = 1e-3;
const JOINT_REL_TOL: f64 = 1e-3;
const MAXMIN_EQUAL_TOL: f64 = 1e-4;
const PF_TOL: f64 = 1e-6;
const GRAD_REL_TOL: f64 = 1e-6;
const TREND_SE_MULTIPLE: f64 = 2.0;
const TWOCLASS_SW_FRACTION: f64 = 0.95;
const TWOCLASS_GAP_FRACTION: f64 = 0.95;
const TWOCLASS_GAIN_FRACTION: f64 = 0.90;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn all_alphas() -> Vec<FairnessParam> {
    parse_alpha_list("0,0.5,1,2,inf").unwrap()
}

/// Scenarios shared by the inequality and non-domination checks.
fn probe_scenarios() -> Vec<Scenario> {
    (0..20u64).map(|k| generate(&RandomSpec::pofpoe(7000 + k, 2 + (k % 3) as usize))).collect()
}

fn oracle_equivalence() -> Outcome {
    let mut cfg = OracleCheckConfig::new(50, 1000, all_alphas());
    cfg.tolerance = ORACLE_TOL;
    let rep = run_oracle_check(&cfg).unwrap();
    let worst = rep
        .checks
        .iter()
        .filter_map(|c| Some((c.solver? - c.oracle?).abs() / (1.0 + c.oracle?.abs())))
        .fold(0.0, f64::max);
    for f in &rep.failures {
        eprintln!("  oracle mismatch scenario {} alpha {}: {}\n  {}", f.scenario, f.alpha, f.detail, f.scenario_json);
    }
    outcome(
        rep.all_passed(),
        format!("{} checks, {} failed, worst scaled gap {worst:.2e}", rep.checks.len(), rep.failed),
    )
}

fn joint_cross_check() -> Outcome {
    let alphas = [FairnessParam::Alpha(0.0), FairnessParam::Alpha(1.0), FairnessParam::MaxMin];
    let solver = SolverConfig::default();
    let gaps: Vec<Result<f64, String>> = (0..100u64)
        .into_par_iter()
        .flat_map_iter(|k| {
            let sc = generate(&RandomSpec::pofpoe(5000 + k, 2 + (k % 19) as usize));
            alphas
                .iter()
                .map(|&f| {
                    let g = outer::solve(&sc, f, &OuterConfig::default(), &solver).map_err(|e| e.to_string())?;
                    let j = solve_joint_quadratic(&sc, f, &solver).map_err(|e| e.to_string())?;
                    let (gv, jv) = (g.result.objective.to_f64(), j.objective.to_f64());
                    Ok((gv - jv).abs() / gv.abs().max(1.0))
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let errors = gaps.iter().filter(|g| g.is_err()).count();
    let worst = gaps.iter().filter_map(|g| g.as_ref().ok()).fold(0.0f64, |a, &b| a.max(b));
    outcome(
        errors == 0 && worst <= JOINT_REL_TOL,
        format!("300 pairs, {errors} errors, worst relative gap {worst:.2e}"),
    )
}

fn two_user() -> Scenario {
    Scenario::new(
        vec![QuadraticUtility::new(2.0, 3.0).unwrap(), QuadraticUtility::new(2.0, 6.0).unwrap()],
        CostModel::unit_linear(),
    )
    .unwrap()
}

fn sweep_orderings() -> Outcome {
    let pts = sweep_alpha(&two_user(), &all_alphas(), &OuterConfig::default(), &SolverConfig::default()).unwrap();
    let total_dec = pts.windows(2).all(|w| w[1].total_surplus < w[0].total_surplus);
    let min_inc = pts.windows(2).all(|w| w[1].min_surplus > w[0].min_surplus);
    let mm = pts.last().unwrap();
    let gap = (mm.s.0[0] - mm.s.0[1]).abs();
    let totals: Vec<String> = pts.iter().map(|p| format!("{:.3}", p.total_surplus)).collect();
    let mins: Vec<String> = pts.iter().map(|p| format!("{:.3}", p.min_surplus)).collect();
    outcome(
        total_dec && min_inc && gap <= MAXMIN_EQUAL_TOL,
        format!("totals [{}], mins [{}], max-min |s1-s2| {gap:.1e}", totals.join(" "), mins.join(" ")),
    )
}

fn pf_inequality() -> Outcome {
    let pf = FairnessParam::Alpha(1.0);
    let mut worst = f64::NEG_INFINITY;
    let mut violations = 0;
    for (k, sc) in probe_scenarios().iter().enumerate() {
        let r = outer::solve(sc, pf, &OuterConfig::default(), &SolverConfig::default()).unwrap().result;
        let mut sampler = FeasibleSampler::new(sc, k as u64).unwrap();
        // half near the PF point, half anywhere in the feasible set
        let samples: Vec<SurplusProfile> = (0..1000)
            .map(|i| {
                if i % 2 == 0 { sampler.near(&r.x, 10f64.powi(-1 - i / 2 % 6)) } else { sampler.far() }
                    .expect("sampler found a feasible point")
                    .s
            })
            .collect();
        let rep = check_pf_inequality(&r.s, &samples).unwrap();
        worst = worst.max(rep.max_value);
        violations += rep.violations.len();
    }
    outcome(violations == 0 && worst <= PF_TOL, format!("20 x 1000 samples, {violations} violations, max {worst:.2e}"))
}

fn pareto_non_domination() -> Outcome {
    let alphas = all_alphas();
    let counts: Vec<(usize, usize)> = probe_scenarios()
        .par_iter()
        .enumerate()
        .map(|(k, sc)| {
            let (_, results) =
                sweep_alpha_with_results(sc, &alphas, &OuterConfig::default(), &SolverConfig::default()).unwrap();
            results
                .iter()
                .map(|r| {
                    let rep = verify_pareto_optimality(r, sc, 10_000, k as u64).unwrap();
                    if rep.dominating > 0 {
                        eprintln!(
                            "  scenario {k} alpha {}: {} dominating probes, e.g. {:?}",
                            r.alpha, rep.dominating, rep.examples[0]
                        );
                    }
                    (rep.probes, rep.dominating)
                })
                .fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1))
        })
        .collect();
    let probes: usize = counts.iter().map(|c| c.0).sum();
    let dominating: usize = counts.iter().map(|c| c.1).sum();
    outcome(
        dominating == 0 && probes == 20 * alphas.len() * 10_000,
        format!("{probes} probes, {dominating} dominating"),
    )
}

fn pofpoe_trend() -> Outcome {
    let cfg = PofPoeConfig {
        n_users: vec![5, 10, 20],
        trials: 100,
        alphas: vec![FairnessParam::Alpha(1.0)],
        seed: 2024,
        outer: OuterConfig::default(),
        solver: SolverConfig::default(),
    };
    let rep = run_pofpoe(&cfg).unwrap();
    let at = |n: usize| rep.summary.iter().find(|s| s.n_users == n).unwrap();
    let (s5, s20) = (at(5), at(20));
    let (pof5, pof20) = (s5.pof.unwrap(), s20.pof.unwrap());
    let (poe5, poe20) = (s5.poe.unwrap(), s20.poe.unwrap());
    let se = |a: f64, b: f64| (a * a + b * b).sqrt();
    let pof_margin = (pof20.mean - pof5.mean) / se(pof20.std_error(), pof5.std_error());
    let poe_margin = (poe20.mean - poe5.mean) / se(poe20.std_error(), poe5.std_error());
    let all_below_one = rep.records.iter().all(|r| r.pof < 1.0);
    outcome(
        rep.failures.is_empty() && pof_margin > TREND_SE_MULTIPLE && poe_margin > TREND_SE_MULTIPLE && all_below_one,
        format!(
            "PoF {:.4} -> {:.4} ({pof_margin:.1} SE), PoE {:.4} -> {:.4} ({poe_margin:.1} SE), {} failures",
            pof5.mean,
            pof20.mean,
            poe5.mean,
            poe20.mean,
            rep.failures.len()
        ),
    )
}

fn twoclass_disparity() -> Outcome {
    let rep = run_twoclass(&TwoClassConfig::new(200, 77)).unwrap();
    let gain = rep.classes.iter().find(|c| c.class == "class1").unwrap().positive_gain_x;
    outcome(
        rep.failures.is_empty()
            && rep.trials.len() == 200
            && rep.sw_favors_class2_fraction >= TWOCLASS_SW_FRACTION
            && rep.pf_narrows_gap_fraction >= TWOCLASS_GAP_FRACTION
            && gain >= TWOCLASS_GAIN_FRACTION,
        format!(
            "SW favors class 2 in {:.1}%, PF narrows gap in {:.1}%, class 1 gains in {:.1}%",
            100.0 * rep.sw_favors_class2_fraction,
            100.0 * rep.pf_narrows_gap_fraction,
            100.0 * gain
        ),
    )
}

fn gradient_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let alphas = [0.0, 0.5, 1.0, 2.0];
    let mut worst = 0.0f64;
    for k in 0..1000 {
        let f = FairnessParam::Alpha(alphas[k % alphas.len()]);
        let n = rng.gen_range(1..=6);
        let s: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..10.0)).collect();
        let g = phi_gradient(&SurplusProfile(s.clone()), f).unwrap();
        for i in 0..n {
            let h = 1e-4 * s[i];
            let mut up = s.clone();
            let mut dn = s.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (phi(&SurplusProfile(up), f).unwrap().to_f64() - phi(&SurplusProfile(dn), f).unwrap().to_f64())
                / (2.0 * h);
            worst = worst.max((g[i] - fd).abs() / g[i].abs());
        }
    }
    outcome(worst <= GRAD_REL_TOL, format!("1000 profiles, worst relative error {worst:.2e}"))
}

fn unimodality() -> Outcome {
    let alphas = [FairnessParam::Alpha(0.0), FairnessParam::Alpha(1.0), FairnessParam::MaxMin];
    let sizes = [2, 5, 10, 20];
    let bad: Vec<String> = (0..100u64)
        .into_par_iter()
        .flat_map_iter(|k| {
            let sc = generate(&RandomSpec::pofpoe(9000 + k, sizes[k as usize % sizes.len()]));
            alphas
                .iter()
                .filter_map(|&f| {
                    let out = grid_search(&sc, f, &OuterConfig::default(), &SolverConfig::default()).ok()?;
                    assert_eq!(out.trace.len(), 200);
                    let rep = check_trace_unimodality(&out.trace);
                    (!rep.unimodal).then(|| {
                        format!("seed {} alpha {f} dips at {:?}\n  {}", 9000 + k, rep.violations, sc.to_json_string())
                    })
                })
                .collect::<Vec<_>>()
        })
        .collect();
    for b in &bad {
        eprintln!("  unimodality violation: {b}");
    }
    outcome(bad.is_empty(), format!("300 traces of 200 points, {} violations", bad.len()))
}

fn run_cli(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_fairalloc")).args(args).status().map(|s| s.success()).unwrap_or(false)
}

fn determinism() -> Outcome {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance_determinism");
    std::fs::create_dir_all(&dir).unwrap();
    let scenario = dir.join("two_user.json");
    std::fs::write(&scenario, two_user().to_json_string()).unwrap();
    let scenario = scenario.to_str().unwrap().to_string();
    let experiments: Vec<(&str, Vec<&str>)> = vec![
        ("sweep", vec!["sweep", "--scenario", &scenario]),
        ("pofpoe", vec!["pofpoe", "--n-users", "3,8", "--trials", "12", "--seed", "5"]),
        ("twoclass", vec!["twoclass", "--trials", "12", "--seed", "5"]),
    ];
    let mut mismatched = Vec::new();
    for (name, args) in &experiments {
        let outputs: Vec<Option<Vec<u8>>> = (0..2)
            .map(|run| {
                let out: &Path = &dir.join(format!("{name}_{run}.csv"));
                let mut full = args.clone();
                full.extend(["--out", out.to_str().unwrap()]);
                run_cli(&full).then(|| std::fs::read(out).ok()).flatten()
            })
            .collect();
        if outputs[0].is_none() || outputs[0] != outputs[1] {
            mismatched.push(*name);
        }
    }
    outcome(mismatched.is_empty(), format!("sweep/pofpoe/twoclass reruns, mismatched: {mismatched:?}"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("oracle equivalence", oracle_equivalence),
        ("joint vs grid+refine", joint_cross_check),
        ("two-user sweep orderings", sweep_orderings),
        ("proportional-fairness inequality", pf_inequality),
        ("Pareto non-domination", pareto_non_domination),
        ("PoF/PoE scaling trend", pofpoe_trend),
        ("two-class disparity reduction", twoclass_disparity),
        ("gradient checks", gradient_checks),
        ("grid-trace unimodality", unimodality),
        ("CLI determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} [{}] {name}: {} ({:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
