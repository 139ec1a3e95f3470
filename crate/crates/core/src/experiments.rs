//! Seeded experiment recipes and their CSV/JSON emission.
//!
//! Trials run on the rayon pool; each derives its scenario from
//! `seed + trial` and results are assembled in trial order, so output bytes
//! depend only on the inputs. Floats are written as `{:.16e}` (17
//! significant digits), which parses back to the identical `f64`.

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{sweep_alpha, ParetoPoint};
use crate::error::{Error, Result};
use crate::fairness::FairnessParam;
use crate::inner::SolverConfig;
use crate::model::Scenario;
use crate::oracle::{brute_force_joint, OracleConfig, MAX_USERS};
use crate::outer::{self, OuterConfig};
use crate::scenario_gen::{generate, RandomSpec, CLASS1, CLASS2};

pub const SCHEMA_VERSION: u32 = 1;

/// Float formatting used in every CSV.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn to_csv(header: &[String], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

fn trial_seed(seed: u64, trial: usize) -> u64 {
    seed.wrapping_add(trial as u64)
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub schema_version: u32,
    pub experiment: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub version: String,
}

impl Provenance {
    fn new(experiment: &str, seed: u64, config: &impl Serialize) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            experiment: experiment.into(),
            seed,
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

/// Summary of a sample; percentiles use the nearest-rank method
/// (`sorted[ceil(p·n) − 1]`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator); 0 for a single value.
    pub std: f64,
    pub p5: f64,
    pub p95: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std =
            if n > 1 { (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Self { count: n, mean, std, p5: nearest_rank(&sorted, 0.05), p95: nearest_rank(&sorted, 0.95) })
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        self.std / (self.count as f64).sqrt()
    }
}

pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialFailure {
    pub n_users: usize,
    pub trial: usize,
    pub error: String,
}

// ---------------------------------------------------------------- sweep

pub fn sweep_csv(points: &[ParetoPoint]) -> Result<String> {
    let n = points.first().map_or(0, |p| p.x.len());
    let mut header = vec!["alpha".to_string(), "l".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.extend((1..=n).map(|i| format!("s_{i}")));
    header.extend(["total_surplus", "min_surplus", "pof", "poe"].map(String::from));
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            let mut r = vec![p.alpha.to_string(), fmt_f64(p.l)];
            r.extend(p.x.iter().copied().map(fmt_f64));
            r.extend(p.s.0.iter().copied().map(fmt_f64));
            r.extend([fmt_f64(p.total_surplus), fmt_f64(p.min_surplus), fmt_opt(p.pof), fmt_opt(p.poe)]);
            r
        })
        .collect();
    to_csv(&header, &rows)
}

// --------------------------------------------------------------- pofpoe

#[derive(Debug, Clone, Serialize)]
pub struct PofPoeConfig {
    pub n_users: Vec<usize>,
    pub trials: usize,
    pub alphas: Vec<FairnessParam>,
    pub seed: u64,
    pub outer: OuterConfig,
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PofPoeRecord {
    pub n_users: usize,
    pub trial: usize,
    pub alpha: FairnessParam,
    pub pof: f64,
    pub poe: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PofPoeSummary {
    pub n_users: usize,
    pub alpha: FairnessParam,
    pub pof: Option<Summary>,
    pub poe: Option<Summary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PofPoeReport {
    pub provenance: Provenance,
    pub records: Vec<PofPoeRecord>,
    pub failures: Vec<TrialFailure>,
    pub summary: Vec<PofPoeSummary>,
}

/// The requested α list plus the α = 0 and max-min anchors PoF/PoE need.
fn with_anchors(alphas: &[FairnessParam]) -> Vec<FairnessParam> {
    let mut all = alphas.to_vec();
    for anchor in [FairnessParam::Alpha(0.0), FairnessParam::MaxMin] {
        if !all.contains(&anchor) {
            all.push(anchor);
        }
    }
    all
}

pub fn run_pofpoe(cfg: &PofPoeConfig) -> Result<PofPoeReport> {
    if cfg.trials == 0 || cfg.alphas.is_empty() || cfg.n_users.contains(&0) || cfg.n_users.is_empty() {
        return Err(Error::InvalidConfig("pofpoe needs trials >= 1, a non-empty alpha list and n_users >= 1".into()));
    }
    cfg.solver.validate()?;
    let swept = with_anchors(&cfg.alphas);
    let jobs: Vec<(usize, usize)> = cfg.n_users.iter().flat_map(|&n| (0..cfg.trials).map(move |t| (n, t))).collect();
    let outcomes: Vec<Result<Vec<ParetoPoint>>> = jobs
        .par_iter()
        .map(|&(n, t)| {
            let sc = generate(&RandomSpec::pofpoe(trial_seed(cfg.seed, t), n));
            sweep_alpha(&sc, &swept, &cfg.outer, &cfg.solver)
        })
        .collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (&(n, t), out) in jobs.iter().zip(outcomes) {
        match out {
            Ok(points) => records.extend(cfg.alphas.iter().map(|&a| {
                let p = points.iter().find(|p| p.alpha == a).expect("swept alpha");
                PofPoeRecord {
                    n_users: n,
                    trial: t,
                    alpha: a,
                    pof: p.pof.expect("anchored"),
                    poe: p.poe.expect("anchored"),
                }
            })),
            Err(e) => failures.push(TrialFailure { n_users: n, trial: t, error: e.to_string() }),
        }
    }
    let summary = pofpoe_summary(&cfg.n_users, &cfg.alphas, &records);
    Ok(PofPoeReport { provenance: Provenance::new("pofpoe", cfg.seed, cfg), records, failures, summary })
}

pub fn pofpoe_summary(n_users: &[usize], alphas: &[FairnessParam], records: &[PofPoeRecord]) -> Vec<PofPoeSummary> {
    let mut out = Vec::new();
    for &n in n_users {
        for &a in alphas {
            let sel: Vec<&PofPoeRecord> = records.iter().filter(|r| r.n_users == n && r.alpha == a).collect();
            let pof: Vec<f64> = sel.iter().map(|r| r.pof).collect();
            let poe: Vec<f64> = sel.iter().map(|r| r.poe).collect();
            out.push(PofPoeSummary { n_users: n, alpha: a, pof: Summary::of(&pof), poe: Summary::of(&poe) });
        }
    }
    out
}

pub fn pofpoe_csv(records: &[PofPoeRecord]) -> Result<String> {
    let header = ["n_users", "trial", "alpha", "pof", "poe"].map(String::from);
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| vec![r.n_users.to_string(), r.trial.to_string(), r.alpha.to_string(), fmt_f64(r.pof), fmt_f64(r.poe)])
        .collect();
    to_csv(&header, &rows)
}

// ------------------------------------------------------------- twoclass

#[derive(Debug, Clone, Serialize)]
pub struct TwoClassConfig {
    pub trials: usize,
    pub seed: u64,
    pub class_sizes: (usize, usize),
    pub xbar: f64,
    pub outer: OuterConfig,
    pub solver: SolverConfig,
}

impl TwoClassConfig {
    pub fn new(trials: usize, seed: u64) -> Self {
        Self {
            trials,
            seed,
            class_sizes: (10, 10),
            xbar: 10.0,
            outer: OuterConfig::default(),
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoClassRecord {
    pub trial: usize,
    pub user: usize,
    pub class: String,
    pub x_sw: f64,
    pub x_pf: f64,
    pub s_sw: f64,
    pub s_pf: f64,
    pub gain_x: f64,
    pub gain_s: f64,
}

/// Class-mean allocations of one trial under SW and PF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoClassTrial {
    pub trial: usize,
    pub class1_mean_x_sw: f64,
    pub class2_mean_x_sw: f64,
    pub class1_mean_x_pf: f64,
    pub class2_mean_x_pf: f64,
}

impl TwoClassTrial {
    pub fn sw_favors_class2(&self) -> bool {
        self.class2_mean_x_sw > self.class1_mean_x_sw
    }

    pub fn pf_narrows_gap(&self) -> bool {
        (self.class1_mean_x_pf - self.class2_mean_x_pf).abs() < (self.class1_mean_x_sw - self.class2_mean_x_sw).abs()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassSummary {
    pub class: String,
    pub users: usize,
    pub x_sw: Option<Summary>,
    pub x_pf: Option<Summary>,
    pub gain_x: Option<Summary>,
    pub gain_s: Option<Summary>,
    /// Fraction of this class's user records with `gain_x > 0`.
    pub positive_gain_x: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TwoClassReport {
    pub provenance: Provenance,
    pub records: Vec<TwoClassRecord>,
    pub trials: Vec<TwoClassTrial>,
    pub failures: Vec<TrialFailure>,
    pub classes: Vec<ClassSummary>,
    pub sw_favors_class2_fraction: f64,
    pub pf_narrows_gap_fraction: f64,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn two_class_trial(cfg: &TwoClassConfig, t: usize) -> Result<Vec<TwoClassRecord>> {
    let mut spec = RandomSpec::two_class_sized(trial_seed(cfg.seed, t), cfg.class_sizes.0, cfg.class_sizes.1);
    spec.xbar = cfg.xbar;
    let sc = generate(&spec);
    let sw = outer::solve(&sc, FairnessParam::Alpha(0.0), &cfg.outer, &cfg.solver)?.result;
    let pf = outer::solve(&sc, FairnessParam::Alpha(1.0), &cfg.outer, &cfg.solver)?.result;
    let labels = sc.labels().expect("two-class scenarios are labeled");
    Ok((0..sc.n_users())
        .map(|i| TwoClassRecord {
            trial: t,
            user: i + 1,
            class: labels[i].clone(),
            x_sw: sw.x[i],
            x_pf: pf.x[i],
            s_sw: sw.s.0[i],
            s_pf: pf.s.0[i],
            gain_x: pf.x[i] - sw.x[i],
            gain_s: pf.s.0[i] - sw.s.0[i],
        })
        .collect())
}

pub fn run_twoclass(cfg: &TwoClassConfig) -> Result<TwoClassReport> {
    if cfg.trials == 0 || cfg.class_sizes.0 == 0 || cfg.class_sizes.1 == 0 {
        return Err(Error::InvalidConfig("twoclass needs trials >= 1 and two non-empty classes".into()));
    }
    cfg.solver.validate()?;
    let outcomes: Vec<Result<Vec<TwoClassRecord>>> =
        (0..cfg.trials).into_par_iter().map(|t| two_class_trial(cfg, t)).collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (t, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(r) => records.extend(r),
            Err(e) => failures.push(TrialFailure {
                n_users: cfg.class_sizes.0 + cfg.class_sizes.1,
                trial: t,
                error: e.to_string(),
            }),
        }
    }
    let trials = twoclass_trials(&records);
    let classes = [CLASS1, CLASS2].iter().map(|c| class_summary(c, &records)).collect();
    let frac = |pred: fn(&TwoClassTrial) -> bool| {
        trials.iter().filter(|t| pred(t)).count() as f64 / trials.len().max(1) as f64
    };
    Ok(TwoClassReport {
        provenance: Provenance::new("twoclass", cfg.seed, cfg),
        sw_favors_class2_fraction: frac(TwoClassTrial::sw_favors_class2),
        pf_narrows_gap_fraction: frac(TwoClassTrial::pf_narrows_gap),
        records,
        trials,
        failures,
        classes,
    })
}

/// Per-trial class means, in record order.
pub fn twoclass_trials(records: &[TwoClassRecord]) -> Vec<TwoClassTrial> {
    let mut out: Vec<TwoClassTrial> = Vec::new();
    let mut start = 0;
    while start < records.len() {
        let t = records[start].trial;
        let end = start + records[start..].iter().take_while(|r| r.trial == t).count();
        let chunk = &records[start..end];
        let m = |class: &str, f: fn(&TwoClassRecord) -> f64| mean(chunk.iter().filter(|r| r.class == class).map(f));
        out.push(TwoClassTrial {
            trial: t,
            class1_mean_x_sw: m(CLASS1, |r| r.x_sw),
            class2_mean_x_sw: m(CLASS2, |r| r.x_sw),
            class1_mean_x_pf: m(CLASS1, |r| r.x_pf),
            class2_mean_x_pf: m(CLASS2, |r| r.x_pf),
        });
        start = end;
    }
    out
}

pub fn class_summary(class: &str, records: &[TwoClassRecord]) -> ClassSummary {
    let sel: Vec<&TwoClassRecord> = records.iter().filter(|r| r.class == class).collect();
    let col = |f: fn(&TwoClassRecord) -> f64| Summary::of(&sel.iter().map(|r| f(r)).collect::<Vec<_>>());
    ClassSummary {
        class: class.into(),
        users: sel.len(),
        x_sw: col(|r| r.x_sw),
        x_pf: col(|r| r.x_pf),
        gain_x: col(|r| r.gain_x),
        gain_s: col(|r| r.gain_s),
        positive_gain_x: sel.iter().filter(|r| r.gain_x > 0.0).count() as f64 / sel.len().max(1) as f64,
    }
}

pub fn twoclass_csv(records: &[TwoClassRecord]) -> Result<String> {
    let header = ["trial", "user", "class", "x_sw", "x_pf", "s_sw", "s_pf", "gain_x", "gain_s"].map(String::from);
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            vec![
                r.trial.to_string(),
                r.user.to_string(),
                r.class.clone(),
                fmt_f64(r.x_sw),
                fmt_f64(r.x_pf),
                fmt_f64(r.s_sw),
                fmt_f64(r.s_pf),
                fmt_f64(r.gain_x),
                fmt_f64(r.gain_s),
            ]
        })
        .collect();
    to_csv(&header, &rows)
}

// --------------------------------------------------------- oracle check

#[derive(Debug, Clone, Serialize)]
pub struct OracleCheckConfig {
    pub n_scenarios: usize,
    pub seed: u64,
    pub alphas: Vec<FairnessParam>,
    /// Scenario sizes, cycled over scenario indices; each at most three.
    pub n_users: Vec<usize>,
    /// Agreement bound `|solver − oracle| ≤ tolerance · (1 + |oracle|)`.
    pub tolerance: f64,
    pub outer: OuterConfig,
    pub solver: SolverConfig,
    pub oracle: OracleConfig,
}

impl OracleCheckConfig {
    pub fn new(n_scenarios: usize, seed: u64, alphas: Vec<FairnessParam>) -> Self {
        Self {
            n_scenarios,
            seed,
            alphas,
            n_users: vec![2],
            tolerance: 1e-3,
            outer: OuterConfig::default(),
            solver: SolverConfig::default(),
            oracle: OracleConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleCheck {
    pub scenario: usize,
    pub n_users: usize,
    pub alpha: FairnessParam,
    pub solver: Option<f64>,
    pub oracle: Option<f64>,
    pub pass: bool,
    /// Set when a side errored or the values disagree.
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleFailure {
    pub scenario: usize,
    pub alpha: FairnessParam,
    pub detail: String,
    /// Replayable scenario JSON.
    pub scenario_json: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleCheckReport {
    pub provenance: Provenance,
    pub checks: Vec<OracleCheck>,
    pub failures: Vec<OracleFailure>,
    pub passed: usize,
    pub failed: usize,
}

impl OracleCheckReport {
    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }
}

fn compare(
    sc: &Scenario,
    f: FairnessParam,
    cfg: &OracleCheckConfig,
) -> (Option<f64>, Option<f64>, bool, Option<String>) {
    let solver = outer::solve(sc, f, &cfg.outer, &cfg.solver).map(|o| o.result.objective.to_f64());
    let oracle = brute_force_joint(sc, f, &cfg.oracle).map(|r| r.objective.to_f64());
    match (solver, oracle) {
        (Ok(s), Ok(o)) => {
            let agree = s == o || (s - o).abs() <= cfg.tolerance * (1.0 + o.abs());
            let detail = (!agree).then(|| format!("solver {s:e} vs oracle {o:e}"));
            (Some(s), Some(o), agree, detail)
        }
        (Err(Error::Infeasible(_)), Err(Error::Infeasible(_))) => (None, None, true, None),
        (s, o) => {
            let detail = format!(
                "solver {} / oracle {}",
                s.as_ref().map_or_else(|e| e.to_string(), |v| v.to_string()),
                o.as_ref().map_or_else(|e| e.to_string(), |v| v.to_string())
            );
            (s.ok(), o.ok(), false, Some(detail))
        }
    }
}

pub fn run_oracle_check(cfg: &OracleCheckConfig) -> Result<OracleCheckReport> {
    if cfg.n_scenarios == 0 || cfg.alphas.is_empty() || cfg.n_users.is_empty() {
        return Err(Error::InvalidConfig("oracle-check needs scenarios >= 1, alphas and user counts".into()));
    }
    if let Some(&n) = cfg.n_users.iter().find(|&&n| n == 0 || n > MAX_USERS) {
        return Err(Error::InvalidConfig(format!("oracle-check supports 1..={MAX_USERS} users, got {n}")));
    }
    cfg.solver.validate()?;
    let per: Vec<(Scenario, Vec<OracleCheck>)> = (0..cfg.n_scenarios)
        .into_par_iter()
        .map(|k| {
            let n = cfg.n_users[k % cfg.n_users.len()];
            let sc = generate(&RandomSpec::pofpoe(trial_seed(cfg.seed, k), n));
            let checks = cfg
                .alphas
                .iter()
                .map(|&a| {
                    let (solver, oracle, pass, detail) = compare(&sc, a, cfg);
                    OracleCheck { scenario: k, n_users: n, alpha: a, solver, oracle, pass, detail }
                })
                .collect();
            (sc, checks)
        })
        .collect();
    let mut checks = Vec::new();
    let mut failures = Vec::new();
    for (sc, cs) in per {
        for c in cs {
            if !c.pass {
                failures.push(OracleFailure {
                    scenario: c.scenario,
                    alpha: c.alpha,
                    detail: c.detail.clone().unwrap_or_default(),
                    scenario_json: sc.to_json_string(),
                });
            }
            checks.push(c);
        }
    }
    let failed = failures.len();
    Ok(OracleCheckReport {
        provenance: Provenance::new("oracle-check", cfg.seed, cfg),
        passed: checks.len() - failed,
        checks,
        failures,
        failed,
    })
}
