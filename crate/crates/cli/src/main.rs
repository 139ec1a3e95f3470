//! `fairalloc`: solve single scenarios and run the seeded experiments.
//!
//! Exit codes: 0 success, 1 input or usage error, 2 infeasible scenario,
//! 3 oracle-check disagreement.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use fairalloc_core::analysis::sweep_alpha;
use fairalloc_core::experiments::{
    pofpoe_csv, run_oracle_check, run_pofpoe, run_twoclass, sweep_csv, twoclass_csv, OracleCheckConfig, PofPoeConfig,
    TwoClassConfig,
};
use fairalloc_core::fairness::parse_alpha_list;
use fairalloc_core::{outer, Error, FairnessParam, OuterConfig, Scenario, SolverConfig};

#[derive(Parser)]
#[command(name = "fairalloc", version, about = "Fair energy allocation solver and experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario for one α and print the result as JSON.
    Solve {
        #[arg(long)]
        scenario: PathBuf,
        /// A number, or `inf` for max-min.
        #[arg(long, default_value = "1")]
        alpha: FairnessParam,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Solve for each α in a list and write one CSV row per α.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "0,0.5,1,2,inf", value_parser = alpha_list)]
        alpha: AlphaList,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// PoF/PoE over random scenarios of several sizes.
    Pofpoe {
        #[arg(long, default_value = "5,10,20", value_delimiter = ',')]
        n_users: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value = "0,0.5,1,2,inf", value_parser = alpha_list)]
        alpha: AlphaList,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV path; the summary goes next to it as `<stem>.summary.json`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Social welfare vs proportional fairness on two user classes.
    Twoclass {
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Compare the solver with the brute-force oracle on small scenarios.
    OracleCheck {
        /// Number of random scenarios.
        #[arg(long, default_value_t = 50)]
        trials: usize,
        /// Scenario sizes, cycled; each at most 3.
        #[arg(long, default_value = "2", value_delimiter = ',')]
        n_users: Vec<usize>,
        #[arg(long, default_value = "0,0.5,1,2,inf", value_parser = alpha_list)]
        alpha: AlphaList,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        search: SearchArgs,
    },
}

#[derive(Args, Clone, Copy)]
struct SearchArgs {
    /// Outer grid step (default l_max / 200).
    #[arg(long)]
    delta_l: Option<f64>,
    /// Upper end of the load search.
    #[arg(long)]
    l_max: Option<f64>,
    /// Skip golden-section refinement around the best grid point.
    #[arg(long)]
    no_refine: bool,
}

impl SearchArgs {
    fn outer(self) -> OuterConfig {
        OuterConfig { delta_l: self.delta_l, l_max: self.l_max, refine: !self.no_refine, ..OuterConfig::default() }
    }
}

#[derive(Clone)]
struct AlphaList(Vec<FairnessParam>);

fn alpha_list(s: &str) -> Result<AlphaList, String> {
    parse_alpha_list(s).map(AlphaList).map_err(|e| e.to_string())
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(err: anyhow::Error) -> Self {
        let code = match err.downcast_ref::<Error>() {
            Some(Error::Infeasible(_) | Error::EmptySet { .. }) => 2,
            _ => 1,
        };
        Self { code, err }
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        anyhow::Error::from(err).into()
    }
}

fn load(path: &Path) -> Result<Scenario, Failure> {
    Scenario::load(path).with_context(|| format!("reading scenario {}", path.display())).map_err(Failure::from)
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn summary_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    out.with_file_name(format!("{stem}.summary.json"))
}

fn emit_with_summary(out: Option<&Path>, csv: &str, summary: &serde_json::Value) -> Result<(), Failure> {
    let json = serde_json::to_string_pretty(summary).context("encoding summary")? + "\n";
    match out {
        Some(p) => {
            emit(Some(p), csv)?;
            emit(Some(&summary_path(p)), &json)?;
        }
        None => {
            print!("{csv}");
            eprint!("{json}");
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let solver = SolverConfig::default();
    match cli.command {
        Command::Solve { scenario, alpha, out, search } => {
            let sc = load(&scenario)?;
            let res = outer::solve(&sc, alpha, &search.outer(), &solver)?.result;
            let json = serde_json::to_string_pretty(&res).context("encoding result")? + "\n";
            emit(out.as_deref(), &json)?;
        }
        Command::Sweep { scenario, alpha, out, search } => {
            let sc = load(&scenario)?;
            let points = sweep_alpha(&sc, &alpha.0, &search.outer(), &solver)?;
            emit(out.as_deref(), &sweep_csv(&points)?)?;
        }
        Command::Pofpoe { n_users, trials, alpha, seed, out, search } => {
            let cfg = PofPoeConfig { n_users, trials, alphas: alpha.0, seed, outer: search.outer(), solver };
            let rep = run_pofpoe(&cfg)?;
            let summary = serde_json::json!({
                "provenance": rep.provenance,
                "trials": cfg.trials,
                "failure_count": rep.failures.len(),
                "failures": rep.failures,
                "summary": rep.summary,
            });
            emit_with_summary(out.as_deref(), &pofpoe_csv(&rep.records)?, &summary)?;
        }
        Command::Twoclass { trials, seed, out, search } => {
            let mut cfg = TwoClassConfig::new(trials, seed);
            cfg.outer = search.outer();
            let rep = run_twoclass(&cfg)?;
            let summary = serde_json::json!({
                "provenance": rep.provenance,
                "failure_count": rep.failures.len(),
                "failures": rep.failures,
                "classes": rep.classes,
                "sw_favors_class2_fraction": rep.sw_favors_class2_fraction,
                "pf_narrows_gap_fraction": rep.pf_narrows_gap_fraction,
                "trials": rep.trials,
            });
            emit_with_summary(out.as_deref(), &twoclass_csv(&rep.records)?, &summary)?;
        }
        Command::OracleCheck { trials, n_users, alpha, seed, out, search } => {
            let mut cfg = OracleCheckConfig::new(trials, seed, alpha.0);
            cfg.n_users = n_users;
            cfg.outer = search.outer();
            let rep = run_oracle_check(&cfg)?;
            let json = serde_json::to_string_pretty(&rep).context("encoding report")? + "\n";
            emit(out.as_deref(), &json)?;
            eprintln!("oracle-check: {} passed, {} failed", rep.passed, rep.failed);
            if !rep.all_passed() {
                return Err(Failure { code: 3, err: anyhow::anyhow!("{} solver/oracle disagreements", rep.failed) });
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}
