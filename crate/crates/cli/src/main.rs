//! cvtmle: cross-validated targeted maximum likelihood estimation of ATE,
//! TSM, and VTE, plus a Monte Carlo verification harness.
//!
//! Exit codes: 0 success (including flagged max-iter non-convergence),
//! 2 config/data error, 3 estimation failure, 4 simulation with more than
//! 5% failed replicates.

mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cvtmle_core::data::{load_csv, make_folds};
use cvtmle_core::pipeline::run_with_nuisances;
use cvtmle_core::sim::{compare_variants, run_monte_carlo, DgpSpec};

use config::{resolve_estimate, resolve_simulate, EstimatePlan, SimulatePlan};
use output::single_line_diagnostic;

#[derive(Parser)]
#[command(name = "cvtmle", version, about = "Cross-validated TMLE for ATE, TSM, and VTE")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a parameter from a CSV dataset.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo study against a known generating process.
    Simulate(SimulateArgs),
}

#[derive(Args)]
pub struct EstimateArgs {
    /// CSV dataset; every column besides treatment and outcome is a covariate.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Treatment column name (binary 0/1). [default: A]
    #[arg(long)]
    treatment_col: Option<String>,
    /// Outcome column name. [default: Y]
    #[arg(long)]
    outcome_col: Option<String>,
    /// Target parameter: ate, tsm, or vte.
    #[arg(long)]
    param: Option<String>,
    /// Targeting variant: stacked or foldwise. [default: stacked]
    #[arg(long)]
    variant: Option<String>,
    /// Number of cross-validation folds. [default: 10]
    #[arg(long)]
    k: Option<usize>,
    /// RNG seed (overrides config file and CVTMLE_SEED). [default: 1]
    #[arg(long)]
    seed: Option<u64>,
    /// Outcome-model candidates, comma-separated. [default: mean,glm,glm-interact]
    #[arg(long)]
    q_learners: Option<String>,
    /// Propensity candidates, comma-separated. [default: mean,glm]
    #[arg(long)]
    g_learners: Option<String>,
    /// Lower propensity truncation bound. [default: 0.025]
    #[arg(long)]
    g_lo: Option<f64>,
    /// Upper propensity truncation bound. [default: 0.975]
    #[arg(long)]
    g_hi: Option<f64>,
    /// Targeting iteration cap. [default: 100]
    #[arg(long)]
    max_iter: Option<usize>,
    /// CI significance level. [default: 0.05]
    #[arg(long)]
    alpha: Option<f64>,
    /// Report JSON path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dump stacked nuisances to CSV (row,fold,Q0_A,Q0_1,Q0_0,g1).
    #[arg(long)]
    dump_nuisances: Option<PathBuf>,
    /// Dump the targeting trace to CSV (k,eps,ic_mean,sigma_hat,loglik).
    #[arg(long)]
    dump_trace: Option<PathBuf>,
    /// Dump influence-curve components to CSV (row,d_Y,d_W,total).
    #[arg(long)]
    dump_ic: Option<PathBuf>,
    /// TOML config file; keys mirror the long flag names, flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Generating-process preset: dgp-a, dgp-b, or dgp-c.
    #[arg(long)]
    dgp: Option<String>,
    /// Sample size per replicate.
    #[arg(long)]
    n: Option<usize>,
    /// Number of replicates.
    #[arg(long)]
    reps: Option<u64>,
    /// Target parameter: ate, tsm, or vte.
    #[arg(long)]
    param: Option<String>,
    /// Targeting variant: stacked or foldwise. [default: stacked]
    #[arg(long)]
    variant: Option<String>,
    /// Run both variants on identical replicates and report paired summaries.
    #[arg(long)]
    compare_variants: bool,
    /// Worker threads for replicates. [default: 1 (sequential)]
    #[arg(long)]
    jobs: Option<usize>,
    /// Number of cross-validation folds. [default: 10]
    #[arg(long)]
    k: Option<usize>,
    /// Base RNG seed (overrides config file and CVTMLE_SEED). [default: 1]
    #[arg(long)]
    seed: Option<u64>,
    /// Outcome-model candidates, comma-separated. [default: mean,glm,glm-interact]
    #[arg(long)]
    q_learners: Option<String>,
    /// Propensity candidates, comma-separated. [default: mean,glm]
    #[arg(long)]
    g_learners: Option<String>,
    /// Lower propensity truncation bound. [default: 0.025]
    #[arg(long)]
    g_lo: Option<f64>,
    /// Upper propensity truncation bound. [default: 0.975]
    #[arg(long)]
    g_hi: Option<f64>,
    /// Targeting iteration cap. [default: 100]
    #[arg(long)]
    max_iter: Option<usize>,
    /// CI significance level. [default: 0.05]
    #[arg(long)]
    alpha: Option<f64>,
    /// Per-replicate CSV path (skipped when omitted).
    #[arg(long)]
    out_csv: Option<PathBuf>,
    /// Aggregate JSON path (stdout when omitted).
    #[arg(long)]
    out_json: Option<PathBuf>,
    /// TOML config file; keys mirror the long flag names, flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_ESTIMATION: u8 = 3;
const EXIT_INVALID_SIM: u8 = 4;

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {}", single_line_diagnostic(&msg.to_string()));
    ExitCode::from(code)
}

fn cmd_estimate(args: &EstimateArgs) -> ExitCode {
    let plan: EstimatePlan = match resolve_estimate(args) {
        Ok(p) => p,
        Err(e) => return fail(EXIT_CONFIG, e),
    };

    let data = match load_csv(&plan.data, &plan.treatment_col, &plan.outcome_col) {
        Ok(d) => d,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let est = &plan.common.estimator;
    let strata = est.stratify.then_some(data.a.as_slice());
    let folds = match make_folds(data.n(), est.k, est.seed, strata) {
        Ok(f) => f,
        Err(e) => return fail(EXIT_CONFIG, e),
    };

    let run = match cvtmle_core::crossfit::crossfit_nuisances(
        &data,
        &folds,
        &est.q_candidates,
        &est.g_candidates,
        est.g_bounds,
    )
    .and_then(|nuis| run_with_nuisances(&data, est, &nuis))
    {
        Ok(r) => r,
        Err(e) => return fail(EXIT_ESTIMATION, e),
    };

    let mut report = run.report.clone();
    report.config = Some(plan.echo.clone());
    let report_json = serde_json::to_value(&report).expect("report serializes");

    if let Some(path) = &plan.dump_nuisances {
        if let Err(e) = output::dump_nuisances(path, &run) {
            return fail(EXIT_CONFIG, e);
        }
    }
    if let Some(path) = &plan.dump_trace {
        if let Err(e) = output::dump_trace(path, &run.trace) {
            return fail(EXIT_CONFIG, e);
        }
    }
    if let Some(path) = &plan.dump_ic {
        if let Err(e) = output::dump_ic(path, &run.ic) {
            return fail(EXIT_CONFIG, e);
        }
    }
    match output::write_json(&report_json, &plan.out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(EXIT_CONFIG, e),
    }
}

fn cmd_simulate(args: &SimulateArgs) -> ExitCode {
    let plan: SimulatePlan = match resolve_simulate(args) {
        Ok(p) => p,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let dgp = match DgpSpec::preset(&plan.dgp) {
        Ok(d) => d,
        Err(e) => return fail(EXIT_CONFIG, e),
    };

    // Replicates run inside a dedicated pool so --jobs 1 is truly
    // sequential and larger values bound the worker count.
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(plan.jobs).build() {
        Ok(p) => p,
        Err(e) => return fail(EXIT_CONFIG, format!("cannot build worker pool: {e}")),
    };

    let est = &plan.common.estimator;
    let seed = est.seed;
    let (json, invalid) = if plan.compare_variants {
        let cmp = match pool.install(|| compare_variants(&dgp, plan.n, plan.reps, seed, est)) {
            Ok(c) => c,
            Err(e) => return fail(EXIT_ESTIMATION, e),
        };
        if let Some(path) = &plan.out_csv {
            if let Err(e) = output::write_paired_csv(path, &cmp.paired) {
                return fail(EXIT_CONFIG, e);
            }
        }
        (serde_json::to_value(&cmp).expect("comparison serializes"), cmp.invalid)
    } else {
        let mc = match pool.install(|| run_monte_carlo(&dgp, plan.n, plan.reps, seed, est)) {
            Ok(m) => m,
            Err(e) => return fail(EXIT_ESTIMATION, e),
        };
        if let Some(path) = &plan.out_csv {
            if let Err(e) = output::write_replicates_csv(path, &mc.replicates) {
                return fail(EXIT_CONFIG, e);
            }
        }
        (serde_json::to_value(&mc).expect("result serializes"), mc.aggregates.invalid)
    };

    let json = output::with_config(json, &plan.echo);
    if let Err(e) = output::write_json(&json, &plan.out_json) {
        return fail(EXIT_CONFIG, e);
    }
    if invalid {
        return fail(EXIT_INVALID_SIM, "more than 5% of replicates failed; results are invalid");
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Estimate(args) => cmd_estimate(&args),
        Command::Simulate(args) => cmd_simulate(&args),
    }
}
