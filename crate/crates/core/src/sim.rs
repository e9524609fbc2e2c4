//! Known-truth data-generating processes and the Monte Carlo harness used to
//! verify bias, coverage, EIC-solving, and variant agreement.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numeric::expit;
use crate::params::{ParameterKind, Variant};
use crate::pipeline::{prepare_nuisances, run_with_nuisances, EstimateRun, EstimatorConfig};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum WLaw {
    Bernoulli(f64),
    Uniform01,
}

/// A generating law: independent covariates, expit-linear propensity in W,
/// expit-linear outcome model in (A, W, A×W).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DgpSpec {
    pub name: String,
    pub w_laws: Vec<WLaw>,
    pub g0_intercept: f64,
    pub g0_w: Vec<f64>,
    pub q0_intercept: f64,
    pub q0_a: f64,
    pub q0_w: Vec<f64>,
    pub q0_aw: Vec<f64>,
}

impl DgpSpec {
    pub fn preset(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "dgp-a" => Ok(DgpSpec {
                name: "dgp-a".into(),
                w_laws: vec![WLaw::Bernoulli(0.5)],
                g0_intercept: 0.0,
                g0_w: vec![0.0],
                q0_intercept: -0.5,
                q0_a: 1.0,
                q0_w: vec![1.0],
                q0_aw: vec![0.0],
            }),
            "dgp-b" => Ok(DgpSpec {
                name: "dgp-b".into(),
                w_laws: vec![WLaw::Bernoulli(0.5)],
                g0_intercept: -0.5,
                g0_w: vec![1.0],
                q0_intercept: 0.0,
                q0_a: -1.0,
                q0_w: vec![0.0],
                q0_aw: vec![2.0],
            }),
            "dgp-c" => Ok(DgpSpec {
                name: "dgp-c".into(),
                w_laws: vec![WLaw::Uniform01],
                g0_intercept: -0.4,
                g0_w: vec![0.8],
                q0_intercept: -0.5,
                q0_a: 0.5,
                q0_w: vec![1.0],
                q0_aw: vec![0.5],
            }),
            other => Err(Error::UnknownDgp(other.to_owned())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.w_laws.len();
        if self.g0_w.len() != p || self.q0_w.len() != p || self.q0_aw.len() != p {
            return Err(Error::LengthMismatch { what: "dgp coefficient vectors" });
        }
        let coefs = [&self.g0_w, &self.q0_w, &self.q0_aw];
        if !self.g0_intercept.is_finite()
            || !self.q0_intercept.is_finite()
            || !self.q0_a.is_finite()
            || coefs.iter().any(|c| c.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFinite { what: "dgp coefficients" });
        }
        for law in &self.w_laws {
            if let WLaw::Bernoulli(p) = law {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::Invalid(format!("bernoulli probability {p} outside [0,1]")));
                }
            }
        }
        // g0 is linear in W over a box support, so its extremes sit at the
        // support corners; require them inside (0.01, 0.99).
        let mut lo = self.g0_intercept;
        let mut hi = self.g0_intercept;
        for &c in &self.g0_w {
            // every covariate's support is within [0, 1]
            lo += c.min(0.0);
            hi += c.max(0.0);
        }
        if !(expit(lo) > 0.01 && expit(hi) < 0.99) {
            return Err(Error::Invalid(format!(
                "propensity range ({:.4}, {:.4}) leaves (0.01, 0.99)",
                expit(lo),
                expit(hi)
            )));
        }
        Ok(())
    }

    pub fn g0(&self, w: &[f64]) -> f64 {
        let lin = self.g0_intercept + dot(&self.g0_w, w);
        expit(lin)
    }

    pub fn q0bar(&self, a: u8, w: &[f64]) -> f64 {
        let a = a as f64;
        let lin = self.q0_intercept + self.q0_a * a + dot(&self.q0_w, w) + a * dot(&self.q0_aw, w);
        expit(lin)
    }

    pub fn blip0(&self, w: &[f64]) -> f64 {
        self.q0bar(1, w) - self.q0bar(0, w)
    }
}

fn dot(c: &[f64], w: &[f64]) -> f64 {
    c.iter().zip(w).map(|(&a, &b)| a * b).sum()
}

/// The RNG stream for one replicate: a pure function of (base_seed, rep), so
/// replicate r's data never depend on execution order or parallelism.
pub fn replicate_stream(base_seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(rep);
    rng
}

/// Draw n iid observations: W ~ spec, A|W ~ Bern(g0(W)), Y|A,W ~
/// Bern(Q̄0(A,W)). Outcomes are binary, so the dataset's scale is (0,1)
/// whenever both outcome values occur.
pub fn draw_sample(dgp: &DgpSpec, n: usize, rng: &mut ChaCha8Rng) -> Result<Dataset> {
    dgp.validate()?;
    let p = dgp.w_laws.len();
    let mut w_flat = Vec::with_capacity(n * p);
    let mut a = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut w_row = vec![0.0; p];
    for _ in 0..n {
        for (j, law) in dgp.w_laws.iter().enumerate() {
            w_row[j] = match law {
                WLaw::Bernoulli(pr) => (rng.random::<f64>() < *pr) as u8 as f64,
                WLaw::Uniform01 => rng.random::<f64>(),
            };
        }
        let ai = (rng.random::<f64>() < dgp.g0(&w_row)) as u8;
        let yi = (rng.random::<f64>() < dgp.q0bar(ai, &w_row)) as u8 as f64;
        w_flat.extend_from_slice(&w_row);
        a.push(ai);
        y.push(yi);
    }
    let w = DMatrix::from_row_iterator(n, p, w_flat);
    let w_names = (1..=p).map(|j| format!("w{j}")).collect();
    Dataset::new(w, w_names, a, y)
}

const QUADRATURE_POINTS: usize = 1_000_000;

fn halton(index: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let mut i = index;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Iterate the W law as weighted atoms: exact enumeration over discrete
/// coordinates, a deterministic 10^6-point rule over continuous ones
/// (midpoint for one uniform coordinate, Halton for several). Accumulates
/// sum of weight·f(w).
fn integrate_w(dgp: &DgpSpec, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let p = dgp.w_laws.len();
    let discrete: Vec<usize> = (0..p)
        .filter(|&j| matches!(dgp.w_laws[j], WLaw::Bernoulli(_)))
        .collect();
    let continuous: Vec<usize> = (0..p)
        .filter(|&j| matches!(dgp.w_laws[j], WLaw::Uniform01))
        .collect();
    const PRIMES: [usize; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

    let mut w = vec![0.0; p];
    let mut total = 0.0;
    let n_atoms = 1usize << discrete.len();
    for atom in 0..n_atoms {
        let mut weight = 1.0;
        for (bit, &j) in discrete.iter().enumerate() {
            let one = (atom >> bit) & 1 == 1;
            w[j] = one as u8 as f64;
            if let WLaw::Bernoulli(pr) = dgp.w_laws[j] {
                weight *= if one { pr } else { 1.0 - pr };
            }
        }
        if continuous.is_empty() {
            total += weight * f(&w);
        } else {
            let mut acc = 0.0;
            for i in 0..QUADRATURE_POINTS {
                if continuous.len() == 1 {
                    w[continuous[0]] = (i as f64 + 0.5) / QUADRATURE_POINTS as f64;
                } else {
                    for (d, &j) in continuous.iter().enumerate() {
                        w[j] = halton(i + 1, PRIMES[d % PRIMES.len()]);
                    }
                }
                acc += f(&w);
            }
            total += weight * acc / QUADRATURE_POINTS as f64;
        }
    }
    total
}

/// ψ0 = Ψ(P0): exact enumeration on discrete supports, documented-accuracy
/// (≥ 1e-5) deterministic quadrature when a covariate is continuous.
pub fn true_value(dgp: &DgpSpec, kind: ParameterKind) -> f64 {
    match kind {
        ParameterKind::Ate => integrate_w(dgp, |w| dgp.blip0(w)),
        ParameterKind::Tsm => integrate_w(dgp, |w| dgp.q0bar(1, w)),
        ParameterKind::Vte => {
            let e_b = integrate_w(dgp, |w| dgp.blip0(w));
            let e_b2 = integrate_w(dgp, |w| {
                let b = dgp.blip0(w);
                b * b
            });
            e_b2 - e_b * e_b
        }
    }
}

/// One replicate's outcome row. Failed replicates carry the error text and
/// empty numeric fields.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct RepRecord {
    pub rep: u64,
    pub psi: Option<f64>,
    pub se: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub covered: Option<bool>,
    pub k_iterations: Option<usize>,
    pub converged: Option<bool>,
    pub reason: Option<String>,
    /// Converged AND |mean(d_Y)| ≤ σ̂/n at the final state.
    pub eic_solved: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct MCAggregates {
    pub n_success: usize,
    pub n_failed: usize,
    /// True when more than 5% of replicates failed (the run is unusable).
    pub invalid: bool,
    pub mean_psi: f64,
    pub mean_bias: f64,
    /// Monte Carlo sd with divisor R, so rmse² = bias² + mc_sd² exactly.
    pub mc_sd: f64,
    pub rmse: f64,
    pub coverage: f64,
    pub mean_ci_width: f64,
    pub mean_k_iterations: f64,
    pub converged_rate: f64,
    pub eic_solved_rate: f64,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct MCResult {
    pub dgp: String,
    pub parameter: ParameterKind,
    pub variant: Variant,
    pub n: usize,
    pub reps: u64,
    pub base_seed: u64,
    pub true_psi: f64,
    pub replicates: Vec<RepRecord>,
    pub aggregates: MCAggregates,
}

fn record_from_run(rep: u64, run: &EstimateRun, true_psi: f64, n: usize) -> RepRecord {
    let r = &run.report;
    let covered = r.ci_lo <= true_psi && true_psi <= r.ci_hi;
    let tolerance = r.se_scaled * (n as f64).sqrt() / n as f64; // σ̂/n
    RepRecord {
        rep,
        psi: Some(r.psi),
        se: Some(r.se),
        ci_lo: Some(r.ci_lo),
        ci_hi: Some(r.ci_hi),
        covered: Some(covered),
        k_iterations: Some(r.k_iterations),
        converged: Some(r.converged),
        reason: Some(r.reason.label().to_owned()),
        eic_solved: Some(r.converged && r.ic_mean_final.abs() <= tolerance),
        error: None,
    }
}

fn failed_record(rep: u64, err: &Error) -> RepRecord {
    RepRecord {
        rep,
        psi: None,
        se: None,
        ci_lo: None,
        ci_hi: None,
        covered: None,
        k_iterations: None,
        converged: None,
        reason: None,
        eic_solved: None,
        error: Some(err.to_string()),
    }
}

fn aggregate(records: &[RepRecord], true_psi: f64, reps: u64) -> MCAggregates {
    let ok: Vec<&RepRecord> = records.iter().filter(|r| r.psi.is_some()).collect();
    let n_success = ok.len();
    let n_failed = records.len() - n_success;
    let invalid = (n_failed as f64) > 0.05 * reps as f64;
    if n_success == 0 {
        return MCAggregates {
            n_success,
            n_failed,
            invalid: true,
            mean_psi: 0.0,
            mean_bias: 0.0,
            mc_sd: 0.0,
            rmse: 0.0,
            coverage: 0.0,
            mean_ci_width: 0.0,
            mean_k_iterations: 0.0,
            converged_rate: 0.0,
            eic_solved_rate: 0.0,
        };
    }
    let m = n_success as f64;
    let psis: Vec<f64> = ok.iter().map(|r| r.psi.unwrap()).collect();
    let mean_psi = psis.iter().sum::<f64>() / m;
    let mean_bias = mean_psi - true_psi;
    let mc_var = psis.iter().map(|p| (p - mean_psi) * (p - mean_psi)).sum::<f64>() / m;
    let rmse = (psis.iter().map(|p| (p - true_psi) * (p - true_psi)).sum::<f64>() / m).sqrt();
    let coverage =
        ok.iter().filter(|r| r.covered == Some(true)).count() as f64 / m;
    let mean_ci_width =
        ok.iter().map(|r| r.ci_hi.unwrap() - r.ci_lo.unwrap()).sum::<f64>() / m;
    let mean_k_iterations =
        ok.iter().map(|r| r.k_iterations.unwrap() as f64).sum::<f64>() / m;
    let converged_rate =
        ok.iter().filter(|r| r.converged == Some(true)).count() as f64 / m;
    let eic_solved_rate =
        ok.iter().filter(|r| r.eic_solved == Some(true)).count() as f64 / m;
    MCAggregates {
        n_success,
        n_failed,
        invalid,
        mean_psi,
        mean_bias,
        mc_sd: mc_var.sqrt(),
        rmse,
        coverage,
        mean_ci_width,
        mean_k_iterations,
        converged_rate,
        eic_solved_rate,
    }
}

/// Draw the replicate's dataset and fold seed from its stream, then run the
/// full pipeline. The fold seed is drawn after the data so the plan varies
/// across replicates without a second stream.
fn one_replicate(
    dgp: &DgpSpec,
    n: usize,
    base_seed: u64,
    rep: u64,
    cfg: &EstimatorConfig,
) -> Result<EstimateRun> {
    let mut rng = replicate_stream(base_seed, rep);
    let data = draw_sample(dgp, n, &mut rng)?;
    let mut rc = cfg.clone();
    rc.seed = rng.random();
    let nuisances = prepare_nuisances(&data, &rc)?;
    run_with_nuisances(&data, &rc, &nuisances)
}

pub fn run_monte_carlo(
    dgp: &DgpSpec,
    n: usize,
    reps: u64,
    base_seed: u64,
    cfg: &EstimatorConfig,
) -> Result<MCResult> {
    if reps < 1 {
        return Err(Error::Invalid("reps must be at least 1".into()));
    }
    dgp.validate()?;
    cfg.validate()?;
    let true_psi = true_value(dgp, cfg.kind);
    let replicates: Vec<RepRecord> = (0..reps)
        .into_par_iter()
        .map(|rep| match one_replicate(dgp, n, base_seed, rep, cfg) {
            Ok(run) => record_from_run(rep, &run, true_psi, n),
            Err(e) => failed_record(rep, &e),
        })
        .collect();
    let aggregates = aggregate(&replicates, true_psi, reps);
    Ok(MCResult {
        dgp: dgp.name.clone(),
        parameter: cfg.kind,
        variant: cfg.variant,
        n,
        reps,
        base_seed,
        true_psi,
        replicates,
        aggregates,
    })
}

/// One row of the paired stacked-vs-foldwise comparison.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PairedRecord {
    pub rep: u64,
    pub psi_stacked: Option<f64>,
    pub psi_foldwise: Option<f64>,
    pub diff: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct VariantComparison {
    pub dgp: String,
    pub parameter: ParameterKind,
    pub n: usize,
    pub reps: u64,
    pub base_seed: u64,
    pub true_psi: f64,
    pub stacked: MCAggregates,
    pub foldwise: MCAggregates,
    pub paired: Vec<PairedRecord>,
    pub max_abs_diff: f64,
    pub mean_diff: f64,
    /// stacked RMSE / foldwise RMSE.
    pub rmse_ratio: f64,
    /// stacked coverage − foldwise coverage.
    pub coverage_diff: f64,
    pub n_failed: usize,
    pub invalid: bool,
}

/// Run both variants on identical datasets and identical initial fits
/// (cross-fitting happens once per replicate; only the targeting differs).
pub fn compare_variants(
    dgp: &DgpSpec,
    n: usize,
    reps: u64,
    base_seed: u64,
    cfg: &EstimatorConfig,
) -> Result<VariantComparison> {
    if reps < 2 {
        return Err(Error::Invalid("compare_variants needs reps >= 2".into()));
    }
    dgp.validate()?;
    cfg.validate()?;
    let true_psi = true_value(dgp, cfg.kind);

    let pairs: Vec<(RepRecord, RepRecord)> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replicate_stream(base_seed, rep);
            let shared = (|| -> Result<(Dataset, crate::crossfit::CrossFittedNuisances, u64)> {
                let data = draw_sample(dgp, n, &mut rng)?;
                let mut rc = cfg.clone();
                rc.seed = rng.random();
                let nuisances = prepare_nuisances(&data, &rc)?;
                Ok((data, nuisances, rc.seed))
            })();
            match shared {
                Ok((data, nuisances, seed)) => {
                    let run_one = |variant: Variant| -> RepRecord {
                        let mut rc = cfg.clone();
                        rc.seed = seed;
                        rc.variant = variant;
                        match run_with_nuisances(&data, &rc, &nuisances) {
                            Ok(run) => record_from_run(rep, &run, true_psi, n),
                            Err(e) => failed_record(rep, &e),
                        }
                    };
                    (run_one(Variant::Stacked), run_one(Variant::Foldwise))
                }
                Err(e) => (failed_record(rep, &e), failed_record(rep, &e)),
            }
        })
        .collect();

    let stacked_records: Vec<RepRecord> = pairs.iter().map(|(s, _)| s.clone()).collect();
    let foldwise_records: Vec<RepRecord> = pairs.iter().map(|(_, f)| f.clone()).collect();
    let stacked = aggregate(&stacked_records, true_psi, reps);
    let foldwise = aggregate(&foldwise_records, true_psi, reps);

    let paired: Vec<PairedRecord> = pairs
        .iter()
        .enumerate()
        .map(|(rep, (s, f))| {
            let diff = match (s.psi, f.psi) {
                (Some(a), Some(b)) => Some(a - b),
                _ => None,
            };
            PairedRecord {
                rep: rep as u64,
                psi_stacked: s.psi,
                psi_foldwise: f.psi,
                diff,
                error: s.error.clone().or_else(|| f.error.clone()),
            }
        })
        .collect();

    let diffs: Vec<f64> = paired.iter().filter_map(|p| p.diff).collect();
    let max_abs_diff = diffs.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let mean_diff = if diffs.is_empty() {
        0.0
    } else {
        diffs.iter().sum::<f64>() / diffs.len() as f64
    };
    let n_failed = paired.iter().filter(|p| p.diff.is_none()).count();

    Ok(VariantComparison {
        dgp: dgp.name.clone(),
        parameter: cfg.kind,
        n,
        reps,
        base_seed,
        true_psi,
        rmse_ratio: if foldwise.rmse > 0.0 { stacked.rmse / foldwise.rmse } else { f64::INFINITY },
        coverage_diff: stacked.coverage - foldwise.coverage,
        stacked,
        foldwise,
        paired,
        max_abs_diff,
        mean_diff,
        n_failed,
        invalid: (n_failed as f64) > 0.05 * reps as f64,
    })
}
