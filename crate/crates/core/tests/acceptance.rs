//! Acceptance gate: ten statistical and numerical guarantees the estimator
//! must satisfy, each printing one PASS line (a failed assertion fails the
//! criterion). Tolerances are stated inline.

use cvtmle_core::data::make_folds;
use cvtmle_core::learners::{Family, LearnerSpec, ModelForm};
use cvtmle_core::numeric::expit;
use cvtmle_core::params::{ParameterKind, Variant};
use cvtmle_core::pipeline::{
    prepare_nuisances, run_estimate_with_plan, run_with_nuisances, EstimatorConfig,
};
use cvtmle_core::sim::{
    compare_variants, draw_sample, replicate_stream, run_monte_carlo, true_value, DgpSpec,
};
use cvtmle_core::targeting::{fit_epsilon, stopping_check};
use cvtmle_core::Dataset;
use rand::Rng;

fn binomial(form: ModelForm) -> LearnerSpec {
    LearnerSpec { family: Family::Binomial, form }
}

fn config(kind: ParameterKind, q: &[ModelForm], g: &[ModelForm]) -> EstimatorConfig {
    let mut cfg = EstimatorConfig::new(kind);
    cfg.q_candidates = q.iter().map(|&f| binomial(f)).collect();
    cfg.g_candidates = g.iter().map(|&f| binomial(f)).collect();
    cfg
}

const DGPS: [&str; 3] = ["dgp-a", "dgp-b", "dgp-c"];
const KINDS: [ParameterKind; 3] = [ParameterKind::Ate, ParameterKind::Tsm, ParameterKind::Vte];

/// Criterion 1: every converged run solves the EIC equation —
/// |mean(d_Y)| ≤ σ̂/n on 100 seeded runs over the three generating
/// processes at n = 500.
#[test]
fn criterion_01_eic_equation_solved() {
    let n = 500;
    let mut converged_runs = 0;
    for i in 0..100u64 {
        let dgp = DgpSpec::preset(DGPS[(i % 3) as usize]).unwrap();
        let kind = KINDS[((i / 3) % 3) as usize];
        let variant = if i % 2 == 0 { Variant::Stacked } else { Variant::Foldwise };
        let mut cfg = config(
            kind,
            &[ModelForm::MainTerms, ModelForm::Interaction],
            &[ModelForm::InterceptOnly, ModelForm::MainTerms],
        );
        cfg.variant = variant;
        let mut rng = replicate_stream(20_000, i);
        let data = draw_sample(&dgp, n, &mut rng).unwrap();
        cfg.seed = rng.random();
        let nuis = prepare_nuisances(&data, &cfg).unwrap();
        let run = run_with_nuisances(&data, &cfg, &nuis).unwrap();
        if run.report.converged {
            converged_runs += 1;
            let tolerance = run.trace.sigma_hat.last().unwrap() / n as f64;
            let stat = run.trace.ic_mean.last().unwrap().abs();
            assert!(
                stat <= tolerance,
                "run {i} ({} {kind:?} {variant:?}): |mean d_Y| = {stat:.3e} > σ̂/n = {tolerance:.3e}",
                dgp.name
            );
        }
    }
    assert!(converged_runs >= 95, "only {converged_runs}/100 runs converged");
    println!(
        "criterion 01 (EIC equation solved): PASS — {converged_runs}/100 converged runs all \
         satisfy |mean(d_Y)| <= sigma/n"
    );
}

/// Criterion 2: stacked and foldwise targeting agree to 1e-10 in ψ̂, the ε̂
/// sequence, and the CI for ATE and TSM on 50 seeded datasets with equal
/// fold sizes.
#[test]
fn criterion_02_exact_ate_tsm_overlap() {
    let mut max_diff = 0.0f64;
    for i in 0..50u64 {
        let dgp = DgpSpec::preset(DGPS[(i % 3) as usize]).unwrap();
        let kind = if i % 2 == 0 { ParameterKind::Ate } else { ParameterKind::Tsm };
        // n = 200, K = 10: every fold has exactly 20 rows.
        let mut cfg = config(
            kind,
            &[ModelForm::MainTerms, ModelForm::Interaction],
            &[ModelForm::MainTerms],
        );
        let mut rng = replicate_stream(30_000, i);
        let data = draw_sample(&dgp, 200, &mut rng).unwrap();
        cfg.seed = rng.random();
        let nuis = prepare_nuisances(&data, &cfg).unwrap();

        cfg.variant = Variant::Stacked;
        let s = run_with_nuisances(&data, &cfg, &nuis).unwrap();
        cfg.variant = Variant::Foldwise;
        let f = run_with_nuisances(&data, &cfg, &nuis).unwrap();

        assert_eq!(s.trace.eps.len(), f.trace.eps.len(), "run {i}: ε̂ sequence lengths differ");
        for (es, ef) in s.trace.eps.iter().zip(&f.trace.eps) {
            max_diff = max_diff.max((es - ef).abs());
        }
        max_diff = max_diff.max((s.report.psi - f.report.psi).abs());
        max_diff = max_diff.max((s.report.ci_lo - f.report.ci_lo).abs());
        max_diff = max_diff.max((s.report.ci_hi - f.report.ci_hi).abs());
        assert!(max_diff <= 1e-10, "run {i}: variant disagreement {max_diff:.3e}");
    }
    println!(
        "criterion 02 (exact ATE/TSM overlap): PASS — max |stacked − foldwise| = {max_diff:.3e} \
         over 50 datasets (tolerance 1e-10)"
    );
}

/// Criterion 3: the stopping rule reproduces its boolean table exactly.
#[test]
fn criterion_03_stopping_rule_semantics() {
    let cases: [(&[f64], f64, usize, bool); 5] = [
        (&[0.0; 10], 0.0, 10, true),
        (&[0.0; 10], 7.0, 10, true),
        (&[0.01; 50], 1.0, 50, true),   // 0.01 <= 1/50
        (&[0.05; 50], 1.0, 50, false),  // 0.05 >  1/50
        (&[0.01; 50], 0.0, 50, false),  // zero σ̂ demands exactly zero mean
    ];
    for (d_y, sigma, n, expected) in cases {
        assert_eq!(stopping_check(d_y, sigma, n), expected, "({d_y:?}, {sigma}, {n})");
    }
    println!("criterion 03 (stopping-rule semantics): PASS — boolean table exact");
}

/// Criterion 4: Newton (with golden-section fallback) matches a 1e-6-step
/// grid search of the pooled fluctuation log-likelihood within 1e-5 on 20
/// random instances at n = 200. The grid is refined coarse-to-fine over
/// [−10, 10]; concavity of the log-likelihood makes that equivalent to the
/// full dense grid.
#[test]
fn criterion_04_newton_vs_grid_oracle() {
    let n = 200;
    let mut worst = 0.0f64;
    for i in 0..20u64 {
        let mut rng = replicate_stream(40_000, i);
        let offset: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 3.0 - 1.5).collect();
        let h: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 5.0 - 2.5).collect();
        let y: Vec<f64> = offset
            .iter()
            .map(|&o| (rng.random::<f64>() < expit(o + 0.3)) as u8 as f64)
            .collect();
        let eps = fit_epsilon(&y, &offset, &h).unwrap();

        let loglik = |e: f64| -> f64 {
            (0..n)
                .map(|j| {
                    let mu = expit(offset[j] + e * h[j]).clamp(1e-300, 1.0 - 1e-16);
                    y[j] * mu.ln() + (1.0 - y[j]) * (1.0 - mu).ln()
                })
                .sum()
        };
        let (mut lo, mut hi) = (-10.0f64, 10.0f64);
        let mut best = 0.0f64;
        loop {
            let step = (hi - lo) / 1000.0;
            let mut best_ll = f64::NEG_INFINITY;
            for t in 0..=1000 {
                let e = lo + t as f64 * step;
                let ll = loglik(e);
                if ll > best_ll {
                    best_ll = ll;
                    best = e;
                }
            }
            if step <= 1e-6 {
                break;
            }
            lo = best - 2.0 * step;
            hi = best + 2.0 * step;
        }
        let diff = (eps - best).abs();
        worst = worst.max(diff);
        assert!(diff <= 1e-5, "instance {i}: ε̂ = {eps} vs grid {best} (diff {diff:.3e})");
    }
    println!(
        "criterion 04 (Newton vs grid oracle): PASS — max |ε̂ − grid| = {worst:.3e} over 20 \
         instances (tolerance 1e-5)"
    );
}

/// Criterion 5: DGP-A ATE coverage at n = 1000 over 500 replicates with
/// correctly specified GLM candidates — coverage inside the 3σ binomial band
/// [0.92, 0.975] and |mean bias| ≤ 3·MCsd/√500.
#[test]
fn criterion_05_ate_coverage() {
    let dgp = DgpSpec::preset("dgp-a").unwrap();
    let cfg = config(ParameterKind::Ate, &[ModelForm::MainTerms], &[ModelForm::MainTerms]);
    let mc = run_monte_carlo(&dgp, 1000, 500, 50_000, &cfg).unwrap();
    let agg = &mc.aggregates;
    assert_eq!(agg.n_failed, 0, "replicate failures: {}", agg.n_failed);
    assert!(
        (0.92..=0.975).contains(&agg.coverage),
        "coverage {} outside [0.92, 0.975]",
        agg.coverage
    );
    let bias_bound = 3.0 * agg.mc_sd / (500f64).sqrt();
    assert!(
        agg.mean_bias.abs() <= bias_bound,
        "|mean bias| = {:.5e} > {:.5e}",
        agg.mean_bias.abs(),
        bias_bound
    );
    println!(
        "criterion 05 (ATE coverage): PASS — coverage = {:.3}, |bias| = {:.2e} <= {:.2e}",
        agg.coverage,
        agg.mean_bias.abs(),
        bias_bound
    );
}

/// Criterion 6: VTE variant similarity on DGP-B at n = 1000 over 200 paired
/// replicates — RMSE ratio within [0.9, 1.1] and coverage difference within
/// ±0.04.
#[test]
fn criterion_06_vte_variant_similarity() {
    let dgp = DgpSpec::preset("dgp-b").unwrap();
    let cfg = config(ParameterKind::Vte, &[ModelForm::Interaction], &[ModelForm::MainTerms]);
    let cmp = compare_variants(&dgp, 1000, 200, 60_000, &cfg).unwrap();
    assert_eq!(cmp.n_failed, 0, "paired failures: {}", cmp.n_failed);
    assert!(
        (0.9..=1.1).contains(&cmp.rmse_ratio),
        "RMSE ratio {} outside [0.9, 1.1]",
        cmp.rmse_ratio
    );
    assert!(
        cmp.coverage_diff.abs() <= 0.04,
        "coverage difference {} outside ±0.04",
        cmp.coverage_diff
    );
    println!(
        "criterion 06 (VTE variant similarity): PASS — RMSE ratio = {:.4}, coverage diff = {:+.3}",
        cmp.rmse_ratio, cmp.coverage_diff
    );
}

/// Criterion 7: natural parameter bounds — every VTE estimate ≥ 0 and every
/// TSM estimate within the observed outcome range, across simulation runs.
#[test]
fn criterion_07_plugin_bounds() {
    let mut vte_checked = 0;
    let mut tsm_checked = 0;
    for (dgp_name, seed) in [("dgp-b", 70_000u64), ("dgp-c", 70_500u64)] {
        let dgp = DgpSpec::preset(dgp_name).unwrap();
        let cfg = config(
            ParameterKind::Vte,
            &[ModelForm::MainTerms, ModelForm::Interaction],
            &[ModelForm::MainTerms],
        );
        let mc = run_monte_carlo(&dgp, 150, 60, seed, &cfg).unwrap();
        for r in mc.replicates.iter().filter(|r| r.psi.is_some()) {
            assert!(r.psi.unwrap() >= 0.0, "negative VTE estimate {:?}", r.psi);
            vte_checked += 1;
        }
    }
    for (dgp_name, seed) in [("dgp-a", 71_000u64), ("dgp-c", 71_500u64)] {
        let dgp = DgpSpec::preset(dgp_name).unwrap();
        let cfg = config(ParameterKind::Tsm, &[ModelForm::MainTerms], &[ModelForm::MainTerms]);
        let mc = run_monte_carlo(&dgp, 150, 60, seed, &cfg).unwrap();
        // Binary outcomes: the observed scale is [0, 1] in every replicate
        // that contains both outcome values (guaranteed at n = 150 here).
        for r in mc.replicates.iter().filter(|r| r.psi.is_some()) {
            let psi = r.psi.unwrap();
            assert!((0.0..=1.0).contains(&psi), "TSM estimate {psi} outside [0, 1]");
            tsm_checked += 1;
        }
    }
    println!(
        "criterion 07 (plug-in bounds): PASS — {vte_checked} VTE estimates >= 0, {tsm_checked} \
         TSM estimates inside the outcome range, zero violations"
    );
}

/// Criterion 8: the pooled fluctuation log-likelihood never decreases
/// (tolerance 1e-9 per accepted step), checked across DGPs, parameters, and
/// variants.
#[test]
fn criterion_08_monotone_loglik() {
    let mut steps = 0;
    for i in 0..30u64 {
        let dgp = DgpSpec::preset(DGPS[(i % 3) as usize]).unwrap();
        let kind = KINDS[((i / 3) % 3) as usize];
        let mut cfg = config(
            kind,
            &[ModelForm::MainTerms, ModelForm::Interaction],
            &[ModelForm::MainTerms],
        );
        cfg.variant = if i % 2 == 0 { Variant::Stacked } else { Variant::Foldwise };
        let mut rng = replicate_stream(80_000, i);
        let data = draw_sample(&dgp, 300, &mut rng).unwrap();
        cfg.seed = rng.random();
        let nuis = prepare_nuisances(&data, &cfg).unwrap();
        let run = run_with_nuisances(&data, &cfg, &nuis).unwrap();
        for w in run.trace.loglik.windows(2) {
            assert!(
                w[1] >= w[0] - 1e-9,
                "run {i}: log-likelihood decreased {} -> {}",
                w[0],
                w[1]
            );
            steps += 1;
        }
    }
    println!(
        "criterion 08 (monotone fluctuation likelihood): PASS — {steps} accepted steps, none \
         decreasing beyond 1e-9"
    );
}

/// Criterion 9: fold purity — single-row (Y_i, A_i) perturbations leave all
/// initial predictions within fold(i) unchanged, on 10 random perturbations.
/// (Perturbations flip binary values, which keeps the outcome scale fixed;
/// when A_i flips, row i's own observed-arm prediction switches to the other
/// counterfactual from the same unchanged fitted model.)
#[test]
fn criterion_09_fold_purity() {
    let dgp = DgpSpec::preset("dgp-b").unwrap();
    let mut rng = replicate_stream(90_000, 0);
    let data = draw_sample(&dgp, 120, &mut rng).unwrap();
    let plan = make_folds(120, 6, rng.random(), Some(&data.a)).unwrap();
    let cfg = config(
        ParameterKind::Ate,
        &[ModelForm::MainTerms, ModelForm::Interaction],
        &[ModelForm::InterceptOnly, ModelForm::MainTerms],
    );
    let base = run_estimate_with_plan(&data, &cfg, &plan).unwrap();

    for t in 0..10u64 {
        let i = (rng.random::<u64>() % 120) as usize;
        let flip_a = t % 2 == 1;
        let mut a = data.a.clone();
        let mut y_raw = data.y_raw.clone();
        if flip_a {
            a[i] = 1 - a[i];
        } else {
            y_raw[i] = 1.0 - y_raw[i];
        }
        let perturbed = Dataset::new(data.w.clone(), data.w_names.clone(), a, y_raw).unwrap();
        assert_eq!(perturbed.scale, data.scale, "perturbation must not move the outcome scale");
        let alt = run_estimate_with_plan(&perturbed, &cfg, &plan).unwrap();

        let fold = plan.fold_of(i);
        for j in plan.validation_indices(fold) {
            assert_eq!(base.nuisances.q0_1[j], alt.nuisances.q0_1[j], "Q(1,·) moved at row {j}");
            assert_eq!(base.nuisances.q0_0[j], alt.nuisances.q0_0[j], "Q(0,·) moved at row {j}");
            assert_eq!(base.nuisances.g1[j], alt.nuisances.g1[j], "g moved at row {j}");
            if j != i {
                assert_eq!(base.nuisances.q0_a[j], alt.nuisances.q0_a[j], "Q(A,·) moved at row {j}");
            }
        }
        if flip_a {
            let expected = if perturbed.a[i] == 1 {
                base.nuisances.q0_1[i]
            } else {
                base.nuisances.q0_0[i]
            };
            assert_eq!(alt.nuisances.q0_a[i], expected);
        } else {
            assert_eq!(base.nuisances.q0_a[i], alt.nuisances.q0_a[i]);
        }
    }
    println!(
        "criterion 09 (fold purity): PASS — 10 single-row perturbations left fold-internal \
         predictions unchanged"
    );
}

/// Criterion 10: true_value reproduces the hand-derived oracle constants.
/// Each constant is recomputed here by closed-form enumeration before being
/// compared.
#[test]
fn criterion_10_oracle_truths() {
    // DGP-A: W ~ Bern(0.5), Q̄0 = expit(A + W − 0.5).
    let ate_oracle = ((expit(0.5) - expit(-0.5)) + (expit(1.5) - expit(0.5))) / 2.0;
    let tsm_oracle = (expit(0.5) + expit(1.5)) / 2.0;
    // DGP-B: blip(W) = expit(2W − 1) − 0.5 = ±(expit(1) − 0.5).
    let spread = expit(1.0) - 0.5;
    let vte_oracle = spread * spread;

    assert!((ate_oracle - 0.22002).abs() < 1e-5);
    assert!((tsm_oracle - 0.72002).abs() < 1e-5);
    assert!((vte_oracle - 0.05339).abs() < 1e-5);

    let a = DgpSpec::preset("dgp-a").unwrap();
    let b = DgpSpec::preset("dgp-b").unwrap();
    let ate = true_value(&a, ParameterKind::Ate);
    let tsm = true_value(&a, ParameterKind::Tsm);
    let vte = true_value(&b, ParameterKind::Vte);
    assert!((ate - 0.22002).abs() <= 1e-5, "ATE truth {ate}");
    assert!((tsm - 0.72002).abs() <= 1e-5, "TSM truth {tsm}");
    assert!((vte - 0.05339).abs() <= 1e-5, "VTE truth {vte}");
    assert!((ate - ate_oracle).abs() <= 1e-12);
    assert!((tsm - tsm_oracle).abs() <= 1e-12);
    assert!((vte - vte_oracle).abs() <= 1e-12);
    println!(
        "criterion 10 (oracle truths): PASS — ATE {ate:.5}, TSM {tsm:.5}, VTE {vte:.5} match \
         hand-derived constants to 1e-5"
    );
}
