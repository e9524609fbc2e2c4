//! End-to-end interface contracts: exit codes, dump headers, determinism,
//! config-file precedence.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cvtmle"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

/// Deterministic demo dataset: one uniform-ish covariate, a covariate-tilted
/// treatment, and a binary outcome with a real treatment effect.
fn write_demo_csv(path: &Path) {
    let mut s = String::from("W1,A,Y\n");
    let mut state: u64 = 0x243F_6A88_85A3_08D3;
    let mut unit = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for _ in 0..160 {
        let w = unit();
        let a = (unit() < 0.4 + 0.2 * w) as u8;
        let y = (unit() < 0.25 + 0.25 * a as f64 + 0.3 * w) as u8;
        s.push_str(&format!("{w:.6},{a},{y}\n"));
    }
    fs::write(path, s).unwrap();
}

fn demo_csv(dir: &Path) -> PathBuf {
    let path = dir.join("demo.csv");
    write_demo_csv(&path);
    path
}

#[test]
fn estimate_variants_share_psi_for_ate() {
    let dir = tempfile::tempdir().unwrap();
    let data = demo_csv(dir.path());
    let data = data.to_str().unwrap();
    let stacked = stdout_json(&run(&[
        "estimate", "--data", data, "--param", "ate", "--variant", "stacked", "--seed", "3",
    ]));
    let foldwise = stdout_json(&run(&[
        "estimate", "--data", data, "--param", "ate", "--variant", "foldwise", "--seed", "3",
    ]));
    assert_eq!(stacked["psi"], foldwise["psi"]);
    assert_eq!(stacked["parameter"], "ate");
    assert_eq!(foldwise["variant"], "foldwise");
}

#[test]
fn missing_data_flag_exits_2_with_usage() {
    let out = run(&["estimate", "--param", "ate"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("usage"), "no usage hint: {err}");
    assert_eq!(err.trim().lines().count(), 1, "diagnostic must be a single line: {err}");
}

#[test]
fn dump_files_have_contract_headers() {
    let dir = tempfile::tempdir().unwrap();
    let data = demo_csv(dir.path());
    let trace = dir.path().join("t.csv");
    let nuis = dir.path().join("n.csv");
    let ic = dir.path().join("ic.csv");
    let out = run(&[
        "estimate",
        "--data",
        data.to_str().unwrap(),
        "--param",
        "tsm",
        "--dump-trace",
        trace.to_str().unwrap(),
        "--dump-nuisances",
        nuis.to_str().unwrap(),
        "--dump-ic",
        ic.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let first_line = |p: &Path| fs::read_to_string(p).unwrap().lines().next().unwrap().to_owned();
    assert_eq!(first_line(&trace), "k,eps,ic_mean,sigma_hat,loglik");
    assert_eq!(first_line(&nuis), "row,fold,Q0_A,Q0_1,Q0_0,g1");
    assert_eq!(first_line(&ic), "row,d_Y,d_W,total");
    // One nuisance row per observation plus the header.
    assert_eq!(fs::read_to_string(&nuis).unwrap().lines().count(), 161);
}

#[test]
fn simulate_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = |csv: &str, json: &str| {
        vec![
            "simulate".to_owned(),
            "--dgp".into(),
            "dgp-a".into(),
            "--param".into(),
            "ate".into(),
            "--n".into(),
            "200".into(),
            "--reps".into(),
            "10".into(),
            "--seed".into(),
            "7".into(),
            "--out-csv".into(),
            csv.into(),
            "--out-json".into(),
            json.into(),
        ]
    };
    // The identical invocation twice over, reading outputs between runs.
    let csv = dir.path().join("reps.csv");
    let json = dir.path().join("agg.json");
    let mut captures = Vec::new();
    for _ in 0..2 {
        let out = bin().args(args(csv.to_str().unwrap(), json.to_str().unwrap())).output().unwrap();
        assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
        captures.push((fs::read(&csv).unwrap(), fs::read(&json).unwrap()));
    }
    assert_eq!(captures[0].0, captures[1].0, "CSV outputs differ across runs");
    assert_eq!(captures[0].1, captures[1].1, "JSON outputs differ across runs");
    let header =
        String::from_utf8(captures[0].0.clone()).unwrap().lines().next().unwrap().to_owned();
    assert_eq!(
        header,
        "rep,psi,se,ci_lo,ci_hi,covered,k_iterations,converged,reason,eic_solved,error"
    );
}

#[test]
fn unknown_dgp_exits_2() {
    let out = run(&["simulate", "--dgp", "nosuch", "--param", "ate", "--n", "100", "--reps", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nosuch"));
}

#[test]
fn compare_variants_reports_rmse_ratio() {
    let out = stdout_json(&run(&[
        "simulate",
        "--dgp",
        "dgp-b",
        "--param",
        "vte",
        "--n",
        "120",
        "--reps",
        "4",
        "--seed",
        "2",
        "--compare-variants",
    ]));
    assert!(out.get("rmse_ratio").is_some(), "missing rmse_ratio: {out}");
    assert!(out["rmse_ratio"].as_f64().unwrap().is_finite());
    assert_eq!(out["paired"].as_array().unwrap().len(), 4);
}

#[test]
fn config_file_flags_and_env_follow_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let data = demo_csv(dir.path());
    let data = data.to_str().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "param = \"tsm\"\nseed = 99\nk = 5\n").unwrap();

    // File values apply when no flag is given.
    let from_file =
        stdout_json(&run(&["estimate", "--data", data, "--config", cfg.to_str().unwrap()]));
    assert_eq!(from_file["parameter"], "tsm");
    assert_eq!(from_file["seed"], 99);
    assert_eq!(from_file["K"], 5);
    assert_eq!(from_file["config"]["command"], "estimate");

    // Explicit flags override the file.
    let flagged = stdout_json(&run(&[
        "estimate", "--data", data, "--config", cfg.to_str().unwrap(), "--param", "ate", "--seed",
        "3",
    ]));
    assert_eq!(flagged["parameter"], "ate");
    assert_eq!(flagged["seed"], 3);
    assert_eq!(flagged["K"], 5);

    // CVTMLE_SEED replaces only the built-in default seed...
    let env_only = bin()
        .args(["estimate", "--data", data, "--param", "ate"])
        .env("CVTMLE_SEED", "1234")
        .output()
        .unwrap();
    assert_eq!(stdout_json(&env_only)["seed"], 1234);

    // ...and loses to both the config file and the flag.
    let env_vs_file = bin()
        .args(["estimate", "--data", data, "--config", cfg.to_str().unwrap()])
        .env("CVTMLE_SEED", "1234")
        .output()
        .unwrap();
    assert_eq!(stdout_json(&env_vs_file)["seed"], 99);

    // Unknown config keys are rejected before any computation.
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "bogus = 1\n").unwrap();
    let out = run(&["estimate", "--data", data, "--param", "ate", "--config",
        bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn overwhelming_replicate_failure_exits_4() {
    // n = 3 cannot host a 10-fold split, so every replicate fails.
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("out.json");
    let out = run(&[
        "simulate",
        "--dgp",
        "dgp-a",
        "--param",
        "ate",
        "--n",
        "3",
        "--reps",
        "4",
        "--out-json",
        json.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
    // The (invalid-flagged) results are still written for post-mortems.
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&json).unwrap()).unwrap();
    assert_eq!(v["aggregates"]["invalid"], true);
    assert_eq!(v["aggregates"]["n_failed"], 4);
}

#[test]
fn jobs_flag_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let run_with_jobs = |jobs: &str, csv: &Path| {
        let out = bin()
            .args([
                "simulate",
                "--dgp",
                "dgp-c",
                "--param",
                "ate",
                "--n",
                "80",
                "--reps",
                "6",
                "--seed",
                "31",
                "--jobs",
                jobs,
                "--out-csv",
                csv.to_str().unwrap(),
                "--out-json",
                dir.path().join(format!("j{jobs}.json")).to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    };
    let c1 = dir.path().join("seq.csv");
    let c4 = dir.path().join("par.csv");
    run_with_jobs("1", &c1);
    run_with_jobs("4", &c4);
    assert_eq!(fs::read(&c1).unwrap(), fs::read(&c4).unwrap());
}

#[test]
fn nondegenerate_ate_report_is_sane() {
    let dir = tempfile::tempdir().unwrap();
    let data = demo_csv(dir.path());
    let report = stdout_json(&run(&[
        "estimate",
        "--data",
        data.to_str().unwrap(),
        "--param",
        "ate",
        "--seed",
        "5",
        "--alpha",
        "0.1",
    ]));
    let psi = report["psi"].as_f64().unwrap();
    let (lo, hi) = (report["ci_lo"].as_f64().unwrap(), report["ci_hi"].as_f64().unwrap());
    assert!(lo < psi && psi < hi);
    assert!(report["se"].as_f64().unwrap() > 0.0);
    assert_eq!(report["alpha"], 0.1);
    assert_eq!(report["n"], 160);
    assert!(report["learner_audit"].as_array().unwrap().len() == 10);
}
