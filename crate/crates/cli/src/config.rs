//! Flag / config-file / environment merging. Every flag has a config-file
//! equivalent under the same (long) name; explicit flags win over file
//! values, and CVTMLE_SEED overrides only the built-in default seed.

use std::fmt;
use std::path::PathBuf;

use cvtmle_core::learners::{Family, LearnerSpec};
use cvtmle_core::params::{ParameterKind, Variant};
use cvtmle_core::pipeline::{
    EstimatorConfig, DEFAULT_ALPHA, DEFAULT_G_BOUNDS, DEFAULT_K, DEFAULT_MAX_ITER, DEFAULT_SEED,
};
use serde_json::{json, Map, Value};

use crate::{EstimateArgs, SimulateArgs};

/// A config error: rendered as a single-line diagnostic, exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

type Result<T> = std::result::Result<T, ConfigError>;

fn err<T>(msg: impl Into<String>) -> Result<T> {
    Err(ConfigError(msg.into()))
}

/// Flat key-value view of a TOML config file, checked against the set of
/// keys the invoked subcommand understands.
pub struct FileConfig {
    table: toml::Table,
}

const SHARED_KEYS: &[&str] = &[
    "param", "variant", "k", "seed", "q-learners", "g-learners", "g-lo", "g-hi", "max-iter",
    "alpha",
];
const ESTIMATE_KEYS: &[&str] =
    &["data", "treatment-col", "outcome-col", "out", "dump-nuisances", "dump-trace", "dump-ic"];
const SIMULATE_KEYS: &[&str] =
    &["dgp", "n", "reps", "compare-variants", "jobs", "out-csv", "out-json"];

impl FileConfig {
    pub fn empty() -> Self {
        FileConfig { table: toml::Table::new() }
    }

    pub fn load(path: &PathBuf, subcommand: &str) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        let table: toml::Table = text
            .parse()
            .map_err(|e| ConfigError(format!("bad config {}: {e}", path.display())))?;
        let extra: &[&str] = match subcommand {
            "estimate" => ESTIMATE_KEYS,
            _ => SIMULATE_KEYS,
        };
        for key in table.keys() {
            if !SHARED_KEYS.contains(&key.as_str()) && !extra.contains(&key.as_str()) {
                return err(format!(
                    "unknown config key {key:?} in {} (no matching {subcommand} flag)",
                    path.display()
                ));
            }
        }
        Ok(FileConfig { table })
    }

    fn string(&self, key: &str) -> Result<Option<String>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s.clone())),
            Some(v) => err(format!("config key {key:?} must be a string, got {v}")),
        }
    }

    fn integer(&self, key: &str) -> Result<Option<i64>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(toml::Value::Integer(i)) => Ok(Some(*i)),
            Some(v) => err(format!("config key {key:?} must be an integer, got {v}")),
        }
    }

    fn float(&self, key: &str) -> Result<Option<f64>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(toml::Value::Float(x)) => Ok(Some(*x)),
            Some(toml::Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(v) => err(format!("config key {key:?} must be a number, got {v}")),
        }
    }

    fn boolean(&self, key: &str) -> Result<Option<bool>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(toml::Value::Boolean(b)) => Ok(Some(*b)),
            Some(v) => err(format!("config key {key:?} must be a boolean, got {v}")),
        }
    }

    fn unsigned(&self, key: &str) -> Result<Option<u64>> {
        match self.integer(key)? {
            None => Ok(None),
            Some(i) if i >= 0 => Ok(Some(i as u64)),
            Some(i) => err(format!("config key {key:?} must be nonnegative, got {i}")),
        }
    }

    fn size(&self, key: &str) -> Result<Option<usize>> {
        Ok(self.unsigned(key)?.map(|v| v as usize))
    }
}

/// Seed precedence: explicit flag > config file > CVTMLE_SEED > built-in.
fn resolve_seed(flag: Option<u64>, file: &FileConfig) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Some(s) = file.unsigned("seed")? {
        return Ok(s);
    }
    match std::env::var("CVTMLE_SEED") {
        Ok(text) => text
            .trim()
            .parse::<u64>()
            .map_err(|_| ConfigError(format!("CVTMLE_SEED must be a nonnegative integer, got {text:?}"))),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

fn parse_learner_list(spec: &str, family: Family, what: &str) -> Result<Vec<LearnerSpec>> {
    let specs: Vec<&str> = spec.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if specs.is_empty() {
        return err(format!("{what} learner list is empty"));
    }
    specs
        .iter()
        .map(|s| LearnerSpec::parse(s, family).map_err(|e| ConfigError(e.to_string())))
        .collect()
}

fn learner_labels(specs: &[LearnerSpec]) -> String {
    specs.iter().map(LearnerSpec::label).collect::<Vec<_>>().join(",")
}

/// Everything shared between the two subcommands, already validated.
pub struct CommonConfig {
    pub kind: ParameterKind,
    pub estimator: EstimatorConfig,
    pub q_spec: String,
    pub g_spec: String,
}

fn resolve_common(
    param: Option<&str>,
    variant: Option<&str>,
    k: Option<usize>,
    seed: Option<u64>,
    q_learners: Option<&str>,
    g_learners: Option<&str>,
    g_lo: Option<f64>,
    g_hi: Option<f64>,
    max_iter: Option<usize>,
    alpha: Option<f64>,
    file: &FileConfig,
    usage: &str,
) -> Result<CommonConfig> {
    let param = match param.map(str::to_owned).or(file.string("param")?) {
        Some(p) => p,
        None => return err(format!("missing --param; usage: {usage}")),
    };
    let kind = ParameterKind::parse(&param).map_err(|e| ConfigError(e.to_string()))?;
    let variant = match variant.map(str::to_owned).or(file.string("variant")?) {
        Some(v) => Variant::parse(&v).map_err(|e| ConfigError(e.to_string()))?,
        None => Variant::Stacked,
    };
    let q_spec = q_learners
        .map(str::to_owned)
        .or(file.string("q-learners")?)
        .unwrap_or_else(|| "mean,glm,glm-interact".to_owned());
    let g_spec = g_learners
        .map(str::to_owned)
        .or(file.string("g-learners")?)
        .unwrap_or_else(|| "mean,glm".to_owned());

    let mut estimator = EstimatorConfig::new(kind);
    estimator.variant = variant;
    estimator.k = k.or(file.size("k")?).unwrap_or(DEFAULT_K);
    estimator.seed = resolve_seed(seed, file)?;
    estimator.q_candidates = parse_learner_list(&q_spec, Family::Binomial, "outcome")?;
    estimator.g_candidates = parse_learner_list(&g_spec, Family::Binomial, "propensity")?;
    estimator.g_bounds = (
        g_lo.or(file.float("g-lo")?).unwrap_or(DEFAULT_G_BOUNDS.0),
        g_hi.or(file.float("g-hi")?).unwrap_or(DEFAULT_G_BOUNDS.1),
    );
    estimator.max_iter = max_iter.or(file.size("max-iter")?).unwrap_or(DEFAULT_MAX_ITER);
    estimator.alpha = alpha.or(file.float("alpha")?).unwrap_or(DEFAULT_ALPHA);
    estimator.validate().map_err(|e| ConfigError(e.to_string()))?;

    let q_spec = learner_labels(&estimator.q_candidates);
    let g_spec = learner_labels(&estimator.g_candidates);
    Ok(CommonConfig { kind, estimator, q_spec, g_spec })
}

fn common_echo(cmd: &str, common: &CommonConfig) -> Map<String, Value> {
    let est = &common.estimator;
    let mut map = Map::new();
    map.insert("command".into(), json!(cmd));
    map.insert("param".into(), json!(common.kind.label()));
    map.insert("variant".into(), json!(est.variant.label()));
    map.insert("k".into(), json!(est.k));
    map.insert("seed".into(), json!(est.seed));
    map.insert("q-learners".into(), json!(common.q_spec));
    map.insert("g-learners".into(), json!(common.g_spec));
    map.insert("g-lo".into(), json!(est.g_bounds.0));
    map.insert("g-hi".into(), json!(est.g_bounds.1));
    map.insert("max-iter".into(), json!(est.max_iter));
    map.insert("alpha".into(), json!(est.alpha));
    map
}

fn insert_path(map: &mut Map<String, Value>, key: &str, path: &Option<PathBuf>) {
    if let Some(p) = path {
        map.insert(key.into(), json!(p.display().to_string()));
    }
}

pub struct EstimatePlan {
    pub data: PathBuf,
    pub treatment_col: String,
    pub outcome_col: String,
    pub common: CommonConfig,
    pub out: Option<PathBuf>,
    pub dump_nuisances: Option<PathBuf>,
    pub dump_trace: Option<PathBuf>,
    pub dump_ic: Option<PathBuf>,
    /// Effective config, echoed into the report.
    pub echo: Value,
}

const ESTIMATE_USAGE: &str =
    "cvtmle estimate --data <PATH> --param <ate|tsm|vte> [--variant <stacked|foldwise>] [options]";

pub fn resolve_estimate(args: &EstimateArgs) -> Result<EstimatePlan> {
    let file = match &args.config {
        Some(path) => FileConfig::load(path, "estimate")?,
        None => FileConfig::empty(),
    };
    let data = match args.data.clone().or(file.string("data")?.map(PathBuf::from)) {
        Some(d) => d,
        None => return err(format!("missing --data; usage: {ESTIMATE_USAGE}")),
    };
    let treatment_col = args
        .treatment_col
        .clone()
        .or(file.string("treatment-col")?)
        .unwrap_or_else(|| "A".to_owned());
    let outcome_col =
        args.outcome_col.clone().or(file.string("outcome-col")?).unwrap_or_else(|| "Y".to_owned());
    let common = resolve_common(
        args.param.as_deref(),
        args.variant.as_deref(),
        args.k,
        args.seed,
        args.q_learners.as_deref(),
        args.g_learners.as_deref(),
        args.g_lo,
        args.g_hi,
        args.max_iter,
        args.alpha,
        &file,
        ESTIMATE_USAGE,
    )?;
    let out = args.out.clone().or(file.string("out")?.map(PathBuf::from));
    let dump_nuisances =
        args.dump_nuisances.clone().or(file.string("dump-nuisances")?.map(PathBuf::from));
    let dump_trace = args.dump_trace.clone().or(file.string("dump-trace")?.map(PathBuf::from));
    let dump_ic = args.dump_ic.clone().or(file.string("dump-ic")?.map(PathBuf::from));

    let mut echo = common_echo("estimate", &common);
    echo.insert("data".into(), json!(data.display().to_string()));
    echo.insert("treatment-col".into(), json!(treatment_col));
    echo.insert("outcome-col".into(), json!(outcome_col));
    insert_path(&mut echo, "out", &out);
    insert_path(&mut echo, "dump-nuisances", &dump_nuisances);
    insert_path(&mut echo, "dump-trace", &dump_trace);
    insert_path(&mut echo, "dump-ic", &dump_ic);

    Ok(EstimatePlan {
        data,
        treatment_col,
        outcome_col,
        common,
        out,
        dump_nuisances,
        dump_trace,
        dump_ic,
        echo: Value::Object(echo),
    })
}

pub struct SimulatePlan {
    pub dgp: String,
    pub n: usize,
    pub reps: u64,
    pub compare_variants: bool,
    pub jobs: usize,
    pub common: CommonConfig,
    pub out_csv: Option<PathBuf>,
    pub out_json: Option<PathBuf>,
    pub echo: Value,
}

const SIMULATE_USAGE: &str =
    "cvtmle simulate --dgp <NAME> --param <ate|tsm|vte> --n <N> --reps <R> [options]";

pub fn resolve_simulate(args: &SimulateArgs) -> Result<SimulatePlan> {
    let file = match &args.config {
        Some(path) => FileConfig::load(path, "simulate")?,
        None => FileConfig::empty(),
    };
    let dgp = match args.dgp.clone().or(file.string("dgp")?) {
        Some(d) => d,
        None => return err(format!("missing --dgp; usage: {SIMULATE_USAGE}")),
    };
    let n = match args.n.or(file.size("n")?) {
        Some(n) if n >= 2 => n,
        Some(n) => return err(format!("--n must be at least 2, got {n}")),
        None => return err(format!("missing --n; usage: {SIMULATE_USAGE}")),
    };
    let reps = match args.reps.or(file.unsigned("reps")?) {
        Some(r) if r >= 1 => r,
        Some(_) => return err("--reps must be at least 1"),
        None => return err(format!("missing --reps; usage: {SIMULATE_USAGE}")),
    };
    let compare_variants =
        args.compare_variants || file.boolean("compare-variants")?.unwrap_or(false);
    if compare_variants && reps < 2 {
        return err("--compare-variants needs --reps of at least 2");
    }
    let jobs = match args.jobs.or(file.size("jobs")?) {
        Some(0) => return err("--jobs must be at least 1"),
        Some(j) => j,
        None => 1,
    };
    let common = resolve_common(
        args.param.as_deref(),
        args.variant.as_deref(),
        args.k,
        args.seed,
        args.q_learners.as_deref(),
        args.g_learners.as_deref(),
        args.g_lo,
        args.g_hi,
        args.max_iter,
        args.alpha,
        &file,
        SIMULATE_USAGE,
    )?;
    let out_csv = args.out_csv.clone().or(file.string("out-csv")?.map(PathBuf::from));
    let out_json = args.out_json.clone().or(file.string("out-json")?.map(PathBuf::from));

    let mut echo = common_echo("simulate", &common);
    echo.insert("dgp".into(), json!(dgp));
    echo.insert("n".into(), json!(n));
    echo.insert("reps".into(), json!(reps));
    echo.insert("compare-variants".into(), json!(compare_variants));
    echo.insert("jobs".into(), json!(jobs));
    insert_path(&mut echo, "out-csv", &out_csv);
    insert_path(&mut echo, "out-json", &out_json);

    Ok(SimulatePlan {
        dgp,
        n,
        reps,
        compare_variants,
        jobs,
        common,
        out_csv,
        out_json,
        echo: Value::Object(echo),
    })
}
