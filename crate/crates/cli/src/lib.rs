//! Command-line driver for `skyrlab-core`: config parsing, task dispatch and
//! output files.

pub mod config;
mod tasks;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Map, Value};
use skyrlab_core::SkyrError;

pub use config::{RunConfig, TaskKind};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("resource refusal: {0}")]
    Resource(String),
    #[error(transparent)]
    Core(#[from] SkyrError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for bad input, 3 for numerical failure, 4 for refused work, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Resource(_) => 4,
            CliError::Io(_) => 1,
            CliError::Core(e) => match e {
                SkyrError::Config(_)
                | SkyrError::Contract(_)
                | SkyrError::IndexOutOfRange { .. }
                | SkyrError::DimensionMismatch { .. }
                | SkyrError::DegenerateInput(_)
                | SkyrError::NoIsolatedQubit { .. } => 2,
                SkyrError::NotConverged { .. } | SkyrError::IntegratorFailure { .. } => 3,
                SkyrError::TooLarge { .. } => 4,
                SkyrError::Io(_) | SkyrError::Json(_) => 1,
            },
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub dump_lattice: bool,
}

/// Key scalars of a finished run. `runtime` is kept out of the files so
/// reruns stay byte-identical.
#[derive(Debug, Clone)]
pub struct Summary {
    pub fields: Map<String, Value>,
    pub runtime: f64,
}

impl Summary {
    pub(crate) fn new(task: TaskKind, e0: Option<f64>, gap: Option<f64>, q: Option<f64>) -> Self {
        let mut fields = Map::new();
        fields.insert("task".into(), json!(task.block_name()));
        fields.insert("E0".into(), finite_or_null(e0));
        fields.insert("gap".into(), finite_or_null(gap));
        fields.insert("Q".into(), finite_or_null(q));
        Summary { fields, runtime: 0.0 }
    }

    pub(crate) fn set(&mut self, key: &str, v: Value) {
        self.fields.insert(key.into(), v);
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.fields.get(key)
    }

    /// The one-line JSON printed on stdout.
    pub fn line(&self) -> String {
        let mut m = self.fields.clone();
        m.insert("runtime".into(), json!(self.runtime));
        Value::Object(m).to_string()
    }
}

pub(crate) fn finite_or_null(x: Option<f64>) -> Value {
    match x {
        Some(v) if v.is_finite() => json!(v),
        _ => Value::Null,
    }
}

pub fn run(task: TaskKind, config_path: &Path, ov: &Overrides) -> Result<Summary, CliError> {
    let cfg = RunConfig::from_path(config_path)?;
    run_config(task, cfg, ov)
}

pub fn run_config(task: TaskKind, mut cfg: RunConfig, ov: &Overrides) -> Result<Summary, CliError> {
    let start = Instant::now();
    if let Some(w) = ov.workers {
        cfg.workers = Some(w);
    }
    if let Some(s) = ov.seed {
        cfg.seed = s;
    }
    if let Some(o) = &ov.out {
        cfg.output.directory = o.clone();
    }
    cfg.validate(task)?;
    let lattice = cfg.lattice.build()?;
    std::fs::create_dir_all(&cfg.output.directory)?;
    if ov.dump_lattice {
        let text = serde_json::to_string_pretty(&lattice.to_json()).map_err(SkyrError::from)?;
        std::fs::write(cfg.output.directory.join("lattice.json"), text + "\n")?;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Resource(format!("thread pool: {e}")))?;
    let mut summary = pool.install(|| tasks::execute(task, &cfg, &lattice))?;

    if cfg.output.json() {
        let text = serde_json::to_string_pretty(&Value::Object(summary.fields.clone())).map_err(SkyrError::from)?;
        std::fs::write(cfg.output.directory.join("summary.json"), text + "\n")?;
    }
    summary.runtime = start.elapsed().as_secs_f64();
    Ok(summary)
}
