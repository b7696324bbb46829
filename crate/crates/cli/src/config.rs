//! Flat `key = value` configuration files and flag overrides.
//!
//! The file is TOML restricted to top-level scalars (plus the
//! `hidden_dims` integer array). Unknown keys, wrong types and
//! out-of-range values are rejected with an error naming the key.

use std::path::{Path, PathBuf};

use dean_core::clustering::Linkage;
use dean_core::harness::ExperimentConfig;
use dean_core::scoring::InverseKind;
use dean_core::strategies::StrategyId;
use toml::{Table, Value};

use crate::error::CliError;

/// Environment variable naming the directory that holds the MNIST files.
pub const DATA_DIR_ENV: &str = "DEAN_DATA_DIR";

pub const DATASET_IDS: [&str; 2] = ["mnist", "blobs"];

/// Every key accepted in a configuration file.
pub const KEYS: [&str; 32] = [
    "dataset",
    "strategy",
    "denoise",
    "epsilon",
    "b",
    "iterations",
    "seeds_per_class",
    "passes",
    "hidden_dims",
    "dropout_rate",
    "epochs",
    "batch_size",
    "learning_rate",
    "momentum",
    "weight_decay",
    "channel_learning_rate",
    "f_kind",
    "scale_l",
    "beta_cap",
    "linkage",
    "validation_size",
    "test_size",
    "repetitions",
    "master_seed",
    "max_cluster_pool",
    "jobs",
    "record_wall_time",
    "data_dir",
    "blobs_classes",
    "blobs_per_class",
    "blobs_dim",
    "blobs_separation",
];

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Mnist { dir: PathBuf },
    Blobs {
        classes: usize,
        per_class: usize,
        dim: usize,
        separation: f64,
    },
}

/// A fully resolved invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub experiment: ExperimentConfig,
    pub source: DataSource,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub dataset: Option<String>,
    pub strategy: Option<String>,
    pub epsilon: Option<f64>,
    pub denoise: Option<bool>,
    pub b: Option<usize>,
    pub iterations: Option<usize>,
    pub repetitions: Option<usize>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub data_dir: Option<PathBuf>,
}

struct Raw {
    table: Table,
}

impl Raw {
    fn value(&self, key: &str) -> Option<&Value> {
        self.table.get(key)
    }

    fn type_error(key: &str, expected: &str, found: &Value) -> CliError {
        CliError::config(key, format!("expected {expected}, found {}", found.type_str()))
    }

    fn string(&self, key: &str) -> Result<Option<String>, CliError> {
        match self.value(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(v) => Err(Self::type_error(key, "a string", v)),
        }
    }

    fn bool(&self, key: &str) -> Result<Option<bool>, CliError> {
        match self.value(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(v) => Err(Self::type_error(key, "true or false", v)),
        }
    }

    fn float(&self, key: &str) -> Result<Option<f64>, CliError> {
        match self.value(key) {
            None => Ok(None),
            Some(Value::Float(f)) => Ok(Some(*f)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(v) => Err(Self::type_error(key, "a number", v)),
        }
    }

    fn uint(&self, key: &str) -> Result<Option<u64>, CliError> {
        match self.value(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(Value::Integer(i)) => Err(CliError::config(key, format!("{i} is negative"))),
            Some(v) => Err(Self::type_error(key, "a non-negative integer", v)),
        }
    }

    fn usize(&self, key: &str) -> Result<Option<usize>, CliError> {
        Ok(self.uint(key)?.map(|v| v as usize))
    }

    fn usize_list(&self, key: &str) -> Result<Option<Vec<usize>>, CliError> {
        match self.value(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    Value::Integer(i) if *i > 0 => Ok(*i as usize),
                    other => Err(CliError::config(
                        key,
                        format!("expected positive integers, found {other}"),
                    )),
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
            Some(v) => Err(Self::type_error(key, "an array of integers", v)),
        }
    }
}

fn parse_enum<T: std::str::FromStr<Err = dean_core::Error>>(key: &str, value: &str) -> Result<T, CliError> {
    value.parse().map_err(|e: dean_core::Error| match e {
        dean_core::Error::InvalidConfig { reason, .. } => CliError::config(key, reason),
        other => CliError::config(key, other.to_string()),
    })
}

/// Reads `path` (if given), applies `overrides` and fills in defaults.
pub fn parse_config(path: Option<&Path>, overrides: &Overrides) -> Result<Settings, CliError> {
    let table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!(
                "cannot read config file {}: {e}",
                p.display()
            )))?;
            text.parse::<Table>()
                .map_err(|e| CliError::Usage(format!("{}: {}", p.display(), e.message())))?
        }
        None => Table::new(),
    };
    for key in table.keys() {
        if !KEYS.contains(&key.as_str()) {
            return Err(CliError::config(key, "unknown key"));
        }
    }
    resolve(&Raw { table }, overrides)
}

fn resolve(raw: &Raw, ov: &Overrides) -> Result<Settings, CliError> {
    let dataset = ov
        .dataset
        .clone()
        .or(raw.string("dataset")?)
        .unwrap_or_else(|| "mnist".into());
    if !DATASET_IDS.contains(&dataset.as_str()) {
        return Err(CliError::UnknownDataset(dataset));
    }
    let blobs = dataset == "blobs";
    let mut c = ExperimentConfig {
        dataset: dataset.clone(),
        ..ExperimentConfig::default()
    };
    if blobs {
        c.budget = 10;
        c.validation_size = 100;
        c.test_size = 150;
        c.model.hidden_dims = vec![32];
    }

    if let Some(s) = ov.strategy.clone().or(raw.string("strategy")?) {
        c.strategy = parse_enum::<StrategyId>("strategy", &s)?;
    }
    c.denoise = ov.denoise.or(raw.bool("denoise")?).unwrap_or(false);
    if let Some(e) = ov.epsilon.or(raw.float("epsilon")?) {
        c.epsilon = e;
    }
    if let Some(b) = ov.b.or(raw.usize("b")?) {
        c.budget = b;
    }
    if let Some(t) = ov.iterations.or(raw.usize("iterations")?) {
        c.iterations = t;
    }
    if let Some(r) = ov.repetitions.or(raw.usize("repetitions")?) {
        c.repetitions = r;
    }
    if let Some(s) = ov.seed.or(raw.uint("master_seed")?) {
        c.master_seed = s;
    }
    if let Some(j) = ov.jobs.or(raw.usize("jobs")?) {
        c.jobs = j;
    }
    if let Some(v) = raw.usize("seeds_per_class")? {
        c.seeds_per_class = v;
    }
    if let Some(v) = raw.usize("passes")? {
        c.passes = v;
    }
    if let Some(v) = raw.usize_list("hidden_dims")? {
        c.model.hidden_dims = v;
    }
    if let Some(v) = raw.float("dropout_rate")? {
        c.model.dropout_rate = v;
    }
    if let Some(v) = raw.usize("epochs")? {
        c.model.epochs = v;
    }
    if let Some(v) = raw.usize("batch_size")? {
        c.model.batch_size = v;
    }
    if let Some(v) = raw.float("learning_rate")? {
        c.model.learning_rate = v;
    }
    if let Some(v) = raw.float("momentum")? {
        c.model.momentum = v;
    }
    if let Some(v) = raw.float("weight_decay")? {
        c.model.weight_decay = v;
    }
    if let Some(v) = raw.float("channel_learning_rate")? {
        c.model.channel_learning_rate = v;
    }
    if let Some(v) = raw.string("f_kind")? {
        c.beta.kind = parse_enum::<InverseKind>("f_kind", &v)?;
    }
    if let Some(v) = raw.float("scale_l")? {
        c.beta.scale = v;
    }
    if let Some(v) = raw.float("beta_cap")? {
        c.beta.cap = v;
    }
    if let Some(v) = raw.string("linkage")? {
        c.linkage = parse_enum::<Linkage>("linkage", &v)?;
    }
    if let Some(v) = raw.usize("validation_size")? {
        c.validation_size = v;
    }
    if let Some(v) = raw.usize("test_size")? {
        c.test_size = v;
    }
    if let Some(v) = raw.usize("max_cluster_pool")? {
        c.max_cluster_pool = Some(v);
    }
    if let Some(v) = raw.bool("record_wall_time")? {
        c.record_wall_time = v;
    }

    let source = if blobs {
        let classes = raw.usize("blobs_classes")?.unwrap_or(3);
        let per_class = raw.usize("blobs_per_class")?.unwrap_or(200);
        let dim = raw.usize("blobs_dim")?.unwrap_or(2);
        let separation = raw.float("blobs_separation")?.unwrap_or(4.0);
        if classes < 2 {
            return Err(CliError::config("blobs_classes", "must be at least 2"));
        }
        if per_class == 0 {
            return Err(CliError::config("blobs_per_class", "must be at least 1"));
        }
        if dim == 0 {
            return Err(CliError::config("blobs_dim", "must be at least 1"));
        }
        if !(separation > 0.0 && separation.is_finite()) {
            return Err(CliError::config("blobs_separation", "must be positive"));
        }
        c.model.input_dim = dim;
        c.model.num_classes = classes;
        DataSource::Blobs {
            classes,
            per_class,
            dim,
            separation,
        }
    } else {
        let dir = ov
            .data_dir
            .clone()
            .or(raw.string("data_dir")?.map(PathBuf::from))
            .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("data/mnist"));
        DataSource::Mnist { dir }
    };
    c.validate().map_err(CliError::from_core)?;
    Ok(Settings {
        experiment: c,
        source,
    })
}
