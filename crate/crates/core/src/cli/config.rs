//! The effective run configuration and how it is assembled from defaults,
//! the environment, a config file and command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{gen_synthetic, load_csv_with, CsvOptions, Dataset, SyntheticConfig};
use crate::equivalence::VerifySettings;
use crate::error::{Error, Result};
use crate::strategic::{BiLevelConfig, CostMatrix, ManipulationConfig, ScoreLink};

pub const SEED_ENV: &str = "STRATEGEM_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// Every knob of every command, flat so that it round-trips through a
/// `key = value` file and through the header of any output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,

    // Synthetic population, used whenever `dataset` is absent.
    pub d: usize,
    pub n: usize,
    pub class_offset: f64,
    pub class_scale: f64,
    pub positive_fraction: f64,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    pub label_column: String,
    pub positive_token: String,
    pub one_hot: bool,

    pub eta: f64,
    pub lambda: f64,
    /// Diagonal of the manipulation cost; identity when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost_diagonal: Option<Vec<f64>>,

    pub outer_eta: f64,
    pub iterations: usize,
    pub link: ScoreLink,
    pub init_scale: f64,
    pub folds: usize,
    pub window_step: usize,

    pub inner_instances: usize,
    pub outer_instances: usize,
    pub lemma_instances: usize,
    pub softmax_instances: usize,
    pub max_dim: usize,
    pub max_context: usize,
    pub layers: usize,
    pub tamper: bool,

    pub scaling_ns: Vec<usize>,
    pub scaling_seeds: usize,
    pub scaling_queries: usize,
    pub scaling_class_scale: f64,

    pub format: OutputFormat,
    // Where and how fast a run happens does not change what it writes, so
    // these two are accepted from files but never echoed.
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing)]
    pub jobs: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            d: 8,
            n: 2000,
            class_offset: 0.8,
            class_scale: 2.5,
            positive_fraction: 0.5,
            dataset: None,
            label_column: "label".into(),
            positive_token: "1".into(),
            one_hot: false,
            eta: 1.0,
            lambda: 1.0,
            cost_diagonal: None,
            outer_eta: 5e-4,
            iterations: 100,
            link: ScoreLink::Logistic,
            init_scale: 0.1,
            folds: 10,
            window_step: 24,
            inner_instances: 1000,
            outer_instances: 1000,
            lemma_instances: 100,
            softmax_instances: 500,
            max_dim: 16,
            max_context: 64,
            layers: 10,
            tamper: false,
            scaling_ns: vec![16, 32, 64, 128, 256],
            scaling_seeds: 20,
            scaling_queries: 16,
            scaling_class_scale: 1.0,
            format: OutputFormat::Csv,
            out: None,
            jobs: None,
        }
    }
}

/// Values given on the command line; each one present overrides the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<OutputFormat>,
    pub jobs: Option<usize>,
    pub tamper: bool,
}

/// Marker opening the header block of every CSV this tool writes.
pub const HEADER_MARKER: &str = "# strategem";

/// Pulls the `key = value` block out of a previous output file, or returns
/// the text untouched when it is a plain config file.
fn config_text(text: &str) -> Result<toml::Table> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') {
        let value: serde_json::Value =
            serde_json::from_str(trimmed).map_err(|e| Error::config(format!("config JSON: {e}")))?;
        let config = value
            .get("metadata")
            .and_then(|m| m.get("config"))
            .ok_or_else(|| Error::config("JSON config lacks metadata.config"))?;
        return toml::Table::try_from(config).map_err(|e| Error::config(format!("config JSON: {e}")));
    }
    let body = if trimmed.starts_with(HEADER_MARKER) {
        trimmed
            .lines()
            .skip(1)
            .map_while(|line| line.strip_prefix('#'))
            .map(|line| line.strip_prefix(' ').unwrap_or(line))
            .collect::<Vec<_>>()
            .join("\n")
    } else {
        text.to_string()
    };
    body.parse::<toml::Table>().map_err(|e| Error::config(format!("config file: {e}")))
}

impl RunConfig {
    /// Defaults, then `env_seed`, then the file at `path`, then `flags`.
    pub fn resolve(path: Option<&Path>, env_seed: Option<&str>, flags: &Overrides) -> Result<Self> {
        let mut table =
            toml::Table::try_from(RunConfig::default()).map_err(|e| Error::config(e.to_string()))?;
        if let Some(raw) = env_seed {
            let seed: u64 = raw
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("{SEED_ENV} must be a u64, got '{raw}'")))?;
            table.insert("seed".into(), toml::Value::Integer(seed_to_toml(seed)?));
        }
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            table.extend(config_text(&text)?);
        }
        let mut cfg: RunConfig =
            table.try_into().map_err(|e: toml::de::Error| Error::config(e.message().to_string()))?;
        if let Some(seed) = flags.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &flags.out {
            cfg.out = Some(out.clone());
        }
        if let Some(format) = flags.format {
            cfg.format = format;
        }
        if let Some(jobs) = flags.jobs {
            cfg.jobs = Some(jobs);
        }
        cfg.tamper |= flags.tamper;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        seed_to_toml(self.seed)?;
        let positive = [
            ("d", self.d),
            ("n", self.n),
            ("folds", self.folds),
            ("window_step", self.window_step),
            ("inner_instances", self.inner_instances),
            ("outer_instances", self.outer_instances),
            ("lemma_instances", self.lemma_instances),
            ("softmax_instances", self.softmax_instances),
            ("max_dim", self.max_dim),
            ("max_context", self.max_context),
            ("scaling_queries", self.scaling_queries),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(Error::config(format!("{name} must be >= 1")));
            }
        }
        if self.iterations == 0 {
            return Err(Error::config("iterations must be >= 1"));
        }
        if self.folds < 2 {
            return Err(Error::config("folds must be >= 2"));
        }
        if self.jobs == Some(0) {
            return Err(Error::config("jobs must be >= 1"));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::config("eta must be finite and > 0"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("lambda must be finite and >= 0"));
        }
        if !(self.scaling_class_scale > 0.0 && self.scaling_class_scale.is_finite()) {
            return Err(Error::config("scaling_class_scale must be finite and > 0"));
        }
        self.synthetic_config().validate()
    }

    pub fn synthetic_config(&self) -> SyntheticConfig {
        SyntheticConfig {
            positive_fraction: self.positive_fraction,
            ..SyntheticConfig::symmetric(self.d, self.n, self.class_offset, self.class_scale, self.seed)
        }
    }

    /// The CSV at `dataset` when set, otherwise the seeded synthetic draw.
    pub fn load_dataset(&self) -> Result<Dataset> {
        match &self.dataset {
            Some(path) => load_csv_with(
                path,
                &CsvOptions {
                    label_column: self.label_column.clone(),
                    positive_token: self.positive_token.clone(),
                    one_hot: self.one_hot,
                },
            ),
            None => gen_synthetic(&self.synthetic_config()),
        }
    }

    pub fn manipulation(&self, dim: usize) -> Result<ManipulationConfig> {
        let cost = match &self.cost_diagonal {
            Some(diag) if diag.len() != dim => {
                return Err(Error::config(format!(
                    "cost_diagonal has {} entries but the data has {dim} features",
                    diag.len()
                )))
            }
            Some(diag) => CostMatrix::diagonal(diag)?,
            None => CostMatrix::identity(dim),
        };
        ManipulationConfig::new(self.eta, self.lambda, cost)
    }

    pub fn bilevel(&self, dim: usize) -> Result<BiLevelConfig> {
        let mut cfg =
            BiLevelConfig::new(self.manipulation(dim)?, self.outer_eta, self.iterations).with_link(self.link);
        cfg.init_scale = self.init_scale;
        Ok(cfg)
    }

    pub fn verify_settings(&self, instances: usize) -> VerifySettings {
        VerifySettings {
            layers: self.layers,
            tamper: self.tamper,
            ..VerifySettings::new(self.seed, instances, self.max_dim, self.max_context)
        }
    }

    /// The `key = value` lines echoed into output headers.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }
}

// TOML integers are signed 64-bit.
fn seed_to_toml(seed: u64) -> Result<i64> {
    i64::try_from(seed).map_err(|_| Error::config(format!("seed must be <= {}, got {seed}", i64::MAX)))
}
