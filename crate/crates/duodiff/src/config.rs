//! Run configuration: a flat, typed key-value file format with includes.
//!
//! Config files are plain text, one `key = value` per line, `#` comments.
//! An `include = "other.cfg"` line splices another file in place (relative
//! paths resolve against the including file), and later assignments win, so
//! a run config typically includes a base file and overrides a few keys.
//! Unknown keys are errors: a typo fails fast instead of silently running
//! with a default. Environment variables override files: key `asr_primary`
//! reads `DUODIFF_ASR_PRIMARY`, and so on, uppercased with `DUODIFF_`
//! prefixed. The effective configuration is echoed, sorted, into each run's
//! output directory.

use crate::clients::RetryPolicy;
use crate::diffusion::{DiffusionError, GuidanceWeights};
use crate::scorenet::NetConfig;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path} line {line}: expected `key = value`, got {text:?}")]
    Syntax {
        path: PathBuf,
        line: usize,
        text: String,
    },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("key {key:?}: cannot parse {value:?} as {expected}")]
    BadValue {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("include depth exceeded at {0}; include cycle?")]
    IncludeDepth(PathBuf),
}

/// The environment prefix for overrides.
pub const ENV_PREFIX: &str = "DUODIFF_";

/// Where sampling gets its noise predictions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplerBackend {
    /// Closed-form mixture scores; no checkpoint needed.
    Oracle,
    /// A trained network loaded from `checkpoint`.
    Net,
}

/// Everything a command run needs, with defaults sized for the bundled toy
/// world so every subcommand works out of the box.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,

    // Noise schedule.
    pub t_steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,

    // Network shape.
    pub d: usize,
    pub d_desc: usize,
    pub d_cont: usize,
    pub d_model: usize,
    pub n_cont_tokens_max: usize,
    pub layers: usize,
    pub net_seed: u64,

    // Training.
    pub train_steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub dropout_p: f64,

    // Sampling.
    pub w_desc: f64,
    pub w_cont: f64,
    pub n_sample_steps: usize,
    pub n_samples: usize,
    pub desc_label: usize,
    pub cont_label: usize,
    pub checkpoint: Option<PathBuf>,
    pub svg: bool,

    // Sweeping.
    pub sweep_grid: Vec<f64>,

    // Curation and evaluation inputs.
    pub manifest: Option<PathBuf>,
    pub eval_input: Option<PathBuf>,

    // Clients: `replay:<path>` or `cmd:<program> [args...]`.
    pub asr_primary: Option<String>,
    pub asr_secondary: Option<String>,
    pub client_timeout_ms: u64,
    pub client_attempts: u32,

    // Decomposition check.
    pub oracle_samples: usize,
    pub oracle_tol: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            out_dir: PathBuf::from("out"),
            t_steps: 1000,
            beta_min: 1e-4,
            beta_max: 0.02,
            d: 2,
            d_desc: 3,
            d_cont: 3,
            d_model: 32,
            n_cont_tokens_max: 8,
            layers: 2,
            net_seed: 7,
            train_steps: 2000,
            batch_size: 16,
            lr: 2e-3,
            dropout_p: 0.1,
            w_desc: 7.0,
            w_cont: 7.0,
            n_sample_steps: 100,
            n_samples: 200,
            desc_label: 0,
            cont_label: 2,
            checkpoint: None,
            svg: true,
            sweep_grid: vec![5.0, 7.0, 9.0],
            manifest: None,
            eval_input: None,
            asr_primary: None,
            asr_secondary: None,
            client_timeout_ms: 30_000,
            client_attempts: 2,
            oracle_samples: 20_000,
            oracle_tol: 1e-9,
        }
    }
}

impl RunConfig {
    /// Load a config file over the defaults, then apply environment
    /// overrides from the process environment.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let mut raw = BTreeMap::new();
        merge_file(path, &mut raw, 0)?;
        let mut config = RunConfig::default();
        config.apply(&raw)?;
        config.apply_env(std::env::vars())?;
        Ok(config)
    }

    /// Defaults plus environment overrides, for runs without a config file.
    pub fn from_env() -> Result<Self, ConfigError> {
        let mut config = RunConfig::default();
        config.apply_env(std::env::vars())?;
        Ok(config)
    }

    /// Apply `DUODIFF_*` variables from an explicit environment, which keeps
    /// the override path testable without touching the process environment.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(
        &mut self,
        vars: I,
    ) -> Result<(), ConfigError> {
        let mut raw = BTreeMap::new();
        for (name, value) in vars {
            if let Some(rest) = name.strip_prefix(ENV_PREFIX) {
                raw.insert(rest.to_lowercase(), value);
            }
        }
        self.apply(&raw)
    }

    /// Apply a parsed key-value map. Unknown keys are errors.
    pub fn apply(&mut self, raw: &BTreeMap<String, String>) -> Result<(), ConfigError> {
        for (key, value) in raw {
            self.set(key, value)?;
        }
        Ok(())
    }

    /// Set one key from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "seed" => self.seed = parse(key, value, "an unsigned integer")?,
            "out_dir" => self.out_dir = PathBuf::from(unquote(value)),
            "t_steps" => self.t_steps = parse(key, value, "an unsigned integer")?,
            "beta_min" => self.beta_min = parse(key, value, "a number")?,
            "beta_max" => self.beta_max = parse(key, value, "a number")?,
            "d" => self.d = parse(key, value, "an unsigned integer")?,
            "d_desc" => self.d_desc = parse(key, value, "an unsigned integer")?,
            "d_cont" => self.d_cont = parse(key, value, "an unsigned integer")?,
            "d_model" => self.d_model = parse(key, value, "an unsigned integer")?,
            "n_cont_tokens_max" => {
                self.n_cont_tokens_max = parse(key, value, "an unsigned integer")?
            }
            "layers" => self.layers = parse(key, value, "an unsigned integer")?,
            "net_seed" => self.net_seed = parse(key, value, "an unsigned integer")?,
            "train_steps" => self.train_steps = parse(key, value, "an unsigned integer")?,
            "batch_size" => self.batch_size = parse(key, value, "an unsigned integer")?,
            "lr" => self.lr = parse(key, value, "a number")?,
            "dropout_p" => self.dropout_p = parse(key, value, "a number")?,
            "w_desc" => self.w_desc = parse(key, value, "a number")?,
            "w_cont" => self.w_cont = parse(key, value, "a number")?,
            "n_sample_steps" => self.n_sample_steps = parse(key, value, "an unsigned integer")?,
            "n_samples" => self.n_samples = parse(key, value, "an unsigned integer")?,
            "desc_label" => self.desc_label = parse(key, value, "an unsigned integer")?,
            "cont_label" => self.cont_label = parse(key, value, "an unsigned integer")?,
            "checkpoint" => self.checkpoint = none_or_path(value),
            "svg" => self.svg = parse_bool(key, value)?,
            "sweep_grid" => self.sweep_grid = parse_grid(key, value)?,
            "manifest" => self.manifest = none_or_path(value),
            "eval_input" => self.eval_input = none_or_path(value),
            "asr_primary" => self.asr_primary = none_or_string(value),
            "asr_secondary" => self.asr_secondary = none_or_string(value),
            "client_timeout_ms" => {
                self.client_timeout_ms = parse(key, value, "an unsigned integer")?
            }
            "client_attempts" => self.client_attempts = parse(key, value, "an unsigned integer")?,
            "oracle_samples" => self.oracle_samples = parse(key, value, "an unsigned integer")?,
            "oracle_tol" => self.oracle_tol = parse(key, value, "a number")?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// The network shape this run trains or loads.
    pub fn net_config(&self) -> NetConfig {
        NetConfig {
            d: self.d,
            d_desc: self.d_desc,
            d_cont: self.d_cont,
            d_model: self.d_model,
            n_cont_tokens_max: self.n_cont_tokens_max,
            n_timesteps: self.t_steps,
            layers: self.layers,
            seed: self.net_seed,
        }
    }

    pub fn guidance(&self) -> Result<GuidanceWeights, DiffusionError> {
        GuidanceWeights::new(self.w_desc, self.w_cont)
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            timeout: Duration::from_millis(self.client_timeout_ms),
            attempts: self.client_attempts,
        }
    }

    /// Oracle scores unless a checkpoint is configured.
    pub fn sampler_backend(&self) -> SamplerBackend {
        if self.checkpoint.is_some() {
            SamplerBackend::Net
        } else {
            SamplerBackend::Oracle
        }
    }

    /// Render every key, sorted, in the same format the parser reads. Two
    /// runs with equal configuration echo byte-identical text.
    pub fn echo(&self) -> String {
        let mut pairs: Vec<(&str, String)> = vec![
            ("asr_primary", opt_str(&self.asr_primary)),
            ("asr_secondary", opt_str(&self.asr_secondary)),
            ("batch_size", self.batch_size.to_string()),
            ("beta_max", self.beta_max.to_string()),
            ("beta_min", self.beta_min.to_string()),
            ("checkpoint", opt_path(&self.checkpoint)),
            ("client_attempts", self.client_attempts.to_string()),
            ("client_timeout_ms", self.client_timeout_ms.to_string()),
            ("cont_label", self.cont_label.to_string()),
            ("d", self.d.to_string()),
            ("d_cont", self.d_cont.to_string()),
            ("d_desc", self.d_desc.to_string()),
            ("d_model", self.d_model.to_string()),
            ("desc_label", self.desc_label.to_string()),
            ("dropout_p", self.dropout_p.to_string()),
            ("eval_input", opt_path(&self.eval_input)),
            ("layers", self.layers.to_string()),
            ("lr", self.lr.to_string()),
            ("manifest", opt_path(&self.manifest)),
            ("n_cont_tokens_max", self.n_cont_tokens_max.to_string()),
            ("n_sample_steps", self.n_sample_steps.to_string()),
            ("n_samples", self.n_samples.to_string()),
            ("net_seed", self.net_seed.to_string()),
            ("oracle_samples", self.oracle_samples.to_string()),
            ("oracle_tol", self.oracle_tol.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
            ("seed", self.seed.to_string()),
            ("svg", self.svg.to_string()),
            (
                "sweep_grid",
                self.sweep_grid
                    .iter()
                    .map(|w| w.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("t_steps", self.t_steps.to_string()),
            ("train_steps", self.train_steps.to_string()),
            ("w_cont", self.w_cont.to_string()),
            ("w_desc", self.w_desc.to_string()),
        ];
        pairs.sort_by_key(|(k, _)| *k);
        let mut out = String::new();
        for (key, value) in pairs {
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }
}

fn opt_str(v: &Option<String>) -> String {
    v.clone().unwrap_or_else(|| "none".to_string())
}

fn opt_path(v: &Option<PathBuf>) -> String {
    v.as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_else(|| "none".to_string())
}

fn none_or_string(value: &str) -> Option<String> {
    let v = unquote(value);
    if v.is_empty() || v == "none" {
        None
    } else {
        Some(v.to_string())
    }
}

fn none_or_path(value: &str) -> Option<PathBuf> {
    none_or_string(value).map(PathBuf::from)
}

fn parse<T: std::str::FromStr>(
    key: &str,
    value: &str,
    expected: &'static str,
) -> Result<T, ConfigError> {
    unquote(value).parse().map_err(|_| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        expected,
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match unquote(value) {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            expected: "a boolean",
        }),
    }
}

fn parse_grid(key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    let bad = || ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        expected: "a comma-separated list of numbers",
    };
    let vals: Result<Vec<f64>, _> = unquote(value)
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
        .collect();
    let vals = vals?;
    if vals.is_empty() {
        return Err(bad());
    }
    Ok(vals)
}

fn unquote(value: &str) -> &str {
    let v = value.trim();
    if v.len() >= 2 && (v.starts_with('"') && v.ends_with('"')) {
        &v[1..v.len() - 1]
    } else {
        v
    }
}

const MAX_INCLUDE_DEPTH: usize = 16;

fn merge_file(
    path: &Path,
    raw: &mut BTreeMap<String, String>,
    depth: usize,
) -> Result<(), ConfigError> {
    if depth > MAX_INCLUDE_DEPTH {
        return Err(ConfigError::IncludeDepth(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                path: path.to_path_buf(),
                line: i + 1,
                text: line.to_string(),
            });
        };
        let key = key.trim();
        let value = value.trim();
        if key == "include" {
            let target = Path::new(unquote(value));
            let resolved = if target.is_absolute() {
                target.to_path_buf()
            } else {
                base.join(target)
            };
            merge_file(&resolved, raw, depth + 1)?;
        } else {
            raw.insert(key.to_string(), value.to_string());
        }
    }
    Ok(())
}
