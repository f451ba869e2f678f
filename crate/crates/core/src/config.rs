//! Run configuration, read from TOML. Dotted keys (`train.epochs = 30`) and
//! table sections are interchangeable.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adapt::VarianceSource;
use crate::data::SyntheticSpec;
use crate::error::{Error, Result};
use crate::nn::{DensityExponent, Hyperparams, RadiusMetric, SigmaMode};

/// Pipeline variant. Everything except `Autos` switches one piece off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "autos")]
    Autos,
    /// Source data only in the first epoch.
    #[serde(rename = "autos_sf")]
    AutosSf,
    /// Equal weights, no selection or renewal.
    #[serde(rename = "fedavg")]
    Fedavg,
    /// No supervised source passes after the first epoch.
    #[serde(rename = "wo_L")]
    WoL,
    /// Target model never updated by the internal loss.
    #[serde(rename = "wo_Lin")]
    WoLin,
    /// Prompts and g never updated.
    #[serde(rename = "wo_Lex")]
    WoLex,
    /// Renewed domains get no target samples.
    #[serde(rename = "wo_tarcof")]
    WoTarcof,
}

impl Mode {
    pub const ALL: [Mode; 7] = [
        Mode::Autos,
        Mode::AutosSf,
        Mode::Fedavg,
        Mode::WoL,
        Mode::WoLin,
        Mode::WoLex,
        Mode::WoTarcof,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Autos => "autos",
            Mode::AutosSf => "autos_sf",
            Mode::Fedavg => "fedavg",
            Mode::WoL => "wo_L",
            Mode::WoLin => "wo_Lin",
            Mode::WoLex => "wo_Lex",
            Mode::WoTarcof => "wo_tarcof",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_paths: Option<Vec<PathBuf>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_path: Option<PathBuf>,
    /// Labeled table used to initialize teacher prompts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teacher_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub eta0: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Label smoothing factor μ.
    pub mu: f64,
    pub hidden_width: usize,
    /// Passes over each source domain in the first epoch.
    pub warmup_passes: usize,
    /// Passes over each renewed domain in later epochs.
    pub local_passes: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            eta0: 0.001,
            momentum: 0.9,
            batch_size: 64,
            mu: 0.1,
            hidden_width: 64,
            warmup_passes: 20,
            local_passes: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectConfig {
    pub radius_metric: RadiusMetric,
    /// Defaults to 1.5 for `rms`, 1 otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub lambda: f64,
    pub sigma_mode: SigmaMode,
    pub density_exponent: DensityExponent,
}

impl Default for SelectConfig {
    fn default() -> Self {
        SelectConfig {
            radius_metric: RadiusMetric::Mean,
            alpha: None,
            lambda: 0.5,
            sigma_mode: SigmaMode::Epoch,
            density_exponent: DensityExponent::One,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptConfig {
    pub beta: f64,
    pub gamma: f64,
    pub theta: f64,
    pub delta: f64,
    pub tau: f64,
    pub mode: Mode,
    /// Joint embedding width; defaults to the input dimension.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub joint_dim: Option<usize>,
    pub variance_source: VarianceSource,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            beta: 0.003,
            gamma: 0.5,
            theta: 0.4,
            delta: 1.0,
            tau: 10.0,
            mode: Mode::Autos,
            joint_dim: None,
            variance_source: VarianceSource::Teacher,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub data: DataConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub select: SelectConfig,
    #[serde(default)]
    pub adapt: AdaptConfig,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl RunConfig {
    /// Default settings over a synthetic benchmark.
    pub fn synthetic(spec: SyntheticSpec, seed: u64) -> Self {
        RunConfig {
            seed,
            out_dir: default_out_dir(),
            data: DataConfig {
                synthetic: Some(spec),
                ..DataConfig::default()
            },
            train: TrainConfig::default(),
            select: SelectConfig::default(),
            adapt: AdaptConfig::default(),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; relative data paths resolve against its
    /// directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let Some(base) = path.parent() {
            let fix = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            };
            if let Some(ps) = cfg.data.source_paths.as_mut() {
                ps.iter_mut().for_each(fix);
            }
            cfg.data.target_path.as_mut().map(fix);
            cfg.data.teacher_path.as_mut().map(fix);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        match (&d.synthetic, &d.source_paths) {
            (Some(spec), None) => {
                spec.validate()?;
                if d.target_path.is_some() {
                    return Err(Error::Config("data.target_path given with data.synthetic".into()));
                }
            }
            (None, Some(paths)) => {
                if paths.is_empty() {
                    return Err(Error::Config("data.source_paths is empty".into()));
                }
                if d.target_path.is_none() {
                    return Err(Error::Config("data.target_path is required with data.source_paths".into()));
                }
            }
            _ => {
                return Err(Error::Config(
                    "exactly one of data.synthetic and data.source_paths must be set".into(),
                ))
            }
        }
        if self.train.hidden_width == 0 {
            return Err(Error::Config("train.hidden_width must be >= 1".into()));
        }
        if self.adapt.joint_dim == Some(0) {
            return Err(Error::Config("adapt.joint_dim must be >= 1".into()));
        }
        self.hyperparams().validate()
    }

    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            mu: self.train.mu,
            eta0: self.train.eta0,
            momentum: self.train.momentum,
            batch_size: self.train.batch_size,
            alpha: self
                .select
                .alpha
                .unwrap_or_else(|| self.select.radius_metric.default_alpha()),
            lambda: self.select.lambda,
            beta: self.adapt.beta,
            gamma: self.adapt.gamma,
            theta: self.adapt.theta,
            delta: self.adapt.delta,
            sigma_mode: self.select.sigma_mode,
            radius_metric: self.select.radius_metric,
            density_exponent: self.select.density_exponent,
            tau: self.adapt.tau,
            epochs: self.train.epochs,
        }
    }

    /// First 12 hex digits of SHA-256 over the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }
}
