use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::gp::DEFAULT_MEAN_SCALE;
use crate::late::Scheme;
use crate::testing::{TestMethod, MIN_DRAWS};
use crate::{Error, Result};

/// Environment variable consulted when the configuration has no seed.
pub const SEED_ENV: &str = "GEORDD_SEED";

/// Analysis configuration, normally read from a TOML file. Relative paths
/// are resolved against the directory of that file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub cliff: CliffConfig,
    #[serde(default)]
    pub late: LateConfig,
    #[serde(default)]
    pub tests: TestsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub units: PathBuf,
    pub border: PathBuf,
    /// GeoJSON polygons of the study area, used by the grid-based schemes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polygons: Option<PathBuf>,
    #[serde(default)]
    pub columns: ColumnMap,
    /// Region labels of the treated and control sides.
    pub treated: String,
    pub control: String,
    /// Replace outcomes by their natural logarithm; non-positive outcomes are dropped.
    #[serde(default)]
    pub log_outcome: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ColumnMap {
    pub x: String,
    pub y: String,
    pub outcome: String,
    pub region: String,
    pub covariates: Vec<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            x: "x".into(),
            y: "y".into(),
            outcome: "outcome".into(),
            region: "region".into(),
            covariates: Vec::new(),
        }
    }
}

/// Hyperparameters. With `fit = true` the given values are starting
/// points and missing ones are derived from the data; otherwise
/// lengthscale, gp_scale and noise are required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub fit: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lengthscale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gp_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
    pub mean_scale: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_scale: Option<f64>,
    pub restarts: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            fit: true,
            lengthscale: None,
            gp_scale: None,
            noise: None,
            mean_scale: DEFAULT_MEAN_SCALE,
            beta_scale: None,
            restarts: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CliffConfig {
    pub sentinels: usize,
    /// Also write the full sentinel covariance matrix into the report.
    pub full_covariance: bool,
}

impl Default for CliffConfig {
    fn default() -> Self {
        Self { sentinels: 100, full_covariance: false }
    }
}

/// Scheme settings. Distances default to multiples of the lengthscale:
/// buffer 2ℓ, grid spacing ℓ/5, density bandwidth ℓ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LateConfig {
    pub schemes: Vec<Scheme>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub buffer: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_spacing: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density_bandwidth: Option<f64>,
}

impl Default for LateConfig {
    fn default() -> Self {
        Self { schemes: Scheme::NAMED.to_vec(), buffer: None, grid_spacing: None, density_bandwidth: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TestsConfig {
    pub methods: Vec<TestMethod>,
    pub draws: usize,
}

impl Default for TestsConfig {
    fn default() -> Self {
        Self { methods: vec![TestMethod::InvAnalytic], draws: 1000 }
    }
}

impl AnalysisConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.data.columns;
        let mut names = vec![&c.x, &c.y, &c.outcome, &c.region];
        names.extend(&c.covariates);
        for (i, a) in names.iter().enumerate() {
            if names[..i].contains(a) {
                return Err(Error::Config(format!("column '{a}' is mapped twice")));
            }
        }
        if self.data.treated == self.data.control {
            return Err(Error::Config("treated and control labels must differ".into()));
        }
        if self.cliff.sentinels == 0 {
            return Err(Error::Config("at least one sentinel is required".into()));
        }
        let m = &self.model;
        if !m.fit && (m.lengthscale.is_none() || m.gp_scale.is_none() || m.noise.is_none()) {
            return Err(Error::Config("fit = false needs lengthscale, gp_scale and noise".into()));
        }
        let positive = |v: Option<f64>, name: &str| match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => Err(Error::Config(format!("{name} must be positive and finite"))),
            _ => Ok(()),
        };
        positive(self.late.buffer, "late.buffer")?;
        positive(self.late.grid_spacing, "late.grid_spacing")?;
        positive(self.late.density_bandwidth, "late.density_bandwidth")?;
        let boot = self.tests.methods.iter().any(|m| m.bootstrap_statistic().is_some());
        if boot && self.tests.draws < MIN_DRAWS {
            return Err(Error::Config(format!("bootstrap tests need draws ≥ {MIN_DRAWS}")));
        }
        Ok(())
    }

    /// Whether any stage consumes random numbers.
    pub fn is_stochastic(&self) -> bool {
        (self.model.fit && self.model.restarts > 0)
            || self.tests.methods.iter().any(|m| m.bootstrap_statistic().is_some())
    }

    /// The configured seed, else `GEORDD_SEED`.
    pub fn effective_seed(&self) -> Result<Option<u64>> {
        if let Some(s) = self.seed {
            return Ok(Some(s));
        }
        seed_from_env()
    }

    /// SHA-256 of the canonical JSON form of the configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("configuration serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

pub fn seed_from_env() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{SEED_ENV}='{v}' is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}
