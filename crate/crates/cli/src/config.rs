//! JSON run configuration. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use ppdiag::diagnostics::{IntegrationRule, LocalStatistic};
use ppdiag::fit::FitOptions;
use ppdiag::simulate::McmcConfig;
use ppdiag::summaries::{FEstimator, GEstimator, KEstimator, RGrid};
use ppdiag::trend::Kernel2D;
use ppdiag::{Covariate, ModelSpec, Window};

use crate::CliError;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Simulation window, or the window of a pattern file without sidecar.
    pub window: Option<Window>,
    /// Model to simulate, or the model form to fit.
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub fit: FitOptions,
    #[serde(default)]
    pub mcmc: McmcConfig,
    #[serde(default)]
    pub diagnostics: Vec<DiagRequest>,
    pub r_grid: Option<RGridConfig>,
    /// Pixel resolution for empty-space summaries and covariate integrals.
    pub pixel_resolution: Option<usize>,
    pub envelope: Option<EnvelopeConfig>,
    pub score_test: Option<ScoreTestConfig>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
    }

    pub fn r_grid(&self, w: &Window) -> Result<RGrid, CliError> {
        let grid = match &self.r_grid {
            None => RGrid::default_for(w),
            Some(c) => c.build()?,
        };
        if grid.r_max() > w.min_side() / 4.0 {
            log::warn!(
                "r grid extends to {} beyond a quarter of the shortest window side ({})",
                grid.r_max(),
                w.min_side() / 4.0
            );
        }
        Ok(grid)
    }

    pub fn pixel_resolution(&self) -> usize {
        self.pixel_resolution.unwrap_or(256)
    }
}

/// Either explicit `values` or `r_max` with `n` equally spaced points.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RGridConfig {
    pub values: Option<Vec<f64>>,
    pub r_max: Option<f64>,
    pub n: Option<usize>,
}

impl RGridConfig {
    fn build(&self) -> Result<RGrid, CliError> {
        match (&self.values, self.r_max) {
            (Some(v), None) if self.n.is_none() => Ok(RGrid::new(v.clone())?),
            (None, Some(r)) => Ok(RGrid::linspace(r, self.n.unwrap_or(513))?),
            _ => Err(CliError::Schema("r_grid needs either values or r_max (with optional n)".into())),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiagRequest {
    /// Residual, compensator and pseudo-score columns for a statistic.
    Residual {
        statistic: LocalStatistic,
        #[serde(default)]
        rule: IntegrationRule,
        /// Add Gaussian-smoothed `res_smooth` / `pres_smooth` columns.
        #[serde(default)]
        smooth: bool,
        bandwidth: Option<f64>,
        name: Option<String>,
    },
    K {
        #[serde(default)]
        estimator: KEstimator,
        name: Option<String>,
    },
    G {
        #[serde(default)]
        estimator: GEstimator,
        name: Option<String>,
    },
    F {
        #[serde(default)]
        estimator: FEstimator,
        name: Option<String>,
    },
}

impl DiagRequest {
    pub fn name(&self) -> String {
        match self {
            DiagRequest::Residual { name: Some(n), .. }
            | DiagRequest::K { name: Some(n), .. }
            | DiagRequest::G { name: Some(n), .. }
            | DiagRequest::F { name: Some(n), .. } => n.clone(),
            DiagRequest::Residual { statistic, .. } => statistic.name(),
            DiagRequest::K { .. } => "k".into(),
            DiagRequest::G { .. } => "g".into(),
            DiagRequest::F { .. } => "f".into(),
        }
    }

    pub fn needs_model(&self) -> bool {
        matches!(self, DiagRequest::Residual { .. })
    }

    /// Column used for envelopes when none is named.
    pub fn default_column(&self) -> &'static str {
        match self {
            DiagRequest::Residual { statistic, .. } if !statistic.has_local() => "pres",
            DiagRequest::Residual { .. } => "res",
            DiagRequest::K { .. } => "k",
            DiagRequest::G { .. } => "g",
            DiagRequest::F { .. } => "f",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullModel {
    /// The configured model form fitted to the data.
    #[default]
    Fitted,
    /// The configured model with its parameters as given.
    Known,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeConfig {
    pub diagnostic: DiagRequest,
    pub column: Option<String>,
    #[serde(default = "default_n_sims")]
    pub n_sims: usize,
    #[serde(default = "default_lo")]
    pub lo: f64,
    #[serde(default = "default_hi")]
    pub hi: f64,
    /// Defaults to refitting for standardized residual columns only.
    pub refit: Option<bool>,
    #[serde(default)]
    pub null: NullModel,
}

fn default_n_sims() -> usize {
    1000
}
fn default_lo() -> f64 {
    0.025
}
fn default_hi() -> f64 {
    0.975
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreTestConfig {
    pub covariate: Option<Covariate>,
    /// ESRI ASCII raster used as the covariate.
    pub covariate_file: Option<PathBuf>,
    /// Thresholds for the profile; defaults to 101 points spanning the covariate range.
    pub z_grid: Option<Vec<f64>>,
    /// Emit smoothed residual field rasters with this kernel.
    pub kernel: Option<Kernel2D>,
    #[serde(default = "default_field_resolution")]
    pub field_resolution: usize,
}

fn default_field_resolution() -> usize {
    64
}

impl ScoreTestConfig {
    pub fn covariate(&self) -> Result<Covariate, CliError> {
        match (&self.covariate, &self.covariate_file) {
            (Some(c), None) => Ok(c.clone()),
            (None, Some(path)) => {
                let f = std::fs::File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                let raster = ppdiag::io::read_esri_ascii(std::io::BufReader::new(f))
                    .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                Ok(Covariate::Raster { raster: raster.into() })
            }
            _ => Err(CliError::Schema("score_test needs exactly one of covariate, covariate_file".into())),
        }
    }
}
