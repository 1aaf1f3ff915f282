//! Run configuration: TOML on disk, overridable from flags, echoed resolved.

use std::path::Path;

use serde::{Deserialize, Serialize};
use skewlevy::jumps::{JumpFamily, JumpMeasure};
use skewlevy::scenarios::{ScenarioGeometry, ScenarioKind};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Binary,
}

impl OutputFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Binary => "bin",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpConfig {
    pub rate: f64,
    #[serde(flatten)]
    pub family: JumpFamily,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorParams {
    pub n_grid: usize,
    pub jump_threshold: Option<f64>,
    pub bin_edges: Vec<f64>,
}

impl Default for EstimatorParams {
    fn default() -> Self {
        EstimatorParams {
            n_grid: 50,
            jump_threshold: None,
            bin_edges: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,
    pub scenario: String,
    /// `n` for `R^n`, `n x n` matrices, or `S^n`.
    pub size: usize,
    /// Starting point; the scenario's reference point when empty.
    pub x0: Vec<f64>,
    pub t_end: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub format: OutputFormat,
    pub jumps: Option<JumpConfig>,
    pub estimator: EstimatorParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            scenario: ScenarioKind::EuclidSon.name().into(),
            size: 3,
            x0: Vec::new(),
            t_end: 1.0,
            dt: 1e-3,
            n_paths: 100,
            seed: skewlevy::experiments::DEFAULT_SEED,
            format: OutputFormat::Csv,
            jumps: None,
            estimator: EstimatorParams::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serialises")
    }

    pub fn geometry(&self) -> Result<ScenarioGeometry, CliError> {
        let kind =
            ScenarioKind::parse(&self.scenario).map_err(|e| CliError::Usage(e.to_string()))?;
        ScenarioGeometry::new(kind, self.size).map_err(|e| CliError::Usage(e.to_string()))
    }

    pub fn jump_measure(&self, geom: &ScenarioGeometry) -> Result<Option<JumpMeasure>, CliError> {
        self.jumps
            .as_ref()
            .map(|j| JumpMeasure::new(j.rate, j.family, geom.group_order()))
            .transpose()
            .map_err(|e| CliError::Usage(e.to_string()))
    }

    /// Checks every field and fills in `x0`; nothing is simulated before this succeeds.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        let bad = |m: String| Err(CliError::Usage(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "config schema_version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        let geom = self.geometry()?;
        if self.x0.is_empty() {
            self.x0 = geom.reference_point();
        }
        geom.validate_point(&self.x0)
            .map_err(|e| CliError::Usage(format!("x0: {e}")))?;
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end = {} must be finite and >= 0", self.t_end));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt = {} must be positive", self.dt));
        }
        if self.n_paths == 0 {
            return bad("n_paths must be positive".into());
        }
        self.jump_measure(&geom)?;
        let e = &self.estimator;
        if e.n_grid == 0 {
            return bad("estimator.n_grid must be positive".into());
        }
        if let Some(t) = e.jump_threshold {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("estimator.jump_threshold = {t} must be positive"));
            }
        }
        if e.bin_edges.iter().any(|b| !(*b > 0.0 && b.is_finite()))
            || e.bin_edges.windows(2).any(|w| w[0] >= w[1])
        {
            return bad("estimator.bin_edges must be positive and increasing".into());
        }
        Ok(self)
    }
}
