//! Run configuration: one JSON file holding the structure (inline or a
//! path to its own file) and one parameter table per command.

use heatlocus::StructureConfig;
use serde::Deserialize;
use std::path::{Path, PathBuf};

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub structure: Option<StructureRef>,
    /// Synthetic circle-versus-curve problem in the plane, used in place of
    /// a structure.
    pub fixture: Option<FixtureConfig>,
    #[serde(default)]
    pub seed: u64,
    pub output_path: Option<PathBuf>,
    pub geodesic: Option<GeodesicParams>,
    pub distance: Option<PairParams>,
    pub cutlocus: Option<CutlocusParams>,
    pub classify: Option<PairParams>,
    pub predict: Option<PredictParams>,
    pub laplace_check: Option<LaplaceParams>,
    /// Directory of the config file, for resolving relative references.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum StructureRef {
    Inline(StructureConfig),
    File(PathBuf),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureConfig {
    pub eta: u32,
    #[serde(default = "one")]
    pub sigma1: f64,
    #[serde(default)]
    pub sigma3: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeodesicParams {
    pub q0: Vec<f64>,
    pub lambda: Vec<f64>,
    pub t_end: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_samples() -> usize {
    200
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairParams {
    pub q1: Vec<f64>,
    pub q2: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutlocusParams {
    pub q0: Vec<f64>,
    #[serde(default = "default_directions")]
    pub directions: usize,
    pub t_max: f64,
}

fn default_directions() -> usize {
    32
}

/// Either a geometric pair to classify first, or explicit orders.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictParams {
    pub q1: Option<Vec<f64>>,
    pub q2: Option<Vec<f64>>,
    pub n: Option<usize>,
    /// Odd midpoint orders, one per minimizer.
    pub m: Option<Vec<u32>>,
    #[serde(default)]
    pub verify: Option<VerifyParams>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyParams {
    pub t_min: f64,
    pub t_max: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_radius")]
    pub radius: f64,
}

fn default_points() -> usize {
    7
}

fn default_radius() -> f64 {
    0.2
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaplaceParams {
    /// Amplitude `f(x1, ..., xn)` in the expression grammar.
    pub f: String,
    pub m: Vec<u32>,
    #[serde(default)]
    pub g0: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    #[serde(default = "default_t_check")]
    pub t_check: f64,
    pub t_min: f64,
    pub t_max: f64,
    #[serde(default = "default_grid")]
    pub points: usize,
}

fn default_t_check() -> f64 {
    1e-4
}

fn default_grid() -> usize {
    10
}

pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| json_error(path, &e))?;
    cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(cfg)
}

pub fn json_error(path: &Path, e: &serde_json::Error) -> CliError {
    CliError::Config(format!("{}: line {}, column {}: {e}", path.display(), e.line(), e.column()))
}

impl RunConfig {
    pub fn structure(&self) -> Result<heatlocus::Structure, CliError> {
        let sc = match &self.structure {
            None => return Err(CliError::Config("this command needs a 'structure' entry".into())),
            Some(StructureRef::Inline(sc)) => sc.clone(),
            Some(StructureRef::File(p)) => {
                let path = self.base_dir.join(p);
                let text = std::fs::read_to_string(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| json_error(&path, &e))?
            }
        };
        Ok(heatlocus::Structure::from_config(&sc)?)
    }

    pub fn section<'a, T>(&self, v: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
        v.as_ref().ok_or_else(|| CliError::Config(format!("missing '{name}' table")))
    }
}
