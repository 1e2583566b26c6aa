//! Experiment configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dualpde::{Ansatz, PenaltyIntegrand, RefinementPlan};
use crate::measures::{DegenerateEntry, GeneratorSpec};
use crate::oracle::TreeSpec;
use crate::paths::{CoefficientSpec, MarketCoefficients};
use crate::strategies::Strategy;

/// Full record of one run: the experiment, its seed and where to write.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// Master seed; unused by the exact (tree and PDE) experiments.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Experiment {
    Simulate(SimulateParams),
    VerifySaddle(VerifySaddleParams),
    VerifyDual(VerifyDualParams),
    TreeDuality(TreeDualityParams),
    TreeDpp(TreeDppParams),
    TreeConsistency(TreeConsistencyParams),
    InconsistencyDemo(InconsistencyDemoParams),
    PdeDrift(PdeDriftParams),
    PdeResidual(PdeResidualParams),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Simulate(_) => "simulate",
            Experiment::VerifySaddle(_) => "verify-saddle",
            Experiment::VerifyDual(_) => "verify-dual",
            Experiment::TreeDuality(_) => "tree-duality",
            Experiment::TreeDpp(_) => "tree-dpp",
            Experiment::TreeConsistency(_) => "tree-consistency",
            Experiment::InconsistencyDemo(_) => "inconsistency-demo",
            Experiment::PdeDrift(_) => "pde-drift",
            Experiment::PdeResidual(_) => "pde-residual",
        }
    }
}

fn one() -> f64 {
    1.0
}

fn default_strategy() -> Strategy {
    Strategy::FractionalKelly {}
}

/// Market and time discretisation shared by the simulation experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSetup {
    pub market: MarketCoefficients,
    pub horizon: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    #[serde(default)]
    pub antithetic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateParams {
    pub simulation: SimulationSetup,
    #[serde(default = "one")]
    pub s0: f64,
    #[serde(default = "one")]
    pub x0: f64,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    /// Write every simulated path to `ensemble.csv`.
    #[serde(default)]
    pub export_paths: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanParams {
    #[serde(default = "one")]
    pub x: f64,
    pub rho_grid: Vec<f64>,
    pub c_grid: Vec<f64>,
    pub n_paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionalParams {
    pub t: f64,
    pub n_states: usize,
    pub n_paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySaddleParams {
    pub simulation: SimulationSetup,
    #[serde(default)]
    pub t: f64,
    /// Also run the likelihood-reweighted estimator as a cross-check.
    #[serde(default)]
    pub reweighted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditional: Option<ConditionalParams>,
}

fn default_dual_generators() -> Vec<GeneratorSpec> {
    vec![
        GeneratorSpec::WorstCase { scale: 1.0 },
        GeneratorSpec::Zero {},
        GeneratorSpec::WorstCase { scale: 0.5 },
        GeneratorSpec::WorstCase { scale: 1.5 },
    ]
}

fn zero_spec() -> CoefficientSpec {
    CoefficientSpec::Constant(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyDualParams {
    pub simulation: SimulationSetup,
    #[serde(default)]
    pub t: f64,
    #[serde(default = "one")]
    pub y: f64,
    /// Second dual coordinate; zero gives the dual saddle.
    #[serde(default = "zero_spec")]
    pub nu: CoefficientSpec,
    #[serde(default = "default_dual_generators")]
    pub generators: Vec<GeneratorSpec>,
}

/// A tree given inline or as a path relative to the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<TreeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec_path: Option<PathBuf>,
}

fn default_dual_points() -> usize {
    crate::oracle::dual::ETA_POINTS
}

fn default_halvings() -> usize {
    2
}

fn default_gap_tolerance() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeDualityParams {
    pub tree: TreeSource,
    /// Initial wealth; defaults to the spec's `x0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    #[serde(default = "default_dual_points")]
    pub n_points: usize,
    #[serde(default = "default_halvings")]
    pub halvings: usize,
    #[serde(default = "default_gap_tolerance")]
    pub tolerance: f64,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeDppParams {
    pub tree: TreeSource,
    /// Whether the family is expected to satisfy the DPP; `false` turns the
    /// run into a negative control.
    #[serde(default = "yes")]
    pub expect_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeConsistencyParams {
    pub tree: TreeSource,
    pub horizon: usize,
    pub horizon_bar: usize,
    /// `true`: restriction, horizon and rolling checks must pass.
    /// `false`: the family must show strategy and horizon inconsistency
    /// while the value identity holds.
    #[serde(default = "yes")]
    pub expect_consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InconsistencyDemoParams {
    pub sigma: f64,
    pub horizon: f64,
    pub n_steps: usize,
    pub table: Vec<DegenerateEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_strategy_inconsistent: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_horizon_inconsistent: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenseGrid {
    pub half_width: f64,
    pub step: f64,
}

fn default_dense_grid() -> DenseGrid {
    DenseGrid {
        half_width: 2.0,
        step: 1e-3,
    }
}

fn default_drift_tolerance() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeDriftParams {
    pub penalty: PenaltyIntegrand,
    pub lambda_hat: f64,
    #[serde(default)]
    pub a: [f64; 2],
    #[serde(default = "default_dense_grid")]
    pub grid: DenseGrid,
    #[serde(default = "default_drift_tolerance")]
    pub tolerance: f64,
}

fn default_ansatz() -> Ansatz {
    Ansatz::LogDrift
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeResidualParams {
    pub penalty: PenaltyIntegrand,
    pub lambda_hat: CoefficientSpec,
    pub plan: RefinementPlan,
    #[serde(default = "default_ansatz")]
    pub ansatz: Ansatz,
    /// Also run the time-constant field and check its residual margin.
    #[serde(default = "yes")]
    pub negative_control: bool,
}

/// Parses a config, reporting the JSON path of the first schema violation.
pub fn parse_config(text: &str) -> std::result::Result<ExperimentConfig, String> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        format!("{} (at `{path}`)", e.into_inner())
    })
}

impl TreeSource {
    /// Inline spec, or the spec file resolved relative to `base`.
    pub fn load(&self, base: &Path) -> crate::Result<TreeSpec> {
        match (&self.spec, &self.spec_path) {
            (Some(s), None) => {
                s.validate()?;
                Ok(s.clone())
            }
            (None, Some(p)) => crate::oracle::read_tree_spec(&base.join(p)),
            _ => Err(crate::Error::invalid("give exactly one of `spec` and `spec_path`")),
        }
    }
}
