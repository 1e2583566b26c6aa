//! Exact reference solutions on finite trees.
//!
//! Trees are small enough to enumerate, so robust primal values, dual values,
//! dynamic-programming residuals and time-consistency comparisons are computed
//! without sampling error and serve as ground truth for the Monte Carlo side.

pub mod consistency;
pub mod dual;
pub mod family;
pub mod market;
pub mod primal;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use consistency::{
    check_dpp, check_time_consistency, entropic_reduction, inconsistency_demo_continuous, ConsistencyReport,
    DemoReport, DppReport, EntropicReduction,
};
pub use dual::{conjugate, dual_problem, duality_check, solve_dual, DualProblem, DualSolution, DualityReport};
pub use family::{Kernel, MeasureFamily, PathMeasure, TiltEntry};
pub use market::{Period, TreeMarket, Utility};
pub use primal::{solve_primal, TreeSolution};

fn default_utility() -> Utility {
    Utility::Log {}
}

fn default_x0() -> f64 {
    1.0
}

/// A tree market together with its ambiguity family, as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeSpec {
    #[serde(default)]
    pub label: Option<String>,
    pub market: TreeMarket,
    pub family: MeasureFamily,
    #[serde(default = "default_utility")]
    pub utility: Utility,
    #[serde(default = "default_x0")]
    pub x0: f64,
}

impl TreeSpec {
    pub fn validate(&self) -> Result<()> {
        self.market.validate()?;
        self.family.validate(&self.market)?;
        self.utility.validate()?;
        if !(self.x0.is_finite() && (self.x0 > 0.0 || !self.utility.positive_domain())) {
            return Err(crate::Error::invalid(format!("initial wealth {} outside the utility domain", self.x0)));
        }
        Ok(())
    }
}

/// Reads and validates a tree specification.
pub fn read_tree_spec(path: &Path) -> Result<TreeSpec> {
    let text = std::fs::read_to_string(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let spec: TreeSpec = serde_path_to_error::deserialize(de)
        .map_err(|e| crate::Error::invalid(format!("{}: {} at {}", path.display(), e.inner(), e.path())))?;
    spec.validate()?;
    Ok(spec)
}
