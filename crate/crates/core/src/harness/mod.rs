//! Benchmark maps, end-to-end runs, metrics and reporting.

mod bench;
mod json;
mod maps;
mod metrics;
mod pipeline;
mod render;

use serde::{Deserialize, Serialize};

use crate::assignment::KinodynamicLimits;
use crate::geometry::{Point, Workspace};

pub use bench::{aggregate, bench, format_csv, format_table, format_timing_csv, BenchRow, BenchSuite, RunRecord};
pub use json::{to_json, write_json, ScenarioFile, TrajectoryFile};
pub use maps::{gen_map, place_robots, MapKind, PLACEMENT_ATTEMPTS};
pub use metrics::{metric_acceleration, metric_path_ratio, smooth};
pub use pipeline::{
    plan_discrete, run_pipeline, split_seed, train_default_model, with_workers, worker_count, Failure, PipelineConfig, RunResult,
    Stage,
};
pub use render::{render_svg, svg_document};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HarnessError {
    #[error("placed {placed} robots before running out of {attempts} attempts")]
    PlacementFailed { placed: usize, attempts: usize },
    #[error("start and goal coincide")]
    DegenerateInstance,
    #[error("need at least 3 waypoints, got {0}")]
    TooShort(usize),
    #[error("bad smoothing window {window} (order {order}, length {len})")]
    BadWindow { window: usize, order: usize, len: usize },
    #[error("io: {0}")]
    Io(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

/// One planning instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub workspace: Workspace,
    pub starts: Vec<Point>,
    pub goals: Vec<Point>,
    pub limits: KinodynamicLimits,
    pub seed: u64,
}

impl Scenario {
    pub fn num_robots(&self) -> usize {
        self.starts.len()
    }

    /// Checks counts, limits, clearance and pairwise separation.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidInput(m));
        if self.starts.len() != self.goals.len() {
            return bad(format!("{} starts but {} goals", self.starts.len(), self.goals.len()));
        }
        if !self.limits.is_valid() {
            return bad("invalid kinodynamic limits".into());
        }
        let r = self.limits.robot_radius;
        for (name, set) in [("start", &self.starts), ("goal", &self.goals)] {
            for (i, &p) in set.iter().enumerate() {
                if !p.is_finite() || self.workspace.clearance(p) < r {
                    return bad(format!("{name} of robot {i} lacks clearance"));
                }
                if set[..i].iter().any(|&q| q.dist(p) < 2.0 * r) {
                    return bad(format!("{name} of robot {i} overlaps another robot"));
                }
            }
        }
        Ok(())
    }
}
