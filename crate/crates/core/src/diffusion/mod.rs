//! Score-based trajectory generation inside convex regions.
//!
//! A small fully connected denoiser is trained on synthetic in-region
//! trajectories expressed in each region's local frame, so one model serves
//! every region. Sampling runs guided Langevin steps, projecting every
//! waypoint back into the region after each step.

mod model;
mod penalty;
mod sampler;
mod train;

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::geometry::{Point, Polygon};

pub use model::{Adam, Grads, Mlp};
pub use penalty::{
    grad_penalty_agents_set, grad_penalty_obstacle, penalty_agents, penalty_agents_set, penalty_obstacle, ObstacleTerm,
};
pub use sampler::{sample_subproblem, SamplerConfig};
pub use train::{make_training_set, straight_line, train_score, TrainConfig, TrainReport, TrainingSample, TrainingSet};

/// Waypoints per trajectory inside the network.
pub const MODEL_HORIZON: usize = 16;
/// Directions of the region support-function descriptor.
pub const DESCRIPTOR_DIRS: usize = 8;
const CHECKPOINT_SCHEMA: u32 = 1;
const CHECKPOINT_KIND: &str = "dgd-score-mlp";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiffusionError {
    #[error("trajectory lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("training diverged at epoch {0}")]
    DivergedTraining(usize),
    #[error("empty training set")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Noise levels `sigma_1 < ... < sigma_T` on a cosine ramp in log space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub steps: usize,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self { sigma_min: 0.01, sigma_max: 1.0, steps: 25 }
    }
}

impl NoiseSchedule {
    /// Noise level of step `t` in `1..=steps`.
    pub fn sigma(&self, t: usize) -> f64 {
        self.sigma_between(t, self.sigma_max)
    }

    /// Same ramp shape, topping out at `top` instead of `sigma_max`.
    pub fn sigma_between(&self, t: usize, top: f64) -> f64 {
        let w = 0.5 * (1.0 - (std::f64::consts::PI * t as f64 / self.steps as f64).cos());
        self.sigma_min * (top / self.sigma_min).powf(w)
    }

    /// Variance-preserving equivalent `sigma^2 / (1 + sigma^2)`.
    pub fn beta(&self, t: usize) -> f64 {
        let s = self.sigma(t);
        s * s / (1.0 + s * s)
    }

    pub fn is_valid(&self) -> bool {
        self.steps >= 1 && self.sigma_min > 0.0 && self.sigma_max > self.sigma_min && self.sigma_max.is_finite()
    }
}

/// Translation and scale into a region's local frame, plus its descriptor.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionFrame {
    pub center: Point,
    pub scale: f64,
    pub descriptor: [f64; DESCRIPTOR_DIRS],
}

impl RegionFrame {
    pub fn new(region: &Polygon) -> Self {
        let center = region.centroid();
        let scale = region.vertices().iter().map(|v| v.dist(center)).fold(0.0, f64::max).max(1e-12);
        let mut descriptor = [0.0; DESCRIPTOR_DIRS];
        for (k, d) in descriptor.iter_mut().enumerate() {
            let a = 2.0 * std::f64::consts::PI * k as f64 / DESCRIPTOR_DIRS as f64;
            let u = Point::new(a.cos(), a.sin());
            *d = region.vertices().iter().map(|v| (*v - center).dot(u)).fold(f64::MIN, f64::max) / scale;
        }
        Self { center, scale, descriptor }
    }

    pub fn to_local(&self, p: Point) -> Point {
        (p - self.center) * (1.0 / self.scale)
    }

    pub fn to_world(&self, p: Point) -> Point {
        self.center + p * self.scale
    }
}

/// Linear resampling by index parameter to `n` points.
pub fn resample(points: &[Point], n: usize) -> Vec<Point> {
    let m = points.len();
    if m == 0 || n == 0 {
        return Vec::new();
    }
    if m == 1 || n == 1 {
        return vec![points[0]; n];
    }
    (0..n)
        .map(|j| {
            let s = j as f64 * (m - 1) as f64 / (n - 1) as f64;
            let i = (s.floor() as usize).min(m - 2);
            points[i].lerp(points[i + 1], s - i as f64)
        })
        .collect()
}

/// Evenly spaced points between the endpoints of `x`.
fn chord(a: Point, b: Point, n: usize) -> Vec<Point> {
    (0..n).map(|j| a.lerp(b, j as f64 / (n - 1).max(1) as f64)).collect()
}

/// Denoiser over trajectories in a region's local frame.
///
/// The network sees the deviation from the endpoint chord and predicts a
/// preconditioned clean deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreModel {
    pub net: Mlp,
    pub schedule: NoiseSchedule,
    pub horizon: usize,
    /// Typical spread of clean deviations, used for preconditioning.
    pub sigma_data: f64,
}

pub(crate) struct Precond {
    pub c_skip: f64,
    pub c_out: f64,
    pub c_in: f64,
}

impl ScoreModel {
    pub fn input_dim(horizon: usize) -> usize {
        2 * horizon + 4 + DESCRIPTOR_DIRS + 2
    }

    pub fn new<R: rand::Rng>(horizon: usize, hidden: usize, depth: usize, schedule: NoiseSchedule, rng: &mut R) -> Self {
        let mut sizes = vec![Self::input_dim(horizon)];
        sizes.extend(std::iter::repeat_n(hidden, depth));
        sizes.push(2 * horizon);
        Self { net: Mlp::new(&sizes, rng), schedule, horizon, sigma_data: 0.2 }
    }

    pub(crate) fn precond(&self, sigma: f64) -> Precond {
        let sd = self.sigma_data;
        let q = sigma * sigma + sd * sd;
        Precond { c_skip: sd * sd / q, c_out: sigma * sd / q.sqrt(), c_in: 1.0 / q.sqrt() }
    }

    /// Network input row for one local-frame trajectory of `horizon` points.
    pub(crate) fn features(&self, x: &[Point], sigma: f64, descriptor: &[f64; DESCRIPTOR_DIRS], row: &mut [f64]) {
        let h = self.horizon;
        let (a, b) = (x[0], x[h - 1]);
        let c_in = self.precond(sigma).c_in;
        for (j, (p, q)) in x.iter().zip(chord(a, b, h)).enumerate() {
            row[2 * j] = c_in * (p.x - q.x);
            row[2 * j + 1] = c_in * (p.y - q.y);
        }
        let o = 2 * h;
        row[o..o + 4].copy_from_slice(&[a.x, a.y, b.x, b.y]);
        row[o + 4..o + 4 + DESCRIPTOR_DIRS].copy_from_slice(descriptor);
        row[o + 4 + DESCRIPTOR_DIRS] = sigma.ln() / 4.0;
        row[o + 5 + DESCRIPTOR_DIRS] = sigma;
    }

    /// Clean estimates for a batch of noisy local-frame trajectories that
    /// share one noise level.
    pub fn denoise(&self, xs: &[Vec<Point>], sigma: f64, descriptor: &[f64; DESCRIPTOR_DIRS]) -> Vec<Vec<Point>> {
        let h = self.horizon;
        let mut input = Array2::zeros((xs.len(), Self::input_dim(h)));
        for (i, x) in xs.iter().enumerate() {
            self.features(x, sigma, descriptor, input.row_mut(i).as_slice_mut().unwrap());
        }
        let out = self.net.forward(&input);
        let pc = self.precond(sigma);
        xs.iter()
            .enumerate()
            .map(|(i, x)| {
                let ch = chord(x[0], x[h - 1], h);
                (0..h)
                    .map(|j| {
                        let d = x[j] - ch[j];
                        let f = Point::new(out[(i, 2 * j)], out[(i, 2 * j + 1)]);
                        ch[j] + d * pc.c_skip + f * pc.c_out
                    })
                    .collect()
            })
            .collect()
    }

    /// Score estimate `(D(x) - x) / sigma^2` for one local-frame trajectory.
    pub fn score(&self, x: &[Point], sigma: f64, descriptor: &[f64; DESCRIPTOR_DIRS]) -> Vec<Point> {
        let d = self.denoise(&[x.to_vec()], sigma, descriptor).pop().unwrap();
        d.iter().zip(x).map(|(&d, &x)| (d - x) * (1.0 / (sigma * sigma))).collect()
    }

    pub fn to_json(&self) -> String {
        let doc = CheckpointDoc {
            schema_version: CHECKPOINT_SCHEMA,
            kind: CHECKPOINT_KIND.into(),
            horizon: self.horizon,
            sigma_data: self.sigma_data,
            schedule: self.schedule,
            layers: self.net.to_docs(),
        };
        serde_json::to_string(&doc).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, DiffusionError> {
        let doc: CheckpointDoc = serde_json::from_str(s).map_err(|e| DiffusionError::Checkpoint(e.to_string()))?;
        if doc.schema_version != CHECKPOINT_SCHEMA || doc.kind != CHECKPOINT_KIND {
            return Err(DiffusionError::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                doc.kind, doc.schema_version
            )));
        }
        let net = Mlp::from_docs(&doc.layers).map_err(DiffusionError::Checkpoint)?;
        if doc.horizon < 2 || net.input_dim() != Self::input_dim(doc.horizon) || net.output_dim() != 2 * doc.horizon {
            return Err(DiffusionError::Checkpoint("network shape does not match horizon".into()));
        }
        if !doc.schedule.is_valid() || !(doc.sigma_data > 0.0) || !net.is_finite() {
            return Err(DiffusionError::Checkpoint("invalid parameters".into()));
        }
        Ok(Self { net, schedule: doc.schedule, horizon: doc.horizon, sigma_data: doc.sigma_data })
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self, DiffusionError> {
        let s = std::fs::read_to_string(path).map_err(|e| DiffusionError::Checkpoint(e.to_string()))?;
        Self::from_json(&s)
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointDoc {
    schema_version: u32,
    kind: String,
    horizon: usize,
    sigma_data: f64,
    schedule: NoiseSchedule,
    layers: Vec<model::LayerDoc>,
}
