//! Continuous waypoint sequences on a shared time grid.

use serde::{Deserialize, Serialize};

use crate::geometry::Point;

/// Waypoints of one robot starting at global step `start`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub robot: usize,
    pub start: usize,
    pub points: Vec<Point>,
}

impl Trajectory {
    pub fn new(robot: usize, start: usize, points: Vec<Point>) -> Self {
        Self { robot, start, points }
    }

    /// Last global step covered.
    pub fn end(&self) -> usize {
        self.start + self.points.len() - 1
    }

    /// Waypoint at global step `k`, if covered.
    pub fn at(&self, k: usize) -> Option<Point> {
        k.checked_sub(self.start).and_then(|i| self.points.get(i)).copied()
    }

    pub fn arc_length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].dist(w[1])).sum()
    }

    pub fn first(&self) -> Point {
        self.points[0]
    }

    pub fn last(&self) -> Point {
        *self.points.last().unwrap()
    }
}

/// Trajectories sampled every `dt` seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySet {
    pub dt: f64,
    pub trajectories: Vec<Trajectory>,
}

impl TrajectorySet {
    pub fn new(dt: f64, trajectories: Vec<Trajectory>) -> Self {
        Self { dt, trajectories }
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Flattened coordinates `[x0, y0, x1, y1, ...]` over all trajectories.
    pub fn flatten(&self) -> Vec<f64> {
        self.trajectories.iter().flat_map(|t| t.points.iter().flat_map(|p| [p.x, p.y])).collect()
    }

    /// Inverse of [`flatten`](Self::flatten) for a set of the same shape.
    pub fn with_flat(&self, x: &[f64]) -> TrajectorySet {
        let mut k = 0;
        let trajectories = self
            .trajectories
            .iter()
            .map(|t| {
                let points = (0..t.points.len())
                    .map(|_| {
                        let p = Point::new(x[k], x[k + 1]);
                        k += 2;
                        p
                    })
                    .collect();
                Trajectory { robot: t.robot, start: t.start, points }
            })
            .collect();
        TrajectorySet { dt: self.dt, trajectories }
    }
}
