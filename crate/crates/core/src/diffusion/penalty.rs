use serde::{Deserialize, Serialize};

use crate::geometry::{closest_on_segment, Obstacle, Point, Workspace};
use crate::trajectory::TrajectorySet;

use super::DiffusionError;

/// An obstacle with its required clearance.
///
/// For a disk the clearance is measured from the center, for a polygon from
/// its boundary (negative inside).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObstacleTerm {
    pub obstacle: Obstacle,
    pub r_obs: f64,
}

impl ObstacleTerm {
    /// Terms for a robot of radius `r`: disks need `radius + r` from their
    /// center, polygons `r` from their boundary.
    pub fn for_workspace(ws: &Workspace, r: f64) -> Vec<ObstacleTerm> {
        ws.obstacles
            .iter()
            .map(|o| match o {
                Obstacle::Disk { radius, .. } => ObstacleTerm { obstacle: o.clone(), r_obs: radius + r },
                Obstacle::Polygon { .. } => ObstacleTerm { obstacle: o.clone(), r_obs: r },
            })
            .collect()
    }

    /// Measured distance and its gradient.
    fn distance(&self, p: Point) -> (f64, Point) {
        match &self.obstacle {
            Obstacle::Disk { center, .. } => {
                let d = p - *center;
                let n = d.norm();
                (n, if n > 0.0 { d * (1.0 / n) } else { Point::ZERO })
            }
            Obstacle::Polygon { vertices } => {
                let (mut best, mut q) = (f64::INFINITY, p);
                for (a, b) in vertices.edges() {
                    let c = closest_on_segment(p, a, b);
                    let d = c.dist(p);
                    if d < best {
                        best = d;
                        q = c;
                    }
                }
                let inside = vertices.contains_point(p);
                let dir = if best > 0.0 { (p - q) * (1.0 / best) } else { Point::ZERO };
                if inside {
                    (-best, -dir)
                } else {
                    (best, dir)
                }
            }
        }
    }

    /// Whether the term can be active anywhere inside `region`.
    pub fn near(&self, region: &crate::geometry::Polygon) -> bool {
        let (a, b) = (self.obstacle.bbox(), region.bbox());
        let r = self.r_obs.max(0.0);
        a.min.x - r <= b.max.x && b.min.x <= a.max.x + r && a.min.y - r <= b.max.y && b.min.y <= a.max.y + r
    }

    fn bbox_far(&self, p: Point) -> bool {
        let b = self.obstacle.bbox();
        let r = self.r_obs.max(0.0);
        p.x < b.min.x - r || p.x > b.max.x + r || p.y < b.min.y - r || p.y > b.max.y + r
    }
}

/// Sum over waypoints and obstacles of `max(0, r_obs - d)`.
pub fn penalty_obstacle(points: &[Point], terms: &[ObstacleTerm]) -> f64 {
    let mut s = 0.0;
    for &p in points {
        for o in terms {
            if o.bbox_far(p) {
                continue;
            }
            let (d, _) = o.distance(p);
            s += (o.r_obs - d).max(0.0);
        }
    }
    s
}

/// Gradient of [`penalty_obstacle`] with respect to every waypoint.
pub fn grad_penalty_obstacle(points: &[Point], terms: &[ObstacleTerm]) -> Vec<Point> {
    points
        .iter()
        .map(|&p| {
            let mut g = Point::ZERO;
            for o in terms {
                if o.bbox_far(p) {
                    continue;
                }
                let (d, dd) = o.distance(p);
                if o.r_obs - d > 0.0 {
                    g -= dd;
                }
            }
            g
        })
        .collect()
}

/// Sum over pairs `i < j` and common steps of `max(0, r_agent - |p_i - p_j|)`
/// for equal-length trajectories.
pub fn penalty_agents(trajs: &[Vec<Point>], r_agent: f64) -> Result<f64, DiffusionError> {
    if let Some(t) = trajs.iter().find(|t| t.len() != trajs[0].len()) {
        return Err(DiffusionError::LengthMismatch(trajs[0].len(), t.len()));
    }
    let mut s = 0.0;
    for i in 0..trajs.len() {
        for j in i + 1..trajs.len() {
            for (a, b) in trajs[i].iter().zip(&trajs[j]) {
                s += (r_agent - a.dist(*b)).max(0.0);
            }
        }
    }
    Ok(s)
}

/// Pair penalty over a set whose trajectories may cover different windows;
/// only steps covered by both trajectories of a pair count.
pub fn penalty_agents_set(set: &TrajectorySet, r_agent: f64) -> f64 {
    let ts = &set.trajectories;
    let mut s = 0.0;
    for i in 0..ts.len() {
        for j in i + 1..ts.len() {
            if ts[i].robot == ts[j].robot {
                continue;
            }
            let (lo, hi) = (ts[i].start.max(ts[j].start), ts[i].end().min(ts[j].end()));
            for k in lo..=hi.max(lo) {
                if let (Some(a), Some(b)) = (ts[i].at(k), ts[j].at(k)) {
                    s += (r_agent - a.dist(b)).max(0.0);
                }
            }
        }
    }
    s
}

/// Gradient of [`penalty_agents_set`], shaped like the set's trajectories.
/// Coincident points contribute no gradient.
pub fn grad_penalty_agents_set(set: &TrajectorySet, r_agent: f64) -> Vec<Vec<Point>> {
    let ts = &set.trajectories;
    let mut g: Vec<Vec<Point>> = ts.iter().map(|t| vec![Point::ZERO; t.points.len()]).collect();
    for i in 0..ts.len() {
        for j in i + 1..ts.len() {
            if ts[i].robot == ts[j].robot {
                continue;
            }
            let (lo, hi) = (ts[i].start.max(ts[j].start), ts[i].end().min(ts[j].end()));
            if lo > hi {
                continue;
            }
            for k in lo..=hi {
                let (a, b) = (ts[i].points[k - ts[i].start], ts[j].points[k - ts[j].start]);
                let d = a.dist(b);
                if d < r_agent && d > 0.0 {
                    let u = (a - b) * (1.0 / d);
                    g[i][k - ts[i].start] -= u;
                    g[j][k - ts[j].start] += u;
                }
            }
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Polygon;
    use crate::trajectory::Trajectory;

    fn p(x: f64, y: f64) -> Point {
        Point::new(x, y)
    }

    fn disk(r_obs: f64) -> ObstacleTerm {
        ObstacleTerm { obstacle: Obstacle::disk(Point::ZERO, 0.05), r_obs }
    }

    #[test]
    fn obstacle_hinge_values() {
        assert_eq!(penalty_obstacle(&[p(0.2, 0.0)], &[disk(0.09)]), 0.0);
        assert!((penalty_obstacle(&[p(0.05, 0.0)], &[disk(0.09)]) - 0.04).abs() < 1e-15);
        let two = penalty_obstacle(&[p(0.05, 0.0), p(0.0, 0.05)], &[disk(0.09)]);
        assert!((two - 0.08).abs() < 1e-15);
    }

    #[test]
    fn polygon_penalty_grows_inside() {
        let t = ObstacleTerm { obstacle: Obstacle::polygon(Polygon::rectangle(p(0.0, 0.0), p(1.0, 1.0))), r_obs: 0.1 };
        assert!((penalty_obstacle(&[p(1.05, 0.5)], std::slice::from_ref(&t)) - 0.05).abs() < 1e-12);
        assert!((penalty_obstacle(&[p(0.9, 0.5)], std::slice::from_ref(&t)) - 0.2).abs() < 1e-12);
        let g = grad_penalty_obstacle(&[p(0.9, 0.5)], &[t]);
        assert!((g[0] - p(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn agent_hinge_values() {
        let a = vec![p(0.0, 0.0), p(1.0, 0.0)];
        let b = vec![p(0.0, 0.0), p(2.0, 0.0)];
        assert!((penalty_agents(&[a, b], 0.08).unwrap() - 0.08).abs() < 1e-15);
        let d = 0.07;
        let tri = [p(0.0, 0.0), p(d, 0.0), p(d / 2.0, d * 3f64.sqrt() / 2.0)];
        let trajs: Vec<Vec<Point>> = tri.iter().map(|&q| vec![q]).collect();
        assert!((penalty_agents(&trajs, 0.08).unwrap() - 0.03).abs() < 1e-12);
        assert!(matches!(
            penalty_agents(&[vec![p(0.0, 0.0)], vec![]], 0.08),
            Err(DiffusionError::LengthMismatch(1, 0))
        ));
    }

    #[test]
    fn agent_pair_is_symmetric_and_windowed() {
        let a = Trajectory::new(0, 0, vec![p(0.0, 0.0), p(0.1, 0.0), p(0.2, 0.0)]);
        let b = Trajectory::new(1, 1, vec![p(0.1, 0.05), p(0.3, 0.3)]);
        let ab = TrajectorySet::new(0.1, vec![a.clone(), b.clone()]);
        let ba = TrajectorySet::new(0.1, vec![b, a]);
        let (x, y) = (penalty_agents_set(&ab, 0.08), penalty_agents_set(&ba, 0.08));
        assert_eq!(x, y);
        assert!((x - 0.03).abs() < 1e-12);
    }
}
