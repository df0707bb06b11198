//! Feasibility checking and augmented-Lagrangian repair of sampled
//! trajectories.

use serde::{Deserialize, Serialize};

use crate::assignment::{KinodynamicLimits, Subproblem};
use crate::geometry::{project_to_convex, Point, Polygon, Workspace};
use crate::trajectory::TrajectorySet;

/// Violations smaller than this are not reported.
pub const VIOLATION_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObstacleViolation {
    pub robot: usize,
    pub t: usize,
    pub depth: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentViolation {
    pub robots: (usize, usize),
    pub t: usize,
    pub depth: f64,
}

/// A step longer than `v_max * dt`; `t` is the step's first index and
/// `excess` is measured in length units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KinematicViolation {
    pub robot: usize,
    pub t: usize,
    pub excess: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub obstacle_violations: Vec<ObstacleViolation>,
    pub agent_violations: Vec<AgentViolation>,
    pub kinematic_violations: Vec<KinematicViolation>,
}

impl ViolationReport {
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn len(&self) -> usize {
        self.obstacle_violations.len() + self.agent_violations.len() + self.kinematic_violations.len()
    }

    /// Largest depth or excess over all entries.
    pub fn max_violation(&self) -> f64 {
        let o = self.obstacle_violations.iter().map(|v| v.depth);
        let a = self.agent_violations.iter().map(|v| v.depth);
        let k = self.kinematic_violations.iter().map(|v| v.excess);
        o.chain(a).chain(k).fold(0.0, f64::max)
    }
}

fn agent_violations(set: &TrajectorySet, r_agent: f64, out: &mut Vec<AgentViolation>) {
    let ts = &set.trajectories;
    for i in 0..ts.len() {
        for j in i + 1..ts.len() {
            if ts[i].robot == ts[j].robot {
                continue;
            }
            let (lo, hi) = (ts[i].start.max(ts[j].start), ts[i].end().min(ts[j].end()));
            for t in lo..hi.saturating_add(1).max(lo) {
                let (Some(a), Some(b)) = (ts[i].at(t), ts[j].at(t)) else { continue };
                let depth = r_agent - a.dist(b);
                if depth > VIOLATION_TOL {
                    let robots = (ts[i].robot.min(ts[j].robot), ts[i].robot.max(ts[j].robot));
                    out.push(AgentViolation { robots, t, depth });
                }
            }
        }
    }
}

fn kinematic_violations(set: &TrajectorySet, step_max: f64, out: &mut Vec<KinematicViolation>) {
    for tr in &set.trajectories {
        for (h, w) in tr.points.windows(2).enumerate() {
            let excess = w[0].dist(w[1]) - step_max;
            if excess > VIOLATION_TOL {
                out.push(KinematicViolation { robot: tr.robot, t: tr.start + h, excess });
            }
        }
    }
}

/// Every obstacle-clearance, pairwise-separation and step-length violation.
pub fn check_feasibility(trajs: &TrajectorySet, limits: &KinodynamicLimits, workspace: &Workspace) -> ViolationReport {
    let mut report = ViolationReport::default();
    for tr in &trajs.trajectories {
        for (h, &p) in tr.points.iter().enumerate() {
            let depth = limits.r_obs - workspace.clearance(p);
            if depth > VIOLATION_TOL {
                report.obstacle_violations.push(ObstacleViolation { robot: tr.robot, t: tr.start + h, depth });
            }
        }
    }
    agent_violations(trajs, limits.r_agent, &mut report.agent_violations);
    kinematic_violations(trajs, limits.step_max(), &mut report.kinematic_violations);
    report
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlmConfig {
    pub nu0: f64,
    pub rho0: f64,
    pub rho_growth: f64,
    pub residual_tol: f64,
    pub max_outer: usize,
    pub inner_steps: usize,
    pub inner_lr: f64,
    /// Constraints are tightened by this much inside the solver.
    pub margin: f64,
}

impl Default for AlmConfig {
    fn default() -> Self {
        Self {
            nu0: 0.0,
            rho0: 1.0,
            rho_growth: 2.0,
            residual_tol: VIOLATION_TOL,
            max_outer: 20,
            inner_steps: 200,
            inner_lr: 0.01,
            margin: 1e-3,
        }
    }
}

impl AlmConfig {
    pub fn is_valid(&self) -> bool {
        self.rho0 > 0.0
            && self.rho_growth > 1.0
            && self.residual_tol > 0.0
            && self.nu0 >= 0.0
            && self.inner_lr > 0.0
            && self.margin >= 0.0
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RepairError {
    #[error("repair failed: residual {residual:e} after {outer} outer iterations")]
    RepairFailed { residual: f64, outer: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Per-outer-iteration history of one projection.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AlmTrace {
    /// Max constraint violation before the first and after every outer iteration.
    pub residuals: Vec<f64>,
    pub nu_agent: Vec<f64>,
    pub nu_kinematic: Vec<f64>,
    pub rho: Vec<f64>,
}

/// Largest separation or step-length violation, without margin.
pub fn constraint_residual(set: &TrajectorySet, limits: &KinodynamicLimits) -> f64 {
    let mut r = ViolationReport::default();
    agent_violations(set, limits.r_agent, &mut r.agent_violations);
    kinematic_violations(set, limits.step_max(), &mut r.kinematic_violations);
    r.max_violation()
}

/// Flat view of a trajectory set: free interior waypoints and fixed endpoints.
struct Problem<'a> {
    shape: &'a TrajectorySet,
    x: Vec<Point>,
    offsets: Vec<usize>,
    fixed: Vec<bool>,
    r_agent: f64,
    step: f64,
    /// Width of the quadratic rounding at each hinge kink.
    smooth: f64,
    /// Pairs of flat indices at shared steps of different robots.
    pairs: Vec<(usize, usize)>,
}

impl<'a> Problem<'a> {
    fn new(shape: &'a TrajectorySet, limits: &KinodynamicLimits, margin: f64) -> Self {
        let ts = &shape.trajectories;
        let mut offsets = vec![0];
        for t in ts {
            offsets.push(offsets.last().unwrap() + t.points.len());
        }
        let x: Vec<Point> = ts.iter().flat_map(|t| t.points.iter().copied()).collect();
        let mut fixed = vec![false; x.len()];
        for i in 0..ts.len() {
            fixed[offsets[i]] = true;
            fixed[offsets[i + 1] - 1] = true;
        }
        let mut pairs = Vec::new();
        for i in 0..ts.len() {
            for j in i + 1..ts.len() {
                if ts[i].robot == ts[j].robot {
                    continue;
                }
                let (lo, hi) = (ts[i].start.max(ts[j].start), ts[i].end().min(ts[j].end()));
                for k in lo..hi.saturating_add(1).max(lo) {
                    pairs.push((offsets[i] + k - ts[i].start, offsets[j] + k - ts[j].start));
                }
            }
        }
        Self {
            shape,
            x,
            offsets,
            fixed,
            r_agent: limits.r_agent + margin,
            step: (limits.step_max() - margin).max(0.0),
            smooth: margin / 2.0,
            pairs,
        }
    }

    fn steps(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.offsets.len() - 1).flat_map(|i| (self.offsets[i]..self.offsets[i + 1] - 1).map(|k| (k, k + 1)))
    }

    /// Hinge `max(0, v)` with its kink rounded over `[0, smooth]`, and its slope.
    fn hinge(&self, v: f64) -> (f64, f64) {
        if v <= 0.0 {
            (0.0, 0.0)
        } else if v < self.smooth {
            (v * v / (2.0 * self.smooth), v / self.smooth)
        } else {
            (v - self.smooth / 2.0, 1.0)
        }
    }

    /// Summed hinge violations of separation and step length.
    fn constraints(&self, y: &[Point]) -> (f64, f64) {
        let ca = self.pairs.iter().map(|&(a, b)| self.hinge(self.r_agent - y[a].dist(y[b])).0).sum();
        let ck = self.steps().map(|(a, b)| self.hinge(y[a].dist(y[b]) - self.step).0).sum();
        (ca, ck)
    }

    fn objective(&self, y: &[Point], m: &Multipliers) -> f64 {
        let fid: f64 = y.iter().zip(&self.x).map(|(a, b)| (*a - *b).norm_sq()).sum();
        let (ca, ck) = self.constraints(y);
        fid + m.nu_a * ca + 0.5 * m.rho * ca * ca + m.nu_k * ck + 0.5 * m.rho * ck * ck
    }

    fn gradient(&self, y: &[Point], m: &Multipliers) -> Vec<Point> {
        let (ca, ck) = self.constraints(y);
        let (wa, wk) = (m.nu_a + m.rho * ca, m.nu_k + m.rho * ck);
        let mut g: Vec<Point> = y.iter().zip(&self.x).map(|(a, b)| (*a - *b) * 2.0).collect();
        for (n, &(a, b)) in self.pairs.iter().enumerate() {
            let d = y[a].dist(y[b]);
            let (_, slope) = self.hinge(self.r_agent - d);
            if slope > 0.0 {
                // coincident points get a fixed, pair-dependent direction
                let u = if d > 1e-12 {
                    (y[a] - y[b]) * (1.0 / d)
                } else {
                    let th = 1.0 + n as f64 * 2.399_963;
                    Point::new(th.cos(), th.sin())
                };
                g[a] -= u * (wa * slope);
                g[b] += u * (wa * slope);
            }
        }
        for (a, b) in self.steps() {
            let d = y[a].dist(y[b]);
            let (_, slope) = self.hinge(d - self.step);
            if slope > 0.0 && d > 0.0 {
                let u = (y[b] - y[a]) * (1.0 / d);
                g[b] += u * (wk * slope);
                g[a] -= u * (wk * slope);
            }
        }
        for (gi, &f) in g.iter_mut().zip(&self.fixed) {
            if f {
                *gi = Point::ZERO;
            }
        }
        g
    }

    fn to_set(&self, y: &[Point]) -> TrajectorySet {
        self.shape.with_flat(&y.iter().flat_map(|p| [p.x, p.y]).collect::<Vec<_>>())
    }
}

struct Multipliers {
    nu_a: f64,
    nu_k: f64,
    rho: f64,
}

/// Approximate Euclidean projection onto the separation and step-length
/// constraints, keeping every trajectory's endpoints fixed.
pub fn alm_project(x: &TrajectorySet, limits: &KinodynamicLimits, cfg: &AlmConfig) -> Result<TrajectorySet, RepairError> {
    alm_project_traced(x, limits, cfg, None).0
}

/// [`alm_project`] with an optional convex region that every free waypoint
/// is projected onto after each inner step, plus the iteration history.
pub fn alm_project_traced(
    x: &TrajectorySet,
    limits: &KinodynamicLimits,
    cfg: &AlmConfig,
    region: Option<&Polygon>,
) -> (Result<TrajectorySet, RepairError>, AlmTrace) {
    alm_solve(x, limits, cfg, |_| region)
}

/// Repairs stitched-together segments jointly. Trajectory `i` of `pieces`
/// stays inside `regions[i]`, and every segment keeps its endpoints, so
/// handoffs between regions are unchanged.
pub fn repair_joint(
    pieces: &TrajectorySet,
    regions: &[&Polygon],
    limits: &KinodynamicLimits,
    cfg: &AlmConfig,
) -> Result<TrajectorySet, RepairError> {
    if regions.len() != pieces.trajectories.len() {
        return Err(RepairError::InvalidInput(format!(
            "{} regions for {} segments",
            regions.len(),
            pieces.trajectories.len()
        )));
    }
    alm_solve(pieces, limits, cfg, |i| Some(regions[i])).0
}

fn alm_solve<'r>(
    x: &TrajectorySet,
    limits: &KinodynamicLimits,
    cfg: &AlmConfig,
    region_of: impl Fn(usize) -> Option<&'r Polygon>,
) -> (Result<TrajectorySet, RepairError>, AlmTrace) {
    let mut trace = AlmTrace::default();
    if !cfg.is_valid() {
        return (Err(RepairError::InvalidInput("invalid ALM configuration".into())), trace);
    }
    if x.trajectories.iter().any(|t| t.points.is_empty() || t.points.iter().any(|p| !p.is_finite())) {
        return (Err(RepairError::InvalidInput("trajectories must be nonempty and finite".into())), trace);
    }
    let residual0 = constraint_residual(x, limits);
    trace.residuals.push(residual0);
    if residual0 == 0.0 {
        return (Ok(x.clone()), trace);
    }
    let prob = Problem::new(x, limits, cfg.margin);
    let mut m = Multipliers { nu_a: cfg.nu0, nu_k: cfg.nu0, rho: cfg.rho0 };
    let mut y = prob.x.clone();
    let project = |y: &mut [Point]| {
        for (i, w) in prob.offsets.windows(2).enumerate() {
            let Some(r) = region_of(i) else { continue };
            for k in w[0]..w[1] {
                if !prob.fixed[k] {
                    y[k] = project_to_convex(y[k], r);
                }
            }
        }
    };
    let mut residual = residual0;
    for _ in 0..cfg.max_outer {
        let mut f = prob.objective(&y, &m);
        let mut lr = cfg.inner_lr;
        for _ in 0..cfg.inner_steps {
            let g = prob.gradient(&y, &m);
            if g.iter().all(|v| v.norm_sq() == 0.0) {
                break;
            }
            // backtracking from a step that grows after every accepted move
            let accepted = loop {
                let mut cand: Vec<Point> = y.iter().zip(&g).map(|(p, d)| *p - *d * lr).collect();
                project(&mut cand);
                let fc = prob.objective(&cand, &m);
                if fc <= f {
                    y = cand;
                    f = fc;
                    break true;
                }
                lr *= 0.5;
                if lr < 1e-14 {
                    break false;
                }
            };
            if !accepted {
                break;
            }
            lr = (lr * 2.0).min(cfg.inner_lr);
        }
        let (ca, ck) = prob.constraints(&y);
        m.nu_a += m.rho * ca;
        m.nu_k += m.rho * ck;
        trace.nu_agent.push(m.nu_a);
        trace.nu_kinematic.push(m.nu_k);
        trace.rho.push(m.rho);
        m.rho *= cfg.rho_growth;
        let set = prob.to_set(&y);
        residual = constraint_residual(&set, limits);
        trace.residuals.push(residual);
        if residual <= cfg.residual_tol {
            return (Ok(set), trace);
        }
    }
    (Err(RepairError::RepairFailed { residual, outer: cfg.max_outer }), trace)
}

fn outside_region(set: &TrajectorySet, region: &Polygon) -> bool {
    set.trajectories
        .iter()
        .any(|t| t.points.iter().any(|&p| crate::geometry::signed_distance_convex(region, p) > VIOLATION_TOL))
}

/// Leaves feasible subproblem output untouched; otherwise projects it with
/// [`alm_project`] while keeping every waypoint inside the region.
pub fn repair_subproblem(
    sub: &Subproblem,
    trajs: &TrajectorySet,
    limits: &KinodynamicLimits,
    cfg: &AlmConfig,
) -> Result<TrajectorySet, RepairError> {
    if constraint_residual(trajs, limits) == 0.0 && !outside_region(trajs, &sub.polygon) {
        return Ok(trajs.clone());
    }
    let (res, _) = alm_project_traced(trajs, limits, cfg, Some(&sub.polygon));
    res
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Aabb;
    use crate::trajectory::Trajectory;

    fn limits() -> KinodynamicLimits {
        KinodynamicLimits::for_grid(0.25, 5, 0.04)
    }

    fn line(a: Point, b: Point, n: usize) -> Vec<Point> {
        (0..n).map(|k| a.lerp(b, k as f64 / (n - 1) as f64)).collect()
    }

    fn open() -> Workspace {
        Workspace::empty(Aabb::new(Point::new(-1.0, -1.0), Point::new(1.0, 1.0)))
    }

    #[test]
    fn parallel_lines_are_feasible() {
        let a = line(Point::new(-0.5, 0.0), Point::new(0.5, 0.0), 20);
        let b = line(Point::new(-0.5, 0.5), Point::new(0.5, 0.5), 20);
        let set = TrajectorySet::new(0.1, vec![Trajectory::new(0, 0, a), Trajectory::new(1, 0, b)]);
        assert!(check_feasibility(&set, &limits(), &open()).is_empty());
    }

    #[test]
    fn reports_crossing_and_long_step() {
        let a = line(Point::new(-0.15, 0.0), Point::new(0.15, 0.0), 7);
        let b = line(Point::new(0.0, -0.15), Point::new(0.0, 0.15), 7);
        let set = TrajectorySet::new(0.1, vec![Trajectory::new(0, 0, a), Trajectory::new(1, 0, b)]);
        let r = check_feasibility(&set, &limits(), &open());
        let at3: Vec<_> = r.agent_violations.iter().filter(|v| v.t == 3).collect();
        assert_eq!(at3.len(), 1);
        assert_eq!(at3[0].robots, (0, 1));
        assert!((at3[0].depth - 0.08).abs() < 1e-15);

        let s = limits().step_max();
        let pts = vec![Point::ZERO, Point::new(1.1 * s, 0.0)];
        let set = TrajectorySet::new(0.1, vec![Trajectory::new(2, 4, pts)]);
        let r = check_feasibility(&set, &limits(), &open());
        assert_eq!(r.kinematic_violations.len(), 1);
        assert_eq!((r.kinematic_violations[0].robot, r.kinematic_violations[0].t), (2, 4));
        assert!((r.kinematic_violations[0].excess - 0.1 * s).abs() < 1e-12);
    }

    #[test]
    fn head_on_pair_is_separated() {
        let a = line(Point::new(-0.3, 0.0), Point::new(0.3, 0.0), 13);
        let b = line(Point::new(0.3, 0.0), Point::new(-0.3, 0.0), 13);
        let set = TrajectorySet::new(0.1, vec![Trajectory::new(0, 0, a), Trajectory::new(1, 0, b)]);
        let (res, trace) = alm_project_traced(&set, &limits(), &AlmConfig::default(), None);
        let y = res.unwrap();
        assert!(check_feasibility(&y, &limits(), &open()).is_empty());
        assert!(trace.nu_agent.windows(2).all(|w| w[0] <= w[1]));
        assert!(trace.rho.windows(2).all(|w| (w[1] - 2.0 * w[0]).abs() < 1e-12));
        for (t, u) in y.trajectories.iter().zip(&set.trajectories) {
            assert_eq!(t.first(), u.first());
            assert_eq!(t.last(), u.last());
        }
    }

    #[test]
    fn joint_repair_keeps_segments_in_their_regions() {
        let left = Polygon::rectangle(Point::new(-0.5, -0.5), Point::new(0.0, 0.5));
        let right = Polygon::rectangle(Point::new(0.0, -0.5), Point::new(0.5, 0.5));
        // robot 0 runs down the left side of the shared wall, robot 1 up the right side
        let a = line(Point::new(-0.02, -0.3), Point::new(-0.02, 0.3), 13);
        let b = line(Point::new(0.02, 0.3), Point::new(0.02, -0.3), 13);
        let set = TrajectorySet::new(0.1, vec![Trajectory::new(0, 0, a), Trajectory::new(1, 0, b)]);
        assert!(!check_feasibility(&set, &limits(), &open()).is_empty());
        let y = repair_joint(&set, &[&left, &right], &limits(), &AlmConfig::default()).unwrap();
        assert!(check_feasibility(&y, &limits(), &open()).is_empty());
        for (t, r) in y.trajectories.iter().zip([&left, &right]) {
            assert!(t.points.iter().all(|&q| crate::geometry::signed_distance_convex(r, q) <= 1e-12));
        }
        for (t, u) in y.trajectories.iter().zip(&set.trajectories) {
            assert_eq!((t.first(), t.last()), (u.first(), u.last()));
        }
        assert!(matches!(
            repair_joint(&set, &[&left], &limits(), &AlmConfig::default()),
            Err(RepairError::InvalidInput(_))
        ));
    }

    #[test]
    fn feasible_input_is_returned_unchanged() {
        let a = line(Point::new(-0.5, 0.0), Point::new(0.5, 0.0), 20);
        let set = TrajectorySet::new(0.1, vec![Trajectory::new(0, 0, a)]);
        assert_eq!(alm_project(&set, &limits(), &AlmConfig::default()).unwrap(), set);
    }
}
