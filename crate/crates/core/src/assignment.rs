//! Region transitions and independent per-region subproblems.
//!
//! A discrete plan is embedded at cell centers, anchored at the continuous
//! start and goal of each robot, and refined into `substeps` continuous
//! steps per discrete step. Walking each robot's polyline through the
//! partition yields the region visits; every visit becomes one segment of
//! that region's subproblem.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::decomposition::ConvexPartition;
use crate::geometry::{clip_segment_convex, contains, Point, Polygon};
use crate::mapf::{Cell, DiscretePlan, GridGraph};

/// Slack used when walking a polyline through closed regions.
const WALK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AssignmentError {
    #[error("unknown vertex {0:?}")]
    UnknownVertex(Cell),
    #[error("robot {robot} waypoint at step {t} lies in no region")]
    UncoveredWaypoint { robot: usize, t: usize },
    #[error("inconsistent transition chain: {0}")]
    InconsistentChain(String),
}

/// Physical limits shared by all robots.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KinodynamicLimits {
    pub robot_radius: f64,
    pub v_max: f64,
    pub dt: f64,
    /// Required clearance from obstacles.
    pub r_obs: f64,
    /// Required distance between robot centers.
    pub r_agent: f64,
}

impl KinodynamicLimits {
    /// Limits matched to a grid: a continuous step may cover up to 1.5 times
    /// the nominal `cell_size / substeps`.
    pub fn for_grid(cell_size: f64, substeps: usize, robot_radius: f64) -> Self {
        let dt = 0.1;
        let step = 1.5 * cell_size / substeps as f64;
        Self { robot_radius, v_max: step / dt, dt, r_obs: robot_radius, r_agent: 2.0 * robot_radius }
    }

    /// Largest admissible distance between consecutive waypoints.
    pub fn step_max(&self) -> f64 {
        self.v_max * self.dt
    }

    pub fn is_valid(&self) -> bool {
        [self.robot_radius, self.v_max, self.dt, self.r_obs, self.r_agent].iter().all(|v| v.is_finite() && *v > 0.0)
            && self.r_agent >= 2.0 * self.robot_radius
            && self.r_obs >= self.robot_radius
    }
}

/// Cell centers of every plan step.
pub fn embed_plan(plan: &DiscretePlan, graph: &GridGraph) -> Result<Vec<Vec<Point>>, AssignmentError> {
    plan.paths
        .iter()
        .map(|p| {
            p.iter()
                .map(|&c| graph.vertex(c).map(|_| graph.center(c)).ok_or(AssignmentError::UnknownVertex(c)))
                .collect()
        })
        .collect()
}

/// Embedded plan extended by straight lead-in and lead-out steps.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchoredPaths {
    pub paths: Vec<Vec<Point>>,
    pub lead_in: usize,
    pub lead_out: usize,
}

/// Prepends a straight approach from each continuous start to its first
/// cell center and appends one from the last center to the goal. All robots
/// share the same number of lead steps, each at most `0.9 * cell_size` long.
pub fn anchor_paths(embedded: &[Vec<Point>], starts: &[Point], goals: &[Point], cell_size: f64) -> AnchoredPaths {
    let steps = |d: f64| (d / (0.9 * cell_size)).ceil() as usize;
    let lead_in = embedded.iter().zip(starts).map(|(p, &s)| steps(s.dist(p[0]))).max().unwrap_or(0);
    let lead_out = embedded.iter().zip(goals).map(|(p, &g)| steps(g.dist(*p.last().unwrap()))).max().unwrap_or(0);
    let paths = embedded
        .iter()
        .zip(starts.iter().zip(goals))
        .map(|(p, (&s, &g))| {
            let mut out = Vec::with_capacity(p.len() + lead_in + lead_out);
            out.extend((0..lead_in).map(|k| s.lerp(p[0], k as f64 / lead_in as f64)));
            out.extend_from_slice(p);
            let last = *p.last().unwrap();
            out.extend((1..=lead_out).map(|k| if k == lead_out { g } else { last.lerp(g, k as f64 / lead_out as f64) }));
            out
        })
        .collect();
    AnchoredPaths { paths, lead_in, lead_out }
}

/// A robot leaving one region for another between two discrete steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub robot: usize,
    pub region_out: usize,
    pub t_out: usize,
    pub pos_out: Point,
    pub region_in: usize,
    pub t_in: usize,
    pub pos_in: Point,
}

/// One transition per consecutive pair of waypoints in different regions;
/// boundary points belong to the lowest region id.
pub fn extract_transitions(
    partition: &ConvexPartition,
    paths: &[Vec<Point>],
) -> Result<Vec<Transition>, AssignmentError> {
    let mut out = Vec::new();
    for (robot, path) in paths.iter().enumerate() {
        let regions: Vec<usize> = path
            .iter()
            .enumerate()
            .map(|(t, &p)| partition.locate(p).ok_or(AssignmentError::UncoveredWaypoint { robot, t }))
            .collect::<Result<_, _>>()?;
        for t in 0..path.len().saturating_sub(1) {
            if regions[t] != regions[t + 1] {
                out.push(Transition {
                    robot,
                    region_out: regions[t],
                    t_out: t,
                    pos_out: path[t],
                    region_in: regions[t + 1],
                    t_in: t + 1,
                    pos_in: path[t + 1],
                });
            }
        }
    }
    Ok(out)
}

/// Part of one robot's trajectory inside one region, covering global
/// continuous steps `k_enter..=k_exit`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub robot: usize,
    pub k_enter: usize,
    pub k_exit: usize,
    pub pos_enter: Point,
    pub pos_exit: Point,
    /// Embedded plan at continuous resolution (`k_exit - k_enter + 1` points).
    pub reference: Vec<Point>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.k_exit - self.k_enter + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// One convex region with the robot segments that traverse it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subproblem {
    pub region: usize,
    pub polygon: Polygon,
    pub segments: Vec<Segment>,
    pub limits: KinodynamicLimits,
    pub substeps: usize,
}

impl Subproblem {
    /// Number of continuous waypoints spanned by the segments.
    pub fn horizon(&self) -> usize {
        let lo = self.segments.iter().map(|s| s.k_enter).min().unwrap_or(0);
        let hi = self.segments.iter().map(|s| s.k_exit).max().unwrap_or(0);
        hi - lo + 1
    }
}

struct Crossing {
    piece: usize,
    tau: f64,
    point: Point,
    next: usize,
}

/// Regions visited by a polyline: the starting region and every handoff.
///
/// Visits of zero length are skipped; among candidate next regions the
/// lowest id wins.
fn walk(partition: &ConvexPartition, path: &[Point], robot: usize) -> Result<(usize, Vec<Crossing>), AssignmentError> {
    let rs = &partition.regions;
    let mut cur = partition.locate(path[0]).ok_or(AssignmentError::UncoveredWaypoint { robot, t: 0 })?;
    let first_moving = path.windows(2).position(|w| w[0].dist(w[1]) > 1e-12);
    // prefer a start region that the first motion actually enters
    if let Some(t) = first_moving {
        let (a, b) = (path[t], path[t + 1]);
        let eps = WALK_TOL / a.dist(b);
        if let Some(r) = (0..rs.len()).find(|&r| {
            clip_segment_convex(a, b, &rs[r], WALK_TOL).is_some_and(|(s0, s1)| s0 <= eps && s1 > eps)
                && contains(&rs[r], path[0])
        }) {
            cur = r;
        }
    }
    let first = cur;
    let mut out = Vec::new();
    for t in 0..path.len() - 1 {
        let (a, b) = (path[t], path[t + 1]);
        let len = a.dist(b);
        if len <= 1e-12 {
            continue;
        }
        let eps = WALK_TOL / len;
        let mut tau = 0.0f64;
        loop {
            let exit = clip_segment_convex(a, b, &rs[cur], WALK_TOL)
                .map(|(_, t1)| t1)
                .filter(|&t1| t1 >= tau - eps)
                .unwrap_or(tau);
            if exit >= 1.0 - eps {
                break;
            }
            let exact = clip_segment_convex(a, b, &rs[cur], 0.0)
                .map(|(_, t1)| t1)
                .filter(|&t1| t1 >= tau - eps && t1 <= exit)
                .unwrap_or(exit)
                .max(tau);
            let next = (0..rs.len())
                .filter(|&r| r != cur)
                .find(|&r| {
                    clip_segment_convex(a, b, &rs[r], WALK_TOL).is_some_and(|(s0, s1)| s0 <= exact + eps && s1 > exit + eps)
                })
                .ok_or(AssignmentError::UncoveredWaypoint { robot, t })?;
            out.push(Crossing { piece: t, tau: exact, point: a.lerp(b, exact), next });
            cur = next;
            tau = exact;
        }
    }
    if !contains(&rs[cur], *path.last().unwrap()) {
        return Err(AssignmentError::UncoveredWaypoint { robot, t: path.len() - 1 });
    }
    Ok((first, out))
}

/// Substep offsets in `0..=substeps` for the crossings of one piece, strictly
/// increasing and minimizing the largest resulting step.
fn place_knots(a: Point, b: Point, crossings: &[(f64, Point)], substeps: usize) -> Option<Vec<usize>> {
    let len = a.dist(b);
    let allowed = |o: usize, tau: f64| match o {
        0 => tau * len <= WALK_TOL,
        o if o == substeps => (1.0 - tau) * len <= WALK_TOL,
        _ => true,
    };
    fn search(
        j: usize,
        lo: usize,
        cur: &mut Vec<usize>,
        best: &mut Option<(f64, Vec<usize>)>,
        eval: &dyn Fn(&[usize]) -> f64,
        ok: &dyn Fn(usize, usize) -> bool,
        c: usize,
        s: usize,
    ) {
        if j == c {
            let m = eval(cur);
            if best.as_ref().is_none_or(|(bm, _)| m < *bm) {
                *best = Some((m, cur.clone()));
            }
            return;
        }
        for o in lo..=s {
            if ok(j, o) {
                cur.push(o);
                search(j + 1, o + 1, cur, best, eval, ok, c, s);
                cur.pop();
            }
        }
    }
    let eval = |offs: &[usize]| -> f64 {
        let mut knots = vec![(0usize, a)];
        knots.extend(offs.iter().zip(crossings).map(|(&o, &(_, q))| (o, q)));
        knots.push((substeps, b));
        knots
            .windows(2)
            .map(|w| {
                let d = w[0].1.dist(w[1].1);
                if w[1].0 == w[0].0 {
                    if d <= WALK_TOL {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    d / (w[1].0 - w[0].0) as f64
                }
            })
            .fold(0.0, f64::max)
    };
    let ok = |j: usize, o: usize| allowed(o, crossings[j].0);
    let mut best = None;
    search(0, 0, &mut Vec::new(), &mut best, &eval, &ok, crossings.len(), substeps);
    best.filter(|(m, _)| m.is_finite()).map(|(_, v)| v)
}

/// Continuous reference for one robot plus its region visits as
/// `(region, k_enter, k_exit)`.
fn refine(
    partition: &ConvexPartition,
    path: &[Point],
    robot: usize,
    substeps: usize,
) -> Result<(Vec<Point>, Vec<(usize, usize, usize)>), AssignmentError> {
    let (first, crossings) = walk(partition, path, robot)?;
    let total = substeps * (path.len() - 1);
    let mut x = vec![Point::ZERO; total + 1];
    let mut handoffs: Vec<(usize, usize)> = Vec::new();
    let mut idx = 0;
    for t in 0..path.len() - 1 {
        let (a, b) = (path[t], path[t + 1]);
        let mut here = Vec::new();
        while idx < crossings.len() && crossings[idx].piece == t {
            here.push(&crossings[idx]);
            idx += 1;
        }
        let pts: Vec<(f64, Point)> = here.iter().map(|c| (c.tau, c.point)).collect();
        let offs = place_knots(a, b, &pts, substeps).ok_or_else(|| {
            AssignmentError::InconsistentChain(format!("robot {robot}: too many region changes in step {t}"))
        })?;
        let mut knots = vec![(0usize, a)];
        knots.extend(offs.iter().zip(&pts).map(|(&o, &(_, q))| (o, q)));
        knots.push((substeps, b));
        for w in knots.windows(2) {
            let ((o0, p0), (o1, p1)) = (w[0], w[1]);
            for o in o0..o1 {
                x[t * substeps + o] = p0.lerp(p1, (o - o0) as f64 / (o1 - o0) as f64);
            }
        }
        for (&o, c) in offs.iter().zip(&here) {
            handoffs.push((t * substeps + o, c.next));
        }
    }
    x[total] = *path.last().unwrap();
    let mut visits = Vec::new();
    let (mut region, mut k0) = (first, 0usize);
    for (k, next) in handoffs {
        if k > k0 {
            visits.push((region, k0, k));
        }
        region = next;
        k0 = k;
    }
    visits.push((region, k0, total));
    Ok((x, visits))
}

fn check_chain(
    partition: &ConvexPartition,
    transitions: &[Transition],
    paths: &[Vec<Point>],
) -> Result<(), AssignmentError> {
    let mut by_robot: BTreeMap<usize, Vec<&Transition>> = BTreeMap::new();
    for tr in transitions {
        if tr.robot >= paths.len() {
            return Err(AssignmentError::InconsistentChain(format!("unknown robot {}", tr.robot)));
        }
        by_robot.entry(tr.robot).or_default().push(tr);
    }
    for (robot, mut trs) in by_robot {
        trs.sort_by_key(|t| t.t_out);
        let mut region = partition
            .locate(paths[robot][0])
            .ok_or(AssignmentError::UncoveredWaypoint { robot, t: 0 })?;
        let mut last_t = None;
        for tr in trs {
            if tr.t_in != tr.t_out + 1 || tr.region_in == tr.region_out {
                return Err(AssignmentError::InconsistentChain(format!("robot {robot}: malformed transition")));
            }
            if tr.region_out != region || last_t.is_some_and(|lt| tr.t_out < lt) {
                return Err(AssignmentError::InconsistentChain(format!(
                    "robot {robot}: transition at t={} leaves region {} but robot is in {}",
                    tr.t_out, tr.region_out, region
                )));
            }
            region = tr.region_in;
            last_t = Some(tr.t_in);
        }
    }
    Ok(())
}

/// Splits the anchored paths into per-region subproblems.
///
/// Segment windows of one robot tile `0..=substeps * (len - 1)`; adjacent
/// segments share their handoff waypoint, which lies on the common boundary.
/// Subproblems are returned in region order, segments by entry step then robot.
pub fn build_subproblems(
    partition: &ConvexPartition,
    transitions: &[Transition],
    paths: &[Vec<Point>],
    limits: KinodynamicLimits,
    substeps: usize,
) -> Result<Vec<Subproblem>, AssignmentError> {
    if substeps == 0 {
        return Err(AssignmentError::InconsistentChain("substeps must be positive".into()));
    }
    check_chain(partition, transitions, paths)?;
    let mut by_region: BTreeMap<usize, Vec<Segment>> = BTreeMap::new();
    for (robot, path) in paths.iter().enumerate() {
        let (x, visits) = refine(partition, path, robot, substeps)?;
        for (region, k0, k1) in visits {
            by_region.entry(region).or_default().push(Segment {
                robot,
                k_enter: k0,
                k_exit: k1,
                pos_enter: x[k0],
                pos_exit: x[k1],
                reference: x[k0..=k1].to_vec(),
            });
        }
    }
    Ok(by_region
        .into_iter()
        .map(|(region, mut segments)| {
            segments.sort_by_key(|s| (s.k_enter, s.robot));
            Subproblem { region, polygon: partition.regions[region].clone(), segments, limits, substeps }
        })
        .collect())
}

/// Checks that segment windows tile `0..=total` per robot under half-open
/// ownership (the final segment also owns `total`) and that consecutive
/// segments share their handoff point.
pub fn check_tiling(subproblems: &[Subproblem], n_robots: usize, total: usize) -> Result<(), String> {
    let mut owner: Vec<Vec<Option<usize>>> = vec![vec![None; total + 1]; n_robots];
    let mut per_robot: Vec<Vec<&Segment>> = vec![Vec::new(); n_robots];
    for sp in subproblems {
        for s in &sp.segments {
            if s.robot >= n_robots || s.k_exit > total || s.k_enter >= s.k_exit {
                return Err(format!("segment of robot {} has bad window {}..{}", s.robot, s.k_enter, s.k_exit));
            }
            if s.reference.len() != s.len() {
                return Err(format!("segment of robot {} has {} reference points", s.robot, s.reference.len()));
            }
            let hi = if s.k_exit == total { total + 1 } else { s.k_exit };
            for k in s.k_enter..hi {
                if let Some(r) = owner[s.robot][k] {
                    return Err(format!("robot {} step {k} owned by regions {r} and {}", s.robot, sp.region));
                }
                owner[s.robot][k] = Some(sp.region);
            }
            per_robot[s.robot].push(s);
        }
    }
    for (robot, own) in owner.iter().enumerate() {
        if let Some(k) = own.iter().position(Option::is_none) {
            return Err(format!("robot {robot} step {k} owned by no region"));
        }
    }
    for segs in &mut per_robot {
        segs.sort_by_key(|s| s.k_enter);
        for w in segs.windows(2) {
            if w[0].k_exit != w[1].k_enter || w[0].pos_exit.dist(w[1].pos_enter) > 1e-12 {
                return Err(format!("robot {} handoff at step {} is discontinuous", w[0].robot, w[0].k_exit));
            }
        }
    }
    Ok(())
}
