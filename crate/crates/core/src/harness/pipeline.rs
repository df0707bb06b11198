use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::{
    anchor_paths, build_subproblems, embed_plan, extract_transitions, AssignmentError, KinodynamicLimits, Subproblem,
};
use crate::decomposition::{pbd, ConvexPartition};
use crate::diffusion::{
    make_training_set, sample_subproblem, train_score, DiffusionError, ObstacleTerm, SamplerConfig, ScoreModel,
    TrainConfig, TrainReport, TrainingSet,
};
use crate::geometry::{segment_enters_convex, Point, Polygon};
use crate::mapf::{build_grid, solve_mapf, DiscretePlan, GridGraph, MapfConfig};
use crate::repair::{check_feasibility, repair_joint, repair_subproblem, AlmConfig, ViolationReport};
use crate::trajectory::{Trajectory, TrajectorySet};

use super::{gen_map, metric_acceleration, metric_path_ratio, HarnessError, MapKind, Scenario};

/// Default wall-clock budget per instance, in seconds.
pub const DEFAULT_TIME_LIMIT: f64 = 900.0;
/// Largest factor by which the continuous refinement may be made finer.
const MAX_REFINE: usize = 4;
/// Rounds of joint repair across regions after the global check.
pub const JOINT_ROUNDS: usize = 3;
/// Largest gap allowed between the ends of consecutive segments.
const STITCH_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub cell_size: f64,
    pub substeps: usize,
    pub mapf: MapfConfig,
    pub sampler: SamplerConfig,
    pub alm: AlmConfig,
    pub time_limit: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            cell_size: 0.25,
            substeps: 5,
            mapf: MapfConfig::default(),
            sampler: SamplerConfig::default(),
            alm: AlmConfig::default(),
            time_limit: DEFAULT_TIME_LIMIT,
        }
    }
}

/// Pipeline stage that stopped a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Input,
    Mapf,
    Decompose,
    Assign,
    Repair,
    Stitch,
    Check,
    Timeout,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub stage: Stage,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub success: bool,
    pub wall_time: f64,
    pub failure: Option<Failure>,
    pub path_ratio: Vec<f64>,
    pub mean_path_ratio: Option<f64>,
    pub acceleration: Vec<f64>,
    pub mean_acceleration: Option<f64>,
    pub violations: ViolationReport,
    pub trajectories: Option<TrajectorySet>,
    pub plan: Option<DiscretePlan>,
    pub partition: Option<ConvexPartition>,
    pub subproblems: Vec<Subproblem>,
    pub artifacts: Vec<String>,
}

impl RunResult {
    fn failed(stage: Stage, message: impl ToString) -> Self {
        RunResult {
            success: false,
            wall_time: 0.0,
            failure: Some(Failure { stage, message: message.to_string() }),
            path_ratio: Vec::new(),
            mean_path_ratio: None,
            acceleration: Vec::new(),
            mean_acceleration: None,
            violations: ViolationReport::default(),
            trajectories: None,
            plan: None,
            partition: None,
            subproblems: Vec::new(),
            artifacts: Vec::new(),
        }
    }
}

/// SplitMix64 finalizer of `(seed, stream)`; gives every subproblem its own
/// RNG stream independent of scheduling.
pub fn split_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Worker cap from `DGD_WORKERS`, else the number of available cores.
pub fn worker_count() -> usize {
    std::env::var("DGD_WORKERS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs `f` on a thread pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Snaps each point to the nearest unused vertex it can reach in a straight
/// line without entering an inflated obstacle, falling back to the nearest
/// unused vertex. Visible vertices with `prefer(i, v)` win for point `i`.
fn snap_visible(
    grid: &GridGraph,
    points: &[Point],
    blockers: &[Polygon],
    prefer: impl Fn(usize, usize) -> bool,
) -> Result<Vec<usize>, HarnessError> {
    let mut taken = vec![false; grid.num_vertices()];
    let mut out = Vec::with_capacity(points.len());
    for (i, &p) in points.iter().enumerate() {
        let order = grid.by_distance(p);
        let free = order.iter().copied().filter(|&v| !taken[v]);
        let visible = free
            .clone()
            .filter(|&v| !blockers.iter().any(|o| segment_enters_convex(p, grid.embed(v), o, 1e-12)));
        let v = visible
            .clone()
            .find(|&v| prefer(i, v))
            .or_else(|| visible.clone().next())
            .or_else(|| free.clone().next())
            .ok_or_else(|| HarnessError::InvalidInput("more robots than grid vertices".into()))?;
        taken[v] = true;
        out.push(v);
    }
    Ok(out)
}

/// Joins each robot's repaired segments into one trajectory from step 0.
fn stitch(pieces: Vec<Trajectory>, n_robots: usize, dt: f64) -> Result<TrajectorySet, String> {
    let mut per_robot: Vec<Vec<Trajectory>> = vec![Vec::new(); n_robots];
    for t in pieces {
        per_robot.get_mut(t.robot).ok_or_else(|| format!("unknown robot {}", t.robot))?.push(t);
    }
    let mut out = Vec::with_capacity(n_robots);
    for (robot, mut segs) in per_robot.into_iter().enumerate() {
        segs.sort_by_key(|s| s.start);
        let mut points: Vec<Point> = Vec::new();
        for s in segs {
            if points.is_empty() {
                if s.start != 0 {
                    return Err(format!("robot {robot} starts at step {}", s.start));
                }
                points = s.points;
                continue;
            }
            let end = points.len() - 1;
            if s.start != end {
                return Err(format!("robot {robot}: gap or overlap at step {end}"));
            }
            if points[end].dist(s.points[0]) > STITCH_TOL {
                return Err(format!("robot {robot}: discontinuous handoff at step {end}"));
            }
            points.extend_from_slice(&s.points[1..]);
        }
        if points.is_empty() {
            return Err(format!("robot {robot} has no segments"));
        }
        out.push(Trajectory::new(robot, 0, points));
    }
    Ok(TrajectorySet::new(dt, out))
}

/// Decompose, plan, assign, sample and repair every region, stitch and check.
pub fn run_pipeline(scenario: &Scenario, model: &ScoreModel, cfg: &PipelineConfig) -> RunResult {
    let clock = Instant::now();
    let mut result = run_stages(scenario, model, cfg);
    result.wall_time = clock.elapsed().as_secs_f64();
    if result.success && result.wall_time > cfg.time_limit {
        result.success = false;
        result.failure = Some(Failure {
            stage: Stage::Timeout,
            message: format!("{:.1} s exceeds the {:.1} s limit", result.wall_time, cfg.time_limit),
        });
    }
    result
}

/// Builds the grid, snaps starts and goals to it and solves the MAPF
/// instance with the scenario's seed.
pub fn plan_discrete(scenario: &Scenario, cfg: &PipelineConfig) -> Result<(GridGraph, DiscretePlan), Failure> {
    let fail = |e: &dyn std::fmt::Display| Failure { stage: Stage::Mapf, message: e.to_string() };
    let r = scenario.limits.robot_radius;
    let grid = build_grid(&scenario.workspace, cfg.cell_size, r).map_err(|e| fail(&e))?;
    let blockers = scenario.workspace.inflate(r).obstacle_polygons();
    let comp = grid.components();
    let starts = snap_visible(&grid, &scenario.starts, &blockers, |_, _| true).map_err(|e| fail(&e))?;
    let goals =
        snap_visible(&grid, &scenario.goals, &blockers, |i, v| comp[v] == comp[starts[i]]).map_err(|e| fail(&e))?;
    let mapf_cfg = MapfConfig { seed: split_seed(scenario.seed, u64::MAX), ..cfg.mapf.clone() };
    let plan = solve_mapf(&grid, &starts, &goals, &mapf_cfg).map_err(|e| fail(&e))?;
    Ok((grid, plan))
}

fn run_stages(scenario: &Scenario, model: &ScoreModel, cfg: &PipelineConfig) -> RunResult {
    if let Err(e) = scenario.validate() {
        return RunResult::failed(Stage::Input, e);
    }
    if cfg.substeps == 0 || !(cfg.cell_size > 0.0) {
        return RunResult::failed(Stage::Input, "cell size and substeps must be positive");
    }
    let ws = &scenario.workspace;
    let limits = scenario.limits;
    let r = limits.robot_radius;
    let n = scenario.num_robots();
    let cspace = ws.inflate(r);

    let (grid, plan) = match plan_discrete(scenario, cfg) {
        Ok(v) => v,
        Err(f) => return RunResult::failed(f.stage, f.message),
    };
    let embedded = match embed_plan(&plan, &grid) {
        Ok(e) => e,
        Err(e) => return RunResult::failed(Stage::Assign, e),
    };
    let anchored = anchor_paths(&embedded, &scenario.starts, &scenario.goals, cfg.cell_size);

    let partition = match pbd(&cspace, Some(&anchored.paths)) {
        Ok(p) => p,
        Err(e) => return RunResult::failed(Stage::Decompose, e),
    };
    // Steps that cross more regions than they have substeps, or references
    // that would exceed the step limit, are retried on a finer refinement;
    // the limits stay the same.
    let step_ok = |subs: &[Subproblem]| {
        subs.iter().flat_map(|s| &s.segments).all(|seg| {
            seg.reference.windows(2).all(|w| w[0].dist(w[1]) <= limits.step_max() - cfg.alm.margin)
        })
    };
    let subs = extract_transitions(&partition, &anchored.paths).and_then(|tr| {
        let mut substeps = cfg.substeps;
        loop {
            let finer = substeps < MAX_REFINE * cfg.substeps;
            match build_subproblems(&partition, &tr, &anchored.paths, limits, substeps) {
                Err(AssignmentError::InconsistentChain(_)) if finer => substeps *= 2,
                Ok(s) if finer && !step_ok(&s) => substeps *= 2,
                other => return other,
            }
        }
    });
    let subs = match subs {
        Ok(s) => s,
        Err(e) => {
            let mut res = RunResult::failed(Stage::Assign, e);
            res.plan = Some(plan);
            res.partition = Some(partition);
            return res;
        }
    };

    let terms = ObstacleTerm::for_workspace(ws, limits.r_obs);
    let repaired: Vec<Result<TrajectorySet, String>> = subs
        .par_iter()
        .map(|sub| {
            let local: Vec<ObstacleTerm> = terms.iter().filter(|t| t.near(&sub.polygon)).cloned().collect();
            let sampler = SamplerConfig { seed: split_seed(scenario.seed ^ cfg.sampler.seed, sub.region as u64), ..cfg.sampler.clone() };
            let x = sample_subproblem(sub, model, &sampler, &local);
            repair_subproblem(sub, &x, &limits, &cfg.alm).map_err(|e| format!("region {}: {e}", sub.region))
        })
        .collect();

    let mut res = RunResult::failed(Stage::Check, "");
    res.plan = Some(plan);
    res.partition = Some(partition);
    let mut pieces = Vec::new();
    let mut owner = Vec::new();
    let mut repair_errors = Vec::new();
    for (k, r) in repaired.into_iter().enumerate() {
        match r {
            Ok(set) => {
                owner.extend(std::iter::repeat(k).take(set.trajectories.len()));
                pieces.extend(set.trajectories);
            }
            Err(e) => repair_errors.push(e),
        }
    }
    if !repair_errors.is_empty() {
        res.subproblems = subs;
        res.failure = Some(Failure { stage: Stage::Repair, message: repair_errors.join("; ") });
        return res;
    }
    let mut set = match stitch(pieces.clone(), n, limits.dt) {
        Ok(s) => s,
        Err(e) => {
            res.subproblems = subs;
            res.failure = Some(Failure { stage: Stage::Stitch, message: e });
            return res;
        }
    };
    res.violations = check_feasibility(&set, &limits, ws);

    // Regions are repaired independently, so robots in neighbouring regions
    // can still collide. Such robots are repaired together, each segment
    // confined to its own region.
    let mut involved = vec![false; n];
    for _ in 0..JOINT_ROUNDS {
        if res.violations.agent_violations.is_empty() {
            break;
        }
        for v in &res.violations.agent_violations {
            involved[v.robots.0] = true;
            involved[v.robots.1] = true;
        }
        let chosen: Vec<usize> = (0..pieces.len()).filter(|&i| involved[pieces[i].robot]).collect();
        let joint = TrajectorySet::new(limits.dt, chosen.iter().map(|&i| pieces[i].clone()).collect());
        let regions: Vec<&Polygon> = chosen.iter().map(|&i| &subs[owner[i]].polygon).collect();
        let Ok(fixed) = repair_joint(&joint, &regions, &limits, &cfg.alm) else { break };
        for (&i, t) in chosen.iter().zip(fixed.trajectories) {
            pieces[i] = t;
        }
        match stitch(pieces.clone(), n, limits.dt) {
            Ok(s) => set = s,
            Err(_) => break,
        }
        res.violations = check_feasibility(&set, &limits, ws);
    }
    res.subproblems = subs;
    for (i, t) in set.trajectories.iter().enumerate() {
        if let Ok(p) = metric_path_ratio(&t.points, scenario.starts[i], scenario.goals[i]) {
            res.path_ratio.push(p);
        }
        if let Ok(a) = metric_acceleration(&t.points, set.dt) {
            res.acceleration.push(a);
        }
    }
    res.mean_path_ratio = mean(&res.path_ratio);
    res.mean_acceleration = mean(&res.acceleration);
    res.success = res.violations.is_empty();
    res.failure = if res.success {
        None
    } else {
        Some(Failure {
            stage: Stage::Check,
            message: format!(
                "{} violations, worst {:.3e}",
                res.violations.len(),
                res.violations.max_violation()
            ),
        })
    };
    res.trajectories = Some(set);
    res
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Trains a score model on synthetic trajectories drawn from the
/// decompositions of several generated maps.
pub fn train_default_model(
    seed: u64,
    epochs: usize,
    samples: usize,
) -> Result<(ScoreModel, TrainReport), DiffusionError> {
    let r = 0.04;
    let limits = KinodynamicLimits::for_grid(0.25, 5, r);
    let kinds = [MapKind::Basic, MapKind::Dense, MapKind::Room, MapKind::Shelf];
    let maps = 8;
    let mut set = TrainingSet::default();
    for k in 0..maps {
        let kind = kinds[k % kinds.len()];
        let ws = gen_map(kind, split_seed(seed, k as u64));
        let partition = pbd(&ws.inflate(r), None).map_err(|e| DiffusionError::InvalidConfig(e.to_string()))?;
        let share = samples / maps + usize::from(k < samples % maps);
        set.extend(make_training_set(&partition, share, split_seed(seed, 1000 + k as u64), &limits));
    }
    train_score(&set, &TrainConfig { epochs, seed, ..TrainConfig::default() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Workspace;
    use rand::SeedableRng;

    fn untrained() -> ScoreModel {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        ScoreModel::new(16, 16, 2, crate::diffusion::NoiseSchedule::default(), &mut rng)
    }

    #[test]
    fn split_seed_spreads_streams() {
        let a: Vec<u64> = (0..100).map(|k| split_seed(7, k)).collect();
        let uniq: std::collections::HashSet<_> = a.iter().collect();
        assert_eq!(uniq.len(), 100);
        assert_eq!(split_seed(7, 3), split_seed(7, 3));
    }

    #[test]
    fn unsolvable_instance_fails_at_mapf() {
        use crate::geometry::{Aabb, Obstacle};
        // a full-height wall splits the map; the goal sits on the far side
        let ws = Workspace::new(
            Aabb::new(Point::new(-1.0, -1.0), Point::new(1.0, 1.0)),
            vec![Obstacle::polygon(Polygon::rectangle(Point::new(-0.05, -1.0), Point::new(0.05, 1.0)))],
        );
        let sc = Scenario {
            workspace: ws,
            starts: vec![Point::new(-0.6, 0.0)],
            goals: vec![Point::new(0.6, 0.0)],
            limits: KinodynamicLimits::for_grid(0.25, 5, 0.04),
            seed: 0,
        };
        let res = run_pipeline(&sc, &untrained(), &PipelineConfig::default());
        assert!(!res.success);
        assert_eq!(res.failure.unwrap().stage, Stage::Mapf);
    }

    #[test]
    fn straight_swap_in_open_space_succeeds() {
        use crate::geometry::Aabb;
        let ws = Workspace::empty(Aabb::new(Point::new(-1.0, -1.0), Point::new(1.0, 1.0)));
        let sc = Scenario {
            workspace: ws,
            starts: vec![Point::new(-0.625, -0.375), Point::new(0.625, 0.375)],
            goals: vec![Point::new(0.625, -0.375), Point::new(-0.625, 0.375)],
            limits: KinodynamicLimits::for_grid(0.25, 5, 0.04),
            seed: 1,
        };
        let cfg = PipelineConfig { sampler: SamplerConfig { test_mode: true, ..Default::default() }, ..Default::default() };
        let res = run_pipeline(&sc, &untrained(), &cfg);
        assert!(res.success, "{:?}", res.failure);
        let set = res.trajectories.unwrap();
        for (i, t) in set.trajectories.iter().enumerate() {
            assert_eq!(t.first(), sc.starts[i]);
            assert_eq!(t.last(), sc.goals[i]);
        }
        assert!(res.path_ratio.iter().all(|&p| p >= 1.0 - 1e-9));
    }
}
