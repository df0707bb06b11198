//! Python bindings for `dgd_core`.
//!
//! Geometry crosses the boundary as `(x, y)` tuples and everything with a
//! file format also converts to and from its JSON text.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use dgd_core::assignment::KinodynamicLimits;
use dgd_core::decomposition::{self, ConvexPartition};
use dgd_core::diffusion::{self, ScoreModel, TrainConfig};
use dgd_core::geometry::{self, Point};
use dgd_core::harness::{self, MapKind, PipelineConfig, RunResult, ScenarioFile, TrajectoryFile};

type Xy = (f64, f64);

fn xy(p: Point) -> Xy {
    (p.x, p.y)
}

fn pts(v: &[Point]) -> Vec<Xy> {
    v.iter().copied().map(xy).collect()
}

fn from_xy(v: &[Xy]) -> Vec<Point> {
    v.iter().map(|&(x, y)| Point::new(x, y)).collect()
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json<T: serde::Serialize>(v: &T) -> PyResult<String> {
    harness::to_json(v).map_err(value_err)
}

/// Rectangular workspace with convex obstacles.
#[pyclass(module = "dgd", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct Workspace {
    inner: geometry::Workspace,
}

#[pymethods]
impl Workspace {
    /// Benchmark map of the given kind: basic, dense, room, shelf or large.
    #[staticmethod]
    fn generate(kind: &str, seed: u64) -> PyResult<Self> {
        let kind: MapKind = kind.parse().map_err(value_err)?;
        Ok(Workspace { inner: harness::gen_map(kind, seed) })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Workspace { inner: serde_json::from_str(text).map_err(value_err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        json(&self.inner)
    }

    /// `((min_x, min_y), (max_x, max_y))`.
    #[getter]
    fn bounds(&self) -> (Xy, Xy) {
        (xy(self.inner.bounds.min), xy(self.inner.bounds.max))
    }

    #[getter]
    fn num_obstacles(&self) -> usize {
        self.inner.obstacles.len()
    }

    /// Configuration space of a disk robot of radius `r`.
    fn inflate(&self, r: f64) -> Self {
        Workspace { inner: self.inner.inflate(r) }
    }

    /// Random start and goal positions for `n` robots.
    #[pyo3(signature = (n, robot_radius, seed=0))]
    fn place_robots(&self, n: usize, robot_radius: f64, seed: u64) -> PyResult<Scenario> {
        Ok(Scenario { inner: harness::place_robots(&self.inner, n, robot_radius, seed).map_err(value_err)? })
    }

    fn __repr__(&self) -> String {
        format!("Workspace(obstacles={})", self.inner.obstacles.len())
    }
}

/// Robots with starts and goals on a workspace.
#[pyclass(module = "dgd", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct Scenario {
    inner: harness::Scenario,
}

#[pymethods]
impl Scenario {
    #[new]
    #[pyo3(signature = (workspace, starts, goals, robot_radius, seed=0))]
    fn new(workspace: &Workspace, starts: Vec<Xy>, goals: Vec<Xy>, robot_radius: f64, seed: u64) -> PyResult<Self> {
        let file = ScenarioFile { robot_radius, seed, starts: from_xy(&starts), goals: from_xy(&goals), limits: None };
        Ok(Scenario { inner: file.into_scenario(workspace.inner.clone()).map_err(value_err)? })
    }

    /// Scenario file text on the given workspace.
    #[staticmethod]
    fn from_json(workspace: &Workspace, text: &str) -> PyResult<Self> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(value_err)?;
        Ok(Scenario { inner: file.into_scenario(workspace.inner.clone()).map_err(value_err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        json(&ScenarioFile::from_scenario(&self.inner))
    }

    #[getter]
    fn workspace(&self) -> Workspace {
        Workspace { inner: self.inner.workspace.clone() }
    }

    #[getter]
    fn starts(&self) -> Vec<Xy> {
        pts(&self.inner.starts)
    }

    #[getter]
    fn goals(&self) -> Vec<Xy> {
        pts(&self.inner.goals)
    }

    #[getter]
    fn robot_radius(&self) -> f64 {
        self.inner.limits.robot_radius
    }

    fn __len__(&self) -> usize {
        self.inner.num_robots()
    }

    fn __repr__(&self) -> String {
        format!("Scenario(robots={})", self.inner.num_robots())
    }
}

/// Convex regions covering the free space.
#[pyclass(module = "dgd", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct Partition {
    inner: ConvexPartition,
}

#[pymethods]
impl Partition {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Partition { inner: serde_json::from_str(text).map_err(value_err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        json(&self.inner)
    }

    /// Vertex lists, counter-clockwise.
    #[getter]
    fn regions(&self) -> Vec<Vec<Xy>> {
        self.inner.regions.iter().map(|r| pts(r.vertices())).collect()
    }

    #[getter]
    fn adjacency(&self) -> Vec<Vec<usize>> {
        self.inner.adjacency.clone()
    }

    #[getter]
    fn area(&self) -> f64 {
        self.inner.area()
    }

    /// Index of a region containing `p`.
    fn locate(&self, p: Xy) -> Option<usize> {
        self.inner.locate(Point::new(p.0, p.1))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Partition(regions={})", self.inner.len())
    }
}

/// Score network with its noise schedule.
#[pyclass(module = "dgd", frozen, skip_from_py_object)]
pub struct Model {
    inner: ScoreModel,
}

#[pymethods]
impl Model {
    /// Trains on synthetic trajectories inside `partition`.
    #[staticmethod]
    #[pyo3(signature = (partition, samples=5000, epochs=40, seed=0, robot_radius=0.04))]
    fn train(
        py: Python<'_>,
        partition: &Partition,
        samples: usize,
        epochs: usize,
        seed: u64,
        robot_radius: f64,
    ) -> PyResult<Self> {
        let limits = KinodynamicLimits::for_grid(0.25, 5, robot_radius);
        let part = partition.inner.clone();
        let model = py.detach(move || {
            let set = diffusion::make_training_set(&part, samples, seed, &limits);
            diffusion::train_score(&set, &TrainConfig { epochs, seed, ..TrainConfig::default() })
        });
        Ok(Model { inner: model.map_err(value_err)?.0 })
    }

    /// The model used by the benchmarks when none is given.
    #[staticmethod]
    #[pyo3(signature = (seed=0, epochs=40, samples=5000))]
    fn train_default(py: Python<'_>, seed: u64, epochs: usize, samples: usize) -> PyResult<Self> {
        let model = py.detach(move || harness::train_default_model(seed, epochs, samples));
        Ok(Model { inner: model.map_err(value_err)?.0 })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Model { inner: ScoreModel::load(&path).map_err(value_err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(value_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Model { inner: ScoreModel::from_json(text).map_err(value_err)? })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }
}

/// Outcome of one end-to-end planning run.
#[pyclass(module = "dgd", frozen, skip_from_py_object)]
pub struct PlanResult {
    scenario: harness::Scenario,
    inner: RunResult,
}

#[pymethods]
impl PlanResult {
    #[getter]
    fn success(&self) -> bool {
        self.inner.success
    }

    #[getter]
    fn wall_time(&self) -> f64 {
        self.inner.wall_time
    }

    /// Failing stage name, if any.
    #[getter]
    fn stage(&self) -> Option<String> {
        self.inner.failure.as_ref().map(|f| format!("{:?}", f.stage).to_lowercase())
    }

    #[getter]
    fn message(&self) -> Option<String> {
        self.inner.failure.as_ref().map(|f| f.message.clone())
    }

    #[getter]
    fn path_ratio(&self) -> Option<f64> {
        self.inner.mean_path_ratio
    }

    #[getter]
    fn acceleration(&self) -> Option<f64> {
        self.inner.mean_acceleration
    }

    /// One waypoint list per robot, sampled every `dt`.
    #[getter]
    fn trajectories(&self) -> Option<Vec<Vec<Xy>>> {
        self.inner.trajectories.as_ref().map(|s| s.trajectories.iter().map(|t| pts(&t.points)).collect())
    }

    #[getter]
    fn dt(&self) -> Option<f64> {
        self.inner.trajectories.as_ref().map(|s| s.dt)
    }

    #[getter]
    fn partition(&self) -> Option<Partition> {
        self.inner.partition.clone().map(|inner| Partition { inner })
    }

    /// Trajectory file text.
    fn to_json(&self) -> PyResult<Option<String>> {
        self.inner.trajectories.as_ref().map(|s| json(&TrajectoryFile::from_set(s))).transpose()
    }

    /// Full run record, subproblems included.
    fn debug_json(&self) -> PyResult<String> {
        json(&self.inner)
    }

    fn svg(&self) -> Option<String> {
        let set = self.inner.trajectories.as_ref()?;
        Some(harness::svg_document(&self.scenario, set, self.inner.partition.as_ref()))
    }

    fn __repr__(&self) -> String {
        match &self.inner.failure {
            None => format!("PlanResult(success=True, wall_time={:.3})", self.inner.wall_time),
            Some(f) => format!("PlanResult(success=False, stage={:?})", f.stage),
        }
    }
}

/// Convex decomposition of `workspace`, ranked by `traffic` paths when given.
#[pyfunction]
#[pyo3(signature = (workspace, traffic=None))]
fn decompose(workspace: &Workspace, traffic: Option<Vec<Vec<Xy>>>) -> PyResult<Partition> {
    let traffic: Option<Vec<Vec<Point>>> = traffic.map(|t| t.iter().map(|p| from_xy(p)).collect());
    let inner = decomposition::pbd(&workspace.inner, traffic.as_deref()).map_err(value_err)?;
    Ok(Partition { inner })
}

/// Grid paths of the discrete plan as `(ix, iy)` cells, one list per robot.
#[pyfunction]
#[pyo3(signature = (scenario, cell_size=0.25))]
fn plan_discrete(scenario: &Scenario, cell_size: f64) -> PyResult<Vec<Vec<(i32, i32)>>> {
    let cfg = PipelineConfig { cell_size, ..PipelineConfig::default() };
    let (_, plan) = harness::plan_discrete(&scenario.inner, &cfg).map_err(|f| PyRuntimeError::new_err(f.message))?;
    Ok(plan.paths.iter().map(|p| p.iter().map(|c| (c.ix, c.iy)).collect()).collect())
}

/// Runs the full planner. Failures are reported on the result, not raised.
#[pyfunction]
#[pyo3(signature = (scenario, model, warm_start=true))]
fn plan(py: Python<'_>, scenario: &Scenario, model: &Model, warm_start: bool) -> PlanResult {
    let mut cfg = PipelineConfig::default();
    cfg.sampler.warm_start = warm_start;
    let sc = &scenario.inner;
    let res = py.detach(|| harness::with_workers(harness::worker_count(), || harness::run_pipeline(sc, &model.inner, &cfg)));
    PlanResult { scenario: sc.clone(), inner: res }
}

/// Path length over straight-line distance.
#[pyfunction]
fn path_ratio(points: Vec<Xy>, start: Xy, goal: Xy) -> PyResult<f64> {
    harness::metric_path_ratio(&from_xy(&points), Point::new(start.0, start.1), Point::new(goal.0, goal.1))
        .map_err(value_err)
}

/// Mean second-difference magnitude divided by `dt` squared.
#[pyfunction]
fn acceleration(points: Vec<Xy>, dt: f64) -> PyResult<f64> {
    harness::metric_acceleration(&from_xy(&points), dt).map_err(value_err)
}

#[pymodule]
mod dgd {
    #[pymodule_export]
    use super::{
        acceleration, decompose, path_ratio, plan, plan_discrete, Model, Partition, PlanResult, Scenario, Workspace,
    };
}
