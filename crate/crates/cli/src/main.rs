use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;

use dgd_core::assignment::KinodynamicLimits;
use dgd_core::decomposition::{pbd, ConvexPartition};
use dgd_core::diffusion::{make_training_set, train_score, ScoreModel, TrainConfig};
use dgd_core::geometry::{Point, Workspace};
use dgd_core::harness::{
    aggregate, bench, format_csv, format_table, format_timing_csv, gen_map, place_robots, plan_discrete, render_svg,
    run_pipeline, train_default_model, with_workers, worker_count, write_json, BenchSuite, MapKind, PipelineConfig,
    ScenarioFile, TrajectoryFile,
};
use dgd_core::mapf::{build_grid, DiscretePlan};

/// Multi-robot motion planning with discrete-guided diffusion.
#[derive(Parser)]
#[command(name = "dgd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convex decomposition of the free configuration space.
    Decompose {
        #[arg(long)]
        map: PathBuf,
        /// Discrete plan whose traffic ranks the merges.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long, default_value_t = 0.04)]
        robot_radius: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Discrete plan on the grid abstraction.
    Mapf {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 0.25)]
        cell_size: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trains a score model on synthetic trajectories inside a partition.
    Train {
        #[arg(long)]
        partition: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 40)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5000)]
        samples: usize,
        #[arg(long, default_value_t = 0.04)]
        robot_radius: f64,
    },
    /// Plans trajectories for one scenario.
    Plan {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Start the reverse diffusion from noise instead of the discrete plan.
        #[arg(long)]
        no_warm_start: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Writes the full run record, subproblems included.
        #[arg(long)]
        debug_dump: Option<PathBuf>,
    },
    /// Runs a benchmark suite and writes the results table.
    Bench {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the suite's model; without either a model is trained.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Writes a generated map and a random scenario on it.
    Generate {
        #[arg(long)]
        kind: MapKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 6)]
        robots: usize,
        #[arg(long)]
        robot_radius: Option<f64>,
        #[arg(long)]
        map_out: PathBuf,
        #[arg(long)]
        scenario_out: PathBuf,
    },
}

enum CliError {
    /// Unreadable or inconsistent input.
    Invalid(String),
    /// Valid input on which planning failed.
    Failed(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 2,
            CliError::Invalid(_) => 3,
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn write_out<T: serde::Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    write_json(value, path).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<ScoreModel, CliError> {
    ScoreModel::load(path).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn decompose(map: &Path, plan: Option<&Path>, r: f64, out: &Path) -> Result<(), CliError> {
    let ws: Workspace = read_json(map)?;
    let traffic = match plan {
        Some(p) => {
            let plan: DiscretePlan = read_json(p)?;
            let grid = build_grid(&ws, plan.cell_size, r).map_err(invalid)?;
            let paths: Vec<Vec<Point>> =
                plan.paths.iter().map(|cells| cells.iter().map(|&c| grid.center(c)).collect()).collect();
            Some(paths)
        }
        None => None,
    };
    let part = pbd(&ws.inflate(r), traffic.as_deref()).map_err(|e| CliError::Failed(e.to_string()))?;
    eprintln!("{} regions from {} triangles", part.len(), part.triangle_count);
    write_out(&part, out)
}

fn mapf(map: &Path, scenario: &Path, cell_size: f64, out: &Path) -> Result<(), CliError> {
    let ws: Workspace = read_json(map)?;
    let sc = read_json::<ScenarioFile>(scenario)?.into_scenario(ws).map_err(invalid)?;
    let cfg = PipelineConfig { cell_size, ..PipelineConfig::default() };
    let (_, plan) = plan_discrete(&sc, &cfg).map_err(|f| CliError::Failed(f.message))?;
    eprintln!("makespan {}, sum of costs {}", plan.makespan(), plan.sum_of_costs());
    write_out(&plan, out)
}

fn train(partition: &Path, out: &Path, epochs: usize, seed: u64, samples: usize, r: f64) -> Result<(), CliError> {
    let part: ConvexPartition = read_json(partition)?;
    let limits = KinodynamicLimits::for_grid(0.25, 5, r);
    let set = make_training_set(&part, samples, seed, &limits);
    let (model, report) = train_score(&set, &TrainConfig { epochs, seed, ..TrainConfig::default() }).map_err(invalid)?;
    eprintln!("loss {:.4} -> {:.4}", report.initial_train_loss, report.final_train_loss());
    model.save(out).map_err(|e| invalid(format!("{}: {e}", out.display())))
}

struct PlanArgs<'a> {
    map: &'a Path,
    scenario: &'a Path,
    model: &'a Path,
    warm: bool,
    out: &'a Path,
    svg: Option<&'a Path>,
    debug_dump: Option<&'a Path>,
}

fn plan(a: PlanArgs) -> Result<(), CliError> {
    let ws: Workspace = read_json(a.map)?;
    let sc = read_json::<ScenarioFile>(a.scenario)?.into_scenario(ws).map_err(invalid)?;
    let model = load_model(a.model)?;
    let mut cfg = PipelineConfig::default();
    cfg.sampler.warm_start = a.warm;
    let res = with_workers(worker_count(), || run_pipeline(&sc, &model, &cfg));
    if let Some(p) = a.debug_dump {
        write_out(&res, p)?;
    }
    if let Some(f) = &res.failure {
        return Err(CliError::Failed(format!("{:?} stage: {}", f.stage, f.message)));
    }
    let set = res.trajectories.as_ref().ok_or_else(|| CliError::Failed("no trajectories".into()))?;
    write_out(&TrajectoryFile::from_set(set), a.out)?;
    if let Some(p) = a.svg {
        render_svg(&sc, set, res.partition.as_ref(), p).map_err(invalid)?;
    }
    eprintln!(
        "ok: {} robots, {} steps, P {:.3}, A {:.3}, {:.2} s",
        sc.num_robots(),
        set.trajectories.iter().map(|t| t.points.len()).max().unwrap_or(0),
        res.mean_path_ratio.unwrap_or(f64::NAN),
        res.mean_acceleration.unwrap_or(f64::NAN),
        res.wall_time
    );
    Ok(())
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map_or_else(|| "results".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}{suffix}"))
}

fn run_bench(suite_path: &Path, out: &Path, model: Option<&Path>) -> Result<(), CliError> {
    let suite: BenchSuite = read_json(suite_path)?;
    if suite.maps.is_empty() || suite.robots.is_empty() || suite.instances == 0 {
        return Err(invalid("suite needs at least one map, robot count and instance"));
    }
    let from_suite = suite.model.as_ref().map(|m| suite_path.parent().unwrap_or(Path::new(".")).join(m));
    let workers = worker_count();
    let (records, rows) = with_workers(workers, || -> Result<_, CliError> {
        let model = match model.map(Path::to_path_buf).or(from_suite) {
            Some(p) => load_model(&p)?,
            None => train_default_model(suite.seed, 40, 5000).map_err(invalid)?.0,
        };
        let records = bench(&suite, &model);
        let rows = aggregate(&records);
        Ok((records, rows))
    })?;
    std::fs::write(out, format_csv(&rows)).map_err(|e| invalid(format!("{}: {e}", out.display())))?;
    let timing = sibling(out, "_timing.csv");
    std::fs::write(&timing, format_timing_csv(&rows)).map_err(|e| invalid(format!("{}: {e}", timing.display())))?;
    write_out(&records, &sibling(out, "_runs.json"))?;
    print!("{}", format_table(&rows));
    Ok(())
}

fn generate(
    kind: MapKind,
    seed: u64,
    robots: usize,
    r: Option<f64>,
    map_out: &Path,
    scenario_out: &Path,
) -> Result<(), CliError> {
    let ws = gen_map(kind, seed);
    let sc = place_robots(&ws, robots, r.unwrap_or(kind.default_robot_radius()), seed).map_err(invalid)?;
    write_out(&ws, map_out)?;
    write_out(&ScenarioFile::from_scenario(&sc), scenario_out)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Decompose { map, plan, robot_radius, out } => decompose(&map, plan.as_deref(), robot_radius, &out),
        Command::Mapf { map, scenario, cell_size, out } => mapf(&map, &scenario, cell_size, &out),
        Command::Train { partition, out, epochs, seed, samples, robot_radius } => {
            train(&partition, &out, epochs, seed, samples, robot_radius)
        }
        Command::Plan { map, scenario, model, no_warm_start, out, svg, debug_dump } => plan(PlanArgs {
            map: &map,
            scenario: &scenario,
            model: &model,
            warm: !no_warm_start,
            out: &out,
            svg: svg.as_deref(),
            debug_dump: debug_dump.as_deref(),
        }),
        Command::Bench { suite, out, model } => run_bench(&suite, &out, model.as_deref()),
        Command::Generate { kind, seed, robots, robot_radius, map_out, scenario_out } => {
            generate(kind, seed, robots, robot_radius, &map_out, &scenario_out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Invalid(m) => eprintln!("invalid input: {m}"),
                CliError::Failed(m) => eprintln!("failed: {m}"),
            }
            ExitCode::from(e.code())
        }
    }
}
