use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::ScoreModel;

use super::{gen_map, place_robots, run_pipeline, split_seed, MapKind, PipelineConfig, Stage};

/// Benchmark sweep over map kinds and robot counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchSuite {
    pub maps: Vec<MapKind>,
    pub robots: Vec<usize>,
    pub instances: usize,
    #[serde(default)]
    pub seed: u64,
    /// Overrides the per-map default radius.
    #[serde(default)]
    pub robot_radius: Option<f64>,
    /// Model checkpoint path, relative to the suite file.
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub pipeline: PipelineConfig,
}

/// Outcome of one benchmark instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub map: MapKind,
    pub robots: usize,
    pub instance: usize,
    pub seed: u64,
    pub success: bool,
    pub wall_time: f64,
    pub path_ratio: Option<f64>,
    pub acceleration: Option<f64>,
    pub stage: Option<Stage>,
}

/// Aggregate over the instances of one (map, robot count) pair. Means are
/// taken over successful runs only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub map: MapKind,
    pub robots: usize,
    pub runs: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_time: Option<f64>,
    pub mean_path_ratio: Option<f64>,
    pub mean_acceleration: Option<f64>,
}

/// Runs every instance of the suite on the current thread pool.
pub fn bench(suite: &BenchSuite, model: &ScoreModel) -> Vec<RunRecord> {
    let jobs: Vec<(MapKind, usize, usize)> = suite
        .maps
        .iter()
        .flat_map(|&m| suite.robots.iter().flat_map(move |&n| (0..suite.instances).map(move |i| (m, n, i))))
        .collect();
    jobs.par_iter()
        .map(|&(map, robots, instance)| {
            let map_seed = split_seed(suite.seed, instance as u64);
            let seed = split_seed(map_seed, robots as u64);
            let ws = gen_map(map, map_seed);
            let r = suite.robot_radius.unwrap_or(map.default_robot_radius());
            let base = RunRecord {
                map,
                robots,
                instance,
                seed,
                success: false,
                wall_time: 0.0,
                path_ratio: None,
                acceleration: None,
                stage: Some(Stage::Input),
            };
            let scenario = match place_robots(&ws, robots, r, seed) {
                Ok(s) => s,
                Err(_) => return base,
            };
            let res = run_pipeline(&scenario, model, &suite.pipeline);
            RunRecord {
                success: res.success,
                wall_time: res.wall_time,
                path_ratio: res.mean_path_ratio,
                acceleration: res.mean_acceleration,
                stage: res.failure.map(|f| f.stage),
                ..base
            }
        })
        .collect()
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Groups run records by (map, robots), sorted by map then robot count.
pub fn aggregate(records: &[RunRecord]) -> Vec<BenchRow> {
    let mut groups: BTreeMap<(MapKind, usize), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.map, r.robots)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((map, robots), mut rs)| {
            rs.sort_by_key(|r| r.instance);
            let ok: Vec<&&RunRecord> = rs.iter().filter(|r| r.success).collect();
            BenchRow {
                map,
                robots,
                runs: rs.len(),
                successes: ok.len(),
                success_rate: 100.0 * ok.len() as f64 / rs.len() as f64,
                mean_time: mean(ok.iter().map(|r| r.wall_time)),
                mean_path_ratio: mean(ok.iter().filter_map(|r| r.path_ratio)),
                mean_acceleration: mean(ok.iter().filter_map(|r| r.acceleration)),
            }
        })
        .collect()
}

fn cell(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "N/A".to_string(), |x| format!("{x:.digits$}"))
}

/// Deterministic results: success rate, path ratio and acceleration.
pub fn format_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("map,robots,instances,S,P,A\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{:.9},{},{}",
            r.map,
            r.robots,
            r.runs,
            r.success_rate,
            cell(r.mean_path_ratio, 9),
            cell(r.mean_acceleration, 9)
        );
    }
    s
}

/// Mean wall time over successful runs; varies between machines and runs.
pub fn format_timing_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("map,robots,successes,T\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.map, r.robots, r.successes, cell(r.mean_time, 9));
    }
    s
}

pub fn format_table(rows: &[BenchRow]) -> String {
    let mut s = format!("{:<6} {:>4} {:>7} {:>9} {:>7} {:>8}\n", "map", "N", "S(%)", "T(s)", "P", "A");
    for r in rows {
        let _ = writeln!(
            s,
            "{:<6} {:>4} {:>7.1} {:>9} {:>7} {:>8}",
            r.map.to_string(),
            r.robots,
            r.success_rate,
            cell(r.mean_time, 2),
            cell(r.mean_path_ratio, 3),
            cell(r.mean_acceleration, 3)
        );
    }
    s
}
