//! Grid multi-agent path finding: prioritized planning with random restarts
//! and conflict-based search as a fallback for small teams.

mod grid;
mod solver;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use grid::{build_grid, GridGraph};
pub use solver::{solve_mapf, MapfConfig};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MapfError {
    #[error("no free grid cells")]
    NoFreeCells,
    #[error("unsolvable: {0}")]
    Unsolvable(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("unknown vertex {0:?}")]
    UnknownVertex(Cell),
}

/// Integer grid cell; serialized as `[ix, iy]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[i32; 2]", into = "[i32; 2]")]
pub struct Cell {
    pub ix: i32,
    pub iy: i32,
}

impl Cell {
    pub fn new(ix: i32, iy: i32) -> Self {
        Self { ix, iy }
    }
}

impl From<[i32; 2]> for Cell {
    fn from(a: [i32; 2]) -> Self {
        Cell { ix: a[0], iy: a[1] }
    }
}

impl From<Cell> for [i32; 2] {
    fn from(c: Cell) -> Self {
        [c.ix, c.iy]
    }
}

/// Synchronized per-robot cell sequences, all of length `makespan + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "PlanDoc", try_from = "PlanDoc")]
pub struct DiscretePlan {
    pub cell_size: f64,
    pub paths: Vec<Vec<Cell>>,
}

#[derive(Serialize, Deserialize)]
struct PlanDoc {
    cell_size: f64,
    paths: BTreeMap<String, Vec<Cell>>,
}

impl From<DiscretePlan> for PlanDoc {
    fn from(p: DiscretePlan) -> Self {
        PlanDoc {
            cell_size: p.cell_size,
            paths: p.paths.into_iter().enumerate().map(|(i, v)| (i.to_string(), v)).collect(),
        }
    }
}

impl TryFrom<PlanDoc> for DiscretePlan {
    type Error = String;

    fn try_from(d: PlanDoc) -> Result<Self, String> {
        let mut keyed: Vec<(usize, Vec<Cell>)> = d
            .paths
            .into_iter()
            .map(|(k, v)| k.parse::<usize>().map(|i| (i, v)).map_err(|_| format!("bad robot id {k:?}")))
            .collect::<Result<_, _>>()?;
        keyed.sort_by_key(|(i, _)| *i);
        if keyed.iter().enumerate().any(|(n, (i, _))| n != *i) {
            return Err("robot ids must be 0..n".into());
        }
        if keyed.iter().any(|(_, v)| v.is_empty()) {
            return Err("empty path".into());
        }
        Ok(DiscretePlan { cell_size: d.cell_size, paths: keyed.into_iter().map(|(_, v)| v).collect() })
    }
}

impl DiscretePlan {
    pub fn num_robots(&self) -> usize {
        self.paths.len()
    }

    pub fn makespan(&self) -> usize {
        self.paths.iter().map(|p| p.len().saturating_sub(1)).max().unwrap_or(0)
    }

    /// Cell of robot `i` at step `t`, holding the last cell after the path ends.
    pub fn at(&self, i: usize, t: usize) -> Cell {
        let p = &self.paths[i];
        p[t.min(p.len() - 1)]
    }

    pub fn starts(&self) -> Vec<Cell> {
        self.paths.iter().map(|p| p[0]).collect()
    }

    pub fn goals(&self) -> Vec<Cell> {
        self.paths.iter().map(|p| *p.last().unwrap()).collect()
    }

    /// Pads every path with goal waits to the common makespan.
    pub fn padded(mut self) -> Self {
        let m = self.makespan();
        for p in &mut self.paths {
            let last = *p.last().unwrap();
            p.resize(m + 1, last);
        }
        self
    }

    /// Arrival time of one robot: first step after which it never leaves its goal.
    pub fn arrival(&self, i: usize) -> usize {
        let p = &self.paths[i];
        let g = *p.last().unwrap();
        p.iter().rposition(|&c| c != g).map_or(0, |k| k + 1)
    }

    pub fn sum_of_costs(&self) -> usize {
        (0..self.paths.len()).map(|i| self.arrival(i)).sum()
    }

    /// Vertex sequences on `graph`.
    pub fn vertex_paths(&self, graph: &GridGraph) -> Result<Vec<Vec<usize>>, MapfError> {
        self.paths
            .iter()
            .map(|p| p.iter().map(|&c| graph.vertex(c).ok_or(MapfError::UnknownVertex(c))).collect())
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConflictKind {
    Vertex,
    Edge,
    /// A robot moved between cells that are not orthogonal neighbours.
    Jump,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conflict {
    pub kind: ConflictKind,
    pub robots: (usize, usize),
    pub t: usize,
}

/// All vertex, edge and jump conflicts, ordered by time then robots.
///
/// Shorter paths are treated as waiting at their last cell.
pub fn validate_plan(plan: &DiscretePlan) -> Vec<Conflict> {
    let n = plan.num_robots();
    let m = plan.makespan();
    let mut out = Vec::new();
    for t in 0..=m {
        for i in 0..n {
            if t < m {
                let (a, b) = (plan.at(i, t), plan.at(i, t + 1));
                if (a.ix - b.ix).abs() + (a.iy - b.iy).abs() > 1 {
                    out.push(Conflict { kind: ConflictKind::Jump, robots: (i, i), t });
                }
            }
            for j in i + 1..n {
                if plan.at(i, t) == plan.at(j, t) {
                    out.push(Conflict { kind: ConflictKind::Vertex, robots: (i, j), t });
                }
                if t < m
                    && plan.at(i, t) != plan.at(i, t + 1)
                    && plan.at(i, t) == plan.at(j, t + 1)
                    && plan.at(i, t + 1) == plan.at(j, t)
                {
                    out.push(Conflict { kind: ConflictKind::Edge, robots: (i, j), t });
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Aabb, Obstacle, Point, Polygon, Workspace};

    fn c(ix: i32, iy: i32) -> Cell {
        Cell::new(ix, iy)
    }

    fn bounds2() -> Aabb {
        Aabb::new(Point::new(-1.0, -1.0), Point::new(1.0, 1.0))
    }

    #[test]
    fn empty_grid_counts() {
        let g = build_grid(&Workspace::empty(bounds2()), 0.25, 0.04).unwrap();
        assert_eq!(g.num_vertices(), 64);
        assert_eq!(g.num_edges(), 112);
        assert_eq!(g.embed(g.vertex(c(0, 0)).unwrap()), Point::new(-0.875, -0.875));
    }

    #[test]
    fn covered_grid_has_no_cells() {
        let ws = Workspace::new(
            bounds2(),
            vec![Obstacle::polygon(Polygon::rectangle(Point::new(-2.0, -2.0), Point::new(2.0, 2.0)))],
        );
        assert_eq!(build_grid(&ws, 0.25, 0.04).unwrap_err(), MapfError::NoFreeCells);
    }

    #[test]
    fn wall_gives_two_components() {
        let ws = Workspace::new(
            bounds2(),
            vec![Obstacle::polygon(Polygon::rectangle(Point::new(-0.05, -1.0), Point::new(0.05, 1.0)))],
        );
        let g = build_grid(&ws, 0.25, 0.04).unwrap();
        let mut labels = g.components();
        labels.sort_unstable();
        labels.dedup();
        assert_eq!(labels.len(), 2);
    }

    #[test]
    fn snap_round_trip() {
        let g = build_grid(&Workspace::empty(bounds2()), 0.25, 0.04).unwrap();
        for v in 0..g.num_vertices() {
            assert_eq!(g.snap(g.embed(v)), v);
        }
        let p = g.embed(5);
        let vs = g.snap_distinct(&[p, p]).unwrap();
        assert_eq!(vs[0], 5);
        assert_ne!(vs[1], 5);
        assert!((g.embed(vs[1]).dist(p) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn validate_examples() {
        let plan = DiscretePlan {
            cell_size: 1.0,
            paths: vec![
                vec![c(0, 0), c(1, 0), c(2, 0), c(3, 0)],
                vec![c(5, 0), c(4, 0), c(4, 0), c(3, 0)],
            ],
        };
        assert_eq!(validate_plan(&plan), vec![Conflict { kind: ConflictKind::Vertex, robots: (0, 1), t: 3 }]);
        let clean_swap = DiscretePlan {
            cell_size: 1.0,
            paths: vec![vec![c(0, 0), c(0, 0), c(1, 0), c(2, 0)], vec![c(4, 0), c(3, 0), c(2, 0), c(1, 0)]],
        };
        assert_eq!(validate_plan(&clean_swap), vec![Conflict { kind: ConflictKind::Edge, robots: (0, 1), t: 2 }]);
    }

    #[test]
    fn plan_json_round_trip() {
        let plan = DiscretePlan { cell_size: 0.25, paths: vec![vec![c(0, 0), c(1, 0)], vec![c(2, 2), c(2, 2)]] };
        let s = serde_json::to_string(&plan).unwrap();
        assert_eq!(s, r#"{"cell_size":0.25,"paths":{"0":[[0,0],[1,0]],"1":[[2,2],[2,2]]}}"#);
        let back: DiscretePlan = serde_json::from_str(&s).unwrap();
        assert_eq!(back, plan);
    }

    #[test]
    fn costs() {
        let plan = DiscretePlan {
            cell_size: 1.0,
            paths: vec![vec![c(0, 0), c(1, 0), c(1, 0)], vec![c(2, 0), c(2, 0), c(2, 0)], vec![c(5, 5), c(5, 6), c(5, 5)]],
        };
        assert_eq!(plan.arrival(0), 1);
        assert_eq!(plan.arrival(1), 0);
        assert_eq!(plan.arrival(2), 2);
        assert_eq!(plan.sum_of_costs(), 3);
    }
}
