use std::collections::{HashMap, VecDeque};

use super::{Cell, MapfError};
use crate::geometry::{segment_enters_convex, Point, Polygon, Workspace};

/// Grazing tolerance for grid edges against inflated obstacles.
const EDGE_TOL: f64 = 1e-12;

/// Four-connected grid over the workspace bounds.
///
/// A cell is a vertex when its center is a valid robot position (clearance
/// at least the robot radius); two orthogonal neighbours are joined when the
/// segment between their centers keeps that clearance.
#[derive(Clone, Debug)]
pub struct GridGraph {
    pub cell_size: f64,
    pub origin: Point,
    pub nx: i32,
    pub ny: i32,
    pub robot_radius: f64,
    cells: Vec<Cell>,
    index: HashMap<Cell, usize>,
    adj: Vec<Vec<usize>>,
}

pub fn build_grid(workspace: &Workspace, cell_size: f64, robot_radius: f64) -> Result<GridGraph, MapfError> {
    if !(cell_size > 0.0) || !(robot_radius >= 0.0) {
        return Err(MapfError::InvalidInstance(format!(
            "cell size {cell_size} and robot radius {robot_radius} must be positive"
        )));
    }
    let b = workspace.bounds;
    let nx = ((b.width() / cell_size) - 1e-9).ceil().max(1.0) as i32;
    let ny = ((b.height() / cell_size) - 1e-9).ceil().max(1.0) as i32;
    let cspace = workspace.inflate(robot_radius);
    let blockers: Vec<Polygon> = cspace.obstacle_polygons();

    let center = |c: Cell| Point::new(b.min.x + (c.ix as f64 + 0.5) * cell_size, b.min.y + (c.iy as f64 + 0.5) * cell_size);
    let free = |p: Point| {
        cspace.bounds.inner_clearance(p) >= 0.0 && blockers.iter().all(|o| o.signed_distance(p) >= 0.0)
    };

    let mut cells = Vec::new();
    let mut index = HashMap::new();
    for iy in 0..ny {
        for ix in 0..nx {
            let c = Cell { ix, iy };
            if free(center(c)) {
                index.insert(c, cells.len());
                cells.push(c);
            }
        }
    }
    if cells.is_empty() {
        return Err(MapfError::NoFreeCells);
    }
    let mut adj = vec![Vec::new(); cells.len()];
    for (k, &c) in cells.iter().enumerate() {
        for d in [(1, 0), (0, 1)] {
            let n = Cell { ix: c.ix + d.0, iy: c.iy + d.1 };
            if let Some(&m) = index.get(&n) {
                let (p, q) = (center(c), center(n));
                if !blockers.iter().any(|o| segment_enters_convex(p, q, o, EDGE_TOL)) {
                    adj[k].push(m);
                    adj[m].push(k);
                }
            }
        }
    }
    for a in &mut adj {
        a.sort_unstable();
    }
    Ok(GridGraph { cell_size, origin: b.min, nx, ny, robot_radius, cells, index, adj })
}

impl GridGraph {
    pub fn num_vertices(&self) -> usize {
        self.cells.len()
    }

    pub fn num_edges(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn cell(&self, v: usize) -> Cell {
        self.cells[v]
    }

    pub fn vertex(&self, c: Cell) -> Option<usize> {
        self.index.get(&c).copied()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    /// Center of a grid cell (need not be a vertex).
    pub fn center(&self, c: Cell) -> Point {
        Point::new(
            self.origin.x + (c.ix as f64 + 0.5) * self.cell_size,
            self.origin.y + (c.iy as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn embed(&self, v: usize) -> Point {
        self.center(self.cells[v])
    }

    /// Vertices ordered by distance from `p`, ties by vertex index.
    pub fn by_distance(&self, p: Point) -> Vec<usize> {
        let mut vs: Vec<usize> = (0..self.cells.len()).collect();
        vs.sort_by(|&a, &b| self.embed(a).dist(p).total_cmp(&self.embed(b).dist(p)).then(a.cmp(&b)));
        vs
    }

    /// Nearest vertex to `p`.
    pub fn snap(&self, p: Point) -> usize {
        (0..self.cells.len())
            .min_by(|&a, &b| self.embed(a).dist(p).total_cmp(&self.embed(b).dist(p)).then(a.cmp(&b)))
            .expect("grid has vertices")
    }

    /// Snaps each point to its nearest vertex not already taken by an earlier point.
    pub fn snap_distinct(&self, points: &[Point]) -> Result<Vec<usize>, MapfError> {
        let mut taken = vec![false; self.cells.len()];
        let mut out = Vec::with_capacity(points.len());
        for &p in points {
            let v = self
                .by_distance(p)
                .into_iter()
                .find(|&v| !taken[v])
                .ok_or_else(|| MapfError::InvalidInstance("more robots than grid vertices".into()))?;
            taken[v] = true;
            out.push(v);
        }
        Ok(out)
    }

    /// Hop distances from `src` (`u32::MAX` when unreachable).
    pub fn bfs(&self, src: usize) -> Vec<u32> {
        let mut d = vec![u32::MAX; self.cells.len()];
        let mut q = VecDeque::from([src]);
        d[src] = 0;
        while let Some(u) = q.pop_front() {
            for &v in &self.adj[u] {
                if d[v] == u32::MAX {
                    d[v] = d[u] + 1;
                    q.push_back(v);
                }
            }
        }
        d
    }

    /// Connected-component label per vertex.
    pub fn components(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.cells.len()];
        let mut next = 0;
        for s in 0..self.cells.len() {
            if label[s] != usize::MAX {
                continue;
            }
            for (v, d) in self.bfs(s).into_iter().enumerate() {
                if d != u32::MAX {
                    label[v] = next;
                }
            }
            next += 1;
        }
        label
    }

    /// Grid built directly from a set of free cells, for synthetic instances.
    pub fn from_cells(cell_size: f64, origin: Point, free: &[Cell]) -> GridGraph {
        let mut cells: Vec<Cell> = free.to_vec();
        cells.sort_by_key(|c| (c.iy, c.ix));
        cells.dedup();
        let index: HashMap<Cell, usize> = cells.iter().enumerate().map(|(k, &c)| (c, k)).collect();
        let mut adj = vec![Vec::new(); cells.len()];
        for (k, &c) in cells.iter().enumerate() {
            for d in [(1, 0), (0, 1)] {
                if let Some(&m) = index.get(&Cell { ix: c.ix + d.0, iy: c.iy + d.1 }) {
                    adj[k].push(m);
                    adj[m].push(k);
                }
            }
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        let nx = cells.iter().map(|c| c.ix + 1).max().unwrap_or(0);
        let ny = cells.iter().map(|c| c.iy + 1).max().unwrap_or(0);
        GridGraph { cell_size, origin, nx, ny, robot_radius: 0.0, cells, index, adj }
    }
}
