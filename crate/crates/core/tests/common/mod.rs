#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, VecDeque};

use dgd_core::geometry::{Aabb, Obstacle, Point, Polygon, Workspace};
use dgd_core::mapf::Cell;
use rand::Rng;

/// Small grid instance described by its free cells.
#[derive(Clone, Debug)]
pub struct GridInstance {
    pub free: Vec<Cell>,
    pub starts: Vec<Cell>,
    pub goals: Vec<Cell>,
}

fn neighbours(free: &[Cell]) -> Vec<Vec<usize>> {
    let index: HashMap<Cell, usize> = free.iter().enumerate().map(|(k, &c)| (c, k)).collect();
    free.iter()
        .map(|c| {
            [(1, 0), (-1, 0), (0, 1), (0, -1)]
                .iter()
                .filter_map(|d| index.get(&Cell::new(c.ix + d.0, c.iy + d.1)).copied())
                .collect()
        })
        .collect()
}

fn bfs(adj: &[Vec<usize>], src: usize) -> Vec<u32> {
    let mut d = vec![u32::MAX; adj.len()];
    d[src] = 0;
    let mut q = VecDeque::from([src]);
    while let Some(u) = q.pop_front() {
        for &v in &adj[u] {
            if d[v] == u32::MAX {
                d[v] = d[u] + 1;
                q.push_back(v);
            }
        }
    }
    d
}

/// Minimum sum of arrival times over all conflict-free joint plans, found by
/// A* over joint states. An agent may declare itself finished while on its
/// goal; from then on it stays there and costs nothing. Every other agent
/// pays one per step. Vertex conflicts and swaps are forbidden.
///
/// `Err(())` when more than `cap` states are expanded; `Ok(None)` when the
/// instance has no solution.
pub fn joint_optimal_soc(inst: &GridInstance, cap: usize) -> Result<Option<usize>, ()> {
    let adj = neighbours(&inst.free);
    let index: HashMap<Cell, usize> = inst.free.iter().enumerate().map(|(k, &c)| (c, k)).collect();
    let n = inst.starts.len();
    assert!(n <= 4 && inst.free.len() <= 64);
    let starts: Vec<usize> = inst.starts.iter().map(|c| index[c]).collect();
    let goals: Vec<usize> = inst.goals.iter().map(|c| index[c]).collect();
    let dist: Vec<Vec<u32>> = goals.iter().map(|&g| bfs(&adj, g)).collect();
    if (0..n).any(|i| dist[i][starts[i]] == u32::MAX) {
        return Ok(None);
    }
    let all = (1u64 << n) - 1;
    let encode = |pos: &[usize], fin: u64| pos.iter().enumerate().fold(fin, |s, (i, &p)| s | (p as u64) << (4 + 6 * i));
    let decode = |s: u64| -> (Vec<usize>, u64) { ((0..n).map(|i| ((s >> (4 + 6 * i)) & 63) as usize).collect(), s & 15) };
    let h = |pos: &[usize], fin: u64| -> u64 {
        (0..n).filter(|i| fin >> i & 1 == 0).map(|i| dist[i][pos[i]] as u64).sum()
    };

    let s0 = encode(&starts, 0);
    let mut best: HashMap<u64, u64> = HashMap::from([(s0, 0)]);
    let mut open = BinaryHeap::from([Reverse((h(&starts, 0), 0u64, s0))]);
    let mut expanded = 0;
    while let Some(Reverse((_, g, s))) = open.pop() {
        if best.get(&s).is_some_and(|&b| b < g) {
            continue;
        }
        let (pos, fin) = decode(s);
        if fin == all {
            return Ok(Some(g as usize));
        }
        expanded += 1;
        if expanded > cap {
            return Err(());
        }
        let mut push = |pos: &[usize], fin: u64, g2: u64| {
            let s2 = encode(pos, fin);
            if best.get(&s2).is_none_or(|&b| g2 < b) {
                best.insert(s2, g2);
                open.push(Reverse((g2 + h(pos, fin), g2, s2)));
            }
        };
        // finishing is free
        let at_goal: Vec<usize> = (0..n).filter(|&i| fin >> i & 1 == 0 && pos[i] == goals[i]).collect();
        for i in &at_goal {
            push(&pos, fin | 1 << i, g);
        }
        // joint moves of the unfinished agents
        let movers: Vec<usize> = (0..n).filter(|&i| fin >> i & 1 == 0).collect();
        let options: Vec<Vec<usize>> =
            movers.iter().map(|&i| std::iter::once(pos[i]).chain(adj[pos[i]].iter().copied()).collect()).collect();
        let mut choice = vec![0usize; movers.len()];
        'outer: loop {
            let mut next = pos.clone();
            for (k, &i) in movers.iter().enumerate() {
                next[i] = options[k][choice[k]];
            }
            let ok = (0..n).all(|i| {
                (i + 1..n).all(|j| next[i] != next[j] && !(next[i] == pos[j] && next[j] == pos[i] && pos[i] != pos[j]))
            });
            if ok {
                push(&next, fin, g + movers.len() as u64);
            }
            for k in 0..movers.len() {
                choice[k] += 1;
                if choice[k] < options[k].len() {
                    continue 'outer;
                }
                choice[k] = 0;
            }
            break;
        }
    }
    Ok(None)
}

/// Random grid of at most `w x h` cells with a few blocked cells, and `n`
/// robots with distinct starts and goals in one connected component.
pub fn random_grid_instance<R: Rng>(rng: &mut R, max_side: i32, max_robots: usize) -> Option<GridInstance> {
    let w = rng.random_range(2..=max_side);
    let h = rng.random_range(2..=max_side);
    let free: Vec<Cell> =
        (0..h).flat_map(|y| (0..w).map(move |x| Cell::new(x, y))).filter(|_| rng.random_bool(0.82)).collect();
    let n = rng.random_range(1..=max_robots);
    if free.len() < n + 1 {
        return None;
    }
    let adj = neighbours(&free);
    let root = rng.random_range(0..free.len());
    let reach = bfs(&adj, root);
    let comp: Vec<Cell> = free.iter().zip(&reach).filter(|(_, &d)| d != u32::MAX).map(|(&c, _)| c).collect();
    if comp.len() < n + 1 {
        return None;
    }
    let pick = |rng: &mut R| {
        let mut c = comp.clone();
        for k in 0..n {
            let j = rng.random_range(k..c.len());
            c.swap(k, j);
        }
        c.truncate(n);
        c
    };
    let starts = pick(rng);
    let goals = pick(rng);
    Some(GridInstance { free, starts, goals })
}

/// Workspace in `[-1, 1]^2` with random convex polygons and disks whose
/// polygonal vertex total stays within `max_vertices`. Obstacles may overlap
/// each other and the boundary.
pub fn random_workspace<R: Rng>(rng: &mut R, max_vertices: usize) -> Workspace {
    let bounds = Aabb::new(Point::new(-1.0, -1.0), Point::new(1.0, 1.0));
    let mut obstacles = Vec::new();
    let mut used = 0;
    let target = rng.random_range(0..=max_vertices);
    while used < target {
        let c = Point::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let size = rng.random_range(0.04..0.3);
        if rng.random_bool(0.2) && used + 16 <= max_vertices {
            obstacles.push(Obstacle::disk(c, size));
            used += 16;
            continue;
        }
        let k = rng.random_range(3..=8usize).min(max_vertices - used);
        if k < 3 {
            break;
        }
        let mut angles: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        angles.sort_by(f64::total_cmp);
        let pts: Vec<Point> = angles.iter().map(|a| Point::new(c.x + size * a.cos(), c.y + size * a.sin())).collect();
        match Polygon::new(dgd_core::geometry::convex_hull(&pts)) {
            Ok(p) if p.area() > 1e-4 => {
                used += p.len();
                obstacles.push(Obstacle::polygon(p));
            }
            _ => used += k,
        }
    }
    Workspace::new(bounds, obstacles)
}
