use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assignment::KinodynamicLimits;
use crate::geometry::{Aabb, Obstacle, Point, Polygon, Workspace};

use super::{HarnessError, Scenario};

/// Benchmark map families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    Basic,
    Dense,
    Room,
    Shelf,
    Large,
}

impl MapKind {
    pub const ALL: [MapKind; 5] = [MapKind::Basic, MapKind::Dense, MapKind::Room, MapKind::Shelf, MapKind::Large];

    pub fn default_robot_radius(self) -> f64 {
        match self {
            MapKind::Large => 0.005,
            _ => 0.04,
        }
    }
}

impl fmt::Display for MapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MapKind::Basic => "basic",
            MapKind::Dense => "dense",
            MapKind::Room => "room",
            MapKind::Shelf => "shelf",
            MapKind::Large => "large",
        };
        f.write_str(s)
    }
}

impl FromStr for MapKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, HarnessError> {
        MapKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| HarnessError::InvalidInput(format!("unknown map kind {s:?}")))
    }
}

/// Minimum gap between randomly placed obstacles.
const GAP: f64 = 0.1;

fn gap_ok(placed: &[Aabb], b: &Aabb) -> bool {
    placed.iter().all(|o| !o.overlaps(&Aabb::new(b.min - Point::new(GAP, GAP), b.max + Point::new(GAP, GAP))))
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Obstacle {
    Obstacle::polygon(Polygon::rectangle(Point::new(x0, y0), Point::new(x1, y1)))
}

/// Scatters `count` squares with sides in `[0.05, 0.1]`, keeping `GAP`
/// between them and away from `keep_out`.
fn scatter_squares(rng: &mut ChaCha8Rng, bounds: Aabb, count: usize, keep_out: &[Aabb]) -> Vec<Obstacle> {
    let mut placed: Vec<Aabb> = keep_out.to_vec();
    let mut out = Vec::new();
    let mut attempts = 0;
    while out.len() < count && attempts < 100_000 {
        attempts += 1;
        let s = rng.random_range(0.05..=0.1);
        let c = Point::new(
            rng.random_range(bounds.min.x + s / 2.0..=bounds.max.x - s / 2.0),
            rng.random_range(bounds.min.y + s / 2.0..=bounds.max.y - s / 2.0),
        );
        let b = Aabb::new(c - Point::new(s / 2.0, s / 2.0), c + Point::new(s / 2.0, s / 2.0));
        if gap_ok(&placed, &b) {
            placed.push(b);
            out.push(rect(b.min.x, b.min.y, b.max.x, b.max.y));
        }
    }
    out
}

fn unit_bounds() -> Aabb {
    Aabb::new(Point::new(-1.0, -1.0), Point::new(1.0, 1.0))
}

/// Four rooms split by a cross of walls, one door per wall arm. Doors are
/// centered on grid rows so the default 0.25 grid passes through them.
fn room(rng: &mut ChaCha8Rng) -> Workspace {
    let (t, door) = (0.025, 0.15);
    let mut pick = || [0.375, 0.625][rng.random_range(0..2)];
    let (up, down, left, right) = (pick(), -pick(), -pick(), pick());
    let walls = vec![
        rect(-t, -1.0, t, down - door),
        rect(-t, down + door, t, up - door),
        rect(-t, up + door, t, 1.0),
        rect(-1.0, -t, left - door, t),
        rect(left + door, -t, -t, t),
        rect(t, -t, right - door, t),
        rect(right + door, -t, 1.0, t),
    ];
    let keep_out = [
        Aabb::new(Point::new(-t, -1.0), Point::new(t, 1.0)),
        Aabb::new(Point::new(-1.0, -t), Point::new(1.0, t)),
    ];
    let mut obstacles = walls;
    obstacles.extend(scatter_squares(rng, Aabb::new(Point::new(-0.9, -0.9), Point::new(0.9, 0.9)), 4, &keep_out));
    Workspace::new(unit_bounds(), obstacles)
}

/// Two rows of three shelves, each 0.15 wide, with jittered ends.
fn shelf(rng: &mut ChaCha8Rng) -> Workspace {
    let mut obstacles = Vec::new();
    for x in [-0.5, 0.0, 0.5] {
        for (lo, hi) in [(0.2, 0.8), (-0.8, -0.2)] {
            let y0 = lo + rng.random_range(0.0..0.05);
            let y1 = hi - rng.random_range(0.0..0.05);
            obstacles.push(rect(x - 0.075, y0, x + 0.075, y1));
        }
    }
    Workspace::new(unit_bounds(), obstacles)
}

/// 104 obstacles on a 4 x 4 map: squares, disks and short walls.
fn large(rng: &mut ChaCha8Rng) -> Workspace {
    let bounds = Aabb::new(Point::new(-2.0, -2.0), Point::new(2.0, 2.0));
    let mut placed: Vec<Aabb> = Vec::new();
    let mut obstacles = Vec::new();
    while obstacles.len() < 104 {
        let kind = obstacles.len() % 3;
        let (hw, hh) = match kind {
            0 => {
                let s = rng.random_range(0.05..=0.1) / 2.0;
                (s, s)
            }
            1 => {
                let r = rng.random_range(0.025..=0.05);
                (r, r)
            }
            _ => {
                let l = rng.random_range(0.1..=0.2);
                if rng.random_bool(0.5) {
                    (l, 0.025)
                } else {
                    (0.025, l)
                }
            }
        };
        let c = Point::new(
            rng.random_range(bounds.min.x + hw..=bounds.max.x - hw),
            rng.random_range(bounds.min.y + hh..=bounds.max.y - hh),
        );
        let b = Aabb::new(c - Point::new(hw, hh), c + Point::new(hw, hh));
        if !gap_ok(&placed, &b) {
            continue;
        }
        placed.push(b);
        obstacles.push(if kind == 1 { Obstacle::disk(c, hw) } else { rect(b.min.x, b.min.y, b.max.x, b.max.y) });
    }
    Workspace::new(bounds, obstacles)
}

/// Deterministic benchmark workspace of the given family.
pub fn gen_map(kind: MapKind, seed: u64) -> Workspace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((kind as u64 + 1) << 32));
    match kind {
        MapKind::Basic => Workspace::new(unit_bounds(), scatter_squares(&mut rng, unit_bounds(), 8, &[])),
        MapKind::Dense => Workspace::new(unit_bounds(), scatter_squares(&mut rng, unit_bounds(), 20, &[])),
        MapKind::Room => room(&mut rng),
        MapKind::Shelf => shelf(&mut rng),
        MapKind::Large => large(&mut rng),
    }
}

/// Attempts allowed when placing robots.
pub const PLACEMENT_ATTEMPTS: usize = 100_000;
/// Extra clearance kept between a placed robot and any obstacle.
const PLACEMENT_MARGIN: f64 = 0.02;
/// Minimum distance between a robot's start and goal.
const MIN_TRAVEL: f64 = 0.3;

/// Rejection-samples starts and goals with clearance, pairwise separation
/// `2r + 0.1` and start-goal distance at least 0.3.
pub fn place_robots(
    workspace: &Workspace,
    n_robots: usize,
    robot_radius: f64,
    seed: u64,
) -> Result<Scenario, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = workspace.bounds;
    let sep = 2.0 * robot_radius + 0.1;
    let mut attempts = 0;
    let mut draw = |taken: &[Point], avoid: Option<Point>, attempts: &mut usize| -> Option<Point> {
        while *attempts < PLACEMENT_ATTEMPTS {
            *attempts += 1;
            let p = Point::new(rng.random_range(b.min.x..=b.max.x), rng.random_range(b.min.y..=b.max.y));
            if workspace.clearance(p) >= robot_radius + PLACEMENT_MARGIN
                && taken.iter().all(|q| q.dist(p) >= sep)
                && avoid.is_none_or(|s| s.dist(p) >= MIN_TRAVEL)
            {
                return Some(p);
            }
        }
        None
    };
    let mut starts = Vec::with_capacity(n_robots);
    let mut goals = Vec::with_capacity(n_robots);
    for _ in 0..n_robots {
        let s = draw(&starts, None, &mut attempts)
            .ok_or(HarnessError::PlacementFailed { placed: starts.len(), attempts: PLACEMENT_ATTEMPTS })?;
        starts.push(s);
    }
    for i in 0..n_robots {
        let g = draw(&goals, Some(starts[i]), &mut attempts)
            .ok_or(HarnessError::PlacementFailed { placed: goals.len(), attempts: PLACEMENT_ATTEMPTS })?;
        goals.push(g);
    }
    Ok(Scenario {
        workspace: workspace.clone(),
        starts,
        goals,
        limits: KinodynamicLimits::for_grid(0.25, 5, robot_radius),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maps_are_deterministic_and_bounded() {
        for kind in MapKind::ALL {
            let a = gen_map(kind, 3);
            assert_eq!(a, gen_map(kind, 3), "{kind}");
            for o in &a.obstacles {
                let bb = o.bbox();
                assert!(bb.min.x >= a.bounds.min.x - 1e-12 && bb.max.x <= a.bounds.max.x + 1e-12);
                assert!(bb.min.y >= a.bounds.min.y - 1e-12 && bb.max.y <= a.bounds.max.y + 1e-12);
            }
        }
        assert_eq!(gen_map(MapKind::Basic, 0).obstacles.len(), 8);
        assert_eq!(gen_map(MapKind::Dense, 5).obstacles.len(), 20);
        assert_eq!(gen_map(MapKind::Large, 0).obstacles.len(), 104);
        assert_eq!("shelf".parse::<MapKind>().unwrap(), MapKind::Shelf);
        assert!("cave".parse::<MapKind>().is_err());
    }

    #[test]
    fn placement_respects_separation() {
        let ws = gen_map(MapKind::Basic, 1);
        let sc = place_robots(&ws, 6, 0.04, 4).unwrap();
        assert_eq!(sc, place_robots(&ws, 6, 0.04, 4).unwrap());
        for (i, (s, g)) in sc.starts.iter().zip(&sc.goals).enumerate() {
            assert!(ws.clearance(*s) >= 0.04 && ws.clearance(*g) >= 0.04);
            assert!(s.dist(*g) >= 0.3);
            for j in i + 1..6 {
                assert!(s.dist(sc.starts[j]) >= 0.18 && g.dist(sc.goals[j]) >= 0.18);
            }
        }
    }

    #[test]
    fn impossible_packing_fails() {
        let ws = Workspace::empty(Aabb::new(Point::new(0.0, 0.0), Point::new(0.5, 0.5)));
        assert!(matches!(place_robots(&ws, 40, 0.04, 0), Err(HarnessError::PlacementFailed { .. })));
    }
}
