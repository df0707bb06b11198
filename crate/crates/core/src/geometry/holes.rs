use super::freespace::{free_space, FreeSpace};
use super::{orient, GeometryError, Point, Polygon, Workspace, VERTEX_EPS};

/// Turns the free space of `workspace` into one weakly simple polygon.
///
/// Every hole is joined to the boundary by a doubled bridge edge from its
/// rightmost vertex to a mutually visible boundary vertex. Holes are
/// processed by decreasing x of their rightmost vertex, so a hole further
/// right is already part of the boundary when rays from the left hit it.
pub fn remove_holes(workspace: &Workspace) -> Result<Polygon, GeometryError> {
    let fs = free_space(workspace)?;
    bridge_holes(fs)
}

/// Joins the holes of one free-space component to its outer ring.
pub fn bridge_holes(fs: FreeSpace) -> Result<Polygon, GeometryError> {
    let FreeSpace { outer, mut holes } = fs;
    let mut ring = outer;
    let rightmost = |h: &Vec<Point>| -> usize {
        (0..h.len())
            .max_by(|&i, &j| h[i].x.total_cmp(&h[j].x).then(h[i].y.total_cmp(&h[j].y)))
            .unwrap_or(0)
    };
    holes.sort_by(|a, b| {
        let pa = a[rightmost(a)];
        let pb = b[rightmost(b)];
        pb.x.total_cmp(&pa.x).then(pb.y.total_cmp(&pa.y))
    });
    for hole in holes {
        let m = rightmost(&hole);
        let mp = hole[m];
        let idx = find_bridge(&ring, mp)
            .ok_or_else(|| GeometryError::TriangulationFailed("no visible bridge vertex for hole".into()))?;
        let bp = ring[idx];
        let mut spliced = Vec::with_capacity(ring.len() + hole.len() + 2);
        spliced.extend_from_slice(&ring[..=idx]);
        spliced.extend((0..hole.len()).map(|k| hole[(m + k) % hole.len()]));
        spliced.push(mp);
        spliced.push(bp);
        spliced.extend_from_slice(&ring[idx + 1..]);
        ring = spliced;
    }
    Polygon::new(ring)
}

fn point_in_triangle_inclusive(a: Point, b: Point, c: Point, p: Point) -> bool {
    let d1 = orient(a, b, p);
    let d2 = orient(b, c, p);
    let d3 = orient(c, a, p);
    let neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
    let pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
    !(neg && pos)
}

/// Whether the diagonal from ring vertex `i` towards `target` leaves `i`
/// into the polygon interior (CCW ring).
pub(crate) fn locally_inside(ring: &[Point], i: usize, target: Point) -> bool {
    let n = ring.len();
    let a = ring[i];
    let prev = ring[(i + n - 1) % n];
    let next = ring[(i + 1) % n];
    if orient(prev, a, next) > 0.0 {
        orient(a, next, target) >= 0.0 && orient(a, target, prev) >= 0.0
    } else {
        orient(a, prev, target) < 0.0 || orient(a, target, next) < 0.0
    }
}

/// Ring index of a boundary vertex visible from `mp` along the +x ray.
fn find_bridge(ring: &[Point], mp: Point) -> Option<usize> {
    let n = ring.len();
    let mut qx = f64::INFINITY;
    let mut cand: Option<Point> = None;
    for i in 0..n {
        let p = ring[i];
        let q = ring[(i + 1) % n];
        if p.dist(mp) <= VERTEX_EPS {
            return pick_copy(ring, p, mp);
        }
        // boundary edges crossing the ray with the interior on their left go upward
        if p.y <= mp.y && mp.y <= q.y && p.y != q.y {
            let x = p.x + (mp.y - p.y) * (q.x - p.x) / (q.y - p.y);
            if x >= mp.x && x < qx {
                qx = x;
                cand = Some(if mp.y == p.y {
                    p
                } else if mp.y == q.y {
                    q
                } else if p.x > q.x {
                    p
                } else {
                    q
                });
                if x == mp.x {
                    break;
                }
            }
        }
    }
    let mut best = cand?;
    let hit = Point::new(qx, mp.y);
    if best.y != mp.y || best.x != qx {
        // a reflex vertex inside (mp, hit, best) would block the view; take
        // the one making the smallest angle with the ray
        let mut tan_min = f64::INFINITY;
        let stop = best;
        for i in 0..n {
            let p = ring[i];
            if p.x >= mp.x && p.x <= stop.x && p.x != mp.x && point_in_triangle_inclusive(mp, hit, stop, p) {
                let tan = (mp.y - p.y).abs() / (p.x - mp.x);
                if locally_inside(ring, i, mp) && (tan < tan_min || (tan == tan_min && p.x < best.x)) {
                    best = p;
                    tan_min = tan;
                }
            }
        }
    }
    pick_copy(ring, best, mp)
}

/// Among ring vertices located at `at`, the first whose interior sector
/// contains the direction towards `towards`.
fn pick_copy(ring: &[Point], at: Point, towards: Point) -> Option<usize> {
    let copies: Vec<usize> = (0..ring.len()).filter(|&i| ring[i].dist(at) <= VERTEX_EPS).collect();
    copies
        .iter()
        .copied()
        .find(|&i| locally_inside(ring, i, towards))
        .or_else(|| copies.first().copied())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Aabb, Obstacle};

    fn bounds2() -> Aabb {
        Aabb::new(Point::new(-1.0, -1.0), Point::new(1.0, 1.0))
    }

    fn square(c: Point, h: f64) -> Obstacle {
        Obstacle::polygon(Polygon::rectangle(c - Point::new(h, h), c + Point::new(h, h)))
    }

    #[test]
    fn empty_workspace_is_bounds() {
        let p = remove_holes(&Workspace::empty(bounds2())).unwrap();
        assert_eq!(p.len(), 4);
        assert!((p.area() - 4.0).abs() < 1e-15);
    }

    #[test]
    fn single_hole_gets_one_bridge() {
        let ws = Workspace::new(bounds2(), vec![square(Point::ZERO, 0.1)]);
        let p = remove_holes(&ws).unwrap();
        assert_eq!(p.len(), 4 + 4 + 2);
        // shoelace over the bridged ring
        let shoelace: f64 = 0.5
            * p.edges().map(|(a, b)| a.x * b.y - b.x * a.y).sum::<f64>();
        assert!((shoelace - (4.0 - 0.04)).abs() < 1e-9);
        assert!(p.find_crossing().is_none());
    }

    #[test]
    fn covered_workspace_errors() {
        let ws = Workspace::new(bounds2(), vec![square(Point::ZERO, 3.0)]);
        assert!(matches!(
            remove_holes(&ws),
            Err(GeometryError::EmptyFreeSpace) | Err(GeometryError::DisconnectedFreeSpace(_))
        ));
    }

    #[test]
    fn aligned_holes_bridge_without_crossing() {
        // three holes on the same row: rays from the left ones hit the right ones
        let ws = Workspace::new(
            bounds2(),
            vec![
                square(Point::new(-0.5, 0.0), 0.1),
                square(Point::new(0.0, 0.0), 0.1),
                square(Point::new(0.5, 0.0), 0.1),
            ],
        );
        let p = remove_holes(&ws).unwrap();
        assert_eq!(p.len(), 4 + 3 * 6);
        assert!(p.find_crossing().is_none());
        assert!((p.area() - (4.0 - 3.0 * 0.04)).abs() < 1e-9);
    }
}
