use super::{closest_on_segment, GeometryError, Point, Polygon, CONTAINS_TOL};

/// Coordinate tolerance for matching shared edges between regions.
const EDGE_MATCH_TOL: f64 = 1e-9;

/// True iff every turn of the CCW polygon is a left turn (or straight) up to `tol`.
///
/// A straight vertex counts as convex; a 180-degree reversal does not.
pub fn is_convex(polygon: &Polygon, tol: f64) -> bool {
    let v = polygon.vertices();
    let n = v.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let a = v[i];
        let b = v[(i + 1) % n];
        let c = v[(i + 2) % n];
        let e1 = b - a;
        let e2 = c - b;
        let cr = e1.cross(e2);
        if cr < -tol {
            return false;
        }
        if cr.abs() <= tol && e1.dot(e2) < 0.0 {
            return false;
        }
    }
    true
}

/// Signed distances of `p` to each edge line, positive on the outside.
fn max_edge_excess(region: &Polygon, p: Point) -> f64 {
    region
        .edges()
        .map(|(a, b)| {
            let e = b - a;
            let len = e.norm();
            if len == 0.0 {
                f64::NEG_INFINITY
            } else {
                -e.cross(p - a) / len
            }
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Closed membership test for a convex region with a `1e-9` boundary band.
pub fn contains(region: &Polygon, p: Point) -> bool {
    max_edge_excess(region, p) <= CONTAINS_TOL
}

/// Signed Euclidean distance to a convex region: negative inside.
pub fn signed_distance_convex(region: &Polygon, p: Point) -> f64 {
    let m = max_edge_excess(region, p);
    if m <= 0.0 {
        m
    } else {
        region.boundary_distance(p)
    }
}

/// Euclidean projection of `p` onto a convex region.
pub fn project_to_convex(p: Point, region: &Polygon) -> Point {
    if max_edge_excess(region, p) <= 0.0 {
        return p;
    }
    let mut best = p;
    let mut best_d = f64::INFINITY;
    for (a, b) in region.edges() {
        let q = closest_on_segment(p, a, b);
        let d = (q - p).norm_sq();
        if d < best_d {
            best_d = d;
            best = q;
        }
    }
    best
}

/// Parameter interval `[t0, t1]` of the segment `a + t (b - a)`, `t` in
/// `[0, 1]`, that lies inside a convex region grown by `tol`, or `None` when
/// it misses it.
pub fn clip_segment_convex(a: Point, b: Point, region: &Polygon, tol: f64) -> Option<(f64, f64)> {
    let d = b - a;
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (p, q) in region.edges() {
        let e = q - p;
        // inside is e x (x - p) >= -tol |e|
        let num = e.cross(a - p) + tol * e.norm();
        let den = e.cross(d);
        if den == 0.0 {
            if num < 0.0 {
                return None;
            }
            continue;
        }
        let t = -num / den;
        if den > 0.0 {
            t0 = t0.max(t);
        } else {
            t1 = t1.min(t);
        }
        if t0 > t1 {
            return None;
        }
    }
    Some((t0, t1))
}

/// True when the open segment `a b` passes through the interior of a convex
/// region by more than `tol` (grazing contact does not count).
pub fn segment_enters_convex(a: Point, b: Point, region: &Polygon, tol: f64) -> bool {
    match clip_segment_convex(a, b, region, 0.0) {
        None => false,
        Some((t0, t1)) => {
            let len = a.dist(b);
            if (t1 - t0) * len <= tol && len > 0.0 {
                return false;
            }
            let m = a.lerp(b, 0.5 * (t0 + t1));
            signed_distance_convex(region, m) < -tol
        }
    }
}

fn same(a: Point, b: Point) -> bool {
    a.dist(b) <= EDGE_MATCH_TOL
}

/// Index `i` such that the polygon has the directed edge `a -> b` at `(i, i+1)`.
pub(crate) fn find_directed_edge(poly: &Polygon, a: Point, b: Point) -> Option<usize> {
    let v = poly.vertices();
    let n = v.len();
    (0..n).find(|&i| same(v[i], a) && same(v[(i + 1) % n], b))
}

/// Union of two interior-disjoint polygons across their common edge.
///
/// `shared_edge` may be given in either direction. When the polygons share a
/// longer collinear chain containing that edge, the whole chain is dropped;
/// the chain endpoints and all other vertices are kept.
pub fn merge_regions(
    r1: &Polygon,
    r2: &Polygon,
    shared_edge: (Point, Point),
) -> Result<Polygon, GeometryError> {
    let (mut a, mut b) = shared_edge;
    let i = match find_directed_edge(r1, a, b) {
        Some(i) => i,
        None => {
            std::mem::swap(&mut a, &mut b);
            find_directed_edge(r1, a, b).ok_or(GeometryError::NotAdjacent)?
        }
    };
    let j = find_directed_edge(r2, b, a).ok_or(GeometryError::NotAdjacent)?;
    let (v1, v2) = (r1.vertices(), r2.vertices());
    let (n1, n2) = (v1.len(), v2.len());
    // r1 runs c0 -> ck along the chain, r2 runs ck -> c0
    let (mut s1, mut e1) = (i, (i + 1) % n1);
    let (mut s2, mut e2) = (j, (j + 1) % n2);
    let mut k = 1;
    while k + 2 < n1.min(n2) && same(v1[(e1 + 1) % n1], v2[(s2 + n2 - 1) % n2]) {
        e1 = (e1 + 1) % n1;
        s2 = (s2 + n2 - 1) % n2;
        k += 1;
    }
    while k + 2 < n1.min(n2) && same(v1[(s1 + n1 - 1) % n1], v2[(e2 + 1) % n2]) {
        s1 = (s1 + n1 - 1) % n1;
        e2 = (e2 + 1) % n2;
        k += 1;
    }
    let mut out = Vec::with_capacity(n1 + n2 - 2 * k);
    out.extend((0..n1 - k).map(|t| v1[(e1 + t) % n1]));
    out.extend((0..n2 - k).map(|t| v2[(e2 + t) % n2]));
    Polygon::new(out)
}
