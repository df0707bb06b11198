//! Planar geometry: points, simple polygons, workspaces and the polygon
//! operations the decomposition is built from.
//!
//! All polygons are stored counter-clockwise. Workspaces are rectangles with
//! polygonal or disk obstacles; disks are turned into 16-gons before any
//! polygon work is done on them.

mod convex;
mod freespace;
mod holes;
mod triangulate;

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use convex::{
    clip_segment_convex, contains, is_convex, merge_regions, project_to_convex, segment_enters_convex,
    signed_distance_convex,
};
pub use freespace::{free_space, free_space_components, FreeSpace};
pub use holes::{bridge_holes, remove_holes};
pub use triangulate::{triangulate, Diagonal, Triangulation};

/// Distance below which two vertices are treated as the same point.
pub const VERTEX_EPS: f64 = 1e-12;
/// Boundary tolerance for membership tests.
pub const CONTAINS_TOL: f64 = 1e-9;
/// Default tolerance for convexity tests.
pub const CONVEX_TOL: f64 = 1e-9;
/// Segments used when a disk obstacle is polygonized.
pub const DISK_SEGMENTS: usize = 16;
/// Sides of the circumscribed polygon used to grow obstacles by the robot radius.
pub const INFLATE_SIDES: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("polygon needs at least 3 distinct vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon has zero area")]
    ZeroArea,
    #[error("polygon is not simple: edges {0} and {1} cross")]
    NonSimplePolygon(usize, usize),
    #[error("free space has {0} connected components")]
    DisconnectedFreeSpace(usize),
    #[error("free space is empty")]
    EmptyFreeSpace,
    #[error("regions do not share the given edge")]
    NotAdjacent,
    #[error("triangulation failed: {0}")]
    TriangulationFailed(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ZERO: Point = Point { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3-D cross product.
    #[inline]
    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn dist(self, o: Point) -> f64 {
        (self - o).norm()
    }

    #[inline]
    pub fn lerp(self, o: Point, s: f64) -> Point {
        self + (o - self) * s
    }

    /// Left-hand normal.
    #[inline]
    pub fn perp(self) -> Point {
        Point::new(-self.y, self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Point {
    fn from(a: [f64; 2]) -> Self {
        Point::new(a[0], a[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl Add for Point {
    type Output = Point;
    #[inline]
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    #[inline]
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    #[inline]
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

impl Neg for Point {
    type Output = Point;
    #[inline]
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

impl AddAssign for Point {
    #[inline]
    fn add_assign(&mut self, o: Point) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl SubAssign for Point {
    #[inline]
    fn sub_assign(&mut self, o: Point) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

/// Twice the signed area of triangle (a, b, c); positive when counter-clockwise.
#[inline]
pub fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b - a).cross(c - a)
}

/// Closest point to `p` on segment `[a, b]`.
pub fn closest_on_segment(p: Point, a: Point, b: Point) -> Point {
    let d = b - a;
    let len2 = d.norm_sq();
    if len2 == 0.0 {
        return a;
    }
    let s = ((p - a).dot(d) / len2).clamp(0.0, 1.0);
    a + d * s
}

pub fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    p.dist(closest_on_segment(p, a, b))
}

/// True when the open segments cross at a single interior point.
pub fn segments_properly_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = orient(a, b, c);
    let d2 = orient(a, b, d);
    let d3 = orient(c, d, a);
    let d4 = orient(c, d, b);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

/// A simple polygon with counter-clockwise vertex order.
///
/// Polygons produced by hole removal are only weakly simple: a bridge edge
/// is traversed twice and its endpoints appear twice in the vertex list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point>", into = "Vec<Point>")]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl Polygon {
    /// Builds a polygon, dropping consecutive duplicates and reorienting to CCW.
    pub fn new(vertices: Vec<Point>) -> Result<Self, GeometryError> {
        let mut vs: Vec<Point> = Vec::with_capacity(vertices.len());
        for v in vertices {
            if vs.last().is_none_or(|l: &Point| l.dist(v) > VERTEX_EPS) {
                vs.push(v);
            }
        }
        while vs.len() > 1 && vs[0].dist(vs[vs.len() - 1]) <= VERTEX_EPS {
            vs.pop();
        }
        if vs.len() < 3 {
            return Err(GeometryError::TooFewVertices(vs.len()));
        }
        let a = signed_area(&vs);
        if a.abs() <= f64::EPSILON * bbox_scale(&vs).powi(2) {
            return Err(GeometryError::ZeroArea);
        }
        if a < 0.0 {
            vs.reverse();
        }
        Ok(Self { vertices: vs })
    }

    /// Wraps vertices already known to be CCW and free of consecutive duplicates.
    pub(crate) fn from_ccw(vertices: Vec<Point>) -> Self {
        debug_assert!(vertices.len() >= 3);
        Self { vertices }
    }

    pub fn rectangle(min: Point, max: Point) -> Self {
        Self::from_ccw(vec![
            min,
            Point::new(max.x, min.y),
            max,
            Point::new(min.x, max.y),
        ])
    }

    pub fn regular(center: Point, radius: f64, sides: usize) -> Self {
        let vs = (0..sides)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / sides as f64;
                center + Point::new(a.cos(), a.sin()) * radius
            })
            .collect();
        Self::from_ccw(vs)
    }

    #[inline]
    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Edges as `(start, end)` pairs, closing back to the first vertex.
    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices).abs()
    }

    pub fn centroid(&self) -> Point {
        let mut a = 0.0;
        let mut c = Point::ZERO;
        for (p, q) in self.edges() {
            let w = p.cross(q);
            a += w;
            c += (p + q) * w;
        }
        if a.abs() < 1e-300 {
            let n = self.vertices.len() as f64;
            return self.vertices.iter().fold(Point::ZERO, |s, &v| s + v) * (1.0 / n);
        }
        c * (1.0 / (3.0 * a))
    }

    pub fn perimeter(&self) -> f64 {
        self.edges().map(|(p, q)| p.dist(q)).sum()
    }

    pub fn bbox(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    /// First pair of edges that properly cross, if any. Touching and
    /// collinear overlaps (bridge edges) are tolerated.
    pub fn find_crossing(&self) -> Option<(usize, usize)> {
        let n = self.vertices.len();
        for i in 0..n {
            let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
            for j in (i + 2)..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                let (c, d) = (self.vertices[j], self.vertices[(j + 1) % n]);
                if segments_properly_cross(a, b, c, d) {
                    return Some((i, j));
                }
            }
        }
        None
    }

    /// Even-odd point-in-polygon test (boundary points may go either way).
    pub fn contains_point(&self, p: Point) -> bool {
        let mut inside = false;
        let n = self.vertices.len();
        let mut j = n - 1;
        for i in 0..n {
            let (a, b) = (self.vertices[i], self.vertices[j]);
            if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
                inside = !inside;
            }
            j = i;
        }
        inside
    }

    /// Distance from `p` to the polygon boundary.
    pub fn boundary_distance(&self, p: Point) -> f64 {
        self.edges()
            .map(|(a, b)| segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    /// Signed distance to the polygon: positive outside, negative inside.
    pub fn signed_distance(&self, p: Point) -> f64 {
        let d = self.boundary_distance(p);
        if self.contains_point(p) {
            -d
        } else {
            d
        }
    }

    /// Rotates the vertex list so that it starts at the lexicographically
    /// smallest vertex. Used to compare polygons independent of start vertex.
    pub fn normalized(&self) -> Polygon {
        let k = (0..self.vertices.len())
            .min_by(|&i, &j| {
                let (a, b) = (self.vertices[i], self.vertices[j]);
                a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y))
            })
            .unwrap_or(0);
        let mut v = self.vertices.clone();
        v.rotate_left(k);
        Polygon::from_ccw(v)
    }

    pub fn translated(&self, d: Point) -> Polygon {
        Polygon::from_ccw(self.vertices.iter().map(|&v| v + d).collect())
    }
}

impl TryFrom<Vec<Point>> for Polygon {
    type Error = GeometryError;
    fn try_from(v: Vec<Point>) -> Result<Self, Self::Error> {
        Polygon::new(v)
    }
}

impl From<Polygon> for Vec<Point> {
    fn from(p: Polygon) -> Self {
        p.vertices
    }
}

pub fn signed_area(vs: &[Point]) -> f64 {
    let n = vs.len();
    let mut s = 0.0;
    for i in 0..n {
        s += vs[i].cross(vs[(i + 1) % n]);
    }
    0.5 * s
}

fn bbox_scale(vs: &[Point]) -> f64 {
    let b = Aabb::from_points(vs);
    (b.max.x - b.min.x).max(b.max.y - b.min.y).max(1.0)
}

/// Convex hull (Andrew's monotone chain), CCW, collinear points dropped.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup_by(|a, b| a.dist(*b) <= VERTEX_EPS);
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && orient(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Axis-aligned rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
}

impl Aabb {
    pub fn new(min: Point, max: Point) -> Self {
        Self { min, max }
    }

    pub fn from_points(ps: &[Point]) -> Self {
        let mut min = Point::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in ps {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        Self { min, max }
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// Distance from an interior point to the nearest side (negative outside).
    pub fn inner_clearance(&self, p: Point) -> f64 {
        (p.x - self.min.x)
            .min(self.max.x - p.x)
            .min(p.y - self.min.y)
            .min(self.max.y - p.y)
    }

    pub fn overlaps(&self, o: &Aabb) -> bool {
        self.min.x <= o.max.x && o.min.x <= self.max.x && self.min.y <= o.max.y && o.min.y <= self.max.y
    }

    pub fn shrunk(&self, r: f64) -> Aabb {
        Aabb::new(self.min + Point::new(r, r), self.max - Point::new(r, r))
    }

    pub fn to_polygon(&self) -> Polygon {
        Polygon::rectangle(self.min, self.max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Obstacle {
    Polygon { vertices: Polygon },
    Disk { center: Point, radius: f64 },
}

impl Obstacle {
    pub fn polygon(p: Polygon) -> Self {
        Obstacle::Polygon { vertices: p }
    }

    pub fn disk(center: Point, radius: f64) -> Self {
        Obstacle::Disk { center, radius }
    }

    /// Polygonal stand-in; disks become inscribed 16-gons.
    pub fn to_polygon(&self) -> Polygon {
        match self {
            Obstacle::Polygon { vertices } => vertices.clone(),
            Obstacle::Disk { center, radius } => Polygon::regular(*center, *radius, DISK_SEGMENTS),
        }
    }

    pub fn bbox(&self) -> Aabb {
        match self {
            Obstacle::Polygon { vertices } => vertices.bbox(),
            Obstacle::Disk { center, radius } => {
                Aabb::new(*center - Point::new(*radius, *radius), *center + Point::new(*radius, *radius))
            }
        }
    }

    /// Signed distance from `p` to the true obstacle shape.
    pub fn signed_distance(&self, p: Point) -> f64 {
        match self {
            Obstacle::Polygon { vertices } => vertices.signed_distance(p),
            Obstacle::Disk { center, radius } => p.dist(*center) - radius,
        }
    }

    /// Grows the obstacle by `r`. The result over-approximates the exact
    /// Minkowski sum so that points outside it keep at least `r` clearance.
    pub fn inflated(&self, r: f64) -> Vec<Polygon> {
        let k = INFLATE_SIDES;
        // circumscribed polygon of a radius-r disk
        let rc = r / (std::f64::consts::PI / k as f64).cos();
        match self {
            Obstacle::Disk { center, radius } => {
                let rr = (radius + r) / (std::f64::consts::PI / k as f64).cos();
                vec![Polygon::regular(*center, rr, k)]
            }
            Obstacle::Polygon { vertices } => {
                let pieces: Vec<Vec<Point>> = if convex::is_convex(vertices, CONVEX_TOL) {
                    vec![vertices.vertices().to_vec()]
                } else {
                    match triangulate(vertices) {
                        Ok(t) => t.triangles.iter().map(|t| t.vertices().to_vec()).collect(),
                        Err(_) => vec![convex_hull(vertices.vertices())],
                    }
                };
                pieces
                    .into_iter()
                    .filter_map(|piece| {
                        if r <= 0.0 {
                            return Polygon::new(piece).ok();
                        }
                        let pts: Vec<Point> = piece
                            .iter()
                            .flat_map(|&v| {
                                (0..k).map(move |j| {
                                    let a = std::f64::consts::TAU * (j as f64 + 0.5) / k as f64;
                                    v + Point::new(a.cos(), a.sin()) * rc
                                })
                            })
                            .collect();
                        Polygon::new(convex_hull(&pts)).ok()
                    })
                    .collect()
            }
        }
    }
}

/// Bounded planar world with static obstacles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub bounds: Aabb,
    pub obstacles: Vec<Obstacle>,
}

impl Workspace {
    pub fn new(bounds: Aabb, obstacles: Vec<Obstacle>) -> Self {
        Self { bounds, obstacles }
    }

    pub fn empty(bounds: Aabb) -> Self {
        Self { bounds, obstacles: Vec::new() }
    }

    /// Obstacles as polygons (disks polygonized).
    pub fn obstacle_polygons(&self) -> Vec<Polygon> {
        self.obstacles.iter().map(Obstacle::to_polygon).collect()
    }

    /// Configuration space of a disk robot of radius `r`: bounds shrink by
    /// `r` and every obstacle is grown by `r`. A point in the free space of
    /// the result is a valid robot center in `self`.
    pub fn inflate(&self, r: f64) -> Workspace {
        let obstacles = self
            .obstacles
            .iter()
            .flat_map(|o| o.inflated(r))
            .map(Obstacle::polygon)
            .collect();
        Workspace { bounds: self.bounds.shrunk(r), obstacles }
    }

    /// Clearance of `p` from the bounds and all obstacles (true shapes).
    pub fn clearance(&self, p: Point) -> f64 {
        self.obstacles
            .iter()
            .map(|o| o.signed_distance(p))
            .fold(self.bounds.inner_clearance(p), f64::min)
    }

    /// True when `p` is inside the bounds and outside every obstacle's
    /// polygonal representation, up to `tol`.
    pub fn is_free(&self, p: Point, tol: f64) -> bool {
        if self.bounds.inner_clearance(p) < -tol {
            return false;
        }
        self.obstacles.iter().all(|o| {
            let poly = o.to_polygon();
            !poly.contains_point(p) || poly.boundary_distance(p) <= tol
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polygon_is_reoriented_ccw() {
        let p = Polygon::new(vec![
            Point::new(0.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 0.0),
        ])
        .unwrap();
        assert!(signed_area(p.vertices()) > 0.0);
        assert!((p.area() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_polygons_rejected() {
        let r = Polygon::new(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(1.0, 0.0)]);
        assert_eq!(r, Err(GeometryError::TooFewVertices(2)));
        let r = Polygon::new(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(2.0, 0.0)]);
        assert_eq!(r, Err(GeometryError::ZeroArea));
    }

    #[test]
    fn bowtie_has_crossing() {
        let p = Polygon::from_ccw(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
        ]);
        assert!(p.find_crossing().is_some());
    }

    #[test]
    fn signed_distance_sign_convention() {
        let sq = Polygon::rectangle(Point::new(0.0, 0.0), Point::new(1.0, 1.0));
        assert!((sq.signed_distance(Point::new(0.5, 0.5)) + 0.5).abs() < 1e-15);
        assert!((sq.signed_distance(Point::new(2.0, 0.5)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn inflation_keeps_clearance() {
        let o = Obstacle::polygon(Polygon::rectangle(Point::new(0.0, 0.0), Point::new(0.1, 0.1)));
        let grown = o.inflated(0.04);
        assert_eq!(grown.len(), 1);
        for &v in grown[0].vertices() {
            assert!(o.signed_distance(v) >= 0.04 - 1e-12);
        }
        let d = Obstacle::disk(Point::ZERO, 0.1);
        for &v in d.inflated(0.04)[0].vertices() {
            assert!(d.signed_distance(v) >= 0.04 - 1e-12);
        }
    }

    #[test]
    fn hull_of_square_with_interior_point() {
        let h = convex_hull(&[
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(0.5, 0.5),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
            Point::new(0.5, 0.0),
        ]);
        assert_eq!(h.len(), 4);
    }
}
