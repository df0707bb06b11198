use geo::{BooleanOps, Coord, LineString, MultiPolygon};

use super::{closest_on_segment, signed_area, GeometryError, Point, Polygon, Workspace, VERTEX_EPS};

/// Snap radius for mapping boolean-op output back onto input geometry.
const SNAP_TOL: f64 = 1e-6;

/// Free space of a workspace as one outer ring (CCW) and its holes (CW).
#[derive(Clone, Debug)]
pub struct FreeSpace {
    pub outer: Vec<Point>,
    pub holes: Vec<Vec<Point>>,
}

impl FreeSpace {
    pub fn area(&self) -> f64 {
        signed_area(&self.outer).abs() - self.holes.iter().map(|h| signed_area(h).abs()).sum::<f64>()
    }
}

fn to_geo(p: &Polygon) -> geo::Polygon<f64> {
    let coords: Vec<Coord<f64>> = p.vertices().iter().map(|v| Coord { x: v.x, y: v.y }).collect();
    geo::Polygon::new(LineString::new(coords), vec![])
}

fn ring_points(ls: &LineString<f64>) -> Vec<Point> {
    let mut v: Vec<Point> = ls.coords().map(|c| Point::new(c.x, c.y)).collect();
    if v.len() > 1 && v[0].dist(v[v.len() - 1]) <= VERTEX_EPS {
        v.pop();
    }
    v
}

/// Puts boolean-op output back onto the exact input coordinates: vertices
/// near an input vertex snap to it, vertices on two input segments become
/// their intersection, vertices on one segment are projected onto it.
struct Snapper {
    vertices: Vec<Point>,
    segments: Vec<(Point, Point)>,
}

impl Snapper {
    fn new(polys: &[Polygon]) -> Self {
        let vertices = polys.iter().flat_map(|p| p.vertices().iter().copied()).collect();
        let segments = polys.iter().flat_map(|p| p.edges()).collect();
        Self { vertices, segments }
    }

    fn snap(&self, p: Point) -> Point {
        if let Some(v) = self
            .vertices
            .iter()
            .copied()
            .filter(|v| v.dist(p) <= SNAP_TOL)
            .min_by(|a, b| a.dist(p).total_cmp(&b.dist(p)))
        {
            return v;
        }
        let near: Vec<(Point, Point)> = self
            .segments
            .iter()
            .copied()
            .filter(|&(a, b)| closest_on_segment(p, a, b).dist(p) <= SNAP_TOL)
            .collect();
        for (i, &(a, b)) in near.iter().enumerate() {
            for &(c, d) in &near[i + 1..] {
                if let Some(x) = line_intersection(a, b, c, d) {
                    if x.dist(p) <= SNAP_TOL {
                        return x;
                    }
                }
            }
        }
        match near.first() {
            Some(&(a, b)) => closest_on_segment(p, a, b),
            None => p,
        }
    }
}

fn line_intersection(a: Point, b: Point, c: Point, d: Point) -> Option<Point> {
    let r = b - a;
    let s = d - c;
    let den = r.cross(s);
    if den.abs() <= 1e-12 * r.norm() * s.norm() {
        return None;
    }
    let t = (c - a).cross(s) / den;
    Some(a + r * t)
}

fn clean_ring(ring: Vec<Point>, snapper: &Snapper) -> Vec<Point> {
    let mut out: Vec<Point> = Vec::with_capacity(ring.len());
    for p in ring.into_iter().map(|p| snapper.snap(p)) {
        if out.last().is_none_or(|l: &Point| l.dist(p) > VERTEX_EPS) {
            out.push(p);
        }
    }
    while out.len() > 1 && out[0].dist(out[out.len() - 1]) <= VERTEX_EPS {
        out.pop();
    }
    out
}

/// Computes `bounds \ union(obstacles)`.
///
/// Fails with `EmptyFreeSpace` when nothing is left and with
/// `DisconnectedFreeSpace` when the remainder has several components.
pub fn free_space(workspace: &Workspace) -> Result<FreeSpace, GeometryError> {
    let mut parts = free_space_components(workspace)?;
    match parts.len() {
        1 => Ok(parts.remove(0)),
        n => Err(GeometryError::DisconnectedFreeSpace(n)),
    }
}

/// Every connected component of `bounds \ union(obstacles)`, largest first.
pub fn free_space_components(workspace: &Workspace) -> Result<Vec<FreeSpace>, GeometryError> {
    let bounds = workspace.bounds.to_polygon();
    if workspace.obstacles.is_empty() {
        return Ok(vec![FreeSpace { outer: bounds.vertices().to_vec(), holes: vec![] }]);
    }
    let obstacles = workspace.obstacle_polygons();
    let geo_obstacles: Vec<geo::Polygon<f64>> = obstacles.iter().map(to_geo).collect();
    let blocked: MultiPolygon<f64> = geo::unary_union(&geo_obstacles);
    let free = to_geo(&bounds).difference(&blocked);

    let total = bounds.area();
    let mut inputs = obstacles;
    inputs.push(bounds);
    let snapper = Snapper::new(&inputs);
    let mut out: Vec<FreeSpace> = free
        .0
        .iter()
        .filter(|p| {
            use geo::Area;
            p.unsigned_area() > 1e-12 * total
        })
        .map(|part| {
            let mut outer = clean_ring(ring_points(part.exterior()), &snapper);
            if signed_area(&outer) < 0.0 {
                outer.reverse();
            }
            let holes = part
                .interiors()
                .iter()
                .map(|r| {
                    let mut h = clean_ring(ring_points(r), &snapper);
                    if signed_area(&h) > 0.0 {
                        h.reverse();
                    }
                    h
                })
                .filter(|h| h.len() >= 3 && signed_area(h).abs() > 1e-12 * total)
                .collect();
            FreeSpace { outer, holes }
        })
        .filter(|f| f.outer.len() >= 3)
        .collect();
    if out.is_empty() {
        return Err(GeometryError::EmptyFreeSpace);
    }
    out.sort_by(|a, b| b.area().total_cmp(&a.area()));
    Ok(out)
}
