//! Priority-based decomposition of free space into convex regions.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::geometry::{
    bridge_holes, contains, free_space_components, is_convex, merge_regions, triangulate, GeometryError, Point, Polygon, Workspace,
    CONTAINS_TOL, CONVEX_TOL,
};

/// Length below which two collinear edges are considered to touch only at a point.
const OVERLAP_TOL: f64 = 1e-9;

/// How merge candidates were ranked.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorityMode {
    Traffic,
    EdgeLength,
}

/// Disjoint convex regions with their edge adjacency.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "PartitionDoc", try_from = "PartitionDoc")]
pub struct ConvexPartition {
    pub regions: Vec<Polygon>,
    pub adjacency: Vec<Vec<usize>>,
    pub triangle_count: usize,
    pub priority: PriorityMode,
}

#[derive(Serialize, Deserialize)]
struct PartitionDoc {
    regions: Vec<Vec<Point>>,
    adjacency: BTreeMap<String, Vec<usize>>,
    #[serde(default)]
    triangle_count: usize,
    #[serde(default = "default_mode")]
    priority: PriorityMode,
}

fn default_mode() -> PriorityMode {
    PriorityMode::EdgeLength
}

impl From<ConvexPartition> for PartitionDoc {
    fn from(p: ConvexPartition) -> Self {
        Self {
            regions: p.regions.iter().map(|r| r.vertices().to_vec()).collect(),
            adjacency: p.adjacency.into_iter().enumerate().map(|(i, n)| (i.to_string(), n)).collect(),
            triangle_count: p.triangle_count,
            priority: p.priority,
        }
    }
}

impl TryFrom<PartitionDoc> for ConvexPartition {
    type Error = String;

    fn try_from(d: PartitionDoc) -> Result<Self, String> {
        let regions = d
            .regions
            .into_iter()
            .map(|v| Polygon::new(v).map_err(|e| e.to_string()))
            .collect::<Result<Vec<_>, _>>()?;
        let mut adjacency = vec![Vec::new(); regions.len()];
        for (k, v) in d.adjacency {
            let i: usize = k.parse().map_err(|_| format!("bad region id {k:?}"))?;
            if i >= regions.len() || v.iter().any(|&j| j >= regions.len()) {
                return Err(format!("adjacency of region {i} out of range"));
            }
            adjacency[i] = v;
        }
        Ok(Self { regions, adjacency, triangle_count: d.triangle_count, priority: d.priority })
    }
}

impl ConvexPartition {
    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// Lowest region id whose closed region contains `p`.
    pub fn locate(&self, p: Point) -> Option<usize> {
        self.regions.iter().position(|r| contains(r, p))
    }

    pub fn area(&self) -> f64 {
        self.regions.iter().map(Polygon::area).sum()
    }
}

/// A pair of regions that may be merged across `edge`.
#[derive(Clone, Debug)]
pub struct MergeCandidate {
    pub region_ids: (usize, usize),
    pub priority: f64,
    pub edge: (Point, Point),
}

impl MergeCandidate {
    fn new(a: usize, b: usize, priority: f64, edge: (Point, Point)) -> Self {
        Self { region_ids: (a.min(b), a.max(b)), priority, edge }
    }
}

impl PartialEq for MergeCandidate {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}

impl Eq for MergeCandidate {}

impl PartialOrd for MergeCandidate {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

// Max-heap order: higher priority first, then smaller ids first.
impl Ord for MergeCandidate {
    fn cmp(&self, o: &Self) -> Ordering {
        self.priority.total_cmp(&o.priority).then_with(|| o.region_ids.cmp(&self.region_ids))
    }
}

/// Occupancy of `r1 ∪ r2` over all (robot, step) pairs plus twice the number
/// of steps that cross between the two regions.
///
/// A point on both regions is attributed to `r1`.
pub fn traffic_priority(r1: &Polygon, r2: &Polygon, paths: &[Vec<Point>]) -> f64 {
    let label = |p: Point| -> u8 {
        if contains(r1, p) {
            1
        } else if contains(r2, p) {
            2
        } else {
            0
        }
    };
    let mut total = 0usize;
    for path in paths {
        let labels: Vec<u8> = path.iter().map(|&p| label(p)).collect();
        total += labels.iter().filter(|&&l| l != 0).count();
        total += 2 * labels.windows(2).filter(|w| w[0] != 0 && w[1] != 0 && w[0] != w[1]).count();
    }
    total as f64
}

fn shared_length(r1: &Polygon, r2: &Polygon) -> f64 {
    edge_overlaps(r1, r2).iter().sum()
}

/// Lengths of the positive-length opposite-direction overlaps between the
/// edges of two polygons.
fn edge_overlaps(r1: &Polygon, r2: &Polygon) -> Vec<f64> {
    let mut out = Vec::new();
    if !r1.bbox().shrunk(-OVERLAP_TOL).overlaps(&r2.bbox()) {
        return out;
    }
    for (a, b) in r1.edges() {
        let d = b - a;
        let len = d.norm();
        if len <= OVERLAP_TOL {
            continue;
        }
        let u = d * (1.0 / len);
        for (c, e) in r2.edges() {
            if (e - c).dot(u) >= 0.0 {
                continue;
            }
            if u.cross(c - a).abs() > OVERLAP_TOL || u.cross(e - a).abs() > OVERLAP_TOL {
                continue;
            }
            let (tc, te) = ((c - a).dot(u), (e - a).dot(u));
            let ov = len.min(tc.max(te)) - 0f64.max(tc.min(te));
            if ov > OVERLAP_TOL {
                out.push(ov);
            }
        }
    }
    out
}

/// Symmetric adjacency: two regions are neighbours iff they share a
/// boundary segment of positive length.
pub fn build_adjacency(regions: &[Polygon]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); regions.len()];
    for i in 0..regions.len() {
        for j in i + 1..regions.len() {
            if !edge_overlaps(&regions[i], &regions[j]).is_empty() {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    adj
}

fn edge_key(a: Point, b: Point) -> [u64; 4] {
    [a.x.to_bits(), a.y.to_bits(), b.x.to_bits(), b.y.to_bits()]
}

/// Some edge `(a, b)` of `r1` whose reverse is an edge of `r2`.
fn common_edge(r1: &Polygon, r2: &Polygon) -> Option<(Point, Point)> {
    r1.edges().find(|&(a, b)| r2.edges().any(|(c, d)| c.dist(b) <= CONTAINS_TOL && d.dist(a) <= CONTAINS_TOL))
}

/// Priority-based decomposition.
///
/// Triangulates every free-space component after bridging its holes and
/// greedily merges neighbouring regions in priority order whenever the union
/// stays convex. Regions of different components are never adjacent.
/// With `traffic` (embedded plan waypoints per robot) the priority is
/// [`traffic_priority`]; without it, the length of the shared boundary.
pub fn pbd(workspace: &Workspace, traffic: Option<&[Vec<Point>]>) -> Result<ConvexPartition, GeometryError> {
    let mut triangles = Vec::new();
    for component in free_space_components(workspace)? {
        triangles.extend(triangulate(&bridge_holes(component)?)?.triangles);
    }
    let triangle_count = triangles.len();

    let mut regions: Vec<Option<Polygon>> = triangles.into_iter().map(Some).collect();
    let mut neighbours: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); regions.len()];
    let mut by_edge: HashMap<[u64; 4], usize> = HashMap::new();
    for (k, t) in regions.iter().enumerate() {
        for (a, b) in t.as_ref().unwrap().edges() {
            by_edge.insert(edge_key(a, b), k);
        }
    }

    let priority = |r1: &Polygon, r2: &Polygon| match traffic {
        Some(paths) => traffic_priority(r1, r2, paths),
        None => shared_length(r1, r2),
    };

    let mut heap = BinaryHeap::new();
    for (k, t) in regions.iter().enumerate() {
        for (a, b) in t.as_ref().unwrap().edges() {
            if let Some(&o) = by_edge.get(&edge_key(b, a)) {
                if o != k {
                    neighbours[k].insert(o);
                    if k < o {
                        let (r1, r2) = (regions[k].as_ref().unwrap(), regions[o].as_ref().unwrap());
                        heap.push(MergeCandidate::new(k, o, priority(r1, r2), (a, b)));
                    }
                }
            }
        }
    }

    while let Some(c) = heap.pop() {
        let (i, j) = c.region_ids;
        let (Some(r1), Some(r2)) = (regions[i].as_ref(), regions[j].as_ref()) else {
            continue;
        };
        let merged = match merge_regions(r1, r2, c.edge) {
            Ok(m) => m,
            Err(_) => continue,
        };
        if !is_convex(&merged, CONVEX_TOL) {
            continue;
        }
        let id = regions.len();
        regions[i] = None;
        regions[j] = None;
        let around: BTreeSet<usize> =
            neighbours[i].union(&neighbours[j]).copied().filter(|&n| n != i && n != j).collect();
        for &n in &around {
            neighbours[n].remove(&i);
            neighbours[n].remove(&j);
        }
        let mut mine = BTreeSet::new();
        for &n in &around {
            let other = regions[n].as_ref().expect("live neighbour");
            if let Some(edge) = common_edge(&merged, other) {
                heap.push(MergeCandidate::new(n, id, priority(&merged, other), edge));
                neighbours[n].insert(id);
                mine.insert(n);
            }
        }
        regions.push(Some(merged));
        neighbours.push(mine);
    }

    let regions: Vec<Polygon> = regions.into_iter().flatten().collect();
    let adjacency = build_adjacency(&regions);
    Ok(ConvexPartition {
        regions,
        adjacency,
        triangle_count,
        priority: if traffic.is_some() { PriorityMode::Traffic } else { PriorityMode::EdgeLength },
    })
}

/// Area of the intersection of two convex polygons.
pub fn convex_overlap_area(p: &Polygon, q: &Polygon) -> f64 {
    let mut poly: Vec<Point> = p.vertices().to_vec();
    for (a, b) in q.edges() {
        if poly.is_empty() {
            break;
        }
        let inside = |x: Point| (b - a).cross(x - a) >= 0.0;
        let mut out = Vec::with_capacity(poly.len() + 1);
        for k in 0..poly.len() {
            let cur = poly[k];
            let prev = poly[(k + poly.len() - 1) % poly.len()];
            let (ci, pi) = (inside(cur), inside(prev));
            if ci != pi {
                let d = cur - prev;
                let den = (b - a).cross(d);
                if den != 0.0 {
                    let t = (b - a).cross(a - prev) / den;
                    out.push(prev + d * t);
                }
            }
            if ci {
                out.push(cur);
            }
        }
        poly = out;
    }
    crate::geometry::signed_area(&poly).abs()
}

/// A broken partition invariant.
#[derive(Clone, Debug, PartialEq)]
pub enum PartitionIssue {
    NotConvex(usize),
    Overlap(usize, usize, f64),
    InObstacle(usize, Point),
    OutOfBounds(usize, Point),
}

/// Checks convexity, pairwise disjointness and containment in free space.
///
/// Obstacles are taken in their polygonal form (disks as 16-gons).
/// Containment is tested at every vertex and on a stratified 10x10 grid of
/// interior points per region.
pub fn validate_partition(partition: &ConvexPartition, workspace: &Workspace) -> Vec<PartitionIssue> {
    let mut issues = Vec::new();
    let rs = &partition.regions;
    let obstacles = workspace.obstacle_polygons();
    for (i, r) in rs.iter().enumerate() {
        if !is_convex(r, CONVEX_TOL) {
            issues.push(PartitionIssue::NotConvex(i));
        }
    }
    for i in 0..rs.len() {
        for j in i + 1..rs.len() {
            if !rs[i].bbox().overlaps(&rs[j].bbox()) {
                continue;
            }
            let a = convex_overlap_area(&rs[i], &rs[j]);
            if a > 1e-9 {
                issues.push(PartitionIssue::Overlap(i, j, a));
            }
        }
    }
    for (i, r) in rs.iter().enumerate() {
        let bb = r.bbox();
        let mut samples: Vec<Point> = r.vertices().to_vec();
        for gx in 0..10 {
            for gy in 0..10 {
                let p = Point::new(
                    bb.min.x + (gx as f64 + 0.5) * bb.width() / 10.0,
                    bb.min.y + (gy as f64 + 0.5) * bb.height() / 10.0,
                );
                if contains(r, p) {
                    samples.push(p);
                }
            }
        }
        for p in samples {
            if workspace.bounds.inner_clearance(p) < -CONTAINS_TOL {
                issues.push(PartitionIssue::OutOfBounds(i, p));
            } else if obstacles.iter().any(|o| o.signed_distance(p) < -CONTAINS_TOL) {
                issues.push(PartitionIssue::InObstacle(i, p));
            }
        }
    }
    issues
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Aabb, Obstacle};

    fn p(x: f64, y: f64) -> Point {
        Point::new(x, y)
    }

    fn bounds2() -> Aabb {
        Aabb::new(p(-1.0, -1.0), p(1.0, 1.0))
    }

    #[test]
    fn empty_workspace_is_one_region() {
        let part = pbd(&Workspace::empty(bounds2()), None).unwrap();
        assert_eq!(part.len(), 1);
        assert_eq!(part.triangle_count, 2);
        assert!((part.area() - 4.0).abs() < 1e-12);
        let part = pbd(&Workspace::empty(bounds2()), Some(&[vec![p(0.0, 0.0)]])).unwrap();
        assert_eq!(part.len(), 1);
        assert_eq!(part.priority, PriorityMode::Traffic);
    }

    #[test]
    fn split_free_space_is_decomposed_per_component() {
        let ws = Workspace::new(bounds2(), vec![Obstacle::polygon(Polygon::rectangle(p(-0.05, -1.5), p(0.05, 1.5)))]);
        let part = pbd(&ws, None).unwrap();
        assert!(validate_partition(&part, &ws).is_empty());
        assert!((part.area() - 3.8).abs() < 1e-9);
        let side = |r: &Polygon| r.centroid().x > 0.0;
        for (i, ns) in part.adjacency.iter().enumerate() {
            assert!(ns.iter().all(|&j| side(&part.regions[i]) == side(&part.regions[j])));
        }
    }

    #[test]
    fn square_hole_needs_four_regions() {
        let ws = Workspace::new(
            bounds2(),
            vec![Obstacle::polygon(Polygon::rectangle(p(-0.1, -0.1), p(0.1, 0.1)))],
        );
        let part = pbd(&ws, None).unwrap();
        assert!(part.len() >= 4);
        assert!(part.len() <= part.triangle_count);
        assert!(validate_partition(&part, &ws).is_empty());
        assert!((part.area() - 3.96).abs() < 1e-9);
    }

    #[test]
    fn traffic_counts_occupancy_and_crossings() {
        let r1 = Polygon::rectangle(p(0.0, 0.0), p(1.0, 1.0));
        let r2 = Polygon::rectangle(p(1.0, 0.0), p(2.0, 1.0));
        let path = vec![p(0.2, 0.5), p(0.4, 0.5), p(0.6, 0.5), p(1.4, 0.5), p(1.6, 0.5), p(3.0, 0.5)];
        assert_eq!(traffic_priority(&r1, &r2, &[path.clone()]), 7.0);
        assert_eq!(traffic_priority(&r1, &r2, &[path.clone(), path]), 14.0);
        assert_eq!(traffic_priority(&r1, &r2, &[vec![p(5.0, 5.0)]]), 0.0);
    }

    #[test]
    fn adjacency_examples() {
        let t1 = Polygon::new(vec![p(0.0, 0.0), p(1.0, 0.0), p(1.0, 1.0)]).unwrap();
        let t2 = Polygon::new(vec![p(0.0, 0.0), p(1.0, 1.0), p(0.0, 1.0)]).unwrap();
        assert_eq!(build_adjacency(&[t1.clone(), t2]), vec![vec![1], vec![0]]);
        let t3 = Polygon::new(vec![p(1.0, 1.0), p(2.0, 1.0), p(2.0, 2.0)]).unwrap();
        assert_eq!(build_adjacency(&[t1, t3]), vec![Vec::<usize>::new(), vec![]]);
        let quads: Vec<Polygon> = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]
            .iter()
            .map(|&(x, y)| Polygon::rectangle(p(x, y), p(x + 1.0, y + 1.0)))
            .collect();
        let adj = build_adjacency(&quads);
        assert!(adj.iter().all(|n| n.len() == 2));
        assert_eq!(adj[0], vec![1, 2]);
    }

    #[test]
    fn partial_edge_overlap_is_adjacent() {
        let a = Polygon::rectangle(p(0.0, 0.0), p(1.0, 2.0));
        let b = Polygon::rectangle(p(1.0, 1.5), p(2.0, 3.0));
        assert_eq!(build_adjacency(&[a, b]), vec![vec![1], vec![0]]);
    }

    #[test]
    fn candidate_order() {
        let e = (Point::ZERO, Point::ZERO);
        let mut h = BinaryHeap::new();
        h.push(MergeCandidate::new(3, 4, 1.0, e));
        h.push(MergeCandidate::new(1, 5, 2.0, e));
        h.push(MergeCandidate::new(2, 0, 1.0, e));
        assert_eq!(h.pop().unwrap().region_ids, (1, 5));
        assert_eq!(h.pop().unwrap().region_ids, (0, 2));
        assert_eq!(h.pop().unwrap().region_ids, (3, 4));
    }

    #[test]
    fn overlap_area_of_offset_squares() {
        let a = Polygon::rectangle(p(0.0, 0.0), p(1.0, 1.0));
        let b = Polygon::rectangle(p(0.5, 0.5), p(1.5, 1.5));
        assert!((convex_overlap_area(&a, &b) - 0.25).abs() < 1e-12);
        let c = Polygon::rectangle(p(1.0, 0.0), p(2.0, 1.0));
        assert!(convex_overlap_area(&a, &c) < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let ws = Workspace::new(
            bounds2(),
            vec![Obstacle::polygon(Polygon::rectangle(p(-0.1, -0.1), p(0.1, 0.1)))],
        );
        let part = pbd(&ws, None).unwrap();
        let s = serde_json::to_string(&part).unwrap();
        let back: ConvexPartition = serde_json::from_str(&s).unwrap();
        assert_eq!(back, part);
        assert!(s.contains("\"adjacency\":{\"0\":"));
    }
}
