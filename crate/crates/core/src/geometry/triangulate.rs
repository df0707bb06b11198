use std::collections::HashMap;

use super::{orient, segments_properly_cross, GeometryError, Point, Polygon, VERTEX_EPS};

/// Interior edge shared by two triangles.
#[derive(Clone, Debug, PartialEq)]
pub struct Diagonal {
    pub a: Point,
    pub b: Point,
    pub triangles: (usize, usize),
}

#[derive(Clone, Debug, Default)]
pub struct Triangulation {
    pub triangles: Vec<Polygon>,
    pub diagonals: Vec<Diagonal>,
}

impl Triangulation {
    pub fn area(&self) -> f64 {
        self.triangles.iter().map(Polygon::area).sum()
    }
}

/// Triangulates a (weakly) simple polygon by ear clipping.
///
/// Vertices that coincide with an ear's corners (bridge duplicates) never
/// block it. When no ear is left, straight and duplicate vertices are
/// dropped and clipping resumes; as a last resort the remainder is split
/// along a valid diagonal.
pub fn triangulate(polygon: &Polygon) -> Result<Triangulation, GeometryError> {
    if let Some((i, j)) = polygon.find_crossing() {
        return Err(GeometryError::NonSimplePolygon(i, j));
    }
    let pts = polygon.vertices();
    let mut ring = Ring::new(pts);
    let mut tris: Vec<[usize; 3]> = Vec::with_capacity(pts.len());
    ring.clip(0, &mut tris, 0)?;
    let tris: Vec<[usize; 3]> = tris.iter().map(|t| t.map(|k| ring.orig[k])).collect();

    let triangles: Vec<Polygon> = tris
        .iter()
        .map(|t| Polygon::from_ccw(vec![pts[t[0]], pts[t[1]], pts[t[2]]]))
        .collect();

    let mut by_edge: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (k, t) in tris.iter().enumerate() {
        for e in 0..3 {
            let (a, b) = (t[e], t[(e + 1) % 3]);
            by_edge.entry((a.min(b), a.max(b))).or_default().push(k);
        }
    }
    let mut diagonals: Vec<Diagonal> = by_edge
        .into_iter()
        .filter(|(_, ts)| ts.len() == 2)
        .map(|((a, b), ts)| Diagonal { a: pts[a], b: pts[b], triangles: (ts[0], ts[1]) })
        .collect();
    diagonals.sort_by_key(|d| d.triangles);
    Ok(Triangulation { triangles, diagonals })
}

/// Doubly linked vertex ring. Splitting appends copies of existing
/// vertices; `orig` maps every slot back to its input index.
struct Ring {
    pts: Vec<Point>,
    orig: Vec<usize>,
    prev: Vec<usize>,
    next: Vec<usize>,
}

impl Ring {
    fn new(pts: &[Point]) -> Self {
        let n = pts.len();
        Self {
            pts: pts.to_vec(),
            orig: (0..n).collect(),
            prev: (0..n).map(|i| (i + n - 1) % n).collect(),
            next: (0..n).map(|i| (i + 1) % n).collect(),
        }
    }

    fn remove(&mut self, i: usize) {
        let (p, n) = (self.prev[i], self.next[i]);
        self.next[p] = n;
        self.prev[n] = p;
    }

    fn p(&self, i: usize) -> Point {
        self.pts[i]
    }

    fn count_from(&self, start: usize) -> usize {
        let mut c = 1;
        let mut i = self.next[start];
        while i != start {
            c += 1;
            i = self.next[i];
        }
        c
    }

    fn is_ear(&self, b: usize) -> bool {
        let a = self.prev[b];
        let c = self.next[b];
        let (pa, pb, pc) = (self.p(a), self.p(b), self.p(c));
        if orient(pa, pb, pc) <= 0.0 {
            return false;
        }
        let (x0, x1) = (pa.x.min(pb.x).min(pc.x), pa.x.max(pb.x).max(pc.x));
        let (y0, y1) = (pa.y.min(pb.y).min(pc.y), pa.y.max(pb.y).max(pc.y));
        let mut i = self.next[c];
        while i != a {
            let q = self.p(i);
            if q.x >= x0
                && q.x <= x1
                && q.y >= y0
                && q.y <= y1
                && q.dist(pa) > VERTEX_EPS
                && q.dist(pb) > VERTEX_EPS
                && q.dist(pc) > VERTEX_EPS
                && orient(pa, pb, q) >= 0.0
                && orient(pb, pc, q) >= 0.0
                && orient(pc, pa, q) >= 0.0
                && orient(self.p(self.prev[i]), q, self.p(self.next[i])) <= 0.0
            {
                return false;
            }
            i = self.next[i];
        }
        true
    }

    fn clip(&mut self, start: usize, out: &mut Vec<[usize; 3]>, pass: u8) -> Result<(), GeometryError> {
        let mut ear = start;
        let mut stop = ear;
        while self.prev[ear] != self.next[ear] {
            let (a, c) = (self.prev[ear], self.next[ear]);
            if self.is_ear(ear) {
                out.push([a, ear, c]);
                self.remove(ear);
                ear = self.next[c];
                stop = ear;
                continue;
            }
            ear = c;
            if ear == stop {
                return match pass {
                    0 => {
                        let s = self.filter(ear);
                        self.clip(s, out, 1)
                    }
                    1 => self.split(ear, out),
                    _ => Err(GeometryError::TriangulationFailed(format!(
                        "no ear among {} remaining vertices",
                        self.count_from(ear)
                    ))),
                };
            }
        }
        Ok(())
    }

    /// Drops coincident and straight vertices; returns a live vertex.
    fn filter(&mut self, start: usize) -> usize {
        let mut p = start;
        let mut end = start;
        loop {
            let (a, c) = (self.prev[p], self.next[p]);
            if a == c {
                return p;
            }
            let degenerate = self.p(p).dist(self.p(c)) <= VERTEX_EPS
                || (orient(self.p(a), self.p(p), self.p(c)) == 0.0
                    && (self.p(p) - self.p(a)).dot(self.p(c) - self.p(p)) >= 0.0);
            if degenerate {
                self.remove(p);
                p = a;
                end = a;
                if p == self.next[p] {
                    return p;
                }
            } else {
                p = c;
                if p == end {
                    return p;
                }
            }
        }
    }

    fn locally_inside(&self, a: usize, b: usize) -> bool {
        let (pa, pb) = (self.p(a), self.p(b));
        let (pp, pn) = (self.p(self.prev[a]), self.p(self.next[a]));
        if orient(pp, pa, pn) > 0.0 {
            orient(pa, pn, pb) >= 0.0 && orient(pa, pb, pp) >= 0.0
        } else {
            orient(pa, pp, pb) < 0.0 || orient(pa, pb, pn) < 0.0
        }
    }

    fn middle_inside(&self, a: usize, b: usize) -> bool {
        let m = (self.p(a) + self.p(b)) * 0.5;
        let mut inside = false;
        let mut i = a;
        loop {
            let j = self.next[i];
            let (p, q) = (self.p(i), self.p(j));
            if (p.y > m.y) != (q.y > m.y) && q.y != p.y && m.x < (q.x - p.x) * (m.y - p.y) / (q.y - p.y) + p.x {
                inside = !inside;
            }
            i = j;
            if i == a {
                break;
            }
        }
        inside
    }

    fn intersects_ring(&self, a: usize, b: usize) -> bool {
        let (pa, pb) = (self.p(a), self.p(b));
        let mut i = a;
        loop {
            let j = self.next[i];
            if i != a && i != b && j != a && j != b && segments_properly_cross(self.p(i), self.p(j), pa, pb) {
                return true;
            }
            i = j;
            if i == a {
                break;
            }
        }
        false
    }

    fn valid_diagonal(&self, a: usize, b: usize) -> bool {
        self.next[a] != b
            && self.prev[a] != b
            && self.p(a).dist(self.p(b)) > VERTEX_EPS
            && !self.intersects_ring(a, b)
            && self.locally_inside(a, b)
            && self.locally_inside(b, a)
            && self.middle_inside(a, b)
    }

    /// Splits the ring along a valid diagonal and clips both halves.
    fn split(&mut self, start: usize, out: &mut Vec<[usize; 3]>) -> Result<(), GeometryError> {
        let mut a = start;
        loop {
            let mut b = self.next[self.next[a]];
            while b != self.prev[a] {
                if self.valid_diagonal(a, b) {
                    let (_, b2) = self.split_at(a, b);
                    self.clip(a, out, 0)?;
                    return self.clip(b2, out, 0);
                }
                b = self.next[b];
            }
            a = self.next[a];
            if a == start {
                return Err(GeometryError::TriangulationFailed("no valid split diagonal".into()));
            }
        }
    }

    /// Cuts the ring along `a - b` into `a .. b` and `b' .. a'`, where the
    /// primed slots are fresh copies. Returns `(a', b')`.
    fn split_at(&mut self, a: usize, b: usize) -> (usize, usize) {
        let a2 = self.push_copy(a);
        let b2 = self.push_copy(b);
        let ap = self.prev[a];
        let bn = self.next[b];
        self.next[b] = a;
        self.prev[a] = b;
        self.next[b2] = bn;
        self.prev[bn] = b2;
        self.next[ap] = a2;
        self.prev[a2] = ap;
        self.next[a2] = b2;
        self.prev[b2] = a2;
        (a2, b2)
    }

    fn push_copy(&mut self, i: usize) -> usize {
        let k = self.pts.len();
        self.pts.push(self.pts[i]);
        self.orig.push(self.orig[i]);
        self.prev.push(k);
        self.next.push(k);
        k
    }
}
