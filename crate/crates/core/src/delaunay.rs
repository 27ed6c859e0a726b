//! Delaunay triangulation of integer lattice points.
//!
//! Points are inserted in lexicographic `(row, col)` order with a sweep-hull:
//! every new point lies outside the current hull, is fanned to the hull edges
//! it sees, and the fan is legalised with Lawson flips.
//!
//! All predicates are exact (`i128`). Cocircular quadruples, which are the
//! norm on lattices, are resolved by symbolically lifting each point above the
//! paraboloid by `eps^(k+1)`, `k` being the point's rank in `(row, col)` order.
//! The lift of the lowest-ranked point dominates, so the in-circle sign of a
//! degenerate quadruple is the sign of the first non-zero cofactor taken in
//! rank order. The result is the unique Delaunay triangulation of the perturbed
//! set and does not depend on anything but the input coordinates.

use std::collections::BTreeSet;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DelaunayError {
    #[error("duplicate point ({row}, {col}) at input indices {first} and {second}")]
    DuplicatePoint {
        row: i64,
        col: i64,
        first: usize,
        second: usize,
    },
    #[error("triangulation needs at least 2 distinct points, got {0}")]
    TooFewPoints(usize),
}

/// Lattice point as `(row, col)`.
pub type LatticePoint = (i64, i64);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Triangulation {
    /// Triangles as counter-clockwise (in `(row, col)` axes) input indices.
    /// Empty when every point is collinear.
    pub triangles: Vec<[usize; 3]>,
    /// Undirected edges `(u, v)` with `u < v`, sorted.
    pub edges: Vec<(usize, usize)>,
}

/// Twice the signed area of `abc`; positive for a left turn.
pub fn orient(a: LatticePoint, b: LatticePoint, c: LatticePoint) -> i128 {
    let (abx, aby) = ((b.0 - a.0) as i128, (b.1 - a.1) as i128);
    let (acx, acy) = ((c.0 - a.0) as i128, (c.1 - a.1) as i128);
    abx * acy - aby * acx
}

/// Positive when `d` lies strictly inside the circle through `a, b, c`
/// (given `orient(a, b, c) > 0`), zero when cocircular.
pub fn incircle(a: LatticePoint, b: LatticePoint, c: LatticePoint, d: LatticePoint) -> i128 {
    let lift = |p: LatticePoint| {
        let (x, y) = ((p.0 - d.0) as i128, (p.1 - d.1) as i128);
        (x, y, x * x + y * y)
    };
    let (adx, ady, al) = lift(a);
    let (bdx, bdy, bl) = lift(b);
    let (cdx, cdy, cl) = lift(c);
    adx * (bdy * cl - cdy * bl) - ady * (bdx * cl - cdx * bl) + al * (bdx * cdy - cdx * bdy)
}

const NONE: usize = usize::MAX;

#[derive(Debug, Clone, Copy)]
struct Tri {
    v: [usize; 3],
    // n[i] is the triangle across the edge opposite v[i]
    n: [usize; 3],
}

struct Builder<'a> {
    pts: &'a [LatticePoint],
    tris: Vec<Tri>,
    hull_next: Vec<usize>,
    hull_prev: Vec<usize>,
    // triangle owning the directed hull edge v -> hull_next[v]
    hull_tri: Vec<usize>,
    stack: Vec<(usize, usize)>,
}

impl<'a> Builder<'a> {
    /// In-circle test on ranked points with the symbolic lift tie-break.
    fn in_circle(&self, a: usize, b: usize, c: usize, d: usize) -> bool {
        let p = self.pts;
        let det = incircle(p[a], p[b], p[c], p[d]);
        if det != 0 {
            return det > 0;
        }
        let mut ranked = [(a, 0u8), (b, 1), (c, 2), (d, 3)];
        ranked.sort_unstable();
        for (_, role) in ranked {
            let cof = match role {
                0 => orient(p[b], p[c], p[d]),
                1 => -orient(p[a], p[c], p[d]),
                2 => orient(p[a], p[b], p[d]),
                _ => -orient(p[a], p[b], p[c]),
            };
            if cof != 0 {
                return cof > 0;
            }
        }
        unreachable!("cofactor of the query point is a non-degenerate orientation")
    }

    fn set_neighbor(&mut self, tri: usize, old: usize, new: usize) {
        if tri == NONE {
            return;
        }
        let t = &mut self.tris[tri];
        for k in 0..3 {
            if t.n[k] == old {
                t.n[k] = new;
                return;
            }
        }
        unreachable!("triangle {tri} is not adjacent to {old}");
    }

    fn claim_hull_edges(&mut self, tri: usize) {
        let t = self.tris[tri];
        for k in 0..3 {
            if t.n[k] == NONE {
                let from = t.v[(k + 1) % 3];
                self.hull_tri[from] = tri;
            }
        }
    }

    /// Seeds the triangulation from a collinear chain `0..k` and point `k`.
    fn seed(&mut self, k: usize) {
        let p = k;
        let left = orient(self.pts[0], self.pts[1], self.pts[p]) > 0;
        let chain: Vec<usize> = if left {
            (0..k).collect()
        } else {
            (0..k).rev().collect()
        };
        let first = self.tris.len();
        for w in chain.windows(2) {
            let id = self.tris.len();
            let prev = if id == first { NONE } else { id - 1 };
            let next = if w[1] == *chain.last().unwrap() {
                NONE
            } else {
                id + 1
            };
            // [a, b, p] with a -> b along the hull; opposite a is edge (b, p)
            self.tris.push(Tri {
                v: [w[0], w[1], p],
                n: [next, prev, NONE],
            });
        }
        let mut ring = chain.clone();
        ring.push(p);
        for (i, &v) in ring.iter().enumerate() {
            let nx = ring[(i + 1) % ring.len()];
            self.hull_next[v] = nx;
            self.hull_prev[nx] = v;
        }
        for id in first..self.tris.len() {
            self.claim_hull_edges(id);
        }
    }

    fn insert(&mut self, p: usize, start: usize) {
        // Walk the hull once and find the run of edges visible from p.
        let mut ring = Vec::new();
        let mut v = start;
        loop {
            ring.push(v);
            v = self.hull_next[v];
            if v == start {
                break;
            }
        }
        let visible: Vec<bool> = ring
            .iter()
            .map(|&a| orient(self.pts[a], self.pts[self.hull_next[a]], self.pts[p]) < 0)
            .collect();
        let h = ring.len();
        let run_start = (0..h)
            .find(|&i| visible[i] && !visible[(i + h - 1) % h])
            .expect("a point outside the hull sees at least one hull edge");
        let mut run = vec![ring[run_start]];
        let mut i = run_start;
        while visible[i % h] {
            i += 1;
            run.push(ring[i % h]);
        }

        let first = self.tris.len();
        let count = run.len() - 1;
        for e in 0..count {
            let (a, b) = (run[e], run[e + 1]);
            let old = self.hull_tri[a];
            let id = self.tris.len();
            let prev = if e == 0 { NONE } else { id - 1 };
            let next = if e + 1 == count { NONE } else { id + 1 };
            self.tris.push(Tri {
                v: [b, a, p],
                n: [prev, next, old],
            });
            // the old triangle holds the directed edge a -> b
            let t = &mut self.tris[old];
            let k = (0..3)
                .find(|&k| t.v[(k + 1) % 3] == a && t.v[(k + 2) % 3] == b)
                .expect("hull triangle carries its hull edge");
            t.n[k] = id;
        }

        let (h0, hr) = (run[0], run[count]);
        self.hull_next[h0] = p;
        self.hull_prev[p] = h0;
        self.hull_next[p] = hr;
        self.hull_prev[hr] = p;
        self.hull_tri[h0] = first;
        self.hull_tri[p] = first + count - 1;

        for id in first..first + count {
            self.stack.push((id, 2));
        }
        self.legalize();
    }

    /// Flips edges opposite the newly inserted point until locally Delaunay.
    fn legalize(&mut self) {
        while let Some((t, i)) = self.stack.pop() {
            let tri = self.tris[t];
            let u = tri.n[i];
            if u == NONE {
                continue;
            }
            let p = tri.v[i];
            let a = tri.v[(i + 1) % 3];
            let b = tri.v[(i + 2) % 3];
            let other = self.tris[u];
            let j = (0..3)
                .find(|&j| other.n[j] == t)
                .expect("adjacency is symmetric");
            let d = other.v[j];
            if !self.in_circle(p, a, b, d) {
                continue;
            }
            // t = (p, a, b), u = (d, b, a)  ->  t = (p, a, d), u = (p, d, b)
            let x_b = tri.n[(i + 1) % 3]; // across (b, p)
            let x_a = tri.n[(i + 2) % 3]; // across (p, a)
            let y_a = other.n[(j + 1) % 3]; // across (a, d)
            let y_b = other.n[(j + 2) % 3]; // across (d, b)
            self.tris[t] = Tri {
                v: [p, a, d],
                n: [y_a, u, x_a],
            };
            self.tris[u] = Tri {
                v: [p, d, b],
                n: [y_b, x_b, t],
            };
            self.set_neighbor(y_a, u, t);
            self.set_neighbor(x_b, t, u);
            self.claim_hull_edges(t);
            self.claim_hull_edges(u);
            self.stack.push((t, 0));
            self.stack.push((u, 0));
        }
    }
}

/// Delaunay triangulation of distinct lattice points.
///
/// With fewer than three non-collinear points the result has no triangles and
/// the edges join consecutive points along the line.
pub fn triangulate(points: &[LatticePoint]) -> Result<Triangulation, DelaunayError> {
    if points.len() < 2 {
        return Err(DelaunayError::TooFewPoints(points.len()));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by_key(|&i| (points[i], i));
    for w in order.windows(2) {
        if points[w[0]] == points[w[1]] {
            return Err(DelaunayError::DuplicatePoint {
                row: points[w[0]].0,
                col: points[w[0]].1,
                first: w[0],
                second: w[1],
            });
        }
    }
    let pts: Vec<LatticePoint> = order.iter().map(|&i| points[i]).collect();
    let n = pts.len();

    let mut k = 2;
    while k < n && orient(pts[0], pts[1], pts[k]) == 0 {
        k += 1;
    }
    if k == n {
        let mut edges: Vec<(usize, usize)> = order
            .windows(2)
            .map(|w| (w[0].min(w[1]), w[0].max(w[1])))
            .collect();
        edges.sort_unstable();
        return Ok(Triangulation {
            triangles: Vec::new(),
            edges,
        });
    }

    let mut b = Builder {
        pts: &pts,
        tris: Vec::with_capacity(2 * n),
        hull_next: vec![NONE; n],
        hull_prev: vec![NONE; n],
        hull_tri: vec![NONE; n],
        stack: Vec::new(),
    };
    b.seed(k);
    for p in k + 1..n {
        b.insert(p, p - 1);
    }

    let triangles: Vec<[usize; 3]> = b
        .tris
        .iter()
        .map(|t| [order[t.v[0]], order[t.v[1]], order[t.v[2]]])
        .collect();
    let mut edges = BTreeSet::new();
    for t in &triangles {
        for e in 0..3 {
            let (u, v) = (t[e], t[(e + 1) % 3]);
            edges.insert((u.min(v), u.max(v)));
        }
    }
    Ok(Triangulation {
        triangles,
        edges: edges.into_iter().collect(),
    })
}

/// Edge list of [`triangulate`].
pub fn delaunay_edges(points: &[LatticePoint]) -> Result<Vec<(usize, usize)>, DelaunayError> {
    triangulate(points).map(|t| t.edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_triangle() {
        let t = triangulate(&[(0, 0), (5, 1), (2, 7)]).unwrap();
        assert_eq!(t.triangles.len(), 1);
        assert_eq!(t.edges, vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn two_points_one_edge() {
        assert_eq!(delaunay_edges(&[(3, 3), (0, 0)]).unwrap(), vec![(0, 1)]);
    }

    #[test]
    fn collinear_chain() {
        let t = triangulate(&[(0, 4), (0, 0), (0, 2), (0, 6)]).unwrap();
        assert!(t.triangles.is_empty());
        assert_eq!(t.edges, vec![(0, 2), (0, 3), (1, 2)]);
    }

    #[test]
    fn unit_square_is_deterministic() {
        let pts = [(0, 0), (0, 1), (1, 0), (1, 1)];
        let t = triangulate(&pts).unwrap();
        assert_eq!(t.edges.len(), 5);
        // the lowest-ranked corner carries the largest lift and loses the diagonal
        assert!(t.edges.contains(&(1, 2)));
        assert!(!t.edges.contains(&(0, 3)));
        let shuffled = [(1, 1), (0, 1), (1, 0), (0, 0)];
        let t2 = triangulate(&shuffled).unwrap();
        assert!(t2.edges.contains(&(1, 2)));
    }

    #[test]
    fn duplicate_rejected() {
        let err = triangulate(&[(0, 0), (1, 1), (0, 0)]).unwrap_err();
        assert_eq!(
            err,
            DelaunayError::DuplicatePoint {
                row: 0,
                col: 0,
                first: 0,
                second: 2
            }
        );
        assert_eq!(triangulate(&[(1, 1)]), Err(DelaunayError::TooFewPoints(1)));
    }

    #[test]
    fn lattice_triangle_count() {
        let mut pts = Vec::new();
        for r in 0..7 {
            for c in 0..9 {
                pts.push((r, c));
            }
        }
        let t = triangulate(&pts).unwrap();
        // 2n - 2 - h with every boundary lattice point on the hull
        let h = 2 * (7 + 9) - 4;
        assert_eq!(t.triangles.len(), 2 * pts.len() - 2 - h);
        for tri in &t.triangles {
            let o = orient(pts[tri[0]], pts[tri[1]], pts[tri[2]]);
            assert!(o > 0);
        }
    }

    #[test]
    fn collinear_prefix_then_off_line() {
        let pts = [(0, 0), (0, 1), (0, 2), (0, 3), (1, 1), (2, 5)];
        let t = triangulate(&pts).unwrap();
        let n = pts.len();
        assert!(t
            .triangles
            .iter()
            .all(|tri| orient(pts[tri[0]], pts[tri[1]], pts[tri[2]]) > 0));
        for (u, v) in [(0, 1), (1, 2), (2, 3)] {
            assert!(t.edges.contains(&(u, v)));
        }
        // Euler: E = 3n - 3 - h, h counts collinear hull vertices
        let h = 6;
        assert_eq!(t.edges.len(), 3 * n - 3 - h);
    }
}
