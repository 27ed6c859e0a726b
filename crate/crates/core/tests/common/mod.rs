//! Brute-force oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::Rng;
use spatial_link::delaunay::triangulate;
use spatial_link::graph::{GraphEdge, GraphNode, GraphParams, NodeKind, SpatialGraph};
use spatial_link::grid::Cell;

pub fn det3(m: [[i128; 3]; 3]) -> i128 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub fn area2(a: (i64, i64), b: (i64, i64), c: (i64, i64)) -> i128 {
    ((b.0 - a.0) as i128) * ((c.1 - a.1) as i128) - ((b.1 - a.1) as i128) * ((c.0 - a.0) as i128)
}

// > 0 when d is strictly inside the circle through the ccw triangle abc.
pub fn in_circle(a: (i64, i64), b: (i64, i64), c: (i64, i64), d: (i64, i64)) -> i128 {
    let row = |p: (i64, i64)| {
        let (x, y) = ((p.0 - d.0) as i128, (p.1 - d.1) as i128);
        [x, y, x * x + y * y]
    };
    det3([row(a), row(b), row(c)])
}

pub fn hull_area2(pts: &[(i64, i64)]) -> i128 {
    let mut p = pts.to_vec();
    p.sort();
    let mut lower: Vec<(i64, i64)> = Vec::new();
    for &q in &p {
        while lower.len() >= 2 && area2(lower[lower.len() - 2], lower[lower.len() - 1], q) <= 0 {
            lower.pop();
        }
        lower.push(q);
    }
    let mut upper: Vec<(i64, i64)> = Vec::new();
    for &q in p.iter().rev() {
        while upper.len() >= 2 && area2(upper[upper.len() - 2], upper[upper.len() - 1], q) <= 0 {
            upper.pop();
        }
        upper.push(q);
    }
    lower.pop();
    upper.pop();
    let hull = [lower, upper].concat();
    (1..hull.len().saturating_sub(1))
        .map(|i| area2(hull[0], hull[i], hull[i + 1]))
        .sum()
}

/// Empty circumcircle, positive orientation, exact coverage of the hull and
/// edge list consistent with the triangles.
pub fn check_delaunay(pts: &[(i64, i64)]) -> Result<(), String> {
    let tri = triangulate(pts).map_err(|e| e.to_string())?;
    let mut from_tris = BTreeSet::new();
    let mut total = 0i128;
    for t in &tri.triangles {
        let [a, b, c] = t.map(|i| pts[i]);
        let ar = area2(a, b, c);
        if ar <= 0 {
            return Err(format!("triangle {t:?} is not counter-clockwise"));
        }
        total += ar;
        for (k, &d) in pts.iter().enumerate() {
            if !t.contains(&k) && in_circle(a, b, c, d) > 0 {
                return Err(format!("point {d:?} inside circumcircle of {t:?}"));
            }
        }
        for (u, v) in [(t[0], t[1]), (t[1], t[2]), (t[0], t[2])] {
            from_tris.insert((u.min(v), u.max(v)));
        }
    }
    if total != hull_area2(pts) {
        return Err(format!(
            "triangles cover {total}, hull is {}",
            hull_area2(pts)
        ));
    }
    if !tri.triangles.is_empty() && from_tris != tri.edges.iter().copied().collect() {
        return Err("edge list disagrees with triangles".into());
    }
    Ok(())
}

/// Graph on cells `(0, i)` with the given node kinds and weighted edges.
pub fn graph_from(kinds: &[NodeKind], edges: &[(usize, usize, i8)]) -> SpatialGraph {
    let nodes = kinds
        .iter()
        .enumerate()
        .map(|(id, &kind)| GraphNode {
            id,
            cell: Cell::new(0, id),
            kind,
            value: -1.0,
            anomalous: None,
        })
        .collect();
    let edges = edges
        .iter()
        .map(|&(u, v, weight)| GraphEdge {
            u,
            v,
            weight,
            distance: 1.0,
        })
        .collect();
    SpatialGraph::from_parts(nodes, edges, GraphParams::default()).unwrap()
}

/// Up to 12 nodes, random Source/Target labels, random edges and weights.
pub fn random_graph(rng: &mut impl Rng) -> SpatialGraph {
    let n = rng.random_range(2..=12);
    let kinds: Vec<NodeKind> = (0..n)
        .map(|_| {
            if rng.random_bool(0.6) {
                NodeKind::Source
            } else {
                NodeKind::Target
            }
        })
        .collect();
    let density = rng.random_range(0.15..0.7);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(density) {
                edges.push((u, v, if rng.random_bool(0.5) { 1 } else { -1 }));
            }
        }
    }
    graph_from(&kinds, &edges)
}

/// Exhaustive depth-first enumeration of simple Source-to-Target paths with at
/// most `max_len` nodes whose only Target is the last node.
pub fn dfs_paths(graph: &SpatialGraph, max_len: usize) -> BTreeSet<Vec<usize>> {
    fn walk(
        g: &SpatialGraph,
        path: &mut Vec<usize>,
        max_len: usize,
        out: &mut BTreeSet<Vec<usize>>,
    ) {
        let tail = *path.last().unwrap();
        if path.len() > 1 && g.nodes()[tail].kind == NodeKind::Target {
            out.insert(path.clone());
            return;
        }
        if path.len() == max_len {
            return;
        }
        for e in g.edges() {
            let next = if e.u == tail {
                e.v
            } else if e.v == tail {
                e.u
            } else {
                continue;
            };
            if !path.contains(&next) {
                path.push(next);
                walk(g, path, max_len, out);
                path.pop();
            }
        }
    }
    let mut out = BTreeSet::new();
    for node in graph.nodes() {
        if node.kind == NodeKind::Source {
            walk(graph, &mut vec![node.id], max_len, &mut out);
        }
    }
    out
}
