mod common;

use std::collections::BTreeSet;

use common::check_delaunay;
use proptest::prelude::*;
use spatial_link::delaunay::delaunay_edges;
use spatial_link::graph::*;
use spatial_link::grid::{Band, Cell, CellKind, CellSet, ClassifiedCell};

fn point_set(max: usize, span: i64) -> impl Strategy<Value = Vec<(i64, i64)>> {
    prop::collection::btree_set((0..span, 0..span), 3..=max).prop_map(|s| s.into_iter().collect())
}

fn cell_set(kind: CellKind, cells: &[(Cell, f64)]) -> CellSet {
    CellSet {
        kind,
        band: Band::Moderate,
        cells: cells
            .iter()
            .map(|&(cell, value)| ClassifiedCell { cell, value })
            .collect(),
    }
}

type Labelled = Vec<(Cell, f64)>;

fn labelled_cells() -> impl Strategy<Value = (Labelled, Labelled)> {
    prop::collection::btree_map(
        (0usize..25, 0usize..25),
        (any::<bool>(), -1.0f64..1.0),
        2..60,
    )
    .prop_filter("both sides present", |m| {
        m.values().any(|v| v.0) && m.values().any(|v| !v.0)
    })
    .prop_map(|m| {
        let (mut s, mut t) = (Vec::new(), Vec::new());
        for ((r, c), (is_target, v)) in m {
            let v = if v == 0.0 { 0.5 } else { v };
            if is_target {
                t.push((Cell::new(r, c), v))
            } else {
                s.push((Cell::new(r, c), v))
            }
        }
        (s, t)
    })
}

#[test]
fn lattice_is_deterministic_and_input_order_free() {
    let pts: Vec<(i64, i64)> = (0..12).flat_map(|r| (0..15).map(move |c| (r, c))).collect();
    let first = delaunay_edges(&pts).unwrap();
    for _ in 0..5 {
        assert_eq!(delaunay_edges(&pts).unwrap(), first);
    }
    let mut rev = pts.clone();
    rev.reverse();
    let n = pts.len();
    let mapped: BTreeSet<(usize, usize)> = delaunay_edges(&rev)
        .unwrap()
        .into_iter()
        .map(|(u, v)| ((n - 1 - u).min(n - 1 - v), (n - 1 - u).max(n - 1 - v)))
        .collect();
    assert_eq!(mapped, first.into_iter().collect());
    check_delaunay(&pts).unwrap();
}

#[test]
fn distance_filter_examples() {
    let pts = [
        Cell::new(10, 10),
        Cell::new(10, 21),
        Cell::new(0, 0),
        Cell::new(8, 8),
    ];
    let kept = filter_edges_by_distance(&[(0, 1), (2, 3)], &pts, 11.0, DistanceMetric::Euclidean);
    assert_eq!(kept, vec![(0, 1)]);
}

#[test]
fn empty_side_is_an_error() {
    let s = cell_set(CellKind::Source, &[(Cell::new(0, 0), -1.0)]);
    let t = cell_set(CellKind::Target, &[]);
    assert!(matches!(
        build_graph(&s, &t, &GraphParams::default()),
        Err(GraphError::EmptySide {
            kind: CellKind::Target
        })
    ));
}

#[test]
fn shared_cell_becomes_target() {
    let s = cell_set(
        CellKind::Source,
        &[(Cell::new(0, 0), -1.0), (Cell::new(0, 1), -1.0)],
    );
    let t = cell_set(CellKind::Target, &[(Cell::new(0, 1), -2.0)]);
    let g = build_graph(&s, &t, &GraphParams::default()).unwrap();
    assert_eq!(g.node_count(), 2);
    assert_eq!(g.nodes()[1].kind, NodeKind::Target);
    assert_eq!(g.nodes()[1].value, -2.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn delaunay_empty_circumcircle(pts in point_set(50, 40)) {
        prop_assert_eq!(check_delaunay(&pts), Ok(()));
    }

    #[test]
    fn delaunay_on_small_lattice_subsets(pts in point_set(30, 6)) {
        prop_assert_eq!(check_delaunay(&pts), Ok(()));
    }

    #[test]
    fn distance_filter_subset(
        pts in prop::collection::vec((0usize..40, 0usize..40), 2..30),
        dmax in 0.5f64..20.0,
        cheb in any::<bool>(),
    ) {
        let metric = if cheb { DistanceMetric::Chebyshev } else { DistanceMetric::Euclidean };
        let cells: Vec<Cell> = pts.iter().map(|&(r, c)| Cell::new(r, c)).collect();
        let edges: Vec<(usize, usize)> = (0..cells.len())
            .flat_map(|u| (u + 1..cells.len()).map(move |v| (u, v)))
            .collect();
        let kept = filter_edges_by_distance(&edges, &cells, dmax, metric);
        let kept_set: BTreeSet<_> = kept.iter().copied().collect();
        for &(u, v) in &edges {
            let (a, b) = (cells[u], cells[v]);
            let (dr, dc) = (a.row.abs_diff(b.row) as f64, a.col.abs_diff(b.col) as f64);
            let d = if cheb { dr.max(dc) } else { (dr * dr + dc * dc).sqrt() };
            prop_assert_eq!(kept_set.contains(&(u, v)), d <= dmax);
        }
        prop_assert!(kept.iter().all(|e| edges.contains(e)));
    }

    #[test]
    fn weights_total_and_sign_symmetric((s, t) in labelled_cells()) {
        let params = GraphParams::default();
        let g = build_graph(&cell_set(CellKind::Source, &s), &cell_set(CellKind::Target, &t), &params).unwrap();
        let flip = |v: &[(Cell, f64)]| v.iter().map(|&(c, x)| (c, -x)).collect::<Vec<_>>();
        let h = build_graph(&cell_set(CellKind::Source, &flip(&s)), &cell_set(CellKind::Target, &flip(&t)), &params).unwrap();
        prop_assert_eq!(g.edge_count(), h.edge_count());
        for (e, f) in g.edges().iter().zip(h.edges()) {
            prop_assert!(e.weight == 1 || e.weight == -1);
            prop_assert_eq!((e.u, e.v, e.weight), (f.u, f.v, f.weight));
            prop_assert!(e.u < e.v && e.distance <= params.dmax);
        }
        for u in 0..g.node_count() {
            for &(v, w) in g.neighbors(u) {
                prop_assert_eq!(g.weight(v, u), Some(w));
            }
        }
    }

    #[test]
    fn graph_identical_across_thread_counts((s, t) in labelled_cells()) {
        let (s, t) = (cell_set(CellKind::Source, &s), cell_set(CellKind::Target, &t));
        let build = |n: usize| {
            rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap()
                .install(|| build_graph(&s, &t, &GraphParams::default()).unwrap())
        };
        let one = build(1);
        let four = build(4);
        prop_assert_eq!(one.edges(), four.edges());
        prop_assert_eq!(one.nodes(), four.nodes());
    }
}
