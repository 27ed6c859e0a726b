use proptest::prelude::*;
use spatial_link::aar::*;
use spatial_link::grid::{Cell, ChangeGrid, GridRegistration};
use spatial_link::pipeline::{analyze_aar, AarConfig};

fn degree_grid() -> GridRegistration {
    GridRegistration {
        lat0: 0.0,
        lon0: 0.0,
        dlat: 1.0,
        dlon: 1.0,
        cell_km: 111.11,
    }
}

fn point(lat: f64, lon: f64, row: usize, col: usize) -> GeoPoint {
    GeoPoint {
        lat,
        lon,
        cell: Cell::new(row, col),
        value: 1.0,
    }
}

fn mask_and_values(
    rows: usize,
    cols: usize,
    elevated: impl Fn(usize, usize) -> bool,
) -> (ChangeGrid, ChangeGrid) {
    let mut m = vec![0.0; rows * cols];
    let mut v = vec![0.1; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            if elevated(r, c) {
                m[r * cols + c] = 1.0;
                v[r * cols + c] = 2.0 + ((r * 7 + c * 3) % 5) as f64;
            }
        }
    }
    (
        ChangeGrid::from_values(rows, cols, m, degree_grid()).unwrap(),
        ChangeGrid::from_values(rows, cols, v, degree_grid()).unwrap(),
    )
}

#[test]
fn reference_distances() {
    assert!((equirect_km(45.0, 0.0, 45.0, 10.0) - 785.67).abs() <= 0.01);
    assert!((equirect_km(0.0, 0.0, 10.0, 0.0) - 1111.1).abs() <= 0.01);
    assert!((equirect_km(0.0, 179.5, 0.0, -179.5) - 111.11).abs() < 1e-9);
    assert_eq!(wrap_lon(180.0), -180.0);
}

#[test]
fn extent_filter_is_strict() {
    let meridian: Vec<GeoPoint> = (0..=20).map(|k| point(k as f64, 0.0, k, 0)).collect();
    let aar = build_aar_graph(meridian, 250.0).unwrap();
    let comps = connected_components(&aar, 2000.0);
    assert_eq!(comps.len(), 1);
    assert!((comps[0].extent_km - 2222.2).abs() < 1e-6);
    assert!(comps[0].retained);
    assert!(!connected_components(&aar, 2222.2)[0].retained);

    let parallel: Vec<GeoPoint> = (0..=10).map(|k| point(45.0, k as f64, 0, k)).collect();
    let comps = connected_components(&build_aar_graph(parallel, 250.0).unwrap(), 2000.0);
    assert!((comps[0].extent_km - 785.67).abs() <= 0.01);
    assert!(!comps[0].retained);
}

#[test]
fn station_snapping() {
    let pts = vec![point(10.0, 10.0, 10, 10), point(12.0, 10.0, 12, 10)];
    assert_eq!(snap_to_node(&pts, 10.5, 10.0, 150.0).unwrap(), 0);
    assert_eq!(snap_to_node(&pts, 11.0, 10.0, 150.0).unwrap(), 0);
    assert!(matches!(
        snap_to_node(&pts, 20.0, 10.0, 150.0),
        Err(AarError::StationUnreachable { .. })
    ));
}

#[test]
fn corridor_paths_are_significant() {
    let (mask, values) = mask_and_values(30, 20, |r, c| {
        (r <= 24 && (5..7).contains(&c)) || (r >= 27 && c >= 15)
    });
    let cfg = AarConfig {
        mask: "m".into(),
        values: "v".into(),
        origins: "o".into(),
        station: [8.0, 5.0],
        min_extent_km: DEFAULT_MIN_EXTENT_KM,
        max_edge_km: DEFAULT_MAX_EDGE_KM,
        snap_km: DEFAULT_SNAP_KM,
        alpha: DEFAULT_AAR_ALPHA,
        m: 999,
        seed: 3,
        max_len: 11,
        path_cap: 1_000_000,
    };
    let origins = [
        OriginSpec::Cell { row: 0, col: 5 },
        OriginSpec::LatLon {
            lat: 28.0,
            lon: 16.0,
        },
    ];
    let a = analyze_aar(&mask, &values, &origins, &cfg).unwrap();
    assert_eq!(a.components.len(), 2);
    assert_eq!(a.components.iter().filter(|c| c.retained).count(), 1);
    assert_eq!(a.graph.points[a.station].cell, Cell::new(8, 5));
    assert_eq!(a.origins.len(), 2);
    assert!(!a.paths.is_empty());
    for p in &a.paths {
        assert_eq!(p.cells[0], Cell::new(0, 5));
        assert_eq!(*p.cells.last().unwrap(), Cell::new(8, 5));
        assert_eq!(p.observed, 1.0);
        assert!(p.significant, "{p:?}");
    }
}

#[test]
fn too_few_points() {
    assert!(matches!(
        build_aar_graph(vec![point(0.0, 0.0, 0, 0)], 250.0),
        Err(AarError::TooFewPoints(1))
    ));
}

#[test]
fn mean_latitude_scaling_breaks_the_triangle_inequality() {
    let (a, b, c) = ((30.83, -13.09), (26.46, 0.0), (0.0, 44.19));
    let d = |p: (f64, f64), q: (f64, f64)| equirect_km(p.0, p.1, q.0, q.1);
    assert!(d(a, c) > d(a, b) + d(b, c));
}

proptest! {
    #[test]
    fn triangle_inequality_on_a_parallel(lat in -80.0f64..=80.0, l in prop::array::uniform3(-45.0f64..45.0)) {
        let d = |x: f64, y: f64| equirect_km(lat, x, lat, y);
        let (ab, bc, ac) = (d(l[0], l[1]), d(l[1], l[2]), d(l[0], l[2]));
        prop_assert!(ac <= (ab + bc) * (1.0 + 1e-9));
    }

    #[test]
    fn triangle_inequality_on_a_meridian(lon in -180.0f64..180.0, t in prop::array::uniform3(-80.0f64..=80.0)) {
        let d = |x: f64, y: f64| equirect_km(x, lon, y, lon);
        let (ab, bc, ac) = (d(t[0], t[1]), d(t[1], t[2]), d(t[0], t[2]));
        prop_assert!(ac <= (ab + bc) * (1.0 + 1e-9));
    }

    #[test]
    fn near_metric_at_edge_scale(
        lat in -78.0f64..=78.0,
        lon in -180.0f64..180.0,
        off in prop::array::uniform6(-1.0f64..=1.0),
    ) {
        let p = |k: usize| (lat + off[2 * k], lon + off[2 * k + 1]);
        let d = |x: (f64, f64), y: (f64, f64)| equirect_km(x.0, x.1, y.0, y.1);
        let (ab, bc, ac) = (d(p(0), p(1)), d(p(1), p(2)), d(p(0), p(2)));
        prop_assert!(ac <= (ab + bc) * (1.0 + 1e-3), "{ac} > {ab} + {bc}");
    }

    #[test]
    fn components_partition_and_split_monotone(
        cells in prop::collection::btree_set((0usize..40, 0usize..40), 2..120),
        cut in 100.0f64..400.0,
    ) {
        let reg = GridRegistration { lat0: -10.0, lon0: 0.0, dlat: 1.0, dlon: 1.0, cell_km: 111.11 };
        let pts: Vec<GeoPoint> = cells.iter().map(|&(r, c)| GeoPoint::at(&reg, Cell::new(r, c), 1.0)).collect();
        let wide = build_aar_graph(pts.clone(), cut).unwrap();
        let comps = connected_components(&wide, 2000.0);
        let mut seen = vec![false; pts.len()];
        for comp in &comps {
            prop_assert_eq!(comp.retained, comp.extent_km > 2000.0);
            for &n in &comp.nodes {
                prop_assert!(!seen[n]);
                seen[n] = true;
                for &(m, _) in wide.graph.neighbors(n) {
                    prop_assert!(comp.nodes.binary_search(&m).is_ok());
                }
            }
        }
        prop_assert!(seen.iter().all(|&s| s));

        // fewer edges can only split components, never lengthen them
        let narrow = build_aar_graph(pts, cut * 0.6).unwrap();
        let owner: Vec<usize> = {
            let mut o = vec![0; seen.len()];
            for (k, comp) in comps.iter().enumerate() {
                for &n in &comp.nodes { o[n] = k; }
            }
            o
        };
        for comp in connected_components(&narrow, 2000.0) {
            let parent = &comps[owner[comp.nodes[0]]];
            prop_assert!(comp.nodes.iter().all(|n| parent.nodes.binary_search(n).is_ok()));
            prop_assert!(comp.extent_km <= parent.extent_km + 1e-9);
        }
    }
}
