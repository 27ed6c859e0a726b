//! Aerosol transport benchmark.
//!
//! Elevated cells are triangulated, edges longer than `max_edge_km` are cut,
//! and connected components longer than `min_extent_km` are kept. Paths from
//! origin nodes to a station node inside those components are tested with the
//! permutation null, where an edge counts as positive when both endpoint values
//! stay at or above the elevation threshold.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::delaunay::{self, DelaunayError};
use crate::graph::{GraphEdge, GraphNode, GraphParams, NodeKind, SpatialGraph, Variant};
use crate::grid::{Cell, ChangeGrid, GridRegistration};
use crate::paths::{extract_paths_between, LinkagePath, PathError};
use crate::significance::{
    evaluate_paths, NullFields, PathGeometry, Side, SignificanceConfig, SignificanceError,
    WeightRule,
};

pub const KM_PER_DEGREE: f64 = 111.11;
pub const DEFAULT_MIN_EXTENT_KM: f64 = 2000.0;
pub const DEFAULT_MAX_EDGE_KM: f64 = 250.0;
pub const DEFAULT_SNAP_KM: f64 = 150.0;
pub const DEFAULT_AAR_ALPHA: f64 = 0.005;

#[derive(Debug, Error)]
pub enum AarError {
    #[error("the aerosol graph needs at least 2 elevated points, got {0}")]
    TooFewPoints(usize),
    #[error(transparent)]
    Delaunay(#[from] DelaunayError),
    #[error(
        "no graph node within {radius_km} km of ({lat}, {lon}); nearest is {nearest_km:.1} km away"
    )]
    StationUnreachable {
        lat: f64,
        lon: f64,
        radius_km: f64,
        nearest_km: f64,
    },
    #[error("none of the {given} origins lies within {radius_km} km of a graph node")]
    NoOrigins { given: usize, radius_km: f64 },
    #[error("mask and value grids differ: {0}")]
    GridMismatch(String),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Significance(#[from] SignificanceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
    pub cell: Cell,
    pub value: f64,
}

impl GeoPoint {
    pub fn at(registration: &GridRegistration, cell: Cell, value: f64) -> GeoPoint {
        GeoPoint {
            lat: registration.latitude(cell.row),
            lon: wrap_lon(registration.longitude(cell.col)),
            cell,
            value,
        }
    }
}

/// Longitude folded into `[-180, 180)`.
pub fn wrap_lon(lon: f64) -> f64 {
    (lon + 180.0).rem_euclid(360.0) - 180.0
}

/// Flat-earth distance in km: 111.11 km per degree with the longitude
/// difference scaled by the cosine of the mean latitude.
pub fn equirect_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let dlat = lat2 - lat1;
    let dlon = wrap_lon(lon2 - lon1);
    let mean_lat = ((lat1 + lat2) / 2.0).to_radians();
    KM_PER_DEGREE * (dlat * dlat + (dlon * mean_lat.cos()).powi(2)).sqrt()
}

pub fn equirect_distance(a: &GeoPoint, b: &GeoPoint) -> f64 {
    equirect_km(a.lat, a.lon, b.lat, b.lon)
}

/// Elevated points: cells set in `mask` that are valid in `values`, in
/// row-major order.
pub fn elevated_points(mask: &ChangeGrid, values: &ChangeGrid) -> Result<Vec<GeoPoint>, AarError> {
    if !mask.same_shape(values) {
        return Err(AarError::GridMismatch(format!(
            "mask is {}x{}, values are {}x{}",
            mask.rows(),
            mask.cols(),
            values.rows(),
            values.cols()
        )));
    }
    let reg = values.registration();
    Ok((0..mask.len())
        .filter(|&i| mask.valid_mask()[i] && mask.values()[i] != 0.0 && values.valid_mask()[i])
        .map(|i| GeoPoint::at(reg, values.cell_of(i), values.values()[i]))
        .collect())
}

/// Graph over elevated points; node `i` is `points[i]`.
#[derive(Debug, Clone)]
pub struct AarGraph {
    pub graph: SpatialGraph,
    pub points: Vec<GeoPoint>,
}

/// Delaunay graph over `points` without edges longer than `max_edge_km`.
/// Points are reordered by cell.
pub fn build_aar_graph(mut points: Vec<GeoPoint>, max_edge_km: f64) -> Result<AarGraph, AarError> {
    if points.len() < 2 {
        return Err(AarError::TooFewPoints(points.len()));
    }
    points.sort_by_key(|p| p.cell);
    let lattice: Vec<(i64, i64)> = points
        .iter()
        .map(|p| (p.cell.row as i64, p.cell.col as i64))
        .collect();
    let tri = delaunay::delaunay_edges(&lattice)?;
    let edges: Vec<GraphEdge> = tri
        .into_iter()
        .filter_map(|(u, v)| {
            let d = equirect_distance(&points[u], &points[v]);
            (d <= max_edge_km).then_some(GraphEdge {
                u,
                v,
                weight: 1,
                distance: d,
            })
        })
        .collect();
    let threshold = points.iter().map(|p| p.value).fold(f64::INFINITY, f64::min);
    let nodes = points
        .iter()
        .enumerate()
        .map(|(id, p)| GraphNode {
            id,
            cell: p.cell,
            kind: NodeKind::Point,
            value: p.value,
            anomalous: None,
        })
        .collect();
    let params = GraphParams {
        dmax: max_edge_km,
        variant: Variant::Aar,
        elevation_threshold: Some(threshold),
        ..GraphParams::default()
    };
    let graph = SpatialGraph::from_parts(nodes, edges, params)
        .map_err(|e| AarError::GridMismatch(e.to_string()))?;
    Ok(AarGraph { graph, points })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AarComponent {
    pub nodes: Vec<usize>,
    pub extent_km: f64,
    pub retained: bool,
}

/// Largest pairwise distance between component nodes, 0 for a singleton.
pub fn component_extent(nodes: &[usize], points: &[GeoPoint]) -> f64 {
    let mut best = 0.0f64;
    for (k, &a) in nodes.iter().enumerate() {
        for &b in &nodes[k + 1..] {
            best = best.max(equirect_distance(&points[a], &points[b]));
        }
    }
    best
}

/// Connected components, ordered by their smallest node id. A component is
/// retained when its extent is strictly above `min_extent_km`.
pub fn connected_components(aar: &AarGraph, min_extent_km: f64) -> Vec<AarComponent> {
    let n = aar.graph.node_count();
    let mut label = vec![usize::MAX; n];
    let mut out = Vec::new();
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut stack = vec![start];
        let mut nodes = Vec::new();
        label[start] = id;
        while let Some(x) = stack.pop() {
            nodes.push(x);
            for &(y, _) in aar.graph.neighbors(x) {
                if label[y] == usize::MAX {
                    label[y] = id;
                    stack.push(y);
                }
            }
        }
        nodes.sort_unstable();
        let extent_km = component_extent(&nodes, &aar.points);
        out.push(AarComponent {
            nodes,
            extent_km,
            retained: extent_km > min_extent_km,
        });
    }
    out
}

/// Nearest node to `(lat, lon)` within `radius_km`; ties go to the lower id.
pub fn snap_to_node(
    points: &[GeoPoint],
    lat: f64,
    lon: f64,
    radius_km: f64,
) -> Result<usize, AarError> {
    let mut best: Option<(f64, usize)> = None;
    for (i, p) in points.iter().enumerate() {
        let d = equirect_km(lat, lon, p.lat, p.lon);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, i));
        }
    }
    match best {
        Some((d, i)) if d <= radius_km => Ok(i),
        _ => Err(AarError::StationUnreachable {
            lat,
            lon,
            radius_km,
            nearest_km: best.map_or(f64::INFINITY, |b| b.0),
        }),
    }
}

/// An origin given either as a grid cell or as a geographic position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OriginSpec {
    Cell { row: usize, col: usize },
    LatLon { lat: f64, lon: f64 },
}

/// Maps origins to node ids. Cells that are nodes map directly; everything
/// else snaps to the nearest node within `radius_km` or is dropped.
pub fn resolve_origins(
    aar: &AarGraph,
    registration: &GridRegistration,
    origins: &[OriginSpec],
    radius_km: f64,
) -> Result<Vec<usize>, AarError> {
    let mut ids: Vec<usize> = origins
        .iter()
        .filter_map(|o| match *o {
            OriginSpec::Cell { row, col } => {
                let cell = Cell::new(row, col);
                aar.graph.node_at(cell).or_else(|| {
                    let lat = registration.latitude(row);
                    let lon = wrap_lon(registration.longitude(col));
                    snap_to_node(&aar.points, lat, lon, radius_km).ok()
                })
            }
            OriginSpec::LatLon { lat, lon } => snap_to_node(&aar.points, lat, lon, radius_km).ok(),
        })
        .collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.is_empty() {
        return Err(AarError::NoOrigins {
            given: origins.len(),
            radius_km,
        });
    }
    Ok(ids)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationParams {
    pub max_len: usize,
    pub cap: usize,
    pub m: usize,
    pub alpha: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationPath {
    pub nodes: Vec<usize>,
    pub cells: Vec<Cell>,
    pub observed: f64,
    pub p_value: f64,
    pub significant: bool,
}

/// Tests every origin-to-station path inside the retained component holding
/// the station. Paths are empty when the station's component is not retained
/// or holds no origin.
pub fn station_path_significance(
    aar: &AarGraph,
    components: &[AarComponent],
    origins: &[usize],
    station: usize,
    values: &ChangeGrid,
    params: &StationParams,
) -> Result<Vec<StationPath>, AarError> {
    let Some(home) = components
        .iter()
        .find(|c| c.retained && c.nodes.binary_search(&station).is_ok())
    else {
        return Ok(Vec::new());
    };
    let mut keep = vec![false; aar.graph.node_count()];
    for &n in &home.nodes {
        keep[n] = true;
    }
    let (sub, old_ids) = aar.graph.induced_subgraph(&keep);
    let new_id = |old: usize| old_ids.binary_search(&old).ok();
    let sources: Vec<usize> = origins
        .iter()
        .filter(|&&o| o != station)
        .filter_map(|&o| new_id(o))
        .collect();
    if sources.is_empty() {
        return Ok(Vec::new());
    }
    let mut targets = vec![false; sub.node_count()];
    targets[new_id(station).expect("station is in its component")] = true;
    let paths: Vec<LinkagePath> =
        extract_paths_between(&sub, &sources, &targets, params.max_len, params.cap)?;

    let threshold = aar
        .graph
        .params
        .elevation_threshold
        .unwrap_or(f64::NEG_INFINITY);
    let geometries: Vec<PathGeometry> = paths
        .iter()
        .map(|p| {
            p.nodes
                .iter()
                .map(|&n| (Side::Source, sub.nodes()[n].cell))
                .collect()
        })
        .collect();
    let observed: Vec<f64> = paths.iter().map(|p| p.score()).collect();
    let fields = NullFields {
        source: values,
        target: values,
        window: values.window(),
        rule: WeightRule::Elevated { threshold },
    };
    let config = SignificanceConfig {
        m: params.m,
        alpha: params.alpha,
        seed: params.seed,
        shared_null: false,
        bh: false,
    };
    let results = evaluate_paths(&geometries, &observed, &fields, &config)?;
    Ok(paths
        .iter()
        .zip(results)
        .map(|(p, r)| {
            let nodes: Vec<usize> = p.nodes.iter().map(|&n| old_ids[n]).collect();
            StationPath {
                cells: nodes.iter().map(|&n| aar.points[n].cell).collect(),
                nodes,
                observed: r.observed,
                p_value: r.p_value,
                significant: r.significant,
            }
        })
        .collect())
}
