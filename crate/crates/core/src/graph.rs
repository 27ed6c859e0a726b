//! Proximity graph over qualifying cells.
//!
//! Nodes are the union of Source and Target cells, ordered by `(row, col)`.
//! Candidate edges come from one Delaunay triangulation over all nodes and are
//! kept when no longer than `dmax` grid cells. Each surviving edge is weighted
//! +1 when its endpoints agree in sign and -1 otherwise.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::delaunay::{self, DelaunayError};
use crate::grid::{
    Band, Cell, CellKind, CellSet, ChangeGrid, ChangeOrientation, RegionWindow, ThresholdBands,
};

pub const DEFAULT_DMAX: f64 = 11.0;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("no {kind:?} cells qualify; the graph needs at least one Source and one Target cell")]
    EmptySide { kind: CellKind },
    #[error("anomaly mask is {mask_rows}x{mask_cols} but the grids are {rows}x{cols}")]
    MaskDimMismatch {
        mask_rows: usize,
        mask_cols: usize,
        rows: usize,
        cols: usize,
    },
    #[error(transparent)]
    Delaunay(#[from] DelaunayError),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMetric {
    #[default]
    Euclidean,
    Chebyshev,
}

impl DistanceMetric {
    pub fn distance(self, a: Cell, b: Cell) -> f64 {
        match self {
            DistanceMetric::Euclidean => a.euclidean(b),
            DistanceMetric::Chebyshev => a.chebyshev(b),
        }
    }
}

impl FromStr for DistanceMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "euclidean" => Ok(Self::Euclidean),
            "chebyshev" => Ok(Self::Chebyshev),
            other => Err(format!("unknown metric `{other}` (euclidean|chebyshev)")),
        }
    }
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Euclidean => "euclidean",
            Self::Chebyshev => "chebyshev",
        })
    }
}

/// Edge weighting rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    #[default]
    Standard,
    Cmad,
    Aar,
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "standard" => Ok(Self::Standard),
            "cmad" => Ok(Self::Cmad),
            "aar" => Ok(Self::Aar),
            other => Err(format!("unknown variant `{other}`")),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Standard => "standard",
            Self::Cmad => "cmad",
            Self::Aar => "aar",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    Source,
    Target,
    /// Benchmark-mode node with no Source/Target role.
    Point,
}

impl From<CellKind> for NodeKind {
    fn from(k: CellKind) -> Self {
        match k {
            CellKind::Source => NodeKind::Source,
            CellKind::Target => NodeKind::Target,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: usize,
    pub cell: Cell,
    pub kind: NodeKind,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anomalous: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub u: usize,
    pub v: usize,
    pub weight: i8,
    pub distance: f64,
}

/// Construction parameters carried with a graph so later stages can
/// recompute weights consistently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphParams {
    pub dmax: f64,
    #[serde(default)]
    pub metric: DistanceMetric,
    #[serde(default)]
    pub variant: Variant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band_source: Option<Band>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band_target: Option<Band>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bands_source: Option<ThresholdBands>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bands_target: Option<ThresholdBands>,
    #[serde(default)]
    pub orientation_source: ChangeOrientation,
    #[serde(default)]
    pub orientation_target: ChangeOrientation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<RegionWindow>,
    /// Benchmark mode: values at or above this count as elevated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elevation_threshold: Option<f64>,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self {
            dmax: DEFAULT_DMAX,
            metric: DistanceMetric::Euclidean,
            variant: Variant::Standard,
            band_source: None,
            band_target: None,
            bands_source: None,
            bands_target: None,
            orientation_source: ChangeOrientation::LossNegative,
            orientation_target: ChangeOrientation::LossNegative,
            window: None,
            elevation_threshold: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGraph {
    nodes: Vec<GraphNode>,
    edges: Vec<GraphEdge>,
    // sorted (neighbor, weight) pairs per node
    adjacency: Vec<Vec<(usize, i8)>>,
    pub params: GraphParams,
}

impl SpatialGraph {
    /// Assembles a graph, checking ids, self-loops, parallel edges and weights.
    /// Edges are normalised to `u < v` and sorted.
    pub fn from_parts(
        nodes: Vec<GraphNode>,
        mut edges: Vec<GraphEdge>,
        params: GraphParams,
    ) -> Result<Self, GraphError> {
        let n = nodes.len();
        for (i, node) in nodes.iter().enumerate() {
            if node.id != i {
                return Err(GraphError::InvalidGraph(format!(
                    "node at position {i} has id {}",
                    node.id
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for node in &nodes {
            if !seen.insert(node.cell) {
                return Err(GraphError::InvalidGraph(format!(
                    "cell {} appears on more than one node",
                    node.cell
                )));
            }
        }
        for e in edges.iter_mut() {
            if e.u >= n || e.v >= n {
                return Err(GraphError::InvalidGraph(format!(
                    "edge ({}, {}) references a missing node",
                    e.u, e.v
                )));
            }
            if e.u == e.v {
                return Err(GraphError::InvalidGraph(format!(
                    "self-loop at node {}",
                    e.u
                )));
            }
            if e.weight != 1 && e.weight != -1 {
                return Err(GraphError::InvalidGraph(format!(
                    "edge ({}, {}) has weight {}",
                    e.u, e.v, e.weight
                )));
            }
            if e.u > e.v {
                std::mem::swap(&mut e.u, &mut e.v);
            }
        }
        edges.sort_by_key(|e| (e.u, e.v));
        if let Some(w) = edges
            .windows(2)
            .find(|w| (w[0].u, w[0].v) == (w[1].u, w[1].v))
        {
            return Err(GraphError::InvalidGraph(format!(
                "parallel edges between {} and {}",
                w[0].u, w[0].v
            )));
        }
        let mut adjacency = vec![Vec::new(); n];
        for e in &edges {
            adjacency[e.u].push((e.v, e.weight));
            adjacency[e.v].push((e.u, e.weight));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self {
            nodes,
            edges,
            adjacency,
            params,
        })
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[GraphEdge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Neighbours of `node` with edge weights, ascending by id.
    pub fn neighbors(&self, node: usize) -> &[(usize, i8)] {
        &self.adjacency[node]
    }

    pub fn weight(&self, u: usize, v: usize) -> Option<i8> {
        let list = &self.adjacency[u];
        list.binary_search_by_key(&v, |&(n, _)| n)
            .ok()
            .map(|i| list[i].1)
    }

    pub fn node_at(&self, cell: Cell) -> Option<usize> {
        self.nodes.iter().position(|n| n.cell == cell)
    }

    /// Subgraph on the nodes flagged in `keep`, renumbered in order. Also
    /// returns the original id of each new node.
    pub fn induced_subgraph(&self, keep: &[bool]) -> (SpatialGraph, Vec<usize>) {
        let mut new_id = vec![usize::MAX; self.nodes.len()];
        let mut old_ids = Vec::new();
        let mut nodes = Vec::new();
        for node in &self.nodes {
            if keep[node.id] {
                new_id[node.id] = nodes.len();
                old_ids.push(node.id);
                nodes.push(GraphNode {
                    id: nodes.len(),
                    ..*node
                });
            }
        }
        let edges = self
            .edges
            .iter()
            .filter(|e| keep[e.u] && keep[e.v])
            .map(|e| GraphEdge {
                u: new_id[e.u],
                v: new_id[e.v],
                ..*e
            })
            .collect();
        let graph = SpatialGraph::from_parts(nodes, edges, self.params.clone())
            .expect("subgraph of a valid graph is valid");
        (graph, old_ids)
    }
}

/// Nodes and distance-filtered Delaunay edges before weighting.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphDraft {
    pub nodes: Vec<GraphNode>,
    /// `(u, v, distance)` with `u < v`, sorted.
    pub edges: Vec<(usize, usize, f64)>,
    pub dmax: f64,
    pub metric: DistanceMetric,
}

/// Keeps the edges whose endpoint distance is at most `dmax`.
pub fn filter_edges_by_distance(
    edges: &[(usize, usize)],
    points: &[Cell],
    dmax: f64,
    metric: DistanceMetric,
) -> Vec<(usize, usize)> {
    edges
        .iter()
        .copied()
        .filter(|&(u, v)| metric.distance(points[u], points[v]) <= dmax)
        .collect()
}

/// +1 when both values are non-zero with the same sign, -1 otherwise.
pub fn sign_weight(a: f64, b: f64) -> i8 {
    if (a > 0.0 && b > 0.0) || (a < 0.0 && b < 0.0) {
        1
    } else {
        -1
    }
}

/// Merges the two cell sets into nodes sorted by cell. A cell in both sets
/// becomes a Target node.
pub fn nodes_from_cell_sets(source: &CellSet, target: &CellSet) -> Vec<GraphNode> {
    let mut by_cell: BTreeMap<Cell, (NodeKind, f64)> = BTreeMap::new();
    for c in &source.cells {
        by_cell.insert(c.cell, (NodeKind::from(source.kind), c.value));
    }
    for c in &target.cells {
        by_cell.insert(c.cell, (NodeKind::from(target.kind), c.value));
    }
    by_cell
        .into_iter()
        .enumerate()
        .map(|(id, (cell, (kind, value)))| GraphNode {
            id,
            cell,
            kind,
            value,
            anomalous: None,
        })
        .collect()
}

/// Triangulates `nodes` (which must be sorted by cell with dense ids) and
/// drops edges longer than `dmax`.
pub fn draft_graph(
    nodes: Vec<GraphNode>,
    dmax: f64,
    metric: DistanceMetric,
) -> Result<GraphDraft, GraphError> {
    let cells: Vec<Cell> = nodes.iter().map(|n| n.cell).collect();
    let edges = if cells.len() < 2 {
        Vec::new()
    } else {
        let points: Vec<(i64, i64)> = cells.iter().map(|c| (c.row as i64, c.col as i64)).collect();
        let tri = delaunay::delaunay_edges(&points)?;
        filter_edges_by_distance(&tri, &cells, dmax, metric)
    };
    let edges = edges
        .into_iter()
        .map(|(u, v)| (u, v, metric.distance(cells[u], cells[v])))
        .collect();
    Ok(GraphDraft {
        nodes,
        edges,
        dmax,
        metric,
    })
}

fn node_grid_value(node: &GraphNode, source: &ChangeGrid, target: &ChangeGrid) -> Option<f64> {
    let grid = match node.kind {
        NodeKind::Target => target,
        _ => source,
    };
    grid.get(node.cell).filter(|_| grid.is_valid(node.cell))
}

/// Admits the draft edges whose endpoints each pass their own field's band
/// filter and weights them by sign agreement.
#[allow(clippy::too_many_arguments)]
pub fn assign_edge_weights(
    draft: GraphDraft,
    source: &ChangeGrid,
    target: &ChangeGrid,
    bands_source: &ThresholdBands,
    bands_target: &ThresholdBands,
    band_source: Band,
    band_target: Band,
    mut params: GraphParams,
) -> SpatialGraph {
    let passes = |node: &GraphNode| -> Option<f64> {
        let value = node_grid_value(node, source, target)?;
        let ok = match node.kind {
            NodeKind::Target => bands_target.passes(value, band_target),
            _ => bands_source.passes(value, band_source),
        };
        ok.then_some(value)
    };
    let admitted: Vec<Option<f64>> = draft.nodes.par_iter().map(passes).collect();
    let edges = draft
        .edges
        .iter()
        .filter_map(|&(u, v, distance)| {
            let (a, b) = (admitted[u]?, admitted[v]?);
            Some(GraphEdge {
                u,
                v,
                weight: sign_weight(a, b),
                distance,
            })
        })
        .collect();
    params.dmax = draft.dmax;
    params.metric = draft.metric;
    params.variant = Variant::Standard;
    params.band_source = Some(band_source);
    params.band_target = Some(band_target);
    params.bands_source = Some(*bands_source);
    params.bands_target = Some(*bands_target);
    SpatialGraph::from_parts(draft.nodes, edges, params).expect("draft edges are valid")
}

/// Weighting from a binary anomaly mask over the source field: +1 iff every
/// Source endpoint is anomalous and every Target endpoint passes the target
/// band, -1 otherwise.
pub fn assign_edge_weights_cmad(
    mut draft: GraphDraft,
    anomaly_mask: &ChangeGrid,
    target: &ChangeGrid,
    bands_target: &ThresholdBands,
    band_target: Band,
    mut params: GraphParams,
) -> Result<SpatialGraph, GraphError> {
    if !anomaly_mask.same_shape(target) {
        return Err(GraphError::MaskDimMismatch {
            mask_rows: anomaly_mask.rows(),
            mask_cols: anomaly_mask.cols(),
            rows: target.rows(),
            cols: target.cols(),
        });
    }
    for node in &mut draft.nodes {
        if node.kind == NodeKind::Source {
            node.anomalous = Some(mask_bit(anomaly_mask, node.cell));
        }
    }
    let endpoint_ok = |node: &GraphNode| match node.kind {
        NodeKind::Target => target
            .get(node.cell)
            .is_some_and(|v| target.is_valid(node.cell) && bands_target.passes(v, band_target)),
        _ => node.anomalous == Some(true),
    };
    let edges = draft
        .edges
        .iter()
        .map(|&(u, v, distance)| {
            let ok = endpoint_ok(&draft.nodes[u]) && endpoint_ok(&draft.nodes[v]);
            GraphEdge {
                u,
                v,
                weight: if ok { 1 } else { -1 },
                distance,
            }
        })
        .collect();
    params.dmax = draft.dmax;
    params.metric = draft.metric;
    params.variant = Variant::Cmad;
    params.band_target = Some(band_target);
    params.bands_target = Some(*bands_target);
    SpatialGraph::from_parts(draft.nodes, edges, params)
}

/// Mask cells count as anomalous when valid and non-zero.
pub fn mask_bit(mask: &ChangeGrid, cell: Cell) -> bool {
    mask.is_valid(cell) && mask.get(cell).is_some_and(|v| v != 0.0)
}

/// Triangulates the union of both cell sets, filters by distance and weights
/// edges by sign agreement of the node values.
pub fn build_graph(
    source: &CellSet,
    target: &CellSet,
    params: &GraphParams,
) -> Result<SpatialGraph, GraphError> {
    for set in [source, target] {
        if set.is_empty() {
            return Err(GraphError::EmptySide { kind: set.kind });
        }
    }
    let nodes = nodes_from_cell_sets(source, target);
    let draft = draft_graph(nodes, params.dmax, params.metric)?;
    let edges = draft
        .edges
        .iter()
        .map(|&(u, v, distance)| GraphEdge {
            u,
            v,
            weight: sign_weight(draft.nodes[u].value, draft.nodes[v].value),
            distance,
        })
        .collect();
    let mut params = params.clone();
    params.band_source.get_or_insert(source.band);
    params.band_target.get_or_insert(target.band);
    SpatialGraph::from_parts(draft.nodes, edges, params)
}
