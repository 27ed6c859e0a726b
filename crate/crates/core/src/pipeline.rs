//! End-to-end runs: configuration, orchestration and on-disk artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::aar::{self, AarComponent, OriginSpec, StationParams, StationPath};
use crate::graph::{
    assign_edge_weights_cmad, build_graph, draft_graph, nodes_from_cell_sets, DistanceMetric,
    GraphEdge, GraphError, GraphNode, GraphParams, NodeKind, SpatialGraph, Variant, DEFAULT_DMAX,
};
use crate::grid::{
    classify_cells, compute_threshold_bands_in, Band, Cell, CellKind, CellSet, ChangeGrid,
    ChangeOrientation, GridError, GridRegistration, RegionWindow, ThresholdBands,
    DEFAULT_UB_MULTIPLIER,
};
use crate::io::load_grid_auto;
use crate::paths::{
    extract_all_paths, linkage_frequency, LinkagePath, DEFAULT_MAX_LEN, DEFAULT_PATH_CAP,
};
use crate::significance::{
    evaluate_paths, path_geometry, NullFields, SignificanceConfig, SignificanceResult, WeightRule,
    DEFAULT_ALPHA, DEFAULT_M, DEFAULT_SEED, NULL_MODEL,
};
use crate::VERSION;

pub const TOOL: &str = "spatial-link";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("i/o error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("could not parse {path}: {message}")]
    Parse { path: String, message: String },
}

fn io_err(path: &Path, source: std::io::Error) -> ConfigError {
    ConfigError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, message: impl ToString) -> ConfigError {
    ConfigError::Parse {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

/// Where band quantiles are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandScope {
    #[default]
    Window,
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
    /// Binary anomaly mask over the source field (CMAD variant).
    pub mask: Option<PathBuf>,
    pub orientation_source: ChangeOrientation,
    pub orientation_target: ChangeOrientation,
    pub window: Option<RegionWindow>,
    pub band_scope: BandScope,
    pub ub_multiplier: f64,
    pub band_source: Band,
    pub band_target: Band,
    pub dmax: f64,
    pub metric: DistanceMetric,
    pub max_len: usize,
    pub m: usize,
    pub alpha: f64,
    pub seed: u64,
    pub variant: Variant,
    pub path_cap: usize,
    pub shared_null: bool,
    pub bh: bool,
    /// Resample both inputs to `[rows, cols]` before anything else.
    pub resample: Option<[usize; 2]>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            source: None,
            target: None,
            mask: None,
            orientation_source: ChangeOrientation::LossNegative,
            orientation_target: ChangeOrientation::LossNegative,
            window: None,
            band_scope: BandScope::Window,
            ub_multiplier: DEFAULT_UB_MULTIPLIER,
            band_source: Band::Moderate,
            band_target: Band::Moderate,
            dmax: DEFAULT_DMAX,
            metric: DistanceMetric::Euclidean,
            max_len: DEFAULT_MAX_LEN,
            m: DEFAULT_M,
            alpha: DEFAULT_ALPHA,
            seed: DEFAULT_SEED,
            variant: Variant::Standard,
            path_cap: DEFAULT_PATH_CAP,
            shared_null: false,
            bh: false,
            resample: None,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        serde_json::from_str(&text).map_err(|e| parse_err(path, e))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(self.dmax > 0.0 && self.dmax.is_finite()) {
            return bad(format!("dmax must be positive, got {}", self.dmax));
        }
        if self.max_len < 2 {
            return bad(format!("max_len must be at least 2, got {}", self.max_len));
        }
        if self.m == 0 {
            return bad("m must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.ub_multiplier >= 0.0 && self.ub_multiplier.is_finite()) {
            return bad(format!(
                "ub_multiplier must be non-negative, got {}",
                self.ub_multiplier
            ));
        }
        if self.path_cap == 0 {
            return bad("path_cap must be at least 1".into());
        }
        match self.variant {
            Variant::Aar => bad("the aar variant runs through the `aar` subcommand".into()),
            Variant::Cmad if self.mask.is_none() => bad("the cmad variant needs a mask".into()),
            _ => Ok(()),
        }
    }

    pub fn significance(&self) -> SignificanceConfig {
        SignificanceConfig {
            m: self.m,
            alpha: self.alpha,
            seed: self.seed,
            shared_null: self.shared_null,
            bh: self.bh,
        }
    }
}

/// Metadata block written into every output file.
pub fn metadata(config: &impl Serialize, seed: u64, variant: Variant) -> Value {
    json!({
        "tool": TOOL,
        "version": VERSION,
        "config": config,
        "seed": seed,
        "null_model": NULL_MODEL,
        "variant": variant,
    })
}

/// In-memory result of one band pairing.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub window: RegionWindow,
    pub bands_source: ThresholdBands,
    pub bands_target: ThresholdBands,
    pub graph: SpatialGraph,
    pub paths: Vec<LinkagePath>,
    pub results: Vec<SignificanceResult>,
    /// Side that had no qualifying cells, if any.
    pub empty_side: Option<CellKind>,
}

impl Analysis {
    pub fn significant(&self) -> impl Iterator<Item = (&LinkagePath, &SignificanceResult)> {
        self.paths
            .iter()
            .zip(&self.results)
            .filter(|(_, r)| r.significant)
    }

    pub fn significant_count(&self) -> usize {
        self.significant().count()
    }
}

fn bands_for(
    grid: &ChangeGrid,
    orientation: ChangeOrientation,
    window: &RegionWindow,
    config: &RunConfig,
) -> Result<ThresholdBands, GridError> {
    let scope = match config.band_scope {
        BandScope::Window => *window,
        BandScope::Global => grid.window(),
    };
    compute_threshold_bands_in(grid, orientation, &scope, config.ub_multiplier)
}

fn graph_params(
    config: &RunConfig,
    window: RegionWindow,
    bs: &ThresholdBands,
    bt: &ThresholdBands,
) -> GraphParams {
    GraphParams {
        dmax: config.dmax,
        metric: config.metric,
        variant: config.variant,
        band_source: Some(config.band_source),
        band_target: Some(config.band_target),
        bands_source: Some(*bs),
        bands_target: Some(*bt),
        orientation_source: config.orientation_source,
        orientation_target: config.orientation_target,
        window: Some(window),
        elevation_threshold: None,
    }
}

/// Bands and weighted graph for one band pairing.
#[derive(Debug, Clone)]
pub struct GraphStage {
    pub window: RegionWindow,
    pub bands_source: ThresholdBands,
    pub bands_target: ThresholdBands,
    pub graph: SpatialGraph,
    pub empty_side: Option<CellKind>,
}

/// Bands both fields inside the window and builds the weighted graph. A side
/// without qualifying cells yields an edgeless graph rather than an error.
pub fn prepare_graph(
    source: &ChangeGrid,
    target: &ChangeGrid,
    mask: Option<&ChangeGrid>,
    config: &RunConfig,
) -> Result<GraphStage, crate::Error> {
    if config.variant == Variant::Aar {
        return Err(ConfigError::Invalid(
            "the aar variant runs through the `aar` subcommand".into(),
        )
        .into());
    }
    if !source.same_shape(target) {
        return Err(GridError::DimMismatch(format!(
            "source is {}x{}, target is {}x{}",
            source.rows(),
            source.cols(),
            target.rows(),
            target.cols()
        ))
        .into());
    }
    let window = config.window.unwrap_or_else(|| source.window());
    window.check(source.rows(), source.cols())?;
    let bs = bands_for(source, config.orientation_source, &window, config)?;
    let bt = bands_for(target, config.orientation_target, &window, config)?;
    let src_set = classify_cells(source, &bs, config.band_source, CellKind::Source, &window);
    let tgt_set = classify_cells(target, &bt, config.band_target, CellKind::Target, &window);
    let params = graph_params(config, window, &bs, &bt);

    let empty_side = [&src_set, &tgt_set]
        .iter()
        .find(|s| s.is_empty())
        .map(|s| s.kind);

    let graph = match config.variant {
        Variant::Cmad => {
            let mask =
                mask.ok_or_else(|| ConfigError::Invalid("the cmad variant needs a mask".into()))?;
            build_cmad(
                &src_set,
                &tgt_set,
                mask,
                target,
                &bt,
                config.band_target,
                params,
            )?
        }
        _ if empty_side.is_some() => edgeless(&src_set, &tgt_set, params),
        _ => build_graph(&src_set, &tgt_set, &params)?,
    };
    Ok(GraphStage {
        window,
        bands_source: bs,
        bands_target: bt,
        graph,
        empty_side,
    })
}

/// Permutation test of `paths`, with window, bands and weighting rule taken
/// from the graph's parameters.
pub fn test_paths(
    graph: &SpatialGraph,
    paths: &[LinkagePath],
    source: &ChangeGrid,
    target: &ChangeGrid,
    mask: Option<&ChangeGrid>,
    config: &SignificanceConfig,
) -> Result<Vec<SignificanceResult>, crate::Error> {
    let params = &graph.params;
    let window = params.window.unwrap_or_else(|| source.window());
    window.check(source.rows(), source.cols())?;
    let fields = match params.variant {
        Variant::Cmad => {
            let mask =
                mask.ok_or_else(|| ConfigError::Invalid("the cmad variant needs a mask".into()))?;
            let (bands_target, band_target) = params
                .bands_target
                .zip(params.band_target)
                .ok_or_else(|| ConfigError::Invalid("graph params lack the target band".into()))?;
            NullFields {
                source: mask,
                target,
                window,
                rule: WeightRule::Cmad {
                    bands_target,
                    band_target,
                },
            }
        }
        Variant::Aar => NullFields {
            source,
            target: source,
            window,
            rule: WeightRule::Elevated {
                threshold: params.elevation_threshold.unwrap_or(f64::NEG_INFINITY),
            },
        },
        Variant::Standard => NullFields {
            source,
            target,
            window,
            rule: WeightRule::SignMatch,
        },
    };
    let geometries: Vec<_> = paths.iter().map(|p| path_geometry(graph, p)).collect();
    let observed: Vec<f64> = paths.iter().map(|p| p.score()).collect();
    Ok(evaluate_paths(&geometries, &observed, &fields, config)?)
}

/// Bands, graph, paths and significance for grids already in memory.
pub fn analyze(
    source: &ChangeGrid,
    target: &ChangeGrid,
    mask: Option<&ChangeGrid>,
    config: &RunConfig,
) -> Result<Analysis, crate::Error> {
    let stage = prepare_graph(source, target, mask, config)?;
    let paths = if stage.empty_side.is_some() {
        Vec::new()
    } else {
        extract_all_paths(&stage.graph, config.max_len, config.path_cap)?
    };
    let results = test_paths(
        &stage.graph,
        &paths,
        source,
        target,
        mask,
        &config.significance(),
    )?;
    Ok(Analysis {
        window: stage.window,
        bands_source: stage.bands_source,
        bands_target: stage.bands_target,
        graph: stage.graph,
        paths,
        results,
        empty_side: stage.empty_side,
    })
}

fn edgeless(source: &CellSet, target: &CellSet, params: GraphParams) -> SpatialGraph {
    let nodes = nodes_from_cell_sets(source, target);
    SpatialGraph::from_parts(nodes, Vec::new(), params).expect("nodes are distinct")
}

fn build_cmad(
    source: &CellSet,
    target_set: &CellSet,
    mask: &ChangeGrid,
    target: &ChangeGrid,
    bt: &ThresholdBands,
    band_target: Band,
    params: GraphParams,
) -> Result<SpatialGraph, GraphError> {
    let nodes = nodes_from_cell_sets(source, target_set);
    let draft = if source.is_empty() || target_set.is_empty() {
        crate::graph::GraphDraft {
            nodes,
            edges: Vec::new(),
            dmax: params.dmax,
            metric: params.metric,
        }
    } else {
        draft_graph(nodes, params.dmax, params.metric)?
    };
    assign_edge_weights_cmad(draft, mask, target, bt, band_target, params)
}

/// Loads one grid and applies the configured resampling.
pub fn load_input(path: &Path, config: &RunConfig) -> Result<ChangeGrid, GridError> {
    let grid = load_grid_auto(path)?;
    match config.resample {
        Some([r, c]) => crate::grid::resample_nearest(&grid, r, c),
        None => Ok(grid),
    }
}

/// Counts from one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub band_source: Band,
    pub band_target: Band,
    pub nodes: usize,
    pub edges: usize,
    pub paths: usize,
    pub significant: usize,
    pub max_frequency: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub empty_side: Option<CellKind>,
}

/// Loads the configured inputs, runs [`analyze`] and writes all artifacts to
/// `out_dir`.
pub fn run_pipeline(config: &RunConfig, out_dir: &Path) -> Result<RunSummary, crate::Error> {
    config.validate()?;
    let (source, target, mask) = load_inputs(config)?;
    run_loaded(config, &source, &target, mask.as_ref(), out_dir)
}

pub fn load_inputs(
    config: &RunConfig,
) -> Result<(ChangeGrid, ChangeGrid, Option<ChangeGrid>), crate::Error> {
    let need = |p: &Option<PathBuf>, what: &str| {
        p.clone()
            .ok_or_else(|| ConfigError::Invalid(format!("no {what} grid given")))
    };
    let source = load_input(&need(&config.source, "source")?, config)?;
    let target = load_input(&need(&config.target, "target")?, config)?;
    let mask = match &config.mask {
        Some(p) => Some(load_input(p, config)?),
        None => None,
    };
    Ok((source, target, mask))
}

fn run_loaded(
    config: &RunConfig,
    source: &ChangeGrid,
    target: &ChangeGrid,
    mask: Option<&ChangeGrid>,
    out_dir: &Path,
) -> Result<RunSummary, crate::Error> {
    let analysis = analyze(source, target, mask, config)?;
    let meta = metadata(config, config.seed, config.variant);
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    write_json(
        &out_dir.join("graph.json"),
        &graph_document(&analysis.graph, &meta),
    )?;
    write_json(
        &out_dir.join("paths.json"),
        &paths_document(&analysis.graph, &analysis.paths, &meta),
    )?;
    write_json(
        &out_dir.join("results.json"),
        &results_document(&analysis.results, &meta),
    )?;

    let reg = source.registration();
    let sig: Vec<GeoPath> = analysis
        .significant()
        .map(|(p, r)| GeoPath {
            cells: p.cells(&analysis.graph),
            score: r.observed,
            p_value: r.p_value,
        })
        .collect();
    let mut geo = export_geojson(&sig, reg);
    geo["metadata"] = meta.clone();
    write_json(&out_dir.join("significant.geojson"), &geo)?;

    let cells: Vec<Vec<Cell>> = sig.iter().map(|g| g.cells.clone()).collect();
    let freq = linkage_frequency(&cells, source.rows(), source.cols());
    let mut csv_text = format!(
        "# metadata: {}\nrow,col,count\n",
        serde_json::to_string(&meta).expect("json")
    );
    for (c, n) in freq.nonzero() {
        csv_text.push_str(&format!("{},{},{}\n", c.row, c.col, n));
    }
    let csv_path = out_dir.join("frequency.csv");
    fs::write(&csv_path, csv_text).map_err(|e| io_err(&csv_path, e))?;

    Ok(RunSummary {
        out_dir: out_dir.to_path_buf(),
        band_source: config.band_source,
        band_target: config.band_target,
        nodes: analysis.graph.node_count(),
        edges: analysis.graph.edge_count(),
        paths: analysis.paths.len(),
        significant: sig.len(),
        max_frequency: freq.max(),
        empty_side: analysis.empty_side,
    })
}

/// All nine band pairings, each written to `<source band>_<target band>/`.
pub fn run_sweep(config: &RunConfig, out_dir: &Path) -> Result<Vec<RunSummary>, crate::Error> {
    config.validate()?;
    let (source, target, mask) = load_inputs(config)?;
    let mut out = Vec::new();
    for bs in Band::ALL {
        for bt in Band::ALL {
            let cfg = RunConfig {
                band_source: bs,
                band_target: bt,
                ..config.clone()
            };
            let dir = out_dir.join(format!("{}_{}", bs.name(), bt.name()));
            out.push(run_loaded(&cfg, &source, &target, mask.as_ref(), &dir)?);
        }
    }
    Ok(out)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), ConfigError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| parse_err(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    pub row: usize,
    pub col: usize,
    pub kind: NodeKind,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anomalous: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphDocument {
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<GraphEdge>,
    pub params: GraphParams,
    #[serde(default)]
    pub metadata: Value,
}

pub fn graph_document(graph: &SpatialGraph, meta: &Value) -> GraphDocument {
    GraphDocument {
        nodes: graph
            .nodes()
            .iter()
            .map(|n| NodeRecord {
                id: n.id,
                row: n.cell.row,
                col: n.cell.col,
                kind: n.kind,
                value: n.value,
                anomalous: n.anomalous,
            })
            .collect(),
        edges: graph.edges().to_vec(),
        params: graph.params.clone(),
        metadata: meta.clone(),
    }
}

impl GraphDocument {
    pub fn into_graph(self) -> Result<SpatialGraph, GraphError> {
        let nodes = self
            .nodes
            .into_iter()
            .map(|n| GraphNode {
                id: n.id,
                cell: Cell::new(n.row, n.col),
                kind: n.kind,
                value: n.value,
                anomalous: n.anomalous,
            })
            .collect();
        SpatialGraph::from_parts(nodes, self.edges, self.params)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathRecord {
    pub nodes: Vec<usize>,
    pub cells: Vec<[usize; 2]>,
    pub score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathsDocument {
    #[serde(default)]
    pub metadata: Value,
    pub paths: Vec<PathRecord>,
}

pub fn paths_document(graph: &SpatialGraph, paths: &[LinkagePath], meta: &Value) -> PathsDocument {
    PathsDocument {
        metadata: meta.clone(),
        paths: paths
            .iter()
            .map(|p| PathRecord {
                nodes: p.nodes.clone(),
                cells: p.cells(graph).iter().map(|c| [c.row, c.col]).collect(),
                score: p.score(),
            })
            .collect(),
    }
}

impl PathsDocument {
    /// Paths re-read against `graph`; fails on any path the graph does not
    /// contain.
    pub fn into_paths(self, graph: &SpatialGraph) -> Result<Vec<LinkagePath>, crate::PathError> {
        self.paths
            .into_iter()
            .enumerate()
            .map(|(index, rec)| {
                LinkagePath::from_nodes(graph, rec.nodes).ok_or_else(|| {
                    crate::PathError::InvalidPath {
                        index,
                        reason: "nodes are not a walk in the graph".into(),
                    }
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultsDocument {
    #[serde(default)]
    pub metadata: Value,
    pub results: Vec<SignificanceResult>,
}

pub fn results_document(results: &[SignificanceResult], meta: &Value) -> ResultsDocument {
    ResultsDocument {
        metadata: meta.clone(),
        results: results.to_vec(),
    }
}

/// A significant path prepared for GeoJSON export.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoPath {
    pub cells: Vec<Cell>,
    pub score: f64,
    pub p_value: f64,
}

/// FeatureCollection of LineStrings in `[lon, lat]` order, source first.
pub fn export_geojson(paths: &[GeoPath], registration: &GridRegistration) -> Value {
    let point = |c: &Cell| json!([registration.longitude(c.col), registration.latitude(c.row)]);
    let features: Vec<Value> = paths
        .iter()
        .map(|p| {
            let first = p.cells.first().copied().unwrap_or(Cell::new(0, 0));
            let last = p.cells.last().copied().unwrap_or(Cell::new(0, 0));
            json!({
                "type": "Feature",
                "geometry": {
                    "type": "LineString",
                    "coordinates": p.cells.iter().map(point).collect::<Vec<_>>(),
                },
                "properties": {
                    "score": p.score,
                    "p_value": p.p_value,
                    "source_cell": [first.row, first.col],
                    "target_cell": [last.row, last.col],
                },
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}

fn default_min_extent() -> f64 {
    aar::DEFAULT_MIN_EXTENT_KM
}
fn default_max_edge() -> f64 {
    aar::DEFAULT_MAX_EDGE_KM
}
fn default_snap() -> f64 {
    aar::DEFAULT_SNAP_KM
}
fn default_aar_alpha() -> f64 {
    aar::DEFAULT_AAR_ALPHA
}
fn default_m() -> usize {
    DEFAULT_M
}
fn default_seed() -> u64 {
    DEFAULT_SEED
}
fn default_max_len() -> usize {
    DEFAULT_MAX_LEN
}
fn default_cap() -> usize {
    DEFAULT_PATH_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AarConfig {
    pub mask: PathBuf,
    pub values: PathBuf,
    pub origins: PathBuf,
    /// Station position as `[lat, lon]`.
    pub station: [f64; 2],
    #[serde(default = "default_min_extent")]
    pub min_extent_km: f64,
    #[serde(default = "default_max_edge")]
    pub max_edge_km: f64,
    #[serde(default = "default_snap")]
    pub snap_km: f64,
    #[serde(default = "default_aar_alpha")]
    pub alpha: f64,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    #[serde(default = "default_cap")]
    pub path_cap: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentSummary {
    pub size: usize,
    pub extent_km: f64,
    pub retained: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AarReport {
    pub metadata: Value,
    pub components: Vec<ComponentSummary>,
    pub station_node: usize,
    pub station_cell: Cell,
    pub origin_nodes: Vec<usize>,
    pub paths: Vec<StationPath>,
    pub significant: usize,
}

/// Reads an origins file: a JSON list of `{row, col}` or `{lat, lon}`
/// entries, optionally wrapped as `{"origins": [...]}`.
pub fn load_origins(path: &Path) -> Result<Vec<OriginSpec>, ConfigError> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum File {
        List(Vec<OriginSpec>),
        Wrapped { origins: Vec<OriginSpec> },
    }
    Ok(match read_json::<File>(path)? {
        File::List(v) | File::Wrapped { origins: v } => v,
    })
}

/// Result of a benchmark run.
#[derive(Debug, Clone)]
pub struct AarAnalysis {
    pub graph: aar::AarGraph,
    pub components: Vec<AarComponent>,
    pub station: usize,
    pub origins: Vec<usize>,
    pub paths: Vec<StationPath>,
}

/// Benchmark run on in-memory grids.
pub fn analyze_aar(
    mask: &ChangeGrid,
    values: &ChangeGrid,
    origins: &[OriginSpec],
    config: &AarConfig,
) -> Result<AarAnalysis, crate::Error> {
    let points = aar::elevated_points(mask, values)?;
    let graph = aar::build_aar_graph(points, config.max_edge_km)?;
    let components = aar::connected_components(&graph, config.min_extent_km);
    let station = aar::snap_to_node(
        &graph.points,
        config.station[0],
        config.station[1],
        config.snap_km,
    )?;
    let origins = aar::resolve_origins(&graph, values.registration(), origins, config.snap_km)?;
    let params = StationParams {
        max_len: config.max_len,
        cap: config.path_cap,
        m: config.m,
        alpha: config.alpha,
        seed: config.seed,
    };
    let paths =
        aar::station_path_significance(&graph, &components, &origins, station, values, &params)?;
    Ok(AarAnalysis {
        graph,
        components,
        station,
        origins,
        paths,
    })
}

pub fn run_aar(config: &AarConfig, out: &Path) -> Result<AarReport, crate::Error> {
    let mask = load_grid_auto(&config.mask)?;
    let values = load_grid_auto(&config.values)?;
    let origins = load_origins(&config.origins)?;
    let a = analyze_aar(&mask, &values, &origins, config)?;
    let report = AarReport {
        metadata: metadata(config, config.seed, Variant::Aar),
        components: a
            .components
            .iter()
            .map(|c| ComponentSummary {
                size: c.nodes.len(),
                extent_km: c.extent_km,
                retained: c.retained,
            })
            .collect(),
        station_node: a.station,
        station_cell: a.graph.points[a.station].cell,
        origin_nodes: a.origins,
        significant: a.paths.iter().filter(|p| p.significant).count(),
        paths: a.paths,
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    write_json(out, &report)?;
    Ok(report)
}
