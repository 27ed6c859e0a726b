//! Python bindings for the spatial-link pipeline.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyModule};

use spatial_link::grid::{
    compute_threshold_bands_in, Band, Cell, ChangeGrid, ChangeOrientation, GridRegistration,
    RegionWindow,
};
use spatial_link::pipeline::{self, RunConfig};
use spatial_link::synthetic::{self, NoiseModel, PlantSpec};
use spatial_link::{aar, delaunay, io, significance, Error};

fn py_err(e: impl Into<Error>) -> PyErr {
    let e = e.into();
    let msg = format!("[{}] {e} (hint: {})", e.module(), e.hint());
    match &e {
        Error::Grid(spatial_link::GridError::Io { .. })
        | Error::Config(spatial_link::ConfigError::Io { .. }) => PyIOError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn parse<T: std::str::FromStr<Err = String>>(s: &str) -> PyResult<T> {
    s.parse().map_err(PyValueError::new_err)
}

/// Serialises keyword arguments through Python's json module into a config.
fn config_from_kwargs(py: Python<'_>, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<RunConfig> {
    let cfg = match kwargs {
        Some(kw) if !kw.is_empty() => {
            let text: String = py.import("json")?.call_method1("dumps", (kw,))?.extract()?;
            serde_json::from_str(&text)
                .map_err(|e| PyValueError::new_err(format!("invalid config: {e}")))?
        }
        _ => RunConfig::default(),
    };
    cfg.validate().map_err(py_err)?;
    Ok(cfg)
}

fn cells(v: &[Cell]) -> Vec<(usize, usize)> {
    v.iter().map(|c| (c.row, c.col)).collect()
}

/// A change raster with validity mask and geographic registration.
#[pyclass(name = "ChangeGrid", module = "spatial_link", frozen, from_py_object)]
#[derive(Clone)]
struct PyGrid {
    inner: ChangeGrid,
}

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (rows, cols, values, valid=None, lat0=-90.0, lon0=-180.0, dlat=0.25, dlon=0.25, cell_km=25.0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        rows: usize,
        cols: usize,
        values: Vec<f64>,
        valid: Option<Vec<bool>>,
        lat0: f64,
        lon0: f64,
        dlat: f64,
        dlon: f64,
        cell_km: f64,
    ) -> PyResult<Self> {
        let valid = valid.unwrap_or_else(|| values.iter().map(|v| v.is_finite()).collect());
        let reg = GridRegistration {
            lat0,
            lon0,
            dlat,
            dlon,
            cell_km,
        };
        ChangeGrid::new(rows, cols, values, valid, reg)
            .map(|inner| Self { inner })
            .map_err(py_err)
    }

    /// Loads a `.json`/`.raw` grid pair or a `row,col,value` CSV.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        io::load_grid_auto(&path)
            .map(|inner| Self { inner })
            .map_err(py_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        io::save_grid(&self.inner, &path).map_err(py_err)
    }

    #[getter]
    fn rows(&self) -> usize {
        self.inner.rows()
    }

    #[getter]
    fn cols(&self) -> usize {
        self.inner.cols()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    #[getter]
    fn valid(&self) -> Vec<bool> {
        self.inner.valid_mask().to_vec()
    }

    fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.inner.get(Cell::new(row, col))
    }

    fn latlon(&self, row: usize, col: usize) -> (f64, f64) {
        let r = self.inner.registration();
        (r.latitude(row), r.longitude(col))
    }

    /// Median, Q3 and upper fence of the loss magnitudes, as a dict.
    #[pyo3(signature = (orientation="loss-negative", window=None, ub_multiplier=1.5))]
    fn thresholds<'py>(
        &self,
        py: Python<'py>,
        orientation: &str,
        window: Option<&str>,
        ub_multiplier: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let o: ChangeOrientation = parse(orientation)?;
        let w = match window {
            Some(s) => s.parse::<RegionWindow>().map_err(py_err)?,
            None => self.inner.window(),
        };
        let b = compute_threshold_bands_in(&self.inner, o, &w, ub_multiplier).map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("q1", b.q1)?;
        d.set_item("median", b.median)?;
        d.set_item("q3", b.q3)?;
        d.set_item("ub", b.ub)?;
        d.set_item("count", b.count)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("ChangeGrid({}x{})", self.inner.rows(), self.inner.cols())
    }
}

/// One tested linkage path.
#[pyclass(name = "Path", module = "spatial_link", frozen, get_all)]
struct PyPath {
    cells: Vec<(usize, usize)>,
    score: f64,
    p_value: f64,
    significant: bool,
}

#[pymethods]
impl PyPath {
    fn __repr__(&self) -> String {
        format!(
            "Path({} cells, score={:.3}, p={:.4}, significant={})",
            self.cells.len(),
            self.score,
            self.p_value,
            self.significant
        )
    }
}

/// Result of one pipeline run.
#[pyclass(name = "Analysis", module = "spatial_link", frozen, get_all)]
struct PyAnalysis {
    node_count: usize,
    edge_count: usize,
    paths: Vec<Py<PyPath>>,
    significant_count: usize,
}

#[pymethods]
impl PyAnalysis {
    fn __repr__(&self) -> String {
        format!(
            "Analysis(nodes={}, edges={}, paths={}, significant={})",
            self.node_count,
            self.edge_count,
            self.paths.len(),
            self.significant_count
        )
    }
}

/// Bands, graph, paths and permutation test on two in-memory grids.
/// Keyword arguments are run configuration fields (`band_source`, `dmax`,
/// `m`, `seed`, ...).
#[pyfunction]
#[pyo3(signature = (source, target, mask=None, **kwargs))]
fn analyze(
    py: Python<'_>,
    source: &PyGrid,
    target: &PyGrid,
    mask: Option<&PyGrid>,
    kwargs: Option<&Bound<'_, PyDict>>,
) -> PyResult<PyAnalysis> {
    let cfg = config_from_kwargs(py, kwargs)?;
    let a = py
        .detach(|| pipeline::analyze(&source.inner, &target.inner, mask.map(|m| &m.inner), &cfg))
        .map_err(py_err)?;
    let paths = a
        .paths
        .iter()
        .zip(&a.results)
        .map(|(p, r)| {
            Py::new(
                py,
                PyPath {
                    cells: cells(&p.cells(&a.graph)),
                    score: p.score(),
                    p_value: r.p_value,
                    significant: r.significant,
                },
            )
        })
        .collect::<PyResult<_>>()?;
    Ok(PyAnalysis {
        node_count: a.graph.node_count(),
        edge_count: a.graph.edge_count(),
        paths,
        significant_count: a.significant_count(),
    })
}

/// File-based run writing graph, paths, results, GeoJSON and frequency files.
/// Returns the run summary as a JSON string.
#[pyfunction]
#[pyo3(signature = (out_dir, sweep_bands=false, **kwargs))]
fn run_pipeline(
    py: Python<'_>,
    out_dir: PathBuf,
    sweep_bands: bool,
    kwargs: Option<&Bound<'_, PyDict>>,
) -> PyResult<String> {
    let cfg = config_from_kwargs(py, kwargs)?;
    let summaries = py
        .detach(|| {
            if sweep_bands {
                pipeline::run_sweep(&cfg, &out_dir)
            } else {
                pipeline::run_pipeline(&cfg, &out_dir).map(|s| vec![s])
            }
        })
        .map_err(py_err)?;
    serde_json::to_string(&summaries).map_err(|e| PyValueError::new_err(e.to_string()))
}

type Planted = (PyGrid, PyGrid, Vec<(usize, usize)>);

/// Grids with a planted chain. Returns `(source, target, oracle_cells)`.
#[pyfunction]
#[pyo3(signature = (rows, cols, chain, split, seed=0, band_source="moderate", band_target="moderate", sigma=synthetic::DEFAULT_SIGMA, coverage=synthetic::DEFAULT_COVERAGE))]
#[allow(clippy::too_many_arguments)]
fn plant(
    rows: usize,
    cols: usize,
    chain: Vec<(usize, usize)>,
    split: usize,
    seed: u64,
    band_source: &str,
    band_target: &str,
    sigma: f64,
    coverage: f64,
) -> PyResult<Planted> {
    let mut spec = PlantSpec::horizontal(Cell::new(0, 0), 2, 1, seed);
    spec.chain = chain.into_iter().map(|(r, c)| Cell::new(r, c)).collect();
    spec.split = split;
    spec.band_source = parse::<Band>(band_source)?;
    spec.band_target = parse::<Band>(band_target)?;
    spec.noise = NoiseModel::Gaussian { sigma, coverage };
    let inst = synthetic::generate(&spec, rows, cols).map_err(py_err)?;
    Ok((
        PyGrid { inner: inst.source },
        PyGrid { inner: inst.target },
        cells(&inst.oracle),
    ))
}

/// Pure-noise source and target grids.
#[pyfunction]
#[pyo3(signature = (rows, cols, seed=0, sigma=synthetic::DEFAULT_SIGMA, coverage=synthetic::DEFAULT_COVERAGE))]
fn noise(
    rows: usize,
    cols: usize,
    seed: u64,
    sigma: f64,
    coverage: f64,
) -> PyResult<(PyGrid, PyGrid)> {
    let (s, t) =
        synthetic::generate_null(rows, cols, &NoiseModel::Gaussian { sigma, coverage }, seed)
            .map_err(py_err)?;
    Ok((PyGrid { inner: s }, PyGrid { inner: t }))
}

/// Delaunay edges `(i, j)`, `i < j`, of integer lattice points.
#[pyfunction]
fn delaunay_edges(points: Vec<(i64, i64)>) -> PyResult<Vec<(usize, usize)>> {
    delaunay::delaunay_edges(&points).map_err(py_err)
}

/// Add-one permutation p-value of `observed` against `null` scores.
#[pyfunction]
fn p_value(observed: f64, null: Vec<f64>) -> PyResult<f64> {
    if null.is_empty() {
        return Err(PyValueError::new_err("null distribution is empty"));
    }
    Ok(significance::p_value(observed, &null))
}

/// Equirectangular distance in km between two `(lat, lon)` positions.
#[pyfunction]
fn equirect_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    aar::equirect_km(a.0, a.1, b.0, b.1)
}

#[pymodule]
#[pyo3(name = "spatial_link")]
fn spatial_link_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", spatial_link::VERSION)?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PyPath>()?;
    m.add_class::<PyAnalysis>()?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(plant, m)?)?;
    m.add_function(wrap_pyfunction!(noise, m)?)?;
    m.add_function(wrap_pyfunction!(delaunay_edges, m)?)?;
    m.add_function(wrap_pyfunction!(p_value, m)?)?;
    m.add_function(wrap_pyfunction!(equirect_km, m)?)?;
    Ok(())
}
