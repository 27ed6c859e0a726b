//! Synthetic change fields with planted linkage chains.
//!
//! Background cells are independently valid with probability `coverage` and
//! then carry `N(0, sigma)` values. A planted chain overwrites its cells in both
//! fields: Source chain cells get a loss-signed magnitude inside the requested
//! band of the source field and are left invalid in the target field, and the
//! Target chain cells the other way round.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{DistanceMetric, DEFAULT_DMAX};
use crate::grid::{
    compute_threshold_bands_in, Band, Cell, ChangeGrid, ChangeOrientation, GridError,
    GridRegistration, ThresholdBands, DEFAULT_UB_MULTIPLIER,
};
use crate::paths::DEFAULT_MAX_LEN;

pub const DEFAULT_SIGMA: f64 = 0.05;
pub const DEFAULT_COVERAGE: f64 = 0.02;

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("chain violation: {0}")]
    ChainViolation(String),
    #[error("invalid noise model: {0}")]
    InvalidNoise(String),
    #[error("{field} field: no magnitude lands in the {band} band after {iterations} placements")]
    BandUnattainable {
        field: &'static str,
        band: Band,
        iterations: usize,
    },
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "distribution", rename_all = "kebab-case")]
pub enum NoiseModel {
    /// Each cell valid with probability `coverage`, valid values `N(0, sigma)`.
    Gaussian { sigma: f64, coverage: f64 },
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel::Gaussian {
            sigma: DEFAULT_SIGMA,
            coverage: DEFAULT_COVERAGE,
        }
    }
}

impl NoiseModel {
    fn validate(&self) -> Result<(), SyntheticError> {
        let NoiseModel::Gaussian { sigma, coverage } = *self;
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(SyntheticError::InvalidNoise(format!("sigma {sigma}")));
        }
        if !(0.0..=1.0).contains(&coverage) {
            return Err(SyntheticError::InvalidNoise(format!("coverage {coverage}")));
        }
        Ok(())
    }

    /// Fills `rows x cols` values and validity from `rng`. Every cell consumes
    /// one uniform and one normal draw.
    fn fill(&self, rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<bool>) {
        let NoiseModel::Gaussian { sigma, coverage } = *self;
        let normal = Normal::new(0.0, sigma).expect("sigma checked");
        let n = rows * cols;
        let mut values = Vec::with_capacity(n);
        let mut valid = Vec::with_capacity(n);
        for _ in 0..n {
            let keep = rng.random::<f64>() < coverage;
            let z = normal.sample(rng);
            valid.push(keep);
            values.push(if keep { z } else { f64::NAN });
        }
        (values, valid)
    }
}

fn default_band() -> Band {
    Band::Moderate
}

fn default_dmax() -> f64 {
    DEFAULT_DMAX
}

fn default_max_len() -> usize {
    DEFAULT_MAX_LEN
}

fn default_ub() -> f64 {
    DEFAULT_UB_MULTIPLIER
}

/// A planted chain and the background it sits in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantSpec {
    pub chain: Vec<Cell>,
    /// Explicit loss-signed chain values; computed from `band` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default = "default_band")]
    pub band_source: Band,
    #[serde(default = "default_band")]
    pub band_target: Band,
    /// `chain[..split]` are Source cells, `chain[split..]` Target cells.
    pub split: usize,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_dmax")]
    pub dmax: f64,
    #[serde(default)]
    pub metric: DistanceMetric,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    #[serde(default)]
    pub orientation_source: ChangeOrientation,
    #[serde(default)]
    pub orientation_target: ChangeOrientation,
    #[serde(default = "default_ub")]
    pub ub_multiplier: f64,
}

impl PlantSpec {
    /// Horizontal chain of `len` cells from `start`, `spacing` columns apart,
    /// whose last cell is the only Target.
    pub fn horizontal(start: Cell, len: usize, spacing: usize, seed: u64) -> PlantSpec {
        PlantSpec {
            chain: (0..len)
                .map(|k| Cell::new(start.row, start.col + k * spacing))
                .collect(),
            values: None,
            band_source: Band::Moderate,
            band_target: Band::Moderate,
            split: len.saturating_sub(1),
            noise: NoiseModel::default(),
            seed,
            dmax: DEFAULT_DMAX,
            metric: DistanceMetric::Euclidean,
            max_len: DEFAULT_MAX_LEN,
            orientation_source: ChangeOrientation::LossNegative,
            orientation_target: ChangeOrientation::LossNegative,
            ub_multiplier: DEFAULT_UB_MULTIPLIER,
        }
    }

    fn validate(&self, rows: usize, cols: usize) -> Result<(), SyntheticError> {
        let bad = |m: String| Err(SyntheticError::ChainViolation(m));
        let n = self.chain.len();
        if n < 2 {
            return bad(format!("chain needs at least 2 cells, got {n}"));
        }
        if n > self.max_len {
            return bad(format!(
                "chain has {n} cells, more than L = {}",
                self.max_len
            ));
        }
        if self.split == 0 || self.split >= n {
            return bad(format!("split index {} must lie in 1..{n}", self.split));
        }
        for (k, c) in self.chain.iter().enumerate() {
            if c.row >= rows || c.col >= cols {
                return bad(format!("cell {k} at {c} is outside the {rows}x{cols} grid"));
            }
            if self.chain[..k].contains(c) {
                return bad(format!("cell {c} appears twice"));
            }
        }
        for (k, w) in self.chain.windows(2).enumerate() {
            let d = self.metric.distance(w[0], w[1]);
            if d > self.dmax {
                return bad(format!(
                    "cells {k} and {} are {d:.3} apart, more than D_max = {}",
                    k + 1,
                    self.dmax
                ));
            }
        }
        if let Some(v) = &self.values {
            if v.len() != n {
                return bad(format!("{} values for {n} chain cells", v.len()));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return bad("chain values must be finite".into());
            }
        }
        self.noise.validate()
    }
}

/// Generated fields with the planted chain as oracle path.
#[derive(Debug, Clone)]
pub struct SyntheticInstance {
    pub source: ChangeGrid,
    pub target: ChangeGrid,
    pub oracle: Vec<Cell>,
    pub split: usize,
    pub bands_source: Option<ThresholdBands>,
    pub bands_target: Option<ThresholdBands>,
}

/// Registration used for synthetic grids: the cropped West Antarctic window.
pub fn synthetic_registration() -> GridRegistration {
    GridRegistration {
        lon0: -130.0,
        ..GridRegistration::antarctic_quarter_degree()
    }
}

type Field = (Vec<f64>, Vec<bool>);

fn background(rows: usize, cols: usize, noise: &NoiseModel, seed: u64) -> (Field, Field) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = noise.fill(rows, cols, &mut rng);
    let t = noise.fill(rows, cols, &mut rng);
    (s, t)
}

/// Pure-noise source and target fields.
pub fn generate_null(
    rows: usize,
    cols: usize,
    noise: &NoiseModel,
    seed: u64,
) -> Result<(ChangeGrid, ChangeGrid), SyntheticError> {
    noise.validate()?;
    let ((sv, sm), (tv, tm)) = background(rows, cols, noise, seed);
    let reg = synthetic_registration();
    Ok((
        ChangeGrid::new(rows, cols, sv, sm, reg)?,
        ChangeGrid::new(rows, cols, tv, tm, reg)?,
    ))
}

fn band_target_magnitude(bands: &ThresholdBands, band: Band) -> f64 {
    let (lo, hi) = bands.interval(band);
    if hi.is_finite() {
        (lo + hi) / 2.0
    } else {
        let step = (bands.ub - bands.q3).max(bands.ub * 0.25);
        lo + step
    }
}

/// Places the chain magnitude of one field inside `band`, re-estimating the
/// bands after each placement because the chain itself shifts the quantiles.
#[allow(clippy::too_many_arguments)]
fn place_band(
    values: &mut [f64],
    valid: &[bool],
    cells: &[usize],
    rows: usize,
    cols: usize,
    band: Band,
    orientation: ChangeOrientation,
    ub_multiplier: f64,
    field: &'static str,
) -> Result<ThresholdBands, SyntheticError> {
    const ITERATIONS: usize = 50;
    let reg = synthetic_registration();
    let bands_of = |values: &[f64]| -> Result<ThresholdBands, GridError> {
        let g = ChangeGrid::new(rows, cols, values.to_vec(), valid.to_vec(), reg)?;
        compute_threshold_bands_in(&g, orientation, &g.window(), ub_multiplier)
    };
    // start from the background alone
    for &i in cells {
        values[i] = 0.0;
    }
    let mut bands = bands_of(values).map_err(|_| SyntheticError::BandUnattainable {
        field,
        band,
        iterations: 0,
    })?;
    for _ in 0..ITERATIONS {
        let m = band_target_magnitude(&bands, band);
        if m.is_nan() || m <= 0.0 {
            break;
        }
        for &i in cells {
            values[i] = orientation.loss_value(m);
        }
        bands = bands_of(values)?;
        if cells.iter().all(|&i| bands.passes(values[i], band)) {
            return Ok(bands);
        }
    }
    Err(SyntheticError::BandUnattainable {
        field,
        band,
        iterations: ITERATIONS,
    })
}

/// Background noise with the planted chain written over it.
pub fn generate(
    spec: &PlantSpec,
    rows: usize,
    cols: usize,
) -> Result<SyntheticInstance, SyntheticError> {
    spec.validate(rows, cols)?;
    let ((mut sv, mut sm), (mut tv, mut tm)) = background(rows, cols, &spec.noise, spec.seed);
    let idx = |c: &Cell| c.row * cols + c.col;
    let src_cells: Vec<usize> = spec.chain[..spec.split].iter().map(idx).collect();
    let tgt_cells: Vec<usize> = spec.chain[spec.split..].iter().map(idx).collect();
    for &i in &src_cells {
        sm[i] = true;
        tm[i] = false;
        tv[i] = f64::NAN;
    }
    for &i in &tgt_cells {
        tm[i] = true;
        sm[i] = false;
        sv[i] = f64::NAN;
    }

    let (bands_source, bands_target) = match &spec.values {
        Some(vals) => {
            for (k, &i) in src_cells.iter().enumerate() {
                sv[i] = vals[k];
            }
            for (k, &i) in tgt_cells.iter().enumerate() {
                tv[i] = vals[spec.split + k];
            }
            (None, None)
        }
        None => {
            let bs = place_band(
                &mut sv,
                &sm,
                &src_cells,
                rows,
                cols,
                spec.band_source,
                spec.orientation_source,
                spec.ub_multiplier,
                "source",
            )?;
            let bt = place_band(
                &mut tv,
                &tm,
                &tgt_cells,
                rows,
                cols,
                spec.band_target,
                spec.orientation_target,
                spec.ub_multiplier,
                "target",
            )?;
            (Some(bs), Some(bt))
        }
    };
    let reg = synthetic_registration();
    Ok(SyntheticInstance {
        source: ChangeGrid::new(rows, cols, sv, sm, reg)?,
        target: ChangeGrid::new(rows, cols, tv, tm, reg)?,
        oracle: spec.chain.clone(),
        split: spec.split,
        bands_source,
        bands_target,
    })
}

/// Fraction of oracle cells present in `found`.
pub fn oracle_overlap(oracle: &[Cell], found: &[Cell]) -> f64 {
    if oracle.is_empty() {
        return 0.0;
    }
    let hits = oracle.iter().filter(|c| found.contains(c)).count();
    hits as f64 / oracle.len() as f64
}

/// Whether `found` shares at least 90% of the oracle cells.
pub fn recovers(oracle: &[Cell], found: &[Cell]) -> bool {
    oracle_overlap(oracle, found) >= 0.9
}
