//! Gridded change fields, their geographic registration, and quantile banding.
//!
//! A [`ChangeGrid`] is a dense row-major raster of per-cell change values with a
//! validity mask. Cells with `valid == false` never take part in statistics,
//! graphs or permutations.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("non-finite value {value} at valid cell ({row}, {col})")]
    NonFiniteValue { row: usize, col: usize, value: f64 },
    #[error("window {window} is out of bounds for a {rows}x{cols} grid")]
    WindowOutOfBounds {
        window: RegionWindow,
        rows: usize,
        cols: usize,
    },
    #[error("insufficient data: {found} oriented cells, at least 4 are required")]
    InsufficientData { found: usize },
    #[error("grid mismatch: {0}")]
    DimMismatch(String),
    #[error("invalid registration: {0}")]
    InvalidRegistration(String),
    #[error("invalid window specification `{0}` (expected r0:r1,c0:c1)")]
    BadWindowSpec(String),
    #[error("i/o error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("could not parse {path}: {message}")]
    Parse { path: String, message: String },
}

/// A grid cell addressed by `(row, col)`. Ordered row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    /// Euclidean distance in grid-index units.
    pub fn euclidean(self, other: Cell) -> f64 {
        let dr = self.row as f64 - other.row as f64;
        let dc = self.col as f64 - other.col as f64;
        (dr * dr + dc * dc).sqrt()
    }

    /// Chebyshev (king-move) distance in grid-index units.
    pub fn chebyshev(self, other: Cell) -> f64 {
        self.row
            .abs_diff(other.row)
            .max(self.col.abs_diff(other.col)) as f64
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

/// Affine mapping between grid indices and geographic coordinates.
///
/// `latitude(r) = lat0 + r * dlat`, `longitude(c) = lon0 + c * dlon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRegistration {
    pub lat0: f64,
    pub lon0: f64,
    pub dlat: f64,
    pub dlon: f64,
    pub cell_km: f64,
}

impl GridRegistration {
    /// Global 0.25 degree grid whose row 0 sits at the south pole and column 0
    /// at 180W. Row indices 0..=120 span 90S..60S and columns 200..=600 span
    /// 130W..30W.
    pub const fn antarctic_quarter_degree() -> Self {
        Self {
            lat0: -90.0,
            lon0: -180.0,
            dlat: 0.25,
            dlon: 0.25,
            cell_km: 25.0,
        }
    }

    pub fn validate(&self) -> Result<(), GridError> {
        let all_finite = [self.lat0, self.lon0, self.dlat, self.dlon, self.cell_km]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(GridError::InvalidRegistration("non-finite field".into()));
        }
        if self.dlat <= 0.0 || self.dlon <= 0.0 || self.cell_km <= 0.0 {
            return Err(GridError::InvalidRegistration(format!(
                "dlat, dlon and cell_km must be positive (got {}, {}, {})",
                self.dlat, self.dlon, self.cell_km
            )));
        }
        Ok(())
    }

    pub fn latitude(&self, row: usize) -> f64 {
        self.lat0 + row as f64 * self.dlat
    }

    pub fn longitude(&self, col: usize) -> f64 {
        self.lon0 + col as f64 * self.dlon
    }

    /// Nearest cell to a geographic position, if it falls inside `rows x cols`.
    pub fn cell_at(&self, lat: f64, lon: f64, rows: usize, cols: usize) -> Option<Cell> {
        let r = ((lat - self.lat0) / self.dlat).round();
        let c = ((lon - self.lon0) / self.dlon).round();
        if r < 0.0 || c < 0.0 || r >= rows as f64 || c >= cols as f64 {
            return None;
        }
        Some(Cell::new(r as usize, c as usize))
    }
}

impl Default for GridRegistration {
    fn default() -> Self {
        Self::antarctic_quarter_degree()
    }
}

/// Inclusive rectangle of grid indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionWindow {
    pub row_min: usize,
    pub row_max: usize,
    pub col_min: usize,
    pub col_max: usize,
}

impl RegionWindow {
    pub const fn new(row_min: usize, row_max: usize, col_min: usize, col_max: usize) -> Self {
        Self {
            row_min,
            row_max,
            col_min,
            col_max,
        }
    }

    pub const fn full(rows: usize, cols: usize) -> Self {
        Self::new(0, rows.saturating_sub(1), 0, cols.saturating_sub(1))
    }

    /// West Antarctic study region on the global 0.25 degree grid.
    pub const fn antarctic() -> Self {
        Self::new(0, 120, 200, 600)
    }

    pub fn rows(&self) -> usize {
        self.row_max - self.row_min + 1
    }

    pub fn cols(&self) -> usize {
        self.col_max - self.col_min + 1
    }

    pub fn contains(&self, cell: Cell) -> bool {
        (self.row_min..=self.row_max).contains(&cell.row)
            && (self.col_min..=self.col_max).contains(&cell.col)
    }

    pub fn check(&self, rows: usize, cols: usize) -> Result<(), GridError> {
        if self.row_min > self.row_max
            || self.col_min > self.col_max
            || self.row_max >= rows
            || self.col_max >= cols
        {
            return Err(GridError::WindowOutOfBounds {
                window: *self,
                rows,
                cols,
            });
        }
        Ok(())
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (self.row_min..=self.row_max)
            .flat_map(move |r| (self.col_min..=self.col_max).map(move |c| Cell::new(r, c)))
    }
}

impl fmt::Display for RegionWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{},{}:{}",
            self.row_min, self.row_max, self.col_min, self.col_max
        )
    }
}

impl FromStr for RegionWindow {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("antarctic") {
            return Ok(Self::antarctic());
        }
        let bad = || GridError::BadWindowSpec(s.to_string());
        let (rows, cols) = s.split_once(',').ok_or_else(bad)?;
        let range = |part: &str| -> Result<(usize, usize), GridError> {
            let (a, b) = part.trim().split_once(':').ok_or_else(bad)?;
            Ok((
                a.trim().parse().map_err(|_| bad())?,
                b.trim().parse().map_err(|_| bad())?,
            ))
        };
        let (r0, r1) = range(rows)?;
        let (c0, c1) = range(cols)?;
        if r0 > r1 || c0 > c1 {
            return Err(bad());
        }
        Ok(Self::new(r0, r1, c0, c1))
    }
}

/// Which sign of change counts as loss (retreat or melt) for a field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChangeOrientation {
    #[default]
    LossNegative,
    LossPositive,
}

impl ChangeOrientation {
    /// Magnitude of a loss-signed change, `None` for gains and zero.
    pub fn loss_magnitude(self, value: f64) -> Option<f64> {
        match self {
            Self::LossNegative if value < 0.0 => Some(-value),
            Self::LossPositive if value > 0.0 => Some(value),
            _ => None,
        }
    }

    /// Signed value carrying the given loss magnitude.
    pub fn loss_value(self, magnitude: f64) -> f64 {
        match self {
            Self::LossNegative => -magnitude,
            Self::LossPositive => magnitude,
        }
    }
}

impl FromStr for ChangeOrientation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "loss-negative" | "negative" => Ok(Self::LossNegative),
            "loss-positive" | "positive" => Ok(Self::LossPositive),
            other => Err(format!("unknown orientation `{other}`")),
        }
    }
}

impl fmt::Display for ChangeOrientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::LossNegative => "loss-negative",
            Self::LossPositive => "loss-positive",
        })
    }
}

/// Intensity band of a loss magnitude: `[median, q3)`, `[q3, ub)`, `[ub, inf)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Band {
    Moderate,
    High,
    Anomalous,
}

impl Band {
    pub const ALL: [Band; 3] = [Band::Moderate, Band::High, Band::Anomalous];

    pub fn name(self) -> &'static str {
        match self {
            Band::Moderate => "moderate",
            Band::High => "high",
            Band::Anomalous => "anomalous",
        }
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Band {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "moderate" | "median-q3" => Ok(Band::Moderate),
            "high" | "severe" | "q3-ub" => Ok(Band::High),
            "anomalous" | "extreme" | "ub" | ">ub" => Ok(Band::Anomalous),
            other => Err(format!("unknown band `{other}`")),
        }
    }
}

/// Whether a grid cell belongs to the source or the target phenomenon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellKind {
    Source,
    Target,
}

/// Default multiplier on the interquartile range for the upper fence.
pub const DEFAULT_UB_MULTIPLIER: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdBands {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub ub: f64,
    pub ub_multiplier: f64,
    pub orientation: ChangeOrientation,
    /// Number of oriented cells the quantiles were computed over.
    pub count: usize,
}

impl ThresholdBands {
    /// Band of a loss magnitude, `None` below the median.
    pub fn band_of(&self, magnitude: f64) -> Option<Band> {
        if magnitude >= self.ub {
            Some(Band::Anomalous)
        } else if magnitude >= self.q3 {
            Some(Band::High)
        } else if magnitude >= self.median {
            Some(Band::Moderate)
        } else {
            None
        }
    }

    /// Band of a raw (signed) change value under this field's orientation.
    pub fn band_of_value(&self, value: f64) -> Option<Band> {
        self.orientation
            .loss_magnitude(value)
            .and_then(|m| self.band_of(m))
    }

    pub fn passes(&self, value: f64, band: Band) -> bool {
        self.band_of_value(value) == Some(band)
    }

    /// Lower and upper bound of a band, upper exclusive.
    pub fn interval(&self, band: Band) -> (f64, f64) {
        match band {
            Band::Moderate => (self.median, self.q3),
            Band::High => (self.q3, self.ub),
            Band::Anomalous => (self.ub, f64::INFINITY),
        }
    }
}

/// Quantile of sorted data by linear interpolation at `h = (n - 1) p`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Threshold bands from a list of loss magnitudes.
pub fn bands_from_magnitudes(
    magnitudes: &[f64],
    orientation: ChangeOrientation,
    ub_multiplier: f64,
) -> Result<ThresholdBands, GridError> {
    if magnitudes.len() < 4 {
        return Err(GridError::InsufficientData {
            found: magnitudes.len(),
        });
    }
    let mut sorted = magnitudes.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let median = quantile_sorted(&sorted, 0.5);
    let q3 = quantile_sorted(&sorted, 0.75);
    Ok(ThresholdBands {
        q1,
        median,
        q3,
        ub: q3 + ub_multiplier * (q3 - q1),
        ub_multiplier,
        orientation,
        count: sorted.len(),
    })
}

/// A classified set of cells of one kind in one band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSet {
    pub kind: CellKind,
    pub band: Band,
    pub cells: Vec<ClassifiedCell>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedCell {
    pub cell: Cell,
    pub value: f64,
}

impl CellSet {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Dense change raster with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeGrid {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
    registration: GridRegistration,
}

impl ChangeGrid {
    /// Builds a grid, checking sizes and that every valid value is finite.
    pub fn new(
        rows: usize,
        cols: usize,
        values: Vec<f64>,
        valid: Vec<bool>,
        registration: GridRegistration,
    ) -> Result<Self, GridError> {
        if rows == 0 || cols == 0 {
            return Err(GridError::MalformedHeader(format!(
                "grid dimensions must be positive (got {rows}x{cols})"
            )));
        }
        let n = rows * cols;
        if values.len() != n || valid.len() != n {
            return Err(GridError::MalformedHeader(format!(
                "{rows}x{cols} grid needs {n} cells, got {} values and {} mask entries",
                values.len(),
                valid.len()
            )));
        }
        registration.validate()?;
        for (i, (&v, &ok)) in values.iter().zip(&valid).enumerate() {
            if ok && !v.is_finite() {
                return Err(GridError::NonFiniteValue {
                    row: i / cols,
                    col: i % cols,
                    value: v,
                });
            }
        }
        Ok(Self {
            rows,
            cols,
            values,
            valid,
            registration,
        })
    }

    /// Grid with every cell valid.
    pub fn from_values(
        rows: usize,
        cols: usize,
        values: Vec<f64>,
        registration: GridRegistration,
    ) -> Result<Self, GridError> {
        let valid = vec![true; values.len()];
        Self::new(rows, cols, values, valid, registration)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn registration(&self) -> &GridRegistration {
        &self.registration
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn index(&self, cell: Cell) -> usize {
        debug_assert!(cell.row < self.rows && cell.col < self.cols);
        cell.row * self.cols + cell.col
    }

    pub fn cell_of(&self, index: usize) -> Cell {
        Cell::new(index / self.cols, index % self.cols)
    }

    /// Value of a valid cell; `None` if out of range or masked.
    pub fn get(&self, cell: Cell) -> Option<f64> {
        if cell.row >= self.rows || cell.col >= self.cols {
            return None;
        }
        let i = self.index(cell);
        self.valid[i].then(|| self.values[i])
    }

    pub fn is_valid(&self, cell: Cell) -> bool {
        self.get(cell).is_some()
    }

    pub fn same_shape(&self, other: &ChangeGrid) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn window(&self) -> RegionWindow {
        RegionWindow::full(self.rows, self.cols)
    }

    /// Copy of this grid with new values at the same validity pattern.
    ///
    /// Only used internally where `values` has already been checked.
    pub(crate) fn with_values(&self, values: Vec<f64>) -> ChangeGrid {
        debug_assert_eq!(values.len(), self.values.len());
        ChangeGrid {
            values,
            ..self.clone()
        }
    }

    /// Indices of valid cells inside a window, in row-major order.
    pub fn valid_indices_in(&self, window: &RegionWindow) -> Vec<usize> {
        window
            .cells()
            .filter(|&c| c.row < self.rows && c.col < self.cols)
            .map(|c| self.index(c))
            .filter(|&i| self.valid[i])
            .collect()
    }
}

/// Nearest-neighbour resampling onto a `target_rows x target_cols` grid.
///
/// Each output cell copies value and validity from the input cell whose centre
/// is nearest to its own; exact ties go to the lower index. The registration is
/// rescaled so the geographic extent of the grid is unchanged.
pub fn resample_nearest(
    grid: &ChangeGrid,
    target_rows: usize,
    target_cols: usize,
) -> Result<ChangeGrid, GridError> {
    if target_rows == 0 || target_cols == 0 {
        return Err(GridError::MalformedHeader(format!(
            "resample target must be at least 1x1 (got {target_rows}x{target_cols})"
        )));
    }
    let row_map: Vec<usize> = (0..target_rows)
        .map(|i| nearest_source_index(i, grid.rows, target_rows))
        .collect();
    let col_map: Vec<usize> = (0..target_cols)
        .map(|j| nearest_source_index(j, grid.cols, target_cols))
        .collect();

    let mut values = Vec::with_capacity(target_rows * target_cols);
    let mut valid = Vec::with_capacity(target_rows * target_cols);
    for &r in &row_map {
        for &c in &col_map {
            let k = r * grid.cols + c;
            values.push(grid.values[k]);
            valid.push(grid.valid[k]);
        }
    }

    let reg = grid.registration;
    let row_scale = grid.rows as f64 / target_rows as f64;
    let col_scale = grid.cols as f64 / target_cols as f64;
    let dlat = reg.dlat * row_scale;
    let dlon = reg.dlon * col_scale;
    let registration = GridRegistration {
        lat0: reg.lat0 - reg.dlat / 2.0 + dlat / 2.0,
        lon0: reg.lon0 - reg.dlon / 2.0 + dlon / 2.0,
        dlat,
        dlon,
        cell_km: reg.cell_km * row_scale,
    };
    if target_rows == grid.rows && target_cols == grid.cols {
        return ChangeGrid::new(target_rows, target_cols, values, valid, reg);
    }
    ChangeGrid::new(target_rows, target_cols, values, valid, registration)
}

// Output cell `i` has its centre at input coordinate ((2i+1)n - m) / 2m.
// Nearest integer with ties rounded down is ceil(x - 1/2), done in integers.
fn nearest_source_index(i: usize, n: usize, m: usize) -> usize {
    let num = (2 * i as i64 + 1) * n as i64 - 2 * m as i64;
    let den = 2 * m as i64;
    let ceil = -((-num).div_euclid(den));
    ceil.clamp(0, n as i64 - 1) as usize
}

/// Sub-grid covering `window`; every retained cell keeps its latitude and
/// longitude.
pub fn crop_region(grid: &ChangeGrid, window: &RegionWindow) -> Result<ChangeGrid, GridError> {
    window.check(grid.rows, grid.cols)?;
    let (rows, cols) = (window.rows(), window.cols());
    let mut values = Vec::with_capacity(rows * cols);
    let mut valid = Vec::with_capacity(rows * cols);
    for r in window.row_min..=window.row_max {
        let start = r * grid.cols + window.col_min;
        let end = r * grid.cols + window.col_max + 1;
        values.extend_from_slice(&grid.values[start..end]);
        valid.extend_from_slice(&grid.valid[start..end]);
    }
    let reg = grid.registration;
    let registration = GridRegistration {
        lat0: reg.latitude(window.row_min),
        lon0: reg.longitude(window.col_min),
        ..reg
    };
    ChangeGrid::new(rows, cols, values, valid, registration)
}

/// Loss magnitudes of the valid cells of `grid` inside `window`.
pub fn oriented_magnitudes(
    grid: &ChangeGrid,
    orientation: ChangeOrientation,
    window: &RegionWindow,
) -> Vec<f64> {
    grid.valid_indices_in(window)
        .into_iter()
        .filter_map(|i| orientation.loss_magnitude(grid.values[i]))
        .collect()
}

/// Median, Q3 and upper fence of the loss magnitudes over the whole grid.
pub fn compute_threshold_bands(
    grid: &ChangeGrid,
    orientation: ChangeOrientation,
) -> Result<ThresholdBands, GridError> {
    compute_threshold_bands_in(grid, orientation, &grid.window(), DEFAULT_UB_MULTIPLIER)
}

/// Threshold bands restricted to the cells inside `window`.
pub fn compute_threshold_bands_in(
    grid: &ChangeGrid,
    orientation: ChangeOrientation,
    window: &RegionWindow,
    ub_multiplier: f64,
) -> Result<ThresholdBands, GridError> {
    window.check(grid.rows, grid.cols)?;
    let magnitudes = oriented_magnitudes(grid, orientation, window);
    bands_from_magnitudes(&magnitudes, orientation, ub_multiplier)
}

/// Valid, loss-signed cells inside `window` whose magnitude lies in `band`.
pub fn classify_cells(
    grid: &ChangeGrid,
    bands: &ThresholdBands,
    band: Band,
    kind: CellKind,
    window: &RegionWindow,
) -> CellSet {
    let cells = grid
        .valid_indices_in(window)
        .into_iter()
        .filter(|&i| bands.passes(grid.values[i], band))
        .map(|i| ClassifiedCell {
            cell: grid.cell_of(i),
            value: grid.values[i],
        })
        .collect();
    CellSet { kind, band, cells }
}

/// Per-cell `b - a`, valid where both inputs are valid.
pub fn diff_grids(a: &ChangeGrid, b: &ChangeGrid) -> Result<ChangeGrid, GridError> {
    if !a.same_shape(b) {
        return Err(GridError::DimMismatch(format!(
            "{}x{} vs {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    if a.registration != b.registration {
        return Err(GridError::DimMismatch(
            "grids have different registrations".into(),
        ));
    }
    let valid: Vec<bool> = a
        .valid
        .iter()
        .zip(&b.valid)
        .map(|(x, y)| *x && *y)
        .collect();
    let values = a
        .values
        .iter()
        .zip(&b.values)
        .zip(&valid)
        .map(|((x, y), ok)| if *ok { y - x } else { f64::NAN })
        .collect();
    ChangeGrid::new(a.rows, a.cols, values, valid, a.registration)
}
