//! Grid file formats.
//!
//! * `raw+json`: little-endian `f32` row-major payload next to a JSON sidecar
//!   `{rows, cols, lat0, lon0, dlat, dlon, cell_km, mask_path?}`. The payload
//!   lives at the sidecar path with extension `.raw`. The optional mask file
//!   holds one byte per cell (0 = invalid, 1 = valid); without it every finite
//!   cell is valid.
//! * `csv`: header `row,col,value[,valid]`, one line per cell. Cells missing
//!   from the file are invalid. Dimensions are inferred from the largest index
//!   and the registration is the global 0.25 degree grid.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::grid::{ChangeGrid, GridError, GridRegistration};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridFormat {
    RawJson,
    Csv,
}

impl GridFormat {
    pub fn detect(path: &Path) -> GridFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => GridFormat::Csv,
            _ => GridFormat::RawJson,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridHeader {
    pub rows: usize,
    pub cols: usize,
    pub lat0: f64,
    pub lon0: f64,
    pub dlat: f64,
    pub dlon: f64,
    pub cell_km: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_path: Option<String>,
}

impl GridHeader {
    fn registration(&self) -> GridRegistration {
        GridRegistration {
            lat0: self.lat0,
            lon0: self.lon0,
            dlat: self.dlat,
            dlon: self.dlon,
            cell_km: self.cell_km,
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> GridError {
    GridError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, message: impl ToString) -> GridError {
    GridError::Parse {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

/// Sidecar and payload paths for a `raw+json` grid given either of them.
pub fn raw_json_paths(path: &Path) -> (PathBuf, PathBuf) {
    let is_json = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        (path.to_path_buf(), path.with_extension("raw"))
    } else {
        (path.with_extension("json"), path.to_path_buf())
    }
}

pub fn load_grid(path: &Path, format: GridFormat) -> Result<ChangeGrid, GridError> {
    match format {
        GridFormat::RawJson => load_raw_json(path),
        GridFormat::Csv => load_csv(path),
    }
}

/// Loads a grid, picking the format from the file extension.
pub fn load_grid_auto(path: &Path) -> Result<ChangeGrid, GridError> {
    load_grid(path, GridFormat::detect(path))
}

fn load_raw_json(path: &Path) -> Result<ChangeGrid, GridError> {
    let (sidecar, payload) = raw_json_paths(path);
    let text = fs::read_to_string(&sidecar).map_err(|e| io_err(&sidecar, e))?;
    let header: GridHeader = serde_json::from_str(&text).map_err(|e| parse_err(&sidecar, e))?;
    let bytes = fs::read(&payload).map_err(|e| io_err(&payload, e))?;
    let n = header.rows * header.cols;
    if bytes.len() % 4 != 0 || bytes.len() / 4 != n {
        return Err(GridError::MalformedHeader(format!(
            "header declares {}x{} = {n} cells but {} holds {} bytes",
            header.rows,
            header.cols,
            payload.display(),
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    let valid = match &header.mask_path {
        Some(mask) => {
            let mask_path = sidecar
                .parent()
                .map(|dir| dir.join(mask))
                .unwrap_or_else(|| PathBuf::from(mask));
            let mask = fs::read(&mask_path).map_err(|e| io_err(&mask_path, e))?;
            if mask.len() != n {
                return Err(GridError::MalformedHeader(format!(
                    "mask {} holds {} bytes, expected {n}",
                    mask_path.display(),
                    mask.len()
                )));
            }
            mask.into_iter().map(|b| b != 0).collect()
        }
        None => values.iter().map(|v| v.is_finite()).collect(),
    };
    ChangeGrid::new(
        header.rows,
        header.cols,
        values,
        valid,
        header.registration(),
    )
}

fn load_csv(path: &Path) -> Result<ChangeGrid, GridError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(path, e))?;
    let headers = reader.headers().map_err(|e| parse_err(path, e))?.clone();
    let names: Vec<&str> = headers.iter().collect();
    if names.len() < 3 || names[..3] != ["row", "col", "value"] {
        return Err(GridError::MalformedHeader(format!(
            "{}: expected header row,col,value[,valid], got {}",
            path.display(),
            names.join(",")
        )));
    }
    let with_valid = names.get(3) == Some(&"valid");

    let mut entries = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(path, e))?;
        let field = |i: usize| record.get(i).unwrap_or("");
        let row: usize = field(0)
            .parse()
            .map_err(|_| parse_err(path, "bad row index"))?;
        let col: usize = field(1)
            .parse()
            .map_err(|_| parse_err(path, "bad col index"))?;
        let value: f64 = field(2)
            .parse()
            .or_else(|_| match field(2).to_ascii_lowercase().as_str() {
                "nan" | "" => Ok(f64::NAN),
                _ => Err(()),
            })
            .map_err(|_| parse_err(path, format!("bad value at ({row}, {col})")))?;
        let valid = if with_valid {
            matches!(field(3), "1" | "true" | "True")
        } else {
            value.is_finite()
        };
        entries.push((row, col, value, valid));
    }
    if entries.is_empty() {
        return Err(GridError::MalformedHeader(format!(
            "{} has no cells",
            path.display()
        )));
    }
    let rows = entries.iter().map(|e| e.0).max().unwrap_or(0) + 1;
    let cols = entries.iter().map(|e| e.1).max().unwrap_or(0) + 1;
    let mut values = vec![f64::NAN; rows * cols];
    let mut valid = vec![false; rows * cols];
    for (r, c, v, ok) in entries {
        values[r * cols + c] = v;
        valid[r * cols + c] = ok;
    }
    ChangeGrid::new(rows, cols, values, valid, GridRegistration::default())
}

/// Writes a `raw+json` grid. `path` may name either the sidecar or the payload.
/// A `.mask` file is written only when some cell is invalid.
pub fn save_grid(grid: &ChangeGrid, path: &Path) -> Result<(), GridError> {
    let (sidecar, payload) = raw_json_paths(path);
    let mut bytes = Vec::with_capacity(grid.len() * 4);
    for (&v, &ok) in grid.values().iter().zip(grid.valid_mask()) {
        let v = if ok { v as f32 } else { f32::NAN };
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&payload, bytes).map_err(|e| io_err(&payload, e))?;

    let mask_path = if grid.valid_mask().iter().all(|&v| v) {
        None
    } else {
        let mask = sidecar.with_extension("mask");
        let bytes: Vec<u8> = grid.valid_mask().iter().map(|&v| u8::from(v)).collect();
        fs::write(&mask, bytes).map_err(|e| io_err(&mask, e))?;
        mask.file_name().map(|n| n.to_string_lossy().into_owned())
    };
    let reg = grid.registration();
    let header = GridHeader {
        rows: grid.rows(),
        cols: grid.cols(),
        lat0: reg.lat0,
        lon0: reg.lon0,
        dlat: reg.dlat,
        dlon: reg.dlon,
        cell_km: reg.cell_km,
        mask_path,
    };
    let text = serde_json::to_string_pretty(&header).map_err(|e| parse_err(&sidecar, e))?;
    fs::write(&sidecar, text).map_err(|e| io_err(&sidecar, e))
}
