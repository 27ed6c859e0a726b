//! Detection of statistically significant spatial linkage paths between two
//! gridded change fields.
//!
//! The pipeline bands each field by quantiles of its loss magnitudes, joins the
//! qualifying cells with a distance-limited Delaunay graph weighted by sign
//! agreement, enumerates bounded Source-to-Target paths and keeps those whose
//! positive-correlation score beats a field-permutation null.
//!
//! A benchmark mode builds the same kind of graph over elevated aerosol cells,
//! keeps long connected components and tests origin-to-station paths.

pub mod aar;
pub mod delaunay;
pub mod graph;
pub mod grid;
pub mod io;
pub mod paths;
pub mod pipeline;
pub mod significance;
pub mod synthetic;

use thiserror::Error;

pub use aar::AarError;
pub use delaunay::DelaunayError;
pub use graph::{GraphError, SpatialGraph};
pub use grid::{Band, Cell, CellKind, ChangeGrid, ChangeOrientation, GridError, RegionWindow};
pub use paths::{LinkagePath, PathError};
pub use pipeline::{ConfigError, RunConfig};
pub use significance::SignificanceError;
pub use synthetic::SyntheticError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Any error raised by the library, tagged with the module it came from.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Significance(#[from] SignificanceError),
    #[error(transparent)]
    Aar(#[from] AarError),
    #[error(transparent)]
    Synthetic(#[from] SyntheticError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

impl From<DelaunayError> for Error {
    fn from(e: DelaunayError) -> Self {
        Error::Graph(GraphError::Delaunay(e))
    }
}

impl Error {
    pub fn module(&self) -> &'static str {
        match self {
            Error::Grid(_) => "grid-core",
            Error::Graph(_) => "spatial-graph",
            Error::Path(_) => "path-extraction",
            Error::Significance(_) => "significance",
            Error::Aar(_) => "aar-benchmark",
            Error::Synthetic(_) => "synthetic",
            Error::Config(_) => "io-cli",
        }
    }

    /// A one-line suggestion for fixing the failure.
    pub fn hint(&self) -> &'static str {
        match self {
            Error::Grid(GridError::Io { .. }) => "check that the input path exists and is readable",
            Error::Grid(GridError::MalformedHeader(_)) => {
                "make rows x cols in the sidecar match the payload size"
            }
            Error::Grid(GridError::NonFiniteValue { .. }) => {
                "mark NaN/inf cells invalid in the mask file"
            }
            Error::Grid(GridError::WindowOutOfBounds { .. } | GridError::BadWindowSpec(_)) => {
                "pass --window r0:r1,c0:c1 with inclusive bounds inside the grid"
            }
            Error::Grid(GridError::InsufficientData { .. }) => {
                "widen the window or check --orientation; banding needs 4 loss-signed cells"
            }
            Error::Grid(GridError::DimMismatch(_)) => {
                "resample both inputs to the same grid first (spatial-link resample)"
            }
            Error::Grid(_) => "check the grid files and their sidecar",
            Error::Graph(GraphError::EmptySide { .. }) => {
                "try a lower band (e.g. --band-source moderate) or a wider window"
            }
            Error::Graph(GraphError::MaskDimMismatch { .. }) => {
                "the anomaly mask must have the same dimensions as the change grids"
            }
            Error::Graph(GraphError::Delaunay(_)) => "input points must be distinct",
            Error::Graph(_) => "regenerate graph.json with build-graph",
            Error::Path(PathError::PathExplosion { .. }) => {
                "lower --max-len, raise the band, or raise --cap"
            }
            Error::Path(_) => "regenerate paths.json against the same graph.json",
            Error::Significance(SignificanceError::CellOutsideNull { .. }) => {
                "pass the same grids, window and mask that built the graph"
            }
            Error::Significance(_) => "use --m of at least 1 and one result per path",
            Error::Aar(AarError::StationUnreachable { .. }) => {
                "raise --snap-km or check the station coordinates"
            }
            Error::Aar(_) => "check the aerosol mask, values and origins inputs",
            Error::Synthetic(_) => "keep chain spacing within --dmax and length within --max-len",
            Error::Config(_) => "check the command line flags and the --config file",
        }
    }
}
