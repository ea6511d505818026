//! Band gaps and eigenvalue-in-gap counting for periodic metrics and curved
//! quantum waveguides.
//!
//! The crate discretizes Laplace–Beltrami operators on strips with P1 finite
//! elements, computes Floquet band structures and cell spectra, and counts
//! how many eigenvalues of a locally perturbed supercell cross a level inside
//! a spectral gap as the perturbation grows.

// `!(x > 0.0)` rejects NaN along with nonpositive values; index loops mirror
// the matrix formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod experiment;
pub mod fem;
pub mod gapcount;
pub mod geometry;
pub mod linalg;
pub mod spectra;

use thiserror::Error;

pub use fem::{AssembledForms, BoundarySpec, EdgeCondition, EndCondition, FemError, Mesh};
pub use gapcount::{CountingError, CountingReport, SweepOptions};
pub use geometry::{
    CurvatureProfile, Disk, GapInterval, GeometryError, MetricField, MetricSample,
    PerturbationFamily, PerturbationKind, Schedule,
};
pub use linalg::{HermitianMatrix, LinalgError, Spectrum};
pub use spectra::{BandStructure, CellProblem, Resolution, SpectraError};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
    #[error(transparent)]
    Counting(#[from] CountingError),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short name of the failure, used in reports and exit handling.
    pub fn name(&self) -> &'static str {
        match self {
            Error::Linalg(LinalgError::NotPositiveDefinite { .. }) => "NotPositiveDefinite",
            Error::Linalg(LinalgError::NoConvergence(_)) => "NoConvergence",
            Error::Linalg(LinalgError::DimensionMismatch(_)) => "DimensionMismatch",
            Error::Geometry(GeometryError::QuadratureUnderResolved(_)) => "QuadratureUnderResolved",
            Error::Geometry(GeometryError::TubeSelfIntersection { .. }) => "TubeSelfIntersection",
            Error::Geometry(GeometryError::NonPositiveFactor { .. }) => "NonPositiveFactor",
            Error::Geometry(GeometryError::SupportTooLarge(_)) => "SupportTooLarge",
            Error::Geometry(_) => "InvalidGeometry",
            Error::Fem(FemError::HoleTooCoarse { .. }) => "HoleTooCoarse",
            Error::Fem(FemError::Linalg(_)) => "NotPositiveDefinite",
            Error::Fem(_) => "InvalidMesh",
            Error::Spectra(SpectraError::AmbiguousLevel { .. }) => "AmbiguousLevel",
            Error::Spectra(SpectraError::SpectrumTruncated { .. }) => "SpectrumTruncated",
            Error::Spectra(SpectraError::NotEven) => "NotEven",
            Error::Spectra(SpectraError::InvalidParameter(_)) => "InvalidParameter",
            Error::Counting(CountingError::LevelNotInGap { .. }) => "LevelNotInGap",
            Error::Counting(CountingError::GridTooCoarse { .. }) => "GridTooCoarse",
            Error::Counting(CountingError::InvalidParameter(_)) => "InvalidParameter",
            Error::Config(_) => "ConfigError",
            Error::Io(_) => "IoError",
        }
    }

    /// Whether the failure comes from the inputs rather than the numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Io(_)
                | Error::Counting(CountingError::InvalidParameter(_))
                | Error::Counting(CountingError::LevelNotInGap { .. })
                | Error::Spectra(SpectraError::InvalidParameter(_))
                | Error::Spectra(SpectraError::NotEven)
                | Error::Geometry(GeometryError::SupportTooLarge(_))
                | Error::Geometry(GeometryError::InvalidParameter(_))
                | Error::Geometry(GeometryError::TooFewSamples(_))
                | Error::Geometry(GeometryError::TubeSelfIntersection { .. })
                | Error::Fem(FemError::TooFewNodes { .. })
                | Error::Fem(FemError::HoleTooCoarse { .. })
                | Error::Fem(FemError::CutOffMeshLine(_))
                | Error::Fem(FemError::PhaseNotUnimodular(_))
        )
    }
}
