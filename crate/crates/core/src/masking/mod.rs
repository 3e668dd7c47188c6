//! Vegetation/background separation: standardize, PCA, then 2-means.

pub mod kmeans;
pub mod pca;
pub mod vegetation;

pub use kmeans::{kmeans, ClusterModel};
pub use pca::{fit_pca, standardize, PcaModel, Standardization};
pub use vegetation::{vegetation_mask, write_mask_csv, write_pgm, MaskWarning, VegetationMask};

#[derive(Debug, thiserror::Error)]
pub enum MaskingError {
    #[error("empty input")]
    Empty,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("need at least {need} points, got {have}")]
    TooFewPoints { have: usize, need: usize },
    #[error("all-zero matrix: no variance to decompose")]
    Degenerate,
    #[error("variance target {0} not in (0, 1]")]
    VarianceTarget(f64),
    #[error("non-finite value in input")]
    NonFinite,
    #[error("no pixel has all five traits valid")]
    NoValidPixels,
    #[error("eigendecomposition failed")]
    Eigen,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
