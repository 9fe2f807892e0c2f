//! Linear decompositions of raw current windows and their fusion into the
//! classifier's input features.

pub mod fusion;
pub mod ica;
pub mod linalg;
pub mod pca;

pub use fusion::{apply_fusion, fit_fusion, fuse_and_normalize, FusionMode, FusionParams, FusionTransform};
pub use ica::{ica_fit, ica_transform, kurtosis, rank_select_ica, IcaModel, IcaParams, Nonlinearity};
pub use pca::{mean_center, pca_fit, pca_transform, PcaModel};
