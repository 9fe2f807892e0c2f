//! Baseline feature transforms: Fryze active/non-active current split and
//! the FIT-PS period matrix.

pub mod fitps;
pub mod fryze;

pub use fitps::{fitps_flat, fitps_transform, FitPsMatrix};
pub use fryze::{fryze_decompose, FryzeComponents};
