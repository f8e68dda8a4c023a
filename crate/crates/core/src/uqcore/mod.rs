//! Data model shared by every metric: Gaussian predictions, datasets,
//! probability grids and the Gaussian special functions.

mod data;
pub mod gaussian;

pub use data::{validate, Checked, EvalDataset, PredictionSet, ProbGrid, QuantilePredictor, Split};
pub use gaussian::{gaussian_cdf, gaussian_quantile, std_normal_cdf, std_normal_pdf, std_normal_quantile};
