//! Metrics, recalibration and visualization for the predictive uncertainty
//! of regression models.
//!
//! The metric layers ([`uqcore`], [`calib`], [`scores`], [`recal`]) are
//! generic over the scalar type through [`Real`]; the neural-network case
//! study ([`pnncase`]), plotting ([`viz`]) and file formats ([`io`]) work in
//! `f64`. Concrete aliases for both precisions are exported below.

pub mod calib;
pub mod error;
pub mod io;
pub mod pnncase;
mod real;
pub mod recal;
pub mod scores;
pub mod uqcore;
pub mod viz;

pub use error::{Result, UqError};
pub use real::{compensated_sum, mean, mean_and_stderr, Real};
pub use uqcore::{validate, Checked, EvalDataset, PredictionSet, ProbGrid, QuantilePredictor, Split};

pub type PredictionSet64 = uqcore::PredictionSet<f64>;
pub type PredictionSet32 = uqcore::PredictionSet<f32>;
pub type EvalDataset64 = uqcore::EvalDataset<f64>;
pub type EvalDataset32 = uqcore::EvalDataset<f32>;
pub type ProbGrid64 = uqcore::ProbGrid<f64>;
pub type ProbGrid32 = uqcore::ProbGrid<f32>;
pub type CalibrationCurve64 = calib::CalibrationCurve<f64>;
pub type AdvGroupCurve64 = calib::AdvGroupCurve<f64>;
pub type MetricReport64 = scores::MetricReport<f64>;
pub type MetricReport32 = scores::MetricReport<f32>;
pub type RecalibrationMap64 = recal::RecalibrationMap<f64>;
pub type RecalibrationMap32 = recal::RecalibrationMap<f32>;

/// Version string recorded in report provenance.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
