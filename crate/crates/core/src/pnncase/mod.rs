//! Probabilistic neural network case study: heteroscedastic synthetic data,
//! a mean/log-variance network trained on one of four proper scores, and
//! the multi-seed evaluation protocol.

pub mod loss;
pub mod model;
mod study;
pub mod synth;
pub mod train;

pub use loss::{loss_and_grad, loss_and_grad_with_levels, Batch, Levels, LossKind};
pub use model::{Gradient, PnnModel};
pub use study::{aggregate, run_case_study, AggregateRow, AggregateTable, CaseStudyConfig, CaseStudyResults, MeanStderr, MethodRun, SeedRun, GROUND_TRUTH};
pub use synth::{generate_synthetic, mean_function, noise_sd, LabeledSplit, SynthConfig, SynthData};
pub use train::{predict, train, Optimizer, TrainConfig, TrainingCurves};

/// Synthetic splits for `seed`, drawn from the seed's data substream.
pub fn synthetic_for_seed(cfg: &SynthConfig) -> crate::Result<SynthData> {
    generate_synthetic(cfg, &mut train::substream(cfg.seed, train::stream::DATA))
}
