use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::loss::LossKind;
use super::synth::{SynthConfig, SynthData};
use super::train::{predict, stream, substream, train, Optimizer, TrainConfig, TrainingCurves};
use crate::calib::AdvGroupConfig;
use crate::error::{Result, UqError};
use crate::io::{write_json, write_predictions, write_report, ReportFile};
use crate::real::mean_and_stderr;
use crate::scores::{metric_report, MetricReport};
use crate::uqcore::{validate, PredictionSet, ProbGrid};
use crate::viz::{build_plot_bundle, render_svg, write_plot_data, PlotOptions};

/// Name of the row evaluated with the data-generating distribution.
pub const GROUND_TRUTH: &str = "ground_truth";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyConfig {
    pub seeds: Vec<u64>,
    pub losses: Vec<LossKind>,
    pub epochs: usize,
    pub resample_probs: bool,
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub n_sampled_probs: usize,
    /// Split sizes and input range; the seed field is replaced per run.
    pub synth: SynthConfig,
    pub grid_step: f64,
    /// Adversarial group evaluation of every row; `None` skips it.
    pub adv: Option<AdvGroupConfig>,
    pub plot: PlotOptions,
}

impl CaseStudyConfig {
    pub fn new(seeds: Vec<u64>) -> Self {
        let base = TrainConfig::new(LossKind::Nll, 0);
        CaseStudyConfig {
            seeds,
            losses: LossKind::ALL.to_vec(),
            epochs: base.epochs,
            resample_probs: base.resample_probs,
            optimizer: base.optimizer,
            learning_rate: base.learning_rate,
            n_sampled_probs: base.n_sampled_probs,
            synth: SynthConfig::default(),
            grid_step: 0.01,
            adv: Some(AdvGroupConfig::default()),
            plot: PlotOptions::default(),
        }
    }

    pub fn train_config(&self, loss: LossKind, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            resample_probs: self.resample_probs,
            optimizer: self.optimizer,
            learning_rate: self.learning_rate,
            n_sampled_probs: self.n_sampled_probs,
            ..TrainConfig::new(loss, seed)
        }
    }
}

#[derive(Debug, Clone)]
pub struct MethodRun {
    pub method: String,
    pub predictions: PredictionSet<f64>,
    pub report: MetricReport<f64>,
    /// Absent for the ground-truth row.
    pub curves: Option<TrainingCurves>,
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub data: SynthData,
    /// Trained methods in configuration order, then the ground-truth row.
    pub methods: Vec<MethodRun>,
}

impl SeedRun {
    pub fn method(&self, name: &str) -> Option<&MethodRun> {
        self.methods.iter().find(|m| m.method == name)
    }

    pub fn ground_truth(&self) -> &MethodRun {
        self.method(GROUND_TRUTH).expect("every seed run has a ground-truth row")
    }
}

#[derive(Debug, Clone)]
pub struct CaseStudyResults {
    pub runs: Vec<SeedRun>,
    pub aggregate: AggregateTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStderr {
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: String,
    pub n_seeds: usize,
    pub rmse: MeanStderr,
    pub mae: MeanStderr,
    pub ece: MeanStderr,
    pub sharpness: MeanStderr,
    pub nll: MeanStderr,
    pub crps: MeanStderr,
    pub check: MeanStderr,
    pub interval: MeanStderr,
}

impl AggregateRow {
    pub fn cells(&self) -> [(&'static str, MeanStderr); 8] {
        [
            ("RMSE", self.rmse),
            ("MAE", self.mae),
            ("ECE", self.ece),
            ("Sharpness", self.sharpness),
            ("NLL", self.nll),
            ("CRPS", self.crps),
            ("Check", self.check),
            ("Interval", self.interval),
        ]
    }
}

/// Mean and standard error of each metric over seeds, one row per method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateTable {
    pub rows: Vec<AggregateRow>,
}

impl AggregateTable {
    pub fn row(&self, method: &str) -> Option<&AggregateRow> {
        self.rows.iter().find(|r| r.method == method)
    }
}

impl fmt::Display for AggregateTable {
    /// Two blocks: accuracy, calibration and sharpness first, then the
    /// proper scores.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name_w = self.rows.iter().map(|r| r.method.len()).max().unwrap_or(6).max(6);
        let cell = |m: MeanStderr| format!("{:.3} \u{b1} {:.3}", m.mean, m.stderr);
        for (block, range) in [(0, 0..4), (1, 4..8)] {
            if block > 0 {
                writeln!(f)?;
            }
            let cells: Vec<Vec<String>> = self
                .rows
                .iter()
                .map(|r| r.cells()[range.clone()].iter().map(|&(_, m)| cell(m)).collect())
                .collect();
            let heads: Vec<&str> = self.rows.first().map_or_else(Vec::new, |r| {
                r.cells()[range.clone()].iter().map(|&(h, _)| h).collect()
            });
            let widths: Vec<usize> = (0..heads.len())
                .map(|j| cells.iter().map(|c| c[j].chars().count()).chain([heads[j].len()]).max().unwrap_or(0))
                .collect();
            write!(f, "{:<name_w$}", "Method")?;
            for (h, w) in heads.iter().zip(&widths) {
                write!(f, "  {h:>w$}")?;
            }
            writeln!(f)?;
            for (r, c) in self.rows.iter().zip(&cells) {
                write!(f, "{:<name_w$}", r.method)?;
                for (v, w) in c.iter().zip(&widths) {
                    write!(f, "  {v:>w$}")?;
                }
                writeln!(f)?;
            }
        }
        Ok(())
    }
}

pub fn aggregate(runs: &[SeedRun]) -> Result<AggregateTable> {
    let Some(first) = runs.first() else {
        return Err(UqError::EmptyInput("no seed runs to aggregate".into()));
    };
    let mut rows = Vec::new();
    for m in &first.methods {
        let reports: Vec<&MetricReport<f64>> = runs
            .iter()
            .map(|r| {
                r.method(&m.method).map(|x| &x.report).ok_or_else(|| {
                    UqError::InvalidArgument(format!("seed {} has no `{}` row", r.seed, m.method))
                })
            })
            .collect::<Result<_>>()?;
        let stat = |f: fn(&MetricReport<f64>) -> f64| {
            let v: Vec<f64> = reports.iter().map(|r| f(r)).collect();
            let (mean, stderr) = mean_and_stderr(&v).expect("at least one seed");
            MeanStderr { mean, stderr }
        };
        rows.push(AggregateRow {
            method: m.method.clone(),
            n_seeds: reports.len(),
            rmse: stat(|r| r.rmse),
            mae: stat(|r| r.mae),
            ece: stat(|r| r.ece),
            sharpness: stat(|r| r.sharpness),
            nll: stat(|r| r.nll),
            crps: stat(|r| r.crps),
            check: stat(|r| r.check),
            interval: stat(|r| r.interval),
        });
    }
    Ok(AggregateTable { rows })
}

fn evaluate(
    cfg: &CaseStudyConfig,
    grid: &ProbGrid<f64>,
    seed: u64,
    data: &SynthData,
    method: String,
    predictions: PredictionSet<f64>,
    curves: Option<TrainingCurves>,
) -> Result<MethodRun> {
    let pair = validate(&predictions, &data.test.data)?;
    let report = match &cfg.adv {
        Some(a) => {
            // every row sees the same group draws
            let mut rng = substream(seed, stream::ADV_GROUPS);
            metric_report(&pair, grid, Some((a, &mut rng)))?
        }
        None => metric_report(&pair, grid, None)?,
    };
    Ok(MethodRun {
        method,
        predictions,
        report,
        curves,
    })
}

fn write_method(cfg: &CaseStudyConfig, seed: u64, data: &SynthData, run: &MethodRun, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| UqError::io(dir, e))?;
    write_report(
        &dir.join("report.json"),
        &ReportFile::from_report(&run.report, Some(cfg.grid_step), Some(seed)),
    )?;
    write_predictions(&dir.join("predictions.csv"), &run.predictions, &data.test.data)?;
    let pair = validate(&run.predictions, &data.test.data)?;
    let bundle = build_plot_bundle(
        &pair,
        &run.report.calibration_curve,
        run.curves.as_ref(),
        run.report.adv_group_curve.as_ref(),
        &cfg.plot,
    )?;
    let plots = dir.join("plots");
    write_plot_data(&bundle, &plots)?;
    render_svg(&bundle, &plots)?;
    Ok(())
}

/// Runs every configured method on every seed, evaluates them and the
/// ground-truth predictor on the test split, and aggregates across seeds.
///
/// With an output directory, each (seed, method) gets
/// `seed_<s>/<method>/{report.json, predictions.csv, plots/}` and the
/// directory root receives `aggregate.json`, `aggregate.txt` and
/// `config.json`.
pub fn run_case_study(cfg: &CaseStudyConfig, out_dir: Option<&Path>) -> Result<CaseStudyResults> {
    if cfg.seeds.is_empty() {
        return Err(UqError::Config("at least one seed is required".into()));
    }
    let grid = ProbGrid::with_step(cfg.grid_step)?;
    let mut runs = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let data = super::synthetic_for_seed(&SynthConfig { seed, ..cfg.synth })?;
        let mut methods = Vec::with_capacity(cfg.losses.len() + 1);
        for &loss in &cfg.losses {
            let (model, curves) = train(&data, &cfg.train_config(loss, seed))?;
            let preds = predict(&model, &data.test.data)?;
            methods.push(evaluate(cfg, &grid, seed, &data, loss.to_string(), preds, Some(curves))?);
        }
        let truth = data.test.truth.clone();
        methods.push(evaluate(cfg, &grid, seed, &data, GROUND_TRUTH.to_string(), truth, None)?);
        if let Some(out) = out_dir {
            for m in &methods {
                write_method(cfg, seed, &data, m, &out.join(format!("seed_{seed}")).join(&m.method))?;
            }
        }
        runs.push(SeedRun { seed, data, methods });
    }
    let aggregate = aggregate(&runs)?;
    if let Some(out) = out_dir {
        write_json(&out.join("aggregate.json"), &aggregate)?;
        let txt = out.join("aggregate.txt");
        std::fs::write(&txt, aggregate.to_string()).map_err(|e| UqError::io(&txt, e))?;
        write_json(&out.join("config.json"), cfg)?;
    }
    Ok(CaseStudyResults { runs, aggregate })
}
