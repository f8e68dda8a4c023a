use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use uqkit::calib::AdvGroupConfig;
use uqkit::io::{read_json, read_predictions, write_json, write_report, ReportFile};
use uqkit::pnncase::{run_case_study, CaseStudyConfig, LossKind, Optimizer};
use uqkit::recal::{fit_isotonic, recalibrated_report, RecalibrationMap};
use uqkit::scores::metric_report;
use uqkit::viz::{build_plot_bundle, read_plot_data, render_svg, write_plot_data, PlotOptions, MANIFEST};
use uqkit::{calib, validate, ProbGrid, Split, UqError};

#[derive(Parser)]
#[command(name = "uqkit", version, about = "Evaluate, recalibrate and plot predictive uncertainty of regression models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the metric report of a prediction file.
    Eval(EvalArgs),
    /// Fit an isotonic recalibration map on one file and apply it to another.
    Recalibrate(RecalArgs),
    /// Train and evaluate the probabilistic network case study.
    CaseStudy(CaseStudyArgs),
    /// Render SVG figures from plot data written by eval or case-study.
    Plot(PlotArgs),
}

#[derive(Args)]
struct EvalArgs {
    /// CSV with columns y, mu, sigma and optional x0, x1, ...
    input: PathBuf,
    /// Spacing of the probability grid.
    #[arg(long, default_value_t = 0.01)]
    grid_step: f64,
    /// Also compute the adversarial group calibration curve.
    #[arg(long)]
    adv: bool,
    /// Seed for the adversarial group draws.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report path; printed to standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write plot data and SVG figures to this directory.
    #[arg(long)]
    plot_dir: Option<PathBuf>,
}

#[derive(Args)]
struct RecalArgs {
    /// Prediction file the map is fitted on.
    recal: PathBuf,
    /// Prediction file the map is applied to.
    test: PathBuf,
    #[arg(long)]
    out_map: Option<PathBuf>,
    /// Writes {"before": report, "after": report}.
    #[arg(long)]
    out_report: Option<PathBuf>,
    /// Apply this map instead of fitting one.
    #[arg(long)]
    map_in: Option<PathBuf>,
    #[arg(long, default_value_t = 0.01)]
    grid_step: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Args)]
struct CaseStudyArgs {
    /// Comma-separated training losses.
    #[arg(long, value_delimiter = ',', default_value = "nll,crps,check,interval")]
    losses: Vec<LossKind>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    seeds: Vec<u64>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 2000)]
    epochs: usize,
    /// Draw new probability levels every epoch for check and interval losses.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    resample_probs: bool,
    #[arg(long, value_enum, default_value = "adam")]
    optimizer: OptimizerArg,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0.01)]
    grid_step: f64,
    /// Skip the adversarial group calibration curves.
    #[arg(long)]
    no_adv: bool,
}

#[derive(Args)]
struct PlotArgs {
    /// Directory holding manifest.json, or a tree of such directories.
    dir: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct ReportPair {
    before: ReportFile,
    after: ReportFile,
}

/// Writes to stdout, treating a closed pipe as success.
fn say(text: &str) -> uqkit::Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(UqError::io("<stdout>", e)),
        _ => Ok(()),
    }
}

fn to_json<S: Serialize>(value: &S) -> uqkit::Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| UqError::Numeric(e.to_string()))
}

fn emit_report(report: &ReportFile, out: Option<&Path>) -> uqkit::Result<()> {
    match out {
        Some(path) => write_report(path, report),
        None => {
            report.check()?;
            say(&to_json(report)?)
        }
    }
}

fn eval(a: &EvalArgs) -> uqkit::Result<()> {
    let grid = ProbGrid::with_step(a.grid_step)?;
    let (preds, data) = read_predictions(&a.input, Split::Test)?;
    let pair = validate(&preds, &data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let adv_cfg = AdvGroupConfig::default();
    let adv = a.adv.then_some((&adv_cfg, &mut rng as &mut dyn rand_chacha::rand_core::RngCore));
    let report = metric_report(&pair, &grid, adv)?;
    let file = ReportFile::from_report(&report, Some(a.grid_step), a.adv.then_some(a.seed));
    emit_report(&file, a.out.as_deref())?;
    if let Some(dir) = &a.plot_dir {
        let bundle = build_plot_bundle(
            &pair,
            &report.calibration_curve,
            None,
            report.adv_group_curve.as_ref(),
            &PlotOptions::default(),
        )?;
        write_plot_data(&bundle, dir)?;
        render_svg(&bundle, dir)?;
    }
    Ok(())
}

fn recalibrate(a: &RecalArgs) -> uqkit::Result<()> {
    let grid = ProbGrid::with_step(a.grid_step)?;
    let (rp, rd) = read_predictions(&a.recal, Split::Recalibration)?;
    let (tp, td) = read_predictions(&a.test, Split::Test)?;
    let recal = validate(&rp, &rd)?;
    let test = validate(&tp, &td)?;
    let map: RecalibrationMap<f64> = match &a.map_in {
        Some(path) => read_json(path)?,
        None => {
            let curve = calib::calibration_curve(&recal, &grid)?;
            fit_isotonic(grid.probs(), &curve.observed)?
        }
    };
    let before = metric_report(&test, &grid, None)?;
    let after = recalibrated_report(&test, &map, &grid)?;
    let pair = ReportPair {
        before: ReportFile::from_report(&before, Some(a.grid_step), None),
        after: ReportFile::from_report(&after, Some(a.grid_step), None),
    };
    pair.before.check()?;
    pair.after.check()?;
    if let Some(path) = &a.out_map {
        write_json(path, &map)?;
    }
    match &a.out_report {
        Some(path) => write_json(path, &pair)?,
        None => say(&to_json(&pair)?)?,
    }
    eprintln!("test ECE {:.6} -> {:.6}", before.ece, after.ece);
    Ok(())
}

fn case_study(a: &CaseStudyArgs) -> uqkit::Result<()> {
    let mut losses: Vec<LossKind> = Vec::new();
    for &l in &a.losses {
        if !losses.contains(&l) {
            losses.push(l);
        }
    }
    let cfg = CaseStudyConfig {
        losses,
        epochs: a.epochs,
        resample_probs: a.resample_probs,
        optimizer: match a.optimizer {
            OptimizerArg::Adam => Optimizer::adam(),
            OptimizerArg::Sgd => Optimizer::Sgd,
        },
        learning_rate: a.lr,
        grid_step: a.grid_step,
        adv: (!a.no_adv).then(AdvGroupConfig::default),
        ..CaseStudyConfig::new(a.seeds.clone())
    };
    let res = run_case_study(&cfg, Some(&a.out_dir))?;
    say(&res.aggregate.to_string())
}

/// Directories under `root` (inclusive) holding a plot manifest, sorted.
fn plot_dirs(root: &Path, rel: &Path, found: &mut Vec<PathBuf>) -> uqkit::Result<()> {
    let here = root.join(rel);
    if here.join(MANIFEST).is_file() {
        found.push(rel.to_path_buf());
    }
    let mut entries: Vec<PathBuf> = std::fs::read_dir(&here)
        .map_err(|e| UqError::io(&here, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_ok_and(|t| t.is_dir()))
        .map(|e| rel.join(e.file_name()))
        .collect();
    entries.sort();
    for e in entries {
        plot_dirs(root, &e, found)?;
    }
    Ok(())
}

fn plot(a: &PlotArgs) -> uqkit::Result<()> {
    let mut dirs = Vec::new();
    plot_dirs(&a.dir, Path::new(""), &mut dirs)?;
    if dirs.is_empty() {
        return Err(UqError::io(
            a.dir.join(MANIFEST),
            std::io::Error::new(std::io::ErrorKind::NotFound, "no plot data found"),
        ));
    }
    for rel in dirs {
        let bundle = read_plot_data(&a.dir.join(&rel))?;
        for path in render_svg(&bundle, &a.out_dir.join(&rel))? {
            say(&format!("{}\n", path.display()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Eval(a) => eval(a),
        Command::Recalibrate(a) => recalibrate(a),
        Command::CaseStudy(a) => case_study(a),
        Command::Plot(a) => plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
