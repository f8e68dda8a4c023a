//! Plot data for the standard diagnostic figures, written as CSV series and
//! rendered to static SVG.
//!
//! Five series families are assembled into a [`PlotBundle`]: a confidence
//! band over the input, prediction intervals ordered by observation, the
//! calibration curve, training curves, and the adversarial group curve.
//! Series that are not available (no 1-d input, no training run, no
//! adversarial evaluation) are left out and listed as omitted in the
//! directory manifest.

mod svg;

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calib::{AdvGroupCurve, CalibrationCurve};
use crate::error::{Result, UqError};
use crate::io::{fmt_f64, read_json, write_json};
use crate::pnncase::TrainingCurves;
use crate::uqcore::{gaussian_quantile, Checked};

pub use svg::render_svg;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlotOptions {
    /// Band half-width in predicted standard deviations.
    pub band_sds: f64,
    /// Central coverage of the ordered prediction intervals.
    pub interval_coverage: f64,
}

impl Default for PlotOptions {
    fn default() -> Self {
        PlotOptions {
            band_sds: 2.0,
            interval_coverage: 0.95,
        }
    }
}

/// Mean and band against the first input feature, sorted by x.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BandSeries {
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub y: Vec<f64>,
}

/// Central intervals with points sorted by observed target.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IntervalSeries {
    /// Position of the point in the original dataset.
    pub index: Vec<usize>,
    pub y: Vec<f64>,
    pub mean: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CalibrationSeries {
    pub expected: Vec<f64>,
    pub observed: Vec<f64>,
    pub diagonal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingSeries {
    pub epoch: Vec<usize>,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub ece: Vec<f64>,
    pub sharpness: Vec<f64>,
    pub gt_sharpness: Vec<f64>,
    pub is_best: Vec<bool>,
}

impl TrainingSeries {
    pub fn best_epoch(&self) -> Option<usize> {
        self.is_best.iter().position(|&b| b).map(|i| self.epoch[i])
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdversarialSeries {
    pub fraction: Vec<f64>,
    pub mean_worst_ece: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlotBundle {
    pub band: Option<BandSeries>,
    pub intervals: Option<IntervalSeries>,
    pub calibration: Option<CalibrationSeries>,
    pub training: Option<TrainingSeries>,
    pub adversarial: Option<AdversarialSeries>,
}

fn sort_order(keys: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]).then(a.cmp(&b)));
    order
}

pub fn build_plot_bundle(
    pair: &Checked<'_, f64>,
    calibration: &CalibrationCurve<f64>,
    training: Option<&TrainingCurves>,
    adv: Option<&AdvGroupCurve<f64>>,
    opts: &PlotOptions,
) -> Result<PlotBundle> {
    if !(opts.band_sds > 0.0 && opts.band_sds.is_finite()) {
        return Err(UqError::InvalidArgument(format!("band width must be positive, got {}", opts.band_sds)));
    }
    if !(opts.interval_coverage > 0.0 && opts.interval_coverage < 1.0) {
        return Err(UqError::InvalidArgument(format!(
            "interval coverage must lie in (0, 1), got {}",
            opts.interval_coverage
        )));
    }
    let preds = pair.preds();
    let (mu, sd, y) = (preds.means(), preds.stddevs(), pair.targets());

    let band = if pair.data().inputs().iter().all(|x| !x.is_empty()) && !pair.is_empty() {
        let xs: Vec<f64> = pair.data().inputs().iter().map(|x| x[0]).collect();
        let order = sort_order(&xs);
        let k = opts.band_sds;
        Some(BandSeries {
            x: order.iter().map(|&i| xs[i]).collect(),
            mean: order.iter().map(|&i| mu[i]).collect(),
            lo: order.iter().map(|&i| mu[i] - k * sd[i]).collect(),
            hi: order.iter().map(|&i| mu[i] + k * sd[i]).collect(),
            y: order.iter().map(|&i| y[i]).collect(),
        })
    } else {
        None
    };

    let order = sort_order(y);
    let tail = 0.5 * (1.0 - opts.interval_coverage);
    let mut lo = Vec::with_capacity(order.len());
    let mut hi = Vec::with_capacity(order.len());
    for &i in &order {
        lo.push(gaussian_quantile(mu[i], sd[i], tail)?);
        hi.push(gaussian_quantile(mu[i], sd[i], 1.0 - tail)?);
    }
    let intervals = IntervalSeries {
        index: order.clone(),
        y: order.iter().map(|&i| y[i]).collect(),
        mean: order.iter().map(|&i| mu[i]).collect(),
        lo,
        hi,
    };

    let expected = calibration.expected.probs().to_vec();
    let calibration = CalibrationSeries {
        diagonal: expected.clone(),
        expected,
        observed: calibration.observed.clone(),
    };

    let training = training.filter(|c| !c.is_empty()).map(|c| TrainingSeries {
        epoch: (0..c.len()).collect(),
        train_loss: c.train_loss.clone(),
        val_loss: c.val_loss.clone(),
        ece: c.test_ece.clone(),
        sharpness: c.test_sharpness.clone(),
        gt_sharpness: vec![c.gt_sharpness; c.len()],
        is_best: (0..c.len()).map(|e| Some(e) == c.best_epoch).collect(),
    });

    let adversarial = adv.filter(|a| !a.group_fractions.is_empty()).map(|a| AdversarialSeries {
        fraction: a.group_fractions.clone(),
        mean_worst_ece: a.mean_worst_ece.clone(),
        lo: a.mean_worst_ece.iter().zip(&a.stderr).map(|(m, s)| m - s).collect(),
        hi: a.mean_worst_ece.iter().zip(&a.stderr).map(|(m, s)| m + s).collect(),
    });

    Ok(PlotBundle {
        band,
        intervals: Some(intervals),
        calibration: Some(calibration),
        training,
        adversarial,
    })
}

/// Name, file and column layout of each series, in manifest order.
pub const SERIES: [(&str, &str, &[&str]); 5] = [
    ("band", "band.csv", &["x", "mean", "lo", "hi", "y"]),
    ("intervals", "intervals.csv", &["index", "y", "mean", "lo", "hi"]),
    ("calibration", "calibration.csv", &["expected", "observed", "diagonal"]),
    (
        "training",
        "training.csv",
        &["epoch", "train_loss", "val_loss", "ece", "sharpness", "gt_sharpness", "is_best"],
    ),
    ("adversarial", "adversarial.csv", &["fraction", "mean_worst_ece", "lo", "hi"]),
];

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesEntry {
    pub name: String,
    pub file: String,
    pub columns: Vec<String>,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub series: Vec<SeriesEntry>,
    pub omitted: Vec<String>,
}

/// Columns of one series as text, already formatted.
fn columns_of(bundle: &PlotBundle, name: &str) -> Option<Vec<Vec<String>>> {
    let f = |v: &[f64]| v.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>();
    let ints = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>();
    match name {
        "band" => bundle.band.as_ref().map(|s| vec![f(&s.x), f(&s.mean), f(&s.lo), f(&s.hi), f(&s.y)]),
        "intervals" => bundle
            .intervals
            .as_ref()
            .map(|s| vec![ints(&s.index), f(&s.y), f(&s.mean), f(&s.lo), f(&s.hi)]),
        "calibration" => bundle
            .calibration
            .as_ref()
            .map(|s| vec![f(&s.expected), f(&s.observed), f(&s.diagonal)]),
        "training" => bundle.training.as_ref().map(|s| {
            vec![
                ints(&s.epoch),
                f(&s.train_loss),
                f(&s.val_loss),
                f(&s.ece),
                f(&s.sharpness),
                f(&s.gt_sharpness),
                s.is_best.iter().map(|&b| u8::from(b).to_string()).collect(),
            ]
        }),
        "adversarial" => bundle
            .adversarial
            .as_ref()
            .map(|s| vec![f(&s.fraction), f(&s.mean_worst_ece), f(&s.lo), f(&s.hi)]),
        _ => None,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> UqError {
    UqError::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

/// Writes one CSV per available series plus `manifest.json`.
pub fn write_plot_data(bundle: &PlotBundle, dir: &Path) -> Result<Manifest> {
    std::fs::create_dir_all(dir).map_err(|e| UqError::io(dir, e))?;
    let mut manifest = Manifest {
        series: Vec::new(),
        omitted: Vec::new(),
    };
    for (name, file, header) in SERIES {
        let path = dir.join(file);
        let Some(cols) = columns_of(bundle, name) else {
            manifest.omitted.push(name.to_string());
            // stale files from an earlier run would contradict the manifest
            if path.exists() {
                std::fs::remove_file(&path).map_err(|e| UqError::io(&path, e))?;
            }
            continue;
        };
        let rows = cols[0].len();
        if cols.iter().any(|c| c.len() != rows) {
            return Err(UqError::Shape {
                what: "plot series columns",
                left: rows,
                right: cols.iter().map(Vec::len).find(|&l| l != rows).unwrap_or(rows),
            });
        }
        let f = File::create(&path).map_err(|e| UqError::io(&path, e))?;
        let mut w = csv::Writer::from_writer(std::io::BufWriter::new(f));
        w.write_record(header).map_err(|e| csv_err(&path, e))?;
        for r in 0..rows {
            w.write_record(cols.iter().map(|c| c[r].as_str())).map_err(|e| csv_err(&path, e))?;
        }
        w.flush().map_err(|e| UqError::io(&path, e))?;
        manifest.series.push(SeriesEntry {
            name: name.to_string(),
            file: file.to_string(),
            columns: header.iter().map(|s| s.to_string()).collect(),
            rows,
        });
    }
    write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

fn read_columns(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let f = File::open(path).map_err(|e| UqError::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(f);
    let got = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if got.iter().ne(header.iter().copied()) {
        return Err(UqError::Format {
            path: path.to_path_buf(),
            reason: format!("expected columns {}, found {}", header.join(","), got.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut cols = vec![Vec::new(); header.len()];
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        for (c, col) in cols.iter_mut().enumerate() {
            let raw = &rec[c];
            col.push(raw.parse().map_err(|_| UqError::Parse {
                row: i + 1,
                line,
                column: header[c].to_string(),
                reason: format!("`{raw}` is not a number"),
            })?);
        }
    }
    Ok(cols)
}

fn to_usize(v: Vec<f64>) -> Vec<usize> {
    v.into_iter().map(|x| x as usize).collect()
}

/// Reads a directory written by [`write_plot_data`]. Every series listed in
/// the manifest must be present.
pub fn read_plot_data(dir: &Path) -> Result<PlotBundle> {
    let manifest: Manifest = read_json(&dir.join(MANIFEST))?;
    let mut bundle = PlotBundle::default();
    for entry in &manifest.series {
        let Some(&(name, file, header)) = SERIES.iter().find(|s| s.0 == entry.name) else {
            return Err(UqError::Format {
                path: dir.join(MANIFEST),
                reason: format!("unknown series `{}`", entry.name),
            });
        };
        let path: PathBuf = dir.join(file);
        let mut c = read_columns(&path, header)?.into_iter();
        let mut next = || c.next().unwrap_or_default();
        match name {
            "band" => {
                bundle.band = Some(BandSeries {
                    x: next(),
                    mean: next(),
                    lo: next(),
                    hi: next(),
                    y: next(),
                })
            }
            "intervals" => {
                bundle.intervals = Some(IntervalSeries {
                    index: to_usize(next()),
                    y: next(),
                    mean: next(),
                    lo: next(),
                    hi: next(),
                })
            }
            "calibration" => {
                bundle.calibration = Some(CalibrationSeries {
                    expected: next(),
                    observed: next(),
                    diagonal: next(),
                })
            }
            "training" => {
                bundle.training = Some(TrainingSeries {
                    epoch: to_usize(next()),
                    train_loss: next(),
                    val_loss: next(),
                    ece: next(),
                    sharpness: next(),
                    gt_sharpness: next(),
                    is_best: next().into_iter().map(|b| b != 0.0).collect(),
                })
            }
            _ => {
                bundle.adversarial = Some(AdversarialSeries {
                    fraction: next(),
                    mean_worst_ece: next(),
                    lo: next(),
                    hi: next(),
                })
            }
        }
    }
    Ok(bundle)
}
