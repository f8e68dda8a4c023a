//! On-disk formats: prediction CSV files and JSON metric reports.
//!
//! Prediction files are comma-separated with a header row naming the
//! columns `y`, `mu`, `sigma` and optionally `x0`, `x1`, ... Other
//! columns are ignored. Floats are written in shortest round-trip form, so
//! a file read back reproduces the values bit for bit.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calib::AdvGroupCurve;
use crate::error::{Result, UqError};
use crate::scores::MetricReport;
use crate::uqcore::{EvalDataset, PredictionSet, Split};
use crate::TOOL_VERSION;

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn csv_error(path: &Path, e: csv::Error) -> UqError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => UqError::io(path, io),
        other => UqError::Format {
            path: path.to_path_buf(),
            reason: format!("{other:?}"),
        },
    }
}

struct Columns {
    y: usize,
    mu: usize,
    sigma: usize,
    /// (feature index, column index), sorted by feature index.
    xs: Vec<(usize, usize)>,
}

fn locate_columns(headers: &csv::StringRecord, path: &Path) -> Result<Columns> {
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| UqError::Format {
            path: path.to_path_buf(),
            reason: format!("missing required column `{name}`"),
        })
    };
    let mut xs: Vec<(usize, usize)> = headers
        .iter()
        .enumerate()
        .filter_map(|(c, h)| {
            let rest = h.strip_prefix('x')?;
            if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
                return None;
            }
            rest.parse().ok().map(|k| (k, c))
        })
        .collect();
    xs.sort_unstable();
    Ok(Columns {
        y: find("y")?,
        mu: find("mu")?,
        sigma: find("sigma")?,
        xs,
    })
}

/// Parses a prediction file from any reader; `path` is used in messages.
pub fn parse_predictions<R: Read>(
    reader: R,
    path: &Path,
    split: Split,
) -> Result<(PredictionSet<f64>, EvalDataset<f64>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let cols = locate_columns(&headers, path)?;
    let (mut means, mut sds, mut ys, mut inputs) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |c: usize| -> Result<f64> {
            let name = &headers[c];
            let raw = rec.get(c).ok_or_else(|| UqError::Parse {
                row,
                line,
                column: name.to_string(),
                reason: "field is missing".into(),
            })?;
            let v: f64 = raw.parse().map_err(|_| UqError::Parse {
                row,
                line,
                column: name.to_string(),
                reason: format!("`{raw}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(UqError::Parse {
                    row,
                    line,
                    column: name.to_string(),
                    reason: format!("value {raw} is not finite"),
                });
            }
            Ok(v)
        };
        let y = field(cols.y)?;
        let mu = field(cols.mu)?;
        let sigma = field(cols.sigma)?;
        if sigma <= 0.0 {
            return Err(UqError::Parse {
                row,
                line,
                column: "sigma".into(),
                reason: format!("standard deviation must be positive, got {sigma}"),
            });
        }
        let x = cols.xs.iter().map(|&(_, c)| field(c)).collect::<Result<Vec<_>>>()?;
        ys.push(y);
        means.push(mu);
        sds.push(sigma);
        inputs.push(x);
    }
    Ok((PredictionSet::new(means, sds), EvalDataset::new(inputs, ys, split)))
}

pub fn read_predictions(path: &Path, split: Split) -> Result<(PredictionSet<f64>, EvalDataset<f64>)> {
    let f = File::open(path).map_err(|e| UqError::io(path, e))?;
    parse_predictions(f, path, split)
}

pub fn write_predictions(path: &Path, preds: &PredictionSet<f64>, data: &EvalDataset<f64>) -> Result<()> {
    if preds.len() != data.len() {
        return Err(UqError::Shape {
            what: "predictions vs targets",
            left: preds.len(),
            right: data.len(),
        });
    }
    let dim = data.inputs().first().map_or(0, Vec::len);
    let f = File::create(path).map_err(|e| UqError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(f));
    let mut header = vec!["y".to_string(), "mu".into(), "sigma".into()];
    header.extend((0..dim).map(|k| format!("x{k}")));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for i in 0..data.len() {
        let mut rec = vec![
            fmt_f64(data.targets()[i]),
            fmt_f64(preds.means()[i]),
            fmt_f64(preds.stddevs()[i]),
        ];
        rec.extend(data.inputs()[i].iter().map(|&v| fmt_f64(v)));
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| UqError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSection {
    pub expected: Vec<f64>,
    pub observed: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Spacing of the probability grid when it is evenly spaced.
    pub grid_step: Option<f64>,
    pub grid_levels: usize,
    pub seed: Option<u64>,
    pub tool_version: String,
    /// True when quantile-based metrics come from recalibrated quantiles;
    /// nll, crps and sharpness are then those of the original Gaussian.
    pub recalibrated: bool,
}

/// Serialized form of a [`MetricReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub rmse: f64,
    pub mae: f64,
    pub ece: f64,
    pub sharpness: f64,
    pub nll: f64,
    pub crps: f64,
    pub check: f64,
    pub interval: f64,
    pub calibration: CalibrationSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adv_group: Option<AdvGroupCurve<f64>>,
    pub provenance: Provenance,
}

impl ReportFile {
    pub fn from_report(report: &MetricReport<f64>, grid_step: Option<f64>, seed: Option<u64>) -> Self {
        ReportFile {
            rmse: report.rmse,
            mae: report.mae,
            ece: report.ece,
            sharpness: report.sharpness,
            nll: report.nll,
            crps: report.crps,
            check: report.check,
            interval: report.interval,
            calibration: CalibrationSection {
                expected: report.calibration_curve.expected.probs().to_vec(),
                observed: report.calibration_curve.observed.clone(),
            },
            adv_group: report.adv_group_curve.clone(),
            provenance: Provenance {
                grid_step,
                grid_levels: report.calibration_curve.expected.len(),
                seed,
                tool_version: TOOL_VERSION.to_string(),
                recalibrated: report.recalibrated,
            },
        }
    }

    pub fn scalars(&self) -> [(&'static str, f64); 8] {
        [
            ("rmse", self.rmse),
            ("mae", self.mae),
            ("ece", self.ece),
            ("sharpness", self.sharpness),
            ("nll", self.nll),
            ("crps", self.crps),
            ("check", self.check),
            ("interval", self.interval),
        ]
    }

    pub fn check(&self) -> Result<()> {
        if let Some((name, v)) = self.scalars().into_iter().find(|(_, v)| !v.is_finite()) {
            return Err(UqError::Numeric(format!("metric `{name}` is not finite ({v})")));
        }
        Ok(())
    }
}

/// Pretty-printed JSON followed by a newline.
pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let f = File::create(path).map_err(|e| UqError::io(path, e))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| UqError::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    w.write_all(b"\n").map_err(|e| UqError::io(path, e))?;
    w.flush().map_err(|e| UqError::io(path, e))
}

pub fn read_json<S: for<'de> Deserialize<'de>>(path: &Path) -> Result<S> {
    let f = File::open(path).map_err(|e| UqError::io(path, e))?;
    serde_json::from_reader(std::io::BufReader::new(f)).map_err(|e| UqError::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn write_report(path: &Path, report: &ReportFile) -> Result<()> {
    report.check()?;
    write_json(path, report)
}

pub fn read_report(path: &Path) -> Result<ReportFile> {
    let r: ReportFile = read_json(path)?;
    r.check().map_err(|e| UqError::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scores::metric_report;
    use crate::uqcore::{validate, ProbGrid};

    fn parse(text: &str) -> Result<(PredictionSet<f64>, EvalDataset<f64>)> {
        parse_predictions(text.as_bytes(), Path::new("mem.csv"), Split::Test)
    }

    #[test]
    fn parses_required_and_feature_columns() {
        let (p, d) = parse("x1,y,mu,sigma,x0,note\n2,1.5,1.0,0.5,7,a\n3,-1,0,2,8,b\n").unwrap();
        assert_eq!(p.means(), &[1.0, 0.0]);
        assert_eq!(p.stddevs(), &[0.5, 2.0]);
        assert_eq!(d.targets(), &[1.5, -1.0]);
        assert_eq!(d.inputs()[0], vec![7.0, 2.0]);
    }

    #[test]
    fn missing_column_is_named() {
        let e = parse("y,mu\n1,2\n").unwrap_err();
        assert!(e.to_string().contains("`sigma`"), "{e}");
        // column names are case sensitive
        assert!(parse("Y,mu,sigma\n1,2,3\n").is_err());
    }

    #[test]
    fn bad_values_cite_row_and_column() {
        let text = "y,mu,sigma\n1,1,1\n1,1,1\n1,1,1\n1,1,1\n1,1,0\n";
        match parse(text).unwrap_err() {
            UqError::Parse { row, line, column, .. } => {
                assert_eq!(row, 5);
                assert_eq!(line, 6);
                assert_eq!(column, "sigma");
            }
            other => panic!("unexpected {other}"),
        }
        let e = parse("y,mu,sigma\n1,abc,1\n").unwrap_err();
        assert!(matches!(e, UqError::Parse { row: 1, ref column, .. } if column == "mu"));
        assert!(parse("y,mu,sigma\n1,inf,1\n").is_err());
        assert!(parse("y,mu,sigma\n1,1\n").is_err());
    }

    #[test]
    fn prediction_file_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let preds = PredictionSet::new(vec![0.1 + 0.2, -1e-300, 12345.678901234567], vec![1e-7, 0.3, 2.5]);
        let data = EvalDataset::new(
            vec![vec![1.0 / 3.0], vec![-9.99], vec![0.0]],
            vec![std::f64::consts::PI, -0.0, 1e22],
            Split::Test,
        );
        write_predictions(&path, &preds, &data).unwrap();
        let (p2, d2) = read_predictions(&path, Split::Test).unwrap();
        assert_eq!(p2, preds);
        assert_eq!(d2.targets(), data.targets());
        assert_eq!(d2.inputs(), data.inputs());
    }

    #[test]
    fn report_file_round_trip() {
        let preds = PredictionSet::new(vec![0.0, 1.0, 2.0], vec![1.0, 0.5, 0.25]);
        let data = EvalDataset::from_targets(vec![0.3, 0.9, 2.2], Split::Test);
        let r = metric_report(&validate(&preds, &data).unwrap(), &ProbGrid::default(), None).unwrap();
        let file = ReportFile::from_report(&r, Some(0.01), Some(4));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        write_report(&path, &file).unwrap();
        let back = read_report(&path).unwrap();
        assert_eq!(back, file);
        let js: serde_json::Value = read_json(&path).unwrap();
        for key in ["rmse", "mae", "ece", "sharpness", "nll", "crps", "check", "interval"] {
            assert!(js[key].is_number(), "{key}");
        }
        assert!(js.get("adv_group").is_none());
        assert_eq!(js["provenance"]["seed"], 4);
    }

    #[test]
    fn non_finite_report_is_refused() {
        let preds = PredictionSet::new(vec![0.0], vec![1.0]);
        let data = EvalDataset::from_targets(vec![0.3], Split::Test);
        let r = metric_report(&validate(&preds, &data).unwrap(), &ProbGrid::default(), None).unwrap();
        let mut file = ReportFile::from_report(&r, None, None);
        file.nll = f64::NAN;
        let dir = tempfile::tempdir().unwrap();
        assert!(write_report(&dir.path().join("r.json"), &file).is_err());
    }
}
