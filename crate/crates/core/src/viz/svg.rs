//! Minimal deterministic SVG 1.1 line charts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::PlotBundle;
use crate::error::{Result, UqError};

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 64.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 52.0;

const BLUE: &str = "#1f77b4";
const ORANGE: &str = "#ff7f0e";
const GREEN: &str = "#2ca02c";
const GREY: &str = "#555555";
const RED: &str = "#d62728";

#[derive(Debug, Clone)]
struct Axis {
    lo: f64,
    hi: f64,
    step: f64,
    label: String,
}

impl Axis {
    fn fit<'a>(values: impl IntoIterator<Item = &'a f64>, label: &str) -> Axis {
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in values {
            if v.is_finite() {
                min = min.min(v);
                max = max.max(v);
            }
        }
        if !min.is_finite() {
            (min, max) = (0.0, 1.0);
        }
        if max - min <= f64::EPSILON * max.abs().max(1.0) {
            let pad = if min == 0.0 { 0.5 } else { 0.1 * min.abs() };
            min -= pad;
            max += pad;
        }
        let step = nice_step((max - min) / 5.0);
        Axis {
            lo: (min / step).floor() * step,
            hi: (max / step).ceil() * step,
            step,
            label: label.to_string(),
        }
    }

    fn fixed(lo: f64, hi: f64, step: f64, label: &str) -> Axis {
        Axis {
            lo,
            hi,
            step,
            label: label.to_string(),
        }
    }

    fn ticks(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.step).round() as i64;
        (0..=n).map(|k| self.lo + k as f64 * self.step).collect()
    }

    fn tick_label(&self, v: f64) -> String {
        let decimals = (-self.step.log10().floor()).max(0.0) as usize;
        let s = format!("{v:.decimals$}");
        // avoid "-0.00"
        if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
            s.trim_start_matches('-').to_string()
        } else {
            s
        }
    }
}

fn nice_step(raw: f64) -> f64 {
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let m = if f <= 1.0 {
        1.0
    } else if f <= 2.0 {
        2.0
    } else if f <= 5.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

enum Mark {
    Line { dash: bool },
    Dot,
    Area,
}

struct Chart {
    out: String,
    x: Axis,
    y: Axis,
    y2: Option<Axis>,
    legend: Vec<(String, &'static str, Mark)>,
}

impl Chart {
    fn new(title: &str, x: Axis, y: Axis, y2: Option<Axis>) -> Chart {
        let mut out = String::new();
        out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        let _ = writeln!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">"
        );
        let _ = writeln!(out, "<rect x=\"0\" y=\"0\" width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{}</text>",
            W / 2.0,
            esc(title)
        );
        let mut c = Chart {
            out,
            x,
            y,
            y2,
            legend: Vec::new(),
        };
        c.axes();
        c
    }

    fn px(&self, v: f64) -> f64 {
        LEFT + (v - self.x.lo) / (self.x.hi - self.x.lo) * (W - LEFT - RIGHT)
    }

    fn py_on(axis: &Axis, v: f64) -> f64 {
        H - BOTTOM - (v - axis.lo) / (axis.hi - axis.lo) * (H - TOP - BOTTOM)
    }

    fn py(&self, v: f64, secondary: bool) -> f64 {
        match (&self.y2, secondary) {
            (Some(a), true) => Self::py_on(a, v),
            _ => Self::py_on(&self.y, v),
        }
    }

    fn axes(&mut self) {
        let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
        let o = &mut self.out;
        let _ = writeln!(o, "<g stroke=\"black\" stroke-width=\"1\" fill=\"none\">");
        let _ = writeln!(o, "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\"/>");
        let _ = writeln!(o, "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\"/>");
        if self.y2.is_some() {
            let _ = writeln!(o, "<line x1=\"{x1}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y1}\"/>");
        }
        let _ = writeln!(o, "</g>");
        let mut s = String::new();
        s.push_str("<g font-family=\"sans-serif\" font-size=\"11\">\n");
        for t in self.x.ticks() {
            let x = self.px(t);
            let _ = writeln!(s, "<line x1=\"{x:.3}\" y1=\"{y0}\" x2=\"{x:.3}\" y2=\"{:.1}\" stroke=\"black\"/>", y0 + 4.0);
            let _ = writeln!(
                s,
                "<text x=\"{x:.3}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
                y0 + 17.0,
                self.x.tick_label(t)
            );
        }
        for t in self.y.ticks() {
            let y = Self::py_on(&self.y, t);
            let _ = writeln!(s, "<line x1=\"{:.1}\" y1=\"{y:.3}\" x2=\"{x0}\" y2=\"{y:.3}\" stroke=\"black\"/>", x0 - 4.0);
            let _ = writeln!(
                s,
                "<text x=\"{:.1}\" y=\"{:.3}\" text-anchor=\"end\">{}</text>",
                x0 - 7.0,
                y + 4.0,
                self.y.tick_label(t)
            );
        }
        if let Some(a) = &self.y2 {
            for t in a.ticks() {
                let y = Self::py_on(a, t);
                let _ = writeln!(s, "<line x1=\"{x1}\" y1=\"{y:.3}\" x2=\"{:.1}\" y2=\"{y:.3}\" stroke=\"black\"/>", x1 + 4.0);
                let _ = writeln!(
                    s,
                    "<text x=\"{:.1}\" y=\"{:.3}\" text-anchor=\"start\">{}</text>",
                    x1 + 7.0,
                    y + 4.0,
                    a.tick_label(t)
                );
            }
            let _ = writeln!(
                s,
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(90 {:.1} {:.1})\">{}</text>",
                W - 14.0,
                H / 2.0,
                W - 14.0,
                H / 2.0,
                esc(&a.label)
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            (x0 + x1) / 2.0,
            H - 12.0,
            esc(&self.x.label)
        );
        let _ = writeln!(
            s,
            "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>",
            H / 2.0,
            H / 2.0,
            esc(&self.y.label)
        );
        s.push_str("</g>\n");
        self.out.push_str(&s);
    }

    fn points(&self, xs: &[f64], ys: &[f64], secondary: bool) -> String {
        let mut s = String::new();
        for (i, (&x, &y)) in xs.iter().zip(ys).enumerate() {
            if i > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{:.3},{:.3}", self.px(x), self.py(y, secondary));
        }
        s
    }

    fn line(&mut self, id: &str, label: Option<&str>, color: &'static str, xs: &[f64], ys: &[f64], dash: bool, secondary: bool) {
        let pts = self.points(xs, ys, secondary);
        let dash_attr = if dash { " stroke-dasharray=\"6 4\"" } else { "" };
        let _ = writeln!(
            self.out,
            "<polyline id=\"{id}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"{dash_attr} points=\"{pts}\"/>"
        );
        if let Some(l) = label {
            self.legend.push((l.to_string(), color, Mark::Line { dash }));
        }
    }

    fn area(&mut self, id: &str, label: &str, color: &'static str, xs: &[f64], lo: &[f64], hi: &[f64]) {
        let upper = self.points(xs, hi, false);
        let rev_x: Vec<f64> = xs.iter().rev().copied().collect();
        let rev_lo: Vec<f64> = lo.iter().rev().copied().collect();
        let lower = self.points(&rev_x, &rev_lo, false);
        let _ = writeln!(
            self.out,
            "<polygon id=\"{id}\" fill=\"{color}\" fill-opacity=\"0.25\" stroke=\"none\" points=\"{upper} {lower}\"/>"
        );
        self.legend.push((label.to_string(), color, Mark::Area));
    }

    fn dots(&mut self, id: &str, label: &str, color: &'static str, xs: &[f64], ys: &[f64]) {
        let _ = writeln!(self.out, "<g id=\"{id}\" fill=\"{color}\">");
        for (&x, &y) in xs.iter().zip(ys) {
            let _ = writeln!(self.out, "<circle cx=\"{:.3}\" cy=\"{:.3}\" r=\"2\"/>", self.px(x), self.py(y, false));
        }
        self.out.push_str("</g>\n");
        self.legend.push((label.to_string(), color, Mark::Dot));
    }

    fn segments(&mut self, id: &str, label: &str, color: &'static str, xs: &[f64], lo: &[f64], hi: &[f64]) {
        let _ = writeln!(self.out, "<g id=\"{id}\" stroke=\"{color}\" stroke-width=\"1.2\">");
        for ((&x, &a), &b) in xs.iter().zip(lo).zip(hi) {
            let px = self.px(x);
            let _ = writeln!(
                self.out,
                "<line x1=\"{px:.3}\" y1=\"{:.3}\" x2=\"{px:.3}\" y2=\"{:.3}\"/>",
                self.py(a, false),
                self.py(b, false)
            );
        }
        self.out.push_str("</g>\n");
        self.legend.push((label.to_string(), color, Mark::Line { dash: false }));
    }

    fn vline(&mut self, id: &str, label: &str, color: &'static str, x: f64) {
        let px = self.px(x);
        let _ = writeln!(
            self.out,
            "<line id=\"{id}\" x1=\"{px:.3}\" y1=\"{TOP}\" x2=\"{px:.3}\" y2=\"{}\" stroke=\"{color}\" stroke-width=\"1\" stroke-dasharray=\"2 3\"/>",
            H - BOTTOM
        );
        self.legend.push((label.to_string(), color, Mark::Line { dash: true }));
    }

    fn finish(mut self) -> String {
        let x = LEFT + 10.0;
        let mut y = TOP + 12.0;
        self.out.push_str("<g id=\"legend\" font-family=\"sans-serif\" font-size=\"11\">\n");
        for (label, color, mark) in &self.legend {
            match mark {
                Mark::Line { dash } => {
                    let d = if *dash { " stroke-dasharray=\"6 4\"" } else { "" };
                    let _ = writeln!(
                        self.out,
                        "<line x1=\"{x:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"{color}\" stroke-width=\"1.5\"{d}/>",
                        x + 18.0
                    );
                }
                Mark::Dot => {
                    let _ = writeln!(self.out, "<circle cx=\"{:.1}\" cy=\"{y:.1}\" r=\"3\" fill=\"{color}\"/>", x + 9.0);
                }
                Mark::Area => {
                    let _ = writeln!(
                        self.out,
                        "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"18\" height=\"8\" fill=\"{color}\" fill-opacity=\"0.25\"/>",
                        y - 4.0
                    );
                }
            }
            let _ = writeln!(self.out, "<text x=\"{:.1}\" y=\"{:.1}\">{}</text>", x + 24.0, y + 4.0, esc(label));
            y += 16.0;
        }
        self.out.push_str("</g>\n</svg>\n");
        self.out
    }
}

fn band_svg(b: &super::BandSeries) -> String {
    let x = Axis::fit(&b.x, "x");
    let y = Axis::fit(b.lo.iter().chain(&b.hi).chain(&b.y), "y");
    let mut c = Chart::new("Predicted mean and confidence band", x, y, None);
    c.area("band-area", "confidence band", BLUE, &b.x, &b.lo, &b.hi);
    c.line("band-upper", None, BLUE, &b.x, &b.hi, false, false);
    c.line("band-lower", None, BLUE, &b.x, &b.lo, false, false);
    c.line("mean", Some("predicted mean"), BLUE, &b.x, &b.mean, false, false);
    c.dots("observations", "observations", GREY, &b.x, &b.y);
    c.finish()
}

fn intervals_svg(s: &super::IntervalSeries) -> String {
    let pos: Vec<f64> = (0..s.y.len()).map(|i| i as f64).collect();
    let x = Axis::fit(&pos, "points ordered by observation");
    let y = Axis::fit(s.lo.iter().chain(&s.hi).chain(&s.y), "y");
    let mut c = Chart::new("Ordered prediction intervals", x, y, None);
    c.segments("intervals", "prediction interval", BLUE, &pos, &s.lo, &s.hi);
    c.line("mean", Some("predicted mean"), ORANGE, &pos, &s.mean, false, false);
    c.dots("observations", "observations", GREY, &pos, &s.y);
    c.finish()
}

fn calibration_svg(s: &super::CalibrationSeries) -> String {
    let x = Axis::fixed(0.0, 1.0, 0.2, "expected proportion");
    let y = Axis::fixed(0.0, 1.0, 0.2, "observed proportion");
    let mut c = Chart::new("Average calibration", x, y, None);
    c.line("diagonal", Some("ideal"), GREY, &s.expected, &s.diagonal, true, false);
    c.line("observed", Some("model"), BLUE, &s.expected, &s.observed, false, false);
    c.finish()
}

fn training_svg(s: &super::TrainingSeries) -> String {
    let ep: Vec<f64> = s.epoch.iter().map(|&e| e as f64).collect();
    let x = Axis::fit(&ep, "epoch");
    let y = Axis::fit(&s.ece, "test ECE");
    let y2 = Axis::fit(s.sharpness.iter().chain(&s.gt_sharpness), "test sharpness");
    let mut c = Chart::new("Calibration and sharpness during training", x, y, Some(y2));
    c.line("ece", Some("ECE (left)"), BLUE, &ep, &s.ece, false, false);
    c.line("sharpness", Some("sharpness (right)"), ORANGE, &ep, &s.sharpness, false, true);
    c.line("gt-sharpness", Some("true sharpness (right)"), GREEN, &ep, &s.gt_sharpness, true, true);
    if let Some(b) = s.best_epoch() {
        c.vline("best-epoch", "best validation epoch", RED, b as f64);
    }
    c.finish()
}

fn adversarial_svg(s: &super::AdversarialSeries) -> String {
    let x = Axis::fixed(0.0, 1.0, 0.2, "group size (fraction of test set)");
    let y = Axis::fit(s.lo.iter().chain(&s.hi).chain(&s.mean_worst_ece), "worst-group ECE");
    let mut c = Chart::new("Adversarial group calibration", x, y, None);
    c.area("stderr-band", "\u{b1}1 standard error", BLUE, &s.fraction, &s.lo, &s.hi);
    c.line("worst-ece", Some("mean worst-group ECE"), BLUE, &s.fraction, &s.mean_worst_ece, false, false);
    c.finish()
}

/// Renders one SVG per available series into `dir`, returning the paths.
pub fn render_svg(bundle: &PlotBundle, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| UqError::io(dir, e))?;
    let docs = [
        ("band.svg", bundle.band.as_ref().map(band_svg)),
        ("intervals.svg", bundle.intervals.as_ref().map(intervals_svg)),
        ("calibration.svg", bundle.calibration.as_ref().map(calibration_svg)),
        ("training.svg", bundle.training.as_ref().map(training_svg)),
        ("adversarial.svg", bundle.adversarial.as_ref().map(adversarial_svg)),
    ];
    let mut written = Vec::new();
    for (file, doc) in docs {
        let Some(doc) = doc else { continue };
        let path = dir.join(file);
        std::fs::write(&path, doc).map_err(|e| UqError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use super::*;

    fn bundle() -> PlotBundle {
        let x: Vec<f64> = (0..20).map(|i| -10.0 + i as f64).collect();
        let mean: Vec<f64> = x.iter().map(|v| (v / 2.0).sin()).collect();
        let sd: Vec<f64> = (0..20).map(|i| 0.1 + 0.05 * i as f64).collect();
        PlotBundle {
            band: Some(BandSeries {
                lo: mean.iter().zip(&sd).map(|(m, s)| m - 2.0 * s).collect(),
                hi: mean.iter().zip(&sd).map(|(m, s)| m + 2.0 * s).collect(),
                y: mean.iter().map(|m| m + 0.1).collect(),
                x: x.clone(),
                mean: mean.clone(),
            }),
            intervals: Some(IntervalSeries {
                index: (0..20).collect(),
                y: mean.clone(),
                mean: mean.clone(),
                lo: mean.iter().map(|m| m - 1.0).collect(),
                hi: mean.iter().map(|m| m + 1.0).collect(),
            }),
            calibration: Some(CalibrationSeries {
                expected: vec![0.25, 0.5, 0.75],
                observed: vec![0.2, 0.55, 0.8],
                diagonal: vec![0.25, 0.5, 0.75],
            }),
            training: Some(TrainingSeries {
                epoch: vec![0, 1, 2],
                train_loss: vec![3.0, 2.0, 1.0],
                val_loss: vec![3.0, 2.5, 2.7],
                ece: vec![0.2, 0.1, 0.05],
                sharpness: vec![1.0, 0.9, 0.8],
                gt_sharpness: vec![0.93; 3],
                is_best: vec![false, true, false],
            }),
            adversarial: Some(AdversarialSeries {
                fraction: vec![0.1, 0.55, 1.0],
                mean_worst_ece: vec![0.3, 0.1, 0.02],
                lo: vec![0.25, 0.09, 0.02],
                hi: vec![0.35, 0.11, 0.02],
            }),
        }
    }

    fn polyline_ys(doc: &roxmltree::Document, id: &str) -> Vec<f64> {
        let node = doc.descendants().find(|n| n.attribute("id") == Some(id)).unwrap();
        node.attribute("points")
            .unwrap()
            .split(' ')
            .map(|p| p.split(',').nth(1).unwrap().parse().unwrap())
            .collect()
    }

    #[test]
    fn renders_well_formed_deterministic_svg() {
        let b = bundle();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let files = render_svg(&b, d1.path()).unwrap();
        render_svg(&b, d2.path()).unwrap();
        assert_eq!(files.len(), 5);
        for f in &files {
            let text = std::fs::read_to_string(f).unwrap();
            let doc = roxmltree::Document::parse(&text).unwrap();
            assert_eq!(doc.root_element().tag_name().name(), "svg");
            let other = std::fs::read(d2.path().join(f.file_name().unwrap())).unwrap();
            assert_eq!(text.as_bytes(), &other[..]);
        }
    }

    #[test]
    fn band_upper_edge_lies_above_lower() {
        let text = band_svg(bundle().band.as_ref().unwrap());
        let doc = roxmltree::Document::parse(&text).unwrap();
        let up = polyline_ys(&doc, "band-upper");
        let lo = polyline_ys(&doc, "band-lower");
        assert_eq!(up.len(), lo.len());
        // screen y grows downwards
        assert!(up.iter().zip(&lo).all(|(u, l)| u <= l));
    }

    #[test]
    fn coordinates_are_affine_in_data() {
        let b = bundle();
        let text = calibration_svg(b.calibration.as_ref().unwrap());
        let doc = roxmltree::Document::parse(&text).unwrap();
        let ys = polyline_ys(&doc, "observed");
        let obs = &b.calibration.unwrap().observed;
        let slope = (ys[1] - ys[0]) / (obs[1] - obs[0]);
        let icpt = ys[0] - slope * obs[0];
        assert!((icpt + slope * obs[2] - ys[2]).abs() < 2e-3);
    }

    #[test]
    fn partial_bundle_renders_present_series_only() {
        let mut b = bundle();
        b.training = None;
        b.band = None;
        let d = tempfile::tempdir().unwrap();
        let files = render_svg(&b, d.path()).unwrap();
        assert_eq!(files.len(), 3);
        assert!(!d.path().join("training.svg").exists());
    }

    #[test]
    fn degenerate_axis_still_has_span() {
        let a = Axis::fit(&[2.0, 2.0], "v");
        assert!(a.hi > a.lo);
        let z = Axis::fit(&[0.0], "v");
        assert!(z.hi > z.lo && z.ticks().len() >= 2);
        assert_eq!(Axis::fixed(0.0, 1.0, 0.2, "").tick_label(0.6000000000000001), "0.6");
    }
}
