use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use uqkit::io::{read_json, read_report, write_predictions, ReportFile};
use uqkit::pnncase::{synthetic_for_seed, SynthConfig};
use uqkit::recal::RecalibrationMap;
use uqkit::scores::metric_report;
use uqkit::{validate, EvalDataset, PredictionSet, ProbGrid, Split};

fn uqkit(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uqkit"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn perfect_means_give_zero_rmse() {
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "p.csv", "y,mu,sigma\n1.5,1.5,0.2\n-3,-3,1\n");
    let o = uqkit(&["eval", "p.csv", "--out", "r.json"], d.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let r = read_report(&d.path().join("r.json")).unwrap();
    assert_eq!(r.rmse, 0.0);
    assert_eq!(r.mae, 0.0);
    assert_eq!(r.calibration.expected.len(), 99);
}

#[test]
fn input_errors_exit_with_code_two() {
    let d = tempfile::tempdir().unwrap();
    let cases = [
        ("sigma0.csv", "y,mu,sigma\n1,1,1\n1,1,1\n1,1,1\n1,1,1\n1,1,0\n", &["row 5", "sigma"][..]),
        ("nocol.csv", "y,mu,sd\n1,1,1\n", &["sigma"][..]),
        ("badnum.csv", "y,mu,sigma\n1,1,1\n2,x1,1\n", &["row 2", "mu"][..]),
        ("short.csv", "y,mu,sigma\n1,1\n", &["row 1", "sigma"][..]),
        ("nan.csv", "y,mu,sigma\nNaN,1,1\n", &["row 1", "`y`"][..]),
        ("empty.csv", "y,mu,sigma\n", &[][..]),
    ];
    for (name, text, needles) in cases {
        write(d.path(), name, text);
        let o = uqkit(&["eval", name], d.path());
        assert_eq!(o.status.code(), Some(2), "{name}: {}", stderr(&o));
        for n in needles {
            assert!(stderr(&o).contains(n), "{name}: {}", stderr(&o));
        }
    }
    write(d.path(), "ok.csv", "y,mu,sigma\n1,1,1\n");
    let o = uqkit(&["eval", "ok.csv", "--grid-step", "0"], d.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn exported_ground_truth_matches_library() {
    let d = tempfile::tempdir().unwrap();
    let data = synthetic_for_seed(&SynthConfig::with_seed(2)).unwrap();
    write_predictions(&d.path().join("gt.csv"), &data.test.truth, &data.test.data).unwrap();
    let o = uqkit(&["eval", "gt.csv", "--out", "r.json"], d.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let from_cli = read_report(&d.path().join("r.json")).unwrap();
    let pair = validate(&data.test.truth, &data.test.data).unwrap();
    let lib = metric_report(&pair, &ProbGrid::with_step(0.01).unwrap(), None).unwrap();
    assert_eq!(from_cli, ReportFile::from_report(&lib, Some(0.01), None));
}

#[test]
fn adversarial_eval_is_seeded() {
    let d = tempfile::tempdir().unwrap();
    let data = synthetic_for_seed(&SynthConfig::with_seed(1)).unwrap();
    write_predictions(&d.path().join("gt.csv"), &data.test.truth, &data.test.data).unwrap();
    for out in ["a.json", "b.json"] {
        let o = uqkit(&["eval", "gt.csv", "--adv", "--seed", "5", "--out", out], d.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = std::fs::read(d.path().join("a.json")).unwrap();
    assert_eq!(a, std::fs::read(d.path().join("b.json")).unwrap());
    let r = read_report(&d.path().join("a.json")).unwrap();
    let adv = r.adv_group.unwrap();
    assert_eq!(adv.group_fractions.len(), 10);
    assert_eq!(*adv.mean_worst_ece.last().unwrap(), r.ece);
    assert_eq!(r.provenance.seed, Some(5));
}

fn gaussian_file(path: &Path, n: usize, pred_sd: f64, seed: u64) {
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let y: Vec<f64> = (0..n).map(|_| Normal::new(0.0, 1.0).unwrap().sample(&mut rng)).collect();
    let preds = PredictionSet::homoscedastic(vec![0.0; n], pred_sd);
    write_predictions(path, &preds, &EvalDataset::from_targets(y, Split::Test)).unwrap();
}

#[derive(serde::Deserialize)]
struct Pair {
    before: ReportFile,
    after: ReportFile,
}

#[test]
fn recalibration_improves_overconfident_predictions() {
    let d = tempfile::tempdir().unwrap();
    gaussian_file(&d.path().join("r.csv"), 5000, 0.5, 1);
    gaussian_file(&d.path().join("t.csv"), 5000, 0.5, 2);
    let o = uqkit(
        &["recalibrate", "r.csv", "t.csv", "--out-map", "map.json", "--out-report", "rep.json"],
        d.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let rep: Pair = read_json(&d.path().join("rep.json")).unwrap();
    assert!(rep.after.ece < rep.before.ece);
    assert!(rep.after.provenance.recalibrated && !rep.before.provenance.recalibrated);

    // reloading the map reproduces the same after-report
    let o = uqkit(
        &["recalibrate", "r.csv", "t.csv", "--map-in", "map.json", "--out-report", "rep2.json"],
        d.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let rep2: Pair = read_json(&d.path().join("rep2.json")).unwrap();
    assert_eq!(rep2.after, rep.after);
}

#[test]
fn calibrated_inputs_give_near_identity_map() {
    let d = tempfile::tempdir().unwrap();
    gaussian_file(&d.path().join("r.csv"), 5000, 1.0, 3);
    gaussian_file(&d.path().join("t.csv"), 100, 1.0, 4);
    let o = uqkit(&["recalibrate", "r.csv", "t.csv", "--out-map", "map.json"], d.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let map: RecalibrationMap<f64> = read_json(&d.path().join("map.json")).unwrap();
    for (x, y) in map.knots_x().iter().zip(map.knots_y()) {
        assert!((x - y).abs() < 0.03, "{x} -> {y}");
    }
}

fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn case_study_smoke_run_and_plot() {
    let d = tempfile::tempdir().unwrap();
    let args = ["case-study", "--losses", "nll", "--seeds", "0", "--epochs", "1", "--out-dir"];
    for out in ["a", "b"] {
        let mut v = args.to_vec();
        v.push(out);
        let o = uqkit(&v, d.path());
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(String::from_utf8_lossy(&o.stdout).contains("ground_truth"));
    }
    assert_eq!(tree(&d.path().join("a")), tree(&d.path().join("b")));
    assert!(d.path().join("a/seed_0/nll/report.json").is_file());

    let o = uqkit(&["plot", "a/seed_0/nll/plots", "--out-dir", "svg1"], d.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let svgs = tree(&d.path().join("svg1"));
    assert_eq!(svgs.len(), 5);
    for (_, bytes) in &svgs {
        roxmltree::Document::parse(std::str::from_utf8(bytes).unwrap()).unwrap();
    }
    let o = uqkit(&["plot", "a", "--out-dir", "svg2"], d.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let again = tree(&d.path().join("svg2/seed_0/nll/plots"));
    assert_eq!(again, svgs);

    std::fs::remove_file(d.path().join("a/seed_0/nll/plots/training.csv")).unwrap();
    let o = uqkit(&["plot", "a/seed_0/nll/plots", "--out-dir", "svg3"], d.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("training.csv"), "{}", stderr(&o));
}

#[test]
fn eval_writes_plot_directory() {
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "p.csv", "y,mu,sigma,x0\n1,1.2,0.5,3\n2,1.5,1,-1\n0,0.3,2,0\n");
    let o = uqkit(&["eval", "p.csv", "--plot-dir", "plots"], d.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest: serde_json::Value = read_json(&d.path().join("plots/manifest.json")).unwrap();
    assert_eq!(manifest["omitted"], serde_json::json!(["training", "adversarial"]));
    assert!(d.path().join("plots/band.svg").is_file());
}
