use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use stcast_core::grid::CrimeCube;
use stcast_core::nnet::{build_model, save_checkpoint, Lags, ModelConfig, Variant};

fn stcast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stcast")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = stcast(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// synth -> ingest -> preprocess on a small grid; returns the prepared dir.
fn prepared(root: &Path) -> PathBuf {
    let (a, b, c) = (root.join("a"), root.join("b"), root.join("c"));
    ok(&["synth", "--seed", "3", "--days", "12", "--rows", "4", "--cols", "4", "--out", p(&a)]);
    ok(&[
        "ingest",
        "--events",
        p(&a.join("events.csv")),
        "--weather",
        p(&a.join("weather.csv")),
        "--holidays",
        p(&a.join("holidays.csv")),
        "--rows",
        "4",
        "--cols",
        "4",
        "--out",
        p(&b),
    ]);
    ok(&["preprocess", "--data", p(&b), "--test_days", "2", "--out", p(&c)]);
    c
}

fn small_lags() -> Lags {
    Lags { closeness: vec![1, 2], period: vec![24], trend: vec![48] }
}

#[test]
fn synth_is_byte_deterministic() {
    let d = tempfile::tempdir().unwrap();
    for name in ["x", "y"] {
        ok(&["synth", "--seed", "7", "--days", "9", "--rows", "8", "--cols", "8", "--out", p(&d.path().join(name))]);
    }
    for f in ["events.csv", "weather.csv", "holidays.csv", "manifest.txt"] {
        assert_eq!(fs::read(d.path().join("x").join(f)).unwrap(), fs::read(d.path().join("y").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let out = p(d.path());
    assert_eq!(stcast(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(stcast(&["synth", "--rows", "8", "--cols", "8"]).status.code(), Some(1));
    assert_eq!(stcast(&["synth", "--out", out, "--colour", "blue"]).status.code(), Some(1));
    assert_eq!(stcast(&["synth", "--out", out, "--days", "many"]).status.code(), Some(1));
    assert_eq!(stcast(&["train", "--out", out, "--data", "/nonexistent/dir"]).status.code(), Some(1));

    let prep = prepared(d.path());
    let bogus = d.path().join("bogus.ckpt");
    fs::write(&bogus, b"STRN\x07\0\0\0garbage").unwrap();
    let r = stcast(&["predict", "--data", p(&prep), "--checkpoint", p(&bogus), "--out", out]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("byte 4"), "{}", String::from_utf8_lossy(&r.stderr));

    let r = stcast(&["gradcheck", "--out", out, "--rows", "3", "--cols", "3", "--filters", "2", "--tolerance", "1e-300"]);
    assert_eq!(r.status.code(), Some(3));
}

/// A checkpoint whose network output saturates at -1 unscales to the
/// training minimum (zero counts), so postprocessing leaves all-zero frames.
#[test]
fn saturated_network_predicts_zero() {
    let d = tempfile::tempdir().unwrap();
    let prep = prepared(d.path());
    let scaled = CrimeCube::read_dir(&prep.join("scaled")).unwrap();
    let cfg = ModelConfig {
        variant: Variant::Conv3x3,
        filters: 2,
        residual_units: 1,
        height: scaled.rows,
        width: scaled.cols,
        lags: small_lags(),
        ext_dim: stcast_core::ingest::FEATURE_WIDTH,
        ext_hidden: 2,
        batch_norm: false,
    };
    let mut m = build_model(&cfg, 0).unwrap();
    m.zero_params();
    let bi = m.param_index("ext.fc2.b").unwrap();
    m.params[bi].value.fill(-50.0);
    let ckpt = d.path().join("sat.ckpt");
    save_checkpoint(&m, &ckpt).unwrap();
    let out = d.path().join("pred");
    ok(&["predict", "--data", p(&prep), "--checkpoint", p(&ckpt), "--out", p(&out)]);
    let fdir = out.join("forecasts/ST-ResNet");
    let cum = CrimeCube::read_dir(&fdir.join("cumulative")).unwrap();
    let raw = CrimeCube::read_dir(&fdir.join("raw")).unwrap();
    assert_eq!(cum.hours, 48);
    let truth = CrimeCube::read_dir(&prep.join("cumulative")).unwrap();
    let first = truth.hours - 48;
    for t in 0..cum.hours {
        let window_start = (first + t) % 24 == 0;
        for (i, (&c, &r)) in cum.frame(t).iter().zip(raw.frame(t)).enumerate() {
            // Postprocessing raises the forecast to the last observed cumulative value.
            let floor = if window_start { 0.0 } else { truth.frame(first + t - 1)[i] };
            assert_eq!(c, floor);
            assert_eq!(r, 0.0);
        }
    }
    let pgm = fs::read(fdir.join("heatmaps/hour_00000.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5 4 4 65535\n"));
}

#[test]
fn train_predict_evaluate_round_trip() {
    let d = tempfile::tempdir().unwrap();
    let prep = prepared(d.path());
    let lag_args = ["--closeness", "1,2", "--period_lags", "24", "--trend", "48", "--filters", "4", "--residual_units", "1"];
    let train_dir = d.path().join("train");
    let mut args = vec!["train", "--data", p(&prep), "--epochs_main", "2", "--epochs_finetune", "1", "--out", p(&train_dir)];
    args.extend(lag_args);
    ok(&args);
    let tern_dir = d.path().join("tern");
    let mut args = vec!["ternarize", "--data", p(&prep), "--epochs_main", "1", "--epochs_finetune", "1", "--out", p(&tern_dir)];
    args.extend(lag_args);
    ok(&args);

    let fc = d.path().join("fc");
    ok(&["predict", "--data", p(&prep), "--checkpoint", p(&train_dir.join("model.ckpt")), "--out", p(&fc)]);
    ok(&["predict", "--data", p(&prep), "--checkpoint", p(&tern_dir.join("model.strt")), "--out", p(&fc)]);
    let bl = d.path().join("bl");
    ok(&["baselines", "--data", p(&prep), "--arima", "1,0,0", "--out", p(&bl)]);
    let ev = d.path().join("ev");
    let forecasts = format!("{},{}", p(&fc.join("forecasts")), p(&bl.join("forecasts")));
    ok(&["evaluate", "--data", p(&prep), "--forecasts", &forecasts, "--out", p(&ev)]);
    let csv = fs::read_to_string(ev.join("report.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "method,rmse_cumulative,rmse_raw,true_slots,pred_slots,hits");
    let methods: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(methods, ["ST-ResNet", "ST-ResNet-ternary", "ARIMA", "HA", "KNN"]);

    // Postprocessing contract at the CLI boundary: non-negative, and no forecast below the
    // last observed cumulative value inside a window.
    let truth = CrimeCube::read_dir(&prep.join("cumulative")).unwrap();
    for m in ["ST-ResNet", "ST-ResNet-ternary"] {
        let cum = CrimeCube::read_dir(&fc.join("forecasts").join(m).join("cumulative")).unwrap();
        let raw = CrimeCube::read_dir(&fc.join("forecasts").join(m).join("raw")).unwrap();
        let first = truth.hours - cum.hours;
        for t in 0..cum.hours {
            for (i, &c) in cum.frame(t).iter().enumerate() {
                assert!(c >= 0.0 && raw.frame(t)[i] >= 0.0);
                if (first + t) % 24 != 0 {
                    assert!(c >= truth.frame(first + t - 1)[i]);
                }
            }
        }
    }

    let manifest = fs::read_to_string(ev.join("manifest.txt")).unwrap();
    assert!(manifest.starts_with("command = evaluate\nseed = 0\n"), "{manifest}");
    assert!(manifest.contains("input.forecasts.1 = tree:"));
    assert!(!manifest.contains(p(d.path())), "manifest leaks absolute paths");
}

#[test]
fn gradcheck_passes_on_a_small_model() {
    let d = tempfile::tempdir().unwrap();
    let out = ok(&["gradcheck", "--rows", "4", "--cols", "4", "--filters", "3", "--residual_units", "1", "--out", p(d.path())]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("max relative error"));
    let csv = fs::read_to_string(d.path().join("gradcheck.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("closeness.in.w,")));
}
