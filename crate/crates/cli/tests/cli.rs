use std::path::Path;
use std::process::{Command, Output};

use modnet::geom::read_xyz;

const TINY: &str = "\
encoder_widths = 8,12
fc1_width = 10
weight_hidden = 6
decoder_widths = 8,6
n_patch = 32
epochs = 2
batch_size = 4
patches_per_shape = 12
";

fn modnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_modnet")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = modnet(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Synthesizes two small clouds and writes the tiny model config.
fn fixture(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let data = dir.join("data");
    ok(&["synth", "--shapes", "cube,cylinder", "--points", "800", "--noise", "gaussian:0.01", "--seed", "3", "--out", p(&data)]);
    let cfg = dir.join("tiny.cfg");
    std::fs::write(&cfg, TINY).unwrap();
    (data, cfg)
}

#[test]
fn synth_writes_every_file_and_zero_noise_equals_clean() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    ok(&["synth", "--shapes", "sphere,torus", "--points", "300", "--noise", "gaussian:0,0.01;laplace:0.02", "--out", p(&out)]);
    let manifest = std::fs::read_to_string(out.join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 1 + 2 * 3);
    let files = std::fs::read_dir(&out).unwrap().count();
    assert_eq!(files, 1 + 2 * (2 + 3));
    let clean = read_xyz(out.join("sphere_clean.xyzn")).unwrap();
    let zero = read_xyz(out.join("sphere_gaussian_0.xyz")).unwrap();
    assert_eq!(clean.points(), zero.points());
    assert!(clean.normals().is_some());
    assert_eq!(clean.len(), 300);
}

#[test]
fn train_is_deterministic_and_round_trips_through_denoise() {
    let dir = tempfile::tempdir().unwrap();
    let (data, cfg) = fixture(dir.path());
    let (r1, r2) = (dir.path().join("r1"), dir.path().join("r2"));
    let a = ok(&["train", "--data", p(&data), "--config", p(&cfg), "--out", p(&r1)]);
    let b = ok(&["train", "--data", p(&data), "--config", p(&cfg), "--threads", "1", "--out", p(&r2)]);
    let (a, b) = (String::from_utf8(a.stdout).unwrap(), String::from_utf8(b.stdout).unwrap());
    let digest = |s: &str| s.split_whitespace().last().unwrap().to_string();
    assert_eq!(digest(&a), digest(&b));
    assert_eq!(digest(&a).len(), 64);
    for f in ["model.ckpt", "epochs.csv", "steps.csv"] {
        assert_eq!(std::fs::read(r1.join(f)).unwrap(), std::fs::read(r2.join(f)).unwrap(), "{f}");
    }
    let epochs = std::fs::read_to_string(r1.join("epochs.csv")).unwrap();
    assert_eq!(epochs.lines().count(), 3);

    // the echoed settings reproduce the run
    let r3 = dir.path().join("r3");
    ok(&["train", "--data", p(&data), "--config", p(&r1.join("config.txt")), "--out", p(&r3)]);
    assert_eq!(std::fs::read(r1.join("model.ckpt")).unwrap(), std::fs::read(r3.join("model.ckpt")).unwrap());

    let noisy = data.join("cube_gaussian_0.01.xyz");
    let den = dir.path().join("den");
    ok(&["denoise", "--checkpoint", p(&r1.join("model.ckpt")), "--input", p(&noisy), "--export-weights", "--config", p(&cfg), "--out", p(&den)]);
    let filtered = read_xyz(den.join("cube_gaussian_0.01.denoised.xyz")).unwrap();
    assert_eq!(filtered.len(), 800);
    let weights = std::fs::read_to_string(den.join("cube_gaussian_0.01.weights.txt")).unwrap();
    assert_eq!(weights.lines().count(), 800);
    for line in weights.lines() {
        let w: Vec<f64> = line.split_whitespace().map(|v| v.parse().unwrap()).collect();
        assert_eq!(w.len(), 9);
        // scale-major; each axis is a softmax over the three scales
        for axis in 0..3 {
            let total = w[axis] + w[3 + axis] + w[6 + axis];
            assert!((total - 1.0).abs() < 1e-9, "{total}");
        }
    }

    let ev = dir.path().join("ev");
    let clean = data.join("cube_clean.xyzn");
    let mesh = data.join("cube.off");
    ok(&["eval", "--filtered", p(&clean), p(&noisy), "--gt", p(&clean), p(&clean), "--mesh", p(&mesh), p(&mesh), "--out", p(&ev)]);
    let csv = std::fs::read_to_string(ev.join("metrics.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][3].parse::<f64>().unwrap(), 0.0);
    assert!(rows[0][5].parse::<f64>().unwrap() < 1e-20);
    assert!(rows[1][3].parse::<f64>().unwrap() > 0.0);
}

#[test]
fn mismatched_checkpoint_and_bad_input_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (data, cfg) = fixture(dir.path());
    let run = dir.path().join("run");
    ok(&["train", "--data", p(&data), "--config", p(&cfg), "--out", p(&run)]);
    let noisy = data.join("cube_gaussian_0.01.xyz");
    let out = modnet(&["denoise", "--checkpoint", p(&run.join("model.ckpt")), "--input", p(&noisy), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("mod.2.dc3.weight"), "{err}");

    let out = modnet(&["train", "--data", p(&data), "--set", "bogus=1"]);
    assert_eq!(out.status.code(), Some(1));
    let out = modnet(&["train", "--data", p(&data), "--set", "epochs=many"]);
    assert_eq!(out.status.code(), Some(1));
    let out = modnet(&["eval", "--filtered", p(&noisy), "--gt", p(&noisy), p(&noisy)]);
    assert_eq!(out.status.code(), Some(1));
    let out = modnet(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    let out = modnet(&["train", "--data", p(&dir.path().join("missing"))]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(modnet(&["--help"]).status.code(), Some(0));
}

#[test]
fn gradcheck_passes_and_catches_injected_faults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.cfg");
    std::fs::write(&cfg, TINY).unwrap();
    let out = ok(&["gradcheck", "--trials", "20", "--batches", "2", "--config", p(&cfg)]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("end_to_end"));
    assert!(!text.contains("FAIL"), "{text}");
    for op in ["batchnorm", "softmax"] {
        let out = modnet(&["gradcheck", "--trials", "5", "--batches", "1", "--config", p(&cfg), "--inject-fault", op]);
        assert_eq!(out.status.code(), Some(3), "{op}");
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.lines().any(|l| l.starts_with(op) && l.ends_with("FAIL")), "{text}");
    }
    let out = modnet(&["gradcheck", "--inject-fault", "matmul"]);
    assert_eq!(out.status.code(), Some(1));
}
