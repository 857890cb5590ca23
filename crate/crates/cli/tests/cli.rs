use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use echomap::inference::{load_model, HyperFeatureModel, ModelConfig};
use echomap::signal::wav::write_wav_pcm16;
use echomap::signal::AudioTrace;
use echomap_cli::exit;

fn echomap(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_echomap"))
        .current_dir(dir)
        .env_remove("ECHOMAP_CONFIG")
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = echomap(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn lines(path: PathBuf) -> Vec<String> {
    std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .map(str::to_owned)
        .collect()
}

fn five_tap(dir: &Path) {
    ok(dir, &["synth", "--preset", "five-tap", "--out", "synth"]);
    ok(dir, &["analyze", "synth/audio.wav", "synth/poses.csv", "--out", "analysis"]);
}

#[test]
fn synth_is_deterministic_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--preset", "five-tap", "--seed", "3", "--out", "a"]);
    ok(d, &["synth", "--preset", "five-tap", "--seed", "3", "--out", "b"]);
    ok(d, &["synth", "--preset", "five-tap", "--seed", "4", "--out", "c"]);
    let read = |sub: &str| std::fs::read(d.join(sub).join("audio.wav")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
    assert_eq!(lines(d.join("a/ground_truth.csv")), lines(d.join("b/ground_truth.csv")));
}

#[test]
fn paper_mirror_ground_truth_has_every_location() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["synth", "--preset", "paper-mirror", "--out", "s"]);
    let truth = lines(tmp.path().join("s/ground_truth.csv"));
    assert_eq!(truth.len(), 1 + 126);
    assert_eq!(lines(tmp.path().join("s/impacts.csv")).len(), 1 + 406);
}

#[test]
fn five_tap_analysis_and_localization() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    five_tap(d);
    let impacts = lines(d.join("synth/impacts.csv")).len() - 1;
    assert_eq!(lines(d.join("analysis/soi_report.csv")).len() - 1, impacts);
    assert_eq!(lines(d.join("analysis/groups.csv")).len() - 1, 5);
    assert!(d.join("analysis/fd_map.ply").exists());

    ok(d, &["backproject", "analysis", "--out", "analysis"]);
    let targets = lines(d.join("analysis/targets_spectral.csv"));
    assert_eq!(targets[0], "x,y,z,peak_score,voxels");
    let best = targets[1..]
        .iter()
        .map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap()).collect::<Vec<_>>())
        .max_by(|a, b| a[3].total_cmp(&b[3]))
        .expect("at least one target");
    // Pipe axis runs along y at x = 0.6, depth 1.25; the grid is 2 cm.
    let off = ((best[0] - 0.6).powi(2) + (best[2] + 1.25).powi(2)).sqrt();
    assert!(off <= 0.04, "strongest target {off} m from the axis");
    assert!(d.join("analysis/voxels_spectral.ply").exists());
    assert!(d.join("analysis/voxels_spectral.json").exists());
}

#[test]
fn pipe_free_scan_yields_no_targets() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(
        d.join("clear.toml"),
        "[synth.scenario]\npipes = []\ntap_layout = [[0.6, 0.4], [0.5, 0.3], [0.7, 0.3], [0.7, 0.5], [0.5, 0.5]]\n",
    )
    .unwrap();
    ok(d, &["synth", "--config", "clear.toml", "--out", "synth"]);
    ok(d, &["analyze", "synth/audio.wav", "synth/poses.csv", "--out", "analysis"]);
    ok(d, &["backproject", "analysis", "--out", "analysis"]);
    assert_eq!(lines(d.join("analysis/targets_spectral.csv")), vec!["x,y,z,peak_score,voxels"]);
}

#[test]
fn silent_audio_is_a_zero_soi_error() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--preset", "five-tap", "--out", "synth"]);
    let silent = AudioTrace::new(vec![0.0; 44100 * 3], 44100.0, 0.0).unwrap();
    write_wav_pcm16(d.join("silent.wav"), &silent).unwrap();
    let out = echomap(d, &["analyze", "silent.wav", "synth/poses.csv", "--out", "analysis"]);
    assert_eq!(out.status.code(), Some(exit::ZERO_SOI));
}

#[test]
fn malformed_dataset_reports_the_record() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(
        d.join("bad.csv"),
        "pipe_label,depth,nearest_pipe_distance,v0,v1\n1,1.2,0.1,-3,-4\n0,,0.5,-1,-2\n0,,0.5,oops,-2\n",
    )
    .unwrap();
    let out = echomap(d, &["train", "bad.csv", "--out", "m"]);
    assert_eq!(out.status.code(), Some(exit::INPUT_FORMAT));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("record 2"), "{err}");
    assert!(!d.join("m/model.json").exists());
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("c.toml"), "fd_treshold = 3.0\n").unwrap();
    let out = echomap(tmp.path(), &["synth", "--config", "c.toml", "--out", "s"]);
    assert_eq!(out.status.code(), Some(exit::CONFIG));
}

fn manifest_value(dir: &Path, pointer: &str) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("manifest.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v.pointer(pointer).cloned().unwrap_or_else(|| panic!("missing {pointer}"))
}

#[test]
fn flags_override_file_which_overrides_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--preset", "five-tap", "--out", "synth"]);
    std::fs::write(d.join("c.toml"), "fd_threshold = 1.4e7\n[imaging]\ngrid_res = 0.03\n").unwrap();
    ok(
        d,
        &["analyze", "synth/audio.wav", "synth/poses.csv", "--config", "c.toml", "--fd-threshold", "1.6e7", "--out", "a"],
    );
    let a = d.join("a");
    assert_eq!(manifest_value(&a, "/config/fd_threshold"), 1.6e7);
    assert_eq!(manifest_value(&a, "/config/imaging/grid_res"), 0.03);
    assert_eq!(manifest_value(&a, "/config/cutoff_hz"), 2000.0);

    // The environment variable names the file when no flag does.
    let out = Command::new(env!("CARGO_BIN_EXE_echomap"))
        .current_dir(d)
        .env("ECHOMAP_CONFIG", "c.toml")
        .args(["analyze", "synth/audio.wav", "synth/poses.csv", "--out", "b"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(manifest_value(&d.join("b"), "/config/fd_threshold"), 1.4e7);
}

#[test]
fn model_radii_and_untrained_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    five_tap(d);
    ok(d, &["dataset", "synth", "--out", "data"]);
    assert_eq!(lines(d.join("data/dataset.csv")).len() - 1, 15);

    std::fs::write(d.join("frozen.toml"), "[train]\nepochs = 2\nlearning_rate = 0.0\n").unwrap();
    ok(d, &["train", "data/dataset.csv", "--config", "frozen.toml", "--seed", "9", "--out", "m"]);
    let trained = load_model(&d.join("m/model.json")).unwrap();
    let fresh = HyperFeatureModel::new(ModelConfig::default(), 9).unwrap();
    for ((name, a), (_, b)) in trained.tensors().into_iter().zip(fresh.tensors()) {
        // The depth output bias starts at the mean training depth.
        if name != "depth3.biases" {
            assert_eq!(a, b, "{name} moved with a zero learning rate");
        }
    }
    let losses = lines(d.join("m/loss.csv"));
    assert_eq!(losses.len(), 3);
    assert!(d.join("m/metrics.json").exists());

    ok(d, &["backproject", "analysis", "--radius-source", "model", "--model", "m/model.json", "--out", "analysis"]);
    ok(d, &["backproject", "analysis", "--out", "analysis"]);
    for f in ["targets_model.csv", "voxels_model.ply", "voxels_model.json", "targets_spectral.csv"] {
        assert!(d.join("analysis").join(f).exists(), "{f}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("analysis/voxels_model.json")).unwrap()).unwrap();
    assert_eq!(report["radius_source"], "model");
}
