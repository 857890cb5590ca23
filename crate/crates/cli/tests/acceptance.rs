//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! fails if any criterion does.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use echomap::imaging::{back_project, BackProjectConfig, TapGroup, VoxelGrid};
use echomap::inference::{evaluate, split_dataset, train, HyperFeatureModel, LossWeights, ModelConfig, Targets};
use echomap::posegraph::{linearize, lm_step, optimize, total_residual, PoseGraph, SE3Transform};
use echomap::signal::{
    classify_region, complex_spectrum, detect_soi, dft, fd, low_pass_filter, psd, AudioTrace, RegionLabel, SoiConfig,
    Spectrum,
};
use echomap::synth::{brute_force_backproject_oracle, generate_impact_wave, generate_scenario, naive_dft_oracle};
use echomap::synth::{PipeSegment, WaveConfig};
use echomap_cli::{pipeline, PipelineConfig};
use nalgebra::{Matrix6, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_signals() -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..100)
        .map(|i| {
            let n = [64, 256, 1024, 4096][i % 4];
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
        })
        .collect()
}

fn dft_oracle() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0_f64;
    for x in random_signals() {
        let fast = complex_spectrum(&x);
        let slow = naive_dft_oracle(&x);
        for (a, b) in fast.iter().zip(&slow) {
            worst = worst.max((a - b).norm());
        }
        let soi = echomap::signal::SignalOfInterest::from_samples(x.clone(), 1000.0, 0.0, 0.0);
        let mags = dft(&soi).unwrap();
        for (m, b) in mags.magnitudes().iter().zip(&slow) {
            worst = worst.max((m - b.norm()).abs());
        }
    }
    let t = start.elapsed();
    outcome(
        worst <= 1e-9 && t < Duration::from_secs(10),
        format!("max abs error {worst:.2e}, {:.2} s", t.as_secs_f64()),
    )
}

fn parseval() -> Outcome {
    let mut worst = 0.0_f64;
    for x in random_signals() {
        let n = x.len() as f64;
        let time: f64 = x.iter().map(|v| v * v).sum();
        let freq: f64 = complex_spectrum(&x).iter().map(|c| c.norm_sqr()).sum::<f64>() / n;
        worst = worst.max((time - freq).abs() / time);
    }
    outcome(worst <= 1e-9, format!("max relative error {worst:.2e}"))
}

fn soi_window() -> Outcome {
    let sr = 44100.0;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut samples = vec![0.0; (20.0 * sr) as usize];
    let mut onsets = Vec::new();
    for k in 0..10 {
        let i = ((1.0 + 1.8 * k as f64 + rng.gen_range(0.0..0.5)) * sr) as usize;
        samples[i] = 1.0;
        samples[i + 1] = -0.7;
        onsets.push(i);
    }
    let trace = AudioTrace::new(samples.clone(), sr, 0.0).unwrap();
    let sois = detect_soi(&trace, &SoiConfig::default());
    let dt = 1.0 / sr;
    let mut ok = sois.len() == onsets.len();
    let mut worst = 0.0_f64;
    for (s, &i) in sois.iter().zip(&onsets) {
        let t = i as f64 / sr;
        let lo = (s.times[0] - (s.t_start - 0.01)).abs();
        let hi = (s.times[s.len() - 1] - (s.t_start + 0.3)).abs();
        worst = worst.max(lo).max(hi);
        ok &= (s.t_start - t).abs() < 1e-12;
    }
    ok &= worst <= dt + 1e-12;
    let quiet: Vec<f64> = samples.iter().map(|s| s * 0.998).collect();
    let none = detect_soi(&AudioTrace::new(quiet, sr, 0.0).unwrap(), &SoiConfig::default()).len();
    outcome(
        ok && none == 0,
        format!(
            "{} SOIs for {} impulses, max edge error {:.2} samples, {none} SOIs below threshold",
            sois.len(),
            onsets.len(),
            worst * sr
        ),
    )
}

fn fd_vs_psd() -> Outcome {
    let bins = 201;
    let bin_width = 10.0;
    let low: Vec<f64> = (0..bins).map(|k| if (20..40).contains(&k) { 1.0 } else { 0.0 }).collect();
    let high: Vec<f64> = (0..bins).map(|k| if (150..170).contains(&k) { 1.0 } else { 0.0 }).collect();
    let low = Spectrum::uniform(low, bin_width).unwrap();
    let high = Spectrum::uniform(high, bin_width).unwrap();
    let ratio = fd(&high) / fd(&low);
    outcome(
        psd(&low) == psd(&high) && ratio > 1.5,
        format!("PSD {} vs {}, FD ratio {ratio:.3}", psd(&low), psd(&high)),
    )
}

fn wave_fd(has_pipe: bool, depth: f64, cfg: &WaveConfig, seed: u64) -> f64 {
    let trace = generate_impact_wave(has_pipe, depth, cfg, seed).unwrap();
    let filtered = low_pass_filter(&trace, 2000.0).unwrap();
    let soi = detect_soi(&filtered, &SoiConfig::default()).into_iter().next().expect("impact detected");
    fd(&dft(&soi).unwrap())
}

/// Seeded pipe/no-pipe pairs at matching depths; returns how many pairs
/// are ordered and the accuracy of one threshold midway between the class
/// means.
fn fd_pairs(depths: std::ops::Range<f64>, seed: u64) -> (usize, f64) {
    let cfg = WaveConfig {
        noise_std: 0.02,
        ..WaveConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::new();
    for k in 0..100u64 {
        let depth = rng.gen_range(depths.clone());
        pairs.push((wave_fd(true, depth, &cfg, 2 * k), wave_fd(false, depth, &cfg, 2 * k + 1)));
    }
    let ordered = pairs.iter().filter(|(p, n)| n > p).count();
    let mean_p = pairs.iter().map(|p| p.0).sum::<f64>() / 100.0;
    let mean_n = pairs.iter().map(|p| p.1).sum::<f64>() / 100.0;
    let threshold = 0.5 * (mean_p + mean_n);
    let correct = pairs
        .iter()
        .map(|&(p, n)| {
            usize::from(classify_region(p, threshold) == RegionLabel::SubsurfaceObject)
                + usize::from(classify_region(n, threshold) == RegionLabel::Normal)
        })
        .sum::<usize>();
    (ordered, correct as f64 / 200.0)
}

fn fd_contract() -> Outcome {
    // Echoes from shallower than c / (2 * cutoff) = 1 m sit above the 2 kHz
    // analysis band and are filtered out before FD is taken.
    let (ordered, accuracy) = fd_pairs(1.0..2.0, 11);
    let (shallow_ordered, shallow_accuracy) = fd_pairs(0.8..2.0, 11);
    outcome(
        ordered >= 95 && accuracy >= 0.95,
        format!(
            "depths 1-2 m: FD(no-pipe) > FD(pipe) in {ordered}/100 pairs, midpoint accuracy {accuracy:.3}; \
             depths 0.8-2 m: {shallow_ordered}/100, {shallow_accuracy:.3}"
        ),
    )
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let config = ModelConfig {
        input_rows: 8,
        input_cols: 7,
        coord_channel: true,
        conv1_channels: 3,
        conv1_kernel: 3,
        conv2_channels: 6,
        conv2_kernel: 3,
        pipe_hidden: 8,
        depth_hidden: [10, 8],
    };
    let weights = LossWeights { depth: 0.7, pipe: 1.3 };
    let h = 1e-6;
    let mut worst = 0.0_f64;
    let mut params = 0;
    for seed in 0..10u64 {
        let model = HyperFeatureModel::new(config.clone(), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let x: Vec<f64> = (0..56).map(|_| rng.gen_range(-80.0..0.0)).collect();
        let targets = Targets {
            pipe_label: (seed % 2) as u8,
            depth: Some(rng.gen_range(0.5..2.0)),
        };
        let loss = |m: &HyperFeatureModel| m.backward(&x, &targets, &weights).unwrap().0;
        let (_, grad) = model.backward(&x, &targets, &weights).unwrap();
        let analytic: Vec<f64> = grad.tensors().iter().flat_map(|(_, t)| t.iter().copied()).collect();
        params = analytic.len();
        let mut flat_index = 0;
        let tensor_count = model.tensors().len();
        for t in 0..tensor_count {
            let len = model.tensors()[t].1.len();
            for i in 0..len {
                let mut plus = model.clone();
                plus.tensors_mut()[t][i] += h;
                let mut minus = model.clone();
                minus.tensors_mut()[t][i] -= h;
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let a = analytic[flat_index];
                let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
                worst = worst.max(rel);
                flat_index += 1;
            }
        }
    }
    let t = start.elapsed();
    outcome(
        worst < 1e-4 && t < Duration::from_secs(60),
        format!("{params} parameters x 10 seeds, max relative error {worst:.2e}, {:.2} s", t.as_secs_f64()),
    )
}

fn joint_training() -> Outcome {
    let start = Instant::now();
    let mut cfg = PipelineConfig::default();
    cfg.synth.preset = echomap_cli::Preset::PaperMirror;
    cfg.synth.noise_std = Some(0.0);
    let scenario = generate_scenario(&cfg.scenario()).unwrap();
    let analysis = pipeline::analyze(&scenario.audio, &scenario.trajectory, &cfg).unwrap();
    let (pairs, _) = pipeline::training_pairs(&analysis, &scenario.truth, &cfg).unwrap();
    let (train_set, held_out) = split_dataset(&pairs, 0.2, cfg.seed).unwrap();
    let out = train(&train_set, cfg.model.clone(), &cfg.train_config()).unwrap();
    let eval = evaluate(&out.model, &held_out).unwrap();
    let t = start.elapsed();
    outcome(
        pairs.len() == 406 && eval.accuracy >= 0.9 && eval.depth_mae <= 0.05 && t < Duration::from_secs(300),
        format!(
            "{} pairs, held-out accuracy {:.3}, depth MAE {:.4} m over {} samples, {:.0} s",
            pairs.len(),
            eval.accuracy,
            eval.depth_mae,
            eval.samples,
            t.as_secs_f64()
        ),
    )
}

fn drifted_loop() -> PoseGraph {
    let n = 10;
    let truth: Vec<SE3Transform> = (0..n)
        .map(|i| {
            let a = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            SE3Transform::exp(&Vector6::new(3.0 * a.cos(), 3.0 * a.sin(), 0.1 * a.sin(), 0.0, 0.0, a))
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut g = PoseGraph::new();
    let mut drift = SE3Transform::identity();
    for (i, t) in truth.iter().enumerate() {
        if i > 0 {
            let step: Vec<f64> = (0..6).map(|_| rng.gen_range(-0.05..0.05)).collect();
            drift = drift.compose(&SE3Transform::exp(&Vector6::from_row_slice(&step)));
        }
        g.add_vertex(i, drift.compose(t), i as f64).unwrap();
    }
    for i in 0..n {
        let j = (i + 1) % n;
        let z = truth[i].inverse().compose(&truth[j]);
        g.add_edge(i, j, z, Matrix6::identity()).unwrap();
    }
    g
}

fn lm_behaviour() -> Outcome {
    let g = drifted_loop();
    let before = total_residual(&g);
    let after = total_residual(&optimize(&g, 100, 1e-12).unwrap());
    let reduction = 1.0 - after / before;
    let lin = linearize(&g);
    let lambda = 1e4 * lin.hessian.norm();
    let step = lm_step(&g, lambda).unwrap();
    let cos = -step.delta.dot(&lin.gradient) / (step.delta.norm() * lin.gradient.norm());
    outcome(
        reduction >= 0.9 && cos > 0.99,
        format!("residual {before:.4e} -> {after:.4e} ({:.2}% reduction), cos(step, -g) = {cos:.6}", 100.0 * reduction),
    )
}

fn backprojection() -> Outcome {
    let pipe = PipeSegment {
        a: [0.5, 0.0],
        b: [0.5, 1.0],
        depth: 0.15,
        radius: 0.05,
    };
    let a = 0.04;
    let taps = [[0.5, 0.5], [0.5 - a, 0.5 - a], [0.5 + a, 0.5 - a], [0.5 + a, 0.5 + a], [0.5 - a, 0.5 + a]];
    let groups: Vec<TapGroup> = taps.iter().map(|t| TapGroup::at(Vector3::new(t[0], t[1], 0.0))).collect();
    let radii: Vec<f64> = groups.iter().map(|g| pipe.distance_to_axis(&g.centroid)).collect();
    let res = 0.01;
    let grid = VoxelGrid::covering(Vector3::new(0.0, 0.0, -1.0), Vector3::new(1.0, 1.0, 0.0), res).unwrap();
    let cfg = BackProjectConfig {
        shell_tolerance: res,
        ..BackProjectConfig::default()
    };
    let start = Instant::now();
    let scored = back_project(&groups, &radii, &grid, &cfg).unwrap();
    let t = start.elapsed();
    let oracle = brute_force_backproject_oracle(&groups, &radii, &grid, cfg.shell_tolerance, &cfg.down);
    let identical = scored.scores() == oracle.scores();
    let [i, j, k] = scored.argmax(&cfg.down).expect("nonzero grid");
    let peak = scored.center(i, j, k);
    let axis = pipe.closest_axis_point(&peak);
    let off = (peak - axis).abs() / res;
    let within = off.iter().all(|d| *d <= 1.0 + 1e-9);
    outcome(
        identical && within && t < Duration::from_secs(30),
        format!(
            "argmax ({:.3}, {:.3}, {:.3}) is ({:.1}, {:.1}, {:.1}) voxels from the axis, oracle identical: {identical}, {:.2} s for {} voxels",
            peak.x,
            peak.y,
            peak.z,
            off.x,
            off.y,
            off.z,
            t.as_secs_f64(),
            grid.len()
        ),
    )
}

fn run_cli(dir: &Path, args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_echomap"))
        .current_dir(dir)
        .args(args)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn collect(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["synth", "analysis"] {
        let mut entries: Vec<_> = std::fs::read_dir(dir.join(sub)).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            let name = format!("{sub}/{}", p.file_name().unwrap().to_string_lossy());
            out.push((name, std::fs::read(&p).unwrap()));
        }
    }
    out
}

fn end_to_end_determinism() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for run in ["a", "b"] {
        let dir = root.path().join(run);
        std::fs::create_dir_all(&dir).unwrap();
        let ok = run_cli(&dir, &["synth", "--seed", "7", "--out", "synth"])
            && run_cli(&dir, &["analyze", "synth/audio.wav", "synth/poses.csv", "--seed", "7", "--out", "analysis"])
            && run_cli(&dir, &["backproject", "analysis", "--seed", "7", "--out", "analysis"]);
        if !ok {
            return outcome(false, format!("run {run} failed"));
        }
        runs.push(collect(&dir));
    }
    let same = runs[0] == runs[1];
    outcome(same, format!("{} files compared, identical: {same}", runs[0].len()))
}

fn paper_mirror_scale() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let dir = root.path();
    let start = Instant::now();
    let ok = run_cli(dir, &["synth", "--preset", "paper-mirror", "--out", "synth"])
        && run_cli(dir, &["analyze", "synth/audio.wav", "synth/poses.csv", "--out", "analysis"])
        && run_cli(dir, &["dataset", "synth", "--out", "dataset"])
        && run_cli(dir, &["train", "dataset/dataset.csv", "--out", "model"])
        && run_cli(dir, &["backproject", "analysis", "--out", "analysis"])
        && run_cli(
            dir,
            &["backproject", "analysis", "--radius-source", "model", "--model", "model/model.json", "--out", "analysis"],
        );
    let t = start.elapsed();
    if !ok {
        return outcome(false, "a pipeline stage failed");
    }
    let truth_rows = std::fs::read_to_string(dir.join("synth/ground_truth.csv")).unwrap().lines().count() - 1;
    let soi_rows = std::fs::read_to_string(dir.join("analysis/soi_report.csv")).unwrap().lines().count() - 1;
    outcome(
        truth_rows == 126 && soi_rows == 406 && t < Duration::from_secs(300),
        format!("{truth_rows} locations, {soi_rows} SOIs, {:.1} s", t.as_secs_f64()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("DFT matches the naive oracle", dft_oracle),
        ("Parseval identity", parseval),
        ("SOI window rule", soi_window),
        ("FD separates equal-PSD spectra", fd_vs_psd),
        ("pipe lowers FD", fd_contract),
        ("gradient check", gradient_check),
        ("joint training", joint_training),
        ("Levenberg-Marquardt behaviour", lm_behaviour),
        ("back-projection localization", backprojection),
        ("end-to-end determinism", end_to_end_determinism),
        ("paper-mirror scale", paper_mirror_scale),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| outcome(false, "panicked"));
        if !result.pass {
            failed += 1;
        }
        println!(
            "{} {:>2} {name}: {}",
            if result.pass { "PASS" } else { "FAIL" },
            i + 1,
            result.detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
