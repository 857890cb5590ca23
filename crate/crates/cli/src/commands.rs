use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use echomap::imaging::{write_fd_map_csv, write_fd_map_ply, write_targets_csv, write_voxel_ply, VoxelMetadata};
use echomap::inference::{
    evaluate, load_model, read_dataset, save_model, split_dataset, train, write_dataset, Evaluation,
};
use echomap::posegraph::io::read_trajectory;
use echomap::signal::wav::read_wav;
use echomap::signal::{write_soi_report, SoiReportRow};
use echomap::synth::io::{read_ground_truth, write_scenario, AUDIO_FILE, POSES_FILE};
use echomap::synth::generate_scenario;
use log::warn;
use serde::{Deserialize, Serialize};

use crate::config::{PipelineConfig, RadiusSource};
use crate::error::{CliError, CliResult};
use crate::pipeline::{self, Analysis, BackProjection};

pub const SOI_REPORT_FILE: &str = "soi_report.csv";
pub const FD_MAP_CSV: &str = "fd_map.csv";
pub const FD_MAP_PLY: &str = "fd_map.ply";
pub const GROUPS_FILE: &str = "groups.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATASET_FILE: &str = "dataset.csv";
pub const MODEL_FILE: &str = "model.json";
pub const LOSS_FILE: &str = "loss.csv";
pub const METRICS_FILE: &str = "metrics.json";

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Writes the audio, poses and ground truth of the configured scenario.
pub fn cmd_synth(cfg: &PipelineConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    let scenario = generate_scenario(&cfg.scenario())?;
    Ok(write_scenario(out, &scenario)?)
}

/// What `analyze` recorded, so later stages can rerun it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    /// Relative to the manifest's directory when possible.
    pub audio: PathBuf,
    pub poses: PathBuf,
    pub config: PipelineConfig,
}

fn relative_to(path: &Path, dir: &Path) -> PathBuf {
    match (path.canonicalize(), dir.canonicalize()) {
        (Ok(p), Ok(d)) => pathdiff::diff_paths(&p, &d).unwrap_or(p),
        _ => path.to_path_buf(),
    }
}

pub fn read_manifest(dir: &Path) -> CliResult<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let mut m: Manifest = serde_json::from_str(&text).map_err(|e| CliError::Format {
        path: path.clone(),
        message: e.to_string(),
    })?;
    m.audio = dir.join(&m.audio);
    m.poses = dir.join(&m.poses);
    Ok(m)
}

fn run_analysis(wav: &Path, poses: &Path, cfg: &PipelineConfig) -> CliResult<Analysis> {
    let trace = read_wav(wav, 0.0)?;
    let trajectory = read_trajectory(poses)?;
    let analysis = pipeline::analyze(&trace, &trajectory, cfg)?;
    if analysis.soi_count() == 0 {
        return Err(CliError::ZeroSoi(wav.to_path_buf()));
    }
    if !analysis.sync.unmatched.is_empty() {
        warn!("{} SOIs fall outside the trajectory", analysis.sync.unmatched.len());
    }
    Ok(analysis)
}

/// Filter, segment, detect, transform and register one recording. Writes the
/// per-SOI report, the FD map and the per-location summary.
pub fn cmd_analyze(wav: &Path, poses: &Path, cfg: &PipelineConfig, out: &Path) -> CliResult<Analysis> {
    let analysis = run_analysis(wav, poses, cfg)?;
    ensure_dir(out)?;

    let rows: Vec<SoiReportRow> = analysis
        .sync
        .measurements
        .iter()
        .zip(&analysis.fd_map)
        .map(|(m, p)| SoiReportRow {
            soi_index: m.soi_index,
            t_start: m.acoustic.t_start,
            fd: m.fd_value,
            psd: m.psd_value,
            label: p.label,
        })
        .collect();
    let path = out.join(SOI_REPORT_FILE);
    write_soi_report(create(&path)?, &rows)?;
    write_fd_map_csv(create(&out.join(FD_MAP_CSV))?, &analysis.fd_map)?;
    write_fd_map_ply(create(&out.join(FD_MAP_PLY))?, &analysis.fd_map)?;

    let path = out.join(GROUPS_FILE);
    let mut w = create(&path)?;
    let io = |e| CliError::io(&path, e);
    writeln!(w, "group,x,y,z,members,fd_mean,label,spectral_radius").map_err(io)?;
    for (i, g) in analysis.groups.iter().enumerate() {
        let r = g.spectral_radius.map_or(String::new(), |r| r.to_string());
        let c = g.centroid;
        writeln!(w, "{i},{},{},{},{},{},{},{r}", c.x, c.y, c.z, g.members.len(), g.fd_mean, g.label).map_err(io)?;
    }
    w.flush().map_err(io)?;

    let manifest = Manifest {
        audio: relative_to(wav, out),
        poses: relative_to(poses, out),
        config: cfg.clone(),
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(analysis)
}

/// Builds labelled mel segments from a directory written by `synth`.
pub fn cmd_dataset(synth_dir: &Path, cfg: &PipelineConfig, out: &Path) -> CliResult<usize> {
    let analysis = run_analysis(&synth_dir.join(AUDIO_FILE), &synth_dir.join(POSES_FILE), cfg)?;
    let truth = read_ground_truth(synth_dir)?;
    let (pairs, _) = pipeline::training_pairs(&analysis, &truth, cfg)?;
    ensure_dir(out)?;
    write_dataset(&out.join(DATASET_FILE), &pairs)?;
    Ok(pairs.len())
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainMetrics {
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub train: Evaluation,
    pub held_out: Evaluation,
    pub final_loss: Option<f64>,
    pub warnings: Vec<String>,
}

/// Seeded split, joint training and evaluation. Writes the checkpoint, the
/// per-epoch loss and the metrics.
pub fn cmd_train(dataset: &Path, cfg: &PipelineConfig, out: &Path) -> CliResult<TrainMetrics> {
    let pairs = read_dataset(dataset)?;
    if pairs.is_empty() {
        return Err(CliError::Format {
            path: dataset.to_path_buf(),
            message: "dataset has no records".into(),
        });
    }
    let (train_set, held_out) = split_dataset(&pairs, cfg.train.held_out_fraction, cfg.seed)?;
    let outcome = train(&train_set, cfg.model.clone(), &cfg.train_config())?;
    ensure_dir(out)?;
    save_model(&outcome.model, &out.join(MODEL_FILE))?;

    let path = out.join(LOSS_FILE);
    let mut w = create(&path)?;
    let io = |e| CliError::io(&path, e);
    writeln!(w, "epoch,loss").map_err(io)?;
    for (i, l) in outcome.loss_history.iter().enumerate() {
        writeln!(w, "{i},{l}").map_err(io)?;
    }
    w.flush().map_err(io)?;

    let metrics = TrainMetrics {
        seed: cfg.seed,
        epochs: cfg.train.epochs,
        learning_rate: cfg.train.learning_rate,
        train: evaluate(&outcome.model, &train_set)?,
        held_out: evaluate(&outcome.model, &held_out)?,
        final_loss: outcome.loss_history.last().copied(),
        warnings: outcome.warnings,
    };
    write_json(&out.join(METRICS_FILE), &metrics)?;
    Ok(metrics)
}

#[derive(Debug, Clone, Serialize)]
struct ShellRecord {
    group: usize,
    center: [f64; 3],
    radius: f64,
}

#[derive(Debug, Clone, Serialize)]
struct BackprojectReport {
    radius_source: RadiusSource,
    shell_tolerance: f64,
    shells: Vec<ShellRecord>,
    grid: VoxelMetadata,
}

pub fn targets_file(source: RadiusSource) -> String {
    format!("targets_{}.csv", source.as_str())
}

pub fn voxels_file(source: RadiusSource) -> String {
    format!("voxels_{}.ply", source.as_str())
}

pub fn voxels_meta_file(source: RadiusSource) -> String {
    format!("voxels_{}.json", source.as_str())
}

/// Reruns the recorded analysis, back-projects the subsurface-labelled tap
/// locations and writes targets and voxels, named after the radius source.
pub fn cmd_backproject(analysis_dir: &Path, cfg: &PipelineConfig, out: &Path) -> CliResult<BackProjection> {
    let manifest = read_manifest(analysis_dir)?;
    let analysis = run_analysis(&manifest.audio, &manifest.poses, cfg)?;
    let radii = match cfg.radius_source {
        RadiusSource::Spectral => analysis.groups.iter().map(|g| g.spectral_radius).collect(),
        RadiusSource::Model => {
            let path = cfg
                .imaging
                .model_path
                .as_ref()
                .ok_or_else(|| CliError::Config("the model radius source needs a model path".into()))?;
            pipeline::model_radii(&analysis, &load_model(path)?, cfg)?
        }
    };
    let bp = pipeline::backproject(&analysis, &radii, cfg)?;

    ensure_dir(out)?;
    let src = cfg.radius_source;
    write_targets_csv(create(&out.join(targets_file(src)))?, &bp.targets)?;
    write_voxel_ply(create(&out.join(voxels_file(src)))?, &bp.grid, cfg.imaging.export_fraction)?;
    let report = BackprojectReport {
        radius_source: src,
        shell_tolerance: bp.shell_tolerance,
        shells: bp
            .used_groups
            .iter()
            .zip(&bp.radii)
            .map(|(&g, &radius)| {
                let c = analysis.groups[g].centroid;
                ShellRecord {
                    group: g,
                    center: [c.x, c.y, c.z],
                    radius,
                }
            })
            .collect(),
        grid: VoxelMetadata::of(&bp.grid, cfg.imaging.export_fraction),
    };
    write_json(&out.join(voxels_meta_file(src)), &report)?;
    Ok(bp)
}
