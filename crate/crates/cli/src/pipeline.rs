//! Analysis stages shared by the commands.

use echomap::imaging::{
    back_project, estimate_radius, extract_targets, radius_bin_tolerance, register_fd_map, sync_measurements,
    BackProjectConfig, FdMapPoint, SyncConfig, SyncOutput, Target, TapGroup, VoxelGrid,
};
use echomap::inference::{aggregate, HyperFeatureModel, TrainingPair};
use echomap::posegraph::Trajectory;
use echomap::signal::{
    classify_region, detect_soi_in, low_pass_filter, mel_segments, AudioTrace, IntervalSegmentation, RegionLabel,
    SignalOfInterest,
};
use echomap::synth::GroundTruth;
use log::{info, warn};
use nalgebra::Vector3;

use crate::config::PipelineConfig;
use crate::error::CliResult;

/// Low-pass filter, interval segmentation and SOI detection.
pub fn detect(trace: &AudioTrace, cfg: &PipelineConfig) -> CliResult<(IntervalSegmentation, Vec<SignalOfInterest>)> {
    let filtered = low_pass_filter(trace, cfg.cutoff_hz)?;
    let seg = echomap::signal::segment_intervals(&filtered, &cfg.segment)?;
    let mut sois = Vec::new();
    for r in &seg.relevant_intervals {
        sois.extend(detect_soi_in(&filtered, r.start..r.end, &cfg.soi));
    }
    info!(
        "{} relevant regions, {} rejected, {} SOIs",
        seg.relevant_intervals.len(),
        seg.rejected_intervals.len(),
        sois.len()
    );
    Ok((seg, sois))
}

/// Per-location summary of the measurements in one tap group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub centroid: Vector3<f64>,
    pub members: Vec<usize>,
    pub fd_mean: f64,
    pub label: RegionLabel,
    /// Median of the member echo-peak radii; `None` if no member has a peak.
    pub spectral_radius: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub segmentation: IntervalSegmentation,
    pub sync: SyncOutput,
    pub fd_map: Vec<FdMapPoint>,
    pub groups: Vec<GroupSummary>,
}

impl Analysis {
    pub fn soi_count(&self) -> usize {
        self.sync.measurements.len() + self.sync.unmatched.len()
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Runs every stage up to the FD map and the per-location summaries.
pub fn analyze(trace: &AudioTrace, trajectory: &Trajectory, cfg: &PipelineConfig) -> CliResult<Analysis> {
    let (segmentation, sois) = detect(trace, cfg)?;
    let sync_cfg = SyncConfig {
        time_tolerance: cfg.sync.time_tolerance,
        group_radius: cfg.sync.group_radius,
        ..SyncConfig::default()
    };
    let sync = sync_measurements(sois, trajectory, &sync_cfg)?;
    let fd_map = register_fd_map(&sync.measurements, cfg.fd_threshold);
    let groups = sync
        .groups
        .iter()
        .map(|g| {
            let ms: Vec<_> = g.members.iter().map(|&i| &sync.measurements[i]).collect();
            let fd_mean = ms.iter().map(|m| m.fd_value).sum::<f64>() / ms.len() as f64;
            let radii = ms
                .iter()
                .filter_map(|m| estimate_radius(&m.spectrum, cfg.wave_speed, cfg.peak_band).ok())
                .collect();
            GroupSummary {
                centroid: g.centroid,
                members: g.members.clone(),
                fd_mean,
                label: classify_region(fd_mean, cfg.fd_threshold),
                spectral_radius: median(radii),
            }
        })
        .collect();
    Ok(Analysis {
        segmentation,
        sync,
        fd_map,
        groups,
    })
}

/// Depth predicted by `model` for each group, aggregated over every mel
/// segment of every member.
pub fn model_radii(analysis: &Analysis, model: &HyperFeatureModel, cfg: &PipelineConfig) -> CliResult<Vec<Option<f64>>> {
    analysis
        .groups
        .iter()
        .map(|g| {
            let mut preds = Vec::new();
            for &i in &g.members {
                let m = &analysis.sync.measurements[i];
                for seg in mel_segments(&m.acoustic, m.soi_index, &cfg.mel)? {
                    preds.push(model.forward(&seg)?);
                }
            }
            Ok(aggregate(&preds, cfg.train.aggregation).map(|p| p.depth).filter(|d| *d > 0.0))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct BackProjection {
    pub grid: VoxelGrid,
    pub targets: Vec<Target>,
    /// Indices of the groups that contributed shells.
    pub used_groups: Vec<usize>,
    pub radii: Vec<f64>,
    pub shell_tolerance: f64,
}

/// Accumulates one shell per subsurface-labelled group with a radius and
/// extracts the targets.
pub fn backproject(analysis: &Analysis, radii: &[Option<f64>], cfg: &PipelineConfig) -> CliResult<BackProjection> {
    let mut used = Vec::new();
    let mut used_radii = Vec::new();
    for (i, (g, r)) in analysis.groups.iter().zip(radii).enumerate() {
        if g.label != RegionLabel::SubsurfaceObject {
            continue;
        }
        match r {
            Some(r) => {
                used.push(i);
                used_radii.push(*r);
            }
            None => warn!("tap group {i} is labelled subsurface but has no radius"),
        }
    }
    if used.is_empty() {
        warn!("no subsurface-labelled tap groups; target list is empty");
    }

    let im = &cfg.imaging;
    let bin_width = analysis
        .sync
        .measurements
        .iter()
        .map(|m| m.spectrum.bin_width())
        .fold(0.0, f64::max);
    let shell_tolerance = im.shell_tol.unwrap_or_else(|| {
        used_radii
            .iter()
            .map(|&r| radius_bin_tolerance(r, cfg.wave_speed, bin_width))
            .fold(im.grid_res, f64::max)
    });

    let points: Vec<Vector3<f64>> = analysis.groups.iter().map(|g| g.centroid).collect();
    let mut lo = points.iter().fold(Vector3::repeat(f64::INFINITY), |a, p| a.inf(p));
    let mut hi = points.iter().fold(Vector3::repeat(f64::NEG_INFINITY), |a, p| a.sup(p));
    if points.is_empty() {
        lo = Vector3::zeros();
        hi = Vector3::zeros();
    }
    let deepest = used_radii.iter().fold(0.0, |a: f64, &r| a.max(r));
    lo.x -= im.margin;
    lo.y -= im.margin;
    hi.x += im.margin;
    hi.y += im.margin;
    lo.z = hi.z - deepest - shell_tolerance - im.margin;
    let grid = VoxelGrid::covering(lo, hi, im.grid_res)?;

    let groups: Vec<TapGroup> = used.iter().map(|&i| TapGroup::at(analysis.groups[i].centroid)).collect();
    let bp = BackProjectConfig {
        shell_tolerance,
        scoring: im.scoring,
        ..BackProjectConfig::default()
    };
    let grid = back_project(&groups, &used_radii, &grid, &bp)?;
    let targets = extract_targets(&grid, im.target_fraction)?;
    Ok(BackProjection {
        grid,
        targets,
        used_groups: used,
        radii: used_radii,
        shell_tolerance,
    })
}

/// Labels every matched SOI with its ground-truth tap and turns its mel
/// segments into training pairs. Returns the pairs and the number of SOIs
/// with no impact within `match_tolerance`.
pub fn training_pairs(
    analysis: &Analysis,
    truth: &GroundTruth,
    cfg: &PipelineConfig,
) -> CliResult<(Vec<TrainingPair>, usize)> {
    let mut pairs = Vec::new();
    let mut unmatched = 0;
    for m in &analysis.sync.measurements {
        let Some(tap) = truth.tap_for_time(m.acoustic.t_start, cfg.sync.match_tolerance) else {
            unmatched += 1;
            continue;
        };
        let nearest = tap.nearest_pipe_distance.is_finite().then_some(tap.nearest_pipe_distance);
        for seg in mel_segments(&m.acoustic, m.soi_index, &cfg.mel)? {
            let mut pair = TrainingPair::new(
                seg.values,
                u8::from(tap.has_pipe_below),
                tap.has_pipe_below.then_some(tap.nearest_pipe_distance),
            )?;
            pair.nearest_pipe_distance = nearest;
            pairs.push(pair);
        }
    }
    if unmatched > 0 {
        warn!("{unmatched} SOIs match no ground-truth impact");
    }
    Ok((pairs, unmatched))
}
