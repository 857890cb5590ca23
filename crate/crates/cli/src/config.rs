use std::path::{Path, PathBuf};

use echomap::imaging::{PeakBand, ShellScoring};
use echomap::inference::{Aggregation, DepthSupervision, LossWeights, ModelConfig, TrainConfig};
use echomap::signal::{MelConfig, SegmentConfig, SoiConfig, DEFAULT_CUTOFF_HZ};
use echomap::synth::ScenarioConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Environment variable naming a config file when `--config` is absent.
pub const CONFIG_ENV: &str = "ECHOMAP_CONFIG";

/// Where back-projection radii come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RadiusSource {
    /// Echo peak of the impact spectrum.
    #[default]
    Spectral,
    /// Depth predicted by a trained model.
    Model,
}

impl RadiusSource {
    pub fn as_str(self) -> &'static str {
        match self {
            RadiusSource::Spectral => "spectral",
            RadiusSource::Model => "model",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Small slab with one pipe, surveyed on a lawnmower path.
    #[default]
    Default,
    /// 126 locations and 406 impacts over two pipes.
    PaperMirror,
    /// Five taps around a single pipe.
    FiveTap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyncSettings {
    pub time_tolerance: f64,
    pub group_radius: f64,
    /// Largest gap between an SOI onset and a ground-truth impact time when
    /// labelling training data.
    pub match_tolerance: f64,
}

impl Default for SyncSettings {
    fn default() -> Self {
        Self {
            time_tolerance: 0.05,
            group_radius: 0.03,
            match_tolerance: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImagingSettings {
    pub grid_res: f64,
    /// Defaults to the larger of the grid resolution and the radius
    /// uncertainty of one spectral bin.
    pub shell_tol: Option<f64>,
    pub scoring: ShellScoring,
    /// Voxels at or above this fraction of the maximum form targets.
    pub target_fraction: f64,
    /// Voxels at or above this fraction of the maximum go to the PLY.
    pub export_fraction: f64,
    /// Horizontal padding of the grid around the tap locations.
    pub margin: f64,
    /// Checkpoint used when the radius source is the model.
    pub model_path: Option<PathBuf>,
}

impl Default for ImagingSettings {
    fn default() -> Self {
        Self {
            grid_res: 0.02,
            shell_tol: None,
            scoring: ShellScoring::Binary,
            target_fraction: 0.8,
            export_fraction: 0.5,
            margin: 0.2,
            model_path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub w0: f64,
    pub w1: f64,
    pub depth_supervision: DepthSupervision,
    pub held_out_fraction: f64,
    pub aggregation: Aggregation,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            epochs: 12,
            learning_rate: 0.05,
            batch_size: 8,
            w0: 1.0,
            w1: 1.0,
            depth_supervision: DepthSupervision::PipeOnly,
            held_out_fraction: 0.2,
            aggregation: Aggregation::Mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    pub preset: Preset,
    pub noise_std: Option<f64>,
    /// Full scenario, replacing the preset.
    pub scenario: Option<ScenarioConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub cutoff_hz: f64,
    /// FD below this marks a tap as over a subsurface object.
    pub fd_threshold: f64,
    pub wave_speed: f64,
    pub radius_source: RadiusSource,
    pub segment: SegmentConfig,
    pub soi: SoiConfig,
    pub mel: MelConfig,
    pub peak_band: PeakBand,
    pub sync: SyncSettings,
    pub imaging: ImagingSettings,
    pub model: ModelConfig,
    pub train: TrainSettings,
    pub synth: SynthSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            cutoff_hz: DEFAULT_CUTOFF_HZ,
            // Midway between pipe and no-pipe FD of the synthetic surveys.
            fd_threshold: 1.5e7,
            wave_speed: 4000.0,
            radius_source: RadiusSource::Spectral,
            segment: SegmentConfig::default(),
            soi: SoiConfig::default(),
            mel: MelConfig::default(),
            peak_band: PeakBand::default(),
            sync: SyncSettings::default(),
            imaging: ImagingSettings::default(),
            model: ModelConfig::default(),
            train: TrainSettings::default(),
            synth: SynthSettings::default(),
        }
    }
}

/// Command-line values that take precedence over every file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub cutoff_hz: Option<f64>,
    pub fd_threshold: Option<f64>,
    pub wave_speed: Option<f64>,
    pub grid_res: Option<f64>,
    pub shell_tol: Option<f64>,
    pub radius_source: Option<RadiusSource>,
    pub preset: Option<Preset>,
    pub model_path: Option<PathBuf>,
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl PipelineConfig {
    /// Layers `file` (parsed as TOML) over `self`; keys absent from the file
    /// keep their current values.
    pub fn layered_with_file(&self, path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        self.layered_with_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn layered_with_str(&self, text: &str) -> CliResult<Self> {
        let overlay: toml::Table = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        let mut base = toml::Table::try_from(self).map_err(|e| invalid(e.to_string()))?;
        merge(&mut base, overlay);
        base.try_into().map_err(|e: toml::de::Error| invalid(e.to_string()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.cutoff_hz {
            self.cutoff_hz = v;
        }
        if let Some(v) = o.fd_threshold {
            self.fd_threshold = v;
        }
        if let Some(v) = o.wave_speed {
            self.wave_speed = v;
        }
        if let Some(v) = o.grid_res {
            self.imaging.grid_res = v;
        }
        if let Some(v) = o.shell_tol {
            self.imaging.shell_tol = Some(v);
        }
        if let Some(v) = o.radius_source {
            self.radius_source = v;
        }
        if let Some(v) = o.preset {
            self.synth.preset = v;
            self.synth.scenario = None;
        }
        if let Some(v) = &o.model_path {
            self.imaging.model_path = Some(v.clone());
        }
    }

    /// `base` ← config file (explicit path, else `env_file`) ← overrides,
    /// validated.
    pub fn load(
        base: Self,
        file: Option<&Path>,
        env_file: Option<&Path>,
        overrides: &Overrides,
    ) -> CliResult<Self> {
        let mut cfg = match file.or(env_file) {
            Some(p) => base.layered_with_file(p)?,
            None => base,
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn scenario(&self) -> ScenarioConfig {
        let mut s = match (&self.synth.scenario, self.synth.preset) {
            (Some(s), _) => s.clone(),
            (None, Preset::Default) => ScenarioConfig::default(),
            (None, Preset::PaperMirror) => ScenarioConfig::paper_mirror(),
            (None, Preset::FiveTap) => ScenarioConfig::five_tap(),
        };
        s.seed = self.seed;
        s.wave.wave_speed = self.wave_speed;
        if let Some(n) = self.synth.noise_std {
            s.wave.noise_std = n;
        }
        s
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            weights: LossWeights {
                depth: t.w0,
                pipe: t.w1,
            },
            depth_supervision: t.depth_supervision,
            seed: self.seed,
            target_loss: None,
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let positive = [
            ("cutoff_hz", self.cutoff_hz),
            ("wave_speed", self.wave_speed),
            ("imaging.grid_res", self.imaging.grid_res),
            ("sync.group_radius", self.sync.group_radius),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.fd_threshold >= 0.0 && self.fd_threshold.is_finite()) {
            return Err(invalid("fd_threshold must be nonnegative"));
        }
        if let Some(t) = self.imaging.shell_tol {
            if !(t > 0.0 && t.is_finite()) {
                return Err(invalid(format!("imaging.shell_tol must be positive, got {t}")));
            }
        }
        for (name, f) in [
            ("imaging.target_fraction", self.imaging.target_fraction),
            ("imaging.export_fraction", self.imaging.export_fraction),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(invalid(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(self.imaging.margin >= 0.0) {
            return Err(invalid("imaging.margin must be nonnegative"));
        }
        if !(self.sync.time_tolerance >= 0.0 && self.sync.match_tolerance >= 0.0) {
            return Err(invalid("sync tolerances must be nonnegative"));
        }
        if !(self.soi.threshold > 0.0 && self.soi.threshold <= 1.0) {
            return Err(invalid("soi.threshold must lie in (0, 1]"));
        }
        if !(self.soi.pre >= 0.0 && self.soi.post > 0.0) {
            return Err(invalid("soi window must have pre >= 0 and post > 0"));
        }
        let b = self.peak_band;
        if !(b.low_hz >= 0.0 && b.high_hz > b.low_hz) {
            return Err(invalid("peak_band must satisfy 0 <= low_hz < high_hz"));
        }
        if !(0.0..1.0).contains(&self.train.held_out_fraction) {
            return Err(invalid("train.held_out_fraction must lie in [0, 1)"));
        }
        if let Some(n) = self.synth.noise_std {
            if !(n >= 0.0) {
                return Err(invalid("synth.noise_std must be nonnegative"));
            }
        }
        if (self.mel.n_mels, self.mel.frames_per_segment) != (self.model.input_rows, self.model.input_cols) {
            return Err(invalid(format!(
                "mel segments are {}x{} but the model expects {}x{}",
                self.mel.n_mels, self.mel.frames_per_segment, self.model.input_rows, self.model.input_cols
            )));
        }
        self.segment.validate()?;
        self.mel.validate()?;
        self.model.validate()?;
        self.train_config().validate()?;
        self.scenario().validate()?;
        Ok(())
    }
}
