use nalgebra::{UnitQuaternion, Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::wave::{impact_template, WaveConfig};
use crate::error::{Error, Result};
use crate::posegraph::{PoseSample, SE3Transform, Trajectory};
use crate::signal::AudioTrace;

/// Straight buried pipe. Endpoints are surface `(x, y)` coordinates; the axis
/// runs `depth` below the surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipeSegment {
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub depth: f64,
    pub radius: f64,
}

impl PipeSegment {
    fn axis(&self) -> (Vector3<f64>, Vector3<f64>) {
        (
            Vector3::new(self.a[0], self.a[1], -self.depth),
            Vector3::new(self.b[0], self.b[1], -self.depth),
        )
    }

    /// Distance from a point to the pipe axis.
    pub fn distance_to_axis(&self, p: &Vector3<f64>) -> f64 {
        let (a, b) = self.axis();
        segment_distance(p, &a, &b)
    }

    /// Horizontal distance from `(x, y)` to the axis' vertical projection.
    pub fn plan_distance(&self, x: f64, y: f64) -> f64 {
        let p = Vector3::new(x, y, 0.0);
        let a = Vector3::new(self.a[0], self.a[1], 0.0);
        let b = Vector3::new(self.b[0], self.b[1], 0.0);
        segment_distance(&p, &a, &b)
    }

    /// Closest point on the axis to `p`.
    pub fn closest_axis_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let (a, b) = self.axis();
        let ab = b - a;
        let len2 = ab.norm_squared();
        let s = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
        a + ab * s
    }
}

fn segment_distance(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let s = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + ab * s)).norm()
}

/// Desk-scale inspection run: slab geometry, buried pipes and a lawnmower
/// survey that stops at each tap location and strikes at a fixed cadence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    /// Length (x), width (y) and thickness, meters. The surface is `z = 0`.
    pub slab: [f64; 3],
    pub pipes: Vec<PipeSegment>,
    pub lane_spacing: f64,
    pub tap_spacing: f64,
    /// Clearance between the slab edge and the outermost tap locations.
    pub margin: f64,
    /// Explicit tap locations replacing the lawnmower path.
    pub tap_layout: Option<Vec<[f64; 2]>>,
    pub cadence_hz: f64,
    pub taps_per_location: usize,
    /// Spreads exactly this many impacts over the locations instead of
    /// `taps_per_location` each; the first locations get one extra.
    pub total_impacts: Option<usize>,
    /// Travel time between tap locations, seconds.
    pub move_duration: f64,
    pub pose_rate_hz: f64,
    /// Height of the tracked body above the surface.
    pub sensor_height: f64,
    pub wave: WaveConfig,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            slab: [1.2, 0.8, 2.0],
            pipes: vec![PipeSegment {
                a: [0.6, 0.0],
                b: [0.6, 0.8],
                depth: 1.25,
                radius: 0.15,
            }],
            lane_spacing: 0.2,
            tap_spacing: 0.2,
            margin: 0.2,
            tap_layout: None,
            cadence_hz: 0.5,
            taps_per_location: 3,
            total_impacts: None,
            move_duration: 1.0,
            pose_rate_hz: 10.0,
            sensor_height: 0.3,
            wave: WaveConfig {
                noise_std: 0.01,
                ..WaveConfig::default()
            },
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    /// Five tap locations over the default pipe: one straight above the axis
    /// and four on the diagonals around it, so the shells cross at a single
    /// point instead of along an arc.
    pub fn five_tap() -> Self {
        let (cx, cy, a) = (0.6, 0.4, 0.1);
        Self {
            tap_layout: Some(vec![
                [cx, cy],
                [cx - a, cy - a],
                [cx + a, cy - a],
                [cx + a, cy + a],
                [cx - a, cy + a],
            ]),
            ..Self::default()
        }
    }

    /// 126 tap locations on a 14 x 9 lawnmower grid with 406 impacts in
    /// total, over two parallel pipes at different depths.
    pub fn paper_mirror() -> Self {
        Self {
            slab: [3.0, 2.0, 2.0],
            pipes: vec![
                PipeSegment {
                    a: [1.0, 0.0],
                    b: [1.0, 2.0],
                    depth: 1.25,
                    radius: 0.25,
                },
                PipeSegment {
                    a: [2.2, 0.0],
                    b: [2.2, 2.0],
                    depth: 1.45,
                    radius: 0.25,
                },
            ],
            total_impacts: Some(406),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.slab.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::InvalidParameter("slab dimensions must be positive".into()));
        }
        for (i, p) in self.pipes.iter().enumerate() {
            let inside = |q: &[f64; 2]| (0.0..=self.slab[0]).contains(&q[0]) && (0.0..=self.slab[1]).contains(&q[1]);
            if !inside(&p.a) || !inside(&p.b) {
                return Err(Error::InvalidParameter(format!("pipe {i} leaves the slab footprint")));
            }
            if !(p.depth > 0.0 && p.depth < self.slab[2]) || !(p.radius > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "pipe {i} needs 0 < depth < thickness and a positive radius"
                )));
            }
        }
        if !(self.cadence_hz > 0.0) || !(self.pose_rate_hz > 0.0) {
            return Err(Error::InvalidParameter("cadence and pose rate must be positive".into()));
        }
        if !(self.move_duration >= 0.0) {
            return Err(Error::InvalidParameter("move duration must be nonnegative".into()));
        }
        if self.taps_per_location == 0 {
            return Err(Error::InvalidParameter("taps_per_location must be at least 1".into()));
        }
        if self.tap_layout.is_none() && !(self.lane_spacing > 0.0 && self.tap_spacing > 0.0) {
            return Err(Error::InvalidParameter("lane and tap spacing must be positive".into()));
        }
        if self.wave.duration - self.wave.onset > 1.0 / self.cadence_hz {
            return Err(Error::InvalidParameter("impact responses would overlap at this cadence".into()));
        }
        self.wave.validate()?;
        let n = self.tap_locations().len();
        if n == 0 {
            return Err(Error::InvalidParameter("scenario has no tap locations".into()));
        }
        if let Some(total) = self.total_impacts {
            if total < n {
                return Err(Error::InvalidParameter(format!(
                    "{total} impacts cannot cover {n} tap locations"
                )));
            }
        }
        Ok(())
    }

    /// Surface `(x, y)` of every tap location in visiting order.
    pub fn tap_locations(&self) -> Vec<[f64; 2]> {
        if let Some(layout) = &self.tap_layout {
            return layout.clone();
        }
        let count = |extent: f64, spacing: f64| {
            let span = extent - 2.0 * self.margin;
            if span < 0.0 {
                0
            } else {
                (span / spacing + 1e-9).floor() as usize + 1
            }
        };
        let (nx, ny) = (count(self.slab[0], self.tap_spacing), count(self.slab[1], self.lane_spacing));
        let mut out = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            let y = self.margin + j as f64 * self.lane_spacing;
            for i in 0..nx {
                let i = if j % 2 == 0 { i } else { nx - 1 - i };
                out.push([self.margin + i as f64 * self.tap_spacing, y]);
            }
        }
        out
    }

    /// Impacts emitted at each location.
    pub fn impacts_per_location(&self) -> Vec<usize> {
        let n = self.tap_locations().len();
        match self.total_impacts {
            Some(total) if n > 0 => (0..n).map(|i| total / n + usize::from(i < total % n)).collect(),
            _ => vec![self.taps_per_location; n],
        }
    }
}

/// Ground truth for one tap location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapTruth {
    pub index: usize,
    /// Surface point struck by the solenoid.
    pub position: [f64; 3],
    pub has_pipe_below: bool,
    /// Distance to the nearest pipe axis, infinite without pipes.
    pub nearest_pipe_distance: f64,
    pub impact_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub taps: Vec<TapTruth>,
}

impl GroundTruth {
    pub fn impact_count(&self) -> usize {
        self.taps.iter().map(|t| t.impact_times.len()).sum()
    }

    /// Tap whose impact time is closest to `t`, if within `tolerance`.
    pub fn tap_for_time(&self, t: f64, tolerance: f64) -> Option<&TapTruth> {
        self.taps
            .iter()
            .flat_map(|tap| tap.impact_times.iter().map(move |&ti| (tap, (ti - t).abs())))
            .filter(|(_, d)| *d <= tolerance)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(tap, _)| tap)
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub audio: AudioTrace,
    pub trajectory: Trajectory,
    pub truth: GroundTruth,
}

/// Labels a surface point against the pipe geometry: `(has_pipe_below,
/// nearest axis distance)`.
pub fn label_point(pipes: &[PipeSegment], x: f64, y: f64) -> (bool, f64) {
    let p = Vector3::new(x, y, 0.0);
    let below = pipes.iter().any(|pipe| pipe.plan_distance(x, y) <= pipe.radius);
    let nearest = pipes
        .iter()
        .map(|pipe| pipe.distance_to_axis(&p))
        .fold(f64::INFINITY, f64::min);
    (below, nearest)
}

struct Stop {
    xy: [f64; 2],
    yaw: f64,
    arrive: f64,
    leave: f64,
}

fn heading(from: [f64; 2], to: [f64; 2], previous: f64) -> f64 {
    let d = Vector2::new(to[0] - from[0], to[1] - from[1]);
    if d.norm() < 1e-12 {
        previous
    } else {
        d.y.atan2(d.x)
    }
}

fn pose_of(xy: [f64; 2], yaw: f64, height: f64) -> SE3Transform {
    let q = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw);
    SE3Transform {
        rotation: *q.to_rotation_matrix().matrix(),
        translation: Vector3::new(xy[0], xy[1], height),
    }
}

/// Generates the audio stream, pose trajectory and ground truth of a
/// scenario. The output is a pure function of the configuration.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<Scenario> {
    config.validate()?;
    let locations = config.tap_locations();
    let counts = config.impacts_per_location();
    let period = 1.0 / config.cadence_hz;

    let mut stops = Vec::with_capacity(locations.len());
    let mut t = 0.0;
    let mut yaw = 0.0;
    for (i, (&xy, &n)) in locations.iter().zip(&counts).enumerate() {
        if let Some(next) = locations.get(i + 1) {
            yaw = heading(xy, *next, yaw);
        }
        let leave = t + n as f64 * period;
        stops.push(Stop {
            xy,
            yaw,
            arrive: t,
            leave,
        });
        t = leave + config.move_duration;
    }
    let end = stops.last().map_or(0.0, |s| s.leave);

    let wave = &config.wave;
    let sr = wave.sample_rate;
    let total = (end * sr).round() as usize;
    let mut samples = vec![0.0; total];
    let mut truth = GroundTruth::default();
    for (i, (stop, &n)) in stops.iter().zip(&counts).enumerate() {
        let (below, nearest) = label_point(&config.pipes, stop.xy[0], stop.xy[1]);
        let depth = if below { nearest } else { config.slab[2] };
        let template = impact_template(below, depth, wave)?;
        let mut impact_times = Vec::with_capacity(n);
        for k in 0..n {
            let ti = stop.arrive + (k as f64 + 0.5) * period;
            let start = (ti * sr).round() as usize;
            for (dst, v) in samples[start.min(total)..].iter_mut().zip(&template) {
                *dst += v;
            }
            impact_times.push(start as f64 / sr);
        }
        truth.taps.push(TapTruth {
            index: i,
            position: [stop.xy[0], stop.xy[1], 0.0],
            has_pipe_below: below,
            nearest_pipe_distance: nearest,
            impact_times,
        });
    }
    if wave.noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let noise = Normal::new(0.0, wave.noise_std).expect("noise_std validated");
        for s in &mut samples {
            *s += noise.sample(&mut rng);
        }
    }
    for s in &mut samples {
        *s = s.clamp(-1.0, 1.0);
    }
    let audio = AudioTrace::new(samples, sr, 0.0)?;

    // Breakpoints at every arrival and departure keep the stops exact under
    // interpolation; regular samples fill in the moves.
    let mut times: Vec<f64> = (0..=(end * config.pose_rate_hz).floor() as usize)
        .map(|k| k as f64 / config.pose_rate_hz)
        .chain(stops.iter().flat_map(|s| [s.arrive, s.leave]))
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let pose_at = |t: f64| -> SE3Transform {
        let k = stops.partition_point(|s| s.arrive <= t).saturating_sub(1);
        let s = &stops[k];
        if t <= s.leave || k + 1 == stops.len() {
            return pose_of(s.xy, s.yaw, config.sensor_height);
        }
        let next = &stops[k + 1];
        let u = ((t - s.leave) / (next.arrive - s.leave)).clamp(0.0, 1.0);
        let a = pose_of(s.xy, s.yaw, config.sensor_height);
        let b = pose_of(next.xy, next.yaw, config.sensor_height);
        a.interpolate(&b, u)
    };
    let trajectory = Trajectory::new(
        times
            .into_iter()
            .map(|t| PoseSample {
                timestamp: t,
                pose: pose_at(t),
            })
            .collect(),
    )?;
    Ok(Scenario {
        audio,
        trajectory,
        truth,
    })
}
