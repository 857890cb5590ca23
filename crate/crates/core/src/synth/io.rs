//! Scenario files: the same WAV and pose CSV formats the ingestion path
//! reads, plus ground truth as `ground_truth.csv` (one row per tap location)
//! and `impacts.csv` (one row per impact).

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{GroundTruth, Scenario, TapTruth};
use crate::error::{Error, Result};
use crate::posegraph::io::write_trajectory;
use crate::signal::wav::write_wav_pcm16;

pub const AUDIO_FILE: &str = "audio.wav";
pub const POSES_FILE: &str = "poses.csv";
pub const TRUTH_FILE: &str = "ground_truth.csv";
pub const IMPACTS_FILE: &str = "impacts.csv";

#[derive(Debug, Serialize, Deserialize)]
struct TapRow {
    tap_index: usize,
    x: f64,
    y: f64,
    z: f64,
    has_pipe_below: u8,
    nearest_pipe_distance: f64,
    impacts: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct ImpactRow {
    time: f64,
    tap_index: usize,
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::format(path, e.to_string())
}

pub fn write_ground_truth(dir: &Path, truth: &GroundTruth) -> Result<()> {
    let path = dir.join(TRUTH_FILE);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for t in &truth.taps {
        w.serialize(TapRow {
            tap_index: t.index,
            x: t.position[0],
            y: t.position[1],
            z: t.position[2],
            has_pipe_below: u8::from(t.has_pipe_below),
            nearest_pipe_distance: t.nearest_pipe_distance,
            impacts: t.impact_times.len(),
        })
        .map_err(csv_err(&path))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join(IMPACTS_FILE);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for t in &truth.taps {
        for &time in &t.impact_times {
            w.serialize(ImpactRow { time, tap_index: t.index })
                .map_err(csv_err(&path))?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

pub fn read_ground_truth(dir: &Path) -> Result<GroundTruth> {
    let path = dir.join(TRUTH_FILE);
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut taps = Vec::new();
    for (i, row) in csv::Reader::from_reader(BufReader::new(file)).deserialize::<TapRow>().enumerate() {
        let row = row.map_err(|e| Error::format(&path, format!("record {}: {e}", i + 1)))?;
        if row.tap_index != taps.len() {
            return Err(Error::format(&path, format!("record {}: tap index out of order", i + 1)));
        }
        taps.push(TapTruth {
            index: row.tap_index,
            position: [row.x, row.y, row.z],
            has_pipe_below: row.has_pipe_below != 0,
            nearest_pipe_distance: row.nearest_pipe_distance,
            impact_times: Vec::with_capacity(row.impacts),
        });
    }
    let path = dir.join(IMPACTS_FILE);
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    for (i, row) in csv::Reader::from_reader(BufReader::new(file)).deserialize::<ImpactRow>().enumerate() {
        let row = row.map_err(|e| Error::format(&path, format!("record {}: {e}", i + 1)))?;
        let tap = taps
            .get_mut(row.tap_index)
            .ok_or_else(|| Error::format(&path, format!("record {}: unknown tap {}", i + 1, row.tap_index)))?;
        tap.impact_times.push(row.time);
    }
    Ok(GroundTruth { taps })
}

/// Writes audio, poses and ground truth into `dir`, returning the paths.
pub fn write_scenario(dir: &Path, scenario: &Scenario) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let audio = dir.join(AUDIO_FILE);
    write_wav_pcm16(&audio, &scenario.audio)?;
    let poses = dir.join(POSES_FILE);
    write_trajectory(&poses, &scenario.trajectory)?;
    write_ground_truth(dir, &scenario.truth)?;
    Ok(vec![audio, poses, dir.join(TRUTH_FILE), dir.join(IMPACTS_FILE)])
}
