use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::HyperFeatureModel;
use super::TrainingPair;
use crate::error::{Error, Result};

const FORMAT: &str = "echomap-model";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    model: HyperFeatureModel,
}

pub fn save_model(model: &HyperFeatureModel, path: &Path) -> Result<()> {
    let ckpt = Checkpoint {
        format: FORMAT.into(),
        version: VERSION,
        model: model.clone(),
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, &ckpt).map_err(|e| Error::format(path, e.to_string()))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<HyperFeatureModel> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let ckpt: Checkpoint =
        serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::format(path, e.to_string()))?;
    if ckpt.format != FORMAT || ckpt.version != VERSION {
        return Err(Error::format(
            path,
            format!("unsupported checkpoint {} v{}", ckpt.format, ckpt.version),
        ));
    }
    let m = ckpt.model;
    // Rebuild the layout from the config and check every tensor fits it.
    let layout = HyperFeatureModel::zeros(m.config.clone()).map_err(|e| Error::format(path, e.to_string()))?;
    for ((name, want), (_, got)) in layout.tensors().iter().zip(m.tensors()) {
        if want.len() != got.len() {
            return Err(Error::format(
                path,
                format!("{name} holds {} values, expected {}", got.len(), want.len()),
            ));
        }
    }
    if !m.is_finite() {
        return Err(Error::format(path, "non-finite parameter"));
    }
    Ok(m)
}

/// Columns `pipe_label,depth,nearest_pipe_distance,v0..vN`; absent values are
/// empty fields.
pub fn write_dataset_to<W: Write>(w: W, pairs: &[TrainingPair]) -> Result<()> {
    let width = pairs.first().map_or(0, |p| p.values.len());
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["pipe_label".to_string(), "depth".into(), "nearest_pipe_distance".into()];
    header.extend((0..width).map(|i| format!("v{i}")));
    let err = |e: csv::Error| Error::InvalidInput(e.to_string());
    out.write_record(&header).map_err(err)?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |d| d.to_string());
    for p in pairs {
        if p.values.len() != width {
            return Err(Error::InvalidShape {
                expected: format!("{width} values"),
                actual: format!("{}", p.values.len()),
            });
        }
        let mut rec = vec![p.pipe_label.to_string(), opt(p.depth), opt(p.nearest_pipe_distance)];
        rec.extend(p.values.iter().map(|v| v.to_string()));
        out.write_record(&rec).map_err(err)?;
    }
    out.flush().map_err(|e| Error::InvalidInput(e.to_string()))
}

pub fn write_dataset(path: &Path, pairs: &[TrainingPair]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset_to(BufWriter::new(file), pairs).map_err(|e| match e {
        Error::InvalidInput(m) => Error::format(path, m),
        other => other,
    })
}

pub fn read_dataset_from<R: Read>(r: R) -> Result<Vec<TrainingPair>> {
    let mut rdr = csv::Reader::from_reader(r);
    let width = rdr
        .headers()
        .map_err(|e| Error::MalformedRecord {
            index: 0,
            message: e.to_string(),
        })?
        .len();
    if width < 3 {
        return Err(Error::MalformedRecord {
            index: 0,
            message: "header needs pipe_label,depth,nearest_pipe_distance".into(),
        });
    }
    let mut pairs = Vec::new();
    for (index, rec) in rdr.records().enumerate() {
        let bad = |message: String| Error::MalformedRecord { index, message };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != width {
            return Err(bad(format!("{} fields, expected {width}", rec.len())));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
        let opt = |s: &str| if s.trim().is_empty() { Ok(None) } else { num(s).map(Some) };
        let pipe_label: u8 = rec[0].trim().parse().map_err(|e| bad(format!("label {:?}: {e}", &rec[0])))?;
        let values = rec.iter().skip(3).map(num).collect::<Result<Vec<_>>>()?;
        let pair = TrainingPair {
            values,
            pipe_label,
            depth: opt(&rec[1])?,
            nearest_pipe_distance: opt(&rec[2])?,
        };
        pair.validate().map_err(|e| bad(e.to_string()))?;
        pairs.push(pair);
    }
    Ok(pairs)
}

pub fn read_dataset(path: &Path) -> Result<Vec<TrainingPair>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset_from(BufReader::new(file))
}
