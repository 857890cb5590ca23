//! Joint pipe classification and depth regression from log-mel segments.

mod io;
mod loss;
mod model;
mod train;

pub use io::{load_model, read_dataset, read_dataset_from, save_model, write_dataset, write_dataset_to};
pub use loss::{loss_depth, loss_joint, loss_pipe, LossWeights, LOG_FLOOR};
pub use model::{
    conv_forward, Conv2d, Dense, FeatureMap, HyperFeatureModel, ModelConfig, Prediction, Targets, INPUT_SCALE_DB,
};
pub use train::{evaluate, split_dataset, train, DepthSupervision, Evaluation, TrainConfig, TrainOutcome};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One labelled log-mel segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub values: Vec<f64>,
    pub pipe_label: u8,
    /// Depth to the pipe; present exactly when `pipe_label == 1`.
    pub depth: Option<f64>,
    /// Distance to the nearest pipe regardless of the label, if known.
    pub nearest_pipe_distance: Option<f64>,
}

impl TrainingPair {
    pub fn new(values: Vec<f64>, pipe_label: u8, depth: Option<f64>) -> Result<Self> {
        let pair = Self {
            values,
            pipe_label,
            depth,
            nearest_pipe_distance: depth,
        };
        pair.validate()?;
        Ok(pair)
    }

    pub fn validate(&self) -> Result<()> {
        match (self.pipe_label, self.depth) {
            (0, None) => {}
            (1, Some(d)) if d.is_finite() && d > 0.0 => {}
            (1, Some(d)) => return Err(Error::InvalidInput(format!("pipe depth {d} must be positive"))),
            (1, None) => return Err(Error::InvalidInput("pipe pair without a depth".into())),
            (0, Some(_)) => return Err(Error::InvalidInput("no-pipe pair with a depth".into())),
            (l, _) => return Err(Error::InvalidInput(format!("pipe label {l} is not 0 or 1"))),
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite input value".into()));
        }
        Ok(())
    }
}

/// How several predictions at one tap location are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Average probabilities and depths.
    #[default]
    Mean,
    /// Majority vote on the label; depth averaged over the winning side.
    MaxVote,
}

/// Combines per-impact predictions into one. `None` for an empty slice.
pub fn aggregate(predictions: &[Prediction], mode: Aggregation) -> Option<Prediction> {
    if predictions.is_empty() {
        return None;
    }
    let n = predictions.len() as f64;
    let mean = |ps: &[&Prediction]| {
        let k = ps.len() as f64;
        Prediction {
            pipe_probs: [
                ps.iter().map(|p| p.pipe_probs[0]).sum::<f64>() / k,
                ps.iter().map(|p| p.pipe_probs[1]).sum::<f64>() / k,
            ],
            depth: ps.iter().map(|p| p.depth).sum::<f64>() / k,
        }
    };
    let all: Vec<&Prediction> = predictions.iter().collect();
    match mode {
        Aggregation::Mean => Some(mean(&all)),
        Aggregation::MaxVote => {
            let pipes: Vec<&Prediction> = all.iter().copied().filter(|p| p.has_pipe()).collect();
            let others: Vec<&Prediction> = all.iter().copied().filter(|p| !p.has_pipe()).collect();
            let winners = if pipes.len() as f64 > n / 2.0 { pipes } else { others };
            let mut out = mean(&winners);
            let frac = winners.len() as f64 / n;
            let pipe_won = out.pipe_probs[1] > out.pipe_probs[0];
            out.pipe_probs = if pipe_won { [1.0 - frac, frac] } else { [frac, 1.0 - frac] };
            Some(out)
        }
    }
}
