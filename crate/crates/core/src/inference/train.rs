use log::{debug, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::LossWeights;
use super::model::{HyperFeatureModel, ModelConfig, Targets};
use super::TrainingPair;
use crate::error::{Error, Result};

/// Which pairs contribute to the depth loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthSupervision {
    /// Only pairs labelled as pipe.
    #[default]
    PipeOnly,
    /// Every pair with a finite nearest-pipe distance.
    AllFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub weights: LossWeights,
    pub depth_supervision: DepthSupervision,
    pub seed: u64,
    /// Stop early once the mean epoch loss drops below this.
    pub target_loss: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            learning_rate: 1e-2,
            batch_size: 8,
            weights: LossWeights::default(),
            depth_supervision: DepthSupervision::PipeOnly,
            seed: 0,
            target_loss: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidParameter("learning rate must be nonnegative".into()));
        }
        let w = &self.weights;
        if !(w.depth >= 0.0 && w.pipe >= 0.0) || !w.depth.is_finite() || !w.pipe.is_finite() {
            return Err(Error::InvalidParameter("loss weights must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: HyperFeatureModel,
    /// Mean loss per epoch.
    pub loss_history: Vec<f64>,
    pub warnings: Vec<String>,
}

fn targets(pair: &TrainingPair, mode: DepthSupervision) -> Targets {
    let depth = match mode {
        DepthSupervision::PipeOnly => pair.depth,
        DepthSupervision::AllFinite => pair
            .depth
            .or(pair.nearest_pipe_distance)
            .filter(|d| d.is_finite()),
    };
    Targets {
        pipe_label: pair.pipe_label,
        depth,
    }
}

/// Mini-batch gradient descent on the joint loss.
///
/// Each step moves by `lr / |B|` times the summed batch gradient. A
/// non-finite loss or parameter aborts with `NumericalFailure`.
pub fn train(pairs: &[TrainingPair], model_config: ModelConfig, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    for p in pairs {
        p.validate()?;
    }
    let mut model = HyperFeatureModel::new(model_config, config.seed)?;
    // Start the depth output at the mean supervised depth so the head only
    // has to learn the variation around it.
    let depths: Vec<f64> = pairs
        .iter()
        .filter_map(|p| targets(p, config.depth_supervision).depth)
        .collect();
    if !depths.is_empty() {
        model.depth3.biases[0] = depths.iter().sum::<f64>() / depths.len() as f64;
    }
    let mut warnings = Vec::new();
    if pairs.iter().all(|p| p.pipe_label == pairs[0].pipe_label) {
        let w = format!("training set holds only label {}", pairs[0].pipe_label);
        warn!("{w}");
        warnings.push(w);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grad = model.zeros_like();
            for &i in batch {
                let t = targets(&pairs[i], config.depth_supervision);
                total += model.accumulate_gradient(&pairs[i].values, &t, &config.weights, &mut grad)?;
            }
            model.axpy(-config.learning_rate / batch.len() as f64, &grad);
        }
        let mean = total / pairs.len() as f64;
        if !mean.is_finite() || !model.is_finite() {
            return Err(Error::NumericalFailure(format!("training diverged in epoch {epoch}")));
        }
        debug!("epoch {epoch}: loss {mean:.5}");
        history.push(mean);
        if config.target_loss.is_some_and(|t| mean < t) {
            break;
        }
    }
    Ok(TrainOutcome {
        model,
        loss_history: history,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Evaluation {
    pub samples: usize,
    pub accuracy: f64,
    /// Over pipe-labelled pairs; NaN if there are none.
    pub depth_mae: f64,
}

pub fn evaluate(model: &HyperFeatureModel, pairs: &[TrainingPair]) -> Result<Evaluation> {
    let mut correct = 0;
    let mut err = 0.0;
    let mut n_depth = 0;
    for p in pairs {
        let pred = model.forward_values(&p.values)?;
        if u8::from(pred.has_pipe()) == p.pipe_label {
            correct += 1;
        }
        if let Some(d) = p.depth {
            err += (pred.depth - d).abs();
            n_depth += 1;
        }
    }
    Ok(Evaluation {
        samples: pairs.len(),
        accuracy: if pairs.is_empty() { f64::NAN } else { correct as f64 / pairs.len() as f64 },
        depth_mae: if n_depth == 0 { f64::NAN } else { err / n_depth as f64 },
    })
}

/// Seeded shuffle split into `(train, held_out)`; `held_out_fraction` of the
/// pairs, rounded, go to the second set.
pub fn split_dataset(
    pairs: &[TrainingPair],
    held_out_fraction: f64,
    seed: u64,
) -> Result<(Vec<TrainingPair>, Vec<TrainingPair>)> {
    if !(0.0..1.0).contains(&held_out_fraction) {
        return Err(Error::InvalidParameter("held-out fraction must be in [0, 1)".into()));
    }
    let mut idx: Vec<usize> = (0..pairs.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = (pairs.len() as f64 * held_out_fraction).round() as usize;
    let test = idx[..n_test].iter().map(|&i| pairs[i].clone()).collect();
    let train = idx[n_test..].iter().map(|&i| pairs[i].clone()).collect();
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::super::model::tests::{random_input, small_config};
    use super::*;

    fn toy_pairs(n: usize) -> Vec<TrainingPair> {
        let cfg = small_config();
        (0..n)
            .map(|i| {
                let pipe = i % 2 == 0;
                let mut v = random_input(&cfg, i as u64);
                // Pipe pairs are quieter in the low rows.
                if pipe {
                    v.iter_mut().take(3 * cfg.input_cols).for_each(|x| *x = -75.0);
                }
                let depth = pipe.then_some(1.0 + 0.1 * (i % 3) as f64);
                TrainingPair::new(v, u8::from(pipe), depth).unwrap()
            })
            .collect()
    }

    #[test]
    fn loss_decreases_and_is_deterministic() {
        let pairs = toy_pairs(24);
        let cfg = TrainConfig {
            epochs: 30,
            learning_rate: 0.05,
            batch_size: 4,
            seed: 3,
            ..TrainConfig::default()
        };
        let a = train(&pairs, small_config(), &cfg).unwrap();
        assert!(a.loss_history.last().unwrap() < &a.loss_history[0]);
        let b = train(&pairs, small_config(), &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.loss_history, b.loss_history);
        let e = evaluate(&a.model, &pairs).unwrap();
        assert!(e.accuracy > 0.9, "{e:?}");
    }

    #[test]
    fn zero_learning_rate_keeps_the_initialization() {
        let pairs = toy_pairs(6);
        let cfg = TrainConfig {
            epochs: 2,
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let out = train(&pairs, small_config(), &cfg).unwrap();
        let mut init = HyperFeatureModel::new(small_config(), cfg.seed).unwrap();
        init.depth3.biases[0] = out.model.depth3.biases[0];
        assert_eq!(out.model, init);
        // Same model both epochs; only the summation order is shuffled.
        let (l0, l1) = (out.loss_history[0], out.loss_history[1]);
        assert!((l0 - l1).abs() <= 1e-12 * l0, "{l0} vs {l1}");
    }

    #[test]
    fn single_class_warns() {
        let pairs: Vec<_> = toy_pairs(10).into_iter().filter(|p| p.pipe_label == 0).collect();
        let out = train(
            &pairs,
            small_config(),
            &TrainConfig {
                epochs: 1,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn divergence_is_reported() {
        let pairs = toy_pairs(8);
        let cfg = TrainConfig {
            epochs: 5,
            learning_rate: 1e200,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&pairs, small_config(), &cfg), Err(Error::NumericalFailure(_))));
    }

    #[test]
    fn split_is_seeded_and_disjoint() {
        let pairs = toy_pairs(20);
        let (a, b) = split_dataset(&pairs, 0.2, 1).unwrap();
        assert_eq!((a.len(), b.len()), (16, 4));
        assert_eq!(split_dataset(&pairs, 0.2, 1).unwrap(), (a.clone(), b.clone()));
        for p in &b {
            assert!(!a.contains(p));
        }
    }

    #[test]
    fn all_finite_supervision_uses_nearest_distance() {
        let mut p = TrainingPair::new(vec![0.0], 0, None).unwrap();
        p.nearest_pipe_distance = Some(0.7);
        assert_eq!(targets(&p, DepthSupervision::PipeOnly).depth, None);
        assert_eq!(targets(&p, DepthSupervision::AllFinite).depth, Some(0.7));
    }
}
