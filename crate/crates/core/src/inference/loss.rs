use serde::{Deserialize, Serialize};

/// Probabilities below this are clamped before taking the log.
pub const LOG_FLOOR: f64 = 1e-12;

/// Negative log-likelihood of `label` under `probs`.
pub fn loss_pipe(probs: &[f64; 2], label: u8) -> f64 {
    let p = probs[usize::from(label.min(1))];
    -(p.max(LOG_FLOOR)).ln()
}

/// Squared error `(label - predicted)²`.
pub fn loss_depth(predicted: f64, label: f64) -> f64 {
    let d = label - predicted;
    d * d
}

/// `w0 · depth + w1 · pipe`; the depth term is dropped when unlabelled.
pub fn loss_joint(depth: Option<f64>, pipe: f64, w0: f64, w1: f64) -> f64 {
    w0 * depth.unwrap_or(0.0) + w1 * pipe
}

/// Weights of the joint loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// W0, on the depth term.
    pub depth: f64,
    /// W1, on the pipe term.
    pub pipe: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { depth: 1.0, pipe: 1.0 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pipe_loss_examples() {
        assert_eq!(loss_pipe(&[1.0, 0.0], 0), 0.0);
        for label in [0, 1] {
            assert!((loss_pipe(&[0.5, 0.5], label) - std::f64::consts::LN_2).abs() < 1e-15);
        }
        assert!((loss_pipe(&[1.0, 0.0], 1) + LOG_FLOOR.ln()).abs() < 1e-9);
    }

    #[test]
    fn depth_and_joint_examples() {
        assert_eq!(loss_depth(1.5, 1.5), 0.0);
        assert_eq!(loss_depth(3.0, 5.0), 4.0);
        assert_eq!(loss_joint(Some(0.3), 0.7, 1.0, 1.0), 1.0);
        assert_eq!(loss_joint(Some(5.0), 0.7, 0.0, 2.0), 1.4);
        assert_eq!(loss_joint(None, 0.7, 3.0, 1.0), 0.7);
    }

    proptest! {
        #[test]
        fn losses_match_direct_formulas(p in 1e-6f64..1.0, y in -5.0f64..5.0, q in -5.0f64..5.0,
                                        w0 in 0.0f64..3.0, w1 in 0.0f64..3.0) {
            let probs = [p, 1.0 - p];
            prop_assert!((loss_pipe(&probs, 0) - (-p.ln())).abs() < 1e-12);
            prop_assert!((loss_pipe(&probs, 1) - (-(1.0 - p).max(LOG_FLOOR).ln())).abs() < 1e-12);
            prop_assert!(loss_pipe(&probs, 0) >= 0.0);
            prop_assert_eq!(loss_depth(q, y), (y - q) * (y - q));
            let (ld, lp) = (loss_depth(q, y), loss_pipe(&probs, 1));
            prop_assert_eq!(loss_joint(Some(ld), lp, w0, w1), w0 * ld + w1 * lp);
        }
    }
}
