//! Losses, gradients, the Adam optimizer, the training loop and checkpoints.

pub mod adam;
mod checkpoint;
pub mod gradcheck;
pub mod loss;
mod trainer;

pub use adam::{adam_step, AdamHyper, AdamMoments, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, LogRow, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, LOG_HEADER};
pub use gradcheck::{finite_diff_grad, gradcheck, GradCheckOptions, GradCheckReport};
pub use loss::{gradients, loss_attr, loss_ce, loss_vis, total_loss, LossBreakdown, Objective};
pub use trainer::{train, train_with_restarts, TrainError, TrainOutcome};

use crate::data::AttributeNorm;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EarlyStop {
    /// Best validation H over the default multiplicative calibration grid.
    #[default]
    ValH,
    /// Validation ZSL top-1.
    ValT1,
    None,
}

impl EarlyStop {
    pub fn as_str(self) -> &'static str {
        match self {
            EarlyStop::ValH => "val_h",
            EarlyStop::ValT1 => "val_t1",
            EarlyStop::None => "none",
        }
    }
}

impl std::str::FromStr for EarlyStop {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "val_h" | "val-h" => Ok(EarlyStop::ValH),
            "val_t1" | "val-t1" => Ok(EarlyStop::ValT1),
            "none" => Ok(EarlyStop::None),
            other => Err(Error::Contract(format!("unknown early-stop metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Zero returns the initialization unchanged.
    pub epochs: usize,
    pub seed: u64,
    pub early_stop: EarlyStop,
    /// Epochs without improvement before stopping.
    pub patience: usize,
    pub attribute_norm: AttributeNorm,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.1,
            lambda2: 0.1,
            learning_rate: 0.001,
            batch_size: 64,
            epochs: 50,
            seed: 0,
            early_stop: EarlyStop::ValH,
            patience: 10,
            attribute_norm: AttributeNorm::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if !ok(self.lambda1) || !ok(self.lambda2) {
            return Err(Error::Contract("lambda1 and lambda2 must be finite and >= 0".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Contract(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Contract("batch_size must be positive".into()));
        }
        if self.patience == 0 {
            return Err(Error::Contract("patience must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!((c.lambda1, c.lambda2, c.learning_rate), (0.1, 0.1, 0.001));
        assert_eq!((c.batch_size, c.epochs, c.patience), (64, 50, 10));
        assert_eq!(c.early_stop, EarlyStop::ValH);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        for c in [
            TrainConfig { lambda1: -0.1, ..Default::default() },
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { lambda2: f64::NAN, ..Default::default() },
        ] {
            assert!(c.validate().is_err());
        }
    }

    #[test]
    fn early_stop_round_trip() {
        for e in [EarlyStop::ValH, EarlyStop::ValT1, EarlyStop::None] {
            assert_eq!(e.as_str().parse::<EarlyStop>().unwrap(), e);
        }
    }
}
