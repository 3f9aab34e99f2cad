use serde::{Deserialize, Serialize};

use super::NnError;

/// Stepped learning-rate decay.
///
/// `decay_after` lists 1-based epoch numbers; "after epoch k" means that
/// epochs k+1 onward use the decayed rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSchedule {
    pub initial: f64,
    pub decay_factor: f64,
    pub decay_after: Vec<u32>,
}

impl LrSchedule {
    /// Decay after epochs 1, 26 and 43 (60-epoch training).
    pub fn baseline() -> Self {
        Self {
            initial: 0.1,
            decay_factor: 0.9,
            decay_after: vec![1, 26, 43],
        }
    }

    /// Decay points moved to 1, 30 and 50 for the 30-70 epoch schedule.
    pub fn partial_training() -> Self {
        Self {
            decay_after: vec![1, 30, 50],
            ..Self::baseline()
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let increasing = self.decay_after.windows(2).all(|w| w[0] < w[1]);
        if !increasing || !(self.initial > 0.0) || !(self.decay_factor > 0.0) {
            return Err(NnError::InvalidSchedule(format!("{self:?}")));
        }
        Ok(())
    }

    pub fn lr_at_epoch(&self, epoch_number: u32) -> f64 {
        lr_at_epoch(epoch_number, self)
    }
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self::baseline()
    }
}

/// Learning rate used during the 1-based epoch `epoch_number`.
pub fn lr_at_epoch(epoch_number: u32, s: &LrSchedule) -> f64 {
    let elapsed = s.decay_after.iter().filter(|&&d| d < epoch_number).count();
    s.initial * s.decay_factor.powi(elapsed as i32)
}

/// Classical momentum: `v <- momentum * v + grad; w <- w - lr * v`.
pub fn sgd_momentum_step(params: &mut [Vec<f64>], velocity: &mut [Vec<f64>], grads: &[Vec<f64>], lr: f64, momentum: f64) {
    debug_assert_eq!(params.len(), grads.len());
    for ((w, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(grads) {
        debug_assert_eq!(w.len(), g.len());
        for ((wi, vi), gi) in w.iter_mut().zip(v.iter_mut()).zip(g) {
            *vi = momentum * *vi + gi;
            *wi -= lr * *vi;
        }
    }
}
