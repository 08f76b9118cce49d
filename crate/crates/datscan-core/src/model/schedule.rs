//! Step-decay learning-rate schedule.

/// Learning rate `initial_lr * decay_factor^(epoch / period)` (integer
/// division), clamped from below at `min_lr`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct StepDecay {
    pub initial_lr: f64,
    pub decay_factor: f64,
    /// Epochs between decays.
    pub period: usize,
    pub min_lr: f64,
}

impl Default for StepDecay {
    fn default() -> Self {
        StepDecay {
            initial_lr: 1e-3,
            decay_factor: 0.1,
            period: 125,
            min_lr: 1e-6,
        }
    }
}

impl StepDecay {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.initial_lr.is_finite() && self.initial_lr > 0.0) {
            return Err(format!("initial_lr must be positive, got {}", self.initial_lr));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(format!(
                "decay_factor must be in (0, 1], got {}",
                self.decay_factor
            ));
        }
        if self.period == 0 {
            return Err("period must be at least 1".into());
        }
        if !(self.min_lr > 0.0 && self.min_lr <= self.initial_lr) {
            return Err(format!(
                "min_lr must be in (0, initial_lr], got {}",
                self.min_lr
            ));
        }
        Ok(())
    }

    /// Learning rate for a 0-based epoch index.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let steps = (epoch / self.period) as i32;
        (self.initial_lr * self.decay_factor.powi(steps)).max(self.min_lr)
    }
}
