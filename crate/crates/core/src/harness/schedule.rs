use crate::error::{Error, Result};

/// Half-cosine decay from `lr_start` at step 0 to `lr_min` at `total_steps`.
pub fn cosine_lr(step: usize, total_steps: usize, lr_start: f64, lr_min: f64) -> Result<f64> {
    if total_steps == 0 {
        return Err(Error::Schedule("total steps must be at least 1".into()));
    }
    if step > total_steps {
        return Err(Error::Schedule(format!("step {step} is past the last step {total_steps}")));
    }
    let progress = step as f64 / total_steps as f64;
    Ok(lr_min + 0.5 * (lr_start - lr_min) * (1.0 + (std::f64::consts::PI * progress).cos()))
}
