use crate::error::{Error, Result};

/// Warmup-then-inverse-square-root learning rate:
/// `coefficient * min(step^-0.5, step * warmup^-1.5)`.
///
/// Rises linearly to its peak at `step == warmup`, then decays as
/// `step^-0.5`. Step numbering starts at 1.
pub fn lr_schedule(step: u64, warmup: u64, coefficient: f64) -> Result<f64> {
    if step == 0 {
        return Err(Error::InvalidArgument(
            "learning-rate schedule is undefined at step 0".into(),
        ));
    }
    if warmup == 0 {
        return Err(Error::InvalidArgument("warmup must be at least 1".into()));
    }
    let s = step as f64;
    let w = warmup as f64;
    let decay = 1.0 / s.sqrt();
    let ramp = s / (w * w.sqrt());
    Ok(coefficient * decay.min(ramp))
}
