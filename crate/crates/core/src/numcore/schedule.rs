use crate::error::{Error, Result};

/// Cosine decay from `lr0` at step 0 to exactly zero at `total_steps`.
pub fn cosine_lr(step: usize, total_steps: usize, lr0: f64) -> Result<f64> {
    if total_steps == 0 || step > total_steps {
        return Err(Error::Precondition(format!(
            "cosine_lr needs 0 <= step <= total_steps, total_steps >= 1 (got {step}/{total_steps})"
        )));
    }
    if step == total_steps {
        return Ok(0.0);
    }
    let progress = step as f64 / total_steps as f64;
    Ok(lr0 * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_midpoint() {
        assert_eq!(cosine_lr(0, 30, 5e-3).unwrap(), 5e-3);
        assert_eq!(cosine_lr(30, 30, 5e-3).unwrap(), 0.0);
        assert!((cosine_lr(15, 30, 5e-3).unwrap() - 2.5e-3).abs() < 1e-15);
    }

    #[test]
    fn non_increasing() {
        let lrs: Vec<f64> = (0..=30).map(|s| cosine_lr(s, 30, 5e-3).unwrap()).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn out_of_range_step() {
        assert!(cosine_lr(31, 30, 1.0).is_err());
        assert!(cosine_lr(0, 0, 1.0).is_err());
    }
}
