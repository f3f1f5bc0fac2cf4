//! Weighted judge scores.

use crate::error::{Error, Result};

/// Weights for edit alignment, motion quality, structural preservation and
/// visual quality.
pub const VLM_WEIGHTS: [f64; 4] = [0.35, 0.25, 0.20, 0.20];
/// Weights for align, motion, natural, preserve, visual and local.
pub const MODALITY_WEIGHTS: [f64; 6] = [0.25, 0.25, 0.20, 0.15, 0.10, 0.05];

fn check_range(name: &str, v: f64) -> Result<()> {
    if !(0.0..=10.0).contains(&v) {
        return Err(Error::OutOfRange(format!("{name} = {v} outside [0, 10]")));
    }
    Ok(())
}

fn weighted(names: &[&str], weights: &[f64], values: &[f64]) -> Result<f64> {
    for (n, &v) in names.iter().zip(values) {
        check_range(n, v)?;
    }
    Ok(weights.iter().zip(values).map(|(w, v)| w * v).sum())
}

pub fn vlm_score(ea: f64, mq: f64, sp: f64, vq: f64) -> Result<f64> {
    weighted(&["EA", "MQ", "SP", "VQ"], &VLM_WEIGHTS, &[ea, mq, sp, vq])
}

pub fn modality_score(sub: [f64; 6]) -> Result<f64> {
    weighted(
        &["align", "motion", "natural", "preserve", "visual", "local"],
        &MODALITY_WEIGHTS,
        &sub,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalScores {
    pub ea: f64,
    pub mq: f64,
    pub sp: f64,
    pub vq: f64,
    /// align, motion, natural, preserve, visual, local.
    pub modality: Option<[f64; 6]>,
    pub s_vlm: f64,
    pub s_overall: Option<f64>,
}

impl EvalScores {
    pub fn new(ea: f64, mq: f64, sp: f64, vq: f64, modality: Option<[f64; 6]>) -> Result<Self> {
        let s_vlm = vlm_score(ea, mq, sp, vq)?;
        let s_overall = modality.map(modality_score).transpose()?;
        Ok(Self {
            ea,
            mq,
            sp,
            vq,
            modality,
            s_vlm,
            s_overall,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_one() {
        assert!((VLM_WEIGHTS.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((MODALITY_WEIGHTS.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reported_rows() {
        assert!((vlm_score(7.42, 6.48, 7.49, 7.23).unwrap() - 7.16).abs() < 0.01);
        assert!((vlm_score(2.46, 2.17, 7.35, 6.67).unwrap() - 4.21).abs() < 0.01);
        assert!((vlm_score(10.0, 10.0, 10.0, 10.0).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn modality_examples() {
        assert!((modality_score([8.0, 6.0, 7.0, 9.0, 7.0, 10.0]).unwrap() - 7.45).abs() < 1e-9);
        assert_eq!(modality_score([0.0; 6]).unwrap(), 0.0);
        assert!((modality_score([10.0; 6]).unwrap() - 10.0).abs() < 1e-12);
        assert!(modality_score([11.0, 0.0, 0.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn eval_scores_compose() {
        let s = EvalScores::new(5.0, 5.0, 5.0, 5.0, Some([5.0; 6])).unwrap();
        assert!((s.s_vlm - 5.0).abs() < 1e-12);
        assert!((s.s_overall.unwrap() - 5.0).abs() < 1e-12);
        assert!(EvalScores::new(-1.0, 5.0, 5.0, 5.0, None).is_err());
    }
}
