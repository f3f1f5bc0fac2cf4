use super::array::RealArray;
use crate::error::{Error, Result};

/// Central finite-difference gradient of `loss_fn` at `leaves`.
///
/// Each coordinate is perturbed by `±h` in turn, so the cost is two
/// evaluations per scalar entry across all leaves.
pub fn finite_diff_grad<F>(loss_fn: F, leaves: &[RealArray], h: f64) -> Result<Vec<RealArray>>
where
    F: Fn(&[RealArray]) -> Result<f64>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Precondition(format!("step h must be positive, got {h}")));
    }
    let mut point: Vec<RealArray> = leaves.to_vec();
    let mut out = Vec::with_capacity(leaves.len());
    for li in 0..leaves.len() {
        let mut g = RealArray::zeros(leaves[li].shape());
        for j in 0..leaves[li].len() {
            let x = leaves[li].data()[j];
            point[li].data_mut()[j] = x + h;
            let up = loss_fn(&point)?;
            point[li].data_mut()[j] = x - h;
            let down = loss_fn(&point)?;
            point[li].data_mut()[j] = x;
            g.data_mut()[j] = (up - down) / (2.0 * h);
        }
        out.push(g);
    }
    Ok(out)
}
