//! Background-change distance.

use super::frpd::Frpd;
use super::ssim::{max_ssim_scales, ms_ssim};
use crate::error::{Error, Result};
use crate::media::VideoClip;
use crate::numcore::RealArray;

/// Scale count used for MS-SSIM inside the background distance.
pub const BG_SSIM_SCALES: usize = 3;

/// `0.5 lpips + 0.3 (1 - ms_ssim) + 0.2 l1`.
pub fn bg_combine(lpips: f64, ms_ssim: f64, l1: f64) -> f64 {
    0.5 * lpips + 0.3 * (1.0 - ms_ssim) + 0.2 * l1
}

/// Mask marking every pixel as background.
pub fn all_background_mask(height: usize, width: usize) -> RealArray {
    RealArray::full(&[height, width], 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BgComponents {
    pub lpips: f64,
    pub ms_ssim: f64,
    pub l1: f64,
}

impl BgComponents {
    pub fn combined(&self) -> f64 {
        bg_combine(self.lpips, self.ms_ssim, self.l1)
    }
}

/// Background distance over pixels where `mask` is 1.
///
/// The perceptual and ℓ1 terms are restricted to the mask. MS-SSIM uses
/// windows, so it compares the source with a composite that takes edited
/// pixels on the background and source pixels elsewhere.
pub fn bg_distance(frpd: &Frpd, src: &VideoClip, edit: &VideoClip, mask: &RealArray) -> Result<BgComponents> {
    let d = src.dims();
    if edit.dims() != d {
        return Err(Error::ShapeMismatch {
            context: "background distance inputs",
            expected: d.shape().to_vec(),
            actual: edit.dims().shape().to_vec(),
        });
    }
    mask.check_shape("background mask", &[d.height, d.width])?;
    if mask.data().iter().any(|&m| m != 0.0 && m != 1.0) {
        return Err(Error::Precondition("background mask must be binary".into()));
    }
    let pixels = mask.sum();
    if pixels == 0.0 {
        return Err(Error::Precondition("background mask is empty".into()));
    }
    let lpips = frpd.masked_distance(src.frames(), edit.frames(), mask)?;

    let (hw, c) = (d.height * d.width, d.channels);
    let m_at = |i: usize| mask.data()[(i / c) % hw];
    let composite = RealArray::from_fn(&d.shape(), |i| {
        if m_at(i) == 1.0 {
            edit.frames().data()[i]
        } else {
            src.frames().data()[i]
        }
    });
    let scales = BG_SSIM_SCALES.min(max_ssim_scales(d.height, d.width));
    let ssim = ms_ssim(src.frames(), &composite, scales)?;

    let l1_sum: f64 = src
        .frames()
        .data()
        .iter()
        .zip(edit.frames().data())
        .enumerate()
        .filter(|(i, _)| m_at(*i) == 1.0)
        .map(|(_, (a, b))| (a - b).abs())
        .sum();
    let l1 = l1_sum / (pixels * (d.frames * c) as f64);
    Ok(BgComponents {
        lpips,
        ms_ssim: ssim,
        l1,
    })
}

/// Min-max rescaling to `[0, 10]`; a constant series maps to zeros.
pub fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|v| if hi > lo { 10.0 * (v - lo) / (hi - lo) } else { 0.0 })
        .collect()
}
