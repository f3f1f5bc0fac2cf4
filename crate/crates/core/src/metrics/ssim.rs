//! Multi-scale SSIM with a uniform 8x8 window.

use crate::error::{Error, Result};
use crate::numcore::RealArray;

pub const SSIM_WINDOW: usize = 8;
const K1: f64 = 0.01;
const K2: f64 = 0.03;
/// Standard per-scale exponents, renormalized over the scales in use.
const SCALE_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

/// Largest scale count satisfying `min(H, W) / 2^(s-1) >= 8`, capped at 5.
pub fn max_ssim_scales(height: usize, width: usize) -> usize {
    let mut s = 0;
    while s < SCALE_WEIGHTS.len() && height.min(width) >> s >= SSIM_WINDOW {
        s += 1;
    }
    s
}

/// One channel of one frame.
struct Plane {
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl Plane {
    fn downsample(&self) -> Plane {
        let (h, w) = (self.h / 2, self.w / 2);
        let d = &self.data;
        let data = (0..h * w)
            .map(|i| {
                let (y, x) = (2 * (i / w), 2 * (i % w));
                0.25 * (d[y * self.w + x] + d[y * self.w + x + 1] + d[(y + 1) * self.w + x] + d[(y + 1) * self.w + x + 1])
            })
            .collect();
        Plane { h, w, data }
    }
}

/// Mean luminance and contrast-structure terms over all valid windows.
fn ssim_terms(a: &Plane, b: &Plane) -> (f64, f64) {
    let c1 = (K1 * 1.0f64).powi(2);
    let c2 = (K2 * 1.0f64).powi(2);
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let (mut lum, mut cs, mut count) = (0.0, 0.0, 0.0);
    for y0 in 0..=a.h - SSIM_WINDOW {
        for x0 in 0..=a.w - SSIM_WINDOW {
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for y in y0..y0 + SSIM_WINDOW {
                for x in x0..x0 + SSIM_WINDOW {
                    let (p, q) = (a.data[y * a.w + x], b.data[y * a.w + x]);
                    sa += p;
                    sb += q;
                    saa += p * p;
                    sbb += q * q;
                    sab += p * q;
                }
            }
            let (ma, mb) = (sa / n, sb / n);
            let va = (saa / n - ma * ma).max(0.0);
            let vb = (sbb / n - mb * mb).max(0.0);
            let cov = sab / n - ma * mb;
            lum += (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
            cs += (2.0 * cov + c2) / (va + vb + c2);
            count += 1.0;
        }
    }
    (lum / count, cs / count)
}

fn ms_ssim_plane(a: Plane, b: Plane, scales: usize) -> f64 {
    let total: f64 = SCALE_WEIGHTS[..scales].iter().sum();
    let (mut a, mut b) = (a, b);
    let mut out = 1.0;
    for s in 0..scales {
        let (lum, cs) = ssim_terms(&a, &b);
        let w = SCALE_WEIGHTS[s] / total;
        if s + 1 == scales {
            out *= (lum * cs).max(0.0).powf(w);
        } else {
            out *= cs.max(0.0).powf(w);
            a = a.downsample();
            b = b.downsample();
        }
    }
    out
}

/// MS-SSIM of two (H, W, C) frames or (N, H, W, C) stacks, averaged over
/// frames and channels.
pub fn ms_ssim(x: &RealArray, y: &RealArray, scales: usize) -> Result<f64> {
    if x.shape() != y.shape() {
        return Err(Error::ShapeMismatch {
            context: "ms-ssim inputs",
            expected: x.shape().to_vec(),
            actual: y.shape().to_vec(),
        });
    }
    let (n, h, w, c) = match *x.shape() {
        [h, w, c] => (1, h, w, c),
        [n, h, w, c] => (n, h, w, c),
        _ => {
            return Err(Error::InvalidShape {
                shape: x.shape().to_vec(),
                reason: "ms-ssim needs (H, W, C) or (N, H, W, C)".into(),
            })
        }
    };
    if scales < 1 || scales > max_ssim_scales(h, w) {
        return Err(Error::Precondition(format!(
            "{h}x{w} frames support at most {} ms-ssim scales with an {SSIM_WINDOW}px window, asked for {scales}",
            max_ssim_scales(h, w)
        )));
    }
    let plane = |src: &RealArray, f: usize, ch: usize| Plane {
        h,
        w,
        data: (0..h * w).map(|i| src.data()[(f * h * w + i) * c + ch]).collect(),
    };
    let mut acc = 0.0;
    for f in 0..n {
        for ch in 0..c {
            acc += ms_ssim_plane(plane(x, f, ch), plane(y, f, ch), scales);
        }
    }
    Ok(acc / (n * c) as f64)
}
