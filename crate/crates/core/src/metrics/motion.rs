//! Frame-level translation and motion-flatness statistics.

use crate::media::VideoClip;

/// Largest integer shift searched along each axis.
pub const MAX_SHIFT: i32 = 4;

/// Mean squared difference between `next` and `prev` moved by `(dx, dy)`
/// with wraparound.
fn shifted_mse(prev: &[f64], next: &[f64], h: usize, w: usize, c: usize, dx: i32, dy: i32) -> f64 {
    let mut acc = 0.0;
    for y in 0..h {
        let sy = (y as i32 - dy).rem_euclid(h as i32) as usize;
        for x in 0..w {
            let sx = (x as i32 - dx).rem_euclid(w as i32) as usize;
            for ch in 0..c {
                let d = next[(y * w + x) * c + ch] - prev[(sy * w + sx) * c + ch];
                acc += d * d;
            }
        }
    }
    acc / (h * w * c) as f64
}

/// Best shift from `prev` to `next` and its residual energy. Ties go to the
/// smaller magnitude, then to the first shift in scan order.
fn best_shift(prev: &[f64], next: &[f64], h: usize, w: usize, c: usize) -> ((i32, i32), f64) {
    let mut best: ((i32, i32), f64) = ((0, 0), shifted_mse(prev, next, h, w, c, 0, 0));
    for dy in -MAX_SHIFT..=MAX_SHIFT {
        for dx in -MAX_SHIFT..=MAX_SHIFT {
            let e = shifted_mse(prev, next, h, w, c, dx, dy);
            let mag = dx * dx + dy * dy;
            let best_mag = best.0 .0.pow(2) + best.0 .1.pow(2);
            if e < best.1 || (e == best.1 && mag < best_mag) {
                best = ((dx, dy), e);
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftReport {
    /// `(dx, dy)` per consecutive pair.
    pub shifts: Vec<(i32, i32)>,
    /// Mean Euclidean shift magnitude.
    pub mean_magnitude: f64,
    /// Residual energy after removing each pair's shift.
    pub residual: Vec<f64>,
}

/// Dominant integer translation between consecutive frames.
pub fn global_drift(clip: &VideoClip) -> DriftReport {
    let d = clip.dims();
    let mut shifts = Vec::with_capacity(d.frames.saturating_sub(1));
    let mut residual = Vec::with_capacity(shifts.capacity());
    for t in 1..d.frames {
        let (s, e) = best_shift(clip.frame(t - 1), clip.frame(t), d.height, d.width, d.channels);
        shifts.push(s);
        residual.push(e);
    }
    let mean_magnitude = if shifts.is_empty() {
        0.0
    } else {
        shifts
            .iter()
            .map(|&(x, y)| ((x * x + y * y) as f64).sqrt())
            .sum::<f64>()
            / shifts.len() as f64
    };
    DriftReport {
        shifts,
        mean_magnitude,
        residual,
    }
}

/// `1 / (1 + CV)` of the residual motion energies; 1 for a static clip.
pub fn motion_flatness(clip: &VideoClip) -> f64 {
    flatness_of(&global_drift(clip).residual)
}

pub fn flatness_of(energy: &[f64]) -> f64 {
    if energy.is_empty() {
        return 1.0;
    }
    let n = energy.len() as f64;
    let mean = energy.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return 1.0;
    }
    let var = energy.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    1.0 / (1.0 + var.sqrt() / mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::ClipDims;
    use crate::numcore::RealArray;
    use crate::rng::SplitMix64;

    fn clip(d: ClipDims, f: impl Fn(usize, usize, usize, usize) -> f64) -> VideoClip {
        let (h, w, c) = (d.height, d.width, d.channels);
        VideoClip::new(
            RealArray::from_fn(&d.shape(), |i| {
                let ch = i % c;
                let x = (i / c) % w;
                let y = (i / (c * w)) % h;
                f(i / (h * w * c), y, x, ch)
            }),
            25.0,
        )
        .unwrap()
    }

    #[test]
    fn static_clip_has_no_drift_and_full_flatness() {
        let c = clip(ClipDims::new(9, 8, 8, 3), |_, y, x, ch| ((y * 3 + x * 5 + ch) % 11) as f64 / 11.0);
        let r = global_drift(&c);
        assert!(r.shifts.iter().all(|&s| s == (0, 0)));
        assert_eq!(r.mean_magnitude, 0.0);
        assert_eq!(motion_flatness(&c), 1.0);
    }

    #[test]
    fn recovers_constructed_shift() {
        let mut rng = SplitMix64::new(8);
        let base: Vec<f64> = (0..16 * 16).map(|_| rng.next_f64()).collect();
        let c = clip(ClipDims::new(9, 16, 16, 1), |t, y, x, _| {
            let sx = (x as i64 - 2 * t as i64).rem_euclid(16) as usize;
            base[y * 16 + sx]
        });
        let r = global_drift(&c);
        assert!(r.shifts.iter().all(|&s| s == (2, 0)), "{:?}", r.shifts);
        assert_eq!(r.mean_magnitude, 2.0);
    }

    #[test]
    fn flatness_conventions() {
        let ramp = clip(ClipDims::new(9, 4, 4, 1), |t, _, _, _| 0.1 * t as f64);
        assert!((motion_flatness(&ramp) - 1.0).abs() < 1e-9);
        let impulse = clip(ClipDims::new(9, 4, 4, 1), |t, _, _, _| if t == 4 { 0.9 } else { 0.1 });
        assert!(motion_flatness(&impulse) < 0.5);
        assert_eq!(flatness_of(&[]), 1.0);
    }
}
