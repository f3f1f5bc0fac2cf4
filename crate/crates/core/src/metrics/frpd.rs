//! Fixed random-feature perceptual distance.
//!
//! A stand-in for LPIPS with the same structure and no pretrained weights.
//! Each scale applies a seeded 3x3 circular convolution followed by `tanh`.
//! Features are normalized per location across channels, and the squared
//! differences are summed over channels and averaged over space. Scale
//! distances are added together, with 2x2 average pooling between scales.

use crate::error::{Error, Result};
use crate::numcore::{RealArray, Tape, Var};
use crate::rng::SplitMix64;

pub const FRPD_SCALES: usize = 3;
pub const FRPD_FEATURES: usize = 8;
const NORM_EPS: f64 = 1e-6;

/// Per-scale (N, H, W) weights; `None` means a plain spatial mean.
pub type SpatialWeights = Option<Vec<RealArray>>;

#[derive(Debug, Clone, PartialEq)]
pub struct Frpd {
    channels: usize,
    kernels: Vec<RealArray>,
}

impl Frpd {
    pub fn new(seed: u64, channels: usize) -> Self {
        let mut rng = SplitMix64::for_domain(seed, "frpd-kernels");
        let mut kernels = Vec::with_capacity(FRPD_SCALES);
        let mut cin = channels;
        for _ in 0..FRPD_SCALES {
            let fan_in = 9 * cin;
            let scale = (2.0 / fan_in as f64).sqrt();
            kernels.push(RealArray::from_fn(&[fan_in, FRPD_FEATURES], |_| scale * rng.normal()));
            cin = FRPD_FEATURES;
        }
        Self { channels, kernels }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Spatial size divisibility required by the pooling chain.
    pub fn check_input(&self, shape: &[usize]) -> Result<()> {
        let div = 1 << (FRPD_SCALES - 1);
        if shape.len() != 4 || shape[3] != self.channels || !shape[1].is_multiple_of(div) || !shape[2].is_multiple_of(div) {
            return Err(Error::InvalidShape {
                shape: shape.to_vec(),
                reason: format!(
                    "frpd needs (N, H, W, {}) with H and W divisible by {div}",
                    self.channels
                ),
            });
        }
        Ok(())
    }

    /// Normalized features at every scale for an (N, H, W, C) input.
    pub fn features<'t>(&self, tape: &'t Tape, x: Var<'t>) -> Result<Vec<Var<'t>>> {
        let shape = x.shape();
        self.check_input(&shape)?;
        let mut out = Vec::with_capacity(FRPD_SCALES);
        let mut h = x;
        for (s, kernel) in self.kernels.iter().enumerate() {
            if s > 0 {
                h = h.pool2();
            }
            let sh = h.shape();
            let (n, hh, ww, c) = (sh[0], sh[1], sh[2], sh[3]);
            let mut taps = Vec::with_capacity(9);
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    taps.push(h.roll(1, dy).roll(2, dx));
                }
            }
            let patches = tape.concat(&taps, 3).reshape(&[n * hh * ww, 9 * c]);
            h = patches
                .matmul(tape.constant(kernel.clone()))
                .tanh()
                .reshape(&[n, hh, ww, FRPD_FEATURES]);
            let norm = h
                .square()
                .sum_axis(3)
                .offset(NORM_EPS)
                .sqrt()
                .reshape(&[n, hh, ww, 1])
                .broadcast_to(&[n, hh, ww, FRPD_FEATURES]);
            out.push(h / norm);
        }
        Ok(out)
    }

    /// Per-item distances (shape (N,)) between two feature pyramids.
    /// `weights` gives per-scale (N, H, W) spatial weights summing to one
    /// per item; without weights the spatial mean is used.
    pub fn distance_per_item<'t>(
        &self,
        tape: &'t Tape,
        fx: &[Var<'t>],
        fy: &[Var<'t>],
        weights: &SpatialWeights,
    ) -> Var<'t> {
        let mut total: Option<Var<'t>> = None;
        for (s, (a, b)) in fx.iter().zip(fy).enumerate() {
            let sh = a.shape();
            let (n, hh, ww) = (sh[0], sh[1], sh[2]);
            let per_loc = (*a - *b).square().sum_axis(3);
            let per_item = match weights {
                Some(w) => (per_loc * tape.constant(w[s].clone())).reshape(&[n, hh * ww]).sum_axis(1),
                None => per_loc.reshape(&[n, hh * ww]).sum_axis(1).scale(1.0 / (hh * ww) as f64),
            };
            total = Some(match total {
                Some(t) => t + per_item,
                None => per_item,
            });
        }
        total.expect("at least one scale")
    }

    /// Mean distance over items, differentiable.
    pub fn distance_var<'t>(&self, tape: &'t Tape, x: Var<'t>, y: Var<'t>) -> Result<Var<'t>> {
        let (xs, ys) = (x.shape(), y.shape());
        if xs != ys {
            return Err(Error::ShapeMismatch {
                context: "frpd inputs",
                expected: xs,
                actual: ys,
            });
        }
        let fx = self.features(tape, x)?;
        let fy = self.features(tape, y)?;
        Ok(self.distance_per_item(tape, &fx, &fy, &None).mean())
    }

    /// Mean distance between two (N, H, W, C) arrays, or two (H, W, C) frames.
    pub fn distance(&self, x: &RealArray, y: &RealArray) -> Result<f64> {
        if x.shape() != y.shape() {
            return Err(Error::ShapeMismatch {
                context: "frpd inputs",
                expected: x.shape().to_vec(),
                actual: y.shape().to_vec(),
            });
        }
        let lift = |a: &RealArray| {
            if a.ndim() == 3 {
                let mut s = vec![1];
                s.extend_from_slice(a.shape());
                a.reshape(&s)
            } else {
                Ok(a.clone())
            }
        };
        let tape = Tape::new();
        let d = self.distance_var(&tape, tape.constant(lift(x)?), tape.constant(lift(y)?))?;
        Ok(d.item())
    }

    /// Distance restricted to a binary (H, W) mask, averaged over items.
    pub fn masked_distance(&self, x: &RealArray, y: &RealArray, mask: &RealArray) -> Result<f64> {
        if x.shape() != y.shape() {
            return Err(Error::ShapeMismatch {
                context: "frpd inputs",
                expected: x.shape().to_vec(),
                actual: y.shape().to_vec(),
            });
        }
        self.check_input(x.shape())?;
        let (n, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        mask.check_shape("frpd mask", &[h, w])?;
        let mut weights = Vec::with_capacity(FRPD_SCALES);
        let mut m = mask.clone();
        for s in 0..FRPD_SCALES {
            if s > 0 {
                m = pool_mask(&m);
            }
            let total = m.sum();
            if total <= 0.0 {
                return Err(Error::Precondition("mask selects no pixels".into()));
            }
            let (mh, mw) = (m.shape()[0], m.shape()[1]);
            let norm = m.map(|v| v / total);
            weights.push(RealArray::from_fn(&[n, mh, mw], |i| norm.data()[i % (mh * mw)]));
        }
        let tape = Tape::new();
        let fx = self.features(&tape, tape.constant(x.clone()))?;
        let fy = self.features(&tape, tape.constant(y.clone()))?;
        Ok(self.distance_per_item(&tape, &fx, &fy, &Some(weights)).mean().item())
    }
}

fn pool_mask(m: &RealArray) -> RealArray {
    let (h, w) = (m.shape()[0], m.shape()[1]);
    let (ho, wo) = (h / 2, w / 2);
    RealArray::from_fn(&[ho, wo], |i| {
        let (y, x) = (2 * (i / wo), 2 * (i % wo));
        let d = m.data();
        0.25 * (d[y * w + x] + d[y * w + x + 1] + d[(y + 1) * w + x] + d[(y + 1) * w + x + 1])
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random(shape: &[usize], seed: u64) -> RealArray {
        let mut rng = SplitMix64::new(seed);
        RealArray::from_fn(shape, |_| rng.next_f64())
    }

    #[test]
    fn identity_symmetry_and_blend_monotonicity() {
        let f = Frpd::new(1, 3);
        let x = random(&[2, 8, 8, 3], 2);
        let y = random(&[2, 8, 8, 3], 3);
        assert_eq!(f.distance(&x, &x).unwrap(), 0.0);
        let (a, b) = (f.distance(&x, &y).unwrap(), f.distance(&y, &x).unwrap());
        assert!(a > 0.0);
        assert!((a - b).abs() < 1e-12);
        let mut prev = 0.0;
        for k in 1..=5 {
            let t = k as f64 / 5.0;
            let z = x.zip_map(&y, |p, q| (1.0 - t) * p + t * q);
            let d = f.distance(&x, &z).unwrap();
            assert!(d > prev, "blend {t}: {d} <= {prev}");
            prev = d;
        }
    }

    #[test]
    fn full_mask_matches_unmasked() {
        let f = Frpd::new(5, 3);
        let x = random(&[3, 8, 8, 3], 6);
        let y = random(&[3, 8, 8, 3], 7);
        let full = RealArray::full(&[8, 8], 1.0);
        let a = f.masked_distance(&x, &y, &full).unwrap();
        assert!((a - f.distance(&x, &y).unwrap()).abs() < 1e-12);
        assert!(f.masked_distance(&x, &y, &RealArray::zeros(&[8, 8])).is_err());
    }

    #[test]
    fn rejects_mismatched_or_indivisible_inputs() {
        let f = Frpd::new(1, 3);
        assert!(f.distance(&random(&[1, 8, 8, 3], 1), &random(&[1, 8, 4, 3], 1)).is_err());
        assert!(f.distance(&random(&[1, 6, 6, 3], 1), &random(&[1, 6, 6, 3], 1)).is_err());
        assert!(f.distance(&random(&[8, 8, 3], 1), &random(&[8, 8, 3], 2)).unwrap() > 0.0);
    }
}
