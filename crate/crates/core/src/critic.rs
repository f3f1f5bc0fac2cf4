//! Frozen binary motion critic, frame-sampling schedules and the edit loss.
//!
//! The critic answers one yes/no question per prompt ("does this video
//! clearly show the requested action?") with a pair of logits. Each frame is
//! mapped to `d_f` features by a fixed random projection. A prompt's
//! [`MotionTemplate`] holds a unit direction `e` in feature space and a
//! temporal pattern `w(τ) = Σ_k c_k cos(π k τ)` over `k = 1..=3`.
//!
//! The temporal variant scores the motion between consecutive sampled
//! frames, weighted by the pattern at each pair's midpoint:
//!
//! ```text
//! s = Σ_i w(τ_i) tanh(g (f_{i+1} - f_i)·e) / Σ_i |w(τ_i)|
//! ℓ_yes = b_yes + A s,   ℓ_no = b_no - A s
//! ```
//!
//! The framewise variant replaces the differences by the frames themselves
//! and the weighted sum by a plain mean, so it only sees appearance.

use crate::error::{Error, Result};
use crate::numcore::{RealArray, Tape, Var};
use crate::rng::{derive_seed, SplitMix64};
use crate::media::VideoClip;

/// Feature width of the critic.
pub const FEATURE_DIM: usize = 16;
/// Pattern coefficients on cosine bases `1..=PATTERN_BASES`.
pub const PATTERN_BASES: usize = 3;
const GAIN: f64 = 8.0;
const AMPLITUDE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CriticVariant {
    #[default]
    Temporal,
    /// Per-frame features only; the supervision ablation.
    Framewise,
}

impl std::str::FromStr for CriticVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "temporal" => Ok(Self::Temporal),
            "framewise" => Ok(Self::Framewise),
            _ => Err(Error::Config {
                key: "variant".into(),
                message: format!("expected `temporal` or `framewise`, got `{s}`"),
            }),
        }
    }
}

impl std::fmt::Display for CriticVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Temporal => "temporal",
            Self::Framewise => "framewise",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplingSchedule {
    #[default]
    Uniform,
    Midpoint,
}

impl std::str::FromStr for SamplingSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "midpoint" => Ok(Self::Midpoint),
            _ => Err(Error::Config {
                key: "schedule".into(),
                message: format!("expected `uniform` or `midpoint`, got `{s}`"),
            }),
        }
    }
}

impl std::fmt::Display for SamplingSchedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Uniform => "uniform",
            Self::Midpoint => "midpoint",
        })
    }
}

impl SamplingSchedule {
    /// Indices for `n` of `frames` frames; midpoint uses σ = (T - 1)/6.
    pub fn indices(self, frames: usize, n: usize) -> Result<Vec<usize>> {
        match self {
            Self::Uniform => sample_uniform(frames, n),
            Self::Midpoint => sample_midpoint(frames, n, (frames.max(2) - 1) as f64 / 6.0),
        }
    }
}

fn check_count(frames: usize, n: usize) -> Result<()> {
    if n < 1 || n > frames {
        return Err(Error::Precondition(format!(
            "cannot sample {n} frames from a {frames}-frame clip"
        )));
    }
    Ok(())
}

/// `round(linspace(0, T-1, n))`; `n = 1` gives `[0]`.
pub fn sample_uniform(frames: usize, n: usize) -> Result<Vec<usize>> {
    check_count(frames, n)?;
    if n == 1 {
        return Ok(vec![0]);
    }
    let span = (frames - 1) as f64;
    let mut out: Vec<usize> = (0..n)
        .map(|i| (i as f64 * span / (n - 1) as f64).round() as usize)
        .collect();
    out.dedup();
    Ok(out)
}

/// Deterministic normal quantiles around the clip midpoint.
///
/// Ties round away from the midpoint, and the upper half mirrors the lower
/// half, so the index set is exactly symmetric whenever `T` is odd.
pub fn sample_midpoint(frames: usize, n: usize, sigma: f64) -> Result<Vec<usize>> {
    check_count(frames, n)?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Precondition(format!("sigma must be positive, got {sigma}")));
    }
    let mu = (frames - 1) as f64 / 2.0;
    let hi = (frames - 1) as f64;
    let mut out: Vec<usize> = (0..n)
        .map(|i| {
            let mirror = n - 1 - i;
            let z = if i <= mirror {
                inv_normal_cdf((i as f64 + 0.5) / n as f64)
            } else {
                -inv_normal_cdf((mirror as f64 + 0.5) / n as f64)
            };
            let offset = sigma * z;
            let x = mu + offset;
            let r = if offset >= 0.0 { (x + 0.5).floor() } else { (x - 0.5).ceil() };
            r.clamp(0.0, hi) as usize
        })
        .collect();
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Standard normal quantile (Acklam's rational approximation, relative
/// error about 1.2e-9). `p` must lie in (0, 1).
pub fn inv_normal_cdf(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383_577_518_672_69e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    const LOW: f64 = 0.02425;
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - LOW {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Binary softmax `exp(ℓ_yes) / (exp(ℓ_yes) + exp(ℓ_no))`.
pub fn p_yes(l_yes: f64, l_no: f64) -> f64 {
    1.0 / (1.0 + (l_no - l_yes).exp())
}

/// `-ln(P_yes + ε)`.
pub fn vlm_loss(p_yes: f64, eps: f64) -> f64 {
    -(p_yes + eps).ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticOutput {
    pub l_yes: f64,
    pub l_no: f64,
    pub p_yes: f64,
}

impl CriticOutput {
    pub fn from_logits(l_yes: f64, l_no: f64) -> Self {
        Self {
            l_yes,
            l_no,
            p_yes: p_yes(l_yes, l_no),
        }
    }
}

/// Per-prompt embedding and temporal pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionTemplate {
    pub prompt_id: u64,
    /// Unit vector in critic feature space.
    pub embedding: RealArray,
    /// Coefficients `c_1..c_3` of the temporal pattern.
    pub pattern: [f64; PATTERN_BASES],
}

impl MotionTemplate {
    /// `w(τ)` at normalized time `τ ∈ [0, 1]`.
    pub fn weight(&self, tau: f64) -> f64 {
        self.pattern
            .iter()
            .enumerate()
            .map(|(k, c)| c * (std::f64::consts::PI * (k + 1) as f64 * tau).cos())
            .sum()
    }

    /// Antiderivative of `w`, zero at `τ = 0`.
    pub fn displacement(&self, tau: f64) -> f64 {
        self.pattern
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let f = std::f64::consts::PI * (k + 1) as f64;
                c * (f * tau).sin() / f
            })
            .sum()
    }

    pub fn question(&self) -> String {
        format!(
            "Does this video clearly show the action or state change requested by prompt {}?",
            self.prompt_id
        )
    }
}

/// Pattern weights at consecutive-pair midpoints of `indices`.
fn pair_weights(template: &MotionTemplate, indices: &[usize], frames: usize) -> Vec<f64> {
    let span = (frames.max(2) - 1) as f64;
    indices
        .windows(2)
        .map(|p| template.weight((p[0] + p[1]) as f64 / 2.0 / span))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionCritic {
    seed: u64,
    frame_len: usize,
    features: RealArray,
    bias: (f64, f64),
}

impl MotionCritic {
    pub fn new(seed: u64, frame_len: usize) -> Result<Self> {
        if frame_len == 0 {
            return Err(Error::Precondition("critic frame length must be positive".into()));
        }
        let mut rng = SplitMix64::for_domain(seed, "critic-weights");
        let scale = (frame_len as f64).powf(-0.5);
        let features = RealArray::from_fn(&[frame_len, FEATURE_DIM], |_| scale * rng.normal());
        let b_yes = rng.uniform(-0.5, 0.5);
        let b_no = b_yes + rng.uniform(0.3, 1.0);
        Ok(Self {
            seed,
            frame_len,
            features,
            bias: (b_yes, b_no),
        })
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    /// `(b_yes, b_no)`.
    pub fn bias(&self) -> (f64, f64) {
        self.bias
    }

    pub fn template(&self, prompt_id: u64) -> MotionTemplate {
        let mut rng = SplitMix64::new(derive_seed(self.seed, "motion-template", prompt_id));
        let raw: Vec<f64> = (0..FEATURE_DIM).map(|_| rng.normal()).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        let embedding = RealArray::from_parts(vec![FEATURE_DIM, 1], raw.iter().map(|v| v / norm).collect());
        let mut pattern = [0.0; PATTERN_BASES];
        for c in &mut pattern {
            *c = rng.normal();
        }
        let pn = pattern.iter().map(|v| v * v).sum::<f64>().sqrt();
        for c in &mut pattern {
            *c /= pn;
        }
        MotionTemplate {
            prompt_id,
            embedding,
            pattern,
        }
    }

    /// Unit pixel-space direction whose motion the template rewards.
    pub fn motion_direction(&self, template: &MotionTemplate) -> Vec<f64> {
        let d = self.features.matmul(&template.embedding);
        let n = d.sum_sq().sqrt();
        d.data().iter().map(|v| v / n).collect()
    }

    /// Scalar projection `(frame · W_f) · e` of every frame of a clip.
    pub fn project_frames(&self, clip: &VideoClip, template: &MotionTemplate) -> Result<Vec<f64>> {
        let d = clip.dims();
        if d.frame_len() != self.frame_len {
            return Err(Error::ShapeMismatch {
                context: "clip frame vs critic",
                expected: vec![self.frame_len],
                actual: vec![d.frame_len()],
            });
        }
        let dir = self.features.matmul(&template.embedding);
        Ok((0..d.frames)
            .map(|t| clip.frame(t).iter().zip(dir.data()).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Differentiable logits for sampled frames `(n, P)` taken at `indices`
    /// of a `total_frames`-frame clip.
    pub fn logits<'t>(
        &self,
        tape: &'t Tape,
        frames: Var<'t>,
        indices: &[usize],
        total_frames: usize,
        template: &MotionTemplate,
        variant: CriticVariant,
    ) -> Result<(Var<'t>, Var<'t>)> {
        let n = indices.len();
        let shape = frames.shape();
        if shape != [n, self.frame_len] {
            return Err(Error::ShapeMismatch {
                context: "sampled frames vs critic",
                expected: vec![n, self.frame_len],
                actual: shape,
            });
        }
        let min = match variant {
            CriticVariant::Temporal => 2,
            CriticVariant::Framewise => 1,
        };
        if n < min {
            return Err(Error::Precondition(format!(
                "{variant} critic needs at least {min} sampled frames, got {n}"
            )));
        }
        let dir = tape.constant(self.features.matmul(&template.embedding));
        let proj = frames.matmul(dir);
        let score = match variant {
            CriticVariant::Temporal => {
                let diff = proj.slice(0, 1, n) - proj.slice(0, 0, n - 1);
                let w = pair_weights(template, indices, total_frames);
                let norm: f64 = w.iter().map(|v| v.abs()).sum();
                if norm == 0.0 {
                    return Err(Error::Precondition("template pattern vanishes at the sampled pairs".into()));
                }
                let w = tape.constant(RealArray::from_parts(vec![n - 1, 1], w));
                (diff.scale(GAIN).tanh() * w).sum().scale(AMPLITUDE / norm)
            }
            CriticVariant::Framewise => proj.scale(GAIN).tanh().mean().scale(AMPLITUDE),
        };
        Ok((score.offset(self.bias.0), (-score).offset(self.bias.1)))
    }

    /// Non-differentiable evaluation on a clip.
    pub fn evaluate(
        &self,
        clip: &VideoClip,
        indices: &[usize],
        template: &MotionTemplate,
        variant: CriticVariant,
    ) -> Result<CriticOutput> {
        let tape = Tape::new();
        let frames = tape.constant(gather_frames(clip.frames(), indices)?);
        let (y, n) = self.logits(&tape, frames, indices, clip.dims().frames, template, variant)?;
        Ok(CriticOutput::from_logits(y.item(), n.item()))
    }

    /// Pearson correlation between the per-pair motion along the template
    /// direction and the template pattern, over pairs starting at `start`.
    /// Zero when either series is constant.
    pub fn pattern_correlation(&self, clip: &VideoClip, template: &MotionTemplate, start: usize) -> Result<f64> {
        let proj = self.project_frames(clip, template)?;
        let t = proj.len();
        if start + 2 >= t {
            return Err(Error::Precondition(format!(
                "pattern correlation needs at least two pairs after frame {start} of {t}"
            )));
        }
        let span = (t - 1) as f64;
        let (motion, weight): (Vec<f64>, Vec<f64>) = (start..t - 1)
            .map(|i| (proj[i + 1] - proj[i], template.weight((i as f64 + 0.5) / span)))
            .unzip();
        Ok(pearson(&motion, &weight))
    }
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Rows `indices` of a clip array viewed as (T, P).
pub fn gather_frames(frames: &RealArray, indices: &[usize]) -> Result<RealArray> {
    let t = frames.shape()[0];
    let p = frames.len() / t.max(1);
    let mut data = Vec::with_capacity(indices.len() * p);
    for &i in indices {
        if i >= t {
            return Err(Error::OutOfRange(format!("frame index {i} outside clip of {t} frames")));
        }
        data.extend_from_slice(&frames.data()[i * p..(i + 1) * p]);
    }
    RealArray::new(vec![indices.len(), p], data)
}

/// Differentiable counterpart of [`gather_frames`] for a (T, ...) clip variable.
pub fn gather_frame_vars<'t>(tape: &'t Tape, clip: Var<'t>, indices: &[usize]) -> Result<Var<'t>> {
    let shape = clip.shape();
    let t = shape[0];
    let p: usize = shape[1..].iter().product();
    if let Some(&bad) = indices.iter().find(|&&i| i >= t) {
        return Err(Error::OutOfRange(format!("frame index {bad} outside clip of {t} frames")));
    }
    let flat = clip.reshape(&[t, p]);
    let rows: Vec<Var<'t>> = indices.iter().map(|&i| flat.slice(0, i, i + 1)).collect();
    Ok(tape.concat(&rows, 0))
}
