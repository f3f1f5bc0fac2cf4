//! Frozen, seeded, differentiable stand-in for a retake video editor.
//!
//! The generator keeps the first `K` source frames and regenerates the rest
//! by integrating a latent canvas `z` (one row per frame, one column per pixel
//! value) over `S` refinement steps:
//!
//! ```text
//! cond   = [B · Pa(α) , B · Pv(v_p + Δv)]          (T x 2·DC)
//! z_{s+1} = z_s + h · tanh(-γ_s · z_s + cond · U_s + b_s)
//! frames = sigmoid(z_S)
//! ```
//!
//! `B` is a bank of eight cosine temporal bases evaluated at each frame, so
//! both conditioning paths act through temporally structured signals. `Pa`
//! and `Pv` are bilinear projections `L · X · R`. The step size is `h = 3/S`.
//!
//! During differentiation only the last `k_grad` steps see the live
//! conditioning; earlier steps use a detached copy, which leaves forward
//! values bit-identical while zeroing their gradient contribution.

use crate::error::{Error, Result};
use crate::media::{ClipDims, EditTask, VideoClip};
use crate::numcore::{RealArray, Tape, Var};
use crate::rng::{derive_seed, SplitMix64};

/// Number of temporal basis functions.
pub const BASIS_SIZE: usize = 8;
/// Channels per conditioning path after projection.
pub const COND_CHANNELS: usize = 8;
/// Total integration time of the refinement steps.
const HORIZON: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeneratorDims {
    pub clip: ClipDims,
    pub audio_rows: usize,
    pub audio_cols: usize,
    pub text_rows: usize,
    pub text_cols: usize,
}

impl GeneratorDims {
    /// Default desk-scale dimensions.
    pub fn desk() -> Self {
        Self {
            clip: ClipDims::new(17, 16, 16, 3),
            audio_rows: 8,
            audio_cols: 16,
            text_rows: 8,
            text_cols: 16,
        }
    }

    /// Smallest dimensions used for finite-difference checks.
    pub fn tiny() -> Self {
        Self {
            clip: ClipDims::new(9, 8, 8, 3),
            audio_rows: 4,
            audio_cols: 6,
            text_rows: 4,
            text_cols: 6,
        }
    }

    pub fn audio_shape(&self) -> [usize; 2] {
        [self.audio_rows, self.audio_cols]
    }

    pub fn text_shape(&self) -> [usize; 2] {
        [self.text_rows, self.text_cols]
    }

    pub fn validate(&self) -> Result<()> {
        self.clip.validate()?;
        if [self.audio_rows, self.audio_cols, self.text_rows, self.text_cols].contains(&0) {
            return Err(Error::Precondition("latent dimensions must be positive".into()));
        }
        Ok(())
    }
}

impl Default for GeneratorDims {
    fn default() -> Self {
        Self::desk()
    }
}

/// The learnable audio latent α (or its encoded initial value α0).
#[derive(Debug, Clone, PartialEq)]
pub struct AudioLatent(RealArray);

impl AudioLatent {
    pub fn new(values: RealArray) -> Result<Self> {
        if values.ndim() != 2 {
            return Err(Error::InvalidShape {
                shape: values.shape().to_vec(),
                reason: "audio latent must be (L_a, D_a)".into(),
            });
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &RealArray {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut RealArray {
        &mut self.0
    }

    pub fn into_inner(self) -> RealArray {
        self.0
    }
}

/// Frozen prompt representation `v_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct TextContext {
    values: RealArray,
    frozen: bool,
}

impl TextContext {
    pub fn new(values: RealArray) -> Self {
        Self { values, frozen: false }
    }

    pub fn frozen(values: RealArray) -> Self {
        Self { values, frozen: true }
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn values(&self) -> &RealArray {
        &self.values
    }

    /// Mutable access; fails on a frozen context.
    pub fn values_mut(&mut self) -> Result<&mut RealArray> {
        if self.frozen {
            return Err(Error::Frozen);
        }
        Ok(&mut self.values)
    }
}

/// Conditioning state `c = (α, v_p + Δv)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningState {
    pub alpha: AudioLatent,
    pub prompt: TextContext,
    pub residual: RealArray,
}

impl ConditioningState {
    /// `(α0, v_p, Δv = 0)`.
    pub fn initial(alpha0: AudioLatent, prompt: TextContext) -> Self {
        let residual = RealArray::zeros(prompt.values().shape());
        Self {
            alpha: alpha0,
            prompt,
            residual,
        }
    }

    pub fn new(alpha: AudioLatent, prompt: TextContext, residual: RealArray) -> Result<Self> {
        residual.check_shape("residual text conditioning", prompt.values().shape())?;
        Ok(Self {
            alpha,
            prompt,
            residual,
        })
    }

    /// `ṽ_p = v_p + Δv`.
    pub fn effective_context(&self) -> RealArray {
        self.prompt.values().zip_map(&self.residual, |a, b| a + b)
    }
}

/// How `α0` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AudioSource {
    /// Encode the clip's own audio, represented by its seed.
    AudioSeed(u64),
    /// No usable source audio: derive the latent from the video frames.
    FromVideo,
}

impl AudioSource {
    pub fn for_task(task: &EditTask) -> Self {
        task.audio_seed.map_or(AudioSource::FromVideo, AudioSource::AudioSeed)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct StepMap {
    decay: f64,
    cond: RealArray,
    bias: RealArray,
}

/// Seeded generator with immutable weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenGenerator {
    seed: u64,
    dims: GeneratorDims,
    steps: Vec<StepMap>,
    basis: RealArray,
    audio_left: RealArray,
    audio_right: RealArray,
    text_left: RealArray,
    text_right: RealArray,
    canvas_noise: RealArray,
    video_encoder: RealArray,
    video_encoder_bias: RealArray,
}

fn normal_array(rng: &mut SplitMix64, shape: &[usize], scale: f64) -> RealArray {
    RealArray::from_fn(shape, |_| scale * rng.normal())
}

/// Cosine bank `B[t, k] = cos(π k t / (T - 1))`.
pub fn temporal_basis(frames: usize) -> RealArray {
    let denom = (frames.max(2) - 1) as f64;
    RealArray::from_fn(&[frames, BASIS_SIZE], |i| {
        let (t, k) = (i / BASIS_SIZE, i % BASIS_SIZE);
        (std::f64::consts::PI * k as f64 * t as f64 / denom).cos()
    })
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(0.02, 0.98);
    (p / (1.0 - p)).ln()
}

impl FrozenGenerator {
    pub fn new(seed: u64, dims: GeneratorDims, steps: usize) -> Result<Self> {
        dims.validate()?;
        if steps < 1 {
            return Err(Error::Precondition("generator needs at least one refinement step".into()));
        }
        let pixels = dims.clip.frame_len();
        let frames = dims.clip.frames;
        let mut rng = SplitMix64::for_domain(seed, "generator-weights");

        let audio_left = normal_array(&mut rng, &[BASIS_SIZE, dims.audio_rows], (dims.audio_rows as f64).powf(-0.5));
        let audio_right = normal_array(&mut rng, &[dims.audio_cols, COND_CHANNELS], (dims.audio_cols as f64).powf(-0.5));
        let text_left = normal_array(&mut rng, &[BASIS_SIZE, dims.text_rows], (dims.text_rows as f64).powf(-0.5));
        let text_right = normal_array(&mut rng, &[dims.text_cols, COND_CHANNELS], (dims.text_cols as f64).powf(-0.5));

        // A shared conditioning map plus a per-step perturbation keeps the
        // steps coherent while still giving each its own weights.
        let cond_scale = (2.0 * COND_CHANNELS as f64).powf(-0.5);
        let shared = normal_array(&mut rng, &[2 * COND_CHANNELS, pixels], cond_scale);
        let shared_bias = normal_array(&mut rng, &[1, pixels], 0.3);
        let steps = (0..steps)
            .map(|_| {
                let decay = rng.uniform(0.6, 1.4);
                let perturb = normal_array(&mut rng, &[2 * COND_CHANNELS, pixels], 0.3 * cond_scale);
                let bias_perturb = normal_array(&mut rng, &[1, pixels], 0.05);
                StepMap {
                    decay,
                    cond: shared.zip_map(&perturb, |a, b| a + b),
                    bias: shared_bias.zip_map(&bias_perturb, |a, b| a + b),
                }
            })
            .collect();

        let canvas_noise = normal_array(&mut rng, &[frames, pixels], 1.0);
        let enc_in = frames * dims.clip.channels;
        let enc_out = dims.audio_rows * dims.audio_cols;
        let video_encoder = normal_array(&mut rng, &[enc_out, enc_in], 2.0 * (enc_in as f64).powf(-0.5));
        let video_encoder_bias = normal_array(&mut rng, &[enc_out, 1], 0.5);

        Ok(Self {
            seed,
            dims,
            steps,
            basis: temporal_basis(frames),
            audio_left,
            audio_right,
            text_left,
            text_right,
            canvas_noise,
            video_encoder,
            video_encoder_bias,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dims(&self) -> GeneratorDims {
        self.dims
    }

    pub fn step_count(&self) -> usize {
        self.steps.len()
    }

    /// Every weight, flattened in a fixed order (for determinism checks).
    pub fn weights(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for a in [
            &self.audio_left,
            &self.audio_right,
            &self.text_left,
            &self.text_right,
            &self.canvas_noise,
            &self.video_encoder,
            &self.video_encoder_bias,
        ] {
            out.extend_from_slice(a.data());
        }
        for s in &self.steps {
            out.push(s.decay);
            out.extend_from_slice(s.cond.data());
            out.extend_from_slice(s.bias.data());
        }
        out
    }

    /// Copy whose conditioning maps are zero on the given steps.
    #[doc(hidden)]
    pub fn with_conditioning_zeroed(&self, steps: std::ops::Range<usize>) -> Self {
        let mut g = self.clone();
        for s in steps {
            g.steps[s].cond = RealArray::zeros(g.steps[s].cond.shape());
        }
        g
    }

    fn check_task(&self, task: &EditTask) -> Result<()> {
        let d = task.source.dims();
        if d != self.dims.clip {
            return Err(Error::ShapeMismatch {
                context: "source clip vs generator",
                expected: self.dims.clip.shape().to_vec(),
                actual: d.shape().to_vec(),
            });
        }
        if task.preserved < 1 || task.preserved >= d.frames {
            return Err(Error::Precondition(format!(
                "preserved frames K = {} must satisfy 1 <= K < T = {}",
                task.preserved, d.frames
            )));
        }
        Ok(())
    }

    /// Source-audio or silent-input encoding of `α0`.
    pub fn encode_audio(&self, clip: &VideoClip, source: AudioSource) -> Result<AudioLatent> {
        let shape = self.dims.audio_shape();
        match source {
            AudioSource::AudioSeed(seed) => {
                let mut rng = SplitMix64::new(derive_seed(self.seed, "audio-encoder", seed));
                AudioLatent::new(normal_array(&mut rng, &shape, 0.5))
            }
            AudioSource::FromVideo => {
                let d = clip.dims();
                if d.frames != self.dims.clip.frames || d.channels != self.dims.clip.channels {
                    return Err(Error::ShapeMismatch {
                        context: "video audio-encoder input",
                        expected: vec![self.dims.clip.frames, self.dims.clip.channels],
                        actual: vec![d.frames, d.channels],
                    });
                }
                let (c, per) = (d.channels, d.height * d.width);
                let mut means = vec![0.0; d.frames * c];
                for t in 0..d.frames {
                    for (i, v) in clip.frame(t).iter().enumerate() {
                        means[t * c + i % c] += v;
                    }
                }
                for m in &mut means {
                    *m /= per as f64;
                }
                let input = RealArray::from_parts(vec![d.frames * c, 1], means);
                let projected = self.video_encoder.matmul(&input);
                let values = projected.zip_map(&self.video_encoder_bias, |a, b| a + b);
                AudioLatent::new(values.reshape(&shape)?)
            }
        }
    }

    /// `α0` for a task, choosing the encoding from its audio availability.
    pub fn initial_alpha(&self, task: &EditTask) -> Result<AudioLatent> {
        self.encode_audio(&task.source, AudioSource::for_task(task))
    }

    /// Frozen prompt context `v_p` for a prompt id.
    pub fn encode_text(&self, prompt_id: u64) -> TextContext {
        let mut rng = SplitMix64::new(derive_seed(self.seed, "text-encoder", prompt_id));
        TextContext::frozen(normal_array(&mut rng, &self.dims.text_shape(), 0.5))
    }

    /// `(α0, v_p, 0)` for a task.
    pub fn initial_state(&self, task: &EditTask) -> Result<ConditioningState> {
        Ok(ConditioningState::initial(
            self.initial_alpha(task)?,
            self.encode_text(task.prompt_id),
        ))
    }

    fn canvas_init(&self, task: &EditTask) -> RealArray {
        let d = self.dims.clip;
        let p = d.frame_len();
        let anchor = task.source.frame(task.preserved - 1);
        let denom = (d.frames - 1) as f64;
        RealArray::from_fn(&[d.frames, p], |i| {
            let (t, j) = (i / p, i % p);
            let ramp = t as f64 / denom;
            (1.0 - 0.5 * ramp) * logit(anchor[j]) + 0.5 * ramp * self.canvas_noise.data()[i]
        })
    }

    fn project<'t>(&self, tape: &'t Tape, x: Var<'t>, left: &RealArray, right: &RealArray) -> Var<'t> {
        let coeffs = tape
            .constant(left.clone())
            .matmul(x)
            .matmul(tape.constant(right.clone()));
        tape.constant(self.basis.clone()).matmul(coeffs)
    }

    /// Differentiable generation. `alpha` has shape (L_a, D_a) and
    /// `context` is the effective text context `ṽ_p` of shape (L_t, D_t).
    /// Returns a (T, H, W, C) variable whose first `K` frames are the source.
    pub fn generate<'t>(
        &self,
        tape: &'t Tape,
        task: &EditTask,
        alpha: Var<'t>,
        context: Var<'t>,
        k_grad: usize,
    ) -> Result<Var<'t>> {
        self.check_task(task)?;
        let s_total = self.steps.len();
        if k_grad < 1 || k_grad > s_total {
            return Err(Error::Precondition(format!(
                "k_grad = {k_grad} must lie in [1, {s_total}]"
            )));
        }
        let a_shape = alpha.shape();
        if a_shape != self.dims.audio_shape() {
            return Err(Error::ShapeMismatch {
                context: "audio latent vs generator",
                expected: self.dims.audio_shape().to_vec(),
                actual: a_shape,
            });
        }
        let c_shape = context.shape();
        if c_shape != self.dims.text_shape() {
            return Err(Error::ShapeMismatch {
                context: "text context vs generator",
                expected: self.dims.text_shape().to_vec(),
                actual: c_shape,
            });
        }

        let d = self.dims.clip;
        let (frames, pixels) = (d.frames, d.frame_len());
        let audio = self.project(tape, alpha, &self.audio_left, &self.audio_right);
        let text = self.project(tape, context, &self.text_left, &self.text_right);
        let live = tape.concat(&[audio, text], 1);
        let frozen = live.detach();

        let h = HORIZON / s_total as f64;
        let mut z = tape.constant(self.canvas_init(task));
        for (s, step) in self.steps.iter().enumerate() {
            let cond = if s + k_grad >= s_total { live } else { frozen };
            let bias = tape.constant(step.bias.clone()).broadcast_to(&[frames, pixels]);
            let pre = z.scale(-step.decay) + cond.matmul(tape.constant(step.cond.clone())) + bias;
            z = z + pre.tanh().scale(h);
        }

        let k = task.preserved;
        let source = task
            .source
            .frames()
            .reshape(&[frames, pixels])
            .expect("clip dims checked");
        let prefix = tape.constant(source).slice(0, 0, k);
        let suffix = z.sigmoid().slice(0, k, frames);
        Ok(tape.concat(&[prefix, suffix], 0).reshape(&d.shape()))
    }

    /// Forward-only render through the same code path as [`Self::generate`].
    pub fn render(&self, task: &EditTask, state: &ConditioningState) -> Result<VideoClip> {
        let tape = Tape::new();
        let alpha = tape.constant(state.alpha.values().clone());
        let context = tape.constant(state.effective_context());
        let out = self.generate(&tape, task, alpha, context, self.steps.len())?;
        VideoClip::new(RealArray::clone(&out.value()), task.source.fps())
    }

    /// Prompt-only baseline `G(x; α0, v_p)`.
    pub fn baseline_edit(&self, task: &EditTask) -> Result<VideoClip> {
        self.render(task, &self.initial_state(task)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::grad;

    fn tiny_task(seed: u64) -> EditTask {
        let d = GeneratorDims::tiny().clip;
        let mut rng = SplitMix64::new(seed);
        let clip = VideoClip::new(RealArray::from_fn(&d.shape(), |_| rng.next_f64()), 25.0).unwrap();
        EditTask::new("tiny", clip, 3, 2).unwrap().with_audio_seed(seed)
    }

    fn tiny_gen(seed: u64) -> FrozenGenerator {
        FrozenGenerator::new(seed, GeneratorDims::tiny(), 12).unwrap()
    }

    #[test]
    fn weights_are_deterministic_per_seed() {
        assert_eq!(tiny_gen(1).weights(), tiny_gen(1).weights());
        assert_ne!(tiny_gen(1).weights(), tiny_gen(2).weights());
        let g = FrozenGenerator::new(0, GeneratorDims::desk(), 30).unwrap();
        assert_eq!(g.step_count(), 30);
    }

    #[test]
    fn encoders_are_deterministic() {
        let g = tiny_gen(3);
        let task = tiny_task(4);
        assert_eq!(g.encode_audio(&task.source, AudioSource::FromVideo).unwrap(),
                   g.encode_audio(&task.source, AudioSource::FromVideo).unwrap());
        assert_eq!(g.encode_audio(&task.source, AudioSource::AudioSeed(5)).unwrap(),
                   g.encode_audio(&task.source, AudioSource::AudioSeed(5)).unwrap());
        assert_eq!(g.encode_text(8), g.encode_text(8));
        assert_ne!(g.encode_text(8).values(), g.encode_text(9).values());
    }

    #[test]
    fn zero_clip_encodes_to_bias() {
        let g = tiny_gen(3);
        let d = g.dims().clip;
        let zero = VideoClip::new(RealArray::zeros(&d.shape()), 25.0).unwrap();
        let a = g.encode_audio(&zero, AudioSource::FromVideo).unwrap();
        assert_eq!(a.values().data(), g.video_encoder_bias.data());
    }

    #[test]
    fn frozen_context_rejects_mutation() {
        let mut ctx = tiny_gen(1).encode_text(0);
        assert!(matches!(ctx.values_mut(), Err(Error::Frozen)));
        let mut open = TextContext::new(RealArray::zeros(&[2, 2]));
        assert!(open.values_mut().is_ok());
    }

    #[test]
    fn baseline_preserves_prefix_and_edits_suffix() {
        let g = tiny_gen(5);
        let task = tiny_task(6);
        let base = g.baseline_edit(&task).unwrap();
        assert_eq!(base, g.baseline_edit(&task).unwrap());
        for t in 0..task.preserved {
            assert_eq!(base.frame(t), task.source.frame(t));
        }
        assert!((task.preserved..9).any(|t| base.frame(t) != task.source.frame(t)));
        assert!(base.frames().data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn initial_state_render_equals_baseline() {
        let g = tiny_gen(7);
        let task = tiny_task(8);
        let state = g.initial_state(&task).unwrap();
        assert_eq!(g.render(&task, &state).unwrap(), g.baseline_edit(&task).unwrap());
    }

    #[test]
    fn alpha_perturbation_changes_output() {
        let g = tiny_gen(9);
        let task = tiny_task(10);
        let mut state = g.initial_state(&task).unwrap();
        let base = g.render(&task, &state).unwrap();
        state.alpha.values_mut().data_mut()[0] += 1e-3;
        assert_ne!(g.render(&task, &state).unwrap(), base);
    }

    fn grads_for(g: &FrozenGenerator, task: &EditTask, k_grad: usize) -> (RealArray, Vec<RealArray>) {
        let state = g.initial_state(task).unwrap();
        let tape = Tape::new();
        let alpha = tape.leaf(state.alpha.values().clone());
        let dv = tape.leaf(state.residual.clone());
        let ctx = tape.constant(state.prompt.values().clone()) + dv;
        let out = g.generate(&tape, task, alpha, ctx, k_grad).unwrap();
        let w = tape.constant(RealArray::from_fn(&out.shape(), |i| ((i * 7919) % 13) as f64 / 13.0));
        let loss = (out * w).sum();
        let value = RealArray::clone(&out.value());
        (value, grad(loss, &[alpha, dv]).unwrap())
    }

    #[test]
    fn truncation_changes_gradients_not_outputs() {
        let g = tiny_gen(11);
        let task = tiny_task(12);
        let (full_out, full_g) = grads_for(&g, &task, 12);
        let (short_out, short_g) = grads_for(&g, &task, 1);
        assert_eq!(full_out, short_out);
        assert_ne!(full_g[0], short_g[0]);
    }

    #[test]
    fn early_steps_contribute_exactly_zero() {
        let g = tiny_gen(13).with_conditioning_zeroed(8..12);
        let task = tiny_task(14);
        let (_, gr) = grads_for(&g, &task, 4);
        assert!(gr.iter().all(|a| a.data().iter().all(|&v| v == 0.0)));
        let (_, gr_full) = grads_for(&g, &task, 12);
        assert!(gr_full[0].max_abs() > 0.0);
    }

    #[test]
    fn rejects_bad_k_grad_and_shapes() {
        let g = tiny_gen(1);
        let task = tiny_task(2);
        let state = g.initial_state(&task).unwrap();
        let tape = Tape::new();
        let a = tape.leaf(state.alpha.values().clone());
        let c = tape.leaf(state.residual.clone());
        assert!(g.generate(&tape, &task, a, c, 0).is_err());
        assert!(g.generate(&tape, &task, a, c, 13).is_err());
        let wrong = tape.leaf(RealArray::zeros(&[2, 2]));
        assert!(g.generate(&tape, &task, wrong, c, 1).is_err());
        let other = FrozenGenerator::new(1, GeneratorDims::desk(), 4).unwrap();
        assert!(other.baseline_edit(&task).is_err());
    }
}
