//! The regularized test-time objective.
//!
//! ```text
//! L = L_vlm + L_latent + λ_lpips · FRPD(x̂, x̂_base) + λ_temp · max(0, D_temp(x̂) - D_temp(x̂_base))
//! L_vlm    = -ln(P_yes + ε)
//! L_latent = λα ‖α - α0‖² + λv ‖Δv‖²
//! ```

use super::config::TuningConfig;
use crate::critic::{gather_frame_vars, sample_uniform, CriticOutput, MotionCritic, MotionTemplate};
use crate::error::{Error, Result};
use crate::genmodel::{AudioLatent, ConditioningState, FrozenGenerator, GeneratorDims};
use crate::media::{EditTask, VideoClip};
use crate::metrics::Frpd;
use crate::numcore::{grad, RealArray, Tape, Var};
use crate::rng::derive_seed;

/// Frozen generator, critic and perceptual distance sharing one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub seed: u64,
    pub generator: FrozenGenerator,
    pub critic: MotionCritic,
    pub frpd: Frpd,
}

impl Pipeline {
    pub fn new(seed: u64, dims: GeneratorDims, steps: usize) -> Result<Self> {
        Ok(Self {
            seed,
            generator: FrozenGenerator::new(derive_seed(seed, "pipeline", 0), dims, steps)?,
            critic: MotionCritic::new(derive_seed(seed, "pipeline", 1), dims.clip.frame_len())?,
            frpd: Frpd::new(derive_seed(seed, "pipeline", 2), dims.clip.channels),
        })
    }

    /// Desk dimensions with 30 refinement steps.
    pub fn desk(seed: u64) -> Result<Self> {
        Self::new(seed, GeneratorDims::desk(), 30)
    }

    pub fn dims(&self) -> GeneratorDims {
        self.generator.dims()
    }
}

/// Loss terms of one evaluation. `l_lpips` and `l_temp` are unweighted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub iter: usize,
    pub l_vlm: f64,
    pub l_latent: f64,
    pub l_lpips: f64,
    pub l_temp: f64,
    pub total: f64,
    pub p_yes: f64,
}

/// `λα ‖α - α0‖² + λv ‖Δv‖²`.
pub fn latent_reg(alpha: &RealArray, alpha0: &RealArray, dv: &RealArray, lambda_alpha: f64, lambda_v: f64) -> Result<f64> {
    alpha.check_shape("latent regularizer", alpha0.shape())?;
    let da: f64 = alpha
        .data()
        .iter()
        .zip(alpha0.data())
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    Ok(lambda_alpha * da + lambda_v * dv.sum_sq())
}

/// `max(0, d_edit - d_base)`.
pub fn temporal_hinge(d_edit: f64, d_base: f64) -> f64 {
    (d_edit - d_base).max(0.0)
}

/// Start frames of the consecutive pairs used by the temporal distance.
pub fn pair_starts(frames: usize, n_pairs: Option<usize>) -> Result<Vec<usize>> {
    if frames < 2 {
        return Err(Error::Precondition("temporal distance needs at least two frames".into()));
    }
    match n_pairs {
        None => Ok((0..frames - 1).collect()),
        Some(n) => sample_uniform(frames - 1, n),
    }
}

fn temporal_distance_var<'t>(frpd: &Frpd, tape: &'t Tape, feats: &[Var<'t>], starts: &[usize]) -> Var<'t> {
    let pick = |offset: usize| -> Vec<Var<'t>> {
        feats
            .iter()
            .map(|f| {
                let rows: Vec<Var<'t>> = starts.iter().map(|&s| f.slice(0, s + offset, s + offset + 1)).collect();
                tape.concat(&rows, 0)
            })
            .collect()
    };
    frpd.distance_per_item(tape, &pick(0), &pick(1), &None).mean()
}

/// Mean perceptual distance over sampled consecutive frame pairs.
pub fn temporal_distance(frpd: &Frpd, clip: &VideoClip, n_pairs: Option<usize>) -> Result<f64> {
    let starts = pair_starts(clip.dims().frames, n_pairs)?;
    let tape = Tape::new();
    let feats = frpd.features(&tape, tape.constant(clip.frames().clone()))?;
    Ok(temporal_distance_var(frpd, &tape, &feats, &starts).item())
}

/// `λ_lpips FRPD(x̂, x̂_base) + λ_temp max(0, D_temp(x̂) - D_temp(x̂_base))`.
pub fn preserve_loss(
    frpd: &Frpd,
    edit: &VideoClip,
    base: &VideoClip,
    lambda_lpips: f64,
    lambda_temp: f64,
    n_pairs: Option<usize>,
) -> Result<f64> {
    if edit.dims() != base.dims() {
        return Err(Error::ShapeMismatch {
            context: "preserve loss inputs",
            expected: base.dims().shape().to_vec(),
            actual: edit.dims().shape().to_vec(),
        });
    }
    let lp = frpd.distance(edit.frames(), base.frames())?;
    let hinge = temporal_hinge(
        temporal_distance(frpd, edit, n_pairs)?,
        temporal_distance(frpd, base, n_pairs)?,
    );
    Ok(lambda_lpips * lp + lambda_temp * hinge)
}

/// Result of one objective evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: LossBreakdown,
    pub critic: CriticOutput,
    /// `(∂L/∂α, ∂L/∂Δv)` when requested.
    pub grads: Option<(RealArray, RealArray)>,
    pub clip: VideoClip,
}

/// Objective terms as tape variables.
#[derive(Debug, Clone, Copy)]
pub struct LossGraph<'t> {
    pub clip: Var<'t>,
    pub l_yes: Var<'t>,
    pub l_no: Var<'t>,
    pub p_yes: Var<'t>,
    pub l_vlm: Var<'t>,
    pub l_latent: Var<'t>,
    pub l_lpips: Var<'t>,
    pub l_temp: Var<'t>,
    pub total: Var<'t>,
}

/// Everything fixed for one task: the baseline, its features, the sampled
/// frame indices and the critic template.
#[derive(Debug, Clone)]
pub struct TuningProblem<'p> {
    pub pipeline: &'p Pipeline,
    pub task: EditTask,
    pub config: TuningConfig,
    pub initial: ConditioningState,
    pub baseline: VideoClip,
    pub template: MotionTemplate,
    pub indices: Vec<usize>,
    pair_starts: Vec<usize>,
    base_features: Vec<RealArray>,
    base_temporal: f64,
}

impl<'p> TuningProblem<'p> {
    pub fn new(pipeline: &'p Pipeline, task: &EditTask, config: &TuningConfig) -> Result<Self> {
        config.validate()?;
        let steps = pipeline.generator.step_count();
        if config.k_grad > steps {
            return Err(Error::Config {
                key: "k_grad".into(),
                message: format!("{} exceeds the generator's {steps} refinement steps", config.k_grad),
            });
        }
        let frames = task.source.dims().frames;
        let indices = config.schedule.indices(frames, config.n_frames)?;
        let pair_starts = pair_starts(frames, config.n_pairs)?;
        let initial = pipeline.generator.initial_state(task)?;
        let baseline = pipeline.generator.render(task, &initial)?;
        let tape = Tape::new();
        let feats = pipeline.frpd.features(&tape, tape.constant(baseline.frames().clone()))?;
        let base_temporal = temporal_distance_var(&pipeline.frpd, &tape, &feats, &pair_starts).item();
        let base_features = feats.iter().map(|f| RealArray::clone(&f.value())).collect();
        Ok(Self {
            pipeline,
            task: task.clone(),
            config: config.clone(),
            initial,
            baseline,
            template: pipeline.critic.template(task.prompt_id),
            indices,
            pair_starts,
            base_features,
            base_temporal,
        })
    }

    /// `D_temp` of the baseline render.
    pub fn baseline_temporal(&self) -> f64 {
        self.base_temporal
    }

    /// State with the given controls and this task's frozen prompt.
    pub fn state(&self, alpha: RealArray, residual: RealArray) -> Result<ConditioningState> {
        ConditioningState::new(AudioLatent::new(alpha)?, self.initial.prompt.clone(), residual)
    }

    /// Builds the objective on `tape` for leaves `alpha` and `dv`.
    pub fn graph<'t>(&self, tape: &'t Tape, alpha: Var<'t>, dv: Var<'t>) -> Result<LossGraph<'t>> {
        let c = &self.config;
        let p = self.pipeline;
        let ctx = tape.constant(self.initial.prompt.values().clone()) + dv;
        let frames = self.task.source.dims().frames;
        let x = p.generator.generate(tape, &self.task, alpha, ctx, c.k_grad)?;

        let sampled = gather_frame_vars(tape, x, &self.indices)?;
        let (l_yes, l_no) = p.critic.logits(tape, sampled, &self.indices, frames, &self.template, c.variant)?;
        let p_yes = (l_yes - l_no).sigmoid();
        let l_vlm = -(p_yes.offset(c.eps).ln());

        let alpha0 = tape.constant(self.initial.alpha.values().clone());
        let l_latent = (alpha - alpha0).square().sum().scale(c.lambda_alpha) + dv.square().sum().scale(c.lambda_v);

        let fx = p.frpd.features(tape, x)?;
        let fb: Vec<Var> = self.base_features.iter().map(|f| tape.constant(f.clone())).collect();
        let l_lpips = p.frpd.distance_per_item(tape, &fx, &fb, &None).mean();
        let d_temp = temporal_distance_var(&p.frpd, tape, &fx, &self.pair_starts);
        let l_temp = d_temp.offset(-self.base_temporal).max_const(0.0);

        let total = l_vlm + l_latent + l_lpips.scale(c.lambda_lpips) + l_temp.scale(c.lambda_temp);
        Ok(LossGraph {
            clip: x,
            l_yes,
            l_no,
            p_yes,
            l_vlm,
            l_latent,
            l_lpips,
            l_temp,
            total,
        })
    }

    /// Total objective as a tape variable.
    pub fn loss_on_tape<'t>(&self, tape: &'t Tape, alpha: Var<'t>, dv: Var<'t>) -> Result<Var<'t>> {
        Ok(self.graph(tape, alpha, dv)?.total)
    }

    /// Evaluates the full objective at `state`; one critic call.
    pub fn evaluate(&self, state: &ConditioningState, with_grad: bool) -> Result<Evaluation> {
        state.residual.check_shape("residual text conditioning", self.initial.residual.shape())?;
        let tape = Tape::new();
        let alpha = tape.leaf(state.alpha.values().clone());
        let dv = tape.leaf(state.residual.clone());
        let g = self.graph(&tape, alpha, dv)?;
        if let Some(prim) = tape.fault() {
            return Err(Error::NonFinite { primitive: prim });
        }
        let loss = LossBreakdown {
            iter: 0,
            l_vlm: g.l_vlm.item(),
            l_latent: g.l_latent.item(),
            l_lpips: g.l_lpips.item(),
            l_temp: g.l_temp.item(),
            total: g.total.item(),
            p_yes: g.p_yes.item(),
        };
        if !loss.total.is_finite() {
            return Err(Error::NonFinite {
                primitive: "total objective".into(),
            });
        }
        let grads = if with_grad {
            let gr = grad(g.total, &[alpha, dv])?;
            if let Some(prim) = tape.fault() {
                return Err(Error::NonFinite { primitive: prim });
            }
            let mut it = gr.into_iter();
            Some((it.next().unwrap(), it.next().unwrap()))
        } else {
            None
        };
        let clip = VideoClip::new(RealArray::clone(&g.clip.value()), self.task.source.fps())?;
        Ok(Evaluation {
            loss,
            critic: CriticOutput::from_logits(g.l_yes.item(), g.l_no.item()),
            grads,
            clip,
        })
    }

    /// Scalar objective on raw `(α, Δv)` arrays, for finite differences.
    pub fn total_at(&self, alpha: &RealArray, residual: &RealArray) -> Result<f64> {
        let state = self.state(alpha.clone(), residual.clone())?;
        Ok(self.evaluate(&state, false)?.loss.total)
    }
}

