//! Adam loop with early stopping, best-checkpoint selection and transfer.

use super::config::TuningConfig;
use super::loss::{LossBreakdown, Pipeline, TuningProblem};
use crate::error::Result;
use crate::genmodel::ConditioningState;
use crate::media::{EditTask, VideoClip};
use crate::numcore::{cosine_lr, AdamState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// The iteration (or critic-call) budget ran out.
    Budget,
    /// `patience` iterations passed without improving the best total.
    Patience,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Budget => "budget",
            Self::Patience => "patience",
        })
    }
}

/// One trace row: the loss terms and the learning rate used after them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub loss: LossBreakdown,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub task: String,
    pub initial: ConditioningState,
    /// Best state `Φ* = (α*, Δv*)`.
    pub best: ConditioningState,
    /// Loss at `best`; `None` when nothing was evaluated.
    pub best_loss: Option<LossBreakdown>,
    pub trace: Vec<TraceRow>,
    /// Re-render from `best`.
    pub final_clip: VideoClip,
    pub baseline: VideoClip,
    pub stop: StopReason,
    pub critic_calls: usize,
    /// Critic `P_yes` at the baseline and at `best`.
    pub p_yes_baseline: f64,
    pub p_yes_best: f64,
}

impl TuneResult {
    pub fn initial_total(&self) -> Option<f64> {
        self.trace.first().map(|r| r.loss.total)
    }
}

/// Running best with earliest-wins ties.
#[derive(Debug)]
pub(crate) struct BestTracker {
    pub state: ConditioningState,
    pub loss: Option<LossBreakdown>,
    pub stale: usize,
}

impl BestTracker {
    pub fn new(state: ConditioningState) -> Self {
        Self {
            state,
            loss: None,
            stale: 0,
        }
    }

    /// Returns true when `loss` strictly improves the best total.
    pub fn offer(&mut self, state: &ConditioningState, loss: LossBreakdown) -> bool {
        if self.loss.is_none_or(|b| loss.total < b.total) {
            self.state = state.clone();
            self.loss = Some(loss);
            self.stale = 0;
            true
        } else {
            self.stale += 1;
            false
        }
    }
}

/// Gradient-based test-time tuning of `(α, Δv)` for one task.
pub fn tune(pipeline: &Pipeline, task: &EditTask, config: &TuningConfig) -> Result<TuneResult> {
    let problem = TuningProblem::new(pipeline, task, config)?;
    tune_problem(&problem)
}

pub fn tune_problem(problem: &TuningProblem<'_>) -> Result<TuneResult> {
    let config = &problem.config;
    let mut params = [
        problem.initial.alpha.values().clone(),
        problem.initial.residual.clone(),
    ];
    let mut adam = AdamState::new(&params);
    let mut best = BestTracker::new(problem.initial.clone());
    let mut trace = Vec::with_capacity(config.max_iters);
    let mut stop = StopReason::Budget;
    let mut p_yes_baseline = None;
    let mut p_yes_best = None;

    for it in 0..config.max_iters {
        let state = problem.state(params[0].clone(), params[1].clone())?;
        let eval = problem.evaluate(&state, true)?;
        let loss = LossBreakdown { iter: it, ..eval.loss };
        let lr = cosine_lr(it, config.max_iters, config.lr0)?;
        trace.push(TraceRow { loss, lr });
        if it == 0 {
            p_yes_baseline = Some(eval.critic.p_yes);
        }
        if best.offer(&state, loss) {
            p_yes_best = Some(eval.critic.p_yes);
        }
        if best.stale >= config.patience {
            stop = StopReason::Patience;
            break;
        }
        let (ga, gv) = eval.grads.expect("gradient requested");
        adam.step(&mut params, &[ga, gv], lr)?;
    }

    let critic_calls = trace.len();
    let final_clip = pipeline_render(problem, &best.state)?;
    let baseline_p = match p_yes_baseline {
        Some(p) => p,
        None => problem.pipeline.critic.evaluate(&problem.baseline, &problem.indices, &problem.template, config.variant)?.p_yes,
    };
    Ok(TuneResult {
        task: problem.task.name.clone(),
        initial: problem.initial.clone(),
        best: best.state,
        best_loss: best.loss,
        trace,
        final_clip,
        baseline: problem.baseline.clone(),
        stop,
        critic_calls,
        p_yes_baseline: baseline_p,
        p_yes_best: p_yes_best.unwrap_or(baseline_p),
    })
}

fn pipeline_render(problem: &TuningProblem<'_>, state: &ConditioningState) -> Result<VideoClip> {
    problem.pipeline.generator.render(&problem.task, state)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferReport {
    pub target: String,
    pub clip: VideoClip,
    pub p_yes_transferred: f64,
    pub p_yes_baseline: f64,
    /// `p_yes_transferred - p_yes_baseline`.
    pub gap: f64,
}

/// Renders `target` with the tuned controls `(α*, Δv*)` and no further
/// optimization. The target keeps its own frozen prompt context.
pub fn transfer(
    pipeline: &Pipeline,
    alpha: &crate::numcore::RealArray,
    residual: &crate::numcore::RealArray,
    target: &EditTask,
    config: &TuningConfig,
) -> Result<TransferReport> {
    let problem = TuningProblem::new(pipeline, target, config)?;
    let state = problem.state(alpha.clone(), residual.clone())?;
    let clip = pipeline.generator.render(target, &state)?;
    let critic = &pipeline.critic;
    let score = |c: &VideoClip| critic.evaluate(c, &problem.indices, &problem.template, config.variant);
    let p_t = score(&clip)?.p_yes;
    let p_b = score(&problem.baseline)?.p_yes;
    Ok(TransferReport {
        target: target.name.clone(),
        clip,
        p_yes_transferred: p_t,
        p_yes_baseline: p_b,
        gap: p_t - p_b,
    })
}
