//! Black-box policy-gradient baseline over the same controls and objective.
//!
//! A diagonal Gaussian policy proposes complete updates `(Δα, Δv)` that are
//! added to `(α0, 0)`. Each candidate is scored with the tuner's objective,
//! so the reward is exactly `-total`. Updates take one clipped-surrogate
//! ascent step per batch of rollouts, with advantages measured against an
//! exponential moving average of rewards.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::genmodel::ConditioningState;
use crate::media::EditTask;
use crate::numcore::RealArray;
use crate::rng::{derive_seed, CounterRng};
use crate::tuner::{BestTracker, LossBreakdown, Pipeline, StopReason, TraceRow, TuneResult, TuningConfig, TuningProblem};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone, PartialEq)]
pub struct PpoConfig {
    pub clip_eps: f64,
    pub init_log_std: f64,
    pub rollouts_per_update: usize,
    pub baseline_decay: f64,
    pub lr: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_eps: 0.2,
            init_log_std: 0.05f64.ln(),
            rollouts_per_update: 4,
            baseline_decay: 0.9,
            lr: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Budget {
    CriticCalls(usize),
    WallSeconds(f64),
}

/// A complete proposed update.
#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub alpha: RealArray,
    pub residual: RealArray,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub mean_alpha: RealArray,
    pub mean_residual: RealArray,
    pub log_std_alpha: RealArray,
    pub log_std_residual: RealArray,
    /// Running reward baseline; `None` until the first batch.
    pub baseline: Option<f64>,
}

impl GaussianPolicy {
    pub fn new(alpha_shape: &[usize], residual_shape: &[usize], init_log_std: f64) -> Self {
        Self {
            mean_alpha: RealArray::zeros(alpha_shape),
            mean_residual: RealArray::zeros(residual_shape),
            log_std_alpha: RealArray::full(alpha_shape, init_log_std),
            log_std_residual: RealArray::full(residual_shape, init_log_std),
            baseline: None,
        }
    }

    fn blocks(&self) -> [(&RealArray, &RealArray); 2] {
        [
            (&self.mean_alpha, &self.log_std_alpha),
            (&self.mean_residual, &self.log_std_residual),
        ]
    }

    /// Exact diagonal-Gaussian log density.
    pub fn log_prob(&self, action: &Action) -> f64 {
        let mut lp = 0.0;
        for ((mean, log_std), x) in self.blocks().into_iter().zip([&action.alpha, &action.residual]) {
            for ((m, s), v) in mean.data().iter().zip(log_std.data()).zip(x.data()) {
                let z = (v - m) / s.exp();
                lp += -0.5 * z * z - s - HALF_LN_2PI;
            }
        }
        lp
    }
}

/// Draws one action; returns it with its log-probability and the advanced
/// generator state.
pub fn sample_action(policy: &GaussianPolicy, rng: CounterRng) -> (Action, f64, CounterRng) {
    let mut rng = rng;
    let mut draw = |mean: &RealArray, log_std: &RealArray| {
        let data = mean
            .data()
            .iter()
            .zip(log_std.data())
            .map(|(m, s)| m + s.exp() * rng.next_normal())
            .collect();
        RealArray::new(mean.shape().to_vec(), data).expect("shape preserved")
    };
    let action = Action {
        alpha: draw(&policy.mean_alpha, &policy.log_std_alpha),
        residual: draw(&policy.mean_residual, &policy.log_std_residual),
    };
    let lp = policy.log_prob(&action);
    (action, lp, rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub action: Action,
    /// Log-probability under the policy that sampled it.
    pub log_prob: f64,
    pub reward: f64,
    pub advantage: f64,
}

/// `min(r A, clip(r, 1 - ε, 1 + ε) A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip_eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
    (ratio * advantage).min(clipped * advantage)
}

/// One ascent step on the mean clipped surrogate.
pub fn ppo_update(policy: &GaussianPolicy, rollouts: &[Rollout], clip_eps: f64, lr: f64) -> Result<GaussianPolicy> {
    if rollouts.is_empty() {
        return Err(Error::Precondition("ppo_update needs at least one rollout".into()));
    }
    let mut g_mean = [
        RealArray::zeros(policy.mean_alpha.shape()),
        RealArray::zeros(policy.mean_residual.shape()),
    ];
    let mut g_log_std = g_mean.clone();
    for r in rollouts {
        let ratio = (policy.log_prob(&r.action) - r.log_prob).exp();
        let a = r.advantage;
        // The gradient vanishes where the clipped branch is the minimum.
        let clipped_active = (a > 0.0 && ratio > 1.0 + clip_eps) || (a < 0.0 && ratio < 1.0 - clip_eps);
        if clipped_active || a == 0.0 {
            continue;
        }
        let coef = a * ratio / rollouts.len() as f64;
        for (b, ((mean, log_std), x)) in policy
            .blocks()
            .into_iter()
            .zip([&r.action.alpha, &r.action.residual])
            .enumerate()
        {
            for i in 0..mean.len() {
                let s = log_std.data()[i].exp();
                let z = (x.data()[i] - mean.data()[i]) / s;
                g_mean[b].data_mut()[i] += coef * z / s;
                g_log_std[b].data_mut()[i] += coef * (z * z - 1.0);
            }
        }
    }
    let step = |p: &RealArray, g: &RealArray| p.zip_map(g, |v, d| v + lr * d);
    Ok(GaussianPolicy {
        mean_alpha: step(&policy.mean_alpha, &g_mean[0]),
        mean_residual: step(&policy.mean_residual, &g_mean[1]),
        log_std_alpha: step(&policy.log_std_alpha, &g_log_std[0]),
        log_std_residual: step(&policy.log_std_residual, &g_log_std[1]),
        baseline: policy.baseline,
    })
}

/// `-total` for the state; the same computation the tuner minimizes.
pub fn reward(problem: &TuningProblem<'_>, state: &ConditioningState) -> Result<f64> {
    Ok(-problem.evaluate(state, false)?.loss.total)
}

/// Candidate state for an action: `(α0 + Δα, Δv)`.
pub fn apply_action(problem: &TuningProblem<'_>, action: &Action) -> Result<ConditioningState> {
    let alpha = problem.initial.alpha.values().zip_map(&action.alpha, |a, d| a + d);
    problem.state(alpha, action.residual.clone())
}

/// PPO run in [`TuneResult`] form. `trace` holds one row per scored
/// candidate, with `lr` set to the policy learning rate.
pub fn ppo_tune(
    pipeline: &Pipeline,
    task: &EditTask,
    budget: Budget,
    config: &TuningConfig,
    ppo: &PpoConfig,
) -> Result<TuneResult> {
    match budget {
        Budget::CriticCalls(0) => return Err(Error::Precondition("ppo budget must be positive".into())),
        Budget::WallSeconds(s) if !(s > 0.0) => {
            return Err(Error::Precondition("ppo budget must be positive".into()))
        }
        _ => {}
    }
    if ppo.rollouts_per_update == 0 {
        return Err(Error::Precondition("ppo needs at least one rollout per update".into()));
    }
    let problem = TuningProblem::new(pipeline, task, config)?;
    let mut policy = GaussianPolicy::new(
        problem.initial.alpha.values().shape(),
        problem.initial.residual.shape(),
        ppo.init_log_std,
    );
    let mut rng = CounterRng::new(derive_seed(config.seed, "ppo-actions", task.prompt_id));
    let mut best = BestTracker::new(problem.initial.clone());
    let mut best_p = None;
    let mut trace: Vec<TraceRow> = Vec::new();
    let started = Instant::now();
    let remaining = |calls: usize| match budget {
        Budget::CriticCalls(n) => n - calls,
        Budget::WallSeconds(s) => {
            if started.elapsed().as_secs_f64() < s {
                usize::MAX
            } else {
                0
            }
        }
    };

    while remaining(trace.len()) > 0 {
        let batch = ppo.rollouts_per_update.min(remaining(trace.len()));
        let mut rollouts = Vec::with_capacity(batch);
        for _ in 0..batch {
            let (action, log_prob, next) = sample_action(&policy, rng);
            rng = next;
            let state = apply_action(&problem, &action)?;
            let eval = problem.evaluate(&state, false)?;
            let loss = LossBreakdown { iter: trace.len(), ..eval.loss };
            trace.push(TraceRow { loss, lr: ppo.lr });
            if best.offer(&state, loss) {
                best_p = Some(eval.critic.p_yes);
            }
            rollouts.push(Rollout {
                action,
                log_prob,
                reward: -loss.total,
                advantage: 0.0,
            });
        }
        if let Budget::CriticCalls(n) = budget {
            assert!(trace.len() <= n, "ppo exceeded its critic-call budget");
        }
        let mean_r = rollouts.iter().map(|r| r.reward).sum::<f64>() / rollouts.len() as f64;
        let base = policy.baseline.unwrap_or(mean_r);
        for r in &mut rollouts {
            r.advantage = r.reward - base;
        }
        policy = ppo_update(&policy, &rollouts, ppo.clip_eps, ppo.lr)?;
        policy.baseline = Some(ppo.baseline_decay * base + (1.0 - ppo.baseline_decay) * mean_r);
    }

    let final_clip = pipeline.generator.render(task, &best.state)?;
    let p_base = pipeline
        .critic
        .evaluate(&problem.baseline, &problem.indices, &problem.template, config.variant)?
        .p_yes;
    let stop = StopReason::Budget;
    Ok(TuneResult {
        task: task.name.clone(),
        initial: problem.initial.clone(),
        best: best.state,
        best_loss: best.loss,
        critic_calls: trace.len(),
        trace,
        final_clip,
        baseline: problem.baseline.clone(),
        stop,
        p_yes_baseline: p_base,
        p_yes_best: best_p.unwrap_or(p_base),
    })
}

/// PPO trace CSV: the tuner columns plus the per-rollout reward.
pub fn render_ppo_trace(trace: &[TraceRow]) -> String {
    let mut out = format!("{},reward\n", crate::tuner::TRACE_HEADER);
    for r in trace {
        let l = &r.loss;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            l.iter, l.l_vlm, l.l_latent, l.l_lpips, l.l_temp, l.total, r.lr, -l.total
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn policy(log_std: f64) -> GaussianPolicy {
        GaussianPolicy::new(&[2, 3], &[2, 2], log_std)
    }

    #[test]
    fn sampling_is_reproducible_and_collapses_to_mean() {
        let p = policy(0.05f64.ln());
        let (a, lp, next) = sample_action(&p, CounterRng::new(7));
        let (b, lp2, _) = sample_action(&p, CounterRng::new(7));
        assert_eq!((a.clone(), lp), (b, lp2));
        assert_eq!(next.counter, 10);
        let tight = policy(-60.0);
        let (c, _, _) = sample_action(&tight, CounterRng::new(7));
        assert!(c.alpha.max_abs() < 1e-20 && c.residual.max_abs() < 1e-20);
    }

    #[test]
    fn log_prob_at_mean() {
        let p = policy(0.05f64.ln());
        let mean = Action {
            alpha: p.mean_alpha.clone(),
            residual: p.mean_residual.clone(),
        };
        let expected = -10.0 * (0.05f64.ln() + 0.5 * (2.0 * std::f64::consts::PI).ln());
        assert!((p.log_prob(&mean) - expected).abs() < 1e-12);
    }

    #[test]
    fn surrogate_clipping() {
        assert!((clipped_surrogate(2.0, 1.0, 0.2) - 1.2).abs() < 1e-15);
        assert_eq!(clipped_surrogate(2.0, -1.0, 0.2), -2.0);
        assert_eq!(clipped_surrogate(0.5, 1.0, 0.2), 0.5);
    }

    fn rollout(p: &GaussianPolicy, seed: u64, advantage: f64) -> Rollout {
        let (action, log_prob, _) = sample_action(p, CounterRng::new(seed));
        Rollout {
            action,
            log_prob,
            reward: advantage,
            advantage,
        }
    }

    #[test]
    fn zero_advantage_leaves_policy_unchanged() {
        let p = policy(-1.0);
        let rs = vec![rollout(&p, 1, 0.0), rollout(&p, 2, 0.0)];
        assert_eq!(ppo_update(&p, &rs, 0.2, 0.1).unwrap(), p);
        assert!(ppo_update(&p, &[], 0.2, 0.1).is_err());
    }

    #[test]
    fn positive_advantage_moves_mean_towards_action() {
        let p = policy(-1.0);
        let r = rollout(&p, 3, 1.0);
        let q = ppo_update(&p, std::slice::from_ref(&r), 0.2, 0.01).unwrap();
        for (i, x) in r.action.alpha.data().iter().enumerate() {
            let moved = q.mean_alpha.data()[i] - p.mean_alpha.data()[i];
            assert!(moved * x > 0.0);
        }
    }

    #[test]
    fn unclipped_single_rollout_is_vanilla_policy_gradient() {
        let p = policy(-1.0);
        let r = rollout(&p, 4, 0.7);
        let lr = 0.05;
        let q = ppo_update(&p, std::slice::from_ref(&r), f64::INFINITY, lr).unwrap();
        let s = (-1.0f64).exp();
        for (i, x) in r.action.alpha.data().iter().enumerate() {
            let z = x / s;
            assert!((q.mean_alpha.data()[i] - lr * 0.7 * z / s).abs() < 1e-12);
            assert!((q.log_std_alpha.data()[i] - (-1.0 + lr * 0.7 * (z * z - 1.0))).abs() < 1e-12);
        }
    }
}
