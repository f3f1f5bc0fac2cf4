//! Finite-difference audit of every differentiable path.
//!
//! Each check builds a scalar loss on a tape from a few leaves, then
//! compares reverse-mode gradients with central differences. The error of a
//! path is `max|a - n| / max(‖a‖∞, ‖n‖∞, 1e-12)` over all its leaves.
//! Full-objective checks run with `k_grad = S`, since truncated gradients
//! are deliberately not the derivative of the forward map.

use std::fmt::Write as _;

use crate::critic::{gather_frame_vars, CriticVariant, SamplingSchedule};
use crate::error::Result;
use crate::genmodel::GeneratorDims;
use crate::numcore::{finite_diff_grad, grad, RealArray, Tape, Var};
use crate::rng::{derive_seed, SplitMix64};
use crate::suite::toy_task;
use crate::tuner::{Pipeline, TuningConfig, TuningProblem};

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
pub const GRADCHECK_STEP: f64 = 1e-5;
/// Refinement steps of the tiny pipeline.
const TINY_STEPS: usize = 12;

type Builder = Box<dyn for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>>;

struct Check {
    name: String,
    leaves: Vec<RealArray>,
    build: Builder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    pub name: String,
    pub max_rel_err: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub seed: u64,
    pub paths: Vec<PathResult>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.paths.iter().all(|p| p.passed)
    }

    pub fn failures(&self) -> Vec<&PathResult> {
        self.paths.iter().filter(|p| !p.passed).collect()
    }

    /// One line per path, then a summary line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for p in &self.paths {
            let _ = writeln!(
                out,
                "{:<34} max_rel_err={:.3e} {}",
                p.name,
                p.max_rel_err,
                if p.passed { "PASS" } else { "FAIL" }
            );
        }
        let _ = writeln!(
            out,
            "gradcheck seed={} paths={} failed={} tolerance={GRADCHECK_TOLERANCE:e} -> {}",
            self.seed,
            self.paths.len(),
            self.failures().len(),
            if self.passed() { "PASS" } else { "FAIL" }
        );
        out
    }
}

/// Relative error `max|a - n| / max(‖a‖∞, ‖n‖∞, 1e-12)`.
pub fn relative_error(analytic: &[RealArray], numeric: &[RealArray]) -> f64 {
    let mut diff: f64 = 0.0;
    let mut scale: f64 = 1e-12;
    for (a, n) in analytic.iter().zip(numeric) {
        for (x, y) in a.data().iter().zip(n.data()) {
            diff = diff.max((x - y).abs());
        }
        scale = scale.max(a.max_abs()).max(n.max_abs());
    }
    diff / scale
}

pub struct Gradcheck {
    seed: u64,
    checks: Vec<Check>,
}

fn random(rng: &mut SplitMix64, shape: &[usize], lo: f64, hi: f64) -> RealArray {
    RealArray::from_fn(shape, |_| rng.uniform(lo, hi))
}

impl Gradcheck {
    pub fn empty(seed: u64) -> Self {
        Self {
            seed,
            checks: Vec::new(),
        }
    }

    /// Every primitive plus the generator, critic, perceptual distance and
    /// full objective at tiny dimensions.
    pub fn standard(seed: u64) -> Result<Self> {
        let mut g = Self::empty(seed);
        g.add_primitives();
        g.add_pipeline()?;
        Ok(g)
    }

    pub fn add<F>(&mut self, name: impl Into<String>, leaves: Vec<RealArray>, build: F)
    where
        F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>> + 'static,
    {
        self.checks.push(Check {
            name: name.into(),
            leaves,
            build: Box::new(build),
        });
    }

    /// Adds a check of an elementwise primitive given by value and derivative.
    pub fn add_unary(
        &mut self,
        name: &'static str,
        f: impl Fn(f64) -> f64 + Clone + 'static,
        df: impl Fn(f64) -> f64 + Clone + 'static,
    ) {
        let mut rng = SplitMix64::new(derive_seed(self.seed, "gradcheck-unary", 0));
        let x = random(&mut rng, &[3, 4], -1.5, 1.5);
        let w = random(&mut rng, &[3, 4], -1.0, 1.0);
        self.add(format!("primitive/{name}"), vec![x], move |t, v| {
            Ok((t.map_unary(v[0], name, f.clone(), df.clone()) * t.constant(w.clone())).sum())
        });
    }

    fn add_primitives(&mut self) {
        let mut rng = SplitMix64::new(derive_seed(self.seed, "gradcheck-primitives", 0));
        let a = random(&mut rng, &[3, 4], -1.5, 1.5);
        let b = random(&mut rng, &[3, 4], -1.5, 1.5);
        let pos = random(&mut rng, &[3, 4], 0.5, 2.0);
        let w = random(&mut rng, &[3, 4], -1.0, 1.0);
        let m = random(&mut rng, &[4, 2], -1.0, 1.0);
        let img = random(&mut rng, &[2, 4, 4, 3], -1.0, 1.0);

        macro_rules! unary {
            ($name:expr, $input:expr, |$x:ident| $body:expr) => {{
                let w = w.clone();
                self.add(concat!("primitive/", $name), vec![$input.clone()], move |t, v| {
                    let $x = v[0];
                    Ok(($body * t.constant(w.clone())).sum())
                });
            }};
        }
        unary!("tanh", a, |x| x.tanh());
        unary!("sigmoid", a, |x| x.sigmoid());
        unary!("exp", a, |x| x.exp());
        unary!("log", pos, |x| x.ln());
        unary!("sqrt", pos, |x| x.sqrt());
        unary!("square", a, |x| x.square());
        unary!("scale_offset", a, |x| x.scale(-1.7).offset(0.3));
        unary!("neg", a, |x| -x);
        unary!("max_const", a.map(|v| if v.abs() < 0.05 { v + 0.1 } else { v }), |x| x.max_const(0.0));

        macro_rules! binary {
            ($name:expr, $rhs:expr, |$x:ident, $y:ident| $body:expr) => {{
                let w = w.clone();
                self.add(concat!("primitive/", $name), vec![a.clone(), $rhs.clone()], move |t, v| {
                    let ($x, $y) = (v[0], v[1]);
                    Ok(($body * t.constant(w.clone())).sum())
                });
            }};
        }
        binary!("add", b, |x, y| x + y);
        binary!("sub", b, |x, y| x - y);
        binary!("mul", b, |x, y| x * y);
        binary!("div", pos, |x, y| x / y);

        self.add("primitive/matmul", vec![a.clone(), m], |_, v| Ok(v[0].matmul(v[1]).tanh().sum()));
        self.add("primitive/mean_sum_axis", vec![a.clone()], |_, v| {
            Ok(v[0].sum_axis(0).square().mean() + v[0].sum_axis(1).tanh().sum())
        });
        self.add("primitive/slice_concat_reshape", vec![a.clone()], |t, v| {
            let x = v[0];
            let c = t.concat(&[x.slice(1, 2, 4), x.slice(1, 0, 2).square()], 1);
            Ok(c.reshape(&[2, 6]).slice(0, 1, 2).tanh().sum())
        });
        self.add("primitive/broadcast", vec![RealArray::from_fn(&[3, 1], |i| 0.3 * i as f64 - 0.2)], move |t, v| {
            Ok((v[0].broadcast_to(&[3, 4]).tanh() * t.constant(w.clone())).sum())
        });
        self.add("primitive/pool2_roll", vec![img], |_, v| {
            Ok(v[0].roll(1, 1).roll(2, -1).pool2().square().sum())
        });
    }

    fn add_pipeline(&mut self) -> Result<()> {
        let dims = GeneratorDims::tiny();
        let pipeline = Pipeline::new(self.seed, dims, TINY_STEPS)?;
        let task = toy_task(dims, self.seed, 0)?;
        let silent = toy_task(dims, self.seed, 1)?;
        let mut rng = SplitMix64::new(derive_seed(self.seed, "gradcheck-pipeline", 0));
        let d = dims.clip;
        let p = d.frame_len();

        let state = pipeline.generator.initial_state(&task)?;
        let a0 = state.alpha.values();
        let alpha = RealArray::from_fn(a0.shape(), |i| a0.data()[i] + 0.05 * rng.normal());
        let dv = RealArray::from_fn(&dims.text_shape(), |_| 0.05 * rng.normal());
        let prompt = state.prompt.values().clone();
        let out_w = random(&mut rng, &[d.frames, p], -1.0, 1.0);

        {
            let (gen, task) = (pipeline.generator.clone(), task.clone());
            self.add("generator", vec![alpha, dv], move |t, v| {
                let ctx = t.constant(prompt.clone()) + v[1];
                let x = gen.generate(t, &task, v[0], ctx, TINY_STEPS)?;
                Ok((x.reshape(&[task.source.dims().frames, p]) * t.constant(out_w.clone())).sum())
            });
        }

        let frames = random(&mut rng, &d.shape(), 0.1, 0.9);
        let tpl = pipeline.critic.template(task.prompt_id);
        for (label, variant, schedule) in [
            ("critic/temporal_uniform", CriticVariant::Temporal, SamplingSchedule::Uniform),
            ("critic/temporal_midpoint", CriticVariant::Temporal, SamplingSchedule::Midpoint),
            ("critic/framewise", CriticVariant::Framewise, SamplingSchedule::Uniform),
        ] {
            let (critic, tpl) = (pipeline.critic.clone(), tpl.clone());
            let idx = schedule.indices(d.frames, 6)?;
            self.add(label, vec![frames.clone()], move |t, v| {
                let s = gather_frame_vars(t, v[0], &idx)?;
                let (ly, ln) = critic.logits(t, s, &idx, d.frames, &tpl, variant)?;
                Ok(-((ly - ln).sigmoid().offset(1e-6).ln()))
            });
        }

        let other = random(&mut rng, &d.shape(), 0.1, 0.9);
        let frpd = pipeline.frpd.clone();
        self.add("frpd", vec![frames.clone()], move |t, v| frpd.distance_var(t, v[0], t.constant(other.clone())));

        let mut config = TuningConfig {
            k_grad: TINY_STEPS,
            lambda_alpha: 0.5,
            lambda_v: 0.5,
            ..TuningConfig::default()
        };
        for (label, tk, variant) in [
            ("total_loss/temporal", &task, CriticVariant::Temporal),
            ("total_loss/framewise_silent", &silent, CriticVariant::Framewise),
        ] {
            config.variant = variant;
            self.add_total_loss(label, &pipeline, tk, &config)?;
        }
        config.variant = CriticVariant::Temporal;
        config.schedule = SamplingSchedule::Midpoint;
        config.n_pairs = Some(4);
        self.add_total_loss("total_loss/midpoint_strided_pairs", &pipeline, &task, &config)?;
        Ok(())
    }

    /// Full objective at a seeded point kept away from the hinge kink.
    fn add_total_loss(&mut self, label: &str, pipeline: &Pipeline, task: &crate::media::EditTask, config: &TuningConfig) -> Result<()> {
        let problem = TuningProblem::new(pipeline, task, config)?;
        let mut rng = SplitMix64::new(derive_seed(self.seed, label, 0));
        let base = problem.initial.alpha.values().clone();
        let noise_a = RealArray::from_fn(base.shape(), |_| rng.normal());
        let noise_v = RealArray::from_fn(problem.initial.residual.shape(), |_| rng.normal());
        let mut scale = 0.3;
        let (alpha, dv) = loop {
            let a = base.zip_map(&noise_a, |x, n| x + scale * n);
            let v = noise_v.map(|n| scale * n);
            let eval = problem.evaluate(&problem.state(a.clone(), v.clone())?, false)?;
            let gap = crate::tuner::temporal_distance(&pipeline.frpd, &eval.clip, config.n_pairs)? - problem.baseline_temporal();
            if gap.abs() > 1e-4 || scale > 10.0 {
                break (a, v);
            }
            scale *= 1.5;
        };
        let (pipe, task, config) = (pipeline.clone(), task.clone(), config.clone());
        self.add(label, vec![alpha, dv], move |t, v| {
            let problem = TuningProblem::new(&pipe, &task, &config)?;
            problem.loss_on_tape(t, v[0], v[1])
        });
        Ok(())
    }

    pub fn run(&self) -> Result<GradcheckReport> {
        let mut paths = Vec::with_capacity(self.checks.len());
        for check in &self.checks {
            let tape = Tape::new();
            let vars: Vec<Var> = check.leaves.iter().map(|l| tape.leaf(l.clone())).collect();
            let loss = (check.build)(&tape, &vars)?;
            let analytic = grad(loss, &vars)?;
            let numeric = finite_diff_grad(
                |pt| {
                    let t = Tape::new();
                    let vs: Vec<Var> = pt.iter().map(|l| t.leaf(l.clone())).collect();
                    Ok((check.build)(&t, &vs)?.item())
                },
                &check.leaves,
                GRADCHECK_STEP,
            )?;
            let err = relative_error(&analytic, &numeric);
            paths.push(PathResult {
                name: check.name.clone(),
                max_rel_err: err,
                passed: err <= GRADCHECK_TOLERANCE,
            });
        }
        Ok(GradcheckReport { seed: self.seed, paths })
    }
}

/// Runs the standard suite.
pub fn run_gradcheck(seed: u64) -> Result<GradcheckReport> {
    Gradcheck::standard(seed)?.run()
}
