//! Command implementations behind the `condtune` binary.
//!
//! Every command writes plain files under `--out` and a JSON run record that
//! lists each file with its SHA-256. Wall-clock timings go to `timings.csv`
//! so that every other output is byte-identical across reruns.

pub mod cli;
pub mod pool;
pub mod record;
pub mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use condtune::genmodel::GeneratorDims;
use condtune::gradcheck::{run_gradcheck, GradcheckReport};
use condtune::media::{
    load_task_manifest, read_clip, render_task_manifest, write_clip, ClipDims, EditTask, TaskManifest, VideoClip,
};
use condtune::metrics::{
    all_background_mask, bg_distance, global_drift, min_max_normalize, motion_flatness, parse_survey_csv,
    survey_aggregate, EvalScores,
};
use condtune::ppo::{ppo_tune, Budget, PpoConfig};
use condtune::suite::toy_suite;
use condtune::tuner::{
    parse_trace, temporal_distance, tune, write_tune_result, Pipeline, TuneResult, TuningConfig, TuningProblem,
};

use crate::cli::{DimsPreset, TuningFlags};
use crate::record::{RunRecord, TaskRecord, EVAL_RECORD_FILE, RECORD_FILE};
use crate::report::{csv, f, line_plot};

/// Refinement steps of every pipeline the CLI builds.
pub const PIPELINE_STEPS: usize = 30;
pub const SEED_ENV: &str = "CONDTUNE_SEED";

pub const EXIT_TASK_FAILURE: i32 = 1;
pub const EXIT_INVALID_INPUT: i32 = 2;
pub const EXIT_GRADCHECK_FAILURE: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    /// Input that cannot be used as given.
    Invalid(String),
    /// A failure while running or writing results.
    Task(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => EXIT_INVALID_INPUT,
            CliError::Task(_) => EXIT_TASK_FAILURE,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Invalid(m) => write!(f, "invalid input: {m}"),
            CliError::Task(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

fn task_err(e: impl std::fmt::Display) -> CliError {
    CliError::Task(e.to_string())
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| task_err(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| task_err(format!("{}: {e}", path.display())))
}

/// Flag value, then `CONDTUNE_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Invalid(format!("{SEED_ENV}=`{v}` is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

/// Config overrides carried by command-line flags, as `(key, value)` text.
pub fn flag_overrides(flags: &TuningFlags) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut push = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            out.push((k.to_string(), v));
        }
    };
    push("lr", flags.lr.map(|v| v.to_string()));
    push("iters", flags.iters.map(|v| v.to_string()));
    push("patience", flags.patience.map(|v| v.to_string()));
    push("lambda_alpha", flags.lambda_alpha.map(|v| v.to_string()));
    push("lambda_v", flags.lambda_v.map(|v| v.to_string()));
    push("lambda_lpips", flags.lambda_lpips.map(|v| v.to_string()));
    push("lambda_temp", flags.lambda_temp.map(|v| v.to_string()));
    push("schedule", flags.schedule.clone());
    push("n_frames", flags.n_frames.map(|v| v.to_string()));
    push("k_grad", flags.k_grad.map(|v| v.to_string()));
    push("variant", flags.variant.clone());
    out
}

/// Defaults, then `layers` in order. Unless some layer sets `patience`
/// explicitly, patience is clamped to the iteration budget.
pub fn resolve_config(seed: u64, layers: &[&[(String, String)]]) -> Result<TuningConfig, CliError> {
    let mut config = TuningConfig {
        seed,
        ..TuningConfig::default()
    };
    let mut explicit_patience = false;
    for layer in layers {
        for (k, v) in layer.iter() {
            config.set(k, v).map_err(invalid)?;
            explicit_patience |= k == "patience";
        }
    }
    if !explicit_patience && config.max_iters > 0 {
        config.patience = config.patience.min(config.max_iters);
    }
    config.validate().map_err(invalid)?;
    Ok(config)
}

fn snapshot_map(config: &TuningConfig) -> BTreeMap<String, String> {
    config.snapshot().into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Pipeline matching a clip size. The tiny preset keeps its small latents;
/// any other size uses desk-scale latents.
pub fn pipeline_for(seed: u64, clip: ClipDims) -> Result<Pipeline, CliError> {
    let tiny = GeneratorDims::tiny();
    let dims = if clip == tiny.clip {
        tiny
    } else {
        GeneratorDims {
            clip,
            ..GeneratorDims::desk()
        }
    };
    Pipeline::new(seed, dims, PIPELINE_STEPS).map_err(invalid)
}

struct Pipelines(Vec<(ClipDims, Pipeline)>);

impl Pipelines {
    fn for_tasks<'a>(seed: u64, tasks: impl Iterator<Item = &'a EditTask>) -> Result<Self, CliError> {
        let mut v: Vec<(ClipDims, Pipeline)> = Vec::new();
        for t in tasks {
            let d = t.source.dims();
            if !v.iter().any(|(k, _)| *k == d) {
                v.push((d, pipeline_for(seed, d)?));
            }
        }
        Ok(Self(v))
    }

    fn get(&self, dims: ClipDims) -> &Pipeline {
        &self.0.iter().find(|(k, _)| *k == dims).expect("pipeline built for every task").1
    }
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub out: PathBuf,
    pub seed: u64,
    pub count: usize,
    pub dims: DimsPreset,
    pub args: Vec<String>,
}

pub const SYNTH_MANIFEST: &str = "tasks.manifest";

/// Writes the seeded toy suite: one clip per task plus a manifest.
pub fn cmd_synth(opts: &SynthOptions) -> Result<RunRecord, CliError> {
    let dims = match opts.dims {
        DimsPreset::Desk => GeneratorDims::desk(),
        DimsPreset::Tiny => GeneratorDims::tiny(),
    };
    let tasks = toy_suite(dims, opts.seed, opts.count).map_err(invalid)?;
    let clips = opts.out.join("clips");
    create_dir(&clips)?;
    let mut record = RunRecord::new("synth", opts.args.clone(), opts.seed);
    let mut entries = Vec::new();
    for task in tasks {
        let rel = format!("clips/{}.vclip", task.name);
        let path = opts.out.join(&rel);
        write_clip(&task.source, &path).map_err(task_err)?;
        record.add_output(&opts.out, &path).map_err(task_err)?;
        entries.push((task, rel, Vec::new()));
    }
    let manifest = opts.out.join(SYNTH_MANIFEST);
    write_text(&manifest, &render_task_manifest(&entries))?;
    record.add_output(&opts.out, &manifest).map_err(task_err)?;
    record.write(&opts.out, RECORD_FILE).map_err(task_err)?;
    Ok(record)
}

// ---------------------------------------------------------- tune/compare

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub manifest: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub flags: TuningFlags,
    pub budget: Option<usize>,
    pub ppo_wall_clock: bool,
    pub workers: usize,
    pub args: Vec<String>,
}

impl RunOptions {
    pub fn new(manifest: impl Into<PathBuf>, out: impl Into<PathBuf>, seed: u64) -> Self {
        Self {
            manifest: manifest.into(),
            out: out.into(),
            seed,
            flags: TuningFlags::default(),
            budget: None,
            ppo_wall_clock: false,
            workers: 1,
            args: Vec::new(),
        }
    }
}

/// Outcome of `tune` or `compare`. Failed tasks are listed, not fatal.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub record: RunRecord,
    pub failures: Vec<(String, String)>,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else {
            EXIT_TASK_FAILURE
        }
    }
}

struct Prepared {
    manifest: TaskManifest,
    base: TuningConfig,
    configs: Vec<TuningConfig>,
    pipelines: Pipelines,
}

fn prepare(opts: &RunOptions, extra: &[(String, String)]) -> Result<Prepared, CliError> {
    if opts.workers == 0 {
        return Err(CliError::Invalid("--workers must be at least 1".into()));
    }
    let manifest = load_task_manifest(&opts.manifest).map_err(invalid)?;
    let cli = flag_overrides(&opts.flags);
    let base = resolve_config(opts.seed, &[&cli, extra])?;
    let configs = manifest
        .entries
        .iter()
        .map(|e| {
            resolve_config(opts.seed, &[&cli, extra, &e.overrides])
                .map_err(|err| CliError::Invalid(format!("task `{}`: {err}", e.task.name)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let pipelines = Pipelines::for_tasks(opts.seed, manifest.tasks())?;
    Ok(Prepared {
        manifest,
        base,
        configs,
        pipelines,
    })
}

fn base_record(command: &str, opts: &RunOptions, p: &Prepared) -> RunRecord {
    let mut record = RunRecord::new(command, opts.args.clone(), opts.seed);
    record.manifest = Some(opts.manifest.clone());
    record.config = snapshot_map(&p.base);
    record
}

fn task_record(entry_name: &str, config: &TuningConfig, overrides: &[(String, String)], error: Option<String>) -> TaskRecord {
    TaskRecord {
        name: entry_name.to_string(),
        config: snapshot_map(config),
        overrides: overrides.to_vec(),
        ok: error.is_none(),
        error,
    }
}

fn write_timings(out: &Path, rows: &[(String, &str, f64)], record: &mut RunRecord) -> Result<(), CliError> {
    let mut text = String::from("task,method,seconds\n");
    for (task, method, s) in rows {
        text.push_str(&format!("{task},{method},{s:.3}\n"));
    }
    let path = out.join("timings.csv");
    write_text(&path, &text)?;
    record.timings_file = Some("timings.csv".into());
    Ok(())
}

fn add_result_files(record: &mut RunRecord, root: &Path, result: &TuneResult, dir: &Path) -> Result<(), CliError> {
    let files = write_tune_result(result, dir).map_err(task_err)?;
    for p in files.all() {
        record.add_output(root, p).map_err(task_err)?;
    }
    Ok(())
}

pub const TUNE_SUMMARY: &str = "tune_summary.csv";
pub const TUNE_SUMMARY_HEADER: [&str; 9] = [
    "task",
    "iters",
    "stop",
    "critic_calls",
    "initial_total",
    "best_total",
    "best_iter",
    "p_yes_baseline",
    "p_yes_best",
];

fn summary_row(r: &TuneResult) -> Vec<String> {
    let best = r.best_loss.expect("at least one iteration");
    vec![
        r.task.clone(),
        r.trace.len().to_string(),
        r.stop.to_string(),
        r.critic_calls.to_string(),
        f(r.initial_total().expect("at least one iteration")),
        f(best.total),
        best.iter.to_string(),
        f(r.p_yes_baseline),
        f(r.p_yes_best),
    ]
}

/// Tunes every manifest task. An empty manifest writes nothing.
pub fn cmd_tune(opts: &RunOptions) -> Result<RunSummary, CliError> {
    let p = prepare(opts, &[])?;
    let mut record = base_record("tune", opts, &p);
    if p.manifest.is_empty() {
        return Ok(RunSummary {
            record,
            failures: Vec::new(),
        });
    }
    if p.configs.iter().any(|c| c.max_iters == 0) {
        return Err(CliError::Invalid("iters must be positive".into()));
    }
    let jobs: Vec<usize> = (0..p.manifest.len()).collect();
    let results = pool::map_ordered(&jobs, opts.workers, |&i| {
        let task = &p.manifest.entries[i].task;
        let started = Instant::now();
        let r = tune(p.pipelines.get(task.source.dims()), task, &p.configs[i]);
        (r, started.elapsed().as_secs_f64())
    });

    create_dir(&opts.out)?;
    let mut failures = Vec::new();
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    for ((entry, config), (r, secs)) in p.manifest.entries.iter().zip(&p.configs).zip(results) {
        let name = entry.task.name.clone();
        timings.push((name.clone(), "gradient", secs));
        match r {
            Ok(result) => {
                add_result_files(&mut record, &opts.out, &result, &opts.out)?;
                rows.push(summary_row(&result));
                record.tasks.push(task_record(&name, config, &entry.overrides, None));
            }
            Err(e) => {
                failures.push((name.clone(), e.to_string()));
                record.tasks.push(task_record(&name, config, &entry.overrides, Some(e.to_string())));
            }
        }
    }
    let summary = opts.out.join(TUNE_SUMMARY);
    write_text(&summary, &csv(&TUNE_SUMMARY_HEADER, &rows))?;
    record.add_output(&opts.out, &summary).map_err(task_err)?;
    write_timings(&opts.out, &timings, &mut record)?;
    record.write(&opts.out, RECORD_FILE).map_err(task_err)?;
    Ok(RunSummary { record, failures })
}

pub const COMPARE_CSV: &str = "compare.csv";
pub const COMPARE_HEADER: [&str; 9] = [
    "task",
    "grad_calls",
    "ppo_calls",
    "grad_best_total",
    "ppo_best_total",
    "grad_p_yes",
    "ppo_p_yes",
    "p_yes_baseline",
    "grad_le_ppo",
];
/// Subdirectory holding the PPO results of `compare`.
pub const PPO_DIR: &str = "ppo";

/// Gradient tuning and PPO per task. PPO gets exactly the number of critic
/// calls the gradient run used (or its wall-clock time with
/// `ppo_wall_clock`). `budget` caps the gradient run's iterations.
pub fn cmd_compare(opts: &RunOptions) -> Result<RunSummary, CliError> {
    let extra = match opts.budget {
        Some(0) => return Err(CliError::Invalid("--budget must be positive".into())),
        Some(b) => vec![("iters".to_string(), b.to_string())],
        None => Vec::new(),
    };
    let p = prepare(opts, &extra)?;
    let mut record = base_record("compare", opts, &p);
    if p.manifest.is_empty() {
        return Ok(RunSummary {
            record,
            failures: Vec::new(),
        });
    }
    if p.configs.iter().any(|c| c.max_iters == 0) {
        return Err(CliError::Invalid("iters must be positive".into()));
    }
    let ppo_cfg = PpoConfig::default();
    let jobs: Vec<usize> = (0..p.manifest.len()).collect();
    let results = pool::map_ordered(&jobs, opts.workers, |&i| {
        let task = &p.manifest.entries[i].task;
        let pipeline = p.pipelines.get(task.source.dims());
        let t0 = Instant::now();
        let grad = tune(pipeline, task, &p.configs[i])?;
        let grad_secs = t0.elapsed().as_secs_f64();
        let budget = if opts.ppo_wall_clock {
            Budget::WallSeconds(grad_secs)
        } else {
            Budget::CriticCalls(grad.critic_calls)
        };
        let t1 = Instant::now();
        let ppo = ppo_tune(pipeline, task, budget, &p.configs[i], &ppo_cfg)?;
        Ok::<_, condtune::Error>((grad, grad_secs, ppo, t1.elapsed().as_secs_f64()))
    });

    let ppo_dir = opts.out.join(PPO_DIR);
    create_dir(&ppo_dir)?;
    let mut failures = Vec::new();
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    for ((entry, config), r) in p.manifest.entries.iter().zip(&p.configs).zip(results) {
        let name = entry.task.name.clone();
        match r {
            Ok((grad, gs, ppo, ps)) => {
                timings.push((name.clone(), "gradient", gs));
                timings.push((name.clone(), "ppo", ps));
                add_result_files(&mut record, &opts.out, &grad, &opts.out)?;
                add_result_files(&mut record, &opts.out, &ppo, &ppo_dir)?;
                let (gb, pb) = (grad.best_loss.expect("ran").total, ppo.best_loss.expect("ran").total);
                rows.push(vec![
                    name.clone(),
                    grad.critic_calls.to_string(),
                    ppo.critic_calls.to_string(),
                    f(gb),
                    f(pb),
                    f(grad.p_yes_best),
                    f(ppo.p_yes_best),
                    f(grad.p_yes_baseline),
                    (gb <= pb).to_string(),
                ]);
                record.tasks.push(task_record(&name, config, &entry.overrides, None));
            }
            Err(e) => {
                failures.push((name.clone(), e.to_string()));
                record.tasks.push(task_record(&name, config, &entry.overrides, Some(e.to_string())));
            }
        }
    }
    let path = opts.out.join(COMPARE_CSV);
    write_text(&path, &csv(&COMPARE_HEADER, &rows))?;
    record.add_output(&opts.out, &path).map_err(task_err)?;
    write_timings(&opts.out, &timings, &mut record)?;
    record.write(&opts.out, RECORD_FILE).map_err(task_err)?;
    Ok(RunSummary { record, failures })
}

// ----------------------------------------------------------------- eval

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub results: PathBuf,
    pub survey: Option<PathBuf>,
    pub judge: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub args: Vec<String>,
}

impl EvalOptions {
    pub fn new(results: impl Into<PathBuf>) -> Self {
        Self {
            results: results.into(),
            survey: None,
            judge: None,
            out: None,
            args: Vec::new(),
        }
    }
}

pub const EVAL_REPORT: &str = "eval_report.csv";
pub const EVAL_REPORT_HEADER: [&str; 14] = [
    "scenario",
    "method",
    "p_yes",
    "success",
    "d_temp",
    "frpd_to_baseline",
    "bg_lpips",
    "bg_ms_ssim",
    "bg_l1",
    "d_bg_raw",
    "d_bg_minmax",
    "drift",
    "flatness",
    "pattern_corr",
];
pub const EVAL_SUMMARY: &str = "eval_summary.csv";
pub const EVAL_SUMMARY_HEADER: [&str; 8] = [
    "method",
    "scenarios",
    "mean_p_yes",
    "success_rate",
    "mean_d_temp",
    "mean_d_bg_raw",
    "mean_drift",
    "mean_pattern_corr",
];
pub const SURVEY_REPORT: &str = "survey_report.csv";
pub const SURVEY_HEADER: [&str; 7] = ["scenario", "method", "raters", "win", "top3", "avg", "achieved"];
pub const JUDGE_REPORT: &str = "judge_report.csv";
pub const JUDGE_HEADER: [&str; 8] = ["scenario", "method", "ea", "mq", "sp", "vq", "s_vlm", "s_overall"];
pub const PLOTS_DIR: &str = "plots";

struct MethodMetrics {
    scenario: String,
    method: String,
    p_yes: f64,
    d_temp: f64,
    frpd_base: f64,
    bg: condtune::metrics::BgComponents,
    drift: f64,
    flatness: f64,
    corr: f64,
}

fn require(path: PathBuf) -> Result<PathBuf, CliError> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::Invalid(format!("missing input {}", path.display())))
    }
}

fn method_metrics(
    problem: &TuningProblem<'_>,
    scenario: &str,
    method: &str,
    clip: &VideoClip,
) -> Result<MethodMetrics, CliError> {
    let pl = problem.pipeline;
    let task = &problem.task;
    let cfg = &problem.config;
    let (h, w) = (clip.dims().height, clip.dims().width);
    let critic = pl
        .critic
        .evaluate(clip, &problem.indices, &problem.template, cfg.variant)
        .map_err(task_err)?;
    let start = task.preserved - 1;
    Ok(MethodMetrics {
        scenario: scenario.to_string(),
        method: method.to_string(),
        p_yes: critic.p_yes,
        d_temp: temporal_distance(&pl.frpd, clip, cfg.n_pairs).map_err(task_err)?,
        frpd_base: pl.frpd.distance(clip.frames(), problem.baseline.frames()).map_err(task_err)?,
        bg: bg_distance(&pl.frpd, &task.source, clip, &all_background_mask(h, w)).map_err(task_err)?,
        drift: global_drift(clip).mean_magnitude,
        flatness: motion_flatness(clip),
        corr: pl
            .critic
            .pattern_correlation(clip, &problem.template, start)
            .unwrap_or(0.0),
    })
}

fn trace_plot(title: &str, trace_path: &Path) -> Result<String, CliError> {
    let text = std::fs::read_to_string(trace_path).map_err(|e| invalid(format!("{}: {e}", trace_path.display())))?;
    let rows = parse_trace(&text).map_err(|e| invalid(format!("{}: {e}", trace_path.display())))?;
    let col = |k: usize| rows.iter().map(|r| r.1[k]).collect::<Vec<f64>>();
    Ok(line_plot(
        title,
        &[
            ("L_vlm", col(0)),
            ("L_latent", col(1)),
            ("L_lpips", col(2)),
            ("L_temp", col(3)),
            ("total", col(4)),
        ],
    ))
}

fn parse_judge_csv(text: &str) -> Result<Vec<(String, String, EvalScores)>, CliError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with("scenario")) {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 6 && cols.len() != 12 {
            return Err(CliError::Invalid(format!("judge line {}: expected 6 or 12 columns", i + 1)));
        }
        let nums = cols[2..]
            .iter()
            .map(|c| c.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| CliError::Invalid(format!("judge line {}: unparseable score", i + 1)))?;
        let modality = (nums.len() == 10).then(|| <[f64; 6]>::try_from(&nums[4..]).expect("six values"));
        let s = EvalScores::new(nums[0], nums[1], nums[2], nums[3], modality)
            .map_err(|e| CliError::Invalid(format!("judge line {}: {e}", i + 1)))?;
        out.push((cols[0].to_string(), cols[1].to_string(), s));
    }
    Ok(out)
}

/// Metric report over a results directory written by `tune` or `compare`.
/// Survey and judge files are optional.
pub fn cmd_eval(opts: &EvalOptions) -> Result<RunRecord, CliError> {
    let results = &opts.results;
    let record_path = require(results.join(RECORD_FILE))?;
    let run = RunRecord::read(results).map_err(|e| invalid(format!("{}: {e}", record_path.display())))?;
    let manifest_path = run
        .manifest
        .clone()
        .ok_or_else(|| CliError::Invalid(format!("{} names no manifest", record_path.display())))?;
    let manifest = load_task_manifest(require(manifest_path)?).map_err(invalid)?;
    let out = opts.out.clone().unwrap_or_else(|| results.clone());
    let plots = out.join(PLOTS_DIR);
    create_dir(&plots)?;
    let mut record = RunRecord::new("eval", opts.args.clone(), run.seed);
    record.manifest = run.manifest.clone();
    record.config = run.config.clone();

    let pipelines = Pipelines::for_tasks(run.seed, manifest.tasks())?;
    let mut metrics: Vec<MethodMetrics> = Vec::new();
    for task_rec in run.tasks.iter().filter(|t| t.ok) {
        let entry = manifest
            .entries
            .iter()
            .find(|e| e.task.name == task_rec.name)
            .ok_or_else(|| CliError::Invalid(format!("task `{}` is not in the manifest", task_rec.name)))?;
        let pairs: Vec<(String, String)> = task_rec.config.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        let config = resolve_config(run.seed, &[&pairs])?;
        let pipeline = pipelines.get(entry.task.source.dims());
        let problem = TuningProblem::new(pipeline, &entry.task, &config).map_err(task_err)?;
        let name = &entry.task.name;

        let mut rows = vec![method_metrics(&problem, name, "baseline", &problem.baseline)?];
        for (method, dir) in [("gradient", results.clone()), ("ppo", results.join(PPO_DIR))] {
            let clip_path = dir.join(format!("{name}.vclip"));
            let trace_path = dir.join(format!("{name}.tres"));
            if method == "ppo" && !clip_path.exists() {
                continue;
            }
            let clip = read_clip(require(clip_path)?).map_err(invalid)?;
            rows.push(method_metrics(&problem, name, method, &clip)?);
            let svg = trace_plot(&format!("{name} ({method})"), &require(trace_path)?)?;
            let svg_path = plots.join(format!("{name}.{method}.svg"));
            write_text(&svg_path, &svg)?;
            record.add_output(&out, &svg_path).map_err(task_err)?;
        }
        metrics.extend(rows);
    }

    let mut report_rows = Vec::new();
    let mut start = 0;
    while start < metrics.len() {
        let end = start + metrics[start..].iter().take_while(|m| m.scenario == metrics[start].scenario).count();
        let raw: Vec<f64> = metrics[start..end].iter().map(|m| m.bg.combined()).collect();
        for (m, norm) in metrics[start..end].iter().zip(min_max_normalize(&raw)) {
            report_rows.push(vec![
                m.scenario.clone(),
                m.method.clone(),
                f(m.p_yes),
                (m.p_yes > 0.5).to_string(),
                f(m.d_temp),
                f(m.frpd_base),
                f(m.bg.lpips),
                f(m.bg.ms_ssim),
                f(m.bg.l1),
                f(m.bg.combined()),
                f(norm),
                f(m.drift),
                f(m.flatness),
                f(m.corr),
            ]);
        }
        start = end;
    }
    let path = out.join(EVAL_REPORT);
    write_text(&path, &csv(&EVAL_REPORT_HEADER, &report_rows))?;
    record.add_output(&out, &path).map_err(task_err)?;

    let mut methods: Vec<&str> = Vec::new();
    for m in &metrics {
        if !methods.contains(&m.method.as_str()) {
            methods.push(&m.method);
        }
    }
    let summary_rows: Vec<Vec<String>> = methods
        .iter()
        .map(|&method| {
            let ms: Vec<&MethodMetrics> = metrics.iter().filter(|m| m.method == method).collect();
            let n = ms.len() as f64;
            let mean = |g: &dyn Fn(&MethodMetrics) -> f64| ms.iter().map(|m| g(m)).sum::<f64>() / n;
            vec![
                method.to_string(),
                ms.len().to_string(),
                f(mean(&|m| m.p_yes)),
                f(mean(&|m| f64::from(u8::from(m.p_yes > 0.5)))),
                f(mean(&|m| m.d_temp)),
                f(mean(&|m| m.bg.combined())),
                f(mean(&|m| m.drift)),
                f(mean(&|m| m.corr)),
            ]
        })
        .collect();
    let path = out.join(EVAL_SUMMARY);
    write_text(&path, &csv(&EVAL_SUMMARY_HEADER, &summary_rows))?;
    record.add_output(&out, &path).map_err(task_err)?;

    if let Some(survey) = &opts.survey {
        let text = std::fs::read_to_string(require(survey.clone())?)
            .map_err(|e| invalid(format!("{}: {e}", survey.display())))?;
        let stats = survey_aggregate(&parse_survey_csv(&text).map_err(invalid)?).map_err(invalid)?;
        let rows: Vec<Vec<String>> = stats
            .iter()
            .map(|s| {
                vec![
                    s.scenario.clone(),
                    s.method.clone(),
                    s.raters.to_string(),
                    format!("{:.2}", s.win),
                    format!("{:.2}", s.top3),
                    format!("{:.2}", s.avg),
                    format!("{:.2}", s.achieved),
                ]
            })
            .collect();
        let path = out.join(SURVEY_REPORT);
        write_text(&path, &csv(&SURVEY_HEADER, &rows))?;
        record.add_output(&out, &path).map_err(task_err)?;
    }

    if let Some(judge) = &opts.judge {
        let text = std::fs::read_to_string(require(judge.clone())?)
            .map_err(|e| invalid(format!("{}: {e}", judge.display())))?;
        let rows: Vec<Vec<String>> = parse_judge_csv(&text)?
            .into_iter()
            .map(|(scenario, method, s)| {
                vec![
                    scenario,
                    method,
                    f(s.ea),
                    f(s.mq),
                    f(s.sp),
                    f(s.vq),
                    format!("{:.2}", s.s_vlm),
                    s.s_overall.map_or(String::new(), |v| format!("{v:.2}")),
                ]
            })
            .collect();
        let path = out.join(JUDGE_REPORT);
        write_text(&path, &csv(&JUDGE_HEADER, &rows))?;
        record.add_output(&out, &path).map_err(task_err)?;
    }

    record.write(&out, EVAL_RECORD_FILE).map_err(task_err)?;
    Ok(record)
}

// ------------------------------------------------------------ gradcheck

pub fn cmd_gradcheck(seed: u64) -> Result<GradcheckReport, CliError> {
    run_gradcheck(seed).map_err(task_err)
}

/// Exit code for a finished gradcheck.
pub fn gradcheck_exit(report: &GradcheckReport) -> i32 {
    if report.passed() {
        0
    } else {
        EXIT_GRADCHECK_FAILURE
    }
}
