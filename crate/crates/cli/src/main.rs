use std::process::ExitCode;

use clap::Parser;
use condtune_cli::cli::{Cli, Command};
use condtune_cli::{
    cmd_compare, cmd_eval, cmd_gradcheck, cmd_synth, cmd_tune, gradcheck_exit, resolve_seed, CliError, EvalOptions,
    RunOptions, RunSummary, SynthOptions, EXIT_INVALID_INPUT,
};

fn report_run(summary: &RunSummary) -> i32 {
    for (task, err) in &summary.failures {
        eprintln!("task `{task}` failed: {err}");
    }
    let ok = summary.record.tasks.iter().filter(|t| t.ok).count();
    println!("{ok}/{} tasks completed", summary.record.tasks.len());
    summary.exit_code()
}

fn run(cli: Cli, args: Vec<String>) -> Result<i32, CliError> {
    match cli.command {
        Command::Synth(a) => {
            let opts = SynthOptions {
                seed: resolve_seed(a.seed)?,
                out: a.out,
                count: a.count,
                dims: a.dims,
                args,
            };
            let record = cmd_synth(&opts)?;
            println!("wrote {} files to {}", record.outputs.len(), opts.out.display());
            Ok(0)
        }
        Command::Tune(a) => {
            let mut opts = RunOptions::new(a.manifest, a.out, resolve_seed(a.seed)?);
            opts.flags = a.tuning;
            opts.budget = a.budget;
            opts.workers = a.workers;
            opts.args = args;
            if let Some(b) = opts.budget {
                if b == 0 {
                    return Err(CliError::Invalid("--budget must be positive".into()));
                }
                opts.flags.iters.get_or_insert(b);
            }
            Ok(report_run(&cmd_tune(&opts)?))
        }
        Command::Compare(a) => {
            let mut opts = RunOptions::new(a.manifest, a.out, resolve_seed(a.seed)?);
            opts.flags = a.tuning;
            opts.budget = a.budget;
            opts.ppo_wall_clock = a.ppo_wall_clock;
            opts.workers = a.workers;
            opts.args = args;
            Ok(report_run(&cmd_compare(&opts)?))
        }
        Command::Eval(a) => {
            let record = cmd_eval(&EvalOptions {
                results: a.results,
                survey: a.survey,
                judge: a.judge,
                out: a.out,
                args,
            })?;
            println!("wrote {} files", record.outputs.len());
            Ok(0)
        }
        Command::Gradcheck(a) => {
            let report = cmd_gradcheck(resolve_seed(a.seed)?)?;
            print!("{}", report.render());
            Ok(gradcheck_exit(&report))
        }
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INVALID_INPUT as u8 } else { 0 });
        }
    };
    match run(cli, args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
