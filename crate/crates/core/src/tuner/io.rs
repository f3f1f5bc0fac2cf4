//! Tuning result files: `.alat` controls and a `.tres` CSV trace.

use std::path::{Path, PathBuf};

use super::optimize::{TraceRow, TuneResult};
use crate::error::{Error, Result};
use crate::media::{write_clip, write_latent};

pub const TRACE_HEADER: &str = "iter,l_vlm,l_latent,l_lpips,l_temp,total,lr";

/// Trace as CSV text. Floats use shortest round-trip formatting.
pub fn render_trace(trace: &[TraceRow]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in trace {
        let l = &r.loss;
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            l.iter, l.l_vlm, l.l_latent, l.l_lpips, l.l_temp, l.total, r.lr
        ));
    }
    out
}

/// Parses a trace back into `(iter, [l_vlm, l_latent, l_lpips, l_temp, total, lr])`.
pub fn parse_trace(text: &str) -> Result<Vec<(usize, [f64; 6])>> {
    let mut lines = text.lines();
    if lines.next() != Some(TRACE_HEADER) {
        return Err(Error::Precondition(format!("trace header must be `{TRACE_HEADER}`")));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let cols: Vec<&str> = l.split(',').collect();
            if cols.len() != 7 {
                return Err(Error::Precondition(format!("trace row `{l}` needs 7 columns")));
            }
            let bad = || Error::Precondition(format!("unparseable trace row `{l}`"));
            let iter = cols[0].parse().map_err(|_| bad())?;
            let mut v = [0.0; 6];
            for (slot, c) in v.iter_mut().zip(&cols[1..]) {
                *slot = c.parse().map_err(|_| bad())?;
            }
            Ok((iter, v))
        })
        .collect()
}

/// Paths written by [`write_tune_result`].
#[derive(Debug, Clone, PartialEq)]
pub struct ResultFiles {
    pub alpha: PathBuf,
    pub residual: PathBuf,
    pub trace: PathBuf,
    pub clip: PathBuf,
}

impl ResultFiles {
    pub fn for_task(dir: &Path, name: &str) -> Self {
        Self {
            alpha: dir.join(format!("{name}.alpha.alat")),
            residual: dir.join(format!("{name}.dv.alat")),
            trace: dir.join(format!("{name}.tres")),
            clip: dir.join(format!("{name}.vclip")),
        }
    }

    pub fn all(&self) -> [&PathBuf; 4] {
        [&self.alpha, &self.residual, &self.trace, &self.clip]
    }
}

pub fn write_tune_result(result: &TuneResult, dir: &Path) -> Result<ResultFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = ResultFiles::for_task(dir, &result.task);
    write_latent(result.best.alpha.values(), &files.alpha)?;
    write_latent(&result.best.residual, &files.residual)?;
    std::fs::write(&files.trace, render_trace(&result.trace)).map_err(|e| Error::io(&files.trace, e))?;
    write_clip(&result.final_clip, &files.clip)?;
    Ok(files)
}
