use crate::critic::{CriticVariant, SamplingSchedule};
use crate::error::{Error, Result};

/// Hyperparameters of one tuning run.
#[derive(Debug, Clone, PartialEq)]
pub struct TuningConfig {
    pub lambda_alpha: f64,
    pub lambda_v: f64,
    pub lambda_lpips: f64,
    pub lambda_temp: f64,
    /// Stabilizer inside `-ln(P_yes + ε)`.
    pub eps: f64,
    pub lr0: f64,
    pub max_iters: usize,
    pub patience: usize,
    /// Refinement steps that carry gradient.
    pub k_grad: usize,
    pub schedule: SamplingSchedule,
    pub n_frames: usize,
    /// Consecutive pairs in the temporal distance; `None` uses all of them.
    pub n_pairs: Option<usize>,
    pub variant: CriticVariant,
    pub seed: u64,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            lambda_alpha: 0.01,
            lambda_v: 0.001,
            lambda_lpips: 1.0,
            lambda_temp: 1.0,
            eps: 1e-6,
            lr0: 5e-3,
            max_iters: 30,
            patience: 15,
            k_grad: 8,
            schedule: SamplingSchedule::Uniform,
            n_frames: 8,
            n_pairs: None,
            variant: CriticVariant::Temporal,
            seed: 0,
        }
    }
}

/// Keys accepted by [`TuningConfig::set`].
pub const CONFIG_KEYS: [&str; 14] = [
    "lambda_alpha",
    "lambda_v",
    "lambda_lpips",
    "lambda_temp",
    "eps",
    "lr",
    "iters",
    "patience",
    "k_grad",
    "schedule",
    "n_frames",
    "n_pairs",
    "variant",
    "seed",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config {
        key: key.into(),
        message: format!("cannot parse `{value}`"),
    })
}

impl TuningConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: String| {
            Err(Error::Config {
                key: key.into(),
                message,
            })
        };
        for (key, v) in [
            ("lambda_alpha", self.lambda_alpha),
            ("lambda_v", self.lambda_v),
            ("lambda_lpips", self.lambda_lpips),
            ("lambda_temp", self.lambda_temp),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(key, format!("must be a finite non-negative number, got {v}"));
            }
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad("eps", format!("must be positive, got {}", self.eps));
        }
        if !(self.lr0 >= 0.0 && self.lr0.is_finite()) {
            return bad("lr", format!("must be non-negative, got {}", self.lr0));
        }
        if self.patience == 0 {
            return bad("patience", "must be positive".into());
        }
        if self.max_iters > 0 && self.patience > self.max_iters {
            return bad(
                "patience",
                format!("{} exceeds the iteration budget {}", self.patience, self.max_iters),
            );
        }
        if self.k_grad == 0 {
            return bad("k_grad", "must be positive".into());
        }
        if self.n_frames == 0 {
            return bad("n_frames", "must be positive".into());
        }
        if self.n_pairs == Some(0) {
            return bad("n_pairs", "must be positive".into());
        }
        Ok(())
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "lambda_alpha" => self.lambda_alpha = parse(key, value)?,
            "lambda_v" => self.lambda_v = parse(key, value)?,
            "lambda_lpips" => self.lambda_lpips = parse(key, value)?,
            "lambda_temp" => self.lambda_temp = parse(key, value)?,
            "eps" => self.eps = parse(key, value)?,
            "lr" => self.lr0 = parse(key, value)?,
            "iters" => self.max_iters = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "k_grad" => self.k_grad = parse(key, value)?,
            "schedule" => self.schedule = value.parse()?,
            "n_frames" => self.n_frames = parse(key, value)?,
            "n_pairs" => {
                self.n_pairs = match value {
                    "all" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "variant" => self.variant = value.parse()?,
            "seed" => self.seed = parse(key, value)?,
            _ => {
                return Err(Error::Config {
                    key: key.into(),
                    message: format!("unknown key; expected one of {}", CONFIG_KEYS.join(", ")),
                })
            }
        }
        Ok(())
    }

    /// Applies overrides in order, then validates.
    pub fn with_overrides(&self, overrides: &[(String, String)]) -> Result<Self> {
        let mut c = self.clone();
        for (k, v) in overrides {
            c.set(k, v)?;
        }
        c.validate()?;
        Ok(c)
    }

    /// `key=value` pairs covering every field, in [`CONFIG_KEYS`] order.
    pub fn snapshot(&self) -> Vec<(&'static str, String)> {
        vec![
            ("lambda_alpha", self.lambda_alpha.to_string()),
            ("lambda_v", self.lambda_v.to_string()),
            ("lambda_lpips", self.lambda_lpips.to_string()),
            ("lambda_temp", self.lambda_temp.to_string()),
            ("eps", self.eps.to_string()),
            ("lr", self.lr0.to_string()),
            ("iters", self.max_iters.to_string()),
            ("patience", self.patience.to_string()),
            ("k_grad", self.k_grad.to_string()),
            ("schedule", self.schedule.to_string()),
            ("n_frames", self.n_frames.to_string()),
            ("n_pairs", self.n_pairs.map_or("all".into(), |n| n.to_string())),
            ("variant", self.variant.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }
}
