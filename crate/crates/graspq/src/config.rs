//! `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored, every key may appear once and
//! unknown keys are rejected. [`RunConfig::to_text`] writes every key, and
//! parsing that text gives back the same configuration.

use std::fmt::Write as _;

use graspq_core::gqn::ViewMode;
use graspq_core::servo::{Algorithm, TrainConfig};
use graspq_core::world::ObjectKind;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, found `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` is set twice")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: invalid value `{value}` for `{key}`: {reason}")]
    InvalidValue {
        line: usize,
        key: String,
        value: String,
        reason: String,
    },
    #[error("inconsistent configuration: {0}")]
    Inconsistent(String),
}

/// Everything a `graspq` command needs besides file paths.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    /// Greedy episodes per object kind in `eval`.
    pub eval_episodes: usize,
    /// Seeds per cell of the ablation grid, counted up from `seed`.
    pub ablate_seeds: usize,
    /// Greedy episodes written out as image frames after training.
    pub debug_frames: usize,
    /// Worker threads for the ablation grid; 0 picks the core count.
    pub jobs: usize,
}

/// The nominal [`TrainConfig`] scaled down to what one CPU core trains in
/// about two minutes: 16×16 images, a narrower network and one gradient
/// step every four environment steps at a higher learning rate.
pub fn desk_scale() -> TrainConfig {
    let mut c = TrainConfig::default();
    c.world.image_size = 16;
    c.network.image_size = 16;
    c.network.channels = [3, 6, 6];
    c.network.paddings = [0, 2, 1];
    c.network.fusion_channels = 6;
    c.network.vision_hidden = 32;
    c.network.motor_hidden = 32;
    c.network.head_hidden = 32;
    c.update_every = 4;
    c.learning_rate = 1e-3;
    c
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: desk_scale(),
            eval_episodes: 200,
            ablate_seeds: 5,
            debug_frames: 0,
            jobs: 0,
        }
    }
}

type Setter = fn(&mut RunConfig, &str) -> Result<(), String>;
type Getter = fn(&RunConfig) -> String;

fn num<T: std::str::FromStr>(v: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| e.to_string())
}

fn positive(v: &str) -> Result<usize, String> {
    match num::<usize>(v)? {
        0 => Err("must be positive".into()),
        n => Ok(n),
    }
}

fn unit(v: &str) -> Result<f64, String> {
    let x: f64 = num(v)?;
    if (0.0..=1.0).contains(&x) {
        Ok(x)
    } else {
        Err("must lie in [0, 1]".into())
    }
}

fn triple(v: &str) -> Result<[usize; 3], String> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err("expected three comma-separated integers".into());
    }
    let mut out = [0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = num(p)?;
    }
    Ok(out)
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn objects(v: &str) -> Result<Vec<ObjectKind>, String> {
    if v == "all" {
        return Ok(ObjectKind::ALL.to_vec());
    }
    let mut kinds = Vec::new();
    for part in v.split(',').map(str::trim) {
        let k: ObjectKind = part.parse().map_err(|e: graspq_core::Error| e.to_string())?;
        if kinds.contains(&k) {
            return Err(format!("`{k}` listed twice"));
        }
        kinds.push(k);
    }
    Ok(kinds)
}

const KEYS: &[(&str, Setter, Getter)] = &[
    ("algorithm", |c, v| { c.train.algorithm = v.parse().map_err(|e: graspq_core::Error| e.to_string())?; Ok(()) }, |c| c.train.algorithm.to_string()),
    ("view_mode", |c, v| { c.train.network.view_mode = v.parse().map_err(|e: graspq_core::Error| e.to_string())?; Ok(()) }, |c| c.train.network.view_mode.to_string()),
    ("objects", |c, v| { c.train.objects = objects(v)?; Ok(()) }, |c| join(&c.train.objects)),
    ("episodes", |c, v| { c.train.episodes = positive(v)?; Ok(()) }, |c| c.train.episodes.to_string()),
    ("seed", |c, v| { c.train.seed = num(v)?; Ok(()) }, |c| c.train.seed.to_string()),
    ("gamma", |c, v| {
        let g: f64 = num(v)?;
        if !(0.0..1.0).contains(&g) {
            return Err("gamma must lie in [0, 1)".into());
        }
        c.train.gamma = g;
        Ok(())
    }, |c| c.train.gamma.to_string()),
    ("learning_rate", |c, v| {
        let lr: f64 = num(v)?;
        if !(lr > 0.0 && lr.is_finite()) {
            return Err("must be positive".into());
        }
        c.train.learning_rate = lr;
        Ok(())
    }, |c| c.train.learning_rate.to_string()),
    ("alpha", |c, v| {
        let a = unit(v)?;
        if a == 0.0 {
            return Err("must be positive".into());
        }
        c.train.alpha = a;
        Ok(())
    }, |c| c.train.alpha.to_string()),
    ("epsilon_start", |c, v| { c.train.epsilon.start = unit(v)?; Ok(()) }, |c| c.train.epsilon.start.to_string()),
    ("epsilon_end", |c, v| { c.train.epsilon.end = unit(v)?; Ok(()) }, |c| c.train.epsilon.end.to_string()),
    ("epsilon_decay_fraction", |c, v| { c.train.epsilon.decay_fraction = unit(v)?; Ok(()) }, |c| c.train.epsilon.decay_fraction.to_string()),
    ("replay_capacity", |c, v| { c.train.replay_capacity = positive(v)?; Ok(()) }, |c| c.train.replay_capacity.to_string()),
    ("batch_size", |c, v| { c.train.batch_size = positive(v)?; Ok(()) }, |c| c.train.batch_size.to_string()),
    ("target_sync", |c, v| { c.train.target_sync = positive(v)? as u64; Ok(()) }, |c| c.train.target_sync.to_string()),
    ("warmup", |c, v| { c.train.warmup = num(v)?; Ok(()) }, |c| c.train.warmup.to_string()),
    ("update_every", |c, v| { c.train.update_every = positive(v)? as u64; Ok(()) }, |c| c.train.update_every.to_string()),
    ("image_size", |c, v| {
        let n = positive(v)?;
        c.train.world.image_size = n;
        c.train.network.image_size = n;
        Ok(())
    }, |c| c.train.world.image_size.to_string()),
    ("channels", |c, v| { c.train.network.channels = triple(v)?; Ok(()) }, |c| join(&c.train.network.channels)),
    ("paddings", |c, v| { c.train.network.paddings = triple(v)?; Ok(()) }, |c| join(&c.train.network.paddings)),
    ("fusion_channels", |c, v| { c.train.network.fusion_channels = positive(v)?; Ok(()) }, |c| c.train.network.fusion_channels.to_string()),
    ("vision_hidden", |c, v| { c.train.network.vision_hidden = positive(v)?; Ok(()) }, |c| c.train.network.vision_hidden.to_string()),
    ("motor_hidden", |c, v| { c.train.network.motor_hidden = positive(v)?; Ok(()) }, |c| c.train.network.motor_hidden.to_string()),
    ("head_hidden", |c, v| { c.train.network.head_hidden = positive(v)?; Ok(()) }, |c| c.train.network.head_hidden.to_string()),
    ("max_steps", |c, v| { c.train.world.max_steps = positive(v)? as u32; Ok(()) }, |c| c.train.world.max_steps.to_string()),
    ("supersample", |c, v| { c.train.world.supersample = positive(v)?; Ok(()) }, |c| c.train.world.supersample.to_string()),
    ("eval_episodes", |c, v| { c.eval_episodes = positive(v)?; Ok(()) }, |c| c.eval_episodes.to_string()),
    ("ablate_seeds", |c, v| { c.ablate_seeds = positive(v)?; Ok(()) }, |c| c.ablate_seeds.to_string()),
    ("debug_frames", |c, v| { c.debug_frames = num(v)?; Ok(()) }, |c| c.debug_frames.to_string()),
    ("jobs", |c, v| { c.jobs = num(v)?; Ok(()) }, |c| c.jobs.to_string()),
];

impl RunConfig {
    /// Defaults overridden by the keys in `text`.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        let mut seen: Vec<&str> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line,
                    text: raw.trim().to_string(),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            let Some((name, set, _)) = KEYS.iter().find(|(k, _, _)| *k == key) else {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                });
            };
            if seen.contains(name) {
                return Err(ConfigError::Duplicate {
                    line,
                    key: key.to_string(),
                });
            }
            seen.push(name);
            set(&mut config, value).map_err(|reason| ConfigError::InvalidValue {
                line,
                key: key.to_string(),
                value: value.to_string(),
                reason,
            })?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.train
            .validate()
            .map_err(|e| ConfigError::Inconsistent(e.to_string()))
    }

    /// Every key with its current value, one per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (key, _, get) in KEYS {
            let _ = writeln!(out, "{key} = {}", get(self));
        }
        out
    }

    /// FNV-1a of [`Self::to_text`].
    pub fn hash(&self) -> u64 {
        fnv1a(self.to_text().as_bytes())
    }

    /// Seeds of the ablation grid.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.ablate_seeds as u64).map(|i| self.train.seed + i).collect()
    }

    pub fn with_view(&self, view: ViewMode) -> Self {
        let mut c = self.clone();
        c.train.network.view_mode = view;
        c
    }

    pub fn with_algorithm(&self, algorithm: Algorithm) -> Self {
        let mut c = self.clone();
        c.train.algorithm = algorithm;
        c
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}
