use std::path::{Path, PathBuf};

use crate::config::{parse_floats, KeyValues};
use crate::error::{Error, Result};
use crate::imaging::{Rect, RegionSpec, DEFAULT_DYNAMIC_RANGE_DB};
use crate::lrjs::read_real;
use crate::model::{RfFrame, SamplingScheme, SolverConfig};

pub const DEFAULT_SR_LIST: [f64; 4] = [0.05, 0.1, 0.2, 0.3];

/// Everything a recover, evaluate or sweep run needs besides the input data.
/// Built from a flat config file, then overridden by flags.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub frame: PathBuf,
    pub pattern: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub cfg: SolverConfig,
    pub sr_list: Vec<f64>,
    pub scheme: SamplingScheme,
    pub seed: u64,
    pub noise_sigma: f64,
    pub noise_seed: Option<u64>,
    pub dynamic_range_db: f64,
    pub target: Option<Rect>,
    pub background: Option<Rect>,
}

const KNOWN_KEYS: &[&str] = &[
    "gamma",
    "alpha",
    "mu",
    "max_iters",
    "tol",
    "nuclear_weight",
    "sr",
    "sr_list",
    "scheme",
    "seed",
    "noise_sigma",
    "noise_seed",
    "dynamic_range_db",
    "target",
    "background",
    "pattern",
];

impl ExperimentConfig {
    pub fn new(frame: PathBuf, out_dir: PathBuf) -> Self {
        Self {
            frame,
            pattern: None,
            out_dir,
            cfg: SolverConfig::default(),
            sr_list: DEFAULT_SR_LIST.to_vec(),
            scheme: SamplingScheme::UniformGlobal,
            seed: 1,
            noise_sigma: 0.0,
            noise_seed: None,
            dynamic_range_db: DEFAULT_DYNAMIC_RANGE_DB,
            target: None,
            background: None,
        }
    }

    /// Applies a config file on top of the defaults. `sr` and `sr_list` are
    /// synonyms; `sr_list` wins if both are present.
    pub fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        if let Some(k) = kv.keys().find(|k| !KNOWN_KEYS.contains(k)) {
            return Err(Error::Config(format!("unknown experiment key {k:?}")));
        }
        macro_rules! set {
            ($key:literal, $field:expr) => {
                if let Some(v) = kv.parse_value($key)? {
                    $field = v;
                }
            };
        }
        set!("gamma", self.cfg.gamma);
        set!("alpha", self.cfg.alpha);
        set!("mu", self.cfg.mu);
        set!("max_iters", self.cfg.max_iters);
        set!("tol", self.cfg.tol);
        set!("nuclear_weight", self.cfg.nuclear_weight);
        set!("scheme", self.scheme);
        set!("seed", self.seed);
        set!("noise_sigma", self.noise_sigma);
        set!("dynamic_range_db", self.dynamic_range_db);
        if let Some(v) = kv.parse_value("noise_seed")? {
            self.noise_seed = Some(v);
        }
        if let Some(v) = kv.parse_value("target")? {
            self.target = Some(v);
        }
        if let Some(v) = kv.parse_value("background")? {
            self.background = Some(v);
        }
        if let Some(p) = kv.get("pattern") {
            self.pattern = Some(PathBuf::from(p));
        }
        if let Some(v) = kv.get("sr") {
            self.sr_list = parse_floats(v)?;
        }
        if let Some(v) = kv.get("sr_list") {
            self.sr_list = parse_floats(v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        if self.sr_list.is_empty() {
            return Err(Error::Config("empty sampling-rate list".into()));
        }
        if let Some(sr) = self.sr_list.iter().find(|&&sr| !(sr > 0.0 && sr <= 1.0)) {
            return Err(Error::Config(format!("sampling rate {sr} is outside (0, 1]")));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if !(self.dynamic_range_db > 0.0 && self.dynamic_range_db.is_finite()) {
            return Err(Error::Config(format!(
                "dynamic_range_db must be positive, got {}",
                self.dynamic_range_db
            )));
        }
        Ok(())
    }

    pub fn noise_seed(&self) -> u64 {
        self.noise_seed.unwrap_or(self.seed.wrapping_add(1))
    }

    /// `None` when neither region is set, an error when only one is.
    pub fn regions(&self) -> Result<Option<RegionSpec>> {
        match (self.target, self.background) {
            (Some(t), Some(b)) => RegionSpec::new(t, b).map(Some),
            (None, None) => Ok(None),
            (None, Some(_)) => Err(Error::Config("--background given without --target".into())),
            (Some(_), None) => Err(Error::Config("--target given without --background".into())),
        }
    }
}

/// `frame.lrjs` -> `frame.meta`.
pub fn meta_path(path: &Path) -> PathBuf {
    path.with_extension("meta")
}

pub fn read_meta(path: &Path) -> Result<Option<KeyValues>> {
    let meta = meta_path(path);
    if meta.exists() {
        KeyValues::read(meta).map(Some)
    } else {
        Ok(None)
    }
}

pub fn write_meta(path: &Path, kv: &KeyValues) -> Result<()> {
    std::fs::write(meta_path(path), kv.to_text())?;
    Ok(())
}

/// Reads an LRJS frame; `fc` and `fs` come from the flags, else from the
/// `.meta` sidecar.
pub fn load_frame(path: &Path, fc: Option<f64>, fs: Option<f64>) -> Result<RfFrame> {
    let data = read_real(path)?;
    let meta = read_meta(path)?;
    let from_meta = |key: &str| -> Result<Option<f64>> {
        match &meta {
            Some(kv) => kv.parse_value(key),
            None => Ok(None),
        }
    };
    let missing = |what: &str| {
        Error::Config(format!(
            "no {what} for {}: pass --{what} or keep {} next to it",
            path.display(),
            meta_path(path).display()
        ))
    };
    let fc = match fc {
        Some(v) => v,
        None => from_meta("fc")?.ok_or_else(|| missing("fc"))?,
    };
    let fs = match fs {
        Some(v) => v,
        None => from_meta("fs")?.ok_or_else(|| missing("fs"))?,
    };
    RfFrame::new(data, fs, fc)
}
