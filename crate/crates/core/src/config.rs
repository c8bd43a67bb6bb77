//! Line-based `key=value` run configuration.
//!
//! ```text
//! # Wiener sweep
//! model = wiener
//! mu = -0.5
//! sigma2 = 10, 20, 30
//! nu = -80
//! S = -50
//! x = -70
//! p_R = 0.1, 0.5
//! ```
//!
//! Model parameters and `p_R` accept comma-separated lists; every
//! combination is one run.

use std::collections::BTreeMap;

use crate::diffusion::ElasticThreshold;
use crate::error::{Error, Result};
use crate::models::{FellerParams, Model, OuParams, WienerParams};
use crate::moments::{summary, MomentSummary};
use crate::report::OutputFormat;
use crate::tables::TABLE_REFLECTING_PROBABILITIES;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelFamily {
    Wiener,
    Ou,
    Feller,
}

impl ModelFamily {
    pub fn parameter_names(self) -> &'static [&'static str] {
        match self {
            ModelFamily::Wiener => &["mu", "sigma2", "nu"],
            ModelFamily::Ou => &["theta", "rho", "sigma2", "nu"],
            ModelFamily::Feller => &["theta", "rho", "xi", "nu"],
        }
    }

    fn build(self, v: &[f64]) -> Result<Model> {
        Ok(match self {
            ModelFamily::Wiener => Model::Wiener(WienerParams::new(v[0], v[1], v[2])?),
            ModelFamily::Ou => Model::Ou(OuParams::new(v[0], v[1], v[2], v[3])?),
            ModelFamily::Feller => Model::Feller(FellerParams::new(v[0], v[1], v[2], v[3])?),
        })
    }
}

impl std::str::FromStr for ModelFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wiener" => Ok(ModelFamily::Wiener),
            "ou" | "ornstein-uhlenbeck" => Ok(ModelFamily::Ou),
            "feller" => Ok(ModelFamily::Feller),
            "custom" => Err(Error::Config(
                "custom diffusions need coefficient functions; use the library API".into(),
            )),
            other => Err(Error::Config(format!("unknown model '{other}' (wiener, ou, feller)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: Option<ModelFamily>,
    pub params: BTreeMap<String, Vec<f64>>,
    pub s: Option<f64>,
    pub x: Option<f64>,
    pub reflecting_probabilities: Vec<f64>,
    pub tol: f64,
    pub format: OutputFormat,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: None,
            params: BTreeMap::new(),
            s: None,
            x: None,
            reflecting_probabilities: TABLE_REFLECTING_PROBABILITIES.to_vec(),
            tol: DEFAULT_TOL,
            format: OutputFormat::Csv,
            seed: DEFAULT_SEED,
        }
    }
}

fn canonical_key(key: &str) -> String {
    match key {
        "S" | "s" | "threshold" => "S".into(),
        "p_R" | "p_r" | "pR" | "pr" => "p_R".into(),
        "sigma^2" | "sigma2" => "sigma2".into(),
        other => other.to_ascii_lowercase(),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("key '{key}': '{}' is not a number", v.trim())))
        })
        .collect()
}

fn single(key: &str, value: &str) -> Result<f64> {
    match parse_list(key, value)?.as_slice() {
        [v] => Ok(*v),
        _ => Err(Error::Config(format!("key '{key}' takes one value"))),
    }
}

impl RunConfig {
    /// Parses a whole file; errors name the offending line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            cfg.set_pair(line)
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, strip_config(e))))?;
        }
        Ok(cfg)
    }

    /// Applies one `key=value` assignment (file line or command-line override).
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, found '{pair}'")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = canonical_key(key);
        match key.as_str() {
            "model" => self.model = Some(value.parse()?),
            "S" => self.s = Some(single(&key, value)?),
            "x" => self.x = Some(single(&key, value)?),
            "p_R" => {
                let ps = parse_list(&key, value)?;
                if let Some(p) = ps.iter().find(|p| !(0.0..1.0).contains(*p)) {
                    return Err(Error::Config(format!("p_R = {p} is outside [0, 1)")));
                }
                self.reflecting_probabilities = ps;
            }
            "tol" => {
                let t = single(&key, value)?;
                if !(t > 0.0) {
                    return Err(Error::Config(format!("tol = {t} must be positive")));
                }
                self.tol = t;
            }
            "format" => self.format = value.parse()?,
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| Error::Config(format!("seed '{value}' is not an unsigned integer")))?
            }
            "mu" | "sigma2" | "nu" | "theta" | "rho" | "xi" => {
                self.params.insert(key.clone(), parse_list(&key, value)?);
            }
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Every model in the sweep, in row-major order of the parameter lists.
    pub fn models(&self) -> Result<Vec<Model>> {
        let family = self.model.ok_or_else(|| Error::Config("missing key 'model'".into()))?;
        let names = family.parameter_names();
        let lists = names
            .iter()
            .map(|n| {
                self.params
                    .get(*n)
                    .ok_or_else(|| Error::Config(format!("missing key '{n}' for this model")))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(extra) = self.params.keys().find(|k| !names.contains(&k.as_str())) {
            return Err(Error::Config(format!("key '{extra}' does not apply to this model")));
        }
        let mut combos: Vec<Vec<f64>> = vec![vec![]];
        for list in lists {
            combos = combos
                .into_iter()
                .flat_map(|c| {
                    list.iter().map(move |v| {
                        let mut c = c.clone();
                        c.push(*v);
                        c
                    })
                })
                .collect();
        }
        combos.iter().map(|c| family.build(c)).collect()
    }

    pub fn threshold(&self) -> Result<f64> {
        self.s.ok_or_else(|| Error::Config("missing key 'S'".into()))
    }

    pub fn start(&self) -> Result<f64> {
        self.x.ok_or_else(|| Error::Config("missing key 'x'".into()))
    }
}

fn strip_config(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

/// One output row of a moments run.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentRow {
    pub model: Model,
    pub s: f64,
    pub x: f64,
    pub reflecting_probability: f64,
    pub summary: MomentSummary,
}

/// Computes every (model, `p_R`) cell of the configuration.
pub fn moment_rows(cfg: &RunConfig) -> Result<Vec<MomentRow>> {
    let s = cfg.threshold()?;
    let x = cfg.start()?;
    let mut rows = Vec::new();
    for model in cfg.models()? {
        let spec = model.spec();
        for &p in &cfg.reflecting_probabilities {
            let t = ElasticThreshold::from_reflecting_probability(s, p)?;
            rows.push(MomentRow {
                model,
                s,
                x,
                reflecting_probability: p,
                summary: summary(&spec, &t, x, cfg.tol)?,
            });
        }
    }
    Ok(rows)
}

/// `name=value` pairs describing a model, e.g. `mu=-0.5;sigma2=10;nu=-80`.
pub fn describe_model(m: &Model) -> String {
    let v: Vec<f64> = match m {
        Model::Wiener(p) => vec![p.mu, p.sigma2, p.nu],
        Model::Ou(p) => vec![p.theta, p.rho, p.sigma2, p.nu],
        Model::Feller(p) => vec![p.theta, p.rho, p.xi, p.nu],
    };
    let family: ModelFamily = m.name().parse().expect("built-in model name");
    family
        .parameter_names()
        .iter()
        .zip(v)
        .map(|(n, v)| format!("{n}={v}"))
        .collect::<Vec<_>>()
        .join(";")
}
