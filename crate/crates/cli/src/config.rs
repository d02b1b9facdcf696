//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use radbif_core::{ContinuationConfig, NewtonConfig, NonlinearityModel, RadialGrid};
use sha2::{Digest, Sha256};

pub const KEYS: &[&str] = &[
    "model.name",
    "model.coeffs1",
    "model.coeffs2",
    "model.p1",
    "model.p2",
    "model.b1",
    "model.b2",
    "model.nu1",
    "model.nu2",
    "model.K",
    "grid.N",
    "grid.R",
    "grid.M",
    "newton.tol",
    "newton.max_iter",
    "cont.ds0",
    "cont.ds_min",
    "cont.ds_max",
    "cont.eps_step_off",
    "cont.lambda_stop_low",
    "out.dir",
];

/// Bad input: unknown keys, unparsable values, missing files. Maps to exit 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

fn defaults() -> BTreeMap<String, String> {
    let c = ContinuationConfig::default();
    let n = NewtonConfig::default();
    [
        ("grid.N", "3".to_string()),
        ("grid.R", "1".to_string()),
        ("grid.M", "2048".to_string()),
        ("newton.tol", format!("{:e}", n.tol_residual)),
        ("newton.max_iter", n.max_iter.to_string()),
        ("cont.ds0", format!("{:e}", c.ds0)),
        ("cont.ds_min", format!("{:e}", c.ds_min)),
        ("cont.ds_max", format!("{:e}", c.ds_max)),
        ("cont.eps_step_off", format!("{:e}", c.eps_step_off)),
        ("cont.lambda_stop_low", format!("{:e}", c.lambda_stop_low)),
        ("out.dir", "out".to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

#[derive(Debug, Clone)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self { values: defaults() };
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError(format!(
                    "line {}: expected key = value, got {raw:?}",
                    no + 1
                )));
            };
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Self::parse(""),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| ConfigError(format!("cannot read {}: {e}", p.display())))?;
                Self::parse(&text)
            }
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(ConfigError(format!(
                "unknown key {key:?}; valid keys: {}",
                KEYS.join(", ")
            )));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (k, v) = spec
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("override must be key=value, got {spec:?}")))?;
        self.set(k.trim(), v.trim())
    }

    /// SHA-256 of the resolved `key=value` lines in key order.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.values {
            h.update(format!("{k}={v}\n").as_bytes());
        }
        hex::encode(h.finalize())
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn num<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| ConfigError(format!("{key}: cannot parse {v:?} as a number")))
            })
            .transpose()
    }

    fn required<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.num(key)?
            .ok_or_else(|| ConfigError(format!("{key} is required")))
    }

    fn coeffs(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|c| {
                        c.trim().parse::<f64>().map_err(|_| {
                            ConfigError(format!("{key}: cannot parse coefficient {c:?}"))
                        })
                    })
                    .collect()
            })
            .transpose()
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.get("out.dir").unwrap_or("out"))
    }

    pub fn grid(&self) -> Result<RadialGrid> {
        RadialGrid::new(
            self.required("grid.N")?,
            self.required("grid.R")?,
            self.required("grid.M")?,
        )
        .map_err(|e| ConfigError(e.to_string()))
    }

    pub fn newton(&self) -> Result<NewtonConfig> {
        let cfg = NewtonConfig {
            tol_residual: self.required("newton.tol")?,
            max_iter: self.required("newton.max_iter")?,
            ..NewtonConfig::default()
        };
        cfg.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(cfg)
    }

    pub fn continuation(&self) -> Result<ContinuationConfig> {
        let cfg = ContinuationConfig {
            ds0: self.required("cont.ds0")?,
            ds_min: self.required("cont.ds_min")?,
            ds_max: self.required("cont.ds_max")?,
            eps_step_off: self.required("cont.eps_step_off")?,
            lambda_stop_low: self.required("cont.lambda_stop_low")?,
            newton: self.newton()?,
            ..ContinuationConfig::default()
        };
        cfg.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(cfg)
    }

    pub fn model(&self) -> Result<NonlinearityModel> {
        let c1 = self.coeffs("model.coeffs1")?;
        let c2 = self.coeffs("model.coeffs2")?;
        let nu1 = self.num::<f64>("model.nu1")?;
        let nu2 = self.num::<f64>("model.nu2")?;
        let k = self.num::<f64>("model.K")?;
        let err = |e: radbif_core::Error| ConfigError(e.to_string());
        let base = match (self.get("model.name"), c1, c2) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                return Err(ConfigError(
                    "give either model.name or model.coeffs1/coeffs2, not both".into(),
                ))
            }
            (_, Some(c1), Some(c2)) => {
                let k = k.ok_or_else(|| {
                    ConfigError("model.K is required for a polynomial model".into())
                })?;
                NonlinearityModel::from_polynomials(
                    c1,
                    c2,
                    nu1.unwrap_or(2.0),
                    nu2.unwrap_or(2.0),
                    k,
                )
                .map_err(err)?
            }
            (_, Some(_), None) | (_, None, Some(_)) => {
                return Err(ConfigError(
                    "model.coeffs1 and model.coeffs2 go together".into(),
                ))
            }
            (name, None, None) => {
                let name = name.unwrap_or("reference");
                NonlinearityModel::builtin(name).ok_or_else(|| {
                    ConfigError(format!(
                        "unknown model.name {name:?}; built-in models: reference, left, linear"
                    ))
                })?
            }
        };
        let mut params = *base.params();
        if nu1.is_some() || nu2.is_some() {
            // analytic remainder limits no longer apply
            params.r_lims = None;
        }
        params.p1 = self.num("model.p1")?.unwrap_or(params.p1);
        params.p2 = self.num("model.p2")?.unwrap_or(params.p2);
        params.b1 = self.num("model.b1")?.unwrap_or(params.b1);
        params.b2 = self.num("model.b2")?.unwrap_or(params.b2);
        params.nu1 = nu1.unwrap_or(params.nu1);
        params.nu2 = nu2.unwrap_or(params.nu2);
        params.k = k.unwrap_or(params.k);
        base.with_params(params).map_err(err)
    }
}
