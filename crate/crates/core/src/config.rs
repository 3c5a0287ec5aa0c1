//! Flat `key = value` run configuration.
//!
//! ```text
//! # homogeneous, delta V = -8
//! n_b = 500
//! n_c = 500
//! v_b = 1
//! v_c = 9
//! j_b = 1
//! j_c = 1
//! j_bc = 1
//! delta_j = 0.1, 0.5
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SystemSpec;

pub const KEYS: [&str; 12] =
    ["n_b", "n_c", "v_b", "v_c", "j_b", "j_c", "j_bc", "t_max", "n_samples", "seed", "delta_j", "realizations"];

/// Parsed configuration. Every key is optional at parse time; verbs check
/// for what they need with the `require_*` accessors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub n_b: Option<u64>,
    pub n_c: Option<u64>,
    pub v_b: Option<f64>,
    pub v_c: Option<f64>,
    pub j_b: Option<f64>,
    pub j_c: Option<f64>,
    pub j_bc: Option<f64>,
    pub t_max: Option<f64>,
    pub n_samples: Option<usize>,
    pub seed: Option<u64>,
    pub delta_j: Option<Vec<f64>>,
    pub realizations: Option<usize>,
}

fn parse_value<T: FromStr>(key: &str, raw: &str, line: usize) -> Result<T>
where
    T::Err: fmt::Display,
{
    raw.parse::<T>().map_err(|e| Error::Config { line, reason: format!("`{key}`: cannot parse `{raw}`: {e}") })
}

fn parse_real(key: &str, raw: &str, line: usize) -> Result<f64> {
    let x: f64 = parse_value(key, raw, line)?;
    if !x.is_finite() {
        return Err(Error::Config { line, reason: format!("`{key}` must be finite, got `{raw}`") });
    }
    Ok(x)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::Config { line, reason: format!("expected `key = value`, got `{content}`") })?;
            let key = key.trim();
            if seen.contains(&key) {
                return Err(Error::Config { line, reason: format!("duplicate key `{key}`") });
            }
            cfg.set_at(key, value.trim(), line)?;
            seen.push(key);
        }
        Ok(cfg)
    }

    /// Applies a `key=value` override (line 0 in error reports).
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config { line: 0, reason: format!("override `{assignment}` is not `key=value`") })?;
        self.set_at(key.trim(), value.trim(), 0)
    }

    fn set_at(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        match key {
            "n_b" => self.n_b = Some(parse_value(key, value, line)?),
            "n_c" => self.n_c = Some(parse_value(key, value, line)?),
            "v_b" => self.v_b = Some(parse_real(key, value, line)?),
            "v_c" => self.v_c = Some(parse_real(key, value, line)?),
            "j_b" => self.j_b = Some(parse_real(key, value, line)?),
            "j_c" => self.j_c = Some(parse_real(key, value, line)?),
            "j_bc" => self.j_bc = Some(parse_real(key, value, line)?),
            "t_max" => self.t_max = Some(parse_real(key, value, line)?),
            "n_samples" => self.n_samples = Some(parse_value(key, value, line)?),
            "seed" => self.seed = Some(parse_value(key, value, line)?),
            "delta_j" => {
                let list = value.split(',').map(|x| parse_real(key, x.trim(), line)).collect::<Result<Vec<_>>>()?;
                if list.iter().any(|&x| x < 0.0) {
                    return Err(Error::Config { line, reason: "`delta_j` entries must be non-negative".into() });
                }
                self.delta_j = Some(list);
            }
            "realizations" => self.realizations = Some(parse_value(key, value, line)?),
            other => return Err(Error::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// The model parameters; all seven must be present.
    pub fn system(&self) -> Result<SystemSpec> {
        SystemSpec::new(
            self.n_b.ok_or(Error::MissingKey("n_b"))?,
            self.n_c.ok_or(Error::MissingKey("n_c"))?,
            self.v_b.ok_or(Error::MissingKey("v_b"))?,
            self.v_c.ok_or(Error::MissingKey("v_c"))?,
            self.j_b.ok_or(Error::MissingKey("j_b"))?,
            self.j_c.ok_or(Error::MissingKey("j_c"))?,
            self.j_bc.ok_or(Error::MissingKey("j_bc"))?,
        )
    }
}
