//! Run configuration: estimator and filter knobs resolved from defaults, an
//! optional `key = value` file, and `--set` overrides, in that order. The
//! resolved configuration serializes to a canonical sorted listing so runs
//! can be fingerprinted and reproduced.

use anyhow::{anyhow, bail, Result};
use sha2::{Digest, Sha256};

use evcast::kalman::{ForecasterConfig, ProcessNoiseMode, RpmRange, ScaleScope};
use evcast::rpm::RpmConfig;
use evcast::scenario::parse_kv_lines;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Proposed,
    VanillaKf,
    Linear,
}

impl Method {
    pub fn parse(s: &str) -> Result<Method> {
        match s {
            "proposed" => Ok(Method::Proposed),
            "vanilla_kf" => Ok(Method::VanillaKf),
            "linear" => Ok(Method::Linear),
            other => bail!("unknown method '{other}': expected proposed, vanilla_kf, or linear"),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::VanillaKf => "vanilla_kf",
            Method::Linear => "linear",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub method: Method,
    pub rpm: RpmConfig,
    pub forecaster: ForecasterConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            method: Method::Proposed,
            rpm: RpmConfig::default(),
            forecaster: ForecasterConfig::default(),
        }
    }
}

impl RunConfig {
    /// Defaults, then the optional file, then `--set key=value` pairs.
    pub fn resolve(file: Option<&str>, sets: &[String]) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(text) = file {
            for (key, value) in parse_kv_lines(text).map_err(|e| anyhow!("config file: {e}"))? {
                cfg.apply(&key, &value)?;
            }
        }
        for raw in sets {
            let (key, value) = raw
                .split_once('=')
                .ok_or_else(|| anyhow!("--set '{raw}': expected key=value"))?;
            cfg.apply(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |e: &dyn std::fmt::Display| anyhow!("key '{key}': '{value}': {e}");
        macro_rules! num {
            ($ty:ty) => {
                value.parse::<$ty>().map_err(|e| bad(&e))?
            };
        }
        match key {
            "method" => self.method = Method::parse(value)?,
            "rpm.percentile" => self.rpm.percentile = num!(f64),
            "rpm.blades" => self.rpm.blades = num!(u32),
            "rpm.window_ms" => {
                let ms = num!(f64);
                if !(ms > 0.0 && ms.is_finite()) {
                    bail!("key '{key}': window must be positive, got {ms}");
                }
                self.rpm.window_us = (ms * 1000.0).round() as u64;
            }
            "rpm.min_support" => self.rpm.min_support = num!(u32),
            "kalman.q_cx" => self.forecaster.noise.q_cx = num!(f64),
            "kalman.q_cy" => self.forecaster.noise.q_cy = num!(f64),
            "kalman.q_vx" => self.forecaster.noise.q_vx = num!(f64),
            "kalman.q_vy" => self.forecaster.noise.q_vy = num!(f64),
            "kalman.r_pos" => self.forecaster.noise.r_pos = num!(f64),
            "kalman.scale_scope" => {
                self.forecaster.scope = match value {
                    "full" => ScaleScope::Full,
                    "velocity_only" => ScaleScope::VelocityOnly,
                    other => bail!("key '{key}': '{other}' is not full or velocity_only"),
                }
            }
            "kalman.rpm_lo" => {
                self.forecaster.rpm_range = RpmRange::new(num!(f64), self.forecaster.rpm_range.hi())
                    .map_err(|e| bad(&e))?
            }
            "kalman.rpm_hi" => {
                self.forecaster.rpm_range = RpmRange::new(self.forecaster.rpm_range.lo(), num!(f64))
                    .map_err(|e| bad(&e))?
            }
            "kalman.r_dot_scale" => self.forecaster.r_dot_scale = num!(f64),
            "forecast.horizons_s" => {
                let mut horizons = Vec::new();
                for part in value.split(',') {
                    horizons.push(part.trim().parse::<f64>().map_err(|e| bad(&e))?);
                }
                self.forecaster.horizons_s = horizons;
            }
            "forecast.step_s" => self.forecaster.step_s = num!(f64),
            other => bail!("unknown configuration key '{other}'"),
        }
        Ok(())
    }

    fn validate(&mut self) -> Result<()> {
        self.forecaster.mode = match self.method {
            Method::Proposed => ProcessNoiseMode::RpmModulated,
            Method::VanillaKf | Method::Linear => ProcessNoiseMode::Fixed,
        };
        self.rpm.validate().map_err(|e| anyhow!("rpm configuration: {e}"))?;
        self.forecaster.validate().map_err(|e| anyhow!("kalman configuration: {e}"))?;
        Ok(())
    }

    /// Canonical `key = value` listing, keys sorted, one per line. Byte
    /// stable for a given resolved configuration.
    pub fn canonical(&self) -> String {
        let horizons = self
            .forecaster
            .horizons_s
            .iter()
            .map(|h| h.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let scope = match self.forecaster.scope {
            ScaleScope::Full => "full",
            ScaleScope::VelocityOnly => "velocity_only",
        };
        let mut lines = vec![
            format!("forecast.horizons_s = {horizons}"),
            format!("forecast.step_s = {}", self.forecaster.step_s),
            format!("kalman.q_cx = {}", self.forecaster.noise.q_cx),
            format!("kalman.q_cy = {}", self.forecaster.noise.q_cy),
            format!("kalman.q_vx = {}", self.forecaster.noise.q_vx),
            format!("kalman.q_vy = {}", self.forecaster.noise.q_vy),
            format!("kalman.r_dot_scale = {}", self.forecaster.r_dot_scale),
            format!("kalman.r_pos = {}", self.forecaster.noise.r_pos),
            format!("kalman.rpm_hi = {}", self.forecaster.rpm_range.hi()),
            format!("kalman.rpm_lo = {}", self.forecaster.rpm_range.lo()),
            format!("kalman.scale_scope = {scope}"),
            format!("method = {}", self.method.name()),
            format!("rpm.blades = {}", self.rpm.blades),
            format!("rpm.min_support = {}", self.rpm.min_support),
            format!("rpm.percentile = {}", self.rpm.percentile),
            format!("rpm.window_ms = {}", self.rpm.window_us as f64 / 1000.0),
        ];
        lines.sort();
        lines.join("\n") + "\n"
    }

    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
