//! Flat `key = value` configuration text shared by the scene descriptor and
//! the pipeline config.

use crate::aec::AecParams;
use crate::approx::ApproxConfig;
use crate::error::{Error, Result};
use crate::swim::SwimConfig;

/// Splits `key = value` lines. Blank lines and `#` comments are skipped.
pub fn key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::Config(format!("`{key}`: bad number `{s}`")))
        })
        .collect()
}

/// Everything the batch pipeline needs.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub approx: ApproxConfig,
    /// Depth-difference threshold for contour detection.
    pub threshold: u8,
    /// Converts stored 8-bit depth values to pixel disparity.
    pub disparity_scale: f64,
    /// Intermediate view positions between left (0) and right (1).
    pub alphas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub seed: u64,
    /// Record per-stage wall time in the sweep CSV. Off by default so that
    /// reruns produce identical files.
    pub timings: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            approx: ApproxConfig::default(),
            threshold: 30,
            disparity_scale: 1.0,
            alphas: vec![0.25, 0.5, 0.75],
            lambdas: vec![0.0, 1.0, 4.0, 16.0],
            seed: 1,
            timings: false,
        }
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (key, value) in key_values(text)? {
            let real = || -> Result<f64> {
                value
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("`{key}`: bad number `{value}`")))
            };
            let int = || -> Result<u64> {
                value
                    .parse::<u64>()
                    .map_err(|_| Error::Config(format!("`{key}`: bad integer `{value}`")))
            };
            match key.as_str() {
                "kappa" => cfg.approx.aec.kappa = real()?,
                "omega" => cfg.approx.aec.omega = real()?,
                "K" | "k" => cfg.approx.aec.context_len = int()? as usize,
                "W" | "w" => cfg.approx.swim.window = int()? as usize,
                "N" | "n" => cfg.approx.swim.block = int()? as usize,
                "L" | "l" => cfg.approx.swim.bins = int()? as usize,
                "D0" | "d0" => cfg.approx.swim.d0 = Some(real()?),
                "rho" => cfg.approx.rho = real()?,
                "merge" => {
                    cfg.approx.merge = match value.as_str() {
                        "true" | "1" | "yes" => true,
                        "false" | "0" | "no" => false,
                        _ => return Err(Error::Config(format!("`merge`: bad flag `{value}`"))),
                    }
                }
                "threshold" => cfg.threshold = int()?.clamp(1, 255) as u8,
                "disparity_scale" => cfg.disparity_scale = real()?,
                "alphas" => cfg.alphas = parse_list(&key, &value)?,
                "lambdas" => cfg.lambdas = parse_list(&key, &value)?,
                "seed" => cfg.seed = int()?,
                "timings" => cfg.timings = matches!(value.as_str(), "true" | "1" | "yes"),
                other => return Err(Error::Config(format!("unknown config key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        AecParams::new(self.approx.aec.context_len, self.approx.aec.kappa, self.approx.aec.omega)?;
        SwimConfig::new(
            self.approx.swim.block,
            self.approx.swim.window,
            self.approx.swim.bins,
            self.approx.swim.d0,
        )?;
        if self.approx.rho < 0.0 {
            return Err(Error::Config("rho must be non-negative".into()));
        }
        if self.lambdas.is_empty() || self.lambdas.iter().any(|&l| !(l >= 0.0)) {
            return Err(Error::Config("lambdas must be a non-empty list of values >= 0".into()));
        }
        if self.alphas.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            return Err(Error::Config("alphas must lie strictly between 0 and 1".into()));
        }
        if !(self.disparity_scale > 0.0) {
            return Err(Error::Config("disparity_scale must be positive".into()));
        }
        Ok(())
    }
}
