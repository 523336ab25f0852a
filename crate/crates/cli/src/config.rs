//! Run configuration: one JSON document per model.

use std::fs;
use std::path::{Path, PathBuf};

use adbid_core::model::{AuctionRule, BidDistribution};
use adbid_core::{Channel, IntensityProfile, ModelSpec, SimConfig};
use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub param: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meanfield {
    pub quad_n: usize,
    pub m_list: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    pub path: Option<PathBuf>,
    pub format: Option<Format>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub eta: IntensityProfile,
    #[serde(rename = "channel_T")]
    pub channel_t: Channel,
    #[serde(rename = "channel_NT", default)]
    pub channel_nt: Option<Channel>,
    #[serde(default)]
    pub sim: Option<SimConfig>,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub meanfield: Option<Meanfield>,
    #[serde(default)]
    pub output: Output,
    /// Policy table (CSV) simulated by `simulate` for population models,
    /// relative to the config file.
    #[serde(default)]
    pub policy: Option<PathBuf>,
    /// Constant bid simulated by `simulate` for single-individual models.
    #[serde(default)]
    pub bid: Option<f64>,
    #[serde(default)]
    pub z_threshold: Option<f64>,
}

pub const DEFAULT_Z_THRESHOLD: f64 = 5.0;

/// Names accepted by `sweep.param`.
pub const SWEEP_PARAMS: [&str; 7] = ["K", "rho", "M", "eta_I", "eta_T", "eta_NT", "eta_S"];

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::parse(&text).with_context(|| format!("config {}", path.display()))?;
        if let Some(p) = cfg.policy.take() {
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.policy = Some(base.join(p));
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_point()?;
        if let Some(sw) = &self.sweep {
            if !SWEEP_PARAMS.contains(&sw.param.as_str()) {
                bail!("invalid `sweep.param`: unknown parameter `{}` (expected one of {})", sw.param, SWEEP_PARAMS.join(", "));
            }
            if sw.values.is_empty() {
                bail!("invalid `sweep.values`: must not be empty");
            }
            for &v in &sw.values {
                self.with_param(&sw.param, v).map_err(|e| anyhow!("invalid `sweep.values`: {e:#}"))?;
            }
        }
        Ok(())
    }

    /// Checks everything except the sweep section.
    fn validate_point(&self) -> Result<()> {
        let population = matches!(self.model, ModelSpec::SocialPopulation(_));
        if !population {
            if self.channel_nt.is_some() {
                bail!("invalid `channel_NT`: only the social_population model has non-targeted auctions");
            }
            for (name, v) in [("eta_NT", self.eta.eta_nt()), ("eta_S", self.eta.eta_s())] {
                if v != 0.0 {
                    bail!("invalid `{name}`: must be 0 for the {} model", self.model.name());
                }
            }
        } else {
            if self.eta.eta_nt() > 0.0 && self.channel_nt.is_none() {
                bail!("invalid `channel_NT`: required when eta_NT > 0");
            }
            if self.eta.eta_i() <= 0.0 {
                bail!("invalid `eta_I`: must be > 0 for the social_population model");
            }
        }
        if let Some(mf) = &self.meanfield {
            if mf.quad_n < 2 {
                bail!("invalid `meanfield.quad_n`: must be >= 2, got {}", mf.quad_n);
            }
            if mf.m_list.is_empty() || mf.m_list.contains(&0) {
                bail!("invalid `meanfield.m_list`: must be a nonempty list of positive integers");
            }
        }
        if let Some(b) = self.bid {
            if !(b >= 0.0 && b.is_finite()) {
                bail!("invalid `bid`: must be a finite value >= 0, got {b}");
            }
        }
        if let Some(z) = self.z_threshold {
            if z.is_nan() || z <= 0.0 {
                bail!("invalid `z_threshold`: must be > 0, got {z}");
            }
        }
        Ok(())
    }

    /// Non-targeted channel, or a never-paying placeholder when the
    /// non-targeted rate is zero.
    pub fn channel_nt(&self) -> Channel {
        self.channel_nt.clone().unwrap_or_else(|| {
            Channel::new(BidDistribution::constant(0.0).expect("valid"), AuctionRule::SecondPrice)
        })
    }

    /// Copy with one model parameter or intensity replaced.
    pub fn with_param(&self, name: &str, value: f64) -> Result<Self> {
        let mut out = self.clone();
        if name.starts_with("eta_") {
            out.eta = self.eta.with(name, value)?;
        } else {
            out.model = self.model.with(name, value)?;
        }
        out.validate_point()?;
        Ok(out)
    }

    pub fn z_threshold(&self) -> f64 {
        self.z_threshold.unwrap_or(DEFAULT_Z_THRESHOLD)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "model": {"kind": "purchase", "K": 2, "rho": 1},
        "eta": {"eta_I": 1, "eta_T": 1},
        "channel_T": {"dist": {"kind": "constant", "value": 0.5}, "rule": "second_price"}
    }"#;

    #[test]
    fn parses_minimal_config() {
        let cfg = RunConfig::parse(BASE).unwrap();
        assert_eq!(cfg.model.k(), 2.0);
        assert_eq!(cfg.z_threshold(), 5.0);
    }

    #[test]
    fn rejects_nontargeted_channel_for_individual() {
        let text = BASE.replacen(
            "\"channel_T\"",
            "\"channel_NT\": {\"dist\": {\"kind\": \"constant\", \"value\": 0.5}, \"rule\": \"first_price\"}, \"channel_T\"",
            1,
        );
        let err = format!("{:#}", RunConfig::parse(&text).unwrap_err());
        assert!(err.contains("channel_NT"), "{err}");
    }

    #[test]
    fn rejects_unknown_sweep_param() {
        let text = BASE.replacen('{', r#"{"sweep": {"param": "eta_X", "values": [1]},"#, 1);
        let err = format!("{:#}", RunConfig::parse(&text).unwrap_err());
        assert!(err.contains("sweep.param"), "{err}");
    }

    #[test]
    fn sweep_values_are_validated() {
        let text = BASE.replacen('{', r#"{"sweep": {"param": "rho", "values": [1, -1]},"#, 1);
        let err = format!("{:#}", RunConfig::parse(&text).unwrap_err());
        assert!(err.contains("rho"), "{err}");
    }
}
