//! Run configuration loaded from TOML.
//!
//! Values resolve with precedence: command line, then config file, then
//! environment, then built-in defaults.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::FitConfig;
use crate::hybrid::HybridConfig;
use crate::ingest::{FetchConfig, RPC_URL_ENV};

pub const DEFAULT_ALPHAS: [f64; 4] = [50.0, 75.0, 84.0, 95.0];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub rpc_url: Option<String>,
    pub threads: Option<usize>,
    pub out_dir: Option<String>,
    pub format: Option<String>,
    pub fit: FitConfig,
    pub hybrid: HybridConfig,
    pub backtest: BacktestSection,
    pub fetch: FetchSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestSection {
    pub oracles: Option<Vec<String>>,
    pub train_size: Option<usize>,
    pub alphas: Option<Vec<f64>>,
    /// `A:B`, 1-based inclusive target positions; either side may be empty.
    pub range: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FetchSection {
    pub concurrency: usize,
    pub max_attempts: u32,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
    /// Blocks written per append when fetching into a file.
    pub chunk: u64,
}

impl Default for FetchSection {
    fn default() -> Self {
        let d = FetchConfig::default();
        FetchSection {
            concurrency: d.concurrency,
            max_attempts: d.max_attempts,
            backoff_ms: d.backoff.as_millis() as u64,
            timeout_secs: d.timeout.as_secs(),
            chunk: 1000,
        }
    }
}

impl FetchSection {
    pub fn to_fetch_config(&self) -> FetchConfig {
        FetchConfig {
            concurrency: self.concurrency.max(1),
            max_attempts: self.max_attempts.max(1),
            backoff: Duration::from_millis(self.backoff_ms),
            timeout: Duration::from_secs(self.timeout_secs.max(1)),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.fit.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// RPC endpoint from the flag, this file, or `GAS_ORACLE_RPC_URL`.
    pub fn resolve_rpc_url(&self, flag: Option<&str>) -> Option<String> {
        flag.map(str::to_owned)
            .or_else(|| self.rpc_url.clone())
            .or_else(|| std::env::var(RPC_URL_ENV).ok().filter(|s| !s.is_empty()))
    }
}

/// Parses `A:B`, `A:`, `:B` or `:` into optional 1-based inclusive bounds.
pub fn parse_range(s: &str) -> Result<(Option<usize>, Option<usize>)> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("range `{s}` is not of the form A:B")))?;
    let side = |v: &str| -> Result<Option<usize>> {
        let v = v.trim();
        if v.is_empty() {
            return Ok(None);
        }
        v.parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("range bound `{v}` is not a positive integer")))
    };
    let (a, b) = (side(a)?, side(b)?);
    if let (Some(a), Some(b)) = (a, b) {
        if a > b {
            return Err(Error::Config(format!("range start {a} is after end {b}")));
        }
    }
    Ok((a, b))
}

/// Parses `50,75,84.13,95`.
pub fn parse_alphas(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            let v = v.trim();
            let a: f64 = v
                .parse()
                .map_err(|_| Error::Config(format!("alpha `{v}` is not a number")))?;
            crate::percentile::level_to_quantile(a).map_err(|e| Error::Config(e.to_string()))?;
            Ok(a)
        })
        .collect()
}
