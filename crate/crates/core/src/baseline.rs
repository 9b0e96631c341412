//! Empirical-percentile oracles: GS-Express and Geth.
//!
//! Both quote a percentile of the most recent per-block minimum prices; they
//! differ only in window length and default level.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::oracle::Oracle;
use crate::percentile::{interpolate_sorted, level_to_quantile};
use crate::Wei;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PercentileOracleConfig {
    pub window_size: usize,
    pub default_alpha: f64,
}

impl PercentileOracleConfig {
    pub const GS_EXPRESS: PercentileOracleConfig = PercentileOracleConfig {
        window_size: 200,
        default_alpha: 50.0,
    };

    pub const GETH: PercentileOracleConfig = PercentileOracleConfig {
        window_size: 100,
        default_alpha: 60.0,
    };

    pub fn validate(&self) -> Result<()> {
        if self.window_size == 0 {
            return Err(Error::Config("window size must be at least 1".into()));
        }
        level_to_quantile(self.default_alpha).map(|_| ())
    }
}

/// α-percentile of a window, rounded up to whole wei.
pub fn empirical_percentile_price(window: &[Wei], alpha: f64) -> Result<Wei> {
    let q = level_to_quantile(alpha)?;
    if window.is_empty() {
        return Err(Error::InsufficientHistory {
            needed: 1,
            available: 0,
        });
    }
    let mut sorted = window.to_vec();
    sorted.sort_unstable();
    Ok(interpolate_sorted(&sorted, q)?.ceil_wei())
}

/// Percentile of an already-sorted window.
pub fn sorted_percentile_price(sorted: &[Wei], alpha: f64) -> Result<Wei> {
    Ok(interpolate_sorted(sorted, level_to_quantile(alpha)?)?.ceil_wei())
}

fn window_before(history: &[Wei], at: usize, size: usize) -> Result<&[Wei]> {
    if at < size || at > history.len() {
        return Err(Error::InsufficientHistory {
            needed: size,
            available: at.min(history.len()),
        });
    }
    Ok(&history[at - size..at])
}

/// GS-Express quote for the block at position `at`, from `history[at - window..at]`.
pub fn gs_express_quote(history: &[Wei], at: usize, cfg: &PercentileOracleConfig, alpha: f64) -> Result<Wei> {
    empirical_percentile_price(window_before(history, at, cfg.window_size)?, alpha)
}

/// Geth quote at the configured default level (60th by default).
pub fn geth_quote(history: &[Wei], at: usize, cfg: &PercentileOracleConfig) -> Result<Wei> {
    empirical_percentile_price(window_before(history, at, cfg.window_size)?, cfg.default_alpha)
}

/// A named empirical-percentile oracle.
#[derive(Debug, Clone)]
pub struct PercentileOracle {
    name: String,
    cfg: PercentileOracleConfig,
}

impl PercentileOracle {
    pub fn new(name: impl Into<String>, cfg: PercentileOracleConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(PercentileOracle { name: name.into(), cfg })
    }

    pub fn gs_express(window_size: usize) -> Result<Self> {
        Self::new(
            "gs-express",
            PercentileOracleConfig {
                window_size,
                ..PercentileOracleConfig::GS_EXPRESS
            },
        )
    }

    pub fn geth(window_size: usize) -> Result<Self> {
        Self::new(
            "geth",
            PercentileOracleConfig {
                window_size,
                ..PercentileOracleConfig::GETH
            },
        )
    }

    pub fn config(&self) -> &PercentileOracleConfig {
        &self.cfg
    }
}

impl Oracle for PercentileOracle {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn warmup(&self) -> usize {
        self.cfg.window_size
    }

    fn describe(&self) -> Value {
        json!({
            "kind": self.name,
            "window": self.cfg.window_size,
            "default_alpha": self.cfg.default_alpha,
        })
    }

    fn quote(&self, history: &[Wei], alphas: &[f64]) -> Result<Vec<Wei>> {
        let window = window_before(history, history.len(), self.cfg.window_size)?;
        let mut sorted = window.to_vec();
        sorted.sort_unstable();
        alphas.iter().map(|&a| sorted_percentile_price(&sorted, a)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_examples() {
        let mut w: Vec<Wei> = (1..=200).collect();
        w.reverse();
        assert_eq!(empirical_percentile_price(&w, 50.0).unwrap(), 101);
        let w: Vec<Wei> = (1..=100).collect();
        assert_eq!(empirical_percentile_price(&w, 60.0).unwrap(), 61);
        assert_eq!(geth_quote(&w, 100, &PercentileOracleConfig::GETH).unwrap(), 61);
        assert_eq!(empirical_percentile_price(&[9; 30], 12.5).unwrap(), 9);
    }

    #[test]
    fn upper_extreme_is_max() {
        let w: Vec<Wei> = vec![5, 17, 3, 11];
        assert_eq!(empirical_percentile_price(&w, 100.0 - 1e-12).unwrap(), 17);
    }

    #[test]
    fn insufficient_history() {
        let h: Vec<Wei> = vec![1; 50];
        let cfg = PercentileOracleConfig::GS_EXPRESS;
        assert!(matches!(
            gs_express_quote(&h, 50, &cfg, 50.0),
            Err(Error::InsufficientHistory {
                needed: 200,
                available: 50
            })
        ));
        let o = PercentileOracle::gs_express(200).unwrap();
        assert!(o.quote(&h, &[50.0]).is_err());
    }

    #[test]
    fn uses_strictly_past_window() {
        let h: Vec<Wei> = vec![1, 2, 3, 100];
        let cfg = PercentileOracleConfig {
            window_size: 3,
            default_alpha: 50.0,
        };
        assert_eq!(gs_express_quote(&h, 3, &cfg, 99.0).unwrap(), 3);
        let o = PercentileOracle::new("gs-express", cfg).unwrap();
        assert_eq!(o.quote(&h[..3], &[50.0, 99.0]).unwrap(), vec![2, 3]);
    }

    #[test]
    fn config_validation() {
        assert!(PercentileOracle::gs_express(0).is_err());
        assert!(PercentileOracle::new(
            "x",
            PercentileOracleConfig {
                window_size: 3,
                default_alpha: 100.0
            }
        )
        .is_err());
    }
}
