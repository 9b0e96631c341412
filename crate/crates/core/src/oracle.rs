//! The interface the backtest drives, and the GP oracle.

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Instant;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::gp::{fit, FitConfig, GpHyperparams, GpModel, PredictiveDistribution, TrainingSeries};
use crate::Wei;

/// A gas price oracle quoting `P_α` for the block following `history`.
///
/// Quotes must be a pure function of `history` and the oracle's configuration
/// so that backtests can evaluate targets in any order.
pub trait Oracle: Sync {
    fn name(&self) -> String;

    /// Blocks of history needed before the first quote.
    fn warmup(&self) -> usize;

    /// Whether quotes are non-decreasing in α by construction.
    fn monotone_in_alpha(&self) -> bool {
        true
    }

    /// Configuration echo for reports.
    fn describe(&self) -> Value;

    /// One price per entry of `alphas` (percent levels in (0, 100)).
    fn quote(&self, history: &[Wei], alphas: &[f64]) -> Result<Vec<Wei>>;
}

/// Gaussian-process oracle over the last `window` blocks.
#[derive(Debug)]
pub struct GpOracle {
    window: usize,
    fit: FitConfig,
    /// Hyperparameters fitted at refit anchors, keyed by anchor history length.
    cache: Mutex<HashMap<usize, GpHyperparams>>,
}

const CACHE_LIMIT: usize = 4096;

impl GpOracle {
    pub fn new(window: usize, fit: FitConfig) -> Result<Self> {
        if window < 2 {
            return Err(Error::Config(format!("GP window must be at least 2, got {window}")));
        }
        fit.validate()?;
        Ok(GpOracle {
            window,
            fit,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn fit_config(&self) -> &FitConfig {
        &self.fit
    }

    /// Hyperparameters for the target at position `at`: refits happen when
    /// `at` is a multiple of `refit_every` and are reused until the next one.
    fn hyperparams_for(&self, history: &[Wei], at: usize) -> Result<Option<GpHyperparams>> {
        let k = self.fit.refit_every;
        if k <= 1 {
            return Ok(None);
        }
        let anchor = at - at % k;
        if anchor < self.window {
            return Ok(None);
        }
        if let Some(hp) = self.cache.lock().expect("cache lock").get(&anchor) {
            return Ok(Some(*hp));
        }
        let ts = TrainingSeries::from_wei(&history[anchor - self.window..anchor], self.fit.normalize)?;
        let hp = *fit(ts, &self.fit)?.hyperparams();
        let mut cache = self.cache.lock().expect("cache lock");
        if cache.len() >= CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(anchor, hp);
        Ok(Some(hp))
    }

    /// Fitted model for the window ending just before `history.len()`.
    pub fn model(&self, history: &[Wei]) -> Result<GpModel> {
        let at = history.len();
        if at < self.window {
            return Err(Error::InsufficientHistory {
                needed: self.window,
                available: at,
            });
        }
        let ts = TrainingSeries::from_wei(&history[at - self.window..], self.fit.normalize)?;
        match self.hyperparams_for(history, at)? {
            Some(hp) => GpModel::with_ladder(ts, hp, &self.fit.jitter_ladder),
            None => fit(ts, &self.fit),
        }
    }

    pub fn predictive(&self, history: &[Wei]) -> Result<PredictiveDistribution> {
        let started = Instant::now();
        let dist = self.model(history)?.predict_next();
        tracing::debug!(
            at = history.len(),
            secs = started.elapsed().as_secs_f64(),
            "gp prediction"
        );
        Ok(dist)
    }
}

impl Oracle for GpOracle {
    fn name(&self) -> String {
        "gp".into()
    }

    fn warmup(&self) -> usize {
        self.window
    }

    fn describe(&self) -> Value {
        json!({ "kind": "gp", "window": self.window, "fit": self.fit })
    }

    fn quote(&self, history: &[Wei], alphas: &[f64]) -> Result<Vec<Wei>> {
        let dist = self.predictive(history)?;
        alphas.iter().map(|&a| dist.percentile_price(a)).collect()
    }
}
