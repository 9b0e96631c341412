//! Hybrid oracle: GS-Express by default, watched by its own rolling success
//! rate over the last `n_gs` blocks.
//!
//! * rate below `α − e`: quote `max(P_GP,α, P_GS,α)`;
//! * rate within `[α − e, α + e]`: quote `P_GS,α`;
//! * rate above `α + e`: re-tune to a lower level `α′` whose retrospective
//!   rate falls in the band and quote `P_GS,α′` (or `P_GS,α` if none exists).
//!
//! The retrospective rate at `α′` re-scores the stored GS-Express windows of
//! the last `n_gs` targets against their known outcomes.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::baseline::sorted_percentile_price;
use crate::error::{Error, Result};
use crate::gp::FitConfig;
use crate::oracle::{GpOracle, Oracle};
use crate::percentile::level_to_quantile;
use crate::Wei;

/// Bisection steps when searching for `α′`.
const ALPHA_PRIME_ITERATIONS: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HybridConfig {
    /// Target success level, percent.
    pub alpha: f64,
    /// GS-Express window.
    pub n_gs: usize,
    /// GP window.
    pub n_gp: usize,
    /// Allowed error band in rate units (0.1 = ten percentage points).
    pub e: f64,
}

impl Default for HybridConfig {
    fn default() -> Self {
        HybridConfig {
            alpha: 75.0,
            n_gs: 30,
            n_gp: 200,
            e: 0.1,
        }
    }
}

impl HybridConfig {
    pub fn validate(&self) -> Result<()> {
        let q = level_to_quantile(self.alpha)?;
        if self.n_gs == 0 || self.n_gp < 2 || self.n_gp < self.n_gs {
            return Err(Error::Config(format!(
                "need 1 <= n_gs <= n_gp and n_gp >= 2, got n_gs={} n_gp={}",
                self.n_gs, self.n_gp
            )));
        }
        if !(self.e > 0.0 && self.e < 0.5) {
            return Err(Error::Config(format!("error band {} outside (0, 0.5)", self.e)));
        }
        if q - self.e <= 0.0 {
            return Err(Error::Config(format!(
                "band lower edge {} is not above zero",
                q - self.e
            )));
        }
        Ok(())
    }

    /// Blocks of history required to quote with a full indicator buffer.
    pub fn warmup(&self) -> usize {
        self.n_gp.max(2 * self.n_gs)
    }

    fn level(&self) -> f64 {
        self.alpha / 100.0
    }
}

/// Which branch produced a quote.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum HybridCase {
    /// Rate below the band.
    FallBack,
    /// Rate inside the band.
    Steady,
    /// Rate above the band; `alpha_prime` is the level actually quoted.
    Retune { alpha_prime: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridQuote {
    pub price: Wei,
    pub rate: f64,
    #[serde(flatten)]
    pub case: HybridCase,
    pub gs_price: Wei,
    pub gp_price: Option<Wei>,
}

/// A past GS-Express decision: the sorted window it saw and what happened.
#[derive(Debug, Clone, PartialEq)]
struct Snapshot {
    sorted_window: Vec<Wei>,
    actual: Wei,
}

/// Streaming state for one target level.
#[derive(Debug, Clone)]
pub struct HybridState {
    cfg: HybridConfig,
    history: VecDeque<Wei>,
    snapshots: VecDeque<Snapshot>,
    indicators: VecDeque<bool>,
}

impl HybridState {
    pub fn new(cfg: HybridConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(HybridState {
            history: VecDeque::with_capacity(cfg.n_gp + 1),
            snapshots: VecDeque::with_capacity(cfg.n_gs + 1),
            indicators: VecDeque::with_capacity(cfg.n_gs + 1),
            cfg,
        })
    }

    /// Replays the tail of `history` that can still influence the state.
    pub fn from_history(cfg: HybridConfig, history: &[Wei]) -> Result<Self> {
        let mut state = Self::new(cfg)?;
        let keep = state.cfg.warmup().min(history.len());
        for &y in &history[history.len() - keep..] {
            state.advance(y);
        }
        Ok(state)
    }

    pub fn config(&self) -> &HybridConfig {
        &self.cfg
    }

    pub fn history(&self) -> impl ExactSizeIterator<Item = &Wei> {
        self.history.iter()
    }

    pub fn indicators(&self) -> impl ExactSizeIterator<Item = &bool> {
        self.indicators.iter()
    }

    /// Appends the newly mined block's minimum price, scoring the GS-Express
    /// quote that would have been made for it.
    pub fn advance(&mut self, y: Wei) {
        let n_gs = self.cfg.n_gs;
        if self.history.len() >= n_gs {
            let mut window: Vec<Wei> = self.history.iter().skip(self.history.len() - n_gs).copied().collect();
            window.sort_unstable();
            let quote = sorted_percentile_price(&window, self.cfg.alpha).expect("validated alpha");
            self.indicators.push_back(quote >= y);
            self.snapshots.push_back(Snapshot {
                sorted_window: window,
                actual: y,
            });
            if self.indicators.len() > n_gs {
                self.indicators.pop_front();
                self.snapshots.pop_front();
            }
        }
        self.history.push_back(y);
        if self.history.len() > self.cfg.n_gp.max(n_gs) {
            self.history.pop_front();
        }
    }

    /// GS-Express success rate over the last `n_gs` targets at the configured α.
    pub fn instant_success_rate(&self) -> Result<f64> {
        if self.indicators.len() < self.cfg.n_gs {
            return Err(Error::InsufficientHistory {
                needed: self.cfg.n_gs,
                available: self.indicators.len(),
            });
        }
        Ok(self.indicators.iter().filter(|&&t| t).count() as f64 / self.indicators.len() as f64)
    }

    /// Success rate the stored windows would have had when quoting at `alpha`.
    pub fn retrospective_rate(&self, alpha: f64) -> Result<f64> {
        if self.snapshots.is_empty() {
            return Err(Error::State("no stored GS-Express windows".into()));
        }
        let mut hits = 0usize;
        for s in &self.snapshots {
            if sorted_percentile_price(&s.sorted_window, alpha)? >= s.actual {
                hits += 1;
            }
        }
        Ok(hits as f64 / self.snapshots.len() as f64)
    }

    /// Level `α′ <= α` whose retrospective rate lies in `[α − e, α + e]`, or
    /// `α` itself when the rate jumps over the band.
    ///
    /// Bisects for the lowest level whose rate reaches the target `α`, then
    /// accepts that level or the one just below it if either is in band.
    pub fn find_alpha_prime(&self) -> Result<f64> {
        if self.snapshots.len() < self.cfg.n_gs {
            return Err(Error::State(format!(
                "{} of {} GS-Express windows stored",
                self.snapshots.len(),
                self.cfg.n_gs
            )));
        }
        let target = self.cfg.level();
        let (band_lo, band_hi) = (target - self.cfg.e, target + self.cfg.e);
        let rate_at_alpha = self.retrospective_rate(self.cfg.alpha)?;
        if rate_at_alpha <= band_hi {
            return Err(Error::Precondition(format!(
                "rate {rate_at_alpha} is not above the band edge {band_hi}"
            )));
        }
        let in_band = |r: f64| r >= band_lo && r <= band_hi;
        // rate(lo) < target <= rate(hi); lo = 0 stands for "not yet evaluated"
        let (mut lo, mut hi) = (0.0, self.cfg.alpha);
        let mut rate_lo = None;
        let mut rate_hi = rate_at_alpha;
        for _ in 0..ALPHA_PRIME_ITERATIONS {
            let mid = 0.5 * (lo + hi);
            let r = self.retrospective_rate(mid)?;
            if r >= target {
                hi = mid;
                rate_hi = r;
            } else {
                lo = mid;
                rate_lo = Some(r);
            }
        }
        if in_band(rate_hi) {
            return Ok(hi);
        }
        match rate_lo {
            Some(r) if in_band(r) => Ok(lo),
            _ => Ok(self.cfg.alpha),
        }
    }

    /// Quote using `gp_quote` for `P_GP,α` over the last `n_gp` prices when
    /// the fallback branch needs it.
    pub fn quote_with(&self, gp_quote: impl FnOnce(&[Wei]) -> Result<Wei>) -> Result<HybridQuote> {
        if self.history.len() < self.cfg.n_gp || self.indicators.len() < self.cfg.n_gs {
            return Err(Error::InsufficientHistory {
                needed: self.cfg.warmup(),
                available: self.history.len(),
            });
        }
        let n_gs = self.cfg.n_gs;
        let mut window: Vec<Wei> = self.history.iter().skip(self.history.len() - n_gs).copied().collect();
        window.sort_unstable();
        let gs_price = sorted_percentile_price(&window, self.cfg.alpha)?;
        let rate = self.instant_success_rate()?;
        let level = self.cfg.level();
        if rate < level - self.cfg.e {
            let gp_window: Vec<Wei> = self
                .history
                .iter()
                .skip(self.history.len() - self.cfg.n_gp)
                .copied()
                .collect();
            let gp_price = gp_quote(&gp_window)?;
            Ok(HybridQuote {
                price: gp_price.max(gs_price),
                rate,
                case: HybridCase::FallBack,
                gs_price,
                gp_price: Some(gp_price),
            })
        } else if rate <= level + self.cfg.e {
            Ok(HybridQuote {
                price: gs_price,
                rate,
                case: HybridCase::Steady,
                gs_price,
                gp_price: None,
            })
        } else {
            let alpha_prime = self.find_alpha_prime()?;
            Ok(HybridQuote {
                price: sorted_percentile_price(&window, alpha_prime)?,
                rate,
                case: HybridCase::Retune { alpha_prime },
                gs_price,
                gp_price: None,
            })
        }
    }

    /// Quote with a GP fitted from scratch under `fit`.
    pub fn quote(&self, fit: &FitConfig) -> Result<HybridQuote> {
        let gp = GpOracle::new(self.cfg.n_gp, fit.clone())?;
        let alpha = self.cfg.alpha;
        self.quote_with(|w| gp.predictive(w)?.percentile_price(alpha))
    }
}

/// Backtest adapter: one independent hybrid state per requested level.
#[derive(Debug)]
pub struct HybridOracle {
    cfg: HybridConfig,
    gp: GpOracle,
}

impl HybridOracle {
    /// `cfg.alpha` is ignored when quoting; each requested level gets its own state.
    pub fn new(cfg: HybridConfig, fit: FitConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(HybridOracle {
            gp: GpOracle::new(cfg.n_gp, fit)?,
            cfg,
        })
    }

    /// Quote with branch details for one level.
    pub fn quote_detailed(&self, history: &[Wei], alpha: f64) -> Result<HybridQuote> {
        let cfg = HybridConfig {
            alpha,
            ..self.cfg.clone()
        };
        let state = HybridState::from_history(cfg, history)?;
        // the GP window is the tail of `history`; hand the full prefix to the
        // GP oracle so its refit schedule sees absolute positions
        state.quote_with(|_| self.gp.predictive(history)?.percentile_price(alpha))
    }
}

impl Oracle for HybridOracle {
    fn name(&self) -> String {
        "hybrid".into()
    }

    fn warmup(&self) -> usize {
        self.cfg.warmup()
    }

    fn monotone_in_alpha(&self) -> bool {
        false
    }

    fn describe(&self) -> Value {
        json!({
            "kind": "hybrid",
            "n_gs": self.cfg.n_gs,
            "n_gp": self.cfg.n_gp,
            "e": self.cfg.e,
            "fit": self.gp.fit_config(),
        })
    }

    fn quote(&self, history: &[Wei], alphas: &[f64]) -> Result<Vec<Wei>> {
        alphas
            .iter()
            .map(|&a| self.quote_detailed(history, a).map(|q| q.price))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(alpha: f64, n_gs: usize, n_gp: usize) -> HybridConfig {
        HybridConfig {
            alpha,
            n_gs,
            n_gp,
            e: 0.1,
        }
    }

    #[test]
    fn validation() {
        assert!(HybridConfig::default().validate().is_ok());
        assert!(cfg(75.0, 30, 20).validate().is_err());
        assert!(HybridConfig {
            e: 0.0,
            ..HybridConfig::default()
        }
        .validate()
        .is_err());
        assert!(HybridConfig {
            alpha: 5.0,
            ..HybridConfig::default()
        }
        .validate()
        .is_err());
        // the upper band edge may pass 1; retuning then never triggers
        assert!(HybridConfig {
            alpha: 95.0,
            ..HybridConfig::default()
        }
        .validate()
        .is_ok());
    }

    #[test]
    fn indicator_buffer_evicts() {
        let mut s = HybridState::new(cfg(50.0, 3, 3)).unwrap();
        for y in [10, 10, 10] {
            s.advance(y);
        }
        assert!(s.instant_success_rate().is_err());
        for y in [10, 10, 10] {
            s.advance(y);
        }
        assert_eq!(s.instant_success_rate().unwrap(), 1.0);
        s.advance(11);
        assert_eq!(s.indicators().len(), 3);
        assert!((s.instant_success_rate().unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(!*s.indicators().last().unwrap());
        assert_eq!(s.history().len(), 3);
    }

    #[test]
    fn half_the_buffer_succeeded() {
        let mut s = HybridState::new(cfg(50.0, 30, 30)).unwrap();
        for _ in 0..30 {
            s.advance(100);
        }
        // each alternate block lands above the window median
        for i in 0..30 {
            s.advance(if i % 2 == 0 { 100 } else { 101 });
        }
        assert_eq!(s.instant_success_rate().unwrap(), 0.5);
    }

    #[test]
    fn steady_case_quotes_gs() {
        // constant history: rate 1 at α = 95 stays inside [0.85, 1.05]
        let s = HybridState::from_history(cfg(95.0, 5, 10), &[7; 20]).unwrap();
        let q = s.quote_with(|_| panic!("GP not needed")).unwrap();
        assert_eq!(q.case, HybridCase::Steady);
        assert_eq!(q.price, 7);
    }

    #[test]
    fn retune_requires_case_c() {
        let s = HybridState::from_history(cfg(95.0, 5, 10), &[7; 20]).unwrap();
        assert!(matches!(s.find_alpha_prime(), Err(Error::Precondition(_))));
        let empty = HybridState::new(cfg(75.0, 5, 10)).unwrap();
        assert!(matches!(empty.find_alpha_prime(), Err(Error::State(_))));
    }

    #[test]
    fn constant_history_cannot_retune() {
        // every level succeeds, so no α′ lands in [0.65, 0.85]
        let s = HybridState::from_history(cfg(75.0, 5, 10), &[7; 20]).unwrap();
        assert_eq!(s.find_alpha_prime().unwrap(), 75.0);
        let q = s.quote_with(|_| panic!("GP not needed")).unwrap();
        assert_eq!(q.case, HybridCase::Retune { alpha_prime: 75.0 });
        assert_eq!(q.price, 7);
    }

    #[test]
    fn insufficient_history() {
        let s = HybridState::from_history(cfg(75.0, 5, 10), &[7; 9]).unwrap();
        assert!(matches!(
            s.quote_with(|_| Ok(0)),
            Err(Error::InsufficientHistory { .. })
        ));
    }
}
