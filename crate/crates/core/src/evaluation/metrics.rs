//! Success indicators and the aggregate metrics built on them.

use crate::error::{Error, Result};
use crate::{Wei, GWEI};

/// `true` when the quote is at least the block's actual minimum price.
pub fn success_indicator(predicted: Wei, actual: Wei) -> bool {
    predicted >= actual
}

pub fn success_rate(indicators: &[bool]) -> Result<f64> {
    if indicators.is_empty() {
        return Err(Error::Domain("success rate over zero blocks".into()));
    }
    Ok(indicators.iter().filter(|&&t| t).count() as f64 / indicators.len() as f64)
}

/// Mean predicted price in Gwei.
pub fn average_cost(predicted: &[Wei]) -> Result<f64> {
    if predicted.is_empty() {
        return Err(Error::Domain("average cost over zero predictions".into()));
    }
    let sum: f64 = predicted.iter().map(|&p| p as f64).sum();
    Ok(sum / predicted.len() as f64 / GWEI)
}

/// Inverse probability weight: average cost over success rate.
pub fn ipw(avg_cost_gwei: f64, rate: f64) -> Result<f64> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::Domain(format!("IPW undefined for success rate {rate}")));
    }
    Ok(avg_cost_gwei / rate)
}

/// Smallest success rate over every run of `m` consecutive targets.
pub fn min_short_term_success(indicators: &[bool], m: usize) -> Result<f64> {
    if m == 0 || indicators.len() < m {
        return Err(Error::Domain(format!(
            "window of {m} over {} indicators",
            indicators.len()
        )));
    }
    let mut hits: usize = indicators[..m].iter().filter(|&&t| t).count();
    let mut min_hits = hits;
    for i in m..indicators.len() {
        hits += indicators[i] as usize;
        hits -= indicators[i - m] as usize;
        min_hits = min_hits.min(hits);
    }
    Ok(min_hits as f64 / m as f64)
}
