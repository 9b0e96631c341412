//! Backtesting: roll an oracle over a processed series, score every quote,
//! and aggregate per percentile level.

pub mod metrics;

use std::time::Instant;

use rayon::prelude::*;
use serde::de::Deserializer;
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::oracle::Oracle;
use crate::percentile::level_to_quantile;
use crate::preprocess::ProcessedBlock;
use crate::Wei;

pub use metrics::{average_cost, ipw, min_short_term_success, success_indicator, success_rate};

/// Short-term window lengths reported by default.
pub const SHORT_TERM_WINDOWS: [usize; 3] = [25, 50, 100];

/// Targets handed to one worker at a time.
const CHUNK: usize = 64;

/// One quote scored against the realized minimum price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    /// 1-based position of the target in the processed series.
    pub target_index: usize,
    pub block_number: u64,
    pub alpha: f64,
    #[serde(with = "wei_string")]
    pub predicted_price: Wei,
    #[serde(with = "wei_string")]
    pub actual_y: Wei,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortTerm {
    pub m: usize,
    /// `None` when the run is shorter than `m`.
    pub min_success_rate: Option<f64>,
}

/// Aggregates at one percentile level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaAggregate {
    pub alpha: f64,
    pub long_run_success_rate: f64,
    pub average_cost_gwei: f64,
    /// Absent when the success rate is zero.
    pub ipw: Option<f64>,
    pub min_short_term: Vec<ShortTerm>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Timing {
    pub total_secs: f64,
    pub per_target_secs: f64,
}

/// Result of one backtest. Wall-clock timing is kept out of the serialized
/// form so reruns produce identical JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub oracle: String,
    pub config: Value,
    pub alphas: Vec<f64>,
    /// First and last target positions (1-based, inclusive).
    pub first_target: usize,
    pub last_target: usize,
    pub first_block: u64,
    pub last_block: u64,
    /// One sequence per entry of `alphas`.
    pub records: Vec<Vec<PredictionRecord>>,
    #[serde(serialize_with = "aggregates_by_alpha", deserialize_with = "aggregates_from_map")]
    pub aggregates: Vec<AlphaAggregate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub timing: Timing,
}

impl BacktestReport {
    pub fn aggregate(&self, alpha: f64) -> Option<&AlphaAggregate> {
        self.aggregates.iter().find(|a| a.alpha == alpha)
    }

    pub fn indicators(&self, alpha_idx: usize) -> Vec<bool> {
        self.records[alpha_idx].iter().map(|r| r.success).collect()
    }

    pub fn target_count(&self) -> usize {
        self.last_target + 1 - self.first_target
    }
}

/// Which targets to score and at which levels.
#[derive(Debug, Clone, PartialEq)]
pub struct BacktestSpec {
    pub alphas: Vec<f64>,
    /// First target, 1-based position in the series. `None` means right after warm-up.
    pub first_target: Option<usize>,
    /// Last target, 1-based inclusive. `None` means the end of the series.
    pub last_target: Option<usize>,
    pub short_term_windows: Vec<usize>,
}

impl BacktestSpec {
    pub fn new(alphas: Vec<f64>) -> Self {
        BacktestSpec {
            alphas,
            first_target: None,
            last_target: None,
            short_term_windows: SHORT_TERM_WINDOWS.to_vec(),
        }
    }

    pub fn range(mut self, first: Option<usize>, last: Option<usize>) -> Self {
        self.first_target = first;
        self.last_target = last;
        self
    }
}

/// Runs `oracle` over `series`. The target at 1-based position `i` is quoted
/// from positions `1..i` and compared with `y_i`.
///
/// Fails with [`Error::Invariant`] if a monotone oracle quotes a lower price
/// at a higher level or the success rate decreases in α.
pub fn backtest(oracle: &dyn Oracle, series: &[ProcessedBlock], spec: &BacktestSpec) -> Result<BacktestReport> {
    if spec.alphas.is_empty() {
        return Err(Error::Config("backtest needs at least one alpha".into()));
    }
    for &a in &spec.alphas {
        level_to_quantile(a)?;
    }
    let warmup = oracle.warmup();
    let first = spec.first_target.unwrap_or(warmup + 1);
    let last = spec.last_target.unwrap_or(series.len());
    if first <= warmup {
        return Err(Error::InsufficientHistory {
            needed: warmup,
            available: first.saturating_sub(1),
        });
    }
    if spec.first_target.is_none() && spec.last_target.is_none() && series.len() <= warmup {
        return Err(Error::InsufficientHistory {
            needed: warmup + 1,
            available: series.len(),
        });
    }
    if last > series.len() || last < first {
        return Err(Error::Config(format!(
            "target range {first}:{last} is outside the series of {} blocks",
            series.len()
        )));
    }

    let ys: Vec<Wei> = series.iter().map(|b| b.y).collect();
    let targets: Vec<usize> = (first..=last).collect();
    let started = Instant::now();
    let quotes: Vec<Vec<Wei>> = targets
        .par_chunks(CHUNK)
        .map(|chunk| {
            chunk
                .iter()
                .map(|&t| oracle.quote(&ys[..t - 1], &spec.alphas))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let elapsed = started.elapsed().as_secs_f64();

    let mut records: Vec<Vec<PredictionRecord>> = vec![Vec::with_capacity(targets.len()); spec.alphas.len()];
    for (&t, q) in targets.iter().zip(&quotes) {
        let actual = ys[t - 1];
        for (k, (&alpha, &price)) in spec.alphas.iter().zip(q).enumerate() {
            records[k].push(PredictionRecord {
                target_index: t,
                block_number: series[t - 1].block_number,
                alpha,
                predicted_price: price,
                actual_y: actual,
                success: success_indicator(price, actual),
            });
        }
    }

    let mut aggregates = Vec::with_capacity(spec.alphas.len());
    for (k, &alpha) in spec.alphas.iter().enumerate() {
        let ind: Vec<bool> = records[k].iter().map(|r| r.success).collect();
        let prices: Vec<Wei> = records[k].iter().map(|r| r.predicted_price).collect();
        let rate = success_rate(&ind)?;
        let cost = average_cost(&prices)?;
        aggregates.push(AlphaAggregate {
            alpha,
            long_run_success_rate: rate,
            average_cost_gwei: cost,
            ipw: ipw(cost, rate).ok(),
            min_short_term: spec
                .short_term_windows
                .iter()
                .map(|&m| ShortTerm {
                    m,
                    min_success_rate: min_short_term_success(&ind, m).ok(),
                })
                .collect(),
        });
    }

    let mut report = BacktestReport {
        oracle: oracle.name(),
        config: oracle.describe(),
        alphas: spec.alphas.clone(),
        first_target: first,
        last_target: last,
        first_block: series[first - 1].block_number,
        last_block: series[last - 1].block_number,
        records,
        aggregates,
        warnings: Vec::new(),
        timing: Timing {
            total_secs: elapsed,
            per_target_secs: elapsed / targets.len() as f64,
        },
    };
    let violations = monotonicity_violations(&report);
    if !violations.is_empty() {
        if oracle.monotone_in_alpha() {
            return Err(Error::Invariant(violations.join("; ")));
        }
        report.warnings = violations;
    }
    Ok(report)
}

/// Checks that quotes and success rates never decrease as α increases.
pub fn monotonicity_violations(report: &BacktestReport) -> Vec<String> {
    let mut order: Vec<usize> = (0..report.alphas.len()).collect();
    order.sort_by(|&a, &b| report.alphas[a].total_cmp(&report.alphas[b]));
    let mut out = Vec::new();
    for pair in order.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        let (a_lo, a_hi) = (report.alphas[lo], report.alphas[hi]);
        let r_lo = report.aggregates[lo].long_run_success_rate;
        let r_hi = report.aggregates[hi].long_run_success_rate;
        if r_hi < r_lo {
            out.push(format!("success rate {r_hi} at P{a_hi} is below {r_lo} at P{a_lo}"));
        }
        let bad = report.records[lo]
            .iter()
            .zip(&report.records[hi])
            .filter(|(l, h)| h.predicted_price < l.predicted_price)
            .count();
        if bad > 0 {
            let first = report.records[lo]
                .iter()
                .zip(&report.records[hi])
                .find(|(l, h)| h.predicted_price < l.predicted_price)
                .map(|(l, _)| l.target_index)
                .unwrap_or_default();
            out.push(format!(
                "P{a_hi} quoted below P{a_lo} at {bad} targets (first at position {first})"
            ));
        }
    }
    out
}

fn aggregates_by_alpha<S: Serializer>(aggs: &[AlphaAggregate], s: S) -> Result<S::Ok, S::Error> {
    let mut map = s.serialize_map(Some(aggs.len()))?;
    for a in aggs {
        map.serialize_entry(&format_alpha(a.alpha), a)?;
    }
    map.end()
}

fn aggregates_from_map<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<AlphaAggregate>, D::Error> {
    let map = std::collections::BTreeMap::<String, AlphaAggregate>::deserialize(d)?;
    let mut v: Vec<_> = map.into_values().collect();
    v.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
    Ok(v)
}

/// `75` for whole levels, `84.13` otherwise.
pub fn format_alpha(alpha: f64) -> String {
    if alpha.fract() == 0.0 {
        format!("{alpha:.0}")
    } else {
        format!("{alpha}")
    }
}

mod wei_string {
    use serde::{de, Deserialize, Deserializer, Serializer};

    use crate::Wei;

    pub fn serialize<S: Serializer>(v: &Wei, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Wei, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(de::Error::custom)
    }
}
