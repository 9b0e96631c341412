//! Side-by-side comparison tables and per-block plot data.

use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::evaluation::{backtest, format_alpha, BacktestReport, BacktestSpec};
use crate::oracle::Oracle;
use crate::preprocess::ProcessedBlock;
use crate::GWEI;

/// Several backtests over the same series and levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub config: Value,
    pub reports: Vec<BacktestReport>,
}

/// Without an explicit first target, every oracle starts after the longest warm-up
/// so the reports score the same blocks.
pub fn compare(
    oracles: &[&dyn Oracle],
    series: &[ProcessedBlock],
    spec: &BacktestSpec,
    config: Value,
) -> Result<Comparison> {
    let mut spec = spec.clone();
    if spec.first_target.is_none() {
        spec.first_target = oracles.iter().map(|o| o.warmup() + 1).max();
    }
    let reports = oracles
        .iter()
        .map(|o| backtest(*o, series, &spec))
        .collect::<Result<Vec<_>>>()?;
    Ok(Comparison { config, reports })
}

fn levels(reports: &[BacktestReport]) -> Vec<f64> {
    reports.first().map(|r| r.alphas.clone()).unwrap_or_default()
}

fn opt3(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.3}"))
}

/// Success rate, average cost and IPW per oracle and level.
pub fn render_long_run_table(reports: &[BacktestReport]) -> String {
    let alphas = levels(reports);
    let heads: Vec<String> = alphas.iter().map(|a| format!("P{}", format_alpha(*a))).collect();
    let name_w = reports.iter().map(|r| r.oracle.len()).max().unwrap_or(6).max(6);
    let mut out = String::new();
    for (title, pick) in [
        ("Success rate", 0usize),
        ("Average cost (Gwei)", 1),
        ("Inverse probability weight", 2),
    ] {
        let _ = writeln!(out, "{title}");
        let _ = write!(out, "{:<name_w$}", "Method");
        for h in &heads {
            let _ = write!(out, " {h:>10}");
        }
        out.push('\n');
        for r in reports {
            let _ = write!(out, "{:<name_w$}", r.oracle);
            for agg in &r.aggregates {
                let cell = match pick {
                    0 => format!("{:.3}", agg.long_run_success_rate),
                    1 => format!("{:.3}", agg.average_cost_gwei),
                    _ => opt3(agg.ipw),
                };
                let _ = write!(out, " {cell:>10}");
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

/// Minimum short-term success rate: one row per window length, one column
/// per (oracle, level).
pub fn render_short_term_table(reports: &[BacktestReport]) -> String {
    let Some(first) = reports.first() else {
        return String::new();
    };
    let windows: Vec<usize> = first
        .aggregates
        .first()
        .map(|a| a.min_short_term.iter().map(|s| s.m).collect())
        .unwrap_or_default();
    let mut out = String::from("Minimum short-term success rate\n");
    let _ = write!(out, "{:>5}", "m");
    for r in reports {
        for a in &r.alphas {
            let head = format!("{}:P{}", r.oracle, format_alpha(*a));
            let _ = write!(out, " {head:>16}");
        }
    }
    out.push('\n');
    for (wi, m) in windows.iter().enumerate() {
        let _ = write!(out, "{m:>5}");
        for r in reports {
            for agg in &r.aggregates {
                let _ = write!(out, " {:>16}", opt3(agg.min_short_term[wi].min_success_rate));
            }
        }
        out.push('\n');
    }
    out
}

/// One CSV row per oracle with rate, cost and IPW columns per level.
pub fn summary_csv(reports: &[BacktestReport]) -> String {
    let alphas = levels(reports);
    let mut out = String::from("method");
    for metric in ["success_rate", "average_cost_gwei", "ipw"] {
        for a in &alphas {
            let _ = write!(out, ",{metric}_p{}", format_alpha(*a));
        }
    }
    out.push('\n');
    for r in reports {
        out.push_str(&r.oracle);
        for a in &r.aggregates {
            let _ = write!(out, ",{:.3}", a.long_run_success_rate);
        }
        for a in &r.aggregates {
            let _ = write!(out, ",{:.3}", a.average_cost_gwei);
        }
        for a in &r.aggregates {
            let _ = write!(out, ",{}", a.ipw.map_or_else(String::new, |v| format!("{v:.3}")));
        }
        out.push('\n');
    }
    out
}

/// Actual versus predicted price for one block, oracle and level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub block_number: u64,
    pub actual_gwei: f64,
    pub oracle: String,
    pub alpha: f64,
    pub predicted_gwei: f64,
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// Flattens reports into plot rows, optionally keeping only some levels.
pub fn plot_rows(reports: &[BacktestReport], only: Option<&[f64]>) -> Vec<PlotRow> {
    let mut rows = Vec::new();
    for r in reports {
        for (k, &alpha) in r.alphas.iter().enumerate() {
            if only.is_some_and(|keep| !keep.contains(&alpha)) {
                continue;
            }
            rows.extend(r.records[k].iter().map(|rec| PlotRow {
                block_number: rec.block_number,
                actual_gwei: round3(rec.actual_y as f64 / GWEI),
                oracle: r.oracle.clone(),
                alpha,
                predicted_gwei: round3(rec.predicted_price as f64 / GWEI),
            }));
        }
    }
    rows
}

pub const PLOT_HEADER: [&str; 5] = ["block_number", "actual_gwei", "oracle", "alpha", "predicted_gwei"];

pub fn write_plot_csv<W: Write>(rows: &[PlotRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    let err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: "<plot output>".into(),
            source,
        },
        other => Error::Invariant(format!("writing plot csv: {other:?}")),
    };
    w.write_record(PLOT_HEADER).map_err(err)?;
    for r in rows {
        w.write_record([
            r.block_number.to_string(),
            format!("{:.3}", r.actual_gwei),
            r.oracle.clone(),
            format_alpha(r.alpha),
            format!("{:.3}", r.predicted_gwei),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: "<plot output>".into(),
        source,
    })
}

pub fn read_plot_csv<R: Read>(input: R) -> Result<Vec<PlotRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers().map_err(|e| Error::Config(e.to_string()))?.clone();
    if header.iter().ne(PLOT_HEADER) {
        return Err(Error::Config(format!(
            "unexpected plot header `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    rdr.deserialize()
        .map(|r| r.map_err(|e: csv::Error| Error::Config(e.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::PercentileOracle;

    fn series() -> Vec<ProcessedBlock> {
        (0..40u64)
            .map(|i| ProcessedBlock::new(500 + i, (100 + (i * 7919) % 37) as u128 * 1_000_000_000))
            .collect()
    }

    #[test]
    fn tables_have_one_row_per_oracle() {
        let gs = PercentileOracle::gs_express(20).unwrap();
        let geth = PercentileOracle::geth(10).unwrap();
        let spec = BacktestSpec::new(vec![50.0]).range(Some(21), None);
        let cmp = compare(&[&gs, &geth], &series(), &spec, Value::Null).unwrap();
        let table = render_long_run_table(&cmp.reports);
        assert_eq!(table.lines().filter(|l| l.starts_with("gs-express")).count(), 3);
        assert!(table.contains("P50"));
        let csv = summary_csv(&cmp.reports);
        assert_eq!(csv.lines().count(), 3);
        assert_eq!(
            csv.lines().next().unwrap(),
            "method,success_rate_p50,average_cost_gwei_p50,ipw_p50"
        );
        let short = render_short_term_table(&cmp.reports);
        assert_eq!(short.lines().count(), 2 + 3);
    }

    #[test]
    fn compare_aligns_targets() {
        let gs = PercentileOracle::gs_express(20).unwrap();
        let geth = PercentileOracle::geth(10).unwrap();
        let cmp = compare(&[&geth, &gs], &series(), &BacktestSpec::new(vec![50.0]), Value::Null).unwrap();
        assert_eq!(cmp.reports[0].first_target, 21);
        assert_eq!(cmp.reports[1].first_target, 21);
        assert_eq!(cmp.reports[0].target_count(), 20);
    }

    #[test]
    fn plot_rows_count_and_round_trip() {
        let gs = PercentileOracle::gs_express(20).unwrap();
        let geth = PercentileOracle::geth(20).unwrap();
        let spec = BacktestSpec::new(vec![50.0, 75.0]).range(Some(21), None);
        let cmp = compare(&[&gs, &geth], &series(), &spec, Value::Null).unwrap();
        let rows = plot_rows(&cmp.reports, Some(&[75.0]));
        assert_eq!(rows.len(), 2 * 20);
        let mut buf = Vec::new();
        write_plot_csv(&rows, &mut buf).unwrap();
        assert_eq!(read_plot_csv(buf.as_slice()).unwrap(), rows);

        let mut empty = Vec::new();
        write_plot_csv(&[], &mut empty).unwrap();
        assert_eq!(
            String::from_utf8(empty).unwrap(),
            "block_number,actual_gwei,oracle,alpha,predicted_gwei\n"
        );
    }
}
