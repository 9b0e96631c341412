use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use gas_oracle_core::baseline::PercentileOracle;
use gas_oracle_core::config::{parse_alphas, parse_range, DEFAULT_ALPHAS};
use gas_oracle_core::evaluation::format_alpha;
use gas_oracle_core::hybrid::HybridCase;
use gas_oracle_core::ingest::{self, Format, PROCESSED_HEADER};
use gas_oracle_core::oracle::GpOracle;
use gas_oracle_core::preprocess::{filter_small_blocks, preprocess_chain};
use gas_oracle_core::report::{self, Comparison};
use gas_oracle_core::{
    BacktestReport, BacktestSpec, Error, FitConfig, HybridConfig, HybridOracle, Oracle, ProcessedBlock, Result,
};
use serde_json::{json, Value};
use tracing::info;

use crate::{
    BacktestArgs, CompareArgs, Context, HybridArgs, IngestArgs, OracleKind, OutputFormat, PlotDataArgs, PreprocessArgs,
    QuoteArgs, SeriesArgs,
};

const GWEI: f64 = 1e9;

fn output_path(ctx: &Context, path: &Path) -> Result<PathBuf> {
    let full = match &ctx.out_dir {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    };
    if let Some(parent) = full.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    Ok(full)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Processed CSV as is; anything else is read as raw blocks and preprocessed.
fn load_series(path: &Path) -> Result<Vec<ProcessedBlock>> {
    let file = File::open(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut first = String::new();
    BufReader::new(file).read_line(&mut first).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let header: Vec<&str> = first.trim().split(',').map(str::trim).collect();
    if header == PROCESSED_HEADER {
        return ingest::load_processed(path);
    }
    let ds = ingest::load_blocks(path, Format::from_path(path))?;
    Ok(preprocess_chain(&ds))
}

pub fn ingest(ctx: &Context, args: &IngestArgs) -> Result<()> {
    let out = output_path(ctx, &args.out)?;
    if let Some(input) = &args.input {
        let ds = ingest::load_blocks(input, Format::from_path(input))?;
        ingest::write_raw_csv(&ds.blocks, &out, false)?;
        let txs: usize = ds.blocks.iter().map(|b| b.gas_prices.len()).sum();
        println!("{} blocks, {txs} transactions -> {}", ds.blocks.len(), out.display());
        return Ok(());
    }
    let url = ctx.config.resolve_rpc_url(args.rpc.as_deref()).ok_or_else(|| {
        Error::Config(format!(
            "no input file and no RPC endpoint (use --rpc or set {})",
            ingest::RPC_URL_ENV
        ))
    })?;
    let (start, end) = (args.start.unwrap_or(0), args.end.unwrap_or(0));
    if start > end {
        return Err(Error::Config(format!("start block {start} is after end block {end}")));
    }
    let fetch = &ctx.config.fetch;
    let fetched = ingest::fetch_to_csv(&url, start, end, &out, fetch.chunk.max(1), &fetch.to_fetch_config())?;
    println!("fetched {fetched} blocks {start}..={end} -> {}", out.display());
    Ok(())
}

pub fn preprocess(ctx: &Context, args: &PreprocessArgs) -> Result<()> {
    let ds = ingest::load_blocks(&args.input, Format::from_path(&args.input))?;
    let kept = filter_small_blocks(&ds.blocks).len();
    let processed = preprocess_chain(&ds);
    let out = output_path(ctx, &args.out)?;
    ingest::save_processed(&processed, &out)?;
    println!(
        "{} raw blocks, {} below the size threshold, {} processed -> {}",
        ds.blocks.len(),
        ds.blocks.len() - kept,
        processed.len(),
        out.display()
    );
    Ok(())
}

fn hybrid_config(ctx: &Context, args: &HybridArgs) -> HybridConfig {
    let base = &ctx.config.hybrid;
    HybridConfig {
        alpha: base.alpha,
        n_gs: args.n_gs.unwrap_or(base.n_gs),
        n_gp: args.n_gp.unwrap_or(base.n_gp),
        e: args.e.unwrap_or(base.e),
    }
}

fn fit_config(ctx: &Context, refit_every: Option<usize>) -> FitConfig {
    let mut fit = ctx.config.fit.clone();
    if let Some(k) = refit_every {
        fit.refit_every = k;
    }
    fit
}

fn build_oracle(
    kind: OracleKind,
    train_size: Option<usize>,
    fit: &FitConfig,
    hybrid: &HybridConfig,
) -> Result<Box<dyn Oracle>> {
    Ok(match kind {
        OracleKind::Gp => Box::new(GpOracle::new(train_size.unwrap_or(200), fit.clone())?),
        OracleKind::GsExpress => Box::new(PercentileOracle::gs_express(train_size.unwrap_or(200))?),
        OracleKind::Geth => Box::new(PercentileOracle::geth(train_size.unwrap_or(100))?),
        OracleKind::Hybrid => Box::new(HybridOracle::new(hybrid.clone(), fit.clone())?),
    })
}

struct Plan {
    series: Vec<ProcessedBlock>,
    spec: BacktestSpec,
    train_size: Option<usize>,
    fit: FitConfig,
    hybrid: HybridConfig,
}

fn plan(ctx: &Context, args: &SeriesArgs) -> Result<Plan> {
    let section = &ctx.config.backtest;
    let alphas = match &args.alphas {
        Some(s) => parse_alphas(s)?,
        None => section.alphas.clone().unwrap_or_else(|| DEFAULT_ALPHAS.to_vec()),
    };
    let (first, last) = match args.range.as_deref().or(section.range.as_deref()) {
        Some(r) => parse_range(r)?,
        None => (None, None),
    };
    Ok(Plan {
        series: load_series(&args.input)?,
        spec: BacktestSpec::new(alphas).range(first, last),
        train_size: args.train_size.or(section.train_size),
        fit: fit_config(ctx, args.refit_every),
        hybrid: hybrid_config(ctx, &args.hybrid),
    })
}

fn echo(input: &Path, plan: &Plan, oracles: &[Value]) -> Value {
    json!({
        "input": input.display().to_string(),
        "blocks": plan.series.len(),
        "alphas": plan.spec.alphas,
        "first_target": plan.spec.first_target,
        "last_target": plan.spec.last_target,
        "oracles": oracles,
    })
}

fn log_timing(r: &BacktestReport) {
    info!(
        oracle = %r.oracle,
        targets = r.target_count(),
        total_secs = r.timing.total_secs,
        per_target_secs = r.timing.per_target_secs,
        "backtest finished"
    );
}

fn print_reports(ctx: &Context, config: &Value, reports: &[BacktestReport], json_body: &str) {
    match ctx.format {
        OutputFormat::Json => println!("{json_body}"),
        OutputFormat::Csv => print!("{}", report::summary_csv(reports)),
        OutputFormat::Table => {
            println!("# config: {config}");
            for r in reports {
                println!(
                    "# {}: targets {}..={} (blocks {}..={})",
                    r.oracle, r.first_target, r.last_target, r.first_block, r.last_block
                );
                for w in &r.warnings {
                    println!("# warning: {w}");
                }
            }
            println!();
            print!("{}", report::render_long_run_table(reports));
            print!("{}", report::render_short_term_table(reports));
        }
    }
}

pub fn backtest(ctx: &Context, args: &BacktestArgs) -> Result<()> {
    let plan = plan(ctx, &args.series)?;
    let oracle = build_oracle(args.oracle, plan.train_size, &plan.fit, &plan.hybrid)?;
    let config = echo(&args.series.input, &plan, &[oracle.describe()]);
    let report = gas_oracle_core::backtest(oracle.as_ref(), &plan.series, &plan.spec)?;
    log_timing(&report);
    let body = serde_json::to_string_pretty(&report).expect("report serializes");
    if let Some(out) = &args.out {
        let path = output_path(ctx, out)?;
        write_file(&path, &body)?;
        info!(path = %path.display(), "report written");
    }
    print_reports(ctx, &config, std::slice::from_ref(&report), &body);
    Ok(())
}

pub fn compare(ctx: &Context, args: &CompareArgs) -> Result<()> {
    let names: Vec<String> = match (&args.oracles, &ctx.config.backtest.oracles) {
        (Some(s), _) => s.split(',').map(|v| v.trim().to_owned()).collect(),
        (None, Some(v)) => v.clone(),
        (None, None) => ["gp", "gs-express", "geth", "hybrid"].map(String::from).to_vec(),
    };
    let plan = plan(ctx, &args.series)?;
    let oracles = names
        .iter()
        .map(|n| {
            let kind = OracleKind::parse(n).ok_or_else(|| Error::Config(format!("unknown oracle `{n}`")))?;
            build_oracle(kind, plan.train_size, &plan.fit, &plan.hybrid)
        })
        .collect::<Result<Vec<_>>>()?;
    let described: Vec<Value> = oracles.iter().map(|o| o.describe()).collect();
    let config = echo(&args.series.input, &plan, &described);
    let refs: Vec<&dyn Oracle> = oracles.iter().map(|o| o.as_ref()).collect();
    let comparison = report::compare(&refs, &plan.series, &plan.spec, config.clone())?;
    comparison.reports.iter().for_each(log_timing);
    let body = serde_json::to_string_pretty(&comparison).expect("comparison serializes");
    if let Some(out) = &args.out {
        write_file(&output_path(ctx, out)?, &body)?;
    }
    print_reports(ctx, &config, &comparison.reports, &body);
    Ok(())
}

pub fn quote(ctx: &Context, args: &QuoteArgs) -> Result<()> {
    let series = load_series(&args.history)?;
    let ys: Vec<_> = series.iter().map(|b| b.y).collect();
    let next_block = series.last().map(|b| b.block_number + 1);
    let fit = fit_config(ctx, None);
    let hybrid = hybrid_config(ctx, &args.hybrid);
    let oracle = build_oracle(args.oracle, args.train_size, &fit, &hybrid)?;
    if ys.len() < oracle.warmup() {
        return Err(Error::InsufficientHistory {
            needed: oracle.warmup(),
            available: ys.len(),
        });
    }
    let mut out = json!({
        "oracle": oracle.name(),
        "config": oracle.describe(),
        "alpha": args.alpha,
        "next_block": next_block,
    });
    let price = if args.oracle == OracleKind::Hybrid {
        let h = HybridOracle::new(hybrid, fit)?;
        let q = h.quote_detailed(&ys, args.alpha)?;
        out["hybrid"] = serde_json::to_value(q).expect("quote serializes");
        q.price
    } else {
        oracle.quote(&ys, &[args.alpha])?[0]
    };
    out["price_wei"] = json!(price.to_string());
    out["price_gwei"] = json!(price as f64 / GWEI);
    match ctx.format {
        OutputFormat::Json => println!("{}", serde_json::to_string_pretty(&out).expect("quote serializes")),
        OutputFormat::Csv => {
            println!("oracle,alpha,next_block,price_wei");
            println!(
                "{},{},{},{price}",
                oracle.name(),
                format_alpha(args.alpha),
                next_block.map_or_else(String::new, |b| b.to_string())
            );
        }
        OutputFormat::Table => {
            print!(
                "{} P{} = {:.3} Gwei",
                oracle.name(),
                format_alpha(args.alpha),
                price as f64 / GWEI
            );
            if let Some(b) = next_block {
                print!(" for block {b}");
            }
            if args.oracle == OracleKind::Hybrid {
                let case = match serde_json::from_value::<HybridCase>(out["hybrid"].clone()) {
                    Ok(HybridCase::FallBack) => "fall back to GP".to_owned(),
                    Ok(HybridCase::Steady) => "steady".to_owned(),
                    Ok(HybridCase::Retune { alpha_prime }) => format!("retuned to P{alpha_prime:.3}"),
                    Err(_) => "unknown".to_owned(),
                };
                print!(" ({case}, instant rate {})", out["hybrid"]["rate"]);
            }
            println!();
        }
    }
    Ok(())
}

fn read_reports(path: &Path) -> Result<Vec<BacktestReport>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let schema = |e: serde_json::Error| Error::Schema {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let value: Value = serde_json::from_str(&text).map_err(schema)?;
    if value.get("reports").is_some() {
        Ok(serde_json::from_value::<Comparison>(value).map_err(schema)?.reports)
    } else {
        Ok(vec![serde_json::from_value(value).map_err(schema)?])
    }
}

pub fn plot_data(ctx: &Context, args: &PlotDataArgs) -> Result<()> {
    let mut reports = Vec::new();
    for p in &args.reports {
        reports.extend(read_reports(p)?);
    }
    let only = args.alphas.as_deref().map(parse_alphas).transpose()?;
    let rows = report::plot_rows(&reports, only.as_deref());
    match &args.out {
        Some(out) => {
            let path = output_path(ctx, out)?;
            let file = File::create(&path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            report::write_plot_csv(&rows, file)?;
            println!("{} rows -> {}", rows.len(), path.display());
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            match report::write_plot_csv(&rows, &mut lock) {
                // the reader went away, e.g. `| head`
                Err(Error::Io { source, .. }) if source.kind() == std::io::ErrorKind::BrokenPipe => {}
                other => other?,
            }
            let _ = lock.flush();
        }
    }
    Ok(())
}
