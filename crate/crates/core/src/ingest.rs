//! Raw block data: CSV/JSON loading, JSON-RPC fetching, and the processed
//! block cache.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::preprocess::ProcessedBlock;
use crate::Wei;

pub const RAW_HEADER: [&str; 3] = ["block_number", "tx_index", "gas_price_wei"];
pub const PROCESSED_HEADER: [&str; 2] = ["block_number", "min_gas_price_wei"];

/// Default endpoint when no `--rpc` flag is given.
pub const RPC_URL_ENV: &str = "GAS_ORACLE_RPC_URL";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawBlock {
    pub block_number: u64,
    /// Offered gas price of every transaction, in block order.
    #[serde(with = "wei_list")]
    pub gas_prices: Vec<Wei>,
}

/// Blocks in strictly increasing block-number order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dataset {
    pub blocks: Vec<RawBlock>,
    pub source: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// Guess from the file extension; anything but `.json` is CSV.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        }
    }
}

pub fn load_blocks(path: &Path, format: Format) -> Result<Dataset> {
    let blocks = match format {
        Format::Csv => load_raw_csv(path)?,
        Format::Json => load_raw_json(path)?,
    };
    Ok(Dataset {
        blocks,
        source: path.display().to_string(),
    })
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn check_header(rdr: &mut csv::Reader<File>, path: &Path, expected: &[&str]) -> Result<()> {
    let header = rdr.headers().map_err(|e| Error::Schema {
        path: path.into(),
        message: e.to_string(),
    })?;
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if found != expected {
        return Err(Error::Schema {
            path: path.into(),
            message: format!("expected header `{}`, found `{}`", expected.join(","), found.join(",")),
        });
    }
    Ok(())
}

fn parse_field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    idx: usize,
    name: &str,
    path: &Path,
    line: u64,
) -> Result<T> {
    let raw = record.get(idx).unwrap_or("").trim();
    raw.parse().map_err(|_| Error::Parse {
        path: path.into(),
        line,
        message: format!("invalid {name} `{raw}`"),
    })
}

fn load_raw_csv(path: &Path) -> Result<Vec<RawBlock>> {
    let mut rdr = csv_reader(path)?;
    check_header(&mut rdr, path, &RAW_HEADER)?;
    let mut blocks: Vec<RawBlock> = Vec::new();
    let mut seen_tx: HashSet<u64> = HashSet::new();
    for row in rdr.records() {
        let record = row.map_err(|e| Error::Parse {
            path: path.into(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != RAW_HEADER.len() {
            return Err(Error::Parse {
                path: path.into(),
                line,
                message: format!("expected {} fields, found {}", RAW_HEADER.len(), record.len()),
            });
        }
        let block_number: u64 = parse_field(&record, 0, "block_number", path, line)?;
        let tx_index: u64 = parse_field(&record, 1, "tx_index", path, line)?;
        let price: Wei = parse_field(&record, 2, "gas_price_wei", path, line)?;
        match blocks.last_mut() {
            Some(last) if last.block_number == block_number => {}
            Some(last) if last.block_number > block_number => {
                return Err(Error::Ordering {
                    path: path.into(),
                    previous: last.block_number,
                    found: block_number,
                });
            }
            _ => {
                seen_tx.clear();
                blocks.push(RawBlock {
                    block_number,
                    gas_prices: Vec::new(),
                });
            }
        }
        if !seen_tx.insert(tx_index) {
            return Err(Error::Parse {
                path: path.into(),
                line,
                message: format!("duplicate transaction {tx_index} in block {block_number}"),
            });
        }
        blocks.last_mut().expect("pushed above").gas_prices.push(price);
    }
    Ok(blocks)
}

fn load_raw_json(path: &Path) -> Result<Vec<RawBlock>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let blocks: Vec<RawBlock> = serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Parse {
        path: path.into(),
        line: e.line() as u64,
        message: e.to_string(),
    })?;
    for pair in blocks.windows(2) {
        if pair[1].block_number <= pair[0].block_number {
            return Err(Error::Ordering {
                path: path.into(),
                previous: pair[0].block_number,
                found: pair[1].block_number,
            });
        }
    }
    Ok(blocks)
}

/// Writes blocks in the raw CSV layout, appending when `append` is set.
pub fn write_raw_csv(blocks: &[RawBlock], path: &Path, append: bool) -> Result<()> {
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let fresh = file.metadata().map_err(|e| Error::io(path, e))?.len() == 0;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    if fresh {
        writeln!(out, "{}", RAW_HEADER.join(",")).map_err(io)?;
    }
    for b in blocks {
        for (i, p) in b.gas_prices.iter().enumerate() {
            writeln!(out, "{},{},{}", b.block_number, i, p).map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

pub fn save_processed(blocks: &[ProcessedBlock], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "{}", PROCESSED_HEADER.join(",")).map_err(io)?;
    for b in blocks {
        writeln!(out, "{},{}", b.block_number, b.y).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn load_processed(path: &Path) -> Result<Vec<ProcessedBlock>> {
    let mut rdr = csv_reader(path)?;
    check_header(&mut rdr, path, &PROCESSED_HEADER)?;
    let mut out: Vec<ProcessedBlock> = Vec::new();
    for row in rdr.records() {
        let record = row.map_err(|e| Error::Schema {
            path: path.into(),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != PROCESSED_HEADER.len() {
            return Err(Error::Schema {
                path: path.into(),
                message: format!("line {line}: expected 2 fields, found {}", record.len()),
            });
        }
        let block_number: u64 = parse_field(&record, 0, "block_number", path, line)?;
        let y: Wei = parse_field(&record, 1, "min_gas_price_wei", path, line)?;
        if let Some(prev) = out.last() {
            if prev.block_number >= block_number {
                return Err(Error::Ordering {
                    path: path.into(),
                    previous: prev.block_number,
                    found: block_number,
                });
            }
        }
        out.push(ProcessedBlock::new(block_number, y));
    }
    Ok(out)
}

/// Settings for [`fetch_block_range`].
#[derive(Debug, Clone)]
pub struct FetchConfig {
    /// Requests in flight at once.
    pub concurrency: usize,
    /// Attempts per block, including the first.
    pub max_attempts: u32,
    /// Delay before the first retry; doubles on each further retry.
    pub backoff: Duration,
    pub timeout: Duration,
}

impl Default for FetchConfig {
    fn default() -> Self {
        FetchConfig {
            concurrency: 4,
            max_attempts: 4,
            backoff: Duration::from_millis(250),
            timeout: Duration::from_secs(30),
        }
    }
}

/// Parses a `0x`-prefixed hex quantity.
pub fn parse_hex_quantity(s: &str) -> Option<Wei> {
    let digits = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X"))?;
    if digits.is_empty() || digits.len() > 32 {
        return None;
    }
    Wei::from_str_radix(digits, 16).ok()
}

enum Attempt {
    Transient(String),
    Fatal(Error),
}

fn request_block(agent: &ureq::Agent, endpoint: &str, block: u64) -> Result<RawBlock, Attempt> {
    let body = json!({
        "jsonrpc": "2.0",
        "id": block,
        "method": "eth_getBlockByNumber",
        "params": [format!("0x{block:x}"), true],
    });
    let response: Value = agent
        .post(endpoint)
        .send_json(body)
        .map_err(|e| Attempt::Transient(e.to_string()))?
        .into_json()
        .map_err(|e| Attempt::Transient(format!("unreadable response body: {e}")))?;
    if let Some(err) = response.get("error") {
        return Err(Attempt::Transient(format!("rpc error {err}")));
    }
    let schema = |message: String| Attempt::Fatal(Error::RpcSchema { block, message });
    let result = response
        .get("result")
        .ok_or_else(|| schema("response has no `result`".into()))?;
    if result.is_null() {
        return Err(schema("block not found".into()));
    }
    let txs = result
        .get("transactions")
        .and_then(Value::as_array)
        .ok_or_else(|| schema("`result.transactions` is not an array".into()))?;
    let mut gas_prices = Vec::with_capacity(txs.len());
    for (i, tx) in txs.iter().enumerate() {
        let raw = tx
            .get("gasPrice")
            .and_then(Value::as_str)
            .ok_or_else(|| schema(format!("transaction {i} has no gasPrice")))?;
        let price = parse_hex_quantity(raw)
            .ok_or_else(|| schema(format!("transaction {i} gasPrice `{raw}` is not a hex quantity")))?;
        gas_prices.push(price);
    }
    Ok(RawBlock {
        block_number: block,
        gas_prices,
    })
}

fn fetch_one(agent: &ureq::Agent, endpoint: &str, block: u64, cfg: &FetchConfig) -> Result<RawBlock> {
    let attempts = cfg.max_attempts.max(1);
    let mut delay = cfg.backoff;
    let mut last = String::new();
    for attempt in 1..=attempts {
        match request_block(agent, endpoint, block) {
            Ok(b) => return Ok(b),
            Err(Attempt::Fatal(e)) => return Err(e),
            Err(Attempt::Transient(msg)) => {
                tracing::debug!(block, attempt, %msg, "rpc request failed");
                last = msg;
                if attempt < attempts {
                    std::thread::sleep(delay);
                    delay *= 2;
                }
            }
        }
    }
    Err(Error::Fetch {
        block,
        attempts,
        message: last,
    })
}

/// Fetches blocks `start..=end` with full transactions and returns them in
/// block order.
pub fn fetch_block_range(endpoint: &str, start: u64, end: u64, cfg: &FetchConfig) -> Result<Dataset> {
    if start > end {
        return Err(Error::Precondition(format!(
            "block range start {start} is after end {end}"
        )));
    }
    let count = usize::try_from(end - start + 1).map_err(|_| Error::Precondition("block range too large".into()))?;
    let agent = ureq::AgentBuilder::new().timeout(cfg.timeout).build();
    let slots: Vec<Mutex<Option<Result<RawBlock>>>> = (0..count).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = cfg.concurrency.clamp(1, count);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= count {
                    break;
                }
                let res = fetch_one(&agent, endpoint, start + i as u64, cfg);
                let failed = res.is_err();
                *slots[i].lock().expect("slot lock") = Some(res);
                if failed {
                    // stop handing out new work
                    next.store(count, Ordering::Relaxed);
                }
            });
        }
    });
    // work is handed out in index order, so every slot before the first
    // failure is filled
    let mut blocks = Vec::with_capacity(count);
    for slot in slots {
        match slot.into_inner().expect("slot lock") {
            Some(res) => blocks.push(res?),
            None => unreachable!("unfilled slot precedes any recorded failure"),
        }
    }
    Ok(Dataset {
        blocks,
        source: format!("{endpoint} [{start}, {end}]"),
    })
}

/// Last block number stored in a raw CSV file, if any.
pub fn last_block_in_raw_csv(path: &Path) -> Result<Option<u64>> {
    if !path.exists() {
        return Ok(None);
    }
    let ds = load_blocks(path, Format::Csv)?;
    Ok(ds.blocks.last().map(|b| b.block_number))
}

/// Fetches `start..=end` into a raw CSV, resuming after the last block already
/// present in `path` and appending in chunks so an interrupted run loses at
/// most one chunk.
pub fn fetch_to_csv(endpoint: &str, start: u64, end: u64, path: &Path, chunk: u64, cfg: &FetchConfig) -> Result<usize> {
    if start > end {
        return Err(Error::Precondition(format!(
            "block range start {start} is after end {end}"
        )));
    }
    let resume_from = match last_block_in_raw_csv(path)? {
        Some(last) if last >= end => return Ok(0),
        Some(last) if last >= start => last + 1,
        Some(last) => {
            return Err(Error::Precondition(format!(
                "{} ends at block {last}, before the requested start {start}",
                path.display()
            )))
        }
        None => start,
    };
    let chunk = chunk.max(1);
    let mut fetched = 0;
    let mut lo = resume_from;
    while lo <= end {
        let hi = end.min(lo.saturating_add(chunk - 1));
        let ds = fetch_block_range(endpoint, lo, hi, cfg)?;
        write_raw_csv(&ds.blocks, path, true)?;
        fetched += ds.blocks.len();
        tracing::info!(from = lo, to = hi, "fetched blocks");
        lo = hi + 1;
    }
    Ok(fetched)
}

mod wei_list {
    use serde::de::{self, Deserializer};
    use serde::{Deserialize, Serializer};

    use crate::Wei;

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(u64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &[Wei], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|p| p.to_string()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Wei>, D::Error> {
        Vec::<Repr>::deserialize(d)?
            .into_iter()
            .map(|r| match r {
                Repr::Num(n) => Ok(n as Wei),
                Repr::Text(s) => s
                    .parse::<Wei>()
                    .map_err(|_| de::Error::custom(format!("invalid wei value `{s}`"))),
            })
            .collect()
    }
}
