//! Block pre-processing: drop small blocks, trim low-fee outliers, and keep
//! each block's minimum surviving gas price.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Dataset, RawBlock};
use crate::percentile::{interpolate_sorted, Interpolated};
use crate::Wei;

/// Blocks with fewer transactions than this are discarded.
pub const MIN_BLOCK_TXS: usize = 7;

/// Quantile below which transactions are treated as outliers.
pub const LOW_FEE_QUANTILE: f64 = 0.025;

/// One block of the model's target series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessedBlock {
    pub block_number: u64,
    /// Minimum gas price among transactions that survived trimming.
    pub y: Wei,
    /// Number of surviving transactions; not persisted in the processed CSV.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surviving_tx_count: Option<u32>,
}

impl ProcessedBlock {
    pub fn new(block_number: u64, y: Wei) -> Self {
        ProcessedBlock {
            block_number,
            y,
            surviving_tx_count: None,
        }
    }
}

pub fn filter_small_blocks(blocks: &[RawBlock]) -> Vec<RawBlock> {
    blocks
        .iter()
        .filter(|b| b.gas_prices.len() >= MIN_BLOCK_TXS)
        .cloned()
        .collect()
}

/// 2.5th percentile of a block's gas prices.
pub fn low_fee_threshold(prices: &[Wei]) -> Result<Interpolated> {
    if prices.is_empty() {
        return Err(Error::Precondition("low-fee threshold of an empty block".into()));
    }
    let mut sorted = prices.to_vec();
    sorted.sort_unstable();
    interpolate_sorted(&sorted, LOW_FEE_QUANTILE)
}

/// Removes transactions priced strictly below the block's 2.5th percentile
/// and returns the minimum of the rest.
pub fn trim_block(block: &RawBlock) -> Result<ProcessedBlock> {
    let n = block.gas_prices.len();
    if n < MIN_BLOCK_TXS {
        return Err(Error::Precondition(format!(
            "block {} has {n} transactions, trimming needs at least {MIN_BLOCK_TXS}",
            block.block_number
        )));
    }
    let mut sorted = block.gas_prices.clone();
    sorted.sort_unstable();
    let threshold = interpolate_sorted(&sorted, LOW_FEE_QUANTILE)?;
    let first_kept = sorted.partition_point(|&p| threshold.is_above(p));
    // the maximum is never below a percentile, so `first_kept < n`
    debug_assert!(first_kept < n);
    Ok(ProcessedBlock {
        block_number: block.block_number,
        y: sorted[first_kept],
        surviving_tx_count: Some((n - first_kept) as u32),
    })
}

/// Filter then trim every block, preserving order.
pub fn preprocess_chain(dataset: &Dataset) -> Vec<ProcessedBlock> {
    dataset
        .blocks
        .par_iter()
        .filter(|b| b.gas_prices.len() >= MIN_BLOCK_TXS)
        .map(|b| trim_block(b).expect("filtered blocks satisfy the trim precondition"))
        .collect()
}

/// Just the `y` column.
pub fn targets(blocks: &[ProcessedBlock]) -> Vec<Wei> {
    blocks.iter().map(|b| b.y).collect()
}
