//! Deterministic synthetic price series shared by the benchmarks.

use gas_oracle_core::Wei;

/// A noisy price series around 100 Gwei with a slow oscillation.
pub fn synthetic_series(len: usize, seed: u64) -> Vec<Wei> {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (0..len)
        .map(|i| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            let noise = (state >> 33) as f64 / (1u64 << 31) as f64 - 0.5;
            let trend = 100.0 + 20.0 * (i as f64 / 50.0).sin();
            ((trend + 10.0 * noise) * 1e9) as Wei
        })
        .collect()
}
