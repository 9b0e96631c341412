mod common;

use gas_oracle_core::baseline::empirical_percentile_price;
use gas_oracle_core::hybrid::{HybridCase, HybridConfig, HybridState};
use gas_oracle_core::Wei;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const GWEI: Wei = 1_000_000_000;

fn cfg(alpha: f64) -> HybridConfig {
    HybridConfig {
        alpha,
        n_gs: 30,
        n_gp: 30,
        e: 0.1,
    }
}

/// Falling prices with noise: the last window's percentiles sit above the
/// next block, so GS-Express over-succeeds at α = 75.
fn falling(len: usize, seed: u64) -> Vec<Wei> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..len)
        .map(|t| (200 - t as i64 / 2) as Wei * GWEI + rng.gen_range(0..20 * GWEI))
        .collect()
}

/// Rate at `alpha` over the last `n_gs` targets, from the raw history.
fn rate_from_history(ys: &[Wei], n_gs: usize, alpha: f64) -> f64 {
    let end = ys.len();
    let hits = (end - n_gs..end)
        .filter(|&t| empirical_percentile_price(&ys[t - n_gs..t], alpha).unwrap() >= ys[t])
        .count();
    hits as f64 / n_gs as f64
}

#[test]
fn retrospective_rate_matches_replay_and_is_monotone() {
    let ys = falling(90, 1);
    let state = HybridState::from_history(cfg(75.0), &ys).unwrap();
    let mut prev = 0.0;
    for k in 1..1000 {
        let a = k as f64 / 10.0;
        let r = state.retrospective_rate(a).unwrap();
        assert_eq!(r, rate_from_history(&ys, 30, a), "α′={a}");
        assert!(r >= prev, "rate fell at α′={a}");
        prev = r;
    }
    assert_eq!(state.instant_success_rate().unwrap(), rate_from_history(&ys, 30, 75.0));
}

#[test]
fn alpha_prime_lands_in_band() {
    let mut retuned = 0;
    for seed in 0..20 {
        let ys = falling(90, seed);
        let c = cfg(75.0);
        let state = HybridState::from_history(c.clone(), &ys).unwrap();
        let rate = state.instant_success_rate().unwrap();
        if rate <= 0.85 {
            continue;
        }
        retuned += 1;
        let grid_has_band = (1..750).any(|k| {
            let r = rate_from_history(&ys, 30, k as f64 / 10.0);
            (0.65..=0.85).contains(&r)
        });
        let a = state.find_alpha_prime().unwrap();
        let r = rate_from_history(&ys, 30, a);
        if grid_has_band {
            assert!(a < 75.0 && (0.65..=0.85).contains(&r), "seed {seed}: α′={a} R={r}");
        }
        let q = state.quote_with(|_| panic!("GP not needed")).unwrap();
        assert_eq!(q.case, HybridCase::Retune { alpha_prime: a });
        assert!(q.price <= q.gs_price);
        let window = &ys[ys.len() - 30..];
        assert_eq!(q.price, empirical_percentile_price(window, a).unwrap());
    }
    assert!(retuned >= 10, "{retuned}");
}

#[test]
fn unreachable_band_keeps_alpha() {
    // every target equals its whole window: the rate is 1 at every level
    let state = HybridState::from_history(cfg(75.0), &[42 * GWEI; 80]).unwrap();
    assert_eq!(state.find_alpha_prime().unwrap(), 75.0);
    let q = state.quote_with(|_| panic!("GP not needed")).unwrap();
    assert_eq!(q.case, HybridCase::Retune { alpha_prime: 75.0 });
    assert_eq!(q.price, 42 * GWEI);

    // rate jumps from 1/2 to 1 between neighbouring levels
    let mut ys = Vec::new();
    for i in 0..80u128 {
        ys.push(if i % 2 == 0 { 10 } else { 20 } * GWEI);
    }
    let state = HybridState::from_history(cfg(75.0), &ys).unwrap();
    assert_eq!(state.instant_success_rate().unwrap(), 1.0);
    assert_eq!(state.retrospective_rate(40.0).unwrap(), 0.5);
    assert_eq!(state.find_alpha_prime().unwrap(), 75.0);
}

#[test]
fn fallback_dominates_both_quotes() {
    // rising prices: GS-Express under-succeeds
    let ys: Vec<Wei> = (0..90u128).map(|t| (100 + 3 * t) * GWEI).collect();
    let state = HybridState::from_history(cfg(75.0), &ys).unwrap();
    assert_eq!(state.instant_success_rate().unwrap(), 0.0);
    for gp in [1, 10 * GWEI, 10_000 * GWEI] {
        let q = state
            .quote_with(|w| {
                assert_eq!(w.len(), 30);
                assert_eq!(*w.last().unwrap(), *ys.last().unwrap());
                Ok(gp)
            })
            .unwrap();
        assert_eq!(q.case, HybridCase::FallBack);
        assert_eq!(q.price, gp.max(q.gs_price));
        assert_eq!(q.gp_price, Some(gp));
    }
}

#[test]
fn streaming_equals_rebuilt_state() {
    let ys = falling(300, 4);
    let c = HybridConfig { n_gp: 60, ..cfg(75.0) };
    let mut streaming = HybridState::new(c.clone()).unwrap();
    for (t, &y) in ys.iter().enumerate() {
        if t >= c.warmup() {
            let rebuilt = HybridState::from_history(c.clone(), &ys[..t]).unwrap();
            let a = streaming
                .quote_with(|w| Ok(w.iter().sum::<Wei>() / w.len() as Wei))
                .unwrap();
            let b = rebuilt
                .quote_with(|w| Ok(w.iter().sum::<Wei>() / w.len() as Wei))
                .unwrap();
            assert_eq!(a, b, "t={t}");
        }
        streaming.advance(y);
    }
}

#[test]
fn two_regime_fixture() {
    let ys = common::two_regime_series(2024);
    let s = common::two_regime_summary(&ys);
    println!("{s:?}");
    assert!(s.ramp_fallbacks > 0);
    assert!(s.hybrid_ramp_rate >= s.gs_ramp_rate);
    assert!(s.flat_retune_blocks > 0);
    assert!(s.hybrid_flat_cost_gwei <= s.gs_flat_cost_gwei);
}
