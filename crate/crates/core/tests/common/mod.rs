#![allow(dead_code)]

use gas_oracle_core::gp::{sq_exp_kernel, GpHyperparams};
use nalgebra::{DMatrix, DVector};

/// Posterior mean and variance by explicit inversion of `K + σn² I`.
pub fn dense_predict(inputs: &[f64], targets: &[f64], hp: &GpHyperparams, x_star: f64) -> (f64, f64) {
    let n = inputs.len();
    let k = DMatrix::from_fn(n, n, |i, j| {
        sq_exp_kernel(inputs[i], inputs[j], hp) + if i == j { hp.sigma_n * hp.sigma_n } else { 0.0 }
    });
    let inv = k.try_inverse().expect("invertible");
    let ks = DVector::from_fn(n, |i, _| sq_exp_kernel(x_star, inputs[i], hp));
    let y = DVector::from_column_slice(targets);
    let mean = (ks.transpose() * &inv * y)[(0, 0)];
    let var = sq_exp_kernel(x_star, x_star, hp) - (ks.transpose() * &inv * &ks)[(0, 0)];
    (mean, var)
}

/// Log marginal likelihood by explicit inverse and LU determinant.
pub fn dense_lml(inputs: &[f64], targets: &[f64], hp: &GpHyperparams) -> f64 {
    let n = inputs.len();
    let k = DMatrix::from_fn(n, n, |i, j| {
        sq_exp_kernel(inputs[i], inputs[j], hp) + if i == j { hp.sigma_n * hp.sigma_n } else { 0.0 }
    });
    let det = k.determinant();
    let inv = k.try_inverse().expect("invertible");
    let y = DVector::from_column_slice(targets);
    let quad = (y.transpose() * inv * &y)[(0, 0)];
    -0.5 * quad - 0.5 * det.ln() - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1e-300)
}

/// Relative error with an absolute floor for values near zero.
pub fn rel_err_floor(got: f64, want: f64, floor: f64) -> f64 {
    (got - want).abs() / want.abs().max(floor)
}

/// Posterior mean and variance through nalgebra's Cholesky solve; stable
/// where the explicit inverse is not.
pub fn dense_predict_cholesky(inputs: &[f64], targets: &[f64], hp: &GpHyperparams, x_star: f64) -> (f64, f64) {
    let n = inputs.len();
    let k = DMatrix::from_fn(n, n, |i, j| {
        sq_exp_kernel(inputs[i], inputs[j], hp) + if i == j { hp.sigma_n * hp.sigma_n } else { 0.0 }
    });
    let chol = k.cholesky().expect("positive definite");
    let ks = DVector::from_fn(n, |i, _| sq_exp_kernel(x_star, inputs[i], hp));
    let y = DVector::from_column_slice(targets);
    let mean = ks.dot(&chol.solve(&y));
    let v = chol.l().solve_lower_triangular(&ks).expect("triangular solve");
    let var = sq_exp_kernel(x_star, x_star, hp) - v.dot(&v);
    (mean, var)
}

use gas_oracle_core::baseline::PercentileOracle;
use gas_oracle_core::hybrid::{HybridCase, HybridConfig, HybridOracle};
use gas_oracle_core::{FitConfig, Oracle, Wei};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub const FLAT_BLOCKS: usize = 400;
pub const RAMP_BLOCKS: usize = 100;

/// Noisy flat regime around 100 Gwei, then a 5x ramp over `RAMP_BLOCKS`.
pub fn two_regime_series(seed: u64) -> Vec<Wei> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut ys = Vec::with_capacity(FLAT_BLOCKS + RAMP_BLOCKS);
    for i in 0..FLAT_BLOCKS + RAMP_BLOCKS {
        let level = if i < FLAT_BLOCKS {
            100.0
        } else {
            100.0 + 400.0 * (i + 1 - FLAT_BLOCKS) as f64 / RAMP_BLOCKS as f64
        };
        let noise: f64 = rng.gen_range(-0.15..0.15);
        ys.push((level * (1.0 + noise) * 1e9).round() as Wei);
    }
    ys
}

#[derive(Debug)]
pub struct RegimeSummary {
    pub ramp_fallbacks: usize,
    pub hybrid_ramp_rate: f64,
    pub gs_ramp_rate: f64,
    /// Flat-regime targets whose instant rate was above `α + e`.
    pub flat_retune_blocks: usize,
    pub hybrid_flat_cost_gwei: f64,
    pub gs_flat_cost_gwei: f64,
}

/// Runs the hybrid (α = 75, n_gs = 30, n_gp = 200, e = 0.1) and GS-Express
/// (n = 30) over every target after the hybrid's warm-up.
pub fn two_regime_summary(ys: &[Wei]) -> RegimeSummary {
    let cfg = HybridConfig::default();
    let fit = FitConfig {
        refit_every: 20,
        ..FitConfig::default()
    };
    let hybrid = HybridOracle::new(cfg.clone(), fit).unwrap();
    let gs = PercentileOracle::gs_express(cfg.n_gs).unwrap();
    let band_hi = cfg.alpha / 100.0 + cfg.e;

    let mut s = RegimeSummary {
        ramp_fallbacks: 0,
        hybrid_ramp_rate: 0.0,
        gs_ramp_rate: 0.0,
        flat_retune_blocks: 0,
        hybrid_flat_cost_gwei: 0.0,
        gs_flat_cost_gwei: 0.0,
    };
    let (mut hyb_hits, mut gs_hits) = (0usize, 0usize);
    for t in cfg.warmup()..ys.len() {
        let history = &ys[..t];
        let q = hybrid.quote_detailed(history, cfg.alpha).unwrap();
        let g = gs.quote(history, &[cfg.alpha]).unwrap()[0];
        let actual = ys[t];
        if t >= FLAT_BLOCKS {
            s.ramp_fallbacks += (q.case == HybridCase::FallBack) as usize;
            hyb_hits += (q.price >= actual) as usize;
            gs_hits += (g >= actual) as usize;
        } else if q.rate > band_hi {
            s.flat_retune_blocks += 1;
            s.hybrid_flat_cost_gwei += q.price as f64 / 1e9;
            s.gs_flat_cost_gwei += g as f64 / 1e9;
        }
    }
    s.hybrid_ramp_rate = hyb_hits as f64 / RAMP_BLOCKS as f64;
    s.gs_ramp_rate = gs_hits as f64 / RAMP_BLOCKS as f64;
    if s.flat_retune_blocks > 0 {
        s.hybrid_flat_cost_gwei /= s.flat_retune_blocks as f64;
        s.gs_flat_cost_gwei /= s.flat_retune_blocks as f64;
    }
    s
}
