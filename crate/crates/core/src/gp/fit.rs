//! Type-II maximum likelihood for the kernel and noise hyperparameters.
//!
//! Each start runs a projected quasi-Newton ascent on the log marginal
//! likelihood in `(ln σf, ln l, ln σn)` with box bounds. The best start wins;
//! ties go to the earlier start.

use serde::{Deserialize, Serialize};

use super::{build_covariance_with, lml_from_factor, GpHyperparams, GpModel, TrainingSeries, JITTER_LADDER};
use crate::error::{Error, Result};

/// Inclusive `[lo, hi]` bounds on each hyperparameter, natural units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub sigma_f: (f64, f64),
    pub length_scale: (f64, f64),
    pub sigma_n: (f64, f64),
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            sigma_f: (1e-3, 1e3),
            length_scale: (0.5, 500.0),
            sigma_n: (1e-4, 1e3),
        }
    }
}

impl Bounds {
    fn log_box(&self) -> ([f64; 3], [f64; 3]) {
        (
            [self.sigma_f.0.ln(), self.length_scale.0.ln(), self.sigma_n.0.ln()],
            [self.sigma_f.1.ln(), self.length_scale.1.ln(), self.sigma_n.1.ln()],
        )
    }

    fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("sigma_f", self.sigma_f),
            ("length_scale", self.length_scale),
            ("sigma_n", self.sigma_n),
        ] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::Config(format!("bad {name} bounds [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

/// How hyperparameters are fitted, and how often.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Start points in natural units, searched in order.
    pub starts: Vec<GpHyperparams>,
    pub bounds: Bounds,
    /// Diagonal jitter levels, in units of `σf²`.
    pub jitter_ladder: Vec<f64>,
    /// Refit hyperparameters every this many target blocks; reuse in between.
    pub refit_every: usize,
    /// Standardize each training window before fitting.
    pub normalize: bool,
    pub max_iterations: usize,
    /// Stop when the projected gradient's largest component drops below this.
    pub gradient_tolerance: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        let mut starts = Vec::new();
        for l in [2.0, 10.0, 50.0] {
            for sn in [0.1, 0.5] {
                starts.push(GpHyperparams {
                    sigma_f: 1.0,
                    length_scale: l,
                    sigma_n: sn,
                });
            }
        }
        FitConfig {
            starts,
            bounds: Bounds::default(),
            jitter_ladder: JITTER_LADDER.to_vec(),
            refit_every: 1,
            normalize: true,
            max_iterations: 100,
            gradient_tolerance: 1e-5,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        if self.starts.is_empty() {
            return Err(Error::Config("fit needs at least one start".into()));
        }
        if self.refit_every == 0 {
            return Err(Error::Config("refit_every must be at least 1".into()));
        }
        for s in &self.starts {
            s.validate()?;
            if s.sigma_n <= 0.0 {
                return Err(Error::Config("start sigma_n must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Log marginal likelihood and its gradient with respect to
/// `(ln σf, ln l, ln σn)`.
pub fn lml_and_gradient(training: &TrainingSeries, hp: &GpHyperparams, ladder: &[f64]) -> Result<(f64, [f64; 3])> {
    let cov = build_covariance_with(training, hp, ladder)?;
    let y = training.targets();
    let n = y.len();
    let lml = lml_from_factor(&cov.factor, y);
    let alpha = cov.factor.solve(y);
    let inv = cov.factor.inverse();

    // dL/dθ = ½ (αᵀ ∂A α − tr(A⁻¹ ∂A)), A = K + (σn² + jitter) I
    let l2 = hp.length_scale * hp.length_scale;
    let inputs = training.inputs();
    let (mut quad_k, mut tr_k, mut quad_l, mut tr_l) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let k = cov.kernel[i * n + j];
            let d = inputs[i] - inputs[j];
            let dl = k * d * d / l2;
            let aa = alpha[i] * alpha[j];
            let w = inv[i * n + j];
            quad_k += aa * k;
            tr_k += w * k;
            quad_l += aa * dl;
            tr_l += w * dl;
        }
    }
    let alpha_sq: f64 = alpha.iter().map(|a| a * a).sum();
    let tr_inv: f64 = (0..n).map(|i| inv[i * n + i]).sum();
    let noise = hp.sigma_n * hp.sigma_n;
    // jitter scales with σf², so it moves with ln σf
    let grad_f = quad_k - tr_k + cov.jitter * (alpha_sq - tr_inv);
    let grad_l = 0.5 * (quad_l - tr_l);
    let grad_n = noise * (alpha_sq - tr_inv);
    Ok((lml, [grad_f, grad_l, grad_n]))
}

fn lml_only(training: &TrainingSeries, hp: &GpHyperparams, ladder: &[f64]) -> Option<f64> {
    let cov = build_covariance_with(training, hp, ladder).ok()?;
    let v = lml_from_factor(&cov.factor, training.targets());
    v.is_finite().then_some(v)
}

fn project(x: [f64; 3], lo: &[f64; 3], hi: &[f64; 3]) -> [f64; 3] {
    std::array::from_fn(|i| x[i].clamp(lo[i], hi[i]))
}

/// Ascent direction components that would leave the box are frozen.
fn free_mask(x: &[f64; 3], g: &[f64; 3], lo: &[f64; 3], hi: &[f64; 3]) -> [bool; 3] {
    std::array::from_fn(|i| {
        let at_lo = x[i] <= lo[i] + 1e-12 && g[i] < 0.0;
        let at_hi = x[i] >= hi[i] - 1e-12 && g[i] > 0.0;
        !(at_lo || at_hi)
    })
}

struct LocalOptimum {
    x: [f64; 3],
    lml: f64,
}

fn ascend(training: &TrainingSeries, start: [f64; 3], cfg: &FitConfig) -> Option<LocalOptimum> {
    let (lo, hi) = cfg.bounds.log_box();
    let ladder = &cfg.jitter_ladder;
    let eval = |x: [f64; 3]| lml_and_gradient(training, &GpHyperparams::from_log(x), ladder).ok();

    let mut x = project(start, &lo, &hi);
    let (mut f, mut g) = eval(x).filter(|(f, _)| f.is_finite())?;
    // inverse-Hessian approximation of −L, reset whenever the active set changes
    let mut h = identity();
    let mut mask = free_mask(&x, &g, &lo, &hi);

    for _ in 0..cfg.max_iterations {
        let pg: f64 = (0..3).filter(|&i| mask[i]).map(|i| g[i].abs()).fold(0.0, f64::max);
        if pg < cfg.gradient_tolerance {
            break;
        }
        let mut dir = [0.0; 3];
        for i in 0..3 {
            if mask[i] {
                dir[i] = (0..3).filter(|&j| mask[j]).map(|j| h[i][j] * g[j]).sum();
            }
        }
        let mut slope: f64 = (0..3).map(|i| dir[i] * g[i]).sum();
        if slope.is_nan() || slope <= 0.0 {
            h = identity();
            dir = std::array::from_fn(|i| if mask[i] { g[i] } else { 0.0 });
            slope = (0..3).map(|i| dir[i] * g[i]).sum();
        }
        // cap the step at one e-fold per coordinate
        let longest = dir.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let mut t = if longest > 1.0 { 1.0 / longest } else { 1.0 };

        let mut accepted = None;
        for _ in 0..40 {
            let trial = project(std::array::from_fn(|i| x[i] + t * dir[i]), &lo, &hi);
            let gain: f64 = (0..3).map(|i| g[i] * (trial[i] - x[i])).sum();
            if let Some(ft) = lml_only(training, &GpHyperparams::from_log(trial), ladder) {
                if ft >= f + 1e-4 * gain {
                    accepted = Some(trial);
                    break;
                }
            }
            t *= 0.5;
        }
        let Some(next) = accepted else { break };
        let Some((fn_, gn)) = eval(next) else { break };
        let s: [f64; 3] = std::array::from_fn(|i| next[i] - x[i]);
        // curvature pair for the minimization of −L
        let yv: [f64; 3] = std::array::from_fn(|i| g[i] - gn[i]);
        let improvement = fn_ - f;
        x = next;
        f = fn_;
        g = gn;
        let new_mask = free_mask(&x, &g, &lo, &hi);
        if new_mask != mask {
            mask = new_mask;
            h = identity();
        } else {
            bfgs_update(&mut h, &s, &yv);
        }
        if improvement.abs() <= 1e-10 * f.abs().max(1.0) && s.iter().all(|v| v.abs() < 1e-8) {
            break;
        }
    }
    Some(LocalOptimum { x, lml: f })
}

fn identity() -> [[f64; 3]; 3] {
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
}

fn bfgs_update(h: &mut [[f64; 3]; 3], s: &[f64; 3], y: &[f64; 3]) {
    let sy: f64 = (0..3).map(|i| s[i] * y[i]).sum();
    if sy <= 1e-12 {
        return;
    }
    let rho = 1.0 / sy;
    let hy: [f64; 3] = std::array::from_fn(|i| (0..3).map(|j| h[i][j] * y[j]).sum());
    let yhy: f64 = (0..3).map(|i| y[i] * hy[i]).sum();
    let mut next = *h;
    for i in 0..3 {
        for j in 0..3 {
            next[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
    *h = next;
}

/// Fits hyperparameters by multi-start maximization of the log marginal
/// likelihood and conditions the model on `training`.
pub fn fit(training: TrainingSeries, cfg: &FitConfig) -> Result<GpModel> {
    cfg.validate()?;
    let mut best: Option<LocalOptimum> = None;
    for start in &cfg.starts {
        if let Some(opt) = ascend(&training, start.to_log(), cfg) {
            if best.as_ref().is_none_or(|b| opt.lml > b.lml) {
                best = Some(opt);
            }
        }
    }
    let best = best.ok_or(Error::Fit)?;
    GpModel::with_ladder(training, GpHyperparams::from_log(best.x), &cfg.jitter_ladder)
}
