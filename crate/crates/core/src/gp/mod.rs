//! Exact Gaussian-process regression over a block-index → minimum-price series.
//!
//! Training inputs are the window positions `1..=n`; targets are the window's
//! minimum prices, optionally standardized. With Gaussian noise the posterior
//! predictive at `x*` is exact:
//!
//! ```text
//! mean = K*ᵀ (K + σn² I)⁻¹ y
//! var  = K** − K*ᵀ (K + σn² I)⁻¹ K*
//! ```
//!
//! computed through a Cholesky factor of `K + σn² I`.

mod fit;
pub mod linalg;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;
use crate::percentile::level_to_quantile;
use crate::Wei;

pub use fit::{fit, lml_and_gradient, Bounds, FitConfig};
use linalg::Cholesky;

/// Default multipliers of `σf²` added to the diagonal when factorization fails.
pub const JITTER_LADDER: [f64; 3] = [1e-10, 1e-8, 1e-6];

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Squared-exponential kernel hyperparameters plus observation noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparams {
    /// Signal standard deviation.
    pub sigma_f: f64,
    /// Length scale in block-index units.
    pub length_scale: f64,
    /// Observation noise standard deviation.
    pub sigma_n: f64,
}

impl GpHyperparams {
    pub fn new(sigma_f: f64, length_scale: f64, sigma_n: f64) -> Result<Self> {
        let hp = GpHyperparams {
            sigma_f,
            length_scale,
            sigma_n,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.sigma_f.is_finite()
            && self.sigma_f > 0.0
            && self.length_scale.is_finite()
            && self.length_scale > 0.0
            && self.sigma_n.is_finite()
            && self.sigma_n >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid hyperparameters {self:?}")))
        }
    }

    /// `(ln σf, ln l, ln σn)`.
    pub fn to_log(&self) -> [f64; 3] {
        [self.sigma_f.ln(), self.length_scale.ln(), self.sigma_n.ln()]
    }

    pub fn from_log(p: [f64; 3]) -> Self {
        GpHyperparams {
            sigma_f: p[0].exp(),
            length_scale: p[1].exp(),
            sigma_n: p[2].exp(),
        }
    }
}

/// `σf² exp(−|x − x2|² / 2l²)`.
pub fn sq_exp_kernel(x: f64, x2: f64, hp: &GpHyperparams) -> f64 {
    let d = x - x2;
    hp.sigma_f * hp.sigma_f * (-d * d / (2.0 * hp.length_scale * hp.length_scale)).exp()
}

/// Affine map between wei and model units: `wei = model * scale + shift`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub shift: f64,
    pub scale: f64,
}

impl Normalization {
    pub const IDENTITY: Normalization = Normalization { shift: 0.0, scale: 1.0 };

    pub fn to_model(&self, wei: f64) -> f64 {
        (wei - self.shift) / self.scale
    }

    pub fn to_wei(&self, model: f64) -> f64 {
        model * self.scale + self.shift
    }
}

/// Training window: inputs `1..=n` and their targets in model units.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSeries {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    normalization: Normalization,
}

impl TrainingSeries {
    /// Builds a window from wei prices. With `normalize`, targets are
    /// standardized by the window mean and population standard deviation
    /// (scale 1 when the window is constant).
    pub fn from_wei(prices: &[Wei], normalize: bool) -> Result<Self> {
        let raw: Vec<f64> = prices.iter().map(|&p| p as f64).collect();
        let normalization = if normalize {
            let n = raw.len() as f64;
            let mean = raw.iter().sum::<f64>() / n;
            let var = raw.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let sd = var.sqrt();
            Normalization {
                shift: mean,
                scale: if sd > 0.0 && sd.is_finite() { sd } else { 1.0 },
            }
        } else {
            Normalization::IDENTITY
        };
        let targets = raw.iter().map(|&v| normalization.to_model(v)).collect();
        Self::with_normalization(targets, normalization)
    }

    /// Targets already in model units.
    pub fn from_model_units(targets: Vec<f64>) -> Result<Self> {
        Self::with_normalization(targets, Normalization::IDENTITY)
    }

    pub fn with_normalization(targets: Vec<f64>, normalization: Normalization) -> Result<Self> {
        if targets.len() < 2 {
            return Err(Error::Precondition(format!(
                "training series needs at least 2 points, got {}",
                targets.len()
            )));
        }
        if normalization.scale.is_nan() || normalization.scale <= 0.0 || targets.iter().any(|t| !t.is_finite()) {
            return Err(Error::Domain("training targets or scale not finite/positive".into()));
        }
        Ok(TrainingSeries {
            inputs: (1..=targets.len()).map(|i| i as f64).collect(),
            targets,
            normalization,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    /// Targets mapped back to wei, rounded to the nearest integer.
    pub fn targets_wei(&self) -> Vec<Wei> {
        self.targets
            .iter()
            .map(|&t| self.normalization.to_wei(t).round().max(0.0) as Wei)
            .collect()
    }
}

/// Kernel matrix and the factor of its noisy, possibly jittered, version.
#[derive(Debug, Clone)]
pub struct Covariance {
    /// Noise-free `K`, row-major.
    pub kernel: Vec<f64>,
    pub factor: Cholesky,
    /// Diagonal jitter actually added, in model units (already times σf²).
    pub jitter: f64,
}

impl Covariance {
    /// `K + (σn² + jitter) I`, row-major.
    pub fn noisy(&self, hp: &GpHyperparams) -> Vec<f64> {
        let n = self.factor.dim();
        let mut a = self.kernel.clone();
        for i in 0..n {
            a[i * n + i] += hp.sigma_n * hp.sigma_n + self.jitter;
        }
        a
    }
}

pub(crate) fn kernel_matrix(inputs: &[f64], hp: &GpHyperparams) -> Vec<f64> {
    let n = inputs.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = sq_exp_kernel(inputs[i], inputs[j], hp);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    k
}

pub fn build_covariance(training: &TrainingSeries, hp: &GpHyperparams) -> Result<Covariance> {
    build_covariance_with(training, hp, &JITTER_LADDER)
}

/// Factors `K + σn² I`, retrying with each jitter level of `ladder` (in units
/// of `σf²`) until the factorization succeeds.
pub fn build_covariance_with(training: &TrainingSeries, hp: &GpHyperparams, ladder: &[f64]) -> Result<Covariance> {
    hp.validate()?;
    let n = training.len();
    let kernel = kernel_matrix(&training.inputs, hp);
    let noise = hp.sigma_n * hp.sigma_n;
    let sf2 = hp.sigma_f * hp.sigma_f;
    let mut a = kernel.clone();
    let mut last_jitter = 0.0;
    for jitter in std::iter::once(0.0).chain(ladder.iter().map(|j| j * sf2)) {
        for i in 0..n {
            a[i * n + i] = kernel[i * n + i] + noise + jitter;
        }
        if let Some(factor) = Cholesky::factor(&a, n) {
            return Ok(Covariance { kernel, factor, jitter });
        }
        last_jitter = jitter;
    }
    // Gershgorin bound on the largest eigenvalue over the diagonal floor
    let floor = noise + last_jitter;
    let condition = if floor > 0.0 {
        (n as f64 * sf2 + floor) / floor
    } else {
        f64::INFINITY
    };
    Err(Error::Factorization {
        jitter: last_jitter,
        condition,
    })
}

/// `log p(y | X, θ)` through the factor.
pub fn log_marginal_likelihood(training: &TrainingSeries, hp: &GpHyperparams) -> Result<f64> {
    let cov = build_covariance(training, hp)?;
    Ok(lml_from_factor(&cov.factor, training.targets()))
}

pub(crate) fn lml_from_factor(factor: &Cholesky, y: &[f64]) -> f64 {
    let z = factor.solve_lower(y);
    let data: f64 = z.iter().map(|v| v * v).sum();
    -0.5 * data - 0.5 * factor.log_det() - 0.5 * y.len() as f64 * LN_2PI
}

/// Gaussian predictive distribution in wei.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDistribution {
    pub mean: f64,
    pub std: f64,
}

impl PredictiveDistribution {
    /// `mean + z(α/100) · std`, unrounded.
    pub fn percentile_value(&self, alpha: f64) -> Result<f64> {
        let q = level_to_quantile(alpha)?;
        if q == 0.5 {
            return Ok(self.mean);
        }
        Ok(self.mean + normal::inverse_cdf(q)? * self.std)
    }

    /// The α-percentile price rounded up to whole wei; negative values clamp to 0.
    pub fn percentile_price(&self, alpha: f64) -> Result<Wei> {
        let v = self.percentile_value(alpha)?.ceil();
        Ok(if v <= 0.0 { 0 } else { v as Wei })
    }
}

pub fn percentile_price(dist: &PredictiveDistribution, alpha: f64) -> Result<Wei> {
    dist.percentile_price(alpha)
}

/// A conditioned GP: hyperparameters, training window, and the factor and
/// weights needed for prediction.
#[derive(Debug, Clone)]
pub struct GpModel {
    hyperparams: GpHyperparams,
    training: TrainingSeries,
    covariance: Covariance,
    /// `(K + σn² I)⁻¹ y`
    alpha: Vec<f64>,
    log_marginal_likelihood: f64,
}

impl GpModel {
    /// Conditions on `training` under fixed hyperparameters.
    pub fn new(training: TrainingSeries, hyperparams: GpHyperparams) -> Result<Self> {
        Self::with_ladder(training, hyperparams, &JITTER_LADDER)
    }

    pub fn with_ladder(training: TrainingSeries, hyperparams: GpHyperparams, ladder: &[f64]) -> Result<Self> {
        let covariance = build_covariance_with(&training, &hyperparams, ladder)?;
        let alpha = covariance.factor.solve(training.targets());
        let log_marginal_likelihood = lml_from_factor(&covariance.factor, training.targets());
        Ok(GpModel {
            hyperparams,
            training,
            covariance,
            alpha,
            log_marginal_likelihood,
        })
    }

    pub fn hyperparams(&self) -> &GpHyperparams {
        &self.hyperparams
    }

    pub fn training(&self) -> &TrainingSeries {
        &self.training
    }

    pub fn covariance(&self) -> &Covariance {
        &self.covariance
    }

    pub fn alpha_vector(&self) -> &[f64] {
        &self.alpha
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal_likelihood
    }

    /// Posterior mean and variance of `f(x*)` in model units.
    pub fn predict_model_units(&self, x_star: f64) -> (f64, f64) {
        let hp = &self.hyperparams;
        let k_star: Vec<f64> = self
            .training
            .inputs
            .iter()
            .map(|&x| sq_exp_kernel(x_star, x, hp))
            .collect();
        let mean: f64 = k_star.iter().zip(&self.alpha).map(|(k, a)| k * a).sum();
        let v = self.covariance.factor.solve_lower(&k_star);
        let prior = hp.sigma_f * hp.sigma_f;
        let mut var = prior - v.iter().map(|x| x * x).sum::<f64>();
        if var < 0.0 {
            if var < -1e-12 * prior {
                tracing::warn!(var, prior, "predictive variance clamped from a large negative value");
            }
            var = 0.0;
        }
        (mean, var)
    }

    /// Posterior predictive of `f(x*)` in wei.
    pub fn predict(&self, x_star: f64) -> PredictiveDistribution {
        let (mean, var) = self.predict_model_units(x_star);
        let norm = self.training.normalization;
        PredictiveDistribution {
            mean: norm.to_wei(mean),
            std: var.sqrt() * norm.scale,
        }
    }

    /// Prediction for the block right after the window (`x* = n + 1`).
    pub fn predict_next(&self) -> PredictiveDistribution {
        self.predict((self.training.len() + 1) as f64)
    }
}
