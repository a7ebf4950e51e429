//! Sensitivity of the encoder, Gaussian-mechanism calibration, and private
//! model release.
//!
//! Adding or removing one training sample changes exactly one class vector by
//! that sample's encoding, so the sensitivity of the model is the norm of a
//! single encoding. For the level encoding every element is approximately
//! `N(0, D_iv)`, which gives closed forms for the l1 and l2 norms; for
//! quantized encodings the l2 norm follows from the symbol probabilities.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::codebook::CodebookSet;
use crate::data::Dataset;
use crate::encoding::{encode_level, EncodingConfig, Encoder};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::quant::QuantScheme;
use crate::rng::{derive_seed, rng_from_seed};

/// Default failure probability of the (epsilon, delta) guarantee.
pub const DEFAULT_DELTA: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrivacyParams {
    /// `f64::INFINITY` means no noise was requested.
    pub epsilon: f64,
    pub delta: f64,
    pub sigma: f64,
    /// l2 sensitivity the noise is scaled by.
    pub delta_f: f64,
    pub noise_seed: u64,
}

impl PrivacyParams {
    /// Calibrates sigma from `(epsilon, delta)`.
    pub fn calibrated(epsilon: f64, delta: f64, delta_f: f64, noise_seed: u64) -> Result<Self> {
        Ok(Self { epsilon, delta, sigma: calibrate(epsilon, delta)?, delta_f, noise_seed })
    }

    pub fn noise_std(&self) -> f64 {
        self.delta_f * self.sigma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitivitySource {
    Formula,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityReport {
    pub l1: f64,
    pub l2: f64,
    pub source: SensitivitySource,
    pub d_iv: usize,
    /// Dimensions the norm is taken over (kept dimensions after pruning).
    pub d_hv: usize,
    pub scheme: String,
    /// Set when the figure rests on the `N(0, D_iv)` approximation outside
    /// the level encoding it was derived for.
    pub approximate: bool,
}

/// Mean l1 norm of one level encoding: `sqrt(2 * D_iv / pi) * D_hv`.
pub fn sensitivity_l1(d_iv: f64, d_hv: f64) -> f64 {
    (2.0 * d_iv / std::f64::consts::PI).sqrt() * d_hv
}

/// l2 norm of one level encoding: `sqrt(D_hv * D_iv)`.
pub fn sensitivity_l2(d_iv: f64, d_hv: f64) -> f64 {
    (d_hv * d_iv).sqrt()
}

/// l2 norm of a quantized encoding with symbol probabilities `p_k`:
/// `sqrt(sum_k p_k * D_hv * k^2)`.
pub fn sensitivity_quantized(probabilities: &[(i64, f64)], d_hv: usize) -> Result<f64> {
    let total: f64 = probabilities.iter().map(|(_, p)| p).sum();
    if (total - 1.0).abs() > 1e-9 || probabilities.iter().any(|(_, p)| *p < 0.0) {
        return Err(Error::Input(format!("symbol probabilities sum to {total}, not 1")));
    }
    let energy: f64 = probabilities.iter().map(|&(k, p)| p * d_hv as f64 * (k * k) as f64).sum();
    Ok(energy.sqrt())
}

/// Closed-form sensitivity of one encoding under `scheme`, over `kept_dims`.
pub fn sensitivity_report(d_iv: usize, kept_dims: usize, scheme: QuantScheme, level_encoding: bool) -> Result<SensitivityReport> {
    let l1 = sensitivity_l1(d_iv as f64, kept_dims as f64);
    let l2 = match scheme.symbol_probabilities() {
        Some(p) => sensitivity_quantized(&p, kept_dims)?,
        None => sensitivity_l2(d_iv as f64, kept_dims as f64),
    };
    Ok(SensitivityReport {
        l1,
        l2,
        source: SensitivitySource::Formula,
        d_iv,
        d_hv: kept_dims,
        scheme: scheme.name(),
        approximate: !level_encoding && scheme.symbol_probabilities().is_none(),
    })
}

/// Mean l1 and l2 norms over `trials` level encodings of uniformly random inputs.
pub fn sensitivity_monte_carlo(codebook: &CodebookSet, trials: usize, seed: u64) -> Result<SensitivityReport> {
    if trials == 0 {
        return Err(Error::Config("need at least one trial".into()));
    }
    let norms: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_from_seed(derive_seed(seed, t as u64));
            let levels: Vec<usize> = (0..codebook.d_iv()).map(|_| rng.random_range(0..codebook.levels())).collect();
            let h = encode_level(&levels, codebook)?;
            Ok((h.l1_norm() as f64, h.l2_norm()))
        })
        .collect::<Result<_>>()?;
    let n = trials as f64;
    Ok(SensitivityReport {
        l1: norms.iter().map(|p| p.0).sum::<f64>() / n,
        l2: norms.iter().map(|p| p.1).sum::<f64>() / n,
        source: SensitivitySource::MonteCarlo,
        d_iv: codebook.d_iv(),
        d_hv: codebook.d_hv(),
        scheme: QuantScheme::NONE.name(),
        approximate: false,
    })
}

/// Smallest sigma meeting `delta >= 4/5 * exp(-(sigma * epsilon)^2 / 2)`:
/// `sigma = sqrt(2 * ln(4 / (5 * delta))) / epsilon`. Infinite epsilon gives 0.
pub fn calibrate(epsilon: f64, delta: f64) -> Result<f64> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(delta > 0.0 && delta < 0.8) {
        return Err(Error::Config(format!("delta must lie in (0, 0.8) for this bound, got {delta}")));
    }
    Ok((2.0 * (0.8 / delta).ln()).sqrt() / epsilon)
}

/// Adds `N(0, (delta_f * sigma)^2)` to every unmasked element of every class,
/// rounded to the nearest integer. Noise is drawn class by class, dimension
/// by dimension, from the stream seeded by `params.noise_seed`.
pub fn dp_release(model: &mut Model, params: PrivacyParams) -> Result<()> {
    if model.is_private() {
        return Err(Error::Contract("model was already released".into()));
    }
    let std = params.noise_std();
    if !std.is_finite() || std < 0.0 {
        return Err(Error::Config(format!("noise standard deviation {std} is not usable")));
    }
    if std > 0.0 {
        let normal = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
        let mut rng = rng_from_seed(params.noise_seed);
        let mask = model.mask().clone();
        for class in model.classes_mut() {
            for (v, &kept) in class.dims_mut().iter_mut().zip(mask.kept()) {
                if kept {
                    *v += normal.sample(&mut rng).round() as i64;
                }
            }
        }
        model.refresh_all_norms();
    }
    model.set_release(params);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DpConfig {
    pub encoding: EncodingConfig,
    pub prune_percent: f64,
    pub retrain_epochs: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub noise_seed: u64,
}

#[derive(Debug, Clone)]
pub struct DpOutcome {
    pub model: Model,
    pub params: PrivacyParams,
    pub sensitivity: SensitivityReport,
}

/// Quantized encoding, training, pruning, retraining, then one noisy release
/// scaled to the sensitivity over the kept dimensions. Infinite epsilon skips
/// the release.
pub fn dp_train_pipeline(train: &Dataset, config: &DpConfig) -> Result<DpOutcome> {
    let encoder = Encoder::new(config.encoding)?;
    let encoded = train.encode(&encoder)?;
    let mut model = Model::train(config.encoding, train.num_classes, encoded.iter().map(|(h, l)| (h, *l)))?;
    if config.prune_percent > 0.0 {
        model.prune(config.prune_percent)?;
    }
    for _ in 0..config.retrain_epochs {
        model.retrain_epoch(&encoded)?;
    }
    let sensitivity = sensitivity_report(
        config.encoding.d_iv,
        model.mask().count_kept(),
        config.encoding.scheme,
        config.encoding.variant == crate::encoding::EncodingVariant::Level,
    )?;
    let params = PrivacyParams::calibrated(config.epsilon, config.delta, sensitivity.l2, config.noise_seed)?;
    if config.epsilon.is_finite() {
        dp_release(&mut model, params)?;
    }
    Ok(DpOutcome { model, params, sensitivity })
}
