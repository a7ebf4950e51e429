//! Feature-to-hypervector encodings.
//!
//! Two variants share one codebook:
//!
//! * **scalar**: `H_j = sum_k v_k * B_kj`, where `v_k` is the integer level of
//!   feature `k` (for 8-bit images with 256 levels, the pixel value itself);
//! * **level**: `H_j = sum_k L[v_k]_j * B_kj`, a sum of `D_iv` bipolar products.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codebook::CodebookSet;
use crate::error::{check_len, Error, Result};
use crate::hv::Hypervector;
use crate::quant::{quantize, QuantScheme};

/// Closed interval the raw features are binned over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureRange {
    pub min: f64,
    pub max: f64,
}

impl FeatureRange {
    pub fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn is_degenerate(&self) -> bool {
        self.max.is_nan() || self.min.is_nan() || self.max <= self.min
    }

    /// Feature value at the center of level `index`.
    pub fn level_value(&self, index: f64, levels: usize) -> f64 {
        if self.is_degenerate() {
            return self.min;
        }
        self.min + index * (self.max - self.min) / (levels - 1) as f64
    }
}

/// Result of binning one feature vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelMapping {
    pub indices: Vec<usize>,
    /// Set when the range was empty and everything was sent to level 0.
    pub degenerate: bool,
}

/// Nearest-level binning: level centers sit at `min + i * (max - min) / (levels - 1)`.
pub fn map_features(values: &[f64], range: FeatureRange, levels: usize) -> Result<LevelMapping> {
    if levels < 2 {
        return Err(Error::Config(format!("need at least 2 levels, got {levels}")));
    }
    if range.is_degenerate() {
        return Ok(LevelMapping { indices: vec![0; values.len()], degenerate: true });
    }
    let top = (levels - 1) as f64;
    let span = range.max - range.min;
    let indices = values
        .iter()
        .map(|&v| {
            let pos = ((v - range.min) / span * top).round();
            pos.clamp(0.0, top) as usize
        })
        .collect();
    Ok(LevelMapping { indices, degenerate: false })
}

/// Scalar-weighted encoding. Exact integer arithmetic.
pub fn encode_scalar(values: &[i64], codebook: &CodebookSet) -> Result<Hypervector> {
    check_len(codebook.d_iv(), values.len())?;
    let mut acc = vec![0i64; codebook.d_hv()];
    for (k, &v) in values.iter().enumerate() {
        if v == 0 {
            continue;
        }
        for (a, &b) in acc.iter_mut().zip(codebook.base_row(k)) {
            *a += v * b as i64;
        }
    }
    Ok(Hypervector::integer(acc))
}

/// Level-bound encoding; every element is a sum of `D_iv` bipolar products.
pub fn encode_level(levels: &[usize], codebook: &CodebookSet) -> Result<Hypervector> {
    check_len(codebook.d_iv(), levels.len())?;
    if let Some(&bad) = levels.iter().find(|&&f| f >= codebook.levels()) {
        return Err(Error::Input(format!("level index {bad} out of range 0..{}", codebook.levels())));
    }
    let d_hv = codebook.d_hv();
    if codebook.d_iv() > i32::MAX as usize {
        return Err(Error::Config("d_iv too large for 32-bit partial sums".into()));
    }
    let mut acc = vec![0i32; d_hv];
    for (k, &f) in levels.iter().enumerate() {
        let base = codebook.base_row(k);
        let level = codebook.level_row(f);
        for ((a, &b), &l) in acc.iter_mut().zip(base).zip(level) {
            *a += (b * l) as i32;
        }
    }
    Ok(Hypervector::integer(acc.into_iter().map(i64::from).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingVariant {
    Scalar,
    Level,
}

impl EncodingVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            EncodingVariant::Scalar => "scalar",
            EncodingVariant::Level => "level",
        }
    }
}

impl std::str::FromStr for EncodingVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scalar" => Ok(Self::Scalar),
            "level" => Ok(Self::Level),
            other => Err(Error::Config(format!("unknown encoding variant `{other}`"))),
        }
    }
}

/// Everything needed to rebuild an encoder; persisted in the model file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncodingConfig {
    pub seed: u64,
    pub d_iv: usize,
    pub d_hv: usize,
    pub levels: usize,
    pub variant: EncodingVariant,
    pub scheme: QuantScheme,
    pub range: FeatureRange,
}

/// Codebook plus configuration: turns raw feature rows into (quantized) encodings.
#[derive(Debug, Clone)]
pub struct Encoder {
    config: EncodingConfig,
    codebook: CodebookSet,
}

impl Encoder {
    pub fn new(config: EncodingConfig) -> Result<Self> {
        let codebook = CodebookSet::generate(config.seed, config.d_iv, config.d_hv, config.levels)?;
        Ok(Self { config, codebook })
    }

    pub fn config(&self) -> &EncodingConfig {
        &self.config
    }

    pub fn codebook(&self) -> &CodebookSet {
        &self.codebook
    }

    /// Same codebook, different quantization.
    pub fn with_scheme(&self, scheme: QuantScheme) -> Self {
        let mut out = self.clone();
        out.config.scheme = scheme;
        out
    }

    pub fn levels_of(&self, features: &[f64]) -> Result<Vec<usize>> {
        check_len(self.config.d_iv, features.len())?;
        Ok(map_features(features, self.config.range, self.config.levels)?.indices)
    }

    /// Full-precision encoding (no quantization).
    pub fn encode_raw(&self, features: &[f64]) -> Result<Hypervector> {
        let levels = self.levels_of(features)?;
        match self.config.variant {
            EncodingVariant::Level => encode_level(&levels, &self.codebook),
            EncodingVariant::Scalar => {
                let values: Vec<i64> = levels.iter().map(|&v| v as i64).collect();
                encode_scalar(&values, &self.codebook)
            }
        }
    }

    pub fn encode(&self, features: &[f64]) -> Result<Hypervector> {
        let h = self.encode_raw(features)?;
        quantize(&h, self.config.scheme, self.config.d_iv)
    }

    pub fn encode_batch(&self, rows: &[Vec<f64>]) -> Result<Vec<Hypervector>> {
        rows.par_iter().map(|r| self.encode(r)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn map_boundaries_and_nearest_bin() {
        let r = FeatureRange::new(0.0, 1.0);
        let m = map_features(&[0.0, 1.0, 0.49], r, 4).unwrap();
        assert_eq!(m.indices, vec![0, 3, 1]);
        assert!(!m.degenerate);
        let m = map_features(&[-3.0, 9.0], FeatureRange::new(-3.0, 9.0), 10).unwrap();
        assert_eq!(m.indices, vec![0, 9]);
    }

    #[test]
    fn degenerate_range_maps_to_zero() {
        let m = map_features(&[2.0, 2.0], FeatureRange::new(2.0, 2.0), 4).unwrap();
        assert_eq!(m.indices, vec![0, 0]);
        assert!(m.degenerate);
    }

    #[test]
    fn scalar_zero_and_single_term() {
        let cb = CodebookSet::generate(5, 3, 64, 4).unwrap();
        assert_eq!(encode_scalar(&[0, 0, 0], &cb).unwrap(), Hypervector::zeros(64));

        let cb1 = CodebookSet::generate(5, 1, 64, 4).unwrap();
        let h = encode_scalar(&[3], &cb1).unwrap();
        assert_eq!(h, cb1.base(0).scaled(3));
        assert!(matches!(encode_scalar(&[1, 2], &cb1), Err(Error::Dimension { .. })));
    }

    #[test]
    fn scalar_variance_matches_feature_energy() {
        let cb = CodebookSet::generate(21, 200, 10_000, 2).unwrap();
        let mut rng = rng_from_seed(99);
        let v: Vec<i64> = (0..200).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        let h = encode_scalar(&v, &cb).unwrap();
        let n = h.len() as f64;
        let mean = h.as_slice().iter().sum::<i64>() as f64 / n;
        let var = h.as_slice().iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((180.0..=220.0).contains(&var), "variance {var}");
    }

    #[test]
    fn level_single_feature_is_bound_pair() {
        let cb = CodebookSet::generate(5, 1, 128, 4).unwrap();
        let h = encode_level(&[2], &cb).unwrap();
        let expect: Vec<i64> =
            cb.base_row(0).iter().zip(cb.level_row(2)).map(|(&b, &l)| (b * l) as i64).collect();
        assert_eq!(h.as_slice(), &expect[..]);
        assert!(matches!(encode_level(&[4], &cb), Err(Error::Input(_))));
    }

    #[test]
    fn level_two_feature_parity() {
        let cb = CodebookSet::generate(6, 2, 256, 4).unwrap();
        let h = encode_level(&[1, 3], &cb).unwrap();
        for j in 0..256 {
            let p0 = cb.base_row(0)[j] * cb.level_row(1)[j];
            let p1 = cb.base_row(1)[j] * cb.level_row(3)[j];
            let want = if p0 == p1 { 2 * p0 as i64 } else { 0 };
            assert_eq!(h.as_slice()[j], want);
        }
    }

    #[test]
    fn level_norm_matches_clt() {
        let cb = CodebookSet::generate(8, 617, 10_000, 16).unwrap();
        let mut rng = rng_from_seed(1);
        let trials = 20;
        let mean_norm: f64 = (0..trials)
            .map(|_| {
                let lv: Vec<usize> = (0..617).map(|_| rng.random_range(0..16)).collect();
                encode_level(&lv, &cb).unwrap().l2_norm()
            })
            .sum::<f64>()
            / trials as f64;
        let expect = (1e4f64 * 617.0).sqrt();
        assert!((expect - 2484.0).abs() < 0.5);
        assert!((mean_norm / expect - 1.0).abs() < 0.02, "mean norm {mean_norm}");
    }

    proptest! {
        #[test]
        fn scalar_encoding_is_linear(
            v in proptest::collection::vec(-20i64..20, 6),
            w in proptest::collection::vec(-20i64..20, 6),
            a in -5i64..5,
            b in -5i64..5,
        ) {
            let cb = CodebookSet::generate(13, 6, 96, 2).unwrap();
            let combo: Vec<i64> = v.iter().zip(&w).map(|(x, y)| a * x + b * y).collect();
            let lhs = encode_scalar(&combo, &cb).unwrap();
            let mut rhs = encode_scalar(&v, &cb).unwrap().scaled(a);
            rhs.accumulate(&encode_scalar(&w, &cb).unwrap(), b).unwrap();
            prop_assert_eq!(lhs.as_slice(), rhs.as_slice());
        }

        #[test]
        fn level_elements_bounded_with_parity(lv in proptest::collection::vec(0usize..5, 1..20)) {
            let cb = CodebookSet::generate(17, lv.len(), 200, 5).unwrap();
            let h = encode_level(&lv, &cb).unwrap();
            let d = lv.len() as i64;
            for &x in h.as_slice() {
                prop_assert!(x.abs() <= d);
                prop_assert_eq!((x - d).rem_euclid(2), 0);
            }
        }
    }
}
