//! Encoding quantization, dimension masks, and query obfuscation.
//!
//! Theoretical thresholds assume each element of an encoding is distributed
//! as `N(0, D_iv)`, which holds for the level encoding (a sum of `D_iv`
//! independent ±1 products). For the scalar encoding the variance is
//! `sum v_k^2`, so the empirical (per-vector quantile) source is the better
//! fit there.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::hv::{Alphabet, Hypervector, Kind};
use crate::rng::rng_from_seed;

/// `Phi^-1(2/3)`: puts a third of a standard normal above the threshold.
pub const TERNARY_Z: f64 = 0.430_727_299_295_457_6;
/// `Phi^-1(3/4)`: the upper quartile of a standard normal.
pub const QUARTILE_Z: f64 = 0.674_489_750_196_081_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeTag {
    None,
    Binary,
    Ternary,
    TernaryBiased,
    TwoBit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSource {
    Theoretical,
    Empirical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuantScheme {
    pub tag: SchemeTag,
    pub thresholds: ThresholdSource,
}

impl QuantScheme {
    pub const NONE: QuantScheme = QuantScheme::theoretical(SchemeTag::None);
    pub const BINARY: QuantScheme = QuantScheme::theoretical(SchemeTag::Binary);
    pub const TERNARY: QuantScheme = QuantScheme::theoretical(SchemeTag::Ternary);
    pub const TERNARY_BIASED: QuantScheme = QuantScheme::theoretical(SchemeTag::TernaryBiased);
    pub const TWO_BIT: QuantScheme = QuantScheme::theoretical(SchemeTag::TwoBit);

    pub const fn theoretical(tag: SchemeTag) -> Self {
        Self { tag, thresholds: ThresholdSource::Theoretical }
    }

    pub const fn empirical(tag: SchemeTag) -> Self {
        Self { tag, thresholds: ThresholdSource::Empirical }
    }

    pub fn alphabet(&self) -> Option<Alphabet> {
        match self.tag {
            SchemeTag::None => None,
            SchemeTag::Binary => Some(Alphabet::Binary),
            SchemeTag::Ternary | SchemeTag::TernaryBiased => Some(Alphabet::Ternary),
            SchemeTag::TwoBit => Some(Alphabet::TwoBit),
        }
    }

    /// Target `(symbol, probability)` pairs; `None` for full precision.
    pub fn symbol_probabilities(&self) -> Option<Vec<(i64, f64)>> {
        let p = match self.tag {
            SchemeTag::None => return None,
            SchemeTag::Binary => vec![(-1, 0.5), (1, 0.5)],
            SchemeTag::Ternary => vec![(-1, 1.0 / 3.0), (0, 1.0 / 3.0), (1, 1.0 / 3.0)],
            SchemeTag::TernaryBiased => vec![(-1, 0.25), (0, 0.5), (1, 0.25)],
            SchemeTag::TwoBit => vec![(-2, 0.25), (-1, 0.25), (0, 0.25), (1, 0.25)],
        };
        Some(p)
    }

    /// Short name used in file formats and logs, e.g. `ternary_biased` or
    /// `binary/empirical`.
    pub fn name(&self) -> String {
        let tag = match self.tag {
            SchemeTag::None => "none",
            SchemeTag::Binary => "binary",
            SchemeTag::Ternary => "ternary",
            SchemeTag::TernaryBiased => "ternary_biased",
            SchemeTag::TwoBit => "two_bit",
        };
        match self.thresholds {
            ThresholdSource::Theoretical => tag.to_string(),
            ThresholdSource::Empirical => format!("{tag}/empirical"),
        }
    }

    /// Wire tag byte.
    pub fn code(&self) -> u8 {
        let t = match self.tag {
            SchemeTag::None => 0,
            SchemeTag::Binary => 1,
            SchemeTag::Ternary => 2,
            SchemeTag::TernaryBiased => 3,
            SchemeTag::TwoBit => 4,
        };
        match self.thresholds {
            ThresholdSource::Theoretical => t,
            ThresholdSource::Empirical => t | 0x80,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        let tag = match code & 0x7f {
            0 => SchemeTag::None,
            1 => SchemeTag::Binary,
            2 => SchemeTag::Ternary,
            3 => SchemeTag::TernaryBiased,
            4 => SchemeTag::TwoBit,
            other => return Err(Error::Input(format!("unknown scheme code {other}"))),
        };
        Ok(if code & 0x80 != 0 { Self::empirical(tag) } else { Self::theoretical(tag) })
    }
}

impl std::fmt::Display for QuantScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}

impl std::str::FromStr for QuantScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (tag, src) = match s.split_once('/') {
            Some((t, "empirical")) => (t, ThresholdSource::Empirical),
            Some((t, "theoretical")) => (t, ThresholdSource::Theoretical),
            Some(_) => return Err(Error::Config(format!("unknown threshold source in `{s}`"))),
            None => (s, ThresholdSource::Theoretical),
        };
        let tag = match tag {
            "none" => SchemeTag::None,
            "binary" => SchemeTag::Binary,
            "ternary" => SchemeTag::Ternary,
            "ternary_biased" => SchemeTag::TernaryBiased,
            "two_bit" => SchemeTag::TwoBit,
            other => return Err(Error::Config(format!("unknown quantization scheme `{other}`"))),
        };
        Ok(Self { tag, thresholds: src })
    }
}

/// Value at quantile `q` of the sorted slice (lower order statistic).
fn quantile(sorted: &[i64], q: f64) -> f64 {
    let idx = ((sorted.len() as f64 * q).floor() as usize).min(sorted.len() - 1);
    sorted[idx] as f64
}

/// Thresholds `(lower, upper)` for the symmetric three-symbol schemes and the
/// three cut points for two-bit.
fn cut_points(h: &[i64], scheme: QuantScheme, d_iv: usize) -> Result<Vec<f64>> {
    let probs: &[f64] = match scheme.tag {
        SchemeTag::Ternary => &[1.0 / 3.0, 2.0 / 3.0],
        SchemeTag::TernaryBiased => &[0.25, 0.75],
        SchemeTag::TwoBit => &[0.25, 0.5, 0.75],
        SchemeTag::None | SchemeTag::Binary => return Ok(vec![]),
    };
    match scheme.thresholds {
        ThresholdSource::Theoretical => {
            if d_iv == 0 {
                return Err(Error::Config("theoretical thresholds need d_iv > 0".into()));
            }
            let sd = (d_iv as f64).sqrt();
            Ok(match scheme.tag {
                SchemeTag::Ternary => vec![-TERNARY_Z * sd, TERNARY_Z * sd],
                SchemeTag::TernaryBiased => vec![-QUARTILE_Z * sd, QUARTILE_Z * sd],
                _ => vec![-QUARTILE_Z * sd, 0.0, QUARTILE_Z * sd],
            })
        }
        ThresholdSource::Empirical => {
            if h.is_empty() {
                return Ok(vec![0.0; probs.len()]);
            }
            let mut sorted = h.to_vec();
            sorted.sort_unstable();
            Ok(probs.iter().map(|&q| quantile(&sorted, q)).collect())
        }
    }
}

/// Quantizes an encoding. Ties at zero map to +1 under the binary scheme.
/// A vector already in the scheme's alphabet is returned unchanged.
pub fn quantize(h: &Hypervector, scheme: QuantScheme, d_iv: usize) -> Result<Hypervector> {
    let Some(alphabet) = scheme.alphabet() else {
        return Ok(h.clone());
    };
    if h.kind() == Kind::Quantized(alphabet) {
        return Ok(h.clone());
    }
    let cuts = cut_points(h.as_slice(), scheme, d_iv)?;
    let out: Vec<i64> = match scheme.tag {
        SchemeTag::Binary => h.as_slice().iter().map(|&v| if v >= 0 { 1 } else { -1 }).collect(),
        SchemeTag::Ternary | SchemeTag::TernaryBiased => {
            let (lo, hi) = (cuts[0], cuts[1]);
            h.as_slice()
                .iter()
                .map(|&v| {
                    let v = v as f64;
                    if v < lo {
                        -1
                    } else if v > hi {
                        1
                    } else {
                        0
                    }
                })
                .collect()
        }
        SchemeTag::TwoBit => h
            .as_slice()
            .iter()
            .map(|&v| {
                let v = v as f64;
                if v < cuts[0] {
                    -2
                } else if v < cuts[1] {
                    -1
                } else if v < cuts[2] {
                    0
                } else {
                    1
                }
            })
            .collect(),
        SchemeTag::None => unreachable!(),
    };
    Ok(Hypervector::from_parts_unchecked(out, Kind::Quantized(alphabet)))
}

/// Which hypervector dimensions survive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimensionMask {
    kept: Vec<bool>,
    count_kept: usize,
}

impl DimensionMask {
    pub fn full(d_hv: usize) -> Self {
        Self { kept: vec![true; d_hv], count_kept: d_hv }
    }

    pub fn from_kept(kept: Vec<bool>) -> Self {
        let count_kept = kept.iter().filter(|&&k| k).count();
        Self { kept, count_kept }
    }

    /// Masks `masked` dimensions chosen by a seeded shuffle. For one seed the
    /// masked sets are nested: more masking only adds positions.
    pub fn random(d_hv: usize, masked: usize, seed: u64) -> Result<Self> {
        if masked > d_hv {
            return Err(Error::Config(format!("cannot mask {masked} of {d_hv} dimensions")));
        }
        let mut rng = rng_from_seed(seed);
        let mut order: Vec<usize> = (0..d_hv).collect();
        for i in (1..d_hv).rev() {
            let j = ((rng.next_u64() as u128 * (i as u128 + 1)) >> 64) as usize;
            order.swap(i, j);
        }
        let mut kept = vec![true; d_hv];
        for &p in &order[..masked] {
            kept[p] = false;
        }
        Ok(Self::from_kept(kept))
    }

    /// Masks `ceil(fraction * d_hv)` dimensions; see [`DimensionMask::random`].
    pub fn random_fraction(d_hv: usize, fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::Config(format!("mask fraction {fraction} outside [0, 1]")));
        }
        Self::random(d_hv, (fraction * d_hv as f64).ceil() as usize, seed)
    }

    pub fn len(&self) -> usize {
        self.kept.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept.is_empty()
    }

    pub fn count_kept(&self) -> usize {
        self.count_kept
    }

    pub fn count_masked(&self) -> usize {
        self.kept.len() - self.count_kept
    }

    pub fn is_kept(&self, j: usize) -> bool {
        self.kept[j]
    }

    pub fn kept(&self) -> &[bool] {
        &self.kept
    }

    pub fn is_full(&self) -> bool {
        self.count_kept == self.kept.len()
    }

    /// Zeroes the masked dimensions.
    pub fn apply(&self, h: &Hypervector) -> Result<Hypervector> {
        check_len(self.len(), h.len())?;
        if self.is_full() {
            return Ok(h.clone());
        }
        let dims: Vec<i64> = h.as_slice().iter().zip(&self.kept).map(|(&v, &k)| if k { v } else { 0 }).collect();
        let kind = match h.kind() {
            Kind::Integer => Kind::Integer,
            Kind::Quantized(a) if a.contains(0) => Kind::Quantized(a),
            Kind::Bipolar | Kind::Quantized(_) => Kind::Quantized(Alphabet::Ternary),
        };
        Ok(Hypervector::from_parts_unchecked(dims, kind))
    }

    /// Intersection: kept only where both keep.
    pub fn intersect(&self, other: &DimensionMask) -> Result<DimensionMask> {
        check_len(self.len(), other.len())?;
        Ok(Self::from_kept(self.kept.iter().zip(&other.kept).map(|(a, b)| *a && *b).collect()))
    }

    /// Run lengths of alternating kept/masked stretches; the first run is
    /// kept (and may be empty).
    pub fn runs(&self) -> Vec<usize> {
        let mut runs = Vec::new();
        let mut current = true;
        let mut len = 0usize;
        for &k in &self.kept {
            if k == current {
                len += 1;
            } else {
                runs.push(len);
                current = k;
                len = 1;
            }
        }
        runs.push(len);
        runs
    }

    pub fn from_runs(runs: &[usize]) -> Self {
        let mut kept = Vec::with_capacity(runs.iter().sum());
        for (i, &r) in runs.iter().enumerate() {
            kept.extend(std::iter::repeat_n(i % 2 == 0, r));
        }
        Self::from_kept(kept)
    }
}

/// Quantize first, then zero the masked dimensions.
pub fn obfuscate_query(h: &Hypervector, scheme: QuantScheme, d_iv: usize, mask: &DimensionMask) -> Result<Hypervector> {
    check_len(h.len(), mask.len())?;
    mask.apply(&quantize(h, scheme, d_iv)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::CodebookSet;
    use crate::encoding::encode_scalar;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn gaussian_vec(n: usize, sd: f64, seed: u64) -> Hypervector {
        let mut rng = rng_from_seed(seed);
        let normal = Normal::new(0.0, sd).unwrap();
        Hypervector::integer((0..n).map(|_| normal.sample(&mut rng).round() as i64).collect())
    }

    fn freq(h: &Hypervector, s: i64) -> f64 {
        h.as_slice().iter().filter(|&&v| v == s).count() as f64 / h.len() as f64
    }

    #[test]
    fn binary_sign_with_positive_tie() {
        let q = quantize(&Hypervector::integer(vec![5, -3, 0]), QuantScheme::BINARY, 1).unwrap();
        assert_eq!(q.as_slice(), &[1, -1, 1]);
        assert_eq!(q.kind(), Kind::Quantized(Alphabet::Binary));
    }

    #[test]
    fn none_is_passthrough() {
        let h = Hypervector::integer(vec![4, -9, 0]);
        assert_eq!(quantize(&h, QuantScheme::NONE, 3).unwrap(), h);
    }

    #[test]
    fn biased_ternary_zero_mass_on_scalar_encoding() {
        // binary-valued features so that Var(H_j) = D_iv exactly
        let cb = CodebookSet::generate(4, 617, 10_000, 2).unwrap();
        let mut rng = rng_from_seed(5);
        let v: Vec<i64> = (0..617).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        let h = encode_scalar(&v, &cb).unwrap();
        let q = quantize(&h, QuantScheme::TERNARY_BIASED, 617).unwrap();
        let p0 = freq(&q, 0);
        assert!((0.47..=0.53).contains(&p0), "p0 = {p0}");
    }

    #[test]
    fn theoretical_frequencies_converge() {
        // wide spread so integer rounding does not shift mass across the zero cut
        let d_iv = 40_000usize;
        let h = gaussian_vec(100_000, (d_iv as f64).sqrt(), 77);
        for scheme in [QuantScheme::TERNARY, QuantScheme::TERNARY_BIASED, QuantScheme::TWO_BIT, QuantScheme::BINARY] {
            let q = quantize(&h, scheme, d_iv).unwrap();
            for (s, p) in scheme.symbol_probabilities().unwrap() {
                let got = freq(&q, s);
                assert!((got - p).abs() < 0.01, "{scheme}: p({s}) = {got}, want {p}");
            }
        }
    }

    #[test]
    fn empirical_thresholds_hit_targets() {
        let h = gaussian_vec(30_000, 37.0, 3);
        for tag in [SchemeTag::Ternary, SchemeTag::TernaryBiased, SchemeTag::TwoBit] {
            let scheme = QuantScheme::empirical(tag);
            let q = quantize(&h, scheme, 0).unwrap();
            for (s, p) in scheme.symbol_probabilities().unwrap() {
                assert!((freq(&q, s) - p).abs() < 0.02, "{scheme} p({s})");
            }
        }
    }

    #[test]
    fn obfuscation_identity_and_empty() {
        let h = gaussian_vec(64, 10.0, 1);
        assert_eq!(obfuscate_query(&h, QuantScheme::NONE, 100, &DimensionMask::full(64)).unwrap(), h);
        let none_kept = DimensionMask::from_kept(vec![false; 64]);
        let z = obfuscate_query(&h, QuantScheme::BINARY, 100, &none_kept).unwrap();
        assert!(z.as_slice().iter().all(|&v| v == 0));
    }

    #[test]
    fn binary_half_mask_structure() {
        let h = gaussian_vec(10_001, 20.0, 9);
        let mask = DimensionMask::random_fraction(10_001, 0.5, 12).unwrap();
        let q = obfuscate_query(&h, QuantScheme::BINARY, 400, &mask).unwrap();
        let zeros = q.as_slice().iter().filter(|&&v| v == 0).count();
        assert_eq!(zeros, 5001);
        assert!(q.as_slice().iter().all(|&v| v == 0 || v == 1 || v == -1));
    }

    #[test]
    fn nested_random_masks() {
        let small = DimensionMask::random(1000, 100, 4).unwrap();
        let big = DimensionMask::random(1000, 400, 4).unwrap();
        for j in 0..1000 {
            assert!(small.is_kept(j) || !big.is_kept(j));
        }
    }

    #[test]
    fn scheme_names_parse_back() {
        for tag in [SchemeTag::None, SchemeTag::Binary, SchemeTag::Ternary, SchemeTag::TernaryBiased, SchemeTag::TwoBit] {
            for s in [QuantScheme::theoretical(tag), QuantScheme::empirical(tag)] {
                assert_eq!(s.name().parse::<QuantScheme>().unwrap(), s);
                assert_eq!(QuantScheme::from_code(s.code()).unwrap(), s);
            }
        }
        assert!("quaternary".parse::<QuantScheme>().is_err());
    }

    proptest! {
        #[test]
        fn quantize_idempotent(v in proptest::collection::vec(-50i64..50, 1..200), which in 0usize..2) {
            let scheme = [QuantScheme::BINARY, QuantScheme::TERNARY][which];
            let once = quantize(&Hypervector::integer(v), scheme, 25).unwrap();
            let twice = quantize(&once, scheme, 25).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn mask_idempotent_and_rle_exact(kept in proptest::collection::vec(any::<bool>(), 0..300)) {
            let mask = DimensionMask::from_kept(kept.clone());
            prop_assert_eq!(DimensionMask::from_runs(&mask.runs()), mask.clone());
            let h = Hypervector::integer((0..kept.len() as i64).collect());
            let once = mask.apply(&h).unwrap();
            prop_assert_eq!(mask.apply(&once).unwrap(), once);
        }
    }
}
