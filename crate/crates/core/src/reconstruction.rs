//! Linear inversion of encodings and reconstruction-quality metrics.
//!
//! Base rows are quasi-orthogonal, so projecting an encoding back onto base
//! row `m` isolates feature `m` up to cross-talk from the other features.
//! Differences of two models trained on adjacent datasets are decoded the
//! same way, since the difference is the encoding of the missing sample.

use serde::Serialize;

use crate::codebook::CodebookSet;
use crate::encoding::{EncodingVariant, Encoder};
use crate::error::{check_len, Error, Result};
use crate::hv::{Hypervector, Kind};
use crate::model::Model;

fn check_codebook(h: &Hypervector, codebook: &CodebookSet) -> Result<()> {
    check_len(codebook.d_hv(), h.len())
}

/// `v_m = dot(h, B_m) / D_hv` for every feature. On a level encoding this
/// yields the projections of the bound pairs, not feature values; use
/// [`decode_level`] there.
pub fn decode_scalar(h: &Hypervector, codebook: &CodebookSet) -> Result<Vec<f64>> {
    check_codebook(h, codebook)?;
    let d = codebook.d_hv() as f64;
    Ok((0..codebook.d_iv())
        .map(|m| {
            let s: i64 = h.as_slice().iter().zip(codebook.base_row(m)).map(|(&x, &b)| x * b as i64).sum();
            s as f64 / d
        })
        .collect())
}

/// Unbinds with each base row and returns the best-matching level index
/// (ties to the lowest index).
pub fn decode_level(h: &Hypervector, codebook: &CodebookSet) -> Result<Vec<usize>> {
    check_codebook(h, codebook)?;
    let mut unbound = vec![0i64; codebook.d_hv()];
    Ok((0..codebook.d_iv())
        .map(|k| {
            for ((u, &x), &b) in unbound.iter_mut().zip(h.as_slice()).zip(codebook.base_row(k)) {
                *u = x * b as i64;
            }
            let mut best = (i64::MIN, 0usize);
            for f in 0..codebook.levels() {
                let s: i64 = unbound.iter().zip(codebook.level_row(f)).map(|(&u, &l)| u * l as i64).sum();
                if s > best.0 {
                    best = (s, f);
                }
            }
            best.1
        })
        .collect())
}

/// Decodes with the variant the encoder uses and maps levels back to feature values.
pub fn recover_features(h: &Hypervector, encoder: &Encoder) -> Result<Vec<f64>> {
    let cfg = encoder.config();
    match cfg.variant {
        EncodingVariant::Scalar => {
            Ok(decode_scalar(h, encoder.codebook())?.into_iter().map(|v| cfg.range.level_value(v, cfg.levels)).collect())
        }
        EncodingVariant::Level => Ok(decode_level(h, encoder.codebook())?
            .into_iter()
            .map(|f| cfg.range.level_value(f as f64, cfg.levels))
            .collect()),
    }
}

/// Standard deviation of the cross-talk error on feature `m` of a scalar
/// decode: `sqrt(sum_{k != m} v_k^2 / D_hv)`.
pub fn crosstalk_std(values: &[f64], m: usize, d_hv: usize) -> f64 {
    let energy: f64 = values.iter().enumerate().filter(|&(k, _)| k != m).map(|(_, v)| v * v).sum();
    (energy / d_hv as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Fidelity {
    pub mse: f64,
    /// `None` when the reconstruction is exact (infinite PSNR).
    pub psnr_db: Option<f64>,
}

impl Fidelity {
    pub fn psnr(&self) -> f64 {
        self.psnr_db.unwrap_or(f64::INFINITY)
    }
}

/// Mean squared error and `10 log10(max^2 / mse)`.
pub fn fidelity(original: &[f64], recovered: &[f64], max_value: f64) -> Result<Fidelity> {
    check_len(original.len(), recovered.len())?;
    if original.is_empty() {
        return Err(Error::Input("fidelity of empty vectors".into()));
    }
    let mse = original.iter().zip(recovered).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / original.len() as f64;
    let psnr_db = (mse > 0.0).then(|| 10.0 * (max_value * max_value / mse).log10());
    Ok(Fidelity { mse, psnr_db })
}

/// Fidelity after the best single gain `a` (least squares, `a * recovered`),
/// i.e. an attacker who knows the right output scale.
pub fn fidelity_best_gain(original: &[f64], recovered: &[f64], max_value: f64) -> Result<Fidelity> {
    check_len(original.len(), recovered.len())?;
    let num: f64 = original.iter().zip(recovered).map(|(a, b)| a * b).sum();
    let den: f64 = recovered.iter().map(|b| b * b).sum();
    let gain = if den > 0.0 { num / den } else { 0.0 };
    let scaled: Vec<f64> = recovered.iter().map(|b| gain * b).collect();
    fidelity(original, &scaled, max_value)
}

/// What the attacker holds.
#[derive(Debug, Clone, Copy)]
pub enum BreachInput<'a> {
    /// An offloaded (possibly obfuscated) query hypervector.
    Query(&'a Hypervector),
    /// Two models whose training sets differ by one sample present in `with`.
    AdjacentModels { with: &'a Model, without: &'a Model },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconstructionReport {
    pub recovered: Vec<f64>,
    pub mse: f64,
    pub psnr_db: Option<f64>,
    pub source: &'static str,
    pub scheme: String,
    pub masked_dims: usize,
    pub d_hv: usize,
    /// Class whose vector changed (adjacent-model path).
    pub class: Option<usize>,
}

/// Locates the class whose training count grew by one and returns the class
/// difference `with - without`.
pub fn adjacent_difference(with: &Model, without: &Model) -> Result<(usize, Hypervector)> {
    if with.num_classes() != without.num_classes() || with.d_hv() != without.d_hv() {
        return Err(Error::Input("models have different shapes".into()));
    }
    let changed: Vec<usize> =
        (0..with.num_classes()).filter(|&l| with.train_counts()[l] != without.train_counts()[l]).collect();
    let [class] = changed[..] else {
        return Err(Error::Input(format!("ambiguous model pair: {} classes changed", changed.len())));
    };
    if with.train_counts()[class] != without.train_counts()[class] + 1 {
        return Err(Error::Input("models are not adjacent: class count differs by more than one".into()));
    }
    let mut diff = Hypervector::integer(with.classes()[class].as_slice().to_vec());
    diff.accumulate(&without.classes()[class], -1)?;
    Ok((class, diff))
}

/// Runs the decode that matches the encoder on the attacker's input and
/// scores it against the true features.
pub fn breach_report(input: BreachInput<'_>, encoder: &Encoder, original: &[f64], max_value: f64) -> Result<ReconstructionReport> {
    let (h, source, class, masked) = match input {
        BreachInput::Query(q) => {
            let masked = q.as_slice().iter().filter(|&&v| v == 0).count();
            let masked = if matches!(q.kind(), Kind::Integer) { 0 } else { masked };
            (q.clone(), "query", None, masked)
        }
        BreachInput::AdjacentModels { with, without } => {
            let (class, diff) = adjacent_difference(with, without)?;
            (diff, "adjacent_models", Some(class), with.mask().count_masked())
        }
    };
    let recovered = recover_features(&h, encoder)?;
    let fid = fidelity(original, &recovered, max_value)?;
    Ok(ReconstructionReport {
        recovered,
        mse: fid.mse,
        psnr_db: fid.psnr_db,
        source,
        scheme: match h.kind() {
            Kind::Quantized(a) => format!("{a:?}").to_lowercase(),
            Kind::Bipolar => "bipolar".into(),
            Kind::Integer => "none".into(),
        },
        masked_dims: masked,
        d_hv: h.len(),
        class,
    })
}

/// Plain PGM (P2) rendering of a row-major image, clamped to `[0, max]`.
pub fn to_pgm(values: &[f64], width: usize, max_value: u16) -> Result<String> {
    if width == 0 || !values.len().is_multiple_of(width) {
        return Err(Error::Input(format!("{} pixels do not tile width {width}", values.len())));
    }
    let height = values.len() / width;
    let mut out = format!("P2\n{width} {height}\n{max_value}\n");
    for row in values.chunks(width) {
        let line: Vec<String> =
            row.iter().map(|v| (v.round().clamp(0.0, max_value as f64) as u16).to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{encode_level, encode_scalar};
    use crate::rng::rng_from_seed;
    use rand::Rng;

    #[test]
    fn single_feature_round_trip() {
        for d_hv in [1usize, 7, 64, 1000] {
            let cb = CodebookSet::generate(3, 1, d_hv, 2).unwrap();
            let h = encode_scalar(&[5], &cb).unwrap();
            assert_eq!(decode_scalar(&h, &cb).unwrap(), vec![5.0]);
        }
    }

    #[test]
    fn scalar_crosstalk_matches_formula() {
        let cb = CodebookSet::generate(12, 200, 10_000, 2).unwrap();
        let mut rng = rng_from_seed(6);
        let mut errs = Vec::new();
        for _ in 0..5 {
            let v: Vec<i64> = (0..200).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
            let h = encode_scalar(&v, &cb).unwrap();
            let d = decode_scalar(&h, &cb).unwrap();
            errs.extend(d.iter().zip(&v).map(|(a, &b)| a - b as f64));
        }
        let n = errs.len() as f64;
        let sd = (errs.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
        let expect = (199.0f64 / 10_000.0).sqrt();
        assert!((sd / expect - 1.0).abs() < 0.25, "sd {sd} vs {expect}");
    }

    #[test]
    fn level_decode_single_and_many() {
        let cb1 = CodebookSet::generate(1, 1, 2000, 8).unwrap();
        for f in 0..8 {
            assert_eq!(decode_level(&encode_level(&[f], &cb1).unwrap(), &cb1).unwrap(), vec![f]);
        }
        let cb = CodebookSet::generate(2, 50, 10_000, 8).unwrap();
        let mut rng = rng_from_seed(3);
        let mut hits = 0;
        let trials = 10;
        for _ in 0..trials {
            let lv: Vec<usize> = (0..50).map(|_| rng.random_range(0..8)).collect();
            let got = decode_level(&encode_level(&lv, &cb).unwrap(), &cb).unwrap();
            hits += got.iter().zip(&lv).filter(|(a, b)| a == b).count();
        }
        let rate = hits as f64 / (50 * trials) as f64;
        assert!(rate >= 0.9, "recovered {rate}");
    }

    #[test]
    fn zero_vector_decodes_to_level_zero() {
        let cb = CodebookSet::generate(2, 4, 100, 5).unwrap();
        assert_eq!(decode_level(&Hypervector::zeros(100), &cb).unwrap(), vec![0; 4]);
        assert!(matches!(decode_level(&Hypervector::zeros(99), &cb), Err(Error::Dimension { .. })));
    }

    #[test]
    fn scalar_decode_on_level_encoding_gives_projections() {
        let cb = CodebookSet::generate(5, 1, 512, 4).unwrap();
        let h = encode_level(&[2], &cb).unwrap();
        let proj = decode_scalar(&h, &cb).unwrap()[0];
        let expect = cb.level_row(2).iter().map(|&l| l as f64).sum::<f64>() / 512.0;
        assert!((proj - expect).abs() < 1e-12);
    }

    #[test]
    fn fidelity_closed_forms() {
        let a = vec![10.0, 20.0, 30.0];
        let f = fidelity(&a, &a, 255.0).unwrap();
        assert_eq!(f.mse, 0.0);
        assert_eq!(f.psnr_db, None);
        assert_eq!(f.psnr(), f64::INFINITY);
        let b: Vec<f64> = a.iter().map(|v| v + 1.0).collect();
        let f = fidelity(&a, &b, 255.0).unwrap();
        assert_eq!(f.mse, 1.0);
        assert!((f.psnr_db.unwrap() - 48.13).abs() < 0.01);
        assert!(fidelity(&a, &b[..2], 255.0).is_err());
    }

    #[test]
    fn pgm_layout() {
        let s = to_pgm(&[0.0, 255.0, 300.0, -4.0, 12.4, 7.6], 3, 255).unwrap();
        assert_eq!(s, "P2\n3 2\n255\n0 255 255\n0 12 8\n");
        assert!(to_pgm(&[1.0; 5], 3, 255).is_err());
    }
}
