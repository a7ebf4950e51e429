//! On-disk and on-wire formats.
//!
//! Model file (UTF-8 text, one record per line):
//!
//! ```text
//! privehd-model v1
//! encoding seed=<u64> d_iv=<n> d_hv=<n> levels=<n> variant=<scalar|level> scheme=<name> min=<f64> max=<f64>
//! classes <count>
//! mask <run> <run> ...            # alternating kept/masked run lengths, kept first
//! train_counts <n> <n> ...
//! release none | release epsilon=<f64> delta=<f64> sigma=<f64> delta_f=<f64> noise_seed=<u64>
//! class <index> <v> <v> ...       # one line per class, D_hv decimal integers
//! ```
//!
//! Reals use Rust's shortest round-trip formatting, so a write/read cycle is
//! bit-exact. Class norms are not stored; they are recomputed on load.
//!
//! Obfuscated query record (little-endian):
//!
//! ```text
//! magic    8 bytes  "PRIVEHDQ"
//! version  u8       1
//! d_hv     u32
//! scheme   u8       QuantScheme::code
//! runs     u32 count, then count x u32 mask runs (kept first)
//! dims     i32 for each kept dimension, in index order
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::encoding::{EncodingConfig, FeatureRange};
use crate::error::{Error, Result};
use crate::hv::{Hypervector, Kind};
use crate::model::Model;
use crate::privacy::PrivacyParams;
use crate::quant::{DimensionMask, QuantScheme};

pub const MODEL_MAGIC: &str = "privehd-model";
pub const MODEL_VERSION: u32 = 1;
pub const QUERY_MAGIC: &[u8; 8] = b"PRIVEHDQ";
pub const QUERY_VERSION: u8 = 1;

fn join<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn model_to_string(model: &Model) -> String {
    let c = model.config();
    let mut out = String::new();
    let _ = writeln!(out, "{MODEL_MAGIC} v{MODEL_VERSION}");
    let _ = writeln!(
        out,
        "encoding seed={} d_iv={} d_hv={} levels={} variant={} scheme={} min={} max={}",
        c.seed,
        c.d_iv,
        c.d_hv,
        c.levels,
        c.variant.as_str(),
        c.scheme.name(),
        c.range.min,
        c.range.max
    );
    let _ = writeln!(out, "classes {}", model.num_classes());
    let _ = writeln!(out, "mask {}", join(model.mask().runs()));
    let _ = writeln!(out, "train_counts {}", join(model.train_counts()));
    match model.release() {
        None => out.push_str("release none\n"),
        Some(p) => {
            let _ = writeln!(
                out,
                "release epsilon={} delta={} sigma={} delta_f={} noise_seed={}",
                p.epsilon, p.delta, p.sigma, p.delta_f, p.noise_seed
            );
        }
    }
    for (l, class) in model.classes().iter().enumerate() {
        let _ = writeln!(out, "class {l} {}", join(class.as_slice()));
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next_record(&mut self, key: &str) -> Result<&'a str> {
        for (i, line) in self.inner.by_ref() {
            self.last = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (k, rest) = line.split_once(' ').unwrap_or((line, ""));
            if k != key {
                return Err(Error::Parse { line: i + 1, message: format!("expected `{key}`, found `{k}`") });
            }
            return Ok(rest.trim());
        }
        Err(Error::Parse { line: self.last + 1, message: format!("missing `{key}` record") })
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse { line: self.last, message: message.into() }
    }
}

fn key_values(s: &str) -> HashMap<&str, &str> {
    s.split_whitespace().filter_map(|kv| kv.split_once('=')).collect()
}

fn field<T: std::str::FromStr>(map: &HashMap<&str, &str>, key: &str, lines: &Lines<'_>) -> Result<T> {
    let raw = map.get(key).ok_or_else(|| lines.err(format!("missing field `{key}`")))?;
    raw.parse().map_err(|_| lines.err(format!("bad value `{raw}` for `{key}`")))
}

fn numbers<T: std::str::FromStr>(s: &str, lines: &Lines<'_>) -> Result<Vec<T>> {
    s.split_whitespace().map(|t| t.parse().map_err(|_| lines.err(format!("bad number `{t}`")))).collect()
}

pub fn model_from_str(text: &str) -> Result<Model> {
    let mut lines = Lines { inner: text.lines().enumerate(), last: 0 };
    let version = lines.next_record(MODEL_MAGIC)?;
    if version != format!("v{MODEL_VERSION}") {
        return Err(lines.err(format!("unsupported model version `{version}`")));
    }
    let enc = key_values(lines.next_record("encoding")?);
    let scheme: String = field(&enc, "scheme", &lines)?;
    let variant: String = field(&enc, "variant", &lines)?;
    let config = EncodingConfig {
        seed: field(&enc, "seed", &lines)?,
        d_iv: field(&enc, "d_iv", &lines)?,
        d_hv: field(&enc, "d_hv", &lines)?,
        levels: field(&enc, "levels", &lines)?,
        variant: variant.parse().map_err(|e: Error| lines.err(e.to_string()))?,
        scheme: scheme.parse::<QuantScheme>().map_err(|e| lines.err(e.to_string()))?,
        range: FeatureRange::new(field(&enc, "min", &lines)?, field(&enc, "max", &lines)?),
    };
    let num_classes: usize = lines.next_record("classes")?.parse().map_err(|_| lines.err("bad class count"))?;
    let runs: Vec<usize> = numbers(lines.next_record("mask")?, &lines)?;
    let mask = DimensionMask::from_runs(&runs);
    if mask.len() != config.d_hv {
        return Err(lines.err(format!("mask covers {} dimensions, d_hv is {}", mask.len(), config.d_hv)));
    }
    let counts: Vec<u64> = numbers(lines.next_record("train_counts")?, &lines)?;
    let release_line = lines.next_record("release")?;
    let release = if release_line == "none" {
        None
    } else {
        let kv = key_values(release_line);
        Some(PrivacyParams {
            epsilon: field(&kv, "epsilon", &lines)?,
            delta: field(&kv, "delta", &lines)?,
            sigma: field(&kv, "sigma", &lines)?,
            delta_f: field(&kv, "delta_f", &lines)?,
            noise_seed: field(&kv, "noise_seed", &lines)?,
        })
    };
    let mut classes = Vec::with_capacity(num_classes);
    for l in 0..num_classes {
        let rest = lines.next_record("class")?;
        let (idx, values) = rest.split_once(' ').unwrap_or((rest, ""));
        if idx.parse::<usize>().ok() != Some(l) {
            return Err(lines.err(format!("expected class {l}, found `{idx}`")));
        }
        let dims: Vec<i64> = numbers(values, &lines)?;
        if dims.len() != config.d_hv {
            return Err(lines.err(format!("class {l} has {} values, d_hv is {}", dims.len(), config.d_hv)));
        }
        classes.push(Hypervector::integer(dims));
    }
    if counts.len() != num_classes {
        return Err(lines.err("train_counts length differs from class count"));
    }
    Model::from_parts(config, classes, counts, mask, release)
}

pub fn write_model(model: &Model, path: impl AsRef<std::path::Path>) -> Result<()> {
    std::fs::write(path, model_to_string(model))?;
    Ok(())
}

pub fn read_model(path: impl AsRef<std::path::Path>) -> Result<Model> {
    model_from_str(&std::fs::read_to_string(path)?)
}

/// An obfuscated query as it travels to the host.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryRecord {
    pub scheme: QuantScheme,
    pub mask: DimensionMask,
    pub query: Hypervector,
}

pub fn encode_query(record: &QueryRecord) -> Result<Vec<u8>> {
    let d_hv = record.query.len();
    if record.mask.len() != d_hv {
        return Err(Error::Dimension { expected: d_hv, found: record.mask.len() });
    }
    let runs = record.mask.runs();
    let mut out = Vec::with_capacity(18 + 4 * runs.len() + 4 * record.mask.count_kept());
    out.extend_from_slice(QUERY_MAGIC);
    out.push(QUERY_VERSION);
    out.extend_from_slice(&u32::try_from(d_hv).map_err(|_| Error::Input("d_hv exceeds u32".into()))?.to_le_bytes());
    out.push(record.scheme.code());
    out.extend_from_slice(&(runs.len() as u32).to_le_bytes());
    for r in runs {
        out.extend_from_slice(&(r as u32).to_le_bytes());
    }
    for (j, &v) in record.query.as_slice().iter().enumerate() {
        if record.mask.is_kept(j) {
            let v = i32::try_from(v).map_err(|_| Error::Input(format!("dimension {j} value {v} exceeds i32")))?;
            out.extend_from_slice(&v.to_le_bytes());
        } else if v != 0 {
            return Err(Error::Input(format!("masked dimension {j} is nonzero")));
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Input(format!("query record truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn decode_query(bytes: &[u8]) -> Result<QueryRecord> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != QUERY_MAGIC {
        return Err(Error::Input("not a query record (bad magic)".into()));
    }
    let version = r.take(1)?[0];
    if version != QUERY_VERSION {
        return Err(Error::Input(format!("unsupported query record version {version}")));
    }
    let d_hv = r.u32()? as usize;
    let scheme = QuantScheme::from_code(r.take(1)?[0])?;
    let n_runs = r.u32()? as usize;
    if n_runs > bytes.len() / 4 {
        return Err(Error::Input("run count exceeds record size".into()));
    }
    let runs = (0..n_runs).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    let mask = DimensionMask::from_runs(&runs);
    if mask.len() != d_hv {
        return Err(Error::Input(format!("mask covers {} dimensions, header says {d_hv}", mask.len())));
    }
    let mut dims = vec![0i64; d_hv];
    for (j, d) in dims.iter_mut().enumerate() {
        if mask.is_kept(j) {
            *d = i32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes")) as i64;
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Input(format!("{} trailing bytes after query record", bytes.len() - r.pos)));
    }
    let query = match scheme.alphabet() {
        Some(a) if mask.is_full() => Hypervector::new(dims, Kind::Quantized(a))?,
        _ => Hypervector::integer(dims),
    };
    Ok(QueryRecord { scheme, mask, query })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::EncodingVariant;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn config(d_hv: usize) -> EncodingConfig {
        EncodingConfig {
            seed: u64::MAX - 3,
            d_iv: 7,
            d_hv,
            levels: 16,
            variant: EncodingVariant::Level,
            scheme: QuantScheme::empirical(crate::quant::SchemeTag::TernaryBiased),
            range: FeatureRange::new(-0.1, 1.0 / 3.0),
        }
    }

    fn sample_model(seed: u64) -> Model {
        let mut rng = rng_from_seed(seed);
        let hvs: Vec<Hypervector> =
            (0..9).map(|_| Hypervector::integer((0..40).map(|_| rng.random_range(-1000..1000)).collect())).collect();
        let mut m = Model::train(config(40), 3, hvs.iter().enumerate().map(|(i, h)| (h, i % 3))).unwrap();
        m.prune(30.0).unwrap();
        m
    }

    #[test]
    fn model_round_trip_with_release() {
        let mut m = sample_model(1);
        let text = model_to_string(&m);
        assert_eq!(model_from_str(&text).unwrap(), m);
        crate::privacy::dp_release(
            &mut m,
            PrivacyParams { epsilon: 0.1 + 0.2, delta: 1e-5, sigma: 47.52, delta_f: 2.0f64.sqrt(), noise_seed: 5 },
        )
        .unwrap();
        let text = model_to_string(&m);
        let back = model_from_str(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(model_to_string(&back), text);
    }

    #[test]
    fn model_parse_errors() {
        let text = model_to_string(&sample_model(2));
        assert!(model_from_str(&text.replace("v1", "v9")).is_err());
        let truncated: String = text.lines().take(7).map(|l| format!("{l}\n")).collect();
        assert!(matches!(model_from_str(&truncated), Err(Error::Parse { .. })));
        assert!(model_from_str(&text.replacen("class 1 ", "class 2 ", 1)).is_err());
    }

    #[test]
    fn query_record_layout() {
        let mask = DimensionMask::from_kept(vec![true, false, true]);
        let rec = QueryRecord {
            scheme: QuantScheme::BINARY,
            mask,
            query: Hypervector::integer(vec![-1, 0, 1]),
        };
        let bytes = encode_query(&rec).unwrap();
        let mut want = b"PRIVEHDQ".to_vec();
        want.push(1);
        want.extend_from_slice(&3u32.to_le_bytes());
        want.push(1);
        want.extend_from_slice(&3u32.to_le_bytes());
        for r in [1u32, 1, 1] {
            want.extend_from_slice(&r.to_le_bytes());
        }
        want.extend_from_slice(&(-1i32).to_le_bytes());
        want.extend_from_slice(&1i32.to_le_bytes());
        assert_eq!(bytes, want);
        assert_eq!(decode_query(&bytes).unwrap(), rec);
        assert!(decode_query(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_query(&bad).is_err());
    }

    proptest! {
        #[test]
        fn query_round_trip(kept in proptest::collection::vec(any::<bool>(), 1..200), seed in any::<u64>()) {
            let mut rng = rng_from_seed(seed);
            let mask = DimensionMask::from_kept(kept.clone());
            let dims: Vec<i64> = kept.iter().map(|&k| if k { rng.random_range(-2..=1) } else { 0 }).collect();
            let rec = QueryRecord { scheme: QuantScheme::TWO_BIT, mask, query: Hypervector::integer(dims) };
            let back = decode_query(&encode_query(&rec).unwrap()).unwrap();
            prop_assert_eq!(back.query.as_slice(), rec.query.as_slice());
            prop_assert_eq!(back.mask, rec.mask);
            prop_assert_eq!(back.scheme, rec.scheme);
        }

        #[test]
        fn model_text_round_trip(seed in any::<u64>()) {
            let m = sample_model(seed);
            prop_assert_eq!(model_from_str(&model_to_string(&m)).unwrap(), m);
        }
    }
}
