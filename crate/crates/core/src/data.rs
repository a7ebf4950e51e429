//! Datasets: CSV loading and writing, synthetic generators, stratified splits.
//!
//! CSV layout: one sample per row, `D_iv` numeric columns followed by an
//! integer label. An optional first line
//! `# privehd-csv v1 d_iv=<n> classes=<m> min=<x> max=<y>` pins the shape and
//! the feature range; without it both are inferred. Other `#` lines and blank
//! lines are skipped.

use std::fmt::Write as _;
use std::path::Path;

use rand::RngCore;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;

use crate::encoding::{Encoder, FeatureRange};
use crate::error::{Error, Result};
use crate::model::Labeled;
use crate::rng::{derive_seed, rng_from_seed, HdRng};

pub type FeatureVector = Vec<f64>;

pub const CSV_MAGIC: &str = "# privehd-csv v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<FeatureVector>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub range: FeatureRange,
    pub name: String,
    /// Seed of the split that produced this subset, if any.
    pub split_seed: Option<u64>,
}

impl Dataset {
    pub fn new(samples: Vec<FeatureVector>, labels: Vec<usize>, num_classes: usize, range: FeatureRange, name: impl Into<String>) -> Result<Self> {
        if samples.len() != labels.len() {
            return Err(Error::Input(format!("{} samples but {} labels", samples.len(), labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Input(format!("label {bad} out of range 0..{num_classes}")));
        }
        if let Some(first) = samples.first() {
            if let Some(i) = samples.iter().position(|s| s.len() != first.len()) {
                return Err(Error::Input(format!("sample {i} has {} features, expected {}", samples[i].len(), first.len())));
            }
        }
        let out_of_range = samples.iter().flatten().any(|&v| v < range.min || v > range.max);
        if out_of_range {
            return Err(Error::Input("feature value outside the declared range".into()));
        }
        Ok(Self { samples, labels, num_classes, range, name: name.into(), split_seed: None })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn d_iv(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            range: self.range,
            name: self.name.clone(),
            split_seed: self.split_seed,
        }
    }

    /// Encodes every sample (with the encoder's quantization), keeping order.
    pub fn encode(&self, encoder: &Encoder) -> Result<Vec<Labeled>> {
        let hvs = encoder.encode_batch(&self.samples)?;
        Ok(hvs.into_iter().zip(self.labels.iter().copied()).collect())
    }

    /// Full-precision encodings, ignoring the encoder's scheme.
    pub fn encode_raw(&self, encoder: &Encoder) -> Result<Vec<Labeled>> {
        self.samples
            .par_iter()
            .zip(self.labels.par_iter())
            .map(|(s, &l)| Ok((encoder.encode_raw(s)?, l)))
            .collect()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{CSV_MAGIC} d_iv={} classes={} min={} max={}",
            self.d_iv(),
            self.num_classes,
            self.range.min,
            self.range.max
        );
        for (s, l) in self.samples.iter().zip(&self.labels) {
            for v in s {
                let _ = write!(out, "{v},");
            }
            let _ = writeln!(out, "{l}");
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}

struct CsvHeader {
    d_iv: Option<usize>,
    classes: Option<usize>,
    min: Option<f64>,
    max: Option<f64>,
}

fn parse_header(line: &str, line_no: usize) -> Result<CsvHeader> {
    let perr = |message: String| Error::Parse { line: line_no, message };
    let rest = line.strip_prefix(CSV_MAGIC).ok_or_else(|| perr("bad header".into()))?;
    let mut h = CsvHeader { d_iv: None, classes: None, min: None, max: None };
    for field in rest.split_whitespace() {
        let (k, v) = field.split_once('=').ok_or_else(|| perr(format!("header field `{field}` is not key=value")))?;
        match k {
            "d_iv" => h.d_iv = Some(v.parse().map_err(|_| perr(format!("bad d_iv `{v}`")))?),
            "classes" => h.classes = Some(v.parse().map_err(|_| perr(format!("bad classes `{v}`")))?),
            "min" => h.min = Some(v.parse().map_err(|_| perr(format!("bad min `{v}`")))?),
            "max" => h.max = Some(v.parse().map_err(|_| perr(format!("bad max `{v}`")))?),
            other => return Err(perr(format!("unknown header field `{other}`"))),
        }
    }
    Ok(h)
}

pub fn parse_csv(text: &str, name: &str) -> Result<Dataset> {
    let mut header = None;
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.starts_with(CSV_MAGIC) && samples.is_empty() && header.is_none() {
            header = Some(parse_header(line, line_no)?);
            continue;
        }
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let perr = |message: String| Error::Parse { line: line_no, message };
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() < 2 {
            return Err(perr("need at least one feature column and a label column".into()));
        }
        match width {
            None => width = Some(cells.len()),
            Some(w) if w != cells.len() => return Err(perr(format!("ragged row: {} columns, expected {w}", cells.len()))),
            _ => {}
        }
        let (label_cell, feature_cells) = cells.split_last().expect("checked length");
        let features = feature_cells
            .iter()
            .map(|c| c.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| perr(format!("non-numeric cell `{c}`"))))
            .collect::<Result<Vec<f64>>>()?;
        let label = label_cell.parse::<usize>().map_err(|_| perr(format!("label `{label_cell}` is not a class index")))?;
        samples.push(features);
        labels.push(label);
    }
    if samples.is_empty() {
        return Err(Error::Parse { line: 1, message: "no samples".into() });
    }
    let d_iv = samples[0].len();
    let header = header.unwrap_or(CsvHeader { d_iv: None, classes: None, min: None, max: None });
    if let Some(d) = header.d_iv {
        if d != d_iv {
            return Err(Error::Parse { line: 1, message: format!("header says d_iv={d}, rows have {d_iv}") });
        }
    }
    let observed_max = labels.iter().max().copied().unwrap_or(0) + 1;
    let num_classes = header.classes.unwrap_or(observed_max);
    let lo = samples.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = FeatureRange::new(header.min.unwrap_or(lo), header.max.unwrap_or(hi));
    Dataset::new(samples, labels, num_classes, range, name).map_err(|e| Error::Parse { line: 1, message: e.to_string() })
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    parse_csv(&text, name)
}

/// Gaussian clusters in the unit cube.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub d_iv: usize,
    pub samples_per_class: usize,
    pub cluster_std: f64,
    pub seed: u64,
}

fn uniform01(rng: &mut HdRng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Class `c` has a mean drawn uniformly from `[0, 1]^D_iv`; samples are the
/// mean plus `N(0, std^2)` per feature, clipped to `[0, 1]`. Samples are
/// emitted class by class.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.num_classes < 2 || spec.d_iv == 0 || spec.samples_per_class == 0 || spec.cluster_std.is_nan() || spec.cluster_std < 0.0 {
        return Err(Error::Config(format!("invalid synthetic spec {spec:?}")));
    }
    let mut mean_rng = rng_from_seed(derive_seed(spec.seed, 0));
    let means: Vec<Vec<f64>> =
        (0..spec.num_classes).map(|_| (0..spec.d_iv).map(|_| uniform01(&mut mean_rng)).collect()).collect();
    let mut rng = rng_from_seed(derive_seed(spec.seed, 1));
    let mut samples = Vec::with_capacity(spec.num_classes * spec.samples_per_class);
    let mut labels = Vec::with_capacity(samples.capacity());
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..spec.samples_per_class {
            let s = mean
                .iter()
                .map(|&m| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (m + spec.cluster_std * z).clamp(0.0, 1.0)
                })
                .collect();
            samples.push(s);
            labels.push(c);
        }
    }
    Dataset::new(samples, labels, spec.num_classes, FeatureRange::new(0.0, 1.0), "synthetic")
}

/// Grayscale `side x side` images with values in `[0, 255]`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ImageSpec {
    pub num_classes: usize,
    pub side: usize,
    pub samples_per_class: usize,
    pub seed: u64,
}

/// Each class is a few Gaussian blobs at class-specific positions; samples
/// jitter blob centers and add pixel noise. Pixels are whole numbers.
pub fn gen_image_like(spec: &ImageSpec) -> Result<Dataset> {
    if spec.num_classes < 2 || spec.side < 2 || spec.samples_per_class == 0 {
        return Err(Error::Config(format!("invalid image spec {spec:?}")));
    }
    let side = spec.side as f64;
    let mut proto_rng = rng_from_seed(derive_seed(spec.seed, 0));
    let protos: Vec<Vec<(f64, f64, f64, f64)>> = (0..spec.num_classes)
        .map(|_| {
            (0..3)
                .map(|_| {
                    let x = 0.15 * side + 0.7 * side * uniform01(&mut proto_rng);
                    let y = 0.15 * side + 0.7 * side * uniform01(&mut proto_rng);
                    let radius = side * (0.08 + 0.12 * uniform01(&mut proto_rng));
                    let amp = 140.0 + 115.0 * uniform01(&mut proto_rng);
                    (x, y, radius, amp)
                })
                .collect()
        })
        .collect();
    let jitter = Normal::new(0.0, side * 0.04).map_err(|e| Error::Config(e.to_string()))?;
    let pixel_noise = Normal::new(0.0, 8.0).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = rng_from_seed(derive_seed(spec.seed, 1));
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for (c, blobs) in protos.iter().enumerate() {
        for _ in 0..spec.samples_per_class {
            let moved: Vec<_> = blobs
                .iter()
                .map(|&(x, y, r, a)| (x + jitter.sample(&mut rng), y + jitter.sample(&mut rng), r, a))
                .collect();
            let mut img = Vec::with_capacity(spec.side * spec.side);
            for py in 0..spec.side {
                for px in 0..spec.side {
                    let mut v = 0.0;
                    for &(x, y, r, a) in &moved {
                        let d2 = (px as f64 - x).powi(2) + (py as f64 - y).powi(2);
                        v += a * (-d2 / (2.0 * r * r)).exp();
                    }
                    v += pixel_noise.sample(&mut rng);
                    img.push(v.round().clamp(0.0, 255.0));
                }
            }
            samples.push(img);
            labels.push(c);
        }
    }
    Dataset::new(samples, labels, spec.num_classes, FeatureRange::new(0.0, 255.0), "image_like")
}

/// Stratified split: a seeded permutation of all rows is walked in order and
/// each row goes to train until its class has `round(fraction * n_c)` rows
/// there (at least one row per class on each side). Both halves keep the
/// permutation order.
pub fn split(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    let counts = dataset.class_counts();
    if let Some(c) = counts.iter().position(|&n| n > 0 && n < 2) {
        return Err(Error::Input(format!("class {c} has fewer than 2 samples; cannot stratify")));
    }
    let quota: Vec<usize> =
        counts.iter().map(|&n| if n == 0 { 0 } else { ((train_fraction * n as f64).round() as usize).clamp(1, n - 1) }).collect();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = rng_from_seed(seed);
    for i in (1..order.len()).rev() {
        let j = ((rng.next_u64() as u128 * (i as u128 + 1)) >> 64) as usize;
        order.swap(i, j);
    }
    let mut taken = vec![0usize; dataset.num_classes];
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for i in order {
        let l = dataset.labels[i];
        if taken[l] < quota[l] {
            taken[l] += 1;
            train.push(i);
        } else {
            test.push(i);
        }
    }
    let mut a = dataset.subset(&train);
    let mut b = dataset.subset(&test);
    a.split_seed = Some(seed);
    b.split_seed = Some(seed);
    Ok((a, b))
}

/// Accuracy of a nearest-centroid (Euclidean) classifier in feature space.
/// Used as an independent reference for the hypervector model.
pub fn nearest_centroid_accuracy(train: &Dataset, test: &Dataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Input("empty test set".into()));
    }
    let d = train.d_iv();
    let mut sums = vec![vec![0.0; d]; train.num_classes];
    let counts = train.class_counts();
    for (s, &l) in train.samples.iter().zip(&train.labels) {
        for (a, v) in sums[l].iter_mut().zip(s) {
            *a += v;
        }
    }
    let centroids: Vec<Option<Vec<f64>>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &n)| (n > 0).then(|| s.into_iter().map(|v| v / n as f64).collect()))
        .collect();
    let correct = test
        .samples
        .iter()
        .zip(&test.labels)
        .filter(|(s, &l)| {
            let mut best = (f64::INFINITY, usize::MAX);
            for (c, cent) in centroids.iter().enumerate() {
                if let Some(cent) = cent {
                    let d2: f64 = cent.iter().zip(s.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                    if d2 < best.0 {
                        best = (d2, c);
                    }
                }
            }
            best.1 == l
        })
        .count();
    Ok(correct as f64 / test.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SyntheticSpec {
        SyntheticSpec { num_classes: 2, d_iv: 64, samples_per_class: 200, cluster_std: 0.05, seed: 1 }
    }

    #[test]
    fn tiny_csv() {
        let ds = parse_csv("0.1,0.2,0\n0.3,0.4,1", "t").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.num_classes, 2);
        assert_eq!(ds.d_iv(), 2);
        assert_eq!(ds.range, FeatureRange::new(0.1, 0.4));
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        assert!(matches!(parse_csv("", "t"), Err(Error::Parse { .. })));
        assert!(matches!(parse_csv("0\n1\n", "t"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_csv("1,2,0\n1,2\n", "t"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_csv("1,2,0\n1,x,1\n", "t"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_csv("1,2,0\n1,2,-1\n", "t"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn header_pins_range_and_classes() {
        let text = "# privehd-csv v1 d_iv=2 classes=5 min=0 max=10\n1,2,0\n3,4,1\n";
        let ds = parse_csv(text, "t").unwrap();
        assert_eq!(ds.num_classes, 5);
        assert_eq!(ds.range, FeatureRange::new(0.0, 10.0));
        assert!(parse_csv("# privehd-csv v1 d_iv=3\n1,2,0\n", "t").is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let ds = gen_synthetic(&spec()).unwrap();
        let back = parse_csv(&ds.to_csv_string(), "synthetic").unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn zero_std_gives_means() {
        let ds = gen_synthetic(&SyntheticSpec { cluster_std: 0.0, ..spec() }).unwrap();
        for c in 0..2 {
            let rows: Vec<_> = ds.samples.iter().zip(&ds.labels).filter(|(_, &l)| l == c).map(|(s, _)| s).collect();
            assert!(rows.windows(2).all(|w| w[0] == w[1]));
        }
    }

    #[test]
    fn synthetic_is_deterministic_and_separable() {
        let ds = gen_synthetic(&spec()).unwrap();
        assert_eq!(ds, gen_synthetic(&spec()).unwrap());
        let (train, test) = split(&ds, 0.7, 3).unwrap();
        assert!(nearest_centroid_accuracy(&train, &test).unwrap() > 0.99);
    }

    #[test]
    fn split_union_disjoint_deterministic_stratified() {
        let ds = gen_synthetic(&SyntheticSpec { num_classes: 3, samples_per_class: 17, ..spec() }).unwrap();
        let (a, b) = split(&ds, 0.6, 9).unwrap();
        let (a2, b2) = split(&ds, 0.6, 9).unwrap();
        assert_eq!((&a, &b), (&a2, &b2));
        assert_eq!(a.len() + b.len(), ds.len());
        let mut all: Vec<_> = a.samples.iter().chain(&b.samples).map(|s| format!("{s:?}")).collect();
        let mut orig: Vec<_> = ds.samples.iter().map(|s| format!("{s:?}")).collect();
        all.sort();
        orig.sort();
        assert_eq!(all, orig);
        assert_eq!(a.class_counts(), vec![10, 10, 10]);
        let (c, _) = split(&ds, 0.6, 10).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn split_rejects_singleton_class() {
        let ds = parse_csv("0.1,0\n0.2,1\n0.3,1\n", "t").unwrap();
        assert!(matches!(split(&ds, 0.5, 1), Err(Error::Input(_))));
        assert!(split(&ds, 1.0, 1).is_err());
    }

    #[test]
    fn image_like_is_integral_and_bounded() {
        let ds = gen_image_like(&ImageSpec { num_classes: 2, side: 8, samples_per_class: 3, seed: 4 }).unwrap();
        assert_eq!(ds.d_iv(), 64);
        assert!(ds.samples.iter().flatten().all(|&v| v.fract() == 0.0 && (0.0..=255.0).contains(&v)));
        let max = ds.samples.iter().flatten().cloned().fold(0.0, f64::max);
        assert!(max > 100.0);
    }
}
