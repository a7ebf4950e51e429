//! Class-hypervector model: bundling, similarity search, retraining, pruning.

use rayon::prelude::*;
use serde::Serialize;

use crate::encoding::EncodingConfig;
use crate::error::{check_len, Error, Result};
use crate::hv::{dot_slices, Hypervector};
use crate::privacy::PrivacyParams;
use crate::quant::DimensionMask;

/// An encoded sample and its class.
pub type Labeled = (Hypervector, usize);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub label: usize,
    /// `dot(query, class) / |class|`; `-inf` for classes that were never trained.
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: EncodingConfig,
    classes: Vec<Hypervector>,
    class_norms: Vec<f64>,
    train_counts: Vec<u64>,
    mask: DimensionMask,
    release: Option<PrivacyParams>,
}

impl Model {
    /// An untrained model with `num_classes` zero class vectors.
    pub fn empty(config: EncodingConfig, num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Config(format!("a model needs at least 2 classes, got {num_classes}")));
        }
        let d_hv = config.d_hv;
        Ok(Self {
            config,
            classes: vec![Hypervector::zeros(d_hv); num_classes],
            class_norms: vec![0.0; num_classes],
            train_counts: vec![0; num_classes],
            mask: DimensionMask::full(d_hv),
            release: None,
        })
    }

    /// Rebuilds a model from stored parts, recomputing norms and checking
    /// every structural invariant.
    pub fn from_parts(
        config: EncodingConfig,
        classes: Vec<Hypervector>,
        train_counts: Vec<u64>,
        mask: DimensionMask,
        release: Option<PrivacyParams>,
    ) -> Result<Self> {
        if classes.len() < 2 {
            return Err(Error::Config(format!("a model needs at least 2 classes, got {}", classes.len())));
        }
        check_len(classes.len(), train_counts.len())?;
        check_len(config.d_hv, mask.len())?;
        for c in &classes {
            check_len(config.d_hv, c.len())?;
            if c.as_slice().iter().zip(mask.kept()).any(|(&v, &k)| !k && v != 0) {
                return Err(Error::Input("class vector is nonzero at a masked dimension".into()));
            }
        }
        let classes: Vec<Hypervector> = classes.into_iter().map(|c| Hypervector::integer(c.into_vec())).collect();
        let class_norms = classes.iter().map(Hypervector::l2_norm).collect();
        Ok(Self { config, classes, class_norms, train_counts, mask, release })
    }

    /// Bundles every encoding into its class. Order of the stream does not matter.
    pub fn train<'a, I>(config: EncodingConfig, num_classes: usize, encoded: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a Hypervector, usize)>,
    {
        let mut model = Self::empty(config, num_classes)?;
        for (h, label) in encoded {
            model.bundle(h, label)?;
        }
        model.refresh_all_norms();
        Ok(model)
    }

    fn bundle(&mut self, h: &Hypervector, label: usize) -> Result<()> {
        if label >= self.classes.len() {
            return Err(Error::Input(format!("label {label} out of range 0..{}", self.classes.len())));
        }
        check_len(self.d_hv(), h.len())?;
        let class = self.classes[label].dims_mut();
        for ((c, &v), &k) in class.iter_mut().zip(h.as_slice()).zip(self.mask.kept()) {
            if k {
                *c += v;
            }
        }
        self.train_counts[label] += 1;
        Ok(())
    }

    /// Adds another partial model trained on a disjoint partition.
    pub fn merge(&mut self, other: &Model) -> Result<()> {
        if self.config != other.config || self.num_classes() != other.num_classes() || self.mask != other.mask {
            return Err(Error::Config("cannot merge models with different configurations".into()));
        }
        for (a, b) in self.classes.iter_mut().zip(&other.classes) {
            a.accumulate(b, 1)?;
        }
        for (a, b) in self.train_counts.iter_mut().zip(&other.train_counts) {
            *a += b;
        }
        self.refresh_all_norms();
        Ok(())
    }

    fn refresh_norm(&mut self, l: usize) {
        self.class_norms[l] = self.classes[l].l2_norm();
    }

    pub(crate) fn refresh_all_norms(&mut self) {
        for l in 0..self.classes.len() {
            self.refresh_norm(l);
        }
    }

    pub fn config(&self) -> &EncodingConfig {
        &self.config
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn d_hv(&self) -> usize {
        self.config.d_hv
    }

    pub fn classes(&self) -> &[Hypervector] {
        &self.classes
    }

    pub fn class_norms(&self) -> &[f64] {
        &self.class_norms
    }

    pub fn train_counts(&self) -> &[u64] {
        &self.train_counts
    }

    pub fn mask(&self) -> &DimensionMask {
        &self.mask
    }

    pub fn release(&self) -> Option<&PrivacyParams> {
        self.release.as_ref()
    }

    pub fn is_private(&self) -> bool {
        self.release.is_some()
    }

    pub(crate) fn classes_mut(&mut self) -> &mut [Hypervector] {
        &mut self.classes
    }

    pub(crate) fn set_release(&mut self, params: PrivacyParams) {
        self.release = Some(params);
    }

    /// A class with no training samples (or an all-zero vector) cannot be scored.
    pub fn is_degenerate(&self, l: usize) -> bool {
        self.train_counts[l] == 0 || self.class_norms[l] == 0.0
    }

    pub fn scores(&self, query: &Hypervector) -> Result<Vec<f64>> {
        check_len(self.d_hv(), query.len())?;
        (0..self.classes.len())
            .map(|l| {
                if self.is_degenerate(l) {
                    Ok(f64::NEG_INFINITY)
                } else {
                    Ok(dot_slices(query.as_slice(), self.classes[l].as_slice())? as f64 / self.class_norms[l])
                }
            })
            .collect()
    }

    /// Highest normalized dot product; ties go to the lowest class index.
    pub fn predict(&self, query: &Hypervector) -> Result<Prediction> {
        let scores = self.scores(query)?;
        let mut label = None;
        for (l, &s) in scores.iter().enumerate() {
            if self.is_degenerate(l) {
                continue;
            }
            match label {
                Some(best) if scores[best] >= s => {}
                _ => label = Some(l),
            }
        }
        let label = label.ok_or_else(|| Error::Contract("every class is degenerate".into()))?;
        Ok(Prediction { label, scores })
    }

    pub fn predict_batch(&self, queries: &[Hypervector]) -> Result<Vec<usize>> {
        queries.par_iter().map(|q| self.predict(q).map(|p| p.label)).collect()
    }

    /// Fraction of `samples` predicted correctly.
    pub fn accuracy(&self, samples: &[Labeled]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::Input("accuracy over an empty set".into()));
        }
        let correct: usize = samples
            .par_iter()
            .map(|(h, l)| self.predict(h).map(|p| usize::from(p.label == *l)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .sum();
        Ok(correct as f64 / samples.len() as f64)
    }

    /// One online pass: every mispredicted sample is added to its true class
    /// and subtracted from the predicted one, in dataset order. Returns the
    /// number of mispredictions met.
    pub fn retrain_epoch(&mut self, samples: &[Labeled]) -> Result<usize> {
        if self.is_private() {
            return Err(Error::Contract("a released private model must not be retrained".into()));
        }
        if let Some(l) = (0..self.num_classes()).find(|&l| self.is_degenerate(l)) {
            return Err(Error::Contract(format!("class {l} is degenerate; retraining needs every class")));
        }
        let mut misses = 0;
        for (h, label) in samples {
            if *label >= self.num_classes() {
                return Err(Error::Input(format!("label {label} out of range")));
            }
            let predicted = self.predict(h)?.label;
            if predicted == *label {
                continue;
            }
            misses += 1;
            let masked = self.mask.apply(h)?;
            self.classes[*label].accumulate(&masked, 1)?;
            self.classes[predicted].accumulate(&masked, -1)?;
            self.refresh_norm(*label);
            self.refresh_norm(predicted);
        }
        Ok(misses)
    }

    /// Zeroes the `ceil(s% * D_hv)` dimensions with the smallest summed
    /// magnitude across classes. One mask is shared by every class and
    /// composes with any earlier mask.
    pub fn prune(&mut self, s_percent: f64) -> Result<DimensionMask> {
        if !(0.0..100.0).contains(&s_percent) {
            return Err(Error::Config(format!("prune percentage {s_percent} outside [0, 100)")));
        }
        let d = self.d_hv();
        let n_mask = (s_percent / 100.0 * d as f64).ceil() as usize;
        if n_mask >= d {
            return Err(Error::Config(format!("pruning {s_percent}% would remove all {d} dimensions")));
        }
        let magnitude: Vec<i64> =
            (0..d).map(|j| self.classes.iter().map(|c| c.as_slice()[j].abs()).sum()).collect();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by_key(|&j| (magnitude[j], j));
        let mut kept = vec![true; d];
        for &j in &order[..n_mask] {
            kept[j] = false;
        }
        self.mask = self.mask.intersect(&DimensionMask::from_kept(kept))?;
        for c in &mut self.classes {
            *c = self.mask.apply(c)?;
        }
        self.refresh_all_norms();
        Ok(self.mask.clone())
    }

    /// Share of the full `dot(query, class)` recovered as class dimensions are
    /// restored from the smallest |value| upward. Point `k` holds the share
    /// after restoring `k` dimensions; the last point is exactly 1.
    pub fn effectual_curve(&self, query: &Hypervector, class: usize) -> Result<Vec<(usize, f64)>> {
        if class >= self.num_classes() {
            return Err(Error::Input(format!("class {class} out of range")));
        }
        check_len(self.d_hv(), query.len())?;
        let c = self.classes[class].as_slice();
        let q = query.as_slice();
        let full = dot_slices(q, c)?;
        if full == 0 {
            return Err(Error::UndefinedSimilarity("query is orthogonal to the class".into()));
        }
        let mut order: Vec<usize> = (0..c.len()).collect();
        order.sort_by_key(|&j| (c[j].abs(), j));
        let mut curve = Vec::with_capacity(c.len() + 1);
        curve.push((0, 0.0));
        let mut partial = 0i64;
        for (k, &j) in order.iter().enumerate() {
            partial += q[j] * c[j];
            curve.push((k + 1, partial as f64 / full as f64));
        }
        Ok(curve)
    }
}
