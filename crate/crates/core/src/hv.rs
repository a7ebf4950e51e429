//! Dense integer hypervectors and the similarity algebra.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Symbol set of a quantized hypervector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alphabet {
    /// {-1, +1}
    Binary,
    /// {-1, 0, +1}
    Ternary,
    /// {-2, -1, 0, +1}
    TwoBit,
}

impl Alphabet {
    pub fn symbols(self) -> &'static [i64] {
        match self {
            Alphabet::Binary => &[-1, 1],
            Alphabet::Ternary => &[-1, 0, 1],
            Alphabet::TwoBit => &[-2, -1, 0, 1],
        }
    }

    pub fn contains(self, value: i64) -> bool {
        self.symbols().contains(&value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Bipolar,
    Integer,
    Quantized(Alphabet),
}

/// A dense hypervector of signed 64-bit elements.
///
/// The `kind` tag records which alphabet the elements are drawn from; the
/// checked constructor [`Hypervector::new`] enforces it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hypervector {
    dims: Vec<i64>,
    kind: Kind,
}

impl Hypervector {
    pub fn new(dims: Vec<i64>, kind: Kind) -> Result<Self> {
        let ok = match kind {
            Kind::Integer => true,
            Kind::Bipolar => dims.iter().all(|&v| v == 1 || v == -1),
            Kind::Quantized(a) => dims.iter().all(|&v| a.contains(v)),
        };
        if !ok {
            return Err(Error::Input(format!("elements outside the {kind:?} alphabet")));
        }
        Ok(Self { dims, kind })
    }

    pub fn integer(dims: Vec<i64>) -> Self {
        Self { dims, kind: Kind::Integer }
    }

    pub fn zeros(len: usize) -> Self {
        Self::integer(vec![0; len])
    }

    pub(crate) fn from_parts_unchecked(dims: Vec<i64>, kind: Kind) -> Self {
        debug_assert!(Self::new(dims.clone(), kind).is_ok());
        Self { dims, kind }
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn as_slice(&self) -> &[i64] {
        &self.dims
    }

    pub fn into_vec(self) -> Vec<i64> {
        self.dims
    }

    /// Elementwise negation. Keeps the kind when the alphabet is symmetric.
    pub fn negated(&self) -> Self {
        let kind = match self.kind {
            Kind::Bipolar | Kind::Integer => self.kind,
            Kind::Quantized(Alphabet::Binary) | Kind::Quantized(Alphabet::Ternary) => self.kind,
            Kind::Quantized(Alphabet::TwoBit) => Kind::Integer,
        };
        Self { dims: self.dims.iter().map(|v| -v).collect(), kind }
    }

    pub fn scaled(&self, factor: i64) -> Self {
        Self::integer(self.dims.iter().map(|v| v * factor).collect())
    }

    /// In-place `self += sign * other`, checked for length.
    pub fn accumulate(&mut self, other: &Hypervector, sign: i64) -> Result<()> {
        check_len(self.len(), other.len())?;
        for (a, b) in self.dims.iter_mut().zip(&other.dims) {
            *a += sign * b;
        }
        self.kind = Kind::Integer;
        Ok(())
    }

    pub(crate) fn dims_mut(&mut self) -> &mut [i64] {
        self.kind = Kind::Integer;
        &mut self.dims
    }

    pub fn l1_norm(&self) -> i64 {
        self.dims.iter().map(|v| v.abs()).sum()
    }

    pub fn squared_norm(&self) -> i64 {
        self.dims.iter().map(|v| v * v).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        (self.squared_norm() as f64).sqrt()
    }

    pub fn hamming(&self, other: &Hypervector) -> Result<usize> {
        check_len(self.len(), other.len())?;
        Ok(self.dims.iter().zip(&other.dims).filter(|(a, b)| a != b).count())
    }
}

/// Exact inner product with 64-bit accumulation.
pub fn dot(a: &Hypervector, b: &Hypervector) -> Result<i64> {
    dot_slices(a.as_slice(), b.as_slice())
}

pub fn dot_slices(a: &[i64], b: &[i64]) -> Result<i64> {
    check_len(a.len(), b.len())?;
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum())
}

/// Cosine similarity; zero-norm operands are rejected.
pub fn cosine(a: &Hypervector, b: &Hypervector) -> Result<f64> {
    let d = dot(a, b)?;
    let (na, nb) = (a.squared_norm(), b.squared_norm());
    if na == 0 || nb == 0 {
        return Err(Error::UndefinedSimilarity("zero-norm operand".into()));
    }
    let c = d as f64 / (na as f64 * nb as f64).sqrt();
    Ok(c.clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bipolar(v: &[i64]) -> Hypervector {
        Hypervector::new(v.to_vec(), Kind::Bipolar).unwrap()
    }

    #[test]
    fn self_and_antipodal_dot() {
        let x = bipolar(&[1, -1, 1, 1, -1, -1, 1, -1]);
        assert_eq!(dot(&x, &x).unwrap(), 8);
        assert_eq!(dot(&x, &x.negated()).unwrap(), -8);
    }

    #[test]
    fn cosine_identities() {
        let x = bipolar(&[1, -1, 1, 1, -1, -1, 1, -1]);
        assert_eq!(cosine(&x, &x).unwrap(), 1.0);
        assert_eq!(cosine(&x, &x.negated()).unwrap(), -1.0);
        assert!((cosine(&x.scaled(3), &x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_and_zero_norm() {
        let a = Hypervector::integer(vec![1, 2, 3]);
        let b = Hypervector::integer(vec![1, 2]);
        assert!(matches!(dot(&a, &b), Err(Error::Dimension { expected: 3, found: 2 })));
        let z = Hypervector::zeros(3);
        assert!(matches!(cosine(&a, &z), Err(Error::UndefinedSimilarity(_))));
    }

    #[test]
    fn kind_is_enforced() {
        assert!(Hypervector::new(vec![1, 0], Kind::Bipolar).is_err());
        assert!(Hypervector::new(vec![-2, 1, 0], Kind::Quantized(Alphabet::TwoBit)).is_ok());
        assert!(Hypervector::new(vec![2], Kind::Quantized(Alphabet::TwoBit)).is_err());
    }

    proptest! {
        #[test]
        fn dot_symmetric_and_bilinear(
            pair in (1usize..64).prop_flat_map(|n| (
                proptest::collection::vec(-1000i64..1000, n),
                proptest::collection::vec(-1000i64..1000, n),
            )),
            k in -50i64..50,
        ) {
            let a = Hypervector::integer(pair.0);
            let b = Hypervector::integer(pair.1);
            prop_assert_eq!(dot(&a, &b).unwrap(), dot(&b, &a).unwrap());
            prop_assert_eq!(dot(&a.scaled(k), &b).unwrap(), k * dot(&a, &b).unwrap());
        }

        #[test]
        fn bipolar_cosine_matches_hamming(bits in proptest::collection::vec(any::<(bool, bool)>(), 1..256)) {
            let a = bipolar(&bits.iter().map(|p| if p.0 { 1 } else { -1 }).collect::<Vec<_>>());
            let b = bipolar(&bits.iter().map(|p| if p.1 { 1 } else { -1 }).collect::<Vec<_>>());
            let n = a.len() as f64;
            let expected = 1.0 - 2.0 * a.hamming(&b).unwrap() as f64 / n;
            prop_assert!((cosine(&a, &b).unwrap() - expected).abs() < 1e-12);
        }
    }
}
