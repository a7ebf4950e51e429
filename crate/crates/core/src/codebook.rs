//! Seeded base and level codebooks.
//!
//! Generation is a pure function of `(seed, shape)`:
//!
//! * base rows come from stream `derive_seed(seed, 0)`; element `i` of the
//!   row-major `D_iv x D_hv` matrix is bit `i % 64` of the `i / 64`-th
//!   `u64` drawn, with 1 meaning +1;
//! * level row 0 comes the same way from stream `derive_seed(seed, 1)`; the
//!   stream then drives a Fisher-Yates shuffle of `0..D_hv` (index
//!   `j = (u64 * (i + 1)) >> 64` for `i` descending), and level `k + 1` flips
//!   the `k`-th block of `floor(D_hv / (2 * levels))` shuffled positions of
//!   level `k`. Blocks are disjoint, so `Hamming(L_a, L_b) = |a - b| * block`.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::hv::{Hypervector, Kind};
use crate::rng::{derive_seed, rng_from_seed, HdRng};

const BASE_STREAM: u64 = 0;
const LEVEL_STREAM: u64 = 1;

fn fill_bipolar(rng: &mut HdRng, out: &mut [i8]) {
    for chunk in out.chunks_mut(64) {
        let word = rng.next_u64();
        for (i, v) in chunk.iter_mut().enumerate() {
            *v = if (word >> i) & 1 == 1 { 1 } else { -1 };
        }
    }
}

fn bounded(rng: &mut HdRng, n: usize) -> usize {
    ((rng.next_u64() as u128 * n as u128) >> 64) as usize
}

/// `d_iv` bipolar rows of length `d_hv`, flattened row-major.
pub fn gen_base(seed: u64, d_iv: usize, d_hv: usize) -> Result<Vec<i8>> {
    if d_iv == 0 || d_hv == 0 {
        return Err(Error::Config(format!("base shape must be positive, got {d_iv}x{d_hv}")));
    }
    let mut rng = rng_from_seed(derive_seed(seed, BASE_STREAM));
    let mut out = vec![0i8; d_iv * d_hv];
    // each row starts on a fresh word so rows do not depend on d_hv alignment
    for row in out.chunks_mut(d_hv) {
        fill_bipolar(&mut rng, row);
    }
    Ok(out)
}

/// Number of positions flipped between consecutive levels.
pub fn level_flip_count(levels: usize, d_hv: usize) -> usize {
    d_hv / (2 * levels)
}

/// `levels` bipolar rows of length `d_hv`, flattened row-major.
pub fn gen_levels(seed: u64, levels: usize, d_hv: usize) -> Result<Vec<i8>> {
    if levels < 2 {
        return Err(Error::Config(format!("need at least 2 levels, got {levels}")));
    }
    if d_hv == 0 {
        return Err(Error::Config("d_hv must be positive".into()));
    }
    let mut rng = rng_from_seed(derive_seed(seed, LEVEL_STREAM));
    let mut out = vec![0i8; levels * d_hv];
    fill_bipolar(&mut rng, &mut out[..d_hv]);

    let mut order: Vec<usize> = (0..d_hv).collect();
    for i in (1..d_hv).rev() {
        let j = bounded(&mut rng, i + 1);
        order.swap(i, j);
    }
    let flips = level_flip_count(levels, d_hv);
    for k in 1..levels {
        let (prev, next) = out.split_at_mut(k * d_hv);
        let prev = &prev[(k - 1) * d_hv..];
        let next = &mut next[..d_hv];
        next.copy_from_slice(prev);
        for &pos in &order[(k - 1) * flips..k * flips] {
            next[pos] = -next[pos];
        }
    }
    Ok(out)
}

/// The projection keys shared by encoder and attacker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodebookSet {
    seed: u64,
    d_iv: usize,
    d_hv: usize,
    levels: usize,
    base: Vec<i8>,
    level_table: Vec<i8>,
}

impl CodebookSet {
    pub fn generate(seed: u64, d_iv: usize, d_hv: usize, levels: usize) -> Result<Self> {
        Ok(Self {
            seed,
            d_iv,
            d_hv,
            levels,
            base: gen_base(seed, d_iv, d_hv)?,
            level_table: gen_levels(seed, levels, d_hv)?,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn d_iv(&self) -> usize {
        self.d_iv
    }

    pub fn d_hv(&self) -> usize {
        self.d_hv
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn base_row(&self, k: usize) -> &[i8] {
        &self.base[k * self.d_hv..(k + 1) * self.d_hv]
    }

    pub fn level_row(&self, f: usize) -> &[i8] {
        &self.level_table[f * self.d_hv..(f + 1) * self.d_hv]
    }

    pub fn base(&self, k: usize) -> Hypervector {
        Hypervector::from_parts_unchecked(self.base_row(k).iter().map(|&v| v as i64).collect(), Kind::Bipolar)
    }

    pub fn level(&self, f: usize) -> Hypervector {
        Hypervector::from_parts_unchecked(self.level_row(f).iter().map(|&v| v as i64).collect(), Kind::Bipolar)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hv::cosine;

    #[test]
    fn base_is_deterministic() {
        let a = gen_base(7, 1, 8).unwrap();
        assert_eq!(a.len(), 8);
        assert!(a.iter().all(|&v| v == 1 || v == -1));
        assert_eq!(a, gen_base(7, 1, 8).unwrap());
    }

    #[test]
    fn distinct_seeds_differ() {
        assert_ne!(gen_base(7, 2, 10_000).unwrap(), gen_base(8, 2, 10_000).unwrap());
    }

    #[test]
    fn zero_shapes_rejected() {
        assert!(matches!(gen_base(1, 0, 8), Err(Error::Config(_))));
        assert!(matches!(gen_base(1, 3, 0), Err(Error::Config(_))));
        assert!(matches!(gen_levels(1, 1, 8), Err(Error::Config(_))));
    }

    #[test]
    fn base_rows_quasi_orthogonal() {
        let cb = CodebookSet::generate(7, 50, 10_000, 2).unwrap();
        let rows: Vec<_> = (0..50).map(|k| cb.base(k)).collect();
        let mut max = 0.0f64;
        for i in 0..50 {
            for j in i + 1..50 {
                max = max.max(cosine(&rows[i], &rows[j]).unwrap().abs());
            }
        }
        assert!(max < 0.05, "max |cos| = {max}");
    }

    #[test]
    fn two_levels_of_eight() {
        let cb = CodebookSet::generate(3, 1, 8, 2).unwrap();
        assert_eq!(cb.level(0).hamming(&cb.level(1)).unwrap(), 2);
    }

    #[test]
    fn level_distances_accumulate() {
        let cb = CodebookSet::generate(11, 1, 10_000, 10).unwrap();
        let l0 = cb.level(0);
        assert_eq!(l0.hamming(&cb.level(9)).unwrap(), 4500);
        for k in 0..10 {
            assert_eq!(l0.hamming(&cb.level(k)).unwrap(), 500 * k);
        }
        let c = cosine(&l0, &cb.level(1)).unwrap();
        assert!((c - 0.9).abs() < 1e-12);
    }
}
