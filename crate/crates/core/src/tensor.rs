//! Dense arithmetic in the truncated tensor algebra `T_N(R^d)`.
//!
//! An element is stored as `N + 1` blocks; block `k` holds the `d^k`
//! coefficients of words of length `k`, indexed big-endian (the first
//! letter is the most significant digit). Letters in the public API are
//! 1-based, matching the usual `e_1, ..., e_d` notation.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking the scalar part of grouplike inputs.
const SCALAR_TOL: f64 = 1e-9;

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncatedTensor {
    dim: usize,
    depth: usize,
    levels: Vec<Vec<f64>>,
}

impl fmt::Debug for TruncatedTensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TruncatedTensor")
            .field("dim", &self.dim)
            .field("depth", &self.depth)
            .field("levels", &self.levels)
            .finish()
    }
}

/// Index of a 1-based word inside its level block.
pub fn word_index(dim: usize, word: &[usize]) -> usize {
    word.iter().fold(0, |acc, &l| acc * dim + (l - 1))
}

/// Inverse of [`word_index`].
pub fn index_word(dim: usize, len: usize, mut index: usize) -> Vec<usize> {
    let mut word = vec![0; len];
    for slot in word.iter_mut().rev() {
        *slot = index % dim + 1;
        index /= dim;
    }
    word
}

impl TruncatedTensor {
    pub fn zero(dim: usize, depth: usize) -> Self {
        assert!(dim >= 1 && depth >= 1, "dim and depth must be positive");
        let levels = (0..=depth).map(|k| vec![0.0; dim.pow(k as u32)]).collect();
        Self { dim, depth, levels }
    }

    pub fn unit(dim: usize, depth: usize) -> Self {
        let mut t = Self::zero(dim, depth);
        t.levels[0][0] = 1.0;
        t
    }

    /// The degree-one element `sum_i v_i e_i`.
    pub fn from_vector(depth: usize, v: &[f64]) -> Self {
        let mut t = Self::zero(v.len(), depth);
        t.levels[1].copy_from_slice(v);
        t
    }

    /// Single letter `e_letter` (1-based).
    pub fn letter(dim: usize, depth: usize, letter: usize) -> Self {
        assert!((1..=dim).contains(&letter), "letter out of range");
        let mut t = Self::zero(dim, depth);
        t.levels[1][letter - 1] = 1.0;
        t
    }

    /// Builds a tensor from explicit level blocks, validating their sizes.
    pub fn from_levels(dim: usize, levels: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 || levels.len() < 2 {
            return Err(Error::Shape(
                "need dim >= 1 and at least levels 0 and 1".into(),
            ));
        }
        for (k, block) in levels.iter().enumerate() {
            if block.len() != dim.pow(k as u32) {
                return Err(Error::Shape(format!(
                    "level {k} has {} entries, expected {}",
                    block.len(),
                    dim.pow(k as u32)
                )));
            }
            if block.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "level {k} has non-finite entries"
                )));
            }
        }
        let depth = levels.len() - 1;
        Ok(Self { dim, depth, levels })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn level(&self, k: usize) -> &[f64] {
        &self.levels[k]
    }

    pub fn level_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.levels[k]
    }

    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    pub fn scalar(&self) -> f64 {
        self.levels[0][0]
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim || self.depth != other.depth {
            return Err(Error::Shape(format!(
                "tensor (d={}, N={}) vs (d={}, N={})",
                self.dim, self.depth, other.dim, other.depth
            )));
        }
        Ok(())
    }

    /// Coefficient of the word `e_{i1} ⊗ ... ⊗ e_{ik}` (1-based letters).
    pub fn word_coeff(&self, word: &[usize]) -> Result<f64> {
        if word.len() > self.depth {
            return Err(Error::InvalidArgument(format!(
                "word length {} exceeds depth {}",
                word.len(),
                self.depth
            )));
        }
        if let Some(&bad) = word.iter().find(|&&l| l == 0 || l > self.dim) {
            return Err(Error::InvalidArgument(format!(
                "letter {bad} outside 1..={}",
                self.dim
            )));
        }
        Ok(self.levels[word.len()][word_index(self.dim, word)])
    }

    pub fn set_word_coeff(&mut self, word: &[usize], value: f64) {
        let idx = word_index(self.dim, word);
        self.levels[word.len()][idx] = value;
    }

    pub fn is_finite(&self) -> bool {
        self.levels.iter().flatten().all(|x| x.is_finite())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        out.add_assign_scaled(other, 1.0);
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        out.add_assign_scaled(other, -1.0);
        Ok(out)
    }

    /// `self += alpha * other`; panics on shape mismatch.
    pub fn add_assign_scaled(&mut self, other: &Self, alpha: f64) {
        assert_eq!((self.dim, self.depth), (other.dim, other.depth));
        for (a, b) in self.levels.iter_mut().zip(&other.levels) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += alpha * y;
            }
        }
    }

    pub fn scale(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.levels.iter_mut().flatten().for_each(|x| *x *= alpha);
        out
    }

    /// Largest absolute coefficient.
    pub fn max_abs(&self) -> f64 {
        self.levels
            .iter()
            .flatten()
            .fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Euclidean norm over all coefficients.
    pub fn norm(&self) -> f64 {
        self.levels
            .iter()
            .flatten()
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.levels
            .iter()
            .flatten()
            .zip(other.levels.iter().flatten())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Truncated tensor product.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(self.mul_unchecked(other))
    }

    fn mul_unchecked(&self, other: &Self) -> Self {
        let d = self.dim;
        let mut out = Self::zero(d, self.depth);
        for k in 0..=self.depth {
            let block = &mut out.levels[k];
            for i in 0..=k {
                let j = k - i;
                let a = &self.levels[i];
                let b = &other.levels[j];
                let width = b.len();
                for (ia, &x) in a.iter().enumerate() {
                    if x == 0.0 {
                        continue;
                    }
                    let row = &mut block[ia * width..(ia + 1) * width];
                    for (r, &y) in row.iter_mut().zip(b) {
                        *r += x * y;
                    }
                }
            }
        }
        out
    }

    /// Truncated exponential `sum_{k<=N} z^k / k!`; requires zero scalar part.
    pub fn exp(&self) -> Result<Self> {
        if self.scalar() != 0.0 {
            return Err(Error::ScalarPart {
                expected: 0.0,
                found: self.scalar(),
            });
        }
        // Horner form: 1 + z(1 + z/2(1 + ... (1 + z/N)))
        let one = Self::unit(self.dim, self.depth);
        let mut acc = one.clone();
        for k in (1..=self.depth).rev() {
            acc = self.scale(1.0 / k as f64).mul_unchecked(&acc);
            acc.levels[0][0] += 1.0;
        }
        Ok(acc)
    }

    /// Truncated logarithm `sum_{k<=N} (-1)^{k+1} (x-1)^k / k`; requires scalar part 1.
    pub fn log(&self) -> Result<Self> {
        if (self.scalar() - 1.0).abs() > SCALAR_TOL {
            return Err(Error::ScalarPart {
                expected: 1.0,
                found: self.scalar(),
            });
        }
        let mut y = self.clone();
        y.levels[0][0] = 0.0;
        // Horner form: y(1 - y/2 + y^2/3 - ...)
        let mut acc = Self::zero(self.dim, self.depth);
        for k in (1..=self.depth).rev() {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            acc = y.mul_unchecked(&acc);
            acc.levels[0][0] += sign / k as f64;
        }
        let mut out = y.mul_unchecked(&acc);
        out.levels[0][0] = 0.0;
        Ok(out)
    }

    /// Group inverse `exp(-log x)` of an element with scalar part 1.
    pub fn inverse(&self) -> Result<Self> {
        let l = self.log()?;
        l.scale(-1.0).exp()
    }

    /// In-place right multiplication by `exp(v)` for a degree-one increment `v`.
    ///
    /// This is the inner loop of signature computation; it avoids
    /// materialising `exp(v)` and runs a Horner recursion per level.
    pub fn mul_exp_increment(&mut self, v: &[f64]) {
        let cap = self.dim.pow(self.depth as u32);
        let mut tmp = Vec::with_capacity(cap);
        let mut next = Vec::with_capacity(cap);
        self.mul_exp_increment_with(v, &mut tmp, &mut next);
    }

    /// [`Self::mul_exp_increment`] with caller-owned scratch buffers.
    pub fn mul_exp_increment_with(&mut self, v: &[f64], tmp: &mut Vec<f64>, next: &mut Vec<f64>) {
        let d = self.dim;
        assert_eq!(v.len(), d);
        for k in (1..=self.depth).rev() {
            // tmp = S_0 * v / k
            tmp.clear();
            let s0 = self.levels[0][0] / k as f64;
            tmp.extend(v.iter().map(|x| s0 * x));
            for j in 1..k {
                // tmp = (S_j + tmp) ⊗ v / (k - j)
                let inv = 1.0 / (k - j) as f64;
                let sj = &self.levels[j];
                next.clear();
                for (a, b) in sj.iter().zip(tmp.iter()) {
                    let c = (a + b) * inv;
                    next.extend(v.iter().map(|x| c * x));
                }
                std::mem::swap(tmp, next);
            }
            for (s, t) in self.levels[k].iter_mut().zip(tmp.iter()) {
                *s += t;
            }
        }
    }

    /// Projection onto the homogeneous component of degree `k`.
    pub fn homogeneous_part(&self, k: usize) -> Self {
        let mut out = Self::zero(self.dim, self.depth);
        out.levels[k].copy_from_slice(&self.levels[k]);
        out
    }
}
