//! The free nilpotent Lie algebra `g_N(R^d)` inside `T_N(R^d)`.
//!
//! The basis is the Lyndon basis: one bracket per Lyndon word of length
//! at most `N`, bracketed by standard factorization. Basis elements are
//! ordered by degree, then lexicographically on their Lyndon word.
//!
//! Projection onto coordinates uses the triangularity of the Lyndon
//! basis: the expansion of `P_w` has coefficient 1 on `w` and is otherwise
//! supported on words lexicographically larger than `w`. Reading the
//! Lyndon-word coefficients in increasing order therefore solves each
//! homogeneous block exactly; the full block is then reconstructed and
//! compared against the input to reject non-Lie tensors.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::{word_index, TruncatedTensor};

/// Relative tolerance for the Lie-membership residual check.
pub const LIE_TOL: f64 = 1e-9;

/// Möbius function by trial division.
pub fn mobius(mut n: usize) -> i64 {
    assert!(n >= 1);
    let mut result = 1;
    let mut p = 2;
    while p * p <= n {
        if n % p == 0 {
            n /= p;
            if n % p == 0 {
                return 0;
            }
            result = -result;
        }
        p += 1;
    }
    if n > 1 {
        result = -result;
    }
    result
}

/// Witt dimensions `dim V_j = (1/j) sum_{i|j} mu(i) d^{j/i}` for `j = 1..=depth`.
pub fn layer_dims(dim: usize, depth: usize) -> Vec<usize> {
    (1..=depth)
        .map(|j| {
            let total: i64 = (1..=j)
                .filter(|i| j % i == 0)
                .map(|i| mobius(i) * (dim as i64).pow((j / i) as u32))
                .sum();
            (total / j as i64) as usize
        })
        .collect()
}

/// Homogeneous (Hausdorff) dimension `nu = sum_i i * dim V_i`.
pub fn hausdorff_dim(dim: usize, depth: usize) -> usize {
    layer_dims(dim, depth)
        .iter()
        .enumerate()
        .map(|(i, n)| (i + 1) * n)
        .sum()
}

/// Total dimension `n = dim g_N(R^d)`.
pub fn algebra_dim(dim: usize, depth: usize) -> usize {
    layer_dims(dim, depth).iter().sum()
}

/// Binary bracket tree over letters `1..=d`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum HallTree {
    Leaf(usize),
    Node(Box<HallTree>, Box<HallTree>),
}

impl HallTree {
    pub fn bracket(left: HallTree, right: HallTree) -> Self {
        HallTree::Node(Box::new(left), Box::new(right))
    }

    /// Right-nested bracket `[e_{i1},[e_{i2},...,[e_{ik-1},e_{ik}]...]]`.
    pub fn right_nested(word: &[usize]) -> Self {
        assert!(!word.is_empty());
        let mut tree = HallTree::Leaf(word[word.len() - 1]);
        for &l in word[..word.len() - 1].iter().rev() {
            tree = HallTree::bracket(HallTree::Leaf(l), tree);
        }
        tree
    }

    pub fn degree(&self) -> usize {
        match self {
            HallTree::Leaf(_) => 1,
            HallTree::Node(l, r) => l.degree() + r.degree(),
        }
    }

    /// Leaves read left to right.
    pub fn foliage(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<usize>) {
        match self {
            HallTree::Leaf(l) => out.push(*l),
            HallTree::Node(a, b) => {
                a.collect_leaves(out);
                b.collect_leaves(out);
            }
        }
    }

    fn max_letter(&self) -> usize {
        match self {
            HallTree::Leaf(l) => *l,
            HallTree::Node(a, b) => a.max_letter().max(b.max_letter()),
        }
    }
}

impl fmt::Display for HallTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HallTree::Leaf(l) => write!(f, "{l}"),
            HallTree::Node(a, b) => write!(f, "[{a},{b}]"),
        }
    }
}

/// All Lyndon words of length `1..=max_len` over `1..=dim`, sorted by
/// length and then lexicographically.
pub fn lyndon_words(dim: usize, max_len: usize) -> Vec<Vec<usize>> {
    // Duval's generation, 0-based internally.
    let mut out = Vec::new();
    let mut w: Vec<usize> = vec![0];
    while !w.is_empty() {
        out.push(w.iter().map(|l| l + 1).collect::<Vec<_>>());
        let m = w.len();
        while w.len() < max_len {
            let c = w[w.len() - m];
            w.push(c);
        }
        while let Some(&last) = w.last() {
            if last == dim - 1 {
                w.pop();
            } else {
                break;
            }
        }
        if let Some(last) = w.last_mut() {
            *last += 1;
        }
    }
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out
}

pub fn is_lyndon(word: &[usize]) -> bool {
    !word.is_empty() && (1..word.len()).all(|i| word[i..] > *word)
}

/// Standard bracketing of a Lyndon word: `P_w = [P_u, P_v]` where `v` is
/// the longest proper Lyndon suffix.
pub fn standard_bracketing(word: &[usize]) -> HallTree {
    if word.len() == 1 {
        return HallTree::Leaf(word[0]);
    }
    let split = (1..word.len())
        .find(|&i| is_lyndon(&word[i..]))
        .expect("a single letter suffix is always Lyndon");
    HallTree::bracket(
        standard_bracketing(&word[..split]),
        standard_bracketing(&word[split..]),
    )
}

/// Expands a bracket tree into `T_N(R^d)` with `[a,b] = a⊗b - b⊗a`.
pub fn bracket_to_tensor(tree: &HallTree, dim: usize, depth: usize) -> Result<TruncatedTensor> {
    if tree.degree() > depth {
        return Err(Error::InvalidArgument(format!(
            "bracket degree {} exceeds depth {depth}",
            tree.degree()
        )));
    }
    if tree.max_letter() > dim || tree.foliage().contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "bracket letter outside 1..={dim}"
        )));
    }
    Ok(expand(tree, dim, depth))
}

fn expand(tree: &HallTree, dim: usize, depth: usize) -> TruncatedTensor {
    match tree {
        HallTree::Leaf(l) => TruncatedTensor::letter(dim, depth, *l),
        HallTree::Node(a, b) => {
            let x = expand(a, dim, depth);
            let y = expand(b, dim, depth);
            let mut out = x.mul(&y).expect("same shape");
            out.add_assign_scaled(&y.mul(&x).expect("same shape"), -1.0);
            out
        }
    }
}

/// Lyndon basis of `g_N(R^d)` with cached expansions.
#[derive(Clone, Debug)]
pub struct HallBasis {
    dim: usize,
    depth: usize,
    trees: Vec<HallTree>,
    words: Vec<Vec<usize>>,
    degrees: Vec<usize>,
    /// Homogeneous block of each basis element's expansion.
    blocks: Vec<Vec<f64>>,
    /// Index range of each degree inside the basis ordering.
    ranges: Vec<std::ops::Range<usize>>,
}

impl PartialEq for HallBasis {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.depth == other.depth
    }
}

impl HallBasis {
    pub fn new(dim: usize, depth: usize) -> Result<Self> {
        if dim == 0 || depth == 0 {
            return Err(Error::InvalidArgument("need d >= 1 and N >= 1".into()));
        }
        let words = lyndon_words(dim, depth);
        let trees: Vec<HallTree> = words.iter().map(|w| standard_bracketing(w)).collect();
        let degrees: Vec<usize> = words.iter().map(Vec::len).collect();
        let blocks = trees
            .iter()
            .zip(&degrees)
            .map(|(t, &k)| expand(t, dim, depth).level(k).to_vec())
            .collect();
        let mut ranges = Vec::with_capacity(depth);
        let mut start = 0;
        for k in 1..=depth {
            let count = degrees.iter().filter(|&&g| g == k).count();
            ranges.push(start..start + count);
            start += count;
        }
        Ok(Self {
            dim,
            depth,
            trees,
            words,
            degrees,
            blocks,
            ranges,
        })
    }

    pub fn shared(dim: usize, depth: usize) -> Result<Arc<Self>> {
        Self::new(dim, depth).map(Arc::new)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Number of basis elements `n`.
    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn trees(&self) -> &[HallTree] {
        &self.trees
    }

    pub fn words(&self) -> &[Vec<usize>] {
        &self.words
    }

    /// Degree (layer index) of each basis element.
    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn degree_range(&self, k: usize) -> std::ops::Range<usize> {
        self.ranges[k - 1].clone()
    }

    /// Canonical bracket strings, e.g. `"[1,[1,2]]"`.
    pub fn labels(&self) -> Vec<String> {
        self.trees.iter().map(ToString::to_string).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "d": self.dim,
            "N": self.depth,
            "n": self.len(),
            "layer_dims": layer_dims(self.dim, self.depth),
            "basis": self.labels(),
        })
    }

    /// Expansion of basis element `i` as a full tensor.
    pub fn element_tensor(&self, i: usize) -> TruncatedTensor {
        let mut t = TruncatedTensor::zero(self.dim, self.depth);
        t.level_mut(self.degrees[i])
            .copy_from_slice(&self.blocks[i]);
        t
    }

    /// `sum_i coords[i] * P_i`.
    pub fn combine(&self, coords: &[f64]) -> Result<TruncatedTensor> {
        if coords.len() != self.len() {
            return Err(Error::Shape(format!(
                "{} coordinates for a basis of size {}",
                coords.len(),
                self.len()
            )));
        }
        let mut t = TruncatedTensor::zero(self.dim, self.depth);
        for (i, &c) in coords.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let block = t.level_mut(self.degrees[i]);
            for (x, y) in block.iter_mut().zip(&self.blocks[i]) {
                *x += c * y;
            }
        }
        Ok(t)
    }

    /// Coordinates of a Lie element together with its reconstruction
    /// residual (Euclidean norm).
    pub fn project(&self, x: &TruncatedTensor) -> Result<(Vec<f64>, f64)> {
        if x.dim() != self.dim || x.depth() != self.depth {
            return Err(Error::Shape(format!(
                "tensor (d={}, N={}) against basis (d={}, N={})",
                x.dim(),
                x.depth(),
                self.dim,
                self.depth
            )));
        }
        let mut coords = vec![0.0; self.len()];
        let mut residual_sq = x.scalar() * x.scalar();
        for k in 1..=self.depth {
            let range = self.degree_range(k);
            let target = x.level(k);
            for i in range.clone() {
                let pos = word_index(self.dim, &self.words[i]);
                let mut c = target[pos];
                for j in range.start..i {
                    c -= coords[j] * self.blocks[j][pos];
                }
                coords[i] = c;
            }
            let mut recon = vec![0.0; target.len()];
            for i in range {
                for (r, b) in recon.iter_mut().zip(&self.blocks[i]) {
                    *r += coords[i] * b;
                }
            }
            residual_sq += recon
                .iter()
                .zip(target)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        Ok((coords, residual_sq.sqrt()))
    }
}

/// Coordinates of a Lie element (or a group element in exponential
/// coordinates) over a [`HallBasis`].
#[derive(Clone, Debug, PartialEq)]
pub struct LogCoordinates {
    basis: Arc<HallBasis>,
    coords: Vec<f64>,
}

impl LogCoordinates {
    pub fn new(basis: Arc<HallBasis>, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != basis.len() {
            return Err(Error::Shape(format!(
                "{} coordinates for a basis of size {}",
                coords.len(),
                basis.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("non-finite coordinate".into()));
        }
        Ok(Self { basis, coords })
    }

    pub fn zero(basis: Arc<HallBasis>) -> Self {
        let n = basis.len();
        Self {
            basis,
            coords: vec![0.0; n],
        }
    }

    pub fn basis(&self) -> &Arc<HallBasis> {
        &self.basis
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }
}

/// Projects a Lie element of `T_N` onto basis coordinates; fails when the
/// reconstruction residual exceeds `1e-9 * (1 + |x|)`.
pub fn tensor_to_log_coords(x: &TruncatedTensor, basis: &Arc<HallBasis>) -> Result<LogCoordinates> {
    let (coords, residual) = basis.project(x)?;
    let tolerance = LIE_TOL * (1.0 + x.norm());
    if !(residual <= tolerance) {
        return Err(Error::NotLie {
            residual,
            tolerance,
        });
    }
    LogCoordinates::new(basis.clone(), coords)
}

pub fn log_coords_to_tensor(u: &LogCoordinates) -> TruncatedTensor {
    u.basis
        .combine(&u.coords)
        .expect("length checked at construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mobius_values() {
        let expected = [1, -1, -1, 0, -1, 1, -1, 0, 0, 1, -1, 0];
        for (n, &m) in (1..=12).zip(&expected) {
            assert_eq!(mobius(n), m, "mu({n})");
        }
    }

    #[test]
    fn witt_dimensions() {
        assert_eq!(layer_dims(2, 5), vec![2, 1, 2, 3, 6]);
        assert_eq!(layer_dims(1, 3), vec![1, 0, 0]);
        assert_eq!(layer_dims(3, 3), vec![3, 3, 8]);
        assert_eq!(hausdorff_dim(2, 2), 4);
        assert_eq!(hausdorff_dim(1, 1), 1);
        assert_eq!(hausdorff_dim(2, 3), 10);
    }

    #[test]
    fn heisenberg_basis() {
        let b = HallBasis::new(2, 2).unwrap();
        assert_eq!(b.labels(), vec!["1", "2", "[1,2]"]);
    }

    #[test]
    fn degree_three_basis() {
        let b = HallBasis::new(2, 3).unwrap();
        assert_eq!(
            b.labels()[3..],
            ["[1,[1,2]]".to_string(), "[[1,2],2]".to_string()]
        );
        assert_eq!(b.degrees(), &[1, 1, 2, 3, 3]);
    }

    #[test]
    fn lyndon_word_membership() {
        assert!(is_lyndon(&[1, 1, 2]));
        assert!(is_lyndon(&[1, 2, 2]));
        assert!(!is_lyndon(&[1, 2, 1]));
        assert!(!is_lyndon(&[1, 1]));
        for w in lyndon_words(3, 5) {
            assert!(is_lyndon(&w), "{w:?}");
        }
    }

    #[test]
    fn commutator_expansions() {
        let t = bracket_to_tensor(&HallTree::right_nested(&[1, 2]), 2, 2).unwrap();
        assert_eq!(t.word_coeff(&[1, 2]).unwrap(), 1.0);
        assert_eq!(t.word_coeff(&[2, 1]).unwrap(), -1.0);

        let t = bracket_to_tensor(&HallTree::right_nested(&[1, 1, 2]), 2, 3).unwrap();
        assert_eq!(t.word_coeff(&[1, 1, 2]).unwrap(), 1.0);
        assert_eq!(t.word_coeff(&[1, 2, 1]).unwrap(), -2.0);
        assert_eq!(t.word_coeff(&[2, 1, 1]).unwrap(), 1.0);
        assert_eq!(t.level(3).iter().filter(|x| **x != 0.0).count(), 3);
    }

    #[test]
    fn bracket_degree_overflow() {
        let tree = HallTree::right_nested(&[1, 2, 1]);
        assert!(bracket_to_tensor(&tree, 2, 2).is_err());
        assert!(bracket_to_tensor(&HallTree::Leaf(3), 2, 2).is_err());
    }

    #[test]
    fn projection_of_bracket_and_non_lie_input() {
        let basis = HallBasis::shared(2, 2).unwrap();
        let x = bracket_to_tensor(&HallTree::right_nested(&[1, 2]), 2, 2).unwrap();
        let u = tensor_to_log_coords(&x, &basis).unwrap();
        assert_eq!(u.coords(), &[0.0, 0.0, 1.0]);

        let mut y = TruncatedTensor::zero(2, 2);
        y.set_word_coeff(&[1, 2], 1.0);
        assert!(matches!(
            tensor_to_log_coords(&y, &basis),
            Err(Error::NotLie { .. })
        ));
    }

    #[test]
    fn zero_and_unit_coordinates() {
        let basis = HallBasis::shared(2, 3).unwrap();
        let z = LogCoordinates::zero(basis.clone());
        assert_eq!(log_coords_to_tensor(&z), TruncatedTensor::zero(2, 3));
        let mut c = vec![0.0; basis.len()];
        c[0] = 1.0;
        let u = LogCoordinates::new(basis, c).unwrap();
        assert_eq!(log_coords_to_tensor(&u), TruncatedTensor::letter(2, 3, 1));
    }

    #[test]
    fn coordinate_length_is_validated() {
        let basis = HallBasis::shared(2, 2).unwrap();
        assert!(LogCoordinates::new(basis.clone(), vec![0.0; 2]).is_err());
        assert!(LogCoordinates::new(basis, vec![0.0, f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn json_dump_lists_labels() {
        let b = HallBasis::new(2, 3).unwrap();
        let j = b.to_json();
        assert_eq!(j["n"], 5);
        assert_eq!(j["basis"][3], "[1,[1,2]]");
    }
}
