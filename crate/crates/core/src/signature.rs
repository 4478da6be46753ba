//! Signatures and log-signatures of piecewise-linear paths.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::free_lie::{bracket_to_tensor, HallBasis, HallTree};
use crate::group::{group_from_tensor, GroupElement};
use crate::tensor::TruncatedTensor;

/// Piecewise-linear path through breakpoints `(t_j, x_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PLPath {
    times: Vec<f64>,
    points: Vec<Vec<f64>>,
}

impl PLPath {
    pub fn new(times: Vec<f64>, points: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() != points.len() {
            return Err(Error::InvalidPath(format!(
                "{} times for {} points",
                times.len(),
                points.len()
            )));
        }
        if times.len() < 2 {
            return Err(Error::InvalidPath("need at least two breakpoints".into()));
        }
        let dim = points[0].len();
        if dim == 0 || points.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidPath(
                "points must share a positive dimension".into(),
            ));
        }
        if times
            .iter()
            .chain(points.iter().flatten())
            .any(|x| !x.is_finite())
        {
            return Err(Error::InvalidPath("non-finite entry".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidPath(
                "times must be strictly increasing".into(),
            ));
        }
        Ok(Self { times, points })
    }

    /// Breakpoints at uniform times on `[0, 1]`.
    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        let m = points.len().saturating_sub(1).max(1);
        let times = (0..points.len()).map(|j| j as f64 / m as f64).collect();
        Self::new(times, points)
    }

    /// Path starting at the origin that follows the given increments.
    pub fn from_increments(increments: &[Vec<f64>]) -> Result<Self> {
        let dim = increments.first().map(Vec::len).unwrap_or(0);
        let mut points = vec![vec![0.0; dim]];
        for inc in increments {
            let last = points.last().unwrap();
            points.push(last.iter().zip(inc).map(|(a, b)| a + b).collect());
        }
        Self::uniform(points)
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn segments(&self) -> usize {
        self.points.len() - 1
    }

    pub fn increments(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        self.points
            .windows(2)
            .map(|w| w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect())
    }

    /// Concatenation: `other` is translated to start where `self` ends and
    /// its clock is shifted to start at `self`'s final time.
    pub fn concat(&self, other: &PLPath) -> Result<PLPath> {
        if self.dim() != other.dim() {
            return Err(Error::InvalidPath(
                "dimension mismatch in concatenation".into(),
            ));
        }
        let end = self.points.last().unwrap();
        let t_end = *self.times.last().unwrap();
        let (t0, x0) = (other.times[0], &other.points[0]);
        let mut times = self.times.clone();
        let mut points = self.points.clone();
        for (t, p) in other.times.iter().zip(&other.points).skip(1) {
            times.push(t_end + (t - t0));
            points.push(
                p.iter()
                    .zip(x0)
                    .zip(end)
                    .map(|((a, b), c)| a - b + c)
                    .collect(),
            );
        }
        PLPath::new(times, points)
    }

    /// Pointwise scaling of the path values.
    pub fn scaled(&self, lambda: f64) -> PLPath {
        let points = self
            .points
            .iter()
            .map(|p| p.iter().map(|x| x * lambda).collect())
            .collect();
        PLPath {
            times: self.times.clone(),
            points,
        }
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Parse(e.to_string()))?
            .clone();
        if headers.len() < 2 || &headers[0] != "t" {
            return Err(Error::Parse("header must be `t,x1,...,xd`".into()));
        }
        for (i, h) in headers.iter().enumerate().skip(1) {
            if h != format!("x{i}") {
                return Err(Error::Parse(format!(
                    "unexpected column `{h}`, expected `x{i}`"
                )));
            }
        }
        let mut times = Vec::new();
        let mut points = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("`{s}`: {e}")))
                })
                .collect::<Result<_>>()?;
            times.push(vals[0]);
            points.push(vals[1..].to_vec());
        }
        PLPath::new(times, points)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let f =
            std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::read_csv(f)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim()).map(|i| format!("x{i}")));
        w.write_record(&header)
            .map_err(|e| Error::Io(e.to_string()))?;
        for (t, p) in self.times.iter().zip(&self.points) {
            let mut row = vec![fmt_f64(*t)];
            row.extend(p.iter().map(|x| fmt_f64(*x)));
            w.write_record(&row).map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Signature of a single linear segment: `exp(v)`.
pub fn sig_segment(v: &[f64], depth: usize) -> TruncatedTensor {
    TruncatedTensor::from_vector(depth, v)
        .exp()
        .expect("degree-one element")
}

/// Signature of a PL path as the ordered product of its segment exponentials.
pub fn sig_pl_path(path: &PLPath, depth: usize) -> TruncatedTensor {
    let mut s = TruncatedTensor::unit(path.dim(), depth);
    for inc in path.increments() {
        s.mul_exp_increment(&inc);
    }
    s
}

/// Signature from a flat buffer of increments (`steps * dim` values).
pub fn sig_from_increments(increments: &[f64], dim: usize, depth: usize) -> TruncatedTensor {
    let mut s = TruncatedTensor::unit(dim, depth);
    for inc in increments.chunks_exact(dim) {
        s.mul_exp_increment(inc);
    }
    s
}

pub fn log_sig_pl_path(path: &PLPath, basis: &Arc<HallBasis>) -> Result<GroupElement> {
    check_basis(path, basis)?;
    group_from_tensor(&sig_pl_path(path, basis.depth()), basis)
}

fn check_basis(path: &PLPath, basis: &HallBasis) -> Result<()> {
    if path.dim() != basis.dim() {
        return Err(Error::Shape(format!(
            "path dimension {} against basis dimension {}",
            path.dim(),
            basis.dim()
        )));
    }
    Ok(())
}

/// Iterated integral `∫_{t1<...<tk} dx^{i1} ... dx^{ik}` over a PL path.
///
/// Computed by exact polynomial integration segment by segment, without
/// going through the tensor algebra.
pub fn iterated_integral_word(path: &PLPath, word: &[usize]) -> Result<f64> {
    if let Some(&bad) = word.iter().find(|&&l| l == 0 || l > path.dim()) {
        return Err(Error::InvalidArgument(format!(
            "letter {bad} outside 1..={}",
            path.dim()
        )));
    }
    let k = word.len();
    // prefix[j] = value of the iterated integral of word[..j] so far
    let mut prefix = vec![0.0; k + 1];
    prefix[0] = 1.0;
    for inc in path.increments() {
        // Within the segment, prefix j is a polynomial in s ∈ [0,1]
        // with coefficients poly[j][p] for s^p.
        let mut poly: Vec<Vec<f64>> = Vec::with_capacity(k + 1);
        poly.push(vec![1.0]);
        for j in 1..=k {
            let slope = inc[word[j - 1] - 1];
            let prev = &poly[j - 1];
            let mut next = vec![0.0; prev.len() + 1];
            next[0] = prefix[j];
            for (p, c) in prev.iter().enumerate() {
                next[p + 1] = c * slope / (p + 1) as f64;
            }
            poly.push(next);
        }
        for j in 1..=k {
            prefix[j] = poly[j].iter().sum();
        }
    }
    Ok(prefix[k])
}

/// Number of descents `#{j : σ(j) > σ(j+1)}` of a permutation of `0..k`.
fn descents(perm: &[usize]) -> usize {
    perm.windows(2).filter(|w| w[0] > w[1]).count()
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; k], &mut out);
    out
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Strichartz coefficient of the word `I`: the signed, weighted sum of
/// iterated integrals over the letter rearrangements `j ↦ i_{σ^{-1}(j)}`.
pub fn strichartz_coefficient(path: &PLPath, word: &[usize]) -> Result<f64> {
    let k = word.len();
    let mut total = 0.0;
    for sigma in permutations(k) {
        let e = descents(&sigma);
        let weight = if e % 2 == 0 { 1.0 } else { -1.0 } / ((k * k) as f64 * binomial(k - 1, e));
        let mut inv = vec![0; k];
        for (j, &s) in sigma.iter().enumerate() {
            inv[s] = j;
        }
        let permuted: Vec<usize> = inv.iter().map(|&p| word[p]).collect();
        total += weight * iterated_integral_word(path, &permuted)?;
    }
    Ok(total)
}

/// Log-signature assembled from the Chen–Strichartz expansion over
/// right-nested brackets. Supported for depth at most 3.
pub fn chen_strichartz_logsig(path: &PLPath, basis: &Arc<HallBasis>) -> Result<GroupElement> {
    check_basis(path, basis)?;
    let (d, depth) = (basis.dim(), basis.depth());
    if depth > 3 {
        return Err(Error::InvalidArgument(format!(
            "Chen–Strichartz expansion is limited to depth 3, got {depth}"
        )));
    }
    let mut lie = TruncatedTensor::zero(d, depth);
    for k in 1..=depth {
        for idx in 0..d.pow(k as u32) {
            let word = crate::tensor::index_word(d, k, idx);
            let lambda = strichartz_coefficient(path, &word)?;
            if lambda != 0.0 {
                let e = bracket_to_tensor(&HallTree::right_nested(&word), d, depth)?;
                lie.add_assign_scaled(&e, lambda);
            }
        }
    }
    let x = lie.exp()?;
    group_from_tensor(&x, basis)
}
