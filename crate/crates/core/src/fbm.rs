//! Exact-law sampling of `d`-dimensional fractional Brownian motion.
//!
//! Two samplers share one output type. The Cholesky sampler works on any
//! increasing grid by factoring the covariance matrix. The circulant
//! sampler embeds the autocovariance of fractional Gaussian noise in a
//! circulant matrix of size `2n`, diagonalises it with an FFT and produces
//! two independent noise vectors per transform (real and imaginary parts).

use std::io::{Read, Write};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{self, Purpose, CHUNK};
use crate::signature::{fmt_f64, PLPath};

const MAGIC: &[u8; 4] = b"FBMB";
const VERSION: u32 = 1;

fn check_hurst(hurst: f64) -> Result<()> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "Hurst parameter {hurst} outside (0, 1)"
        )));
    }
    Ok(())
}

/// fBm covariance `R(s,t) = ½(s^{2H} + t^{2H} - |t-s|^{2H})`.
pub fn fbm_cov(s: f64, t: f64, hurst: f64) -> Result<f64> {
    check_hurst(hurst)?;
    if s < 0.0 || t < 0.0 {
        return Err(Error::InvalidArgument("times must be nonnegative".into()));
    }
    let h2 = 2.0 * hurst;
    Ok(0.5 * (s.powf(h2) + t.powf(h2) - (t - s).abs().powf(h2)))
}

/// Autocovariance of unit-step fractional Gaussian noise at lag `k`.
pub fn fgn_autocov(k: usize, hurst: f64) -> f64 {
    let h2 = 2.0 * hurst;
    let k = k as f64;
    0.5 * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).abs().powf(h2))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerMethod {
    Cholesky,
    Circulant,
    /// `H = 1/2`: independent Gaussian increments.
    Brownian,
}

/// Sampled trajectories, stored sample-major as `count × grid × d`.
#[derive(Clone, Debug, PartialEq)]
pub struct FbmBatch {
    pub hurst: f64,
    pub grid: Vec<f64>,
    pub dim: usize,
    pub count: usize,
    pub seed: u64,
    pub method: SamplerMethod,
    pub values: Vec<f64>,
}

impl FbmBatch {
    pub fn steps(&self) -> usize {
        self.grid.len()
    }

    pub fn value(&self, sample: usize, point: usize, coord: usize) -> f64 {
        self.values[(sample * self.grid.len() + point) * self.dim + coord]
    }

    /// Values of one coordinate at one grid point across all samples.
    pub fn marginal(&self, point: usize, coord: usize) -> Vec<f64> {
        (0..self.count)
            .map(|s| self.value(s, point, coord))
            .collect()
    }

    /// Trajectory `sample` as a PL path starting at the origin at time 0.
    pub fn path(&self, sample: usize) -> Result<PLPath> {
        let mut times = vec![0.0];
        let mut points = vec![vec![0.0; self.dim]];
        for (j, &t) in self.grid.iter().enumerate() {
            times.push(t);
            points.push((0..self.dim).map(|c| self.value(sample, j, c)).collect());
        }
        PLPath::new(times, points)
    }

    /// CSV with one row per sample per grid point: `sample,t,x1,...,xd`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["sample".to_string(), "t".to_string()];
        header.extend((1..=self.dim).map(|i| format!("x{i}")));
        w.write_record(&header)
            .map_err(|e| Error::Io(e.to_string()))?;
        for s in 0..self.count {
            for (j, &t) in self.grid.iter().enumerate() {
                let mut row = vec![s.to_string(), fmt_f64(t)];
                row.extend((0..self.dim).map(|c| fmt_f64(self.value(s, j, c))));
                w.write_record(&row).map_err(|e| Error::Io(e.to_string()))?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Binary dump, little endian:
    /// `b"FBMB"`, version `u32`, `H f64`, `d u32`, `steps u32`, `count u64`,
    /// `seed u64`, then `steps` grid times and `count*steps*d` values as `f64`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&self.hurst.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.grid.len() as u32).to_le_bytes())?;
        w.write_all(&(self.count as u64).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for x in self.grid.iter().chain(&self.values) {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Parse("bad magic in fBm dump".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != VERSION {
            return Err(Error::Parse(format!("unsupported dump version {version}")));
        }
        r.read_exact(&mut b8)?;
        let hurst = f64::from_le_bytes(b8);
        r.read_exact(&mut b4)?;
        let dim = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b4)?;
        let steps = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b8)?;
        let count = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let seed = u64::from_le_bytes(b8);
        let mut read_vec = |len: usize| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(len);
            for _ in 0..len {
                r.read_exact(&mut b8)?;
                out.push(f64::from_le_bytes(b8));
            }
            Ok(out)
        };
        let grid = read_vec(steps)?;
        let values = read_vec(count * steps * dim)?;
        // The dump does not record the sampler; uniform grids are assumed circulant.
        Ok(Self {
            hurst,
            grid,
            dim,
            count,
            seed,
            method: SamplerMethod::Circulant,
            values,
        })
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty grid".into()));
    }
    if grid[0] <= 0.0
        || grid.windows(2).any(|w| w[1] <= w[0])
        || grid.iter().any(|t| !t.is_finite())
    {
        return Err(Error::InvalidArgument(
            "grid must be strictly increasing and start after 0".into(),
        ));
    }
    Ok(())
}

/// Uniform grid `horizon * j / steps`, `j = 1..=steps`.
pub fn uniform_grid(steps: usize, horizon: f64) -> Vec<f64> {
    (1..=steps)
        .map(|j| horizon * j as f64 / steps as f64)
        .collect()
}

/// Lower Cholesky factor of the fBm covariance on a grid.
pub fn cholesky_factor(grid: &[f64], hurst: f64) -> Result<DMatrix<f64>> {
    check_hurst(hurst)?;
    check_grid(grid)?;
    let m = grid.len();
    let h2 = 2.0 * hurst;
    let cov = DMatrix::from_fn(m, m, |i, j| {
        0.5 * (grid[i].powf(h2) + grid[j].powf(h2) - (grid[i] - grid[j]).abs().powf(h2))
    });
    cov.cholesky().map(|c| c.l()).ok_or_else(|| {
        Error::Factorization("fBm covariance is not positive definite on this grid".into())
    })
}

fn normals<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

fn chunks(count: usize) -> Vec<(u64, usize, usize)> {
    (0..count.div_ceil(CHUNK))
        .map(|c| (c as u64, c * CHUNK, ((c + 1) * CHUNK).min(count)))
        .collect()
}

/// Exact sampling by Cholesky factorisation of the covariance on `grid`.
pub fn sample_fbm_cholesky(
    grid: &[f64],
    hurst: f64,
    dim: usize,
    count: usize,
    seed: u64,
) -> Result<FbmBatch> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    let factor = cholesky_factor(grid, hurst)?;
    let m = grid.len();
    let parts: Vec<Vec<f64>> = chunks(count)
        .into_par_iter()
        .map(|(c, start, end)| {
            let mut out = vec![0.0; (end - start) * m * dim];
            for coord in 0..dim {
                let mut rng = rng::stream(seed, Purpose::Fbm, c, coord as u32);
                for s in 0..end - start {
                    let path = &factor * normals(&mut rng, m);
                    for (j, x) in path.iter().enumerate() {
                        out[(s * m + j) * dim + coord] = *x;
                    }
                }
            }
            out
        })
        .collect();
    Ok(FbmBatch {
        hurst,
        grid: grid.to_vec(),
        dim,
        count,
        seed,
        method: SamplerMethod::Cholesky,
        values: parts.concat(),
    })
}

/// Generator of fBm increments on a uniform grid of `[0, horizon]`.
#[derive(Clone)]
pub struct IncrementSampler {
    steps: usize,
    horizon: f64,
    hurst: f64,
    kind: IncrementKind,
}

#[derive(Clone)]
enum IncrementKind {
    Brownian,
    Circulant {
        sqrt_eig: Vec<f64>,
        fft: Arc<dyn Fft<f64>>,
    },
    Cholesky {
        factor: DMatrix<f64>,
    },
}

impl std::fmt::Debug for IncrementSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IncrementSampler")
            .field("steps", &self.steps)
            .field("horizon", &self.horizon)
            .field("hurst", &self.hurst)
            .field("method", &self.method())
            .finish()
    }
}

/// Square roots of the circulant embedding eigenvalues (scaled by `1/2n`),
/// or `None` when the embedding has a materially negative eigenvalue.
pub fn circulant_sqrt_eigenvalues(steps: usize, hurst: f64) -> Option<Vec<f64>> {
    let m = 2 * steps;
    let mut row: Vec<Complex<f64>> = (0..m)
        .map(|k| {
            let lag = if k <= steps { k } else { m - k };
            Complex::new(fgn_autocov(lag, hurst), 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut row);
    let max = row.iter().map(|z| z.re).fold(0.0, f64::max);
    if row.iter().any(|z| z.re < -1e-10 * max) {
        return None;
    }
    Some(
        row.iter()
            .map(|z| (z.re.max(0.0) / m as f64).sqrt())
            .collect(),
    )
}

impl IncrementSampler {
    /// Picks the cheapest exact method: independent increments at `H = 1/2`,
    /// circulant embedding otherwise, Cholesky if the embedding fails.
    pub fn new(steps: usize, horizon: f64, hurst: f64) -> Result<Self> {
        check_hurst(hurst)?;
        if steps == 0 || !(horizon > 0.0) {
            return Err(Error::InvalidArgument(
                "need steps >= 1 and horizon > 0".into(),
            ));
        }
        let kind = if hurst == 0.5 {
            IncrementKind::Brownian
        } else {
            Self::circulant_kind(steps, hurst).unwrap_or_else(|| IncrementKind::Cholesky {
                factor: cholesky_factor(&uniform_grid(steps, horizon), hurst)
                    .expect("uniform grids have a positive definite covariance"),
            })
        };
        Ok(Self {
            steps,
            horizon,
            hurst,
            kind,
        })
    }

    /// Circulant embedding only; errors when an eigenvalue is negative.
    pub fn circulant(steps: usize, horizon: f64, hurst: f64) -> Result<Self> {
        check_hurst(hurst)?;
        if steps == 0 || !(horizon > 0.0) {
            return Err(Error::InvalidArgument(
                "need steps >= 1 and horizon > 0".into(),
            ));
        }
        let kind = Self::circulant_kind(steps, hurst).ok_or_else(|| {
            Error::Factorization("negative circulant embedding eigenvalue".into())
        })?;
        Ok(Self {
            steps,
            horizon,
            hurst,
            kind,
        })
    }

    fn circulant_kind(steps: usize, hurst: f64) -> Option<IncrementKind> {
        let sqrt_eig = circulant_sqrt_eigenvalues(steps, hurst)?;
        let fft = FftPlanner::new().plan_fft_forward(2 * steps);
        Some(IncrementKind::Circulant { sqrt_eig, fft })
    }

    pub fn method(&self) -> SamplerMethod {
        match self.kind {
            IncrementKind::Brownian => SamplerMethod::Brownian,
            IncrementKind::Circulant { .. } => SamplerMethod::Circulant,
            IncrementKind::Cholesky { .. } => SamplerMethod::Cholesky,
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    /// Increments for samples `0..n` of work chunk `chunk`, laid out as
    /// `n × steps × dim`. Coordinates draw from separate streams.
    pub fn fill_chunk(&self, seed: u64, chunk: u64, n: usize, dim: usize, out: &mut Vec<f64>) {
        let steps = self.steps;
        out.clear();
        out.resize(n * steps * dim, 0.0);
        let dt_scale = (self.horizon / steps as f64).powf(self.hurst);
        match &self.kind {
            IncrementKind::Brownian => {
                for coord in 0..dim {
                    let mut rng = rng::stream(seed, Purpose::Fbm, chunk, coord as u32);
                    for s in 0..n {
                        for j in 0..steps {
                            let z: f64 = rng.sample(StandardNormal);
                            out[(s * steps + j) * dim + coord] = dt_scale * z;
                        }
                    }
                }
            }
            IncrementKind::Circulant { sqrt_eig, fft } => {
                let m = 2 * steps;
                let mut buf = vec![Complex::new(0.0, 0.0); m];
                let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
                for pair in 0..dim.div_ceil(2) {
                    let mut rng = rng::stream(seed, Purpose::Fbm, chunk, pair as u32);
                    for s in 0..n {
                        for (b, l) in buf.iter_mut().zip(sqrt_eig) {
                            let re: f64 = rng.sample(StandardNormal);
                            let im: f64 = rng.sample(StandardNormal);
                            *b = Complex::new(l * re, l * im);
                        }
                        fft.process_with_scratch(&mut buf, &mut scratch);
                        let c0 = 2 * pair;
                        for j in 0..steps {
                            out[(s * steps + j) * dim + c0] = dt_scale * buf[j].re;
                            if c0 + 1 < dim {
                                out[(s * steps + j) * dim + c0 + 1] = dt_scale * buf[j].im;
                            }
                        }
                    }
                }
            }
            IncrementKind::Cholesky { factor } => {
                for coord in 0..dim {
                    let mut rng = rng::stream(seed, Purpose::Fbm, chunk, coord as u32);
                    for s in 0..n {
                        let path = factor * normals(&mut rng, steps);
                        let mut prev = 0.0;
                        for (j, x) in path.iter().enumerate() {
                            out[(s * steps + j) * dim + coord] = x - prev;
                            prev = *x;
                        }
                    }
                }
            }
        }
    }

    /// Full batch of trajectories (cumulative sums of the increments).
    pub fn sample(&self, dim: usize, count: usize, seed: u64) -> FbmBatch {
        let steps = self.steps;
        let parts: Vec<Vec<f64>> = chunks(count)
            .into_par_iter()
            .map(|(c, start, end)| {
                let mut out = Vec::new();
                self.fill_chunk(seed, c, end - start, dim, &mut out);
                for s in 0..end - start {
                    for j in 1..steps {
                        for coord in 0..dim {
                            out[(s * steps + j) * dim + coord] +=
                                out[(s * steps + j - 1) * dim + coord];
                        }
                    }
                }
                out
            })
            .collect();
        FbmBatch {
            hurst: self.hurst,
            grid: uniform_grid(steps, self.horizon),
            dim,
            count,
            seed,
            method: self.method(),
            values: parts.concat(),
        }
    }
}

/// Circulant-embedding sampler on the uniform grid of `[0, horizon]`,
/// falling back to Cholesky when the embedding is not nonnegative.
pub fn sample_fbm_circulant(
    steps: usize,
    horizon: f64,
    hurst: f64,
    dim: usize,
    count: usize,
    seed: u64,
) -> Result<FbmBatch> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    let sampler = match IncrementSampler::circulant(steps, horizon, hurst) {
        Ok(s) => s,
        Err(Error::Factorization(_)) => {
            eprintln!(
                "warning: circulant embedding failed for H={hurst}, steps={steps}; using Cholesky"
            );
            IncrementSampler::new(steps, horizon, hurst)?
        }
        Err(e) => return Err(e),
    };
    Ok(sampler.sample(dim, count, seed))
}
