//! Discrete Cameron–Martin norms for fractional Brownian motion.
//!
//! A path `h` with `h(0) = 0` is seen only through its values on a grid
//! `0 < t_1 < ... < t_m`. The squared norm is `sum_c h_cᵀ G⁻¹ h_c` with
//! `G_{jk} = R(t_j, t_k)`: the norm of the minimal-norm element of the
//! reproducing kernel space interpolating those values.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};
use crate::fbm::fbm_cov;
use crate::signature::PLPath;

/// Grid values of a path starting at the origin.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: Vec<f64>,
    values: Vec<Vec<f64>>,
    hurst: f64,
}

impl GridFunction {
    pub fn new(grid: Vec<f64>, values: Vec<Vec<f64>>, hurst: f64) -> Result<Self> {
        if grid.is_empty() || grid.len() != values.len() {
            return Err(Error::InvalidArgument(format!(
                "{} grid points for {} values",
                grid.len(),
                values.len()
            )));
        }
        if grid[0] <= 0.0 || grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "grid must be strictly increasing and start after 0".into(),
            ));
        }
        let d = values[0].len();
        if d == 0 || values.iter().any(|v| v.len() != d) {
            return Err(Error::InvalidArgument(
                "values must share a positive dimension".into(),
            ));
        }
        if values.iter().flatten().chain(&grid).any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite entry".into()));
        }
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "Hurst parameter {hurst} outside (0, 1)"
            )));
        }
        Ok(Self {
            grid,
            values,
            hurst,
        })
    }

    /// Samples `f` at the uniform grid `T j / m`, `j = 1..=m`.
    pub fn from_fn(
        m: usize,
        horizon: f64,
        hurst: f64,
        dim: usize,
        f: impl Fn(f64) -> Vec<f64>,
    ) -> Result<Self> {
        let grid: Vec<f64> = (1..=m).map(|j| horizon * j as f64 / m as f64).collect();
        let values = grid.iter().map(|&t| f(t)).collect::<Vec<_>>();
        if values.iter().any(|v| v.len() != dim) {
            return Err(Error::InvalidArgument(
                "function returned wrong dimension".into(),
            ));
        }
        Self::new(grid, values, hurst)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn horizon(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    pub fn endpoint(&self) -> &[f64] {
        self.values.last().unwrap()
    }

    /// Column of coordinate `c` across the grid.
    pub fn column(&self, c: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[c]).collect()
    }

    /// Piecewise-linear interpolant through the origin and the grid values.
    pub fn to_path(&self) -> PLPath {
        let mut times = vec![0.0];
        times.extend_from_slice(&self.grid);
        let mut points = vec![vec![0.0; self.dim()]];
        points.extend(self.values.iter().cloned());
        PLPath::new(times, points).expect("validated at construction")
    }

    /// Same CSV layout as [`PLPath`]; the origin row is written explicitly.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        self.to_path().write_csv(w)
    }

    /// Reads a PL path CSV whose first row is the origin at `t = 0`.
    pub fn read_csv<R: Read>(r: R, hurst: f64) -> Result<Self> {
        let path = PLPath::read_csv(r)?;
        if path.times()[0] != 0.0 || path.points()[0].iter().any(|x| *x != 0.0) {
            return Err(Error::Parse(
                "grid function CSV must start with the origin at t = 0".into(),
            ));
        }
        Self::new(
            path.times()[1..].to_vec(),
            path.points()[1..].to_vec(),
            hurst,
        )
    }
}

/// Gram matrix `G_{jk} = R(t_j, t_k)`.
pub fn cm_gram(grid: &[f64], hurst: f64) -> Result<DMatrix<f64>> {
    let m = grid.len();
    let mut g = DMatrix::zeros(m, m);
    for j in 0..m {
        for k in 0..=j {
            let r = fbm_cov(grid[j], grid[k], hurst)?;
            g[(j, k)] = r;
            g[(k, j)] = r;
        }
    }
    Ok(g)
}

/// Cholesky factorisation of a Gram matrix with diagnostics.
#[derive(Clone, Debug)]
pub struct GramFactor {
    chol: Cholesky<f64, Dyn>,
    /// Diagonal jitter added before factorising (0 when none was needed).
    pub jitter: f64,
    pub condition: f64,
}

/// Condition numbers beyond this are rejected as ill-conditioned.
pub const MAX_CONDITION: f64 = 1e13;

impl GramFactor {
    pub fn new(grid: &[f64], hurst: f64) -> Result<Self> {
        let g = cm_gram(grid, hurst)?;
        let m = grid.len();
        let eig = SymmetricEigen::new(g.clone()).eigenvalues;
        let (lo, hi) = eig
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if condition > MAX_CONDITION {
            return Err(Error::Factorization(format!(
                "Gram matrix ill-conditioned (condition {condition:.3e})"
            )));
        }
        if let Some(chol) = g.clone().cholesky() {
            return Ok(Self {
                chol,
                jitter: 0.0,
                condition,
            });
        }
        let jitter = 1e-12 * g.trace() / m as f64;
        let chol = (g + DMatrix::identity(m, m) * jitter)
            .cholesky()
            .ok_or_else(|| {
                Error::Factorization(format!("singular Gram matrix (condition {condition:.3e})"))
            })?;
        Ok(Self {
            chol,
            jitter,
            condition,
        })
    }

    pub fn lower(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// `L⁻¹ x`; its squared Euclidean norm is `xᵀ G⁻¹ x`.
    pub fn whiten(&self, x: &[f64]) -> Vec<f64> {
        let l = self.chol.l_dirty();
        let mut y = x.to_vec();
        for i in 0..y.len() {
            let mut s = y[i];
            for k in 0..i {
                s -= l[(i, k)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        y
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let sol = self.chol.solve(&DVector::from_column_slice(x));
        sol.iter().zip(x).map(|(a, b)| a * b).sum()
    }
}

type CacheKey = (Vec<u64>, u64);

fn cache() -> &'static RwLock<HashMap<CacheKey, Arc<GramFactor>>> {
    static CACHE: OnceLock<RwLock<HashMap<CacheKey, Arc<GramFactor>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

const CACHE_LIMIT: usize = 256;

/// Shared, cached factorisation for `(grid, H)`.
pub fn gram_factor(grid: &[f64], hurst: f64) -> Result<Arc<GramFactor>> {
    let key = (
        grid.iter().map(|t| t.to_bits()).collect::<Vec<_>>(),
        hurst.to_bits(),
    );
    if let Some(f) = cache().read().unwrap().get(&key) {
        return Ok(f.clone());
    }
    let f = Arc::new(GramFactor::new(grid, hurst)?);
    let mut w = cache().write().unwrap();
    if w.len() >= CACHE_LIMIT {
        w.clear();
    }
    w.insert(key, f.clone());
    Ok(f)
}

/// Discrete Cameron–Martin norm `sqrt(sum_c h_cᵀ G⁻¹ h_c)`.
pub fn cm_norm_discrete(h: &GridFunction) -> Result<f64> {
    let f = gram_factor(&h.grid, h.hurst)?;
    Ok((0..h.dim())
        .map(|c| f.quad_form(&h.column(c)))
        .sum::<f64>()
        .sqrt())
}

/// `h1` on `[0,T1]` followed by `h2` translated to start at `h1(T1)`.
pub fn concat_grid_paths(h1: &GridFunction, h2: &GridFunction) -> Result<GridFunction> {
    if h1.dim() != h2.dim() || h1.hurst != h2.hurst {
        return Err(Error::InvalidArgument(
            "concatenation needs equal dimension and Hurst parameter".into(),
        ));
    }
    let t1 = h1.horizon();
    let end = h1.endpoint().to_vec();
    let mut grid = h1.grid.clone();
    let mut values = h1.values.clone();
    for (t, v) in h2.grid.iter().zip(&h2.values) {
        grid.push(t1 + t);
        values.push(v.iter().zip(&end).map(|(a, b)| a + b).collect());
    }
    GridFunction::new(grid, values, h1.hurst)
}

/// Norms of `h` on `[0,T1]` and of `t ↦ h(T1 t / T2)` on `[0,T2]`.
/// Their ratio is `(T1/T2)^H`.
pub fn rescale_check(h: &GridFunction, t2: f64) -> Result<(f64, f64)> {
    if !(t2 > 0.0) {
        return Err(Error::InvalidArgument(
            "target horizon must be positive".into(),
        ));
    }
    let factor = t2 / h.horizon();
    let rescaled = GridFunction::new(
        h.grid.iter().map(|t| t * factor).collect(),
        h.values.clone(),
        h.hurst,
    )?;
    Ok((cm_norm_discrete(h)?, cm_norm_discrete(&rescaled)?))
}

/// `sqrt(sum |Δh|² / Δt)`, the Brownian (`H = 1/2`) Cameron–Martin norm of
/// the PL interpolant.
pub fn dirichlet_energy_norm(h: &GridFunction) -> f64 {
    let mut prev_t = 0.0;
    let mut prev = vec![0.0; h.dim()];
    let mut total = 0.0;
    for (t, v) in h.grid.iter().zip(&h.values) {
        let dt = t - prev_t;
        total += v
            .iter()
            .zip(&prev)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / dt;
        prev_t = *t;
        prev = v.clone();
    }
    total.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_gram() {
        let g = cm_gram(&[1.0], 0.7).unwrap();
        assert_eq!(g[(0, 0)], 1.0);
    }

    #[test]
    fn brownian_gram_is_min() {
        let grid: Vec<f64> = (1..=6).map(|j| j as f64 / 6.0).collect();
        let g = cm_gram(&grid, 0.5).unwrap();
        for j in 0..6 {
            for k in 0..6 {
                assert!((g[(j, k)] - grid[j].min(grid[k])).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn linear_path_has_unit_brownian_norm() {
        let h = GridFunction::from_fn(10, 1.0, 0.5, 1, |t| vec![t]).unwrap();
        assert!((cm_norm_discrete(&h).unwrap() - 1.0).abs() < 1e-12);
        let grid = vec![0.1, 0.15, 0.5, 0.9, 1.0];
        let h =
            GridFunction::new(grid.clone(), grid.iter().map(|t| vec![*t]).collect(), 0.5).unwrap();
        assert!((cm_norm_discrete(&h).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn concat_with_zero_path_extends_constant() {
        let h1 = GridFunction::from_fn(4, 1.0, 0.6, 2, |t| vec![t, -t]).unwrap();
        let zero = GridFunction::from_fn(3, 0.5, 0.6, 2, |_| vec![0.0, 0.0]).unwrap();
        let c = concat_grid_paths(&h1, &zero).unwrap();
        assert_eq!(c.grid().len(), 7);
        assert!((c.horizon() - 1.5).abs() < 1e-15);
        for v in &c.values()[4..] {
            assert_eq!(v, &vec![1.0, -1.0]);
        }
    }

    #[test]
    fn concat_endpoint() {
        let h1 = GridFunction::from_fn(4, 1.0, 0.6, 1, |t| vec![t * t]).unwrap();
        let h2 = GridFunction::from_fn(5, 2.0, 0.6, 1, |t| vec![-t]).unwrap();
        let c = concat_grid_paths(&h1, &h2).unwrap();
        assert!((c.endpoint()[0] - (1.0 - 2.0)).abs() < 1e-15);
        let h3 = GridFunction::from_fn(5, 2.0, 0.7, 1, |t| vec![-t]).unwrap();
        assert!(concat_grid_paths(&h1, &h3).is_err());
    }

    #[test]
    fn rescaling_identity_cases() {
        let h = GridFunction::from_fn(8, 1.0, 0.5, 1, |t| vec![t]).unwrap();
        let (a, b) = rescale_check(&h, 1.0).unwrap();
        assert!((a - b).abs() < 1e-15);
        let (a, b) = rescale_check(&h, 2.0).unwrap();
        assert!((b / a - 0.5f64.sqrt()).abs() < 1e-12);
        assert!(rescale_check(&h, 0.0).is_err());
    }

    #[test]
    fn invalid_grid_functions() {
        assert!(GridFunction::new(vec![0.0, 1.0], vec![vec![0.0], vec![1.0]], 0.5).is_err());
        assert!(GridFunction::new(vec![1.0], vec![vec![0.0]], 1.0).is_err());
        assert!(GridFunction::new(vec![1.0, 2.0], vec![vec![0.0]], 0.5).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let h = GridFunction::from_fn(3, 1.0, 0.6, 2, |t| vec![t, 1.0 - t]).unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        assert_eq!(GridFunction::read_csv(&buf[..], 0.6).unwrap(), h);
    }

    #[test]
    fn whitening_matches_quadratic_form() {
        let grid: Vec<f64> = (1..=12).map(|j| j as f64 / 12.0).collect();
        let f = GramFactor::new(&grid, 0.3).unwrap();
        let x: Vec<f64> = grid.iter().map(|t| (3.0 * t).sin()).collect();
        let w: f64 = f.whiten(&x).iter().map(|y| y * y).sum();
        assert!((w - f.quad_form(&x)).abs() < 1e-9 * w);
        assert_eq!(f.jitter, 0.0);
    }
}
