//! Horizontal paths reaching prescribed group elements, and optimisation
//! based upper bounds for the Carnot–Carathéodory norm and the controlling
//! distances `d` and `d_R`.
//!
//! All distance values are upper bounds certified by an explicit path
//! whose endpoint log-signature matches the target.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::cameron_martin::{gram_factor, GridFunction};
use crate::error::{Error, Result};
use crate::free_lie::HallBasis;
use crate::group::{homogeneous_norm, GroupElement};
use crate::penalty::{self, fd_jacobian, PenaltySchedule};
use crate::rng::{self, Purpose};
use crate::signature::{sig_from_increments, PLPath};

/// Amplitudes of a second-kind representation
/// `g = exp(s_1 e_{i_1}) ⊗ ... ⊗ exp(s_m e_{i_m})`.
#[derive(Clone, Debug, Serialize)]
pub struct SecondKindSolve {
    pub letters: Vec<usize>,
    pub amplitudes: Vec<f64>,
    pub residual: f64,
    pub jacobian_rank: usize,
}

#[derive(Clone, Debug)]
pub struct NewtonOptions {
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            restarts: 20,
            seed: 0x5eed,
        }
    }
}

/// Exponential coordinates of the ordered product of one-letter exponentials.
pub fn second_kind_map(basis: &HallBasis, letters: &[usize], amplitudes: &[f64]) -> Vec<f64> {
    let d = basis.dim();
    let mut inc = vec![0.0; letters.len() * d];
    for (j, (&l, &s)) in letters.iter().zip(amplitudes).enumerate() {
        inc[j * d + l - 1] = s;
    }
    log_coords_of_increments(basis, &inc)
}

fn log_coords_of_increments(basis: &HallBasis, increments: &[f64]) -> Vec<f64> {
    let s = sig_from_increments(increments, basis.dim(), basis.depth());
    let l = s.log().expect("signatures are grouplike");
    basis.project(&l).expect("shapes agree").0
}

fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn numerical_rank(j: &DMatrix<f64>) -> usize {
    let sv = j.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > 1e-8 * max.max(1e-300)).count()
}

/// Cyclic letter sequence `1..d,1..d,...` of length `n + d`, extended
/// until the endpoint Jacobian has full rank at a random point.
pub fn default_letters(basis: &HallBasis, seed: u64) -> Vec<usize> {
    let (d, n) = (basis.dim(), basis.len());
    let mut rng = rng::stream(seed, Purpose::Newton, 0, 0xffff);
    let mut len = n + d;
    loop {
        let letters: Vec<usize> = (0..len).map(|j| j % d + 1).collect();
        let s: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = |a: &[f64]| second_kind_map(basis, &letters, a);
        if numerical_rank(&fd_jacobian(&f, &s, n)) == n || len > 4 * n + 4 * d {
            return letters;
        }
        len += d;
    }
}

pub fn second_kind_solve(g: &GroupElement) -> Result<SecondKindSolve> {
    let opts = NewtonOptions::default();
    let letters = default_letters(g.basis(), opts.seed);
    second_kind_solve_with(g, &letters, &opts)
}

/// Damped Gauss–Newton (minimum-norm steps) on `φ(s) = g`.
pub fn second_kind_solve_with(
    g: &GroupElement,
    letters: &[usize],
    opts: &NewtonOptions,
) -> Result<SecondKindSolve> {
    let basis = g.basis().clone();
    let n = basis.len();
    if letters.iter().any(|&l| l == 0 || l > basis.dim()) {
        return Err(Error::InvalidArgument("letter outside 1..=d".into()));
    }
    let target = g.coords();
    let tol = 1e-8 * (1.0 + g.homogeneous_norm());
    let f = |a: &[f64]| second_kind_map(&basis, letters, a);
    let resid = |a: &[f64]| -> Vec<f64> { f(a).iter().zip(target).map(|(x, y)| x - y).collect() };
    let m = letters.len();

    if target.iter().all(|x| *x == 0.0) {
        let jac = fd_jacobian(&f, &vec![0.5; m], n);
        return Ok(SecondKindSolve {
            letters: letters.to_vec(),
            amplitudes: vec![0.0; m],
            residual: 0.0,
            jacobian_rank: numerical_rank(&jac),
        });
    }

    let scale = g.homogeneous_norm().max(0.5);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for attempt in 0..opts.restarts.max(1) {
        let mut rng = rng::stream(opts.seed, Purpose::Newton, attempt as u64, 0);
        let mut s: Vec<f64> = (0..m)
            .map(|_| scale * rng.random_range(-1.0..1.0))
            .collect();
        let mut r = resid(&s);
        let mut lambda = 1e-3;
        for _ in 0..opts.max_iter {
            if euclid(&r) <= 1e-14 * (1.0 + scale) {
                break;
            }
            let jac = fd_jacobian(&f, &s, n);
            let jjt = &jac * jac.transpose();
            let rv = nalgebra::DVector::from_column_slice(&r);
            let mut improved = false;
            for _ in 0..30 {
                let damped =
                    &jjt + DMatrix::identity(n, n) * (lambda * (1.0 + jjt.trace() / n as f64));
                let Some(chol) = damped.cholesky() else {
                    lambda *= 4.0;
                    continue;
                };
                let step = -(jac.transpose() * chol.solve(&rv));
                let trial: Vec<f64> = s.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
                let rt = resid(&trial);
                if euclid(&rt) < euclid(&r) {
                    s = trial;
                    r = rt;
                    lambda = (lambda / 5.0).max(1e-15);
                    improved = true;
                    break;
                }
                lambda *= 4.0;
            }
            if !improved {
                break;
            }
        }
        let res = euclid(&r);
        if best.as_ref().is_none_or(|(b, _)| res < *b) {
            best = Some((res, s.clone()));
        }
        if res <= tol {
            break;
        }
    }
    let (residual, amplitudes) = best.expect("at least one attempt");
    if residual > tol {
        return Err(Error::NoConvergence {
            message: format!("second-kind solve with {m} letters"),
            best_residual: residual,
        });
    }
    let jac = fd_jacobian(&f, &amplitudes, n);
    Ok(SecondKindSolve {
        letters: letters.to_vec(),
        amplitudes,
        residual,
        jacobian_rank: numerical_rank(&jac),
    })
}

impl SecondKindSolve {
    /// PL path with one segment per letter, uniform times on `[0, 1]`.
    pub fn path(&self, dim: usize) -> PLPath {
        let mut points = vec![vec![0.0; dim]];
        for (&l, &s) in self.letters.iter().zip(&self.amplitudes) {
            let mut p = points.last().unwrap().clone();
            p[l - 1] += s;
            points.push(p);
        }
        PLPath::uniform(points).expect("finite amplitudes")
    }
}

/// Piecewise-linear path whose log-signature equals `g`.
pub fn chow_path(g: &GroupElement) -> Result<PLPath> {
    Ok(second_kind_solve(g)?.path(g.basis().dim()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    CcUpper,
    DValue,
    DrValue,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DistanceMode {
    #[serde(rename = "d")]
    D,
    #[serde(rename = "dR")]
    DR,
}

/// An upper bound with its certificate path.
#[derive(Clone, Debug, Serialize)]
pub struct DistanceEstimate {
    pub value: f64,
    pub kind: DistanceKind,
    #[serde(skip)]
    pub certificate: PLPath,
    /// `max_i |r_i| / |u|^{k_i}`: endpoint mismatch in dilation-normalised units.
    pub residual: f64,
    pub residual_euclidean: f64,
    pub nondegenerate: bool,
    /// Smallest singular value of the layer-scaled endpoint Jacobian.
    pub sigma_min: f64,
    pub start_index: usize,
    pub converged_starts: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct OptimizerConfig {
    pub starts: usize,
    pub seed: u64,
    /// Acceptance threshold on the normalised residual.
    pub tolerance: f64,
    /// Threshold on the smallest scaled singular value for `d_R`.
    pub rank_threshold: f64,
    #[serde(skip)]
    pub schedule: PenaltySchedule,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            starts: 8,
            seed: 2024,
            tolerance: 1e-6,
            rank_threshold: 1e-6,
            schedule: PenaltySchedule::default(),
        }
    }
}

/// One multi-start run of the penalty problem.
#[derive(Clone, Debug)]
struct StartResult {
    index: usize,
    value: f64,
    residual: f64,
    residual_euclidean: f64,
    sigma_min: f64,
    nodes: Vec<f64>,
}

/// Endpoint problem on `m` uniform nodes in normalised units
/// (target dilated to unit homogeneous norm).
struct EndpointProblem<'a> {
    basis: &'a HallBasis,
    target: Vec<f64>,
    m: usize,
}

impl EndpointProblem<'_> {
    fn increments(&self, nodes: &[f64]) -> Vec<f64> {
        let d = self.basis.dim();
        let mut inc = nodes.to_vec();
        for j in (1..self.m).rev() {
            for c in 0..d {
                inc[j * d + c] -= nodes[(j - 1) * d + c];
            }
        }
        inc
    }

    fn constraint(&self, nodes: &[f64]) -> Vec<f64> {
        let coords = log_coords_of_increments(self.basis, &self.increments(nodes));
        coords
            .iter()
            .zip(&self.target)
            .map(|(a, b)| a - b)
            .collect()
    }
}

/// Initial node values: start 0 follows the second-kind path, the others
/// add random low-frequency loops to the straight line to the endpoint.
fn initial_nodes(problem: &EndpointProblem<'_>, start: usize, seed: u64) -> Vec<f64> {
    let (d, m) = (problem.basis.dim(), problem.m);
    let v = &problem.target[..d];
    if start == 0 {
        let g = GroupElement::new(Arc::new(problem.basis.clone()), problem.target.clone()).ok();
        if let Some(path) = g.and_then(|g| chow_path(&g).ok()) {
            return resample(&path, m);
        }
    }
    let mut rng = rng::stream(seed, Purpose::Multistart, start as u64, 0);
    let coeffs: Vec<[f64; 2]> = (0..3 * d)
        .map(|_| {
            [
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            ]
        })
        .collect();
    let mut nodes = vec![0.0; m * d];
    for j in 0..m {
        let t = (j + 1) as f64 / m as f64;
        for c in 0..d {
            let mut x = t * v[c];
            for k in 0..3 {
                let [a, b] = coeffs[k * d + c];
                let w = 2.0 * std::f64::consts::PI * (k + 1) as f64 * t;
                x += 0.6 / (k + 1) as f64 * (a * (w.cos() - 1.0) + b * w.sin());
            }
            nodes[j * d + c] = x;
        }
    }
    nodes
}

/// Values of a PL path at `m` points equally spaced in its own time.
fn resample(path: &PLPath, m: usize) -> Vec<f64> {
    let times = path.times();
    let (t0, t1) = (times[0], *times.last().unwrap());
    let d = path.dim();
    let mut out = Vec::with_capacity(m * d);
    let mut seg = 0;
    for j in 1..=m {
        let t = t0 + (t1 - t0) * j as f64 / m as f64;
        while seg + 2 < times.len() && times[seg + 1] < t {
            seg += 1;
        }
        let w = ((t - times[seg]) / (times[seg + 1] - times[seg])).clamp(0.0, 1.0);
        for c in 0..d {
            out.push(path.points()[seg][c] * (1.0 - w) + path.points()[seg + 1][c] * w);
        }
    }
    out
}

#[derive(Clone, Copy)]
enum Objective {
    /// `m * sum |Δx|²`: constant-speed length squared.
    Length,
    /// Discrete Cameron–Martin norm squared for Hurst `H`.
    CameronMartin(f64),
}

fn objective_matrix(objective: Objective, m: usize, d: usize) -> Result<DMatrix<f64>> {
    let nvar = m * d;
    match objective {
        Objective::Length => {
            let s = (m as f64).sqrt();
            Ok(DMatrix::from_fn(nvar, nvar, |i, j| {
                if i == j {
                    s
                } else if i == j + d {
                    -s
                } else {
                    0.0
                }
            }))
        }
        Objective::CameronMartin(h) => {
            let grid: Vec<f64> = (1..=m).map(|j| j as f64 / m as f64).collect();
            let f = gram_factor(&grid, h)?;
            let mut linv = DMatrix::identity(m, m);
            f.lower().solve_lower_triangular_mut(&mut linv);
            // nodes are interleaved (node j, coord c) -> j*d + c
            Ok(DMatrix::from_fn(nvar, nvar, |i, j| {
                if i % d == j % d {
                    linv[(i / d, j / d)]
                } else {
                    0.0
                }
            }))
        }
    }
}

fn run_starts(
    g: &GroupElement,
    m: usize,
    objective: Objective,
    config: &OptimizerConfig,
) -> Result<(f64, Vec<StartResult>)> {
    let basis = g.basis();
    let (d, n) = (basis.dim(), basis.len());
    if m < n {
        return Err(Error::InvalidArgument(format!(
            "need at least n = {n} segments, got {m}"
        )));
    }
    let scale = g.homogeneous_norm();
    let layers = basis.degrees();
    let target: Vec<f64> = g
        .coords()
        .iter()
        .zip(layers)
        .map(|(c, &k)| c / scale.powi(k as i32))
        .collect();
    let a = objective_matrix(objective, m, d)?;
    let problem = EndpointProblem { basis, target, m };
    let results: Vec<StartResult> = (0..config.starts.max(1))
        .into_par_iter()
        .map(|start| {
            let x0 = initial_nodes(&problem, start, config.seed);
            let c = |x: &[f64]| problem.constraint(x);
            let out = penalty::solve(&a, &c, &x0, &config.schedule);
            let residual = out
                .constraint
                .iter()
                .fold(0.0f64, |acc, r| acc.max(r.abs()));
            let jac = fd_jacobian(&c, &out.x, n);
            let sigma_min = jac
                .svd(false, false)
                .singular_values
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            let value = match objective {
                Objective::Length => {
                    let inc = problem.increments(&out.x);
                    inc.chunks(d).map(euclid).sum()
                }
                Objective::CameronMartin(_) => out.objective.sqrt(),
            };
            StartResult {
                index: start,
                value,
                residual,
                residual_euclidean: euclid(&out.constraint),
                sigma_min,
                nodes: out.x,
            }
        })
        .collect();
    Ok((scale, results))
}

fn select<'a>(results: &'a [StartResult], tol: f64, rank: Option<f64>) -> Option<&'a StartResult> {
    results
        .iter()
        .filter(|r| r.residual < tol && r.value.is_finite())
        .filter(|r| rank.is_none_or(|t| r.sigma_min > t))
        .min_by(|a, b| {
            a.value
                .total_cmp(&b.value)
                .then(a.residual.total_cmp(&b.residual))
                .then(a.index.cmp(&b.index))
        })
}

fn certificate(nodes: &[f64], d: usize, scale: f64) -> PLPath {
    let mut points = vec![vec![0.0; d]];
    points.extend(
        nodes
            .chunks(d)
            .map(|p| p.iter().map(|x| x * scale).collect()),
    );
    PLPath::uniform(points).expect("finite nodes")
}

fn zero_estimate(g: &GroupElement, m: usize, kind: DistanceKind) -> DistanceEstimate {
    DistanceEstimate {
        value: 0.0,
        kind,
        certificate: PLPath::uniform(vec![vec![0.0; g.basis().dim()]; m + 1]).expect("valid"),
        residual: 0.0,
        residual_euclidean: 0.0,
        nondegenerate: false,
        sigma_min: 0.0,
        start_index: 0,
        converged_starts: 0,
    }
}

fn finish(
    g: &GroupElement,
    scale: f64,
    results: &[StartResult],
    kind: DistanceKind,
    config: &OptimizerConfig,
) -> Result<DistanceEstimate> {
    let d = g.basis().dim();
    let converged = results
        .iter()
        .filter(|r| r.residual < config.tolerance)
        .count();
    let rank = matches!(kind, DistanceKind::DrValue).then_some(config.rank_threshold);
    let Some(best) = select(results, config.tolerance, rank) else {
        if rank.is_some() && converged > 0 {
            let sigma_min = results.iter().map(|r| r.sigma_min).fold(0.0, f64::max);
            return Err(Error::RankDeficient { sigma_min });
        }
        let best_residual = results
            .iter()
            .map(|r| r.residual)
            .fold(f64::INFINITY, f64::min);
        return Err(Error::NoConvergence {
            message: format!("{kind:?} optimisation"),
            best_residual,
        });
    };
    Ok(DistanceEstimate {
        value: best.value * scale,
        kind,
        certificate: certificate(&best.nodes, d, scale),
        residual: best.residual,
        residual_euclidean: best.residual_euclidean,
        nondegenerate: best.sigma_min > config.rank_threshold,
        sigma_min: best.sigma_min,
        start_index: best.index,
        converged_starts: converged,
    })
}

/// Upper bound on `|g|_CC` by the shortest `segments`-piece PL path found.
pub fn cc_norm_estimate(
    g: &GroupElement,
    segments: usize,
    config: &OptimizerConfig,
) -> Result<DistanceEstimate> {
    if g.homogeneous_norm() == 0.0 {
        return Ok(zero_estimate(g, segments, DistanceKind::CcUpper));
    }
    let (scale, results) = run_starts(g, segments, Objective::Length, config)?;
    finish(g, scale, &results, DistanceKind::CcUpper, config)
}

/// Both controlling-distance bounds from one multi-start run.
#[derive(Clone, Debug, Serialize)]
pub struct ControllingPair {
    pub d: Result<DistanceEstimate>,
    pub d_r: Result<DistanceEstimate>,
}

impl Serialize for Error {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

fn check_controlling(hurst: f64) -> Result<()> {
    if !(hurst > 0.25 && hurst < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "Hurst parameter {hurst} outside (1/4, 1)"
        )));
    }
    Ok(())
}

pub fn controlling_distances(
    u: &GroupElement,
    hurst: f64,
    grid_size: usize,
    config: &OptimizerConfig,
) -> Result<ControllingPair> {
    check_controlling(hurst)?;
    if u.homogeneous_norm() == 0.0 {
        return Ok(ControllingPair {
            d: Ok(zero_estimate(u, grid_size, DistanceKind::DValue)),
            d_r: Err(Error::RankDeficient { sigma_min: 0.0 }),
        });
    }
    let (scale, results) = run_starts(u, grid_size, Objective::CameronMartin(hurst), config)?;
    Ok(ControllingPair {
        d: finish(u, scale, &results, DistanceKind::DValue, config),
        d_r: finish(u, scale, &results, DistanceKind::DrValue, config),
    })
}

/// Upper bound on `d(u)` or `d_R(u)` over grid functions on `grid_size`
/// uniform nodes of `[0, 1]`.
pub fn controlling_distance(
    u: &GroupElement,
    hurst: f64,
    grid_size: usize,
    mode: DistanceMode,
    config: &OptimizerConfig,
) -> Result<DistanceEstimate> {
    let pair = controlling_distances(u, hurst, grid_size, config)?;
    match mode {
        DistanceMode::D => pair.d,
        DistanceMode::DR => pair.d_r,
    }
}

/// Grid function certificate of a controlling-distance estimate.
pub fn certificate_grid_function(est: &DistanceEstimate, hurst: f64) -> Result<GridFunction> {
    let p = &est.certificate;
    GridFunction::new(p.times()[1..].to_vec(), p.points()[1..].to_vec(), hurst)
}

/// Per-sample record of an equivalence scan.
#[derive(Clone, Debug, Serialize)]
pub struct ScanSample {
    pub u: Vec<f64>,
    pub homogeneous_norm: f64,
    pub d: Option<f64>,
    pub d_r: Option<f64>,
    pub cc: Option<f64>,
    pub d_residual: Option<f64>,
    pub d_r_sigma_min: Option<f64>,
    /// `d(Δ_λ u) / (λ d(u))` when a homogeneity factor was requested.
    pub homogeneity_ratio: Option<f64>,
    pub errors: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RatioSummary {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl RatioSummary {
    fn from_values(v: impl Iterator<Item = f64>) -> Option<Self> {
        let v: Vec<f64> = v.collect();
        if v.is_empty() {
            return None;
        }
        Some(Self {
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            max: v.iter().copied().fold(0.0, f64::max),
            count: v.len(),
        })
    }

    pub fn spread(&self) -> f64 {
        self.max / self.min
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EquivalenceReport {
    pub hurst: f64,
    pub d: usize,
    pub depth: usize,
    pub grid_size: usize,
    pub samples: Vec<ScanSample>,
    pub ratio_d: Option<RatioSummary>,
    pub ratio_d_r: Option<RatioSummary>,
    pub ratio_cc: Option<RatioSummary>,
    /// Ratios bounded away from 0 and infinity across the scan.
    pub bounded: bool,
}

#[derive(Clone, Debug)]
pub struct ScanConfig {
    pub samples: usize,
    pub grid_size: usize,
    pub homogeneity_lambda: Option<f64>,
    pub include_cc: bool,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
}

/// Random points on the unit homogeneous sphere.
pub fn unit_sphere_samples(basis: &Arc<HallBasis>, count: usize, seed: u64) -> Vec<GroupElement> {
    (0..count)
        .map(|i| {
            let mut rng = rng::stream(seed, Purpose::ScanDirections, i as u64, 0);
            let z: Vec<f64> = (0..basis.len())
                .map(|_| rng.sample(StandardNormal))
                .collect();
            let norm = homogeneous_norm(&z, basis.degrees());
            let g = GroupElement::new(basis.clone(), z).expect("finite");
            g.dilate(1.0 / norm).expect("positive factor")
        })
        .collect()
}

/// Ratios `d(u)/|u|`, `d_R(u)/|u|`, `|u|_CC/|u|` over the unit sphere.
pub fn distance_equivalence_scan(
    hurst: f64,
    basis: &Arc<HallBasis>,
    config: &ScanConfig,
) -> Result<EquivalenceReport> {
    check_controlling(hurst)?;
    let points = unit_sphere_samples(basis, config.samples, config.seed);
    let mut samples = Vec::with_capacity(points.len());
    for u in &points {
        let mut rec = ScanSample {
            u: u.coords().to_vec(),
            homogeneous_norm: u.homogeneous_norm(),
            d: None,
            d_r: None,
            cc: None,
            d_residual: None,
            d_r_sigma_min: None,
            homogeneity_ratio: None,
            errors: Vec::new(),
        };
        match controlling_distances(u, hurst, config.grid_size, &config.optimizer) {
            Ok(pair) => {
                match pair.d {
                    Ok(e) => {
                        rec.d = Some(e.value);
                        rec.d_residual = Some(e.residual);
                    }
                    Err(e) => rec.errors.push(format!("d: {e}")),
                }
                match pair.d_r {
                    Ok(e) => {
                        rec.d_r = Some(e.value);
                        rec.d_r_sigma_min = Some(e.sigma_min);
                    }
                    Err(e) => rec.errors.push(format!("dR: {e}")),
                }
            }
            Err(e) => rec.errors.push(format!("d: {e}")),
        }
        if config.include_cc {
            match cc_norm_estimate(u, config.grid_size, &config.optimizer) {
                Ok(e) => rec.cc = Some(e.value),
                Err(e) => rec.errors.push(format!("cc: {e}")),
            }
        }
        if let (Some(lambda), Some(dv)) = (config.homogeneity_lambda, rec.d) {
            let scaled = u.dilate(lambda)?;
            match controlling_distance(
                &scaled,
                hurst,
                config.grid_size,
                DistanceMode::D,
                &config.optimizer,
            ) {
                Ok(e) => rec.homogeneity_ratio = Some(e.value / (lambda * dv)),
                Err(e) => rec.errors.push(format!("homogeneity: {e}")),
            }
        }
        samples.push(rec);
    }
    let ratio = |f: fn(&ScanSample) -> Option<f64>| {
        RatioSummary::from_values(
            samples
                .iter()
                .filter_map(|s| f(s).map(|v| v / s.homogeneous_norm)),
        )
    };
    let ratio_d = ratio(|s| s.d);
    let ratio_d_r = ratio(|s| s.d_r);
    let ratio_cc = ratio(|s| s.cc);
    let ok =
        |r: &Option<RatioSummary>| r.as_ref().is_some_and(|r| r.min > 0.0 && r.max.is_finite());
    let bounded = ok(&ratio_d) && ok(&ratio_d_r) && (!config.include_cc || ok(&ratio_cc));
    Ok(EquivalenceReport {
        hurst,
        d: basis.dim(),
        depth: basis.depth(),
        grid_size: config.grid_size,
        samples,
        ratio_d,
        ratio_d_r,
        ratio_cc,
        bounded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heis(c: [f64; 3]) -> GroupElement {
        GroupElement::new(HallBasis::shared(2, 2).unwrap(), c.to_vec()).unwrap()
    }

    #[test]
    fn single_letter_target() {
        let g = heis([0.7, 0.0, 0.0]);
        let sol = second_kind_solve_with(&g, &[1, 2], &NewtonOptions::default()).unwrap();
        assert!((sol.amplitudes[0] - 0.7).abs() < 1e-8);
        assert!(sol.amplitudes[1].abs() < 1e-8);
    }

    #[test]
    fn group_commutator_reaches_area() {
        let g = heis([0.0, 0.0, 1.0]);
        let sol = second_kind_solve_with(&g, &[1, 2, 1, 2], &NewtonOptions::default()).unwrap();
        assert!(sol.residual < 1e-8);
        assert_eq!(sol.jacobian_rank, 3);
        let back = second_kind_map(g.basis(), &[1, 2, 1, 2], &sol.amplitudes);
        assert!(back
            .iter()
            .zip(g.coords())
            .all(|(a, b)| (a - b).abs() < 1e-8));
        // the known solution (1, 1, -1, -1) is also exact
        let known = second_kind_map(g.basis(), &[1, 2, 1, 2], &[1.0, 1.0, -1.0, -1.0]);
        assert!(known
            .iter()
            .zip(g.coords())
            .all(|(a, b)| (a - b).abs() < 1e-14));
    }

    #[test]
    fn zero_target_gives_constant_path() {
        let p = chow_path(&heis([0.0; 3])).unwrap();
        assert!(p.points().iter().all(|x| x.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn letters_are_validated() {
        assert!(
            second_kind_solve_with(&heis([1.0, 0.0, 0.0]), &[1, 3], &NewtonOptions::default())
                .is_err()
        );
    }

    #[test]
    fn default_letters_have_full_rank() {
        let basis = HallBasis::shared(2, 3).unwrap();
        let letters = default_letters(&basis, 1);
        assert!(letters.len() >= basis.len() + 2);
        assert_eq!(&letters[..4], &[1, 2, 1, 2]);
    }

    #[test]
    fn resample_straight_path() {
        let p = PLPath::uniform(vec![vec![0.0], vec![1.0], vec![3.0]]).unwrap();
        let r = resample(&p, 4);
        assert_eq!(r, vec![0.5, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn length_matrix_gives_energy() {
        let a = objective_matrix(Objective::Length, 3, 2).unwrap();
        let x = nalgebra::DVector::from_column_slice(&[1.0, 0.0, 2.0, 0.0, 2.0, 1.0]);
        // increments (1,0), (1,0), (0,1): 3 * (1 + 1 + 1)
        assert!(((&a * x).norm_squared() - 9.0).abs() < 1e-12);
    }

    #[test]
    fn zero_target_distance_is_zero() {
        let g = heis([0.0; 3]);
        let e = cc_norm_estimate(&g, 8, &OptimizerConfig::default()).unwrap();
        assert_eq!(e.value, 0.0);
        let pair = controlling_distances(&g, 0.5, 8, &OptimizerConfig::default()).unwrap();
        assert_eq!(pair.d.unwrap().value, 0.0);
        assert!(pair.d_r.is_err());
    }

    #[test]
    fn hurst_range_is_enforced() {
        let g = heis([1.0, 0.0, 0.0]);
        let cfg = OptimizerConfig::default();
        assert!(controlling_distance(&g, 0.2, 8, DistanceMode::D, &cfg).is_err());
        assert!(controlling_distance(&g, 1.0, 8, DistanceMode::D, &cfg).is_err());
        assert!(cc_norm_estimate(&g, 2, &cfg).is_err());
    }
}
