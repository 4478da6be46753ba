//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any criterion fails.

use std::path::Path;
use std::time::{Duration, Instant};

use logsig_core::cameron_martin::{
    cm_gram, cm_norm_discrete, dirichlet_energy_norm, rescale_check,
};
use logsig_core::chow::{self, second_kind_solve, OptimizerConfig, ScanConfig};
use logsig_core::density::{self, ExperimentSpec, VaradhanConfig};
use logsig_core::fbm::{fbm_cov, sample_fbm_cholesky, sample_fbm_circulant, uniform_grid};
use logsig_core::free_lie::layer_dims;
use logsig_core::rng::{self, Purpose};
use logsig_core::signature::{chen_strichartz_logsig, log_sig_pl_path, sig_pl_path};
use logsig_core::stats::{self, ks_two_sample};
use logsig_core::{GridFunction, GroupElement, HallBasis, PLPath, TruncatedTensor};
use rand::Rng;

type Check = (bool, String);

fn uniform(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn random_tensor(rng: &mut impl Rng, d: usize, n: usize, scalar: f64) -> TruncatedTensor {
    let mut levels: Vec<Vec<f64>> = (0..=n).map(|k| uniform(rng, d.pow(k as u32))).collect();
    levels[0][0] = scalar;
    TruncatedTensor::from_levels(d, levels).unwrap()
}

fn random_path(rng: &mut impl Rng, d: usize, segments: usize) -> PLPath {
    let inc: Vec<Vec<f64>> = (0..segments).map(|_| uniform(rng, d)).collect();
    PLPath::from_increments(&inc).unwrap()
}

fn necklaces(d: usize, len: usize) -> usize {
    (0..d.pow(len as u32))
        .filter(|&code| {
            let w: Vec<usize> = (0..len)
                .map(|i| (code / d.pow((len - 1 - i) as u32)) % d)
                .collect();
            (1..len).all(|r| w < w[r..].iter().chain(&w[..r]).copied().collect::<Vec<_>>())
        })
        .count()
}

fn algebra_suite() -> Check {
    let start = Instant::now();
    let mut witt_ok = true;
    for d in [2, 3] {
        for n in 1..=5 {
            for (j, &k) in layer_dims(d, n).iter().enumerate() {
                witt_ok &= k == necklaces(d, j + 1);
            }
        }
    }
    let mut rng = rng::stream(101, Purpose::Test, 0, 0);
    let (mut explog, mut assoc, mut chen) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let (d, n) = if rng.random_bool(0.5) { (2, 4) } else { (3, 3) };
        let x = random_tensor(&mut rng, d, n, 0.0);
        explog = explog.max(x.exp().unwrap().log().unwrap().max_abs_diff(&x));
        let y = random_tensor(&mut rng, d, n, 1.0);
        explog = explog.max(y.log().unwrap().exp().unwrap().max_abs_diff(&y));
        let (a, b, c) = (
            random_tensor(&mut rng, d, n, 1.0),
            random_tensor(&mut rng, d, n, 0.5),
            random_tensor(&mut rng, d, n, -1.0),
        );
        let l = a.mul(&b).unwrap().mul(&c).unwrap();
        let r = a.mul(&b.mul(&c).unwrap()).unwrap();
        assoc = assoc.max(l.max_abs_diff(&r));
        let (sp, sq) = (1 + rng.random_range(0..5), 1 + rng.random_range(0..5));
        let p = random_path(&mut rng, d, sp);
        let q = random_path(&mut rng, d, sq);
        let joined = sig_pl_path(&p.concat(&q).unwrap(), n);
        let product = sig_pl_path(&p, n).mul(&sig_pl_path(&q, n)).unwrap();
        chen = chen.max(joined.max_abs_diff(&product));
    }
    let elapsed = start.elapsed();
    let pass = witt_ok
        && explog < 1e-11
        && assoc < 1e-11
        && chen < 1e-11
        && elapsed < Duration::from_secs(10);
    (pass, format!("witt={witt_ok} exp/log={explog:.2e} assoc={assoc:.2e} chen={chen:.2e} time={elapsed:.1?}"))
}

fn chen_strichartz() -> Check {
    let start = Instant::now();
    let basis = HallBasis::shared(2, 3).unwrap();
    let mut rng = rng::stream(102, Purpose::Test, 0, 0);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let segments = 1 + rng.random_range(0..8);
        let p = random_path(&mut rng, 2, segments);
        let a = chen_strichartz_logsig(&p, &basis).unwrap();
        let b = log_sig_pl_path(&p, &basis).unwrap();
        worst = worst.max(a.max_abs_diff(&b));
    }
    let elapsed = start.elapsed();
    (
        worst < 1e-9 && elapsed < Duration::from_secs(30),
        format!("max gap {worst:.2e} time={elapsed:.1?}"),
    )
}

fn square_loop() -> Check {
    let basis = HallBasis::shared(2, 2).unwrap();
    let p = PLPath::uniform(vec![
        vec![0.0, 0.0],
        vec![1.0, 0.0],
        vec![1.0, 1.0],
        vec![0.0, 1.0],
        vec![0.0, 0.0],
    ])
    .unwrap();
    let g = log_sig_pl_path(&p, &basis).unwrap();
    let target = GroupElement::new(basis, vec![0.0, 0.0, 1.0]).unwrap();
    let gap = g.max_abs_diff(&target);
    (
        gap < 1e-12,
        format!("log-signature {:?}, gap {gap:.2e}", g.coords()),
    )
}

fn fbm_sampler() -> Check {
    let start = Instant::now();
    let grid = uniform_grid(8, 1.0);
    let count = 100_000;
    let mut worst_z = 0.0f64;
    let mut ks_min_p = 1.0f64;
    for (i, h) in [0.3, 0.5, 0.75].into_iter().enumerate() {
        let circ = sample_fbm_circulant(8, 1.0, h, 1, count, 400 + i as u64).unwrap();
        for a in 0..8 {
            for b in 0..=a {
                let prod: Vec<f64> = circ
                    .marginal(a, 0)
                    .iter()
                    .zip(circ.marginal(b, 0))
                    .map(|(x, y)| x * y)
                    .collect();
                let se = (stats::variance(&prod) / count as f64).sqrt();
                let z = (stats::mean(&prod) - fbm_cov(grid[a], grid[b], h).unwrap()).abs() / se;
                worst_z = worst_z.max(z);
            }
        }
        let chol = sample_fbm_cholesky(&grid, h, 1, count, 500 + i as u64).unwrap();
        for point in [3, 7] {
            ks_min_p = ks_min_p
                .min(ks_two_sample(&circ.marginal(point, 0), &chol.marginal(point, 0)).p_value);
        }
    }
    let elapsed = start.elapsed();
    let pass = worst_z <= 3.0 && ks_min_p > 0.01 && elapsed < Duration::from_secs(60);
    (
        pass,
        format!(
            "max |z| {worst_z:.2} over 108 entries, min KS p {ks_min_p:.3}, time={elapsed:.1?}"
        ),
    )
}

fn cameron_martin() -> Check {
    let grid = uniform_grid(16, 1.0);
    let mut repro = 0.0f64;
    let mut rescale = 0.0f64;
    for h in [0.3, 0.5, 0.75] {
        let g = cm_gram(&grid, h).unwrap();
        for j in [0, 7, 15] {
            let values = (0..16).map(|i| vec![g[(i, j)]]).collect();
            let f = GridFunction::new(grid.clone(), values, h).unwrap();
            let n2 = cm_norm_discrete(&f).unwrap().powi(2);
            repro = repro.max((n2 - g[(j, j)]).abs() / g[(j, j)]);
        }
        let f = GridFunction::from_fn(16, 1.0, h, 2, |t| vec![(2.0 * t).sin(), t * t - t]).unwrap();
        for t2 in [0.5, 3.0] {
            let (before, after) = rescale_check(&f, t2).unwrap();
            rescale = rescale.max((after / before - (1.0 / t2).powf(h)).abs());
        }
    }
    let f =
        GridFunction::from_fn(32, 1.0, 0.5, 2, |t| vec![(3.0 * t).cos() - 1.0, t.powi(3)]).unwrap();
    let a = cm_norm_discrete(&f).unwrap();
    let dirichlet = (a - dirichlet_energy_norm(&f)).abs() / a;
    let pass = repro < 1e-10 && rescale < 1e-10 && dirichlet < 1e-12;
    (
        pass,
        format!("reproducing {repro:.2e}, rescaling {rescale:.2e}, dirichlet {dirichlet:.2e}"),
    )
}

fn chow_solver() -> Check {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut failures = 0;
    for depth in [2, 3] {
        let basis = HallBasis::shared(2, depth).unwrap();
        let mut rng = rng::stream(106, Purpose::Test, depth as u64, 0);
        for _ in 0..50 {
            let g = GroupElement::new(basis.clone(), uniform(&mut rng, basis.len())).unwrap();
            match second_kind_solve(&g) {
                Ok(sol) => {
                    let back = log_sig_pl_path(&sol.path(2), &basis).unwrap();
                    worst = worst.max(back.max_abs_diff(&g));
                }
                Err(_) => failures += 1,
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = failures == 0 && worst < 1e-8 && elapsed < Duration::from_secs(60);
    (
        pass,
        format!("100 targets, failures {failures}, max residual {worst:.2e}, time={elapsed:.1?}"),
    )
}

fn cc_norm() -> Check {
    let basis = HallBasis::shared(2, 2).unwrap();
    let cfg = OptimizerConfig::default();
    let oracle = 2.0 * std::f64::consts::PI.sqrt();
    let area = GroupElement::new(basis.clone(), vec![0.0, 0.0, 1.0]).unwrap();
    let est = chow::cc_norm_estimate(&area, 64, &cfg).unwrap().value;
    let area_err = (est - oracle).abs() / oracle;
    let mut line_err = 0.0f64;
    for v in [[1.0, 0.0], [0.6, -0.8], [-1.5, 2.0]] {
        let g = GroupElement::new(basis.clone(), vec![v[0], v[1], 0.0]).unwrap();
        let e = chow::cc_norm_estimate(&g, 16, &cfg).unwrap().value;
        line_err = line_err.max((e - v[0].hypot(v[1])).abs() / v[0].hypot(v[1]));
    }
    let g = GroupElement::new(basis, vec![0.3, -0.2, 0.5]).unwrap();
    let e1 = chow::cc_norm_estimate(&g, 32, &cfg).unwrap().value;
    let e2 = chow::cc_norm_estimate(&g.dilate(2.0).unwrap(), 32, &cfg)
        .unwrap()
        .value;
    let homog = (e2 / (2.0 * e1) - 1.0).abs();
    let pass = area_err < 0.05 && line_err < 0.01 && homog < 0.03;
    (
        pass,
        format!(
            "(0,0,1): {est:.4} vs {oracle:.4} ({:.2}%), first layer {:.2}%, homogeneity {:.2}%",
            100.0 * area_err,
            100.0 * line_err,
            100.0 * homog
        ),
    )
}

fn brownian_controlling() -> Check {
    let start = Instant::now();
    let basis = HallBasis::shared(2, 2).unwrap();
    let cfg = ScanConfig {
        samples: 10,
        grid_size: 32,
        homogeneity_lambda: None,
        include_cc: true,
        seed: 108,
        optimizer: OptimizerConfig::default(),
    };
    let rep = chow::distance_equivalence_scan(0.5, &basis, &cfg).unwrap();
    let mut worst = 0.0f64;
    let mut compared = 0;
    let mut order_ok = true;
    for s in &rep.samples {
        if let (Some(d), Some(cc)) = (s.d, s.cc) {
            worst = worst.max((d - cc).abs() / cc);
            compared += 1;
        }
        if let (Some(d), Some(dr)) = (s.d, s.d_r) {
            order_ok &= d <= dr;
        }
    }
    let elapsed = start.elapsed();
    let pass = compared == 10 && worst < 0.05 && order_ok && elapsed < Duration::from_secs(600);
    (pass, format!("{compared}/10 compared, max |d - cc|/cc {worst:.2e}, d <= dR {order_ok}, time={elapsed:.1?}"))
}

fn scaling_law() -> Check {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, h) in [0.5, 0.75].into_iter().enumerate() {
        let spec = ExperimentSpec::new(h, 2, 2, 1_000_000, 109 + i as u64);
        let r = density::scaling_check(&spec, &[0.25, 1.0], None).unwrap();
        pass &= r.pass;
        parts.push(format!(
            "H={h}: max deviation {:.2}%",
            100.0 * r.max_deviation
        ));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(900);
    (pass, format!("{}, time={elapsed:.1?}", parts.join(", ")))
}

fn gaussian_tail() -> Check {
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, h) in [0.5, 0.75].into_iter().enumerate() {
        let r = density::tail_check(
            &ExperimentSpec::new(h, 2, 2, 1_000_000, 110 + i as u64),
            None,
        )
        .unwrap();
        pass &= r.pass;
        parts.push(format!(
            "H={h}: a={:.4} |a|r²={:.2} |b|r={:.2}",
            r.a, r.quadratic_term, r.linear_term
        ));
    }
    let control =
        density::tail_check(&ExperimentSpec::new(0.5, 2, 1, 1_000_000, 112), None).unwrap();
    let rel = (control.a / -0.5 - 1.0).abs();
    pass &= rel < 0.15;
    parts.push(format!(
        "N=1 control a={:.4} ({:.1}% from -1/2)",
        control.a,
        100.0 * rel
    ));
    (pass, parts.join(", "))
}

fn local_lower_bound() -> Check {
    let spec = ExperimentSpec::new(0.5, 2, 2, 1_000_000, 113);
    let r = density::local_lower_bound_check(&spec, &[0.25, 0.5, 1.0], 8).unwrap();
    let floors: Vec<String> = r
        .entries
        .iter()
        .map(|e| format!("{:.4}", e.floor))
        .collect();
    let origin = r
        .entries
        .iter()
        .find(|e| e.t == 1.0)
        .map(|e| e.values[0])
        .unwrap_or(0.0);
    let pass = r.pass && origin > 0.0;
    (
        pass,
        format!(
            "floors [{}], ratio {:.3}, positive {}, p1(0) {origin:.4}",
            floors.join(", "),
            r.floor_ratio,
            r.entries.iter().all(|e| e.positive)
        ),
    )
}

fn varadhan() -> Check {
    let start = Instant::now();
    let spec = ExperimentSpec::new(0.5, 2, 2, 1_000_000, 114);
    let r = density::varadhan_check(&spec, &[0.0, 0.0, 0.2], &VaradhanConfig::default()).unwrap();
    let elapsed = start.elapsed();
    let pass = r.in_bracket
        && r.homogeneity_pass
        && r.d_r_upper.is_some()
        && elapsed < Duration::from_secs(1800);
    (
        pass,
        format!(
            "limit {:.4} ± {:.4} in [{:.4}, {:.4}] (dR {:.4}, d_low {:.4}), homogeneity {:.3}, time={elapsed:.1?}",
            r.extrapolation.limit,
            r.extrapolation.limit_stderr,
            r.bracket[0],
            r.bracket[1],
            r.d_r_upper.unwrap_or(f64::NAN),
            r.d_low,
            r.homogeneity_ratio
        ),
    )
}

fn cli(args: &[&str]) -> i32 {
    let argv: Vec<String> = std::iter::once("logsig")
        .chain(args.iter().copied())
        .map(String::from)
        .collect();
    logsig_cli::run_with(&argv, &mut std::io::sink(), &mut std::io::sink())
}

fn same_reports(a: &Path, b: &Path) -> Result<usize, String> {
    let mut n = 0;
    for entry in std::fs::read_dir(a).map_err(|e| e.to_string())? {
        let name = entry.map_err(|e| e.to_string())?.file_name();
        if name == "config.txt" {
            continue;
        }
        let (x, y) = (std::fs::read(a.join(&name)), std::fs::read(b.join(&name)));
        match (x, y) {
            (Ok(x), Ok(y)) if x == y => n += 1,
            _ => return Err(format!("{} differs", name.to_string_lossy())),
        }
    }
    Ok(n)
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let runs: &[&[&str]] = &[
        &["sample", "--H", "0.75", "--count", "3000", "--seed", "7"],
        &[
            "density",
            "--H",
            "0.4",
            "--count",
            "5000",
            "--points",
            "0,0,0;0.3,0,0.1",
            "--seed",
            "8",
        ],
        &["scaling-check", "--count", "20000", "--seed", "9"],
        &["tail", "--H", "0.6", "--count", "200000", "--seed", "10"],
        &[
            "lower-bound",
            "--count",
            "20000",
            "--points",
            "3",
            "--seed",
            "11",
        ],
        &[
            "varadhan",
            "--count",
            "20000",
            "--scan_samples",
            "2",
            "--grid",
            "12",
            "--starts",
            "2",
            "--seed",
            "12",
        ],
        &["chow", "--u", "0.5,-0.2,0.3"],
        &[
            "ccdist",
            "--u",
            "0.1,0.2,0.3",
            "--segments",
            "12",
            "--starts",
            "3",
        ],
        &[
            "cdist",
            "--u",
            "0.1,0.2,0.3",
            "--H",
            "0.7",
            "--grid",
            "12",
            "--starts",
            "3",
        ],
        &[
            "equiv-scan",
            "--samples",
            "2",
            "--grid",
            "10",
            "--starts",
            "2",
            "--lambda",
            "1.5",
        ],
        &["dims", "--d", "3", "--N", "4"],
        &["basis", "--d", "2", "--N", "4"],
        &["signature", "--method", "strichartz"],
    ];
    let mut files = 0;
    for (i, args) in runs.iter().enumerate() {
        let first = dir.path().join(format!("run{i}"));
        let second = dir.path().join(format!("rerun{i}"));
        let mut argv: Vec<&str> = args.to_vec();
        let chow_csv = dir
            .path()
            .join("run6")
            .join("chow_path.csv")
            .to_string_lossy()
            .to_string();
        if args[0] == "signature" {
            argv.extend(["--path", &chow_csv]);
        }
        let first_s = first.to_string_lossy().to_string();
        argv.extend(["--out", &first_s, "--threads", "1"]);
        if cli(&argv) != 0 {
            return (false, format!("{} failed", args[0]));
        }
        let cfg = first.join("config.txt").to_string_lossy().to_string();
        let second_s = second.to_string_lossy().to_string();
        if cli(&[
            args[0],
            "--config",
            &cfg,
            "--out",
            &second_s,
            "--threads",
            "3",
        ]) != 0
        {
            return (false, format!("{} rerun failed", args[0]));
        }
        match same_reports(&first, &second) {
            Ok(n) => files += n,
            Err(e) => return (false, format!("{}: {e}", args[0])),
        }
    }
    (
        true,
        format!(
            "{} subcommands, {files} artifacts byte-identical on rerun from config",
            runs.len()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Check); 13] = [
        ("algebra suite", algebra_suite),
        ("Chen-Strichartz equivalence", chen_strichartz),
        ("square loop", square_loop),
        ("fBm sampler", fbm_sampler),
        ("Cameron-Martin identities", cameron_martin),
        ("Chow solver", chow_solver),
        ("CC norm", cc_norm),
        ("Brownian controlling distance", brownian_controlling),
        ("density scaling law", scaling_law),
        ("Gaussian tail", gaussian_tail),
        ("local lower bound", local_lower_bound),
        ("Varadhan bracket", varadhan),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = f();
        println!(
            "criterion {:>2} {:<30} {} ({detail}) [{:.1?}]",
            i + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            start.elapsed()
        );
        if !pass {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 13 criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
