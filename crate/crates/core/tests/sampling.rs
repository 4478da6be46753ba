use logsig_core::cameron_martin::{
    cm_gram, cm_norm_discrete, dirichlet_energy_norm, rescale_check,
};
use logsig_core::density::{kde_density, mc_logsig_samples, Bandwidth, SampleSpec};
use logsig_core::fbm::{fbm_cov, sample_fbm_cholesky, sample_fbm_circulant, uniform_grid};
use logsig_core::group::dilate_coords;
use logsig_core::stats::{self, ks_one_sample, ks_two_sample, normal_cdf};
use logsig_core::GridFunction;

#[test]
fn fbm_covariance_within_three_sigma() {
    let grid = uniform_grid(8, 1.0);
    for h in [0.3, 0.75] {
        let batch = sample_fbm_circulant(8, 1.0, h, 1, 20_000, 4).unwrap();
        for i in 0..8 {
            for j in 0..=i {
                let (a, b) = (batch.marginal(i, 0), batch.marginal(j, 0));
                let prod: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
                let est = stats::mean(&prod);
                let se = (stats::variance(&prod) / prod.len() as f64).sqrt();
                let exact = fbm_cov(grid[i], grid[j], h).unwrap();
                assert!(
                    (est - exact).abs() < 3.5 * se,
                    "H={h} ({i},{j}): {est} vs {exact} ± {se}"
                );
            }
        }
    }
}

#[test]
fn circulant_and_cholesky_agree_in_law() {
    let grid = uniform_grid(16, 1.0);
    let a = sample_fbm_circulant(16, 1.0, 0.3, 1, 5000, 1).unwrap();
    let b = sample_fbm_cholesky(&grid, 0.3, 1, 5000, 2).unwrap();
    for point in [3, 15] {
        assert!(ks_two_sample(&a.marginal(point, 0), &b.marginal(point, 0)).passes(0.01));
    }
}

#[test]
fn reproducing_kernel_sections_have_exact_norms() {
    // h = R(·, s_j) on the grid has |h|² = R(s_j, s_j)
    let grid = uniform_grid(12, 1.0);
    for h in [0.3, 0.5, 0.8] {
        let g = cm_gram(&grid, h).unwrap();
        for j in [0, 5, 11] {
            let values: Vec<Vec<f64>> = (0..12).map(|i| vec![g[(i, j)]]).collect();
            let f = GridFunction::new(grid.clone(), values, h).unwrap();
            let n2 = cm_norm_discrete(&f).unwrap().powi(2);
            assert!(
                (n2 - g[(j, j)]).abs() < 1e-9 * g[(j, j)].max(1.0),
                "H={h} j={j}"
            );
        }
    }
}

#[test]
fn rescaling_and_dirichlet_identities() {
    for h in [0.35, 0.6, 0.9] {
        let f = GridFunction::from_fn(16, 1.0, h, 2, |t| vec![t.sin(), t * t]).unwrap();
        let (before, after) = rescale_check(&f, 2.5).unwrap();
        assert!((after / before - (1.0f64 / 2.5).powf(h)).abs() < 1e-10);
    }
    let f =
        GridFunction::from_fn(20, 1.0, 0.5, 2, |t| vec![(3.0 * t).cos() - 1.0, t.powi(3)]).unwrap();
    let a = cm_norm_discrete(&f).unwrap();
    assert!((a - dirichlet_energy_norm(&f)).abs() < 1e-12 * a.max(1.0));
}

#[test]
fn first_layer_marginal_is_gaussian() {
    let spec = SampleSpec {
        steps: 64,
        ..SampleSpec::new(0.7, 0.5, 2, 2, 20_000, 8)
    };
    let set = mc_logsig_samples(&spec).unwrap();
    let sd = 0.5f64.powf(0.7);
    for j in 0..2 {
        assert!(ks_one_sample(&set.coordinate(j), |x| normal_cdf(x / sd)).passes(0.01));
    }
}

#[test]
fn area_is_symmetric_and_matches_discrete_variance() {
    let m = 64;
    let spec = SampleSpec {
        steps: m,
        ..SampleSpec::new(0.5, 1.0, 2, 2, 100_000, 9)
    };
    let set = mc_logsig_samples(&spec).unwrap();
    let area = set.coordinate(2);
    let flipped: Vec<f64> = area.iter().map(|x| -x).collect();
    assert!(ks_two_sample(&area[..50_000], &flipped[50_000..]).passes(0.01));
    // PL lift on m steps: Var = (1 - 1/m) / 4, exact for Brownian increments
    let exact = 0.25 * (1.0 - 1.0 / m as f64);
    let v = stats::variance(&area);
    let sq: Vec<f64> = area.iter().map(|x| x * x).collect();
    let se = (stats::variance(&sq) / sq.len() as f64).sqrt();
    assert!((v - exact).abs() < 3.0 * se, "{v} vs {exact} ± {se}");
    // refinement 64 -> 640 changes the exact variance by under 2%
    assert!((exact / (0.25 * (1.0 - 1.0 / 640.0)) - 1.0).abs() < 0.02);
}

#[test]
fn dilation_covariance_of_the_law() {
    let c = 0.3;
    let h = 0.65;
    let one = mc_logsig_samples(&SampleSpec {
        steps: 64,
        ..SampleSpec::new(h, 1.0, 2, 2, 40_000, 10)
    })
    .unwrap();
    let at_c = mc_logsig_samples(&SampleSpec {
        steps: 64,
        ..SampleSpec::new(h, c, 2, 2, 40_000, 11)
    })
    .unwrap();
    let layers = one.basis().degrees().to_vec();
    let dilated: Vec<Vec<f64>> = one
        .samples()
        .chunks(3)
        .map(|u| dilate_coords(u, &layers, c.powf(h)))
        .collect();
    for j in 0..3 {
        let a: Vec<f64> = dilated.iter().map(|u| u[j]).collect();
        let b = at_c.coordinate(j);
        let se_m = ((stats::variance(&a) + stats::variance(&b)) / a.len() as f64).sqrt();
        assert!((stats::mean(&a) - stats::mean(&b)).abs() < 3.0 * se_m);
        let sa: Vec<f64> = a.iter().map(|x| x * x).collect();
        let sb: Vec<f64> = b.iter().map(|x| x * x).collect();
        let se_v = ((stats::variance(&sa) + stats::variance(&sb)) / a.len() as f64).sqrt();
        assert!(
            (stats::mean(&sa) - stats::mean(&sb)).abs() < 3.0 * se_v,
            "coordinate {j}"
        );
    }
}

#[test]
fn kde_is_seed_invariant() {
    let make = |seed| {
        mc_logsig_samples(&SampleSpec {
            steps: 64,
            ..SampleSpec::new(0.5, 1.0, 2, 2, 100_000, seed)
        })
        .unwrap()
    };
    let (a, b) = (make(1), make(2));
    let u = [0.2, -0.1, 0.05];
    let ea = kde_density(&a, &u, &Bandwidth::Auto).unwrap();
    let eb = kde_density(&b, &u, &Bandwidth::Auto).unwrap();
    assert!((ea.value - eb.value).abs() < 3.0 * (ea.stderr.powi(2) + eb.stderr.powi(2)).sqrt());
    assert!(ea.relative_error() < 0.1);
}

#[test]
fn kde_box_mass_matches_empirical_mass() {
    let set = mc_logsig_samples(&SampleSpec {
        steps: 64,
        ..SampleSpec::new(0.5, 1.0, 2, 1, 100_000, 3)
    })
    .unwrap();
    // midpoint rule over [-1, 1]² on a 20 × 20 grid
    let k = 20;
    let cell = 2.0 / k as f64;
    let mut integral = 0.0;
    for i in 0..k {
        for j in 0..k {
            let u = [
                -1.0 + (i as f64 + 0.5) * cell,
                -1.0 + (j as f64 + 0.5) * cell,
            ];
            integral += kde_density(&set, &u, &Bandwidth::Auto).unwrap().value * cell * cell;
        }
    }
    let inside = (0..set.len())
        .filter(|&i| set.sample(i).iter().all(|x| x.abs() <= 1.0))
        .count() as f64;
    let mass = inside / set.len() as f64;
    assert!(
        (integral - mass).abs() / mass < 0.05,
        "{integral} vs {mass}"
    );
}
