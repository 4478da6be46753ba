use std::path::Path;

use serde::Serialize;
use serde_json::json;

use logsig_core::chow::{
    self, certificate_grid_function, DistanceEstimate, OptimizerConfig, ScanConfig,
};
use logsig_core::density::{
    self, default_steps, kde_density, mc_logsig_samples, write_rows_csv, Bandwidth, ExperimentSpec,
    SampleSpec, VaradhanConfig,
};
use logsig_core::free_lie::{algebra_dim, hausdorff_dim, layer_dims};
use logsig_core::signature::{chen_strichartz_logsig, fmt_f64, log_sig_pl_path};
use logsig_core::stats;
use logsig_core::{GroupElement, HallBasis, PLPath};

use crate::config::ExperimentConfig;
use crate::{json, CliError};

pub struct Output {
    pub summary: String,
    pub artifacts: Vec<(String, Vec<u8>)>,
    pub failure: Option<CliError>,
}

impl Output {
    fn report<T: Serialize>(name: &str, report: &T) -> Self {
        let text = json::to_string(report);
        Self {
            summary: text.clone(),
            artifacts: vec![(format!("{name}.json"), text.into_bytes())],
            failure: None,
        }
    }

    fn with(mut self, name: impl Into<String>, bytes: Vec<u8>) -> Self {
        self.artifacts.push((name.into(), bytes));
        self
    }
}

pub fn dispatch(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    match cfg.subcommand.as_str() {
        "dims" => dims(cfg),
        "basis" => basis(cfg),
        "signature" => signature(cfg),
        "sample" => sample(cfg),
        "density" => density_cmd(cfg),
        "scaling-check" => scaling(cfg),
        "tail" => tail(cfg),
        "lower-bound" => lower_bound(cfg),
        "varadhan" => varadhan(cfg),
        "chow" => chow_cmd(cfg),
        "ccdist" => ccdist(cfg),
        "cdist" => cdist(cfg),
        "equiv-scan" => equiv_scan(cfg),
        other => Err(CliError::Usage(format!("unknown subcommand {other}"))),
    }
}

fn echo(cfg: &ExperimentConfig) -> serde_json::Value {
    let mut map = serde_json::Map::new();
    map.insert("subcommand".into(), json!(cfg.subcommand));
    for (k, v) in &cfg.entries {
        if k != "out" && k != "threads" {
            map.insert(k.clone(), json!(v));
        }
    }
    serde_json::Value::Object(map)
}

fn shape(cfg: &ExperimentConfig) -> Result<(usize, usize), CliError> {
    let (d, n) = (cfg.usize("d")?, cfg.usize("N")?);
    if d == 0 || n == 0 {
        return Err(CliError::Usage("d and N must be positive".into()));
    }
    Ok((d, n))
}

fn hurst(cfg: &ExperimentConfig) -> Result<f64, CliError> {
    let h = cfg.f64("H")?;
    if !(h > 0.25 && h < 1.0) {
        return Err(CliError::Usage(format!("H = {h} outside (1/4, 1)")));
    }
    Ok(h)
}

fn steps(cfg: &ExperimentConfig, h: f64) -> Result<usize, CliError> {
    match cfg.optional("steps") {
        None => Ok(default_steps(h)),
        Some(_) => cfg.usize("steps"),
    }
}

fn experiment(cfg: &ExperimentConfig) -> Result<ExperimentSpec, CliError> {
    let h = hurst(cfg)?;
    let (d, n) = shape(cfg)?;
    Ok(ExperimentSpec {
        steps: steps(cfg, h)?,
        ..ExperimentSpec::new(h, d, n, cfg.usize("count")?, cfg.u64("seed")?)
    })
}

fn target(cfg: &ExperimentConfig) -> Result<GroupElement, CliError> {
    let (d, n) = shape(cfg)?;
    let basis = HallBasis::shared(d, n)?;
    Ok(GroupElement::new(basis, cfg.list("u")?)?)
}

fn optimizer(cfg: &ExperimentConfig) -> Result<OptimizerConfig, CliError> {
    Ok(OptimizerConfig {
        starts: cfg.usize("starts")?,
        seed: cfg.u64("seed")?,
        ..OptimizerConfig::default()
    })
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> logsig_core::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn rows_csv(rows: &[density::ReportRow]) -> Result<Vec<u8>, CliError> {
    csv_bytes(|b| write_rows_csv(rows, b))
}

fn dims(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let (d, n) = shape(cfg)?;
    let per_depth: Vec<_> = (1..=n)
        .map(|k| json!({"N": k, "n": algebra_dim(d, k), "nu": hausdorff_dim(d, k)}))
        .collect();
    let report = json!({
        "d": d,
        "N": n,
        "layer_dims": layer_dims(d, n),
        "n": algebra_dim(d, n),
        "nu": hausdorff_dim(d, n),
        "per_depth": per_depth,
    });
    Ok(Output::report("dims", &report))
}

fn basis(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let (d, n) = shape(cfg)?;
    let b = HallBasis::new(d, n)?;
    let elements: Vec<_> = b
        .trees()
        .iter()
        .enumerate()
        .map(|(i, t)| json!({"index": i, "degree": b.degrees()[i], "word": b.words()[i], "bracket": t.to_string()}))
        .collect();
    Ok(Output::report(
        "basis",
        &json!({"d": d, "N": n, "elements": elements}),
    ))
}

fn signature(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let (d, n) = shape(cfg)?;
    let file = cfg.raw("path").trim();
    if file.is_empty() {
        return Err(CliError::Usage("--path is required".into()));
    }
    let path = PLPath::load_csv(Path::new(file))?;
    if path.dim() != d {
        return Err(CliError::Usage(format!(
            "path has dimension {}, expected d = {d}",
            path.dim()
        )));
    }
    let basis = HallBasis::shared(d, n)?;
    let g = match cfg.raw("method").trim() {
        "exp-log" => log_sig_pl_path(&path, &basis)?,
        "strichartz" => chen_strichartz_logsig(&path, &basis)?,
        m => return Err(CliError::Usage(format!("unknown method {m}"))),
    };
    let report = json!({
        "config": echo(cfg),
        "d": d,
        "N": n,
        "labels": basis.labels(),
        "log_signature": g.coords(),
        "homogeneous_norm": g.homogeneous_norm(),
    });
    Ok(Output::report("signature", &report))
}

fn sample(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let ex = experiment(cfg)?;
    let spec = SampleSpec {
        hurst: ex.hurst,
        t: cfg.f64("t")?,
        epsilon: cfg.f64("eps")?,
        dim: ex.dim,
        depth: ex.depth,
        steps: ex.steps,
        count: ex.count,
        seed: ex.seed,
    };
    let format = cfg.raw("format").trim().to_string();
    if !matches!(format.as_str(), "bin" | "csv" | "both") {
        return Err(CliError::Usage(format!("unknown format {format}")));
    }
    let set = mc_logsig_samples(&spec)?;
    let moments: Vec<_> = (0..set.n())
        .map(|j| {
            let x = set.coordinate(j);
            json!({"label": set.basis().labels()[j], "mean": stats::mean(&x), "variance": stats::variance(&x)})
        })
        .collect();
    let report = json!({"config": echo(cfg), "spec": spec, "method": format!("{:?}", set.method), "moments": moments});
    let mut out = Output::report("sample", &report);
    if format != "csv" {
        out = out.with("samples.bin", csv_bytes(|b| set.write_binary(b))?);
    }
    if format != "bin" {
        out = out.with("samples.csv", csv_bytes(|b| set.write_csv(b))?);
    }
    Ok(out)
}

fn density_cmd(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let ex = experiment(cfg)?;
    let spec = SampleSpec {
        hurst: ex.hurst,
        t: cfg.f64("t")?,
        epsilon: cfg.f64("eps")?,
        dim: ex.dim,
        depth: ex.depth,
        steps: ex.steps,
        count: ex.count,
        seed: ex.seed,
    };
    let bandwidth = match cfg.optional("bandwidth") {
        None => Bandwidth::Auto,
        Some(_) => Bandwidth::Fixed(cfg.list("bandwidth")?),
    };
    let set = mc_logsig_samples(&spec)?;
    let estimates = cfg
        .points("points")?
        .iter()
        .map(|u| kde_density(&set, u, &bandwidth))
        .collect::<logsig_core::Result<Vec<_>>>()?;
    let mut csv = String::from("point,statistic,value\n");
    for (i, e) in estimates.iter().enumerate() {
        csv.push_str(&format!(
            "{i},value,{}\n{i},stderr,{}\n",
            fmt_f64(e.value),
            fmt_f64(e.stderr)
        ));
    }
    let report = json!({"config": echo(cfg), "spec": spec, "estimates": estimates});
    Ok(Output::report("density", &report).with("density.csv", csv.into_bytes()))
}

#[derive(Serialize)]
struct Wrapped<'a, T: Serialize> {
    config: serde_json::Value,
    report: &'a T,
}

fn wrapped<T: Serialize>(
    name: &str,
    cfg: &ExperimentConfig,
    report: &T,
    rows: &[density::ReportRow],
) -> Result<Output, CliError> {
    let w = Wrapped {
        config: echo(cfg),
        report,
    };
    Ok(Output::report(name, &w).with(format!("{name}.csv"), rows_csv(rows)?))
}

fn scaling(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let ex = experiment(cfg)?;
    let points = match cfg.optional("points") {
        None => None,
        Some(_) => Some(cfg.points("points")?),
    };
    let r = density::scaling_check(&ex, &cfg.list("t_list")?, points)?;
    wrapped("scaling-check", cfg, &r, &r.rows())
}

fn tail(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let ex = experiment(cfg)?;
    let grid = match cfg.optional("r_grid") {
        None => None,
        Some(_) => Some(cfg.list("r_grid")?),
    };
    let r = density::tail_check(&ex, grid)?;
    wrapped("tail", cfg, &r, &r.rows())
}

fn lower_bound(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let ex = experiment(cfg)?;
    let r = density::local_lower_bound_check(&ex, &cfg.list("t_list")?, cfg.usize("points")?)?;
    wrapped("lower-bound", cfg, &r, &r.rows())
}

fn varadhan(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let ex = experiment(cfg)?;
    let vc = VaradhanConfig {
        eps_list: cfg.list("eps_list")?,
        lambda: cfg.f64("lambda")?,
        grid_size: cfg.usize("grid")?,
        scan_samples: cfg.usize("scan_samples")?,
        bias_slack: cfg.f64("bias_slack")?,
        optimizer: optimizer(cfg)?,
    };
    let r = density::varadhan_check(&ex, &cfg.list("u")?, &vc)?;
    wrapped("varadhan", cfg, &r, &r.rows())
}

fn chow_cmd(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let g = target(cfg)?;
    let sol = chow::second_kind_solve(&g)?;
    let path = sol.path(g.basis().dim());
    let report =
        json!({"config": echo(cfg), "u": g.coords(), "solve": sol, "segments": path.segments()});
    Ok(Output::report("chow", &report).with("chow_path.csv", csv_bytes(|b| path.write_csv(b))?))
}

fn estimate_json(e: &DistanceEstimate, certificate: &str) -> serde_json::Value {
    let mut v = serde_json::to_value(e).expect("serializable");
    v["certificate_path_ref"] = json!(certificate);
    v["upper_bound"] = json!(true);
    v
}

fn ccdist(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let g = target(cfg)?;
    let e = chow::cc_norm_estimate(&g, cfg.usize("segments")?, &optimizer(cfg)?)?;
    let report = json!({"config": echo(cfg), "u": g.coords(), "estimate": estimate_json(&e, "ccdist_path.csv")});
    Ok(Output::report("ccdist", &report).with(
        "ccdist_path.csv",
        csv_bytes(|b| e.certificate.write_csv(b))?,
    ))
}

fn cdist(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let g = target(cfg)?;
    let h = hurst(cfg)?;
    let mode = cfg.raw("mode").trim().to_string();
    let (want_d, want_r) = match mode.as_str() {
        "d" => (true, false),
        "dR" => (false, true),
        "both" => (true, true),
        m => return Err(CliError::Usage(format!("unknown mode {m}"))),
    };
    let pair = chow::controlling_distances(&g, h, cfg.usize("grid")?, &optimizer(cfg)?)?;
    let mut report = json!({"config": echo(cfg), "u": g.coords(), "rank": g.basis().len()});
    let mut artifacts = Vec::new();
    let mut failure = None;
    for (wanted, key, file, res) in [
        (want_d, "d", "cdist_d.csv", pair.d),
        (want_r, "dR", "cdist_dR.csv", pair.d_r),
    ] {
        if !wanted {
            continue;
        }
        match res {
            Ok(e) => {
                let gf = certificate_grid_function(&e, h)?;
                artifacts.push((file.to_string(), csv_bytes(|b| gf.write_csv(b))?));
                report[key] = estimate_json(&e, file);
            }
            Err(e) => {
                report[key] = json!({"error": e.to_string()});
                failure.get_or_insert(CliError::Core(e));
            }
        }
    }
    let mut out = Output::report("cdist", &report);
    out.artifacts.extend(artifacts);
    out.failure = failure;
    Ok(out)
}

fn equiv_scan(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let h = hurst(cfg)?;
    let (d, n) = shape(cfg)?;
    let basis = HallBasis::shared(d, n)?;
    let lambda = match cfg.optional("lambda") {
        None => None,
        Some(_) => Some(cfg.f64("lambda")?),
    };
    let sc = ScanConfig {
        samples: cfg.usize("samples")?,
        grid_size: cfg.usize("grid")?,
        homogeneity_lambda: lambda,
        include_cc: cfg.bool("include_cc")?,
        seed: cfg.u64("seed")?,
        optimizer: optimizer(cfg)?,
    };
    let r = chow::distance_equivalence_scan(h, &basis, &sc)?;
    let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
    let mut csv = String::from("sample,norm,d,dR,cc,homogeneity\n");
    for (i, s) in r.samples.iter().enumerate() {
        csv.push_str(&format!(
            "{i},{},{},{},{},{}\n",
            fmt_f64(s.homogeneous_norm),
            opt(s.d),
            opt(s.d_r),
            opt(s.cc),
            opt(s.homogeneity_ratio)
        ));
    }
    let w = Wrapped {
        config: echo(cfg),
        report: &r,
    };
    Ok(Output::report("equiv-scan", &w).with("equiv-scan.csv", csv.into_bytes()))
}
