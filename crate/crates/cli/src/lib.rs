//! `logsig` experiment runner.
//!
//! Every subcommand resolves its parameters from flags, an optional
//! `--config` file and built-in defaults, writes its reports into `--out`
//! together with the resolved `config.txt`, and exits with 0 on success,
//! 2 on invalid input and 3 on numerical failure.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;

use clap::{Arg, ArgAction, Command};

mod commands;
pub mod config;
pub mod json;

use config::{p, ExperimentConfig, Param};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(logsig_core::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<logsig_core::Error> for CliError {
    fn from(e: logsig_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_validation() => 2,
            CliError::Core(_) => 3,
        }
    }
}

pub struct Subcommand {
    pub name: &'static str,
    pub about: &'static str,
    pub params: &'static [Param],
    pub outputs: &'static str,
}

const OUT: Param = p("out", "", "output directory; empty prints the report only");
const THREADS: Param = p("threads", "0", "worker threads, 0 = machine parallelism");
const SEED: Param = p("seed", "0", "master seed for all random streams");

macro_rules! params {
    ($($x:expr),* $(,)?) => { &[$($x,)* SEED, THREADS, OUT] };
}

pub const SUBCOMMANDS: &[Subcommand] = &[
    Subcommand {
        name: "dims",
        about: "Layer dimensions, algebra dimension and Hausdorff dimension",
        params: params![p("d", "2", "number of letters"), p("N", "2", "nilpotency step")],
        outputs: "dims.json: {d, N, layer_dims, n, nu, per_depth: [{N, n, nu}]}",
    },
    Subcommand {
        name: "basis",
        about: "Lyndon basis of the free nilpotent Lie algebra",
        params: params![p("d", "2", "number of letters"), p("N", "2", "nilpotency step")],
        outputs: "basis.json: {d, N, elements: [{index, degree, word, bracket}]}",
    },
    Subcommand {
        name: "signature",
        about: "Log-signature of a piecewise-linear path read from CSV (t,x1..xd)",
        params: params![
            p("path", "", "input PLPath CSV"),
            p("d", "2", "path dimension"),
            p("N", "2", "truncation depth"),
            p("method", "exp-log", "exp-log | strichartz (N <= 3)"),
        ],
        outputs: "signature.json: {d, N, labels, log_signature, homogeneous_norm}",
    },
    Subcommand {
        name: "sample",
        about: "Monte Carlo log-signature samples of fBm",
        params: params![
            p("H", "0.5", "Hurst parameter in (1/4, 1)"),
            p("d", "2", "dimension"),
            p("N", "2", "depth"),
            p("t", "1", "time horizon"),
            p("eps", "1", "noise amplitude"),
            p("steps", "auto", "PL lift steps (auto: 256 for H >= 1/2, else 1024)"),
            p("count", "10000", "number of samples"),
            p("format", "both", "bin | csv | both"),
        ],
        outputs: "samples.bin (LSGS little-endian dump), samples.csv (sample,<labels>), sample.json: metadata and per-coordinate mean/variance",
    },
    Subcommand {
        name: "density",
        about: "Kernel density estimate of the log-signature law at given points",
        params: params![
            p("H", "0.5", "Hurst parameter in (1/4, 1)"),
            p("d", "2", "dimension"),
            p("N", "2", "depth"),
            p("t", "1", "time horizon"),
            p("eps", "1", "noise amplitude"),
            p("steps", "auto", "PL lift steps"),
            p("count", "100000", "number of samples"),
            p("points", "0,0,0", "query points: coordinates comma-separated, points semicolon-separated"),
            p("bandwidth", "auto", "auto or comma-separated per-coordinate bandwidths"),
        ],
        outputs: "density.json: {spec, estimates: [{point, value, stderr, bandwidth}]}, density.csv: point,statistic,value",
    },
    Subcommand {
        name: "scaling-check",
        about: "Density scaling law t^{Hν} p_t(Δ_{t^H} u) = p_1(u)",
        params: params![
            p("H", "0.5", "Hurst parameter in (1/4, 1)"),
            p("d", "2", "dimension"),
            p("N", "2", "depth"),
            p("t_list", "0.25,1", "times"),
            p("steps", "auto", "PL lift steps"),
            p("count", "1000000", "samples per time"),
            p("points", "auto", "query points or auto (origin and half-sd shifts)"),
        ],
        outputs: "scaling-check.json: ScalingReport, scaling-check.csv: experiment,param,statistic,value",
    },
    Subcommand {
        name: "tail",
        about: "Quadratic fit of the log-survival of the homogeneous norm",
        params: params![
            p("H", "0.5", "Hurst parameter in (1/4, 1)"),
            p("d", "2", "dimension"),
            p("N", "2", "depth"),
            p("steps", "auto", "PL lift steps"),
            p("count", "1000000", "number of samples"),
            p("r_grid", "auto", "radii or auto (survival levels 0.5 .. 1e-4)"),
        ],
        outputs: "tail.json: TailReport {r_grid, log_survival, a, b, c, pass}, tail.csv",
    },
    Subcommand {
        name: "lower-bound",
        about: "Floors of t^{Hν} p_t over the ball of radius t^H",
        params: params![
            p("H", "0.5", "Hurst parameter in (1/4, 1)"),
            p("d", "2", "dimension"),
            p("N", "2", "depth"),
            p("t_list", "0.25,0.5,1", "times"),
            p("steps", "auto", "PL lift steps"),
            p("count", "1000000", "samples per time"),
            p("points", "8", "number of query points (origin included)"),
        ],
        outputs: "lower-bound.json: LowerBoundReport, lower-bound.csv",
    },
    Subcommand {
        name: "varadhan",
        about: "Small-noise extrapolation of ε² log p_ε(u) against the d, d_R bracket",
        params: params![
            p("u", "0,0,0.2", "target log-signature coordinates"),
            p("H", "0.5", "Hurst parameter in (1/4, 1)"),
            p("d", "2", "dimension"),
            p("N", "2", "depth"),
            p("eps_list", "1,0.8,0.6,0.5,0.4", "decreasing noise levels"),
            p("steps", "auto", "PL lift steps"),
            p("count", "1000000", "samples per noise level"),
            p("lambda", "0.8", "dilation factor of the homogeneity companion"),
            p("grid", "32", "grid size for d, d_R"),
            p("scan_samples", "10", "unit-sphere samples for the lower proxy"),
            p("bias_slack", "0.1", "bias allowance relative to d_R²/2"),
            p("starts", "8", "optimizer multi-starts"),
        ],
        outputs: "varadhan.json: VaradhanReport, varadhan.csv",
    },
    Subcommand {
        name: "chow",
        about: "Piecewise-linear path reaching u by second-kind coordinates",
        params: params![
            p("u", "0,0,1", "target log-signature coordinates"),
            p("d", "2", "dimension"),
            p("N", "2", "depth"),
        ],
        outputs: "chow.json: {u, letters, amplitudes, residual, jacobian_rank}, chow_path.csv: PLPath",
    },
    Subcommand {
        name: "ccdist",
        about: "Upper bound on the Carnot-Caratheodory norm of u",
        params: params![
            p("u", "0,0,1", "target log-signature coordinates"),
            p("d", "2", "dimension"),
            p("N", "2", "depth"),
            p("segments", "64", "PL segments"),
            p("starts", "8", "optimizer multi-starts"),
        ],
        outputs: "ccdist.json: DistanceEstimate, ccdist_path.csv: certificate PLPath",
    },
    Subcommand {
        name: "cdist",
        about: "Upper bounds on the controlling distances d(u) and d_R(u)",
        params: params![
            p("u", "0,0,1", "target log-signature coordinates"),
            p("H", "0.5", "Hurst parameter in (1/4, 1)"),
            p("d", "2", "dimension"),
            p("N", "2", "depth"),
            p("grid", "32", "grid size"),
            p("mode", "both", "d | dR | both"),
            p("starts", "8", "optimizer multi-starts"),
        ],
        outputs: "cdist.json: {d, dR}, cdist_d.csv / cdist_dR.csv: certificate grid functions (t,x1..xd)",
    },
    Subcommand {
        name: "equiv-scan",
        about: "Ratios d/⦀u⦀, d_R/⦀u⦀ and CC/⦀u⦀ on the unit homogeneous sphere",
        params: params![
            p("H", "0.75", "Hurst parameter in (1/4, 1)"),
            p("d", "2", "dimension"),
            p("N", "2", "depth"),
            p("samples", "20", "sphere samples"),
            p("grid", "32", "grid size"),
            p("lambda", "none", "dilation factor for the homogeneity ratio, or none"),
            p("include_cc", "true", "also estimate CC norms"),
            p("starts", "8", "optimizer multi-starts"),
        ],
        outputs: "equiv-scan.json: EquivalenceReport, equiv-scan.csv: sample,norm,d,dR,cc,homogeneity",
    },
];

fn build_cli() -> Command {
    let mut cmd = Command::new("logsig")
        .about("Log-signatures of fractional Brownian motion on free Carnot groups")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for sub in SUBCOMMANDS {
        let mut c = Command::new(sub.name)
            .about(sub.about)
            .after_help(format!(
                "Outputs:\n  {}\n  config.txt: resolved key = value settings",
                sub.outputs
            ))
            .arg(
                Arg::new("config")
                    .long("config")
                    .value_name("FILE")
                    .help("key = value file; flags override it"),
            );
        for prm in sub.params {
            let help = if prm.default.is_empty() {
                prm.help.to_string()
            } else {
                format!("{} [default: {}]", prm.help, prm.default)
            };
            c = c.arg(
                Arg::new(prm.key)
                    .long(prm.key)
                    .value_name("VALUE")
                    .action(ArgAction::Set)
                    .allow_hyphen_values(true)
                    .help(help),
            );
        }
        cmd = cmd.subcommand(c);
    }
    cmd
}

/// Runs the CLI on `argv` (including the program name).
pub fn run(argv: &[String]) -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with(argv: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let matches = match build_cli().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let spec = SUBCOMMANDS
        .iter()
        .find(|s| s.name == name)
        .expect("declared subcommand");
    let flags: BTreeMap<String, String> = spec
        .params
        .iter()
        .filter_map(|prm| {
            sub.get_one::<String>(prm.key)
                .map(|v| (prm.key.to_string(), v.clone()))
        })
        .collect();
    let file = sub.get_one::<String>("config").map(PathBuf::from);
    let result = ExperimentConfig::resolve(name, spec.params, &flags, file.as_deref())
        .and_then(|cfg| execute(&cfg, out));
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let threads = cfg.usize("threads")?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))?;
    let files = pool.install(|| commands::dispatch(cfg))?;
    let dir = cfg.raw("out").trim();
    if !dir.is_empty() {
        let dir = PathBuf::from(dir);
        std::fs::create_dir_all(&dir)?;
        for (name, bytes) in &files.artifacts {
            std::fs::write(dir.join(name), bytes)?;
        }
        std::fs::write(dir.join("config.txt"), cfg.render())?;
    }
    out.write_all(files.summary.as_bytes())?;
    if let Some(failure) = files.failure {
        return Err(failure);
    }
    Ok(())
}
