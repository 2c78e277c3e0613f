use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wrdae::harness::{compare_methods, radius_estimates, run_experiment, validate_config, ExperimentConfig, Method, StopMode};
use wrdae::stages::{SolveTrace, TimeLoopMode};
use wrdae::Error;

#[derive(Parser)]
#[command(name = "wrdae", version, about = "Waveform relaxation experiments for linear DAEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one method and write its error series.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run several methods on the same problem and write one aligned table.
    Compare {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Comma-separated method names (default: all).
        #[arg(long, value_delimiter = ',')]
        methods: Vec<Method>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check splitting and partition identities.
    Validate {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Estimate the spectral radius of each method's iteration operator.
    Radius {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn on_off(s: &str) -> Result<bool, String> {
    match s {
        "on" | "true" => Ok(true),
        "off" | "false" => Ok(false),
        _ => Err(format!("expected on or off, got '{s}'")),
    }
}

/// A config file plus one override flag per config key.
#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    dcoef: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    t0: Option<f64>,
    #[arg(long)]
    dx: Option<f64>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    stop: Option<StopMode>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    cap: Option<usize>,
    #[arg(long)]
    outer: Option<usize>,
    #[arg(long)]
    inner: Option<usize>,
    #[arg(long)]
    innermost: Option<usize>,
    #[arg(long)]
    mode: Option<TimeLoopMode>,
    #[arg(long)]
    overlap: Option<String>,
    /// Also sets alpha2 = 1 - alpha1 unless alpha2 is given.
    #[arg(long)]
    alpha1: Option<f64>,
    #[arg(long)]
    alpha2: Option<f64>,
    /// Also sets alpha4 = 1 - alpha3 unless alpha4 is given.
    #[arg(long)]
    alpha3: Option<f64>,
    #[arg(long)]
    alpha4: Option<f64>,
    #[arg(long, value_parser = on_off)]
    guard: Option<bool>,
    #[arg(long)]
    fast: Option<u8>,
    #[arg(long = "mixing_row")]
    mixing_row: Option<usize>,
    #[arg(long = "n1_scale")]
    n1_scale: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

macro_rules! apply {
    ($cfg:ident, $args:ident; $($field:ident),*) => {
        $( if let Some(v) = $args.$field.clone() { $cfg.$field = v; } )*
    };
}

macro_rules! apply_opt {
    ($cfg:ident, $args:ident; $($field:ident),*) => {
        $( if $args.$field.is_some() { $cfg.$field = $args.$field; } )*
    };
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        let args = self;
        apply!(cfg, args; p, q, dcoef, h, steps, t0, dx, method, stop, mode, overlap, guard, fast, mixing_row, n1_scale, seed);
        apply_opt!(cfg, args; tol, cap, outer, inner, innermost);
        if let Some(a) = self.alpha1 {
            cfg.alpha1 = a;
            cfg.alpha2 = self.alpha2.unwrap_or(1.0 - a);
        } else if let Some(a) = self.alpha2 {
            cfg.alpha2 = a;
        }
        if let Some(a) = self.alpha3 {
            cfg.alpha3 = a;
            cfg.alpha4 = self.alpha4.unwrap_or(1.0 - a);
        } else if let Some(a) = self.alpha4 {
            cfg.alpha4 = a;
        }
        Ok(cfg)
    }
}

fn open_out(path: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn work_summary(label: &str, trace: &SolveTrace) -> String {
    format!(
        "{label}: outer {} | solves diagonal {} tridiagonal {} banded {} | factorizations {}",
        trace.total_outer(),
        trace.diagonal_solves,
        trace.tridiagonal_solves,
        trace.banded_solves,
        trace.factorizations
    )
}

fn fail(err: &Error, cfg: Option<&ExperimentConfig>) -> u8 {
    eprintln!("error: {err}");
    if let Some(cfg) = cfg {
        eprintln!("config:\n{}", cfg.to_toml_string());
    }
    err.exit_code() as u8
}

fn run(cfg: &ConfigArgs, out: &Option<PathBuf>) -> u8 {
    let cfg = match cfg.resolve() {
        Ok(c) => c,
        Err(e) => return fail(&e, None),
    };
    let result = run_experiment(&cfg).and_then(|o| {
        o.series.write_csv(open_out(out)?)?;
        Ok(o)
    });
    match result {
        Ok(o) => {
            eprintln!("{}", work_summary(cfg.method.label(), &o.trace));
            if let Some(g) = &o.guard {
                for e in g.switched_off() {
                    eprintln!("guard: mixing switched off at step {} iteration {}", e.step, e.iteration);
                }
            }
            0
        }
        Err(e) => fail(&e, Some(&cfg)),
    }
}

fn compare(cfg: &ConfigArgs, methods: &[Method], out: &Option<PathBuf>) -> u8 {
    let base = match cfg.resolve() {
        Ok(c) => c,
        Err(e) => return fail(&e, None),
    };
    let methods: &[Method] = if methods.is_empty() { &Method::ALL } else { methods };
    let cfgs: Vec<ExperimentConfig> = methods.iter().map(|&m| base.with_method(m)).collect();
    let cmp = match compare_methods(&cfgs) {
        Ok(c) => c,
        Err(e) => return fail(&e, Some(&base)),
    };
    if let Err(e) = open_out(out).map_err(Error::from).and_then(|w| cmp.write_csv(w)) {
        return fail(&e, None);
    }
    for (label, r) in &cmp.runs {
        match r {
            Ok(o) => eprintln!("{}", work_summary(label, &o.trace)),
            Err(e) => eprintln!("{label}: FAILED: {e}"),
        }
    }
    let code = cmp.exit_code();
    if code != 0 {
        eprintln!("diverged: {}", cmp.failed().join(", "));
    }
    code as u8
}

fn validate(cfg: &ConfigArgs) -> u8 {
    let cfg = match cfg.resolve() {
        Ok(c) => c,
        Err(e) => return fail(&e, None),
    };
    match validate_config(&cfg) {
        Ok(report) => {
            print!("{report}");
            if report.passed() {
                0
            } else {
                Error::Validation(String::new()).exit_code() as u8
            }
        }
        Err(e) => fail(&e, Some(&cfg)),
    }
}

fn radius(cfg: &ConfigArgs) -> u8 {
    let cfg = match cfg.resolve() {
        Ok(c) => c,
        Err(e) => return fail(&e, None),
    };
    match radius_estimates(&cfg) {
        Ok(list) => {
            for (method, rho) in list {
                println!("{method},{rho}");
            }
            0
        }
        Err(e) => fail(&e, Some(&cfg)),
    }
}

fn dispatch(cli: &Cli) -> u8 {
    match &cli.command {
        Command::Run { cfg, out } => run(cfg, out),
        Command::Compare { cfg, methods, out } => compare(cfg, methods, out),
        Command::Validate { cfg } => validate(cfg),
        Command::Radius { cfg } => radius(cfg),
    }
}

fn main() -> ExitCode {
    ExitCode::from(dispatch(&Cli::parse()))
}
