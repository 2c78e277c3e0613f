//! Error metrics, experiment configuration, and the comparison runner behind the CLI.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dae::{analytic_solution, build_transport_problem_on, ManufacturedCase, TimeGrid};
use crate::error::{Error, Result};
use crate::linalg::spectral_radius_estimate;
use crate::multisplit::{ms_iteration_operator, ms_run, MixingGuardState, MsMethod, MsOptions};
use crate::splittings::{
    build_partition, standard_stage_splittings, standard_subproblem_splittings, validate_partition, validate_stage,
    validate_subproblems, OverlapShape, PartitionOfUnity, StageSplittings, SubproblemSplitting, ValidationReport,
};
use crate::stages::{iteration_operator, wr_run, SolveTrace, StageDepth, StoppingCriterion, TimeLoopMode, Trajectory};

/// Power iterations used by [`radius_estimates`].
pub const RADIUS_ITERS: usize = 400;

/// `(1/dx)·‖y_ana(t) − numerical‖₂`.
pub fn err_l2(numerical: &[f64], t: f64, dx: f64) -> Result<f64> {
    if !(dx > 0.0) {
        return Err(Error::config(format!("dx must be positive, got {dx}")));
    }
    let exact = analytic_solution(t, numerical.len())?;
    Ok(crate::linalg::vector::dist2(&exact, numerical) / dx)
}

/// `max_i |y_ana,i(t) − numerical_i|`.
pub fn err_max(numerical: &[f64], t: f64) -> Result<f64> {
    let exact = analytic_solution(t, numerical.len())?;
    Ok(crate::linalg::vector::max_abs_diff(&exact, numerical))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    OneStage,
    TwoStage,
    ThreeStage,
    MsJacobi,
    MsGsSerial,
    MsGsDecoupled,
    MsGsCoupled,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::OneStage,
        Method::TwoStage,
        Method::ThreeStage,
        Method::MsJacobi,
        Method::MsGsSerial,
        Method::MsGsDecoupled,
        Method::MsGsCoupled,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Method::OneStage => "one-stage",
            Method::TwoStage => "two-stage",
            Method::ThreeStage => "three-stage",
            Method::MsJacobi => "ms-jacobi",
            Method::MsGsSerial => "ms-gs-serial",
            Method::MsGsDecoupled => "ms-gs-decoupled",
            Method::MsGsCoupled => "ms-gs-coupled",
        }
    }

    pub fn depth(&self) -> Option<StageDepth> {
        match self {
            Method::OneStage => Some(StageDepth::One),
            Method::TwoStage => Some(StageDepth::Two),
            Method::ThreeStage => Some(StageDepth::Three),
            _ => None,
        }
    }

    pub fn ms_method(&self, fast: u8) -> Option<MsMethod> {
        match self {
            Method::MsJacobi => Some(MsMethod::Jacobi),
            Method::MsGsSerial => Some(MsMethod::GSSerial),
            Method::MsGsDecoupled => Some(MsMethod::GSDecoupled),
            Method::MsGsCoupled => Some(MsMethod::GSCoupled { fast }),
            _ => None,
        }
    }

    /// Stopping settings of the reference experiment.
    pub fn preset_stop(&self) -> StoppingCriterion {
        match self {
            Method::TwoStage => StoppingCriterion::FixedIters { outer: 5, inner: 4, innermost: 1 },
            Method::ThreeStage => StoppingCriterion::FixedIters { outer: 5, inner: 2, innermost: 2 },
            _ => StoppingCriterion::ErrorBound { tol: 1e-3, max_iters: PRESET_CAP },
        }
    }
}

/// Outer-iteration cap for the error-bound methods under the preset.
pub const PRESET_CAP: usize = 200;

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| Error::config(format!("unknown method '{s}'")))
    }
}

/// How the stopping criterion is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopMode {
    /// Per-method reference settings; explicit tol/cap or
    /// outer/inner/innermost override the matching fields.
    Preset,
    /// Error bound for every method.
    Tol,
    /// Fixed iteration counts for every method.
    Fixed,
}

impl FromStr for StopMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "preset" => Ok(StopMode::Preset),
            "tol" => Ok(StopMode::Tol),
            "fixed" => Ok(StopMode::Fixed),
            other => Err(Error::config(format!("unknown stop mode '{other}' (preset, tol or fixed)"))),
        }
    }
}

/// A flat key-value experiment description; every key is also a CLI flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub p: usize,
    pub q: usize,
    pub dcoef: f64,
    pub h: f64,
    pub steps: usize,
    pub t0: f64,
    pub dx: f64,
    pub method: Method,
    pub stop: StopMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cap: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outer: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inner: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub innermost: Option<usize>,
    pub mode: TimeLoopMode,
    /// "1", "max", or a width that resolves to one of them for the given m.
    pub overlap: String,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
    pub guard: bool,
    pub fast: u8,
    pub mixing_row: usize,
    /// Scales the stage splitting's N_1 with M_1 held fixed; values other than 1
    /// make the splitting inconsistent and the iteration divergent.
    pub n1_scale: f64,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            p: 50,
            q: 6,
            dcoef: 1.0,
            h: 0.1,
            steps: 20,
            t0: 0.0,
            dx: 1.0,
            method: Method::OneStage,
            stop: StopMode::Preset,
            tol: None,
            cap: None,
            outer: None,
            inner: None,
            innermost: None,
            mode: TimeLoopMode::Stepwise,
            overlap: "1".into(),
            alpha1: 0.5,
            alpha2: 0.5,
            alpha3: 0.5,
            alpha4: 0.5,
            guard: false,
            fast: 1,
            mixing_row: 1,
            n1_scale: 1.0,
            seed: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("bad config: {}", e.message())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    pub fn with_method(&self, method: Method) -> Self {
        ExperimentConfig { method, ..self.clone() }
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.t0, self.h, self.steps)
    }

    pub fn build_case(&self) -> Result<ManufacturedCase> {
        build_transport_problem_on(self.p, self.q, self.dcoef, self.grid()?)
    }

    pub fn alphas(&self) -> [f64; 4] {
        [self.alpha1, self.alpha2, self.alpha3, self.alpha4]
    }

    pub fn overlap_shape(&self, m: usize) -> Result<OverlapShape> {
        match OverlapShape::from_str(&self.overlap) {
            Ok(shape) => Ok(shape),
            Err(_) => {
                let o: usize = self
                    .overlap
                    .parse()
                    .map_err(|_| Error::config(format!("overlap '{}' is not 1, max, or a width", self.overlap)))?;
                OverlapShape::from_width(m, o)
            }
        }
    }

    pub fn stopping(&self) -> Result<StoppingCriterion> {
        let stop = match self.stop {
            StopMode::Preset => match self.method.preset_stop() {
                StoppingCriterion::ErrorBound { tol, max_iters } => StoppingCriterion::ErrorBound {
                    tol: self.tol.unwrap_or(tol),
                    max_iters: self.cap.unwrap_or(max_iters),
                },
                StoppingCriterion::FixedIters { outer, inner, innermost } => StoppingCriterion::FixedIters {
                    outer: self.outer.unwrap_or(outer),
                    inner: self.inner.unwrap_or(inner),
                    innermost: self.innermost.unwrap_or(innermost),
                },
            },
            StopMode::Tol => StoppingCriterion::ErrorBound {
                tol: self.tol.unwrap_or(1e-3),
                max_iters: self.cap.unwrap_or(10_000),
            },
            StopMode::Fixed => StoppingCriterion::FixedIters {
                outer: self.outer.unwrap_or(5),
                inner: self.inner.unwrap_or(1),
                innermost: self.innermost.unwrap_or(1),
            },
        };
        stop.validate()?;
        Ok(stop)
    }

    /// Same matrices and time grid.
    pub fn same_problem(&self, other: &ExperimentConfig) -> bool {
        (self.p, self.q, self.steps) == (other.p, other.q, other.steps)
            && (self.dcoef, self.h, self.t0, self.dx) == (other.dcoef, other.h, other.t0, other.dx)
    }

    fn stage_splittings(&self, case: &ManufacturedCase) -> Result<StageSplittings> {
        let pr = &case.problem;
        standard_stage_splittings(&pr.a, &pr.b, self.dcoef, self.n1_scale)
    }

    fn subproblems(&self, case: &ManufacturedCase) -> Result<([SubproblemSplitting; 2], PartitionOfUnity)> {
        let pr = &case.problem;
        let subs = standard_subproblem_splittings(&pr.a, &pr.b, self.dcoef)?;
        let m = case.m();
        let part = build_partition(m, self.overlap_shape(m)?, self.alphas())?;
        Ok((subs, part))
    }

    fn ms_options(&self) -> MsOptions {
        MsOptions { guard: self.guard, mixing_row: self.mixing_row, fault: None }
    }
}

/// Errors of one run against the analytic solution, one row per grid time.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSeries {
    pub label: String,
    pub times: Vec<f64>,
    pub err_l2: Vec<f64>,
    pub err_max: Vec<f64>,
    /// Outer iterations spent on the step ending at each time (0 at t0).
    pub iters: Vec<usize>,
}

impl ErrorSeries {
    pub fn from_trajectory(label: &str, traj: &Trajectory, trace: &SolveTrace, dx: f64) -> Result<Self> {
        let mut err_l2s = Vec::with_capacity(traj.times.len());
        let mut err_maxs = Vec::with_capacity(traj.times.len());
        for (y, &t) in traj.states.iter().zip(&traj.times) {
            err_l2s.push(err_l2(y, t, dx)?);
            err_maxs.push(err_max(y, t)?);
        }
        let mut iters = vec![0; traj.times.len()];
        for rec in &trace.steps {
            if rec.step < iters.len() {
                iters[rec.step] = rec.outer;
            }
        }
        Ok(ErrorSeries { label: label.to_string(), times: traj.times.clone(), err_l2: err_l2s, err_max: err_maxs, iters })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Largest rowwise gap between two err_max series.
    pub fn max_err_gap(&self, other: &ErrorSeries) -> f64 {
        self.err_max.iter().zip(&other.err_max).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "err_l2", "err_max"]).map_err(csv_err)?;
        for i in 0..self.len() {
            w.write_record([fmt_f64(self.times[i]), fmt_f64(self.err_l2[i]), fmt_f64(self.err_max[i])])
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest decimal that parses back to the same value.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.into())
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub series: ErrorSeries,
    pub trajectory: Trajectory,
    pub trace: SolveTrace,
    pub guard: Option<MixingGuardState>,
}

/// Build the problem and splittings, run the configured method, and evaluate both error norms.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let case = cfg.build_case()?;
    let stop = cfg.stopping()?;
    let label = cfg.method.label();
    let (trajectory, trace, guard) = match (cfg.method.depth(), cfg.method.ms_method(cfg.fast)) {
        (Some(depth), _) => {
            let s = cfg.stage_splittings(&case)?;
            let (traj, trace) = wr_run(&case.problem, &s, depth, stop, cfg.mode)?;
            (traj, trace, None)
        }
        (None, Some(ms)) => {
            let (subs, part) = cfg.subproblems(&case)?;
            let (traj, trace, guard) = ms_run(&case.problem, &subs, &part, ms, stop, &cfg.ms_options())?;
            (traj, trace, Some(guard))
        }
        (None, None) => unreachable!("every method is a stage or a multisplitting method"),
    };
    let series = ErrorSeries::from_trajectory(label, &trajectory, &trace, cfg.dx)?;
    Ok(ExperimentOutput { series, trajectory, trace, guard })
}

/// Side-by-side runs on a shared problem.
#[derive(Debug)]
pub struct Comparison {
    pub times: Vec<f64>,
    pub runs: Vec<(String, Result<ExperimentOutput>)>,
}

impl Comparison {
    /// Labels of runs that failed to converge (or failed otherwise).
    pub fn failed(&self) -> Vec<&str> {
        self.runs.iter().filter(|(_, r)| r.is_err()).map(|(l, _)| l.as_str()).collect()
    }

    pub fn series(&self, label: &str) -> Option<&ErrorSeries> {
        self.runs.iter().find(|(l, _)| l == label).and_then(|(_, r)| r.as_ref().ok()).map(|o| &o.series)
    }

    /// Exit status: the first failure's code, or 0.
    pub fn exit_code(&self) -> i32 {
        self.runs.iter().find_map(|(_, r)| r.as_ref().err().map(Error::exit_code)).unwrap_or(0)
    }

    /// `t,<label>_l2,<label>_max,...,<label>_iters,...`; failed runs fill their columns with NaN.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        for (label, _) in &self.runs {
            header.push(format!("{label}_l2"));
            header.push(format!("{label}_max"));
        }
        for (label, _) in &self.runs {
            header.push(format!("{label}_iters"));
        }
        w.write_record(&header).map_err(csv_err)?;
        let nan = fmt_f64(f64::NAN);
        for (i, &t) in self.times.iter().enumerate() {
            let mut row = vec![fmt_f64(t)];
            for (_, r) in &self.runs {
                match r {
                    Ok(o) => {
                        row.push(fmt_f64(o.series.err_l2[i]));
                        row.push(fmt_f64(o.series.err_max[i]));
                    }
                    Err(_) => {
                        row.push(nan.clone());
                        row.push(nan.clone());
                    }
                }
            }
            for (_, r) in &self.runs {
                row.push(match r {
                    Ok(o) => o.series.iters[i].to_string(),
                    Err(_) => String::new(),
                });
            }
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Run every configuration concurrently; all must describe the same problem.
pub fn compare_methods(cfgs: &[ExperimentConfig]) -> Result<Comparison> {
    let first = cfgs.first().ok_or_else(|| Error::config("no methods to compare"))?;
    if let Some(bad) = cfgs.iter().find(|c| !first.same_problem(c)) {
        return Err(Error::config(format!(
            "method {} uses a different problem or grid than {}",
            bad.method, first.method
        )));
    }
    let mut labels: Vec<&str> = cfgs.iter().map(|c| c.method.label()).collect();
    labels.sort_unstable();
    if labels.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::config("each method may appear only once in a comparison"));
    }
    let times = first.grid()?.times();
    let runs = cfgs
        .par_iter()
        .map(|c| (c.method.label().to_string(), run_experiment(c)))
        .collect();
    Ok(Comparison { times, runs })
}

/// Run splitting and partition validators for a configuration.
pub fn validate_config(cfg: &ExperimentConfig) -> Result<ValidationReport> {
    let case = cfg.build_case()?;
    let pr = &case.problem;
    let h = pr.h();
    let mut report = validate_stage(&cfg.stage_splittings(&case)?, &pr.a, &pr.b, h);
    let subs = standard_subproblem_splittings(&pr.a, &pr.b, cfg.dcoef)?;
    report.extend(validate_subproblems(&subs, &pr.a, &pr.b, h));
    let m = case.m();
    match build_partition(m, cfg.overlap_shape(m)?, cfg.alphas()) {
        Ok(part) => report.extend(validate_partition(&part)),
        Err(e) => report.entries.push(crate::splittings::CheckEntry {
            name: "partition of unity".into(),
            deviation: None,
            passed: false,
            detail: e.to_string(),
        }),
    }
    Ok(report)
}

/// Spectral-radius estimates of every method's iteration operator under `cfg`.
///
/// Stage methods use the configured inner counts (1 for error-bound runs); the
/// multisplitting operators act on the stacked pair of subproblem iterates.
pub fn radius_estimates(cfg: &ExperimentConfig) -> Result<Vec<(Method, f64)>> {
    let case = cfg.build_case()?;
    let h = cfg.h;
    let s = cfg.stage_splittings(&case)?;
    let (subs, part) = cfg.subproblems(&case)?;
    let mut out = Vec::new();
    for method in Method::ALL {
        let rho = if let Some(depth) = method.depth() {
            let (inner, innermost) = match cfg.with_method(method).stopping()? {
                StoppingCriterion::FixedIters { inner, innermost, .. } => (inner, innermost),
                StoppingCriterion::ErrorBound { .. } => (1, 1),
            };
            let op = iteration_operator(&s, depth, h, inner, innermost)?;
            spectral_radius_estimate(|v| op.apply(v), op.m(), RADIUS_ITERS, cfg.seed)
        } else {
            let ms = method.ms_method(cfg.fast).expect("non-stage methods are multisplitting");
            let op = ms_iteration_operator(&subs, &part, ms, h)?;
            spectral_radius_estimate(|v| op.apply(v), op.dim(), RADIUS_ITERS, cfg.seed)
        };
        out.push((method, rho));
    }
    Ok(out)
}
