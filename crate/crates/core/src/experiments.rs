//! Canned experiments binding zoo models, schemes and functionals to
//! pass/fail expectations, with CSV output.
//!
//! An [`Experiment`] is plain data; [`run`] executes it, writes its CSV files
//! and evaluates every expectation. Exponential-moment comparisons are made in
//! log space throughout.

use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::analysis::{theorem_prefactor_log, BoundInputs};
use crate::error::{Error, Result};
use crate::lyapunov::{lyapunov_residual, model_by_name, model_zoo, ModelCard};
use crate::montecarlo::{
    consistency_defect, equispaced_times, estimates_csv, fmt_real, tail_growth_probe, tail_probe_csv,
    ExpMomentRun, FunctionalSpec, McEstimate, SchemeIncrement, StrongErrorRun, TailProbeRun, DEFAULT_SUBSTEPS,
};
use crate::numerics::halton_point;
use crate::paths::PathSampler;
use crate::schemes::{SchemeKind, SchemeSpec};

/// Polynomial degree used for `U` in prefactor inputs; every zoo `U` grows at
/// most quartically.
pub const U_GROWTH_DEGREE: f64 = 4.0;

/// Residual tolerance, relative to `1 + |U(x)|`.
pub const RESIDUAL_TOL: f64 = 1e-9;
/// Two-sided tolerance for models whose Lyapunov inequality is an identity.
pub const IDENTITY_TOL: f64 = 1e-10;
/// Models whose residual vanishes identically.
pub const IDENTITY_MODELS: [&str; 4] = ["cubic1d", "ginzburg_landau", "psychology", "langevin"];

/// What an experiment measures.
#[derive(Clone, Debug, PartialEq)]
pub enum Task {
    /// `E[exp(U(Y_t)e^{−ρt} + ∫Ū e^{−ρs})]` per `N` and query time.
    ExpMoment,
    /// `E‖Y^ref_t − Y^N_t‖^r` against the proposed scheme on the full master grid.
    StrongError { r: f64 },
    /// Running estimates of `E[exp(p‖Y^N_t‖^q_exp)]` along `schedule`.
    TailProbe { p: f64, q_exp: f64, t: f64, schedule: Vec<usize> },
    /// Consistency defects of the scheme's one-step map on `[lo, hi]^d`.
    Consistency { lo: f64, hi: f64, points: usize, t_seq: Vec<f64> },
    /// Lyapunov residual sweep on quasi-random points of each sampling box.
    Residuals { points: usize },
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::ExpMoment => "exp_moment",
            Task::StrongError { .. } => "strong_error",
            Task::TailProbe { .. } => "tail_probe",
            Task::Consistency { .. } => "consistency",
            Task::Residuals { .. } => "residuals",
        }
    }
}

/// A pass/fail assertion on an experiment's results.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Expectation {
    /// `ln est − 3·rel_se ≤ ln F(T/N) + U(x0)` at every `N` and `t`.
    WithinPrefactor,
    /// `max_t ln est ≤ U(x0) + tol` at the finest `N`.
    LimitWithin(f64),
    /// `max_t` of the estimate does not increase along `N` beyond twice the
    /// summed standard errors.
    NonIncreasing,
    /// `max_t` estimate at the coarsest `N` over that at the finest is at least this.
    TotalDecrease(f64),
    /// Running maximum over the first running estimate is at least this.
    TailGrowth(f64),
    /// Relative change over the last doubling of the schedule is below this.
    TailStable(f64),
    /// Both consistency defects fall by 4× across the time sequence.
    DefectsFall,
    /// Every swept model passes its residual tolerance.
    ResidualsPass,
}

impl Expectation {
    fn applies_to(&self, task: &Task) -> bool {
        use Expectation::*;
        matches!(
            (self, task),
            (WithinPrefactor | LimitWithin(_), Task::ExpMoment)
                | (NonIncreasing, Task::ExpMoment | Task::StrongError { .. })
                | (TotalDecrease(_), Task::StrongError { .. })
                | (TailGrowth(_) | TailStable(_), Task::TailProbe { .. })
                | (DefectsFall, Task::Consistency { .. })
                | (ResidualsPass, Task::Residuals { .. })
        )
    }
}

impl fmt::Display for Expectation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expectation::WithinPrefactor => f.write_str("within_prefactor"),
            Expectation::LimitWithin(v) => write!(f, "limit_within:{v}"),
            Expectation::NonIncreasing => f.write_str("non_increasing"),
            Expectation::TotalDecrease(v) => write!(f, "total_decrease:{v}"),
            Expectation::TailGrowth(v) => write!(f, "tail_growth:{v}"),
            Expectation::TailStable(v) => write!(f, "tail_stable:{v}"),
            Expectation::DefectsFall => f.write_str("defects_fall"),
            Expectation::ResidualsPass => f.write_str("residuals_pass"),
        }
    }
}

impl FromStr for Expectation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.trim().split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let value = |what: &str| -> Result<f64> {
            let a = arg.ok_or_else(|| Error::Config(format!("expectation `{what}` needs a value, e.g. `{what}:0.05`")))?;
            match a.parse::<f64>() {
                Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
                _ => Err(Error::Config(format!("expectation `{what}` needs a positive number, got `{a}`"))),
            }
        };
        let bare = |e: Expectation| -> Result<Expectation> {
            match arg {
                None => Ok(e),
                Some(_) => Err(Error::Config(format!("expectation `{name}` takes no value"))),
            }
        };
        match name {
            "within_prefactor" => bare(Expectation::WithinPrefactor),
            "limit_within" => Ok(Expectation::LimitWithin(value(name)?)),
            "non_increasing" => bare(Expectation::NonIncreasing),
            "total_decrease" => Ok(Expectation::TotalDecrease(value(name)?)),
            "tail_growth" => Ok(Expectation::TailGrowth(value(name)?)),
            "tail_stable" => Ok(Expectation::TailStable(value(name)?)),
            "defects_fall" => bare(Expectation::DefectsFall),
            "residuals_pass" => bare(Expectation::ResidualsPass),
            other => Err(Error::Config(format!("unknown expectation `{other}`"))),
        }
    }
}

/// Model name that selects the whole zoo in a residual sweep.
pub const ALL_MODELS: &str = "all";

#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub name: String,
    /// A zoo model name, or [`ALL_MODELS`] for residual sweeps.
    pub model: String,
    pub params: Vec<(String, f64)>,
    pub scheme: SchemeKind,
    pub q: f64,
    /// Strictly increasing step counts, each dividing `2^levels`.
    pub steps: Vec<usize>,
    pub levels: u32,
    pub n_paths: usize,
    pub seed: u64,
    pub horizon: f64,
    /// Raises the model rate `ρ` (never lowers it).
    pub rho: Option<f64>,
    pub t_query: Vec<f64>,
    pub substeps: usize,
    /// Initial value; the model's canonical point when `None`.
    pub x0: Option<Vec<f64>>,
    pub task: Task,
    pub expected: Vec<Expectation>,
    /// Output CSV. Per-`N` tasks write `{stem}_N{N}.{ext}` next to it.
    pub out: PathBuf,
}

/// Outcome of one expectation.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub label: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub name: String,
    pub files: Vec<PathBuf>,
    pub checks: Vec<CheckOutcome>,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

impl Experiment {
    /// Checks the experiment is well formed without running it.
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return config("experiment name is empty");
        }
        for e in &self.expected {
            if !e.applies_to(&self.task) {
                return config(format!("expectation `{e}` does not apply to a {} task", self.task.name()));
            }
        }
        if let Task::Residuals { points } = self.task {
            if points == 0 {
                return config("residual sweep needs at least one point");
            }
            if self.model != ALL_MODELS {
                model_by_name(&self.model)?.with_params(&self.params)?;
            }
            return Ok(());
        }
        let card = self.card()?;
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return config(format!("T must be positive and finite, got {}", self.horizon));
        }
        if self.steps.is_empty() || self.steps.windows(2).any(|w| w[1] <= w[0]) {
            return config("N list must be non-empty and strictly increasing");
        }
        if self.levels > crate::paths::MAX_LEVELS {
            return config(format!("L = {} exceeds {}", self.levels, crate::paths::MAX_LEVELS));
        }
        let fine = 1usize << self.levels;
        if let Some(&n) = self.steps.iter().find(|&&n| n == 0 || fine % n != 0) {
            return config(format!("N = {n} does not divide 2^L = {fine}"));
        }
        if self.t_query.iter().any(|t| !(*t >= 0.0 && *t <= self.horizon)) {
            return config("query times must lie in [0, T]");
        }
        if self.substeps == 0 {
            return config("substeps must be at least 1");
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != card.problem.dim {
                return config(format!("x0 has {} components, model `{}` has {}", x0.len(), self.model, card.problem.dim));
            }
        }
        match &self.task {
            Task::ExpMoment => {
                if self.n_paths < 2 {
                    return config("M must be at least 2");
                }
                if let Some(&n) = self.steps.iter().find(|&&n| fine % (n * self.substeps) != 0) {
                    return config(format!("N = {n} with {} substeps does not divide 2^L = {fine}", self.substeps));
                }
            }
            Task::StrongError { r } => {
                if !(*r > 0.0) {
                    return config("r must be positive");
                }
                if self.n_paths < 2 {
                    return config("M must be at least 2");
                }
            }
            Task::TailProbe { p, q_exp, t, schedule } => {
                if !(*p > 0.0 && *q_exp > 0.0) {
                    return config("p and q_exp must be positive");
                }
                if self.steps.len() != 1 || !self.steps[0].is_power_of_two() {
                    return config("a tail probe takes a single N, a power of two");
                }
                if !(*t > 0.0 && *t <= self.horizon) {
                    return config("probe time must lie in (0, T]");
                }
                if schedule.is_empty() || schedule.windows(2).any(|w| w[1] <= w[0]) || schedule[0] < 2 {
                    return config("schedule must be increasing and start at 2 or more");
                }
            }
            Task::Consistency { lo, hi, points, t_seq } => {
                if !(lo < hi) || *points == 0 {
                    return config("consistency box needs lo < hi and at least one point");
                }
                if t_seq.len() < 2 || t_seq.iter().any(|t| !(*t > 0.0)) || t_seq.windows(2).any(|w| w[1] >= w[0]) {
                    return config("consistency times must be positive and strictly decreasing");
                }
                if self.n_paths == 0 {
                    return config("M must be positive");
                }
            }
            Task::Residuals { .. } => unreachable!(),
        }
        self.scheme_spec(&card)?;
        Ok(())
    }

    /// The model card with parameter and rate overrides applied.
    pub fn card(&self) -> Result<ModelCard> {
        let mut card = model_by_name(&self.model)?.with_params(&self.params)?;
        if let Some(rho) = self.rho {
            card.pair = card.pair.with_rho(rho).map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(card)
    }

    fn scheme_spec(&self, card: &ModelCard) -> Result<SchemeSpec> {
        if self.scheme == SchemeKind::LinearImplicitStopped && !card.problem.supports_linear_implicit() {
            return config(format!("model `{}` has no linear-implicit splitting", self.model));
        }
        SchemeSpec::default_for(self.scheme, self.q, &card.problem).map_err(|e| Error::Config(e.to_string()))
    }

    /// `{stem}_N{n}.{ext}` beside [`Experiment::out`].
    pub fn per_n_path(&self, n: usize) -> PathBuf {
        let stem = self.out.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
        let ext = self.out.extension().and_then(|s| s.to_str()).unwrap_or("csv");
        self.out.with_file_name(format!("{stem}_N{n}.{ext}"))
    }
}

fn write_file(path: &Path, contents: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, contents)?;
    files.push(path.to_path_buf());
    Ok(())
}

fn check(label: impl fmt::Display, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { label: label.to_string(), passed, detail }
}

/// `(max_t value, its standard error)` per `N`, in log space when `log` is set.
fn sup_over_t(per_n: &[Vec<McEstimate>], log: bool) -> Vec<(f64, f64)> {
    per_n
        .iter()
        .map(|row| {
            row.iter()
                .filter(|e| e.usable)
                .map(|e| if log { (e.log_mean, e.rel_std_error) } else { (e.mean, e.std_error) })
                .fold((f64::NEG_INFINITY, 0.0), |acc, v| if v.0 > acc.0 { v } else { acc })
        })
        .collect()
}

fn non_increasing(sups: &[(f64, f64)], steps: &[usize]) -> CheckOutcome {
    let mut ok = sups.iter().all(|s| s.0.is_finite());
    let mut detail = String::new();
    for (w, n) in sups.windows(2).zip(steps.windows(2)) {
        let slack = 2.0 * (w[0].1 + w[1].1);
        let step_ok = w[1].0 <= w[0].0 + slack;
        ok &= step_ok;
        let _ = write!(detail, "N={}->{}: {:.6e} -> {:.6e} (slack {:.2e}); ", n[0], n[1], w[0].0, w[1].0, slack);
    }
    check(Expectation::NonIncreasing, ok, detail.trim_end_matches("; ").to_string())
}

/// Executes `e` on `workers` threads (0 = all cores), writes its CSV files and
/// evaluates its expectations. Results do not depend on `workers`.
pub fn run(e: &Experiment, workers: usize) -> Result<ExperimentReport> {
    e.validate()?;
    let mut files = Vec::new();
    let mut checks = Vec::new();
    if let Task::Residuals { points } = e.task {
        let cards = if e.model == ALL_MODELS {
            model_zoo()
        } else {
            vec![model_by_name(&e.model)?.with_params(&e.params)?]
        };
        let mut csv = String::from("model,max_scaled_residual,max_abs_scaled_residual,pass\n");
        let mut all_ok = true;
        let mut failed = Vec::new();
        for card in &cards {
            let sweep = residual_sweep(card, points)?;
            all_ok &= sweep.passed;
            if !sweep.passed {
                failed.push(card.name);
            }
            let _ = writeln!(
                csv,
                "{},{},{},{}",
                card.name,
                fmt_real(sweep.max_scaled),
                fmt_real(sweep.max_abs_scaled),
                u8::from(sweep.passed)
            );
        }
        write_file(&e.out, &csv, &mut files)?;
        for x in &e.expected {
            checks.push(check(x, all_ok, format!("{} models swept, failing: {:?}", cards.len(), failed)));
        }
        return Ok(ExperimentReport { name: e.name.clone(), files, checks });
    }

    let card = e.card()?;
    let spec = e.scheme_spec(&card)?;
    let x0 = e.x0.clone().unwrap_or_else(|| card.x0.clone());
    let noise_dim = card.problem.noise_dim;
    match &e.task {
        Task::ExpMoment => {
            let fspec = FunctionalSpec::new(card.pair.clone(), e.t_query.clone(), e.substeps)?;
            let run = ExpMomentRun {
                problem: &card.problem,
                scheme: &spec,
                functional: &fspec,
                x0: &x0,
                sampler: PathSampler::new(e.seed, e.levels, e.horizon, noise_dim)?,
                n_paths: e.n_paths,
                workers,
            };
            let est = run.estimate(&e.steps)?;
            for (n, row) in e.steps.iter().zip(&est) {
                write_file(&e.per_n_path(*n), &estimates_csv(&e.t_query, row), &mut files)?;
            }
            let log_initial = card.pair.u(&x0);
            for x in &e.expected {
                checks.push(match x {
                    Expectation::WithinPrefactor => {
                        let mut ok = true;
                        let mut worst = f64::NEG_INFINITY;
                        for (n, row) in e.steps.iter().zip(&est) {
                            let inp = BoundInputs::new(
                                card.pair.rho,
                                card.problem.growth_c.max(1.0),
                                U_GROWTH_DEGREE,
                                e.q,
                                card.gamma,
                                e.horizon,
                                e.horizon / *n as f64,
                            );
                            let bound = theorem_prefactor_log(&inp)?;
                            for est in row {
                                let lhs = est.log_mean - 3.0 * est.rel_std_error - log_initial;
                                worst = worst.max(lhs);
                                ok &= est.usable && bound.admits_log(lhs);
                            }
                        }
                        check(x, ok, format!("max over N, t of ln est - 3 rel_se - U(x0) = {worst:.6e}"))
                    }
                    Expectation::LimitWithin(tol) => {
                        let (s, _) = *sup_over_t(&est[est.len() - 1..], true).last().unwrap();
                        let n = e.steps[e.steps.len() - 1];
                        check(
                            x,
                            s <= log_initial + tol,
                            format!("N={n}: max_t ln est = {s:.6e}, limit {:.6e}", log_initial + tol),
                        )
                    }
                    Expectation::NonIncreasing => non_increasing(&sup_over_t(&est, true), &e.steps),
                    _ => unreachable!("validated"),
                });
            }
        }
        Task::StrongError { r } => {
            let ref_q = if e.scheme == SchemeKind::StoppedIncrementTamed { e.q } else { crate::schemes::DEFAULT_Q };
            let reference = SchemeSpec::proposed(ref_q)?;
            let run = StrongErrorRun {
                problem: &card.problem,
                scheme: &spec,
                reference: &reference,
                x0: &x0,
                r: *r,
                t_query: &e.t_query,
                sampler: PathSampler::new(e.seed, e.levels, e.horizon, noise_dim)?,
                n_paths: e.n_paths,
                workers,
            };
            let est = run.estimate(&e.steps)?;
            for (n, row) in e.steps.iter().zip(&est) {
                write_file(&e.per_n_path(*n), &estimates_csv(&e.t_query, row), &mut files)?;
            }
            let sups = sup_over_t(&est, false);
            for x in &e.expected {
                checks.push(match x {
                    Expectation::NonIncreasing => non_increasing(&sups, &e.steps),
                    Expectation::TotalDecrease(f) => {
                        let ratio = sups[0].0 / sups[sups.len() - 1].0;
                        check(x, ratio >= *f, format!("sup_t error ratio N={} / N={}: {ratio:.4}", e.steps[0], e.steps[e.steps.len() - 1]))
                    }
                    _ => unreachable!("validated"),
                });
            }
        }
        Task::TailProbe { p, q_exp, t, schedule } => {
            let run = TailProbeRun {
                problem: &card.problem,
                scheme: &spec,
                x0: &x0,
                p: *p,
                q: *q_exp,
                steps: e.steps[0],
                t: *t,
                horizon: e.horizon,
                seed: e.seed,
                workers,
            };
            let probe = tail_growth_probe(&run, schedule)?;
            write_file(&e.out, &tail_probe_csv(&probe), &mut files)?;
            for x in &e.expected {
                checks.push(match x {
                    Expectation::TailGrowth(f) => check(
                        x,
                        probe.log_growth >= f.ln(),
                        format!("ln growth = {:.6e} (need >= {:.6e})", probe.log_growth, f.ln()),
                    ),
                    Expectation::TailStable(tol) => check(
                        x,
                        probe.last_doubling_drift < *tol,
                        format!("last doubling drift = {:.6e}", probe.last_doubling_drift),
                    ),
                    _ => unreachable!("validated"),
                });
            }
        }
        Task::Consistency { lo, hi, points, t_seq } => {
            let k = consistency_points(card.problem.dim, *lo, *hi, *points);
            let map = SchemeIncrement { scheme: &spec, problem: &card.problem };
            let rep = consistency_defect(&map, &card.problem, &k, t_seq, e.n_paths, e.seed, workers)?;
            let mut csv = String::from("t,a,b\n");
            for row in &rep.rows {
                let _ = writeln!(csv, "{},{},{}", fmt_real(row.t), fmt_real(row.a), fmt_real(row.b));
            }
            write_file(&e.out, &csv, &mut files)?;
            let (first, last) = (&rep.rows[0], &rep.rows[rep.rows.len() - 1]);
            for x in &e.expected {
                checks.push(check(
                    x,
                    rep.passed(),
                    format!("a: {:.4e} -> {:.4e}, b: {:.4e} -> {:.4e}", first.a, last.a, first.b, last.b),
                ));
            }
        }
        Task::Residuals { .. } => unreachable!(),
    }
    Ok(ExperimentReport { name: e.name.clone(), files, checks })
}

/// `points` equispaced points of `[lo, hi]` in one dimension, otherwise
/// `points` Halton points of `[lo, hi]^d`.
pub fn consistency_points(dim: usize, lo: f64, hi: f64, points: usize) -> Vec<Vec<f64>> {
    if dim == 1 {
        if points == 1 {
            return vec![vec![0.5 * (lo + hi)]];
        }
        return (0..points).map(|i| vec![lo + (hi - lo) * i as f64 / (points - 1) as f64]).collect();
    }
    let bounds = vec![(lo, hi); dim];
    (0..points as u64).map(|i| halton_point(i, &bounds)).collect()
}

/// Result of [`residual_sweep`].
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualSweep {
    /// `max residual / (1 + |U|)` over the sample.
    pub max_scaled: f64,
    pub max_abs_scaled: f64,
    pub identity: bool,
    pub passed: bool,
}

/// Residual of the Lyapunov inequality on `points` Halton points of the
/// model's sampling box.
pub fn residual_sweep(card: &ModelCard, points: usize) -> Result<ResidualSweep> {
    let mut max_scaled = f64::NEG_INFINITY;
    let mut max_abs_scaled = 0.0f64;
    for i in 0..points as u64 {
        let x = halton_point(i, &card.sampling_box);
        let r = lyapunov_residual(&card.problem, &card.pair, &x)?;
        let s = r / (1.0 + card.pair.u(&x).abs());
        max_scaled = max_scaled.max(s);
        max_abs_scaled = max_abs_scaled.max(s.abs());
    }
    let identity = IDENTITY_MODELS.contains(&card.name);
    let passed = max_scaled <= RESIDUAL_TOL && (!identity || max_abs_scaled <= IDENTITY_TOL);
    Ok(ResidualSweep { max_scaled, max_abs_scaled, identity, passed })
}

pub const CANNED: [&str; 6] = [
    "cubic_preserved",
    "strong_convergence",
    "euler_diverges",
    "sit_stabilizes",
    "consistency_cubic",
    "all_zoo_residuals",
];

fn base(name: &str, out_dir: &Path) -> Experiment {
    Experiment {
        name: name.to_string(),
        model: "cubic1d".to_string(),
        params: Vec::new(),
        scheme: SchemeKind::StoppedIncrementTamed,
        q: crate::schemes::DEFAULT_Q,
        steps: vec![64, 256, 1024],
        levels: 12,
        n_paths: 100_000,
        seed: 1,
        horizon: 1.0,
        rho: None,
        t_query: equispaced_times(9, 1.0),
        substeps: DEFAULT_SUBSTEPS,
        x0: None,
        task: Task::ExpMoment,
        expected: Vec::new(),
        out: out_dir.join(format!("{name}.csv")),
    }
}

/// A canned experiment at full scale, writing under `out_dir`.
pub fn canned(name: &str, out_dir: &Path) -> Result<Experiment> {
    let b = base(name, out_dir);
    let delta = vec![("delta".to_string(), 0.1)];
    Ok(match name {
        "cubic_preserved" => Experiment {
            params: delta,
            rho: Some(0.0),
            expected: vec![Expectation::WithinPrefactor, Expectation::LimitWithin(0.05), Expectation::NonIncreasing],
            ..b
        },
        "strong_convergence" => Experiment {
            levels: 14,
            n_paths: 10_000,
            task: Task::StrongError { r: 2.0 },
            expected: vec![Expectation::NonIncreasing, Expectation::TotalDecrease(8.0)],
            ..b
        },
        "euler_diverges" => Experiment {
            scheme: SchemeKind::EulerStopped,
            steps: vec![4],
            levels: 2,
            n_paths: 1_000_000,
            task: Task::TailProbe { p: 1.0, q_exp: 2.5, t: 1.0, schedule: vec![1_000, 10_000, 100_000, 1_000_000] },
            expected: vec![Expectation::TailGrowth(10.0)],
            ..b
        },
        "sit_stabilizes" => Experiment {
            params: delta,
            steps: vec![1024],
            levels: 10,
            task: Task::TailProbe { p: 0.1, q_exp: 4.0, t: 1.0, schedule: vec![1_000, 10_000, 100_000] },
            expected: vec![Expectation::TailStable(0.05)],
            ..b
        },
        "consistency_cubic" => Experiment {
            steps: vec![1],
            levels: 0,
            task: Task::Consistency {
                lo: -2.0,
                hi: 2.0,
                points: 17,
                t_seq: (2..=10).map(|k| 0.5f64.powi(k)).collect(),
            },
            expected: vec![Expectation::DefectsFall],
            ..b
        },
        "all_zoo_residuals" => Experiment {
            model: ALL_MODELS.to_string(),
            task: Task::Residuals { points: 10_000 },
            expected: vec![Expectation::ResidualsPass],
            ..b
        },
        other => return config(format!("unknown experiment `{other}`; known: {}", CANNED.join(", "))),
    })
}
