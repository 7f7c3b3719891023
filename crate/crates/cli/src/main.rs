mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use tamed_sde::analysis::{classify_exp_moment, theorem_prefactor_log, BoundInputs};
use tamed_sde::experiments::{self, canned, residual_sweep, ExperimentReport, ALL_MODELS};
use tamed_sde::lyapunov::{model_by_name, model_names, model_zoo, ModelCard};
use tamed_sde::montecarlo::{
    consistency_defect, fmt_real, tail_growth_probe, tail_probe_csv, ExactEulerIncrement, OneStepMap, SchemeIncrement,
    TailProbeRun, ZeroIncrement,
};
use tamed_sde::schemes::{SchemeKind, SchemeSpec};
use tamed_sde::{Error, Result};

use config::Config;

#[derive(Parser)]
#[command(name = "tamed-sde", version, about = "Stopped increment-tamed SDE schemes and exponential-moment diagnostics")]
struct Cli {
    /// Worker threads for Monte Carlo loops (0 = one per core); never changes results
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment from a config file or by canned name
    Run {
        /// Config file (`key = value` lines)
        config: Option<PathBuf>,
        /// Canned experiment name instead of a config file
        #[arg(long, conflicts_with = "config")]
        experiment: Option<String>,
        /// Output directory for a canned experiment
        #[arg(long, requires = "experiment", default_value = "results")]
        out_dir: PathBuf,
    },
    /// Finiteness verdict for E[exp(p|Y|^q)] under a scheme
    Classify {
        #[arg(long)]
        scheme: SchemeKind,
        #[arg(long)]
        q: f64,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        /// Append the basis of the verdict as a second column
        #[arg(long)]
        basis: bool,
    },
    /// Log of the finite-mesh exponential-moment prefactor
    Bound {
        #[arg(long, allow_hyphen_values = true)]
        rho: f64,
        #[arg(long)]
        c: f64,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        q: f64,
        #[arg(long)]
        gamma: f64,
        #[arg(long = "T")]
        horizon: f64,
        #[arg(long)]
        mesh: f64,
        /// Defaults to the middle of the admissible window
        #[arg(long)]
        alpha: Option<f64>,
        /// Print a header line first
        #[arg(long)]
        header: bool,
    },
    /// Consistency defects of a one-step map on a box
    Consistency {
        #[arg(long, default_value = "cubic1d")]
        model: String,
        /// Parameter override `name=value` (repeatable)
        #[arg(long = "param", value_parser = parse_param)]
        params: Vec<(String, f64)>,
        #[arg(long, default_value = "sit")]
        scheme: SchemeKind,
        #[arg(long, default_value_t = 2.0)]
        q: f64,
        #[arg(long, value_enum, default_value_t = MapKind::Scheme)]
        map: MapKind,
        #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
        lo: f64,
        #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
        hi: f64,
        #[arg(long, default_value_t = 17)]
        points: usize,
        /// Decreasing times, comma separated [default: 2^-2, ..., 2^-10]
        #[arg(long, value_delimiter = ',')]
        t_seq: Vec<f64>,
        #[arg(long = "M", default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lyapunov residual sweep
    Residual {
        /// Model name, or `all`
        #[arg(long, default_value = ALL_MODELS)]
        model: String,
        #[arg(long = "param", value_parser = parse_param)]
        params: Vec<(String, f64)>,
        #[arg(long, default_value_t = 10_000)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Running estimates of E[exp(p|Y_t^N|^q_exp)]
    Probe {
        #[arg(long, default_value = "cubic1d")]
        model: String,
        #[arg(long = "param", value_parser = parse_param)]
        params: Vec<(String, f64)>,
        #[arg(long, default_value = "euler")]
        scheme: SchemeKind,
        #[arg(long, default_value_t = 2.0)]
        q: f64,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        #[arg(long, default_value_t = 2.5)]
        q_exp: f64,
        #[arg(long = "N", default_value_t = 4)]
        steps: usize,
        #[arg(long = "T", default_value_t = 1.0)]
        horizon: f64,
        /// Probe time [default: T]
        #[arg(long)]
        t: Option<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1000,10000,100000")]
        schedule: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Vec<f64>,
        /// `tail_growth:R` or `tail_stable:TOL`
        #[arg(long)]
        expect: Option<experiments::Expectation>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the model zoo
    Zoo,
}

#[derive(Clone, Copy, ValueEnum)]
enum MapKind {
    /// The scheme's own one-step increment
    Scheme,
    /// mu(x) t + sigma(x) y
    ExactEuler,
    /// The constant zero map
    Zero,
}

fn parse_param(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let v: f64 = v.trim().parse().map_err(|_| format!("`{v}` is not a number"))?;
    if !v.is_finite() {
        return Err(format!("`{k}` must be finite"));
    }
    Ok((k.trim().to_string(), v))
}

/// `Ok(true)` when every assertion passed.
type Outcome = Result<bool>;

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(path, text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn card(model: &str, params: &[(String, f64)]) -> Result<ModelCard> {
    model_by_name(model)?.with_params(params)
}

fn scheme_for(kind: SchemeKind, q: f64, card: &ModelCard) -> Result<SchemeSpec> {
    if kind == SchemeKind::LinearImplicitStopped && !card.problem.supports_linear_implicit() {
        return Err(Error::Config(format!("model `{}` has no linear-implicit splitting", card.name)));
    }
    SchemeSpec::default_for(kind, q, &card.problem).map_err(|e| Error::Config(e.to_string()))
}

fn print_report(rep: &ExperimentReport) {
    for f in &rep.files {
        println!("wrote {}", f.display());
    }
    for c in &rep.checks {
        println!("{},{},{},\"{}\"", rep.name, c.label, if c.passed { "PASS" } else { "FAIL" }, c.detail);
    }
}

fn run_cmd(config: Option<PathBuf>, experiment: Option<String>, out_dir: &Path, workers: usize) -> Outcome {
    let e = match (config, experiment) {
        (Some(path), _) => Config::load(&path)?.to_experiment()?,
        (None, Some(name)) => canned(&name, out_dir)?,
        (None, None) => return Err(Error::Config("give a config file or --experiment NAME".into())),
    };
    let rep = experiments::run(&e, workers)?;
    print_report(&rep);
    Ok(rep.passed())
}

fn dispatch(cli: Cli) -> Outcome {
    let workers = cli.workers;
    match cli.cmd {
        Cmd::Run { config, experiment, out_dir } => run_cmd(config, experiment, &out_dir, workers),
        Cmd::Classify { scheme, q, p, basis } => {
            let v = classify_exp_moment(scheme, p, q);
            if basis {
                println!("{},\"{}\"", v.verdict, v.basis);
            } else {
                println!("{}", v.verdict);
            }
            Ok(true)
        }
        Cmd::Bound { rho, c, p, q, gamma, horizon, mesh, alpha, header } => {
            let mut inp = BoundInputs::new(rho, c, p, q, gamma, horizon, mesh);
            if let Some(a) = alpha {
                inp = inp.with_alpha(a);
            }
            let f = theorem_prefactor_log(&inp)?;
            if header {
                println!("log_f,log_log_f,log_log_inner,log_outer,e1,e2,alpha");
            }
            let row = [f.log_f, f.log_log_f, f.log_log_inner, f.log_outer, f.e1, f.e2, f.alpha];
            println!("{}", row.map(fmt_real).join(","));
            Ok(true)
        }
        Cmd::Consistency { model, params, scheme, q, map, lo, hi, points, t_seq, samples, seed, out } => {
            let card = card(&model, &params)?;
            let spec = scheme_for(scheme, q, &card)?;
            let t_seq = if t_seq.is_empty() { (2..=10).map(|k| 0.5f64.powi(k)).collect() } else { t_seq };
            if !(lo < hi) || points == 0 || t_seq.len() < 2 || t_seq.windows(2).any(|w| w[1] >= w[0]) || t_seq[t_seq.len() - 1] <= 0.0 {
                return Err(Error::Config("need lo < hi, points >= 1 and at least two decreasing positive times".into()));
            }
            let k = experiments::consistency_points(card.problem.dim, lo, hi, points);
            let scheme_map = SchemeIncrement { scheme: &spec, problem: &card.problem };
            let exact = ExactEulerIncrement { problem: &card.problem };
            let phi: &dyn OneStepMap = match map {
                MapKind::Scheme => &scheme_map,
                MapKind::ExactEuler => &exact,
                MapKind::Zero => &ZeroIncrement,
            };
            let rep = consistency_defect(phi, &card.problem, &k, &t_seq, samples, seed, workers)?;
            let mut csv = String::from("t,a,b\n");
            for r in &rep.rows {
                let _ = writeln!(csv, "{},{},{}", fmt_real(r.t), fmt_real(r.a), fmt_real(r.b));
            }
            emit(&out, &csv)?;
            if !rep.passed() {
                eprintln!("defects do not both fall by 4x (a falls: {}, b falls: {})", rep.a_falls, rep.b_falls);
            }
            Ok(rep.passed())
        }
        Cmd::Residual { model, params, points, out } => {
            if points == 0 {
                return Err(Error::Config("points must be at least 1".into()));
            }
            let cards = if config::is_all(&model) { model_zoo() } else { vec![card(&model, &params)?] };
            let mut csv = String::from("model,max_scaled_residual,max_abs_scaled_residual,pass\n");
            let mut ok = true;
            for c in &cards {
                let s = residual_sweep(c, points)?;
                ok &= s.passed;
                let _ = writeln!(
                    csv,
                    "{},{},{},{}",
                    c.name,
                    fmt_real(s.max_scaled),
                    fmt_real(s.max_abs_scaled),
                    u8::from(s.passed)
                );
            }
            emit(&out, &csv)?;
            Ok(ok)
        }
        Cmd::Probe { model, params, scheme, q, p, q_exp, steps, horizon, t, schedule, seed, x0, expect, out } => {
            let card = card(&model, &params)?;
            let spec = scheme_for(scheme, q, &card)?;
            let x0 = if x0.is_empty() { card.x0.clone() } else { x0 };
            if x0.len() != card.problem.dim {
                return Err(Error::Config(format!("x0 needs {} components", card.problem.dim)));
            }
            let run = TailProbeRun {
                problem: &card.problem,
                scheme: &spec,
                x0: &x0,
                p,
                q: q_exp,
                steps,
                t: t.unwrap_or(horizon),
                horizon,
                seed,
                workers,
            };
            let probe = tail_growth_probe(&run, &schedule)?;
            emit(&out, &tail_probe_csv(&probe))?;
            Ok(match expect {
                None => true,
                Some(experiments::Expectation::TailGrowth(r)) => probe.log_growth >= r.ln(),
                Some(experiments::Expectation::TailStable(tol)) => probe.last_doubling_drift < tol,
                Some(other) => return Err(Error::Config(format!("expectation `{other}` does not apply to a probe"))),
            })
        }
        Cmd::Zoo => {
            for name in model_names() {
                println!("{name}");
            }
            Ok(true)
        }
    }
}

fn is_config_error(e: &Error) -> bool {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => true,
        Error::Sample { source, .. } => is_config_error(source),
        _ => false,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if is_config_error(&e) { 2 } else { 1 })
        }
    }
}
