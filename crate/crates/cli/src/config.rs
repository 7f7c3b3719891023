//! Line-oriented experiment files: `key = value`, `#` comments.
//!
//! `experiment = NAME` starts from a canned experiment; every other key
//! overrides one field. Without it, `model` is required and `kind` defaults to
//! `exp_moment`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use tamed_sde::experiments::{canned, Experiment, Task, ALL_MODELS};
use tamed_sde::montecarlo::{equispaced_times, DEFAULT_SUBSTEPS};
use tamed_sde::schemes::{SchemeKind, DEFAULT_Q};
use tamed_sde::{Error, Result};

const KEYS: &[&str] = &[
    "experiment", "name", "kind", "model", "scheme", "q", "N", "M", "L", "seed", "T", "rho", "t_query", "substeps",
    "x0", "r", "p", "q_exp", "t", "schedule", "lo", "hi", "points", "t_seq", "expect", "out",
];

/// Task-specific keys and the task kinds that accept them.
const TASK_KEYS: &[(&str, &[&str])] = &[
    ("r", &["strong_error"]),
    ("p", &["tail_probe"]),
    ("q_exp", &["tail_probe"]),
    ("t", &["tail_probe"]),
    ("schedule", &["tail_probe"]),
    ("lo", &["consistency"]),
    ("hi", &["consistency"]),
    ("points", &["consistency", "residuals"]),
    ("t_seq", &["consistency"]),
];

fn err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
    params: Vec<(String, f64)>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut cfg = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = match line.split_once('=') {
                Some((k, v)) => (k.trim(), v.trim()),
                None => return err(format!("line {}: expected `key = value`, got `{line}`", i + 1)),
            };
            if value.is_empty() {
                return err(format!("line {}: key `{key}` has no value", i + 1));
            }
            if let Some(param) = key.strip_prefix("param.") {
                if param.is_empty() || cfg.params.iter().any(|(k, _)| k == param) {
                    return err(format!("line {}: bad or repeated key `{key}`", i + 1));
                }
                cfg.params.push((param.to_string(), real(key, value)?));
                continue;
            }
            if !KEYS.contains(&key) {
                return err(format!("line {}: unknown key `{key}`", i + 1));
            }
            if cfg.entries.insert(key.to_string(), value.to_string()).is_some() {
                return err(format!("line {}: repeated key `{key}`", i + 1));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Config::parse(&text)
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Builds and validates the experiment; relative `out` paths stay relative
    /// to the working directory.
    pub fn to_experiment(&self) -> Result<Experiment> {
        let mut e = match self.get("experiment") {
            Some(name) => canned(name, Path::new("results"))?,
            None => {
                let model = self.get("model").ok_or_else(|| Error::Config("missing key `model`".into()))?;
                Experiment {
                    name: model.to_string(),
                    model: model.to_string(),
                    params: Vec::new(),
                    scheme: SchemeKind::StoppedIncrementTamed,
                    q: DEFAULT_Q,
                    steps: vec![64, 256, 1024],
                    levels: 12,
                    n_paths: 10_000,
                    seed: 1,
                    horizon: 1.0,
                    rho: None,
                    t_query: equispaced_times(9, 1.0),
                    substeps: DEFAULT_SUBSTEPS,
                    x0: None,
                    task: Task::ExpMoment,
                    expected: Vec::new(),
                    out: PathBuf::from(format!("results/{model}.csv")),
                }
            }
        };
        if let Some(v) = self.get("name") {
            e.name = v.to_string();
            if self.get("out").is_none() {
                e.out = e.out.with_file_name(format!("{v}.csv"));
            }
        }
        if let Some(v) = self.get("model") {
            e.model = v.to_string();
        }
        if !self.params.is_empty() {
            for (k, v) in &self.params {
                match e.params.iter_mut().find(|(pk, _)| pk == k) {
                    Some(slot) => slot.1 = *v,
                    None => e.params.push((k.clone(), *v)),
                }
            }
        }
        if let Some(v) = self.get("scheme") {
            e.scheme = v.parse()?;
        }
        if let Some(v) = self.get("q") {
            e.q = real("q", v)?;
        }
        if let Some(v) = self.get("N") {
            e.steps = list("N", v, |k, s| count(k, s))?;
        }
        if let Some(v) = self.get("M") {
            e.n_paths = count("M", v)?;
        }
        if let Some(v) = self.get("L") {
            e.levels = u32::try_from(count("L", v)?).map_err(|_| Error::Config("L out of range".into()))?;
        }
        if let Some(v) = self.get("seed") {
            e.seed = v.parse().map_err(|_| Error::Config(format!("seed must be a non-negative integer, got `{v}`")))?;
        }
        if let Some(v) = self.get("T") {
            e.horizon = real("T", v)?;
            if self.get("t_query").is_none() {
                e.t_query = equispaced_times(9, e.horizon);
            }
        }
        if let Some(v) = self.get("rho") {
            e.rho = Some(real("rho", v)?);
        }
        if let Some(v) = self.get("t_query") {
            e.t_query = list("t_query", v, real)?;
        }
        if let Some(v) = self.get("substeps") {
            e.substeps = count("substeps", v)?;
        }
        if let Some(v) = self.get("x0") {
            e.x0 = Some(list("x0", v, real)?);
        }
        if let Some(v) = self.get("out") {
            e.out = PathBuf::from(v);
        }
        e.task = self.task(&e)?;
        if let Some(v) = self.get("expect") {
            e.expected = v.split(',').map(str::parse).collect::<Result<_>>()?;
        }
        e.validate()?;
        Ok(e)
    }

    fn task(&self, e: &Experiment) -> Result<Task> {
        let kind = self.get("kind").unwrap_or(e.task.name());
        for (key, kinds) in TASK_KEYS {
            if self.get(key).is_some() && !kinds.contains(&kind) {
                return err(format!("key `{key}` does not apply to a {kind} task"));
            }
        }
        let same = e.task.name() == kind;
        let opt_real = |k: &str, d: f64| self.get(k).map_or(Ok(d), |v| real(k, v));
        Ok(match kind {
            "exp_moment" => Task::ExpMoment,
            "strong_error" => {
                let r0 = match (&e.task, same) {
                    (Task::StrongError { r }, true) => *r,
                    _ => 2.0,
                };
                Task::StrongError { r: opt_real("r", r0)? }
            }
            "tail_probe" => {
                let (p0, q0, t0, s0) = match (&e.task, same) {
                    (Task::TailProbe { p, q_exp, t, schedule }, true) => (*p, *q_exp, *t, schedule.clone()),
                    _ => (1.0, 2.5, e.horizon, vec![1_000, 10_000, 100_000]),
                };
                let schedule = match self.get("schedule") {
                    Some(v) => list("schedule", v, count)?,
                    None => s0,
                };
                Task::TailProbe { p: opt_real("p", p0)?, q_exp: opt_real("q_exp", q0)?, t: opt_real("t", t0)?, schedule }
            }
            "consistency" => {
                let (lo0, hi0, n0, ts0) = match (&e.task, same) {
                    (Task::Consistency { lo, hi, points, t_seq }, true) => (*lo, *hi, *points, t_seq.clone()),
                    _ => (-2.0, 2.0, 17, (2..=10).map(|k| 0.5f64.powi(k)).collect()),
                };
                let points = self.get("points").map_or(Ok(n0), |v| count("points", v))?;
                let t_seq = match self.get("t_seq") {
                    Some(v) => list("t_seq", v, real)?,
                    None => ts0,
                };
                Task::Consistency { lo: opt_real("lo", lo0)?, hi: opt_real("hi", hi0)?, points, t_seq }
            }
            "residuals" => {
                let n0 = match (&e.task, same) {
                    (Task::Residuals { points }, true) => *points,
                    _ => 10_000,
                };
                Task::Residuals { points: self.get("points").map_or(Ok(n0), |v| count("points", v))? }
            }
            other => {
                return err(format!(
                    "unknown kind `{other}`; expected exp_moment, strong_error, tail_probe, consistency or residuals"
                ))
            }
        })
    }
}

pub fn real(key: &str, v: &str) -> Result<f64> {
    match v.trim().parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => err(format!("`{key}` must be a finite real, got `{v}`")),
    }
}

pub fn count(key: &str, v: &str) -> Result<usize> {
    let v = v.trim();
    if let Ok(n) = v.parse::<usize>() {
        return Ok(n);
    }
    // allow 1e5-style integers
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() && x >= 0.0 && x.fract() == 0.0 && x <= 1e15 => Ok(x as usize),
        _ => err(format!("`{key}` must be a non-negative integer, got `{v}`")),
    }
}

fn list<T>(key: &str, v: &str, f: impl Fn(&str, &str) -> Result<T>) -> Result<Vec<T>> {
    v.split(',').map(|s| f(key, s)).collect()
}

/// Whether `model` names the residual sweep over the whole zoo.
pub fn is_all(model: &str) -> bool {
    model == ALL_MODELS
}
