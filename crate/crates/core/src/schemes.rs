//! One-step maps `Φ(x, s, Δw)`, stopping families `D_h` and path simulation.
//!
//! Every scheme has the form `Y_t = Y_n + 1_{D_h}(Y_n) · incr(z, s)` with
//! `z = μ(Y_n) s + σ(Y_n) Δw`, where `s = t − t_n`:
//!
//! | kind | increment |
//! |---|---|
//! | `EulerStopped` | `z` |
//! | `LinearImplicitStopped` | solves `y = x + σΔw + s·diag(a(x))·y` |
//! | `TamedMax` | `z / max(1, s‖z‖)` |
//! | `TamedPlus` | `z / (1 + s‖z‖)` |
//! | `StoppedIncrementTamed` | `z / (1 + ‖z‖^q)` |

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::lyapunov::LyapunovPair;
use crate::paths::MasterPath;
use crate::problem::{norm, Partition, SdeProblem, MAX_DIM};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    EulerStopped,
    LinearImplicitStopped,
    TamedMax,
    TamedPlus,
    StoppedIncrementTamed,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 5] = [
        SchemeKind::EulerStopped,
        SchemeKind::LinearImplicitStopped,
        SchemeKind::TamedMax,
        SchemeKind::TamedPlus,
        SchemeKind::StoppedIncrementTamed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::EulerStopped => "euler",
            SchemeKind::LinearImplicitStopped => "linear_implicit",
            SchemeKind::TamedMax => "tamed_max",
            SchemeKind::TamedPlus => "tamed_plus",
            SchemeKind::StoppedIncrementTamed => "sit",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "euler" | "euler_stopped" | "eulerstopped" => Ok(SchemeKind::EulerStopped),
            "linear_implicit" | "linear_implicit_stopped" | "linearimplicitstopped" => {
                Ok(SchemeKind::LinearImplicitStopped)
            }
            "tamed_max" | "tamedmax" => Ok(SchemeKind::TamedMax),
            "tamed_plus" | "tamedplus" => Ok(SchemeKind::TamedPlus),
            "sit" | "stopped_increment_tamed" | "stoppedincrementtamed" => Ok(SchemeKind::StoppedIncrementTamed),
            other => Err(Error::Config(format!(
                "unknown scheme `{other}`; expected euler, linear_implicit, tamed_max, tamed_plus or sit"
            ))),
        }
    }
}

/// `exp(√|ln(N/T)|)`, the norm level of the proposed method.
pub fn stop_level(steps: usize, horizon: f64) -> f64 {
    (steps as f64 / horizon).ln().abs().sqrt().exp()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LevelRule {
    /// `h ↦ exp(√|ln h|)`; non-increasing on `(0, 1]`.
    ExpSqrtLog,
    Constant(f64),
}

impl LevelRule {
    pub fn level(self, mesh: f64) -> f64 {
        match self {
            LevelRule::ExpSqrtLog => mesh.ln().abs().sqrt().exp(),
            LevelRule::Constant(c) => c,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StoppingKind {
    WholeSpace,
    NormLevel,
    /// Domain predicate first, then the norm level.
    DomainAndNormLevel,
}

/// The family `(D_h)_h` of admissible regions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StoppingFamily {
    pub kind: StoppingKind,
    pub level_rule: LevelRule,
}

impl StoppingFamily {
    pub fn whole_space() -> Self {
        StoppingFamily { kind: StoppingKind::WholeSpace, level_rule: LevelRule::Constant(f64::INFINITY) }
    }

    pub fn norm_level(rule: LevelRule) -> Self {
        StoppingFamily { kind: StoppingKind::NormLevel, level_rule: rule }
    }

    pub fn domain_and_level(rule: LevelRule) -> Self {
        StoppingFamily { kind: StoppingKind::DomainAndNormLevel, level_rule: rule }
    }

    /// Domain only: `D_h = D` for all `h`.
    pub fn domain_only() -> Self {
        Self::domain_and_level(LevelRule::Constant(f64::INFINITY))
    }

    pub fn level(&self, mesh: f64) -> f64 {
        match self.kind {
            StoppingKind::WholeSpace => f64::INFINITY,
            _ => self.level_rule.level(mesh),
        }
    }

    /// `x ∈ D_h` for the given level (see [`StoppingFamily::level`]).
    #[inline]
    pub fn contains(&self, prob: &SdeProblem, x: &[f64], level: f64) -> bool {
        match self.kind {
            StoppingKind::WholeSpace => true,
            StoppingKind::NormLevel => norm(x) <= level,
            StoppingKind::DomainAndNormLevel => prob.domain.contains(x) && norm(x) <= level,
        }
    }

    /// Some mesh `h ∈ (0, 1]` with `x` in the interior of `D_h`, if one exists
    /// among `2^{-k}`, `k ≤ 1000`. Used to check `∪_h int D_h ⊇ D` on samples.
    pub fn covering_mesh(&self, prob: &SdeProblem, x: &[f64]) -> Option<f64> {
        if self.kind == StoppingKind::DomainAndNormLevel && !prob.domain.contains(x) {
            return None;
        }
        (0..=1000).map(|k| 0.5f64.powi(k)).find(|&h| norm(x) < self.level(h))
    }
}

/// Scheme kind, taming exponent and stopping family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchemeSpec {
    pub kind: SchemeKind,
    /// Taming exponent, used by `StoppedIncrementTamed` only.
    pub q: f64,
    pub stopping: StoppingFamily,
}

pub const DEFAULT_Q: f64 = 2.0;

impl SchemeSpec {
    pub fn new(kind: SchemeKind, q: f64, stopping: StoppingFamily) -> Result<Self> {
        if kind == SchemeKind::StoppedIncrementTamed && !(q > 1.0 && q.is_finite()) {
            return invalid(format!("taming exponent q must exceed 1, got {q}"));
        }
        Ok(SchemeSpec { kind, q, stopping })
    }

    /// The proposed method: increment taming with exponent `q`, stopped outside
    /// `D ∩ {‖x‖ ≤ exp(√|ln h|)}`.
    pub fn proposed(q: f64) -> Result<Self> {
        Self::new(
            SchemeKind::StoppedIncrementTamed,
            q,
            StoppingFamily::domain_and_level(LevelRule::ExpSqrtLog),
        )
    }

    /// `kind` with its customary stopping family for `prob`: the proposed
    /// family for increment taming, otherwise no stopping beyond the domain.
    pub fn default_for(kind: SchemeKind, q: f64, prob: &SdeProblem) -> Result<Self> {
        if kind == SchemeKind::StoppedIncrementTamed {
            return Self::proposed(q);
        }
        let stopping = match prob.domain {
            crate::problem::Domain::Whole => StoppingFamily::whole_space(),
            _ => StoppingFamily::domain_only(),
        };
        Self::new(kind, q, stopping)
    }
}

/// `z / (1 + ‖z‖^q)`.
pub fn tamed_increment(z: &[f64], q: f64) -> Vec<f64> {
    let r = norm(z);
    let k = 1.0 / (1.0 + taming_power(r, q));
    z.iter().map(|v| v * k).collect()
}

#[inline]
fn taming_power(r: f64, q: f64) -> f64 {
    if q == 2.0 {
        r * r
    } else {
        r.powf(q)
    }
}

/// `sup_{r ≥ 0} r / (1 + r^q)`, the uniform bound on increment-tamed steps.
pub fn sit_increment_bound(q: f64) -> f64 {
    if q <= 1.0 {
        return 1.0;
    }
    let r = (q - 1.0).powf(-1.0 / q);
    r * (q - 1.0) / q
}

/// Evaluates one scheme from a fixed grid state, caching `μ(x)`, `σ(x)` so
/// several sub-step times of the same interval cost one coefficient call.
pub struct Stepper<'a> {
    spec: &'a SchemeSpec,
    prob: &'a SdeProblem,
    level: f64,
    x: [f64; MAX_DIM],
    mu: [f64; MAX_DIM],
    sigma: [f64; MAX_DIM * MAX_DIM],
    split: [f64; MAX_DIM],
    active: bool,
}

impl<'a> Stepper<'a> {
    /// `mesh` selects the admissible region `D_mesh`.
    pub fn new(spec: &'a SchemeSpec, prob: &'a SdeProblem, mesh: f64) -> Result<Self> {
        if spec.kind == SchemeKind::LinearImplicitStopped && !prob.supports_linear_implicit() {
            return invalid("the linear-implicit scheme needs a model with a semilinear split");
        }
        Ok(Stepper {
            spec,
            prob,
            level: spec.stopping.level(mesh),
            x: [0.0; MAX_DIM],
            mu: [0.0; MAX_DIM],
            sigma: [0.0; MAX_DIM * MAX_DIM],
            split: [0.0; MAX_DIM],
            active: false,
        })
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    #[inline]
    pub fn is_admissible(&self, x: &[f64]) -> bool {
        self.spec.stopping.contains(self.prob, x, self.level)
    }

    /// Loads the grid state `x`; returns whether `x ∈ D_h`.
    pub fn prepare(&mut self, x: &[f64]) -> Result<bool> {
        let (d, m) = (self.prob.dim, self.prob.noise_dim);
        self.x[..d].copy_from_slice(x);
        self.active = self.is_admissible(x);
        if !self.active {
            return Ok(false);
        }
        self.prob.drift_into(x, &mut self.mu[..d]);
        self.prob.diffusion_into(x, &mut self.sigma[..d * m]);
        if self.spec.kind == SchemeKind::LinearImplicitStopped {
            self.prob.semilinear_into(x, &mut self.split[..d]);
        }
        if !self.mu[..d].iter().chain(&self.sigma[..d * m]).chain(&self.split[..d]).all(|v| v.is_finite()) {
            return Err(Error::NumericOverflow { what: "coefficients", x: x.to_vec() });
        }
        Ok(true)
    }

    /// `Φ` at elapsed time `s` with Brownian increment `dw`, from the prepared state.
    #[inline]
    pub fn eval(&self, s: f64, dw: &[f64], out: &mut [f64]) -> Result<()> {
        let (d, m) = (self.prob.dim, self.prob.noise_dim);
        let x = &self.x[..d];
        if !self.active {
            out[..d].copy_from_slice(x);
            return Ok(());
        }
        let mut z = [0.0; MAX_DIM];
        for i in 0..d {
            let mut acc = self.mu[i] * s;
            for k in 0..m {
                acc += self.sigma[i * m + k] * dw[k];
            }
            z[i] = acc;
        }
        let z = &z[..d];
        match self.spec.kind {
            SchemeKind::EulerStopped => {
                for i in 0..d {
                    out[i] = x[i] + z[i];
                }
            }
            SchemeKind::LinearImplicitStopped => {
                for i in 0..d {
                    let denom = 1.0 - s * self.split[i];
                    if denom <= 0.0 {
                        return Err(Error::NumericOverflow { what: "linear-implicit denominator", x: x.to_vec() });
                    }
                    out[i] = (x[i] + (z[i] - self.mu[i] * s)) / denom;
                }
            }
            SchemeKind::TamedMax | SchemeKind::TamedPlus | SchemeKind::StoppedIncrementTamed => {
                let r = norm(z);
                let k = match self.spec.kind {
                    SchemeKind::TamedMax => 1.0 / (s * r).max(1.0),
                    SchemeKind::TamedPlus => 1.0 / (1.0 + s * r),
                    _ => 1.0 / (1.0 + taming_power(r, self.spec.q)),
                };
                for i in 0..d {
                    out[i] = x[i] + z[i] * k;
                }
            }
        }
        if !out[..d].iter().all(|v| v.is_finite()) {
            return Err(Error::NumericOverflow { what: "scheme step", x: x.to_vec() });
        }
        Ok(())
    }
}

/// One step: the value at elapsed time `s ∈ (0, h]` from grid value `x`,
/// with `h` the mesh selecting `D_h`.
pub fn step(spec: &SchemeSpec, prob: &SdeProblem, x: &[f64], s: f64, h: f64, dw: &[f64]) -> Result<Vec<f64>> {
    if !(s > 0.0 && s <= h) {
        return invalid(format!("elapsed time {s} must lie in (0, {h}]"));
    }
    if x.len() != prob.dim || dw.len() != prob.noise_dim {
        return invalid("state or increment has the wrong dimension");
    }
    if !x.iter().all(|v| v.is_finite()) {
        return invalid("state must be finite");
    }
    let mut stepper = Stepper::new(spec, prob, h)?;
    stepper.prepare(x)?;
    let mut out = vec![0.0; prob.dim];
    stepper.eval(s, dw, &mut out)?;
    Ok(out)
}

/// Grid values of one scheme path with its stopping data.
#[derive(Clone, Debug, PartialEq)]
pub struct SchemePath {
    pub partition: Partition,
    pub dim: usize,
    /// `(steps + 1) × dim`, row-major.
    pub states: Vec<f64>,
    /// First grid time outside `D_h`, or `T`.
    pub tau: f64,
    /// Grid index at which the indicator first failed.
    pub frozen_from: Option<usize>,
}

impl SchemePath {
    pub fn state(&self, n: usize) -> &[f64] {
        &self.states[n * self.dim..(n + 1) * self.dim]
    }

    pub fn stopped_early(&self) -> bool {
        self.tau < self.partition.horizon()
    }
}

/// Iterates the scheme over `part` with per-interval increments (`steps × m`).
pub fn simulate(
    spec: &SchemeSpec,
    prob: &SdeProblem,
    part: &Partition,
    x0: &[f64],
    increments: &[f64],
) -> Result<SchemePath> {
    let (d, m, n) = (prob.dim, prob.noise_dim, part.steps());
    if x0.len() != d || !x0.iter().all(|v| v.is_finite()) {
        return invalid("initial value must be finite with the problem dimension");
    }
    if increments.len() != n * m {
        return invalid(format!("expected {} increments, got {}", n * m, increments.len()));
    }
    let mut stepper = Stepper::new(spec, prob, part.mesh())?;
    let mut states = vec![0.0; (n + 1) * d];
    states[..d].copy_from_slice(x0);
    let mut frozen_from = None;
    for i in 0..n {
        let (head, tail) = states.split_at_mut((i + 1) * d);
        let x = &head[i * d..];
        let out = &mut tail[..d];
        if frozen_from.is_some() {
            out.copy_from_slice(x);
            continue;
        }
        if !stepper.prepare(x)? {
            frozen_from = Some(i);
            out.copy_from_slice(x);
            continue;
        }
        stepper.eval(part.step_size(i), &increments[i * m..(i + 1) * m], out)?;
    }
    if frozen_from.is_none() && !stepper.is_admissible(&states[n * d..]) {
        frozen_from = Some(n);
    }
    let tau = frozen_from.map_or(part.horizon(), |k| part.time(k));
    Ok(SchemePath { partition: part.clone(), dim: d, states, tau, frozen_from })
}

/// Continuous-time value `Y_t` from the grid state at `⌊t⌋` and `W_t − W_{⌊t⌋}`.
pub fn interpolate(
    spec: &SchemeSpec,
    prob: &SdeProblem,
    path: &SchemePath,
    master: &MasterPath,
    t: f64,
) -> Result<Vec<f64>> {
    let part = &path.partition;
    let n = part.floor_index(t)?;
    let tn = part.time(n);
    let k1 = master.index_of(t)?;
    if t == tn {
        return Ok(path.state(n).to_vec());
    }
    let k0 = master.index_of(tn)?;
    let dw = master.increment(k0, k1);
    let mut stepper = Stepper::new(spec, prob, part.mesh())?;
    stepper.prepare(path.state(n))?;
    let mut out = vec![0.0; prob.dim];
    stepper.eval(t - tn, &dw, &mut out)?;
    Ok(out)
}

/// Largest `U(x) h^α / c` over the samples that lie in `D_h`; the inclusion
/// `D_h ⊆ {U ≤ c / h^α}` holds on the samples iff this is `≤ 1`.
pub fn level_set_inclusion_ratio(
    spec: &SchemeSpec,
    prob: &SdeProblem,
    pair: &LyapunovPair,
    mesh: f64,
    c: f64,
    alpha: f64,
    samples: &[Vec<f64>],
) -> f64 {
    let level = spec.stopping.level(mesh);
    samples
        .iter()
        .filter(|x| spec.stopping.contains(prob, x, level))
        .map(|x| pair.u(x) * mesh.powf(alpha) / c)
        .fold(0.0, f64::max)
}
