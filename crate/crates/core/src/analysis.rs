//! Closed-form bounds and classifiers: the finite-mesh exponential-moment
//! prefactor, Gaussian exponential-moment bounds with Monte Carlo checks, and
//! the taxonomy of which schemes keep exponential moments finite.

use std::cmp::Ordering;
use std::fmt;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Result};
use crate::montecarlo::{run_paths, McEstimate};
use crate::paths::NormalStream;
use crate::problem::HsMatrix;
use crate::schemes::SchemeKind;

/// Inputs of the prefactor `F(mesh)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundInputs {
    pub rho: f64,
    pub c: f64,
    pub p: f64,
    pub q: f64,
    pub gamma: f64,
    pub horizon: f64,
    pub mesh: f64,
    pub alpha: f64,
}

/// Upper end of the admissible window for `alpha`:
/// `½ min{1/(7γ+2), (q−1)/((q+8)γ+2)}` (exclusive).
pub fn alpha_window(gamma: f64, q: f64) -> f64 {
    0.5 * (1.0 / (7.0 * gamma + 2.0)).min((q - 1.0) / ((q + 8.0) * gamma + 2.0))
}

impl BoundInputs {
    /// Inputs with `alpha` at the window midpoint.
    pub fn new(rho: f64, c: f64, p: f64, q: f64, gamma: f64, horizon: f64, mesh: f64) -> Self {
        BoundInputs { rho, c, p, q, gamma, horizon, mesh, alpha: 0.5 * alpha_window(gamma, q) }
    }

    pub fn with_alpha(self, alpha: f64) -> Self {
        BoundInputs { alpha, ..self }
    }

    fn validate(&self) -> Result<()> {
        let all = [self.rho, self.c, self.p, self.q, self.gamma, self.horizon, self.mesh, self.alpha];
        if all.iter().any(|v| !v.is_finite()) {
            return invalid("bound inputs must be finite");
        }
        if self.p < 1.0 || self.c < 1.0 {
            return invalid(format!("need p >= 1 and c >= 1, got p = {}, c = {}", self.p, self.c));
        }
        if self.q <= 1.0 {
            return invalid(format!("need q > 1, got {}", self.q));
        }
        if self.gamma < 0.0 || self.horizon <= 0.0 || self.mesh <= 0.0 {
            return invalid("need gamma >= 0, T > 0 and mesh > 0");
        }
        let hi = alpha_window(self.gamma, self.q);
        if !(self.alpha > 0.0 && self.alpha < hi) {
            return invalid(format!("alpha = {} outside (0, {hi})", self.alpha));
        }
        Ok(())
    }
}

/// `F = exp(max(ρ,1) · min(mesh,1)^{e1} · exp(B^{e2}))` with
/// `B = 5cq·max(T,1)`, kept as nested logarithms.
///
/// `log_log_inner = e2·ln B = ln(B^{e2})` is always finite;
/// `log_log_f = ln max(ρ,1) + e1·ln min(mesh,1) + B^{e2}` and
/// `log_f = exp(log_log_f)` are `+∞` once they leave the `f64` range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrefactorLog {
    pub e1: f64,
    pub e2: f64,
    pub alpha: f64,
    pub log_base: f64,
    pub log_log_inner: f64,
    /// `ln max(ρ,1) + e1·ln min(mesh,1)`, the part of `log_log_f` outside the tower.
    pub log_outer: f64,
    pub log_log_f: f64,
    pub log_f: f64,
}

fn exponents(inp: &BoundInputs) -> (f64, f64) {
    let (q, g, a) = (inp.q, inp.gamma, inp.alpha);
    let e1 = 0.5f64.min((q - 1.0) / 2.0 - a * (q + 1.0) * g) - a * (7.0 * g + 2.0);
    let e2 = 9.0 * inp.p * (q + 1.0) * g.max(1.0) * g.max(q).max(2.0) * (g + 2.0);
    (e1, e2)
}

/// `ln F` for `inp`, in nested form.
pub fn theorem_prefactor_log(inp: &BoundInputs) -> Result<PrefactorLog> {
    inp.validate()?;
    prefactor_at_log_mesh(inp, inp.mesh.ln())
}

/// As [`theorem_prefactor_log`], with the mesh given by its logarithm so that
/// meshes far below `f64::MIN_POSITIVE` can be probed. `inp.mesh` is ignored.
pub fn prefactor_at_log_mesh(inp: &BoundInputs, log_mesh: f64) -> Result<PrefactorLog> {
    BoundInputs { mesh: 1.0, ..*inp }.validate()?;
    if log_mesh.is_nan() {
        return invalid("log mesh is NaN");
    }
    let (e1, e2) = exponents(inp);
    if !(e1 > 0.0) {
        return invalid(format!("exponent e1 = {e1} is not positive; alpha outside its window"));
    }
    let log_base = (5.0 * inp.c * inp.q * inp.horizon.max(1.0)).ln();
    let log_log_inner = e2 * log_base;
    let log_outer = inp.rho.max(1.0).ln() + e1 * log_mesh.min(0.0);
    let log_log_f = log_outer + log_log_inner.exp();
    Ok(PrefactorLog {
        e1,
        e2,
        alpha: inp.alpha,
        log_base,
        log_log_inner,
        log_outer,
        log_log_f,
        log_f: log_log_f.exp(),
    })
}

/// Sign of `a1 + e^{l1} − (a2 + e^{l2})` without forming `e^{l}`.
fn cmp_outer_plus_tower(a1: f64, l1: f64, a2: f64, l2: f64) -> Ordering {
    if l1 == l2 {
        return a1.total_cmp(&a2);
    }
    let (hi, lo, sign) = if l1 > l2 { (l1, l2, Ordering::Greater) } else { (l2, l1, Ordering::Less) };
    // |e^{l1} − e^{l2}| = e^{hi}(1 − e^{lo − hi})
    let log_gap = hi + (-(lo - hi).exp_m1()).ln();
    let d = if sign == Ordering::Greater { a2 - a1 } else { a1 - a2 };
    // towers differ by e^{log_gap} in direction `sign`; the outer parts by d against it
    if d <= 0.0 || log_gap > d.ln() {
        sign
    } else if log_gap < d.ln() {
        sign.reverse()
    } else {
        Ordering::Equal
    }
}

impl PrefactorLog {
    /// Orders two prefactors by `ln F` exactly, even when both overflow.
    pub fn cmp_log_f(&self, other: &PrefactorLog) -> Ordering {
        cmp_outer_plus_tower(self.log_outer, self.log_log_inner, other.log_outer, other.log_log_inner)
    }

    /// Whether `x ≤ ln F`.
    pub fn admits_log(&self, x: f64) -> bool {
        if x.is_nan() {
            return false;
        }
        if x <= 0.0 {
            return true;
        }
        // x ≤ exp(outer + e^{inner})  ⇔  ln x − outer ≤ e^{inner}
        let lhs = x.ln() - self.log_outer;
        lhs <= 0.0 || lhs.ln() <= self.log_log_inner
    }
}

/// `2·exp(t‖A‖²_HS / 2)`, a bound on `E[exp(‖A W_t‖)]`.
pub fn gauss_exp_bound(a: &HsMatrix, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return invalid(format!("time must be non-negative, got {t}"));
    }
    Ok(2.0 * (0.5 * t * a.hs_norm_sq()).exp())
}

/// `E[exp(|a W_t|)] = 2 e^{a²t/2} Φ(|a|√t)` for scalar `a`.
pub fn gauss_abs_exp_1d(a: f64, t: f64) -> f64 {
    let s = a.abs() * t.sqrt();
    let phi = Normal::standard().cdf(s);
    2.0 * (0.5 * s * s).exp() * phi
}

/// `(2n)!/(2^n n!) · ‖A‖_HS^{2n} · t^n`, a bound on `E‖A W_t‖^{2n}`.
pub fn gauss_even_moment_bound(a: &HsMatrix, t: f64, n: u32) -> f64 {
    let double_factorial: f64 = (1..=n).map(|k| (2 * k - 1) as f64).product();
    double_factorial * (a.hs_norm_sq() * t).powi(n as i32)
}

/// A Monte Carlo estimate against a closed-form bound.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundCheck {
    pub bound: f64,
    pub estimate: McEstimate,
}

impl BoundCheck {
    /// `estimate ≤ bound + 3·std_error`.
    pub fn passed(&self) -> bool {
        self.estimate.usable && self.estimate.mean <= self.bound + 3.0 * self.estimate.std_error
    }
}

/// `‖A W_t‖` for `n_samples` independent draws, sample `j` from stream `j`.
fn gauss_norms(a: &HsMatrix, t: f64, n_samples: usize, seed: u64, workers: usize) -> Result<Vec<f64>> {
    if n_samples < 2 {
        return invalid("need at least two samples");
    }
    let sqrt_t = t.sqrt();
    run_paths(n_samples, workers, |j| {
        let mut s = NormalStream::new(seed, j);
        let w: Vec<f64> = (0..a.cols).map(|_| sqrt_t * s.next_normal()).collect();
        Ok(a.mul_vec(&w).iter().map(|v| v * v).sum::<f64>().sqrt())
    })
}

/// Monte Carlo estimate of `E[exp(‖A W_t‖)]` against [`gauss_exp_bound`].
pub fn gauss_exp_check(a: &HsMatrix, t: f64, n_samples: usize, seed: u64, workers: usize) -> Result<BoundCheck> {
    let bound = gauss_exp_bound(a, t)?;
    let norms = gauss_norms(a, t, n_samples, seed, workers)?;
    Ok(BoundCheck { bound, estimate: McEstimate::from_log(&norms, 0) })
}

/// Monte Carlo estimate of `E‖A W_t‖^{2n}` against [`gauss_even_moment_bound`].
pub fn gauss_even_moment_check(
    a: &HsMatrix,
    t: f64,
    n: u32,
    n_samples: usize,
    seed: u64,
    workers: usize,
) -> Result<BoundCheck> {
    if !(t >= 0.0) {
        return invalid(format!("time must be non-negative, got {t}"));
    }
    let norms = gauss_norms(a, t, n_samples, seed, workers)?;
    let powers: Vec<f64> = norms.iter().map(|r| r.powi(2 * n as i32)).collect();
    Ok(BoundCheck { bound: gauss_even_moment_bound(a, t, n), estimate: McEstimate::from_linear(&powers, 0) })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Verdict {
    /// `sup_N sup_t E[exp(p‖Y_t^N‖^q)] < ∞`.
    PreservedBounded,
    /// Finite for each `N` but `lim_N inf_t E[…] = ∞`.
    FinitePerNUnboundedInN,
    /// `inf_t E[…] = ∞` for every `N`.
    InfiniteForEveryN,
    Unclassified,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::PreservedBounded => "PreservedBounded",
            Verdict::FinitePerNUnboundedInN => "FinitePerNUnboundedInN",
            Verdict::InfiniteForEveryN => "InfiniteForEveryN",
            Verdict::Unclassified => "Unclassified",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FinitenessVerdict {
    pub verdict: Verdict,
    pub basis: &'static str,
}

pub const BASIS_EULER: &str = "stopped Euler: inf_t E[exp(p|Y_t^N|^q)] = inf for all N, p > 0, q > 2";
pub const BASIS_LINEAR_IMPLICIT: &str =
    "stopped linear-implicit Euler: inf_t E[exp(p|Y_t^N|^q)] = inf for all N, p > 0, q > 2";
pub const BASIS_TAMED: &str =
    "tamed Euler: finite for each N, lim_N inf_t E[exp(p|Y_t^N|^q)] = inf for p > 0, q > 3";
pub const BASIS_SIT: &str =
    "stopped increment-tamed: sup_N sup_t E[exp(delta|Y_t^N|^4)] <= E[exp(delta|X_0|^4)] for the cubic model, delta < 1/2";
pub const BASIS_SIT_DOMINATED: &str =
    "stopped increment-tamed: p|x|^q <= C + delta|x|^4 for q < 4, reducing to the quartic case";
pub const BASIS_EXTERNAL: &str = "external citation";
pub const BASIS_NONE: &str = "not classified";

/// Finiteness of `E[exp(p‖Y_t^N‖^q)]` along `N`, from the cubic-model
/// results only. Cases those results do not cover are `Unclassified`.
pub fn classify_exp_moment(kind: SchemeKind, p: f64, q: f64) -> FinitenessVerdict {
    let unclassified = FinitenessVerdict { verdict: Verdict::Unclassified, basis: BASIS_NONE };
    if !(p > 0.0 && q > 0.0 && p.is_finite() && q.is_finite()) {
        return unclassified;
    }
    match kind {
        SchemeKind::EulerStopped if q > 2.0 => {
            FinitenessVerdict { verdict: Verdict::InfiniteForEveryN, basis: BASIS_EULER }
        }
        SchemeKind::LinearImplicitStopped if q > 2.0 => {
            FinitenessVerdict { verdict: Verdict::InfiniteForEveryN, basis: BASIS_LINEAR_IMPLICIT }
        }
        SchemeKind::TamedMax | SchemeKind::TamedPlus if q > 3.0 => {
            FinitenessVerdict { verdict: Verdict::FinitePerNUnboundedInN, basis: BASIS_TAMED }
        }
        SchemeKind::StoppedIncrementTamed if q == 4.0 && p < 0.5 => {
            FinitenessVerdict { verdict: Verdict::PreservedBounded, basis: BASIS_SIT }
        }
        SchemeKind::StoppedIncrementTamed if q < 4.0 => {
            FinitenessVerdict { verdict: Verdict::PreservedBounded, basis: BASIS_SIT_DOMINATED }
        }
        _ => unclassified,
    }
}

/// Polynomial moments `E|Y_T^N|^p` along `N`: finite for each `N` but
/// unbounded for classical Euler, a result cited rather than proved here.
pub fn classify_polynomial_moment(kind: SchemeKind) -> FinitenessVerdict {
    match kind {
        SchemeKind::EulerStopped => {
            FinitenessVerdict { verdict: Verdict::FinitePerNUnboundedInN, basis: BASIS_EXTERNAL }
        }
        _ => FinitenessVerdict { verdict: Verdict::Unclassified, basis: BASIS_NONE },
    }
}

/// `qβ > 2α + 1`: a one-step increment growing like `h^{−α}` with noise
/// exponent `β` has infinite `q`-exponential moments.
pub fn unbounded_criterion(alpha: f64, beta: f64, q: f64) -> Result<bool> {
    if !(alpha > 0.0 && beta > 0.0 && q > 0.0) {
        return invalid(format!("alpha, beta, q must be positive, got {alpha}, {beta}, {q}"));
    }
    Ok(q * beta > 2.0 * alpha + 1.0)
}

/// `(e^x, 2·Σ_{n<n_terms} x^{2n}/(2n)!)`; the two satisfy
/// `e^x + e^{−x} = 2Σ` up to the series tail.
pub fn exp_series_check(x: f64, n_terms: usize) -> Result<(f64, f64)> {
    if !(x.abs() <= 30.0) || n_terms == 0 {
        return invalid(format!("need |x| <= 30 and at least one term, got x = {x}, {n_terms} terms"));
    }
    let mut term = 1.0;
    let mut sum = 0.0;
    for n in 0..n_terms {
        sum += term;
        let k = 2.0 * n as f64;
        term *= x * x / ((k + 1.0) * (k + 2.0));
    }
    Ok((x.exp(), 2.0 * sum))
}
