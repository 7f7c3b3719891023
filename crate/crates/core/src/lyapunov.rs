//! Lyapunov pairs `(U, Ū, ρ)`, the formal generator and the residual of the
//! exponential Lyapunov inequality
//!
//! ```text
//! (G U)(x) + ½‖σ(x)*∇U(x)‖² + Ū(x) ≤ ρ U(x),
//! G U = ⟨μ, ∇U⟩ + ½ trace(σσ* Hess U).
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::problem::{ScalarField, SdeProblem, VecField, MAX_DIM};

mod zoo;

pub use zoo::{model_by_name, model_names, model_zoo};

/// Named real parameters of a model.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Params(BTreeMap<String, f64>);

impl Params {
    pub fn from_pairs(pairs: &[(&str, f64)]) -> Self {
        Params(pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect())
    }

    /// Panics on unknown names; model code only reads its own defaults.
    pub fn get(&self, name: &str) -> f64 {
        match self.0.get(name) {
            Some(v) => *v,
            None => panic!("model parameter `{name}` missing"),
        }
    }

    pub fn try_get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    pub fn set(&mut self, name: &str, value: f64) {
        self.0.insert(name.to_string(), value);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// A function `U ≥ 0` with closed-form gradient and Hessian, its companion
/// `Ū` and rate `ρ`.
#[derive(Clone)]
pub struct LyapunovPair {
    pub dim: usize,
    u: ScalarField,
    grad: VecField,
    /// Writes the `d × d` Hessian row-major.
    hess: VecField,
    ubar: ScalarField,
    pub rho: f64,
    pub params: Params,
    /// `inf Ū`, or `-∞` when unbounded below.
    pub ubar_lower_bound: f64,
}

impl fmt::Debug for LyapunovPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LyapunovPair")
            .field("dim", &self.dim)
            .field("rho", &self.rho)
            .field("params", &self.params)
            .field("ubar_lower_bound", &self.ubar_lower_bound)
            .finish()
    }
}

impl LyapunovPair {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dim: usize,
        u: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        hess: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        ubar: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        rho: f64,
        params: Params,
        ubar_lower_bound: f64,
    ) -> Self {
        LyapunovPair {
            dim,
            u: Arc::new(u),
            grad: Arc::new(grad),
            hess: Arc::new(hess),
            ubar: Arc::new(ubar),
            rho,
            params,
            ubar_lower_bound,
        }
    }

    #[inline]
    pub fn u(&self, x: &[f64]) -> f64 {
        (self.u)(x)
    }

    #[inline]
    pub fn ubar(&self, x: &[f64]) -> f64 {
        (self.ubar)(x)
    }

    pub fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        (self.grad)(x, out)
    }

    pub fn hess_into(&self, x: &[f64], out: &mut [f64]) {
        (self.hess)(x, out)
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        self.grad_into(x, &mut g);
        g
    }

    pub fn hess(&self, x: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; self.dim * self.dim];
        self.hess_into(x, &mut h);
        h
    }

    /// Same pair with a larger rate. Since `U ≥ 0`, raising `ρ` keeps the
    /// inequality valid; lowering it would not, so that is rejected.
    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        if !(rho.is_finite() && rho >= self.rho) {
            return Err(Error::InvalidArgument(format!(
                "rate {rho} is below the model rate {}; the Lyapunov inequality would not hold",
                self.rho
            )));
        }
        let mut out = self.clone();
        out.rho = rho;
        Ok(out)
    }

    /// Same pair with `Ū` replaced by `Ū + kappa`.
    pub fn with_ubar_shift(&self, kappa: f64) -> Self {
        let inner = self.ubar.clone();
        let mut out = self.clone();
        out.ubar = Arc::new(move |x| inner(x) + kappa);
        out.ubar_lower_bound += kappa;
        out
    }
}

fn check_finite(v: f64, what: &'static str, x: &[f64]) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NumericOverflow { what, x: x.to_vec() })
    }
}

struct Pieces {
    generator: f64,
    noise_grad_sq: f64,
}

fn generator_pieces(prob: &SdeProblem, pair: &LyapunovPair, x: &[f64]) -> Result<Pieces> {
    let (d, m) = (prob.dim, prob.noise_dim);
    if x.len() != d || pair.dim != d {
        return Err(Error::InvalidArgument(format!(
            "state of length {} for a problem of dimension {d}",
            x.len()
        )));
    }
    let mut mu = [0.0; MAX_DIM];
    let mut sigma = [0.0; MAX_DIM * MAX_DIM];
    let mut grad = [0.0; MAX_DIM];
    let mut hess = [0.0; MAX_DIM * MAX_DIM];
    prob.drift_into(x, &mut mu[..d]);
    prob.diffusion_into(x, &mut sigma[..d * m]);
    pair.grad_into(x, &mut grad[..d]);
    pair.hess_into(x, &mut hess[..d * d]);

    let mut drift_term = 0.0;
    for i in 0..d {
        drift_term += mu[i] * grad[i];
    }
    let mut trace = 0.0;
    let mut noise_grad_sq = 0.0;
    for k in 0..m {
        let mut quad = 0.0;
        let mut proj = 0.0;
        for i in 0..d {
            let si = sigma[i * m + k];
            proj += si * grad[i];
            let mut row = 0.0;
            for j in 0..d {
                row += hess[i * d + j] * sigma[j * m + k];
            }
            quad += si * row;
        }
        trace += quad;
        noise_grad_sq += proj * proj;
    }
    let generator = check_finite(drift_term + 0.5 * trace, "generator", x)?;
    Ok(Pieces { generator, noise_grad_sq: check_finite(noise_grad_sq, "noise gradient", x)? })
}

/// `(G U)(x) = ⟨μ(x), ∇U(x)⟩ + ½ trace(σ(x)σ(x)* Hess U(x))`.
pub fn generator_apply(prob: &SdeProblem, pair: &LyapunovPair, x: &[f64]) -> Result<f64> {
    Ok(generator_pieces(prob, pair, x)?.generator)
}

/// `(G U)(x) + ½‖σ(x)*∇U(x)‖² + Ū(x) − ρU(x)`; the pair is valid where this is `≤ 0`.
pub fn lyapunov_residual(prob: &SdeProblem, pair: &LyapunovPair, x: &[f64]) -> Result<f64> {
    let p = generator_pieces(prob, pair, x)?;
    let value = p.generator + 0.5 * p.noise_grad_sq + pair.ubar(x) - pair.rho * pair.u(x);
    check_finite(value, "residual", x)
}

/// A named parameter constraint such as `eps <= delta / beta^2`.
#[derive(Clone, Copy)]
pub struct ParamConstraint {
    pub label: &'static str,
    pub check: fn(&Params) -> bool,
}

impl fmt::Debug for ParamConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label)
    }
}

/// A zoo entry: SDE, Lyapunov pair, parameter constraints and sampling data.
#[derive(Clone, Debug)]
pub struct ModelCard {
    pub name: &'static str,
    pub problem: SdeProblem,
    pub pair: LyapunovPair,
    pub constraints: Vec<ParamConstraint>,
    pub notes: &'static str,
    /// Box used for residual sweeps and growth checks.
    pub sampling_box: Vec<(f64, f64)>,
    /// Canonical deterministic initial value.
    pub x0: Vec<f64>,
    /// `γ = c(c + 1)` for the growth constant `c`.
    pub gamma: f64,
}

impl ModelCard {
    pub fn params(&self) -> &Params {
        &self.pair.params
    }

    /// Labels of the constraints that fail for the stored parameters.
    pub fn violated_constraints(&self) -> Vec<&'static str> {
        self.constraints
            .iter()
            .filter(|c| !(c.check)(&self.pair.params))
            .map(|c| c.label)
            .collect()
    }

    /// Rebuilds this model with some parameters overridden.
    pub fn with_params(&self, overrides: &[(String, f64)]) -> Result<ModelCard> {
        zoo::build(self.name, overrides)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::halton_point;

    fn finite_difference_mismatch(card: &ModelCard, x: &[f64]) -> f64 {
        let pair = &card.pair;
        let d = pair.dim;
        let h = 1e-5 * (1.0 + crate::problem::norm(x));
        let grad = pair.grad(x);
        let hess = pair.hess(x);
        let scale = 1.0
            + grad.iter().chain(hess.iter()).fold(0.0f64, |a, v| a.max(v.abs()));
        let mut worst = 0.0f64;
        for i in 0..d {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            let fd = (pair.u(&xp) - pair.u(&xm)) / (2.0 * h);
            worst = worst.max((fd - grad[i]).abs() / scale);
            let gp = pair.grad(&xp);
            let gm = pair.grad(&xm);
            for j in 0..d {
                let fd = (gp[j] - gm[j]) / (2.0 * h);
                worst = worst.max((fd - hess[j * d + i]).abs() / scale);
            }
        }
        worst
    }

    fn pseudo_random_points(card: &ModelCard, n: u64) -> Vec<Vec<f64>> {
        (0..n).map(|i| halton_point(7919 + 13 * i, &card.sampling_box)).collect()
    }

    #[test]
    fn zoo_has_nine_distinct_cards() {
        let zoo = model_zoo();
        assert_eq!(zoo.len(), 9);
        let mut names: Vec<_> = zoo.iter().map(|c| c.name).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 9);
        for card in &zoo {
            assert!(card.violated_constraints().is_empty(), "{}", card.name);
            assert_eq!(card.gamma, card.problem.growth_c * (card.problem.growth_c + 1.0));
        }
    }

    #[test]
    fn cubic_generator_example() {
        let card = model_by_name("cubic1d").unwrap();
        assert_eq!(generator_apply(&card.problem, &card.pair, &[1.0]).unwrap(), 0.5);
        assert_eq!(lyapunov_residual(&card.problem, &card.pair, &[2.0]).unwrap(), 0.0);
    }

    #[test]
    fn ginzburg_landau_generator_example() {
        let card = model_by_name("ginzburg_landau").unwrap();
        let g = generator_apply(&card.problem, &card.pair, &[1.0]).unwrap();
        assert!((g - 0.5).abs() < 1e-15);
        assert_eq!(card.pair.rho, 3.0);
    }

    #[test]
    fn generator_vanishes_at_critical_point_without_noise() {
        let prob = SdeProblem::new(1, 1, |x, o| o[0] = -x[0], |_, o| o[0] = 0.0, 1.0).unwrap();
        let card = model_by_name("cubic1d").unwrap();
        assert_eq!(generator_apply(&prob, &card.pair, &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn overflow_is_reported_with_state() {
        let card = model_by_name("cubic1d").unwrap();
        match lyapunov_residual(&card.problem, &card.pair, &[1e80]) {
            Err(Error::NumericOverflow { x, .. }) => assert_eq!(x, vec![1e80]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for card in model_zoo() {
            let mut pts = pseudo_random_points(&card, 100);
            if card.name == "sir" {
                // the cutoff only matters off the orthant; probe it there too
                pts.extend((0..100).map(|i| halton_point(i, &[(-1.5, 1.5), (-1.5, 1.5), (-2.0, 2.0)])));
            }
            for x in pts {
                let err = finite_difference_mismatch(&card, &x);
                assert!(err < 1e-5, "{} at {x:?}: {err}", card.name);
            }
        }
    }

    #[test]
    fn residual_nonpositive_across_zoo() {
        for card in model_zoo() {
            for x in pseudo_random_points(&card, 2000) {
                let r = lyapunov_residual(&card.problem, &card.pair, &x).unwrap();
                let u = card.pair.u(&x);
                assert!(u >= 0.0, "{}: U < 0 at {x:?}", card.name);
                assert!(r <= 1e-9 * (1.0 + u.abs()), "{}: residual {r} at {x:?}", card.name);
                assert!(card.pair.ubar(&x) >= card.pair.ubar_lower_bound - 1e-9, "{}", card.name);
            }
        }
    }

    #[test]
    fn exact_identities() {
        for name in ["ginzburg_landau", "psychology", "langevin", "cubic1d"] {
            let card = model_by_name(name).unwrap();
            for x in pseudo_random_points(&card, 500) {
                let r = lyapunov_residual(&card.problem, &card.pair, &x).unwrap();
                let scale = 1.0 + card.pair.u(&x).abs() + crate::problem::norm(&x).powi(6);
                assert!(r.abs() <= 1e-10 * scale, "{name}: {r} at {x:?}");
            }
        }
    }

    #[test]
    fn overdamped_residual_closed_form() {
        let card = model_by_name("overdamped_langevin").unwrap();
        for x in pseudo_random_points(&card, 200) {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            let r = lyapunov_residual(&card.problem, &card.pair, &x).unwrap();
            assert!((r + r2 * r2).abs() <= 1e-10 * (1.0 + r2 * r2 * r2), "{r} vs {}", -r2 * r2);
        }
    }

    #[test]
    fn ubar_lower_bound_attained_for_cubic() {
        let card = model_by_name("cubic1d").unwrap();
        assert_eq!(card.pair.ubar_lower_bound, -1.0);
        assert!((card.pair.ubar(&[1.0]) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn rho_override_only_upwards() {
        let card = model_by_name("ginzburg_landau").unwrap();
        assert!(card.pair.with_rho(2.0).is_err());
        assert_eq!(card.pair.with_rho(4.0).unwrap().rho, 4.0);
    }

    #[test]
    fn ubar_shift_moves_bound() {
        let card = model_by_name("cubic1d").unwrap();
        let shifted = card.pair.with_ubar_shift(0.5);
        assert_eq!(shifted.ubar(&[0.0]), 0.5);
        assert_eq!(shifted.ubar_lower_bound, -0.5);
    }
}
