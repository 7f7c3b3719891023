//! The example SDEs with their Lyapunov pairs and default parameters.

use crate::error::{Error, Result};
use crate::numerics::golden_section_min;
use crate::problem::{Domain, SdeProblem};

use super::{LyapunovPair, ModelCard, ParamConstraint, Params};

struct Built {
    problem: SdeProblem,
    pair: LyapunovPair,
    sampling_box: Vec<(f64, f64)>,
    x0: Vec<f64>,
}

struct ModelDef {
    name: &'static str,
    notes: &'static str,
    defaults: &'static [(&'static str, f64)],
    constraints: &'static [ParamConstraint],
    build: fn(&Params) -> Result<Built>,
}

macro_rules! constraint {
    ($label:expr, |$p:ident| $body:expr) => {
        ParamConstraint { label: $label, check: |$p: &Params| $body }
    };
}

const MODELS: &[ModelDef] = &[
    ModelDef {
        name: "cubic1d",
        notes: "dX = -X^3 dt + dW with U = delta x^4; linear-implicit split a(x) = -x^2",
        defaults: &[("delta", 0.25)],
        constraints: &[constraint!("0 < delta < 1/2", |p| p.get("delta") > 0.0 && p.get("delta") < 0.5)],
        build: cubic,
    },
    ModelDef {
        name: "ginzburg_landau",
        notes: "mu = alpha x - delta x^3, sigma = beta x, U = eps x^2, rho = 2 alpha + beta^2",
        defaults: &[("alpha", 1.0), ("beta", 1.0), ("delta", 1.0), ("eps", 0.5)],
        constraints: &[
            constraint!("alpha >= 0", |p| p.get("alpha") >= 0.0),
            constraint!("beta > 0 and delta > 0", |p| p.get("beta") > 0.0 && p.get("delta") > 0.0),
            constraint!("0 < eps <= delta / beta^2", |p| {
                p.get("eps") > 0.0 && p.get("eps") <= p.get("delta") / p.get("beta").powi(2)
            }),
        ],
        build: ginzburg_landau,
    },
    ModelDef {
        name: "lorenz",
        notes: "Lorenz drift with additive noise sqrt(beta) I, U = eps |x|^2, theta by golden-section search",
        defaults: &[("alpha1", 10.0), ("alpha2", 28.0), ("alpha3", 8.0 / 3.0), ("beta", 1.0), ("eps", 0.1)],
        constraints: &[
            constraint!("alpha1, alpha2, alpha3, beta >= 0", |p| {
                ["alpha1", "alpha2", "alpha3", "beta"].iter().all(|k| p.get(k) >= 0.0)
            }),
            constraint!("eps > 0", |p| p.get("eps") > 0.0),
        ],
        build: lorenz,
    },
    ModelDef {
        name: "van_der_pol",
        notes: "noise g(y) = sqrt(eta0 + eta1 y^2) on the second component (a concrete choice of g)",
        defaults: &[("alpha", 1.0), ("gamma", 1.0), ("delta", 2.0), ("eta0", 1.0), ("eta1", 1.0), ("eps", 0.5)],
        constraints: &[
            constraint!("alpha > 0", |p| p.get("alpha") > 0.0),
            constraint!("gamma, delta, eta0, eta1 >= 0", |p| {
                ["gamma", "delta", "eta0", "eta1"].iter().all(|k| p.get(k) >= 0.0)
            }),
            constraint!("eps > 0 and eps eta1 <= alpha", |p| {
                p.get("eps") > 0.0 && p.get("eps") * p.get("eta1") <= p.get("alpha")
            }),
        ],
        build: van_der_pol,
    },
    ModelDef {
        name: "duffing_van_der_pol",
        notes: "noise g(y) = sqrt(eta0 + eta1 y^2) on the second component (a concrete choice of g)",
        defaults: &[("alpha1", 0.1), ("alpha2", 1.0), ("alpha3", 1.0), ("eta0", 1.0), ("eta1", 1.0), ("eps", 0.5)],
        constraints: &[
            constraint!("alpha1, eta0, eta1 >= 0", |p| {
                ["alpha1", "eta0", "eta1"].iter().all(|k| p.get(k) >= 0.0)
            }),
            constraint!("alpha2 > 0 and alpha3 > 0", |p| p.get("alpha2") > 0.0 && p.get("alpha3") > 0.0),
            constraint!("eps > 0 and eps eta1 <= alpha3", |p| {
                p.get("eps") > 0.0 && p.get("eps") * p.get("eta1") <= p.get("alpha3")
            }),
        ],
        build: duffing_van_der_pol,
    },
    ModelDef {
        name: "psychology",
        notes: "U = eps |x|^q with G U + 1/2 |sigma* grad U|^2 = 0",
        defaults: &[("alpha", 1.0), ("delta", 1.0), ("beta", 1.0), ("eps", 0.1), ("q", 4.0)],
        constraints: &[
            constraint!("alpha > 0 and delta > 0", |p| p.get("alpha") > 0.0 && p.get("delta") > 0.0),
            constraint!("eps > 0", |p| p.get("eps") > 0.0),
            constraint!("q >= 3", |p| p.get("q") >= 3.0),
        ],
        build: psychology,
    },
    ModelDef {
        name: "sir",
        notes: "domain (0, inf)^3 with mu = sigma = 0 outside; cutoff phi(x) = g(x) / (g(x) + g(1 - x)), g(x) = exp(-1/x)",
        defaults: &[("alpha", 1.0), ("beta", 1.0), ("gamma", 1.0), ("delta", 1.0), ("eps", 0.5), ("eps_hat", 1.0)],
        constraints: &[
            constraint!("alpha, beta, gamma, delta > 0", |p| {
                ["alpha", "beta", "gamma", "delta"].iter().all(|k| p.get(k) > 0.0)
            }),
            constraint!("eps > 0", |p| p.get("eps") > 0.0),
            constraint!("0 < eps_hat <= 4 eps delta / gamma", |p| {
                p.get("eps_hat") > 0.0 && p.get("eps_hat") <= 4.0 * p.get("eps") * p.get("delta") / p.get("gamma")
            }),
        ],
        build: sir,
    },
    ModelDef {
        name: "langevin",
        notes: "m = 1, potential V(z) = z^4/4 + z^2/2",
        defaults: &[("gamma", 1.0), ("beta", 1.0), ("eps", 1.0)],
        constraints: &[
            constraint!("beta > 0 and gamma > 0", |p| p.get("beta") > 0.0 && p.get("gamma") > 0.0),
            constraint!("0 < eps <= 2 gamma / beta", |p| {
                p.get("eps") > 0.0 && p.get("eps") <= 2.0 * p.get("gamma") / p.get("beta")
            }),
        ],
        build: langevin,
    },
    ModelDef {
        name: "overdamped_langevin",
        notes: "d = 2, V(x) = |x|^4/4 + |x|^2/2, Laplacian bound with eta0 = d, eta1 = d + 2, eta2 = 0",
        defaults: &[("beta", 1.0), ("eps", 1.0), ("eta0", 2.0), ("eta1", 4.0), ("eta2", 0.0)],
        constraints: &[
            constraint!("beta > 0 and eta0 >= 0", |p| p.get("beta") > 0.0 && p.get("eta0") >= 0.0),
            constraint!("0 <= eta2 < 2 / beta", |p| p.get("eta2") >= 0.0 && p.get("eta2") < 2.0 / p.get("beta")),
            constraint!("0 < eps <= 2 / beta - eta2", |p| {
                p.get("eps") > 0.0 && p.get("eps") <= 2.0 / p.get("beta") - p.get("eta2")
            }),
            ParamConstraint { label: "Laplacian V <= eta0 + 2 eta1 V + eta2 |grad V|^2", check: overdamped_laplacian_bound },
        ],
        build: overdamped_langevin,
    },
];

pub fn model_names() -> Vec<&'static str> {
    MODELS.iter().map(|m| m.name).collect()
}

/// All nine cards with default parameters.
pub fn model_zoo() -> Vec<ModelCard> {
    MODELS
        .iter()
        .map(|m| build(m.name, &[]).expect("defaults satisfy their constraints"))
        .collect()
}

pub fn model_by_name(name: &str) -> Result<ModelCard> {
    build(name, &[])
}

pub(super) fn build(name: &str, overrides: &[(String, f64)]) -> Result<ModelCard> {
    let def = MODELS
        .iter()
        .find(|m| m.name == name)
        .ok_or_else(|| Error::Config(format!("unknown model `{name}`; known: {}", model_names().join(", "))))?;
    let mut params = Params::from_pairs(def.defaults);
    for (key, value) in overrides {
        if !params.contains(key) {
            return Err(Error::Config(format!("model `{name}` has no parameter `{key}`")));
        }
        if !value.is_finite() {
            return Err(Error::Config(format!("parameter `{key}` must be finite")));
        }
        params.set(key, *value);
    }
    let violated: Vec<_> = def.constraints.iter().filter(|c| !(c.check)(&params)).map(|c| c.label).collect();
    if !violated.is_empty() {
        return Err(Error::Config(format!("model `{name}`: constraint violated: {}", violated.join("; "))));
    }
    let built = (def.build)(&params)?;
    let c = built.problem.growth_c;
    Ok(ModelCard {
        name: def.name,
        problem: built.problem,
        pair: built.pair,
        constraints: def.constraints.to_vec(),
        notes: def.notes,
        sampling_box: built.sampling_box,
        x0: built.x0,
        gamma: c * (c + 1.0),
    })
}

fn cubic(p: &Params) -> Result<Built> {
    let delta = p.get("delta");
    let problem = SdeProblem::new(1, 1, |x, o| o[0] = -x[0] * x[0] * x[0], |_, o| o[0] = 1.0, 3.0)?
        .with_semilinear(|x, o| o[0] = -x[0] * x[0]);
    let a = 4.0 * delta * (1.0 - 2.0 * delta);
    let b = 6.0 * delta;
    let pair = LyapunovPair::new(
        1,
        move |x| delta * x[0].powi(4),
        move |x, g| g[0] = 4.0 * delta * x[0].powi(3),
        move |x, h| h[0] = 12.0 * delta * x[0] * x[0],
        move |x| {
            let x2 = x[0] * x[0];
            a * x2 * x2 * x2 - b * x2
        },
        0.0,
        p.clone(),
        -(2.0 * b / 3.0) * (b / (3.0 * a)).sqrt(),
    );
    Ok(Built { problem, pair, sampling_box: vec![(-3.0, 3.0)], x0: vec![0.0] })
}

fn ginzburg_landau(p: &Params) -> Result<Built> {
    let (alpha, beta, delta, eps) = (p.get("alpha"), p.get("beta"), p.get("delta"), p.get("eps"));
    let problem = SdeProblem::new(
        1,
        1,
        move |x, o| o[0] = alpha * x[0] - delta * x[0].powi(3),
        move |x, o| o[0] = beta * x[0],
        3.0,
    )?
    .with_semilinear(move |x, o| o[0] = alpha - delta * x[0] * x[0]);
    let k = 2.0 * eps * (delta - beta * beta * eps);
    let pair = LyapunovPair::new(
        1,
        move |x| eps * x[0] * x[0],
        move |x, g| g[0] = 2.0 * eps * x[0],
        move |_, h| h[0] = 2.0 * eps,
        move |x| k * x[0].powi(4),
        2.0 * alpha + beta * beta,
        p.clone(),
        0.0,
    );
    Ok(Built { problem, pair, sampling_box: vec![(-5.0, 5.0)], x0: vec![0.0] })
}

/// `min_{r>0} max{(α1+α2)²/r − 2α1, r − 1, 0}`, evaluated at the numerical minimizer.
pub(crate) fn lorenz_theta(alpha1: f64, alpha2: f64) -> f64 {
    let s = (alpha1 + alpha2).powi(2);
    let f = |r: f64| (s / r - 2.0 * alpha1).max(r - 1.0).max(0.0);
    let hi = 100.0f64.max(2.0 * (alpha1 + alpha2) + 2.0);
    let (r, _) = golden_section_min(f, 1e-12, hi, 1e-10);
    f(r)
}

fn lorenz(p: &Params) -> Result<Built> {
    let (a1, a2, a3, beta, eps) = (p.get("alpha1"), p.get("alpha2"), p.get("alpha3"), p.get("beta"), p.get("eps"));
    let sb = beta.sqrt();
    let problem = SdeProblem::new(
        3,
        3,
        move |x, o| {
            o[0] = a1 * (x[1] - x[0]);
            o[1] = a2 * x[0] - x[1] - x[0] * x[2];
            o[2] = x[0] * x[1] - a3 * x[2];
        },
        move |_, o| {
            o.fill(0.0);
            o[0] = sb;
            o[4] = sb;
            o[8] = sb;
        },
        50.0,
    )?;
    let theta = lorenz_theta(a1, a2);
    let pair = LyapunovPair::new(
        3,
        move |x| eps * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]),
        move |x, g| {
            for i in 0..3 {
                g[i] = 2.0 * eps * x[i];
            }
        },
        move |_, h| {
            h.fill(0.0);
            h[0] = 2.0 * eps;
            h[4] = 2.0 * eps;
            h[8] = 2.0 * eps;
        },
        move |_| -3.0 * eps * beta,
        2.0 * eps * beta + theta,
        p.clone(),
        -3.0 * eps * beta,
    );
    Ok(Built { problem, pair, sampling_box: vec![(-20.0, 20.0); 3], x0: vec![0.0; 3] })
}

/// `min_{r>0} max{|δ−1|/r + η1, r|δ−1| + 2γ + 4η0ε}`.
pub(crate) fn van_der_pol_theta(gamma: f64, delta: f64, eta0: f64, eta1: f64, eps: f64) -> f64 {
    let a = (delta - 1.0).abs();
    let f = |r: f64| (a / r + eta1).max(r * a + 2.0 * gamma + 4.0 * eta0 * eps);
    let (r, _) = golden_section_min(f, 1e-12, 100.0, 1e-10);
    f(r)
}

fn oscillator_noise(eta0: f64, eta1: f64) -> impl Fn(&[f64], &mut [f64]) + Send + Sync {
    move |x, o| {
        o[0] = 0.0;
        o[1] = (eta0 + eta1 * x[0] * x[0]).sqrt();
    }
}

fn van_der_pol(p: &Params) -> Result<Built> {
    let (alpha, gamma, delta) = (p.get("alpha"), p.get("gamma"), p.get("delta"));
    let (eta0, eta1, eps) = (p.get("eta0"), p.get("eta1"), p.get("eps"));
    let problem = SdeProblem::new(
        2,
        1,
        move |x, o| {
            o[0] = x[1];
            o[1] = (gamma - alpha * x[0] * x[0]) * x[1] - delta * x[0];
        },
        oscillator_noise(eta0, eta1),
        5.0,
    )?;
    let k = 2.0 * eps * (alpha - eps * eta1);
    let pair = LyapunovPair::new(
        2,
        move |x| eps * (x[0] * x[0] + x[1] * x[1]),
        move |x, g| {
            g[0] = 2.0 * eps * x[0];
            g[1] = 2.0 * eps * x[1];
        },
        move |_, h| {
            h.copy_from_slice(&[2.0 * eps, 0.0, 0.0, 2.0 * eps]);
        },
        move |x| k * (x[0] * x[1]).powi(2) - eps * eta0,
        van_der_pol_theta(gamma, delta, eta0, eta1, eps),
        p.clone(),
        -eps * eta0,
    );
    Ok(Built { problem, pair, sampling_box: vec![(-5.0, 5.0); 2], x0: vec![0.0; 2] })
}

fn duffing_van_der_pol(p: &Params) -> Result<Built> {
    let (a1, a2, a3) = (p.get("alpha1"), p.get("alpha2"), p.get("alpha3"));
    let (eta0, eta1, eps) = (p.get("eta0"), p.get("eta1"), p.get("eps"));
    let problem = SdeProblem::new(
        2,
        1,
        move |x, o| {
            let x1 = x[0];
            o[0] = x[1];
            o[1] = a2 * x[1] - a1 * x1 - a3 * x1 * x1 * x[1] - x1 * x1 * x1;
        },
        oscillator_noise(eta0, eta1),
        5.0,
    )?;
    let lambda = eps * eta0 + a2;
    let kappa = (eta1 - 2.0 * a1 * lambda).max(0.0).powi(2) / (4.0 * lambda);
    let k = 2.0 * eps * (a3 - eps * eta1);
    let pair = LyapunovPair::new(
        2,
        move |x| eps * (0.5 * x[0].powi(4) + a1 * x[0] * x[0] + x[1] * x[1]),
        move |x, g| {
            g[0] = eps * (2.0 * x[0].powi(3) + 2.0 * a1 * x[0]);
            g[1] = 2.0 * eps * x[1];
        },
        move |x, h| {
            h.copy_from_slice(&[eps * (6.0 * x[0] * x[0] + 2.0 * a1), 0.0, 0.0, 2.0 * eps]);
        },
        move |x| k * (x[0] * x[1]).powi(2) - eps * eta0 - eps * kappa,
        2.0 * lambda,
        p.clone(),
        -eps * eta0 - eps * kappa,
    );
    Ok(Built { problem, pair, sampling_box: vec![(-5.0, 5.0); 2], x0: vec![0.0; 2] })
}

fn psychology(p: &Params) -> Result<Built> {
    let (alpha, delta, beta, eps, q) = (p.get("alpha"), p.get("delta"), p.get("beta"), p.get("eps"), p.get("q"));
    let problem = SdeProblem::new(
        2,
        1,
        move |x, o| {
            let (x1, x2) = (x[0], x[1]);
            let k = delta + 4.0 * alpha * x1;
            o[0] = x2 * x2 * k - 0.5 * beta * beta * x1;
            o[1] = -x1 * x2 * k - 0.5 * beta * beta * x2;
        },
        move |x, o| {
            o[0] = -beta * x[1];
            o[1] = beta * x[0];
        },
        5.0,
    )?;
    let pair = LyapunovPair::new(
        2,
        move |x| eps * (x[0] * x[0] + x[1] * x[1]).powf(q / 2.0),
        move |x, g| {
            let r2 = x[0] * x[0] + x[1] * x[1];
            let k = if r2 == 0.0 { 0.0 } else { eps * q * r2.powf(q / 2.0 - 1.0) };
            g[0] = k * x[0];
            g[1] = k * x[1];
        },
        move |x, h| {
            let r2 = x[0] * x[0] + x[1] * x[1];
            if r2 == 0.0 {
                h.fill(0.0);
                return;
            }
            let a = eps * q * r2.powf(q / 2.0 - 1.0);
            let b = eps * q * (q - 2.0) * r2.powf(q / 2.0 - 2.0);
            h[0] = a + b * x[0] * x[0];
            h[1] = b * x[0] * x[1];
            h[2] = h[1];
            h[3] = a + b * x[1] * x[1];
        },
        |_| 0.0,
        0.0,
        p.clone(),
        0.0,
    );
    Ok(Built { problem, pair, sampling_box: vec![(-3.0, 3.0); 2], x0: vec![0.0; 2] })
}

/// `g(x) = exp(−1/x)` for `x > 0`, else 0, with its first two derivatives.
fn bump_g(x: f64) -> (f64, f64, f64) {
    if x <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let g = (-1.0 / x).exp();
    let inv = 1.0 / x;
    (g, g * inv * inv, g * (inv.powi(4) - 2.0 * inv.powi(3)))
}

/// Smooth step `φ = g(x) / (g(x) + g(1 − x))`, with `φ'` and `φ''`.
pub(crate) fn smooth_step(x: f64) -> (f64, f64, f64) {
    let (g, g1, g2) = bump_g(x);
    let (h, h1, h2) = bump_g(1.0 - x);
    let s = g + h;
    let s1 = g1 - h1;
    let s2 = g2 + h2;
    let phi = g / s;
    let phi1 = (g1 - phi * s1) / s;
    let phi2 = (g2 - 2.0 * phi1 * s1 - phi * s2) / s;
    (phi, phi1, phi2)
}

/// `f = x1 x2 ψ(x1, x2)` with gradient and Hessian `(f11, f12, f22)`.
fn sir_cross_term(x1: f64, x2: f64) -> (f64, [f64; 2], [f64; 3]) {
    let (a, a1, a2) = smooth_step(x1);
    let (b, b1, b2) = smooth_step(-x2);
    let (c, c1, c2) = smooth_step(-x1);
    let (e, e1, e2) = smooth_step(x2);
    let psi = a * b + c * e;
    let p1 = a1 * b - c1 * e;
    let p2 = -a * b1 + c * e1;
    let p11 = a2 * b + c2 * e;
    let p22 = a * b2 + c * e2;
    let p12 = -a1 * b1 - c1 * e1;
    let f = x1 * x2 * psi;
    let g = [x2 * psi + x1 * x2 * p1, x1 * psi + x1 * x2 * p2];
    let h = [
        2.0 * x2 * p1 + x1 * x2 * p11,
        psi + x2 * p2 + x1 * p1 + x1 * x2 * p12,
        2.0 * x1 * p2 + x1 * x2 * p22,
    ];
    (f, g, h)
}

fn sir(p: &Params) -> Result<Built> {
    let (alpha, beta, gamma, delta) = (p.get("alpha"), p.get("beta"), p.get("gamma"), p.get("delta"));
    let (eps, eps_hat) = (p.get("eps"), p.get("eps_hat"));
    let inside = |x: &[f64]| x[0] > 0.0 && x[1] > 0.0 && x[2] > 0.0;
    let problem = SdeProblem::new(
        3,
        1,
        move |x, o| {
            if !inside(x) {
                o.fill(0.0);
                return;
            }
            let (x1, x2, x3) = (x[0], x[1], x[2]);
            o[0] = -alpha * x1 * x2 - delta * x1 + delta;
            o[1] = alpha * x1 * x2 - (gamma + delta) * x2;
            o[2] = gamma * x2 - delta * x3;
        },
        move |x, o| {
            if !inside(x) {
                o.fill(0.0);
                return;
            }
            let s = beta * x[0] * x[1];
            o[0] = -s;
            o[1] = s;
            o[2] = 0.0;
        },
        5.0,
    )?
    .with_domain(Domain::positive_orthant());
    let pair = LyapunovPair::new(
        3,
        move |x| {
            let (f, _, _) = sir_cross_term(x[0], x[1]);
            eps * (2.5 + (x[0] + x[1]).powi(2) - 2.0 * f) + eps_hat * x[2] * x[2]
        },
        move |x, g| {
            let (_, fg, _) = sir_cross_term(x[0], x[1]);
            let s = 2.0 * (x[0] + x[1]);
            g[0] = eps * (s - 2.0 * fg[0]);
            g[1] = eps * (s - 2.0 * fg[1]);
            g[2] = 2.0 * eps_hat * x[2];
        },
        move |x, h| {
            let (_, _, fh) = sir_cross_term(x[0], x[1]);
            h.fill(0.0);
            h[0] = eps * (2.0 - 2.0 * fh[0]);
            h[1] = eps * (2.0 - 2.0 * fh[1]);
            h[3] = h[1];
            h[4] = eps * (2.0 - 2.0 * fh[2]);
            h[8] = 2.0 * eps_hat;
        },
        move |_| -2.0 * eps * delta,
        0.0,
        p.clone(),
        -2.0 * eps * delta,
    );
    Ok(Built { problem, pair, sampling_box: vec![(0.0, 10.0); 3], x0: vec![0.8, 0.1, 0.1] })
}

fn langevin(p: &Params) -> Result<Built> {
    let (gamma, beta, eps) = (p.get("gamma"), p.get("beta"), p.get("eps"));
    let sb = beta.sqrt();
    let problem = SdeProblem::new(
        2,
        1,
        move |x, o| {
            o[0] = x[1];
            o[1] = -(x[0].powi(3) + x[0]) - gamma * x[1];
        },
        move |_, o| {
            o[0] = 0.0;
            o[1] = sb;
        },
        3.0,
    )?;
    let m = 1.0;
    let pair = LyapunovPair::new(
        2,
        move |x| eps * (0.25 * x[0].powi(4) + 0.5 * x[0] * x[0]) + 0.5 * eps * x[1] * x[1],
        move |x, g| {
            g[0] = eps * (x[0].powi(3) + x[0]);
            g[1] = eps * x[1];
        },
        move |x, h| {
            h.copy_from_slice(&[eps * (3.0 * x[0] * x[0] + 1.0), 0.0, 0.0, eps]);
        },
        move |x| eps * (gamma - 0.5 * eps * beta) * x[1] * x[1] - 0.5 * eps * beta * m,
        0.0,
        p.clone(),
        -0.5 * eps * beta * m,
    );
    Ok(Built { problem, pair, sampling_box: vec![(-3.0, 3.0); 2], x0: vec![0.0; 2] })
}

/// For `V = r⁴/4 + r²/2` in two dimensions, `ΔV = 4r² + 2`, `|∇V|² = (r² + 1)² r²`.
fn overdamped_laplacian_bound(p: &Params) -> bool {
    let (eta0, eta1, eta2) = (p.get("eta0"), p.get("eta1"), p.get("eta2"));
    (0..=20_000).all(|i| {
        let r2 = (i as f64 * 5e-3).powi(2);
        let lap = 4.0 * r2 + 2.0;
        let v = 0.25 * r2 * r2 + 0.5 * r2;
        lap <= eta0 + 2.0 * eta1 * v + eta2 * (r2 + 1.0).powi(2) * r2 + 1e-12
    })
}

fn overdamped_langevin(p: &Params) -> Result<Built> {
    let (beta, eps, eta0, eta1, eta2) = (p.get("beta"), p.get("eps"), p.get("eta0"), p.get("eta1"), p.get("eta2"));
    let sb = beta.sqrt();
    let problem = SdeProblem::new(
        2,
        2,
        move |x, o| {
            let k = x[0] * x[0] + x[1] * x[1] + 1.0;
            o[0] = -k * x[0];
            o[1] = -k * x[1];
        },
        move |_, o| o.copy_from_slice(&[sb, 0.0, 0.0, sb]),
        3.0,
    )?;
    let k = eps * (1.0 - 0.5 * beta * (eta2 + eps));
    let pair = LyapunovPair::new(
        2,
        move |x| {
            let r2 = x[0] * x[0] + x[1] * x[1];
            eps * (0.25 * r2 * r2 + 0.5 * r2)
        },
        move |x, g| {
            let k = x[0] * x[0] + x[1] * x[1] + 1.0;
            g[0] = eps * k * x[0];
            g[1] = eps * k * x[1];
        },
        move |x, h| {
            let k = x[0] * x[0] + x[1] * x[1] + 1.0;
            h[0] = eps * (k + 2.0 * x[0] * x[0]);
            h[1] = eps * 2.0 * x[0] * x[1];
            h[2] = h[1];
            h[3] = eps * (k + 2.0 * x[1] * x[1]);
        },
        move |x| {
            let r2 = x[0] * x[0] + x[1] * x[1];
            k * (r2 + 1.0).powi(2) * r2 - 0.5 * eps * beta * eta0
        },
        beta * eta1,
        p.clone(),
        if k >= 0.0 { -0.5 * eps * beta * eta0 } else { f64::NEG_INFINITY },
    );
    Ok(Built { problem, pair, sampling_box: vec![(-3.0, 3.0); 2], x0: vec![0.0; 2] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::polynomial_growth_check;

    #[test]
    fn lorenz_theta_matches_closed_form_and_scan() {
        let theta = lorenz_theta(10.0, 28.0);
        // crossing of 38²/r − 20 and r − 1
        let r = (-19.0 + (19.0f64 * 19.0 + 4.0 * 1444.0).sqrt()) / 2.0;
        assert!((theta - (r - 1.0)).abs() < 1e-8, "{theta}");
        assert!((theta - 28.67).abs() < 0.01);
        let scan = (1..=200_000)
            .map(|i| {
                let r = i as f64 * 5e-4;
                (1444.0 / r - 20.0).max(r - 1.0).max(0.0)
            })
            .fold(f64::INFINITY, f64::min);
        assert!(theta <= scan + 1e-9 && scan - theta < 1e-3);
    }

    #[test]
    fn van_der_pol_theta_closed_form() {
        let theta = van_der_pol_theta(1.0, 2.0, 1.0, 1.0, 0.5);
        let r = (-3.0 + 13f64.sqrt()) / 2.0;
        assert!((theta - (r + 4.0)).abs() < 1e-8, "{theta}");
    }

    #[test]
    fn smooth_step_shape() {
        assert_eq!(smooth_step(-0.5).0, 0.0);
        assert_eq!(smooth_step(0.0).0, 0.0);
        assert_eq!(smooth_step(1.0).0, 1.0);
        assert_eq!(smooth_step(2.0).0, 1.0);
        assert!((smooth_step(0.5).0 - 0.5).abs() < 1e-15);
        for i in 1..100 {
            let x = i as f64 / 100.0;
            let h = 1e-6;
            let fd = (smooth_step(x + h).0 - smooth_step(x - h).0) / (2.0 * h);
            assert!((fd - smooth_step(x).1).abs() < 1e-6);
            let fd2 = (smooth_step(x + h).1 - smooth_step(x - h).1) / (2.0 * h);
            assert!((fd2 - smooth_step(x).2).abs() < 1e-5);
        }
    }

    #[test]
    fn sir_cutoff_vanishes_on_orthant() {
        let card = model_by_name("sir").unwrap();
        let u = card.pair.u(&[0.3, 0.7, 0.2]);
        let expected = 0.5 * (2.5 + 1.0) + 0.04;
        assert!((u - expected).abs() < 1e-15);
        let mut o = [1.0; 3];
        card.problem.drift_into(&[-1.0, 1.0, 1.0], &mut o);
        assert_eq!(o, [0.0; 3]);
        assert!(!card.problem.domain.contains(&[0.0, 1.0, 1.0]));
    }

    #[test]
    fn sir_u_nonnegative_everywhere() {
        let card = model_by_name("sir").unwrap();
        for i in 0..5000 {
            let x = crate::numerics::halton_point(i, &[(-3.0, 3.0), (-3.0, 3.0), (-3.0, 3.0)]);
            assert!(card.pair.u(&x) >= 0.0, "{x:?}");
        }
    }

    #[test]
    fn growth_check_passes_on_ball() {
        for card in model_zoo() {
            let d = card.problem.dim;
            let samples: Vec<Vec<f64>> = (0..10_000u64)
                .map(|i| {
                    let z = crate::numerics::halton_point(i, &vec![(-1.0, 1.0); d + 1]);
                    let n = crate::problem::norm(&z[..d]).max(1e-12);
                    let radius = 10.0 * z[d].abs().powf(1.0 / d as f64);
                    z[..d].iter().map(|v| v / n * radius).collect()
                })
                .collect();
            let report = polynomial_growth_check(&card.problem, &samples).unwrap();
            assert!(report.passed, "{}: {}", card.name, report.max_ratio);
        }
    }

    #[test]
    fn parameter_overrides() {
        let card = model_by_name("ginzburg_landau").unwrap();
        let err = card.with_params(&[("eps".into(), 2.0)]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(card.with_params(&[("nope".into(), 1.0)]).is_err());
        let ok = card.with_params(&[("eps".into(), 0.25)]).unwrap();
        assert_eq!(ok.params().get("eps"), 0.25);
        assert!(model_by_name("nope").is_err());
        let cubic = model_by_name("cubic1d").unwrap().with_params(&[("delta".into(), 0.1)]).unwrap();
        assert_eq!(cubic.pair.u(&[1.0]), 0.1);
    }

    #[test]
    fn only_split_models_support_linear_implicit() {
        for card in model_zoo() {
            let expected = matches!(card.name, "cubic1d" | "ginzburg_landau");
            assert_eq!(card.problem.supports_linear_implicit(), expected, "{}", card.name);
        }
    }
}
