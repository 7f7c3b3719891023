//! SDE problems `dX = μ(X) dt + σ(X) dW` on an open domain, time partitions
//! and Hilbert-Schmidt matrices.

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};

/// Largest state or noise dimension any scheme kernel supports.
pub const MAX_DIM: usize = 8;

/// `f(x, out)` writes a vector field value into `out`.
pub type VecField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// `f(x, out)` writes a `d × m` row-major matrix into `out`.
pub type MatField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
pub type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type Predicate = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// Open state domain `D`.
#[derive(Clone)]
pub enum Domain {
    Whole,
    /// A predicate plus an optional signed distance (negative inside), used
    /// only for diagnostics.
    Region {
        contains: Predicate,
        signed_distance: Option<ScalarField>,
    },
}

impl Domain {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Domain::Whole => true,
            Domain::Region { contains, .. } => contains(x),
        }
    }

    pub fn signed_distance(&self, x: &[f64]) -> Option<f64> {
        match self {
            Domain::Whole => None,
            Domain::Region { signed_distance, .. } => signed_distance.as_ref().map(|f| f(x)),
        }
    }

    /// The open positive orthant `(0, ∞)^d`.
    pub fn positive_orthant() -> Self {
        Domain::Region {
            contains: Arc::new(|x| x.iter().all(|&v| v > 0.0)),
            signed_distance: Some(Arc::new(|x| -x.iter().copied().fold(f64::INFINITY, f64::min))),
        }
    }
}

impl fmt::Debug for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Whole => f.write_str("Whole"),
            Domain::Region { .. } => f.write_str("Region(..)"),
        }
    }
}

/// An autonomous Itô SDE with drift `μ: ℝ^d → ℝ^d` and diffusion
/// `σ: ℝ^d → ℝ^{d×m}`.
#[derive(Clone)]
pub struct SdeProblem {
    pub dim: usize,
    pub noise_dim: usize,
    drift: VecField,
    diffusion: MatField,
    pub domain: Domain,
    pub growth_c: f64,
    /// Coefficients `a(x)` of a semilinear split `μ(x) = diag(a(x)) x`, used by
    /// the linear-implicit scheme.
    semilinear: Option<VecField>,
}

impl fmt::Debug for SdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeProblem")
            .field("dim", &self.dim)
            .field("noise_dim", &self.noise_dim)
            .field("domain", &self.domain)
            .field("growth_c", &self.growth_c)
            .field("semilinear", &self.semilinear.is_some())
            .finish()
    }
}

impl SdeProblem {
    pub fn new(
        dim: usize,
        noise_dim: usize,
        drift: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        diffusion: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        growth_c: f64,
    ) -> Result<Self> {
        if dim == 0 || noise_dim == 0 || dim > MAX_DIM || noise_dim > MAX_DIM {
            return invalid(format!("dimensions ({dim}, {noise_dim}) must lie in 1..={MAX_DIM}"));
        }
        if !(growth_c > 0.0 && growth_c.is_finite()) {
            return invalid(format!("growth constant must be positive, got {growth_c}"));
        }
        Ok(SdeProblem {
            dim,
            noise_dim,
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
            domain: Domain::Whole,
            growth_c,
            semilinear: None,
        })
    }

    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    pub fn with_semilinear(
        mut self,
        coeffs: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.semilinear = Some(Arc::new(coeffs));
        self
    }

    pub fn supports_linear_implicit(&self) -> bool {
        self.semilinear.is_some()
    }

    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out)
    }

    pub fn diffusion_into(&self, x: &[f64], out: &mut [f64]) {
        (self.diffusion)(x, out)
    }

    pub fn semilinear_into(&self, x: &[f64], out: &mut [f64]) -> bool {
        match &self.semilinear {
            Some(f) => {
                f(x, out);
                true
            }
            None => false,
        }
    }

    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.drift_into(x, &mut out);
        out
    }

    pub fn diffusion(&self, x: &[f64]) -> HsMatrix {
        let mut entries = vec![0.0; self.dim * self.noise_dim];
        self.diffusion_into(x, &mut entries);
        HsMatrix { rows: self.dim, cols: self.noise_dim, entries }
    }
}

/// Dense `rows × cols` matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct HsMatrix {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<f64>,
}

impl HsMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || entries.len() != rows * cols {
            return invalid(format!("{rows}x{cols} matrix needs {} entries, got {}", rows * cols, entries.len()));
        }
        Ok(HsMatrix { rows, cols, entries })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        HsMatrix { rows, cols, entries: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.entries[i * n + i] = 1.0;
        }
        m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }

    pub fn hs_norm_sq(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum()
    }

    pub fn hs_norm(&self) -> f64 {
        self.hs_norm_sq().sqrt()
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    /// Largest singular value, by power iteration on `AᵀA`.
    pub fn operator_norm(&self) -> f64 {
        let n = self.cols;
        let mut gram = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                gram[a * n + b] = (0..self.rows).map(|i| self.get(i, a) * self.get(i, b)).sum();
            }
        }
        let mut v: Vec<f64> = (0..n).map(|k| 1.0 + 0.1 * k as f64).collect();
        let mut lambda = 0.0;
        for _ in 0..500 {
            let w: Vec<f64> = (0..n).map(|a| (0..n).map(|b| gram[a * n + b] * v[b]).sum()).collect();
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            let next = norm / v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v = w.into_iter().map(|x| x / norm).collect();
            if (next - lambda).abs() <= 1e-14 * next {
                lambda = next;
                break;
            }
            lambda = next;
        }
        lambda.sqrt()
    }
}

/// A partition `0 = t_0 < t_1 < … < t_n = T` of `[0, T]`.
#[derive(Clone, Debug, PartialEq)]
pub enum Partition {
    /// Grid `i·T/N`, materialized from the index so no additions accumulate.
    Uniform { steps: usize, horizon: f64 },
    Explicit(Vec<f64>),
}

pub fn uniform_partition(steps: usize, horizon: f64) -> Result<Partition> {
    Partition::uniform(steps, horizon)
}

impl Partition {
    pub fn uniform(steps: usize, horizon: f64) -> Result<Self> {
        if steps == 0 {
            return invalid("partition needs at least one step");
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return invalid(format!("horizon must be positive, got {horizon}"));
        }
        Ok(Partition::Uniform { steps, horizon })
    }

    pub fn explicit(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || times[0] != 0.0 {
            return invalid("explicit partition must start at 0 and have at least two points");
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || !times.iter().all(|t| t.is_finite()) {
            return invalid("partition times must be finite and strictly increasing");
        }
        Ok(Partition::Explicit(times))
    }

    pub fn horizon(&self) -> f64 {
        match self {
            Partition::Uniform { horizon, .. } => *horizon,
            Partition::Explicit(t) => t[t.len() - 1],
        }
    }

    /// Number of intervals.
    pub fn steps(&self) -> usize {
        match self {
            Partition::Uniform { steps, .. } => *steps,
            Partition::Explicit(t) => t.len() - 1,
        }
    }

    pub fn time(&self, i: usize) -> f64 {
        match self {
            Partition::Uniform { steps, horizon } => {
                if i == *steps {
                    *horizon
                } else {
                    i as f64 * horizon / *steps as f64
                }
            }
            Partition::Explicit(t) => t[i],
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps()).map(|i| self.time(i)).collect()
    }

    pub fn step_size(&self, i: usize) -> f64 {
        self.time(i + 1) - self.time(i)
    }

    pub fn mesh(&self) -> f64 {
        match self {
            Partition::Uniform { steps, horizon } => horizon / *steps as f64,
            Partition::Explicit(_) => (0..self.steps()).map(|i| self.step_size(i)).fold(0.0, f64::max),
        }
    }

    /// Index of `⌊t⌋`, the greatest grid point not exceeding `t`.
    pub fn floor_index(&self, t: f64) -> Result<usize> {
        let horizon = self.horizon();
        if !(0.0..=horizon).contains(&t) {
            return invalid(format!("time {t} outside [0, {horizon}]"));
        }
        let n = self.steps();
        let mut i = match self {
            Partition::Uniform { steps, horizon } => ((t / horizon) * *steps as f64).floor() as usize,
            Partition::Explicit(times) => times.partition_point(|&s| s <= t).saturating_sub(1),
        };
        i = i.min(n);
        while i > 0 && self.time(i) > t {
            i -= 1;
        }
        while i < n && self.time(i + 1) <= t {
            i += 1;
        }
        Ok(i)
    }

    pub fn floor_time(&self, t: f64) -> Result<f64> {
        Ok(self.time(self.floor_index(t)?))
    }
}

/// Outcome of checking `‖μ(x)‖ + ‖σ(x)‖_HS ≤ c(1 + ‖x‖^c)` on samples.
#[derive(Clone, Debug, PartialEq)]
pub struct GrowthReport {
    pub max_ratio: f64,
    pub argmax: usize,
    pub passed: bool,
}

pub fn polynomial_growth_check(prob: &SdeProblem, samples: &[Vec<f64>]) -> Result<GrowthReport> {
    if samples.is_empty() {
        return invalid("growth check needs at least one sample");
    }
    let c = prob.growth_c;
    let mut mu = vec![0.0; prob.dim];
    let mut sigma = vec![0.0; prob.dim * prob.noise_dim];
    let mut max_ratio = f64::NEG_INFINITY;
    let mut argmax = 0;
    for (index, x) in samples.iter().enumerate() {
        if x.len() != prob.dim {
            return invalid(format!("sample {index} has dimension {}, expected {}", x.len(), prob.dim));
        }
        prob.drift_into(x, &mut mu);
        prob.diffusion_into(x, &mut sigma);
        let lhs = norm(&mu) + norm(&sigma);
        if !lhs.is_finite() {
            return Err(Error::Sample {
                index,
                source: Box::new(Error::NumericOverflow { what: "coefficients", x: x.clone() }),
            });
        }
        let ratio = lhs / (c * (1.0 + norm(x).powf(c)));
        if ratio > max_ratio {
            max_ratio = ratio;
            argmax = index;
        }
    }
    Ok(GrowthReport { max_ratio, argmax, passed: max_ratio <= 1.0 + 1e-12 })
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
