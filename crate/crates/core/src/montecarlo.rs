//! Monte Carlo estimators: the exponential-moment functional, strong errors
//! against a fine reference, consistency defects of one-step maps and tail
//! growth probes.
//!
//! Per-path values are computed in parallel and collected in path-id order,
//! then reduced with a fixed pairwise summation, so results do not depend on
//! the number of workers.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::lyapunov::LyapunovPair;
use crate::numerics::pairwise_sum;
use crate::paths::{MasterPath, NormalStream, PathSampler};
use crate::problem::{norm, uniform_partition, Partition, SdeProblem, MAX_DIM};
use crate::schemes::{simulate, SchemeSpec, Stepper};

/// Exponents above this are aggregated with log-sum-exp.
pub const LOG_DOMAIN_THRESHOLD: f64 = 700.0;

/// Runs `f(0), …, f(n − 1)` on `workers` threads (0 = all cores) and returns
/// the results in index order; the first failing index wins.
pub fn run_paths<T, F>(n: usize, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Resource(format!("thread pool: {e}")))?;
    let results: Vec<Result<T>> = pool.install(|| (0..n).into_par_iter().map(|i| f(i as u64)).collect());
    results
        .into_iter()
        .enumerate()
        .map(|(index, r)| r.map_err(|e| Error::Sample { index, source: Box::new(e) }))
        .collect()
}

/// A Monte Carlo mean with its standard error and divergence diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct McEstimate {
    /// Sample mean; `+∞` when it exceeds the `f64` range.
    pub mean: f64,
    pub std_error: f64,
    pub n_samples: usize,
    /// Samples whose value was not representable (log value above
    /// `ln f64::MAX`, or non-finite).
    pub overflow_count: usize,
    pub tau_lt_t_count: usize,
    /// Whether aggregation ran in log space.
    pub log_domain: bool,
    /// `ln(mean)`, always available.
    pub log_mean: f64,
    /// `std_error / mean`.
    pub rel_std_error: f64,
    /// False when no sample had a finite value.
    pub usable: bool,
}

impl McEstimate {
    /// Mean of `exp(l_i)` from log values `l_i`.
    ///
    /// Non-finite `l_i` are counted as overflow and left out of the mean; an
    /// estimate with no finite value is flagged unusable.
    pub fn from_log(log_values: &[f64], tau_lt_t_count: usize) -> McEstimate {
        let n = log_values.len();
        let overflow_count = log_values
            .iter()
            .filter(|l| !l.is_finite() || **l > f64::MAX.ln())
            .count();
        let finite: Vec<f64> = log_values.iter().copied().filter(|l| l.is_finite()).collect();
        if finite.is_empty() {
            return McEstimate {
                mean: f64::INFINITY,
                std_error: f64::INFINITY,
                n_samples: n,
                overflow_count,
                tau_lt_t_count,
                log_domain: true,
                log_mean: f64::INFINITY,
                rel_std_error: f64::INFINITY,
                usable: false,
            };
        }
        let k = finite.len() as f64;
        let max = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_domain = max > LOG_DOMAIN_THRESHOLD;
        let shift = if log_domain { max } else { 0.0 };
        let scaled: Vec<f64> = finite.iter().map(|l| (l - shift).exp()).collect();
        let mean_s = pairwise_sum(&scaled) / k;
        let dev: Vec<f64> = scaled.iter().map(|s| (s - mean_s) * (s - mean_s)).collect();
        let var_s = if finite.len() > 1 { pairwise_sum(&dev) / (k - 1.0) } else { 0.0 };
        let se_s = (var_s / k).sqrt();
        let log_mean = shift + mean_s.ln();
        let rel_std_error = se_s / mean_s;
        let (mean, std_error) = if log_domain {
            let mean = log_mean.exp();
            (mean, if mean.is_finite() { rel_std_error * mean } else { f64::INFINITY })
        } else {
            (mean_s, se_s)
        };
        McEstimate {
            mean,
            std_error,
            n_samples: n,
            overflow_count,
            tau_lt_t_count,
            log_domain,
            log_mean,
            rel_std_error,
            usable: true,
        }
    }

    /// Plain sample mean of finite values.
    pub fn from_linear(values: &[f64], tau_lt_t_count: usize) -> McEstimate {
        let n = values.len();
        let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        let overflow_count = n - finite.len();
        if finite.is_empty() {
            return McEstimate {
                mean: f64::NAN,
                std_error: f64::NAN,
                n_samples: n,
                overflow_count,
                tau_lt_t_count,
                log_domain: false,
                log_mean: f64::NAN,
                rel_std_error: f64::NAN,
                usable: false,
            };
        }
        let k = finite.len() as f64;
        let mean = pairwise_sum(&finite) / k;
        let dev: Vec<f64> = finite.iter().map(|v| (v - mean) * (v - mean)).collect();
        let var = if finite.len() > 1 { pairwise_sum(&dev) / (k - 1.0) } else { 0.0 };
        let std_error = (var / k).sqrt();
        McEstimate {
            mean,
            std_error,
            n_samples: n,
            overflow_count,
            tau_lt_t_count,
            log_domain: false,
            log_mean: mean.ln(),
            rel_std_error: std_error / mean.abs(),
            usable: true,
        }
    }
}

/// The integrand data of `exp(U(Y_t)e^{−ρt} + ∫_0^{t∧τ} Ū(Y_s)e^{−ρs} ds)`.
#[derive(Clone, Debug)]
pub struct FunctionalSpec {
    pub pair: LyapunovPair,
    pub t_query: Vec<f64>,
    /// Left-endpoint quadrature cells per coarse interval.
    pub substeps: usize,
}

pub const DEFAULT_SUBSTEPS: usize = 4;

impl FunctionalSpec {
    pub fn new(pair: LyapunovPair, t_query: Vec<f64>, substeps: usize) -> Result<Self> {
        if substeps == 0 {
            return invalid("quadrature needs at least one substep");
        }
        if t_query.is_empty() || t_query.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return invalid("query times must be non-empty, finite and non-negative");
        }
        Ok(FunctionalSpec { pair, t_query, substeps })
    }
}

/// `k` equispaced times `0, T/(k−1), …, T`.
pub fn equispaced_times(k: usize, horizon: f64) -> Vec<f64> {
    if k <= 1 {
        return vec![horizon];
    }
    (0..k)
        .map(|i| if i == k - 1 { horizon } else { i as f64 * horizon / (k - 1) as f64 })
        .collect()
}

/// Log of the functional at every query time for one path, and whether `τ < T`.
///
/// A path whose scheme overflows yields `+∞` at every time.
pub fn exp_moment_log_values(
    scheme: &SchemeSpec,
    prob: &SdeProblem,
    part: &Partition,
    master: &MasterPath,
    fspec: &FunctionalSpec,
    x0: &[f64],
) -> Result<(Vec<f64>, bool)> {
    let horizon = part.horizon();
    for &t in &fspec.t_query {
        if t > horizon {
            return invalid(format!("query time {t} beyond horizon {horizon}"));
        }
    }
    let increments = master.increments_for(part)?;
    let path = match simulate(scheme, prob, part, x0, &increments) {
        Ok(p) => p,
        Err(Error::NumericOverflow { .. }) => return Ok((vec![f64::INFINITY; fspec.t_query.len()], true)),
        Err(e) => return Err(e),
    };
    let (d, m, steps, sub) = (prob.dim, prob.noise_dim, part.steps(), fspec.substeps);
    let pair = &fspec.pair;
    let rho = pair.rho;
    let discount = |t: f64| if rho == 0.0 { 1.0 } else { (-rho * t).exp() };
    let knots: Vec<usize> = (0..=steps).map(|n| master.index_of(part.time(n))).collect::<Result<_>>()?;
    let fine_dt = master.fine_dt();
    let node_time = |k: usize| if k == master.fine_steps() { horizon } else { k as f64 * fine_dt };

    let mut stepper = Stepper::new(scheme, prob, part.mesh())?;
    let frozen = path.frozen_from.unwrap_or(usize::MAX);
    // integrand at each node and the cumulative integral up to each node
    let mut node_g = vec![0.0; steps * sub];
    let mut cum = vec![0.0; steps * sub + 1];
    let mut y = [0.0; MAX_DIM];
    let mut dw = [0.0; MAX_DIM];
    let mut acc = 0.0;
    for n in 0..steps {
        let span = knots[n + 1] - knots[n];
        if span % sub != 0 {
            return invalid(format!("{sub} substeps of interval {n} do not lie on the master grid"));
        }
        let cell = span / sub;
        let active = n < frozen;
        if active {
            stepper.prepare(path.state(n))?;
        }
        let tn = part.time(n);
        for j in 0..sub {
            let k = knots[n] + j * cell;
            let a = node_time(k);
            let b = if j + 1 == sub { part.time(n + 1) } else { node_time(k + cell) };
            let g = if !active {
                0.0
            } else if j == 0 {
                pair.ubar(path.state(n)) * discount(a)
            } else {
                master.increment_into(knots[n], k, &mut dw[..m]);
                if let Err(e) = stepper.eval(a - tn, &dw[..m], &mut y[..d]) {
                    return match e {
                        Error::NumericOverflow { .. } => Ok((vec![f64::INFINITY; fspec.t_query.len()], true)),
                        e => Err(e),
                    };
                }
                pair.ubar(&y[..d]) * discount(a)
            };
            node_g[n * sub + j] = g;
            acc += g * (b - a);
            cum[n * sub + j + 1] = acc;
        }
    }

    let mut out = Vec::with_capacity(fspec.t_query.len());
    for &t in &fspec.t_query {
        let k = master.index_of(t)?;
        let n = part.floor_index(t)?;
        let tn = part.time(n);
        let yt: Vec<f64> = if t == tn || n >= frozen {
            path.state(n).to_vec()
        } else {
            stepper.prepare(path.state(n))?;
            master.increment_into(knots[n], k, &mut dw[..m]);
            match stepper.eval(t - tn, &dw[..m], &mut y[..d]) {
                Ok(()) => y[..d].to_vec(),
                Err(Error::NumericOverflow { .. }) => {
                    out.push(f64::INFINITY);
                    continue;
                }
                Err(e) => return Err(e),
            }
        };
        let integral = if n == steps {
            cum[steps * sub]
        } else {
            let cell = (knots[n + 1] - knots[n]) / sub;
            let j = (k - knots[n]) / cell;
            let node = n * sub + j;
            cum[node] + node_g[node] * (t - node_time(knots[n] + j * cell))
        };
        out.push(pair.u(&yt) * discount(t) + integral);
    }
    Ok((out, path.stopped_early()))
}

/// Log of the functional at one time `t` for one path.
pub fn exp_moment_functional(
    scheme: &SchemeSpec,
    prob: &SdeProblem,
    part: &Partition,
    master: &MasterPath,
    fspec: &FunctionalSpec,
    x0: &[f64],
    t: f64,
) -> Result<f64> {
    let single = FunctionalSpec { t_query: vec![t], ..fspec.clone() };
    Ok(exp_moment_log_values(scheme, prob, part, master, &single, x0)?.0[0])
}

/// Monte Carlo setup for the exponential-moment functional.
#[derive(Clone, Debug)]
pub struct ExpMomentRun<'a> {
    pub problem: &'a SdeProblem,
    pub scheme: &'a SchemeSpec,
    pub functional: &'a FunctionalSpec,
    pub x0: &'a [f64],
    pub sampler: PathSampler,
    pub n_paths: usize,
    pub workers: usize,
}

impl ExpMomentRun<'_> {
    /// Estimates per `N` in `steps_list` and per query time, all driven by the
    /// same master paths.
    pub fn estimate(&self, steps_list: &[usize]) -> Result<Vec<Vec<McEstimate>>> {
        if self.n_paths < 2 {
            return invalid("at least two sample paths are needed");
        }
        let horizon = self.sampler.horizon;
        let parts: Vec<Partition> = steps_list
            .iter()
            .map(|&n| uniform_partition(n, horizon))
            .collect::<Result<_>>()?;
        let per_path = run_paths(self.n_paths, self.workers, |id| {
            let master = self.sampler.path(id);
            parts
                .iter()
                .map(|p| exp_moment_log_values(self.scheme, self.problem, p, &master, self.functional, self.x0))
                .collect::<Result<Vec<_>>>()
        })?;
        let nq = self.functional.t_query.len();
        Ok((0..parts.len())
            .map(|i| {
                let taus = per_path.iter().filter(|p| p[i].1).count();
                (0..nq)
                    .map(|q| {
                        let logs: Vec<f64> = per_path.iter().map(|p| p[i].0[q]).collect();
                        McEstimate::from_log(&logs, taus)
                    })
                    .collect()
            })
            .collect())
    }
}

/// Single-`N` convenience form of [`ExpMomentRun::estimate`].
pub fn estimate_exp_moment(run: &ExpMomentRun<'_>, steps: usize) -> Result<Vec<McEstimate>> {
    Ok(run.estimate(&[steps])?.remove(0))
}

/// Monte Carlo setup for `E‖Y^ref_t − Y^N_t‖^r`, the reference running on the
/// full master grid `N_ref = 2^L`.
#[derive(Clone, Debug)]
pub struct StrongErrorRun<'a> {
    pub problem: &'a SdeProblem,
    pub scheme: &'a SchemeSpec,
    pub reference: &'a SchemeSpec,
    pub x0: &'a [f64],
    pub r: f64,
    pub t_query: &'a [f64],
    pub sampler: PathSampler,
    pub n_paths: usize,
    pub workers: usize,
}

impl StrongErrorRun<'_> {
    /// Per `N` and query time; query times must lie on every coarse grid.
    pub fn estimate(&self, steps_list: &[usize]) -> Result<Vec<Vec<McEstimate>>> {
        if !(self.r > 0.0) {
            return invalid("moment order r must be positive");
        }
        let n_ref = 1usize << self.sampler.levels;
        let horizon = self.sampler.horizon;
        for &n in steps_list {
            if n == 0 || n > n_ref || n_ref % n != 0 {
                return invalid(format!("N = {n} does not divide N_ref = {n_ref}"));
            }
        }
        let ref_part = uniform_partition(n_ref, horizon)?;
        let parts: Vec<Partition> = steps_list
            .iter()
            .map(|&n| uniform_partition(n, horizon))
            .collect::<Result<_>>()?;
        let idx = |p: &Partition, t: f64| -> Result<usize> {
            let i = p.floor_index(t)?;
            if p.time(i) != t {
                return invalid(format!("query time {t} is not on the {}-step grid", p.steps()));
            }
            Ok(i)
        };
        let ref_idx: Vec<usize> = self.t_query.iter().map(|&t| idx(&ref_part, t)).collect::<Result<_>>()?;
        let coarse_idx: Vec<Vec<usize>> = parts
            .iter()
            .map(|p| self.t_query.iter().map(|&t| idx(p, t)).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        let d = self.problem.dim;
        let per_path = run_paths(self.n_paths, self.workers, |id| {
            let master = self.sampler.path(id);
            let reference = simulate(self.reference, self.problem, &ref_part, self.x0, master.increments())?;
            parts
                .iter()
                .zip(&coarse_idx)
                .map(|(p, ci)| {
                    let path = simulate(self.scheme, self.problem, p, self.x0, master.coarsen(p.steps())?)?;
                    Ok(ci
                        .iter()
                        .zip(&ref_idx)
                        .map(|(&c, &f)| {
                            let mut diff = [0.0; MAX_DIM];
                            for i in 0..d {
                                diff[i] = reference.state(f)[i] - path.state(c)[i];
                            }
                            norm(&diff[..d]).powf(self.r)
                        })
                        .collect::<Vec<f64>>())
                })
                .collect::<Result<Vec<_>>>()
        })?;
        Ok((0..parts.len())
            .map(|i| {
                (0..self.t_query.len())
                    .map(|q| {
                        let v: Vec<f64> = per_path.iter().map(|p| p[i][q]).collect();
                        McEstimate::from_linear(&v, 0)
                    })
                    .collect()
            })
            .collect())
    }
}

/// A one-step map in increment form: `φ(x, t, y) = Φ(x, t, y) − x`.
pub trait OneStepMap: Sync {
    fn increment(&self, x: &[f64], t: f64, y: &[f64], out: &mut [f64]) -> Result<()>;
}

/// Increment of a scheme, with `D_t` taken at mesh `t`.
pub struct SchemeIncrement<'a> {
    pub scheme: &'a SchemeSpec,
    pub problem: &'a SdeProblem,
}

impl OneStepMap for SchemeIncrement<'_> {
    fn increment(&self, x: &[f64], t: f64, y: &[f64], out: &mut [f64]) -> Result<()> {
        let mut stepper = Stepper::new(self.scheme, self.problem, t)?;
        stepper.prepare(x)?;
        stepper.eval(t, y, out)?;
        for (o, xi) in out.iter_mut().zip(x) {
            *o -= xi;
        }
        Ok(())
    }
}

/// `φ(x, t, y) = μ(x)t + σ(x)y`.
pub struct ExactEulerIncrement<'a> {
    pub problem: &'a SdeProblem,
}

impl OneStepMap for ExactEulerIncrement<'_> {
    fn increment(&self, x: &[f64], t: f64, y: &[f64], out: &mut [f64]) -> Result<()> {
        let (d, m) = (self.problem.dim, self.problem.noise_dim);
        let mut mu = [0.0; MAX_DIM];
        let mut sigma = [0.0; MAX_DIM * MAX_DIM];
        self.problem.drift_into(x, &mut mu[..d]);
        self.problem.diffusion_into(x, &mut sigma[..d * m]);
        for i in 0..d {
            out[i] = mu[i] * t + (0..m).map(|k| sigma[i * m + k] * y[k]).sum::<f64>();
        }
        Ok(())
    }
}

/// `φ ≡ 0`, a map that is not consistent.
pub struct ZeroIncrement;

impl OneStepMap for ZeroIncrement {
    fn increment(&self, _x: &[f64], _t: f64, _y: &[f64], out: &mut [f64]) -> Result<()> {
        out.fill(0.0);
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DefectRow {
    pub t: f64,
    /// `sup_x E‖σ(x)W_t − φ(x, t, W_t)‖ / √t`.
    pub a: f64,
    /// `sup_x ‖μ(x) − E[φ(x, t, W_t)]/t‖`.
    pub b: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConsistencyReport {
    pub rows: Vec<DefectRow>,
    pub a_falls: bool,
    pub b_falls: bool,
}

impl ConsistencyReport {
    /// Both defects fall below a quarter of their first value.
    pub fn passed(&self) -> bool {
        self.a_falls && self.b_falls
    }
}

/// Monte Carlo estimates of both consistency defects over the points `k_set`.
///
/// All `(x, t)` pairs share the normals `Z_j` (stream `(seed, j)`), with
/// `W_t = √t Z_j`. Since `E[σ(x)W_t] = 0` exactly, the drift defect uses the
/// control variate `E[φ − σ(x)W_t]`.
pub fn consistency_defect(
    phi: &dyn OneStepMap,
    prob: &SdeProblem,
    k_set: &[Vec<f64>],
    t_seq: &[f64],
    n_samples: usize,
    seed: u64,
    workers: usize,
) -> Result<ConsistencyReport> {
    if k_set.is_empty() || t_seq.is_empty() || n_samples == 0 {
        return invalid("consistency check needs points, times and samples");
    }
    let (d, m) = (prob.dim, prob.noise_dim);
    let normals: Vec<f64> = (0..n_samples as u64)
        .flat_map(|j| {
            let mut s = NormalStream::new(seed, j);
            (0..m).map(move |_| s.next_normal())
        })
        .collect();
    let pairs: Vec<(usize, usize)> = (0..t_seq.len()).flat_map(|ti| (0..k_set.len()).map(move |xi| (ti, xi))).collect();
    let per_pair = run_paths(pairs.len(), workers, |p| {
        let (ti, xi) = pairs[p as usize];
        let (t, x) = (t_seq[ti], &k_set[xi]);
        let sqrt_t = t.sqrt();
        let mut mu = [0.0; MAX_DIM];
        let mut sigma = [0.0; MAX_DIM * MAX_DIM];
        prob.drift_into(x, &mut mu[..d]);
        prob.diffusion_into(x, &mut sigma[..d * m]);
        let mut a_terms = Vec::with_capacity(n_samples);
        let mut b_terms: Vec<Vec<f64>> = vec![Vec::with_capacity(n_samples); d];
        let mut w = [0.0; MAX_DIM];
        let mut out = [0.0; MAX_DIM];
        for j in 0..n_samples {
            for k in 0..m {
                w[k] = sqrt_t * normals[j * m + k];
            }
            phi.increment(x, t, &w[..m], &mut out[..d])?;
            let mut sq = 0.0;
            for i in 0..d {
                let sw: f64 = (0..m).map(|k| sigma[i * m + k] * w[k]).sum();
                sq += (sw - out[i]) * (sw - out[i]);
                b_terms[i].push(out[i] - sw);
            }
            a_terms.push(sq.sqrt());
        }
        let a = pairwise_sum(&a_terms) / n_samples as f64 / sqrt_t;
        let mut b_sq = 0.0;
        for i in 0..d {
            let mean = pairwise_sum(&b_terms[i]) / n_samples as f64;
            b_sq += (mu[i] - mean / t) * (mu[i] - mean / t);
        }
        Ok((a, b_sq.sqrt()))
    })?;
    let rows: Vec<DefectRow> = t_seq
        .iter()
        .enumerate()
        .map(|(ti, &t)| {
            let slice = &per_pair[ti * k_set.len()..(ti + 1) * k_set.len()];
            DefectRow {
                t,
                a: slice.iter().map(|p| p.0).fold(0.0, f64::max),
                b: slice.iter().map(|p| p.1).fold(0.0, f64::max),
            }
        })
        .collect();
    let first = &rows[0];
    let last = &rows[rows.len() - 1];
    Ok(ConsistencyReport {
        a_falls: last.a < first.a / 4.0,
        b_falls: last.b < first.b / 4.0,
        rows,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TailRow {
    pub n_samples: usize,
    pub log_estimate: f64,
    pub running_max_log: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TailProbe {
    pub rows: Vec<TailRow>,
    /// `ln` of (running maximum at the last schedule point / estimate at the first).
    pub log_growth: f64,
    /// `|est(M) / est(M/2) − 1|` at the last schedule point `M`.
    pub last_doubling_drift: f64,
    pub overflow_count: usize,
}

impl TailProbe {
    pub fn growth_ratio(&self) -> f64 {
        self.log_growth.exp()
    }
}

/// Setup for running estimates of `E[exp(p ‖Y^N_t‖^q)]`.
#[derive(Clone, Debug)]
pub struct TailProbeRun<'a> {
    pub problem: &'a SdeProblem,
    pub scheme: &'a SchemeSpec,
    pub x0: &'a [f64],
    pub p: f64,
    pub q: f64,
    pub steps: usize,
    pub t: f64,
    pub horizon: f64,
    pub seed: u64,
    pub workers: usize,
}

/// Running estimates at each sample count of the increasing `schedule`.
pub fn tail_growth_probe(run: &TailProbeRun<'_>, schedule: &[usize]) -> Result<TailProbe> {
    if !(run.p > 0.0 && run.q > 0.0) {
        return invalid("p and q must be positive");
    }
    if schedule.is_empty() || schedule.windows(2).any(|w| w[1] <= w[0]) || schedule[0] < 2 {
        return invalid("sample schedule must be increasing and start at 2 or more");
    }
    if !run.steps.is_power_of_two() {
        return invalid("tail probe needs N a power of two");
    }
    let levels = run.steps.trailing_zeros();
    let sampler = PathSampler::new(run.seed, levels, run.horizon, run.problem.noise_dim)?;
    let part = uniform_partition(run.steps, run.horizon)?;
    let n_t = part.floor_index(run.t)?;
    if part.time(n_t) != run.t {
        return invalid(format!("probe time {} is not on the grid", run.t));
    }
    let total = *schedule.last().unwrap();
    let logs = run_paths(total, run.workers, |id| {
        let master = sampler.path(id);
        match simulate(run.scheme, run.problem, &part, run.x0, master.increments()) {
            Ok(path) => Ok(run.p * norm(path.state(n_t)).powf(run.q)),
            Err(Error::NumericOverflow { .. }) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    })?;
    let running = |k: usize| -> f64 {
        let e = McEstimate::from_log(&logs[..k], 0);
        if e.overflow_count > 0 && logs[..k].iter().any(|l| !l.is_finite()) {
            f64::INFINITY
        } else {
            e.log_mean
        }
    };
    let mut rows = Vec::with_capacity(schedule.len());
    let mut running_max = f64::NEG_INFINITY;
    for &k in schedule {
        let le = running(k);
        running_max = running_max.max(le);
        rows.push(TailRow { n_samples: k, log_estimate: le, running_max_log: running_max });
    }
    let last = rows.last().unwrap().log_estimate;
    let half = running(total / 2);
    let last_doubling_drift = if last.is_finite() && half.is_finite() {
        ((last - half).exp() - 1.0).abs()
    } else {
        f64::INFINITY
    };
    Ok(TailProbe {
        log_growth: running_max - rows[0].log_estimate,
        last_doubling_drift,
        overflow_count: logs.iter().filter(|l| !l.is_finite()).count(),
        rows,
    })
}

/// Formats a real with 17 significant digits.
pub fn fmt_real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

pub const ESTIMATE_CSV_HEADER: &str = "t,estimate,std_error,n,overflow_count,tau_lt_T_count,log_domain";

/// CSV rows for one estimate per query time. Log-domain rows report the log
/// of the mean and the relative standard error.
pub fn estimates_csv(t_query: &[f64], estimates: &[McEstimate]) -> String {
    let mut s = String::new();
    s.push_str(ESTIMATE_CSV_HEADER);
    s.push('\n');
    for (t, e) in t_query.iter().zip(estimates) {
        let (est, se) = if e.log_domain { (e.log_mean, e.rel_std_error) } else { (e.mean, e.std_error) };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            fmt_real(*t),
            fmt_real(est),
            fmt_real(se),
            e.n_samples,
            e.overflow_count,
            e.tau_lt_t_count,
            u8::from(e.log_domain)
        );
    }
    s
}

pub fn write_estimates_csv(path: &Path, t_query: &[f64], estimates: &[McEstimate]) -> Result<()> {
    std::fs::write(path, estimates_csv(t_query, estimates))?;
    Ok(())
}

pub fn tail_probe_csv(probe: &TailProbe) -> String {
    let mut s = String::from("M,log_estimate,estimate,running_max_log\n");
    for r in &probe.rows {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            r.n_samples,
            fmt_real(r.log_estimate),
            fmt_real(r.log_estimate.exp()),
            fmt_real(r.running_max_log)
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lyapunov::model_by_name;
    use crate::schemes::{SchemeKind, StoppingFamily};

    fn cubic(delta: f64) -> crate::lyapunov::ModelCard {
        model_by_name("cubic1d").unwrap().with_params(&[("delta".into(), delta)]).unwrap()
    }

    #[test]
    fn log_estimate_matches_linear_when_small() {
        let logs = [0.1, -0.3, 0.7, 0.2];
        let lin: Vec<f64> = logs.iter().map(|l: &f64| l.exp()).collect();
        let a = McEstimate::from_log(&logs, 1);
        let b = McEstimate::from_linear(&lin, 1);
        assert!(!a.log_domain);
        assert!((a.mean - b.mean).abs() < 1e-15);
        assert!((a.std_error - b.std_error).abs() < 1e-15);
        assert_eq!(a.tau_lt_t_count, 1);
    }

    #[test]
    fn log_domain_aggregation() {
        let a = McEstimate::from_log(&[1000.0, 1000.0], 0);
        assert!(a.log_domain);
        assert!((a.log_mean - 1000.0).abs() < 1e-12);
        assert_eq!(a.overflow_count, 2);
        assert_eq!(a.rel_std_error, 0.0);
        assert!(a.usable);
        let b = McEstimate::from_log(&[800.0, 800.0 + 2f64.ln()], 0);
        assert!((b.log_mean - (800.0 + 1.5f64.ln())).abs() < 1e-12);
        let c = McEstimate::from_log(&[f64::INFINITY, f64::NAN], 0);
        assert!(!c.usable);
        assert_eq!(c.overflow_count, 2);
    }

    #[test]
    fn one_step_functional_matches_straight_line_oracle() {
        let card = cubic(0.25);
        let prob = &card.problem;
        let h = 0.25;
        // single step on [0, h] with four quadrature cells, zero noise
        let master = MasterPath::from_increments(2, h, 1, vec![0.0; 4]).unwrap();
        let part = uniform_partition(1, h).unwrap();
        let fspec = FunctionalSpec::new(card.pair.clone(), vec![h], 4).unwrap();
        let spec = SchemeSpec::proposed(2.0).unwrap();
        let got = exp_moment_functional(&spec, prob, &part, &master, &fspec, &[1.0], h).unwrap();

        let delta = 0.25;
        let ubar = |x: f64| 4.0 * delta * (1.0 - 2.0 * delta) * x.powi(6) - 6.0 * delta * x * x;
        let phi = |s: f64| {
            let z = -s;
            1.0 + z / (1.0 + z * z)
        };
        let mut integral = 0.0;
        for j in 0..4 {
            let s = j as f64 * h / 4.0;
            let y = if j == 0 { 1.0 } else { phi(s) };
            integral += ubar(y) * h / 4.0;
        }
        let expected = delta * phi(h).powi(4) + integral;
        assert!((got - expected).abs() < 1e-14, "{got} vs {expected}");
    }

    #[test]
    fn functional_reduces_to_terminal_u_when_integrand_vanishes() {
        let card = model_by_name("psychology").unwrap();
        let master = MasterPath::generate(1, 2, 6, 1.0, 1).unwrap();
        let part = uniform_partition(16, 1.0).unwrap();
        let spec = SchemeSpec::proposed(2.0).unwrap();
        let fspec = FunctionalSpec::new(card.pair.clone(), vec![0.5, 1.0], 4).unwrap();
        let (vals, _) = exp_moment_log_values(&spec, &card.problem, &part, &master, &fspec, &[0.5, 0.5]).unwrap();
        let path = simulate(&spec, &card.problem, &part, &[0.5, 0.5], master.coarsen(16).unwrap()).unwrap();
        assert_eq!(vals[0], card.pair.u(path.state(8)));
        assert_eq!(vals[1], card.pair.u(path.state(16)));
    }

    #[test]
    fn frozen_at_start_gives_terminal_u_only() {
        let card = cubic(0.25);
        let master = MasterPath::generate(1, 2, 6, 1.0, 1).unwrap();
        let part = uniform_partition(16, 1.0).unwrap();
        let spec = SchemeSpec::proposed(2.0).unwrap();
        let fspec = FunctionalSpec::new(card.pair.clone(), vec![0.3125, 1.0], 4).unwrap();
        let x0 = [100.0];
        let (vals, hit) = exp_moment_log_values(&spec, &card.problem, &part, &master, &fspec, &x0).unwrap();
        assert!(hit);
        assert_eq!(vals, vec![card.pair.u(&x0); 2]);
    }

    #[test]
    fn ubar_shift_scales_by_stopped_time() {
        let card = cubic(0.1);
        let kappa = 0.37;
        let shifted = card.pair.with_ubar_shift(kappa);
        let spec = SchemeSpec::proposed(2.0).unwrap();
        let part = uniform_partition(32, 1.0).unwrap();
        let t_query = equispaced_times(9, 1.0);
        let a = FunctionalSpec::new(card.pair.clone(), t_query.clone(), 4).unwrap();
        let b = FunctionalSpec::new(shifted, t_query.clone(), 4).unwrap();
        for (id, x0) in [(0u64, 0.5), (1, 2.0), (2, 3.5)] {
            let master = MasterPath::generate(4, id, 8, 1.0, 1).unwrap();
            let (va, _) = exp_moment_log_values(&spec, &card.problem, &part, &master, &a, &[x0]).unwrap();
            let (vb, _) = exp_moment_log_values(&spec, &card.problem, &part, &master, &b, &[x0]).unwrap();
            let path = simulate(&spec, &card.problem, &part, &[x0], master.coarsen(32).unwrap()).unwrap();
            for (i, &t) in t_query.iter().enumerate() {
                let expected = kappa * t.min(path.tau);
                assert!((vb[i] - va[i] - expected).abs() < 1e-12, "t = {t}");
            }
        }
    }

    #[test]
    fn deterministic_model_has_zero_standard_error() {
        let card = model_by_name("ginzburg_landau").unwrap();
        let prob = SdeProblem::new(1, 1, |x, o| o[0] = -x[0], |_, o| o[0] = 0.0, 1.0).unwrap();
        let spec = SchemeSpec::proposed(2.0).unwrap();
        let fspec = FunctionalSpec::new(card.pair.clone(), equispaced_times(3, 1.0), 4).unwrap();
        let run = ExpMomentRun {
            problem: &prob,
            scheme: &spec,
            functional: &fspec,
            x0: &[1.0],
            sampler: PathSampler::new(1, 6, 1.0, 1).unwrap(),
            n_paths: 50,
            workers: 2,
        };
        let est = estimate_exp_moment(&run, 16).unwrap();
        assert!(est.iter().all(|e| e.rel_std_error < 1e-15), "{est:?}");
    }

    #[test]
    fn estimates_do_not_depend_on_workers() {
        let card = cubic(0.1);
        let spec = SchemeSpec::proposed(2.0).unwrap();
        let fspec = FunctionalSpec::new(card.pair.clone(), equispaced_times(5, 1.0), 4).unwrap();
        let mk = |workers| ExpMomentRun {
            problem: &card.problem,
            scheme: &spec,
            functional: &fspec,
            x0: &[0.0],
            sampler: PathSampler::new(9, 8, 1.0, 1).unwrap(),
            n_paths: 300,
            workers,
        };
        let a = mk(1).estimate(&[16, 64]).unwrap();
        let b = mk(3).estimate(&[16, 64]).unwrap();
        assert_eq!(a, b);
        assert_eq!(estimates_csv(&fspec.t_query, &a[0]), estimates_csv(&fspec.t_query, &b[0]));
    }

    #[test]
    fn strong_error_vanishes_for_identical_schemes() {
        let card = cubic(0.25);
        let spec = SchemeSpec::proposed(2.0).unwrap();
        let t = equispaced_times(5, 1.0);
        let run = StrongErrorRun {
            problem: &card.problem,
            scheme: &spec,
            reference: &spec,
            x0: &[0.5],
            r: 2.0,
            t_query: &t,
            sampler: PathSampler::new(1, 6, 1.0, 1).unwrap(),
            n_paths: 20,
            workers: 1,
        };
        let e = run.estimate(&[64, 16]).unwrap();
        assert!(e[0].iter().all(|x| x.mean == 0.0));
        assert!(e[1].iter().all(|x| x.mean >= 0.0));
        assert!(e[1][4].mean > 0.0);
        assert!(run.estimate(&[3]).is_err());

        let zero = SdeProblem::new(1, 1, |_, o| o[0] = 0.0, |_, o| o[0] = 0.0, 1.0).unwrap();
        let run = StrongErrorRun { problem: &zero, ..run };
        assert!(run.estimate(&[4]).unwrap()[0].iter().all(|x| x.mean == 0.0));
    }

    #[test]
    fn exact_euler_defects_closed_form() {
        let card = cubic(0.25);
        let k: Vec<Vec<f64>> = (0..5).map(|i| vec![-2.0 + i as f64]).collect();
        let t = [0.25, 1.0 / 64.0];
        let rep = consistency_defect(&ExactEulerIncrement { problem: &card.problem }, &card.problem, &k, &t, 1000, 1, 1)
            .unwrap();
        for row in &rep.rows {
            // σW − φ = −μ t, so a_t = sup|μ| √t = 8 √t, and b_t vanishes
            assert!((row.a - 8.0 * row.t.sqrt()).abs() < 1e-12, "{row:?}");
            assert!(row.b < 1e-12, "{row:?}");
        }
    }

    #[test]
    fn zero_map_is_not_consistent() {
        let card = cubic(0.25);
        let k: Vec<Vec<f64>> = (0..5).map(|i| vec![-2.0 + i as f64]).collect();
        let t: Vec<f64> = (2..=10).step_by(2).map(|e| 0.5f64.powi(e)).collect();
        let rep = consistency_defect(&ZeroIncrement, &card.problem, &k, &t, 2000, 1, 1).unwrap();
        assert!(!rep.passed());
        for row in &rep.rows {
            // b carries the control-variate noise of mean(σW)/t
            let sd = 1.0 / (2000.0 * row.t).sqrt();
            assert!((row.b - 8.0).abs() < 5.0 * sd, "{row:?}");
            assert!((row.a - (2.0 / std::f64::consts::PI).sqrt()).abs() < 0.05);
        }
    }

    #[test]
    fn tail_probe_constant_for_deterministic_path() {
        let prob = SdeProblem::new(1, 1, |x, o| o[0] = -x[0], |_, o| o[0] = 0.0, 1.0).unwrap();
        let spec = SchemeSpec::new(SchemeKind::EulerStopped, 2.0, StoppingFamily::whole_space()).unwrap();
        let run = TailProbeRun {
            problem: &prob,
            scheme: &spec,
            x0: &[1.0],
            p: 1.0,
            q: 3.0,
            steps: 4,
            t: 1.0,
            horizon: 1.0,
            seed: 1,
            workers: 1,
        };
        let probe = tail_growth_probe(&run, &[10, 20, 40]).unwrap();
        let first = probe.rows[0].log_estimate;
        assert!(probe.rows.iter().all(|r| r.log_estimate == first));
        assert_eq!(probe.last_doubling_drift, 0.0);
        assert_eq!(probe.log_growth, 0.0);
        assert!((first - 0.75f64.powi(4).powi(3)).abs() < 1e-15);
    }

    #[test]
    fn csv_layout() {
        let e = McEstimate::from_log(&[0.0, 0.0], 0);
        let s = estimates_csv(&[0.5], &[e]);
        assert_eq!(
            s,
            "t,estimate,std_error,n,overflow_count,tau_lt_T_count,log_domain\n\
             5.0000000000000000e-1,1.0000000000000000e0,0.0000000000000000e0,2,0,0,0\n"
        );
        let e = McEstimate::from_log(&[1000.0, 1000.0], 2);
        let s = estimates_csv(&[1.0], &[e]);
        assert!(s.ends_with(",2,2,2,1\n") || s.contains("1.0000000000000000e3"), "{s}");
    }
}
