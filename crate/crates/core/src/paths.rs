//! Master Brownian paths on a dyadic grid of `2^L` intervals.
//!
//! Every coarse scheme and the fine reference read their increments from the
//! same master path, so they are driven by one Brownian motion. Block sums are
//! kept as a dyadic pyramid: the increment over an aligned block of `2^j`
//! fine intervals is the sum of its two half blocks. Coarsening is therefore
//! exact across resolutions, i.e. `coarsen(N)` equals the pairwise sums of
//! `coarsen(2N)` bit for bit.

use std::io::{Read, Write};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::numerics::normal_quantile;
use crate::problem::{Partition, MAX_DIM};

/// Memory guard on the fineness exponent.
pub const MAX_LEVELS: u32 = 24;

const MAGIC: &[u8; 5] = b"EMSP1";

/// Uniform on the open interval (0, 1) from the top 53 bits.
#[inline]
fn open_uniform(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal stream for one `(seed, stream)` key.
///
/// The `k`-th draw depends only on the key and `k`, never on other streams.
pub struct NormalStream {
    rng: ChaCha8Rng,
}

impl NormalStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        NormalStream { rng }
    }

    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        normal_quantile(open_uniform(self.rng.next_u64()))
    }

    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        open_uniform(self.rng.next_u64())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MasterPath {
    pub seed: u64,
    pub path_id: u64,
    pub levels: u32,
    pub horizon: f64,
    pub noise_dim: usize,
    /// `pyramid[j]` holds the `2^(L-j)` block increments of level `j`,
    /// row-major with `noise_dim` components each; `pyramid[0]` is the fine grid.
    pyramid: Vec<Vec<f64>>,
}

fn check_shape(levels: u32, horizon: f64, noise_dim: usize) -> Result<()> {
    if levels > MAX_LEVELS {
        return Err(Error::Resource(format!("L = {levels} exceeds the limit {MAX_LEVELS}")));
    }
    if noise_dim == 0 || noise_dim > MAX_DIM {
        return invalid(format!("noise dimension {noise_dim} must lie in 1..={MAX_DIM}"));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return invalid(format!("horizon must be positive, got {horizon}"));
    }
    Ok(())
}

fn build_pyramid(fine: Vec<f64>, levels: u32, m: usize) -> Vec<Vec<f64>> {
    let mut pyramid = Vec::with_capacity(levels as usize + 1);
    pyramid.push(fine);
    for _ in 0..levels {
        let prev = pyramid.last().unwrap();
        let blocks = prev.len() / m / 2;
        let mut next = vec![0.0; blocks * m];
        for b in 0..blocks {
            for c in 0..m {
                next[b * m + c] = prev[2 * b * m + c] + prev[(2 * b + 1) * m + c];
            }
        }
        pyramid.push(next);
    }
    pyramid
}

impl MasterPath {
    /// Draws `2^L` increments `N(0, T/2^L · I_m)`, in (interval, component)
    /// order, from the stream keyed by `(seed, path_id)`.
    pub fn generate(seed: u64, path_id: u64, levels: u32, horizon: f64, noise_dim: usize) -> Result<Self> {
        check_shape(levels, horizon, noise_dim)?;
        let n = 1usize << levels;
        let scale = (horizon / n as f64).sqrt();
        let mut stream = NormalStream::new(seed, path_id);
        let fine: Vec<f64> = (0..n * noise_dim).map(|_| scale * stream.next_normal()).collect();
        Ok(MasterPath {
            seed,
            path_id,
            levels,
            horizon,
            noise_dim,
            pyramid: build_pyramid(fine, levels, noise_dim),
        })
    }

    /// Wraps given fine increments (e.g. a hand-built path for tests).
    pub fn from_increments(levels: u32, horizon: f64, noise_dim: usize, increments: Vec<f64>) -> Result<Self> {
        check_shape(levels, horizon, noise_dim)?;
        if increments.len() != (1usize << levels) * noise_dim {
            return invalid(format!(
                "expected {} increments, got {}",
                (1usize << levels) * noise_dim,
                increments.len()
            ));
        }
        Ok(MasterPath {
            seed: 0,
            path_id: 0,
            levels,
            horizon,
            noise_dim,
            pyramid: build_pyramid(increments, levels, noise_dim),
        })
    }

    pub fn fine_steps(&self) -> usize {
        1usize << self.levels
    }

    pub fn fine_dt(&self) -> f64 {
        self.horizon / self.fine_steps() as f64
    }

    pub fn increments(&self) -> &[f64] {
        &self.pyramid[0]
    }

    fn level_for(&self, steps: usize) -> Result<u32> {
        if steps == 0 || !steps.is_power_of_two() || steps > self.fine_steps() {
            return invalid(format!("N = {steps} does not divide 2^{}", self.levels));
        }
        Ok(self.levels - steps.trailing_zeros())
    }

    /// Increments of the uniform `N`-step grid.
    pub fn coarsen(&self, steps: usize) -> Result<&[f64]> {
        let j = self.level_for(steps)?;
        Ok(&self.pyramid[j as usize])
    }

    /// Increment `W_{k1 h} − W_{k0 h}` over fine indices `k0 ≤ k1`, written into `out`.
    ///
    /// The range is split into maximal aligned dyadic blocks, summed left to
    /// right, so aligned ranges reproduce the pyramid entries exactly.
    pub fn increment_into(&self, k0: usize, k1: usize, out: &mut [f64]) {
        let m = self.noise_dim;
        out[..m].fill(0.0);
        let mut k = k0;
        while k < k1 {
            let mut j = if k == 0 { self.levels } else { k.trailing_zeros().min(self.levels) };
            while k + (1usize << j) > k1 {
                j -= 1;
            }
            let block = k >> j;
            let level = &self.pyramid[j as usize];
            for c in 0..m {
                out[c] += level[block * m + c];
            }
            k += 1usize << j;
        }
    }

    pub fn increment(&self, k0: usize, k1: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.noise_dim];
        self.increment_into(k0, k1, &mut out);
        out
    }

    /// Fine-grid index of a dyadic time `t = k T / 2^L`.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        if !(0.0..=self.horizon).contains(&t) {
            return invalid(format!("time {t} outside [0, {}]", self.horizon));
        }
        let n = self.fine_steps();
        let k = (t / self.horizon * n as f64).round() as usize;
        let grid = if k == n { self.horizon } else { k as f64 * self.horizon / n as f64 };
        if (grid - t).abs() > 1e-12 * self.horizon {
            return invalid(format!("time {t} is not on the dyadic grid of 2^{} steps", self.levels));
        }
        Ok(k)
    }

    /// `W_t` for a dyadic time `t`.
    pub fn value_at(&self, t: f64) -> Result<Vec<f64>> {
        let k = self.index_of(t)?;
        Ok(self.increment(0, k))
    }

    /// Increments for an arbitrary partition whose points lie on the dyadic grid.
    pub fn increments_for(&self, partition: &Partition) -> Result<Vec<f64>> {
        if (partition.horizon() - self.horizon).abs() > 1e-12 * self.horizon {
            return invalid("partition horizon differs from the master path horizon");
        }
        if let Partition::Uniform { steps, .. } = partition {
            return self.coarsen(*steps).map(|s| s.to_vec());
        }
        let idx = partition
            .times()
            .iter()
            .map(|&t| self.index_of(t))
            .collect::<Result<Vec<_>>>()?;
        let m = self.noise_dim;
        let mut out = vec![0.0; (idx.len() - 1) * m];
        for (i, w) in idx.windows(2).enumerate() {
            self.increment_into(w[0], w[1], &mut out[i * m..(i + 1) * m]);
        }
        Ok(out)
    }

    /// Binary dump: magic, `T` (f64), `L` and `m` (u32), then fine increments
    /// (f64), all little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(21 + 8 * self.increments().len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.horizon.to_le_bytes());
        out.extend_from_slice(&self.levels.to_le_bytes());
        out.extend_from_slice(&(self.noise_dim as u32).to_le_bytes());
        for v in self.increments() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Inverse of [`MasterPath::to_bytes`]; seed and path id are not stored and read back as 0.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 21 || &bytes[..5] != MAGIC {
            return invalid("not a master path dump");
        }
        let horizon = f64::from_le_bytes(bytes[5..13].try_into().unwrap());
        let levels = u32::from_le_bytes(bytes[13..17].try_into().unwrap());
        let m = u32::from_le_bytes(bytes[17..21].try_into().unwrap()) as usize;
        check_shape(levels, horizon, m)?;
        let body = &bytes[21..];
        if body.len() != 8 * (1usize << levels) * m {
            return invalid("master path dump has the wrong length");
        }
        let inc = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_increments(levels, horizon, m, inc)
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

/// Generates master paths for consecutive path ids under one seed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathSampler {
    pub seed: u64,
    pub levels: u32,
    pub horizon: f64,
    pub noise_dim: usize,
}

impl PathSampler {
    pub fn new(seed: u64, levels: u32, horizon: f64, noise_dim: usize) -> Result<Self> {
        check_shape(levels, horizon, noise_dim)?;
        Ok(PathSampler { seed, levels, horizon, noise_dim })
    }

    pub fn path(&self, path_id: u64) -> MasterPath {
        MasterPath::generate(self.seed, path_id, self.levels, self.horizon, self.noise_dim)
            .expect("shape validated at construction")
    }
}
