//! Simulation of SDEs with non-globally-monotone coefficients.
//!
//! The crate centres on the stopped increment-tamed Euler-Maruyama scheme
//!
//! ```text
//! Y_t = Y_n + 1{Y_n ∈ D_h} · z / (1 + ‖z‖^q),   z = μ(Y_n)(t − t_n) + σ(Y_n)(W_t − W_{t_n})
//! ```
//!
//! and its classical competitors (stopped Euler, stopped linear-implicit
//! Euler and two tamed Euler variants), together with the Monte Carlo
//! machinery needed to check exponential integrability, consistency and
//! strong convergence on a zoo of example SDEs.
//!
//! Module map:
//! - [`problem`]: SDE problems, partitions, Hilbert-Schmidt matrices.
//! - [`lyapunov`]: Lyapunov pairs, the formal generator, the model zoo.
//! - [`schemes`]: one-step maps, stopping families, path simulation.
//! - [`paths`]: master Brownian paths on dyadic grids.
//! - [`montecarlo`]: exponential-moment, strong-error, consistency and tail estimators.
//! - [`analysis`]: closed-form bounds and the divergence taxonomy.
//! - [`experiments`]: canned experiments with assertions and CSV output.

pub mod analysis;
pub mod error;
pub mod experiments;
pub mod lyapunov;
pub mod montecarlo;
pub mod numerics;
pub mod paths;
pub mod problem;
pub mod schemes;

pub use error::{Error, Result};

pub use lyapunov::{LyapunovPair, ModelCard};
pub use paths::{MasterPath, PathSampler};
pub use problem::{Domain, HsMatrix, Partition, SdeProblem};

pub use schemes::{SchemeKind, SchemePath, SchemeSpec, StoppingFamily};
