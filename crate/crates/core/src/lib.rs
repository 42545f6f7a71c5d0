//! Kuramoto-type consensus flows of orthonormal frames.
//!
//! Each agent carries a point `S_i` of the Stiefel manifold `St(p, n)`
//! (`n x p` matrices with `S^T S = I_p`). The crate provides the first- and
//! second-order right-hand sides, a fixed-step RK4 integrator with drift
//! repair, the functionals and analytic bounds the convergence results are
//! phrased in, and a scenario runner behind the `stiefel-sync` binary.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod integrator;
pub mod network;
pub mod scenario;
pub mod stiefel;

pub use diagnostics::{DiagnosticsRecord, LockThresholds};
pub use dynamics::{Ensemble, FlowOrder, ModelParams};
pub use error::{Error, Result};
pub use integrator::{integrate, IntegratorConfig, Trajectory};
pub use network::{Topology, TopologyStats};
pub use stiefel::{FrequencyMatrix, Matrix, StiefelPoint, TangentVector};
