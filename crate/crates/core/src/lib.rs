//! Software systolic array simulator.
//!
//! Kernels run on a simulated warp: lanes hold a small register cache, partial
//! sums travel between neighbouring lanes through `shuffle_up`, and filter
//! weights arrive by shared-memory broadcast. Every instruction is counted so
//! the analytical latency model in [`perf`] can be checked against what the
//! simulator executed, and every kernel has a brute-force twin in [`oracle`].

pub mod blocking;
pub mod error;
pub mod grid;
pub mod ir;
pub mod kernels;
pub mod oracle;
pub mod perf;
pub mod scalar;
pub mod stencils;
pub mod warp;

pub use error::{Result, SsamError};
pub use grid::{Boundary, Grid2D, Grid3D};
pub use ir::SsamPlan;
pub use kernels::{FilterSpec, KernelConfig};
pub use scalar::{Scalar, ScalarMode};
pub use stencils::StencilSpec;
pub use warp::{Counters, WarpState, WARP_SIZE};
