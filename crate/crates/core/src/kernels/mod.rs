//! Systolic mappings of the evaluated workloads.

mod conv;
mod stencil;
mod sweep;

use serde::{Deserialize, Serialize};

pub use conv::{conv1d, conv2d, scan, MAX_FILTER_EXTENT};
pub use stencil::{stencil2d, stencil3d};

use crate::blocking::{BlockPlan, Halo};
use crate::error::{invalid, Result, SsamError};
use crate::grid::Boundary;
use crate::scalar::{Scalar, ScalarMode};
use crate::warp::{check_lane_count, Counters, WARP_SIZE};

/// Dense `m x n` filter: `m` taps across lanes, `n` taps down a lane's
/// register cache. `weights[i * n + j]` is `w(a + i, c + j)` where the
/// anchors `a = -floor((m-1)/2)` and `c = -floor((n-1)/2)` centre the
/// filter, and the output is `sum f(x - s, y - t) * w(s, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterSpec<T> {
    m: usize,
    n: usize,
    weights: Vec<T>,
}

impl<T: Scalar> FilterSpec<T> {
    pub fn new(m: usize, n: usize, weights: Vec<T>) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(invalid(format!("filter extents {m}x{n} must be positive")));
        }
        if weights.len() != m * n {
            return Err(invalid(format!(
                "{} weights for a {m}x{n} filter",
                weights.len()
            )));
        }
        Ok(FilterSpec { m, n, weights })
    }

    pub fn ones(m: usize, n: usize) -> Result<Self> {
        Self::new(m, n, vec![T::one(); m * n])
    }

    /// A 1x1 filter holding `1`.
    pub fn identity() -> Self {
        Self::ones(1, 1).expect("1x1 is valid")
    }

    pub fn random<R: rand::Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> Result<Self> {
        Self::new(m, n, (0..m * n).map(|_| T::sample(rng)).collect())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Weight at horizontal index `i` (offset `a + i`) and vertical index `j`.
    pub fn weight(&self, i: usize, j: usize) -> T {
        self.weights[i * self.n + j]
    }

    /// Horizontal anchor `a`: the offset of weight column 0.
    pub fn anchor_x(&self) -> isize {
        -(((self.m - 1) / 2) as isize)
    }

    pub fn anchor_y(&self) -> isize {
        -(((self.n - 1) / 2) as isize)
    }

    /// Input cells needed on each side of an output cell.
    pub fn halo(&self) -> Halo {
        Halo {
            left: (self.m - 1).div_ceil(2),
            right: (self.m - 1) / 2,
            top: (self.n - 1).div_ceil(2),
            bottom: (self.n - 1) / 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelConfig {
    /// Outputs per thread (sliding-window steps).
    pub p: usize,
    /// Threads per block; a multiple of `lane_count`.
    pub b: usize,
    pub boundary: Boundary,
    /// Run-level scalar mode; kernels are generic over the element type and
    /// callers dispatch on this field.
    pub mode: ScalarMode,
    /// Registers available to one lane's cache.
    pub register_cap: usize,
    pub lane_count: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            p: 4,
            b: 128,
            boundary: Boundary::Zero,
            mode: ScalarMode::F64,
            register_cap: 255,
            lane_count: WARP_SIZE,
        }
    }
}

impl KernelConfig {
    /// Defaults for 3D stencils: two outputs per thread and eight warps per
    /// block, so a block spans enough z slices for halos up to order 3.
    pub fn stencil3d_default() -> Self {
        KernelConfig {
            p: 2,
            b: 8 * WARP_SIZE,
            ..KernelConfig::default()
        }
    }

    pub fn with_mode(mut self, mode: ScalarMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn warp_count(&self) -> usize {
        self.b / self.lane_count
    }

    /// Register-cache width `C = n + p - 1` for a filter `n` taps tall.
    pub fn cache_width(&self, n: usize) -> usize {
        n + self.p - 1
    }

    pub(crate) fn check(&self, n: usize) -> Result<usize> {
        check_lane_count(self.lane_count)?;
        if self.p == 0 {
            return Err(invalid("outputs per thread must be at least 1"));
        }
        if self.b == 0 || !self.b.is_multiple_of(self.lane_count) {
            return Err(invalid(format!(
                "block size {} is not a positive multiple of {}",
                self.b, self.lane_count
            )));
        }
        let c = self.cache_width(n);
        if c > self.register_cap {
            return Err(SsamError::Resource(format!(
                "register cache of {c} per lane exceeds the cap of {}",
                self.register_cap
            )));
        }
        Ok(c)
    }
}

/// Output of a simulated kernel launch.
#[derive(Debug, Clone)]
pub struct KernelRun<G> {
    pub output: G,
    /// Sum over all warps and iterations.
    pub counters: Counters,
    /// One entry per active warp of the last sweep, in block order.
    pub warp_counters: Vec<Counters>,
    /// Sliding-window steps each warp executed per sweep.
    pub windows_per_warp: usize,
    pub block_plan: Option<BlockPlan>,
}
