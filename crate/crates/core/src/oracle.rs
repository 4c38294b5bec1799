//! Brute-force references. Each one is the textbook definition written out
//! directly, accumulating in the wide type, and shares nothing with the
//! lane machine beyond the container types.

use crate::grid::{Boundary, Grid2D, Grid3D};
use crate::kernels::FilterSpec;
use crate::scalar::{Scalar, ScalarMode};
use crate::stencils::StencilSpec;

fn fetch(len: usize, i: isize, boundary: Boundary) -> Option<usize> {
    if (0..len as isize).contains(&i) {
        Some(i as usize)
    } else if boundary == Boundary::Replicate {
        Some(i.clamp(0, len as isize - 1) as usize)
    } else {
        None
    }
}

/// `out(x, y) = sum_{s,t} f(x - s, y - t) * w(s, t)` over the filter's
/// centred support, with out-of-range reads resolved by `boundary`.
pub fn conv2d_naive<T: Scalar>(
    grid: &Grid2D<T>,
    filter: &FilterSpec<T>,
    boundary: Boundary,
) -> Grid2D<T> {
    let (w, h) = (grid.width(), grid.height());
    let mut out = Grid2D::filled(w, h, T::zero()).expect("same shape as input");
    for y in 0..h {
        for x in 0..w {
            let mut sum = T::Wide::zero();
            for i in 0..filter.m() {
                for j in 0..filter.n() {
                    let s = filter.anchor_x() + i as isize;
                    let t = filter.anchor_y() + j as isize;
                    let sx = fetch(w, x as isize - s, boundary);
                    let sy = fetch(h, y as isize - t, boundary);
                    if let (Some(sx), Some(sy)) = (sx, sy) {
                        sum = sum.add(grid.get(sx, sy).widen().mul(filter.weight(i, j).widen()));
                    }
                }
            }
            out.set(x, y, T::narrow(sum));
        }
    }
    out
}

/// `out[x] = sum_i filter[i] * signal[x - a - i]` with `a = -floor((M-1)/2)`.
pub fn conv1d_naive<T: Scalar>(signal: &[T], filter: &[T], boundary: Boundary) -> Vec<T> {
    let a = -(((filter.len() - 1) / 2) as isize);
    (0..signal.len())
        .map(|x| {
            let mut sum = T::Wide::zero();
            for (i, &f) in filter.iter().enumerate() {
                if let Some(src) = fetch(signal.len(), x as isize - a - i as isize, boundary) {
                    sum = sum.add(signal[src].widen().mul(f.widen()));
                }
            }
            T::narrow(sum)
        })
        .collect()
}

/// Inclusive running total.
pub fn scan_naive<T: Scalar>(values: &[T]) -> Vec<T> {
    let mut total = T::Wide::zero();
    values
        .iter()
        .map(|v| {
            total = total.add(v.widen());
            T::narrow(total)
        })
        .collect()
}

/// `iters` Jacobi sweeps of a 2D stencil; cells within `k` of an edge keep
/// their value.
pub fn stencil2d_naive<T: Scalar>(
    grid: &Grid2D<T>,
    stencil: &StencilSpec<T>,
    iters: usize,
) -> Grid2D<T> {
    let (w, h) = (grid.width(), grid.height());
    let k = stencil.order();
    let mut cur: Vec<T::Wide> = grid.data().iter().map(|v| v.widen()).collect();
    for _ in 0..iters {
        let mut next = cur.clone();
        for y in k..h.saturating_sub(k) {
            for x in k..w.saturating_sub(k) {
                let mut sum = T::Wide::zero();
                for tap in stencil.taps() {
                    let sx = (x as isize + tap.offset[0] as isize) as usize;
                    let sy = (y as isize + tap.offset[1] as isize) as usize;
                    sum = sum.add(cur[sy * w + sx].mul(tap.coeff.widen()));
                }
                next[y * w + x] = sum;
            }
        }
        cur = next;
    }
    Grid2D::new(w, h, cur.into_iter().map(T::narrow).collect()).expect("same shape as input")
}

/// `iters` Jacobi sweeps of a 3D stencil over the interior.
pub fn stencil3d_naive<T: Scalar>(
    grid: &Grid3D<T>,
    stencil: &StencilSpec<T>,
    iters: usize,
) -> Grid3D<T> {
    let [nx, ny, nz] = grid.dims();
    let k = stencil.order();
    let idx = |x: usize, y: usize, z: usize| (z * ny + y) * nx + x;
    let mut cur: Vec<T::Wide> = grid.data().iter().map(|v| v.widen()).collect();
    for _ in 0..iters {
        let mut next = cur.clone();
        for z in k..nz.saturating_sub(k) {
            for y in k..ny.saturating_sub(k) {
                for x in k..nx.saturating_sub(k) {
                    let mut sum = T::Wide::zero();
                    for tap in stencil.taps() {
                        let [dx, dy, dz] = tap.offset.map(|d| d as isize);
                        let src = idx(
                            (x as isize + dx) as usize,
                            (y as isize + dy) as usize,
                            (z as isize + dz) as usize,
                        );
                        sum = sum.add(cur[src].mul(tap.coeff.widen()));
                    }
                    next[idx(x, y, z)] = sum;
                }
            }
        }
        cur = next;
    }
    Grid3D::new(nx, ny, nz, cur.into_iter().map(T::narrow).collect()).expect("same shape as input")
}

/// Result of comparing a kernel output with its oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub max_abs: f64,
    /// `max |kernel - oracle| / max |oracle|`, or `max_abs` when the oracle
    /// is identically zero.
    pub max_rel: f64,
    /// Number of elements that differ at all.
    pub mismatches: usize,
    pub pass: bool,
}

/// Checks `kernel` against `oracle` under the mode's tolerance: exact
/// equality in integer mode, normwise relative error otherwise.
pub fn compare<T: Scalar>(kernel: &[T], oracle: &[T]) -> Comparison {
    assert_eq!(
        kernel.len(),
        oracle.len(),
        "compared outputs differ in length"
    );
    let mut max_abs = 0.0f64;
    let mut scale = 0.0f64;
    let mut mismatches = 0;
    for (&a, &b) in kernel.iter().zip(oracle) {
        if a != b {
            mismatches += 1;
        }
        let diff = (a.to_f64() - b.to_f64()).abs();
        max_abs = if diff.is_nan() {
            f64::INFINITY
        } else {
            max_abs.max(diff)
        };
        scale = scale.max(b.to_f64().abs());
    }
    let max_rel = if scale > 0.0 {
        max_abs / scale
    } else {
        max_abs
    };
    let pass = match T::MODE.tolerance() {
        None => mismatches == 0,
        Some(tol) => max_rel <= tol,
    };
    debug_assert!(T::MODE != ScalarMode::Int || pass == (mismatches == 0));
    Comparison {
        max_abs,
        max_rel,
        mismatches,
        pass,
    }
}
