use crate::error::{invalid, Result};
use crate::grid::{Boundary, Grid2D};
use crate::ir::{build_conv1d_plan, build_scan_plan, run_validated, CoeffPlacement};
use crate::kernels::sweep::{sweep2d, Pattern};
use crate::kernels::{FilterSpec, KernelConfig, KernelRun};
use crate::scalar::Scalar;
use crate::warp::{check_lane_count, Counters, WarpState};

/// Largest filter extent accepted by [`conv2d`] in either direction.
pub const MAX_FILTER_EXTENT: usize = 20;

/// 2D convolution with the filter centred on each output cell.
///
/// Each warp caches `lane_count x (n + p - 1)` cells. Per sliding-window
/// step it runs `m` column stages of `n` broadcast MADs each, shuffling the
/// partial sum one lane up between columns, and stores lanes `m-1..`.
pub fn conv2d<T: Scalar>(
    grid: &Grid2D<T>,
    filter: &FilterSpec<T>,
    cfg: &KernelConfig,
) -> Result<KernelRun<Grid2D<T>>> {
    let (m, n) = (filter.m(), filter.n());
    if m > MAX_FILTER_EXTENT || n > MAX_FILTER_EXTENT {
        return Err(invalid(format!(
            "filter {m}x{n} exceeds the supported {MAX_FILTER_EXTENT}x{MAX_FILTER_EXTENT}"
        )));
    }
    if m > cfg.lane_count {
        return Err(invalid(format!(
            "filter width {m} exceeds {} lanes",
            cfg.lane_count
        )));
    }
    let c = cfg.check(n)?;
    if grid.width() < cfg.lane_count || grid.height() < c {
        return Err(invalid(format!(
            "{}x{} grid is smaller than one {}x{c} warp tile",
            grid.width(),
            grid.height(),
            cfg.lane_count
        )));
    }

    // Column stage j applies weight column m-1-j; register t meets weight
    // row n-1-t, which turns the cached correlation into a convolution.
    let columns = (0..m)
        .map(|j| {
            (0..n)
                .map(|t| Some(filter.weight(m - 1 - j, n - 1 - t)))
                .collect()
        })
        .collect();
    let pattern = Pattern {
        columns,
        halo: filter.halo(),
        placement: CoeffPlacement::SharedMemory,
    };
    let sweep = sweep2d(grid, &pattern, cfg, &|_, _| true)?;
    sweep.ownership.check_complete()?;
    Ok(KernelRun {
        output: sweep.output,
        counters: sweep.warp_counters.iter().copied().sum(),
        warp_counters: sweep.warp_counters,
        windows_per_warp: cfg.p,
        block_plan: Some(sweep.plan),
    })
}

fn read_1d<T: Scalar>(signal: &[T], i: isize, boundary: Boundary) -> T {
    if i >= 0 && (i as usize) < signal.len() {
        return signal[i as usize];
    }
    match boundary {
        Boundary::Zero => T::zero(),
        Boundary::Replicate => signal[i.clamp(0, signal.len() as isize - 1) as usize],
    }
}

/// 1D convolution, `out[x] = sum_i filter[i] * signal[x - a - i]` with the
/// same centring as [`conv2d`]. The signal is cut into overlapping warp
/// windows that each yield `lane_count - M + 1` outputs.
pub fn conv1d<T: Scalar>(
    signal: &[T],
    filter: &[T],
    cfg: &KernelConfig,
) -> Result<KernelRun<Vec<T>>> {
    let lanes = cfg.lane_count;
    let plan = build_conv1d_plan(filter, lanes)?;
    if signal.len() < lanes {
        return Err(invalid(format!(
            "signal of {} samples is shorter than one warp ({lanes})",
            signal.len()
        )));
    }
    let m = filter.len();
    let left = (m - 1).div_ceil(2) as isize;
    let valid = lanes - m + 1;
    let mut out = vec![T::zero(); signal.len()];
    let mut warp_counters = Vec::new();
    let mut row = vec![T::zero(); lanes];
    for start in (0..signal.len()).step_by(valid) {
        let mut warp = WarpState::new(lanes, 1)?;
        for (l, v) in row.iter_mut().enumerate() {
            *v = read_1d(signal, start as isize - left + l as isize, cfg.boundary);
        }
        warp.load_row(0, &row);
        run_validated(&plan, &mut warp, 0)?;
        let count = valid.min(signal.len() - start);
        out[start..start + count].copy_from_slice(&warp.accumulators()[m - 1..m - 1 + count]);
        warp.record_stores(count);
        warp_counters.push(warp.counters());
    }
    Ok(KernelRun {
        output: out,
        counters: warp_counters.iter().copied().sum(),
        warp_counters,
        windows_per_warp: 1,
        block_plan: None,
    })
}

/// Inclusive prefix sum. Each warp-sized tile runs the Kogge–Stone plan;
/// the running carry from earlier tiles is then added lane-wise.
pub fn scan<T: Scalar>(values: &[T], lane_count: usize) -> Result<KernelRun<Vec<T>>> {
    check_lane_count(lane_count)?;
    if values.is_empty() || !values.len().is_multiple_of(lane_count) {
        return Err(invalid(format!(
            "scan length {} is not a positive multiple of {lane_count}",
            values.len()
        )));
    }
    let plan = build_scan_plan::<T>(lane_count)?;
    let mut out = Vec::with_capacity(values.len());
    let mut carry = T::zero();
    let mut warp_counters = Vec::new();
    for tile in values.chunks(lane_count) {
        let mut warp = WarpState::new(lane_count, 1)?;
        warp.load_row(0, tile);
        run_validated(&plan, &mut warp, 0)?;
        let carried = vec![carry; lane_count];
        let ones = vec![T::one(); lane_count];
        let acc = warp.accumulators().to_vec();
        let totals = warp.lane_mad(&acc, &carried, &ones)?;
        carry = totals[lane_count - 1];
        out.extend_from_slice(&totals);
        warp.record_stores(lane_count);
        warp_counters.push(warp.counters());
    }
    let counters: Counters = warp_counters.iter().copied().sum();
    Ok(KernelRun {
        output: out,
        counters,
        warp_counters,
        windows_per_warp: 1,
        block_plan: None,
    })
}
