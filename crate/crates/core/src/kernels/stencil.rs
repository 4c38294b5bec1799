use rayon::prelude::*;

use crate::blocking::{BlockPlan, Halo, OwnershipMap};
use crate::error::{invalid, Result};
use crate::grid::{Grid2D, Grid3D};
use crate::ir::{run_validated, CoeffPlacement, SsamPlan};
use crate::kernels::sweep::{load_tile, sweep2d, window_plan, Pattern};
use crate::kernels::{KernelConfig, KernelRun};
use crate::scalar::Scalar;
use crate::stencils::StencilSpec;
use crate::warp::{Counters, WarpState};

/// Column groups of the `(2k+1)^2` in-plane bounding box at depth `dz`:
/// stage column `j` holds the taps with `dx = j - k`, register `t` the
/// taps with `dy = t - k`. Absent taps stay `None` and are masked off.
fn plane_pattern<T: Scalar>(stencil: &StencilSpec<T>, dz: i32) -> Pattern<T> {
    let k = stencil.order() as i32;
    let side = 2 * k + 1;
    let columns = (0..side)
        .map(|j| {
            (0..side)
                .map(|t| stencil.coeff_at([j - k, t - k, dz]))
                .collect()
        })
        .collect();
    Pattern {
        columns,
        halo: Halo::symmetric(k as usize),
        placement: CoeffPlacement::Immediate,
    }
}

fn check_common<T: Scalar>(
    stencil: &StencilSpec<T>,
    dims: u8,
    extents: &[usize],
    cfg: &KernelConfig,
    iters: usize,
) -> Result<usize> {
    if stencil.dims() != dims {
        return Err(invalid(format!(
            "{}D stencil passed to a {dims}D kernel",
            stencil.dims()
        )));
    }
    if iters == 0 {
        return Err(invalid("at least one iteration is required"));
    }
    let k = stencil.order();
    let side = 2 * k + 1;
    if let Some(e) = extents.iter().find(|&&e| e < side) {
        return Err(invalid(format!(
            "domain extent {e} is smaller than the stencil box {side}"
        )));
    }
    if side > cfg.lane_count {
        return Err(invalid(format!(
            "stencil box {side} is wider than a warp of {} lanes",
            cfg.lane_count
        )));
    }
    Ok(k)
}

/// Jacobi iteration of a 2D stencil. Interior cells (at least `k` from
/// every edge) get the weighted neighbour sum; the boundary ring is copied.
pub fn stencil2d<T: Scalar>(
    grid: &Grid2D<T>,
    stencil: &StencilSpec<T>,
    cfg: &KernelConfig,
    iters: usize,
) -> Result<KernelRun<Grid2D<T>>> {
    let (w, h) = (grid.width(), grid.height());
    let k = check_common(stencil, 2, &[w, h], cfg, iters)?;
    let pattern = plane_pattern(stencil, 0);
    let interior = move |x: usize, y: usize| x >= k && y >= k && x + k < w && y + k < h;

    let mut current = grid.clone();
    let mut counters = Counters::default();
    let mut last = None;
    for _ in 0..iters {
        let mut sweep = sweep2d(&current, &pattern, cfg, &interior)?;
        for y in 0..h {
            for x in 0..w {
                if !interior(x, y) {
                    sweep.ownership.claim(x, y)?;
                    sweep.output.set(x, y, current.get(x, y));
                }
            }
        }
        sweep.ownership.check_complete()?;
        counters += sweep.warp_counters.iter().copied().sum();
        current = sweep.output;
        last = Some((sweep.warp_counters, sweep.plan));
    }
    let (warp_counters, plan) = last.expect("iters >= 1");
    Ok(KernelRun {
        output: current,
        counters,
        warp_counters,
        windows_per_warp: cfg.p,
        block_plan: Some(plan),
    })
}

struct Slab<T> {
    counters: Vec<Counters>,
    cells: Vec<(usize, usize, usize, T)>,
}

/// Jacobi iteration of a 3D stencil.
///
/// A block covers one `lane_count`-wide x tile, `p` rows and a slab of
/// z slices; each of its warps owns one X-Y slice, including `k` halo
/// slices on either side of the slab. Every warp computes the in-plane
/// partial sums of each `dz` tap group with systolic stages and adds them
/// into a shared buffer at slice `z - dz`. After a barrier, the warps of
/// the slab's own slices read their finished sums back out.
pub fn stencil3d<T: Scalar>(
    grid: &Grid3D<T>,
    stencil: &StencilSpec<T>,
    cfg: &KernelConfig,
    iters: usize,
) -> Result<KernelRun<Grid3D<T>>> {
    let [nx, ny, nz] = grid.dims();
    let k = check_common(stencil, 3, &[nx, ny, nz], cfg, iters)?;
    let side = 2 * k + 1;
    let lanes = cfg.lane_count;
    let c = cfg.check(side)?;
    let warp_count = cfg.warp_count();
    if warp_count < side {
        return Err(invalid(format!(
            "a block of {warp_count} warps cannot hold the {side} slices of an order-{k} stencil"
        )));
    }
    let depth = warp_count - 2 * k;

    let groups: Vec<(i32, SsamPlan<T>)> = (-(k as i32)..=k as i32)
        .filter(|&dz| stencil.taps().iter().any(|t| t.offset[2] == dz))
        .map(|dz| Ok((dz, window_plan(&plane_pattern(stencil, dz), cfg)?)))
        .collect::<Result<_>>()?;

    let xy_cfg = KernelConfig { b: lanes, ..*cfg };
    let xy = BlockPlan::new(nx, ny, side, side, Halo::symmetric(k), &xy_cfg, lanes)?;
    let grid_dim_z = nz.div_ceil(depth);
    let blocks: Vec<(usize, usize, usize)> = (0..grid_dim_z)
        .flat_map(|bz| xy.blocks().map(move |(bx, by)| (bx, by, bz)))
        .collect();
    let interior = |x: usize, y: usize, z: usize| {
        x >= k && y >= k && z >= k && x + k < nx && y + k < ny && z + k < nz
    };

    let mut current = grid.clone();
    let mut counters = Counters::default();
    let mut last_warp_counters = Vec::new();
    for _ in 0..iters {
        let input = &current;
        let slabs: Vec<Result<Slab<T>>> = blocks
            .par_iter()
            .map(|&(bx, by, bz)| {
                let tile = xy.block_tiles(bx, by)[0];
                let z0 = (bz * depth) as isize;
                let mut warps = Vec::with_capacity(warp_count);
                let mut shared = vec![T::zero(); depth * cfg.p * lanes];

                for w in 0..warp_count {
                    let zs = z0 + w as isize - k as isize;
                    let mut warp = WarpState::new(lanes, c)?;
                    load_tile(
                        &mut warp,
                        |x, y| input.read(x, y, zs, cfg.boundary),
                        tile.cache_x0,
                        tile.cache_y0,
                    );
                    for step in 0..cfg.p {
                        for (dz, plan) in &groups {
                            run_validated(plan, &mut warp, step)?;
                            let local = zs - *dz as isize - z0;
                            if (0..depth as isize).contains(&local) {
                                let base = (local as usize * cfg.p + step) * lanes;
                                let slot = &mut shared[base..base + lanes];
                                for (s, &v) in slot.iter_mut().zip(warp.accumulators()) {
                                    *s = s.add(v);
                                }
                            }
                        }
                    }
                    warps.push(warp);
                }

                // barrier: every partial sum of the slab is in `shared`
                let mut cells = Vec::new();
                for (local, warp) in warps[k..k + depth].iter_mut().enumerate() {
                    let z = bz * depth + local;
                    if z >= nz {
                        continue;
                    }
                    let before = cells.len();
                    for step in 0..tile.valid_rows {
                        let base = (local * cfg.p + step) * lanes + side - 1;
                        for col in 0..tile.valid_cols {
                            let (x, y) = (tile.out_x0 + col, tile.out_y0 + step);
                            if interior(x, y, z) {
                                cells.push((x, y, z, shared[base + col]));
                            }
                        }
                    }
                    warp.record_stores(cells.len() - before);
                }
                Ok(Slab {
                    counters: warps.iter().map(WarpState::counters).collect(),
                    cells,
                })
            })
            .collect();

        let mut next = current.clone();
        let mut ownership = OwnershipMap::new(nx, ny * nz);
        let mut warp_counters = Vec::new();
        for slab in slabs {
            let slab = slab?;
            for (x, y, z, v) in slab.cells {
                ownership.claim(x, y + z * ny)?;
                next.set(x, y, z, v);
            }
            warp_counters.extend(slab.counters);
        }
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    if !interior(x, y, z) {
                        ownership.claim(x, y + z * ny)?;
                    }
                }
            }
        }
        ownership.check_complete()?;
        counters += warp_counters.iter().copied().sum();
        last_warp_counters = warp_counters;
        current = next;
    }
    Ok(KernelRun {
        output: current,
        counters,
        warp_counters: last_warp_counters,
        windows_per_warp: cfg.p,
        block_plan: Some(xy),
    })
}
