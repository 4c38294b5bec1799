//! Shared 2D sweep: runs a window plan over every warp tile of a block plan.

use rayon::prelude::*;

use crate::blocking::{BlockPlan, Halo, OwnershipMap, WarpTile};
use crate::error::{Result, SsamError};
use crate::grid::{Boundary, Grid2D};
use crate::ir::{build_window_plan, run_validated, CoeffPlacement, SsamPlan};
use crate::kernels::KernelConfig;
use crate::scalar::Scalar;
use crate::warp::{Counters, WarpState};

/// A tap pattern in lane-stage order: `columns[j][t]` multiplies register
/// `t` in column stage `j`. Lane `l` of a tile cached at `(cx, cy)` ends a
/// window step `i` holding the output for `(cx + l - (m-1) + halo.left,
/// cy + i + halo.top)`.
pub(crate) struct Pattern<T> {
    pub columns: Vec<Vec<Option<T>>>,
    pub halo: Halo,
    pub placement: CoeffPlacement,
}

impl<T: Scalar> Pattern<T> {
    pub fn m(&self) -> usize {
        self.columns.len()
    }

    pub fn n(&self) -> usize {
        self.columns[0].len()
    }
}

pub(crate) struct SweepResult<T> {
    pub output: Grid2D<T>,
    pub ownership: OwnershipMap,
    pub warp_counters: Vec<Counters>,
    pub plan: BlockPlan,
}

struct TileOut<T> {
    counters: Counters,
    cells: Vec<(usize, usize, T)>,
}

/// Loads a tile's `lane_count x C` extent, one coalesced row per register.
pub(crate) fn load_tile<T: Scalar>(
    warp: &mut WarpState<T>,
    read: impl Fn(isize, isize) -> T,
    cache_x0: isize,
    cache_y0: isize,
) {
    let lanes = warp.lane_count();
    let mut row = vec![T::zero(); lanes];
    for r in 0..warp.cache_width() {
        for (l, v) in row.iter_mut().enumerate() {
            *v = read(cache_x0 + l as isize, cache_y0 + r as isize);
        }
        warp.load_row(r, &row);
    }
}

pub(crate) fn window_plan<T: Scalar>(
    pattern: &Pattern<T>,
    cfg: &KernelConfig,
) -> Result<SsamPlan<T>> {
    let c = cfg.check(pattern.n())?;
    let plan = build_window_plan(&pattern.columns, pattern.placement, cfg.lane_count, c)?;
    let diags = plan.validate();
    if !diags.is_empty() {
        return Err(SsamError::InvalidPlan(diags));
    }
    Ok(plan)
}

fn run_tile<T: Scalar>(
    input: &Grid2D<T>,
    boundary: Boundary,
    plan: &SsamPlan<T>,
    tile: &WarpTile,
    p: usize,
    keep: &(dyn Fn(usize, usize) -> bool + Sync),
) -> Result<TileOut<T>> {
    let mut warp = WarpState::new(plan.lane_count, plan.cache_width)?;
    load_tile(
        &mut warp,
        |x, y| input.read(x, y, boundary),
        tile.cache_x0,
        tile.cache_y0,
    );
    let first = plan.output.first_lane;
    let mut cells = Vec::with_capacity(tile.valid_cols * tile.valid_rows);
    for step in 0..p {
        run_validated(plan, &mut warp, step)?;
        if step >= tile.valid_rows {
            continue;
        }
        let y = tile.out_y0 + step;
        let acc = warp.accumulators();
        for col in 0..tile.valid_cols {
            let x = tile.out_x0 + col;
            if keep(x, y) {
                cells.push((x, y, acc[first + col]));
            }
        }
    }
    warp.record_stores(cells.len());
    Ok(TileOut {
        counters: warp.counters(),
        cells,
    })
}

/// Runs `pattern` over the whole domain of `input`, storing only the cells
/// accepted by `keep`. Each stored cell is claimed in the ownership map.
pub(crate) fn sweep2d<T: Scalar>(
    input: &Grid2D<T>,
    pattern: &Pattern<T>,
    cfg: &KernelConfig,
    keep: &(dyn Fn(usize, usize) -> bool + Sync),
) -> Result<SweepResult<T>> {
    let ssam = window_plan(pattern, cfg)?;
    let plan = BlockPlan::new(
        input.width(),
        input.height(),
        pattern.m(),
        pattern.n(),
        pattern.halo,
        cfg,
        cfg.lane_count,
    )?;
    let blocks: Vec<(usize, usize)> = plan.blocks().collect();
    let per_block: Vec<Result<Vec<TileOut<T>>>> = blocks
        .par_iter()
        .map(|&(bx, by)| {
            plan.block_tiles(bx, by)
                .iter()
                .map(|tile| run_tile(input, cfg.boundary, &ssam, tile, cfg.p, keep))
                .collect()
        })
        .collect();

    let mut output = Grid2D::filled(input.width(), input.height(), T::zero())?;
    let mut ownership = OwnershipMap::new(input.width(), input.height());
    let mut warp_counters = Vec::new();
    for block in per_block {
        for tile in block? {
            for &(x, y, v) in &tile.cells {
                ownership.claim(x, y)?;
                output.set(x, y, v);
            }
            warp_counters.push(tile.counters);
        }
    }
    Ok(SweepResult {
        output,
        ownership,
        warp_counters,
        plan,
    })
}
