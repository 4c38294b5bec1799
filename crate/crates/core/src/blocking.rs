//! Overlapped blocking: how a grid is cut into warp tiles whose cached
//! extents overlap by the filter halo, so each warp computes branch-free.
//!
//! A warp caches `lane_count x C` cells and produces a valid output region
//! of `(lane_count - m + 1) x p` cells. Blocks are one-dimensional groups of
//! `b / lane_count` warps laid side by side along x.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SsamError};
use crate::kernels::{FilterSpec, KernelConfig};
use crate::scalar::Scalar;
use crate::warp::check_lane_count;

/// Halo widths on each side of a valid output region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Halo {
    pub left: usize,
    pub right: usize,
    pub top: usize,
    pub bottom: usize,
}

impl Halo {
    /// Centred halo of a stencil of order `k` (a `(2k+1)^2` bounding box).
    pub fn symmetric(k: usize) -> Halo {
        Halo {
            left: k,
            right: k,
            top: k,
            bottom: k,
        }
    }
}

/// One warp's share of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarpTile {
    pub block_x: usize,
    pub block_y: usize,
    pub warp: usize,
    /// Grid coordinate held by lane 0, register 0. May be negative or past
    /// the domain; such cells come from the boundary policy.
    pub cache_x0: isize,
    pub cache_y0: isize,
    /// First valid output cell; produced by lane `m - 1` at window step 0.
    pub out_x0: usize,
    pub out_y0: usize,
    /// Valid region clipped to the domain.
    pub valid_cols: usize,
    pub valid_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPlan {
    pub width: usize,
    pub height: usize,
    pub lane_count: usize,
    pub m: usize,
    pub n: usize,
    pub p: usize,
    pub cache_width: usize,
    pub warp_count: usize,
    pub halo: Halo,
    pub grid_dim_x: usize,
    pub grid_dim_y: usize,
}

/// Decomposes a `width x height` output domain for an `m x n` filter.
pub fn plan_blocks<T: Scalar>(
    width: usize,
    height: usize,
    filter: &FilterSpec<T>,
    cfg: &KernelConfig,
    lane_count: usize,
) -> Result<BlockPlan> {
    BlockPlan::new(
        width,
        height,
        filter.m(),
        filter.n(),
        filter.halo(),
        cfg,
        lane_count,
    )
}

impl BlockPlan {
    pub fn new(
        width: usize,
        height: usize,
        m: usize,
        n: usize,
        halo: Halo,
        cfg: &KernelConfig,
        lane_count: usize,
    ) -> Result<Self> {
        check_lane_count(lane_count)?;
        if width == 0 || height == 0 {
            return Err(invalid("domain must be non-empty"));
        }
        if m == 0 || n == 0 {
            return Err(invalid("filter extents must be positive"));
        }
        if m > lane_count {
            return Err(invalid(format!(
                "filter width {m} exceeds warp of {lane_count} lanes"
            )));
        }
        if halo.left + halo.right != m - 1 || halo.top + halo.bottom != n - 1 {
            return Err(invalid(format!(
                "halo {halo:?} does not match a {m}x{n} filter"
            )));
        }
        if cfg.p == 0 {
            return Err(invalid("outputs per thread must be at least 1"));
        }
        if cfg.b == 0 || !cfg.b.is_multiple_of(lane_count) {
            return Err(invalid(format!(
                "block size {} is not a positive multiple of {lane_count}",
                cfg.b
            )));
        }
        let warp_count = cfg.b / lane_count;
        let valid_width = lane_count - m + 1;
        Ok(BlockPlan {
            width,
            height,
            lane_count,
            m,
            n,
            p: cfg.p,
            cache_width: n + cfg.p - 1,
            warp_count,
            halo,
            grid_dim_x: width.div_ceil(warp_count * valid_width),
            grid_dim_y: height.div_ceil(cfg.p),
        })
    }

    /// Valid outputs per warp along x: `lane_count - m + 1`.
    pub fn valid_width(&self) -> usize {
        self.lane_count - self.m + 1
    }

    pub fn block_count(&self) -> usize {
        self.grid_dim_x * self.grid_dim_y
    }

    /// Padded input domain `[x0, x1) x [y0, y1)` that every cached extent lies in.
    pub fn padded_domain(&self) -> (isize, isize, isize, isize) {
        let x0 = -(self.halo.left as isize);
        let y0 = -(self.halo.top as isize);
        let x1 =
            (self.grid_dim_x * self.warp_count * self.valid_width() + self.halo.right) as isize;
        let y1 = (self.grid_dim_y * self.p + self.halo.bottom) as isize;
        (x0, x1, y0, y1)
    }

    /// Warp tiles of one block; warps entirely past the domain edge are idle
    /// and omitted.
    pub fn block_tiles(&self, block_x: usize, block_y: usize) -> Vec<WarpTile> {
        let vw = self.valid_width();
        let out_y0 = block_y * self.p;
        let valid_rows = self.p.min(self.height.saturating_sub(out_y0));
        (0..self.warp_count)
            .filter_map(|warp| {
                let out_x0 = (block_x * self.warp_count + warp) * vw;
                if out_x0 >= self.width || valid_rows == 0 {
                    return None;
                }
                Some(WarpTile {
                    block_x,
                    block_y,
                    warp,
                    cache_x0: out_x0 as isize - self.halo.left as isize,
                    cache_y0: out_y0 as isize - self.halo.top as isize,
                    out_x0,
                    out_y0,
                    valid_cols: vw.min(self.width - out_x0),
                    valid_rows,
                })
            })
            .collect()
    }

    /// All blocks in row-major block order.
    pub fn blocks(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.grid_dim_y).flat_map(move |by| (0..self.grid_dim_x).map(move |bx| (bx, by)))
    }

    pub fn tiles(&self) -> impl Iterator<Item = WarpTile> + '_ {
        self.blocks()
            .flat_map(move |(bx, by)| self.block_tiles(bx, by))
    }

    /// Structured text dump: a header record, then one record per warp tile.
    pub fn to_text(&self) -> String {
        let mut out = serde_json::to_string(&PlanDump::Header(self.clone())).expect("serializes");
        out.push('\n');
        for tile in self.tiles() {
            out.push_str(&serde_json::to_string(&PlanDump::Tile(tile)).expect("serializes"));
            out.push('\n');
        }
        out
    }

    /// Rebuilds a plan from a dump. Tile records are optional, but when any
    /// are present they must match the re-derived tiles one for one.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut records = text.lines().filter(|l| !l.trim().is_empty()).map(|l| {
            serde_json::from_str::<PlanDump>(l).map_err(|e| SsamError::Format(e.to_string()))
        });
        let Some(PlanDump::Header(plan)) = records.next().transpose()? else {
            return Err(SsamError::Format(
                "block plan dump must start with a header".into(),
            ));
        };
        let cfg = KernelConfig {
            p: plan.p,
            b: plan.warp_count * plan.lane_count,
            ..KernelConfig::default()
        };
        let rebuilt = BlockPlan::new(
            plan.width,
            plan.height,
            plan.m,
            plan.n,
            plan.halo,
            &cfg,
            plan.lane_count,
        )?;
        if rebuilt != plan {
            return Err(SsamError::Format(
                "block plan header is inconsistent".into(),
            ));
        }
        let mut expected = plan.tiles();
        let mut any_tiles = false;
        for rec in records {
            any_tiles = true;
            match rec? {
                PlanDump::Tile(t) if Some(t) == expected.next() => {}
                _ => {
                    return Err(SsamError::Format(
                        "tile records do not match the header".into(),
                    ))
                }
            }
        }
        if any_tiles && expected.next().is_some() {
            return Err(SsamError::Format(
                "block plan dump is missing tile records".into(),
            ));
        }
        Ok(rebuilt)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum PlanDump {
    Header(BlockPlan),
    Tile(WarpTile),
}

/// Write-once map over output cells.
#[derive(Debug, Clone)]
pub struct OwnershipMap {
    width: usize,
    height: usize,
    owned: Vec<bool>,
}

impl OwnershipMap {
    pub fn new(width: usize, height: usize) -> Self {
        OwnershipMap {
            width,
            height,
            owned: vec![false; width * height],
        }
    }

    pub fn claim(&mut self, x: usize, y: usize) -> Result<()> {
        if x >= self.width || y >= self.height {
            return Err(SsamError::Ownership(format!(
                "cell ({x}, {y}) is outside the domain"
            )));
        }
        let slot = &mut self.owned[y * self.width + x];
        if *slot {
            return Err(SsamError::Ownership(format!(
                "cell ({x}, {y}) written twice"
            )));
        }
        *slot = true;
        Ok(())
    }

    pub fn claim_region(&mut self, x0: usize, y0: usize, cols: usize, rows: usize) -> Result<()> {
        for y in y0..y0 + rows {
            for x in x0..x0 + cols {
                self.claim(x, y)?;
            }
        }
        Ok(())
    }

    pub fn is_owned(&self, x: usize, y: usize) -> bool {
        self.owned[y * self.width + x]
    }

    pub fn unowned(&self) -> usize {
        self.owned.iter().filter(|&&o| !o).count()
    }

    pub fn check_complete(&self) -> Result<()> {
        match self.owned.iter().position(|&o| !o) {
            None => Ok(()),
            Some(i) => Err(SsamError::Ownership(format!(
                "{} cells never written, first at ({}, {})",
                self.unowned(),
                i % self.width,
                i / self.width
            ))),
        }
    }
}

/// Claims every tile's valid region; fails on a double write or a gap.
pub fn check_coverage(plan: &BlockPlan) -> Result<OwnershipMap> {
    let mut map = OwnershipMap::new(plan.width, plan.height);
    for t in plan.tiles() {
        map.claim_region(t.out_x0, t.out_y0, t.valid_cols, t.valid_rows)?;
    }
    map.check_complete()?;
    Ok(map)
}

/// Fraction of cached cells that are halo: `(S*C - (S-m)*(C-n)) / (S*C)`.
/// Requires `m <= lane_count` and `n <= cache_width`.
pub fn halo_ratio(lane_count: usize, cache_width: usize, m: usize, n: usize) -> Ratio<i64> {
    let (s, c, m, n) = (lane_count as i64, cache_width as i64, m as i64, n as i64);
    Ratio::new(s * c - (s - m) * (c - n), s * c)
}

/// Upper bound `(S*n + C*m) / (S*C)` on [`halo_ratio`].
pub fn halo_ratio_bound(lane_count: usize, cache_width: usize, m: usize, n: usize) -> Ratio<i64> {
    let (s, c, m, n) = (lane_count as i64, cache_width as i64, m as i64, n as i64);
    Ratio::new(s * n + c * m, s * c)
}

/// Redundant-load fraction of a plan: `(loads - unique) / loads`, where
/// `loads` counts every cached cell of every active warp and `unique`
/// counts distinct padded-domain cells touched.
pub fn measure_redundancy(plan: &BlockPlan) -> Ratio<u64> {
    let (x0, x1, y0, y1) = plan.padded_domain();
    let pw = (x1 - x0) as usize;
    let mut touched = vec![false; pw * (y1 - y0) as usize];
    let mut loads = 0u64;
    for t in plan.tiles() {
        for r in 0..plan.cache_width as isize {
            let y = (t.cache_y0 + r - y0) as usize;
            for l in 0..plan.lane_count as isize {
                let x = (t.cache_x0 + l - x0) as usize;
                touched[y * pw + x] = true;
                loads += 1;
            }
        }
    }
    let unique = touched.iter().filter(|&&b| b).count() as u64;
    Ratio::new(loads - unique, loads)
}

/// Redundant-load fraction of interior warps, measured on a periodic domain
/// tiled exactly by valid regions so no tile touches a domain edge.
pub fn measure_interior_redundancy(
    lane_count: usize,
    cache_width: usize,
    m: usize,
    n: usize,
) -> Result<Ratio<u64>> {
    check_lane_count(lane_count)?;
    if m == 0 || m > lane_count || n == 0 || n > cache_width {
        return Err(invalid(format!(
            "filter {m}x{n} does not fit a {lane_count}x{cache_width} register cache"
        )));
    }
    let vw = lane_count - m + 1;
    let vh = cache_width - n + 1;
    // enough tiles that a cached extent never wraps onto itself
    let tiles_x = lane_count.div_ceil(vw) + 1;
    let tiles_y = cache_width.div_ceil(vh) + 1;
    let (w, h) = (tiles_x * vw, tiles_y * vh);
    let mut touched = vec![false; w * h];
    let mut loads = 0u64;
    for ty in 0..tiles_y {
        for tx in 0..tiles_x {
            for r in 0..cache_width {
                for l in 0..lane_count {
                    let x = (tx * vw + l) % w;
                    let y = (ty * vh + r) % h;
                    touched[y * w + x] = true;
                    loads += 1;
                }
            }
        }
    }
    let unique = touched.iter().filter(|&&b| b).count() as u64;
    Ok(Ratio::new(loads - unique, loads))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(p: usize, b: usize) -> KernelConfig {
        KernelConfig {
            p,
            b,
            ..KernelConfig::default()
        }
    }

    fn filter(m: usize, n: usize) -> FilterSpec<i64> {
        FilterSpec::ones(m, n).unwrap()
    }

    #[test]
    fn grid_dims_for_large_image() {
        let plan = plan_blocks(8192, 8192, &filter(3, 3), &cfg(4, 128), 32).unwrap();
        assert_eq!(plan.warp_count, 4);
        assert_eq!(plan.grid_dim_x, 69);
        assert_eq!(plan.grid_dim_y, 2048);
        assert_eq!(plan.cache_width, 6);
    }

    #[test]
    fn degenerate_filter_has_no_horizontal_halo() {
        let plan = plan_blocks(8192, 64, &filter(1, 1), &cfg(4, 128), 32).unwrap();
        assert_eq!(plan.grid_dim_x, 64);
        assert_eq!(
            plan.halo,
            Halo {
                left: 0,
                right: 0,
                top: 0,
                bottom: 0
            }
        );
    }

    #[test]
    fn narrow_domain_needs_two_blocks() {
        let plan = plan_blocks(33, 8, &filter(3, 3), &cfg(4, 32), 32).unwrap();
        assert_eq!(plan.valid_width(), 30);
        assert_eq!(plan.grid_dim_x, 2);
        let tiles: Vec<_> = plan.tiles().filter(|t| t.block_y == 0).collect();
        assert_eq!(tiles.len(), 2);
        assert_eq!(tiles[1].valid_cols, 3);
        check_coverage(&plan).unwrap();
    }

    #[test]
    fn plan_rejects_bad_arguments() {
        assert!(plan_blocks(64, 64, &filter(33, 3), &cfg(4, 128), 32).is_err());
        assert!(plan_blocks(64, 64, &filter(3, 3), &cfg(4, 100), 32).is_err());
        assert!(plan_blocks(64, 64, &filter(3, 3), &cfg(0, 128), 32).is_err());
    }

    #[test]
    fn halo_ratio_values() {
        assert_eq!(halo_ratio(32, 6, 3, 3), Ratio::new(105, 192));
        // m = n = 1 expands to (S + C - 1) / (S * C)
        assert_eq!(halo_ratio(32, 6, 1, 1), Ratio::new(32 + 6 - 1, 192));
        for m in 1..=32 {
            for n in 1..=20 {
                let c = n + 3;
                assert!(halo_ratio(32, c, m, n) < halo_ratio_bound(32, c, m, n));
            }
        }
    }

    #[test]
    fn interior_redundancy_counts_halo_of_width_m_minus_one() {
        // 32x6 cache, 3x3 filter: each warp owns 30x4 of its 192 loads.
        assert_eq!(
            measure_interior_redundancy(32, 6, 3, 3).unwrap(),
            Ratio::new(72, 192)
        );
        assert_eq!(
            measure_interior_redundancy(32, 6, 1, 1).unwrap(),
            Ratio::new(0, 1)
        );
    }

    #[test]
    fn whole_plan_redundancy_single_block() {
        // One block covering the whole domain: padded domain is 32x6 and
        // loaded exactly once.
        let plan = plan_blocks(30, 4, &filter(3, 3), &cfg(4, 32), 32).unwrap();
        assert_eq!(plan.block_count(), 1);
        assert_eq!(measure_redundancy(&plan), Ratio::new(0, 1));
    }

    #[test]
    fn ownership_detects_double_write_and_gap() {
        let mut map = OwnershipMap::new(4, 4);
        map.claim(1, 1).unwrap();
        assert!(map.claim(1, 1).is_err());
        assert!(map.claim(4, 0).is_err());
        assert!(map.check_complete().is_err());
        map.claim_region(0, 0, 4, 4).unwrap_err();
    }

    #[test]
    fn dump_roundtrip() {
        let plan = plan_blocks(70, 9, &filter(4, 2), &cfg(3, 64), 32).unwrap();
        let text = plan.to_text();
        assert_eq!(text.lines().count(), 1 + plan.tiles().count());
        assert_eq!(BlockPlan::from_text(&text).unwrap(), plan);
        let header_only = text.lines().next().unwrap();
        assert_eq!(BlockPlan::from_text(header_only).unwrap(), plan);
        let truncated: String = text.lines().take(2).map(|l| format!("{l}\n")).collect();
        assert!(BlockPlan::from_text(&truncated).is_err());
        assert!(BlockPlan::from_text("{}").is_err());
    }
}
