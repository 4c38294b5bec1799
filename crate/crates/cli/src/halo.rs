use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use num_rational::Ratio;
use serde::Serialize;

use ssam_core::blocking::{
    check_coverage, halo_ratio, halo_ratio_bound, measure_interior_redundancy, measure_redundancy,
    plan_blocks, BlockPlan,
};
use ssam_core::{FilterSpec, KernelConfig, ScalarMode, WARP_SIZE};

use crate::common::{exact, Common, Report};

#[derive(Args, Debug, Clone)]
pub struct HaloArgs {
    #[arg(long, default_value_t = 512)]
    pub w: usize,
    #[arg(long, default_value_t = 512)]
    pub h: usize,
    #[arg(long, default_value_t = 3)]
    pub m: usize,
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    /// Analyse a block-plan dump instead of planning from the flags.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Write the block-plan dump here.
    #[arg(long)]
    pub dump: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Serialize)]
struct HaloRecord {
    record: &'static str,
    width: usize,
    height: usize,
    m: usize,
    n: usize,
    p: usize,
    lane_count: usize,
    cache_width: usize,
    warp_count: usize,
    hr_rc: String,
    /// Unreduced `(S*C - (S-m)(C-n)) / (S*C)`.
    hr_rc_cells: String,
    hr_rc_bound: String,
    bound_holds: bool,
    redundancy_interior: String,
    redundancy_plan: String,
    grid_dim_x: usize,
    grid_dim_y: usize,
    active_warps: usize,
    coverage_ok: bool,
}

fn ratio_u64(r: Ratio<u64>) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn cmd_halo(args: &HaloArgs) -> Result<bool> {
    let common = &args.common;
    let plan = match &args.plan {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            BlockPlan::from_text(&text)?
        }
        None => {
            let cfg = common.config(KernelConfig::default(), ScalarMode::F64);
            let filter = FilterSpec::<f64>::ones(args.m, args.n)?;
            plan_blocks(args.w, args.h, &filter, &cfg, WARP_SIZE)?
        }
    };
    if let Some(path) = &args.dump {
        std::fs::write(path, plan.to_text())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    let (s, c, m, n) = (plan.lane_count, plan.cache_width, plan.m, plan.n);
    let hr = halo_ratio(s, c, m, n);
    let bound = halo_ratio_bound(s, c, m, n);
    let interior = measure_interior_redundancy(s, c, m, n)?;
    let whole = measure_redundancy(&plan);
    let coverage = check_coverage(&plan);
    let rec = HaloRecord {
        record: "halo",
        width: plan.width,
        height: plan.height,
        m,
        n,
        p: plan.p,
        lane_count: s,
        cache_width: c,
        warp_count: plan.warp_count,
        hr_rc: exact(hr),
        hr_rc_cells: format!("{}/{}", s * c - (s - m) * (c - n), s * c),
        hr_rc_bound: exact(bound),
        bound_holds: hr < bound,
        redundancy_interior: ratio_u64(interior),
        redundancy_plan: ratio_u64(whole),
        grid_dim_x: plan.grid_dim_x,
        grid_dim_y: plan.grid_dim_y,
        active_warps: plan.tiles().count(),
        coverage_ok: coverage.is_ok(),
    };

    println!(
        "domain {}x{}  filter {m}x{n}  S={s} C={c} p={}",
        rec.width, rec.height, rec.p
    );
    println!(
        "HR_rc formula          {} = {}  (bound {}, holds: {})",
        rec.hr_rc_cells, rec.hr_rc, rec.hr_rc_bound, rec.bound_holds
    );
    println!("measured, interior     {}", rec.redundancy_interior);
    println!("measured, whole plan   {}", rec.redundancy_plan);
    println!(
        "grid {} x {} blocks of {} warps, {} active warps",
        rec.grid_dim_x, rec.grid_dim_y, rec.warp_count, rec.active_warps
    );
    match &coverage {
        Ok(_) => println!("coverage OK: every output cell written exactly once"),
        Err(e) => println!("coverage FAILED: {e}"),
    }
    let mut report = Report::new(common.out.as_deref())?;
    report.record(&rec)?;
    report.finish()?;
    Ok(rec.coverage_ok)
}
