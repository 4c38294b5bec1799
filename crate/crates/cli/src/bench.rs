use anyhow::Result;
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use ssam_core::kernels::{conv2d, stencil2d, stencil3d};
use ssam_core::oracle::{compare, conv2d_naive, stencil2d_naive, stencil3d_naive, Comparison};
use ssam_core::perf::{cross_check, sweep_cycles, to_f64, LatencyProfile};
use ssam_core::stencils::Benchmark;
use ssam_core::{Counters, FilterSpec, Grid2D, Grid3D, KernelConfig, Scalar, ScalarMode};

use crate::common::{exact, Common, Report};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    /// Square filters 2x2 through 20x20.
    ConvSweep,
    /// Every named stencil benchmark.
    Table3,
}

#[derive(Args, Debug, Clone)]
pub struct BenchArgs {
    #[arg(value_enum)]
    pub suite: Suite,
    /// Domain edge for conv-sweep.
    #[arg(long, default_value_t = 512)]
    pub size: usize,
    /// Domain edge for 2D stencils.
    #[arg(long, default_value_t = 256)]
    pub size2d: usize,
    /// Domain edge for 3D stencils.
    #[arg(long, default_value_t = 64)]
    pub size3d: usize,
    #[arg(long, default_value_t = 4)]
    pub iters2d: usize,
    #[arg(long, default_value_t = 2)]
    pub iters3d: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Serialize)]
struct ConvRow {
    record: &'static str,
    profile: String,
    precision: ScalarMode,
    width: usize,
    height: usize,
    m: usize,
    n: usize,
    p: usize,
    warps: usize,
    modeled_cycles: String,
    model_gcells_per_ghz: f64,
    cycles_increase: bool,
    mads: u64,
    shuffles: u64,
    broadcasts: u64,
    counts_agree: bool,
    max_rel: f64,
    verified: bool,
}

#[derive(Serialize)]
struct StencilRow {
    record: &'static str,
    precision: ScalarMode,
    stencil: &'static str,
    dims: Vec<usize>,
    order: usize,
    fpp: u32,
    taps: usize,
    iters: usize,
    p: usize,
    b: usize,
    mads: u64,
    shuffles: u64,
    broadcasts: u64,
    max_abs: f64,
    max_rel: f64,
    verified: bool,
}

struct ConvResult {
    cmp: Comparison,
    warp_counters: Vec<Counters>,
}

fn conv_case<T: Scalar>(
    size: usize,
    k: usize,
    cfg: &KernelConfig,
    common: &Common,
) -> Result<ConvResult> {
    let mut rng = common.rng(k as u64);
    let grid = Grid2D::<T>::random(size, size, &mut rng)?;
    let filter = FilterSpec::<T>::random(k, k, &mut rng)?;
    let run = conv2d(&grid, &filter, cfg)?;
    let want = conv2d_naive(&grid, &filter, cfg.boundary);
    Ok(ConvResult {
        cmp: compare(run.output.data(), want.data()),
        warp_counters: run.warp_counters,
    })
}

fn conv_sweep(args: &BenchArgs, prof: &LatencyProfile, mode: ScalarMode) -> Result<bool> {
    let common = &args.common;
    let cfg = common.config(KernelConfig::default(), mode);
    let results: Vec<Result<ConvResult>> = (2..=20usize)
        .into_par_iter()
        .map(|k| match mode {
            ScalarMode::F32 => conv_case::<f32>(args.size, k, &cfg, common),
            ScalarMode::F64 => conv_case::<f64>(args.size, k, &cfg, common),
            ScalarMode::Int => conv_case::<i64>(args.size, k, &cfg, common),
        })
        .collect();

    println!(
        "conv-sweep {0}x{0} {mode} profile {1} p={2} b={3}",
        args.size, prof.name, cfg.p, cfg.b
    );
    println!(
        "{:>7} {:>6} {:>14} {:>22} {:>6} {:>9} {:>7} {:>8}",
        "filter",
        "warps",
        "model cycles",
        "model GCells per GHz",
        "mads",
        "shuffles",
        "counts",
        "verify"
    );
    let mut report = Report::new(common.out.as_deref())?;
    let mut all_ok = true;
    let mut previous = None;
    let cells = (args.size * args.size) as f64;
    for (k, result) in (2..=20usize).zip(results) {
        let result = result?;
        let warps = result.warp_counters.len();
        let check = cross_check(&result.warp_counters, k, k, cfg.p, prof)?;
        let cycles = sweep_cycles(warps, k, k, cfg.p, prof);
        let increases = previous.is_none_or(|prev| cycles > prev);
        previous = Some(cycles);
        let throughput = cells / to_f64(cycles);
        let row_ok = result.cmp.pass && check.agrees() && increases;
        all_ok &= row_ok;
        let per_warp = result.warp_counters[0];
        println!(
            "{:>7} {warps:>6} {:>14} {throughput:>22.6e} {:>6} {:>9} {:>7} {:>8}",
            format!("{k}x{k}"),
            exact(cycles),
            per_warp.mads,
            per_warp.shuffles,
            if check.agrees() { "agree" } else { "DIFFER" },
            if result.cmp.pass { "PASS" } else { "FAIL" },
        );
        report.record(&ConvRow {
            record: "conv-sweep",
            profile: prof.name.clone(),
            precision: mode,
            width: args.size,
            height: args.size,
            m: k,
            n: k,
            p: cfg.p,
            warps,
            modeled_cycles: exact(cycles),
            model_gcells_per_ghz: throughput,
            cycles_increase: increases,
            mads: per_warp.mads,
            shuffles: per_warp.shuffles,
            broadcasts: per_warp.broadcasts,
            counts_agree: check.agrees(),
            max_rel: result.cmp.max_rel,
            verified: result.cmp.pass,
        })?;
    }
    report.finish()?;
    println!(
        "{}",
        if all_ok {
            "all rows PASS"
        } else {
            "some rows FAILED"
        }
    );
    Ok(all_ok)
}

struct StencilResult {
    dims: Vec<usize>,
    cmp: Comparison,
    counters: Counters,
    cfg: KernelConfig,
}

fn stencil_case<T: Scalar>(
    bench: Benchmark,
    args: &BenchArgs,
    mode: ScalarMode,
) -> Result<StencilResult> {
    let common = &args.common;
    let mut rng = common.rng(100 + bench as u64);
    let spec = bench.spec::<T>();
    if bench.dims() == 2 {
        let cfg = common.config(KernelConfig::default(), mode);
        let grid = Grid2D::<T>::random(args.size2d, args.size2d, &mut rng)?;
        let run = stencil2d(&grid, &spec, &cfg, args.iters2d)?;
        let want = stencil2d_naive(&grid, &spec, args.iters2d);
        Ok(StencilResult {
            dims: vec![args.size2d; 2],
            cmp: compare(run.output.data(), want.data()),
            counters: run.counters,
            cfg,
        })
    } else {
        let cfg = common.config(KernelConfig::stencil3d_default(), mode);
        let s = args.size3d;
        let grid = Grid3D::<T>::random(s, s, s, &mut rng)?;
        let run = stencil3d(&grid, &spec, &cfg, args.iters3d)?;
        let want = stencil3d_naive(&grid, &spec, args.iters3d);
        Ok(StencilResult {
            dims: vec![s; 3],
            cmp: compare(run.output.data(), want.data()),
            counters: run.counters,
            cfg,
        })
    }
}

fn table3(args: &BenchArgs, mode: ScalarMode) -> Result<bool> {
    let results: Vec<Result<StencilResult>> = Benchmark::ALL
        .par_iter()
        .map(|&bench| match mode {
            ScalarMode::F32 => stencil_case::<f32>(bench, args, mode),
            ScalarMode::F64 => stencil_case::<f64>(bench, args, mode),
            ScalarMode::Int => stencil_case::<i64>(bench, args, mode),
        })
        .collect();

    println!(
        "table3 {mode} 2D {0}x{0} x{1} iters, 3D {2}^3 x{3} iters",
        args.size2d, args.iters2d, args.size3d, args.iters3d
    );
    println!(
        "{:>8} {:>2} {:>4} {:>5} {:>14} {:>12} {:>11} {:>6}",
        "stencil", "k", "taps", "fpp", "mads", "shuffles", "max rel", "verify"
    );
    let mut report = Report::new(args.common.out.as_deref())?;
    let mut all_ok = true;
    for (bench, result) in Benchmark::ALL.into_iter().zip(results) {
        let r = result?;
        all_ok &= r.cmp.pass;
        let taps = bench.offsets().len();
        println!(
            "{:>8} {:>2} {taps:>4} {:>5} {:>14} {:>12} {:>11.3e} {:>6}",
            bench.name(),
            bench.order(),
            bench.fpp(),
            r.counters.mads,
            r.counters.shuffles,
            r.cmp.max_rel,
            if r.cmp.pass { "PASS" } else { "FAIL" }
        );
        report.record(&StencilRow {
            record: "table3",
            precision: mode,
            stencil: bench.name(),
            dims: r.dims,
            order: bench.order(),
            fpp: bench.fpp(),
            taps,
            iters: if bench.dims() == 2 {
                args.iters2d
            } else {
                args.iters3d
            },
            p: r.cfg.p,
            b: r.cfg.b,
            mads: r.counters.mads,
            shuffles: r.counters.shuffles,
            broadcasts: r.counters.broadcasts,
            max_abs: r.cmp.max_abs,
            max_rel: r.cmp.max_rel,
            verified: r.cmp.pass,
        })?;
    }
    report.finish()?;
    println!(
        "{}",
        if all_ok {
            "all rows PASS"
        } else {
            "some rows FAILED"
        }
    );
    Ok(all_ok)
}

pub fn cmd_bench(args: &BenchArgs) -> Result<bool> {
    let mode = args.common.mode(ScalarMode::F64);
    match args.suite {
        Suite::ConvSweep => conv_sweep(args, &args.common.latency_profile()?, mode),
        Suite::Table3 => table3(args, mode),
    }
}
