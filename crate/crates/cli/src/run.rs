use std::fs::File;
use std::io::{BufReader, BufWriter, Read};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;

use ssam_core::grid::read_header;
use ssam_core::kernels::{conv1d, conv2d, scan, stencil2d, stencil3d};
use ssam_core::oracle::{
    compare, conv1d_naive, conv2d_naive, scan_naive, stencil2d_naive, stencil3d_naive, Comparison,
};
use ssam_core::stencils::Benchmark;
use ssam_core::{Counters, FilterSpec, Grid2D, Grid3D, KernelConfig, Scalar, ScalarMode};

use crate::common::{Common, Report};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Conv1d,
    Conv2d,
    Stencil2d,
    Stencil3d,
    Scan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Random,
    Ones,
    Identity,
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    #[arg(value_enum)]
    pub kernel: KernelKind,
    /// Grid width (x extent).
    #[arg(long)]
    pub w: Option<usize>,
    /// Grid height (y extent).
    #[arg(long)]
    pub h: Option<usize>,
    /// Grid depth (z extent, 3D stencils).
    #[arg(long)]
    pub d: Option<usize>,
    /// Horizontal filter taps (across lanes); filter length for conv1d.
    #[arg(long, default_value_t = 3)]
    pub m: usize,
    /// Vertical filter taps (down the register cache).
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    /// Signal length for conv1d and scan.
    #[arg(long, default_value_t = 1024)]
    pub len: usize,
    #[arg(long, value_enum, default_value = "random")]
    pub filter: FilterKind,
    /// Named stencil for stencil2d/stencil3d: 2d5pt, 2d9pt, 2d13pt, 2d17pt,
    /// 2d21pt, 2ds25pt, 2d25pt, 2d64pt, 2d81pt, 2d121pt, 3d7pt, 3d13pt,
    /// 3d27pt, 3d125pt or poisson.
    #[arg(long)]
    pub stencil: Option<Benchmark>,
    #[arg(long)]
    pub iters: Option<usize>,
    /// Load the input grid from a binary grid file instead of generating it.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Save the kernel output as a binary grid file.
    #[arg(long)]
    pub save_output: Option<PathBuf>,
    /// Corrupts one output value before verification (testing hook).
    #[arg(long, hide = true)]
    pub inject_fault: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Serialize)]
struct RunRecord {
    record: &'static str,
    kernel: KernelKind,
    precision: ScalarMode,
    seed: u64,
    dims: Vec<usize>,
    m: Option<usize>,
    n: Option<usize>,
    filter: Option<FilterKind>,
    stencil: Option<String>,
    iters: Option<usize>,
    p: usize,
    b: usize,
    boundary: String,
    elements: usize,
    max_abs: f64,
    max_rel: f64,
    mismatches: usize,
    tolerance: Option<f64>,
    exact: bool,
    pass: bool,
    warps: usize,
    counters: Counters,
}

struct Outcome {
    dims: Vec<usize>,
    cmp: Comparison,
    warps: usize,
    counters: Counters,
}

fn corrupt<T: Scalar>(data: &mut [T], inject: bool) {
    if inject {
        if let Some(v) = data.get_mut(data.len() / 2) {
            *v = v.add(T::one());
        }
    }
}

fn save<F>(path: &Option<PathBuf>, write: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> ssam_core::Result<()>,
{
    if let Some(path) = path {
        let mut out = BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        );
        write(&mut out)?;
    }
    Ok(())
}

fn load_2d<T: Scalar>(args: &RunArgs, w: usize, h: usize) -> Result<Grid2D<T>> {
    match &args.input {
        Some(path) => Ok(Grid2D::read_binary(&mut BufReader::new(File::open(path)?))?),
        None => Ok(Grid2D::random(w, h, &mut args.common.rng(1))?),
    }
}

fn execute<T: Scalar>(args: &RunArgs, cfg: &KernelConfig) -> Result<Outcome> {
    let common = &args.common;
    let inject = args.inject_fault;
    match args.kernel {
        KernelKind::Conv2d => {
            let (w, h) = (args.w.unwrap_or(128), args.h.unwrap_or(128));
            let grid = load_2d::<T>(args, w, h)?;
            let filter = match args.filter {
                FilterKind::Random => FilterSpec::random(args.m, args.n, &mut common.rng(2))?,
                FilterKind::Ones => FilterSpec::ones(args.m, args.n)?,
                FilterKind::Identity => FilterSpec::identity(),
            };
            let mut run = conv2d(&grid, &filter, cfg)?;
            corrupt(run.output.data_mut(), inject);
            let want = conv2d_naive(&grid, &filter, cfg.boundary);
            save(&args.save_output, |o| run.output.write_binary(o))?;
            Ok(Outcome {
                dims: vec![grid.width(), grid.height()],
                cmp: compare(run.output.data(), want.data()),
                warps: run.warp_counters.len(),
                counters: run.counters,
            })
        }
        KernelKind::Stencil2d => {
            let bench = args.stencil.unwrap_or(Benchmark::D2Pt5);
            let (w, h) = (args.w.unwrap_or(256), args.h.unwrap_or(256));
            let grid = load_2d::<T>(args, w, h)?;
            let spec = bench.spec::<T>();
            let iters = args.iters.unwrap_or(4);
            let mut run = stencil2d(&grid, &spec, cfg, iters)?;
            corrupt(run.output.data_mut(), inject);
            let want = stencil2d_naive(&grid, &spec, iters);
            save(&args.save_output, |o| run.output.write_binary(o))?;
            Ok(Outcome {
                dims: vec![grid.width(), grid.height()],
                cmp: compare(run.output.data(), want.data()),
                warps: run.warp_counters.len(),
                counters: run.counters,
            })
        }
        KernelKind::Stencil3d => {
            let bench = args.stencil.unwrap_or(Benchmark::D3Pt7);
            let grid: Grid3D<T> = match &args.input {
                Some(path) => Grid3D::read_binary(&mut BufReader::new(File::open(path)?))?,
                None => {
                    let s = 32;
                    let dims = (
                        args.w.unwrap_or(s),
                        args.h.unwrap_or(s),
                        args.d.unwrap_or(s),
                    );
                    Grid3D::random(dims.0, dims.1, dims.2, &mut common.rng(1))?
                }
            };
            let spec = bench.spec::<T>();
            let iters = args.iters.unwrap_or(2);
            let mut run = stencil3d(&grid, &spec, cfg, iters)?;
            corrupt(run.output.data_mut(), inject);
            let want = stencil3d_naive(&grid, &spec, iters);
            save(&args.save_output, |o| run.output.write_binary(o))?;
            Ok(Outcome {
                dims: grid.dims().to_vec(),
                cmp: compare(run.output.data(), want.data()),
                warps: run.warp_counters.len(),
                counters: run.counters,
            })
        }
        KernelKind::Conv1d | KernelKind::Scan => {
            if args.input.is_some() || args.save_output.is_some() {
                bail!("--input and --save-output apply to grid kernels only");
            }
            let mut rng = common.rng(1);
            let signal: Vec<T> = (0..args.len).map(|_| T::sample(&mut rng)).collect();
            let (mut run, want) = if args.kernel == KernelKind::Conv1d {
                let mut frng = common.rng(2);
                let filter: Vec<T> = match args.filter {
                    FilterKind::Random => (0..args.m).map(|_| T::sample(&mut frng)).collect(),
                    FilterKind::Ones => vec![T::one(); args.m],
                    FilterKind::Identity => vec![T::one()],
                };
                (
                    conv1d(&signal, &filter, cfg)?,
                    conv1d_naive(&signal, &filter, cfg.boundary),
                )
            } else {
                (scan(&signal, cfg.lane_count)?, scan_naive(&signal))
            };
            corrupt(&mut run.output, inject);
            Ok(Outcome {
                dims: vec![args.len],
                cmp: compare(&run.output, &want),
                warps: run.warp_counters.len(),
                counters: run.counters,
            })
        }
    }
}

fn input_mode(args: &RunArgs) -> Result<Option<ScalarMode>> {
    let Some(path) = &args.input else {
        return Ok(None);
    };
    let mut header = [0u8; 16];
    File::open(path)
        .with_context(|| format!("opening {}", path.display()))?
        .read_exact(&mut header)
        .with_context(|| format!("reading {}", path.display()))?;
    let (rank, mode, _) = read_header(&header)?;
    let want = if args.kernel == KernelKind::Stencil3d {
        3
    } else {
        2
    };
    if rank != want {
        bail!(
            "{} holds a rank-{rank} grid; {:?} needs rank {want}",
            path.display(),
            args.kernel
        );
    }
    Ok(Some(mode))
}

/// Runs the kernel and its oracle; returns whether they agree.
pub fn cmd_run(args: &RunArgs) -> Result<bool> {
    let common = &args.common;
    let file_mode = input_mode(args)?;
    let mode = match (
        file_mode,
        common.precision.or(common.int.then_some(ScalarMode::Int)),
    ) {
        (Some(f), Some(c)) if f != c => bail!("input file holds {f} data but --precision is {c}"),
        (Some(f), _) => f,
        (None, _) => common.mode(ScalarMode::F64),
    };
    let base = if args.kernel == KernelKind::Stencil3d {
        KernelConfig::stencil3d_default()
    } else {
        KernelConfig::default()
    };
    let cfg = common.config(base, mode);
    let outcome = match mode {
        ScalarMode::F32 => execute::<f32>(args, &cfg)?,
        ScalarMode::F64 => execute::<f64>(args, &cfg)?,
        ScalarMode::Int => execute::<i64>(args, &cfg)?,
    };
    let is_2d_conv = matches!(args.kernel, KernelKind::Conv2d);
    let is_stencil = matches!(args.kernel, KernelKind::Stencil2d | KernelKind::Stencil3d);
    let stencil = is_stencil.then(|| {
        args.stencil
            .unwrap_or(if args.kernel == KernelKind::Stencil3d {
                Benchmark::D3Pt7
            } else {
                Benchmark::D2Pt5
            })
            .to_string()
    });
    let iters = is_stencil.then(|| {
        args.iters
            .unwrap_or(if args.kernel == KernelKind::Stencil3d {
                2
            } else {
                4
            })
    });
    let rec = RunRecord {
        record: "run",
        kernel: args.kernel,
        precision: mode,
        seed: common.seed,
        elements: outcome.dims.iter().product(),
        dims: outcome.dims,
        m: (is_2d_conv || args.kernel == KernelKind::Conv1d).then_some(args.m),
        n: is_2d_conv.then_some(args.n),
        filter: matches!(args.kernel, KernelKind::Conv1d | KernelKind::Conv2d)
            .then_some(args.filter),
        stencil,
        iters,
        p: cfg.p,
        b: cfg.b,
        boundary: format!("{:?}", cfg.boundary).to_lowercase(),
        max_abs: outcome.cmp.max_abs,
        max_rel: outcome.cmp.max_rel,
        mismatches: outcome.cmp.mismatches,
        tolerance: mode.tolerance(),
        exact: outcome.cmp.mismatches == 0,
        pass: outcome.cmp.pass,
        warps: outcome.warps,
        counters: outcome.counters,
    };

    let verdict = if rec.pass { "PASS" } else { "FAIL" };
    let detail = if rec.exact {
        "exact".to_string()
    } else {
        format!("max abs {:.3e}, max rel {:.3e}", rec.max_abs, rec.max_rel)
    };
    println!(
        "{verdict} {:?} {} {:?} ({detail})",
        rec.kernel, rec.precision, rec.dims
    );
    println!(
        "  warps {}  mads {}  shuffles {}  broadcasts {}  loads {}  stores {}",
        rec.warps,
        rec.counters.mads,
        rec.counters.shuffles,
        rec.counters.broadcasts,
        rec.counters.global_loads,
        rec.counters.global_stores
    );
    if !rec.pass {
        println!(
            "  {} of {} elements differ from the oracle",
            rec.mismatches, rec.elements
        );
    }
    let mut report = Report::new(common.out.as_deref())?;
    report.record(&rec)?;
    report.finish()?;
    Ok(rec.pass)
}
