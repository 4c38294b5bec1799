use anyhow::{bail, Result};
use clap::Args;
use serde::Serialize;

use ssam_core::kernels::conv2d;
use ssam_core::perf::{cost_report, cross_check, CostReport, Cycles, LatencyProfile, WarpCounts};
use ssam_core::{FilterSpec, Grid2D, KernelConfig, ScalarMode, WARP_SIZE};

use crate::common::{exact, parse_range, Common, Report};

#[derive(Args, Debug, Clone)]
pub struct CostArgs {
    #[arg(long, default_value_t = 3)]
    pub m: usize,
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    /// Evaluate every m and n in an inclusive range such as 2..20.
    #[arg(long)]
    pub sweep: Option<String>,
    /// Halo ratio of a shared-memory implementation to compare against
    /// (integer or p/q); the model cannot derive it.
    #[arg(long)]
    pub hr_smc: Option<String>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Serialize)]
struct CostRecord {
    record: &'static str,
    profile: String,
    m: usize,
    n: usize,
    p: usize,
    l_reg: String,
    l_smem: String,
    dif: String,
    dif_positive: bool,
    avg_dif: String,
    hr_rc: String,
    hr_smc: Option<String>,
    predicted: WarpCounts,
    counted: Option<WarpCounts>,
    modeled_latency: Option<String>,
    verified: Option<bool>,
}

fn verify(
    m: usize,
    n: usize,
    p: usize,
    prof: &LatencyProfile,
    common: &Common,
) -> Result<CostReport> {
    let cfg = KernelConfig {
        p,
        ..common.config(KernelConfig::default(), ScalarMode::Int)
    };
    let h = (n + p - 1).max(2 * p);
    let mut rng = common.rng((m * 64 + n) as u64);
    let grid = Grid2D::<i64>::random(4 * WARP_SIZE, h, &mut rng)?;
    let filter = FilterSpec::<i64>::random(m, n, &mut rng)?;
    let run = conv2d(&grid, &filter, &cfg)?;
    Ok(cross_check(&run.warp_counters, m, n, p, prof)?)
}

pub fn cmd_cost(args: &CostArgs) -> Result<bool> {
    let common = &args.common;
    let prof = common.latency_profile()?;
    let p = common.p.unwrap_or(KernelConfig::default().p);
    let hr_smc: Option<Cycles> = match &args.hr_smc {
        None => None,
        Some(s) => Some(
            s.trim()
                .parse()
                .map_err(|_| anyhow::anyhow!("--hr-smc {s:?} is not an integer or p/q"))?,
        ),
    };
    let shapes: Vec<(usize, usize)> = match &args.sweep {
        Some(range) => {
            let (lo, hi) = parse_range(range)?;
            (lo..=hi)
                .flat_map(|m| (lo..=hi).map(move |n| (m, n)))
                .collect()
        }
        None => vec![(args.m, args.n)],
    };
    if let Some(&(m, _)) = shapes.iter().find(|(m, _)| *m > WARP_SIZE) {
        bail!("m = {m} exceeds a warp of {WARP_SIZE} lanes");
    }

    println!("profile {}", prof.name);
    for (field, v) in prof.fields() {
        println!("  {field:<13} {}", exact(v));
    }
    println!("  (t_reg is an assumed register access cost; t_gmem_read is the middle of a 200-400 range)");
    println!(
        "{:>3} {:>3} {:>3} {:>10} {:>10} {:>10} {:>12} {:>10}{}",
        "m",
        "n",
        "p",
        "L_reg",
        "L_smem",
        "Dif",
        "AvgDif",
        "HR_rc",
        if common.verify { "  counts" } else { "" }
    );

    let mut report = Report::new(common.out.as_deref())?;
    let mut all_ok = true;
    for (m, n) in shapes {
        let r = if common.verify {
            verify(m, n, p, &prof, common)?
        } else {
            cost_report(m, n, p, &prof)?
        };
        let verified = common.verify.then(|| r.agrees());
        if verified == Some(false) {
            all_ok = false;
        }
        println!(
            "{m:>3} {n:>3} {p:>3} {:>10} {:>10} {:>10} {:>12} {:>10}{}",
            exact(r.l_reg),
            exact(r.l_smem),
            exact(r.dif),
            exact(r.avg_dif),
            exact(r.hr_rc),
            match verified {
                Some(true) => "  agree",
                Some(false) => "  MISMATCH",
                None => "",
            }
        );
        report.record(&CostRecord {
            record: "cost",
            profile: prof.name.clone(),
            m,
            n,
            p,
            l_reg: exact(r.l_reg),
            l_smem: exact(r.l_smem),
            dif: exact(r.dif),
            dif_positive: r.dif > Cycles::from_integer(0),
            avg_dif: exact(r.avg_dif),
            hr_rc: exact(r.hr_rc),
            hr_smc: hr_smc.map(exact),
            predicted: r.predicted,
            counted: r.counted,
            modeled_latency: r.modeled_latency.map(exact),
            verified,
        })?;
    }
    if let Some(h) = hr_smc {
        println!("HR_smc = {} (supplied)", exact(h));
    }
    report.finish()?;
    Ok(all_ok)
}
