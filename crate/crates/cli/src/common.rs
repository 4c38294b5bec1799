use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use ssam_core::perf::{builtin_profile, Cycles, LatencyProfile};
use ssam_core::{Boundary, KernelConfig, ScalarMode};

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Latency profile: a builtin name (P100, V100) or a profile file.
    #[arg(long, default_value = "P100")]
    pub profile: String,
    /// Directory searched for `<name>.toml` when --profile is neither a
    /// builtin nor an existing path.
    #[arg(long, env = "SSAM_PROFILE_DIR")]
    pub profile_dir: Option<PathBuf>,
    /// Override the global read latency (integer or p/q).
    #[arg(long)]
    pub t_gmem_read: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Scalar mode: f32, f64 or int.
    #[arg(long)]
    pub precision: Option<ScalarMode>,
    /// Shorthand for --precision int.
    #[arg(long, conflicts_with = "precision")]
    pub int: bool,
    /// Outputs per thread.
    #[arg(long)]
    pub p: Option<usize>,
    /// Threads per block.
    #[arg(long)]
    pub b: Option<usize>,
    #[arg(long, default_value = "zero")]
    pub boundary: Boundary,
    /// Write machine-readable records (one JSON object per line) here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Cross-check model predictions against a simulator run (cost).
    #[arg(long)]
    pub verify: bool,
}

impl Common {
    pub fn mode(&self, default: ScalarMode) -> ScalarMode {
        if self.int {
            ScalarMode::Int
        } else {
            self.precision.unwrap_or(default)
        }
    }

    pub fn config(&self, base: KernelConfig, mode: ScalarMode) -> KernelConfig {
        KernelConfig {
            p: self.p.unwrap_or(base.p),
            b: self.b.unwrap_or(base.b),
            boundary: self.boundary,
            mode,
            ..base
        }
    }

    pub fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    pub fn latency_profile(&self) -> Result<LatencyProfile> {
        let prof = resolve_profile(&self.profile, self.profile_dir.as_deref())?;
        match &self.t_gmem_read {
            None => Ok(prof),
            Some(t) => {
                let t: Cycles = t
                    .trim()
                    .parse()
                    .map_err(|_| anyhow::anyhow!("--t-gmem-read {t:?} is not an integer or p/q"))?;
                Ok(prof.with_gmem_read(t)?)
            }
        }
    }
}

pub fn resolve_profile(name: &str, dir: Option<&Path>) -> Result<LatencyProfile> {
    if let Some(p) = builtin_profile(name) {
        return Ok(p);
    }
    let direct = Path::new(name);
    if direct.is_file() {
        return LatencyProfile::load(direct).with_context(|| format!("loading profile {name}"));
    }
    if let Some(dir) = dir {
        let candidate = dir.join(format!("{name}.toml"));
        if candidate.is_file() {
            return LatencyProfile::load(&candidate)
                .with_context(|| format!("loading profile {}", candidate.display()));
        }
    }
    bail!(
        "unknown profile `{name}`: not a builtin (P100, V100), a file, or in the profile directory"
    )
}

/// Human-readable lines on stdout plus optional JSON-lines records.
pub struct Report {
    out: Option<BufWriter<File>>,
}

impl Report {
    pub fn new(path: Option<&Path>) -> Result<Self> {
        let out = match path {
            Some(p) => Some(BufWriter::new(
                File::create(p).with_context(|| format!("creating {}", p.display()))?,
            )),
            None => None,
        };
        Ok(Report { out })
    }

    pub fn record<S: Serialize>(&mut self, rec: &S) -> Result<()> {
        if let Some(out) = &mut self.out {
            serde_json::to_writer(&mut *out, rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        if let Some(mut out) = self.out {
            out.flush()?;
        }
        Ok(())
    }
}

/// Exact rational shown as `p` or `p/q`.
pub fn exact(r: Cycles) -> String {
    ssam_core::perf::Exact(r).to_string()
}

pub fn parse_range(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s
        .split_once("..")
        .with_context(|| format!("range `{s}` is not of the form a..b"))?;
    let (a, b): (usize, usize) = (a.trim().parse()?, b.trim().parse()?);
    if a == 0 || a > b {
        bail!("range `{s}` must satisfy 1 <= a <= b");
    }
    Ok((a, b))
}
