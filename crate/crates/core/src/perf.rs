//! Analytical latency model. All quantities are exact rationals in cycles
//! per warp.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::blocking::halo_ratio;
use crate::error::{invalid, Result, SsamError};
use crate::ir::{CoeffSource, OpKind, SsamPlan};
use crate::scalar::Scalar;
use crate::warp::{Counters, WARP_SIZE};

pub type Cycles = Ratio<i64>;

/// Default register access cost; never tabulated, so one cycle is assumed.
pub const DEFAULT_T_REG: i64 = 1;
/// Midpoint of the 200 to 400 cycle range quoted for coalesced global reads.
pub const DEFAULT_T_GMEM_READ: i64 = 300;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyProfile {
    pub name: String,
    pub t_shfl: Cycles,
    pub t_mad: Cycles,
    pub t_smem_read: Cycles,
    pub t_reg: Cycles,
    pub t_gmem_read: Cycles,
    pub t_gmem_write: Cycles,
}

impl LatencyProfile {
    /// A profile with the default register and global-memory costs.
    pub fn new(name: &str, t_shfl: i64, t_mad: i64, t_smem_read: i64) -> Result<Self> {
        let gmem = Cycles::from_integer(DEFAULT_T_GMEM_READ);
        LatencyProfile {
            name: name.to_string(),
            t_shfl: t_shfl.into(),
            t_mad: t_mad.into(),
            t_smem_read: t_smem_read.into(),
            t_reg: DEFAULT_T_REG.into(),
            t_gmem_read: gmem,
            t_gmem_write: gmem,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        for (field, v) in self.fields() {
            if v <= Cycles::from_integer(0) {
                return Err(invalid(format!(
                    "profile {}: {field} = {v} is not positive",
                    self.name
                )));
            }
        }
        if self.t_gmem_read < self.t_smem_read {
            return Err(invalid(format!(
                "profile {}: global read {} is faster than shared read {}",
                self.name, self.t_gmem_read, self.t_smem_read
            )));
        }
        Ok(self)
    }

    pub fn fields(&self) -> [(&'static str, Cycles); 6] {
        [
            ("t_shfl", self.t_shfl),
            ("t_mad", self.t_mad),
            ("t_smem_read", self.t_smem_read),
            ("t_reg", self.t_reg),
            ("t_gmem_read", self.t_gmem_read),
            ("t_gmem_write", self.t_gmem_write),
        ]
    }

    /// Replaces the global read latency. The write latency follows it when
    /// the two were equal.
    pub fn with_gmem_read(mut self, t: Cycles) -> Result<Self> {
        if self.t_gmem_write == self.t_gmem_read {
            self.t_gmem_write = t;
        }
        self.t_gmem_read = t;
        self.validated()
    }

    /// Parses a profile file. `t_shfl`, `t_mad` and `t_smem_read` are
    /// required; the others fall back to the defaults. Values are integers
    /// or `"p/q"` strings.
    ///
    /// ```toml
    /// name = "my-card"
    /// t_shfl = 30
    /// t_mad = 4
    /// t_smem_read = "55/2"
    /// ```
    pub fn from_toml(text: &str, fallback_name: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e| SsamError::Format(format!("profile: {e}")))?;
        let known = [
            "name",
            "t_shfl",
            "t_mad",
            "t_smem_read",
            "t_reg",
            "t_gmem_read",
            "t_gmem_write",
        ];
        if let Some(k) = table.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(SsamError::Format(format!("profile: unknown field `{k}`")));
        }
        let get = |key: &str| -> Result<Option<Cycles>> {
            match table.get(key) {
                None => Ok(None),
                Some(toml::Value::Integer(i)) => Ok(Some(Cycles::from_integer(*i))),
                Some(toml::Value::String(s)) => {
                    s.trim().parse::<Cycles>().map(Some).map_err(|_| {
                        SsamError::Format(format!("profile: {key} = {s:?} is not p/q"))
                    })
                }
                Some(other) => Err(SsamError::Format(format!(
                    "profile: {key} must be an integer or a \"p/q\" string, got {other}"
                ))),
            }
        };
        let need = |key: &str| {
            get(key)?.ok_or_else(|| SsamError::Format(format!("profile: missing `{key}`")))
        };
        let name = match table.get("name") {
            Some(toml::Value::String(s)) => s.clone(),
            Some(_) => return Err(SsamError::Format("profile: name must be a string".into())),
            None => fallback_name.to_string(),
        };
        let t_gmem_read = get("t_gmem_read")?.unwrap_or(DEFAULT_T_GMEM_READ.into());
        LatencyProfile {
            name,
            t_shfl: need("t_shfl")?,
            t_mad: need("t_mad")?,
            t_smem_read: need("t_smem_read")?,
            t_reg: get("t_reg")?.unwrap_or(DEFAULT_T_REG.into()),
            t_gmem_read,
            t_gmem_write: get("t_gmem_write")?.unwrap_or(t_gmem_read),
        }
        .validated()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("custom");
        Self::from_toml(&text, stem)
    }

    pub fn to_toml(&self) -> String {
        let mut out = format!("name = {:?}\n", self.name);
        for (field, v) in self.fields() {
            if v.is_integer() {
                out.push_str(&format!("{field} = {v}\n"));
            } else {
                out.push_str(&format!("{field} = \"{v}\"\n"));
            }
        }
        out
    }
}

/// The measured Pascal and Volta latencies.
pub fn builtin_profiles() -> BTreeMap<&'static str, LatencyProfile> {
    let mut out = BTreeMap::new();
    out.insert(
        "P100",
        LatencyProfile::new("P100", 33, 6, 33).expect("valid"),
    );
    out.insert(
        "V100",
        LatencyProfile::new("V100", 22, 4, 27).expect("valid"),
    );
    out
}

/// Looks up a builtin profile by name, ignoring case.
pub fn builtin_profile(name: &str) -> Option<LatencyProfile> {
    builtin_profiles()
        .into_iter()
        .find(|(k, _)| k.eq_ignore_ascii_case(name))
        .map(|(_, v)| v)
}

fn mn(m: usize, n: usize) -> Cycles {
    Cycles::from_integer((m * n) as i64)
}

fn int(v: usize) -> Cycles {
    Cycles::from_integer(v as i64)
}

/// Per-output latency with the image in the register cache:
/// `MN(T_mad + T_smem + 2T_reg) + (M-1)T_shfl`.
pub fn latency_reg(m: usize, n: usize, prof: &LatencyProfile) -> Cycles {
    mn(m, n) * (prof.t_mad + prof.t_smem_read + prof.t_reg * 2)
        + int(m.saturating_sub(1)) * prof.t_shfl
}

/// Per-output latency with the image in shared memory:
/// `MN(T_mad + 2T_smem + 2T_reg)`.
pub fn latency_smem(m: usize, n: usize, prof: &LatencyProfile) -> Cycles {
    mn(m, n) * (prof.t_mad + prof.t_smem_read * 2 + prof.t_reg * 2)
}

/// `MN T_smem - (M-1) T_shfl`, the per-output saving of the register cache.
pub fn dif_smem_reg(m: usize, n: usize, prof: &LatencyProfile) -> Cycles {
    mn(m, n) * prof.t_smem_read - int(m.saturating_sub(1)) * prof.t_shfl
}

/// Lower bound on the average per-output saving once the halo loads are
/// charged:
/// `T_smem - T_gmem (N/(N+P-1) + M/32) + P M N T_smem/(N+P-1) - (M-1) T_shfl`.
/// Can be negative for small `p`.
pub fn avg_dif_lower_bound(m: usize, n: usize, p: usize, prof: &LatencyProfile) -> Cycles {
    let c = int(n + p - 1);
    prof.t_smem_read - prof.t_gmem_read * (int(n) / c + Cycles::new(m as i64, WARP_SIZE as i64))
        + int(p) * mn(m, n) * prof.t_smem_read / c
        - int(m.saturating_sub(1)) * prof.t_shfl
}

/// Modeled cycles of a whole 2D convolution with its warps issued back to
/// back: each warp loads `n + p - 1` rows, computes `p` outputs per lane at
/// `L_reg` apiece and stores `p` rows.
pub fn sweep_cycles(warps: usize, m: usize, n: usize, p: usize, prof: &LatencyProfile) -> Cycles {
    let per_warp = int(n + p - 1) * prof.t_gmem_read
        + int(p) * latency_reg(m, n, prof)
        + int(p) * prof.t_gmem_write;
    int(warps) * per_warp
}

/// Instruction counts for one warp over all of its window steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarpCounts {
    pub mads: u64,
    pub shuffles: u64,
    pub broadcasts: u64,
    pub global_loads: u64,
}

impl From<&Counters> for WarpCounts {
    fn from(c: &Counters) -> Self {
        WarpCounts {
            mads: c.mads,
            shuffles: c.shuffles,
            broadcasts: c.broadcasts,
            global_loads: c.global_loads,
        }
    }
}

/// Closed-form counts for a 2D convolution warp: `m*n*p` MADs and
/// broadcasts, `(m-1)*p` shuffles and `lanes * (n+p-1)` loaded cells.
pub fn predicted_counts(m: usize, n: usize, p: usize, lanes: usize) -> WarpCounts {
    let (m, n, p, lanes) = (m as u64, n as u64, p as u64, lanes as u64);
    WarpCounts {
        mads: m * n * p,
        shuffles: (m - 1) * p,
        broadcasts: m * n * p,
        global_loads: lanes * (n + p - 1),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub m: usize,
    pub n: usize,
    pub p: usize,
    pub profile: String,
    pub l_reg: Cycles,
    pub l_smem: Cycles,
    pub dif: Cycles,
    pub avg_dif: Cycles,
    pub hr_rc: Cycles,
    pub predicted: WarpCounts,
    /// Per-warp counts of a simulator run, when one was cross-checked.
    pub counted: Option<WarpCounts>,
    /// Warps whose counts differ from the prediction.
    pub mismatched_warps: usize,
    /// Per-output latency rebuilt from the counted instructions.
    pub modeled_latency: Option<Cycles>,
}

impl CostReport {
    /// False when a cross-check found any disagreement.
    pub fn agrees(&self) -> bool {
        self.mismatched_warps == 0 && self.modeled_latency.is_none_or(|l| l == self.l_reg)
    }
}

/// Model values for an `m x n` filter computing `p` outputs per thread.
pub fn cost_report(m: usize, n: usize, p: usize, prof: &LatencyProfile) -> Result<CostReport> {
    if m == 0 || n == 0 || p == 0 {
        return Err(invalid(format!("m={m}, n={n}, p={p} must all be positive")));
    }
    if m > WARP_SIZE {
        return Err(invalid(format!(
            "m={m} exceeds a warp of {WARP_SIZE} lanes"
        )));
    }
    let l_reg = latency_reg(m, n, prof);
    let l_smem = latency_smem(m, n, prof);
    Ok(CostReport {
        m,
        n,
        p,
        profile: prof.name.clone(),
        l_reg,
        l_smem,
        dif: l_smem - l_reg,
        avg_dif: avg_dif_lower_bound(m, n, p, prof),
        hr_rc: halo_ratio(WARP_SIZE, n + p - 1, m, n),
        predicted: predicted_counts(m, n, p, WARP_SIZE),
        counted: None,
        mismatched_warps: 0,
        modeled_latency: None,
    })
}

/// Compares per-warp simulator counts of a finished convolution with the
/// closed forms, and rebuilds the per-output latency from what was
/// actually issued. Disagreement is reported, not raised.
pub fn cross_check(
    warp_counters: &[Counters],
    m: usize,
    n: usize,
    p: usize,
    prof: &LatencyProfile,
) -> Result<CostReport> {
    let mut report = cost_report(m, n, p, prof)?;
    let Some(first) = warp_counters.first() else {
        return Err(invalid("no warps to cross-check"));
    };
    report.mismatched_warps = warp_counters
        .iter()
        .filter(|c| WarpCounts::from(*c) != report.predicted)
        .count();
    let counted = WarpCounts::from(first);
    let per_output = int(p);
    let issued = Cycles::from_integer(counted.mads as i64) * (prof.t_mad + prof.t_reg * 2)
        + Cycles::from_integer(counted.broadcasts as i64) * prof.t_smem_read
        + Cycles::from_integer(counted.shuffles as i64) * prof.t_shfl;
    report.counted = Some(counted);
    report.modeled_latency = Some(issued / per_output);
    Ok(report)
}

/// Modeled cycles of one pass through a plan: a shift costs a shuffle, an
/// issued operation costs a MAD plus two register accesses (and a shared
/// read when its coefficient is broadcast), a copy costs a register access.
pub fn plan_cycles<T: Scalar>(plan: &SsamPlan<T>, prof: &LatencyProfile) -> Cycles {
    plan.stages
        .iter()
        .map(|s| {
            let mut c = if s.shift > 0 {
                prof.t_shfl
            } else {
                Cycles::from_integer(0)
            };
            if s.issues_arithmetic() {
                c += prof.t_mad + prof.t_reg * 2;
                if matches!(s.coeff_source, CoeffSource::Broadcast(_)) {
                    c += prof.t_smem_read;
                }
            } else if s.op_kind == OpKind::Copy {
                c += prof.t_reg;
            }
            c
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedPlan {
    /// Position in the input list.
    pub index: usize,
    pub cycles: Cycles,
    pub shuffles: usize,
}

/// Orders plans by modeled cycles, then by fewer shuffles, then by input
/// order.
pub fn compare_plans<T: Scalar>(plans: &[SsamPlan<T>], prof: &LatencyProfile) -> Vec<RankedPlan> {
    let mut ranked: Vec<RankedPlan> = plans
        .iter()
        .enumerate()
        .map(|(index, p)| RankedPlan {
            index,
            cycles: plan_cycles(p, prof),
            shuffles: p.shuffle_count(),
        })
        .collect();
    ranked.sort_by_key(|r| (r.cycles, r.shuffles, r.index));
    ranked
}

/// Shows a rational as `p` or `p/q`.
pub struct Exact(pub Cycles);

impl fmt::Display for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

pub fn to_f64(r: Cycles) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p100() -> LatencyProfile {
        builtin_profile("P100").unwrap()
    }

    fn v100() -> LatencyProfile {
        builtin_profile("v100").unwrap()
    }

    #[test]
    fn builtin_values() {
        assert_eq!(p100().t_shfl, 33.into());
        assert_eq!(v100().t_mad, 4.into());
        assert_eq!(p100().t_gmem_read, 300.into());
        assert_eq!(p100().t_gmem_write, p100().t_gmem_read);
    }

    #[test]
    fn latency_examples() {
        let p = p100();
        assert_eq!(latency_reg(1, 1, &p), p.t_mad + p.t_smem_read + p.t_reg * 2);
        assert_eq!(latency_reg(3, 3, &p), 435.into());
        assert_eq!(latency_smem(1, 1, &p), 74.into());
        assert_eq!(latency_smem(3, 3, &p), 666.into());
        assert_eq!(dif_smem_reg(3, 3, &p), 231.into());
        assert_eq!(dif_smem_reg(2, 2, &v100()), 86.into());
    }

    #[test]
    fn avg_dif_examples() {
        assert_eq!(avg_dif_lower_bound(3, 3, 4, &p100()), Cycles::new(-105, 8));
        // 27 - 300 (2/9 + 1/16) + 8*4*27/9 - 22 = 5 - 1025/12 + 96
        assert_eq!(avg_dif_lower_bound(2, 2, 8, &v100()), Cycles::new(187, 12));
        let grows = (1..40)
            .map(|p| avg_dif_lower_bound(3, 3, p, &p100()))
            .collect::<Vec<_>>();
        assert!(grows.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn identity_and_positivity() {
        for prof in builtin_profiles().values() {
            for m in 1..=20 {
                for n in 1..=20 {
                    assert_eq!(
                        latency_smem(m, n, prof) - latency_reg(m, n, prof),
                        dif_smem_reg(m, n, prof)
                    );
                    if m >= 2 && n >= 2 {
                        assert!(dif_smem_reg(m, n, prof) > 0.into());
                    }
                }
            }
        }
    }

    #[test]
    fn profile_file_round_trip() {
        let text = "name = \"card\"\nt_shfl = 30\nt_mad = 4\nt_smem_read = \"55/2\"\n";
        let prof = LatencyProfile::from_toml(text, "x").unwrap();
        assert_eq!(prof.t_smem_read, Cycles::new(55, 2));
        assert_eq!(prof.t_reg, 1.into());
        assert_eq!(
            LatencyProfile::from_toml(&prof.to_toml(), "y").unwrap(),
            prof
        );
        assert!(LatencyProfile::from_toml("t_shfl = 1\nt_mad = 1\n", "x").is_err());
        assert!(
            LatencyProfile::from_toml("t_shfl = 0\nt_mad = 1\nt_smem_read = 1\n", "x").is_err()
        );
        assert!(LatencyProfile::from_toml(
            "t_shfl = 1\nt_mad = 1\nt_smem_read = 1\nbogus = 2\n",
            "x"
        )
        .is_err());
        assert!(
            LatencyProfile::from_toml("t_shfl = 1\nt_mad = 1\nt_smem_read = 400\n", "x").is_err()
        );
    }

    #[test]
    fn exact_display() {
        assert_eq!(Exact(Cycles::new(-105, 8)).to_string(), "-105/8");
        assert_eq!(Exact(231.into()).to_string(), "231");
    }
}
