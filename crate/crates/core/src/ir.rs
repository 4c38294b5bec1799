//! Systolic plan representation and executor.
//!
//! A plan is the four-tuple (operations, dependencies, inputs, outputs) seen
//! from one warp. Operations and dependencies are folded into an ordered list
//! of [`Stage`]s: each stage first receives the previous partial sum from the
//! lane `shift` positions below (a `shuffle_up`), then every lane applies
//!
//! ```text
//! s <- ctrl(r (x) x) (+) s
//! ```
//!
//! where `r` is the stage coefficient, `x` is the lane's operand and `ctrl`
//! zeroes the contribution of lanes whose mask bit is false.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SsamError};
use crate::scalar::Scalar;
use crate::warp::{check_lane_count, WarpState};

/// The (⊗, ⊕) pair applied by a stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    /// ⊗ = ×, ⊕ = ×
    Mul,
    /// ⊗ = +, ⊕ = +
    Add,
    /// ⊗ = ×, ⊕ = + (fused multiply-add)
    Mad,
    /// Moves the partial sum without computing.
    Copy,
}

impl OpKind {
    #[inline]
    fn combine<T: Scalar>(self, r: T, x: T) -> T {
        match self {
            OpKind::Mul | OpKind::Mad => r.mul(x),
            OpKind::Add => r.add(x),
            OpKind::Copy => T::zero(),
        }
    }

    #[inline]
    fn accumulate<T: Scalar>(self, e: T, s: T) -> T {
        match self {
            OpKind::Mul => e.mul(s),
            OpKind::Add | OpKind::Mad => e.add(s),
            OpKind::Copy => s,
        }
    }

    /// A zero contribution leaves the partial sum unchanged.
    fn zero_is_neutral(self) -> bool {
        !matches!(self, OpKind::Mul)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoeffSource<T> {
    /// Index into the plan's shared-memory weight table.
    Broadcast(usize),
    Immediate(T),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operand {
    /// Register-cache column, offset by the sliding-window position.
    Register(usize),
    /// The lane's own partial sum as it was before this stage's shuffle.
    Partial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage<T> {
    pub op_kind: OpKind,
    pub coeff_source: CoeffSource<T>,
    pub operand: Operand,
    pub shift: usize,
    pub ctrl_mask: Vec<bool>,
}

impl<T: Scalar> Stage<T> {
    /// Whether the stage issues an arithmetic instruction. A stage whose
    /// mask is all false contributes nothing and is elided, unless its ⊕
    /// would turn the zero contribution into a visible change.
    pub fn issues_arithmetic(&self) -> bool {
        match self.op_kind {
            OpKind::Copy => false,
            op if op.zero_is_neutral() => self.ctrl_mask.iter().any(|&b| b),
            _ => true,
        }
    }

    pub fn reads_shared_memory(&self) -> bool {
        self.issues_arithmetic() && matches!(self.coeff_source, CoeffSource::Broadcast(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccumulatorInit {
    Zero,
    Register(usize),
}

/// X: how grid data reaches the warp and how partial sums start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputBinding {
    /// Grid rows loaded into register columns `0..rows`.
    pub rows: usize,
    pub init: AccumulatorInit,
}

/// Y: lanes `first_lane..lane_count` hold valid results after execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputBinding {
    pub first_lane: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsamPlan<T> {
    pub lane_count: usize,
    pub cache_width: usize,
    /// Shared-memory table read by `CoeffSource::Broadcast` stages.
    pub weights: Vec<T>,
    pub stages: Vec<Stage<T>>,
    pub input: InputBinding,
    pub output: OutputBinding,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// `None` for plan-level violations.
    pub stage: Option<usize>,
    pub invariant: &'static str,
    pub detail: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.stage {
            Some(i) => write!(f, "stage {i}: {} ({})", self.invariant, self.detail),
            None => write!(f, "plan: {} ({})", self.invariant, self.detail),
        }
    }
}

/// Checks every plan invariant; one diagnostic per violation.
pub fn validate<T: Scalar>(plan: &SsamPlan<T>) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut plan_diag = |invariant, detail: String| {
        out.push(Diagnostic {
            stage: None,
            invariant,
            detail,
        })
    };
    if check_lane_count(plan.lane_count).is_err() {
        plan_diag(
            "lane-count",
            format!("{} is not a power of two in 2..=64", plan.lane_count),
        );
    }
    if plan.cache_width == 0 {
        plan_diag("cache-width", "register cache has no columns".into());
    }
    if plan.stages.is_empty() {
        plan_diag("non-empty", "plan has no stages".into());
    }
    if plan.input.rows > plan.cache_width {
        plan_diag(
            "input-rows",
            format!(
                "{} rows exceed cache width {}",
                plan.input.rows, plan.cache_width
            ),
        );
    }
    if let AccumulatorInit::Register(r) = plan.input.init {
        if r >= plan.cache_width {
            plan_diag(
                "register-bound",
                format!("initial register {r} >= {}", plan.cache_width),
            );
        }
    }
    if plan.output.first_lane >= plan.lane_count {
        plan_diag(
            "output-lanes",
            format!(
                "first output lane {} >= {}",
                plan.output.first_lane, plan.lane_count
            ),
        );
    }

    for (i, stage) in plan.stages.iter().enumerate() {
        let mut diag = |invariant, detail: String| {
            out.push(Diagnostic {
                stage: Some(i),
                invariant,
                detail,
            })
        };
        if stage.shift >= plan.lane_count {
            diag(
                "lane-shift",
                format!(
                    "shift {} leaves a warp of {} lanes",
                    stage.shift, plan.lane_count
                ),
            );
        }
        if stage.ctrl_mask.len() != plan.lane_count {
            diag(
                "ctrl-mask",
                format!(
                    "mask has {} entries, expected {}",
                    stage.ctrl_mask.len(),
                    plan.lane_count
                ),
            );
        }
        if let Operand::Register(r) = stage.operand {
            if r >= plan.cache_width {
                diag(
                    "register-bound",
                    format!("register {r} >= cache width {}", plan.cache_width),
                );
            }
        }
        if let CoeffSource::Broadcast(idx) = stage.coeff_source {
            if idx >= plan.weights.len() {
                diag(
                    "weight-index",
                    format!(
                        "broadcast index {idx} outside table of {}",
                        plan.weights.len()
                    ),
                );
            }
        }
    }
    out
}

impl<T: Scalar> SsamPlan<T> {
    pub fn validate(&self) -> Vec<Diagnostic> {
        validate(self)
    }

    pub fn shuffle_count(&self) -> usize {
        self.stages.iter().filter(|s| s.shift > 0).count()
    }

    fn max_register(&self) -> usize {
        self.stages
            .iter()
            .filter_map(|s| match s.operand {
                Operand::Register(r) => Some(r),
                Operand::Partial => None,
            })
            .max()
            .unwrap_or(0)
    }

    /// Largest sliding-window offset the plan can run at.
    pub fn max_window_offset(&self) -> usize {
        self.cache_width - 1 - self.max_register()
    }
}

/// Validates the plan, then runs it on a warp whose cache is already loaded.
/// Returns the accumulators of the output lanes.
pub fn execute<T: Scalar>(plan: &SsamPlan<T>, warp: &mut WarpState<T>) -> Result<Vec<T>> {
    execute_window(plan, warp, 0)
}

/// As [`execute`], with every register operand displaced by `offset`
/// (the sliding-window position).
pub fn execute_window<T: Scalar>(
    plan: &SsamPlan<T>,
    warp: &mut WarpState<T>,
    offset: usize,
) -> Result<Vec<T>> {
    let diags = validate(plan);
    if !diags.is_empty() {
        return Err(SsamError::InvalidPlan(diags));
    }
    run_validated(plan, warp, offset)?;
    Ok(warp.accumulators()[plan.output.first_lane..].to_vec())
}

/// Executor core. The caller guarantees `validate(plan)` is empty; the warp
/// shape and window offset are still checked.
pub(crate) fn run_validated<T: Scalar>(
    plan: &SsamPlan<T>,
    warp: &mut WarpState<T>,
    offset: usize,
) -> Result<()> {
    if warp.lane_count() != plan.lane_count || warp.cache_width() != plan.cache_width {
        return Err(invalid(format!(
            "plan expects a {}x{} warp, got {}x{}",
            plan.lane_count,
            plan.cache_width,
            warp.lane_count(),
            warp.cache_width()
        )));
    }
    if offset > plan.max_window_offset() {
        return Err(invalid(format!(
            "window offset {offset} reads past register cache of width {}",
            plan.cache_width
        )));
    }

    match plan.input.init {
        AccumulatorInit::Zero => warp.reset_accumulators(),
        AccumulatorInit::Register(r) => warp.set_accumulators_from_register(r),
    }

    for stage in &plan.stages {
        let issues = stage.issues_arithmetic();
        if issues && stage.operand == Operand::Partial {
            let view = warp.split_for_stage();
            view.scratch.copy_from_slice(view.acc);
        }
        if stage.shift > 0 {
            warp.shuffle_accumulators_up(stage.shift)?;
        }
        if !issues {
            continue;
        }
        let r = match stage.coeff_source {
            CoeffSource::Broadcast(idx) => warp.broadcast_read(&plan.weights, idx)?,
            CoeffSource::Immediate(v) => v,
        };
        warp.count_mad();
        let view = warp.split_for_stage();
        let op = stage.op_kind;
        for (lane, s) in view.acc.iter_mut().enumerate() {
            let e = if stage.ctrl_mask[lane] {
                let x = match stage.operand {
                    Operand::Register(reg) => view.cache[lane * view.cache_width + reg + offset],
                    Operand::Partial => view.scratch[lane],
                };
                op.combine(r, x)
            } else {
                T::zero()
            };
            *s = op.accumulate(e, *s);
        }
    }
    Ok(())
}

/// One-dimensional convolution of a warp window with `filter`.
///
/// Stage `j` multiplies register 0 by `filter[M-1-j]` and then hands its
/// partial sum one lane up, so lane `l` ends with `sum_i filter[i] * x[l-i]`.
/// Lanes `M-1..` hold complete results.
pub fn build_conv1d_plan<T: Scalar>(filter: &[T], lane_count: usize) -> Result<SsamPlan<T>> {
    check_lane_count(lane_count)?;
    let m = filter.len();
    if m == 0 || m > lane_count {
        return Err(invalid(format!(
            "filter length {m} must be between 1 and the lane count {lane_count}"
        )));
    }
    let weights: Vec<T> = filter.iter().rev().copied().collect();
    let stages = (0..m)
        .map(|j| Stage {
            op_kind: OpKind::Mad,
            coeff_source: CoeffSource::Broadcast(j),
            operand: Operand::Register(0),
            shift: usize::from(j > 0),
            ctrl_mask: vec![true; lane_count],
        })
        .collect();
    Ok(SsamPlan {
        lane_count,
        cache_width: 1,
        weights,
        stages,
        input: InputBinding {
            rows: 1,
            init: AccumulatorInit::Zero,
        },
        output: OutputBinding { first_lane: m - 1 },
    })
}

/// Kogge–Stone inclusive prefix sum over the lanes of one warp.
pub fn build_scan_plan<T: Scalar>(lane_count: usize) -> Result<SsamPlan<T>> {
    check_lane_count(lane_count)?;
    let stages = std::iter::successors(Some(1usize), |d| Some(d * 2))
        .take_while(|&d| d < lane_count)
        .map(|d| Stage {
            op_kind: OpKind::Mad,
            coeff_source: CoeffSource::Immediate(T::one()),
            operand: Operand::Partial,
            shift: d,
            ctrl_mask: (0..lane_count).map(|lane| lane >= d).collect(),
        })
        .collect();
    Ok(SsamPlan {
        lane_count,
        cache_width: 1,
        weights: Vec::new(),
        stages,
        input: InputBinding {
            rows: 1,
            init: AccumulatorInit::Register(0),
        },
        output: OutputBinding { first_lane: 0 },
    })
}

/// Where window-plan coefficients live.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoeffPlacement {
    /// Shared-memory table, read by broadcast (convolution filters).
    SharedMemory,
    /// Kernel arguments (stencil coefficients).
    Immediate,
}

/// Builds the plan for one sliding-window step of a two-dimensional tap
/// pattern. `columns[j][t]` is the coefficient applied to register `t` in
/// column stage `j`; `None` marks a tap that is absent and whose stage is
/// masked off. Each column after the first starts with a one-lane shift, so
/// lane `l` finishes with the contributions of lanes `l-(m-1)..=l`.
pub fn build_window_plan<T: Scalar>(
    columns: &[Vec<Option<T>>],
    placement: CoeffPlacement,
    lane_count: usize,
    cache_width: usize,
) -> Result<SsamPlan<T>> {
    check_lane_count(lane_count)?;
    let m = columns.len();
    let n = columns.first().map_or(0, Vec::len);
    if m == 0 || n == 0 || columns.iter().any(|c| c.len() != n) {
        return Err(invalid("tap pattern must be a non-empty rectangle"));
    }
    if m > lane_count {
        return Err(invalid(format!(
            "{m} tap columns do not fit in a warp of {lane_count} lanes"
        )));
    }
    if n > cache_width {
        return Err(invalid(format!(
            "{n} tap rows exceed cache width {cache_width}"
        )));
    }
    let mut weights = Vec::new();
    let mut stages = Vec::with_capacity(m * n);
    for (j, column) in columns.iter().enumerate() {
        for (t, tap) in column.iter().enumerate() {
            let coeff = tap.unwrap_or_else(T::zero);
            let coeff_source = match placement {
                CoeffPlacement::SharedMemory => {
                    weights.push(coeff);
                    CoeffSource::Broadcast(weights.len() - 1)
                }
                CoeffPlacement::Immediate => CoeffSource::Immediate(coeff),
            };
            stages.push(Stage {
                op_kind: OpKind::Mad,
                coeff_source,
                operand: Operand::Register(t),
                shift: usize::from(j > 0 && t == 0),
                ctrl_mask: vec![tap.is_some(); lane_count],
            });
        }
    }
    Ok(SsamPlan {
        lane_count,
        cache_width,
        weights,
        stages,
        input: InputBinding {
            rows: cache_width,
            init: AccumulatorInit::Zero,
        },
        output: OutputBinding { first_lane: m - 1 },
    })
}

// ---------------------------------------------------------------------------
// Text serialization: one JSON record per line, a header then one stage each.

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum PlanRecord<T> {
    Plan {
        lane_count: usize,
        cache_width: usize,
        weights: Vec<T>,
        input: InputBinding,
        output: OutputBinding,
        stage_count: usize,
    },
    Stage {
        index: usize,
        op_kind: OpKind,
        coeff_source: CoeffSource<T>,
        operand: Operand,
        shift: usize,
        ctrl_mask: String,
    },
}

fn mask_to_string(mask: &[bool]) -> String {
    mask.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

fn mask_from_string(s: &str) -> Result<Vec<bool>> {
    s.chars()
        .map(|c| match c {
            '1' => Ok(true),
            '0' => Ok(false),
            other => Err(SsamError::Format(format!("ctrl mask character `{other}`"))),
        })
        .collect()
}

impl<T: Scalar> SsamPlan<T> {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let header: PlanRecord<T> = PlanRecord::Plan {
            lane_count: self.lane_count,
            cache_width: self.cache_width,
            weights: self.weights.clone(),
            input: self.input,
            output: self.output,
            stage_count: self.stages.len(),
        };
        out.push_str(&serde_json::to_string(&header).expect("plan header serializes"));
        out.push('\n');
        for (index, s) in self.stages.iter().enumerate() {
            let rec: PlanRecord<T> = PlanRecord::Stage {
                index,
                op_kind: s.op_kind,
                coeff_source: s.coeff_source,
                operand: s.operand,
                shift: s.shift,
                ctrl_mask: mask_to_string(&s.ctrl_mask),
            };
            out.push_str(&serde_json::to_string(&rec).expect("stage serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let parse = |line: &str| -> Result<PlanRecord<T>> {
            serde_json::from_str(line).map_err(|e| SsamError::Format(e.to_string()))
        };
        let header = lines
            .next()
            .ok_or_else(|| SsamError::Format("empty plan document".into()))?;
        let PlanRecord::Plan {
            lane_count,
            cache_width,
            weights,
            input,
            output,
            stage_count,
        } = parse(header)?
        else {
            return Err(SsamError::Format(
                "first record must be the plan header".into(),
            ));
        };
        let mut stages = Vec::with_capacity(stage_count);
        for line in lines {
            match parse(line)? {
                PlanRecord::Stage {
                    index,
                    op_kind,
                    coeff_source,
                    operand,
                    shift,
                    ctrl_mask,
                } => {
                    if index != stages.len() {
                        return Err(SsamError::Format(format!(
                            "stage record {index} out of order (expected {})",
                            stages.len()
                        )));
                    }
                    stages.push(Stage {
                        op_kind,
                        coeff_source,
                        operand,
                        shift,
                        ctrl_mask: mask_from_string(&ctrl_mask)?,
                    });
                }
                PlanRecord::Plan { .. } => {
                    return Err(SsamError::Format("duplicate plan header".into()))
                }
            }
        }
        if stages.len() != stage_count {
            return Err(SsamError::Format(format!(
                "header announces {stage_count} stages, found {}",
                stages.len()
            )));
        }
        Ok(SsamPlan {
            lane_count,
            cache_width,
            weights,
            stages,
            input,
            output,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn loaded_warp(values: &[i64]) -> WarpState<i64> {
        let mut w = WarpState::new(values.len(), 1).unwrap();
        w.load_rows(&[values]).unwrap();
        w
    }

    /// Independent 1D reference: lane l gets sum_i f[i] * x[l - i].
    fn conv1d_lanes(x: &[i64], f: &[i64]) -> Vec<i64> {
        (0..x.len())
            .map(|l| {
                f.iter()
                    .enumerate()
                    .filter(|(i, _)| *i <= l)
                    .map(|(i, &w)| w * x[l - i])
                    .sum()
            })
            .collect()
    }

    #[test]
    fn identity_plan_returns_cache() {
        let plan = build_conv1d_plan(&[1i64], 32).unwrap();
        assert_eq!(plan.stages.len(), 1);
        let x: Vec<i64> = (0..32).map(|i| i * 3 - 7).collect();
        let mut w = loaded_warp(&x);
        assert_eq!(execute(&plan, &mut w).unwrap(), x);
    }

    #[test]
    fn conv1d_box_on_constant() {
        let plan = build_conv1d_plan(&[1i64, 1, 1], 32).unwrap();
        let mut w = loaded_warp(&[5; 32]);
        let out = execute(&plan, &mut w).unwrap();
        assert_eq!(out.len(), 30);
        assert!(out.iter().all(|&v| v == 15));
    }

    #[test]
    fn conv1d_ramp_matches_reference() {
        let f = [2i64, -1, 3];
        let x: Vec<i64> = (0..32).collect();
        let plan = build_conv1d_plan(&f, 32).unwrap();
        assert!(plan.validate().is_empty());
        let mut w = loaded_warp(&x);
        let out = execute(&plan, &mut w).unwrap();
        assert_eq!(out, conv1d_lanes(&x, &f)[2..]);
        assert_eq!(w.counters().shuffles, 2);
        assert_eq!(w.counters().mads, 3);
        assert_eq!(w.counters().broadcasts, 3);
    }

    #[test]
    fn conv1d_plan_rejects_bad_lengths() {
        assert!(build_conv1d_plan::<i64>(&[], 32).is_err());
        assert!(build_conv1d_plan(&[1i64; 33], 32).is_err());
        assert!(build_conv1d_plan(&[1i64; 32], 32).is_ok());
    }

    #[test]
    fn scan_of_ones() {
        let plan = build_scan_plan::<i64>(32).unwrap();
        assert_eq!(plan.stages.len(), 5);
        let shifts: Vec<usize> = plan.stages.iter().map(|s| s.shift).collect();
        assert_eq!(shifts, vec![1, 2, 4, 8, 16]);
        let mut w = loaded_warp(&[1; 32]);
        let out = execute(&plan, &mut w).unwrap();
        assert_eq!(out, (1..=32).collect::<Vec<i64>>());
        assert_eq!(w.counters().shuffles, 5);
    }

    #[test]
    fn scan_of_indicator() {
        let plan = build_scan_plan::<i64>(32).unwrap();
        for k in [0, 7, 31] {
            let mut e = vec![0; 32];
            e[k] = 1;
            let mut w = loaded_warp(&e);
            let out = execute(&plan, &mut w).unwrap();
            let expected: Vec<i64> = (0..32).map(|i| i64::from(i >= k)).collect();
            assert_eq!(out, expected);
        }
    }

    #[test]
    fn scan_rejects_non_power_of_two() {
        assert!(build_scan_plan::<i64>(24).is_err());
    }

    #[test]
    fn validate_reports_each_violation() {
        let mut plan = build_conv1d_plan(&[1i64, 2, 3], 32).unwrap();
        assert!(validate(&plan).is_empty());

        plan.stages[1].shift = 32;
        let d = validate(&plan);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].stage, Some(1));
        assert_eq!(d[0].invariant, "lane-shift");

        let mut empty = build_conv1d_plan(&[1i64], 32).unwrap();
        empty.stages.clear();
        let d = validate(&empty);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].invariant, "non-empty");

        let mut bad = build_conv1d_plan(&[1i64, 1], 32).unwrap();
        bad.stages[0].operand = Operand::Register(4);
        bad.stages[1].ctrl_mask.pop();
        bad.stages[1].coeff_source = CoeffSource::Broadcast(9);
        let d = validate(&bad);
        assert_eq!(d.len(), 3);
    }

    #[test]
    fn execute_rejects_invalid_plan() {
        let mut plan = build_conv1d_plan(&[1i64, 1], 32).unwrap();
        plan.stages[1].shift = 40;
        let mut w = loaded_warp(&[1; 32]);
        assert!(matches!(
            execute(&plan, &mut w),
            Err(SsamError::InvalidPlan(_))
        ));
        assert_eq!(w.counters().mads, 0);
    }

    #[test]
    fn shuffle_count_equals_shifted_stages() {
        let plan = build_window_plan(
            &[
                vec![Some(1i64), None],
                vec![None, None],
                vec![Some(2), Some(3)],
            ],
            CoeffPlacement::Immediate,
            32,
            4,
        )
        .unwrap();
        let mut w = WarpState::<i64>::new(32, 4).unwrap();
        run_validated(&plan, &mut w, 0).unwrap();
        assert_eq!(w.counters().shuffles as usize, plan.shuffle_count());
        assert_eq!(plan.shuffle_count(), 2);
        // masked taps issue nothing
        assert_eq!(w.counters().mads, 3);
        assert_eq!(w.counters().broadcasts, 0);
    }

    #[test]
    fn window_offset_is_bounded() {
        let plan = build_window_plan(
            &[vec![Some(1i64), Some(1)]],
            CoeffPlacement::SharedMemory,
            32,
            5,
        )
        .unwrap();
        assert_eq!(plan.max_window_offset(), 3);
        let mut w = WarpState::<i64>::new(32, 5).unwrap();
        assert!(run_validated(&plan, &mut w, 3).is_ok());
        assert!(run_validated(&plan, &mut w, 4).is_err());
    }

    #[test]
    fn masked_mul_stage_zeroes_lane() {
        let mut plan = build_scan_plan::<i64>(4).unwrap();
        plan.stages = vec![Stage {
            op_kind: OpKind::Mul,
            coeff_source: CoeffSource::Immediate(2),
            operand: Operand::Partial,
            shift: 0,
            ctrl_mask: vec![true, false, true, false],
        }];
        let mut w = loaded_warp(&[1, 2, 3, 4]);
        // s <- ctrl(2*s) * s
        assert_eq!(execute(&plan, &mut w).unwrap(), vec![2, 0, 18, 0]);
    }

    #[test]
    fn plan_text_roundtrip() {
        let plan = build_window_plan(
            &[vec![Some(0.5f64), None], vec![Some(-1.25), Some(2.0)]],
            CoeffPlacement::SharedMemory,
            16,
            3,
        )
        .unwrap();
        let text = plan.to_text();
        assert_eq!(text.lines().count(), 1 + plan.stages.len());
        assert!(text.lines().nth(1).unwrap().contains("\"op_kind\":\"mad\""));
        assert_eq!(SsamPlan::<f64>::from_text(&text).unwrap(), plan);
        assert!(SsamPlan::<f64>::from_text("").is_err());
    }

    proptest! {
        #[test]
        fn conv1d_plan_equals_reference(
            f in prop::collection::vec(-9i64..10, 1..=8),
            x in prop::collection::vec(-100i64..100, 32),
        ) {
            let plan = build_conv1d_plan(&f, 32).unwrap();
            let mut w = loaded_warp(&x);
            let out = execute(&plan, &mut w).unwrap();
            prop_assert_eq!(&out[..], &conv1d_lanes(&x, &f)[f.len() - 1..]);
        }

        #[test]
        fn scan_plan_equals_running_total(x in prop::collection::vec(-1000i64..1000, 32)) {
            let plan = build_scan_plan::<i64>(32).unwrap();
            let mut w = loaded_warp(&x);
            let out = execute(&plan, &mut w).unwrap();
            let mut total = 0;
            for (i, v) in x.iter().enumerate() {
                total += v;
                prop_assert_eq!(out[i], total);
            }
        }

        #[test]
        fn execution_is_deterministic(x in prop::collection::vec(-50i64..50, 32)) {
            let plan = build_conv1d_plan(&[3i64, -2, 7, 1], 32).unwrap();
            let mut a = loaded_warp(&x);
            let mut b = loaded_warp(&x);
            prop_assert_eq!(execute(&plan, &mut a).unwrap(), execute(&plan, &mut b).unwrap());
            prop_assert_eq!(a.counters(), b.counters());
        }
    }
}
