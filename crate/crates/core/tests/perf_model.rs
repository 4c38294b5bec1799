use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ssam_core::ir::{build_window_plan, CoeffPlacement, CoeffSource, OpKind, Operand, Stage};
use ssam_core::kernels::conv2d;
use ssam_core::perf::{
    builtin_profiles, compare_plans, cost_report, cross_check, dif_smem_reg, latency_reg,
    plan_cycles, sweep_cycles, Cycles,
};
use ssam_core::{FilterSpec, Grid2D, KernelConfig};

fn conv_counts(m: usize, n: usize, p: usize) -> Vec<ssam_core::Counters> {
    let mut rng = ChaCha8Rng::seed_from_u64(m as u64 * 100 + n as u64);
    let g = Grid2D::<i64>::random(96, (n + p - 1).max(40), &mut rng).unwrap();
    let f = FilterSpec::<i64>::random(m, n, &mut rng).unwrap();
    conv2d(
        &g,
        &f,
        &KernelConfig {
            p,
            ..KernelConfig::default()
        },
    )
    .unwrap()
    .warp_counters
}

#[test]
fn cross_check_agrees_with_simulator() {
    let profiles = builtin_profiles();
    for prof in profiles.values() {
        let report = cross_check(&conv_counts(3, 3, 4), 3, 3, 4, prof).unwrap();
        assert_eq!(report.predicted.shuffles, 8);
        assert!(report.agrees(), "{report:?}");
        assert_eq!(report.modeled_latency, Some(latency_reg(3, 3, prof)));
        assert_eq!(report.dif, report.l_smem - report.l_reg);

        let report = cross_check(&conv_counts(1, 6, 2), 1, 6, 2, prof).unwrap();
        assert_eq!(report.counted.unwrap().shuffles, 0);
        assert!(report.agrees());

        let report = cross_check(&conv_counts(20, 20, 4), 20, 20, 4, prof).unwrap();
        assert_eq!(report.counted.unwrap().mads, 1600);
        assert!(report.agrees());
    }
}

#[test]
fn cross_check_flags_a_mismatch() {
    let prof = &builtin_profiles()["P100"];
    let mut counts = conv_counts(3, 3, 4);
    counts[1].shuffles += 1;
    let report = cross_check(&counts, 3, 3, 4, prof).unwrap();
    assert_eq!(report.mismatched_warps, 1);
    assert!(!report.agrees());
    // counts from a different shape disagree everywhere
    let report = cross_check(&conv_counts(3, 3, 4), 3, 4, 4, prof).unwrap();
    assert!(!report.agrees());
}

#[test]
fn report_fields() {
    let prof = &builtin_profiles()["P100"];
    let r = cost_report(3, 3, 4, prof).unwrap();
    assert_eq!(r.dif, Cycles::from_integer(231));
    assert_eq!(r.l_reg, Cycles::from_integer(435));
    assert_eq!(r.hr_rc, Cycles::new(105, 192));
    assert_eq!(r.avg_dif, Cycles::new(-105, 8));
    let r = cost_report(1, 5, 4, prof).unwrap();
    assert_eq!(r.dif, Cycles::from_integer(5) * prof.t_smem_read);
    assert!(cost_report(0, 3, 4, prof).is_err());
}

fn window(columns: Vec<Vec<Option<i64>>>, placement: CoeffPlacement) -> ssam_core::SsamPlan<i64> {
    let n = columns[0].len();
    build_window_plan(&columns, placement, 32, n + 3).unwrap()
}

#[test]
fn redundant_copy_stage_ranks_last() {
    let prof = &builtin_profiles()["V100"];
    let plan = window(vec![vec![Some(1); 3]; 3], CoeffPlacement::SharedMemory);
    let mut padded = plan.clone();
    padded.stages.push(Stage {
        op_kind: OpKind::Copy,
        coeff_source: CoeffSource::Immediate(0),
        operand: Operand::Register(0),
        shift: 0,
        ctrl_mask: vec![true; 32],
    });
    let ranked = compare_plans(&[padded, plan.clone()], prof);
    assert_eq!(ranked[0].index, 1);
    assert_eq!(plan_cycles(&plan, prof), latency_reg(3, 3, prof));

    let ranked = compare_plans(&[plan.clone(), plan.clone(), plan], prof);
    assert_eq!(
        ranked.iter().map(|r| r.index).collect::<Vec<_>>(),
        vec![0, 1, 2]
    );
}

#[test]
fn vertical_mapping_beats_horizontal() {
    let horizontal = window(vec![vec![Some(1)]; 5], CoeffPlacement::Immediate);
    let vertical = window(vec![vec![Some(1); 5]], CoeffPlacement::Immediate);
    for prof in builtin_profiles().values() {
        let ranked = compare_plans(&[horizontal.clone(), vertical.clone()], prof);
        assert_eq!(ranked[0].index, 1, "{}", prof.name);
        assert_eq!(ranked[0].shuffles, 0);
        assert_eq!(ranked[1].shuffles, 4);
    }
}

#[test]
fn dif_positive_and_sweep_monotone() {
    for prof in builtin_profiles().values() {
        let mut last = None;
        for k in 2..=20 {
            assert!(dif_smem_reg(k, k, prof) > Cycles::from_integer(0));
            let cells: usize = 512 * 512;
            let warps = cells.div_ceil((32 - k + 1) * 4);
            let c = sweep_cycles(warps, k, k, 4, prof);
            if let Some(prev) = last {
                assert!(c > prev);
            }
            last = Some(c);
        }
    }
}
