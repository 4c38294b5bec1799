//! Warp-synchronous lane machine.
//!
//! A [`WarpState`] holds one row of `C` cached registers per lane plus a
//! per-lane accumulator (the partial sum that travels between lanes). Every
//! warp-wide primitive bumps an instruction counter so analytical formulas
//! can be checked against what was actually executed.

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Lanes per warp on every NVIDIA generation.
pub const WARP_SIZE: usize = 32;

/// Executed-instruction tally. Each field counts warp-wide instructions
/// except the global load/store fields, which count elements.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Counters {
    /// Arithmetic instructions (mad, mul, add share one latency class).
    pub mads: u64,
    pub shuffles: u64,
    pub broadcasts: u64,
    pub global_loads: u64,
    pub global_stores: u64,
}

impl Counters {
    pub fn is_monotone_from(&self, earlier: &Counters) -> bool {
        self.mads >= earlier.mads
            && self.shuffles >= earlier.shuffles
            && self.broadcasts >= earlier.broadcasts
            && self.global_loads >= earlier.global_loads
            && self.global_stores >= earlier.global_stores
    }

    /// Field-wise difference. Panics if `earlier` is not a prefix of `self`.
    pub fn since(&self, earlier: &Counters) -> Counters {
        assert!(self.is_monotone_from(earlier), "counters went backwards");
        Counters {
            mads: self.mads - earlier.mads,
            shuffles: self.shuffles - earlier.shuffles,
            broadcasts: self.broadcasts - earlier.broadcasts,
            global_loads: self.global_loads - earlier.global_loads,
            global_stores: self.global_stores - earlier.global_stores,
        }
    }
}

impl Add for Counters {
    type Output = Counters;

    fn add(self, rhs: Counters) -> Counters {
        Counters {
            mads: self.mads + rhs.mads,
            shuffles: self.shuffles + rhs.shuffles,
            broadcasts: self.broadcasts + rhs.broadcasts,
            global_loads: self.global_loads + rhs.global_loads,
            global_stores: self.global_stores + rhs.global_stores,
        }
    }
}

impl AddAssign for Counters {
    fn add_assign(&mut self, rhs: Counters) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for Counters {
    fn sum<I: Iterator<Item = Counters>>(iter: I) -> Counters {
        iter.fold(Counters::default(), Add::add)
    }
}

/// Checks the lane-count invariant: a power of two in `2..=64`.
pub fn check_lane_count(lane_count: usize) -> Result<()> {
    if !(2..=64).contains(&lane_count) || !lane_count.is_power_of_two() {
        return Err(invalid(format!(
            "lane count {lane_count} must be a power of two between 2 and 64"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct WarpState<T> {
    lane_count: usize,
    cache_width: usize,
    /// Lane-major: register `r` of lane `l` lives at `l * cache_width + r`.
    cache: Vec<T>,
    acc: Vec<T>,
    scratch: Vec<T>,
    counters: Counters,
}

impl<T: Scalar> WarpState<T> {
    pub fn new(lane_count: usize, cache_width: usize) -> Result<Self> {
        check_lane_count(lane_count)?;
        if cache_width == 0 {
            return Err(invalid("register cache needs at least one column"));
        }
        Ok(WarpState {
            lane_count,
            cache_width,
            cache: vec![T::zero(); lane_count * cache_width],
            acc: vec![T::zero(); lane_count],
            scratch: vec![T::zero(); lane_count],
            counters: Counters::default(),
        })
    }

    pub fn lane_count(&self) -> usize {
        self.lane_count
    }

    pub fn cache_width(&self) -> usize {
        self.cache_width
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    pub fn accumulators(&self) -> &[T] {
        &self.acc
    }

    pub fn register(&self, lane: usize, reg: usize) -> T {
        self.cache[lane * self.cache_width + reg]
    }

    /// One register column across all lanes.
    pub fn register_column(&self, reg: usize) -> Vec<T> {
        (0..self.lane_count)
            .map(|l| self.register(l, reg))
            .collect()
    }

    pub fn reset_accumulators(&mut self) {
        self.acc.fill(T::zero());
    }

    pub(crate) fn set_accumulators_from_register(&mut self, reg: usize) {
        for lane in 0..self.lane_count {
            self.acc[lane] = self.cache[lane * self.cache_width + reg];
        }
    }

    fn check_len(&self, len: usize, what: &str) -> Result<()> {
        if len != self.lane_count {
            return Err(invalid(format!(
                "{what} has {len} entries, warp has {} lanes",
                self.lane_count
            )));
        }
        Ok(())
    }

    /// `__shfl_up_sync`: lane `i` receives `values[i - delta]`; lanes below
    /// `delta` keep their own value.
    pub fn shuffle_up(&mut self, values: &[T], delta: usize) -> Result<Vec<T>> {
        self.check_len(values.len(), "shuffle operand")?;
        self.check_delta(delta)?;
        self.counters.shuffles += 1;
        Ok((0..self.lane_count)
            .map(|i| {
                if i >= delta {
                    values[i - delta]
                } else {
                    values[i]
                }
            })
            .collect())
    }

    fn check_delta(&self, delta: usize) -> Result<()> {
        if delta >= self.lane_count {
            return Err(invalid(format!(
                "shuffle delta {delta} must be below lane count {}",
                self.lane_count
            )));
        }
        Ok(())
    }

    /// In-place `shuffle_up` of the accumulator vector.
    pub(crate) fn shuffle_accumulators_up(&mut self, delta: usize) -> Result<()> {
        self.check_delta(delta)?;
        self.counters.shuffles += 1;
        if delta > 0 {
            for i in (delta..self.lane_count).rev() {
                self.acc[i] = self.acc[i - delta];
            }
        }
        Ok(())
    }

    /// Every lane reads `table[index]` from shared memory in one broadcast
    /// transaction.
    pub fn broadcast_read(&mut self, table: &[T], index: usize) -> Result<T> {
        let value = *table.get(index).ok_or_else(|| {
            invalid(format!(
                "broadcast index {index} outside weight table of length {}",
                table.len()
            ))
        })?;
        self.counters.broadcasts += 1;
        Ok(value)
    }

    pub fn lane_mad(&mut self, acc: &[T], a: &[T], b: &[T]) -> Result<Vec<T>> {
        self.check_len(acc.len(), "accumulator")?;
        self.check_len(a.len(), "first factor")?;
        self.check_len(b.len(), "second factor")?;
        self.counters.mads += 1;
        Ok(acc
            .iter()
            .zip(a.iter().zip(b))
            .map(|(&s, (&x, &y))| s.mad(x, y))
            .collect())
    }

    /// Fills the register cache from `rows`, one coalesced row load per
    /// register column: register `r` of lane `l` receives `rows[r][l]`.
    pub fn load_rows<R: AsRef<[T]>>(&mut self, rows: &[R]) -> Result<()> {
        if rows.len() != self.cache_width {
            return Err(invalid(format!(
                "block has {} rows, register cache holds {}",
                rows.len(),
                self.cache_width
            )));
        }
        for row in rows {
            self.check_len(row.as_ref().len(), "block row")?;
        }
        for (reg, row) in rows.iter().enumerate() {
            self.load_row(reg, row.as_ref());
        }
        Ok(())
    }

    /// One coalesced load of a grid row into register column `reg`.
    pub(crate) fn load_row(&mut self, reg: usize, row: &[T]) {
        debug_assert_eq!(row.len(), self.lane_count);
        for (lane, &v) in row.iter().enumerate() {
            self.cache[lane * self.cache_width + reg] = v;
        }
        self.counters.global_loads += self.lane_count as u64;
    }

    pub(crate) fn record_stores(&mut self, count: usize) {
        self.counters.global_stores += count as u64;
    }

    pub(crate) fn count_mad(&mut self) {
        self.counters.mads += 1;
    }

    pub(crate) fn split_for_stage(&mut self) -> StageView<'_, T> {
        StageView {
            cache: &self.cache,
            cache_width: self.cache_width,
            acc: &mut self.acc,
            scratch: &mut self.scratch,
        }
    }
}

/// Borrowed view used by the plan executor to update accumulators in place.
pub(crate) struct StageView<'a, T> {
    pub cache: &'a [T],
    pub cache_width: usize,
    pub acc: &'a mut [T],
    pub scratch: &'a mut [T],
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(n: usize) -> Vec<i64> {
        (0..n as i64).collect()
    }

    #[test]
    fn shuffle_identity_for_zero_delta() {
        let mut w = WarpState::<i64>::new(32, 1).unwrap();
        let v: Vec<i64> = (1..=32).map(|x| x * 10).collect();
        assert_eq!(w.shuffle_up(&v, 0).unwrap(), v);
        assert_eq!(w.counters().shuffles, 1);
    }

    #[test]
    fn shuffle_by_one() {
        let mut w = WarpState::<i64>::new(32, 1).unwrap();
        let out = w.shuffle_up(&ramp(32), 1).unwrap();
        let mut expected = vec![0];
        expected.extend(0..31);
        assert_eq!(out, expected);
    }

    #[test]
    fn shuffle_by_31_moves_only_lane_zero() {
        let mut w = WarpState::<i64>::new(32, 1).unwrap();
        let out = w.shuffle_up(&ramp(32), 31).unwrap();
        let mut expected: Vec<i64> = (0..31).collect();
        expected.push(0);
        assert_eq!(out, expected);
    }

    #[test]
    fn shuffle_rejects_full_delta() {
        let mut w = WarpState::<i64>::new(32, 1).unwrap();
        assert!(w.shuffle_up(&ramp(32), 32).is_err());
        assert_eq!(w.counters().shuffles, 0);
    }

    #[test]
    fn shuffle_composition_differs_only_in_lane_one() {
        let mut w = WarpState::<i64>::new(32, 1).unwrap();
        let v: Vec<i64> = (100..132).collect();
        let once = w.shuffle_up(&v, 1).unwrap();
        let twice = w.shuffle_up(&once, 1).unwrap();
        let direct = w.shuffle_up(&v, 2).unwrap();
        let differing: Vec<usize> = (0..32).filter(|&i| twice[i] != direct[i]).collect();
        assert_eq!(differing, vec![1]);
    }

    #[test]
    fn broadcast_reads_are_counted() {
        let mut w = WarpState::<f64>::new(32, 1).unwrap();
        let table = [0.5, 1.5, 2.5];
        assert_eq!(w.broadcast_read(&table, 1).unwrap(), 1.5);
        assert!(w.broadcast_read(&table, 3).is_err());
        let nine: Vec<f64> = (0..9).map(|i| i as f64).collect();
        for i in 0..9 {
            w.broadcast_read(&nine, i).unwrap();
        }
        assert_eq!(w.counters().broadcasts, 10);
    }

    #[test]
    fn lane_mad_arithmetic_and_count() {
        let mut w = WarpState::<i64>::new(32, 1).unwrap();
        let x = ramp(32);
        assert_eq!(w.lane_mad(&vec![0; 32], &x, &vec![1; 32]).unwrap(), x);
        let out = w
            .lane_mad(&vec![1; 32], &vec![2; 32], &vec![3; 32])
            .unwrap();
        assert!(out.iter().all(|&v| v == 7));
        for _ in 0..25 {
            w.lane_mad(&x, &x, &x).unwrap();
        }
        assert_eq!(w.counters().mads, 27);
    }

    #[test]
    fn load_rows_counts_and_roundtrips() {
        let (n, p) = (3, 4);
        let c = n + p - 1;
        assert_eq!(c, 6);
        let mut w = WarpState::<i64>::new(32, c).unwrap();
        let rows: Vec<Vec<i64>> = (0..c)
            .map(|r| (0..32).map(|l| (r * 100 + l) as i64).collect())
            .collect();
        w.load_rows(&rows).unwrap();
        assert_eq!(w.counters().global_loads, 192);
        for (r, row) in rows.iter().enumerate() {
            assert_eq!(&w.register_column(r), row);
        }
        assert!(w.load_rows(&rows[..5]).is_err());
    }

    #[test]
    fn lane_count_must_be_power_of_two() {
        assert!(WarpState::<f32>::new(24, 1).is_err());
        assert!(WarpState::<f32>::new(128, 1).is_err());
        assert!(WarpState::<f32>::new(1, 1).is_err());
        assert!(WarpState::<f32>::new(64, 1).is_ok());
        assert!(WarpState::<f32>::new(32, 0).is_err());
    }

    proptest! {
        #[test]
        fn shuffle_matches_lane_rule(
            values in prop::collection::vec(any::<i64>(), 32),
            delta in 0usize..32,
        ) {
            let mut w = WarpState::<i64>::new(32, 1).unwrap();
            let out = w.shuffle_up(&values, delta).unwrap();
            for i in 0..32 {
                let expected = if i >= delta { values[i - delta] } else { values[i] };
                prop_assert_eq!(out[i], expected);
            }
        }

        #[test]
        fn in_place_shuffle_agrees(
            values in prop::collection::vec(-1000i64..1000, 16),
            delta in 0usize..16,
        ) {
            let mut w = WarpState::<i64>::new(16, 1).unwrap();
            let expected = w.shuffle_up(&values, delta).unwrap();
            w.acc.copy_from_slice(&values);
            w.shuffle_accumulators_up(delta).unwrap();
            prop_assert_eq!(w.accumulators(), &expected[..]);
        }
    }
}
