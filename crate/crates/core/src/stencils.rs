//! Sparse stencil descriptions and the named benchmark shapes.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tap<T> {
    /// (dx, dy, dz); dz is 0 for 2D stencils.
    pub offset: [i32; 3],
    pub coeff: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StencilSpec<T> {
    name: Option<String>,
    dims: u8,
    taps: Vec<Tap<T>>,
    order: usize,
    fpp: Option<u32>,
}

impl<T: Scalar> StencilSpec<T> {
    pub fn new(dims: u8, taps: Vec<Tap<T>>) -> Result<Self> {
        if dims != 2 && dims != 3 {
            return Err(invalid(format!("stencils are 2D or 3D, got {dims}D")));
        }
        if taps.is_empty() {
            return Err(invalid("stencil has no taps"));
        }
        let mut seen = HashSet::new();
        for tap in &taps {
            if !seen.insert(tap.offset) {
                return Err(invalid(format!(
                    "duplicate stencil offset {:?}",
                    tap.offset
                )));
            }
            if dims == 2 && tap.offset[2] != 0 {
                return Err(invalid(format!(
                    "2D stencil tap {:?} has a z offset",
                    tap.offset
                )));
            }
        }
        let order = taps
            .iter()
            .flat_map(|t| t.offset)
            .map(|c| c.unsigned_abs() as usize)
            .max()
            .unwrap_or(0);
        Ok(StencilSpec {
            name: None,
            dims,
            taps,
            order,
            fpp: None,
        })
    }

    /// 2D stencil from `(dx, dy, coeff)` triples.
    pub fn from_2d(taps: &[(i32, i32, T)]) -> Result<Self> {
        Self::new(
            2,
            taps.iter()
                .map(|&(dx, dy, coeff)| Tap {
                    offset: [dx, dy, 0],
                    coeff,
                })
                .collect(),
        )
    }

    /// 3D stencil from `(dx, dy, dz, coeff)` tuples.
    pub fn from_3d(taps: &[(i32, i32, i32, T)]) -> Result<Self> {
        Self::new(
            3,
            taps.iter()
                .map(|&(dx, dy, dz, coeff)| Tap {
                    offset: [dx, dy, dz],
                    coeff,
                })
                .collect(),
        )
    }

    /// The five-point diffusion stencil with named coefficients.
    pub fn five_point(west: T, north: T, current: T, south: T, east: T) -> Self {
        Self::from_2d(&[
            (-1, 0, west),
            (0, -1, north),
            (0, 0, current),
            (0, 1, south),
            (1, 0, east),
        ])
        .expect("five-point offsets are distinct")
    }

    pub fn dims(&self) -> u8 {
        self.dims
    }

    pub fn taps(&self) -> &[Tap<T>] {
        &self.taps
    }

    /// Largest absolute offset component (the stencil order `k`).
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn fpp(&self) -> Option<u32> {
        self.fpp
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn coeff_at(&self, offset: [i32; 3]) -> Option<T> {
        self.taps
            .iter()
            .find(|t| t.offset == offset)
            .map(|t| t.coeff)
    }
}

/// The stencil benchmark suite: star, box and Poisson shapes of orders 1–6.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Benchmark {
    D2Pt5,
    D2Pt9,
    D2Pt13,
    D2Pt17,
    D2Pt21,
    D2S25,
    D2Pt25,
    D2Pt64,
    D2Pt81,
    D2Pt121,
    D3Pt7,
    D3Pt13,
    D3Pt27,
    D3Pt125,
    Poisson,
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    Star,
    /// Dense box with every component in `lo..=hi`.
    Box {
        lo: i32,
        hi: i32,
    },
    /// Centre, faces and edges of the 3×3×3 cube.
    Poisson,
}

impl Benchmark {
    pub const ALL: [Benchmark; 15] = [
        Benchmark::D2Pt5,
        Benchmark::D2Pt9,
        Benchmark::D2Pt13,
        Benchmark::D2Pt17,
        Benchmark::D2Pt21,
        Benchmark::D2S25,
        Benchmark::D2Pt25,
        Benchmark::D2Pt64,
        Benchmark::D2Pt81,
        Benchmark::D2Pt121,
        Benchmark::D3Pt7,
        Benchmark::D3Pt13,
        Benchmark::D3Pt27,
        Benchmark::D3Pt125,
        Benchmark::Poisson,
    ];

    /// (name, dims, order k, FLOPs per point, shape)
    fn row(self) -> (&'static str, u8, usize, u32, Shape) {
        use Benchmark::*;
        match self {
            D2Pt5 => ("2d5pt", 2, 1, 9, Shape::Star),
            D2Pt9 => ("2d9pt", 2, 2, 17, Shape::Star),
            D2Pt13 => ("2d13pt", 2, 3, 25, Shape::Star),
            D2Pt17 => ("2d17pt", 2, 4, 33, Shape::Star),
            D2Pt21 => ("2d21pt", 2, 5, 41, Shape::Star),
            D2S25 => ("2ds25pt", 2, 6, 49, Shape::Star),
            D2Pt25 => ("2d25pt", 2, 2, 33, Shape::Box { lo: -2, hi: 2 }),
            D2Pt64 => ("2d64pt", 2, 4, 73, Shape::Box { lo: -4, hi: 3 }),
            D2Pt81 => ("2d81pt", 2, 4, 95, Shape::Box { lo: -4, hi: 4 }),
            D2Pt121 => ("2d121pt", 2, 5, 241, Shape::Box { lo: -5, hi: 5 }),
            D3Pt7 => ("3d7pt", 3, 1, 13, Shape::Star),
            D3Pt13 => ("3d13pt", 3, 2, 25, Shape::Star),
            D3Pt27 => ("3d27pt", 3, 1, 30, Shape::Box { lo: -1, hi: 1 }),
            D3Pt125 => ("3d125pt", 3, 2, 130, Shape::Box { lo: -2, hi: 2 }),
            Poisson => ("poisson", 3, 1, 21, Shape::Poisson),
        }
    }

    pub fn name(self) -> &'static str {
        self.row().0
    }

    pub fn dims(self) -> u8 {
        self.row().1
    }

    pub fn order(self) -> usize {
        self.row().2
    }

    pub fn fpp(self) -> u32 {
        self.row().3
    }

    pub fn offsets(self) -> Vec<[i32; 3]> {
        let (_, dims, k, _, shape) = self.row();
        let k = k as i32;
        let zr = if dims == 3 { 1 } else { 0 };
        match shape {
            Shape::Star => {
                let mut out = vec![[0, 0, 0]];
                for axis in 0..dims as usize {
                    for d in 1..=k {
                        for sign in [-1, 1] {
                            let mut o = [0; 3];
                            o[axis] = sign * d;
                            out.push(o);
                        }
                    }
                }
                out
            }
            Shape::Box { lo, hi } => {
                let zs = if dims == 3 { lo..=hi } else { 0..=0 };
                let mut out = Vec::new();
                for dz in zs {
                    for dy in lo..=hi {
                        for dx in lo..=hi {
                            out.push([dx, dy, dz]);
                        }
                    }
                }
                out
            }
            Shape::Poisson => {
                let mut out = Vec::new();
                for dz in -zr..=zr {
                    for dy in -1..=1 {
                        for dx in -1..=1 {
                            let nonzero = [dx, dy, dz].iter().filter(|&&c| c != 0).count();
                            if nonzero <= 2 {
                                out.push([dx, dy, dz]);
                            }
                        }
                    }
                }
                out
            }
        }
    }

    /// Integer tap weight in `1..=4`. Deliberately asymmetric so that a
    /// mirrored or transposed mapping cannot pass an oracle comparison.
    fn weight(offset: [i32; 3]) -> i64 {
        let [dx, dy, dz] = offset;
        1 + ((dx + 5) + 3 * (dy + 7) + 5 * (dz + 11)).rem_euclid(4) as i64
    }

    /// Stencil with this benchmark's shape. Integer mode uses the raw
    /// weights; floating modes normalise them to sum to one so iteration
    /// stays bounded.
    pub fn spec<T: Scalar>(self) -> StencilSpec<T> {
        let offsets = self.offsets();
        let total: i64 = offsets.iter().map(|&o| Self::weight(o)).sum();
        let taps = offsets
            .into_iter()
            .map(|offset| {
                let w = Self::weight(offset);
                let coeff = if T::MODE == crate::scalar::ScalarMode::Int {
                    T::from_i64(w)
                } else {
                    T::from_f64(w as f64 / total as f64)
                };
                Tap { offset, coeff }
            })
            .collect();
        let mut spec = StencilSpec::new(self.dims(), taps).expect("benchmark shapes are valid");
        debug_assert_eq!(spec.order, self.order());
        spec.name = Some(self.name().to_string());
        spec.fpp = Some(self.fpp());
        spec
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Benchmark {
    type Err = crate::error::SsamError;

    fn from_str(s: &str) -> Result<Self> {
        Benchmark::ALL
            .iter()
            .copied()
            .find(|b| b.name() == s)
            .ok_or_else(|| invalid(format!("unknown stencil benchmark `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_counts_match_names() {
        let expected = [5, 9, 13, 17, 21, 25, 25, 64, 81, 121, 7, 13, 27, 125, 19];
        for (b, n) in Benchmark::ALL.iter().zip(expected) {
            assert_eq!(b.offsets().len(), n, "{b}");
        }
    }

    #[test]
    fn orders_and_fpp_are_consistent() {
        for b in Benchmark::ALL {
            let s = b.spec::<f64>();
            assert_eq!(s.order(), b.order(), "{b}");
            assert_eq!(s.fpp(), Some(b.fpp()));
            assert_eq!(s.dims(), b.dims());
            let sum: f64 = s.taps().iter().map(|t| t.coeff).sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn star_stencils_have_two_n_minus_one_flops() {
        for b in [
            Benchmark::D2Pt5,
            Benchmark::D2Pt9,
            Benchmark::D2Pt121,
            Benchmark::D3Pt13,
        ] {
            assert_eq!(b.fpp() as usize, 2 * b.offsets().len() - 1, "{b}");
        }
    }

    #[test]
    fn duplicate_offsets_rejected() {
        assert!(StencilSpec::from_2d(&[(0, 0, 1.0), (0, 0, 2.0)]).is_err());
        assert!(StencilSpec::new(
            2,
            vec![Tap {
                offset: [0, 0, 1],
                coeff: 1.0
            }]
        )
        .is_err());
    }

    #[test]
    fn parse_names() {
        assert_eq!("2ds25pt".parse::<Benchmark>().unwrap(), Benchmark::D2S25);
        assert_eq!("poisson".parse::<Benchmark>().unwrap(), Benchmark::Poisson);
        assert!("2d6pt".parse::<Benchmark>().is_err());
    }
}
