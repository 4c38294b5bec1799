//! Scalar element types the simulator can run in.
//!
//! A run picks one mode for every lane of every warp. Integer mode uses
//! wrapping arithmetic so results are independent of summation order, which
//! lets kernel outputs be compared bit-for-bit against the oracles.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::SsamError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarMode {
    F32,
    F64,
    Int,
}

impl ScalarMode {
    /// Relative tolerance for kernel-vs-oracle comparisons, `None` when the
    /// comparison must be exact.
    pub fn tolerance(self) -> Option<f64> {
        match self {
            ScalarMode::F32 => Some(1e-5),
            ScalarMode::F64 => Some(1e-12),
            ScalarMode::Int => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScalarMode::F32 => "f32",
            ScalarMode::F64 => "f64",
            ScalarMode::Int => "int",
        }
    }
}

impl fmt::Display for ScalarMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScalarMode {
    type Err = SsamError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "f32" | "float" | "single" => Ok(ScalarMode::F32),
            "f64" | "double" => Ok(ScalarMode::F64),
            "int" | "i64" => Ok(ScalarMode::Int),
            other => Err(SsamError::InvalidArgument(format!(
                "unknown precision `{other}` (expected f32, f64 or int)"
            ))),
        }
    }
}

/// Element type held in lane registers.
pub trait Scalar:
    Copy + Default + PartialEq + fmt::Debug + Send + Sync + Serialize + DeserializeOwned + 'static
{
    const MODE: ScalarMode;
    /// Size in bytes of the little-endian encoding.
    const BYTES: usize;

    /// Accumulation type used by the oracles.
    type Wide: Scalar;

    fn zero() -> Self;
    fn one() -> Self;
    fn add(self, other: Self) -> Self;
    fn mul(self, other: Self) -> Self;
    fn from_f64(v: f64) -> Self;
    fn from_i64(v: i64) -> Self;
    fn to_f64(self) -> f64;
    fn widen(self) -> Self::Wide;
    /// Rounds an accumulator of the wide type back to this type.
    fn narrow(wide: Self::Wide) -> Self;

    fn write_le(self, out: &mut Vec<u8>);
    /// `bytes` must hold exactly `Self::BYTES` bytes.
    fn read_le(bytes: &[u8]) -> Self;

    /// Draws a test value. Integers come from a small range so sums of a few
    /// hundred products stay far from the wrapping boundary.
    fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self;

    #[inline]
    fn mad(self, a: Self, b: Self) -> Self {
        self.add(a.mul(b))
    }
}

impl Scalar for f32 {
    const MODE: ScalarMode = ScalarMode::F32;
    const BYTES: usize = 4;
    type Wide = f64;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    #[inline]
    fn add(self, other: Self) -> Self {
        self + other
    }
    #[inline]
    fn mul(self, other: Self) -> Self {
        self * other
    }
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn from_i64(v: i64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn widen(self) -> f64 {
        self as f64
    }
    fn narrow(wide: f64) -> Self {
        wide as f32
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
    fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.gen_range(0.0f32..1.0)
    }
}

impl Scalar for f64 {
    const MODE: ScalarMode = ScalarMode::F64;
    const BYTES: usize = 8;
    type Wide = f64;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    #[inline]
    fn add(self, other: Self) -> Self {
        self + other
    }
    #[inline]
    fn mul(self, other: Self) -> Self {
        self * other
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn from_i64(v: i64) -> Self {
        v as f64
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn widen(self) -> f64 {
        self
    }
    fn narrow(wide: f64) -> Self {
        wide
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
    fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.gen_range(0.0f64..1.0)
    }
}

impl Scalar for i64 {
    const MODE: ScalarMode = ScalarMode::Int;
    const BYTES: usize = 8;
    type Wide = i64;

    fn zero() -> Self {
        0
    }
    fn one() -> Self {
        1
    }
    #[inline]
    fn add(self, other: Self) -> Self {
        self.wrapping_add(other)
    }
    #[inline]
    fn mul(self, other: Self) -> Self {
        self.wrapping_mul(other)
    }
    fn from_f64(v: f64) -> Self {
        v.round() as i64
    }
    fn from_i64(v: i64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn widen(self) -> i64 {
        self
    }
    fn narrow(wide: i64) -> Self {
        wide
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        i64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
    fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.gen_range(-128..=127)
    }
}
