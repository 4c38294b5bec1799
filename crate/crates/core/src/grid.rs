//! Dense 2D/3D grids, boundary policies and the on-disk formats.
//!
//! Binary layout (little endian):
//!
//! | bytes | field                                          |
//! |-------|------------------------------------------------|
//! | 0..2  | magic `SG`                                     |
//! | 2     | rank (2 or 3)                                  |
//! | 3     | scalar kind: 0 = f32, 1 = f64, 2 = i64         |
//! | 4..16 | three `u32` dims, x fastest; unused dims are 1 |
//!
//! followed by the elements in row-major (x fastest) order.

use std::io::{Read, Write};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SsamError};
use crate::scalar::{Scalar, ScalarMode};

pub const GRID_MAGIC: [u8; 2] = *b"SG";
pub const HEADER_LEN: usize = 16;

/// How reads outside the domain are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    #[default]
    Zero,
    Replicate,
}

impl FromStr for Boundary {
    type Err = SsamError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(Boundary::Zero),
            "replicate" => Ok(Boundary::Replicate),
            other => Err(invalid(format!("unknown boundary policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Scalar> Grid2D<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid(format!(
                "grid dimensions {width}x{height} must be positive"
            )));
        }
        if data.len() != width * height {
            return Err(invalid(format!(
                "{} values do not fill a {width}x{height} grid",
                data.len()
            )));
        }
        Ok(Grid2D {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: T) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> T) -> Result<Self> {
        let data = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self::new(width, height, data)
    }

    pub fn random<R: Rng + ?Sized>(width: usize, height: usize, rng: &mut R) -> Result<Self> {
        let data = (0..width * height).map(|_| T::sample(rng)).collect();
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    /// Read with signed coordinates, resolving outside cells by `boundary`.
    pub fn read(&self, x: isize, y: isize, boundary: Boundary) -> T {
        let inside = x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height;
        if inside {
            return self.get(x as usize, y as usize);
        }
        match boundary {
            Boundary::Zero => T::zero(),
            Boundary::Replicate => {
                let cx = x.clamp(0, self.width as isize - 1) as usize;
                let cy = y.clamp(0, self.height as isize - 1) as usize;
                self.get(cx, cy)
            }
        }
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Grid2D<U> {
        Grid2D {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn write_binary<W: Write>(&self, out: &mut W) -> Result<()> {
        write_binary::<T, W>(2, [self.width, self.height, 1], &self.data, out)
    }

    pub fn read_binary<R: Read>(input: &mut R) -> Result<Self> {
        let (rank, dims, data) = read_binary::<T, R>(input)?;
        if rank != 2 {
            return Err(SsamError::Format(format!(
                "expected a rank-2 grid, found rank {rank}"
            )));
        }
        Self::new(dims[0], dims[1], data)
    }

    /// Plain-text matrix: a `width height` line, then one line per row.
    pub fn to_text(&self) -> String
    where
        T: std::fmt::Display,
    {
        let mut s = format!("{} {}\n", self.width, self.height);
        for row in self.data.chunks(self.width) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self>
    where
        T: FromStr,
    {
        let mut tokens = text.split_whitespace();
        let mut dim = |what: &str| -> Result<usize> {
            tokens
                .next()
                .ok_or_else(|| SsamError::Format(format!("missing {what}")))?
                .parse()
                .map_err(|_| SsamError::Format(format!("bad {what}")))
        };
        let (w, h) = (dim("width")?, dim("height")?);
        let data = tokens
            .map(|t| {
                t.parse::<T>()
                    .map_err(|_| SsamError::Format(format!("bad value `{t}`")))
            })
            .collect::<Result<Vec<T>>>()?;
        Self::new(w, h, data)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid3D<T> {
    nx: usize,
    ny: usize,
    nz: usize,
    data: Vec<T>,
}

impl<T: Scalar> Grid3D<T> {
    pub fn new(nx: usize, ny: usize, nz: usize, data: Vec<T>) -> Result<Self> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(invalid(format!(
                "grid dimensions {nx}x{ny}x{nz} must be positive"
            )));
        }
        if data.len() != nx * ny * nz {
            return Err(invalid(format!(
                "{} values do not fill a {nx}x{ny}x{nz} grid",
                data.len()
            )));
        }
        Ok(Grid3D { nx, ny, nz, data })
    }

    pub fn filled(nx: usize, ny: usize, nz: usize, value: T) -> Result<Self> {
        Self::new(nx, ny, nz, vec![value; nx * ny * nz])
    }

    pub fn random<R: Rng + ?Sized>(nx: usize, ny: usize, nz: usize, rng: &mut R) -> Result<Self> {
        let data = (0..nx * ny * nz).map(|_| T::sample(rng)).collect();
        Self::new(nx, ny, nz, data)
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.ny + y) * self.nx + x
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> T {
        self.data[self.index(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, v: T) {
        let i = self.index(x, y, z);
        self.data[i] = v;
    }

    pub fn read(&self, x: isize, y: isize, z: isize, boundary: Boundary) -> T {
        let dims = [self.nx as isize, self.ny as isize, self.nz as isize];
        let c = [x, y, z];
        if c.iter().zip(dims).all(|(&v, d)| v >= 0 && v < d) {
            return self.get(x as usize, y as usize, z as usize);
        }
        match boundary {
            Boundary::Zero => T::zero(),
            Boundary::Replicate => self.get(
                x.clamp(0, dims[0] - 1) as usize,
                y.clamp(0, dims[1] - 1) as usize,
                z.clamp(0, dims[2] - 1) as usize,
            ),
        }
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Grid3D<U> {
        Grid3D {
            nx: self.nx,
            ny: self.ny,
            nz: self.nz,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn write_binary<W: Write>(&self, out: &mut W) -> Result<()> {
        write_binary::<T, W>(3, [self.nx, self.ny, self.nz], &self.data, out)
    }

    pub fn read_binary<R: Read>(input: &mut R) -> Result<Self> {
        let (rank, dims, data) = read_binary::<T, R>(input)?;
        if rank != 3 {
            return Err(SsamError::Format(format!(
                "expected a rank-3 grid, found rank {rank}"
            )));
        }
        Self::new(dims[0], dims[1], dims[2], data)
    }
}

fn kind_byte(mode: ScalarMode) -> u8 {
    match mode {
        ScalarMode::F32 => 0,
        ScalarMode::F64 => 1,
        ScalarMode::Int => 2,
    }
}

/// Reads only the header of a binary grid: rank, scalar mode and dims.
pub fn read_header(bytes: &[u8]) -> Result<(u8, ScalarMode, [usize; 3])> {
    if bytes.len() < HEADER_LEN {
        return Err(SsamError::Format(
            "grid file shorter than its header".into(),
        ));
    }
    if bytes[0..2] != GRID_MAGIC {
        return Err(SsamError::Format("bad grid magic".into()));
    }
    let rank = bytes[2];
    if rank != 2 && rank != 3 {
        return Err(SsamError::Format(format!("unsupported rank {rank}")));
    }
    let mode = match bytes[3] {
        0 => ScalarMode::F32,
        1 => ScalarMode::F64,
        2 => ScalarMode::Int,
        k => return Err(SsamError::Format(format!("unknown scalar kind {k}"))),
    };
    let mut dims = [0usize; 3];
    for (i, d) in dims.iter_mut().enumerate() {
        let at = 4 + 4 * i;
        *d = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    }
    Ok((rank, mode, dims))
}

fn write_binary<T: Scalar, W: Write>(
    rank: u8,
    dims: [usize; 3],
    data: &[T],
    out: &mut W,
) -> Result<()> {
    let mut buf = Vec::with_capacity(HEADER_LEN + data.len() * T::BYTES);
    buf.extend_from_slice(&GRID_MAGIC);
    buf.push(rank);
    buf.push(kind_byte(T::MODE));
    for d in dims {
        let d = u32::try_from(d).map_err(|_| invalid(format!("dimension {d} exceeds u32")))?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for &v in data {
        v.write_le(&mut buf);
    }
    out.write_all(&buf)?;
    Ok(())
}

fn read_binary<T: Scalar, R: Read>(input: &mut R) -> Result<(u8, [usize; 3], Vec<T>)> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let (rank, mode, dims) = read_header(&bytes)?;
    if mode != T::MODE {
        return Err(SsamError::Format(format!(
            "grid holds {mode} values, expected {}",
            T::MODE
        )));
    }
    let count = dims.iter().product::<usize>();
    let body = &bytes[HEADER_LEN..];
    if body.len() != count * T::BYTES {
        return Err(SsamError::Format(format!(
            "payload is {} bytes, dims {dims:?} need {}",
            body.len(),
            count * T::BYTES
        )));
    }
    let data = body.chunks_exact(T::BYTES).map(T::read_le).collect();
    Ok((rank, dims, data))
}
