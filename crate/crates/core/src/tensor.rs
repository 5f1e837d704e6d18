//! The MRST binary tensor container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   4 bytes  "MRST"
//! version u32      1
//! dtype   u32      1 = real64, 2 = complex128 (re, im interleaved)
//! ndim    u32
//! dims    u64 * ndim
//! payload f64 * prod(dims) * (1 | 2), row-major
//! ```
//!
//! Decoding treats its input as untrusted: every length is checked before
//! allocation and trailing bytes are rejected.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MRST";
pub const VERSION: u32 = 1;
/// Upper bound on tensor rank accepted by the decoder.
pub const MAX_NDIM: usize = 16;

const HEADER_LEN: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u32)]
pub enum Dtype {
    Real64 = 1,
    Complex128 = 2,
}

impl Dtype {
    fn from_code(code: u32) -> Result<Self> {
        match code {
            1 => Ok(Dtype::Real64),
            2 => Ok(Dtype::Complex128),
            other => Err(Error::Format(format!("unknown dtype code {other}"))),
        }
    }

    fn scalars_per_element(self) -> usize {
        match self {
            Dtype::Real64 => 1,
            Dtype::Complex128 => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

/// A dense row-major tensor as stored in an MRST file.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: TensorData,
}

fn element_count(dims: &[usize]) -> Option<usize> {
    dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

impl Tensor {
    pub fn real(dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        Self::new(dims, TensorData::Real(values))
    }

    pub fn complex(dims: Vec<usize>, values: Vec<Complex64>) -> Result<Self> {
        Self::new(dims, TensorData::Complex(values))
    }

    fn new(dims: Vec<usize>, data: TensorData) -> Result<Self> {
        if dims.len() > MAX_NDIM {
            return Err(Error::shape(format!(
                "rank {} exceeds {MAX_NDIM}",
                dims.len()
            )));
        }
        let expected =
            element_count(&dims).ok_or_else(|| Error::shape("tensor element count overflows"))?;
        let len = match &data {
            TensorData::Real(v) => v.len(),
            TensorData::Complex(v) => v.len(),
        };
        if len != expected {
            return Err(Error::shape(format!(
                "dims {dims:?} need {expected} elements, got {len}"
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dtype(&self) -> Dtype {
        match self.data {
            TensorData::Real(_) => Dtype::Real64,
            TensorData::Complex(_) => Dtype::Complex128,
        }
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn len(&self) -> usize {
        match &self.data {
            TensorData::Real(v) => v.len(),
            TensorData::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn into_real(self) -> Result<(Vec<usize>, Vec<f64>)> {
        match self.data {
            TensorData::Real(v) => Ok((self.dims, v)),
            TensorData::Complex(_) => Err(Error::Format(
                "expected real64 tensor, found complex128".into(),
            )),
        }
    }

    pub fn into_complex(self) -> Result<(Vec<usize>, Vec<Complex64>)> {
        match self.data {
            TensorData::Complex(v) => Ok((self.dims, v)),
            TensorData::Real(_) => Err(Error::Format(
                "expected complex128 tensor, found real64".into(),
            )),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let scalars = self.len() * self.dtype().scalars_per_element();
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.dims.len() + 8 * scalars);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dtype() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        match &self.data {
            TensorData::Real(v) => {
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
            TensorData::Complex(v) => {
                for z in v {
                    out.extend_from_slice(&z.re.to_le_bytes());
                    out.extend_from_slice(&z.im.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!(
                "truncated header ({} bytes)",
                bytes.len()
            )));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Format("bad magic, expected MRST".into()));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let version = word(4);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let dtype = Dtype::from_code(word(8))?;
        let ndim = word(12) as usize;
        if ndim > MAX_NDIM {
            return Err(Error::Format(format!("rank {ndim} exceeds {MAX_NDIM}")));
        }

        let dims_end = HEADER_LEN + 8 * ndim;
        if bytes.len() < dims_end {
            return Err(Error::Format("truncated dimension list".into()));
        }
        let mut dims = Vec::with_capacity(ndim);
        for i in 0..ndim {
            let at = HEADER_LEN + 8 * i;
            let d = u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
            let d = usize::try_from(d)
                .map_err(|_| Error::Format(format!("dimension {d} too large")))?;
            dims.push(d);
        }

        let payload = &bytes[dims_end..];
        let scalars = element_count(&dims)
            .and_then(|n| n.checked_mul(dtype.scalars_per_element()))
            .ok_or_else(|| Error::Format("element count overflows".into()))?;
        let expected = scalars
            .checked_mul(8)
            .ok_or_else(|| Error::Format("payload size overflows".into()))?;
        if payload.len() != expected {
            return Err(Error::Format(format!(
                "payload is {} bytes, dims {dims:?} require {expected}",
                payload.len()
            )));
        }

        let mut values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let data = match dtype {
            Dtype::Real64 => TensorData::Real(values.collect()),
            Dtype::Complex128 => {
                let mut v = Vec::with_capacity(scalars / 2);
                while let (Some(re), Some(im)) = (values.next(), values.next()) {
                    v.push(Complex64::new(re, im));
                }
                TensorData::Complex(v)
            }
        };
        Tensor::new(dims, data)
    }

    pub fn write_to(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(&self.encode())?;
        Ok(())
    }

    pub fn read_from(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}
