//! Dense row-major f64 tensor and its binary serialization.
//!
//! The numeric ops all run on this one type: a shape vector plus contiguous
//! storage, element count equal to the shape product, every element finite.
//! The wire format ("GFT1") is: 4-byte magic, rank as u32 LE, each dim as
//! u32 LE, then the elements as f64 LE in row-major order. Encoding and
//! decoding round-trip bit-exactly.

use thiserror::Error;

/// Magic prefix of the binary tensor format.
pub const MAGIC: &[u8; 4] = b"GFT1";

/// Decoder refuses tensors above this element count so that corrupt or
/// hostile headers cannot trigger huge allocations.
pub const MAX_ELEMS: usize = 1 << 26;

const MAX_RANK: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("shape {shape:?} implies {expected} elements, got {actual}")]
    LengthMismatch {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("shape {0:?} is invalid: rank must be 1..={MAX_RANK}, dims nonzero, at most {MAX_ELEMS} elements")]
    BadShape(Vec<usize>),
    #[error("non-finite element at index {0}")]
    NonFinite(usize),
    #[error("reshape {from:?} -> {to:?} changes element count")]
    ReshapeMismatch { from: Vec<usize>, to: Vec<usize> },
    #[error("bad magic: expected \"GFT1\"")]
    BadMagic,
    #[error("truncated tensor: need {need} more bytes")]
    Truncated { need: usize },
}

fn checked_len(shape: &[usize]) -> Result<usize, TensorError> {
    if shape.is_empty() || shape.len() > MAX_RANK || shape.iter().any(|&d| d == 0) {
        return Err(TensorError::BadShape(shape.to_vec()));
    }
    let mut n: usize = 1;
    for &d in shape {
        n = n
            .checked_mul(d)
            .filter(|&n| n <= MAX_ELEMS)
            .ok_or_else(|| TensorError::BadShape(shape.to_vec()))?;
    }
    Ok(n)
}

/// Shape plus contiguous row-major f64 storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        let n = checked_len(shape).expect("valid shape");
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Tensor {
        assert!(value.is_finite());
        let n = checked_len(shape).expect("valid shape");
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    /// Builds a tensor, checking length and finiteness.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Tensor, TensorError> {
        let n = checked_len(shape)?;
        if data.len() != n {
            return Err(TensorError::LengthMismatch {
                shape: shape.to_vec(),
                expected: n,
                actual: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite(i));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Length-preserving shape change.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor, TensorError> {
        let n = checked_len(shape)?;
        if n != self.data.len() {
            return Err(TensorError::ReshapeMismatch {
                from: self.shape.clone(),
                to: shape.to_vec(),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    /// Element at (c, h, w) of a rank-3 tensor.
    #[inline]
    pub fn at3(&self, c: usize, h: usize, w: usize) -> f64 {
        debug_assert_eq!(self.shape.len(), 3);
        self.data[(c * self.shape[1] + h) * self.shape[2] + w]
    }

    /// True when every element is finite; index of the first offender otherwise.
    pub fn check_finite(&self) -> Result<(), TensorError> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(TensorError::NonFinite(i)),
        }
    }

    /// Appends the GFT1 encoding to `out`.
    pub fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.shape.len() as u32).to_le_bytes());
        for &d in &self.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.shape.len() + 8 * self.data.len());
        self.encode(&mut out);
        out
    }

    /// Decodes one tensor from the front of `bytes`; returns it and the
    /// number of bytes consumed. Rejects bad magic, invalid shapes,
    /// non-finite payloads, and truncation without panicking, so it is safe
    /// on untrusted input. Trailing bytes are left for the caller.
    pub fn decode(bytes: &[u8]) -> Result<(Tensor, usize), TensorError> {
        let take = |off: usize, n: usize| -> Result<&[u8], TensorError> {
            let end = off
                .checked_add(n)
                .ok_or(TensorError::Truncated { need: usize::MAX })?;
            bytes.get(off..end).ok_or_else(|| TensorError::Truncated {
                need: end - bytes.len(),
            })
        };
        if take(0, 4)? != MAGIC {
            return Err(TensorError::BadMagic);
        }
        let rank = u32::from_le_bytes(take(4, 4)?.try_into().unwrap()) as usize;
        if rank == 0 || rank > MAX_RANK {
            return Err(TensorError::BadShape(vec![rank]));
        }
        let mut shape = Vec::with_capacity(rank);
        let mut off = 8;
        for _ in 0..rank {
            shape.push(u32::from_le_bytes(take(off, 4)?.try_into().unwrap()) as usize);
            off += 4;
        }
        let n = checked_len(&shape)?;
        let payload = take(off, n * 8)?;
        let mut data = Vec::with_capacity(n);
        for chunk in payload.chunks_exact(8) {
            data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite(i));
        }
        Ok((Tensor { shape, data }, off + n * 8))
    }
}
