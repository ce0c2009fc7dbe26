//! Bit-addressable f32 storage: flat row-major tensors with exact
//! bit-pattern comparison, element-wise IEEE arithmetic, checksums, and
//! single-bit flips. Bit index 0 is the least-significant bit of the
//! IEEE-754 encoding; bit 31 is the sign.

use crate::{Error, Result};

/// Fixed-point grid used for guard-protected parameters: multiples of
/// 2^-20 clamped to ±8. Any two grid values add and subtract exactly in
/// f32 (the integer grid index of a sum stays below 2^24), which is what
/// makes relation-parameter recovery restore the original bits.
pub const GUARD_GRID_FRAC_BITS: u32 = 20;
/// Magnitude bound for grid parameters.
pub const GUARD_GRID_MAX: f32 = 8.0;

/// Round a value onto the guard grid. −0.0 is normalized to +0.0 so the
/// value↔bits mapping stays one-to-one under recovery.
pub fn snap_to_guard_grid(v: f32) -> f32 {
    let scale = (1u32 << GUARD_GRID_FRAC_BITS) as f32;
    (v.clamp(-GUARD_GRID_MAX, GUARD_GRID_MAX) * scale).round() / scale + 0.0
}

/// Flat array of 32-bit floats with shape metadata, stored row-major.
#[derive(Debug, Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

/// Result of a bit-pattern comparison between two tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BitCompare {
    pub equal: bool,
    /// Element index of the first differing bit pattern, storage order.
    pub first_mismatch: Option<usize>,
}

/// Per-store reduced values. `int_sum` (wrapping sum of the u32 bit
/// patterns) is authoritative: it changes under any single flip,
/// including sign-of-zero and NaN-payload flips that a value-domain sum
/// can absorb. `value_sum` is the literal sequential sum of the values,
/// kept as a fidelity mode.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Checksum {
    pub int_sum: u64,
    pub value_sum: f64,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(Error::ShapeMismatch(format!(
                "shape dimensions must be positive, got {shape:?}"
            )));
        }
        let expect: usize = shape.iter().product();
        if expect != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} wants {expect} elements, data has {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        Tensor::new(shape, vec![0.0; n])
    }

    /// 1-D tensor from raw values.
    pub fn from_vec(data: Vec<f32>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Mutation requires exclusive access; callers uphold the
    /// reader/writer contract, there is no internal locking.
    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Invert one bit of one element's IEEE-754 encoding in place.
    pub fn flip_bit(&mut self, elem_index: usize, bit_index: u32) -> Result<()> {
        if elem_index >= self.data.len() {
            return Err(Error::OutOfRange(format!(
                "element {elem_index} out of range for tensor of {} elements",
                self.data.len()
            )));
        }
        if bit_index > 31 {
            return Err(Error::OutOfRange(format!(
                "bit {bit_index} out of range for a 32-bit element"
            )));
        }
        let bits = self.data[elem_index].to_bits() ^ (1u32 << bit_index);
        self.data[elem_index] = f32::from_bits(bits);
        Ok(())
    }

    /// Overwrite this tensor's contents with another's (shapes must match).
    pub fn copy_from(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "copy_from {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        self.data.copy_from_slice(&other.data);
        Ok(())
    }

    pub fn checksum(&self) -> Checksum {
        Checksum::of_parts(&[self])
    }

    /// Snap every element onto the guard grid.
    pub fn snap_to_guard_grid(&mut self) {
        for v in &mut self.data {
            *v = snap_to_guard_grid(*v);
        }
    }

    pub fn byte_size(&self) -> u64 {
        self.data.len() as u64 * 4
    }
}

impl Checksum {
    /// Checksum over the concatenation of one or more tensors, storage
    /// order, sequential accumulation.
    pub fn of_parts(parts: &[&Tensor]) -> Checksum {
        let mut int_sum: u64 = 0;
        let mut value_sum: f64 = 0.0;
        for t in parts {
            for v in &t.data {
                int_sum = int_sum.wrapping_add(v.to_bits() as u64);
                value_sum += *v as f64;
            }
        }
        Checksum { int_sum, value_sum }
    }
}

/// Bit-pattern equality. NaNs with identical payloads compare equal;
/// +0.0 and −0.0 do not.
pub fn bit_equal(a: &Tensor, b: &Tensor) -> Result<BitCompare> {
    if a.shape != b.shape {
        return Err(Error::ShapeMismatch(format!(
            "bit_equal {:?} vs {:?}",
            a.shape, b.shape
        )));
    }
    let first_mismatch = a
        .data
        .iter()
        .zip(&b.data)
        .position(|(x, y)| x.to_bits() != y.to_bits());
    Ok(BitCompare {
        equal: first_mismatch.is_none(),
        first_mismatch,
    })
}

/// Element-wise f32 addition, round-to-nearest-even.
pub fn tensor_add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_elementwise(a, b, |x, y| x + y)
}

/// Element-wise f32 subtraction, round-to-nearest-even.
pub fn tensor_sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_elementwise(a, b, |x, y| x - y)
}

fn zip_elementwise(a: &Tensor, b: &Tensor, f: impl Fn(f32, f32) -> f32) -> Result<Tensor> {
    if a.shape != b.shape {
        return Err(Error::ShapeMismatch(format!(
            "elementwise op on {:?} vs {:?}",
            a.shape, b.shape
        )));
    }
    let data = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| f(*x, *y))
        .collect();
    Ok(Tensor {
        shape: a.shape.clone(),
        data,
    })
}
