//! Floating-point scalar abstraction shared by the critic and metrics code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point: `f32` or `f64`.
///
/// Besides the arithmetic bounds this carries a fixed little-endian byte
/// encoding so model files round-trip bit-exactly for either width.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Encoded width in bytes.
    const BYTES: usize;

    fn write_le(self, out: &mut Vec<u8>);

    /// Decodes from exactly `Self::BYTES` bytes.
    fn read_le(bytes: &[u8]) -> Self;

    /// Lossy conversion from `f64`; used for literal constants.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal representable in scalar type")
    }

    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("count representable in scalar type")
    }
}

impl Scalar for f32 {
    const BYTES: usize = 4;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        let mut buf = [0u8; 4];
        buf.copy_from_slice(&bytes[..4]);
        f32::from_le_bytes(buf)
    }
}

impl Scalar for f64 {
    const BYTES: usize = 8;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        let mut buf = [0u8; 8];
        buf.copy_from_slice(&bytes[..8]);
        f64::from_le_bytes(buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip<F: Scalar>(v: F) -> F {
        let mut out = Vec::new();
        v.write_le(&mut out);
        assert_eq!(out.len(), F::BYTES);
        F::read_le(&out)
    }

    #[test]
    fn le_roundtrip_is_bit_exact() {
        for v in [0.0f64, -0.0, 1.0 / 3.0, f64::MIN_POSITIVE, 1e300] {
            assert_eq!(roundtrip(v).to_bits(), v.to_bits());
        }
        for v in [0.1f32, -7.25, f32::EPSILON] {
            assert_eq!(roundtrip(v).to_bits(), v.to_bits());
        }
    }
}
