//! Floating-point scalar abstraction shared by the numeric kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, NumCast};

/// floating point: f32 or f64
pub trait Scalar:
    Float
    + FromPrimitive
    + NumCast
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Width in bytes of the little-endian encoding.
    const BYTES: usize;
    /// Tag stored in checkpoint headers.
    const DTYPE_TAG: u8;

    fn of(x: f64) -> Self;

    fn as_f64(self) -> f64;

    fn write_le(self, out: &mut Vec<u8>);

    fn read_le(bytes: &[u8]) -> Self;

    /// Row-major `c = alpha * a(m x k) * b(k x n) + beta * c`, with explicit strides
    /// so transposed operands are free.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );
}

macro_rules! impl_scalar {
    ($t:ty, $tag:expr, $kernel:ident) => {
        impl Scalar for $t {
            const BYTES: usize = std::mem::size_of::<$t>();
            const DTYPE_TAG: u8 = $tag;

            #[inline]
            fn of(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }

            fn write_le(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }

            fn read_le(bytes: &[u8]) -> Self {
                let mut buf = [0u8; std::mem::size_of::<$t>()];
                buf.copy_from_slice(&bytes[..std::mem::size_of::<$t>()]);
                <$t>::from_le_bytes(buf)
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                if m == 0 || n == 0 {
                    return;
                }
                assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
                // SAFETY: the asserts above bound every index reachable with the given
                // dense strides, which is the only way callers in this crate use it.
                unsafe {
                    matrixmultiply::$kernel(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        rsc,
                        csc,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, 4, sgemm);
impl_scalar!(f64, 8, dgemm);

#[cfg(test)]
mod tests {
    use super::*;

    fn gemm_check<T: Scalar>() {
        // [1 2; 3 4] * [5 6; 7 8] = [19 22; 43 50]
        let a: Vec<T> = [1.0, 2.0, 3.0, 4.0].iter().map(|&x| T::of(x)).collect();
        let b: Vec<T> = [5.0, 6.0, 7.0, 8.0].iter().map(|&x| T::of(x)).collect();
        let mut c = vec![T::zero(); 4];
        T::gemm(2, 2, 2, T::one(), &a, 2, 1, &b, 2, 1, T::zero(), &mut c, 2, 1);
        let got: Vec<f64> = c.iter().map(|x| x.as_f64()).collect();
        assert_eq!(got, vec![19.0, 22.0, 43.0, 50.0]);

        // a^T * b via strides
        let mut c = vec![T::zero(); 4];
        T::gemm(2, 2, 2, T::one(), &a, 1, 2, &b, 2, 1, T::zero(), &mut c, 2, 1);
        let got: Vec<f64> = c.iter().map(|x| x.as_f64()).collect();
        assert_eq!(got, vec![26.0, 30.0, 38.0, 44.0]);
    }

    #[test]
    fn gemm_matches_hand_product() {
        gemm_check::<f32>();
        gemm_check::<f64>();
    }

    #[test]
    fn le_roundtrip() {
        let mut buf = Vec::new();
        1.25f32.write_le(&mut buf);
        (-3.5f64).write_le(&mut buf);
        assert_eq!(f32::read_le(&buf[..4]), 1.25);
        assert_eq!(f64::read_le(&buf[4..]), -3.5);
    }
}
