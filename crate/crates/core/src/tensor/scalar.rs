use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

/// Element type of the engine. Training runs at `f32`; gradient checks
/// instantiate the same code at `f64` because central differences are
/// unreliable in single precision.
pub trait Scalar:
    Copy
    + PartialOrd
    + Debug
    + Default
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
{
    const ZERO: Self;
    const ONE: Self;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn abs(self) -> Self;
    fn maximum(self, other: Self) -> Self;
    fn is_finite_val(self) -> bool;
    fn sqrt(self) -> Self;

    /// C := alpha * op(A) * op(B) + beta * C for row-major contiguous
    /// matrices; `ta`/`tb` select the transposed view. Single kernel,
    /// deterministic for fixed inputs.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        ta: bool,
        b: &[Self],
        tb: bool,
        beta: Self,
        c: &mut [Self],
    );
}

fn strides(rows: usize, cols: usize, transposed: bool) -> (isize, isize, usize) {
    // Returns (row stride, col stride, expected slice length) of the
    // logical rows x cols operand given its stored orientation.
    if transposed {
        (1, rows as isize, rows * cols)
    } else {
        (cols as isize, 1, rows * cols)
    }
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;

            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }
            #[inline]
            fn abs(self) -> Self {
                <$t>::abs(self)
            }
            #[inline]
            fn maximum(self, other: Self) -> Self {
                <$t>::max(self, other)
            }
            #[inline]
            fn is_finite_val(self) -> bool {
                <$t>::is_finite(self)
            }
            #[inline]
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                ta: bool,
                b: &[Self],
                tb: bool,
                beta: Self,
                c: &mut [Self],
            ) {
                let (rsa, csa, alen) = strides(m, k, ta);
                let (rsb, csb, blen) = strides(k, n, tb);
                assert_eq!(a.len(), alen, "gemm lhs length");
                assert_eq!(b.len(), blen, "gemm rhs length");
                assert_eq!(c.len(), m * n, "gemm out length");
                if m == 0 || k == 0 || n == 0 {
                    return;
                }
                unsafe {
                    $gemm(
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
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_plain() {
        // [1 2; 3 4] * [5 6; 7 8] = [19 22; 43 50]
        let a = [1.0f64, 2.0, 3.0, 4.0];
        let b = [5.0f64, 6.0, 7.0, 8.0];
        let mut c = [0.0f64; 4];
        f64::gemm(2, 2, 2, 1.0, &a, false, &b, false, 0.0, &mut c);
        assert_eq!(c, [19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn gemm_transposed_rhs() {
        // A(1x3) * B^T where B is 2x3 -> 1x2
        let a = [1.0f32, 2.0, 3.0];
        let b = [1.0f32, 0.0, 1.0, 0.0, 1.0, 1.0];
        let mut c = [0.0f32; 2];
        f32::gemm(1, 3, 2, 1.0, &a, false, &b, true, 0.0, &mut c);
        assert_eq!(c, [4.0, 5.0]);
    }

    #[test]
    fn gemm_accumulates_with_beta() {
        let a = [2.0f64];
        let b = [3.0f64];
        let mut c = [10.0f64];
        f64::gemm(1, 1, 1, 1.0, &a, false, &b, false, 1.0, &mut c);
        assert_eq!(c, [16.0]);
    }
}
