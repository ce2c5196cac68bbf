use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::AddAssign;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type of a model: `f32` for training, `f64` for
/// gradient checks.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + AddAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// `c = a * b` for row-major `a: m x k` (row stride `lda`) and
    /// `b` given by explicit strides; `c: m x n` contiguous, overwritten.
    #[allow(clippy::too_many_arguments)]
    fn gemm(m: usize, k: usize, n: usize, a: &[Self], lda: usize, b: &[Self], rsb: usize, csb: usize, c: &mut [Self]);

    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("representable constant")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }
}

fn check_extent(len: usize, rows: usize, cols: usize, rs: usize, cs: usize) {
    if rows > 0 && cols > 0 {
        assert!((rows - 1) * rs + (cols - 1) * cs < len, "gemm operand out of bounds");
    }
}

macro_rules! impl_real {
    ($t:ty, $kernel:path) => {
        impl Real for $t {
            fn gemm(m: usize, k: usize, n: usize, a: &[Self], lda: usize, b: &[Self], rsb: usize, csb: usize, c: &mut [Self]) {
                if m == 0 || n == 0 {
                    return;
                }
                check_extent(a.len(), m, k, lda, 1);
                check_extent(b.len(), k, n, rsb, csb);
                assert!(c.len() >= m * n, "gemm output too small");
                // SAFETY: every operand extent was bounds-checked above.
                unsafe {
                    $kernel(
                        m, k, n, 1.0,
                        a.as_ptr(), lda as isize, 1,
                        b.as_ptr(), rsb as isize, csb as isize,
                        0.0,
                        c.as_mut_ptr(), n as isize, 1,
                    );
                }
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive() {
        let a = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [7.0f64, 8.0, 9.0, 10.0, 11.0, 12.0]; // 3x2 row-major
        let mut c = [0.0f64; 4];
        f64::gemm(2, 3, 2, &a, 3, &b, 2, 1, &mut c);
        assert_eq!(c, [58.0, 64.0, 139.0, 154.0]);
        // b transposed view: b^T stored as 2x3, read with strides (1, 3)
        let bt = [7.0f64, 9.0, 11.0, 8.0, 10.0, 12.0];
        f64::gemm(2, 3, 2, &a, 3, &bt, 1, 3, &mut c);
        assert_eq!(c, [58.0, 64.0, 139.0, 154.0]);
    }
}
