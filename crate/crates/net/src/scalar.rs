use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point element type of a network. Training runs in `f32`;
/// gradient checks run in `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Send + Sync + 'static
{
    /// `c = a · b + beta · c` for an `m×k` by `k×n` product with explicit
    /// row/column strides (in elements) for each operand.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_strides: (isize, isize),
        b: &[Self],
        b_strides: (isize, isize),
        beta: Self,
        c: &mut [Self],
        c_strides: (isize, isize),
    );

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite conversion")
    }
}

fn max_offset(rows: usize, cols: usize, (rs, cs): (isize, isize)) -> usize {
    if rows == 0 || cols == 0 {
        return 0;
    }
    (rows - 1) * rs as usize + (cols - 1) * cs as usize
}

fn check_operands(
    m: usize,
    k: usize,
    n: usize,
    a: (usize, (isize, isize)),
    b: (usize, (isize, isize)),
    c: (usize, (isize, isize)),
) {
    assert!(a.1 .0 >= 0 && a.1 .1 >= 0 && b.1 .0 >= 0 && b.1 .1 >= 0);
    assert!(c.1 .0 >= 0 && c.1 .1 >= 0);
    if m * k > 0 {
        assert!(max_offset(m, k, a.1) < a.0, "gemm: lhs out of bounds");
    }
    if k * n > 0 {
        assert!(max_offset(k, n, b.1) < b.0, "gemm: rhs out of bounds");
    }
    if m * n > 0 {
        assert!(max_offset(m, n, c.1) < c.0, "gemm: output out of bounds");
    }
}

macro_rules! impl_real {
    ($t:ty, $kernel:path) => {
        impl Real for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                a_strides: (isize, isize),
                b: &[Self],
                b_strides: (isize, isize),
                beta: Self,
                c: &mut [Self],
                c_strides: (isize, isize),
            ) {
                check_operands(
                    m,
                    k,
                    n,
                    (a.len(), a_strides),
                    (b.len(), b_strides),
                    (c.len(), c_strides),
                );
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: every index the kernel touches is bounded by the
                // extents checked above; `c` is exclusively borrowed.
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        a_strides.0,
                        a_strides.1,
                        b.as_ptr(),
                        b_strides.0,
                        b_strides.1,
                        beta,
                        c.as_mut_ptr(),
                        c_strides.0,
                        c_strides.1,
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
    fn gemm_matches_naive_product_with_transposed_rhs() {
        // a: 2x3 row-major, b^T stored as 2x3 row-major (b is 3x2)
        let a = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0];
        let bt = [7.0f64, 8.0, 9.0, 10.0, 11.0, 12.0];
        let mut c = [0.0f64; 4];
        f64::gemm(2, 3, 2, &a, (3, 1), &bt, (1, 3), 0.0, &mut c, (2, 1));
        assert_eq!(c, [50.0, 68.0, 122.0, 167.0]);
    }
}
