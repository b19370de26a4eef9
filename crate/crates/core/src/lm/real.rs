use std::fmt::Debug;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};

/// Scalar type of a model. Training runs in `f32`; `f64` exists for
/// finite-difference gradient checks.
pub trait Real:
    Float + FromPrimitive + Default + Debug + Send + Sync + AddAssign + SubAssign + MulAssign + DivAssign + 'static
{
    /// `C = alpha * A B + beta * C` over strided row-major views.
    ///
    /// # Safety
    /// Every addressed element must lie inside the buffers behind the
    /// pointers; `c` must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite conversion")
    }
}

impl Real for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// A strided read-only matrix view.
#[derive(Clone, Copy)]
pub(crate) struct View<'a, R> {
    pub data: &'a [R],
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a, R> View<'a, R> {
    pub fn dense(data: &'a [R], rows: usize, cols: usize) -> Self {
        Self {
            data,
            rows,
            cols,
            rs: cols,
            cs: 1,
        }
    }

    pub fn strided(data: &'a [R], rows: usize, cols: usize, rs: usize) -> Self {
        Self {
            data,
            rows,
            cols,
            rs,
            cs: 1,
        }
    }

    pub fn t(self) -> Self {
        Self {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }

    fn fits(&self, len: usize) -> bool {
        self.rows == 0 || self.cols == 0 || (self.rows - 1) * self.rs + (self.cols - 1) * self.cs < len
    }
}

/// `c = a b + beta * c` where `c` is `a.rows x b.cols` with row stride `rsc`.
pub(crate) fn gemm<R: Real>(a: View<'_, R>, b: View<'_, R>, c: &mut [R], rsc: usize, beta: R) {
    assert_eq!(a.cols, b.rows, "inner dimensions differ");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert!(
        a.fits(a.data.len()) && b.fits(b.data.len()),
        "operand view out of bounds"
    );
    let c_view = View {
        data: &c[..],
        rows: m,
        cols: n,
        rs: rsc,
        cs: 1,
    };
    assert!(c_view.fits(c.len()), "output view out of bounds");
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: bounds checked above; `c` is a unique borrow so it cannot alias.
    unsafe {
        R::gemm_raw(
            m,
            k,
            n,
            R::one(),
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        )
    }
}

pub(crate) fn add_bias<R: Real>(x: &mut [R], bias: &[R]) {
    for row in x.chunks_exact_mut(bias.len()) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += *b;
        }
    }
}

pub(crate) fn add_col_sums<R: Real>(grad: &mut [R], x: &[R]) {
    for row in x.chunks_exact(grad.len()) {
        for (g, v) in grad.iter_mut().zip(row) {
            *g += *v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive_with_transposes() {
        let a: Vec<f64> = (0..6).map(f64::from).collect(); // 2x3
        let b: Vec<f64> = (0..12).map(|x| f64::from(x) * 0.5).collect(); // 3x4
        let mut c = vec![1.0; 8];
        gemm(View::dense(&a, 2, 3), View::dense(&b, 3, 4), &mut c, 4, 1.0);
        for i in 0..2 {
            for j in 0..4 {
                let want: f64 = 1.0 + (0..3).map(|p| a[i * 3 + p] * b[p * 4 + j]).sum::<f64>();
                assert_eq!(c[i * 4 + j], want);
            }
        }
        // a^T a is 3x3 and symmetric
        let mut g = vec![0.0; 9];
        gemm(View::dense(&a, 2, 3).t(), View::dense(&a, 2, 3), &mut g, 3, 0.0);
        assert_eq!(g[1], g[3]);
        assert_eq!(g[0], 0.0 * 0.0 + 3.0 * 3.0);
    }

    #[test]
    #[should_panic(expected = "out of bounds")]
    fn gemm_rejects_short_buffers() {
        let a = [1.0f32; 3];
        let mut c = [0.0f32; 4];
        gemm(View::dense(&a, 2, 2), View::dense(&a, 2, 2), &mut c, 2, 0.0);
    }
}
