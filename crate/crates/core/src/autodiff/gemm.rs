/// Row-major matrix operand: `data` holds either an `rows x cols` matrix or,
/// when `transposed`, a `cols x rows` matrix read as its transpose.
#[derive(Clone, Copy)]
pub(crate) struct Mat<'a> {
    pub data: &'a [f32],
    pub transposed: bool,
}

impl<'a> Mat<'a> {
    pub fn n(data: &'a [f32]) -> Self {
        Mat {
            data,
            transposed: false,
        }
    }

    pub fn t(data: &'a [f32]) -> Self {
        Mat {
            data,
            transposed: true,
        }
    }

    fn strides(&self, rows: usize, cols: usize) -> (isize, isize) {
        if self.transposed {
            (1, rows as isize)
        } else {
            (cols as isize, 1)
        }
    }
}

/// `c[m x n] = a[m x k] * b[k x n] + beta * c`.
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: Mat<'_>, b: Mat<'_>, beta: f32, c: &mut [f32]) {
    assert!(a.data.len() >= m * k && b.data.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = a.strides(m, k);
    let (rsb, csb) = b.strides(k, n);
    // SAFETY: operand lengths are checked above against the strides derived
    // from (m, k, n), so every addressed element lies inside its slice.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
