//! Thin bounds-checked wrapper over `matrixmultiply::dgemm`.

/// Strided view of an `rows x cols` matrix inside a slice.
#[derive(Clone, Copy)]
pub(crate) struct View {
    pub offset: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl View {
    pub fn rows(offset: usize, row_stride: usize) -> View {
        View {
            offset,
            row_stride,
            col_stride: 1,
        }
    }

    /// Transposed view of a row-major block whose rows are `row_stride` apart.
    pub fn transposed(offset: usize, row_stride: usize) -> View {
        View {
            offset,
            row_stride: 1,
            col_stride: row_stride,
        }
    }

    fn last_index(&self, rows: usize, cols: usize) -> usize {
        self.offset + (rows - 1) * self.row_stride + (cols - 1) * self.col_stride
    }
}

/// `c = alpha * a(m x k) * b(k x n) + beta * c(m x n)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    av: View,
    b: &[f64],
    bv: View,
    beta: f64,
    c: &mut [f64],
    cv: View,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(cv.last_index(m, n) < c.len(), "gemm: output view out of bounds");
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                let idx = cv.offset + i * cv.row_stride + j * cv.col_stride;
                c[idx] *= beta;
            }
        }
        return;
    }
    assert!(av.last_index(m, k) < a.len(), "gemm: lhs view out of bounds");
    assert!(bv.last_index(k, n) < b.len(), "gemm: rhs view out of bounds");
    // SAFETY: every index reachable through the three views was bounds-checked
    // above, and `c` is exclusively borrowed so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr().add(av.offset),
            av.row_stride as isize,
            av.col_stride as isize,
            b.as_ptr().add(bv.offset),
            bv.row_stride as isize,
            bv.col_stride as isize,
            beta,
            c.as_mut_ptr().add(cv.offset),
            cv.row_stride as isize,
            cv.col_stride as isize,
        );
    }
}
