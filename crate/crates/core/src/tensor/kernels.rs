//! Strided GEMM on top of `matrixmultiply`.

/// Row-major matrix view with optional transposition.
#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub transposed: bool,
}

impl<'a> MatRef<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        MatRef { data, rows, cols, transposed: false }
    }

    pub fn t(self) -> Self {
        MatRef { transposed: !self.transposed, ..self }
    }

    fn shape(&self) -> (usize, usize) {
        if self.transposed {
            (self.cols, self.rows)
        } else {
            (self.rows, self.cols)
        }
    }

    fn strides(&self) -> (isize, isize) {
        if self.transposed {
            (1, self.cols as isize)
        } else {
            (self.cols as isize, 1)
        }
    }
}

/// `out = beta * out + a · b`, with `out` row-major `(m, n)`.
pub(crate) fn gemm(a: MatRef<'_>, b: MatRef<'_>, out: &mut [f64], beta: f64) {
    let (m, k) = a.shape();
    let (k2, n) = b.shape();
    assert_eq!(k, k2, "gemm inner dimension");
    assert_eq!(out.len(), m * n, "gemm output size");
    assert!(a.data.len() >= a.rows * a.cols && b.data.len() >= b.rows * b.cols);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if beta == 0.0 {
            out.iter_mut().for_each(|v| *v = 0.0);
        } else {
            out.iter_mut().for_each(|v| *v *= beta);
        }
        return;
    }
    if m <= 4 || m * n * k <= 4096 {
        return gemm_small(a, b, out, beta, m, k, n);
    }
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    // SAFETY: the asserts above bound every index dgemm touches: rows/cols of
    // each operand are within its slice, and `out` holds exactly m*n values
    // with row stride n.
    unsafe {
        matrixmultiply::dgemm(
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
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `out += v · M` for a row vector `v` (len k) and row-major `M` (k, n).
#[inline]
/// Loop kernel for tiny products where packing would dominate.
fn gemm_small(a: MatRef<'_>, b: MatRef<'_>, out: &mut [f64], beta: f64, m: usize, k: usize, n: usize) {
    if beta == 0.0 {
        out.iter_mut().for_each(|v| *v = 0.0);
    } else if beta != 1.0 {
        out.iter_mut().for_each(|v| *v *= beta);
    }
    let (rsa, csa) = a.strides();
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a.data[i * rsa as usize + p * csa as usize];
            if b.transposed {
                for (j, o) in row.iter_mut().enumerate() {
                    *o += av * b.data[j * b.cols + p];
                }
            } else {
                let br = &b.data[p * n..(p + 1) * n];
                for (o, &bv) in row.iter_mut().zip(br) {
                    *o += av * bv;
                }
            }
        }
    }
}

pub(crate) fn vecmat_acc(v: &[f64], m: &[f64], n: usize, out: &mut [f64]) {
    for (i, &vi) in v.iter().enumerate() {
        if vi == 0.0 {
            continue;
        }
        let row = &m[i * n..(i + 1) * n];
        for (o, &w) in out.iter_mut().zip(row) {
            *o += vi * w;
        }
    }
}

/// `out += M · v` for row-major `M` (k, n) and `v` of len n; `out` has len k.
#[inline]
pub(crate) fn matvec_acc(m: &[f64], n: usize, v: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let row = &m[i * n..(i + 1) * n];
        let mut s = 0.0;
        for (&w, &x) in row.iter().zip(v) {
            s += w * x;
        }
        *o += s;
    }
}
