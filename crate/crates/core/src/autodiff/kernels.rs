//! Small dense kernels shared by the tape ops.

/// `c = a · b + beta · c` for row/column-strided operands; `c` is row-major `m × n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (usize, usize),
    b: &[f64],
    b_strides: (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c[..m * n].iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let a_last = (m - 1) * a_strides.0 + (k - 1) * a_strides.1;
    let b_last = (k - 1) * b_strides.0 + (n - 1) * b_strides.1;
    assert!(a_last < a.len() && b_last < b.len());
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Unfolds a `c_in × t` signal into a `(c_in·k) × t_out` column matrix.
pub(crate) fn im2col(
    x: &[f64],
    c_in: usize,
    t: usize,
    k: usize,
    stride: usize,
    padding: usize,
    t_out: usize,
) -> Vec<f64> {
    let mut cols = vec![0.0; c_in * k * t_out];
    for ci in 0..c_in {
        let row_in = &x[ci * t..(ci + 1) * t];
        for kk in 0..k {
            let dst = &mut cols[(ci * k + kk) * t_out..(ci * k + kk + 1) * t_out];
            for (to, d) in dst.iter_mut().enumerate() {
                let pos = (to * stride + kk) as isize - padding as isize;
                if pos >= 0 && (pos as usize) < t {
                    *d = row_in[pos as usize];
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the signal.
pub(crate) fn col2im(
    cols: &[f64],
    c_in: usize,
    t: usize,
    k: usize,
    stride: usize,
    padding: usize,
    t_out: usize,
    dx: &mut [f64],
) {
    for ci in 0..c_in {
        for kk in 0..k {
            let src = &cols[(ci * k + kk) * t_out..(ci * k + kk + 1) * t_out];
            let row = &mut dx[ci * t..(ci + 1) * t];
            for (to, s) in src.iter().enumerate() {
                let pos = (to * stride + kk) as isize - padding as isize;
                if pos >= 0 && (pos as usize) < t {
                    row[pos as usize] += s;
                }
            }
        }
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
