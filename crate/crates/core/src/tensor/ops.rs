use super::Matrix;
use crate::error::{dim_err, Result};

/// Flat (row-major) input index of the maximum for every pooled cell.
pub type PoolIndices = Vec<usize>;

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out = A·B` where `A` is `m x k` and `B` is `k x n`, each given as a
/// slice plus (row, column) strides so transposes are free.
fn gemm(m: usize, k: usize, n: usize, a: (&[f64], isize, isize), b: (&[f64], isize, isize)) -> Matrix {
    let mut out = Matrix::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return out;
    }
    // SAFETY: strides describe in-bounds views of the given slices (checked
    // by the callers' shape tests) and `out` is a fresh m x n row-major buffer.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr(),
            a.1,
            a.2,
            b.0.as_ptr(),
            b.1,
            b.2,
            0.0,
            out.as_mut_slice().as_mut_ptr(),
            n as isize,
            1,
        );
    }
    out
}

/// `A·B`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.rows() {
        return Err(dim_err(format!(
            "matmul {}x{} by {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let (ac, bc) = (a.cols() as isize, b.cols() as isize);
    Ok(gemm(a.rows(), a.cols(), b.cols(), (a.as_slice(), ac, 1), (b.as_slice(), bc, 1)))
}

/// `A·Bᵀ` without materializing the transpose.
pub fn matmul_a_bt(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.cols() {
        return Err(dim_err(format!(
            "matmul {}x{} by ({}x{})ᵀ",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let (ac, bc) = (a.cols() as isize, b.cols() as isize);
    Ok(gemm(a.rows(), a.cols(), b.rows(), (a.as_slice(), ac, 1), (b.as_slice(), 1, bc)))
}

/// `Aᵀ·B` without materializing the transpose.
pub fn matmul_at_b(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows() != b.rows() {
        return Err(dim_err(format!(
            "matmul ({}x{})ᵀ by {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let (ac, bc) = (a.cols() as isize, b.cols() as isize);
    Ok(gemm(a.cols(), a.rows(), b.cols(), (a.as_slice(), 1, ac), (b.as_slice(), bc, 1)))
}

/// Valid, stride-1 cross-correlation: `Z[i][j] = Σ_k Σ_m C[k][m]·X[i+k][j+m]`.
pub fn conv2d(x: &Matrix, filter: &Matrix) -> Result<Matrix> {
    let (l, w) = x.shape();
    let (p, q) = filter.shape();
    if p == 0 || q == 0 || p > l || q > w {
        return Err(dim_err(format!("{p}x{q} filter on {l}x{w} input")));
    }
    let (oh, ow) = (l - p + 1, w - q + 1);
    let mut z = Matrix::zeros(oh, ow);
    for k in 0..p {
        for m in 0..q {
            let c = filter[(k, m)];
            if c == 0.0 {
                continue;
            }
            for i in 0..oh {
                let src = &x.row(i + k)[m..m + ow];
                axpy(c, src, z.row_mut(i));
            }
        }
    }
    Ok(z)
}

/// 2×2 / stride-2 max pooling. Odd trailing rows/columns are dropped.
/// Ties resolve to the first maximum in row-major order.
pub fn maxpool2(x: &Matrix) -> Result<(Matrix, PoolIndices)> {
    let (h, w) = x.shape();
    let (oh, ow) = (h / 2, w / 2);
    if oh == 0 || ow == 0 {
        return Err(dim_err(format!("2x2 pooling on {h}x{w} input")));
    }
    let mut out = Matrix::zeros(oh, ow);
    let mut idx = Vec::with_capacity(oh * ow);
    for i in 0..oh {
        for j in 0..ow {
            let mut best = f64::NEG_INFINITY;
            let mut arg = (2 * i) * w + 2 * j;
            for di in 0..2 {
                for dj in 0..2 {
                    let (r, c) = (2 * i + di, 2 * j + dj);
                    let v = x[(r, c)];
                    if v > best {
                        best = v;
                        arg = r * w + c;
                    }
                }
            }
            out[(i, j)] = best;
            idx.push(arg);
        }
    }
    Ok((out, idx))
}
