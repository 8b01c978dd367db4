use super::Matrix;
use crate::error::{dim_err, Error, Result};

/// Pivots with magnitude below this are treated as exact zeros.
pub const SINGULAR_PIVOT: f64 = 1e-300;

/// `log|det M|` together with the sign of the determinant.
///
/// A singular matrix is `{ log_abs: -inf, sign: 0 }`; no other combination
/// uses `sign == 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogDet {
    pub log_abs: f64,
    pub sign: i8,
}

impl LogDet {
    pub const SINGULAR: LogDet = LogDet {
        log_abs: f64::NEG_INFINITY,
        sign: 0,
    };

    pub fn is_singular(&self) -> bool {
        self.sign == 0
    }

    /// `|det|`, which underflows to 0 (or overflows to inf) outside the f64
    /// range. Prefer `log_abs` for anything but the last step of a formula.
    pub fn abs_det(&self) -> f64 {
        if self.sign == 0 {
            0.0
        } else {
            self.log_abs.exp()
        }
    }
}

/// LU factorization with partial pivoting, `P·A = L·U`, packed in one matrix
/// (unit lower triangle implicit).
#[derive(Clone, Debug)]
pub struct Lu {
    packed: Matrix,
    perm: Vec<usize>,
    parity: i8,
    singular: bool,
}

impl Lu {
    pub fn factor(m: &Matrix) -> Result<Lu> {
        if !m.is_square() {
            return Err(dim_err(format!(
                "LU needs a square matrix, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        let n = m.rows();
        let mut a = m.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut parity = 1i8;
        let mut singular = false;

        for k in 0..n {
            let mut p = k;
            let mut best = a[(k, k)].abs();
            for i in k + 1..n {
                let v = a[(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best >= SINGULAR_PIVOT) {
                singular = true;
                continue;
            }
            if p != k {
                for j in 0..n {
                    let s = a.as_slice()[p * n + j];
                    a.as_mut_slice()[p * n + j] = a.as_slice()[k * n + j];
                    a.as_mut_slice()[k * n + j] = s;
                }
                perm.swap(p, k);
                parity = -parity;
            }
            let pivot = a[(k, k)];
            let data = a.as_mut_slice();
            let (upper, lower) = data.split_at_mut((k + 1) * n);
            let pivot_row = &upper[k * n..(k + 1) * n];
            for row in lower.chunks_exact_mut(n) {
                let factor = row[k] / pivot;
                row[k] = factor;
                if factor != 0.0 {
                    for j in k + 1..n {
                        row[j] -= factor * pivot_row[j];
                    }
                }
            }
        }

        Ok(Lu {
            packed: a,
            perm,
            parity,
            singular,
        })
    }

    pub fn dim(&self) -> usize {
        self.packed.rows()
    }

    pub fn is_singular(&self) -> bool {
        self.singular
    }

    pub fn logabsdet(&self) -> LogDet {
        if self.singular {
            return LogDet::SINGULAR;
        }
        let mut log_abs = 0.0;
        let mut sign = self.parity;
        for i in 0..self.dim() {
            let u = self.packed[(i, i)];
            log_abs += u.abs().ln();
            if u < 0.0 {
                sign = -sign;
            }
        }
        LogDet { log_abs, sign }
    }

    /// Solves `A x = b` using the stored factors.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if b.len() != n {
            return Err(dim_err(format!("rhs length {} for {n}x{n} system", b.len())));
        }
        if self.singular {
            return Err(Error::Singular("cannot solve with a singular factorization".into()));
        }
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.packed.row(i);
            let mut s = x[i];
            for j in 0..i {
                s -= row[j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let row = self.packed.row(i);
            let mut s = x[i];
            for j in i + 1..n {
                s -= row[j] * x[j];
            }
            x[i] = s / row[i];
        }
        Ok(x)
    }

    /// `(A⁻¹)ᵀ`, the derivative of `log|det A|` with respect to `A`.
    pub fn inverse_transpose(&self) -> Result<Matrix> {
        let n = self.dim();
        let mut out = Matrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            // column j of A⁻¹ is row j of A⁻ᵀ
            let col = self.solve(&e)?;
            out.row_mut(j).copy_from_slice(&col);
            e[j] = 0.0;
        }
        Ok(out)
    }
}

/// `log|det M|` and its sign via LU with partial pivoting; never forms the
/// determinant itself.
pub fn lu_logabsdet(m: &Matrix) -> Result<LogDet> {
    Ok(Lu::factor(m)?.logabsdet())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cofactor_det(m: &Matrix) -> f64 {
        let n = m.rows();
        if n == 1 {
            return m[(0, 0)];
        }
        (0..n)
            .map(|j| {
                let minor = Matrix::from_fn(n - 1, n - 1, |r, c| {
                    m[(r + 1, if c < j { c } else { c + 1 })]
                });
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                s * m[(0, j)] * cofactor_det(&minor)
            })
            .sum()
    }

    #[test]
    fn identity_has_zero_logdet() {
        let d = lu_logabsdet(&Matrix::identity(3)).unwrap();
        assert_eq!(d, LogDet { log_abs: 0.0, sign: 1 });
    }

    #[test]
    fn two_by_two_matches_cofactor() {
        let m = Matrix::from_rows(&[[2.0, 1.0], [4.0, 3.0]]);
        assert_eq!(cofactor_det(&m), 2.0);
        let d = lu_logabsdet(&m).unwrap();
        assert_abs_diff_eq!(d.log_abs, 2f64.ln(), epsilon = 1e-15);
        assert_eq!(d.sign, 1);
    }

    #[test]
    fn rank_deficient_is_singular() {
        let d = lu_logabsdet(&Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0]])).unwrap();
        assert_eq!(d.sign, 0);
        assert_eq!(d.log_abs, f64::NEG_INFINITY);
        assert_eq!(d.abs_det(), 0.0);
    }

    #[test]
    fn non_square_is_dimension_error() {
        let err = lu_logabsdet(&Matrix::zeros(2, 3)).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn sign_tracks_row_swaps() {
        let m = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        assert_eq!(lu_logabsdet(&m).unwrap(), LogDet { log_abs: 0.0, sign: -1 });
        let m = Matrix::from_rows(&[[-3.0, 0.5, 2.0], [1.0, 4.0, -1.0], [2.0, -2.0, 5.0]]);
        let det = cofactor_det(&m);
        let d = lu_logabsdet(&m).unwrap();
        assert_abs_diff_eq!(d.log_abs, det.abs().ln(), epsilon = 1e-13);
        assert_eq!(d.sign as f64, det.signum());
    }

    #[test]
    fn tiny_determinant_does_not_underflow() {
        // det = 1e-400, below the smallest f64 subnormal
        let m = Matrix::from_fn(4, 4, |i, j| if i == j { 1e-100 } else { 0.0 });
        let d = lu_logabsdet(&m).unwrap();
        assert_abs_diff_eq!(d.log_abs, -400.0 * 10f64.ln(), epsilon = 1e-10);
        assert_eq!(d.sign, 1);
    }

    #[test]
    fn inverse_transpose_times_transpose_is_identity() {
        let m = Matrix::from_rows(&[[2.0, 1.0, 0.0], [4.0, 3.0, 1.0], [0.0, -1.0, 2.0]]);
        let it = Lu::factor(&m).unwrap().inverse_transpose().unwrap();
        let prod = super::super::matmul(&m.transpose(), &it).unwrap();
        assert!(prod.max_abs_diff(&Matrix::identity(3)) < 1e-14);
    }

    #[test]
    fn solve_on_singular_errors() {
        let lu = Lu::factor(&Matrix::zeros(2, 2)).unwrap();
        assert!(matches!(lu.solve(&[1.0, 1.0]), Err(Error::Singular(_))));
    }
}
