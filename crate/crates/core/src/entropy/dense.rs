use crate::error::{dim_err, Result};
use crate::tensor::{lu_logabsdet, LogDet, Matrix};

/// Top-left `k x k` block of an `N x d` weight matrix, `k = min(N, d)`.
pub fn square_part(w: &Matrix) -> Result<Matrix> {
    if w.is_empty() {
        return Err(dim_err("empty weight matrix"));
    }
    let k = w.rows().min(w.cols());
    w.submatrix(0, 0, k, k)
}

/// A rectangular weight matrix embedded in a square block-triangular matrix
/// whose determinant equals that of its square part.
#[derive(Clone, Debug, PartialEq)]
pub struct SquarifiedDense {
    pub original_rows: usize,
    pub original_cols: usize,
    pub wprime: Matrix,
    pub square_part: Matrix,
}

/// Builds `W'`:
///
/// * `N < d` (wide): `[[W_s, W_r], [0, I_{d-N}]]`, block upper triangular;
/// * `N = d`: `W` itself;
/// * `N > d` (tall): `[[W_s, 0], [W_r, I_{N-d}]]`, block lower triangular,
///
/// where `W_s` is the leading square block and `W_r` the leftover strip.
pub fn squarify_dense(w: &Matrix) -> Result<SquarifiedDense> {
    let square = square_part(w)?;
    let (n, d) = w.shape();
    let wprime = if n == d {
        w.clone()
    } else {
        let size = n.max(d);
        let mut wp = Matrix::zeros(size, size);
        // the original matrix keeps its place in the top-left corner; the
        // identity fills the diagonal of the padded rows/columns
        wp.set_block(0, 0, w)?;
        for i in n.min(d)..size {
            wp[(i, i)] = 1.0;
        }
        wp
    };
    Ok(SquarifiedDense {
        original_rows: n,
        original_cols: d,
        wprime,
        square_part: square,
    })
}

/// Entropy change of a dense layer, `log|det(square part)|` in nats.
pub fn dense_entropy_delta(w: &Matrix) -> Result<LogDet> {
    lu_logabsdet(&square_part(w)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn example_one() -> Matrix {
        Matrix::from_rows(&[
            [3.0, 0.0, 9.0, -3.0, 4.0],
            [1.0, 5.0, -1.0, 4.0, 2.0],
            [0.0, 4.0, -2.0, 1.0, 5.0],
        ])
    }

    #[test]
    fn example_one_square_part() {
        let s = square_part(&example_one()).unwrap();
        assert_eq!(
            s,
            Matrix::from_rows(&[[3.0, 0.0, 9.0], [1.0, 5.0, -1.0], [0.0, 4.0, -2.0]])
        );
    }

    #[test]
    fn example_one_wprime() {
        let sq = squarify_dense(&example_one()).unwrap();
        let expected = Matrix::from_rows(&[
            [3.0, 0.0, 9.0, -3.0, 4.0],
            [1.0, 5.0, -1.0, 4.0, 2.0],
            [0.0, 4.0, -2.0, 1.0, 5.0],
            [0.0, 0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 1.0],
        ]);
        assert_eq!(sq.wprime, expected);
        assert_eq!(sq.original_rows, 3);
        assert_eq!(sq.original_cols, 5);
    }

    #[test]
    fn example_one_delta_is_ln_18() {
        // cofactor expansion along row 0: 3·(5·-2 - -1·4) - 0 + 9·(1·4 - 5·0) = -18 + 36
        let d = dense_entropy_delta(&example_one()).unwrap();
        assert_abs_diff_eq!(d.log_abs, 18f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(d.log_abs, 2.890372, epsilon = 1e-6);
        assert_eq!(d.sign, 1);
    }

    #[test]
    fn square_and_tall_cases() {
        let w = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(square_part(&w).unwrap(), w);
        assert_eq!(squarify_dense(&w).unwrap().wprime, w);

        let tall = Matrix::from_fn(5, 3, |i, j| (i * 3 + j) as f64);
        assert_eq!(square_part(&tall).unwrap(), tall.submatrix(0, 0, 3, 3).unwrap());
        let wp = squarify_dense(&tall).unwrap().wprime;
        assert_eq!(wp.shape(), (5, 5));
        // zero block top-right, strip bottom-left, identity bottom-right
        assert_eq!(wp[(0, 3)], 0.0);
        assert_eq!(wp[(2, 4)], 0.0);
        assert_eq!(wp[(4, 1)], tall[(4, 1)]);
        assert_eq!(wp[(3, 3)], 1.0);
        assert_eq!(wp[(3, 4)], 0.0);
    }

    #[test]
    fn identity_weight_preserves_entropy() {
        assert_eq!(dense_entropy_delta(&Matrix::identity(4)).unwrap().log_abs, 0.0);
    }

    #[test]
    fn empty_rejected() {
        assert!(square_part(&Matrix::zeros(0, 3)).is_err());
    }
}
