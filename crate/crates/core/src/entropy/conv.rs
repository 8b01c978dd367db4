use crate::error::{dim_err, Result};
use crate::tensor::Matrix;

/// A 2D convolution written as matrices acting on the row-major flattened
/// input.
///
/// `cm` is the `(l-p+1)(w-q+1) x lw` block-Toeplitz matrix: `l-p+1` block
/// rows, each holding the `(w-q+1) x w` Toeplitz blocks `B_1..B_p` of the
/// filter rows shifted one block to the right per block row.
///
/// `cm_prime` is the `lw x lw` square extension: every block is padded to
/// `w x w` with `I_{q-1}` on its lower-right, and the last `(p-1)w` rows are
/// identity. It is upper triangular with `c₁₁` on `(l-p+1)(w-q+1)` diagonal
/// entries and ones elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvMatrix {
    pub filter: Matrix,
    pub input_h: usize,
    pub input_w: usize,
    pub cm: Matrix,
    pub cm_prime: Matrix,
}

impl ConvMatrix {
    pub fn output_shape(&self) -> (usize, usize) {
        (
            self.input_h - self.filter.rows() + 1,
            self.input_w - self.filter.cols() + 1,
        )
    }

    /// `reshape(cm · flatten(x))`, the convolution by matrix-vector product.
    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.shape() != (self.input_h, self.input_w) {
            return Err(dim_err(format!(
                "conv matrix built for {}x{} input, got {}x{}",
                self.input_h,
                self.input_w,
                x.rows(),
                x.cols()
            )));
        }
        let xf = Matrix::new(x.rows() * x.cols(), 1, x.flatten())?;
        let zf = crate::tensor::matmul(&self.cm, &xf)?;
        let (oh, ow) = self.output_shape();
        Matrix::new(oh, ow, zf.into_vec())
    }
}

fn check_fits(p: usize, q: usize, l: usize, w: usize) -> Result<()> {
    if p == 0 || q == 0 || p > l || q > w {
        return Err(dim_err(format!("{p}x{q} filter on {l}x{w} input")));
    }
    Ok(())
}

pub fn build_conv_matrix(filter: &Matrix, l: usize, w: usize) -> Result<ConvMatrix> {
    let (p, q) = filter.shape();
    check_fits(p, q, l, w)?;
    let (oh, ow) = (l - p + 1, w - q + 1);

    let mut cm = Matrix::zeros(oh * ow, l * w);
    for i in 0..oh {
        for j in 0..ow {
            let row = i * ow + j;
            for k in 0..p {
                for m in 0..q {
                    cm[(row, (i + k) * w + j + m)] = filter[(k, m)];
                }
            }
        }
    }

    let n = l * w;
    let mut cmp = Matrix::zeros(n, n);
    for i in 0..oh {
        // square blocks B_j^s / rectangular B_j^r
        for j in 0..ow {
            for k in 0..p {
                for m in 0..q {
                    cmp[(i * w + j, (i + k) * w + j + m)] = filter[(k, m)];
                }
            }
        }
        // I_{q-1} in the lower-right corner of every B_k'
        for t in ow..w {
            for k in 0..p {
                cmp[(i * w + t, (i + k) * w + t)] = 1.0;
            }
        }
    }
    for r in oh * w..n {
        cmp[(r, r)] = 1.0;
    }

    Ok(ConvMatrix {
        filter: filter.clone(),
        input_h: l,
        input_w: w,
        cm,
        cm_prime: cmp,
    })
}

/// Entropy change of one 2D filter slice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntropyDelta {
    pub layer_index: usize,
    pub unit_index: usize,
    pub channel_index: usize,
    /// nats over the whole output map
    pub delta_total: f64,
    /// nats per output element
    pub delta_per_element: f64,
}

/// `(l-p+1)(w-q+1)·ln|c₁₁|`; `-inf` when `c₁₁ = 0`. Indices are left at 0 for
/// the caller to fill in.
pub fn conv_entropy_delta(filter: &Matrix, l: usize, w: usize) -> Result<EntropyDelta> {
    let (p, q) = filter.shape();
    check_fits(p, q, l, w)?;
    let outputs = ((l - p + 1) * (w - q + 1)) as f64;
    let per = filter[(0, 0)].abs().ln();
    Ok(EntropyDelta {
        layer_index: 0,
        unit_index: 0,
        channel_index: 0,
        delta_total: outputs * per,
        delta_per_element: per,
    })
}
