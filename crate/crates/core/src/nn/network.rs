use super::spec::{Activation, LayerParams, LayerSpec, NetworkSpec, Params, Shape, LEAKY_RELU_SLOPE};
use crate::error::{dim_err, Result};
use crate::tensor::{matmul, matmul_a_bt, matmul_at_b, Matrix};

/// Everything `backward` needs from a forward pass.
#[derive(Clone, Debug)]
pub struct Cache {
    input_shape: Shape,
    shapes: Vec<Shape>,
    /// `acts[i]` is the input of layer `i`; `acts[len]` the network output.
    /// Rows are samples, features are channel-major.
    acts: Vec<Matrix>,
    /// per pooling layer: winning input feature index for every output
    /// feature of every sample
    pool_argmax: Vec<Option<Vec<usize>>>,
}

impl Cache {
    pub fn output(&self) -> &Matrix {
        self.acts.last().expect("cache holds at least the input")
    }

    pub fn activations(&self) -> &[Matrix] {
        &self.acts
    }

    /// Winning input feature of every pooled output feature, if layer `i`
    /// is a pooling layer.
    pub fn pool_winners(&self, i: usize) -> Option<&[usize]> {
        self.pool_argmax.get(i)?.as_deref()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `patches[(i·ow + j), (ch·kh + k)·kw + m] = x[ch, i+k, j+m]`
fn im2col(x: &[f64], (c, h, w): Shape, kh: usize, kw: usize) -> Matrix {
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let cols = c * kh * kw;
    let mut p = Matrix::zeros(oh * ow, cols);
    let data = p.as_mut_slice();
    for i in 0..oh {
        for j in 0..ow {
            let row = &mut data[(i * ow + j) * cols..(i * ow + j + 1) * cols];
            let mut t = 0;
            for ch in 0..c {
                for k in 0..kh {
                    let src = ch * h * w + (i + k) * w + j;
                    row[t..t + kw].copy_from_slice(&x[src..src + kw]);
                    t += kw;
                }
            }
        }
    }
    p
}

fn col2im_add(dp: &Matrix, (c, h, w): Shape, kh: usize, kw: usize, dx: &mut [f64]) {
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    for i in 0..oh {
        for j in 0..ow {
            let row = dp.row(i * ow + j);
            let mut t = 0;
            for ch in 0..c {
                for k in 0..kh {
                    let dst = ch * h * w + (i + k) * w + j;
                    for m in 0..kw {
                        dx[dst + m] += row[t + m];
                    }
                    t += kw;
                }
            }
        }
    }
}

/// Evaluates the network on a batch (`batch.rows()` samples of
/// `c·h·w` features each).
pub fn forward(spec: &NetworkSpec, params: &Params, input: Shape, batch: &Matrix) -> Result<Cache> {
    let shapes = spec.shapes(input)?;
    params.conforms_to(spec)?;
    let n_in = input.0 * input.1 * input.2;
    if batch.cols() != n_in {
        return Err(dim_err(format!(
            "batch has {} features, network input {input:?} needs {n_in}",
            batch.cols()
        )));
    }
    let bsz = batch.rows();
    let mut acts = Vec::with_capacity(spec.layers.len() + 1);
    let mut pool_argmax = Vec::with_capacity(spec.layers.len());
    acts.push(batch.clone());

    for (i, (layer, p)) in spec.layers.iter().zip(&params.layers).enumerate() {
        let in_shape = if i == 0 { input } else { shapes[i - 1] };
        let x = &acts[i];
        let mut argmax = None;
        let y = match (layer, p) {
            (LayerSpec::Dense { .. }, LayerParams::Dense(d)) => {
                let mut z = matmul_a_bt(x, &d.weight)?;
                for r in 0..bsz {
                    for (v, b) in z.row_mut(r).iter_mut().zip(&d.bias) {
                        *v += b;
                    }
                }
                z
            }
            (LayerSpec::Conv { .. }, LayerParams::Conv(c)) => {
                let out = shapes[i];
                let plane = out.1 * out.2;
                let wm = c.weight_matrix();
                let mut z = Matrix::zeros(bsz, out.0 * plane);
                for r in 0..bsz {
                    let patches = im2col(x.row(r), in_shape, c.kernel_h, c.kernel_w);
                    let o = matmul_a_bt(&wm, &patches)?;
                    let zr = z.row_mut(r);
                    for f in 0..c.filters {
                        let b = c.bias[f];
                        for (dst, v) in zr[f * plane..(f + 1) * plane].iter_mut().zip(o.row(f)) {
                            *dst = v + b;
                        }
                    }
                }
                z
            }
            (LayerSpec::MaxPool2, _) => {
                let (ch, h, w) = in_shape;
                let (_, oh, ow) = shapes[i];
                let n_out = ch * oh * ow;
                let mut z = Matrix::zeros(bsz, n_out);
                let mut idx = Vec::with_capacity(bsz * n_out);
                for r in 0..bsz {
                    let xr = x.row(r);
                    let zr = z.row_mut(r);
                    for c in 0..ch {
                        for oi in 0..oh {
                            for oj in 0..ow {
                                let mut best = f64::NEG_INFINITY;
                                let mut arg = c * h * w + 2 * oi * w + 2 * oj;
                                for di in 0..2 {
                                    for dj in 0..2 {
                                        let k = c * h * w + (2 * oi + di) * w + 2 * oj + dj;
                                        if xr[k] > best {
                                            best = xr[k];
                                            arg = k;
                                        }
                                    }
                                }
                                zr[c * oh * ow + oi * ow + oj] = best;
                                idx.push(arg);
                            }
                        }
                    }
                }
                argmax = Some(idx);
                z
            }
            (LayerSpec::Activation(a), _) => {
                let mut z = x.clone();
                match a {
                    Activation::Sigmoid => z.as_mut_slice().iter_mut().for_each(|v| *v = sigmoid(*v)),
                    Activation::LeakyRelu => z.as_mut_slice().iter_mut().for_each(|v| {
                        if *v <= 0.0 {
                            *v *= LEAKY_RELU_SLOPE
                        }
                    }),
                    Activation::Softmax => {
                        for r in 0..bsz {
                            let row = z.row_mut(r);
                            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                            let mut s = 0.0;
                            for v in row.iter_mut() {
                                *v = (*v - m).exp();
                                s += *v;
                            }
                            row.iter_mut().for_each(|v| *v /= s);
                        }
                    }
                }
                z
            }
            _ => unreachable!("params conform to spec"),
        };
        pool_argmax.push(argmax);
        acts.push(y);
    }

    Ok(Cache {
        input_shape: input,
        shapes,
        acts,
        pool_argmax,
    })
}

/// Back-propagates `output_grad` (∂L/∂output, one row per sample) and adds
/// `extra` (entropy-loss gradients, same layout as `params`) to the result.
pub fn backward(
    spec: &NetworkSpec,
    params: &Params,
    cache: &Cache,
    output_grad: &Matrix,
    extra: Option<&Params>,
) -> Result<Params> {
    if cache.acts.len() != spec.layers.len() + 1 || spec.shapes(cache.input_shape)? != cache.shapes {
        return Err(dim_err("cache does not belong to this network"));
    }
    if output_grad.shape() != cache.output().shape() {
        return Err(dim_err(format!(
            "output gradient {:?} vs output {:?}",
            output_grad.shape(),
            cache.output().shape()
        )));
    }
    let mut grads = Params::zeros(spec);
    let mut g = output_grad.clone();
    let bsz = g.rows();

    for i in (0..spec.layers.len()).rev() {
        let x = &cache.acts[i];
        let y = &cache.acts[i + 1];
        let in_shape = if i == 0 {
            cache.input_shape
        } else {
            cache.shapes[i - 1]
        };
        let need_dx = i > 0;
        g = match (&spec.layers[i], &params.layers[i], &mut grads.layers[i]) {
            (LayerSpec::Dense { .. }, LayerParams::Dense(d), LayerParams::Dense(gd)) => {
                gd.weight = matmul_at_b(&g, x)?;
                for r in 0..bsz {
                    for (b, v) in gd.bias.iter_mut().zip(g.row(r)) {
                        *b += v;
                    }
                }
                if need_dx {
                    matmul(&g, &d.weight)?
                } else {
                    Matrix::zeros(0, 0)
                }
            }
            (LayerSpec::Conv { .. }, LayerParams::Conv(c), LayerParams::Conv(gc)) => {
                let out = cache.shapes[i];
                let plane = out.1 * out.2;
                let wm = c.weight_matrix();
                let mut gw = Matrix::zeros(c.filters, wm.cols());
                let mut dx = if need_dx {
                    Matrix::zeros(bsz, x.cols())
                } else {
                    Matrix::zeros(0, 0)
                };
                for r in 0..bsz {
                    let dz = Matrix::new(c.filters, plane, g.row(r).to_vec())?;
                    for f in 0..c.filters {
                        gc.bias[f] += dz.row(f).iter().sum::<f64>();
                    }
                    let patches = im2col(x.row(r), in_shape, c.kernel_h, c.kernel_w);
                    let gwr = matmul(&dz, &patches)?;
                    for (a, b) in gw.as_mut_slice().iter_mut().zip(gwr.as_slice()) {
                        *a += b;
                    }
                    if need_dx {
                        let dp = matmul_at_b(&dz, &wm)?;
                        col2im_add(&dp, in_shape, c.kernel_h, c.kernel_w, dx.row_mut(r));
                    }
                }
                gc.weight = gw.into_vec();
                dx
            }
            (LayerSpec::MaxPool2, _, _) => {
                let idx = cache.pool_argmax[i].as_ref().expect("pool layer caches argmax");
                let n_out = y.cols();
                let mut dx = Matrix::zeros(bsz, x.cols());
                for r in 0..bsz {
                    let gr = g.row(r);
                    let dxr = dx.row_mut(r);
                    for (o, &k) in idx[r * n_out..(r + 1) * n_out].iter().enumerate() {
                        dxr[k] += gr[o];
                    }
                }
                dx
            }
            (LayerSpec::Activation(a), _, _) => {
                let mut dx = g.clone();
                match a {
                    Activation::Sigmoid => {
                        for (d, s) in dx.as_mut_slice().iter_mut().zip(y.as_slice()) {
                            *d *= s * (1.0 - s);
                        }
                    }
                    Activation::LeakyRelu => {
                        for (d, v) in dx.as_mut_slice().iter_mut().zip(x.as_slice()) {
                            if *v <= 0.0 {
                                *d *= LEAKY_RELU_SLOPE;
                            }
                        }
                    }
                    Activation::Softmax => {
                        for r in 0..bsz {
                            let s = y.row(r);
                            let gr = g.row(r);
                            let dot: f64 = s.iter().zip(gr).map(|(a, b)| a * b).sum();
                            for ((d, sv), gv) in dx.row_mut(r).iter_mut().zip(s).zip(gr) {
                                *d = sv * (gv - dot);
                            }
                        }
                    }
                }
                dx
            }
            _ => unreachable!("params conform to spec"),
        };
    }

    if let Some(extra) = extra {
        extra.conforms_to(spec)?;
        for (dst, src) in grads.buffers_mut().into_iter().zip(extra.buffers()) {
            for (a, b) in dst.iter_mut().zip(src) {
                *a += b;
            }
        }
    }
    Ok(grads)
}

/// Mean over samples and features of the squared error, and its gradient.
pub fn mse_loss(output: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    if output.shape() != target.shape() {
        return Err(dim_err(format!(
            "mse between {:?} and {:?}",
            output.shape(),
            target.shape()
        )));
    }
    let n = output.as_slice().len() as f64;
    let mut grad = Matrix::zeros(output.rows(), output.cols());
    let mut loss = 0.0;
    for ((g, o), t) in grad
        .as_mut_slice()
        .iter_mut()
        .zip(output.as_slice())
        .zip(target.as_slice())
    {
        let d = o - t;
        loss += d * d;
        *g = 2.0 * d / n;
    }
    Ok((loss / n, grad))
}

/// Mean negative log-likelihood of `labels` under row-wise probabilities,
/// and its gradient with respect to the probabilities.
pub fn cross_entropy_loss(probs: &Matrix, labels: &[u8]) -> Result<(f64, Matrix)> {
    if probs.rows() != labels.len() {
        return Err(dim_err(format!(
            "{} probability rows for {} labels",
            probs.rows(),
            labels.len()
        )));
    }
    let n = labels.len() as f64;
    let mut grad = Matrix::zeros(probs.rows(), probs.cols());
    let mut loss = 0.0;
    for (r, &l) in labels.iter().enumerate() {
        let l = l as usize;
        if l >= probs.cols() {
            return Err(dim_err(format!("label {l} with {} classes", probs.cols())));
        }
        let p = probs[(r, l)].max(f64::MIN_POSITIVE);
        loss -= p.ln();
        grad[(r, l)] = -1.0 / (n * p);
    }
    Ok((loss / n, grad))
}

pub fn argmax_rows(m: &Matrix) -> Vec<usize> {
    (0..m.rows())
        .map(|r| {
            let row = m.row(r);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
