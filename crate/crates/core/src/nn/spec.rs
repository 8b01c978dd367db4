use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::tensor::Matrix;

pub const LEAKY_RELU_SLOPE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    LeakyRelu,
    Softmax,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSpec {
    /// Fully connected, weight matrix `outputs x inputs`. A preceding
    /// feature map is flattened channel-major.
    Dense { inputs: usize, outputs: usize },
    /// `filters` filters of `in_channels x kernel_h x kernel_w`, valid, stride 1.
    Conv {
        filters: usize,
        kernel_h: usize,
        kernel_w: usize,
        in_channels: usize,
    },
    MaxPool2,
    Activation(Activation),
}

/// `(channels, height, width)`; dense activations are `(n, 1, 1)`.
pub type Shape = (usize, usize, usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    Linear,
    Sigmoid,
    Softmax,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(layers: Vec<LayerSpec>) -> Self {
        Self { layers }
    }

    /// Single-hidden-layer autoencoder: dense, sigmoid, dense (linear output).
    pub fn autoencoder(input: usize, latent: usize) -> Self {
        Self::new(vec![
            LayerSpec::Dense {
                inputs: input,
                outputs: latent,
            },
            LayerSpec::Activation(Activation::Sigmoid),
            LayerSpec::Dense {
                inputs: latent,
                outputs: input,
            },
        ])
    }

    /// Conv(3x3) + leaky ReLU + 2x2 max-pool blocks, one per entry of
    /// `widths`, followed by a dense softmax classifier.
    pub fn cnn(input: Shape, widths: &[usize], classes: usize) -> Result<Self> {
        let (mut c, mut h, mut w) = input;
        let mut layers = Vec::new();
        for &f in widths {
            if h < 3 || w < 3 {
                return Err(dim_err(format!("conv block on {h}x{w} feature map")));
            }
            layers.push(LayerSpec::Conv {
                filters: f,
                kernel_h: 3,
                kernel_w: 3,
                in_channels: c,
            });
            layers.push(LayerSpec::Activation(Activation::LeakyRelu));
            layers.push(LayerSpec::MaxPool2);
            c = f;
            h = (h - 2) / 2;
            w = (w - 2) / 2;
            if h == 0 || w == 0 {
                return Err(dim_err("feature map vanished after pooling"));
            }
        }
        layers.push(LayerSpec::Dense {
            inputs: c * h * w,
            outputs: classes,
        });
        layers.push(LayerSpec::Activation(Activation::Softmax));
        Ok(Self::new(layers))
    }

    /// Shape after every layer (index `i` is the output of layer `i`).
    pub fn shapes(&self, input: Shape) -> Result<Vec<Shape>> {
        let mut cur = input;
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            cur = match *layer {
                LayerSpec::Dense { inputs, outputs } => {
                    let n = cur.0 * cur.1 * cur.2;
                    if n != inputs {
                        return Err(dim_err(format!(
                            "layer {i}: dense expects {inputs} inputs, got {n}"
                        )));
                    }
                    if outputs == 0 {
                        return Err(dim_err(format!("layer {i}: dense with 0 outputs")));
                    }
                    (outputs, 1, 1)
                }
                LayerSpec::Conv {
                    filters,
                    kernel_h,
                    kernel_w,
                    in_channels,
                } => {
                    if cur.0 != in_channels {
                        return Err(dim_err(format!(
                            "layer {i}: conv expects {in_channels} channels, got {}",
                            cur.0
                        )));
                    }
                    if filters == 0 || kernel_h == 0 || kernel_w == 0 {
                        return Err(dim_err(format!("layer {i}: empty conv layer")));
                    }
                    if kernel_h > cur.1 || kernel_w > cur.2 {
                        return Err(dim_err(format!(
                            "layer {i}: {kernel_h}x{kernel_w} filter on {}x{} map",
                            cur.1, cur.2
                        )));
                    }
                    (filters, cur.1 - kernel_h + 1, cur.2 - kernel_w + 1)
                }
                LayerSpec::MaxPool2 => {
                    if cur.1 < 2 || cur.2 < 2 {
                        return Err(dim_err(format!(
                            "layer {i}: pooling a {}x{} map",
                            cur.1, cur.2
                        )));
                    }
                    (cur.0, cur.1 / 2, cur.2 / 2)
                }
                LayerSpec::Activation(_) => cur,
            };
            out.push(cur);
        }
        Ok(out)
    }

    /// Validates the layer chain for `input` and identifies the output head.
    pub fn validate(&self, input: Shape) -> Result<Head> {
        self.shapes(input)?;
        let n = self.layers.len();
        for (i, l) in self.layers.iter().enumerate() {
            if *l == LayerSpec::Activation(Activation::Softmax) && i + 1 != n {
                return Err(Error::InvalidArgument(format!(
                    "softmax at layer {i} is not the terminal layer"
                )));
            }
        }
        match self.layers.as_slice() {
            [.., LayerSpec::Dense { .. }] => Ok(Head::Linear),
            [.., LayerSpec::Dense { .. }, LayerSpec::Activation(Activation::Sigmoid)] => {
                Ok(Head::Sigmoid)
            }
            [.., LayerSpec::Dense { .. }, LayerSpec::Activation(Activation::Softmax)] => {
                Ok(Head::Softmax)
            }
            _ => Err(Error::InvalidArgument(
                "network must end in a dense layer, optionally followed by sigmoid or softmax"
                    .into(),
            )),
        }
    }

    /// Positions of dense layers, in order. Entropy-loss layer ordinals index
    /// into this list.
    pub fn dense_layers(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, LayerSpec::Dense { .. }))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn conv_layers(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, LayerSpec::Conv { .. }))
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseParams {
    /// `outputs x inputs`
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams {
    pub filters: usize,
    pub in_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    /// `filters x in_channels x kernel_h x kernel_w`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvParams {
    pub fn zeros(filters: usize, in_channels: usize, kernel_h: usize, kernel_w: usize) -> Self {
        Self {
            filters,
            in_channels,
            kernel_h,
            kernel_w,
            weight: vec![0.0; filters * in_channels * kernel_h * kernel_w],
            bias: vec![0.0; filters],
        }
    }

    #[inline]
    pub fn slice_len(&self) -> usize {
        self.kernel_h * self.kernel_w
    }

    #[inline]
    pub fn slice_offset(&self, filter: usize, channel: usize) -> usize {
        (filter * self.in_channels + channel) * self.slice_len()
    }

    /// The 2D kernel of `filter` acting on input `channel`.
    pub fn slice(&self, filter: usize, channel: usize) -> Matrix {
        let o = self.slice_offset(filter, channel);
        Matrix::new(
            self.kernel_h,
            self.kernel_w,
            self.weight[o..o + self.slice_len()].to_vec(),
        )
        .expect("slice length matches kernel dims")
    }

    /// Upper-left kernel element of a slice.
    pub fn c11(&self, filter: usize, channel: usize) -> f64 {
        self.weight[self.slice_offset(filter, channel)]
    }

    /// Filter bank as a `filters x (in_channels·kh·kw)` matrix.
    pub fn weight_matrix(&self) -> Matrix {
        Matrix::new(
            self.filters,
            self.in_channels * self.slice_len(),
            self.weight.clone(),
        )
        .expect("weight length matches dims")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerParams {
    Dense(DenseParams),
    Conv(ConvParams),
    None,
}

/// Trainable parameters, one entry per spec layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub layers: Vec<LayerParams>,
}

impl Params {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        let layers = spec
            .layers
            .iter()
            .map(|l| match *l {
                LayerSpec::Dense { inputs, outputs } => LayerParams::Dense(DenseParams {
                    weight: Matrix::zeros(outputs, inputs),
                    bias: vec![0.0; outputs],
                }),
                LayerSpec::Conv {
                    filters,
                    kernel_h,
                    kernel_w,
                    in_channels,
                } => LayerParams::Conv(ConvParams::zeros(filters, in_channels, kernel_h, kernel_w)),
                _ => LayerParams::None,
            })
            .collect();
        Self { layers }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng>(spec: &NetworkSpec, rng: &mut R) -> Self {
        let mut p = Self::zeros(spec);
        for layer in &mut p.layers {
            match layer {
                LayerParams::Dense(d) => {
                    let limit = (6.0 / (d.weight.rows() + d.weight.cols()) as f64).sqrt();
                    for v in d.weight.as_mut_slice() {
                        *v = rng.gen_range(-limit..limit);
                    }
                }
                LayerParams::Conv(c) => {
                    let k = c.slice_len();
                    let limit = (6.0 / ((c.in_channels + c.filters) * k) as f64).sqrt();
                    for v in &mut c.weight {
                        *v = rng.gen_range(-limit..limit);
                    }
                }
                LayerParams::None => {}
            }
        }
        p
    }

    /// Checks that every parameter block has the shape `spec` demands.
    pub fn conforms_to(&self, spec: &NetworkSpec) -> Result<()> {
        if self.layers.len() != spec.layers.len() {
            return Err(dim_err(format!(
                "{} parameter blocks for {} layers",
                self.layers.len(),
                spec.layers.len()
            )));
        }
        for (i, (p, l)) in self.layers.iter().zip(&spec.layers).enumerate() {
            let ok = match (p, *l) {
                (LayerParams::Dense(d), LayerSpec::Dense { inputs, outputs }) => {
                    d.weight.shape() == (outputs, inputs) && d.bias.len() == outputs
                }
                (
                    LayerParams::Conv(c),
                    LayerSpec::Conv {
                        filters,
                        kernel_h,
                        kernel_w,
                        in_channels,
                    },
                ) => {
                    c.filters == filters
                        && c.in_channels == in_channels
                        && c.kernel_h == kernel_h
                        && c.kernel_w == kernel_w
                        && c.weight.len() == filters * in_channels * kernel_h * kernel_w
                        && c.bias.len() == filters
                }
                (LayerParams::None, LayerSpec::MaxPool2 | LayerSpec::Activation(_)) => true,
                _ => false,
            };
            if !ok {
                return Err(dim_err(format!("parameters of layer {i} do not match {l:?}")));
            }
        }
        Ok(())
    }

    /// Every parameter buffer in a fixed order (weight then bias per layer).
    pub fn buffers(&self) -> Vec<&[f64]> {
        let mut v = Vec::new();
        for l in &self.layers {
            match l {
                LayerParams::Dense(d) => {
                    v.push(d.weight.as_slice());
                    v.push(d.bias.as_slice());
                }
                LayerParams::Conv(c) => {
                    v.push(c.weight.as_slice());
                    v.push(c.bias.as_slice());
                }
                LayerParams::None => {}
            }
        }
        v
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = Vec::new();
        for l in &mut self.layers {
            match l {
                LayerParams::Dense(d) => {
                    v.push(d.weight.as_mut_slice());
                    v.push(d.bias.as_mut_slice());
                }
                LayerParams::Conv(c) => {
                    v.push(c.weight.as_mut_slice());
                    v.push(c.bias.as_mut_slice());
                }
                LayerParams::None => {}
            }
        }
        v
    }

    pub fn num_params(&self) -> usize {
        self.buffers().iter().map(|b| b.len()).sum()
    }

    pub fn dense(&self, layer: usize) -> Option<&DenseParams> {
        match self.layers.get(layer) {
            Some(LayerParams::Dense(d)) => Some(d),
            _ => None,
        }
    }

    pub fn conv(&self, layer: usize) -> Option<&ConvParams> {
        match self.layers.get(layer) {
            Some(LayerParams::Conv(c)) => Some(c),
            _ => None,
        }
    }
}
