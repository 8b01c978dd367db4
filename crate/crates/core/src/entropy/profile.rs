use super::{conv_entropy_delta, dense_entropy_delta, EntropyDelta};
use crate::error::{dim_err, Result};
use crate::nn::{LayerParams, LayerSpec, NetworkSpec, Params};
use crate::stats::BoxStats;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Dense,
    Conv,
}

impl LayerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Dense => "dense",
            LayerKind::Conv => "conv2d",
        }
    }
}

/// Entropy-change statistics for one dense or conv layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerProfile {
    pub layer_index: usize,
    pub kind: LayerKind,
    /// spatial dims `(l, w)` of the layer input; `(inputs, 1)` for dense
    pub dims: (usize, usize),
    /// one entry per filter (conv: mean over channel slices) or a single
    /// entry for a dense layer
    pub units: Vec<EntropyDelta>,
    /// every (filter, channel) slice; empty for dense layers
    pub slices: Vec<EntropyDelta>,
    pub total: BoxStats,
    pub per_element: BoxStats,
    /// `(unit_index, delta_total)` outside the 1.5·IQR fences
    pub outliers: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProfileReport {
    pub layers: Vec<LayerProfile>,
}

fn summarize(
    layer_index: usize,
    kind: LayerKind,
    dims: (usize, usize),
    units: Vec<EntropyDelta>,
    slices: Vec<EntropyDelta>,
) -> LayerProfile {
    let totals: Vec<f64> = units.iter().map(|u| u.delta_total).collect();
    let per: Vec<f64> = units.iter().map(|u| u.delta_per_element).collect();
    let total = BoxStats::of(&totals).expect("layer has at least one unit");
    let per_element = BoxStats::of(&per).expect("layer has at least one unit");
    let outliers = units
        .iter()
        .filter(|u| total.is_outlier(u.delta_total))
        .map(|u| (u.unit_index, u.delta_total))
        .collect();
    LayerProfile {
        layer_index,
        kind,
        dims,
        units,
        slices,
        total,
        per_element,
        outliers,
    }
}

/// Walks `spec` from an `input_h x input_w` input and reports the entropy
/// change of every dense layer and every conv filter.
///
/// Spatial dims follow valid convolution (`l - p + 1`) and floor-halving for
/// pooling. A multi-channel filter's delta is the mean of its slices'
/// deltas, each slice treated as an independent 2D convolution.
pub fn profile_network(
    spec: &NetworkSpec,
    params: &Params,
    input_h: usize,
    input_w: usize,
) -> Result<ProfileReport> {
    params.conforms_to(spec)?;
    if input_h == 0 || input_w == 0 {
        return Err(dim_err(format!("input dims {input_h}x{input_w}")));
    }
    let (mut l, mut w) = (input_h, input_w);
    let mut layers = Vec::new();

    for (idx, (layer, p)) in spec.layers.iter().zip(&params.layers).enumerate() {
        match (layer, p) {
            (LayerSpec::Conv { .. }, LayerParams::Conv(c)) => {
                if c.kernel_h > l || c.kernel_w > w {
                    return Err(dim_err(format!(
                        "layer {idx}: {}x{} filter on tracked {l}x{w} map",
                        c.kernel_h, c.kernel_w
                    )));
                }
                let mut units = Vec::with_capacity(c.filters);
                let mut slices = Vec::with_capacity(c.filters * c.in_channels);
                for f in 0..c.filters {
                    let (mut tot, mut per) = (0.0, 0.0);
                    for ch in 0..c.in_channels {
                        let mut d = conv_entropy_delta(&c.slice(f, ch), l, w)?;
                        d.layer_index = idx;
                        d.unit_index = f;
                        d.channel_index = ch;
                        tot += d.delta_total;
                        per += d.delta_per_element;
                        slices.push(d);
                    }
                    let k = c.in_channels as f64;
                    units.push(EntropyDelta {
                        layer_index: idx,
                        unit_index: f,
                        channel_index: 0,
                        delta_total: tot / k,
                        delta_per_element: per / k,
                    });
                }
                layers.push(summarize(idx, LayerKind::Conv, (l, w), units, slices));
                l = l - c.kernel_h + 1;
                w = w - c.kernel_w + 1;
            }
            (LayerSpec::Dense { inputs, outputs }, LayerParams::Dense(d)) => {
                let ld = dense_entropy_delta(&d.weight)?;
                let k = (*inputs).min(*outputs) as f64;
                let unit = EntropyDelta {
                    layer_index: idx,
                    unit_index: 0,
                    channel_index: 0,
                    delta_total: ld.log_abs,
                    delta_per_element: ld.log_abs / k,
                };
                layers.push(summarize(idx, LayerKind::Dense, (*inputs, 1), vec![unit], vec![]));
                l = *outputs;
                w = 1;
            }
            (LayerSpec::MaxPool2, _) => {
                l /= 2;
                w /= 2;
                if l == 0 || w == 0 {
                    return Err(dim_err(format!("layer {idx}: pooling leaves an empty map")));
                }
            }
            _ => {}
        }
    }
    Ok(ProfileReport { layers })
}
