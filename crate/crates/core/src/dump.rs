//! `ENTW` weight dumps.
//!
//! ```text
//! magic "ENTW" | version u32 LE (=1) | entry count u32 LE
//! per entry: kind u8 | dim count u8 | dims u32 LE ... | payload f64 LE ...
//! ```
//!
//! Kinds: 0 dense `[out, in]`, 1 conv2d `[filters, in_channels, p, q]`,
//! 2 bias `[n]` (belongs to the preceding dense/conv entry), 3 max-pool 2x2,
//! 4 sigmoid, 5 leaky ReLU, 6 softmax. Kinds 3–6 carry no dims and no
//! payload. A weight entry without a following bias entry gets zero biases.

use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{Activation, ConvParams, DenseParams, LayerParams, LayerSpec, NetworkSpec, Params};
use crate::tensor::Matrix;

pub const MAGIC: &[u8; 4] = b"ENTW";
pub const VERSION: u32 = 1;

const WHAT: &str = "ENTW dump";

const KIND_DENSE: u8 = 0;
const KIND_CONV: u8 = 1;
const KIND_BIAS: u8 = 2;
const KIND_POOL: u8 = 3;
const KIND_SIGMOID: u8 = 4;
const KIND_LEAKY: u8 = 5;
const KIND_SOFTMAX: u8 = 6;

fn push_entry(out: &mut Vec<u8>, kind: u8, dims: &[usize], payload: &[f64]) -> Result<()> {
    out.push(kind);
    out.push(dims.len() as u8);
    for &d in dims {
        let d = u32::try_from(d).map_err(|_| Error::InvalidArgument(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

pub fn encode_dump(spec: &NetworkSpec, params: &Params) -> Result<Vec<u8>> {
    params.conforms_to(spec)?;
    let mut body = Vec::new();
    let mut entries: u32 = 0;
    for (layer, p) in spec.layers.iter().zip(&params.layers) {
        match (layer, p) {
            (LayerSpec::Dense { inputs, outputs }, LayerParams::Dense(d)) => {
                push_entry(&mut body, KIND_DENSE, &[*outputs, *inputs], d.weight.as_slice())?;
                push_entry(&mut body, KIND_BIAS, &[d.bias.len()], &d.bias)?;
                entries += 2;
            }
            (LayerSpec::Conv { .. }, LayerParams::Conv(c)) => {
                let dims = [c.filters, c.in_channels, c.kernel_h, c.kernel_w];
                push_entry(&mut body, KIND_CONV, &dims, &c.weight)?;
                push_entry(&mut body, KIND_BIAS, &[c.bias.len()], &c.bias)?;
                entries += 2;
            }
            (LayerSpec::MaxPool2, _) => {
                push_entry(&mut body, KIND_POOL, &[], &[])?;
                entries += 1;
            }
            (LayerSpec::Activation(a), _) => {
                let kind = match a {
                    Activation::Sigmoid => KIND_SIGMOID,
                    Activation::LeakyRelu => KIND_LEAKY,
                    Activation::Softmax => KIND_SOFTMAX,
                };
                push_entry(&mut body, kind, &[], &[])?;
                entries += 1;
            }
            _ => unreachable!("params conform to spec"),
        }
    }
    let mut out = Vec::with_capacity(12 + body.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&entries.to_le_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let left = self.bytes.len() - self.pos;
        if left < n {
            return Err(Error::Truncated {
                what: WHAT,
                offset: self.bytes.len() as u64,
                needed: (n - left) as u64,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize, at: usize) -> Result<Vec<f64>> {
        let bytes = n.checked_mul(8).ok_or_else(|| malformed(at, "payload size overflows".into()))?;
        Ok(self
            .take(bytes)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn malformed(offset: usize, reason: String) -> Error {
    Error::Malformed {
        what: WHAT,
        offset: offset as u64,
        reason,
    }
}

pub fn decode_dump(bytes: &[u8]) -> Result<(NetworkSpec, Params)> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4).map_err(|_| Error::BadMagic {
        what: WHAT,
        expected: MAGIC.to_vec(),
        found: bytes.to_vec(),
    })?;
    if magic != MAGIC {
        return Err(Error::BadMagic {
            what: WHAT,
            expected: MAGIC.to_vec(),
            found: magic.to_vec(),
        });
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(Error::Version {
            what: WHAT,
            expected: VERSION,
            found: version,
        });
    }
    let count = cur.u32()?;

    let mut layers = Vec::new();
    let mut params = Vec::new();
    for _ in 0..count {
        let at = cur.pos;
        let kind = cur.u8()?;
        let ndims = cur.u8()? as usize;
        let want = match kind {
            KIND_DENSE => 2,
            KIND_CONV => 4,
            KIND_BIAS => 1,
            KIND_POOL..=KIND_SOFTMAX => 0,
            k => return Err(malformed(at, format!("unknown entry kind {k}"))),
        };
        if ndims != want {
            return Err(malformed(at + 1, format!("kind {kind} takes {want} dims, found {ndims}")));
        }
        let dims = (0..ndims).map(|_| cur.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if dims.contains(&0) {
            return Err(malformed(at + 2, format!("zero dimension in {dims:?}")));
        }
        let numel = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| malformed(at + 2, format!("dimension product {dims:?} overflows")))?;
        let payload_at = cur.pos;
        match kind {
            KIND_DENSE => {
                let data = cur.f64s(numel, payload_at)?;
                let (outputs, inputs) = (dims[0], dims[1]);
                layers.push(LayerSpec::Dense { inputs, outputs });
                params.push(LayerParams::Dense(DenseParams {
                    weight: Matrix::new(outputs, inputs, data)?,
                    bias: vec![0.0; outputs],
                }));
            }
            KIND_CONV => {
                let data = cur.f64s(numel, payload_at)?;
                let mut c = ConvParams::zeros(dims[0], dims[1], dims[2], dims[3]);
                c.weight = data;
                layers.push(LayerSpec::Conv {
                    filters: c.filters,
                    kernel_h: c.kernel_h,
                    kernel_w: c.kernel_w,
                    in_channels: c.in_channels,
                });
                params.push(LayerParams::Conv(c));
            }
            KIND_BIAS => {
                let data = cur.f64s(numel, payload_at)?;
                let target = match params.last_mut() {
                    Some(LayerParams::Dense(d)) if d.bias.len() == numel => &mut d.bias,
                    Some(LayerParams::Conv(c)) if c.bias.len() == numel => &mut c.bias,
                    _ => return Err(malformed(at, "bias entry does not match the preceding layer".into())),
                };
                *target = data;
            }
            _ => {
                layers.push(match kind {
                    KIND_POOL => LayerSpec::MaxPool2,
                    KIND_SIGMOID => LayerSpec::Activation(Activation::Sigmoid),
                    KIND_LEAKY => LayerSpec::Activation(Activation::LeakyRelu),
                    _ => LayerSpec::Activation(Activation::Softmax),
                });
                params.push(LayerParams::None);
            }
        }
    }
    if cur.pos != bytes.len() {
        return Err(malformed(cur.pos, format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    Ok((NetworkSpec::new(layers), Params { layers: params }))
}

pub fn write_dump(spec: &NetworkSpec, params: &Params, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_dump(spec, params)?)?;
    Ok(())
}

pub fn read_dump(path: impl AsRef<Path>) -> Result<(NetworkSpec, Params)> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingData(path.to_path_buf()));
    }
    decode_dump(&std::fs::read(path)?)
}
