//! Network checkpoints.
//!
//! Layout (integers little-endian):
//!
//! ```text
//! magic         4 bytes "VSNN"
//! version       u32 = 1
//! frozen_prefix u32
//! architecture  u32 length + UTF-8, one layer per line
//! tensor count  u32
//! per tensor    name (u32 + UTF-8), ndim u32, dims u32 each, f32 data
//! ```
//!
//! Tensors are stored as 32-bit floats in layer order, parameters first
//! and running statistics after, named `layer{i}.{local}`. Loading then
//! saving a checkpoint reproduces the file byte for byte.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use super::conv::ConvLayer;
use super::dense::DenseLayer;
use super::layer::{Layer, ResidualKind};
use super::lstm::LstmLayer;
use super::norm::BatchNormLayer;
use super::residual::ResidualBlock;
use super::network::Network;
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"VSNN";
const VERSION: u32 = 1;

fn arch_line<F: Scalar>(layer: &Layer<F>) -> String {
    match layer {
        Layer::Dense(d) => format!("dense units={}", d.out_dim),
        Layer::Conv2d(c) => format!(
            "conv2d filters={} kernel={} stride={} pad={}",
            c.out_channels, c.kernel, c.stride, c.pad
        ),
        Layer::MaxPool => "maxpool".into(),
        Layer::Relu => "relu".into(),
        Layer::Softmax { dim } => format!("softmax dim={dim}"),
        Layer::Dropout { rate } => format!("dropout rate={rate}"),
        Layer::Lstm(l) => format!(
            "lstm units={} seq={}",
            l.units,
            if l.return_sequences { 1 } else { 0 }
        ),
        Layer::BatchNorm(_) => "batchnorm".into(),
        Layer::Residual(r) => format!(
            "residual kind={} in={} channels={} stride={}",
            match r.kind {
                ResidualKind::Basic => "basic",
                ResidualKind::Bottleneck => "bottleneck",
            },
            residual_in_channels(r),
            r.channels,
            r.stride
        ),
    }
}

fn residual_in_channels<F: Scalar>(r: &ResidualBlock<F>) -> usize {
    // first main conv weight is (out, in*k*k)
    let w = r.params()[0];
    let k = match r.kind {
        ResidualKind::Basic => 3,
        ResidualKind::Bottleneck => 1,
    };
    w.shape[1] / (k * k)
}

/// Serialises a network; parameters are converted to f32.
pub fn save_network<F: Scalar>(net: &Network<F>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let path_str = path.display().to_string();

    let arch: String = net
        .layers
        .iter()
        .map(|l| arch_line(l))
        .collect::<Vec<_>>()
        .join("\n");

    let mut tensors: Vec<(String, &Tensor<F>)> = Vec::new();
    for (i, layer) in net.layers.iter().enumerate() {
        for (name, p) in layer.param_names().iter().zip(layer.params()) {
            tensors.push((format!("layer{i}.{name}"), p));
        }
        for (name, b) in layer.buffers() {
            tensors.push((format!("layer{i}.{name}"), b));
        }
    }

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(net.frozen_prefix() as u32).to_le_bytes());
    out.extend_from_slice(&(arch.len() as u32).to_le_bytes());
    out.extend_from_slice(arch.as_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, tensor) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(tensor.shape.len() as u32).to_le_bytes());
        for &d in &tensor.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &tensor.data {
            out.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
        }
    }

    let mut f = std::fs::File::create(path).map_err(|e| Error::io(&path_str, e))?;
    f.write_all(&out).map_err(|e| Error::io(&path_str, e))?;
    Ok(())
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let b = self.take(len)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::Checkpoint("bad utf-8".into()))
    }
}

fn parse_attrs(line: &str) -> (String, BTreeMap<String, String>) {
    let mut parts = line.split_whitespace();
    let kind = parts.next().unwrap_or_default().to_string();
    let attrs = parts
        .filter_map(|p| {
            p.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
        })
        .collect();
    (kind, attrs)
}

/// Loads a checkpoint into an f32 network.
pub fn load_network(path: impl AsRef<Path>) -> Result<Network<f32>> {
    let path = path.as_ref();
    let path_str = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|e| Error::io(&path_str, e))?;
    let mut r = ByteReader {
        bytes: &bytes,
        pos: 0,
    };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint(format!("{path_str}: bad magic")));
    }
    if r.u32()? != VERSION {
        return Err(Error::Checkpoint(format!("{path_str}: unsupported version")));
    }
    let frozen_prefix = r.u32()? as usize;
    let arch = r.string()?;
    let tensor_count = r.u32()? as usize;
    let mut tensors: BTreeMap<String, Tensor<f32>> = BTreeMap::new();
    for _ in 0..tensor_count {
        let name = r.string()?;
        let ndim = r.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32()? as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = r.take(numel * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        tensors.insert(name, Tensor::from_vec(&shape, data));
    }

    let missing = |name: &str| Error::Checkpoint(format!("{path_str}: missing tensor {name}"));
    let mut take = |name: String| -> Result<Tensor<f32>> {
        tensors.remove(&name).ok_or_else(|| missing(&name))
    };

    let attr = |attrs: &BTreeMap<String, String>, key: &str| -> Result<usize> {
        attrs
            .get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Checkpoint(format!("{path_str}: missing attribute {key}")))
    };

    let mut layers = Vec::new();
    for (i, line) in arch.lines().enumerate() {
        let (kind, attrs) = parse_attrs(line);
        let layer = match kind.as_str() {
            "dense" => {
                let w = take(format!("layer{i}.w"))?;
                let b = take(format!("layer{i}.b"))?;
                Layer::Dense(DenseLayer::from_params(w, b))
            }
            "conv2d" => {
                let kernel = attr(&attrs, "kernel")?;
                let stride = attr(&attrs, "stride")?;
                let pad = attr(&attrs, "pad")?;
                let w = take(format!("layer{i}.w"))?;
                let b = take(format!("layer{i}.b"))?;
                let in_channels = w.shape[1] / (kernel * kernel);
                Layer::Conv2d(ConvLayer::from_params(w, b, in_channels, kernel, stride, pad))
            }
            "maxpool" => Layer::MaxPool,
            "relu" => Layer::Relu,
            "softmax" => Layer::Softmax {
                dim: attr(&attrs, "dim")?,
            },
            "dropout" => {
                let rate: f64 = attrs
                    .get("rate")
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::Checkpoint("missing dropout rate".into()))?;
                Layer::Dropout { rate }
            }
            "lstm" => {
                let seq = attr(&attrs, "seq")? == 1;
                let w_ih = take(format!("layer{i}.w_ih"))?;
                let w_hh = take(format!("layer{i}.w_hh"))?;
                let b = take(format!("layer{i}.b"))?;
                Layer::Lstm(LstmLayer::from_params(w_ih, w_hh, b, seq))
            }
            "batchnorm" => {
                let gamma = take(format!("layer{i}.gamma"))?;
                let beta = take(format!("layer{i}.beta"))?;
                let mean = take(format!("layer{i}.running_mean"))?;
                let var = take(format!("layer{i}.running_var"))?;
                let channels = gamma.shape[0];
                let mut bn = BatchNormLayer::new(channels);
                bn.gamma = gamma;
                bn.beta = beta;
                bn.running_mean = mean;
                bn.running_var = var;
                Layer::BatchNorm(bn)
            }
            "residual" => {
                let block_kind = match attrs.get("kind").map(String::as_str) {
                    Some("basic") => ResidualKind::Basic,
                    Some("bottleneck") => ResidualKind::Bottleneck,
                    other => {
                        return Err(Error::Checkpoint(format!(
                            "{path_str}: unknown residual kind {other:?}"
                        )))
                    }
                };
                let in_channels = attr(&attrs, "in")?;
                let channels = attr(&attrs, "channels")?;
                let stride = attr(&attrs, "stride")?;
                Layer::Residual(ResidualBlock::from_named_params(
                    block_kind,
                    in_channels,
                    channels,
                    stride,
                    |local| take(format!("layer{i}.{local}")),
                )?)
            }
            other => {
                return Err(Error::Checkpoint(format!(
                    "{path_str}: unknown layer kind {other:?} at line {i}"
                )))
            }
        };
        layers.push(layer);
    }

    if !tensors.is_empty() {
        let extra: Vec<&String> = tensors.keys().collect();
        return Err(Error::Checkpoint(format!(
            "{path_str}: unused tensors {extra:?}"
        )));
    }

    let mut net = Network::new(layers);
    net.set_frozen_prefix(frozen_prefix);
    Ok(net)
}
