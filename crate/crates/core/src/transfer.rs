//! Deep architectures, four-class pre-training, head replacement and
//! bottleneck extraction.
//!
//! All three architectures share the same dense tail while pre-training:
//! 512 and 64 relu units followed by a four-way softmax. After pre-training
//! the last two of those layers are discarded, leaving a frozen backbone
//! whose 512-dimensional relu output serves both as the attachment point
//! for a small trainable classification head and as a bottleneck feature
//! vector for shallow classifiers.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{trim_silence, ClassLabel, Manifest, PretrainClass, TrimConfig};
use crate::balance::{smote, SmoteConfig};
use crate::error::{Error, Result};
use crate::features::{extract_features, FeatureConfig, FeatureMatrix};
use crate::nn::{
    checkpoint, train, BatchNormLayer, ConvLayer, DenseLayer, Init, Layer, LstmLayer, Network,
    ResidualBlock, ResidualKind, Tensor, TrainConfig,
};
use crate::rng::{mix, Rng};

/// Bottleneck width; the backbone always ends in a relu layer of this size.
pub const BACKBONE_DIM: usize = 512;
/// Hidden width of the discarded pre-training tail.
const PRETRAIN_HIDDEN: usize = 64;
/// Default width of the replacement fine-tuning head.
pub const DEFAULT_HEAD_UNITS: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchitectureKind {
    Cnn,
    Lstm,
    Resnet,
}

impl ArchitectureKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ArchitectureKind::Cnn => "cnn",
            ArchitectureKind::Lstm => "lstm",
            ArchitectureKind::Resnet => "resnet",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cnn" => Some(ArchitectureKind::Cnn),
            "lstm" => Some(ArchitectureKind::Lstm),
            "resnet" => Some(ArchitectureKind::Resnet),
            _ => None,
        }
    }
}

/// Residual stack depth.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResnetProfile {
    /// The standard 50-layer bottleneck stack.
    Standard50,
    /// A narrow 10-layer variant for desk-scale runs and CI.
    Small10,
}

/// Residual stem geometry.
struct StemSpec {
    channels: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    pool: bool,
}

impl ResnetProfile {
    /// (block kind, stem, stages as (base channels, blocks, first stride)).
    fn profile(&self) -> (ResidualKind, StemSpec, Vec<(usize, usize, usize)>) {
        match self {
            ResnetProfile::Standard50 => (
                ResidualKind::Bottleneck,
                StemSpec {
                    channels: 64,
                    kernel: 7,
                    stride: 2,
                    pad: 3,
                    pool: true,
                },
                vec![(64, 3, 1), (128, 4, 2), (256, 6, 2), (512, 3, 2)],
            ),
            ResnetProfile::Small10 => (
                ResidualKind::Basic,
                StemSpec {
                    channels: 16,
                    kernel: 5,
                    stride: 2,
                    pad: 2,
                    pool: false,
                },
                vec![(16, 1, 2), (32, 1, 2), (48, 1, 2), (64, 1, 1)],
            ),
        }
    }
}

/// Architecture hyperparameters; defaults follow the pre-training setup.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ArchOptions {
    pub cnn_filters: [usize; 3],
    pub cnn_kernel: usize,
    pub lstm_units: [usize; 3],
    pub dropout: f64,
    pub resnet: ResnetProfile,
    /// Output classes of the terminal softmax.
    pub classes: usize,
}

impl Default for ArchOptions {
    fn default() -> Self {
        ArchOptions {
            cnn_filters: [256, 128, 64],
            cnn_kernel: 2,
            lstm_units: [512, 256, 128],
            dropout: 0.2,
            resnet: ResnetProfile::Standard50,
            classes: 4,
        }
    }
}

fn conv_out(h: usize, k: usize, stride: usize, pad: usize) -> usize {
    (h + 2 * pad - k) / stride + 1
}

/// Builds one of the three architectures for feature matrices of
/// `input_shape` = (rows, segments). Initialisation is seeded and
/// deterministic.
pub fn build_architecture(
    kind: ArchitectureKind,
    input_shape: (usize, usize),
    seed: u64,
) -> Result<Network<f32>> {
    build_architecture_with(kind, input_shape, seed, &ArchOptions::default())
}

pub fn build_architecture_with(
    kind: ArchitectureKind,
    input_shape: (usize, usize),
    seed: u64,
    opts: &ArchOptions,
) -> Result<Network<f32>> {
    let (rows, segments) = input_shape;
    if rows == 0 || segments == 0 {
        return Err(Error::Validation("empty input shape".into()));
    }
    let mut rng = Rng::seed_from(mix(seed, &[0x1347]));
    let mut layers: Vec<Layer<f32>> = Vec::new();
    let dense_input;

    match kind {
        ArchitectureKind::Cnn => {
            let (mut h, mut w) = (rows, segments);
            let mut in_ch = 1;
            for &filters in &opts.cnn_filters {
                if h < opts.cnn_kernel || w < opts.cnn_kernel || h < 2 || w < 2 {
                    return Err(Error::Validation(format!(
                        "input {input_shape:?} too small for the convolutional stack"
                    )));
                }
                layers.push(Layer::Conv2d(ConvLayer::new(
                    in_ch,
                    filters,
                    opts.cnn_kernel,
                    1,
                    0,
                    &mut rng,
                )));
                layers.push(Layer::Relu);
                layers.push(Layer::MaxPool);
                h = conv_out(h, opts.cnn_kernel, 1, 0) / 2;
                w = conv_out(w, opts.cnn_kernel, 1, 0) / 2;
                in_ch = filters;
            }
            layers.push(Layer::Dropout { rate: opts.dropout });
            dense_input = in_ch * h * w;
        }
        ArchitectureKind::Lstm => {
            let mut in_dim = rows;
            let last = opts.lstm_units.len() - 1;
            for (i, &units) in opts.lstm_units.iter().enumerate() {
                layers.push(Layer::Lstm(LstmLayer::new(
                    in_dim,
                    units,
                    i < last,
                    &mut rng,
                )));
                layers.push(Layer::Dropout { rate: opts.dropout });
                in_dim = units;
            }
            dense_input = in_dim;
        }
        ArchitectureKind::Resnet => {
            let (block_kind, stem, stages) = opts.resnet.profile();
            layers.push(Layer::Conv2d(ConvLayer::new(
                1,
                stem.channels,
                stem.kernel,
                stem.stride,
                stem.pad,
                &mut rng,
            )));
            layers.push(Layer::BatchNorm(BatchNormLayer::new(stem.channels)));
            layers.push(Layer::Relu);
            let mut h = conv_out(rows, stem.kernel, stem.stride, stem.pad);
            let mut w = conv_out(segments, stem.kernel, stem.stride, stem.pad);
            if stem.pool {
                layers.push(Layer::MaxPool);
                h /= 2;
                w /= 2;
            }
            let mut in_ch = stem.channels;
            for (base, blocks, first_stride) in stages {
                for b in 0..blocks {
                    let stride = if b == 0 { first_stride } else { 1 };
                    if h < stride || w < stride || h == 0 || w == 0 {
                        return Err(Error::Validation(format!(
                            "input {input_shape:?} too small for the residual stack"
                        )));
                    }
                    let block =
                        ResidualBlock::new(block_kind, in_ch, base, stride, &mut rng);
                    in_ch = block.out_channels();
                    layers.push(Layer::Residual(block));
                    h = conv_out(h, 3, stride, 1);
                    w = conv_out(w, 3, stride, 1);
                }
            }
            dense_input = in_ch * h * w;
        }
    }

    layers.push(Layer::Dense(DenseLayer::new(
        dense_input,
        BACKBONE_DIM,
        Init::HeUniform,
        &mut rng,
    )));
    layers.push(Layer::Relu);
    layers.push(Layer::Dense(DenseLayer::new(
        BACKBONE_DIM,
        PRETRAIN_HIDDEN,
        Init::HeUniform,
        &mut rng,
    )));
    layers.push(Layer::Relu);
    layers.push(Layer::Dense(DenseLayer::new(
        PRETRAIN_HIDDEN,
        opts.classes,
        Init::GlorotUniform,
        &mut rng,
    )));
    layers.push(Layer::Softmax { dim: opts.classes });

    Ok(Network::new(layers))
}

/// Converts a feature matrix into the architecture's input tensor:
/// a single-channel (1, rows, segments) image for convolutional stacks, or
/// a (segments, rows) step sequence for the recurrent stack.
pub fn input_tensor(kind: ArchitectureKind, m: &FeatureMatrix) -> Tensor<f32> {
    match kind {
        ArchitectureKind::Cnn | ArchitectureKind::Resnet => Tensor::from_vec(
            &[1, m.rows, m.cols],
            m.data.iter().map(|&v| v as f32).collect(),
        ),
        ArchitectureKind::Lstm => {
            let mut data = vec![0.0f32; m.rows * m.cols];
            for t in 0..m.cols {
                for r in 0..m.rows {
                    data[t * m.rows + r] = m.get(r, t) as f32;
                }
            }
            Tensor::from_vec(&[m.cols, m.rows], data)
        }
    }
}

/// Training provenance retained with a backbone.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Provenance {
    pub feature_echo: String,
    pub train: TrainConfig,
    pub data_fingerprint: u64,
    pub final_loss: f64,
}

/// A pre-trained network truncated after its 512-unit relu layer, with all
/// parameters frozen.
pub struct PretrainedBackbone {
    pub network: Network<f32>,
    pub kind: ArchitectureKind,
    pub feature: FeatureConfig,
    pub provenance: Provenance,
}

impl PretrainedBackbone {
    pub fn output_dim(&self) -> usize {
        BACKBONE_DIM
    }
}

/// Options for the pre-training run.
#[derive(Clone, Debug)]
pub struct PretrainOptions {
    pub arch: ArchOptions,
    /// Oversample under-represented classes up to the majority count.
    pub smote_minority: bool,
    pub trim: Option<TrimConfig>,
}

impl Default for PretrainOptions {
    fn default() -> Self {
        PretrainOptions {
            arch: ArchOptions::default(),
            smote_minority: false,
            trim: Some(TrimConfig::default()),
        }
    }
}

fn manifest_fingerprint(manifest: &Manifest) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for e in &manifest.entries {
        for b in e
            .source_path
            .bytes()
            .chain(e.subject_id.bytes())
            .chain(e.label.as_str().bytes())
        {
            h ^= b as u64;
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
    }
    h
}

/// Loads, resamples, trims and featurises every manifest entry.
pub fn prepare_features(
    manifest: &Manifest,
    cfg: &FeatureConfig,
    trim: Option<&TrimConfig>,
) -> Result<Vec<FeatureMatrix>> {
    manifest
        .entries
        .par_iter()
        .map(|entry| {
            let clip = manifest.load_clip(entry)?;
            let clip = crate::audio::resample(&clip, cfg.sample_rate);
            let clip = match trim {
                Some(t) => trim_silence(&clip, t),
                None => clip,
            };
            Ok(extract_features(&clip, cfg))
        })
        .collect()
}

/// Pre-trains an architecture on the four-class task and returns the frozen
/// backbone.
pub fn pretrain(
    kind: ArchitectureKind,
    manifest: &Manifest,
    feature: &FeatureConfig,
    train_cfg: &TrainConfig,
    opts: &PretrainOptions,
) -> Result<PretrainedBackbone> {
    // labels must come from the pre-training vocabulary, all four present
    let mut class_counts = [0usize; 4];
    for e in &manifest.entries {
        match e.label {
            ClassLabel::Pretrain(p) => class_counts[p.index()] += 1,
            ClassLabel::Covid(_) => {
                return Err(Error::Validation(format!(
                    "pre-training manifest contains a screening label for {:?}",
                    e.source_path
                )))
            }
        }
    }
    if let Some(missing) = PretrainClass::ALL
        .iter()
        .find(|p| class_counts[p.index()] == 0)
    {
        return Err(Error::Validation(format!(
            "pre-training class {:?} absent from the training data",
            missing.as_str()
        )));
    }

    let features = prepare_features(manifest, feature, opts.trim.as_ref())?;
    let mut data: Vec<(Tensor<f32>, usize)> = features
        .iter()
        .map(|m| {
            let label = match m.label {
                Some(ClassLabel::Pretrain(p)) => p.index(),
                _ => unreachable!("validated above"),
            };
            (input_tensor(kind, m), label)
        })
        .collect();

    if opts.smote_minority {
        data.extend(oversampled_pretrain(kind, &features, &class_counts, train_cfg.seed)?);
    }

    let input_shape = (feature.rows(), feature.segments);
    let mut net =
        build_architecture_with(kind, input_shape, mix(train_cfg.seed, &[2]), &opts.arch)?;
    let history = train(&mut net, &data, train_cfg)?;

    // discard the 64-unit and softmax tail, keep ... dense(512) relu
    let keep = net.layers.len() - 4;
    let mut layers = net.layers;
    layers.truncate(keep);
    let mut network = Network::new(layers);
    network.set_frozen_prefix(network.layers.len());

    Ok(PretrainedBackbone {
        network,
        kind,
        feature: *feature,
        provenance: Provenance {
            feature_echo: feature.echo(),
            train: *train_cfg,
            data_fingerprint: manifest_fingerprint(manifest),
            final_loss: history.last().copied().unwrap_or(f64::NAN),
        },
    })
}

/// Synthesises feature matrices for classes below the majority count.
fn oversampled_pretrain(
    kind: ArchitectureKind,
    features: &[FeatureMatrix],
    class_counts: &[usize; 4],
    seed: u64,
) -> Result<Vec<(Tensor<f32>, usize)>> {
    let majority = *class_counts.iter().max().unwrap();
    let mut extra = Vec::new();
    for class in PretrainClass::ALL {
        let count = class_counts[class.index()];
        if count >= majority || count < 2 {
            continue;
        }
        let members: Vec<&FeatureMatrix> = features
            .iter()
            .filter(|m| m.label == Some(ClassLabel::Pretrain(class)))
            .collect();
        let flat: Vec<Vec<f64>> = members.iter().map(|m| m.flattened()).collect();
        let cfg = SmoteConfig::new(majority, mix(seed, &[3, class.index() as u64]));
        let synthetic = smote(&flat, &cfg)?;
        let template = members[0];
        for v in synthetic {
            let m = FeatureMatrix {
                rows: template.rows,
                cols: template.cols,
                data: v,
                config: template.config,
                subject_id: String::new(),
                label: Some(ClassLabel::Pretrain(class)),
            };
            extra.push((input_tensor(kind, &m), class.index()));
        }
    }
    Ok(extra)
}

/// Appends the replacement classification head: a relu dense layer and a
/// two-way softmax. The entire backbone stays frozen.
pub fn attach_finetune_head(
    backbone: &PretrainedBackbone,
    head_units: usize,
    seed: u64,
) -> Network<f32> {
    let mut rng = Rng::seed_from(mix(seed, &[4]));
    let mut layers: Vec<Layer<f32>> = Vec::new();
    let frozen = backbone.network.layers.len();
    layers.extend(backbone.network.layers.iter().cloned());
    layers.push(Layer::Dense(DenseLayer::new(
        BACKBONE_DIM,
        head_units,
        Init::HeUniform,
        &mut rng,
    )));
    layers.push(Layer::Relu);
    layers.push(Layer::Dense(DenseLayer::new(
        head_units,
        2,
        Init::GlorotUniform,
        &mut rng,
    )));
    layers.push(Layer::Softmax { dim: 2 });
    let mut net = Network::new(layers);
    net.set_frozen_prefix(frozen);
    net
}

/// Fine-tunes the trainable head of `net` on labelled inputs (false =
/// negative, true = positive). Frozen activations are computed once, the
/// head trains on them, and the full network is reassembled.
pub fn finetune_on(
    net: Network<f32>,
    data: &[(Tensor<f32>, bool)],
    train_cfg: &TrainConfig,
) -> Result<Network<f32>> {
    let n_pos = data.iter().filter(|(_, l)| *l).count();
    if n_pos == 0 || n_pos == data.len() {
        return Err(Error::Validation(
            "fine-tuning requires both classes in the training fold".into(),
        ));
    }
    let (base, mut head) = net.split_at_frozen();

    let head_data: Vec<(Tensor<f32>, usize)> = frozen_outputs(&base, data.iter().map(|(x, _)| x))?
        .into_iter()
        .zip(data)
        .map(|(h, (_, label))| (h, usize::from(*label)))
        .collect();

    train(&mut head, &head_data, train_cfg)?;
    Ok(Network::join_frozen(base, head))
}

/// Evaluation-mode outputs of a frozen network over many inputs, computed
/// in deterministic batches.
fn frozen_outputs<'a, F>(
    base: &Network<f32>,
    inputs: F,
) -> Result<Vec<Tensor<f32>>>
where
    F: Iterator<Item = &'a Tensor<f32>>,
{
    let inputs: Vec<&Tensor<f32>> = inputs.collect();
    const CHUNK: usize = 32;
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(CHUNK) {
        let x = Tensor::stack(chunk);
        let y = base.forward(&x)?;
        let width = y.row_len();
        for s in 0..chunk.len() {
            out.push(Tensor::from_vec(
                &y.shape[1..],
                y.data[s * width..(s + 1) * width].to_vec(),
            ));
        }
    }
    Ok(out)
}

/// The frozen backbone's 512-dimensional activation for one recording.
pub fn extract_bottleneck(
    backbone: &PretrainedBackbone,
    features: &FeatureMatrix,
) -> Result<Vec<f32>> {
    if features.rows != backbone.feature.rows() || features.cols != backbone.feature.segments {
        return Err(Error::Shape {
            location: "bottleneck extraction".into(),
            detail: format!(
                "feature matrix ({}, {}) does not match the backbone input ({}, {})",
                features.rows,
                features.cols,
                backbone.feature.rows(),
                backbone.feature.segments
            ),
        });
    }
    let sample = input_tensor(backbone.kind, features);
    let refs = [&sample];
    let out = backbone.network.forward(&Tensor::stack(&refs))?;
    Ok(out.data)
}

/// Bottleneck vectors for many matrices, batched.
pub fn extract_bottlenecks(
    backbone: &PretrainedBackbone,
    features: &[FeatureMatrix],
) -> Result<Vec<Vec<f32>>> {
    for m in features {
        if m.rows != backbone.feature.rows() || m.cols != backbone.feature.segments {
            return Err(Error::Shape {
                location: "bottleneck extraction".into(),
                detail: format!("feature matrix ({}, {}) mismatch", m.rows, m.cols),
            });
        }
    }
    let tensors: Vec<Tensor<f32>> = features
        .par_iter()
        .map(|m| input_tensor(backbone.kind, m))
        .collect();
    let outs = frozen_outputs(&backbone.network, tensors.iter())?;
    Ok(outs.into_iter().map(|t| t.data).collect())
}

/// Saves a backbone checkpoint plus a JSON sidecar with its kind, feature
/// configuration and provenance.
pub fn save_backbone(backbone: &PretrainedBackbone, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    checkpoint::save_network(&backbone.network, path)?;
    let meta = serde_json::json!({
        "kind": backbone.kind,
        "feature": backbone.feature,
        "provenance": backbone.provenance,
    });
    let meta_path = sidecar_path(path);
    std::fs::write(
        &meta_path,
        serde_json::to_string_pretty(&meta).expect("serialisable"),
    )
    .map_err(|e| Error::io(meta_path.display().to_string(), e))
}

pub fn load_backbone(path: impl AsRef<Path>) -> Result<PretrainedBackbone> {
    let path = path.as_ref();
    let network = checkpoint::load_network(path)?;
    let meta_path = sidecar_path(path);
    let text = std::fs::read_to_string(&meta_path)
        .map_err(|e| Error::io(meta_path.display().to_string(), e))?;
    let meta: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::Checkpoint(format!("bad backbone sidecar: {e}")))?;
    let kind: ArchitectureKind = serde_json::from_value(meta["kind"].clone())
        .map_err(|e| Error::Checkpoint(format!("bad backbone kind: {e}")))?;
    let feature: FeatureConfig = serde_json::from_value(meta["feature"].clone())
        .map_err(|e| Error::Checkpoint(format!("bad backbone feature config: {e}")))?;
    let provenance: Provenance = serde_json::from_value(meta["provenance"].clone())
        .map_err(|e| Error::Checkpoint(format!("bad backbone provenance: {e}")))?;
    Ok(PretrainedBackbone {
        network,
        kind,
        feature,
        provenance,
    })
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".meta.json");
    std::path::PathBuf::from(p)
}
