//! The nested cross-validation driver: trial fitting, inner grid search
//! and outer-fold evaluation with subject-level scoring.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::cv::{CVPlan, InnerFold, OuterFold};
use super::roc::{auc, confusion_rates, eer_threshold, roc, RocPoint};
use super::scoring::{p_hat, ScoreMode, SubjectScore};
use crate::audio::{resample, trim_silence, ClassLabel, CovidClass, EventMap, Manifest, TrimConfig};
use crate::balance::{smote, SmoteConfig};
use crate::error::{Error, Result};
use crate::features::{extract_features_from, FeatureConfig, FeatureMatrix};
use crate::nn::{train, Network, Tensor, TrainConfig};
use crate::rng::mix;
use crate::shallow::{train_shallow, ShallowModel, ShallowSpec};
use crate::transfer::{
    attach_finetune_head, build_architecture_with, extract_bottlenecks, input_tensor,
    ArchOptions, ArchitectureKind, PretrainedBackbone,
};

/// What vector representation a shallow classifier consumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShallowInput {
    /// Individual frame columns of the primary feature matrix; the frame
    /// count of an event is its segment count.
    PrimaryFrames,
    /// The whole primary feature matrix flattened row-major into one
    /// vector per event.
    FlattenedMatrix,
    /// One 512-dimensional backbone vector per event.
    Bottleneck,
}

/// The classifier half of a trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ModelSpec {
    /// Frozen pre-trained backbone with a small trainable head.
    TransferHead {
        arch: ArchitectureKind,
        head_units: usize,
    },
    /// The same deep architecture trained from scratch on the fold.
    DirectDeep { arch: ArchitectureKind },
    /// A shallow classifier on frames or bottleneck vectors.
    Shallow {
        spec: ShallowSpec,
        input: ShallowInput,
    },
}

/// One point of the hyperparameter grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub feature: FeatureConfig,
    pub model: ModelSpec,
    pub score_mode: ScoreMode,
}

/// A prepared recording: trimmed mono audio plus its event boundaries.
#[derive(Clone, Debug)]
pub struct EvalClip {
    pub subject: String,
    pub positive: bool,
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    /// Event sample ranges; a recording without segmentation is one event.
    pub events: Vec<(usize, usize)>,
    pub source_path: String,
}

/// The corpus evaluation works over.
#[derive(Clone, Debug)]
pub struct EvalDataset {
    pub clips: Vec<EvalClip>,
    pub sample_rate: u32,
}

impl EvalDataset {
    /// Loads, resamples and trims every manifest entry. Recordings listed
    /// in `boundaries` are split into those events after preparation.
    pub fn from_manifest(
        manifest: &Manifest,
        sample_rate: u32,
        trim: Option<&TrimConfig>,
        boundaries: Option<&EventMap>,
    ) -> Result<Self> {
        use rayon::prelude::*;
        let clips: Vec<EvalClip> = manifest
            .entries
            .par_iter()
            .map(|entry| {
                let positive = match entry.label {
                    ClassLabel::Covid(CovidClass::Positive) => true,
                    ClassLabel::Covid(CovidClass::Negative) => false,
                    ClassLabel::Pretrain(_) => {
                        return Err(Error::Validation(format!(
                            "screening manifest has a pre-training label for {:?}",
                            entry.source_path
                        )))
                    }
                };
                let clip = manifest.load_clip(entry)?;
                let clip = resample(&clip, sample_rate);
                let clip = match trim {
                    Some(t) => trim_silence(&clip, t),
                    None => clip,
                };
                let len = clip.samples.len();
                let events = boundaries
                    .and_then(|map| map.get(&entry.source_path))
                    .map(|spans| {
                        spans
                            .iter()
                            .map(|&(s, e)| (s.min(len), e.min(len)))
                            .filter(|&(s, e)| e > s)
                            .collect::<Vec<_>>()
                    })
                    .filter(|v| !v.is_empty())
                    .unwrap_or_else(|| vec![(0, len)]);
                Ok(EvalClip {
                    subject: entry.subject_id.clone(),
                    positive,
                    samples: clip.samples,
                    sample_rate,
                    events,
                    source_path: entry.source_path.clone(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(EvalDataset { clips, sample_rate })
    }

    /// (subject, label) pairs for planning.
    pub fn subject_labels(&self) -> Vec<(String, bool)> {
        self.clips
            .iter()
            .map(|c| (c.subject.clone(), c.positive))
            .collect()
    }
}

/// Fixed settings shared by every trial.
#[derive(Clone, Debug)]
pub struct EvalSettings {
    /// Template for deep training; the batch size is clipped to the fold.
    pub train: TrainConfig,
    /// Architecture options for from-scratch deep trials.
    pub arch: ArchOptions,
    /// Oversample the minority class inside every training fold.
    pub smote: bool,
    pub smote_neighbors: usize,
    pub seed: u64,
}

impl EvalSettings {
    pub fn new(train: TrainConfig, arch: ArchOptions, seed: u64) -> Self {
        EvalSettings {
            train,
            arch,
            smote: true,
            smote_neighbors: 5,
            seed,
        }
    }
}

/// Per-event feature matrices for every clip under one configuration.
type ClipFeatures = Vec<Vec<FeatureMatrix>>;

/// Evaluation context: the dataset, the optional backbone and caches for
/// per-configuration features and bottleneck vectors.
pub struct EvalContext<'a> {
    pub data: &'a EvalDataset,
    pub backbone: Option<&'a PretrainedBackbone>,
    pub settings: EvalSettings,
    features: Mutex<HashMap<FeatureConfig, std::sync::Arc<ClipFeatures>>>,
    bottlenecks: Mutex<HashMap<FeatureConfig, std::sync::Arc<Vec<Vec<Vec<f64>>>>>>,
}

impl<'a> EvalContext<'a> {
    pub fn new(
        data: &'a EvalDataset,
        backbone: Option<&'a PretrainedBackbone>,
        settings: EvalSettings,
    ) -> Self {
        EvalContext {
            data,
            backbone,
            settings,
            features: Mutex::new(HashMap::new()),
            bottlenecks: Mutex::new(HashMap::new()),
        }
    }

    /// Feature matrices per clip and event, cached per configuration.
    fn features_for(&self, cfg: &FeatureConfig) -> std::sync::Arc<ClipFeatures> {
        if let Some(hit) = self.features.lock().unwrap().get(cfg) {
            return hit.clone();
        }
        use rayon::prelude::*;
        let computed: ClipFeatures = self
            .data
            .clips
            .par_iter()
            .map(|clip| {
                clip.events
                    .iter()
                    .map(|&(s, e)| {
                        extract_features_from(
                            &clip.samples[s..e],
                            cfg,
                            clip.subject.clone(),
                            Some(ClassLabel::Covid(if clip.positive {
                                CovidClass::Positive
                            } else {
                                CovidClass::Negative
                            })),
                        )
                    })
                    .collect()
            })
            .collect();
        let arc = std::sync::Arc::new(computed);
        self.features
            .lock()
            .unwrap()
            .insert(*cfg, arc.clone());
        arc
    }

    /// Bottleneck vectors per clip and event, cached per configuration.
    fn bottlenecks_for(
        &self,
        cfg: &FeatureConfig,
    ) -> Result<std::sync::Arc<Vec<Vec<Vec<f64>>>>> {
        if let Some(hit) = self.bottlenecks.lock().unwrap().get(cfg) {
            return Ok(hit.clone());
        }
        let backbone = self.backbone.ok_or_else(|| {
            Error::Validation("this trial needs a pre-trained backbone".into())
        })?;
        let features = self.features_for(cfg);
        let flat: Vec<&FeatureMatrix> = features.iter().flatten().collect();
        let owned: Vec<FeatureMatrix> = flat.into_iter().cloned().collect();
        let vectors = extract_bottlenecks(backbone, &owned)?;
        let mut iter = vectors.into_iter();
        let nested: Vec<Vec<Vec<f64>>> = features
            .iter()
            .map(|events| {
                events
                    .iter()
                    .map(|_| {
                        iter.next()
                            .expect("one vector per event")
                            .into_iter()
                            .map(f64::from)
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let arc = std::sync::Arc::new(nested);
        self.bottlenecks
            .lock()
            .unwrap()
            .insert(*cfg, arc.clone());
        Ok(arc)
    }

    fn clip_indices_for(&self, subjects: &[String]) -> Vec<usize> {
        let set: std::collections::BTreeSet<&str> =
            subjects.iter().map(String::as_str).collect();
        self.data
            .clips
            .iter()
            .enumerate()
            .filter(|(_, c)| set.contains(c.subject.as_str()))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Event probabilities of every dev subject plus the event-indicator
/// threshold fitted on the training fold.
struct FittedTrial {
    /// subject -> (label, per-event frame probabilities)
    dev: Vec<(String, bool, SubjectScore)>,
    event_threshold: f64,
}

/// A fitted model abstracted to "frame probabilities per event".
enum TrialModel {
    Deep(Network<f32>, ArchitectureKind),
    /// A trained head evaluated on cached backbone vectors; equivalent to
    /// running the full frozen network but without repeating the backbone
    /// forward passes.
    HeadOnBnf(Network<f32>),
    ShallowFrames(ShallowModel),
    ShallowFlat(ShallowModel),
    ShallowBnf(ShallowModel),
}

impl TrialModel {
    /// Frame probabilities of one event.
    fn event_probs(&self, features: &FeatureMatrix, bnf: Option<&Vec<f64>>) -> Result<Vec<f64>> {
        match self {
            TrialModel::Deep(net, kind) => {
                let sample = input_tensor(*kind, features);
                let refs = [&sample];
                let out = net.forward(&Tensor::stack(&refs))?;
                Ok(vec![out.data[1] as f64])
            }
            TrialModel::HeadOnBnf(head) => {
                let v = bnf.expect("bottleneck vectors prepared for transfer trials");
                let sample = Tensor::from_vec(&[v.len()], v.iter().map(|&x| x as f32).collect());
                let refs = [&sample];
                let out = head.forward(&Tensor::stack(&refs))?;
                Ok(vec![out.data[1] as f64])
            }
            TrialModel::ShallowFrames(model) => (0..features.cols)
                .map(|c| model.predict_proba(&features.column(c)))
                .collect(),
            TrialModel::ShallowFlat(model) => {
                Ok(vec![model.predict_proba(&features.flattened())?])
            }
            TrialModel::ShallowBnf(model) => {
                let v = bnf.expect("bottleneck vectors prepared for bnf trials");
                Ok(vec![model.predict_proba(v)?])
            }
        }
    }
}

/// Balances the training vectors by oversampling the minority class.
fn balance_training(
    inputs: &mut Vec<Vec<f64>>,
    labels: &mut Vec<bool>,
    neighbors: usize,
    seed: u64,
) -> Result<()> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Validation(
            "training fold holds a single class".into(),
        ));
    }
    let (minority_label, minority_n, majority_n) = if n_pos < n_neg {
        (true, n_pos, n_neg)
    } else {
        (false, n_neg, n_pos)
    };
    if minority_n == majority_n || minority_n < 2 {
        return Ok(());
    }
    let minority: Vec<Vec<f64>> = inputs
        .iter()
        .zip(labels.iter())
        .filter(|(_, &l)| l == minority_label)
        .map(|(v, _)| v.clone())
        .collect();
    let cfg = SmoteConfig {
        k_neighbors: neighbors,
        target_count: majority_n,
        seed,
    };
    for v in smote(&minority, &cfg)? {
        inputs.push(v);
        labels.push(minority_label);
    }
    Ok(())
}

/// Trains the model of `cfg` on the training subjects and scores both the
/// training events (for the indicator threshold) and the dev subjects.
fn run_trial(
    ctx: &EvalContext,
    cfg: &TrialConfig,
    train_subjects: &[String],
    dev_subjects: &[String],
    seed: u64,
) -> Result<FittedTrial> {
    let features = ctx.features_for(&cfg.feature);
    let bnf = match &cfg.model {
        ModelSpec::Shallow {
            input: ShallowInput::Bottleneck,
            ..
        }
        | ModelSpec::TransferHead { .. } => Some(ctx.bottlenecks_for(&cfg.feature)?),
        _ => None,
    };

    let train_idx = ctx.clip_indices_for(train_subjects);
    let dev_idx = ctx.clip_indices_for(dev_subjects);
    if train_idx.is_empty() || dev_idx.is_empty() {
        return Err(Error::Validation(
            "a fold resolved to zero recordings".into(),
        ));
    }

    let mut train_cfg = ctx.settings.train;
    train_cfg.seed = seed;

    let model = match &cfg.model {
        ModelSpec::TransferHead { head_units, .. } => {
            let backbone = ctx.backbone.ok_or_else(|| {
                Error::Validation("transfer trials need a pre-trained backbone".into())
            })?;
            if backbone.feature != cfg.feature {
                return Err(Error::Validation(format!(
                    "transfer trial feature config {} does not match the backbone ({})",
                    cfg.feature.echo(),
                    backbone.feature.echo()
                )));
            }
            // train the head on cached backbone vectors; oversampling still
            // happens on the flattened primary matrices, with synthetic
            // samples pushed through the frozen backbone
            let bnf = bnf.as_ref().expect("prepared above");
            let mut inputs: Vec<Tensor<f32>> = Vec::new();
            let mut labels: Vec<bool> = Vec::new();
            for &i in &train_idx {
                for v in &bnf[i] {
                    inputs.push(Tensor::from_vec(
                        &[v.len()],
                        v.iter().map(|&x| x as f32).collect(),
                    ));
                    labels.push(ctx.data.clips[i].positive);
                }
            }
            if ctx.settings.smote {
                if let Some((matrices, label)) =
                    smote_matrices(ctx, &features, &train_idx, mix(seed, &[11]))?
                {
                    for v in crate::transfer::extract_bottlenecks(backbone, &matrices)? {
                        inputs.push(Tensor::from_vec(&[v.len()], v));
                        labels.push(label);
                    }
                }
            }
            let n_pos = labels.iter().filter(|&&l| l).count();
            if n_pos == 0 || n_pos == labels.len() {
                return Err(Error::Validation(
                    "training fold holds a single class".into(),
                ));
            }
            let full = attach_finetune_head(backbone, *head_units, mix(seed, &[7]));
            let (_, mut head) = full.split_at_frozen();
            let data: Vec<(Tensor<f32>, usize)> = inputs
                .into_iter()
                .zip(labels)
                .map(|(x, l)| (x, usize::from(l)))
                .collect();
            let mut cfg_t = train_cfg;
            cfg_t.batch_size = cfg_t.batch_size.min(data.len().max(1));
            train(&mut head, &data, &cfg_t)?;
            TrialModel::HeadOnBnf(head)
        }
        ModelSpec::DirectDeep { arch } => {
            let (inputs, labels) = deep_training_set(ctx, &features, &train_idx, *arch, seed)?;
            let data: Vec<(Tensor<f32>, usize)> = inputs
                .into_iter()
                .zip(labels)
                .map(|(x, l)| (x, usize::from(l)))
                .collect();
            let mut opts = ctx.settings.arch.clone();
            opts.classes = 2;
            let input_shape = (cfg.feature.rows(), cfg.feature.segments);
            let mut net =
                build_architecture_with(*arch, input_shape, mix(seed, &[8]), &opts)?;
            let mut cfg_t = train_cfg;
            cfg_t.batch_size = cfg_t.batch_size.min(data.len().max(1));
            let n_pos = data.iter().filter(|(_, l)| *l == 1).count();
            if n_pos == 0 || n_pos == data.len() {
                return Err(Error::Validation(
                    "training fold holds a single class".into(),
                ));
            }
            train(&mut net, &data, &cfg_t)?;
            TrialModel::Deep(net, *arch)
        }
        ModelSpec::Shallow { spec, input } => {
            let mut inputs: Vec<Vec<f64>> = Vec::new();
            let mut labels: Vec<bool> = Vec::new();
            for &i in &train_idx {
                let label = ctx.data.clips[i].positive;
                match input {
                    ShallowInput::PrimaryFrames => {
                        for event in &features[i] {
                            for c in 0..event.cols {
                                inputs.push(event.column(c));
                                labels.push(label);
                            }
                        }
                    }
                    ShallowInput::FlattenedMatrix => {
                        for event in &features[i] {
                            inputs.push(event.flattened());
                            labels.push(label);
                        }
                    }
                    ShallowInput::Bottleneck => {
                        for v in &bnf.as_ref().expect("prepared above")[i] {
                            inputs.push(v.clone());
                            labels.push(label);
                        }
                    }
                }
            }
            if ctx.settings.smote {
                balance_training(
                    &mut inputs,
                    &mut labels,
                    ctx.settings.smote_neighbors,
                    mix(seed, &[9]),
                )?;
            }
            let model = train_shallow(spec, &inputs, &labels, mix(seed, &[10]))?;
            match input {
                ShallowInput::PrimaryFrames => TrialModel::ShallowFrames(model),
                ShallowInput::FlattenedMatrix => TrialModel::ShallowFlat(model),
                ShallowInput::Bottleneck => TrialModel::ShallowBnf(model),
            }
        }
    };

    // event-level threshold from the training fold
    let mut train_event_scores = Vec::new();
    let mut train_event_labels = Vec::new();
    for &i in &train_idx {
        for (e, event) in features[i].iter().enumerate() {
            let probs = model.event_probs(event, bnf.as_ref().map(|b| &b[i][e]))?;
            train_event_scores.push(p_hat(&probs));
            train_event_labels.push(ctx.data.clips[i].positive);
        }
    }
    let event_threshold = eer_threshold(&roc(&train_event_scores, &train_event_labels)?);

    // dev subjects
    let mut by_subject: HashMap<&str, (bool, SubjectScore)> = HashMap::new();
    for &i in &dev_idx {
        let clip = &ctx.data.clips[i];
        let entry = by_subject
            .entry(clip.subject.as_str())
            .or_insert_with(|| (clip.positive, SubjectScore::default()));
        for (e, event) in features[i].iter().enumerate() {
            let probs = model.event_probs(event, bnf.as_ref().map(|b| &b[i][e]))?;
            entry.1.events.push(probs);
        }
    }
    let mut dev: Vec<(String, bool, SubjectScore)> = by_subject
        .into_iter()
        .map(|(s, (label, score))| (s.to_string(), label, score))
        .collect();
    dev.sort_by(|a, b| a.0.cmp(&b.0));

    Ok(FittedTrial {
        dev,
        event_threshold,
    })
}

/// Synthetic minority feature matrices for a training fold, or `None` when
/// the fold is already balanced (or the minority is too small to
/// interpolate). Oversampling happens on the flattened primary matrices.
fn smote_matrices(
    ctx: &EvalContext,
    features: &ClipFeatures,
    train_idx: &[usize],
    seed: u64,
) -> Result<Option<(Vec<FeatureMatrix>, bool)>> {
    let mut matrices: Vec<&FeatureMatrix> = Vec::new();
    let mut labels: Vec<bool> = Vec::new();
    for &i in train_idx {
        for event in &features[i] {
            matrices.push(event);
            labels.push(ctx.data.clips[i].positive);
        }
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Validation(
            "training fold holds a single class".into(),
        ));
    }
    let minority_label = n_pos < n_neg;
    let (minority_n, majority_n) = if minority_label {
        (n_pos, n_neg)
    } else {
        (n_neg, n_pos)
    };
    if minority_n == majority_n || minority_n < 2 {
        return Ok(None);
    }
    let minority_flat: Vec<Vec<f64>> = matrices
        .iter()
        .zip(&labels)
        .filter(|(_, &l)| l == minority_label)
        .map(|(m, _)| m.flattened())
        .collect();
    let template = matrices
        .iter()
        .zip(&labels)
        .find(|(_, &l)| l == minority_label)
        .map(|(m, _)| (*m).clone())
        .expect("minority present");
    let cfg = SmoteConfig {
        k_neighbors: ctx.settings.smote_neighbors,
        target_count: majority_n,
        seed,
    };
    let synthetic = smote(&minority_flat, &cfg)?
        .into_iter()
        .map(|v| FeatureMatrix {
            rows: template.rows,
            cols: template.cols,
            data: v,
            config: template.config,
            subject_id: String::new(),
            label: template.label,
        })
        .collect();
    Ok(Some((synthetic, minority_label)))
}

/// Tensors and labels for deep training, with optional minority
/// oversampling in flattened feature space.
fn deep_training_set(
    ctx: &EvalContext,
    features: &ClipFeatures,
    train_idx: &[usize],
    kind: ArchitectureKind,
    seed: u64,
) -> Result<(Vec<Tensor<f32>>, Vec<bool>)> {
    let mut inputs: Vec<Tensor<f32>> = Vec::new();
    let mut labels: Vec<bool> = Vec::new();
    for &i in train_idx {
        for event in &features[i] {
            inputs.push(input_tensor(kind, event));
            labels.push(ctx.data.clips[i].positive);
        }
    }
    if ctx.settings.smote {
        if let Some((matrices, label)) =
            smote_matrices(ctx, features, train_idx, mix(seed, &[11]))?
        {
            for m in &matrices {
                inputs.push(input_tensor(kind, m));
                labels.push(label);
            }
        }
    } else {
        let n_pos = labels.iter().filter(|&&l| l).count();
        if n_pos == 0 || n_pos == labels.len() {
            return Err(Error::Validation(
                "training fold holds a single class".into(),
            ));
        }
    }
    Ok((inputs, labels))
}

/// Outcome of searching a grid over the inner folds of one outer fold.
#[derive(Clone, Debug)]
pub struct GridSearchResult {
    pub best_index: usize,
    pub best: TrialConfig,
    /// Mean inner-dev AUC per grid entry, grid order.
    pub mean_dev_auc: Vec<f64>,
    /// Pooled inner-dev subject scores of the winning configuration.
    pub pooled_best: Vec<(f64, bool)>,
}

/// Evaluates every grid entry over the inner folds and picks the highest
/// mean development AUC; ties break toward the earlier grid entry.
pub fn grid_search(
    ctx: &EvalContext,
    inner: &[InnerFold],
    grid: &[TrialConfig],
    fold_tag: u64,
) -> Result<GridSearchResult> {
    if grid.is_empty() {
        return Err(Error::Validation("empty hyperparameter grid".into()));
    }
    // trials sharing (feature, model) reuse one fitted model per inner fold
    let mut fitted: HashMap<String, Vec<FittedTrial>> = HashMap::new();
    for cfg in grid {
        let key = format!("{:?}|{:?}", cfg.feature, cfg.model);
        if fitted.contains_key(&key) {
            continue;
        }
        let runs: Vec<FittedTrial> = inner
            .iter()
            .enumerate()
            .map(|(k, fold)| {
                run_trial(
                    ctx,
                    cfg,
                    &fold.train_subjects,
                    &fold.dev_subjects,
                    mix(ctx.settings.seed, &[20, fold_tag, k as u64]),
                )
            })
            .collect::<Result<_>>()?;
        fitted.insert(key, runs);
    }

    let mut mean_dev_auc = Vec::with_capacity(grid.len());
    let mut pooled: Vec<Vec<(f64, bool)>> = Vec::with_capacity(grid.len());
    for cfg in grid {
        let key = format!("{:?}|{:?}", cfg.feature, cfg.model);
        let runs = &fitted[&key];
        let mut fold_aucs = Vec::with_capacity(runs.len());
        let mut all_scores = Vec::new();
        for trial in runs {
            let scores: Vec<f64> = trial
                .dev
                .iter()
                .map(|(_, _, s)| s.score(trial.event_threshold, cfg.score_mode))
                .collect();
            let labels: Vec<bool> = trial.dev.iter().map(|(_, l, _)| *l).collect();
            fold_aucs.push(auc(&roc(&scores, &labels)?));
            all_scores.extend(scores.iter().copied().zip(labels.iter().copied()));
        }
        mean_dev_auc.push(fold_aucs.iter().sum::<f64>() / fold_aucs.len() as f64);
        pooled.push(all_scores);
    }

    let mut best_index = 0;
    for (i, &a) in mean_dev_auc.iter().enumerate() {
        if a > mean_dev_auc[best_index] {
            best_index = i;
        }
    }
    Ok(GridSearchResult {
        best_index,
        best: grid[best_index].clone(),
        pooled_best: pooled.swap_remove(best_index),
        mean_dev_auc,
    })
}

/// One outer fold's results.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub auc: f64,
    pub specificity: f64,
    pub sensitivity: f64,
    pub accuracy: f64,
    /// Subject-score decision threshold fitted on pooled inner-dev scores.
    pub gamma_ee: f64,
    /// Event-indicator threshold fitted on the outer-training events.
    pub event_threshold: f64,
    pub inner_auc: f64,
    pub best: TrialConfig,
    pub test_subjects: usize,
    /// (threshold, fpr, tpr) points of the outer-test ROC; the sentinel
    /// endpoints carry no threshold.
    pub roc_points: Vec<(Option<f64>, f64, f64)>,
}

/// The complete cross-validated evaluation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub seed: u64,
    pub folds: Vec<FoldReport>,
    pub mean_auc: f64,
    pub sigma_auc: f64,
}

/// Population standard deviation.
pub fn population_std(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Runs the full nested evaluation: per outer fold an inner grid search,
/// a refit of the winner on the whole outer-training set (oversampling
/// inside the fold only), a decision threshold from the pooled inner-dev
/// scores, and final scoring on the held-out test subjects.
pub fn evaluate(ctx: &EvalContext, plan: &CVPlan, grid: &[TrialConfig]) -> Result<EvaluationReport> {
    plan.verify_disjoint()?;
    let mut folds = Vec::with_capacity(plan.outer.len());
    for (f, outer) in plan.outer.iter().enumerate() {
        folds.push(evaluate_fold(ctx, f, outer, grid)?);
    }
    let aucs: Vec<f64> = folds.iter().map(|r| r.auc).collect();
    Ok(EvaluationReport {
        seed: ctx.settings.seed,
        mean_auc: aucs.iter().sum::<f64>() / aucs.len() as f64,
        sigma_auc: population_std(&aucs),
        folds,
    })
}

/// Evaluates one fixed trial across the outer folds without inner
/// selection: train on each outer-training set, return the test AUCs.
/// Used for ablations where the hyperparameters are already pinned and
/// only the spread of the fold AUCs matters.
pub fn evaluate_fixed(ctx: &EvalContext, plan: &CVPlan, trial: &TrialConfig) -> Result<Vec<f64>> {
    plan.verify_disjoint()?;
    let mut aucs = Vec::with_capacity(plan.outer.len());
    for (f, outer) in plan.outer.iter().enumerate() {
        let fitted = run_trial(
            ctx,
            trial,
            &outer.train_subjects(),
            &outer.test_subjects,
            mix(ctx.settings.seed, &[22, f as u64]),
        )?;
        let scores: Vec<f64> = fitted
            .dev
            .iter()
            .map(|(_, _, s)| s.score(fitted.event_threshold, trial.score_mode))
            .collect();
        let labels: Vec<bool> = fitted.dev.iter().map(|(_, l, _)| *l).collect();
        aucs.push(auc(&roc(&scores, &labels)?));
    }
    Ok(aucs)
}

fn evaluate_fold(
    ctx: &EvalContext,
    fold_idx: usize,
    outer: &OuterFold,
    grid: &[TrialConfig],
) -> Result<FoldReport> {
    let search = grid_search(ctx, &outer.inner, grid, fold_idx as u64)?;
    let best = &search.best;

    // subject-level decision threshold from the pooled inner-dev scores
    let (dev_scores, dev_labels): (Vec<f64>, Vec<bool>) =
        search.pooled_best.iter().copied().unzip();
    let gamma_ee = eer_threshold(&roc(&dev_scores, &dev_labels)?);

    // refit the winner on the full outer-training set
    let train_subjects = outer.train_subjects();
    let fitted = run_trial(
        ctx,
        best,
        &train_subjects,
        &outer.test_subjects,
        mix(ctx.settings.seed, &[21, fold_idx as u64]),
    )?;

    let scores: Vec<f64> = fitted
        .dev
        .iter()
        .map(|(_, _, s)| s.score(fitted.event_threshold, best.score_mode))
        .collect();
    let labels: Vec<bool> = fitted.dev.iter().map(|(_, l, _)| *l).collect();
    let curve = roc(&scores, &labels)?;
    let fold_auc = auc(&curve);
    let (specificity, sensitivity, accuracy) = confusion_rates(&scores, &labels, gamma_ee);

    Ok(FoldReport {
        fold: fold_idx,
        auc: fold_auc,
        specificity,
        sensitivity,
        accuracy,
        gamma_ee,
        event_threshold: fitted.event_threshold,
        inner_auc: search.mean_dev_auc[search.best_index],
        best: best.clone(),
        test_subjects: labels.len(),
        roc_points: curve
            .points
            .iter()
            .map(|p: &RocPoint| (p.threshold.is_finite().then_some(p.threshold), p.fpr, p.tpr))
            .collect(),
    })
}

impl EvaluationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// Per-fold CSV rows.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("fold,auc,specificity,sensitivity,accuracy,gamma_ee,test_subjects\n");
        for f in &self.folds {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                f.fold, f.auc, f.specificity, f.sensitivity, f.accuracy, f.gamma_ee,
                f.test_subjects
            ));
        }
        out.push_str(&format!(
            "mean,{},sigma,{},,,\n",
            self.mean_auc, self.sigma_auc
        ));
        out
    }

    /// ROC points of every fold for external plotting; sentinel endpoints
    /// get an empty threshold column.
    pub fn roc_csv(&self) -> String {
        let mut out = String::from("fold,threshold,fpr,tpr\n");
        for f in &self.folds {
            for (t, fpr, tpr) in &f.roc_points {
                let t = t.map(|v| v.to_string()).unwrap_or_default();
                out.push_str(&format!("{},{},{},{}\n", f.fold, t, fpr, tpr));
            }
        }
        out
    }
}
