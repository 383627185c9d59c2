//! Declarative run configuration.
//!
//! A run is described by one TOML file; command-line flags override file
//! values, which override the built-in defaults (flag > file > default).
//! Every produced artifact gets a sidecar `<name>.meta.json` echoing the
//! fully resolved configuration.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use vocalscreen::audio::TrimConfig;
use vocalscreen::eval::{ModelSpec, ScoreMode, ShallowInput, TrialConfig};
use vocalscreen::features::{FeatureConfig, FeatureKind};
use vocalscreen::nn::{OptimizerKind, TrainConfig};
use vocalscreen::shallow::ShallowSpec;
use vocalscreen::transfer::{ArchOptions, ArchitectureKind, ResnetProfile};

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub data: DataSection,
    pub features: FeatureSection,
    pub trim: TrimSection,
    pub arch: ArchSection,
    pub train: TrainSection,
    pub pretrain: PretrainSection,
    pub eval: EvalSection,
    pub synth: SynthSection,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub pretrain_manifest: Option<PathBuf>,
    pub covid_manifest: Option<PathBuf>,
    /// Optional event segmentation CSV (path,start_sample,end_sample).
    pub boundaries: Option<PathBuf>,
    /// Backbone checkpoint consumed by finetune/bottleneck/cv.
    pub backbone: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureSection {
    /// "mfcc" or "fbank".
    pub kind: String,
    pub coeffs: usize,
    pub bands: usize,
    pub frame_len: usize,
    pub segments: usize,
    pub sample_rate: u32,
    /// Accept values outside the standard grid.
    pub allow_nonstandard: bool,
}

impl Default for FeatureSection {
    fn default() -> Self {
        FeatureSection {
            kind: "mfcc".into(),
            coeffs: 39,
            bands: 60,
            frame_len: 1024,
            segments: 150,
            sample_rate: 16000,
            allow_nonstandard: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrimSection {
    pub enabled: bool,
    pub margin_ms: f64,
    pub frame_ms: f64,
    pub threshold_ratio: f64,
}

impl Default for TrimSection {
    fn default() -> Self {
        let t = TrimConfig::default();
        TrimSection {
            enabled: true,
            margin_ms: t.margin_ms,
            frame_ms: t.frame_ms,
            threshold_ratio: t.threshold_ratio,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchSection {
    /// "cnn", "lstm" or "resnet".
    pub kind: String,
    /// "standard50" or "small10".
    pub resnet_profile: String,
    pub head_units: usize,
}

impl Default for ArchSection {
    fn default() -> Self {
        ArchSection {
            kind: "resnet".into(),
            resnet_profile: "standard50".into(),
            head_units: 32,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// "adam" or "sgd".
    pub optimizer: String,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            batch_size: 128,
            epochs: 70,
            learning_rate: 1e-3,
            optimizer: "adam".into(),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainSection {
    /// Oversample under-represented pre-training classes.
    pub smote_minority: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// "transfer", "direct", "shallow_bnf", "shallow_pf" or "shallow_flat".
    pub pipeline: String,
    /// Subject-score modes searched in the grid: of "ci1", "ci2", "max".
    pub score_modes: Vec<String>,
    /// Oversample minority training data inside each fold.
    pub smote: bool,
    /// Head widths searched for the transfer pipeline.
    pub head_units_grid: Vec<usize>,
    /// Shallow family for the shallow pipelines: "lr", "svm", "knn", "mlp".
    pub shallow_model: String,
    pub lr_reg: Vec<f64>,
    pub lr_l1: Vec<f64>,
    pub lr_l2: Vec<f64>,
    pub svm_reg: Vec<f64>,
    pub svm_gamma: Vec<f64>,
    pub knn_neighbors: Vec<usize>,
    pub knn_leaf: Vec<usize>,
    pub mlp_hidden: Vec<usize>,
    pub mlp_l2: Vec<f64>,
    pub mlp_lr: Vec<f64>,
    /// Accept grid values outside the standard ranges.
    pub allow_nonstandard_grid: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            pipeline: "transfer".into(),
            score_modes: vec!["ci1".into(), "ci2".into(), "max".into()],
            smote: true,
            head_units_grid: vec![32],
            shallow_model: "svm".into(),
            lr_reg: vec![1e-1, 1e1],
            lr_l1: vec![0.5],
            lr_l2: vec![0.5],
            svm_reg: vec![1.0, 100.0],
            svm_gamma: vec![1e-3, 1e-1],
            knn_neighbors: vec![10, 30],
            knn_leaf: vec![20],
            mlp_hidden: vec![50],
            mlp_l2: vec![0.35],
            mlp_lr: vec![1e-3],
            allow_nonstandard_grid: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub pretrain_per_class: usize,
    pub covid_subjects_per_class: usize,
    pub clips_per_subject: usize,
    pub sample_rate: u32,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            pretrain_per_class: 40,
            covid_subjects_per_class: 60,
            clips_per_subject: 3,
            sample_rate: 22050,
        }
    }
}

/// Flag-level overrides; `None` means "use the file value".
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub arch: Option<String>,
    pub features: Option<String>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> anyhow::Result<Self> {
        let mut cfg: RunConfig = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text)
                    .with_context(|| format!("parsing config {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        if let Some(seed) = overrides.seed {
            cfg.seed = Some(seed);
        }
        if let Some(dir) = &overrides.out_dir {
            cfg.out_dir = Some(dir.clone());
        }
        if let Some(arch) = &overrides.arch {
            cfg.arch.kind = arch.clone();
        }
        if let Some(kind) = &overrides.features {
            cfg.features.kind = kind.clone();
        }
        Ok(cfg)
    }

    pub fn seed(&self) -> anyhow::Result<u64> {
        self.seed
            .ok_or_else(|| anyhow::anyhow!("a seed is required (config `seed` or --seed)"))
    }

    pub fn out_dir(&self) -> anyhow::Result<&Path> {
        self.out_dir
            .as_deref()
            .ok_or_else(|| anyhow::anyhow!("an output directory is required (config `out_dir` or --out)"))
    }

    pub fn feature_config(&self) -> anyhow::Result<FeatureConfig> {
        let kind = match self.features.kind.as_str() {
            "mfcc" => FeatureKind::Mfcc {
                coeffs: self.features.coeffs,
            },
            "fbank" => FeatureKind::LinearFbank {
                bands: self.features.bands,
            },
            other => bail!("unknown feature kind {other:?} (expected mfcc or fbank)"),
        };
        if self.features.allow_nonstandard {
            Ok(FeatureConfig::unchecked(
                kind,
                self.features.frame_len,
                self.features.segments,
                self.features.sample_rate,
            ))
        } else {
            Ok(FeatureConfig::from_grid(
                kind,
                self.features.frame_len,
                self.features.segments,
                self.features.sample_rate,
            )?)
        }
    }

    pub fn trim_config(&self) -> Option<TrimConfig> {
        self.trim.enabled.then_some(TrimConfig {
            margin_ms: self.trim.margin_ms,
            frame_ms: self.trim.frame_ms,
            threshold_ratio: self.trim.threshold_ratio,
        })
    }

    pub fn arch_kind(&self) -> anyhow::Result<ArchitectureKind> {
        ArchitectureKind::parse(&self.arch.kind)
            .ok_or_else(|| anyhow::anyhow!("unknown architecture {:?}", self.arch.kind))
    }

    pub fn arch_options(&self) -> anyhow::Result<ArchOptions> {
        let resnet = match self.arch.resnet_profile.as_str() {
            "standard50" => ResnetProfile::Standard50,
            "small10" => ResnetProfile::Small10,
            other => bail!("unknown resnet profile {other:?}"),
        };
        Ok(ArchOptions {
            resnet,
            ..ArchOptions::default()
        })
    }

    pub fn train_config(&self, seed: u64) -> anyhow::Result<TrainConfig> {
        let optimizer = match self.train.optimizer.as_str() {
            "adam" => OptimizerKind::Adam,
            "sgd" => OptimizerKind::Sgd,
            other => bail!("unknown optimizer {other:?}"),
        };
        if self.train.batch_size == 0 || self.train.epochs == 0 || self.train.learning_rate <= 0.0
        {
            bail!("train section needs batch_size >= 1, epochs >= 1, learning_rate > 0");
        }
        let mut cfg = TrainConfig::new(
            self.train.batch_size,
            self.train.epochs,
            self.train.learning_rate,
            seed,
        );
        cfg.optimizer = optimizer;
        Ok(cfg)
    }

    fn score_modes(&self) -> anyhow::Result<Vec<ScoreMode>> {
        if self.eval.score_modes.is_empty() {
            bail!("eval.score_modes must not be empty");
        }
        self.eval
            .score_modes
            .iter()
            .map(|s| {
                ScoreMode::parse(s).ok_or_else(|| anyhow::anyhow!("unknown score mode {s:?}"))
            })
            .collect()
    }

    /// Builds the trial grid the cv command searches.
    pub fn trial_grid(&self, feature: FeatureConfig) -> anyhow::Result<Vec<TrialConfig>> {
        let modes = self.score_modes()?;
        let allow = self.eval.allow_nonstandard_grid;
        let mut models: Vec<ModelSpec> = Vec::new();
        match self.eval.pipeline.as_str() {
            "transfer" => {
                for &units in &self.eval.head_units_grid {
                    models.push(ModelSpec::TransferHead {
                        arch: self.arch_kind()?,
                        head_units: units,
                    });
                }
            }
            "direct" => models.push(ModelSpec::DirectDeep {
                arch: self.arch_kind()?,
            }),
            "shallow_bnf" | "shallow_pf" | "shallow_flat" => {
                let input = match self.eval.pipeline.as_str() {
                    "shallow_bnf" => ShallowInput::Bottleneck,
                    "shallow_flat" => ShallowInput::FlattenedMatrix,
                    _ => ShallowInput::PrimaryFrames,
                };
                for spec in self.shallow_grid()? {
                    models.push(ModelSpec::Shallow {
                        spec: spec.validated(allow)?,
                        input,
                    });
                }
            }
            other => bail!("unknown eval.pipeline {other:?}"),
        }
        let mut grid = Vec::new();
        for model in &models {
            for &score_mode in &modes {
                grid.push(TrialConfig {
                    feature,
                    model: model.clone(),
                    score_mode,
                });
            }
        }
        Ok(grid)
    }

    fn shallow_grid(&self) -> anyhow::Result<Vec<ShallowSpec>> {
        let mut out = Vec::new();
        match self.eval.shallow_model.as_str() {
            "lr" => {
                for &reg in &self.eval.lr_reg {
                    for &l1 in &self.eval.lr_l1 {
                        for &l2 in &self.eval.lr_l2 {
                            out.push(ShallowSpec::Lr {
                                reg_strength: reg,
                                l1_weight: l1,
                                l2_weight: l2,
                            });
                        }
                    }
                }
            }
            "svm" => {
                for &reg in &self.eval.svm_reg {
                    for &gamma in &self.eval.svm_gamma {
                        out.push(ShallowSpec::Svm {
                            reg_strength: reg,
                            kernel_coef: gamma,
                        });
                    }
                }
            }
            "knn" => {
                for &k in &self.eval.knn_neighbors {
                    for &leaf in &self.eval.knn_leaf {
                        out.push(ShallowSpec::Knn {
                            neighbors: k,
                            leaf_size: leaf,
                        });
                    }
                }
            }
            "mlp" => {
                for &hidden in &self.eval.mlp_hidden {
                    for &l2 in &self.eval.mlp_l2 {
                        for &lr in &self.eval.mlp_lr {
                            out.push(ShallowSpec::Mlp {
                                hidden,
                                l2_weight: l2,
                                learning_rate: lr,
                            });
                        }
                    }
                }
            }
            other => bail!("unknown eval.shallow_model {other:?}"),
        }
        if out.is_empty() {
            bail!("the shallow hyperparameter grid is empty");
        }
        Ok(out)
    }
}
