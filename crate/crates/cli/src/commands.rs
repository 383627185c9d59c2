//! Command implementations.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

use vocalscreen::audio::{load_boundaries, load_manifest, Manifest};
use vocalscreen::eval::{
    evaluate, make_cv_plan, EvalContext, EvalDataset, EvalSettings, EvaluationReport,
};
use vocalscreen::features::{write_feature_csv, write_feature_file};
use vocalscreen::nn::checkpoint::save_network;
use vocalscreen::synth::{write_corpus, SynthConfig};
use vocalscreen::transfer::{
    attach_finetune_head, extract_bottlenecks, finetune_on, input_tensor, load_backbone,
    pretrain, prepare_features, save_backbone, PretrainOptions,
};

use crate::config::RunConfig;

/// Writes the sidecar metadata next to an artifact: resolved config, seed,
/// tool version and a wall-clock timestamp. Timestamps live only here so
/// the artifacts themselves stay byte-reproducible. If the artifact
/// already has a sidecar (a backbone checkpoint stores its own metadata
/// there), the run information is merged into it.
fn write_sidecar(artifact: &Path, cfg: &RunConfig, seed: u64) -> anyhow::Result<()> {
    let run = serde_json::json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "unix_time": std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        "config": cfg,
    });
    let path = PathBuf::from(format!("{}.meta.json", artifact.display()));
    let meta = match std::fs::read_to_string(&path)
        .ok()
        .and_then(|text| serde_json::from_str::<serde_json::Value>(&text).ok())
    {
        Some(mut existing) if existing.is_object() => {
            existing["run"] = run;
            existing
        }
        _ => serde_json::json!({ "run": run }),
    };
    std::fs::write(&path, serde_json::to_string_pretty(&meta)?)
        .with_context(|| format!("writing {}", path.display()))
}

fn require_file(path: &Path, what: &str) -> anyhow::Result<()> {
    if !path.is_file() {
        bail!("{what} not found at {}", path.display());
    }
    Ok(())
}

fn load_manifest_checked(path: Option<&PathBuf>, what: &str) -> anyhow::Result<Manifest> {
    let path = path.ok_or_else(|| anyhow::anyhow!("config is missing data.{what}"))?;
    require_file(path, what)?;
    Ok(load_manifest(path)?)
}

fn out_subdir(cfg: &RunConfig, name: &str) -> anyhow::Result<PathBuf> {
    let dir = cfg.out_dir()?.join(name);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn file_stem(path: &str) -> String {
    Path::new(path)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "clip".into())
}

/// `features`: one feature file per recording of the screening manifest
/// (or the pre-training manifest when no screening set is configured).
pub fn cmd_features(cfg: &RunConfig, csv: bool) -> anyhow::Result<()> {
    let seed = cfg.seed()?;
    let feature = cfg.feature_config()?;
    let manifest = if cfg.data.covid_manifest.is_some() {
        load_manifest_checked(cfg.data.covid_manifest.as_ref(), "covid_manifest")?
    } else {
        load_manifest_checked(cfg.data.pretrain_manifest.as_ref(), "pretrain_manifest")?
    };
    let dir = out_subdir(cfg, "features")?;

    let matrices = prepare_features(&manifest, &feature, cfg.trim_config().as_ref())?;
    for (entry, m) in manifest.entries.iter().zip(&matrices) {
        let stem = file_stem(&entry.source_path);
        if csv {
            let path = dir.join(format!("{stem}.csv"));
            write_feature_csv(&path, m.rows, m.cols, &m.data)?;
        } else {
            let path = dir.join(format!("{stem}.vsft"));
            write_feature_file(&path, m.rows, m.cols, &feature.echo(), &m.data)?;
        }
    }
    write_sidecar(&dir.join("features"), cfg, seed)?;
    println!(
        "features: wrote {} matrices of shape ({}, {}) to {}",
        matrices.len(),
        feature.rows(),
        feature.segments,
        dir.display()
    );
    Ok(())
}

/// `pretrain`: train the selected architecture on the four-class manifest
/// and save the frozen backbone.
pub fn cmd_pretrain(cfg: &RunConfig) -> anyhow::Result<PathBuf> {
    let seed = cfg.seed()?;
    let manifest = load_manifest_checked(cfg.data.pretrain_manifest.as_ref(), "pretrain_manifest")?;
    let feature = cfg.feature_config()?;
    let train_cfg = cfg.train_config(seed)?;
    let opts = PretrainOptions {
        arch: cfg.arch_options()?,
        smote_minority: cfg.pretrain.smote_minority,
        trim: cfg.trim_config(),
    };
    let backbone = pretrain(cfg.arch_kind()?, &manifest, &feature, &train_cfg, &opts)?;

    let dir = cfg.out_dir()?;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join("backbone.vsnn");
    save_backbone(&backbone, &path)?;
    write_sidecar(&path, cfg, seed)?;
    println!(
        "pretrain: {} backbone saved to {} (final loss {:.4})",
        backbone.kind.as_str(),
        path.display(),
        backbone.provenance.final_loss
    );
    Ok(path)
}

fn backbone_path(cfg: &RunConfig) -> anyhow::Result<PathBuf> {
    let path = cfg
        .data
        .backbone
        .clone()
        .unwrap_or(cfg.out_dir()?.join("backbone.vsnn"));
    require_file(&path, "backbone checkpoint")?;
    Ok(path)
}

/// `finetune`: attach the replacement head and train it on the screening
/// manifest, saving the combined network.
pub fn cmd_finetune(cfg: &RunConfig) -> anyhow::Result<()> {
    let seed = cfg.seed()?;
    let backbone = load_backbone(backbone_path(cfg)?)?;
    let manifest = load_manifest_checked(cfg.data.covid_manifest.as_ref(), "covid_manifest")?;
    let matrices = prepare_features(&manifest, &backbone.feature, cfg.trim_config().as_ref())?;

    let data: Vec<(vocalscreen::nn::Tensor<f32>, bool)> = matrices
        .iter()
        .map(|m| {
            let positive = matches!(
                m.label,
                Some(vocalscreen::audio::ClassLabel::Covid(
                    vocalscreen::audio::CovidClass::Positive
                ))
            );
            (input_tensor(backbone.kind, m), positive)
        })
        .collect();

    let mut train_cfg = cfg.train_config(seed)?;
    train_cfg.batch_size = train_cfg.batch_size.min(data.len().max(1));
    let net = attach_finetune_head(&backbone, cfg.arch.head_units, seed);
    let tuned = finetune_on(net, &data, &train_cfg)?;

    let dir = cfg.out_dir()?;
    let path = dir.join("finetuned.vsnn");
    save_network(&tuned, &path)?;
    write_sidecar(&path, cfg, seed)?;
    println!(
        "finetune: trained {} head parameters on {} recordings, saved to {}",
        tuned.trainable_param_count(),
        data.len(),
        path.display()
    );
    Ok(())
}

/// `bottleneck`: one 512-dimensional vector file per screening recording.
pub fn cmd_bottleneck(cfg: &RunConfig) -> anyhow::Result<()> {
    let seed = cfg.seed()?;
    let backbone = load_backbone(backbone_path(cfg)?)?;
    let manifest = load_manifest_checked(cfg.data.covid_manifest.as_ref(), "covid_manifest")?;
    let matrices = prepare_features(&manifest, &backbone.feature, cfg.trim_config().as_ref())?;
    let vectors = extract_bottlenecks(&backbone, &matrices)?;

    let dir = out_subdir(cfg, "bottleneck")?;
    for (entry, v) in manifest.entries.iter().zip(&vectors) {
        let stem = file_stem(&entry.source_path);
        let path = dir.join(format!("{stem}.vsft"));
        let data: Vec<f64> = v.iter().map(|&x| x as f64).collect();
        write_feature_file(&path, v.len(), 1, &backbone.feature.echo(), &data)?;
    }
    write_sidecar(&dir.join("bottleneck"), cfg, seed)?;
    println!(
        "bottleneck: wrote {} vectors of dimension {} to {}",
        vectors.len(),
        backbone.output_dim(),
        dir.display()
    );
    Ok(())
}

/// `cv`: the nested cross-validated evaluation; reports land in the output
/// directory.
pub fn cmd_cv(cfg: &RunConfig) -> anyhow::Result<EvaluationReport> {
    let seed = cfg.seed()?;
    let manifest = load_manifest_checked(cfg.data.covid_manifest.as_ref(), "covid_manifest")?;
    let boundaries = match &cfg.data.boundaries {
        Some(p) => {
            require_file(p, "boundaries")?;
            Some(load_boundaries(p)?)
        }
        None => None,
    };
    let feature = cfg.feature_config()?;
    let grid = cfg.trial_grid(feature)?;

    let needs_backbone = matches!(cfg.eval.pipeline.as_str(), "transfer" | "shallow_bnf");
    let backbone = if needs_backbone {
        Some(load_backbone(backbone_path(cfg)?)?)
    } else {
        None
    };
    if let Some(b) = &backbone {
        if b.feature != feature {
            bail!(
                "configured features ({}) do not match the backbone ({})",
                feature.echo(),
                b.feature.echo()
            );
        }
    }

    let dataset = EvalDataset::from_manifest(
        &manifest,
        feature.sample_rate,
        cfg.trim_config().as_ref(),
        boundaries.as_ref(),
    )?;
    let plan = make_cv_plan(&dataset.subject_labels(), seed)?;
    let mut settings = EvalSettings::new(cfg.train_config(seed)?, cfg.arch_options()?, seed);
    settings.smote = cfg.eval.smote;
    let ctx = EvalContext::new(&dataset, backbone.as_ref(), settings);
    let report = evaluate(&ctx, &plan, &grid)?;

    let dir = cfg.out_dir()?;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let json_path = dir.join("report.json");
    std::fs::write(&json_path, report.to_json())
        .with_context(|| format!("writing {}", json_path.display()))?;
    std::fs::write(dir.join("report.csv"), report.to_csv())?;
    std::fs::write(dir.join("roc.csv"), report.roc_csv())?;
    write_sidecar(&json_path, cfg, seed)?;
    println!(
        "cv: mean auc {:.4}, sigma {:.4} over {} outer folds ({})",
        report.mean_auc,
        report.sigma_auc,
        report.folds.len(),
        json_path.display()
    );
    Ok(report)
}

/// `synth`: write the synthetic benchmark corpus.
pub fn cmd_synth(cfg: &RunConfig) -> anyhow::Result<()> {
    let seed = cfg.seed()?;
    let dir = cfg.out_dir()?;
    let synth_cfg = SynthConfig {
        seed,
        pretrain_per_class: cfg.synth.pretrain_per_class,
        covid_subjects_per_class: cfg.synth.covid_subjects_per_class,
        clips_per_subject: cfg.synth.clips_per_subject,
        sample_rate: cfg.synth.sample_rate,
    };
    let paths = write_corpus(&synth_cfg, dir)?;
    write_sidecar(&paths.pretrain_manifest, cfg, seed)?;
    println!(
        "synth: corpus written under {} (manifests {}, {})",
        dir.display(),
        paths.pretrain_manifest.display(),
        paths.covid_manifest.display()
    );
    Ok(())
}
