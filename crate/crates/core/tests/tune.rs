//! Temporary tuning probe (not part of the suite; run explicitly with
//! `cargo test -p vocalscreen --test tune -- --ignored --nocapture`).

use std::time::Instant;

use vocalscreen::audio::{load_manifest, TrimConfig};
use vocalscreen::eval::{
    evaluate, make_cv_plan, EvalContext, EvalDataset, EvalSettings, ModelSpec, ScoreMode,
    ShallowInput, TrialConfig,
};
use vocalscreen::features::{extract_features_from, FeatureConfig};
use vocalscreen::nn::TrainConfig;
use vocalscreen::shallow::ShallowSpec;
use vocalscreen::synth::{write_corpus, SynthConfig};
use vocalscreen::transfer::{
    extract_bottlenecks, pretrain, ArchOptions, ArchitectureKind, PretrainOptions,
    ResnetProfile,
};

fn median_sq_dist(vectors: &[Vec<f64>]) -> f64 {
    let mut dists = Vec::new();
    for (i, a) in vectors.iter().enumerate() {
        for b in vectors.iter().skip(i + 1) {
            dists.push(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>());
        }
    }
    dists.sort_by(|a, b| a.total_cmp(b));
    dists[dists.len() / 2].max(1e-12)
}

#[test]
#[ignore]
fn tune_benchmark() {
    let seed = 2201;
    let dir = std::env::temp_dir().join("vocalscreen-tune");
    let _ = std::fs::remove_dir_all(&dir);
    let synth = SynthConfig {
        seed,
        pretrain_per_class: 40,
        covid_subjects_per_class: 60,
        clips_per_subject: 3,
        sample_rate: 22050,
    };
    let t0 = Instant::now();
    let paths = write_corpus(&synth, &dir).unwrap();
    let pre = load_manifest(&paths.pretrain_manifest).unwrap();
    let cov = load_manifest(&paths.covid_manifest).unwrap();
    let feature = FeatureConfig::unchecked(vocalscreen::features::FeatureKind::LinearFbank { bands: 40 }, 1024, 150, 16000);
    let opts = PretrainOptions {
        arch: ArchOptions {
            resnet: ResnetProfile::Small10,
            ..ArchOptions::default()
        },
        smote_minority: false,
        trim: Some(TrimConfig::default()),
    };
    let backbone = pretrain(
        ArchitectureKind::Resnet,
        &pre,
        &feature,
        &TrainConfig::new(32, 20, 1e-3, seed),
        &opts,
    )
    .unwrap();
    println!(
        "pretrain done in {:.1?}, final loss {:.4}",
        t0.elapsed(),
        backbone.provenance.final_loss
    );

    let dataset =
        EvalDataset::from_manifest(&cov, 16000, Some(&TrimConfig::default()), None).unwrap();
    let plan = make_cv_plan(&dataset.subject_labels(), seed).unwrap();

    // transfer head
    let t = Instant::now();
    let settings = EvalSettings::new(
        TrainConfig::new(128, 150, 1e-3, seed),
        ArchOptions {
            resnet: ResnetProfile::Small10,
            ..ArchOptions::default()
        },
        seed,
    );
    let ctx = EvalContext::new(&dataset, Some(&backbone), settings.clone());
    let grid = vec![TrialConfig {
        feature,
        model: ModelSpec::TransferHead {
            arch: ArchitectureKind::Resnet,
            head_units: 32,
        },
        score_mode: ScoreMode::Ci2,
    }];
    let r = evaluate(&ctx, &plan, &grid).unwrap();
    println!(
        "transfer: mean auc {:.4} sigma {:.4} ({:.1?})",
        r.mean_auc,
        r.sigma_auc,
        t.elapsed()
    );

    // does the pretraining task itself generalise? probe the 4 classes
    {
        let pre_feats = vocalscreen::transfer::prepare_features(
            &pre, &feature, Some(&TrimConfig::default())).unwrap();
        let pre_bnf: Vec<Vec<f64>> = extract_bottlenecks(&backbone, &pre_feats)
            .unwrap()
            .into_iter()
            .map(|v| v.into_iter().map(f64::from).collect())
            .collect();
        let labels: Vec<usize> = pre.entries.iter().map(|e| match e.label {
            vocalscreen::audio::ClassLabel::Pretrain(p) => p.index(),
            _ => unreachable!(),
        }).collect();
        let mut tx = Vec::new(); let mut ty = Vec::new();
        let mut ex = Vec::new(); let mut ey = Vec::new();
        for (i, (v, &y)) in pre_bnf.iter().zip(&labels).enumerate() {
            if i % 4 == 0 { ex.push(v.clone()); ey.push(y); }
            else { tx.push(v.clone()); ty.push(y); }
        }
        let mut probes = Vec::new();
        for class in 0..4 {
            let bin: Vec<bool> = ty.iter().map(|&y| y == class).collect();
            probes.push(vocalscreen::shallow::LogisticRegression::fit(&tx, &bin, 1000.0, 0.0, 1.0));
        }
        let correct = ex.iter().zip(&ey).filter(|(x, &y)| {
            let s: Vec<f64> = probes.iter().map(|p| p.predict_proba(x)).collect();
            s.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0 == y
        }).count();
        println!("pretrain-task probe accuracy (held-out): {:.3}", correct as f64 / ey.len() as f64);
    }

    // class0-vs-class3 direction applied to the screening clips
    {
        let pre_feats = vocalscreen::transfer::prepare_features(
            &pre, &feature, Some(&TrimConfig::default())).unwrap();
        let pre_bnf: Vec<Vec<f64>> = extract_bottlenecks(&backbone, &pre_feats)
            .unwrap()
            .into_iter()
            .map(|v| v.into_iter().map(f64::from).collect())
            .collect();
        let labels: Vec<usize> = pre.entries.iter().map(|e| match e.label {
            vocalscreen::audio::ClassLabel::Pretrain(p) => p.index(),
            _ => unreachable!(),
        }).collect();
        let mut tx = Vec::new(); let mut ty = Vec::new();
        for (v, &y) in pre_bnf.iter().zip(&labels) {
            if y == 0 || y == 3 { tx.push(v.clone()); ty.push(y == 0); }
        }
        let lr = vocalscreen::shallow::LogisticRegression::fit(&tx, &ty, 1000.0, 0.0, 1.0);
        let cov_feats: Vec<_> = dataset.clips.iter()
            .map(|c| extract_features_from(&c.samples, &feature, c.subject.clone(), None))
            .collect();
        let cov_bnf: Vec<Vec<f64>> = extract_bottlenecks(&backbone, &cov_feats)
            .unwrap().into_iter()
            .map(|v| v.into_iter().map(f64::from).collect()).collect();
        let scores: Vec<f64> = cov_bnf.iter().map(|v| lr.predict_proba(v)).collect();
        let lab: Vec<bool> = dataset.clips.iter().map(|c| c.positive).collect();
        let a = vocalscreen::eval::auc(&vocalscreen::eval::roc(&scores, &lab).unwrap());
        println!("class0-vs-class3 direction on screening clips: auc {a:.4}");
    }

    // linear probe on per-clip bottlenecks, subject-grouped 80/20 split
    {
        let all: Vec<_> = dataset
            .clips
            .iter()
            .map(|c| extract_features_from(&c.samples, &feature, c.subject.clone(), None))
            .collect();
        let bnf: Vec<Vec<f64>> = extract_bottlenecks(&backbone, &all)
            .unwrap()
            .into_iter()
            .map(|v| v.into_iter().map(f64::from).collect())
            .collect();
        let mut train_x = Vec::new();
        let mut train_y = Vec::new();
        let mut test = Vec::new();
        for (clip, v) in dataset.clips.iter().zip(&bnf) {
            // subjects ending 0 or 5 are held out
            let held = clip.subject.ends_with('0') || clip.subject.ends_with('5');
            if held {
                test.push((v.clone(), clip.positive));
            } else {
                train_x.push(v.clone());
                train_y.push(clip.positive);
            }
        }
        let lr = vocalscreen::shallow::LogisticRegression::fit(&train_x, &train_y, 100.0, 0.0, 1.0);
        let scores: Vec<f64> = test.iter().map(|(v, _)| lr.predict_proba(v)).collect();
        let labels: Vec<bool> = test.iter().map(|(_, l)| *l).collect();
        let probe_auc = vocalscreen::eval::auc(&vocalscreen::eval::roc(&scores, &labels).unwrap());
        println!("lr-probe-on-bnf per-clip auc: {probe_auc:.4}");
    }

    // svm on bnf vs flattened
    let sample: Vec<_> = dataset
        .clips
        .iter()
        .take(60)
        .map(|c| extract_features_from(&c.samples, &feature, c.subject.clone(), None))
        .collect();
    let bnf_sample: Vec<Vec<f64>> = extract_bottlenecks(&backbone, &sample)
        .unwrap()
        .into_iter()
        .map(|v| v.into_iter().map(f64::from).collect())
        .collect();
    let flat_sample: Vec<Vec<f64>> = sample.iter().map(|m| m.flattened()).collect();
    let gamma_bnf = 1.0 / median_sq_dist(&bnf_sample);
    let gamma_flat = 1.0 / median_sq_dist(&flat_sample);

    for (name, input, gamma) in [
        ("svm+bnf ", ShallowInput::Bottleneck, gamma_bnf),
        ("svm+flat", ShallowInput::FlattenedMatrix, gamma_flat),
    ] {
        let t = Instant::now();
        let ctx = EvalContext::new(&dataset, Some(&backbone), settings.clone());
        let grid = vec![TrialConfig {
            feature,
            model: ModelSpec::Shallow {
                spec: ShallowSpec::Svm {
                    reg_strength: 10.0,
                    kernel_coef: gamma,
                },
                input,
            },
            score_mode: ScoreMode::Ci2,
        }];
        let r = evaluate(&ctx, &plan, &grid).unwrap();
        println!(
            "{name}: mean auc {:.4} sigma {:.4} (gamma {:.3e}, {:.1?})",
            r.mean_auc,
            r.sigma_auc,
            gamma,
            t.elapsed()
        );
    }
}
