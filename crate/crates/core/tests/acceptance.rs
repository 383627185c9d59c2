//! Acceptance suite: one test per criterion, each printing a pass/fail
//! line. The heavyweight fixtures (synthetic corpus, pre-trained backbone,
//! the end-to-end evaluation report) are built once and shared.
//!
//! Run with:
//!
//! ```text
//! cargo test -p vocalscreen --test acceptance -- --nocapture
//! ```

use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use vocalscreen::audio::{load_manifest, Manifest, TrimConfig};
use vocalscreen::balance::{smote, SmoteConfig};
use vocalscreen::eval::{
    auc, confusion_rates, eer_threshold, evaluate, evaluate_fixed, make_cv_plan, roc,
    EvalContext, EvalDataset, EvalSettings, EvaluationReport, ModelSpec, ScoreMode,
    ShallowInput, SubjectScore, TrialConfig, OUTER_FOLDS,
};
use vocalscreen::features::{
    extract_features, extract_features_from, FeatureConfig, FeatureKind, FBANK_COUNTS,
    FRAME_LENGTHS, MFCC_COUNTS, SEGMENT_COUNTS,
};
use vocalscreen::nn::{
    grad_check, BatchNormLayer, ConvLayer, DenseLayer, Init, Layer, LstmLayer, Network,
    ResidualBlock, ResidualKind, Tensor, TrainConfig,
};
use vocalscreen::rng::Rng;
use vocalscreen::shallow::ShallowSpec;
use vocalscreen::synth::{write_corpus, SynthConfig};
use vocalscreen::transfer::{
    attach_finetune_head, extract_bottleneck, extract_bottlenecks, finetune_on, input_tensor,
    pretrain, prepare_features, ArchOptions, ArchitectureKind, PretrainOptions,
    PretrainedBackbone, ResnetProfile, BACKBONE_DIM,
};

const BENCH_SEED: u64 = 2201;

fn verdict(criterion: u32, ok: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} — {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {criterion} failed: {detail}");
}

fn small_resnet_opts() -> ArchOptions {
    ArchOptions {
        resnet: ResnetProfile::Small10,
        ..ArchOptions::default()
    }
}

/// The shared end-to-end benchmark: corpus on disk, prepared screening
/// dataset, pre-trained 10-layer residual backbone and the transfer-learned
/// evaluation report.
struct Bench {
    dir: PathBuf,
    pretrain_manifest: Manifest,
    dataset: EvalDataset,
    backbone: PretrainedBackbone,
    report: EvaluationReport,
    report_json: String,
}

static BENCH: OnceLock<Bench> = OnceLock::new();

/// Benchmark features: linearly spaced filterbank energies keep the rows
/// frequency-local, which the convolutional backbone needs under the
/// corpus's random time-frequency warps.
fn bench_feature() -> FeatureConfig {
    FeatureConfig::unchecked(FeatureKind::LinearFbank { bands: 40 }, 1024, 150, 16000)
}

fn bench_synth_config() -> SynthConfig {
    SynthConfig {
        seed: BENCH_SEED,
        pretrain_per_class: 40,
        covid_subjects_per_class: 60,
        clips_per_subject: 3,
        sample_rate: 22050,
    }
}

fn bench_pretrain_cfg(seed: u64) -> TrainConfig {
    TrainConfig::new(32, 20, 1e-3, seed)
}

fn bench_head_cfg(seed: u64) -> TrainConfig {
    TrainConfig::new(128, 150, 1e-3, seed)
}

fn transfer_grid(feature: FeatureConfig) -> Vec<TrialConfig> {
    ScoreMode::ALL
        .iter()
        .map(|&score_mode| TrialConfig {
            feature,
            model: ModelSpec::TransferHead {
                arch: ArchitectureKind::Resnet,
                head_units: 32,
            },
            score_mode,
        })
        .collect()
}

/// Builds the full pipeline in `dir` and returns every stage's output.
fn build_pipeline(dir: &PathBuf, seed: u64) -> Bench {
    let _ = std::fs::remove_dir_all(dir);
    std::fs::create_dir_all(dir).unwrap();
    let t0 = Instant::now();
    let paths = write_corpus(&bench_synth_config(), dir).expect("corpus generation");
    let pretrain_manifest = load_manifest(&paths.pretrain_manifest).expect("pretrain manifest");
    let covid_manifest = load_manifest(&paths.covid_manifest).expect("covid manifest");
    println!("  [bench] corpus ready in {:.1?}", t0.elapsed());

    let t1 = Instant::now();
    let feature = bench_feature();
    let opts = PretrainOptions {
        arch: small_resnet_opts(),
        smote_minority: false,
        trim: Some(TrimConfig::default()),
    };
    let backbone = pretrain(
        ArchitectureKind::Resnet,
        &pretrain_manifest,
        &feature,
        &bench_pretrain_cfg(seed),
        &opts,
    )
    .expect("pre-training");
    println!(
        "  [bench] backbone trained in {:.1?} (final loss {:.4})",
        t1.elapsed(),
        backbone.provenance.final_loss
    );

    let t2 = Instant::now();
    let dataset = EvalDataset::from_manifest(
        &covid_manifest,
        feature.sample_rate,
        Some(&TrimConfig::default()),
        None,
    )
    .expect("screening dataset");
    let plan = make_cv_plan(&dataset.subject_labels(), seed).expect("plan");
    let mut settings =
        EvalSettings::new(bench_head_cfg(seed), small_resnet_opts(), seed);
    settings.smote = true;
    let ctx = EvalContext::new(&dataset, Some(&backbone), settings);
    let report = evaluate(&ctx, &plan, &transfer_grid(feature)).expect("evaluation");
    println!(
        "  [bench] nested evaluation in {:.1?} (mean auc {:.4}, sigma {:.4})",
        t2.elapsed(),
        report.mean_auc,
        report.sigma_auc
    );
    let report_json = report.to_json();
    Bench {
        dir: dir.clone(),
        pretrain_manifest,
        dataset,
        backbone,
        report,
        report_json,
    }
}

fn bench() -> &'static Bench {
    BENCH.get_or_init(|| {
        let dir = std::env::temp_dir().join("vocalscreen-acceptance");
        build_pipeline(&dir, BENCH_SEED)
    })
}

// ---------------------------------------------------------------- 1 ----

#[test]
fn criterion_1_scoring_oracles() {
    let t0 = Instant::now();
    let mut rng = Rng::seed_from(101);

    // subject scoring against direct brute-force recomputation
    for _ in 0..1000 {
        let n_events = 1 + rng.below(6);
        let events: Vec<Vec<f64>> = (0..n_events)
            .map(|_| (0..1 + rng.below(8)).map(|_| rng.next_f64()).collect())
            .collect();
        let threshold = rng.next_f64();
        let subject = SubjectScore {
            events: events.clone(),
        };

        let mut positive_events = 0usize;
        let mut frame_sum = 0.0;
        let mut frames = 0usize;
        for e in &events {
            let mut s = 0.0;
            for &p in e {
                s += p;
                frame_sum += p;
                frames += 1;
            }
            // boundary inclusive
            if s / e.len() as f64 >= threshold {
                positive_events += 1;
            }
        }
        let ci1_oracle = positive_events as f64 / n_events as f64;
        let ci2_oracle = frame_sum / frames as f64;
        assert_eq!(subject.score(threshold, ScoreMode::Ci1), ci1_oracle);
        assert!((subject.score(threshold, ScoreMode::Ci2) - ci2_oracle).abs() < 1e-12);
        let max_oracle = ci1_oracle.max(subject.score(threshold, ScoreMode::Ci2));
        assert_eq!(subject.score(threshold, ScoreMode::MaxOfBoth), max_oracle);
    }

    // AUC against the O(n^2) pairwise oracle
    for _ in 0..500 {
        let n = 6 + rng.below(80);
        let scores: Vec<f64> = (0..n).map(|_| (rng.below(10) as f64) / 9.0).collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.next_u64() & 1 == 1).collect();
        if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
            continue;
        }
        let fast = auc(&roc(&scores, &labels).unwrap());
        let (mut wins, mut pairs) = (0.0, 0.0);
        for (i, (&si, &li)) in scores.iter().zip(&labels).enumerate() {
            for (&sj, &lj) in scores.iter().zip(&labels).skip(i + 1) {
                let (pos, neg) = match (li, lj) {
                    (true, false) => (si, sj),
                    (false, true) => (sj, si),
                    _ => continue,
                };
                pairs += 1.0;
                wins += if pos > neg {
                    1.0
                } else if pos == neg {
                    0.5
                } else {
                    0.0
                };
            }
        }
        assert!(
            (fast - wins / pairs).abs() < 1e-9,
            "auc {fast} vs pairwise {}",
            wins / pairs
        );
    }

    // equal-error threshold against an exhaustive sweep
    for _ in 0..200 {
        let n = 6 + rng.below(60);
        let scores: Vec<f64> = (0..n).map(|_| (rng.below(12) as f64) / 11.0).collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.next_u64() & 1 == 1).collect();
        if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
            continue;
        }
        let gamma = eer_threshold(&roc(&scores, &labels).unwrap());
        let gap = |t: f64| {
            let (spec, sens, _) = confusion_rates(&scores, &labels, t);
            ((1.0 - spec) - (1.0 - sens)).abs()
        };
        let returned = gap(gamma);
        for &cand in &scores {
            assert!(
                returned <= gap(cand) + 1e-12,
                "gamma {gamma} (gap {returned}) loses to {cand} (gap {})",
                gap(cand)
            );
        }
    }

    let elapsed = t0.elapsed();
    verdict(
        1,
        elapsed.as_secs() < 30,
        &format!("scoring, AUC and EER oracles agree (ran in {elapsed:.1?}, budget 30 s)"),
    );
}

// ---------------------------------------------------------------- 2 ----

#[test]
fn criterion_2_gradient_fidelity() {
    let t0 = Instant::now();
    let mut worst_overall: f64 = 0.0;
    let mut rng = Rng::seed_from(202);
    let mut record = |name: &str, worst: f64| {
        println!("  [grad] {name}: worst relative error {worst:.2e}");
        assert!(worst < 1e-4, "{name} gradient error {worst}");
        if worst > worst_overall {
            worst_overall = worst;
        }
    };

    // dense (+ softmax/cross-entropy head, checked in every case)
    let mut worst = 0.0f64;
    for trial in 0..5 {
        let (din, hidden, classes, batch) = (
            2 + rng.below(6),
            2 + rng.below(5),
            2 + rng.below(3),
            1 + rng.below(4),
        );
        let mut r = Rng::seed_from(300 + trial);
        let mut net: Network<f64> = Network::new(vec![
            Layer::Dense(DenseLayer::new(din, hidden, Init::HeUniform, &mut r)),
            Layer::Relu,
            Layer::Dense(DenseLayer::new(hidden, classes, Init::GlorotUniform, &mut r)),
            Layer::Softmax { dim: classes },
        ]);
        let x = random_tensor(&[batch, din], &mut rng);
        let labels: Vec<usize> = (0..batch).map(|_| rng.below(classes)).collect();
        worst = worst.max(grad_check(&mut net, &x, &labels, 400 + trial).unwrap());
    }
    record("dense", worst);

    // conv2d with varying kernel, stride and padding
    let mut worst = 0.0f64;
    for trial in 0..5 {
        let (cin, cout, k) = (1 + rng.below(2), 2 + rng.below(3), 2 + rng.below(2));
        let stride = 1 + rng.below(2);
        let pad = rng.below(2);
        let hw = 5 + rng.below(3);
        let out_hw = (hw + 2 * pad - k) / stride + 1;
        let mut r = Rng::seed_from(500 + trial);
        let mut net: Network<f64> = Network::new(vec![
            Layer::Conv2d(ConvLayer::new(cin, cout, k, stride, pad, &mut r)),
            Layer::Relu,
            Layer::Dense(DenseLayer::new(
                cout * out_hw * out_hw,
                2,
                Init::GlorotUniform,
                &mut r,
            )),
            Layer::Softmax { dim: 2 },
        ]);
        let x = random_tensor(&[2, cin, hw, hw], &mut rng);
        worst = worst.max(grad_check(&mut net, &x, &[0, 1], 600 + trial).unwrap());
    }
    record("conv2d", worst);

    // maxpool behind a conv
    let mut worst = 0.0f64;
    for trial in 0..5 {
        let cout = 2 + rng.below(3);
        let hw = 6 + rng.below(3);
        let conv_out = hw - 1; // kernel 2, stride 1
        let pooled = conv_out / 2;
        let mut r = Rng::seed_from(700 + trial);
        let mut net: Network<f64> = Network::new(vec![
            Layer::Conv2d(ConvLayer::new(1, cout, 2, 1, 0, &mut r)),
            Layer::MaxPool,
            Layer::Relu,
            Layer::Dense(DenseLayer::new(
                cout * pooled * pooled,
                3,
                Init::GlorotUniform,
                &mut r,
            )),
            Layer::Softmax { dim: 3 },
        ]);
        let x = random_tensor(&[2, 1, hw, hw], &mut rng);
        worst = worst.max(grad_check(&mut net, &x, &[2, 0], 800 + trial).unwrap());
    }
    record("maxpool", worst);

    // lstm stacks, sequence and last-step outputs
    let mut worst = 0.0f64;
    for trial in 0..5 {
        let (din, u1, u2, steps) = (
            2 + rng.below(3),
            2 + rng.below(4),
            2 + rng.below(3),
            3 + rng.below(4),
        );
        let mut r = Rng::seed_from(900 + trial);
        let mut net: Network<f64> = Network::new(vec![
            Layer::Lstm(LstmLayer::new(din, u1, true, &mut r)),
            Layer::Lstm(LstmLayer::new(u1, u2, false, &mut r)),
            Layer::Dense(DenseLayer::new(u2, 2, Init::GlorotUniform, &mut r)),
            Layer::Softmax { dim: 2 },
        ]);
        let x = random_tensor(&[2, steps, din], &mut rng);
        worst = worst.max(grad_check(&mut net, &x, &[1, 0], 1000 + trial).unwrap());
    }
    record("lstm", worst);

    // batch normalisation over dense and convolutional activations
    let mut worst = 0.0f64;
    for trial in 0..5 {
        let mut r = Rng::seed_from(1100 + trial);
        let mut net: Network<f64> = if trial % 2 == 0 {
            let d = 3 + rng.below(4);
            let x_dim = 2 + rng.below(4);
            Network::new(vec![
                Layer::Dense(DenseLayer::new(x_dim, d, Init::HeUniform, &mut r)),
                Layer::BatchNorm(BatchNormLayer::new(d)),
                Layer::Relu,
                Layer::Dense(DenseLayer::new(d, 2, Init::GlorotUniform, &mut r)),
                Layer::Softmax { dim: 2 },
            ])
        } else {
            let c = 2 + rng.below(2);
            Network::new(vec![
                Layer::Conv2d(ConvLayer::new(1, c, 2, 1, 0, &mut r)),
                Layer::BatchNorm(BatchNormLayer::new(c)),
                Layer::Relu,
                Layer::Dense(DenseLayer::new(c * 4 * 4, 2, Init::GlorotUniform, &mut r)),
                Layer::Softmax { dim: 2 },
            ])
        };
        let x = if trial % 2 == 0 {
            let d = match &net.layers[0] {
                Layer::Dense(l) => l.in_dim,
                _ => unreachable!(),
            };
            random_tensor(&[4, d], &mut rng)
        } else {
            random_tensor(&[3, 1, 5, 5], &mut rng)
        };
        let labels: Vec<usize> = (0..x.shape[0]).map(|_| rng.below(2)).collect();
        worst = worst.max(grad_check(&mut net, &x, &labels, 1200 + trial).unwrap());
    }
    record("batchnorm", worst);

    // residual blocks, both variants, with and without projection
    let mut worst = 0.0f64;
    for trial in 0..5 {
        let kind = if trial % 2 == 0 {
            ResidualKind::Basic
        } else {
            ResidualKind::Bottleneck
        };
        let stride = 1 + trial % 2;
        let cin = 2 + rng.below(2);
        let ch = 2 + rng.below(2);
        let mut r = Rng::seed_from(1300 + trial as u64);
        let block = ResidualBlock::new(kind, cin, ch, stride, &mut r);
        let out_ch = block.out_channels();
        let hw = 6;
        let out_hw = if stride == 1 { hw } else { (hw + 1) / 2 };
        let mut net: Network<f64> = Network::new(vec![
            Layer::Residual(block),
            Layer::Dense(DenseLayer::new(
                out_ch * out_hw * out_hw,
                2,
                Init::GlorotUniform,
                &mut r,
            )),
            Layer::Softmax { dim: 2 },
        ]);
        let x = random_tensor(&[2, cin, hw, hw], &mut rng);
        worst = worst.max(grad_check(&mut net, &x, &[0, 1], 1400 + trial as u64).unwrap());
    }
    record("residual", worst);

    // softmax + cross-entropy alone, including large logits
    let mut worst = 0.0f64;
    for trial in 0..5 {
        let classes = 2 + rng.below(4);
        let mut r = Rng::seed_from(1500 + trial);
        let mut net: Network<f64> = Network::new(vec![
            Layer::Dense(DenseLayer::new(3, classes, Init::GlorotUniform, &mut r)),
            Layer::Softmax { dim: classes },
        ]);
        // scale one weight up to push logits wide
        net.layers[0].params_mut()[0].data[0] = 30.0;
        let x = random_tensor(&[3, 3], &mut rng);
        let labels: Vec<usize> = (0..3).map(|_| rng.below(classes)).collect();
        worst = worst.max(grad_check(&mut net, &x, &labels, 1600 + trial).unwrap());
    }
    record("softmax+cross-entropy", worst);

    let elapsed = t0.elapsed();
    verdict(
        2,
        elapsed.as_secs() < 120,
        &format!(
            "all layer gradients within 1e-4 of central differences (worst {worst_overall:.2e}, ran in {elapsed:.1?}, budget 2 min)"
        ),
    );
}

fn random_tensor(shape: &[usize], rng: &mut Rng) -> Tensor<f64> {
    let data = (0..shape.iter().product::<usize>())
        .map(|_| rng.uniform(-1.0, 1.0))
        .collect();
    Tensor::from_vec(shape, data)
}

// ---------------------------------------------------------------- 3 ----

#[test]
fn criterion_3_feature_shape_law() {
    let t0 = Instant::now();
    let sr = 16000u32;
    let mut rng = Rng::seed_from(303);
    let clip_samples: Vec<f64> = (0..sr as usize)
        .map(|t| {
            (std::f64::consts::TAU * 440.0 * t as f64 / sr as f64).sin() * 0.5
                + 0.1 * rng.uniform(-1.0, 1.0)
        })
        .collect();
    let clip = vocalscreen::audio::AudioClip::from_samples(clip_samples, sr);

    let mut combos = 0usize;
    for &frame_len in &FRAME_LENGTHS {
        for &segments in &SEGMENT_COUNTS {
            for &m in &MFCC_COUNTS {
                let cfg = FeatureConfig::from_grid(
                    FeatureKind::Mfcc { coeffs: m },
                    frame_len,
                    segments,
                    sr,
                )
                .unwrap();
                let out = extract_features(&clip, &cfg);
                assert_eq!(
                    (out.rows, out.cols),
                    (3 * m + 2, segments),
                    "mfcc m={m} f={frame_len} s={segments}"
                );
                assert!(out.data.iter().all(|v| v.is_finite()));
                combos += 1;
            }
            for &b in &FBANK_COUNTS {
                let cfg = FeatureConfig::from_grid(
                    FeatureKind::LinearFbank { bands: b },
                    frame_len,
                    segments,
                    sr,
                )
                .unwrap();
                let out = extract_features(&clip, &cfg);
                assert_eq!(
                    (out.rows, out.cols),
                    (3 * b + 2, segments),
                    "fbank b={b} f={frame_len} s={segments}"
                );
                combos += 1;
            }
        }
    }
    assert_eq!(combos, (MFCC_COUNTS.len() + FBANK_COUNTS.len()) * 4 * 5);

    let default = extract_features(&clip, &FeatureConfig::pretrain_default());
    assert_eq!((default.rows, default.cols), (119, 150));

    let elapsed = t0.elapsed();
    verdict(
        3,
        elapsed.as_secs() < 60,
        &format!("{combos} grid combinations produce exact (3M+2, S)/(3B+2, S) shapes and the default yields (119, 150) (ran in {elapsed:.1?}, budget 1 min)"),
    );
}

// ---------------------------------------------------------------- 4 ----

#[test]
fn criterion_4_smote_geometry() {
    let t0 = Instant::now();
    let mut rng = Rng::seed_from(404);
    for round in 0..20 {
        let dim = 2 + rng.below(20);
        let n = 5 + rng.below(40);
        let minority: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.uniform(-5.0, 5.0)).collect())
            .collect();
        let target = n + 1 + rng.below(2 * n);
        let cfg = SmoteConfig {
            k_neighbors: 1 + rng.below(6),
            target_count: target,
            seed: 5000 + round,
        };
        let synthetic = smote(&minority, &cfg).unwrap();
        assert_eq!(minority.len() + synthetic.len(), target, "exact counts");
        let again = smote(&minority, &cfg).unwrap();
        assert_eq!(synthetic, again, "seed determinism");

        for s in &synthetic {
            assert!(
                collinear_with_pair(s, &minority),
                "synthetic point off every segment (round {round})"
            );
        }
    }
    let elapsed = t0.elapsed();
    verdict(
        4,
        elapsed.as_secs() < 10,
        &format!("synthetic samples are convex combinations of two real samples, counts exact, seed-deterministic (ran in {elapsed:.1?}, budget 10 s)"),
    );
}

/// True when `p` lies on a segment between two minority points: collinear
/// within 1e-9 with interpolation coefficient in [0, 1].
fn collinear_with_pair(p: &[f64], set: &[Vec<f64>]) -> bool {
    for a in set {
        for b in set {
            let mut u = None;
            for d in 0..p.len() {
                if (b[d] - a[d]).abs() > 1e-9 {
                    u = Some((p[d] - a[d]) / (b[d] - a[d]));
                    break;
                }
            }
            let Some(u) = u else { continue };
            if !(-1e-9..=1.0 + 1e-9).contains(&u) {
                continue;
            }
            if p
                .iter()
                .enumerate()
                .all(|(d, &v)| (v - (a[d] + u * (b[d] - a[d]))).abs() < 1e-9)
            {
                return true;
            }
        }
    }
    false
}

// ---------------------------------------------------------------- 5 ----

#[test]
fn criterion_5_end_to_end_benchmark() {
    let t0 = Instant::now();
    let b = bench();
    let ok = b.report.mean_auc >= 0.95 && b.report.sigma_auc <= 0.05;
    verdict(
        5,
        ok,
        &format!(
            "transfer-learned residual benchmark: mean outer AUC {:.4} (>= 0.95), sigma {:.4} (<= 0.05), {} folds (ran in {:.1?}, budget 10 min on 4 cores)",
            b.report.mean_auc,
            b.report.sigma_auc,
            b.report.folds.len(),
            t0.elapsed()
        ),
    );
    assert_eq!(b.report.folds.len(), OUTER_FOLDS);
}

/// Spec'd sanity probe on the shared backbone: its 512-d outputs must
/// linearly separate the four pre-training classes for a held-out split.
#[test]
fn backbone_linear_probe_separates_pretrain_classes() {
    let b = bench();
    let features =
        prepare_features(&b.pretrain_manifest, &bench_feature(), Some(&TrimConfig::default()))
            .unwrap();
    let vectors = extract_bottlenecks(&b.backbone, &features).unwrap();
    let labels: Vec<usize> = b
        .pretrain_manifest
        .entries
        .iter()
        .map(|e| match e.label {
            vocalscreen::audio::ClassLabel::Pretrain(p) => p.index(),
            _ => unreachable!(),
        })
        .collect();

    // deterministic held-out split: every 4th sample tests
    let mut train_x = Vec::new();
    let mut train_y = Vec::new();
    let mut test_x = Vec::new();
    let mut test_y = Vec::new();
    for (i, (v, &y)) in vectors.iter().zip(&labels).enumerate() {
        let v64: Vec<f64> = v.iter().map(|&x| x as f64).collect();
        if i % 4 == 0 {
            test_x.push(v64);
            test_y.push(y);
        } else {
            train_x.push(v64);
            train_y.push(y);
        }
    }
    // one-vs-rest linear probes
    let mut probes = Vec::new();
    for class in 0..4 {
        let binary: Vec<bool> = train_y.iter().map(|&y| y == class).collect();
        probes.push(
            vocalscreen::shallow::LogisticRegression::fit(&train_x, &binary, 1000.0, 0.0, 1.0),
        );
    }
    let correct = test_x
        .iter()
        .zip(&test_y)
        .filter(|(x, &y)| {
            let scores: Vec<f64> = probes.iter().map(|p| p.predict_proba(x)).collect();
            let pred = scores
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            pred == y
        })
        .count();
    let accuracy = correct as f64 / test_y.len() as f64;
    println!("  [probe] linear probe accuracy on held-out bottlenecks: {accuracy:.3}");
    assert!(
        accuracy >= 0.9,
        "bottlenecks should linearly separate the pre-training classes, got {accuracy}"
    );
}

// ---------------------------------------------------------------- 6 ----

#[test]
fn criterion_6_transfer_reduces_auc_variance() {
    let t0 = Instant::now();
    let b = bench();
    // fewer segments keep five seeds of full direct training viable
    let feature = FeatureConfig::unchecked(FeatureKind::LinearFbank { bands: 40 }, 1024, 70, 16000);
    let covid_manifest =
        load_manifest(b.dir.join("covid.csv")).expect("covid manifest for the variance study");
    let dataset = EvalDataset::from_manifest(
        &covid_manifest,
        feature.sample_rate,
        Some(&TrimConfig::default()),
        None,
    )
    .unwrap();

    let mut transfer_sigmas = Vec::new();
    let mut direct_sigmas = Vec::new();
    for round in 0..5u64 {
        let seed = BENCH_SEED + 10 + round;
        let plan = make_cv_plan(&dataset.subject_labels(), seed).unwrap();

        // transfer arm: pre-train with this seed, then head-only folds
        let opts = PretrainOptions {
            arch: small_resnet_opts(),
            smote_minority: false,
            trim: Some(TrimConfig::default()),
        };
        let backbone = pretrain(
            ArchitectureKind::Resnet,
            &b.pretrain_manifest,
            &feature,
            &TrainConfig::new(32, 10, 1e-3, seed),
            &opts,
        )
        .unwrap();
        let settings = EvalSettings::new(bench_head_cfg(seed), small_resnet_opts(), seed);
        let ctx = EvalContext::new(&dataset, Some(&backbone), settings);
        let trial = TrialConfig {
            feature,
            model: ModelSpec::TransferHead {
                arch: ArchitectureKind::Resnet,
                head_units: 32,
            },
            score_mode: ScoreMode::Ci2,
        };
        let aucs = evaluate_fixed(&ctx, &plan, &trial).unwrap();
        let transfer_mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
        transfer_sigmas.push(vocalscreen::eval::population_std(&aucs));

        // direct arm: the same architecture trained from scratch per fold
        let settings = EvalSettings::new(
            TrainConfig::new(32, 10, 1e-3, seed),
            small_resnet_opts(),
            seed,
        );
        let ctx = EvalContext::new(&dataset, None, settings);
        let trial = TrialConfig {
            feature,
            model: ModelSpec::DirectDeep {
                arch: ArchitectureKind::Resnet,
            },
            score_mode: ScoreMode::Ci2,
        };
        let aucs = evaluate_fixed(&ctx, &plan, &trial).unwrap();
        let direct_mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
        direct_sigmas.push(vocalscreen::eval::population_std(&aucs));
        println!(
            "  [variance] seed {seed}: transfer auc {transfer_mean:.4} sigma {:.4}, direct auc {direct_mean:.4} sigma {:.4}",
            transfer_sigmas.last().unwrap(),
            direct_sigmas.last().unwrap()
        );
    }

    let median = |xs: &[f64]| {
        let mut s = xs.to_vec();
        s.sort_by(|a, b| a.total_cmp(b));
        s[s.len() / 2]
    };
    let mt = median(&transfer_sigmas);
    let md = median(&direct_sigmas);
    let ok = mt <= md;
    // soft criterion: report, warn on failure, never fail the suite
    println!(
        "criterion 6: {} — median sigma_AUC transfer {:.4} vs direct {:.4} over 5 seeds (ran in {:.1?})",
        if ok { "PASS" } else { "WARN (soft criterion)" },
        mt,
        md,
        t0.elapsed()
    );
}

// ---------------------------------------------------------------- 7 ----

#[test]
fn criterion_7_leakage_freedom() {
    let t0 = Instant::now();
    let mut rng = Rng::seed_from(707);
    for round in 0..100u64 {
        let n_pos = 5 + rng.below(30);
        let n_neg = 5 + rng.below(60);
        let subjects: Vec<(String, bool)> = (0..n_pos)
            .map(|i| (format!("p{i}"), true))
            .chain((0..n_neg).map(|i| (format!("n{i}"), false)))
            .collect();
        let plan = make_cv_plan(&subjects, 9000 + round).unwrap();

        // independent disjointness audit, not the plan's own validator
        use std::collections::BTreeSet;
        let mut outer_test_counts: std::collections::BTreeMap<String, usize> =
            Default::default();
        for fold in &plan.outer {
            let test: BTreeSet<&String> = fold.test_subjects.iter().collect();
            for s in &fold.test_subjects {
                *outer_test_counts.entry(s.clone()).or_default() += 1;
            }
            for inner in &fold.inner {
                let train: BTreeSet<&String> = inner.train_subjects.iter().collect();
                let dev: BTreeSet<&String> = inner.dev_subjects.iter().collect();
                assert!(train.is_disjoint(&dev), "round {round}: train/dev overlap");
                assert!(train.is_disjoint(&test), "round {round}: train/test overlap");
                assert!(dev.is_disjoint(&test), "round {round}: dev/test overlap");
            }
        }
        assert_eq!(outer_test_counts.len(), subjects.len());
        assert!(
            outer_test_counts.values().all(|&c| c == 1),
            "round {round}: a subject appears in more than one outer test fold"
        );
    }
    let elapsed = t0.elapsed();
    verdict(
        7,
        elapsed.as_secs() < 10,
        &format!("100 random manifests: train/dev/test subject sets pairwise disjoint, every subject in exactly one outer test fold (ran in {elapsed:.1?}, budget 10 s)"),
    );
}

// ---------------------------------------------------------------- 8 ----

#[test]
fn criterion_8_null_label_sanity() {
    let t0 = Instant::now();
    let b = bench();
    let mut means = Vec::new();
    for round in 0..5u64 {
        let seed = BENCH_SEED + 30 + round;
        // permute subject labels: the voices no longer encode the class
        let subjects: Vec<String> = {
            let mut s: Vec<String> =
                b.dataset.clips.iter().map(|c| c.subject.clone()).collect();
            s.sort();
            s.dedup();
            s
        };
        let mut labels: Vec<bool> = {
            let by: std::collections::BTreeMap<&String, bool> = b
                .dataset
                .clips
                .iter()
                .map(|c| (&c.subject, c.positive))
                .collect();
            subjects.iter().map(|s| by[s]).collect()
        };
        let mut rng = Rng::seed_from(seed);
        rng.shuffle(&mut labels);
        let assignment: std::collections::BTreeMap<&String, bool> =
            subjects.iter().zip(labels.iter().copied()).collect();

        let mut dataset = b.dataset.clone();
        for clip in &mut dataset.clips {
            clip.positive = assignment[&clip.subject];
        }

        let plan = make_cv_plan(&dataset.subject_labels(), seed).unwrap();
        let settings = EvalSettings::new(bench_head_cfg(seed), small_resnet_opts(), seed);
        let ctx = EvalContext::new(&dataset, Some(&b.backbone), settings);
        let report = evaluate(&ctx, &plan, &transfer_grid(bench_feature())).unwrap();
        println!("  [null] seed {seed}: mean outer AUC {:.4}", report.mean_auc);
        means.push(report.mean_auc);
    }
    let grand_mean = means.iter().sum::<f64>() / means.len() as f64;
    verdict(
        8,
        (0.35..=0.65).contains(&grand_mean),
        &format!(
            "permuted labels over 5 seeds: mean outer AUC {grand_mean:.4} within [0.35, 0.65] (per seed {means:?}, ran in {:.1?})",
            t0.elapsed()
        ),
    );
}

// ---------------------------------------------------------------- 9 ----

#[test]
fn criterion_9_bottleneck_contract() {
    let t0 = Instant::now();
    let b = bench();
    let feature = bench_feature();

    // dimension and fine-tuning invariance on a real benchmark recording
    let clip = &b.dataset.clips[0];
    let probe = extract_features_from(&clip.samples, &feature, clip.subject.clone(), None);
    let before = extract_bottleneck(&b.backbone, &probe).unwrap();
    assert_eq!(before.len(), BACKBONE_DIM);

    let head = attach_finetune_head(&b.backbone, 32, 1234);
    let positives = b.dataset.clips.iter().filter(|c| c.positive).take(12);
    let negatives = b.dataset.clips.iter().filter(|c| !c.positive).take(12);
    let tune_data: Vec<(Tensor<f32>, bool)> = positives
        .chain(negatives)
        .map(|c| {
            let m = extract_features_from(&c.samples, &feature, c.subject.clone(), None);
            (input_tensor(ArchitectureKind::Resnet, &m), c.positive)
        })
        .collect();
    finetune_on(head, &tune_data, &TrainConfig::new(8, 3, 1e-3, 99)).unwrap();
    let after = extract_bottleneck(&b.backbone, &probe).unwrap();
    assert_eq!(before, after, "fine-tuning must not move the backbone");

    // the same SVM on bottleneck vectors vs raw flattened matrices, with
    // the kernel width scaled by each representation's median distance
    let plan = make_cv_plan(&b.dataset.subject_labels(), BENCH_SEED).unwrap();
    let run_svm = |input: ShallowInput, gamma: f64| -> EvaluationReport {
        let settings =
            EvalSettings::new(bench_head_cfg(BENCH_SEED), small_resnet_opts(), BENCH_SEED);
        let ctx = EvalContext::new(&b.dataset, Some(&b.backbone), settings);
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
        evaluate(&ctx, &plan, &grid).unwrap()
    };

    let gamma_bnf = 1.0 / median_sq_dist(&bottleneck_sample(b));
    let gamma_flat = 1.0 / median_sq_dist(&flattened_sample(b, &feature));
    let report_bnf = run_svm(ShallowInput::Bottleneck, gamma_bnf);
    let report_flat = run_svm(ShallowInput::FlattenedMatrix, gamma_flat);
    let gap = report_bnf.mean_auc - report_flat.mean_auc;
    verdict(
        9,
        gap >= 0.05,
        &format!(
            "bottlenecks are 512-d, fine-tune invariant; SVM AUC on bottlenecks {:.4} vs raw flattened {:.4} (gap {:.4} >= 0.05, ran in {:.1?})",
            report_bnf.mean_auc,
            report_flat.mean_auc,
            gap,
            t0.elapsed()
        ),
    );
}

fn bottleneck_sample(b: &Bench) -> Vec<Vec<f64>> {
    let feature = bench_feature();
    let matrices: Vec<_> = b
        .dataset
        .clips
        .iter()
        .take(80)
        .map(|c| extract_features_from(&c.samples, &feature, c.subject.clone(), None))
        .collect();
    extract_bottlenecks(&b.backbone, &matrices)
        .unwrap()
        .into_iter()
        .map(|v| v.into_iter().map(f64::from).collect())
        .collect()
}

fn flattened_sample(b: &Bench, feature: &FeatureConfig) -> Vec<Vec<f64>> {
    b.dataset
        .clips
        .iter()
        .take(80)
        .map(|c| {
            extract_features_from(&c.samples, feature, c.subject.clone(), None).flattened()
        })
        .collect()
}

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

// --------------------------------------------------------------- 10 ----

#[test]
fn criterion_10_determinism() {
    let t0 = Instant::now();
    let b = bench();
    // rebuild the entire pipeline from scratch in a second directory
    let dir = std::env::temp_dir().join("vocalscreen-acceptance-rerun");
    let rerun = build_pipeline(&dir, BENCH_SEED);
    let identical = rerun.report_json == b.report_json;
    verdict(
        10,
        identical,
        &format!(
            "regenerated corpus, backbone and evaluation reproduce the report byte-identically ({} bytes, ran in {:.1?})",
            b.report_json.len(),
            t0.elapsed()
        ),
    );
}
