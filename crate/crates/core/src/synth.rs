//! Synthetic benchmark corpus.
//!
//! Generates a small labelled audio collection with known structure: four
//! acoustically distinct pre-training classes (tone bursts, chirps,
//! band-filtered noise, click trains) and a two-class screening set built
//! from per-subject "voices" (random fundamental and formant band) where
//! the positive class shifts the formant band upward, mixes in more noise
//! and drifts in pitch. Subject-level nuisances dominate single recordings,
//! so honest evaluation requires subject-grouped folds.

use std::path::{Path, PathBuf};

use crate::audio::{resample, write_wav, AudioClip};
use crate::error::{Error, Result};
use crate::rng::{mix, Rng};

#[derive(Clone, Copy, Debug)]
pub struct SynthConfig {
    pub seed: u64,
    /// Recordings per pre-training class.
    pub pretrain_per_class: usize,
    /// Subjects per screening class.
    pub covid_subjects_per_class: usize,
    /// Recordings per screening subject.
    pub clips_per_subject: usize,
    /// Generation sample rate; the pipeline later resamples to 16 kHz.
    pub sample_rate: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 1,
            pretrain_per_class: 40,
            covid_subjects_per_class: 60,
            clips_per_subject: 3,
            sample_rate: 22050,
        }
    }
}

/// An in-memory generated recording.
#[derive(Clone, Debug)]
pub struct SynthClip {
    pub samples: Vec<f64>,
    pub label: &'static str,
    pub audio_type: &'static str,
    pub subject: String,
    pub file_name: String,
}

/// The four pre-training sound makers, mapped onto the label vocabulary.
const PRETRAIN_KINDS: [(&str, &str); 4] = [
    ("cough", "cough"),   // tone bursts
    ("sneeze", "cough"),  // chirps
    ("speech", "speech"), // click trains
    ("noise", "cough"),   // band-filtered noise
];

fn envelope(n: usize, len: usize, sr: f64) -> f64 {
    let attack = (0.012 * sr) as usize;
    let release = (0.08 * sr) as usize;
    let mut e = 1.0;
    if n < attack {
        e *= n as f64 / attack as f64;
    }
    if len - n <= release {
        e *= (len - n) as f64 / release as f64;
    }
    e
}

/// Harmonic stack with optional relative pitch drift over the clip.
fn harmonic_burst(rng: &mut Rng, sr: f64, len: usize, f0: f64, drift: f64) -> Vec<f64> {
    let vibrato = rng.uniform(3.0, 7.0);
    let depth = rng.uniform(0.0, 0.01);
    let dur = len as f64 / sr;
    let mut phase = 0.0;
    (0..len)
        .map(|n| {
            let t = n as f64 / sr;
            let f = f0
                * (1.0 + drift * t / dur)
                * (1.0 + depth * (std::f64::consts::TAU * vibrato * t).sin());
            phase += std::f64::consts::TAU * f / sr;
            let mut s = 0.0;
            // enough harmonics to populate the whole formant range
            for k in 1..=12 {
                s += (phase * k as f64).sin() / (k as f64).sqrt();
            }
            s * envelope(n, len, sr) * 0.25
        })
        .collect()
}

/// A voiced burst (harmonic stack) mixed with band noise whose centre sits
/// either on the voice's formant band or well away from it. Two of the
/// pre-training classes differ exactly in that relation, so the networks
/// must learn to compare the noise location against the voice rather than
/// memorise absolute frequencies.
#[allow(clippy::too_many_arguments)]
fn voiced_with_noise(
    rng: &mut Rng,
    sr: f64,
    len: usize,
    f0: f64,
    formant: f64,
    noise_mix: f64,
    noise_band: f64,
    drift: f64,
) -> Vec<f64> {
    let tone = harmonic_burst(rng, sr, len, f0, drift);
    // shape the voice around its formant band
    let voice = bandpass(&tone, formant, 1.0, sr);
    let voice_peak = voice.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-9);
    let white: Vec<f64> = (0..len).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let noise = bandpass(&white, noise_band, 4.0, sr);
    let noise_peak = noise.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-9);
    voice
        .iter()
        .zip(&noise)
        .enumerate()
        .map(|(n, (&v, &w))| {
            ((1.0 - noise_mix) * v / voice_peak * 0.6 + noise_mix * w / noise_peak * 0.6)
                * envelope(n, len, sr)
        })
        .collect()
}

/// Log-uniform draw over the shared formant range. Both the voice band and
/// any noise band come from this distribution, so absolute spectral
/// position carries (nearly) no class information; what differs between
/// classes is only whether the two coincide.
const FORMANT_LO: f64 = 550.0;
const FORMANT_HI: f64 = 2200.0;

fn formant_draw(rng: &mut Rng) -> f64 {
    (rng.uniform(FORMANT_LO.ln(), FORMANT_HI.ln())).exp()
}

/// Noise placed on the voice band.
fn near_partner(rng: &mut Rng, voice_band: f64) -> f64 {
    voice_band * rng.uniform(0.95, 1.05)
}

/// Noise placed independently of the voice band, redrawn until it sits
/// well away from it. The light rejection barely distorts the marginal.
fn far_partner(rng: &mut Rng, voice_band: f64) -> f64 {
    let min_log_gap = 1.55f64.ln();
    for _ in 0..64 {
        let cand = formant_draw(rng);
        if (cand / voice_band).ln().abs() >= min_log_gap {
            return cand;
        }
    }
    // voice sits mid-range and the draws kept landing close; force a side
    if voice_band * voice_band <= FORMANT_LO * FORMANT_HI {
        FORMANT_HI
    } else {
        FORMANT_LO
    }
}

fn click_train(rng: &mut Rng, sr: f64, len: usize) -> Vec<f64> {
    let period = rng.uniform(0.035, 0.08) * sr;
    let resonance = rng.uniform(900.0, 1600.0);
    let decay = rng.uniform(120.0, 260.0);
    let mut out = vec![0.0; len];
    let mut click_at = rng.uniform(0.0, period);
    while (click_at as usize) < len {
        let start = click_at as usize;
        for n in start..(start + (0.03 * sr) as usize).min(len) {
            let t = (n - start) as f64 / sr;
            out[n] += (std::f64::consts::TAU * resonance * t).sin() * (-decay * t).exp();
        }
        click_at += period;
    }
    for (n, v) in out.iter_mut().enumerate() {
        *v *= envelope(n, len, sr) * 0.7;
    }
    out
}

/// Second-order bandpass filter (constant-peak form).
fn bandpass(input: &[f64], center: f64, q: f64, sr: f64) -> Vec<f64> {
    let omega = std::f64::consts::TAU * center / sr;
    let alpha = omega.sin() / (2.0 * q);
    let b0 = alpha;
    let b2 = -alpha;
    let a0 = 1.0 + alpha;
    let a1 = -2.0 * omega.cos();
    let a2 = 1.0 - alpha;
    let mut out = vec![0.0; input.len()];
    let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
    for (n, &x) in input.iter().enumerate() {
        let y = (b0 * x + b2 * x2 - a1 * y1 - a2 * y2) / a0;
        x2 = x1;
        x1 = x;
        y2 = y1;
        y1 = y;
        out[n] = y;
    }
    out
}

/// Unrelated background noise mixed into every recording (both corpora) at
/// a random band and level; classifiers must learn to ignore it.
fn room_bed(rng: &mut Rng, sr: f64, len: usize) -> Vec<f64> {
    let center = rng.uniform(300.0, 4000.0);
    let level = rng.uniform(0.04, 0.15);
    let white: Vec<f64> = (0..len).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let mut out = bandpass(&white, center, 1.2, sr);
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-9);
    for v in out.iter_mut() {
        *v *= level / peak;
    }
    out
}

/// One screening subject's fixed voice characteristics. The per-subject
/// spread is deliberately wide so that it dominates raw feature distances
/// and fold assignment matters.
struct Voice {
    f0: f64,
    band: f64,
    noise_mix: f64,
    drift: f64,
}

/// Class effects. Both classes carry the same noise-mix distribution; what
/// differs is where the noise sits relative to the subject's own voice band
/// (on top of it for positives, well above it for negatives), plus a mild
/// extra pitch drift placed near the steady/sweep boundary of the
/// pre-training classes. Subject-level variation stays much larger than
/// either effect.
const POSITIVE_DRIFT: f64 = 0.06;
const POSITIVE_MIX_SHIFT: f64 = 0.12;

/// A screening recording: a harmonic burst at the subject's fundamental
/// plus band-filtered noise.
fn covid_clip(rng: &mut Rng, voice: &Voice, positive: bool, sr: f64, len: usize) -> Vec<f64> {
    let jitter = rng.uniform(0.95, 1.05);
    let f0 = voice.f0 * jitter;
    let (band, noise_mix, drift) = if positive {
        (
            near_partner(rng, voice.band),
            voice.noise_mix + POSITIVE_MIX_SHIFT,
            voice.drift + POSITIVE_DRIFT,
        )
    } else {
        (far_partner(rng, voice.band), voice.noise_mix, voice.drift)
    };
    voiced_with_noise(rng, sr, len, f0, voice.band, noise_mix, band, drift)
}

/// Random time-frequency warp: the recording plays back `factor` times
/// faster, scaling every frequency by the same amount. Relative structure
/// (noise position against the voice band, drift ratios, mixing levels)
/// is untouched while every absolute feature coordinate moves.
fn warp(samples: Vec<f64>, sr: f64, factor: f64, rng_tag: u32) -> Vec<f64> {
    let _ = rng_tag;
    let clip = AudioClip::from_samples(samples, sr as u32);
    let inter = (sr / factor).round() as u32;
    resample(&clip, inter.max(1000)).samples
}

/// Pads the body with generous random lead/tail quiet, lays the room bed
/// over the whole recording (quiet parts included), warps the result and
/// applies the clip gain. With the bed running through the pauses,
/// energy-based trimming removes a level-dependent amount of them, so the
/// burst lands at a different frame offset in every recording.
fn assemble(rng: &mut Rng, sr: f64, body: Vec<f64>, gain: f64) -> Vec<f64> {
    let lead = (rng.uniform(0.05, 0.45) * sr) as usize;
    let tail = (rng.uniform(0.05, 0.45) * sr) as usize;
    let mut out = vec![0.0; lead];
    out.extend(body);
    out.extend(std::iter::repeat(0.0).take(tail));
    let factor = rng.uniform(0.83, 1.2);
    out = warp(out, sr, factor, 0);
    let bed = room_bed(rng, sr, out.len());
    for (s, w) in out.iter_mut().zip(&bed) {
        *s = ((*s + w) * gain).clamp(-0.99, 0.99);
    }
    // random spectral tilt, another nuisance shared by both corpora
    let tilt = rng.uniform(-0.2, 0.2);
    let mut prev = 0.0;
    for s in out.iter_mut() {
        let cur = *s;
        *s = (cur - tilt * prev).clamp(-0.99, 0.99);
        prev = cur;
    }
    out
}

/// Generates the pre-training recordings in memory. The tone, sweep and
/// noise classes are drawn from one tone/noise continuum with overlapping
/// parameter ranges, so discriminating them requires estimating the mixing
/// ratio and the pitch drift.
pub fn pretrain_clips(cfg: &SynthConfig) -> Vec<SynthClip> {
    let sr = cfg.sample_rate as f64;
    let mut out = Vec::new();
    for (class_idx, (label, audio_type)) in PRETRAIN_KINDS.iter().enumerate() {
        let mut rng = Rng::seed_from(mix(cfg.seed, &[40, class_idx as u64]));
        for i in 0..cfg.pretrain_per_class {
            let len = (rng.uniform(0.7, 1.05) * sr) as usize;
            let f0 = rng.uniform(160.0, 340.0);
            let formant = formant_draw(&mut rng);
            let mix_ratio = rng.uniform(0.4, 0.7);
            let body = match class_idx {
                // voiced with the noise sitting on the voice band
                0 => {
                    let band = near_partner(&mut rng, formant);
                    let drift = rng.uniform(-0.08, 0.08);
                    voiced_with_noise(&mut rng, sr, len, f0, formant, mix_ratio, band, drift)
                }
                // voiced, noise away, strong upward sweep
                1 => {
                    let band = far_partner(&mut rng, formant);
                    let drift = rng.uniform(0.25, 1.2);
                    voiced_with_noise(&mut rng, sr, len, f0, formant, mix_ratio, band, drift)
                }
                2 => click_train(&mut rng, sr, len),
                // voiced with the noise well away from the voice band
                _ => {
                    let band = far_partner(&mut rng, formant);
                    let drift = rng.uniform(-0.08, 0.08);
                    voiced_with_noise(&mut rng, sr, len, f0, formant, mix_ratio, band, drift)
                }
            };
            let gain = rng.uniform(0.35, 1.0);
            out.push(SynthClip {
                samples: assemble(&mut rng, sr, body, gain),
                label,
                audio_type,
                subject: format!("pre_{label}_{i:03}"),
                file_name: format!("pre_{label}_{i:03}.wav"),
            });
        }
    }
    out
}

/// Generates the screening recordings in memory.
pub fn covid_clips(cfg: &SynthConfig) -> Vec<SynthClip> {
    let sr = cfg.sample_rate as f64;
    let mut out = Vec::new();
    for (class_idx, positive) in [(0u64, true), (1u64, false)] {
        let label = if positive {
            "covid_positive"
        } else {
            "covid_negative"
        };
        for s in 0..cfg.covid_subjects_per_class {
            let mut rng = Rng::seed_from(mix(cfg.seed, &[41, class_idx, s as u64]));
            let voice = Voice {
                f0: rng.uniform(160.0, 340.0),
                band: formant_draw(&mut rng),
                noise_mix: rng.uniform(0.35, 0.6),
                drift: rng.uniform(0.0, 0.08),
            };
            let subject = format!("subj_{}_{s:03}", if positive { "p" } else { "n" });
            for c in 0..cfg.clips_per_subject {
                let len = (rng.uniform(0.8, 1.15) * sr) as usize;
                let body = covid_clip(&mut rng, &voice, positive, sr, len);
                let gain = rng.uniform(0.2, 1.0);
                out.push(SynthClip {
                    samples: assemble(&mut rng, sr, body, gain),
                    label,
                    audio_type: "cough",
                    subject: subject.clone(),
                    file_name: format!("cov_{}_{s:03}_{c}.wav", if positive { "p" } else { "n" }),
                });
            }
        }
    }
    out
}

/// Paths of a corpus written to disk.
#[derive(Clone, Debug)]
pub struct CorpusPaths {
    pub pretrain_manifest: PathBuf,
    pub covid_manifest: PathBuf,
    pub wav_dir: PathBuf,
}

/// Writes the full corpus (WAV files plus the two manifests) under `dir`.
pub fn write_corpus(cfg: &SynthConfig, dir: impl AsRef<Path>) -> Result<CorpusPaths> {
    let dir = dir.as_ref();
    let wav_dir = dir.join("wav");
    std::fs::create_dir_all(&wav_dir)
        .map_err(|e| Error::io(wav_dir.display().to_string(), e))?;

    let write_set = |clips: &[SynthClip], manifest_path: &Path| -> Result<()> {
        let mut manifest = String::from("path,subject_id,label,audio_type,dataset\n");
        for clip in clips {
            let path = wav_dir.join(&clip.file_name);
            write_wav(&path, &clip.samples, cfg.sample_rate)?;
            manifest.push_str(&format!(
                "wav/{},{},{},{},synthetic\n",
                clip.file_name, clip.subject, clip.label, clip.audio_type
            ));
        }
        std::fs::write(manifest_path, manifest)
            .map_err(|e| Error::io(manifest_path.display().to_string(), e))
    };

    let pretrain_manifest = dir.join("pretrain.csv");
    let covid_manifest = dir.join("covid.csv");
    write_set(&pretrain_clips(cfg), &pretrain_manifest)?;
    write_set(&covid_clips(cfg), &covid_manifest)?;
    Ok(CorpusPaths {
        pretrain_manifest,
        covid_manifest,
        wav_dir,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_sizes_follow_config() {
        let cfg = SynthConfig {
            seed: 3,
            pretrain_per_class: 5,
            covid_subjects_per_class: 4,
            clips_per_subject: 2,
            sample_rate: 16000,
        };
        let pre = pretrain_clips(&cfg);
        let cov = covid_clips(&cfg);
        assert_eq!(pre.len(), 20);
        assert_eq!(cov.len(), 16);
        let positive = cov.iter().filter(|c| c.label == "covid_positive").count();
        assert_eq!(positive, 8);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SynthConfig {
            seed: 7,
            pretrain_per_class: 2,
            covid_subjects_per_class: 2,
            clips_per_subject: 1,
            sample_rate: 16000,
        };
        let a = covid_clips(&cfg);
        let b = covid_clips(&cfg);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.samples, y.samples);
        }
    }

    #[test]
    fn clips_are_finite_and_bounded() {
        let cfg = SynthConfig {
            seed: 9,
            pretrain_per_class: 3,
            covid_subjects_per_class: 3,
            clips_per_subject: 1,
            sample_rate: 22050,
        };
        for clip in pretrain_clips(&cfg).iter().chain(covid_clips(&cfg).iter()) {
            assert!(!clip.samples.is_empty());
            for &s in &clip.samples {
                assert!(s.is_finite() && s.abs() <= 1.0, "{s}");
            }
        }
    }

    #[test]
    fn written_corpus_loads_back_through_manifests() {
        let dir = std::env::temp_dir().join("vocalscreen-synth-test");
        let _ = std::fs::remove_dir_all(&dir);
        let cfg = SynthConfig {
            seed: 11,
            pretrain_per_class: 2,
            covid_subjects_per_class: 2,
            clips_per_subject: 1,
            sample_rate: 16000,
        };
        let paths = write_corpus(&cfg, &dir).unwrap();
        let pre = crate::audio::load_manifest(&paths.pretrain_manifest).unwrap();
        assert_eq!(pre.len(), 8);
        let clip = pre.load_clip(&pre.entries[0]).unwrap();
        assert_eq!(clip.sample_rate, 16000);
        assert!(!clip.samples.is_empty());
        let cov = crate::audio::load_manifest(&paths.covid_manifest).unwrap();
        assert_eq!(cov.len(), 4);
    }
}
