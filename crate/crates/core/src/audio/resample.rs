//! Band-limited sample-rate conversion.

use super::AudioClip;

/// Half-width of the interpolation kernel in input samples.
const KERNEL_HALF_WIDTH: usize = 32;

/// Resamples a clip with windowed-sinc interpolation.
///
/// The anti-aliasing cutoff is 0.45 times the lower of the two rates and the
/// kernel weights are renormalised per output sample so a constant signal is
/// preserved exactly. Output length is `round(len * target / source)`; equal
/// rates return the clip unchanged.
pub fn resample(clip: &AudioClip, target_rate: u32) -> AudioClip {
    assert!(target_rate > 0, "target_rate must be positive");
    if clip.sample_rate == target_rate || clip.samples.is_empty() {
        let mut out = clip.clone();
        out.sample_rate = target_rate;
        return out;
    }

    let src = clip.sample_rate as f64;
    let dst = target_rate as f64;
    let out_len = ((clip.samples.len() as f64) * dst / src).round() as usize;
    // cutoff as a fraction of the input rate
    let cutoff = 0.45 * src.min(dst) / src;
    let x = &clip.samples;

    let mut out_samples = Vec::with_capacity(out_len);
    for n in 0..out_len {
        let t = n as f64 * src / dst; // position in input samples
        let lo = (t - KERNEL_HALF_WIDTH as f64).ceil().max(0.0) as usize;
        let hi = ((t + KERNEL_HALF_WIDTH as f64).floor() as usize).min(x.len().saturating_sub(1));
        let mut acc = 0.0;
        let mut wsum = 0.0;
        for k in lo..=hi {
            let d = k as f64 - t;
            let w = sinc(2.0 * cutoff * d) * hann(d / KERNEL_HALF_WIDTH as f64);
            acc += w * x[k];
            wsum += w;
        }
        out_samples.push(if wsum.abs() > 1e-12 { acc / wsum } else { 0.0 });
    }

    let mut out = clip.clone();
    out.samples = out_samples;
    out.sample_rate = target_rate;
    out
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

fn hann(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        0.5 * (1.0 + (std::f64::consts::PI * x).cos())
    }
}
