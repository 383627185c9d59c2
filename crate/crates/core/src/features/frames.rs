//! Fixed-count framing.
//!
//! Every recording is divided into exactly `segments` frames of equal
//! length; the inter-frame step (and therefore the overlap) adapts to the
//! signal length so feature dimensions never depend on recording duration.

/// Placement of the `segments` analysis frames over a signal.
#[derive(Clone, Debug, PartialEq)]
pub struct FramePlan {
    /// Frame start indices, monotonically non-decreasing, first is 0.
    pub starts: Vec<usize>,
    /// Frame length in samples.
    pub frame_len: usize,
    /// Overlap between consecutive frames in samples (frame_len - step);
    /// negative when frames are spaced apart.
    pub overlap: f64,
    /// Length the signal is zero-padded to before framing (equals the input
    /// length unless the input was shorter than one frame).
    pub padded_len: usize,
}

/// Plans `segments` frame positions over a signal of `len` samples.
///
/// Signals shorter than one frame are zero-padded to `frame_len` (recorded
/// in the plan). With a single segment the frame starts at 0; otherwise the
/// real-valued step is `(len - frame_len) / (segments - 1)` and start `i`
/// is `round(i * step)`, so the last frame ends exactly at the signal end.
pub fn plan_frames(len: usize, frame_len: usize, segments: usize) -> FramePlan {
    assert!(frame_len >= 1, "frame_len must be at least 1");
    assert!(segments >= 1, "segments must be at least 1");
    let padded_len = len.max(frame_len);
    if segments == 1 {
        return FramePlan {
            starts: vec![0],
            frame_len,
            overlap: frame_len as f64,
            padded_len,
        };
    }
    let step = (padded_len - frame_len) as f64 / (segments - 1) as f64;
    let starts: Vec<usize> = (0..segments)
        .map(|i| (i as f64 * step).round() as usize)
        .collect();
    FramePlan {
        starts,
        frame_len,
        overlap: frame_len as f64 - step,
        padded_len,
    }
}

impl FramePlan {
    /// Copies frame `i` into `out`, zero-filling past the signal end.
    pub fn fill_frame(&self, signal: &[f64], i: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.frame_len);
        let start = self.starts[i].min(signal.len());
        let avail = (signal.len() - start).min(self.frame_len);
        out[..avail].copy_from_slice(&signal[start..start + avail]);
        out[avail..].iter_mut().for_each(|v| *v = 0.0);
    }
}
