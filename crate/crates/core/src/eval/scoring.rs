//! Subject-level scoring.
//!
//! A recording (or a segmented event within one) yields per-frame positive
//! probabilities. The per-event mean is thresholded into an indicator, and
//! a subject's score is either the fraction of positive events, the
//! frame-weighted mean probability over all its audio, or the maximum of
//! the two; which one is a cross-validated hyperparameter.

use serde::{Deserialize, Serialize};

/// Mean per-frame positive probability of one event.
pub fn p_hat(frame_probs: &[f64]) -> f64 {
    assert!(!frame_probs.is_empty(), "p_hat of an empty event");
    frame_probs.iter().sum::<f64>() / frame_probs.len() as f64
}

/// Event indicator: 1 when the event mean reaches the threshold
/// (boundary inclusive).
pub fn indicator(p_hat: f64, threshold: f64) -> u8 {
    u8::from(p_hat >= threshold)
}

/// Fraction of positive events.
pub fn ci1(event_indicators: &[u8]) -> f64 {
    assert!(!event_indicators.is_empty(), "ci1 of an empty subject");
    event_indicators.iter().map(|&c| c as f64).sum::<f64>() / event_indicators.len() as f64
}

/// Frame-weighted mean probability over all of a subject's events.
pub fn ci2(all_frame_probs: &[f64]) -> f64 {
    assert!(!all_frame_probs.is_empty(), "ci2 of an empty subject");
    all_frame_probs.iter().sum::<f64>() / all_frame_probs.len() as f64
}

/// Which subject index feeds the ROC.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    Ci1,
    Ci2,
    MaxOfBoth,
}

impl ScoreMode {
    pub const ALL: [ScoreMode; 3] = [ScoreMode::Ci1, ScoreMode::Ci2, ScoreMode::MaxOfBoth];

    pub fn as_str(&self) -> &'static str {
        match self {
            ScoreMode::Ci1 => "ci1",
            ScoreMode::Ci2 => "ci2",
            ScoreMode::MaxOfBoth => "max",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ci1" => Some(ScoreMode::Ci1),
            "ci2" => Some(ScoreMode::Ci2),
            "max" => Some(ScoreMode::MaxOfBoth),
            _ => None,
        }
    }
}

/// Per-event frame probabilities gathered for one subject.
#[derive(Clone, Debug, Default)]
pub struct SubjectScore {
    /// One inner vector per event; its length is that event's frame count.
    pub events: Vec<Vec<f64>>,
}

impl SubjectScore {
    /// Events per subject.
    pub fn event_count(&self) -> usize {
        self.events.len()
    }

    /// Total frames over all events.
    pub fn frame_count(&self) -> usize {
        self.events.iter().map(Vec::len).sum()
    }

    /// The subject's score under `mode`, thresholding event means at
    /// `event_threshold` where indicators are needed.
    pub fn score(&self, event_threshold: f64, mode: ScoreMode) -> f64 {
        assert!(!self.events.is_empty(), "scoring an empty subject");
        match mode {
            ScoreMode::Ci1 => {
                let indicators: Vec<u8> = self
                    .events
                    .iter()
                    .map(|e| indicator(p_hat(e), event_threshold))
                    .collect();
                ci1(&indicators)
            }
            ScoreMode::Ci2 => {
                let all: Vec<f64> = self.events.iter().flatten().copied().collect();
                ci2(&all)
            }
            ScoreMode::MaxOfBoth => self
                .score(event_threshold, ScoreMode::Ci1)
                .max(self.score(event_threshold, ScoreMode::Ci2)),
        }
    }
}
