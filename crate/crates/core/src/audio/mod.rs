//! Audio loading, resampling, silence trimming and corpus manifests.

mod manifest;
mod resample;
mod trim;
mod wav;

pub use manifest::{load_boundaries, load_manifest, EventMap, Manifest, ManifestEntry};
pub use resample::resample;
pub use trim::{trim_silence, TrimConfig};
pub use wav::{load_wav, write_wav};

/// Which vocal sound a recording contains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AudioType {
    Cough,
    Breath,
    Speech,
}

impl AudioType {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cough" => Some(AudioType::Cough),
            "breath" => Some(AudioType::Breath),
            "speech" => Some(AudioType::Speech),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            AudioType::Cough => "cough",
            AudioType::Breath => "breath",
            AudioType::Speech => "speech",
        }
    }
}

/// Four-way label used for backbone pre-training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PretrainClass {
    Cough,
    Sneeze,
    Speech,
    Noise,
}

impl PretrainClass {
    pub const ALL: [PretrainClass; 4] = [
        PretrainClass::Cough,
        PretrainClass::Sneeze,
        PretrainClass::Speech,
        PretrainClass::Noise,
    ];

    pub fn index(&self) -> usize {
        match self {
            PretrainClass::Cough => 0,
            PretrainClass::Sneeze => 1,
            PretrainClass::Speech => 2,
            PretrainClass::Noise => 3,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            PretrainClass::Cough => "cough",
            PretrainClass::Sneeze => "sneeze",
            PretrainClass::Speech => "speech",
            PretrainClass::Noise => "noise",
        }
    }
}

/// Binary screening label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovidClass {
    Positive,
    Negative,
}

/// Label vocabulary: either a pre-training class or a screening class.
/// Exactly one variant is ever populated for a given recording.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassLabel {
    Pretrain(PretrainClass),
    Covid(CovidClass),
}

impl ClassLabel {
    /// Parses a manifest label string. Recognised values: `cough`, `sneeze`,
    /// `speech`, `noise`, `covid_positive`, `covid_negative`.
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cough" => Some(ClassLabel::Pretrain(PretrainClass::Cough)),
            "sneeze" => Some(ClassLabel::Pretrain(PretrainClass::Sneeze)),
            "speech" => Some(ClassLabel::Pretrain(PretrainClass::Speech)),
            "noise" => Some(ClassLabel::Pretrain(PretrainClass::Noise)),
            "covid_positive" => Some(ClassLabel::Covid(CovidClass::Positive)),
            "covid_negative" => Some(ClassLabel::Covid(CovidClass::Negative)),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ClassLabel::Pretrain(p) => p.as_str(),
            ClassLabel::Covid(CovidClass::Positive) => "covid_positive",
            ClassLabel::Covid(CovidClass::Negative) => "covid_negative",
        }
    }
}

/// Processing metadata attached to a clip as it moves through the pipeline.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ClipMeta {
    /// Set when silence trimming found no frame above threshold and fell
    /// back to keeping the single highest-energy frame.
    pub silence_fallback: bool,
}

/// A labelled, subject-attributed mono recording.
#[derive(Clone, Debug)]
pub struct AudioClip {
    /// Mono samples in [-1, 1].
    pub samples: Vec<f64>,
    /// Sample rate in Hz, always positive.
    pub sample_rate: u32,
    /// Subject the recording belongs to; required for grouped CV.
    pub subject_id: String,
    /// Populated once a manifest entry has been attached.
    pub label: Option<ClassLabel>,
    pub audio_type: Option<AudioType>,
    pub source_path: String,
    pub meta: ClipMeta,
}

impl AudioClip {
    /// Builds an in-memory clip; mostly used by tests and the synthesizer.
    pub fn from_samples(samples: Vec<f64>, sample_rate: u32) -> Self {
        assert!(sample_rate > 0, "sample_rate must be positive");
        AudioClip {
            samples,
            sample_rate,
            subject_id: String::new(),
            label: None,
            audio_type: None,
            source_path: String::new(),
            meta: ClipMeta::default(),
        }
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}
