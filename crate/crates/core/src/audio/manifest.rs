//! Corpus manifests.
//!
//! A manifest is a CSV file with header `path,subject_id,label,audio_type,dataset`
//! listing every recording with its subject attribution and label. Labels
//! must come from the two recognised vocabularies (`cough`, `sneeze`,
//! `speech`, `noise` for pre-training; `covid_positive`, `covid_negative`
//! for screening). Fields may not contain commas; paths are resolved
//! relative to the manifest's directory.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use super::{AudioClip, AudioType, ClassLabel};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct ManifestEntry {
    pub source_path: String,
    pub subject_id: String,
    pub label: ClassLabel,
    pub audio_type: AudioType,
    pub dataset: String,
}

/// Immutable catalogue of recordings.
#[derive(Clone, Debug)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    /// Directory the manifest was loaded from; entry paths resolve against it.
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn resolve_path(&self, entry: &ManifestEntry) -> PathBuf {
        let p = Path::new(&entry.source_path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Loads a recording and attaches the entry's metadata.
    pub fn load_clip(&self, entry: &ManifestEntry) -> Result<AudioClip> {
        let mut clip = super::load_wav(self.resolve_path(entry))?;
        clip.subject_id = entry.subject_id.clone();
        clip.label = Some(entry.label);
        clip.audio_type = Some(entry.audio_type);
        Ok(clip)
    }
}

const HEADER: &str = "path,subject_id,label,audio_type,dataset";

/// Parses and validates a manifest CSV.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    parse_manifest(&text, base_dir)
}

fn parse_manifest(text: &str, base_dir: PathBuf) -> Result<Manifest> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == HEADER => {}
        Some((_, h)) => {
            return Err(Error::Manifest(format!(
                "unexpected header {h:?}, expected {HEADER:?}"
            )))
        }
        None => return Err(Error::Manifest("empty manifest".into())),
    }

    let mut entries = Vec::new();
    let mut seen_paths: HashSet<String> = HashSet::new();
    for (idx, line) in lines {
        let row = idx + 1; // 1-based, header is row 1
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(Error::Manifest(format!(
                "row {row}: expected 5 fields, found {}",
                fields.len()
            )));
        }
        let (p, subject, label_str, type_str, dataset) =
            (fields[0], fields[1], fields[2], fields[3], fields[4]);
        if subject.is_empty() {
            return Err(Error::Manifest(format!(
                "row {row}: empty subject_id for {p:?}"
            )));
        }
        let label = ClassLabel::parse(label_str).ok_or_else(|| {
            Error::Manifest(format!("row {row}: unknown label {label_str:?}"))
        })?;
        let audio_type = AudioType::parse(type_str).ok_or_else(|| {
            Error::Manifest(format!("row {row}: unknown audio type {type_str:?}"))
        })?;
        if !seen_paths.insert(p.to_string()) {
            return Err(Error::Manifest(format!(
                "row {row}: duplicate path {p:?}"
            )));
        }
        entries.push(ManifestEntry {
            source_path: p.to_string(),
            subject_id: subject.to_string(),
            label,
            audio_type,
            dataset: dataset.to_string(),
        });
    }
    Ok(Manifest { entries, base_dir })
}

/// Optional event segmentation: per recording path, sample ranges of the
/// individual events it contains. Recordings without an entry count as a
/// single event.
pub type EventMap = BTreeMap<String, Vec<(usize, usize)>>;

/// Loads an event boundary CSV with header `path,start_sample,end_sample`.
pub fn load_boundaries(path: impl AsRef<Path>) -> Result<EventMap> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "path,start_sample,end_sample" => {}
        Some((_, h)) => {
            return Err(Error::Manifest(format!(
                "unexpected boundary header {h:?}"
            )))
        }
        None => return Err(Error::Manifest("empty boundary file".into())),
    }
    let mut map = EventMap::new();
    for (idx, line) in lines {
        let row = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::Manifest(format!(
                "boundary row {row}: expected 3 fields"
            )));
        }
        let start: usize = fields[1].parse().map_err(|_| {
            Error::Manifest(format!("boundary row {row}: bad start {:?}", fields[1]))
        })?;
        let end: usize = fields[2].parse().map_err(|_| {
            Error::Manifest(format!("boundary row {row}: bad end {:?}", fields[2]))
        })?;
        if end <= start {
            return Err(Error::Manifest(format!(
                "boundary row {row}: empty range {start}..{end}"
            )));
        }
        map.entry(fields[0].to_string()).or_default().push((start, end));
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::PretrainClass;

    fn parse(text: &str) -> Result<Manifest> {
        parse_manifest(text, PathBuf::from("."))
    }

    #[test]
    fn parses_pretrain_row() {
        let m = parse("path,subject_id,label,audio_type,dataset\na.wav,s1,cough,cough,task\n")
            .unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(
            m.entries[0].label,
            ClassLabel::Pretrain(PretrainClass::Cough)
        );
        assert_eq!(m.entries[0].audio_type, AudioType::Cough);
    }

    #[test]
    fn parses_covid_row() {
        let m = parse(
            "path,subject_id,label,audio_type,dataset\nb.wav,s2,covid_positive,cough,synth\n",
        )
        .unwrap();
        assert_eq!(
            m.entries[0].label,
            ClassLabel::Covid(crate::audio::CovidClass::Positive)
        );
    }

    #[test]
    fn duplicate_path_rejected_with_path_named() {
        let err = parse(
            "path,subject_id,label,audio_type,dataset\na.wav,s1,cough,cough,x\na.wav,s2,noise,cough,x\n",
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("a.wav"), "{msg}");
        assert!(msg.contains("duplicate"), "{msg}");
    }

    #[test]
    fn unknown_label_names_row() {
        let err = parse(
            "path,subject_id,label,audio_type,dataset\na.wav,s1,mystery,cough,x\n",
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2"), "{msg}");
        assert!(msg.contains("mystery"), "{msg}");
    }

    #[test]
    fn empty_subject_rejected() {
        let err = parse("path,subject_id,label,audio_type,dataset\na.wav,,cough,cough,x\n")
            .unwrap_err();
        assert!(err.to_string().contains("subject_id"));
    }

    #[test]
    fn boundaries_parse() {
        let dir = std::env::temp_dir().join("vocalscreen-manifest-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("bounds.csv");
        std::fs::write(&p, "path,start_sample,end_sample\na.wav,0,100\na.wav,200,300\n").unwrap();
        let map = load_boundaries(&p).unwrap();
        assert_eq!(map["a.wav"], vec![(0, 100), (200, 300)]);
    }
}
