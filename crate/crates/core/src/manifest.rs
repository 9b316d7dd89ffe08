//! Dataset manifests: JSON-Lines, one record per utterance.
//!
//! Required fields are `id` and `speaker`; everything else is optional so a
//! manifest can serve feature extraction, conversion, transcription scoring
//! and speaker-verification runs alike.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub id: String,
    pub speaker: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wav_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript_words: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript_phonemes: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Default)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ManifestRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ManifestRecord> {
        self.records.iter()
    }
}

/// Parse a JSON-Lines manifest. Blank lines are allowed; records keep file
/// order; duplicate ids are rejected.
pub fn parse_manifest_str(text: &str) -> Result<Manifest> {
    let mut records = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: ManifestRecord = serde_json::from_str(line)
            .map_err(|e| Error::parse(line_no, format!("{e}")))?;
        if !seen.insert(record.id.clone()) {
            return Err(Error::data(format!(
                "duplicate manifest id '{}' at line {line_no}",
                record.id
            )));
        }
        records.push(record);
    }
    Ok(Manifest { records })
}

pub fn parse_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest_str(&text)
}

pub fn write_manifest(manifest: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for record in &manifest.records {
        let line = serde_json::to_string(record)
            .map_err(|e| Error::format(format!("manifest serialization failed: {e}")))?;
        out.push_str(&line);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_records_in_order() {
        let text = r#"{"id":"a","speaker":"s1"}
{"id":"b","speaker":"s2","wav_path":"b.wav"}
"#;
        let m = parse_manifest_str(text).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.records[0].id, "a");
        assert_eq!(m.records[1].wav_path.as_deref(), Some(Path::new("b.wav")));
    }

    #[test]
    fn duplicate_id_rejected() {
        let text = "{\"id\":\"a\",\"speaker\":\"s\"}\n{\"id\":\"a\",\"speaker\":\"s\"}\n";
        assert!(matches!(parse_manifest_str(text), Err(Error::Data(_))));
    }

    #[test]
    fn missing_speaker_names_field_and_line() {
        let text = "{\"id\":\"a\",\"speaker\":\"s\"}\n{\"id\":\"b\"}\n";
        match parse_manifest_str(text) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("speaker"), "message was: {message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_json_reports_line() {
        let text = "{\"id\":\"a\",\"speaker\":\"s\"}\nnot json\n";
        match parse_manifest_str(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn roundtrip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let manifest = Manifest {
            records: vec![ManifestRecord {
                id: "u1".into(),
                speaker: "sp".into(),
                feature_path: Some("u1.vcft".into()),
                wav_path: None,
                transcript_words: Some("the cat sat".into()),
                transcript_phonemes: None,
                embedding_path: None,
            }],
        };
        write_manifest(&manifest, &path).unwrap();
        let back = parse_manifest(&path).unwrap();
        assert_eq!(back.records, manifest.records);
    }
}
