//! Record/replay transcripts for deterministic offline runs.
//!
//! A transcript keys a model response by the hash of (template id, rendered
//! prompt, generation config). The store is an append-only line-delimited
//! JSON file; replaying a run against it reproduces every model interaction
//! byte for byte.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::GatewayError;

use super::{GenConfig, TemplateId};

/// Key a completion by everything that determines it.
pub fn transcript_key(template: TemplateId, prompt: &str, gen: &GenConfig) -> String {
    let mut hasher = Sha256::new();
    hasher.update(template.as_str().as_bytes());
    hasher.update([0x1f]);
    hasher.update(gen.temperature.to_string().as_bytes());
    hasher.update([0x1f]);
    hasher.update(gen.max_tokens.to_string().as_bytes());
    hasher.update([0x1f]);
    hasher.update(gen.mode.as_str().as_bytes());
    hasher.update([0x1f]);
    hasher.update(prompt.as_bytes());
    hex(&hasher.finalize())
}

fn sha256_hex(text: &str) -> String {
    hex(&Sha256::digest(text.as_bytes()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// One recorded model interaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub key: String,
    pub template_id: String,
    pub prompt_sha256: String,
    pub response: String,
}

impl Transcript {
    pub fn capture(template: TemplateId, prompt: &str, gen: &GenConfig, response: &str) -> Self {
        Self {
            key: transcript_key(template, prompt, gen),
            template_id: template.to_string(),
            prompt_sha256: sha256_hex(prompt),
            response: response.to_owned(),
        }
    }
}

/// In-memory replay store: key → transcript, bijective on keys.
#[derive(Debug, Default, Clone)]
pub struct TranscriptStore {
    entries: BTreeMap<String, Transcript>,
}

impl TranscriptStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Load a JSONL transcript file. A key recorded twice with identical
    /// responses deduplicates; conflicting responses for one key are an
    /// error because replay must be unambiguous.
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path).map_err(|e| GatewayError::Transcript {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        let mut store = Self::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let t: Transcript =
                serde_json::from_str(line).map_err(|e| GatewayError::Transcript {
                    path: path.to_owned(),
                    message: format!("line {}: {e}", i + 1),
                })?;
            store.insert(t).map_err(|message| GatewayError::Transcript {
                path: path.to_owned(),
                message,
            })?;
        }
        Ok(store)
    }

    pub fn insert(&mut self, t: Transcript) -> Result<(), String> {
        match self.entries.get(&t.key) {
            Some(existing) if existing.response != t.response => Err(format!(
                "key {} maps to two different responses",
                t.key
            )),
            _ => {
                self.entries.insert(t.key.clone(), t);
                Ok(())
            }
        }
    }

    pub fn get(&self, key: &str) -> Option<&Transcript> {
        self.entries.get(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Write the store as JSONL, sorted by key.
    pub fn save(&self, path: &Path) -> Result<(), GatewayError> {
        let mut out = String::new();
        for t in self.entries.values() {
            out.push_str(&serde_json::to_string(t).expect("transcript serializes"));
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| GatewayError::Transcript {
            path: path.to_owned(),
            message: e.to_string(),
        })
    }
}

/// Append-only transcript writer shared by concurrent runs.
#[derive(Debug)]
pub struct TranscriptWriter {
    path: PathBuf,
    file: Mutex<std::fs::File>,
}

impl TranscriptWriter {
    pub fn create(path: &Path) -> Result<Self, GatewayError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| GatewayError::Transcript {
                path: path.to_owned(),
                message: e.to_string(),
            })?;
        Ok(Self {
            path: path.to_owned(),
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Append one transcript as a single line; the lock keeps lines whole.
    pub fn append(&self, t: &Transcript) -> Result<(), GatewayError> {
        let line = serde_json::to_string(t).expect("transcript serializes");
        let mut file = self.file.lock().expect("transcript writer lock");
        writeln!(file, "{line}").map_err(|e| GatewayError::Transcript {
            path: self.path.clone(),
            message: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_depends_on_every_component() {
        let gen = GenConfig::exploration();
        let base = transcript_key(TemplateId::TopicPrune, "p", &gen);
        assert_eq!(base, transcript_key(TemplateId::TopicPrune, "p", &gen));
        assert_ne!(base, transcript_key(TemplateId::ClueQuery, "p", &gen));
        assert_ne!(base, transcript_key(TemplateId::TopicPrune, "q", &gen));
        assert_ne!(
            base,
            transcript_key(TemplateId::TopicPrune, "p", &GenConfig::reasoning())
        );
    }

    #[test]
    fn store_rejects_conflicting_responses() {
        let gen = GenConfig::reasoning();
        let a = Transcript::capture(TemplateId::FinalAnswer, "p", &gen, "Paris");
        let b = Transcript::capture(TemplateId::FinalAnswer, "p", &gen, "London");
        let mut store = TranscriptStore::new();
        store.insert(a.clone()).unwrap();
        store.insert(a).unwrap();
        assert_eq!(store.len(), 1);
        assert!(store.insert(b).is_err());
    }

    #[test]
    fn save_and_load_round_trip() {
        let gen = GenConfig::reasoning();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("transcripts.jsonl");
        let mut store = TranscriptStore::new();
        store
            .insert(Transcript::capture(TemplateId::FinalAnswer, "p", &gen, "Paris"))
            .unwrap();
        store.save(&path).unwrap();
        let loaded = TranscriptStore::load(&path).unwrap();
        let key = transcript_key(TemplateId::FinalAnswer, "p", &gen);
        assert_eq!(loaded.get(&key).unwrap().response, "Paris");
    }

    #[test]
    fn writer_appends_loadable_lines() {
        let gen = GenConfig::exploration();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec.jsonl");
        let writer = TranscriptWriter::create(&path).unwrap();
        writer
            .append(&Transcript::capture(TemplateId::EntityExtract, "a", &gen, "r1"))
            .unwrap();
        writer
            .append(&Transcript::capture(TemplateId::EntityExtract, "b", &gen, "r2"))
            .unwrap();
        assert_eq!(TranscriptStore::load(&path).unwrap().len(), 2);
    }
}
