//! Model access: prompt rendering, generation settings, call accounting,
//! and deterministic record/replay.
//!
//! Every completion goes through a [`Gateway`], which counts calls per
//! template id and either forwards to a [`ChatClient`] (optionally recording
//! a transcript) or answers from a replay store. Counters back the
//! relation-prune call-count accounting, so every call site must pass the
//! template id it renders.

mod http;
mod template;
mod transcript;

pub use http::HttpChatClient;
pub use template::{PromptLibrary, PromptTemplate, TemplateId};
pub use transcript::{transcript_key, Transcript, TranscriptStore, TranscriptWriter};

use std::collections::{BTreeMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::GatewayError;

/// Whether a call belongs to the exploration or the reasoning phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenMode {
    Exploration,
    Reasoning,
}

impl GenMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GenMode::Exploration => "exploration",
            GenMode::Reasoning => "reasoning",
        }
    }
}

/// Generation settings for one call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub temperature: f64,
    pub max_tokens: u32,
    pub mode: GenMode,
}

impl GenConfig {
    pub fn new(temperature: f64, max_tokens: u32, mode: GenMode) -> Result<Self, GatewayError> {
        if !(0.0..=2.0).contains(&temperature) {
            return Err(GatewayError::InvalidGenConfig(format!(
                "temperature {temperature} outside [0, 2]"
            )));
        }
        if max_tokens == 0 {
            return Err(GatewayError::InvalidGenConfig(
                "max_tokens must be positive".into(),
            ));
        }
        Ok(Self {
            temperature,
            max_tokens,
            mode,
        })
    }

    /// Exploration default: temperature 0.4, 256-token cap.
    pub fn exploration() -> Self {
        Self {
            temperature: 0.4,
            max_tokens: 256,
            mode: GenMode::Exploration,
        }
    }

    /// Reasoning default: temperature 0, 256-token cap.
    pub fn reasoning() -> Self {
        Self {
            temperature: 0.0,
            max_tokens: 256,
            mode: GenMode::Reasoning,
        }
    }
}

/// A model response plus whether the finish reason indicated truncation.
#[derive(Debug, Clone)]
pub struct ChatOutcome {
    pub text: String,
    pub truncated: bool,
}

/// Anything that can answer a rendered prompt: a live endpoint or a
/// scripted stand-in. Must support concurrent in-flight calls.
pub trait ChatClient: Send + Sync {
    fn complete(
        &self,
        template: TemplateId,
        prompt: &str,
        gen: &GenConfig,
    ) -> Result<ChatOutcome, GatewayError>;
}

/// Canned responses per template id, consumed in FIFO order with an
/// optional per-template fallback once a queue runs dry. Used by tests and
/// by fixture recording; never by production runs.
#[derive(Debug, Default)]
pub struct ScriptedClient {
    queues: Mutex<BTreeMap<TemplateId, VecDeque<String>>>,
    fallbacks: Mutex<BTreeMap<TemplateId, String>>,
}

impl ScriptedClient {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, template: TemplateId, response: impl Into<String>) -> &Self {
        self.queues
            .lock()
            .expect("script lock")
            .entry(template)
            .or_default()
            .push_back(response.into());
        self
    }

    pub fn fallback(&self, template: TemplateId, response: impl Into<String>) -> &Self {
        self.fallbacks
            .lock()
            .expect("script lock")
            .insert(template, response.into());
        self
    }
}

impl ChatClient for ScriptedClient {
    fn complete(
        &self,
        template: TemplateId,
        _prompt: &str,
        _gen: &GenConfig,
    ) -> Result<ChatOutcome, GatewayError> {
        let queued = self
            .queues
            .lock()
            .expect("script lock")
            .get_mut(&template)
            .and_then(VecDeque::pop_front);
        let text = match queued {
            Some(t) => t,
            None => self
                .fallbacks
                .lock()
                .expect("script lock")
                .get(&template)
                .cloned()
                .ok_or_else(|| GatewayError::ScriptExhausted(template.to_string()))?,
        };
        Ok(ChatOutcome {
            text,
            truncated: false,
        })
    }
}

/// Per-template call counters plus a truncation counter. Race-free.
#[derive(Debug, Default)]
pub struct CallCounters {
    calls: [AtomicU64; TemplateId::ALL.len()],
    truncations: AtomicU64,
}

impl CallCounters {
    fn bump(&self, template: TemplateId) {
        let idx = TemplateId::ALL
            .iter()
            .position(|t| *t == template)
            .expect("template in ALL");
        self.calls[idx].fetch_add(1, Ordering::Relaxed);
    }

    pub fn count(&self, template: TemplateId) -> u64 {
        let idx = TemplateId::ALL
            .iter()
            .position(|t| *t == template)
            .expect("template in ALL");
        self.calls[idx].load(Ordering::Relaxed)
    }

    pub fn truncations(&self) -> u64 {
        self.truncations.load(Ordering::Relaxed)
    }

    /// Non-zero counters as a sorted map, for reports.
    pub fn snapshot(&self) -> BTreeMap<String, u64> {
        TemplateId::ALL
            .iter()
            .filter_map(|t| {
                let n = self.count(*t);
                (n > 0).then(|| (t.to_string(), n))
            })
            .collect()
    }
}

/// How completions are satisfied. Cloneable so each run can get its own
/// gateway (and therefore its own counters) over shared plumbing.
#[derive(Clone)]
pub enum ChatAccess {
    /// Forward to a client, optionally appending every interaction to a
    /// transcript file.
    Live {
        client: Arc<dyn ChatClient>,
        record: Option<Arc<TranscriptWriter>>,
    },
    /// Answer purely from recorded transcripts; a miss is an error.
    Replay(Arc<TranscriptStore>),
}

impl ChatAccess {
    pub fn live(client: Arc<dyn ChatClient>) -> Self {
        ChatAccess::Live {
            client,
            record: None,
        }
    }

    pub fn recording(client: Arc<dyn ChatClient>, writer: Arc<TranscriptWriter>) -> Self {
        ChatAccess::Live {
            client,
            record: Some(writer),
        }
    }

    pub fn replay(store: Arc<TranscriptStore>) -> Self {
        ChatAccess::Replay(store)
    }
}

/// Template rendering + model access + call accounting for one run.
pub struct Gateway {
    templates: Arc<PromptLibrary>,
    access: ChatAccess,
    counters: CallCounters,
}

impl Gateway {
    pub fn new(templates: Arc<PromptLibrary>, access: ChatAccess) -> Self {
        Self {
            templates,
            access,
            counters: CallCounters::default(),
        }
    }

    pub fn render(
        &self,
        template: TemplateId,
        bindings: &BTreeMap<&str, String>,
    ) -> Result<String, GatewayError> {
        self.templates.get(template)?.render(bindings)
    }

    /// Send a rendered prompt and return the response text.
    pub fn complete(
        &self,
        template: TemplateId,
        prompt: &str,
        gen: &GenConfig,
    ) -> Result<String, GatewayError> {
        self.counters.bump(template);
        match &self.access {
            ChatAccess::Live { client, record } => {
                let outcome = client.complete(template, prompt, gen)?;
                if outcome.truncated {
                    self.counters.truncations.fetch_add(1, Ordering::Relaxed);
                    tracing::warn!(template = %template, "response truncated by token cap");
                }
                if let Some(writer) = record {
                    writer.append(&Transcript::capture(template, prompt, gen, &outcome.text))?;
                }
                Ok(outcome.text)
            }
            ChatAccess::Replay(store) => {
                let key = transcript_key(template, prompt, gen);
                store
                    .get(&key)
                    .map(|t| t.response.clone())
                    .ok_or_else(|| GatewayError::ReplayMiss {
                        key,
                        template: template.to_string(),
                    })
            }
        }
    }

    /// Render + complete in one step.
    pub fn ask(
        &self,
        template: TemplateId,
        bindings: &BTreeMap<&str, String>,
        gen: &GenConfig,
    ) -> Result<String, GatewayError> {
        let prompt = self.render(template, bindings)?;
        self.complete(template, &prompt, gen)
    }

    pub fn counters(&self) -> &CallCounters {
        &self.counters
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lib() -> Arc<PromptLibrary> {
        Arc::new(PromptLibrary::builtin())
    }

    #[test]
    fn replay_returns_stored_response() {
        let gen = GenConfig::reasoning();
        let mut store = TranscriptStore::new();
        store
            .insert(Transcript::capture(TemplateId::FinalAnswer, "prompt", &gen, "Paris"))
            .unwrap();
        let gw = Gateway::new(lib(), ChatAccess::replay(Arc::new(store)));
        assert_eq!(
            gw.complete(TemplateId::FinalAnswer, "prompt", &gen).unwrap(),
            "Paris"
        );
    }

    #[test]
    fn replay_miss_carries_key() {
        let gen = GenConfig::reasoning();
        let gw = Gateway::new(lib(), ChatAccess::replay(Arc::new(TranscriptStore::new())));
        match gw.complete(TemplateId::FinalAnswer, "prompt", &gen).unwrap_err() {
            GatewayError::ReplayMiss { key, .. } => {
                assert_eq!(key, transcript_key(TemplateId::FinalAnswer, "prompt", &gen));
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn record_then_replay_round_trips() {
        let gen = GenConfig::exploration();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");

        let script = ScriptedClient::new();
        script.push(TemplateId::ClueQuery, "CLUE[a]: look things up");
        let writer = Arc::new(TranscriptWriter::create(&path).unwrap());
        let gw = Gateway::new(lib(), ChatAccess::recording(Arc::new(script), writer));
        let recorded = gw.complete(TemplateId::ClueQuery, "the prompt", &gen).unwrap();

        let store = Arc::new(TranscriptStore::load(&path).unwrap());
        let gw2 = Gateway::new(lib(), ChatAccess::replay(store));
        let replayed = gw2.complete(TemplateId::ClueQuery, "the prompt", &gen).unwrap();
        assert_eq!(recorded, replayed);
    }

    #[test]
    fn counters_track_per_template_calls() {
        let gen = GenConfig::exploration();
        let script = ScriptedClient::new();
        script.fallback(TemplateId::RelationPruneBatched, "REL[a]: r out");
        script.fallback(TemplateId::ClueQuery, "CLUE[a]: x");
        let gw = Gateway::new(lib(), ChatAccess::live(Arc::new(script)));
        for _ in 0..3 {
            gw.complete(TemplateId::RelationPruneBatched, "p", &gen).unwrap();
        }
        gw.complete(TemplateId::ClueQuery, "p", &gen).unwrap();
        assert_eq!(gw.counters().count(TemplateId::RelationPruneBatched), 3);
        assert_eq!(gw.counters().count(TemplateId::ClueQuery), 1);
        assert_eq!(gw.counters().count(TemplateId::FinalAnswer), 0);
        let snap = gw.counters().snapshot();
        assert_eq!(snap.get("relation_prune_batched"), Some(&3));
        assert!(!snap.contains_key("final_answer"));
    }

    #[test]
    fn scripted_client_exhaustion_is_an_error() {
        let gen = GenConfig::exploration();
        let script = ScriptedClient::new();
        script.push(TemplateId::TopicPrune, "only one");
        let gw = Gateway::new(lib(), ChatAccess::live(Arc::new(script)));
        gw.complete(TemplateId::TopicPrune, "p", &gen).unwrap();
        assert!(matches!(
            gw.complete(TemplateId::TopicPrune, "p", &gen),
            Err(GatewayError::ScriptExhausted(_))
        ));
    }

    #[test]
    fn gen_config_validates_bounds() {
        assert!(GenConfig::new(2.5, 10, GenMode::Exploration).is_err());
        assert!(GenConfig::new(0.5, 0, GenMode::Exploration).is_err());
        assert!(GenConfig::new(0.5, 10, GenMode::Exploration).is_ok());
        assert_eq!(GenConfig::exploration().temperature, 0.4);
        assert_eq!(GenConfig::reasoning().temperature, 0.0);
        assert_eq!(GenConfig::reasoning().max_tokens, 256);
    }
}
