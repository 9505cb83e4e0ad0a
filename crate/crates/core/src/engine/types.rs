//! State and record types for the exploration loop.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::EngineError;
use crate::gateway::{GenConfig, GenMode};
use crate::kg::{Direction, DirectedTriple, EntityId, GraphStore, RelationId};
use crate::retriever::{serialize_path, ScoredChunk, TopKScope};

/// The chain of traversed edges connecting an initial topic entity to the
/// current frontier. Consecutive steps chain through the expanded entity.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriplePath {
    pub steps: Vec<DirectedTriple>,
}

impl TriplePath {
    pub fn extended(&self, step: DirectedTriple) -> Self {
        let mut steps = self.steps.clone();
        steps.push(step);
        Self { steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn render(&self, store: &GraphStore) -> String {
        serialize_path(&self.steps, store)
    }
}

/// A frontier entity with its clue query, provenance path, and the scored
/// chunks that earned it its beam slot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopicEntity {
    pub entity: EntityId,
    pub clue_query: String,
    pub path: TriplePath,
    pub evidence: Vec<ScoredChunk>,
}

impl TopicEntity {
    pub fn seed(entity: EntityId) -> Self {
        Self {
            entity,
            clue_query: String::new(),
            path: TriplePath::default(),
            evidence: Vec::new(),
        }
    }
}

/// Per-run exploration state. Iteration 0 is the initialization phase with
/// empty paths; the beam holds at most `width` topics after every prune.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplorationState {
    pub question: String,
    pub iteration: usize,
    pub topics: Vec<TopicEntity>,
    pub global_evidence: Vec<ScoredChunk>,
    pub reports: Vec<IterationReport>,
}

impl ExplorationState {
    pub fn new(question: impl Into<String>) -> Self {
        Self {
            question: question.into(),
            iteration: 0,
            topics: Vec::new(),
            global_evidence: Vec::new(),
            reports: Vec::new(),
        }
    }
}

/// Outcome of examine-and-reason: either the answer, or new clue queries
/// for the next round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Answer {
        answer: String,
        rationale: String,
    },
    Continue {
        new_clue_queries: BTreeMap<EntityId, String>,
        rationale: String,
    },
}

/// The three ablation toggles. All on reproduces the full pipeline;
/// each off matches one ablation row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineFlags {
    /// LLM-driven filtering of linked entities down to good starting points.
    pub topic_prune: bool,
    /// One relation-prune call covering every topic entity, instead of one
    /// call per entity.
    pub batched_relation_prune: bool,
    /// Clue-query formulation; off leaves every clue empty.
    pub clue_query: bool,
}

impl Default for EngineFlags {
    fn default() -> Self {
        Self {
            topic_prune: true,
            batched_relation_prune: true,
            clue_query: true,
        }
    }
}

/// Exploration hyper-parameters. `width` bounds both the relations kept per
/// entity and the shared entity beam; `top_l <= top_k` is enforced at
/// validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub width: usize,
    pub max_depth: usize,
    pub top_k: usize,
    pub top_l: usize,
    pub alpha: f64,
    pub coarse_keep: usize,
    pub chunk_size_words: usize,
    pub chunk_overlap_words: usize,
    pub top_k_scope: TopKScope,
    pub flags: EngineFlags,
    pub gen_exploration: GenConfig,
    pub gen_reasoning: GenConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            width: 3,
            max_depth: 3,
            top_k: 5,
            top_l: 3,
            alpha: 0.5,
            coarse_keep: 20,
            chunk_size_words: crate::corpus::DEFAULT_CHUNK_SIZE_WORDS,
            chunk_overlap_words: crate::corpus::DEFAULT_CHUNK_OVERLAP_WORDS,
            top_k_scope: TopKScope::PerEntity,
            flags: EngineFlags::default(),
            gen_exploration: GenConfig::exploration(),
            gen_reasoning: GenConfig::reasoning(),
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.width == 0 {
            return Err(EngineError::InvalidConfig("width must be positive".into()));
        }
        if self.max_depth == 0 {
            return Err(EngineError::InvalidConfig("max_depth must be positive".into()));
        }
        if self.top_k == 0 {
            return Err(EngineError::InvalidConfig("top_k must be positive".into()));
        }
        if self.top_l == 0 || self.top_l > self.top_k {
            return Err(EngineError::InvalidConfig(format!(
                "top_l must satisfy 1 <= L <= K, got L={} K={}",
                self.top_l, self.top_k
            )));
        }
        if self.alpha < 0.0 || !self.alpha.is_finite() {
            return Err(EngineError::InvalidConfig("alpha must be >= 0".into()));
        }
        if self.coarse_keep == 0 {
            return Err(EngineError::InvalidConfig("coarse_keep must be positive".into()));
        }
        if self.chunk_size_words == 0 || self.chunk_overlap_words >= self.chunk_size_words {
            return Err(EngineError::InvalidConfig(format!(
                "chunk overlap ({}) must be smaller than chunk size ({})",
                self.chunk_overlap_words, self.chunk_size_words
            )));
        }
        for (gen, mode) in [
            (&self.gen_exploration, GenMode::Exploration),
            (&self.gen_reasoning, GenMode::Reasoning),
        ] {
            GenConfig::new(gen.temperature, gen.max_tokens, mode)
                .map_err(|e| EngineError::InvalidConfig(e.to_string()))?;
        }
        Ok(())
    }
}

/// A relation kept for an entity at relation-prune time.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SelectedRelation {
    pub relation: RelationId,
    pub direction: Direction,
}

/// A beam survivor as reported per iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivorReport {
    pub entity: EntityId,
    pub rank_score: f64,
    pub path: String,
}

/// One evidence chunk as reported per iteration and in the final record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceReport {
    pub entity: EntityId,
    pub chunk_index: usize,
    pub score: f64,
    pub text: String,
}

impl From<&ScoredChunk> for EvidenceReport {
    fn from(s: &ScoredChunk) -> Self {
        Self {
            entity: s.chunk.entity.clone(),
            chunk_index: s.chunk.index,
            score: s.score,
            text: s.chunk.text.clone(),
        }
    }
}

/// Serialized verdict summary inside an iteration report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VerdictReport {
    Answer { answer: String },
    Continue { new_clue_queries: BTreeMap<EntityId, String> },
    /// Entity prune produced no candidates; the loop stopped early.
    FrontierExhausted,
}

/// Full provenance for one RP→EP→ER pass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: usize,
    pub relation_selections: BTreeMap<EntityId, Vec<SelectedRelation>>,
    pub candidates_considered: usize,
    pub survivors: Vec<SurvivorReport>,
    pub evidence: Vec<EvidenceReport>,
    pub verdict: VerdictReport,
    pub warnings: Vec<String>,
}

/// The engine's result: answer, provenance, and per-template call counts.
/// Identical runs in replay mode serialize byte-identically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub schema: u32,
    pub question: String,
    pub answer: String,
    /// True when the answer was forced (depth exhausted, empty frontier, or
    /// no starting point) rather than declared by examine-and-reason.
    pub degraded: bool,
    pub iterations: usize,
    pub paths: Vec<String>,
    pub evidence: Vec<EvidenceReport>,
    pub call_counts: BTreeMap<String, u64>,
    pub warnings: Vec<String>,
    pub reports: Vec<IterationReport>,
}
