//! Error types for every subsystem of the engine.

use std::path::PathBuf;

/// Errors raised while loading or querying the graph store.
#[derive(Debug, thiserror::Error)]
pub enum KgError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// One or more data rows did not parse as `head<TAB>relation<TAB>tail`
    /// (or `id<TAB>label` for the labels file).
    #[error("malformed rows in {path} at line(s) {}", format_lines(.lines))]
    MalformedRows { path: PathBuf, lines: Vec<usize> },
}

/// Errors raised while loading or chunking the document corpus.
#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("record at line {line} is not valid JSON: {message}")]
    BadRecord { line: usize, message: String },
    #[error("record at line {line} is missing the entity_id field")]
    MissingEntityId { line: usize },
    #[error("chunk overlap ({overlap}) must be smaller than chunk size ({size})")]
    OverlapTooLarge { size: usize, overlap: usize },
}

/// Errors raised by chunk scoring and candidate ranking.
#[derive(Debug, thiserror::Error)]
pub enum RetrieverError {
    /// `entity_rank_score` requires its input sorted descending.
    #[error("chunk scores must be sorted descending: scores[{index}] = {value} rises above its predecessor")]
    UnsortedScores { index: usize, value: f64 },
    #[error("coarse_keep must be positive")]
    ZeroCoarseKeep,
    #[error("width must be positive")]
    ZeroWidth,
    #[error("embedder endpoint error: {0}")]
    Embedder(String),
}

/// Errors raised by template rendering and model access.
#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("template {template}: placeholder {{{name}}} is unbound")]
    UnboundPlaceholder { template: String, name: String },
    #[error("no template registered for id {0}")]
    UnknownTemplate(String),
    #[error("replay miss for key {key} (template {template})")]
    ReplayMiss { key: String, template: String },
    #[error("transcript store {path}: {message}")]
    Transcript { path: PathBuf, message: String },
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("endpoint returned a malformed response: {0}")]
    BadResponse(String),
    #[error("scripted client has no response queued for template {0}")]
    ScriptExhausted(String),
    #[error("invalid generation config: {0}")]
    InvalidGenConfig(String),
}

/// Errors raised by the exploration engine.
#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    /// NER produced no entity that links into the graph.
    #[error("no starting point: none of the extracted mentions resolve to a graph entity")]
    NoStartingPoint,
    #[error("invalid engine config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Retriever(#[from] RetrieverError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Errors raised by the evaluation harness.
#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("dataset record at line {line}: {message}")]
    BadRecord { line: usize, message: String },
    #[error("dataset is empty")]
    EmptyDataset,
}

fn format_lines(lines: &[usize]) -> String {
    lines
        .iter()
        .map(|l| l.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}
