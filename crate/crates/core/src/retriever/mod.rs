//! Chunk scoring and candidate-entity ranking.
//!
//! The retrieval query is the concatenation of the question, the current
//! clue query, and the serialized triple path that reached the candidate.
//! Chunks go through a two-stage search (coarse scoring over everything,
//! rerank over the survivors) and each candidate entity is ranked by an
//! exponentially decayed weighted sum of its top-K chunk scores, weight
//! `e^(-alpha * i)` for the chunk at rank `i` (0-based).

mod embedder;

pub use embedder::{cosine, Embedder, HashEmbedder, RemoteEmbedder};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Chunk;
use crate::error::RetrieverError;
use crate::kg::{DirectedTriple, EntityId, GraphStore};

/// The three-part retrieval query: question, clue query, serialized path.
/// Clue query and path text are empty at iteration 0.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComposedQuery {
    pub question: String,
    pub clue_query: String,
    pub path_text: String,
}

impl ComposedQuery {
    pub fn new(
        question: impl Into<String>,
        clue_query: impl Into<String>,
        path_text: impl Into<String>,
    ) -> Self {
        Self {
            question: question.into(),
            clue_query: clue_query.into(),
            path_text: path_text.into(),
        }
    }

    /// Join the non-empty parts with newlines.
    pub fn text(&self) -> String {
        [&self.question, &self.clue_query, &self.path_text]
            .iter()
            .filter(|p| !p.is_empty())
            .map(|p| p.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Render a triple path for retrieval queries and prompts.
///
/// Each step reads left to right from its traversal source, with the arrow
/// showing the stored edge direction: `A -[r]-> B` for outgoing steps and
/// `A <-[r]- B` for incoming ones. Steps join with `; `.
pub fn serialize_path(path: &[DirectedTriple], store: &GraphStore) -> String {
    path.iter()
        .map(|step| {
            let (src, dst) = (store.label(step.source()), store.label(step.target()));
            match step.direction {
                crate::kg::Direction::Outgoing => {
                    format!("{src} -[{}]-> {dst}", step.triple.relation)
                }
                crate::kg::Direction::Incoming => {
                    format!("{src} <-[{}]- {dst}", step.triple.relation)
                }
            }
        })
        .collect::<Vec<_>>()
        .join("; ")
}

/// Which search stage produced a score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Coarse,
    Rerank,
}

/// A chunk with its relevance score. Rerank scores are the ones consumed
/// downstream; ordering is score-descending with (entity id, chunk index)
/// as the tie-break.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredChunk {
    pub chunk: Chunk,
    pub score: f64,
    pub stage: Stage,
}

fn sort_scored(chunks: &mut [ScoredChunk]) {
    chunks.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.chunk.entity.cmp(&b.chunk.entity))
            .then_with(|| a.chunk.index.cmp(&b.chunk.index))
    });
}

/// Two-stage search over one candidate's chunks.
///
/// Stage 1 scores every chunk by cosine similarity against the coarse
/// embedder and keeps the best `coarse_keep`; stage 2 rescores the survivors
/// with the rerank embedder. Returns the survivors sorted by rerank score.
pub fn two_stage_rank(
    query: &ComposedQuery,
    chunks: &[Chunk],
    coarse_keep: usize,
    coarse: &dyn Embedder,
    rerank: &dyn Embedder,
) -> Result<Vec<ScoredChunk>, RetrieverError> {
    if coarse_keep == 0 {
        return Err(RetrieverError::ZeroCoarseKeep);
    }
    if chunks.is_empty() {
        return Ok(Vec::new());
    }
    let query_text = query.text();
    let texts: Vec<String> = chunks.iter().map(|c| c.text.clone()).collect();

    let qv = coarse.embed(&query_text)?;
    let mut scored: Vec<ScoredChunk> = coarse
        .embed_batch(&texts)?
        .into_iter()
        .zip(chunks)
        .map(|(cv, chunk)| ScoredChunk {
            chunk: chunk.clone(),
            score: cosine(&qv, &cv),
            stage: Stage::Coarse,
        })
        .collect();
    sort_scored(&mut scored);
    scored.truncate(coarse_keep);

    let qv = rerank.embed(&query_text)?;
    let survivor_texts: Vec<String> = scored.iter().map(|s| s.chunk.text.clone()).collect();
    for (s, cv) in scored.iter_mut().zip(rerank.embed_batch(&survivor_texts)?) {
        s.score = cosine(&qv, &cv);
        s.stage = Stage::Rerank;
    }
    sort_scored(&mut scored);
    Ok(scored)
}

/// Decayed-sum ranking score over a descending score list:
/// `sum(scores[i] * e^(-alpha * i))` for `i < min(k, len)`.
///
/// The input must already be sorted descending; violating that is a
/// contract error, not a silent re-sort.
pub fn entity_rank_score(
    chunk_scores_desc: &[f64],
    alpha: f64,
    k: usize,
) -> Result<f64, RetrieverError> {
    for (i, w) in chunk_scores_desc.windows(2).enumerate() {
        if !(w[1] <= w[0]) {
            return Err(RetrieverError::UnsortedScores {
                index: i + 1,
                value: w[1],
            });
        }
    }
    Ok(chunk_scores_desc
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, s)| s * (-alpha * i as f64).exp())
        .sum())
}

/// Whether top-K chunk selection is per entity or pooled across all
/// candidates of the iteration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopKScope {
    #[default]
    PerEntity,
    Global,
}

/// Ranking hyper-parameters shared by the candidate-selection entry points.
#[derive(Debug, Clone, Copy)]
pub struct RankParams {
    /// Beam width: number of candidates kept.
    pub width: usize,
    /// Chunks per entity entering the decayed sum.
    pub top_k: usize,
    /// Decay rate for chunk rank weights.
    pub alpha: f64,
    /// Stage-1 survivors per candidate.
    pub coarse_keep: usize,
    pub scope: TopKScope,
}

/// A neighbor entity up for selection, with the edge that reached it and
/// its document's chunks (empty when the entity has no document).
#[derive(Debug, Clone)]
pub struct Candidate {
    pub entity: EntityId,
    pub via: DirectedTriple,
    pub chunks: Vec<Chunk>,
}

/// A ranked candidate: the decayed-sum score and the scored chunks
/// (at most K, sorted descending) that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateEntity {
    pub entity: EntityId,
    pub via: DirectedTriple,
    pub rank_score: f64,
    pub top_chunks: Vec<ScoredChunk>,
}

/// Rank candidates that all share one composed query. See
/// [`rank_candidates_each`] for the per-candidate-query form the exploration
/// loop uses (each candidate's query embeds its own path).
pub fn rank_candidates(
    candidates: Vec<Candidate>,
    query: &ComposedQuery,
    params: RankParams,
    coarse: &dyn Embedder,
    rerank: &dyn Embedder,
) -> Result<Vec<CandidateEntity>, RetrieverError> {
    let with_queries = candidates
        .into_iter()
        .map(|c| (c, query.clone()))
        .collect();
    Ok(rank_candidates_each(with_queries, params, coarse, rerank)?
        .into_iter()
        .map(|(_, c)| c)
        .collect())
}

/// Rank candidates, each scored against its own composed query, and keep the
/// global top `width` by decayed-sum score. Ties break by entity id, then by
/// the reaching edge, so identical inputs always produce identical output.
/// Each survivor is returned with the index of the input that produced it,
/// so callers can recover per-candidate context the score does not carry.
pub fn rank_candidates_each(
    candidates: Vec<(Candidate, ComposedQuery)>,
    params: RankParams,
    coarse: &dyn Embedder,
    rerank: &dyn Embedder,
) -> Result<Vec<(usize, CandidateEntity)>, RetrieverError> {
    if params.width == 0 {
        return Err(RetrieverError::ZeroWidth);
    }

    // Candidate scoring is pure, so it fans out; collect preserves order.
    let reranked: Vec<Vec<ScoredChunk>> = candidates
        .par_iter()
        .map(|(c, q)| two_stage_rank(q, &c.chunks, params.coarse_keep, coarse, rerank))
        .collect::<Result<_, _>>()?;

    let mut ranked: Vec<(usize, CandidateEntity)> = match params.scope {
        TopKScope::PerEntity => candidates
            .iter()
            .enumerate()
            .zip(reranked)
            .map(|((i, (c, _)), mut chunks)| {
                chunks.truncate(params.top_k);
                let scores: Vec<f64> = chunks.iter().map(|s| s.score).collect();
                Ok((
                    i,
                    CandidateEntity {
                        entity: c.entity.clone(),
                        via: c.via.clone(),
                        rank_score: entity_rank_score(&scores, params.alpha, params.top_k)?,
                        top_chunks: chunks,
                    },
                ))
            })
            .collect::<Result<_, RetrieverError>>()?,
        TopKScope::Global => {
            // Pool every candidate's reranked chunks, keep the global top-K,
            // and weight each survivor by its global rank index.
            let mut pooled: Vec<(usize, ScoredChunk)> = reranked
                .into_iter()
                .enumerate()
                .flat_map(|(ci, chunks)| chunks.into_iter().map(move |s| (ci, s)))
                .collect();
            pooled.sort_by(|a, b| {
                b.1.score
                    .total_cmp(&a.1.score)
                    .then_with(|| a.1.chunk.entity.cmp(&b.1.chunk.entity))
                    .then_with(|| a.1.chunk.index.cmp(&b.1.chunk.index))
            });
            pooled.truncate(params.top_k);

            let mut per_candidate: Vec<(f64, Vec<ScoredChunk>)> =
                vec![(0.0, Vec::new()); candidates.len()];
            for (rank, (ci, scored)) in pooled.into_iter().enumerate() {
                let weight = (-params.alpha * rank as f64).exp();
                per_candidate[ci].0 += scored.score * weight;
                per_candidate[ci].1.push(scored);
            }
            candidates
                .iter()
                .enumerate()
                .zip(per_candidate)
                .map(|((i, (c, _)), (rank_score, top_chunks))| {
                    (
                        i,
                        CandidateEntity {
                            entity: c.entity.clone(),
                            via: c.via.clone(),
                            rank_score,
                            top_chunks,
                        },
                    )
                })
                .collect()
        }
    };

    ranked.sort_by(|(ai, a), (bi, b)| {
        b.rank_score
            .total_cmp(&a.rank_score)
            .then_with(|| a.entity.cmp(&b.entity))
            .then_with(|| a.via.cmp(&b.via))
            .then_with(|| ai.cmp(bi))
    });
    ranked.truncate(params.width);
    Ok(ranked)
}
