//! The exploration control loop: initialization (entity extraction, topic
//! prune, clue queries), then per-iteration relation prune, entity prune,
//! and examine-and-reason until an answer or the depth bound.
//!
//! One run is a sequential loop; candidate scoring inside entity prune fans
//! out concurrently. Independent runs share the immutable stores and get
//! their own gateway, so per-run call counts never mix.

mod parse;
mod types;

pub use types::{
    AnswerRecord, EngineConfig, EngineFlags, EvidenceReport, ExplorationState, IterationReport,
    SelectedRelation, SurvivorReport, TopicEntity, TriplePath, Verdict, VerdictReport,
};

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::corpus::{chunk_document, Corpus};
use crate::error::EngineError;
use crate::gateway::{ChatAccess, Gateway, PromptLibrary, TemplateId};
use crate::kg::{Direction, DirectedTriple, EntityId, GraphStore, RelationId, Triple};
use crate::retriever::{
    rank_candidates_each, Candidate, ComposedQuery, Embedder, RankParams, ScoredChunk,
};

use parse::{parse_clue_lines, parse_items, parse_relation_lines, parse_verdict, ParsedVerdict};

/// Wire format version of [`AnswerRecord`].
pub const ANSWER_SCHEMA: u32 = 1;

/// Relations selected per entity at relation-prune time.
pub type RelationSelections = BTreeMap<EntityId, Vec<(RelationId, Direction)>>;

/// Outcome of one entity-prune step.
#[derive(Debug)]
pub struct PruneOutcome {
    pub topics: Vec<TopicEntity>,
    pub survivors: Vec<SurvivorReport>,
    pub evidence: Vec<ScoredChunk>,
    pub candidates_considered: usize,
}

/// The engine: immutable stores, model access, embedders, configuration.
pub struct Engine {
    graph: Arc<GraphStore>,
    corpus: Arc<Corpus>,
    templates: Arc<PromptLibrary>,
    access: ChatAccess,
    coarse: Arc<dyn Embedder>,
    rerank: Arc<dyn Embedder>,
    cfg: EngineConfig,
}

impl Engine {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        graph: Arc<GraphStore>,
        corpus: Arc<Corpus>,
        templates: Arc<PromptLibrary>,
        access: ChatAccess,
        coarse: Arc<dyn Embedder>,
        rerank: Arc<dyn Embedder>,
        cfg: EngineConfig,
    ) -> Result<Self, EngineError> {
        cfg.validate()?;
        Ok(Self {
            graph,
            corpus,
            templates,
            access,
            coarse,
            rerank,
            cfg,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn graph(&self) -> &GraphStore {
        &self.graph
    }

    /// Gateway for one run, with fresh counters.
    pub fn gateway(&self) -> Gateway {
        Gateway::new(self.templates.clone(), self.access.clone())
    }

    // ── Initialization ────────────────────────────────────────────────────

    /// Ask the model for entity mentions and link each one against the
    /// label table. Unlinkable mentions are dropped with a warning; zero
    /// linked entities is the "no starting point" error.
    pub fn extract_topic_entities(
        &self,
        question: &str,
        gw: &Gateway,
        warnings: &mut Vec<String>,
    ) -> Result<Vec<(String, EntityId)>, EngineError> {
        let bindings = BTreeMap::from([("question", question.to_owned())]);
        let response = gw.ask(TemplateId::EntityExtract, &bindings, &self.cfg.gen_exploration)?;

        let mut linked: Vec<(String, EntityId)> = Vec::new();
        for mention in parse_items(&response) {
            let ids = self.graph.resolve_label(&mention);
            if ids.is_empty() {
                warnings.push(format!("mention \"{mention}\" did not link to any entity"));
                continue;
            }
            for id in ids {
                if !linked.iter().any(|(_, e)| *e == id) {
                    linked.push((mention.clone(), id));
                }
            }
        }
        if linked.is_empty() {
            return Err(EngineError::NoStartingPoint);
        }
        Ok(linked)
    }

    /// Keep the linked entities fit to start reasoning. With the flag off,
    /// or when the selection parses to nothing, every linked entity stays.
    pub fn topic_prune(
        &self,
        question: &str,
        linked: &[(String, EntityId)],
        gw: &Gateway,
        warnings: &mut Vec<String>,
    ) -> Result<Vec<EntityId>, EngineError> {
        let all: Vec<EntityId> = linked.iter().map(|(_, e)| e.clone()).collect();
        if !self.cfg.flags.topic_prune {
            return Ok(all);
        }

        let candidates = linked
            .iter()
            .map(|(_, e)| format!("{e}: {}", self.graph.label(e)))
            .collect::<Vec<_>>()
            .join("\n");
        let bindings = BTreeMap::from([
            ("question", question.to_owned()),
            ("candidates", candidates),
        ]);
        let response = gw.ask(TemplateId::TopicPrune, &bindings, &self.cfg.gen_exploration)?;

        let picks: Vec<String> = parse_items(&response)
            .into_iter()
            .map(|s| s.to_lowercase())
            .collect();
        let kept: Vec<EntityId> = all
            .iter()
            .filter(|e| {
                picks.iter().any(|p| {
                    p == &e.as_str().to_lowercase()
                        || p == &self.graph.label(e).to_lowercase()
                })
            })
            .cloned()
            .collect();
        if kept.is_empty() {
            warnings.push("topic prune selected nothing usable; keeping all linked entities".into());
            return Ok(all);
        }
        Ok(kept)
    }

    /// One batched call formulating a clue query per topic. Topics the
    /// response does not cover keep an empty clue, with a warning. With the
    /// flag off every clue stays empty and no call is made.
    pub fn generate_clue_queries(
        &self,
        question: &str,
        topics: &mut [TopicEntity],
        gw: &Gateway,
        warnings: &mut Vec<String>,
    ) -> Result<(), EngineError> {
        if !self.cfg.flags.clue_query || topics.is_empty() {
            for t in topics.iter_mut() {
                t.clue_query.clear();
            }
            return Ok(());
        }

        let listing = topics
            .iter()
            .map(|t| format!("{}: {}", t.entity, self.graph.label(&t.entity)))
            .collect::<Vec<_>>()
            .join("\n");
        let bindings = BTreeMap::from([
            ("question", question.to_owned()),
            ("topics", listing),
        ]);
        let response = gw.ask(TemplateId::ClueQuery, &bindings, &self.cfg.gen_exploration)?;

        let clues = parse_clue_lines(&response);
        for t in topics.iter_mut() {
            match clues.get(t.entity.as_str()) {
                Some(clue) => t.clue_query = clue.clone(),
                None => {
                    t.clue_query.clear();
                    warnings.push(format!(
                        "no clue query returned for entity {}; continuing without one",
                        t.entity
                    ));
                }
            }
        }
        Ok(())
    }

    // ── Iteration steps ───────────────────────────────────────────────────

    /// Select up to `width` relations per topic entity. Batched mode issues
    /// exactly one call covering every topic; unbatched mode issues one call
    /// per topic. Selections are validated against the entity's actual
    /// incident relations; an entity whose selection validates to nothing
    /// falls back to its first `width` candidates.
    pub fn relation_prune(
        &self,
        question: &str,
        topics: &[TopicEntity],
        gw: &Gateway,
        warnings: &mut Vec<String>,
    ) -> Result<RelationSelections, EngineError> {
        let mut candidates: BTreeMap<EntityId, Vec<(RelationId, Direction)>> = BTreeMap::new();
        for t in topics {
            candidates
                .entry(t.entity.clone())
                .or_insert_with(|| self.graph.relations_of(&t.entity));
        }

        let mut selections: RelationSelections = BTreeMap::new();
        if self.cfg.flags.batched_relation_prune {
            let entity_lines = topics_block(topics, &candidates, &self.graph);
            let bindings = BTreeMap::from([
                ("question", question.to_owned()),
                ("width", self.cfg.width.to_string()),
                ("clue_queries", clue_block(topics)),
                ("entities", entity_lines),
            ]);
            let response =
                gw.ask(TemplateId::RelationPruneBatched, &bindings, &self.cfg.gen_exploration)?;
            self.apply_relation_choices(&response, &candidates, &mut selections, warnings);
        } else {
            for t in topics {
                let single = BTreeMap::from([(
                    t.entity.clone(),
                    candidates.get(&t.entity).cloned().unwrap_or_default(),
                )]);
                let bindings = BTreeMap::from([
                    ("question", question.to_owned()),
                    ("width", self.cfg.width.to_string()),
                    ("clue_query", or_none(&t.clue_query)),
                    ("entities", topics_block(std::slice::from_ref(t), &single, &self.graph)),
                ]);
                let response = gw.ask(
                    TemplateId::RelationPruneSingle,
                    &bindings,
                    &self.cfg.gen_exploration,
                )?;
                self.apply_relation_choices(&response, &single, &mut selections, warnings);
            }
        }

        for (entity, cands) in &candidates {
            let chosen = selections.entry(entity.clone()).or_default();
            if chosen.is_empty() && !cands.is_empty() {
                warnings.push(format!(
                    "no valid relation selection for {entity}; falling back to the first {} candidate(s)",
                    self.cfg.width
                ));
                *chosen = cands.iter().take(self.cfg.width).cloned().collect();
            }
        }
        Ok(selections)
    }

    fn apply_relation_choices(
        &self,
        response: &str,
        candidates: &BTreeMap<EntityId, Vec<(RelationId, Direction)>>,
        selections: &mut RelationSelections,
        warnings: &mut Vec<String>,
    ) {
        for choice in parse_relation_lines(response) {
            let entity = EntityId::new(choice.entity.clone());
            let Some(cands) = candidates.get(&entity) else {
                warnings.push(format!(
                    "relation choice for unknown entity {} dropped",
                    choice.entity
                ));
                continue;
            };
            let matched: Vec<(RelationId, Direction)> = cands
                .iter()
                .filter(|(r, d)| {
                    r.as_str() == choice.relation
                        && choice.direction.map_or(true, |cd| cd == *d)
                })
                .cloned()
                .collect();
            if matched.is_empty() {
                warnings.push(format!(
                    "relation {} is not incident to {}; dropped",
                    choice.relation, choice.entity
                ));
                continue;
            }
            let entry = selections.entry(entity).or_default();
            for pair in matched {
                if !entry.contains(&pair) && entry.len() < self.cfg.width {
                    entry.push(pair);
                }
            }
        }
    }

    /// Expand every (topic, selected relation) pair into candidate entities,
    /// score each candidate's chunks against its own composed query, and
    /// keep the global top `width` as the new beam plus the top `top_l`
    /// chunks as the shared evidence pool.
    pub fn entity_prune(
        &self,
        question: &str,
        topics: &[TopicEntity],
        selections: &RelationSelections,
        warnings: &mut Vec<String>,
    ) -> Result<PruneOutcome, EngineError> {
        let mut inputs: Vec<(Candidate, ComposedQuery)> = Vec::new();
        let mut contexts: Vec<(TriplePath, String)> = Vec::new();

        for topic in topics {
            let Some(selected) = selections.get(&topic.entity) else {
                continue;
            };
            for (relation, direction) in selected {
                for neighbor in self.graph.neighbors(&topic.entity, relation, *direction) {
                    let triple = match direction {
                        Direction::Outgoing => Triple {
                            head: topic.entity.clone(),
                            relation: relation.clone(),
                            tail: neighbor.clone(),
                        },
                        Direction::Incoming => Triple {
                            head: neighbor.clone(),
                            relation: relation.clone(),
                            tail: topic.entity.clone(),
                        },
                    };
                    let step = DirectedTriple::new(triple, *direction);
                    let path = topic.path.extended(step.clone());
                    let chunks = match self.corpus.get(&neighbor) {
                        Some(doc) => chunk_document(
                            doc,
                            self.cfg.chunk_size_words,
                            self.cfg.chunk_overlap_words,
                        )?,
                        None => Vec::new(),
                    };
                    let query = ComposedQuery::new(
                        question,
                        topic.clue_query.clone(),
                        path.render(&self.graph),
                    );
                    inputs.push((
                        Candidate {
                            entity: neighbor,
                            via: step,
                            chunks,
                        },
                        query,
                    ));
                    contexts.push((path, topic.clue_query.clone()));
                }
            }
        }

        let candidates_considered = inputs.len();
        if candidates_considered == 0 {
            warnings.push("entity prune found no candidates to expand".into());
            return Ok(PruneOutcome {
                topics: Vec::new(),
                survivors: Vec::new(),
                evidence: Vec::new(),
                candidates_considered,
            });
        }

        let params = RankParams {
            width: self.cfg.width,
            top_k: self.cfg.top_k,
            alpha: self.cfg.alpha,
            coarse_keep: self.cfg.coarse_keep,
            scope: self.cfg.top_k_scope,
        };
        let ranked =
            rank_candidates_each(inputs, params, self.coarse.as_ref(), self.rerank.as_ref())?;

        let mut new_topics = Vec::with_capacity(ranked.len());
        let mut survivors = Vec::with_capacity(ranked.len());
        let mut pool: Vec<ScoredChunk> = Vec::new();
        for (input_index, cand) in ranked {
            let (path, clue) = contexts[input_index].clone();
            pool.extend(cand.top_chunks.iter().cloned());
            survivors.push(SurvivorReport {
                entity: cand.entity.clone(),
                rank_score: cand.rank_score,
                path: path.render(&self.graph),
            });
            new_topics.push(TopicEntity {
                entity: cand.entity,
                clue_query: clue,
                path,
                evidence: cand.top_chunks,
            });
        }

        // Shared evidence: best chunks across survivors, one entry per chunk.
        pool.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.chunk.entity.cmp(&b.chunk.entity))
                .then_with(|| a.chunk.index.cmp(&b.chunk.index))
        });
        let mut evidence: Vec<ScoredChunk> = Vec::new();
        for s in pool {
            let dup = evidence
                .iter()
                .any(|e| e.chunk.entity == s.chunk.entity && e.chunk.index == s.chunk.index);
            if !dup {
                evidence.push(s);
                if evidence.len() == self.cfg.top_l {
                    break;
                }
            }
        }

        Ok(PruneOutcome {
            topics: new_topics,
            survivors,
            evidence,
            candidates_considered,
        })
    }

    /// Present the aggregated references and parse the verdict. Unparseable
    /// responses degrade to "continue with clue queries unchanged".
    pub fn examine_and_reason(
        &self,
        state: &ExplorationState,
        gw: &Gateway,
        warnings: &mut Vec<String>,
    ) -> Result<Verdict, EngineError> {
        let bindings = BTreeMap::from([
            ("question", state.question.clone()),
            ("clue_queries", clue_block(&state.topics)),
            ("paths", paths_block(&state.topics, &self.graph)),
            ("evidence", evidence_block(&state.global_evidence)),
        ]);
        let response = gw.ask(TemplateId::ExamineReason, &bindings, &self.cfg.gen_reasoning)?;

        match parse_verdict(&response) {
            ParsedVerdict::Answer(answer) => Ok(Verdict::Answer {
                answer,
                rationale: response,
            }),
            ParsedVerdict::Continue(raw_clues) => {
                let mut new_clue_queries = BTreeMap::new();
                for (id, clue) in raw_clues {
                    let entity = EntityId::new(id.clone());
                    if state.topics.iter().any(|t| t.entity == entity) {
                        new_clue_queries.insert(entity, clue);
                    } else {
                        warnings.push(format!("clue for unknown entity {id} ignored"));
                    }
                }
                Ok(Verdict::Continue {
                    new_clue_queries,
                    rationale: response,
                })
            }
            ParsedVerdict::Unparseable => {
                warnings.push(
                    "examine-and-reason response had no ANSWER/CONTINUE marker; continuing with clue queries unchanged".into(),
                );
                Ok(Verdict::Continue {
                    new_clue_queries: BTreeMap::new(),
                    rationale: response,
                })
            }
        }
    }

    fn final_answer(
        &self,
        question: &str,
        state: &ExplorationState,
        gw: &Gateway,
    ) -> Result<String, EngineError> {
        let bindings = BTreeMap::from([
            ("question", question.to_owned()),
            ("paths", paths_block(&state.topics, &self.graph)),
            ("evidence", evidence_block(&state.global_evidence)),
        ]);
        let response = gw.ask(TemplateId::FinalAnswer, &bindings, &self.cfg.gen_reasoning)?;
        Ok(response.trim().to_owned())
    }

    // ── The loop ──────────────────────────────────────────────────────────

    /// Run the full pipeline for one question.
    pub fn run(&self, question: &str) -> Result<AnswerRecord, EngineError> {
        let gw = self.gateway();
        let mut warnings = Vec::new();
        let mut state = ExplorationState::new(question);

        // Initialization: entity extraction, topic prune, clue queries.
        match self.extract_topic_entities(question, &gw, &mut warnings) {
            Ok(linked) => {
                let kept = self.topic_prune(question, &linked, &gw, &mut warnings)?;
                state.topics = kept.into_iter().map(TopicEntity::seed).collect();
                self.generate_clue_queries(question, &mut state.topics, &gw, &mut warnings)?;
            }
            Err(EngineError::NoStartingPoint) => {
                warnings.push("no starting point; answering from the question alone".into());
                let answer = self.final_answer(question, &state, &gw)?;
                return Ok(self.record(state, answer, true, gw, warnings));
            }
            Err(e) => return Err(e),
        }

        let mut answered: Option<String> = None;
        for iteration in 1..=self.cfg.max_depth {
            state.iteration = iteration;
            let report_warn_base = warnings.len();

            let selections = self.relation_prune(question, &state.topics, &gw, &mut warnings)?;
            let outcome = self.entity_prune(question, &state.topics, &selections, &mut warnings)?;
            let candidates_considered = outcome.candidates_considered;
            let survivors = outcome.survivors;
            state.topics = outcome.topics;
            state.global_evidence = outcome.evidence;
            let evidence_reports: Vec<EvidenceReport> =
                state.global_evidence.iter().map(EvidenceReport::from).collect();

            if state.topics.is_empty() {
                state.reports.push(IterationReport {
                    iteration,
                    relation_selections: to_selected(&selections),
                    candidates_considered,
                    survivors,
                    evidence: evidence_reports,
                    verdict: VerdictReport::FrontierExhausted,
                    warnings: warnings.split_off(report_warn_base),
                });
                break;
            }

            let verdict = self.examine_and_reason(&state, &gw, &mut warnings)?;
            let verdict_report = match &verdict {
                Verdict::Answer { answer, .. } => VerdictReport::Answer {
                    answer: answer.clone(),
                },
                Verdict::Continue { new_clue_queries, .. } => VerdictReport::Continue {
                    new_clue_queries: new_clue_queries.clone(),
                },
            };
            state.reports.push(IterationReport {
                iteration,
                relation_selections: to_selected(&selections),
                candidates_considered,
                survivors,
                evidence: evidence_reports,
                verdict: verdict_report,
                warnings: warnings.split_off(report_warn_base),
            });

            match verdict {
                Verdict::Answer { answer, .. } => {
                    answered = Some(answer);
                    break;
                }
                Verdict::Continue { new_clue_queries, .. } => {
                    // New clues replace old ones only for entities named in
                    // the verdict; others carry forward.
                    for t in &mut state.topics {
                        if let Some(clue) = new_clue_queries.get(&t.entity) {
                            t.clue_query = clue.clone();
                        }
                    }
                }
            }
        }

        match answered {
            Some(answer) => Ok(self.record(state, answer, false, gw, warnings)),
            None => {
                let answer = self.final_answer(question, &state, &gw)?;
                Ok(self.record(state, answer, true, gw, warnings))
            }
        }
    }

    fn record(
        &self,
        state: ExplorationState,
        answer: String,
        degraded: bool,
        gw: Gateway,
        warnings: Vec<String>,
    ) -> AnswerRecord {
        AnswerRecord {
            schema: ANSWER_SCHEMA,
            question: state.question.clone(),
            answer,
            degraded,
            iterations: state.reports.len(),
            paths: state
                .topics
                .iter()
                .map(|t| t.path.render(&self.graph))
                .collect(),
            evidence: state.global_evidence.iter().map(EvidenceReport::from).collect(),
            call_counts: gw.counters().snapshot(),
            warnings,
            reports: state.reports,
        }
    }
}

// ── Prompt block rendering ─────────────────────────────────────────────────

fn or_none(s: &str) -> String {
    if s.is_empty() {
        "(none)".to_owned()
    } else {
        s.to_owned()
    }
}

fn block_or_none(lines: Vec<String>) -> String {
    if lines.is_empty() {
        "(none)".to_owned()
    } else {
        lines.join("\n")
    }
}

fn clue_block(topics: &[TopicEntity]) -> String {
    block_or_none(
        topics
            .iter()
            .filter(|t| !t.clue_query.is_empty())
            .map(|t| format!("CLUE[{}]: {}", t.entity, t.clue_query))
            .collect(),
    )
}

fn paths_block(topics: &[TopicEntity], store: &GraphStore) -> String {
    block_or_none(
        topics
            .iter()
            .filter(|t| !t.path.is_empty())
            .map(|t| t.path.render(store))
            .collect(),
    )
}

fn evidence_block(evidence: &[ScoredChunk]) -> String {
    block_or_none(
        evidence
            .iter()
            .enumerate()
            .map(|(i, s)| format!("[{}] {}", i + 1, s.chunk.text))
            .collect(),
    )
}

/// `id (label): rel dir; rel dir; ...` lines, one per unique topic entity.
fn topics_block(
    topics: &[TopicEntity],
    candidates: &BTreeMap<EntityId, Vec<(RelationId, Direction)>>,
    store: &GraphStore,
) -> String {
    let mut seen = Vec::new();
    let mut lines = Vec::new();
    for t in topics {
        if seen.contains(&t.entity) {
            continue;
        }
        seen.push(t.entity.clone());
        let rels = candidates
            .get(&t.entity)
            .map(|cands| {
                cands
                    .iter()
                    .map(|(r, d)| {
                        let d = match d {
                            Direction::Outgoing => "out",
                            Direction::Incoming => "in",
                        };
                        format!("{r} {d}")
                    })
                    .collect::<Vec<_>>()
                    .join("; ")
            })
            .unwrap_or_default();
        lines.push(format!(
            "{} ({}): {}",
            t.entity,
            store.label(&t.entity),
            if rels.is_empty() { "(none)".to_owned() } else { rels }
        ));
    }
    block_or_none(lines)
}

fn to_selected(selections: &RelationSelections) -> BTreeMap<EntityId, Vec<SelectedRelation>> {
    selections
        .iter()
        .map(|(e, rels)| {
            (
                e.clone(),
                rels.iter()
                    .map(|(relation, direction)| SelectedRelation {
                        relation: relation.clone(),
                        direction: *direction,
                    })
                    .collect(),
            )
        })
        .collect()
}
