//! Parsers for the line grammars the templates instruct the model to emit.
//!
//! All parsers tolerate surrounding prose: they scan every line and pick out
//! the ones matching the expected shape, so a chatty model degrades into
//! warnings rather than failures.

use std::collections::BTreeMap;

use crate::kg::Direction;

/// Plain list responses (entity mentions, kept ids): one item per line,
/// leading bullets and enumeration markers stripped.
pub fn parse_items(response: &str) -> Vec<String> {
    response
        .lines()
        .map(strip_bullet)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect()
}

fn strip_bullet(line: &str) -> &str {
    let l = line.trim();
    let l = l.strip_prefix("- ").or_else(|| l.strip_prefix("* ")).unwrap_or(l);
    // "1. item" / "2) item"
    let digits = l.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        let rest = &l[digits..];
        if let Some(r) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            return r.trim();
        }
    }
    l.trim()
}

/// `CLUE[<id>]: <text>` lines, keyed by the raw id token.
pub fn parse_clue_lines(response: &str) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for line in response.lines() {
        if let Some((id, rest)) = parse_tagged(line, "CLUE[") {
            out.insert(id, rest);
        }
    }
    out
}

/// One `REL[<id>]: <relation> <in|out>` selection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationChoice {
    pub entity: String,
    pub relation: String,
    pub direction: Option<Direction>,
}

/// `REL[<id>]: <relation> [direction]` lines, in response order.
pub fn parse_relation_lines(response: &str) -> Vec<RelationChoice> {
    let mut out = Vec::new();
    for line in response.lines() {
        let Some((entity, rest)) = parse_tagged(line, "REL[") else {
            continue;
        };
        let mut tokens = rest.split_whitespace();
        let Some(relation) = tokens.next() else {
            continue;
        };
        let direction = tokens.next().and_then(parse_direction);
        out.push(RelationChoice {
            entity,
            relation: relation.to_owned(),
            direction,
        });
    }
    out
}

fn parse_direction(token: &str) -> Option<Direction> {
    match token.to_ascii_lowercase().as_str() {
        "out" | "outgoing" => Some(Direction::Outgoing),
        "in" | "incoming" => Some(Direction::Incoming),
        _ => None,
    }
}

fn parse_tagged(line: &str, tag: &str) -> Option<(String, String)> {
    let l = line.trim();
    let after = l.strip_prefix(tag)?;
    let close = after.find(']')?;
    let id = after[..close].trim();
    let rest = after[close + 1..].trim().strip_prefix(':')?.trim();
    if id.is_empty() {
        return None;
    }
    Some((id.to_owned(), rest.to_owned()))
}

/// The examine-and-reason response grammar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParsedVerdict {
    Answer(String),
    Continue(BTreeMap<String, String>),
    Unparseable,
}

/// Scan for the first `ANSWER:` or `CONTINUE` marker line; a CONTINUE
/// verdict collects every `CLUE[...]` line in the response.
pub fn parse_verdict(response: &str) -> ParsedVerdict {
    for line in response.lines() {
        let l = line.trim();
        if let Some(answer) = l.strip_prefix("ANSWER:") {
            return ParsedVerdict::Answer(answer.trim().to_owned());
        }
        if l == "CONTINUE" || l.starts_with("CONTINUE ") {
            return ParsedVerdict::Continue(parse_clue_lines(response));
        }
    }
    ParsedVerdict::Unparseable
}
