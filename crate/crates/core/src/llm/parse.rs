//! Lenient parser for the fenced `roadmap` block in model replies.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::catalog::tokenize;
use crate::component::AliComponent;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedRun {
    /// Phrases per component, in reply order.
    pub terms: BTreeMap<AliComponent, Vec<String>>,
    pub diagnostics: Vec<String>,
}

impl ParsedRun {
    pub fn term_count(&self) -> usize {
        self.terms.values().map(Vec::len).sum()
    }

    /// A run contributes terms only when it yielded at least one.
    pub fn is_ok(&self) -> bool {
        self.term_count() > 0
    }
}

fn fenced_blocks(text: &str) -> Vec<(String, Vec<&str>)> {
    let mut blocks = Vec::new();
    let mut current: Option<(String, Vec<&str>)> = None;
    for line in text.lines() {
        let t = line.trim();
        if let Some(info) = t.strip_prefix("```") {
            match current.take() {
                Some(block) => blocks.push(block),
                None => current = Some((info.trim().to_ascii_lowercase(), Vec::new())),
            }
        } else if let Some((_, lines)) = current.as_mut() {
            lines.push(line);
        }
    }
    if let Some(block) = current {
        blocks.push(block);
    }
    blocks
}

fn strip_bullet(line: &str) -> &str {
    let t = line.trim();
    for prefix in ["- ", "* ", "• ", "+ "] {
        if let Some(rest) = t.strip_prefix(prefix) {
            return rest.trim();
        }
    }
    let digits = t.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        let rest = &t[digits..];
        if let Some(r) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            return r.trim();
        }
    }
    t
}

fn clean_term(raw: &str) -> &str {
    raw.trim()
        .trim_matches(|c| c == '"' || c == '\'' || c == '`' || c == '*')
        .trim_end_matches(['.', ','])
        .trim()
}

/// Single word written entirely in capitals (e.g. `CKD`), likely an acronym.
pub fn looks_like_acronym(phrase: &str) -> bool {
    let p = phrase.trim();
    !p.contains(char::is_whitespace)
        && p.chars().filter(|c| c.is_alphabetic()).count() >= 2
        && p.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '-')
}

/// Parse one reply. Blocks labelled `roadmap` are preferred; otherwise every
/// fenced block is read. Lines are `Component: term; term` or a
/// `Component:` header followed by bulleted terms.
pub fn parse_response(text: &str) -> ParsedRun {
    let mut out = ParsedRun {
        terms: BTreeMap::new(),
        diagnostics: Vec::new(),
    };
    let blocks = fenced_blocks(text);
    let labelled: Vec<_> = blocks.iter().filter(|(info, _)| info == "roadmap").collect();
    let chosen: Vec<_> = if labelled.is_empty() {
        blocks.iter().collect()
    } else {
        labelled
    };
    if chosen.is_empty() {
        out.diagnostics.push("no fenced block found".into());
        return out;
    }
    for (_, lines) in chosen {
        let mut current: Option<AliComponent> = None;
        for (i, line) in lines.iter().enumerate() {
            let body = strip_bullet(line);
            if body.is_empty() {
                continue;
            }
            let (head, rest) = match body.split_once(':') {
                Some((h, r)) => (Some(h), r),
                None => (None, body),
            };
            let mut items = rest;
            if let Some(h) = head {
                match h.parse::<AliComponent>() {
                    Ok(c) => current = Some(c),
                    Err(_) if rest.trim().is_empty() => {
                        out.diagnostics.push(format!("line {}: unknown component header {:?}", i + 1, h.trim()));
                        current = None;
                        continue;
                    }
                    // A colon inside a term, keep the whole line.
                    Err(_) => items = body,
                }
            }
            let Some(component) = current else {
                out.diagnostics.push(format!("line {}: terms outside any component: {:?}", i + 1, body));
                continue;
            };
            for raw in items.split(';') {
                let term = clean_term(raw);
                if term.is_empty() {
                    continue;
                }
                if tokenize(term).is_empty() {
                    out.diagnostics.push(format!("line {}: term {:?} has no words", i + 1, term));
                    continue;
                }
                if looks_like_acronym(term) {
                    out.diagnostics.push(format!("acronym-like term {term:?} for {component}; flagged for adjudication"));
                }
                out.terms.entry(component).or_default().push(term.to_string());
            }
        }
    }
    if !out.is_ok() {
        out.diagnostics.push("no terms parsed".into());
    }
    out
}
