//! Reference-edge extraction between indexed entities.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{lookup_symbol, SymbolEntry, SymbolIndex, SymbolKind};
use crate::lexer::{self, Token, TokenKind};
use crate::util::sha256_hex;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Invocation,
    Inheritance,
}

/// Current text of an indexed file, checked against the indexed digest.
pub fn indexed_file_text(index: &SymbolIndex, file: &str) -> Result<String> {
    let path = index.root.join(file);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::StaleIndex(format!("{file} unreadable: {e}")))?;
    if let Some(digest) = index.file_digests.get(file) {
        if *digest != sha256_hex(text.as_bytes()) {
            return Err(Error::StaleIndex(format!("{file} changed since scan")));
        }
    }
    Ok(text)
}

/// Source lines covered by `entry`, checked against the indexed digest.
pub fn entry_source(index: &SymbolIndex, entry: &SymbolEntry) -> Result<String> {
    let text = indexed_file_text(index, &entry.file)?;
    span_text(&text, entry).ok_or_else(|| {
        Error::StaleIndex(format!(
            "{} has {} lines, span ends at {}",
            entry.file,
            text.lines().count(),
            entry.span.end
        ))
    })
}

/// The lines of `entry` within `text`, if the span fits.
pub fn span_text(text: &str, entry: &SymbolEntry) -> Option<String> {
    let lines: Vec<&str> = text.lines().collect();
    if entry.span.start == 0 || entry.span.end > lines.len() {
        return None;
    }
    Some(lines[entry.span.start - 1..entry.span.end].join("\n"))
}

/// The part of an entity that can reference other entities: a function's
/// body, a macro's replacement list, or the whole text otherwise.
pub fn entry_body(kind: SymbolKind, source: &str) -> (String, Vec<String>) {
    match kind {
        SymbolKind::Function => {
            let toks = lexer::tokens(source);
            match toks.iter().find(|t| t.is_punct("{")) {
                Some(t) => (source[t.start..].to_string(), vec![]),
                None => (String::new(), vec![]),
            }
        }
        SymbolKind::Macro => split_macro(source),
        _ => (source.to_string(), vec![]),
    }
}

fn split_macro(source: &str) -> (String, Vec<String>) {
    let joined = source.replace("\\\r\n", " ").replace("\\\n", " ");
    let rest = joined.trim_start().trim_start_matches('#').trim_start();
    let Some(rest) = rest.strip_prefix("define") else {
        return (joined.clone(), vec![]);
    };
    let rest = rest.trim_start();
    let name_len = rest
        .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .unwrap_or(rest.len());
    let after = &rest[name_len..];
    if let Some(params) = after.strip_prefix('(') {
        if let Some(close) = params.find(')') {
            let names = params[..close]
                .split(',')
                .map(|p| p.trim().to_string())
                .filter(|p| !p.is_empty())
                .collect();
            return (params[close + 1..].to_string(), names);
        }
    }
    (after.to_string(), vec![])
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdentifierUses {
    /// Names resolving in the index, sorted, without the entity itself.
    pub resolved: Vec<(String, EdgeKind)>,
    /// Call-like identifiers that do not resolve and are not local.
    pub unresolved_calls: Vec<String>,
}

fn is_member_access(toks: &[Token], i: usize) -> bool {
    i > 0 && (toks[i - 1].is_punct(".") || toks[i - 1].is_punct("->"))
}

/// Names declared in a token run: parameters, `T x`, `T *x`, and further
/// declarators after a comma (`int i, n = 0;`).
pub(crate) fn declared_names(toks: &[Token]) -> BTreeSet<String> {
    (0..toks.len())
        .filter(|&i| is_declaration_site(toks, i))
        .map(|i| toks[i].text.clone())
        .collect()
}

pub(crate) fn is_declaration_site(toks: &[Token], i: usize) -> bool {
    let t = &toks[i];
    if i == 0 || !t.is_ident() || lexer::is_keyword(&t.text) {
        return false;
    }
    let next_ok = toks.get(i + 1).is_none_or(|n| {
        n.kind == TokenKind::Punct && matches!(n.text.as_str(), "=" | ";" | "," | ")" | "[")
    });
    if !next_ok {
        return false;
    }
    let mut j = i - 1;
    while j > 0 && toks[j].is_punct("*") {
        j -= 1;
    }
    let p = &toks[j];
    if p.is_ident() {
        return !matches!(
            p.text.as_str(),
            "return" | "case" | "goto" | "sizeof" | "else" | "do"
        );
    }
    if p.is_punct(",") {
        // Walk back to the start of the statement at this nesting level.
        let mut depth = 0i32;
        let mut first = 0;
        let mut k = j;
        while k > 0 {
            k -= 1;
            let q = &toks[k];
            if q.is_punct(")") || q.is_punct("]") {
                depth += 1;
            } else if q.is_punct("(") || q.is_punct("[") {
                if depth == 0 {
                    // Parameter lists are handled by the identifier rule.
                    return false;
                }
                depth -= 1;
            } else if depth == 0 && (q.is_punct(";") || q.is_punct("{") || q.is_punct("}")) {
                first = k + 1;
                break;
            }
        }
        let head = &toks[first..j];
        return head.len() >= 2
            && head[0].is_ident()
            && !matches!(
                head[0].text.as_str(),
                "return" | "case" | "goto" | "if" | "while" | "for"
            )
            && (head[1].is_ident() || head[1].is_punct("*"));
    }
    false
}

pub fn identifier_uses(index: &SymbolIndex, entry: &SymbolEntry) -> Result<IdentifierUses> {
    let source = entry_source(index, entry)?;
    let (body, params) = entry_body(entry.kind, &source);
    let toks = lexer::tokens(&body);

    let mut base_names = BTreeSet::new();
    if entry.kind == SymbolKind::StructOrClass {
        let header = lexer::tokens(&source);
        if let Some(open) = header.iter().position(|t| t.is_punct("{")) {
            if let Some(colon) = header[..open].iter().position(|t| t.is_punct(":")) {
                for t in &header[colon + 1..open] {
                    if t.is_ident() {
                        base_names.insert(t.text.clone());
                    }
                }
            }
        }
    }

    let locals = declared_names(&lexer::tokens(&source));
    let mut resolved = BTreeSet::new();
    let mut unresolved = BTreeSet::new();
    for (i, t) in toks.iter().enumerate() {
        if !t.is_ident() || lexer::is_keyword(&t.text) || is_member_access(&toks, i) {
            continue;
        }
        if t.text == entry.name || params.contains(&t.text) {
            continue;
        }
        if !lookup_symbol(index, &t.text).is_empty() {
            let kind = if base_names.contains(&t.text) {
                EdgeKind::Inheritance
            } else {
                EdgeKind::Invocation
            };
            resolved.insert((t.text.clone(), kind));
        } else if toks.get(i + 1).is_some_and(|n| n.is_punct("(")) && !locals.contains(&t.text) {
            unresolved.insert(t.text.clone());
        }
    }
    // A name used both as base and elsewhere keeps the inheritance edge only.
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (name, kind) in resolved.into_iter().rev() {
        if seen.insert(name.clone()) {
            out.push((name, kind));
        }
    }
    out.sort();
    Ok(IdentifierUses {
        resolved: out,
        unresolved_calls: unresolved.into_iter().collect(),
    })
}

pub fn extract_typed_edges(
    index: &SymbolIndex,
    entry: &SymbolEntry,
) -> Result<Vec<(String, EdgeKind)>> {
    Ok(identifier_uses(index, entry)?.resolved)
}

/// Names referenced by `entry` that resolve in the index; sorted, without
/// duplicates or the entity itself.
pub fn extract_edges(index: &SymbolIndex, entry: &SymbolEntry) -> Result<Vec<String>> {
    Ok(extract_typed_edges(index, entry)?
        .into_iter()
        .map(|(n, _)| n)
        .collect())
}
