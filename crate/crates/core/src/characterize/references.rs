//! Reference units: existing entities a function relies on but that are
//! not part of its own graph (macros, helpers, records, aliases).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::graph::ReferenceGraph;
use crate::index::{
    identifier_uses, indexed_file_text, lookup_symbol, span_text, Span, SymbolEntry, SymbolIndex,
    SymbolKind,
};
use crate::lexer::{self, matching_close};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    Macro,
    Function,
    ClassOrStruct,
    TypeAlias,
}

impl ReferenceKind {
    pub fn of(kind: SymbolKind) -> Option<Self> {
        match kind {
            SymbolKind::Macro => Some(ReferenceKind::Macro),
            SymbolKind::Function => Some(ReferenceKind::Function),
            SymbolKind::StructOrClass => Some(ReferenceKind::ClassOrStruct),
            SymbolKind::TypeAlias => Some(ReferenceKind::TypeAlias),
            SymbolKind::RegistrationEntry => None,
        }
    }

    fn symbol_kind(self) -> SymbolKind {
        match self {
            ReferenceKind::Macro => SymbolKind::Macro,
            ReferenceKind::Function => SymbolKind::Function,
            ReferenceKind::ClassOrStruct => SymbolKind::StructOrClass,
            ReferenceKind::TypeAlias => SymbolKind::TypeAlias,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceUnit {
    pub name: String,
    pub kind: ReferenceKind,
    pub file: String,
    pub span: Span,
    pub pruned_content: String,
    pub full_content_available: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneRule {
    KeepFull,
    /// Leading comment plus the signature, terminated by `;`.
    SignatureOnly,
    /// Member declarations with method bodies removed.
    DeclarationsOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneRules {
    pub macros: PruneRule,
    pub functions: PruneRule,
    pub records: PruneRule,
    pub aliases: PruneRule,
}

impl Default for PruneRules {
    fn default() -> Self {
        PruneRules {
            macros: PruneRule::KeepFull,
            functions: PruneRule::SignatureOnly,
            records: PruneRule::DeclarationsOnly,
            aliases: PruneRule::KeepFull,
        }
    }
}

impl PruneRules {
    pub fn rule_for(&self, kind: ReferenceKind) -> PruneRule {
        match kind {
            ReferenceKind::Macro => self.macros,
            ReferenceKind::Function => self.functions,
            ReferenceKind::ClassOrStruct => self.records,
            ReferenceKind::TypeAlias => self.aliases,
        }
    }
}

/// Comment lines directly above `start` (1-based), joined.
pub fn leading_comment(text: &str, start: usize) -> String {
    let lines: Vec<&str> = text.lines().collect();
    let mut first = start.saturating_sub(1);
    while first > 0 {
        let l = lines[first - 1].trim_start();
        if l.starts_with("//") || l.starts_with("/*") || l.starts_with('*') {
            first -= 1;
        } else {
            break;
        }
    }
    lines[first..start.saturating_sub(1)].join("\n")
}

/// Leading comment and the entity's own lines, as one text.
pub fn full_content(file_text: &str, entry: &SymbolEntry) -> Option<String> {
    let body = span_text(file_text, entry)?;
    let comment = leading_comment(file_text, entry.span.start);
    Some(if comment.is_empty() {
        body
    } else {
        format!("{comment}\n{body}")
    })
}

fn split_comment(full: &str) -> (String, String) {
    let mut comment = Vec::new();
    let mut lines = full.lines().peekable();
    while let Some(l) = lines.peek() {
        let t = l.trim_start();
        if t.starts_with("//") || t.starts_with("/*") || t.starts_with('*') {
            comment.push(*l);
            lines.next();
        } else {
            break;
        }
    }
    (comment.join("\n"), lines.collect::<Vec<_>>().join("\n"))
}

fn signature_only(code: &str) -> String {
    let toks = lexer::tokens(code);
    match toks.iter().find(|t| t.is_punct("{")) {
        Some(open) => format!("{};", code[..open.start].trim_end()),
        None => code.trim_end().to_string(),
    }
}

/// Removes member function bodies from a record definition.
pub fn strip_method_bodies(code: &str) -> String {
    let toks = lexer::tokens(code);
    let Some(open) = toks.iter().position(|t| t.is_punct("{")) else {
        return code.to_string();
    };
    let end = matching_close(&toks, open).unwrap_or(toks.len() - 1);
    let mut cuts: Vec<(usize, usize)> = Vec::new();
    let mut depth = 0i32;
    let mut i = open + 1;
    while i < end {
        let t = &toks[i];
        if t.is_punct("{") && depth == 0 {
            let mut p = i - 1;
            while p > open
                && toks[p].is_ident()
                && matches!(
                    toks[p].text.as_str(),
                    "const" | "override" | "noexcept" | "final"
                )
            {
                p -= 1;
            }
            if toks[p].is_punct(")") {
                let close = matching_close(&toks, i).unwrap_or(end - 1);
                let mut cut_end = toks[close].end;
                if toks.get(close + 1).is_some_and(|n| n.is_punct(";")) {
                    cut_end = toks[close + 1].end;
                }
                cuts.push((t.start, cut_end));
                i = close + 1;
                continue;
            }
        }
        if t.is_punct("{") || t.is_punct("(") {
            depth += 1;
        } else if t.is_punct("}") || t.is_punct(")") {
            depth -= 1;
        }
        i += 1;
    }
    let mut out = String::new();
    let mut last = 0;
    for (a, b) in cuts {
        out.push_str(code[last..a].trim_end());
        out.push(';');
        last = b;
    }
    out.push_str(&code[last..]);
    out
}

/// Applies the type-specific rule to a reference's full text.
pub fn prune_reference(r: &ReferenceUnit, full_text: &str, rules: &PruneRules) -> ReferenceUnit {
    let (comment, code) = split_comment(full_text);
    let pruned = match rules.rule_for(r.kind) {
        PruneRule::KeepFull => full_text.to_string(),
        PruneRule::SignatureOnly => {
            let sig = signature_only(&code);
            if comment.is_empty() {
                sig
            } else {
                format!("{comment}\n{sig}")
            }
        }
        PruneRule::DeclarationsOnly => {
            let decls = strip_method_bodies(&code);
            if comment.is_empty() {
                decls
            } else {
                format!("{comment}\n{decls}")
            }
        }
    };
    let mut out = r.clone();
    out.pruned_content = if pruned.trim().is_empty() {
        r.name.clone()
    } else {
        pruned
    };
    out
}

fn unit_for(entry: &SymbolEntry, file_text: &str, rules: &PruneRules) -> Option<ReferenceUnit> {
    let kind = ReferenceKind::of(entry.kind)?;
    let full = full_content(file_text, entry)?;
    let r = ReferenceUnit {
        name: entry.name.clone(),
        kind,
        file: entry.file.clone(),
        span: entry.span,
        pruned_content: String::new(),
        full_content_available: true,
    };
    Some(prune_reference(&r, &full, rules))
}

/// References of one function: resolved units plus unresolved call names.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionReferences {
    pub function: String,
    pub arity: usize,
    #[serde(default)]
    pub category: String,
    pub references: Vec<ReferenceUnit>,
    pub unresolved: Vec<String>,
}

fn node_entry<'a>(
    index: &'a SymbolIndex,
    name: &str,
    file: &str,
    start: usize,
) -> Option<&'a SymbolEntry> {
    lookup_symbol(index, name)
        .iter()
        .find(|e| e.file == file && e.span.start == start)
}

/// Every out-of-graph entity referenced by a node, deduplicated by name and
/// pruned per kind, plus the call-like names that resolve nowhere.
pub fn extract_references(
    graph: &ReferenceGraph,
    index: &SymbolIndex,
    rules: &PruneRules,
) -> Result<(Vec<ReferenceUnit>, Vec<String>)> {
    let node_names: BTreeSet<&str> = graph.nodes.iter().map(|n| n.name.as_str()).collect();
    let mut refs: BTreeMap<String, ReferenceUnit> = BTreeMap::new();
    let mut unresolved = BTreeSet::new();
    let mut texts: BTreeMap<String, String> = BTreeMap::new();
    for node in &graph.nodes {
        let Some(entry) = node_entry(index, &node.name, &node.file, node.span.start) else {
            return Err(Error::StaleIndex(format!(
                "graph node {} is not indexed",
                node.key()
            )));
        };
        let uses = identifier_uses(index, entry)?;
        unresolved.extend(uses.unresolved_calls);
        for (name, _) in uses.resolved {
            if node_names.contains(name.as_str()) || refs.contains_key(&name) {
                continue;
            }
            let Some(target) = lookup_symbol(index, &name)
                .iter()
                .find(|e| e.kind != SymbolKind::RegistrationEntry)
            else {
                continue;
            };
            if !texts.contains_key(&target.file) {
                texts.insert(target.file.clone(), indexed_file_text(index, &target.file)?);
            }
            if let Some(r) = unit_for(target, &texts[&target.file], rules) {
                refs.insert(name, r);
            }
        }
    }
    Ok((
        refs.into_values().collect(),
        unresolved.into_iter().collect(),
    ))
}

/// Full text of a reference, read through `file_text` (current disk or a
/// session snapshot).
pub fn expand_reference_with(
    r: &ReferenceUnit,
    index: &SymbolIndex,
    file_text: &dyn Fn(&str) -> Result<String>,
) -> Result<String> {
    if !r.full_content_available {
        return Err(Error::Precondition(format!(
            "{} has no full content",
            r.name
        )));
    }
    let entry = lookup_symbol(index, &r.name)
        .iter()
        .filter(|e| e.kind == r.kind.symbol_kind())
        .find(|e| e.file == r.file)
        .or_else(|| {
            lookup_symbol(index, &r.name)
                .iter()
                .find(|e| e.kind == r.kind.symbol_kind())
        })
        .ok_or_else(|| Error::StaleReference(format!("{} is no longer in the index", r.name)))?;
    let text =
        file_text(&entry.file).map_err(|e| Error::StaleReference(format!("{}: {e}", r.name)))?;
    full_content(&text, entry)
        .ok_or_else(|| Error::StaleReference(format!("{} span out of range", r.name)))
}

/// Full text of a reference from the indexed repository.
pub fn expand_reference(r: &ReferenceUnit, index: &SymbolIndex) -> Result<String> {
    expand_reference_with(r, index, &|file| indexed_file_text(index, file))
}
