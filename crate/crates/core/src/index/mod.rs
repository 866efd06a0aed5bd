//! Queryable symbol index over a target database repository.
//!
//! The index is produced by a lightweight lexical pass (see [`scan`]); it
//! records definitions (functions, macros, records, type aliases) and the
//! registration entries recognised by the profile's anchor rules. Lookups
//! are exact-name only.

pub(crate) mod edges;
mod edit;
pub(crate) mod scan;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::profile::DbProfile;
use crate::util::{read_to_string, sha256_hex};
use crate::{Error, Result, SCHEMA_VERSION};

pub use edges::{
    entry_body, entry_source, extract_edges, extract_typed_edges, identifier_uses,
    indexed_file_text, span_text, EdgeKind, IdentifierUses,
};
pub use edit::{
    apply_edits, locate_in_file, locate_insertion_point, rollback, Anchor, CodeEdit, EditMode,
    RollbackToken,
};
pub use scan::extract_symbols;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbolKind {
    Function,
    Macro,
    StructOrClass,
    RegistrationEntry,
    TypeAlias,
}

/// Inclusive 1-based line range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Span { start, end }
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolEntry {
    pub name: String,
    pub kind: SymbolKind,
    /// Repository-relative path with `/` separators.
    pub file: String,
    pub span: Span,
    pub signature_text: String,
    /// Declared arity for registration entries, when the rule captures it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arity: Option<i64>,
}

impl SymbolEntry {
    /// Stable identity used for graph nodes.
    pub fn key(&self) -> String {
        format!("{}:{}:{}", self.file, self.span.start, self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolIndex {
    pub version: u32,
    pub root: PathBuf,
    pub entries: BTreeMap<String, Vec<SymbolEntry>>,
    pub file_digests: BTreeMap<String, String>,
}

impl SymbolIndex {
    pub fn empty(root: impl Into<PathBuf>) -> Self {
        SymbolIndex {
            version: SCHEMA_VERSION,
            root: root.into(),
            entries: BTreeMap::new(),
            file_digests: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &SymbolEntry> {
        self.entries.values().flatten()
    }

    pub fn resolves(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn to_json(&self) -> Result<String> {
        crate::util::to_json_pretty(self)
    }

    pub fn from_json(src: &str) -> Result<Self> {
        Ok(serde_json::from_str(src)?)
    }

    fn insert(&mut self, entry: SymbolEntry) {
        self.entries
            .entry(entry.name.clone())
            .or_default()
            .push(entry);
    }

    fn sort(&mut self) {
        for list in self.entries.values_mut() {
            list.sort_by(|a, b| {
                (&a.file, a.span.start, a.kind).cmp(&(&b.file, b.span.start, b.kind))
            });
        }
    }
}

/// Repository-relative source files matching the profile, sorted.
pub fn list_source_files(root: &Path, profile: &DbProfile) -> Result<Vec<String>> {
    let set = profile.source_set()?;
    list_files_matching(root, &set)
}

pub(crate) fn list_files_matching(root: &Path, set: &globset::GlobSet) -> Result<Vec<String>> {
    let meta = std::fs::metadata(root).map_err(|e| Error::io(root, e))?;
    if !meta.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotADirectory, "not a directory"),
        ));
    }
    std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut files = Vec::new();
    let walker = walkdir::WalkDir::new(root)
        .follow_links(false)
        .into_iter()
        .filter_entry(|e| e.depth() == 0 || !e.file_name().to_string_lossy().starts_with('.'));
    for entry in walker {
        let entry = entry.map_err(|e| {
            let path = e
                .path()
                .map(Path::to_path_buf)
                .unwrap_or_else(|| root.to_path_buf());
            Error::io(path, std::io::Error::other(e.to_string()))
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(root)
            .expect("walkdir yields paths under root");
        let rel = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        if set.is_match(&rel) {
            files.push(rel);
        }
    }
    files.sort();
    Ok(files)
}

/// Scans `root` with the default execution mode.
pub fn scan_repo(root: &Path, profile: &DbProfile) -> Result<SymbolIndex> {
    scan_repo_with(root, profile, Exec::default())
}

pub fn scan_repo_with(root: &Path, profile: &DbProfile, exec: Exec) -> Result<SymbolIndex> {
    if profile.source_globs.is_empty() {
        return Err(Error::Precondition("profile.source_globs is empty".into()));
    }
    let files = list_source_files(root, profile)?;
    if files.is_empty() {
        log::warn!(
            "no files under {} match the profile source globs",
            root.display()
        );
    }
    let rules = scan::CompiledRules::new(profile)?;
    let per_file: Vec<Result<(String, String, Vec<SymbolEntry>)>> = exec.map(&files, |rel| {
        let text = read_to_string(&root.join(rel))?;
        let digest = sha256_hex(text.as_bytes());
        let syms = scan::extract_with_rules(rel, &text, &rules);
        Ok((rel.clone(), digest, syms))
    });
    let mut index = SymbolIndex::empty(root);
    for item in per_file {
        let (rel, digest, syms) = item?;
        index.file_digests.insert(rel, digest);
        for s in syms {
            index.insert(s);
        }
    }
    index.sort();
    Ok(index)
}

/// Exact-name matches ordered by (file, line); empty when absent.
pub fn lookup_symbol<'a>(index: &'a SymbolIndex, name: &str) -> &'a [SymbolEntry] {
    index.entries.get(name).map_or(&[], Vec::as_slice)
}
