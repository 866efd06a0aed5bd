//! Anchored code edits with all-or-nothing application.
//!
//! Every touched file is rewritten in full. Before the first write the
//! original bytes of each file are captured in a [`RollbackToken`], so a
//! failure half-way through (or a later failed validation) can restore the
//! tree exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::SymbolIndex;
use crate::profile::{AnchorRule, DbProfile};
use crate::util::{is_contained_relative, sha256_hex};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditMode {
    InsertBefore,
    InsertAfter,
    CreateFile,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Anchor {
    /// 1-based line in the file as it was before any edit of the batch.
    Line { line: usize },
    /// Id of a profile anchor rule, resolved inside the edit's own file.
    Rule { rule: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeEdit {
    pub file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<Anchor>,
    pub mode: EditMode,
    pub text: String,
}

impl CodeEdit {
    pub fn create(file: impl Into<String>, text: impl Into<String>) -> Self {
        CodeEdit {
            file: file.into(),
            anchor: None,
            mode: EditMode::CreateFile,
            text: text.into(),
        }
    }

    pub fn at_line(
        file: impl Into<String>,
        line: usize,
        mode: EditMode,
        text: impl Into<String>,
    ) -> Self {
        CodeEdit {
            file: file.into(),
            anchor: Some(Anchor::Line { line }),
            mode,
            text: text.into(),
        }
    }

    pub fn at_rule(
        file: impl Into<String>,
        rule: impl Into<String>,
        mode: EditMode,
        text: impl Into<String>,
    ) -> Self {
        CodeEdit {
            file: file.into(),
            anchor: Some(Anchor::Rule { rule: rule.into() }),
            mode,
            text: text.into(),
        }
    }
}

/// Restores the exact pre-edit bytes of every file touched by one
/// [`apply_edits`] call.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RollbackToken {
    pub root: PathBuf,
    /// Original content per file; `None` for files the batch created.
    pub originals: BTreeMap<String, Option<Vec<u8>>>,
    /// Directories created for new files, outermost first.
    pub created_dirs: Vec<PathBuf>,
}

impl RollbackToken {
    pub fn is_noop(&self) -> bool {
        self.originals.is_empty() && self.created_dirs.is_empty()
    }

    pub fn touched_files(&self) -> Vec<String> {
        self.originals.keys().cloned().collect()
    }
}

/// First line (1-based) of `text` matching `re`.
pub fn locate_in_file(text: &str, re: &Regex) -> Option<usize> {
    text.lines().position(|l| re.is_match(l)).map(|i| i + 1)
}

/// First `(file, line)` matching the rule, scanning globs in rule order and
/// indexed files in path order within each glob.
pub fn locate_insertion_point(index: &SymbolIndex, rule: &AnchorRule) -> Result<(String, usize)> {
    let re = rule.anchor_regex()?;
    for glob in &rule.file_globs {
        let matcher = globset::Glob::new(glob)
            .map_err(|e| Error::Config(format!("bad glob `{glob}`: {e}")))?
            .compile_matcher();
        for (file, digest) in &index.file_digests {
            if !matcher.is_match(file) {
                continue;
            }
            let path = index.root.join(file);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::StaleIndex(format!("{file} unreadable: {e}")))?;
            if sha256_hex(text.as_bytes()) != *digest {
                return Err(Error::StaleIndex(format!("{file} changed since scan")));
            }
            if let Some(line) = locate_in_file(&text, &re) {
                return Ok((file.clone(), line));
            }
        }
    }
    Err(Error::AnchorNotFound(rule.id.clone()))
}

fn with_newline(text: &str) -> String {
    if text.ends_with('\n') {
        text.to_string()
    } else {
        format!("{text}\n")
    }
}

struct Planned {
    rel: String,
    original: Option<Vec<u8>>,
    new_bytes: Vec<u8>,
}

fn check_collisions(resolved: &[(usize, &CodeEdit, usize)]) -> Result<()> {
    let mut modes: BTreeMap<(&str, usize), EditMode> = BTreeMap::new();
    for (_, e, line) in resolved {
        if let Some(prev) = modes.insert((e.file.as_str(), *line), e.mode) {
            if prev != e.mode {
                return Err(Error::EditCollision(format!(
                    "{}:{line} targeted with both {prev:?} and {:?}",
                    e.file, e.mode
                )));
            }
        }
    }
    Ok(())
}

/// Applies `edits` under `root` atomically.
pub fn apply_edits(root: &Path, profile: &DbProfile, edits: &[CodeEdit]) -> Result<RollbackToken> {
    let mut token = RollbackToken {
        root: root.to_path_buf(),
        ..Default::default()
    };
    if edits.is_empty() {
        return Ok(token);
    }

    // Validate and resolve everything before the first write.
    let mut creates: BTreeMap<&str, &CodeEdit> = BTreeMap::new();
    let mut inserts: Vec<(usize, &CodeEdit, usize)> = Vec::new();
    let mut texts: BTreeMap<&str, String> = BTreeMap::new();
    for (i, e) in edits.iter().enumerate() {
        if !is_contained_relative(&e.file) {
            return Err(Error::EditCollision(format!(
                "path `{}` escapes the root",
                e.file
            )));
        }
        let path = root.join(&e.file);
        match e.mode {
            EditMode::CreateFile => {
                if path.exists() {
                    return Err(Error::EditCollision(format!(
                        "create_file targets existing path `{}`",
                        e.file
                    )));
                }
                if creates.insert(&e.file, e).is_some() {
                    return Err(Error::EditCollision(format!("`{}` created twice", e.file)));
                }
            }
            EditMode::InsertBefore | EditMode::InsertAfter => {
                if !texts.contains_key(e.file.as_str()) {
                    let text =
                        std::fs::read_to_string(&path).map_err(|err| Error::io(&path, err))?;
                    texts.insert(&e.file, text);
                }
                let text = &texts[e.file.as_str()];
                let line_count = text.lines().count();
                let line = match &e.anchor {
                    Some(Anchor::Line { line }) => *line,
                    Some(Anchor::Rule { rule }) => {
                        let r = profile.rule(rule).ok_or_else(|| {
                            Error::Config(format!("unknown anchor rule `{rule}`"))
                        })?;
                        locate_in_file(text, &r.anchor_regex()?)
                            .ok_or_else(|| Error::AnchorNotFound(rule.clone()))?
                    }
                    None => {
                        return Err(Error::EditCollision(format!(
                            "insert into `{}` has no anchor",
                            e.file
                        )))
                    }
                };
                let max = match e.mode {
                    EditMode::InsertBefore => line_count + 1,
                    _ => line_count,
                };
                if line == 0 || line > max {
                    return Err(Error::EditCollision(format!(
                        "{}:{line} is outside the file ({line_count} lines)",
                        e.file
                    )));
                }
                inserts.push((i, e, line));
            }
        }
    }
    for f in creates.keys() {
        if texts.contains_key(f) {
            return Err(Error::EditCollision(format!(
                "`{f}` is both created and edited"
            )));
        }
    }
    check_collisions(&inserts)?;

    let mut planned = Vec::new();
    for (rel, original) in &texts {
        let mut before: BTreeMap<usize, String> = BTreeMap::new();
        let mut after: BTreeMap<usize, String> = BTreeMap::new();
        for (_, e, line) in inserts.iter().filter(|(_, e, _)| e.file == *rel) {
            let slot = if e.mode == EditMode::InsertBefore {
                &mut before
            } else {
                &mut after
            };
            slot.entry(*line)
                .or_default()
                .push_str(&with_newline(&e.text));
        }
        let mut out = String::with_capacity(original.len() + 256);
        let lines: Vec<&str> = original.split_inclusive('\n').collect();
        for (idx, l) in lines.iter().enumerate() {
            let n = idx + 1;
            if let Some(t) = before.get(&n) {
                out.push_str(t);
            }
            out.push_str(l);
            if let Some(t) = after.get(&n) {
                if !l.ends_with('\n') {
                    out.push('\n');
                }
                out.push_str(t);
            }
        }
        if let Some(t) = before.get(&(lines.len() + 1)) {
            if !out.is_empty() && !out.ends_with('\n') {
                out.push('\n');
            }
            out.push_str(t);
        }
        planned.push(Planned {
            rel: rel.to_string(),
            original: Some(original.as_bytes().to_vec()),
            new_bytes: out.into_bytes(),
        });
    }
    for (rel, e) in &creates {
        planned.push(Planned {
            rel: rel.to_string(),
            original: None,
            new_bytes: with_newline(&e.text).into_bytes(),
        });
    }

    for p in &planned {
        token.originals.insert(p.rel.clone(), p.original.clone());
    }
    let mut made_dirs = BTreeSet::new();
    for p in &planned {
        let path = root.join(&p.rel);
        if p.original.is_none() {
            if let Err(e) = create_parents(root, &path, &mut made_dirs, &mut token.created_dirs) {
                let _ = rollback(&token);
                return Err(e);
            }
        }
        if let Err(e) = std::fs::write(&path, &p.new_bytes) {
            let _ = rollback(&token);
            return Err(Error::io(path, e));
        }
    }
    Ok(token)
}

fn create_parents(
    root: &Path,
    path: &Path,
    made: &mut BTreeSet<PathBuf>,
    created: &mut Vec<PathBuf>,
) -> Result<()> {
    let Some(parent) = path.parent() else {
        return Ok(());
    };
    let mut missing = Vec::new();
    let mut cur = parent;
    while cur.starts_with(root) && cur != root && !cur.exists() {
        missing.push(cur.to_path_buf());
        match cur.parent() {
            Some(p) => cur = p,
            None => break,
        }
    }
    for dir in missing.into_iter().rev() {
        std::fs::create_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        if made.insert(dir.clone()) {
            created.push(dir);
        }
    }
    Ok(())
}

/// Restores every file recorded in `token`, removing created files and
/// directories.
pub fn rollback(token: &RollbackToken) -> Result<()> {
    let mut first_err = None;
    for (rel, original) in &token.originals {
        let path = token.root.join(rel);
        let res = match original {
            Some(bytes) => std::fs::write(&path, bytes),
            None => match std::fs::remove_file(&path) {
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
                other => other,
            },
        };
        if let Err(e) = res {
            first_err.get_or_insert(Error::io(path, e));
        }
    }
    for dir in token.created_dirs.iter().rev() {
        // Only empty directories are removed; anything else was put there
        // by someone other than this batch.
        let _ = std::fs::remove_dir(dir);
    }
    first_err.map_or(Ok(()), Err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::tests::profile;
    use crate::util::tree_digest;

    fn setup() -> tempfile::TempDir {
        let d = tempfile::tempdir().unwrap();
        std::fs::write(d.path().join("reg.c"), "a\nb\n{ 0, 0 }\n};\n").unwrap();
        d
    }

    #[test]
    fn empty_batch_is_noop() {
        let d = setup();
        let before = tree_digest(d.path()).unwrap();
        let tok = apply_edits(d.path(), &profile(), &[]).unwrap();
        assert!(tok.is_noop());
        rollback(&tok).unwrap();
        assert_eq!(tree_digest(d.path()).unwrap(), before);
    }

    #[test]
    fn rule_anchor_and_same_line_order() {
        let d = setup();
        let edits = vec![
            CodeEdit::at_rule("reg.c", "close", EditMode::InsertBefore, "x"),
            CodeEdit::at_line("reg.c", 3, EditMode::InsertBefore, "y"),
            CodeEdit::at_line("reg.c", 1, EditMode::InsertAfter, "z"),
        ];
        let before = tree_digest(d.path()).unwrap();
        let tok = apply_edits(d.path(), &profile(), &edits).unwrap();
        let text = std::fs::read_to_string(d.path().join("reg.c")).unwrap();
        assert_eq!(text, "a\nz\nb\nx\ny\n{ 0, 0 }\n};\n");
        rollback(&tok).unwrap();
        assert_eq!(tree_digest(d.path()).unwrap(), before);
    }

    #[test]
    fn conflicting_modes_rejected_before_write() {
        let d = setup();
        let before = tree_digest(d.path()).unwrap();
        let edits = vec![
            CodeEdit::create("new/x.c", "int x;"),
            CodeEdit::at_line("reg.c", 2, EditMode::InsertBefore, "p"),
            CodeEdit::at_line("reg.c", 2, EditMode::InsertAfter, "q"),
        ];
        let err = apply_edits(d.path(), &profile(), &edits).unwrap_err();
        assert!(matches!(err, Error::EditCollision(_)));
        assert_eq!(tree_digest(d.path()).unwrap(), before);
    }

    #[test]
    fn create_file_makes_and_removes_directories() {
        let d = setup();
        let before = tree_digest(d.path()).unwrap();
        let tok = apply_edits(
            d.path(),
            &profile(),
            &[CodeEdit::create("a/b/c.c", "int c;")],
        )
        .unwrap();
        assert!(d.path().join("a/b/c.c").is_file());
        rollback(&tok).unwrap();
        assert!(!d.path().join("a").exists());
        assert_eq!(tree_digest(d.path()).unwrap(), before);
    }

    #[test]
    fn invalid_targets_rejected() {
        let d = setup();
        let p = profile();
        assert!(apply_edits(d.path(), &p, &[CodeEdit::create("reg.c", "x")]).is_err());
        assert!(apply_edits(
            d.path(),
            &p,
            &[CodeEdit::at_line("nope.c", 1, EditMode::InsertAfter, "x")]
        )
        .is_err());
        assert!(apply_edits(d.path(), &p, &[CodeEdit::create("../out.c", "x")]).is_err());
        assert!(matches!(
            apply_edits(
                d.path(),
                &p,
                &[CodeEdit::at_line("reg.c", 9, EditMode::InsertAfter, "x")]
            ),
            Err(Error::EditCollision(_))
        ));
    }

    #[test]
    fn append_after_last_line_without_newline() {
        let d = tempfile::tempdir().unwrap();
        std::fs::write(d.path().join("a.c"), "x").unwrap();
        apply_edits(
            d.path(),
            &profile(),
            &[CodeEdit::at_line("a.c", 1, EditMode::InsertAfter, "y")],
        )
        .unwrap();
        assert_eq!(
            std::fs::read_to_string(d.path().join("a.c")).unwrap(),
            "x\ny\n"
        );
    }

    #[test]
    fn locate_first_match_and_missing() {
        let d = setup();
        std::fs::write(d.path().join("other.c"), "{ 0, 0 }\n").unwrap();
        let p = profile();
        let idx = crate::index::scan_repo(d.path(), &p).unwrap();
        let rule = p.rule("close").unwrap();
        assert_eq!(
            locate_insertion_point(&idx, rule).unwrap(),
            ("reg.c".to_string(), 3)
        );
        let mut miss = rule.clone();
        miss.anchor_pattern = "^NEVER".into();
        assert!(
            matches!(locate_insertion_point(&idx, &miss), Err(Error::AnchorNotFound(id)) if id == "close")
        );
    }
}
