//! Function declarations from documentation pages and catalog dumps.

use std::collections::BTreeSet;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::index::list_files_matching;
use crate::profile::{build_globset, CatalogQuerySpec, DbProfile, DocExtractorRule};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeclSource {
    Documentation,
    Catalog,
}

/// SQL-level description of one native function (one overload).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionDeclaration {
    pub name: String,
    #[serde(default)]
    pub category: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub arg_types: Vec<String>,
    #[serde(default)]
    pub return_type: String,
    /// `(sql, expected output)` pairs.
    #[serde(default)]
    pub sql_examples: Vec<(String, String)>,
    #[serde(default)]
    pub sources: BTreeSet<DeclSource>,
}

impl FunctionDeclaration {
    pub fn new(name: &str, category: &str, arg_types: &[&str], return_type: &str) -> Self {
        FunctionDeclaration {
            name: name.to_string(),
            category: category.to_string(),
            description: String::new(),
            arg_types: arg_types.iter().map(|s| s.to_string()).collect(),
            return_type: return_type.to_string(),
            sql_examples: vec![],
            sources: BTreeSet::new(),
        }
    }

    pub fn arity(&self) -> usize {
        self.arg_types.len()
    }

    pub fn signature(&self) -> String {
        format!(
            "{}({}) -> {}",
            self.name,
            self.arg_types.join(", "),
            self.return_type
        )
    }

    pub fn group_key(&self) -> GroupKey {
        GroupKey::of(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::Precondition("declaration name is empty".into()));
        }
        if let Some((sql, _)) = self
            .sql_examples
            .iter()
            .find(|(sql, _)| !sql.contains(&self.name))
        {
            return Err(Error::Precondition(format!(
                "example `{sql}` does not mention {}",
                self.name
            )));
        }
        Ok(())
    }

    fn sort_key(&self) -> (&str, usize, &[String]) {
        (&self.name, self.arg_types.len(), &self.arg_types)
    }
}

/// Declarations sharing a category and an (unordered) argument-type
/// multiset are compared with each other.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub category: String,
    pub arg_types: Vec<String>,
}

impl GroupKey {
    pub fn of(decl: &FunctionDeclaration) -> Self {
        let mut arg_types = decl.arg_types.clone();
        arg_types.sort();
        GroupKey {
            category: decl.category.clone(),
            arg_types,
        }
    }

    /// `category(type,type)`, used as a map key in documents.
    pub fn label(&self) -> String {
        format!("{}({})", self.category, self.arg_types.join(","))
    }
}

pub fn group_by_declaration(
    decls: &[FunctionDeclaration],
) -> std::collections::BTreeMap<GroupKey, Vec<FunctionDeclaration>> {
    let mut groups: std::collections::BTreeMap<GroupKey, Vec<FunctionDeclaration>> =
        Default::default();
    for d in decls {
        groups.entry(d.group_key()).or_default().push(d.clone());
    }
    groups
}

struct CompiledDocRule {
    category: Option<Regex>,
    section: Regex,
    example: Regex,
    rule: DocExtractorRule,
}

fn compile_doc_rule(rule: &DocExtractorRule) -> Result<CompiledDocRule> {
    let re = |p: &str| {
        Regex::new(p).map_err(|e| Error::Config(format!("bad doc extractor regex `{p}`: {e}")))
    };
    Ok(CompiledDocRule {
        category: rule.category_pattern.as_deref().map(re).transpose()?,
        section: re(&rule.section_pattern)?,
        example: re(&rule.example_pattern)?,
        rule: rule.clone(),
    })
}

fn split_types(s: &str, sep: &str) -> Vec<String> {
    s.split(sep)
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Parses one page with one rule. Sections without a usable name are
/// skipped with a warning.
fn parse_doc(path: &str, text: &str, rule: &CompiledDocRule, out: &mut Vec<FunctionDeclaration>) {
    let mut category = rule.rule.default_category.clone().unwrap_or_default();
    let mut current: Option<FunctionDeclaration> = None;
    let flush = |cur: &mut Option<FunctionDeclaration>, out: &mut Vec<FunctionDeclaration>| {
        if let Some(mut d) = cur.take() {
            d.description = d.description.trim().to_string();
            match d.validate() {
                Ok(()) => out.push(d),
                Err(e) => log::warn!("{path}: skipping section for `{}`: {e}", d.name),
            }
        }
    };
    for line in text.lines() {
        if let Some(c) = rule.category.as_ref().and_then(|re| re.captures(line)) {
            flush(&mut current, out);
            category = c.name("category").map_or("", |m| m.as_str()).to_lowercase();
            continue;
        }
        if let Some(c) = rule.section.captures(line) {
            flush(&mut current, out);
            let Some(name) = c
                .name("name")
                .map(|m| m.as_str().trim())
                .filter(|n| !n.is_empty())
            else {
                log::warn!("{path}: section heading without a function name: {line}");
                continue;
            };
            let mut d = FunctionDeclaration::new(name, &category, &[], "");
            d.arg_types = c
                .name("args")
                .map(|m| split_types(m.as_str(), &rule.rule.arg_separator))
                .unwrap_or_default();
            d.return_type = c.name("ret").map_or("", |m| m.as_str()).trim().to_string();
            d.sources.insert(DeclSource::Documentation);
            current = Some(d);
            continue;
        }
        let Some(d) = current.as_mut() else { continue };
        if let Some(c) = rule.example.captures(line) {
            let expr = c.name("sql").map_or("", |m| m.as_str()).trim();
            let sql = match &rule.rule.example_sql_template {
                Some(t) => t.replace("{expr}", expr),
                None => expr.to_string(),
            };
            let expected = c
                .name("expected")
                .map_or("", |m| m.as_str())
                .trim()
                .to_string();
            d.sql_examples.push((sql, expected));
        } else if !line.trim().is_empty() {
            if !d.description.is_empty() {
                d.description.push(' ');
            }
            d.description.push_str(line.trim());
        }
    }
    flush(&mut current, out);
}

/// Declarations found in `docs` (`(path, text)` pairs), sorted by name
/// then arity.
pub fn collect_doc_declarations(
    docs: &[(String, String)],
    profile: &DbProfile,
) -> Result<Vec<FunctionDeclaration>> {
    if profile.doc_extractor_rules.is_empty() {
        return Err(Error::Precondition(
            "profile has no doc_extractor_rules".into(),
        ));
    }
    let rules = profile
        .doc_extractor_rules
        .iter()
        .map(compile_doc_rule)
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for (path, text) in docs {
        for rule in &rules {
            parse_doc(path, text, rule, &mut out);
        }
    }
    out.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    Ok(out)
}

fn field_text(row: &serde_json::Value, field: &str) -> Option<String> {
    match row.get(field)? {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Array(items) => Some(
            items
                .iter()
                .map(|v| v.as_str().map_or_else(|| v.to_string(), str::to_string))
                .collect::<Vec<_>>()
                .join(" "),
        ),
        serde_json::Value::Null => None,
        other => Some(other.to_string()),
    }
}

/// One declaration per catalog row; rows missing a mapped field are
/// skipped. Overloads are kept as separate declarations.
pub fn collect_catalog_declarations(
    rows: &[serde_json::Value],
    spec: &CatalogQuerySpec,
) -> Vec<FunctionDeclaration> {
    let mut out = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let (Some(name), Some(args), Some(ret)) = (
            field_text(row, &spec.name_field),
            field_text(row, &spec.arg_types_field),
            field_text(row, &spec.return_type_field),
        ) else {
            log::warn!("catalog row {i} lacks a mapped field; skipped");
            continue;
        };
        let mut d = FunctionDeclaration::new(name.trim(), "", &[], ret.trim());
        d.arg_types = if spec.arg_separator.trim().is_empty() {
            args.split_whitespace().map(str::to_string).collect()
        } else {
            split_types(&args, &spec.arg_separator)
        };
        if let Some(f) = &spec.category_field {
            d.category = field_text(row, f).unwrap_or_default();
        }
        if let Some(f) = &spec.description_field {
            d.description = field_text(row, f).unwrap_or_default();
        }
        d.sources.insert(DeclSource::Catalog);
        out.push(d);
    }
    out.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    out
}

/// Fuses both sources on (name, arity). The catalog wins on types, the
/// documentation on description and examples.
pub fn merge_declarations(
    doc: &[FunctionDeclaration],
    catalog: &[FunctionDeclaration],
) -> Vec<FunctionDeclaration> {
    let mut used = vec![false; doc.len()];
    let mut out = Vec::with_capacity(doc.len() + catalog.len());
    for c in catalog {
        let hit = doc
            .iter()
            .enumerate()
            .find(|(i, d)| !used[*i] && d.name == c.name && d.arity() == c.arity());
        let Some((i, d)) = hit else {
            out.push(c.clone());
            continue;
        };
        used[i] = true;
        if !d.return_type.is_empty() && d.return_type != c.return_type {
            log::warn!(
                "return type conflict for {}: documentation says `{}`, catalog says `{}`; keeping catalog",
                c.name,
                d.return_type,
                c.return_type
            );
        }
        let mut m = c.clone();
        if !d.description.is_empty() {
            m.description = d.description.clone();
        }
        m.sql_examples = d.sql_examples.clone();
        if m.category.is_empty() {
            m.category = d.category.clone();
        }
        m.sources.extend(d.sources.iter().copied());
        out.push(m);
    }
    out.extend(
        doc.iter()
            .zip(&used)
            .filter(|(_, u)| !**u)
            .map(|(d, _)| d.clone()),
    );
    out.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    out
}

/// Reads documentation pages and the catalog dump named by the profile and
/// merges them.
pub fn load_declarations(root: &Path, profile: &DbProfile) -> Result<Vec<FunctionDeclaration>> {
    let mut docs = Vec::new();
    if !profile.doc_globs.is_empty() {
        let set = build_globset(&profile.doc_globs)?;
        for rel in list_files_matching(root, &set)? {
            let path = root.join(&rel);
            match std::fs::read_to_string(&path) {
                Ok(text) => docs.push((rel, text)),
                Err(e) => log::warn!("skipping unreadable document {rel}: {e}"),
            }
        }
    }
    let doc_decls = if docs.is_empty() || profile.doc_extractor_rules.is_empty() {
        vec![]
    } else {
        collect_doc_declarations(&docs, profile)?
    };
    let catalog_decls = match (&profile.catalog_dump, &profile.catalog_query_spec) {
        (Some(rel), Some(spec)) => {
            let path = root.join(rel);
            match std::fs::read_to_string(&path) {
                Ok(text) => match serde_json::from_str::<Vec<serde_json::Value>>(&text) {
                    Ok(rows) => collect_catalog_declarations(&rows, spec),
                    Err(e) => {
                        log::warn!("catalog dump {rel} is not a JSON array: {e}");
                        vec![]
                    }
                },
                Err(e) => {
                    log::warn!("catalog dump {rel} unreadable: {e}");
                    vec![]
                }
            }
        }
        _ => vec![],
    };
    Ok(merge_declarations(&doc_decls, &catalog_decls))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc_profile() -> DbProfile {
        let mut p = crate::index::tests::profile();
        p.doc_extractor_rules = vec![DocExtractorRule {
            category_pattern: Some(r"^##\s+(?P<category>\w+)\s+Functions".into()),
            section_pattern: r"^###\s+(?P<name>\w+)\((?P<args>[^)]*)\)\s*(?:→|->)\s*(?P<ret>\w+)"
                .into(),
            example_pattern: r"^Example:\s*(?P<sql>.+?)\s*(?:→|->)\s*(?P<expected>.*)$".into(),
            arg_separator: ",".into(),
            default_category: None,
            example_sql_template: None,
        }];
        p
    }

    #[test]
    fn empty_sources() {
        assert!(collect_doc_declarations(&[], &doc_profile())
            .unwrap()
            .is_empty());
        assert!(merge_declarations(&[], &[]).is_empty());
    }

    #[test]
    fn doc_and_catalog_declarations_merge() {
        let page = "## Datetime Functions\n\
                    ### date_trunc(text, timestamp) -> timestamp\n\
                    truncate timestamp to specified precision\n\
                    Example: date_trunc('hour', timestamp '2001-02-16 20:38:40') -> '2001-02-16 20:00:00'\n";
        let docs =
            collect_doc_declarations(&[("d.md".into(), page.into())], &doc_profile()).unwrap();
        assert_eq!(docs.len(), 1);
        assert_eq!(docs[0].category, "datetime");
        assert_eq!(docs[0].sql_examples[0].1, "'2001-02-16 20:00:00'");

        let spec = CatalogQuerySpec {
            name_field: "proname".into(),
            arg_types_field: "proargtypes".into(),
            return_type_field: "prorettype".into(),
            category_field: None,
            description_field: None,
            arg_separator: " ".into(),
        };
        let rows = vec![
            serde_json::json!({"proname": "date_trunc", "proargtypes": "text timestamptz", "prorettype": "timestamptz"}),
        ];
        let cat = collect_catalog_declarations(&rows, &spec);
        assert_eq!(cat[0].arg_types, vec!["text", "timestamptz"]);
        assert_eq!(cat[0].return_type, "timestamptz");

        let merged = merge_declarations(&docs, &cat);
        assert_eq!(merged.len(), 1);
        let m = &merged[0];
        assert_eq!(m.arg_types, vec!["text", "timestamptz"]);
        assert_eq!(m.description, "truncate timestamp to specified precision");
        assert_eq!(m.category, "datetime");
        assert_eq!(m.sources.len(), 2);
    }

    #[test]
    fn overload_rows_are_preserved() {
        let spec = CatalogQuerySpec {
            name_field: "n".into(),
            arg_types_field: "a".into(),
            return_type_field: "r".into(),
            category_field: None,
            description_field: None,
            arg_separator: " ".into(),
        };
        let rows = vec![
            serde_json::json!({"n": "f", "a": "int", "r": "int"}),
            serde_json::json!({"n": "f", "a": "int", "r": "int"}),
            serde_json::json!({"n": "g", "r": "int"}),
        ];
        assert_eq!(collect_catalog_declarations(&rows, &spec).len(), 2);
    }

    #[test]
    fn group_key_ignores_argument_order() {
        let a = FunctionDeclaration::new("a", "date", &["int", "text"], "int");
        let b = FunctionDeclaration::new("b", "date", &["text", "int"], "int");
        let c = FunctionDeclaration::new("c", "date", &["int"], "int");
        let groups = group_by_declaration(&[a, b, c]);
        assert_eq!(groups.len(), 2);
        assert_eq!(groups.values().map(Vec::len).max(), Some(2));
    }
}
