//! Database profiles: how a target code base declares, builds and runs
//! its native functions.
//!
//! Profiles are TOML files kept under `profiles/<name>.toml`.

use std::path::{Path, PathBuf};

use globset::{Glob, GlobSet, GlobSetBuilder};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::lexer::Language;
use crate::validation::ErrorClass;
use crate::{Error, Result};

/// Default compliance timeout in seconds.
pub const DEFAULT_BUILD_TIMEOUT: u64 = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AnchorPosition {
    #[default]
    Before,
    After,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UnitRole {
    Registration,
    #[default]
    Implementation,
}

/// Marks where functions are declared, and optionally how to recognise the
/// registration entries living there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorRule {
    pub id: String,
    pub file_globs: Vec<String>,
    pub anchor_pattern: String,
    #[serde(default)]
    pub position: AnchorPosition,
    #[serde(default)]
    pub role: UnitRole,
    /// Regex with a `name` group (and optionally `arity`) matching one
    /// registration entry per line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry_pattern: Option<String>,
}

impl AnchorRule {
    pub fn globs(&self) -> Result<GlobSet> {
        build_globset(&self.file_globs)
    }

    pub fn anchor_regex(&self) -> Result<Regex> {
        compile(&self.anchor_pattern, &self.id)
    }

    pub fn entry_regex(&self) -> Result<Option<Regex>> {
        self.entry_pattern
            .as_deref()
            .map(|p| compile(p, &self.id))
            .transpose()
    }
}

/// How to pull declarations out of a documentation page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocExtractorRule {
    /// Heading that sets the category for following sections; `category`
    /// named group.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category_pattern: Option<String>,
    /// Starts a function section; groups `name`, optional `args`, `ret`.
    pub section_pattern: String,
    /// One SQL example per match; groups `sql` and `expected`.
    pub example_pattern: String,
    #[serde(default = "default_arg_separator")]
    pub arg_separator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_category: Option<String>,
    /// Wraps a documented example expression into a runnable statement;
    /// `{expr}` is replaced by the captured text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub example_sql_template: Option<String>,
}

fn default_arg_separator() -> String {
    ",".into()
}

fn default_space() -> String {
    " ".into()
}

/// Field mapping from catalog rows to declaration fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogQuerySpec {
    pub name_field: String,
    pub arg_types_field: String,
    pub return_type_field: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category_field: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description_field: Option<String>,
    #[serde(default = "default_space")]
    pub arg_separator: String,
}

/// Maps compiler stderr lines to error classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompliancePattern {
    pub pattern: String,
    pub class: ErrorClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbProfile {
    pub name: String,
    #[serde(default = "default_language")]
    pub language: Language,
    pub source_globs: Vec<String>,
    #[serde(default)]
    pub registration_patterns: Vec<AnchorRule>,
    pub build_command: String,
    #[serde(default = "default_timeout")]
    pub build_timeout: u64,
    #[serde(default)]
    pub test_command: String,
    /// Shell template; `{sql}` is replaced by the shell-quoted statement.
    #[serde(default)]
    pub sql_runner_command: String,
    #[serde(default)]
    pub sql_runner_reentrant: bool,
    #[serde(default)]
    pub doc_globs: Vec<String>,
    #[serde(default)]
    pub doc_extractor_rules: Vec<DocExtractorRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog_dump: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog_query_spec: Option<CatalogQuerySpec>,
    #[serde(default)]
    pub test_suite_globs: Vec<String>,
    #[serde(default = "default_compliance_patterns")]
    pub compliance_patterns: Vec<CompliancePattern>,
    /// Follow macro uses when extracting reference edges.
    #[serde(default = "default_true")]
    pub macro_edges: bool,
    /// Compare numeric semantic outputs with this absolute tolerance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numeric_tolerance: Option<f64>,
}

fn default_language() -> Language {
    Language::C
}

fn default_timeout() -> u64 {
    DEFAULT_BUILD_TIMEOUT
}

fn default_true() -> bool {
    true
}

/// Stderr classification used when a profile does not override it.
pub fn default_compliance_patterns() -> Vec<CompliancePattern> {
    let p = |pattern: &str, class| CompliancePattern {
        pattern: pattern.into(),
        class,
    };
    vec![
        p(
            r"redefinition of|conflicting types for|redeclared",
            ErrorClass::IncorrectDeclaration,
        ),
        p(r"undeclared", ErrorClass::IncorrectDeclaration),
        p(
            r"undefined reference to|implicit declaration of function|was not declared in this scope|unknown type name|has no member named",
            ErrorClass::IncorrectReference,
        ),
        p(r"error:|Error \d+|fatal", ErrorClass::BuildFailure),
    ]
}

impl DbProfile {
    pub fn from_toml_str(src: &str) -> Result<Self> {
        let profile: DbProfile =
            toml::from_str(src).map_err(|e| Error::Config(format!("invalid profile: {e}")))?;
        profile.check()?;
        Ok(profile)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read profile {}: {e}", path.display())))?;
        Self::from_toml_str(&src)
    }

    /// Loads `<dir>/<name>.toml`.
    pub fn load_named(dir: &Path, name: &str) -> Result<Self> {
        let path: PathBuf = dir.join(format!("{name}.toml"));
        if !path.is_file() {
            return Err(Error::Config(format!(
                "profile `{name}` not found at {}",
                path.display()
            )));
        }
        Self::load(&path)
    }

    pub fn check(&self) -> Result<()> {
        if self.build_timeout == 0 {
            return Err(Error::Config("build_timeout must be > 0".into()));
        }
        for rule in &self.registration_patterns {
            if rule.file_globs.is_empty() || rule.anchor_pattern.trim().is_empty() {
                return Err(Error::Config(format!(
                    "registration pattern `{}` needs a file glob and an anchor pattern",
                    rule.id
                )));
            }
            rule.globs()?;
            rule.anchor_regex()?;
            rule.entry_regex()?;
        }
        let mut ids: Vec<&str> = self
            .registration_patterns
            .iter()
            .map(|r| r.id.as_str())
            .collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("duplicate registration pattern id".into()));
        }
        for p in &self.compliance_patterns {
            compile(&p.pattern, "compliance_patterns")?;
        }
        build_globset(&self.source_globs)?;
        Ok(())
    }

    pub fn rule(&self, id: &str) -> Option<&AnchorRule> {
        self.registration_patterns.iter().find(|r| r.id == id)
    }

    pub fn source_set(&self) -> Result<GlobSet> {
        build_globset(&self.source_globs)
    }

    /// Substitutes the statement into the runner template.
    pub fn runner_command(&self, sql: &str) -> String {
        self.sql_runner_command
            .replace("{sql}", &crate::util::shell_quote(sql))
    }
}

pub fn build_globset(globs: &[String]) -> Result<GlobSet> {
    let mut b = GlobSetBuilder::new();
    for g in globs {
        b.add(Glob::new(g).map_err(|e| Error::Config(format!("bad glob `{g}`: {e}")))?);
    }
    b.build()
        .map_err(|e| Error::Config(format!("bad glob set: {e}")))
}

fn compile(pattern: &str, owner: &str) -> Result<Regex> {
    Regex::new(pattern).map_err(|e| Error::Config(format!("bad regex in `{owner}`: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "t"
source_globs = ["*.c"]
build_command = "true"

[[registration_patterns]]
id = "r"
file_globs = ["a.c"]
anchor_pattern = "^END"
"#;

    #[test]
    fn parses_minimal_profile_with_defaults() {
        let p = DbProfile::from_toml_str(MINIMAL).unwrap();
        assert_eq!(p.build_timeout, DEFAULT_BUILD_TIMEOUT);
        assert_eq!(p.language, Language::C);
        assert!(!p.compliance_patterns.is_empty());
        assert_eq!(p.rule("r").unwrap().position, AnchorPosition::Before);
    }

    #[test]
    fn rejects_zero_timeout() {
        let src = MINIMAL.replace(
            "build_command = \"true\"",
            "build_command = \"true\"\nbuild_timeout = 0",
        );
        assert!(matches!(
            DbProfile::from_toml_str(&src),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn rejects_rule_without_globs() {
        let src = MINIMAL.replace(r#"file_globs = ["a.c"]"#, "file_globs = []");
        assert!(matches!(
            DbProfile::from_toml_str(&src),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn runner_command_quotes_sql() {
        let mut p = DbProfile::from_toml_str(MINIMAL).unwrap();
        p.sql_runner_command = "./db {sql}".into();
        assert_eq!(p.runner_command("SELECT 'a';"), r"./db 'SELECT '\''a'\'';'");
    }
}
