//! Semantic stage: generate SQL test cases with the model and run them
//! through the profile's SQL runner.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::compliance::run_shell;
use super::{Diagnostic, ErrorClass, Stage, StageOutcome, TestCase, TestSource};
use crate::characterize::FunctionDeclaration;
use crate::exec::Exec;
use crate::index::list_files_matching;
use crate::llm::{extract_json, Gateway, Prompt};
use crate::profile::{build_globset, DbProfile};
use crate::synthesis::SynthesizedUnit;
use crate::{Error, Result};

/// Number of existing suite cases shown to the model as format exemplars.
const SUITE_EXEMPLARS: usize = 3;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedTests {
    pub tests: Vec<TestCase>,
    pub dropped: Vec<String>,
    /// No test exercises the declared arity.
    pub insufficient: bool,
}

/// Reads every test case from the profile's suite files, in path order.
pub fn load_suite(root: &Path, profile: &DbProfile) -> Result<Vec<TestCase>> {
    if profile.test_suite_globs.is_empty() {
        return Ok(vec![]);
    }
    let set = build_globset(&profile.test_suite_globs)?;
    let mut out = Vec::new();
    for rel in list_files_matching(root, &set)? {
        let path = root.join(&rel);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        match serde_json::from_str::<Vec<TestCase>>(&text) {
            Ok(cases) => out.extend(cases.into_iter().map(|mut c| {
                c.source = TestSource::ExistingSuite;
                c
            })),
            Err(e) => log::warn!("skipping malformed test suite {rel}: {e}"),
        }
    }
    Ok(out)
}

/// Argument counts of every `name(...)` call in `sql`.
pub(crate) fn call_arities(sql: &str, name: &str) -> Vec<usize> {
    let bytes = sql.as_bytes();
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(pos) = sql[from..].find(name) {
        let start = from + pos;
        from = start + name.len();
        let before_ok =
            start == 0 || !(bytes[start - 1].is_ascii_alphanumeric() || bytes[start - 1] == b'_');
        let rest = sql[from..].trim_start();
        if !before_ok || !rest.starts_with('(') {
            continue;
        }
        let mut depth = 0i32;
        let mut commas = 0usize;
        let mut any = false;
        let mut quote: Option<char> = None;
        for ch in rest.chars() {
            if let Some(q) = quote {
                if ch == q {
                    quote = None;
                }
                any = true;
                continue;
            }
            match ch {
                '\'' | '"' => {
                    quote = Some(ch);
                    any = true;
                }
                '(' => {
                    depth += 1;
                    if depth > 1 {
                        any = true;
                    }
                }
                ')' => {
                    depth -= 1;
                    if depth == 0 {
                        break;
                    }
                }
                ',' if depth == 1 => commas += 1,
                c if !c.is_whitespace() => any = true,
                _ => {}
            }
        }
        out.push(if any { commas + 1 } else { 0 });
    }
    out
}

fn tests_prompt(
    gateway: &Gateway,
    decl: &FunctionDeclaration,
    units: &[SynthesizedUnit],
    suite: &[TestCase],
) -> Prompt {
    let system = "You write SQL test cases for a new database function.\n\
                  Task: tests\n\
                  Reply with a JSON array. Each element has the keys \"sql\", \"expected\", \
                  \"rationale\" and optionally \"expected_error\": true for statements that must fail."
        .to_string();
    let mut user = format!(
        "Function: {}\nSignature: {}\nCategory: {}\nDescription: {}\n\n",
        decl.name,
        decl.signature(),
        decl.category,
        decl.description
    );
    user.push_str(
        "Expertise instructions:\n\
         - Exercise every argument with typical values.\n\
         - Include edge cases: zero, negative numbers, boundaries of the input domain.\n\
         - Use one SELECT statement per test and give the exact expected output text.\n\n",
    );
    if !suite.is_empty() {
        user.push_str("Existing suite examples (format only):\n");
        for t in suite.iter().take(SUITE_EXEMPLARS) {
            user.push_str(&format!("{} => {}\n", t.sql, t.expected));
        }
        user.push('\n');
    }
    if !units.is_empty() {
        user.push_str("Code blocks of the new function:\n");
        for u in units {
            user.push_str(&format!(
                "// {} ({})\n{}\n",
                u.unit_name,
                u.file_path,
                u.code_text.trim_end()
            ));
        }
    }
    gateway.prompt("tests", system, user)
}

#[derive(Deserialize)]
struct RawTest {
    sql: Option<String>,
    #[serde(default)]
    expected: Option<serde_json::Value>,
    #[serde(default)]
    rationale: Option<String>,
    #[serde(default)]
    expected_error: bool,
}

fn value_text(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// Parses a model reply into test cases, dropping malformed rows.
pub(crate) fn parse_tests(reply: &str, function: &str) -> (Vec<TestCase>, Vec<String>) {
    let mut tests = Vec::new();
    let mut dropped = Vec::new();
    let Some(serde_json::Value::Array(rows)) = extract_json(reply) else {
        dropped.push("reply contains no JSON array".to_string());
        return (tests, dropped);
    };
    for (i, row) in rows.into_iter().enumerate() {
        let raw: RawTest = match serde_json::from_value(row) {
            Ok(r) => r,
            Err(e) => {
                dropped.push(format!("row {i}: {e}"));
                continue;
            }
        };
        let t = TestCase {
            sql: raw.sql.unwrap_or_default().trim().to_string(),
            expected: raw.expected.as_ref().map(value_text).unwrap_or_default(),
            source: TestSource::LlmGenerated,
            rationale: raw.rationale.unwrap_or_default(),
            expected_error: raw.expected_error,
        };
        if !t.is_valid() {
            dropped.push(format!("row {i}: missing sql or expected output"));
        } else if !t.sql.contains(function) {
            dropped.push(format!("row {i}: does not call {function}"));
        } else {
            tests.push(t);
        }
    }
    (tests, dropped)
}

/// Asks the model for tests, then appends the declaration's own examples.
pub fn generate_semantic_tests(
    decl: &FunctionDeclaration,
    units: &[SynthesizedUnit],
    suite: &[TestCase],
    gateway: &Gateway,
) -> Result<GeneratedTests> {
    let reply = gateway.complete(&tests_prompt(gateway, decl, units, suite))?;
    let (mut tests, dropped) = parse_tests(&reply, &decl.name);
    for d in &dropped {
        log::warn!("dropped generated test for {}: {d}", decl.name);
    }
    if tests.is_empty() {
        return Err(Error::TestGenerationFailed(format!(
            "no parseable test for {} ({} dropped)",
            decl.name,
            dropped.len()
        )));
    }
    for (sql, expected) in &decl.sql_examples {
        if !tests.iter().any(|t| &t.sql == sql) {
            tests.push(TestCase {
                sql: sql.clone(),
                expected: expected.clone(),
                source: TestSource::ExistingSuite,
                rationale: "documented example".into(),
                expected_error: false,
            });
        }
    }
    let arity = decl.arg_types.len();
    let insufficient = !tests
        .iter()
        .any(|t| call_arities(&t.sql, &decl.name).contains(&arity));
    Ok(GeneratedTests {
        tests,
        dropped,
        insufficient,
    })
}

/// Line-ending and trailing-whitespace normalisation applied to both sides.
pub fn normalize_output(s: &str) -> String {
    let s = s.replace("\r\n", "\n");
    let lines: Vec<&str> = s.lines().map(str::trim_end).collect();
    let end = lines
        .iter()
        .rposition(|l| !l.is_empty())
        .map_or(0, |p| p + 1);
    lines[..end].join("\n")
}

pub fn outputs_match(actual: &str, expected: &str, tolerance: Option<f64>) -> bool {
    let (a, e) = (normalize_output(actual), normalize_output(expected));
    if a == e {
        return true;
    }
    match (tolerance, a.trim().parse::<f64>(), e.trim().parse::<f64>()) {
        (Some(tol), Ok(x), Ok(y)) => (x - y).abs() <= tol,
        _ => false,
    }
}

fn run_one(root: &Path, profile: &DbProfile, t: &TestCase) -> Result<Option<Diagnostic>> {
    let run = run_shell(
        &profile.runner_command(&t.sql),
        root,
        Duration::from_secs(profile.build_timeout),
    )?;
    if run.timed_out {
        return Ok(Some(Diagnostic::error(
            ErrorClass::Timeout,
            format!("`{}` timed out", t.sql),
        )));
    }
    if t.expected_error {
        return Ok((run.status == Some(0)).then(|| {
            Diagnostic::error(
                ErrorClass::TestcaseMismatch,
                format!(
                    "`{}` expected an error, got `{}`",
                    t.sql,
                    normalize_output(&run.stdout)
                ),
            )
        }));
    }
    if run.status != Some(0) {
        let detail = if run.stderr.trim().is_empty() {
            &run.stdout
        } else {
            &run.stderr
        };
        return Ok(Some(Diagnostic::error(
            ErrorClass::Other,
            format!(
                "`{}` failed with status {:?}: {}",
                t.sql,
                run.status,
                normalize_output(detail)
            ),
        )));
    }
    if outputs_match(&run.stdout, &t.expected, profile.numeric_tolerance) {
        Ok(None)
    } else {
        Ok(Some(Diagnostic::error(
            ErrorClass::TestcaseMismatch,
            format!(
                "`{}` expected `{}`, got `{}`",
                t.sql,
                normalize_output(&t.expected),
                normalize_output(&run.stdout)
            ),
        )))
    }
}

/// Executes `tests` through the SQL runner; concurrent only when the
/// profile marks the runner reentrant.
pub fn run_semantic_tests(
    root: &Path,
    profile: &DbProfile,
    tests: &[TestCase],
) -> Result<StageOutcome> {
    if profile.sql_runner_command.trim().is_empty() {
        return Err(Error::Config("profile has no sql_runner_command".into()));
    }
    if tests.is_empty() {
        return Ok(StageOutcome::pass(
            Stage::Semantic,
            vec![Diagnostic::note(
                "insufficient_coverage: no test cases were run",
            )],
        ));
    }
    let exec = if profile.sql_runner_reentrant {
        Exec::default()
    } else {
        Exec::Sequential
    };
    let results = exec.map(tests, |t| run_one(root, profile, t));
    let mut diags = Vec::new();
    for r in results {
        if let Some(d) = r? {
            diags.push(d);
        }
    }
    Ok(if diags.is_empty() {
        StageOutcome::pass(Stage::Semantic, vec![])
    } else {
        StageOutcome::fail(Stage::Semantic, diags)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arity_counting() {
        assert_eq!(call_arities("SELECT f(1, g(2, 3), 'a,b');", "f"), vec![3]);
        assert_eq!(call_arities("SELECT f();", "f"), vec![0]);
        assert_eq!(call_arities("SELECT ff(1), f (2);", "f"), vec![1]);
    }

    #[test]
    fn parse_drops_malformed_rows() {
        let reply = "Here:\n```json\n[{\"sql\":\"SELECT toy_abs(-5);\",\"expected\":\"5\"},\n {\"sql\":\"SELECT 1;\",\"expected\":\"1\"},\n {\"expected\":\"0\"},\n {\"sql\":\"SELECT toy_abs(0);\",\"expected\":0}]\n```";
        let (tests, dropped) = parse_tests(reply, "toy_abs");
        assert_eq!(tests.len(), 2);
        assert_eq!(tests[1].expected, "0");
        assert_eq!(dropped.len(), 2);
    }

    #[test]
    fn normalisation_and_tolerance() {
        assert!(outputs_match("5 \r\n\n", "5", None));
        assert!(!outputs_match("4", "5", None));
        assert!(outputs_match("0.3333", "0.33333", Some(1e-3)));
    }

    #[test]
    fn runner_outcomes() {
        let d = tempfile::tempdir().unwrap();
        let mut p = crate::index::tests::profile();
        p.sql_runner_command =
            "sh -c 'case \"$1\" in *boom*) echo ERROR; exit 1;; *) echo 5;; esac' x {sql}".into();
        let case = |sql: &str, expected: &str, err| TestCase {
            sql: sql.into(),
            expected: expected.into(),
            source: TestSource::LlmGenerated,
            rationale: String::new(),
            expected_error: err,
        };
        let ok = run_semantic_tests(
            d.path(),
            &p,
            &[case("f(-5)", "5", false), case("boom", "", true)],
        )
        .unwrap();
        assert!(ok.passed, "{ok:?}");
        let bad = run_semantic_tests(d.path(), &p, &[case("f(4)", "4", false)]).unwrap();
        assert_eq!(bad.error_classes(), vec![ErrorClass::TestcaseMismatch]);
        assert!(bad.diagnostics[0].message.contains("f(4)"));
        let empty = run_semantic_tests(d.path(), &p, &[]).unwrap();
        assert!(
            empty.passed
                && empty.diagnostics[0]
                    .message
                    .starts_with("insufficient_coverage")
        );
    }
}
