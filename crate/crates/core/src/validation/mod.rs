//! Progressive validation: syntax, then compliance (build), then semantic
//! tests. The first failing stage ends the run.

mod compliance;
mod pipeline;
mod semantic;
mod syntax;

use serde::{Deserialize, Serialize};

pub use compliance::{classify_output, run_shell, validate_compliance, ShellRun};
pub use pipeline::{
    run_stages, run_validation_pipeline, PipelineInput, PipelineRun, RepoStages, StageRunner,
};
pub use semantic::{
    generate_semantic_tests, load_suite, normalize_output, outputs_match, run_semantic_tests,
    GeneratedTests,
};
pub use syntax::{validate_syntax, validate_syntax_text};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    IncorrectDeclaration,
    IncorrectReference,
    BuildFailure,
    TestcaseMismatch,
    Timeout,
    Other,
}

impl ErrorClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::IncorrectDeclaration => "incorrect_declaration",
            ErrorClass::IncorrectReference => "incorrect_reference",
            ErrorClass::BuildFailure => "build_failure",
            ErrorClass::TestcaseMismatch => "testcase_mismatch",
            ErrorClass::Timeout => "timeout",
            ErrorClass::Other => "other",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Syntax,
    Compliance,
    Semantic,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Syntax, Stage::Compliance, Stage::Semantic];
}

/// One finding. Notes (such as the insufficient-coverage flag) carry no
/// error class; every finding of a failed stage does.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_class: Option<ErrorClass>,
}

impl Diagnostic {
    pub fn error(class: ErrorClass, message: impl Into<String>) -> Self {
        Diagnostic {
            file: None,
            line: None,
            message: message.into(),
            error_class: Some(class),
        }
    }

    pub fn note(message: impl Into<String>) -> Self {
        Diagnostic {
            file: None,
            line: None,
            message: message.into(),
            error_class: None,
        }
    }

    pub fn at(mut self, file: impl Into<String>, line: Option<usize>) -> Self {
        self.file = Some(file.into());
        self.line = line;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub stage: Stage,
    pub passed: bool,
    pub diagnostics: Vec<Diagnostic>,
}

impl StageOutcome {
    pub fn pass(stage: Stage, notes: Vec<Diagnostic>) -> Self {
        debug_assert!(notes.iter().all(|d| d.error_class.is_none()));
        StageOutcome {
            stage,
            passed: true,
            diagnostics: notes,
        }
    }

    /// A failed outcome; guarantees at least one classified diagnostic.
    pub fn fail(stage: Stage, mut diagnostics: Vec<Diagnostic>) -> Self {
        if !diagnostics.iter().any(|d| d.error_class.is_some()) {
            diagnostics.push(Diagnostic::error(
                ErrorClass::Other,
                "stage failed without detail",
            ));
        }
        StageOutcome {
            stage,
            passed: false,
            diagnostics,
        }
    }

    pub fn error_classes(&self) -> Vec<ErrorClass> {
        let mut v: Vec<ErrorClass> = self
            .diagnostics
            .iter()
            .filter_map(|d| d.error_class)
            .collect();
        v.sort();
        v.dedup();
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn is_pass(self) -> bool {
        self == Verdict::Pass
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub version: u32,
    pub outcomes: Vec<StageOutcome>,
    pub final_stage_reached: Option<Stage>,
    pub verdict: Verdict,
}

impl ValidationReport {
    pub fn from_outcomes(outcomes: Vec<StageOutcome>) -> Self {
        let verdict = if outcomes.len() == 3 && outcomes.iter().all(|o| o.passed) {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        ValidationReport {
            version: crate::SCHEMA_VERSION,
            final_stage_reached: outcomes.last().map(|o| o.stage),
            outcomes,
            verdict,
        }
    }

    pub fn outcome(&self, stage: Stage) -> Option<&StageOutcome> {
        self.outcomes.iter().find(|o| o.stage == stage)
    }

    /// The build and integration step succeeded.
    pub fn compliance_passed(&self) -> bool {
        self.outcome(Stage::Compliance).is_some_and(|o| o.passed)
    }

    /// Report shape rules: stage order, failure only at the end, verdict
    /// agreeing with the outcomes.
    pub fn is_well_formed(&self) -> bool {
        let in_order = self
            .outcomes
            .iter()
            .zip(Stage::ALL.iter())
            .all(|(o, s)| o.stage == *s)
            && self.outcomes.len() <= 3;
        let failure_last = self.outcomes.iter().rev().skip(1).all(|o| o.passed);
        let clean_passes = self
            .outcomes
            .iter()
            .filter(|o| o.passed)
            .all(|o| o.diagnostics.iter().all(|d| d.error_class.is_none()));
        let all_pass = self.outcomes.len() == 3 && self.outcomes.iter().all(|o| o.passed);
        in_order && failure_last && clean_passes && (self.verdict.is_pass() == all_pass)
    }

    /// Classified diagnostics of the failing stage, for re-synthesis prompts.
    pub fn failure_feedback(&self) -> Vec<&Diagnostic> {
        self.outcomes
            .iter()
            .filter(|o| !o.passed)
            .flat_map(|o| o.diagnostics.iter())
            .filter(|d| d.error_class.is_some())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestSource {
    #[default]
    LlmGenerated,
    ExistingSuite,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub sql: String,
    #[serde(default)]
    pub expected: String,
    #[serde(default)]
    pub source: TestSource,
    #[serde(default)]
    pub rationale: String,
    /// The statement is expected to raise an error; `expected` may be empty.
    #[serde(default)]
    pub expected_error: bool,
}

impl TestCase {
    pub fn is_valid(&self) -> bool {
        !self.sql.trim().is_empty() && (self.expected_error || !self.expected.trim().is_empty())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_requires_three_passes() {
        let p = |s| StageOutcome::pass(s, vec![]);
        assert_eq!(
            ValidationReport::from_outcomes(vec![p(Stage::Syntax)]).verdict,
            Verdict::Fail
        );
        let r = ValidationReport::from_outcomes(Stage::ALL.into_iter().map(p).collect());
        assert!(r.verdict.is_pass());
        assert!(r.is_well_formed());
    }

    #[test]
    fn failed_outcome_always_classified() {
        let o = StageOutcome::fail(Stage::Semantic, vec![Diagnostic::note("x")]);
        assert_eq!(o.error_classes(), vec![ErrorClass::Other]);
    }

    #[test]
    fn malformed_shapes_detected() {
        let bad = ValidationReport::from_outcomes(vec![
            StageOutcome::fail(Stage::Syntax, vec![]),
            StageOutcome::pass(Stage::Compliance, vec![]),
        ]);
        assert!(!bad.is_well_formed());
        let swapped =
            ValidationReport::from_outcomes(vec![StageOutcome::pass(Stage::Compliance, vec![])]);
        assert!(!swapped.is_well_formed());
    }
}
