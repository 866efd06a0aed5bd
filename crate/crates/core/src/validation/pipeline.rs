use std::path::Path;

use super::{
    generate_semantic_tests, run_semantic_tests, validate_compliance, validate_syntax, Diagnostic,
    ErrorClass, GeneratedTests, Stage, StageOutcome, TestCase, ValidationReport,
};
use crate::characterize::FunctionDeclaration;
use crate::llm::Gateway;
use crate::profile::DbProfile;
use crate::synthesis::SynthesizedUnit;

/// One implementation of the three stages. The pipeline only decides
/// ordering, which keeps fault injection in tests trivial.
pub trait StageRunner {
    fn run_stage(&mut self, stage: Stage) -> StageOutcome;
}

/// Runs stages in order and stops at the first failure.
pub fn run_stages(runner: &mut dyn StageRunner) -> ValidationReport {
    let mut outcomes = Vec::with_capacity(3);
    for stage in Stage::ALL {
        let outcome = runner.run_stage(stage);
        debug_assert_eq!(outcome.stage, stage);
        let passed = outcome.passed;
        outcomes.push(outcome);
        if !passed {
            break;
        }
    }
    ValidationReport::from_outcomes(outcomes)
}

pub struct PipelineInput<'a> {
    pub root: &'a Path,
    pub profile: &'a DbProfile,
    pub decl: &'a FunctionDeclaration,
    pub units: &'a [SynthesizedUnit],
    /// Repository-relative files touched by the applied edits.
    pub files: &'a [String],
    /// Existing suite cases, used as format exemplars.
    pub suite: &'a [TestCase],
    pub gateway: &'a Gateway,
}

/// The real stages over a repository with applied edits.
pub struct RepoStages<'a> {
    pub input: PipelineInput<'a>,
    pub generated: Option<GeneratedTests>,
    pub compliance_stderr: String,
}

impl<'a> RepoStages<'a> {
    pub fn new(input: PipelineInput<'a>) -> Self {
        RepoStages {
            input,
            generated: None,
            compliance_stderr: String::new(),
        }
    }

    fn errored(stage: Stage, e: crate::Error) -> StageOutcome {
        StageOutcome::fail(
            stage,
            vec![Diagnostic::error(ErrorClass::Other, e.to_string())],
        )
    }
}

impl StageRunner for RepoStages<'_> {
    fn run_stage(&mut self, stage: Stage) -> StageOutcome {
        let inp = &self.input;
        match stage {
            Stage::Syntax => validate_syntax(inp.root, inp.files, inp.profile)
                .unwrap_or_else(|e| Self::errored(stage, e)),
            Stage::Compliance => match validate_compliance(inp.root, inp.profile) {
                Ok((outcome, stderr)) => {
                    self.compliance_stderr = stderr;
                    outcome
                }
                Err(e) => Self::errored(stage, e),
            },
            Stage::Semantic => {
                let generated =
                    match generate_semantic_tests(inp.decl, inp.units, inp.suite, inp.gateway) {
                        Ok(g) => g,
                        Err(e) => return Self::errored(stage, e),
                    };
                let mut outcome = run_semantic_tests(inp.root, inp.profile, &generated.tests)
                    .unwrap_or_else(|e| Self::errored(stage, e));
                if generated.insufficient {
                    outcome.diagnostics.push(Diagnostic::note(format!(
                        "insufficient_coverage: no test calls {} with {} argument(s)",
                        inp.decl.name,
                        inp.decl.arg_types.len()
                    )));
                }
                self.generated = Some(generated);
                outcome
            }
        }
    }
}

/// Validation result plus the by-products worth archiving.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub report: ValidationReport,
    pub tests: Option<GeneratedTests>,
    pub compliance_stderr: String,
}

pub fn run_validation_pipeline(input: PipelineInput<'_>) -> PipelineRun {
    let mut stages = RepoStages::new(input);
    let report = run_stages(&mut stages);
    PipelineRun {
        report,
        tests: stages.generated,
        compliance_stderr: stages.compliance_stderr,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Scripted {
        fail_at: Option<Stage>,
        ran: Vec<Stage>,
    }

    impl StageRunner for Scripted {
        fn run_stage(&mut self, stage: Stage) -> StageOutcome {
            self.ran.push(stage);
            if Some(stage) == self.fail_at {
                StageOutcome::fail(stage, vec![])
            } else {
                StageOutcome::pass(stage, vec![])
            }
        }
    }

    #[test]
    fn short_circuits_on_first_failure() {
        for (fail_at, ran) in [
            (Some(Stage::Syntax), 1),
            (Some(Stage::Compliance), 2),
            (Some(Stage::Semantic), 3),
            (None, 3),
        ] {
            let mut s = Scripted {
                fail_at,
                ran: vec![],
            };
            let r = run_stages(&mut s);
            assert_eq!(s.ran.len(), ran);
            assert_eq!(r.outcomes.len(), ran);
            assert_eq!(r.verdict.is_pass(), fail_at.is_none());
            assert!(r.is_well_formed());
        }
    }
}
