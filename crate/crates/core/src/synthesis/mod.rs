//! Code synthesis for new function units: template filling with
//! self-consistency voting, writing from scratch, and the failure-driven
//! switch between the two.

mod fill;
mod mode;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use fill::{
    check_template_shape, fill_blanks, normalize_code, parse_units, retrieve_templates,
    self_consistency_merge, template_runs, FillContext, FillOutcome, ParsedUnit, DEFAULT_SAMPLES,
};
pub use mode::{
    adaptation_probability, ModeDecision, ModeState, SynthesisMode, DEFAULT_DECAY, DEFAULT_FLOOR,
};

use crate::characterize::{FunctionDeclaration, ReferenceUnit};
use crate::index::{CodeEdit, EditMode};
use crate::llm::Gateway;
use crate::planning::CodingPlan;
use crate::profile::{AnchorPosition, DbProfile, UnitRole};
use crate::{Error, Result, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitOrigin {
    BlankFilled,
    FromScratch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesizedUnit {
    pub unit_name: String,
    pub file_path: String,
    pub code_text: String,
    pub origin: UnitOrigin,
    pub sample_votes: usize,
}

/// Extra prompt context gathered during a session, such as repository
/// search hits or expanded reference units.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextNote {
    pub title: String,
    pub text: String,
}

fn scratch_prompt(
    gateway: &Gateway,
    decl: &FunctionDeclaration,
    plan: Option<&CodingPlan>,
    references: &[ReferenceUnit],
    locations: &[String],
    notes: &[ContextNote],
    feedback: &[String],
) -> crate::llm::Prompt {
    let system = format!(
        "You add a new native SQL function to an existing database code base. Identify every unit the \
         function needs and implement each one in full.\n\
         Task: code\n\
         {}",
        fill::UNITS_REPLY_FORMAT
    );
    let mut user = format!(
        "Function: {}\nMode: from_scratch\nSignature: {}\nCategory: {}\nDescription: {}\n",
        decl.name,
        decl.signature(),
        decl.category,
        decl.description
    );
    if !locations.is_empty() {
        user.push_str("\nExisting units in this category:\n");
        for l in locations {
            user.push_str(&format!("- {l}\n"));
        }
    }
    fill::push_context(&mut user, plan, references, notes, feedback);
    gateway.prompt("code", system, user)
}

/// Writes the function without templates. One sample is requested.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_from_scratch(
    decl: &FunctionDeclaration,
    plan: Option<&CodingPlan>,
    references: &[ReferenceUnit],
    locations: &[String],
    gateway: &Gateway,
    profile: &DbProfile,
    notes: &[ContextNote],
    feedback: &[String],
) -> Result<Vec<SynthesizedUnit>> {
    let reply = gateway.complete(&scratch_prompt(
        gateway, decl, plan, references, locations, notes, feedback,
    ))?;
    if reply.trim().is_empty() {
        return Err(Error::SynthesisFailed(format!(
            "empty reply for {}",
            decl.name
        )));
    }
    let parsed = parse_units(&reply, UnitOrigin::FromScratch, profile)
        .map_err(|e| Error::SynthesisFailed(format!("{}: {e}", decl.name)))?;
    Ok(parsed.into_iter().map(|p| p.unit).collect())
}

fn registration_rule<'a>(
    unit: &SynthesizedUnit,
    profile: &'a DbProfile,
) -> Result<Option<&'a crate::profile::AnchorRule>> {
    for rule in profile
        .registration_patterns
        .iter()
        .filter(|r| r.entry_pattern.is_some())
    {
        if !rule.globs()?.is_match(&unit.file_path) {
            continue;
        }
        if let Some(re) = rule.entry_regex()? {
            if unit.code_text.lines().any(|l| re.is_match(l)) {
                return Ok(Some(rule));
            }
        }
    }
    Ok(None)
}

fn implementation_rule<'a>(
    unit: &SynthesizedUnit,
    profile: &'a DbProfile,
) -> Result<Option<&'a crate::profile::AnchorRule>> {
    let plain = |r: &&crate::profile::AnchorRule| {
        r.role == UnitRole::Implementation && r.entry_pattern.is_none()
    };
    for rule in profile.registration_patterns.iter().filter(plain) {
        if rule.globs()?.is_match(&unit.file_path) {
            return Ok(Some(rule));
        }
    }
    Ok(None)
}

fn anchored(file: &str, rule: &crate::profile::AnchorRule, text: &str) -> CodeEdit {
    let mode = match rule.position {
        AnchorPosition::Before => EditMode::InsertBefore,
        AnchorPosition::After => EditMode::InsertAfter,
    };
    CodeEdit::at_rule(file, rule.id.clone(), mode, text)
}

/// Places units into the repository: registration entries go to their
/// table anchor, other units to the implementation anchor of their file
/// (or the end of the file), and units for missing files create them.
pub fn units_to_edits(
    units: &[SynthesizedUnit],
    root: &Path,
    profile: &DbProfile,
) -> Result<Vec<CodeEdit>> {
    let mut edits: Vec<CodeEdit> = Vec::new();
    for unit in units {
        let text = unit.code_text.trim_end_matches('\n');
        let path = root.join(&unit.file_path);
        if !path.exists() {
            match edits
                .iter_mut()
                .find(|e| e.mode == EditMode::CreateFile && e.file == unit.file_path)
            {
                Some(e) => {
                    e.text.push_str("\n\n");
                    e.text.push_str(text);
                }
                None => edits.push(CodeEdit::create(unit.file_path.clone(), text)),
            }
            continue;
        }
        let edit = if let Some(rule) = registration_rule(unit, profile)? {
            anchored(&unit.file_path, rule, text)
        } else if let Some(rule) = implementation_rule(unit, profile)? {
            anchored(&unit.file_path, rule, &format!("{text}\n"))
        } else {
            let existing = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            CodeEdit::at_line(
                unit.file_path.clone(),
                existing.lines().count() + 1,
                EditMode::InsertBefore,
                format!("\n{text}"),
            )
        };
        edits.push(edit);
    }
    Ok(edits)
}

/// Contents of `synthesis_attempt.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisAttempt {
    pub version: u32,
    pub function_name: String,
    pub attempt: usize,
    pub decision: ModeDecision,
    pub candidates: Vec<Vec<SynthesizedUnit>>,
    pub drops: Vec<String>,
    pub merged: Vec<SynthesizedUnit>,
    pub edits: Vec<CodeEdit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SynthesisAttempt {
    pub fn succeeded(&self) -> bool {
        self.error.is_none() && !self.merged.is_empty()
    }
}

/// Everything one synthesis attempt draws on.
pub struct AttemptInput<'a> {
    pub decl: &'a FunctionDeclaration,
    pub root: &'a Path,
    pub profile: &'a DbProfile,
    pub gateway: &'a Gateway,
    pub fill: &'a FillContext,
    /// Unit locations of existing functions of the same category.
    pub locations: &'a [String],
    pub notes: &'a [ContextNote],
    pub feedback: &'a [String],
    pub samples: usize,
    pub is_global: &'a dyn Fn(&str) -> bool,
}

/// Decides the mode, generates units and turns them into edits. Failures
/// are recorded in the returned document and counted in `state`.
pub fn run_attempt(
    state: &mut ModeState,
    attempt: usize,
    input: &AttemptInput<'_>,
) -> SynthesisAttempt {
    let decision = state.decide();
    let mut doc = SynthesisAttempt {
        version: SCHEMA_VERSION,
        function_name: input.decl.name.clone(),
        attempt,
        decision,
        candidates: vec![],
        drops: vec![],
        merged: vec![],
        edits: vec![],
        error: None,
    };
    let generated = match decision.mode {
        SynthesisMode::FillInBlank => fill_blanks(
            input.decl,
            input.fill,
            input.gateway,
            input.samples,
            input.profile,
            input.is_global,
            input.notes,
            input.feedback,
        )
        .map(|out| {
            doc.drops = out.drops;
            doc.candidates = out.candidates;
            self_consistency_merge(&doc.candidates)
        }),
        SynthesisMode::FromScratch => synthesize_from_scratch(
            input.decl,
            input.fill.plan.as_ref(),
            &input.fill.references,
            input.locations,
            input.gateway,
            input.profile,
            input.notes,
            input.feedback,
        )
        .inspect(|units| doc.candidates = vec![units.clone()]),
    };
    match generated.and_then(|merged| {
        let edits = units_to_edits(&merged, input.root, input.profile)?;
        Ok((merged, edits))
    }) {
        Ok((merged, edits)) => {
            doc.merged = merged;
            doc.edits = edits;
        }
        Err(e) => {
            log::warn!(
                "synthesis attempt {attempt} for {} failed: {e}",
                input.decl.name
            );
            doc.error = Some(e.to_string());
            state.record_failure();
        }
    }
    doc
}
