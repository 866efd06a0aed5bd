//! Template filling, candidate parsing and self-consistency merging.

use std::collections::BTreeSet;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{ContextNote, SynthesizedUnit, UnitOrigin};
use crate::characterize::prune::RenamedUnit;
use crate::characterize::rank_templates;
use crate::characterize::{CharacterizationDoc, FunctionDeclaration, PrunedUnit, ReferenceUnit};
use crate::lexer;
use crate::llm::{extract_json, Gateway};
use crate::planning::CodingPlan;
use crate::profile::DbProfile;
use crate::util::is_contained_relative;
use crate::{Error, Result};

/// Default number of samples per fill request.
pub const DEFAULT_SAMPLES: usize = 3;

fn slot_regex() -> Regex {
    Regex::new(r"\{\{SLOT_\d+\}\}").expect("static regex")
}

/// Top-`k` templates of the declaration's group. Templates of the exact
/// group (category and argument types) are preferred; otherwise any
/// template of the same category is eligible.
pub fn retrieve_templates(
    decl: &FunctionDeclaration,
    ch: &CharacterizationDoc,
    k: usize,
) -> Vec<PrunedUnit> {
    if k == 0 {
        return vec![];
    }
    let exact = decl.group_key().label();
    let mut pool: Vec<PrunedUnit> = ch
        .pruned_units
        .iter()
        .filter(|u| u.origin_group == exact)
        .cloned()
        .collect();
    if pool.is_empty() {
        let prefix = format!("{}(", decl.category);
        pool = ch
            .pruned_units
            .iter()
            .filter(|u| u.origin_group.starts_with(&prefix))
            .cloned()
            .collect();
    }
    rank_templates(&mut pool);
    pool.truncate(k);
    pool
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FillContext {
    pub templates: Vec<PrunedUnit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<CodingPlan>,
    pub references: Vec<ReferenceUnit>,
}

fn is_renamed_local(t: &str) -> bool {
    t.len() > 1 && t.starts_with('v') && t[1..].bytes().all(|b| b.is_ascii_digit())
}

fn token_matches(template: &str, code: &str) -> bool {
    template == code || (is_renamed_local(template) && is_renamed_local(code))
}

/// Fixed token runs of a rendered template, in order.
pub fn template_runs(template_text: &str) -> Vec<Vec<String>> {
    slot_regex()
        .split(template_text)
        .map(|seg| {
            lexer::tokens(seg)
                .into_iter()
                .map(|t| t.text)
                .collect::<Vec<_>>()
        })
        .filter(|run| !run.is_empty())
        .collect()
}

fn find_run(code: &[String], run: &[String], from: usize) -> Option<usize> {
    if run.len() > code.len() {
        return None;
    }
    (from..=code.len() - run.len())
        .find(|&s| run.iter().zip(&code[s..]).all(|(t, c)| token_matches(t, c)))
}

/// Checks that `code` fills `template_text`: no slot marker is left and
/// every fixed run appears, in order, in the renamed token stream. Local
/// names compare equal to any other renamed local.
pub fn check_template_shape(
    template_text: &str,
    code: &str,
    is_global: &dyn Fn(&str) -> bool,
) -> std::result::Result<(), String> {
    if slot_regex().is_match(code) {
        return Err("placeholder left unfilled".into());
    }
    let renamed = RenamedUnit::new(code, is_global);
    let mut cursor = 0;
    for run in template_runs(template_text) {
        match find_run(&renamed.tokens, &run, cursor) {
            Some(at) => cursor = at + run.len(),
            None => return Err(format!("template tokens altered near `{}`", run.join(" "))),
        }
    }
    Ok(())
}

#[derive(Deserialize)]
struct RawUnit {
    unit_name: String,
    file_path: String,
    code: String,
    #[serde(default)]
    template: Option<usize>,
}

#[derive(Deserialize)]
struct RawUnits {
    units: Vec<RawUnit>,
}

/// A parsed unit with the template it claims to fill.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedUnit {
    pub unit: SynthesizedUnit,
    pub template: Option<usize>,
}

/// Parses a code reply into units with valid names and file paths.
pub fn parse_units(
    reply: &str,
    origin: UnitOrigin,
    profile: &DbProfile,
) -> std::result::Result<Vec<ParsedUnit>, String> {
    let value = extract_json(reply).ok_or_else(|| "reply contains no JSON".to_string())?;
    let raw = match value {
        serde_json::Value::Array(_) => serde_json::from_value::<Vec<RawUnit>>(value),
        other => serde_json::from_value::<RawUnits>(other).map(|r| r.units),
    }
    .map_err(|e| format!("units do not match the schema: {e}"))?;
    if raw.is_empty() {
        return Err("reply lists no units".into());
    }
    let sources = profile.source_set().map_err(|e| e.to_string())?;
    let mut names = BTreeSet::new();
    let mut out = Vec::with_capacity(raw.len());
    for r in raw {
        if r.code.trim().is_empty() {
            return Err(format!("unit `{}` has empty code", r.unit_name));
        }
        if !names.insert(r.unit_name.clone()) {
            return Err(format!("unit `{}` appears twice", r.unit_name));
        }
        if !is_contained_relative(&r.file_path) || !sources.is_match(&r.file_path) {
            return Err(format!(
                "unit `{}` targets invalid path `{}`",
                r.unit_name, r.file_path
            ));
        }
        out.push(ParsedUnit {
            unit: SynthesizedUnit {
                unit_name: r.unit_name,
                file_path: r.file_path,
                code_text: r.code,
                origin,
                sample_votes: 1,
            },
            template: r.template,
        });
    }
    Ok(out)
}

pub(crate) fn push_context(
    user: &mut String,
    plan: Option<&CodingPlan>,
    references: &[ReferenceUnit],
    notes: &[ContextNote],
    feedback: &[String],
) {
    if let Some(plan) = plan {
        user.push_str("\nPlan:\n");
        for u in &plan.units {
            user.push_str(&format!("- unit {} in {}\n", u.unit_name, u.file_path));
            for b in &u.blocks {
                if b.candidate_refs.is_empty() {
                    user.push_str(&format!("  - {}\n", b.description));
                } else {
                    user.push_str(&format!(
                        "  - {} (uses {})\n",
                        b.description,
                        b.candidate_refs.join(", ")
                    ));
                }
            }
        }
    }
    if !references.is_empty() {
        user.push_str("\nReference units:\n");
        for r in references {
            user.push_str(&format!(
                "// {} ({:?}, {})\n{}\n",
                r.name,
                r.kind,
                r.file,
                r.pruned_content.trim_end()
            ));
        }
    }
    for n in notes {
        user.push_str(&format!("\n{}:\n{}\n", n.title, n.text.trim_end()));
    }
    if !feedback.is_empty() {
        user.push_str("\nPrevious attempt failed:\n");
        for f in feedback {
            user.push_str(&format!("- {f}\n"));
        }
    }
}

pub(crate) const UNITS_REPLY_FORMAT: &str = "Reply with one JSON object {\"units\": [...]}. Each unit has \"unit_name\", \
     \"file_path\" (relative to the repository root) and \"code\", the complete text to insert. The registration entry \
     of the function is its own unit.";

fn fill_prompt(
    gateway: &Gateway,
    decl: &FunctionDeclaration,
    ctx: &FillContext,
    notes: &[ContextNote],
    feedback: &[String],
) -> crate::llm::Prompt {
    let system = format!(
        "You add a new native SQL function to an existing database code base by filling code templates.\n\
         Task: code\n\
         Keep every fixed token of a template you use and replace each {{{{SLOT_N}}}} marker. \
         Give the index of the filled template in \"template\". {UNITS_REPLY_FORMAT}"
    );
    let mut user = format!(
        "Function: {}\nMode: fill_in_blank\nSignature: {}\nCategory: {}\nDescription: {}\n",
        decl.name,
        decl.signature(),
        decl.category,
        decl.description
    );
    if !ctx.templates.is_empty() {
        user.push_str("\nTemplates:\n");
        for (i, t) in ctx.templates.iter().enumerate() {
            let role = match t.role {
                crate::profile::UnitRole::Registration => "registration",
                crate::profile::UnitRole::Implementation => "implementation",
            };
            user.push_str(&format!(
                "[{i}] {role} in {} (support {})\n{}\n",
                t.file,
                t.support,
                t.template_text.trim_end()
            ));
        }
    }
    push_context(
        &mut user,
        ctx.plan.as_ref(),
        &ctx.references,
        notes,
        feedback,
    );
    gateway.prompt("code", system, user)
}

/// Parsed candidate sets plus the reasons rejected samples were dropped.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FillOutcome {
    pub candidates: Vec<Vec<SynthesizedUnit>>,
    pub drops: Vec<String>,
}

/// Validates one sample of a fill request.
fn check_fill_sample(
    parsed: &[ParsedUnit],
    ctx: &FillContext,
    is_global: &dyn Fn(&str) -> bool,
) -> std::result::Result<(), String> {
    for p in parsed {
        if p.unit.code_text.contains("{{SLOT_") {
            return Err(format!(
                "unit {}: placeholder left unfilled",
                p.unit.unit_name
            ));
        }
        if let Some(t) = p.template {
            let template = ctx
                .templates
                .get(t)
                .ok_or_else(|| format!("unit {} names unknown template {t}", p.unit.unit_name))?;
            check_template_shape(&template.template_text, &p.unit.code_text, is_global)
                .map_err(|e| format!("unit {}: {e}", p.unit.unit_name))?;
        }
    }
    if let Some(plan) = &ctx.plan {
        let have: BTreeSet<&str> = parsed.iter().map(|p| p.unit.unit_name.as_str()).collect();
        if let Some(missing) = plan
            .units
            .iter()
            .find(|u| !have.contains(u.unit_name.as_str()))
        {
            return Err(format!("planned unit {} is missing", missing.unit_name));
        }
    }
    Ok(())
}

/// Samples `samples` fills of the templates and keeps the well-shaped ones.
#[allow(clippy::too_many_arguments)]
pub fn fill_blanks(
    decl: &FunctionDeclaration,
    ctx: &FillContext,
    gateway: &Gateway,
    samples: usize,
    profile: &DbProfile,
    is_global: &dyn Fn(&str) -> bool,
    notes: &[ContextNote],
    feedback: &[String],
) -> Result<FillOutcome> {
    if samples == 0 {
        return Err(Error::Precondition(
            "sample count must be at least 1".into(),
        ));
    }
    let replies =
        gateway.complete_many(&fill_prompt(gateway, decl, ctx, notes, feedback), samples)?;
    let mut out = FillOutcome::default();
    for (i, slot) in replies.slots.into_iter().enumerate() {
        let checked = slot
            .and_then(|text| parse_units(&text, UnitOrigin::BlankFilled, profile))
            .and_then(|parsed| check_fill_sample(&parsed, ctx, is_global).map(|_| parsed));
        match checked {
            Ok(parsed) => out
                .candidates
                .push(parsed.into_iter().map(|p| p.unit).collect()),
            Err(e) => out.drops.push(format!("sample {i}: {e}")),
        }
    }
    for d in &out.drops {
        log::warn!("dropped fill candidate for {}: {d}", decl.name);
    }
    if out.candidates.is_empty() {
        return Err(Error::FillFailed(format!(
            "all {samples} samples for {} were rejected: {}",
            decl.name,
            out.drops.join("; ")
        )));
    }
    Ok(out)
}

/// Whitespace-collapsed, comment-free form used to compare variants.
pub fn normalize_code(code: &str) -> String {
    lexer::tokens(code)
        .into_iter()
        .map(|t| t.text)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Majority vote per unit name across candidate sets. Ties go to the
/// variant seen first; units keep the order of their first appearance.
pub fn self_consistency_merge(candidates: &[Vec<SynthesizedUnit>]) -> Vec<SynthesizedUnit> {
    let mut order: Vec<&str> = Vec::new();
    for set in candidates {
        for u in set {
            if !order.contains(&u.unit_name.as_str()) {
                order.push(&u.unit_name);
            }
        }
    }
    order
        .into_iter()
        .map(|name| {
            // (normalized form, first variant, votes) in first-seen order.
            let mut variants: Vec<(String, &SynthesizedUnit, usize)> = Vec::new();
            for u in candidates
                .iter()
                .flat_map(|set| set.iter().filter(|u| u.unit_name == name))
            {
                let key = normalize_code(&u.code_text);
                match variants.iter_mut().find(|(k, _, _)| *k == key) {
                    Some(v) => v.2 += 1,
                    None => variants.push((key, u, 1)),
                }
            }
            let best = variants
                .iter()
                .enumerate()
                .max_by(|(ia, a), (ib, b)| a.2.cmp(&b.2).then(ib.cmp(ia)))
                .map(|(_, v)| v)
                .expect("at least one variant");
            SynthesizedUnit {
                sample_votes: best.2,
                ..best.1.clone()
            }
        })
        .collect()
}
