//! One synthesis session: built-in tools over shared session state and the
//! controller-driven loop around them.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::controller::next_tool;
use super::{
    ArgKind, ArgSpec, MemoryPool, Registry, ToolOutput, ToolSpec, ToolStatus, TrajectoryRecord,
    TrajectoryStep,
};
use crate::characterize::{
    characterize_index, expand_reference, CharacterizationDoc, CharacterizeConfig,
    FunctionDeclaration, PrunedUnit, ReferenceUnit,
};
use crate::exec::Exec;
use crate::index::{
    apply_edits, entry_source, list_source_files, lookup_symbol, rollback, scan_repo_with,
    RollbackToken, SymbolIndex,
};
use crate::llm::Gateway;
use crate::planning::{
    category_unit_locations, gather_category_references, plan_function, CodingPlan, PlanningConfig,
    PlansDoc,
};
use crate::profile::DbProfile;
use crate::synthesis::{
    retrieve_templates, run_attempt, AttemptInput, ContextNote, FillContext, ModeState,
    SynthesisMode, SynthesizedUnit, DEFAULT_DECAY, DEFAULT_FLOOR, DEFAULT_SAMPLES,
};
use crate::util::{is_contained_relative, sha256_hex};
use crate::validation::{
    load_suite, run_validation_pipeline, PipelineInput, TestCase, ValidationReport, Verdict,
};
use crate::{Error, Result};

pub const DEFAULT_MAX_STEPS: usize = 30;
/// Context notes kept for prompts; older ones are dropped first.
const MAX_NOTES: usize = 6;
const MAX_SEARCH_HITS: usize = 20;
const MAX_READ_LINES: usize = 200;
const MAX_FEEDBACK: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub max_steps: usize,
    pub samples: usize,
    pub top_k: usize,
    pub planning: PlanningConfig,
    pub decay: f64,
    pub floor: f64,
    pub seed: u64,
    /// Leave the edits of a failed session in place.
    pub keep_failed: bool,
    pub characterize: CharacterizeConfig,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            max_steps: DEFAULT_MAX_STEPS,
            samples: DEFAULT_SAMPLES,
            top_k: 3,
            planning: PlanningConfig::default(),
            decay: DEFAULT_DECAY,
            floor: DEFAULT_FLOOR,
            seed: 0,
            keep_failed: false,
            characterize: CharacterizeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisRequest {
    pub declaration: FunctionDeclaration,
    pub repo_root: PathBuf,
    pub profile: DbProfile,
}

/// Where session documents go. Without a directory nothing is written.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub dir: Option<PathBuf>,
}

impl Artifacts {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Artifacts {
            dir: Some(dir.into()),
        }
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<()> {
        match &self.dir {
            Some(d) => crate::util::write_json(&d.join(rel), value),
            None => Ok(()),
        }
    }

    pub fn write_text(&self, rel: &str, text: &str) -> Result<()> {
        let Some(d) = &self.dir else { return Ok(()) };
        let path = d.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

/// Mutable state the tools share during one session.
pub struct SessionState<'a> {
    pub decl: FunctionDeclaration,
    pub root: PathBuf,
    pub profile: DbProfile,
    pub gateway: &'a Gateway,
    pub cfg: SessionConfig,
    pub artifacts: Artifacts,
    pub index: SymbolIndex,
    pub characterization: CharacterizationDoc,
    pub suite: Vec<TestCase>,
    pub references: Vec<ReferenceUnit>,
    pub templates: Vec<PrunedUnit>,
    pub locations: Vec<String>,
    pub plan: Option<CodingPlan>,
    pub plans: Option<PlansDoc>,
    pub notes: Vec<ContextNote>,
    /// Diagnostics of the last failed validation, shown to the next attempt.
    pub feedback: Vec<String>,
    pub mode: ModeState,
    pub attempts: usize,
    pub applied: Option<(RollbackToken, Vec<SynthesizedUnit>)>,
    pub last_report: Option<ValidationReport>,
    /// Set once the permanent switch to writing from scratch was logged.
    pub switched_to_scratch: bool,
}

impl<'a> SessionState<'a> {
    /// Scans and characterizes the repository for `request`.
    pub fn prepare(
        request: &SynthesisRequest,
        gateway: &'a Gateway,
        cfg: &SessionConfig,
        artifacts: Artifacts,
    ) -> Result<Self> {
        request.declaration.validate()?;
        let root = &request.repo_root;
        let exec = Exec::default();
        let index = scan_repo_with(root, &request.profile, exec)?;
        let characterization =
            characterize_index(root, &request.profile, &index, &cfg.characterize, exec)?;
        let decl = request.declaration.clone();
        let suite = load_suite(root, &request.profile)?;
        Ok(SessionState {
            references: gather_category_references(&decl, &characterization),
            templates: retrieve_templates(&decl, &characterization, cfg.top_k),
            locations: category_unit_locations(&decl, &characterization),
            mode: ModeState::new(cfg.decay, cfg.floor, cfg.seed)?,
            decl,
            root: root.clone(),
            profile: request.profile.clone(),
            gateway,
            cfg: cfg.clone(),
            artifacts,
            index,
            characterization,
            suite,
            plan: None,
            plans: None,
            notes: vec![],
            feedback: vec![],
            attempts: 0,
            applied: None,
            last_report: None,
            switched_to_scratch: false,
        })
    }

    /// Replaces the session root in free text so prompts and documents do
    /// not depend on where the repository lives.
    pub fn scrub(&self, text: &str) -> String {
        let mut out = text.to_string();
        let mut roots = vec![self.root.display().to_string()];
        if let Ok(c) = self.root.canonicalize() {
            roots.push(c.display().to_string());
        }
        roots.sort_by_key(|r| std::cmp::Reverse(r.len()));
        for r in roots.iter().filter(|r| r.len() > 1) {
            out = out.replace(&format!("{r}/"), "").replace(r.as_str(), ".");
        }
        out
    }

    fn add_note(&mut self, title: String, text: String) {
        self.notes.retain(|n| n.title != title);
        self.notes.push(ContextNote { title, text });
        if self.notes.len() > MAX_NOTES {
            self.notes.remove(0);
        }
    }

    fn roll_back_applied(&mut self) -> Result<()> {
        if let Some((token, _)) = self.applied.take() {
            rollback(&token)?;
        }
        Ok(())
    }
}

fn arg_str<'m>(args: &'m Map<String, Value>, name: &str) -> Option<&'m str> {
    args.get(name).and_then(Value::as_str)
}

fn arg_usize(args: &Map<String, Value>, name: &str) -> Option<usize> {
    args.get(name)
        .and_then(Value::as_i64)
        .map(|v| v.max(0) as usize)
}

fn plan_agent(s: &mut SessionState<'_>, args: &Map<String, Value>) -> Result<ToolOutput> {
    let mut cfg = s.cfg.planning;
    if let Some(n) = arg_usize(args, "plan_num") {
        cfg.num_plans = n.clamp(1, 10);
    }
    let doc = match plan_function(
        &s.decl,
        &s.characterization,
        &s.index,
        &s.root,
        &s.profile,
        s.gateway,
        &cfg,
    ) {
        Ok(d) => d,
        Err(e) => {
            let msg = s.scrub(&e.to_string());
            return Ok(ToolOutput::new(
                ToolStatus::Failure,
                Value::String(msg.clone()),
                msg,
            ));
        }
    };
    s.artifacts.write_json("plans.json", &doc)?;
    s.plan = doc.best().cloned();
    let summary = match (&s.plan, doc.scores.first()) {
        (Some(p), Some(score)) => format!(
            "{} plan(s) kept, best has {} unit(s) with score {:.2}",
            doc.plans.len(),
            p.units.len(),
            score.total
        ),
        _ => "no plan survived filtering".to_string(),
    };
    let status = if s.plan.is_some() {
        ToolStatus::Success
    } else {
        ToolStatus::Failure
    };
    let payload = serde_json::to_value(&doc)?;
    s.plans = Some(doc);
    Ok(ToolOutput::new(status, payload, summary))
}

fn code_agent(s: &mut SessionState<'_>, _args: &Map<String, Value>) -> Result<ToolOutput> {
    s.roll_back_applied()?;
    s.attempts += 1;
    let fill = FillContext {
        templates: s.templates.clone(),
        plan: s.plan.clone(),
        references: s.references.clone(),
    };
    let index = &s.index;
    let is_global = |n: &str| index.resolves(n);
    let input = AttemptInput {
        decl: &s.decl,
        root: &s.root,
        profile: &s.profile,
        gateway: s.gateway,
        fill: &fill,
        locations: &s.locations,
        notes: &s.notes,
        feedback: &s.feedback,
        samples: s.cfg.samples,
        is_global: &is_global,
    };
    let mut doc = run_attempt(&mut s.mode, s.attempts, &input);
    if doc.succeeded() {
        match apply_edits(&s.root, &s.profile, &doc.edits) {
            Ok(token) => s.applied = Some((token, doc.merged.clone())),
            Err(e) => {
                doc.error = Some(e.to_string());
                s.mode.record_failure();
            }
        }
    }
    if let Some(err) = doc.error.take() {
        doc.error = Some(s.scrub(&err));
    }
    let mut summary = format!(
        "attempt {} ({}, p={})",
        doc.attempt, doc.decision.mode, doc.decision.probability
    );
    if doc.decision.absorbed && !s.switched_to_scratch {
        s.switched_to_scratch = true;
        log::warn!(
            "{}: mode switch fill_in_blank -> from_scratch after {} failures",
            s.decl.name,
            doc.decision.failures
        );
        summary.push_str(", mode switch fill_in_blank -> from_scratch");
    }
    s.artifacts
        .write_json(&format!("attempts/attempt_{:02}.json", doc.attempt), &doc)?;
    s.artifacts.write_json("synthesis_attempt.json", &doc)?;
    let status = match &doc.error {
        None => {
            let files: std::collections::BTreeSet<&str> =
                doc.merged.iter().map(|u| u.file_path.as_str()).collect();
            summary.push_str(&format!(
                ": applied {} unit(s) to {}",
                doc.merged.len(),
                files.into_iter().collect::<Vec<_>>().join(", ")
            ));
            ToolStatus::Success
        }
        Some(e) => {
            summary.push_str(&format!(": failed: {}", first_line(e)));
            ToolStatus::Failure
        }
    };
    let payload = serde_json::to_value(&doc)?;
    Ok(ToolOutput::new(status, payload, summary))
}

fn first_line(s: &str) -> &str {
    s.lines().next().unwrap_or("")
}

fn validate_agent(s: &mut SessionState<'_>, _args: &Map<String, Value>) -> Result<ToolOutput> {
    let Some((token, units)) = &s.applied else {
        return Ok(ToolOutput::new(
            ToolStatus::Failure,
            Value::Null,
            "nothing applied to validate",
        ));
    };
    let files = token.touched_files();
    let run = run_validation_pipeline(PipelineInput {
        root: &s.root,
        profile: &s.profile,
        decl: &s.decl,
        units,
        files: &files,
        suite: &s.suite,
        gateway: s.gateway,
    });
    let mut report = run.report;
    for o in &mut report.outcomes {
        for d in &mut o.diagnostics {
            d.message = s.scrub(&d.message);
        }
    }
    s.artifacts.write_json("validation_report.json", &report)?;
    s.artifacts
        .write_text("compliance_stderr.txt", &s.scrub(&run.compliance_stderr))?;
    if let Some(tests) = &run.tests {
        s.artifacts.write_json("semantic_tests.json", tests)?;
    }
    let stage = report
        .final_stage_reached
        .map(|st| format!("{st:?}").to_lowercase())
        .unwrap_or_default();
    let out = if report.verdict.is_pass() {
        s.feedback.clear();
        ToolOutput::new(
            ToolStatus::Success,
            serde_json::to_value(&report)?,
            "validation passed all three stages",
        )
    } else {
        s.mode.record_failure();
        s.feedback = report
            .failure_feedback()
            .iter()
            .take(MAX_FEEDBACK)
            .map(|d| {
                let class = d.error_class.map(|c| c.as_str()).unwrap_or("other");
                match (&d.file, d.line) {
                    (Some(f), Some(l)) => format!("{stage} {class} at {f}:{l}: {}", d.message),
                    (Some(f), None) => format!("{stage} {class} in {f}: {}", d.message),
                    _ => format!("{stage} {class}: {}", d.message),
                }
            })
            .collect();
        let classes: std::collections::BTreeSet<&str> = report
            .failure_feedback()
            .iter()
            .filter_map(|d| d.error_class.map(|c| c.as_str()))
            .collect();
        let summary = format!(
            "validation failed at {stage}: {}",
            classes.into_iter().collect::<Vec<_>>().join(", ")
        );
        ToolOutput::new(ToolStatus::Failure, serde_json::to_value(&report)?, summary)
    };
    s.last_report = Some(report);
    Ok(out)
}

fn search_repo(s: &mut SessionState<'_>, args: &Map<String, Value>) -> Result<ToolOutput> {
    let query = arg_str(args, "query").unwrap_or_default().to_string();
    if query.trim().is_empty() {
        return Ok(ToolOutput::new(
            ToolStatus::Failure,
            Value::Null,
            "empty search query",
        ));
    }
    let mut hits = Vec::new();
    for rel in list_source_files(&s.root, &s.profile)? {
        let path = s.root.join(&rel);
        let Ok(text) = std::fs::read_to_string(&path) else {
            continue;
        };
        for (i, line) in text.lines().enumerate() {
            if line.contains(&query) {
                hits.push(format!("{rel}:{}: {}", i + 1, line.trim()));
            }
        }
    }
    let total = hits.len();
    hits.truncate(MAX_SEARCH_HITS);
    let summary = format!("{total} hit(s) for `{query}`");
    if !hits.is_empty() {
        s.add_note(format!("Search results for `{query}`"), hits.join("\n"));
    }
    let status = if total > 0 {
        ToolStatus::Success
    } else {
        ToolStatus::Info
    };
    Ok(ToolOutput::new(
        status,
        json!({ "hits": hits, "total": total }),
        summary,
    ))
}

fn read_file(s: &mut SessionState<'_>, args: &Map<String, Value>) -> Result<ToolOutput> {
    let rel = arg_str(args, "path").unwrap_or_default().to_string();
    if !is_contained_relative(&rel) {
        return Ok(ToolOutput::new(
            ToolStatus::Failure,
            Value::Null,
            format!("path `{rel}` is outside the repository"),
        ));
    }
    let Ok(text) = std::fs::read_to_string(s.root.join(&rel)) else {
        return Ok(ToolOutput::new(
            ToolStatus::Failure,
            Value::Null,
            format!("cannot read `{rel}`"),
        ));
    };
    let lines: Vec<&str> = text.lines().collect();
    let start = arg_usize(args, "start").unwrap_or(1).max(1);
    let end = arg_usize(args, "end")
        .unwrap_or(lines.len())
        .min(lines.len())
        .min(start + MAX_READ_LINES - 1);
    let excerpt = if start <= end {
        lines[start - 1..end].join("\n")
    } else {
        String::new()
    };
    let title = format!("File {rel} lines {start}-{end}");
    s.add_note(title.clone(), excerpt.clone());
    Ok(ToolOutput::new(
        ToolStatus::Success,
        json!({ "path": rel, "start": start, "end": end, "text": excerpt }),
        title,
    ))
}

fn expand_reference_tool(
    s: &mut SessionState<'_>,
    args: &Map<String, Value>,
) -> Result<ToolOutput> {
    let name = arg_str(args, "name").unwrap_or_default().to_string();
    let text = match s.references.iter().find(|r| r.name == name) {
        Some(r) => expand_reference(r, &s.index),
        None => match lookup_symbol(&s.index, &name).first() {
            Some(entry) => entry_source(&s.index, entry),
            None => Err(Error::StaleReference(format!(
                "`{name}` is not in the index"
            ))),
        },
    };
    match text {
        Ok(t) => {
            s.add_note(format!("Expanded reference {name}"), t.clone());
            Ok(ToolOutput::new(
                ToolStatus::Success,
                json!({ "name": name, "text": t }),
                format!("expanded {name}"),
            ))
        }
        Err(e) => {
            let msg = s.scrub(&e.to_string());
            Ok(ToolOutput::new(
                ToolStatus::Failure,
                Value::String(msg.clone()),
                msg,
            ))
        }
    }
}

fn stop(_s: &mut SessionState<'_>, _args: &Map<String, Value>) -> Result<ToolOutput> {
    let mut out = ToolOutput::new(
        ToolStatus::Success,
        json!({ "stop": true }),
        "session stopped",
    );
    out.terminal = true;
    Ok(out)
}

/// The shipped tool set.
pub fn builtin_registry<'a>() -> Registry<SessionState<'a>> {
    let mut r = Registry::new();
    let specs: Vec<ToolSpec<SessionState<'a>>> = vec![
        ToolSpec::new(
            "plan_agent",
            "Generate pseudo-based plans to outline and instruct synthesis",
            vec![ArgSpec::optional("plan_num", ArgKind::Int)],
            plan_agent,
        ),
        ToolSpec::new(
            "code_agent",
            "Synthesize the function units (template filling or from scratch) and apply them",
            vec![],
            code_agent,
        ),
        ToolSpec::new(
            "validate_agent",
            "Run syntax, compliance and semantic validation on the applied units",
            vec![],
            validate_agent,
        ),
        ToolSpec::new(
            "search_repo",
            "Search the repository sources for a literal string",
            vec![ArgSpec::required("query", ArgKind::Str)],
            search_repo,
        ),
        ToolSpec::new(
            "read_file",
            "Read lines of a repository file",
            vec![
                ArgSpec::required("path", ArgKind::Str),
                ArgSpec::optional("start", ArgKind::Int),
                ArgSpec::optional("end", ArgKind::Int),
            ],
            read_file,
        ),
        ToolSpec::new(
            "expand_reference",
            "Show the full source of a reference unit",
            vec![ArgSpec::required("name", ArgKind::Str)],
            expand_reference_tool,
        ),
        ToolSpec::new("stop", "Finish the session", vec![], stop),
    ];
    for spec in specs {
        r.register(spec).expect("built-in tool names are unique");
    }
    r
}

#[derive(Debug, Clone)]
pub struct SessionOutcome {
    pub record: TrajectoryRecord,
    /// Units left applied after a passing session.
    pub units: Vec<SynthesizedUnit>,
    pub last_report: Option<ValidationReport>,
    pub forced_stop: bool,
    pub final_mode: SynthesisMode,
    pub attempts: usize,
}

fn args_digest(args: &Map<String, Value>) -> String {
    let text = serde_json::to_string(args).unwrap_or_default();
    sha256_hex(text.as_bytes())[..16].to_string()
}

/// Pass when the last validation passed and nothing was synthesized after it.
fn session_verdict(steps: &[TrajectoryStep]) -> Verdict {
    let last_validate = steps.iter().rposition(|s| s.tool == "validate_agent");
    let last_code = steps.iter().rposition(|s| s.tool == "code_agent");
    match last_validate {
        Some(v) if steps[v].outcome == ToolStatus::Success && last_code.is_none_or(|c| c < v) => {
            Verdict::Pass
        }
        _ => Verdict::Fail,
    }
}

fn summarize(
    gateway: &Gateway,
    decl: &FunctionDeclaration,
    steps: &[TrajectoryStep],
    verdict: Verdict,
) -> String {
    let digest = format!(
        "{:?} after {} steps: {}",
        verdict,
        steps.len(),
        steps
            .iter()
            .map(|s| s.tool.as_str())
            .collect::<Vec<_>>()
            .join(" > ")
    );
    let system = "You summarize a finished tool-based synthesis session in two or three sentences for future \
                  sessions: what worked, what failed and which tools mattered.\nTask: summary"
        .to_string();
    let mut user = format!(
        "Function: {}\nCategory: {}\nVerdict: {verdict:?}\n\nSteps:\n",
        decl.name, decl.category
    );
    for (i, s) in steps.iter().enumerate() {
        user.push_str(&format!(
            "{}. {} [{}] {}\n",
            i + 1,
            s.tool,
            s.outcome.as_str(),
            s.summary_line
        ));
    }
    match gateway.complete(&gateway.prompt("summary", system, user)) {
        Ok(text) if !text.trim().is_empty() => text.trim().to_string(),
        Ok(_) => digest,
        Err(e) => {
            log::warn!("summary request failed ({e}); using the step digest");
            digest
        }
    }
}

/// Runs the tool loop: start with the coding tool, then let the controller
/// pick until it stops or `max_steps` is reached (a stop is then forced).
pub fn run_session<'g>(
    request: &SynthesisRequest,
    registry: &Registry<SessionState<'g>>,
    pool: &MemoryPool,
    gateway: &'g Gateway,
    cfg: &SessionConfig,
    artifacts: Artifacts,
) -> Result<SessionOutcome> {
    if cfg.max_steps == 0 {
        return Err(Error::Config("max_steps must be at least 1".into()));
    }
    if registry.is_empty() {
        return Err(Error::Config("tool registry is empty".into()));
    }
    let decl = &request.declaration;
    let mut state = SessionState::prepare(request, gateway, cfg, artifacts.clone())?;
    let references = pool.retrieve_reference_trajectories(&decl.category);
    let mut steps: Vec<TrajectoryStep> = Vec::new();
    let mut tool = "code_agent".to_string();
    let mut args = Map::new();
    let mut forced_stop = false;
    loop {
        let result = registry.route(&mut state, &tool, &args);
        log::info!(
            "{} step {}: {} [{}] {}",
            decl.name,
            steps.len() + 1,
            tool,
            result.status.as_str(),
            result.summary_line
        );
        steps.push(TrajectoryStep {
            tool: tool.clone(),
            args_digest: args_digest(&args),
            outcome: result.status,
            summary_line: state.scrub(&result.summary_line),
        });
        if tool == "stop" || result.terminal {
            break;
        }
        if steps.len() >= cfg.max_steps {
            log::warn!(
                "{}: step cap {} reached; forcing stop",
                decl.name,
                cfg.max_steps
            );
            forced_stop = true;
            tool = "stop".into();
            args = Map::new();
            continue;
        }
        let choice = next_tool(
            gateway,
            decl,
            &steps,
            &references,
            registry,
            state.mode.failures,
        );
        tool = choice.tool;
        args = choice.args;
    }

    let verdict = session_verdict(&steps);
    let summary = summarize(gateway, decl, &steps, verdict);
    let record = TrajectoryRecord::new(&decl.name, &decl.category, steps, summary, verdict);
    let units = match (&verdict, state.applied.take()) {
        (Verdict::Pass, Some((_, units))) => units,
        (_, Some((token, units))) => {
            if cfg.keep_failed {
                log::warn!("{}: keeping edits of the failed session", decl.name);
            } else {
                rollback(&token)?;
            }
            drop(units);
            vec![]
        }
        (_, None) => vec![],
    };
    artifacts.write_json("trajectory.json", &record)?;
    Ok(SessionOutcome {
        record,
        units,
        last_report: state.last_report,
        forced_stop,
        final_mode: if state.mode.absorbed {
            SynthesisMode::FromScratch
        } else {
            SynthesisMode::FillInBlank
        },
        attempts: state.attempts,
    })
}
