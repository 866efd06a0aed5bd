//! Coding plans: model-generated skeletons of the units a new function
//! needs, scored for faithfulness and simplicity and filtered before
//! synthesis uses them.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::characterize::{CharacterizationDoc, FunctionDeclaration, ReferenceUnit};
use crate::index::SymbolIndex;
use crate::llm::{extract_json, Gateway, Prompt};
use crate::profile::DbProfile;
use crate::util::is_contained_relative;
use crate::{Error, Result, SCHEMA_VERSION};

/// Default number of plans sampled per request.
pub const DEFAULT_NUM_PLANS: usize = 3;
/// Plans scoring below this are dropped.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanBlock {
    pub description: String,
    #[serde(default)]
    pub candidate_refs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedUnit {
    pub unit_name: String,
    pub file_path: String,
    /// The unit goes into a file that does not exist yet.
    #[serde(default)]
    pub create_file: bool,
    pub blocks: Vec<PlanBlock>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanProvenance {
    pub sample: usize,
    #[serde(default)]
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodingPlan {
    pub function_name: String,
    pub units: Vec<PlannedUnit>,
    #[serde(default)]
    pub provenance: PlanProvenance,
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl CodingPlan {
    /// Checks the structural invariants of a plan.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.units.is_empty() {
            return Err("plan lists no units".into());
        }
        let mut names = BTreeSet::new();
        for u in &self.units {
            if !is_identifier(&u.unit_name) {
                return Err(format!("unit name `{}` is not an identifier", u.unit_name));
            }
            if !names.insert(u.unit_name.as_str()) {
                return Err(format!("unit `{}` listed twice", u.unit_name));
            }
            if u.file_path.trim().is_empty() {
                return Err(format!("unit `{}` has no file path", u.unit_name));
            }
            if u.blocks.is_empty() {
                return Err(format!("unit `{}` has no blocks", u.unit_name));
            }
            if u.blocks.iter().any(|b| b.description.trim().is_empty()) {
                return Err(format!(
                    "unit `{}` has a block without description",
                    u.unit_name
                ));
            }
        }
        Ok(())
    }

    pub fn unit_names(&self) -> BTreeSet<&str> {
        self.units.iter().map(|u| u.unit_name.as_str()).collect()
    }

    /// Distinct candidate references across all blocks, sorted.
    pub fn candidate_refs(&self) -> BTreeSet<&str> {
        self.units
            .iter()
            .flat_map(|u| u.blocks.iter())
            .flat_map(|b| b.candidate_refs.iter().map(String::as_str))
            .collect()
    }
}

/// Relative importance of reference faithfulness, location faithfulness
/// and plan size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreWeights {
    pub references: f64,
    pub locations: f64,
    pub size: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        ScoreWeights {
            references: 0.4,
            locations: 0.4,
            size: 0.2,
        }
    }
}

impl ScoreWeights {
    pub fn scaled(self, factor: f64) -> Self {
        ScoreWeights {
            references: self.references * factor,
            locations: self.locations * factor,
            size: self.size * factor,
        }
    }
}

/// Raw defect counts of one plan.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanCounts {
    /// Distinct candidate references that resolve nowhere.
    pub bad_refs: usize,
    /// Units whose file location is invalid.
    pub bad_locations: usize,
    /// Units listed.
    pub units: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanScore {
    /// Index of the plan in the scored batch.
    pub sample: usize,
    pub counts: PlanCounts,
    pub refs_norm: f64,
    pub locations_norm: f64,
    pub size_norm: f64,
    pub total: f64,
}

/// Min-max normalisation inverted so the smallest count maps to 1.0. A
/// batch where every value is equal maps to 1.0 throughout.
fn inverted_min_max(values: &[usize]) -> Vec<f64> {
    let lo = values.iter().copied().min().unwrap_or(0);
    let hi = values.iter().copied().max().unwrap_or(0);
    if lo == hi {
        return vec![1.0; values.len()];
    }
    let span = (hi - lo) as f64;
    values
        .iter()
        .map(|&v| 1.0 - (v - lo) as f64 / span)
        .collect()
}

/// Scores a batch of defect counts; normalisation is relative to the batch.
pub fn score_counts(counts: &[PlanCounts], weights: ScoreWeights) -> Vec<PlanScore> {
    let refs = inverted_min_max(&counts.iter().map(|c| c.bad_refs).collect::<Vec<_>>());
    let locs = inverted_min_max(&counts.iter().map(|c| c.bad_locations).collect::<Vec<_>>());
    let size = inverted_min_max(&counts.iter().map(|c| c.units).collect::<Vec<_>>());
    counts
        .iter()
        .enumerate()
        .map(|(i, &c)| PlanScore {
            sample: i,
            counts: c,
            refs_norm: refs[i],
            locations_norm: locs[i],
            size_norm: size[i],
            total: weights.references * refs[i]
                + weights.locations * locs[i]
                + weights.size * size[i],
        })
        .collect()
}

/// Index of the best score. Totals within a relative 1e-9 of the maximum
/// count as tied and the earliest wins, so the choice survives the
/// rounding introduced by rescaling the weights.
pub fn best_score(scores: &[PlanScore]) -> Option<usize> {
    let max = scores
        .iter()
        .map(|s| s.total)
        .fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-9 * max.abs().max(1.0);
    scores.iter().position(|s| s.total >= max - tol)
}

/// Why a planned unit's location is rejected, if it is.
fn location_problem(
    unit: &PlannedUnit,
    root: &Path,
    sources: &globset::GlobSet,
) -> Option<&'static str> {
    if !is_contained_relative(&unit.file_path) {
        return Some("escapes the repository root");
    }
    if !sources.is_match(&unit.file_path) {
        return Some("is not a source file of the profile");
    }
    if !unit.create_file && !root.join(&unit.file_path).is_file() {
        return Some("does not exist and is not marked create_file");
    }
    None
}

/// Reference names are faithful when the index knows them or when they
/// name another unit of the same plan.
fn unresolvable_refs<'a>(plan: &'a CodingPlan, index: &SymbolIndex) -> BTreeSet<&'a str> {
    let own = plan.unit_names();
    plan.candidate_refs()
        .into_iter()
        .filter(|r| !index.resolves(r) && !own.contains(r))
        .collect()
}

pub fn count_plan_defects(
    plan: &CodingPlan,
    index: &SymbolIndex,
    root: &Path,
    profile: &DbProfile,
) -> Result<PlanCounts> {
    let sources = profile.source_set()?;
    Ok(PlanCounts {
        bad_refs: unresolvable_refs(plan, index).len(),
        bad_locations: plan
            .units
            .iter()
            .filter(|u| location_problem(u, root, &sources).is_some())
            .count(),
        units: plan.units.len(),
    })
}

/// Scores the plans of one batch against the repository.
pub fn score_plans(
    plans: &[CodingPlan],
    index: &SymbolIndex,
    root: &Path,
    profile: &DbProfile,
    weights: ScoreWeights,
) -> Result<Vec<PlanScore>> {
    if plans.is_empty() {
        return Err(Error::Precondition(
            "cannot score an empty plan batch".into(),
        ));
    }
    let counts = plans
        .iter()
        .map(|p| count_plan_defects(p, index, root, profile))
        .collect::<Result<Vec<_>>>()?;
    Ok(score_counts(&counts, weights))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilteredPlans {
    /// Surviving, sanitized plans ordered by score descending.
    pub plans: Vec<CodingPlan>,
    /// Scores of the surviving plans, aligned with `plans`.
    pub scores: Vec<PlanScore>,
    pub dropped: Vec<String>,
    /// One line per removed reference or unit.
    pub removals: Vec<String>,
}

/// Drops plans under `threshold` (keeping the best one if nothing would
/// survive), then strips unresolvable references and mislocated units.
pub fn sanitize_and_filter(
    plans: &[CodingPlan],
    scores: &[PlanScore],
    index: &SymbolIndex,
    root: &Path,
    profile: &DbProfile,
    threshold: f64,
) -> Result<FilteredPlans> {
    if plans.len() != scores.len() {
        return Err(Error::Precondition(format!(
            "{} plans but {} scores",
            plans.len(),
            scores.len()
        )));
    }
    let sources = profile.source_set()?;
    let mut out = FilteredPlans::default();
    let mut keep: Vec<usize> = (0..plans.len())
        .filter(|&i| scores[i].total >= threshold)
        .collect();
    if keep.is_empty() {
        keep.extend(best_score(scores));
    }
    for (i, s) in scores.iter().enumerate() {
        if !keep.contains(&i) {
            out.dropped.push(format!(
                "plan {i}: score {:.4} below threshold {threshold}",
                s.total
            ));
        }
    }
    keep.sort_by(|&a, &b| scores[b].total.total_cmp(&scores[a].total).then(a.cmp(&b)));

    for i in keep {
        let mut plan = plans[i].clone();
        let mut kept_units = Vec::with_capacity(plan.units.len());
        for unit in plan.units.drain(..) {
            match location_problem(&unit, root, &sources) {
                Some(why) => out.removals.push(format!(
                    "plan {i}: removed unit {} because {} {why}",
                    unit.unit_name, unit.file_path
                )),
                None => kept_units.push(unit),
            }
        }
        plan.units = kept_units;
        for unit in &mut plan.units {
            for block in &mut unit.blocks {
                block.candidate_refs.retain(|r| {
                    let ok = index.resolves(r);
                    if !ok {
                        out.removals.push(format!(
                            "plan {i}: removed unresolvable reference {r} from {}",
                            unit.unit_name
                        ));
                    }
                    ok
                });
            }
        }
        if plan.units.is_empty() {
            out.dropped
                .push(format!("plan {i}: no unit left after sanitizing"));
            continue;
        }
        out.scores.push(scores[i].clone());
        out.plans.push(plan);
    }
    for r in &out.removals {
        log::info!("{r}");
    }
    Ok(out)
}

/// Reference units of every existing function in the declaration's
/// category, deduplicated by name and grouped by kind.
pub fn gather_category_references(
    decl: &FunctionDeclaration,
    ch: &CharacterizationDoc,
) -> Vec<ReferenceUnit> {
    let mut by_name: BTreeMap<&str, &ReferenceUnit> = BTreeMap::new();
    let mut category_known = false;
    for fr in ch
        .reference_units
        .iter()
        .filter(|fr| fr.category == decl.category)
    {
        category_known = true;
        for r in &fr.references {
            by_name.entry(r.name.as_str()).or_insert(r);
        }
    }
    if !category_known {
        log::warn!(
            "no existing function in category `{}`; planning without references",
            decl.category
        );
    }
    let mut refs: Vec<ReferenceUnit> = by_name.into_values().cloned().collect();
    refs.sort_by(|a, b| a.kind.cmp(&b.kind).then(a.name.cmp(&b.name)));
    refs
}

/// `role name in file` lines for the units of existing functions in the
/// declaration's category.
pub fn category_unit_locations(
    decl: &FunctionDeclaration,
    ch: &CharacterizationDoc,
) -> Vec<String> {
    let members: BTreeSet<(&str, usize)> = ch
        .declarations
        .iter()
        .filter(|d| d.category == decl.category && d.name != decl.name)
        .map(|d| (d.name.as_str(), d.arity()))
        .collect();
    let mut lines = BTreeSet::new();
    for g in ch
        .graphs
        .iter()
        .filter(|g| members.contains(&(g.function.as_str(), g.arity)))
    {
        for n in &g.nodes {
            let role = match n.role {
                crate::profile::UnitRole::Registration => "registration",
                crate::profile::UnitRole::Implementation => "implementation",
            };
            lines.insert(format!("{role} {} in {}", n.name, n.file));
        }
    }
    lines.into_iter().collect()
}

#[derive(Deserialize)]
struct RawPlan {
    units: Vec<PlannedUnit>,
}

/// Parses one model reply into a plan for `function`.
pub fn parse_plan(
    reply: &str,
    function: &str,
    provenance: PlanProvenance,
) -> std::result::Result<CodingPlan, String> {
    let value = extract_json(reply).ok_or_else(|| "reply contains no JSON".to_string())?;
    let units = match value {
        serde_json::Value::Array(_) => serde_json::from_value::<Vec<PlannedUnit>>(value),
        other => serde_json::from_value::<RawPlan>(other).map(|p| p.units),
    }
    .map_err(|e| format!("plan does not match the schema: {e}"))?;
    let plan = CodingPlan {
        function_name: function.to_string(),
        units,
        provenance,
    };
    plan.validate()?;
    Ok(plan)
}

fn plan_prompt(
    gateway: &Gateway,
    decl: &FunctionDeclaration,
    refs: &[ReferenceUnit],
    locations: &[String],
) -> Prompt {
    let system = "You plan the implementation of a new native SQL function inside an existing database code base.\n\
                  Task: plan\n\
                  Reply with one JSON object {\"units\": [...]}. Each unit has \"unit_name\", \"file_path\" \
                  (relative to the repository root), \"create_file\" (true only for a new file) and \"blocks\". \
                  Each block has a \"description\" of one step and \"candidate_refs\", the existing macros, \
                  functions or types the step relies on. List every unit the function needs, including its \
                  registration entry."
        .to_string();
    let mut user = format!(
        "Function: {}\nSignature: {}\nCategory: {}\nDescription: {}\n",
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
    if !refs.is_empty() {
        user.push_str("\nReference units:\n");
        for r in refs {
            user.push_str(&format!(
                "// {} ({:?}, {})\n{}\n",
                r.name,
                r.kind,
                r.file,
                r.pruned_content.trim_end()
            ));
        }
    }
    gateway.prompt("plan", system, user)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GeneratedPlans {
    pub plans: Vec<CodingPlan>,
    pub dropped: Vec<String>,
}

/// Samples `n` plans; unparseable samples are dropped with a reason.
pub fn generate_candidate_plans(
    decl: &FunctionDeclaration,
    refs: &[ReferenceUnit],
    locations: &[String],
    n: usize,
    gateway: &Gateway,
) -> Result<GeneratedPlans> {
    if n == 0 {
        return Err(Error::Precondition("plan count must be at least 1".into()));
    }
    let samples = gateway.complete_many(&plan_prompt(gateway, decl, refs, locations), n)?;
    let mut out = GeneratedPlans::default();
    for (i, slot) in samples.slots.iter().enumerate() {
        let parsed = slot.clone().and_then(|text| {
            parse_plan(
                &text,
                &decl.name,
                PlanProvenance {
                    sample: i,
                    model: samples.model.clone(),
                },
            )
        });
        match parsed {
            Ok(p) => out.plans.push(p),
            Err(e) => out.dropped.push(format!("sample {i}: {e}")),
        }
    }
    if out.plans.is_empty() {
        return Err(Error::PlanGenerationFailed(format!(
            "none of {n} samples for {} parsed: {}",
            decl.name,
            out.dropped.join("; ")
        )));
    }
    Ok(out)
}

/// Contents of `plans.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlansDoc {
    pub version: u32,
    pub function_name: String,
    pub plans: Vec<CodingPlan>,
    pub scores: Vec<PlanScore>,
    pub dropped: Vec<String>,
    #[serde(default)]
    pub removals: Vec<String>,
}

impl PlansDoc {
    pub fn best(&self) -> Option<&CodingPlan> {
        self.plans.first()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanningConfig {
    pub num_plans: usize,
    pub weights: ScoreWeights,
    pub threshold: f64,
}

impl Default for PlanningConfig {
    fn default() -> Self {
        PlanningConfig {
            num_plans: DEFAULT_NUM_PLANS,
            weights: ScoreWeights::default(),
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

/// Generation, scoring and filtering in one call.
pub fn plan_function(
    decl: &FunctionDeclaration,
    ch: &CharacterizationDoc,
    index: &SymbolIndex,
    root: &Path,
    profile: &DbProfile,
    gateway: &Gateway,
    cfg: &PlanningConfig,
) -> Result<PlansDoc> {
    let refs = gather_category_references(decl, ch);
    let locations = category_unit_locations(decl, ch);
    let generated = generate_candidate_plans(decl, &refs, &locations, cfg.num_plans, gateway)?;
    let scores = score_plans(&generated.plans, index, root, profile, cfg.weights)?;
    let filtered = sanitize_and_filter(
        &generated.plans,
        &scores,
        index,
        root,
        profile,
        cfg.threshold,
    )?;
    let mut dropped = generated.dropped;
    dropped.extend(filtered.dropped);
    Ok(PlansDoc {
        version: SCHEMA_VERSION,
        function_name: decl.name.clone(),
        plans: filtered.plans,
        scores: filtered.scores,
        dropped,
        removals: filtered.removals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(v: &[(usize, usize, usize)]) -> Vec<PlanCounts> {
        v.iter()
            .map(|&(bad_refs, bad_locations, units)| PlanCounts {
                bad_refs,
                bad_locations,
                units,
            })
            .collect()
    }

    fn totals(v: &[(usize, usize, usize)]) -> Vec<f64> {
        score_counts(&counts(v), ScoreWeights::default())
            .iter()
            .map(|s| s.total)
            .collect()
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn single_plan_scores_one() {
        let s = score_counts(&counts(&[(4, 2, 7)]), ScoreWeights::default());
        assert_eq!(
            (s[0].refs_norm, s[0].locations_norm, s[0].size_norm),
            (1.0, 1.0, 1.0)
        );
        assert!((s[0].total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hand_evaluated_batches() {
        assert!(close(&totals(&[(0, 1, 3), (2, 1, 5)]), &[1.0, 0.4]));
        assert!(close(
            &totals(&[(0, 0, 2), (1, 1, 2), (2, 2, 2)]),
            &[1.0, 0.6, 0.2]
        ));
    }

    #[test]
    fn best_prefers_earliest_on_ties() {
        let s = score_counts(
            &counts(&[(1, 0, 1), (0, 1, 1), (2, 2, 2)]),
            ScoreWeights::default(),
        );
        assert_eq!(best_score(&s), Some(0));
    }

    fn plan(units: &[(&str, &str, &[&str])]) -> CodingPlan {
        CodingPlan {
            function_name: "f".into(),
            units: units
                .iter()
                .map(|(n, f, refs)| PlannedUnit {
                    unit_name: n.to_string(),
                    file_path: f.to_string(),
                    create_file: false,
                    blocks: vec![PlanBlock {
                        description: "Step 1".into(),
                        candidate_refs: refs.iter().map(|s| s.to_string()).collect(),
                    }],
                })
                .collect(),
            provenance: PlanProvenance::default(),
        }
    }

    #[test]
    fn validation_rejects_duplicates_and_empty_blocks() {
        assert!(plan(&[("a", "x.c", &[]), ("a", "y.c", &[])])
            .validate()
            .is_err());
        let mut p = plan(&[("a", "x.c", &[])]);
        p.units[0].blocks.clear();
        assert!(p.validate().is_err());
        assert!(plan(&[("a b", "x.c", &[])]).validate().is_err());
        assert!(plan(&[("a", "x.c", &[])]).validate().is_ok());
    }

    #[test]
    fn parses_fenced_and_bare_replies() {
        let reply = "Here:\n```json\n{\"units\": [{\"unit_name\": \"evenFunc\", \"file_path\": \"funcs.c\", \
                     \"blocks\": [{\"description\": \"Step 1: fetch\", \"candidate_refs\": [\"TOY_GETARG\"]}]}]}\n```";
        let p = parse_plan(reply, "toy_even", PlanProvenance::default()).unwrap();
        assert_eq!(p.units[0].blocks[0].candidate_refs, vec!["TOY_GETARG"]);
        assert!(parse_plan("no plan", "f", PlanProvenance::default()).is_err());
        assert!(parse_plan("{\"units\": []}", "f", PlanProvenance::default()).is_err());
    }

    mod repo {
        use super::*;
        use crate::index::{scan_repo, tests::profile};

        fn setup() -> (tempfile::TempDir, SymbolIndex, DbProfile) {
            let dir = tempfile::tempdir().unwrap();
            std::fs::write(
                dir.path().join("funcs.c"),
                "#define GETARG(a, i) (a[i])\nstatic void absFunc(int *a) { a[0] = GETARG(a, 0); }\n",
            )
            .unwrap();
            let prof = profile();
            let idx = scan_repo(dir.path(), &prof).unwrap();
            (dir, idx, prof)
        }

        #[test]
        fn fabricated_reference_is_counted_and_removed() {
            let (dir, idx, prof) = setup();
            let plans = vec![
                plan(&[("evenFunc", "funcs.c", &["GETARG", "GETARG_TXT", "evenFunc"])]),
                plan(&[("evenFunc", "funcs.c", &["GETARG"])]),
            ];
            let scores =
                score_plans(&plans, &idx, dir.path(), &prof, ScoreWeights::default()).unwrap();
            assert_eq!(scores[0].counts.bad_refs, 1);
            assert_eq!(scores[1].counts.bad_refs, 0);
            let out = sanitize_and_filter(&plans, &scores, &idx, dir.path(), &prof, 0.5).unwrap();
            assert_eq!(out.plans.len(), 2);
            assert_eq!(out.plans[0], plans[1]);
            assert_eq!(
                out.plans[1].units[0].blocks[0].candidate_refs,
                vec!["GETARG"]
            );
            assert!(out.removals.iter().any(|r| r.contains("GETARG_TXT")));
            for p in &out.plans {
                assert!(p.candidate_refs().iter().all(|r| idx.resolves(r)));
            }
        }

        #[test]
        fn mislocated_units_count_and_go() {
            let (dir, idx, prof) = setup();
            let mut p = plan(&[
                ("a", "funcs.c", &[]),
                ("b", "../out.c", &[]),
                ("c", "new.c", &[]),
                ("d", "notes.txt", &[]),
            ]);
            p.units[2].create_file = true;
            let c = count_plan_defects(&p, &idx, dir.path(), &prof).unwrap();
            assert_eq!(
                c,
                PlanCounts {
                    bad_refs: 0,
                    bad_locations: 2,
                    units: 4
                }
            );
            let scores = score_plans(
                &[p.clone()],
                &idx,
                dir.path(),
                &prof,
                ScoreWeights::default(),
            )
            .unwrap();
            let out = sanitize_and_filter(&[p], &scores, &idx, dir.path(), &prof, 0.5).unwrap();
            let names: Vec<_> = out.plans[0]
                .units
                .iter()
                .map(|u| u.unit_name.as_str())
                .collect();
            assert_eq!(names, vec!["a", "c"]);
        }

        #[test]
        fn everything_below_threshold_keeps_the_best() {
            let (dir, idx, prof) = setup();
            let plans = vec![
                plan(&[("a", "funcs.c", &[])]),
                plan(&[("a", "funcs.c", &[])]),
            ];
            let scores = score_counts(
                &counts(&[(1, 0, 1), (0, 1, 1)]),
                ScoreWeights::default().scaled(0.5),
            );
            let out = sanitize_and_filter(&plans, &scores, &idx, dir.path(), &prof, 0.5).unwrap();
            assert_eq!(out.plans.len(), 1);
            assert_eq!(out.scores[0].sample, 0);
            assert_eq!(out.dropped.len(), 1);
        }
    }
}
