//! Function characterization: declarations, reference graphs, pruned unit
//! templates and reference units of the functions a code base already has.

mod declarations;
mod graph;
pub mod prune;
mod references;
mod refine;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use declarations::{
    collect_catalog_declarations, collect_doc_declarations, group_by_declaration,
    load_declarations, merge_declarations, DeclSource, FunctionDeclaration, GroupKey,
};
pub use graph::{
    build_reference_graph, find_registration, split_blocks, CodeBlock, FunctionUnit, GraphCaps,
    GraphEdge, ReferenceGraph,
};
pub use prune::{pairwise_prune, PathUnit, PrunedUnit};
pub use references::{
    expand_reference, expand_reference_with, extract_references, full_content, leading_comment,
    prune_reference, strip_method_bodies, FunctionReferences, PruneRule, PruneRules, ReferenceKind,
    ReferenceUnit,
};
pub use refine::{group_seed, rank_templates, refine_paths, RefineOutcome, RoundStat};

use crate::exec::Exec;
use crate::index::{scan_repo_with, SymbolIndex};
use crate::profile::DbProfile;
use crate::{Result, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharacterizeConfig {
    pub caps: GraphCaps,
    /// Templates kept per group.
    pub top_k: usize,
    pub seed: u64,
    pub rules: PruneRules,
}

impl Default for CharacterizeConfig {
    fn default() -> Self {
        CharacterizeConfig {
            caps: GraphCaps::default(),
            top_k: 3,
            seed: 0,
            rules: PruneRules::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub key: String,
    pub members: Vec<String>,
    pub rounds: Vec<RoundStat>,
}

/// Everything characterization learned about a repository.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterizationDoc {
    pub version: u32,
    pub declarations: Vec<FunctionDeclaration>,
    pub graphs: Vec<ReferenceGraph>,
    pub groups: Vec<GroupSummary>,
    pub pruned_units: Vec<PrunedUnit>,
    pub reference_units: Vec<FunctionReferences>,
    pub warnings: Vec<String>,
}

impl CharacterizationDoc {
    pub fn empty() -> Self {
        CharacterizationDoc {
            version: SCHEMA_VERSION,
            declarations: vec![],
            graphs: vec![],
            groups: vec![],
            pruned_units: vec![],
            reference_units: vec![],
            warnings: vec![],
        }
    }

    pub fn to_json(&self) -> Result<String> {
        crate::util::to_json_pretty(self)
    }

    pub fn from_json(src: &str) -> Result<Self> {
        Ok(serde_json::from_str(src)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&crate::util::read_to_string(path)?)
    }
}

fn member_label(d: &FunctionDeclaration) -> String {
    format!("{}/{}", d.name, d.arity())
}

/// Graph nodes in breadth-first order as prunable units.
pub fn graph_path(graph: &ReferenceGraph) -> Vec<PathUnit> {
    graph
        .nodes
        .iter()
        .map(|n| PathUnit {
            role: n.role,
            file: n.file.clone(),
            source: n.text(),
        })
        .collect()
}

/// Refines one declaration group from already built graphs.
pub fn multi_round_refine(
    group: &[FunctionDeclaration],
    graphs: &[ReferenceGraph],
    index: &SymbolIndex,
    k: usize,
    seed: u64,
) -> RefineOutcome {
    let Some(first) = group.first() else {
        return RefineOutcome::default();
    };
    let label = first.group_key().label();
    let members: Vec<(String, Vec<PathUnit>)> = group
        .iter()
        .filter_map(|d| {
            graphs
                .iter()
                .find(|g| g.function == d.name && g.arity == d.arity())
                .map(|g| (member_label(d), graph_path(g)))
        })
        .collect();
    let is_global = |n: &str| index.resolves(n);
    refine_paths(&members, &is_global, k, group_seed(seed, &label), &label)
}

/// Runs the whole characterization over an already scanned repository.
pub fn characterize_index(
    root: &Path,
    profile: &DbProfile,
    index: &SymbolIndex,
    cfg: &CharacterizeConfig,
    exec: Exec,
) -> Result<CharacterizationDoc> {
    let mut doc = CharacterizationDoc::empty();
    let declarations = load_declarations(root, profile)?;
    if declarations.is_empty() {
        doc.warnings.push("no function declarations found".into());
    }
    if index.is_empty() {
        doc.warnings.push("symbol index is empty".into());
        doc.declarations = declarations;
        return Ok(doc);
    }

    let per_decl: Vec<Result<(ReferenceGraph, FunctionReferences)>> =
        exec.map(&declarations, |d| {
            let g = build_reference_graph(d, index, cfg.caps)?;
            let (references, unresolved) = extract_references(&g, index, &cfg.rules)?;
            let refs = FunctionReferences {
                function: d.name.clone(),
                arity: d.arity(),
                category: d.category.clone(),
                references,
                unresolved,
            };
            Ok((g, refs))
        });
    for (d, r) in declarations.iter().zip(per_decl) {
        match r {
            Ok((g, refs)) => {
                if let Some(reason) = &g.truncated {
                    doc.warnings
                        .push(format!("graph of {} truncated: {reason}", member_label(d)));
                }
                doc.graphs.push(g);
                doc.reference_units.push(refs);
            }
            Err(e) => doc.warnings.push(format!("{}: {e}", member_label(d))),
        }
    }

    let groups: Vec<(GroupKey, Vec<FunctionDeclaration>)> =
        group_by_declaration(&declarations).into_iter().collect();
    let refined: Vec<RefineOutcome> = exec.map(&groups, |(_, members)| {
        multi_round_refine(members, &doc.graphs, index, cfg.top_k, cfg.seed)
    });
    for ((key, members), outcome) in groups.iter().zip(refined) {
        doc.groups.push(GroupSummary {
            key: key.label(),
            members: members.iter().map(member_label).collect(),
            rounds: outcome.rounds,
        });
        doc.pruned_units.extend(outcome.templates);
    }
    for w in &doc.warnings {
        log::warn!("{w}");
    }
    doc.declarations = declarations;
    Ok(doc)
}

/// Scans `root` and characterizes it.
pub fn characterize(
    root: &Path,
    profile: &DbProfile,
    cfg: &CharacterizeConfig,
    exec: Exec,
) -> Result<(SymbolIndex, CharacterizationDoc)> {
    let index = scan_repo_with(root, profile, exec)?;
    let doc = characterize_index(root, profile, &index, cfg, exec)?;
    Ok((index, doc))
}
