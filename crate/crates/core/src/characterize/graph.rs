//! Reference graphs rooted at a function's registration entry.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::FunctionDeclaration;
use crate::index::{
    entry_source, extract_typed_edges, lookup_symbol, EdgeKind, Span, SymbolEntry, SymbolIndex,
    SymbolKind,
};
use crate::lexer::{self, matching_close};
use crate::profile::UnitRole;
use crate::{Error, Result};

/// Continuous lines of one unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeBlock {
    pub span: Span,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionUnit {
    pub name: String,
    pub kind: SymbolKind,
    pub file: String,
    pub span: Span,
    pub role: UnitRole,
    pub blocks: Vec<CodeBlock>,
}

impl FunctionUnit {
    pub fn key(&self) -> String {
        format!("{}:{}:{}", self.file, self.span.start, self.name)
    }

    pub fn text(&self) -> String {
        self.blocks
            .iter()
            .map(|b| b.text.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub(crate) fn from_entry(entry: &SymbolEntry, source: &str, role: UnitRole) -> Self {
        FunctionUnit {
            name: entry.name.clone(),
            kind: entry.kind,
            file: entry.file.clone(),
            span: entry.span,
            role,
            blocks: split_blocks(source, entry.span.start, entry.kind),
        }
    }
}

/// Header block plus one block per top-level statement of a function
/// body; other entities form a single block. Blocks tile the span.
pub fn split_blocks(source: &str, first_line: usize, kind: SymbolKind) -> Vec<CodeBlock> {
    let lines: Vec<&str> = source.lines().collect();
    let n = lines.len().max(1);
    let single = |tag: &str| {
        vec![CodeBlock {
            span: Span::new(first_line, first_line + n - 1),
            text: lines.join("\n"),
            tag: Some(tag.to_string()),
        }]
    };
    match kind {
        SymbolKind::Function => {}
        SymbolKind::RegistrationEntry => return single("registration"),
        _ => return single("declaration"),
    }
    let toks = lexer::tokens(source);
    let Some(open) = toks.iter().position(|t| t.is_punct("{")) else {
        return single("signature");
    };
    let close = matching_close(&toks, open).unwrap_or(toks.len() - 1);

    let mut starts = vec![1usize];
    let mut depth = 0i32;
    let mut at_statement_start = true;
    for t in &toks[open + 1..close] {
        if at_statement_start && depth == 0 && t.text != "else" && t.line > *starts.last().unwrap()
        {
            starts.push(t.line);
        }
        at_statement_start = false;
        if t.is_punct("{") || t.is_punct("(") {
            depth += 1;
        } else if t.is_punct("}") || t.is_punct(")") {
            depth -= 1;
            at_statement_start = depth == 0 && t.is_punct("}");
        } else if t.is_punct(";") && depth == 0 {
            at_statement_start = true;
        }
    }
    let header_end = toks[open].line;
    if starts.len() > 1 && starts[1] <= header_end {
        starts.remove(1);
    }
    let mut blocks = Vec::with_capacity(starts.len());
    for (i, &s) in starts.iter().enumerate() {
        let e = starts.get(i + 1).map_or(n, |next| next - 1);
        blocks.push(CodeBlock {
            span: Span::new(first_line + s - 1, first_line + e - 1),
            text: lines[s - 1..e].join("\n"),
            tag: (i == 0).then(|| "signature".to_string()),
        });
    }
    blocks
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GraphEdge {
    pub from: String,
    pub to: String,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphCaps {
    pub max_units: usize,
    pub max_hops: usize,
}

impl Default for GraphCaps {
    fn default() -> Self {
        GraphCaps {
            max_units: 50,
            max_hops: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceGraph {
    pub function: String,
    pub arity: usize,
    /// Key of the registration unit.
    pub root: String,
    /// Nodes in breadth-first order; the root comes first.
    pub nodes: Vec<FunctionUnit>,
    pub edges: Vec<GraphEdge>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncated: Option<String>,
}

impl ReferenceGraph {
    pub fn root_unit(&self) -> &FunctionUnit {
        &self.nodes[0]
    }

    pub fn implementations(&self) -> impl Iterator<Item = &FunctionUnit> {
        self.nodes.iter().skip(1)
    }

    /// Every node can be reached from the root along edges.
    pub fn all_reachable(&self) -> bool {
        let mut seen = BTreeSet::from([self.root.clone()]);
        let mut queue = VecDeque::from([self.root.clone()]);
        while let Some(k) = queue.pop_front() {
            for e in self.edges.iter().filter(|e| e.from == k) {
                if seen.insert(e.to.clone()) {
                    queue.push_back(e.to.clone());
                }
            }
        }
        self.nodes.iter().all(|n| seen.contains(&n.key()))
    }
}

/// The registration entry of `decl`, preferring one whose recorded arity
/// matches.
pub fn find_registration<'a>(
    index: &'a SymbolIndex,
    decl: &FunctionDeclaration,
) -> Option<&'a SymbolEntry> {
    let regs: Vec<&SymbolEntry> = lookup_symbol(index, &decl.name)
        .iter()
        .filter(|e| e.kind == SymbolKind::RegistrationEntry)
        .collect();
    regs.iter()
        .find(|e| e.arity == Some(decl.arity() as i64))
        .or_else(|| regs.iter().find(|e| e.arity.is_none()))
        .copied()
}

fn is_node_target(entry: &SymbolEntry, kind: EdgeKind) -> bool {
    match entry.kind {
        SymbolKind::Function => true,
        SymbolKind::StructOrClass => kind == EdgeKind::Inheritance,
        _ => false,
    }
}

/// Breadth-first expansion from the registration entry along reference
/// edges, bounded by `caps`.
pub fn build_reference_graph(
    decl: &FunctionDeclaration,
    index: &SymbolIndex,
    caps: GraphCaps,
) -> Result<ReferenceGraph> {
    if caps.max_units == 0 || caps.max_hops == 0 {
        return Err(Error::Precondition("graph caps must be positive".into()));
    }
    if index.is_empty() {
        return Err(Error::Precondition("symbol index is empty".into()));
    }
    let reg = find_registration(index, decl).ok_or_else(|| {
        Error::Characterization(format!(
            "no registration entry for {} with arity {}",
            decl.name,
            decl.arity()
        ))
    })?;

    let root = FunctionUnit::from_entry(reg, &entry_source(index, reg)?, UnitRole::Registration);
    let mut graph = ReferenceGraph {
        function: decl.name.clone(),
        arity: decl.arity(),
        root: root.key(),
        nodes: vec![root],
        edges: vec![],
        truncated: None,
    };
    let mut visited = BTreeSet::from([reg.key()]);
    let mut edge_set = BTreeSet::new();
    let mut queue = VecDeque::from([(reg.clone(), 0usize)]);

    while let Some((entry, depth)) = queue.pop_front() {
        for (name, kind) in extract_typed_edges(index, &entry)? {
            for target in lookup_symbol(index, &name)
                .iter()
                .filter(|t| is_node_target(t, kind))
            {
                let key = target.key();
                if visited.contains(&key) {
                    edge_set.insert(GraphEdge {
                        from: entry.key(),
                        to: key,
                        kind,
                    });
                    continue;
                }
                if depth == caps.max_hops {
                    graph
                        .truncated
                        .get_or_insert_with(|| format!("hop limit {} reached", caps.max_hops));
                    continue;
                }
                if graph.nodes.len() == caps.max_units {
                    graph
                        .truncated
                        .get_or_insert_with(|| format!("unit cap {} reached", caps.max_units));
                    continue;
                }
                let source = entry_source(index, target)?;
                graph.nodes.push(FunctionUnit::from_entry(
                    target,
                    &source,
                    UnitRole::Implementation,
                ));
                visited.insert(key.clone());
                edge_set.insert(GraphEdge {
                    from: entry.key(),
                    to: key,
                    kind,
                });
                queue.push_back((target.clone(), depth + 1));
            }
        }
    }
    graph.edges = edge_set.into_iter().collect();
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::{scan_repo, tests::profile};

    const REG: &str = "static void helper(int *o) { *o = 1; }\n\
                       static void impl_a(int *o) {\n  helper(o);\n  impl_a(o);\n}\n\
                       static void impl_b(int *o) {\n  int x = 0;\n  *o = x;\n}\n";

    fn repo() -> (tempfile::TempDir, SymbolIndex) {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("impl.c"), REG).unwrap();
        std::fs::write(
            dir.path().join("reg.c"),
            "T t[] = {\n  { \"fa\", 1, impl_a },\n  { \"fb\", 1, impl_b },\n  { \"fz\", 0, 0 },\n  { 0, 0, 0 }\n};\n",
        )
        .unwrap();
        let idx = scan_repo(dir.path(), &profile()).unwrap();
        (dir, idx)
    }

    #[test]
    fn bfs_follows_calls_and_handles_recursion() {
        let (_d, idx) = repo();
        let g = build_reference_graph(
            &FunctionDeclaration::new("fa", "x", &["int"], "int"),
            &idx,
            GraphCaps::default(),
        )
        .unwrap();
        let names: Vec<_> = g.nodes.iter().map(|n| n.name.as_str()).collect();
        assert_eq!(names, vec!["fa", "impl_a", "helper"]);
        assert_eq!(g.edges.len(), 2);
        assert!(g.truncated.is_none());
        assert!(g.all_reachable());
    }

    #[test]
    fn caps_truncate() {
        let (_d, idx) = repo();
        let decl = FunctionDeclaration::new("fa", "x", &["int"], "int");
        let g = build_reference_graph(
            &decl,
            &idx,
            GraphCaps {
                max_units: 1,
                max_hops: 2,
            },
        )
        .unwrap();
        assert_eq!(g.nodes.len(), 1);
        assert!(g.truncated.is_some());
        let g = build_reference_graph(
            &decl,
            &idx,
            GraphCaps {
                max_units: 50,
                max_hops: 1,
            },
        )
        .unwrap();
        assert_eq!(g.nodes.len(), 2);
        assert!(g.truncated.unwrap().contains("hop"));
    }

    #[test]
    fn registration_without_calls_is_single_node() {
        let (_d, idx) = repo();
        let g = build_reference_graph(
            &FunctionDeclaration::new("fz", "x", &[], "int"),
            &idx,
            GraphCaps::default(),
        )
        .unwrap();
        assert_eq!(g.nodes.len(), 1);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn missing_registration_names_function() {
        let (_d, idx) = repo();
        let err = build_reference_graph(
            &FunctionDeclaration::new("nope", "x", &[], "int"),
            &idx,
            GraphCaps::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("nope"));
    }

    #[test]
    fn blocks_tile_the_span() {
        let src = "static void impl_b(int *o)\n{\n  int x = 0;\n\n  if (x) {\n    x++;\n  } else {\n    x--;\n  }\n  *o = x;\n}";
        let blocks = split_blocks(src, 10, SymbolKind::Function);
        assert_eq!(blocks[0].span, Span::new(10, 11));
        assert_eq!(blocks.len(), 4);
        for w in blocks.windows(2) {
            assert_eq!(w[0].span.end + 1, w[1].span.start);
        }
        assert_eq!(blocks.last().unwrap().span.end, 20);
        assert_eq!(
            blocks
                .iter()
                .map(|b| b.text.clone())
                .collect::<Vec<_>>()
                .join("\n"),
            src
        );
    }
}
