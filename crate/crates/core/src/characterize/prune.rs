//! Pairwise unit pruning: abstract local names, intersect token sequences
//! and turn the divergent regions into numbered slots.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::index::edges::declared_names;
use crate::lexer::{self, Token};
use crate::profile::UnitRole;

/// Shortest run of shared tokens kept in a template. Single shared tokens
/// (a lone `;` or `,`) carry no structure.
pub const MIN_BLOCK: usize = 2;

pub fn slot_marker(i: usize) -> String {
    format!("{{{{SLOT_{i}}}}}")
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Piece {
    Fixed(Vec<String>),
    Slot,
}

/// Token-level template: fixed runs separated by slots.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SequenceTemplate {
    pub pieces: Vec<Piece>,
}

impl SequenceTemplate {
    pub fn placeholder_count(&self) -> usize {
        self.pieces
            .iter()
            .filter(|p| matches!(p, Piece::Slot))
            .count()
    }

    pub fn fixed_runs(&self) -> impl Iterator<Item = &[String]> {
        self.pieces.iter().filter_map(|p| match p {
            Piece::Fixed(t) => Some(t.as_slice()),
            Piece::Slot => None,
        })
    }

    pub fn fixed_len(&self) -> usize {
        self.fixed_runs().map(<[String]>::len).sum()
    }
}

/// Renames `locals` to `v1`, `v2`, ... in first-occurrence order.
pub fn alpha_rename_tokens(tokens: &[String], locals: &BTreeSet<String>) -> Vec<String> {
    let mut names: HashMap<&str, String> = HashMap::new();
    tokens
        .iter()
        .map(|t| {
            if !locals.contains(t) {
                return t.clone();
            }
            let next = names.len() + 1;
            names
                .entry(t.as_str())
                .or_insert_with(|| format!("v{next}"))
                .clone()
        })
        .collect()
}

/// A unit's source with its renamed token stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenamedUnit {
    pub source: String,
    pub tokens: Vec<String>,
    spans: Vec<(usize, usize)>,
}

impl RenamedUnit {
    /// Lexes `source` and renames its locals: names declared inside the
    /// unit that do not resolve globally.
    pub fn new(source: &str, is_global: &dyn Fn(&str) -> bool) -> Self {
        let toks: Vec<Token> = lexer::tokens(source);
        let locals: BTreeSet<String> = declared_names(&toks)
            .into_iter()
            .filter(|n| !is_global(n) && !lexer::is_keyword(n))
            .collect();
        let raw: Vec<String> = toks.iter().map(|t| t.text.clone()).collect();
        RenamedUnit {
            source: source.to_string(),
            tokens: alpha_rename_tokens(&raw, &locals),
            spans: toks.iter().map(|t| (t.start, t.end)).collect(),
        }
    }

    fn gap(&self, k: usize) -> String {
        let g = &self.source[self.spans[k - 1].1..self.spans[k].0];
        if g.chars().all(char::is_whitespace) {
            return g.to_string();
        }
        // Comments between tokens are dropped; keep the line structure.
        match g.rfind('\n') {
            Some(p) => format!("\n{}", &g[p + 1..]),
            None => " ".to_string(),
        }
    }

    fn render_range(&self, from: usize, to: usize) -> String {
        let mut out = String::new();
        for k in from..to {
            if k > from {
                out.push_str(&self.gap(k));
            }
            out.push_str(&self.tokens[k]);
        }
        out
    }
}

fn longest_match(
    a: &[String],
    alo: usize,
    ahi: usize,
    blo: usize,
    bhi: usize,
    b2j: &HashMap<&str, Vec<usize>>,
) -> (usize, usize, usize) {
    let (mut best_i, mut best_j, mut best) = (alo, blo, 0);
    let mut j2len: HashMap<usize, usize> = HashMap::new();
    for (i, tok) in a.iter().enumerate().take(ahi).skip(alo) {
        let mut next: HashMap<usize, usize> = HashMap::new();
        if let Some(js) = b2j.get(tok.as_str()) {
            for &j in js {
                if j < blo {
                    continue;
                }
                if j >= bhi {
                    break;
                }
                let k = if j > 0 {
                    j2len.get(&(j - 1)).copied().unwrap_or(0)
                } else {
                    0
                } + 1;
                next.insert(j, k);
                if k > best {
                    best_i = i + 1 - k;
                    best_j = j + 1 - k;
                    best = k;
                }
            }
        }
        j2len = next;
    }
    (best_i, best_j, best)
}

/// Ratcliff/Obershelp matching blocks of at least `min_len` tokens,
/// ordered by position.
pub fn matching_blocks(a: &[String], b: &[String], min_len: usize) -> Vec<(usize, usize, usize)> {
    let mut b2j: HashMap<&str, Vec<usize>> = HashMap::new();
    for (j, t) in b.iter().enumerate() {
        b2j.entry(t.as_str()).or_default().push(j);
    }
    let mut blocks = Vec::new();
    let mut stack = vec![(0, a.len(), 0, b.len())];
    while let Some((alo, ahi, blo, bhi)) = stack.pop() {
        if alo >= ahi || blo >= bhi {
            continue;
        }
        let (i, j, k) = longest_match(a, alo, ahi, blo, bhi, &b2j);
        if k < min_len.max(1) {
            continue;
        }
        blocks.push((i, j, k));
        stack.push((alo, i, blo, j));
        stack.push((i + k, ahi, j + k, bhi));
    }
    blocks.sort_unstable();
    blocks
}

/// Result of intersecting two renamed sequences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequencePrune {
    pub template: SequenceTemplate,
    /// The template was laid out over the second argument (canonical
    /// order puts the lexically smaller sequence first).
    pub swapped: bool,
    /// `(start, end)` token ranges of each piece in the canonical-first
    /// sequence.
    pub piece_ranges: Vec<(usize, usize)>,
}

/// Extends each block over tokens shared at the edges of the neighbouring
/// gaps, so a lone `{` opening both divergent regions stays fixed. Blocks
/// are only ever grown into positions adjacent in both sequences.
fn absorb_gap_edges(
    x: &[String],
    y: &[String],
    blocks: &[(usize, usize, usize)],
) -> Vec<(usize, usize, usize)> {
    let mut out: Vec<(usize, usize, usize)> = Vec::with_capacity(blocks.len() + 2);
    let (mut ai, mut bj) = (0usize, 0usize);
    // A `None` after the last block stands for the gap up to both ends.
    for next in blocks.iter().copied().map(Some).chain([None]) {
        let (ni, nj) = next.map_or((x.len(), y.len()), |(i, j, _)| (i, j));
        // Common prefix of the gap joins the previous block.
        let mut p = 0;
        while ai + p < ni && bj + p < nj && x[ai + p] == y[bj + p] {
            p += 1;
        }
        if p > 0 {
            match out.last_mut() {
                Some(last) if last.0 + last.2 == ai && last.1 + last.2 == bj => last.2 += p,
                _ => out.push((ai, bj, p)),
            }
        }
        // Common suffix of what remains joins the next block.
        let mut q = 0;
        while ni - q > ai + p && nj - q > bj + p && x[ni - q - 1] == y[nj - q - 1] {
            q += 1;
        }
        if let Some((i, j, k)) = next {
            out.push((i - q, j - q, k + q));
            ai = i + k;
            bj = j + k;
        } else if q > 0 {
            out.push((ni - q, nj - q, q));
        }
    }
    out
}

/// Intersects two token sequences. The pair is put in canonical order
/// first, so the result does not depend on argument order. Returns `None`
/// when nothing substantial is shared.
pub fn prune_sequences(a: &[String], b: &[String]) -> Option<SequencePrune> {
    let swapped = b < a;
    let (x, y) = if swapped { (b, a) } else { (a, b) };
    if x.is_empty() || y.is_empty() {
        return None;
    }
    let blocks = if x == y {
        vec![(0, 0, x.len())]
    } else {
        matching_blocks(x, y, MIN_BLOCK)
    };
    if blocks.is_empty() {
        return None;
    }
    let blocks = absorb_gap_edges(x, y, &blocks);
    let mut pieces: Vec<Piece> = Vec::new();
    let mut ranges: Vec<(usize, usize)> = Vec::new();
    let (mut ai, mut bj) = (0, 0);
    for (i, j, k) in blocks {
        if i > ai || j > bj {
            pieces.push(Piece::Slot);
            ranges.push((ai, i));
        }
        match (pieces.last_mut(), ranges.last_mut()) {
            (Some(Piece::Fixed(run)), Some(r)) => {
                run.extend_from_slice(&x[i..i + k]);
                r.1 = i + k;
            }
            _ => {
                pieces.push(Piece::Fixed(x[i..i + k].to_vec()));
                ranges.push((i, i + k));
            }
        }
        ai = i + k;
        bj = j + k;
    }
    if ai < x.len() || bj < y.len() {
        pieces.push(Piece::Slot);
        ranges.push((ai, x.len()));
    }
    Some(SequencePrune {
        template: SequenceTemplate { pieces },
        swapped,
        piece_ranges: ranges,
    })
}

/// True when `run` occurs contiguously in `seq`.
pub fn contains_run(seq: &[String], run: &[String]) -> bool {
    run.is_empty() || seq.windows(run.len()).any(|w| w == run)
}

/// Renders a pruned pair with the canonical-first unit's formatting.
pub fn render_template(first: &RenamedUnit, prune: &SequencePrune) -> String {
    let mut out = String::new();
    let mut slot = 0;
    for (idx, (piece, &(from, to))) in prune
        .template
        .pieces
        .iter()
        .zip(&prune.piece_ranges)
        .enumerate()
    {
        if idx > 0 && from > 0 && from < first.tokens.len() {
            out.push_str(&first.gap(from));
        } else if idx > 0 {
            out.push(' ');
        }
        match piece {
            Piece::Fixed(_) => out.push_str(&first.render_range(from, to)),
            Piece::Slot => {
                slot += 1;
                out.push_str(&slot_marker(slot));
            }
        }
    }
    out
}

/// One entity along a reference-graph path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathUnit {
    pub role: UnitRole,
    pub file: String,
    pub source: String,
}

/// Reusable template extracted from compared units.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrunedUnit {
    pub template_text: String,
    pub placeholder_count: usize,
    pub support: usize,
    pub origin_group: String,
    pub role: UnitRole,
    pub file: String,
}

/// Per-pair pruning result with the counts used for round stopping.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairPrune {
    pub units: Vec<PrunedUnit>,
    /// Template tokens counted once per compared unit.
    pub pruned_tokens: usize,
    pub total_tokens: usize,
}

fn aligned<'a>(a: &'a [PathUnit], b: &'a [PathUnit]) -> Vec<(&'a PathUnit, &'a PathUnit)> {
    let mut out = Vec::new();
    let regs = |p: &'a [PathUnit]| {
        p.iter()
            .filter(|u| u.role == UnitRole::Registration)
            .collect::<Vec<_>>()
    };
    let imps = |p: &'a [PathUnit]| {
        p.iter()
            .filter(|u| u.role == UnitRole::Implementation)
            .collect::<Vec<_>>()
    };
    out.extend(regs(a).into_iter().zip(regs(b)));
    out.extend(imps(a).into_iter().zip(imps(b)));
    out
}

/// Prunes two graph paths: registration against registration, then
/// implementations in breadth-first order. Symmetric in its arguments.
pub fn pairwise_prune(
    a: &[PathUnit],
    b: &[PathUnit],
    is_global: &dyn Fn(&str) -> bool,
) -> PairPrune {
    let mut out = PairPrune::default();
    for (ua, ub) in aligned(a, b) {
        let ra = RenamedUnit::new(&ua.source, is_global);
        let rb = RenamedUnit::new(&ub.source, is_global);
        out.total_tokens += ra.tokens.len() + rb.tokens.len();
        let Some(p) = prune_sequences(&ra.tokens, &rb.tokens) else {
            continue;
        };
        out.pruned_tokens += 2 * p.template.fixed_len();
        let (first, first_unit) = if p.swapped { (&rb, ub) } else { (&ra, ua) };
        out.units.push(PrunedUnit {
            template_text: render_template(first, &p),
            placeholder_count: p.template.placeholder_count(),
            support: 1,
            origin_group: String::new(),
            role: first_unit.role,
            file: first_unit.file.clone(),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn identical_sequences_give_slot_free_template() {
        let a = toks("f ( x ) ;");
        let p = prune_sequences(&a, &a).unwrap();
        assert_eq!(p.template.placeholder_count(), 0);
        assert_eq!(p.template.pieces, vec![Piece::Fixed(a.clone())]);
    }

    #[test]
    fn disjoint_sequences_are_discarded() {
        assert!(prune_sequences(&toks("a b c"), &toks("d e f")).is_none());
        assert!(prune_sequences(&toks("a x b"), &toks("a y b")).is_none());
    }

    #[test]
    fn divergent_middle_becomes_slot() {
        let p = prune_sequences(
            &toks("REG ( \"a\" , 1 , fa ) ,"),
            &toks("REG ( \"b\" , 1 , fb ) ,"),
        )
        .unwrap();
        assert_eq!(p.template.placeholder_count(), 2);
        assert_eq!(p.template.fixed_len(), 7);
    }

    #[test]
    fn renaming_makes_variable_names_irrelevant() {
        let a = RenamedUnit::new("int f(int a) { int b = a; return b; }", &|n| n == "f");
        let b = RenamedUnit::new("int f(int x) { int y = x; return y; }", &|n| n == "f");
        assert_eq!(a.tokens, b.tokens);
        let p = prune_sequences(&a.tokens, &b.tokens).unwrap();
        assert_eq!(p.template.placeholder_count(), 0);
        assert_eq!(
            render_template(&a, &p),
            "int f(int v1) { int v2 = v1; return v2; }"
        );
    }

    #[test]
    fn rendering_keeps_layout_and_numbers_slots() {
        let is_global = |n: &str| n.starts_with("TOY") || n.ends_with("Func");
        let a = RenamedUnit::new("  TOY_DATE_FUNC(\"toy_year\", 1, yearFunc),", &is_global);
        let b = RenamedUnit::new("  TOY_DATE_FUNC(\"toy_month\", 1, monthFunc),", &is_global);
        let p = prune_sequences(&a.tokens, &b.tokens).unwrap();
        let first = if p.swapped { &b } else { &a };
        assert_eq!(
            render_template(first, &p),
            "TOY_DATE_FUNC({{SLOT_1}}, 1, {{SLOT_2}}),"
        );
    }
}
