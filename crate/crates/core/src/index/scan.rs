//! Per-file symbol extraction.

use std::sync::LazyLock;

use globset::GlobSet;
use regex::Regex;

use super::{Span, SymbolEntry, SymbolKind};
use crate::lexer::{self, matching_close, Token, TokenKind};
use crate::profile::DbProfile;
use crate::Result;

static DEFINE_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^#\s*define\s+([A-Za-z_][A-Za-z0-9_]*)").unwrap());

pub(crate) struct CompiledRules {
    registration: Vec<(GlobSet, Regex)>,
}

impl CompiledRules {
    pub(crate) fn new(profile: &DbProfile) -> Result<Self> {
        let mut registration = Vec::new();
        for rule in &profile.registration_patterns {
            if let Some(re) = rule.entry_regex()? {
                registration.push((rule.globs()?, re));
            }
        }
        Ok(CompiledRules { registration })
    }
}

/// Extracts every symbol defined in one file.
pub fn extract_symbols(file: &str, src: &str, profile: &DbProfile) -> Result<Vec<SymbolEntry>> {
    Ok(extract_with_rules(file, src, &CompiledRules::new(profile)?))
}

pub(crate) fn extract_with_rules(file: &str, src: &str, rules: &CompiledRules) -> Vec<SymbolEntry> {
    let lexed = lexer::lex(src);
    let mut out = Vec::new();

    for t in lexed
        .tokens
        .iter()
        .filter(|t| t.kind == TokenKind::Directive)
    {
        if let Some(c) = DEFINE_RE.captures(&t.text) {
            out.push(SymbolEntry {
                name: c[1].to_string(),
                kind: SymbolKind::Macro,
                file: file.to_string(),
                span: Span::new(t.line, t.end_line),
                signature_text: t.text.lines().next().unwrap_or_default().trim().to_string(),
                arity: None,
            });
        }
    }

    for (globs, re) in &rules.registration {
        if !globs.is_match(file) {
            continue;
        }
        for (i, line) in src.lines().enumerate() {
            if let Some(c) = re.captures(line) {
                let Some(name) = c.name("name") else { continue };
                out.push(SymbolEntry {
                    name: name.as_str().to_string(),
                    kind: SymbolKind::RegistrationEntry,
                    file: file.to_string(),
                    span: Span::new(i + 1, i + 1),
                    signature_text: line.trim().to_string(),
                    arity: c.name("arity").and_then(|a| a.as_str().parse().ok()),
                });
            }
        }
    }

    let code: Vec<Token> = lexed
        .tokens
        .into_iter()
        .filter(|t| t.kind != TokenKind::Directive)
        .collect();
    structural_pass(file, src, &code, &mut out);

    out.sort_by(|a, b| (a.span.start, a.kind, &a.name).cmp(&(b.span.start, b.kind, &b.name)));
    out.dedup_by(|a, b| a.span == b.span && a.kind == b.kind && a.name == b.name);
    out
}

enum Header {
    Transparent,
    Function(String),
    Record { name: Option<String>, typedef: bool },
    Other,
}

fn depth0_positions<'a>(header: &'a [Token]) -> impl Iterator<Item = (usize, &'a Token)> + 'a {
    let mut depth = 0i32;
    header.iter().enumerate().filter(move |(_, t)| {
        let at0 = depth == 0;
        if t.kind == TokenKind::Punct {
            match t.text.as_str() {
                "(" | "[" | "<" => depth += 1,
                ")" | "]" | ">" => depth -= 1,
                _ => {}
            }
        }
        at0
    })
}

fn classify(header: &[Token]) -> Header {
    let Some(first) = header.first() else {
        return Header::Other;
    };
    if first.text == "namespace"
        || (first.text == "extern" && header.get(1).is_some_and(|t| t.kind == TokenKind::Str))
    {
        return Header::Transparent;
    }
    if depth0_positions(header).any(|(_, t)| t.is_punct("=")) {
        return Header::Other;
    }

    // Constructor initializer lists: cut at the first single ':' after ')'.
    let mut cut = header.len();
    let mut seen_paren = false;
    for (i, t) in header.iter().enumerate() {
        if t.is_punct(")") {
            seen_paren = true;
        }
        if seen_paren && t.is_punct(":") {
            cut = i;
            break;
        }
    }
    let head = &header[..cut];

    if let Some(close_pos) = head.iter().rposition(|t| t.is_punct(")")) {
        let tail_ok = head[close_pos + 1..].iter().all(|t| t.is_ident());
        let open_pos = open_of(head, close_pos);
        if let (true, Some(open)) = (tail_ok, open_pos) {
            if open > 0 {
                let before = &head[open - 1];
                if before.is_ident()
                    && !matches!(
                        before.text.as_str(),
                        "if" | "while" | "for" | "switch" | "return" | "sizeof"
                    )
                {
                    // `__attribute__((x)) name(...)` style prefixes are rare
                    // enough to ignore.
                    return Header::Function(before.text.clone());
                }
            }
        }
    }

    let record_kw = head
        .iter()
        .position(|t| matches!(t.text.as_str(), "struct" | "class" | "union" | "enum"));
    if let Some(kw) = record_kw {
        let typedef = head[0].text == "typedef";
        let name = head[kw + 1..]
            .iter()
            .find(|t| t.is_ident() && t.text != "class" && t.text != "struct")
            .filter(|t| !lexer::is_keyword(&t.text))
            .map(|t| t.text.clone());
        // `enum class E`, `struct X : Base`: the name is the first plain ident.
        return Header::Record { name, typedef };
    }
    Header::Other
}

fn open_of(tokens: &[Token], close: usize) -> Option<usize> {
    let mut depth = 0i32;
    for i in (0..=close).rev() {
        let t = &tokens[i];
        if t.is_punct(")") {
            depth += 1;
        } else if t.is_punct("(") {
            depth -= 1;
            if depth == 0 {
                return Some(i);
            }
        }
    }
    None
}

fn header_text(src: &str, header: &[Token]) -> String {
    match (header.first(), header.last()) {
        (Some(a), Some(b)) => src[a.start..b.end]
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" "),
        _ => String::new(),
    }
}

/// A top-level construct found by [`walk_top_level`]; indices point into
/// the directive-free token slice.
pub(crate) enum Item {
    Alias {
        name: String,
        start: usize,
        semi: usize,
    },
    Function {
        name: String,
        start: usize,
        open: usize,
        close: usize,
    },
    Record {
        name: Option<String>,
        typedef: bool,
        start: usize,
        close: usize,
        end: usize,
    },
}

/// Visits function definitions, records and type aliases at file or
/// namespace scope.
pub(crate) fn walk_top_level(code: &[Token], mut visit: impl FnMut(Item)) {
    let mut i = 0usize;
    let mut stmt_start = 0usize;
    while i < code.len() {
        let t = &code[i];
        if t.is_punct(";") {
            if let Some(name) = typedef_alias(&code[stmt_start..i]) {
                visit(Item::Alias {
                    name,
                    start: stmt_start,
                    semi: i,
                });
            }
            stmt_start = i + 1;
            i += 1;
            continue;
        }
        if t.is_punct("}") {
            // Closes a transparent scope (namespace / extern "C").
            stmt_start = i + 1;
            i += 1;
            continue;
        }
        if t.is_punct("(") {
            // Skip parenthesised groups so braces inside them are not
            // mistaken for bodies.
            match matching_close(code, i) {
                Some(c) => i = c + 1,
                None => break,
            }
            continue;
        }
        if !t.is_punct("{") {
            i += 1;
            continue;
        }
        let header = &code[stmt_start..i];
        let Some(close) = matching_close(code, i) else {
            break;
        };
        match classify(header) {
            Header::Transparent => {
                stmt_start = i + 1;
                i += 1;
            }
            Header::Function(name) if !header.is_empty() => {
                visit(Item::Function {
                    name,
                    start: stmt_start,
                    open: i,
                    close,
                });
                i = close + 1;
                stmt_start = i;
            }
            Header::Record { name, typedef } if !header.is_empty() => {
                let semi = (close + 1..code.len()).find(|&j| code[j].is_punct(";"));
                let end = semi.unwrap_or(close);
                visit(Item::Record {
                    name,
                    typedef,
                    start: stmt_start,
                    close,
                    end,
                });
                i = end + 1;
                stmt_start = i;
            }
            _ => {
                i = close + 1;
            }
        }
    }
}

fn structural_pass(file: &str, src: &str, code: &[Token], out: &mut Vec<SymbolEntry>) {
    let mut push = |name: String, kind: SymbolKind, start: usize, end: usize, sig: String| {
        out.push(SymbolEntry {
            name,
            kind,
            file: file.to_string(),
            span: Span::new(start, end.max(start)),
            signature_text: sig,
            arity: None,
        });
    };
    walk_top_level(code, |item| match item {
        Item::Alias { name, start, semi } => {
            let header = &code[start..semi];
            push(
                name,
                SymbolKind::TypeAlias,
                header[0].line,
                code[semi].end_line,
                header_text(src, header),
            );
        }
        Item::Function {
            name,
            start,
            open,
            close,
        } => {
            let header = &code[start..open];
            push(
                name,
                SymbolKind::Function,
                header[0].line,
                code[close].end_line,
                header_text(src, header),
            );
        }
        Item::Record {
            name,
            typedef,
            start,
            close,
            end,
        } => {
            let header = &code[start
                ..code[start..]
                    .iter()
                    .position(|t| t.is_punct("{"))
                    .map_or(close, |p| start + p)];
            let start_line = code[start].line;
            let end_line = code[end].end_line;
            let sig = header_text(src, header);
            if let Some(n) = name {
                push(
                    n,
                    SymbolKind::StructOrClass,
                    start_line,
                    end_line,
                    sig.clone(),
                );
            }
            if typedef {
                for alias in code[close + 1..end]
                    .iter()
                    .filter(|t| t.is_ident() && !lexer::is_keyword(&t.text))
                {
                    push(
                        alias.text.clone(),
                        SymbolKind::TypeAlias,
                        start_line,
                        end_line,
                        sig.clone(),
                    );
                }
            }
        }
    });
}

/// `typedef long long toy_int;`, `typedef void (*fn_t)(int);`,
/// `using Alias = Type;`
fn typedef_alias(header: &[Token]) -> Option<String> {
    let first = header.first()?;
    if first.text == "using" {
        let name = header.get(1)?;
        if name.is_ident() && header.get(2).is_some_and(|t| t.is_punct("=")) {
            return Some(name.text.clone());
        }
        return None;
    }
    if first.text != "typedef" {
        return None;
    }
    for w in header.windows(3) {
        if w[0].is_punct("(") && w[1].is_punct("*") && w[2].is_ident() {
            return Some(w[2].text.clone());
        }
    }
    header
        .iter()
        .rev()
        .find(|t| t.is_ident() && !lexer::is_keyword(&t.text))
        .map(|t| t.text.clone())
}
