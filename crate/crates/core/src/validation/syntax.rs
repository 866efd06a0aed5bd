//! Single-file checks: lexical sanity, bracket balance and
//! declared-before-use for local variables.

use std::collections::BTreeSet;
use std::path::Path;

use super::{Diagnostic, ErrorClass, Stage, StageOutcome};
use crate::index::edges::{declared_names, is_declaration_site};
use crate::index::scan::{walk_top_level, Item};
use crate::lexer::{self, Token, TokenKind};
use crate::profile::DbProfile;
use crate::{Error, Result};

const EXTENSIONS: &[&str] = &["c", "h", "cc", "cpp", "cxx", "hpp", "hh", "hxx", "inc"];

/// Runs the syntax stage over repository-relative `files`.
pub fn validate_syntax(root: &Path, files: &[String], profile: &DbProfile) -> Result<StageOutcome> {
    let _ = profile;
    let mut diags = Vec::new();
    for rel in files {
        let ext = Path::new(rel)
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or("");
        if !EXTENSIONS.contains(&ext) {
            return Err(Error::Config(format!("no parser profile for `{rel}`")));
        }
        let path = root.join(rel);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut known = BTreeSet::new();
        for header in local_includes(&text) {
            let dir = Path::new(rel).parent().unwrap_or(Path::new(""));
            for cand in [root.join(dir).join(&header), root.join(&header)] {
                if let Ok(h) = std::fs::read_to_string(&cand) {
                    known.extend(file_scope_names(&lexer::tokens(&h)));
                    break;
                }
            }
        }
        diags.extend(validate_syntax_text(rel, &text, &known));
    }
    Ok(if diags.is_empty() {
        StageOutcome::pass(Stage::Syntax, vec![])
    } else {
        StageOutcome::fail(Stage::Syntax, diags)
    })
}

fn local_includes(text: &str) -> Vec<String> {
    lexer::tokens(text)
        .into_iter()
        .filter(|t| t.kind == TokenKind::Directive)
        .filter_map(|t| {
            let rest = t.text.trim_start_matches('#').trim_start();
            let rest = rest.strip_prefix("include")?.trim();
            let inner = rest.strip_prefix('"')?;
            Some(inner[..inner.find('"')?].to_string())
        })
        .collect()
}

/// Every identifier that appears outside function bodies, plus macro names.
fn file_scope_names(tokens: &[Token]) -> BTreeSet<String> {
    let mut names = BTreeSet::new();
    for t in tokens.iter().filter(|t| t.kind == TokenKind::Directive) {
        for inner in lexer::tokens(t.text.trim_start_matches('#')) {
            if inner.is_ident() {
                names.insert(inner.text);
            }
        }
    }
    let code: Vec<Token> = tokens
        .iter()
        .filter(|t| t.kind != TokenKind::Directive)
        .cloned()
        .collect();
    let mut inside = vec![false; code.len()];
    walk_top_level(&code, |item| {
        if let Item::Function { open, close, .. } = item {
            for flag in &mut inside[open + 1..close] {
                *flag = true;
            }
        }
    });
    for (t, inside) in code.iter().zip(inside) {
        if !inside && t.is_ident() {
            names.insert(t.text.clone());
        }
    }
    names
}

/// Checks one file's text. `known` holds names visible from local headers.
pub fn validate_syntax_text(file: &str, text: &str, known: &BTreeSet<String>) -> Vec<Diagnostic> {
    let lexed = lexer::lex(text);
    let mut diags: Vec<Diagnostic> = lexed
        .errors
        .iter()
        .map(|e| {
            Diagnostic::error(ErrorClass::BuildFailure, e.message.clone()).at(file, Some(e.line))
        })
        .collect();
    if let Some(d) = bracket_balance(file, &lexed.tokens) {
        diags.push(d);
        return diags;
    }
    if !diags.is_empty() {
        return diags;
    }

    let mut visible = file_scope_names(&lexed.tokens);
    visible.extend(known.iter().cloned());
    let code: Vec<Token> = lexed
        .tokens
        .into_iter()
        .filter(|t| t.kind != TokenKind::Directive)
        .collect();
    let mut bodies = Vec::new();
    walk_top_level(&code, |item| {
        if let Item::Function {
            start, open, close, ..
        } = item
        {
            bodies.push((start, open, close));
        }
    });
    for (start, open, close) in bodies {
        diags.extend(undeclared_locals(
            file,
            &code[start..=close],
            open - start,
            &visible,
        ));
    }
    diags
}

fn bracket_balance(file: &str, tokens: &[Token]) -> Option<Diagnostic> {
    let mut stack: Vec<&Token> = Vec::new();
    for t in tokens.iter().filter(|t| t.kind == TokenKind::Punct) {
        match t.text.as_str() {
            "(" | "[" | "{" => stack.push(t),
            ")" | "]" | "}" => {
                let want = match t.text.as_str() {
                    ")" => "(",
                    "]" => "[",
                    _ => "{",
                };
                match stack.pop() {
                    Some(open) if open.text == want => {}
                    Some(open) => {
                        return Some(
                            Diagnostic::error(
                                ErrorClass::BuildFailure,
                                format!(
                                    "`{}` closes `{}` opened on line {}",
                                    t.text, open.text, open.line
                                ),
                            )
                            .at(file, Some(t.line)),
                        )
                    }
                    None => {
                        return Some(
                            Diagnostic::error(
                                ErrorClass::BuildFailure,
                                format!("unmatched `{}`", t.text),
                            )
                            .at(file, Some(t.line)),
                        )
                    }
                }
            }
            _ => {}
        }
    }
    stack.first().map(|open| {
        Diagnostic::error(
            ErrorClass::BuildFailure,
            format!("unclosed `{}`", open.text),
        )
        .at(file, Some(open.line))
    })
}

/// Identifiers in value position that are neither declared earlier in the
/// function nor visible at file scope. Calls, member accesses, labels and
/// ALL_CAPS names (macro constants from system headers) are not checked.
fn undeclared_locals(
    file: &str,
    func: &[Token],
    open: usize,
    visible: &BTreeSet<String>,
) -> Vec<Diagnostic> {
    let mut declared = declared_names(&func[..open]);
    let mut out = Vec::new();
    let mut reported = BTreeSet::new();
    for i in open + 1..func.len() {
        let t = &func[i];
        if !t.is_ident() || lexer::is_keyword(&t.text) {
            continue;
        }
        if is_declaration_site(func, i) {
            declared.insert(t.text.clone());
            continue;
        }
        let prev = &func[i - 1];
        let next = func.get(i + 1);
        let skip = prev.is_punct(".")
            || prev.is_punct("->")
            || prev.is_punct("::")
            || prev.text == "goto"
            || prev.text == "struct"
            || prev.text == "union"
            || prev.text == "enum"
            || next.is_some_and(|n| n.is_punct("(") || n.is_punct(":") || n.is_punct("::"))
            || next.is_some_and(|n| n.is_ident() || (n.is_punct("*") && prev.is_punct("(")))
            || !t.text.chars().any(|c| c.is_ascii_lowercase());
        if skip || declared.contains(&t.text) || visible.contains(&t.text) {
            continue;
        }
        if reported.insert(t.text.clone()) {
            out.push(
                Diagnostic::error(
                    ErrorClass::IncorrectReference,
                    format!("`{}` is used before any declaration", t.text),
                )
                .at(file, Some(t.line)),
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check(src: &str) -> Vec<Diagnostic> {
        validate_syntax_text("a.c", src, &BTreeSet::new())
    }

    #[test]
    fn clean_file_passes() {
        let src = "#include <string.h>\nstatic int g;\nint f(int a, char **b) {\n  int i, n = 0;\n  for (i = 0; i < a; i++) n += strlen(b[i]) + g;\n  return n;\n}\n";
        assert_eq!(check(src), vec![]);
    }

    #[test]
    fn unbalanced_brace_reports_line() {
        let d = check("int f(void) {\n  if (1) {\n    return 0;\n}\n");
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].line, Some(1));
        assert_eq!(d[0].error_class, Some(ErrorClass::BuildFailure));
    }

    #[test]
    fn undeclared_local_is_incorrect_reference() {
        let d = check("int f(int a) {\n  int b = a;\n  return b + c;\n}\n");
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].error_class, Some(ErrorClass::IncorrectReference));
        assert_eq!(d[0].line, Some(3));
        assert!(d[0].message.contains("`c`"));
    }

    #[test]
    fn use_before_declaration_flagged() {
        let d = check("int f(void) {\n  x = 1;\n  int x;\n  return x;\n}\n");
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].line, Some(2));
    }

    #[test]
    fn labels_members_casts_and_enum_constants() {
        let src = "enum { red, green };\nstruct S { int v; };\nint f(struct S *s) {\n  long long t = (long long) s->v;\n  if (t) goto done;\n  t = green;\ndone:\n  return (int) t;\n}\n";
        assert_eq!(check(src), vec![]);
    }

    #[test]
    fn header_names_are_visible() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("h.h"), "extern int counter;\n").unwrap();
        std::fs::write(
            dir.path().join("a.c"),
            "#include \"h.h\"\nint f(void) { return counter; }\n",
        )
        .unwrap();
        let p = crate::index::tests::profile();
        assert!(
            validate_syntax(dir.path(), &["a.c".into()], &p)
                .unwrap()
                .passed
        );
        assert!(matches!(
            validate_syntax(dir.path(), &["notes.txt".into()], &p),
            Err(Error::Config(_))
        ));
    }
}
