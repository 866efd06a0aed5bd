//! Lexical pass for C-like and C++-like sources.
//!
//! The lexer never fails: problems such as an unterminated string or block
//! comment are reported in [`Lexed::errors`] and lexing continues. Comments
//! are collected separately; preprocessor directives become a single
//! [`TokenKind::Directive`] token spanning the whole logical line.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Language {
    C,
    Cpp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Ident,
    Number,
    Str,
    Char,
    Punct,
    Directive,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    /// 1-based line of the first character.
    pub line: usize,
    /// 1-based line of the last character.
    pub end_line: usize,
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn is_ident(&self) -> bool {
        self.kind == TokenKind::Ident
    }

    pub fn is_punct(&self, p: &str) -> bool {
        self.kind == TokenKind::Punct && self.text == p
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Comment {
    pub start_line: usize,
    pub end_line: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct Lexed {
    pub tokens: Vec<Token>,
    pub comments: Vec<Comment>,
    pub errors: Vec<LexError>,
}

const PUNCT3: &[&str] = &["<<=", ">>=", "...", "->*"];
const PUNCT2: &[&str] = &[
    "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "+=", "-=", "*=", "/=", "%=",
    "&=", "|=", "^=", "::", "##",
];

const C_KEYWORDS: &[&str] = &[
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else",
    "enum", "extern", "float", "for", "goto", "if", "inline", "int", "long", "register",
    "restrict", "return", "short", "signed", "sizeof", "static", "struct", "switch", "typedef",
    "union", "unsigned", "void", "volatile", "while", "_Bool", "bool", "true", "false", "NULL",
];

const CPP_KEYWORDS: &[&str] = &[
    "class",
    "namespace",
    "public",
    "private",
    "protected",
    "virtual",
    "override",
    "final",
    "template",
    "typename",
    "using",
    "new",
    "delete",
    "this",
    "operator",
    "friend",
    "explicit",
    "constexpr",
    "nullptr",
    "noexcept",
    "try",
    "catch",
    "throw",
    "mutable",
    "static_cast",
    "dynamic_cast",
    "reinterpret_cast",
    "const_cast",
    "decltype",
    "auto",
];

/// Keywords plus builtin type names that never resolve to user symbols.
pub fn is_keyword(word: &str) -> bool {
    C_KEYWORDS.contains(&word) || CPP_KEYWORDS.contains(&word)
}

/// Builtin scalar type names (subset of keywords).
pub fn is_builtin_type(word: &str) -> bool {
    matches!(
        word,
        "void"
            | "char"
            | "short"
            | "int"
            | "long"
            | "float"
            | "double"
            | "signed"
            | "unsigned"
            | "bool"
            | "_Bool"
            | "auto"
    )
}

pub fn lex(src: &str) -> Lexed {
    Lexer::new(src).run()
}

/// Tokens only; convenient for callers that ignore comments and errors.
pub fn tokens(src: &str) -> Vec<Token> {
    lex(src).tokens
}

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    line: usize,
    at_line_start: bool,
    out: Lexed,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src,
            bytes: src.as_bytes(),
            pos: 0,
            line: 1,
            at_line_start: true,
            out: Lexed::default(),
        }
    }

    fn peek(&self, off: usize) -> Option<u8> {
        self.bytes.get(self.pos + off).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.peek(0)?;
        self.pos += 1;
        if b == b'\n' {
            self.line += 1;
        }
        Some(b)
    }

    fn push(&mut self, kind: TokenKind, start: usize, line: usize) {
        self.out.tokens.push(Token {
            kind,
            text: self.src[start..self.pos].to_string(),
            line,
            end_line: self.line,
            start,
            end: self.pos,
        });
        self.at_line_start = false;
    }

    fn run(mut self) -> Lexed {
        while let Some(b) = self.peek(0) {
            let start = self.pos;
            let line = self.line;
            match b {
                b'\n' => {
                    self.bump();
                    self.at_line_start = true;
                }
                b' ' | b'\t' | b'\r' | 0x0c => {
                    self.bump();
                }
                b'/' if self.peek(1) == Some(b'/') => {
                    while let Some(c) = self.peek(0) {
                        if c == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                    self.out.comments.push(Comment {
                        start_line: line,
                        end_line: line,
                        text: self.src[start..self.pos].to_string(),
                    });
                }
                b'/' if self.peek(1) == Some(b'*') => {
                    self.bump();
                    self.bump();
                    let mut closed = false;
                    while let Some(c) = self.peek(0) {
                        if c == b'*' && self.peek(1) == Some(b'/') {
                            self.bump();
                            self.bump();
                            closed = true;
                            break;
                        }
                        self.bump();
                    }
                    if !closed {
                        self.out.errors.push(LexError {
                            line,
                            message: "unterminated block comment".into(),
                        });
                    }
                    self.out.comments.push(Comment {
                        start_line: line,
                        end_line: self.line,
                        text: self.src[start..self.pos].to_string(),
                    });
                }
                b'#' if self.at_line_start => {
                    // Logical line, honouring backslash continuations.
                    while let Some(c) = self.peek(0) {
                        if c == b'\\' && self.peek(1) == Some(b'\n') {
                            self.bump();
                            self.bump();
                            continue;
                        }
                        if c == b'\\' && self.peek(1) == Some(b'\r') && self.peek(2) == Some(b'\n')
                        {
                            self.bump();
                            self.bump();
                            self.bump();
                            continue;
                        }
                        if c == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                    let end = self.pos;
                    self.out.tokens.push(Token {
                        kind: TokenKind::Directive,
                        text: self.src[start..end].to_string(),
                        line,
                        end_line: self.line,
                        start,
                        end,
                    });
                }
                b'"' | b'\'' => {
                    self.bump();
                    let mut closed = false;
                    while let Some(c) = self.peek(0) {
                        if c == b'\\' {
                            self.bump();
                            self.bump();
                            continue;
                        }
                        if c == b'\n' {
                            break;
                        }
                        self.bump();
                        if c == b {
                            closed = true;
                            break;
                        }
                    }
                    if !closed {
                        self.out.errors.push(LexError {
                            line,
                            message: if b == b'"' {
                                "unterminated string literal".into()
                            } else {
                                "unterminated character literal".into()
                            },
                        });
                    }
                    let kind = if b == b'"' {
                        TokenKind::Str
                    } else {
                        TokenKind::Char
                    };
                    self.push(kind, start, line);
                }
                c if c.is_ascii_alphabetic() || c == b'_' => {
                    while let Some(c) = self.peek(0) {
                        if c.is_ascii_alphanumeric() || c == b'_' {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    self.push(TokenKind::Ident, start, line);
                }
                c if c.is_ascii_digit()
                    || (c == b'.' && self.peek(1).is_some_and(|d| d.is_ascii_digit())) =>
                {
                    while let Some(c) = self.peek(0) {
                        let exp_sign = (c == b'+' || c == b'-')
                            && matches!(self.bytes[self.pos - 1], b'e' | b'E' | b'p' | b'P');
                        if c.is_ascii_alphanumeric() || c == b'.' || c == b'_' || exp_sign {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    self.push(TokenKind::Number, start, line);
                }
                c if c >= 0x80 => {
                    // Non-ASCII outside literals: consume the whole char.
                    let ch = self.src[self.pos..]
                        .chars()
                        .next()
                        .map_or(1, char::len_utf8);
                    for _ in 0..ch {
                        self.bump();
                    }
                    self.push(TokenKind::Punct, start, line);
                }
                _ => {
                    let rest = &self.src[self.pos..];
                    let len = PUNCT3
                        .iter()
                        .find(|p| rest.starts_with(**p))
                        .or_else(|| PUNCT2.iter().find(|p| rest.starts_with(**p)))
                        .map_or(1, |p| p.len());
                    for _ in 0..len {
                        self.bump();
                    }
                    self.push(TokenKind::Punct, start, line);
                }
            }
        }
        self.out
    }
}

/// Index of the token closing the bracket opened at `open`, if balanced.
pub fn matching_close(tokens: &[Token], open: usize) -> Option<usize> {
    let (o, c) = match tokens.get(open)?.text.as_str() {
        "(" => ("(", ")"),
        "{" => ("{", "}"),
        "[" => ("[", "]"),
        _ => return None,
    };
    let mut depth = 0usize;
    for (i, t) in tokens.iter().enumerate().skip(open) {
        if t.kind != TokenKind::Punct {
            continue;
        }
        if t.text == o {
            depth += 1;
        } else if t.text == c {
            depth -= 1;
            if depth == 0 {
                return Some(i);
            }
        }
    }
    None
}
