//! Tokenizer for the MemC subset, including the `//@` annotation comments.

use std::fmt;

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    // keywords
    Typedef,
    Struct,
    Static,
    Void,
    If,
    Else,
    While,
    For,
    Return,
    Break,
    Sizeof,
    Null,
    True,
    False,
    // annotation markers
    Ghost,
    LabelMark(String),
    RequestSize(String),
    // punctuation
    LBrace,
    RBrace,
    LParen,
    RParen,
    Semi,
    Comma,
    Star,
    Amp,
    Pipe,
    Tilde,
    Bang,
    Plus,
    Minus,
    Slash,
    Percent,
    Arrow,
    Assign,
    PlusAssign,
    MinusAssign,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    AndAnd,
    OrOr,
}

#[derive(Clone, Debug)]
pub struct Lexed {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

#[derive(Clone, Debug)]
pub struct LexError {
    pub msg: String,
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for LexError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.msg)
    }
}

pub fn tokenize(src: &str) -> Result<Vec<Lexed>, LexError> {
    let bytes: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = 1;
    let mut col = 1;
    macro_rules! push {
        ($tok:expr, $n:expr) => {{
            out.push(Lexed { tok: $tok, line, col });
            i += $n;
            col += $n;
        }};
    }
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            ' ' | '\t' | '\r' => {
                i += 1;
                col += 1;
            }
            '/' if bytes.get(i + 1) == Some(&'/') => {
                // a comment; `//@` annotations are meaningful
                let rest: String = bytes[i..].iter().take_while(|c| **c != '\n').collect();
                if let Some(ann) = rest.strip_prefix("//@") {
                    let mut words = ann.split_whitespace();
                    match words.next() {
                        Some("ghost") => {
                            // keep lexing the remainder of the line normally
                            out.push(Lexed { tok: Tok::Ghost, line, col });
                            i += "//@ghost".len();
                            col += "//@ghost".len();
                            continue;
                        }
                        Some("label") => {
                            let name = words.next().unwrap_or("").to_string();
                            if name.is_empty() {
                                return Err(LexError {
                                    msg: "//@label needs a name".into(),
                                    line,
                                    col,
                                });
                            }
                            out.push(Lexed { tok: Tok::LabelMark(name), line, col });
                        }
                        Some("request_size") => {
                            let name = words.next().unwrap_or("").to_string();
                            if name.is_empty() {
                                return Err(LexError {
                                    msg: "//@request_size needs a variable".into(),
                                    line,
                                    col,
                                });
                            }
                            out.push(Lexed { tok: Tok::RequestSize(name), line, col });
                        }
                        _ => {} // unknown annotation: ignored like a comment
                    }
                }
                while i < bytes.len() && bytes[i] != '\n' {
                    i += 1;
                }
            }
            '/' if bytes.get(i + 1) == Some(&'*') => {
                i += 2;
                col += 2;
                while i + 1 < bytes.len() && !(bytes[i] == '*' && bytes[i + 1] == '/') {
                    if bytes[i] == '\n' {
                        line += 1;
                        col = 1;
                    } else {
                        col += 1;
                    }
                    i += 1;
                }
                i += 2;
                col += 2;
            }
            '"' => {
                let start = i + 1;
                let mut j = start;
                while j < bytes.len() && bytes[j] != '"' {
                    j += 1;
                }
                if j >= bytes.len() {
                    return Err(LexError { msg: "unterminated string".into(), line, col });
                }
                let s: String = bytes[start..j].iter().collect();
                let n = j + 1 - i;
                push!(Tok::Str(s), n);
            }
            '0'..='9' => {
                let start = i;
                let mut j = i;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                let text: String = bytes[start..j].iter().collect();
                let v: i64 = text.parse().map_err(|_| LexError {
                    msg: format!("bad integer literal {}", text),
                    line,
                    col,
                })?;
                let n = j - i;
                push!(Tok::Int(v), n);
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == '_') {
                    j += 1;
                }
                let word: String = bytes[start..j].iter().collect();
                let tok = match word.as_str() {
                    "typedef" => Tok::Typedef,
                    "struct" => Tok::Struct,
                    "static" => Tok::Static,
                    "void" => Tok::Void,
                    "if" => Tok::If,
                    "else" => Tok::Else,
                    "while" => Tok::While,
                    "for" => Tok::For,
                    "return" => Tok::Return,
                    "break" => Tok::Break,
                    "sizeof" => Tok::Sizeof,
                    "NULL" => Tok::Null,
                    "true" => Tok::True,
                    "false" => Tok::False,
                    _ => Tok::Ident(word.clone()),
                };
                let n = j - i;
                push!(tok, n);
            }
            '-' if bytes.get(i + 1) == Some(&'>') => push!(Tok::Arrow, 2),
            '-' if bytes.get(i + 1) == Some(&'=') => push!(Tok::MinusAssign, 2),
            '+' if bytes.get(i + 1) == Some(&'=') => push!(Tok::PlusAssign, 2),
            '=' if bytes.get(i + 1) == Some(&'=') => push!(Tok::EqEq, 2),
            '!' if bytes.get(i + 1) == Some(&'=') => push!(Tok::NotEq, 2),
            '<' if bytes.get(i + 1) == Some(&'=') => push!(Tok::Le, 2),
            '>' if bytes.get(i + 1) == Some(&'=') => push!(Tok::Ge, 2),
            '&' if bytes.get(i + 1) == Some(&'&') => push!(Tok::AndAnd, 2),
            '|' if bytes.get(i + 1) == Some(&'|') => push!(Tok::OrOr, 2),
            '{' => push!(Tok::LBrace, 1),
            '}' => push!(Tok::RBrace, 1),
            '(' => push!(Tok::LParen, 1),
            ')' => push!(Tok::RParen, 1),
            ';' => push!(Tok::Semi, 1),
            ',' => push!(Tok::Comma, 1),
            '*' => push!(Tok::Star, 1),
            '&' => push!(Tok::Amp, 1),
            '|' => push!(Tok::Pipe, 1),
            '~' => push!(Tok::Tilde, 1),
            '!' => push!(Tok::Bang, 1),
            '+' => push!(Tok::Plus, 1),
            '-' => push!(Tok::Minus, 1),
            '/' => push!(Tok::Slash, 1),
            '%' => push!(Tok::Percent, 1),
            '=' => push!(Tok::Assign, 1),
            '<' => push!(Tok::Lt, 1),
            '>' => push!(Tok::Gt, 1),
            other => {
                return Err(LexError {
                    msg: format!("unexpected character {:?}", other),
                    line,
                    col,
                })
            }
        }
    }
    Ok(out)
}
