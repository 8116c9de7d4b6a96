use super::ast::{StrPart, StringExpr};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Int(i64),
    Str(StringExpr),
    LParen,
    RParen,
    Comma,
    Colon,
    Assign,
    PlusAssign,
    MinusAssign,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Star,
    Ellipsis,
    /// Any other punctuation; always a syntax error in the parser.
    Other(char),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Token {
    pub tok: Tok,
    /// 1-based column in the original line.
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LexError {
    pub col: usize,
    pub message: String,
}

/// Tokenizes one source line. `offset` is the number of indentation
/// characters already stripped, so columns refer to the original line.
/// A `#` outside a string ends the line.
pub(crate) fn tokenize(line: &str, offset: usize) -> Result<Vec<Token>, LexError> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = offset + i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '#' {
            break;
        }
        let next = chars.get(i + 1).copied();
        // String prefix: f"..." / F'...'
        if (c == 'f' || c == 'F') && matches!(next, Some('"') | Some('\'')) {
            let (s, len) = lex_string(&chars[i + 1..], col + 1, true)?;
            out.push(Token {
                tok: Tok::Str(s),
                col,
            });
            i += 1 + len;
            continue;
        }
        if c == '"' || c == '\'' {
            let (s, len) = lex_string(&chars[i..], col, false)?;
            out.push(Token {
                tok: Tok::Str(s),
                col,
            });
            i += len;
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '_') {
                i += 1;
            }
            let text: String = chars[start..i].iter().filter(|c| **c != '_').collect();
            let value = text.parse::<i64>().map_err(|_| LexError {
                col,
                message: format!("integer literal `{text}` out of range"),
            })?;
            out.push(Token {
                tok: Tok::Int(value),
                col,
            });
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                col,
            });
            continue;
        }
        let (tok, len) = match (c, next) {
            ('.', Some('.')) if chars.get(i + 2) == Some(&'.') => (Tok::Ellipsis, 3),
            ('=', Some('=')) => (Tok::Eq, 2),
            ('!', Some('=')) => (Tok::Ne, 2),
            ('<', Some('=')) => (Tok::Le, 2),
            ('>', Some('=')) => (Tok::Ge, 2),
            ('+', Some('=')) => (Tok::PlusAssign, 2),
            ('-', Some('=')) => (Tok::MinusAssign, 2),
            ('(', _) => (Tok::LParen, 1),
            (')', _) => (Tok::RParen, 1),
            (',', _) => (Tok::Comma, 1),
            (':', _) => (Tok::Colon, 1),
            ('=', _) => (Tok::Assign, 1),
            ('<', _) => (Tok::Lt, 1),
            ('>', _) => (Tok::Gt, 1),
            ('+', _) => (Tok::Plus, 1),
            ('-', _) => (Tok::Minus, 1),
            ('*', _) => (Tok::Star, 1),
            (other, _) => (Tok::Other(other), 1),
        };
        out.push(Token { tok, col });
        i += len;
    }
    Ok(out)
}

/// Lexes a quoted string starting at `chars[0]` (the quote). Returns the
/// parsed expression and the number of chars consumed.
///
/// `{name}` is an interpolation slot in both plain and f-strings. In
/// f-strings `{{`/`}}` are escapes and any other brace use is an error; in
/// plain strings braces that do not form a slot are literal text.
fn lex_string(chars: &[char], col: usize, fstring: bool) -> Result<(StringExpr, usize), LexError> {
    let quote = chars[0];
    let mut parts: Vec<StrPart> = Vec::new();
    let mut lit = String::new();
    let mut i = 1;
    let err = |message: String| LexError { col, message };
    loop {
        let Some(&c) = chars.get(i) else {
            return Err(err("unterminated string literal".to_string()));
        };
        if c == quote {
            i += 1;
            break;
        }
        match c {
            '\\' => {
                let esc = chars
                    .get(i + 1)
                    .copied()
                    .ok_or_else(|| err("unterminated string literal".to_string()))?;
                lit.push(match esc {
                    'n' => '\n',
                    't' => '\t',
                    other => other,
                });
                i += 2;
            }
            '{' if chars.get(i + 1) == Some(&'{') && fstring => {
                lit.push('{');
                i += 2;
            }
            '}' if chars.get(i + 1) == Some(&'}') && fstring => {
                lit.push('}');
                i += 2;
            }
            '{' => {
                let close = chars[i + 1..]
                    .iter()
                    .position(|&ch| ch == '}' || ch == quote);
                let name: Option<String> = match close {
                    Some(end) if chars[i + 1 + end] == '}' => {
                        let name: String = chars[i + 1..i + 1 + end]
                            .iter()
                            .collect::<String>()
                            .trim()
                            .to_string();
                        let valid = !name.is_empty()
                            && name
                                .chars()
                                .next()
                                .is_some_and(|c| c.is_alphabetic() || c == '_')
                            && name.chars().all(|c| c.is_alphanumeric() || c == '_');
                        valid.then_some(name)
                    }
                    _ => None,
                };
                match name {
                    Some(name) => {
                        if !lit.is_empty() {
                            parts.push(StrPart::Lit(std::mem::take(&mut lit)));
                        }
                        let len = close.unwrap() + 2;
                        parts.push(StrPart::Slot(name));
                        i += len;
                    }
                    None if fstring => {
                        return Err(err(
                            "only `{variable}` slots are supported in f-strings".to_string()
                        ));
                    }
                    None => {
                        lit.push('{');
                        i += 1;
                    }
                }
            }
            '}' if fstring => return Err(err("single `}` in f-string".to_string())),
            other => {
                lit.push(other);
                i += 1;
            }
        }
    }
    if !lit.is_empty() || parts.is_empty() {
        parts.push(StrPart::Lit(lit));
    }
    Ok((StringExpr { parts }, i))
}
