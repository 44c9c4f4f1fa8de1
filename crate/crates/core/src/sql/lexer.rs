//! Tokenizer. Tracks 1-based line/column of every token start so parse
//! errors always point into the input text.

use super::SyntaxError;

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    /// Identifier or keyword; keywords match case-insensitively at the
    /// parser, identifiers stay case-sensitive.
    Word(String),
    Int(i64),
    Float(f64),
    Str(String),
    Sym(&'static str),
    Eof,
}

impl TokenKind {
    pub fn describe(&self) -> String {
        match self {
            TokenKind::Word(w) => format!("'{w}'"),
            TokenKind::Int(v) => format!("{v}"),
            TokenKind::Float(v) => format!("{v}"),
            TokenKind::Str(s) => format!("'{s}'"),
            TokenKind::Sym(s) => format!("'{s}'"),
            TokenKind::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub line: u32,
    pub col: u32,
}

pub fn tokenize(input: &str) -> Result<Vec<Token>, SyntaxError> {
    let mut tokens = Vec::new();
    let chars: Vec<char> = input.chars().collect();
    let mut i = 0;
    let mut line = 1u32;
    let mut col = 1u32;

    macro_rules! bump {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        let (tline, tcol) = (line, col);
        if c.is_whitespace() {
            bump!();
            continue;
        }
        // -- line comment
        if c == '-' && chars.get(i + 1) == Some(&'-') {
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                bump!();
            }
            let word: String = chars[start..i].iter().collect();
            tokens.push(Token {
                kind: TokenKind::Word(word),
                line: tline,
                col: tcol,
            });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            let mut is_float = false;
            while i < chars.len() && chars[i].is_ascii_digit() {
                bump!();
            }
            if i < chars.len()
                && chars[i] == '.'
                && chars.get(i + 1).is_some_and(|c| c.is_ascii_digit())
            {
                is_float = true;
                bump!();
                while i < chars.len() && chars[i].is_ascii_digit() {
                    bump!();
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if chars.get(j) == Some(&'+') || chars.get(j) == Some(&'-') {
                    j += 1;
                }
                if chars.get(j).is_some_and(|c| c.is_ascii_digit()) {
                    is_float = true;
                    while i < j {
                        bump!();
                    }
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        bump!();
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let kind = if is_float {
                TokenKind::Float(text.parse().map_err(|_| SyntaxError {
                    line: tline,
                    col: tcol,
                    expected: vec!["numeric literal".into()],
                    found: text.clone(),
                })?)
            } else {
                TokenKind::Int(text.parse().map_err(|_| SyntaxError {
                    line: tline,
                    col: tcol,
                    expected: vec!["integer literal".into()],
                    found: text.clone(),
                })?)
            };
            tokens.push(Token {
                kind,
                line: tline,
                col: tcol,
            });
            continue;
        }
        if c == '\'' {
            bump!();
            let mut s = String::new();
            loop {
                if i >= chars.len() {
                    return Err(SyntaxError {
                        line: tline,
                        col: tcol,
                        expected: vec!["closing quote".into()],
                        found: "end of input".into(),
                    });
                }
                if chars[i] == '\'' {
                    // '' escapes a quote
                    if chars.get(i + 1) == Some(&'\'') {
                        s.push('\'');
                        bump!();
                        bump!();
                        continue;
                    }
                    bump!();
                    break;
                }
                s.push(chars[i]);
                bump!();
            }
            tokens.push(Token {
                kind: TokenKind::Str(s),
                line: tline,
                col: tcol,
            });
            continue;
        }
        let two: Option<&'static str> = match (c, chars.get(i + 1)) {
            ('<', Some('=')) => Some("<="),
            ('>', Some('=')) => Some(">="),
            ('<', Some('>')) => Some("<>"),
            ('!', Some('=')) => Some("<>"),
            _ => None,
        };
        if let Some(sym) = two {
            bump!();
            bump!();
            tokens.push(Token {
                kind: TokenKind::Sym(sym),
                line: tline,
                col: tcol,
            });
            continue;
        }
        let one: Option<&'static str> = match c {
            '(' => Some("("),
            ')' => Some(")"),
            ',' => Some(","),
            ';' => Some(";"),
            '.' => Some("."),
            '=' => Some("="),
            '<' => Some("<"),
            '>' => Some(">"),
            '+' => Some("+"),
            '-' => Some("-"),
            '*' => Some("*"),
            '/' => Some("/"),
            _ => None,
        };
        match one {
            Some(sym) => {
                bump!();
                tokens.push(Token {
                    kind: TokenKind::Sym(sym),
                    line: tline,
                    col: tcol,
                });
            }
            None => {
                return Err(SyntaxError {
                    line: tline,
                    col: tcol,
                    expected: vec!["token".into()],
                    found: format!("'{c}'"),
                })
            }
        }
    }
    tokens.push(Token {
        kind: TokenKind::Eof,
        line,
        col,
    });
    Ok(tokens)
}
