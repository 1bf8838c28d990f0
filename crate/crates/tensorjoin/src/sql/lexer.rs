//! Tokenizer. Keywords are case-insensitive, identifiers case-sensitive,
//! `--` comments are stripped, and `@name` tokens are named parameters.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Token {
    Keyword(Keyword),
    Ident(String),
    Int(i64),
    Float(f64),
    Str(String),
    Param(String),
    Comma,
    Dot,
    LParen,
    RParen,
    Star,
    Plus,
    Minus,
    Slash,
    Eq,
    Lt,
    Gt,
    Le,
    Ge,
    Ne,
    Semicolon,
    Eof,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keyword {
    Select,
    From,
    Where,
    Group,
    Order,
    By,
    And,
    As,
    Asc,
    Desc,
    Sum,
    Count,
    Avg,
    Min,
    Max,
    // Recognized only to produce precise "unsupported" diagnostics.
    Or,
    Having,
    Distinct,
    Join,
    Limit,
}

fn keyword(word: &str) -> Option<Keyword> {
    let up = word.to_ascii_uppercase();
    Some(match up.as_str() {
        "SELECT" => Keyword::Select,
        "FROM" => Keyword::From,
        "WHERE" => Keyword::Where,
        "GROUP" => Keyword::Group,
        "ORDER" => Keyword::Order,
        "BY" => Keyword::By,
        "AND" => Keyword::And,
        "AS" => Keyword::As,
        "ASC" => Keyword::Asc,
        "DESC" => Keyword::Desc,
        "SUM" => Keyword::Sum,
        "COUNT" => Keyword::Count,
        "AVG" => Keyword::Avg,
        "MIN" => Keyword::Min,
        "MAX" => Keyword::Max,
        "OR" => Keyword::Or,
        "HAVING" => Keyword::Having,
        "DISTINCT" => Keyword::Distinct,
        "JOIN" => Keyword::Join,
        "LIMIT" => Keyword::Limit,
        _ => return None,
    })
}

#[derive(Debug, Clone)]
pub struct SpannedToken {
    pub token: Token,
    pub position: usize,
}

pub fn tokenize(input: &str) -> Result<Vec<SpannedToken>> {
    let bytes = input.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        match c {
            c if c.is_whitespace() => {
                i += 1;
            }
            '-' if bytes.get(i + 1) == Some(&b'-') => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            ',' => {
                tokens.push(tok(Token::Comma, start));
                i += 1;
            }
            '.' => {
                tokens.push(tok(Token::Dot, start));
                i += 1;
            }
            '(' => {
                tokens.push(tok(Token::LParen, start));
                i += 1;
            }
            ')' => {
                tokens.push(tok(Token::RParen, start));
                i += 1;
            }
            ';' => {
                tokens.push(tok(Token::Semicolon, start));
                i += 1;
            }
            '*' => {
                tokens.push(tok(Token::Star, start));
                i += 1;
            }
            '+' => {
                tokens.push(tok(Token::Plus, start));
                i += 1;
            }
            '-' => {
                tokens.push(tok(Token::Minus, start));
                i += 1;
            }
            '/' => {
                tokens.push(tok(Token::Slash, start));
                i += 1;
            }
            '=' => {
                tokens.push(tok(Token::Eq, start));
                i += 1;
            }
            '<' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    tokens.push(tok(Token::Le, start));
                    i += 2;
                } else if bytes.get(i + 1) == Some(&b'>') {
                    tokens.push(tok(Token::Ne, start));
                    i += 2;
                } else {
                    tokens.push(tok(Token::Lt, start));
                    i += 1;
                }
            }
            '>' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    tokens.push(tok(Token::Ge, start));
                    i += 2;
                } else {
                    tokens.push(tok(Token::Gt, start));
                    i += 1;
                }
            }
            '!' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    tokens.push(tok(Token::Ne, start));
                    i += 2;
                } else {
                    return Err(Error::Lex {
                        position: start,
                        message: "expected `!=`".into(),
                    });
                }
            }
            '\'' => {
                let mut j = i + 1;
                while j < bytes.len() && bytes[j] != b'\'' {
                    j += 1;
                }
                if j >= bytes.len() {
                    return Err(Error::Lex {
                        position: start,
                        message: "unterminated string literal".into(),
                    });
                }
                tokens.push(tok(Token::Str(input[i + 1..j].to_string()), start));
                i = j + 1;
            }
            '@' => {
                let mut j = i + 1;
                while j < bytes.len() && is_ident_char(bytes[j]) {
                    j += 1;
                }
                if j == i + 1 {
                    return Err(Error::Lex {
                        position: start,
                        message: "`@` must be followed by a parameter name".into(),
                    });
                }
                tokens.push(tok(Token::Param(input[i + 1..j].to_string()), start));
                i = j;
            }
            c if c.is_ascii_digit() => {
                let mut j = i;
                let mut is_float = false;
                while j < bytes.len() {
                    let b = bytes[j];
                    if b.is_ascii_digit() {
                        j += 1;
                    } else if b == b'.' && bytes.get(j + 1).is_some_and(u8::is_ascii_digit) {
                        is_float = true;
                        j += 1;
                    } else if (b == b'e' || b == b'E')
                        && j > i
                        && bytes
                            .get(j + 1)
                            .is_some_and(|n| n.is_ascii_digit() || *n == b'-' || *n == b'+')
                    {
                        is_float = true;
                        j += 2;
                    } else {
                        break;
                    }
                }
                let text = &input[i..j];
                let token = if is_float {
                    Token::Float(text.parse().map_err(|_| Error::Lex {
                        position: start,
                        message: format!("bad numeric literal `{text}`"),
                    })?)
                } else {
                    Token::Int(text.parse().map_err(|_| Error::Lex {
                        position: start,
                        message: format!("bad numeric literal `{text}`"),
                    })?)
                };
                tokens.push(tok(token, start));
                i = j;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut j = i;
                while j < bytes.len() && is_ident_char(bytes[j]) {
                    j += 1;
                }
                let word = &input[i..j];
                match keyword(word) {
                    Some(kw) => tokens.push(tok(Token::Keyword(kw), start)),
                    None => tokens.push(tok(Token::Ident(word.to_string()), start)),
                }
                i = j;
            }
            other => {
                return Err(Error::Lex {
                    position: start,
                    message: format!("unexpected character `{other}`"),
                });
            }
        }
    }
    tokens.push(tok(Token::Eof, input.len()));
    Ok(tokens)
}

fn tok(token: Token, position: usize) -> SpannedToken {
    SpannedToken { token, position }
}

fn is_ident_char(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_comments_and_reads_params() {
        let toks = tokenize("-- PR Q2\nSELECT (1-@alpha)/@num_node").unwrap();
        assert!(matches!(toks[0].token, Token::Keyword(Keyword::Select)));
        assert!(toks.iter().any(|t| t.token == Token::Param("alpha".into())));
        assert!(toks
            .iter()
            .any(|t| t.token == Token::Param("num_node".into())));
    }

    #[test]
    fn lex_error_carries_position() {
        let err = tokenize("SELECT #").unwrap_err();
        match err {
            Error::Lex { position, .. } => assert_eq!(position, 7),
            other => panic!("expected lex error, got {other:?}"),
        }
    }

    #[test]
    fn comparison_operators() {
        let toks = tokenize("<= >= <> != < > =").unwrap();
        let kinds: Vec<&Token> = toks.iter().map(|t| &t.token).collect();
        assert_eq!(
            kinds[..7],
            [
                &Token::Le,
                &Token::Ge,
                &Token::Ne,
                &Token::Ne,
                &Token::Lt,
                &Token::Gt,
                &Token::Eq
            ]
        );
    }
}
