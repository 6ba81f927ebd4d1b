use super::{ParseError, SourceUnit};

pub const KEYWORDS: &[&str] = &[
    "int", "boolean", "char", "String", "void", "if", "else", "while", "do", "for", "return",
    "new",
];

/// Longest operators first so that maximal munch works by scanning in order.
const OPERATORS: &[&str] = &[
    "||", "&&", "==", "!=", "<=", ">=", "++", "--", "<", ">", "+", "-", "*", "/", "%", "=", "!",
];

const PUNCTUATION: &[char] = &['(', ')', '{', '}', '[', ']', ',', ';', '.'];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    Ident(String),
    Keyword(&'static str),
    IntLit(String),
    CharLit(String),
    StringLit(String),
    BoolLit(bool),
    Op(&'static str),
    Punct(char),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub line: usize,
    pub column: usize,
    /// Byte offset of the first character.
    pub offset: usize,
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
    line: usize,
    column: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn peek2(&self) -> Option<char> {
        let mut it = self.text[self.pos..].chars();
        it.next();
        it.next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }
}

pub fn tokenize(src: &SourceUnit) -> Result<Vec<Token>, ParseError> {
    let mut cur = Cursor {
        text: &src.text,
        pos: 0,
        line: 1,
        column: 1,
    };
    let mut tokens = Vec::new();
    while let Some(c) = cur.peek() {
        let (line, column, offset) = (cur.line, cur.column, cur.pos);
        let err = |message: &str| ParseError::new(message, line, column);

        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        if c == '/' && cur.peek2() == Some('/') {
            while let Some(c) = cur.peek() {
                if c == '\n' {
                    break;
                }
                cur.bump();
            }
            continue;
        }
        if c == '/' && cur.peek2() == Some('*') {
            cur.bump();
            cur.bump();
            loop {
                if cur.rest().starts_with("*/") {
                    cur.bump();
                    cur.bump();
                    break;
                }
                if cur.bump().is_none() {
                    return Err(err("unterminated block comment"));
                }
            }
            continue;
        }

        let kind = if c.is_alphabetic() || c == '_' || c == '$' {
            let start = cur.pos;
            while let Some(c) = cur.peek() {
                if !(c.is_alphanumeric() || c == '_' || c == '$') {
                    break;
                }
                cur.bump();
            }
            let word = &src.text[start..cur.pos];
            match word {
                "true" => TokenKind::BoolLit(true),
                "false" => TokenKind::BoolLit(false),
                w => match KEYWORDS.iter().find(|k| **k == w) {
                    Some(k) => TokenKind::Keyword(k),
                    None => TokenKind::Ident(w.to_string()),
                },
            }
        } else if c.is_ascii_digit() {
            let start = cur.pos;
            while let Some(c) = cur.peek() {
                if !c.is_ascii_alphanumeric() {
                    break;
                }
                cur.bump();
            }
            let lit = &src.text[start..cur.pos];
            // Allow Java-style suffixes and hex, reject things like `12abc`.
            let valid = lit.chars().all(|c| c.is_ascii_digit())
                || lit.starts_with("0x")
                    && lit.len() > 2
                    && lit[2..].chars().all(|c| c.is_ascii_hexdigit())
                || lit.len() > 1
                    && lit[..lit.len() - 1].chars().all(|c| c.is_ascii_digit())
                    && matches!(lit.as_bytes()[lit.len() - 1], b'L' | b'l');
            if !valid {
                return Err(err(&format!("malformed integer literal {lit:?}")));
            }
            TokenKind::IntLit(lit.to_string())
        } else if c == '"' || c == '\'' {
            let start = cur.pos;
            cur.bump();
            loop {
                match cur.bump() {
                    None | Some('\n') => {
                        let what = if c == '"' { "string" } else { "char" };
                        return Err(err(&format!("unterminated {what} literal")));
                    }
                    Some('\\') => {
                        if cur.bump().is_none() {
                            return Err(err("unterminated escape"));
                        }
                    }
                    Some(q) if q == c => break,
                    Some(_) => {}
                }
            }
            let raw = src.text[start..cur.pos].to_string();
            if c == '"' {
                TokenKind::StringLit(raw)
            } else {
                if raw.len() < 3 {
                    return Err(err("empty char literal"));
                }
                TokenKind::CharLit(raw)
            }
        } else if let Some(op) = OPERATORS.iter().find(|op| cur.rest().starts_with(**op)) {
            for _ in 0..op.len() {
                cur.bump();
            }
            TokenKind::Op(op)
        } else if PUNCTUATION.contains(&c) {
            cur.bump();
            TokenKind::Punct(c)
        } else {
            return Err(err(&format!("illegal character {c:?}")));
        };
        tokens.push(Token {
            kind,
            line,
            column,
            offset,
        });
    }
    Ok(tokens)
}
