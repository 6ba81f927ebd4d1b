//! Examples and their one-line dataset encoding:
//!
//! ```text
//! count|occurrences int,PrimitiveType^|MethodDecl|Param_,string ...
//! ```
//!
//! The first field is the target subtokens joined by `|`; each following
//! space-separated field is `left,path,right` with subtokens or path symbols
//! joined by `|`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PathContext {
    pub left: Vec<String>,
    pub path: Vec<String>,
    pub right: Vec<String>,
}

impl fmt::Display for PathContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{}",
            self.left.join("|"),
            self.path.join("|"),
            self.right.join("|")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub target: Vec<String>,
    pub contexts: Vec<PathContext>,
}

fn valid_piece(s: &str) -> bool {
    !s.is_empty() && !s.contains([',', '|', ' ', '\n', '\t', '\r'])
}

fn split_field(field: &str, what: &str, line: usize) -> Result<Vec<String>, DatasetError> {
    let parts: Vec<String> = field.split('|').map(str::to_string).collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(DatasetError::Malformed {
            line,
            message: format!("empty {what} piece in {field:?}"),
        });
    }
    Ok(parts)
}

impl Example {
    pub fn validate(&self) -> Result<(), String> {
        if self.target.is_empty() || !self.target.iter().all(|t| valid_piece(t)) {
            return Err(format!("bad target {:?}", self.target));
        }
        if self.contexts.is_empty() {
            return Err("example has no contexts".into());
        }
        for c in &self.contexts {
            for list in [&c.left, &c.path, &c.right] {
                if list.is_empty() || !list.iter().all(|t| valid_piece(t)) {
                    return Err(format!("bad context {c:?}"));
                }
            }
        }
        Ok(())
    }

    /// Dataset line without the trailing newline.
    pub fn to_line(&self) -> String {
        let mut out = self.target.join("|");
        for c in &self.contexts {
            out.push(' ');
            out.push_str(&c.to_string());
        }
        out
    }

    /// Parses one dataset line; `line_no` is used in error messages.
    pub fn parse_line(text: &str, line_no: usize) -> Result<Example, DatasetError> {
        let err = |message: String| DatasetError::Malformed {
            line: line_no,
            message,
        };
        let text = text.strip_suffix('\n').unwrap_or(text);
        let mut fields = text.split(' ');
        let target = fields.next().filter(|t| !t.is_empty()).ok_or_else(|| err("empty line".into()))?;
        let target = split_field(target, "target", line_no)?;
        let mut contexts = Vec::new();
        for field in fields {
            let parts: Vec<&str> = field.split(',').collect();
            let [left, path, right] = parts[..] else {
                return Err(err(format!("context {field:?} does not have 3 fields")));
            };
            contexts.push(PathContext {
                left: split_field(left, "left token", line_no)?,
                path: split_field(path, "path", line_no)?,
                right: split_field(right, "right token", line_no)?,
            });
        }
        if contexts.is_empty() {
            return Err(err("example has no contexts".into()));
        }
        Ok(Example { target, contexts })
    }
}

/// Parses a whole dataset file, one example per line.
pub fn parse_dataset(text: &str) -> Result<Vec<Example>, DatasetError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| Example::parse_line(l, i + 1))
        .collect()
}
