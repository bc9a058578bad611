//! Challenge definition files.
//!
//! A challenge file is a sequence of level blocks separated by a line of five
//! or more dashes. Each block opens with `key: value` metadata lines (`name`,
//! `test`, `next`), then a blank line, then the markdown task text:
//!
//! ```text
//! name: lvl1
//! test: test "$PWD" = "/tmp"
//! next: [lvl2]
//!
//! Go to **/tmp**.
//! -----
//! name: lvl2
//! test: true
//!
//! Done!
//! ```
//!
//! `next` is either a bracketed, comma separated list (items may be quoted
//! with `'` or `"`) or a single bare name. A level without `next` is a leaf.

mod dir;
mod template;
mod validate;

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

pub use dir::{load_level_dir, LoadDirError};
pub use template::{
    expand_template, generate_levels, Filter, FilterRegistry, GenerateError, TemplateError,
    TemplateErrorKind, TemplateVariables, Value,
};
pub use validate::{validate_dag, DagFinding};

/// One node of the adventure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Level {
    pub name: String,
    /// Shell command judged by its exit status.
    pub test: String,
    pub next: Vec<String>,
    /// Markdown task text.
    pub body: String,
}

impl Level {
    pub fn is_leaf(&self) -> bool {
        self.next.is_empty()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChallengeError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate level name `{name}` (line {line})")]
    DuplicateLevel { name: String, line: usize },
    #[error("level block starting at line {line} is missing `{field}`")]
    MissingField { field: &'static str, line: usize },
    #[error("challenge defines no levels")]
    Empty,
    #[error("{0}")]
    Dag(DagFinding),
}

/// A parsed challenge: levels in file order, the first one being the entry.
///
/// Values built through [`parse_challenge`] or [`ChallengeSpec::new`] have
/// passed [`validate_dag`]; [`ChallengeSpec::unchecked`] only guarantees unique
/// names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChallengeSpec {
    challenge_name: String,
    levels: Vec<Level>,
    index: HashMap<String, usize>,
}

impl ChallengeSpec {
    pub fn new(challenge_name: impl Into<String>, levels: Vec<Level>) -> Result<Self, ChallengeError> {
        let spec = Self::unchecked(challenge_name, levels)?;
        if let Some(finding) = validate_dag(&spec).into_iter().next() {
            return Err(ChallengeError::Dag(finding));
        }
        Ok(spec)
    }

    /// Builds a spec without checking the successor graph.
    pub fn unchecked(challenge_name: impl Into<String>, levels: Vec<Level>) -> Result<Self, ChallengeError> {
        if levels.is_empty() {
            return Err(ChallengeError::Empty);
        }
        let mut index = HashMap::with_capacity(levels.len());
        for (i, level) in levels.iter().enumerate() {
            if index.insert(level.name.clone(), i).is_some() {
                return Err(ChallengeError::DuplicateLevel {
                    name: level.name.clone(),
                    line: 0,
                });
            }
        }
        Ok(Self {
            challenge_name: challenge_name.into(),
            levels,
            index,
        })
    }

    pub fn challenge_name(&self) -> &str {
        &self.challenge_name
    }

    pub fn entry_level(&self) -> &Level {
        &self.levels[0]
    }

    pub fn level(&self, name: &str) -> Option<&Level> {
        self.index.get(name).map(|&i| &self.levels[i])
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    /// Renders the challenge back into challenge-file text.
    ///
    /// Bodies containing a line of five or more dashes cannot be represented
    /// and will split into extra blocks when reparsed.
    pub fn to_source(&self) -> String {
        let mut out = String::new();
        for (i, level) in self.levels.iter().enumerate() {
            if i > 0 {
                out.push_str("-----\n");
            }
            out.push_str(&format!("name: {}\n", level.name));
            out.push_str(&format!("test: {}\n", level.test));
            if !level.next.is_empty() {
                out.push_str(&format!("next: [{}]\n", level.next.join(", ")));
            }
            if !level.body.is_empty() {
                out.push('\n');
                out.push_str(&level.body);
                out.push('\n');
            }
        }
        out
    }
}

impl fmt::Display for ChallengeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({} levels)", self.challenge_name, self.levels.len())
    }
}

/// Parses and validates a challenge file.
pub fn parse_challenge(challenge_name: &str, source: &str) -> Result<ChallengeSpec, ChallengeError> {
    let levels = parse_levels(source)?;
    ChallengeSpec::new(challenge_name, levels)
}

/// Parses a challenge file without validating the successor graph, so that
/// [`validate_dag`] can report every problem at once.
pub fn parse_challenge_unchecked(
    challenge_name: &str,
    source: &str,
) -> Result<ChallengeSpec, ChallengeError> {
    let levels = parse_levels(source)?;
    ChallengeSpec::unchecked(challenge_name, levels)
}

pub fn is_delimiter(line: &str) -> bool {
    let t = line.trim_end();
    t.len() >= 5 && t.bytes().all(|b| b == b'-')
}

pub fn is_valid_level_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

fn parse_levels(source: &str) -> Result<Vec<Level>, ChallengeError> {
    let mut blocks: Vec<Vec<(usize, &str)>> = vec![Vec::new()];
    for (i, raw) in source.split('\n').enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if is_delimiter(line) {
            blocks.push(Vec::new());
        } else {
            blocks.last_mut().unwrap().push((i + 1, line));
        }
    }

    let mut levels: Vec<Level> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let block_count = blocks.len();
    for (b, block) in blocks.into_iter().enumerate() {
        if block.iter().all(|(_, l)| l.trim().is_empty()) {
            // A trailing delimiter leaves an empty final block; anywhere else
            // an empty block is a mistake.
            if b + 1 == block_count && b > 0 {
                continue;
            }
            let line = block.first().map(|(n, _)| *n).unwrap_or(1);
            return Err(ChallengeError::Syntax {
                line,
                column: 1,
                message: "empty level block".into(),
            });
        }
        let (level, line) = parse_block(&block)?;
        if seen.insert(level.name.clone(), line).is_some() {
            return Err(ChallengeError::DuplicateLevel {
                name: level.name,
                line,
            });
        }
        levels.push(level);
    }
    if levels.is_empty() {
        return Err(ChallengeError::Empty);
    }
    Ok(levels)
}

fn parse_block(block: &[(usize, &str)]) -> Result<(Level, usize), ChallengeError> {
    let mut name: Option<String> = None;
    let mut test: Option<String> = None;
    let mut next: Option<Vec<String>> = None;
    let mut body_lines: Vec<&str> = Vec::new();
    let mut start_line = 0;
    let mut in_body = false;

    for &(lineno, line) in block {
        if in_body {
            if !body_lines.is_empty() || !line.trim().is_empty() {
                body_lines.push(line);
            }
            continue;
        }
        if line.trim().is_empty() {
            if start_line != 0 {
                in_body = true;
            }
            continue;
        }
        if start_line == 0 {
            start_line = lineno;
        }
        let Some(colon) = line.find(':') else {
            return Err(ChallengeError::Syntax {
                line: lineno,
                column: line.len() + 1,
                message: "expected `key: value` metadata line".into(),
            });
        };
        let key = line[..colon].trim();
        let value = line[colon + 1..].trim();
        let slot = match key {
            "name" => {
                if !is_valid_level_name(value) {
                    return Err(ChallengeError::Syntax {
                        line: lineno,
                        column: colon + 2,
                        message: format!("invalid level name `{value}`"),
                    });
                }
                name.replace(value.to_string()).is_some()
            }
            "test" => test.replace(value.to_string()).is_some(),
            "next" => {
                let parsed = parse_next(value).map_err(|(col, message)| ChallengeError::Syntax {
                    line: lineno,
                    column: colon + 2 + col,
                    message,
                })?;
                next.replace(parsed).is_some()
            }
            _ => {
                return Err(ChallengeError::Syntax {
                    line: lineno,
                    column: 1,
                    message: format!("unknown metadata key `{key}`"),
                })
            }
        };
        if slot {
            return Err(ChallengeError::Syntax {
                line: lineno,
                column: 1,
                message: format!("metadata key `{key}` given twice"),
            });
        }
    }

    let name = name.ok_or(ChallengeError::MissingField {
        field: "name",
        line: start_line,
    })?;
    let test = test.filter(|t| !t.is_empty()).ok_or(ChallengeError::MissingField {
        field: "test",
        line: start_line,
    })?;

    while body_lines.last().is_some_and(|l| l.trim().is_empty()) {
        body_lines.pop();
    }
    let body = body_lines.join("\n").trim_end().to_string();

    Ok((
        Level {
            name,
            test,
            next: next.unwrap_or_default(),
            body,
        },
        start_line,
    ))
}

/// Parses a `next` value. Errors carry a 0-based column within `value`.
fn parse_next(value: &str) -> Result<Vec<String>, (usize, String)> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    let Some(inner) = value.strip_prefix('[') else {
        let name = unquote(value).map_err(|m| (0, m))?;
        return check_name(name, 0).map(|n| vec![n]);
    };
    let Some(inner) = inner.strip_suffix(']') else {
        return Err((value.len(), "unterminated `[` in next list".into()));
    };
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut names = Vec::new();
    let mut offset = 1;
    for item in inner.split(',') {
        let trimmed = item.trim();
        let name = unquote(trimmed).map_err(|m| (offset, m))?;
        names.push(check_name(name, offset)?);
        offset += item.len() + 1;
    }
    Ok(names)
}

fn check_name(name: &str, col: usize) -> Result<String, (usize, String)> {
    if is_valid_level_name(name) {
        Ok(name.to_string())
    } else {
        Err((col, format!("invalid level name `{name}` in next")))
    }
}

fn unquote(s: &str) -> Result<&str, String> {
    for q in ['\'', '"'] {
        if let Some(rest) = s.strip_prefix(q) {
            return rest
                .strip_suffix(q)
                .ok_or_else(|| format!("unterminated quote in `{s}`"));
        }
    }
    Ok(s)
}
