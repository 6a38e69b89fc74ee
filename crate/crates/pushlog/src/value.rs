//! Scalar values and column types shared across the pipeline.

use std::fmt;

use serde::Serialize;

/// Column type of an EDB relation or an inferred IDB column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum ColType {
    Int,
    Str,
}

impl fmt::Display for ColType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColType::Int => write!(f, "int"),
            ColType::Str => write!(f, "string"),
        }
    }
}

/// A ground scalar value. Symbolic constants from program text are strings.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Int(i64),
    Str(String),
}

impl Value {
    pub fn col_type(&self) -> ColType {
        match self {
            Value::Int(_) => ColType::Int,
            Value::Str(_) => ColType::Str,
        }
    }

    pub fn str(s: &str) -> Value {
        Value::Str(s.to_string())
    }

    /// Render the value as a Datalog source token (quoting strings that are
    /// not lowercase identifiers, so printed programs reparse).
    pub fn datalog_token(&self) -> String {
        match self {
            Value::Int(n) => n.to_string(),
            Value::Str(s) => {
                if is_plain_symbol(s) {
                    s.clone()
                } else {
                    let escaped = s.replace('\\', "\\\\").replace('"', "\\\"");
                    format!("\"{escaped}\"")
                }
            }
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Str(s) => write!(f, "{s}"),
        }
    }
}

pub(crate) fn is_plain_symbol(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}
