//! EDB relation storage and the cursor interface used by compiled plans.
//!
//! Relations are immutable after load and hold a set of tuples (exact
//! duplicate rows are dropped by the loader). Access paths are described by
//! binding patterns: the all-free full scan is always available, every other
//! declared pattern is backed by a hash index on its bound columns.
//!
//! Cursors support `open`/`fetch`/`col`/`close` plus `push_state`/`pop_state`
//! so that recursive code pieces can save a scan, reuse the cursor, and
//! restore the original position later.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::value::{ColType, Value};

/// Per-argument access mode: `b` means the value is supplied at `open`,
/// `f` means it is produced by the scan.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BindingPattern(Vec<bool>);

impl BindingPattern {
    pub fn all_free(arity: usize) -> Self {
        BindingPattern(vec![false; arity])
    }

    pub fn parse(s: &str) -> Result<Self, String> {
        let mut mask = Vec::with_capacity(s.len());
        for c in s.chars() {
            match c {
                'b' => mask.push(true),
                'f' => mask.push(false),
                other => return Err(format!("invalid binding pattern character {other:?}")),
            }
        }
        if mask.is_empty() {
            return Err("empty binding pattern".to_string());
        }
        Ok(BindingPattern(mask))
    }

    pub fn arity(&self) -> usize {
        self.0.len()
    }

    pub fn is_bound(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn bound_positions(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&i| self.0[i]).collect()
    }

    pub fn free_positions(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&i| !self.0[i]).collect()
    }

    pub fn bound_count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn is_all_free(&self) -> bool {
        self.0.iter().all(|&b| !b)
    }
}

impl fmt::Display for BindingPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            write!(f, "{}", if b { 'b' } else { 'f' })?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{relation}: row {row}: expected {expected} columns, got {got}")]
    RowArity {
        relation: String,
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("{relation}: row {row}, column {col}: expected {ty} value, got {cell:?}")]
    RowType {
        relation: String,
        row: usize,
        col: usize,
        ty: ColType,
        cell: String,
    },
    #[error("{relation}: {source}")]
    Csv {
        relation: String,
        source: csv::Error,
    },
    #[error("missing data file for EDB relation {relation}: {path}")]
    MissingFile { relation: String, path: String },
}

/// An immutable EDB relation with optional hash indexes per binding pattern.
#[derive(Debug, Clone)]
pub struct Relation {
    name: String,
    types: Vec<ColType>,
    rows: Vec<Vec<Value>>,
    indexes: HashMap<BindingPattern, HashMap<Vec<Value>, Vec<usize>>>,
}

impl Relation {
    /// Build a relation from raw rows. Rows are type-checked, exact
    /// duplicates are dropped (first occurrence wins), and one hash index is
    /// built per non-trivial declared pattern.
    pub fn load(
        name: &str,
        types: Vec<ColType>,
        patterns: &[BindingPattern],
        raw_rows: Vec<Vec<Value>>,
    ) -> Result<Relation, DataError> {
        let mut rows: Vec<Vec<Value>> = Vec::with_capacity(raw_rows.len());
        let mut seen: HashMap<Vec<Value>, ()> = HashMap::new();
        for (idx, row) in raw_rows.into_iter().enumerate() {
            if row.len() != types.len() {
                return Err(DataError::RowArity {
                    relation: name.to_string(),
                    row: idx + 1,
                    expected: types.len(),
                    got: row.len(),
                });
            }
            for (col, (value, ty)) in row.iter().zip(&types).enumerate() {
                if value.col_type() != *ty {
                    return Err(DataError::RowType {
                        relation: name.to_string(),
                        row: idx + 1,
                        col: col + 1,
                        ty: *ty,
                        cell: value.to_string(),
                    });
                }
            }
            if seen.insert(row.clone(), ()).is_none() {
                rows.push(row);
            }
        }

        let mut rel = Relation {
            name: name.to_string(),
            types,
            rows,
            indexes: HashMap::new(),
        };
        for pattern in patterns {
            rel.add_index(pattern.clone());
        }
        Ok(rel)
    }

    /// Load `<name>.csv` from `dir` (no header, columns in argument order).
    pub fn from_csv_dir(
        dir: &Path,
        name: &str,
        types: Vec<ColType>,
        patterns: &[BindingPattern],
    ) -> Result<Relation, DataError> {
        let path = dir.join(format!("{name}.csv"));
        if !path.exists() {
            return Err(DataError::MissingFile {
                relation: name.to_string(),
                path: path.display().to_string(),
            });
        }
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_path(&path)
            .map_err(|source| DataError::Csv {
                relation: name.to_string(),
                source,
            })?;
        let mut rows = Vec::new();
        for (idx, record) in reader.records().enumerate() {
            let record = record.map_err(|source| DataError::Csv {
                relation: name.to_string(),
                source,
            })?;
            if record.len() != types.len() {
                return Err(DataError::RowArity {
                    relation: name.to_string(),
                    row: idx + 1,
                    expected: types.len(),
                    got: record.len(),
                });
            }
            let mut row = Vec::with_capacity(types.len());
            for (col, (cell, ty)) in record.iter().zip(&types).enumerate() {
                let value = match ty {
                    ColType::Int => {
                        cell.trim()
                            .parse::<i64>()
                            .map(Value::Int)
                            .map_err(|_| DataError::RowType {
                                relation: name.to_string(),
                                row: idx + 1,
                                col: col + 1,
                                ty: *ty,
                                cell: cell.to_string(),
                            })?
                    }
                    ColType::Str => Value::str(cell),
                };
                row.push(value);
            }
            rows.push(row);
        }
        Relation::load(name, types, patterns, rows)
    }

    fn add_index(&mut self, pattern: BindingPattern) {
        assert_eq!(pattern.arity(), self.arity(), "{}: pattern arity", self.name);
        if pattern.is_all_free() || self.indexes.contains_key(&pattern) {
            return;
        }
        let bound = pattern.bound_positions();
        let mut index: HashMap<Vec<Value>, Vec<usize>> = HashMap::new();
        for (row_id, row) in self.rows.iter().enumerate() {
            let key: Vec<Value> = bound.iter().map(|&i| row[i].clone()).collect();
            index.entry(key).or_default().push(row_id);
        }
        self.indexes.insert(pattern, index);
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn types(&self) -> &[ColType] {
        &self.types
    }

    pub fn arity(&self) -> usize {
        self.types.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<Value>] {
        &self.rows
    }

    /// True when `pattern` can be served (all-free scan or a built index).
    pub fn supports(&self, pattern: &BindingPattern) -> bool {
        pattern.arity() == self.arity()
            && (pattern.is_all_free() || self.indexes.contains_key(pattern))
    }

    pub fn cursor(&self, pattern: BindingPattern) -> Cursor<'_> {
        assert!(
            self.supports(&pattern),
            "{}: no access path for pattern {}",
            self.name,
            pattern
        );
        Cursor {
            rel: self,
            pattern,
            bound: Vec::new(),
            pos: Position::Closed,
            current: None,
            saved: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
enum Position<'a> {
    Closed,
    Scan { next: usize },
    Probe { ids: Option<&'a [usize]>, next: usize },
}

/// A scan over one relation with a fixed binding pattern.
#[derive(Debug, Clone)]
pub struct Cursor<'a> {
    rel: &'a Relation,
    pattern: BindingPattern,
    bound: Vec<Value>,
    pos: Position<'a>,
    current: Option<usize>,
    saved: Vec<(Vec<Value>, Position<'a>, Option<usize>)>,
}

impl<'a> Cursor<'a> {
    /// Place the cursor before the first tuple matching `bound_values` on the
    /// pattern's bound positions.
    pub fn open(&mut self, bound_values: Vec<Value>) {
        assert_eq!(
            bound_values.len(),
            self.pattern.bound_count(),
            "{}: open() with wrong number of bound values",
            self.rel.name
        );
        self.current = None;
        if self.pattern.is_all_free() {
            self.bound = bound_values;
            self.pos = Position::Scan { next: 0 };
        } else {
            let index = self
                .rel
                .indexes
                .get(&self.pattern)
                .expect("cursor pattern has an index");
            let ids = index.get(&bound_values).map(|v| v.as_slice());
            self.bound = bound_values;
            self.pos = Position::Probe { ids, next: 0 };
        }
    }

    /// Move to the next matching tuple; false when the scan is exhausted.
    pub fn fetch(&mut self) -> bool {
        match &mut self.pos {
            Position::Closed => panic!("{}: fetch() on closed cursor", self.rel.name),
            Position::Scan { next } => {
                if *next < self.rel.rows.len() {
                    self.current = Some(*next);
                    *next += 1;
                    true
                } else {
                    self.current = None;
                    false
                }
            }
            Position::Probe { ids, next } => {
                let ids = ids.unwrap_or(&[]);
                if *next < ids.len() {
                    self.current = Some(ids[*next]);
                    *next += 1;
                    true
                } else {
                    self.current = None;
                    false
                }
            }
        }
    }

    /// Value of column `i` (0-based) of the current tuple. Calling this
    /// without a preceding successful `fetch` is a plan bug and aborts.
    pub fn col(&self, i: usize) -> &Value {
        let row = self
            .current
            .unwrap_or_else(|| panic!("{}: col() before successful fetch", self.rel.name));
        &self.rel.rows[row][i]
    }

    pub fn close(&mut self) {
        self.pos = Position::Closed;
        self.current = None;
    }

    /// Save position and bound values so the cursor can be reused by a
    /// recursive activation and restored afterwards.
    pub fn push_state(&mut self) {
        self.saved
            .push((self.bound.clone(), self.pos.clone(), self.current));
    }

    /// Restore the most recently pushed state. Aborts on an empty stack,
    /// which would indicate unbalanced save/restore in the generated plan.
    pub fn pop_state(&mut self) {
        let (bound, pos, current) = self
            .saved
            .pop()
            .unwrap_or_else(|| panic!("{}: pop_state() on empty state stack", self.rel.name));
        self.bound = bound;
        self.pos = pos;
        self.current = current;
    }

    pub fn pattern(&self) -> &BindingPattern {
        &self.pattern
    }

    pub fn relation(&self) -> &Relation {
        self.rel
    }
}

/// The loaded EDB database: one relation per predicate.
#[derive(Debug, Clone, Default)]
pub struct Database {
    relations: BTreeMap<String, Relation>,
}

impl Database {
    pub fn new() -> Database {
        Database::default()
    }

    pub fn insert(&mut self, rel: Relation) {
        self.relations.insert(rel.name().to_string(), rel);
    }

    pub fn with(mut self, rel: Relation) -> Database {
        self.insert(rel);
        self
    }

    pub fn get(&self, name: &str) -> Option<&Relation> {
        self.relations.get(name)
    }

    pub fn relations(&self) -> impl Iterator<Item = &Relation> {
        self.relations.values()
    }

    /// Load every relation in `schemas` from `<dir>/<name>.csv`.
    pub fn load_dir(
        dir: &Path,
        schemas: &BTreeMap<String, (Vec<ColType>, Vec<BindingPattern>)>,
    ) -> Result<Database, DataError> {
        let mut db = Database::new();
        for (name, (types, patterns)) in schemas {
            db.insert(Relation::from_csv_dir(dir, name, types.clone(), patterns)?);
        }
        Ok(db)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn int_rows(rows: &[&[i64]]) -> Vec<Vec<Value>> {
        rows.iter()
            .map(|r| r.iter().map(|&n| Value::Int(n)).collect())
            .collect()
    }

    fn sample() -> Relation {
        let pattern = BindingPattern::parse("bf").unwrap();
        Relation::load(
            "e",
            vec![ColType::Int, ColType::Int],
            &[pattern],
            int_rows(&[&[1, 2], &[2, 3], &[1, 3]]),
        )
        .unwrap()
    }

    #[test]
    fn load_dedups_and_type_checks() {
        let rel = Relation::load(
            "e1",
            vec![ColType::Int],
            &[],
            int_rows(&[&[1], &[2], &[1]]),
        )
        .unwrap();
        assert_eq!(rel.len(), 2);

        let err = Relation::load(
            "e1",
            vec![ColType::Int],
            &[],
            vec![vec![Value::str("x")]],
        )
        .unwrap_err();
        match err {
            DataError::RowType { row, .. } => assert_eq!(row, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn indexed_scan_filters_on_bound_values() {
        let rel = sample();
        let mut c = rel.cursor(BindingPattern::parse("bf").unwrap());
        c.open(vec![Value::Int(2)]);
        assert!(c.fetch());
        assert_eq!(c.col(1), &Value::Int(3));
        assert!(!c.fetch());
    }

    #[test]
    fn indexed_scan_yields_matches_in_insertion_order() {
        let rel = sample();
        let mut c = rel.cursor(BindingPattern::parse("bf").unwrap());
        c.open(vec![Value::Int(1)]);
        assert!(c.fetch());
        assert_eq!(c.col(1), &Value::Int(2));
        assert!(c.fetch());
        assert_eq!(c.col(1), &Value::Int(3));
        assert!(!c.fetch());
    }

    #[test]
    fn empty_relation_scan() {
        let rel = Relation::load("e", vec![ColType::Int], &[], vec![]).unwrap();
        let mut c = rel.cursor(BindingPattern::all_free(1));
        c.open(vec![]);
        assert!(!c.fetch());
    }

    #[test]
    fn push_pop_restores_position_and_bound_values() {
        let rel = sample();
        let mut c = rel.cursor(BindingPattern::parse("bf").unwrap());
        c.open(vec![Value::Int(1)]);
        assert!(c.fetch()); // at (1,2)
        c.push_state();
        c.open(vec![Value::Int(2)]);
        assert!(c.fetch());
        assert_eq!(c.col(1), &Value::Int(3));
        assert!(!c.fetch());
        c.pop_state();
        // Scan resumes exactly where it was saved.
        assert_eq!(c.col(1), &Value::Int(2));
        assert!(c.fetch());
        assert_eq!(c.col(1), &Value::Int(3));
        assert!(!c.fetch());
    }

    #[test]
    fn push_pop_nested_lifo() {
        let rel = sample();
        let mut c = rel.cursor(BindingPattern::all_free(2));
        c.open(vec![]);
        assert!(c.fetch()); // (1,2)
        c.push_state();
        assert!(c.fetch()); // (2,3)
        c.push_state();
        assert!(c.fetch()); // (1,3)
        c.pop_state(); // back after (2,3)
        assert!(c.fetch());
        assert_eq!(c.col(0), &Value::Int(1));
        assert_eq!(c.col(1), &Value::Int(3));
        c.pop_state(); // back after (1,2)
        assert!(c.fetch());
        assert_eq!(c.col(1), &Value::Int(3));
    }

    #[test]
    #[should_panic(expected = "pop_state() on empty state stack")]
    fn pop_without_push_aborts() {
        let rel = sample();
        let mut c = rel.cursor(BindingPattern::all_free(2));
        c.open(vec![]);
        c.pop_state();
    }

    #[test]
    #[should_panic(expected = "col() before successful fetch")]
    fn col_before_fetch_aborts() {
        let rel = sample();
        let mut c = rel.cursor(BindingPattern::all_free(2));
        c.open(vec![]);
        c.col(0);
    }
}
