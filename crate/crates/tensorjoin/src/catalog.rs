//! Column-store table storage: CSV ingestion, dictionary encoding, and the
//! per-column metadata (min / max / distinct count) the planner consumes.
//!
//! Tables are immutable after load. Stats are exact, computed on first use
//! per referenced column and cached; the feasibility test needs true bounds
//! and desk-scale data makes exactness cheap.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::{Arc, RwLock};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum LogicalType {
    Int64,
    Float64,
    Utf8,
}

impl LogicalType {
    pub fn is_numeric(self) -> bool {
        matches!(self, LogicalType::Int64 | LogicalType::Float64)
    }
}

impl fmt::Display for LogicalType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogicalType::Int64 => write!(f, "Int64"),
            LogicalType::Float64 => write!(f, "Float64"),
            LogicalType::Utf8 => write!(f, "Utf8"),
        }
    }
}

/// A single scalar value, used in result rows, stats, and predicates.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Float(f64),
    Str(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(v) => Some(*v as f64),
            Value::Float(v) => Some(*v),
            Value::Str(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v}"),
            Value::Str(v) => write!(f, "{v}"),
        }
    }
}

/// Column storage. Utf8 columns are dictionary-encoded on load: a dense code
/// per row plus the distinct strings in first-appearance order.
#[derive(Debug, Clone)]
pub enum ColumnData {
    Int64(Vec<i64>),
    Float64(Vec<f64>),
    Utf8 { codes: Vec<u32>, dict: Vec<String> },
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Int64(v) => v.len(),
            ColumnData::Float64(v) => v.len(),
            ColumnData::Utf8 { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn logical_type(&self) -> LogicalType {
        match self {
            ColumnData::Int64(_) => LogicalType::Int64,
            ColumnData::Float64(_) => LogicalType::Float64,
            ColumnData::Utf8 { .. } => LogicalType::Utf8,
        }
    }

    pub fn value(&self, row: usize) -> Value {
        match self {
            ColumnData::Int64(v) => Value::Int(v[row]),
            ColumnData::Float64(v) => Value::Float(v[row]),
            ColumnData::Utf8 { codes, dict } => Value::Str(dict[codes[row] as usize].clone()),
        }
    }
}

/// Exact per-column metadata: minimum, maximum, and distinct count.
/// For Utf8 the min/max are lexicographic over the dictionary.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnStats {
    pub min_value: Value,
    pub max_value: Value,
    pub distinct_count: usize,
}

impl ColumnStats {
    /// max(|min|, |max|) for numeric columns; the feasibility test's operand
    /// magnitude. None for Utf8.
    pub fn magnitude(&self) -> Option<f64> {
        let lo = self.min_value.as_f64()?;
        let hi = self.max_value.as_f64()?;
        Some(lo.abs().max(hi.abs()))
    }
}

/// An immutable dictionary-encoded column table.
#[derive(Debug)]
pub struct ColumnTable {
    pub name: String,
    pub schema: Vec<(String, LogicalType)>,
    pub columns: Vec<ColumnData>,
    pub row_count: usize,
    stats_cache: RwLock<HashMap<usize, ColumnStats>>,
}

impl Clone for ColumnTable {
    fn clone(&self) -> Self {
        Self {
            name: self.name.clone(),
            schema: self.schema.clone(),
            columns: self.columns.clone(),
            row_count: self.row_count,
            stats_cache: RwLock::new(self.stats_cache.read().unwrap().clone()),
        }
    }
}

impl ColumnTable {
    pub fn new(
        name: impl Into<String>,
        schema: Vec<(String, LogicalType)>,
        columns: Vec<ColumnData>,
    ) -> Result<Self> {
        let mut seen = HashMap::new();
        for (idx, (col, _)) in schema.iter().enumerate() {
            if seen.insert(col.clone(), idx).is_some() {
                return Err(Error::Schema(format!("duplicate column name `{col}`")));
            }
        }
        if schema.len() != columns.len() {
            return Err(Error::Schema(format!(
                "schema has {} columns but {} columns were provided",
                schema.len(),
                columns.len()
            )));
        }
        let row_count = columns.first().map_or(0, ColumnData::len);
        for ((col, ty), data) in schema.iter().zip(&columns) {
            if data.len() != row_count {
                return Err(Error::Schema(format!(
                    "column `{col}` has {} rows, expected {row_count}",
                    data.len()
                )));
            }
            if data.logical_type() != *ty {
                return Err(Error::Schema(format!(
                    "column `{col}` declared {ty} but stored {}",
                    data.logical_type()
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            schema,
            columns,
            row_count,
            stats_cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn column_index(&self, column: &str) -> Result<usize> {
        self.schema
            .iter()
            .position(|(name, _)| name == column)
            .ok_or_else(|| Error::UnknownColumn(format!("{}.{column}", self.name)))
    }

    pub fn column(&self, column: &str) -> Result<&ColumnData> {
        Ok(&self.columns[self.column_index(column)?])
    }

    pub fn column_type(&self, column: &str) -> Result<LogicalType> {
        Ok(self.schema[self.column_index(column)?].1)
    }

    /// Exact stats for one column, cached after the first computation.
    pub fn compute_stats(&self, column: &str) -> Result<ColumnStats> {
        let idx = self.column_index(column)?;
        if let Some(stats) = self.stats_cache.read().unwrap().get(&idx) {
            return Ok(stats.clone());
        }
        let stats = exact_stats(&self.columns[idx]);
        self.stats_cache
            .write()
            .unwrap()
            .insert(idx, stats.clone());
        Ok(stats)
    }

    /// Dictionary codes and dictionary for a Utf8 column.
    pub fn dictionary_codes(&self, column: &str) -> Result<(&[u32], &[String])> {
        match self.column(column)? {
            ColumnData::Utf8 { codes, dict } => Ok((codes, dict)),
            other => Err(Error::TypeMismatch(format!(
                "dictionary_codes requires a Utf8 column; `{}.{column}` is {}",
                self.name,
                other.logical_type()
            ))),
        }
    }

    /// Writes the table back out as CSV (header row first).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.schema.iter().map(|(name, _)| name.as_str()))
            .map_err(csv_io)?;
        for row in 0..self.row_count {
            let fields: Vec<String> = self
                .columns
                .iter()
                .map(|col| col.value(row).to_string())
                .collect();
            w.write_record(&fields).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_io(err: csv::Error) -> Error {
    Error::Ingest {
        line: 0,
        message: err.to_string(),
    }
}

fn exact_stats(column: &ColumnData) -> ColumnStats {
    match column {
        ColumnData::Int64(v) => {
            let mut distinct: Vec<i64> = v.clone();
            distinct.sort_unstable();
            distinct.dedup();
            ColumnStats {
                min_value: Value::Int(distinct.first().copied().unwrap_or(0)),
                max_value: Value::Int(distinct.last().copied().unwrap_or(0)),
                distinct_count: distinct.len(),
            }
        }
        ColumnData::Float64(v) => {
            let mut distinct: Vec<f64> = v.clone();
            distinct.sort_unstable_by(f64::total_cmp);
            distinct.dedup_by(|a, b| a == b);
            ColumnStats {
                min_value: Value::Float(distinct.first().copied().unwrap_or(0.0)),
                max_value: Value::Float(distinct.last().copied().unwrap_or(0.0)),
                distinct_count: distinct.len(),
            }
        }
        ColumnData::Utf8 { codes, dict } => {
            let mut used: Vec<bool> = vec![false; dict.len()];
            for &c in codes {
                used[c as usize] = true;
            }
            let mut present: Vec<&String> =
                dict.iter().zip(&used).filter(|(_, u)| **u).map(|(s, _)| s).collect();
            present.sort();
            ColumnStats {
                min_value: Value::Str(present.first().map(|s| (*s).clone()).unwrap_or_default()),
                max_value: Value::Str(present.last().map(|s| (*s).clone()).unwrap_or_default()),
                distinct_count: present.len(),
            }
        }
    }
}

/// Loads a CSV file against a declared schema. The header row must match the
/// schema arity; every field must parse under the declared type. Empty fields
/// are rejected (the engine has no null semantics).
pub fn load_csv(path: &Path, name: &str, schema: &[(String, LogicalType)]) -> Result<ColumnTable> {
    let mut seen = HashMap::new();
    for (col, _) in schema {
        if seen.insert(col.clone(), ()).is_some() {
            return Err(Error::Schema(format!("duplicate column name `{col}`")));
        }
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)?;
    let header = reader.headers().map_err(csv_io)?.clone();
    if header.len() != schema.len() {
        return Err(Error::Schema(format!(
            "header has {} columns, declared schema has {}",
            header.len(),
            schema.len()
        )));
    }

    let mut builders: Vec<ColumnBuilder> = schema
        .iter()
        .map(|(_, ty)| ColumnBuilder::new(*ty))
        .collect();
    for (rec_idx, record) in reader.records().enumerate() {
        let line = rec_idx + 2; // 1-based, after the header
        let record = record.map_err(|e| Error::Ingest {
            line,
            message: e.to_string(),
        })?;
        if record.len() != schema.len() {
            return Err(Error::Ingest {
                line,
                message: format!(
                    "row has {} fields, expected {}",
                    record.len(),
                    schema.len()
                ),
            });
        }
        for (builder, field) in builders.iter_mut().zip(record.iter()) {
            builder.push(field, line)?;
        }
    }

    let columns = builders.into_iter().map(ColumnBuilder::finish).collect();
    ColumnTable::new(name, schema.to_vec(), columns)
}

struct ColumnBuilder {
    ty: LogicalType,
    ints: Vec<i64>,
    floats: Vec<f64>,
    codes: Vec<u32>,
    dict: Vec<String>,
    dict_index: HashMap<String, u32>,
}

impl ColumnBuilder {
    fn new(ty: LogicalType) -> Self {
        Self {
            ty,
            ints: Vec::new(),
            floats: Vec::new(),
            codes: Vec::new(),
            dict: Vec::new(),
            dict_index: HashMap::new(),
        }
    }

    fn push(&mut self, field: &str, line: usize) -> Result<()> {
        if field.is_empty() {
            return Err(Error::Ingest {
                line,
                message: "empty field (nulls are rejected at ingestion)".into(),
            });
        }
        match self.ty {
            LogicalType::Int64 => {
                let v = field.trim().parse::<i64>().map_err(|_| Error::Ingest {
                    line,
                    message: format!("`{field}` is not a valid Int64"),
                })?;
                self.ints.push(v);
            }
            LogicalType::Float64 => {
                let v = field.trim().parse::<f64>().map_err(|_| Error::Ingest {
                    line,
                    message: format!("`{field}` is not a valid Float64"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Ingest {
                        line,
                        message: format!("non-finite value `{field}`"),
                    });
                }
                self.floats.push(v);
            }
            LogicalType::Utf8 => {
                let code = match self.dict_index.get(field) {
                    Some(&c) => c,
                    None => {
                        let c = self.dict.len() as u32;
                        self.dict.push(field.to_string());
                        self.dict_index.insert(field.to_string(), c);
                        c
                    }
                };
                self.codes.push(code);
            }
        }
        Ok(())
    }

    fn finish(self) -> ColumnData {
        match self.ty {
            LogicalType::Int64 => ColumnData::Int64(self.ints),
            LogicalType::Float64 => ColumnData::Float64(self.floats),
            LogicalType::Utf8 => ColumnData::Utf8 {
                codes: self.codes,
                dict: self.dict,
            },
        }
    }
}

/// Infers a schema from the CSV contents: a column is Int64 if every field
/// parses as one, else Float64 if every field parses as one, else Utf8.
pub fn infer_schema(path: &Path) -> Result<Vec<(String, LogicalType)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let header: Vec<String> = reader
        .headers()
        .map_err(csv_io)?
        .iter()
        .map(str::to_string)
        .collect();
    let mut int_ok = vec![true; header.len()];
    let mut float_ok = vec![true; header.len()];
    for record in reader.records() {
        let record = record.map_err(csv_io)?;
        for (i, field) in record.iter().enumerate().take(header.len()) {
            if int_ok[i] && field.trim().parse::<i64>().is_err() {
                int_ok[i] = false;
            }
            if float_ok[i] && field.trim().parse::<f64>().is_err() {
                float_ok[i] = false;
            }
        }
    }
    Ok(header
        .into_iter()
        .enumerate()
        .map(|(i, name)| {
            let ty = if int_ok[i] {
                LogicalType::Int64
            } else if float_ok[i] {
                LogicalType::Float64
            } else {
                LogicalType::Utf8
            };
            (name, ty)
        })
        .collect())
}

/// Table registry. One CSV per table; table name = file stem.
#[derive(Debug, Default)]
pub struct Catalog {
    tables: HashMap<String, Arc<ColumnTable>>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, table: ColumnTable) {
        self.tables.insert(table.name.clone(), Arc::new(table));
    }

    pub fn get(&self, name: &str) -> Result<&Arc<ColumnTable>> {
        self.tables
            .get(name)
            .ok_or_else(|| Error::UnknownTable(name.to_string()))
    }

    pub fn table_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self.tables.keys().map(String::as_str).collect();
        names.sort();
        names
    }

    /// Loads every `*.csv` in a directory with an inferred schema.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut catalog = Self::new();
        let mut entries: Vec<_> = std::fs::read_dir(dir)?
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|ext| ext == "csv"))
            .collect();
        entries.sort();
        for path in entries {
            let name = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::Config(format!("bad table file name {path:?}")))?
                .to_string();
            let schema = infer_schema(&path)?;
            catalog.register(load_csv(&path, &name, &schema)?);
        }
        Ok(catalog)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn schema(cols: &[(&str, LogicalType)]) -> Vec<(String, LogicalType)> {
        cols.iter().map(|(n, t)| (n.to_string(), *t)).collect()
    }

    pub(crate) fn int_table(name: &str, cols: &[(&str, Vec<i64>)]) -> ColumnTable {
        let schema = cols
            .iter()
            .map(|(n, _)| (n.to_string(), LogicalType::Int64))
            .collect();
        let data = cols
            .iter()
            .map(|(_, v)| ColumnData::Int64(v.clone()))
            .collect();
        ColumnTable::new(name, schema, data).unwrap()
    }

    #[test]
    fn load_csv_materializes_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        std::fs::write(&path, "ID,Val\n1,10\n2,20\n3,30\n").unwrap();
        let t = load_csv(
            &path,
            "a",
            &schema(&[("ID", LogicalType::Int64), ("Val", LogicalType::Int64)]),
        )
        .unwrap();
        assert_eq!(t.row_count, 3);
        assert_eq!(t.column("Val").unwrap().value(2), Value::Int(30));
    }

    #[test]
    fn load_csv_header_only_gives_empty_table() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        std::fs::write(&path, "ID,Val\n").unwrap();
        let t = load_csv(
            &path,
            "a",
            &schema(&[("ID", LogicalType::Int64), ("Val", LogicalType::Int64)]),
        )
        .unwrap();
        assert_eq!(t.row_count, 0);
    }

    #[test]
    fn load_csv_reports_bad_numeric_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        std::fs::write(&path, "ID,Val\na,1\n").unwrap();
        let err = load_csv(
            &path,
            "a",
            &schema(&[("ID", LogicalType::Int64), ("Val", LogicalType::Int64)]),
        )
        .unwrap_err();
        match err {
            Error::Ingest { line, .. } => assert_eq!(line, 2),
            other => panic!("expected ingest error, got {other:?}"),
        }
    }

    #[test]
    fn load_csv_rejects_duplicate_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        std::fs::write(&path, "ID,ID\n1,2\n").unwrap();
        let err = load_csv(
            &path,
            "a",
            &schema(&[("ID", LogicalType::Int64), ("ID", LogicalType::Int64)]),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn load_csv_rejects_empty_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        std::fs::write(&path, "ID,Val\n1,\n").unwrap();
        let err = load_csv(
            &path,
            "a",
            &schema(&[("ID", LogicalType::Int64), ("Val", LogicalType::Int64)]),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Ingest { line: 2, .. }));
    }

    #[test]
    fn stats_min_max_distinct() {
        let t = int_table("t", &[("v", vec![5, 7, 5])]);
        let s = t.compute_stats("v").unwrap();
        assert_eq!(s.min_value, Value::Int(5));
        assert_eq!(s.max_value, Value::Int(7));
        assert_eq!(s.distinct_count, 2);
    }

    #[test]
    fn stats_unknown_column_errors() {
        let t = int_table("t", &[("v", vec![1])]);
        assert!(matches!(
            t.compute_stats("nope"),
            Err(Error::UnknownColumn(_))
        ));
    }

    // Distinct counts mirror the attribute cardinalities of the two
    // entity-matching datasets the engine is benchmarked on: 20 distinct
    // ABV values and 12 distinct Price values.
    #[test]
    fn stats_distinct_matches_em_fixture_cardinalities() {
        let abv: Vec<i64> = (0..3777).map(|i| (i % 20) as i64).collect();
        let t = int_table("beer", &[("ABV", abv)]);
        assert_eq!(t.compute_stats("ABV").unwrap().distinct_count, 20);

        let price: Vec<i64> = (0..6907).map(|i| (i % 12) as i64).collect();
        let t = int_table("itunes", &[("Price", price)]);
        assert_eq!(t.compute_stats("Price").unwrap().distinct_count, 12);
    }

    #[test]
    fn dictionary_codes_first_appearance_order() {
        let data = ColumnData::Utf8 {
            codes: vec![0, 1, 0],
            dict: vec!["x".into(), "y".into()],
        };
        let t = ColumnTable::new("t", schema(&[("s", LogicalType::Utf8)]), vec![data]).unwrap();
        let (codes, dict) = t.dictionary_codes("s").unwrap();
        assert_eq!(codes, &[0, 1, 0]);
        assert_eq!(dict, &["x".to_string(), "y".to_string()]);
    }

    #[test]
    fn dictionary_codes_empty_column() {
        let data = ColumnData::Utf8 {
            codes: vec![],
            dict: vec![],
        };
        let t = ColumnTable::new("t", schema(&[("s", LogicalType::Utf8)]), vec![data]).unwrap();
        let (codes, dict) = t.dictionary_codes("s").unwrap();
        assert!(codes.is_empty());
        assert!(dict.is_empty());
    }

    #[test]
    fn dictionary_codes_rejects_numeric() {
        let t = int_table("t", &[("v", vec![1])]);
        assert!(matches!(
            t.dictionary_codes("v"),
            Err(Error::TypeMismatch(_))
        ));
    }

    #[test]
    fn utf8_stats_are_lexicographic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        std::fs::write(&path, "s\npear\napple\npear\n").unwrap();
        let t = load_csv(&path, "a", &schema(&[("s", LogicalType::Utf8)])).unwrap();
        let s = t.compute_stats("s").unwrap();
        assert_eq!(s.min_value, Value::Str("apple".into()));
        assert_eq!(s.max_value, Value::Str("pear".into()));
        assert_eq!(s.distinct_count, 2);
    }

    #[test]
    fn csv_round_trip_preserves_stats() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        std::fs::write(&path, "ID,Val,Tag\n3,1.5,x\n1,-2.25,y\n3,0.5,x\n").unwrap();
        let schema = schema(&[
            ("ID", LogicalType::Int64),
            ("Val", LogicalType::Float64),
            ("Tag", LogicalType::Utf8),
        ]);
        let t = load_csv(&path, "a", &schema).unwrap();
        let out = dir.path().join("b.csv");
        t.write_csv(&out).unwrap();
        let t2 = load_csv(&out, "a", &schema).unwrap();
        for (col, _) in &t.schema {
            assert_eq!(
                t.compute_stats(col).unwrap(),
                t2.compute_stats(col).unwrap(),
                "stats changed for {col}"
            );
        }
    }

    #[test]
    fn infer_schema_picks_narrowest_type() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        std::fs::write(&path, "i,f,s\n1,1.5,hello\n2,2,world\n").unwrap();
        let schema = infer_schema(&path).unwrap();
        assert_eq!(schema[0].1, LogicalType::Int64);
        assert_eq!(schema[1].1, LogicalType::Float64);
        assert_eq!(schema[2].1, LogicalType::Utf8);
    }

    proptest::proptest! {
        #[test]
        fn distinct_count_matches_brute_force(values in proptest::collection::vec(-50i64..50, 0..200)) {
            let t = int_table("t", &[("v", values.clone())]);
            if values.is_empty() {
                return Ok(());
            }
            let s = t.compute_stats("v").unwrap();
            let set: HashSet<i64> = values.iter().copied().collect();
            proptest::prop_assert_eq!(s.distinct_count, set.len());
            proptest::prop_assert_eq!(s.min_value, Value::Int(*values.iter().min().unwrap()));
            proptest::prop_assert_eq!(s.max_value, Value::Int(*values.iter().max().unwrap()));
        }
    }
}
