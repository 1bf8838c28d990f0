//! Table-to-matrix constructions and their inverses: join domains, indicator
//! / valued / adjacency / non-equi encodings, nonzero extraction, and the
//! intermediate re-encoding used by multi-way join chains.
//!
//! A join domain is the ordered distinct union of both sides' key values; it
//! defines the shared matrix dimension. Indicator matrices put a single 1
//! per table row at the row's key position; valued matrices put the row's
//! value there instead; adjacency matrices are keyed by a (row-domain,
//! column-domain) pair and sum duplicate collisions.

use std::collections::HashMap;

use ordered_float::OrderedFloat;

use crate::catalog::{ColumnData, ColumnTable, Value};
use crate::error::{Error, Result};
use crate::kernels::{fill_value, CsrMatrix, DenseMatrix, Precision};
use crate::sql::ast::CmpOp;

/// Join keys extracted from one column, in encoding row order.
#[derive(Debug, Clone, PartialEq)]
pub enum KeyColumn {
    Int(Vec<i64>),
    Float(Vec<f64>),
    Str(Vec<String>),
}

impl KeyColumn {
    pub fn len(&self) -> usize {
        match self {
            KeyColumn::Int(v) => v.len(),
            KeyColumn::Float(v) => v.len(),
            KeyColumn::Str(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Extracts keys from a table column, restricted to `rows` in order.
    pub fn from_column(data: &ColumnData, rows: &[usize]) -> Self {
        match data {
            ColumnData::Int64(v) => KeyColumn::Int(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Float64(v) => KeyColumn::Float(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Utf8 { codes, dict } => KeyColumn::Str(
                rows.iter()
                    .map(|&r| dict[codes[r] as usize].clone())
                    .collect(),
            ),
        }
    }

    fn promote_to_float(&self) -> Option<Vec<f64>> {
        match self {
            KeyColumn::Int(v) => Some(v.iter().map(|&x| x as f64).collect()),
            KeyColumn::Float(v) => Some(v.clone()),
            KeyColumn::Str(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
enum DomainIndex {
    Int(HashMap<i64, u32>),
    Float(HashMap<OrderedFloat<f64>, u32>),
    Str(HashMap<String, u32>),
}

/// Ordered distinct union of two key columns. Ascending by value unless a
/// descending order was requested (order-by on the key column).
#[derive(Debug, Clone)]
pub struct JoinDomain {
    values: DomainValues,
    index: DomainIndex,
    pub descending: bool,
}

#[derive(Debug, Clone)]
pub enum DomainValues {
    Int(Vec<i64>),
    Float(Vec<f64>),
    Str(Vec<String>),
}

impl JoinDomain {
    pub fn len(&self) -> usize {
        match &self.values {
            DomainValues::Int(v) => v.len(),
            DomainValues::Float(v) => v.len(),
            DomainValues::Str(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value(&self, j: usize) -> Value {
        match &self.values {
            DomainValues::Int(v) => Value::Int(v[j]),
            DomainValues::Float(v) => Value::Float(v[j]),
            DomainValues::Str(v) => Value::Str(v[j].clone()),
        }
    }

    /// Numeric domain values for non-equi comparisons.
    pub fn numeric_values(&self) -> Result<Vec<f64>> {
        match &self.values {
            DomainValues::Int(v) => Ok(v.iter().map(|&x| x as f64).collect()),
            DomainValues::Float(v) => Ok(v.clone()),
            DomainValues::Str(_) => Err(Error::Unsupported(
                "non-equi comparison over Utf8 keys".into(),
            )),
        }
    }

    /// Maps every key of a column to its domain position. Keys absent from
    /// the domain are impossible when the domain was built from the union.
    pub fn positions(&self, keys: &KeyColumn) -> Result<Vec<u32>> {
        let missing = || Error::Internal("key missing from join domain".into());
        (0..keys.len())
            .map(|i| self.position_of(keys, i)?.ok_or_else(missing))
            .collect()
    }

    /// Domain position of one key, or None when the key is absent.
    pub fn position_of(&self, keys: &KeyColumn, i: usize) -> Result<Option<u32>> {
        match (&self.index, keys) {
            (DomainIndex::Int(idx), KeyColumn::Int(v)) => Ok(idx.get(&v[i]).copied()),
            (DomainIndex::Float(idx), KeyColumn::Int(v)) => {
                Ok(idx.get(&OrderedFloat(v[i] as f64)).copied())
            }
            (DomainIndex::Float(idx), KeyColumn::Float(v)) => {
                Ok(idx.get(&OrderedFloat(v[i])).copied())
            }
            (DomainIndex::Str(idx), KeyColumn::Str(v)) => Ok(idx.get(&v[i]).copied()),
            _ => Err(Error::TypeMismatch(
                "key column type does not match join domain".into(),
            )),
        }
    }
}

/// Ordered distinct union dom(a) ∪ dom(b). Int and Float keys mix by
/// promoting to Float; Utf8 keys only union with Utf8.
pub fn build_join_domain(a: &KeyColumn, b: &KeyColumn, descending: bool) -> Result<JoinDomain> {
    let domain = match (a, b) {
        (KeyColumn::Int(x), KeyColumn::Int(y)) => {
            let mut values: Vec<i64> = x.iter().chain(y).copied().collect();
            values.sort_unstable();
            values.dedup();
            if descending {
                values.reverse();
            }
            let index = values
                .iter()
                .enumerate()
                .map(|(i, &v)| (v, i as u32))
                .collect();
            JoinDomain {
                values: DomainValues::Int(values),
                index: DomainIndex::Int(index),
                descending,
            }
        }
        (KeyColumn::Str(x), KeyColumn::Str(y)) => {
            let mut values: Vec<String> = x.iter().chain(y).cloned().collect();
            values.sort();
            values.dedup();
            if descending {
                values.reverse();
            }
            let index = values
                .iter()
                .enumerate()
                .map(|(i, v)| (v.clone(), i as u32))
                .collect();
            JoinDomain {
                values: DomainValues::Str(values),
                index: DomainIndex::Str(index),
                descending,
            }
        }
        (KeyColumn::Str(_), _) | (_, KeyColumn::Str(_)) => {
            return Err(Error::TypeMismatch(
                "cannot join Utf8 keys with numeric keys".into(),
            ));
        }
        (x, y) => {
            let mut values: Vec<f64> = x
                .promote_to_float()
                .unwrap()
                .into_iter()
                .chain(y.promote_to_float().unwrap())
                .collect();
            values.sort_unstable_by(f64::total_cmp);
            values.dedup();
            if descending {
                values.reverse();
            }
            let index = values
                .iter()
                .enumerate()
                .map(|(i, &v)| (OrderedFloat(v), i as u32))
                .collect();
            JoinDomain {
                values: DomainValues::Float(values),
                index: DomainIndex::Float(index),
                descending,
            }
        }
    };
    Ok(domain)
}

/// Domain over a single column (group keys, adjacency axes).
pub fn build_domain(col: &KeyColumn, descending: bool) -> Result<JoinDomain> {
    let empty = match col {
        KeyColumn::Int(_) => KeyColumn::Int(Vec::new()),
        KeyColumn::Float(_) => KeyColumn::Float(Vec::new()),
        KeyColumn::Str(_) => KeyColumn::Str(Vec::new()),
    };
    build_join_domain(col, &empty, descending)
}

/// n x k indicator: row i carries a single 1 at its key's domain position.
pub fn encode_indicator(
    keys: &KeyColumn,
    domain: &JoinDomain,
    precision: Precision,
) -> Result<DenseMatrix> {
    let positions = domain.positions(keys)?;
    let mut m = DenseMatrix::zeros(keys.len(), domain.len(), precision);
    for (i, &j) in positions.iter().enumerate() {
        m.data[i * domain.len() + j as usize] = 1.0;
    }
    Ok(m)
}

/// n x k valued matrix: row i carries `vals[i]` (quantized to the storage
/// precision) at its key's domain position. `vals = None` writes 1 per row
/// (the COUNT construction).
pub fn encode_valued(
    keys: &KeyColumn,
    vals: Option<&[f64]>,
    domain: &JoinDomain,
    precision: Precision,
) -> Result<DenseMatrix> {
    if let Some(vals) = vals {
        if vals.len() != keys.len() {
            return Err(Error::Internal("value column length mismatch".into()));
        }
    }
    let positions = domain.positions(keys)?;
    let mut m = DenseMatrix::zeros(keys.len(), domain.len(), precision);
    for (i, &j) in positions.iter().enumerate() {
        let v = vals.map_or(1.0, |vs| vs[i]);
        m.data[i * domain.len() + j as usize] = fill_value(v, precision)?;
    }
    Ok(m)
}

/// d1 x d2 adjacency over (row_keys[i], col_keys[i]) pairs; entries carry 1
/// or the paired value, and duplicate pairs accumulate (sum semantics).
pub fn encode_adjacency(
    row_keys: &KeyColumn,
    col_keys: &KeyColumn,
    row_domain: &JoinDomain,
    col_domain: &JoinDomain,
    vals: Option<&[f64]>,
    precision: Precision,
) -> Result<DenseMatrix> {
    if row_keys.len() != col_keys.len() {
        return Err(Error::Internal("adjacency key columns differ in length".into()));
    }
    let rows = row_domain.positions(row_keys)?;
    let cols = col_domain.positions(col_keys)?;
    let mut m = DenseMatrix::zeros(row_domain.len(), col_domain.len(), precision);
    for i in 0..rows.len() {
        let v = vals.map_or(1.0, |vs| vs[i]);
        m.data[rows[i] as usize * col_domain.len() + cols[i] as usize] +=
            fill_value(v, precision)?;
    }
    if precision == Precision::Half {
        for v in &mut m.data {
            *v = crate::kernels::quantize_f16(*v);
        }
    }
    Ok(m)
}

/// n x k comparison encoding: entry (i, j) = 1 iff `vals[i] cmp domain[j]`.
pub fn encode_nonequi(
    vals: &[f64],
    domain: &JoinDomain,
    cmp: CmpOp,
    precision: Precision,
) -> Result<DenseMatrix> {
    if cmp == CmpOp::Eq {
        return Err(Error::Internal(
            "equality uses the indicator encoding, not encode_nonequi".into(),
        ));
    }
    let dvals = domain.numeric_values()?;
    let mut m = DenseMatrix::zeros(vals.len(), dvals.len(), precision);
    for (i, &x) in vals.iter().enumerate() {
        for (j, &d) in dvals.iter().enumerate() {
            if cmp.eval_f64(x, d) {
                m.data[i * dvals.len() + j] = 1.0;
            }
        }
    }
    Ok(m)
}

/// Positive-entry coordinates in row-major order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NonzeroList {
    pub pairs: Vec<(u32, u32)>,
}

impl NonzeroList {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

pub fn nonzero(m: &DenseMatrix) -> NonzeroList {
    let mut pairs = Vec::new();
    for i in 0..m.rows {
        for j in 0..m.cols {
            if m.at(i, j) > 0.0 {
                pairs.push((i as u32, j as u32));
            }
        }
    }
    NonzeroList { pairs }
}

/// Indicator over intermediate join witnesses: row i of the output carries
/// the indicator of the middle-table row named by `nz[i]`'s second
/// coordinate, re-keyed by that row's next join column.
pub fn reencode_intermediate(
    nz: &NonzeroList,
    mid_keys: &KeyColumn,
    next_domain: &JoinDomain,
    precision: Precision,
) -> Result<DenseMatrix> {
    let k = next_domain.len();
    let mut m = DenseMatrix::zeros(nz.len(), k, precision);
    for (i, &(_, mid_row)) in nz.pairs.iter().enumerate() {
        let mid_row = mid_row as usize;
        if mid_row >= mid_keys.len() {
            return Err(Error::Internal(format!(
                "nonzero coordinate {mid_row} outside middle table of {} rows",
                mid_keys.len()
            )));
        }
        // Only referenced middle rows need a domain position; when the chain
        // continues into table C the domain covers them by construction.
        if let Some(pos) = next_domain.position_of(mid_keys, mid_row)? {
            m.data[i * k + pos as usize] = 1.0;
        }
    }
    Ok(m)
}

// ---- sparse variants -------------------------------------------------------

/// n x k indicator in CSR form (one entry per row).
pub fn encode_indicator_csr(
    keys: &KeyColumn,
    domain: &JoinDomain,
    precision: Precision,
) -> Result<CsrMatrix> {
    let positions = domain.positions(keys)?;
    let n = keys.len();
    Ok(CsrMatrix {
        rows: n,
        cols: domain.len(),
        row_ptr: (0..=n).collect(),
        col_idx: positions.iter().map(|&p| p as usize).collect(),
        values: vec![1.0; n],
        precision,
    })
}

/// k x n transposed indicator in CSR form.
pub fn encode_indicator_csr_transposed(
    keys: &KeyColumn,
    domain: &JoinDomain,
    precision: Precision,
) -> Result<CsrMatrix> {
    let positions = domain.positions(keys)?;
    let triplets: Vec<(usize, usize, f32)> = positions
        .iter()
        .enumerate()
        .map(|(row, &p)| (p as usize, row, 1.0))
        .collect();
    // indicator entries never collide: (key position, row) pairs are unique
    CsrMatrix::from_triplets(domain.len(), keys.len(), triplets, precision)
}

/// n x k valued matrix in CSR form; zero values are dropped from storage,
/// which leaves sums unchanged.
pub fn encode_valued_csr(
    keys: &KeyColumn,
    vals: Option<&[f64]>,
    domain: &JoinDomain,
    precision: Precision,
) -> Result<CsrMatrix> {
    let positions = domain.positions(keys)?;
    let mut triplets = Vec::with_capacity(keys.len());
    for (row, &p) in positions.iter().enumerate() {
        let v = vals.map_or(1.0, |vs| vs[row]);
        triplets.push((row, p as usize, fill_value(v, precision)?));
    }
    CsrMatrix::from_triplets(keys.len(), domain.len(), triplets, precision)
}

/// k x d transposed adjacency in CSR form with duplicate-sum semantics.
pub fn encode_adjacency_csr_transposed(
    row_keys: &KeyColumn,
    col_keys: &KeyColumn,
    row_domain: &JoinDomain,
    col_domain: &JoinDomain,
    vals: Option<&[f64]>,
    precision: Precision,
) -> Result<CsrMatrix> {
    let rows = row_domain.positions(row_keys)?;
    let cols = col_domain.positions(col_keys)?;
    let mut triplets = Vec::with_capacity(rows.len());
    for i in 0..rows.len() {
        let v = vals.map_or(1.0, |vs| vs[i]);
        triplets.push((cols[i] as usize, rows[i] as usize, fill_value(v, precision)?));
    }
    CsrMatrix::from_triplets(col_domain.len(), row_domain.len(), triplets, precision)
}

/// Numeric column values as f64, restricted to `rows`.
pub fn numeric_column(table: &ColumnTable, column: &str, rows: &[usize]) -> Result<Vec<f64>> {
    match table.column(column)? {
        ColumnData::Int64(v) => Ok(rows.iter().map(|&r| v[r] as f64).collect()),
        ColumnData::Float64(v) => Ok(rows.iter().map(|&r| v[r]).collect()),
        ColumnData::Utf8 { .. } => Err(Error::TypeMismatch(format!(
            "column {}.{column} is not numeric",
            table.name
        ))),
    }
}
