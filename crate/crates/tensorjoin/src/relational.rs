//! Classical executor: filter, hash join, group-by aggregation, and a
//! brute-force nested-loop oracle. This is both the fallback plan and the
//! ground truth the matrix path is verified against. Oracle arithmetic is
//! 64-bit throughout.

use std::collections::HashMap;

use ordered_float::OrderedFloat;

use crate::catalog::{Catalog, ColumnData, ColumnTable, LogicalType, Value};
use crate::error::{Error, Result};
use crate::sql::ast::*;

const ORACLE_PRODUCT_GUARD: u128 = 100_000_000;

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ResultTable {
    pub schema: Vec<(String, LogicalType)>,
    pub rows: Vec<Vec<Value>>,
}

impl ResultTable {
    pub fn empty(schema: Vec<(String, LogicalType)>) -> Self {
        Self {
            schema,
            rows: Vec::new(),
        }
    }

    /// Canonical row ordering for multiset comparison.
    pub fn sorted_rows(&self) -> Vec<Vec<Value>> {
        let mut rows = self.rows.clone();
        rows.sort_by(|a, b| {
            for (x, y) in a.iter().zip(b) {
                let ord = cmp_values(x, y);
                if ord != std::cmp::Ordering::Equal {
                    return ord;
                }
            }
            std::cmp::Ordering::Equal
        });
        rows
    }

    pub fn multiset_eq(&self, other: &Self) -> bool {
        self.rows.len() == other.rows.len() && self.sorted_rows() == other.sorted_rows()
    }
}

pub fn cmp_values(a: &Value, b: &Value) -> std::cmp::Ordering {
    match (a, b) {
        (Value::Str(x), Value::Str(y)) => x.cmp(y),
        _ => {
            let x = a.as_f64().unwrap_or(f64::NEG_INFINITY);
            let y = b.as_f64().unwrap_or(f64::NEG_INFINITY);
            x.total_cmp(&y)
        }
    }
}

/// Hashable key for group-by maps and join tables.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum KeyAtom {
    Int(i64),
    Float(OrderedFloat<f64>),
    Str(String),
}

impl KeyAtom {
    fn from_value(v: &Value) -> Self {
        match v {
            Value::Int(i) => KeyAtom::Int(*i),
            Value::Float(f) => KeyAtom::Float(OrderedFloat(*f)),
            Value::Str(s) => KeyAtom::Str(s.clone()),
        }
    }

    /// Promotes integer keys to float so Int64/Float64 joins agree.
    fn join_key(col: &ColumnData, row: usize, promote: bool) -> Self {
        match col {
            ColumnData::Int64(v) => {
                if promote {
                    KeyAtom::Float(OrderedFloat(v[row] as f64))
                } else {
                    KeyAtom::Int(v[row])
                }
            }
            ColumnData::Float64(v) => KeyAtom::Float(OrderedFloat(v[row])),
            ColumnData::Utf8 { codes, dict } => KeyAtom::Str(dict[codes[row] as usize].clone()),
        }
    }

    pub fn to_value(&self) -> Value {
        match self {
            KeyAtom::Int(i) => Value::Int(*i),
            KeyAtom::Float(f) => Value::Float(f.0),
            KeyAtom::Str(s) => Value::Str(s.clone()),
        }
    }
}

/// Rows of `table` satisfying `col cmp constant`, in original order.
pub fn filter(table: &ColumnTable, col: &str, op: CmpOp, value: &Literal) -> Result<Vec<usize>> {
    let data = table.column(col)?;
    let mut out = Vec::new();
    match (data, value) {
        (ColumnData::Utf8 { codes, dict }, Literal::Str(s)) => {
            for (row, &code) in codes.iter().enumerate() {
                let matches = dict[code as usize] == *s;
                let keep = match op {
                    CmpOp::Eq => matches,
                    CmpOp::Ne => !matches,
                    _ => {
                        return Err(Error::Unsupported(
                            "ordered comparison on Utf8 column".into(),
                        ))
                    }
                };
                if keep {
                    out.push(row);
                }
            }
        }
        (ColumnData::Utf8 { .. }, _) | (_, Literal::Str(_)) => {
            return Err(Error::TypeMismatch(format!(
                "cannot filter {} by {value}",
                table.name
            )));
        }
        (data, lit) => {
            let rhs = match lit {
                Literal::Int(i) => *i as f64,
                Literal::Float(f) => *f,
                Literal::Str(_) => unreachable!(),
            };
            for row in 0..table.row_count {
                let lhs = data.value(row).as_f64().unwrap();
                if op.eval_f64(lhs, rhs) {
                    out.push(row);
                }
            }
        }
    }
    Ok(out)
}

/// Equi-join pair multiset between two key columns, in left-major order.
/// `left_rows` / `right_rows` restrict each side (pre-applied filters).
pub fn hash_join_pairs(
    left: &ColumnData,
    left_rows: &[usize],
    right: &ColumnData,
    right_rows: &[usize],
) -> Vec<(usize, usize)> {
    let promote = left.logical_type() == LogicalType::Float64
        || right.logical_type() == LogicalType::Float64;
    let mut table: HashMap<KeyAtom, Vec<usize>> = HashMap::new();
    for &r in right_rows {
        table
            .entry(KeyAtom::join_key(right, r, promote))
            .or_default()
            .push(r);
    }
    let mut pairs = Vec::new();
    for &l in left_rows {
        if let Some(matches) = table.get(&KeyAtom::join_key(left, l, promote)) {
            for &r in matches {
                pairs.push((l, r));
            }
        }
    }
    pairs
}

/// Evaluation context: one row index per FROM table.
pub struct TupleContext<'a> {
    pub tables: &'a [std::sync::Arc<ColumnTable>],
    pub rows: &'a [usize],
}

impl TupleContext<'_> {
    pub fn column_value(&self, col: &ColumnRef) -> Result<Value> {
        let b = col.binding()?;
        Ok(self.tables[b.table_idx].columns[b.column_idx].value(self.rows[b.table_idx]))
    }

    fn column_f64(&self, col: &ColumnRef) -> Result<f64> {
        self.column_value(col)?
            .as_f64()
            .ok_or_else(|| Error::TypeMismatch(format!("{col} is not numeric")))
    }
}

/// Evaluates a scalar expression (no aggregates) over one joined tuple.
pub fn eval_scalar(
    expr: &ScalarExpr,
    ctx: &TupleContext<'_>,
    params: &HashMap<String, f64>,
) -> Result<f64> {
    match expr {
        ScalarExpr::Column(c) => ctx.column_f64(c),
        ScalarExpr::IntLiteral(v) => Ok(*v as f64),
        ScalarExpr::FloatLiteral(v) => Ok(*v),
        ScalarExpr::Param(name) => params
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnboundParam(name.clone())),
        ScalarExpr::Neg(e) => Ok(-eval_scalar(e, ctx, params)?),
        ScalarExpr::Binary { op, lhs, rhs } => {
            let l = eval_scalar(lhs, ctx, params)?;
            let r = eval_scalar(rhs, ctx, params)?;
            Ok(match op {
                BinaryOp::Add => l + r,
                BinaryOp::Sub => l - r,
                BinaryOp::Mul => l * r,
                BinaryOp::Div => l / r,
            })
        }
        ScalarExpr::Aggregate { .. } => Err(Error::Internal(
            "aggregate in scalar position during evaluation".into(),
        )),
    }
}

/// Evaluates a projection expression with aggregate results substituted.
/// `agg_values[i]` is the accumulated value of the i-th aggregate node in
/// pre-order.
fn eval_with_aggs(
    expr: &ScalarExpr,
    agg_values: &[f64],
    next: &mut usize,
    ctx: Option<&TupleContext<'_>>,
    params: &HashMap<String, f64>,
) -> Result<f64> {
    match expr {
        ScalarExpr::Aggregate { .. } => {
            let v = agg_values[*next];
            *next += 1;
            Ok(v)
        }
        ScalarExpr::Neg(e) => Ok(-eval_with_aggs(e, agg_values, next, ctx, params)?),
        ScalarExpr::Binary { op, lhs, rhs } => {
            let l = eval_with_aggs(lhs, agg_values, next, ctx, params)?;
            let r = eval_with_aggs(rhs, agg_values, next, ctx, params)?;
            Ok(match op {
                BinaryOp::Add => l + r,
                BinaryOp::Sub => l - r,
                BinaryOp::Mul => l * r,
                BinaryOp::Div => l / r,
            })
        }
        ScalarExpr::Column(c) => match ctx {
            Some(ctx) => ctx.column_f64(c),
            None => Err(Error::Internal(format!(
                "bare column {c} in aggregate projection"
            ))),
        },
        ScalarExpr::IntLiteral(v) => Ok(*v as f64),
        ScalarExpr::FloatLiteral(v) => Ok(*v),
        ScalarExpr::Param(name) => params
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnboundParam(name.clone())),
    }
}

fn collect_aggregates<'a>(expr: &'a ScalarExpr, out: &mut Vec<(&'a AggFunc, &'a AggArg)>) {
    match expr {
        ScalarExpr::Aggregate { func, arg } => out.push((func, arg)),
        ScalarExpr::Neg(e) => collect_aggregates(e, out),
        ScalarExpr::Binary { lhs, rhs, .. } => {
            collect_aggregates(lhs, out);
            collect_aggregates(rhs, out);
        }
        _ => {}
    }
}

pub fn item_name(item: &SelectItem) -> String {
    match &item.alias {
        Some(a) => a.clone(),
        None => match &item.expr {
            ScalarExpr::Column(c) => c.to_string(),
            ScalarExpr::Aggregate { func, arg } => match arg {
                AggArg::Star => format!("{func}(*)"),
                AggArg::Expr(_) => format!("{func}(...)"),
            },
            _ => "expr".to_string(),
        },
    }
}

fn item_type(item: &SelectItem) -> LogicalType {
    match &item.expr {
        ScalarExpr::Column(c) => c.binding.map_or(LogicalType::Float64, |b| b.ty),
        ScalarExpr::Aggregate {
            func: AggFunc::Count,
            ..
        } => LogicalType::Int64,
        _ => LogicalType::Float64,
    }
}

pub fn result_schema(select_list: &[SelectItem]) -> Vec<(String, LogicalType)> {
    select_list
        .iter()
        .map(|item| (item_name(item), item_type(item)))
        .collect()
}

fn eval_predicate(
    pred: &Predicate,
    ctx: &TupleContext<'_>,
    params: &HashMap<String, f64>,
) -> Result<bool> {
    let _ = params;
    match pred {
        Predicate::ColCol { left, op, right } => {
            let lv = ctx.column_value(left)?;
            let rv = ctx.column_value(right)?;
            match (&lv, &rv) {
                (Value::Str(a), Value::Str(b)) => Ok(match op {
                    CmpOp::Eq => a == b,
                    CmpOp::Ne => a != b,
                    _ => {
                        return Err(Error::Unsupported(
                            "non-equi comparison on Utf8 columns".into(),
                        ))
                    }
                }),
                _ => {
                    let l = lv.as_f64().ok_or_else(|| {
                        Error::TypeMismatch(format!("{left} is not numeric"))
                    })?;
                    let r = rv.as_f64().ok_or_else(|| {
                        Error::TypeMismatch(format!("{right} is not numeric"))
                    })?;
                    Ok(op.eval_f64(l, r))
                }
            }
        }
        Predicate::ColConst { col, op, value } => {
            let cv = ctx.column_value(col)?;
            match (&cv, value) {
                (Value::Str(a), Literal::Str(b)) => Ok(match op {
                    CmpOp::Eq => a == b,
                    CmpOp::Ne => a != b,
                    _ => {
                        return Err(Error::Unsupported(
                            "ordered comparison on Utf8 column".into(),
                        ))
                    }
                }),
                _ => {
                    let l = cv
                        .as_f64()
                        .ok_or_else(|| Error::TypeMismatch(format!("{col} is not numeric")))?;
                    let r = match value {
                        Literal::Int(i) => *i as f64,
                        Literal::Float(f) => *f,
                        Literal::Str(_) => {
                            return Err(Error::TypeMismatch("string vs numeric".into()))
                        }
                    };
                    Ok(op.eval_f64(l, r))
                }
            }
        }
    }
}

/// TurnsWHERE-qualified tuples into the final result: grouping, aggregates,
/// projection, and order-by. Shared by the oracle and the hash-join fallback
/// so both paths define identical query semantics over their tuple sets.
fn finish_tuples(
    ast: &QueryAst,
    tables: &[std::sync::Arc<ColumnTable>],
    tuples: &[Vec<usize>],
    params: &HashMap<String, f64>,
) -> Result<ResultTable> {
    let schema = result_schema(&ast.select_list);
    let has_agg = ast
        .select_list
        .iter()
        .any(|i| i.expr.contains_aggregate());

    let mut rows: Vec<Vec<Value>> = Vec::new();
    if !has_agg {
        // The order column need not be projected: order the tuples first.
        let mut ordered: Vec<&Vec<usize>> = tuples.iter().collect();
        if let Some(order) = &ast.order_by {
            let b = order.column.binding()?;
            ordered.sort_by(|x, y| {
                let vx = tables[b.table_idx].columns[b.column_idx].value(x[b.table_idx]);
                let vy = tables[b.table_idx].columns[b.column_idx].value(y[b.table_idx]);
                let ord = cmp_values(&vx, &vy);
                if order.desc {
                    ord.reverse()
                } else {
                    ord
                }
            });
        }
        for tuple in ordered {
            let ctx = TupleContext {
                tables,
                rows: tuple,
            };
            let mut row = Vec::with_capacity(ast.select_list.len());
            for item in &ast.select_list {
                match &item.expr {
                    ScalarExpr::Column(c) => row.push(ctx.column_value(c)?),
                    expr => row.push(Value::Float(eval_scalar(expr, &ctx, params)?)),
                }
            }
            rows.push(row);
        }
    } else {
        rows = aggregate_tuples(ast, tables, tuples, params)?;
        if let Some(order) = &ast.order_by {
            sort_rows(ast, &mut rows, order)?;
        }
    }
    Ok(ResultTable { schema, rows })
}

#[derive(Default)]
struct AggAccum {
    sums: Vec<f64>,
    counts: Vec<i64>,
    first_tuple: Vec<usize>,
}

fn aggregate_tuples(
    ast: &QueryAst,
    tables: &[std::sync::Arc<ColumnTable>],
    tuples: &[Vec<usize>],
    params: &HashMap<String, f64>,
) -> Result<Vec<Vec<Value>>> {
    // Flattened aggregate list across all projection items, pre-order.
    let mut agg_nodes = Vec::new();
    for item in &ast.select_list {
        collect_aggregates(&item.expr, &mut agg_nodes);
    }

    let mut groups: HashMap<Vec<KeyAtom>, AggAccum> = HashMap::new();
    let mut group_order: Vec<Vec<KeyAtom>> = Vec::new();
    // An ungrouped aggregate always yields one row; with no qualifying
    // tuples its sums and counts are zero (no null semantics here).
    if ast.group_by.is_empty() && tuples.is_empty() {
        let key: Vec<KeyAtom> = Vec::new();
        group_order.push(key.clone());
        groups.insert(
            key,
            AggAccum {
                sums: vec![0.0; agg_nodes.len()],
                counts: vec![0; agg_nodes.len()],
                first_tuple: Vec::new(),
            },
        );
    }
    for tuple in tuples {
        let ctx = TupleContext {
            tables,
            rows: tuple,
        };
        let key: Vec<KeyAtom> = ast
            .group_by
            .iter()
            .map(|g| Ok(KeyAtom::from_value(&ctx.column_value(g)?)))
            .collect::<Result<_>>()?;
        let entry = groups.entry(key.clone()).or_insert_with(|| {
            group_order.push(key);
            AggAccum {
                sums: vec![0.0; agg_nodes.len()],
                counts: vec![0; agg_nodes.len()],
                first_tuple: tuple.clone(),
            }
        });
        for (i, (func, arg)) in agg_nodes.iter().enumerate() {
            entry.counts[i] += 1;
            match func {
                AggFunc::Count => {}
                AggFunc::Sum | AggFunc::Avg => {
                    let v = match arg {
                        AggArg::Star => {
                            return Err(Error::Unsupported("SUM(*)".into()));
                        }
                        AggArg::Expr(e) => eval_scalar(e, &ctx, params)?,
                    };
                    entry.sums[i] += v;
                }
                AggFunc::Min | AggFunc::Max => {
                    return Err(Error::Unsupported(
                        "MIN/MAX aggregation in the relational finisher".into(),
                    ));
                }
            }
        }
    }

    let mut rows = Vec::with_capacity(group_order.len());
    for key in group_order {
        let acc = &groups[&key];
        let agg_values: Vec<f64> = agg_nodes
            .iter()
            .enumerate()
            .map(|(i, (func, _))| match func {
                AggFunc::Count => acc.counts[i] as f64,
                AggFunc::Sum => acc.sums[i],
                AggFunc::Avg if acc.counts[i] == 0 => 0.0,
                AggFunc::Avg => acc.sums[i] / acc.counts[i] as f64,
                _ => f64::NAN,
            })
            .collect();
        let ctx = TupleContext {
            tables,
            rows: &acc.first_tuple,
        };
        let mut row = Vec::with_capacity(ast.select_list.len());
        let mut next = 0usize;
        for item in &ast.select_list {
            match &item.expr {
                ScalarExpr::Column(c) => row.push(ctx.column_value(c)?),
                ScalarExpr::Aggregate {
                    func: AggFunc::Count,
                    ..
                } => {
                    row.push(Value::Int(acc.counts[next]));
                    next += 1;
                }
                expr => {
                    row.push(Value::Float(eval_with_aggs(
                        expr,
                        &agg_values,
                        &mut next,
                        Some(&ctx),
                        params,
                    )?));
                }
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

fn sort_rows(ast: &QueryAst, rows: &mut [Vec<Value>], order: &OrderBy) -> Result<()> {
    // The order column must be one of the projected columns.
    let idx = ast
        .select_list
        .iter()
        .position(|item| matches!(&item.expr, ScalarExpr::Column(c) if c.same_target(&order.column)))
        .ok_or_else(|| {
            Error::Unsupported(format!(
                "ORDER BY column {} must appear in the projection",
                order.column
            ))
        })?;
    rows.sort_by(|a, b| {
        let ord = cmp_values(&a[idx], &b[idx]);
        if order.desc {
            ord.reverse()
        } else {
            ord
        }
    });
    Ok(())
}

fn gather_tables(ast: &QueryAst, catalog: &Catalog) -> Result<Vec<std::sync::Arc<ColumnTable>>> {
    ast.from_tables
        .iter()
        .map(|name| catalog.get(name).cloned())
        .collect()
}

/// Per-table row survivors of the single-table conjuncts.
fn prefiltered_rows(
    ast: &QueryAst,
    tables: &[std::sync::Arc<ColumnTable>],
) -> Result<Vec<Vec<usize>>> {
    let mut rows: Vec<Vec<usize>> = tables
        .iter()
        .map(|t| (0..t.row_count).collect())
        .collect();
    for pred in &ast.where_conjuncts {
        if let Predicate::ColConst { col, op, value } = pred {
            let b = col.binding()?;
            let keep = filter(&tables[b.table_idx], &col.column, *op, value)?;
            let keep_set: std::collections::HashSet<usize> = keep.into_iter().collect();
            rows[b.table_idx].retain(|r| keep_set.contains(r));
        }
    }
    Ok(rows)
}

/// Brute-force ground truth: enumerates the full cartesian product and
/// applies every conjunct. Guarded against runaway input sizes.
pub fn nested_loop_oracle(
    ast: &QueryAst,
    catalog: &Catalog,
    params: &HashMap<String, f64>,
) -> Result<ResultTable> {
    let tables = gather_tables(ast, catalog)?;
    let product: u128 = tables.iter().map(|t| t.row_count.max(1) as u128).product();
    if product > ORACLE_PRODUCT_GUARD {
        return Err(Error::SizeGuard(format!(
            "oracle product {product} exceeds {ORACLE_PRODUCT_GUARD}"
        )));
    }

    let mut tuples: Vec<Vec<usize>> = Vec::new();
    let mut current = vec![0usize; tables.len()];
    enumerate(&tables, ast, params, 0, &mut current, &mut tuples)?;
    finish_tuples(ast, &tables, &tuples, params)
}

fn enumerate(
    tables: &[std::sync::Arc<ColumnTable>],
    ast: &QueryAst,
    params: &HashMap<String, f64>,
    depth: usize,
    current: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) -> Result<()> {
    if depth == tables.len() {
        let ctx = TupleContext {
            tables,
            rows: current,
        };
        for pred in &ast.where_conjuncts {
            if !eval_predicate(pred, &ctx, params)? {
                return Ok(());
            }
        }
        out.push(current.clone());
        return Ok(());
    }
    for row in 0..tables[depth].row_count {
        current[depth] = row;
        enumerate(tables, ast, params, depth + 1, current, out)?;
    }
    Ok(())
}

/// Hash-join based executor: joins tables in FROM order on the first equi
/// conjunct connecting each new table, then filters remaining conjuncts.
pub fn execute_fallback(
    ast: &QueryAst,
    catalog: &Catalog,
    params: &HashMap<String, f64>,
) -> Result<ResultTable> {
    let tables = gather_tables(ast, catalog)?;
    let filtered = prefiltered_rows(ast, &tables)?;

    // tuples over tables[0..=bound]; `next` is a FROM position, not just an
    // index into `filtered`
    let mut tuples: Vec<Vec<usize>> = filtered[0].iter().map(|&r| vec![r]).collect();
    #[allow(clippy::needless_range_loop)]
    for next in 1..tables.len() {
        let equi = ast.where_conjuncts.iter().find_map(|p| match p {
            Predicate::ColCol {
                left,
                op: CmpOp::Eq,
                right,
            } => {
                let (lb, rb) = (left.binding().ok()?, right.binding().ok()?);
                if lb.table_idx < next && rb.table_idx == next {
                    Some((left.clone(), right.clone()))
                } else if rb.table_idx < next && lb.table_idx == next {
                    Some((right.clone(), left.clone()))
                } else {
                    None
                }
            }
            _ => None,
        });

        let mut extended: Vec<Vec<usize>> = Vec::new();
        match equi {
            Some((bound_col, next_col)) => {
                let bb = bound_col.binding()?;
                let nb = next_col.binding()?;
                let bound_data = &tables[bb.table_idx].columns[bb.column_idx];
                let next_data = &tables[nb.table_idx].columns[nb.column_idx];
                let promote = bound_data.logical_type() == LogicalType::Float64
                    || next_data.logical_type() == LogicalType::Float64;
                let mut hashed: HashMap<KeyAtom, Vec<usize>> = HashMap::new();
                for &r in &filtered[next] {
                    hashed
                        .entry(KeyAtom::join_key(next_data, r, promote))
                        .or_default()
                        .push(r);
                }
                for tuple in &tuples {
                    let key =
                        KeyAtom::join_key(bound_data, tuple[bb.table_idx], promote);
                    if let Some(matches) = hashed.get(&key) {
                        for &r in matches {
                            let mut t = tuple.clone();
                            t.push(r);
                            extended.push(t);
                        }
                    }
                }
            }
            None => {
                let expansion = tuples.len() as u128 * filtered[next].len().max(1) as u128;
                if expansion > ORACLE_PRODUCT_GUARD {
                    return Err(Error::SizeGuard(format!(
                        "fallback expansion {expansion} exceeds {ORACLE_PRODUCT_GUARD}"
                    )));
                }
                for tuple in &tuples {
                    for &r in &filtered[next] {
                        let mut t = tuple.clone();
                        t.push(r);
                        extended.push(t);
                    }
                }
            }
        }

        // Apply every conjunct that is now fully bound and not yet enforced.
        let mut padded: Vec<Vec<usize>> = extended
            .into_iter()
            .map(|mut t| {
                t.resize(tables.len(), 0);
                t
            })
            .collect();
        padded.retain(|tuple| {
            let ctx = TupleContext {
                tables: &tables,
                rows: tuple,
            };
            ast.where_conjuncts.iter().all(|p| {
                if max_table_idx(p).is_none_or(|m| m <= next) {
                    eval_predicate(p, &ctx, params).unwrap_or(false)
                } else {
                    true
                }
            })
        });
        tuples = padded
            .into_iter()
            .map(|mut t| {
                t.truncate(next + 1);
                t
            })
            .collect();
    }

    let mut full: Vec<Vec<usize>> = tuples;
    for t in &mut full {
        t.resize(tables.len(), 0);
    }
    finish_tuples(ast, &tables, &full, params)
}

fn max_table_idx(pred: &Predicate) -> Option<usize> {
    match pred {
        Predicate::ColCol { left, right, .. } => {
            let l = left.binding.map(|b| b.table_idx)?;
            let r = right.binding.map(|b| b.table_idx)?;
            Some(l.max(r))
        }
        Predicate::ColConst { col, .. } => col.binding.map(|b| b.table_idx),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::ColumnData;
    use crate::sql::{parse, resolve};
    use proptest::prelude::*;

    fn int_table(name: &str, cols: &[(&str, Vec<i64>)]) -> ColumnTable {
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

    fn catalog_ab(a: ColumnTable, b: ColumnTable) -> Catalog {
        let mut c = Catalog::new();
        c.register(a);
        c.register(b);
        c
    }

    fn run(sql: &str, catalog: &Catalog) -> ResultTable {
        let ast = resolve(parse(sql).unwrap(), catalog).unwrap();
        execute_fallback(&ast, catalog, &HashMap::new()).unwrap()
    }

    fn run_oracle(sql: &str, catalog: &Catalog) -> ResultTable {
        let ast = resolve(parse(sql).unwrap(), catalog).unwrap();
        nested_loop_oracle(&ast, catalog, &HashMap::new()).unwrap()
    }

    #[test]
    fn filter_basic() {
        let t = int_table("t", &[("Val", vec![1, 9, 7])]);
        let rows = filter(&t, "Val", CmpOp::Gt, &Literal::Int(5)).unwrap();
        assert_eq!(rows, vec![1, 2]);
        let none = filter(&t, "Val", CmpOp::Gt, &Literal::Int(100)).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn hash_join_single_match() {
        let a = ColumnData::Int64(vec![1, 2]);
        let b = ColumnData::Int64(vec![2, 3]);
        let pairs = hash_join_pairs(&a, &[0, 1], &b, &[0, 1]);
        assert_eq!(pairs, vec![(1, 0)]);
    }

    #[test]
    fn hash_join_duplicates_multiply() {
        let a = ColumnData::Int64(vec![5, 5]);
        let b = ColumnData::Int64(vec![5, 5]);
        let pairs = hash_join_pairs(&a, &[0, 1], &b, &[0, 1]);
        assert_eq!(pairs.len(), 4);
    }

    #[test]
    fn hash_join_disjoint_is_empty() {
        let a = ColumnData::Int64(vec![1]);
        let b = ColumnData::Int64(vec![2]);
        assert!(hash_join_pairs(&a, &[0], &b, &[0]).is_empty());
    }

    #[test]
    fn groupby_sum_count_avg() {
        let a = int_table("A", &[("ID", vec![1, 1, 2]), ("Val", vec![1, 2, 3])]);
        let b = int_table("B", &[("ID", vec![1, 2]), ("Val", vec![100, 200])]);
        let c = catalog_ab(a, b);
        let sum = run(
            "SELECT SUM(A.Val), B.Val FROM A, B WHERE A.ID = B.ID GROUP BY B.Val",
            &c,
        );
        assert!(sum.multiset_eq(&ResultTable {
            schema: sum.schema.clone(),
            rows: vec![
                vec![Value::Float(3.0), Value::Int(100)],
                vec![Value::Float(3.0), Value::Int(200)],
            ],
        }));
        let count = run(
            "SELECT COUNT(A.Val), B.Val FROM A, B WHERE A.ID = B.ID GROUP BY B.Val",
            &c,
        );
        let mut counts: Vec<i64> = count
            .rows
            .iter()
            .map(|r| match r[0] {
                Value::Int(v) => v,
                _ => panic!(),
            })
            .collect();
        counts.sort();
        assert_eq!(counts, vec![1, 2]);
        let avg = run(
            "SELECT AVG(A.Val), B.Val FROM A, B WHERE A.ID = B.ID GROUP BY B.Val",
            &c,
        );
        let mut avgs: Vec<f64> = avg
            .rows
            .iter()
            .map(|r| r[0].as_f64().unwrap())
            .collect();
        avgs.sort_by(f64::total_cmp);
        assert_eq!(avgs, vec![1.5, 3.0]);
    }

    #[test]
    fn oracle_matches_fallback_on_non_equi() {
        let a = int_table("A", &[("ID", vec![1, 2, 3]), ("Val", vec![10, 20, 30])]);
        let b = int_table("B", &[("ID", vec![2, 3]), ("Val", vec![200, 300])]);
        let c = catalog_ab(a, b);
        let q = "SELECT A.Val, B.Val FROM A, B WHERE A.ID < B.ID";
        assert!(run(q, &c).multiset_eq(&run_oracle(q, &c)));
    }

    #[test]
    fn order_by_desc_sorts_result() {
        let a = int_table("A", &[("ID", vec![1, 2]), ("Val", vec![1, 9])]);
        let b = int_table("B", &[("ID", vec![1, 2]), ("Val", vec![5, 6])]);
        let c = catalog_ab(a, b);
        let r = run(
            "SELECT A.Val, B.Val FROM A, B WHERE A.ID = B.ID ORDER BY A.Val DESC",
            &c,
        );
        assert_eq!(r.rows[0][0], Value::Int(9));
        assert_eq!(r.rows[1][0], Value::Int(1));
    }

    #[test]
    fn oracle_guard_fires() {
        let big = 100_000usize;
        let a = int_table("A", &[("ID", (0..big as i64).collect())]);
        let b = int_table("B", &[("ID", (0..big as i64).collect())]);
        let c = catalog_ab(a, b);
        let ast = resolve(
            parse("SELECT A.ID, B.ID FROM A, B WHERE A.ID = B.ID").unwrap(),
            &c,
        )
        .unwrap();
        assert!(matches!(
            nested_loop_oracle(&ast, &c, &HashMap::new()),
            Err(Error::SizeGuard(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn hash_join_equals_nested_loop_multiset(
            a_ids in proptest::collection::vec(0i64..16, 0..64),
            b_ids in proptest::collection::vec(0i64..16, 0..64),
        ) {
            let a = int_table("A", &[("ID", a_ids.clone()), ("Val", (0..a_ids.len() as i64).collect())]);
            let b = int_table("B", &[("ID", b_ids.clone()), ("Val", (0..b_ids.len() as i64).collect())]);
            let c = catalog_ab(a, b);
            let q = "SELECT A.Val, B.Val FROM A, B WHERE A.ID = B.ID";
            prop_assert!(run(q, &c).multiset_eq(&run_oracle(q, &c)));
        }

        #[test]
        fn groupby_sum_is_permutation_invariant(
            mut vals in proptest::collection::vec((0i64..4, -50i64..50), 1..64),
            seed in 0u64..1000,
        ) {
            let a_ids: Vec<i64> = vals.iter().map(|(k, _)| *k).collect();
            let a_vals: Vec<i64> = vals.iter().map(|(_, v)| *v).collect();
            let b = int_table("B", &[("ID", vec![0, 1, 2, 3]), ("Val", vec![0, 1, 2, 3])]);
            let a = int_table("A", &[("ID", a_ids), ("Val", a_vals)]);
            let c = catalog_ab(a, b.clone());
            let q = "SELECT SUM(A.Val), B.Val FROM A, B WHERE A.ID = B.ID GROUP BY B.Val";
            let before = run(q, &c);

            // permute input rows
            let n = vals.len();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (s >> 33) as usize % (i + 1);
                vals.swap(i, j);
            }
            let a2 = int_table("A", &[
                ("ID", vals.iter().map(|(k, _)| *k).collect()),
                ("Val", vals.iter().map(|(_, v)| *v).collect()),
            ]);
            let c2 = catalog_ab(a2, b);
            let after = run(q, &c2);
            prop_assert!(before.multiset_eq(&after));
        }
    }
}
