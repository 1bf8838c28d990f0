//! Per-pattern execution pipelines: row selection, matrix fills, kernel
//! chains, and matrix-to-table decoding.
//!
//! Join results decode positive product entries as witness pairs (the entry
//! value is the pair multiplicity). Aggregates run the product followed by
//! ones-vector reductions, then decode per group-domain position, so an
//! order-by on the group key falls out of the domain direction with no sort
//! step; plain join row order likewise follows the (optionally permuted)
//! input row order.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use crate::catalog::{Catalog, ColumnTable, Value};
use crate::encode::{
    build_domain, build_join_domain, encode_adjacency, encode_adjacency_csr_transposed,
    encode_indicator, encode_indicator_csr, encode_indicator_csr_transposed, encode_nonequi,
    encode_valued, encode_valued_csr, nonzero, reencode_intermediate, JoinDomain, KeyColumn,
    NonzeroList,
};
use crate::error::{Error, Result};
use crate::exec::{KernelRunner, Operand, StageTimings};
use crate::kernels::DenseMatrix;
use crate::planner::{AggShape, EquiJoin, PhysicalPlan, QueryPattern};
use crate::relational::{eval_scalar, filter, result_schema, ResultTable, TupleContext};
use crate::sql::ast::*;

pub(crate) fn execute_pattern(
    catalog: &Catalog,
    plan: &PhysicalPlan,
    params: &HashMap<String, f64>,
    runner: &mut KernelRunner<'_>,
    stages: &mut StageTimings,
) -> Result<ResultTable> {
    let ctx = RunCtx::new(catalog, &plan.ast, params)?;
    runner.stage_raw(plan.transform_site, ctx.raw_bytes())?;
    match &plan.pattern {
        QueryPattern::TwoWayJoin { join } => {
            execute_two_way(&ctx, Some(join), None, runner, stages)
        }
        QueryPattern::NonEquiJoin { left, right, cmp } => {
            execute_two_way(&ctx, None, Some((left, right, *cmp)), runner, stages)
        }
        QueryPattern::GroupByAggOverJoin {
            join,
            group_col,
            group_side,
            aggs,
        } => execute_group_agg(&ctx, join, group_col, *group_side, aggs, runner, stages),
        QueryPattern::AggOverJoinNoGroupBy { join, aggs } => {
            execute_scalar_agg(&ctx, join, aggs, runner, stages)
        }
        QueryPattern::MatMulQuery {
            join,
            row_group,
            col_group,
            aggs,
        } => execute_matmul(&ctx, join, row_group, col_group, aggs, runner, stages),
        QueryPattern::MultiWayJoin {
            links,
            chain_exception,
        } => execute_multiway(&ctx, links, *chain_exception, runner, stages),
        QueryPattern::Unsupported { reason } => Err(Error::Internal(format!(
            "unsupported pattern reached the matrix executor: {reason}"
        ))),
    }
}

struct RunCtx<'a> {
    ast: &'a QueryAst,
    tables: Vec<Arc<ColumnTable>>,
    params: &'a HashMap<String, f64>,
}

impl<'a> RunCtx<'a> {
    fn new(catalog: &Catalog, ast: &'a QueryAst, params: &'a HashMap<String, f64>) -> Result<Self> {
        let tables = ast
            .from_tables
            .iter()
            .map(|t| catalog.get(t).cloned())
            .collect::<Result<_>>()?;
        Ok(Self {
            ast,
            tables,
            params,
        })
    }

    fn raw_bytes(&self) -> f64 {
        let mut cols = Vec::new();
        for item in &self.ast.select_list {
            item.expr.all_columns(&mut cols);
        }
        (cols.len() + self.tables.len()) as f64 * 8.0 * self.tables[0].row_count as f64
    }

    /// Row set for one table after its column-constant filters, optionally
    /// permuted into the order-by order.
    fn selected_rows(&self, table_idx: usize, apply_order: bool) -> Result<Vec<usize>> {
        let table = &self.tables[table_idx];
        let mut rows: Vec<usize> = (0..table.row_count).collect();
        for pred in &self.ast.where_conjuncts {
            if let Predicate::ColConst { col, op, value } = pred {
                let b = col.binding()?;
                if b.table_idx == table_idx {
                    let keep = filter(table, &col.column, *op, value)?;
                    let keep: std::collections::HashSet<usize> = keep.into_iter().collect();
                    rows.retain(|r| keep.contains(r));
                }
            }
        }
        if apply_order {
            if let Some(order) = &self.ast.order_by {
                let b = order.column.binding()?;
                if b.table_idx == table_idx {
                    let data = &table.columns[b.column_idx];
                    rows.sort_by(|&x, &y| {
                        let ord =
                            crate::relational::cmp_values(&data.value(x), &data.value(y));
                        if order.desc {
                            ord.reverse()
                        } else {
                            ord
                        }
                    });
                }
            }
        }
        Ok(rows)
    }

    fn keys(&self, col: &ColumnRef, rows: &[usize]) -> Result<KeyColumn> {
        let b = col.binding()?;
        Ok(KeyColumn::from_column(
            &self.tables[b.table_idx].columns[b.column_idx],
            rows,
        ))
    }

    fn const_value(&self, expr: Option<&ScalarExpr>) -> Result<f64> {
        match expr {
            None => Ok(1.0),
            Some(e) => {
                let tables: Vec<Arc<ColumnTable>> = Vec::new();
                let ctx = TupleContext {
                    tables: &tables,
                    rows: &[],
                };
                eval_scalar(e, &ctx, self.params)
            }
        }
    }

    /// Per-row fill values for one side of an aggregate: const * factor(row).
    /// None means an all-ones indicator side.
    fn factor_values(
        &self,
        factor: Option<&ScalarExpr>,
        const_value: f64,
        table_idx: usize,
        rows: &[usize],
    ) -> Result<Option<Vec<f64>>> {
        match factor {
            None => {
                if const_value == 1.0 {
                    Ok(None)
                } else {
                    Ok(Some(vec![const_value; rows.len()]))
                }
            }
            Some(expr) => {
                let mut out = Vec::with_capacity(rows.len());
                let mut tuple = vec![0usize; self.tables.len()];
                for &r in rows {
                    tuple[table_idx] = r;
                    let ctx = TupleContext {
                        tables: &self.tables,
                        rows: &tuple,
                    };
                    out.push(const_value * eval_scalar(expr, &ctx, self.params)?);
                }
                Ok(Some(out))
            }
        }
    }

    fn project_row(&self, rows: &[usize]) -> Result<Vec<Value>> {
        let ctx = TupleContext {
            tables: &self.tables,
            rows,
        };
        let mut out = Vec::with_capacity(self.ast.select_list.len());
        for item in &self.ast.select_list {
            match &item.expr {
                ScalarExpr::Column(c) => out.push(ctx.column_value(c)?),
                expr => out.push(Value::Float(eval_scalar(expr, &ctx, self.params)?)),
            }
        }
        Ok(out)
    }
}

fn timed<T>(slot: &mut f64, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t = Instant::now();
    let out = f()?;
    *slot += t.elapsed().as_secs_f64();
    Ok(out)
}

// ---- two-way joins (equi and non-equi) -------------------------------------

fn execute_two_way(
    ctx: &RunCtx<'_>,
    equi: Option<&EquiJoin>,
    nonequi: Option<(&ColumnRef, &ColumnRef, CmpOp)>,
    runner: &mut KernelRunner<'_>,
    stages: &mut StageTimings,
) -> Result<ResultTable> {
    let (left_col, right_col) = match (equi, nonequi) {
        (Some(j), None) => (&j.left, &j.right),
        (None, Some((l, r, _))) => (l, r),
        _ => unreachable!(),
    };
    let (rows_l, rows_r, keys_l, keys_r) = timed(&mut stages.fill_matrices, || {
        let rows_l = ctx.selected_rows(0, true)?;
        let rows_r = ctx.selected_rows(1, true)?;
        let keys_l = ctx.keys(left_col, &rows_l)?;
        let keys_r = ctx.keys(right_col, &rows_r)?;
        Ok((rows_l, rows_r, keys_l, keys_r))
    })?;

    let (a, bt) = timed(&mut stages.fill_matrices, || {
        let domain = build_join_domain(&keys_l, &keys_r, false)?;
        let a = match nonequi {
            Some((_, _, cmp)) => {
                let vals = match &keys_l {
                    KeyColumn::Int(v) => v.iter().map(|&x| x as f64).collect::<Vec<_>>(),
                    KeyColumn::Float(v) => v.clone(),
                    KeyColumn::Str(_) => {
                        return Err(Error::Unsupported(
                            "non-equi join over Utf8 keys".into(),
                        ))
                    }
                };
                Operand::Dense(encode_nonequi(&vals, &domain, cmp, runner.precision)?)
            }
            None => {
                if runner.wants_csr() {
                    Operand::Csr(encode_indicator_csr(&keys_l, &domain, runner.precision)?)
                } else {
                    Operand::Dense(encode_indicator(&keys_l, &domain, runner.precision)?)
                }
            }
        };
        let bt = if runner.wants_csr() {
            Operand::Csr(encode_indicator_csr_transposed(
                &keys_r,
                &domain,
                runner.precision,
            )?)
        } else {
            Operand::Dense(encode_indicator(&keys_r, &domain, runner.precision)?.transposed())
        };
        Ok((a, bt))
    })?;

    let c = runner.multiply(a, bt)?;

    timed(&mut stages.decode, || {
        // emit in the ordered side's major direction
        let mut outer_left = true;
        if let Some(order) = &ctx.ast.order_by {
            outer_left = order.column.binding()?.table_idx == 0;
        }
        decode_join_pairs(ctx, &c, &rows_l, &rows_r, outer_left)
    })
}

/// One projected row per positive product entry; the integer entry value is
/// the pair multiplicity.
fn decode_join_pairs(
    ctx: &RunCtx<'_>,
    c: &DenseMatrix,
    rows_l: &[usize],
    rows_r: &[usize],
    outer_left: bool,
) -> Result<ResultTable> {
    let mut out = ResultTable::empty(result_schema(&ctx.ast.select_list));
    let mut emit = |i: usize, j: usize| -> Result<()> {
        let v = c.at(i, j);
        if v > 0.0 {
            let copies = v.round() as usize;
            let row = ctx.project_row(&[rows_l[i], rows_r[j]])?;
            for _ in 0..copies {
                out.rows.push(row.clone());
            }
        }
        Ok(())
    };
    if outer_left {
        for i in 0..c.rows {
            for j in 0..c.cols {
                emit(i, j)?;
            }
        }
    } else {
        for j in 0..c.cols {
            for i in 0..c.rows {
                emit(i, j)?;
            }
        }
    }
    Ok(out)
}

// ---- group-by aggregates over a join ---------------------------------------

fn execute_group_agg(
    ctx: &RunCtx<'_>,
    join: &EquiJoin,
    group_col: &ColumnRef,
    group_side: usize,
    aggs: &[AggShape],
    runner: &mut KernelRunner<'_>,
    stages: &mut StageTimings,
) -> Result<ResultTable> {
    let valued_side = 1 - group_side;
    let (valued_key, group_key) = if group_side == 1 {
        (&join.left, &join.right)
    } else {
        (&join.right, &join.left)
    };
    let (rows_v, rows_g, keys_v, keys_g, group_vals) =
        timed(&mut stages.fill_matrices, || {
            let rows_v = ctx.selected_rows(valued_side, false)?;
            let rows_g = ctx.selected_rows(group_side, false)?;
            let keys_v = ctx.keys(valued_key, &rows_v)?;
            let keys_g = ctx.keys(group_key, &rows_g)?;
            let group_vals = ctx.keys(group_col, &rows_g)?;
            Ok((rows_v, rows_g, keys_v, keys_g, group_vals))
        })?;

    // order-by on the group key builds the domain in that direction
    let descending = match &ctx.ast.order_by {
        Some(order) => {
            if !order.column.same_target(group_col) {
                return Err(Error::Unsupported(
                    "grouped results order only by the group column".into(),
                ));
            }
            order.desc
        }
        None => false,
    };

    let (join_domain, group_domain) = timed(&mut stages.fill_matrices, || {
        Ok((
            build_join_domain(&keys_v, &keys_g, false)?,
            build_domain(&group_vals, descending)?,
        ))
    })?;

    // group liveness: a group appears iff some of its rows joins
    let live = live_groups(&join_domain, &group_domain, &keys_v, &keys_g, &group_vals)?;

    let mut agg_values: Vec<Vec<f64>> = Vec::with_capacity(aggs.len());
    for shape in aggs {
        let (v_expr, g_expr) = if group_side == 1 {
            (shape.left_expr.as_ref(), shape.right_expr.as_ref())
        } else {
            (shape.right_expr.as_ref(), shape.left_expr.as_ref())
        };
        let values = match shape.func {
            AggFunc::Sum => grouped_reduction(
                ctx, runner, stages, &join_domain, &group_domain, &keys_v, &keys_g, &group_vals,
                &rows_v, &rows_g, valued_side, group_side, v_expr, g_expr,
                ctx.const_value(shape.const_expr.as_ref())?,
            )?,
            AggFunc::Count => grouped_reduction(
                ctx, runner, stages, &join_domain, &group_domain, &keys_v, &keys_g, &group_vals,
                &rows_v, &rows_g, valued_side, group_side, None, None, 1.0,
            )?,
            AggFunc::Avg => {
                let sums = grouped_reduction(
                    ctx, runner, stages, &join_domain, &group_domain, &keys_v, &keys_g,
                    &group_vals, &rows_v, &rows_g, valued_side, group_side, v_expr, g_expr,
                    ctx.const_value(shape.const_expr.as_ref())?,
                )?;
                let counts = grouped_reduction(
                    ctx, runner, stages, &join_domain, &group_domain, &keys_v, &keys_g,
                    &group_vals, &rows_v, &rows_g, valued_side, group_side, None, None, 1.0,
                )?;
                sums.iter()
                    .zip(&counts)
                    .map(|(s, c)| if *c != 0.0 { s / c } else { 0.0 })
                    .collect()
            }
            AggFunc::Min | AggFunc::Max => {
                return Err(Error::Internal("MIN/MAX in matrix executor".into()))
            }
        };
        agg_values.push(values);
    }

    timed(&mut stages.decode, || {
        decode_groupby(ctx, &group_domain, group_col, &live, aggs, &agg_values)
    })
}

/// The Q3 pipeline: valued (n x k) times grouped adjacency (k x m), then the
/// all-ones row reduction (1 x n)(n x m) -> 1 x m of per-group sums.
#[allow(clippy::too_many_arguments)]
fn grouped_reduction(
    ctx: &RunCtx<'_>,
    runner: &mut KernelRunner<'_>,
    stages: &mut StageTimings,
    join_domain: &JoinDomain,
    group_domain: &JoinDomain,
    keys_v: &KeyColumn,
    keys_g: &KeyColumn,
    group_vals: &KeyColumn,
    rows_v: &[usize],
    rows_g: &[usize],
    valued_side: usize,
    group_side: usize,
    v_expr: Option<&ScalarExpr>,
    g_expr: Option<&ScalarExpr>,
    const_value: f64,
) -> Result<Vec<f64>> {
    let (v_values, g_values) = timed(&mut stages.fill_matrices, || {
        Ok((
            ctx.factor_values(v_expr, const_value, valued_side, rows_v)?,
            ctx.factor_values(g_expr, 1.0, group_side, rows_g)?,
        ))
    })?;

    let (mat_v, mat_g_t) = timed(&mut stages.fill_matrices, || {
        let mat_v = if runner.wants_csr() {
            Operand::Csr(encode_valued_csr(
                keys_v,
                v_values.as_deref(),
                join_domain,
                runner.precision,
            )?)
        } else {
            Operand::Dense(encode_valued(
                keys_v,
                v_values.as_deref(),
                join_domain,
                runner.precision,
            )?)
        };
        // grouped side: adjacency over (group value, join key), transposed to
        // k x m for the product; duplicates accumulate
        let mat_g_t = if runner.wants_csr() {
            Operand::Csr(encode_adjacency_csr_transposed(
                group_vals,
                keys_g,
                group_domain,
                join_domain,
                g_values.as_deref(),
                runner.precision,
            )?)
        } else {
            Operand::Dense(
                encode_adjacency(
                    group_vals,
                    keys_g,
                    group_domain,
                    join_domain,
                    g_values.as_deref(),
                    runner.precision,
                )?
                .transposed(),
            )
        };
        Ok((mat_v, mat_g_t))
    })?;

    let n = keys_v.len();
    let product = runner.multiply(mat_v, mat_g_t)?; // n x m
    let ones = DenseMatrix::ones_row(n, runner.precision);
    let reduced = runner.multiply(Operand::Dense(ones), Operand::Dense(product))?; // 1 x m
    Ok(reduced.data.iter().map(|&v| v as f64).collect())
}

fn live_groups(
    join_domain: &JoinDomain,
    group_domain: &JoinDomain,
    keys_v: &KeyColumn,
    keys_g: &KeyColumn,
    group_vals: &KeyColumn,
) -> Result<Vec<bool>> {
    let mut key_present = vec![false; join_domain.len()];
    for i in 0..keys_v.len() {
        if let Some(p) = join_domain.position_of(keys_v, i)? {
            key_present[p as usize] = true;
        }
    }
    let mut live = vec![false; group_domain.len()];
    for i in 0..keys_g.len() {
        if let (Some(kp), Some(gp)) = (
            join_domain.position_of(keys_g, i)?,
            group_domain.position_of(group_vals, i)?,
        ) {
            if key_present[kp as usize] {
                live[gp as usize] = true;
            }
        }
    }
    Ok(live)
}

/// Emits one row per live group, in group-domain order (already the order-by
/// order when one was requested). Groups whose sum is zero but whose count is
/// positive stay in the result.
fn decode_groupby(
    ctx: &RunCtx<'_>,
    group_domain: &JoinDomain,
    group_col: &ColumnRef,
    live: &[bool],
    aggs: &[AggShape],
    agg_values: &[Vec<f64>],
) -> Result<ResultTable> {
    let mut out = ResultTable::empty(result_schema(&ctx.ast.select_list));
    for g in 0..group_domain.len() {
        if !live[g] {
            continue;
        }
        let group_value = group_domain.value(g);
        let per_node: Vec<f64> = agg_values.iter().map(|v| v[g]).collect();
        let row = project_agg_items(
            ctx,
            &per_node,
            aggs,
            &|c: &ColumnRef| {
                if c.same_target(group_col) {
                    Some(group_value.clone())
                } else {
                    None
                }
            },
        )?;
        out.rows.push(row);
    }
    Ok(out)
}

/// Evaluates the projection with aggregate node values substituted in
/// pre-order, mirroring the relational executor's typing: bare COUNT emits an
/// integer, other aggregate expressions emit floats, plain columns pass
/// through.
fn project_agg_items(
    ctx: &RunCtx<'_>,
    agg_values: &[f64],
    aggs: &[AggShape],
    col_value: &dyn Fn(&ColumnRef) -> Option<Value>,
) -> Result<Vec<Value>> {
    let _ = aggs;
    let mut next = 0usize;
    let mut out = Vec::with_capacity(ctx.ast.select_list.len());
    for item in &ctx.ast.select_list {
        match &item.expr {
            ScalarExpr::Column(c) => {
                let v = col_value(c).ok_or_else(|| {
                    Error::Internal(format!("projection column {c} is not a group key"))
                })?;
                out.push(v);
            }
            ScalarExpr::Aggregate {
                func: AggFunc::Count,
                ..
            } => {
                out.push(Value::Int(agg_values[next].round() as i64));
                next += 1;
            }
            expr => {
                let v = eval_item_expr(expr, agg_values, &mut next, col_value, ctx.params)?;
                out.push(Value::Float(v));
            }
        }
    }
    Ok(out)
}

fn eval_item_expr(
    expr: &ScalarExpr,
    agg_values: &[f64],
    next: &mut usize,
    col_value: &dyn Fn(&ColumnRef) -> Option<Value>,
    params: &HashMap<String, f64>,
) -> Result<f64> {
    match expr {
        ScalarExpr::Aggregate { .. } => {
            let v = agg_values[*next];
            *next += 1;
            Ok(v)
        }
        ScalarExpr::Column(c) => col_value(c)
            .and_then(|v| v.as_f64())
            .ok_or_else(|| Error::Internal(format!("column {c} unavailable at decode"))),
        ScalarExpr::IntLiteral(v) => Ok(*v as f64),
        ScalarExpr::FloatLiteral(v) => Ok(*v),
        ScalarExpr::Param(name) => params
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnboundParam(name.clone())),
        ScalarExpr::Neg(e) => Ok(-eval_item_expr(e, agg_values, next, col_value, params)?),
        ScalarExpr::Binary { op, lhs, rhs } => {
            let l = eval_item_expr(lhs, agg_values, next, col_value, params)?;
            let r = eval_item_expr(rhs, agg_values, next, col_value, params)?;
            Ok(match op {
                BinaryOp::Add => l + r,
                BinaryOp::Sub => l - r,
                BinaryOp::Mul => l * r,
                BinaryOp::Div => l / r,
            })
        }
    }
}

// ---- aggregates without group-by -------------------------------------------

fn execute_scalar_agg(
    ctx: &RunCtx<'_>,
    join: &EquiJoin,
    aggs: &[AggShape],
    runner: &mut KernelRunner<'_>,
    stages: &mut StageTimings,
) -> Result<ResultTable> {
    let (rows_l, rows_r, keys_l, keys_r, domain) = timed(&mut stages.fill_matrices, || {
        let rows_l = ctx.selected_rows(0, false)?;
        let rows_r = ctx.selected_rows(1, false)?;
        let keys_l = ctx.keys(&join.left, &rows_l)?;
        let keys_r = ctx.keys(&join.right, &rows_r)?;
        let domain = build_join_domain(&keys_l, &keys_r, false)?;
        Ok((rows_l, rows_r, keys_l, keys_r, domain))
    })?;

    let mut agg_scalars = Vec::with_capacity(aggs.len());
    for shape in aggs {
        let scalar = match shape.func {
            AggFunc::Sum => scalar_chain(
                ctx, runner, stages, &domain, &keys_l, &keys_r, &rows_l, &rows_r,
                shape.left_expr.as_ref(), shape.right_expr.as_ref(),
                ctx.const_value(shape.const_expr.as_ref())?,
            )?,
            AggFunc::Count => scalar_chain(
                ctx, runner, stages, &domain, &keys_l, &keys_r, &rows_l, &rows_r, None, None, 1.0,
            )?,
            AggFunc::Avg => {
                let sum = scalar_chain(
                    ctx, runner, stages, &domain, &keys_l, &keys_r, &rows_l, &rows_r,
                    shape.left_expr.as_ref(), shape.right_expr.as_ref(),
                    ctx.const_value(shape.const_expr.as_ref())?,
                )?;
                let count = scalar_chain(
                    ctx, runner, stages, &domain, &keys_l, &keys_r, &rows_l, &rows_r, None, None,
                    1.0,
                )?;
                if count != 0.0 {
                    sum / count
                } else {
                    0.0
                }
            }
            AggFunc::Min | AggFunc::Max => {
                return Err(Error::Internal("MIN/MAX in matrix executor".into()))
            }
        };
        agg_scalars.push(scalar);
    }

    timed(&mut stages.decode, || {
        let row = project_agg_items(ctx, &agg_scalars, aggs, &|_| None)?;
        let mut out = ResultTable::empty(result_schema(&ctx.ast.select_list));
        out.rows.push(row);
        Ok(out)
    })
}

/// Q4 chain: valued x valued^T, then a ones-column and a ones-row reduction
/// collapse the n x m product to a scalar.
#[allow(clippy::too_many_arguments)]
fn scalar_chain(
    ctx: &RunCtx<'_>,
    runner: &mut KernelRunner<'_>,
    stages: &mut StageTimings,
    domain: &JoinDomain,
    keys_l: &KeyColumn,
    keys_r: &KeyColumn,
    rows_l: &[usize],
    rows_r: &[usize],
    left_expr: Option<&ScalarExpr>,
    right_expr: Option<&ScalarExpr>,
    const_value: f64,
) -> Result<f64> {
    let (l_values, r_values) = timed(&mut stages.fill_matrices, || {
        Ok((
            ctx.factor_values(left_expr, const_value, 0, rows_l)?,
            ctx.factor_values(right_expr, 1.0, 1, rows_r)?,
        ))
    })?;
    let (mat_l, mat_r_t) = timed(&mut stages.fill_matrices, || {
        let mat_l = if runner.wants_csr() {
            Operand::Csr(encode_valued_csr(
                keys_l,
                l_values.as_deref(),
                domain,
                runner.precision,
            )?)
        } else {
            Operand::Dense(encode_valued(
                keys_l,
                l_values.as_deref(),
                domain,
                runner.precision,
            )?)
        };
        let mat_r = encode_valued(keys_r, r_values.as_deref(), domain, runner.precision)?;
        let mat_r_t = if runner.wants_csr() {
            Operand::Csr(crate::kernels::to_csr(&mat_r.transposed()))
        } else {
            Operand::Dense(mat_r.transposed())
        };
        Ok((mat_l, mat_r_t))
    })?;

    let (n, m) = (keys_l.len(), keys_r.len());
    let product = runner.multiply(mat_l, mat_r_t)?; // n x m
    let col = runner.multiply(
        Operand::Dense(product),
        Operand::Dense(DenseMatrix::ones_col(m, runner.precision)),
    )?; // n x 1
    let scalar = runner.multiply(
        Operand::Dense(DenseMatrix::ones_row(n, runner.precision)),
        Operand::Dense(col),
    )?; // 1 x 1
    Ok(scalar.data.first().copied().unwrap_or(0.0) as f64)
}

// ---- direct matrix-multiplication queries ----------------------------------

fn execute_matmul(
    ctx: &RunCtx<'_>,
    join: &EquiJoin,
    row_group: &ColumnRef,
    col_group: &ColumnRef,
    aggs: &[AggShape],
    runner: &mut KernelRunner<'_>,
    stages: &mut StageTimings,
) -> Result<ResultTable> {
    let (rows_l, rows_r, keys_l, keys_r, row_vals, col_vals) =
        timed(&mut stages.fill_matrices, || {
            let rows_l = ctx.selected_rows(0, false)?;
            let rows_r = ctx.selected_rows(1, false)?;
            let keys_l = ctx.keys(&join.left, &rows_l)?;
            let keys_r = ctx.keys(&join.right, &rows_r)?;
            let row_vals = ctx.keys(row_group, &rows_l)?;
            let col_vals = ctx.keys(col_group, &rows_r)?;
            Ok((rows_l, rows_r, keys_l, keys_r, row_vals, col_vals))
        })?;

    // order-by on either group axis sets that domain's direction and decode
    // iterates it as the outer axis
    let mut row_desc = false;
    let mut col_desc = false;
    let mut outer_rows = true;
    if let Some(order) = &ctx.ast.order_by {
        if order.column.same_target(row_group) {
            row_desc = order.desc;
        } else if order.column.same_target(col_group) {
            col_desc = order.desc;
            outer_rows = false;
        } else {
            return Err(Error::Unsupported(
                "matrix query orders only by a group column".into(),
            ));
        }
    }

    let (join_domain, row_domain, col_domain) = timed(&mut stages.fill_matrices, || {
        Ok((
            build_join_domain(&keys_l, &keys_r, false)?,
            build_domain(&row_vals, row_desc)?,
            build_domain(&col_vals, col_desc)?,
        ))
    })?;

    let mut cells: Vec<Vec<f64>> = Vec::with_capacity(aggs.len());
    let mut chain = |l_vals: Option<Vec<f64>>, r_vals: Option<Vec<f64>>| -> Result<DenseMatrix> {
        let (mat_a, mat_b_t) = timed(&mut stages.fill_matrices, || {
            let mat_a = if runner.wants_csr() {
                // adjacency csr: rows = row domain, cols = join domain
                Operand::Csr(
                    encode_adjacency_csr_transposed(
                        &keys_l,
                        &row_vals,
                        &join_domain,
                        &row_domain,
                        l_vals.as_deref(),
                        runner.precision,
                    )?,
                )
            } else {
                Operand::Dense(encode_adjacency(
                    &row_vals,
                    &keys_l,
                    &row_domain,
                    &join_domain,
                    l_vals.as_deref(),
                    runner.precision,
                )?)
            };
            let mat_b_t = if runner.wants_csr() {
                Operand::Csr(encode_adjacency_csr_transposed(
                    &col_vals,
                    &keys_r,
                    &col_domain,
                    &join_domain,
                    r_vals.as_deref(),
                    runner.precision,
                )?)
            } else {
                Operand::Dense(
                    encode_adjacency(
                        &col_vals,
                        &keys_r,
                        &col_domain,
                        &join_domain,
                        r_vals.as_deref(),
                        runner.precision,
                    )?
                    .transposed(),
                )
            };
            Ok((mat_a, mat_b_t))
        })?;
        runner.multiply(mat_a, mat_b_t)
    };
    for shape in aggs {
        let c = match shape.func {
            AggFunc::Sum => {
                let l = ctx.factor_values(
                    shape.left_expr.as_ref(),
                    ctx.const_value(shape.const_expr.as_ref())?,
                    0,
                    &rows_l,
                )?;
                let r = ctx.factor_values(shape.right_expr.as_ref(), 1.0, 1, &rows_r)?;
                chain(l, r)?
            }
            AggFunc::Count => chain(None, None)?,
            AggFunc::Avg => {
                let l = ctx.factor_values(
                    shape.left_expr.as_ref(),
                    ctx.const_value(shape.const_expr.as_ref())?,
                    0,
                    &rows_l,
                )?;
                let r = ctx.factor_values(shape.right_expr.as_ref(), 1.0, 1, &rows_r)?;
                let sums = chain(l, r)?;
                let counts = chain(None, None)?;
                let data = sums
                    .data
                    .iter()
                    .zip(&counts.data)
                    .map(|(s, c)| if *c != 0.0 { s / c } else { 0.0 })
                    .collect();
                DenseMatrix {
                    rows: sums.rows,
                    cols: sums.cols,
                    data,
                    precision: sums.precision,
                }
            }
            AggFunc::Min | AggFunc::Max => {
                return Err(Error::Internal("MIN/MAX in matrix executor".into()))
            }
        };
        cells.push(c.data.iter().map(|&v| v as f64).collect());
    }

    timed(&mut stages.decode, || {
        decode_matmul(
            ctx,
            &row_domain,
            &col_domain,
            row_group,
            col_group,
            aggs,
            &cells,
            outer_rows,
            &join_domain,
            &keys_l,
            &keys_r,
            &row_vals,
            &col_vals,
        )
    })
}

/// A (row, col) cell appears in the result iff some join witness produced it.
/// Nonzero cells prove themselves; zero cells check lazily for a shared join
/// key between the two groups.
#[allow(clippy::too_many_arguments)]
fn decode_matmul(
    ctx: &RunCtx<'_>,
    row_domain: &JoinDomain,
    col_domain: &JoinDomain,
    row_group: &ColumnRef,
    col_group: &ColumnRef,
    aggs: &[AggShape],
    cells: &[Vec<f64>],
    outer_rows: bool,
    join_domain: &JoinDomain,
    keys_l: &KeyColumn,
    keys_r: &KeyColumn,
    row_vals: &KeyColumn,
    col_vals: &KeyColumn,
) -> Result<ResultTable> {
    let (d1, d2) = (row_domain.len(), col_domain.len());
    // sorted join-key positions per group, for the zero-cell witness check
    let mut row_keysets: Vec<Vec<u32>> = vec![Vec::new(); d1];
    for i in 0..keys_l.len() {
        if let (Some(r), Some(v)) = (
            row_domain.position_of(row_vals, i)?,
            join_domain.position_of(keys_l, i)?,
        ) {
            row_keysets[r as usize].push(v);
        }
    }
    let mut col_keysets: Vec<Vec<u32>> = vec![Vec::new(); d2];
    for i in 0..keys_r.len() {
        if let (Some(c), Some(v)) = (
            col_domain.position_of(col_vals, i)?,
            join_domain.position_of(keys_r, i)?,
        ) {
            col_keysets[c as usize].push(v);
        }
    }
    for set in row_keysets.iter_mut().chain(col_keysets.iter_mut()) {
        set.sort_unstable();
        set.dedup();
    }
    let witness = |r: usize, c: usize| -> bool {
        let (a, b) = (&row_keysets[r], &col_keysets[c]);
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Equal => return true,
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
            }
        }
        false
    };

    let mut out = ResultTable::empty(result_schema(&ctx.ast.select_list));
    let mut emit = |r: usize, c: usize| -> Result<()> {
        let idx = r * d2 + c;
        let any_nonzero = cells.iter().any(|m| m[idx] != 0.0);
        if !any_nonzero && !witness(r, c) {
            return Ok(());
        }
        let row_value = row_domain.value(r);
        let col_value = col_domain.value(c);
        let per_node: Vec<f64> = cells.iter().map(|m| m[idx]).collect();
        let row = project_agg_items(ctx, &per_node, aggs, &|col: &ColumnRef| {
            if col.same_target(row_group) {
                Some(row_value.clone())
            } else if col.same_target(col_group) {
                Some(col_value.clone())
            } else {
                None
            }
        })?;
        out.rows.push(row);
        Ok(())
    };
    if outer_rows {
        for r in 0..d1 {
            for c in 0..d2 {
                emit(r, c)?;
            }
        }
    } else {
        for c in 0..d2 {
            for r in 0..d1 {
                emit(r, c)?;
            }
        }
    }
    Ok(out)
}

// ---- multi-way join chains ---------------------------------------------------

fn execute_multiway(
    ctx: &RunCtx<'_>,
    links: &[EquiJoin],
    chain_exception: bool,
    runner: &mut KernelRunner<'_>,
    stages: &mut StageTimings,
) -> Result<ResultTable> {
    if let Some(order) = &ctx.ast.order_by {
        if order.column.binding()?.table_idx != 0 {
            return Err(Error::Unsupported(
                "multi-way join orders only by a first-table column".into(),
            ));
        }
    }
    let n_tables = ctx.tables.len();
    let rows: Vec<Vec<usize>> = (0..n_tables)
        .map(|t| ctx.selected_rows(t, t == 0))
        .collect::<Result<_>>()?;

    if chain_exception {
        return execute_chain_exception(ctx, links, &rows, runner, stages);
    }

    // stage 0: plain two-way product, then re-encode per witness
    let keys0 = ctx.keys(&links[0].left, &rows[0])?;
    let keys1 = ctx.keys(&links[0].right, &rows[1])?;
    let (m0, m1t, _d0) = timed(&mut stages.fill_matrices, || {
        let d = build_join_domain(&keys0, &keys1, false)?;
        Ok((
            encode_indicator(&keys0, &d, runner.precision)?,
            encode_indicator(&keys1, &d, runner.precision)?.transposed(),
            d,
        ))
    })?;
    let c = runner.multiply(Operand::Dense(m0), Operand::Dense(m1t))?;
    let nz = timed(&mut stages.decode, || Ok(nonzero(&c)))?;

    // witness tuples over tables 0..=s
    let mut witnesses: Vec<Vec<usize>> = nz
        .pairs
        .iter()
        .map(|&(i, j)| vec![rows[0][i as usize], rows[1][j as usize]])
        .collect();

    for (s, link) in links.iter().enumerate().skip(1) {
        // middle keys are per current-witness, keyed by the witness's row in
        // table s
        let mid_binding = link.left.binding()?;
        let mid_rows: Vec<usize> = witnesses.iter().map(|w| w[s]).collect();
        let mid_keys = KeyColumn::from_column(
            &ctx.tables[mid_binding.table_idx].columns[mid_binding.column_idx],
            &mid_rows,
        );
        let next_keys = ctx.keys(&link.right, &rows[s + 1])?;
        let (mat_ab, mat_next_t) = timed(&mut stages.fill_matrices, || {
            let d = build_join_domain(&mid_keys, &next_keys, false)?;
            let nz_all = NonzeroList {
                pairs: (0..witnesses.len())
                    .map(|i| (i as u32, i as u32))
                    .collect(),
            };
            Ok((
                reencode_intermediate(&nz_all, &mid_keys, &d, runner.precision)?,
                encode_indicator(&next_keys, &d, runner.precision)?.transposed(),
            ))
        })?;
        let c = runner.multiply(Operand::Dense(mat_ab), Operand::Dense(mat_next_t))?;
        let stage_nz = timed(&mut stages.decode, || Ok(nonzero(&c)))?;
        witnesses = stage_nz
            .pairs
            .iter()
            .map(|&(w, j)| {
                let mut t = witnesses[w as usize].clone();
                t.push(rows[s + 1][j as usize]);
                t
            })
            .collect();
    }

    timed(&mut stages.decode, || {
        let mut out = ResultTable::empty(result_schema(&ctx.ast.select_list));
        for w in &witnesses {
            out.rows.push(ctx.project_row(w)?);
        }
        Ok(out)
    })
}

/// Middle tables projected out entirely: multiply the first indicator through
/// the middle adjacency matrices into the last indicator. Entry (i, j) counts
/// the middle-witness paths, so decode emits that many copies.
fn execute_chain_exception(
    ctx: &RunCtx<'_>,
    links: &[EquiJoin],
    rows: &[Vec<usize>],
    runner: &mut KernelRunner<'_>,
    stages: &mut StageTimings,
) -> Result<ResultTable> {
    let n_tables = ctx.tables.len();
    let keys_first = ctx.keys(&links[0].left, &rows[0])?;
    let keys_last = ctx.keys(&links[n_tables - 2].right, &rows[n_tables - 1])?;

    // domains per link
    let mut domains = Vec::with_capacity(links.len());
    for (s, link) in links.iter().enumerate() {
        let left_keys = ctx.keys(&link.left, &rows[s])?;
        let right_keys = ctx.keys(&link.right, &rows[s + 1])?;
        domains.push(timed(&mut stages.fill_matrices, || {
            build_join_domain(&left_keys, &right_keys, false)
        })?);
    }

    let first = timed(&mut stages.fill_matrices, || {
        encode_indicator(&keys_first, &domains[0], runner.precision)
    })?;
    let mut acc = first;
    for mid in 1..n_tables - 1 {
        // adjacency of middle table `mid` between link domains mid-1 and mid
        let in_keys = ctx.keys(&links[mid - 1].right, &rows[mid])?;
        let out_keys = ctx.keys(&links[mid].left, &rows[mid])?;
        let adj = timed(&mut stages.fill_matrices, || {
            encode_adjacency(
                &in_keys,
                &out_keys,
                &domains[mid - 1],
                &domains[mid],
                None,
                runner.precision,
            )
        })?;
        acc = runner.multiply(Operand::Dense(acc), Operand::Dense(adj))?;
    }
    let last_t = timed(&mut stages.fill_matrices, || {
        Ok(encode_indicator(&keys_last, &domains[n_tables - 2], runner.precision)?.transposed())
    })?;
    let c = runner.multiply(Operand::Dense(acc), Operand::Dense(last_t))?;

    timed(&mut stages.decode, || {
        let mut out = ResultTable::empty(result_schema(&ctx.ast.select_list));
        let mut tuple = vec![0usize; n_tables];
        for i in 0..c.rows {
            for j in 0..c.cols {
                let v = c.at(i, j);
                if v > 0.0 {
                    tuple[0] = rows[0][i];
                    tuple[n_tables - 1] = rows[n_tables - 1][j];
                    let row = ctx.project_row(&tuple)?;
                    for _ in 0..v.round() as usize {
                        out.rows.push(row.clone());
                    }
                }
            }
        }
        Ok(out)
    })
}

