//! Cost-based planning: classify the query shape, test precision
//! feasibility, enumerate (site, kernel, precision) candidates against the
//! calibrated cost model, and pick the cheapest plan with the classical
//! hash join always available as the fallback.

mod calibrate;
mod cost;
mod feasibility;
mod pattern;

pub use calibrate::{
    calibrate, EngineConfig, DEFAULT_DENSITY_THRESHOLD, DEFAULT_DEVICE_BUDGET,
};
pub use cost::{
    estimate_cost, estimate_fallback_cost, CalibrationProfile, CostEstimate, CostQuery,
    KernelKind, TransformSite,
};
pub use feasibility::{feasibility_test, FeasibilityReport, OperandProfile};
pub use pattern::{classify, AggShape, EquiJoin, QueryPattern};

use std::collections::HashMap;

use crate::catalog::{Catalog, ColumnStats, ColumnTable, LogicalType, Value};
use crate::error::{Error, Result};
use crate::kernels::{pick_block_size, Precision};
use crate::relational::{eval_scalar, TupleContext};
use crate::sql::ast::{ColumnRef, QueryAst, ScalarExpr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum PlanMode {
    Auto,
    ForceMatmul,
    ForceFallback,
    ForceSparse,
    ForceBlocked,
}

#[derive(Debug, Clone)]
pub struct PlanOptions {
    pub mode: PlanMode,
    pub precision_override: Option<Precision>,
    pub params: HashMap<String, f64>,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            mode: PlanMode::Auto,
            precision_override: None,
            params: HashMap::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PhysicalPlan {
    pub pattern: QueryPattern,
    pub ast: QueryAst,
    pub kernel: KernelKind,
    pub precision: Precision,
    pub transform_site: TransformSite,
    /// (M, K, N) of the main product; None for the fallback plan.
    pub dims: Option<(usize, usize, usize)>,
    pub block_size: Option<usize>,
    pub estimated_cost: CostEstimate,
    pub feasibility: Option<FeasibilityReport>,
}

impl PhysicalPlan {
    fn fallback(
        pattern: QueryPattern,
        ast: QueryAst,
        cost: CostEstimate,
        feasibility: Option<FeasibilityReport>,
    ) -> Self {
        Self {
            pattern,
            ast,
            kernel: KernelKind::HashJoinFallback,
            precision: Precision::F32,
            transform_site: TransformSite::Host,
            dims: None,
            block_size: None,
            estimated_cost: cost,
            feasibility,
        }
    }
}

/// Statically derived shape of the matrix work a pattern performs.
#[derive(Debug, Clone)]
pub struct PlanShape {
    pub dims: (usize, usize, usize),
    /// Dense-equivalent flops of reduction / later-stage products.
    pub extra_flops: f64,
    pub left_records: usize,
    pub right_records: usize,
    pub left_profile: OperandProfile,
    pub right_profile: OperandProfile,
    /// Longest contraction in the chain (feasibility bound length).
    pub shared_len: usize,
    pub densities: (f64, f64),
    pub raw_bytes_per_record: (f64, f64),
}

/// Distinct-count estimate for the union domain of two key columns: capped
/// by the integer span when both sides are integers.
fn estimate_union_distinct(a: &ColumnStats, b: &ColumnStats) -> usize {
    let sum = a.distinct_count + b.distinct_count;
    if let (Value::Int(min_a), Value::Int(max_a), Value::Int(min_b), Value::Int(max_b)) =
        (&a.min_value, &a.max_value, &b.min_value, &b.max_value)
    {
        let span = (*max_a.max(max_b) as i128 - *min_a.min(min_b) as i128 + 1).max(1);
        return sum.min(span.min(usize::MAX as i128) as usize).max(1);
    }
    sum.max(1)
}

fn stats_for(ast: &QueryAst, catalog: &Catalog, col: &ColumnRef) -> Result<ColumnStats> {
    let b = col.binding()?;
    let table = catalog.get(&ast.from_tables[b.table_idx])?;
    table.compute_stats(&table.schema[b.column_idx].0)
}

/// Magnitude/integrality of a per-row factor expression over one table.
/// Bare columns read the cached stats; derived expressions are evaluated
/// exactly over the table (desk scale keeps this cheap).
fn factor_profile(
    expr: Option<&ScalarExpr>,
    const_magnitude: f64,
    const_integral: bool,
    ast: &QueryAst,
    catalog: &Catalog,
    params: &HashMap<String, f64>,
) -> Result<OperandProfile> {
    let Some(expr) = expr else {
        return Ok(OperandProfile {
            magnitude: const_magnitude,
            integral: const_integral,
        });
    };
    if let ScalarExpr::Column(c) = expr {
        let stats = stats_for(ast, catalog, c)?;
        let magnitude = stats.magnitude().ok_or_else(|| {
            Error::TypeMismatch(format!("aggregate over non-numeric column {c}"))
        })?;
        return Ok(OperandProfile {
            magnitude: magnitude * const_magnitude,
            integral: c.binding()?.ty == LogicalType::Int64 && const_integral,
        });
    }
    // derived expression: scan for the exact magnitude
    let mut cols = Vec::new();
    expr.all_columns(&mut cols);
    let table_idx = cols
        .first()
        .and_then(|c| c.binding.map(|b| b.table_idx))
        .ok_or_else(|| Error::Internal("factor expression without columns".into()))?;
    let tables: Vec<std::sync::Arc<ColumnTable>> = ast
        .from_tables
        .iter()
        .map(|t| catalog.get(t).cloned())
        .collect::<Result<_>>()?;
    let mut magnitude: f64 = 0.0;
    let mut integral = true;
    let rows = tables[table_idx].row_count;
    let mut tuple = vec![0usize; tables.len()];
    for r in 0..rows {
        tuple[table_idx] = r;
        let ctx = TupleContext {
            tables: &tables,
            rows: &tuple,
        };
        let v = eval_scalar(expr, &ctx, params)?;
        magnitude = magnitude.max(v.abs());
        integral &= v.fract() == 0.0;
    }
    Ok(OperandProfile {
        magnitude: magnitude * const_magnitude,
        integral: integral && const_integral,
    })
}

fn const_profile(
    exprs: &[&AggShape],
    params: &HashMap<String, f64>,
) -> Result<(f64, bool)> {
    let mut magnitude: f64 = 1.0;
    let mut integral = true;
    for shape in exprs {
        if let Some(c) = &shape.const_expr {
            let tables: Vec<std::sync::Arc<ColumnTable>> = Vec::new();
            let ctx = TupleContext {
                tables: &tables,
                rows: &[],
            };
            let v = eval_scalar(c, &ctx, params)?;
            magnitude = magnitude.max(v.abs());
            integral &= v.fract() == 0.0;
        }
    }
    Ok((magnitude, integral))
}

/// Derives the matrix shape, operand profiles, and densities a pattern
/// implies, from exact per-column stats.
pub fn analyze_shape(
    pattern: &QueryPattern,
    ast: &QueryAst,
    catalog: &Catalog,
    params: &HashMap<String, f64>,
) -> Result<Option<PlanShape>> {
    let table_rows = |idx: usize| -> Result<usize> {
        Ok(catalog.get(&ast.from_tables[idx])?.row_count)
    };
    let referenced_bytes = |idx: usize| -> f64 {
        // raw movement counts every referenced column of the side at 8 bytes
        let mut cols = Vec::new();
        for item in &ast.select_list {
            item.expr.all_columns(&mut cols);
        }
        let mut count = 0usize;
        let mut seen = std::collections::HashSet::new();
        for c in cols {
            if let Some(b) = c.binding {
                if b.table_idx == idx && seen.insert(b.column_idx) {
                    count += 1;
                }
            }
        }
        ((count + 1) * 8) as f64 // +1 for the join key column
    };

    let shape = match pattern {
        QueryPattern::TwoWayJoin { join } => {
            let (m, n) = (table_rows(0)?, table_rows(1)?);
            let k = estimate_union_distinct(
                &stats_for(ast, catalog, &join.left)?,
                &stats_for(ast, catalog, &join.right)?,
            );
            Some(PlanShape {
                dims: (m, k, n),
                extra_flops: 0.0,
                left_records: m,
                right_records: n,
                left_profile: OperandProfile::INDICATOR,
                right_profile: OperandProfile::INDICATOR,
                shared_len: k,
                densities: (1.0 / k as f64, 1.0 / k as f64),
                raw_bytes_per_record: (referenced_bytes(0), referenced_bytes(1)),
            })
        }
        QueryPattern::NonEquiJoin { left, right, .. } => {
            let (m, n) = (table_rows(0)?, table_rows(1)?);
            let k = estimate_union_distinct(
                &stats_for(ast, catalog, left)?,
                &stats_for(ast, catalog, right)?,
            );
            Some(PlanShape {
                dims: (m, k, n),
                extra_flops: 0.0,
                left_records: m,
                right_records: n,
                left_profile: OperandProfile::INDICATOR,
                right_profile: OperandProfile::INDICATOR,
                shared_len: k,
                // comparison encodings average half-full rows
                densities: (0.5, 1.0 / k as f64),
                raw_bytes_per_record: (referenced_bytes(0), referenced_bytes(1)),
            })
        }
        QueryPattern::GroupByAggOverJoin {
            join,
            group_col,
            group_side,
            aggs,
        } => {
            let (rows0, rows1) = (table_rows(0)?, table_rows(1)?);
            let k = estimate_union_distinct(
                &stats_for(ast, catalog, &join.left)?,
                &stats_for(ast, catalog, &join.right)?,
            );
            let groups = stats_for(ast, catalog, group_col)?.distinct_count.max(1);
            let valued_rows = if *group_side == 0 { rows1 } else { rows0 };
            let group_rows = if *group_side == 0 { rows0 } else { rows1 };
            let shapes: Vec<&AggShape> = aggs.iter().collect();
            let (cmag, cint) = const_profile(&shapes, params)?;
            let mut valued = OperandProfile::INDICATOR;
            let mut grouped = OperandProfile::INDICATOR;
            for shape in &shapes {
                let (v_expr, g_expr) = if *group_side == 0 {
                    (shape.right_expr.as_ref(), shape.left_expr.as_ref())
                } else {
                    (shape.left_expr.as_ref(), shape.right_expr.as_ref())
                };
                let vp = factor_profile(v_expr, cmag, cint, ast, catalog, params)?;
                let gp = factor_profile(g_expr, 1.0, true, ast, catalog, params)?;
                valued.magnitude = valued.magnitude.max(vp.magnitude);
                valued.integral &= vp.integral;
                grouped.magnitude = grouped.magnitude.max(gp.magnitude);
                grouped.integral &= gp.integral;
            }
            Some(PlanShape {
                dims: (valued_rows, k, groups),
                extra_flops: 2.0 * valued_rows as f64 * groups as f64,
                left_records: rows0,
                right_records: rows1,
                left_profile: valued,
                right_profile: grouped,
                shared_len: k.max(valued_rows),
                densities: (
                    1.0 / k as f64,
                    group_rows as f64 / (groups as f64 * k as f64).max(1.0),
                ),
                raw_bytes_per_record: (referenced_bytes(0), referenced_bytes(1)),
            })
        }
        QueryPattern::AggOverJoinNoGroupBy { join, aggs } => {
            let (m, n) = (table_rows(0)?, table_rows(1)?);
            let k = estimate_union_distinct(
                &stats_for(ast, catalog, &join.left)?,
                &stats_for(ast, catalog, &join.right)?,
            );
            let shapes: Vec<&AggShape> = aggs.iter().collect();
            let (cmag, cint) = const_profile(&shapes, params)?;
            let mut left = OperandProfile::INDICATOR;
            let mut right = OperandProfile::INDICATOR;
            for shape in &shapes {
                let lp = factor_profile(shape.left_expr.as_ref(), cmag, cint, ast, catalog, params)?;
                let rp = factor_profile(shape.right_expr.as_ref(), 1.0, true, ast, catalog, params)?;
                left.magnitude = left.magnitude.max(lp.magnitude);
                left.integral &= lp.integral;
                right.magnitude = right.magnitude.max(rp.magnitude);
                right.integral &= rp.integral;
            }
            Some(PlanShape {
                dims: (m, k, n),
                extra_flops: 2.0 * m as f64 * n as f64 + 2.0 * m as f64,
                left_records: m,
                right_records: n,
                left_profile: left,
                right_profile: right,
                shared_len: k.max(m).max(n),
                densities: (1.0 / k as f64, 1.0 / k as f64),
                raw_bytes_per_record: (referenced_bytes(0), referenced_bytes(1)),
            })
        }
        QueryPattern::MatMulQuery {
            join,
            row_group,
            col_group,
            aggs,
        } => {
            let (rows0, rows1) = (table_rows(0)?, table_rows(1)?);
            let k = estimate_union_distinct(
                &stats_for(ast, catalog, &join.left)?,
                &stats_for(ast, catalog, &join.right)?,
            );
            let d1 = stats_for(ast, catalog, row_group)?.distinct_count.max(1);
            let d2 = stats_for(ast, catalog, col_group)?.distinct_count.max(1);
            let shapes: Vec<&AggShape> = aggs.iter().collect();
            let (cmag, cint) = const_profile(&shapes, params)?;
            let mut left = OperandProfile::INDICATOR;
            let mut right = OperandProfile::INDICATOR;
            for shape in &shapes {
                let lp = factor_profile(shape.left_expr.as_ref(), cmag, cint, ast, catalog, params)?;
                let rp = factor_profile(shape.right_expr.as_ref(), 1.0, true, ast, catalog, params)?;
                left.magnitude = left.magnitude.max(lp.magnitude);
                left.integral &= lp.integral;
                right.magnitude = right.magnitude.max(rp.magnitude);
                right.integral &= rp.integral;
            }
            Some(PlanShape {
                dims: (d1, k, d2),
                extra_flops: 0.0,
                left_records: rows0,
                right_records: rows1,
                left_profile: left,
                right_profile: right,
                shared_len: k,
                densities: (
                    rows0 as f64 / (d1 as f64 * k as f64).max(1.0),
                    rows1 as f64 / (d2 as f64 * k as f64).max(1.0),
                ),
                raw_bytes_per_record: (referenced_bytes(0), referenced_bytes(1)),
            })
        }
        QueryPattern::MultiWayJoin { links, .. } => {
            let n_tables = ast.from_tables.len();
            let rows: Vec<usize> = (0..n_tables)
                .map(table_rows)
                .collect::<Result<_>>()?;
            let k1 = estimate_union_distinct(
                &stats_for(ast, catalog, &links[0].left)?,
                &stats_for(ast, catalog, &links[0].right)?,
            );
            // Later stages shrink with join selectivity; cost the first
            // product plus uniform-selectivity estimates of the rest.
            let mut extra = 0.0;
            let mut inter = (rows[0] as f64 * rows[1] as f64 / k1 as f64).max(1.0);
            let mut max_k = k1;
            for (i, link) in links.iter().enumerate().skip(1) {
                let k = estimate_union_distinct(
                    &stats_for(ast, catalog, &link.left)?,
                    &stats_for(ast, catalog, &link.right)?,
                );
                max_k = max_k.max(k);
                extra += 2.0 * inter * k as f64 * rows[i + 1] as f64;
                inter = (inter * rows[i + 1] as f64 / k as f64).max(1.0);
            }
            let records: usize = rows.iter().sum();
            Some(PlanShape {
                dims: (rows[0], k1, rows[1]),
                extra_flops: extra,
                left_records: rows[0],
                right_records: records - rows[0],
                left_profile: OperandProfile::INDICATOR,
                right_profile: OperandProfile::INDICATOR,
                shared_len: max_k,
                densities: (1.0 / k1 as f64, 1.0 / k1 as f64),
                raw_bytes_per_record: (referenced_bytes(0), 16.0),
            })
        }
        QueryPattern::Unsupported { .. } => None,
    };
    Ok(shape)
}

fn fallback_cost_for(
    shape: Option<&PlanShape>,
    ast: &QueryAst,
    catalog: &Catalog,
    calib: &CalibrationProfile,
) -> CostEstimate {
    match shape {
        Some(s) => estimate_fallback_cost(s.left_records, s.right_records, s.dims.1, calib),
        None => {
            let records: usize = ast
                .from_tables
                .iter()
                .filter_map(|t| catalog.get(t).ok().map(|t| t.row_count))
                .sum();
            estimate_fallback_cost(records, 0, 1, calib)
        }
    }
}

/// Enumerates candidate plans and returns the cheapest; never fails for a
/// resolved query (the fallback plan is always available).
pub fn choose_plan(
    ast: &QueryAst,
    catalog: &Catalog,
    config: &EngineConfig,
    options: &PlanOptions,
) -> Result<PhysicalPlan> {
    let calib = &config.profile;
    let pattern = classify(ast);

    let shape = match &pattern {
        QueryPattern::Unsupported { .. } => None,
        p => analyze_shape(p, ast, catalog, &options.params)?,
    };
    let fallback_cost = fallback_cost_for(shape.as_ref(), ast, catalog, calib);

    let force_matmul = matches!(
        options.mode,
        PlanMode::ForceMatmul | PlanMode::ForceSparse | PlanMode::ForceBlocked
    );
    if options.mode == PlanMode::ForceFallback {
        return Ok(PhysicalPlan::fallback(pattern, ast.clone(), fallback_cost, None));
    }
    let Some(shape) = shape else {
        if force_matmul {
            let QueryPattern::Unsupported { reason } = &pattern else {
                unreachable!()
            };
            return Err(Error::Unsupported(format!(
                "cannot force a matmul plan: {reason}"
            )));
        }
        return Ok(PhysicalPlan::fallback(pattern, ast.clone(), fallback_cost, None));
    };

    let feasibility = feasibility_test(shape.left_profile, shape.right_profile, shape.shared_len)?;
    let precisions: Vec<Precision> = match options.precision_override {
        Some(p) => vec![p],
        None if feasibility.feasible => feasibility.candidate_types(),
        None if force_matmul => vec![Precision::Half], // fills will reject out-of-range values
        None => {
            return Ok(PhysicalPlan::fallback(
                pattern,
                ast.clone(),
                fallback_cost,
                Some(feasibility),
            ));
        }
    };

    let (m, k, n) = shape.dims;
    let density = (shape.densities.0 * shape.densities.1).clamp(0.0, 1.0);
    let budget = config.device_budget_bytes as f64;
    let mut candidates: Vec<(CostEstimate, KernelKind, TransformSite, Precision, Option<usize>)> =
        Vec::new();

    for &precision in &precisions {
        let elem = precision.element_bytes();
        let working_set = ((m * k) + (k * n) + (m * n)) as f64 * elem;
        let kernels: Vec<KernelKind> = match options.mode {
            PlanMode::ForceSparse => vec![KernelKind::SparseTiledSpmm],
            PlanMode::ForceBlocked => vec![KernelKind::BlockedGemm],
            // decision chain: over-budget working sets go blocked, sparse
            // inputs go tiled, everything else dense
            _ => {
                if working_set > budget {
                    vec![KernelKind::BlockedGemm]
                } else if shape.densities.0.min(shape.densities.1) < config.density_threshold {
                    vec![KernelKind::SparseTiledSpmm]
                } else {
                    vec![KernelKind::DenseGemm]
                }
            }
        };
        let raw_total = shape.left_records as f64 * shape.raw_bytes_per_record.0
            + shape.right_records as f64 * shape.raw_bytes_per_record.1;
        let mut sites = vec![TransformSite::Host];
        if raw_total + working_set <= budget {
            sites.push(TransformSite::Device);
        }
        for kernel in kernels {
            let block_size = if kernel == KernelKind::BlockedGemm {
                match pick_block_size(config.device_budget_bytes, shape.dims, precision) {
                    Ok(bs) => Some(bs),
                    Err(_) => continue,
                }
            } else {
                None
            };
            for &site in &sites {
                let q = CostQuery {
                    left_records: shape.left_records,
                    right_records: shape.right_records,
                    dims: shape.dims,
                    precision,
                    raw_bytes_per_record: shape.raw_bytes_per_record,
                    site,
                    kernel,
                    density,
                };
                let mut cost = estimate_cost(&q, calib);
                if shape.extra_flops > 0.0 {
                    cost = CostEstimate::new(
                        cost.dt,
                        cost.dm,
                        cost.ct + shape.extra_flops / calib.kernel_peak(kernel),
                    );
                }
                candidates.push((cost, kernel, site, precision, block_size));
            }
        }
    }

    if !force_matmul {
        candidates.push((
            fallback_cost,
            KernelKind::HashJoinFallback,
            TransformSite::Host,
            Precision::F32,
            None,
        ));
    }

    let best = candidates
        .into_iter()
        .min_by(|a, b| {
            a.0.total
                .total_cmp(&b.0.total)
                .then(a.1.rank().cmp(&b.1.rank()))
                .then(
                    a.3.element_bytes()
                        .total_cmp(&b.3.element_bytes()),
                )
                .then((a.2 == TransformSite::Device).cmp(&(b.2 == TransformSite::Device)))
        })
        .expect("candidate list is never empty");

    let (cost, kernel, site, precision, block_size) = best;
    if kernel == KernelKind::HashJoinFallback {
        return Ok(PhysicalPlan::fallback(
            pattern,
            ast.clone(),
            cost,
            Some(feasibility),
        ));
    }
    Ok(PhysicalPlan {
        pattern,
        ast: ast.clone(),
        kernel,
        precision,
        transform_site: site,
        dims: Some(shape.dims),
        block_size,
        estimated_cost: cost,
        feasibility: Some(feasibility),
    })
}
