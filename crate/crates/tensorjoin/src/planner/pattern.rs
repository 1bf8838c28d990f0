//! Pattern matching: maps a resolved AST onto the accelerable query shapes.

use crate::sql::ast::*;

/// An equi-join link between a column of one table and a column of another.
#[derive(Debug, Clone, PartialEq)]
pub struct EquiJoin {
    pub left: ColumnRef,
    pub right: ColumnRef,
}

/// One aggregate node decomposed into per-side multiplicative factors:
/// `agg(const * f_left(left row) * f_right(right row))`. A missing factor
/// means an all-ones (indicator) side.
#[derive(Debug, Clone, PartialEq)]
pub struct AggShape {
    pub func: AggFunc,
    pub left_expr: Option<ScalarExpr>,
    pub right_expr: Option<ScalarExpr>,
    pub const_expr: Option<ScalarExpr>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QueryPattern {
    TwoWayJoin {
        join: EquiJoin,
    },
    MultiWayJoin {
        /// links[i] joins FROM table i to table i+1.
        links: Vec<EquiJoin>,
        /// No middle table appears in the projection: the chain collapses to
        /// one multiplication sequence without intermediate re-encoding.
        chain_exception: bool,
    },
    GroupByAggOverJoin {
        join: EquiJoin,
        group_col: ColumnRef,
        /// FROM index of the table owning the group column.
        group_side: usize,
        aggs: Vec<AggShape>,
    },
    AggOverJoinNoGroupBy {
        join: EquiJoin,
        aggs: Vec<AggShape>,
    },
    NonEquiJoin {
        left: ColumnRef,
        right: ColumnRef,
        cmp: CmpOp,
    },
    MatMulQuery {
        join: EquiJoin,
        /// Group column on the left table (output row axis).
        row_group: ColumnRef,
        /// Group column on the right table (output column axis).
        col_group: ColumnRef,
        aggs: Vec<AggShape>,
    },
    Unsupported {
        reason: String,
    },
}

impl QueryPattern {
    pub fn name(&self) -> &'static str {
        match self {
            QueryPattern::TwoWayJoin { .. } => "TwoWayJoin",
            QueryPattern::MultiWayJoin { .. } => "MultiWayJoin",
            QueryPattern::GroupByAggOverJoin { .. } => "GroupByAggOverJoin",
            QueryPattern::AggOverJoinNoGroupBy { .. } => "AggOverJoinNoGroupBy",
            QueryPattern::NonEquiJoin { .. } => "NonEquiJoin",
            QueryPattern::MatMulQuery { .. } => "MatMulQuery",
            QueryPattern::Unsupported { .. } => "Unsupported",
        }
    }

    pub fn is_unsupported(&self) -> bool {
        matches!(self, QueryPattern::Unsupported { .. })
    }
}

fn unsupported(reason: impl Into<String>) -> QueryPattern {
    QueryPattern::Unsupported {
        reason: reason.into(),
    }
}

/// Deterministic classification of a resolved AST. Shapes outside the
/// accelerable set return `Unsupported` with the reason; the fallback
/// executor still runs them.
pub fn classify(ast: &QueryAst) -> QueryPattern {
    let mut agg_nodes = Vec::new();
    for item in &ast.select_list {
        collect_agg_nodes(&item.expr, &mut agg_nodes);
    }
    for (func, _) in &agg_nodes {
        if matches!(func, AggFunc::Min | AggFunc::Max) {
            return unsupported("MIN/MAX aggregation is beyond matrix multiply-accumulate");
        }
    }

    match ast.from_tables.len() {
        0 | 1 => unsupported("single-table query has no join to accelerate"),
        2 => classify_two_table(ast, &agg_nodes),
        _ => classify_chain(ast, &agg_nodes),
    }
}

fn classify_two_table(ast: &QueryAst, agg_nodes: &[(AggFunc, Option<&ScalarExpr>)]) -> QueryPattern {
    // Exactly one cross-table conjunct; column-constant conjuncts are
    // pre-encoding filters and stay out of the pattern.
    let mut cross = Vec::new();
    for pred in &ast.where_conjuncts {
        if let Predicate::ColCol { left, op, right } = pred {
            let (Some(lb), Some(rb)) = (left.binding, right.binding) else {
                return unsupported("unresolved predicate");
            };
            if lb.table_idx == rb.table_idx {
                return unsupported("column-to-column predicate within a single table");
            }
            // normalize left to table 0
            if lb.table_idx == 0 {
                cross.push((left.clone(), *op, right.clone()));
            } else {
                cross.push((right.clone(), op.flip(), left.clone()));
            }
        }
    }
    let (left, op, right) = match cross.len() {
        0 => return unsupported("no join predicate between the two tables"),
        1 => cross.into_iter().next().unwrap(),
        _ => return unsupported("composite (multi-column) join keys"),
    };

    let has_agg = !agg_nodes.is_empty();
    if !has_agg && ast.group_by.is_empty() {
        return if op == CmpOp::Eq {
            QueryPattern::TwoWayJoin {
                join: EquiJoin { left, right },
            }
        } else {
            QueryPattern::NonEquiJoin {
                left,
                right,
                cmp: op,
            }
        };
    }

    if op != CmpOp::Eq {
        return unsupported("aggregates over a non-equi join");
    }
    let join = EquiJoin { left, right };

    let mut aggs = Vec::with_capacity(agg_nodes.len());
    for (func, arg) in agg_nodes {
        match factor_aggregate(*func, *arg) {
            Ok(shape) => aggs.push(shape),
            Err(reason) => return unsupported(reason),
        }
    }

    if ast.group_by.is_empty() {
        return QueryPattern::AggOverJoinNoGroupBy { join, aggs };
    }

    let group_tables: Vec<usize> = ast
        .group_by
        .iter()
        .filter_map(|g| g.binding.map(|b| b.table_idx))
        .collect();
    match ast.group_by.len() {
        1 => QueryPattern::GroupByAggOverJoin {
            join,
            group_col: ast.group_by[0].clone(),
            group_side: group_tables[0],
            aggs,
        },
        2 if group_tables[0] != group_tables[1] => {
            let (row_group, col_group) = if group_tables[0] == 0 {
                (ast.group_by[0].clone(), ast.group_by[1].clone())
            } else {
                (ast.group_by[1].clone(), ast.group_by[0].clone())
            };
            QueryPattern::MatMulQuery {
                join,
                row_group,
                col_group,
                aggs,
            }
        }
        _ => unsupported("grouping by more than one column per table"),
    }
}

fn classify_chain(ast: &QueryAst, agg_nodes: &[(AggFunc, Option<&ScalarExpr>)]) -> QueryPattern {
    if !agg_nodes.is_empty() || !ast.group_by.is_empty() {
        return unsupported("aggregates over a multi-way join");
    }
    let n = ast.from_tables.len();
    // Each consecutive table pair must be linked by exactly one equi conjunct.
    let mut links: Vec<Option<EquiJoin>> = vec![None; n - 1];
    for pred in &ast.where_conjuncts {
        if let Predicate::ColCol { left, op, right } = pred {
            let (Some(lb), Some(rb)) = (left.binding, right.binding) else {
                return unsupported("unresolved predicate");
            };
            if lb.table_idx == rb.table_idx {
                return unsupported("column-to-column predicate within a single table");
            }
            if *op != CmpOp::Eq {
                return unsupported("non-equi predicate in a multi-way join");
            }
            let (lo, hi) = if lb.table_idx < rb.table_idx {
                (lb.table_idx, rb.table_idx)
            } else {
                (rb.table_idx, lb.table_idx)
            };
            if hi != lo + 1 {
                return unsupported("join predicates must chain consecutive FROM tables");
            }
            if links[lo].is_some() {
                return unsupported("composite (multi-column) join keys");
            }
            let (l, r) = if lb.table_idx == lo {
                (left.clone(), right.clone())
            } else {
                (right.clone(), left.clone())
            };
            links[lo] = Some(EquiJoin { left: l, right: r });
        }
    }
    let links: Vec<EquiJoin> = match links.into_iter().collect::<Option<Vec<_>>>() {
        Some(l) => l,
        None => return unsupported("multi-way join does not chain every FROM table"),
    };

    // Tables referenced anywhere in the projection or order-by.
    let mut referenced = vec![false; n];
    for item in &ast.select_list {
        let mut cols = Vec::new();
        item.expr.all_columns(&mut cols);
        for c in cols {
            if let Some(b) = c.binding {
                referenced[b.table_idx] = true;
            }
        }
    }
    if let Some(order) = &ast.order_by {
        if let Some(b) = order.column.binding {
            referenced[b.table_idx] = true;
        }
    }
    let chain_exception = !referenced[1..n - 1].iter().any(|r| *r);
    QueryPattern::MultiWayJoin {
        links,
        chain_exception,
    }
}

fn collect_agg_nodes<'a>(
    expr: &'a ScalarExpr,
    out: &mut Vec<(AggFunc, Option<&'a ScalarExpr>)>,
) {
    match expr {
        ScalarExpr::Aggregate { func, arg } => {
            let inner = match arg {
                AggArg::Star => None,
                AggArg::Expr(e) => Some(&**e),
            };
            out.push((*func, inner));
        }
        ScalarExpr::Neg(e) => collect_agg_nodes(e, out),
        ScalarExpr::Binary { lhs, rhs, .. } => {
            collect_agg_nodes(lhs, out);
            collect_agg_nodes(rhs, out);
        }
        _ => {}
    }
}

/// Splits an aggregate argument into per-side multiplicative factors. The
/// expression must decompose as a product/quotient of single-table
/// subexpressions and constants; additive mixes across tables cannot be
/// encoded as one matrix product.
fn factor_aggregate(
    func: AggFunc,
    arg: Option<&ScalarExpr>,
) -> std::result::Result<AggShape, String> {
    let arg = match arg {
        None => {
            // COUNT(*): indicator on both sides
            return Ok(AggShape {
                func,
                left_expr: None,
                right_expr: None,
                const_expr: None,
            });
        }
        Some(e) => e,
    };
    let mut factors = Vec::new();
    flatten_product(arg, false, &mut factors);

    let mut left: Option<ScalarExpr> = None;
    let mut right: Option<ScalarExpr> = None;
    let mut consts: Option<ScalarExpr> = None;
    for (expr, inverted) in factors {
        let mut cols = Vec::new();
        expr.all_columns(&mut cols);
        let mut tables: Vec<usize> = cols.iter().filter_map(|c| c.binding.map(|b| b.table_idx)).collect();
        tables.dedup();
        let factor = if inverted {
            ScalarExpr::Binary {
                op: BinaryOp::Div,
                lhs: Box::new(ScalarExpr::IntLiteral(1)),
                rhs: Box::new(expr.clone()),
            }
        } else {
            expr.clone()
        };
        let slot = match tables.as_slice() {
            [] => &mut consts,
            [0] => &mut left,
            [1] => &mut right,
            [_] => return Err("aggregate factor references a table outside the join".into()),
            _ => {
                return Err(
                    "aggregate argument mixes tables other than as a product of per-table factors"
                        .into(),
                )
            }
        };
        *slot = Some(match slot.take() {
            None => factor,
            Some(existing) => ScalarExpr::Binary {
                op: BinaryOp::Mul,
                lhs: Box::new(existing),
                rhs: Box::new(factor),
            },
        });
    }
    Ok(AggShape {
        func,
        left_expr: left,
        right_expr: right,
        const_expr: consts,
    })
}

// Flattens nested Mul/Div into (factor, inverted) pairs. A subtree that is
// not a Mul/Div node stays one factor; single-table additive arithmetic is
// fine inside a factor.
fn flatten_product<'a>(expr: &'a ScalarExpr, inverted: bool, out: &mut Vec<(&'a ScalarExpr, bool)>) {
    match expr {
        ScalarExpr::Binary {
            op: BinaryOp::Mul,
            lhs,
            rhs,
        } => {
            flatten_product(lhs, inverted, out);
            flatten_product(rhs, inverted, out);
        }
        ScalarExpr::Binary {
            op: BinaryOp::Div,
            lhs,
            rhs,
        } => {
            flatten_product(lhs, inverted, out);
            flatten_product(rhs, !inverted, out);
        }
        other => out.push((other, inverted)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Catalog, ColumnData, ColumnTable, LogicalType};
    use crate::sql::{parse, resolve};

    fn catalog() -> Catalog {
        let mut c = Catalog::new();
        let table = |name: &str, cols: &[&str]| {
            ColumnTable::new(
                name,
                cols.iter()
                    .map(|n| (n.to_string(), LogicalType::Int64))
                    .collect(),
                cols.iter().map(|_| ColumnData::Int64(vec![1, 2])).collect(),
            )
            .unwrap()
        };
        c.register(table("A", &["ID", "Val", "ID_1", "row_num", "col_num", "val"]));
        c.register(table("B", &["ID", "Val", "ID_1", "ID_2", "row_num", "col_num", "val"]));
        c.register(table("C", &["ID", "Val", "ID_2"]));
        c.register(table("PAGERANK", &["ID", "rank"]));
        c.register(table("OUTDEGREE", &["ID", "DEGREE"]));
        c
    }

    fn classify_sql(sql: &str) -> QueryPattern {
        classify(&resolve(parse(sql).unwrap(), &catalog()).unwrap())
    }

    #[test]
    fn q1_is_two_way_join() {
        let p = classify_sql("SELECT A.Val, B.Val FROM A, B WHERE A.ID = B.ID");
        assert!(matches!(p, QueryPattern::TwoWayJoin { .. }), "{p:?}");
    }

    #[test]
    fn q2_is_multiway_with_reencoding() {
        let p = classify_sql(
            "SELECT A.Val, B.Val, C.Val FROM A, B, C WHERE A.ID_1 = B.ID_1 AND B.ID_2 = C.ID_2",
        );
        match p {
            QueryPattern::MultiWayJoin {
                links,
                chain_exception,
            } => {
                assert_eq!(links.len(), 2);
                assert!(!chain_exception);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn q2_without_middle_projection_is_chain_exception() {
        let p = classify_sql(
            "SELECT A.Val, C.Val FROM A, B, C WHERE A.ID_1 = B.ID_1 AND B.ID_2 = C.ID_2",
        );
        assert!(matches!(
            p,
            QueryPattern::MultiWayJoin {
                chain_exception: true,
                ..
            }
        ));
    }

    #[test]
    fn q3_is_group_by_agg_with_sum() {
        let p = classify_sql("SELECT SUM(A.Val), B.Val FROM A, B WHERE A.ID = B.ID GROUP BY B.Val");
        match p {
            QueryPattern::GroupByAggOverJoin {
                group_side, aggs, ..
            } => {
                assert_eq!(group_side, 1);
                assert_eq!(aggs.len(), 1);
                assert_eq!(aggs[0].func, AggFunc::Sum);
                assert!(aggs[0].left_expr.is_some());
                assert!(aggs[0].right_expr.is_none());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn q4_is_agg_without_group_by() {
        let p = classify_sql("SELECT SUM(A.Val * B.Val) FROM A, B WHERE A.ID = B.ID");
        match p {
            QueryPattern::AggOverJoinNoGroupBy { aggs, .. } => {
                assert!(aggs[0].left_expr.is_some());
                assert!(aggs[0].right_expr.is_some());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn q5_is_non_equi() {
        let p = classify_sql("SELECT A.Val, B.Val FROM A, B WHERE A.ID < B.ID");
        assert!(matches!(
            p,
            QueryPattern::NonEquiJoin { cmp: CmpOp::Lt, .. }
        ));
    }

    #[test]
    fn fig4_is_matmul_query() {
        let p = classify_sql(
            "SELECT A.col_num, B.row_num, SUM(A.val * B.val) as res FROM A, B \
             WHERE A.row_num = B.col_num GROUP BY A.col_num, B.row_num",
        );
        match p {
            QueryPattern::MatMulQuery {
                row_group,
                col_group,
                ..
            } => {
                assert_eq!(row_group.column, "col_num");
                assert_eq!(col_group.column, "row_num");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn max_aggregate_is_unsupported() {
        let p = classify_sql("SELECT MAX(A.Val) FROM A, B WHERE A.ID = B.ID");
        match p {
            QueryPattern::Unsupported { reason } => {
                assert!(reason.contains("MIN/MAX"), "{reason}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pr_q3_factors_across_tables() {
        let p = classify_sql(
            "SELECT SUM(@alpha * PAGERANK.rank / OUTDEGREE.DEGREE) + (1-@alpha)/@num_node \
             FROM PAGERANK, OUTDEGREE WHERE PAGERANK.ID = OUTDEGREE.ID",
        );
        match p {
            QueryPattern::AggOverJoinNoGroupBy { aggs, .. } => {
                let shape = &aggs[0];
                assert!(shape.const_expr.is_some());
                assert!(shape.left_expr.is_some(), "rank factor on the left table");
                assert!(shape.right_expr.is_some(), "1/degree factor on the right");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn additive_cross_table_aggregate_is_unsupported() {
        let p = classify_sql("SELECT SUM(A.Val + B.Val) FROM A, B WHERE A.ID = B.ID");
        assert!(p.is_unsupported(), "{p:?}");
    }

    #[test]
    fn count_star_has_indicator_factors() {
        let p = classify_sql(
            "SELECT B.Val, COUNT(*) FROM A, B WHERE A.ID = B.ID GROUP BY B.Val",
        );
        match p {
            QueryPattern::GroupByAggOverJoin { aggs, .. } => {
                assert!(aggs[0].left_expr.is_none());
                assert!(aggs[0].right_expr.is_none());
            }
            other => panic!("{other:?}"),
        }
    }
}
