//! Name resolution: binds every column reference to (table, column, type)
//! and type-checks predicates against the catalog.

use crate::catalog::{Catalog, LogicalType};
use crate::error::{Error, Result};
use crate::sql::ast::*;

pub fn resolve(mut ast: QueryAst, catalog: &Catalog) -> Result<QueryAst> {
    for table in &ast.from_tables {
        catalog.get(table)?;
    }
    {
        let from = ast.from_tables.clone();
        let bind = |c: &mut ColumnRef| bind_column(c, &from, catalog);

        for item in &mut ast.select_list {
            let mut err = Ok(());
            item.expr.for_each_column_mut(&mut |c| {
                if err.is_ok() {
                    err = bind(c);
                }
            });
            err?;
        }
        for pred in &mut ast.where_conjuncts {
            match pred {
                Predicate::ColCol { left, right, .. } => {
                    bind(left)?;
                    bind(right)?;
                }
                Predicate::ColConst { col, .. } => bind(col)?,
            }
        }
        for col in &mut ast.group_by {
            bind(col)?;
        }
        if let Some(order) = &mut ast.order_by {
            bind(&mut order.column)?;
        }
    }

    type_check_predicates(&ast)?;
    check_projection_shape(&ast)?;
    Ok(ast)
}

fn bind_column(c: &mut ColumnRef, from: &[String], catalog: &Catalog) -> Result<()> {
    match &c.table {
        Some(table) => {
            let table_idx = from
                .iter()
                .position(|t| t == table)
                .ok_or_else(|| Error::UnknownTable(table.clone()))?;
            let t = catalog.get(table)?;
            let column_idx = t.column_index(&c.column)?;
            c.binding = Some(Binding {
                table_idx,
                column_idx,
                ty: t.schema[column_idx].1,
            });
            Ok(())
        }
        None => {
            let mut found = None;
            for (table_idx, table) in from.iter().enumerate() {
                let t = catalog.get(table)?;
                if let Ok(column_idx) = t.column_index(&c.column) {
                    if found.is_some() {
                        return Err(Error::AmbiguousColumn(c.column.clone()));
                    }
                    found = Some(Binding {
                        table_idx,
                        column_idx,
                        ty: t.schema[column_idx].1,
                    });
                }
            }
            match found {
                Some(binding) => {
                    c.binding = Some(binding);
                    Ok(())
                }
                None => Err(Error::UnknownColumn(c.column.clone())),
            }
        }
    }
}

fn type_check_predicates(ast: &QueryAst) -> Result<()> {
    for pred in &ast.where_conjuncts {
        match pred {
            Predicate::ColCol { left, op, right } => {
                let lt = left.binding()?.ty;
                let rt = right.binding()?.ty;
                let comparable = (lt.is_numeric() && rt.is_numeric())
                    || (lt == LogicalType::Utf8 && rt == LogicalType::Utf8);
                if !comparable {
                    return Err(Error::TypeMismatch(format!(
                        "cannot compare {left} ({lt}) with {right} ({rt})"
                    )));
                }
                // Utf8 ordering under dictionary codes is not value ordering,
                // so only equality joins are defined for strings.
                if *op != CmpOp::Eq && lt == LogicalType::Utf8 {
                    return Err(Error::Unsupported(format!(
                        "non-equi comparison `{op}` on Utf8 columns ({left}, {right})"
                    )));
                }
            }
            Predicate::ColConst { col, op, value } => {
                let ct = col.binding()?.ty;
                match value {
                    Literal::Int(_) | Literal::Float(_) if ct.is_numeric() => {}
                    Literal::Str(_) if ct == LogicalType::Utf8 => {
                        if !matches!(op, CmpOp::Eq | CmpOp::Ne) {
                            return Err(Error::Unsupported(format!(
                                "ordered comparison `{op}` on Utf8 column {col}"
                            )));
                        }
                    }
                    _ => {
                        return Err(Error::TypeMismatch(format!(
                            "cannot compare {col} ({ct}) with literal {value}"
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}

// A projection item either aggregates (with no bare column refs around the
// aggregate) or is a plain column / constant expression; when grouping is
// present, bare columns must be group-by keys.
fn check_projection_shape(ast: &QueryAst) -> Result<()> {
    let grouped = !ast.group_by.is_empty();
    let any_agg = ast
        .select_list
        .iter()
        .any(|item| item.expr.contains_aggregate());
    for item in &ast.select_list {
        let mut bare = Vec::new();
        item.expr.bare_columns(&mut bare);
        if item.expr.contains_aggregate() && !bare.is_empty() {
            return Err(Error::Unsupported(
                "projection mixing aggregate and bare column references".into(),
            ));
        }
        if (grouped || any_agg) && !bare.is_empty() {
            for col in bare {
                if !ast.group_by.iter().any(|g| g.same_target(col)) {
                    return Err(Error::Unsupported(format!(
                        "non-aggregated column {col} must appear in GROUP BY"
                    )));
                }
            }
        }
    }
    for col in &ast.group_by {
        if !ast
            .select_list
            .iter()
            .any(|item| matches!(&item.expr, ScalarExpr::Column(c) if c.same_target(col)))
        {
            // Group keys may be omitted from the projection; nothing to check.
        }
    }
    Ok(())
}
