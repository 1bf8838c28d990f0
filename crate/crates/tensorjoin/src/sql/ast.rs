//! Typed AST for the supported SQL subset: conjunctive select-project-join
//! queries with optional group-by aggregates and a single order-by column.

use std::fmt;

use crate::catalog::LogicalType;

#[derive(Debug, Clone, PartialEq)]
pub struct QueryAst {
    pub select_list: Vec<SelectItem>,
    pub from_tables: Vec<String>,
    pub where_conjuncts: Vec<Predicate>,
    pub group_by: Vec<ColumnRef>,
    pub order_by: Option<OrderBy>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectItem {
    pub expr: ScalarExpr,
    pub alias: Option<String>,
}

/// A column reference, unbound after parsing and bound after name resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnRef {
    pub table: Option<String>,
    pub column: String,
    pub binding: Option<Binding>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Binding {
    pub table_idx: usize,
    pub column_idx: usize,
    pub ty: LogicalType,
}

impl ColumnRef {
    pub fn unbound(table: Option<&str>, column: &str) -> Self {
        Self {
            table: table.map(str::to_string),
            column: column.to_string(),
            binding: None,
        }
    }

    pub fn binding(&self) -> crate::error::Result<Binding> {
        self.binding.ok_or_else(|| {
            crate::error::Error::Internal(format!("unresolved column reference {self}"))
        })
    }

    /// Structural identity ignoring the display name (post-resolution).
    pub fn same_target(&self, other: &Self) -> bool {
        match (self.binding, other.binding) {
            (Some(a), Some(b)) => a.table_idx == b.table_idx && a.column_idx == b.column_idx,
            _ => self.table == other.table && self.column == other.column,
        }
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.table {
            Some(t) => write!(f, "{t}.{}", self.column),
            None => write!(f, "{}", self.column),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggFunc {
    Sum,
    Count,
    Avg,
    Min,
    Max,
}

impl fmt::Display for AggFunc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AggFunc::Sum => "SUM",
            AggFunc::Count => "COUNT",
            AggFunc::Avg => "AVG",
            AggFunc::Min => "MIN",
            AggFunc::Max => "MAX",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AggArg {
    /// `COUNT(*)`
    Star,
    Expr(Box<ScalarExpr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl fmt::Display for BinaryOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScalarExpr {
    Column(ColumnRef),
    IntLiteral(i64),
    FloatLiteral(f64),
    /// `@name`, bound from engine parameters at execution time.
    Param(String),
    Neg(Box<ScalarExpr>),
    Binary {
        op: BinaryOp,
        lhs: Box<ScalarExpr>,
        rhs: Box<ScalarExpr>,
    },
    Aggregate {
        func: AggFunc,
        arg: AggArg,
    },
}

impl ScalarExpr {
    pub fn contains_aggregate(&self) -> bool {
        match self {
            ScalarExpr::Aggregate { .. } => true,
            ScalarExpr::Neg(e) => e.contains_aggregate(),
            ScalarExpr::Binary { lhs, rhs, .. } => {
                lhs.contains_aggregate() || rhs.contains_aggregate()
            }
            _ => false,
        }
    }

    /// Column refs outside any aggregate call.
    pub fn bare_columns<'a>(&'a self, out: &mut Vec<&'a ColumnRef>) {
        match self {
            ScalarExpr::Column(c) => out.push(c),
            ScalarExpr::Neg(e) => e.bare_columns(out),
            ScalarExpr::Binary { lhs, rhs, .. } => {
                lhs.bare_columns(out);
                rhs.bare_columns(out);
            }
            _ => {}
        }
    }

    /// All column refs, including those inside aggregates.
    pub fn all_columns<'a>(&'a self, out: &mut Vec<&'a ColumnRef>) {
        match self {
            ScalarExpr::Column(c) => out.push(c),
            ScalarExpr::Neg(e) => e.all_columns(out),
            ScalarExpr::Binary { lhs, rhs, .. } => {
                lhs.all_columns(out);
                rhs.all_columns(out);
            }
            ScalarExpr::Aggregate {
                arg: AggArg::Expr(e),
                ..
            } => e.all_columns(out),
            _ => {}
        }
    }

    pub fn for_each_column_mut(&mut self, f: &mut impl FnMut(&mut ColumnRef)) {
        match self {
            ScalarExpr::Column(c) => f(c),
            ScalarExpr::Neg(e) => e.for_each_column_mut(f),
            ScalarExpr::Binary { lhs, rhs, .. } => {
                lhs.for_each_column_mut(f);
                rhs.for_each_column_mut(f);
            }
            ScalarExpr::Aggregate {
                arg: AggArg::Expr(e),
                ..
            } => e.for_each_column_mut(f),
            _ => {}
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Lt,
    Gt,
    Le,
    Ge,
    Ne,
}

impl CmpOp {
    pub fn flip(self) -> Self {
        match self {
            CmpOp::Eq => CmpOp::Eq,
            CmpOp::Ne => CmpOp::Ne,
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Ge => CmpOp::Le,
        }
    }

    pub fn eval_f64(self, l: f64, r: f64) -> bool {
        match self {
            CmpOp::Eq => l == r,
            CmpOp::Ne => l != r,
            CmpOp::Lt => l < r,
            CmpOp::Gt => l > r,
            CmpOp::Le => l <= r,
            CmpOp::Ge => l >= r,
        }
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CmpOp::Eq => "=",
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
            CmpOp::Le => "<=",
            CmpOp::Ge => ">=",
            CmpOp::Ne => "<>",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Int(i64),
    Float(f64),
    Str(String),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Int(v) => write!(f, "{v}"),
            Literal::Float(v) => write!(f, "{v}"),
            Literal::Str(v) => write!(f, "'{v}'"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    /// `left <cmp> right` across (usually different) tables.
    ColCol {
        left: ColumnRef,
        op: CmpOp,
        right: ColumnRef,
    },
    /// `col <cmp> constant`, normalized so the column is on the left.
    ColConst {
        col: ColumnRef,
        op: CmpOp,
        value: Literal,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderBy {
    pub column: ColumnRef,
    pub desc: bool,
}

/// Renders the AST back to SQL text. `parse(unparse(ast))` is structurally
/// identical to `ast` (modulo bindings).
pub fn unparse(ast: &QueryAst) -> String {
    let mut out = String::from("SELECT ");
    let items: Vec<String> = ast
        .select_list
        .iter()
        .map(|item| {
            let e = unparse_expr(&item.expr);
            match &item.alias {
                Some(a) => format!("{e} AS {a}"),
                None => e,
            }
        })
        .collect();
    out.push_str(&items.join(", "));
    out.push_str(" FROM ");
    out.push_str(&ast.from_tables.join(", "));
    if !ast.where_conjuncts.is_empty() {
        out.push_str(" WHERE ");
        let preds: Vec<String> = ast
            .where_conjuncts
            .iter()
            .map(|p| match p {
                Predicate::ColCol { left, op, right } => format!("{left} {op} {right}"),
                Predicate::ColConst { col, op, value } => format!("{col} {op} {value}"),
            })
            .collect();
        out.push_str(&preds.join(" AND "));
    }
    if !ast.group_by.is_empty() {
        out.push_str(" GROUP BY ");
        let cols: Vec<String> = ast.group_by.iter().map(ColumnRef::to_string).collect();
        out.push_str(&cols.join(", "));
    }
    if let Some(order) = &ast.order_by {
        out.push_str(" ORDER BY ");
        out.push_str(&order.column.to_string());
        out.push_str(if order.desc { " DESC" } else { " ASC" });
    }
    out
}

fn unparse_expr(expr: &ScalarExpr) -> String {
    match expr {
        ScalarExpr::Column(c) => c.to_string(),
        ScalarExpr::IntLiteral(v) => v.to_string(),
        ScalarExpr::FloatLiteral(v) => v.to_string(),
        ScalarExpr::Param(p) => format!("@{p}"),
        ScalarExpr::Neg(e) => format!("-({})", unparse_expr(e)),
        ScalarExpr::Binary { op, lhs, rhs } => {
            format!("({} {op} {})", unparse_expr(lhs), unparse_expr(rhs))
        }
        ScalarExpr::Aggregate { func, arg } => match arg {
            AggArg::Star => format!("{func}(*)"),
            AggArg::Expr(e) => format!("{func}({})", unparse_expr(e)),
        },
    }
}
