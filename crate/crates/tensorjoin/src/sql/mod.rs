//! SQL frontend: tokenizer, recursive-descent parser, and name resolution
//! for the supported subset (conjunctive joins, group-by aggregates,
//! order-by, named `@` parameters).

pub mod ast;
mod lexer;
mod parser;
mod resolve;

pub use ast::{unparse, QueryAst};
pub use parser::parse;
pub use resolve::resolve;

#[cfg(test)]
mod tests {
    use super::ast::*;
    use super::*;
    use crate::catalog::{Catalog, ColumnData, ColumnTable, LogicalType};
    use crate::error::Error;

    // The query shapes the engine is built around.
    pub const Q1: &str = "SELECT A.Val, B.Val FROM A, B WHERE A.ID = B.ID;";
    pub const Q2: &str =
        "SELECT A.Val, B.Val, C.Val FROM A, B, C WHERE A.ID_1 = B.ID_1 AND B.ID_2 = C.ID_2;";
    pub const Q3: &str = "SELECT SUM(A.Val), B.Val FROM A, B WHERE A.ID = B.ID GROUP BY B.Val;";
    pub const Q4: &str = "SELECT SUM(A.Val * B.Val) FROM A, B WHERE A.ID = B.ID;";
    pub const Q5: &str = "SELECT A.Val, B.Val FROM A, B WHERE A.ID < B.ID;";
    pub const MATMUL: &str = "SELECT A.col_num, B.row_num, SUM(A.val * B.val) as res \
                              FROM A, B WHERE A.row_num = B.col_num \
                              GROUP BY A.col_num, B.row_num;";
    pub const EM_BEER: &str = "SELECT TABLE_A.ID, TABLE_A.BEER_NAME, \
                               TABLE_B.ID, TABLE_B.BEER_NAME \
                               FROM TABLE_A, TABLE_B \
                               WHERE TABLE_A.ABV = TABLE_B.ABV;";
    pub const EM_ITUNES: &str = "SELECT TABLE_A.ID, TABLE_A.SONG, TABLE_B.ID, TABLE_B.SONG \
                                 FROM TABLE_A, TABLE_B \
                                 WHERE TABLE_A.ARTIST = TABLE_B.ARTIST;";
    pub const PR_Q1: &str = "SELECT NODE.ID, COUNT(EDGE.SRC) FROM NODE, EDGE \
                             WHERE NODE.ID = EDGE.SRC GROUP BY NODE.ID;";
    pub const PR_Q2: &str = "SELECT NODE.ID, (1-@alpha)/@num_node as rank \
                             FROM NODE, OUTDEGREE WHERE NODE.ID = OUTDEGREE.ID;";
    pub const PR_Q3: &str = "SELECT SUM(@alpha * PAGERANK.rank / OUTDEGREE.DEGREE) \
                             + (1-@alpha)/@num_node \
                             FROM PAGERANK, OUTDEGREE WHERE PAGERANK.ID = OUTDEGREE.ID;";

    #[test]
    fn parses_two_way_join() {
        let ast = parse(Q1).unwrap();
        assert_eq!(ast.select_list.len(), 2);
        assert_eq!(ast.from_tables, vec!["A", "B"]);
        assert_eq!(ast.where_conjuncts.len(), 1);
        assert!(ast.group_by.is_empty());
        assert!(matches!(
            &ast.where_conjuncts[0],
            Predicate::ColCol { op: CmpOp::Eq, .. }
        ));
    }

    #[test]
    fn parses_matmul_query() {
        let ast = parse(MATMUL).unwrap();
        assert_eq!(ast.group_by.len(), 2);
        let sum_item = &ast.select_list[2];
        assert_eq!(sum_item.alias.as_deref(), Some("res"));
        match &sum_item.expr {
            ScalarExpr::Aggregate {
                func: AggFunc::Sum,
                arg: AggArg::Expr(e),
            } => assert!(matches!(
                **e,
                ScalarExpr::Binary {
                    op: BinaryOp::Mul,
                    ..
                }
            )),
            other => panic!("expected SUM(product), got {other:?}"),
        }
    }

    #[test]
    fn star_projection_is_unsupported() {
        let err = parse("SELECT * FROM A").unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)), "{err:?}");
    }

    #[test]
    fn or_and_having_are_unsupported() {
        assert!(matches!(
            parse("SELECT A.x FROM A WHERE A.x = 1 OR A.x = 2"),
            Err(Error::Unsupported(_))
        ));
        assert!(matches!(
            parse("SELECT SUM(A.x) FROM A GROUP BY A.y HAVING SUM(A.x) > 1"),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn all_paper_listings_parse() {
        for (name, sql) in [
            ("Q1", Q1),
            ("Q2", Q2),
            ("Q3", Q3),
            ("Q4", Q4),
            ("Q5", Q5),
            ("matmul", MATMUL),
            ("em_beer", EM_BEER),
            ("em_itunes", EM_ITUNES),
            ("pr_q1", PR_Q1),
            ("pr_q2", PR_Q2),
            ("pr_q3", PR_Q3),
        ] {
            parse(sql).unwrap_or_else(|e| panic!("{name} failed to parse: {e}"));
        }
    }

    #[test]
    fn unparse_round_trips_all_listings() {
        for sql in [
            Q1, Q2, Q3, Q4, Q5, MATMUL, EM_BEER, EM_ITUNES, PR_Q1, PR_Q2, PR_Q3,
        ] {
            let ast = parse(sql).unwrap();
            let rendered = unparse(&ast);
            let reparsed = parse(&rendered)
                .unwrap_or_else(|e| panic!("unparse output failed to parse: {e}\n{rendered}"));
            assert_eq!(ast, reparsed, "round trip changed structure for {sql}");
        }
    }

    fn toy_catalog() -> Catalog {
        let mut c = Catalog::new();
        for name in ["A", "B"] {
            c.register(
                ColumnTable::new(
                    name,
                    vec![
                        ("ID".into(), LogicalType::Int64),
                        ("Val".into(), LogicalType::Int64),
                        ("Tag".into(), LogicalType::Utf8),
                    ],
                    vec![
                        ColumnData::Int64(vec![1, 2]),
                        ColumnData::Int64(vec![10, 20]),
                        ColumnData::Utf8 {
                            codes: vec![0, 0],
                            dict: vec!["g".into()],
                        },
                    ],
                )
                .unwrap(),
            );
        }
        c
    }

    #[test]
    fn resolve_binds_columns() {
        let ast = resolve(parse(Q1).unwrap(), &toy_catalog()).unwrap();
        match &ast.select_list[0].expr {
            ScalarExpr::Column(c) => {
                let b = c.binding.unwrap();
                assert_eq!(b.table_idx, 0);
                assert_eq!(b.ty, LogicalType::Int64);
            }
            other => panic!("expected column, got {other:?}"),
        }
    }

    #[test]
    fn resolve_unknown_table_errors() {
        let ast = parse("SELECT C.Val FROM C, B WHERE C.ID = B.ID").unwrap();
        assert!(matches!(
            resolve(ast, &toy_catalog()),
            Err(Error::UnknownTable(_))
        ));
    }

    #[test]
    fn resolve_rejects_int_vs_utf8_predicate() {
        let ast = parse("SELECT A.Val FROM A, B WHERE A.ID = B.Tag").unwrap();
        assert!(matches!(
            resolve(ast, &toy_catalog()),
            Err(Error::TypeMismatch(_))
        ));
    }

    #[test]
    fn resolve_rejects_utf8_non_equi() {
        let ast = parse("SELECT A.Val FROM A, B WHERE A.Tag < B.Tag").unwrap();
        assert!(matches!(
            resolve(ast, &toy_catalog()),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn resolve_rejects_ambiguous_unqualified_column() {
        let ast = parse("SELECT Val FROM A, B WHERE A.ID = B.ID").unwrap();
        assert!(matches!(
            resolve(ast, &toy_catalog()),
            Err(Error::AmbiguousColumn(_))
        ));
    }
}
