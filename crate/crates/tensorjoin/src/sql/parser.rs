//! Recursive-descent parser. Unsupported constructs are rejected with an
//! explicit error, never silently dropped.

use crate::error::{Error, Result};
use crate::sql::ast::*;
use crate::sql::lexer::{tokenize, Keyword, SpannedToken, Token};

pub fn parse(sql: &str) -> Result<QueryAst> {
    let tokens = tokenize(sql)?;
    let mut p = Parser { tokens, pos: 0 };
    let ast = p.query()?;
    p.eat_if(&Token::Semicolon);
    p.expect_eof()?;
    Ok(ast)
}

struct Parser {
    tokens: Vec<SpannedToken>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos].token
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].token.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn eat_if(&mut self, token: &Token) -> bool {
        if self.peek() == token {
            self.advance();
            true
        } else {
            false
        }
    }

    fn eat_keyword(&mut self, kw: Keyword) -> bool {
        if self.peek() == &Token::Keyword(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: Keyword, what: &str) -> Result<()> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(self.syntax(what))
        }
    }

    fn expect(&mut self, token: Token, what: &str) -> Result<()> {
        if self.eat_if(&token) {
            Ok(())
        } else {
            Err(self.syntax(what))
        }
    }

    fn expect_eof(&mut self) -> Result<()> {
        if self.peek() == &Token::Eof {
            Ok(())
        } else {
            Err(self.syntax("end of query"))
        }
    }

    fn syntax(&self, expected: &str) -> Error {
        let t = &self.tokens[self.pos];
        Error::Syntax {
            message: format!("unexpected {:?} at position {}", t.token, t.position),
            expected: expected.to_string(),
        }
    }

    fn ident(&mut self, what: &str) -> Result<String> {
        match self.peek().clone() {
            Token::Ident(name) => {
                self.advance();
                Ok(name)
            }
            _ => Err(self.syntax(what)),
        }
    }

    fn query(&mut self) -> Result<QueryAst> {
        self.expect_keyword(Keyword::Select, "SELECT")?;
        if self.eat_keyword(Keyword::Distinct) {
            return Err(Error::Unsupported("DISTINCT".into()));
        }
        let select_list = self.select_list()?;
        self.expect_keyword(Keyword::From, "FROM")?;
        let from_tables = self.table_list()?;
        let mut where_conjuncts = Vec::new();
        if self.eat_keyword(Keyword::Where) {
            where_conjuncts = self.conjuncts()?;
        }
        let mut group_by = Vec::new();
        if self.eat_keyword(Keyword::Group) {
            self.expect_keyword(Keyword::By, "BY after GROUP")?;
            loop {
                group_by.push(self.column_ref()?);
                if !self.eat_if(&Token::Comma) {
                    break;
                }
            }
        }
        let mut order_by = None;
        if self.eat_keyword(Keyword::Order) {
            self.expect_keyword(Keyword::By, "BY after ORDER")?;
            let column = self.column_ref()?;
            let desc = if self.eat_keyword(Keyword::Desc) {
                true
            } else {
                self.eat_keyword(Keyword::Asc);
                false
            };
            order_by = Some(OrderBy { column, desc });
        }
        match self.peek() {
            Token::Keyword(Keyword::Having) => Err(Error::Unsupported("HAVING".into())),
            Token::Keyword(Keyword::Limit) => Err(Error::Unsupported("LIMIT".into())),
            _ => Ok(QueryAst {
                select_list,
                from_tables,
                where_conjuncts,
                group_by,
                order_by,
            }),
        }
    }

    fn select_list(&mut self) -> Result<Vec<SelectItem>> {
        let mut items = Vec::new();
        loop {
            if self.peek() == &Token::Star {
                return Err(Error::Unsupported("star projection (`SELECT *`)".into()));
            }
            let expr = self.expr()?;
            let alias = if self.eat_keyword(Keyword::As) {
                Some(self.ident("alias after AS")?)
            } else {
                None
            };
            items.push(SelectItem { expr, alias });
            if !self.eat_if(&Token::Comma) {
                break;
            }
        }
        Ok(items)
    }

    fn table_list(&mut self) -> Result<Vec<String>> {
        let mut tables = Vec::new();
        loop {
            if self.peek() == &Token::LParen {
                return Err(Error::Unsupported("subquery in FROM".into()));
            }
            tables.push(self.ident("table name")?);
            if self.peek() == &Token::Keyword(Keyword::Join) {
                return Err(Error::Unsupported(
                    "explicit JOIN syntax (use comma-separated FROM with WHERE equality)".into(),
                ));
            }
            if !self.eat_if(&Token::Comma) {
                break;
            }
        }
        Ok(tables)
    }

    fn conjuncts(&mut self) -> Result<Vec<Predicate>> {
        let mut preds = vec![self.predicate()?];
        loop {
            if self.eat_keyword(Keyword::And) {
                preds.push(self.predicate()?);
            } else if self.peek() == &Token::Keyword(Keyword::Or) {
                return Err(Error::Unsupported("OR in WHERE (only AND conjunctions)".into()));
            } else {
                break;
            }
        }
        Ok(preds)
    }

    fn predicate(&mut self) -> Result<Predicate> {
        let left = self.operand()?;
        let op = self.cmp_op()?;
        let right = self.operand()?;
        match (left, right) {
            (Operand::Col(l), Operand::Col(r)) => Ok(Predicate::ColCol { left: l, op, right: r }),
            (Operand::Col(col), Operand::Lit(value)) => Ok(Predicate::ColConst { col, op, value }),
            (Operand::Lit(value), Operand::Col(col)) => Ok(Predicate::ColConst {
                col,
                op: op.flip(),
                value,
            }),
            (Operand::Lit(_), Operand::Lit(_)) => Err(Error::Unsupported(
                "constant-only predicate".into(),
            )),
        }
    }

    fn cmp_op(&mut self) -> Result<CmpOp> {
        let op = match self.peek() {
            Token::Eq => CmpOp::Eq,
            Token::Lt => CmpOp::Lt,
            Token::Gt => CmpOp::Gt,
            Token::Le => CmpOp::Le,
            Token::Ge => CmpOp::Ge,
            Token::Ne => CmpOp::Ne,
            _ => return Err(self.syntax("comparison operator")),
        };
        self.advance();
        Ok(op)
    }

    fn operand(&mut self) -> Result<Operand> {
        match self.peek().clone() {
            Token::Ident(_) => Ok(Operand::Col(self.column_ref()?)),
            Token::Int(v) => {
                self.advance();
                Ok(Operand::Lit(Literal::Int(v)))
            }
            Token::Float(v) => {
                self.advance();
                Ok(Operand::Lit(Literal::Float(v)))
            }
            Token::Str(s) => {
                self.advance();
                Ok(Operand::Lit(Literal::Str(s)))
            }
            Token::Minus => {
                self.advance();
                match self.advance() {
                    Token::Int(v) => Ok(Operand::Lit(Literal::Int(-v))),
                    Token::Float(v) => Ok(Operand::Lit(Literal::Float(-v))),
                    _ => Err(self.syntax("numeric literal after `-`")),
                }
            }
            Token::LParen => Err(Error::Unsupported("parenthesized or nested predicate".into())),
            _ => Err(self.syntax("column reference or literal")),
        }
    }

    fn column_ref(&mut self) -> Result<ColumnRef> {
        let first = self.ident("column reference")?;
        if self.peek() == &Token::Dot {
            self.advance();
            let column = self.ident("column name after `.`")?;
            Ok(ColumnRef::unbound(Some(&first), &column))
        } else {
            Ok(ColumnRef::unbound(None, &first))
        }
    }

    // Expression grammar: expr -> term (('+'|'-') term)*, term -> factor
    // (('*'|'/') factor)*, factor -> '-' factor | '(' expr ')' | literal |
    // param | aggregate | column.
    fn expr(&mut self) -> Result<ScalarExpr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Token::Plus => BinaryOp::Add,
                Token::Minus => BinaryOp::Sub,
                _ => break,
            };
            self.advance();
            let rhs = self.term()?;
            lhs = ScalarExpr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<ScalarExpr> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Token::Star => BinaryOp::Mul,
                Token::Slash => BinaryOp::Div,
                _ => break,
            };
            self.advance();
            let rhs = self.factor()?;
            lhs = ScalarExpr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<ScalarExpr> {
        match self.peek().clone() {
            Token::Minus => {
                self.advance();
                Ok(ScalarExpr::Neg(Box::new(self.factor()?)))
            }
            Token::LParen => {
                self.advance();
                if matches!(self.peek(), Token::Keyword(Keyword::Select)) {
                    return Err(Error::Unsupported("subquery".into()));
                }
                let e = self.expr()?;
                self.expect(Token::RParen, "`)`")?;
                Ok(e)
            }
            Token::Int(v) => {
                self.advance();
                Ok(ScalarExpr::IntLiteral(v))
            }
            Token::Float(v) => {
                self.advance();
                Ok(ScalarExpr::FloatLiteral(v))
            }
            Token::Param(name) => {
                self.advance();
                Ok(ScalarExpr::Param(name))
            }
            Token::Keyword(kw) if agg_func(kw).is_some() => {
                self.advance();
                let func = agg_func(kw).unwrap();
                self.expect(Token::LParen, "`(` after aggregate")?;
                let arg = if self.peek() == &Token::Star {
                    self.advance();
                    if func != AggFunc::Count {
                        return Err(Error::Unsupported(format!("{func}(*)")));
                    }
                    AggArg::Star
                } else {
                    AggArg::Expr(Box::new(self.expr()?))
                };
                self.expect(Token::RParen, "`)` after aggregate argument")?;
                Ok(ScalarExpr::Aggregate { func, arg })
            }
            Token::Ident(_) => Ok(ScalarExpr::Column(self.column_ref()?)),
            _ => Err(self.syntax("expression")),
        }
    }
}

enum Operand {
    Col(ColumnRef),
    Lit(Literal),
}

fn agg_func(kw: Keyword) -> Option<AggFunc> {
    Some(match kw {
        Keyword::Sum => AggFunc::Sum,
        Keyword::Count => AggFunc::Count,
        Keyword::Avg => AggFunc::Avg,
        Keyword::Min => AggFunc::Min,
        Keyword::Max => AggFunc::Max,
        _ => return None,
    })
}
