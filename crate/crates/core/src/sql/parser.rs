//! Recursive-descent parser with precedence climbing for expressions.

use super::ast::*;
use super::lexer::{tokenize, Token, TokenKind};
use super::SyntaxError;
use crate::expr::{BinaryOp, UnaryOp};

/// Words that cannot serve as identifiers or aliases.
const RESERVED: &[&str] = &[
    "select", "from", "where", "join", "cross", "on", "and", "or", "not", "between", "predict",
    "value", "of", "with", "primary", "key", "train", "using", "model", "order", "by", "limit",
    "group", "as", "create", "drop", "table", "insert", "into", "values", "features", "target",
    "kind", "desc", "asc", "true", "false",
];

pub fn parse(input: &str) -> Result<Statement, SyntaxError> {
    let mut p = Parser::new(input)?;
    let stmt = p.statement()?;
    p.eat_sym(";");
    p.expect_eof()?;
    Ok(stmt)
}

/// Parses a script of `;`-separated statements.
pub fn parse_all(input: &str) -> Result<Vec<Statement>, SyntaxError> {
    let mut p = Parser::new(input)?;
    let mut out = Vec::new();
    loop {
        while p.eat_sym(";") {}
        if p.at_eof() {
            return Ok(out);
        }
        out.push(p.statement()?);
        if !p.at_eof() {
            p.expect_sym(";")?;
        }
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn new(input: &str) -> Result<Parser, SyntaxError> {
        Ok(Parser {
            tokens: tokenize(input)?,
            pos: 0,
        })
    }

    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn peek_at(&self, n: usize) -> &Token {
        self.tokens
            .get(self.pos + n)
            .unwrap_or_else(|| self.tokens.last().unwrap())
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn at_eof(&self) -> bool {
        matches!(self.peek().kind, TokenKind::Eof)
    }

    fn error(&self, expected: &[&str]) -> SyntaxError {
        let t = self.peek();
        SyntaxError {
            line: t.line,
            col: t.col,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: t.kind.describe(),
        }
    }

    fn peek_keyword(&self, kw: &str) -> bool {
        match &self.peek().kind {
            TokenKind::Word(w) => w.eq_ignore_ascii_case(kw),
            _ => false,
        }
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.peek_keyword(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), SyntaxError> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(self.error(&[&kw.to_uppercase()]))
        }
    }

    fn eat_sym(&mut self, sym: &str) -> bool {
        if matches!(&self.peek().kind, TokenKind::Sym(s) if *s == sym) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, sym: &str) -> Result<(), SyntaxError> {
        if self.eat_sym(sym) {
            Ok(())
        } else {
            Err(self.error(&[sym]))
        }
    }

    fn expect_eof(&self) -> Result<(), SyntaxError> {
        if self.at_eof() {
            Ok(())
        } else {
            Err(self.error(&["end of statement"]))
        }
    }

    /// A non-reserved identifier.
    fn identifier(&mut self, what: &str) -> Result<String, SyntaxError> {
        match &self.peek().kind {
            TokenKind::Word(w) if !RESERVED.contains(&w.to_ascii_lowercase().as_str()) => {
                let w = w.clone();
                self.advance();
                Ok(w)
            }
            _ => Err(self.error(&[what])),
        }
    }

    fn statement(&mut self) -> Result<Statement, SyntaxError> {
        if self.peek_keyword("select") || self.peek_keyword("with") {
            return Ok(Statement::Select(self.select_stmt()?));
        }
        if self.peek_keyword("create") {
            self.advance();
            if self.eat_keyword("model") {
                return self.create_model();
            }
            if self.eat_keyword("table") {
                return self.create_table();
            }
            return Err(self.error(&["MODEL", "TABLE"]));
        }
        if self.peek_keyword("drop") {
            self.advance();
            self.expect_keyword("model")?;
            return Ok(Statement::DropModel(self.identifier("model name")?));
        }
        if self.peek_keyword("insert") {
            return self.insert();
        }
        Err(self.error(&["SELECT", "WITH", "CREATE", "DROP", "INSERT"]))
    }

    fn select_stmt(&mut self) -> Result<SelectStmt, SyntaxError> {
        let mut with = Vec::new();
        if self.eat_keyword("with") {
            loop {
                let name = self.identifier("WITH alias")?;
                self.expect_keyword("as")?;
                self.expect_sym("(")?;
                let core = self.select_core()?;
                self.expect_sym(")")?;
                with.push((name, core));
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        let body = self.select_core()?;
        let mut order_by = Vec::new();
        if self.eat_keyword("order") {
            self.expect_keyword("by")?;
            loop {
                let expr = self.expr()?;
                let desc = if self.eat_keyword("desc") {
                    true
                } else {
                    self.eat_keyword("asc");
                    false
                };
                order_by.push(OrderKey { expr, desc });
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        let limit = if self.eat_keyword("limit") {
            match self.peek().kind.clone() {
                TokenKind::Int(n) if n >= 0 => {
                    self.advance();
                    Some(n as u64)
                }
                _ => return Err(self.error(&["row count"])),
            }
        } else {
            None
        };
        Ok(SelectStmt {
            with,
            body,
            order_by,
            limit,
        })
    }

    fn select_core(&mut self) -> Result<SelectCore, SyntaxError> {
        self.expect_keyword("select")?;
        let mut projections = Vec::new();
        loop {
            if self.eat_sym("*") {
                projections.push(Projection::Star);
            } else {
                let expr = self.expr()?;
                let alias = if self.eat_keyword("as") {
                    Some(self.identifier("alias")?)
                } else {
                    match &self.peek().kind {
                        TokenKind::Word(w)
                            if !RESERVED.contains(&w.to_ascii_lowercase().as_str()) =>
                        {
                            Some(self.identifier("alias")?)
                        }
                        _ => None,
                    }
                };
                projections.push(Projection::Expr { expr, alias });
            }
            if !self.eat_sym(",") {
                break;
            }
        }
        let from = if self.eat_keyword("from") {
            self.from_clause()?
        } else {
            Vec::new()
        };
        let where_clause = if self.eat_keyword("where") {
            Some(self.expr()?)
        } else {
            None
        };
        let mut group_by = Vec::new();
        if self.eat_keyword("group") {
            self.expect_keyword("by")?;
            loop {
                group_by.push(self.expr()?);
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        Ok(SelectCore {
            projections,
            from,
            where_clause,
            group_by,
        })
    }

    #[allow(clippy::wrong_self_convention)]
    fn from_clause(&mut self) -> Result<Vec<FromItem>, SyntaxError> {
        let mut items = vec![FromItem {
            source: self.from_source()?,
            join: JoinSpec::First,
        }];
        loop {
            if self.eat_keyword("join") {
                let source = self.from_source()?;
                self.expect_keyword("on")?;
                let on = self.expr()?;
                items.push(FromItem {
                    source,
                    join: JoinSpec::Inner(on),
                });
            } else if self.peek_keyword("cross") {
                self.advance();
                self.expect_keyword("join")?;
                let source = self.from_source()?;
                items.push(FromItem {
                    source,
                    join: JoinSpec::Cross,
                });
            } else if self.eat_sym(",") {
                // Comma join is a cross join.
                let source = self.from_source()?;
                items.push(FromItem {
                    source,
                    join: JoinSpec::Cross,
                });
            } else {
                break;
            }
        }
        Ok(items)
    }

    #[allow(clippy::wrong_self_convention)]
    fn from_source(&mut self) -> Result<FromSource, SyntaxError> {
        if self.eat_sym("(") {
            if self.peek_keyword("predict") {
                let block = self.predict_block()?;
                self.expect_sym(")")?;
                let alias = self.identifier("alias for PREDICT block")?;
                return Ok(FromSource::Predict {
                    block: Box::new(block),
                    alias,
                });
            }
            if self.peek_keyword("select") {
                let core = self.select_core()?;
                self.expect_sym(")")?;
                let alias = self.identifier("alias for subquery")?;
                return Ok(FromSource::Subquery {
                    core: Box::new(core),
                    alias,
                });
            }
            return Err(self.error(&["PREDICT", "SELECT"]));
        }
        let name = self.identifier("table name")?;
        let alias = if self.eat_keyword("as") {
            Some(self.identifier("alias")?)
        } else {
            match &self.peek().kind {
                TokenKind::Word(w) if !RESERVED.contains(&w.to_ascii_lowercase().as_str()) => {
                    Some(self.identifier("alias")?)
                }
                _ => None,
            }
        };
        Ok(FromSource::Table { name, alias })
    }

    fn predict_block(&mut self) -> Result<PredictBlock, SyntaxError> {
        self.expect_keyword("predict")?;
        self.expect_keyword("value")?;
        self.expect_keyword("of")?;
        let target = self.colref()?;
        if !self.peek_keyword("with") {
            return Err(self.error(&["WITH PRIMARY KEY"]));
        }
        self.advance();
        self.expect_keyword("primary")?;
        self.expect_keyword("key")?;
        let key = self.colref()?;
        self.expect_keyword("from")?;
        let from = self.from_clause()?;
        let where_clause = if self.eat_keyword("where") {
            Some(self.expr()?)
        } else {
            None
        };
        let spec = if self.eat_keyword("train") {
            self.expect_keyword("on")?;
            let mut cols = vec![self.colref()?];
            while self.eat_sym(",") {
                cols.push(self.colref()?);
            }
            PredictSpec::TrainOn(cols)
        } else if self.eat_keyword("using") {
            self.expect_keyword("model")?;
            PredictSpec::UsingModel(self.identifier("model name")?)
        } else {
            return Err(self.error(&["TRAIN ON", "USING MODEL"]));
        };
        Ok(PredictBlock {
            target,
            key,
            from,
            where_clause,
            spec,
        })
    }

    fn colref(&mut self) -> Result<ColRef, SyntaxError> {
        let first = self.identifier("column reference")?;
        if self.eat_sym(".") {
            let name = self.identifier("column name")?;
            Ok(ColRef {
                qualifier: Some(first),
                name,
            })
        } else {
            Ok(ColRef {
                qualifier: None,
                name: first,
            })
        }
    }

    fn create_model(&mut self) -> Result<Statement, SyntaxError> {
        let name = self.identifier("model name")?;
        self.expect_keyword("kind")?;
        let kind = self.identifier("model kind")?;
        self.expect_keyword("on")?;
        let table = self.identifier("table name")?;
        self.expect_keyword("features")?;
        self.expect_sym("(")?;
        let mut features = vec![self.identifier("feature column")?];
        while self.eat_sym(",") {
            features.push(self.identifier("feature column")?);
        }
        self.expect_sym(")")?;
        let target = if self.eat_keyword("target") {
            Some(self.identifier("target column")?)
        } else {
            None
        };
        Ok(Statement::CreateModel(CreateModelStmt {
            name,
            kind,
            table,
            features,
            target,
        }))
    }

    fn create_table(&mut self) -> Result<Statement, SyntaxError> {
        let name = self.identifier("table name")?;
        self.expect_sym("(")?;
        let mut columns = Vec::new();
        loop {
            let col = self.identifier("column name")?;
            let ty = match &self.peek().kind {
                TokenKind::Word(w) => {
                    let w = w.clone();
                    self.advance();
                    w
                }
                _ => return Err(self.error(&["column type"])),
            };
            let pk = if self.peek_keyword("primary") {
                self.advance();
                self.expect_keyword("key")?;
                true
            } else {
                false
            };
            columns.push((col, ty, pk));
            if !self.eat_sym(",") {
                break;
            }
        }
        self.expect_sym(")")?;
        Ok(Statement::CreateTable(CreateTableStmt { name, columns }))
    }

    fn insert(&mut self) -> Result<Statement, SyntaxError> {
        self.expect_keyword("insert")?;
        self.expect_keyword("into")?;
        let table = self.identifier("table name")?;
        self.expect_keyword("values")?;
        let mut rows = Vec::new();
        loop {
            self.expect_sym("(")?;
            let mut row = vec![self.expr()?];
            while self.eat_sym(",") {
                row.push(self.expr()?);
            }
            self.expect_sym(")")?;
            rows.push(row);
            if !self.eat_sym(",") {
                break;
            }
        }
        Ok(Statement::Insert(InsertStmt { table, rows }))
    }

    // Expression precedence: OR < AND < NOT < comparison/BETWEEN < +- < */ < unary.
    fn expr(&mut self) -> Result<AstExpr, SyntaxError> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> Result<AstExpr, SyntaxError> {
        let mut left = self.and_expr()?;
        while self.eat_keyword("or") {
            let right = self.and_expr()?;
            left = AstExpr::Binary {
                op: BinaryOp::Or,
                left: Box::new(left),
                right: Box::new(right),
            };
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> Result<AstExpr, SyntaxError> {
        let mut left = self.not_expr()?;
        while self.eat_keyword("and") {
            let right = self.not_expr()?;
            left = AstExpr::Binary {
                op: BinaryOp::And,
                left: Box::new(left),
                right: Box::new(right),
            };
        }
        Ok(left)
    }

    fn not_expr(&mut self) -> Result<AstExpr, SyntaxError> {
        if self.eat_keyword("not") {
            let input = self.not_expr()?;
            return Ok(AstExpr::Unary {
                op: UnaryOp::Not,
                input: Box::new(input),
            });
        }
        self.cmp_expr()
    }

    fn cmp_expr(&mut self) -> Result<AstExpr, SyntaxError> {
        let left = self.add_expr()?;
        if self.peek_keyword("between") {
            self.advance();
            let lo = self.add_expr()?;
            self.expect_keyword("and")?;
            let hi = self.add_expr()?;
            return Ok(AstExpr::Between {
                input: Box::new(left),
                lo: Box::new(lo),
                hi: Box::new(hi),
            });
        }
        let op = match &self.peek().kind {
            TokenKind::Sym("=") => Some(BinaryOp::Eq),
            TokenKind::Sym("<>") => Some(BinaryOp::Ne),
            TokenKind::Sym("<") => Some(BinaryOp::Lt),
            TokenKind::Sym("<=") => Some(BinaryOp::Le),
            TokenKind::Sym(">") => Some(BinaryOp::Gt),
            TokenKind::Sym(">=") => Some(BinaryOp::Ge),
            _ => None,
        };
        if let Some(op) = op {
            self.advance();
            let right = self.add_expr()?;
            return Ok(AstExpr::Binary {
                op,
                left: Box::new(left),
                right: Box::new(right),
            });
        }
        Ok(left)
    }

    fn add_expr(&mut self) -> Result<AstExpr, SyntaxError> {
        let mut left = self.mul_expr()?;
        loop {
            let op = match &self.peek().kind {
                TokenKind::Sym("+") => BinaryOp::Add,
                TokenKind::Sym("-") => BinaryOp::Sub,
                _ => break,
            };
            self.advance();
            let right = self.mul_expr()?;
            left = AstExpr::Binary {
                op,
                left: Box::new(left),
                right: Box::new(right),
            };
        }
        Ok(left)
    }

    fn mul_expr(&mut self) -> Result<AstExpr, SyntaxError> {
        let mut left = self.unary_expr()?;
        loop {
            let op = match &self.peek().kind {
                TokenKind::Sym("*") => BinaryOp::Mul,
                TokenKind::Sym("/") => BinaryOp::Div,
                _ => break,
            };
            self.advance();
            let right = self.unary_expr()?;
            left = AstExpr::Binary {
                op,
                left: Box::new(left),
                right: Box::new(right),
            };
        }
        Ok(left)
    }

    fn unary_expr(&mut self) -> Result<AstExpr, SyntaxError> {
        if self.eat_sym("-") {
            // Fold negative numeric literals so -5 round-trips as a literal.
            match self.peek().kind.clone() {
                TokenKind::Int(v) => {
                    self.advance();
                    return Ok(AstExpr::IntLit(-v));
                }
                TokenKind::Float(v) => {
                    self.advance();
                    return Ok(AstExpr::FloatLit(-v));
                }
                _ => {
                    let input = self.unary_expr()?;
                    return Ok(AstExpr::Unary {
                        op: UnaryOp::Neg,
                        input: Box::new(input),
                    });
                }
            }
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<AstExpr, SyntaxError> {
        match self.peek().kind.clone() {
            TokenKind::Int(v) => {
                self.advance();
                Ok(AstExpr::IntLit(v))
            }
            TokenKind::Float(v) => {
                self.advance();
                Ok(AstExpr::FloatLit(v))
            }
            TokenKind::Str(s) => {
                self.advance();
                Ok(AstExpr::StringLit(s))
            }
            TokenKind::Sym("(") => {
                self.advance();
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            TokenKind::Word(w) => {
                let lower = w.to_ascii_lowercase();
                if lower == "true" {
                    self.advance();
                    return Ok(AstExpr::BoolLit(true));
                }
                if lower == "false" {
                    self.advance();
                    return Ok(AstExpr::BoolLit(false));
                }
                let agg = match lower.as_str() {
                    "count" => Some(AggFunc::Count),
                    "sum" => Some(AggFunc::Sum),
                    "avg" => Some(AggFunc::Avg),
                    "min" => Some(AggFunc::Min),
                    "max" => Some(AggFunc::Max),
                    _ => None,
                };
                if let Some(func) = agg {
                    if matches!(self.peek_at(1).kind, TokenKind::Sym("(")) {
                        self.advance();
                        self.advance();
                        if func == AggFunc::Count && self.eat_sym("*") {
                            self.expect_sym(")")?;
                            return Ok(AstExpr::Agg { func, arg: None });
                        }
                        let arg = self.expr()?;
                        self.expect_sym(")")?;
                        return Ok(AstExpr::Agg {
                            func,
                            arg: Some(Box::new(arg)),
                        });
                    }
                }
                if RESERVED.contains(&lower.as_str()) {
                    return Err(self.error(&["expression"]));
                }
                Ok(AstExpr::Column(self.colref()?))
            }
            _ => Err(self.error(&["expression"])),
        }
    }
}
