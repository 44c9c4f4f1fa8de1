//! Renders a statement back to SQL. `parse(unparse(s))` is structurally
//! equal to `s`; grouping parentheses are emitted conservatively because the
//! AST carries no parenthesization.

use super::ast::*;
use crate::expr::UnaryOp;
use std::fmt::Write;

pub fn unparse(stmt: &Statement) -> String {
    let mut out = String::new();
    match stmt {
        Statement::Select(s) => write_select(&mut out, s),
        Statement::CreateModel(m) => {
            write!(out, "CREATE MODEL {} KIND {} ON {} FEATURES (", m.name, m.kind, m.table)
                .unwrap();
            out.push_str(&m.features.join(", "));
            out.push(')');
            if let Some(t) = &m.target {
                write!(out, " TARGET {t}").unwrap();
            }
        }
        Statement::DropModel(name) => write!(out, "DROP MODEL {name}").unwrap(),
        Statement::CreateTable(t) => {
            write!(out, "CREATE TABLE {} (", t.name).unwrap();
            for (i, (col, ty, pk)) in t.columns.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write!(out, "{col} {ty}").unwrap();
                if *pk {
                    out.push_str(" PRIMARY KEY");
                }
            }
            out.push(')');
        }
        Statement::Insert(ins) => {
            write!(out, "INSERT INTO {} VALUES ", ins.table).unwrap();
            for (i, row) in ins.rows.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                out.push('(');
                for (j, e) in row.iter().enumerate() {
                    if j > 0 {
                        out.push_str(", ");
                    }
                    write_expr(&mut out, e);
                }
                out.push(')');
            }
        }
    }
    out
}

fn write_select(out: &mut String, s: &SelectStmt) {
    if !s.with.is_empty() {
        out.push_str("WITH ");
        for (i, (name, core)) in s.with.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            write!(out, "{name} AS (").unwrap();
            write_core(out, core);
            out.push(')');
        }
        out.push(' ');
    }
    write_core(out, &s.body);
    if !s.order_by.is_empty() {
        out.push_str(" ORDER BY ");
        for (i, key) in s.order_by.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            write_expr(out, &key.expr);
            if key.desc {
                out.push_str(" DESC");
            }
        }
    }
    if let Some(n) = s.limit {
        write!(out, " LIMIT {n}").unwrap();
    }
}

fn write_core(out: &mut String, core: &SelectCore) {
    out.push_str("SELECT ");
    for (i, p) in core.projections.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        match p {
            Projection::Star => out.push('*'),
            Projection::Expr { expr, alias } => {
                write_expr(out, expr);
                if let Some(a) = alias {
                    write!(out, " AS {a}").unwrap();
                }
            }
        }
    }
    if !core.from.is_empty() {
        out.push_str(" FROM ");
        write_from(out, &core.from);
    }
    if let Some(w) = &core.where_clause {
        out.push_str(" WHERE ");
        write_expr(out, w);
    }
    if !core.group_by.is_empty() {
        out.push_str(" GROUP BY ");
        for (i, e) in core.group_by.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            write_expr(out, e);
        }
    }
}

fn write_from(out: &mut String, items: &[FromItem]) {
    for item in items {
        match &item.join {
            JoinSpec::First => {}
            JoinSpec::Inner(_) => out.push_str(" JOIN "),
            JoinSpec::Cross => out.push_str(" CROSS JOIN "),
        }
        match &item.source {
            FromSource::Table { name, alias } => {
                out.push_str(name);
                if let Some(a) = alias {
                    write!(out, " {a}").unwrap();
                }
            }
            FromSource::Subquery { core, alias } => {
                out.push('(');
                write_core(out, core);
                write!(out, ") {alias}").unwrap();
            }
            FromSource::Predict { block, alias } => {
                out.push('(');
                write_predict(out, block);
                write!(out, ") {alias}").unwrap();
            }
        }
        if let JoinSpec::Inner(on) = &item.join {
            out.push_str(" ON ");
            write_expr(out, on);
        }
    }
}

fn write_predict(out: &mut String, block: &PredictBlock) {
    write!(out, "PREDICT VALUE OF {} WITH PRIMARY KEY {} FROM ", block.target, block.key).unwrap();
    write_from(out, &block.from);
    if let Some(w) = &block.where_clause {
        out.push_str(" WHERE ");
        write_expr(out, w);
    }
    match &block.spec {
        PredictSpec::TrainOn(cols) => {
            out.push_str(" TRAIN ON ");
            for (i, c) in cols.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write!(out, "{c}").unwrap();
            }
        }
        PredictSpec::UsingModel(name) => write!(out, " USING MODEL {name}").unwrap(),
    }
}

fn write_expr(out: &mut String, e: &AstExpr) {
    match e {
        AstExpr::Column(c) => write!(out, "{c}").unwrap(),
        AstExpr::IntLit(v) => write!(out, "{v}").unwrap(),
        AstExpr::FloatLit(v) => {
            let s = format!("{v}");
            // Keep float literals lexically float so they re-parse as floats.
            if s.contains('.') || s.contains('e') || s.contains('E') {
                out.push_str(&s);
            } else {
                write!(out, "{s}.0").unwrap();
            }
        }
        AstExpr::StringLit(s) => write!(out, "'{}'", s.replace('\'', "''")).unwrap(),
        AstExpr::BoolLit(b) => out.push_str(if *b { "TRUE" } else { "FALSE" }),
        AstExpr::Unary { op, input } => {
            match op {
                UnaryOp::Neg => out.push('-'),
                UnaryOp::Not => out.push_str("NOT "),
            }
            write_operand(out, input);
        }
        AstExpr::Between { input, lo, hi } => {
            write_operand(out, input);
            out.push_str(" BETWEEN ");
            write_operand(out, lo);
            out.push_str(" AND ");
            write_operand(out, hi);
        }
        AstExpr::Binary { op, left, right } => {
            write_operand(out, left);
            write!(out, " {} ", op.symbol()).unwrap();
            write_operand(out, right);
        }
        AstExpr::Agg { func, arg } => {
            write!(out, "{}(", func.name().to_uppercase()).unwrap();
            match arg {
                None => out.push('*'),
                Some(a) => write_expr(out, a),
            }
            out.push(')');
        }
    }
}

/// Parenthesizes compound operands; primaries print bare.
fn write_operand(out: &mut String, e: &AstExpr) {
    match e {
        AstExpr::Column(_)
        | AstExpr::IntLit(_)
        | AstExpr::FloatLit(_)
        | AstExpr::StringLit(_)
        | AstExpr::BoolLit(_)
        | AstExpr::Agg { .. } => write_expr(out, e),
        _ => {
            out.push('(');
            write_expr(out, e);
            out.push(')');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::parser::parse;
    use super::*;

    fn roundtrip(sql: &str) {
        let a = parse(sql).unwrap();
        let printed = unparse(&a);
        let b = parse(&printed).unwrap_or_else(|e| panic!("reparse of {printed:?}: {e}"));
        assert_eq!(a, b, "round-trip changed structure for {sql:?}");
    }

    #[test]
    fn roundtrip_simple() {
        roundtrip("SELECT a FROM t WHERE a > 3");
        roundtrip("SELECT 1");
        roundtrip("SELECT a, b AS c FROM t JOIN s ON t.x = s.y ORDER BY a DESC LIMIT 10");
        roundtrip("SELECT g, COUNT(*), SUM(v) FROM t GROUP BY g");
        roundtrip("SELECT a FROM t WHERE x = -1.5 AND NOT (b = TRUE) OR y BETWEEN 1 AND 2");
    }

    #[test]
    fn roundtrip_create_model() {
        roundtrip("CREATE MODEL m KIND ridge_regressor ON t FEATURES (a, b) TARGET y");
        roundtrip("DROP MODEL m");
    }

    #[test]
    fn roundtrip_predict_forms() {
        roundtrip(
            "SELECT p.k, p.v FROM (PREDICT VALUE OF t.v WITH PRIMARY KEY t.k FROM t WHERE t.v > 1 TRAIN ON t.k) p",
        );
        roundtrip(
            "SELECT p.k FROM (PREDICT VALUE OF t.body WITH PRIMARY KEY t.id FROM t USING MODEL emb) p",
        );
    }
}
