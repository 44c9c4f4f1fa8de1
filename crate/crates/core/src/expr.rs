//! Bound scalar expressions.
//!
//! Column references are ordinals into the input row of the operator that
//! owns the expression. The same representation is shared by storage-level
//! scan predicates, plan nodes, and runtime evaluation.

use crate::types::{ColumnType, Value};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Eq => "=",
            BinaryOp::Ne => "<>",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::And => "AND",
            BinaryOp::Or => "OR",
        }
    }

    /// Operand order does not change the result.
    pub fn is_commutative(self) -> bool {
        matches!(
            self,
            BinaryOp::Add | BinaryOp::Mul | BinaryOp::Eq | BinaryOp::Ne | BinaryOp::And | BinaryOp::Or
        )
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinaryOp::Eq | BinaryOp::Ne | BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnaryOp {
    Neg,
    Not,
}

/// A bound scalar expression over an input row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    /// Ordinal into the operator's input row.
    Column(usize),
    Literal(Value),
    Binary {
        op: BinaryOp,
        left: Box<Expr>,
        right: Box<Expr>,
    },
    Unary {
        op: UnaryOp,
        input: Box<Expr>,
    },
    /// `input BETWEEN lo AND hi` (inclusive both ends).
    Between {
        input: Box<Expr>,
        lo: Box<Expr>,
        hi: Box<Expr>,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivideByZero,
    #[error("integer overflow in {0}")]
    Overflow(&'static str),
    #[error("type mismatch: {0}")]
    Type(String),
    #[error("column ordinal {0} out of range for row of width {1}")]
    ColumnOutOfRange(usize, usize),
}

impl Expr {
    pub fn col(i: usize) -> Expr {
        Expr::Column(i)
    }

    pub fn lit(v: Value) -> Expr {
        Expr::Literal(v)
    }

    pub fn int(v: i64) -> Expr {
        Expr::Literal(Value::Int64(v))
    }

    pub fn binary(op: BinaryOp, left: Expr, right: Expr) -> Expr {
        Expr::Binary {
            op,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn and(left: Expr, right: Expr) -> Expr {
        Expr::binary(BinaryOp::And, left, right)
    }

    /// Splits a conjunction into its AND-ed terms.
    pub fn split_conjuncts(&self) -> Vec<&Expr> {
        let mut out = Vec::new();
        fn walk<'a>(e: &'a Expr, out: &mut Vec<&'a Expr>) {
            match e {
                Expr::Binary {
                    op: BinaryOp::And,
                    left,
                    right,
                } => {
                    walk(left, out);
                    walk(right, out);
                }
                other => out.push(other),
            }
        }
        walk(self, &mut out);
        out
    }

    /// Rebuilds a conjunction from terms; `true` for an empty list.
    pub fn join_conjuncts(terms: Vec<Expr>) -> Expr {
        let mut iter = terms.into_iter();
        match iter.next() {
            None => Expr::Literal(Value::Bool(true)),
            Some(first) => iter.fold(first, Expr::and),
        }
    }

    /// Collects referenced column ordinals into `out` (sorted, deduplicated).
    pub fn columns_used(&self, out: &mut Vec<usize>) {
        match self {
            Expr::Column(i) => out.push(*i),
            Expr::Literal(_) => {}
            Expr::Binary { left, right, .. } => {
                left.columns_used(out);
                right.columns_used(out);
            }
            Expr::Unary { input, .. } => input.columns_used(out),
            Expr::Between { input, lo, hi } => {
                input.columns_used(out);
                lo.columns_used(out);
                hi.columns_used(out);
            }
        }
        out.sort_unstable();
        out.dedup();
    }

    pub fn max_column(&self) -> Option<usize> {
        let mut cols = Vec::new();
        self.columns_used(&mut cols);
        cols.last().copied()
    }

    /// Rewrites every column ordinal through `f`.
    pub fn map_columns(&self, f: &impl Fn(usize) -> usize) -> Expr {
        match self {
            Expr::Column(i) => Expr::Column(f(*i)),
            Expr::Literal(v) => Expr::Literal(v.clone()),
            Expr::Binary { op, left, right } => Expr::Binary {
                op: *op,
                left: Box::new(left.map_columns(f)),
                right: Box::new(right.map_columns(f)),
            },
            Expr::Unary { op, input } => Expr::Unary {
                op: *op,
                input: Box::new(input.map_columns(f)),
            },
            Expr::Between { input, lo, hi } => Expr::Between {
                input: Box::new(input.map_columns(f)),
                lo: Box::new(lo.map_columns(f)),
                hi: Box::new(hi.map_columns(f)),
            },
        }
    }

    /// Replaces every column reference with the corresponding expression.
    pub fn substitute(&self, bindings: &[Expr]) -> Expr {
        match self {
            Expr::Column(i) => bindings[*i].clone(),
            Expr::Literal(v) => Expr::Literal(v.clone()),
            Expr::Binary { op, left, right } => Expr::Binary {
                op: *op,
                left: Box::new(left.substitute(bindings)),
                right: Box::new(right.substitute(bindings)),
            },
            Expr::Unary { op, input } => Expr::Unary {
                op: *op,
                input: Box::new(input.substitute(bindings)),
            },
            Expr::Between { input, lo, hi } => Expr::Between {
                input: Box::new(input.substitute(bindings)),
                lo: Box::new(lo.substitute(bindings)),
                hi: Box::new(hi.substitute(bindings)),
            },
        }
    }

    /// Result type against an input schema; errors on ill-typed trees.
    pub fn output_type(&self, schema: &[ColumnType]) -> Result<ColumnType, EvalError> {
        match self {
            Expr::Column(i) => schema
                .get(*i)
                .copied()
                .ok_or(EvalError::ColumnOutOfRange(*i, schema.len())),
            Expr::Literal(v) => Ok(v.column_type()),
            Expr::Unary { op, input } => {
                let t = input.output_type(schema)?;
                match op {
                    UnaryOp::Neg if t.is_numeric() => Ok(t),
                    UnaryOp::Not if t == ColumnType::Bool => Ok(ColumnType::Bool),
                    _ => Err(EvalError::Type(format!("cannot apply {op:?} to {t}"))),
                }
            }
            Expr::Between { input, lo, hi } => {
                let t = input.output_type(schema)?;
                let tl = lo.output_type(schema)?;
                let th = hi.output_type(schema)?;
                if t.is_numeric() && tl.is_numeric() && th.is_numeric() {
                    Ok(ColumnType::Bool)
                } else {
                    Err(EvalError::Type(format!(
                        "BETWEEN expects numeric operands, got {t}, {tl}, {th}"
                    )))
                }
            }
            Expr::Binary { op, left, right } => {
                let lt = left.output_type(schema)?;
                let rt = right.output_type(schema)?;
                match op {
                    BinaryOp::Add | BinaryOp::Sub | BinaryOp::Mul | BinaryOp::Div => {
                        if lt.is_numeric() && rt.is_numeric() {
                            if lt == ColumnType::Int64 && rt == ColumnType::Int64 {
                                Ok(ColumnType::Int64)
                            } else {
                                Ok(ColumnType::Float64)
                            }
                        } else {
                            Err(EvalError::Type(format!("{} on {lt} and {rt}", op.symbol())))
                        }
                    }
                    BinaryOp::And | BinaryOp::Or => {
                        if lt == ColumnType::Bool && rt == ColumnType::Bool {
                            Ok(ColumnType::Bool)
                        } else {
                            Err(EvalError::Type(format!("{} on {lt} and {rt}", op.symbol())))
                        }
                    }
                    _ => {
                        let compatible = (lt.is_numeric() && rt.is_numeric()) || lt == rt;
                        if compatible {
                            Ok(ColumnType::Bool)
                        } else {
                            Err(EvalError::Type(format!(
                                "cannot compare {lt} with {rt}"
                            )))
                        }
                    }
                }
            }
        }
    }

    pub fn eval(&self, row: &[Value]) -> Result<Value, EvalError> {
        match self {
            Expr::Column(i) => row
                .get(*i)
                .cloned()
                .ok_or(EvalError::ColumnOutOfRange(*i, row.len())),
            Expr::Literal(v) => Ok(v.clone()),
            Expr::Unary { op, input } => {
                let v = input.eval(row)?;
                match (op, v) {
                    (UnaryOp::Neg, Value::Int64(x)) => x
                        .checked_neg()
                        .map(Value::Int64)
                        .ok_or(EvalError::Overflow("negation")),
                    (UnaryOp::Neg, Value::Float64(x)) => Ok(Value::Float64(-x)),
                    (UnaryOp::Not, Value::Bool(b)) => Ok(Value::Bool(!b)),
                    (op, v) => Err(EvalError::Type(format!(
                        "cannot apply {op:?} to {}",
                        v.column_type()
                    ))),
                }
            }
            Expr::Between { input, lo, hi } => {
                let v = input.eval(row)?;
                let l = lo.eval(row)?;
                let h = hi.eval(row)?;
                let (v, l, h) = match (v.as_f64(), l.as_f64(), h.as_f64()) {
                    (Some(v), Some(l), Some(h)) => (v, l, h),
                    _ => return Err(EvalError::Type("BETWEEN on non-numeric".into())),
                };
                Ok(Value::Bool(l <= v && v <= h))
            }
            Expr::Binary { op, left, right } => {
                let l = left.eval(row)?;
                let r = right.eval(row)?;
                eval_binary(*op, l, r)
            }
        }
    }

    /// Evaluates as a predicate; non-bool results are a type error.
    pub fn eval_bool(&self, row: &[Value]) -> Result<bool, EvalError> {
        match self.eval(row)? {
            Value::Bool(b) => Ok(b),
            v => Err(EvalError::Type(format!(
                "predicate evaluated to {}, expected bool",
                v.column_type()
            ))),
        }
    }

    /// Folds constant subtrees and boolean identities bottom-up.
    /// Returns the folded expression and whether anything changed.
    pub fn fold_constants(&self) -> (Expr, bool) {
        match self {
            Expr::Column(_) | Expr::Literal(_) => (self.clone(), false),
            Expr::Unary { op, input } => {
                let (inner, changed) = input.fold_constants();
                if let Expr::Literal(_) = inner {
                    let e = Expr::Unary {
                        op: *op,
                        input: Box::new(inner.clone()),
                    };
                    if let Ok(v) = e.eval(&[]) {
                        return (Expr::Literal(v), true);
                    }
                }
                (
                    Expr::Unary {
                        op: *op,
                        input: Box::new(inner),
                    },
                    changed,
                )
            }
            Expr::Between { input, lo, hi } => {
                let (i, c1) = input.fold_constants();
                let (l, c2) = lo.fold_constants();
                let (h, c3) = hi.fold_constants();
                let e = Expr::Between {
                    input: Box::new(i),
                    lo: Box::new(l),
                    hi: Box::new(h),
                };
                if e.is_constant() {
                    if let Ok(v) = e.eval(&[]) {
                        return (Expr::Literal(v), true);
                    }
                }
                (e, c1 || c2 || c3)
            }
            Expr::Binary { op, left, right } => {
                let (l, c1) = left.fold_constants();
                let (r, c2) = right.fold_constants();
                // Boolean identities.
                match op {
                    BinaryOp::And => {
                        if let Expr::Literal(Value::Bool(true)) = l {
                            return (r, true);
                        }
                        if let Expr::Literal(Value::Bool(true)) = r {
                            return (l, true);
                        }
                        if matches!(l, Expr::Literal(Value::Bool(false)))
                            || matches!(r, Expr::Literal(Value::Bool(false)))
                        {
                            return (Expr::Literal(Value::Bool(false)), true);
                        }
                    }
                    BinaryOp::Or => {
                        if let Expr::Literal(Value::Bool(false)) = l {
                            return (r, true);
                        }
                        if let Expr::Literal(Value::Bool(false)) = r {
                            return (l, true);
                        }
                        if matches!(l, Expr::Literal(Value::Bool(true)))
                            || matches!(r, Expr::Literal(Value::Bool(true)))
                        {
                            return (Expr::Literal(Value::Bool(true)), true);
                        }
                    }
                    _ => {}
                }
                let e = Expr::Binary {
                    op: *op,
                    left: Box::new(l),
                    right: Box::new(r),
                };
                if e.is_constant() {
                    if let Ok(v) = e.eval(&[]) {
                        return (Expr::Literal(v), true);
                    }
                }
                (e, c1 || c2)
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Column(_) => false,
            Expr::Literal(_) => true,
            Expr::Unary { input, .. } => input.is_constant(),
            Expr::Binary { left, right, .. } => left.is_constant() && right.is_constant(),
            Expr::Between { input, lo, hi } => {
                input.is_constant() && lo.is_constant() && hi.is_constant()
            }
        }
    }

    /// Canonical byte encoding: commutative operands are emitted in sorted
    /// order so operand order never affects downstream fingerprints.
    pub fn canonical_encode(&self, out: &mut Vec<u8>) {
        match self {
            Expr::Column(i) => {
                out.push(b'c');
                out.extend_from_slice(&(*i as u64).to_be_bytes());
            }
            Expr::Literal(v) => {
                out.push(b'l');
                v.encode_into(out);
            }
            Expr::Unary { op, input } => {
                out.push(b'u');
                out.push(*op as u8);
                input.canonical_encode(out);
            }
            Expr::Between { input, lo, hi } => {
                out.push(b'b');
                input.canonical_encode(out);
                lo.canonical_encode(out);
                hi.canonical_encode(out);
            }
            Expr::Binary { op, left, right } => {
                if *op == BinaryOp::And {
                    // Conjunct order is irrelevant: encode sorted terms.
                    let mut encoded: Vec<Vec<u8>> = self
                        .split_conjuncts()
                        .iter()
                        .map(|t| {
                            let mut b = Vec::new();
                            t.canonical_encode(&mut b);
                            b
                        })
                        .collect();
                    encoded.sort();
                    out.push(b'A');
                    out.extend_from_slice(&(encoded.len() as u64).to_be_bytes());
                    for e in encoded {
                        out.extend_from_slice(&e);
                    }
                    return;
                }
                let mut lb = Vec::new();
                let mut rb = Vec::new();
                left.canonical_encode(&mut lb);
                right.canonical_encode(&mut rb);
                if op.is_commutative() && rb < lb {
                    std::mem::swap(&mut lb, &mut rb);
                }
                out.push(b'B');
                out.push(op.symbol().as_bytes()[0]);
                out.push(*op as u8);
                out.extend_from_slice(&lb);
                out.extend_from_slice(&rb);
            }
        }
    }
}

fn eval_binary(op: BinaryOp, l: Value, r: Value) -> Result<Value, EvalError> {
    use BinaryOp::*;
    match op {
        And | Or => match (l.as_bool(), r.as_bool()) {
            (Some(a), Some(b)) => Ok(Value::Bool(if op == And { a && b } else { a || b })),
            _ => Err(EvalError::Type("logical op on non-bool".into())),
        },
        Add | Sub | Mul | Div => match (&l, &r) {
            (Value::Int64(a), Value::Int64(b)) => {
                let v = match op {
                    Add => a.checked_add(*b).ok_or(EvalError::Overflow("+"))?,
                    Sub => a.checked_sub(*b).ok_or(EvalError::Overflow("-"))?,
                    Mul => a.checked_mul(*b).ok_or(EvalError::Overflow("*"))?,
                    Div => {
                        if *b == 0 {
                            return Err(EvalError::DivideByZero);
                        }
                        a / b
                    }
                    _ => unreachable!(),
                };
                Ok(Value::Int64(v))
            }
            _ => match (l.as_f64(), r.as_f64()) {
                (Some(a), Some(b)) => {
                    if op == Div && b == 0.0 {
                        return Err(EvalError::DivideByZero);
                    }
                    let v = match op {
                        Add => a + b,
                        Sub => a - b,
                        Mul => a * b,
                        Div => a / b,
                        _ => unreachable!(),
                    };
                    Ok(Value::Float64(v))
                }
                _ => Err(EvalError::Type(format!(
                    "arithmetic on {} and {}",
                    l.column_type(),
                    r.column_type()
                ))),
            },
        },
        Eq | Ne | Lt | Le | Gt | Ge => {
            let ord = match (&l, &r) {
                (Value::Text(a), Value::Text(b)) => a.cmp(b),
                (Value::Bool(a), Value::Bool(b)) => a.cmp(b),
                _ => match (l.as_f64(), r.as_f64()) {
                    (Some(a), Some(b)) => {
                        a.partial_cmp(&b).ok_or(EvalError::Type("NaN compare".into()))?
                    }
                    _ => {
                        return Err(EvalError::Type(format!(
                            "cannot compare {} with {}",
                            l.column_type(),
                            r.column_type()
                        )))
                    }
                },
            };
            let b = match op {
                Eq => ord.is_eq(),
                Ne => !ord.is_eq(),
                Lt => ord.is_lt(),
                Le => ord.is_le(),
                Gt => ord.is_gt(),
                Ge => ord.is_ge(),
                _ => unreachable!(),
            };
            Ok(Value::Bool(b))
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Column(i) => write!(f, "#{i}"),
            Expr::Literal(Value::Text(s)) => write!(f, "'{s}'"),
            Expr::Literal(v) => write!(f, "{v}"),
            Expr::Unary { op: UnaryOp::Neg, input } => write!(f, "-({input})"),
            Expr::Unary { op: UnaryOp::Not, input } => write!(f, "NOT ({input})"),
            Expr::Between { input, lo, hi } => write!(f, "{input} BETWEEN {lo} AND {hi}"),
            Expr::Binary { op, left, right } => write!(f, "({left} {} {right})", op.symbol()),
        }
    }
}
