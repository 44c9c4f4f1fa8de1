//! Abstract syntax of the extended dialect: standard SELECT with one WITH
//! nesting level, PREDICT blocks as from-items, model DDL, and the table
//! DDL/DML the shell needs. Nodes carry no source positions; those live in
//! parser errors only, so parsed trees compare structurally.

use crate::expr::{BinaryOp, UnaryOp};

#[derive(Debug, Clone, PartialEq)]
pub enum Statement {
    Select(SelectStmt),
    CreateModel(CreateModelStmt),
    DropModel(String),
    CreateTable(CreateTableStmt),
    Insert(InsertStmt),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectStmt {
    pub with: Vec<(String, SelectCore)>,
    pub body: SelectCore,
    pub order_by: Vec<OrderKey>,
    pub limit: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderKey {
    pub expr: AstExpr,
    pub desc: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectCore {
    pub projections: Vec<Projection>,
    pub from: Vec<FromItem>,
    pub where_clause: Option<AstExpr>,
    pub group_by: Vec<AstExpr>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Projection {
    Star,
    Expr { expr: AstExpr, alias: Option<String> },
}

/// One entry of a FROM clause. The first item carries `JoinSpec::First`;
/// every later item is joined to the accumulated left side.
#[derive(Debug, Clone, PartialEq)]
pub struct FromItem {
    pub source: FromSource,
    pub join: JoinSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub enum JoinSpec {
    First,
    Inner(AstExpr),
    Cross,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FromSource {
    Table {
        name: String,
        alias: Option<String>,
    },
    Subquery {
        core: Box<SelectCore>,
        alias: String,
    },
    Predict {
        block: Box<PredictBlock>,
        alias: String,
    },
}

/// `PREDICT VALUE OF <target> WITH PRIMARY KEY <key> FROM ... [WHERE ...]
/// (TRAIN ON <cols> | USING MODEL <name>)`
#[derive(Debug, Clone, PartialEq)]
pub struct PredictBlock {
    pub target: ColRef,
    pub key: ColRef,
    pub from: Vec<FromItem>,
    pub where_clause: Option<AstExpr>,
    pub spec: PredictSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PredictSpec {
    /// Feature columns to train on per query. May include the primary key.
    TrainOn(Vec<ColRef>),
    /// Inference-only form over a registered model.
    UsingModel(String),
}

/// Possibly qualified column reference.
#[derive(Debug, Clone, PartialEq)]
pub struct ColRef {
    pub qualifier: Option<String>,
    pub name: String,
}

impl ColRef {
    pub fn new(qualifier: Option<&str>, name: &str) -> ColRef {
        ColRef {
            qualifier: qualifier.map(str::to_string),
            name: name.to_string(),
        }
    }
}

impl std::fmt::Display for ColRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.qualifier {
            Some(q) => write!(f, "{q}.{}", self.name),
            None => f.write_str(&self.name),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggFunc {
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

impl AggFunc {
    pub fn name(self) -> &'static str {
        match self {
            AggFunc::Count => "count",
            AggFunc::Sum => "sum",
            AggFunc::Avg => "avg",
            AggFunc::Min => "min",
            AggFunc::Max => "max",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AstExpr {
    Column(ColRef),
    IntLit(i64),
    FloatLit(f64),
    StringLit(String),
    BoolLit(bool),
    Binary {
        op: BinaryOp,
        left: Box<AstExpr>,
        right: Box<AstExpr>,
    },
    Unary {
        op: UnaryOp,
        input: Box<AstExpr>,
    },
    Between {
        input: Box<AstExpr>,
        lo: Box<AstExpr>,
        hi: Box<AstExpr>,
    },
    /// Aggregate call; `None` argument is `COUNT(*)`.
    Agg {
        func: AggFunc,
        arg: Option<Box<AstExpr>>,
    },
}

impl AstExpr {
    pub fn contains_aggregate(&self) -> bool {
        match self {
            AstExpr::Agg { .. } => true,
            AstExpr::Binary { left, right, .. } => {
                left.contains_aggregate() || right.contains_aggregate()
            }
            AstExpr::Unary { input, .. } => input.contains_aggregate(),
            AstExpr::Between { input, lo, hi } => {
                input.contains_aggregate() || lo.contains_aggregate() || hi.contains_aggregate()
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CreateModelStmt {
    pub name: String,
    pub kind: String,
    pub table: String,
    pub features: Vec<String>,
    pub target: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CreateTableStmt {
    pub name: String,
    /// (column, type name, is primary key)
    pub columns: Vec<(String, String, bool)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InsertStmt {
    pub table: String,
    pub rows: Vec<Vec<AstExpr>>,
}
