//! Name resolution and type checking: turns parsed statements into bound
//! statements whose column references are ordinals and whose model names are
//! pinned (name, version) pairs.
//!
//! WITH-clause subqueries are inlined at their use sites; identical inlined
//! subtrees are merged again later by fingerprint-based sharing, so inlining
//! costs nothing at execution time.

use super::ast::{self, AstExpr, ColRef, FromSource, JoinSpec, PredictSpec, Projection, Statement};
use crate::catalog::{Catalog, ColumnRef, TableDef};
use crate::expr::Expr;
use crate::model::ModelKind;
use crate::types::{ColumnType, ModelVersion, TableId, Value};
use std::collections::BTreeMap;
use thiserror::Error;

pub use super::ast::AggFunc;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BindError {
    #[error("unknown table '{0}'")]
    UnknownTable(String),
    #[error("unknown column '{0}'")]
    UnknownColumn(String),
    #[error("ambiguous column '{0}'")]
    AmbiguousColumn(String),
    #[error("unknown model '{0}'")]
    UnknownModel(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("invalid aggregate: {0}")]
    InvalidAggregate(String),
    #[error("unknown model kind '{0}'")]
    InvalidModelKind(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundStatement {
    Select(BoundSelect),
    CreateModel(BoundCreateModel),
    DropModel(String),
    CreateTable(TableDef),
    Insert {
        table: TableId,
        rows: Vec<Vec<Value>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCreateModel {
    pub name: String,
    pub kind: ModelKind,
    pub table: TableId,
    pub table_name: String,
    pub feature_columns: Vec<ColumnRef>,
    pub feature_names: Vec<String>,
    pub target_column: Option<ColumnRef>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundSelect {
    pub core: BoundCore,
    /// Sort keys over the core's output schema.
    pub order_by: Vec<(Expr, bool)>,
    pub limit: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCore {
    pub from: Vec<BoundFrom>,
    /// Filter over the concatenated input schema.
    pub where_clause: Option<Expr>,
    pub input_schema: Vec<(String, ColumnType)>,
    pub kind: CoreKind,
    pub output: Vec<(String, ColumnType)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CoreKind {
    /// Plain projection over the input schema.
    Project(Vec<(Expr, String)>),
    /// Grouped aggregation; `projection` is over the aggregate output
    /// schema `[group keys..., aggregate values...]`.
    Aggregate {
        group_by: Vec<Expr>,
        aggs: Vec<BoundAgg>,
        projection: Vec<(Expr, String)>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundAgg {
    pub func: AggFunc,
    /// `None` is `COUNT(*)`.
    pub arg: Option<Expr>,
    pub output_type: ColumnType,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundFrom {
    pub source: BoundSource,
    pub join: BoundJoin,
    /// Offset of this item's columns in the concatenated schema.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundSource {
    Table {
        id: TableId,
        name: String,
        schema: Vec<(String, ColumnType)>,
    },
    Sub(Box<BoundCore>),
    Predict(Box<BoundPredict>),
}

impl BoundSource {
    pub fn output(&self) -> Vec<(String, ColumnType)> {
        match self {
            BoundSource::Table { schema, .. } => schema.clone(),
            BoundSource::Sub(core) => core.output.clone(),
            BoundSource::Predict(p) => p.output.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundJoin {
    First,
    /// Condition over the concatenation of all items up to and including
    /// this one.
    Inner(Expr),
    Cross,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundPredict {
    /// Relational input: the PREDICT block's FROM/WHERE with a pass-through
    /// projection.
    pub input: BoundCore,
    /// Ordinal of the prediction target in the input output.
    pub target: usize,
    pub target_name: String,
    /// Ordinal of the primary-key column in the input output.
    pub key: usize,
    pub key_name: String,
    pub spec: BoundPredictSpec,
    /// `[key column, predicted column]`.
    pub output: Vec<(String, ColumnType)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundPredictSpec {
    /// Train per query on the block's input at the pinned snapshot.
    TrainOn { features: Vec<usize> },
    /// Infer with a registered model; features matched by registered name.
    UsingModel {
        model: ModelVersion,
        kind: ModelKind,
        features: Vec<usize>,
    },
}

/// Resolution scope: the from-items visible to an expression.
struct Scope {
    items: Vec<ScopeItem>,
}

struct ScopeItem {
    qualifier: Option<String>,
    columns: Vec<(String, ColumnType)>,
    offset: usize,
}

impl Scope {
    fn width(&self) -> usize {
        self.items
            .last()
            .map(|i| i.offset + i.columns.len())
            .unwrap_or(0)
    }

    fn schema(&self) -> Vec<(String, ColumnType)> {
        let mut out = Vec::with_capacity(self.width());
        for item in &self.items {
            out.extend(item.columns.iter().cloned());
        }
        out
    }

    fn types(&self) -> Vec<ColumnType> {
        self.schema().into_iter().map(|(_, t)| t).collect()
    }

    fn resolve(&self, colref: &ColRef) -> Result<(usize, ColumnType), BindError> {
        let mut found: Option<(usize, ColumnType)> = None;
        for item in &self.items {
            if let Some(q) = &colref.qualifier {
                if item.qualifier.as_deref() != Some(q.as_str()) {
                    continue;
                }
            }
            for (i, (name, ty)) in item.columns.iter().enumerate() {
                if name == &colref.name {
                    if found.is_some() {
                        return Err(BindError::AmbiguousColumn(colref.to_string()));
                    }
                    found = Some((item.offset + i, *ty));
                }
            }
        }
        found.ok_or_else(|| BindError::UnknownColumn(colref.to_string()))
    }
}

/// Binds a parsed statement against the catalog.
pub fn bind(stmt: &Statement, catalog: &Catalog) -> Result<BoundStatement, BindError> {
    match stmt {
        Statement::Select(s) => {
            let mut ctes = BTreeMap::new();
            for (name, core) in &s.with {
                let bound = bind_core(core, &ctes, catalog)?;
                ctes.insert(name.clone(), bound);
            }
            let core = bind_core(&s.body, &ctes, catalog)?;
            // ORDER BY resolves against output column names; qualifiers are
            // ignored because the projection has already renamed columns.
            let order_scope = Scope {
                items: vec![ScopeItem {
                    qualifier: None,
                    columns: core.output.clone(),
                    offset: 0,
                }],
            };
            let mut order_by = Vec::new();
            for key in &s.order_by {
                let e = bind_scalar(&strip_qualifiers(&key.expr), &order_scope)?;
                let ty = type_of(&e, &order_scope.types())?;
                if ty == ColumnType::Vector {
                    return Err(BindError::TypeMismatch(
                        "cannot ORDER BY a vector column".into(),
                    ));
                }
                order_by.push((e, key.desc));
            }
            Ok(BoundStatement::Select(BoundSelect {
                core,
                order_by,
                limit: s.limit,
            }))
        }
        Statement::CreateModel(m) => bind_create_model(m, catalog),
        Statement::DropModel(name) => {
            if catalog.get_model(name, None).is_none() {
                return Err(BindError::UnknownModel(name.clone()));
            }
            Ok(BoundStatement::DropModel(name.clone()))
        }
        Statement::CreateTable(t) => {
            let mut columns = Vec::new();
            let mut pk = None;
            for (name, ty_name, is_pk) in &t.columns {
                let ty = ColumnType::parse(ty_name)
                    .ok_or_else(|| BindError::Invalid(format!("unknown type '{ty_name}'")))?;
                if *is_pk {
                    pk = Some(name.clone());
                }
                columns.push((name.clone(), ty));
            }
            let pk = pk.unwrap_or_else(|| t.columns[0].0.clone());
            let def = TableDef::new(t.name.clone(), columns, pk)
                .map_err(|e| BindError::Invalid(e.to_string()))?;
            Ok(BoundStatement::CreateTable(def))
        }
        Statement::Insert(ins) => {
            let id = catalog
                .table_id(&ins.table)
                .ok_or_else(|| BindError::UnknownTable(ins.table.clone()))?;
            let mut rows = Vec::new();
            for row in &ins.rows {
                let mut values = Vec::new();
                for e in row {
                    let bound = bind_scalar(e, &Scope { items: vec![] })?;
                    if !bound.is_constant() {
                        return Err(BindError::Invalid(
                            "INSERT values must be constants".into(),
                        ));
                    }
                    values.push(
                        bound
                            .eval(&[])
                            .map_err(|e| BindError::TypeMismatch(e.to_string()))?,
                    );
                }
                rows.push(values);
            }
            Ok(BoundStatement::Insert { table: id, rows })
        }
    }
}

fn bind_create_model(
    m: &ast::CreateModelStmt,
    catalog: &Catalog,
) -> Result<BoundStatement, BindError> {
    let kind =
        ModelKind::parse(&m.kind).ok_or_else(|| BindError::InvalidModelKind(m.kind.clone()))?;
    let table = catalog
        .table_id(&m.table)
        .ok_or_else(|| BindError::UnknownTable(m.table.clone()))?;
    let def = catalog
        .table_def(table)
        .map_err(|e| BindError::Invalid(e.to_string()))?;
    let mut feature_columns = Vec::new();
    for f in &m.features {
        let idx = def
            .column_index(f)
            .ok_or_else(|| BindError::UnknownColumn(f.clone()))?;
        feature_columns.push(ColumnRef {
            table,
            column: idx,
        });
    }
    let target_column = match &m.target {
        None => None,
        Some(t) => {
            let idx = def
                .column_index(t)
                .ok_or_else(|| BindError::UnknownColumn(t.clone()))?;
            if kind == ModelKind::RidgeRegressor && !def.columns[idx].1.is_numeric() {
                return Err(BindError::TypeMismatch(format!(
                    "ridge target '{t}' must be numeric"
                )));
            }
            Some(ColumnRef {
                table,
                column: idx,
            })
        }
    };
    if kind == ModelKind::RidgeRegressor && target_column.is_none() {
        return Err(BindError::TypeMismatch(
            "ridge_regressor requires a TARGET column".into(),
        ));
    }
    Ok(BoundStatement::CreateModel(BoundCreateModel {
        name: m.name.clone(),
        kind,
        table,
        table_name: m.table.clone(),
        feature_columns,
        feature_names: m.features.clone(),
        target_column,
    }))
}

fn bind_core(
    core: &ast::SelectCore,
    ctes: &BTreeMap<String, BoundCore>,
    catalog: &Catalog,
) -> Result<BoundCore, BindError> {
    let mut scope = Scope { items: vec![] };
    let mut from = Vec::new();
    for item in &core.from {
        let offset = scope.width();
        let (source, qualifier, columns) = bind_source(&item.source, ctes, catalog)?;
        scope.items.push(ScopeItem {
            qualifier,
            columns: columns.clone(),
            offset,
        });
        let join = match &item.join {
            JoinSpec::First => BoundJoin::First,
            JoinSpec::Cross => BoundJoin::Cross,
            JoinSpec::Inner(on) => {
                let e = bind_scalar(on, &scope)?;
                expect_bool(&e, &scope, "JOIN condition")?;
                BoundJoin::Inner(e)
            }
        };
        from.push(BoundFrom {
            source,
            join,
            offset,
        });
    }

    let where_clause = match &core.where_clause {
        None => None,
        Some(w) => {
            if w.contains_aggregate() {
                return Err(BindError::InvalidAggregate(
                    "aggregates are not allowed in WHERE".into(),
                ));
            }
            let e = bind_scalar(w, &scope)?;
            expect_bool(&e, &scope, "WHERE clause")?;
            Some(e)
        }
    };

    let input_schema = scope.schema();
    let has_agg = !core.group_by.is_empty()
        || core.projections.iter().any(|p| match p {
            Projection::Star => false,
            Projection::Expr { expr, .. } => expr.contains_aggregate(),
        });

    let (kind, output) = if has_agg {
        bind_aggregate_core(core, &scope)?
    } else {
        let mut projections = Vec::new();
        for (i, p) in core.projections.iter().enumerate() {
            match p {
                Projection::Star => {
                    for (ord, (name, _)) in input_schema.iter().enumerate() {
                        projections.push((Expr::Column(ord), name.clone()));
                    }
                }
                Projection::Expr { expr, alias } => {
                    let e = bind_scalar(expr, &scope)?;
                    let name = alias.clone().unwrap_or_else(|| derive_name(expr, i));
                    projections.push((e, name));
                }
            }
        }
        let types = scope.types();
        let mut output = Vec::new();
        for (e, name) in &projections {
            output.push((name.clone(), type_of(e, &types)?));
        }
        (CoreKind::Project(projections), output)
    };

    Ok(BoundCore {
        from,
        where_clause,
        input_schema,
        kind,
        output,
    })
}

fn bind_aggregate_core(
    core: &ast::SelectCore,
    scope: &Scope,
) -> Result<(CoreKind, Vec<(String, ColumnType)>), BindError> {
    let types = scope.types();
    let mut group_by = Vec::new();
    for g in &core.group_by {
        if g.contains_aggregate() {
            return Err(BindError::InvalidAggregate(
                "aggregates are not allowed in GROUP BY".into(),
            ));
        }
        group_by.push(bind_scalar(g, scope)?);
    }
    let mut aggs: Vec<BoundAgg> = Vec::new();
    let mut projection = Vec::new();

    // Rewrites a projection expression into one over the aggregate output
    // schema [group keys..., aggregate values...].
    fn rewrite(
        e: &AstExpr,
        scope: &Scope,
        types: &[ColumnType],
        group_by: &[Expr],
        aggs: &mut Vec<BoundAgg>,
    ) -> Result<Expr, BindError> {
        if let AstExpr::Agg { func, arg } = e {
            let bound_arg = match arg {
                None => None,
                Some(a) => {
                    if a.contains_aggregate() {
                        return Err(BindError::InvalidAggregate("nested aggregate".into()));
                    }
                    Some(bind_scalar(a, scope)?)
                }
            };
            let output_type = agg_output_type(*func, bound_arg.as_ref(), types)?;
            let candidate = BoundAgg {
                func: *func,
                arg: bound_arg,
                output_type,
            };
            let idx = match aggs.iter().position(|a| *a == candidate) {
                Some(i) => i,
                None => {
                    aggs.push(candidate);
                    aggs.len() - 1
                }
            };
            return Ok(Expr::Column(group_by.len() + idx));
        }
        // A non-aggregate subtree must match a GROUP BY expression.
        if !e.contains_aggregate() {
            let bound = bind_scalar(e, scope)?;
            if let Some(i) = group_by.iter().position(|g| *g == bound) {
                return Ok(Expr::Column(i));
            }
            if bound.is_constant() {
                return Ok(bound);
            }
            return Err(BindError::InvalidAggregate(format!(
                "projection '{bound}' is neither aggregated nor grouped"
            )));
        }
        match e {
            AstExpr::Binary { op, left, right } => Ok(Expr::Binary {
                op: *op,
                left: Box::new(rewrite(left, scope, types, group_by, aggs)?),
                right: Box::new(rewrite(right, scope, types, group_by, aggs)?),
            }),
            AstExpr::Unary { op, input } => Ok(Expr::Unary {
                op: *op,
                input: Box::new(rewrite(input, scope, types, group_by, aggs)?),
            }),
            AstExpr::Between { input, lo, hi } => Ok(Expr::Between {
                input: Box::new(rewrite(input, scope, types, group_by, aggs)?),
                lo: Box::new(rewrite(lo, scope, types, group_by, aggs)?),
                hi: Box::new(rewrite(hi, scope, types, group_by, aggs)?),
            }),
            _ => unreachable!("aggregate-bearing leaf"),
        }
    }

    for (i, p) in core.projections.iter().enumerate() {
        match p {
            Projection::Star => {
                return Err(BindError::InvalidAggregate(
                    "SELECT * cannot be combined with aggregation".into(),
                ))
            }
            Projection::Expr { expr, alias } => {
                let e = rewrite(expr, scope, &types, &group_by, &mut aggs)?;
                let name = alias.clone().unwrap_or_else(|| derive_name(expr, i));
                projection.push((e, name));
            }
        }
    }

    // Output types of projections over the aggregate schema.
    let mut agg_schema: Vec<ColumnType> = Vec::new();
    for g in &group_by {
        agg_schema.push(type_of(g, &types)?);
    }
    for a in &aggs {
        agg_schema.push(a.output_type);
    }
    let mut output = Vec::new();
    for (e, name) in &projection {
        output.push((name.clone(), type_of(e, &agg_schema)?));
    }
    Ok((
        CoreKind::Aggregate {
            group_by,
            aggs,
            projection,
        },
        output,
    ))
}

fn agg_output_type(
    func: AggFunc,
    arg: Option<&Expr>,
    types: &[ColumnType],
) -> Result<ColumnType, BindError> {
    match func {
        AggFunc::Count => Ok(ColumnType::Int64),
        AggFunc::Avg => {
            let t = arg_type(func, arg, types)?;
            if !t.is_numeric() {
                return Err(BindError::TypeMismatch(format!("AVG over {t}")));
            }
            Ok(ColumnType::Float64)
        }
        AggFunc::Sum => {
            let t = arg_type(func, arg, types)?;
            if !t.is_numeric() {
                return Err(BindError::TypeMismatch(format!("SUM over {t}")));
            }
            Ok(t)
        }
        AggFunc::Min | AggFunc::Max => {
            let t = arg_type(func, arg, types)?;
            if t == ColumnType::Vector {
                return Err(BindError::TypeMismatch("MIN/MAX over vector".into()));
            }
            Ok(t)
        }
    }
}

fn arg_type(
    func: AggFunc,
    arg: Option<&Expr>,
    types: &[ColumnType],
) -> Result<ColumnType, BindError> {
    match arg {
        Some(e) => type_of(e, types),
        None => Err(BindError::InvalidAggregate(format!(
            "{}(*) is only valid for COUNT",
            func.name()
        ))),
    }
}

/// (source, qualifier, output schema) of a bound from-item.
type SourceBinding = (BoundSource, Option<String>, Vec<(String, ColumnType)>);

fn bind_source(
    source: &FromSource,
    ctes: &BTreeMap<String, BoundCore>,
    catalog: &Catalog,
) -> Result<SourceBinding, BindError> {
    match source {
        FromSource::Table { name, alias } => {
            if let Some(cte) = ctes.get(name) {
                let qualifier = alias.clone().unwrap_or_else(|| name.clone());
                let cols = cte.output.clone();
                return Ok((BoundSource::Sub(Box::new(cte.clone())), Some(qualifier), cols));
            }
            let id = catalog
                .table_id(name)
                .ok_or_else(|| BindError::UnknownTable(name.clone()))?;
            let def = catalog
                .table_def(id)
                .map_err(|e| BindError::Invalid(e.to_string()))?;
            let qualifier = alias.clone().unwrap_or_else(|| name.clone());
            Ok((
                BoundSource::Table {
                    id,
                    name: name.clone(),
                    schema: def.columns.clone(),
                },
                Some(qualifier),
                def.columns,
            ))
        }
        FromSource::Subquery { core, alias } => {
            let bound = bind_core(core, ctes, catalog)?;
            let cols = bound.output.clone();
            Ok((
                BoundSource::Sub(Box::new(bound)),
                Some(alias.clone()),
                cols,
            ))
        }
        FromSource::Predict { block, alias } => {
            let bound = bind_predict(block, ctes, catalog)?;
            let cols = bound.output.clone();
            Ok((
                BoundSource::Predict(Box::new(bound)),
                Some(alias.clone()),
                cols,
            ))
        }
    }
}

fn bind_predict(
    block: &ast::PredictBlock,
    ctes: &BTreeMap<String, BoundCore>,
    catalog: &Catalog,
) -> Result<BoundPredict, BindError> {
    // The block's FROM/WHERE with a pass-through projection of every column.
    let inner = ast::SelectCore {
        projections: vec![Projection::Star],
        from: block.from.clone(),
        where_clause: block.where_clause.clone(),
        group_by: vec![],
    };
    let input = bind_core(&inner, ctes, catalog)?;
    // Rebuild the scope the inner core used, for target/key/feature lookups.
    let mut items = Vec::new();
    {
        let mut offset = 0usize;
        for (f, ast_item) in input.from.iter().zip(&block.from) {
            let columns = f.source.output();
            let qualifier = match &ast_item.source {
                FromSource::Table { name, alias } => {
                    Some(alias.clone().unwrap_or_else(|| name.clone()))
                }
                FromSource::Subquery { alias, .. } | FromSource::Predict { alias, .. } => {
                    Some(alias.clone())
                }
            };
            let width = columns.len();
            items.push(ScopeItem {
                qualifier,
                columns,
                offset,
            });
            offset += width;
        }
    }
    let scope = Scope { items };

    let (target, target_ty) = scope.resolve(&block.target)?;
    let (key, key_ty) = scope.resolve(&block.key)?;
    if key_ty == ColumnType::Vector {
        return Err(BindError::TypeMismatch("primary key cannot be a vector".into()));
    }

    let (spec, predicted_ty) = match &block.spec {
        PredictSpec::TrainOn(cols) => {
            if !target_ty.is_numeric() {
                return Err(BindError::TypeMismatch(format!(
                    "PREDICT target '{}' must be numeric to train on, got {target_ty}",
                    block.target
                )));
            }
            let mut features = Vec::new();
            for c in cols {
                let (ord, _) = scope.resolve(c)?;
                features.push(ord);
            }
            (BoundPredictSpec::TrainOn { features }, ColumnType::Float64)
        }
        PredictSpec::UsingModel(name) => {
            let record = catalog
                .get_model(name, None)
                .ok_or_else(|| BindError::UnknownModel(name.clone()))?;
            // Features are matched by registered column name against the
            // block's input schema.
            let feature_names: Vec<String> = {
                let mut names = Vec::new();
                for col in &record.feature_columns {
                    let def = catalog
                        .table_def(col.table)
                        .map_err(|e| BindError::Invalid(e.to_string()))?;
                    names.push(def.columns[col.column].0.clone());
                }
                names
            };
            let mut features = Vec::new();
            for n in &feature_names {
                let (ord, _) = scope.resolve(&ColRef {
                    qualifier: None,
                    name: n.clone(),
                })?;
                features.push(ord);
            }
            let predicted_ty = match record.kind {
                ModelKind::RidgeRegressor => ColumnType::Float64,
                ModelKind::HashEmbedder => ColumnType::Vector,
                ModelKind::GenerativeMock => ColumnType::Int64,
            };
            (
                BoundPredictSpec::UsingModel {
                    model: record.model_version(),
                    kind: record.kind,
                    features,
                },
                predicted_ty,
            )
        }
    };

    let key_name = block.key.name.clone();
    let target_name = block.target.name.clone();
    let output = vec![
        (key_name.clone(), key_ty),
        (target_name.clone(), predicted_ty),
    ];
    Ok(BoundPredict {
        input,
        target,
        target_name,
        key,
        key_name,
        spec,
        output,
    })
}

fn bind_scalar(e: &AstExpr, scope: &Scope) -> Result<Expr, BindError> {
    match e {
        AstExpr::Column(c) => {
            let (ord, _) = scope.resolve(c)?;
            Ok(Expr::Column(ord))
        }
        AstExpr::IntLit(v) => Ok(Expr::Literal(Value::Int64(*v))),
        AstExpr::FloatLit(v) => Ok(Expr::Literal(Value::Float64(*v))),
        AstExpr::StringLit(s) => Ok(Expr::Literal(Value::Text(s.clone()))),
        AstExpr::BoolLit(b) => Ok(Expr::Literal(Value::Bool(*b))),
        AstExpr::Binary { op, left, right } => Ok(Expr::Binary {
            op: *op,
            left: Box::new(bind_scalar(left, scope)?),
            right: Box::new(bind_scalar(right, scope)?),
        }),
        AstExpr::Unary { op, input } => Ok(Expr::Unary {
            op: *op,
            input: Box::new(bind_scalar(input, scope)?),
        }),
        AstExpr::Between { input, lo, hi } => Ok(Expr::Between {
            input: Box::new(bind_scalar(input, scope)?),
            lo: Box::new(bind_scalar(lo, scope)?),
            hi: Box::new(bind_scalar(hi, scope)?),
        }),
        AstExpr::Agg { .. } => Err(BindError::InvalidAggregate(
            "aggregate in scalar-only context".into(),
        )),
    }
}

fn type_of(e: &Expr, types: &[ColumnType]) -> Result<ColumnType, BindError> {
    e.output_type(types)
        .map_err(|err| BindError::TypeMismatch(err.to_string()))
}

fn expect_bool(e: &Expr, scope: &Scope, what: &str) -> Result<(), BindError> {
    let ty = type_of(e, &scope.types())?;
    if ty != ColumnType::Bool {
        return Err(BindError::TypeMismatch(format!("{what} has type {ty}")));
    }
    Ok(())
}

fn derive_name(e: &AstExpr, index: usize) -> String {
    match e {
        AstExpr::Column(c) => c.name.clone(),
        AstExpr::Agg { func, .. } => func.name().to_string(),
        _ => format!("col{index}"),
    }
}

/// ORDER BY references output columns; qualifiers like `pr.rating` refer to
/// the projected name, so they are dropped before resolution.
fn strip_qualifiers(e: &AstExpr) -> AstExpr {
    match e {
        AstExpr::Column(c) => AstExpr::Column(ColRef {
            qualifier: None,
            name: c.name.clone(),
        }),
        AstExpr::Binary { op, left, right } => AstExpr::Binary {
            op: *op,
            left: Box::new(strip_qualifiers(left)),
            right: Box::new(strip_qualifiers(right)),
        },
        AstExpr::Unary { op, input } => AstExpr::Unary {
            op: *op,
            input: Box::new(strip_qualifiers(input)),
        },
        AstExpr::Between { input, lo, hi } => AstExpr::Between {
            input: Box::new(strip_qualifiers(input)),
            lo: Box::new(strip_qualifiers(lo)),
            hi: Box::new(strip_qualifiers(hi)),
        },
        other => other.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::TenantPolicy;
    use crate::model::CostProfile;
    use crate::sql::parse;

    fn test_catalog() -> Catalog {
        let cat = Catalog::new();
        cat.create_table(
            TableDef::new(
                "users",
                vec![
                    ("user_id".into(), ColumnType::Int64),
                    ("user_age".into(), ColumnType::Int64),
                    ("user_gender".into(), ColumnType::Text),
                ],
                "user_id",
            )
            .unwrap(),
        )
        .unwrap();
        cat.create_table(
            TableDef::new(
                "ratings",
                vec![
                    ("user_id".into(), ColumnType::Int64),
                    ("product_id".into(), ColumnType::Int64),
                    ("rating".into(), ColumnType::Float64),
                ],
                "product_id",
            )
            .unwrap(),
        )
        .unwrap();
        let _ = TenantPolicy::default();
        cat
    }

    pub(crate) const LISTING: &str = "\
WITH ud AS (SELECT user_age, user_gender FROM users WHERE user_id = 42)
SELECT pr.product_id, pr.rating
FROM (
  PREDICT VALUE OF r.rating WITH PRIMARY KEY r.product_id
  FROM ratings r JOIN users u ON r.user_id = u.user_id CROSS JOIN ud
  WHERE u.user_gender = ud.user_gender
     AND u.user_age BETWEEN ud.user_age - 10 AND ud.user_age + 10
  TRAIN ON r.product_id) pr
ORDER BY pr.rating DESC LIMIT 100;";

    #[test]
    fn binds_the_reference_query() {
        let cat = test_catalog();
        let stmt = parse(LISTING).unwrap();
        let bound = bind(&stmt, &cat).unwrap();
        let BoundStatement::Select(s) = bound else {
            panic!()
        };
        assert_eq!(s.limit, Some(100));
        assert_eq!(s.order_by.len(), 1);
        assert!(s.order_by[0].1, "DESC");
        assert_eq!(s.core.output.len(), 2);
        let BoundSource::Predict(p) = &s.core.from[0].source else {
            panic!("expected predict source")
        };
        // Input schema: ratings(3) + users(3) + ud(2)
        assert_eq!(p.input.output.len(), 8);
        assert_eq!(p.target, 2); // ratings.rating
        assert_eq!(p.key, 1); // ratings.product_id
        assert_eq!(p.spec, BoundPredictSpec::TrainOn { features: vec![1] });
    }

    #[test]
    fn unknown_table_and_column_errors() {
        let cat = test_catalog();
        let stmt = parse("SELECT a FROM missing").unwrap();
        assert_eq!(
            bind(&stmt, &cat).unwrap_err(),
            BindError::UnknownTable("missing".into())
        );
        let stmt = parse("SELECT nope FROM users").unwrap();
        assert_eq!(
            bind(&stmt, &cat).unwrap_err(),
            BindError::UnknownColumn("nope".into())
        );
    }

    #[test]
    fn text_int_comparison_is_type_mismatch() {
        let cat = test_catalog();
        let stmt = parse("SELECT user_id FROM users WHERE user_gender > 3").unwrap();
        assert!(matches!(
            bind(&stmt, &cat).unwrap_err(),
            BindError::TypeMismatch(_)
        ));
    }

    #[test]
    fn using_model_resolves_latest_version() {
        let cat = test_catalog();
        let table = cat.table_id("ratings").unwrap();
        let record = crate::catalog::ModelRecord {
            name: "m".into(),
            version: 0,
            kind: ModelKind::RidgeRegressor,
            feature_columns: vec![ColumnRef { table, column: 1 }],
            target_column: Some(ColumnRef { table, column: 2 }),
            weights: crate::model::ridge::weights_to_bytes(&[1.0, 0.0]),
            cost_profile: CostProfile::default(),
            quality_profile: Default::default(),
        };
        cat.register_model(record.clone());
        cat.register_model(record);
        let stmt = parse(
            "SELECT p.product_id FROM (PREDICT VALUE OF r.rating WITH PRIMARY KEY r.product_id FROM ratings r USING MODEL m) p",
        )
        .unwrap();
        let BoundStatement::Select(s) = bind(&stmt, &cat).unwrap() else {
            panic!()
        };
        let BoundSource::Predict(p) = &s.core.from[0].source else {
            panic!()
        };
        match &p.spec {
            BoundPredictSpec::UsingModel { model, .. } => assert_eq!(model.version, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ambiguous_unqualified_column() {
        let cat = test_catalog();
        let stmt =
            parse("SELECT user_id FROM users u JOIN ratings r ON u.user_id = r.user_id").unwrap();
        assert!(matches!(
            bind(&stmt, &cat).unwrap_err(),
            BindError::AmbiguousColumn(_)
        ));
    }

    #[test]
    fn aggregate_projection_must_be_grouped() {
        let cat = test_catalog();
        let stmt = parse("SELECT user_age, COUNT(*) FROM users").unwrap();
        assert!(matches!(
            bind(&stmt, &cat).unwrap_err(),
            BindError::InvalidAggregate(_)
        ));
        let stmt = parse("SELECT user_age, COUNT(*) FROM users GROUP BY user_age").unwrap();
        assert!(bind(&stmt, &cat).is_ok());
    }
}
