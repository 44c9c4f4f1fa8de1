//! Shared test support: a naive reference interpreter over logical plans,
//! random table/plan generators, and multiset comparison helpers.
//!
//! The interpreter is deliberately simple (nested-loop joins, linear-scan
//! grouping, direct recursion) and independent of the execution engine's
//! operator implementations, so it can serve as the semantics oracle for
//! rewrites and shared execution.

#![allow(dead_code)]

pub mod optimizer_oracle;

use neurq_core::catalog::{Catalog, Row, RowSet, TableDef};
use neurq_core::expr::{BinaryOp, Expr};
use neurq_core::model::{embed::Embedder, generative::GenerativeMock, ridge, ModelKind};
use neurq_core::plan::{InferModel, JoinKind, LogicalNode, LogicalOp, PlanRef};
use neurq_core::sql::binder::AggFunc;
use neurq_core::types::{ColumnType, SnapshotVersion, TableId, Value};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct InterpreterEnv<'a> {
    pub catalog: &'a Catalog,
    pub pin: SnapshotVersion,
    pub lambda: f64,
    pub hash_buckets: usize,
    pub embed_dim: usize,
    pub generative_seed: u64,
}

impl<'a> InterpreterEnv<'a> {
    pub fn new(catalog: &'a Catalog, pin: SnapshotVersion) -> InterpreterEnv<'a> {
        InterpreterEnv {
            catalog,
            pin,
            lambda: 1e-3,
            hash_buckets: 32,
            embed_dim: 64,
            generative_seed: neurq_core::types::derive_seed(0, "generative", 0),
        }
    }
}

/// Directly evaluates a logical plan, recursively.
pub fn interpret(node: &PlanRef, env: &InterpreterEnv) -> Result<RowSet, String> {
    let children: Vec<RowSet> = node
        .children()
        .iter()
        .map(|c| interpret(c, env))
        .collect::<Result<_, _>>()?;
    match &node.op {
        LogicalOp::Unit => Ok(RowSet {
            columns: vec![],
            rows: vec![Row {
                values: vec![],
                commit: SnapshotVersion::ZERO,
            }],
        }),
        LogicalOp::Scan { table, cols, .. } => env
            .catalog
            .scan(*table, env.pin, Some(cols), None)
            .map_err(|e| e.to_string()),
        LogicalOp::Select { predicate, .. } => {
            let input = &children[0];
            let mut rows = Vec::new();
            for r in &input.rows {
                if predicate.eval_bool(&r.values).map_err(|e| e.to_string())? {
                    rows.push(r.clone());
                }
            }
            Ok(RowSet {
                columns: input.columns.clone(),
                rows,
            })
        }
        LogicalOp::Project { exprs, .. } => {
            let input = &children[0];
            let mut rows = Vec::new();
            for r in &input.rows {
                let values: Vec<Value> = exprs
                    .iter()
                    .map(|(e, _)| e.eval(&r.values))
                    .collect::<Result<_, _>>()
                    .map_err(|e| e.to_string())?;
                rows.push(Row {
                    values,
                    commit: r.commit,
                });
            }
            Ok(RowSet {
                columns: node.schema.clone(),
                rows,
            })
        }
        LogicalOp::Join {
            kind, condition, ..
        } => {
            let (left, right) = (&children[0], &children[1]);
            let mut rows = Vec::new();
            for l in &left.rows {
                for r in &right.rows {
                    let mut values = l.values.clone();
                    values.extend(r.values.iter().cloned());
                    if let Some(c) = condition {
                        if !c.eval_bool(&values).map_err(|e| e.to_string())? {
                            continue;
                        }
                    }
                    rows.push(Row {
                        values,
                        commit: l.commit.max(r.commit),
                    });
                }
            }
            let _ = kind;
            Ok(RowSet {
                columns: node.schema.clone(),
                rows,
            })
        }
        LogicalOp::Aggregate {
            group_by, aggs, ..
        } => {
            let input = &children[0];
            // Linear-scan grouping, deliberately different from the engine's
            // hash aggregation.
            let mut keys: Vec<Vec<Value>> = Vec::new();
            let mut members: Vec<Vec<usize>> = Vec::new();
            for (i, r) in input.rows.iter().enumerate() {
                let k: Vec<Value> = group_by
                    .iter()
                    .map(|g| g.eval(&r.values))
                    .collect::<Result<_, _>>()
                    .map_err(|e| e.to_string())?;
                match keys.iter().position(|existing| {
                    existing
                        .iter()
                        .zip(&k)
                        .all(|(a, b)| a.cmp_total(b).is_eq())
                }) {
                    Some(g) => members[g].push(i),
                    None => {
                        keys.push(k);
                        members.push(vec![i]);
                    }
                }
            }
            if keys.is_empty() && group_by.is_empty() {
                keys.push(vec![]);
                members.push(vec![]);
            }
            let mut rows = Vec::new();
            for (k, idxs) in keys.into_iter().zip(members) {
                let mut values = k;
                let mut commit = SnapshotVersion::ZERO;
                for a in aggs {
                    let mut args = Vec::new();
                    for &i in &idxs {
                        commit = commit.max(input.rows[i].commit);
                        match &a.arg {
                            None => args.push(Value::Int64(1)),
                            Some(e) => args.push(
                                e.eval(&input.rows[i].values).map_err(|e| e.to_string())?,
                            ),
                        }
                    }
                    // Sums add in canonical bit order (the operator's
                    // contract), so results do not depend on row order.
                    let ordered_sum = || {
                        let mut xs: Vec<f64> =
                            args.iter().filter_map(Value::as_f64).collect();
                        xs.sort_by_key(|x| x.to_bits());
                        xs.iter().sum::<f64>()
                    };
                    let v = match a.func {
                        AggFunc::Count => Value::Int64(args.len() as i64),
                        AggFunc::Sum => {
                            if a.output_type == ColumnType::Int64 {
                                Value::Int64(ordered_sum() as i64)
                            } else {
                                Value::Float64(ordered_sum())
                            }
                        }
                        AggFunc::Avg => {
                            Value::Float64(ordered_sum() / args.len().max(1) as f64)
                        }
                        AggFunc::Min => args
                            .iter()
                            .cloned()
                            .min_by(|x, y| x.cmp_total(y))
                            .ok_or("empty MIN")?,
                        AggFunc::Max => args
                            .iter()
                            .cloned()
                            .max_by(|x, y| x.cmp_total(y))
                            .ok_or("empty MAX")?,
                    };
                    values.push(v);
                }
                rows.push(Row { values, commit });
            }
            Ok(RowSet {
                columns: node.schema.clone(),
                rows,
            })
        }
        LogicalOp::Sort { keys, .. } => {
            let input = &children[0];
            let mut rows = input.rows.clone();
            let evaluated: Vec<Vec<Value>> = rows
                .iter()
                .map(|r| {
                    keys.iter()
                        .map(|(e, _)| e.eval(&r.values))
                        .collect::<Result<_, _>>()
                })
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?;
            let encodings: Vec<Vec<u8>> = rows
                .iter()
                .map(|r| {
                    let mut b = Vec::new();
                    for v in &r.values {
                        v.encode_into(&mut b);
                    }
                    b
                })
                .collect();
            let mut order: Vec<usize> = (0..rows.len()).collect();
            order.sort_by(|&a, &b| {
                for (i, (_, desc)) in keys.iter().enumerate() {
                    let ord = evaluated[a][i].cmp_total(&evaluated[b][i]);
                    let ord = if *desc { ord.reverse() } else { ord };
                    if !ord.is_eq() {
                        return ord;
                    }
                }
                encodings[a].cmp(&encodings[b]).then_with(|| a.cmp(&b))
            });
            rows = order.into_iter().map(|i| rows[i].clone()).collect();
            Ok(RowSet {
                columns: input.columns.clone(),
                rows,
            })
        }
        LogicalOp::Limit { count, .. } => {
            let input = &children[0];
            Ok(RowSet {
                columns: input.columns.clone(),
                rows: input.rows.iter().take(*count as usize).cloned().collect(),
            })
        }
        LogicalOp::AiTrain { .. } => Ok(children.into_iter().next().unwrap()),
        LogicalOp::AiInfer {
            input: _,
            model,
            features,
            key,
            ..
        } => {
            let input = &children[0];
            // Recover the trained weights by walking down to the training
            // node (rewrites may interleave filters between the pair) and
            // evaluating its own input.
            fn find_train(node: &PlanRef) -> Option<PlanRef> {
                if matches!(node.op, LogicalOp::AiTrain { .. }) {
                    return Some(node.clone());
                }
                let children = node.children();
                if children.len() == 1 {
                    find_train(children[0])
                } else {
                    None
                }
            }
            let weights: Option<Vec<f64>> = match find_train(node.children()[0]) {
                Some(train_node) => {
                    let LogicalOp::AiTrain {
                        features: tf,
                        target,
                        ..
                    } = &train_node.op
                    else {
                        unreachable!()
                    };
                    let train_input = interpret(train_node.children()[0], env)?;
                    let rows: Vec<Vec<f64>> = train_input
                        .rows
                        .iter()
                        .map(|r| {
                            let raw: Vec<Value> =
                                tf.iter().map(|&f| r.values[f].clone()).collect();
                            ridge::hash_features(&raw, env.hash_buckets)
                        })
                        .collect();
                    let targets: Vec<f64> = train_input
                        .rows
                        .iter()
                        .map(|r| r.values[*target].as_f64().unwrap_or(0.0))
                        .collect();
                    if rows.is_empty() {
                        None
                    } else {
                        Some(ridge::train(&rows, &targets, env.lambda).map_err(|e| e.to_string())?)
                    }
                }
                None => None,
            };
            let kind = match model {
                InferModel::Trained => ModelKind::RidgeRegressor,
                InferModel::Registered { kind, .. } => *kind,
            };
            let mut rows = Vec::new();
            for r in &input.rows {
                let prediction = match kind {
                    ModelKind::RidgeRegressor => {
                        let raw: Vec<Value> =
                            features.iter().map(|&f| r.values[f].clone()).collect();
                        let hashed = ridge::hash_features(&raw, env.hash_buckets);
                        let w = match (&weights, model) {
                            (Some(w), _) => w.clone(),
                            (None, InferModel::Registered { model, .. }) => {
                                let rec = env
                                    .catalog
                                    .get_model(&model.name, Some(model.version))
                                    .ok_or("model missing")?;
                                ridge::weights_from_bytes(&rec.weights)
                                    .map_err(|e| e.to_string())?
                            }
                            _ => return Err("trained weights unavailable".into()),
                        };
                        Value::Float64(ridge::predict(&w, &hashed))
                    }
                    ModelKind::HashEmbedder => {
                        let text = features
                            .iter()
                            .map(|&f| match &r.values[f] {
                                Value::Text(s) => s.clone(),
                                v => v.to_string(),
                            })
                            .collect::<Vec<_>>()
                            .join(" ");
                        Value::Vector(Embedder::new(env.embed_dim).embed_one(&text))
                    }
                    ModelKind::GenerativeMock => {
                        let text = features
                            .iter()
                            .map(|&f| match &r.values[f] {
                                Value::Text(s) => s.clone(),
                                v => v.to_string(),
                            })
                            .collect::<Vec<_>>()
                            .join(" ");
                        let g = GenerativeMock::new(env.generative_seed);
                        Value::Int64(g.output_tokens(&text) as i64)
                    }
                };
                rows.push(Row {
                    values: vec![r.values[*key].clone(), prediction],
                    commit: r.commit,
                });
            }
            Ok(RowSet {
                columns: node.schema.clone(),
                rows,
            })
        }
    }
}

/// Order-insensitive row comparison: encodes and sorts rows.
pub fn multiset(rows: &RowSet) -> Vec<Vec<u8>> {
    let mut out: Vec<Vec<u8>> = rows
        .rows
        .iter()
        .map(|r| {
            let mut bytes = Vec::new();
            for v in &r.values {
                v.encode_into(&mut bytes);
            }
            bytes
        })
        .collect();
    out.sort();
    out
}

pub fn assert_same_multiset(a: &RowSet, b: &RowSet, context: &str) {
    assert_eq!(
        multiset(a),
        multiset(b),
        "{context}: result multisets differ ({} vs {} rows)",
        a.rows.len(),
        b.rows.len()
    );
}

// ------------------------------------------------------------ generators

pub struct RandomDb {
    pub catalog: Catalog,
    pub tables: Vec<(TableId, Vec<(String, ColumnType)>)>,
    pub pin: SnapshotVersion,
}

/// One to three small tables with int columns and one float column, at most
/// `max_rows` rows.
pub fn random_db(seed: u64, max_rows: usize) -> RandomDb {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let catalog = Catalog::new();
    let n_tables = rng.random_range(1..=3);
    let mut tables = Vec::new();
    for t in 0..n_tables {
        let n_cols = rng.random_range(2..=4);
        let mut columns: Vec<(String, ColumnType)> = (0..n_cols)
            .map(|c| (format!("c{c}"), ColumnType::Int64))
            .collect();
        columns.push(("v".into(), ColumnType::Float64));
        let def = TableDef::new(format!("t{t}"), columns.clone(), "c0").unwrap();
        let id = catalog.create_table(def).unwrap();
        let rows_n = rng.random_range(1..=max_rows);
        let rows: Vec<Vec<Value>> = (0..rows_n)
            .map(|i| {
                let mut row: Vec<Value> = (0..n_cols)
                    .map(|c| {
                        if c == 0 {
                            Value::Int64(i as i64)
                        } else {
                            Value::Int64(rng.random_range(0..20))
                        }
                    })
                    .collect();
                row.push(Value::Float64(rng.random_range(-5.0..5.0)));
                row
            })
            .collect();
        catalog.append_rows(id, rows).unwrap();
        tables.push((id, columns));
    }
    let pin = catalog.current_version();
    RandomDb {
        catalog,
        tables,
        pin,
    }
}

/// Random comparison predicate valid for `schema` (int columns only).
pub fn random_predicate(rng: &mut ChaCha8Rng, schema: &[(String, ColumnType)]) -> Expr {
    let int_cols: Vec<usize> = schema
        .iter()
        .enumerate()
        .filter(|(_, (_, t))| *t == ColumnType::Int64)
        .map(|(i, _)| i)
        .collect();
    let col = int_cols[rng.random_range(0..int_cols.len())];
    let make_cmp = |rng: &mut ChaCha8Rng, col: usize| {
        let op = [BinaryOp::Lt, BinaryOp::Le, BinaryOp::Gt, BinaryOp::Ge, BinaryOp::Eq]
            [rng.random_range(0..5)];
        Expr::binary(op, Expr::col(col), Expr::int(rng.random_range(0..20)))
    };
    match rng.random_range(0..4) {
        0 => make_cmp(rng, col),
        1 => {
            let lo = rng.random_range(0..10);
            Expr::Between {
                input: Box::new(Expr::col(col)),
                lo: Box::new(Expr::int(lo)),
                hi: Box::new(Expr::int(lo + rng.random_range(0..10))),
            }
        }
        2 => {
            let other = int_cols[rng.random_range(0..int_cols.len())];
            Expr::and(make_cmp(rng, col), make_cmp(rng, other))
        }
        _ => {
            let other = int_cols[rng.random_range(0..int_cols.len())];
            Expr::binary(BinaryOp::Or, make_cmp(rng, col), make_cmp(rng, other))
        }
    }
}

/// Random logical plan over `db`, including occasional AI pairs.
pub fn random_plan(rng: &mut ChaCha8Rng, db: &RandomDb, allow_ai: bool) -> PlanRef {
    let (table, columns) = &db.tables[rng.random_range(0..db.tables.len())];
    let mut plan = LogicalNode::scan(
        *table,
        format!("{table}"),
        (0..columns.len()).collect(),
        columns.clone(),
    );
    // Maybe join a second scan on int columns.
    if rng.random_range(0..10) < 4 && db.tables.len() > 1 {
        let (t2, cols2) = &db.tables[rng.random_range(0..db.tables.len())];
        let right = LogicalNode::scan(
            *t2,
            format!("{t2}"),
            (0..cols2.len()).collect(),
            cols2.clone(),
        );
        let lk = rng.random_range(1..columns.len() - 1);
        let rk = plan.schema.len() + rng.random_range(1..cols2.len() - 1);
        let cond = Expr::binary(BinaryOp::Eq, Expr::col(lk), Expr::col(rk));
        let (joined, _) = LogicalNode::join(plan, right, JoinKind::Inner, Some(cond));
        plan = joined;
    }
    for _ in 0..rng.random_range(0..3) {
        match rng.random_range(0..4) {
            0 => {
                let pred = random_predicate(rng, &plan.schema);
                plan = LogicalNode::select(plan, pred);
            }
            1 => {
                // Projection keeping a random non-empty subset plus one sum.
                let keep: Vec<usize> = (0..plan.schema.len())
                    .filter(|_| rng.random_range(0..10) < 7)
                    .collect();
                let keep = if keep.is_empty() { vec![0] } else { keep };
                let exprs: Vec<(Expr, String)> = keep
                    .iter()
                    .map(|&c| (Expr::col(c), plan.schema[c].0.clone()))
                    .collect();
                plan = LogicalNode::project(plan, exprs);
            }
            2 => {
                let key = rng.random_range(0..plan.schema.len());
                plan = LogicalNode::sort(plan, vec![(Expr::col(key), rng.random_range(0..2) == 0)]);
            }
            _ => {
                plan = LogicalNode::limit(plan, rng.random_range(1..50));
            }
        }
    }
    if allow_ai && rng.random_range(0..10) < 4 {
        // Train on an int column, predict the float column if present.
        let ints: Vec<usize> = plan
            .schema
            .iter()
            .enumerate()
            .filter(|(_, (_, t))| *t == ColumnType::Int64)
            .map(|(i, _)| i)
            .collect();
        let floats: Vec<usize> = plan
            .schema
            .iter()
            .enumerate()
            .filter(|(_, (_, t))| *t == ColumnType::Float64)
            .map(|(i, _)| i)
            .collect();
        if !ints.is_empty() && !floats.is_empty() {
            let feature = ints[rng.random_range(0..ints.len())];
            let target = floats[0];
            let key = ints[0];
            let train = LogicalNode::ai_train(plan, vec![feature], target);
            plan = LogicalNode::ai_infer(
                train,
                InferModel::Trained,
                vec![feature],
                key,
                "prediction",
            );
            if rng.random_range(0..2) == 0 {
                // Key-bound filter above inference exercises pull-up.
                let pred = Expr::binary(
                    BinaryOp::Le,
                    Expr::col(0),
                    Expr::int(rng.random_range(0..40)),
                );
                plan = LogicalNode::select(plan, pred);
            }
        }
    }
    plan
}

/// The reference-query fixture used across suites.
pub const LISTING_SQL: &str = "\
WITH ud AS (SELECT user_age, user_gender FROM users WHERE user_id = 7)
SELECT pr.product_id, pr.rating
FROM (
  PREDICT VALUE OF r.rating WITH PRIMARY KEY r.product_id
  FROM ratings r JOIN users u ON r.user_id = u.user_id CROSS JOIN ud
  WHERE u.user_gender = ud.user_gender
     AND u.user_age BETWEEN ud.user_age - 10 AND ud.user_age + 10
  TRAIN ON r.product_id) pr
ORDER BY pr.rating DESC LIMIT 100";

/// Creates the users/ratings schema and data for the reference query.
pub fn listing_fixture(session: &neurq_core::session::Session, users: usize, ratings: usize, seed: u64) {
    session
        .execute("CREATE TABLE users (user_id int64 PRIMARY KEY, user_age int64, user_gender text)")
        .unwrap();
    session
        .execute("CREATE TABLE ratings (user_id int64, product_id int64 PRIMARY KEY, rating float64)")
        .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let user_rows: Vec<Vec<Value>> = (0..users as i64)
        .map(|i| {
            vec![
                Value::Int64(i),
                Value::Int64(rng.random_range(18..70)),
                Value::Text(if rng.random_range(0..2) == 0 { "f" } else { "m" }.into()),
            ]
        })
        .collect();
    let uid = session.catalog.table_id("users").unwrap();
    session.catalog.append_rows(uid, user_rows).unwrap();
    let rating_rows: Vec<Vec<Value>> = (0..ratings as i64)
        .map(|i| {
            vec![
                Value::Int64(rng.random_range(0..users as i64)),
                Value::Int64(i),
                Value::Float64(rng.random_range(1.0..5.0)),
            ]
        })
        .collect();
    let rid = session.catalog.table_id("ratings").unwrap();
    session.catalog.append_rows(rid, rating_rows).unwrap();
}

// ---------------------------------------------------- ridge oracles

/// Independent oracle: assemble the full normal-equation system (intercept
/// unpenalized) and solve it by Gaussian elimination with partial pivoting.
/// A different algorithm from the trainer's Cholesky path.
pub fn normal_equation_solve(features: &[Vec<f64>], target: &[f64], lambda: f64) -> Vec<f64> {
    let d = features[0].len();
    let m = d + 1;
    let mut a = vec![vec![0.0f64; m]; m];
    let mut b = vec![0.0f64; m];
    for (row, &y) in features.iter().zip(target) {
        for j in 0..d {
            for k in 0..d {
                a[j][k] += row[j] * row[k];
            }
            a[j][d] += row[j];
            a[d][j] += row[j];
            b[j] += row[j] * y;
        }
        a[d][d] += 1.0;
        b[d] += y;
    }
    // Penalize coefficients only.
    for (j, row) in a.iter_mut().enumerate().take(d) {
        row[j] += lambda;
    }
    // Gaussian elimination with partial pivoting.
    let mut aug: Vec<Vec<f64>> = a
        .into_iter()
        .zip(b)
        .map(|(mut row, rhs)| {
            row.push(rhs);
            row
        })
        .collect();
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&x, &y| aug[x][col].abs().total_cmp(&aug[y][col].abs()))
            .unwrap();
        aug.swap(col, pivot);
        let p = aug[col][col];
        assert!(p.abs() > 1e-12, "singular system");
        for r in 0..m {
            if r == col {
                continue;
            }
            let factor = aug[r][col] / p;
            let pivot_row = aug[col].clone();
            for (c, cell) in aug[r].iter_mut().enumerate().skip(col) {
                *cell -= factor * pivot_row[c];
            }
        }
    }
    (0..m).map(|i| aug[i][m] / aug[i][i]).collect()
}

pub fn random_instance(seed: u64, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let intercept: f64 = rng.random_range(-1.0..1.0);
    let features: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect())
        .collect();
    let target: Vec<f64> = features
        .iter()
        .map(|row| {
            let lin: f64 = row.iter().zip(&w).map(|(x, wi)| x * wi).sum();
            lin + intercept + rng.random_range(-0.1..0.1)
        })
        .collect();
    (features, target)
}

