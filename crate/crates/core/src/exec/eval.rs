//! Row-level evaluation of relational physical operators.
//!
//! Every produced row carries a provenance tag: the highest commit version
//! of any stored row that contributed to it. Snapshot-consistency checks
//! assert the tag never exceeds the query's pin.

use crate::catalog::{Catalog, CatalogError, Row, RowSet};
use crate::expr::{EvalError, Expr};
use crate::opt::{PhysicalNode, PhysicalOp};
use crate::par;
use crate::sql::binder::AggFunc;
use crate::sql::BoundAgg;
use crate::types::{ColumnType, SnapshotVersion, Value};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalOpError {
    #[error(transparent)]
    Expr(#[from] EvalError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("aggregate over empty input has no value")]
    EmptyAggregate,
}

/// Executes one relational operator over its input row sets. AI operators
/// and cache reads are handled by the coordinator, not here.
pub fn eval_relational(
    node: &PhysicalNode,
    inputs: &[&RowSet],
    catalog: &Catalog,
    pin: SnapshotVersion,
) -> Result<RowSet, EvalOpError> {
    match &node.op {
        PhysicalOp::Unit => Ok(RowSet {
            columns: vec![],
            rows: vec![Row {
                values: vec![],
                commit: SnapshotVersion::ZERO,
            }],
        }),
        PhysicalOp::FullScan { table, cols, .. } => {
            Ok(catalog.scan(*table, pin, Some(cols), None)?)
        }
        PhysicalOp::FilteredScan {
            table,
            cols,
            predicate,
            ..
        } => {
            // The stored predicate is over the scan's output columns;
            // storage wants it over the full table row.
            let table_pred = predicate.map_columns(&|c| cols[c]);
            Ok(catalog.scan(*table, pin, Some(cols), Some(&table_pred))?)
        }
        PhysicalOp::Filter { predicate, .. } => {
            let input = inputs[0];
            let keep = par::map_slice(&input.rows, |r| predicate.eval_bool(&r.values));
            let mut rows = Vec::new();
            for (row, k) in input.rows.iter().zip(keep) {
                if k? {
                    rows.push(row.clone());
                }
            }
            Ok(RowSet {
                columns: input.columns.clone(),
                rows,
            })
        }
        PhysicalOp::Project { exprs, .. } => {
            let input = inputs[0];
            let evaluated: Vec<Result<Vec<Value>, EvalError>> =
                par::map_slice(&input.rows, |r| {
                    exprs
                        .iter()
                        .map(|(e, _)| e.eval(&r.values))
                        .collect::<Result<Vec<_>, _>>()
                });
            let mut rows = Vec::with_capacity(input.rows.len());
            for (row, values) in input.rows.iter().zip(evaluated) {
                rows.push(Row {
                    values: values?,
                    commit: row.commit,
                });
            }
            Ok(RowSet {
                columns: node.schema.clone(),
                rows,
            })
        }
        PhysicalOp::HashJoin {
            left_key,
            right_key,
            remainder,
            ..
        } => hash_join(node, inputs[0], inputs[1], left_key, right_key, remainder),
        PhysicalOp::MergeJoin {
            left_key,
            right_key,
            remainder,
            ..
        } => merge_join(node, inputs[0], inputs[1], left_key, right_key, remainder),
        PhysicalOp::NestedLoopJoin { condition, .. } => {
            let (left, right) = (inputs[0], inputs[1]);
            let mut rows = Vec::new();
            for l in &left.rows {
                for r in &right.rows {
                    let mut values = l.values.clone();
                    values.extend(r.values.iter().cloned());
                    if let Some(cond) = condition {
                        if !cond.eval_bool(&values)? {
                            continue;
                        }
                    }
                    rows.push(Row {
                        values,
                        commit: l.commit.max(r.commit),
                    });
                }
            }
            Ok(RowSet {
                columns: node.schema.clone(),
                rows,
            })
        }
        PhysicalOp::HashAggregate {
            group_by, aggs, ..
        } => aggregate(node, inputs[0], group_by, aggs),
        PhysicalOp::Sort { keys, .. } => {
            let input = inputs[0];
            let rows = input.rows.clone();
            let mut key_values: Vec<Vec<Value>> = Vec::with_capacity(rows.len());
            for r in &rows {
                key_values.push(
                    keys.iter()
                        .map(|(e, _)| e.eval(&r.values))
                        .collect::<Result<Vec<_>, _>>()?,
                );
            }
            // Ties break on the full row encoding, so the output is a pure
            // function of the row multiset: upstream operators (hash vs
            // merge vs nested-loop joins) may produce rows in any order
            // without changing what a LIMIT above cuts.
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
                    let ord = key_values[a][i].cmp_total(&key_values[b][i]);
                    let ord = if *desc { ord.reverse() } else { ord };
                    if !ord.is_eq() {
                        return ord;
                    }
                }
                encodings[a].cmp(&encodings[b]).then_with(|| a.cmp(&b))
            });
            let rows: Vec<Row> = order.into_iter().map(|i| rows[i].clone()).collect();
            Ok(RowSet {
                columns: input.columns.clone(),
                rows,
            })
        }
        PhysicalOp::Limit { count, .. } => {
            let input = inputs[0];
            Ok(RowSet {
                columns: input.columns.clone(),
                rows: input.rows.iter().take(*count as usize).cloned().collect(),
            })
        }
        PhysicalOp::AiTrain { .. } | PhysicalOp::AiInfer { .. } | PhysicalOp::CacheRead { .. } => {
            unreachable!("AI and cache operators are executed by the coordinator")
        }
    }
}

fn hash_join(
    node: &PhysicalNode,
    left: &RowSet,
    right: &RowSet,
    left_key: &Expr,
    right_key: &Expr,
    remainder: &Option<Expr>,
) -> Result<RowSet, EvalOpError> {
    let mut table: BTreeMap<Vec<u8>, Vec<usize>> = BTreeMap::new();
    for (i, row) in left.rows.iter().enumerate() {
        let key = encode_key(&left_key.eval(&row.values)?);
        table.entry(key).or_default().push(i);
    }
    let mut rows = Vec::new();
    for r in &right.rows {
        let key = encode_key(&right_key.eval(&r.values)?);
        if let Some(matches) = table.get(&key) {
            for &li in matches {
                let l = &left.rows[li];
                let mut values = l.values.clone();
                values.extend(r.values.iter().cloned());
                if let Some(rem) = remainder {
                    if !rem.eval_bool(&values)? {
                        continue;
                    }
                }
                rows.push(Row {
                    values,
                    commit: l.commit.max(r.commit),
                });
            }
        }
    }
    Ok(RowSet {
        columns: node.schema.clone(),
        rows,
    })
}

fn merge_join(
    node: &PhysicalNode,
    left: &RowSet,
    right: &RowSet,
    left_key: &Expr,
    right_key: &Expr,
    remainder: &Option<Expr>,
) -> Result<RowSet, EvalOpError> {
    let mut lk: Vec<(Vec<u8>, usize)> = Vec::with_capacity(left.rows.len());
    for (i, row) in left.rows.iter().enumerate() {
        lk.push((encode_key(&left_key.eval(&row.values)?), i));
    }
    let mut rk: Vec<(Vec<u8>, usize)> = Vec::with_capacity(right.rows.len());
    for (i, row) in right.rows.iter().enumerate() {
        rk.push((encode_key(&right_key.eval(&row.values)?), i));
    }
    lk.sort();
    rk.sort();
    let mut rows = Vec::new();
    let (mut i, mut j) = (0usize, 0usize);
    while i < lk.len() && j < rk.len() {
        match lk[i].0.cmp(&rk[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                let key = lk[i].0.clone();
                let li0 = i;
                while i < lk.len() && lk[i].0 == key {
                    i += 1;
                }
                let rj0 = j;
                while j < rk.len() && rk[j].0 == key {
                    j += 1;
                }
                for &(_, lrow) in &lk[li0..i] {
                    for &(_, rrow) in &rk[rj0..j] {
                        let l = &left.rows[lrow];
                        let r = &right.rows[rrow];
                        let mut values = l.values.clone();
                        values.extend(r.values.iter().cloned());
                        if let Some(rem) = remainder {
                            if !rem.eval_bool(&values)? {
                                continue;
                            }
                        }
                        rows.push(Row {
                            values,
                            commit: l.commit.max(r.commit),
                        });
                    }
                }
            }
        }
    }
    Ok(RowSet {
        columns: node.schema.clone(),
        rows,
    })
}

fn aggregate(
    node: &PhysicalNode,
    input: &RowSet,
    group_by: &[Expr],
    aggs: &[BoundAgg],
) -> Result<RowSet, EvalOpError> {
    struct Acc {
        keys: Vec<Value>,
        count: Vec<u64>,
        // Summed values are collected and added in canonical bit order, so
        // group sums are a pure function of the input multiset no matter
        // which join produced the rows.
        values: Vec<Vec<f64>>,
        min: Vec<Option<Value>>,
        max: Vec<Option<Value>>,
        commit: SnapshotVersion,
    }
    let mut groups: BTreeMap<Vec<u8>, Acc> = BTreeMap::new();
    for row in &input.rows {
        let keys: Vec<Value> = group_by
            .iter()
            .map(|g| g.eval(&row.values))
            .collect::<Result<_, _>>()?;
        let mut kb = Vec::new();
        for k in &keys {
            k.encode_into(&mut kb);
        }
        let acc = groups.entry(kb).or_insert_with(|| Acc {
            keys,
            count: vec![0; aggs.len()],
            values: vec![Vec::new(); aggs.len()],
            min: vec![None; aggs.len()],
            max: vec![None; aggs.len()],
            commit: SnapshotVersion::ZERO,
        });
        acc.commit = acc.commit.max(row.commit);
        for (i, agg) in aggs.iter().enumerate() {
            let arg = match &agg.arg {
                None => None,
                Some(e) => Some(e.eval(&row.values)?),
            };
            acc.count[i] += 1;
            if let Some(v) = &arg {
                if let Some(x) = v.as_f64() {
                    acc.values[i].push(x);
                }
                let better_min = acc.min[i]
                    .as_ref()
                    .map(|m| v.cmp_total(m).is_lt())
                    .unwrap_or(true);
                if better_min {
                    acc.min[i] = Some(v.clone());
                }
                let better_max = acc.max[i]
                    .as_ref()
                    .map(|m| v.cmp_total(m).is_gt())
                    .unwrap_or(true);
                if better_max {
                    acc.max[i] = Some(v.clone());
                }
            }
        }
    }
    // A group-less aggregate over empty input still yields one row.
    if groups.is_empty() && group_by.is_empty() {
        let values: Vec<Value> = aggs
            .iter()
            .map(|a| match a.func {
                AggFunc::Count => Ok(Value::Int64(0)),
                _ => Err(EvalOpError::EmptyAggregate),
            })
            .collect::<Result<_, _>>()?;
        return Ok(RowSet {
            columns: node.schema.clone(),
            rows: vec![Row {
                values,
                commit: SnapshotVersion::ZERO,
            }],
        });
    }
    let mut rows = Vec::with_capacity(groups.len());
    for acc in groups.values_mut() {
        let mut values = acc.keys.clone();
        for (i, agg) in aggs.iter().enumerate() {
            let sum = || {
                let mut xs = acc.values[i].clone();
                xs.sort_by_key(|x| x.to_bits());
                xs.iter().sum::<f64>()
            };
            let v = match agg.func {
                AggFunc::Count => Value::Int64(acc.count[i] as i64),
                AggFunc::Sum => match agg.output_type {
                    ColumnType::Int64 => Value::Int64(sum() as i64),
                    _ => Value::Float64(sum()),
                },
                AggFunc::Avg => Value::Float64(sum() / acc.count[i] as f64),
                AggFunc::Min => acc.min[i].clone().ok_or(EvalOpError::EmptyAggregate)?,
                AggFunc::Max => acc.max[i].clone().ok_or(EvalOpError::EmptyAggregate)?,
            };
            values.push(v);
        }
        rows.push(Row {
            values,
            commit: acc.commit,
        });
    }
    Ok(RowSet {
        columns: node.schema.clone(),
        rows,
    })
}

pub fn encode_key(value: &Value) -> Vec<u8> {
    let mut out = Vec::new();
    // Numeric keys hash by value so int and float keys can meet.
    match value.as_f64() {
        Some(f) => {
            out.push(b'n');
            out.extend_from_slice(&f.to_bits().to_be_bytes());
        }
        None => value.encode_into(&mut out),
    }
    out
}
