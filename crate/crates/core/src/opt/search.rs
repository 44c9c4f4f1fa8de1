//! Bottom-up plan search.
//!
//! Dynamic programming over the logical tree keeps a Pareto frontier of
//! (latency, quality) per node: a candidate is dropped when another is no
//! worse on both axes and strictly better on one. The frontier is capped at
//! 32 entries, evicting the highest-latency candidate first. Selection under
//! a bounded objective breaks ties by node count, then by the deterministic
//! byte encoding of the plan.

use super::cost::{join_cardinality, selectivity, split_equi_condition, ColStats};
use super::physical::{
    cache_key_for, retotal, trained_weights_key, CostQuality, PhysRef, PhysicalNode, PhysicalOp,
    PipelineVariant, Placement,
};
use super::{Objective, OptimizeError, OptimizerContext};
use crate::cache::CacheIndex;
use crate::expr::Expr;
use crate::model::{batch_cost_est, FeatureMask, ModelKind};
use crate::plan::{fingerprint, InferModel, LogicalOp, PlanRef};
use crate::types::ColumnType;
use std::sync::Arc;

const FRONTIER_CAP: usize = 32;

/// One entry of a node's Pareto frontier.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub plan: PhysRef,
    pub stats: ColStats,
}

/// Enumerates physical alternatives bottom-up with dominance pruning.
pub fn enumerate_physical(
    node: &PlanRef,
    ctx: &OptimizerContext,
) -> Result<Vec<Candidate>, OptimizeError> {
    let fp = fingerprint(node, ctx.pin);
    let mut out: Vec<Candidate> = Vec::new();
    match &node.op {
        LogicalOp::Unit => {
            out.push(Candidate {
                plan: mk(
                    PhysicalOp::Unit,
                    node.schema.clone(),
                    fp,
                    1.0,
                    0.0,
                    1.0,
                ),
                stats: ColStats::uniform(0, 1.0),
            });
        }
        LogicalOp::Scan {
            table,
            table_name,
            cols,
        } => {
            let stats = ctx
                .stats
                .get(table)
                .ok_or_else(|| OptimizeError::MissingStats(table_name.clone()))?;
            let rows = stats.row_count as f64;
            let col_stats = ColStats {
                distinct: cols
                    .iter()
                    .map(|&c| (stats.distinct.get(c).copied().unwrap_or(1) as f64).max(1.0))
                    .collect(),
                tokens: cols
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| {
                        if node.schema[i].1 == ColumnType::Text {
                            stats.mean_tokens.get(c).copied().unwrap_or(1.0).max(1.0)
                        } else {
                            1.0
                        }
                    })
                    .collect(),
            };
            let latency = ctx.constants.scan_setup_ms + ctx.constants.scan_per_row_ms * rows;
            out.push(Candidate {
                plan: mk(
                    PhysicalOp::FullScan {
                        table: *table,
                        table_name: table_name.clone(),
                        cols: cols.clone(),
                    },
                    node.schema.clone(),
                    fp,
                    rows,
                    latency,
                    1.0,
                ),
                stats: col_stats,
            });
        }
        LogicalOp::Select { input, predicate } => {
            for child in enumerate_physical(input, ctx)? {
                let sel = selectivity(predicate, &child.stats).clamp(0.0, 1.0);
                let rows = (child.plan.est_rows * sel).max(0.0);
                let stats = child.stats.capped(rows);
                // Fused alternative: filter inline during the scan.
                if let PhysicalOp::FullScan {
                    table,
                    table_name,
                    cols,
                } = &child.plan.op
                {
                    let latency = ctx.constants.scan_setup_ms
                        + ctx.constants.filtered_scan_per_row_ms * child.plan.est_rows;
                    out.push(Candidate {
                        plan: mk(
                            PhysicalOp::FilteredScan {
                                table: *table,
                                table_name: table_name.clone(),
                                cols: cols.clone(),
                                predicate: predicate.clone(),
                            },
                            node.schema.clone(),
                            fp,
                            rows,
                            latency,
                            1.0,
                        ),
                        stats: stats.clone(),
                    });
                }
                let latency = ctx.constants.filter_per_row_ms * child.plan.est_rows;
                out.push(Candidate {
                    plan: mk_with(
                        PhysicalOp::Filter {
                            input: child.plan.clone(),
                            predicate: predicate.clone(),
                        },
                        node.schema.clone(),
                        fp,
                        rows,
                        latency,
                        1.0,
                    ),
                    stats,
                });
            }
        }
        LogicalOp::Project { input, exprs } => {
            for child in enumerate_physical(input, ctx)? {
                let rows = child.plan.est_rows;
                let mapping: Vec<Option<usize>> = exprs
                    .iter()
                    .map(|(e, _)| match e {
                        Expr::Column(c) => Some(*c),
                        _ => None,
                    })
                    .collect();
                let stats = child.stats.project(&mapping, rows);
                let latency = ctx.constants.project_per_row_ms * rows;
                out.push(Candidate {
                    plan: mk_with(
                        PhysicalOp::Project {
                            input: child.plan.clone(),
                            exprs: exprs.clone(),
                        },
                        node.schema.clone(),
                        fp,
                        rows,
                        latency,
                        1.0,
                    ),
                    stats,
                });
            }
        }
        LogicalOp::Join {
            left,
            right,
            kind,
            condition,
        } => {
            let lw = left.schema.len();
            let left_cands = enumerate_physical(left, ctx)?;
            let right_cands = enumerate_physical(right, ctx)?;
            for lc in &left_cands {
                for rc in &right_cands {
                    let lrows = lc.plan.est_rows;
                    let rrows = rc.plan.est_rows;
                    let joined_stats = lc.stats.concat(&rc.stats);
                    let equi = condition
                        .as_ref()
                        .and_then(|c| split_equi_condition(c, lw));
                    let (rows, post_sel) = match (&equi, condition) {
                        (Some((lk, rk, rest)), _) => {
                            let dl = key_distinct(lk, &lc.stats, lrows);
                            let dr = key_distinct(rk, &rc.stats, rrows);
                            let base = join_cardinality(lrows, rrows, Some((dl, dr)));
                            let sel = rest
                                .as_ref()
                                .map(|r| selectivity(r, &joined_stats))
                                .unwrap_or(1.0);
                            (base * sel, sel)
                        }
                        (None, Some(c)) => {
                            let sel = selectivity(c, &joined_stats);
                            (lrows * rrows * sel, sel)
                        }
                        (None, None) => (lrows * rrows, 1.0),
                    };
                    let _ = post_sel;
                    let stats = joined_stats.capped(rows);
                    if let Some((lk, rk, rest)) = &equi {
                        let build_mb = lrows * lw as f64 * ctx.constants.bytes_per_value
                            / 1_000_000.0;
                        if build_mb <= ctx.constants.hash_mem_budget_mb {
                            let latency = ctx.constants.hash_join_setup_ms
                                + ctx.constants.hash_join_per_row_ms * (lrows + rrows);
                            out.push(Candidate {
                                plan: mk_join(
                                    PhysicalOp::HashJoin {
                                        left: lc.plan.clone(),
                                        right: rc.plan.clone(),
                                        left_key: lk.clone(),
                                        right_key: rk.clone(),
                                        remainder: rest.clone(),
                                    },
                                    node.schema.clone(),
                                    fp,
                                    rows,
                                    latency,
                                ),
                                stats: stats.clone(),
                            });
                        }
                        let latency = ctx.constants.merge_join_cost(lrows, rrows);
                        out.push(Candidate {
                            plan: mk_join(
                                PhysicalOp::MergeJoin {
                                    left: lc.plan.clone(),
                                    right: rc.plan.clone(),
                                    left_key: lk.clone(),
                                    right_key: rk.clone(),
                                    remainder: rest.clone(),
                                },
                                node.schema.clone(),
                                fp,
                                rows,
                                latency,
                            ),
                            stats: stats.clone(),
                        });
                    }
                    let latency = ctx.constants.nlj_per_pair_ms * lrows * rrows;
                    out.push(Candidate {
                        plan: mk_join(
                            PhysicalOp::NestedLoopJoin {
                                left: lc.plan.clone(),
                                right: rc.plan.clone(),
                                condition: condition.clone(),
                            },
                            node.schema.clone(),
                            fp,
                            rows,
                            latency,
                        ),
                        stats,
                    });
                    let _ = kind;
                }
            }
        }
        LogicalOp::Aggregate {
            input,
            group_by,
            aggs,
        } => {
            for child in enumerate_physical(input, ctx)? {
                let in_rows = child.plan.est_rows;
                let mut groups_est: f64 = 1.0;
                for g in group_by {
                    groups_est *= match g {
                        Expr::Column(c) => child.stats.distinct[*c],
                        _ => (in_rows / 3.0).max(1.0),
                    };
                }
                let rows = groups_est.min(in_rows).max(1.0);
                let latency = ctx.constants.aggregate_setup_ms
                    + ctx.constants.aggregate_per_row_ms * in_rows;
                let width = group_by.len() + aggs.len();
                let stats = ColStats::uniform(width, rows);
                out.push(Candidate {
                    plan: mk_with(
                        PhysicalOp::HashAggregate {
                            input: child.plan.clone(),
                            group_by: group_by.clone(),
                            aggs: aggs.clone(),
                        },
                        node.schema.clone(),
                        fp,
                        rows,
                        latency,
                        1.0,
                    ),
                    stats,
                });
            }
        }
        LogicalOp::Sort { input, keys } => {
            for child in enumerate_physical(input, ctx)? {
                let rows = child.plan.est_rows;
                let latency = ctx.constants.sort_cost(rows);
                out.push(Candidate {
                    plan: mk_with(
                        PhysicalOp::Sort {
                            input: child.plan.clone(),
                            keys: keys.clone(),
                        },
                        node.schema.clone(),
                        fp,
                        rows,
                        latency,
                        1.0,
                    ),
                    stats: child.stats.clone(),
                });
            }
        }
        LogicalOp::Limit { input, count } => {
            for child in enumerate_physical(input, ctx)? {
                let rows = child.plan.est_rows.min(*count as f64);
                out.push(Candidate {
                    plan: mk_with(
                        PhysicalOp::Limit {
                            input: child.plan.clone(),
                            count: *count,
                        },
                        node.schema.clone(),
                        fp,
                        rows,
                        ctx.constants.limit_ms,
                        1.0,
                    ),
                    stats: child.stats.capped(rows),
                });
            }
        }
        LogicalOp::AiTrain {
            input,
            features,
            target,
        } => {
            let profile = ctx.costs.profile(ModelKind::RidgeRegressor, None);
            for child in enumerate_physical(input, ctx)? {
                let rows = child.plan.est_rows;
                let tokens = rows * features.len() as f64;
                let latency = batch_cost_est(&profile, rows, tokens, false);
                out.push(Candidate {
                    plan: mk_with(
                        PhysicalOp::AiTrain {
                            input: child.plan.clone(),
                            features: features.clone(),
                            target: *target,
                            placement: Placement::Any,
                        },
                        node.schema.clone(),
                        fp,
                        rows,
                        latency,
                        1.0,
                    ),
                    stats: child.stats.clone(),
                });
            }
        }
        LogicalOp::AiInfer {
            input,
            model,
            features,
            key,
            output_name,
        } => {
            let (kind, model_version) = match model {
                InferModel::Trained => (ModelKind::RidgeRegressor, None),
                InferModel::Registered { model, kind } => (*kind, Some(model.clone())),
            };
            let profile = ctx.costs.profile(kind, model_version.as_ref());
            let mask = FeatureMask::new(features.iter().copied())
                .expect("inference features are non-empty");
            // Staged needs the training set at hand (stage two retrains
            // with an aggregate feature), so only in-query-trained ridge
            // offers it.
            let variants: &[PipelineVariant] =
                if kind == ModelKind::RidgeRegressor && model_version.is_none() {
                    &[PipelineVariant::Direct, PipelineVariant::Staged]
                } else {
                    &[PipelineVariant::Direct]
                };
            let mut placements = vec![Placement::Any];
            for e in 0..ctx.engines.engine_count() {
                placements.push(Placement::Engine(e));
            }
            for child in enumerate_physical(input, ctx)? {
                let rows = child.plan.est_rows;
                let tokens_per_item: f64 = features
                    .iter()
                    .map(|&f| child.stats.tokens[f])
                    .sum::<f64>()
                    .max(1.0);
                for &variant in variants {
                    let quality = ctx
                        .profiles
                        .lookup(model_version.as_ref(), kind, variant, &mask)
                        .ok_or_else(|| {
                            OptimizeError::MissingProfile(format!(
                                "{} {} mask width {}",
                                kind.name(),
                                variant.name(),
                                mask.len()
                            ))
                        })?;
                    for &placement in &placements {
                        let resident = match (&model_version, placement) {
                            (None, _) => true,
                            (Some(mv), Placement::Any) => ctx.engines.resident_anywhere(mv),
                            (Some(mv), Placement::Engine(i)) => ctx.engines.resident_on(i, mv),
                        };
                        let base =
                            batch_cost_est(&profile, rows, rows * tokens_per_item, !resident);
                        let latency = if variant == PipelineVariant::Staged {
                            base * ctx.constants.staged_cost_factor
                        } else {
                            base
                        };
                        let out_stats = ColStats {
                            distinct: vec![child.stats.distinct[*key], rows.max(1.0)],
                            tokens: vec![child.stats.tokens[*key], 1.0],
                        };
                        out.push(Candidate {
                            plan: mk_with(
                                PhysicalOp::AiInfer {
                                    input: child.plan.clone(),
                                    model: model.clone(),
                                    features: features.clone(),
                                    key: *key,
                                    output_name: output_name.clone(),
                                    variant,
                                    placement,
                                },
                                node.schema.clone(),
                                fp,
                                rows,
                                latency,
                                quality,
                            ),
                            stats: out_stats,
                        });
                    }
                }
            }
        }
    }
    Ok(pareto(out))
}

fn key_distinct(key: &Expr, stats: &ColStats, rows: f64) -> f64 {
    match key {
        Expr::Column(c) => stats.distinct.get(*c).copied().unwrap_or(rows.max(1.0)),
        _ => (rows / 3.0).max(1.0),
    }
}

fn mk(
    op: PhysicalOp,
    schema: Vec<(String, ColumnType)>,
    fingerprint: crate::plan::PlanFingerprint,
    est_rows: f64,
    node_latency_ms: f64,
    own_quality: f64,
) -> PhysRef {
    mk_with(op, schema, fingerprint, est_rows, node_latency_ms, own_quality)
}

fn mk_with(
    op: PhysicalOp,
    schema: Vec<(String, ColumnType)>,
    fingerprint: crate::plan::PlanFingerprint,
    est_rows: f64,
    node_latency_ms: f64,
    own_quality: f64,
) -> PhysRef {
    let mut node = PhysicalNode {
        op,
        schema,
        fingerprint,
        est_rows,
        node_latency_ms,
        own_quality,
        total: CostQuality {
            latency_ms: 0.0,
            quality: 1.0,
        },
    };
    node.total = retotal(&node);
    Arc::new(node)
}

fn mk_join(
    op: PhysicalOp,
    schema: Vec<(String, ColumnType)>,
    fingerprint: crate::plan::PlanFingerprint,
    est_rows: f64,
    node_latency_ms: f64,
) -> PhysRef {
    mk_with(op, schema, fingerprint, est_rows, node_latency_ms, 1.0)
}

/// Dominance filter plus deterministic ordering and the frontier cap.
fn pareto(mut cands: Vec<Candidate>) -> Vec<Candidate> {
    // Deterministic order first: latency, then quality desc, then encoding.
    cands.sort_by(|a, b| {
        a.plan
            .total
            .latency_ms
            .total_cmp(&b.plan.total.latency_ms)
            .then_with(|| b.plan.total.quality.total_cmp(&a.plan.total.quality))
            .then_with(|| a.plan.encode().cmp(&b.plan.encode()))
    });
    // Exact duplicates on both axes collapse to the first (smallest encoding).
    cands.dedup_by(|a, b| {
        a.plan.total.latency_ms == b.plan.total.latency_ms
            && a.plan.total.quality == b.plan.total.quality
    });
    let mut kept: Vec<Candidate> = Vec::new();
    'outer: for cand in cands {
        for other in &kept {
            if dominates(&other.plan.total, &cand.plan.total) {
                continue 'outer;
            }
        }
        kept.retain(|other| !dominates(&cand.plan.total, &other.plan.total));
        kept.push(cand);
    }
    // Cap the frontier by evicting the highest-latency entries.
    while kept.len() > FRONTIER_CAP {
        let worst = kept
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| {
                a.plan
                    .total
                    .latency_ms
                    .total_cmp(&b.plan.total.latency_ms)
            })
            .map(|(i, _)| i)
            .unwrap();
        kept.remove(worst);
    }
    kept.sort_by(|a, b| {
        a.plan
            .total
            .latency_ms
            .total_cmp(&b.plan.total.latency_ms)
            .then_with(|| a.plan.encode().cmp(&b.plan.encode()))
    });
    kept
}

/// True when `a` is at least as good as `b` on both axes and strictly
/// better on one.
pub fn dominates(a: &CostQuality, b: &CostQuality) -> bool {
    a.latency_ms <= b.latency_ms
        && a.quality >= b.quality
        && (a.latency_ms < b.latency_ms || a.quality > b.quality)
}

/// Picks the winner under a bounded objective. The optimized axis ranks
/// first, the bounded axis second, and full ties break by fewer physical
/// nodes, then by the plan's byte encoding — a total order, so selection is
/// deterministic.
pub fn choose(cands: &[Candidate], objective: &Objective) -> Result<PhysRef, OptimizeError> {
    assert!(!cands.is_empty(), "candidate set must be non-empty");
    let tie = |p: &PhysRef| (p.count_nodes(), p.encode());
    match objective {
        Objective::MinLatencyGivenQuality { min_quality } => {
            let feasible: Vec<&Candidate> = cands
                .iter()
                .filter(|c| c.plan.total.quality >= *min_quality)
                .collect();
            if feasible.is_empty() {
                let best = cands
                    .iter()
                    .max_by(|a, b| {
                        a.plan
                            .total
                            .quality
                            .total_cmp(&b.plan.total.quality)
                            .then_with(|| {
                                b.plan
                                    .total
                                    .latency_ms
                                    .total_cmp(&a.plan.total.latency_ms)
                            })
                    })
                    .unwrap();
                return Err(OptimizeError::Infeasible {
                    best: best.plan.total,
                });
            }
            Ok(feasible
                .into_iter()
                .min_by(|a, b| {
                    a.plan
                        .total
                        .latency_ms
                        .total_cmp(&b.plan.total.latency_ms)
                        .then_with(|| b.plan.total.quality.total_cmp(&a.plan.total.quality))
                        .then_with(|| tie(&a.plan).cmp(&tie(&b.plan)))
                })
                .unwrap()
                .plan
                .clone())
        }
        Objective::MaxQualityGivenLatency { max_latency_ms } => {
            let feasible: Vec<&Candidate> = cands
                .iter()
                .filter(|c| c.plan.total.latency_ms <= *max_latency_ms)
                .collect();
            if feasible.is_empty() {
                let best = cands
                    .iter()
                    .min_by(|a, b| {
                        a.plan
                            .total
                            .latency_ms
                            .total_cmp(&b.plan.total.latency_ms)
                    })
                    .unwrap();
                return Err(OptimizeError::Infeasible {
                    best: best.plan.total,
                });
            }
            Ok(feasible
                .into_iter()
                .max_by(|a, b| {
                    a.plan
                        .total
                        .quality
                        .total_cmp(&b.plan.total.quality)
                        .then_with(|| b.plan.total.latency_ms.total_cmp(&a.plan.total.latency_ms))
                        .then_with(|| tie(&b.plan).cmp(&tie(&a.plan)))
                })
                .unwrap()
                .plan
                .clone())
        }
    }
}

/// Replaces maximal cached subplans with `CacheRead` leaves whenever the
/// read is estimated cheaper, and credits cached trained weights. Never
/// increases estimated latency.
pub fn cache_aware_substitute(
    plan: &PhysRef,
    index: &CacheIndex,
    pin: crate::types::SnapshotVersion,
) -> PhysRef {
    if index.is_empty() {
        return plan.clone();
    }
    fn subst(node: &PhysRef, index: &CacheIndex, pin: crate::types::SnapshotVersion) -> PhysRef {
        if let Some(key) = cache_key_for(node, pin) {
            if let Some(view) = index.get(&key) {
                if view.read_latency_ms < node.total.latency_ms {
                    let mut read = PhysicalNode {
                        op: PhysicalOp::CacheRead {
                            key,
                            view: *view,
                            fallback: node.clone(),
                        },
                        schema: node.schema.clone(),
                        fingerprint: node.fingerprint,
                        est_rows: node.est_rows,
                        node_latency_ms: view.read_latency_ms,
                        // A cached result carries the quality of the subtree
                        // that produced it.
                        own_quality: node.total.quality,
                        total: CostQuality {
                            latency_ms: 0.0,
                            quality: 1.0,
                        },
                    };
                    read.total = retotal(&read);
                    return Arc::new(read);
                }
            }
        }
        // Trained-weights reuse: an OptimizerState hit removes the training
        // cost (the executor re-validates at dispatch).
        if let PhysicalOp::AiTrain { .. } = &node.op {
            let key = trained_weights_key(node.fingerprint, pin);
            if let Some(view) = index.get(&key) {
                if view.read_latency_ms < node.node_latency_ms {
                    let children: Vec<PhysRef> = node
                        .children()
                        .iter()
                        .map(|c| subst(c, index, pin))
                        .collect();
                    let mut new = rebuild(node, children);
                    {
                        let m = Arc::get_mut(&mut new).unwrap();
                        m.node_latency_ms = view.read_latency_ms;
                        m.total = retotal(m);
                    }
                    return new;
                }
            }
        }
        let children: Vec<PhysRef> = node
            .children()
            .iter()
            .map(|c| subst(c, index, pin))
            .collect();
        rebuild(node, children)
    }
    subst(plan, index, pin)
}

/// Rebuilds a node with new children, keeping annotations and recomputing
/// totals.
fn rebuild(node: &PhysRef, children: Vec<PhysRef>) -> PhysRef {
    if node
        .children()
        .iter()
        .zip(&children)
        .all(|(a, b)| Arc::ptr_eq(a, b))
    {
        return node.clone();
    }
    let mut new = (**node).clone();
    {
        let mut it = children.into_iter();
        match &mut new.op {
            PhysicalOp::Unit
            | PhysicalOp::FullScan { .. }
            | PhysicalOp::FilteredScan { .. }
            | PhysicalOp::CacheRead { .. } => {}
            PhysicalOp::Filter { input, .. }
            | PhysicalOp::Project { input, .. }
            | PhysicalOp::HashAggregate { input, .. }
            | PhysicalOp::Sort { input, .. }
            | PhysicalOp::Limit { input, .. }
            | PhysicalOp::AiTrain { input, .. }
            | PhysicalOp::AiInfer { input, .. } => {
                *input = it.next().unwrap();
            }
            PhysicalOp::HashJoin { left, right, .. }
            | PhysicalOp::MergeJoin { left, right, .. }
            | PhysicalOp::NestedLoopJoin { left, right, .. } => {
                *left = it.next().unwrap();
                *right = it.next().unwrap();
            }
        }
    }
    new.total = retotal(&new);
    Arc::new(new)
}
