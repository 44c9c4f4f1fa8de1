//! Semantics-preserving rewrite rules.
//!
//! The v1 rule set: predicate pushdown, projection pruning (including
//! through inference operators down to their feature columns), inference
//! pull-up above selective filters, and constant folding. Rules fire to
//! fixpoint in listed order, capped at ten passes; every structural change
//! appends to the rewrite trace.
//!
//! Outer filters never push through `AiTrain`: the training set is defined
//! by the PREDICT block's own WHERE clause, and an outer filter only selects
//! among predictions.

use super::logical::{LogicalNode, LogicalOp, PlanRef};
use crate::expr::Expr;
use crate::types::Value;
use std::collections::BTreeSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewriteRule {
    PredicatePushdown,
    ProjectionPruning,
    PredictPullUp,
    ConstantFolding,
}

/// The default rule order: pushdowns, pull-up, folding.
pub fn default_rules() -> Vec<RewriteRule> {
    vec![
        RewriteRule::PredicatePushdown,
        RewriteRule::ProjectionPruning,
        RewriteRule::PredictPullUp,
        RewriteRule::ConstantFolding,
    ]
}

const MAX_PASSES: usize = 10;

/// Applies `rules` to fixpoint and returns the rewritten plan plus a trace
/// of every change. An empty trace means the plan was returned unchanged.
pub fn apply_rewrites(root: &PlanRef, rules: &[RewriteRule]) -> (PlanRef, Vec<String>) {
    let mut plan = root.clone();
    let mut trace = Vec::new();
    for _ in 0..MAX_PASSES {
        let before = plan.clone();
        for rule in rules {
            for _ in 0..MAX_PASSES {
                let next = apply_rule(&plan, *rule, &mut trace);
                if next == plan {
                    break;
                }
                plan = next;
            }
        }
        if plan == before {
            break;
        }
    }
    (plan, trace)
}

fn apply_rule(root: &PlanRef, rule: RewriteRule, trace: &mut Vec<String>) -> PlanRef {
    match rule {
        RewriteRule::PredicatePushdown => push_predicates(root, trace),
        RewriteRule::ProjectionPruning => {
            let all: BTreeSet<usize> = (0..root.schema.len()).collect();
            let (pruned, kept) = prune(root, &all, trace);
            restore_order(root, pruned, kept)
        }
        RewriteRule::PredictPullUp => pull_up_infer(root, trace),
        RewriteRule::ConstantFolding => fold(root, trace),
    }
}

// ---------------------------------------------------------------- pushdown

fn push_predicates(node: &PlanRef, trace: &mut Vec<String>) -> PlanRef {
    let rebuilt = rebuild_children(node, &mut |c| push_predicates(c, trace));
    let LogicalOp::Select { input, predicate } = &rebuilt.op else {
        return rebuilt;
    };
    match &input.op {
        LogicalOp::Select {
            input: inner,
            predicate: inner_pred,
        } => {
            trace.push("predicate_pushdown: merged adjacent filters".into());
            LogicalNode::select(inner.clone(), Expr::and(inner_pred.clone(), predicate.clone()))
        }
        LogicalOp::Sort { input: inner, keys } => {
            trace.push("predicate_pushdown: filter moved below sort".into());
            LogicalNode::sort(
                LogicalNode::select(inner.clone(), predicate.clone()),
                keys.clone(),
            )
        }
        LogicalOp::Project { input: inner, exprs } => {
            let bindings: Vec<Expr> = exprs.iter().map(|(e, _)| e.clone()).collect();
            let pushed = predicate.substitute(&bindings);
            trace.push("predicate_pushdown: filter moved below projection".into());
            LogicalNode::project(
                LogicalNode::select(inner.clone(), pushed),
                exprs.clone(),
            )
        }
        LogicalOp::Join {
            left,
            right,
            kind,
            condition,
        } => {
            let lw = left.schema.len();
            let mut left_parts = Vec::new();
            let mut right_parts = Vec::new();
            let mut rest = Vec::new();
            for conj in predicate.split_conjuncts() {
                let mut cols = Vec::new();
                conj.columns_used(&mut cols);
                if cols.iter().all(|&c| c < lw) && !cols.is_empty() {
                    left_parts.push(conj.clone());
                } else if cols.iter().all(|&c| c >= lw) && !cols.is_empty() {
                    right_parts.push(conj.map_columns(&|c| c - lw));
                } else {
                    rest.push(conj.clone());
                }
            }
            if left_parts.is_empty() && right_parts.is_empty() {
                return rebuilt;
            }
            let new_left = if left_parts.is_empty() {
                left.clone()
            } else {
                LogicalNode::select(left.clone(), Expr::join_conjuncts(left_parts))
            };
            let new_right = if right_parts.is_empty() {
                right.clone()
            } else {
                LogicalNode::select(right.clone(), Expr::join_conjuncts(right_parts))
            };
            trace.push("predicate_pushdown: filter split below join".into());
            let joined = LogicalNode::join_as_is(new_left, new_right, *kind, condition.clone());
            if rest.is_empty() {
                joined
            } else {
                LogicalNode::select(joined, Expr::join_conjuncts(rest))
            }
        }
        _ => rebuilt,
    }
}

// ---------------------------------------------------------------- pruning

/// Narrows `node` to the `required` output columns (plus whatever the node
/// itself consumes). Returns the new node and `kept`: for each new output
/// position, the original output ordinal it carries.
fn prune(
    node: &PlanRef,
    required: &BTreeSet<usize>,
    trace: &mut Vec<String>,
) -> (PlanRef, Vec<usize>) {
    let identity: Vec<usize> = (0..node.schema.len()).collect();
    match &node.op {
        LogicalOp::Unit => (node.clone(), vec![]),
        LogicalOp::Scan {
            table,
            table_name,
            cols,
        } => {
            let kept: Vec<usize> = required.iter().copied().collect();
            if kept.len() == cols.len() {
                return (node.clone(), identity);
            }
            trace.push(format!(
                "projection_pruning: scan {table_name} narrowed to {}/{} cols",
                kept.len(),
                cols.len()
            ));
            let new_cols: Vec<usize> = kept.iter().map(|&c| cols[c]).collect();
            let schema: Vec<_> = kept.iter().map(|&c| node.schema[c].clone()).collect();
            (
                LogicalNode::scan(*table, table_name.clone(), new_cols, schema),
                kept,
            )
        }
        LogicalOp::Select { input, predicate } => {
            let mut need = required.clone();
            let mut cols = Vec::new();
            predicate.columns_used(&mut cols);
            need.extend(cols);
            let (child, kept) = prune(input, &need, trace);
            let pred = remap_via(predicate, &kept);
            (LogicalNode::select(child, pred), kept)
        }
        LogicalOp::Project { input, exprs } => {
            let kept: Vec<usize> = required.iter().copied().filter(|&c| c < exprs.len()).collect();
            let mut need = BTreeSet::new();
            for &k in &kept {
                let mut cols = Vec::new();
                exprs[k].0.columns_used(&mut cols);
                need.extend(cols);
            }
            let (child, child_kept) = prune(input, &need, trace);
            if kept.len() < exprs.len() {
                trace.push(format!(
                    "projection_pruning: projection narrowed to {}/{} exprs",
                    kept.len(),
                    exprs.len()
                ));
            }
            let new_exprs: Vec<(Expr, String)> = kept
                .iter()
                .map(|&k| (remap_via(&exprs[k].0, &child_kept), exprs[k].1.clone()))
                .collect();
            (LogicalNode::project(child, new_exprs), kept)
        }
        LogicalOp::Join {
            left,
            right,
            kind,
            condition,
        } => {
            let lw = left.schema.len();
            let mut cond_cols = Vec::new();
            if let Some(c) = condition {
                c.columns_used(&mut cond_cols);
            }
            let mut left_need = BTreeSet::new();
            let mut right_need = BTreeSet::new();
            for &c in required.iter().chain(cond_cols.iter()) {
                if c < lw {
                    left_need.insert(c);
                } else {
                    right_need.insert(c - lw);
                }
            }
            let (new_left, lkept) = prune(left, &left_need, trace);
            let (new_right, rkept) = prune(right, &right_need, trace);
            let new_lw = lkept.len();
            let cond = condition.as_ref().map(|c| {
                c.map_columns(&|i| {
                    if i < lw {
                        position(&lkept, i)
                    } else {
                        new_lw + position(&rkept, i - lw)
                    }
                })
            });
            let joined = LogicalNode::join_as_is(new_left, new_right, *kind, cond);
            let kept: Vec<usize> = lkept
                .iter()
                .copied()
                .chain(rkept.iter().map(|&c| c + lw))
                .collect();
            (joined, kept)
        }
        LogicalOp::Aggregate {
            input,
            group_by,
            aggs,
        } => {
            let mut need = BTreeSet::new();
            for g in group_by {
                let mut cols = Vec::new();
                g.columns_used(&mut cols);
                need.extend(cols);
            }
            for a in aggs {
                if let Some(arg) = &a.arg {
                    let mut cols = Vec::new();
                    arg.columns_used(&mut cols);
                    need.extend(cols);
                }
            }
            let (child, kept) = prune(input, &need, trace);
            let group_by: Vec<Expr> = group_by.iter().map(|g| remap_via(g, &kept)).collect();
            let aggs = aggs
                .iter()
                .map(|a| crate::sql::BoundAgg {
                    func: a.func,
                    arg: a.arg.as_ref().map(|e| remap_via(e, &kept)),
                    output_type: a.output_type,
                })
                .collect();
            (LogicalNode::aggregate(child, group_by, aggs), identity)
        }
        LogicalOp::Sort { input, keys } => {
            let mut need = required.clone();
            for (k, _) in keys {
                let mut cols = Vec::new();
                k.columns_used(&mut cols);
                need.extend(cols);
            }
            let (child, kept) = prune(input, &need, trace);
            let keys: Vec<(Expr, bool)> = keys
                .iter()
                .map(|(k, d)| (remap_via(k, &kept), *d))
                .collect();
            (LogicalNode::sort(child, keys), kept)
        }
        LogicalOp::Limit { input, count } => {
            let (child, kept) = prune(input, required, trace);
            (LogicalNode::limit(child, *count), kept)
        }
        LogicalOp::AiTrain {
            input,
            features,
            target,
        } => {
            let mut need = required.clone();
            need.extend(features.iter().copied());
            need.insert(*target);
            let (child, kept) = prune(input, &need, trace);
            let features: Vec<usize> = features.iter().map(|&f| position(&kept, f)).collect();
            let target = position(&kept, *target);
            (LogicalNode::ai_train(child, features, target), kept)
        }
        LogicalOp::AiInfer {
            input,
            model,
            features,
            key,
            output_name,
        } => {
            let mut need: BTreeSet<usize> = features.iter().copied().collect();
            need.insert(*key);
            let before = input.schema.len();
            let (child, kept) = prune(input, &need, trace);
            if kept.len() < before {
                trace.push(format!(
                    "projection_pruning: inference input narrowed to {}/{} cols",
                    kept.len(),
                    before
                ));
            }
            let features: Vec<usize> = features.iter().map(|&f| position(&kept, f)).collect();
            let key = position(&kept, *key);
            (
                LogicalNode::ai_infer(child, model.clone(), features, key, output_name.clone()),
                vec![0, 1],
            )
        }
    }
}

/// Restores the original output order (and width) after pruning the root.
fn restore_order(original: &PlanRef, pruned: PlanRef, kept: Vec<usize>) -> PlanRef {
    let identity: Vec<usize> = (0..original.schema.len()).collect();
    if kept == identity {
        return pruned;
    }
    let exprs: Vec<(Expr, String)> = identity
        .iter()
        .map(|&orig| {
            (
                Expr::Column(position(&kept, orig)),
                original.schema[orig].0.clone(),
            )
        })
        .collect();
    LogicalNode::project(pruned, exprs)
}

fn position(kept: &[usize], orig: usize) -> usize {
    kept.iter()
        .position(|&k| k == orig)
        .expect("pruned column still required upstream")
}

fn remap_via(e: &Expr, kept: &[usize]) -> Expr {
    e.map_columns(&|c| position(kept, c))
}

// ---------------------------------------------------------------- pull-up

fn pull_up_infer(node: &PlanRef, trace: &mut Vec<String>) -> PlanRef {
    let rebuilt = rebuild_children(node, &mut |c| pull_up_infer(c, trace));
    let LogicalOp::Select { input, predicate } = &rebuilt.op else {
        return rebuilt;
    };
    let LogicalOp::AiInfer {
        input: infer_input,
        model,
        features,
        key,
        output_name,
    } = &input.op
    else {
        return rebuilt;
    };
    // Only a key-bound filter may move below inference; a filter touching
    // the prediction column must stay above.
    let mut cols = Vec::new();
    predicate.columns_used(&mut cols);
    if !cols.iter().all(|&c| c == 0) {
        return rebuilt;
    }
    let pushed = predicate.map_columns(&|_| *key);
    trace.push("predict_pull_up: inference lifted above key filter".into());
    LogicalNode::ai_infer(
        LogicalNode::select(infer_input.clone(), pushed),
        model.clone(),
        features.clone(),
        *key,
        output_name.clone(),
    )
}

// ---------------------------------------------------------------- folding

fn fold(node: &PlanRef, trace: &mut Vec<String>) -> PlanRef {
    let rebuilt = rebuild_children(node, &mut |c| fold(c, trace));
    match &rebuilt.op {
        LogicalOp::Select { input, predicate } => {
            let (folded, changed) = predicate.fold_constants();
            if matches!(folded, Expr::Literal(Value::Bool(true))) {
                trace.push("constant_folding: dropped always-true filter".into());
                return input.clone();
            }
            if changed {
                trace.push("constant_folding: simplified filter".into());
                return LogicalNode::select(input.clone(), folded);
            }
            rebuilt
        }
        LogicalOp::Project { input, exprs } => {
            let mut changed = false;
            let folded: Vec<(Expr, String)> = exprs
                .iter()
                .map(|(e, n)| {
                    let (f, c) = e.fold_constants();
                    changed |= c;
                    (f, n.clone())
                })
                .collect();
            if changed {
                trace.push("constant_folding: simplified projection".into());
                LogicalNode::project(input.clone(), folded)
            } else {
                rebuilt
            }
        }
        _ => rebuilt,
    }
}

// ---------------------------------------------------------------- helpers

fn rebuild_children(node: &PlanRef, f: &mut impl FnMut(&PlanRef) -> PlanRef) -> PlanRef {
    use LogicalOp::*;
    match &node.op {
        Unit | Scan { .. } => node.clone(),
        Select { input, predicate } => LogicalNode::select(f(input), predicate.clone()),
        Project { input, exprs } => LogicalNode::project(f(input), exprs.clone()),
        Join {
            left,
            right,
            kind,
            condition,
        } => LogicalNode::join_as_is(f(left), f(right), *kind, condition.clone()),
        Aggregate {
            input,
            group_by,
            aggs,
        } => LogicalNode::aggregate(f(input), group_by.clone(), aggs.clone()),
        Sort { input, keys } => LogicalNode::sort(f(input), keys.clone()),
        Limit { input, count } => LogicalNode::limit(f(input), *count),
        AiTrain {
            input,
            features,
            target,
        } => LogicalNode::ai_train(f(input), features.clone(), *target),
        AiInfer {
            input,
            model,
            features,
            key,
            output_name,
        } => LogicalNode::ai_infer(
            f(input),
            model.clone(),
            features.clone(),
            *key,
            output_name.clone(),
        ),
    }
}
