//! Lowers bound statements to logical plans.
//!
//! The binder's column ordinals live in syntactic from-item order; the
//! canonical-join constructor may reorder children, so lowering tracks each
//! from-item's offset in plan space and remaps every expression it installs.
//! The final projection restores the syntactic output order whenever the two
//! disagree, so a core's output schema always matches its bound output.

use super::logical::{InferModel, JoinKind, LogicalNode, PlanRef};
use crate::expr::Expr;
use crate::sql::{
    BoundCore, BoundJoin, BoundPredict, BoundPredictSpec, BoundSelect, BoundSource, CoreKind,
};

pub fn lower_select(stmt: &BoundSelect) -> PlanRef {
    let mut plan = lower_core(&stmt.core);
    if !stmt.order_by.is_empty() {
        plan = LogicalNode::sort(plan, stmt.order_by.clone());
    }
    if let Some(n) = stmt.limit {
        plan = LogicalNode::limit(plan, n);
    }
    plan
}

fn lower_core(core: &BoundCore) -> PlanRef {
    // Binder-space spans of each from-item.
    let spans: Vec<(usize, usize)> = core
        .from
        .iter()
        .map(|f| (f.offset, f.source.output().len()))
        .collect();

    let mut plan: Option<PlanRef> = None;
    // Plan-space offset of each already-joined item.
    let mut plan_offsets: Vec<usize> = Vec::new();

    for (i, item) in core.from.iter().enumerate() {
        let child = lower_source(&item.source);
        let child_width = child.schema.len();
        match plan.take() {
            None => {
                plan = Some(child);
                plan_offsets.push(0);
            }
            Some(prev) => {
                let prev_width = prev.schema.len();
                // Remap a binder-space ordinal (over items 0..=i) into the
                // pre-swap (prev ++ child) space.
                let to_concat = |c: usize| -> usize {
                    for (j, (start, width)) in spans.iter().enumerate().take(i) {
                        if c >= *start && c < start + width {
                            return plan_offsets[j] + (c - start);
                        }
                    }
                    let (start, _) = spans[i];
                    prev_width + (c - start)
                };
                let (kind, condition) = match &item.join {
                    BoundJoin::First => unreachable!("First join after item 0"),
                    BoundJoin::Cross => (JoinKind::Cross, None),
                    BoundJoin::Inner(on) => {
                        (JoinKind::Inner, Some(on.map_columns(&to_concat)))
                    }
                };
                let (node, swapped) = LogicalNode::join(prev, child, kind, condition);
                if swapped {
                    for off in plan_offsets.iter_mut() {
                        *off += child_width;
                    }
                    plan_offsets.push(0);
                } else {
                    plan_offsets.push(prev_width);
                }
                plan = Some(node);
            }
        }
    }

    let mut plan = plan.unwrap_or_else(LogicalNode::unit);
    let to_plan = |c: usize| -> usize {
        for (j, (start, width)) in spans.iter().enumerate() {
            if c >= *start && c < start + width {
                return plan_offsets[j] + (c - start);
            }
        }
        unreachable!("binder ordinal {c} outside all from-item spans")
    };
    let remap = |e: &Expr| e.map_columns(&to_plan);

    if let Some(w) = &core.where_clause {
        plan = LogicalNode::select(plan, remap(w));
    }

    match &core.kind {
        CoreKind::Project(projections) => {
            let exprs: Vec<(Expr, String)> = projections
                .iter()
                .map(|(e, n)| (remap(e), n.clone()))
                .collect();
            if !is_identity(&exprs, &plan) {
                plan = LogicalNode::project(plan, exprs);
            }
        }
        CoreKind::Aggregate {
            group_by,
            aggs,
            projection,
        } => {
            let group_by: Vec<Expr> = group_by.iter().map(&remap).collect();
            let aggs = aggs
                .iter()
                .map(|a| crate::sql::BoundAgg {
                    func: a.func,
                    arg: a.arg.as_ref().map(&remap),
                    output_type: a.output_type,
                })
                .collect();
            plan = LogicalNode::aggregate(plan, group_by, aggs);
            // Projection is over the aggregate output; no remapping needed.
            let exprs: Vec<(Expr, String)> = projection.clone();
            if !is_identity(&exprs, &plan) {
                plan = LogicalNode::project(plan, exprs);
            }
        }
    }
    plan
}

fn is_identity(exprs: &[(Expr, String)], input: &PlanRef) -> bool {
    exprs.len() == input.schema.len()
        && exprs.iter().enumerate().all(|(i, (e, name))| {
            matches!(e, Expr::Column(c) if *c == i) && *name == input.schema[i].0
        })
}

fn lower_source(source: &BoundSource) -> PlanRef {
    match source {
        BoundSource::Table { id, name, schema } => LogicalNode::scan(
            *id,
            name.clone(),
            (0..schema.len()).collect(),
            schema.clone(),
        ),
        BoundSource::Sub(core) => lower_core(core),
        BoundSource::Predict(p) => lower_predict(p),
    }
}

fn lower_predict(p: &BoundPredict) -> PlanRef {
    let input = lower_core(&p.input);
    debug_assert_eq!(input.schema.len(), p.input.output.len());
    match &p.spec {
        BoundPredictSpec::TrainOn { features } => {
            let train = LogicalNode::ai_train(input, features.clone(), p.target);
            LogicalNode::ai_infer(
                train,
                InferModel::Trained,
                features.clone(),
                p.key,
                p.target_name.clone(),
            )
        }
        BoundPredictSpec::UsingModel {
            model,
            kind,
            features,
        } => LogicalNode::ai_infer(
            input,
            InferModel::Registered {
                model: model.clone(),
                kind: *kind,
            },
            features.clone(),
            p.key,
            p.target_name.clone(),
        ),
    }
}
