//! Physical operator trees with cost/quality annotations.
//!
//! Every physical node records the fingerprint of the logical subplan it
//! implements; that fingerprint is the identity used for shared execution
//! and cache keys. Latency annotations are the same numbers the virtual-time
//! executor charges, so estimates and simulation share one set of constants.

use crate::cache::{CacheKey, CacheKind, CachedView};
use crate::expr::Expr;
use crate::model::ModelKind;
use crate::plan::{InferModel, PlanFingerprint};
use crate::sql::BoundAgg;
use crate::types::{ColumnType, SimMs, SnapshotVersion, TableId};
use std::sync::Arc;

pub type PhysRef = Arc<PhysicalNode>;

/// (simulated latency, quality) annotation. Latency totals add along the
/// critical path; quality is the minimum over AI operators in the subtree
/// (relational operators are quality-neutral).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostQuality {
    pub latency_ms: SimMs,
    pub quality: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PipelineVariant {
    Direct,
    Staged,
}

impl PipelineVariant {
    pub fn name(self) -> &'static str {
        match self {
            PipelineVariant::Direct => "direct",
            PipelineVariant::Staged => "staged",
        }
    }
}

/// Engine placement of an AI operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Placement {
    /// Dispatcher picks the least-loaded engine per micro-batch.
    Any,
    Engine(usize),
}

impl std::fmt::Display for Placement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Placement::Any => f.write_str("any"),
            Placement::Engine(i) => write!(f, "engine{i}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PhysicalOp {
    Unit,
    FullScan {
        table: TableId,
        table_name: String,
        cols: Vec<usize>,
    },
    /// Scan with an inline predicate (over the scan's output columns).
    FilteredScan {
        table: TableId,
        table_name: String,
        cols: Vec<usize>,
        predicate: Expr,
    },
    Filter {
        input: PhysRef,
        predicate: Expr,
    },
    HashJoin {
        left: PhysRef,
        right: PhysRef,
        /// Equi-key expressions over left / right child rows.
        left_key: Expr,
        right_key: Expr,
        /// Non-equi remainder of the join condition, over the joined row.
        remainder: Option<Expr>,
    },
    MergeJoin {
        left: PhysRef,
        right: PhysRef,
        left_key: Expr,
        right_key: Expr,
        remainder: Option<Expr>,
    },
    NestedLoopJoin {
        left: PhysRef,
        right: PhysRef,
        condition: Option<Expr>,
    },
    Project {
        input: PhysRef,
        exprs: Vec<(Expr, String)>,
    },
    HashAggregate {
        input: PhysRef,
        group_by: Vec<Expr>,
        aggs: Vec<BoundAgg>,
    },
    Sort {
        input: PhysRef,
        keys: Vec<(Expr, bool)>,
    },
    Limit {
        input: PhysRef,
        count: u64,
    },
    AiTrain {
        input: PhysRef,
        features: Vec<usize>,
        target: usize,
        placement: Placement,
    },
    AiInfer {
        input: PhysRef,
        model: InferModel,
        features: Vec<usize>,
        key: usize,
        output_name: String,
        variant: PipelineVariant,
        placement: Placement,
    },
    /// Reads a cached intermediate; falls back to executing the replaced
    /// subplan if the entry is gone at read time.
    CacheRead {
        key: CacheKey,
        view: CachedView,
        fallback: PhysRef,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalNode {
    pub op: PhysicalOp,
    pub schema: Vec<(String, ColumnType)>,
    /// Fingerprint of the logical subplan this node implements.
    pub fingerprint: PlanFingerprint,
    /// Estimated output cardinality.
    pub est_rows: f64,
    /// This node's own simulated latency.
    pub node_latency_ms: SimMs,
    /// This node's own quality contribution (1.0 for relational operators).
    pub own_quality: f64,
    /// Critical-path latency and minimum quality of the whole subtree.
    pub total: CostQuality,
}

impl PhysicalNode {
    pub fn children(&self) -> Vec<&PhysRef> {
        match &self.op {
            PhysicalOp::Unit
            | PhysicalOp::FullScan { .. }
            | PhysicalOp::FilteredScan { .. } => vec![],
            PhysicalOp::Filter { input, .. }
            | PhysicalOp::Project { input, .. }
            | PhysicalOp::HashAggregate { input, .. }
            | PhysicalOp::Sort { input, .. }
            | PhysicalOp::Limit { input, .. }
            | PhysicalOp::AiTrain { input, .. }
            | PhysicalOp::AiInfer { input, .. } => vec![input],
            PhysicalOp::HashJoin { left, right, .. }
            | PhysicalOp::MergeJoin { left, right, .. }
            | PhysicalOp::NestedLoopJoin { left, right, .. } => vec![left, right],
            PhysicalOp::CacheRead { .. } => vec![],
        }
    }

    pub fn count_nodes(&self) -> usize {
        1 + self
            .children()
            .iter()
            .map(|c| c.count_nodes())
            .sum::<usize>()
    }

    pub fn label(&self) -> String {
        match &self.op {
            PhysicalOp::Unit => "Unit".into(),
            PhysicalOp::FullScan {
                table_name, cols, ..
            } => format!("FullScan {table_name} [{} cols]", cols.len()),
            PhysicalOp::FilteredScan {
                table_name,
                predicate,
                ..
            } => format!("FilteredScan {table_name} {predicate}"),
            PhysicalOp::Filter { predicate, .. } => format!("Filter {predicate}"),
            PhysicalOp::HashJoin {
                left_key,
                right_key,
                ..
            } => format!("HashJoin {left_key}={right_key}"),
            PhysicalOp::MergeJoin {
                left_key,
                right_key,
                ..
            } => format!("MergeJoin {left_key}={right_key}"),
            PhysicalOp::NestedLoopJoin { condition, .. } => match condition {
                Some(c) => format!("NestedLoopJoin {c}"),
                None => "NestedLoopJoin cross".into(),
            },
            PhysicalOp::Project { exprs, .. } => {
                let names: Vec<&str> = exprs.iter().map(|(_, n)| n.as_str()).collect();
                format!("Project [{}]", names.join(", "))
            }
            PhysicalOp::HashAggregate {
                group_by, aggs, ..
            } => format!("HashAggregate [{} keys, {} aggs]", group_by.len(), aggs.len()),
            PhysicalOp::Sort { keys, .. } => format!("Sort [{} keys]", keys.len()),
            PhysicalOp::Limit { count, .. } => format!("Limit {count}"),
            PhysicalOp::AiTrain { placement, .. } => format!("AiTrain @{placement}"),
            PhysicalOp::AiInfer {
                model,
                variant,
                placement,
                ..
            } => {
                let m = match model {
                    InferModel::Trained => "trained".to_string(),
                    InferModel::Registered { model, .. } => model.to_string(),
                };
                format!("AiInfer {m} {} @{placement}", variant.name())
            }
            PhysicalOp::CacheRead { key, view, .. } => {
                format!("CacheRead {} {:.3}MB {}", key.kind.name(), view.size_mb, view.tier.name())
            }
        }
    }

    /// Deterministic byte encoding of the physical tree; the tie-break key
    /// for plan selection.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        encode_into(self, &mut out);
        out
    }
}

fn encode_into(node: &PhysicalNode, out: &mut Vec<u8>) {
    out.extend_from_slice(&node.fingerprint.0.to_be_bytes());
    let tag: &[u8] = match &node.op {
        PhysicalOp::Unit => b"unit",
        PhysicalOp::FullScan { .. } => b"fullscan",
        PhysicalOp::FilteredScan { .. } => b"filteredscan",
        PhysicalOp::Filter { .. } => b"filter",
        PhysicalOp::HashJoin { .. } => b"hashjoin",
        PhysicalOp::MergeJoin { .. } => b"mergejoin",
        PhysicalOp::NestedLoopJoin { .. } => b"nlj",
        PhysicalOp::Project { .. } => b"project",
        PhysicalOp::HashAggregate { .. } => b"hashagg",
        PhysicalOp::Sort { .. } => b"sort",
        PhysicalOp::Limit { .. } => b"limit",
        PhysicalOp::AiTrain { .. } => b"aitrain",
        PhysicalOp::AiInfer { .. } => b"aiinfer",
        PhysicalOp::CacheRead { .. } => b"cacheread",
    };
    out.extend_from_slice(tag);
    match &node.op {
        PhysicalOp::AiTrain { placement, .. } => {
            out.extend_from_slice(format!("{placement}").as_bytes());
        }
        PhysicalOp::AiInfer {
            variant, placement, ..
        } => {
            out.extend_from_slice(variant.name().as_bytes());
            out.extend_from_slice(format!("{placement}").as_bytes());
        }
        _ => {}
    }
    for child in node.children() {
        encode_into(child, out);
    }
}

/// The cache key a node's materialized result would live under, or `None`
/// for node kinds that are never materialized. Shared by the optimizer's
/// substitution pass and the executor's write-back so keys always agree.
pub fn cache_key_for(node: &PhysicalNode, pin: SnapshotVersion) -> Option<CacheKey> {
    let (kind, model) = match &node.op {
        PhysicalOp::HashJoin { .. }
        | PhysicalOp::MergeJoin { .. }
        | PhysicalOp::NestedLoopJoin { .. }
        | PhysicalOp::HashAggregate { .. } => (CacheKind::RelationalIntermediate, None),
        PhysicalOp::AiInfer { model, .. } => {
            let (kind, mv) = match model {
                InferModel::Registered { model, kind } => (
                    if *kind == ModelKind::HashEmbedder {
                        CacheKind::Embedding
                    } else {
                        CacheKind::RelationalIntermediate
                    },
                    Some(model.clone()),
                ),
                InferModel::Trained => (CacheKind::RelationalIntermediate, None),
            };
            (kind, mv)
        }
        _ => return None,
    };
    Some(CacheKey {
        kind,
        fingerprint: node.fingerprint,
        snapshot: pin,
        model,
    })
}

/// Key for a trained-weights artifact, keyed by the training subplan.
pub fn trained_weights_key(train_fp: PlanFingerprint, pin: SnapshotVersion) -> CacheKey {
    CacheKey {
        kind: CacheKind::OptimizerState,
        fingerprint: train_fp,
        snapshot: pin,
        model: None,
    }
}

/// Post-order traversal that recomputes subtree totals from annotations.
pub fn retotal(node: &PhysicalNode) -> CostQuality {
    let mut latency: SimMs = 0.0;
    let mut quality = node.own_quality;
    for child in node.children() {
        let t = child.total;
        latency = latency.max(t.latency_ms);
        quality = quality.min(t.quality);
    }
    CostQuality {
        latency_ms: latency + node.node_latency_ms,
        quality,
    }
}

/// Renders `explain physical` text: operator tree with per-node
/// (latency, quality) and the plan total on the root line.
pub fn explain_physical(root: &PhysRef) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "total: latency={:.3}ms quality={:.3}",
        root.total.latency_ms, root.total.quality
    );
    fn walk(node: &PhysRef, depth: usize, out: &mut String) {
        let _ = writeln!(
            out,
            "{}{} {} (latency={:.3}ms quality={:.3} rows~{:.0})",
            "  ".repeat(depth),
            node.fingerprint.prefix(),
            node.label(),
            node.node_latency_ms,
            node.own_quality,
            node.est_rows,
        );
        for child in node.children() {
            walk(child, depth + 1, out);
        }
        if let PhysicalOp::CacheRead { fallback, .. } = &node.op {
            let _ = writeln!(
                out,
                "{}(fallback: {})",
                "  ".repeat(depth + 1),
                fallback.label()
            );
        }
    }
    walk(root, 0, &mut out);
    out
}
