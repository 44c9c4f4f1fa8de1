//! Logical operator trees.
//!
//! Nodes are immutable and reference-counted; rewrites rebuild paths and
//! share untouched subtrees. Commutative join children are kept in canonical
//! order by the [`join`](LogicalNode::join) constructor (smaller canonical
//! encoding first, condition remapped), so structurally commuted queries
//! produce identical subtrees and therefore identical fingerprints.

use crate::expr::Expr;
use crate::sql::BoundAgg;
use crate::types::{ColumnType, ModelVersion, TableId};
use std::sync::Arc;

pub type PlanRef = Arc<LogicalNode>;

#[derive(Debug, Clone, PartialEq)]
pub struct LogicalNode {
    pub op: LogicalOp,
    /// Output schema of this operator.
    pub schema: Vec<(String, ColumnType)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JoinKind {
    Inner,
    Cross,
}

/// How an inference operator obtains its weights.
#[derive(Debug, Clone, PartialEq)]
pub enum InferModel {
    /// Weights produced by the `AiTrain` directly below this node.
    Trained,
    /// A registered model pinned at bind time.
    Registered {
        model: ModelVersion,
        kind: crate::model::ModelKind,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum LogicalOp {
    /// Single empty row; input of FROM-less SELECT.
    Unit,
    Scan {
        table: TableId,
        table_name: String,
        /// Projected column ordinals of the table, ascending.
        cols: Vec<usize>,
    },
    Select {
        input: PlanRef,
        predicate: Expr,
    },
    Project {
        input: PlanRef,
        exprs: Vec<(Expr, String)>,
    },
    Join {
        left: PlanRef,
        right: PlanRef,
        kind: JoinKind,
        /// Over the concatenated child schema; `None` for cross joins.
        condition: Option<Expr>,
    },
    Aggregate {
        input: PlanRef,
        group_by: Vec<Expr>,
        aggs: Vec<BoundAgg>,
    },
    Sort {
        input: PlanRef,
        /// (key, descending)
        keys: Vec<(Expr, bool)>,
    },
    Limit {
        input: PlanRef,
        count: u64,
    },
    /// Trains on its input rows and passes them through; the trained weights
    /// ride along as an execution artifact.
    AiTrain {
        input: PlanRef,
        features: Vec<usize>,
        target: usize,
    },
    /// Emits `[key, prediction]` per input row.
    AiInfer {
        input: PlanRef,
        model: InferModel,
        features: Vec<usize>,
        key: usize,
        output_name: String,
    },
}

impl LogicalNode {
    pub fn unit() -> PlanRef {
        Arc::new(LogicalNode {
            op: LogicalOp::Unit,
            schema: vec![],
        })
    }

    pub fn scan(
        table: TableId,
        table_name: impl Into<String>,
        cols: Vec<usize>,
        schema: Vec<(String, ColumnType)>,
    ) -> PlanRef {
        debug_assert_eq!(cols.len(), schema.len());
        Arc::new(LogicalNode {
            op: LogicalOp::Scan {
                table,
                table_name: table_name.into(),
                cols,
            },
            schema,
        })
    }

    pub fn select(input: PlanRef, predicate: Expr) -> PlanRef {
        let schema = input.schema.clone();
        Arc::new(LogicalNode {
            op: LogicalOp::Select { input, predicate },
            schema,
        })
    }

    pub fn project(input: PlanRef, exprs: Vec<(Expr, String)>) -> PlanRef {
        let types = input.column_types();
        let schema = exprs
            .iter()
            .map(|(e, name)| {
                let ty = e
                    .output_type(&types)
                    .expect("projection already type-checked at bind");
                (name.clone(), ty)
            })
            .collect();
        Arc::new(LogicalNode {
            op: LogicalOp::Project { input, exprs },
            schema,
        })
    }

    /// Canonicalizing join constructor: orders children by canonical
    /// encoding and remaps the condition accordingly. Returns the node and
    /// whether the children were swapped.
    pub fn join(
        left: PlanRef,
        right: PlanRef,
        kind: JoinKind,
        condition: Option<Expr>,
    ) -> (PlanRef, bool) {
        let lw = left.schema.len();
        let rw = right.schema.len();
        let lkey = super::fingerprint::structural_bytes(&left);
        let rkey = super::fingerprint::structural_bytes(&right);
        let (left, right, condition, swapped) = if rkey < lkey {
            let condition = condition.map(|c| {
                c.map_columns(&|i| if i < lw { i + rw } else { i - lw })
            });
            (right, left, condition, true)
        } else {
            (left, right, condition, false)
        };
        let mut schema = left.schema.clone();
        schema.extend(right.schema.iter().cloned());
        (
            Arc::new(LogicalNode {
                op: LogicalOp::Join {
                    left,
                    right,
                    kind,
                    condition,
                },
                schema,
            }),
            swapped,
        )
    }

    /// Join without canonical reordering. Rewrites use this to preserve the
    /// child order established at lowering, keeping upstream column
    /// references valid.
    pub fn join_as_is(
        left: PlanRef,
        right: PlanRef,
        kind: JoinKind,
        condition: Option<Expr>,
    ) -> PlanRef {
        let mut schema = left.schema.clone();
        schema.extend(right.schema.iter().cloned());
        Arc::new(LogicalNode {
            op: LogicalOp::Join {
                left,
                right,
                kind,
                condition,
            },
            schema,
        })
    }

    pub fn aggregate(input: PlanRef, group_by: Vec<Expr>, aggs: Vec<BoundAgg>) -> PlanRef {
        let types = input.column_types();
        let mut schema = Vec::new();
        for (i, g) in group_by.iter().enumerate() {
            let ty = g.output_type(&types).expect("group key type-checked");
            schema.push((format!("group{i}"), ty));
        }
        for a in &aggs {
            schema.push((a.func.name().to_string(), a.output_type));
        }
        Arc::new(LogicalNode {
            op: LogicalOp::Aggregate {
                input,
                group_by,
                aggs,
            },
            schema,
        })
    }

    pub fn sort(input: PlanRef, keys: Vec<(Expr, bool)>) -> PlanRef {
        let schema = input.schema.clone();
        Arc::new(LogicalNode {
            op: LogicalOp::Sort { input, keys },
            schema,
        })
    }

    pub fn limit(input: PlanRef, count: u64) -> PlanRef {
        let schema = input.schema.clone();
        Arc::new(LogicalNode {
            op: LogicalOp::Limit { input, count },
            schema,
        })
    }

    pub fn ai_train(input: PlanRef, features: Vec<usize>, target: usize) -> PlanRef {
        let schema = input.schema.clone();
        Arc::new(LogicalNode {
            op: LogicalOp::AiTrain {
                input,
                features,
                target,
            },
            schema,
        })
    }

    pub fn ai_infer(
        input: PlanRef,
        model: InferModel,
        features: Vec<usize>,
        key: usize,
        output_name: impl Into<String>,
    ) -> PlanRef {
        let output_name = output_name.into();
        let key_col = input.schema[key].clone();
        let predicted_ty = match &model {
            InferModel::Trained => ColumnType::Float64,
            InferModel::Registered { kind, .. } => match kind {
                crate::model::ModelKind::RidgeRegressor => ColumnType::Float64,
                crate::model::ModelKind::HashEmbedder => ColumnType::Vector,
                crate::model::ModelKind::GenerativeMock => ColumnType::Int64,
            },
        };
        let schema = vec![key_col, (output_name.clone(), predicted_ty)];
        Arc::new(LogicalNode {
            op: LogicalOp::AiInfer {
                input,
                model,
                features,
                key,
                output_name,
            },
            schema,
        })
    }

    pub fn column_types(&self) -> Vec<ColumnType> {
        self.schema.iter().map(|(_, t)| *t).collect()
    }

    pub fn children(&self) -> Vec<&PlanRef> {
        match &self.op {
            LogicalOp::Unit | LogicalOp::Scan { .. } => vec![],
            LogicalOp::Select { input, .. }
            | LogicalOp::Project { input, .. }
            | LogicalOp::Aggregate { input, .. }
            | LogicalOp::Sort { input, .. }
            | LogicalOp::Limit { input, .. }
            | LogicalOp::AiTrain { input, .. }
            | LogicalOp::AiInfer { input, .. } => vec![input],
            LogicalOp::Join { left, right, .. } => vec![left, right],
        }
    }

    /// Short operator label for explain output.
    pub fn label(&self) -> String {
        match &self.op {
            LogicalOp::Unit => "Unit".into(),
            LogicalOp::Scan {
                table_name, cols, ..
            } => format!("Scan {table_name} [{} cols]", cols.len()),
            LogicalOp::Select { predicate, .. } => format!("Select {predicate}"),
            LogicalOp::Project { exprs, .. } => {
                let names: Vec<&str> = exprs.iter().map(|(_, n)| n.as_str()).collect();
                format!("Project [{}]", names.join(", "))
            }
            LogicalOp::Join {
                kind, condition, ..
            } => match (kind, condition) {
                (JoinKind::Cross, _) => "CrossJoin".into(),
                (JoinKind::Inner, Some(c)) => format!("Join on {c}"),
                (JoinKind::Inner, None) => "Join".into(),
            },
            LogicalOp::Aggregate {
                group_by, aggs, ..
            } => format!("Aggregate [{} keys, {} aggs]", group_by.len(), aggs.len()),
            LogicalOp::Sort { keys, .. } => {
                let parts: Vec<String> = keys
                    .iter()
                    .map(|(e, desc)| format!("{e}{}", if *desc { " desc" } else { "" }))
                    .collect();
                format!("Sort [{}]", parts.join(", "))
            }
            LogicalOp::Limit { count, .. } => format!("Limit {count}"),
            LogicalOp::AiTrain {
                features, target, ..
            } => format!("AiTrain features={features:?} target=#{target}"),
            LogicalOp::AiInfer {
                model,
                features,
                key,
                ..
            } => {
                let m = match model {
                    InferModel::Trained => "trained".to_string(),
                    InferModel::Registered { model, .. } => model.to_string(),
                };
                format!("AiInfer model={m} features={features:?} key=#{key}")
            }
        }
    }
}
