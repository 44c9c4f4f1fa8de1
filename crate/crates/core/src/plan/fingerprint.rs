//! Content fingerprints of subplans.
//!
//! A fingerprint hashes the canonical structure of a subplan together with
//! the query's pinned snapshot and the (name, version) of every registered
//! model in the subtree. Equal fingerprints identify subplans that compute
//! identical results at identical versions: the identity used for shared
//! execution and cache keys.
//!
//! Canonical form is established before hashing: join children are ordered
//! by the join constructor, and conjunct and commutative-operand order is
//! normalized by expression encoding.

use super::logical::{InferModel, JoinKind, LogicalOp, PlanRef};
use crate::types::{fnv128, SnapshotVersion};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// 128-bit content hash of a canonical subplan at pinned versions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PlanFingerprint(pub u128);

impl fmt::Display for PlanFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

impl PlanFingerprint {
    /// First 8 hex characters, the prefix shown in explain output.
    pub fn prefix(&self) -> String {
        format!("{:032x}", self.0)[..8].to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("plan has no pinned snapshot; pin it at admission before fingerprinting")]
pub struct UnpinnedPlan;

/// Structure-only encoding, without versions. Used for canonical child
/// ordering; stable under join commutation and conjunct reordering.
pub fn structural_bytes(node: &PlanRef) -> Vec<u8> {
    let mut out = Vec::new();
    encode(node, &mut out);
    out
}

/// Fingerprint of the subplan rooted at `node`, pinned at `snapshot`.
pub fn fingerprint(node: &PlanRef, snapshot: SnapshotVersion) -> PlanFingerprint {
    let mut bytes = structural_bytes(node);
    bytes.extend_from_slice(&snapshot.0.to_be_bytes());
    PlanFingerprint(fnv128(&bytes))
}

fn encode(node: &PlanRef, out: &mut Vec<u8>) {
    match &node.op {
        LogicalOp::Unit => out.push(b'U'),
        LogicalOp::Scan { table, cols, .. } => {
            out.push(b'S');
            out.extend_from_slice(&table.0.to_be_bytes());
            out.extend_from_slice(&(cols.len() as u64).to_be_bytes());
            for c in cols {
                out.extend_from_slice(&(*c as u64).to_be_bytes());
            }
        }
        LogicalOp::Select { input, predicate } => {
            out.push(b'F');
            predicate.canonical_encode(out);
            encode(input, out);
        }
        LogicalOp::Project { input, exprs } => {
            out.push(b'P');
            out.extend_from_slice(&(exprs.len() as u64).to_be_bytes());
            for (e, name) in exprs {
                e.canonical_encode(out);
                out.extend_from_slice(name.as_bytes());
                out.push(0);
            }
            encode(input, out);
        }
        LogicalOp::Join {
            left,
            right,
            kind,
            condition,
        } => {
            out.push(b'J');
            out.push(match kind {
                JoinKind::Inner => b'i',
                JoinKind::Cross => b'c',
            });
            match condition {
                None => out.push(0),
                Some(c) => {
                    out.push(1);
                    c.canonical_encode(out);
                }
            }
            encode(left, out);
            encode(right, out);
        }
        LogicalOp::Aggregate {
            input,
            group_by,
            aggs,
        } => {
            out.push(b'A');
            out.extend_from_slice(&(group_by.len() as u64).to_be_bytes());
            for g in group_by {
                g.canonical_encode(out);
            }
            out.extend_from_slice(&(aggs.len() as u64).to_be_bytes());
            for a in aggs {
                out.extend_from_slice(a.func.name().as_bytes());
                match &a.arg {
                    None => out.push(0),
                    Some(e) => {
                        out.push(1);
                        e.canonical_encode(out);
                    }
                }
            }
            encode(input, out);
        }
        LogicalOp::Sort { input, keys } => {
            out.push(b'O');
            out.extend_from_slice(&(keys.len() as u64).to_be_bytes());
            for (e, desc) in keys {
                e.canonical_encode(out);
                out.push(*desc as u8);
            }
            encode(input, out);
        }
        LogicalOp::Limit { input, count } => {
            out.push(b'L');
            out.extend_from_slice(&count.to_be_bytes());
            encode(input, out);
        }
        LogicalOp::AiTrain {
            input,
            features,
            target,
        } => {
            out.push(b'T');
            out.extend_from_slice(&(features.len() as u64).to_be_bytes());
            for f in features {
                out.extend_from_slice(&(*f as u64).to_be_bytes());
            }
            out.extend_from_slice(&(*target as u64).to_be_bytes());
            encode(input, out);
        }
        LogicalOp::AiInfer {
            input,
            model,
            features,
            key,
            output_name,
        } => {
            out.push(b'I');
            match model {
                InferModel::Trained => out.push(0),
                InferModel::Registered { model, kind } => {
                    out.push(1);
                    out.extend_from_slice(model.name.as_bytes());
                    out.push(0);
                    out.extend_from_slice(&model.version.to_be_bytes());
                    out.extend_from_slice(kind.name().as_bytes());
                }
            }
            out.extend_from_slice(&(features.len() as u64).to_be_bytes());
            for f in features {
                out.extend_from_slice(&(*f as u64).to_be_bytes());
            }
            out.extend_from_slice(&(*key as u64).to_be_bytes());
            out.extend_from_slice(output_name.as_bytes());
            out.push(0);
            encode(input, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{BinaryOp, Expr};
    use crate::plan::LogicalNode;
    use crate::types::{ColumnType, TableId};

    fn scan(id: u32, name: &str) -> PlanRef {
        LogicalNode::scan(
            TableId(id),
            name,
            vec![0, 1],
            vec![
                ("a".into(), ColumnType::Int64),
                ("b".into(), ColumnType::Int64),
            ],
        )
    }

    #[test]
    fn commuted_joins_share_a_fingerprint() {
        let (ab, _) = LogicalNode::join(
            scan(1, "r"),
            scan(2, "s"),
            JoinKind::Inner,
            Some(Expr::binary(BinaryOp::Eq, Expr::col(0), Expr::col(2))),
        );
        let (ba, _) = LogicalNode::join(
            scan(2, "s"),
            scan(1, "r"),
            JoinKind::Inner,
            Some(Expr::binary(BinaryOp::Eq, Expr::col(2), Expr::col(0))),
        );
        let pin = SnapshotVersion(5);
        assert_eq!(fingerprint(&ab, pin), fingerprint(&ba, pin));
    }

    #[test]
    fn snapshot_changes_the_fingerprint() {
        let plan = scan(1, "r");
        assert_ne!(
            fingerprint(&plan, SnapshotVersion(5)),
            fingerprint(&plan, SnapshotVersion(6))
        );
    }

    #[test]
    fn conjunct_order_does_not_change_the_fingerprint() {
        let base = scan(1, "r");
        let p1 = Expr::and(
            Expr::binary(BinaryOp::Gt, Expr::col(0), Expr::int(1)),
            Expr::binary(BinaryOp::Lt, Expr::col(1), Expr::int(2)),
        );
        let p2 = Expr::and(
            Expr::binary(BinaryOp::Lt, Expr::col(1), Expr::int(2)),
            Expr::binary(BinaryOp::Gt, Expr::col(0), Expr::int(1)),
        );
        let pin = SnapshotVersion(1);
        assert_eq!(
            fingerprint(&LogicalNode::select(base.clone(), p1), pin),
            fingerprint(&LogicalNode::select(base, p2), pin)
        );
    }
}
