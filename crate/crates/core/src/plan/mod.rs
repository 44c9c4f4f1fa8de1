//! Logical planning: lowering, rewrites, fingerprints, and explain output.

pub mod fingerprint;
pub mod logical;
mod lower;
mod rewrite;

pub use fingerprint::{fingerprint, PlanFingerprint, UnpinnedPlan};
pub use logical::{InferModel, JoinKind, LogicalNode, LogicalOp, PlanRef};
pub use lower::lower_select;
pub use rewrite::{apply_rewrites, default_rules, RewriteRule};

use crate::types::SnapshotVersion;
use std::fmt::Write;

/// A logical plan plus its snapshot pin. The pin is assigned once at
/// optimizer admission (one snapshot per query) and participates in every
/// fingerprint below the root.
#[derive(Debug, Clone, PartialEq)]
pub struct LogicalPlan {
    pub root: PlanRef,
    pub pin: Option<SnapshotVersion>,
    /// Rewrite trace accumulated by [`optimize_logical`].
    pub trace: Vec<String>,
}

impl LogicalPlan {
    pub fn new(root: PlanRef) -> LogicalPlan {
        LogicalPlan {
            root,
            pin: None,
            trace: Vec::new(),
        }
    }

    pub fn pinned(mut self, snapshot: SnapshotVersion) -> LogicalPlan {
        self.pin = Some(snapshot);
        self
    }

    pub fn fingerprint_of(&self, node: &PlanRef) -> Result<PlanFingerprint, UnpinnedPlan> {
        let pin = self.pin.ok_or(UnpinnedPlan)?;
        Ok(fingerprint(node, pin))
    }

    /// One operator per line, indented by depth, fingerprint prefix first,
    /// pinned snapshot on every line.
    pub fn explain(&self) -> Result<String, UnpinnedPlan> {
        let pin = self.pin.ok_or(UnpinnedPlan)?;
        let mut out = String::new();
        fn walk(node: &PlanRef, pin: SnapshotVersion, depth: usize, out: &mut String) {
            let fp = fingerprint(node, pin);
            let _ = writeln!(
                out,
                "{}{} {} @{}",
                "  ".repeat(depth),
                fp.prefix(),
                node.label(),
                pin
            );
            for child in node.children() {
                walk(child, pin, depth + 1, out);
            }
        }
        walk(&self.root, pin, 0, &mut out);
        Ok(out)
    }
}

/// Lowers and rewrites a bound SELECT with the default rule set.
pub fn optimize_logical(stmt: &crate::sql::BoundSelect) -> LogicalPlan {
    let lowered = lower_select(stmt);
    let (root, trace) = apply_rewrites(&lowered, &default_rules());
    LogicalPlan {
        root,
        pin: None,
        trace,
    }
}
