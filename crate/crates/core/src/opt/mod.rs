//! The physical optimizer: bounded-objective search over the joint space of
//! relational and AI implementation choices, with cache-aware substitution.

pub mod cost;
pub mod physical;
mod search;

pub use cost::{CostConstants, ModelCostBook, ProfileRegistry, StatsView};
pub use physical::{
    cache_key_for, explain_physical, retotal, trained_weights_key, CostQuality, PhysRef,
    PhysicalNode, PhysicalOp, PipelineVariant, Placement,
};
pub use search::{cache_aware_substitute, choose, dominates, enumerate_physical, Candidate};

use crate::cache::CacheIndex;
use crate::plan::LogicalPlan;
use crate::types::{ModelVersion, SnapshotVersion};
use std::collections::BTreeSet;
use thiserror::Error;

/// Bounded-objective formulation: one axis is optimized, the other bounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    MinLatencyGivenQuality { min_quality: f64 },
    MaxQualityGivenLatency { max_latency_ms: f64 },
}

impl Default for Objective {
    fn default() -> Self {
        Objective::MinLatencyGivenQuality { min_quality: 0.0 }
    }
}

impl Objective {
    /// Parses the CLI forms `quality>=0.9` and `latency<=100ms`.
    pub fn parse(text: &str) -> Result<Objective, String> {
        let t = text.trim().replace(' ', "");
        if let Some(rest) = t.strip_prefix("quality>=") {
            let q: f64 = rest
                .parse()
                .map_err(|_| format!("bad quality bound '{rest}'"))?;
            if !(0.0..=1.0).contains(&q) {
                return Err(format!("quality bound {q} outside [0, 1]"));
            }
            return Ok(Objective::MinLatencyGivenQuality { min_quality: q });
        }
        if let Some(rest) = t.strip_prefix("latency<=") {
            let rest = rest.strip_suffix("ms").unwrap_or(rest);
            let l: f64 = rest
                .parse()
                .map_err(|_| format!("bad latency bound '{rest}'"))?;
            if l <= 0.0 {
                return Err(format!("latency bound {l} must be positive"));
            }
            return Ok(Objective::MaxQualityGivenLatency { max_latency_ms: l });
        }
        Err(format!(
            "objective '{text}' is neither quality>=<q> nor latency<=<ms>"
        ))
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Objective::MinLatencyGivenQuality { min_quality } => {
                write!(f, "quality>={min_quality}")
            }
            Objective::MaxQualityGivenLatency { max_latency_ms } => {
                write!(f, "latency<={max_latency_ms}ms")
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizeError {
    #[error("plan has no pinned snapshot")]
    Unpinned,
    #[error("missing table statistics for {0}")]
    MissingStats(String),
    #[error("missing quality profile for {0}")]
    MissingProfile(String),
    #[error("objective infeasible; best available latency={:.3}ms quality={:.3}", best.latency_ms, best.quality)]
    Infeasible { best: CostQuality },
}

/// What the optimizer knows about engines at admission: which models are
/// resident where. Placement on a resident engine skips the load cost.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EngineView {
    pub resident: Vec<BTreeSet<ModelVersion>>,
}

impl EngineView {
    pub fn new(engine_count: usize) -> EngineView {
        EngineView {
            resident: vec![BTreeSet::new(); engine_count],
        }
    }

    pub fn engine_count(&self) -> usize {
        self.resident.len()
    }

    pub fn resident_anywhere(&self, model: &ModelVersion) -> bool {
        self.resident.iter().any(|set| set.contains(model))
    }

    pub fn resident_on(&self, engine: usize, model: &ModelVersion) -> bool {
        self.resident
            .get(engine)
            .is_some_and(|set| set.contains(model))
    }
}

/// Everything the optimizer reads. All views are consistent copies taken at
/// admission; the optimizer never races live state.
pub struct OptimizerContext<'a> {
    pub pin: SnapshotVersion,
    pub stats: &'a StatsView,
    pub constants: &'a CostConstants,
    pub costs: &'a ModelCostBook,
    pub profiles: &'a ProfileRegistry,
    pub engines: &'a EngineView,
}

/// Full pipeline: enumerate, choose under the objective, substitute cached
/// intermediates.
pub fn optimize(
    plan: &LogicalPlan,
    ctx: &OptimizerContext,
    objective: &Objective,
    cache_index: Option<&CacheIndex>,
) -> Result<PhysRef, OptimizeError> {
    let pin = plan.pin.ok_or(OptimizeError::Unpinned)?;
    debug_assert_eq!(pin, ctx.pin);
    let candidates = enumerate_physical(&plan.root, ctx)?;
    let chosen = choose(&candidates, objective)?;
    Ok(match cache_index {
        Some(index) => cache_aware_substitute(&chosen, index, pin),
        None => chosen,
    })
}
