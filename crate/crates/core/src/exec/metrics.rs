//! Run metrics: throughput, latency percentiles, padding, sharing counters,
//! engine peaks, cache statistics. Serialization is deterministic (sorted
//! maps, shortest-round-trip floats), so equal runs produce byte-identical
//! JSON.

use crate::cache::CacheStats;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TenantMetrics {
    pub queries: u64,
    pub throughput_qpm: f64,
    pub latency_p50_ms: f64,
    pub latency_p95_ms: f64,
    pub latency_p99_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EngineMetrics {
    pub id: usize,
    pub peak_memory_mb: f64,
    pub peak_inflight_tokens: u64,
    pub batches_done: u64,
    pub faults: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CseStats {
    /// Nodes subscribed to by more than one query.
    pub shared_nodes: u64,
    /// Executions avoided: sum over shared nodes of (subscribers - 1).
    pub saved_executions: u64,
    pub total_nodes: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub makespan_ms: f64,
    pub queries_completed: u64,
    pub queries_failed: u64,
    pub per_tenant: BTreeMap<String, TenantMetrics>,
    pub padding_waste_tokens: u64,
    pub cse: CseStats,
    pub engines: Vec<EngineMetrics>,
    pub cache: CacheStats,
    pub migrations: u64,
    pub migration_penalty_ms: f64,
    pub no_capacity_flags: u64,
    pub dispatched_batches: u64,
    pub dispatched_items: u64,
    pub faults: u64,
    pub budget_violations: u64,
}

impl Metrics {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }

    /// One row per (config, tenant, metric): `config_id,tenant,metric,value`.
    /// Engine and global metrics use the `_all` tenant.
    pub fn to_csv(&self, config_id: &str) -> String {
        let mut out = String::from("config_id,tenant,metric,value\n");
        let mut row = |tenant: &str, metric: &str, value: String| {
            let _ = writeln!(out, "{config_id},{tenant},{metric},{value}");
        };
        row("_all", "makespan_ms", fmt(self.makespan_ms));
        row("_all", "queries_completed", self.queries_completed.to_string());
        row("_all", "queries_failed", self.queries_failed.to_string());
        row("_all", "padding_waste_tokens", self.padding_waste_tokens.to_string());
        row("_all", "cse_shared_nodes", self.cse.shared_nodes.to_string());
        row("_all", "cse_saved_executions", self.cse.saved_executions.to_string());
        row("_all", "migrations", self.migrations.to_string());
        row("_all", "no_capacity_flags", self.no_capacity_flags.to_string());
        row("_all", "dispatched_batches", self.dispatched_batches.to_string());
        row("_all", "dispatched_items", self.dispatched_items.to_string());
        row("_all", "faults", self.faults.to_string());
        let total_qpm: f64 = self.per_tenant.values().map(|t| t.throughput_qpm).sum();
        row("_all", "throughput_qpm", fmt(total_qpm));
        for (tenant, t) in &self.per_tenant {
            row(tenant, "queries", t.queries.to_string());
            row(tenant, "throughput_qpm", fmt(t.throughput_qpm));
            row(tenant, "latency_p50_ms", fmt(t.latency_p50_ms));
            row(tenant, "latency_p95_ms", fmt(t.latency_p95_ms));
            row(tenant, "latency_p99_ms", fmt(t.latency_p99_ms));
        }
        for e in &self.engines {
            let label = format!("engine{}", e.id);
            row("_all", &format!("{label}_peak_memory_mb"), fmt(e.peak_memory_mb));
            row(
                "_all",
                &format!("{label}_peak_inflight_tokens"),
                e.peak_inflight_tokens.to_string(),
            );
            row("_all", &format!("{label}_batches_done"), e.batches_done.to_string());
        }
        for (tier, mb) in &self.cache.occupancy_mb {
            row("_all", &format!("cache_{tier}_mb"), fmt(*mb));
        }
        out
    }

    pub fn peak_memory_mb(&self) -> f64 {
        self.engines
            .iter()
            .map(|e| e.peak_memory_mb)
            .fold(0.0, f64::max)
    }

    pub fn total_throughput_qpm(&self) -> f64 {
        self.per_tenant.values().map(|t| t.throughput_qpm).sum()
    }
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Nearest-rank percentile over an unsorted sample. `p` in [0, 100].
pub fn percentile(samples: &[f64], p: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}
