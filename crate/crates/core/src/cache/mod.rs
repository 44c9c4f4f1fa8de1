//! Unified multi-tier cache for relational intermediates and AI artifacts.
//!
//! Every cacheable object — intermediate row sets, embedding blocks, model
//! weights, KV-style state blocks, trained optimizer state — shares one key
//! shape: kind, content fingerprint, snapshot, and optional model version.
//! Validity is exact-match: superseded snapshots or model versions simply
//! stop matching, and catalog events drop them eagerly.
//!
//! Eviction uses a benefit-density score (decayed access frequency divided
//! by size). The score function is the policy seam: anything that maps an
//! entry plus telemetry to a number can replace it.
//!
//! Key conventions: registered model weights use `SnapshotVersion::ZERO`
//! (their validity is the model version, and data commits do not touch
//! them); everything data-derived carries the producing query's pin.

use crate::catalog::CatalogEvent;
use crate::plan::PlanFingerprint;
use crate::types::{ModelVersion, SimMs, SnapshotVersion};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Mutex;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CacheError {
    #[error("object of {size_mb} MB exceeds the largest tier capacity {max_mb} MB")]
    TooLarge { size_mb: f64, max_mb: f64 },
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum CacheKind {
    RelationalIntermediate,
    Embedding,
    ModelWeights,
    KvBlock,
    OptimizerState,
}

impl CacheKind {
    pub fn name(self) -> &'static str {
        match self {
            CacheKind::RelationalIntermediate => "relational",
            CacheKind::Embedding => "embedding",
            CacheKind::ModelWeights => "model_weights",
            CacheKind::KvBlock => "kv_block",
            CacheKind::OptimizerState => "optimizer_state",
        }
    }

    pub const ALL: [CacheKind; 5] = [
        CacheKind::RelationalIntermediate,
        CacheKind::Embedding,
        CacheKind::ModelWeights,
        CacheKind::KvBlock,
        CacheKind::OptimizerState,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CacheKey {
    pub kind: CacheKind,
    pub fingerprint: PlanFingerprint,
    pub snapshot: SnapshotVersion,
    pub model: Option<ModelVersion>,
}

impl CacheKey {
    /// Key of a registered model's weights artifact. Weights use the zero
    /// snapshot sentinel: their validity is the model version alone.
    pub fn model_weights(mv: &ModelVersion) -> CacheKey {
        CacheKey {
            kind: CacheKind::ModelWeights,
            fingerprint: PlanFingerprint(crate::types::fnv128(
                format!("weights:{mv}").as_bytes(),
            )),
            snapshot: SnapshotVersion::ZERO,
            model: Some(mv.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tier {
    /// Simulated accelerator memory.
    T0Accelerator = 0,
    /// Simulated host memory.
    T1Host = 1,
    /// Simulated secondary storage.
    T2Disk = 2,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::T0Accelerator, Tier::T1Host, Tier::T2Disk];

    pub fn index(self) -> usize {
        self as usize
    }

    fn below(self) -> Option<Tier> {
        match self {
            Tier::T0Accelerator => Some(Tier::T1Host),
            Tier::T1Host => Some(Tier::T2Disk),
            Tier::T2Disk => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Tier::T0Accelerator => "t0_accelerator",
            Tier::T1Host => "t1_host",
            Tier::T2Disk => "t2_disk",
        }
    }
}

/// Per-tier capacities and costs. Read cost must increase with tier depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheConfig {
    pub capacity_mb: [f64; 3],
    pub read_ms_per_mb: [f64; 3],
    pub transfer_ms_per_mb: f64,
    /// Score decay per simulated millisecond of idleness.
    pub decay_per_ms: f64,
}

impl Default for CacheConfig {
    fn default() -> Self {
        CacheConfig {
            capacity_mb: [100.0, 1000.0, 10000.0],
            read_ms_per_mb: [0.01, 0.1, 1.0],
            transfer_ms_per_mb: 0.2,
            decay_per_ms: 0.99,
        }
    }
}

/// The actual cached object. Sizes are simulated; payloads are real so the
/// executor can reuse results without recomputation.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum CachePayload {
    #[default]
    None,
    Rows(std::sync::Arc<crate::catalog::RowSet>),
    Weights(std::sync::Arc<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry {
    pub key: CacheKey,
    pub size_mb: f64,
    pub tier: Tier,
    pub access_count: u64,
    pub last_access: SimMs,
    pub pinned: bool,
    pub payload: CachePayload,
}

/// Benefit-density score: decayed access frequency per MB. Higher keeps.
pub fn score(entry: &CacheEntry, now: SimMs, decay_per_ms: f64) -> f64 {
    debug_assert!(now >= entry.last_access);
    let idle = (now - entry.last_access).max(0.0);
    entry.access_count as f64 * decay_per_ms.powf(idle) / entry.size_mb
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlacementReport {
    /// Final tier, or `None` if nothing could make room.
    pub placed: Option<Tier>,
    pub evicted: Vec<CacheKey>,
    pub demoted: Vec<(CacheKey, Tier)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    pub tier: Tier,
    pub read_latency_ms: SimMs,
    pub payload: CachePayload,
}

/// Point-in-time view for optimizer admission: later cache mutations are
/// invisible; the executor re-validates at read time and recomputes on miss.
#[derive(Debug, Clone, Default)]
pub struct CacheIndex {
    entries: BTreeMap<CacheKey, CachedView>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CachedView {
    pub size_mb: f64,
    pub tier: Tier,
    pub read_latency_ms: SimMs,
}

impl CacheIndex {
    pub fn get(&self, key: &CacheKey) -> Option<&CachedView> {
        self.entries.get(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: BTreeMap<String, u64>,
    pub misses: BTreeMap<String, u64>,
    pub evictions: u64,
    pub demotions: u64,
    pub promotions: u64,
    pub invalidated: u64,
    pub occupancy_mb: BTreeMap<String, f64>,
}

#[derive(Default)]
struct Inner {
    entries: BTreeMap<CacheKey, CacheEntry>,
    used_mb: [f64; 3],
    hits: BTreeMap<String, u64>,
    misses: BTreeMap<String, u64>,
    evictions: u64,
    demotions: u64,
    promotions: u64,
    invalidated: u64,
}

/// The unified cache. Safe for concurrent use; invalidation is atomic with
/// respect to reads.
pub struct CacheManager {
    config: CacheConfig,
    inner: Mutex<Inner>,
}

impl CacheManager {
    pub fn new(config: CacheConfig) -> CacheManager {
        assert!(config.capacity_mb.iter().all(|&c| c > 0.0));
        assert!(
            config.read_ms_per_mb[0] < config.read_ms_per_mb[1]
                && config.read_ms_per_mb[1] < config.read_ms_per_mb[2],
            "tier read costs must increase with depth"
        );
        CacheManager {
            config,
            inner: Mutex::new(Inner::default()),
        }
    }

    pub fn config(&self) -> &CacheConfig {
        &self.config
    }

    /// Inserts `key`, evicting lower-scoring entries from the preferred tier
    /// and demoting tier-by-tier when space cannot be freed. A fresh entry
    /// starts with one access (the put itself).
    pub fn put(
        &self,
        key: CacheKey,
        size_mb: f64,
        preferred: Tier,
        pinned: bool,
        now: SimMs,
    ) -> Result<PlacementReport, CacheError> {
        self.put_payload(key, size_mb, preferred, pinned, now, CachePayload::None)
    }

    /// [`put`](Self::put) with a real payload attached.
    pub fn put_payload(
        &self,
        key: CacheKey,
        size_mb: f64,
        preferred: Tier,
        pinned: bool,
        now: SimMs,
        payload: CachePayload,
    ) -> Result<PlacementReport, CacheError> {
        let max_mb = self
            .config
            .capacity_mb
            .iter()
            .cloned()
            .fold(f64::MIN, f64::max);
        if size_mb > max_mb {
            return Err(CacheError::TooLarge { size_mb, max_mb });
        }
        let mut inner = self.inner.lock().unwrap();
        let mut report = PlacementReport::default();
        // Re-putting an existing key refreshes it in place.
        if let Some(existing) = inner.entries.get(&key).cloned() {
            inner.remove(&existing.key);
        }
        let entry = CacheEntry {
            key,
            size_mb,
            tier: preferred,
            access_count: 1,
            last_access: now,
            pinned,
            payload,
        };
        let placed = inner.place(&self.config, entry, preferred, now, &mut report);
        report.placed = placed;
        Ok(report)
    }

    /// Hit updates recency and count and charges the tier read cost; a miss
    /// is side-effect free. A hit on secondary storage promotes to host
    /// memory when room can be made.
    pub fn get(&self, key: &CacheKey, now: SimMs) -> Option<Hit> {
        let mut inner = self.inner.lock().unwrap();
        let Some(mut entry) = inner.entries.get(key).cloned() else {
            *inner.misses.entry(key.kind.name().into()).or_default() += 1;
            return None;
        };
        entry.access_count += 1;
        entry.last_access = now;
        let latency = self.config.read_ms_per_mb[entry.tier.index()] * entry.size_mb;
        let tier = entry.tier;
        let payload = entry.payload.clone();
        inner.entries.insert(key.clone(), entry.clone());
        *inner.hits.entry(key.kind.name().into()).or_default() += 1;
        // Simple promotion: a disk hit moves the entry up to host memory.
        if tier == Tier::T2Disk {
            inner.remove(key);
            let mut report = PlacementReport::default();
            let promoted =
                inner.place_at_exactly(&self.config, entry.clone(), Tier::T1Host, now, &mut report);
            if promoted {
                inner.promotions += 1;
            } else {
                // Could not make room above; keep it where it was.
                inner.insert(entry);
            }
        }
        Some(Hit {
            tier,
            read_latency_ms: latency,
            payload,
        })
    }

    /// Removes all entries whose key matches, atomically w.r.t. readers.
    pub fn invalidate(&self, pred: impl Fn(&CacheKey) -> bool) -> usize {
        let mut inner = self.inner.lock().unwrap();
        let doomed: Vec<CacheKey> = inner
            .entries
            .keys()
            .filter(|k| pred(k))
            .cloned()
            .collect();
        for key in &doomed {
            inner.remove(key);
        }
        inner.invalidated += doomed.len() as u64;
        doomed.len()
    }

    /// Invalidation rules wired from the catalog: data commits supersede all
    /// data-derived entries below the new version; model registration
    /// supersedes older versions of that model.
    pub fn apply_catalog_event(&self, event: &CatalogEvent) {
        match event {
            CatalogEvent::DataCommitted { version } => {
                let v = *version;
                self.invalidate(|k| k.kind != CacheKind::ModelWeights && k.snapshot < v);
            }
            CatalogEvent::ModelRegistered { name, version } => {
                let (name, version) = (name.clone(), *version);
                self.invalidate(|k| {
                    k.model
                        .as_ref()
                        .is_some_and(|m| m.name == name && m.version < version)
                });
            }
            CatalogEvent::ModelDropped { name } => {
                let name = name.clone();
                self.invalidate(|k| k.model.as_ref().is_some_and(|m| m.name == name));
            }
        }
    }

    pub fn set_pinned(&self, key: &CacheKey, pinned: bool) -> bool {
        let mut inner = self.inner.lock().unwrap();
        match inner.entries.get_mut(key) {
            Some(e) => {
                e.pinned = pinned;
                true
            }
            None => false,
        }
    }

    pub fn snapshot_index(&self) -> CacheIndex {
        let inner = self.inner.lock().unwrap();
        let entries = inner
            .entries
            .values()
            .map(|e| {
                (
                    e.key.clone(),
                    CachedView {
                        size_mb: e.size_mb,
                        tier: e.tier,
                        read_latency_ms: self.config.read_ms_per_mb[e.tier.index()] * e.size_mb,
                    },
                )
            })
            .collect();
        CacheIndex { entries }
    }

    pub fn entry(&self, key: &CacheKey) -> Option<CacheEntry> {
        self.inner.lock().unwrap().entries.get(key).cloned()
    }

    pub fn entries(&self) -> Vec<CacheEntry> {
        self.inner.lock().unwrap().entries.values().cloned().collect()
    }

    pub fn stats(&self) -> CacheStats {
        let inner = self.inner.lock().unwrap();
        let mut occupancy = BTreeMap::new();
        for tier in Tier::ALL {
            occupancy.insert(tier.name().to_string(), inner.used_mb[tier.index()]);
        }
        CacheStats {
            hits: inner.hits.clone(),
            misses: inner.misses.clone(),
            evictions: inner.evictions,
            demotions: inner.demotions,
            promotions: inner.promotions,
            invalidated: inner.invalidated,
            occupancy_mb: occupancy,
        }
    }
}

impl Inner {
    fn insert(&mut self, entry: CacheEntry) {
        self.used_mb[entry.tier.index()] += entry.size_mb;
        self.entries.insert(entry.key.clone(), entry);
    }

    fn remove(&mut self, key: &CacheKey) -> Option<CacheEntry> {
        let entry = self.entries.remove(key)?;
        self.used_mb[entry.tier.index()] -= entry.size_mb;
        Some(entry)
    }

    /// Places `entry` at `tier` or below, demoting it tier-by-tier when no
    /// room can be freed. Returns the final tier.
    fn place(
        &mut self,
        config: &CacheConfig,
        mut entry: CacheEntry,
        tier: Tier,
        now: SimMs,
        report: &mut PlacementReport,
    ) -> Option<Tier> {
        let mut current = Some(tier);
        while let Some(t) = current {
            if entry.size_mb <= config.capacity_mb[t.index()]
                && self.place_at_exactly(config, entry.clone(), t, now, report)
            {
                return Some(t);
            }
            current = t.below();
            if let Some(lower) = current {
                report.demoted.push((entry.key.clone(), lower));
                self.demotions += 1;
                entry.tier = lower;
            }
        }
        None
    }

    /// Tries to fit `entry` at exactly `tier`, evicting strictly
    /// lower-scoring unpinned entries in ascending score order. Evicted
    /// entries demote one tier (dropping off the bottom).
    fn place_at_exactly(
        &mut self,
        config: &CacheConfig,
        mut entry: CacheEntry,
        tier: Tier,
        now: SimMs,
        report: &mut PlacementReport,
    ) -> bool {
        let cap = config.capacity_mb[tier.index()];
        if entry.size_mb > cap {
            return false;
        }
        let incoming_score = score(&entry, now, config.decay_per_ms);
        let mut free = cap - self.used_mb[tier.index()];
        if free < entry.size_mb {
            // Lower-scoring unpinned victims, ascending; key order breaks ties.
            let mut victims: Vec<(f64, CacheKey, f64)> = self
                .entries
                .values()
                .filter(|e| e.tier == tier && !e.pinned)
                .map(|e| (score(e, now, config.decay_per_ms), e.key.clone(), e.size_mb))
                .filter(|(s, _, _)| *s < incoming_score)
                .collect();
            victims.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
            let mut chosen = Vec::new();
            for (_, key, size) in victims {
                if free >= entry.size_mb {
                    break;
                }
                free += size;
                chosen.push(key);
            }
            if free < entry.size_mb {
                return false;
            }
            for key in chosen {
                let victim = self.remove(&key).expect("victim present");
                self.evictions += 1;
                match tier.below() {
                    None => report.evicted.push(key),
                    Some(lower) => {
                        let mut demoted = victim;
                        demoted.tier = lower;
                        report.demoted.push((demoted.key.clone(), lower));
                        self.demotions += 1;
                        if self
                            .place(config, demoted.clone(), lower, now, report)
                            .is_none()
                        {
                            report.evicted.push(demoted.key);
                        }
                    }
                }
            }
        }
        entry.tier = tier;
        self.insert(entry);
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(n: u128) -> CacheKey {
        CacheKey {
            kind: CacheKind::RelationalIntermediate,
            fingerprint: PlanFingerprint(n),
            snapshot: SnapshotVersion(1),
            model: None,
        }
    }

    fn small_cache() -> CacheManager {
        CacheManager::new(CacheConfig {
            capacity_mb: [100.0, 200.0, 400.0],
            read_ms_per_mb: [0.01, 0.1, 1.0],
            transfer_ms_per_mb: 0.2,
            decay_per_ms: 0.99,
        })
    }

    #[test]
    fn put_into_empty_tier_places_without_evictions() {
        let cache = small_cache();
        let report = cache
            .put(key(1), 10.0, Tier::T0Accelerator, false, 0.0)
            .unwrap();
        assert_eq!(report.placed, Some(Tier::T0Accelerator));
        assert!(report.evicted.is_empty() && report.demoted.is_empty());
    }

    #[test]
    fn oversized_put_is_rejected() {
        let cache = small_cache();
        let err = cache
            .put(key(1), 500.0, Tier::T0Accelerator, false, 0.0)
            .unwrap_err();
        assert!(matches!(err, CacheError::TooLarge { .. }));
    }

    #[test]
    fn get_miss_then_hit_at_placed_tier() {
        let cache = small_cache();
        assert!(cache.get(&key(1), 0.0).is_none());
        cache.put(key(1), 10.0, Tier::T1Host, false, 0.0).unwrap();
        let hit = cache.get(&key(1), 1.0).unwrap();
        assert_eq!(hit.tier, Tier::T1Host);
        assert!((hit.read_latency_ms - 1.0).abs() < 1e-12); // 0.1 ms/MB * 10 MB
    }

    #[test]
    fn newer_snapshot_is_a_distinct_key() {
        let cache = small_cache();
        cache.put(key(1), 1.0, Tier::T0Accelerator, false, 0.0).unwrap();
        let newer = CacheKey {
            snapshot: SnapshotVersion(2),
            ..key(1)
        };
        assert!(cache.get(&newer, 1.0).is_none());
    }

    #[test]
    fn low_score_entries_demote_to_make_room() {
        let cache = small_cache();
        // Fill T0 with ten idle 10 MB entries.
        for i in 0..10 {
            cache
                .put(key(i), 10.0, Tier::T0Accelerator, false, 0.0)
                .unwrap();
        }
        // A heavily used incoming entry at t=1000 outranks the stale ones.
        let hot = key(100);
        cache.put(hot.clone(), 5.0, Tier::T1Host, false, 0.0).unwrap();
        for t in 1..50 {
            cache.get(&hot, t as f64);
        }
        let report = cache
            .put(key(101), 30.0, Tier::T0Accelerator, false, 1000.0)
            .unwrap();
        assert_eq!(report.placed, Some(Tier::T0Accelerator));
        // 30 MB had to move down: three 10 MB victims demoted to T1.
        let demoted_to_t1 = report
            .demoted
            .iter()
            .filter(|(_, t)| *t == Tier::T1Host)
            .count();
        assert_eq!(demoted_to_t1, 3);
        // Demotions happen in ascending key order here because all victims
        // have identical scores.
        let demoted: Vec<_> = report
            .demoted
            .iter()
            .map(|(k, _)| k.fingerprint.0)
            .collect();
        assert_eq!(demoted, vec![0, 1, 2]);
    }

    #[test]
    fn invalidate_by_predicate_counts_matches() {
        let cache = small_cache();
        for i in 0..5 {
            cache
                .put(
                    CacheKey {
                        snapshot: SnapshotVersion(i),
                        ..key(i as u128)
                    },
                    1.0,
                    Tier::T1Host,
                    false,
                    0.0,
                )
                .unwrap();
        }
        assert_eq!(cache.invalidate(|k| k.snapshot < SnapshotVersion(3)), 3);
        assert_eq!(cache.invalidate(|_| false), 0);
        assert_eq!(cache.entries().len(), 2);
    }

    #[test]
    fn model_registration_invalidates_older_versions_only() {
        let cache = small_cache();
        let mk = |v: u32| CacheKey {
            kind: CacheKind::Embedding,
            fingerprint: PlanFingerprint(7),
            snapshot: SnapshotVersion(1),
            model: Some(ModelVersion {
                name: "m".into(),
                version: v,
            }),
        };
        cache.put(mk(1), 1.0, Tier::T1Host, false, 0.0).unwrap();
        cache.put(mk(2), 1.0, Tier::T1Host, false, 0.0).unwrap();
        cache.apply_catalog_event(&CatalogEvent::ModelRegistered {
            name: "m".into(),
            version: 2,
        });
        assert!(cache.get(&mk(1), 1.0).is_none());
        assert!(cache.get(&mk(2), 1.0).is_some());
    }

    #[test]
    fn data_commit_spares_model_weights() {
        let cache = small_cache();
        let weights = CacheKey {
            kind: CacheKind::ModelWeights,
            fingerprint: PlanFingerprint(9),
            snapshot: SnapshotVersion::ZERO,
            model: Some(ModelVersion {
                name: "m".into(),
                version: 1,
            }),
        };
        let derived = key(1);
        cache.put(weights.clone(), 1.0, Tier::T0Accelerator, true, 0.0).unwrap();
        cache.put(derived.clone(), 1.0, Tier::T0Accelerator, false, 0.0).unwrap();
        cache.apply_catalog_event(&CatalogEvent::DataCommitted {
            version: SnapshotVersion(5),
        });
        assert!(cache.get(&weights, 1.0).is_some());
        assert!(cache.get(&derived, 1.0).is_none());
    }

    #[test]
    fn pinned_entries_never_evict() {
        let cache = small_cache();
        cache.put(key(1), 100.0, Tier::T0Accelerator, true, 0.0).unwrap();
        let report = cache
            .put(key(2), 50.0, Tier::T0Accelerator, false, 100.0)
            .unwrap();
        // T0 is fully occupied by a pinned entry: incoming demotes.
        assert_eq!(report.placed, Some(Tier::T1Host));
        assert!(cache.entry(&key(1)).is_some());
    }

    #[test]
    fn score_halves_with_double_size() {
        let e1 = CacheEntry {
            key: key(1),
            size_mb: 10.0,
            tier: Tier::T0Accelerator,
            access_count: 4,
            last_access: 0.0,
            pinned: false,
            payload: CachePayload::None,
        };
        let e2 = CacheEntry { size_mb: 20.0, ..e1.clone() };
        assert!((score(&e1, 0.0, 0.99) - 2.0 * score(&e2, 0.0, 0.99)).abs() < 1e-12);
    }

    #[test]
    fn zero_count_scores_zero() {
        let e = CacheEntry {
            key: key(1),
            size_mb: 10.0,
            tier: Tier::T0Accelerator,
            access_count: 0,
            last_access: 0.0,
            pinned: false,
            payload: CachePayload::None,
        };
        assert_eq!(score(&e, 50.0, 0.99), 0.0);
    }

    #[test]
    fn decay_matches_closed_form() {
        let e = CacheEntry {
            key: key(1),
            size_mb: 1.0,
            tier: Tier::T0Accelerator,
            access_count: 10,
            last_access: 0.0,
            pinned: false,
            payload: CachePayload::None,
        };
        let idle = score(&e, 100.0, 0.99);
        let fresh = score(&e, 0.0, 0.99);
        let ratio = idle / fresh;
        assert!((ratio - 0.99f64.powf(100.0)).abs() < 1e-12);
        assert!((ratio - 0.366).abs() < 0.005);
    }

    #[test]
    fn snapshot_index_is_a_stable_view() {
        let cache = small_cache();
        cache.put(key(1), 1.0, Tier::T0Accelerator, false, 0.0).unwrap();
        cache.put(key(2), 1.0, Tier::T0Accelerator, false, 0.0).unwrap();
        cache.put(key(3), 1.0, Tier::T0Accelerator, false, 0.0).unwrap();
        let view = cache.snapshot_index();
        assert_eq!(view.len(), 3);
        cache.invalidate(|_| true);
        assert_eq!(view.len(), 3, "view is immutable after mutation");
        assert!(cache.snapshot_index().is_empty());
    }

    #[test]
    fn capacity_is_respected_after_every_operation() {
        let cache = small_cache();
        let mut rng = 92821u64;
        for step in 0..500 {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let k = key((rng >> 33) as u128 % 40);
            let now = step as f64;
            match rng % 3 {
                0 => {
                    let size = 1.0 + (rng >> 7) as f64 % 60.0;
                    let tier = Tier::ALL[(rng >> 13) as usize % 3];
                    let _ = cache.put(k, size, tier, false, now);
                }
                1 => {
                    let _ = cache.get(&k, now);
                }
                _ => {
                    cache.invalidate(|kk| kk.fingerprint == k.fingerprint);
                }
            }
            let mut used = [0.0f64; 3];
            for e in cache.entries() {
                used[e.tier.index()] += e.size_mb;
            }
            for t in Tier::ALL {
                assert!(
                    used[t.index()] <= cache.config().capacity_mb[t.index()] + 1e-9,
                    "step {step}: tier {t:?} over capacity"
                );
            }
        }
    }
}
