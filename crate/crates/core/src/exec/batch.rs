//! Dynamic batching of AI dispatch items.
//!
//! Items group by (model, snapshot pin, tenant scope): batching never mixes
//! model versions or snapshot pins, and tenant-isolated modes add the tenant
//! to the key. Two policies exist: `Fixed` is one FIFO lane; `Bucket` bins
//! items by length, fills underfull buckets from adjacent ones at window
//! expiry, and periodically recomputes its boundaries as quantiles of
//! observed lengths.
//!
//! An engine executing a batch holds `items * max_len` token slots (ragged
//! batches occupy their padded rectangle), so padding wastes budget even
//! though per-item compute cost depends only on real tokens.

use crate::model::{InferInput, ModelKind};
use crate::types::{ModelVersion, SimMs, SnapshotVersion, Value};
use std::collections::{BTreeMap, VecDeque};

pub type QueryId = u64;
pub type NodeId = usize;

/// Which weights a batch runs against.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum GroupModel {
    Registered(ModelVersion, ModelKind),
    /// Weights produced by a specific training node.
    Trained(NodeId),
}

impl GroupModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            GroupModel::Registered(_, kind) => *kind,
            GroupModel::Trained(_) => ModelKind::RidgeRegressor,
        }
    }

    pub fn registered(&self) -> Option<&ModelVersion> {
        match self {
            GroupModel::Registered(mv, _) => Some(mv),
            GroupModel::Trained(_) => None,
        }
    }
}

/// Batching scope: items may share a batch only within one key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct GroupKey {
    pub model: GroupModel,
    pub pin: SnapshotVersion,
    /// `Some` in tenant-isolated modes.
    pub tenant: Option<String>,
}

/// One AI dispatch item.
#[derive(Debug, Clone, PartialEq)]
pub struct AiItem {
    pub item_id: u64,
    pub query: QueryId,
    pub tenant: String,
    pub node: NodeId,
    pub row_idx: usize,
    pub key_value: Value,
    pub input: InferInput,
    pub length: u64,
    pub enqueued_at: SimMs,
    pub pin: SnapshotVersion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchKind {
    Infer,
    Train,
}

/// Unit of AI dispatch. All items share the model and snapshot pin.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroBatch {
    pub id: u64,
    /// The common tenant, or `None` for a cross-tenant batch.
    pub tenant: Option<String>,
    pub items: Vec<AiItem>,
    pub model: GroupModel,
    pub pin: SnapshotVersion,
    pub kind: BatchKind,
    pub attempts: u32,
}

impl MicroBatch {
    pub fn max_len(&self) -> u64 {
        self.items.iter().map(|i| i.length).max().unwrap_or(0)
    }

    /// Padded token slots the batch occupies on an engine.
    pub fn token_load(&self) -> u64 {
        self.items.len() as u64 * self.max_len()
    }

    /// Wasted slots: sum of (max_len - len) over items.
    pub fn padding(&self) -> u64 {
        let max = self.max_len();
        self.items.iter().map(|i| max - i.length).sum()
    }

    pub fn total_tokens(&self) -> u64 {
        self.items.iter().map(|i| i.length).sum()
    }

    fn derive_tenant(items: &[AiItem]) -> Option<String> {
        let first = items.first()?.tenant.clone();
        if items.iter().all(|i| i.tenant == first) {
            Some(first)
        } else {
            None
        }
    }
}

/// Batching policy. `Fixed` is FIFO; `Bucket` is length-aware bucketing with
/// cross-bucket filling and periodic boundary recomputation.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum BatchPolicy {
    Fixed {
        max_items: usize,
        window_ms: f64,
    },
    Bucket {
        /// Strictly ascending length boundaries; `k` boundaries make `k+1`
        /// buckets.
        boundaries: Vec<u64>,
        max_items: usize,
        window_ms: f64,
        merge_period_ms: f64,
    },
}

impl BatchPolicy {
    pub fn max_items(&self) -> usize {
        match self {
            BatchPolicy::Fixed { max_items, .. } | BatchPolicy::Bucket { max_items, .. } => {
                *max_items
            }
        }
    }

    pub fn window_ms(&self) -> f64 {
        match self {
            BatchPolicy::Fixed { window_ms, .. } | BatchPolicy::Bucket { window_ms, .. } => {
                *window_ms
            }
        }
    }

    pub fn merge_period_ms(&self) -> Option<f64> {
        match self {
            BatchPolicy::Fixed { .. } => None,
            BatchPolicy::Bucket {
                merge_period_ms, ..
            } => Some(*merge_period_ms),
        }
    }

    fn validate(&self) {
        assert!(self.max_items() >= 1, "batch size must be >= 1");
        assert!(self.window_ms() > 0.0, "window must be positive");
        if let BatchPolicy::Bucket { boundaries, .. } = self {
            assert!(
                boundaries.windows(2).all(|w| w[0] < w[1]),
                "bucket boundaries must be strictly ascending"
            );
        }
    }
}

impl Default for BatchPolicy {
    fn default() -> Self {
        BatchPolicy::Fixed {
            max_items: 8,
            window_ms: 10.0,
        }
    }
}

#[derive(Debug)]
struct Group {
    buckets: Vec<VecDeque<AiItem>>,
    boundaries: Vec<u64>,
    observed: VecDeque<u64>,
    /// Producer nodes admitted for this group that have not emitted yet.
    /// While positive, underfull batches wait for the window; at zero the
    /// remainder flushes immediately.
    outstanding_producers: usize,
}

impl Group {
    fn new(policy: &BatchPolicy) -> Group {
        let boundaries = match policy {
            BatchPolicy::Fixed { .. } => Vec::new(),
            BatchPolicy::Bucket { boundaries, .. } => boundaries.clone(),
        };
        Group {
            buckets: vec![VecDeque::new(); boundaries.len() + 1],
            boundaries,
            observed: VecDeque::new(),
            outstanding_producers: 0,
        }
    }

    fn bucket_of(&self, length: u64) -> usize {
        self.boundaries
            .iter()
            .position(|&b| length <= b)
            .unwrap_or(self.boundaries.len())
    }

    fn len(&self) -> usize {
        self.buckets.iter().map(VecDeque::len).sum()
    }

    fn oldest_deadline(&self, window_ms: f64) -> Option<SimMs> {
        self.buckets
            .iter()
            .flat_map(|b| b.front())
            .map(|i| i.enqueued_at + window_ms)
            .min_by(|a, b| a.total_cmp(b))
    }
}

/// The pending-item queue and batch former.
#[derive(Debug)]
pub struct BatchQueue {
    policy: BatchPolicy,
    /// Cap on a single batch's padded token load, so every batch can start
    /// within any engine's budget.
    token_cap: u64,
    groups: BTreeMap<GroupKey, Group>,
    next_batch_id: u64,
    pub padding_emitted: u64,
}

impl BatchQueue {
    pub fn new(policy: BatchPolicy, token_cap: u64) -> BatchQueue {
        policy.validate();
        BatchQueue {
            policy,
            token_cap: token_cap.max(1),
            groups: BTreeMap::new(),
            next_batch_id: 0,
        padding_emitted: 0,
        }
    }

    pub fn policy(&self) -> &BatchPolicy {
        &self.policy
    }

    pub fn pending_items(&self) -> usize {
        self.groups.values().map(Group::len).sum()
    }

    /// Declares that a producer node targeting `key` has been admitted but
    /// has not emitted its items yet.
    pub fn register_producer(&mut self, key: &GroupKey) {
        let policy = self.policy.clone();
        let group = self
            .groups
            .entry(key.clone())
            .or_insert_with(|| Group::new(&policy));
        group.outstanding_producers += 1;
    }

    /// Producer emits its items. Returns batches that become ready by the
    /// size trigger, or everything pending once no producers remain
    /// outstanding (nothing more can join; waiting out the window would be
    /// pure delay).
    pub fn enqueue(&mut self, key: &GroupKey, items: Vec<AiItem>, now: SimMs) -> Vec<MicroBatch> {
        let policy = self.policy.clone();
        let group = self
            .groups
            .entry(key.clone())
            .or_insert_with(|| Group::new(&policy));
        group.outstanding_producers = group.outstanding_producers.saturating_sub(1);
        for item in items {
            group.observed.push_back(item.length);
            if group.observed.len() > 4096 {
                group.observed.pop_front();
            }
            let b = group.bucket_of(item.length);
            group.buckets[b].push_back(item);
        }
        let mut out = self.emit_full(key);
        if self.groups.get(key).map(|g| g.outstanding_producers == 0) == Some(true) {
            out.extend(self.flush(key));
        }
        let _ = now;
        out
    }

    /// Emits every batch due at `now`: full buckets plus expired windows
    /// (with cross-bucket filling under the bucket policy).
    pub fn form_batches(&mut self, now: SimMs) -> Vec<MicroBatch> {
        let keys: Vec<GroupKey> = self.groups.keys().cloned().collect();
        let mut out = Vec::new();
        for key in keys {
            out.extend(self.emit_full(&key));
            let window = self.policy.window_ms();
            let expired = self
                .groups
                .get(&key)
                .and_then(|g| g.oldest_deadline(window))
                .map(|d| d <= now + 1e-9)
                .unwrap_or(false);
            if expired {
                out.extend(self.emit_expired(&key, now));
            }
        }
        out
    }

    /// Next time any group's window expires.
    pub fn next_deadline(&self) -> Option<SimMs> {
        let window = self.policy.window_ms();
        self.groups
            .values()
            .filter_map(|g| g.oldest_deadline(window))
            .min_by(|a, b| a.total_cmp(b))
    }

    /// Recomputes bucket boundaries as quantiles of observed lengths and
    /// re-bins pending items (the periodic split/merge).
    pub fn merge_tick(&mut self, key: &GroupKey) {
        let BatchPolicy::Bucket { boundaries, .. } = &self.policy else {
            return;
        };
        let k = boundaries.len();

        let Some(group) = self.groups.get_mut(key) else {
            return;
        };
        if group.observed.is_empty() || k == 0 {
            return;
        }
        let mut lengths: Vec<u64> = group.observed.iter().copied().collect();
        lengths.sort_unstable();
        let mut new_bounds = Vec::with_capacity(k);
        for i in 1..=k {
            let q = (i as f64 / (k + 1) as f64 * (lengths.len() - 1) as f64).round() as usize;
            let bound = lengths[q.min(lengths.len() - 1)];
            if new_bounds.last().is_none_or(|&b| bound > b) {
                new_bounds.push(bound);
            }
        }
        if new_bounds.is_empty() || new_bounds == group.boundaries {
            return;
        }
        let items: Vec<AiItem> = group
            .buckets
            .iter_mut()
            .flat_map(|b| b.drain(..))
            .collect();
        group.boundaries = new_bounds;
        group.buckets = vec![VecDeque::new(); group.boundaries.len() + 1];
        let mut sorted = items;
        sorted.sort_by_key(|i| i.item_id);
        for item in sorted {
            let b = group.bucket_of(item.length);
            group.buckets[b].push_back(item);
        }
    }

    /// Drains every remaining item of `key` into batches immediately.
    pub fn flush(&mut self, key: &GroupKey) -> Vec<MicroBatch> {
        let mut out = self.emit_full(key);
        let max_items = self.policy.max_items();
        let token_cap = self.token_cap;
        let mut staged = Vec::new();
        if let Some(group) = self.groups.get_mut(key) {
            while let Some(bucket_idx) = group.buckets.iter().position(|b| !b.is_empty()) {
                let batch_items = take_cross_bucket(group, bucket_idx, max_items, token_cap);
                if batch_items.is_empty() {
                    break;
                }
                staged.push(batch_items);
            }
        }
        for items in staged {
            out.push(self.mk_batch(key, items));
        }
        out
    }

    /// Size-triggered emission: any bucket holding `max_items` or more (or
    /// hitting the token cap) emits FIFO batches.
    fn emit_full(&mut self, key: &GroupKey) -> Vec<MicroBatch> {
        let max_items = self.policy.max_items();
        let token_cap = self.token_cap;
        let mut staged = Vec::new();
        if let Some(group) = self.groups.get_mut(key) {
            for b in 0..group.buckets.len() {
                while group.buckets[b].len() >= max_items {
                    let items = take_batch(&mut group.buckets[b], max_items, token_cap);
                    if items.is_empty() {
                        break;
                    }
                    staged.push(items);
                }
            }
        }
        staged
            .into_iter()
            .map(|items| self.mk_batch(key, items))
            .collect()
    }

    /// Window-expiry emission with cross-bucket filling: the expired bucket
    /// forms a batch and, if underfull, pulls the oldest items from the
    /// nearest other buckets.
    fn emit_expired(&mut self, key: &GroupKey, now: SimMs) -> Vec<MicroBatch> {
        let max_items = self.policy.max_items();
        let window = self.policy.window_ms();
        let token_cap = self.token_cap;
        let mut staged = Vec::new();
        if let Some(group) = self.groups.get_mut(key) {
            loop {
                let expired_bucket = (0..group.buckets.len()).find(|&b| {
                    group.buckets[b]
                        .front()
                        .map(|i| i.enqueued_at + window <= now + 1e-9)
                        .unwrap_or(false)
                });
                let Some(b) = expired_bucket else { break };
                let items = take_cross_bucket(group, b, max_items, token_cap);
                if items.is_empty() {
                    break;
                }
                staged.push(items);
            }
        }
        staged
            .into_iter()
            .map(|items| self.mk_batch(key, items))
            .collect()
    }

    fn mk_batch(&mut self, key: &GroupKey, items: Vec<AiItem>) -> MicroBatch {
        debug_assert!(!items.is_empty());
        self.next_batch_id += 1;
        let batch = MicroBatch {
            id: self.next_batch_id,
            tenant: MicroBatch::derive_tenant(&items),
            items,
            model: key.model.clone(),
            pin: key.pin,
            kind: BatchKind::Infer,
            attempts: 0,
        };
        self.padding_emitted += batch.padding();
        batch
    }
}

/// Takes up to `max_items` items FIFO from one bucket, stopping early if the
/// padded token load would exceed `token_cap`.
fn take_batch(bucket: &mut VecDeque<AiItem>, max_items: usize, token_cap: u64) -> Vec<AiItem> {
    let mut items: Vec<AiItem> = Vec::new();
    let mut max_len = 0u64;
    while items.len() < max_items {
        let Some(next) = bucket.front() else { break };
        let new_max = max_len.max(next.length);
        let load = (items.len() as u64 + 1) * new_max;
        if !items.is_empty() && load > token_cap {
            break;
        }
        max_len = new_max;
        items.push(bucket.pop_front().unwrap());
    }
    items
}

/// Window-expiry batch assembly: starts from `bucket_idx` and fills from the
/// nearest non-empty buckets (alternating outward) until full.
fn take_cross_bucket(
    group: &mut Group,
    bucket_idx: usize,
    max_items: usize,
    token_cap: u64,
) -> Vec<AiItem> {
    let mut items = take_batch(&mut group.buckets[bucket_idx], max_items, token_cap);
    if items.len() >= max_items {
        return items;
    }
    let n = group.buckets.len();
    let mut offsets: Vec<usize> = Vec::new();
    for d in 1..n {
        if bucket_idx >= d {
            offsets.push(bucket_idx - d);
        }
        if bucket_idx + d < n {
            offsets.push(bucket_idx + d);
        }
    }
    let mut max_len = items.iter().map(|i| i.length).max().unwrap_or(0);
    for b in offsets {
        while items.len() < max_items {
            let Some(next) = group.buckets[b].front() else { break };
            let new_max = max_len.max(next.length);
            if !items.is_empty() && (items.len() as u64 + 1) * new_max > token_cap {
                break;
            }
            max_len = new_max;
            items.push(group.buckets[b].pop_front().unwrap());
        }
        if items.len() >= max_items {
            break;
        }
    }
    items
}
