//! Simulated AI engines: token and memory budgets, model residency, queued
//! work, and overload rebalancing.
//!
//! An engine may run several batches concurrently up to its token budget
//! (its in-flight load is the sum of padded token loads). Memory holds
//! resident model weights plus per-query state blocks; both budgets must
//! hold at every virtual-time step.

use super::batch::{MicroBatch, QueryId};
use crate::types::{ModelVersion, SimMs};
use std::collections::{BTreeMap, BTreeSet, VecDeque};

#[derive(Debug)]
pub struct EngineState {
    pub id: usize,
    pub token_budget: u64,
    pub memory_budget_mb: f64,
    pub resident: BTreeSet<ModelVersion>,
    pub resident_mb: BTreeMap<ModelVersion, f64>,
    pub inflight_tokens: u64,
    pub queued: VecDeque<MicroBatch>,
    pub queued_tokens: u64,
    /// KV-style blocks held per query until the query completes.
    pub state_blocks: BTreeMap<QueryId, f64>,
    pub peak_memory_mb: f64,
    pub peak_inflight_tokens: u64,
    pub batches_done: u64,
    pub faults: u64,
}

impl EngineState {
    pub fn new(id: usize, token_budget: u64, memory_budget_mb: f64) -> EngineState {
        EngineState {
            id,
            token_budget,
            memory_budget_mb,
            resident: BTreeSet::new(),
            resident_mb: BTreeMap::new(),
            inflight_tokens: 0,
            queued: VecDeque::new(),
            queued_tokens: 0,
            state_blocks: BTreeMap::new(),
            peak_memory_mb: 0.0,
            peak_inflight_tokens: 0,
            batches_done: 0,
            faults: 0,
        }
    }

    pub fn memory_used_mb(&self) -> f64 {
        self.resident_mb.values().sum::<f64>() + self.state_blocks.values().sum::<f64>()
    }

    /// Load fraction including queued work; the rebalance signal.
    pub fn pressure(&self) -> f64 {
        (self.inflight_tokens + self.queued_tokens) as f64 / self.token_budget.max(1) as f64
    }

    pub fn can_start(&self, load: u64) -> bool {
        self.inflight_tokens + load <= self.token_budget
    }

    pub fn note_peaks(&mut self) {
        self.peak_memory_mb = self.peak_memory_mb.max(self.memory_used_mb());
        self.peak_inflight_tokens = self.peak_inflight_tokens.max(self.inflight_tokens);
    }

    /// Makes a model resident, evicting idle resident models smallest-first
    /// if memory is tight. Returns whether the model fits plus the models
    /// evicted to make room.
    pub fn ensure_resident(
        &mut self,
        model: &ModelVersion,
        weight_mb: f64,
    ) -> (bool, Vec<ModelVersion>) {
        if self.resident.contains(model) {
            return (true, Vec::new());
        }
        let mut evicted = Vec::new();
        let mut evictable: Vec<(ModelVersion, f64)> = self
            .resident_mb
            .iter()
            .map(|(m, s)| (m.clone(), *s))
            .collect();
        evictable.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        let mut i = 0;
        while self.memory_used_mb() + weight_mb > self.memory_budget_mb && i < evictable.len() {
            let (m, _) = &evictable[i];
            self.resident.remove(m);
            self.resident_mb.remove(m);
            evicted.push(m.clone());
            i += 1;
        }
        if self.memory_used_mb() + weight_mb > self.memory_budget_mb {
            return (false, evicted);
        }
        self.resident.insert(model.clone());
        self.resident_mb.insert(model.clone(), weight_mb);
        self.note_peaks();
        (true, evicted)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MigrationAction {
    QueuedBatch {
        batch_id: u64,
        from: usize,
        to: usize,
        tokens: u64,
    },
    StateBlock {
        query: QueryId,
        from: usize,
        to: usize,
        size_mb: f64,
        transfer_ms: SimMs,
    },
}

#[derive(Debug)]
pub struct EnginePool {
    pub engines: Vec<EngineState>,
    pub no_capacity_flags: u64,
}

impl EnginePool {
    pub fn new(count: usize, token_budget: u64, memory_budget_mb: f64) -> EnginePool {
        EnginePool {
            engines: (0..count)
                .map(|i| EngineState::new(i, token_budget, memory_budget_mb))
                .collect(),
            no_capacity_flags: 0,
        }
    }

    /// Queues a batch on the least-pressured engine (ties to the lowest id),
    /// avoiding `avoid` when any alternative exists (fault retry).
    pub fn assign(&mut self, batch: MicroBatch, avoid: Option<usize>) -> usize {
        let pick = self
            .engines
            .iter()
            .filter(|e| Some(e.id) != avoid || self.engines.len() == 1)
            .min_by(|a, b| {
                a.pressure()
                    .total_cmp(&b.pressure())
                    .then_with(|| a.id.cmp(&b.id))
            })
            .map(|e| e.id)
            .expect("pool has at least one engine");
        let tokens = batch.token_load();
        let e = &mut self.engines[pick];
        e.queued_tokens += tokens;
        e.queued.push_back(batch);
        pick
    }

    /// Pops every queued batch that fits its engine's remaining budget,
    /// FIFO per engine. The caller starts them (computing durations) and
    /// accounts the in-flight load back via `begin`/`finish`.
    pub fn startable(&mut self) -> Vec<(usize, MicroBatch)> {
        let mut out = Vec::new();
        for e in &mut self.engines {
            while let Some(front) = e.queued.front() {
                let load = front.token_load();
                if e.inflight_tokens + load > e.token_budget {
                    break;
                }
                let batch = e.queued.pop_front().unwrap();
                e.queued_tokens -= load;
                e.inflight_tokens += load;
                e.note_peaks();
                out.push((e.id, batch));
            }
        }
        out
    }

    pub fn finish(&mut self, engine: usize, tokens: u64) {
        let e = &mut self.engines[engine];
        e.inflight_tokens = e.inflight_tokens.saturating_sub(tokens);
        e.batches_done += 1;
    }

    /// While one engine's pressure exceeds `threshold` and another sits
    /// below `threshold - gap`, move queued micro-batches tail-first, then
    /// migrate state blocks off memory-pressured engines. Raises the
    /// no-capacity flag (and does nothing) when every engine is hot.
    pub fn rebalance(
        &mut self,
        threshold: f64,
        gap: f64,
        transfer_ms_per_mb: f64,
    ) -> Vec<MigrationAction> {
        let mut actions = Vec::new();
        if self.engines.len() < 2 {
            if self.engines.iter().any(|e| e.pressure() > threshold) {
                self.no_capacity_flags += 1;
            }
            return actions;
        }
        if self.engines.iter().all(|e| e.pressure() > threshold) {
            self.no_capacity_flags += 1;
            return actions;
        }
        loop {
            let hot = self
                .engines
                .iter()
                .filter(|e| e.pressure() > threshold && !e.queued.is_empty())
                .max_by(|a, b| a.pressure().total_cmp(&b.pressure()).then(a.id.cmp(&b.id)))
                .map(|e| e.id);
            let cold = self
                .engines
                .iter()
                .filter(|e| e.pressure() < threshold - gap)
                .min_by(|a, b| a.pressure().total_cmp(&b.pressure()).then(a.id.cmp(&b.id)))
                .map(|e| e.id);
            let (Some(hot), Some(cold)) = (hot, cold) else { break };
            if hot == cold {
                break;
            }
            let Some(batch) = self.engines[hot].queued.pop_back() else {
                break;
            };
            let tokens = batch.token_load();
            self.engines[hot].queued_tokens -= tokens;
            let batch_id = batch.id;
            self.engines[cold].queued_tokens += tokens;
            self.engines[cold].queued.push_back(batch);
            actions.push(MigrationAction::QueuedBatch {
                batch_id,
                from: hot,
                to: cold,
                tokens,
            });
        }
        // Memory-pressure phase: move state blocks to engines with headroom.
        loop {
            let hot = self
                .engines
                .iter()
                .filter(|e| {
                    e.memory_budget_mb > 0.0
                        && e.memory_used_mb() / e.memory_budget_mb > threshold
                        && !e.state_blocks.is_empty()
                })
                .max_by(|a, b| {
                    (a.memory_used_mb() / a.memory_budget_mb)
                        .total_cmp(&(b.memory_used_mb() / b.memory_budget_mb))
                        .then(a.id.cmp(&b.id))
                })
                .map(|e| e.id);
            let Some(hot) = hot else { break };
            let cold = self
                .engines
                .iter()
                .filter(|e| {
                    e.id != hot
                        && e.memory_used_mb() / e.memory_budget_mb < threshold - gap
                })
                .min_by(|a, b| {
                    (a.memory_used_mb() / a.memory_budget_mb)
                        .total_cmp(&(b.memory_used_mb() / b.memory_budget_mb))
                        .then(a.id.cmp(&b.id))
                })
                .map(|e| e.id);
            let Some(cold) = cold else { break };
            let Some((&query, &size_mb)) = self.engines[hot].state_blocks.iter().next() else {
                break;
            };
            // The destination must hold its own budget after the move.
            if self.engines[cold].memory_used_mb() + size_mb > self.engines[cold].memory_budget_mb
            {
                break;
            }
            self.engines[hot].state_blocks.remove(&query);
            *self.engines[cold].state_blocks.entry(query).or_insert(0.0) += size_mb;
            self.engines[cold].note_peaks();
            actions.push(MigrationAction::StateBlock {
                query,
                from: hot,
                to: cold,
                size_mb,
                transfer_ms: size_mb * transfer_ms_per_mb,
            });
        }
        actions
    }

    pub fn drop_query_state(&mut self, query: QueryId) {
        for e in &mut self.engines {
            e.state_blocks.remove(&query);
        }
    }
}
