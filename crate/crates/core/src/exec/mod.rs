//! Concurrent plan execution: a merged execution graph with cross-query
//! subplan sharing, dynamic batching of AI dispatches over simulated
//! engines, overload rebalancing, and a deterministic virtual-time loop.
//!
//! One coordinator owns the graph and the event loop. Submissions may come
//! from any number of contexts; results resolve through per-query handles.
//! In virtual time, identical (workload, config, seed) produce identical
//! metrics: events carry a total order (timestamp, class, owner admission
//! sequence, node id, sequence number) and every collection iterates in a
//! deterministic order.
//!
//! Relational operators execute without contention (host CPU is not the
//! modeled bottleneck); their simulated durations are the optimizer's own
//! node annotations. AI operators dispatch micro-batches to engines whose
//! token budgets bound concurrency; batch durations come from the model
//! runtime's cost accounting, which shares its formula with the optimizer.

pub mod batch;
pub mod engines;
mod eval;
pub mod metrics;

pub use batch::{AiItem, BatchKind, BatchPolicy, BatchQueue, GroupKey, GroupModel, MicroBatch};
pub use engines::{EnginePool, EngineState, MigrationAction};
pub use metrics::{percentile, CseStats, EngineMetrics, Metrics, TenantMetrics};

use crate::cache::{CacheKind, CacheManager, CachePayload, Tier};
use crate::catalog::{Catalog, Row, RowSet};
use crate::model::{
    self, batch_cost, ridge, InferInput, ModelKind,
};
use crate::opt::{
    cache_key_for, trained_weights_key, CostConstants, ModelCostBook, Objective, PhysRef,
    PhysicalOp, PipelineVariant,
};
use crate::plan::{InferModel, PlanFingerprint};
use crate::types::{derive_seed, SimMs, SnapshotVersion, Value};
use batch::{NodeId, QueryId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use std::sync::{Arc, Mutex, OnceLock};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("admission rejected: {0} queries already pending")]
    AdmissionRejected(usize),
    #[error("deadlock: no runnable work with {pending} queries pending\n{dump}")]
    Deadlock { pending: usize, dump: String },
    #[error("placement targets engine {0}, but only {1} engines are configured")]
    UnknownEngine(usize, usize),
}

/// Execution mode. Virtual time is the deterministic default; real time
/// paces the same event loop against the wall clock for integration use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    VirtualTime,
    RealTime,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExecConfig {
    pub engines: usize,
    /// Per-engine in-flight token budget.
    pub token_budget: u64,
    /// Per-engine simulated memory budget (weights + state blocks).
    pub memory_budget_mb: f64,
    pub batch_policy: BatchPolicy,
    pub overload_threshold: f64,
    pub rebalance_gap: f64,
    pub max_pending_queries: usize,
    pub cse_enabled: bool,
    /// Write operator results back to the unified cache.
    pub materialize: bool,
    /// Batch only within a tenant (baseline isolation modes).
    pub tenant_isolated_batching: bool,
    /// At most one in-flight batch per tenant (sequential baseline).
    pub sequential_per_tenant: bool,
    /// Export-execute-import baseline: one external call per AI operator,
    /// serialized through a single export channel.
    pub export_baseline: bool,
    pub export_latency_ms: f64,
    pub seed: u64,
    /// Probability that a dispatch faults and is retried elsewhere.
    pub fault_rate: f64,
    /// State-block MB per generative item, held until query completion.
    pub kv_mb_per_item: f64,
    /// Nominal token load of a training task.
    pub train_token_load: u64,
    /// Ridge regularizer for in-query training.
    pub lambda: f64,
    pub embed_dim: usize,
    pub hash_buckets: usize,
    /// Wall milliseconds per simulated millisecond in real-time mode.
    pub real_time_scale: f64,
    /// Record per-item dispatch counts (conservation checks).
    pub trace_items: bool,
    pub costs: ModelCostBook,
    pub constants: CostConstants,
}

impl Default for ExecConfig {
    fn default() -> Self {
        ExecConfig {
            engines: 2,
            token_budget: 2048,
            memory_budget_mb: 4096.0,
            batch_policy: BatchPolicy::default(),
            overload_threshold: 0.8,
            rebalance_gap: 0.2,
            max_pending_queries: 10_000,
            cse_enabled: true,
            materialize: true,
            tenant_isolated_batching: false,
            sequential_per_tenant: false,
            export_baseline: false,
            export_latency_ms: 5.0,
            seed: 0,
            fault_rate: 0.0,
            kv_mb_per_item: 0.5,
            train_token_load: 64,
            lambda: 1e-3,
            embed_dim: 64,
            hash_buckets: 32,
            real_time_scale: 0.05,
            trace_items: false,
            costs: ModelCostBook::with_defaults(),
            constants: CostConstants::default(),
        }
    }
}

/// Resolves to the query's rows (or error text) once the run completes.
#[derive(Debug, Clone)]
pub struct QueryHandle {
    pub id: QueryId,
    cell: Arc<OnceLock<Result<Arc<RowSet>, String>>>,
}

impl QueryHandle {
    pub fn result(&self) -> Option<Result<Arc<RowSet>, String>> {
        self.cell.get().cloned()
    }

    pub fn rows(&self) -> Arc<RowSet> {
        self.result()
            .expect("query not finished")
            .expect("query failed")
    }
}

/// Shared-node inspection for tests and diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeReport {
    pub fingerprint: PlanFingerprint,
    pub label: String,
    pub exec_count: u64,
    pub subscribers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NodeState {
    Waiting,
    Emitted,
    Done,
    Failed,
}

struct Node {
    plan: PhysRef,
    children: Vec<NodeId>,
    consumers: Vec<NodeId>,
    subscribers: BTreeSet<QueryId>,
    pending_children: usize,
    state: NodeState,
    result: Option<Arc<RowSet>>,
    weights: Option<Arc<Vec<f64>>>,
    ai_outputs: Vec<Option<Value>>,
    ai_remaining: usize,
    exec_count: u64,
    owner: QueryId,
    owner_seq: u64,
    pin: SnapshotVersion,
}

struct QueryRec {
    id: QueryId,
    tenant: String,
    root: NodeId,
    handle: QueryHandle,
    admitted_at: SimMs,
    finished_at: Option<SimMs>,
    migration_penalty: SimMs,
    observed_commit: SnapshotVersion,
    done: bool,
}

#[derive(Debug, Clone, PartialEq)]
enum EventKind {
    NodeFinish(NodeId),
    BatchDone { engine: usize, batch_id: u64 },
    WindowExpiry,
    MergeTick(GroupKey),
}

#[derive(Debug, Clone, PartialEq)]
struct Event {
    time: SimMs,
    class: u8,
    a: u64,
    b: u64,
    seq: u64,
    kind: EventKind,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.time
            .total_cmp(&other.time)
            .then_with(|| self.class.cmp(&other.class))
            .then_with(|| self.a.cmp(&other.a))
            .then_with(|| self.b.cmp(&other.b))
            .then_with(|| self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

struct Running {
    batch: MicroBatch,
    outputs: Vec<Value>,
    trained: Option<Arc<Vec<f64>>>,
    load_tokens: u64,
}

/// Simulated duration, per-item outputs, and trained weights (train
/// batches) of one executed batch.
type BatchExecution = (SimMs, Vec<Value>, Option<Arc<Vec<f64>>>);

struct State {
    nodes: Vec<Node>,
    shared: BTreeMap<PlanFingerprint, NodeId>,
    queries: Vec<QueryRec>,
    batch_queue: BatchQueue,
    pool: EnginePool,
    clock: SimMs,
    events: BinaryHeap<Reverse<Event>>,
    running: BTreeMap<u64, Running>,
    export_busy_until: SimMs,
    export_engine_busy: Vec<SimMs>,
    tenant_inflight: BTreeMap<String, usize>,
    tenant_hold: BTreeMap<String, VecDeque<MicroBatch>>,
    event_seq: u64,
    item_seq: u64,
    admission_seq: u64,
    item_dispatch_counts: BTreeMap<u64, u32>,
    padding_dispatched: u64,
    dispatched_batches: u64,
    dispatched_items: u64,
    faults: u64,
    migrations: u64,
    migration_penalty_total: SimMs,
    budget_violations: u64,
}

/// The executor: owns the merged graph, the engines, and the clock.
pub struct Executor {
    catalog: Arc<Catalog>,
    cache: Arc<CacheManager>,
    config: ExecConfig,
    state: Mutex<State>,
}

impl Executor {
    pub fn new(catalog: Arc<Catalog>, cache: Arc<CacheManager>, config: ExecConfig) -> Executor {
        let token_cap = config.token_budget;
        let pool = EnginePool::new(config.engines.max(1), config.token_budget, config.memory_budget_mb);
        let state = State {
            nodes: Vec::new(),
            shared: BTreeMap::new(),
            queries: Vec::new(),
            batch_queue: BatchQueue::new(config.batch_policy.clone(), token_cap),
            pool,
            clock: 0.0,
            events: BinaryHeap::new(),
            running: BTreeMap::new(),
            export_busy_until: 0.0,
            export_engine_busy: vec![0.0; config.engines.max(1)],
            tenant_inflight: BTreeMap::new(),
            tenant_hold: BTreeMap::new(),
            event_seq: 0,
            item_seq: 0,
            admission_seq: 0,
            item_dispatch_counts: BTreeMap::new(),
            padding_dispatched: 0,
            dispatched_batches: 0,
            dispatched_items: 0,
            faults: 0,
            migrations: 0,
            migration_penalty_total: 0.0,
            budget_violations: 0,
        };
        Executor {
            catalog,
            cache,
            config,
            state: Mutex::new(state),
        }
    }

    pub fn config(&self) -> &ExecConfig {
        &self.config
    }

    /// Current engine residency, the optimizer's admission view.
    pub fn engine_view(&self) -> crate::opt::EngineView {
        let state = self.state.lock().unwrap();
        crate::opt::EngineView {
            resident: state.pool.engines.iter().map(|e| e.resident.clone()).collect(),
        }
    }

    /// Admits a physical plan pinned at `pin`. The plan is merged into the
    /// execution graph, sharing any live subplan with an equal fingerprint
    /// when sharing is enabled.
    pub fn submit(
        &self,
        plan: &PhysRef,
        pin: SnapshotVersion,
        tenant: &str,
        objective: Objective,
    ) -> Result<QueryHandle, ExecError> {
        let _ = objective;
        let mut state = self.state.lock().unwrap();
        let pending = state.queries.iter().filter(|q| !q.done).count();
        if pending >= self.config.max_pending_queries {
            return Err(ExecError::AdmissionRejected(pending));
        }
        if let Some(e) = max_placement(plan) {
            if e >= self.config.engines {
                return Err(ExecError::UnknownEngine(e, self.config.engines));
            }
        }
        let query_id = state.queries.len() as QueryId;
        state.admission_seq += 1;
        let admitted_seq = state.admission_seq;
        let root = self.admit_tree(&mut state, plan, pin, query_id, admitted_seq);
        add_subscriber(&mut state.nodes, root, query_id);
        // Register batching producers for every AI node this query touches.
        self.register_producers(&mut state, root, tenant);
        let handle = QueryHandle {
            id: query_id,
            cell: Arc::new(OnceLock::new()),
        };
        let admitted_at = state.clock;
        let mut rec = QueryRec {
            id: query_id,
            tenant: tenant.to_string(),
            root,
            handle: handle.clone(),
            admitted_at,
            finished_at: None,
            migration_penalty: 0.0,
            observed_commit: SnapshotVersion::ZERO,
            done: false,
        };
        // Sharing may resolve the whole query immediately: its root can be a
        // node an earlier query already finished.
        match state.nodes[root].state {
            NodeState::Done => {
                rec.done = true;
                rec.finished_at = Some(state.clock);
                let rows = state.nodes[root].result.clone().expect("done node has rows");
                let _ = rec.handle.cell.set(Ok(rows));
            }
            NodeState::Failed => {
                rec.done = true;
                rec.finished_at = Some(state.clock);
                let _ = rec.handle.cell.set(Err("shared subplan failed".into()));
            }
            _ => {}
        }
        state.queries.push(rec);
        Ok(handle)
    }

    fn admit_tree(
        &self,
        state: &mut State,
        plan: &PhysRef,
        pin: SnapshotVersion,
        owner: QueryId,
        owner_seq: u64,
    ) -> NodeId {
        if self.config.cse_enabled {
            if let Some(&existing) = state.shared.get(&plan.fingerprint) {
                // Share only physically identical plans. Comparing encodings
                // also keeps a cache-read wrapper from adopting itself as
                // the fallback it expands on a miss (same fingerprint,
                // different operator).
                if state.nodes[existing].state != NodeState::Failed
                    && state.nodes[existing].plan.schema == plan.schema
                    && state.nodes[existing].plan.encode() == plan.encode()
                {
                    return existing;
                }
            }
        }
        let children: Vec<NodeId> = plan
            .children()
            .iter()
            .map(|c| self.admit_tree(state, c, pin, owner, owner_seq))
            .collect();
        let id = state.nodes.len();
        let pending_children = children
            .iter()
            .filter(|&&c| state.nodes[c].state != NodeState::Done)
            .count();
        for &c in &children {
            if !state.nodes[c].consumers.contains(&id) {
                state.nodes[c].consumers.push(id);
            }
        }
        state.nodes.push(Node {
            plan: plan.clone(),
            children,
            consumers: Vec::new(),
            subscribers: BTreeSet::new(),
            pending_children,
            state: NodeState::Waiting,
            result: None,
            weights: None,
            ai_outputs: Vec::new(),
            ai_remaining: 0,
            exec_count: 0,
            owner,
            owner_seq,
            pin,
        });
        state.shared.insert(plan.fingerprint, id);
        id
    }

    /// Declares every not-yet-emitted inference node in the subtree as a
    /// producer for its batching group, once per node (first admitting
    /// query). The count lets groups flush immediately when nothing further
    /// can join, instead of waiting out the window.
    fn register_producers(&self, state: &mut State, root: NodeId, tenant: &str) {
        let mut stack = vec![root];
        let mut seen = BTreeSet::new();
        while let Some(id) = stack.pop() {
            if !seen.insert(id) {
                continue;
            }
            let node = &state.nodes[id];
            for &c in &node.children {
                stack.push(c);
            }
            let fresh = matches!(node.plan.op, PhysicalOp::AiInfer { .. })
                && node.state == NodeState::Waiting
                && node.exec_count == 0
                && node.subscribers.len() <= 1;
            if fresh {
                if let Some(key) = self.group_key_for(state, &state.nodes[id], tenant) {
                    state.batch_queue.register_producer(&key);
                }
            }
        }
    }

    fn group_key_for(&self, state: &State, node: &Node, tenant: &str) -> Option<GroupKey> {
        let PhysicalOp::AiInfer { model, .. } = &node.plan.op else {
            return None;
        };
        let gm = match model {
            InferModel::Registered { model, kind } => GroupModel::Registered(model.clone(), *kind),
            InferModel::Trained => GroupModel::Trained(
                find_train_node(&state.nodes, node.children[0])
                    .expect("trained inference has a training node below"),
            ),
        };
        Some(GroupKey {
            model: gm,
            pin: node.pin,
            tenant: if self.config.tenant_isolated_batching {
                Some(tenant.to_string())
            } else {
                None
            },
        })
    }

    /// Runs every admitted query to completion and reports metrics.
    pub fn run(&self, mode: Mode) -> Result<Metrics, ExecError> {
        let mut state = self.state.lock().unwrap();
        let state = &mut *state;
        // Kick off every runnable leaf in node order.
        let runnable: Vec<NodeId> = (0..state.nodes.len())
            .filter(|&i| {
                state.nodes[i].state == NodeState::Waiting && state.nodes[i].pending_children == 0
            })
            .collect();
        for id in runnable {
            self.process_ready(state, id);
        }
        self.pump(state);
        while let Some(Reverse(event)) = state.events.pop() {
            debug_assert!(event.time >= state.clock - 1e-9);
            if mode == Mode::RealTime {
                // Pace against the wall clock; long gaps are clamped so
                // integration runs stay bounded.
                let dt_sim = (event.time - state.clock).max(0.0);
                let wall = std::time::Duration::from_secs_f64(
                    (dt_sim * self.config.real_time_scale / 1000.0).min(0.05),
                );
                if !wall.is_zero() {
                    std::thread::sleep(wall);
                }
            }
            state.clock = state.clock.max(event.time);
            match event.kind {
                EventKind::NodeFinish(node) => self.complete_node(state, node),
                EventKind::BatchDone { engine, batch_id } => {
                    self.batch_done(state, engine, batch_id)
                }
                EventKind::WindowExpiry => {
                    let now = state.clock;
                    let batches = state.batch_queue.form_batches(now);
                    for b in batches {
                        self.dispatch(state, b, None);
                    }
                    if let Some(deadline) = state.batch_queue.next_deadline() {
                        push_event(state, deadline, 3, 0, 0, EventKind::WindowExpiry);
                    }
                }
                EventKind::MergeTick(key) => {
                    state.batch_queue.merge_tick(&key);
                    let now = state.clock;
                    let batches = state.batch_queue.form_batches(now);
                    for b in batches {
                        self.dispatch(state, b, None);
                    }
                    if state.batch_queue.pending_items() > 0 {
                        if let Some(period) = self.config.batch_policy.merge_period_ms() {
                            let t = state.clock + period;
                            push_event(state, t, 4, 0, 0, EventKind::MergeTick(key));
                        }
                    }
                }
            }
            self.pump(state);
        }
        let unfinished: Vec<QueryId> = state
            .queries
            .iter()
            .filter(|q| !q.done)
            .map(|q| q.id)
            .collect();
        if !unfinished.is_empty() {
            let dump = self.dump(state);
            return Err(ExecError::Deadlock {
                pending: unfinished.len(),
                dump,
            });
        }
        Ok(self.collect_metrics(state))
    }

    /// Post-event scheduling pass: start queued batches, rebalance overload.
    fn pump(&self, state: &mut State) {
        loop {
            let started = state.pool.startable();
            if started.is_empty() {
                break;
            }
            for (engine, batch) in started {
                self.start_batch(state, engine, batch);
            }
        }
        let over = state
            .pool
            .engines
            .iter()
            .any(|e| e.pressure() > self.config.overload_threshold);
        if over && !self.config.export_baseline {
            let actions = state.pool.rebalance(
                self.config.overload_threshold,
                self.config.rebalance_gap,
                self.cache.config().transfer_ms_per_mb,
            );
            for action in &actions {
                if let MigrationAction::StateBlock {
                    query, transfer_ms, ..
                } = action
                {
                    state.queries[*query as usize].migration_penalty += transfer_ms;
                    state.migration_penalty_total += transfer_ms;
                }
            }
            state.migrations += actions.len() as u64;
            // Moved batches may now be startable on their new engines.
            if !actions.is_empty() {
                let started = state.pool.startable();
                for (engine, batch) in started {
                    self.start_batch(state, engine, batch);
                }
            }
        }
        for e in &mut state.pool.engines {
            if e.inflight_tokens > e.token_budget {
                state.budget_violations += 1;
            }
            if e.memory_used_mb() > e.memory_budget_mb + 1e-9 {
                state.budget_violations += 1;
            }
            e.note_peaks();
        }
    }

    fn process_ready(&self, state: &mut State, id: NodeId) {
        let now = state.clock;
        let plan = state.nodes[id].plan.clone();
        let pin = state.nodes[id].pin;
        match &plan.op {
            PhysicalOp::CacheRead { key, fallback, .. } => {
                if let Some(hit) = self.cache.get(key, now) {
                    // A hit without a payload falls through to recompute.
                    if let CachePayload::Rows(rows) = hit.payload {
                        state.nodes[id].result = Some(rows);
                        let t = now + hit.read_latency_ms;
                        let (a, b) = (state.nodes[id].owner_seq, id as u64);
                        push_event(state, t, 1, a, b, EventKind::NodeFinish(id));
                        return;
                    }
                }
                // Revalidation failed; expand the fallback subplan in place.
                let owner = state.nodes[id].owner;
                let owner_seq = state.nodes[id].owner_seq;
                let fallback = fallback.clone();
                let sub = self.admit_tree(state, &fallback, pin, owner, owner_seq);
                for q in state.nodes[id].subscribers.clone() {
                    add_subscriber(&mut state.nodes, sub, q);
                }
                let tenant = state.queries[owner as usize].tenant.clone();
                self.register_producers(state, sub, &tenant);
                if !state.nodes[sub].consumers.contains(&id) {
                    state.nodes[sub].consumers.push(id);
                }
                state.nodes[id].children = vec![sub];
                if state.nodes[sub].state == NodeState::Done {
                    state.nodes[id].pending_children = 0;
                    state.nodes[id].result = state.nodes[sub].result.clone();
                    let (a, b) = (state.nodes[id].owner_seq, id as u64);
                    push_event(state, now, 1, a, b, EventKind::NodeFinish(id));
                } else {
                    state.nodes[id].pending_children = 1;
                    // Kick every runnable node of the freshly expanded
                    // subtree, not just its root: mid-run admissions get no
                    // other start signal.
                    let mut runnable = Vec::new();
                    let mut stack = vec![sub];
                    let mut seen = BTreeSet::new();
                    while let Some(n) = stack.pop() {
                        if !seen.insert(n) {
                            continue;
                        }
                        stack.extend(state.nodes[n].children.iter().copied());
                        if state.nodes[n].state == NodeState::Waiting
                            && state.nodes[n].pending_children == 0
                        {
                            runnable.push(n);
                        }
                    }
                    runnable.sort_unstable();
                    for n in runnable {
                        self.process_ready(state, n);
                    }
                }
            }
            PhysicalOp::AiTrain { .. } => {
                // Cached weights skip the training dispatch entirely.
                let key = trained_weights_key(plan.fingerprint, pin);
                if let Some(hit) = self.cache.get(&key, now) {
                    if let CachePayload::Weights(w) = hit.payload {
                        let passthrough = node_input_result(&state.nodes, id);
                        let node = &mut state.nodes[id];
                        node.weights = Some(w);
                        node.result = passthrough;
                        let t = now + hit.read_latency_ms;
                        let (a, b) = (state.nodes[id].owner_seq, id as u64);
                        push_event(state, t, 1, a, b, EventKind::NodeFinish(id));
                        return;
                    }
                }
                self.note_observed_commit(state, id);
                let item_id = state.item_seq;
                state.item_seq += 1;
                let owner = state.nodes[id].owner;
                let tenant = state.queries[owner as usize].tenant.clone();
                let batch = MicroBatch {
                    id: u64::MAX - item_id, // train batches get their own id space
                    tenant: Some(tenant),
                    items: vec![AiItem {
                        item_id,
                        query: owner,
                        tenant: state.queries[owner as usize].tenant.clone(),
                        node: id,
                        row_idx: 0,
                        key_value: Value::Int64(0),
                        input: InferInput::Features(vec![]),
                        length: self.config.train_token_load,
                        enqueued_at: now,
                        pin,
                    }],
                    model: GroupModel::Trained(id),
                    pin,
                    kind: BatchKind::Train,
                    attempts: 0,
                };
                state.nodes[id].ai_remaining = 1;
                state.nodes[id].state = NodeState::Emitted;
                self.dispatch(state, batch, None);
            }
            PhysicalOp::AiInfer {
                model,
                features,
                key,
                ..
            } => {
                self.note_observed_commit(state, id);
                let input = node_input_result(&state.nodes, id).expect("infer input ready");
                let owner = state.nodes[id].owner;
                let tenant = state.queries[owner as usize].tenant.clone();
                let kind = match model {
                    InferModel::Registered { kind, .. } => *kind,
                    InferModel::Trained => ModelKind::RidgeRegressor,
                };
                if input.rows.is_empty() {
                    // No items to dispatch, but the group must still learn
                    // this producer is done so co-batched work can flush.
                    if let Some(group) = self.group_key_for(state, &state.nodes[id], &tenant) {
                        let batches = state.batch_queue.enqueue(&group, vec![], now);
                        for b in batches {
                            self.dispatch(state, b, None);
                        }
                    }
                    let node = &mut state.nodes[id];
                    node.result = Some(Arc::new(RowSet {
                        columns: plan.schema.clone(),
                        rows: vec![],
                    }));
                    node.exec_count += 1;
                    let (a, b) = (node.owner_seq, id as u64);
                    push_event(state, now, 1, a, b, EventKind::NodeFinish(id));
                    return;
                }
                let buckets = self.config.hash_buckets;
                let features = features.clone();
                let key_col = *key;
                let items: Vec<(InferInput, u64)> = crate::par::map_slice(&input.rows, |row| {
                    match kind {
                        ModelKind::RidgeRegressor => {
                            let raw: Vec<Value> =
                                features.iter().map(|&f| row.values[f].clone()).collect();
                            let hashed = ridge::hash_features(&raw, buckets);
                            (InferInput::Features(hashed), features.len() as u64)
                        }
                        ModelKind::HashEmbedder | ModelKind::GenerativeMock => {
                            let text = features
                                .iter()
                                .map(|&f| match &row.values[f] {
                                    Value::Text(s) => s.clone(),
                                    v => v.to_string(),
                                })
                                .collect::<Vec<_>>()
                                .join(" ");
                            let len = model::embed::token_count(&text).max(1);
                            (InferInput::Text(text), len)
                        }
                    }
                });
                let node = &mut state.nodes[id];
                node.ai_outputs = vec![None; input.rows.len()];
                node.ai_remaining = input.rows.len();
                node.state = NodeState::Emitted;
                node.exec_count += 1;
                let group = self
                    .group_key_for(state, &state.nodes[id], &tenant)
                    .expect("infer node has a group");
                let mut ai_items = Vec::with_capacity(input.rows.len());
                for (row_idx, (inp, len)) in items.into_iter().enumerate() {
                    let item_id = state.item_seq;
                    state.item_seq += 1;
                    ai_items.push(AiItem {
                        item_id,
                        query: owner,
                        tenant: tenant.clone(),
                        node: id,
                        row_idx,
                        key_value: input.rows[row_idx].values[key_col].clone(),
                        input: inp,
                        length: len,
                        enqueued_at: now,
                        pin,
                    });
                }
                if self.config.export_baseline {
                    // One external call per operator: no micro-batching.
                    let batch = MicroBatch {
                        id: state.dispatched_batches + 1_000_000,
                        tenant: Some(tenant),
                        items: ai_items,
                        model: group.model.clone(),
                        pin,
                        kind: BatchKind::Infer,
                        attempts: 0,
                    };
                    self.dispatch(state, batch, None);
                } else {
                    let batches = state.batch_queue.enqueue(&group, ai_items, now);
                    for b in batches {
                        self.dispatch(state, b, None);
                    }
                    if let Some(deadline) = state.batch_queue.next_deadline() {
                        push_event(state, deadline, 3, 0, 0, EventKind::WindowExpiry);
                    }
                    if let Some(period) = self.config.batch_policy.merge_period_ms() {
                        if state.batch_queue.pending_items() > 0 {
                            let t = now + period;
                            push_event(state, t, 4, 0, 0, EventKind::MergeTick(group));
                        }
                    }
                }
            }
            _ => {
                // Relational operator: evaluate eagerly, charge the
                // annotated latency.
                let inputs: Vec<Arc<RowSet>> = state.nodes[id]
                    .children
                    .iter()
                    .map(|&c| state.nodes[c].result.clone().expect("child done"))
                    .collect();
                let input_refs: Vec<&RowSet> = inputs.iter().map(|a| a.as_ref()).collect();
                match eval::eval_relational(&plan, &input_refs, &self.catalog, pin) {
                    Ok(rows) => {
                        let node = &mut state.nodes[id];
                        node.result = Some(Arc::new(rows));
                        node.exec_count += 1;
                        let t = now + plan.node_latency_ms;
                        let (a, b) = (node.owner_seq, id as u64);
                        push_event(state, t, 1, a, b, EventKind::NodeFinish(id));
                    }
                    Err(e) => self.fail_node(state, id, e.to_string()),
                }
            }
        }
    }

    /// Records the highest commit version the node's AI input has seen, per
    /// subscribing query (snapshot-consistency observability).
    fn note_observed_commit(&self, state: &mut State, id: NodeId) {
        let Some(input) = node_input_result(&state.nodes, id) else {
            return;
        };
        let max_commit = input.max_commit();
        for q in state.nodes[id].subscribers.clone() {
            let rec = &mut state.queries[q as usize];
            rec.observed_commit = rec.observed_commit.max(max_commit);
        }
    }

    fn dispatch(&self, state: &mut State, mut batch: MicroBatch, avoid: Option<usize>) {
        if self.config.export_baseline {
            self.dispatch_export(state, batch);
            return;
        }
        if self.config.sequential_per_tenant {
            if let Some(t) = batch.tenant.clone() {
                let inflight = state.tenant_inflight.get(&t).copied().unwrap_or(0);
                if inflight >= 1 {
                    state.tenant_hold.entry(t).or_default().push_back(batch);
                    return;
                }
                *state.tenant_inflight.entry(t).or_default() += 1;
            }
        }
        batch.attempts += 1;
        state.pool.assign(batch, avoid);
    }

    /// Export-execute-import baseline: every dispatch first crosses the
    /// single export channel, then runs on the least-busy engine without
    /// token accounting (it is an external call).
    fn dispatch_export(&self, state: &mut State, batch: MicroBatch) {
        let now = state.clock;
        let export_start = now.max(state.export_busy_until);
        let export_done = export_start + self.config.export_latency_ms;
        state.export_busy_until = export_done;
        let engine = (0..state.export_engine_busy.len())
            .min_by(|&a, &b| {
                state.export_engine_busy[a]
                    .total_cmp(&state.export_engine_busy[b])
                    .then(a.cmp(&b))
            })
            .unwrap_or(0);
        let start = export_done.max(state.export_engine_busy[engine]);
        let (duration, outputs, trained) = match self.execute_batch(state, engine, &batch, true) {
            Ok(parts) => parts,
            Err(error) => {
                self.fail_batch_nodes(state, &batch, error);
                return;
            }
        };
        let done = start + duration;
        state.export_engine_busy[engine] = done;
        let batch_id = batch.id;
        self.account_dispatch(state, &batch);
        state.running.insert(
            batch_id,
            Running {
                batch,
                outputs,
                trained,
                load_tokens: 0,
            },
        );
        push_event(state, done, 2, engine as u64, batch_id, EventKind::BatchDone { engine, batch_id });
    }

    fn start_batch(&self, state: &mut State, engine: usize, batch: MicroBatch) {
        let now = state.clock;
        let load = batch.token_load();
        // Simulated fault: release and retry on another engine.
        let fault_roll = {
            let seed = derive_seed(self.config.seed, "fault", state.dispatched_batches + state.faults);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.random::<f64>()
        };
        if fault_roll < self.config.fault_rate && batch.attempts <= self.config.engines as u32 + 1 {
            state.pool.finish(engine, load);
            state.pool.engines[engine].faults += 1;
            state.faults += 1;
            self.dispatch(state, batch, Some(engine));
            return;
        }
        // Generative batches hold per-query state blocks until completion.
        if batch.model.kind() == ModelKind::GenerativeMock && self.config.kv_mb_per_item > 0.0 {
            let mut per_query: BTreeMap<QueryId, f64> = BTreeMap::new();
            for item in &batch.items {
                *per_query.entry(item.query).or_default() += self.config.kv_mb_per_item;
            }
            let e = &mut state.pool.engines[engine];
            let extra: f64 = per_query.values().sum();
            if e.memory_used_mb() + extra > e.memory_budget_mb {
                // Engine overloaded on memory: requeue elsewhere.
                state.pool.finish(engine, load);
                self.dispatch(state, batch, Some(engine));
                return;
            }
            for (q, mb) in per_query {
                *e.state_blocks.entry(q).or_insert(0.0) += mb;
            }
            e.note_peaks();
        }
        let (duration, outputs, trained) = match self.execute_batch(state, engine, &batch, false)
        {
            Ok(parts) => parts,
            Err(error) => {
                state.pool.finish(engine, load);
                self.fail_batch_nodes(state, &batch, error);
                return;
            }
        };
        let done = now + duration;
        let batch_id = batch.id;
        self.account_dispatch(state, &batch);
        state.running.insert(
            batch_id,
            Running {
                batch,
                outputs,
                trained,
                load_tokens: load,
            },
        );
        push_event(state, done, 2, engine as u64, batch_id, EventKind::BatchDone { engine, batch_id });
    }

    fn account_dispatch(&self, state: &mut State, batch: &MicroBatch) {
        state.dispatched_batches += 1;
        state.dispatched_items += batch.items.len() as u64;
        state.padding_dispatched += batch.padding();
        if self.config.trace_items {
            for item in &batch.items {
                *state.item_dispatch_counts.entry(item.item_id).or_default() += 1;
            }
        }
    }

    /// Computes a batch's outputs and simulated duration. Returns
    /// (duration, outputs per item, trained weights for train batches), or
    /// the failure to surface on every query the batch serves.
    fn execute_batch(
        &self,
        state: &mut State,
        engine: usize,
        batch: &MicroBatch,
        external: bool,
    ) -> Result<BatchExecution, String> {
        match batch.kind {
            BatchKind::Train => {
                let node_id = match batch.model {
                    GroupModel::Trained(n) => n,
                    _ => unreachable!("train batch carries its node"),
                };
                let (features, target) = match &state.nodes[node_id].plan.op {
                    PhysicalOp::AiTrain {
                        features, target, ..
                    } => (features.clone(), *target),
                    _ => unreachable!(),
                };
                let input = node_input_result(&state.nodes, node_id).expect("train input");
                let buckets = self.config.hash_buckets;
                let rows: Vec<Vec<f64>> = crate::par::map_slice(&input.rows, |row| {
                    let raw: Vec<Value> =
                        features.iter().map(|&f| row.values[f].clone()).collect();
                    ridge::hash_features(&raw, buckets)
                });
                let targets: Vec<f64> = input
                    .rows
                    .iter()
                    .map(|r| r.values[target].as_f64().unwrap_or(0.0))
                    .collect();
                let weights = ridge::train(&rows, &targets, self.config.lambda)
                    .map_err(|e| e.to_string())?;
                let profile = self
                    .config
                    .costs
                    .profile(ModelKind::RidgeRegressor, None);
                let duration = batch_cost(
                    &profile,
                    input.rows.len() as u64,
                    input.rows.len() as u64 * features.len() as u64,
                    false,
                );
                Ok((duration, Vec::new(), Some(Arc::new(weights))))
            }
            BatchKind::Infer => {
                let kind = batch.model.kind();
                let profile = self
                    .config
                    .costs
                    .profile(kind, batch.model.registered());
                let (weights_bytes, variant, staged_ctx): (Vec<u8>, PipelineVariant, Option<NodeId>) = {
                    let node = &state.nodes[batch.items[0].node];
                    let variant = match &node.plan.op {
                        PhysicalOp::AiInfer { variant, .. } => *variant,
                        _ => PipelineVariant::Direct,
                    };
                    match &batch.model {
                        GroupModel::Registered(mv, _) => {
                            let rec = self
                                .catalog
                                .get_model(&mv.name, Some(mv.version))
                                .ok_or_else(|| format!("model {mv} dropped before dispatch"))?;
                            (rec.weights, variant, None)
                        }
                        GroupModel::Trained(train_node) => {
                            let w = state.nodes[*train_node]
                                .weights
                                .clone()
                                .expect("trained weights ready");
                            (ridge::weights_to_bytes(&w), variant, Some(*train_node))
                        }
                    }
                };
                let include_load = if external {
                    false
                } else {
                    match batch.model.registered() {
                        Some(mv) => {
                            let was_resident = state.pool.engines[engine].resident.contains(mv);
                            let (ok, displaced) = state.pool.engines[engine]
                                .ensure_resident(mv, profile.weight_size_mb);
                            if ok && !was_resident {
                                // Weights stay pinned in the unified cache
                                // while any engine declares residency.
                                let _ = self.cache.put_payload(
                                    crate::cache::CacheKey::model_weights(mv),
                                    profile.weight_size_mb,
                                    Tier::T0Accelerator,
                                    true,
                                    state.clock,
                                    CachePayload::None,
                                );
                            }
                            for gone in displaced {
                                let still_resident = state
                                    .pool
                                    .engines
                                    .iter()
                                    .any(|e| e.resident.contains(&gone));
                                if !still_resident {
                                    self.cache
                                        .set_pinned(&crate::cache::CacheKey::model_weights(&gone), false);
                                }
                            }
                            !was_resident
                        }
                        None => false,
                    }
                };
                let inputs: Vec<InferInput> =
                    batch.items.iter().map(|i| i.input.clone()).collect();
                let seed = derive_seed(self.config.seed, "generative", 0);
                let outcome = model::infer(
                    kind,
                    &weights_bytes,
                    &inputs,
                    &profile,
                    include_load,
                    seed,
                    self.config.embed_dim,
                )
                .map_err(|e| e.to_string())?;
                let mut outputs = outcome.outputs;
                let mut duration = outcome.cost_ms;
                if variant == PipelineVariant::Staged {
                    duration *= self.config.constants.staged_cost_factor;
                    if let Some(train_node) = staged_ctx {
                        outputs = self.staged_outputs(state, train_node, batch, outputs);
                    }
                }
                Ok((duration, outputs, None))
            }
        }
    }

    /// Staged pipeline for in-query ridge: stage one is the direct variant;
    /// stage two retrains with a per-key aggregate feature (mean target by
    /// key) appended; fusion averages the two predictions.
    fn staged_outputs(
        &self,
        state: &State,
        train_node: NodeId,
        batch: &MicroBatch,
        direct: Vec<Value>,
    ) -> Vec<Value> {
        let (features, target) = match &state.nodes[train_node].plan.op {
            PhysicalOp::AiTrain {
                features, target, ..
            } => (features.clone(), *target),
            _ => return direct,
        };
        let infer_node = &state.nodes[batch.items[0].node];
        let key_col = match &infer_node.plan.op {
            PhysicalOp::AiInfer { key, .. } => *key,
            _ => return direct,
        };
        let Some(input) = node_input_result(&state.nodes, train_node) else {
            return direct;
        };
        let buckets = self.config.hash_buckets;
        // Aggregate feature: mean target per key value over the training set.
        let mut sums: BTreeMap<Vec<u8>, (f64, u64)> = BTreeMap::new();
        for row in &input.rows {
            let k = eval::encode_key(&row.values[key_col]);
            let t = row.values[target].as_f64().unwrap_or(0.0);
            let e = sums.entry(k).or_insert((0.0, 0));
            e.0 += t;
            e.1 += 1;
        }
        let agg_of = |key: &Value| -> f64 {
            sums.get(&eval::encode_key(key))
                .map(|(s, n)| s / *n as f64)
                .unwrap_or(0.0)
        };
        let rows: Vec<Vec<f64>> = input
            .rows
            .iter()
            .map(|row| {
                let raw: Vec<Value> = features.iter().map(|&f| row.values[f].clone()).collect();
                let mut hashed = ridge::hash_features(&raw, buckets);
                hashed.push(agg_of(&row.values[key_col]));
                hashed
            })
            .collect();
        let targets: Vec<f64> = input
            .rows
            .iter()
            .map(|r| r.values[target].as_f64().unwrap_or(0.0))
            .collect();
        let Ok(staged_weights) = ridge::train(&rows, &targets, self.config.lambda) else {
            return direct;
        };
        batch
            .items
            .iter()
            .zip(direct)
            .map(|(item, d)| {
                let InferInput::Features(hashed) = &item.input else {
                    return d;
                };
                let mut with_agg = hashed.clone();
                with_agg.push(agg_of(&item.key_value));
                let staged_pred = ridge::predict(&staged_weights, &with_agg);
                match d {
                    Value::Float64(v) => Value::Float64((v + staged_pred) / 2.0),
                    other => other,
                }
            })
            .collect()
    }

    fn batch_done(&self, state: &mut State, engine: usize, batch_id: u64) {
        let Some(run) = state.running.remove(&batch_id) else {
            return;
        };
        if !self.config.export_baseline {
            state.pool.finish(engine, run.load_tokens);
        }
        if self.config.sequential_per_tenant {
            if let Some(t) = run.batch.tenant.clone() {
                if let Some(n) = state.tenant_inflight.get_mut(&t) {
                    *n = n.saturating_sub(1);
                }
                if let Some(next) = state
                    .tenant_hold
                    .get_mut(&t)
                    .and_then(|q| q.pop_front())
                {
                    self.dispatch(state, next, None);
                }
            }
        }
        match run.batch.kind {
            BatchKind::Train => {
                let node_id = match run.batch.model {
                    GroupModel::Trained(n) => n,
                    _ => unreachable!(),
                };
                let weights = run.trained.expect("train batch produced weights");
                let size_mb = (weights.len() * 8) as f64 / 1_000_000.0;
                let key = trained_weights_key(state.nodes[node_id].plan.fingerprint, run.batch.pin);
                if self.config.materialize {
                    let _ = self.cache.put_payload(
                        key,
                        size_mb.max(1e-6),
                        Tier::T0Accelerator,
                        false,
                        state.clock,
                        CachePayload::Weights(weights.clone()),
                    );
                }
                let passthrough = node_input_result(&state.nodes, node_id);
                let node = &mut state.nodes[node_id];
                node.weights = Some(weights);
                node.exec_count += 1;
                node.ai_remaining = 0;
                node.result = passthrough;
                self.complete_node(state, node_id);
            }
            BatchKind::Infer => {
                let mut touched: BTreeSet<NodeId> = BTreeSet::new();
                for (item, output) in run.batch.items.iter().zip(run.outputs) {
                    let node = &mut state.nodes[item.node];
                    node.ai_outputs[item.row_idx] = Some(output);
                    node.ai_remaining -= 1;
                    touched.insert(item.node);
                }
                for node_id in touched {
                    if state.nodes[node_id].ai_remaining == 0 {
                        let input =
                            node_input_result(&state.nodes, node_id).expect("infer input");
                        let node = &mut state.nodes[node_id];
                        let key_col = match &node.plan.op {
                            PhysicalOp::AiInfer { key, .. } => *key,
                            _ => unreachable!(),
                        };
                        let rows: Vec<Row> = input
                            .rows
                            .iter()
                            .enumerate()
                            .map(|(i, row)| Row {
                                values: vec![
                                    row.values[key_col].clone(),
                                    node.ai_outputs[i].take().expect("output filled"),
                                ],
                                commit: row.commit,
                            })
                            .collect();
                        node.result = Some(Arc::new(RowSet {
                            columns: node.plan.schema.clone(),
                            rows,
                        }));
                        node.ai_outputs = Vec::new();
                        self.complete_node(state, node_id);
                    }
                }
            }
        }
    }

    fn complete_node(&self, state: &mut State, id: NodeId) {
        if state.nodes[id].state == NodeState::Done {
            return;
        }
        state.nodes[id].state = NodeState::Done;
        let now = state.clock;
        // Materialize reusable results into the unified cache.
        if self.config.materialize {
            let node = &state.nodes[id];
            if !matches!(node.plan.op, PhysicalOp::CacheRead { .. }) {
                if let Some(key) = cache_key_for(&node.plan, node.pin) {
                    if let Some(rows) = &node.result {
                        let preferred = match key.kind {
                            CacheKind::Embedding => Tier::T0Accelerator,
                            _ => Tier::T1Host,
                        };
                        let _ = self.cache.put_payload(
                            key,
                            rows.size_mb().max(1e-6),
                            preferred,
                            false,
                            now,
                            CachePayload::Rows(rows.clone()),
                        );
                    }
                }
            }
        }
        // Resolve queries rooted at this node.
        let result = state.nodes[id].result.clone();
        let root_queries: Vec<QueryId> = state
            .queries
            .iter()
            .filter(|q| !q.done && q.root == id)
            .map(|q| q.id)
            .collect();
        for qid in root_queries {
            let q = &mut state.queries[qid as usize];
            q.done = true;
            q.finished_at = Some(now + q.migration_penalty);
            let rows = result.clone().expect("root result present");
            let _ = q.handle.cell.set(Ok(rows));
            state.pool.drop_query_state(qid);
            // KV blocks owned by the query drop at completion; their cache
            // entries (if any) go too.
            let qid_copy = qid;
            self.cache.invalidate(move |k| {
                k.kind == CacheKind::KvBlock
                    && k.model.is_none()
                    && k.fingerprint.0 == qid_copy as u128
            });
        }
        // Wake consumers.
        let consumers: Vec<NodeId> = {
            let mut c = state.nodes[id].consumers.clone();
            c.sort_unstable();
            c
        };
        for consumer in consumers {
            if state.nodes[consumer].state != NodeState::Waiting {
                continue;
            }
            if state.nodes[consumer].pending_children > 0 {
                state.nodes[consumer].pending_children -= 1;
            }
            if state.nodes[consumer].pending_children == 0 {
                // Cache-read wrappers adopt the fallback's result directly.
                if let PhysicalOp::CacheRead { .. } = &state.nodes[consumer].plan.op {
                    if !state.nodes[consumer].children.is_empty() {
                        let sub = state.nodes[consumer].children[0];
                        state.nodes[consumer].result = state.nodes[sub].result.clone();
                        let (a, b) = (state.nodes[consumer].owner_seq, consumer as u64);
                        push_event(state, now, 1, a, b, EventKind::NodeFinish(consumer));
                        continue;
                    }
                }
                self.process_ready(state, consumer);
            }
        }
    }

    fn fail_batch_nodes(&self, state: &mut State, batch: &MicroBatch, error: String) {
        let nodes: BTreeSet<NodeId> = match &batch.model {
            GroupModel::Trained(train_node) if batch.kind == BatchKind::Train => {
                [*train_node].into()
            }
            _ => batch.items.iter().map(|i| i.node).collect(),
        };
        for node in nodes {
            self.fail_node(state, node, error.clone());
        }
    }

    fn fail_node(&self, state: &mut State, id: NodeId, error: String) {
        state.nodes[id].state = NodeState::Failed;
        for q in state.nodes[id].subscribers.clone() {
            let rec = &mut state.queries[q as usize];
            if !rec.done {
                rec.done = true;
                rec.finished_at = Some(state.clock);
                let _ = rec.handle.cell.set(Err(error.clone()));
            }
        }
    }

    fn dump(&self, state: &State) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        for (i, n) in state.nodes.iter().enumerate() {
            let _ = writeln!(
                out,
                "node {i}: {:?} pending={} remaining={} {}",
                n.state,
                n.pending_children,
                n.ai_remaining,
                n.plan.label()
            );
        }
        let _ = writeln!(
            out,
            "pending items={} running batches={}",
            state.batch_queue.pending_items(),
            state.running.len()
        );
        out
    }

    fn collect_metrics(&self, state: &mut State) -> Metrics {
        let makespan = state.clock;
        let mut per_tenant: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut failed = 0u64;
        for q in &state.queries {
            match q.handle.result() {
                Some(Ok(_)) => {
                    let latency = q.finished_at.unwrap_or(makespan) - q.admitted_at;
                    per_tenant.entry(q.tenant.clone()).or_default().push(latency);
                }
                _ => failed += 1,
            }
        }
        let minutes = (makespan / 60_000.0).max(1e-9);
        let tenants: BTreeMap<String, TenantMetrics> = per_tenant
            .iter()
            .map(|(tenant, latencies)| {
                (
                    tenant.clone(),
                    TenantMetrics {
                        queries: latencies.len() as u64,
                        throughput_qpm: latencies.len() as f64 / minutes,
                        latency_p50_ms: percentile(latencies, 50.0),
                        latency_p95_ms: percentile(latencies, 95.0),
                        latency_p99_ms: percentile(latencies, 99.0),
                    },
                )
            })
            .collect();
        let mut shared_nodes = 0u64;
        let mut saved = 0u64;
        for n in &state.nodes {
            if n.subscribers.len() > 1 {
                shared_nodes += 1;
                saved += (n.subscribers.len() - 1) as u64;
            }
        }
        let engines = state
            .pool
            .engines
            .iter()
            .map(|e| EngineMetrics {
                id: e.id,
                peak_memory_mb: e.peak_memory_mb,
                peak_inflight_tokens: e.peak_inflight_tokens,
                batches_done: e.batches_done,
                faults: e.faults,
            })
            .collect();
        Metrics {
            makespan_ms: makespan,
            queries_completed: state.queries.iter().filter(|q| q.done).count() as u64 - failed,
            queries_failed: failed,
            per_tenant: tenants,
            padding_waste_tokens: state.padding_dispatched,
            cse: CseStats {
                shared_nodes,
                saved_executions: saved,
                total_nodes: state.nodes.len() as u64,
            },
            engines,
            cache: self.cache.stats(),
            migrations: state.migrations,
            migration_penalty_ms: state.migration_penalty_total,
            no_capacity_flags: state.pool.no_capacity_flags,
            dispatched_batches: state.dispatched_batches,
            dispatched_items: state.dispatched_items,
            faults: state.faults,
            budget_violations: state.budget_violations,
        }
    }

    pub fn node_reports(&self) -> Vec<NodeReport> {
        let state = self.state.lock().unwrap();
        state
            .nodes
            .iter()
            .map(|n| NodeReport {
                fingerprint: n.plan.fingerprint,
                label: n.plan.label(),
                exec_count: n.exec_count,
                subscribers: n.subscribers.len(),
            })
            .collect()
    }

    /// Highest commit version among rows consumed by the query's AI
    /// operators.
    pub fn query_observed_commit(&self, query: QueryId) -> Option<SnapshotVersion> {
        let state = self.state.lock().unwrap();
        state
            .queries
            .get(query as usize)
            .map(|q| q.observed_commit)
    }

    /// Per-item dispatch counts (requires `trace_items`).
    pub fn item_trace(&self) -> BTreeMap<u64, u32> {
        self.state.lock().unwrap().item_dispatch_counts.clone()
    }
}

fn add_subscriber(nodes: &mut [Node], root: NodeId, query: QueryId) {
    let mut stack = vec![root];
    while let Some(id) = stack.pop() {
        if nodes[id].subscribers.insert(query) {
            let children = nodes[id].children.clone();
            stack.extend(children);
        }
    }
}

/// Finds the training node feeding a trained inference operator: the first
/// `AiTrain` on the single-child chain below (rewrites may interleave
/// relational operators between the pair).
fn find_train_node(nodes: &[Node], start: NodeId) -> Option<NodeId> {
    let mut current = start;
    loop {
        if matches!(nodes[current].plan.op, PhysicalOp::AiTrain { .. }) {
            return Some(current);
        }
        match nodes[current].children.first() {
            Some(&c) if nodes[current].children.len() == 1 => current = c,
            _ => return None,
        }
    }
}

fn node_input_result(nodes: &[Node], id: NodeId) -> Option<Arc<RowSet>> {
    let child = *nodes[id].children.first()?;
    nodes[child].result.clone()
}

fn push_event(state: &mut State, time: SimMs, class: u8, a: u64, b: u64, kind: EventKind) {
    state.event_seq += 1;
    state.events.push(Reverse(Event {
        time,
        class,
        a,
        b,
        seq: state.event_seq,
        kind,
    }));
}

fn max_placement(plan: &PhysRef) -> Option<usize> {
    let mut max: Option<usize> = None;
    let mut stack = vec![plan];
    while let Some(node) = stack.pop() {
        if let PhysicalOp::AiInfer {
            placement: crate::opt::Placement::Engine(e),
            ..
        } = &node.op
        {
            max = Some(max.map_or(*e, |m: usize| m.max(*e)));
        }
        for c in node.children() {
            stack.push(c);
        }
    }
    max
}

