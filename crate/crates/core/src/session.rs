//! A database session: one catalog, one unified cache, one executor, and
//! the statement pipeline (parse, bind, lower, rewrite, pin, optimize,
//! submit) that connects them.
//!
//! The session wires the catalog's invalidation events into the cache,
//! populates quality profiles by actually training on synthetic holdouts,
//! and owns model DDL: `CREATE MODEL` trains or registers a backend and
//! records its measured quality.

use crate::cache::{CacheConfig, CacheError, CacheKey, CacheKind, CacheManager, CachePayload, Tier};
use crate::catalog::{Catalog, CatalogError, ModelRecord, RowSet, TableStats};
use crate::exec::{ExecConfig, ExecError, Executor, Mode, QueryHandle};
use crate::model::{regression_quality, ridge, FeatureMask, ModelError, ModelKind};
use crate::opt::{
    optimize, OptimizeError, Objective, OptimizerContext, PhysRef, PipelineVariant,
    ProfileRegistry, StatsView,
};
use crate::plan::{optimize_logical, LogicalPlan, UnpinnedPlan};
use crate::sql::{
    bind, parse, BindError, BoundCreateModel, BoundSelect, BoundStatement, SyntaxError,
};
use crate::types::{derive_seed, fnv128, ModelVersion, SnapshotVersion, TableId, Value};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("{0}")]
    Syntax(#[from] SyntaxError),
    #[error("bind: {0}")]
    Bind(#[from] BindError),
    #[error("optimize: {0}")]
    Optimize(#[from] OptimizeError),
    #[error("execution: {0}")]
    Exec(#[from] ExecError),
    #[error("catalog: {0}")]
    Catalog(#[from] CatalogError),
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("cache: {0}")]
    Cache(#[from] CacheError),
    #[error("{0}")]
    Unpinned(#[from] UnpinnedPlan),
    #[error("query failed: {0}")]
    QueryFailed(String),
}

/// Result of executing one statement.
#[derive(Debug, Clone)]
pub enum StatementOutcome {
    Rows(Arc<RowSet>),
    TableCreated(String),
    RowsInserted { table: String, count: usize, version: SnapshotVersion },
    ModelRegistered(ModelVersion),
    ModelDropped(String),
}

pub struct Session {
    pub catalog: Arc<Catalog>,
    pub cache: Arc<CacheManager>,
    pub executor: Executor,
    profiles: Mutex<ProfileRegistry>,
    seed: u64,
}

impl Session {
    pub fn new(exec_config: ExecConfig, cache_config: CacheConfig) -> Session {
        let catalog = Arc::new(Catalog::new());
        let cache = Arc::new(CacheManager::new(cache_config));
        {
            let cache = cache.clone();
            catalog.add_invalidation_hook(move |event| cache.apply_catalog_event(event));
        }
        let seed = exec_config.seed;
        let mut profiles = ProfileRegistry::with_unit_defaults();
        for width in 1..=12 {
            profile_trained_ridge(&mut profiles, width, seed);
        }
        let executor = Executor::new(catalog.clone(), cache.clone(), exec_config);
        Session {
            catalog,
            cache,
            executor,
            profiles: Mutex::new(profiles),
            seed,
        }
    }

    pub fn with_defaults() -> Session {
        Session::new(ExecConfig::default(), CacheConfig::default())
    }

    /// Parses, plans, and executes one statement to completion.
    pub fn execute(&self, sql: &str) -> Result<StatementOutcome, SessionError> {
        self.execute_as(sql, "default", Objective::default())
    }

    pub fn execute_as(
        &self,
        sql: &str,
        tenant: &str,
        objective: Objective,
    ) -> Result<StatementOutcome, SessionError> {
        let stmt = parse(sql)?;
        let bound = bind(&stmt, &self.catalog)?;
        match bound {
            BoundStatement::Select(select) => {
                let handle = self.submit_select(&select, tenant, objective)?;
                self.executor.run(Mode::VirtualTime)?;
                match handle.result() {
                    Some(Ok(rows)) => Ok(StatementOutcome::Rows(rows)),
                    Some(Err(e)) => Err(SessionError::QueryFailed(e)),
                    None => Err(SessionError::QueryFailed("no result".into())),
                }
            }
            BoundStatement::CreateTable(def) => {
                let name = def.name.clone();
                self.catalog.create_table(def)?;
                Ok(StatementOutcome::TableCreated(name))
            }
            BoundStatement::Insert { table, rows } => {
                let count = rows.len();
                let version = self.catalog.append_rows(table, rows)?;
                let name = self.catalog.table_def(table)?.name;
                Ok(StatementOutcome::RowsInserted {
                    table: name,
                    count,
                    version,
                })
            }
            BoundStatement::CreateModel(m) => {
                Ok(StatementOutcome::ModelRegistered(self.create_model(&m)?))
            }
            BoundStatement::DropModel(name) => {
                self.catalog.drop_model(&name)?;
                Ok(StatementOutcome::ModelDropped(name))
            }
        }
    }

    /// Plans a SELECT: lower, rewrite, pin at the current snapshot, optimize
    /// against a consistent cache view. Returns the pinned logical plan and
    /// the chosen physical plan.
    pub fn plan_select(
        &self,
        select: &BoundSelect,
        objective: Objective,
    ) -> Result<(LogicalPlan, PhysRef), SessionError> {
        let pin = self.catalog.current_version();
        let logical = optimize_logical(select).pinned(pin);
        let stats = self.stats_for(&logical, pin)?;
        self.ensure_ridge_profiles(&logical);
        let profiles = self.profiles.lock().unwrap().clone();
        let engines = self.executor.engine_view();
        let config = self.executor.config();
        let ctx = OptimizerContext {
            pin,
            stats: &stats,
            constants: &config.constants,
            costs: &config.costs,
            profiles: &profiles,
            engines: &engines,
        };
        let index = self.cache.snapshot_index();
        let phys = optimize(&logical, &ctx, &objective, Some(&index))?;
        Ok((logical, phys))
    }

    /// Plans and admits a SELECT without running it; `run` drains all
    /// admitted queries.
    pub fn submit_select(
        &self,
        select: &BoundSelect,
        tenant: &str,
        objective: Objective,
    ) -> Result<QueryHandle, SessionError> {
        let (logical, phys) = self.plan_select(select, objective)?;
        let pin = logical.pin.expect("plan pinned above");
        Ok(self.executor.submit(&phys, pin, tenant, objective)?)
    }

    pub fn submit_sql(
        &self,
        sql: &str,
        tenant: &str,
        objective: Objective,
    ) -> Result<QueryHandle, SessionError> {
        let stmt = parse(sql)?;
        let bound = bind(&stmt, &self.catalog)?;
        match bound {
            BoundStatement::Select(select) => self.submit_select(&select, tenant, objective),
            _ => Err(SessionError::QueryFailed(
                "only SELECT statements can be submitted".into(),
            )),
        }
    }

    pub fn run(&self, mode: Mode) -> Result<crate::exec::Metrics, SessionError> {
        Ok(self.executor.run(mode)?)
    }

    /// Logical plan text with fingerprints and the pinned snapshot.
    pub fn explain(&self, sql: &str) -> Result<String, SessionError> {
        let stmt = parse(sql)?;
        let bound = bind(&stmt, &self.catalog)?;
        let BoundStatement::Select(select) = bound else {
            return Err(SessionError::QueryFailed("explain expects a SELECT".into()));
        };
        let pin = self.catalog.current_version();
        let logical = optimize_logical(&select).pinned(pin);
        let mut text = logical.explain()?;
        if !logical.trace.is_empty() {
            text.push_str("rewrites:\n");
            for line in &logical.trace {
                text.push_str("  ");
                text.push_str(line);
                text.push('\n');
            }
        }
        Ok(text)
    }

    /// Chosen physical plan with per-node cost/quality annotations.
    pub fn explain_physical(
        &self,
        sql: &str,
        objective: Objective,
    ) -> Result<String, SessionError> {
        let stmt = parse(sql)?;
        let bound = bind(&stmt, &self.catalog)?;
        let BoundStatement::Select(select) = bound else {
            return Err(SessionError::QueryFailed("explain expects a SELECT".into()));
        };
        let (_, phys) = self.plan_select(&select, objective)?;
        Ok(crate::opt::explain_physical(&phys))
    }

    /// Trains (ridge) or registers a mock backend, measuring quality on a
    /// held-out split and recording it in the model's profile.
    pub fn create_model(&self, m: &BoundCreateModel) -> Result<ModelVersion, SessionError> {
        let config = self.executor.config();
        let cost_profile = config.costs.profile(m.kind, None);
        let (weights, quality_profile) = match m.kind {
            ModelKind::RidgeRegressor => {
                let pin = self.catalog.current_version();
                let full = self.catalog.scan(m.table, pin, None, None)?;
                let target_ord = m
                    .target_column
                    .expect("binder enforced ridge target")
                    .column;
                let feature_ords: Vec<usize> =
                    m.feature_columns.iter().map(|c| c.column).collect();
                let rows: Vec<Vec<f64>> = crate::par::map_slice(&full.rows, |row| {
                    let raw: Vec<Value> = feature_ords
                        .iter()
                        .map(|&c| row.values[c].clone())
                        .collect();
                    ridge::hash_features(&raw, config.hash_buckets)
                });
                let targets: Vec<f64> = full
                    .rows
                    .iter()
                    .map(|r| r.values[target_ord].as_f64().unwrap_or(0.0))
                    .collect();
                if rows.is_empty() {
                    return Err(SessionError::Model(ModelError::DegenerateInput(
                        "cannot train a model on an empty table".into(),
                    )));
                }
                let split = (rows.len() * 2 / 3).max(1);
                let w = ridge::train(&rows[..split], &targets[..split], config.lambda)?;
                let holdout_pred: Vec<f64> = rows[split..]
                    .iter()
                    .map(|r| ridge::predict(&w, r))
                    .collect();
                let quality = if split < rows.len() {
                    regression_quality(&holdout_pred, &targets[split..])
                } else {
                    1.0
                };
                // Retrain on everything for the stored weights.
                let w_full = ridge::train(&rows, &targets, config.lambda)?;
                let mask = FeatureMask::full(m.feature_columns.len());
                let mut profile = BTreeMap::new();
                profile.insert(mask, quality);
                (ridge::weights_to_bytes(&w_full), profile)
            }
            ModelKind::HashEmbedder | ModelKind::GenerativeMock => {
                (Vec::new(), BTreeMap::new())
            }
        };
        let record = ModelRecord {
            name: m.name.clone(),
            version: 0,
            kind: m.kind,
            feature_columns: m.feature_columns.clone(),
            target_column: m.target_column,
            weights,
            cost_profile,
            quality_profile: quality_profile.clone(),
        };
        let mv = self.catalog.register_model(record);
        let mut profiles = self.profiles.lock().unwrap();
        for (mask, quality) in quality_profile {
            profiles.record_model(mv.clone(), PipelineVariant::Direct, mask, quality);
        }
        // Mock kinds are quality-neutral at any width.
        if m.kind != ModelKind::RidgeRegressor {
            for width in 1..=16 {
                profiles.record_kind(m.kind, PipelineVariant::Direct, width, 1.0);
            }
        }
        Ok(mv)
    }

    /// Access-control-aware model slicing: retrains (closed form) on the
    /// permitted feature subset only, so predictions depend only on
    /// permitted data. Variants are cached as optimizer-state entries keyed
    /// by (model, mask) at the training snapshot.
    pub fn slice_for_mask(
        &self,
        model_name: &str,
        mask: &FeatureMask,
    ) -> Result<(Vec<f64>, bool), SessionError> {
        if mask.is_empty() {
            return Err(SessionError::Model(ModelError::EmptyMask));
        }
        let record = self
            .catalog
            .get_model(model_name, None)
            .ok_or_else(|| SessionError::Bind(BindError::UnknownModel(model_name.into())))?;
        if record.kind != ModelKind::RidgeRegressor {
            return Err(SessionError::Model(ModelError::DegenerateInput(
                "only ridge models can be sliced".into(),
            )));
        }
        let mv = record.model_version();
        let pin = self.catalog.current_version();
        let mut key_bytes = format!("slice:{mv}:").into_bytes();
        for i in mask.indices() {
            key_bytes.extend_from_slice(&(*i as u64).to_be_bytes());
        }
        let key = CacheKey {
            kind: CacheKind::OptimizerState,
            fingerprint: crate::plan::PlanFingerprint(fnv128(&key_bytes)),
            snapshot: pin,
            model: Some(mv.clone()),
        };
        if let Some(hit) = self.cache.get(&key, 0.0) {
            if let CachePayload::Weights(w) = hit.payload {
                return Ok(((*w).clone(), true));
            }
        }
        let config = self.executor.config();
        let table = record.feature_columns[0].table;
        let full = self.catalog.scan(table, pin, None, None)?;
        let target_ord = record
            .target_column
            .ok_or_else(|| {
                SessionError::Model(ModelError::DegenerateInput(
                    "sliced model needs a target".into(),
                ))
            })?
            .column;
        // Only the permitted columns ever enter the feature encoder.
        let permitted_ords: Vec<usize> = mask
            .indices()
            .iter()
            .map(|&i| record.feature_columns[i].column)
            .collect();
        let rows: Vec<Vec<f64>> = crate::par::map_slice(&full.rows, |row| {
            let raw: Vec<Value> = permitted_ords
                .iter()
                .map(|&c| row.values[c].clone())
                .collect();
            ridge::hash_features(&raw, config.hash_buckets)
        });
        let targets: Vec<f64> = full
            .rows
            .iter()
            .map(|r| r.values[target_ord].as_f64().unwrap_or(0.0))
            .collect();
        let weights = ridge::train(&rows, &targets, config.lambda)?;
        let size_mb = ((weights.len() * 8) as f64 / 1_000_000.0).max(1e-6);
        let _ = self.cache.put_payload(
            key,
            size_mb,
            Tier::T1Host,
            false,
            0.0,
            CachePayload::Weights(Arc::new(weights.clone())),
        );
        Ok((weights, false))
    }

    /// Statistics for every table the plan scans, at the plan's pin.
    fn stats_for(
        &self,
        logical: &LogicalPlan,
        pin: SnapshotVersion,
    ) -> Result<StatsView, SessionError> {
        let mut view: BTreeMap<TableId, TableStats> = BTreeMap::new();
        let mut stack = vec![&logical.root];
        while let Some(node) = stack.pop() {
            if let crate::plan::LogicalOp::Scan { table, .. } = &node.op {
                if !view.contains_key(table) {
                    view.insert(*table, self.catalog.stats(*table, pin)?);
                }
            }
            for c in node.children() {
                stack.push(c);
            }
        }
        Ok(view)
    }

    fn ensure_ridge_profiles(&self, logical: &LogicalPlan) {
        let mut widths = Vec::new();
        let mut stack = vec![&logical.root];
        while let Some(node) = stack.pop() {
            if let crate::plan::LogicalOp::AiInfer { features, .. } = &node.op {
                widths.push(features.len());
            }
            for c in node.children() {
                stack.push(c);
            }
        }
        let mut profiles = self.profiles.lock().unwrap();
        for w in widths {
            let mask_ok = profiles
                .lookup(
                    None,
                    ModelKind::RidgeRegressor,
                    PipelineVariant::Direct,
                    &FeatureMask::full(w.max(1)),
                )
                .is_some();
            if !mask_ok {
                profile_trained_ridge(&mut profiles, w.max(1), self.seed);
            }
        }
    }

    /// Injects a quality profile entry (used by tests and benchmarks to pin
    /// the optimizer's trade-off space).
    pub fn record_kind_profile(
        &self,
        kind: ModelKind,
        variant: PipelineVariant,
        width: usize,
        quality: f64,
    ) {
        self.profiles
            .lock()
            .unwrap()
            .record_kind(kind, variant, width, quality);
    }
}

/// Profiles the in-query ridge pipeline variants on a synthetic holdout:
/// `width` integer context features plus a group structure that the staged
/// variant's aggregate feature captures and the direct variant cannot.
/// Records kind-level quality for both variants.
fn profile_trained_ridge(profiles: &mut ProfileRegistry, width: usize, seed: u64) {
    const BUCKETS: usize = 32;
    let n = 240usize;
    let groups = 24usize;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "ridge-profile", width as u64));
    let bucket_weights: Vec<f64> = (0..BUCKETS).map(|_| rng.random_range(-1.0..1.0)).collect();
    let group_offset: Vec<f64> = (0..groups).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut raw: Vec<Vec<Value>> = Vec::with_capacity(n);
    let mut keys: Vec<i64> = Vec::with_capacity(n);
    let mut targets: Vec<f64> = Vec::with_capacity(n);
    for i in 0..n {
        let row: Vec<Value> = (0..width)
            .map(|_| Value::Int64(rng.random_range(0..40)))
            .collect();
        let key = (i % groups) as i64;
        let hashed = ridge::hash_features(&row, BUCKETS);
        let linear: f64 = hashed
            .iter()
            .zip(&bucket_weights)
            .map(|(x, w)| x * w)
            .sum();
        let noise: f64 = rng.random_range(-0.05..0.05);
        targets.push(linear + 0.4 * group_offset[key as usize % groups] + noise);
        keys.push(key);
        raw.push(row);
    }
    let hashed: Vec<Vec<f64>> = raw.iter().map(|r| ridge::hash_features(r, BUCKETS)).collect();
    let split = n * 2 / 3;
    let direct_w = match ridge::train(&hashed[..split], &targets[..split], 1e-3) {
        Ok(w) => w,
        Err(_) => return,
    };
    let direct_pred: Vec<f64> = hashed[split..]
        .iter()
        .map(|r| ridge::predict(&direct_w, r))
        .collect();
    let direct_q = regression_quality(&direct_pred, &targets[split..]);

    // Staged: append the per-key mean target (computed on the train split).
    let mut sums: BTreeMap<i64, (f64, u64)> = BTreeMap::new();
    for i in 0..split {
        let e = sums.entry(keys[i]).or_insert((0.0, 0));
        e.0 += targets[i];
        e.1 += 1;
    }
    let agg = |k: i64| sums.get(&k).map(|(s, c)| s / *c as f64).unwrap_or(0.0);
    let staged_rows: Vec<Vec<f64>> = hashed
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut v = r.clone();
            v.push(agg(keys[i]));
            v
        })
        .collect();
    let staged_w = match ridge::train(&staged_rows[..split], &targets[..split], 1e-3) {
        Ok(w) => w,
        Err(_) => return,
    };
    let staged_pred: Vec<f64> = staged_rows[split..]
        .iter()
        .zip(&direct_pred)
        .map(|(r, d)| (ridge::predict(&staged_w, r) + d) / 2.0)
        .collect();
    let staged_q = regression_quality(&staged_pred, &targets[split..]);

    profiles.record_kind(
        ModelKind::RidgeRegressor,
        PipelineVariant::Direct,
        width,
        direct_q,
    );
    profiles.record_kind(
        ModelKind::RidgeRegressor,
        PipelineVariant::Staged,
        width,
        staged_q.max(direct_q),
    );
}
