//! Versioned in-memory storage, model catalog, and tenant access policies.
//!
//! One global [`SnapshotVersion`] counter covers the whole database instance:
//! every committed write batch bumps it, rows carry their commit version, and
//! scans at snapshot `v` see exactly the rows committed at versions `<= v`.
//! Storage is append-only row storage; there are no deletes or updates.
//!
//! The catalog is also the source of invalidation events: committing data or
//! registering a model notifies registered hooks so caches can drop entries
//! keyed to superseded versions.

use crate::expr::{EvalError, Expr};
use crate::model::{CostProfile, FeatureMask, ModelKind};
use crate::par;
use crate::types::{ColumnType, ModelVersion, SnapshotVersion, TableId, Value};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::sync::{Mutex, RwLock};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("table '{0}' already exists")]
    DuplicateTable(String),
    #[error("unknown table {0}")]
    UnknownTable(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("snapshot {requested} is ahead of current version {current}")]
    FutureSnapshot {
        requested: SnapshotVersion,
        current: SnapshotVersion,
    },
    #[error("unknown column ordinal {0}")]
    UnknownColumn(usize),
    #[error("unknown tenant '{0}'")]
    UnknownTenant(String),
    #[error("unknown model '{0}'")]
    UnknownModel(String),
    #[error("invalid table definition: {0}")]
    InvalidTableDef(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Expr(#[from] EvalError),
}

/// Table schema: named, typed columns and a primary key column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableDef {
    pub name: String,
    pub columns: Vec<(String, ColumnType)>,
    pub primary_key: String,
}

impl TableDef {
    pub fn new(
        name: impl Into<String>,
        columns: Vec<(String, ColumnType)>,
        primary_key: impl Into<String>,
    ) -> Result<TableDef, CatalogError> {
        let def = TableDef {
            name: name.into(),
            columns,
            primary_key: primary_key.into(),
        };
        let mut seen = BTreeSet::new();
        for (c, ty) in &def.columns {
            if !seen.insert(c.clone()) {
                return Err(CatalogError::InvalidTableDef(format!(
                    "duplicate column '{c}' in table '{}'",
                    def.name
                )));
            }
            if *ty == ColumnType::Vector {
                return Err(CatalogError::InvalidTableDef(
                    "vector columns cannot be stored".into(),
                ));
            }
        }
        if def.column_index(&def.primary_key).is_none() {
            return Err(CatalogError::InvalidTableDef(format!(
                "primary key '{}' is not a column of '{}'",
                def.primary_key, def.name
            )));
        }
        Ok(def)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|(c, _)| c == name)
    }

    pub fn column_types(&self) -> Vec<ColumnType> {
        self.columns.iter().map(|(_, t)| *t).collect()
    }
}

/// A materialized row with its provenance tag: the highest commit version of
/// any stored row that contributed to it. Snapshot-consistency checks assert
/// `commit <= pinned snapshot` on every row an operator consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub values: Vec<Value>,
    pub commit: SnapshotVersion,
}

/// Schema plus rows, the unit of data flowing between operators.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RowSet {
    pub columns: Vec<(String, ColumnType)>,
    pub rows: Vec<Row>,
}

impl RowSet {
    pub fn new(columns: Vec<(String, ColumnType)>) -> RowSet {
        RowSet {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn column_types(&self) -> Vec<ColumnType> {
        self.columns.iter().map(|(_, t)| *t).collect()
    }

    /// Approximate size in simulated MB, for cache accounting.
    pub fn size_mb(&self) -> f64 {
        let bytes: usize = self
            .rows
            .iter()
            .map(|r| r.values.iter().map(Value::width_bytes).sum::<usize>() + 8)
            .sum();
        bytes as f64 / 1_000_000.0
    }

    /// Highest commit version among the rows.
    pub fn max_commit(&self) -> SnapshotVersion {
        self.rows
            .iter()
            .map(|r| r.commit)
            .max()
            .unwrap_or(SnapshotVersion::ZERO)
    }
}

/// A registered model. Weights are an opaque payload; interpretation belongs
/// to the model runtime.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelRecord {
    pub name: String,
    pub version: u32,
    pub kind: ModelKind,
    pub feature_columns: Vec<ColumnRef>,
    pub target_column: Option<ColumnRef>,
    pub weights: Vec<u8>,
    pub cost_profile: CostProfile,
    pub quality_profile: BTreeMap<FeatureMask, f64>,
}

impl ModelRecord {
    pub fn model_version(&self) -> ModelVersion {
        ModelVersion {
            name: self.name.clone(),
            version: self.version,
        }
    }
}

/// A column reference resolved to (table, ordinal).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ColumnRef {
    pub table: TableId,
    pub column: usize,
}

/// Per-tenant allow lists. Membership checks are pure functions of this
/// record.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TenantPolicy {
    pub tenant: String,
    pub allowed_columns: BTreeSet<(String, String)>,
    pub allowed_models: BTreeSet<String>,
}

/// Object of an access check.
#[derive(Debug, Clone, PartialEq)]
pub enum AccessObject {
    Column { table: String, column: String },
    Model(String),
}

/// Catalog change notifications delivered to invalidation hooks.
#[derive(Debug, Clone)]
pub enum CatalogEvent {
    /// A write batch committed at this new version.
    DataCommitted { version: SnapshotVersion },
    /// A model version was registered, superseding lower versions of `name`.
    ModelRegistered { name: String, version: u32 },
    /// All versions of `name` were dropped.
    ModelDropped { name: String },
}

/// Exact statistics for a table at a snapshot, used by the cost model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableStats {
    pub row_count: u64,
    pub distinct: Vec<u64>,
    /// Mean whitespace token count per text column (0 for non-text).
    pub mean_tokens: Vec<f64>,
}

struct Table {
    def: TableDef,
    rows: Vec<Row>,
}

#[derive(Default)]
struct Inner {
    by_name: BTreeMap<String, TableId>,
    tables: BTreeMap<TableId, Table>,
    next_table: u32,
    version: SnapshotVersion,
    models: BTreeMap<String, Vec<ModelRecord>>,
    policies: BTreeMap<String, TenantPolicy>,
}

type Hook = Box<dyn Fn(&CatalogEvent) + Send + Sync>;

/// The versioned catalog and row store. Readers take a shared lock and never
/// block each other; writers serialize through the single commit point.
#[derive(Default)]
pub struct Catalog {
    inner: RwLock<Inner>,
    hooks: Mutex<Vec<Hook>>,
}

impl Catalog {
    pub fn new() -> Catalog {
        Catalog::default()
    }

    /// Registers a hook fired after every committed catalog change.
    pub fn add_invalidation_hook(&self, hook: impl Fn(&CatalogEvent) + Send + Sync + 'static) {
        self.hooks.lock().unwrap().push(Box::new(hook));
    }

    fn fire(&self, event: CatalogEvent) {
        // Hooks run outside the inner lock.
        for hook in self.hooks.lock().unwrap().iter() {
            hook(&event);
        }
    }

    pub fn current_version(&self) -> SnapshotVersion {
        self.inner.read().unwrap().version
    }

    pub fn create_table(&self, def: TableDef) -> Result<TableId, CatalogError> {
        let mut inner = self.inner.write().unwrap();
        if inner.by_name.contains_key(&def.name) {
            return Err(CatalogError::DuplicateTable(def.name));
        }
        inner.next_table += 1;
        let id = TableId(inner.next_table);
        inner.by_name.insert(def.name.clone(), id);
        inner.tables.insert(
            id,
            Table {
                def,
                rows: Vec::new(),
            },
        );
        Ok(id)
    }

    pub fn table_id(&self, name: &str) -> Option<TableId> {
        self.inner.read().unwrap().by_name.get(name).copied()
    }

    pub fn table_def(&self, table: TableId) -> Result<TableDef, CatalogError> {
        let inner = self.inner.read().unwrap();
        inner
            .tables
            .get(&table)
            .map(|t| t.def.clone())
            .ok_or_else(|| CatalogError::UnknownTable(table.to_string()))
    }

    pub fn table_names(&self) -> Vec<String> {
        self.inner.read().unwrap().by_name.keys().cloned().collect()
    }

    /// Appends a batch of rows as one commit. Returns the new version; the
    /// rows are visible to scans at snapshots `>=` that version only.
    pub fn append_rows(
        &self,
        table: TableId,
        rows: Vec<Vec<Value>>,
    ) -> Result<SnapshotVersion, CatalogError> {
        let version = {
            let mut inner = self.inner.write().unwrap();
            let next = inner.version.next();
            let t = inner
                .tables
                .get_mut(&table)
                .ok_or_else(|| CatalogError::UnknownTable(table.to_string()))?;
            let mut staged = Vec::with_capacity(rows.len());
            for row in rows {
                staged.push(Row {
                    values: coerce_row(&t.def, row)?,
                    commit: next,
                });
            }
            t.rows.extend(staged);
            inner.version = next;
            next
        };
        self.fire(CatalogEvent::DataCommitted { version });
        Ok(version)
    }

    /// Bulk-loads CSV with a header row. Column types come from the table
    /// definition, never from the file.
    pub fn load_csv(
        &self,
        table: TableId,
        reader: impl Read,
    ) -> Result<(SnapshotVersion, usize), CatalogError> {
        let def = self.table_def(table)?;
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| CatalogError::Csv(e.to_string()))?
            .clone();
        if headers.len() != def.columns.len() {
            return Err(CatalogError::SchemaMismatch(format!(
                "csv has {} columns, table '{}' has {}",
                headers.len(),
                def.name,
                def.columns.len()
            )));
        }
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| CatalogError::Csv(e.to_string()))?;
            let mut row = Vec::with_capacity(def.columns.len());
            for (field, (col, ty)) in record.iter().zip(&def.columns) {
                row.push(parse_csv_field(field, *ty).ok_or_else(|| {
                    CatalogError::Csv(format!("cannot parse '{field}' as {ty} for column '{col}'"))
                })?);
            }
            rows.push(row);
        }
        let n = rows.len();
        let version = self.append_rows(table, rows)?;
        Ok((version, n))
    }

    /// Reads rows committed at versions `<= snapshot`, in insertion order,
    /// filtered by `predicate` (over the full table row) and then projected.
    pub fn scan(
        &self,
        table: TableId,
        snapshot: SnapshotVersion,
        projection: Option<&[usize]>,
        predicate: Option<&Expr>,
    ) -> Result<RowSet, CatalogError> {
        let inner = self.inner.read().unwrap();
        if snapshot > inner.version {
            return Err(CatalogError::FutureSnapshot {
                requested: snapshot,
                current: inner.version,
            });
        }
        let t = inner
            .tables
            .get(&table)
            .ok_or_else(|| CatalogError::UnknownTable(table.to_string()))?;
        let width = t.def.columns.len();
        if let Some(proj) = projection {
            if let Some(&bad) = proj.iter().find(|&&i| i >= width) {
                return Err(CatalogError::UnknownColumn(bad));
            }
        }
        if let Some(pred) = predicate {
            if let Some(max) = pred.max_column() {
                if max >= width {
                    return Err(CatalogError::UnknownColumn(max));
                }
            }
            let ty = pred.output_type(&t.def.column_types())?;
            if ty != ColumnType::Bool {
                return Err(EvalError::Type(format!("predicate has type {ty}")).into());
            }
        }

        let visible: Vec<&Row> = t.rows.iter().filter(|r| r.commit <= snapshot).collect();
        let keep: Vec<Result<bool, EvalError>> = match predicate {
            None => Vec::new(),
            Some(pred) => par::map_slice(&visible, |r| pred.eval_bool(&r.values)),
        };

        let columns: Vec<(String, ColumnType)> = match projection {
            None => t.def.columns.clone(),
            Some(proj) => proj.iter().map(|&i| t.def.columns[i].clone()).collect(),
        };
        let mut rows = Vec::new();
        for (idx, r) in visible.iter().enumerate() {
            if predicate.is_some() {
                match &keep[idx] {
                    Ok(true) => {}
                    Ok(false) => continue,
                    Err(e) => return Err(e.clone().into()),
                }
            }
            let values = match projection {
                None => r.values.clone(),
                Some(proj) => proj.iter().map(|&i| r.values[i].clone()).collect(),
            };
            rows.push(Row {
                values,
                commit: r.commit,
            });
        }
        Ok(RowSet { columns, rows })
    }

    /// Exact table statistics at a snapshot.
    pub fn stats(&self, table: TableId, snapshot: SnapshotVersion) -> Result<TableStats, CatalogError> {
        let full = self.scan(table, snapshot, None, None)?;
        let width = full.columns.len();
        let mut distinct = vec![0u64; width];
        let mut mean_tokens = vec![0f64; width];
        for (c, (_, ty)) in full.columns.iter().enumerate() {
            let mut seen: BTreeSet<Vec<u8>> = BTreeSet::new();
            let mut tokens = 0usize;
            for row in &full.rows {
                let mut enc = Vec::new();
                row.values[c].encode_into(&mut enc);
                seen.insert(enc);
                if let Value::Text(s) = &row.values[c] {
                    tokens += s.split_whitespace().count();
                }
            }
            distinct[c] = seen.len() as u64;
            if *ty == ColumnType::Text && !full.rows.is_empty() {
                mean_tokens[c] = tokens as f64 / full.rows.len() as f64;
            }
        }
        Ok(TableStats {
            row_count: full.rows.len() as u64,
            distinct,
            mean_tokens,
        })
    }

    pub fn set_policy(&self, policy: TenantPolicy) {
        let mut inner = self.inner.write().unwrap();
        inner.policies.insert(policy.tenant.clone(), policy);
    }

    /// Pure membership check against the tenant's policy record.
    pub fn check_access(&self, tenant: &str, object: &AccessObject) -> Result<bool, CatalogError> {
        let inner = self.inner.read().unwrap();
        let policy = inner
            .policies
            .get(tenant)
            .ok_or_else(|| CatalogError::UnknownTenant(tenant.into()))?;
        Ok(match object {
            AccessObject::Column { table, column } => policy
                .allowed_columns
                .contains(&(table.clone(), column.clone())),
            AccessObject::Model(name) => policy.allowed_models.contains(name),
        })
    }

    pub fn policy(&self, tenant: &str) -> Option<TenantPolicy> {
        self.inner.read().unwrap().policies.get(tenant).cloned()
    }

    /// Registers a model under the next version for its name. The stored
    /// record is immutable; superseded versions stay retrievable.
    pub fn register_model(&self, mut record: ModelRecord) -> ModelVersion {
        let (name, version) = {
            let mut inner = self.inner.write().unwrap();
            let versions = inner.models.entry(record.name.clone()).or_default();
            let version = versions.last().map(|r| r.version + 1).unwrap_or(1);
            record.version = version;
            let name = record.name.clone();
            versions.push(record);
            (name, version)
        };
        self.fire(CatalogEvent::ModelRegistered {
            name: name.clone(),
            version,
        });
        ModelVersion { name, version }
    }

    /// Latest version when `version` is `None`.
    pub fn get_model(&self, name: &str, version: Option<u32>) -> Option<ModelRecord> {
        let inner = self.inner.read().unwrap();
        let versions = inner.models.get(name)?;
        match version {
            None => versions.last().cloned(),
            Some(v) => versions.iter().find(|r| r.version == v).cloned(),
        }
    }

    pub fn drop_model(&self, name: &str) -> Result<(), CatalogError> {
        {
            let mut inner = self.inner.write().unwrap();
            if inner.models.remove(name).is_none() {
                return Err(CatalogError::UnknownModel(name.into()));
            }
        }
        self.fire(CatalogEvent::ModelDropped { name: name.into() });
        Ok(())
    }

    pub fn model_names(&self) -> Vec<String> {
        self.inner.read().unwrap().models.keys().cloned().collect()
    }
}

fn coerce_row(def: &TableDef, row: Vec<Value>) -> Result<Vec<Value>, CatalogError> {
    if row.len() != def.columns.len() {
        return Err(CatalogError::SchemaMismatch(format!(
            "row has {} values, table '{}' has {} columns",
            row.len(),
            def.name,
            def.columns.len()
        )));
    }
    row.into_iter()
        .zip(&def.columns)
        .map(|(v, (col, ty))| match (v, ty) {
            (Value::Int64(x), ColumnType::Float64) => Ok(Value::Float64(x as f64)),
            (v, ty) if v.column_type() == *ty => Ok(v),
            (v, ty) => Err(CatalogError::SchemaMismatch(format!(
                "column '{col}' expects {ty}, got {}",
                v.column_type()
            ))),
        })
        .collect()
}

fn parse_csv_field(field: &str, ty: ColumnType) -> Option<Value> {
    match ty {
        ColumnType::Int64 => field.trim().parse().ok().map(Value::Int64),
        ColumnType::Float64 => field.trim().parse().ok().map(Value::Float64),
        ColumnType::Bool => match field.trim().to_ascii_lowercase().as_str() {
            "true" | "1" | "t" => Some(Value::Bool(true)),
            "false" | "0" | "f" => Some(Value::Bool(false)),
            _ => None,
        },
        ColumnType::Text => Some(Value::Text(field.to_string())),
        ColumnType::Vector => None,
    }
}
