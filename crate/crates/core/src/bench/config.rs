//! Benchmark configuration and the flat `key = value` config-file format.
//!
//! The format is line-oriented: `#` starts a comment, keys are dotted
//! lowercase paths, values are numbers, names, or comma lists. The same
//! parser backs `--set key=value` command-line overrides. Unknown keys are
//! errors, so typos surface instead of silently running defaults.

use crate::exec::{BatchPolicy, ExecConfig};
use crate::opt::Objective;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Workload {
    R,
    T,
}

impl Workload {
    pub fn name(self) -> &'static str {
        match self {
            Workload::R => "r",
            Workload::T => "t",
        }
    }

    pub fn parse(s: &str) -> Option<Workload> {
        match s.to_ascii_lowercase().as_str() {
            "r" => Some(Workload::R),
            "t" => Some(Workload::T),
            _ => None,
        }
    }
}

/// Execution sharing modes. `Full` is shared models plus cross-query and
/// cross-tenant sharing; the two baseline modes batch per tenant
/// sequentially; `ExportBaseline` models export-execute-import: one external
/// call per AI operator through a serialized export channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SharingMode {
    PerTaskModel,
    SharedModel,
    Full,
    ExportBaseline,
}

impl SharingMode {
    pub fn name(self) -> &'static str {
        match self {
            SharingMode::PerTaskModel => "per_task_model",
            SharingMode::SharedModel => "shared_model",
            SharingMode::Full => "full",
            SharingMode::ExportBaseline => "export_baseline",
        }
    }

    pub fn parse(s: &str) -> Option<SharingMode> {
        match s.to_ascii_lowercase().as_str() {
            "per_task_model" | "per_task" => Some(SharingMode::PerTaskModel),
            "shared_model" | "shared" => Some(SharingMode::SharedModel),
            "full" => Some(SharingMode::Full),
            "export_baseline" | "export" => Some(SharingMode::ExportBaseline),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub workload: Workload,
    pub tenants: usize,
    pub engines: usize,
    pub sharing_mode: SharingMode,
    /// Workload R: total rows. Workload T: rows per tenant.
    pub scale: usize,
    /// Workload R: total queries. Workload T: repeats per tenant.
    pub queries: usize,
    pub seed: u64,
    pub objective: Objective,
    pub batch_policy: BatchPolicy,
    pub token_budget: u64,
    pub memory_budget_mb: f64,
    pub overload_threshold: f64,
    pub rebalance_gap: f64,
    pub export_latency_ms: f64,
    pub fault_rate: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            workload: Workload::R,
            tenants: 1,
            engines: 4,
            sharing_mode: SharingMode::Full,
            scale: 20_000,
            queries: 32,
            seed: 0,
            objective: Objective::default(),
            batch_policy: BatchPolicy::default(),
            token_budget: 2048,
            memory_budget_mb: 4096.0,
            overload_threshold: 0.8,
            rebalance_gap: 0.2,
            export_latency_ms: 5.0,
            fault_rate: 0.0,
        }
    }
}

impl BenchConfig {
    /// Desk-scale defaults for workload T: 8 tenants of 2000 rows.
    pub fn workload_t_default() -> BenchConfig {
        BenchConfig {
            workload: Workload::T,
            tenants: 8,
            engines: 2,
            scale: 2000,
            queries: 4,
            batch_policy: BatchPolicy::Bucket {
                boundaries: vec![16],
                max_items: 8,
                window_ms: 10.0,
                merge_period_ms: 50.0,
            },
            ..BenchConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.scale == 0 {
            return Err("scale must be positive".into());
        }
        if self.workload == Workload::R && self.scale < 100 {
            return Err("workload r needs scale >= 100".into());
        }
        if self.tenants == 0 || self.engines == 0 || self.queries == 0 {
            return Err("tenants, engines, and queries must be >= 1".into());
        }
        Ok(())
    }

    pub fn batch_policy_name(&self) -> String {
        match &self.batch_policy {
            BatchPolicy::Fixed { .. } => "fixed".into(),
            BatchPolicy::Bucket { .. } => "bucket".into(),
        }
    }

    pub fn config_id(&self) -> String {
        format!(
            "{}-{}-{}-e{}-t{}-s{}-seed{}",
            self.workload.name(),
            self.sharing_mode.name(),
            self.batch_policy_name(),
            self.engines,
            self.tenants,
            self.scale,
            self.seed
        )
    }

    /// Maps the bench-level mode onto executor switches.
    pub fn exec_config(&self) -> ExecConfig {
        let (cse, isolated, sequential, export) = match self.sharing_mode {
            SharingMode::Full => (true, false, false, false),
            SharingMode::SharedModel => (false, true, true, false),
            SharingMode::PerTaskModel => (false, true, true, false),
            SharingMode::ExportBaseline => (false, true, false, true),
        };
        ExecConfig {
            engines: self.engines,
            token_budget: self.token_budget,
            memory_budget_mb: self.memory_budget_mb,
            overload_threshold: self.overload_threshold,
            rebalance_gap: self.rebalance_gap,
            batch_policy: self.batch_policy.clone(),
            cse_enabled: cse,
            tenant_isolated_batching: isolated,
            sequential_per_tenant: sequential,
            export_baseline: export,
            export_latency_ms: self.export_latency_ms,
            seed: self.seed,
            fault_rate: self.fault_rate,
            ..ExecConfig::default()
        }
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        match key.trim() {
            "workload" => {
                self.workload =
                    Workload::parse(v).ok_or_else(|| format!("unknown workload '{v}'"))?;
            }
            "tenants" => self.tenants = parse_num(key, v)?,
            "engines" => self.engines = parse_num(key, v)?,
            "scale" => self.scale = parse_num(key, v)?,
            "queries" => self.queries = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "sharing_mode" => {
                self.sharing_mode =
                    SharingMode::parse(v).ok_or_else(|| format!("unknown sharing mode '{v}'"))?;
            }
            "objective" => self.objective = Objective::parse(v)?,
            "batch.policy" => {
                let max_items = self.batch_policy.max_items();
                let window_ms = self.batch_policy.window_ms();
                self.batch_policy = match v {
                    "fixed" => BatchPolicy::Fixed {
                        max_items,
                        window_ms,
                    },
                    "bucket" => BatchPolicy::Bucket {
                        boundaries: match &self.batch_policy {
                            BatchPolicy::Bucket { boundaries, .. } => boundaries.clone(),
                            _ => vec![16],
                        },
                        max_items,
                        window_ms,
                        merge_period_ms: self
                            .batch_policy
                            .merge_period_ms()
                            .unwrap_or(50.0),
                    },
                    other => return Err(format!("unknown batch policy '{other}'")),
                };
            }
            "batch.max_items" => {
                let n = parse_num(key, v)?;
                match &mut self.batch_policy {
                    BatchPolicy::Fixed { max_items, .. }
                    | BatchPolicy::Bucket { max_items, .. } => *max_items = n,
                }
            }
            "batch.window_ms" => {
                let w = parse_float(key, v)?;
                match &mut self.batch_policy {
                    BatchPolicy::Fixed { window_ms, .. }
                    | BatchPolicy::Bucket { window_ms, .. } => *window_ms = w,
                }
            }
            "batch.boundaries" => {
                let bounds: Result<Vec<u64>, _> =
                    v.split(',').map(|p| p.trim().parse::<u64>()).collect();
                let bounds = bounds.map_err(|_| format!("bad boundaries list '{v}'"))?;
                match &mut self.batch_policy {
                    BatchPolicy::Bucket { boundaries, .. } => *boundaries = bounds,
                    BatchPolicy::Fixed {
                        max_items,
                        window_ms,
                    } => {
                        self.batch_policy = BatchPolicy::Bucket {
                            boundaries: bounds,
                            max_items: *max_items,
                            window_ms: *window_ms,
                            merge_period_ms: 50.0,
                        };
                    }
                }
            }
            "batch.merge_period_ms" => {
                let p = parse_float(key, v)?;
                if let BatchPolicy::Bucket {
                    merge_period_ms, ..
                } = &mut self.batch_policy
                {
                    *merge_period_ms = p;
                }
            }
            "engine.token_budget" => self.token_budget = parse_num(key, v)?,
            "engine.memory_budget_mb" => self.memory_budget_mb = parse_float(key, v)?,
            "engine.overload_threshold" => self.overload_threshold = parse_float(key, v)?,
            "engine.rebalance_gap" => self.rebalance_gap = parse_float(key, v)?,
            "export.latency_ms" => self.export_latency_ms = parse_float(key, v)?,
            "fault_rate" => self.fault_rate = parse_float(key, v)?,
            other => return Err(format!("unknown config key '{other}'")),
        }
        Ok(())
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("bad value '{v}' for {key}"))
}

fn parse_float(key: &str, v: &str) -> Result<f64, String> {
    v.parse().map_err(|_| format!("bad value '{v}' for {key}"))
}

/// Parses a whole config file into assignments applied over `base`.
pub fn parse_config_text(base: BenchConfig, text: &str) -> Result<BenchConfig, String> {
    let mut config = base;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!("line {}: expected key = value", lineno + 1));
        };
        config
            .set(key, value)
            .map_err(|e| format!("line {}: {e}", lineno + 1))?;
    }
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_round_trip() {
        let text = "\
# bench setup
workload = t
tenants = 8
engines = 2
scale = 1500
batch.policy = bucket
batch.boundaries = 8, 24
batch.max_items = 4
engine.overload_threshold = 0.7
objective = latency<=500ms
";
        let cfg = parse_config_text(BenchConfig::default(), text).unwrap();
        assert_eq!(cfg.workload, Workload::T);
        assert_eq!(cfg.tenants, 8);
        assert_eq!(cfg.scale, 1500);
        assert!((cfg.overload_threshold - 0.7).abs() < 1e-12);
        match cfg.batch_policy {
            BatchPolicy::Bucket {
                ref boundaries,
                max_items,
                ..
            } => {
                assert_eq!(boundaries, &vec![8, 24]);
                assert_eq!(max_items, 4);
            }
            _ => panic!("expected bucket policy"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_config_text(BenchConfig::default(), "typo = 3").unwrap_err();
        assert!(err.contains("unknown config key"), "{err}");
    }

    #[test]
    fn config_id_is_stable() {
        let cfg = BenchConfig::default();
        assert_eq!(cfg.config_id(), "r-full-fixed-e4-t1-s20000-seed0");
    }
}
