//! Benchmark harness: configuration, workload construction, and the
//! virtual-time runner that produces metrics reports.

mod config;
pub mod workload;

pub use config::{parse_config_text, BenchConfig, SharingMode, Workload};
pub use workload::{gen_workload_r, gen_workload_t, WorkloadR, WorkloadT};

use crate::cache::CacheConfig;
use crate::exec::{Metrics, Mode};
use crate::opt::Objective;
use crate::session::{Session, SessionError};
use serde::Serialize;

/// A bench run's output: identity plus the executor metrics.
#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub config_id: String,
    pub workload: String,
    pub sharing_mode: String,
    pub batch_policy: String,
    pub engines: usize,
    pub tenants: usize,
    pub scale: usize,
    pub seed: u64,
    pub metrics: Metrics,
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialize")
    }

    pub fn to_csv(&self) -> String {
        self.metrics.to_csv(&self.config_id)
    }
}

/// Builds the data per config, submits the query set, runs in virtual time,
/// and reports. Identical (config, seed) produce byte-identical reports.
pub fn run_bench(config: &BenchConfig) -> Result<BenchReport, SessionError> {
    config.validate().map_err(SessionError::QueryFailed)?;
    let session = Session::new(config.exec_config(), CacheConfig::default());
    match config.workload {
        Workload::R => {
            let w = gen_workload_r(&session, config.scale, config.queries, config.seed);
            for (i, sql) in w.queries.iter().enumerate() {
                let tenant = format!("tenant{}", i % config.tenants.max(1));
                session.submit_sql(sql, &tenant, config.objective)?;
            }
        }
        Workload::T => {
            let per_task = config.sharing_mode == SharingMode::PerTaskModel;
            let w = gen_workload_t(
                &session,
                config.scale,
                config.tenants,
                config.queries,
                config.seed,
                per_task,
            );
            for (tenant, sql) in &w.queries {
                session.submit_sql(sql, tenant, config.objective)?;
            }
        }
    }
    let metrics = session.run(Mode::VirtualTime)?;
    Ok(BenchReport {
        config_id: config.config_id(),
        workload: config.workload.name().into(),
        sharing_mode: config.sharing_mode.name().into(),
        batch_policy: config.batch_policy_name(),
        engines: config.engines,
        tenants: config.tenants,
        scale: config.scale,
        seed: config.seed,
        metrics,
    })
}

/// Runs the same config across several engine counts (the scalability
/// sweep).
pub fn run_engine_sweep(
    base: &BenchConfig,
    engine_counts: &[usize],
) -> Result<Vec<BenchReport>, SessionError> {
    let mut out = Vec::new();
    for &engines in engine_counts {
        let mut cfg = base.clone();
        cfg.engines = engines;
        out.push(run_bench(&cfg)?);
    }
    Ok(out)
}

/// Objective helper re-exported for the CLI.
pub fn default_objective() -> Objective {
    Objective::default()
}
