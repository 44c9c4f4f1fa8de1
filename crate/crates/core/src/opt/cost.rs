//! Cost constants, cardinality estimation, and quality profiles.
//!
//! Cardinalities use the independence assumption: equality selects
//! 1/distinct, ranges select 1/3, and equi-joins produce
//! |L| * |R| / max(distinct keys). Coarse, but stable enough for relative
//! ordering at desk scale. Quality never comes from formulas here: it is a
//! profiled lookup recorded by the model runtime on holdouts.

use crate::catalog::TableStats;
use crate::expr::{BinaryOp, Expr};
use crate::model::{CostProfile, FeatureMask, ModelKind};
use crate::opt::physical::PipelineVariant;
use crate::types::{ModelVersion, SimMs, TableId};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Simulated cost constants for relational operators. One set of numbers
/// serves both the optimizer's estimates and the virtual-time executor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostConstants {
    pub scan_setup_ms: f64,
    pub scan_per_row_ms: f64,
    /// FilteredScan reads every row once with the predicate inline.
    pub filtered_scan_per_row_ms: f64,
    pub filter_per_row_ms: f64,
    pub hash_join_setup_ms: f64,
    pub hash_join_per_row_ms: f64,
    pub merge_join_per_row_ms: f64,
    pub nlj_per_pair_ms: f64,
    pub project_per_row_ms: f64,
    pub aggregate_setup_ms: f64,
    pub aggregate_per_row_ms: f64,
    pub sort_per_row_ms: f64,
    pub limit_ms: f64,
    /// Hash build sides larger than this are not hash-joinable.
    pub hash_mem_budget_mb: f64,
    /// Estimated bytes per row for the memory model.
    pub bytes_per_value: f64,
    /// Latency multiplier for the staged inference pipeline.
    pub staged_cost_factor: f64,
    /// Quality floor used when a staged profile is absent.
    pub default_quality: f64,
}

impl Default for CostConstants {
    fn default() -> Self {
        CostConstants {
            scan_setup_ms: 1.0,
            scan_per_row_ms: 0.0005,
            filtered_scan_per_row_ms: 0.0006,
            filter_per_row_ms: 0.0002,
            hash_join_setup_ms: 0.5,
            hash_join_per_row_ms: 0.0008,
            merge_join_per_row_ms: 0.0012,
            nlj_per_pair_ms: 0.0004,
            project_per_row_ms: 0.0001,
            aggregate_setup_ms: 0.5,
            aggregate_per_row_ms: 0.0006,
            sort_per_row_ms: 0.0004,
            limit_ms: 0.01,
            hash_mem_budget_mb: 256.0,
            bytes_per_value: 16.0,
            staged_cost_factor: 3.0,
            default_quality: 1.0,
        }
    }
}

impl CostConstants {
    pub fn sort_cost(&self, rows: f64) -> SimMs {
        let n = rows.max(2.0);
        self.sort_per_row_ms * n * n.log2()
    }

    pub fn merge_join_cost(&self, left: f64, right: f64) -> SimMs {
        let n = (left + right).max(2.0);
        self.merge_join_per_row_ms * n * n.log2()
    }
}

/// Cost profiles per model kind, overridable per registered model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelCostBook {
    pub per_kind: BTreeMap<ModelKind, CostProfile>,
    pub per_model: BTreeMap<ModelVersion, CostProfile>,
}

impl ModelCostBook {
    pub fn with_defaults() -> ModelCostBook {
        let mut per_kind = BTreeMap::new();
        per_kind.insert(
            ModelKind::RidgeRegressor,
            CostProfile {
                load_cost_ms: 5.0,
                batch_setup_ms: 0.5,
                per_item_ms: 0.01,
                per_token_ms: 0.0,
                weight_size_mb: 1.0,
            },
        );
        per_kind.insert(
            ModelKind::HashEmbedder,
            CostProfile {
                load_cost_ms: 40.0,
                batch_setup_ms: 0.5,
                per_item_ms: 0.2,
                per_token_ms: 0.0,
                weight_size_mb: 400.0,
            },
        );
        per_kind.insert(
            ModelKind::GenerativeMock,
            CostProfile {
                load_cost_ms: 120.0,
                batch_setup_ms: 1.0,
                per_item_ms: 0.5,
                per_token_ms: 0.1,
                weight_size_mb: 800.0,
            },
        );
        ModelCostBook { per_kind, per_model: BTreeMap::new() }
    }

    pub fn profile(&self, kind: ModelKind, model: Option<&ModelVersion>) -> CostProfile {
        if let Some(mv) = model {
            if let Some(p) = self.per_model.get(mv) {
                return p.clone();
            }
        }
        self.per_kind.get(&kind).cloned().unwrap_or_default()
    }
}

/// Quality estimates recorded by profiling runs. Model-level entries (exact
/// mask) take precedence over kind-level entries (mask width only).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProfileRegistry {
    kind_level: BTreeMap<(ModelKind, PipelineVariant, usize), f64>,
    model_level: BTreeMap<(ModelVersion, PipelineVariant, FeatureMask), f64>,
}

impl ProfileRegistry {
    pub fn record_kind(
        &mut self,
        kind: ModelKind,
        variant: PipelineVariant,
        mask_width: usize,
        quality: f64,
    ) {
        self.kind_level.insert((kind, variant, mask_width), quality);
    }

    pub fn record_model(
        &mut self,
        model: ModelVersion,
        variant: PipelineVariant,
        mask: FeatureMask,
        quality: f64,
    ) {
        self.model_level.insert((model, variant, mask), quality);
    }

    pub fn lookup(
        &self,
        model: Option<&ModelVersion>,
        kind: ModelKind,
        variant: PipelineVariant,
        mask: &FeatureMask,
    ) -> Option<f64> {
        if let Some(mv) = model {
            if let Some(q) = self.model_level.get(&(mv.clone(), variant, mask.clone())) {
                return Some(*q);
            }
        }
        self.kind_level
            .get(&(kind, variant, mask.len()))
            .copied()
    }

    /// Embedder and generative kinds default to quality 1.0 across variants
    /// and widths; ridge quality must come from actual profiling.
    pub fn with_unit_defaults() -> ProfileRegistry {
        let mut reg = ProfileRegistry::default();
        for kind in [ModelKind::HashEmbedder, ModelKind::GenerativeMock] {
            for variant in [PipelineVariant::Direct, PipelineVariant::Staged] {
                for width in 1..=16 {
                    reg.record_kind(kind, variant, width, 1.0);
                }
            }
        }
        reg
    }
}

/// Table statistics keyed by table, the optimizer's data view.
pub type StatsView = BTreeMap<TableId, TableStats>;

/// Per-candidate column statistics carried through enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct ColStats {
    /// Estimated distinct count per output column.
    pub distinct: Vec<f64>,
    /// Mean token count per output column (text columns; 1.0 otherwise).
    pub tokens: Vec<f64>,
}

impl ColStats {
    pub fn uniform(width: usize, rows: f64) -> ColStats {
        ColStats {
            distinct: vec![rows.max(1.0); width],
            tokens: vec![1.0; width],
        }
    }

    pub fn concat(&self, other: &ColStats) -> ColStats {
        let mut distinct = self.distinct.clone();
        distinct.extend(other.distinct.iter().copied());
        let mut tokens = self.tokens.clone();
        tokens.extend(other.tokens.iter().copied());
        ColStats { distinct, tokens }
    }

    /// Caps distinct counts after a filter shrank the row count.
    pub fn capped(&self, rows: f64) -> ColStats {
        ColStats {
            distinct: self.distinct.iter().map(|d| d.min(rows.max(1.0))).collect(),
            tokens: self.tokens.clone(),
        }
    }

    pub fn project(&self, mapping: &[Option<usize>], rows: f64) -> ColStats {
        ColStats {
            distinct: mapping
                .iter()
                .map(|m| m.map(|c| self.distinct[c]).unwrap_or_else(|| rows.max(1.0)))
                .collect(),
            tokens: mapping
                .iter()
                .map(|m| m.map(|c| self.tokens[c]).unwrap_or(1.0))
                .collect(),
        }
    }
}

/// Selectivity of a predicate under the independence assumption.
pub fn selectivity(pred: &Expr, stats: &ColStats) -> f64 {
    match pred {
        Expr::Binary { op, left, right } => match op {
            BinaryOp::And => {
                selectivity(left, stats) * selectivity(right, stats)
            }
            BinaryOp::Or => {
                (selectivity(left, stats) + selectivity(right, stats)).min(1.0)
            }
            BinaryOp::Eq => equality_selectivity(left, right, stats),
            BinaryOp::Ne => 1.0 - equality_selectivity(left, right, stats),
            BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => 1.0 / 3.0,
            _ => 1.0 / 3.0,
        },
        Expr::Between { .. } => 1.0 / 3.0,
        Expr::Unary { input, .. } => (1.0 - selectivity(input, stats)).clamp(0.0, 1.0),
        Expr::Literal(crate::types::Value::Bool(b)) => {
            if *b {
                1.0
            } else {
                0.0
            }
        }
        _ => 1.0 / 3.0,
    }
}

fn equality_selectivity(left: &Expr, right: &Expr, stats: &ColStats) -> f64 {
    let distinct_of = |e: &Expr| -> Option<f64> {
        match e {
            Expr::Column(c) => stats.distinct.get(*c).copied(),
            _ => None,
        }
    };
    match (distinct_of(left), distinct_of(right)) {
        (Some(a), Some(b)) => 1.0 / a.max(b).max(1.0),
        (Some(a), None) | (None, Some(a)) => 1.0 / a.max(1.0),
        (None, None) => 1.0 / 3.0,
    }
}

/// Join output estimate: |L| * |R| / max(distinct keys) for equi-joins,
/// |L| * |R| for cross joins.
pub fn join_cardinality(
    left_rows: f64,
    right_rows: f64,
    equi: Option<(f64, f64)>,
) -> f64 {
    match equi {
        Some((dl, dr)) => left_rows * right_rows / dl.max(dr).max(1.0),
        None => left_rows * right_rows,
    }
}

/// Extracts one equi-key pair from a join condition: a conjunct
/// `left_col = right_col` straddling the child boundary. Returns the key
/// expressions (left in left space, right in right space) and the remaining
/// conjuncts over the joined row.
pub fn split_equi_condition(
    condition: &Expr,
    left_width: usize,
) -> Option<(Expr, Expr, Option<Expr>)> {
    let conjuncts = condition.split_conjuncts();
    let mut key: Option<(Expr, Expr)> = None;
    let mut rest: Vec<Expr> = Vec::new();
    for conj in conjuncts {
        if key.is_none() {
            if let Expr::Binary {
                op: BinaryOp::Eq,
                left,
                right,
            } = conj
            {
                let side = |e: &Expr| -> Option<BTreeSet<bool>> {
                    let mut cols = Vec::new();
                    e.columns_used(&mut cols);
                    if cols.is_empty() {
                        return None;
                    }
                    Some(cols.iter().map(|&c| c < left_width).collect())
                };
                if let (Some(ls), Some(rs)) = (side(left), side(right)) {
                    if ls.len() == 1 && rs.len() == 1 && ls != rs {
                        let (l_expr, r_expr) = if ls.contains(&true) {
                            ((**left).clone(), (**right).clone())
                        } else {
                            ((**right).clone(), (**left).clone())
                        };
                        let r_local = r_expr.map_columns(&|c| c - left_width);
                        key = Some((l_expr, r_local));
                        continue;
                    }
                }
            }
        }
        rest.push(conj.clone());
    }
    key.map(|(l, r)| {
        let remainder = if rest.is_empty() {
            None
        } else {
            Some(Expr::join_conjuncts(rest))
        };
        (l, r, remainder)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equality_uses_distinct_counts() {
        let stats = ColStats {
            distinct: vec![50.0, 10.0],
            tokens: vec![1.0, 1.0],
        };
        let pred = Expr::binary(BinaryOp::Eq, Expr::col(0), Expr::int(7));
        assert!((selectivity(&pred, &stats) - 0.02).abs() < 1e-12);
    }

    #[test]
    fn split_equi_finds_straddling_conjunct() {
        // (#0 = #3) AND (#1 > 5) with left width 2
        let cond = Expr::and(
            Expr::binary(BinaryOp::Eq, Expr::col(0), Expr::col(3)),
            Expr::binary(BinaryOp::Gt, Expr::col(1), Expr::int(5)),
        );
        let (l, r, rest) = split_equi_condition(&cond, 2).unwrap();
        assert_eq!(l, Expr::col(0));
        assert_eq!(r, Expr::col(1)); // #3 - left_width
        assert!(rest.is_some());
    }

    #[test]
    fn one_sided_equality_is_not_a_join_key() {
        let cond = Expr::binary(BinaryOp::Eq, Expr::col(0), Expr::col(1));
        assert!(split_equi_condition(&cond, 2).is_none());
    }
}
