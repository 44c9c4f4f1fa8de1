//! Brute-force optimizer oracle shared by the optimizer suite and the
//! acceptance criteria: exhaustive plan enumeration with restated cost
//! formulas, plus independent bounded-objective selection.

#![allow(dead_code)]

use neurq_core::catalog::TableStats;
use neurq_core::expr::{BinaryOp, Expr};
use neurq_core::model::{batch_cost_est, FeatureMask, ModelKind};
use neurq_core::opt::{
    choose, enumerate_physical, CostConstants, CostQuality, EngineView, ModelCostBook, Objective,
    OptimizeError, OptimizerContext, PhysRef, PhysicalNode, PhysicalOp, PipelineVariant,
    Placement, ProfileRegistry, StatsView,
};
use neurq_core::plan::{fingerprint, InferModel, JoinKind, LogicalNode, LogicalOp, PlanRef};
use neurq_core::types::{ColumnType, ModelVersion, SnapshotVersion, TableId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::sync::Arc;

pub const PIN: SnapshotVersion = SnapshotVersion(9);

pub struct World {
    pub stats: StatsView,
    pub constants: CostConstants,
    pub costs: ModelCostBook,
    pub profiles: ProfileRegistry,
    pub engines: EngineView,
}

impl World {
    pub fn new() -> World {
        let mut stats: StatsView = BTreeMap::new();
        for (i, rows) in [(1u32, 1000u64), (2, 300), (3, 40)] {
            stats.insert(
                TableId(i),
                TableStats {
                    row_count: rows,
                    distinct: vec![rows, (rows / 10).max(2), 5],
                    mean_tokens: vec![0.0, 0.0, 0.0],
                },
            );
        }
        let mut profiles = ProfileRegistry::with_unit_defaults();
        for width in 1..=3 {
            profiles.record_kind(
                ModelKind::RidgeRegressor,
                PipelineVariant::Direct,
                width,
                0.80,
            );
            profiles.record_kind(
                ModelKind::RidgeRegressor,
                PipelineVariant::Staged,
                width,
                0.90,
            );
        }
        // Registered embedder resident on engine 1 only, so placement
        // decisions are visible in cost.
        let mut engines = EngineView::new(2);
        engines.resident[1].insert(ModelVersion {
            name: "emb".into(),
            version: 1,
        });
        World {
            stats,
            constants: CostConstants::default(),
            costs: ModelCostBook::with_defaults(),
            profiles,
            engines,
        }
    }

    pub fn ctx(&self) -> OptimizerContext<'_> {
        OptimizerContext {
            pin: PIN,
            stats: &self.stats,
            constants: &self.constants,
            costs: &self.costs,
            profiles: &self.profiles,
            engines: &self.engines,
        }
    }
}

// --------------------------------------------------------------- oracle

/// A complete plan with oracle-computed totals.
#[derive(Clone)]
pub struct OraclePlan {
    pub plan: PhysRef,
    pub rows: f64,
    pub stats: neurq_core::opt::cost::ColStats,
}

pub fn mk_node(
    op: PhysicalOp,
    schema: Vec<(String, ColumnType)>,
    fp: neurq_core::plan::PlanFingerprint,
    rows: f64,
    latency: f64,
    quality: f64,
    children_totals: &[CostQuality],
) -> PhysRef {
    // Totals recomputed locally: critical path + min quality.
    let mut lat = 0.0f64;
    let mut q = quality;
    for t in children_totals {
        lat = lat.max(t.latency_ms);
        q = q.min(t.quality);
    }
    Arc::new(PhysicalNode {
        op,
        schema,
        fingerprint: fp,
        est_rows: rows,
        node_latency_ms: latency,
        own_quality: quality,
        total: CostQuality {
            latency_ms: lat + latency,
            quality: q,
        },
    })
}

/// Exhaustive enumeration with the documented per-operator menu.
pub fn oracle_enumerate(node: &PlanRef, w: &World) -> Vec<OraclePlan> {
    use neurq_core::opt::cost::{join_cardinality, selectivity, split_equi_condition, ColStats};
    let c = &w.constants;
    let fp = fingerprint(node, PIN);
    match &node.op {
        LogicalOp::Scan { table, table_name, cols } => {
            let st = &w.stats[table];
            let rows = st.row_count as f64;
            let stats = ColStats {
                distinct: cols.iter().map(|&i| st.distinct[i] as f64).collect(),
                tokens: vec![1.0; cols.len()],
            };
            vec![OraclePlan {
                plan: mk_node(
                    PhysicalOp::FullScan {
                        table: *table,
                        table_name: table_name.clone(),
                        cols: cols.clone(),
                    },
                    node.schema.clone(),
                    fp,
                    rows,
                    c.scan_setup_ms + c.scan_per_row_ms * rows,
                    1.0,
                    &[],
                ),
                rows,
                stats,
            }]
        }
        LogicalOp::Select { input, predicate } => {
            let mut out = Vec::new();
            for child in oracle_enumerate(input, w) {
                let sel = selectivity(predicate, &child.stats).clamp(0.0, 1.0);
                let rows = child.rows * sel;
                let stats = child.stats.capped(rows);
                if let PhysicalOp::FullScan { table, table_name, cols } = &child.plan.op {
                    out.push(OraclePlan {
                        plan: mk_node(
                            PhysicalOp::FilteredScan {
                                table: *table,
                                table_name: table_name.clone(),
                                cols: cols.clone(),
                                predicate: predicate.clone(),
                            },
                            node.schema.clone(),
                            fp,
                            rows,
                            c.scan_setup_ms + c.filtered_scan_per_row_ms * child.rows,
                            1.0,
                            &[],
                        ),
                        rows,
                        stats: stats.clone(),
                    });
                }
                out.push(OraclePlan {
                    plan: mk_node(
                        PhysicalOp::Filter {
                            input: child.plan.clone(),
                            predicate: predicate.clone(),
                        },
                        node.schema.clone(),
                        fp,
                        rows,
                        c.filter_per_row_ms * child.rows,
                        1.0,
                        &[child.plan.total],
                    ),
                    rows,
                    stats,
                });
            }
            out
        }
        LogicalOp::Join { left, right, condition, .. } => {
            let lw = left.schema.len();
            let mut out = Vec::new();
            for lc in oracle_enumerate(left, w) {
                for rc in oracle_enumerate(right, w) {
                    let joined = lc.stats.concat(&rc.stats);
                    let equi = condition.as_ref().and_then(|e| split_equi_condition(e, lw));
                    let rows = match (&equi, condition) {
                        (Some((lk, rk, rest)), _) => {
                            let dl = match lk {
                                Expr::Column(i) => lc.stats.distinct[*i],
                                _ => (lc.rows / 3.0).max(1.0),
                            };
                            let dr = match rk {
                                Expr::Column(i) => rc.stats.distinct[*i],
                                _ => (rc.rows / 3.0).max(1.0),
                            };
                            let base = join_cardinality(lc.rows, rc.rows, Some((dl, dr)));
                            base * rest.as_ref().map(|r| selectivity(r, &joined)).unwrap_or(1.0)
                        }
                        (None, Some(e)) => lc.rows * rc.rows * selectivity(e, &joined),
                        (None, None) => lc.rows * rc.rows,
                    };
                    let stats = joined.capped(rows);
                    let totals = [lc.plan.total, rc.plan.total];
                    if let Some((lk, rk, rest)) = &equi {
                        let build_mb =
                            lc.rows * lw as f64 * c.bytes_per_value / 1_000_000.0;
                        if build_mb <= c.hash_mem_budget_mb {
                            out.push(OraclePlan {
                                plan: mk_node(
                                    PhysicalOp::HashJoin {
                                        left: lc.plan.clone(),
                                        right: rc.plan.clone(),
                                        left_key: lk.clone(),
                                        right_key: rk.clone(),
                                        remainder: rest.clone(),
                                    },
                                    node.schema.clone(),
                                    fp,
                                    rows,
                                    c.hash_join_setup_ms
                                        + c.hash_join_per_row_ms * (lc.rows + rc.rows),
                                    1.0,
                                    &totals,
                                ),
                                rows,
                                stats: stats.clone(),
                            });
                        }
                        out.push(OraclePlan {
                            plan: mk_node(
                                PhysicalOp::MergeJoin {
                                    left: lc.plan.clone(),
                                    right: rc.plan.clone(),
                                    left_key: lk.clone(),
                                    right_key: rk.clone(),
                                    remainder: rest.clone(),
                                },
                                node.schema.clone(),
                                fp,
                                rows,
                                c.merge_join_cost(lc.rows, rc.rows),
                                1.0,
                                &totals,
                            ),
                            rows,
                            stats: stats.clone(),
                        });
                    }
                    out.push(OraclePlan {
                        plan: mk_node(
                            PhysicalOp::NestedLoopJoin {
                                left: lc.plan.clone(),
                                right: rc.plan.clone(),
                                condition: condition.clone(),
                            },
                            node.schema.clone(),
                            fp,
                            rows,
                            c.nlj_per_pair_ms * lc.rows * rc.rows,
                            1.0,
                            &totals,
                        ),
                        rows,
                        stats,
                    });
                }
            }
            out
        }
        LogicalOp::Sort { input, keys } => oracle_enumerate(input, w)
            .into_iter()
            .map(|child| {
                let rows = child.rows;
                OraclePlan {
                    plan: mk_node(
                        PhysicalOp::Sort {
                            input: child.plan.clone(),
                            keys: keys.clone(),
                        },
                        node.schema.clone(),
                        fp,
                        rows,
                        c.sort_cost(rows),
                        1.0,
                        &[child.plan.total],
                    ),
                    rows,
                    stats: child.stats,
                }
            })
            .collect(),
        LogicalOp::Limit { input, count } => oracle_enumerate(input, w)
            .into_iter()
            .map(|child| {
                let rows = child.rows.min(*count as f64);
                OraclePlan {
                    plan: mk_node(
                        PhysicalOp::Limit {
                            input: child.plan.clone(),
                            count: *count,
                        },
                        node.schema.clone(),
                        fp,
                        rows,
                        c.limit_ms,
                        1.0,
                        &[child.plan.total],
                    ),
                    rows,
                    stats: child.stats.capped(rows),
                }
            })
            .collect(),
        LogicalOp::AiTrain { input, features, target } => oracle_enumerate(input, w)
            .into_iter()
            .map(|child| {
                let rows = child.rows;
                let profile = w.costs.profile(ModelKind::RidgeRegressor, None);
                OraclePlan {
                    plan: mk_node(
                        PhysicalOp::AiTrain {
                            input: child.plan.clone(),
                            features: features.clone(),
                            target: *target,
                            placement: Placement::Any,
                        },
                        node.schema.clone(),
                        fp,
                        rows,
                        batch_cost_est(&profile, rows, rows * features.len() as f64, false),
                        1.0,
                        &[child.plan.total],
                    ),
                    rows,
                    stats: child.stats,
                }
            })
            .collect(),
        LogicalOp::AiInfer { input, model, features, key, output_name } => {
            let (kind, mv) = match model {
                InferModel::Trained => (ModelKind::RidgeRegressor, None),
                InferModel::Registered { model, kind } => (*kind, Some(model.clone())),
            };
            let profile = w.costs.profile(kind, mv.as_ref());
            let mask = FeatureMask::new(features.iter().copied()).unwrap();
            let variants: &[PipelineVariant] =
                if kind == ModelKind::RidgeRegressor && mv.is_none() {
                    &[PipelineVariant::Direct, PipelineVariant::Staged]
                } else {
                    &[PipelineVariant::Direct]
                };
            let mut out = Vec::new();
            for child in oracle_enumerate(input, w) {
                let rows = child.rows;
                let tokens: f64 = features
                    .iter()
                    .map(|&f| child.stats.tokens[f])
                    .sum::<f64>()
                    .max(1.0);
                for &variant in variants {
                    let quality = w
                        .profiles
                        .lookup(mv.as_ref(), kind, variant, &mask)
                        .expect("profile present");
                    for placement in [Placement::Any, Placement::Engine(0), Placement::Engine(1)] {
                        let resident = match (&mv, placement) {
                            (None, _) => true,
                            (Some(m), Placement::Any) => w.engines.resident_anywhere(m),
                            (Some(m), Placement::Engine(i)) => w.engines.resident_on(i, m),
                        };
                        let mut latency =
                            batch_cost_est(&profile, rows, rows * tokens, !resident);
                        if variant == PipelineVariant::Staged {
                            latency *= c.staged_cost_factor;
                        }
                        out.push(OraclePlan {
                            plan: mk_node(
                                PhysicalOp::AiInfer {
                                    input: child.plan.clone(),
                                    model: model.clone(),
                                    features: features.clone(),
                                    key: *key,
                                    output_name: output_name.clone(),
                                    variant,
                                    placement,
                                },
                                node.schema.clone(),
                                fp,
                                rows,
                                latency,
                                quality,
                                &[child.plan.total],
                            ),
                            rows,
                            stats: neurq_core::opt::cost::ColStats::uniform(2, rows),
                        });
                    }
                }
            }
            out
        }
        other => unreachable!("oracle does not generate {other:?}"),
    }
}

/// Oracle selection: filter, then argmin/argmax with the documented
/// tie-break (fewer nodes, then byte encoding).
pub fn oracle_choose(plans: &[OraclePlan], objective: &Objective) -> Result<PhysRef, CostQuality> {
    let tie = |p: &PhysRef| (p.count_nodes(), p.encode());
    match objective {
        Objective::MinLatencyGivenQuality { min_quality } => {
            let feasible: Vec<&OraclePlan> = plans
                .iter()
                .filter(|p| p.plan.total.quality >= *min_quality)
                .collect();
            if feasible.is_empty() {
                let best = plans
                    .iter()
                    .max_by(|a, b| {
                        a.plan.total.quality.total_cmp(&b.plan.total.quality).then_with(|| {
                            b.plan.total.latency_ms.total_cmp(&a.plan.total.latency_ms)
                        })
                    })
                    .unwrap();
                return Err(best.plan.total);
            }
            Ok(feasible
                .into_iter()
                .min_by(|a, b| {
                    a.plan
                        .total
                        .latency_ms
                        .total_cmp(&b.plan.total.latency_ms)
                        .then_with(|| b.plan.total.quality.total_cmp(&a.plan.total.quality))
                        .then_with(|| tie(&a.plan).cmp(&tie(&b.plan)))
                })
                .unwrap()
                .plan
                .clone())
        }
        Objective::MaxQualityGivenLatency { max_latency_ms } => {
            let feasible: Vec<&OraclePlan> = plans
                .iter()
                .filter(|p| p.plan.total.latency_ms <= *max_latency_ms)
                .collect();
            if feasible.is_empty() {
                let best = plans
                    .iter()
                    .min_by(|a, b| a.plan.total.latency_ms.total_cmp(&b.plan.total.latency_ms))
                    .unwrap();
                return Err(best.plan.total);
            }
            Ok(feasible
                .into_iter()
                .max_by(|a, b| {
                    a.plan
                        .total
                        .quality
                        .total_cmp(&b.plan.total.quality)
                        .then_with(|| b.plan.total.latency_ms.total_cmp(&a.plan.total.latency_ms))
                        .then_with(|| tie(&b.plan).cmp(&tie(&a.plan)))
                })
                .unwrap()
                .plan
                .clone())
        }
    }
}

// ------------------------------------------------------ random logical

pub fn random_logical(rng: &mut ChaCha8Rng, w: &World) -> PlanRef {
    let table = TableId(rng.random_range(1..=3));
    let st = &w.stats[&table];
    let width = st.distinct.len();
    let columns: Vec<(String, ColumnType)> = (0..width)
        .map(|i| {
            (
                format!("c{i}"),
                if i == width - 1 {
                    ColumnType::Float64
                } else {
                    ColumnType::Int64
                },
            )
        })
        .collect();
    let mut plan = LogicalNode::scan(table, format!("t{}", table.0), (0..width).collect(), columns);
    let mut budget = 5usize; // six nodes max including the scan
    while budget > 0 && rng.random_range(0..10) < 7 {
        match rng.random_range(0..5) {
            0 => {
                let pred = Expr::binary(
                    BinaryOp::Lt,
                    Expr::col(rng.random_range(0..plan.schema.len())),
                    Expr::int(rng.random_range(0..30)),
                );
                plan = LogicalNode::select(plan, pred);
                budget -= 1;
            }
            1 => {
                if budget >= 2 {
                    let t2 = TableId(rng.random_range(1..=3));
                    let st2 = &w.stats[&t2];
                    let w2 = st2.distinct.len();
                    let cols2: Vec<(String, ColumnType)> =
                        (0..w2).map(|i| (format!("r{i}"), ColumnType::Int64)).collect();
                    let right =
                        LogicalNode::scan(t2, format!("t{}", t2.0), (0..w2).collect(), cols2);
                    let cond = Expr::binary(
                        BinaryOp::Eq,
                        Expr::col(1),
                        Expr::col(plan.schema.len() + 1),
                    );
                    let (j, _) = LogicalNode::join(plan, right, JoinKind::Inner, Some(cond));
                    plan = j;
                    budget -= 2;
                }
            }
            2 => {
                plan = LogicalNode::sort(plan, vec![(Expr::col(0), true)]);
                budget -= 1;
            }
            3 => {
                plan = LogicalNode::limit(plan, rng.random_range(5..200));
                budget -= 1;
            }
            _ => {
                if budget >= 2 {
                    let floats: Vec<usize> = plan
                        .schema
                        .iter()
                        .enumerate()
                        .filter(|(_, (_, t))| *t == ColumnType::Float64)
                        .map(|(i, _)| i)
                        .collect();
                    if let Some(&target) = floats.first() {
                        let feature = 1.min(plan.schema.len() - 1);
                        let train = LogicalNode::ai_train(plan, vec![feature], target);
                        plan = LogicalNode::ai_infer(
                            train,
                            InferModel::Trained,
                            vec![feature],
                            0,
                            "pred",
                        );
                        budget -= 2;
                    }
                }
            }
        }
    }
    plan
}


/// Shared by the acceptance suite: runs `n` random plans under both
/// objective modes and panics on the first divergence. Returns the number
/// of comparisons made.
pub fn oracle_equivalence_check(n: u64) -> usize {
    let w = World::new();
    let mut checked = 0usize;
    for seed in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logical = random_logical(&mut rng, &w);
        let oracle_plans = oracle_enumerate(&logical, &w);
        let cands = enumerate_physical(&logical, &w.ctx()).unwrap();
        let latencies: Vec<f64> = oracle_plans.iter().map(|p| p.plan.total.latency_ms).collect();
        let lo = latencies.iter().copied().fold(f64::MAX, f64::min);
        let hi = latencies.iter().copied().fold(0.0f64, f64::max);
        let mid = lo + (hi - lo) / 2.0;
        let objectives = [
            Objective::MinLatencyGivenQuality { min_quality: 0.0 },
            Objective::MinLatencyGivenQuality { min_quality: 0.85 },
            Objective::MinLatencyGivenQuality { min_quality: 0.95 },
            Objective::MaxQualityGivenLatency { max_latency_ms: mid },
            Objective::MaxQualityGivenLatency { max_latency_ms: 0.001 },
        ];
        for objective in objectives {
            let got = choose(&cands, &objective);
            let want = oracle_choose(&oracle_plans, &objective);
            match (got, want) {
                (Ok(g), Ok(o)) => {
                    assert_eq!(
                        g.encode(),
                        o.encode(),
                        "seed {seed} {objective}: chose a different plan\nengine:\n{}\noracle:\n{}",
                        neurq_core::opt::explain_physical(&g),
                        neurq_core::opt::explain_physical(&o)
                    );
                    checked += 1;
                }
                (Err(OptimizeError::Infeasible { best }), Err(oracle_best)) => {
                    assert_eq!(
                        best, oracle_best,
                        "seed {seed} {objective}: infeasible bests diverge"
                    );
                    checked += 1;
                }
                (g, o) => panic!(
                    "seed {seed} {objective}: feasibility mismatch engine={g:?} oracle={:?}",
                    o.err()
                ),
            }
        }
    }
    checked
}

