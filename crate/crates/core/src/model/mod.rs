//! Deterministic mock AI backends: closed-form ridge training, a hashing
//! sentence embedder, and a generative mock with token-dependent cost.
//!
//! Every backend is bit-deterministic given (inputs, seed, config). Cost
//! accounting goes through [`batch_cost`], the single formula shared by the
//! optimizer's estimates and the executor's dispatch simulation.

pub mod embed;
pub mod generative;
pub mod ridge;

pub use embed::Embedder;
pub use generative::GenerativeMock;

use crate::types::{SimMs, Value};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("arity mismatch: model expects {expected} features, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("feature mask is empty")]
    EmptyMask,
    #[error("weight payload malformed: {0}")]
    BadWeights(String),
}

/// Supported backend kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    RidgeRegressor,
    HashEmbedder,
    GenerativeMock,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::RidgeRegressor => "ridge_regressor",
            ModelKind::HashEmbedder => "hash_embedder",
            ModelKind::GenerativeMock => "generative_mock",
        }
    }

    pub fn parse(s: &str) -> Option<ModelKind> {
        match s {
            "ridge_regressor" => Some(ModelKind::RidgeRegressor),
            "hash_embedder" => Some(ModelKind::HashEmbedder),
            "generative_mock" => Some(ModelKind::GenerativeMock),
            _ => None,
        }
    }
}

/// Simulated cost constants of one model. `per_token_ms` is 0 for
/// non-generative kinds unless a config overrides it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostProfile {
    pub load_cost_ms: f64,
    pub batch_setup_ms: f64,
    pub per_item_ms: f64,
    pub per_token_ms: f64,
    pub weight_size_mb: f64,
}

impl Default for CostProfile {
    fn default() -> Self {
        CostProfile {
            load_cost_ms: 50.0,
            batch_setup_ms: 0.5,
            per_item_ms: 0.01,
            per_token_ms: 0.0,
            weight_size_mb: 1.0,
        }
    }
}

/// Simulated latency of dispatching one batch of `n_items` totalling
/// `total_tokens` tokens. `include_load` charges the one-time weight load.
///
/// This is the only place the formula exists; estimator and executor both
/// call it.
pub fn batch_cost(
    profile: &CostProfile,
    n_items: u64,
    total_tokens: u64,
    include_load: bool,
) -> SimMs {
    batch_cost_est(profile, n_items as f64, total_tokens as f64, include_load)
}

/// The same formula over estimated (fractional) counts, for the optimizer.
pub fn batch_cost_est(
    profile: &CostProfile,
    n_items: f64,
    total_tokens: f64,
    include_load: bool,
) -> SimMs {
    let load = if include_load { profile.load_cost_ms } else { 0.0 };
    load + profile.batch_setup_ms
        + profile.per_item_ms * n_items
        + profile.per_token_ms * total_tokens
}

/// A subset of a model's feature columns, stored sorted and deduplicated.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FeatureMask(Vec<usize>);

impl FeatureMask {
    pub fn new(indices: impl IntoIterator<Item = usize>) -> Result<FeatureMask, ModelError> {
        let mut v: Vec<usize> = indices.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        if v.is_empty() {
            return Err(ModelError::EmptyMask);
        }
        Ok(FeatureMask(v))
    }

    pub fn full(width: usize) -> FeatureMask {
        FeatureMask((0..width).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    /// Projects a full-width feature row down to the masked columns.
    pub fn project(&self, row: &[f64]) -> Vec<f64> {
        self.0.iter().map(|&i| row[i]).collect()
    }
}

/// One inference input: a numeric feature row or a text payload.
#[derive(Debug, Clone, PartialEq)]
pub enum InferInput {
    Features(Vec<f64>),
    Text(String),
}

impl InferInput {
    /// Input length in the batching sense: feature count or token count.
    pub fn length(&self) -> u64 {
        match self {
            InferInput::Features(f) => f.len() as u64,
            InferInput::Text(t) => embed::token_count(t),
        }
    }
}

/// Result of one batched inference dispatch.
#[derive(Debug, Clone, PartialEq)]
pub struct InferOutcome {
    pub outputs: Vec<Value>,
    /// Simulated latency of the dispatch, from [`batch_cost`].
    pub cost_ms: SimMs,
    /// Token total the cost was charged on (outputs for generative kinds,
    /// inputs otherwise).
    pub charged_tokens: u64,
}

/// Runs one micro-batch through a backend.
///
/// `seed` only affects the generative mock; ridge and the embedder are pure
/// functions of weights and inputs.
pub fn infer(
    kind: ModelKind,
    weights: &[u8],
    inputs: &[InferInput],
    profile: &CostProfile,
    include_load: bool,
    seed: u64,
    embed_dim: usize,
) -> Result<InferOutcome, ModelError> {
    let n = inputs.len() as u64;
    match kind {
        ModelKind::RidgeRegressor => {
            let w = ridge::weights_from_bytes(weights)?;
            let rows: Vec<&Vec<f64>> = inputs
                .iter()
                .map(|i| match i {
                    InferInput::Features(f) => Ok(f),
                    InferInput::Text(_) => Err(ModelError::DegenerateInput(
                        "ridge expects feature rows".into(),
                    )),
                })
                .collect::<Result<_, _>>()?;
            for r in &rows {
                if r.len() + 1 != w.len() {
                    return Err(ModelError::ArityMismatch {
                        expected: w.len() - 1,
                        got: r.len(),
                    });
                }
            }
            let outputs = crate::par::map_slice(&rows, |r| Value::Float64(ridge::predict(&w, r)));
            let tokens: u64 = inputs.iter().map(InferInput::length).sum();
            Ok(InferOutcome {
                outputs,
                cost_ms: batch_cost(profile, n, tokens, include_load),
                charged_tokens: tokens,
            })
        }
        ModelKind::HashEmbedder => {
            let embedder = Embedder::new(embed_dim);
            let texts: Vec<&str> = inputs
                .iter()
                .map(|i| match i {
                    InferInput::Text(t) => Ok(t.as_str()),
                    InferInput::Features(_) => Err(ModelError::DegenerateInput(
                        "embedder expects text".into(),
                    )),
                })
                .collect::<Result<_, _>>()?;
            let vectors = embedder.embed_batch(&texts);
            let tokens: u64 = texts.iter().map(|t| embed::token_count(t)).sum();
            Ok(InferOutcome {
                outputs: vectors.into_iter().map(Value::Vector).collect(),
                cost_ms: batch_cost(profile, n, tokens, include_load),
                charged_tokens: tokens,
            })
        }
        ModelKind::GenerativeMock => {
            let generator = GenerativeMock::new(seed);
            let texts: Vec<&str> = inputs
                .iter()
                .map(|i| match i {
                    InferInput::Text(t) => Ok(t.as_str()),
                    InferInput::Features(_) => Err(ModelError::DegenerateInput(
                        "generative mock expects text".into(),
                    )),
                })
                .collect::<Result<_, _>>()?;
            let counts = crate::par::map_slice(&texts, |t| generator.output_tokens(t));
            let out_tokens: u64 = counts.iter().sum();
            Ok(InferOutcome {
                outputs: counts.into_iter().map(|c| Value::Int64(c as i64)).collect(),
                cost_ms: batch_cost(profile, n, out_tokens, include_load),
                charged_tokens: out_tokens,
            })
        }
    }
}

/// Quality of a regression on a holdout: `max(0, 1 - RMSE / std(target))`.
pub fn regression_quality(predictions: &[f64], targets: &[f64]) -> f64 {
    assert_eq!(predictions.len(), targets.len());
    assert!(!targets.is_empty(), "holdout must be non-empty");
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let var = targets.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    let mse = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / n;
    let rmse = mse.sqrt();
    if std == 0.0 {
        return if rmse < 1e-12 { 1.0 } else { 0.0 };
    }
    (1.0 - rmse / std).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_cost_singleton() {
        let p = CostProfile {
            load_cost_ms: 50.0,
            batch_setup_ms: 2.0,
            per_item_ms: 3.0,
            per_token_ms: 0.0,
            weight_size_mb: 1.0,
        };
        assert_eq!(batch_cost(&p, 1, 10, false), 5.0);
        assert_eq!(batch_cost(&p, 1, 10, true), 55.0);
    }

    #[test]
    fn generative_per_token_term() {
        // 8 items of lengths 10..=80: token total 360 at 0.1ms/token.
        let p = CostProfile {
            load_cost_ms: 0.0,
            batch_setup_ms: 0.0,
            per_item_ms: 0.0,
            per_token_ms: 0.1,
            weight_size_mb: 1.0,
        };
        let tokens: u64 = (1..=8).map(|i| i * 10).sum();
        assert_eq!(tokens, 360);
        assert!((batch_cost(&p, 8, tokens, false) - 36.0).abs() < 1e-12);
    }

    #[test]
    fn residency_changes_cost_by_exactly_load() {
        let p = CostProfile::default();
        let cold = batch_cost(&p, 4, 100, true);
        let warm = batch_cost(&p, 4, 100, false);
        assert!((cold - warm - p.load_cost_ms).abs() < 1e-12);
    }

    #[test]
    fn ridge_infer_dot_product() {
        // weights [2, 1] (slope, intercept), input [3] -> 7
        let w = ridge::weights_to_bytes(&[2.0, 1.0]);
        let out = infer(
            ModelKind::RidgeRegressor,
            &w,
            &[InferInput::Features(vec![3.0])],
            &CostProfile::default(),
            false,
            0,
            64,
        )
        .unwrap();
        assert_eq!(out.outputs, vec![Value::Float64(7.0)]);
    }

    #[test]
    fn ridge_infer_checks_arity() {
        let w = ridge::weights_to_bytes(&[2.0, 1.0]);
        let err = infer(
            ModelKind::RidgeRegressor,
            &w,
            &[InferInput::Features(vec![3.0, 4.0])],
            &CostProfile::default(),
            false,
            0,
            64,
        )
        .unwrap_err();
        assert_eq!(err, ModelError::ArityMismatch { expected: 1, got: 2 });
    }

    #[test]
    fn generative_is_seed_deterministic() {
        let inputs = vec![
            InferInput::Text("one two three".into()),
            InferInput::Text("a much longer prompt with more tokens".into()),
        ];
        let p = CostProfile {
            per_token_ms: 0.1,
            ..CostProfile::default()
        };
        let a = infer(ModelKind::GenerativeMock, &[], &inputs, &p, false, 42, 64).unwrap();
        let b = infer(ModelKind::GenerativeMock, &[], &inputs, &p, false, 42, 64).unwrap();
        assert_eq!(a, b);
        let c = infer(ModelKind::GenerativeMock, &[], &inputs, &p, false, 43, 64).unwrap();
        assert_ne!(a.outputs, c.outputs);
    }

    #[test]
    fn quality_of_constant_predictor_is_zero() {
        let targets = vec![1.0, 2.0, 3.0, 4.0];
        let mean = 2.5;
        let preds = vec![mean; 4];
        assert!(regression_quality(&preds, &targets).abs() < 1e-12);
    }

    #[test]
    fn quality_of_perfect_fit_is_one() {
        let targets = vec![1.0, 2.0, 3.0];
        assert!((regression_quality(&targets.clone(), &targets) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mask_rejects_empty_and_projects() {
        assert_eq!(FeatureMask::new([]), Err(ModelError::EmptyMask));
        let m = FeatureMask::new([2, 0, 2]).unwrap();
        assert_eq!(m.indices(), &[0, 2]);
        assert_eq!(m.project(&[10.0, 20.0, 30.0]), vec![10.0, 30.0]);
    }
}
