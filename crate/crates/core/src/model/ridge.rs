//! Closed-form ridge regression.
//!
//! Training solves the regularized normal equations with an unpenalized
//! intercept: minimize `||Xw + b - y||^2 + lambda * ||w||^2`. The Gram matrix
//! is accumulated over fixed row chunks (parallel when the `parallel` feature
//! is on, bit-identical either way) and the system is solved by Cholesky
//! factorization, which is valid because the regularized matrix is symmetric
//! positive definite for `lambda > 0` and `n >= 1`.

use super::{FeatureMask, ModelError};
use crate::par;
use crate::types::{fnv64, Value};

/// Trains ridge weights. Returns `d + 1` values: `d` coefficients followed by
/// the intercept.
pub fn train(features: &[Vec<f64>], target: &[f64], lambda: f64) -> Result<Vec<f64>, ModelError> {
    let n = features.len();
    if n == 0 {
        return Err(ModelError::DegenerateInput("no training rows".into()));
    }
    if target.len() != n {
        return Err(ModelError::DegenerateInput(format!(
            "{} feature rows but {} targets",
            n,
            target.len()
        )));
    }
    let d = features[0].len();
    if features.iter().any(|r| r.len() != d) {
        return Err(ModelError::DegenerateInput("ragged feature rows".into()));
    }
    let m = d + 1; // augmented with intercept column

    // Canonical row order: training is insensitive to input order, so the
    // same multiset of rows yields bit-identical weights no matter which
    // join or scan produced it.
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| {
        let row_cmp = features[a]
            .iter()
            .map(|x| x.to_bits())
            .cmp(features[b].iter().map(|x| x.to_bits()));
        row_cmp.then_with(|| target[a].to_bits().cmp(&target[b].to_bits()))
    });

    // Accumulate A = X'X and b = X'y over fixed chunks; the intercept column
    // is implicit (all ones).
    let (a, b) = par::chunked_reduce(
        &idx,
        |chunk| {
            let mut a = vec![0.0f64; m * m];
            let mut b = vec![0.0f64; m];
            for &i in chunk {
                let row = &features[i];
                let y = target[i];
                for (j, &xj) in row.iter().enumerate() {
                    for (k, &xk) in row.iter().enumerate().skip(j) {
                        a[j * m + k] += xj * xk;
                    }
                    a[j * m + d] += xj; // intercept column
                    b[j] += xj * y;
                }
                a[d * m + d] += 1.0;
                b[d] += y;
            }
            (a, b)
        },
        |(mut a1, mut b1), (a2, b2)| {
            for (x, y) in a1.iter_mut().zip(&a2) {
                *x += y;
            }
            for (x, y) in b1.iter_mut().zip(&b2) {
                *x += y;
            }
            (a1, b1)
        },
        (vec![0.0f64; m * m], vec![0.0f64; m]),
    );

    let mut a = a;
    // Penalize coefficients, not the intercept; mirror the upper triangle.
    for j in 0..d {
        a[j * m + j] += lambda;
    }
    for j in 0..m {
        for k in 0..j {
            a[j * m + k] = a[k * m + j];
        }
    }

    cholesky_solve(&a, &b, m)
}

/// Prediction: dot(coefficients, row) + intercept.
pub fn predict(weights: &[f64], row: &[f64]) -> f64 {
    debug_assert_eq!(weights.len(), row.len() + 1);
    let d = row.len();
    let mut acc = weights[d];
    for i in 0..d {
        acc += weights[i] * row[i];
    }
    acc
}

pub fn predict_batch(weights: &[f64], rows: &[Vec<f64>]) -> Vec<f64> {
    par::map_slice(rows, |r| predict(weights, r))
}

/// Retrains on the masked feature subset only. The result predicts from
/// masked rows and is identical to a model trained from scratch on that
/// subset.
pub fn train_masked(
    features: &[Vec<f64>],
    target: &[f64],
    lambda: f64,
    mask: &FeatureMask,
) -> Result<Vec<f64>, ModelError> {
    let masked: Vec<Vec<f64>> = features.iter().map(|r| mask.project(r)).collect();
    train(&masked, target, lambda)
}

/// Feature-hashes a mixed-type row into `buckets` one-hot-summed slots.
/// Hashing is keyed by (column index, encoded value), so equal values in
/// different columns land independently.
pub fn hash_features(row: &[Value], buckets: usize) -> Vec<f64> {
    let mut out = vec![0.0f64; buckets];
    for (col, v) in row.iter().enumerate() {
        let mut bytes = Vec::with_capacity(16);
        bytes.extend_from_slice(&(col as u64).to_be_bytes());
        v.encode_into(&mut bytes);
        let slot = (fnv64(&bytes) % buckets as u64) as usize;
        out[slot] += 1.0;
    }
    out
}

pub fn weights_to_bytes(weights: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(weights.len() * 8);
    for w in weights {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

pub fn weights_from_bytes(bytes: &[u8]) -> Result<Vec<f64>, ModelError> {
    if !bytes.len().is_multiple_of(8) || bytes.is_empty() {
        return Err(ModelError::BadWeights(format!(
            "{} bytes is not a weight vector",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Solves `A x = b` for symmetric positive definite `A` (row-major, m x m).
fn cholesky_solve(a: &[f64], b: &[f64], m: usize) -> Result<Vec<f64>, ModelError> {
    // Factor A = L L'.
    let mut l = vec![0.0f64; m * m];
    for i in 0..m {
        for j in 0..=i {
            let mut sum = a[i * m + j];
            for k in 0..j {
                sum -= l[i * m + k] * l[j * m + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(ModelError::DegenerateInput(
                        "normal equations are not positive definite".into(),
                    ));
                }
                l[i * m + i] = sum.sqrt();
            } else {
                l[i * m + j] = sum / l[j * m + j];
            }
        }
    }
    // Forward substitution L y = b.
    let mut y = vec![0.0f64; m];
    for i in 0..m {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * m + k] * y[k];
        }
        y[i] = sum / l[i * m + i];
    }
    // Back substitution L' x = y.
    let mut x = vec![0.0f64; m];
    for i in (0..m).rev() {
        let mut sum = y[i];
        for k in i + 1..m {
            sum -= l[k * m + i] * x[k];
        }
        x[i] = sum / l[i * m + i];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn near_zero_lambda_fits_exact_line() {
        let w = train(&[vec![0.0], vec![1.0]], &[0.0, 1.0], 1e-9).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-6, "slope {}", w[0]);
        assert!(w[1].abs() < 1e-6, "intercept {}", w[1]);
    }

    #[test]
    fn huge_lambda_shrinks_to_target_mean() {
        let features: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let target: Vec<f64> = (0..10).map(|i| 3.0 * i as f64 + 2.0).collect();
        let mean = target.iter().sum::<f64>() / target.len() as f64;
        let w = train(&features, &target, 1e9).unwrap();
        assert!(w[0].abs() < 1e-3, "slope {}", w[0]);
        assert!((w[1] - mean).abs() < 1e-3, "intercept {} vs mean {mean}", w[1]);
    }

    #[test]
    fn empty_input_is_degenerate() {
        assert!(matches!(
            train(&[], &[], 1.0),
            Err(ModelError::DegenerateInput(_))
        ));
    }

    #[test]
    fn weights_round_trip_bytes() {
        let w = vec![1.5, -2.25, 0.0, 1e-300];
        assert_eq!(weights_from_bytes(&weights_to_bytes(&w)).unwrap(), w);
    }

    #[test]
    fn masked_training_equals_scratch_training_on_subset() {
        let features: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![i as f64, (i * i % 7) as f64, (i % 3) as f64])
            .collect();
        let target: Vec<f64> = features
            .iter()
            .map(|r| 2.0 * r[0] - 1.0 * r[2] + 0.5)
            .collect();
        let mask = FeatureMask::new([0, 2]).unwrap();
        let via_mask = train_masked(&features, &target, 0.1, &mask).unwrap();
        let scratch_rows: Vec<Vec<f64>> = features.iter().map(|r| vec![r[0], r[2]]).collect();
        let scratch = train(&scratch_rows, &target, 0.1).unwrap();
        for (a, b) in via_mask.iter().zip(&scratch) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hash_features_is_deterministic_and_column_keyed() {
        let row = vec![Value::Int64(5), Value::Int64(5)];
        let a = hash_features(&row, 32);
        let b = hash_features(&row, 32);
        assert_eq!(a, b);
        assert_eq!(a.iter().sum::<f64>(), 2.0);
        // Same value in different columns need not share a slot.
        let single = hash_features(&[Value::Int64(5)], 32);
        assert_eq!(single.iter().sum::<f64>(), 1.0);
    }
}
