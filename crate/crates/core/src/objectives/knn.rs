use super::{rows, ObjectiveError, Result};
use crate::tensor::Tensor;

/// Predicts a class per test row by majority vote among its `k` most
/// similar training rows (dot product of unit-norm embeddings).
///
/// Neighbors with equal similarity are ranked by training index. Classes
/// with equal vote counts are separated by summed similarity, then by the
/// smaller class id.
pub fn knn_predict(train: &Tensor, train_labels: &[usize], test: &Tensor, k: usize) -> Result<Vec<usize>> {
    let (n_train, d) = rows(train, "knn")?;
    let (_, d_test) = rows(test, "knn")?;
    if d != d_test {
        return Err(ObjectiveError::Shape(format!("train dim {d} != test dim {d_test}")));
    }
    if train_labels.len() != n_train {
        return Err(ObjectiveError::Shape(format!("{n_train} train rows, {} labels", train_labels.len())));
    }
    if k == 0 || k > n_train {
        return Err(ObjectiveError::KTooLarge { k, available: n_train });
    }
    let classes = train_labels.iter().max().map_or(0, |m| m + 1);
    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(n_train);
    let mut preds = Vec::new();
    for q in test.data().chunks(d) {
        scored.clear();
        scored.extend(
            train.data().chunks(d).enumerate().map(|(i, t)| (q.iter().zip(t).map(|(a, b)| a * b).sum::<f64>(), i)),
        );
        let by_rank = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
        if k < n_train {
            scored.select_nth_unstable_by(k - 1, by_rank);
        }
        let mut votes = vec![0usize; classes];
        let mut sims = vec![0.0f64; classes];
        for &(s, i) in &scored[..k] {
            votes[train_labels[i]] += 1;
            sims[train_labels[i]] += s;
        }
        let best = (0..classes)
            .max_by(|&a, &b| {
                votes[a]
                    .cmp(&votes[b])
                    .then(sims[a].total_cmp(&sims[b]))
                    .then(b.cmp(&a))
            })
            .unwrap_or(0);
        preds.push(best);
    }
    Ok(preds)
}

/// Fraction of test rows whose KNN prediction matches the label.
pub fn knn_evaluate(
    train: &Tensor,
    train_labels: &[usize],
    test: &Tensor,
    test_labels: &[usize],
    k: usize,
) -> Result<f64> {
    let preds = knn_predict(train, train_labels, test, k)?;
    if preds.len() != test_labels.len() {
        return Err(ObjectiveError::Shape(format!("{} test rows, {} labels", preds.len(), test_labels.len())));
    }
    let correct = preds.iter().zip(test_labels).filter(|(p, y)| p == y).count();
    Ok(correct as f64 / preds.len() as f64)
}
