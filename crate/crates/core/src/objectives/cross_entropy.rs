use super::{rows, ObjectiveError, Result};
use crate::tensor::{Function, Tape, Tensor, TensorError, Var};

/// Mean softmax cross-entropy of `[N, K]` logits against fixed labels.
#[derive(Debug, Clone)]
pub struct CrossEntropy {
    labels: Vec<usize>,
}

impl CrossEntropy {
    pub fn new(labels: Vec<usize>) -> Self {
        CrossEntropy { labels }
    }
}

/// Row-wise `log sum exp`, stabilized by the row maximum.
fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

impl Function for CrossEntropy {
    fn name(&self) -> &'static str {
        "cross_entropy"
    }

    fn forward(&self, inputs: &[&Tensor]) -> crate::tensor::Result<Tensor> {
        let logits = inputs[0];
        let k = *logits.shape().last().unwrap();
        let n = logits.numel() / k;
        if logits.shape().len() != 2 || n != self.labels.len() {
            return Err(TensorError::ShapeMismatch {
                op: "cross_entropy",
                detail: format!("logits {:?} with {} labels", logits.shape(), self.labels.len()),
            });
        }
        let total: f64 = logits
            .data()
            .chunks(k)
            .zip(&self.labels)
            .map(|(row, &y)| log_sum_exp(row) - row[y])
            .sum();
        Ok(Tensor::scalar(total / n as f64))
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, g: &[f64]) -> Vec<Option<Vec<f64>>> {
        let logits = inputs[0];
        let k = logits.shape()[1];
        let scale = g[0] / self.labels.len() as f64;
        let mut grad = Vec::with_capacity(logits.numel());
        for (row, &y) in logits.data().chunks(k).zip(&self.labels) {
            let lse = log_sum_exp(row);
            for (j, v) in row.iter().enumerate() {
                let p = (v - lse).exp();
                grad.push(scale * (p - if j == y { 1.0 } else { 0.0 }));
            }
        }
        vec![Some(grad)]
    }
}

fn validate(logits: &Tensor, labels: &[usize]) -> Result<()> {
    let (n, k) = rows(logits, "cross_entropy")?;
    if k < 2 {
        return Err(ObjectiveError::Shape(format!("cross_entropy needs at least 2 classes, got {k}")));
    }
    if n != labels.len() {
        return Err(ObjectiveError::Shape(format!("{n} logit rows but {} labels", labels.len())));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= k) {
        return Err(ObjectiveError::LabelOutOfRange { label, classes: k });
    }
    Ok(())
}

/// Records the loss on `tape`.
pub fn cross_entropy(tape: &mut Tape, logits: Var, labels: &[usize]) -> Result<Var> {
    validate(tape.value(logits), labels)?;
    Ok(tape.apply(CrossEntropy::new(labels.to_vec()), &[logits])?)
}

pub fn cross_entropy_value(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    validate(logits, labels)?;
    Ok(CrossEntropy::new(labels.to_vec()).forward(&[logits])?.data()[0])
}
