use super::{rows, ObjectiveError, Result};
use crate::tensor::{Function, Tape, Tensor, TensorError, Var};

/// NT-Xent over `[2N, D]` embeddings where rows `i` and `i + N` are the
/// two views of sample `i`. Each anchor is scored against the other
/// `2N - 1` rows; the loss is the mean over all `2N` anchors.
#[derive(Debug, Clone, Copy)]
pub struct NtXent {
    temperature: f64,
}

impl NtXent {
    pub fn new(temperature: f64) -> Self {
        NtXent { temperature }
    }

    /// Scaled similarity matrix and, per anchor, the softmax over non-self
    /// candidates together with the anchor loss.
    fn scores(&self, z: &Tensor) -> (usize, Vec<f64>, Vec<f64>) {
        let d = z.shape()[1];
        let m = z.shape()[0];
        let zd = z.data();
        let mut sim = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                let dot: f64 = zd[i * d..(i + 1) * d].iter().zip(&zd[j * d..(j + 1) * d]).map(|(a, b)| a * b).sum();
                sim[i * m + j] = dot / self.temperature;
            }
        }
        let mut probs = vec![0.0; m * m];
        let mut losses = vec![0.0; m];
        let half = m / 2;
        for i in 0..m {
            let row = &sim[i * m..(i + 1) * m];
            let pos = (i + half) % m;
            let max = row.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| *v).fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = row.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| (v - max).exp()).sum();
            for j in (0..m).filter(|&j| j != i) {
                probs[i * m + j] = (row[j] - max).exp() / denom;
            }
            losses[i] = (max - row[pos]) + denom.ln();
        }
        (m, probs, losses)
    }
}

impl Function for NtXent {
    fn name(&self) -> &'static str {
        "ntxent"
    }

    fn forward(&self, inputs: &[&Tensor]) -> crate::tensor::Result<Tensor> {
        let z = inputs[0];
        if z.shape().len() != 2 || !z.shape()[0].is_multiple_of(2) || z.shape()[0] < 2 {
            return Err(TensorError::ShapeMismatch {
                op: "ntxent",
                detail: format!("expected [2N, D] embeddings, got {:?}", z.shape()),
            });
        }
        let (m, _, losses) = self.scores(z);
        Ok(Tensor::scalar(losses.iter().sum::<f64>() / m as f64))
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, g: &[f64]) -> Vec<Option<Vec<f64>>> {
        let z = inputs[0];
        let d = z.shape()[1];
        let (m, probs, _) = self.scores(z);
        let half = m / 2;
        // w[i][j] = dL/ds_ij; s_ij = z_i . z_j / t.
        let scale = g[0] / m as f64;
        let mut w = probs;
        for i in 0..m {
            w[i * m + (i + half) % m] -= 1.0;
        }
        let zd = z.data();
        let mut grad = vec![0.0; z.numel()];
        for i in 0..m {
            for j in 0..m {
                let c = scale * (w[i * m + j] + w[j * m + i]) / self.temperature;
                if c == 0.0 {
                    continue;
                }
                for k in 0..d {
                    grad[i * d + k] += c * zd[j * d + k];
                }
            }
        }
        vec![Some(grad)]
    }
}

fn validate(z: &Tensor, temperature: f64) -> Result<()> {
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(ObjectiveError::TemperatureNonPositive(temperature));
    }
    let (m, d) = rows(z, "ntxent")?;
    if m < 2 || m % 2 != 0 {
        return Err(ObjectiveError::Shape(format!("ntxent needs an even number of rows (2N), got {m}")));
    }
    for (row, chunk) in z.data().chunks(d).enumerate() {
        let norm = chunk.iter().map(|v| v * v).sum::<f64>().sqrt();
        // A zero row is what L2 normalization yields for a degenerate embedding.
        if norm != 0.0 && (norm - 1.0).abs() > 1e-6 {
            return Err(ObjectiveError::NotNormalized { row, norm });
        }
    }
    Ok(())
}

/// Records the loss on `tape`. Rows of `z` must have unit norm or be zero.
pub fn ntxent(tape: &mut Tape, z: Var, temperature: f64) -> Result<Var> {
    validate(tape.value(z), temperature)?;
    Ok(tape.apply(NtXent::new(temperature), &[z])?)
}

pub fn ntxent_value(z: &Tensor, temperature: f64) -> Result<f64> {
    validate(z, temperature)?;
    Ok(NtXent::new(temperature).forward(&[z])?.data()[0])
}
