use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, Provenance, Split};
use crate::tensor::stream_rng;

/// Class-conditioned oriented sine gratings with additive Gaussian noise.
///
/// Class `c` of `K` uses orientation `c/(K-1) * 90deg`; a horizontal flip
/// maps each orientation outside the set of other classes. Each sample
/// draws a phase offset in `[0, pi/2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub samples_per_class: usize,
    pub test_samples_per_class: usize,
    /// Standard deviation of the per-pixel noise.
    pub noise_sigma: f64,
    /// Grating cycles across the image.
    pub frequency: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_classes: 4,
            channels: 3,
            height: 16,
            width: 16,
            samples_per_class: 200,
            test_samples_per_class: 50,
            noise_sigma: 0.3,
            frequency: 3.0,
            seed: 0,
        }
    }
}

/// Train and test sets from disjoint substreams of `spec.seed`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, Dataset), DataError> {
    if spec.num_classes < 2 || spec.channels == 0 || spec.height == 0 || spec.width == 0 {
        return Err(DataError::Invalid(format!("degenerate synthetic spec {spec:?}")));
    }
    if spec.samples_per_class == 0 || spec.test_samples_per_class == 0 {
        return Err(DataError::Invalid("synthetic spec needs samples in both splits".into()));
    }
    let train = generate_split(spec, Split::Train, spec.samples_per_class, 0)?;
    let test = generate_split(spec, Split::Test, spec.test_samples_per_class, 1)?;
    Ok((train, test))
}

fn generate_split(spec: &SyntheticSpec, split: Split, per_class: usize, stream: u64) -> Result<Dataset, DataError> {
    let mut rng = stream_rng(spec.seed, stream);
    let (c, h, w) = (spec.channels, spec.height, spec.width);
    let k = spec.num_classes;
    let n = per_class * k;
    let mut pixels = Vec::with_capacity(n * c * h * w);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % k;
        let angle = 0.5 * PI * class as f64 / (k - 1) as f64;
        let (dx, dy) = (angle.cos(), angle.sin());
        let phase = rng.random_range(0.0..0.5 * PI);
        for _ in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let u = dx * x as f64 / w as f64 + dy * y as f64 / h as f64;
                    let clean = 0.5 + 0.35 * (2.0 * PI * spec.frequency * u + phase).sin();
                    let v = if spec.noise_sigma > 0.0 {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        clean + spec.noise_sigma * z
                    } else {
                        clean
                    };
                    pixels.push(v.clamp(0.0, 1.0));
                }
            }
        }
        labels.push(class);
    }
    Dataset::from_real(split, Provenance::Synthetic { spec: spec.clone() }, k, [c, h, w], pixels, labels)
}
