use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Batch;
use crate::tensor::{RunRng, Tensor};

/// Random crop after zero padding, horizontal flip and per-channel
/// brightness jitter. Each transform fires with its own probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentPolicy {
    pub crop_pad: usize,
    pub crop_prob: f64,
    pub flip_prob: f64,
    pub jitter_prob: f64,
    pub jitter_min: f64,
    pub jitter_max: f64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy { crop_pad: 4, crop_prob: 1.0, flip_prob: 0.5, jitter_prob: 0.8, jitter_min: 0.8, jitter_max: 1.2 }
    }
}

impl AugmentPolicy {
    /// Every transform disabled.
    pub fn identity() -> Self {
        AugmentPolicy { crop_prob: 0.0, flip_prob: 0.0, jitter_prob: 0.0, ..Default::default() }
    }
}

/// Two independent augmentations of one source batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewPair {
    pub view_a: Tensor,
    pub view_b: Tensor,
}

impl ViewPair {
    /// `[2N, C, H, W]` with view A rows first, so rows `i` and `i + N` pair up.
    pub fn stacked(&self) -> Tensor {
        let mut shape = self.view_a.shape().to_vec();
        shape[0] *= 2;
        let mut data = self.view_a.data().to_vec();
        data.extend_from_slice(self.view_b.data());
        Tensor::new(shape, data).expect("views share a shape")
    }
}

/// Augments every image of `images` (`[N, C, H, W]`). Per image the RNG is
/// consumed in the order crop, flip, jitter; each step draws its gate
/// first and its parameters only when the gate fires.
pub fn augment_images(images: &Tensor, policy: &AugmentPolicy, rng: &mut RunRng) -> Tensor {
    let [n, c, h, w] = [images.shape()[0], images.shape()[1], images.shape()[2], images.shape()[3]];
    let plane = h * w;
    let mut out = vec![0.0; images.numel()];
    let mut buf = vec![0.0; c * plane];
    for i in 0..n {
        let src = &images.data()[i * c * plane..(i + 1) * c * plane];
        buf.copy_from_slice(src);
        if rng.random::<f64>() < policy.crop_prob {
            let pad = policy.crop_pad as isize;
            let dy = rng.random_range(0..=2 * policy.crop_pad) as isize - pad;
            let dx = rng.random_range(0..=2 * policy.crop_pad) as isize - pad;
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        let sy = y as isize + dy;
                        let sx = x as isize + dx;
                        let inside = sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w;
                        buf[ch * plane + y * w + x] =
                            if inside { src[ch * plane + sy as usize * w + sx as usize] } else { 0.0 };
                    }
                }
            }
        }
        if rng.random::<f64>() < policy.flip_prob {
            for row in buf.chunks_mut(w) {
                row.reverse();
            }
        }
        if rng.random::<f64>() < policy.jitter_prob {
            for ch in 0..c {
                let scale = rng.random_range(policy.jitter_min..=policy.jitter_max);
                for v in &mut buf[ch * plane..(ch + 1) * plane] {
                    *v = (*v * scale).clamp(0.0, 1.0);
                }
            }
        }
        out[i * c * plane..(i + 1) * c * plane].copy_from_slice(&buf);
    }
    Tensor::new(images.shape().to_vec(), out).expect("same shape")
}

/// View A for the whole batch, then view B, from one RNG stream.
pub fn augment_pair(batch: &Batch, policy: &AugmentPolicy, rng: &mut RunRng) -> ViewPair {
    let view_a = augment_images(&batch.images, policy, rng);
    let view_b = augment_images(&batch.images, policy, rng);
    ViewPair { view_a, view_b }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::seeded_rng;

    fn batch() -> Batch {
        let mut rng = seeded_rng(1);
        let data = (0..2 * 3 * 4 * 5).map(|_| rng.random::<f64>()).collect();
        Batch { images: Tensor::new(vec![2, 3, 4, 5], data).unwrap(), labels: None }
    }

    #[test]
    fn identity_policy_copies_input() {
        let b = batch();
        let pair = augment_pair(&b, &AugmentPolicy::identity(), &mut seeded_rng(0));
        assert_eq!(pair.view_a, b.images);
        assert_eq!(pair.view_b, b.images);
    }

    #[test]
    fn forced_flip_reverses_columns() {
        let b = batch();
        let policy = AugmentPolicy { flip_prob: 1.0, ..AugmentPolicy::identity() };
        let pair = augment_pair(&b, &policy, &mut seeded_rng(0));
        for (out, src) in pair.view_a.data().chunks(5).zip(b.images.data().chunks(5)) {
            let rev: Vec<f64> = src.iter().rev().copied().collect();
            assert_eq!(out, rev.as_slice());
        }
    }

    #[test]
    fn fixed_seed_reproduces_views() {
        let b = batch();
        let p = AugmentPolicy::default();
        let x = augment_pair(&b, &p, &mut seeded_rng(11));
        let y = augment_pair(&b, &p, &mut seeded_rng(11));
        assert!(x.view_a.bitwise_eq(&y.view_a) && x.view_b.bitwise_eq(&y.view_b));
        assert_ne!(x.view_a, x.view_b);
    }

    #[test]
    fn outputs_stay_in_unit_range() {
        let b = batch();
        let p = AugmentPolicy { jitter_prob: 1.0, jitter_min: 1.5, jitter_max: 2.0, ..Default::default() };
        let pair = augment_pair(&b, &p, &mut seeded_rng(3));
        assert!(pair.view_a.data().iter().chain(pair.view_b.data()).all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(pair.stacked().shape(), &[4, 3, 4, 5]);
    }
}
