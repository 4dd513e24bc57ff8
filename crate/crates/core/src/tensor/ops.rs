use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::rng::stream_rng;
use super::tape::Function;
use super::{Result, Tensor, TensorError};

/// Geometry of a 2-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ConvSpec {
    /// `floor((in + 2*pad - kernel) / stride) + 1` per spatial dimension.
    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let ph = h + 2 * self.padding;
        let pw = w + 2 * self.padding;
        if self.stride == 0 || ph < self.kernel_h || pw < self.kernel_w {
            return None;
        }
        Some(((ph - self.kernel_h) / self.stride + 1, (pw - self.kernel_w) / self.stride + 1))
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kernel_h, self.kernel_w]
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }
}

/// The primitive operation set. Inputs by kind:
///
/// - `Conv2d`: `[x (N,C,H,W), weight (O,C,kh,kw), bias (O)]`
/// - `Linear`: `[x (N,in), weight (out,in), bias (out)]`
/// - `Relu`, `Identity`, `GlobalAvgPool`, `L2Normalize`, `NoiseInject`, `Sum`, `Mean`: `[x]`
/// - `Add`, `Mul`: `[a, b]` of equal shape
/// - `ScaleAdd`: `[coeffs (3), z, x, y]`, computing `c0*z + c1*x + c2*y`
#[derive(Debug, Clone, PartialEq)]
pub enum PrimitiveOp {
    Conv2d(ConvSpec),
    Linear { in_dim: usize, out_dim: usize },
    Relu,
    Add,
    Mul,
    GlobalAvgPool,
    L2Normalize,
    ScaleAdd,
    Identity,
    /// Adds `sigma * N(0, 1)` noise drawn from substream `step` of `seed`.
    /// Gradient passes straight through.
    NoiseInject { sigma: f64, seed: u64, step: u64 },
    Sum,
    Mean,
}

fn mismatch(op: &'static str, detail: String) -> TensorError {
    TensorError::ShapeMismatch { op, detail }
}

fn expect_arity(op: &'static str, inputs: &[&Tensor], n: usize) -> Result<()> {
    if inputs.len() != n {
        return Err(mismatch(op, format!("expected {n} inputs, got {}", inputs.len())));
    }
    Ok(())
}

/// Evaluates `op` on plain tensors without recording anything.
pub fn forward(op: &PrimitiveOp, inputs: &[&Tensor]) -> Result<Tensor> {
    let out = op.forward(inputs)?;
    if !out.is_finite() {
        return Err(TensorError::NonFinite { op: op.name().to_string() });
    }
    Ok(out)
}

impl Function for PrimitiveOp {
    fn name(&self) -> &'static str {
        match self {
            PrimitiveOp::Conv2d(_) => "conv2d",
            PrimitiveOp::Linear { .. } => "linear",
            PrimitiveOp::Relu => "relu",
            PrimitiveOp::Add => "add",
            PrimitiveOp::Mul => "mul",
            PrimitiveOp::GlobalAvgPool => "global_avg_pool",
            PrimitiveOp::L2Normalize => "l2_normalize",
            PrimitiveOp::ScaleAdd => "scale_add",
            PrimitiveOp::Identity => "identity",
            PrimitiveOp::NoiseInject { .. } => "noise",
            PrimitiveOp::Sum => "sum",
            PrimitiveOp::Mean => "mean",
        }
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        match self {
            PrimitiveOp::Conv2d(spec) => conv2d_forward(spec, inputs),
            PrimitiveOp::Linear { in_dim, out_dim } => linear_forward(*in_dim, *out_dim, inputs),
            PrimitiveOp::Relu => {
                expect_arity("relu", inputs, 1)?;
                map(inputs[0], |v| if v > 0.0 { v } else { 0.0 })
            }
            PrimitiveOp::Identity => {
                expect_arity("identity", inputs, 1)?;
                Ok(inputs[0].detached())
            }
            PrimitiveOp::Add | PrimitiveOp::Mul => {
                let name = self.name();
                expect_arity(name, inputs, 2)?;
                let (a, b) = (inputs[0], inputs[1]);
                if a.shape() != b.shape() {
                    return Err(mismatch(name, format!("{:?} vs {:?}", a.shape(), b.shape())));
                }
                let data = if matches!(self, PrimitiveOp::Add) {
                    a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect()
                } else {
                    a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect()
                };
                Tensor::new(a.shape().to_vec(), data)
            }
            PrimitiveOp::ScaleAdd => {
                expect_arity("scale_add", inputs, 4)?;
                let (c, z, x, y) = (inputs[0], inputs[1], inputs[2], inputs[3]);
                if c.numel() != 3 {
                    return Err(mismatch("scale_add", format!("coefficients must hold 3 values, got {}", c.numel())));
                }
                if z.shape() != y.shape() || x.shape() != y.shape() {
                    return Err(mismatch(
                        "scale_add",
                        format!("{:?}, {:?}, {:?}", z.shape(), x.shape(), y.shape()),
                    ));
                }
                let [a, b, cc] = [c.data()[0], c.data()[1], c.data()[2]];
                let data = z
                    .data()
                    .iter()
                    .zip(x.data())
                    .zip(y.data())
                    .map(|((zv, xv), yv)| a * zv + b * xv + cc * yv)
                    .collect();
                Tensor::new(y.shape().to_vec(), data)
            }
            PrimitiveOp::GlobalAvgPool => {
                expect_arity("global_avg_pool", inputs, 1)?;
                let x = inputs[0];
                let [n, c, h, w] = dims4("global_avg_pool", x)?;
                let plane = h * w;
                let data = x.data().chunks(plane).map(|p| p.iter().sum::<f64>() / plane as f64).collect();
                Tensor::new(vec![n, c], data)
            }
            PrimitiveOp::L2Normalize => {
                expect_arity("l2_normalize", inputs, 1)?;
                let x = inputs[0];
                let d = *x.shape().last().unwrap();
                let mut out = x.data().to_vec();
                for row in out.chunks_mut(d) {
                    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm > 0.0 {
                        row.iter_mut().for_each(|v| *v /= norm);
                    }
                }
                Tensor::new(x.shape().to_vec(), out)
            }
            PrimitiveOp::NoiseInject { sigma, seed, step } => {
                expect_arity("noise", inputs, 1)?;
                let mut rng = stream_rng(*seed, *step);
                let x = inputs[0];
                let data = x
                    .data()
                    .iter()
                    .map(|v| {
                        let n: f64 = StandardNormal.sample(&mut rng);
                        v + sigma * n
                    })
                    .collect();
                Tensor::new(x.shape().to_vec(), data)
            }
            PrimitiveOp::Sum | PrimitiveOp::Mean => {
                let name = self.name();
                expect_arity(name, inputs, 1)?;
                let s: f64 = inputs[0].data().iter().sum();
                let n = inputs[0].numel() as f64;
                Ok(Tensor::scalar(if matches!(self, PrimitiveOp::Sum) { s } else { s / n }))
            }
        }
    }

    fn backward(&self, inputs: &[&Tensor], output: &Tensor, g: &[f64]) -> Vec<Option<Vec<f64>>> {
        match self {
            PrimitiveOp::Conv2d(spec) => conv2d_backward(spec, inputs, g),
            PrimitiveOp::Linear { in_dim, out_dim } => linear_backward(*in_dim, *out_dim, inputs, g),
            PrimitiveOp::Relu => {
                // Subgradient at exactly zero is zero.
                let gx = inputs[0].data().iter().zip(g).map(|(x, gv)| if *x > 0.0 { *gv } else { 0.0 }).collect();
                vec![Some(gx)]
            }
            PrimitiveOp::Identity | PrimitiveOp::NoiseInject { .. } => vec![Some(g.to_vec())],
            PrimitiveOp::Add => vec![Some(g.to_vec()), Some(g.to_vec())],
            PrimitiveOp::Mul => {
                let (a, b) = (inputs[0].data(), inputs[1].data());
                let ga = g.iter().zip(b).map(|(gv, bv)| gv * bv).collect();
                let gb = g.iter().zip(a).map(|(gv, av)| gv * av).collect();
                vec![Some(ga), Some(gb)]
            }
            PrimitiveOp::ScaleAdd => {
                let c = inputs[0].data();
                let (z, x, y) = (inputs[1].data(), inputs[2].data(), inputs[3].data());
                let dot = |v: &[f64]| v.iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
                let gc = vec![dot(z), dot(x), dot(y)];
                let scaled = |k: f64| g.iter().map(|gv| k * gv).collect::<Vec<_>>();
                vec![Some(gc), Some(scaled(c[0])), Some(scaled(c[1])), Some(scaled(c[2]))]
            }
            PrimitiveOp::GlobalAvgPool => {
                let x = inputs[0];
                let plane = x.shape()[2] * x.shape()[3];
                let inv = 1.0 / plane as f64;
                let mut gx = vec![0.0; x.numel()];
                for (chunk, gv) in gx.chunks_mut(plane).zip(g) {
                    chunk.fill(gv * inv);
                }
                vec![Some(gx)]
            }
            PrimitiveOp::L2Normalize => {
                let x = inputs[0];
                let d = *x.shape().last().unwrap();
                let mut gx = vec![0.0; x.numel()];
                for ((gr, xr), (yr, gor)) in
                    gx.chunks_mut(d).zip(x.data().chunks(d)).zip(output.data().chunks(d).zip(g.chunks(d)))
                {
                    let norm = xr.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm == 0.0 {
                        continue;
                    }
                    let yg: f64 = yr.iter().zip(gor).map(|(a, b)| a * b).sum();
                    for ((o, yv), gv) in gr.iter_mut().zip(yr).zip(gor) {
                        *o = (gv - yv * yg) / norm;
                    }
                }
                vec![Some(gx)]
            }
            PrimitiveOp::Sum => vec![Some(vec![g[0]; inputs[0].numel()])],
            PrimitiveOp::Mean => {
                let n = inputs[0].numel();
                vec![Some(vec![g[0] / n as f64; n])]
            }
        }
    }
}

fn map(x: &Tensor, f: impl Fn(f64) -> f64) -> Result<Tensor> {
    Tensor::new(x.shape().to_vec(), x.data().iter().copied().map(f).collect())
}

fn dims4(op: &'static str, x: &Tensor) -> Result<[usize; 4]> {
    match *x.shape() {
        [n, c, h, w] => Ok([n, c, h, w]),
        _ => Err(mismatch(op, format!("expected rank-4 input, got {:?}", x.shape()))),
    }
}

fn check_param(op: &'static str, what: &str, t: &Tensor, expected: &[usize]) -> Result<()> {
    if t.shape() != expected {
        return Err(mismatch(op, format!("{what} has shape {:?}, expected {:?}", t.shape(), expected)));
    }
    Ok(())
}

/// Range of output positions `o` with `0 <= o*stride + k - pad < len`.
fn valid_range(k: usize, pad: usize, stride: usize, len: usize, out_len: usize) -> (usize, usize) {
    let lo = if pad > k { (pad - k).div_ceil(stride) } else { 0 };
    // o*stride + k - pad <= len - 1  =>  o <= (len - 1 + pad - k) / stride
    let hi = if len + pad > k { ((len - 1 + pad - k) / stride + 1).min(out_len) } else { 0 };
    (lo, hi.max(lo))
}

fn conv2d_forward(spec: &ConvSpec, inputs: &[&Tensor]) -> Result<Tensor> {
    expect_arity("conv2d", inputs, 3)?;
    let (x, w, b) = (inputs[0], inputs[1], inputs[2]);
    let [n, c, h, wd] = dims4("conv2d", x)?;
    if c != spec.in_channels {
        return Err(mismatch("conv2d", format!("input has {c} channels, expected {}", spec.in_channels)));
    }
    check_param("conv2d", "weight", w, &spec.weight_shape())?;
    check_param("conv2d", "bias", b, &[spec.out_channels])?;
    let (oh, ow) = spec
        .output_hw(h, wd)
        .ok_or_else(|| mismatch("conv2d", format!("kernel larger than padded {h}x{wd} input")))?;
    let o_ch = spec.out_channels;
    let (kh, kw, s, p) = (spec.kernel_h, spec.kernel_w, spec.stride, spec.padding);
    let xd = x.data();
    let wdat = w.data();
    let mut out = vec![0.0; n * o_ch * oh * ow];
    for ni in 0..n {
        for o in 0..o_ch {
            let plane = &mut out[(ni * o_ch + o) * oh * ow..(ni * o_ch + o + 1) * oh * ow];
            plane.fill(b.data()[o]);
            for ci in 0..c {
                let xplane = &xd[(ni * c + ci) * h * wd..(ni * c + ci + 1) * h * wd];
                for ky in 0..kh {
                    let (oy0, oy1) = valid_range(ky, p, s, h, oh);
                    for kx in 0..kw {
                        let wv = wdat[((o * c + ci) * kh + ky) * kw + kx];
                        let (ox0, ox1) = valid_range(kx, p, s, wd, ow);
                        for oy in oy0..oy1 {
                            let iy = oy * s + ky - p;
                            let xrow = &xplane[iy * wd..(iy + 1) * wd];
                            let orow = &mut plane[oy * ow..(oy + 1) * ow];
                            for ox in ox0..ox1 {
                                orow[ox] += wv * xrow[ox * s + kx - p];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![n, o_ch, oh, ow], out)
}

fn conv2d_backward(spec: &ConvSpec, inputs: &[&Tensor], g: &[f64]) -> Vec<Option<Vec<f64>>> {
    let (x, w) = (inputs[0], inputs[1]);
    let [n, c, h, wd] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let (oh, ow) = spec.output_hw(h, wd).expect("validated in forward");
    let o_ch = spec.out_channels;
    let (kh, kw, s, p) = (spec.kernel_h, spec.kernel_w, spec.stride, spec.padding);
    let xd = x.data();
    let wdat = w.data();
    let mut gx = vec![0.0; x.numel()];
    let mut gw = vec![0.0; w.numel()];
    let mut gb = vec![0.0; o_ch];
    for ni in 0..n {
        for o in 0..o_ch {
            let gplane = &g[(ni * o_ch + o) * oh * ow..(ni * o_ch + o + 1) * oh * ow];
            gb[o] += gplane.iter().sum::<f64>();
            for ci in 0..c {
                let base = (ni * c + ci) * h * wd;
                for ky in 0..kh {
                    let (oy0, oy1) = valid_range(ky, p, s, h, oh);
                    for kx in 0..kw {
                        let widx = ((o * c + ci) * kh + ky) * kw + kx;
                        let wv = wdat[widx];
                        let (ox0, ox1) = valid_range(kx, p, s, wd, ow);
                        let mut acc = 0.0;
                        for oy in oy0..oy1 {
                            let iy = oy * s + ky - p;
                            let row = base + iy * wd;
                            let grow = &gplane[oy * ow..(oy + 1) * ow];
                            for ox in ox0..ox1 {
                                let ix = row + ox * s + kx - p;
                                acc += xd[ix] * grow[ox];
                                gx[ix] += wv * grow[ox];
                            }
                        }
                        gw[widx] += acc;
                    }
                }
            }
        }
    }
    vec![Some(gx), Some(gw), Some(gb)]
}

fn linear_forward(in_dim: usize, out_dim: usize, inputs: &[&Tensor]) -> Result<Tensor> {
    expect_arity("linear", inputs, 3)?;
    let (x, w, b) = (inputs[0], inputs[1], inputs[2]);
    let n = match *x.shape() {
        [n, d] if d == in_dim => n,
        _ => return Err(mismatch("linear", format!("input {:?}, expected [N, {in_dim}]", x.shape()))),
    };
    check_param("linear", "weight", w, &[out_dim, in_dim])?;
    check_param("linear", "bias", b, &[out_dim])?;
    let mut out = Vec::with_capacity(n * out_dim);
    for xr in x.data().chunks(in_dim) {
        for (wr, bv) in w.data().chunks(in_dim).zip(b.data()) {
            out.push(bv + xr.iter().zip(wr).map(|(a, b)| a * b).sum::<f64>());
        }
    }
    Tensor::new(vec![n, out_dim], out)
}

fn linear_backward(in_dim: usize, out_dim: usize, inputs: &[&Tensor], g: &[f64]) -> Vec<Option<Vec<f64>>> {
    let (x, w) = (inputs[0], inputs[1]);
    let mut gx = vec![0.0; x.numel()];
    let mut gw = vec![0.0; w.numel()];
    let mut gb = vec![0.0; out_dim];
    for ((xr, gxr), gr) in x.data().chunks(in_dim).zip(gx.chunks_mut(in_dim)).zip(g.chunks(out_dim)) {
        for (j, gv) in gr.iter().enumerate() {
            gb[j] += gv;
            let wr = &w.data()[j * in_dim..(j + 1) * in_dim];
            let gwr = &mut gw[j * in_dim..(j + 1) * in_dim];
            for i in 0..in_dim {
                gxr[i] += gv * wr[i];
                gwr[i] += gv * xr[i];
            }
        }
    }
    vec![Some(gx), Some(gw), Some(gb)]
}
