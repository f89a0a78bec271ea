//! A compact residual SR network with hand-written reverse-mode gradients.
//!
//! The prediction is `bicubic_up(lr) + conv3(relu(conv2(relu(conv1(bicubic_up(lr))))))`:
//! three 3x3 stages of width `channels -> 16 -> 16 -> channels`. The net is
//! generic over the sample type so the same code runs in 32- and 64-bit;
//! parameter-gradient reductions always accumulate in f64.

mod adam;
mod checkpoint;
mod conv;
pub mod gradcheck;

use std::fmt::Debug;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

pub use adam::OptimState;
pub use checkpoint::{load_checkpoint, param_checksum, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use crate::degrade::{resize, Direction};
use crate::{seed, Error, ImagePlane, Result};
use conv::{Geom, LayerShape};

pub const HIDDEN: usize = 16;

/// Floating-point sample type of the network.
pub trait Real: num_traits::Float + Send + Sync + Default + Debug + 'static {
    fn lit(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn lit(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn lit(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SRNet<T: Real> {
    pub scale: usize,
    pub channels: usize,
    pub init_seed: u64,
    params: Vec<T>,
}

/// Exact number of weights and biases for a given channel count.
pub fn param_count(channels: usize) -> usize {
    layer_shapes(channels).iter().map(LayerShape::len).sum()
}

fn layer_shapes(channels: usize) -> [LayerShape; 3] {
    let l1 = LayerShape { cin: channels, cout: HIDDEN, offset: 0 };
    let l2 = LayerShape { cin: HIDDEN, cout: HIDDEN, offset: l1.len() };
    let l3 = LayerShape { cin: HIDDEN, cout: channels, offset: l1.len() + l2.len() };
    [l1, l2, l3]
}

/// Per-sample forward state kept for the backward pass.
struct Trace<T> {
    geom: Geom,
    up: Vec<T>,
    z1: Vec<T>,
    a1: Vec<T>,
    z2: Vec<T>,
    a2: Vec<T>,
    z3: Vec<T>,
}

impl<T: Real> SRNet<T> {
    /// He-normal initialization; biases start at zero and the output stage is
    /// scaled down by 10 so the untrained net starts near plain bicubic.
    pub fn new(channels: usize, scale: usize, init_seed: u64) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!("unsupported channel count {channels}")));
        }
        if scale == 0 {
            return Err(Error::invalid("scale must be >= 1"));
        }
        let mut params = vec![T::zero(); param_count(channels)];
        let mut rng = seed::rng(seed::derive(init_seed, &[seed::stream::INIT]));
        for (k, layer) in layer_shapes(channels).iter().enumerate() {
            let gain = if k == 2 { 0.1 } else { 1.0 };
            let std = gain * (2.0 / (layer.cin * 9) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive std");
            for p in &mut params[layer.offset..layer.offset + layer.weight_len()] {
                *p = T::lit(normal.sample(&mut rng));
            }
        }
        Ok(SRNet { scale, channels, init_seed, params })
    }

    /// All-zero network: the output is exactly the bicubic upsample.
    pub fn zeros(channels: usize, scale: usize) -> Result<Self> {
        let mut net = Self::new(channels, scale, 0)?;
        net.params.iter_mut().for_each(|p| *p = T::zero());
        Ok(net)
    }

    pub fn from_params(channels: usize, scale: usize, init_seed: u64, params: Vec<T>) -> Result<Self> {
        if params.len() != param_count(channels) {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                param_count(channels),
                params.len()
            )));
        }
        Ok(SRNet { scale, channels, init_seed, params })
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Same parameters in another precision.
    pub fn cast<U: Real>(&self) -> SRNet<U> {
        SRNet {
            scale: self.scale,
            channels: self.channels,
            init_seed: self.init_seed,
            params: self.params.iter().map(|p| U::lit(p.as_f64())).collect(),
        }
    }

    /// Same parameters, different upsampling factor. The conv stack works on
    /// the upsampled grid, so it is independent of the scale.
    pub fn with_scale(&self, scale: usize) -> Self {
        SRNet { scale, ..self.clone() }
    }

    fn check_input(&self, lr: &ImagePlane) -> Result<()> {
        if lr.channels() != self.channels {
            return Err(Error::invalid(format!(
                "network expects {} channels, got {}",
                self.channels,
                lr.channels()
            )));
        }
        if lr.height() < 8 || lr.width() < 8 {
            return Err(Error::invalid(format!(
                "LR input must be at least 8x8, got {}x{}",
                lr.height(),
                lr.width()
            )));
        }
        Ok(())
    }

    fn trace(&self, lr: &ImagePlane) -> Result<Trace<T>> {
        self.check_input(lr)?;
        let upsampled = resize(lr, self.scale, Direction::Up)?;
        let geom = Geom { h: upsampled.height(), w: upsampled.width() };
        let p = geom.plane();
        let mut up = vec![T::zero(); self.channels * p];
        for c in 0..self.channels {
            let src = upsampled.channel(c);
            for y in 0..geom.h {
                for x in 0..geom.w {
                    up[c * p + geom.index(y, x)] = T::lit(src[y * geom.w + x]);
                }
            }
        }
        let relu = |z: &[T]| z.iter().map(|&v| v.max(T::zero())).collect::<Vec<T>>();
        let [l1, l2, l3] = layer_shapes(self.channels);
        let z1 = conv::forward(&l1, &self.params, geom, &up);
        let a1 = relu(&z1);
        let z2 = conv::forward(&l2, &self.params, geom, &a1);
        let a2 = relu(&z2);
        let z3 = conv::forward(&l3, &self.params, geom, &a2);
        Ok(Trace { geom, up, z1, a1, z2, a2, z3 })
    }

    /// Unclamped prediction in the padded layout.
    fn raw_prediction(tr: &Trace<T>) -> Vec<T> {
        tr.up.iter().zip(&tr.z3).map(|(&u, &r)| u + r).collect()
    }

    /// Evaluation forward pass; the output is clamped to `[0, 1]`.
    pub fn forward(&self, lr: &ImagePlane) -> Result<ImagePlane> {
        let tr = self.trace(lr)?;
        let pred = Self::raw_prediction(&tr);
        let g = tr.geom;
        let mut data = Vec::with_capacity(self.channels * g.h * g.w);
        for c in 0..self.channels {
            for y in 0..g.h {
                for x in 0..g.w {
                    data.push(pred[c * g.plane() + g.index(y, x)].as_f64());
                }
            }
        }
        Ok(ImagePlane::from_raw_clamped(g.h, g.w, self.channels, data))
    }

    fn check_target(&self, tr: &Trace<T>, hr: &ImagePlane) -> Result<()> {
        if (hr.height(), hr.width(), hr.channels()) != (tr.geom.h, tr.geom.w, self.channels) {
            return Err(Error::invalid(format!(
                "HR {:?} does not match prediction {}x{}x{}",
                hr.shape(),
                tr.geom.h,
                tr.geom.w,
                self.channels
            )));
        }
        Ok(())
    }

    /// Sum of absolute errors and the un-normalized gradient for one sample.
    fn sample_grad(&self, hr: &ImagePlane, lr: &ImagePlane) -> Result<(f64, usize, Vec<f64>)> {
        let tr = self.trace(lr)?;
        self.check_target(&tr, hr)?;
        let g = tr.geom;
        let p = g.plane();
        let pred = Self::raw_prediction(&tr);
        let mut abs_sum = 0.0f64;
        let mut d3 = vec![T::zero(); self.channels * p];
        for c in 0..self.channels {
            let target = hr.channel(c);
            for y in 0..g.h {
                for x in 0..g.w {
                    let k = c * p + g.index(y, x);
                    let diff = pred[k].as_f64() - target[y * g.w + x];
                    abs_sum += diff.abs();
                    d3[k] = if diff > 0.0 {
                        T::one()
                    } else if diff < 0.0 {
                        -T::one()
                    } else {
                        T::zero()
                    };
                }
            }
        }
        let [l1, l2, l3] = layer_shapes(self.channels);
        let mut grad = vec![0.0f64; self.params.len()];
        let mask = |d: Vec<T>, z: &[T]| -> Vec<T> {
            d.into_iter().zip(z).map(|(d, &z)| if z > T::zero() { d } else { T::zero() }).collect()
        };
        let da2 = conv::backward(&l3, &self.params, g, &tr.a2, &d3, &mut grad, true).expect("input grad");
        let d2 = mask(da2, &tr.z2);
        let da1 = conv::backward(&l2, &self.params, g, &tr.a1, &d2, &mut grad, true).expect("input grad");
        let d1 = mask(da1, &tr.z1);
        conv::backward(&l1, &self.params, g, &tr.up, &d1, &mut grad, false);
        Ok((abs_sum, self.channels * g.h * g.w, grad))
    }

    /// Mean absolute error over all samples and pixels of the unclamped
    /// prediction, with its gradient. Per-sample work runs in parallel and is
    /// reduced in batch order.
    pub fn loss_and_grad(&self, batch: &[(&ImagePlane, &ImagePlane)]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let parts: Vec<(f64, usize, Vec<f64>)> = batch
            .par_iter()
            .map(|(hr, lr)| self.sample_grad(hr, lr))
            .collect::<Result<_>>()?;
        let count: usize = parts.iter().map(|p| p.1).sum();
        let mut grad = vec![0.0f64; self.params.len()];
        let mut abs_sum = 0.0;
        for (s, _, g) in &parts {
            abs_sum += s;
            for (acc, v) in grad.iter_mut().zip(g) {
                *acc += v;
            }
        }
        let inv = 1.0 / count as f64;
        grad.iter_mut().for_each(|v| *v *= inv);
        Ok((abs_sum * inv, grad))
    }

    /// Unclamped `prediction - target` for every sample and pixel, forward only.
    pub fn residuals(&self, batch: &[(&ImagePlane, &ImagePlane)]) -> Result<Vec<f64>> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let mut out = Vec::new();
        for (hr, lr) in batch {
            let tr = self.trace(lr)?;
            self.check_target(&tr, hr)?;
            let pred = Self::raw_prediction(&tr);
            let g = tr.geom;
            for c in 0..self.channels {
                let target = hr.channel(c);
                for y in 0..g.h {
                    for x in 0..g.w {
                        out.push(pred[c * g.plane() + g.index(y, x)].as_f64() - target[y * g.w + x]);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Forward-only L1 loss.
    pub fn loss(&self, batch: &[(&ImagePlane, &ImagePlane)]) -> Result<f64> {
        let r = self.residuals(batch)?;
        Ok(r.iter().map(|v| v.abs()).sum::<f64>() / r.len() as f64)
    }

    /// One Adam update.
    pub fn step(&mut self, opt: &mut OptimState, grad: &[f64]) -> Result<()> {
        opt.update(&mut self.params, grad)
    }
}
