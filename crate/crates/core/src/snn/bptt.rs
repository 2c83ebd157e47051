//! Backpropagation through time over the unrolled network.
//!
//! The same code computes gradients for the hard-threshold network (where
//! the spike derivative is replaced by the surrogate) and for a smoothed
//! network whose spike function is the antiderivative of the surrogate. In
//! the smoothed case the result is the exact gradient, which is what the
//! finite-difference checks verify.

use rayon::prelude::*;

use super::{sigmoid, surrogate_grad, Reset, SnnModel};
use crate::dataset::FlimSample;
use crate::error::{Error, Result};

/// Spike nonlinearity applied to `u - v_thre`.
pub trait SpikeFn: Send + Sync {
    fn value(x: f64, slope: f64) -> f64;

    #[inline]
    fn deriv(x: f64, slope: f64) -> f64 {
        surrogate_grad(x, slope)
    }
}

/// Hard threshold; its derivative is replaced by the surrogate.
pub struct Heaviside;

impl SpikeFn for Heaviside {
    #[inline]
    fn value(x: f64, _slope: f64) -> f64 {
        f64::from(u8::from(x >= 0.0))
    }
}

/// `x / (1 + slope |x|)`, whose derivative is exactly the surrogate.
pub struct SmoothedSpike;

impl SpikeFn for SmoothedSpike {
    #[inline]
    fn value(x: f64, slope: f64) -> f64 {
        x / (1.0 + slope * x.abs())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w_in: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: f64,
}

impl Gradients {
    pub fn zeros(n_hidden: usize) -> Self {
        Self {
            w_in: vec![0.0; n_hidden],
            w_out: vec![0.0; n_hidden],
            b_out: 0.0,
        }
    }

    fn add(&mut self, other: &Gradients) {
        for (a, b) in self.w_in.iter_mut().zip(&other.w_in) {
            *a += b;
        }
        for (a, b) in self.w_out.iter_mut().zip(&other.w_out) {
            *a += b;
        }
        self.b_out += other.b_out;
    }
}

struct Workspace {
    u: Vec<f64>,
    s: Vec<f64>,
    v: Vec<f64>,
}

impl Workspace {
    fn new(n_hidden: usize, n_steps: usize) -> Self {
        Self {
            u: vec![0.0; n_hidden * n_steps],
            s: vec![0.0; n_hidden * n_steps],
            v: vec![0.0; n_hidden],
        }
    }
}

/// Squared error of one sample, gradients scaled by `weight` added to `grads`.
fn accumulate<S: SpikeFn>(
    model: &SnnModel,
    x: &[bool],
    target: f64,
    weight: f64,
    slope: f64,
    detach_reset: bool,
    ws: &mut Workspace,
    grads: &mut Gradients,
) -> f64 {
    let h = model.arch.n_hidden;
    let lif = model.arch.lif;
    let beta_out = model.arch.beta_out;
    let thr = lif.v_thre;

    ws.v.fill(0.0);
    let mut o = 0.0;
    for (t, &bit) in x.iter().enumerate() {
        let xt = f64::from(u8::from(bit));
        let ut = &mut ws.u[t * h..(t + 1) * h];
        let st = &mut ws.s[t * h..(t + 1) * h];
        let mut drive = 0.0;
        for j in 0..h {
            let u = lif.beta * ws.v[j] + model.w_in[j] * xt;
            let s = S::value(u - thr, slope);
            ut[j] = u;
            st[j] = s;
            ws.v[j] = lif.after_reset(u, s);
            drive += model.w_out[j] * s;
        }
        o = beta_out * o + drive;
    }
    let p = sigmoid(o + model.b_out);
    let err = p - target;
    let loss = err * err;

    let dm = 2.0 * err * p * (1.0 - p) * weight;
    grads.b_out += dm;
    // dv holds dL/dv_j[t] while processing step t; nothing reads v[T-1].
    let dv = &mut ws.v;
    dv.fill(0.0);
    let mut g = dm;
    for t in (0..x.len()).rev() {
        let xt = f64::from(u8::from(x[t]));
        let ut = &ws.u[t * h..(t + 1) * h];
        let st = &ws.s[t * h..(t + 1) * h];
        for j in 0..h {
            let u = ut[j];
            let s = st[j];
            grads.w_out[j] += g * s;
            let (dv_du, dv_ds) = match lif.reset {
                Reset::ToZero => (1.0 - s, -u),
                Reset::Subtract => (1.0, -thr),
            };
            let dv_ds = if detach_reset { 0.0 } else { dv_ds };
            let ds = g * model.w_out[j] + dv[j] * dv_ds;
            let du = ds * S::deriv(u - thr, slope) + dv[j] * dv_du;
            grads.w_in[j] += du * xt;
            dv[j] = du * lif.beta;
        }
        g *= beta_out;
    }
    loss
}

/// Samples per work unit. Partial sums are reduced in chunk order, so the
/// result does not depend on the number of threads.
const CHUNK: usize = 16;

/// Mean normalized squared error over `batch` and its gradient.
pub fn loss_and_grad<S: SpikeFn>(
    model: &SnnModel,
    batch: &[&FlimSample],
    slope: f64,
    detach_reset: bool,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let h = model.arch.n_hidden;
    let steps = model.arch.n_steps;
    if let Some(s) = batch.iter().find(|s| s.spikes.len() != steps) {
        return Err(Error::Shape {
            what: "spike train length vs model steps",
            expected: steps,
            got: s.spikes.len(),
        });
    }
    let weight = 1.0 / batch.len() as f64;
    let partials: Vec<(f64, Gradients)> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut ws = Workspace::new(h, steps);
            let mut grads = Gradients::zeros(h);
            let mut loss = 0.0;
            for sample in chunk {
                let target = model.normalize(sample.lifetime_ns);
                loss += accumulate::<S>(
                    model,
                    sample.spikes.bits(),
                    target,
                    weight,
                    slope,
                    detach_reset,
                    &mut ws,
                    &mut grads,
                );
            }
            (loss, grads)
        })
        .collect();
    let mut total = Gradients::zeros(h);
    let mut loss = 0.0;
    for (l, g) in &partials {
        loss += l;
        total.add(g);
    }
    Ok((loss * weight, total))
}

/// Mean normalized squared error with the spike function `S`, no gradient.
pub fn loss_only<S: SpikeFn>(model: &SnnModel, batch: &[&FlimSample], slope: f64) -> Result<f64> {
    loss_and_grad::<S>(model, batch, slope, false).map(|(l, _)| l)
}
