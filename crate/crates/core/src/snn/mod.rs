//! Leaky-integrate-and-fire network for lifetime regression.
//!
//! One input node feeds `n_hidden` feedforward LIF neurons; their spikes are
//! summed by a non-spiking leaky integrator whose membrane after the last
//! step is squashed onto the lifetime range:
//!
//! ```text
//! u_j[t] = beta v_j[t-1] + w_in_j x[t]
//! s_j[t] = H(u_j[t] - v_thre)
//! v_j[t] = reset(u_j[t], s_j[t])
//! o[t]   = beta_out o[t-1] + sum_j w_out_j s_j[t]
//! y      = lo + (hi - lo) sigmoid(o[T-1] + b_out)
//! ```

mod bptt;
mod io;
mod train;

pub use bptt::{loss_and_grad, loss_only, Gradients, Heaviside, SmoothedSpike, SpikeFn};
pub use io::{read_model, write_model, MODEL_FORMAT, MODEL_FORMAT_VERSION};
pub use train::{train_bptt, EpochStats, Loss, TrainConfig, TrainOutcome};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::FlimSample;
use crate::error::{Error, Result};
use crate::seed;
use crate::spike_train::SpikeTrain;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reset {
    ToZero,
    Subtract,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifParams {
    /// Membrane decay per step.
    pub beta: f64,
    pub v_thre: f64,
    pub reset: Reset,
}

impl Default for LifParams {
    fn default() -> Self {
        Self {
            beta: 0.9,
            v_thre: 1.0,
            reset: Reset::ToZero,
        }
    }
}

impl LifParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "beta must lie in (0, 1), got {}",
                self.beta
            )));
        }
        if !(self.v_thre.is_finite() && self.v_thre > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "threshold must be positive, got {}",
                self.v_thre
            )));
        }
        Ok(())
    }

    /// Membrane after a step given the pre-reset value and the spike.
    #[inline]
    pub fn after_reset(&self, u: f64, s: f64) -> f64 {
        match self.reset {
            Reset::ToZero => u * (1.0 - s),
            Reset::Subtract => u - self.v_thre * s,
        }
    }
}

/// One LIF update over a layer.
pub fn lif_step(v: &[f64], input_current: &[f64], p: &LifParams) -> Result<(Vec<f64>, Vec<bool>)> {
    if v.len() != input_current.len() {
        return Err(Error::Shape {
            what: "membrane vs input current",
            expected: v.len(),
            got: input_current.len(),
        });
    }
    Ok(v.iter()
        .zip(input_current)
        .map(|(&v, &i)| {
            let u = p.beta * v + i;
            let spike = u >= p.v_thre;
            (p.after_reset(u, f64::from(u8::from(spike))), spike)
        })
        .unzip())
}

/// Fast-sigmoid surrogate derivative, `1 / (slope |x| + 1)^2` at `x = u - v_thre`.
#[inline]
pub fn surrogate_grad(u_minus_thre: f64, slope: f64) -> f64 {
    let d = slope * u_minus_thre.abs() + 1.0;
    1.0 / (d * d)
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Network shape and fixed dynamics, everything except learned weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Architecture {
    pub n_hidden: usize,
    pub n_steps: usize,
    pub lif: LifParams,
    /// Decay of the output integrator per step.
    pub beta_out: f64,
    pub lifetime_range: (f64, f64),
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            n_hidden: 512,
            n_steps: 128,
            lif: LifParams::default(),
            beta_out: 0.98,
            lifetime_range: (5.0, 20.0),
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        self.lif.validate()?;
        if self.n_hidden == 0 || self.n_steps == 0 {
            return Err(Error::InvalidConfig("network needs hidden units and steps".into()));
        }
        if !(self.beta_out > 0.0 && self.beta_out <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "beta_out must lie in (0, 1], got {}",
                self.beta_out
            )));
        }
        let (lo, hi) = self.lifetime_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidConfig(format!(
                "lifetime range [{lo}, {hi}] is empty"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnnModel {
    pub arch: Architecture,
    pub w_in: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: f64,
}

impl SnnModel {
    /// Weights uniform in `±1/sqrt(fan_in)`, zero output bias.
    pub fn init(arch: Architecture, seed_value: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = seed::rng(seed::derive(seed_value, "snn-init", 0));
        let out_scale = 1.0 / (arch.n_hidden as f64).sqrt();
        let w_in = (0..arch.n_hidden)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let w_out = (0..arch.n_hidden)
            .map(|_| rng.random_range(-out_scale..out_scale))
            .collect();
        Ok(Self {
            arch,
            w_in,
            w_out,
            b_out: 0.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        for (what, w) in [("w_in", &self.w_in), ("w_out", &self.w_out)] {
            if w.len() != self.arch.n_hidden {
                return Err(Error::Shape {
                    what,
                    expected: self.arch.n_hidden,
                    got: w.len(),
                });
            }
        }
        if !self
            .w_in
            .iter()
            .chain(&self.w_out)
            .chain(std::iter::once(&self.b_out))
            .all(|w| w.is_finite())
        {
            return Err(Error::InvalidConfig("model has non-finite weights".into()));
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        2 * self.arch.n_hidden + 1
    }

    fn check_input(&self, x: &SpikeTrain) -> Result<()> {
        if x.len() != self.arch.n_steps {
            return Err(Error::Shape {
                what: "spike train length vs model steps",
                expected: self.arch.n_steps,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Output membrane after the final step, bias included.
    pub fn output_membrane(&self, x: &SpikeTrain) -> Result<f64> {
        self.check_input(x)?;
        let lif = self.arch.lif;
        let mut v = vec![0.0; self.arch.n_hidden];
        let mut o = 0.0;
        for &bit in x.bits() {
            let xt = f64::from(u8::from(bit));
            let mut drive = 0.0;
            for ((v, &wi), &wo) in v.iter_mut().zip(&self.w_in).zip(&self.w_out) {
                let u = lif.beta * *v + wi * xt;
                let s = f64::from(u8::from(u >= lif.v_thre));
                *v = lif.after_reset(u, s);
                drive += wo * s;
            }
            o = self.arch.beta_out * o + drive;
        }
        Ok(o + self.b_out)
    }

    /// Maps an output membrane onto the lifetime range.
    pub fn decode(&self, membrane: f64) -> f64 {
        let (lo, hi) = self.arch.lifetime_range;
        lo + (hi - lo) * sigmoid(membrane)
    }

    /// Lifetime estimate in ns.
    pub fn forward(&self, x: &SpikeTrain) -> Result<f64> {
        Ok(self.decode(self.output_membrane(x)?))
    }

    /// Lifetime scaled to `[0, 1]` over the model's range.
    pub fn normalize(&self, lifetime_ns: f64) -> f64 {
        let (lo, hi) = self.arch.lifetime_range;
        (lifetime_ns - lo) / (hi - lo)
    }
}

/// Mean of `|pred - true| / true`, in percent.
pub fn mape(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<f64> {
    let mut n = 0usize;
    let mut sum = 0.0;
    for (index, (truth, pred)) in pairs.into_iter().enumerate() {
        if !(truth > 0.0) {
            return Err(Error::NonPositiveLifetime {
                index,
                lifetime: truth,
            });
        }
        sum += (pred - truth).abs() / truth;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Empty("test set"));
    }
    Ok(100.0 * sum / n as f64)
}

/// Predictions for every sample, in order.
pub fn predict(model: &SnnModel, samples: &[FlimSample]) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    samples.par_iter().map(|s| model.forward(&s.spikes)).collect()
}

pub fn evaluate_mape(model: &SnnModel, test_set: &[FlimSample]) -> Result<f64> {
    if let Some((index, s)) = test_set.iter().enumerate().find(|(_, s)| !(s.lifetime_ns > 0.0)) {
        return Err(Error::NonPositiveLifetime {
            index,
            lifetime: s.lifetime_ns,
        });
    }
    let preds = predict(model, test_set)?;
    mape(test_set.iter().map(|s| s.lifetime_ns).zip(preds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn resting_neuron_stays_silent() {
        let (v, s) = lif_step(&[0.0], &[0.0], &LifParams::default()).unwrap();
        assert_eq!(v, vec![0.0]);
        assert_eq!(s, vec![false]);
    }

    #[test]
    fn constant_drive_first_spike() {
        // 0.2 * sum_{k<n} 0.9^k >= 1  <=>  n >= ln(0.5) / ln(0.9) = 6.58
        let expected = ((1.0f64 - 1.0 * (1.0 - 0.9) / 0.2).ln() / 0.9f64.ln()).ceil() as usize;
        assert_eq!(expected, 7);
        let p = LifParams {
            beta: 0.9,
            v_thre: 1.0,
            reset: Reset::ToZero,
        };
        let mut v = vec![0.0];
        let mut first = None;
        for step in 1..=20 {
            let (next, s) = lif_step(&v, &[0.2], &p).unwrap();
            v = next;
            if s[0] {
                first = Some(step);
                break;
            }
        }
        assert_eq!(first, Some(expected));
        assert_eq!(v, vec![0.0]);
    }

    #[test]
    fn suprathreshold_input_fires_immediately() {
        let (v, s) = lif_step(&[0.0, 0.0], &[1.0, 3.0], &LifParams::default()).unwrap();
        assert_eq!(s, vec![true, true]);
        assert_eq!(v, vec![0.0, 0.0]);
    }

    #[test]
    fn subtract_reset_keeps_residual() {
        let p = LifParams {
            reset: Reset::Subtract,
            ..LifParams::default()
        };
        let (v, s) = lif_step(&[0.0], &[1.5], &p).unwrap();
        assert!(s[0]);
        assert_eq!(v, vec![0.5]);
    }

    #[test]
    fn lif_step_shape_mismatch() {
        assert!(lif_step(&[0.0, 0.0], &[1.0], &LifParams::default()).is_err());
    }

    #[test]
    fn surrogate_examples() {
        assert_eq!(surrogate_grad(0.0, 25.0), 1.0);
        assert!((surrogate_grad(0.04, 25.0) - 0.25).abs() < 1e-15);
        assert!((surrogate_grad(-0.04, 25.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn zero_input_predicts_midpoint() {
        let mut m = SnnModel::init(Architecture::default(), 3).unwrap();
        m.b_out = 0.0;
        let y = m.forward(&SpikeTrain::zeros(128)).unwrap();
        assert_eq!(y, 12.5);
    }

    #[test]
    fn forward_is_deterministic_and_shape_checked() {
        let m = SnnModel::init(Architecture::default(), 9).unwrap();
        let mut bits = vec![false; 128];
        for k in (0..40).step_by(3) {
            bits[k] = true;
        }
        let x = SpikeTrain::from_bits(bits);
        assert_eq!(m.forward(&x).unwrap().to_bits(), m.forward(&x).unwrap().to_bits());
        assert!(m.forward(&SpikeTrain::zeros(127)).is_err());
        assert!(m.forward(&SpikeTrain::zeros(129)).is_err());
    }

    #[test]
    fn model_rejects_wrong_widths() {
        let mut m = SnnModel::init(Architecture::default(), 1).unwrap();
        m.w_out.pop();
        assert!(m.validate().is_err());
    }

    #[test]
    fn mape_definition() {
        assert_eq!(mape([(10.0, 11.0)]).unwrap(), 10.0);
        assert_eq!(mape([(5.0, 5.0), (7.0, 7.0)]).unwrap(), 0.0);
        assert!(matches!(mape([(0.0, 1.0)]), Err(Error::NonPositiveLifetime { .. })));
        assert!(mape(Vec::new()).is_err());
    }

    proptest! {
        #[test]
        fn surrogate_is_even(d in -10.0f64..10.0, slope in 0.1f64..100.0) {
            prop_assert_eq!(surrogate_grad(d, slope), surrogate_grad(-d, slope));
            prop_assert!(surrogate_grad(d, slope) <= 1.0);
        }

        #[test]
        fn membrane_stays_bounded(
            beta in 0.01f64..0.99,
            v_thre in 0.1f64..5.0,
            m in 0.0f64..10.0,
            fractions in proptest::collection::vec(-1.0f64..=1.0, 1..300),
        ) {
            let p = LifParams { beta, v_thre, reset: Reset::ToZero };
            let lo = -m / (1.0 - beta);
            let hi = v_thre + m;
            let mut v = vec![0.0];
            for f in fractions {
                let (next, _) = lif_step(&v, &[f * m], &p).unwrap();
                v = next;
                prop_assert!(v[0] >= lo - 1e-9 && v[0] <= hi + 1e-9);
            }
        }
    }
}
