//! Laser-synchronous photon arrivals and a first-order SPAD detector model.
//!
//! Times are `f64` nanoseconds measured from the start of the exposure. The
//! exposure is `n_periods` laser repetition periods long and every photon is
//! folded onto its phase within the period it arrived in.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaserConfig {
    /// Repetition period in ns.
    pub period_ns: f64,
    pub n_periods: u64,
}

impl LaserConfig {
    pub fn new(period_ns: f64, n_periods: u64) -> Result<Self> {
        let cfg = Self {
            period_ns,
            n_periods,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period_ns.is_finite() && self.period_ns > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "laser period must be positive, got {} ns",
                self.period_ns
            )));
        }
        if self.n_periods == 0 {
            return Err(Error::InvalidConfig("n_periods must be at least 1".into()));
        }
        Ok(())
    }

    /// Laser repetition frequency in Hz.
    pub fn frequency_hz(&self) -> f64 {
        1e9 / self.period_ns
    }

    pub fn exposure_ns(&self) -> f64 {
        self.n_periods as f64 * self.period_ns
    }

    pub fn period_start(&self, p: u64) -> f64 {
        p as f64 * self.period_ns
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecaySource {
    pub lifetime_ns: f64,
    /// Probability that a photon is uniform-in-phase background.
    pub background_fraction: f64,
    pub mean_photons_per_period: f64,
}

impl DecaySource {
    pub fn validate(&self) -> Result<()> {
        if !(self.lifetime_ns.is_finite() && self.lifetime_ns > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "lifetime must be positive, got {} ns",
                self.lifetime_ns
            )));
        }
        if !(0.0..=1.0).contains(&self.background_fraction) {
            return Err(Error::InvalidConfig(format!(
                "background fraction must lie in [0, 1], got {}",
                self.background_fraction
            )));
        }
        if !(self.mean_photons_per_period.is_finite() && self.mean_photons_per_period >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "mean photons per period must be non-negative, got {}",
                self.mean_photons_per_period
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhotonOrigin {
    Signal,
    Background,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonEvent {
    pub t_abs: f64,
    pub origin: PhotonOrigin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpadModel {
    /// Photon detection probability.
    pub pdp: f64,
    pub dead_time_ns: f64,
}

impl SpadModel {
    /// Every photon detected, no dead time.
    pub const IDEAL: SpadModel = SpadModel {
        pdp: 1.0,
        dead_time_ns: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.pdp) {
            return Err(Error::InvalidConfig(format!(
                "pdp must lie in [0, 1], got {}",
                self.pdp
            )));
        }
        if !(self.dead_time_ns.is_finite() && self.dead_time_ns >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "dead time must be non-negative, got {} ns",
                self.dead_time_ns
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub t_abs: f64,
    /// `t_abs` folded into `[0, period)`.
    pub phase: f64,
}

impl DetectionEvent {
    pub fn at(t_abs: f64, period_ns: f64) -> Self {
        Self {
            t_abs,
            phase: fold(t_abs, period_ns).1,
        }
    }
}

/// Splits an absolute time into `(period index, phase)` with
/// `0 <= phase < period_ns`. Every module folds time through this function so
/// phases agree bit for bit.
pub fn fold(t_abs: f64, period_ns: f64) -> (u64, f64) {
    let mut p = (t_abs / period_ns).floor();
    let mut phase = t_abs - p * period_ns;
    if phase >= period_ns {
        p += 1.0;
        phase -= period_ns;
    } else if phase < 0.0 {
        p -= 1.0;
        phase += period_ns;
    }
    (p.max(0.0) as u64, phase.max(0.0))
}

/// Absolute time of `phase` within period `p`, kept strictly inside the
/// period when rounding would push it onto the next boundary.
pub fn place(p: u64, phase: f64, period_ns: f64) -> f64 {
    let start = p as f64 * period_ns;
    let end = (p + 1) as f64 * period_ns;
    let t = start + phase;
    if t >= end {
        f64::from_bits(end.to_bits() - 1)
    } else {
        t
    }
}

/// Largest float strictly below `limit` when `x` has rounded up onto it.
fn below(x: f64, limit: f64) -> f64 {
    if x >= limit {
        f64::from_bits(limit.to_bits() - 1)
    } else {
        x
    }
}

/// Exponential with scale `lifetime_ns`, conditioned on falling in
/// `[0, period_ns)`. Inverse-CDF sampling uses exactly one uniform per photon.
pub fn sample_truncated_exp<R: Rng + ?Sized>(rng: &mut R, lifetime_ns: f64, period_ns: f64) -> f64 {
    let u: f64 = rng.random();
    let mass = -libm::expm1(-period_ns / lifetime_ns);
    let x = -lifetime_ns * libm::log1p(-u * mass);
    below(x.max(0.0), period_ns)
}

/// Draws the phase of one photon and its origin.
pub fn sample_phase<R: Rng + ?Sized>(
    rng: &mut R,
    src: &DecaySource,
    period_ns: f64,
) -> (f64, PhotonOrigin) {
    let is_background = rng.random::<f64>() < src.background_fraction;
    if is_background {
        let u: f64 = rng.random();
        (below(u * period_ns, period_ns), PhotonOrigin::Background)
    } else {
        (
            sample_truncated_exp(rng, src.lifetime_ns, period_ns),
            PhotonOrigin::Signal,
        )
    }
}

/// Mean of an exponential with scale `tau` truncated to `[0, period)`.
pub fn truncated_exp_mean(tau: f64, period: f64) -> f64 {
    let e = (-period / tau).exp();
    tau - period * e / (1.0 - e)
}

/// Poisson photon counts per period, each photon background with probability
/// `background_fraction` (uniform phase) or signal (truncated-exponential
/// phase). Output is sorted by time.
pub fn gen_arrivals(laser: &LaserConfig, src: &DecaySource, seed: u64) -> Result<Vec<PhotonEvent>> {
    laser.validate()?;
    src.validate()?;
    if src.mean_photons_per_period == 0.0 {
        return Ok(Vec::new());
    }
    let poisson = Poisson::new(src.mean_photons_per_period)
        .map_err(|e| Error::InvalidConfig(format!("poisson mean: {e}")))?;
    let mut rng = seed::rng(seed);
    let mut out = Vec::new();
    for p in 0..laser.n_periods {
        let n = poisson.sample(&mut rng) as usize;
        let start = out.len();
        for _ in 0..n {
            let (phase, origin) = sample_phase(&mut rng, src, laser.period_ns);
            out.push(PhotonEvent {
                t_abs: place(p, phase, laser.period_ns),
                origin,
            });
        }
        out[start..].sort_by(|a, b| a.t_abs.total_cmp(&b.t_abs));
    }
    Ok(out)
}

/// Arrivals at `0, period_src, 2 period_src, ...` strictly before `duration_ns`.
pub fn gen_periodic_arrivals(
    period_src_ns: f64,
    laser: &LaserConfig,
    duration_ns: f64,
) -> Result<Vec<PhotonEvent>> {
    laser.validate()?;
    if !(period_src_ns.is_finite() && period_src_ns > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "source period must be positive, got {period_src_ns} ns"
        )));
    }
    if !(duration_ns > 0.0 && duration_ns <= laser.exposure_ns()) {
        return Err(Error::InvalidConfig(format!(
            "duration {duration_ns} ns must lie in (0, {}] ns",
            laser.exposure_ns()
        )));
    }
    Ok((0u64..)
        .map(|i| i as f64 * period_src_ns)
        .take_while(|&t| t < duration_ns)
        .map(|t_abs| PhotonEvent {
            t_abs,
            origin: PhotonOrigin::Signal,
        })
        .collect())
}

/// Applies detection probability thinning and a non-paralyzable dead time.
///
/// One uniform is drawn per input event in arrival order whether or not the
/// event survives, so for a fixed seed the kept set only grows with `pdp`.
/// Two detections never share a timestamp.
pub fn detect(
    events: &[PhotonEvent],
    laser: &LaserConfig,
    spad: &SpadModel,
    seed: u64,
) -> Result<Vec<DetectionEvent>> {
    laser.validate()?;
    spad.validate()?;
    if let Some(i) = events.windows(2).position(|w| w[1].t_abs < w[0].t_abs) {
        return Err(Error::Unsorted {
            index: i + 1,
            t_abs: events[i + 1].t_abs,
        });
    }
    let mut rng = seed::rng(seed);
    let mut out: Vec<DetectionEvent> = Vec::new();
    for ev in events {
        let u: f64 = rng.random();
        if u >= spad.pdp {
            continue;
        }
        if let Some(last) = out.last() {
            let gap = ev.t_abs - last.t_abs;
            if gap <= 0.0 || gap < spad.dead_time_ns {
                continue;
            }
        }
        out.push(DetectionEvent::at(ev.t_abs, laser.period_ns));
    }
    Ok(out)
}
