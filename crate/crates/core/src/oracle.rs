//! Reference encoder: histogram detection phases, then binarize.
//!
//! This is the semantics the ring is expected to reproduce. It shares no code
//! with [`crate::ring`] beyond the phase folding in [`crate::photon_sim`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::photon_sim::DetectionEvent;
use crate::spike_train::SpikeTrain;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseHistogram {
    pub counts: Vec<u64>,
    pub bin_width_ns: f64,
}

impl PhaseHistogram {
    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// `counts[k]` is the number of phases in `[k w, (k+1) w)`.
pub fn histogram(phases: &[f64], n_bins: usize, bin_width_ns: f64) -> Result<PhaseHistogram> {
    if n_bins == 0 || !(bin_width_ns.is_finite() && bin_width_ns > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "histogram needs bins > 0 and positive width, got {n_bins} x {bin_width_ns} ns"
        )));
    }
    let limit = n_bins as f64 * bin_width_ns;
    let mut counts = vec![0u64; n_bins];
    for (index, &phase) in phases.iter().enumerate() {
        if !(phase >= 0.0 && phase < limit) {
            return Err(Error::PhaseOutOfRange { index, phase, limit });
        }
        let k = ((phase / bin_width_ns).floor() as usize).min(n_bins - 1);
        counts[k] += 1;
    }
    Ok(PhaseHistogram {
        counts,
        bin_width_ns,
    })
}

/// Bit `k` is set iff bin `k` saw at least one photon.
pub fn binarize(h: &PhaseHistogram) -> SpikeTrain {
    SpikeTrain::from_bits(h.counts.iter().map(|&c| c > 0).collect())
}

/// Histogram of detection phases over `n_bins` bins spanning `period_ns`.
pub fn encode(detections: &[DetectionEvent], n_bins: usize, period_ns: f64) -> Result<SpikeTrain> {
    let phases: Vec<f64> = detections.iter().map(|d| d.phase).collect();
    histogram(&phases, n_bins, period_ns / n_bins as f64).map(|h| binarize(&h))
}
