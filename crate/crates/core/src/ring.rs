//! Cycle-level model of the DFF ring spike encoder.
//!
//! The ring is an `n_stages` circular shift register. On every ring clock
//! tick each stage takes the value of its predecessor, and stage 0 takes
//! `stage[n-1] OR spad`, where `spad` is high when a detection arrived
//! during that tick's clock interval and injection is still enabled.
//!
//! The ring clock is gated: within each laser period at most `n_stages`
//! ticks are delivered, starting at the period boundary. Tick `k` owns the
//! interval `[k dt, (k+1) dt)` of local phase, the last delivered tick also
//! owns any remainder up to the period end when the clock is too slow, and
//! detections falling after the final tick of a gated (fast) period are lost.
//!
//! Readout taps the OR-gate output while the ring is shifted by the readout
//! clock, so serial bit `i` is the content of stage `n-1-i`. With this order
//! the readout is a pure rotation of the phase-bin pattern; see
//! [`phase_offset`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::photon_sim::{fold, DetectionEvent, LaserConfig};
use crate::spike_train::SpikeTrain;

/// Photon-count threshold beyond which injection is halted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Stopper {
    Disabled,
    At128,
    At256,
}

impl Stopper {
    pub fn threshold(self) -> Option<u32> {
        match self {
            Stopper::Disabled => None,
            Stopper::At128 => Some(128),
            Stopper::At256 => Some(256),
        }
    }
}

impl fmt::Display for Stopper {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.threshold() {
            Some(t) => write!(f, "{t}"),
            None => f.write_str("off"),
        }
    }
}

impl FromStr for Stopper {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" | "disabled" => Ok(Stopper::Disabled),
            "128" => Ok(Stopper::At128),
            "256" => Ok(Stopper::At256),
            other => Err(Error::InvalidConfig(format!(
                "stopper must be one of 128, 256, off; got {other:?}"
            ))),
        }
    }
}

impl TryFrom<String> for Stopper {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Stopper> for String {
    fn from(s: Stopper) -> String {
        s.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub n_stages: usize,
    pub ring_clock_hz: f64,
    pub laser: LaserConfig,
    pub stopper: Stopper,
    pub counter_bits: u32,
}

/// Relative tolerance under which a clock counts as locked to `n_stages`
/// ticks per laser period.
const LOCK_TOLERANCE: f64 = 1e-12;

impl EncoderConfig {
    /// Ring clock locked at exactly `n_stages` ticks per laser period.
    pub fn ideal(n_stages: usize, laser: LaserConfig) -> Self {
        Self {
            n_stages,
            ring_clock_hz: n_stages as f64 * laser.frequency_hz(),
            laser,
            stopper: Stopper::Disabled,
            counter_bits: 12,
        }
    }

    pub fn with_clock(mut self, ring_clock_hz: f64) -> Self {
        self.ring_clock_hz = ring_clock_hz;
        self
    }

    pub fn with_stopper(mut self, stopper: Stopper) -> Self {
        self.stopper = stopper;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.laser.validate()?;
        if self.n_stages < 2 {
            return Err(Error::InvalidConfig(format!(
                "ring needs at least 2 stages, got {}",
                self.n_stages
            )));
        }
        if !(self.ring_clock_hz.is_finite() && self.ring_clock_hz > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "ring clock must be positive, got {} Hz",
                self.ring_clock_hz
            )));
        }
        if !(1..=32).contains(&self.counter_bits) {
            return Err(Error::InvalidConfig(format!(
                "counter width must be 1..=32 bits, got {}",
                self.counter_bits
            )));
        }
        if let Some(t) = self.stopper.threshold() {
            if u64::from(t) >= 1u64 << self.counter_bits {
                return Err(Error::InvalidConfig(format!(
                    "stopper threshold {t} does not fit a {}-bit counter",
                    self.counter_bits
                )));
            }
        }
        Ok(())
    }

    pub fn ideal_clock_hz(&self) -> f64 {
        self.n_stages as f64 * self.laser.frequency_hz()
    }

    pub fn is_locked(&self) -> bool {
        let ideal = self.ideal_clock_hz();
        (self.ring_clock_hz - ideal).abs() <= LOCK_TOLERANCE * ideal
    }

    /// Ring clock period in ns. A locked clock uses `period / n_stages`
    /// directly so tick intervals coincide with phase bins bit for bit.
    pub fn tick_period_ns(&self) -> f64 {
        if self.is_locked() {
            self.laser.period_ns / self.n_stages as f64
        } else {
            1e9 / self.ring_clock_hz
        }
    }

    /// Clock cycles that start inside one laser period, before gating.
    fn free_running_ticks(&self) -> usize {
        let cycles = self.laser.period_ns / self.tick_period_ns();
        let r = cycles.round();
        if (cycles - r).abs() <= 1e-9 * r.max(1.0) {
            r as usize
        } else {
            cycles.ceil() as usize
        }
    }

    /// Ticks delivered per laser period after gating.
    pub fn ticks_per_period(&self) -> usize {
        self.free_running_ticks().min(self.n_stages)
    }

    /// True when the clock is too slow to deliver `n_stages` ticks per period.
    pub fn is_deficient(&self) -> bool {
        self.free_running_ticks() < self.n_stages
    }

    /// Time per period during which the gate holds the clock off.
    pub fn suppressed_ns(&self) -> f64 {
        if self.is_deficient() {
            return 0.0;
        }
        let busy = self.n_stages as f64 * self.tick_period_ns();
        let idle = self.laser.period_ns - busy;
        if idle <= 1e-9 * self.laser.period_ns {
            0.0
        } else {
            idle
        }
    }

    /// Local phase interval `[0, covered)` in which detections reach a tick.
    fn covered_ns(&self) -> f64 {
        self.laser.period_ns - self.suppressed_ns()
    }

    /// Tick index owning `phase`, or `None` when it falls in the gated gap.
    fn tick_for_phase(&self, phase: f64) -> Option<usize> {
        if phase >= self.covered_ns() {
            return None;
        }
        let k = (phase / self.tick_period_ns()).floor() as usize;
        Some(k.min(self.ticks_per_period() - 1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickSchedule {
    pub tick_times: Vec<f64>,
    pub per_period_counts: Vec<usize>,
    pub deficient: Vec<bool>,
    pub suppressed_ns: Vec<f64>,
}

/// Gated ring clock over the whole exposure.
pub fn gated_clock(cfg: &EncoderConfig) -> Result<TickSchedule> {
    cfg.validate()?;
    let per = cfg.ticks_per_period();
    let dt = cfg.tick_period_ns();
    let n = cfg.laser.n_periods as usize;
    let mut tick_times = Vec::with_capacity(n * per);
    for p in 0..cfg.laser.n_periods {
        let start = cfg.laser.period_start(p);
        tick_times.extend((0..per).map(|k| start + k as f64 * dt));
    }
    Ok(TickSchedule {
        tick_times,
        per_period_counts: vec![per; n],
        deficient: vec![cfg.is_deficient(); n],
        suppressed_ns: vec![cfg.suppressed_ns(); n],
    })
}

/// Ring contents plus the photon counter and stopper latch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingState {
    /// Physical storage; stage `i` lives at `cells[(head + i) % n]`.
    cells: Vec<bool>,
    head: usize,
    ones: usize,
    ticks_elapsed: u64,
    photon_count: u32,
    counter_bits: u32,
    accepted: u64,
    injection_enabled: bool,
}

impl RingState {
    pub fn new(n_stages: usize, counter_bits: u32) -> Self {
        Self {
            cells: vec![false; n_stages],
            head: 0,
            ones: 0,
            ticks_elapsed: 0,
            photon_count: 0,
            counter_bits,
            accepted: 0,
            injection_enabled: true,
        }
    }

    /// Ring preloaded with `bits` in stage order.
    pub fn with_bits(bits: Vec<bool>) -> Self {
        let ones = bits.iter().filter(|&&b| b).count();
        Self {
            cells: bits,
            ones,
            ..Self::new(0, 12)
        }
    }

    pub fn n_stages(&self) -> usize {
        self.cells.len()
    }

    pub fn stage(&self, i: usize) -> bool {
        self.cells[(self.head + i) % self.cells.len()]
    }

    /// Contents in stage order, stage 0 first.
    pub fn bits(&self) -> Vec<bool> {
        (0..self.n_stages()).map(|i| self.stage(i)).collect()
    }

    pub fn set_bits(&self) -> usize {
        self.ones
    }

    pub fn ticks_elapsed(&self) -> u64 {
        self.ticks_elapsed
    }

    /// Counter value, modulo `2^counter_bits`.
    pub fn photon_count(&self) -> u32 {
        self.photon_count
    }

    /// Detections let through to the OR gate over the exposure.
    pub fn injections_accepted(&self) -> u64 {
        self.accepted
    }

    pub fn injection_enabled(&self) -> bool {
        self.injection_enabled
    }

    /// One ring clock edge.
    pub fn step(&mut self, inject: bool) {
        let bit = inject && self.injection_enabled;
        self.shift_in(bit);
    }

    fn shift_in(&mut self, inject: bool) {
        let n = self.cells.len();
        self.head = (self.head + n - 1) % n;
        // cells[head] now holds the bit that left stage n-1 and sits at stage 0.
        if inject && !self.cells[self.head] {
            self.cells[self.head] = true;
            self.ones += 1;
        }
        self.ticks_elapsed += 1;
    }

    /// Counts one SPAD pulse. Returns whether it reaches the OR gate; trips
    /// the stopper once the count rises above the threshold.
    fn register_detection(&mut self, stopper: Stopper) -> bool {
        if !self.injection_enabled {
            return false;
        }
        let modulus = 1u64 << self.counter_bits;
        self.photon_count = ((u64::from(self.photon_count) + 1) % modulus) as u32;
        self.accepted += 1;
        if let Some(t) = stopper.threshold() {
            if self.photon_count > t {
                self.injection_enabled = false;
            }
        }
        true
    }
}

/// Snapshot passed to [`encode_traced`] after every tick.
#[derive(Debug, Clone, Copy)]
pub struct TickEvent<'a> {
    pub tick: u64,
    pub time_ns: f64,
    pub period: u64,
    pub injected: bool,
    pub state: &'a RingState,
}

/// Runs the gated ring over the exposure and returns the final state.
pub fn encode(detections: &[DetectionEvent], cfg: &EncoderConfig) -> Result<RingState> {
    encode_traced(detections, cfg, |_| {})
}

/// [`encode`] with a callback after every tick.
pub fn encode_traced<F>(detections: &[DetectionEvent], cfg: &EncoderConfig, mut observe: F) -> Result<RingState>
where
    F: FnMut(TickEvent<'_>),
{
    cfg.validate()?;
    let window = cfg.laser.exposure_ns();
    for (index, d) in detections.iter().enumerate() {
        if !(d.t_abs >= 0.0 && d.t_abs < window) {
            return Err(Error::OutsideExposure {
                index,
                t_abs: d.t_abs,
                window,
            });
        }
    }
    if let Some(i) = detections.windows(2).position(|w| w[1].t_abs < w[0].t_abs) {
        return Err(Error::Unsorted {
            index: i + 1,
            t_abs: detections[i + 1].t_abs,
        });
    }

    let period = cfg.laser.period_ns;
    let per = cfg.ticks_per_period();
    let dt = cfg.tick_period_ns();
    // (period index, owning tick) per detection; None means lost to gating.
    let slots: Vec<(u64, Option<usize>)> = detections
        .iter()
        .map(|d| {
            let (p, phase) = fold(d.t_abs, period);
            (p, cfg.tick_for_phase(phase))
        })
        .collect();

    let mut state = RingState::new(cfg.n_stages, cfg.counter_bits);
    let mut next = 0;
    for p in 0..cfg.laser.n_periods {
        let start = cfg.laser.period_start(p);
        for k in 0..per {
            let mut inject = false;
            while let Some(&(dp, slot)) = slots.get(next) {
                if dp != p {
                    break;
                }
                match slot {
                    None => {}
                    Some(s) if s > k => break,
                    Some(_) => inject |= state.register_detection(cfg.stopper),
                }
                next += 1;
            }
            state.shift_in(inject);
            observe(TickEvent {
                tick: state.ticks_elapsed - 1,
                time_ns: start + k as f64 * dt,
                period: p,
                injected: inject,
                state: &state,
            });
        }
        // Detections in the gated gap after the last tick are dropped.
        while slots.get(next).is_some_and(|&(dp, _)| dp == p) {
            next += 1;
        }
    }
    Ok(state)
}

/// Serial readout of the ring.
#[derive(Debug, Clone, PartialEq)]
pub struct Readout {
    pub train: SpikeTrain,
    pub duration_ns: f64,
}

/// Shifts the ring out through the OR-gate output. Serial bit `i` is stage
/// `n-1-i`.
pub fn readout(state: &RingState, readout_clock_hz: f64) -> Readout {
    let n = state.n_stages();
    let bits = (0..n).map(|i| state.stage(n - 1 - i)).collect();
    Readout {
        train: SpikeTrain::from_bits(bits),
        duration_ns: n as f64 * 1e9 / readout_clock_hz,
    }
}

/// Rotation that maps readout position `i` to phase bin `(i + r) mod n`.
pub fn phase_offset(state: &RingState, cfg: &EncoderConfig) -> usize {
    (state.ticks_elapsed % cfg.n_stages as u64) as usize
}

/// Readout rotated into phase-bin order.
pub fn aligned_readout(state: &RingState, cfg: &EncoderConfig) -> SpikeTrain {
    readout(state, cfg.ring_clock_hz)
        .train
        .rotated_right(phase_offset(state, cfg))
}

pub const TRAIN_FORMAT: &str = "transporter-spike-train";
pub const TRAIN_FORMAT_VERSION: u32 = 1;

/// Header of a serialized spike train.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainHeader {
    pub format: String,
    pub version: u32,
    pub encoder: String,
    pub n_stages: usize,
    pub laser_period_ns: f64,
    pub ring_clock_hz: f64,
    pub stopper: Stopper,
    pub photon_count: u32,
    pub phase_offset: usize,
    /// Node the serial stream is read from.
    pub readout_start: String,
}

impl TrainHeader {
    pub fn for_ring(cfg: &EncoderConfig, state: &RingState) -> Self {
        Self {
            format: TRAIN_FORMAT.into(),
            version: TRAIN_FORMAT_VERSION,
            encoder: "ring".into(),
            n_stages: cfg.n_stages,
            laser_period_ns: cfg.laser.period_ns,
            ring_clock_hz: cfg.ring_clock_hz,
            stopper: cfg.stopper,
            photon_count: state.photon_count(),
            phase_offset: phase_offset(state, cfg),
            readout_start: "or_gate".into(),
        }
    }
}

/// One JSON header line followed by the `'0'`/`'1'` bit line.
pub fn write_train(header: &TrainHeader, train: &SpikeTrain) -> Result<String> {
    if header.n_stages != train.len() {
        return Err(Error::Shape {
            what: "spike train length vs header n_stages",
            expected: header.n_stages,
            got: train.len(),
        });
    }
    let head = serde_json::to_string(header).map_err(|e| Error::Format(e.to_string()))?;
    Ok(format!("{head}\n{}\n", train.to_bit_string()))
}

pub fn read_train(text: &str) -> Result<(TrainHeader, SpikeTrain)> {
    let mut lines = text.lines();
    let head = lines
        .next()
        .ok_or_else(|| Error::Format("missing spike train header".into()))?;
    let header: TrainHeader =
        serde_json::from_str(head).map_err(|e| Error::Format(format!("header: {e}")))?;
    if header.format != TRAIN_FORMAT || header.version != TRAIN_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported spike train format {} v{}",
            header.format, header.version
        )));
    }
    let bits = lines
        .next()
        .ok_or_else(|| Error::Format("missing bit line".into()))?;
    let train = SpikeTrain::from_bit_string(bits.trim_end())?;
    if train.len() != header.n_stages {
        return Err(Error::Shape {
            what: "bit line length vs header n_stages",
            expected: header.n_stages,
            got: train.len(),
        });
    }
    Ok((header, train))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photon_sim::{gen_periodic_arrivals, place};
    use proptest::prelude::*;

    fn laser(period: f64, n: u64) -> LaserConfig {
        LaserConfig::new(period, n).unwrap()
    }

    fn dets(ts: &[f64], period: f64) -> Vec<DetectionEvent> {
        ts.iter().map(|&t| DetectionEvent::at(t, period)).collect()
    }

    #[test]
    fn locked_clock_gives_full_periods() {
        let cfg = EncoderConfig::ideal(128, laser(100.0, 3)).with_clock(1.28e9);
        let s = gated_clock(&cfg).unwrap();
        assert_eq!(s.per_period_counts, vec![128; 3]);
        assert_eq!(s.suppressed_ns, vec![0.0; 3]);
        assert_eq!(s.deficient, vec![false; 3]);
        assert_eq!(s.tick_times.len(), 384);
        assert_eq!(s.tick_times[128], 100.0);
        assert_eq!(s.tick_times[1], 0.78125);
    }

    #[test]
    fn fast_clock_is_gated() {
        let cfg = EncoderConfig::ideal(128, laser(100.0, 2)).with_clock(1.346e9);
        let s = gated_clock(&cfg).unwrap();
        assert_eq!(s.per_period_counts, vec![128, 128]);
        let expected = 100.0 - 128.0 / 1.346;
        assert!((s.suppressed_ns[0] - expected).abs() < 1e-9);
        assert!((s.suppressed_ns[0] - 4.9).abs() < 0.01);
        assert!(!s.deficient[0]);
    }

    #[test]
    fn slow_clock_is_deficient() {
        let cfg = EncoderConfig::ideal(128, laser(100.0, 2)).with_clock(0.77e9);
        let s = gated_clock(&cfg).unwrap();
        assert_eq!(s.per_period_counts, vec![77, 77]);
        assert_eq!(s.deficient, vec![true, true]);
        assert_eq!(s.suppressed_ns, vec![0.0, 0.0]);
    }

    #[test]
    fn step_injects_into_empty_ring() {
        let mut st = RingState::new(8, 12);
        st.step(true);
        assert_eq!(st.bits(), vec![true, false, false, false, false, false, false, false]);
        assert_eq!(st.ticks_elapsed(), 1);
        assert_eq!(st.set_bits(), 1);
    }

    #[test]
    fn or_gate_merges_spikes() {
        let mut bits = vec![false; 8];
        bits[7] = true;
        let mut st = RingState::with_bits(bits);
        st.step(true);
        let mut expected = vec![false; 8];
        expected[0] = true;
        assert_eq!(st.bits(), expected);
        assert_eq!(st.set_bits(), 1);
    }

    #[test]
    fn disabled_injection_is_ignored() {
        let mut st = RingState::new(4, 12);
        st.injection_enabled = false;
        st.step(true);
        assert_eq!(st.set_bits(), 0);
    }

    #[test]
    fn empty_exposure() {
        let cfg = EncoderConfig::ideal(128, laser(128.0, 5));
        let st = encode(&[], &cfg).unwrap();
        assert_eq!(st.set_bits(), 0);
        assert_eq!(st.photon_count(), 0);
        assert_eq!(st.ticks_elapsed(), 640);
    }

    #[test]
    fn rejects_detections_outside_window() {
        let cfg = EncoderConfig::ideal(8, laser(10.0, 2));
        let err = encode(&dets(&[1.0, 25.0], 10.0), &cfg).unwrap_err();
        assert!(matches!(err, Error::OutsideExposure { index: 1, .. }));
        let err = encode(&dets(&[5.0, 1.0], 10.0), &cfg).unwrap_err();
        assert!(matches!(err, Error::Unsorted { index: 1, .. }));
    }

    #[test]
    fn golden_130ns_source() {
        let l = laser(128.0, 16);
        let cfg = EncoderConfig::ideal(128, l).with_clock(1e9);
        assert!(cfg.is_locked());
        let arrivals = gen_periodic_arrivals(130.0, &l, 2000.0).unwrap();
        let d: Vec<_> = arrivals.iter().map(|a| DetectionEvent::at(a.t_abs, 128.0)).collect();
        let st = encode(&d, &cfg).unwrap();
        assert_eq!(phase_offset(&st, &cfg), 0);
        let r = readout(&st, 200e6);
        assert_eq!(r.duration_ns, 640.0);
        let ones = r.train.ones();
        assert_eq!(ones, (0..16).map(|i| 2 * i).collect::<Vec<_>>());
        // Stage order is reversed relative to the serial stream.
        let stage_ones: Vec<usize> = (0..128).filter(|&i| st.stage(i)).collect();
        assert!(stage_ones.windows(2).all(|w| w[1] - w[0] == 2));
    }

    #[test]
    fn same_period_source_folds_to_one_stage() {
        let l = laser(128.0, 16);
        let cfg = EncoderConfig::ideal(128, l);
        let arrivals = gen_periodic_arrivals(128.0, &l, 2000.0).unwrap();
        let d: Vec<_> = arrivals.iter().map(|a| DetectionEvent::at(a.t_abs, 128.0)).collect();
        let st = encode(&d, &cfg).unwrap();
        assert_eq!(st.set_bits(), 1);
        assert_eq!(st.photon_count(), 16);
    }

    #[test]
    fn stopper_trips_above_threshold() {
        let n = 300u64;
        let l = laser(128.0, n);
        let cfg = EncoderConfig::ideal(128, l).with_stopper(Stopper::At256);
        // One detection per period at a phase that walks through the bins.
        let d: Vec<_> = (0..n)
            .map(|p| DetectionEvent::at(place(p, (p * 37 % 128) as f64 + 0.5, 128.0), 128.0))
            .collect();
        let st = encode(&d, &cfg).unwrap();
        assert_eq!(st.injections_accepted(), 257);
        assert_eq!(st.photon_count(), 257);
        assert!(!st.injection_enabled());
        assert!(st.set_bits() <= 257);
    }

    #[test]
    fn fast_clock_drops_gap_detections() {
        let l = laser(100.0, 1);
        let cfg = EncoderConfig::ideal(128, l).with_clock(1.346e9);
        let st = encode(&dets(&[10.0, 97.0], 100.0), &cfg).unwrap();
        assert_eq!(st.photon_count(), 1);
        assert_eq!(st.set_bits(), 1);
    }

    #[test]
    fn phase_offset_examples() {
        let cfg = EncoderConfig::ideal(8, laser(8.0, 1));
        let mut st = RingState::new(8, 12);
        for _ in 0..16 {
            st.step(false);
        }
        assert_eq!(phase_offset(&st, &cfg), 0);
        for _ in 0..5 {
            st.step(false);
        }
        assert_eq!(phase_offset(&st, &cfg), 5);
    }

    #[test]
    fn stopper_parsing() {
        assert_eq!("off".parse::<Stopper>().unwrap(), Stopper::Disabled);
        assert_eq!("128".parse::<Stopper>().unwrap(), Stopper::At128);
        assert!("64".parse::<Stopper>().is_err());
        let cfg = EncoderConfig {
            counter_bits: 7,
            ..EncoderConfig::ideal(8, laser(8.0, 1)).with_stopper(Stopper::At128)
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn train_file_round_trip_and_errors() {
        let l = laser(128.0, 16);
        let cfg = EncoderConfig::ideal(128, l);
        let st = encode(&dets(&[3.0, 200.0], 128.0), &cfg).unwrap();
        let header = TrainHeader::for_ring(&cfg, &st);
        let train = readout(&st, 200e6).train;
        let text = write_train(&header, &train).unwrap();
        let (h2, t2) = read_train(&text).unwrap();
        assert_eq!(h2, header);
        assert_eq!(t2, train);
        assert!(read_train(&text.replace("\"or_gate\"", "\"or_gate\",\"x\":1")).is_err());
        let short = text.lines().next().unwrap().to_string() + "\n0101\n";
        assert!(matches!(read_train(&short), Err(Error::Shape { .. })));
    }

    proptest! {
        #[test]
        fn full_rotation_is_identity(bits in proptest::collection::vec(any::<bool>(), 2..64)) {
            let mut st = RingState::with_bits(bits.clone());
            for _ in 0..bits.len() {
                st.step(false);
            }
            prop_assert_eq!(st.bits(), bits);
        }

        #[test]
        fn set_bits_grow_by_at_most_one(
            n in 2usize..40,
            injects in proptest::collection::vec(any::<bool>(), 0..300),
        ) {
            let mut st = RingState::new(n, 12);
            let mut prev = 0;
            for &inj in &injects {
                st.step(inj);
                let now = st.set_bits();
                prop_assert!(now >= prev && now <= prev + 1);
                prop_assert_eq!(now, st.bits().iter().filter(|&&b| b).count());
                prev = now;
            }
            let injections = injects.iter().filter(|&&b| b).count();
            prop_assert!(st.set_bits() <= injections.min(n));
        }

        #[test]
        fn locked_schedule_is_exact(n in 2usize..300, period in 1.0f64..1000.0, periods in 1u64..20) {
            let cfg = EncoderConfig::ideal(n, laser(period, periods));
            let s = gated_clock(&cfg).unwrap();
            prop_assert!(s.per_period_counts.iter().all(|&c| c == n));
            prop_assert!(s.deficient.iter().all(|&d| !d));
        }

        #[test]
        fn fast_clock_schedule_is_exact(n in 2usize..300, period in 1.0f64..1000.0, factor in 1.0f64..3.0) {
            let l = laser(period, 4);
            let cfg = EncoderConfig::ideal(n, l).with_clock(n as f64 * l.frequency_hz() * factor);
            let s = gated_clock(&cfg).unwrap();
            prop_assert!(s.per_period_counts.iter().all(|&c| c == n));
        }

        #[test]
        fn stopper_bounds_injections(
            hits in proptest::collection::vec((0u64..600, 0.0f64..128.0), 0..700),
            stopper in prop_oneof![Just(Stopper::At128), Just(Stopper::At256)],
        ) {
            let l = laser(128.0, 600);
            let mut ts: Vec<f64> = hits.iter().map(|&(p, ph)| place(p, ph, 128.0)).collect();
            ts.sort_by(f64::total_cmp);
            let d = dets(&ts, 128.0);
            let cfg = EncoderConfig::ideal(128, l).with_stopper(stopper);
            let mut trip_seen = false;
            let st = encode_traced(&d, &cfg, |ev| {
                if trip_seen {
                    assert_no_injection(!ev.injected);
                }
                if !ev.state.injection_enabled() {
                    trip_seen = true;
                }
            }).unwrap();
            let t = u64::from(stopper.threshold().unwrap());
            prop_assert!(st.injections_accepted() <= t + 1);
            prop_assert_eq!(st.injection_enabled(), d.len() as u64 <= t);
        }
    }

    fn assert_no_injection(ok: bool) {
        assert!(ok, "injection after stopper tripped");
    }
}
