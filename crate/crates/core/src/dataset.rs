//! Fluorescence-lifetime datasets of binarized phase histograms.
//!
//! Every sample draws a lifetime uniformly from the configured range, then
//! exactly `photons_per_sample` detected phases (one per laser period), and
//! encodes them either with the histogram oracle or by running the ring
//! encoder and rotating its readout into phase order. Each sample owns a seed
//! derived from the master seed, the split name and its index, so any split
//! or any single sample can be regenerated on its own.
//!
//! File layout: one JSON header line, then one record per line,
//! `<lifetime ns>\t<bit string>`.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::photon_sim::{place, sample_phase, DecaySource, DetectionEvent, LaserConfig};
use crate::ring::{aligned_readout, EncoderConfig};
use crate::spike_train::SpikeTrain;
use crate::{oracle, ring, seed};

pub const DATASET_FORMAT: &str = "transporter-flim";
pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderPath {
    Oracle,
    Ring,
}

/// How `background_fraction` is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundConvention {
    /// Each detected photon is background with this probability.
    PhotonFraction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub photons_per_sample: usize,
    pub background_fraction: f64,
    pub background_convention: BackgroundConvention,
    pub lifetime_range: (f64, f64),
    pub n_bins: usize,
    pub bin_width_ns: f64,
    pub encoder_path: EncoderPath,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            n_train: 20_000,
            n_val: 2_000,
            n_test: 2_000,
            photons_per_sample: 256,
            background_fraction: 0.0,
            background_convention: BackgroundConvention::PhotonFraction,
            lifetime_range: (5.0, 20.0),
            n_bins: 128,
            bin_width_ns: 1.0,
            encoder_path: EncoderPath::Oracle,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_val == 0 || self.n_test == 0 {
            return Err(Error::InvalidConfig("every split needs at least one sample".into()));
        }
        let (lo, hi) = self.lifetime_range;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lifetime range must satisfy 0 < low < high, got [{lo}, {hi}]"
            )));
        }
        if !(0.0..=1.0).contains(&self.background_fraction) {
            return Err(Error::InvalidConfig(format!(
                "background fraction must lie in [0, 1], got {}",
                self.background_fraction
            )));
        }
        if self.n_bins < 2 || !(self.bin_width_ns.is_finite() && self.bin_width_ns > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 bins of positive width, got {} x {} ns",
                self.n_bins, self.bin_width_ns
            )));
        }
        Ok(())
    }

    /// Non-fatal oddities worth reporting.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.photons_per_sample == 0 {
            w.push("photons_per_sample is 0: every spike train will be all zeros".into());
        }
        w
    }

    pub fn period_ns(&self) -> f64 {
        self.n_bins as f64 * self.bin_width_ns
    }

    pub fn size(&self, split: Split) -> usize {
        match split {
            Split::Train => self.n_train,
            Split::Val => self.n_val,
            Split::Test => self.n_test,
        }
    }

    /// Ring configuration used for the ring path: one detection per period,
    /// clock locked to the bins.
    pub fn ring_config(&self) -> EncoderConfig {
        let laser = LaserConfig {
            period_ns: self.period_ns(),
            n_periods: self.photons_per_sample.max(1) as u64,
        };
        EncoderConfig::ideal(self.n_bins, laser)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn tag(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlimSample {
    pub spikes: SpikeTrain,
    pub lifetime_ns: f64,
    pub photons: usize,
    pub background_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub split: Split,
    pub samples: Vec<FlimSample>,
}

/// Raw detections of one sample before encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSample {
    pub lifetime_ns: f64,
    pub seed: u64,
    pub detections: Vec<DetectionEvent>,
}

pub fn sample_seed(spec: &DatasetSpec, split: Split, index: usize) -> u64 {
    seed::derive(spec.seed, split.tag(), index as u64)
}

/// Lifetime and detections of sample `index`; photon `i` arrives in period `i`.
pub fn raw_sample(spec: &DatasetSpec, split: Split, index: usize) -> RawSample {
    let s = sample_seed(spec, split, index);
    let mut rng = seed::rng(s);
    let (lo, hi) = spec.lifetime_range;
    let lifetime_ns = lo + (hi - lo) * rng.random::<f64>();
    let src = DecaySource {
        lifetime_ns,
        background_fraction: spec.background_fraction,
        mean_photons_per_period: 1.0,
    };
    let period = spec.period_ns();
    let detections = (0..spec.photons_per_sample)
        .map(|i| {
            let (phase, _) = sample_phase(&mut rng, &src, period);
            DetectionEvent::at(place(i as u64, phase, period), period)
        })
        .collect();
    RawSample {
        lifetime_ns,
        seed: s,
        detections,
    }
}

/// Encodes detections with `path`. The ring path uses `ring_cfg`, or the
/// locked clock of [`DatasetSpec::ring_config`] when `None`.
pub fn encode_raw(
    spec: &DatasetSpec,
    raw: &RawSample,
    path: EncoderPath,
    ring_cfg: Option<&EncoderConfig>,
) -> Result<SpikeTrain> {
    match path {
        EncoderPath::Oracle => oracle::encode(&raw.detections, spec.n_bins, spec.period_ns()),
        EncoderPath::Ring => {
            let cfg = ring_cfg.copied().unwrap_or_else(|| spec.ring_config());
            let state = ring::encode(&raw.detections, &cfg)?;
            Ok(aligned_readout(&state, &cfg))
        }
    }
}

fn finish(spec: &DatasetSpec, raw: RawSample, spikes: SpikeTrain) -> FlimSample {
    FlimSample {
        spikes,
        lifetime_ns: raw.lifetime_ns,
        photons: spec.photons_per_sample,
        background_fraction: spec.background_fraction,
        seed: raw.seed,
    }
}

/// One split, encoded along `spec.encoder_path`.
pub fn generate_split(spec: &DatasetSpec, split: Split) -> Result<Dataset> {
    generate_split_with(spec, split, spec.encoder_path, None)
}

pub fn generate_split_with(
    spec: &DatasetSpec,
    split: Split,
    path: EncoderPath,
    ring_cfg: Option<&EncoderConfig>,
) -> Result<Dataset> {
    spec.validate()?;
    let samples = (0..spec.size(split))
        .into_par_iter()
        .map(|i| {
            let raw = raw_sample(spec, split, i);
            let spikes = encode_raw(spec, &raw, path, ring_cfg)?;
            Ok(finish(spec, raw, spikes))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        spec: *spec,
        split,
        samples,
    })
}

/// Train, validation and test splits.
pub fn generate(spec: &DatasetSpec) -> Result<(Dataset, Dataset, Dataset)> {
    Ok((
        generate_split(spec, Split::Train)?,
        generate_split(spec, Split::Val)?,
        generate_split(spec, Split::Test)?,
    ))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileHeader {
    format: String,
    version: u32,
    split: Split,
    n_records: usize,
    spec: DatasetSpec,
}

pub fn write<W: Write>(dataset: &Dataset, mut out: W) -> Result<()> {
    let header = FileHeader {
        format: DATASET_FORMAT.into(),
        version: DATASET_FORMAT_VERSION,
        split: dataset.split,
        n_records: dataset.samples.len(),
        spec: dataset.spec,
    };
    let head = serde_json::to_string(&header).map_err(|e| Error::Format(e.to_string()))?;
    writeln!(out, "{head}")?;
    for s in &dataset.samples {
        writeln!(out, "{}\t{}", s.lifetime_ns, s.spikes.to_bit_string())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read<R: BufRead>(input: R) -> Result<Dataset> {
    let mut lines = input.lines();
    let head = lines
        .next()
        .ok_or_else(|| Error::Format("empty dataset file".into()))??;
    let header: FileHeader =
        serde_json::from_str(&head).map_err(|e| Error::Format(format!("dataset header: {e}")))?;
    if header.format != DATASET_FORMAT || header.version != DATASET_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported dataset format {} v{}",
            header.format, header.version
        )));
    }
    let spec = header.spec;
    let mut samples = Vec::with_capacity(header.n_records);
    for (record, line) in lines.enumerate() {
        let line = line?;
        if record >= header.n_records {
            if line.trim().is_empty() {
                continue;
            }
            return Err(Error::Parse {
                record,
                message: format!("header declares only {} records", header.n_records),
            });
        }
        let parse_err = |message: String| Error::Parse { record, message };
        let (lifetime, bits) = line
            .split_once('\t')
            .ok_or_else(|| parse_err("expected <lifetime>\\t<bits>".into()))?;
        let lifetime_ns: f64 = lifetime
            .parse()
            .map_err(|e| parse_err(format!("lifetime {lifetime:?}: {e}")))?;
        let spikes = SpikeTrain::from_bit_string(bits).map_err(|e| parse_err(e.to_string()))?;
        if spikes.len() != spec.n_bins {
            return Err(parse_err(format!(
                "bit string has {} bits, expected {}",
                spikes.len(),
                spec.n_bins
            )));
        }
        samples.push(FlimSample {
            spikes,
            lifetime_ns,
            photons: spec.photons_per_sample,
            background_fraction: spec.background_fraction,
            seed: sample_seed(&spec, header.split, record),
        });
    }
    if samples.len() != header.n_records {
        return Err(Error::Parse {
            record: samples.len(),
            message: format!(
                "file truncated: {} of {} records present",
                samples.len(),
                header.n_records
            ),
        });
    }
    Ok(Dataset {
        spec,
        split: header.split,
        samples,
    })
}

pub fn save(dataset: &Dataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write(dataset, std::io::BufWriter::new(file))
}

pub fn load(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> DatasetSpec {
        DatasetSpec {
            n_train: 40,
            n_val: 10,
            n_test: 10,
            seed,
            ..DatasetSpec::default()
        }
    }

    #[test]
    fn deterministic_and_split_disjoint() {
        let spec = small(5);
        let (tr, va, te) = generate(&spec).unwrap();
        assert_eq!(generate_split(&spec, Split::Val).unwrap(), va);
        assert_eq!(tr.samples.len(), 40);
        assert_ne!(tr.samples[0].seed, va.samples[0].seed);
        assert_ne!(va.samples[0].seed, te.samples[0].seed);
        assert_ne!(tr.samples[0].lifetime_ns, va.samples[0].lifetime_ns);
        for s in tr.samples.iter().chain(&va.samples).chain(&te.samples) {
            assert!(s.lifetime_ns >= 5.0 && s.lifetime_ns <= 20.0);
            assert_eq!(s.spikes.len(), 128);
            assert!(s.spikes.count_ones() > 0);
        }
    }

    #[test]
    fn both_noise_regimes_generate() {
        for bg in [0.0, 0.1] {
            let spec = DatasetSpec {
                background_fraction: bg,
                ..small(3)
            };
            let d = generate_split(&spec, Split::Test).unwrap();
            assert!(d.samples.iter().all(|s| s.photons == 256 && s.background_fraction == bg));
        }
    }

    #[test]
    fn zero_photons_is_degenerate_but_valid() {
        let spec = DatasetSpec {
            photons_per_sample: 0,
            ..small(1)
        };
        assert_eq!(spec.warnings().len(), 1);
        let d = generate_split(&spec, Split::Train).unwrap();
        assert!(d.samples.iter().all(|s| s.spikes.count_ones() == 0));
        let ring = generate_split_with(&spec, Split::Train, EncoderPath::Ring, None).unwrap();
        assert_eq!(ring.samples, d.samples);
    }

    #[test]
    fn ring_and_oracle_paths_agree() {
        let spec = DatasetSpec {
            background_fraction: 0.1,
            ..small(21)
        };
        for split in Split::ALL {
            let a = generate_split_with(&spec, split, EncoderPath::Oracle, None).unwrap();
            let b = generate_split_with(&spec, split, EncoderPath::Ring, None).unwrap();
            assert_eq!(a.samples, b.samples);
        }
    }

    #[test]
    fn impossible_specs_rejected() {
        assert!(DatasetSpec { n_val: 0, ..small(0) }.validate().is_err());
        assert!(DatasetSpec { lifetime_range: (20.0, 5.0), ..small(0) }.validate().is_err());
        assert!(DatasetSpec { lifetime_range: (0.0, 5.0), ..small(0) }.validate().is_err());
        assert!(DatasetSpec { background_fraction: 1.5, ..small(0) }.validate().is_err());
        assert!(DatasetSpec { n_bins: 1, ..small(0) }.validate().is_err());
    }

    #[test]
    fn labels_are_uniform() {
        let spec = DatasetSpec {
            n_train: 10_000,
            photons_per_sample: 0,
            ..small(77)
        };
        let d = generate_split(&spec, Split::Train).unwrap();
        let mean = d.samples.iter().map(|s| s.lifetime_ns).sum::<f64>() / 10_000.0;
        assert!((mean - 12.5).abs() / 12.5 < 0.01, "{mean}");
    }

    #[test]
    fn file_round_trip_is_bitwise() {
        let spec = small(9);
        let d = generate_split(&spec, Split::Train).unwrap();
        let mut buf = Vec::new();
        write(&d, &mut buf).unwrap();
        assert_eq!(read(buf.as_slice()).unwrap(), d);
    }

    #[test]
    fn truncation_names_the_record() {
        let d = generate_split(&small(9), Split::Val).unwrap();
        let mut buf = Vec::new();
        write(&d, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut = &text[..text.len() - 40];
        match read(cut.as_bytes()) {
            Err(Error::Parse { record, .. }) => assert_eq!(record, 9),
            other => panic!("expected parse error, got {other:?}"),
        }
        let whole_lines: String = text.lines().take(6).map(|l| format!("{l}\n")).collect();
        match read(whole_lines.as_bytes()) {
            Err(Error::Parse { record, .. }) => assert_eq!(record, 5),
            other => panic!("expected parse error, got {other:?}"),
        }
        let bad_version = text.replacen("\"version\":1", "\"version\":2", 1);
        assert!(matches!(read(bad_version.as_bytes()), Err(Error::Format(_))));
    }
}
