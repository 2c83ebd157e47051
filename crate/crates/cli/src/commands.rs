//! Subcommand configurations and their runners.
//!
//! Every runner takes a fully resolved configuration and an output
//! directory, and returns the names of the files it wrote. [`execute`] wraps
//! a runner with thread-pool setup, hashing and the run manifest; [`replay`]
//! reruns a manifest and compares hashes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use transporter_core::dataset::{self, DatasetSpec, EncoderPath, Split};
use transporter_core::photon_sim::{
    detect, gen_arrivals, gen_periodic_arrivals, DecaySource, DetectionEvent, LaserConfig, SpadModel,
};
use transporter_core::ring::{
    self, encode_traced, phase_offset, readout, write_train, EncoderConfig, Stopper, TrainHeader,
};
use transporter_core::snn::{self, read_model, train_bptt, write_model, Architecture, TrainConfig};
use transporter_core::{oracle, seed};

use crate::error::ConfigError;
use crate::manifest::{hash_artifacts, RunManifest, REDUCTION_ORDER};

pub const SEED_ENV: &str = "TRANSPORTER_SEED";

/// Reads a JSON config; a missing path or an empty file yields defaults.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    if text.trim().is_empty() {
        return Ok(T::default());
    }
    serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())).into())
}

/// `--seed` wins, then `TRANSPORTER_SEED`, then the config value.
pub fn resolve_seed(flag: Option<u64>, config_seed: u64) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| ConfigError(format!("{SEED_ENV}={v:?} is not an unsigned integer")).into()),
        Err(_) => Ok(config_seed),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RingDemoConfig {
    pub source_period_ns: f64,
    pub laser_period_ns: f64,
    pub exposure_ns: f64,
    pub n_stages: usize,
    pub ring_clock_hz: f64,
    pub stopper: Stopper,
    pub readout_clock_hz: f64,
}

impl Default for RingDemoConfig {
    fn default() -> Self {
        Self {
            source_period_ns: 130.0,
            laser_period_ns: 128.0,
            exposure_ns: 2000.0,
            n_stages: 128,
            ring_clock_hz: 1e9,
            stopper: Stopper::Disabled,
            readout_clock_hz: 200e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncodeConfig {
    pub lifetime_ns: f64,
    pub background_fraction: f64,
    pub mean_photons_per_period: f64,
    pub laser_period_ns: f64,
    pub n_periods: u64,
    pub pdp: f64,
    pub dead_time_ns: f64,
    pub n_stages: usize,
    /// `None` locks the ring clock to `n_stages` ticks per laser period.
    pub ring_clock_hz: Option<f64>,
    pub stopper: Stopper,
    pub readout_clock_hz: f64,
    pub encoder: EncoderPath,
    pub seed: u64,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        Self {
            lifetime_ns: 10.0,
            background_fraction: 0.0,
            mean_photons_per_period: 0.1,
            laser_period_ns: 128.0,
            n_periods: 2560,
            pdp: 1.0,
            dead_time_ns: 0.0,
            n_stages: 128,
            ring_clock_hz: None,
            stopper: Stopper::Disabled,
            readout_clock_hz: 200e6,
            encoder: EncoderPath::Ring,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainCommandConfig {
    /// Directory holding `train.tsv` and `val.tsv` (and optionally `test.tsv`).
    pub dataset_dir: PathBuf,
    pub arch: Architecture,
    pub train: TrainConfig,
}

impl Default for TrainCommandConfig {
    fn default() -> Self {
        Self {
            dataset_dir: PathBuf::from("dataset"),
            arch: Architecture::default(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub model_path: PathBuf,
    pub dataset_path: PathBuf,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            model_path: PathBuf::from("model/model.txt"),
            dataset_path: PathBuf::from("dataset/test.tsv"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CornersConfig {
    pub frequencies_hz: Vec<f64>,
    pub laser_period_ns: f64,
    pub n_periods: u64,
    pub n_stages: usize,
    /// With both set, each corner's relative clock error is replayed on the
    /// dataset's ring and the model's MAPE is reported.
    pub model_path: Option<PathBuf>,
    pub dataset_path: Option<PathBuf>,
}

impl Default for CornersConfig {
    fn default() -> Self {
        Self {
            frequencies_hz: vec![0.77e9, 1.068e9, 1.28e9, 1.346e9],
            laser_period_ns: 100.0,
            n_periods: 100,
            n_stages: 128,
            model_path: None,
            dataset_path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    GenDataset(DatasetSpec),
    RingDemo(RingDemoConfig),
    Encode(EncodeConfig),
    Train(TrainCommandConfig),
    Eval(EvalConfig),
    Corners(CornersConfig),
}

/// What a runner produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub artifacts: Vec<String>,
    pub summary: String,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenDataset(_) => "gen-dataset",
            Command::RingDemo(_) => "ring-demo",
            Command::Encode(_) => "encode",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Corners(_) => "corners",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Command::GenDataset(c) => Some(c.seed),
            Command::Encode(c) => Some(c.seed),
            Command::Train(c) => Some(c.train.seed),
            _ => None,
        }
    }

    pub fn config_json(&self) -> Result<serde_json::Value> {
        Ok(match self {
            Command::GenDataset(c) => serde_json::to_value(c)?,
            Command::RingDemo(c) => serde_json::to_value(c)?,
            Command::Encode(c) => serde_json::to_value(c)?,
            Command::Train(c) => serde_json::to_value(c)?,
            Command::Eval(c) => serde_json::to_value(c)?,
            Command::Corners(c) => serde_json::to_value(c)?,
        })
    }

    pub fn from_manifest(m: &RunManifest) -> Result<Self> {
        fn cfg<T: DeserializeOwned>(v: &serde_json::Value) -> Result<T> {
            serde_json::from_value(v.clone()).map_err(|e| ConfigError(format!("manifest config: {e}")).into())
        }
        let v = &m.config;
        Ok(match m.command.as_str() {
            "gen-dataset" => Command::GenDataset(cfg(v)?),
            "ring-demo" => Command::RingDemo(cfg(v)?),
            "encode" => Command::Encode(cfg(v)?),
            "train" => Command::Train(cfg(v)?),
            "eval" => Command::Eval(cfg(v)?),
            "corners" => Command::Corners(cfg(v)?),
            other => return Err(ConfigError(format!("unknown command {other:?} in manifest")).into()),
        })
    }

    pub fn run(&self, out_dir: &Path) -> Result<Outcome> {
        match self {
            Command::GenDataset(c) => gen_dataset(c, out_dir),
            Command::RingDemo(c) => ring_demo(c, out_dir),
            Command::Encode(c) => encode(c, out_dir),
            Command::Train(c) => train(c, out_dir),
            Command::Eval(c) => eval(c, out_dir),
            Command::Corners(c) => corners(c, out_dir),
        }
    }
}

/// Runs `cmd` on a pool of `threads` workers and writes its manifest.
pub fn execute(cmd: &Command, out_dir: &Path, threads: usize) -> Result<(Outcome, RunManifest)> {
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    let start = Instant::now();
    let outcome = pool.install(|| cmd.run(out_dir))?;
    let manifest = RunManifest {
        command: cmd.name().to_string(),
        config: cmd.config_json()?,
        seed: cmd.seed(),
        artifacts: hash_artifacts(out_dir, &outcome.artifacts)?,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        threads,
        reduction_order: REDUCTION_ORDER.to_string(),
        wall_clock_s: start.elapsed().as_secs_f64(),
    };
    manifest.save(out_dir)?;
    Ok((outcome, manifest))
}

/// Artifacts whose hash differs from the recorded one.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub checked: usize,
    pub mismatched: Vec<String>,
}

pub fn replay(manifest_path: &Path, out_dir: &Path, threads: Option<usize>) -> Result<ReplayReport> {
    let recorded = RunManifest::load(manifest_path)?;
    let cmd = Command::from_manifest(&recorded)?;
    let (_, fresh) = execute(&cmd, out_dir, threads.unwrap_or(recorded.threads))?;
    let mut mismatched: Vec<String> = recorded
        .artifacts
        .iter()
        .filter(|(name, hash)| fresh.artifacts.get(*name) != Some(hash))
        .map(|(name, _)| name.clone())
        .collect();
    mismatched.extend(
        fresh
            .artifacts
            .keys()
            .filter(|k| !recorded.artifacts.contains_key(*k))
            .cloned(),
    );
    Ok(ReplayReport {
        checked: recorded.artifacts.len(),
        mismatched,
    })
}

fn write_file(dir: &Path, name: &str, contents: &str, artifacts: &mut Vec<String>) -> Result<()> {
    fs::write(dir.join(name), contents).with_context(|| format!("writing {name}"))?;
    artifacts.push(name.to_string());
    Ok(())
}

fn gen_dataset(spec: &DatasetSpec, out_dir: &Path) -> Result<Outcome> {
    spec.validate()?;
    for w in spec.warnings() {
        eprintln!("warning: {w}");
    }
    let mut artifacts = Vec::new();
    let mut summary = String::new();
    for split in Split::ALL {
        let d = dataset::generate_split(spec, split)?;
        let name = format!("{split}.tsv");
        dataset::save(&d, &out_dir.join(&name))?;
        writeln!(summary, "{name}: {} samples", d.samples.len())?;
        artifacts.push(name);
    }
    Ok(Outcome { artifacts, summary })
}

fn ring_demo(c: &RingDemoConfig, out_dir: &Path) -> Result<Outcome> {
    if !(c.exposure_ns > 0.0 && c.laser_period_ns > 0.0) {
        return Err(ConfigError("exposure and laser period must be positive".into()).into());
    }
    let n_periods = (c.exposure_ns / c.laser_period_ns).ceil() as u64;
    let laser = LaserConfig::new(c.laser_period_ns, n_periods)?;
    let cfg = EncoderConfig {
        n_stages: c.n_stages,
        ring_clock_hz: c.ring_clock_hz,
        laser,
        stopper: c.stopper,
        counter_bits: 12,
    };
    let arrivals = gen_periodic_arrivals(c.source_period_ns, &laser, c.exposure_ns)?;
    let detections: Vec<DetectionEvent> = arrivals
        .iter()
        .map(|a| DetectionEvent::at(a.t_abs, laser.period_ns))
        .collect();

    let mut csv = String::from(
        "tick,time_ns,period,injected,photon_count,injection_enabled,set_bits,stages\n",
    );
    let state = encode_traced(&detections, &cfg, |ev| {
        let stages: String = ev.state.bits().iter().map(|&b| if b { '1' } else { '0' }).collect();
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            ev.tick,
            ev.time_ns,
            ev.period,
            u8::from(ev.injected),
            ev.state.photon_count(),
            u8::from(ev.state.injection_enabled()),
            ev.state.set_bits(),
            stages
        );
    })?;
    let r = readout(&state, c.readout_clock_hz);
    let header = TrainHeader::for_ring(&cfg, &state);

    let mut artifacts = Vec::new();
    write_file(out_dir, "ring_trace.csv", &csv, &mut artifacts)?;
    write_file(out_dir, "readout.txt", &write_train(&header, &r.train)?, &mut artifacts)?;

    let ones = r.train.ones();
    let gaps: Vec<usize> = ones.windows(2).map(|w| w[1] - w[0]).collect();
    let mut summary = String::new();
    writeln!(summary, "arrivals: {}, accepted injections: {}", detections.len(), state.injections_accepted())?;
    writeln!(summary, "set bits: {} at readout positions {:?}", ones.len(), ones)?;
    writeln!(summary, "spacing between set bits: {gaps:?}")?;
    writeln!(summary, "phase offset: {}", phase_offset(&state, &cfg))?;
    writeln!(summary, "injection enabled at end: {}", state.injection_enabled())?;
    writeln!(summary, "readout duration: {} ns", r.duration_ns)?;
    Ok(Outcome { artifacts, summary })
}

fn encode(c: &EncodeConfig, out_dir: &Path) -> Result<Outcome> {
    let laser = LaserConfig::new(c.laser_period_ns, c.n_periods)?;
    let src = DecaySource {
        lifetime_ns: c.lifetime_ns,
        background_fraction: c.background_fraction,
        mean_photons_per_period: c.mean_photons_per_period,
    };
    let spad = SpadModel {
        pdp: c.pdp,
        dead_time_ns: c.dead_time_ns,
    };
    let arrivals = gen_arrivals(&laser, &src, seed::derive(c.seed, "arrivals", 0))?;
    let detections = detect(&arrivals, &laser, &spad, seed::derive(c.seed, "detect", 0))?;
    let mut cfg = EncoderConfig::ideal(c.n_stages, laser).with_stopper(c.stopper);
    if let Some(f) = c.ring_clock_hz {
        cfg = cfg.with_clock(f);
    }

    let (header, train) = match c.encoder {
        EncoderPath::Ring => {
            let state = ring::encode(&detections, &cfg)?;
            (
                TrainHeader::for_ring(&cfg, &state),
                readout(&state, c.readout_clock_hz).train,
            )
        }
        EncoderPath::Oracle => {
            let train = oracle::encode(&detections, c.n_stages, c.laser_period_ns)?;
            let header = TrainHeader {
                format: ring::TRAIN_FORMAT.into(),
                version: ring::TRAIN_FORMAT_VERSION,
                encoder: "oracle".into(),
                n_stages: c.n_stages,
                laser_period_ns: c.laser_period_ns,
                ring_clock_hz: cfg.ring_clock_hz,
                stopper: Stopper::Disabled,
                photon_count: (detections.len() % (1usize << cfg.counter_bits)) as u32,
                phase_offset: 0,
                readout_start: "bin_0".into(),
            };
            (header, train)
        }
    };

    let mut det_csv = String::from("t_abs_ns,phase_ns\n");
    for d in &detections {
        writeln!(det_csv, "{},{}", d.t_abs, d.phase)?;
    }
    let mut artifacts = Vec::new();
    write_file(out_dir, "spike_train.txt", &write_train(&header, &train)?, &mut artifacts)?;
    write_file(out_dir, "detections.csv", &det_csv, &mut artifacts)?;
    let summary = format!(
        "{} arrivals, {} detections, {} set bits ({} encoder, phase offset {})\n",
        arrivals.len(),
        detections.len(),
        train.count_ones(),
        header.encoder,
        header.phase_offset
    );
    Ok(Outcome { artifacts, summary })
}

fn train(c: &TrainCommandConfig, out_dir: &Path) -> Result<Outcome> {
    let load = |name: &str| {
        let path = c.dataset_dir.join(name);
        dataset::load(&path).with_context(|| format!("loading dataset {}", path.display()))
    };
    let train_set = load("train.tsv")?;
    let val_set = load("val.tsv")?;
    let test_path = c.dataset_dir.join("test.tsv");
    let test_set = if test_path.exists() { Some(load("test.tsv")?) } else { None };

    let outcome = train_bptt(&train_set.samples, &val_set.samples, c.arch, &c.train, |s| {
        eprintln!(
            "epoch {:>3}  train loss {:.6}  val loss {:.6}  val MAPE {:.3}%",
            s.epoch, s.train_loss, s.val_loss, s.val_mape
        );
    })?;

    let mut curve = String::from("epoch,train_loss,val_loss,val_mape_pct\n");
    for s in &outcome.history {
        writeln!(curve, "{},{},{},{}", s.epoch, s.train_loss, s.val_loss, s.val_mape)?;
    }
    let best_val = outcome
        .history
        .iter()
        .find(|s| s.epoch == outcome.best_epoch)
        .map(|s| s.val_mape);
    let test_mape = test_set
        .as_ref()
        .map(|t| snn::evaluate_mape(&outcome.model, &t.samples))
        .transpose()?;
    let metrics = serde_json::json!({
        "best_epoch": outcome.best_epoch,
        "epochs_run": outcome.history.len(),
        "val_mape_pct": best_val,
        "test_mape_pct": test_mape,
    });

    let mut artifacts = Vec::new();
    write_file(out_dir, "model.txt", &write_model(&outcome.model)?, &mut artifacts)?;
    write_file(out_dir, "training_curve.csv", &curve, &mut artifacts)?;
    write_file(out_dir, "metrics.json", &(serde_json::to_string_pretty(&metrics)? + "\n"), &mut artifacts)?;
    let mut summary = format!("best epoch {} of {}\n", outcome.best_epoch, outcome.history.len());
    if let Some(v) = best_val {
        writeln!(summary, "validation MAPE: {v:.3}%")?;
    }
    if let Some(t) = test_mape {
        writeln!(summary, "test MAPE: {t:.3}%")?;
    }
    Ok(Outcome { artifacts, summary })
}

fn load_model(path: &Path) -> Result<snn::SnnModel> {
    let text = fs::read_to_string(path).with_context(|| format!("reading model {}", path.display()))?;
    Ok(read_model(&text)?)
}

fn eval(c: &EvalConfig, out_dir: &Path) -> Result<Outcome> {
    let model = load_model(&c.model_path)?;
    let data = dataset::load(&c.dataset_path)
        .with_context(|| format!("loading dataset {}", c.dataset_path.display()))?;
    let preds = snn::predict(&model, &data.samples)?;
    let mape = snn::mape(data.samples.iter().map(|s| s.lifetime_ns).zip(preds.iter().copied()))?;

    let mut csv = String::from("index,true_ns,predicted_ns,abs_pct_error\n");
    for (i, (s, p)) in data.samples.iter().zip(&preds).enumerate() {
        let err = 100.0 * (p - s.lifetime_ns).abs() / s.lifetime_ns;
        writeln!(csv, "{i},{},{p},{err}", s.lifetime_ns)?;
    }
    let metrics = serde_json::json!({ "n": preds.len(), "mape_pct": mape });
    let mut artifacts = Vec::new();
    write_file(out_dir, "predictions.csv", &csv, &mut artifacts)?;
    write_file(out_dir, "metrics.json", &(serde_json::to_string_pretty(&metrics)? + "\n"), &mut artifacts)?;
    Ok(Outcome {
        artifacts,
        summary: format!("MAPE: {mape:.3}% over {} samples\n", preds.len()),
    })
}

fn corners(c: &CornersConfig, out_dir: &Path) -> Result<Outcome> {
    if c.frequencies_hz.is_empty() {
        return Err(ConfigError("no corner frequencies given".into()).into());
    }
    let laser = LaserConfig::new(c.laser_period_ns, c.n_periods)?;
    let base = EncoderConfig::ideal(c.n_stages, laser);

    let downstream = match (&c.model_path, &c.dataset_path) {
        (Some(m), Some(d)) => {
            let model = load_model(m)?;
            let data = dataset::load(d).with_context(|| format!("loading dataset {}", d.display()))?;
            let baseline = snn::evaluate_mape(&model, &data.samples)?;
            Some((model, data, baseline))
        }
        (None, None) => None,
        _ => bail!(ConfigError("model_path and dataset_path must be given together".into())),
    };

    let mut csv = String::from(
        "freq_hz,ticks_per_period,deficient,suppressed_ns,min_ticks,max_ticks,dataset_clock_hz,mape_pct,mape_delta_pct\n",
    );
    let mut summary = String::new();
    for &f in &c.frequencies_hz {
        let cfg = base.with_clock(f);
        let sched = ring::gated_clock(&cfg)?;
        let min = sched.per_period_counts.iter().min().copied().unwrap_or(0);
        let max = sched.per_period_counts.iter().max().copied().unwrap_or(0);
        let (ds_clock, mape, delta) = match &downstream {
            Some((model, data, baseline)) => {
                // Same relative clock error, applied to the dataset's ring.
                let spec = data.spec;
                let ring_cfg = spec.ring_config();
                let scaled = ring_cfg.ring_clock_hz * f / base.ring_clock_hz;
                let rc = ring_cfg.with_clock(scaled);
                let encoded = dataset::generate_split_with(&spec, data.split, EncoderPath::Ring, Some(&rc))?;
                let m = snn::evaluate_mape(model, &encoded.samples)?;
                (format!("{scaled}"), format!("{m}"), format!("{}", m - baseline))
            }
            None => (String::new(), String::new(), String::new()),
        };
        writeln!(
            csv,
            "{f},{},{},{},{min},{max},{ds_clock},{mape},{delta}",
            cfg.ticks_per_period(),
            u8::from(cfg.is_deficient()),
            cfg.suppressed_ns(),
        )?;
        writeln!(
            summary,
            "{:.3} GHz: {} ticks/period{}, {:.3} ns suppressed{}",
            f / 1e9,
            cfg.ticks_per_period(),
            if cfg.is_deficient() { " (deficient)" } else { "" },
            cfg.suppressed_ns(),
            if mape.is_empty() { String::new() } else { format!(", MAPE {mape}%") }
        )?;
    }
    let mut artifacts = Vec::new();
    write_file(out_dir, "corners.csv", &csv, &mut artifacts)?;
    Ok(Outcome { artifacts, summary })
}
