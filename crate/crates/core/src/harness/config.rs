//! Experiment configuration.
//!
//! A TOML document with the sections below; every key is optional and
//! falls back to the default. Unknown keys are rejected. `section.key=value`
//! overrides are applied to the parsed document before it is interpreted.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coding::{message_len, BlockInterleaver};
use crate::dnn::TrainConfig;
use crate::error::{Error, Result};
use crate::ofdm::{ChannelProfile, OfdmConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub ofdm: OfdmSection,
    pub channel: ChannelSection,
    pub receiver: ReceiverSection,
    pub noise: NoiseSection,
    pub sweep: SweepSection,
    pub detectors: DetectorSection,
    pub dataset: DatasetSection,
    pub train: TrainSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OfdmSection {
    pub fft_size: usize,
    pub pilot_spacing: usize,
    pub null_count: usize,
    pub cp_len: usize,
    pub interleaver_rows: usize,
    pub interleaver_cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    /// `false` gives an ideal single-tap channel.
    pub multipath: bool,
    pub sample_rate_hz: f64,
    pub paths: usize,
    pub mean_arrival_ms: f64,
    pub decay_ms: f64,
    pub max_attempts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReceiverSection {
    pub perfect_csi: bool,
    /// Permute received samples before impulse detection and undo the
    /// permutation before the DFT.
    pub time_interleaver: bool,
    pub time_interleaver_rows: usize,
    pub time_interleaver_cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    /// `awgn`, `bg`, `mca` or `sas`.
    pub model: String,
    pub epsilon: f64,
    pub sir_db: f64,
    pub burst_len: usize,
    pub impulsive_index: f64,
    pub mca_terms: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub ebn0_db: Vec<f64>,
    pub min_errors: u64,
    /// Bits to send at every point regardless of the error count.
    pub min_bits: u64,
    pub max_bits: u64,
    pub batch_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSection {
    pub policies: Vec<String>,
    pub p_fa: f64,
    /// Decision threshold on the network output.
    pub dnn_threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub n_symbols: usize,
    pub ebn0_db: Vec<f64>,
    pub sir_db: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub half_width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub eta: f64,
    pub lambda: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

pub const POLICY_NAMES: [&str; 4] = ["none", "dnn-blank", "np-blank", "np-clip"];

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            ofdm: OfdmSection::default(),
            channel: ChannelSection::default(),
            receiver: ReceiverSection::default(),
            noise: NoiseSection::default(),
            sweep: SweepSection::default(),
            detectors: DetectorSection::default(),
            dataset: DatasetSection::default(),
            train: TrainSection::default(),
        }
    }
}

impl Default for OfdmSection {
    fn default() -> Self {
        Self {
            fft_size: 1024,
            pilot_spacing: 4,
            null_count: 96,
            cp_len: 64,
            interleaver_rows: 32,
            interleaver_cols: 42,
        }
    }
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            multipath: true,
            sample_rate_hz: 6000.0,
            paths: 10,
            mean_arrival_ms: 1.0,
            decay_ms: 2.0,
            max_attempts: 1000,
        }
    }
}

impl Default for ReceiverSection {
    fn default() -> Self {
        Self {
            perfect_csi: false,
            time_interleaver: false,
            time_interleaver_rows: 32,
            time_interleaver_cols: 32,
        }
    }
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            model: "bg".into(),
            epsilon: 0.05,
            sir_db: 0.0,
            burst_len: 1,
            impulsive_index: 0.1,
            mca_terms: crate::noise::MiddletonClassA::DEFAULT_TERMS,
            alpha: 1.5,
            beta: 0.0,
            gamma: 1.0,
            mu: 0.0,
        }
    }
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            ebn0_db: (0..=10).map(|i| 2.0 * i as f64).collect(),
            min_errors: 200,
            min_bits: 0,
            max_bits: 20_000_000,
            batch_trials: 64,
        }
    }
}

impl Default for DetectorSection {
    fn default() -> Self {
        Self {
            policies: POLICY_NAMES.iter().map(|s| s.to_string()).collect(),
            p_fa: crate::mitigation::DEFAULT_P_FA,
            dnn_threshold: crate::dnn::DECISION_THRESHOLD,
            model: None,
        }
    }
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            n_symbols: 1000,
            ebn0_db: (0..=7).map(|i| 2.0 * i as f64).collect(),
            sir_db: vec![-5.0, 0.0, 5.0],
            epsilon: vec![0.01, 0.05, 0.1],
            half_width: crate::features::DEFAULT_HALF_WIDTH,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            eta: t.eta,
            lambda: t.lambda,
            epochs: t.epochs,
            batch_size: t.batch_size,
        }
    }
}

fn parse_table(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>()
        .map_err(|e| Error::config("<file>", e.to_string().trim().to_string()))
}

/// Sets the dotted `key` to `value`, read as a TOML value when it parses as
/// one and as a string otherwise.
pub fn apply_override(table: &mut toml::Table, key: &str, value: &str) -> Result<()> {
    let parsed = format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Error::config(key, "empty key"))?;
    let mut node = table;
    for part in parts {
        node = node
            .entry(part)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::config(key, format!("`{part}` is not a section")))?;
    }
    node.insert(last.to_string(), parsed);
    Ok(())
}

impl ExperimentConfig {
    /// Parses `text` (possibly empty) and applies `(key, value)` overrides.
    pub fn from_toml(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table = parse_table(text)?;
        for (k, v) in overrides {
            apply_override(&mut table, k, v)?;
        }
        let cfg: Self = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string().trim().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    pub fn ofdm_config(&self) -> Result<OfdmConfig> {
        let o = &self.ofdm;
        OfdmConfig::new(o.fft_size, o.pilot_spacing, o.null_count, o.cp_len)
            .map_err(|e| Error::config("ofdm", e.to_string()))
    }

    pub fn bit_interleaver(&self) -> Result<BlockInterleaver> {
        BlockInterleaver::new(self.ofdm.interleaver_rows, self.ofdm.interleaver_cols)
            .map_err(|e| Error::config("ofdm.interleaver_rows", e.to_string()))
    }

    pub fn time_interleaver(&self) -> Result<Option<BlockInterleaver>> {
        let r = &self.receiver;
        if !r.time_interleaver {
            return Ok(None);
        }
        BlockInterleaver::new(r.time_interleaver_rows, r.time_interleaver_cols)
            .map(Some)
            .map_err(|e| Error::config("receiver.time_interleaver_rows", e.to_string()))
    }

    pub fn channel_profile(&self) -> Option<ChannelProfile> {
        let c = &self.channel;
        c.multipath.then(|| {
            let per_ms = c.sample_rate_hz / 1000.0;
            ChannelProfile {
                paths: c.paths,
                mean_arrival: c.mean_arrival_ms * per_ms,
                decay: c.decay_ms * per_ms,
                max_attempts: c.max_attempts,
            }
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            eta: self.train.eta,
            lambda: self.train.lambda,
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ofdm = self.ofdm_config()?;
        let coded = 2 * ofdm.data.len();
        if message_len(coded).is_none_or(|m| m == 0) {
            return Err(Error::config("ofdm.null_count", "too few data carriers for one coded block"));
        }
        if self.bit_interleaver()?.capacity() < coded {
            return Err(Error::config(
                "ofdm.interleaver_rows",
                format!("interleaver holds fewer than the {coded} coded bits per symbol"),
            ));
        }
        if let Some(il) = self.time_interleaver()? {
            if il.capacity() < self.ofdm.fft_size {
                return Err(Error::config(
                    "receiver.time_interleaver_rows",
                    format!("interleaver holds fewer than the {} samples per symbol", self.ofdm.fft_size),
                ));
            }
        }
        let c = &self.channel;
        if c.multipath {
            if c.paths == 0 {
                return Err(Error::config("channel.paths", "must be positive"));
            }
            for (key, v) in [
                ("channel.sample_rate_hz", c.sample_rate_hz),
                ("channel.mean_arrival_ms", c.mean_arrival_ms),
                ("channel.decay_ms", c.decay_ms),
            ] {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::config(key, format!("{v} must be positive")));
                }
            }
        }
        crate::harness::link::NoiseScenario::from_config(self)?;
        if self.sweep.ebn0_db.is_empty() {
            return Err(Error::config("sweep.ebn0_db", "grid is empty"));
        }
        if self.sweep.ebn0_db.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("sweep.ebn0_db", "values must be finite"));
        }
        if self.sweep.min_errors == 0 || self.sweep.max_bits == 0 {
            return Err(Error::config("sweep.max_bits", "trial budget must be positive"));
        }
        if self.sweep.batch_trials == 0 {
            return Err(Error::config("sweep.batch_trials", "must be positive"));
        }
        if self.detectors.policies.is_empty() {
            return Err(Error::config("detectors.policies", "at least one policy is required"));
        }
        for p in &self.detectors.policies {
            if !POLICY_NAMES.contains(&p.as_str()) {
                return Err(Error::config(
                    "detectors.policies",
                    format!("unknown policy `{p}`, expected one of {POLICY_NAMES:?}"),
                ));
            }
        }
        let p_fa = self.detectors.p_fa;
        if !(p_fa > 0.0 && p_fa < 1.0) {
            return Err(Error::config("detectors.p_fa", format!("{p_fa} not in (0, 1)")));
        }
        let t = self.detectors.dnn_threshold;
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::config("detectors.dnn_threshold", format!("{t} not in (0, 1)")));
        }
        let d = &self.dataset;
        for (key, grid) in [
            ("dataset.ebn0_db", &d.ebn0_db),
            ("dataset.sir_db", &d.sir_db),
            ("dataset.epsilon", &d.epsilon),
        ] {
            if grid.is_empty() || grid.iter().any(|v| !v.is_finite()) {
                return Err(Error::config(key, "grid must be non-empty and finite"));
            }
        }
        if d.epsilon.iter().any(|&e| !(0.0..=1.0).contains(&e)) {
            return Err(Error::config("dataset.epsilon", "values must lie in [0, 1]"));
        }
        self.train_config()
            .validate()
            .map_err(|e| Error::config("train", e.to_string()))?;
        Ok(())
    }
}
