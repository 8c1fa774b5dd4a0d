//! Detector accuracy on labeled received blocks.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::link::{received_block, Link, NoiseScenario};
use crate::harness::write_metadata;
use crate::mitigation::Detector;
use crate::rng::{substream, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DetectionCounts {
    pub samples: u64,
    pub impulses: u64,
    pub hits: u64,
    pub false_alarms: u64,
}

impl DetectionCounts {
    pub fn add(&mut self, mask: &[u8], labels: &[u8]) {
        for (&m, &l) in mask.iter().zip(labels) {
            self.samples += 1;
            self.impulses += u64::from(l);
            self.hits += u64::from(m & l);
            self.false_alarms += u64::from(m & (1 - l));
        }
    }

    pub fn accuracy(&self) -> f64 {
        let misses = self.impulses - self.hits;
        1.0 - (misses + self.false_alarms) as f64 / self.samples as f64
    }

    pub fn detection_rate(&self) -> f64 {
        self.hits as f64 / self.impulses as f64
    }

    pub fn false_alarm_rate(&self) -> f64 {
        self.false_alarms as f64 / (self.samples - self.impulses) as f64
    }

    pub fn missed_detection_rate(&self) -> f64 {
        1.0 - self.detection_rate()
    }

    /// Accuracy of always answering "clean".
    pub fn all_clean_accuracy(&self) -> f64 {
        1.0 - self.impulses as f64 / self.samples as f64
    }
}

/// Runs `detector` on `n_symbols` received symbols of the configured noise
/// at `ebn0_db` and tallies it against the ground-truth labels.
pub fn evaluate_detector(
    cfg: &ExperimentConfig,
    detector: &Detector,
    ebn0_db: f64,
    n_symbols: usize,
) -> Result<DetectionCounts> {
    let link = Link::from_config(cfg)?;
    let scenario = NoiseScenario::from_config(cfg)?;
    if matches!(scenario, NoiseScenario::Sas { .. }) {
        return Err(Error::config("noise.model", "alpha-stable noise has no impulse labels"));
    }
    let per_symbol: Vec<DetectionCounts> = (0..n_symbols)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(cfg.seed, Domain::Evaluate, i as u64);
            let (rx, noise) = received_block(&link, &scenario, ebn0_db, &mut rng)?;
            let mask = detector.detect(&rx)?.mask;
            let mut c = DetectionCounts::default();
            c.add(&mask, noise.labels.as_deref().expect("mixture noise is labeled"));
            Ok(c)
        })
        .collect::<Result<_>>()?;
    let mut total = DetectionCounts::default();
    for c in per_symbol {
        total.samples += c.samples;
        total.impulses += c.impulses;
        total.hits += c.hits;
        total.false_alarms += c.false_alarms;
    }
    Ok(total)
}

pub fn write_report(c: &DetectionCounts, meta: &[(&str, String)]) -> String {
    let mut out = String::new();
    write_metadata(&mut out, meta);
    out.push_str("metric,value\n");
    writeln!(out, "samples,{}", c.samples).unwrap();
    writeln!(out, "impulses,{}", c.impulses).unwrap();
    writeln!(out, "accuracy,{:.6}", c.accuracy()).unwrap();
    writeln!(out, "all_clean_accuracy,{:.6}", c.all_clean_accuracy()).unwrap();
    writeln!(out, "detection_rate,{:.6}", c.detection_rate()).unwrap();
    writeln!(out, "false_alarm_rate,{:.6}", c.false_alarm_rate()).unwrap();
    writeln!(out, "missed_detection_rate,{:.6}", c.missed_detection_rate()).unwrap();
    out
}
