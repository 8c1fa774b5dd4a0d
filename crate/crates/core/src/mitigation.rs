//! Memoryless impulse suppressors and the detectors that drive them.

use num_complex::Complex64;

use crate::dnn::{classify_at, MlpParams};
use crate::error::{check_len, Error, Result};
pub use crate::features::robust_power;
use crate::features::block_features;

/// False-alarm probability of the classic threshold detectors.
pub const DEFAULT_P_FA: f64 = 0.01;

/// Zeroes every flagged sample.
pub fn blank(samples: &[Complex64], mask: &[u8]) -> Result<Vec<Complex64>> {
    check_len(samples.len(), mask.len())?;
    Ok(samples
        .iter()
        .zip(mask)
        .map(|(&r, &m)| if m == 0 { r } else { Complex64::new(0.0, 0.0) })
        .collect())
}

/// Clamps the magnitude of flagged samples to `level`, keeping their phase.
pub fn clip(samples: &[Complex64], mask: &[u8], level: f64) -> Result<Vec<Complex64>> {
    check_len(samples.len(), mask.len())?;
    if !(level > 0.0) {
        return Err(Error::invalid("clip_level", format!("{level} must be positive")));
    }
    Ok(samples
        .iter()
        .zip(mask)
        .map(|(&r, &m)| {
            let mag = r.norm();
            if m == 0 || mag <= level {
                r
            } else {
                r * (level / mag)
            }
        })
        .collect())
}

/// Envelope threshold with false-alarm probability `p_fa` for a circular
/// Gaussian signal of total power `sigma2`.
pub fn np_threshold(sigma2: f64, p_fa: f64) -> Result<f64> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::invalid("sigma2", format!("{sigma2} must be positive")));
    }
    if !(p_fa > 0.0 && p_fa < 1.0) {
        return Err(Error::invalid("p_fa", format!("{p_fa} not in (0, 1)")));
    }
    Ok((-sigma2 * p_fa.ln()).sqrt())
}

pub fn threshold_detect(samples: &[Complex64], threshold: f64) -> Vec<u8> {
    samples.iter().map(|r| u8::from(r.norm() > threshold)).collect()
}

#[derive(Debug, Clone)]
pub enum Detector {
    /// Network output compared against `threshold` (0.5 by default).
    Dnn { model: Box<MlpParams>, threshold: f64 },
    Threshold(f64),
    /// Threshold from the block's robust power estimate.
    NeymanPearson { p_fa: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClipLevel {
    Fixed(f64),
    /// Clip to the detector's threshold; falls back to the Neyman-Pearson
    /// threshold of the block when the detector has none.
    AtThreshold,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Suppressor {
    Blank,
    Clip(ClipLevel),
}

#[derive(Debug, Clone)]
pub struct MitigationPolicy {
    pub name: String,
    pub detector: Detector,
    pub suppressor: Suppressor,
}

#[derive(Debug, Clone)]
pub struct Detection {
    pub mask: Vec<u8>,
    pub threshold: Option<f64>,
}

impl Detector {
    /// Network detector at the default decision threshold.
    pub fn dnn(model: MlpParams) -> Self {
        Detector::Dnn {
            model: Box::new(model),
            threshold: crate::dnn::DECISION_THRESHOLD,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Detector::Dnn { threshold, .. } if !(threshold > 0.0 && threshold < 1.0) => {
                Err(Error::invalid("threshold", format!("{threshold} not in (0, 1)")))
            }
            Detector::Threshold(t) if !(t > 0.0) => Err(Error::invalid("threshold", format!("{t} must be positive"))),
            Detector::NeymanPearson { p_fa } if !(p_fa > 0.0 && p_fa < 1.0) => {
                Err(Error::invalid("p_fa", format!("{p_fa} not in (0, 1)")))
            }
            _ => Ok(()),
        }
    }

    pub fn detect(&self, samples: &[Complex64]) -> Result<Detection> {
        self.validate()?;
        match self {
            Detector::Dnn { model, threshold } => {
                let features = block_features(samples, model.half_width)?;
                Ok(Detection {
                    mask: classify_at(model, &features, *threshold),
                    threshold: None,
                })
            }
            &Detector::Threshold(t) => Ok(Detection {
                mask: threshold_detect(samples, t),
                threshold: Some(t),
            }),
            &Detector::NeymanPearson { p_fa } => {
                let t = block_threshold(samples, p_fa)?;
                Ok(Detection {
                    mask: threshold_detect(samples, t),
                    threshold: Some(t),
                })
            }
        }
    }
}

fn block_threshold(samples: &[Complex64], p_fa: f64) -> Result<f64> {
    let power = robust_power(samples)?;
    if power > 0.0 {
        np_threshold(power, p_fa)
    } else {
        // More than half the block is exactly zero; only nonzero samples can
        // be flagged.
        Ok(f64::MIN_POSITIVE)
    }
}

impl MitigationPolicy {
    pub fn new(name: impl Into<String>, detector: Detector, suppressor: Suppressor) -> Result<Self> {
        detector.validate()?;
        if let Suppressor::Clip(ClipLevel::Fixed(level)) = suppressor {
            if !(level > 0.0) {
                return Err(Error::invalid("clip_level", format!("{level} must be positive")));
            }
        }
        Ok(Self {
            name: name.into(),
            detector,
            suppressor,
        })
    }

    /// Leaves the samples untouched.
    pub fn none() -> Self {
        Self {
            name: "none".into(),
            detector: Detector::Threshold(f64::INFINITY),
            suppressor: Suppressor::Blank,
        }
    }

    pub fn mitigate(&self, samples: &[Complex64]) -> Result<Vec<Complex64>> {
        Ok(self.mitigate_with_mask(samples)?.0)
    }

    pub fn mitigate_with_mask(&self, samples: &[Complex64]) -> Result<(Vec<Complex64>, Vec<u8>)> {
        let det = self.detector.detect(samples)?;
        let out = match self.suppressor {
            Suppressor::Blank => blank(samples, &det.mask)?,
            Suppressor::Clip(ClipLevel::Fixed(level)) => clip(samples, &det.mask, level)?,
            Suppressor::Clip(ClipLevel::AtThreshold) => {
                let level = match det.threshold {
                    Some(t) if t.is_finite() => t,
                    Some(_) => return Ok((samples.to_vec(), det.mask)),
                    None => block_threshold(samples, DEFAULT_P_FA)?,
                };
                clip(samples, &det.mask, level)?
            }
        };
        Ok((out, det.mask))
    }
}
