//! Labeled detector training sets.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::dnn::{self, Trained, DEFAULT_LAYERS};
use crate::error::{check_len, Error, Result};
use crate::features::block_features;
use crate::harness::config::ExperimentConfig;
use crate::harness::link::{received_block, Link, NoiseScenario};
use crate::harness::{split_commented, write_metadata};
use crate::rng::{substream, Domain};

pub const DATASET_HEADER: &str = "x1,x2,x3,label";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<[f64; 3]>,
    pub labels: Vec<u8>,
    pub half_width: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn impulse_rate(&self) -> f64 {
        self.labels.iter().map(|&l| l as f64).sum::<f64>() / self.len().max(1) as f64
    }
}

/// Bernoulli-Gaussian received symbols, each at an operating point drawn
/// uniformly from the dataset grids. Features are computed per symbol on
/// the `N` samples left after prefix removal; all rows are then shuffled.
pub fn generate_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let link = Link::from_config(cfg)?;
    let d = &cfg.dataset;
    let per_symbol: Vec<(Vec<[f64; 3]>, Vec<u8>)> = (0..d.n_symbols)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(cfg.seed, Domain::Dataset, i as u64);
            let ebn0 = d.ebn0_db[rng.random_range(0..d.ebn0_db.len())];
            let sir = d.sir_db[rng.random_range(0..d.sir_db.len())];
            let epsilon = d.epsilon[rng.random_range(0..d.epsilon.len())];
            let scenario = NoiseScenario::Bg {
                epsilon,
                sir_db: sir,
                burst_len: 1,
            };
            let (rx, noise) = received_block(&link, &scenario, ebn0, &mut rng)?;
            let features = block_features(&rx, d.half_width)?.into_iter().map(|f| f.to_array()).collect();
            let labels = noise.labels.expect("mixture noise is labeled");
            Ok((features, labels))
        })
        .collect::<Result<_>>()?;
    let mut features = Vec::with_capacity(d.n_symbols * cfg.ofdm.fft_size);
    let mut labels = Vec::with_capacity(features.capacity());
    for (f, l) in per_symbol {
        features.extend(f);
        labels.extend(l);
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(&mut substream(cfg.seed, Domain::Shuffle, 0));
    Ok(Dataset {
        features: order.iter().map(|&i| features[i]).collect(),
        labels: order.iter().map(|&i| labels[i]).collect(),
        half_width: d.half_width,
    })
}

pub fn write_dataset(ds: &Dataset, meta: &[(&str, String)]) -> String {
    let mut out = String::with_capacity(64 * ds.len() + 256);
    write_metadata(&mut out, meta);
    write_metadata(&mut out, &[("window", ds.half_width.to_string())]);
    out.push_str(DATASET_HEADER);
    out.push('\n');
    for (f, l) in ds.features.iter().zip(&ds.labels) {
        writeln!(out, "{},{},{},{}", f[0], f[1], f[2], l).unwrap();
    }
    out
}

/// Parses a dataset file. The window half-width comes from its `# window`
/// line, or `default_half_width` when absent.
pub fn parse_dataset(text: &str, default_half_width: usize) -> Result<Dataset> {
    let err = |line: usize, message: String| Error::Parse {
        what: "dataset",
        line,
        message,
    };
    let (meta, lines) = split_commented(text);
    let half_width = match meta.iter().find(|(k, _)| k == "window") {
        Some((_, v)) => v.parse().map_err(|_| err(0, format!("bad window `{v}`")))?,
        None => default_half_width,
    };
    let mut rows = lines.into_iter();
    match rows.next() {
        Some((_, h)) if h == DATASET_HEADER => {}
        Some((n, h)) => return Err(err(n, format!("expected header `{DATASET_HEADER}`, found `{h}`"))),
        None => return Err(err(0, "missing header".into())),
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (n, line) in rows {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(err(n, format!("expected 4 fields, found {}", fields.len())));
        }
        let mut x = [0.0; 3];
        for (xi, s) in x.iter_mut().zip(&fields) {
            *xi = s.trim().parse().map_err(|_| err(n, format!("bad number `{s}`")))?;
        }
        let label = match fields[3].trim() {
            "0" => 0,
            "1" => 1,
            other => return Err(err(n, format!("label `{other}` is not 0 or 1"))),
        };
        features.push(x);
        labels.push(label);
    }
    Ok(Dataset {
        features,
        labels,
        half_width,
    })
}

/// Trains the detector network on a dataset with the configured
/// hyperparameters.
pub fn train_detector(cfg: &ExperimentConfig, ds: &Dataset) -> Result<Trained> {
    check_len(ds.features.len(), ds.labels.len())?;
    dnn::train(&DEFAULT_LAYERS, ds.half_width, &ds.features, &ds.labels, &cfg.train_config())
}
