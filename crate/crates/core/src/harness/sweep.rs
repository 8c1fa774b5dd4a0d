//! Monte Carlo BER sweeps with common random numbers.
//!
//! Trial `t` draws everything from the substream `(seed, Sweep, t)` at every
//! Eb/N0 point, and all policies decode the same received samples, so
//! curves are paired both across policies and across the Eb/N0 grid.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::dnn::MlpParams;
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::link::{run_link_once, Link, NoiseScenario};
use crate::harness::{metadata, split_commented, write_metadata};
use crate::mitigation::{ClipLevel, Detector, MitigationPolicy, Suppressor};
use crate::rng::{substream, Domain};

pub const CURVE_HEADER: &str = "ebn0_db,detector,ber,bits,errors";

#[derive(Debug, Clone, PartialEq)]
pub struct BerPoint {
    pub ebn0_db: f64,
    pub ber: f64,
    pub bits: u64,
    pub errors: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerCurve {
    pub detector: String,
    pub points: Vec<BerPoint>,
}

/// Builds the named policies. `dnn-blank` needs a model.
pub fn build_policies(cfg: &ExperimentConfig, model: Option<&MlpParams>) -> Result<Vec<MitigationPolicy>> {
    let np = Detector::NeymanPearson {
        p_fa: cfg.detectors.p_fa,
    };
    cfg.detectors
        .policies
        .iter()
        .map(|name| match name.as_str() {
            "none" => Ok(MitigationPolicy::none()),
            "dnn-blank" => {
                let model = model.ok_or_else(|| Error::config("detectors.model", "policy `dnn-blank` needs a trained model"))?;
                MitigationPolicy::new(name.clone(), Detector::Dnn {
                        model: Box::new(model.clone()),
                        threshold: cfg.detectors.dnn_threshold,
                    }, Suppressor::Blank)
            }
            "np-blank" => MitigationPolicy::new(name.clone(), np.clone(), Suppressor::Blank),
            "np-clip" => MitigationPolicy::new(name.clone(), np.clone(), Suppressor::Clip(ClipLevel::AtThreshold)),
            other => Err(Error::config("detectors.policies", format!("unknown policy `{other}`"))),
        })
        .collect()
}

/// Simulates every Eb/N0 point of the configured grid until each policy has
/// `min_errors` bit errors and at least `min_bits` bits have been sent, or
/// `max_bits` bits have been sent. Trials run in
/// parallel in fixed-size batches and are aggregated in trial order.
pub fn ber_sweep(cfg: &ExperimentConfig, policies: &[MitigationPolicy]) -> Result<Vec<BerCurve>> {
    Ok(ber_sweep_with_spread(cfg, policies)?.into_iter().map(|(c, _)| c).collect())
}

/// [`ber_sweep`] plus, per curve and point, the standard error of the BER
/// estimated from the spread of per-symbol error counts. Errors cluster
/// within symbols, so this is wider than the binomial error.
pub fn ber_sweep_with_spread(cfg: &ExperimentConfig, policies: &[MitigationPolicy]) -> Result<Vec<(BerCurve, Vec<f64>)>> {
    if policies.is_empty() {
        return Err(Error::config("detectors.policies", "at least one policy is required"));
    }
    let link = Link::from_config(cfg)?;
    let scenario = NoiseScenario::from_config(cfg)?;
    let mut curves: Vec<(BerCurve, Vec<f64>)> = policies
        .iter()
        .map(|p| {
            let curve = BerCurve {
                detector: p.name.clone(),
                points: Vec::new(),
            };
            (curve, Vec::new())
        })
        .collect();
    let mut grid = cfg.sweep.ebn0_db.clone();
    grid.sort_by(f64::total_cmp);
    let bits_per_trial = link.message_len() as u64;
    let batch = cfg.sweep.batch_trials as u64;
    for &ebn0 in &grid {
        let mut errors = vec![0u64; policies.len()];
        let mut squares = vec![0f64; policies.len()];
        let mut bits = 0u64;
        let mut next_trial = 0u64;
        while bits < cfg.sweep.max_bits
            && (bits < cfg.sweep.min_bits || errors.iter().any(|&e| e < cfg.sweep.min_errors))
        {
            let outcomes: Vec<Vec<u64>> = (next_trial..next_trial + batch)
                .into_par_iter()
                .map(|t| {
                    let mut rng = substream(cfg.seed, Domain::Sweep, t);
                    let out = run_link_once(&link, &scenario, ebn0, policies, &mut rng)?;
                    Ok((0..policies.len()).map(|p| out.errors(p)).collect())
                })
                .collect::<Result<_>>()?;
            for trial in outcomes {
                for (p, e) in trial.into_iter().enumerate() {
                    errors[p] += e;
                    squares[p] += (e * e) as f64;
                }
            }
            bits += batch * bits_per_trial;
            next_trial += batch;
        }
        let trials = next_trial as f64;
        for ((curve, spread), (&e, &sq)) in curves.iter_mut().zip(errors.iter().zip(&squares)) {
            let mean = e as f64 / trials;
            let var = if trials > 1.0 { (sq / trials - mean * mean).max(0.0) * trials / (trials - 1.0) } else { 0.0 };
            spread.push((var / trials).sqrt() / bits_per_trial as f64);
            curve.points.push(BerPoint {
                ebn0_db: ebn0,
                ber: e as f64 / bits as f64,
                bits,
                errors: e,
            });
        }
    }
    Ok(curves)
}

/// Metadata lines for curve files of a sweep.
pub fn curve_metadata(cfg: &ExperimentConfig) -> Result<Vec<(&'static str, String)>> {
    let mut meta = metadata(cfg);
    meta.push(("noise", NoiseScenario::from_config(cfg)?.describe()));
    meta.push(("csi", if cfg.receiver.perfect_csi { "perfect" } else { "estimated" }.into()));
    meta.push(("time-interleaver", cfg.receiver.time_interleaver.to_string()));
    Ok(meta)
}

pub fn write_curve(curve: &BerCurve, meta: &[(&str, String)]) -> String {
    let mut out = String::new();
    write_metadata(&mut out, meta);
    out.push_str(CURVE_HEADER);
    out.push('\n');
    for p in &curve.points {
        writeln!(out, "{},{},{:.6e},{},{}", p.ebn0_db, curve.detector, p.ber, p.bits, p.errors).unwrap();
    }
    out
}

/// Parses a curve file; all rows must name the same detector.
pub fn parse_curve(text: &str) -> Result<(BerCurve, Vec<(String, String)>)> {
    let err = |line: usize, message: String| Error::Parse {
        what: "curve",
        line,
        message,
    };
    let (meta, lines) = split_commented(text);
    let mut rows = lines.into_iter();
    match rows.next() {
        Some((_, h)) if h == CURVE_HEADER => {}
        Some((n, h)) => return Err(err(n, format!("expected header `{CURVE_HEADER}`, found `{h}`"))),
        None => return Err(err(0, "missing header".into())),
    }
    let mut detector: Option<String> = None;
    let mut points = Vec::new();
    for (n, line) in rows {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(err(n, format!("expected 5 fields, found {}", f.len())));
        }
        match &detector {
            Some(d) if d != f[1] => return Err(err(n, format!("detector `{}` differs from `{d}`", f[1]))),
            Some(_) => {}
            None => detector = Some(f[1].to_string()),
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| err(n, format!("bad number `{s}`")));
        let int = |s: &str| s.parse::<u64>().map_err(|_| err(n, format!("bad count `{s}`")));
        points.push(BerPoint {
            ebn0_db: num(f[0])?,
            ber: num(f[2])?,
            bits: int(f[3])?,
            errors: int(f[4])?,
        });
    }
    let detector = detector.ok_or_else(|| err(0, "no data rows".into()))?;
    Ok((BerCurve { detector, points }, meta))
}

/// Wide table `ebn0_db,<detector>...` over the union of Eb/N0 values; a
/// detector without a point at some Eb/N0 leaves the cell empty.
pub fn plot_table(curves: &[BerCurve], meta: &[(&str, String)]) -> String {
    let mut grid: Vec<f64> = curves.iter().flat_map(|c| c.points.iter().map(|p| p.ebn0_db)).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut out = String::new();
    write_metadata(&mut out, meta);
    out.push_str("ebn0_db");
    for c in curves {
        out.push(',');
        out.push_str(&c.detector);
    }
    out.push('\n');
    for x in grid {
        write!(out, "{x}").unwrap();
        for c in curves {
            out.push(',');
            if let Some(p) = c.points.iter().find(|p| p.ebn0_db == x) {
                write!(out, "{:.6e}", p.ber).unwrap();
            }
        }
        out.push('\n');
    }
    out
}

/// Eb/N0 at which the curve first falls to `target`, interpolating
/// linearly in `log10(BER)` between grid points.
pub fn ebn0_at_ber(curve: &BerCurve, target: f64) -> Option<f64> {
    let pts: Vec<&BerPoint> = curve.points.iter().collect();
    if let Some(first) = pts.first() {
        if first.ber <= target {
            return (first.ber == target).then_some(first.ebn0_db);
        }
    }
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.ber > target && b.ber <= target {
            if b.ber == 0.0 {
                return None;
            }
            let (la, lb, lt) = (a.ber.log10(), b.ber.log10(), target.log10());
            return Some(a.ebn0_db + (lt - la) / (lb - la) * (b.ebn0_db - a.ebn0_db));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(points: &[(f64, f64)]) -> BerCurve {
        BerCurve {
            detector: "x".into(),
            points: points
                .iter()
                .map(|&(e, b)| BerPoint {
                    ebn0_db: e,
                    ber: b,
                    bits: 1000,
                    errors: (b * 1000.0) as u64,
                })
                .collect(),
        }
    }

    #[test]
    fn interpolation_on_log_axis() {
        let c = curve(&[(0.0, 1e-1), (2.0, 1e-2), (4.0, 1e-4)]);
        assert!((ebn0_at_ber(&c, 1e-3).unwrap() - 3.0).abs() < 1e-12);
        assert!((ebn0_at_ber(&c, 1e-2).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(ebn0_at_ber(&c, 1e-6), None);
        assert_eq!(ebn0_at_ber(&curve(&[(0.0, 1e-4)]), 1e-3), None);
    }

    #[test]
    fn curve_round_trip_and_plot_table() {
        let c = BerCurve {
            detector: "np-blank".into(),
            points: vec![
                BerPoint { ebn0_db: 0.0, ber: 0.25, bits: 400, errors: 100 },
                BerPoint { ebn0_db: 2.5, ber: 0.0, bits: 800, errors: 0 },
            ],
        };
        let text = write_curve(&c, &[("seed", "3".into())]);
        assert_eq!(
            text,
            "# seed 3\nebn0_db,detector,ber,bits,errors\n0,np-blank,2.500000e-1,400,100\n2.5,np-blank,0.000000e0,800,0\n"
        );
        let (back, meta) = parse_curve(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(meta, vec![("seed".to_string(), "3".to_string())]);
        let other = BerCurve {
            detector: "none".into(),
            points: vec![BerPoint { ebn0_db: 2.5, ber: 0.5, bits: 2, errors: 1 }],
        };
        let table = plot_table(&[c, other], &[]);
        assert_eq!(table, "ebn0_db,np-blank,none\n0,2.500000e-1,\n2.5,0.000000e0,5.000000e-1\n");
        assert!(parse_curve("ebn0_db,detector,ber,bits,errors\n0,a,0.1,10,1\n0,b,0.1,10,1\n").is_err());
    }
}
