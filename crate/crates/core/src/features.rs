//! Per-sample detector inputs over a sliding `2n + 1` window: magnitude,
//! rank-ordered absolute differences (ROAD) and median deviation.
//!
//! The median deviation is taken on magnitudes because complex samples have
//! no ordering; the detector input is its absolute value.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const DEFAULT_HALF_WIDTH: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub magnitude: f64,
    pub road: f64,
    pub median_deviation: f64,
}

impl FeatureVector {
    pub fn to_array(self) -> [f64; 3] {
        [self.magnitude, self.road, self.median_deviation]
    }

    pub fn from_array(x: [f64; 3]) -> Self {
        Self {
            magnitude: x[0],
            road: x[1],
            median_deviation: x[2],
        }
    }
}

fn half_width(len: usize) -> Result<usize> {
    if len % 2 == 1 {
        Ok(len / 2)
    } else {
        Err(Error::invalid("window", format!("length {len} is not 2n + 1")))
    }
}

/// Sum of the `n` smallest distances `|r_k - r_j|` from the centre sample to
/// the other `2n` samples of the window.
pub fn road(window: &[Complex64]) -> Result<f64> {
    let n = half_width(window.len())?;
    let centre = window[n];
    let mut d: Vec<f64> = window
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != n)
        .map(|(_, r)| (centre - r).norm())
        .collect();
    Ok(sum_smallest(&mut d, n))
}

fn sum_smallest(d: &mut [f64], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    if n < d.len() {
        d.select_nth_unstable_by(n - 1, f64::total_cmp);
    }
    d[..n].iter().sum()
}

/// `|r_k| - median(|r_{k-n}|, ..., |r_{k+n}|)`.
pub fn median_deviation(window: &[Complex64]) -> Result<f64> {
    let n = half_width(window.len())?;
    let mut mags: Vec<f64> = window.iter().map(|r| r.norm()).collect();
    let centre = mags[n];
    Ok(centre - median_in_place(&mut mags))
}

fn median_in_place(values: &mut [f64]) -> f64 {
    let mid = values.len() / 2;
    *values.select_nth_unstable_by(mid, f64::total_cmp).1
}

/// Symmetric reflection of `i` into `0..len`, edge samples repeated.
fn reflect(i: isize, len: usize) -> usize {
    let period = 2 * len as isize;
    let m = i.rem_euclid(period) as usize;
    if m < len {
        m
    } else {
        2 * len - 1 - m
    }
}

/// One feature vector per sample, windows padded by reflection at the block
/// edges.
pub fn extract_features(samples: &[Complex64], n: usize) -> Vec<FeatureVector> {
    let len = samples.len();
    let mags: Vec<f64> = samples.iter().map(|r| r.norm()).collect();
    let mut window = Vec::with_capacity(2 * n + 1);
    let mut diffs = Vec::with_capacity(2 * n);
    let mut mag_window = Vec::with_capacity(2 * n + 1);
    (0..len)
        .map(|k| {
            window.clear();
            mag_window.clear();
            for off in -(n as isize)..=(n as isize) {
                let j = reflect(k as isize + off, len);
                window.push(samples[j]);
                mag_window.push(mags[j]);
            }
            let centre = samples[k];
            diffs.clear();
            diffs.extend(
                window
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != n)
                    .map(|(_, r)| (centre - r).norm()),
            );
            let road = sum_smallest(&mut diffs, n);
            let median = median_in_place(&mut mag_window);
            FeatureVector {
                magnitude: mags[k],
                road,
                median_deviation: (mags[k] - median).abs(),
            }
        })
        .collect()
}

/// Clean-signal power from the median envelope: for a Rayleigh envelope of
/// power `s`, `median(|r|^2) = s ln 2`.
pub fn robust_power(samples: &[Complex64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("samples", "empty block"));
    }
    let mut p: Vec<f64> = samples.iter().map(|r| r.norm_sqr()).collect();
    let mid = p.len() / 2;
    let median = *p.select_nth_unstable_by(mid, f64::total_cmp).1;
    Ok(median / std::f64::consts::LN_2)
}

/// Scales a received block to unit robust power. A block with zero robust
/// power is returned unchanged.
pub fn gain_normalize(samples: &[Complex64]) -> Result<Vec<Complex64>> {
    let power = robust_power(samples)?;
    let g = if power > 0.0 { power.sqrt().recip() } else { 1.0 };
    Ok(samples.iter().map(|r| r * g).collect())
}

/// Detector input for one received block: features of the gain-normalized
/// samples, so a fixed network sees the same amplitude scale whatever the
/// channel gain and noise level.
pub fn block_features(samples: &[Complex64], n: usize) -> Result<Vec<FeatureVector>> {
    Ok(extract_features(&gain_normalize(samples)?, n))
}

/// Per-feature z-score normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalizer {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

pub const STD_FLOOR: f64 = 1e-12;

impl Normalizer {
    pub fn identity() -> Self {
        Self {
            mean: [0.0; 3],
            std: [1.0; 3],
        }
    }

    /// Population mean and standard deviation; an empty set gives the
    /// identity.
    pub fn fit<'a>(features: impl IntoIterator<Item = &'a [f64; 3]>) -> Self {
        let mut count = 0usize;
        let mut mean = [0.0; 3];
        let mut m2 = [0.0; 3];
        // Welford
        for x in features {
            count += 1;
            for i in 0..3 {
                let delta = x[i] - mean[i];
                mean[i] += delta / count as f64;
                m2[i] += delta * (x[i] - mean[i]);
            }
        }
        if count == 0 {
            return Self::identity();
        }
        let std = m2.map(|v| (v / count as f64).sqrt().max(STD_FLOOR));
        Self { mean, std }
    }

    pub fn apply(&self, x: [f64; 3]) -> [f64; 3] {
        [0, 1, 2].map(|i| (x[i] - self.mean[i]) / self.std[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::complex_gaussian;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn block_features_are_scale_invariant() {
        let mut rng = seeded(31);
        let x: Vec<Complex64> = (0..4096).map(|_| complex_gaussian(&mut rng, 2.5)).collect();
        let unit = gain_normalize(&x).unwrap();
        assert!((robust_power(&unit).unwrap() - 1.0).abs() < 1e-12);
        let scaled: Vec<Complex64> = x.iter().map(|r| r * Complex64::new(0.0, 7.0)).collect();
        for (a, b) in block_features(&x, 5).unwrap().iter().zip(block_features(&scaled, 5).unwrap()) {
            for (u, v) in a.to_array().iter().zip(b.to_array()) {
                assert!((u - v).abs() <= 1e-12 * u.abs().max(1.0));
            }
        }
        let zeros = vec![Complex64::new(0.0, 0.0); 8];
        assert_eq!(gain_normalize(&zeros).unwrap(), zeros);
        assert!(block_features(&[], 5).is_err());
    }

    fn real(xs: &[f64]) -> Vec<Complex64> {
        xs.iter().map(|&x| Complex64::new(x, 0.0)).collect()
    }

    fn brute_road(window: &[Complex64]) -> f64 {
        let n = window.len() / 2;
        let mut d: Vec<f64> = (0..window.len())
            .filter(|&j| j != n)
            .map(|j| (window[n] - window[j]).norm())
            .collect();
        d.sort_by(f64::total_cmp);
        d[..n].iter().sum()
    }

    #[test]
    fn road_examples() {
        assert_eq!(road(&real(&[3.0; 11])).unwrap(), 0.0);
        // differences 9, 8, 8, 9 -> 8 + 8
        assert_eq!(road(&real(&[1.0, 2.0, 10.0, 2.0, 1.0])).unwrap(), 16.0);
        assert!(road(&real(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn road_matches_brute_force() {
        let mut rng = seeded(1);
        for _ in 0..10_000 {
            let n = rng.random_range(1..8);
            let w: Vec<Complex64> = (0..2 * n + 1).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
            assert_eq!(road(&w).unwrap(), brute_road(&w));
        }
    }

    #[test]
    fn median_deviation_examples() {
        assert_eq!(median_deviation(&real(&[2.0; 5])).unwrap(), 0.0);
        assert_eq!(median_deviation(&real(&[1.0, 1.0, 9.0, 1.0, 1.0])).unwrap(), 8.0);
        assert_eq!(median_deviation(&real(&[1.0, 2.0, 3.0, 4.0, 5.0])).unwrap(), 0.0);
        assert!(median_deviation(&real(&[1.0; 4])).is_err());
    }

    #[test]
    fn single_sample_block() {
        let f = extract_features(&[Complex64::new(0.3, -0.4)], 5);
        assert_eq!(f.len(), 1);
        assert!((f[0].magnitude - 0.5).abs() < 1e-15);
        assert_eq!(f[0].road, 0.0);
        assert_eq!(f[0].median_deviation, 0.0);
    }

    #[test]
    fn interior_features_match_window_functions() {
        let mut rng = seeded(2);
        let x: Vec<Complex64> = (0..200).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let f = extract_features(&x, 5);
        assert_eq!(f.len(), x.len());
        for k in 5..195 {
            let w = &x[k - 5..=k + 5];
            assert_eq!(f[k].road, road(w).unwrap());
            assert_eq!(f[k].median_deviation, median_deviation(w).unwrap().abs());
        }
    }

    #[test]
    fn reflection_padding() {
        assert_eq!(reflect(-1, 5), 0);
        assert_eq!(reflect(-2, 5), 1);
        assert_eq!(reflect(5, 5), 4);
        assert_eq!(reflect(6, 5), 3);
        assert_eq!(reflect(-3, 1), 0);
        assert_eq!(reflect(4, 2), 0);
    }

    #[test]
    fn locality() {
        let mut rng = seeded(3);
        let x: Vec<Complex64> = (0..100).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let base = extract_features(&x, 5);
        let mut y = x.clone();
        y[50] += Complex64::new(7.0, 0.0);
        let moved = extract_features(&y, 5);
        for k in 0..100usize {
            if k.abs_diff(50usize) > 5 {
                assert_eq!(base[k], moved[k]);
            }
        }
        assert_ne!(base[50], moved[50]);
    }

    #[test]
    fn impulse_stands_out_from_clean_samples() {
        let mut rng = seeded(4);
        let n = 1_000_000;
        let mut x: Vec<Complex64> = (0..n).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let clean = extract_features(&x, 5);
        let pct = |mut v: Vec<f64>| {
            let k = (0.999 * v.len() as f64) as usize;
            *v.select_nth_unstable_by(k, f64::total_cmp).1
        };
        let road_999 = pct(clean.iter().map(|f| f.road).collect());
        let med_999 = pct(clean.iter().map(|f| f.median_deviation).collect());
        x[n / 2] += Complex64::from_polar(20.0, 0.7);
        let f = extract_features(&x[n / 2 - 5..=n / 2 + 5], 5)[5];
        assert!(f.road > road_999);
        assert!(f.median_deviation > med_999);
    }

    #[test]
    fn normalizer_standardizes() {
        let mut rng = seeded(5);
        let data: Vec<[f64; 3]> = (0..5000)
            .map(|_| [rng.random::<f64>() * 3.0, rng.random::<f64>() + 10.0, rng.random::<f64>() * 0.01])
            .collect();
        let norm = Normalizer::fit(&data);
        let z: Vec<[f64; 3]> = data.iter().map(|&x| norm.apply(x)).collect();
        let refit = Normalizer::fit(&z);
        for i in 0..3 {
            assert!(refit.mean[i].abs() < 1e-10);
            assert!((refit.std[i] - 1.0).abs() < 1e-10);
        }
        let doubled: Vec<[f64; 3]> = data.iter().chain(&data).copied().collect();
        let norm2 = Normalizer::fit(&doubled);
        for i in 0..3 {
            assert!((norm2.mean[i] - norm.mean[i]).abs() < 1e-12);
            assert!((norm2.std[i] - norm.std[i]).abs() < 1e-12);
        }
        assert_eq!(Normalizer::identity().apply([1.0, -2.0, 3.5]), [1.0, -2.0, 3.5]);
        let constant = Normalizer::fit(&[[1.0, 1.0, 1.0]; 4]);
        assert_eq!(constant.std, [STD_FLOOR; 3]);
    }

    proptest! {
        #[test]
        fn translation_and_scale(seed in any::<u64>(), shift_re in -5.0f64..5.0, shift_im in -5.0f64..5.0, scale in 0.01f64..100.0) {
            let mut rng = seeded(seed);
            let w: Vec<Complex64> = (0..11).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
            let shift = Complex64::new(shift_re, shift_im);
            let shifted: Vec<Complex64> = w.iter().map(|r| r + shift).collect();
            let r0 = road(&w).unwrap();
            prop_assert!((road(&shifted).unwrap() - r0).abs() <= 1e-9 * (1.0 + r0 + shift.norm()));
            let scaled: Vec<Complex64> = w.iter().map(|r| r * scale).collect();
            prop_assert!((road(&scaled).unwrap() - scale * r0).abs() <= 1e-12 * scale * (1.0 + r0));
            let m0 = median_deviation(&w).unwrap();
            prop_assert!((median_deviation(&scaled).unwrap() - scale * m0).abs() <= 1e-12 * scale * (1.0 + m0.abs()));
        }
    }
}
