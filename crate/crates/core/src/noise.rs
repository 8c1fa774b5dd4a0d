//! Impulsive noise generators.
//!
//! Bernoulli-Gaussian and Middleton class A noise are both finite Gaussian
//! mixtures and come with per-sample ground-truth labels marking draws from
//! an impulse-bearing component. Alpha-stable noise has no mixture structure
//! and is generated without labels.
//!
//! All variances are total complex power `E|n|^2` in linear units.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{Error, Result};

/// Two-component mixture: background AWGN plus, with probability `epsilon`,
/// an independent impulse of variance `sigma_i2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BernoulliGaussian {
    epsilon: f64,
    sigma_w2: f64,
    sigma_i2: f64,
}

impl BernoulliGaussian {
    pub fn new(epsilon: f64, sigma_w2: f64, sigma_i2: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::invalid("epsilon", format!("{epsilon} is not in [0, 1]")));
        }
        positive("sigma_w2", sigma_w2)?;
        positive("sigma_i2", sigma_i2)?;
        Ok(Self {
            epsilon,
            sigma_w2,
            sigma_i2,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn sigma_w2(&self) -> f64 {
        self.sigma_w2
    }

    pub fn sigma_i2(&self) -> f64 {
        self.sigma_i2
    }

    /// Mixture weights and component variances.
    pub fn components(&self) -> [(f64, f64); 2] {
        [
            (1.0 - self.epsilon, self.sigma_w2),
            (self.epsilon, self.sigma_w2 + self.sigma_i2),
        ]
    }

    pub fn mean_power(&self) -> f64 {
        self.sigma_w2 + self.epsilon * self.sigma_i2
    }
}

/// Middleton class A noise truncated to its first `terms` Poisson components.
#[derive(Debug, Clone, PartialEq)]
pub struct MiddletonClassA {
    a: f64,
    gamma: f64,
    sigma_n2: f64,
    weights: Vec<f64>,
    variances: Vec<f64>,
    cumulative: Vec<f64>,
}

/// Smallest untruncated Poisson mass accepted for the kept components.
pub const MIN_TRUNCATED_MASS: f64 = 0.999;

impl MiddletonClassA {
    pub const DEFAULT_TERMS: usize = 10;

    pub fn new(a: f64, gamma: f64, sigma_n2: f64, terms: usize) -> Result<Self> {
        positive("A", a)?;
        positive("Gamma", gamma)?;
        positive("sigma_n2", sigma_n2)?;
        if terms == 0 {
            return Err(Error::invalid("terms", "at least one component is required"));
        }
        let (raw, variances): (Vec<f64>, Vec<f64>) = (0..terms)
            .map(|j| mca_component(a, gamma, sigma_n2, j))
            .unzip();
        let mass: f64 = raw.iter().sum();
        if mass < MIN_TRUNCATED_MASS {
            return Err(Error::TruncationMass { mass, a, terms });
        }
        let weights: Vec<f64> = raw.iter().map(|p| p / mass).collect();
        let mut cumulative: Vec<f64> = weights
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            })
            .collect();
        *cumulative.last_mut().expect("terms >= 1") = 1.0;
        Ok(Self {
            a,
            gamma,
            sigma_n2,
            weights,
            variances,
            cumulative,
        })
    }

    pub fn impulsive_index(&self) -> f64 {
        self.a
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn sigma_n2(&self) -> f64 {
        self.sigma_n2
    }

    pub fn terms(&self) -> usize {
        self.weights.len()
    }

    /// Renormalized component probabilities.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn mean_power(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.variances)
            .map(|(p, v)| p * v)
            .sum()
    }

    fn draw_component<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.cumulative.len() - 1)
    }
}

/// Untruncated class A component `j`: Poisson weight `e^-A A^j / j!` and
/// variance `(j/A + Gamma) / (1 + Gamma) * sigma_n2`.
pub fn mca_component(a: f64, gamma: f64, sigma_n2: f64, j: usize) -> (f64, f64) {
    let jf = j as f64;
    let ln_fact: f64 = (2..=j).map(|i| (i as f64).ln()).sum();
    let p = (-a + jf * a.ln() - ln_fact).exp();
    let var = (jf / a + gamma) / (1.0 + gamma) * sigma_n2;
    (p, var)
}

/// Stable law `S(alpha, beta, scale, location)` applied independently to the
/// real and imaginary parts of each sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaStable {
    alpha: f64,
    beta: f64,
    scale: f64,
    location: f64,
}

impl AlphaStable {
    pub fn new(alpha: f64, beta: f64, scale: f64, location: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(Error::invalid("alpha", format!("{alpha} is not in (0, 2]")));
        }
        if !(-1.0..=1.0).contains(&beta) {
            return Err(Error::invalid("beta", format!("{beta} is not in [-1, 1]")));
        }
        positive("scale", scale)?;
        if !location.is_finite() {
            return Err(Error::invalid("location", "must be finite"));
        }
        Ok(Self {
            alpha,
            beta,
            scale,
            location,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn location(&self) -> f64 {
        self.location
    }

    /// One real variate by the Chambers-Mallows-Stuck transform.
    pub fn sample_real<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let v = PI * (rng.random::<f64>() - 0.5);
        let w: f64 = Exp1.sample(rng);
        let (alpha, beta) = (self.alpha, self.beta);
        if (alpha - 1.0).abs() < 1e-12 {
            let shifted = FRAC_PI_2 + beta * v;
            let x = (shifted * v.tan() - beta * ((FRAC_PI_2 * w * v.cos()) / shifted).ln())
                / FRAC_PI_2;
            self.scale * x + (beta * self.scale * self.scale.ln()) / FRAC_PI_2 + self.location
        } else {
            let zeta = beta * (FRAC_PI_2 * alpha).tan();
            let b = zeta.atan() / alpha;
            let s = (1.0 + zeta * zeta).powf(0.5 / alpha);
            let phi = alpha * (v + b);
            let x = s * phi.sin() / v.cos().powf(1.0 / alpha)
                * ((v - phi).cos() / w).powf((1.0 - alpha) / alpha);
            self.scale * x + self.location
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec {
    Bg(BernoulliGaussian),
    Mca(MiddletonClassA),
    Sas(AlphaStable),
}

impl NoiseSpec {
    pub fn name(&self) -> &'static str {
        match self {
            NoiseSpec::Bg(_) => "bg",
            NoiseSpec::Mca(_) => "mca",
            NoiseSpec::Sas(_) => "sas",
        }
    }

    fn components(&self) -> Result<Vec<(f64, f64)>> {
        match self {
            NoiseSpec::Bg(bg) => Ok(bg.components().to_vec()),
            NoiseSpec::Mca(mca) => Ok(mca
                .weights
                .iter()
                .copied()
                .zip(mca.variances.iter().copied())
                .collect()),
            NoiseSpec::Sas(_) => Err(Error::UnsupportedVariant("alpha-stable")),
        }
    }
}

/// Noise samples together with the ground truth that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledNoiseBlock {
    pub samples: Vec<Complex64>,
    /// `1` where the sample came from an impulse-bearing component; `None`
    /// for alpha-stable noise.
    pub labels: Option<Vec<u8>>,
    pub spec: NoiseSpec,
    pub seed: Option<u64>,
}

impl LabeledNoiseBlock {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Density of a zero-mean circularly-symmetric complex Gaussian.
pub fn complex_gaussian_pdf(x: Complex64, variance: f64) -> f64 {
    (-x.norm_sqr() / variance).exp() / (PI * variance)
}

/// Mixture density of BG or MCA noise at `x`.
pub fn mixture_pdf(spec: &NoiseSpec, x: Complex64) -> Result<f64> {
    Ok(spec
        .components()?
        .into_iter()
        .map(|(p, var)| p * complex_gaussian_pdf(x, var))
        .sum())
}

pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let sd = (0.5 * variance).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(sd * re, sd * im)
}

pub fn sample_bg<R: Rng + ?Sized>(spec: &BernoulliGaussian, count: usize, rng: &mut R) -> LabeledNoiseBlock {
    let impulse_var = spec.sigma_w2 + spec.sigma_i2;
    let mut samples = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        let hit = rng.random::<f64>() < spec.epsilon;
        let var = if hit { impulse_var } else { spec.sigma_w2 };
        samples.push(complex_gaussian(rng, var));
        labels.push(hit as u8);
    }
    LabeledNoiseBlock {
        samples,
        labels: Some(labels),
        spec: NoiseSpec::Bg(*spec),
        seed: None,
    }
}

pub fn sample_mca<R: Rng + ?Sized>(spec: &MiddletonClassA, count: usize, rng: &mut R) -> LabeledNoiseBlock {
    let mut samples = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        let j = spec.draw_component(rng);
        samples.push(complex_gaussian(rng, spec.variances[j]));
        labels.push((j >= 1) as u8);
    }
    LabeledNoiseBlock {
        samples,
        labels: Some(labels),
        spec: NoiseSpec::Mca(spec.clone()),
        seed: None,
    }
}

pub fn sample_sas<R: Rng + ?Sized>(spec: &AlphaStable, count: usize, rng: &mut R) -> LabeledNoiseBlock {
    let samples = (0..count)
        .map(|_| {
            let re = spec.sample_real(rng);
            let im = spec.sample_real(rng);
            Complex64::new(re, im)
        })
        .collect();
    LabeledNoiseBlock {
        samples,
        labels: None,
        spec: NoiseSpec::Sas(*spec),
        seed: None,
    }
}

/// Bernoulli-Gaussian noise whose impulses arrive in runs of `burst_len`
/// consecutive samples.
///
/// A run can only start on a clean sample that does not directly follow
/// another run, so every maximal run has exactly `burst_len` samples except
/// one cut off by the end of the block. The start probability
/// `epsilon / (burst_len * (1 - epsilon))` makes the long-run contaminated
/// fraction equal to `epsilon`. `burst_len == 1` is plain [`sample_bg`].
pub fn sample_bursty<R: Rng + ?Sized>(
    spec: &BernoulliGaussian,
    burst_len: usize,
    count: usize,
    rng: &mut R,
) -> Result<LabeledNoiseBlock> {
    if burst_len == 0 {
        return Err(Error::invalid("burst_len", "must be at least 1"));
    }
    if burst_len == 1 {
        return Ok(sample_bg(spec, count, rng));
    }
    let start_prob = burst_start_probability(spec.epsilon, burst_len);
    let mut labels = vec![0u8; count];
    let mut k = 0;
    while k < count {
        if rng.random::<f64>() < start_prob {
            let end = (k + burst_len).min(count);
            labels[k..end].fill(1);
            // guard sample keeps consecutive runs apart
            k = end + 1;
        } else {
            k += 1;
        }
    }
    let impulse_var = spec.sigma_w2 + spec.sigma_i2;
    let samples = labels
        .iter()
        .map(|&l| complex_gaussian(rng, if l == 1 { impulse_var } else { spec.sigma_w2 }))
        .collect();
    Ok(LabeledNoiseBlock {
        samples,
        labels: Some(labels),
        spec: NoiseSpec::Bg(*spec),
        seed: None,
    })
}

/// Run-start probability giving marginal contamination `epsilon` for runs
/// of `burst_len >= 2` separated by at least one clean sample.
pub fn burst_start_probability(epsilon: f64, burst_len: usize) -> f64 {
    if epsilon >= 1.0 {
        return 1.0;
    }
    (epsilon / (burst_len as f64 * (1.0 - epsilon))).min(1.0)
}

/// Draw `count` samples of any noise model.
pub fn sample<R: Rng + ?Sized>(spec: &NoiseSpec, count: usize, rng: &mut R) -> LabeledNoiseBlock {
    match spec {
        NoiseSpec::Bg(bg) => sample_bg(bg, count, rng),
        NoiseSpec::Mca(mca) => sample_mca(mca, count, rng),
        NoiseSpec::Sas(sas) => sample_sas(sas, count, rng),
    }
}

/// Like [`sample`], with a fresh generator seeded from `seed` and the seed
/// recorded in the block.
pub fn sample_seeded(spec: &NoiseSpec, count: usize, seed: u64) -> LabeledNoiseBlock {
    let mut rng = crate::rng::seeded(seed);
    let mut block = sample(spec, count, &mut rng);
    block.seed = Some(seed);
    block
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("{value} must be positive and finite")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use approx::assert_relative_eq;

    fn var_of(xs: &[Complex64]) -> f64 {
        xs.iter().map(|x| x.norm_sqr()).sum::<f64>() / xs.len() as f64
    }

    fn bg(eps: f64, w: f64, i: f64) -> BernoulliGaussian {
        BernoulliGaussian::new(eps, w, i).unwrap()
    }

    #[test]
    fn pdf_single_component_at_origin() {
        let spec = NoiseSpec::Bg(bg(0.0, 1.0, 7.0));
        assert_relative_eq!(mixture_pdf(&spec, Complex64::new(0.0, 0.0)).unwrap(), 1.0 / PI);
    }

    #[test]
    fn pdf_equal_mixture_at_origin() {
        let spec = NoiseSpec::Bg(bg(0.5, 1.0, 1.0));
        let expected = 0.5 / PI + 0.5 / (2.0 * PI);
        assert_relative_eq!(
            mixture_pdf(&spec, Complex64::new(0.0, 0.0)).unwrap(),
            expected,
            max_relative = 1e-15
        );
    }

    #[test]
    fn pdf_mca_matches_term_by_term_sum() {
        // independent route: Poisson weights by recursion, then explicit
        // renormalization and the Gaussian density at the origin
        let (a, gamma, sn2) = (1.0f64, 0.2f64, 1.0f64);
        let mut p = (-a).exp();
        let mut weights = vec![p];
        for j in 1..10 {
            p *= a / j as f64;
            weights.push(p);
        }
        let mass: f64 = weights.iter().sum();
        let expected: f64 = weights
            .iter()
            .enumerate()
            .map(|(j, w)| {
                let var = (j as f64 / a + gamma) / (1.0 + gamma) * sn2;
                (w / mass) / (PI * var)
            })
            .sum();
        let spec = NoiseSpec::Mca(MiddletonClassA::new(a, gamma, sn2, 10).unwrap());
        let got = mixture_pdf(&spec, Complex64::new(0.0, 0.0)).unwrap();
        assert_relative_eq!(got, expected, max_relative = 1e-13);
    }

    #[test]
    fn pdf_rejects_alpha_stable() {
        let spec = NoiseSpec::Sas(AlphaStable::new(1.5, 0.0, 1.0, 0.0).unwrap());
        assert!(matches!(
            mixture_pdf(&spec, Complex64::new(0.0, 0.0)),
            Err(Error::UnsupportedVariant(_))
        ));
    }

    #[test]
    fn pdf_integrates_to_one() {
        // polar midpoint quadrature over a disc of radius 10 sigma_max
        for spec in [
            NoiseSpec::Bg(bg(0.1, 1.0, 10.0)),
            NoiseSpec::Mca(MiddletonClassA::new(1.0, 0.2, 1.0, 10).unwrap()),
        ] {
            let max_var = match &spec {
                NoiseSpec::Bg(b) => b.sigma_w2 + b.sigma_i2,
                NoiseSpec::Mca(m) => m.variances.iter().cloned().fold(0.0, f64::max),
                NoiseSpec::Sas(_) => unreachable!(),
            };
            let radius = 10.0 * max_var.sqrt();
            let (nr, nt) = (20_000, 16);
            let dr = radius / nr as f64;
            let mut total = 0.0;
            for i in 0..nr {
                let r = (i as f64 + 0.5) * dr;
                for t in 0..nt {
                    let th = 2.0 * PI * (t as f64 + 0.5) / nt as f64;
                    let x = Complex64::from_polar(r, th);
                    total += mixture_pdf(&spec, x).unwrap() * r * dr * (2.0 * PI / nt as f64);
                }
            }
            assert!((total - 1.0).abs() < 1e-4, "{} integrates to {total}", spec.name());
        }
    }

    #[test]
    fn mca_component_zero_is_background() {
        let (p, var) = mca_component(1.0, 0.2, 1.2, 0);
        assert_relative_eq!(p, (-1.0f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(var, 0.2, max_relative = 1e-15);
    }

    #[test]
    fn mca_component_first_term() {
        // (j/A + Gamma)/(1 + Gamma) * sigma_n2 = (2 + 1)/2 * 2 = 3
        let (p, var) = mca_component(0.5, 1.0, 2.0, 1);
        assert_relative_eq!(p, 0.5 * (-0.5f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(var, 3.0, max_relative = 1e-15);
    }

    #[test]
    fn mca_component_tenth_term() {
        let fact10: u64 = (1..=10).product();
        let (p, _) = mca_component(1.0, 0.2, 1.0, 10);
        assert_relative_eq!(p, (-1.0f64).exp() / fact10 as f64, max_relative = 1e-13);
    }

    #[test]
    fn mca_truncation_mass_is_checked() {
        assert!(matches!(
            MiddletonClassA::new(8.0, 0.2, 1.0, 10),
            Err(Error::TruncationMass { .. })
        ));
        // the test setting with Gamma = 0.2 and ten terms is accepted
        let m = MiddletonClassA::new(1.0, 0.2, 1.0, 10).unwrap();
        assert_relative_eq!(m.weights().iter().sum::<f64>(), 1.0, max_relative = 1e-15);
        for w in m.weights().windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn mca_weights_follow_poisson_ratios() {
        let m = MiddletonClassA::new(0.7, 0.5, 2.0, 12).unwrap();
        for j in 1..m.terms() {
            let ratio = m.weights()[j] / m.weights()[j - 1];
            assert_relative_eq!(ratio, 0.7 / j as f64, max_relative = 1e-12);
        }
    }

    #[test]
    fn bg_degenerate_mixtures() {
        let mut rng = seeded(1);
        let block = sample_bg(&bg(0.0, 2.0, 5.0), 1_000_000, &mut rng);
        assert!(block.labels.as_ref().unwrap().iter().all(|&l| l == 0));
        assert!((var_of(&block.samples) / 2.0 - 1.0).abs() < 0.01);

        let block = sample_bg(&bg(1.0, 2.0, 5.0), 1_000_000, &mut rng);
        assert!(block.labels.as_ref().unwrap().iter().all(|&l| l == 1));
        assert!((var_of(&block.samples) / 7.0 - 1.0).abs() < 0.01);
    }

    #[test]
    fn bg_label_rate_within_binomial_band() {
        let n = 1_000_000;
        let block = sample_bg(&bg(0.05, 1.0, 100.0), n, &mut seeded(2));
        let rate = block.labels.unwrap().iter().map(|&l| l as f64).sum::<f64>() / n as f64;
        let band = 3.0 * (0.05f64 * 0.95 / n as f64).sqrt();
        assert!((rate - 0.05).abs() < band, "rate {rate}");
    }

    #[test]
    fn bg_second_moment() {
        let spec = bg(0.05, 1.0, 20.0);
        let block = sample_bg(&spec, 1_000_000, &mut seeded(3));
        let expected = 0.95 * 1.0 + 0.05 * 21.0;
        assert!((var_of(&block.samples) / expected - 1.0).abs() < 0.02);
    }

    #[test]
    fn mca_variance_matches_truncated_mixture() {
        let spec = MiddletonClassA::new(1.0, 0.2, 1.0, 10).unwrap();
        let block = sample_mca(&spec, 1_000_000, &mut seeded(4));
        let oracle: f64 = (0..10)
            .map(|j| mca_component(1.0, 0.2, 1.0, j))
            .map(|(p, v)| p * v)
            .sum::<f64>()
            / (0..10).map(|j| mca_component(1.0, 0.2, 1.0, j).0).sum::<f64>();
        assert!((var_of(&block.samples) / oracle - 1.0).abs() < 0.02);
        assert!((oracle - 1.0).abs() < 0.01);
        let labels = block.labels.unwrap();
        let rate = labels.iter().map(|&l| l as f64).sum::<f64>() / labels.len() as f64;
        assert!((rate - (1.0 - spec.weights()[0])).abs() < 0.003);
    }

    #[test]
    fn sas_alpha_two_is_gaussian() {
        let spec = AlphaStable::new(2.0, 0.0, 1.0, 0.0).unwrap();
        let block = sample_sas(&spec, 1_000_000, &mut seeded(5));
        assert!(block.labels.is_none());
        let re: Vec<f64> = block.samples.iter().map(|z| z.re).collect();
        let n = re.len() as f64;
        let mean = re.iter().sum::<f64>() / n;
        let m2 = re.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let m4 = re.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
        assert!((m2 / 2.0 - 1.0).abs() < 0.02, "variance {m2}");
        let excess = m4 / (m2 * m2) - 3.0;
        assert!(excess.abs() < 5.0 * (24.0 / n).sqrt(), "excess kurtosis {excess}");
    }

    #[test]
    fn sas_location_shift() {
        for alpha in [0.8, 1.0, 1.5] {
            let spec = AlphaStable::new(alpha, 0.0, 1.0, 5.0).unwrap();
            let block = sample_sas(&spec, 200_001, &mut seeded(6));
            let mut re: Vec<f64> = block.samples.iter().map(|z| z.re).collect();
            let mid = re.len() / 2;
            let (_, median, _) = re.select_nth_unstable_by(mid, f64::total_cmp);
            assert!((*median - 5.0).abs() < 0.02, "alpha {alpha}: median {median}");
        }
    }

    /// CDF of the standard symmetric stable law by Gil-Pelaez inversion of
    /// `exp(-|u|^alpha)`.
    fn stable_cdf(alpha: f64, x: f64) -> f64 {
        let upper = 60.0f64;
        let steps = 200_000;
        let h = upper / steps as f64;
        let f = |u: f64| {
            if u == 0.0 {
                x
            } else {
                (u * x).sin() / u * (-u.powf(alpha)).exp()
            }
        };
        let mut acc = f(0.0) + f(upper);
        for i in 1..steps {
            let u = i as f64 * h;
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(u);
        }
        0.5 + acc * h / 3.0 / PI
    }

    #[test]
    fn sas_quantile_matches_characteristic_function() {
        let alpha = 1.5;
        let (mut lo, mut hi) = (0.0, 5.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if stable_cdf(alpha, mid) < 0.75 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let q_oracle = 0.5 * (lo + hi);

        let spec = AlphaStable::new(alpha, 0.0, 1.0, 0.0).unwrap();
        let block = sample_sas(&spec, 1_000_000, &mut seeded(7));
        let mut re: Vec<f64> = block.samples.iter().map(|z| z.re).collect();
        let k = (0.75 * re.len() as f64) as usize;
        let (_, q, _) = re.select_nth_unstable_by(k, f64::total_cmp);
        assert!((*q / q_oracle - 1.0).abs() < 0.02, "empirical {q} vs {q_oracle}");
    }

    #[test]
    fn sas_parameter_errors() {
        assert!(AlphaStable::new(0.0, 0.0, 1.0, 0.0).is_err());
        assert!(AlphaStable::new(2.1, 0.0, 1.0, 0.0).is_err());
        assert!(AlphaStable::new(1.5, 1.5, 1.0, 0.0).is_err());
        assert!(AlphaStable::new(1.5, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn bursty_single_is_bg() {
        let spec = bg(0.05, 1.0, 10.0);
        let a = sample_bursty(&spec, 1, 5000, &mut seeded(8)).unwrap();
        let b = sample_bg(&spec, 5000, &mut seeded(8));
        assert_eq!(a, b);
    }

    #[test]
    fn bursty_runs_have_exact_length_and_rate() {
        let spec = bg(0.06, 1.0, 10.0);
        let n = 1_000_000;
        let block = sample_bursty(&spec, 4, n, &mut seeded(9)).unwrap();
        let labels = block.labels.unwrap();
        let rate = labels.iter().map(|&l| l as f64).sum::<f64>() / n as f64;
        assert!((rate / 0.06 - 1.0).abs() < 0.05, "rate {rate}");

        let mut run = 0;
        for (k, &l) in labels.iter().enumerate() {
            if l == 1 {
                run += 1;
            } else {
                if run > 0 {
                    assert_eq!(run, 4, "run ending at {k}");
                }
                run = 0;
            }
        }
        assert!(run <= 4);
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let specs = [
            NoiseSpec::Bg(bg(0.1, 1.0, 10.0)),
            NoiseSpec::Mca(MiddletonClassA::new(0.5, 0.2, 1.0, 10).unwrap()),
            NoiseSpec::Sas(AlphaStable::new(1.2, 0.3, 1.0, 0.0).unwrap()),
        ];
        for spec in &specs {
            let a = sample_seeded(spec, 1000, 99);
            let b = sample_seeded(spec, 1000, 99);
            assert_eq!(a, b);
            assert_eq!(a.seed, Some(99));
        }
    }

    #[test]
    fn invalid_parameters() {
        assert!(BernoulliGaussian::new(1.5, 1.0, 1.0).is_err());
        assert!(BernoulliGaussian::new(0.1, 0.0, 1.0).is_err());
        assert!(MiddletonClassA::new(1.0, 0.2, 1.0, 0).is_err());
        assert!(sample_bursty(&bg(0.1, 1.0, 1.0), 0, 10, &mut seeded(0)).is_err());
    }
}
