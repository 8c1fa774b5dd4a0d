//! OFDM physical layer: QPSK mapping and soft demapping, (de)modulation with
//! cyclic prefix, sparse multipath channels, pilot-based estimation and
//! zero-forcing equalization.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use rustfft::{Fft, FftPlanner};

use crate::error::{check_len, Error, Result};
use crate::noise::complex_gaussian;

/// Subcarrier partition and framing of one OFDM symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct OfdmConfig {
    pub fft_size: usize,
    pub data: Vec<usize>,
    pub pilots: Vec<usize>,
    pub nulls: Vec<usize>,
    pub cp_len: usize,
    /// Known symbol of each pilot carrier, in ascending carrier order.
    pub pilot_values: Vec<Complex64>,
}

impl OfdmConfig {
    /// Pilots on every `pilot_spacing`-th carrier starting at 0; the
    /// `null_count` non-pilot carriers nearest to `fft_size / 2` (the band
    /// edge in baseband) are nulled; everything else carries data.
    pub fn new(fft_size: usize, pilot_spacing: usize, null_count: usize, cp_len: usize) -> Result<Self> {
        if fft_size < 2 {
            return Err(Error::invalid("fft_size", "must be at least 2"));
        }
        if pilot_spacing < 2 || pilot_spacing > fft_size {
            return Err(Error::invalid(
                "pilot_spacing",
                format!("{pilot_spacing} is outside [2, {fft_size}]"),
            ));
        }
        let pilots: Vec<usize> = (0..fft_size).step_by(pilot_spacing).collect();
        let mut others: Vec<usize> = (0..fft_size).filter(|k| k % pilot_spacing != 0).collect();
        if null_count >= others.len() {
            return Err(Error::invalid(
                "null_count",
                format!("{null_count} leaves no data carriers"),
            ));
        }
        let centre = fft_size as i64 / 2;
        others.sort_by_key(|&k| ((k as i64 - centre).abs(), k));
        let mut nulls = others[..null_count].to_vec();
        let mut data = others[null_count..].to_vec();
        nulls.sort_unstable();
        data.sort_unstable();
        let pilot_values = pilot_sequence(pilots.len());
        let cfg = Self {
            fft_size,
            data,
            pilots,
            nulls,
            cp_len,
            pilot_values,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// 1024 carriers: 672 data, 256 pilots (spacing 4), 96 null, CP of 64.
    pub fn standard() -> Self {
        Self::new(1024, 4, 96, 64).expect("standard layout is valid")
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![false; self.fft_size];
        for &k in self.data.iter().chain(&self.pilots).chain(&self.nulls) {
            if k >= self.fft_size {
                return Err(Error::invalid("subcarriers", format!("index {k} out of range")));
            }
            if std::mem::replace(&mut seen[k], true) {
                return Err(Error::invalid("subcarriers", format!("carrier {k} assigned twice")));
            }
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(Error::invalid("subcarriers", format!("carrier {k} unassigned")));
        }
        check_len(self.pilots.len(), self.pilot_values.len())?;
        if self.pilot_values.iter().any(|p| p.norm_sqr() == 0.0) {
            return Err(Error::invalid("pilot_values", "pilots must be nonzero"));
        }
        Ok(())
    }

    /// Active carriers (data and pilots) in ascending order.
    pub fn active(&self) -> Vec<usize> {
        let mut active: Vec<usize> = self.data.iter().chain(&self.pilots).copied().collect();
        active.sort_unstable();
        active
    }

    pub fn symbol_len(&self) -> usize {
        self.fft_size + self.cp_len
    }

    /// Values for every active carrier: `data_symbols` on data carriers (in
    /// ascending carrier order) and the pilot sequence on pilots.
    pub fn frame(&self, data_symbols: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len(self.data.len(), data_symbols.len())?;
        let mut grid = vec![Complex64::new(0.0, 0.0); self.fft_size];
        for (&k, &s) in self.data.iter().zip(data_symbols) {
            grid[k] = s;
        }
        for (&k, &p) in self.pilots.iter().zip(&self.pilot_values) {
            grid[k] = p;
        }
        Ok(self.active().into_iter().map(|k| grid[k]).collect())
    }
}

/// Unit-magnitude QPSK pilots driven by the PRBS-9 sequence
/// `x^9 + x^5 + 1` from the all-ones state, two bits per pilot.
///
/// Equal pilots on an evenly spaced comb would add up to a few large
/// time-domain peaks that any amplitude-threshold blanker removes together
/// with the pilot energy; a pseudo-random sequence spreads them out.
pub fn pilot_sequence(count: usize) -> Vec<Complex64> {
    let mut state = 0x1ffu16;
    let mut next_bit = || {
        let bit = ((state >> 8) ^ (state >> 4)) & 1;
        state = ((state << 1) | bit) & 0x1ff;
        bit as u8
    };
    (0..count)
        .map(|_| {
            let (b0, b1) = (next_bit(), next_bit());
            Complex64::new(1.0 - 2.0 * b0 as f64, 1.0 - 2.0 * b1 as f64) * FRAC_1_SQRT_2
        })
        .collect()
}

/// Gray-mapped unit-energy QPSK: bit pair `(b0, b1)` maps to
/// `((1 - 2 b0) + j (1 - 2 b1)) / sqrt(2)`.
pub fn qpsk_map(bits: &[u8]) -> Result<Vec<Complex64>> {
    if bits.len() % 2 != 0 {
        return Err(Error::invalid("bits", format!("odd length {}", bits.len())));
    }
    Ok(bits
        .chunks_exact(2)
        .map(|b| {
            Complex64::new(
                (1.0 - 2.0 * b[0] as f64) * FRAC_1_SQRT_2,
                (1.0 - 2.0 * b[1] as f64) * FRAC_1_SQRT_2,
            )
        })
        .collect())
}

/// Exact bit LLRs `ln P(b=0)/P(b=1)` for Gray QPSK in circular Gaussian
/// noise of total variance `noise_var`.
pub fn qpsk_llr(symbols: &[Complex64], noise_var: f64) -> Vec<f64> {
    let scale = 2.0 * SQRT_2 / noise_var;
    symbols
        .iter()
        .flat_map(|y| [scale * y.re, scale * y.im])
        .collect()
}

/// As [`qpsk_llr`] with a separate noise variance per symbol; an infinite
/// variance yields zero LLRs.
pub fn qpsk_llr_per_symbol(symbols: &[Complex64], noise_vars: &[f64]) -> Result<Vec<f64>> {
    check_len(symbols.len(), noise_vars.len())?;
    Ok(symbols
        .iter()
        .zip(noise_vars)
        .flat_map(|(y, &v)| {
            let scale = 2.0 * SQRT_2 / v;
            [scale * y.re, scale * y.im]
        })
        .collect())
}

/// OFDM modulator/demodulator with cached FFT plans.
#[derive(Clone)]
pub struct OfdmModem {
    cfg: OfdmConfig,
    active: Vec<usize>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for OfdmModem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OfdmModem").field("cfg", &self.cfg).finish()
    }
}

impl OfdmModem {
    pub fn new(cfg: OfdmConfig) -> Result<Self> {
        cfg.validate()?;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(cfg.fft_size);
        let inverse = planner.plan_fft_inverse(cfg.fft_size);
        let active = cfg.active();
        Ok(Self {
            cfg,
            active,
            forward,
            inverse,
        })
    }

    pub fn config(&self) -> &OfdmConfig {
        &self.cfg
    }

    /// `s_n = 1/sqrt(N) * sum_k S_k exp(j 2 pi k n / N)` over the active
    /// carriers, with the cyclic prefix prepended.
    pub fn modulate(&self, active_symbols: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len(self.active.len(), active_symbols.len())?;
        let n = self.cfg.fft_size;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (&k, &s) in self.active.iter().zip(active_symbols) {
            buf[k] = s;
        }
        self.inverse.process(&mut buf);
        let norm = 1.0 / (n as f64).sqrt();
        buf.iter_mut().for_each(|x| *x *= norm);
        let mut out = Vec::with_capacity(self.cfg.symbol_len());
        out.extend_from_slice(&buf[n - self.cfg.cp_len..]);
        out.extend_from_slice(&buf);
        Ok(out)
    }

    /// Strip the cyclic prefix and take the unitary DFT.
    pub fn demodulate(&self, samples: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len(self.cfg.symbol_len(), samples.len())?;
        self.dft(&samples[self.cfg.cp_len..])
    }

    /// Unitary DFT of exactly `fft_size` samples (prefix already removed).
    pub fn dft(&self, samples: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len(self.cfg.fft_size, samples.len())?;
        let mut buf = samples.to_vec();
        self.forward.process(&mut buf);
        let norm = 1.0 / (self.cfg.fft_size as f64).sqrt();
        buf.iter_mut().for_each(|x| *x *= norm);
        Ok(buf)
    }
}

/// Sparse multipath impulse response.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// `(amplitude, delay in samples)` with strictly increasing delays.
    pub taps: Vec<(Complex64, usize)>,
}

impl ChannelRealization {
    pub fn identity() -> Self {
        Self {
            taps: vec![(Complex64::new(1.0, 0.0), 0)],
        }
    }

    pub fn max_delay(&self) -> usize {
        self.taps.last().map_or(0, |t| t.1)
    }

    /// `H[k] = sum_p b_p exp(-j 2 pi k tau_p / N)`.
    pub fn frequency_response(&self, fft_size: usize) -> Vec<Complex64> {
        (0..fft_size)
            .map(|k| {
                self.taps
                    .iter()
                    .map(|&(b, tau)| {
                        let phase = -2.0 * PI * (k * tau % fft_size) as f64 / fft_size as f64;
                        b * Complex64::from_polar(1.0, phase)
                    })
                    .sum()
            })
            .collect()
    }
}

/// Parameters of the random multipath channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelProfile {
    pub paths: usize,
    /// Mean inter-arrival time between paths, in samples.
    pub mean_arrival: f64,
    /// Delay constant of the exponential power profile, in samples.
    pub decay: f64,
    pub max_attempts: usize,
}

impl Default for ChannelProfile {
    fn default() -> Self {
        // 1 ms mean arrival at 6 kHz sampling
        Self {
            paths: 10,
            mean_arrival: 6.0,
            decay: 12.0,
            max_attempts: 1000,
        }
    }
}

/// Draw a Rayleigh multipath channel.
///
/// The first path arrives at delay 0; inter-arrival times are exponential
/// with mean `mean_arrival`, rounded to whole samples with a minimum of one.
/// Path `p` is `CN(0, P_p)` with `P_p` proportional to `exp(-tau_p / decay)`
/// and `sum P_p = 1`. Draws whose last delay reaches `cp_len` are rejected.
pub fn channel_generate<R: Rng + ?Sized>(
    profile: &ChannelProfile,
    cp_len: usize,
    rng: &mut R,
) -> Result<ChannelRealization> {
    let (delays, powers) = channel_draw_profile(profile, cp_len, rng)?;
    let taps = delays
        .into_iter()
        .zip(powers)
        .map(|(tau, p)| (complex_gaussian(rng, p), tau))
        .collect();
    Ok(ChannelRealization { taps })
}

/// Delays and average tap powers of one accepted realization.
pub fn channel_draw_profile<R: Rng + ?Sized>(
    profile: &ChannelProfile,
    cp_len: usize,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<f64>)> {
    if profile.paths == 0 {
        return Err(Error::invalid("paths", "at least one path is required"));
    }
    if !(profile.mean_arrival > 0.0 && profile.decay > 0.0) {
        return Err(Error::invalid("mean_arrival", "arrival mean and decay must be positive"));
    }
    let arrivals = Exp::new(1.0 / profile.mean_arrival).expect("positive rate");
    for _ in 0..profile.max_attempts.max(1) {
        let mut delays = Vec::with_capacity(profile.paths);
        let mut tau = 0usize;
        delays.push(tau);
        for _ in 1..profile.paths {
            let gap: f64 = arrivals.sample(rng);
            tau += (gap.round() as usize).max(1);
            delays.push(tau);
        }
        if tau >= cp_len.max(1) {
            continue;
        }
        let raw: Vec<f64> = delays.iter().map(|&t| (-(t as f64) / profile.decay).exp()).collect();
        let total: f64 = raw.iter().sum();
        let powers = raw.iter().map(|p| p / total).collect();
        return Ok((delays, powers));
    }
    Err(Error::ChannelTooLong {
        cp_len,
        attempts: profile.max_attempts.max(1),
    })
}

/// `r_k = sum_p b_p s_{k - tau_p}`, truncated to the input length.
pub fn channel_apply(signal: &[Complex64], ch: &ChannelRealization) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); signal.len()];
    for &(b, tau) in &ch.taps {
        for (o, s) in out.iter_mut().skip(tau).zip(signal) {
            *o += b * s;
        }
    }
    out
}

/// Least-squares estimates at the pilots, linearly interpolated between
/// neighbouring pilots and linearly extrapolated past the outermost ones.
pub fn estimate_channel(cfg: &OfdmConfig, rx: &[Complex64], pilot_values: &[Complex64]) -> Result<Vec<Complex64>> {
    check_len(cfg.fft_size, rx.len())?;
    check_len(cfg.pilots.len(), pilot_values.len())?;
    if pilot_values.iter().any(|p| p.norm_sqr() == 0.0) {
        return Err(Error::invalid("pilot_values", "pilots must be nonzero"));
    }
    let mut pilots: Vec<(usize, Complex64)> = cfg.pilots.iter().copied().zip(pilot_values.iter().copied()).collect();
    pilots.sort_unstable_by_key(|&(k, _)| k);
    let ls: Vec<Complex64> = pilots.iter().map(|&(k, p)| rx[k] / p).collect();
    let pilots: Vec<usize> = pilots.into_iter().map(|(k, _)| k).collect();
    if pilots.len() == 1 {
        return Ok(vec![ls[0]; cfg.fft_size]);
    }
    let mut h = vec![Complex64::new(0.0, 0.0); cfg.fft_size];
    let mut seg = 0;
    for (k, hk) in h.iter_mut().enumerate() {
        while seg + 2 < pilots.len() && k > pilots[seg + 1] {
            seg += 1;
        }
        let (k0, k1) = (pilots[seg] as f64, pilots[seg + 1] as f64);
        let t = (k as f64 - k0) / (k1 - k0);
        *hk = ls[seg] * (1.0 - t) + ls[seg + 1] * t;
    }
    Ok(h)
}

/// Zero-forced symbols and the per-carrier noise variance scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct Equalized {
    pub symbols: Vec<Complex64>,
    /// `1 / |H_k|^2`; infinite for erased carriers.
    pub noise_scale: Vec<f64>,
}

/// Carriers with `|H|^2` below this are erased rather than inverted.
pub const EQUALIZER_FLOOR: f64 = 1e-12;

pub fn equalize(freq_symbols: &[Complex64], h: &[Complex64]) -> Result<Equalized> {
    check_len(freq_symbols.len(), h.len())?;
    let (symbols, noise_scale) = freq_symbols
        .iter()
        .zip(h)
        .map(|(&y, &hk)| {
            let g = hk.norm_sqr();
            if g < EQUALIZER_FLOOR {
                (Complex64::new(0.0, 0.0), f64::INFINITY)
            } else {
                (y / hk, 1.0 / g)
            }
        })
        .unzip();
    Ok(Equalized {
        symbols,
        noise_scale,
    })
}
