//! One coded OFDM symbol through channel, noise, mitigation and decoding.
//!
//! Energy bookkeeping: unit-energy symbols on the active carriers and a
//! unitary DFT give an average time-domain signal power of
//! `|active| / N` per sample. The energy per information bit counts pilot
//! energy as overhead and excludes the cyclic prefix, so
//! `Eb = |active| / K` for `K` message bits per symbol and the per-sample
//! background noise power is `Eb / (Eb/N0)`. The channel has unit average
//! power gain, and SIR is average signal power over average impulse power.

use num_complex::Complex64;
use rand::Rng;

use crate::coding::{conv_encode, message_len, viterbi_decode_soft, BlockInterleaver};
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::mitigation::MitigationPolicy;
use crate::noise::{
    sample_bursty, sample_mca, sample_sas, AlphaStable, BernoulliGaussian, LabeledNoiseBlock,
    MiddletonClassA, NoiseSpec,
};
use crate::ofdm::{
    channel_apply, channel_generate, equalize, estimate_channel, qpsk_llr_per_symbol, qpsk_map, ChannelProfile,
    ChannelRealization, OfdmConfig, OfdmModem,
};
use crate::rng::SimRng;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Smallest noise power the demapper will assume.
const LLR_NOISE_FLOOR: f64 = 1e-12;

#[derive(Debug)]
pub struct Link {
    ofdm: OfdmConfig,
    modem: OfdmModem,
    bit_interleaver: BlockInterleaver,
    time_interleaver: Option<BlockInterleaver>,
    channel: Option<ChannelProfile>,
    perfect_csi: bool,
    msg_len: usize,
}

#[derive(Debug, Clone)]
pub struct Transmission {
    pub bits: Vec<u8>,
    pub channel: ChannelRealization,
    /// Channel output with the cyclic prefix removed.
    pub received: Vec<Complex64>,
}

impl Link {
    pub fn new(
        ofdm: OfdmConfig,
        bit_interleaver: BlockInterleaver,
        time_interleaver: Option<BlockInterleaver>,
        channel: Option<ChannelProfile>,
        perfect_csi: bool,
    ) -> Result<Self> {
        let coded = 2 * ofdm.data.len();
        let msg_len = message_len(coded)
            .filter(|&m| m > 0)
            .ok_or_else(|| Error::invalid("ofdm", "too few data carriers"))?;
        bit_interleaver.permutation(coded)?;
        if let Some(il) = time_interleaver {
            il.permutation(ofdm.fft_size)?;
        }
        Ok(Self {
            modem: OfdmModem::new(ofdm.clone())?,
            ofdm,
            bit_interleaver,
            time_interleaver,
            channel,
            perfect_csi,
            msg_len,
        })
    }

    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        Self::new(
            cfg.ofdm_config()?,
            cfg.bit_interleaver()?,
            cfg.time_interleaver()?,
            cfg.channel_profile(),
            cfg.receiver.perfect_csi,
        )
    }

    pub fn ofdm(&self) -> &OfdmConfig {
        &self.ofdm
    }

    pub fn message_len(&self) -> usize {
        self.msg_len
    }

    /// Average transmitted power per time-domain sample.
    pub fn signal_power(&self) -> f64 {
        (self.ofdm.data.len() + self.ofdm.pilots.len()) as f64 / self.ofdm.fft_size as f64
    }

    pub fn energy_per_bit(&self) -> f64 {
        (self.ofdm.data.len() + self.ofdm.pilots.len()) as f64 / self.msg_len as f64
    }

    /// Background noise power per sample at the given Eb/N0.
    pub fn noise_power(&self, ebn0_db: f64) -> f64 {
        self.energy_per_bit() / db_to_linear(ebn0_db)
    }

    pub fn transmit(&self, rng: &mut SimRng) -> Result<Transmission> {
        let bits: Vec<u8> = (0..self.msg_len).map(|_| rng.random_range(0..2u8)).collect();
        let coded = self.bit_interleaver.interleave(&conv_encode(&bits))?;
        let frame = self.ofdm.frame(&qpsk_map(&coded)?)?;
        let tx = self.modem.modulate(&frame)?;
        let channel = match &self.channel {
            Some(profile) => channel_generate(profile, self.ofdm.cp_len, rng)?,
            None => ChannelRealization::identity(),
        };
        let received = channel_apply(&tx, &channel)[self.ofdm.cp_len..].to_vec();
        Ok(Transmission {
            bits,
            channel,
            received,
        })
    }

    /// Impulse mitigation in the time domain, with the receiver's sample
    /// permutation around it when configured.
    pub fn mitigate(&self, rx: &[Complex64], policy: &MitigationPolicy) -> Result<Vec<Complex64>> {
        match &self.time_interleaver {
            Some(il) => il.deinterleave(&policy.mitigate(&il.interleave(rx)?)?),
            None => policy.mitigate(rx),
        }
    }

    /// Demodulates `rx` (prefix removed) after mitigation and returns the
    /// decoded message.
    pub fn receive(&self, rx: &[Complex64], channel: &ChannelRealization, policy: &MitigationPolicy) -> Result<Vec<u8>> {
        let cleaned = self.mitigate(rx, policy)?;
        self.decode(&cleaned, channel)
    }

    pub fn decode(&self, samples: &[Complex64], channel: &ChannelRealization) -> Result<Vec<u8>> {
        let freq = self.modem.dft(samples)?;
        let h = if self.perfect_csi {
            channel.frequency_response(self.ofdm.fft_size)
        } else {
            estimate_channel(&self.ofdm, &freq, &self.ofdm.pilot_values)?
        };
        let y: Vec<Complex64> = self.ofdm.data.iter().map(|&k| freq[k]).collect();
        let hd: Vec<Complex64> = self.ofdm.data.iter().map(|&k| h[k]).collect();
        let eq = equalize(&y, &hd)?;
        let noise = self.null_power(&freq);
        let vars: Vec<f64> = eq.noise_scale.iter().map(|s| s * noise).collect();
        let llrs = qpsk_llr_per_symbol(&eq.symbols, &vars)?;
        viterbi_decode_soft(&self.bit_interleaver.deinterleave(&llrs)?)
    }

    /// Post-mitigation noise power seen on the null carriers.
    fn null_power(&self, freq: &[Complex64]) -> f64 {
        if self.ofdm.nulls.is_empty() {
            return 1.0;
        }
        let p = self.ofdm.nulls.iter().map(|&k| freq[k].norm_sqr()).sum::<f64>() / self.ofdm.nulls.len() as f64;
        p.max(LLR_NOISE_FLOOR)
    }
}

/// Additive noise in a simulation run.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseScenario {
    Awgn,
    /// Bernoulli-Gaussian impulses in runs of `burst_len` samples.
    Bg { epsilon: f64, sir_db: f64, burst_len: usize },
    Mca { impulsive_index: f64, sir_db: f64, terms: usize },
    /// Alpha-stable noise replacing the Gaussian background: the per-sample
    /// noise is `sqrt(N0) / 2 * (X + jY)` with `X, Y` i.i.d. stable, so
    /// `alpha = 2, gamma = 1` is AWGN at the nominal Eb/N0.
    Sas { alpha: f64, beta: f64, gamma: f64, mu: f64 },
}

impl NoiseScenario {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let n = &cfg.noise;
        let scenario = match n.model.as_str() {
            "awgn" => NoiseScenario::Awgn,
            "bg" => NoiseScenario::Bg {
                epsilon: n.epsilon,
                sir_db: n.sir_db,
                burst_len: n.burst_len,
            },
            "mca" => NoiseScenario::Mca {
                impulsive_index: n.impulsive_index,
                sir_db: n.sir_db,
                terms: n.mca_terms,
            },
            "sas" => NoiseScenario::Sas {
                alpha: n.alpha,
                beta: n.beta,
                gamma: n.gamma,
                mu: n.mu,
            },
            other => {
                return Err(Error::config(
                    "noise.model",
                    format!("unknown model `{other}`, expected awgn, bg, mca or sas"),
                ))
            }
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseScenario::Bg {
                epsilon,
                sir_db,
                burst_len,
            } => {
                if !(0.0..=1.0).contains(&epsilon) {
                    return Err(Error::config("noise.epsilon", format!("{epsilon} not in [0, 1]")));
                }
                if !sir_db.is_finite() {
                    return Err(Error::config("noise.sir_db", "must be finite"));
                }
                if burst_len == 0 {
                    return Err(Error::config("noise.burst_len", "must be at least 1"));
                }
            }
            NoiseScenario::Mca {
                impulsive_index,
                sir_db,
                terms,
            } => {
                if !sir_db.is_finite() {
                    return Err(Error::config("noise.sir_db", "must be finite"));
                }
                MiddletonClassA::new(impulsive_index, 1.0, 1.0, terms)
                    .map_err(|e| Error::config("noise.impulsive_index", e.to_string()))?;
            }
            NoiseScenario::Sas { alpha, beta, gamma, mu } => {
                AlphaStable::new(alpha, beta, gamma, mu).map_err(|e| Error::config("noise.alpha", e.to_string()))?;
            }
            NoiseScenario::Awgn => {}
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        match self {
            NoiseScenario::Awgn => "awgn".into(),
            NoiseScenario::Bg {
                epsilon,
                sir_db,
                burst_len,
            } => format!("bg epsilon={epsilon} sir_db={sir_db} burst_len={burst_len}"),
            NoiseScenario::Mca {
                impulsive_index,
                sir_db,
                terms,
            } => format!("mca a={impulsive_index} sir_db={sir_db} terms={terms}"),
            NoiseScenario::Sas { alpha, beta, gamma, mu } => {
                format!("sas alpha={alpha} beta={beta} gamma={gamma} mu={mu}")
            }
        }
    }

    /// Noise model parameters at a given operating point.
    pub fn spec(&self, link: &Link, ebn0_db: f64) -> Result<NoiseSpec> {
        let sigma_w2 = link.noise_power(ebn0_db);
        let ps = link.signal_power();
        Ok(match *self {
            // impulse variance is unused without impulses
            NoiseScenario::Awgn => NoiseSpec::Bg(BernoulliGaussian::new(0.0, sigma_w2, 1.0)?),
            NoiseScenario::Bg { epsilon, sir_db, .. } => {
                let impulse_power = ps / db_to_linear(sir_db);
                let sigma_i2 = impulse_power / if epsilon > 0.0 { epsilon } else { 1.0 };
                NoiseSpec::Bg(BernoulliGaussian::new(epsilon, sigma_w2, sigma_i2)?)
            }
            NoiseScenario::Mca {
                impulsive_index,
                sir_db,
                terms,
            } => {
                let sigma_i2 = ps / db_to_linear(sir_db);
                NoiseSpec::Mca(MiddletonClassA::new(
                    impulsive_index,
                    sigma_w2 / sigma_i2,
                    sigma_w2 + sigma_i2,
                    terms,
                )?)
            }
            NoiseScenario::Sas { alpha, beta, gamma, mu } => NoiseSpec::Sas(AlphaStable::new(alpha, beta, gamma, mu)?),
        })
    }

    /// `count` noise samples at the given operating point. The number of
    /// generator draws does not depend on `ebn0_db`, so one stream gives
    /// paired realizations across an Eb/N0 grid.
    pub fn sample(&self, link: &Link, ebn0_db: f64, count: usize, rng: &mut SimRng) -> Result<LabeledNoiseBlock> {
        let burst_len = match self {
            NoiseScenario::Bg { burst_len, .. } => *burst_len,
            _ => 1,
        };
        match self.spec(link, ebn0_db)? {
            NoiseSpec::Bg(bg) => sample_bursty(&bg, burst_len, count, rng),
            NoiseSpec::Mca(mca) => Ok(sample_mca(&mca, count, rng)),
            NoiseSpec::Sas(sas) => {
                let mut block = sample_sas(&sas, count, rng);
                let scale = 0.5 * link.noise_power(ebn0_db).sqrt();
                block.samples.iter_mut().for_each(|n| *n *= scale);
                Ok(block)
            }
        }
    }
}

/// Outcome of one symbol: transmitted bits and the decoded bits under each
/// policy, all policies seeing the same received samples.
#[derive(Debug, Clone)]
pub struct LinkOutcome {
    pub tx_bits: Vec<u8>,
    pub rx_bits: Vec<Vec<u8>>,
    pub noise: LabeledNoiseBlock,
}

impl LinkOutcome {
    pub fn errors(&self, policy: usize) -> u64 {
        self.tx_bits
            .iter()
            .zip(&self.rx_bits[policy])
            .filter(|(a, b)| a != b)
            .count() as u64
    }
}

/// Draws bits, channel and noise from `rng` (in that order) and decodes the
/// symbol once per policy.
pub fn run_link_once(
    link: &Link,
    scenario: &NoiseScenario,
    ebn0_db: f64,
    policies: &[MitigationPolicy],
    rng: &mut SimRng,
) -> Result<LinkOutcome> {
    let tx = link.transmit(rng)?;
    let noise = scenario.sample(link, ebn0_db, tx.received.len(), rng)?;
    let rx: Vec<Complex64> = tx.received.iter().zip(&noise.samples).map(|(s, n)| s + n).collect();
    let rx_bits = policies
        .iter()
        .map(|p| link.receive(&rx, &tx.channel, p))
        .collect::<Result<_>>()?;
    Ok(LinkOutcome {
        tx_bits: tx.bits,
        rx_bits,
        noise,
    })
}

/// Received time-domain samples of one symbol with their impulse labels,
/// before any mitigation.
pub fn received_block(
    link: &Link,
    scenario: &NoiseScenario,
    ebn0_db: f64,
    rng: &mut SimRng,
) -> Result<(Vec<Complex64>, LabeledNoiseBlock)> {
    let tx = link.transmit(rng)?;
    let noise = scenario.sample(link, ebn0_db, tx.received.len(), rng)?;
    let rx = tx.received.iter().zip(&noise.samples).map(|(s, n)| s + n).collect();
    Ok((rx, noise))
}
