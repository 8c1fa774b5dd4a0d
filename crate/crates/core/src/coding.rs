//! Rate-1/2, constraint-length-7 convolutional code (generators 171/133
//! octal) with a soft-input Viterbi decoder, and a block interleaver.
//!
//! Bits are `u8` values 0 or 1. Soft inputs are LLRs `ln P(0)/P(1)`, so a
//! positive value favours 0.

use crate::error::{Error, Result};

pub const CONSTRAINT_LENGTH: usize = 7;
pub const MEMORY: usize = CONSTRAINT_LENGTH - 1;
pub const STATES: usize = 1 << MEMORY;
pub const GENERATORS: [u32; 2] = [0o171, 0o133];

/// Coded length of a zero-tailed message.
pub fn coded_len(msg_len: usize) -> usize {
    2 * (msg_len + MEMORY)
}

/// Largest message that fits `coded_bits` after termination.
pub fn message_len(coded_bits: usize) -> Option<usize> {
    (coded_bits % 2 == 0 && coded_bits >= 2 * MEMORY).then(|| coded_bits / 2 - MEMORY)
}

#[inline]
fn branch_output(state: usize, input: usize) -> [u8; 2] {
    // register holds the current input at bit 6 and the six previous inputs
    // below it, most recent first
    let reg = ((input << MEMORY) | state) as u32;
    [
        ((reg & GENERATORS[0]).count_ones() & 1) as u8,
        ((reg & GENERATORS[1]).count_ones() & 1) as u8,
    ]
}

#[inline]
fn next_state(state: usize, input: usize) -> usize {
    ((input << MEMORY) | state) >> 1
}

/// Feed-forward encoding followed by six zero tail bits.
pub fn conv_encode(bits: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(coded_len(bits.len()));
    let mut state = 0;
    for &b in bits.iter().chain(std::iter::repeat_n(&0, MEMORY)) {
        let input = (b & 1) as usize;
        out.extend_from_slice(&branch_output(state, input));
        state = next_state(state, input);
    }
    out
}

/// Maximum-likelihood decoding over the 64-state trellis with correlation
/// branch metrics, starting and ending in the zero state.
///
/// Of two paths with equal metric entering a state, the one whose
/// discarded oldest bit is 0 survives.
pub fn viterbi_decode_soft(llrs: &[f64]) -> Result<Vec<u8>> {
    let msg_len = message_len(llrs.len()).ok_or_else(|| {
        Error::invalid(
            "llrs",
            format!("length {} is not 2 * (message + {MEMORY})", llrs.len()),
        )
    })?;
    let steps = msg_len + MEMORY;

    // branch metric of each (state, input) pair depends on the two output
    // bits only, so there are four distinct values per step
    let mut outputs = [[0usize; 2]; STATES];
    for (s, out) in outputs.iter_mut().enumerate() {
        for input in 0..2 {
            let [c0, c1] = branch_output(s, input);
            out[input] = (c0 as usize) << 1 | c1 as usize;
        }
    }

    let mut metric = [f64::NEG_INFINITY; STATES];
    metric[0] = 0.0;
    let mut decisions = vec![0u64; steps];
    let mut next = [0.0f64; STATES];

    for (t, pair) in llrs.chunks_exact(2).enumerate() {
        let (l0, l1) = (pair[0], pair[1]);
        let bm = [l0 + l1, l0 - l1, -l0 + l1, -l0 - l1];
        let mut dec = 0u64;
        for (ns, slot) in next.iter_mut().enumerate() {
            let input = ns >> (MEMORY - 1);
            let p0 = (ns << 1) & (STATES - 1);
            let p1 = p0 | 1;
            let m0 = metric[p0] + bm[outputs[p0][input]];
            let m1 = metric[p1] + bm[outputs[p1][input]];
            if m1 > m0 {
                *slot = m1;
                dec |= 1 << ns;
            } else {
                *slot = m0;
            }
        }
        decisions[t] = dec;
        std::mem::swap(&mut metric, &mut next);
    }

    let mut bits = vec![0u8; steps];
    let mut state = 0usize;
    for t in (0..steps).rev() {
        bits[t] = (state >> (MEMORY - 1)) as u8;
        let oldest = ((decisions[t] >> state) & 1) as usize;
        state = ((state << 1) & (STATES - 1)) | oldest;
    }
    bits.truncate(msg_len);
    Ok(bits)
}

/// Row-in, column-out block interleaver.
///
/// The sequence is written row by row into a `rows x cols` array and read
/// column by column. Shorter sequences leave the trailing cells empty and
/// those cells are skipped on read-out, so the permutation is a bijection on
/// the input length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockInterleaver {
    pub rows: usize,
    pub cols: usize,
}

impl BlockInterleaver {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("interleaver", "rows and cols must be positive"));
        }
        Ok(Self { rows, cols })
    }

    pub fn capacity(&self) -> usize {
        self.rows * self.cols
    }

    /// `perm[j]` is the input index emitted at output position `j`.
    pub fn permutation(&self, len: usize) -> Result<Vec<usize>> {
        if len > self.capacity() {
            return Err(Error::invalid(
                "interleaver",
                format!("length {len} exceeds {} x {}", self.rows, self.cols),
            ));
        }
        Ok((0..self.cols)
            .flat_map(|c| (0..self.rows).map(move |r| r * self.cols + c))
            .filter(|&i| i < len)
            .collect())
    }

    pub fn interleave<T: Copy>(&self, seq: &[T]) -> Result<Vec<T>> {
        Ok(self.permutation(seq.len())?.into_iter().map(|i| seq[i]).collect())
    }

    pub fn deinterleave<T: Copy>(&self, seq: &[T]) -> Result<Vec<T>> {
        let perm = self.permutation(seq.len())?;
        let mut out = seq.to_vec();
        for (j, &i) in perm.iter().enumerate() {
            out[i] = seq[j];
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_bits(n: usize, rng: &mut impl Rng) -> Vec<u8> {
        (0..n).map(|_| rng.random_range(0..2u8)).collect()
    }

    fn to_llr(coded: &[u8], magnitude: f64) -> Vec<f64> {
        coded.iter().map(|&c| if c == 0 { magnitude } else { -magnitude }).collect()
    }

    /// Independent shift-register encoder: taps read from the generator
    /// polynomials, MSB on the newest bit.
    fn reference_encode(bits: &[u8]) -> Vec<u8> {
        let taps: Vec<Vec<u8>> = GENERATORS
            .iter()
            .map(|g| (0..7).map(|i| ((g >> (6 - i)) & 1) as u8).collect())
            .collect();
        let mut reg = [0u8; 7];
        let mut out = vec![];
        for &b in bits.iter().chain([0u8; 6].iter()) {
            reg.rotate_right(1);
            reg[0] = b;
            for t in &taps {
                out.push(t.iter().zip(&reg).map(|(a, b)| a & b).sum::<u8>() % 2);
            }
        }
        out
    }

    #[test]
    fn zero_message_encodes_to_zeros() {
        assert!(conv_encode(&[0; 50]).iter().all(|&b| b == 0));
        assert_eq!(conv_encode(&[0; 50]).len(), coded_len(50));
    }

    #[test]
    fn impulse_response() {
        let coded = conv_encode(&[1, 0, 0, 0, 0, 0, 0]);
        // 171 = 1111001, 133 = 1011011 read newest-first
        let expected: Vec<u8> = vec![
            1, 1, 1, 0, 1, 1, 1, 1, 0, 0, 0, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0,
        ];
        assert_eq!(coded, expected);
        assert_eq!(coded, reference_encode(&[1, 0, 0, 0, 0, 0, 0]));
    }

    #[test]
    fn encoder_matches_reference_register() {
        let mut rng = seeded(1);
        for _ in 0..50 {
            let bits = random_bits(100, &mut rng);
            assert_eq!(conv_encode(&bits), reference_encode(&bits));
        }
    }

    #[test]
    fn noiseless_round_trip() {
        let mut rng = seeded(2);
        for _ in 0..100 {
            let bits = random_bits(200, &mut rng);
            let decoded = viterbi_decode_soft(&to_llr(&conv_encode(&bits), 4.0)).unwrap();
            assert_eq!(decoded, bits);
        }
    }

    #[test]
    fn corrects_three_separated_flips() {
        let mut rng = seeded(3);
        let bits = random_bits(200, &mut rng);
        let mut llr = to_llr(&conv_encode(&bits), 1.0);
        // flips at least a constraint span apart; free distance 10 corrects
        // up to four errors within any such span
        for idx in [40, 160, 300] {
            llr[idx] = -llr[idx];
        }
        assert_eq!(viterbi_decode_soft(&llr).unwrap(), bits);
    }

    #[test]
    fn free_distance_is_ten() {
        // exhaustive over short zero-tailed inputs starting with 1: the
        // minimum output weight is the free distance
        let min_weight = (0u32..1 << 12)
            .filter(|m| m & 1 == 1)
            .map(|m| {
                let bits: Vec<u8> = (0..12).map(|i| ((m >> i) & 1) as u8).collect();
                conv_encode(&bits).iter().map(|&b| b as u32).sum::<u32>()
            })
            .min()
            .unwrap();
        assert_eq!(min_weight, 10);
    }

    #[test]
    fn ties_prefer_zero_branch() {
        let decoded = viterbi_decode_soft(&vec![0.0; coded_len(30)]).unwrap();
        assert_eq!(decoded, vec![0; 30]);
    }

    #[test]
    fn length_errors() {
        assert!(viterbi_decode_soft(&[0.0; 11]).is_err());
        assert!(viterbi_decode_soft(&[0.0; 13]).is_err());
        assert_eq!(viterbi_decode_soft(&[0.0; 12]).unwrap(), Vec::<u8>::new());
    }

    /// Hard-decision Viterbi with Hamming metrics, written independently.
    fn hard_viterbi(received: &[u8]) -> Vec<u8> {
        let steps = received.len() / 2;
        let mut metric = vec![u32::MAX; STATES];
        metric[0] = 0;
        let mut paths: Vec<Vec<u8>> = vec![vec![]; STATES];
        for t in 0..steps {
            let mut next = vec![u32::MAX; STATES];
            let mut next_paths: Vec<Vec<u8>> = vec![vec![]; STATES];
            for s in 0..STATES {
                if metric[s] == u32::MAX {
                    continue;
                }
                for u in 0..2 {
                    let out = branch_output(s, u);
                    let d = (out[0] != received[2 * t]) as u32 + (out[1] != received[2 * t + 1]) as u32;
                    let ns = next_state(s, u);
                    let m = metric[s] + d;
                    if m < next[ns] {
                        next[ns] = m;
                        let mut p = paths[s].clone();
                        p.push(u as u8);
                        next_paths[ns] = p;
                    }
                }
            }
            metric = next;
            paths = next_paths;
        }
        let mut p = paths[0].clone();
        p.truncate(steps - MEMORY);
        p
    }

    #[test]
    fn hard_llrs_match_hard_decision_viterbi() {
        let mut rng = seeded(4);
        for _ in 0..1000 {
            let bits = random_bits(20, &mut rng);
            let mut coded = conv_encode(&bits);
            for c in coded.iter_mut() {
                if rng.random::<f64>() < 0.08 {
                    *c ^= 1;
                }
            }
            let soft = viterbi_decode_soft(&to_llr(&coded, 1.0)).unwrap();
            let hard = hard_viterbi(&coded);
            // both are maximum likelihood; with ties the decoded words may
            // differ but their path metrics must agree
            let dist = |m: &[u8]| {
                conv_encode(m).iter().zip(&coded).filter(|(a, b)| a != b).count()
            };
            assert_eq!(dist(&soft), dist(&hard));
        }
    }

    #[test]
    fn coded_beats_uncoded_in_awgn() {
        // BPSK-equivalent LLRs at Eb/N0 = 5 dB, 1e5 information bits
        let mut rng = seeded(5);
        let ebn0 = 10f64.powf(0.5);
        let (mut coded_errors, mut uncoded_errors, mut total) = (0, 0, 0);
        let normal = rand_distr::StandardNormal;
        while total < 100_000 {
            let bits = random_bits(994, &mut rng);
            total += bits.len();
            // uncoded: Es = Eb
            let sigma_u = (1.0 / (2.0 * ebn0)).sqrt();
            for &b in &bits {
                let x = 1.0 - 2.0 * b as f64;
                let n: f64 = rand_distr::Distribution::sample(&normal, &mut rng);
                if ((x + sigma_u * n) < 0.0) != (b == 1) {
                    uncoded_errors += 1;
                }
            }
            // coded: Es = Eb * R (tail overhead ignored)
            let sigma_c = (1.0 / (2.0 * 0.5 * ebn0)).sqrt();
            let llr: Vec<f64> = conv_encode(&bits)
                .iter()
                .map(|&c| {
                    let n: f64 = rand_distr::Distribution::sample(&normal, &mut rng);
                    (1.0 - 2.0 * c as f64) + sigma_c * n
                })
                .collect();
            let decoded = viterbi_decode_soft(&llr).unwrap();
            coded_errors += decoded.iter().zip(&bits).filter(|(a, b)| a != b).count();
        }
        assert!(coded_errors < uncoded_errors, "{coded_errors} vs {uncoded_errors}");
    }

    #[test]
    fn single_row_is_identity() {
        let il = BlockInterleaver::new(1, 16).unwrap();
        let x: Vec<u32> = (0..16).collect();
        assert_eq!(il.interleave(&x).unwrap(), x);
    }

    #[test]
    fn interleave_reads_columns() {
        let il = BlockInterleaver::new(2, 3).unwrap();
        assert_eq!(il.interleave(&[0, 1, 2, 3, 4, 5]).unwrap(), vec![0, 3, 1, 4, 2, 5]);
        // short input skips the empty cell
        assert_eq!(il.interleave(&[0, 1, 2, 3, 4]).unwrap(), vec![0, 3, 1, 4, 2]);
        assert!(il.interleave(&[0; 7]).is_err());
    }

    #[test]
    fn bursts_are_dispersed() {
        // consecutive positions of the interleaved stream come from input
        // positions `cols` apart, so deinterleaving spreads a received burst
        for (rows, cols) in [(32, 32), (16, 64), (42, 32)] {
            let il = BlockInterleaver::new(rows, cols).unwrap();
            let len = il.capacity();
            let perm = il.permutation(len).unwrap();
            for start in 0..len - 4 {
                let positions: Vec<usize> = (start..start + 4).map(|j| perm[j]).collect();
                let same_column = (start..start + 4).all(|j| j / rows == start / rows);
                for a in 0..4 {
                    for b in a + 1..4 {
                        let gap = positions[a].abs_diff(positions[b]);
                        if same_column {
                            assert!(gap >= cols);
                        } else {
                            assert!(gap >= 1);
                        }
                    }
                }
            }
            if rows == cols {
                // square arrays: every pair within a 4-burst is at least
                // `rows` apart, wrapping included
                for start in 0..len - 4 {
                    for a in start..start + 4 {
                        for b in a + 1..start + 4 {
                            assert!(perm[a].abs_diff(perm[b]) >= rows);
                        }
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn deinterleave_inverts(rows in 1usize..20, cols in 1usize..20, fill in 0.0f64..=1.0, seed in any::<u64>()) {
            let il = BlockInterleaver::new(rows, cols).unwrap();
            let len = ((il.capacity() as f64) * fill) as usize;
            let mut rng = seeded(seed);
            let x: Vec<u32> = (0..len).map(|_| rng.random()).collect();
            let y = il.interleave(&x).unwrap();
            prop_assert_eq!(il.deinterleave(&y).unwrap(), x.clone());
            let mut sorted = il.permutation(len).unwrap();
            sorted.sort_unstable();
            prop_assert_eq!(sorted, (0..len).collect::<Vec<_>>());
        }

        #[test]
        fn encoder_is_linear(seed in any::<u64>(), len in 1usize..120) {
            let mut rng = seeded(seed);
            let a = random_bits(len, &mut rng);
            let b = random_bits(len, &mut rng);
            let ab: Vec<u8> = a.iter().zip(&b).map(|(x, y)| x ^ y).collect();
            let lhs = conv_encode(&ab);
            let rhs: Vec<u8> = conv_encode(&a).iter().zip(conv_encode(&b)).map(|(x, y)| x ^ y).collect();
            prop_assert_eq!(lhs, rhs);
        }
    }
}
