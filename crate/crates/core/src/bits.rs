//! Bit strings, deterministic seeded randomness, and randomness accounting.
//!
//! Bit order is big-endian everywhere: index 0 is the leftmost (most
//! significant) bit of a chunk. This is the single convention used for
//! setting selection, hash inputs, and fixtures.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::fmt;

/// Errors from bit-string manipulation.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BitsError {
    /// Input length is not divisible by 3 (the fixed 1:2 partition).
    #[error("bit-string length {len} is not divisible by 3")]
    IndivisibleLength { len: usize },
    /// Input length is not divisible by the chunk width.
    #[error("bit-string length {len} cannot be chunked at width {width}")]
    BadChunking { len: usize, width: usize },
}

/// An ordered, finite sequence of bits. The empty string is permitted.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BitString {
    bits: Vec<bool>,
}

impl BitString {
    pub fn new() -> Self {
        Self { bits: Vec::new() }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    /// All-zero string of length `n`.
    pub fn zeros(n: usize) -> Self {
        Self {
            bits: vec![false; n],
        }
    }

    /// Parses a string of `'0'`/`'1'` characters, e.g. `"0111"`.
    pub fn parse(s: &str) -> Option<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Some(false),
                '1' => Some(true),
                _ => None,
            })
            .collect::<Option<Vec<bool>>>()
            .map(Self::from_bits)
    }

    /// Big-endian decoding of `width` bits of `value` (bit 0 leftmost).
    pub fn from_index(value: u64, width: usize) -> Self {
        assert!(width <= 64, "index width {width} exceeds 64 bits");
        let bits = (0..width)
            .map(|i| (value >> (width - 1 - i)) & 1 == 1)
            .collect();
        Self { bits }
    }

    /// Big-endian integer value of the whole string. Requires length <= 63.
    pub fn to_index(&self) -> u64 {
        assert!(self.len() <= 63, "bit string too long for an index");
        self.bits
            .iter()
            .fold(0u64, |acc, &b| (acc << 1) | u64::from(b))
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bit(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn push(&mut self, bit: bool) {
        self.bits.push(bit);
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.bits.iter().copied()
    }

    /// Concatenation `self || other`.
    pub fn concat(&self, other: &BitString) -> BitString {
        let mut bits = self.bits.clone();
        bits.extend_from_slice(&other.bits);
        BitString { bits }
    }

    pub fn extend(&mut self, other: &BitString) {
        self.bits.extend_from_slice(&other.bits);
    }

    /// Splits into (prefix of length `mid`, remainder).
    pub fn split_at(&self, mid: usize) -> (BitString, BitString) {
        let (a, b) = self.bits.split_at(mid);
        (
            BitString { bits: a.to_vec() },
            BitString { bits: b.to_vec() },
        )
    }

    /// Prefix of length `n`.
    pub fn prefix(&self, n: usize) -> BitString {
        BitString {
            bits: self.bits[..n].to_vec(),
        }
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            write!(f, "{}", u8::from(b))?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({self})")
    }
}

impl FromIterator<bool> for BitString {
    fn from_iter<T: IntoIterator<Item = bool>>(iter: T) -> Self {
        Self {
            bits: iter.into_iter().collect(),
        }
    }
}

/// Deterministic seeded generator: the same seed yields the same bit
/// sequence on every platform. Models Bob's initially private string
/// source; not a security claim.
#[derive(Clone, Debug)]
pub struct SeededRng {
    inner: ChaCha12Rng,
}

impl SeededRng {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            inner: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    /// Derived generator for trial `index` (seed + index, wrapping).
    pub fn derive(seed: u64, index: u64) -> Self {
        Self::from_seed(seed.wrapping_add(index))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform f64 in [0, 1) with 53 random bits.
    pub fn unit_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn bit(&mut self) -> bool {
        self.next_u64() >> 63 == 1
    }

    /// Uniform integer in [0, n).
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        // Rejection sampling to avoid modulo bias.
        let zone = u64::MAX - (u64::MAX - n + 1) % n;
        loop {
            let v = self.next_u64();
            if v <= zone {
                return v % n;
            }
        }
    }
}

/// Draws `n` fresh bits, advancing the generator. Ledger-neutral:
/// accounting is the caller's job.
pub fn random_bits(rng: &mut SeededRng, n: usize) -> BitString {
    let mut bits = Vec::with_capacity(n);
    let mut word = 0u64;
    let mut left = 0usize;
    for _ in 0..n {
        if left == 0 {
            word = rng.next_u64();
            left = 64;
        }
        bits.push(word >> 63 == 1);
        word <<= 1;
        left -= 1;
    }
    BitString::from_bits(bits)
}

/// Splits `x` into `(x1, r)` with the fixed 1:2 length ratio, so that
/// `x = x1 || r`. This ratio is specific to the 3-device test with
/// equal-length two-universal seeding; other test families compute their
/// own split in the protocol engine.
pub fn partition_input(x: &BitString) -> Result<(BitString, BitString), BitsError> {
    if x.len() % 3 != 0 {
        return Err(BitsError::IndivisibleLength { len: x.len() });
    }
    Ok(x.split_at(x.len() / 3))
}

/// Interprets consecutive `width`-bit chunks of `x` as big-endian integers.
pub fn chunk_to_indices(x: &BitString, width: usize) -> Result<Vec<u64>, BitsError> {
    assert!(width >= 1, "chunk width must be at least 1");
    if x.len() % width != 0 {
        return Err(BitsError::BadChunking {
            len: x.len(),
            width,
        });
    }
    Ok(x.as_slice()
        .chunks(width)
        .map(|chunk| chunk.iter().fold(0u64, |acc, &b| (acc << 1) | u64::from(b)))
        .collect())
}

/// Running account of randomness consumed and produced by a protocol run.
/// All counters are monotone nondecreasing.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RandomnessLedger {
    bits_consumed: u64,
    bits_emitted_raw: u64,
    bits_output_final: u64,
    bits_discarded: u64,
}

impl RandomnessLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_consumed(&mut self, n: u64) {
        self.bits_consumed += n;
    }

    pub fn record_emitted_raw(&mut self, n: u64) {
        self.bits_emitted_raw += n;
    }

    pub fn record_output_final(&mut self, n: u64) {
        self.bits_output_final += n;
    }

    /// Bits dropped when an iterated stage truncates its input to a
    /// valid length.
    pub fn record_discarded(&mut self, n: u64) {
        self.bits_discarded += n;
    }

    pub fn bits_consumed(&self) -> u64 {
        self.bits_consumed
    }

    pub fn bits_emitted_raw(&self) -> u64 {
        self.bits_emitted_raw
    }

    pub fn bits_output_final(&self) -> u64 {
        self.bits_output_final
    }

    pub fn bits_discarded(&self) -> u64 {
        self.bits_discarded
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn random_bits_is_deterministic() {
        let a = random_bits(&mut SeededRng::from_seed(1), 8);
        let b = random_bits(&mut SeededRng::from_seed(1), 8);
        assert_eq!(a, b);
        assert_eq!(a.len(), 8);
    }

    #[test]
    fn random_bits_zero_is_empty() {
        let s = random_bits(&mut SeededRng::from_seed(7), 0);
        assert!(s.is_empty());
    }

    // Fixture frozen from the chosen generator (ChaCha12, seed_from_u64);
    // guards against silent generator changes.
    #[test]
    fn seed_fixture_and_distinct_seeds() {
        let s1 = random_bits(&mut SeededRng::from_seed(1), 64);
        let s2 = random_bits(&mut SeededRng::from_seed(2), 64);
        assert_ne!(s1, s2);
        assert_eq!(
            s1.to_string(),
            SEED1_FIXTURE,
            "seed-1 output drifted from the recorded fixture"
        );
    }

    const SEED1_FIXTURE: &str =
        "1111100101101000000110100110010011010011001100000001100001100001";

    #[test]
    fn partition_lengths() {
        let x = BitString::from_index(0b1010_1010_1010, 12);
        let (x1, r) = partition_input(&x).unwrap();
        assert_eq!((x1.len(), r.len()), (4, 8));
        assert_eq!(x1.concat(&r), x);

        let x = BitString::from_index(0b101, 3);
        let (x1, r) = partition_input(&x).unwrap();
        assert_eq!((x1.len(), r.len()), (1, 2));
    }

    #[test]
    fn partition_rejects_indivisible() {
        let x = BitString::zeros(4);
        assert_eq!(
            partition_input(&x),
            Err(BitsError::IndivisibleLength { len: 4 })
        );
    }

    #[test]
    fn chunking_examples() {
        let x = BitString::parse("0111").unwrap();
        assert_eq!(chunk_to_indices(&x, 2).unwrap(), vec![1, 3]);
        let x = BitString::parse("11").unwrap();
        assert_eq!(chunk_to_indices(&x, 2).unwrap(), vec![3]);
        let x = BitString::parse("111").unwrap();
        assert_eq!(
            chunk_to_indices(&x, 2),
            Err(BitsError::BadChunking { len: 3, width: 2 })
        );
    }

    #[test]
    fn chunk_index_roundtrip_all_small_widths() {
        for width in 1..=4usize {
            for value in 0..(1u64 << width) {
                let s = BitString::from_index(value, width);
                assert_eq!(chunk_to_indices(&s, width).unwrap(), vec![value]);
            }
            // Multi-chunk: three concatenated values decode in order.
            let vals = [0u64, (1 << width) - 1, 1 % (1 << width)];
            let mut s = BitString::new();
            for &v in &vals {
                s.extend(&BitString::from_index(v, width));
            }
            assert_eq!(chunk_to_indices(&s, width).unwrap(), vals.to_vec());
        }
    }

    #[test]
    fn partition_is_bijective_small_lengths_exhaustive() {
        // Exhaustive for m <= 5 (lengths 3, 6, ..., 15).
        for m in 1..=5usize {
            let len = 3 * m;
            for value in 0..(1u64 << len) {
                let x = BitString::from_index(value, len);
                let (x1, r) = partition_input(&x).unwrap();
                assert_eq!(x1.len() * 2, r.len());
                assert_eq!(x1.concat(&r), x);
            }
        }
    }

    proptest! {
        #[test]
        fn partition_is_bijective_random_longer(m in 6usize..=8, seed in any::<u64>()) {
            let x = random_bits(&mut SeededRng::from_seed(seed), 3 * m);
            let (x1, r) = partition_input(&x).unwrap();
            prop_assert_eq!(x1.len(), m);
            prop_assert_eq!(r.len(), 2 * m);
            prop_assert_eq!(x1.concat(&r), x);
        }

        #[test]
        fn index_roundtrip(width in 1usize..=16, value in any::<u64>()) {
            let v = value & ((1 << width) - 1);
            let s = BitString::from_index(v, width);
            prop_assert_eq!(s.len(), width);
            prop_assert_eq!(s.to_index(), v);
        }
    }

    #[test]
    fn generator_passes_chisquare_uniformity() {
        // 1e5 draws of 4-bit values against 16 uniform bins. Critical
        // value for chi-square, df = 15, significance 1e-3: 37.697.
        // Generator sanity only, not a security claim.
        let mut rng = SeededRng::from_seed(42);
        let draws = 100_000usize;
        let mut counts = [0u64; 16];
        for _ in 0..draws {
            let v = random_bits(&mut rng, 4).to_index();
            counts[v as usize] += 1;
        }
        let expected = draws as f64 / 16.0;
        let stat: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(
            stat < 37.697,
            "chi-square statistic {stat} exceeds the 1e-3 critical value"
        );
    }

    #[test]
    fn ledger_counters_accumulate() {
        let mut ledger = RandomnessLedger::new();
        ledger.record_consumed(12);
        ledger.record_emitted_raw(4);
        ledger.record_output_final(14);
        ledger.record_consumed(3);
        assert_eq!(ledger.bits_consumed(), 15);
        assert_eq!(ledger.bits_emitted_raw(), 4);
        assert_eq!(ledger.bits_output_final(), 14);
        assert_eq!(ledger.bits_discarded(), 0);
    }
}
