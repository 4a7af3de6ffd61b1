//! Statistical characterization of bit streams.
//!
//! The centre piece is the serial correlation coefficient
//!
//! ```text
//! a_k = sum_{i=1}^{N-k} (Y_i - Ybar)(Y_{i+k} - Ybar)
//!       / sum_{i=1}^{N} (Y_i - Ybar)^2
//! ```
//!
//! which for bits reduces to exact integer counts: the number of `(1,1)`
//! pairs at lag `k` plus one-counts of the stream's head and tail. The
//! kernels below count pairs 64 gates at a time with shifted word ANDs,
//! so a full 100-lag correlogram of a 1e8-bit stream is a single cheap
//! pass. Under the null (i.i.d. fair bits) `a_k` is asymptotically
//! normal with standard deviation `1/sqrt(N)`; `4/sqrt(N)` is the noise
//! floor the reports quote.
//!
//! The ENT-style battery aggregates bit entropy, a one-degree-of-freedom
//! chi-square with its exceedance probability, the arithmetic mean, a
//! Monte Carlo estimate of pi, and the lag-1 serial correlation.

use std::fmt::Write as _;

use crate::bitstream::BitStream;
use crate::error::{Error, Result};

/// Exact pair and margin counts behind `a_k` for one stream.
struct LagCounts {
    n: usize,
    ones: u64,
    /// ones among the first `k` bits
    head_ones: u64,
    /// ones among the last `k` bits
    tail_ones: u64,
    /// number of `i` with `Y_i = Y_{i+k} = 1`
    pairs: u64,
}

fn count_lag(words: &[u64], n: usize, ones: u64, k: usize) -> LagCounts {
    debug_assert!(k >= 1 && k < n);
    let fetch = |j: usize| -> u64 { words.get(j).copied().unwrap_or(0) };
    let (skip, shift) = (k / 64, (k % 64) as u32);
    let mut pairs = 0u64;
    for j in 0..words.len() {
        // Y_{i+k} aligned onto the bit positions of Y_i: bits `k` ahead
        // sit `skip` words later, `shift` positions to the left.
        let ahead = if shift == 0 {
            fetch(j + skip)
        } else {
            (fetch(j + skip) << shift) | (fetch(j + skip + 1) >> (64 - shift))
        };
        pairs += u64::from((words[j] & ahead).count_ones());
    }
    // Padding bits are zero, so pairs reaching past the end vanish on
    // their own; only the marginal one-counts need explicit windows.
    let head_ones = (0..k).filter(|&i| word_bit(words, i)).count() as u64;
    let tail_ones = (n - k..n).filter(|&i| word_bit(words, i)).count() as u64;
    LagCounts { n, ones, head_ones, tail_ones, pairs }
}

fn word_bit(words: &[u64], index: usize) -> bool {
    words[index / 64] & (1u64 << (63 - index % 64)) != 0
}

fn correlation_from_counts(c: &LagCounts, k: usize) -> f64 {
    let n = c.n as f64;
    let ybar = c.ones as f64 / n;
    // ones among the first and last n-k bits
    let head = (c.ones - c.tail_ones) as f64;
    let tail = (c.ones - c.head_ones) as f64;
    let numerator = c.pairs as f64 - ybar * (head + tail) + (n - k as f64) * ybar * ybar;
    let denominator = c.ones as f64 - n * ybar * ybar;
    numerator / denominator
}

fn check_lag_args(stream: &BitStream, k: usize) -> Result<()> {
    if stream.is_empty() {
        return Err(Error::EmptyStream);
    }
    if k == 0 || k >= stream.len() {
        return Err(Error::LagOutOfRange { k, n: stream.len() });
    }
    let ones = stream.count_ones();
    if ones == 0 || ones == stream.len() as u64 {
        return Err(Error::DegenerateStream);
    }
    Ok(())
}

/// Serial correlation coefficient at lag `k`.
pub fn serial_correlation(stream: &BitStream, k: usize) -> Result<f64> {
    check_lag_args(stream, k)?;
    let words = stream.to_words();
    let counts = count_lag(&words, stream.len(), stream.count_ones(), k);
    Ok(correlation_from_counts(&counts, k))
}

/// Serial correlation coefficients for every lag `1..=k_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct Correlogram {
    coefficients: Vec<f64>,
    n_bits: usize,
}

impl Correlogram {
    /// Coefficient at lag `k` (1-based).
    pub fn at(&self, k: usize) -> f64 {
        self.coefficients[k - 1]
    }

    pub fn k_max(&self) -> usize {
        self.coefficients.len()
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    /// `(k, a_k)` pairs, ascending in `k`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.coefficients.iter().enumerate().map(|(i, &a)| (i + 1, a))
    }

    /// `1/sqrt(N)`, one standard deviation of `a_k` under the null.
    pub fn sigma(&self) -> f64 {
        (self.n_bits as f64).sqrt().recip()
    }

    /// CSV serialization with a `k,a_k` header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,a_k\n");
        for (k, a) in self.iter() {
            writeln!(out, "{k},{a}").expect("string write");
        }
        out
    }
}

/// Computes `a_k` for `k` in `1..=k_max` in one pass over the packed
/// words.
pub fn correlogram(stream: &BitStream, k_max: usize) -> Result<Correlogram> {
    check_lag_args(stream, k_max)?;
    let words = stream.to_words();
    let n = stream.len();
    let ones = stream.count_ones();
    let coefficients = (1..=k_max)
        .map(|k| correlation_from_counts(&count_lag(&words, n, ones, k), k))
        .collect();
    Ok(Correlogram { coefficients, n_bits: n })
}

/// Shannon entropy of the bit distribution, in bits per bit.
pub fn shannon_entropy(stream: &BitStream) -> Result<f64> {
    if stream.is_empty() {
        return Err(Error::EmptyStream);
    }
    let p_one = stream.count_ones() as f64 / stream.len() as f64;
    Ok(entropy_term(p_one) + entropy_term(1.0 - p_one))
}

fn entropy_term(p: f64) -> f64 {
    if p == 0.0 { 0.0 } else { -p * p.log2() }
}

/// One-degree-of-freedom chi-square of the bit counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    /// Probability that a fair stream would exceed the statistic,
    /// `erfc(sqrt(statistic / 2))`.
    pub exceed_probability: f64,
}

/// Chi-square of ones/zeros against the fair expectation `N/2` each.
pub fn chi_square_bits(stream: &BitStream) -> Result<ChiSquare> {
    if stream.is_empty() {
        return Err(Error::EmptyStream);
    }
    let ones = stream.count_ones() as f64;
    let zeros = stream.count_zeros() as f64;
    let statistic = (ones - zeros) * (ones - zeros) / stream.len() as f64;
    Ok(ChiSquare { statistic, exceed_probability: chi_square_exceedance(statistic) })
}

/// Survival function of the one-degree-of-freedom chi-square
/// distribution via the complementary error function.
pub fn chi_square_exceedance(statistic: f64) -> f64 {
    libm::erfc((statistic / 2.0).sqrt())
}

/// Monte Carlo estimate of pi from 48-bit blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloPi {
    pub estimate: f64,
    pub error_percent: f64,
    pub samples: u64,
}

/// Interprets consecutive non-overlapping 48-bit blocks as points: the
/// first 24 bits (MSB-first) are x, the next 24 are y, each mapped to
/// `[0, 1)` as `v / 2^24`. The inside test `x^2 + y^2 < 1` runs on
/// integers (`vx^2 + vy^2 < 2^48`), so it is exact. Trailing bits short
/// of a block are ignored.
pub fn monte_carlo_pi(stream: &BitStream) -> Result<MonteCarloPi> {
    let samples = (stream.len() / 48) as u64;
    if samples == 0 {
        return Err(Error::InsufficientBits(stream.len()));
    }
    let bytes = stream.as_bytes();
    let mut inside = 0u64;
    for block in 0..samples as usize {
        // 48 bits are exactly 6 bytes and blocks stay byte-aligned.
        let b = &bytes[block * 6..block * 6 + 6];
        let x = u64::from(u32::from_be_bytes([0, b[0], b[1], b[2]]));
        let y = u64::from(u32::from_be_bytes([0, b[3], b[4], b[5]]));
        if x * x + y * y < 1 << 48 {
            inside += 1;
        }
    }
    let estimate = 4.0 * inside as f64 / samples as f64;
    let error_percent = (estimate - std::f64::consts::PI).abs() / std::f64::consts::PI * 100.0;
    Ok(MonteCarloPi { estimate, error_percent, samples })
}

/// The aggregate battery over one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct EntReport {
    pub n_bits: usize,
    pub entropy_bits_per_bit: f64,
    /// `100 (1 - H)`, clamped to `[0, 100]`: how much an ideal
    /// compressor could shave off.
    pub compression_percent: f64,
    pub chi_square: f64,
    pub chi_square_exceed_prob: f64,
    pub arithmetic_mean: f64,
    pub monte_carlo_pi: f64,
    pub pi_error_percent: f64,
    /// `None` when the stream is constant and `a_1` undefined.
    pub serial_correlation_lag1: Option<f64>,
}

/// Runs the whole battery. Needs at least one 48-bit block for the pi
/// estimate; a constant stream yields a report with the correlation
/// marked undefined rather than an error.
pub fn ent_report(stream: &BitStream) -> Result<EntReport> {
    let entropy = shannon_entropy(stream)?;
    let chi = chi_square_bits(stream)?;
    let pi = monte_carlo_pi(stream)?;
    let lag1 = match serial_correlation(stream, 1) {
        Ok(a1) => Some(a1),
        Err(Error::DegenerateStream) => None,
        Err(e) => return Err(e),
    };
    Ok(EntReport {
        n_bits: stream.len(),
        entropy_bits_per_bit: entropy,
        compression_percent: (100.0 * (1.0 - entropy)).clamp(0.0, 100.0),
        chi_square: chi.statistic,
        chi_square_exceed_prob: chi.exceed_probability,
        arithmetic_mean: stream.count_ones() as f64 / stream.len() as f64,
        monte_carlo_pi: pi.estimate,
        pi_error_percent: pi.error_percent,
        serial_correlation_lag1: lag1,
    })
}

impl EntReport {
    /// Human-readable rendering in the classic ENT layout.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Entropy = {:.6} bits per bit.", self.entropy_bits_per_bit);
        let _ = writeln!(out);
        let _ = writeln!(out, "Optimum compression would reduce the size");
        let _ = writeln!(
            out,
            "of this {} bit file by {:.0} percent.",
            self.n_bits, self.compression_percent
        );
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "Chi square distribution for {} samples is {:.2}, and randomly",
            self.n_bits, self.chi_square
        );
        let _ = writeln!(
            out,
            "would exceed this value {:.2} percent of the times.",
            self.chi_square_exceed_prob * 100.0
        );
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "Arithmetic mean value of data bits is {:.4} (0.5 = random).",
            self.arithmetic_mean
        );
        let _ = writeln!(
            out,
            "Monte Carlo value for Pi is {:.9} (error {:.2} percent).",
            self.monte_carlo_pi, self.pi_error_percent
        );
        match self.serial_correlation_lag1 {
            Some(a1) => {
                let _ = writeln!(
                    out,
                    "Serial correlation coefficient is {a1:.6} (totally uncorrelated = 0.0)."
                );
            }
            None => {
                let _ = writeln!(
                    out,
                    "Serial correlation coefficient is undefined (all values equal!)."
                );
            }
        }
        out
    }

    /// Machine-readable `key=value` rendering, one datum per line.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "n_bits={}", self.n_bits);
        let _ = writeln!(out, "entropy_bits_per_bit={}", self.entropy_bits_per_bit);
        let _ = writeln!(out, "compression_percent={}", self.compression_percent);
        let _ = writeln!(out, "chi_square={}", self.chi_square);
        let _ = writeln!(out, "chi_square_exceed_prob={}", self.chi_square_exceed_prob);
        let _ = writeln!(out, "arithmetic_mean={}", self.arithmetic_mean);
        let _ = writeln!(out, "monte_carlo_pi={}", self.monte_carlo_pi);
        let _ = writeln!(out, "pi_error_percent={}", self.pi_error_percent);
        match self.serial_correlation_lag1 {
            Some(a1) => {
                let _ = writeln!(out, "serial_correlation_lag1={a1}");
            }
            None => {
                let _ = writeln!(out, "serial_correlation_lag1=undefined");
            }
        }
        out
    }
}
