//! Bitstream post-processing: decimation against short-range memory and
//! debiasing extractors.
//!
//! Afterpulsing correlates nearby gates, so keeping every seventh bit
//! (an interval of six skipped gates) restores independence before any
//! debiasing. The von Neumann extractor then trades rate for exactness:
//! on exchangeable input, discordant pairs `01` and `10` are equally
//! likely, so mapping them to `0` and `1` and discarding the rest yields
//! unbiased bits. The Peres extractor recycles what von Neumann throws
//! away (the pair XORs and the concordant halves) recursively and
//! approaches the entropy bound.

use crate::bitstream::BitStream;
use crate::error::{Error, Result};

/// Decimation factor that clears the afterpulse memory of the nominal
/// detector: correlations are elevated up to lag 6, so every seventh
/// bit is kept.
pub const DEFAULT_DECIMATION_FACTOR: usize = 7;

/// Recursion budget for [`peres`]; beyond this depth the residual
/// streams hold no extractable entropy worth the stack.
pub const DEFAULT_PERES_DEPTH: u32 = 32;

/// Zero/one composition of a stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasReport {
    pub p_zero: f64,
    pub p_one: f64,
    /// `p_zero - 1/2`; positive means zeros dominate.
    pub bias: f64,
}

/// Measures the bias of a non-empty stream.
pub fn measure_bias(stream: &BitStream) -> Result<BiasReport> {
    if stream.is_empty() {
        return Err(Error::EmptyStream);
    }
    let n = stream.len() as f64;
    let ones = stream.count_ones() as f64;
    let p_one = ones / n;
    let p_zero = 1.0 - p_one;
    Ok(BiasReport { p_zero, p_one, bias: p_zero - 0.5 })
}

/// Keeps the bits at indices `0, factor, 2 * factor, ...`. Factor 1 is
/// the identity; the output holds `ceil(len / factor)` bits.
pub fn decimate(stream: &BitStream, factor: usize) -> Result<BitStream> {
    if factor == 0 {
        return Err(Error::InvalidParameter(
            "decimation factor must be at least 1".into(),
        ));
    }
    if factor == 1 {
        return Ok(stream.clone());
    }
    let mut out = BitStream::with_capacity(stream.len().div_ceil(factor));
    let mut index = 0;
    while index < stream.len() {
        out.push(stream.bit(index));
        index += factor;
    }
    Ok(out)
}

/// Von Neumann extractor: non-overlapping pairs, `01 -> 0`, `10 -> 1`,
/// concordant pairs discarded, a trailing odd bit dropped.
pub fn von_neumann(stream: &BitStream) -> BitStream {
    let mut out = BitStream::new();
    let mut iter = stream.iter();
    while let (Some(a), Some(b)) = (iter.next(), iter.next()) {
        if a != b {
            out.push(a);
        }
    }
    out
}

/// Peres extractor: the von Neumann output of the stream, followed by
/// the extractor applied to the pair-XOR stream and to the first halves
/// of the concordant pairs, recursing up to `max_depth` levels. Depth 1
/// reduces to plain von Neumann.
pub fn peres(stream: &BitStream, max_depth: u32) -> Result<BitStream> {
    if max_depth == 0 {
        return Err(Error::InvalidParameter(
            "peres recursion depth must be at least 1".into(),
        ));
    }
    let bits: Vec<bool> = stream.iter().collect();
    let mut out = BitStream::new();
    peres_level(&bits, max_depth, &mut out);
    Ok(out)
}

fn peres_level(bits: &[bool], depth: u32, out: &mut BitStream) {
    if depth == 0 || bits.len() < 2 {
        return;
    }
    let mut xors = Vec::with_capacity(bits.len() / 2);
    let mut concordant = Vec::new();
    for pair in bits.chunks_exact(2) {
        let (a, b) = (pair[0], pair[1]);
        xors.push(a != b);
        if a != b {
            out.push(a);
        } else {
            concordant.push(a);
        }
    }
    peres_level(&xors, depth - 1, out);
    peres_level(&concordant, depth - 1, out);
}
