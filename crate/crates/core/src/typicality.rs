//! Strong (relative-frequency) typicality over arbitrary finite alphabets,
//! joint typicality of sequence pairs, and the exhaustive unique-decoding
//! primitive. Super symbols are handled by flattening n-blocks into an
//! opaque alphabet, so everything here is single-letter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{JointPmf, Pmf};

/// Number of occurrences of `a` in `seq`.
pub fn count(a: usize, seq: &[usize]) -> usize {
    seq.iter().filter(|&&s| s == a).count()
}

/// Number of occurrences of the pair `(a, b)` at matched positions.
pub fn count_pair(a: usize, b: usize, xs: &[usize], ys: &[usize]) -> usize {
    xs.iter().zip(ys).filter(|&(&x, &y)| x == a && y == b).count()
}

///// Strong typicality: every symbol frequency is strictly within
/// epsilon / |alphabet| of the reference law and zero-probability symbols
/// are absent.
pub fn is_typical(seq: &[usize], p: &Pmf, epsilon: f64) -> bool {
    if seq.is_empty() {
        return false;
    }
    let n = seq.len() as f64;
    let k = p.len();
    let mut counts = vec![0usize; k];
    for &s in seq {
        if s >= k {
            return false;
        }
        counts[s] += 1;
    }
    let slack = epsilon / k as f64;
    for (a, &c) in counts.iter().enumerate() {
        if c > 0 && p.probs[a] == 0.0 {
            return false;
        }
        if (c as f64 / n - p.probs[a]).abs() >= slack {
            return false;
        }
    }
    true
}

/// Joint strong typicality of a matched pair against a two-axis joint law;
/// the frequency bound uses the denominator |X||Y|.
pub fn is_jointly_typical(xs: &[usize], ys: &[usize], j: &JointPmf, epsilon: f64) -> Result<bool> {
    if xs.len() != ys.len() {
        return Err(Error::Mismatch(format!(
            "sequence lengths differ: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if j.axes.len() != 2 {
        return Err(Error::InvalidArgument("joint typicality needs a two-axis law".into()));
    }
    if xs.is_empty() {
        return Ok(false);
    }
    let kx = j.axes[0].size;
    let ky = j.axes[1].size;
    let n = xs.len() as f64;
    let mut counts = vec![0usize; kx * ky];
    for (&x, &y) in xs.iter().zip(ys) {
        if x >= kx || y >= ky {
            return Ok(false);
        }
        counts[x * ky + y] += 1;
    }
    let slack = epsilon / (kx * ky) as f64;
    for (cell, &c) in counts.iter().enumerate() {
        if c > 0 && j.probs[cell] == 0.0 {
            return Ok(false);
        }
        if (c as f64 / n - j.probs[cell]).abs() >= slack {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Checkable image-typicality assertion: given an epsilon-typical `xs` and a
/// per-letter map `f` into `out` symbols, the image sequence must be
/// delta-typical for the pushforward law with delta = epsilon * (|X| - 1).
pub fn function_image_typical_check(
    xs: &[usize],
    f: &[usize],
    p: &Pmf,
    epsilon: f64,
    out_size: usize,
) -> Result<bool> {
    if f.len() != p.len() {
        return Err(Error::Mismatch("map domain must match the reference alphabet".into()));
    }
    if f.iter().any(|&b| b >= out_size) {
        return Err(Error::InvalidArgument("map value out of output alphabet".into()));
    }
    let mut image_probs = vec![0.0; out_size];
    for (a, &b) in f.iter().enumerate() {
        image_probs[b] += p.probs[a];
    }
    let q = Pmf::new(crate::prob::Alphabet::new(out_size)?, image_probs)?;
    let ys: Vec<usize> = xs.iter().map(|&a| f[a]).collect();
    let delta = epsilon * (p.len() as f64 - 1.0);
    Ok(is_typical(&ys, &q, delta))
}

/// Outcome of exhaustive unique joint-typicality decoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecodeResult {
    /// Exactly one candidate was jointly typical.
    Decoded(usize),
    NoneTypical,
    Ambiguous,
}

/// Scan all candidates; succeed iff exactly one is jointly typical with `ys`.
pub fn decode_unique(
    candidates: &[Vec<usize>],
    ys: &[usize],
    j: &JointPmf,
    epsilon: f64,
) -> Result<DecodeResult> {
    let mut hit: Option<usize> = None;
    for (w, xs) in candidates.iter().enumerate() {
        if is_jointly_typical(xs, ys, j, epsilon)? {
            if hit.is_some() {
                return Ok(DecodeResult::Ambiguous);
            }
            hit = Some(w);
        }
    }
    Ok(match hit {
        Some(w) => DecodeResult::Decoded(w),
        None => DecodeResult::NoneTypical,
    })
}
