//! Executable random-coding schemes over sliding-block channels with Monte
//! Carlo error-probability estimation: nonfeedback codebooks of input
//! super-letters and feedback codebooks of strategy letters, both laid out
//! as n interleaved segments with a separator symbol, decoded by exhaustive
//! joint-typicality scanning against the exact frame-local block law.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};
use statrs::function::gamma::ln_gamma;

use crate::channel::{derived_channel, ShannonStrategy, SlidingBlockChannel};
use crate::error::{Error, Result};
use crate::prob::{product_size, unflatten, Alphabet, JointPmf, Pmf};
use crate::processes::{block_marginal, gallager_interleave, sample_path, NoiseModel, SamplePath};
use crate::tuning::{DECODER_ROW_CAP, DEFAULT_EPSILON};
use crate::typicality::{decode_unique, is_jointly_typical, DecodeResult};

/// Transmitted block length k = L n^2 + n.
pub fn block_length(n: usize, l: usize) -> usize {
    l * n * n + n
}

/// Number of message bits carried by one block at rate R: ceil(k R).
pub fn message_bits(k: usize, rate: f64) -> usize {
    (k as f64 * rate).ceil().max(0.0) as usize
}

/// The rate actually operated, ceil(kR)/k; converges to R as L grows.
pub fn actual_rate(k: usize, rate: f64) -> f64 {
    message_bits(k, rate) as f64 / k as f64
}

/// Deterministic per-stream seed derivation (splitmix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn sample_index(rng: &mut ChaCha12Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Nonfeedback codebook: 2^{ceil(kR)} rows of Ln super-letters from X^n,
/// drawn i.i.d. from the generating block law.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CodebookNF {
    pub n: usize,
    pub l: usize,
    pub rate: f64,
    pub k: usize,
    pub seed: u64,
    /// Generating block pmf over X^n (flat super-letter indices).
    pub pstar: Pmf,
    /// Rows of flat super-letter indices, length Ln each.
    pub rows: Vec<Vec<usize>>,
}

fn sample_rows(
    pstar: &Pmf,
    row_count: usize,
    row_len: usize,
    seed: u64,
) -> Vec<Vec<usize>> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..row_count)
        .map(|_| (0..row_len).map(|_| sample_index(&mut rng, &pstar.probs)).collect())
        .collect()
}

pub fn build_codebook_nf(
    pstar: &Pmf,
    n: usize,
    l: usize,
    rate: f64,
    seed: u64,
) -> Result<CodebookNF> {
    if n == 0 || l == 0 {
        return Err(Error::InvalidArgument("n and L must be >= 1".into()));
    }
    pstar.validate()?;
    let k = block_length(n, l);
    let bits = message_bits(k, rate);
    if bits >= usize::BITS as usize || (1usize << bits) > DECODER_ROW_CAP {
        return Err(Error::CapExceeded(format!(
            "2^{bits} rows exceed the {DECODER_ROW_CAP}-row decoder cap"
        )));
    }
    let rows = sample_rows(pstar, 1usize << bits, l * n, seed);
    Ok(CodebookNF { n, l, rate, k, seed, pstar: pstar.clone(), rows })
}

/// Lay one codeword out for transmission: the Ln super-letters are flattened
/// to Ln^2 scalars and split into n segments of Ln scalars, each segment
/// followed by one separator. The returned sequence of length k is over the
/// input alphabet extended with the separator symbol at index |X|.
pub fn interleave_transmit_nf(
    row: &[usize],
    n: usize,
    l: usize,
    x: Alphabet,
) -> Result<Vec<usize>> {
    if row.len() != l * n {
        return Err(Error::Mismatch(format!(
            "row has {} super-letters, expected Ln = {}",
            row.len(),
            l * n
        )));
    }
    let dims = vec![x.size; n];
    let cells = product_size(&dims)?;
    let mut scalars = Vec::with_capacity(l * n * n);
    let mut idx = vec![0usize; n];
    for &s in row {
        if s >= cells {
            return Err(Error::InvalidArgument("super-letter out of alphabet".into()));
        }
        unflatten(s, &dims, &mut idx);
        scalars.extend_from_slice(&idx);
    }
    let seg = l * n;
    let mut out = Vec::with_capacity(block_length(n, l));
    for j in 0..n {
        out.extend_from_slice(&scalars[j * seg..(j + 1) * seg]);
        out.push(x.size); // separator
    }
    Ok(out)
}

/// Replace separator symbols by a fixed input letter so the stream can be
/// fed to the channel (the separator carries no information).
pub fn realized_input(x_ext: &[usize], x: Alphabet) -> Vec<usize> {
    x_ext.iter().map(|&s| if s >= x.size { 0 } else { s }).collect()
}

/// Regroup a received length-k stream into Ln super-letters: drop the
/// separator positions with the per-segment phase shift (segment j reads
/// indices offset by j-1), then blank the first m coordinates of every
/// n-block to the null output. Returns flat super-letter indices over the
/// extended output alphabet.
pub fn extract_output_superblocks(
    y: &[usize],
    n: usize,
    l: usize,
    m: usize,
    y_ext: Alphabet,
) -> Result<Vec<usize>> {
    if m >= n {
        return Err(Error::InvalidArgument(format!("need m < n, got m = {m}, n = {n}")));
    }
    let null = y_ext.null.unwrap_or(y_ext.size - 1);
    let path = SamplePath { symbols: y.to_vec(), seed: 0 };
    let inner = gallager_interleave(&path, n, l)?;
    let dims = vec![y_ext.size; n];
    let mut out = Vec::with_capacity(l * n);
    for chunk in inner.symbols.chunks(n) {
        let mut flat = 0usize;
        for (t, &s) in chunk.iter().enumerate() {
            let v = if t < m { null } else { s };
            if v >= y_ext.size {
                return Err(Error::InvalidArgument("output symbol out of alphabet".into()));
            }
            flat = flat * dims[t] + v;
        }
        out.push(flat);
    }
    Ok(out)
}

/// Whether each trial draws a fresh independent codebook (the ensemble
/// average the analysis bounds) or all trials share one codebook.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodebookMode {
    FreshPerTrial,
    Shared,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentParams {
    pub n: usize,
    pub l: usize,
    pub rate: f64,
    pub trials: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub mode: CodebookMode,
    /// Maximum row count for literal exhaustive decoding.
    pub row_cap: usize,
}

impl ExperimentParams {
    pub fn new(n: usize, l: usize, rate: f64, trials: usize, epsilon: f64, seed: u64) -> Self {
        ExperimentParams {
            n,
            l,
            rate,
            trials,
            epsilon,
            seed,
            mode: CodebookMode::FreshPerTrial,
            row_cap: DECODER_ROW_CAP,
        }
    }

    pub fn with_default_epsilon(n: usize, l: usize, rate: f64, trials: usize, seed: u64) -> Self {
        Self::new(n, l, rate, trials, DEFAULT_EPSILON, seed)
    }
}

/// Monte Carlo error estimate with an exact (Clopper-Pearson) 95% interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialReport {
    pub n: usize,
    pub l: usize,
    pub rate: f64,
    pub actual_rate: f64,
    pub epsilon: f64,
    pub trials: usize,
    pub errors: usize,
    pub pe: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub seed: u64,
}

/// Exact binomial (Clopper-Pearson) confidence interval at the given level.
pub fn clopper_pearson(errors: usize, trials: usize, confidence: f64) -> Result<(f64, f64)> {
    if errors > trials || trials == 0 {
        return Err(Error::InvalidArgument("errors must be <= trials, trials >= 1".into()));
    }
    let alpha = 1.0 - confidence;
    let e = errors as f64;
    let t = trials as f64;
    let lo = if errors == 0 {
        0.0
    } else {
        Beta::new(e, t - e + 1.0)
            .map_err(|err| Error::InvalidArgument(err.to_string()))?
            .inverse_cdf(alpha / 2.0)
    };
    let hi = if errors == trials {
        1.0
    } else {
        Beta::new(e + 1.0, t - e)
            .map_err(|err| Error::InvalidArgument(err.to_string()))?
            .inverse_cdf(1.0 - alpha / 2.0)
    };
    Ok((lo, hi))
}

fn report(params: &ExperimentParams, k: usize, errors: usize) -> Result<TrialReport> {
    let (ci_lo, ci_hi) = clopper_pearson(errors, params.trials, 0.95)?;
    Ok(TrialReport {
        n: params.n,
        l: params.l,
        rate: params.rate,
        actual_rate: actual_rate(k, params.rate),
        epsilon: params.epsilon,
        trials: params.trials,
        errors,
        pe: errors as f64 / params.trials as f64,
        ci_lo,
        ci_hi,
        seed: params.seed,
    })
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + terms.iter().map(|&t| (t - m).exp()).sum::<f64>().ln()
}

fn ln_binom_pmf(c: usize, t: usize, p: f64) -> f64 {
    if p == 0.0 {
        return if t == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if p == 1.0 {
        return if t == c { 0.0 } else { f64::NEG_INFINITY };
    }
    ln_gamma(c as f64 + 1.0) - ln_gamma(t as f64 + 1.0) - ln_gamma((c - t) as f64 + 1.0)
        + t as f64 * p.ln()
        + (c - t) as f64 * (1.0 - p).ln()
}

/// ln P(an independent codeword row is jointly typical with the observed
/// block sequence), for a binary row alphabet. Given the per-symbol counts
/// c_b of the observation, the pair counts N(1,b) are independent binomials
/// across b, and joint typicality depends on the pair counts only, so the
/// probability is an exact product of binomial box probabilities (evaluated
/// with the same floating-point predicates as the literal decoder).
fn ln_wrong_row_typical_prob(
    obs: &[usize],
    joint: &JointPmf,
    p1: f64,
    epsilon: f64,
) -> f64 {
    let ky = joint.axes[1].size;
    debug_assert_eq!(joint.axes[0].size, 2);
    let n_tot = obs.len();
    let nf = n_tot as f64;
    let slack = epsilon / (2 * ky) as f64;
    let mut counts = vec![0usize; ky];
    for &b in obs {
        counts[b] += 1;
    }
    let cell_ok = |a: usize, b: usize, c: usize| -> bool {
        let j = joint.probs[a * ky + b];
        if c > 0 && j == 0.0 {
            return false;
        }
        (c as f64 / nf - j).abs() < slack
    };
    let mut ln_q = 0.0;
    for (b, &cb) in counts.iter().enumerate() {
        if cb == 0 {
            if !cell_ok(0, b, 0) || !cell_ok(1, b, 0) {
                return f64::NEG_INFINITY;
            }
            continue;
        }
        let mut terms = Vec::new();
        for t in 0..=cb {
            // t = N(1, b); N(0, b) = cb - t
            if cell_ok(1, b, t) && cell_ok(0, b, cb - t) {
                terms.push(ln_binom_pmf(cb, t, p1));
            }
        }
        let lq = log_sum_exp(&terms);
        if lq == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        ln_q += lq.min(0.0);
    }
    ln_q
}

/// P(none of the other 2^bits - 1 independent rows is jointly typical),
/// computed in log space so astronomically large codebooks are exact.
fn ghost_survival_prob(bits: usize, ln_q: f64) -> f64 {
    if bits == 0 || ln_q == f64::NEG_INFINITY {
        return 1.0;
    }
    // ln(M - 1) with M = 2^bits
    let ln_m = bits as f64 * std::f64::consts::LN_2
        + (-(2f64.powi(-(bits.min(60) as i32)))).ln_1p();
    // S = (M-1) * (-ln(1 - q)); survival = exp(-S)
    let ln_neg_ln1mq = if ln_q > -20.0 {
        let q = ln_q.exp().min(1.0);
        if q >= 1.0 {
            return 0.0;
        }
        (-(-q).ln_1p()).ln()
    } else {
        ln_q
    };
    let ln_s = ln_m + ln_neg_ln1mq;
    if ln_s > 30.0 {
        0.0
    } else {
        (-ln_s.exp()).exp()
    }
}

/// Reference decoding law for the nonfeedback scheme: p*(x-super) coupled
/// with the exact frame-local block conditional (warm-up coordinates null).
pub fn nf_reference_joint(
    channel: &SlidingBlockChannel,
    noise: &NoiseModel,
    pstar: &Pmf,
    n: usize,
) -> Result<JointPmf> {
    let zb = block_marginal(noise, n)?;
    let cond = channel.full_conditional(n, &zb)?;
    let x_cells = product_size(&vec![channel.x.size; n])?;
    let y_cells = product_size(&vec![channel.output_alphabet().size; n])?;
    if pstar.len() != x_cells {
        return Err(Error::Mismatch("pstar must be a pmf over X^n".into()));
    }
    let mut probs = vec![0.0; x_cells * y_cells];
    for xf in 0..x_cells {
        for yf in 0..y_cells {
            probs[xf * y_cells + yf] = pstar.probs[xf] * cond[xf * y_cells + yf];
        }
    }
    JointPmf::new(vec![Alphabet::new(x_cells)?, Alphabet::new(y_cells)?], probs)
}

fn decode_errors(
    result: DecodeResult,
    w: usize,
) -> bool {
    !matches!(result, DecodeResult::Decoded(d) if d == w)
}

/// Run the nonfeedback scheme: per trial, sample a message, transmit its
/// interleaved codeword through the channel against a fresh stationary noise
/// path, regroup the output, and decode by unique joint typicality over all
/// rows. When the codebook exceeds the literal-decoding cap and fresh
/// codebooks are in force, an exact ensemble-equivalent sampler is used for
/// binary super-alphabets: the true row is simulated literally and the
/// wrong-row event is drawn from its exact probability.
pub fn run_nf_experiment(
    channel: &SlidingBlockChannel,
    noise: &NoiseModel,
    pstar: &Pmf,
    params: &ExperimentParams,
) -> Result<TrialReport> {
    if params.trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    let n = params.n;
    let l = params.l;
    let k = block_length(n, l);
    let bits = message_bits(k, params.rate);
    let joint = nf_reference_joint(channel, noise, pstar, n)?;
    let x_cells = joint.axes[0].size;
    let y_ext = channel.output_alphabet();
    let literal = bits < usize::BITS as usize && (1usize << bits.min(63)) <= params.row_cap;

    let run_true_row = |row: &[usize], trial_seed: u64| -> Result<Vec<usize>> {
        let x_ext = interleave_transmit_nf(row, n, l, channel.x)?;
        let x_in = realized_input(&x_ext, channel.x);
        let z = sample_path(noise, k, derive_seed(trial_seed, 2))?;
        let y = channel.apply(&x_in, &z.symbols)?;
        extract_output_superblocks(&y, n, l, channel.m, y_ext)
    };

    let mut errors = 0usize;
    if literal {
        let shared = match params.mode {
            CodebookMode::Shared => {
                Some(build_codebook_nf(pstar, n, l, params.rate, derive_seed(params.seed, 0xC0DE))?)
            }
            CodebookMode::FreshPerTrial => None,
        };
        for t in 0..params.trials {
            let trial_seed = derive_seed(params.seed, t as u64 + 1);
            let cb;
            let book = match &shared {
                Some(b) => b,
                None => {
                    cb = build_codebook_nf(pstar, n, l, params.rate, derive_seed(trial_seed, 1))?;
                    &cb
                }
            };
            let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(trial_seed, 3));
            let w = rng.gen_range(0..book.rows.len());
            if book.rows.len() == 1 {
                continue; // a single message is always decoded correctly
            }
            let obs = run_true_row(&book.rows[w], trial_seed)?;
            let result = decode_unique(&book.rows, &obs, &joint, params.epsilon)?;
            if decode_errors(result, w) {
                errors += 1;
            }
        }
    } else {
        if params.mode != CodebookMode::FreshPerTrial {
            return Err(Error::CapExceeded(
                "shared-codebook decoding above the row cap is not supported".into(),
            ));
        }
        if x_cells != 2 {
            return Err(Error::CapExceeded(
                "ensemble-equivalent decoding above the row cap needs a binary super-alphabet"
                    .into(),
            ));
        }
        let p1 = pstar.probs[1];
        for t in 0..params.trials {
            let trial_seed = derive_seed(params.seed, t as u64 + 1);
            let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(trial_seed, 3));
            let row: Vec<usize> =
                (0..l * n).map(|_| sample_index(&mut rng, &pstar.probs)).collect();
            let obs = run_true_row(&row, trial_seed)?;
            let true_ok = is_jointly_typical(&row, &obs, &joint, params.epsilon)?;
            let ln_q = ln_wrong_row_typical_prob(&obs, &joint, p1, params.epsilon);
            let survive = ghost_survival_prob(bits, ln_q);
            let u: f64 = rng.gen();
            if !true_ok || u >= survive {
                errors += 1;
            }
        }
    }
    report(params, k, errors)
}

/// Feedback codebook: rows of Ln strategy super-letters from U_1 x .. x U_n,
/// drawn i.i.d. from the product of the strategy's per-position letter laws.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CodebookFB {
    pub n: usize,
    pub l: usize,
    pub rate: f64,
    pub k: usize,
    pub seed: u64,
    pub strategy: ShannonStrategy,
    /// Product law over flat strategy letters.
    pub pstar_u: Pmf,
    pub rows: Vec<Vec<usize>>,
}

/// The product law over flat strategy letters u = (u_1, .., u_n).
pub fn strategy_letter_pmf(strategy: &ShannonStrategy) -> Result<Pmf> {
    strategy.validate()?;
    let dims = strategy.u_sizes.clone();
    let cells = product_size(&dims)?;
    let mut probs = vec![0.0; cells];
    let mut idx = vec![0usize; dims.len()];
    for (flat, p) in probs.iter_mut().enumerate() {
        unflatten(flat, &dims, &mut idx);
        *p = idx.iter().enumerate().map(|(i, &u)| strategy.pmfs[i].probs[u]).product();
    }
    Pmf::new(Alphabet::new(cells)?, probs)
}

pub fn build_codebook_fb(
    strategy: &ShannonStrategy,
    n: usize,
    l: usize,
    rate: f64,
    seed: u64,
) -> Result<CodebookFB> {
    if n == 0 || l == 0 || strategy.n != n {
        return Err(Error::InvalidArgument("n and L must be >= 1 and match the strategy".into()));
    }
    let pstar_u = strategy_letter_pmf(strategy)?;
    let k = block_length(n, l);
    let bits = message_bits(k, rate);
    if bits >= usize::BITS as usize || (1usize << bits) > DECODER_ROW_CAP {
        return Err(Error::CapExceeded(format!(
            "2^{bits} rows exceed the {DECODER_ROW_CAP}-row decoder cap"
        )));
    }
    let rows = sample_rows(&pstar_u, 1usize << bits, l * n, seed);
    Ok(CodebookFB { n, l, rate, k, seed, strategy: strategy.clone(), pstar_u, rows })
}

/// Closed-loop transmission of one strategy row: within every n-frame the
/// input is x_t = f_t(u_t, frame-local x-history, frame-local y-history)
/// with histories reset at frame boundaries and warm-up output coordinates
/// presented to the encoder as null, exactly as in the derived block law.
/// Separator positions transmit the fixed stand-in letter. Returns the
/// extended input stream (separators explicit) and the received stream.
pub fn feedback_transmit_row(
    strategy: &ShannonStrategy,
    row: &[usize],
    channel: &SlidingBlockChannel,
    noise_path: &SamplePath,
    n: usize,
    l: usize,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let k = block_length(n, l);
    if row.len() != l * n {
        return Err(Error::Mismatch("row must hold Ln strategy letters".into()));
    }
    if noise_path.symbols.len() != k {
        return Err(Error::Mismatch("noise path must have length k".into()));
    }
    if strategy.n != n || strategy.x != channel.x {
        return Err(Error::Mismatch("strategy does not match channel/horizon".into()));
    }
    let u_dims = strategy.u_sizes.clone();
    let null_y = channel.null_output();
    let sep = channel.x.size;
    let seg = l * n;
    let mut x_ext = vec![0usize; k];
    let mut x_in = vec![0usize; k];
    let mut y = vec![0usize; k];
    let z = &noise_path.symbols;
    let mut u_idx = vec![0usize; n];
    let mut frame_x: Vec<usize> = Vec::with_capacity(n);
    let mut frame_y: Vec<usize> = Vec::with_capacity(n);
    for g in 0..k {
        let j = g / (seg + 1);
        let p = g % (seg + 1);
        let is_sep = p == seg;
        if is_sep {
            x_ext[g] = sep;
            x_in[g] = 0;
        } else {
            let scalar_index = j * seg + p; // position in the flattened row
            let frame = scalar_index / n;
            let t = scalar_index % n;
            if t == 0 {
                unflatten(row[frame], &u_dims, &mut u_idx);
                frame_x.clear();
                frame_y.clear();
            }
            let x = strategy.input_at(t, u_idx[t], &frame_x, &frame_y);
            x_ext[g] = x;
            x_in[g] = x;
            frame_x.push(x);
            // the received symbol at this position, computed causally
            let yi = if g < channel.m {
                null_y
            } else {
                channel.g_at(&x_in[g - channel.m..=g], &z[g - channel.m..=g])
            };
            y[g] = yi;
            // the encoder sees warm-up coordinates of the frame as null
            frame_y.push(if t < channel.m { null_y } else { yi });
        }
        if is_sep {
            let yi = if g < channel.m {
                null_y
            } else {
                channel.g_at(&x_in[g - channel.m..=g], &z[g - channel.m..=g])
            };
            y[g] = yi;
        }
    }
    Ok((x_ext, y))
}

/// Transmit codeword `w` of a feedback codebook over the channel.
pub fn feedback_transmit(
    cb: &CodebookFB,
    w: usize,
    channel: &SlidingBlockChannel,
    noise_path: &SamplePath,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let row = cb.rows.get(w).ok_or_else(|| Error::InvalidArgument(format!("no row {w}")))?;
    feedback_transmit_row(&cb.strategy, row, channel, noise_path, cb.n, cb.l)
}

/// Reference decoding law for the feedback scheme: the product strategy
/// letter law coupled with the derived super channel.
pub fn fb_reference_joint(
    channel: &SlidingBlockChannel,
    noise: &NoiseModel,
    strategy: &ShannonStrategy,
    n: usize,
) -> Result<JointPmf> {
    let zb = block_marginal(noise, n)?;
    let derived = derived_channel(channel, strategy, &zb, n)?;
    let pstar_u = strategy_letter_pmf(strategy)?;
    let u_cells = derived.u_cells();
    let y_cells = derived.y_cells();
    let mut probs = vec![0.0; u_cells * y_cells];
    for uf in 0..u_cells {
        for yf in 0..y_cells {
            probs[uf * y_cells + yf] = pstar_u.probs[uf] * derived.probs[uf * y_cells + yf];
        }
    }
    JointPmf::new(vec![Alphabet::new(u_cells)?, Alphabet::new(y_cells)?], probs)
}

/// Run the feedback scheme; mirrors `run_nf_experiment` with strategy rows
/// decoded against the regrouped output under the derived block law.
pub fn run_fb_experiment(
    channel: &SlidingBlockChannel,
    noise: &NoiseModel,
    strategy: &ShannonStrategy,
    params: &ExperimentParams,
) -> Result<TrialReport> {
    if params.trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    let n = params.n;
    let l = params.l;
    let k = block_length(n, l);
    let bits = message_bits(k, params.rate);
    let joint = fb_reference_joint(channel, noise, strategy, n)?;
    let u_cells = joint.axes[0].size;
    let y_ext = channel.output_alphabet();
    let pstar_u = strategy_letter_pmf(strategy)?;
    let literal = bits < usize::BITS as usize && (1usize << bits.min(63)) <= params.row_cap;

    let run_true_row = |row: &[usize], trial_seed: u64| -> Result<Vec<usize>> {
        let z = sample_path(noise, k, derive_seed(trial_seed, 2))?;
        let (_x, y) = feedback_transmit_row(strategy, row, channel, &z, n, l)?;
        extract_output_superblocks(&y, n, l, channel.m, y_ext)
    };

    let mut errors = 0usize;
    if literal {
        let shared = match params.mode {
            CodebookMode::Shared => Some(build_codebook_fb(
                strategy,
                n,
                l,
                params.rate,
                derive_seed(params.seed, 0xC0DE),
            )?),
            CodebookMode::FreshPerTrial => None,
        };
        for t in 0..params.trials {
            let trial_seed = derive_seed(params.seed, t as u64 + 1);
            let cb;
            let book = match &shared {
                Some(b) => b,
                None => {
                    cb = build_codebook_fb(strategy, n, l, params.rate, derive_seed(trial_seed, 1))?;
                    &cb
                }
            };
            let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(trial_seed, 3));
            let w = rng.gen_range(0..book.rows.len());
            if book.rows.len() == 1 {
                continue;
            }
            let obs = run_true_row(&book.rows[w], trial_seed)?;
            let result = decode_unique(&book.rows, &obs, &joint, params.epsilon)?;
            if decode_errors(result, w) {
                errors += 1;
            }
        }
    } else {
        if params.mode != CodebookMode::FreshPerTrial {
            return Err(Error::CapExceeded(
                "shared-codebook decoding above the row cap is not supported".into(),
            ));
        }
        if u_cells != 2 {
            return Err(Error::CapExceeded(
                "ensemble-equivalent decoding above the row cap needs a binary strategy alphabet"
                    .into(),
            ));
        }
        let p1 = pstar_u.probs[1];
        for t in 0..params.trials {
            let trial_seed = derive_seed(params.seed, t as u64 + 1);
            let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(trial_seed, 3));
            let row: Vec<usize> =
                (0..l * n).map(|_| sample_index(&mut rng, &pstar_u.probs)).collect();
            let obs = run_true_row(&row, trial_seed)?;
            let true_ok = is_jointly_typical(&row, &obs, &joint, params.epsilon)?;
            let ln_q = ln_wrong_row_typical_prob(&obs, &joint, p1, params.epsilon);
            let survive = ghost_survival_prob(bits, ln_q);
            let u: f64 = rng.gen();
            if !true_ok || u >= survive {
                errors += 1;
            }
        }
    }
    report(params, k, errors)
}
