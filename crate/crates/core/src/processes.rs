//! Stationary ergodic noise sources: exact block marginals, the ergodic
//! decomposition of the n-letter super process, and the shifted-block
//! interleaving that restores super-letter ergodicity.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{flatten, product_size, Alphabet, Pmf};

/// A stationary ergodic noise source over a finite alphabet.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    Iid { pmf: Pmf },
    Markov {
        alphabet: Alphabet,
        /// Row-major transition matrix p(z' | z).
        transition: Vec<f64>,
        /// Stationary law; must satisfy pi P = pi.
        stationary: Pmf,
    },
    HiddenMarkov {
        alphabet: Alphabet,
        states: usize,
        /// Row-major state transition p(s' | s).
        transition: Vec<f64>,
        /// Stationary state law.
        stationary: Vec<f64>,
        /// Row-major emission p(z | s).
        emission: Vec<f64>,
    },
    Periodic {
        alphabet: Alphabet,
        /// Deterministic cycle of symbols, visited with a uniform random phase.
        cycle: Vec<usize>,
    },
}

fn check_rows(table: &[f64], rows: usize, cols: usize, what: &str) -> Result<()> {
    if table.len() != rows * cols {
        return Err(Error::Mismatch(format!("{what}: expected {rows}x{cols} table")));
    }
    for (r, row) in table.chunks(cols).enumerate() {
        if row.iter().any(|&p| p.is_nan() || p < 0.0) {
            return Err(Error::InvalidPmf(format!("{what}: negative entry in row {r}")));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidPmf(format!("{what}: row {r} sums to {s}")));
        }
    }
    Ok(())
}

impl NoiseModel {
    pub fn alphabet(&self) -> Alphabet {
        match self {
            NoiseModel::Iid { pmf } => pmf.alphabet,
            NoiseModel::Markov { alphabet, .. } => *alphabet,
            NoiseModel::HiddenMarkov { alphabet, .. } => *alphabet,
            NoiseModel::Periodic { alphabet, .. } => *alphabet,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseModel::Iid { pmf } => pmf.validate(),
            NoiseModel::Markov { alphabet, transition, stationary } => {
                let k = alphabet.size;
                check_rows(transition, k, k, "markov transition")?;
                stationary.validate()?;
                if stationary.alphabet.size != k {
                    return Err(Error::Mismatch("stationary pmf size != alphabet".into()));
                }
                for j in 0..k {
                    let pj: f64 = (0..k).map(|i| stationary.probs[i] * transition[i * k + j]).sum();
                    if (pj - stationary.probs[j]).abs() > 1e-10 {
                        return Err(Error::InvalidPmf(format!(
                            "stationary pmf does not satisfy pi P = pi at symbol {j}"
                        )));
                    }
                }
                Ok(())
            }
            NoiseModel::HiddenMarkov { alphabet, states, transition, stationary, emission } => {
                check_rows(transition, *states, *states, "hmm transition")?;
                check_rows(emission, *states, alphabet.size, "hmm emission")?;
                if stationary.len() != *states {
                    return Err(Error::Mismatch("hmm stationary length != states".into()));
                }
                for j in 0..*states {
                    let pj: f64 =
                        (0..*states).map(|i| stationary[i] * transition[i * states + j]).sum();
                    if (pj - stationary[j]).abs() > 1e-10 {
                        return Err(Error::InvalidPmf(format!(
                            "hmm stationary law does not satisfy pi P = pi at state {j}"
                        )));
                    }
                }
                Ok(())
            }
            NoiseModel::Periodic { alphabet, cycle } => {
                if cycle.is_empty() {
                    return Err(Error::InvalidArgument("periodic cycle is empty".into()));
                }
                if cycle.iter().any(|&z| !alphabet.contains(z)) {
                    return Err(Error::InvalidArgument("cycle symbol out of alphabet".into()));
                }
                Ok(())
            }
        }
    }
}

/// Stationary distribution of a row-stochastic matrix by power iteration.
/// Convenience for building `NoiseModel::Markov` values.
pub fn stationary_of(transition: &[f64], k: usize) -> Result<Pmf> {
    check_rows(transition, k, k, "transition")?;
    let mut pi = vec![1.0 / k as f64; k];
    for _ in 0..100_000 {
        let mut next = vec![0.0; k];
        for i in 0..k {
            for j in 0..k {
                next[j] += pi[i] * transition[i * k + j];
            }
        }
        let delta: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if delta < 1e-14 {
            break;
        }
    }
    Pmf::new(Alphabet::new(k)?, pi)
}

/// A finite realization of the noise process, with the seed that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePath {
    pub symbols: Vec<usize>,
    pub seed: u64,
}

fn draw(rng: &mut ChaCha12Rng, probs: &[f64]) -> usize {
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

/// Sample a length-`length` path. Deterministic given the seed.
pub fn sample_path(model: &NoiseModel, length: usize, seed: u64) -> Result<SamplePath> {
    if length == 0 {
        return Err(Error::InvalidArgument("path length must be >= 1".into()));
    }
    model.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut symbols = Vec::with_capacity(length);
    match model {
        NoiseModel::Iid { pmf } => {
            for _ in 0..length {
                symbols.push(draw(&mut rng, &pmf.probs));
            }
        }
        NoiseModel::Markov { alphabet, transition, stationary } => {
            let k = alphabet.size;
            let mut z = draw(&mut rng, &stationary.probs);
            symbols.push(z);
            for _ in 1..length {
                z = draw(&mut rng, &transition[z * k..(z + 1) * k]);
                symbols.push(z);
            }
        }
        NoiseModel::HiddenMarkov { alphabet, states, transition, stationary, emission } => {
            let k = alphabet.size;
            let mut s = draw(&mut rng, stationary);
            for _ in 0..length {
                symbols.push(draw(&mut rng, &emission[s * k..(s + 1) * k]));
                s = draw(&mut rng, &transition[s * states..(s + 1) * states]);
            }
        }
        NoiseModel::Periodic { cycle, .. } => {
            let d = cycle.len();
            let phase = rng.gen_range(0..d);
            for i in 0..length {
                symbols.push(cycle[(phase + i) % d]);
            }
        }
    }
    Ok(SamplePath { symbols, seed })
}

/// Exact stationary n-block law as a pmf over the opaque super alphabet Z^n.
pub fn block_marginal(model: &NoiseModel, n: usize) -> Result<Pmf> {
    model.validate()?;
    let z = model.alphabet().size;
    let dims = vec![z; n];
    let cells = product_size(&dims)?;
    let mut probs = vec![0.0; cells];
    let mut block = vec![0usize; n];
    match model {
        NoiseModel::Iid { pmf } => {
            for (flat, slot) in probs.iter_mut().enumerate() {
                crate::prob::unflatten(flat, &dims, &mut block);
                *slot = block.iter().map(|&b| pmf.probs[b]).product();
            }
        }
        NoiseModel::Markov { alphabet, transition, stationary } => {
            let k = alphabet.size;
            for (flat, slot) in probs.iter_mut().enumerate() {
                crate::prob::unflatten(flat, &dims, &mut block);
                let mut p = stationary.probs[block[0]];
                for w in block.windows(2) {
                    p *= transition[w[0] * k + w[1]];
                }
                *slot = p;
            }
        }
        NoiseModel::HiddenMarkov { alphabet, states, transition, stationary, emission } => {
            let k = alphabet.size;
            for (flat, slot) in probs.iter_mut().enumerate() {
                crate::prob::unflatten(flat, &dims, &mut block);
                // forward recursion over hidden states
                let mut alpha: Vec<f64> =
                    (0..*states).map(|s| stationary[s] * emission[s * k + block[0]]).collect();
                for &sym in &block[1..] {
                    let mut next = vec![0.0; *states];
                    for s in 0..*states {
                        if alpha[s] == 0.0 {
                            continue;
                        }
                        for t in 0..*states {
                            next[t] += alpha[s] * transition[s * states + t] * emission[t * k + sym];
                        }
                    }
                    alpha = next;
                }
                *slot = alpha.iter().sum();
            }
        }
        NoiseModel::Periodic { cycle, .. } => {
            let d = cycle.len();
            let w = 1.0 / d as f64;
            for phase in 0..d {
                for (i, b) in block.iter_mut().enumerate() {
                    *b = cycle[(phase + i) % d];
                }
                probs[flatten(&dims, &block)] += w;
            }
        }
    }
    Pmf::new(Alphabet::new(cells)?, probs)
}

/// The ergodic modes of the n-letter super process.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErgodicDecomposition {
    pub n: usize,
    pub n_prime: usize,
    /// Mode block laws over Z^n; each mode has weight 1 / n_prime.
    pub modes: Vec<Pmf>,
    /// The one-step shift maps mode k to mode (k + phase_shift) mod n_prime.
    pub phase_shift: usize,
}

impl ErgodicDecomposition {
    pub fn mode_weight(&self) -> f64 {
        1.0 / self.n_prime as f64
    }

    /// Mixture of the mode laws; must equal the unconditioned block marginal.
    pub fn mixture(&self) -> Result<Pmf> {
        let w = self.mode_weight();
        let cells = self.modes[0].len();
        let mut probs = vec![0.0; cells];
        for m in &self.modes {
            for (slot, &p) in probs.iter_mut().zip(&m.probs) {
                *slot += w * p;
            }
        }
        Pmf::new(Alphabet::new(cells)?, probs)
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Period of an irreducible chain from BFS levels over the support graph.
fn chain_period(transition: &[f64], k: usize) -> (usize, Vec<usize>) {
    let mut level = vec![usize::MAX; k];
    level[0] = 0;
    let mut queue = std::collections::VecDeque::from([0usize]);
    let mut d = 0usize;
    let mut edges = Vec::new();
    while let Some(u) = queue.pop_front() {
        for v in 0..k {
            if transition[u * k + v] > 0.0 {
                if level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
                edges.push((u, v));
            }
        }
    }
    for (u, v) in edges {
        if level[u] != usize::MAX && level[v] != usize::MAX {
            d = gcd(d, (level[u] + 1).abs_diff(level[v]));
        }
    }
    if d == 0 {
        d = 1;
    }
    (d, level)
}

/// Ergodic decomposition of the n-block super process.
///
/// Supported for iid (trivially one mode), periodic, and markov models; the
/// number of modes is gcd(n, d) for chain period d, and the modes are the
/// orbits of the cyclic classes under the shift-by-n action.
pub fn super_decompose(model: &NoiseModel, n: usize) -> Result<ErgodicDecomposition> {
    model.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    match model {
        NoiseModel::Iid { .. } => {
            let marginal = block_marginal(model, n)?;
            Ok(ErgodicDecomposition { n, n_prime: 1, modes: vec![marginal], phase_shift: 0 })
        }
        NoiseModel::Periodic { alphabet, cycle } => {
            let d = cycle.len();
            let g = gcd(n, d);
            let z = alphabet.size;
            let dims = vec![z; n];
            let cells = product_size(&dims)?;
            let per_mode = d / g;
            let w = 1.0 / per_mode as f64;
            let mut modes = Vec::with_capacity(g);
            let mut block = vec![0usize; n];
            for r in 0..g {
                let mut probs = vec![0.0; cells];
                for q in 0..per_mode {
                    let phase = r + q * g;
                    for (i, b) in block.iter_mut().enumerate() {
                        *b = cycle[(phase + i) % d];
                    }
                    probs[flatten(&dims, &block)] += w;
                }
                modes.push(Pmf::new(Alphabet::new(cells)?, probs)?);
            }
            Ok(ErgodicDecomposition { n, n_prime: g, modes, phase_shift: 1 % g })
        }
        NoiseModel::Markov { alphabet, transition, stationary } => {
            let k = alphabet.size;
            let (d, level) = chain_period(transition, k);
            let g = gcd(n, d);
            let dims = vec![k; n];
            let cells = product_size(&dims)?;
            let mut modes = Vec::with_capacity(g);
            let mut block = vec![0usize; n];
            for r in 0..g {
                // start classes in this orbit: c == r (mod g)
                let mut probs = vec![0.0; cells];
                let mut class_mass = 0.0;
                let in_orbit = |z: usize| level[z] != usize::MAX && (level[z] % d) % g == r;
                for z in 0..k {
                    if in_orbit(z) {
                        class_mass += stationary.probs[z];
                    }
                }
                if class_mass == 0.0 {
                    return Err(Error::InvalidPmf(
                        "stationary mass vanishes on a cyclic class".into(),
                    ));
                }
                for (flat, slot) in probs.iter_mut().enumerate() {
                    crate::prob::unflatten(flat, &dims, &mut block);
                    if !in_orbit(block[0]) {
                        continue;
                    }
                    let mut p = stationary.probs[block[0]] / class_mass;
                    for w2 in block.windows(2) {
                        p *= transition[w2[0] * k + w2[1]];
                    }
                    *slot = p;
                }
                modes.push(Pmf::new(Alphabet::new(cells)?, probs)?);
            }
            Ok(ErgodicDecomposition { n, n_prime: g, modes, phase_shift: 1 % g })
        }
        NoiseModel::HiddenMarkov { .. } => Err(Error::NotImplemented(
            "super-process decomposition for hidden-markov models".into(),
        )),
    }
}

/// Shifted-block copy: the input of length L n^2 + n is copied with every
/// (Ln+1)st position skipped, so segment j (1-based) of the output reads
/// input positions offset by j-1.
pub fn gallager_interleave(path: &SamplePath, n: usize, big_l: usize) -> Result<SamplePath> {
    let expect = big_l * n * n + n;
    if path.symbols.len() != expect {
        return Err(Error::Mismatch(format!(
            "input length {} != Ln^2 + n = {expect}",
            path.symbols.len()
        )));
    }
    let seg = big_l * n;
    let mut symbols = Vec::with_capacity(big_l * n * n);
    for j in 0..n {
        for t in 0..seg {
            symbols.push(path.symbols[j * seg + t + j]);
        }
    }
    Ok(SamplePath { symbols, seed: path.seed })
}

/// Relative frequencies of consecutive non-overlapping n-blocks.
pub fn empirical_super_freq(path: &SamplePath, n: usize) -> Result<Pmf> {
    if n == 0 || !path.symbols.len().is_multiple_of(n) {
        return Err(Error::Mismatch(format!(
            "path length {} not divisible by n = {n}",
            path.symbols.len()
        )));
    }
    let z = path.symbols.iter().copied().max().unwrap_or(0) + 1;
    empirical_super_freq_with_alphabet(path, n, z)
}

/// As `empirical_super_freq` but with an explicit per-letter alphabet size.
pub fn empirical_super_freq_with_alphabet(path: &SamplePath, n: usize, z: usize) -> Result<Pmf> {
    if n == 0 || !path.symbols.len().is_multiple_of(n) {
        return Err(Error::Mismatch("path length not divisible by n".into()));
    }
    let dims = vec![z; n];
    let cells = product_size(&dims)?;
    let blocks = path.symbols.len() / n;
    let mut probs = vec![0.0; cells];
    let w = 1.0 / blocks as f64;
    for b in path.symbols.chunks(n) {
        probs[flatten(&dims, b)] += w;
    }
    Pmf::new(Alphabet::new(cells)?, probs)
}
