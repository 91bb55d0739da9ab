//! Exact probability tables over finite product alphabets, causal
//! factorization, and information measures (entropy, mutual, conditional,
//! and directed information).
//!
//! All information values are in bits. Entropy accumulations use compensated
//! summation so the exact identities hold at 1e-10.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tuning::{MAX_TABLE_CELLS, NORM_TOL};

/// A finite alphabet with symbols `0..size`, optionally with a distinguished
/// null symbol (used for the channel warm-up and codeword separators).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    pub size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub null: Option<usize>,
}

impl Alphabet {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidArgument("alphabet size must be >= 1".into()));
        }
        Ok(Alphabet { size, null: None })
    }

    pub fn with_null(size: usize, null: usize) -> Result<Self> {
        if size == 0 || null >= size {
            return Err(Error::InvalidArgument(format!(
                "null index {null} out of range for alphabet of size {size}"
            )));
        }
        Ok(Alphabet { size, null: Some(null) })
    }

    pub fn contains(&self, symbol: usize) -> bool {
        symbol < self.size
    }
}

/// Kahan-compensated sum.
pub(crate) fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// -p log2 p with the 0 log 0 = 0 convention.
fn nlogp(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.log2()
    } else {
        0.0
    }
}

/// Entropy in bits of a bare probability vector.
pub fn entropy_of(probs: &[f64]) -> f64 {
    kahan_sum(probs.iter().map(|&p| nlogp(p)))
}

fn check_probs(probs: &[f64]) -> Result<()> {
    if probs.iter().any(|&p| p.is_nan() || p < 0.0) {
        return Err(Error::InvalidPmf("negative or NaN entry".into()));
    }
    let total = kahan_sum(probs.iter().copied());
    if (total - 1.0).abs() > NORM_TOL {
        return Err(Error::InvalidPmf(format!("entries sum to {total}, not 1")));
    }
    Ok(())
}

/// Probability mass function over a single finite alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pmf {
    pub alphabet: Alphabet,
    pub probs: Vec<f64>,
}

impl Pmf {
    pub fn new(alphabet: Alphabet, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != alphabet.size {
            return Err(Error::Mismatch(format!(
                "{} probabilities for alphabet of size {}",
                probs.len(),
                alphabet.size
            )));
        }
        check_probs(&probs)?;
        Ok(Pmf { alphabet, probs })
    }

    pub fn uniform(alphabet: Alphabet) -> Self {
        let p = 1.0 / alphabet.size as f64;
        Pmf { alphabet, probs: vec![p; alphabet.size] }
    }

    pub fn point_mass(alphabet: Alphabet, symbol: usize) -> Result<Self> {
        if !alphabet.contains(symbol) {
            return Err(Error::InvalidArgument(format!("symbol {symbol} out of range")));
        }
        let mut probs = vec![0.0; alphabet.size];
        probs[symbol] = 1.0;
        Ok(Pmf { alphabet, probs })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.probs.len() != self.alphabet.size {
            return Err(Error::Mismatch("pmf length != alphabet size".into()));
        }
        check_probs(&self.probs)
    }

    /// Total variation distance to another pmf on the same alphabet.
    pub fn tv_distance(&self, other: &Pmf) -> Result<f64> {
        if self.probs.len() != other.probs.len() {
            return Err(Error::Mismatch("pmf lengths differ".into()));
        }
        Ok(0.5
            * kahan_sum(
                self.probs
                    .iter()
                    .zip(&other.probs)
                    .map(|(a, b)| (a - b).abs()),
            ))
    }
}

/// H(p) in bits.
pub fn entropy(p: &Pmf) -> f64 {
    entropy_of(&p.probs)
}

/// Row-major index arithmetic for product spaces.
pub(crate) fn product_size(dims: &[usize]) -> Result<usize> {
    let mut cells: usize = 1;
    for &d in dims {
        cells = cells
            .checked_mul(d)
            .ok_or(Error::SizeLimit { cells: usize::MAX, limit: MAX_TABLE_CELLS })?;
    }
    if cells > MAX_TABLE_CELLS {
        return Err(Error::SizeLimit { cells, limit: MAX_TABLE_CELLS });
    }
    Ok(cells)
}

pub(crate) fn unflatten(mut flat: usize, dims: &[usize], out: &mut [usize]) {
    for k in (0..dims.len()).rev() {
        out[k] = flat % dims[k];
        flat /= dims[k];
    }
}

pub(crate) fn flatten(dims: &[usize], idx: &[usize]) -> usize {
    let mut flat = 0;
    for (d, i) in dims.iter().zip(idx) {
        flat = flat * d + i;
    }
    flat
}

/// Dense joint pmf over an ordered product of alphabets (row-major, last
/// axis fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPmf {
    pub axes: Vec<Alphabet>,
    pub probs: Vec<f64>,
}

impl JointPmf {
    pub fn new(axes: Vec<Alphabet>, probs: Vec<f64>) -> Result<Self> {
        let dims: Vec<usize> = axes.iter().map(|a| a.size).collect();
        let cells = product_size(&dims)?;
        if probs.len() != cells {
            return Err(Error::Mismatch(format!(
                "{} probabilities for a {cells}-cell product space",
                probs.len()
            )));
        }
        check_probs(&probs)?;
        Ok(JointPmf { axes, probs })
    }

    pub fn dims(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.size).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let dims = self.dims();
        let cells = product_size(&dims)?;
        if self.probs.len() != cells {
            return Err(Error::Mismatch("joint pmf length != product size".into()));
        }
        check_probs(&self.probs)
    }

    /// Marginalize onto the given axes (in the order given).
    pub fn marginalize(&self, keep: &[usize]) -> Result<JointPmf> {
        let dims = self.dims();
        for &k in keep {
            if k >= dims.len() {
                return Err(Error::InvalidArgument(format!("axis {k} out of range")));
            }
        }
        let out_axes: Vec<Alphabet> = keep.iter().map(|&k| self.axes[k]).collect();
        let out_dims: Vec<usize> = keep.iter().map(|&k| dims[k]).collect();
        let out_cells = product_size(&out_dims)?;
        let mut out = vec![0.0; out_cells];
        let mut comp = vec![0.0; out_cells];
        let mut idx = vec![0usize; dims.len()];
        let mut out_idx = vec![0usize; keep.len()];
        for (flat, &p) in self.probs.iter().enumerate() {
            unflatten(flat, &dims, &mut idx);
            for (o, &k) in out_idx.iter_mut().zip(keep) {
                *o = idx[k];
            }
            let f = flatten(&out_dims, &out_idx);
            // compensated accumulation
            let y = p - comp[f];
            let t = out[f] + y;
            comp[f] = (t - out[f]) - y;
            out[f] = t;
        }
        Ok(JointPmf { axes: out_axes, probs: out })
    }

    /// Marginal entropy of an axis subset, in bits.
    pub fn entropy_of_axes(&self, axes: &[usize]) -> Result<f64> {
        if axes.is_empty() {
            return Ok(0.0);
        }
        Ok(entropy_of(&self.marginalize(axes)?.probs))
    }

    /// Marginal onto a single axis as a `Pmf`.
    pub fn marginal(&self, axis: usize) -> Result<Pmf> {
        let m = self.marginalize(&[axis])?;
        Ok(Pmf { alphabet: m.axes[0], probs: m.probs })
    }

    pub fn tv_distance(&self, other: &JointPmf) -> Result<f64> {
        if self.probs.len() != other.probs.len() {
            return Err(Error::Mismatch("joint pmf sizes differ".into()));
        }
        Ok(0.5
            * kahan_sum(
                self.probs
                    .iter()
                    .zip(&other.probs)
                    .map(|(a, b)| (a - b).abs()),
            ))
    }
}

fn check_disjoint(groups: &[&[usize]]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for g in groups {
        for &a in *g {
            if !seen.insert(a) {
                return Err(Error::InvalidArgument(format!("axis {a} appears in two groups")));
            }
        }
    }
    Ok(())
}

/// I(A;B|C) in bits, for disjoint axis groups of a joint pmf.
pub fn conditional_mi(j: &JointPmf, a: &[usize], b: &[usize], c: &[usize]) -> Result<f64> {
    check_disjoint(&[a, b, c])?;
    let mut ac: Vec<usize> = a.to_vec();
    ac.extend_from_slice(c);
    let mut bc: Vec<usize> = b.to_vec();
    bc.extend_from_slice(c);
    let mut abc: Vec<usize> = a.to_vec();
    abc.extend_from_slice(b);
    abc.extend_from_slice(c);
    let h_ac = j.entropy_of_axes(&ac)?;
    let h_bc = j.entropy_of_axes(&bc)?;
    let h_abc = j.entropy_of_axes(&abc)?;
    let h_c = j.entropy_of_axes(c)?;
    Ok(h_ac + h_bc - h_abc - h_c)
}

/// I(X;Y) of a two-axis joint, in bits.
pub fn mutual_information(j: &JointPmf) -> Result<f64> {
    if j.axes.len() != 2 {
        return Err(Error::InvalidArgument(format!(
            "mutual_information expects a two-axis joint, got {} axes",
            j.axes.len()
        )));
    }
    conditional_mi(j, &[0], &[1], &[])
}

/// An information value in bits together with its per-index decomposition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InfoResult {
    pub value: f64,
    pub decomposition: Vec<f64>,
}

impl InfoResult {
    fn from_terms(decomposition: Vec<f64>) -> Self {
        let value = kahan_sum(decomposition.iter().copied());
        InfoResult { value, decomposition }
    }
}

fn check_horizon(j: &JointPmf, n: usize) -> Result<()> {
    if n == 0 || j.axes.len() != 2 * n {
        return Err(Error::Mismatch(format!(
            "joint has {} axes, expected 2n = {} (axis order X_1..X_n, Y_1..Y_n)",
            j.axes.len(),
            2 * n
        )));
    }
    Ok(())
}

/// Directed information I(X^n -> Y^n) = sum_i I(X^i; Y_i | Y^{i-1}).
///
/// Axes must be ordered X_1..X_n, Y_1..Y_n.
pub fn directed_information(j: &JointPmf, n: usize) -> Result<InfoResult> {
    check_horizon(j, n)?;
    let mut terms = Vec::with_capacity(n);
    for i in 1..=n {
        let a: Vec<usize> = (0..i).collect();
        let b = [n + i - 1];
        let c: Vec<usize> = (n..n + i - 1).collect();
        terms.push(conditional_mi(j, &a, &b, &c)?);
    }
    Ok(InfoResult::from_terms(terms))
}

/// The alternative expansion sum_i I(X_i; Y_i^n | X^{i-1}, Y^{i-1});
/// algebraically equal to `directed_information`.
pub fn directed_information_alt(j: &JointPmf, n: usize) -> Result<InfoResult> {
    check_horizon(j, n)?;
    let mut terms = Vec::with_capacity(n);
    for i in 1..=n {
        let a = [i - 1];
        let b: Vec<usize> = (n + i - 1..2 * n).collect();
        let mut c: Vec<usize> = (0..i - 1).collect();
        c.extend(n..n + i - 1);
        terms.push(conditional_mi(j, &a, &b, &c)?);
    }
    Ok(InfoResult::from_terms(terms))
}

/// Which sequence conditions which in a causally conditioned distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelDirection {
    /// p(x^n || y^{n-1}): factor i conditions on (x^{i-1}, y^{i-1}).
    InputGivenPastOutputs,
    /// p(y^n || x^n): factor i conditions on (y^{i-1}, x^i).
    OutputGivenInputs,
}

impl KernelDirection {
    /// Number of conditioning `b` symbols seen by factor `i` (0-based).
    pub fn lag(&self, i: usize) -> usize {
        match self {
            KernelDirection::InputGivenPastOutputs => i,
            KernelDirection::OutputGivenInputs => i + 1,
        }
    }
}

/// A causally conditioned distribution p(a^n || b^{lag}).
///
/// `factors[i]` is the dense table of p(a_{i+1} | a^i, b^{lag(i)}) laid out
/// row-major as (a-history, b-history, a), histories earliest-first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalKernel {
    pub n: usize,
    pub a_alphabet: Alphabet,
    pub b_alphabet: Alphabet,
    pub direction: KernelDirection,
    pub factors: Vec<Vec<f64>>,
}

impl CausalKernel {
    pub fn new(
        n: usize,
        a_alphabet: Alphabet,
        b_alphabet: Alphabet,
        direction: KernelDirection,
        factors: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let k = CausalKernel { n, a_alphabet, b_alphabet, direction, factors };
        k.validate()?;
        Ok(k)
    }

    pub fn factor_len(&self, i: usize) -> Result<usize> {
        let a = self.a_alphabet.size;
        let b = self.b_alphabet.size;
        let dims = [
            a.checked_pow(i as u32).ok_or(Error::SizeLimit {
                cells: usize::MAX,
                limit: MAX_TABLE_CELLS,
            })?,
            b.checked_pow(self.direction.lag(i) as u32).ok_or(Error::SizeLimit {
                cells: usize::MAX,
                limit: MAX_TABLE_CELLS,
            })?,
            a,
        ];
        product_size(&dims)
    }

    pub fn validate(&self) -> Result<()> {
        if self.factors.len() != self.n {
            return Err(Error::Mismatch(format!(
                "{} factors for horizon {}",
                self.factors.len(),
                self.n
            )));
        }
        let a = self.a_alphabet.size;
        for (i, f) in self.factors.iter().enumerate() {
            let expect = self.factor_len(i)?;
            if f.len() != expect {
                return Err(Error::Mismatch(format!(
                    "factor {i} has {} entries, expected {expect}",
                    f.len()
                )));
            }
            for slice in f.chunks(a) {
                if slice.iter().any(|&p| p.is_nan() || p < 0.0) {
                    return Err(Error::InvalidPmf(format!("factor {i}: negative entry")));
                }
                let s = kahan_sum(slice.iter().copied());
                if (s - 1.0).abs() > NORM_TOL {
                    return Err(Error::InvalidPmf(format!(
                        "factor {i}: conditional slice sums to {s}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// p(a_{i+1} = a | a-history, b-history), histories earliest-first.
    pub fn factor_prob(&self, i: usize, a_hist: &[usize], b_hist: &[usize], a: usize) -> f64 {
        debug_assert_eq!(a_hist.len(), i);
        debug_assert_eq!(b_hist.len(), self.direction.lag(i));
        let asz = self.a_alphabet.size;
        let bsz = self.b_alphabet.size;
        let mut flat = 0usize;
        for &h in a_hist {
            flat = flat * asz + h;
        }
        for &h in b_hist {
            flat = flat * bsz + h;
        }
        self.factors[i][flat * asz + a]
    }

    /// Probability of the whole a-sequence given the whole b-sequence.
    pub fn sequence_prob(&self, a_seq: &[usize], b_seq: &[usize]) -> f64 {
        let mut p = 1.0;
        for i in 0..self.n {
            let lag = self.direction.lag(i);
            p *= self.factor_prob(i, &a_seq[..i], &b_seq[..lag], a_seq[i]);
        }
        p
    }
}

/// Factor a joint over X^n x Y^n into (p(x^n||y^{n-1}), p(y^n||x^n)).
///
/// Zero-probability histories get a uniform conditional slice, which keeps
/// both kernels total and makes the recomposition exact on the support.
pub fn causal_factorize(j: &JointPmf, n: usize) -> Result<(CausalKernel, CausalKernel)> {
    check_horizon(j, n)?;
    let x_alpha = j.axes[0];
    let y_alpha = j.axes[n];
    for i in 0..n {
        if j.axes[i] != x_alpha || j.axes[n + i] != y_alpha {
            return Err(Error::Mismatch("axes must be homogeneous per sequence".into()));
        }
    }
    let xs = x_alpha.size;
    let ys = y_alpha.size;
    let dims = j.dims();
    let mut idx = vec![0usize; 2 * n];

    let mut x_factors: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut y_factors: Vec<Vec<f64>> = Vec::with_capacity(n);

    for i in 0..n {
        // p(x_{i+1} | x^i, y^i): numerator over (x^{i+1}, y^i)
        let hist_x = xs.pow(i as u32) * ys.pow(i as u32);
        let mut num_x = vec![0.0; hist_x * xs];
        // p(y_{i+1} | y^i, x^{i+1}): numerator over (x^{i+1}, y^{i+1})
        let hist_y = xs.pow(i as u32 + 1) * ys.pow(i as u32);
        let mut num_y = vec![0.0; hist_y * ys];
        for (flat, &p) in j.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            unflatten(flat, &dims, &mut idx);
            let (x, y) = idx.split_at(n);
            // history key: (x^i, y^lag) earliest-first, then the current symbol
            let mut kx = 0usize;
            for &v in &x[..i] {
                kx = kx * xs + v;
            }
            for &v in &y[..i] {
                kx = kx * ys + v;
            }
            num_x[kx * xs + x[i]] += p;
            let mut ky = 0usize;
            for &v in &y[..i] {
                ky = ky * ys + v;
            }
            for &v in &x[..=i] {
                ky = ky * xs + v;
            }
            num_y[ky * ys + y[i]] += p;
        }
        x_factors.push(normalize_slices(num_x, xs));
        y_factors.push(normalize_slices(num_y, ys));
    }

    let kx = CausalKernel::new(
        n,
        x_alpha,
        y_alpha,
        KernelDirection::InputGivenPastOutputs,
        x_factors,
    )?;
    let ky = CausalKernel::new(n, y_alpha, x_alpha, KernelDirection::OutputGivenInputs, y_factors)?;
    Ok((kx, ky))
}

fn normalize_slices(mut table: Vec<f64>, width: usize) -> Vec<f64> {
    for slice in table.chunks_mut(width) {
        let s: f64 = slice.iter().sum();
        if s > 0.0 {
            for v in slice.iter_mut() {
                *v /= s;
            }
        } else {
            let u = 1.0 / width as f64;
            for v in slice.iter_mut() {
                *v = u;
            }
        }
    }
    table
}

/// Compose an input kernel p(x^n||y^{n-1}) with a channel kernel p(y^n||x^n)
/// into the joint pmf over X^n x Y^n (axes X_1..X_n, Y_1..Y_n).
pub fn compose(input: &CausalKernel, channel: &CausalKernel) -> Result<JointPmf> {
    if input.direction != KernelDirection::InputGivenPastOutputs
        || channel.direction != KernelDirection::OutputGivenInputs
    {
        return Err(Error::InvalidArgument(
            "compose expects (input p(x^n||y^{n-1}), channel p(y^n||x^n))".into(),
        ));
    }
    if input.n != channel.n {
        return Err(Error::Mismatch(format!(
            "horizon mismatch: input n={} channel n={}",
            input.n, channel.n
        )));
    }
    if input.a_alphabet != channel.b_alphabet || input.b_alphabet != channel.a_alphabet {
        return Err(Error::Mismatch("kernel alphabets do not match".into()));
    }
    let n = input.n;
    let x_alpha = input.a_alphabet;
    let y_alpha = input.b_alphabet;
    let mut axes = vec![x_alpha; n];
    axes.extend(vec![y_alpha; n]);
    let dims: Vec<usize> = axes.iter().map(|a| a.size).collect();
    let cells = product_size(&dims)?;
    let mut probs = vec![0.0; cells];
    let mut idx = vec![0usize; 2 * n];
    for (flat, slot) in probs.iter_mut().enumerate() {
        unflatten(flat, &dims, &mut idx);
        let (x, y) = idx.split_at(n);
        *slot = input.sequence_prob(x, y) * channel.sequence_prob(y, x);
    }
    JointPmf::new(axes, probs)
}
