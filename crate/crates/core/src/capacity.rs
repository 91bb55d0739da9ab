//! Capacity solvers and oracles: alternating-minimization capacity of a
//! conditional table, grid-search and coordinate-ascent maximization of
//! directed information over causal input kernels, and numerical verifiers
//! for the two strategy-equivalence lemmas.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{
    compose, directed_information, entropy_of, kahan_sum, product_size, unflatten, Alphabet,
    CausalKernel, KernelDirection, Pmf,
};
use crate::processes::{block_marginal, NoiseModel};

/// The single-letter state-channel setting: a state S ~ p(s) known causally
/// to the encoder, and a conditional p(y | x, s).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateChannel {
    pub p_s: Pmf,
    pub x_size: usize,
    pub y_size: usize,
    /// Row-major over (x, s, y).
    pub cond: Vec<f64>,
}

impl StateChannel {
    pub fn new(p_s: Pmf, x_size: usize, y_size: usize, cond: Vec<f64>) -> Result<Self> {
        let s_size = p_s.len();
        if cond.len() != x_size * s_size * y_size {
            return Err(Error::Mismatch("state channel table size mismatch".into()));
        }
        for row in cond.chunks(y_size) {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-10 || row.iter().any(|&p| p.is_nan() || p < 0.0) {
                return Err(Error::InvalidPmf("state channel row invalid".into()));
            }
        }
        p_s.validate()?;
        Ok(StateChannel { p_s, x_size, y_size, cond })
    }

    pub fn s_size(&self) -> usize {
        self.p_s.len()
    }

    /// p(y | x, s)
    pub fn prob(&self, x: usize, s: usize, y: usize) -> f64 {
        self.cond[(x * self.s_size() + s) * self.y_size + y]
    }
}

/// The object achieving a reported capacity value.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Maximizer {
    Input { pmf: Pmf },
    Kernel { kernel: CausalKernel },
    Product { pmfs: Vec<Pmf> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapacityResult {
    /// Bits per use of the channel handed to the solver (for block kernels,
    /// bits per letter: total directed information divided by n).
    pub value: f64,
    pub maximizer: Maximizer,
    pub iterations: usize,
    /// Certified optimality gap (upper bound minus achieved value).
    pub gap: f64,
    pub converged: bool,
}

const BA_ITER_CAP: usize = 50_000;

fn check_conditional(w: &[f64], rows: usize, cols: usize) -> Result<()> {
    if w.len() != rows * cols {
        return Err(Error::Mismatch(format!("conditional is not {rows}x{cols}")));
    }
    for (r, row) in w.chunks(cols).enumerate() {
        if row.iter().any(|&p| p.is_nan() || p < 0.0) {
            return Err(Error::InvalidPmf(format!("row {r}: negative entry")));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidPmf(format!("row {r} sums to {s}")));
        }
    }
    Ok(())
}

/// Alternating maximization of I(X;Y) + sum_x p(x) c(x) for a conditional
/// w(y|x) and a linear reward c. With c = 0 this is the plain capacity
/// iteration; the bracket max_x (D(x)+c(x)) - J certifies the gap.
pub fn ba_with_reward(
    w: &[f64],
    in_size: usize,
    out_size: usize,
    c: &[f64],
    tol: f64,
) -> Result<(f64, Pmf, usize, f64, bool)> {
    check_conditional(w, in_size, out_size)?;
    if c.len() != in_size {
        return Err(Error::Mismatch("reward length != input size".into()));
    }
    let mut p = vec![1.0 / in_size as f64; in_size];
    let mut d = vec![0.0; in_size];
    let mut prev = f64::NEG_INFINITY;
    let mut value = 0.0;
    let mut gap = f64::INFINITY;
    for iter in 1..=BA_ITER_CAP {
        let mut r = vec![0.0; out_size];
        for x in 0..in_size {
            for y in 0..out_size {
                r[y] += p[x] * w[x * out_size + y];
            }
        }
        for x in 0..in_size {
            let mut dx = 0.0;
            for y in 0..out_size {
                let wxy = w[x * out_size + y];
                if wxy > 0.0 && r[y] > 0.0 {
                    dx += wxy * (wxy / r[y]).log2();
                }
            }
            d[x] = dx + c[x];
        }
        value = kahan_sum((0..in_size).map(|x| p[x] * d[x]));
        let upper = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        gap = upper - value;
        debug_assert!(value >= prev - 1e-9, "objective decreased: {prev} -> {value}");
        prev = value;
        if gap < tol {
            let pmf = Pmf::new(Alphabet::new(in_size)?, renormalize(p))?;
            return Ok((value, pmf, iter, gap, true));
        }
        // multiplicative update p(x) <- p(x) 2^{D(x)+c(x)} / normalizer
        let dmax = upper;
        let mut total = 0.0;
        for x in 0..in_size {
            p[x] *= 2f64.powf(d[x] - dmax);
            total += p[x];
        }
        for q in &mut p {
            *q /= total;
        }
    }
    let pmf = Pmf::new(Alphabet::new(in_size)?, renormalize(p))?;
    Ok((value, pmf, BA_ITER_CAP, gap, false))
}

fn renormalize(mut p: Vec<f64>) -> Vec<f64> {
    let s: f64 = p.iter().sum();
    for q in &mut p {
        *q /= s;
    }
    p
}

/// Capacity of a conditional table w(y|x) in bits per use of the table.
pub fn blahut_arimoto(
    w: &[f64],
    in_size: usize,
    out_size: usize,
    tol: f64,
) -> Result<CapacityResult> {
    let zeros = vec![0.0; in_size];
    let (value, pmf, iterations, gap, converged) =
        ba_with_reward(w, in_size, out_size, &zeros, tol)?;
    Ok(CapacityResult { value, maximizer: Maximizer::Input { pmf }, iterations, gap, converged })
}

/// Total directed information of an input kernel against a channel kernel.
pub fn directed_info_of(input: &CausalKernel, channel: &CausalKernel) -> Result<f64> {
    let joint = compose(input, channel)?;
    Ok(directed_information(&joint, channel.n)?.value)
}

fn mi_of_table(joint: &[f64], rows: usize, cols: usize) -> f64 {
    // I = H(row marginal) + H(col marginal) - H(joint)
    let mut pr = vec![0.0; rows];
    let mut pc = vec![0.0; cols];
    for r in 0..rows {
        for cidx in 0..cols {
            let p = joint[r * cols + cidx];
            pr[r] += p;
            pc[cidx] += p;
        }
    }
    entropy_of(&pr) + entropy_of(&pc) - entropy_of(joint)
}

/// Exhaustive grid search for sup I(X^n -> Y^n)/n over causal input kernels.
/// Oracle regime: binary inputs, n <= 2, any output alphabet.
pub fn cfb_exhaustive(channel: &CausalKernel, steps: usize) -> Result<CapacityResult> {
    channel.validate()?;
    if channel.direction != KernelDirection::OutputGivenInputs {
        return Err(Error::InvalidArgument("expected a channel kernel p(y^n||x^n)".into()));
    }
    if channel.b_alphabet.size != 2 || channel.n > 2 {
        return Err(Error::InvalidArgument(
            "grid oracle supports binary inputs with n <= 2 only".into(),
        ));
    }
    if steps == 0 {
        return Err(Error::InvalidArgument("grid needs at least one step".into()));
    }
    let ys = channel.a_alphabet.size;
    let n = channel.n;
    let x_alpha = channel.b_alphabet;
    let y_alpha = channel.a_alphabet;
    let grid = |i: usize| i as f64 / steps as f64;

    // w1[x1][y1]
    let mut w1 = vec![0.0; 2 * ys];
    for x1 in 0..2 {
        for y1 in 0..ys {
            w1[x1 * ys + y1] = channel.factor_prob(0, &[], &[x1], y1);
        }
    }

    if n == 1 {
        let mut best = f64::NEG_INFINITY;
        let mut best_p = 0.0;
        for i in 0..=steps {
            let p1 = grid(i);
            let px = [1.0 - p1, p1];
            let mut joint = vec![0.0; 2 * ys];
            for x in 0..2 {
                for y in 0..ys {
                    joint[x * ys + y] = px[x] * w1[x * ys + y];
                }
            }
            let v = mi_of_table(&joint, 2, ys);
            if v > best {
                best = v;
                best_p = p1;
            }
        }
        let factors = vec![vec![1.0 - best_p, best_p]];
        let kernel =
            CausalKernel::new(1, x_alpha, y_alpha, KernelDirection::InputGivenPastOutputs, factors)?;
        return Ok(CapacityResult {
            value: best,
            maximizer: Maximizer::Kernel { kernel },
            iterations: steps + 1,
            gap: 1.0 / steps as f64,
            converged: true,
        });
    }

    // n = 2. w2[x1][x2][y1][y2]
    let w2 = |x1: usize, x2: usize, y1: usize, y2: usize| {
        channel.factor_prob(1, &[y1], &[x1, x2], y2)
    };
    // For fixed p(x1) the objective splits as
    //   I(X1;Y1) + sum_{y1} p(y1) I(X1 X2; Y2 | Y1 = y1),
    // and the slice p(x2 | x1, y1) of each y1 appears only in its own term,
    // so the slices can be grid-maximized independently: the decomposed
    // search attains exactly the full five-parameter grid maximum.
    let mut best = f64::NEG_INFINITY;
    let mut best_p1 = 0.0;
    let mut best_slices = vec![(0.0, 0.0); ys];
    for i in 0..=steps {
        let p1 = grid(i);
        let px = [1.0 - p1, p1];
        let mut joint1 = vec![0.0; 2 * ys];
        for x in 0..2 {
            for y in 0..ys {
                joint1[x * ys + y] = px[x] * w1[x * ys + y];
            }
        }
        let term1 = mi_of_table(&joint1, 2, ys);
        let mut total = term1;
        let mut slices = vec![(0.5, 0.5); ys];
        for y1 in 0..ys {
            let py1 = joint1[y1] + joint1[ys + y1];
            if py1 <= 0.0 {
                continue;
            }
            let px_given = [joint1[y1] / py1, joint1[ys + y1] / py1];
            let mut best_term = f64::NEG_INFINITY;
            let mut best_ab = (0.0, 0.0);
            let mut joint2 = vec![0.0; 4 * ys];
            for ia in 0..=steps {
                let a = grid(ia); // p(x2 = 1 | x1 = 0, y1)
                for ib in 0..=steps {
                    let b = grid(ib); // p(x2 = 1 | x1 = 1, y1)
                    for cell in joint2.iter_mut() {
                        *cell = 0.0;
                    }
                    for x1 in 0..2 {
                        let slice = if x1 == 0 { [1.0 - a, a] } else { [1.0 - b, b] };
                        for x2 in 0..2 {
                            let pin = px_given[x1] * slice[x2];
                            if pin == 0.0 {
                                continue;
                            }
                            for y2 in 0..ys {
                                joint2[(x1 * 2 + x2) * ys + y2] = pin * w2(x1, x2, y1, y2);
                            }
                        }
                    }
                    let v = mi_of_table(&joint2, 4, ys);
                    if v > best_term {
                        best_term = v;
                        best_ab = (a, b);
                    }
                }
            }
            total += py1 * best_term;
            slices[y1] = best_ab;
        }
        if total > best {
            best = total;
            best_p1 = p1;
            best_slices = slices;
        }
    }
    // assemble the maximizing input kernel
    let f0 = vec![1.0 - best_p1, best_p1];
    let mut f1 = vec![0.0; 2 * ys * 2];
    for x1 in 0..2 {
        for (y1, &(a, b)) in best_slices.iter().enumerate() {
            let t = if x1 == 0 { a } else { b };
            f1[(x1 * ys + y1) * 2] = 1.0 - t;
            f1[(x1 * ys + y1) * 2 + 1] = t;
        }
    }
    let kernel = CausalKernel::new(
        2,
        x_alpha,
        y_alpha,
        KernelDirection::InputGivenPastOutputs,
        vec![f0, f1],
    )?;
    Ok(CapacityResult {
        value: best / 2.0,
        maximizer: Maximizer::Kernel { kernel },
        iterations: (steps + 1).pow(3) * ys,
        gap: 2.0 / steps as f64,
        converged: true,
    })
}

/// An input kernel whose factors ignore the output history, built from a
/// block pmf p(x^n) by successive conditioning.
pub fn input_kernel_from_block_pmf(
    pstar: &Pmf,
    n: usize,
    x_alpha: Alphabet,
    y_alpha: Alphabet,
) -> Result<CausalKernel> {
    let xs = x_alpha.size;
    let dims = vec![xs; n];
    if pstar.len() != product_size(&dims)? {
        return Err(Error::Mismatch("block pmf does not match |X|^n".into()));
    }
    let mut factors = Vec::with_capacity(n);
    let mut idx = vec![0usize; n];
    for i in 0..n {
        let xh = xs.pow(i as u32);
        let yh = y_alpha.size.pow(i as u32);
        // numerators p(x^{i+1}) by marginalizing the tail
        let mut num = vec![0.0; xh * xs];
        for (flat, &p) in pstar.probs.iter().enumerate() {
            unflatten(flat, &dims, &mut idx);
            let mut key = 0usize;
            for &v in &idx[..i] {
                key = key * xs + v;
            }
            num[key * xs + idx[i]] += p;
        }
        // normalize per x-history, replicate across y-histories
        let mut f = vec![0.0; xh * yh * xs];
        for h in 0..xh {
            let slice = &mut num[h * xs..(h + 1) * xs];
            let s: f64 = slice.iter().sum();
            let norm: Vec<f64> = if s > 0.0 {
                slice.iter().map(|&v| v / s).collect()
            } else {
                vec![1.0 / xs as f64; xs]
            };
            for yhist in 0..yh {
                let base = (h * yh + yhist) * xs;
                f[base..base + xs].copy_from_slice(&norm);
            }
        }
        factors.push(f);
    }
    CausalKernel::new(n, x_alpha, y_alpha, KernelDirection::InputGivenPastOutputs, factors)
}

/// Flatten a channel kernel into the dense conditional p(y-super | x-super).
pub fn kernel_to_conditional(channel: &CausalKernel) -> Result<(Vec<f64>, usize, usize)> {
    let n = channel.n;
    let xs = channel.b_alphabet.size;
    let ys = channel.a_alphabet.size;
    let x_cells = product_size(&vec![xs; n])?;
    let y_cells = product_size(&vec![ys; n])?;
    let mut w = vec![0.0; x_cells * y_cells];
    let mut xi = vec![0usize; n];
    let mut yi = vec![0usize; n];
    for xf in 0..x_cells {
        unflatten(xf, &vec![xs; n], &mut xi);
        for yf in 0..y_cells {
            unflatten(yf, &vec![ys; n], &mut yi);
            w[xf * y_cells + yf] = channel.sequence_prob(&yi, &xi);
        }
    }
    Ok((w, x_cells, y_cells))
}

fn dirichlet_slice(rng: &mut ChaCha12Rng, k: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..k).map(|_| -(rng.gen::<f64>().max(1e-12)).ln()).collect();
    let s: f64 = v.iter().sum();
    for q in &mut v {
        *q /= s;
    }
    v
}

fn random_input_kernel(
    rng: &mut ChaCha12Rng,
    n: usize,
    x_alpha: Alphabet,
    y_alpha: Alphabet,
) -> CausalKernel {
    let xs = x_alpha.size;
    let mut factors = Vec::with_capacity(n);
    for i in 0..n {
        let hist = xs.pow(i as u32) * y_alpha.size.pow(i as u32);
        let mut f = Vec::with_capacity(hist * xs);
        for _ in 0..hist {
            f.extend(dirichlet_slice(rng, xs));
        }
        factors.push(f);
    }
    CausalKernel::new(n, x_alpha, y_alpha, KernelDirection::InputGivenPastOutputs, factors)
        .expect("random kernel is valid")
}

/// Coordinate ascent for sup I(X^n -> Y^n)/n over causal input kernels:
/// cyclic golden-section line searches over every conditional slice, with
/// seeded random multistarts plus one start at the best feedback-blind
/// (nonfeedback) input, which guarantees the value dominates the
/// nonfeedback capacity of the same kernel.
pub fn cfb_ascent(
    channel: &CausalKernel,
    tol: f64,
    multistarts: usize,
    seed: u64,
) -> Result<CapacityResult> {
    channel.validate()?;
    if channel.direction != KernelDirection::OutputGivenInputs {
        return Err(Error::InvalidArgument("expected a channel kernel p(y^n||x^n)".into()));
    }
    let n = channel.n;
    let x_alpha = channel.b_alphabet;
    let y_alpha = channel.a_alphabet;
    let xs = x_alpha.size;

    // start 0: nonfeedback maximizer from the flattened conditional
    let (w, x_cells, y_cells) = kernel_to_conditional(channel)?;
    let ba = blahut_arimoto(&w, x_cells, y_cells, tol.min(1e-9))?;
    let ba_pmf = match &ba.maximizer {
        Maximizer::Input { pmf } => pmf.clone(),
        _ => unreachable!(),
    };
    let mut starts = vec![input_kernel_from_block_pmf(&ba_pmf, n, x_alpha, y_alpha)?];
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    for _ in 0..multistarts {
        starts.push(random_input_kernel(&mut rng, n, x_alpha, y_alpha));
    }

    let objective = |input: &CausalKernel| -> Result<f64> { directed_info_of(input, channel) };

    let mut best_value = f64::NEG_INFINITY;
    let mut best_kernel = starts[0].clone();
    let mut total_iters = 0usize;
    let mut converged = true;
    for start in starts {
        let mut input = start;
        let mut value = objective(&input)?;
        let mut passes = 0usize;
        loop {
            passes += 1;
            total_iters += 1;
            let before = value;
            for i in 0..n {
                // the input kernel's factor i conditions on (x^i, y^i)
                let hist = xs.pow(i as u32) * y_alpha.size.pow(i as u32);
                for h in 0..hist {
                    value = maximize_slice(&mut input, channel, i, h, value)?;
                }
            }
            if value - before < tol || passes >= 200 {
                if passes >= 200 && value - before >= tol {
                    converged = false;
                }
                break;
            }
        }
        if value > best_value {
            best_value = value;
            best_kernel = input;
        }
    }
    // never report below the nonfeedback start value
    let gap = tol.max(0.0);
    Ok(CapacityResult {
        value: best_value / n as f64,
        maximizer: Maximizer::Kernel { kernel: best_kernel },
        iterations: total_iters,
        gap,
        converged,
    })
}

/// Golden-section maximization over one conditional slice (pairwise mass
/// transfers for alphabets larger than two). Returns the new objective.
fn maximize_slice(
    input: &mut CausalKernel,
    channel: &CausalKernel,
    factor: usize,
    hist: usize,
    current: f64,
) -> Result<f64> {
    let xs = input.a_alphabet.size;
    let base = hist * xs;
    let mut value = current;
    let pairs: Vec<(usize, usize)> = if xs == 2 {
        vec![(0, 1)]
    } else {
        (0..xs).flat_map(|a| (a + 1..xs).map(move |b| (a, b))).collect()
    };
    for &(a, b) in &pairs {
        let mass = input.factors[factor][base + a] + input.factors[factor][base + b];
        if mass <= 0.0 {
            continue;
        }
        let eval = |input: &mut CausalKernel, t: f64| -> Result<f64> {
            input.factors[factor][base + a] = mass * (1.0 - t);
            input.factors[factor][base + b] = mass * t;
            directed_info_of(input, channel)
        };
        // golden-section search on t in [0, 1]
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut t1 = hi - phi * (hi - lo);
        let mut t2 = lo + phi * (hi - lo);
        let mut f1 = eval(input, t1)?;
        let mut f2 = eval(input, t2)?;
        for _ in 0..40 {
            if f1 < f2 {
                lo = t1;
                t1 = t2;
                f1 = f2;
                t2 = lo + phi * (hi - lo);
                f2 = eval(input, t2)?;
            } else {
                hi = t2;
                t2 = t1;
                f2 = f1;
                t1 = hi - phi * (hi - lo);
                f1 = eval(input, t1)?;
            }
        }
        // also probe the endpoints and the incumbent split
        let t_inc = input.factors[factor][base + b] / mass;
        let mut best_t = t_inc;
        let mut best_f = f64::NEG_INFINITY;
        for t in [0.0, 1.0, (t1 + t2) / 2.0, t_inc] {
            let f = eval(input, t)?;
            if f > best_f {
                best_f = f;
                best_t = t;
            }
        }
        if best_f >= value {
            value = best_f;
            let _ = eval(input, best_t)?;
        }
    }
    Ok(value)
}

/// Verify the single-letter strategy lemma: enumerating deterministic maps
/// f: U x S -> X and optimizing p(u) for I(U; Y, S) must match the direct
/// optimization of I(X; Y | S) over p(x|s).
pub fn verify_state1(sc: &StateChannel, u_cap: usize, tol: f64) -> Result<(f64, f64, f64)> {
    let s_size = sc.s_size();
    // support-lemma cardinality: (|X|-1)|S| + 1 letters reach every product
    // conditional (nested-subset weights); one fewer only reaches the
    // edges/diagonals of the conditional polytope and leaves a real gap
    let u_size = (sc.x_size - 1) * s_size + 1;
    if u_cap < u_size {
        return Err(Error::CapExceeded(format!(
            "|U| = {u_size} required by the cardinality bound, cap is {u_cap}"
        )));
    }
    let maps = sc.x_size.checked_pow((u_size * s_size) as u32).ok_or({
        Error::SizeLimit { cells: usize::MAX, limit: crate::tuning::MAX_TABLE_CELLS }
    })?;
    // lhs: best over deterministic f of the capacity of u -> (s, y)
    let out = s_size * sc.y_size;
    let mut lhs = f64::NEG_INFINITY;
    let mut digits = vec![0usize; u_size * s_size];
    for f_idx in 0..maps {
        unflatten(f_idx, &vec![sc.x_size; u_size * s_size], &mut digits);
        let mut w = vec![0.0; u_size * out];
        for u in 0..u_size {
            for s in 0..s_size {
                let x = digits[u * s_size + s];
                for y in 0..sc.y_size {
                    w[u * out + s * sc.y_size + y] = sc.p_s.probs[s] * sc.prob(x, s, y);
                }
            }
        }
        let r = blahut_arimoto(&w, u_size, out, tol)?;
        if r.value > lhs {
            lhs = r.value;
        }
    }
    // rhs: sum_s p(s) max_{p(x|s)} I(X; Y | S = s)
    let mut rhs = 0.0;
    for s in 0..s_size {
        let mut w = vec![0.0; sc.x_size * sc.y_size];
        for x in 0..sc.x_size {
            for y in 0..sc.y_size {
                w[x * sc.y_size + y] = sc.prob(x, s, y);
            }
        }
        let r = blahut_arimoto(&w, sc.x_size, sc.y_size, tol)?;
        rhs += sc.p_s.probs[s] * r.value;
    }
    Ok((lhs, rhs, (lhs - rhs).abs()))
}

/// Maximize I(U1, U2; Y) over product laws p(u1) p(u2) for a conditional
/// w(y | u1, u2), by alternating reward-augmented capacity iterations:
/// with p2 fixed, J(p1) = I(U1; Y) + sum_{u1} p1(u1) I_{u1}(U2; Y), which is
/// the plain capacity objective of the averaged channel plus a linear reward.
pub fn max_product_mi(
    w: &[f64],
    d1: usize,
    d2: usize,
    y_size: usize,
    tol: f64,
    starts: usize,
    seed: u64,
) -> Result<(f64, Pmf, Pmf)> {
    check_conditional(w, d1 * d2, y_size)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut best = f64::NEG_INFINITY;
    let mut best_p = (
        Pmf::uniform(Alphabet::new(d1)?),
        Pmf::uniform(Alphabet::new(d2)?),
    );
    for start in 0..starts.max(1) {
        let mut p1 = if start == 0 {
            vec![1.0 / d1 as f64; d1]
        } else {
            dirichlet_slice(&mut rng, d1)
        };
        let mut p2 = if start == 0 {
            vec![1.0 / d2 as f64; d2]
        } else {
            dirichlet_slice(&mut rng, d2)
        };
        let mut value = f64::NEG_INFINITY;
        for _round in 0..200 {
            // optimize p1 given p2
            let (v1, q1) = product_step(w, d1, d2, y_size, &p2, tol, false)?;
            p1 = q1;
            // optimize p2 given p1
            let (v2, q2) = product_step(w, d2, d1, y_size, &p1, tol, true)?;
            p2 = q2;
            let improved = v2 - value;
            value = v2.max(v1);
            if improved.abs() < tol / 10.0 {
                break;
            }
        }
        if value > best {
            best = value;
            best_p = (
                Pmf::new(Alphabet::new(d1)?, renormalize(p1.clone()))?,
                Pmf::new(Alphabet::new(d2)?, renormalize(p2.clone()))?,
            );
        }
    }
    Ok((best, best_p.0, best_p.1))
}

/// One half-step of the alternation: optimize the law of the free index
/// (size `d_free`) given the fixed law of the other index. `swapped` tells
/// whether the free index is the second coordinate of w's (u1, u2) order.
fn product_step(
    w: &[f64],
    d_free: usize,
    d_fixed: usize,
    y_size: usize,
    p_fixed: &[f64],
    tol: f64,
    swapped: bool,
) -> Result<(f64, Vec<f64>)> {
    let at = |a: usize, b: usize, y: usize| -> f64 {
        if swapped {
            w[(b * d_free + a) * y_size + y]
        } else {
            w[(a * d_fixed + b) * y_size + y]
        }
    };
    // averaged channel K(y | a) and linear reward c(a) = I_a(B; Y)
    let mut k = vec![0.0; d_free * y_size];
    let mut c = vec![0.0; d_free];
    for a in 0..d_free {
        for (b, &pb) in p_fixed.iter().enumerate() {
            for y in 0..y_size {
                k[a * y_size + y] += pb * at(a, b, y);
            }
        }
        let h_avg = entropy_of(&k[a * y_size..(a + 1) * y_size]);
        let mut h_cond = 0.0;
        for (b, &pb) in p_fixed.iter().enumerate() {
            let row: Vec<f64> = (0..y_size).map(|y| at(a, b, y)).collect();
            h_cond += pb * entropy_of(&row);
        }
        c[a] = h_avg - h_cond;
    }
    let (value, pmf, _, _, _) = ba_with_reward(&k, d_free, y_size, &c, tol)?;
    Ok((value, pmf.probs))
}

/// Verify the two-letter strategy lemma on a binary 2-block channel kernel:
/// the strategy-codebook maximum over product laws on canonical auxiliary
/// alphabets must match the causal-kernel maximum from the grid oracle.
/// Returns (lhs, rhs, gap) as total bits over the 2-block.
pub fn verify_state2(
    channel: &CausalKernel,
    steps: usize,
    tol: f64,
    seed: u64,
) -> Result<(f64, f64, f64)> {
    channel.validate()?;
    if channel.n != 2 || channel.b_alphabet.size != 2 {
        return Err(Error::InvalidArgument("state2 verifier needs binary 2-block kernels".into()));
    }
    let ys = channel.a_alphabet.size;
    // canonical auxiliaries: U1 = X; U2 = all maps (x1, y1) -> x2, with f2
    // the evaluation map. Product laws over these alphabets realize every
    // causal input kernel (couple the per-(x1,y1) coordinates independently).
    let d1 = 2usize;
    let d2 = 1usize << (2 * ys); // 2^(2 ys) maps
    let y_cells = ys * ys;
    let mut w = vec![0.0; d1 * d2 * y_cells];
    for u1 in 0..d1 {
        for u2 in 0..d2 {
            for y1 in 0..ys {
                let x1 = u1;
                let bit = (u2 >> (x1 * ys + y1)) & 1;
                let x2 = bit;
                let p_y1 = channel.factor_prob(0, &[], &[x1], y1);
                if p_y1 == 0.0 {
                    continue;
                }
                for y2 in 0..ys {
                    let p_y2 = channel.factor_prob(1, &[y1], &[x1, x2], y2);
                    w[(u1 * d2 + u2) * y_cells + y1 * ys + y2] += p_y1 * p_y2;
                }
            }
        }
    }
    let (lhs, _p1, _p2) = max_product_mi(&w, d1, d2, y_cells, tol, 8, seed)?;
    let rhs = cfb_exhaustive(channel, steps)?.value * 2.0;
    Ok((lhs, rhs, (lhs - rhs).abs()))
}

/// Nonfeedback block capacities nC_n for a sliding-block channel, solved by
/// the capacity iteration on the exact n-block conditional.
pub fn superadditivity_check(
    channel: &crate::channel::SlidingBlockChannel,
    noise: &NoiseModel,
    n_list: &[usize],
    tol: f64,
) -> Result<Vec<(usize, f64)>> {
    let mut table = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let zb = block_marginal(noise, n)?;
        let cond = channel.full_conditional(n, &zb)?;
        let x_cells = channel.x.size.pow(n as u32);
        let y_cells = (channel.y.size + 1).pow(n as u32);
        let r = blahut_arimoto(&cond, x_cells, y_cells, tol)?;
        table.push((n, r.value)); // value is the total over the n-block
    }
    Ok(table)
}

/// A reproducible random binary state channel (uniform state, rows with
/// probabilities bounded away from 0 and 1), for verifier suites.
pub fn seeded_state_channel(seed: u64) -> StateChannel {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let p_s = Pmf::new(Alphabet::new(2).expect("size 2"), vec![0.5, 0.5]).expect("valid pmf");
    let mut cond = Vec::with_capacity(8);
    for _ in 0..4 {
        let p = rng.gen_range(0.05..0.95);
        cond.push(p);
        cond.push(1.0 - p);
    }
    StateChannel::new(p_s, 2, 2, cond).expect("valid state channel")
}

/// A reproducible random binary 2-block channel kernel with factor
/// probabilities in [0.05, 0.95], for verifier suites.
pub fn seeded_kernel_2(seed: u64) -> CausalKernel {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let a = Alphabet::new(2).expect("size 2");
    let mut factors = Vec::new();
    for i in 0..2usize {
        let hist = 2usize.pow(i as u32) * 2usize.pow(i as u32 + 1);
        let mut f = Vec::with_capacity(hist * 2);
        for _ in 0..hist {
            let p = rng.gen_range(0.05..0.95);
            f.push(p);
            f.push(1.0 - p);
        }
        factors.push(f);
    }
    CausalKernel::new(2, a, a, KernelDirection::OutputGivenInputs, factors)
        .expect("valid kernel")
}

/// All superadditivity violations (m, n, deficit) in a nC_n table.
pub fn superadditivity_violations(table: &[(usize, f64)], tol: f64) -> Vec<(usize, usize, f64)> {
    let lookup: std::collections::HashMap<usize, f64> = table.iter().cloned().collect();
    let mut bad = Vec::new();
    for &(m, cm) in table {
        for &(n, cn) in table {
            if let Some(&cmn) = lookup.get(&(m + n)) {
                if cmn < cm + cn - tol {
                    bad.push((m, n, cm + cn - cmn));
                }
            }
        }
    }
    bad
}
