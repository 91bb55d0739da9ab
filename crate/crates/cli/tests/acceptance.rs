//! Acceptance gate: eleven end-to-end criteria covering the closed-form
//! oracles, the information identities, the solver lemmas, the interleaving
//! construction, the typicality exponent, both coding experiments,
//! superadditivity, and byte-level reproducibility.
//!
//! Each test prints exactly one `criterion NN: PASS/FAIL — detail` line
//! before asserting, so a red run still reports every measured number.

use std::fs;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use tempfile::TempDir;

use fbchan_core::capacity::{
    blahut_arimoto, cfb_ascent, cfb_exhaustive, max_product_mi, seeded_kernel_2,
    seeded_state_channel, superadditivity_check, superadditivity_violations, verify_state1,
    verify_state2,
};
use fbchan_core::channel::{additive_channel, ShannonStrategy, SlidingBlockChannel};
use fbchan_core::codelab::{run_fb_experiment, run_nf_experiment, ExperimentParams, TrialReport};
use fbchan_core::prob::{
    compose, conditional_mi, directed_information, directed_information_alt, mutual_information,
};
use fbchan_core::processes::{
    block_marginal, empirical_super_freq_with_alphabet, gallager_interleave, sample_path,
    stationary_of, NoiseModel,
};
use fbchan_core::{Alphabet, CausalKernel, JointPmf, KernelDirection, Pmf};

fn report(num: usize, pass: bool, detail: &str) {
    println!("criterion {num:02}: {} — {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {num:02} failed: {detail}");
}

fn h2(q: f64) -> f64 {
    let t = |p: f64| if p > 0.0 { -p * p.log2() } else { 0.0 };
    t(q) + t(1.0 - q)
}

fn bern(q: f64) -> Pmf {
    Pmf::new(Alphabet::new(2).unwrap(), vec![1.0 - q, q]).unwrap()
}

/// Criterion 1: closed-form capacity for BSC(q), q in {0.05, 0.11, 0.25},
/// within 1e-4 bits, each solve under one second.
#[test]
fn criterion_01_bsc_closed_form() {
    let mut pass = true;
    let mut detail = String::new();
    for q in [0.05, 0.11, 0.25] {
        let w = vec![1.0 - q, q, q, 1.0 - q];
        let t0 = Instant::now();
        let r = blahut_arimoto(&w, 2, 2, 1e-9).unwrap();
        let dt = t0.elapsed();
        let expect = 1.0 - h2(q);
        let err = (r.value - expect).abs();
        pass &= err < 1e-4 && dt.as_secs_f64() < 1.0;
        detail.push_str(&format!("q={q}: |err|={err:.2e} in {dt:.2?}; "));
    }
    report(1, pass, detail.trim_end());
}

fn random_pmf(rng: &mut ChaCha12Rng, k: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..k).map(|_| -rng.gen::<f64>().ln()).collect();
    let s: f64 = v.iter().sum();
    for p in &mut v {
        *p /= s;
    }
    v
}

fn random_joint(rng: &mut ChaCha12Rng, n: usize, xk: usize, yk: usize) -> JointPmf {
    let mut axes = vec![Alphabet::new(xk).unwrap(); n];
    axes.extend(vec![Alphabet::new(yk).unwrap(); n]);
    let cells: usize = axes.iter().map(|a| a.size).product();
    JointPmf::new(axes, random_pmf(rng, cells)).unwrap()
}

/// A feedback-blind input kernel: each factor ignores the y-history.
fn random_blind_input(rng: &mut ChaCha12Rng, n: usize, xk: usize, yk: usize) -> CausalKernel {
    let mut factors = Vec::new();
    for i in 0..n {
        let xh = xk.pow(i as u32);
        let yh = yk.pow(i as u32);
        let mut f = vec![0.0; xh * yh * xk];
        for a in 0..xh {
            let p = random_pmf(rng, xk);
            for b in 0..yh {
                f[(a * yh + b) * xk..(a * yh + b) * xk + xk].copy_from_slice(&p);
            }
        }
        factors.push(f);
    }
    CausalKernel::new(
        n,
        Alphabet::new(xk).unwrap(),
        Alphabet::new(yk).unwrap(),
        KernelDirection::InputGivenPastOutputs,
        factors,
    )
    .unwrap()
}

fn random_channel_kernel(rng: &mut ChaCha12Rng, n: usize, xk: usize, yk: usize) -> CausalKernel {
    let mut factors = Vec::new();
    for i in 0..n {
        let slices = yk.pow(i as u32) * xk.pow(i as u32 + 1);
        let mut f = Vec::with_capacity(slices * yk);
        for _ in 0..slices {
            f.extend(random_pmf(rng, yk));
        }
        factors.push(f);
    }
    CausalKernel::new(
        n,
        Alphabet::new(yk).unwrap(),
        Alphabet::new(xk).unwrap(),
        KernelDirection::OutputGivenInputs,
        factors,
    )
    .unwrap()
}

/// Criterion 2: on 200 seeded joints (n <= 3, alphabets <= 3) the two
/// directed-information expansions agree to 1e-10, the no-feedback
/// reduction to mutual information holds to 1e-10, and directed <= mutual.
#[test]
fn criterion_02_directed_information_identities() {
    let mut rng = ChaCha12Rng::seed_from_u64(20_240_201);
    let mut max_form_gap: f64 = 0.0;
    let mut max_massey_gap: f64 = 0.0;
    let mut max_excess: f64 = 0.0;
    for trial in 0..200usize {
        let n = 1 + trial % 3;
        let xk = 2 + (trial / 3) % 2;
        let yk = 2 + (trial / 6) % 2;
        let j = if trial % 2 == 0 {
            random_joint(&mut rng, n, xk, yk)
        } else {
            // y-blind input composed with an arbitrary causal channel
            let input = random_blind_input(&mut rng, n, xk, yk);
            let channel = random_channel_kernel(&mut rng, n, xk, yk);
            compose(&input, &channel).unwrap()
        };
        let di = directed_information(&j, n).unwrap().value;
        let di_alt = directed_information_alt(&j, n).unwrap().value;
        let xs: Vec<usize> = (0..n).collect();
        let ys: Vec<usize> = (n..2 * n).collect();
        let mi = conditional_mi(&j, &xs, &ys, &[]).unwrap();
        max_form_gap = max_form_gap.max((di - di_alt).abs());
        max_excess = max_excess.max(di - mi);
        if trial % 2 == 1 {
            max_massey_gap = max_massey_gap.max((di - mi).abs());
        }
    }
    let pass = max_form_gap < 1e-10 && max_massey_gap < 1e-10 && max_excess < 1e-10;
    report(
        2,
        pass,
        &format!(
            "200 joints: form gap {max_form_gap:.2e}, no-feedback gap {max_massey_gap:.2e}, \
             directed-minus-mutual max {max_excess:.2e}"
        ),
    );
}

/// Criterion 3: state-channel strategy equality on 10 seeded binary
/// instances, |lhs - rhs| < 1e-4, under 30 s total.
#[test]
fn criterion_03_state_strategy_equality() {
    let t0 = Instant::now();
    let mut max_gap: f64 = 0.0;
    for seed in 0..10u64 {
        let sc = seeded_state_channel(300 + seed);
        let (_, _, gap) = verify_state1(&sc, 3, 1e-9).unwrap();
        max_gap = max_gap.max(gap);
    }
    let dt = t0.elapsed();
    let pass = max_gap < 1e-4 && dt.as_secs_f64() < 30.0;
    report(3, pass, &format!("10 instances: max gap {max_gap:.2e} in {dt:.2?}"));
}

/// Criterion 4: two-block strategy equality against the 1/64 grid oracle on
/// 10 seeded binary kernels, gap < 5e-3, under 10 min total.
#[test]
fn criterion_04_two_block_strategy_equality() {
    let t0 = Instant::now();
    let mut max_gap: f64 = 0.0;
    for seed in 0..10u64 {
        let kernel = seeded_kernel_2(400 + seed);
        let (_, _, gap) = verify_state2(&kernel, 64, 1e-8, 400 + seed).unwrap();
        max_gap = max_gap.max(gap);
    }
    let dt = t0.elapsed();
    let pass = max_gap < 5e-3 && dt.as_secs_f64() < 600.0;
    report(4, pass, &format!("10 kernels: max gap {max_gap:.2e} in {dt:.2?}"));
}

/// Criterion 5: on the m=0 XOR channel with first-order Markov flip noise
/// (persistence 0.8), feedback does not change the n-block capacity:
/// |C_FB,n - C_n| < 2e-3 bits for n in {1, 2, 3}.
#[test]
fn criterion_05_additive_feedback_equality() {
    let ch = additive_channel(2).unwrap();
    let transition = vec![0.8, 0.2, 0.2, 0.8];
    let noise = NoiseModel::Markov {
        alphabet: Alphabet::new(2).unwrap(),
        stationary: stationary_of(&transition, 2).unwrap(),
        transition,
    };
    let mut pass = true;
    let mut detail = String::new();
    for n in 1..=3usize {
        let zb = block_marginal(&noise, n).unwrap();
        let cond = ch.full_conditional(n, &zb).unwrap();
        let cn = blahut_arimoto(&cond, 1 << n, 3usize.pow(n as u32), 1e-10).unwrap().value
            / n as f64;
        let kernel = ch.n_block_law(n, &zb).unwrap();
        let cfb = if n <= 2 {
            cfb_exhaustive(&kernel, 64).unwrap().value
        } else {
            cfb_ascent(&kernel, 1e-9, 4, 500).unwrap().value
        };
        let gap = (cfb - cn).abs();
        pass &= gap < 2e-3;
        detail.push_str(&format!("n={n}: C={cn:.5}, C_FB={cfb:.5}, |d|={gap:.2e}; "));
    }
    report(5, pass, detail.trim_end());
}

/// Criterion 6: with periodic (0,1) noise and n=2, naive blocking stays at
/// least 0.4 TV from the stationary 2-block law at every tested length,
/// while the shifted-block interleave is within 0.02 TV at L = 800.
#[test]
fn criterion_06_interleaving_restores_typicality() {
    let noise = NoiseModel::Periodic {
        alphabet: Alphabet::new(2).unwrap(),
        cycle: vec![0, 1],
    };
    let n = 2;
    let stationary = block_marginal(&noise, n).unwrap();
    let mut naive_min: f64 = f64::INFINITY;
    for (i, len) in [200usize, 800, 3200].into_iter().enumerate() {
        let path = sample_path(&noise, len * n, 600 + i as u64).unwrap();
        let freq = empirical_super_freq_with_alphabet(&path, n, 2).unwrap();
        naive_min = naive_min.min(freq.tv_distance(&stationary).unwrap());
    }
    let big_l = 800;
    let path = sample_path(&noise, big_l * n * n + n, 777).unwrap();
    let inter = gallager_interleave(&path, n, big_l).unwrap();
    let freq = empirical_super_freq_with_alphabet(&inter, n, 2).unwrap();
    let inter_tv = freq.tv_distance(&stationary).unwrap();
    let pass = naive_min >= 0.4 && inter_tv < 0.02;
    report(
        6,
        pass,
        &format!("naive TV >= {naive_min:.3} at all lengths, interleaved TV = {inter_tv:.4}"),
    );
}

/// Criterion 7: wrong-pair joint-typicality probability decays at least as
/// fast as 2^{-n(I - 0.1)}. At n = 500 with a BSC(0.11)-coupled reference
/// law and epsilon = 0.05, the probability that an independently drawn
/// input row is jointly typical with a sampled output is averaged exactly
/// (per-output binomial boxes) over 10^5 sampled outputs.
#[test]
fn criterion_07_typicality_exponent() {
    let q = 0.11;
    let half = 0.5;
    let axes = vec![Alphabet::new(2).unwrap(); 2];
    let probs = vec![half * (1.0 - q), half * q, half * q, half * (1.0 - q)];
    let joint = JointPmf::new(axes, probs.clone()).unwrap();
    let info = mutual_information(&joint).unwrap();
    let n = 500usize;
    let trials = 100_000usize;
    let epsilon = 0.05;
    let slack = epsilon / 4.0;
    // ln n! table for exact binomial masses
    let mut lnfact = vec![0.0f64; n + 1];
    for i in 1..=n {
        lnfact[i] = lnfact[i - 1] + (i as f64).ln();
    }
    // ln P[Bin(c, 1/2) lands every cell of column b inside the slack box]
    let ln_box = |c: usize, j1: f64, j0: f64| -> f64 {
        let nf = n as f64;
        let mut terms: Vec<f64> = Vec::new();
        for k in 0..=c {
            let f1 = k as f64 / nf;
            let f0 = (c - k) as f64 / nf;
            // same strict predicate as the literal typicality check
            if (f1 - j1).abs() < slack && (f0 - j0).abs() < slack {
                terms.push(lnfact[c] - lnfact[k] - lnfact[c - k] + c as f64 * half.ln());
            }
        }
        if terms.is_empty() {
            return f64::NEG_INFINITY;
        }
        let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
    };
    let mut rng = ChaCha12Rng::seed_from_u64(700);
    let mut memo = vec![f64::NAN; n + 1];
    let mut ln_terms = Vec::with_capacity(trials);
    for _ in 0..trials {
        let c1 = (0..n).filter(|_| rng.gen::<f64>() < half).count();
        if memo[c1].is_nan() {
            // columns are independent binomials given the output counts
            memo[c1] = ln_box(n - c1, probs[2], probs[0]) + ln_box(c1, probs[3], probs[1]);
        }
        ln_terms.push(memo[c1]);
    }
    let m = ln_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ln_mean = m + (ln_terms.iter().map(|t| (t - m).exp()).sum::<f64>() / trials as f64).ln();
    let exponent = ln_mean / std::f64::consts::LN_2 / n as f64;
    let bound = -info + 0.1;
    let pass = exponent <= bound;
    report(
        7,
        pass,
        &format!("measured log2(prob)/n = {exponent:.4} vs bound {bound:.4} (I = {info:.4})"),
    );
}

fn nf_ladder(rate: f64, seed: u64) -> Vec<TrialReport> {
    let ch = additive_channel(2).unwrap();
    let noise = NoiseModel::Iid { pmf: bern(0.11) };
    let pstar = Pmf::uniform(Alphabet::new(2).unwrap());
    [100usize, 200, 400]
        .into_iter()
        .map(|l| {
            let params = ExperimentParams::new(1, l, rate, 200, 0.05, seed + l as u64);
            run_nf_experiment(&ch, &noise, &pstar, &params).unwrap()
        })
        .collect()
}

/// Criterion 8: nonfeedback coding on the XOR/Bern(0.11) channel at
/// R = 0.25 (about half of capacity): P_e nonincreasing over
/// L in {100, 200, 400} and below 0.1 at L = 400 with 200 fresh-codebook
/// trials; at R = 0.75 > C the error stays above 0.5. Under 15 min.
#[test]
fn criterion_08_nonfeedback_coding() {
    let t0 = Instant::now();
    let below = nf_ladder(0.25, 800);
    let above = nf_ladder(0.75, 900);
    let dt = t0.elapsed();
    let nonincreasing = below.windows(2).all(|w| w[1].pe <= w[0].pe + 1e-12);
    let small_at_400 = below[2].pe < 0.1;
    let big_above = above.iter().all(|r| r.pe > 0.5);
    let in_time = dt.as_secs_f64() < 900.0;
    let pes: Vec<String> = below.iter().map(|r| format!("{:.3}", r.pe)).collect();
    let pass = nonincreasing && small_at_400 && big_above && in_time;
    report(
        8,
        pass,
        &format!(
            "R=0.25 pe over ladder [{}] (nonincreasing: {nonincreasing}, <0.1 at L=400: \
             {small_at_400}), R=0.75 pe all > 0.5: {big_above}, in {dt:.2?}",
            pes.join(", ")
        ),
    );
}

/// The m=1 test channel: a jammer flips the input whenever two consecutive
/// inputs agree (plus a 5% residual flip). Knowing x_{i-1} via feedback,
/// an encoder that always alternates dodges the jammer entirely.
fn jam_channel() -> SlidingBlockChannel {
    let b = Alphabet::new(2).unwrap();
    let z = Alphabet::new(4).unwrap();
    let mut g = vec![0usize; 64];
    for xp in 0..2usize {
        for xc in 0..2usize {
            for zp in 0..4usize {
                for zc in 0..4usize {
                    let jam = zc >> 1;
                    let resid = zc & 1;
                    let hit = jam & usize::from(xc == xp);
                    g[((xp * 2 + xc) * 4 + zp) * 4 + zc] = xc ^ hit ^ resid;
                }
            }
        }
    }
    SlidingBlockChannel::new(1, b, z, b, g).unwrap()
}

fn jam_noise() -> NoiseModel {
    // z = 2*jam + resid with jam ~ Bern(0.5), resid ~ Bern(0.05)
    NoiseModel::Iid {
        pmf: Pmf::new(Alphabet::new(4).unwrap(), vec![0.475, 0.025, 0.475, 0.025]).unwrap(),
    }
}

/// The alternating two-block strategy: x_1 = u (the message letter),
/// x_2 = 1 - x_1 regardless of the feedback.
fn alternating_strategy(ch: &SlidingBlockChannel) -> ShannonStrategy {
    let s = ShannonStrategy {
        n: 2,
        x: ch.x,
        y_ext: ch.output_alphabet(),
        u_sizes: vec![2, 1],
        pmfs: vec![
            Pmf::uniform(Alphabet::new(2).unwrap()),
            Pmf::uniform(Alphabet::new(1).unwrap()),
        ],
        // f_2(u2, x1, y1) = 1 - x1, row-major over (u2, x1, y1)
        maps: vec![vec![0, 1], vec![1, 1, 1, 0, 0, 0]],
    };
    s.validate().unwrap();
    s
}

/// Criterion 9: feedback coding on the m=1 jam channel at a rate strictly
/// between the best history-blind (product-input) baseline and the
/// two-block feedback capacity from coordinate ascent: P_e decreasing over
/// the L ladder, and no run with P_e < 0.05 operates more than 0.05 bits
/// above the computed capacity (Fano sanity).
#[test]
fn criterion_09_feedback_coding() {
    let ch = jam_channel();
    let noise = jam_noise();
    let rate = 0.22;
    let zb = block_marginal(&noise, 2).unwrap();
    let kernel = ch.n_block_law(2, &zb).unwrap();
    let cfb = cfb_ascent(&kernel, 1e-9, 4, 901).unwrap().value;
    let cond = ch.full_conditional(2, &zb).unwrap();
    let (baseline_block, _, _) = max_product_mi(&cond, 2, 2, 9, 1e-9, 8, 902).unwrap();
    let baseline = baseline_block / 2.0;
    let strategy = alternating_strategy(&ch);
    let reports: Vec<TrialReport> = [200usize, 800, 3200]
        .into_iter()
        .map(|l| {
            let params = ExperimentParams::new(2, l, rate, 100, 0.45, 910 + l as u64);
            run_fb_experiment(&ch, &noise, &strategy, &params).unwrap()
        })
        .collect();
    let window = baseline + 1e-6 < rate && rate < cfb - 1e-6;
    let decreasing = reports.windows(2).all(|w| w[1].pe <= w[0].pe + 1e-12)
        && reports[2].pe < reports[0].pe;
    let fano = reports
        .iter()
        .filter(|r| r.pe < 0.05)
        .all(|r| r.actual_rate <= cfb + 0.05);
    let pes: Vec<String> = reports.iter().map(|r| format!("{:.3}", r.pe)).collect();
    let pass = window && decreasing && fano;
    report(
        9,
        pass,
        &format!(
            "baseline {baseline:.4} < R {rate} < C_FB,2 {cfb:.4} ({window}); pe over ladder \
             [{}] decreasing: {decreasing}; Fano sanity: {fano}",
            pes.join(", ")
        ),
    );
}

/// Criterion 10: n C_n is superadditive on the m=1 jam channel over
/// n in {1..5}, and C_1 = 0 (the first output of every frame is warm-up).
#[test]
fn criterion_10_superadditivity() {
    let ch = jam_channel();
    let noise = jam_noise();
    let table = superadditivity_check(&ch, &noise, &[1, 2, 3, 4, 5], 1e-10).unwrap();
    let violations = superadditivity_violations(&table, 1e-6);
    let c1 = table[0].1;
    let pass = violations.is_empty() && c1.abs() < 1e-9;
    let vals: Vec<String> = table.iter().map(|(n, v)| format!("{n}C_{n}={v:.4}")).collect();
    report(
        10,
        pass,
        &format!("totals [{}], C_1 = {c1:.2e}, violations: {}", vals.join(", "), violations.len()),
    );
}

/// Criterion 11: repeating an acceptance run with the same seed produces
/// byte-identical result files, for both JSON and CSV outputs.
#[test]
fn criterion_11_reproducibility() {
    let dir = TempDir::new().unwrap();
    let mut identical = true;
    for (name, mut body) in [
        (
            "cap",
            serde_json::json!({
                "schema_version": 1,
                "command": "capacity",
                "channel": { "kind": "additive", "alphabet": 2 },
                "noise": { "kind": "iid", "pmf": { "alphabet": { "size": 2, "null": null }, "probs": [0.89, 0.11] } },
                "n": 2
            }),
        ),
        (
            "nf",
            serde_json::json!({
                "schema_version": 1,
                "command": "simulate-nf",
                "channel": { "kind": "additive", "alphabet": 2 },
                "noise": { "kind": "iid", "pmf": { "alphabet": { "size": 2, "null": null }, "probs": [0.89, 0.11] } },
                "n": 1, "l": 100, "rate": 0.25, "trials": 50, "seed": 42
            }),
        ),
    ] {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let out = dir.path().join(format!("{name}_{rep}.out"));
            body["output"] = serde_json::json!(out.to_string_lossy());
            let cfg = dir.path().join(format!("{name}_{rep}.json"));
            fs::write(&cfg, serde_json::to_string(&body).unwrap()).unwrap();
            let written = fbchan_cli::run(&cfg).unwrap();
            outputs.push(fs::read(&written[0]).unwrap());
        }
        identical &= outputs[0] == outputs[1];
    }
    report(11, identical, &format!("json+csv reruns byte-identical: {identical}"));
}
