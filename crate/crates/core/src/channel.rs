//! Sliding-block deterministic channels driven by an exogenous noise process,
//! their exact n-block super laws, and derived strategy channels for
//! feedback coding over the super alphabet.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{
    causal_factorize, flatten, product_size, unflatten, Alphabet, CausalKernel, JointPmf, Pmf,
};

/// A time-invariant channel y_i = g(x_{i-m..i}, z_{i-m..i}) with window m+1.
///
/// The map `g` is a flat row-major table over the axes
/// (x_{i-m}, ..., x_i, z_{i-m}, ..., z_i), last axis fastest. During the
/// first m times no full window exists and the output is the null symbol.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlidingBlockChannel {
    pub m: usize,
    pub x: Alphabet,
    pub z: Alphabet,
    pub y: Alphabet,
    pub g: Vec<usize>,
}

impl SlidingBlockChannel {
    pub fn new(m: usize, x: Alphabet, z: Alphabet, y: Alphabet, g: Vec<usize>) -> Result<Self> {
        let ch = SlidingBlockChannel { m, x, z, y, g };
        ch.validate()?;
        Ok(ch)
    }

    /// Output alphabet extended with the null symbol (last index).
    pub fn output_alphabet(&self) -> Alphabet {
        Alphabet::with_null(self.y.size + 1, self.y.size).expect("valid extended alphabet")
    }

    /// The null output symbol in the extended output alphabet.
    pub fn null_output(&self) -> usize {
        self.y.size
    }

    fn window_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.x.size; self.m + 1];
        dims.extend(std::iter::repeat_n(self.z.size, self.m + 1));
        dims
    }

    pub fn validate(&self) -> Result<()> {
        let cells = product_size(&self.window_dims())?;
        if self.g.len() != cells {
            return Err(Error::Mismatch(format!(
                "g table has {} cells, window needs {cells}",
                self.g.len()
            )));
        }
        if self.g.iter().any(|&y| !self.y.contains(y)) {
            return Err(Error::InvalidArgument("g output out of alphabet".into()));
        }
        Ok(())
    }

    /// g evaluated on explicit windows x_{i-m..i}, z_{i-m..i}.
    pub fn g_at(&self, xs: &[usize], zs: &[usize]) -> usize {
        debug_assert_eq!(xs.len(), self.m + 1);
        debug_assert_eq!(zs.len(), self.m + 1);
        let mut idx = 0usize;
        for &x in xs {
            idx = idx * self.x.size + x;
        }
        for &z in zs {
            idx = idx * self.z.size + z;
        }
        self.g[idx]
    }

    /// Run the channel over full paths. Outputs are over the extended
    /// alphabet; the first m outputs are the null symbol.
    pub fn apply(&self, x: &[usize], z: &[usize]) -> Result<Vec<usize>> {
        if x.len() != z.len() {
            return Err(Error::Mismatch("input and noise paths differ in length".into()));
        }
        let null = self.null_output();
        let mut y = Vec::with_capacity(x.len());
        for i in 0..x.len() {
            if i < self.m {
                y.push(null);
            } else {
                y.push(self.g_at(&x[i - self.m..=i], &z[i - self.m..=i]));
            }
        }
        Ok(y)
    }

    /// Frame-local application inside one n-block: history is cut at the
    /// frame boundary, so the first m coordinates are null.
    pub fn apply_frame(&self, x: &[usize], z: &[usize]) -> Result<Vec<usize>> {
        self.apply(x, z)
    }

    /// Exact frame-local conditional p(y^n | x^n) under the given n-block
    /// noise law, as a flat table indexed [x_flat * ycells + y_flat] over the
    /// extended output alphabet.
    pub fn full_conditional(&self, n: usize, z_block: &Pmf) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::InvalidArgument("n must be >= 1".into()));
        }
        let z_dims = vec![self.z.size; n];
        let z_cells = product_size(&z_dims)?;
        if z_block.len() != z_cells {
            return Err(Error::Mismatch(format!(
                "noise block pmf has {} cells, expected {z_cells}",
                z_block.len()
            )));
        }
        let x_dims = vec![self.x.size; n];
        let x_cells = product_size(&x_dims)?;
        let y_ext = self.output_alphabet();
        let y_dims = vec![y_ext.size; n];
        let y_cells = product_size(&y_dims)?;
        product_size(&[x_cells, y_cells])?;
        let mut cond = vec![0.0; x_cells * y_cells];
        let mut xs = vec![0usize; n];
        let mut zs = vec![0usize; n];
        for xf in 0..x_cells {
            unflatten(xf, &x_dims, &mut xs);
            for (zf, &pz) in z_block.probs.iter().enumerate() {
                if pz == 0.0 {
                    continue;
                }
                unflatten(zf, &z_dims, &mut zs);
                let ys = self.apply_frame(&xs, &zs)?;
                cond[xf * y_cells + flatten(&y_dims, &ys)] += pz;
            }
        }
        Ok(cond)
    }

    /// Causally factor the frame-local super law into p(y^n || x^n).
    ///
    /// The factorization is exact because, with the noise independent of the
    /// input, p(y_i | x^n, y^{i-1}) does not depend on x_{i+1..n}.
    pub fn n_block_law(&self, n: usize, z_block: &Pmf) -> Result<CausalKernel> {
        let cond = self.full_conditional(n, z_block)?;
        let y_ext = self.output_alphabet();
        let x_cells = product_size(&vec![self.x.size; n])?;
        // any full-support non-feedback input yields the channel's factors
        let mut axes = vec![self.x; n];
        axes.extend(std::iter::repeat_n(y_ext, n));
        let w = 1.0 / x_cells as f64;
        let probs: Vec<f64> = cond.iter().map(|&c| c * w).collect();
        let joint = JointPmf::new(axes, probs)?;
        let (_, channel_kernel) = causal_factorize(&joint, n)?;
        Ok(channel_kernel)
    }
}

/// A causal encoding strategy over an n-frame: at position i (0-based) an
/// auxiliary letter u_i drawn from its own alphabet is turned into the channel
/// input through a deterministic map of the frame-local histories,
/// x_i = f_i(u_i, x^{i-1}, y^{i-1}). The y-history is over the extended
/// output alphabet because warm-up outputs are the null symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShannonStrategy {
    pub n: usize,
    pub x: Alphabet,
    /// Extended output alphabet (null last).
    pub y_ext: Alphabet,
    /// Auxiliary alphabet sizes |U_i|.
    pub u_sizes: Vec<usize>,
    /// Per-position letter laws p_i(u_i).
    pub pmfs: Vec<Pmf>,
    /// maps[i] is f_i laid out row-major over (u_i, x^{i-1}, y^{i-1}),
    /// histories earliest-first, values in X.
    pub maps: Vec<Vec<usize>>,
}

impl ShannonStrategy {
    fn map_domain(&self, i: usize) -> Result<usize> {
        let mut dims = vec![self.u_sizes[i]];
        dims.extend(std::iter::repeat_n(self.x.size, i));
        dims.extend(std::iter::repeat_n(self.y_ext.size, i));
        product_size(&dims)
    }

    pub fn validate(&self) -> Result<()> {
        if self.u_sizes.len() != self.n
            || self.pmfs.len() != self.n
            || self.maps.len() != self.n
        {
            return Err(Error::Mismatch("strategy needs n alphabets, pmfs and maps".into()));
        }
        for i in 0..self.n {
            if self.pmfs[i].len() != self.u_sizes[i] {
                return Err(Error::Mismatch(format!("pmf {i} does not match |U_{i}|")));
            }
            self.pmfs[i].validate()?;
            let domain = self.map_domain(i)?;
            if self.maps[i].len() != domain {
                return Err(Error::Mismatch(format!(
                    "map {i} has {} entries, domain is {domain}",
                    self.maps[i].len()
                )));
            }
            if self.maps[i].iter().any(|&x| !self.x.contains(x)) {
                return Err(Error::InvalidArgument("strategy output out of alphabet".into()));
            }
        }
        Ok(())
    }

    /// x_i = f_i(u_i, x-history, y-history), histories earliest-first.
    pub fn input_at(&self, i: usize, u: usize, x_hist: &[usize], y_hist: &[usize]) -> usize {
        debug_assert_eq!(x_hist.len(), i);
        debug_assert_eq!(y_hist.len(), i);
        let mut flat = u;
        for &x in x_hist {
            flat = flat * self.x.size + x;
        }
        for &y in y_hist {
            flat = flat * self.y_ext.size + y;
        }
        self.maps[i][flat]
    }

    /// The history-blind strategy x_i = u_i with the given per-position laws.
    pub fn pass_through(ch: &SlidingBlockChannel, n: usize, pmfs: Vec<Pmf>) -> Result<Self> {
        if pmfs.len() != n {
            return Err(Error::Mismatch("need one pmf per position".into()));
        }
        let x = ch.x;
        let y_ext = ch.output_alphabet();
        let mut maps = Vec::with_capacity(n);
        for i in 0..n {
            let hist = product_size(
                &std::iter::repeat_n(x.size, i)
                    .chain(std::iter::repeat_n(y_ext.size, i))
                    .collect::<Vec<_>>(),
            )?;
            let mut f = Vec::with_capacity(x.size * hist);
            for u in 0..x.size {
                f.extend(std::iter::repeat_n(u, hist));
            }
            maps.push(f);
        }
        let s = ShannonStrategy { n, x, y_ext, u_sizes: vec![x.size; n], pmfs, maps };
        s.validate()?;
        Ok(s)
    }
}

/// The super channel p(y-block | u-block) induced by closed-loop, frame-local
/// operation of a strategy against the sliding-block channel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DerivedChannel {
    pub n: usize,
    pub u_dims: Vec<usize>,
    /// Extended output alphabet (null last).
    pub y_ext: Alphabet,
    /// Flat conditional indexed [u_flat * ycells + y_flat].
    pub probs: Vec<f64>,
}

impl DerivedChannel {
    pub fn u_cells(&self) -> usize {
        self.u_dims.iter().product()
    }

    pub fn y_cells(&self) -> usize {
        self.y_ext.size.pow(self.n as u32)
    }
}

/// Build the derived channel by simulating the closed loop for every
/// strategy-letter tuple against every noise block.
pub fn derived_channel(
    ch: &SlidingBlockChannel,
    strategy: &ShannonStrategy,
    z_block: &Pmf,
    n: usize,
) -> Result<DerivedChannel> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    ch.validate()?;
    strategy.validate()?;
    if strategy.n != n || strategy.x != ch.x || strategy.y_ext != ch.output_alphabet() {
        return Err(Error::Mismatch("strategy does not match channel/horizon".into()));
    }
    let z_dims = vec![ch.z.size; n];
    let z_cells = product_size(&z_dims)?;
    if z_block.len() != z_cells {
        return Err(Error::Mismatch("noise block pmf size mismatch".into()));
    }
    let u_dims = strategy.u_sizes.clone();
    let u_cells = product_size(&u_dims)?;
    let y_ext = ch.output_alphabet();
    let y_dims = vec![y_ext.size; n];
    let y_cells = product_size(&y_dims)?;
    product_size(&[u_cells, y_cells])?;
    let mut probs = vec![0.0; u_cells * y_cells];
    let mut u_idx = vec![0usize; n];
    let mut zs = vec![0usize; n];
    for uf in 0..u_cells {
        unflatten(uf, &u_dims, &mut u_idx);
        for (zf, &pz) in z_block.probs.iter().enumerate() {
            if pz == 0.0 {
                continue;
            }
            unflatten(zf, &z_dims, &mut zs);
            // closed loop inside the frame
            let mut xs: Vec<usize> = Vec::with_capacity(n);
            let mut ys: Vec<usize> = Vec::with_capacity(n);
            for i in 0..n {
                let x = strategy.input_at(i, u_idx[i], &xs, &ys);
                xs.push(x);
                if i < ch.m {
                    ys.push(ch.null_output());
                } else {
                    ys.push(ch.g_at(&xs[i - ch.m..=i], &zs[i - ch.m..=i]));
                }
            }
            probs[uf * y_cells + flatten(&y_dims, &ys)] += pz;
        }
    }
    Ok(DerivedChannel { n, u_dims, y_ext, probs })
}

/// Modulo-|X| additive channel with window m = 0 (x and z share an alphabet
/// size and y = x + z mod k). Convenience constructor for tests and configs.
pub fn additive_channel(k: usize) -> Result<SlidingBlockChannel> {
    let a = Alphabet::new(k)?;
    let mut g = vec![0usize; k * k];
    for x in 0..k {
        for z in 0..k {
            g[x * k + z] = (x + z) % k;
        }
    }
    SlidingBlockChannel::new(0, a, a, a, g)
}
