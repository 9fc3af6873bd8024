//! Exact unconditional ML detection on the full received covariance.
//!
//! Under codeword `X_i` the observation is `y ~ CN(0, Σ_i)` with
//! `Σ_i = (I_Nr ⊗ X_i)·C_h·(I_Nr ⊗ X_iᴴ) + σ²_Z·I`, a `K`-block-Toeplitz
//! matrix. The detector picks the codeword minimizing
//! `L_j(y) = yᴴΣ_j⁻¹y/(K·Nr) + ln|Σ_j|/(K·Nr)`.

use num_complex::Complex64;

use crate::channel::{assemble_block_toeplitz, FadingCovariance};
use crate::codebook::{Codeword, CodewordAlphabet};
use crate::error::{invalid, Error, Result};
use crate::linalg::{cholesky_lower, CMat};
use crate::observation::ReceivedBlock;

/// Default cap on `K·Nr` for dense factorization.
pub const DEFAULT_MAX_DIM: usize = 8192;

/// `K`-block-Toeplitz covariance of the received block under one codeword.
///
/// `blocks[n] = Σ_i(n)` for `n = 0..Nr`; negative lags are `Σ_i(−n) = Σ_i(n)ᴴ`.
#[derive(Debug, Clone)]
pub struct BlockCovariance {
    pub blocks: Vec<CMat>,
    pub noise_power: f64,
    pub nr: usize,
}

impl BlockCovariance {
    pub fn block_len(&self) -> usize {
        self.blocks[0].nrows()
    }

    pub fn dim(&self) -> usize {
        self.block_len() * self.nr
    }

    pub fn lag(&self, n: i64) -> CMat {
        if n >= 0 {
            self.blocks[n as usize].clone()
        } else {
            self.blocks[(-n) as usize].adjoint()
        }
    }

    /// Dense `K·Nr × K·Nr` matrix.
    pub fn assemble(&self) -> CMat {
        assemble_block_toeplitz(&self.blocks)
    }
}

/// `Σ_i(n) = X_i·C(n)·X_iᴴ + σ²_Z·δ_n·I_K`, with `C(n)` the fading blocks.
pub fn build_block_covariance(x: &Codeword, fading: &FadingCovariance, noise_power: f64) -> Result<BlockCovariance> {
    if !(noise_power.is_finite() && noise_power > 0.0) {
        return invalid(format!("noise power must be positive, got {noise_power}"));
    }
    if x.nt() != fading.nt() {
        return invalid(format!("codeword has {} columns but fading has nt = {}", x.nt(), fading.nt()));
    }
    let xm = x.matrix();
    let k = xm.nrows();
    let blocks = fading
        .blocks
        .iter()
        .enumerate()
        .map(|(n, c)| {
            let mut b = xm * c * xm.adjoint();
            if n == 0 {
                for t in 0..k {
                    b[(t, t)] += noise_power;
                }
            }
            b
        })
        .collect();
    Ok(BlockCovariance { blocks, noise_power, nr: fading.nr })
}

/// Lower Cholesky factor stored row by row (row `i` holds `i+1` entries),
/// with real and imaginary parts in separate arrays.
#[derive(Debug, Clone)]
struct PackedLower {
    dim: usize,
    re: Vec<f64>,
    im: Vec<f64>,
    inv_diag: Vec<f64>,
}

/// `Σ_c a[c]·z[c]` over split complex slices with eight independent lanes.
#[inline(always)]
fn complex_dot(ar: &[f64], ai: &[f64], zr: &[f64], zi: &[f64]) -> (f64, f64) {
    const W: usize = 8;
    let n = ar.len();
    let (ar, ai, zr, zi) = (&ar[..n], &ai[..n], &zr[..n], &zi[..n]);
    let mut re = [0.0f64; W];
    let mut im = [0.0f64; W];
    let chunks = ar
        .chunks_exact(W)
        .zip(ai.chunks_exact(W))
        .zip(zr.chunks_exact(W).zip(zi.chunks_exact(W)));
    for ((a, b), (x, y)) in chunks {
        for lane in 0..W {
            re[lane] += a[lane] * x[lane] - b[lane] * y[lane];
            im[lane] += a[lane] * y[lane] + b[lane] * x[lane];
        }
    }
    let (mut sr, mut si) = (re.iter().sum::<f64>(), im.iter().sum::<f64>());
    let tail = n / W * W;
    for c in tail..n {
        sr += ar[c] * zr[c] - ai[c] * zi[c];
        si += ar[c] * zi[c] + ai[c] * zr[c];
    }
    (sr, si)
}

impl PackedLower {
    fn from_dense(l: &CMat) -> Self {
        let dim = l.nrows();
        let len = dim * (dim + 1) / 2;
        let (mut re, mut im) = (Vec::with_capacity(len), Vec::with_capacity(len));
        for i in 0..dim {
            for j in 0..=i {
                re.push(l[(i, j)].re);
                im.push(l[(i, j)].im);
            }
        }
        // Diagonal of a Cholesky factor is real and positive.
        let inv_diag = (0..dim).map(|i| 1.0 / l[(i, i)].re).collect();
        PackedLower { dim, re, im, inv_diag }
    }

    /// `‖L⁻¹·y‖²` by forward substitution.
    fn whitened_energy(&self, y: &[Complex64], scratch: &mut Vec<f64>) -> f64 {
        self.whitened_energies(&[y], scratch)[0]
    }

    /// `‖L⁻¹·y_b‖²` for several observations in one pass over the factor.
    fn whitened_energies(&self, ys: &[&[Complex64]], scratch: &mut Vec<f64>) -> Vec<f64> {
        #[cfg(target_arch = "x86_64")]
        {
            if std::arch::is_x86_feature_detected!("avx2") {
                // SAFETY: the CPU supports AVX2, checked just above.
                return unsafe { self.whitened_energies_avx2(ys, scratch) };
            }
        }
        self.whitened_energies_generic(ys, scratch)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn whitened_energies_avx2(&self, ys: &[&[Complex64]], scratch: &mut Vec<f64>) -> Vec<f64> {
        self.whitened_energies_generic(ys, scratch)
    }

    #[inline(always)]
    fn whitened_energies_generic(&self, ys: &[&[Complex64]], scratch: &mut Vec<f64>) -> Vec<f64> {
        let (dim, nb) = (self.dim, ys.len());
        scratch.clear();
        scratch.resize(2 * dim * nb, 0.0);
        let mut energy = vec![0.0; nb];
        let mut offset = 0;
        for i in 0..dim {
            let (lr, li) = (&self.re[offset..offset + i], &self.im[offset..offset + i]);
            for (b, y) in ys.iter().enumerate() {
                let z = &mut scratch[2 * dim * b..2 * dim * (b + 1)];
                let (zr, zi) = z.split_at_mut(dim);
                let (re, im) = complex_dot(lr, li, &zr[..i], &zi[..i]);
                let (a, c) = ((y[i].re - re) * self.inv_diag[i], (y[i].im - im) * self.inv_diag[i]);
                energy[b] += a * a + c * c;
                zr[i] = a;
                zi[i] = c;
            }
            offset += i + 1;
        }
        energy
    }
}

#[derive(Debug, Clone)]
struct DirectFactor {
    lower: PackedLower,
    log_det: f64,
}

/// Per-codeword factorizations and normalized log-determinants `ℓ_j`.
#[derive(Debug, Clone)]
pub struct DirectDetectorState {
    k: usize,
    nr: usize,
    factors: Vec<DirectFactor>,
}

impl DirectDetectorState {
    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn block_len(&self) -> usize {
        self.k
    }

    pub fn nr(&self) -> usize {
        self.nr
    }

    /// `ℓ_j = ln|Σ_j| / (K·Nr)`
    pub fn log_det(&self, j: usize) -> f64 {
        self.factors[j].log_det
    }

    /// `Q_j(y) = yᴴΣ_j⁻¹y / (K·Nr)`
    pub fn quadratic(&self, y: &ReceivedBlock, j: usize) -> Result<f64> {
        self.check(y)?;
        let mut scratch = Vec::with_capacity(2 * y.len());
        Ok(self.factors[j].lower.whitened_energy(y.samples(), &mut scratch) / y.len() as f64)
    }

    fn check(&self, y: &ReceivedBlock) -> Result<()> {
        if y.len() != self.k * self.nr {
            return invalid(format!("observation length {} does not match K*Nr = {}", y.len(), self.k * self.nr));
        }
        Ok(())
    }

    /// All metrics `L_j(y)`, reusing one scratch buffer.
    pub fn metrics(&self, y: &ReceivedBlock) -> Result<Vec<f64>> {
        self.check(y)?;
        let n = y.len() as f64;
        let mut scratch = Vec::with_capacity(2 * y.len());
        Ok(self
            .factors
            .iter()
            .map(|f| f.lower.whitened_energy(y.samples(), &mut scratch) / n + f.log_det)
            .collect())
    }
}

impl DirectDetectorState {
    /// Metrics for a batch of observations; equal to calling
    /// [`DirectDetectorState::metrics`] on each, but each factor is read once
    /// per batch instead of once per observation.
    pub fn metrics_batch(&self, ys: &[ReceivedBlock]) -> Result<Vec<Vec<f64>>> {
        for y in ys {
            self.check(y)?;
        }
        let n = (self.k * self.nr) as f64;
        let slices: Vec<&[Complex64]> = ys.iter().map(|y| y.samples()).collect();
        let mut scratch = Vec::new();
        let mut out = vec![Vec::with_capacity(self.len()); ys.len()];
        for f in &self.factors {
            for (row, e) in out.iter_mut().zip(f.lower.whitened_energies(&slices, &mut scratch)) {
                row.push(e / n + f.log_det);
            }
        }
        Ok(out)
    }
}

fn factor(cov: &BlockCovariance) -> Result<DirectFactor> {
    let dense = cov.assemble();
    let l = cholesky_lower(&dense)?;
    let n = dense.nrows() as f64;
    let log_det = 2.0 * l.diagonal().iter().map(|d| d.re.ln()).sum::<f64>() / n;
    Ok(DirectFactor { lower: PackedLower::from_dense(&l), log_det })
}

pub fn precompute_direct(alphabet: &CodewordAlphabet, fading: &FadingCovariance, noise_power: f64) -> Result<DirectDetectorState> {
    precompute_direct_with_limit(alphabet, fading, noise_power, DEFAULT_MAX_DIM)
}

/// Like [`precompute_direct`] with an explicit cap on `K·Nr`.
pub fn precompute_direct_with_limit(
    alphabet: &CodewordAlphabet,
    fading: &FadingCovariance,
    noise_power: f64,
    max_dim: usize,
) -> Result<DirectDetectorState> {
    let (k, nr) = (alphabet.block_len(), fading.nr);
    if k * nr > max_dim {
        return invalid(format!("direct detector limited to K*Nr <= {max_dim}, got {}", k * nr));
    }
    let factors = alphabet
        .codewords()
        .iter()
        .enumerate()
        .map(|(j, x)| {
            let cov = build_block_covariance(x, fading, noise_power)?;
            factor(&cov).map_err(|e| match e {
                Error::Numerical(msg) => Error::Numerical(format!("codeword {j}: {msg}")),
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DirectDetectorState { k, nr, factors })
}

/// `L_j(y) = Q_j(y) + ℓ_j`
pub fn ml_metric_direct(y: &ReceivedBlock, state: &DirectDetectorState, j: usize) -> Result<f64> {
    if j >= state.len() {
        return invalid(format!("codeword index {j} out of range"));
    }
    Ok(state.quadratic(y, j)? + state.log_det(j))
}

/// Index of the smallest metric; ties go to the lowest index.
pub fn detect_direct(y: &ReceivedBlock, state: &DirectDetectorState) -> Result<usize> {
    if state.is_empty() {
        return invalid("empty alphabet");
    }
    Ok(argmin(&state.metrics(y)?))
}

pub(crate) fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}
