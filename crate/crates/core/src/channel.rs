//! Spatially-stationary Weichselberger (SSW) fading statistics.
//!
//! The channel is `H = Ut·H̊·F_Nr`: a transmit basis `Ut`, a matrix of
//! independent streams, and the receive-side Fourier basis. Row `k` of
//! `H̊·F_Nr` is a wide-sense stationary process across the array with
//! autocorrelation `[C_H(m)]_{k,k}` and spectrum `S_H^(k)(λ)`. The
//! column-wise vectorization of `H` is therefore cyclostationary with period
//! `nt`, and its covariance is `nt`-block-Toeplitz.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Error, Result};
use crate::linalg::{cis, complex_gaussian, unitarity_defect, CMat};

/// Normalized sinc, `sin(πx)/(πx)`.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

/// How the per-stream second-order statistics are specified.
#[derive(Debug, Clone, PartialEq)]
pub enum FadingStatistics {
    /// `[C_H(m)]_{k,k} = 1/(k+2)·sinc²(m/(k+2))`; triangular spectra.
    Triangular,
    /// Real, even autocorrelation per stream for lags `0..len`, zero beyond.
    Lags(Vec<Vec<f64>>),
    /// Spectrum samples `γ_{k,l}` on the length-`Nr` grid `λ = l/Nr`.
    Grid(Vec<Vec<f64>>),
}

/// Per-stream fading spectra plus the transmitter basis `Ut`.
#[derive(Debug, Clone)]
pub struct ChannelProfile {
    nt: usize,
    stats: FadingStatistics,
    ut: CMat,
}

impl ChannelProfile {
    fn with_stats(nt: usize, stats: FadingStatistics) -> Self {
        ChannelProfile { nt, stats, ut: CMat::identity(nt, nt) }
    }

    /// Triangular-spectrum preset. `Ut` defaults to the identity.
    pub fn triangular(nt: usize, nr: usize) -> Result<Self> {
        if nt == 0 {
            return invalid("nt must be positive");
        }
        if nr < 2 || !nr.is_multiple_of(2) {
            return invalid(format!("nr must be even and at least 2, got {nr}"));
        }
        Ok(Self::with_stats(nt, FadingStatistics::Triangular))
    }

    /// i.i.d. Rayleigh fading: `C_H(m) = δ_m·I`, flat unit spectra.
    pub fn iid(nt: usize) -> Result<Self> {
        Self::from_lags(vec![vec![1.0]; nt])
    }

    pub fn from_lags(lags: Vec<Vec<f64>>) -> Result<Self> {
        if lags.is_empty() {
            return invalid("profile needs at least one stream");
        }
        for (k, acf) in lags.iter().enumerate() {
            let c0 = acf.first().copied().unwrap_or(0.0);
            if acf.iter().any(|c| !c.is_finite()) {
                return invalid(format!("stream {k}: non-finite autocorrelation"));
            }
            if c0 < 0.0 || acf.iter().any(|c| c.abs() > c0 + 1e-12) {
                return invalid(format!("stream {k}: autocorrelation must satisfy |c(m)| <= c(0)"));
            }
        }
        Ok(Self::with_stats(lags.len(), FadingStatistics::Lags(lags)))
    }

    pub fn from_grid(gamma: Vec<Vec<f64>>) -> Result<Self> {
        if gamma.is_empty() {
            return invalid("profile needs at least one stream");
        }
        let nr = gamma[0].len();
        if nr == 0 || gamma.iter().any(|g| g.len() != nr) {
            return invalid("all grid streams must share the same nonzero length");
        }
        if gamma.iter().flatten().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return invalid("spectrum samples must be finite and nonnegative");
        }
        Ok(Self::with_stats(gamma.len(), FadingStatistics::Grid(gamma)))
    }

    /// Replaces the transmitter basis; it must be `nt × nt` unitary.
    pub fn with_ut(mut self, ut: CMat) -> Result<Self> {
        if ut.nrows() != self.nt || ut.ncols() != self.nt {
            return invalid(format!("Ut must be {0}x{0}", self.nt));
        }
        let defect = unitarity_defect(&ut);
        if defect > 1e-10 {
            return invalid(format!("Ut is not unitary (defect {defect:.3e})"));
        }
        self.ut = ut;
        Ok(self)
    }

    /// Draws `Ut` from the Haar measure with the given seed.
    pub fn with_random_ut(self, seed: u64) -> Result<Self> {
        let ut = random_unitary(self.nt, seed)?;
        self.with_ut(ut)
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn ut(&self) -> &CMat {
        &self.ut
    }

    pub fn statistics(&self) -> &FadingStatistics {
        &self.stats
    }

    /// Array size fixed by a grid-specified profile, if any.
    pub fn grid_len(&self) -> Option<usize> {
        match &self.stats {
            FadingStatistics::Grid(g) => Some(g[0].len()),
            _ => None,
        }
    }

    /// `[C_H(m)]_{k,k}` before power normalization. Negative lags follow
    /// `C_H(−m) = C_H(m)*`.
    pub fn acf(&self, k: usize, m: i64) -> Complex64 {
        match &self.stats {
            FadingStatistics::Triangular => {
                let width = (k + 2) as f64;
                Complex64::new(sinc(m as f64 / width).powi(2) / width, 0.0)
            }
            FadingStatistics::Lags(lags) => {
                let lag = m.unsigned_abs() as usize;
                Complex64::new(lags[k].get(lag).copied().unwrap_or(0.0), 0.0)
            }
            FadingStatistics::Grid(gamma) => {
                let g = &gamma[k];
                let nr = g.len();
                let m = m.rem_euclid(nr as i64) as usize;
                let sum: Complex64 = g
                    .iter()
                    .enumerate()
                    .map(|(l, &v)| cis(((m * l) % nr) as f64 / nr as f64) * v)
                    .sum();
                sum / nr as f64
            }
        }
    }

    /// `S_H^(k)(λ)` before power normalization, 1-periodic in `λ`.
    ///
    /// Exact for closed-form profiles; nearest grid node for grid profiles.
    pub fn spectrum(&self, k: usize, lambda: f64) -> f64 {
        match &self.stats {
            FadingStatistics::Triangular => {
                let width = (k + 2) as f64;
                let dist = (lambda - lambda.round()).abs();
                (1.0 - width * dist).max(0.0)
            }
            FadingStatistics::Lags(lags) => {
                let acf = &lags[k];
                acf.iter()
                    .enumerate()
                    .map(|(m, &c)| {
                        if m == 0 {
                            c
                        } else {
                            2.0 * c * (2.0 * PI * m as f64 * lambda).cos()
                        }
                    })
                    .sum()
            }
            FadingStatistics::Grid(gamma) => {
                let g = &gamma[k];
                let nr = g.len();
                let idx = (lambda * nr as f64).round().rem_euclid(nr as f64) as usize % nr;
                g[idx]
            }
        }
    }

    /// Power normalization `η` making `trace(C_h) = nt·Nr`.
    pub fn eta(&self) -> Result<f64> {
        let (target, total) = match &self.stats {
            FadingStatistics::Grid(gamma) => {
                let nr = gamma[0].len();
                ((self.nt * nr) as f64, gamma.iter().flatten().sum::<f64>())
            }
            _ => (self.nt as f64, (0..self.nt).map(|k| self.acf(k, 0).re).sum::<f64>()),
        };
        if total <= 0.0 {
            return Err(Error::DegenerateProfile("profile carries no power".into()));
        }
        Ok(target / total)
    }

    /// Power-normalized spectrum `η·S_H^(k)(λ)`.
    pub fn normalized_spectrum(&self, k: usize, lambda: f64) -> Result<f64> {
        Ok(self.eta()? * self.spectrum(k, lambda))
    }
}

/// Convenience constructor for the triangular preset.
pub fn triangular_profile(nt: usize, nr: usize) -> Result<ChannelProfile> {
    ChannelProfile::triangular(nt, nr)
}

/// Haar-distributed `n × n` unitary matrix: QR of a complex Gaussian matrix
/// with the phases of `R`'s diagonal moved into `Q`.
pub fn random_unitary(n: usize, seed: u64) -> Result<CMat> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_unitary_with(n, &mut rng)
}

pub fn random_unitary_with<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<CMat> {
    if n == 0 {
        return invalid("unitary dimension must be positive");
    }
    let z = CMat::from_fn(n, n, |_, _| complex_gaussian(rng));
    let qr = z.qr();
    let r = qr.r();
    let mut q = qr.q();
    for c in 0..n {
        let d = r[(c, c)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for row in 0..n {
            q[(row, c)] *= phase;
        }
    }
    Ok(q)
}

/// Fading covariance `C_h` of `vec(H)` in block form.
///
/// `blocks[m] = η·Ut·C_H(m)·Utᴴ` for `m = 0..Nr`; block `(p, q)` of the
/// assembled matrix is `blocks[p−q]` below the diagonal and its adjoint above.
#[derive(Debug, Clone)]
pub struct FadingCovariance {
    pub blocks: Vec<CMat>,
    pub eta: f64,
    pub nr: usize,
}

impl FadingCovariance {
    pub fn nt(&self) -> usize {
        self.blocks[0].nrows()
    }

    /// Block at lag `n`, using `C(−n) = C(n)ᴴ`.
    pub fn lag(&self, n: i64) -> CMat {
        if n >= 0 {
            self.blocks[n as usize].clone()
        } else {
            self.blocks[(-n) as usize].adjoint()
        }
    }

    /// Dense `nt·Nr × nt·Nr` matrix.
    pub fn assemble(&self) -> CMat {
        assemble_block_toeplitz(&self.blocks)
    }

    pub fn trace(&self) -> f64 {
        self.nr as f64 * self.blocks[0].trace().re
    }
}

/// Dense Hermitian block-Toeplitz matrix from its first block column.
pub(crate) fn assemble_block_toeplitz(blocks: &[CMat]) -> CMat {
    let b = blocks[0].nrows();
    let n = blocks.len();
    let mut out = CMat::zeros(b * n, b * n);
    for p in 0..n {
        for q in 0..n {
            let block = if p >= q { blocks[p - q].clone() } else { blocks[q - p].adjoint() };
            out.view_mut((p * b, q * b), (b, b)).copy_from(&block);
        }
    }
    out
}

/// Builds the normalized fading covariance for an array of `nr` antennas.
pub fn assemble_fading_covariance(profile: &ChannelProfile, nr: usize) -> Result<FadingCovariance> {
    if nr == 0 {
        return invalid("nr must be positive");
    }
    if let Some(len) = profile.grid_len() {
        if len != nr {
            return invalid(format!("grid profile has {len} frequency samples but nr = {nr}"));
        }
    }
    let eta = profile.eta()?;
    let nt = profile.nt();
    let ut = profile.ut();
    let blocks = (0..nr)
        .map(|m| {
            let diag = CMat::from_fn(nt, nt, |r, c| {
                if r == c {
                    profile.acf(r, m as i64) * eta
                } else {
                    Complex64::new(0.0, 0.0)
                }
            });
            ut * diag * ut.adjoint()
        })
        .collect();
    Ok(FadingCovariance { blocks, eta, nr })
}

#[derive(Debug, Clone)]
enum StreamShaping {
    /// `√(η·γ_{k,l})` for the literal `Ut·H̊·F_Nr` construction.
    Spectral(Vec<Vec<f64>>),
    /// Real square-root factor of the `Nr × Nr` Toeplitz matrix `η·c_k(p−q)`.
    Toeplitz(Vec<DMatrix<f64>>),
}

/// Draws channel realizations with a fixed profile and array size.
///
/// Grid profiles are sampled literally as `Ut·H̊·F_Nr` with independent
/// `[H̊]_{k,l} ~ CN(0, η·γ_{k,l})`, whose stream autocorrelation is the
/// circular one of the grid. Autocorrelation-specified profiles are sampled
/// by shaping each stream `[H̊·F_Nr]_{k,:}` with a square root of its exact
/// Toeplitz covariance, so draws match [`assemble_fading_covariance`].
#[derive(Clone)]
pub struct ChannelSampler {
    nt: usize,
    nr: usize,
    ut: CMat,
    shaping: StreamShaping,
    ifft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for ChannelSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChannelSampler").field("nt", &self.nt).field("nr", &self.nr).finish()
    }
}

impl ChannelSampler {
    pub fn new(profile: &ChannelProfile, nr: usize, eta: f64) -> Result<Self> {
        if nr == 0 {
            return invalid("nr must be positive");
        }
        if !(eta.is_finite() && eta >= 0.0) {
            return invalid(format!("eta must be finite and nonnegative, got {eta}"));
        }
        let nt = profile.nt();
        let shaping = match profile.statistics() {
            FadingStatistics::Grid(gamma) => {
                if gamma[0].len() != nr {
                    return invalid(format!(
                        "grid profile has {} frequency samples but nr = {nr}",
                        gamma[0].len()
                    ));
                }
                StreamShaping::Spectral(
                    gamma.iter().map(|g| g.iter().map(|v| (eta * v).sqrt()).collect()).collect(),
                )
            }
            _ => StreamShaping::Toeplitz(
                (0..nt)
                    .map(|k| {
                        let t = DMatrix::from_fn(nr, nr, |p, q| eta * profile.acf(k, p as i64 - q as i64).re);
                        let eig = t.symmetric_eigen();
                        let mut factor = eig.eigenvectors;
                        for (c, &v) in eig.eigenvalues.iter().enumerate() {
                            let s = v.max(0.0).sqrt();
                            factor.column_mut(c).scale_mut(s);
                        }
                        factor
                    })
                    .collect(),
            ),
        };
        let ifft = FftPlanner::new().plan_fft_inverse(nr);
        Ok(ChannelSampler { nt, nr, ut: profile.ut().clone(), shaping, ifft })
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn nr(&self) -> usize {
        self.nr
    }

    /// One `nt × Nr` realization.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CMat {
        let (nt, nr) = (self.nt, self.nr);
        let mut streams = CMat::zeros(nt, nr);
        match &self.shaping {
            StreamShaping::Spectral(amplitudes) => {
                let scale = 1.0 / (nr as f64).sqrt();
                let mut row: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); nr];
                for (k, amp) in amplitudes.iter().enumerate() {
                    for (slot, &a) in row.iter_mut().zip(amp) {
                        *slot = complex_gaussian(rng) * a;
                    }
                    // Σ_l H̊[k,l]·e^{j2πlc/Nr}
                    self.ifft.process(&mut row);
                    for (c, v) in row.iter().enumerate() {
                        streams[(k, c)] = v * scale;
                    }
                }
            }
            StreamShaping::Toeplitz(factors) => {
                let mut white = vec![Complex64::new(0.0, 0.0); nr];
                for (k, a) in factors.iter().enumerate() {
                    for w in white.iter_mut() {
                        *w = complex_gaussian(rng);
                    }
                    for p in 0..nr {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for (q, w) in white.iter().enumerate() {
                            acc += w * a[(p, q)];
                        }
                        streams[(k, p)] = acc;
                    }
                }
            }
        }
        &self.ut * streams
    }
}

/// Single channel draw; builds a throwaway [`ChannelSampler`].
pub fn sample_channel<R: Rng + ?Sized>(
    profile: &ChannelProfile,
    nr: usize,
    eta: f64,
    rng: &mut R,
) -> Result<CMat> {
    Ok(ChannelSampler::new(profile, nr, eta)?.sample(rng))
}
