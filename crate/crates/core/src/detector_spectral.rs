//! Low-complexity spectral approximation of the ML detector.
//!
//! The received block is a cyclostationary sequence of period `K`. Its FFT
//! over `K·Nr` points, regrouped into `Nr` stacks of `K` bins spaced `Nr`
//! apart, gives the cycle-level (CL) coefficients `dŷ(l/(K·Nr))`. Each stack
//! is scored against the inverse of a `K × K` cyclic spectral matrix (CSM)
//!
//! ```text
//! Ŝ_j(l/(K·Nr)) = F_Kᴴ·Θᴴ(l/(K·Nr))·Ĉ_j(l/Nr)·Θ(l/(K·Nr))·F_K
//! ```
//!
//! where `Ĉ_j` is the rotational spectral matrix (RSM), an `Nr`-point FFT of
//! the covariance blocks `Σ_j(n)`. With the triangular (Blackman-Tukey) lag
//! window, `Ŝ_j` is exactly `K·Nr` times the covariance of the CL stack and is
//! therefore positive semidefinite.
//!
//! Precomputation costs `O(M·K²·Nr·(ln Nr + K))`; scoring one observation
//! costs one `K·Nr`-point FFT plus `O(M·K²·Nr)`.

use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::channel::{ChannelProfile, FadingCovariance};
use crate::codebook::{Codeword, CodewordAlphabet};
use crate::detector_direct::{argmin, build_block_covariance, BlockCovariance};
use crate::error::{invalid, Error, Result};
use crate::linalg::{cis, dft_matrix, hermitian_eigen, phase_ramp, CMat};
use crate::observation::ReceivedBlock;

/// Relative eigenvalue floor applied before inverting a CSM.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Lag window applied to the covariance blocks before the RSM FFT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    Rectangular,
    /// Triangular weights `1 − n/Nr`.
    #[default]
    BlackmanTukey,
}

impl Window {
    fn weight(self, n: usize, nr: usize) -> f64 {
        match self {
            Window::Rectangular => 1.0,
            Window::BlackmanTukey => 1.0 - n as f64 / nr as f64,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Window::Rectangular => "rect",
            Window::BlackmanTukey => "bt",
        }
    }
}

impl std::str::FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rect" | "rectangular" => Ok(Window::Rectangular),
            "bt" | "blackman-tukey" => Ok(Window::BlackmanTukey),
            other => invalid(format!("unknown window '{other}' (expected rect or bt)")),
        }
    }
}

/// CL coefficient stacks: entry `k` of stack `l` is bin `l + k·Nr` of the
/// `K·Nr`-point FFT, divided by `K·Nr`.
#[derive(Debug, Clone)]
pub struct ClCoefficients {
    k: usize,
    nr: usize,
    data: Vec<Complex64>,
}

impl ClCoefficients {
    pub fn block_len(&self) -> usize {
        self.k
    }

    pub fn nr(&self) -> usize {
        self.nr
    }

    /// The length-`K` stack `dŷ(l/(K·Nr))`.
    pub fn stack(&self, l: usize) -> &[Complex64] {
        &self.data[l * self.k..(l + 1) * self.k]
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Reusable FFT plan for [`cl_coefficients`].
#[derive(Clone)]
pub struct ClTransform {
    k: usize,
    nr: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for ClTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClTransform").field("k", &self.k).field("nr", &self.nr).finish()
    }
}

impl ClTransform {
    pub fn new(k: usize, nr: usize) -> Result<Self> {
        if k == 0 || nr == 0 {
            return invalid("K and Nr must be positive");
        }
        Ok(ClTransform { k, nr, fft: FftPlanner::new().plan_fft_forward(k * nr) })
    }

    pub fn transform(&self, y: &ReceivedBlock) -> Result<ClCoefficients> {
        let n = self.k * self.nr;
        if y.len() != n {
            return invalid(format!("observation length {} does not match K*Nr = {n}", y.len()));
        }
        let mut spectrum = y.samples().to_vec();
        self.fft.process(&mut spectrum);
        let scale = 1.0 / n as f64;
        let mut data = Vec::with_capacity(n);
        for l in 0..self.nr {
            for k in 0..self.k {
                data.push(spectrum[l + k * self.nr] * scale);
            }
        }
        Ok(ClCoefficients { k: self.k, nr: self.nr, data })
    }
}

pub fn cl_coefficients(y: &ReceivedBlock, k: usize, nr: usize) -> Result<ClCoefficients> {
    ClTransform::new(k, nr)?.transform(y)
}

/// RSM estimate at `λ = l/Nr` by direct summation over the lags:
/// `A(l) + A(l)ᴴ − Σ(0)` with `A(l) = Σ_n w(n)·Σ(n)·e^{−j2πnl/Nr}`.
pub fn rsm_estimate(cov: &BlockCovariance, l: usize, window: Window) -> Result<CMat> {
    let nr = cov.nr;
    if l >= nr {
        return invalid(format!("frequency index {l} out of range 0..{nr}"));
    }
    let k = cov.block_len();
    let mut a = CMat::zeros(k, k);
    for (n, block) in cov.blocks.iter().enumerate() {
        let phase = cis(-(((n * l) % nr) as f64) / nr as f64) * window.weight(n, nr);
        a += block * phase;
    }
    Ok(&a + a.adjoint() - &cov.blocks[0])
}

/// RSM estimates for every `l = 0..Nr` via `K²` FFTs of length `Nr`.
pub fn rsm_estimates(cov: &BlockCovariance, window: Window) -> Vec<CMat> {
    let nr = cov.nr;
    let k = cov.block_len();
    let fft = FftPlanner::new().plan_fft_forward(nr);
    let mut out = vec![CMat::zeros(k, k); nr];
    let mut seq = vec![Complex64::new(0.0, 0.0); nr];
    for r in 0..k {
        for c in 0..k {
            for (n, slot) in seq.iter_mut().enumerate() {
                *slot = cov.blocks[n][(r, c)] * window.weight(n, nr);
            }
            fft.process(&mut seq);
            for (l, v) in seq.iter().enumerate() {
                out[l][(r, c)] += v;
                out[l][(c, r)] += v.conj();
            }
        }
    }
    for m in out.iter_mut() {
        *m -= &cov.blocks[0];
    }
    out
}

/// `F_Kᴴ·Θᴴ(σ)·R·Θ(σ)·F_K`
pub fn csm_from_rsm(rsm: &CMat, sigma: f64) -> CMat {
    let k = rsm.nrows();
    let theta = phase_ramp(sigma, k);
    let rotated = CMat::from_fn(k, k, |r, c| theta[r].conj() * rsm[(r, c)] * theta[c]);
    let f = dft_matrix(k);
    f.adjoint() * rotated * f
}

/// Asymptotic CSM of the received sequence under codeword `x`:
/// `F_Kᴴ·Θᴴ(σ)·X·Ut·(η·S_H(Kσ))·Utᴴ·Xᴴ·Θ(σ)·F_K + σ²_Z·I_K`.
pub fn csm_analytic(x: &Codeword, profile: &ChannelProfile, eta: f64, noise_power: f64, sigma: f64) -> CMat {
    let nt = profile.nt();
    let lambda = x.block_len() as f64 * sigma;
    let spectrum = CMat::from_fn(nt, nt, |r, c| {
        if r == c {
            Complex64::new(eta * profile.spectrum(r, lambda), 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let xu = x.matrix() * profile.ut();
    let k = x.block_len();
    let core = &xu * spectrum * xu.adjoint() + CMat::identity(k, k).scale(noise_power);
    csm_from_rsm(&core, sigma)
}

#[derive(Debug, Clone)]
struct CodewordSpectra {
    window: Window,
    csm: Vec<CMat>,
    /// Row-major `K × K` inverses, one after another for `l = 0..Nr`.
    inverse: Vec<Complex64>,
    log_det: f64,
}

/// Cached inverse CSMs and spectral log-determinants for every codeword.
#[derive(Debug, Clone)]
pub struct SpectralDetectorState {
    k: usize,
    nr: usize,
    window: Window,
    codewords: Vec<CodewordSpectra>,
    warnings: Vec<String>,
    transform: ClTransform,
}

impl SpectralDetectorState {
    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    pub fn block_len(&self) -> usize {
        self.k
    }

    pub fn nr(&self) -> usize {
        self.nr
    }

    /// Window requested at precompute time.
    pub fn window(&self) -> Window {
        self.window
    }

    /// Window actually used for codeword `j` (differs after a fallback).
    pub fn window_used(&self, j: usize) -> Window {
        self.codewords[j].window
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// `ℓ̂_j = Σ_l ln|Ŝ_j(l/(K·Nr))| / (K·Nr)`
    pub fn log_det(&self, j: usize) -> f64 {
        self.codewords[j].log_det
    }

    /// `Ŝ_j(l/(K·Nr))` before eigenvalue flooring.
    pub fn csm(&self, j: usize, l: usize) -> &CMat {
        &self.codewords[j].csm[l]
    }

    pub fn inverse_csm(&self, j: usize, l: usize) -> CMat {
        let kk = self.k * self.k;
        CMat::from_row_slice(self.k, self.k, &self.codewords[j].inverse[l * kk..(l + 1) * kk])
    }

    pub fn cl_transform(&self) -> &ClTransform {
        &self.transform
    }

    /// `Q̂_j = Σ_l dŷᴴ(l)·Ŝ_j⁻¹(l)·dŷ(l)`
    pub fn quadratic(&self, cl: &ClCoefficients, j: usize) -> Result<f64> {
        if cl.k != self.k || cl.nr != self.nr {
            return invalid(format!(
                "CL coefficients for K={}, Nr={} do not match detector K={}, Nr={}",
                cl.k, cl.nr, self.k, self.nr
            ));
        }
        let k = self.k;
        let inverse = &self.codewords[j].inverse;
        let mut total = 0.0;
        for l in 0..self.nr {
            let d = cl.stack(l);
            let a = &inverse[l * k * k..(l + 1) * k * k];
            for r in 0..k {
                let row = &a[r * k..(r + 1) * k];
                let mut acc = Complex64::new(0.0, 0.0);
                for (ac, dc) in row.iter().zip(d) {
                    acc += ac * dc;
                }
                total += (d[r].conj() * acc).re;
            }
        }
        Ok(total)
    }

    /// Spectral metrics for every codeword.
    pub fn metrics(&self, cl: &ClCoefficients) -> Result<Vec<f64>> {
        (0..self.len()).map(|j| Ok(self.quadratic(cl, j)? + self.log_det(j))).collect()
    }

    /// Plain-text dump of every `Ŝ_j(l)`: one `j l row col re im` line per entry.
    pub fn write_csm_dump<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# codeword l row col re im")?;
        for (j, cw) in self.codewords.iter().enumerate() {
            for (l, s) in cw.csm.iter().enumerate() {
                for r in 0..self.k {
                    for c in 0..self.k {
                        let v = s[(r, c)];
                        writeln!(out, "{j} {l} {r} {c} {:.17e} {:.17e}", v.re, v.im)?;
                    }
                }
            }
        }
        Ok(())
    }
}

enum Inversion {
    Ok { inverse: CMat, log_det: f64 },
    Singular { min: f64, max: f64 },
}

/// Hermitian inverse and log-determinant through the eigen-decomposition.
/// With `clamp`, eigenvalues below `EIGEN_FLOOR·max` are raised to that floor.
fn invert_csm(s: &CMat, clamp: bool) -> Inversion {
    let (values, vectors) = hermitian_eigen(s);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let floor = EIGEN_FLOOR * max;
    if max.is_nan() || max <= 0.0 || (!clamp && min <= floor) {
        return Inversion::Singular { min, max };
    }
    let mut log_det = 0.0;
    let mut scaled = vectors.clone();
    for (c, &v) in values.iter().enumerate() {
        let v = v.max(floor);
        log_det += v.ln();
        scaled.column_mut(c).scale_mut(1.0 / v);
    }
    Inversion::Ok { inverse: scaled * vectors.adjoint(), log_det }
}

fn codeword_spectra(cov: &BlockCovariance, window: Window) -> std::result::Result<CodewordSpectra, (usize, f64, f64)> {
    let (k, nr) = (cov.block_len(), cov.nr);
    let n = (k * nr) as f64;
    let rsm = rsm_estimates(cov, window);
    let mut csm = Vec::with_capacity(nr);
    let mut inverse = Vec::with_capacity(nr * k * k);
    let mut log_det = 0.0;
    for (l, r) in rsm.iter().enumerate() {
        let s = csm_from_rsm(r, l as f64 / n);
        match invert_csm(&s, window == Window::BlackmanTukey) {
            Inversion::Ok { inverse: inv, log_det: ld } => {
                log_det += ld / n;
                for row in 0..k {
                    for col in 0..k {
                        inverse.push(inv[(row, col)]);
                    }
                }
            }
            Inversion::Singular { min, max } => return Err((l, min, max)),
        }
        csm.push(s);
    }
    Ok(CodewordSpectra { window, csm, inverse, log_det })
}

/// Builds `Ŝ_j⁻¹(l/(K·Nr))` and `ℓ̂_j` for every codeword.
///
/// With the rectangular window a CSM may fail to be positive definite; that
/// codeword then falls back to the Blackman-Tukey window and a warning is
/// recorded in the state.
pub fn precompute_spectral(
    alphabet: &CodewordAlphabet,
    fading: &FadingCovariance,
    noise_power: f64,
    nr: usize,
    window: Window,
) -> Result<SpectralDetectorState> {
    if fading.nr != nr {
        return invalid(format!("fading covariance built for Nr = {} but Nr = {nr} requested", fading.nr));
    }
    let k = alphabet.block_len();
    let mut warnings = Vec::new();
    let mut codewords = Vec::with_capacity(alphabet.len());
    for (j, x) in alphabet.codewords().iter().enumerate() {
        let cov = build_block_covariance(x, fading, noise_power)?;
        let spectra = match codeword_spectra(&cov, window) {
            Ok(s) => s,
            Err((l, min, max)) if window == Window::Rectangular => {
                warnings.push(format!(
                    "codeword {j}: rectangular-window CSM at l={l} not positive definite (eigenvalues [{min:.3e}, {max:.3e}]); using Blackman-Tukey window"
                ));
                codeword_spectra(&cov, Window::BlackmanTukey).map_err(|(l, min, max)| {
                    Error::Numerical(format!("codeword {j}: CSM at l={l} has no positive spectrum (eigenvalues [{min:.3e}, {max:.3e}])"))
                })?
            }
            Err((l, min, max)) => {
                return Err(Error::Numerical(format!(
                    "codeword {j}: CSM at l={l} has no positive spectrum (eigenvalues [{min:.3e}, {max:.3e}])"
                )))
            }
        };
        codewords.push(spectra);
    }
    Ok(SpectralDetectorState { k, nr, window, codewords, warnings, transform: ClTransform::new(k, nr)? })
}

/// `Q̂_j + ℓ̂_j`
pub fn ml_metric_spectral(cl: &ClCoefficients, state: &SpectralDetectorState, j: usize) -> Result<f64> {
    if j >= state.len() {
        return invalid(format!("codeword index {j} out of range"));
    }
    Ok(state.quadratic(cl, j)? + state.log_det(j))
}

/// Argmin of the spectral metrics; ties go to the lowest index.
pub fn detect_spectral(y: &ReceivedBlock, state: &SpectralDetectorState) -> Result<usize> {
    if state.is_empty() {
        return invalid("empty alphabet");
    }
    let cl = state.transform.transform(y)?;
    Ok(argmin(&state.metrics(&cl)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{assemble_fading_covariance, triangular_profile, ChannelProfile};
    use crate::codebook::orthogonal_pair;
    use crate::linalg::{complex_gaussian, frobenius, hermitian_defect, hermitian_eigenvalues, log_det_hpd};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn noise_only(k: usize, nt: usize, nr: usize, noise: f64) -> (CodewordAlphabet, FadingCovariance, f64) {
        let fading = FadingCovariance { blocks: (0..nr).map(|_| CMat::zeros(nt, nt)).collect(), eta: 1.0, nr };
        let alphabet = CodewordAlphabet::from_pair(orthogonal_pair(k, nt, 1).unwrap()).unwrap();
        (alphabet, fading, noise)
    }

    fn random_hermitian(k: usize, seed: u64) -> CMat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = CMat::from_fn(k, k, |_, _| complex_gaussian(&mut rng));
        &a + a.adjoint()
    }

    #[test]
    fn dc_and_single_tone() {
        let (k, nr) = (3usize, 4usize);
        let n = k * nr;
        let c = Complex64::new(0.3, -1.2);
        let cl = cl_coefficients(&ReceivedBlock::new(k, nr, vec![c; n]).unwrap(), k, nr).unwrap();
        for l in 0..nr {
            for (kk, v) in cl.stack(l).iter().enumerate() {
                let expected = if l == 0 && kk == 0 { c } else { Complex64::new(0.0, 0.0) };
                assert!((v - expected).norm() < 1e-12);
            }
        }
        let (l0, k0) = (2usize, 1usize);
        let tone: Vec<Complex64> = (0..n).map(|t| cis((t * (l0 + k0 * nr)) as f64 / n as f64)).collect();
        let cl = cl_coefficients(&ReceivedBlock::new(k, nr, tone).unwrap(), k, nr).unwrap();
        for l in 0..nr {
            for (kk, v) in cl.stack(l).iter().enumerate() {
                let expected = if l == l0 && kk == k0 { 1.0 } else { 0.0 };
                assert!((v - Complex64::new(expected, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn cl_rejects_wrong_length() {
        assert!(cl_coefficients(&ReceivedBlock::zeros(2, 4), 4, 4).is_err());
    }

    #[test]
    fn noise_only_rsm_is_scaled_identity() {
        let (alphabet, fading, noise) = noise_only(4, 1, 8, 0.4);
        let cov = build_block_covariance(&alphabet[0], &fading, noise).unwrap();
        for window in [Window::Rectangular, Window::BlackmanTukey] {
            for l in 0..8 {
                let r = rsm_estimate(&cov, l, window).unwrap();
                assert!(frobenius(&(r - CMat::identity(4, 4).scale(noise))) < 1e-14);
            }
        }
    }

    #[test]
    fn rsm_fft_path_matches_double_sum() {
        let nr = 8;
        let profile = triangular_profile(1, nr).unwrap();
        let fading = assemble_fading_covariance(&profile, nr).unwrap();
        let x = orthogonal_pair(4, 1, 2).unwrap().0;
        let cov = build_block_covariance(&x, &fading, 0.5).unwrap();
        let fast = rsm_estimates(&cov, Window::Rectangular);
        for (l, f) in fast.iter().enumerate() {
            let mut oracle = CMat::zeros(4, 4);
            for n in -(nr as i64 - 1)..nr as i64 {
                oracle += cov.lag(n) * cis(-(n as f64) * l as f64 / nr as f64);
            }
            let single = rsm_estimate(&cov, l, Window::Rectangular).unwrap();
            assert!(frobenius(&(&single - &oracle)) < 1e-10);
            assert!(frobenius(&(f - &oracle)) < 1e-10);
            assert!(hermitian_defect(&single) < 1e-12);
        }
        for (l, f) in rsm_estimates(&cov, Window::BlackmanTukey).iter().enumerate() {
            let single = rsm_estimate(&cov, l, Window::BlackmanTukey).unwrap();
            assert!(frobenius(&(&single - f)) < 1e-10);
        }
        assert!(rsm_estimate(&cov, nr, Window::Rectangular).is_err());
    }

    #[test]
    fn csm_congruence_properties() {
        let s = csm_from_rsm(&CMat::identity(4, 4).scale(2.5), 0.07);
        assert!(frobenius(&(s - CMat::identity(4, 4).scale(2.5))) < 1e-12);

        let r = random_hermitian(4, 3);
        let f = dft_matrix(4);
        assert!(frobenius(&(csm_from_rsm(&r, 0.0) - f.adjoint() * &r * &f)) < 1e-12);

        let s = csm_from_rsm(&r, 0.11);
        let (a, b) = (hermitian_eigenvalues(&r), hermitian_eigenvalues(&s));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn analytic_csm_noise_floor_and_rank() {
        let profile = triangular_profile(2, 8).unwrap().with_random_ut(4).unwrap();
        let zero = ChannelProfile::from_lags(vec![vec![0.0], vec![0.0]]).unwrap();
        let x = orthogonal_pair(6, 2, 5).unwrap().0;
        let s = csm_analytic(&x, &zero, 1.0, 0.3, 0.05);
        assert!(frobenius(&(s - CMat::identity(6, 6).scale(0.3))) < 1e-12);

        for sigma in [0.0, 0.03, 0.1, 0.16] {
            let g = csm_analytic(&x, &profile, profile.eta().unwrap(), 0.3, sigma) - CMat::identity(6, 6).scale(0.3);
            let mut sv: Vec<f64> = g.singular_values().iter().copied().collect();
            sv.sort_by(|a, b| b.total_cmp(a));
            assert!(sv[2..].iter().all(|v| *v <= 1e-9 * sv[0].max(1e-300)), "{sv:?}");
        }
    }

    #[test]
    fn noise_only_state() {
        let (alphabet, fading, noise) = noise_only(4, 1, 8, 0.6);
        let state = precompute_spectral(&alphabet, &fading, noise, 8, Window::BlackmanTukey).unwrap();
        for j in 0..2 {
            assert!((state.log_det(j) - noise.ln()).abs() < 1e-12);
            for l in 0..8 {
                assert!(frobenius(&(state.inverse_csm(j, l) - CMat::identity(4, 4).scale(1.0 / noise))) < 1e-12);
            }
        }
        // Identical statistics: the tie goes to index 0.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = ReceivedBlock::new(4, 8, (0..32).map(|_| complex_gaussian(&mut rng)).collect()).unwrap();
        assert_eq!(detect_spectral(&y, &state).unwrap(), 0);
        let cl = state.cl_transform().transform(&ReceivedBlock::zeros(4, 8)).unwrap();
        assert_eq!(ml_metric_spectral(&cl, &state, 1).unwrap(), state.log_det(1));
    }

    #[test]
    fn quadratic_matches_dense_stack_evaluation() {
        let nr = 8;
        let profile = triangular_profile(1, nr).unwrap();
        let fading = assemble_fading_covariance(&profile, nr).unwrap();
        let alphabet = CodewordAlphabet::from_pair(orthogonal_pair(4, 1, 6).unwrap()).unwrap();
        let state = precompute_spectral(&alphabet, &fading, 0.5, nr, Window::BlackmanTukey).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let y = ReceivedBlock::new(4, nr, (0..32).map(|_| complex_gaussian(&mut rng)).collect()).unwrap();
        let cl = cl_coefficients(&y, 4, nr).unwrap();
        for j in 0..2 {
            let mut oracle = 0.0;
            let mut ld = 0.0;
            for l in 0..nr {
                let d = crate::linalg::CVec::from_column_slice(cl.stack(l));
                let s = state.csm(j, l);
                oracle += (d.adjoint() * s.clone().try_inverse().unwrap() * &d)[(0, 0)].re;
                ld += log_det_hpd(s).unwrap() / 32.0;
            }
            assert!((state.quadratic(&cl, j).unwrap() - oracle).abs() < 1e-9 * oracle);
            assert!((state.log_det(j) - ld).abs() < 1e-9 * ld.abs().max(1.0));
        }
    }

    #[test]
    fn rectangular_window_falls_back_when_indefinite() {
        // Strongly correlated lags make the truncated (rectangular) spectrum
        // dip below zero once the noise floor is tiny.
        let nr = 8;
        let profile = ChannelProfile::from_lags(vec![vec![1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3]]).unwrap();
        let fading = assemble_fading_covariance(&profile, nr).unwrap();
        let alphabet = CodewordAlphabet::from_pair(orthogonal_pair(2, 1, 0).unwrap()).unwrap();
        let state = precompute_spectral(&alphabet, &fading, 1e-9, nr, Window::Rectangular).unwrap();
        assert!(!state.warnings().is_empty());
        assert_eq!(state.window_used(0), Window::BlackmanTukey);
        assert_eq!(state.window(), Window::Rectangular);
    }

    #[test]
    fn window_parsing() {
        assert_eq!("bt".parse::<Window>().unwrap(), Window::BlackmanTukey);
        assert_eq!("rect".parse::<Window>().unwrap(), Window::Rectangular);
        assert!("hann".parse::<Window>().is_err());
    }

    #[test]
    fn csm_dump_has_one_line_per_entry() {
        let (alphabet, fading, noise) = noise_only(2, 1, 4, 1.0);
        let state = precompute_spectral(&alphabet, &fading, noise, 4, Window::BlackmanTukey).unwrap();
        let mut buf = Vec::new();
        state.write_csm_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 4 * 2 * 2);
    }
}
