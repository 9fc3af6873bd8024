//! Pairwise divergences between codeword hypotheses.
//!
//! The finite-size KLD is evaluated on the assembled block-Toeplitz
//! covariances. Its large-array limit is an integral of the Gaussian KLD
//! between the CSMs over one cycle `σ ∈ [0, 1/K)`. When the codewords are
//! aligned with the channel basis (`Ψ = Ut`, shared `Φ`) the CSMs share
//! eigenvectors and the limit splits into per-stream Itakura-Saito
//! divergences.

use std::io::Write;

use crate::channel::{ChannelProfile, FadingCovariance};
use crate::codebook::{Codeword, CodewordAlphabet};
use crate::detector_direct::{build_block_covariance, BlockCovariance};
use crate::detector_spectral::csm_analytic;
use crate::error::{invalid, Error, Result};
use crate::linalg::{cholesky_lower, frobenius, hermitian_eigen, orthogonal_complement, unitarity_defect, CMat};

pub const DEFAULT_QUAD_POINTS: usize = 512;

/// Whether the high-SNR divergence between two hypotheses stays finite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Singularity {
    Bounded,
    Divergent,
}

/// Divergent iff the active ranks differ.
pub fn detect_singularity(n_i: usize, n_j: usize) -> Singularity {
    if n_i == n_j {
        Singularity::Bounded
    } else {
        Singularity::Divergent
    }
}

/// Nodes and weights on `[0, upper)`: midpoint sums with `Q` and `2Q` cells
/// combined as `(4·M_2Q − M_Q)/3`, which cancels the `h²` error term left
/// by kinks at cell edges.
fn quadrature_nodes(quad_points: usize, upper: f64) -> Result<Vec<(f64, f64)>> {
    if quad_points == 0 {
        return invalid("quadrature needs at least one node");
    }
    let h = upper / quad_points as f64;
    let coarse = (0..quad_points).map(|q| ((q as f64 + 0.5) * h, -h / 3.0));
    let fine = (0..2 * quad_points).map(|q| ((q as f64 + 0.5) * h / 2.0, 2.0 * h / 3.0));
    Ok(coarse.chain(fine).collect())
}

/// `(1/(K·Nr))·(tr(Σ_j⁻¹Σ_i) − K·Nr + ln|Σ_j| − ln|Σ_i|)`
pub fn kld_direct(sigma_i: &BlockCovariance, sigma_j: &BlockCovariance) -> Result<f64> {
    if sigma_i.block_len() != sigma_j.block_len() || sigma_i.nr != sigma_j.nr {
        return invalid(format!(
            "covariance shapes differ: K={}, Nr={} vs K={}, Nr={}",
            sigma_i.block_len(),
            sigma_i.nr,
            sigma_j.block_len(),
            sigma_j.nr
        ));
    }
    let n = sigma_i.dim();
    let li = cholesky_lower(&sigma_i.assemble())?;
    let lj = cholesky_lower(&sigma_j.assemble())?;
    // tr(Σ_j⁻¹Σ_i) = ‖L_j⁻¹·L_i‖²_F
    let whitened = lj
        .solve_lower_triangular(&li)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let log_det = |l: &CMat| 2.0 * l.diagonal().iter().map(|d| d.re.ln()).sum::<f64>();
    let trace = frobenius(&whitened).powi(2);
    Ok((trace - n as f64 + log_det(&lj) - log_det(&li)) / n as f64)
}

/// `tr(S_j⁻¹S_i) − K − ln|S_i| + ln|S_j|` for Hermitian positive-definite CSMs.
fn csm_kld_integrand(s_i: &CMat, s_j: &CMat, sigma: f64) -> Result<f64> {
    let (values, vectors) = hermitian_eigen(s_j);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_nan() || max <= 0.0 || values.iter().any(|v| v.is_nan() || *v <= 1e-14 * max) {
        return Err(Error::Numerical(format!("CSM of the reference hypothesis is singular at sigma = {sigma}")));
    }
    let rotated = vectors.adjoint() * s_i * &vectors;
    let trace: f64 = values.iter().enumerate().map(|(c, v)| rotated[(c, c)].re / v).sum();
    let (values_i, _) = hermitian_eigen(s_i);
    if values_i.iter().any(|v| *v <= 0.0) {
        return Err(Error::Numerical(format!("CSM of the tested hypothesis is singular at sigma = {sigma}")));
    }
    let log_ratio: f64 = values_i.iter().map(|v| v.ln()).sum::<f64>() - values.iter().map(|v| v.ln()).sum::<f64>();
    Ok(trace - s_i.nrows() as f64 - log_ratio)
}

/// Integral over `σ ∈ [0, 1/K)` of the Gaussian KLD between
/// the CSMs `csm_i(σ)` and `csm_j(σ)`.
pub fn kld_spectral<F, G>(csm_i: F, csm_j: G, quad_points: usize) -> Result<f64>
where
    F: Fn(f64) -> CMat,
    G: Fn(f64) -> CMat,
{
    let k = csm_i(0.0).nrows();
    if k == 0 || csm_j(0.0).nrows() != k {
        return invalid("CSM functions must return square matrices of the same size");
    }
    let mut total = 0.0;
    for (sigma, h) in quadrature_nodes(quad_points, 1.0 / k as f64)? {
        let (s_i, s_j) = (csm_i(sigma), csm_j(sigma));
        total += h * csm_kld_integrand(&s_i, &s_j, sigma)?;
    }
    Ok(total)
}

/// `kld_spectral` on the asymptotic CSMs of two codewords.
pub fn kld_spectral_codewords(
    x_i: &Codeword,
    x_j: &Codeword,
    profile: &ChannelProfile,
    noise_power: f64,
    quad_points: usize,
) -> Result<f64> {
    if noise_power <= 0.0 {
        return invalid("noise power must be positive");
    }
    let eta = profile.eta()?;
    kld_spectral(
        |s| csm_analytic(x_i, profile, eta, noise_power, s),
        |s| csm_analytic(x_j, profile, eta, noise_power, s),
        quad_points,
    )
}

fn check_loading(w_i: &[f64], w_j: &[f64], nt: usize) -> Result<()> {
    if w_i.len() != nt || w_j.len() != nt {
        return invalid(format!("power loadings must have length nt = {nt}, got {} and {}", w_i.len(), w_j.len()));
    }
    if let Some(bad) = w_i.iter().chain(w_j).find(|v| !(v.is_finite() && **v >= 0.0)) {
        return invalid(format!("power loading must be nonnegative, got {bad}"));
    }
    Ok(())
}

/// Per-stream ISD `∫₀^{1/K} (r − 1 − ln r) dσ` with
/// `r = (w_i·ηS_k(Kσ) + σ²_Z)/(w_j·ηS_k(Kσ) + σ²_Z)`.
pub fn isd_subbands(
    w_i: &[f64],
    w_j: &[f64],
    profile: &ChannelProfile,
    noise_power: f64,
    k: usize,
    quad_points: usize,
) -> Result<Vec<f64>> {
    check_loading(w_i, w_j, profile.nt())?;
    if noise_power <= 0.0 || k == 0 {
        return invalid("noise power and K must be positive");
    }
    let eta = profile.eta()?;
    let nodes = quadrature_nodes(quad_points, 1.0 / k as f64)?;
    Ok((0..profile.nt())
        .map(|band| {
            nodes
                .iter()
                .map(|&(sigma, h)| {
                    let s = eta * profile.spectrum(band, k as f64 * sigma);
                    let r = (w_i[band] * s + noise_power) / (w_j[band] * s + noise_power);
                    h * (r - 1.0 - r.ln())
                })
                .sum()
        })
        .collect())
}

/// High-SNR limit `(1/K)·Σ_p (w_i/w_j − 1 − ln(w_i/w_j))` over the active streams.
pub fn kld_high_snr_equal_rank(w_i: &[f64], w_j: &[f64], k: usize) -> Result<f64> {
    if w_i.len() != w_j.len() {
        return invalid("power loadings must have equal length");
    }
    if k == 0 {
        return invalid("K must be positive");
    }
    check_loading(w_i, w_j, w_i.len())?;
    let active = |w: f64| w >= crate::codebook::INACTIVE_POWER;
    let mut total = 0.0;
    for (&a, &b) in w_i.iter().zip(w_j) {
        match (active(a), active(b)) {
            (true, true) => {
                let r = a / b;
                total += r - 1.0 - r.ln();
            }
            (false, false) => {}
            _ => return invalid("active ranks differ; the high-SNR divergence is unbounded"),
        }
    }
    Ok(total / k as f64)
}

/// Low-SNR coefficient `Σ_p (w_i − w_j)²·½∫₀^{1/K} (ηS_p(Kσ))² dσ`; the KLD
/// behaves as this value divided by `σ⁴_Z`.
pub fn kld_low_snr_coefficient(
    w_i: &[f64],
    w_j: &[f64],
    profile: &ChannelProfile,
    k: usize,
    quad_points: usize,
) -> Result<f64> {
    check_loading(w_i, w_j, profile.nt())?;
    if k == 0 {
        return invalid("K must be positive");
    }
    let eta = profile.eta()?;
    let nodes = quadrature_nodes(quad_points, 1.0 / k as f64)?;
    let mut total = 0.0;
    for band in 0..profile.nt() {
        let energy: f64 = nodes
            .iter()
            .map(|&(sigma, h)| h * (eta * profile.spectrum(band, k as f64 * sigma)).powi(2))
            .sum();
        total += (w_i[band] - w_j[band]).powi(2) * 0.5 * energy;
    }
    Ok(total)
}

/// KLD between two semi-unitary codewords without transmitter-side channel
/// knowledge. With `Σ(λ) = η·S_H(λ) + σ²_Z·I` and complements `U_ī`, `U_j̄`:
///
/// ```text
/// (1/K)∫₀¹ tr[Σ⁻¹·U_jᴴU_i·Σ·U_iᴴU_j] dλ + (1/K)‖U_j̄ᴴU_ī‖²_F − 1
///   + (1/K)∫₀¹ (σ²_Z·tr[U_j·Σ⁻¹·U_jᴴ·P_ī] + σ⁻²_Z·tr[U_j̄ᴴU_i·Σ·U_iᴴU_j̄]) dλ
/// ```
///
/// The last term loses precision for `σ²_Z` below about `1e−8`.
pub fn kld_no_csit(u_i: &CMat, u_j: &CMat, profile: &ChannelProfile, noise_power: f64, quad_points: usize) -> Result<f64> {
    let nt = profile.nt();
    let k = u_i.nrows();
    if u_i.shape() != u_j.shape() || u_i.ncols() != nt || nt > k {
        return invalid(format!("U_i and U_j must both be K x nt with nt = {nt}"));
    }
    for (name, u) in [("U_i", u_i), ("U_j", u_j)] {
        let defect = unitarity_defect(u);
        if defect > 1e-9 {
            return invalid(format!("{name} is not semi-unitary (defect {defect:.3e})"));
        }
    }
    if noise_power <= 0.0 {
        return invalid("noise power must be positive");
    }
    let eta = profile.eta()?;
    let ut = profile.ut();
    let ci = orthogonal_complement(u_i);
    let cj = orthogonal_complement(u_j);
    let proj_ci = &ci * ci.adjoint();
    let cross = u_j.adjoint() * u_i;
    let comp_cross = cj.adjoint() * u_i;
    let leak = u_j.adjoint() * &proj_ci * u_j;

    let mut integral = 0.0;
    for (lambda, h) in quadrature_nodes(quad_points, 1.0)? {
        let diag = CMat::from_fn(nt, nt, |r, c| {
            if r == c {
                (eta * profile.spectrum(r, lambda) + noise_power).into()
            } else {
                0.0.into()
            }
        });
        let sigma = ut * diag * ut.adjoint();
        let (values, vectors) = hermitian_eigen(&sigma);
        let mut inv = vectors.clone();
        for (c, v) in values.iter().enumerate() {
            inv.column_mut(c).scale_mut(1.0 / v);
        }
        let sigma_inv = inv * vectors.adjoint();
        let first = (&sigma_inv * &cross * &sigma * cross.adjoint()).trace().re;
        let leak_term = noise_power * (&sigma_inv * &leak).trace().re;
        let comp_term = (&comp_cross * &sigma * comp_cross.adjoint()).trace().re / noise_power;
        integral += h * (first + leak_term + comp_term);
    }
    let subspace = frobenius(&(cj.adjoint() * &ci)).powi(2);
    Ok((integral + subspace) / k as f64 - 1.0)
}

/// High-SNR behaviour recorded in a report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HighSnrLimit {
    Finite(f64),
    Divergent,
    /// No closed form: the pair is not aligned with the channel basis.
    Unavailable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceReport {
    pub i: usize,
    pub j: usize,
    pub nr: usize,
    pub noise_power: f64,
    pub kld_finite: f64,
    pub kld_spectral: f64,
    /// Per-stream ISD; present only for aligned pairs.
    pub isd_per_band: Option<Vec<f64>>,
    pub high_snr_limit: HighSnrLimit,
    /// Present only for aligned pairs.
    pub low_snr_coefficient: Option<f64>,
}

/// Power loadings of `x_i`, `x_j` when both share `Φ` and use `Ψ = Ut`.
fn aligned_loadings<'a>(x_i: &'a Codeword, x_j: &'a Codeword, profile: &ChannelProfile) -> Option<(&'a [f64], &'a [f64])> {
    let (a, b) = (x_i.svd()?, x_j.svd()?);
    let close = |p: &CMat, q: &CMat| p.shape() == q.shape() && frobenius(&(p - q)) < 1e-9;
    if close(&a.phi, &b.phi) && close(&a.psi, profile.ut()) && close(&b.psi, profile.ut()) {
        Some((&a.w, &b.w))
    } else {
        None
    }
}

/// Full divergence report for the ordered pair `(i, j)`.
pub fn divergence_report(
    alphabet: &CodewordAlphabet,
    i: usize,
    j: usize,
    profile: &ChannelProfile,
    fading: &FadingCovariance,
    noise_power: f64,
    quad_points: usize,
) -> Result<DivergenceReport> {
    if i >= alphabet.len() || j >= alphabet.len() {
        return invalid(format!("pair ({i}, {j}) out of range for an alphabet of {}", alphabet.len()));
    }
    let (x_i, x_j) = (&alphabet[i], &alphabet[j]);
    let kld_finite = kld_direct(
        &build_block_covariance(x_i, fading, noise_power)?,
        &build_block_covariance(x_j, fading, noise_power)?,
    )?;
    let kld_spectral = kld_spectral_codewords(x_i, x_j, profile, noise_power, quad_points)?;
    let k = alphabet.block_len();
    let aligned = aligned_loadings(x_i, x_j, profile);
    let singular = detect_singularity(x_i.active_rank(), x_j.active_rank());
    let (isd_per_band, high_snr_limit, low_snr_coefficient) = match aligned {
        Some((w_i, w_j)) => (
            Some(isd_subbands(w_i, w_j, profile, noise_power, k, quad_points)?),
            match singular {
                Singularity::Divergent => HighSnrLimit::Divergent,
                Singularity::Bounded => HighSnrLimit::Finite(kld_high_snr_equal_rank(w_i, w_j, k)?),
            },
            Some(kld_low_snr_coefficient(w_i, w_j, profile, k, quad_points)?),
        ),
        None => (
            None,
            match singular {
                Singularity::Divergent => HighSnrLimit::Divergent,
                Singularity::Bounded => HighSnrLimit::Unavailable,
            },
            None,
        ),
    };
    Ok(DivergenceReport { i, j, nr: fading.nr, noise_power, kld_finite, kld_spectral, isd_per_band, high_snr_limit, low_snr_coefficient })
}

/// Writes reports as CSV with header
/// `i,j,Nr,noise_power,kld_finite,kld_spectral,isd_bands,high_snr_limit,high_snr_flag,low_snr_coefficient`.
/// ISD bands are `;`-separated; missing values are empty fields.
pub fn write_divergence_csv<W: Write>(reports: &[DivergenceReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["i", "j", "Nr", "noise_power", "kld_finite", "kld_spectral", "isd_bands", "high_snr_limit", "high_snr_flag", "low_snr_coefficient"])?;
    for r in reports {
        let bands = r
            .isd_per_band
            .as_ref()
            .map(|b| b.iter().map(|v| format!("{v:.12e}")).collect::<Vec<_>>().join(";"))
            .unwrap_or_default();
        let (limit, flag) = match r.high_snr_limit {
            HighSnrLimit::Finite(v) => (format!("{v:.12e}"), "bounded"),
            HighSnrLimit::Divergent => (String::new(), "divergent"),
            HighSnrLimit::Unavailable => (String::new(), "unavailable"),
        };
        w.write_record([
            r.i.to_string(),
            r.j.to_string(),
            r.nr.to_string(),
            format!("{:.12e}", r.noise_power),
            format!("{:.12e}", r.kld_finite),
            format!("{:.12e}", r.kld_spectral),
            bands,
            limit,
            flag.to_string(),
            r.low_snr_coefficient.map(|v| format!("{v:.12e}")).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
