//! Small dense complex linear-algebra helpers shared by the detectors.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// `e^{j·2π·x}`
#[inline]
pub fn cis(x: f64) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * x)
}

/// Unitary DFT basis `[F]_{r,c} = e^{j2π rc/n} / √n`.
pub fn dft_matrix(n: usize) -> CMat {
    let scale = 1.0 / (n as f64).sqrt();
    CMat::from_fn(n, n, |r, c| cis(((r * c) % n) as f64 / n as f64) * scale)
}

/// Diagonal of the phase ramp `Θ(σ) = Diag(1, e^{j2πσ}, …, e^{j2πσ(K−1)})`.
pub fn phase_ramp(sigma: f64, k: usize) -> Vec<Complex64> {
    (0..k).map(|t| cis(sigma * t as f64)).collect()
}

/// One draw of a circularly-symmetric `CN(0, 1)` variate.
#[inline]
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `‖Aᴴ·A − I‖_F`
pub fn unitarity_defect(m: &CMat) -> f64 {
    let gram = m.adjoint() * m;
    frobenius(&(gram - CMat::identity(m.ncols(), m.ncols())))
}

/// Largest deviation from Hermitian symmetry, `max |A − Aᴴ|`.
pub fn hermitian_defect(m: &CMat) -> f64 {
    let mut worst = 0.0f64;
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            worst = worst.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    worst
}

/// `(A + Aᴴ)/2`
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// Eigen-decomposition of a Hermitian matrix; eigenvalues are returned
/// unsorted, in the order nalgebra produces them.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let eig = hermitian_part(m).symmetric_eigen();
    (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
}

pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let mut values: Vec<f64> = hermitian_part(m).symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(|a, b| a.total_cmp(b));
    values
}

/// Lower Cholesky factor of a Hermitian positive-definite matrix.
pub fn cholesky_lower(m: &CMat) -> Result<CMat> {
    let n = m.nrows();
    // Complex square roots never fail, so an indefinite input shows up as a
    // non-real or non-positive diagonal rather than as a factorization error.
    m.clone()
        .cholesky()
        .map(|c| c.unpack())
        .filter(|l| l.diagonal().iter().all(|d| d.re > 0.0 && d.re.is_finite() && d.im.abs() <= 1e-8 * d.re))
        .ok_or_else(|| {
            let eig = hermitian_eigenvalues(m);
            Error::Numerical(format!(
                "Cholesky factorization of a {n}x{n} matrix failed (eigenvalue range [{:.3e}, {:.3e}], Hermitian defect {:.3e})",
                eig.first().copied().unwrap_or(f64::NAN),
                eig.last().copied().unwrap_or(f64::NAN),
                hermitian_defect(m),
            ))
        })
}

/// `ln det A` for Hermitian positive-definite `A`.
pub fn log_det_hpd(m: &CMat) -> Result<f64> {
    let l = cholesky_lower(m)?;
    Ok(2.0 * l.diagonal().iter().map(|d| d.re.ln()).sum::<f64>())
}

/// Orthonormal basis of the orthogonal complement of the column space of a
/// semi-unitary `K × n` matrix.
pub fn orthogonal_complement(u: &CMat) -> CMat {
    let k = u.nrows();
    let projector = CMat::identity(k, k) - u * u.adjoint();
    let (values, vectors) = hermitian_eigen(&projector);
    let columns: Vec<_> = values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.5)
        .map(|(i, _)| vectors.column(i).into_owned())
        .collect();
    if columns.is_empty() {
        return CMat::zeros(k, 0);
    }
    CMat::from_columns(&columns)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dft_matrix_is_unitary() {
        for n in [1, 2, 5, 8] {
            assert!(unitarity_defect(&dft_matrix(n)) < 1e-12);
        }
    }

    #[test]
    fn complement_spans_remaining_directions() {
        let f = dft_matrix(5);
        let u = f.columns(0, 2).into_owned();
        let c = orthogonal_complement(&u);
        assert_eq!(c.ncols(), 3);
        assert!(frobenius(&(u.adjoint() * &c)) < 1e-12);
        assert!(unitarity_defect(&c) < 1e-12);
    }

    #[test]
    fn log_det_of_scaled_identity() {
        let m = CMat::identity(4, 4).scale(3.0);
        assert!((log_det_hpd(&m).unwrap() - 4.0 * 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cholesky_reports_indefinite_input() {
        let mut m = CMat::identity(2, 2);
        m[(1, 1)] = Complex64::new(-1.0, 0.0);
        assert!(matches!(cholesky_lower(&m), Err(Error::Numerical(_))));
    }
}
