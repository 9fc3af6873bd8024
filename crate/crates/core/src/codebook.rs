//! Codeword alphabets: the orthogonal test pair, SVD-structured codewords
//! and semi-unitary (Grassmannian) constellations.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::{random_unitary, random_unitary_with};
use crate::error::{invalid, Error, Result};
use crate::linalg::{frobenius, unitarity_defect, CMat};

/// Squared singular values below this are treated as inactive.
pub const INACTIVE_POWER: f64 = 1e-12;

/// Factors of `X = Φ·W^{1/2}·Ψᴴ`.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    /// `K × K` unitary signal basis.
    pub phi: CMat,
    /// Power loading `w^(p)` (squared singular values), length `nt`.
    pub w: Vec<f64>,
    /// `nt × nt` unitary precoder.
    pub psi: CMat,
}

#[derive(Debug, Clone)]
pub struct Codeword {
    matrix: CMat,
    svd: Option<SvdFactors>,
    active_rank: usize,
}

impl Codeword {
    /// Wraps a bare `K × nt` matrix; the active rank comes from its singular values.
    pub fn from_matrix(matrix: CMat) -> Result<Self> {
        if matrix.nrows() < matrix.ncols() || matrix.ncols() == 0 {
            return invalid(format!(
                "codeword must be K x nt with 1 <= nt <= K, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            ));
        }
        let active_rank = matrix
            .singular_values()
            .iter()
            .filter(|s| s.powi(2) >= INACTIVE_POWER)
            .count();
        Ok(Codeword { matrix, svd: None, active_rank })
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn svd(&self) -> Option<&SvdFactors> {
        self.svd.as_ref()
    }

    /// Number of strictly active power-loading entries, `N_i`.
    pub fn active_rank(&self) -> usize {
        self.active_rank
    }

    pub fn block_len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn nt(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn energy(&self) -> f64 {
        frobenius(&self.matrix).powi(2)
    }

    /// Orthogonal projector onto the column space.
    pub fn projector(&self) -> CMat {
        let svd = self.matrix.clone().svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        let k = self.matrix.nrows();
        let mut p = CMat::zeros(k, k);
        for (c, s) in svd.singular_values.iter().enumerate() {
            if s.powi(2) >= INACTIVE_POWER {
                let col = u.column(c);
                p += col * col.adjoint();
            }
        }
        p
    }
}

/// Assembles `X = Φ·W^{1/2}·Ψᴴ` and keeps the factors.
pub fn svd_codeword(phi: CMat, w: Vec<f64>, psi: CMat) -> Result<Codeword> {
    let k = phi.nrows();
    let nt = w.len();
    if phi.ncols() != k || psi.nrows() != nt || psi.ncols() != nt || nt == 0 || nt > k {
        return invalid(format!(
            "inconsistent factor shapes: phi {}x{}, w {}, psi {}x{}",
            phi.nrows(),
            phi.ncols(),
            nt,
            psi.nrows(),
            psi.ncols()
        ));
    }
    if let Some(bad) = w.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return invalid(format!("power loading must be nonnegative, got {bad}"));
    }
    for (name, m) in [("phi", &phi), ("psi", &psi)] {
        let defect = unitarity_defect(m);
        if defect > 1e-10 {
            return invalid(format!("{name} is not unitary (defect {defect:.3e})"));
        }
    }
    let mut scaled = phi.columns(0, nt).into_owned();
    for (c, &wc) in w.iter().enumerate() {
        scaled.column_mut(c).scale_mut(wc.sqrt());
    }
    let matrix = scaled * psi.adjoint();
    let active_rank = w.iter().filter(|&&v| v >= INACTIVE_POWER).count();
    Ok(Codeword { matrix, svd: Some(SvdFactors { phi, w, psi }), active_rank })
}

/// `Φ` whose leading columns are `u[:, start..]`, wrapping around.
fn rotated_basis(u: &CMat, start: usize) -> CMat {
    let k = u.ncols();
    CMat::from_fn(u.nrows(), k, |r, c| u[(r, (c + start) % k)])
}

/// The two-codeword test alphabet: disjoint column groups of one Haar unitary,
/// with powers `K` and `K/2` (per-entry scalings `√(K/nt)` and `√(K/(2nt))`).
pub fn orthogonal_pair(k: usize, nt: usize, seed: u64) -> Result<(Codeword, Codeword)> {
    if nt == 0 || k < 2 * nt {
        return invalid(format!("orthogonal pair needs K >= 2*nt, got K={k}, nt={nt}"));
    }
    let u = random_unitary(k, seed)?;
    let psi = CMat::identity(nt, nt);
    let xi = svd_codeword(u.clone(), vec![k as f64 / nt as f64; nt], psi.clone())?;
    let xj = svd_codeword(rotated_basis(&u, nt), vec![k as f64 / (2 * nt) as f64; nt], psi)?;
    Ok((xi, xj))
}

/// Semi-unitary alphabet (`Xᴴ·X = I_nt`) of `m` codewords.
///
/// When `m·nt ≤ K` the codewords are disjoint column groups of one unitary,
/// so their subspaces are mutually orthogonal; otherwise each codeword is the
/// leading `nt` columns of an independent Haar unitary.
pub fn grassmannian_alphabet(k: usize, nt: usize, m: usize, seed: u64) -> Result<CodewordAlphabet> {
    if m < 2 {
        return invalid(format!("alphabet needs at least 2 codewords, got {m}"));
    }
    if nt == 0 || nt > k {
        return invalid(format!("need 1 <= nt <= K, got K={k}, nt={nt}"));
    }
    let psi = CMat::identity(nt, nt);
    let codewords = if m * nt <= k {
        let u = random_unitary(k, seed)?;
        (0..m)
            .map(|i| svd_codeword(rotated_basis(&u, i * nt), vec![1.0; nt], psi.clone()))
            .collect::<Result<Vec<_>>>()?
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m)
            .map(|_| svd_codeword(random_unitary_with(k, &mut rng)?, vec![1.0; nt], psi.clone()))
            .collect::<Result<Vec<_>>>()?
    };
    let alphabet = CodewordAlphabet::new(codewords)?;
    let projectors: Vec<CMat> = alphabet.codewords().iter().map(Codeword::projector).collect();
    for i in 0..m {
        for j in i + 1..m {
            let d = frobenius(&(&projectors[i] - &projectors[j]));
            if d <= 1e-6 {
                return Err(Error::Numerical(format!(
                    "codewords {i} and {j} span the same subspace (projector distance {d:.3e})"
                )));
            }
        }
    }
    Ok(alphabet)
}

/// Equiprobable codeword alphabet sharing one block length and antenna count.
#[derive(Debug, Clone)]
pub struct CodewordAlphabet {
    codewords: Vec<Codeword>,
    k: usize,
    nt: usize,
}

impl CodewordAlphabet {
    pub fn new(codewords: Vec<Codeword>) -> Result<Self> {
        let first = codewords.first().ok_or_else(|| Error::InvalidArgument("empty alphabet".into()))?;
        let (k, nt) = (first.block_len(), first.nt());
        if let Some((i, _)) = codewords.iter().enumerate().find(|(_, c)| c.block_len() != k || c.nt() != nt) {
            return invalid(format!("codeword {i} does not share K={k}, nt={nt}"));
        }
        Ok(CodewordAlphabet { codewords, k, nt })
    }

    pub fn from_pair(pair: (Codeword, Codeword)) -> Result<Self> {
        Self::new(vec![pair.0, pair.1])
    }

    pub fn codewords(&self) -> &[Codeword] {
        &self.codewords
    }

    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    pub fn block_len(&self) -> usize {
        self.k
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    /// `E[Xᴴ·X]` over equiprobable codewords.
    pub fn mean_gram(&self) -> CMat {
        let mut acc = CMat::zeros(self.nt, self.nt);
        for c in &self.codewords {
            acc += c.matrix().adjoint() * c.matrix();
        }
        acc.scale(1.0 / self.codewords.len() as f64)
    }
}

impl std::ops::Index<usize> for CodewordAlphabet {
    type Output = Codeword;

    fn index(&self, i: usize) -> &Codeword {
        &self.codewords[i]
    }
}
