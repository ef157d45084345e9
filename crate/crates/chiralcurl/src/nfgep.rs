//! Null-space-free reduction of the pencil to a `4n×4n` problem
//! `Â_r y = ω B̂_r y`, valid for `γ ≠ γ*`.
//!
//! With `z = diag(P_r, Q_r) y`:
//!
//! ```text
//! Â_r = [[P_rᴴD₁₁P_r, P_rᴴD₁₂Q_r], [Q_rᴴD₂₁P_r, Q_rᴴD₂₂Q_r]]
//! B̂_r = i[[0, Σ⁻¹], [−Σ⁻¹, 0]]
//! D₁₁ = Iᵒ + εᵢ/(εᵢ−γ²) Iⁱ      D₁₂ = −iγ/(εᵢ−γ²) Iⁱ
//! D₂₁ = iγ/(εᵢ−γ²) Iⁱ           D₂₂ = Iᵒ/εₒ + 1/(εᵢ−γ²) Iⁱ
//! ```
//!
//! The spectrum equals the nonzero spectrum of `(A_γ, B_γ)`.

use faer::{Mat, Side};
use num_complex::Complex64 as C64;

use crate::error::{check_len, Error, Result};
use crate::lattice::MaterialMask;
use crate::linalg::{self, block2, I, ZERO};
use crate::Discretization;

fn check_gamma(mask: &MaterialMask, gamma: f64) -> Result<()> {
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::InvalidArgument(format!("gamma must be finite and nonnegative, got {gamma}")));
    }
    if (mask.eps_i() - gamma * gamma).abs() <= 1e-14 * mask.eps_i() {
        return Err(Error::CriticalGamma(gamma));
    }
    Ok(())
}

/// Diagonals `(D₁₁, D₁₂, D₂₁, D₂₂)`, each of length `3n`.
fn d_blocks(mask: &MaterialMask, gamma: f64) -> [Vec<C64>; 4] {
    let s = mask.eps_i() - gamma * gamma;
    let mut d = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    for f in mask.inside3() {
        if f {
            d[0].push(C64::new(mask.eps_i() / s, 0.0));
            d[1].push(-I * (gamma / s));
            d[2].push(I * (gamma / s));
            d[3].push(C64::new(1.0 / s, 0.0));
        } else {
            d[0].push(C64::new(1.0, 0.0));
            d[1].push(ZERO);
            d[2].push(ZERO);
            d[3].push(C64::new(1.0 / mask.eps_o(), 0.0));
        }
    }
    d
}

#[derive(Clone, Debug)]
pub struct NfgepAssembly {
    pub gamma: f64,
    pub eps_i: f64,
    pub eps_o: f64,
    pub a_r: Mat<C64>,
    /// Diagonal of `Σ` (length `2n`).
    pub sigma: Vec<f64>,
}

/// Assemble `(Â_r, B̂_r)`. Requires `k ≠ 0` and `γ ≠ γ*`.
pub fn assemble_nfgep(disc: &Discretization, mask: &MaterialMask, gamma: f64) -> Result<NfgepAssembly> {
    check_len(disc.n(), mask.len())?;
    check_gamma(mask, gamma)?;
    let pr = disc.pr()?;
    let qr = disc.qr()?;
    let [d11, d12, d21, d22] = d_blocks(mask, gamma);
    let a11 = pr.adjoint() * linalg::scale_rows(pr, &d11);
    let a12 = pr.adjoint() * linalg::scale_rows(qr, &d12);
    let a21 = qr.adjoint() * linalg::scale_rows(pr, &d21);
    let a22 = qr.adjoint() * linalg::scale_rows(qr, &d22);
    let a_r = linalg::hermitize(&block2(&a11, &a12, &a21, &a22));
    Ok(NfgepAssembly { gamma, eps_i: mask.eps_i(), eps_o: mask.eps_o(), a_r, sigma: disc.svd()?.sigma2() })
}

#[derive(Clone, Debug)]
pub struct NfgepSpectrum {
    /// Eigenvalues sorted by real part, then imaginary part.
    pub values: Vec<C64>,
    /// Matching eigenvectors as columns, when requested.
    pub vectors: Option<Mat<C64>>,
}

impl NfgepAssembly {
    pub fn dim(&self) -> usize {
        self.a_r.nrows()
    }

    pub fn b_r(&self) -> Mat<C64> {
        let m = self.sigma.len();
        Mat::from_fn(2 * m, 2 * m, |i, j| {
            if i < m && j == i + m {
                I / self.sigma[i]
            } else if i >= m && j + m == i {
                -I / self.sigma[j]
            } else {
                ZERO
            }
        })
    }

    /// `B̂_r⁻¹Â_r = i[[ΣA₂₁, ΣA₂₂], [−ΣA₁₁, −ΣA₁₂]]`.
    pub fn standard_matrix(&self) -> Mat<C64> {
        let m = self.sigma.len();
        Mat::from_fn(2 * m, 2 * m, |i, j| {
            if i < m {
                I * self.sigma[i] * self.a_r[(i + m, j)]
            } else {
                -I * self.sigma[i - m] * self.a_r[(i - m, j)]
            }
        })
    }

    /// Solve the reduced problem. Below `γ*`, `Â_r ≻ 0` and the problem is
    /// turned into a Hermitian one through a Cholesky factor, which keeps the
    /// spectrum exactly real; otherwise the standard matrix is used.
    pub fn solve(&self, vectors: bool) -> Result<NfgepSpectrum> {
        let below = self.gamma * self.gamma < self.eps_i;
        let out = if below {
            match self.solve_definite(vectors) {
                Some(r) => r?,
                None => self.solve_standard(vectors)?,
            }
        } else {
            self.solve_standard(vectors)?
        };
        Ok(out)
    }

    fn solve_definite(&self, vectors: bool) -> Option<Result<NfgepSpectrum>> {
        let llt = self.a_r.llt(Side::Lower).ok()?;
        let l = llt.L().to_owned();
        // H = L⁻¹B̂L⁻ᴴ has eigenvalues 1/ω
        let b = self.b_r();
        let x = l.as_ref().solve_lower_triangular_in_place_helper(&b);
        let h = l.as_ref().solve_lower_triangular_in_place_helper(&x.adjoint().to_owned());
        let res = (|| {
            let (mu, v) = linalg::hermitian_eigen(&h)?;
            let mut idx: Vec<usize> = (0..mu.len()).collect();
            let vals: Vec<C64> = mu.iter().map(|&m| C64::new(1.0 / m, 0.0)).collect();
            idx.sort_by(|&a, &b| vals[a].re.total_cmp(&vals[b].re));
            let values = idx.iter().map(|&k| vals[k]).collect();
            let vecs = if vectors {
                // y = L⁻ᴴv
                let lh = l.adjoint().to_owned();
                let y = lh.as_ref().solve_upper_triangular_in_place_helper(&v);
                Some(linalg::select_cols(&y, &idx))
            } else {
                None
            };
            Ok(NfgepSpectrum { values, vectors: vecs })
        })();
        Some(res)
    }

    fn solve_standard(&self, vectors: bool) -> Result<NfgepSpectrum> {
        let m = self.standard_matrix();
        let err = |e: faer::linalg::evd::EvdError| Error::Solver(format!("{e:?}"));
        let (vals, vecs) = if vectors {
            let e = m.eigen().map_err(err)?;
            let s = e.S();
            ((0..self.dim()).map(|k| s[k]).collect::<Vec<_>>(), Some(e.U().to_owned()))
        } else {
            (m.eigenvalues().map_err(err)?, None)
        };
        let mut idx: Vec<usize> = (0..vals.len()).collect();
        idx.sort_by(|&a, &b| vals[a].re.total_cmp(&vals[b].re).then(vals[a].im.total_cmp(&vals[b].im)));
        Ok(NfgepSpectrum {
            values: idx.iter().map(|&k| vals[k]).collect(),
            vectors: vecs.map(|v| linalg::select_cols(&v, &idx)),
        })
    }
}

trait TriSolve {
    fn solve_lower_triangular_in_place_helper(self, rhs: &Mat<C64>) -> Mat<C64>;
    fn solve_upper_triangular_in_place_helper(self, rhs: &Mat<C64>) -> Mat<C64>;
}

impl TriSolve for faer::MatRef<'_, C64> {
    fn solve_lower_triangular_in_place_helper(self, rhs: &Mat<C64>) -> Mat<C64> {
        let mut x = rhs.clone();
        faer::linalg::triangular_solve::solve_lower_triangular_in_place(self, x.as_mut(), crate::par::dense_par());
        x
    }
    fn solve_upper_triangular_in_place_helper(self, rhs: &Mat<C64>) -> Mat<C64> {
        let mut x = rhs.clone();
        faer::linalg::triangular_solve::solve_upper_triangular_in_place(self, x.as_mut(), crate::par::dense_par());
        x
    }
}

/// `z = diag(P_r, Q_r)y` split into its two `3n` halves.
pub fn lift(disc: &Discretization, y: &[C64]) -> Result<(Vec<C64>, Vec<C64>)> {
    let n = disc.n();
    check_len(4 * n, y.len())?;
    let z1 = linalg::matvec(disc.pr()?, &y[..2 * n]);
    let z2 = linalg::matvec(disc.qr()?, &y[2 * n..]);
    Ok((z1, z2))
}

/// Recover `(h, e)` from a reduced eigenvector. Entrywise,
/// `h = i(εz₁ + ζz₂)/(ζξ − ε)` and `e = −i(ξz₁ + z₂)/(ζξ − ε)`.
pub fn recover_fields(disc: &Discretization, mask: &MaterialMask, gamma: f64, y: &[C64]) -> Result<(Vec<C64>, Vec<C64>)> {
    check_gamma(mask, gamma)?;
    let (z1, z2) = lift(disc, y)?;
    let inside = mask.inside3();
    let mut h = Vec::with_capacity(z1.len());
    let mut e = Vec::with_capacity(z1.len());
    for k in 0..z1.len() {
        let (eps, zeta, xi) = if inside[k] { (mask.eps_i(), -I * gamma, I * gamma) } else { (mask.eps_o(), ZERO, ZERO) };
        let det = zeta * xi - eps;
        h.push(I * (eps * z1[k] + zeta * z2[k]) / det);
        e.push(I * (-xi * z1[k] - z2[k]) / det);
    }
    Ok((h, e))
}

/// The `2×2` kernel `W = (εᵢ−γ²)⁻²[[2γεᵢ, −i(εᵢ+γ²)], [i(εᵢ+γ²), 2γ]]`,
/// which is `∂/∂γ` of the inside block of `[[D₁₁, D₁₂], [D₂₁, D₂₂]]`.
pub fn w_kernel(eps_i: f64, gamma: f64) -> [[C64; 2]; 2] {
    let s = (eps_i - gamma * gamma).powi(-2);
    [
        [C64::new(2.0 * gamma * eps_i * s, 0.0), -I * ((eps_i + gamma * gamma) * s)],
        [I * ((eps_i + gamma * gamma) * s), C64::new(2.0 * gamma * s, 0.0)],
    ]
}

/// `d(γ) = zᴴ(I₃⊗W on 𝒟ᵢ)z` after scaling `y` so that `yᴴÂ_r y = 1`.
/// For a simple real eigenvalue, `ω′(γ) = ω(γ)·d(γ)`.
pub fn derivative_indicator(disc: &Discretization, mask: &MaterialMask, asm: &NfgepAssembly, y: &[C64]) -> Result<f64> {
    if asm.gamma * asm.gamma >= mask.eps_i() {
        return Err(Error::InvalidArgument("the derivative indicator requires gamma < gamma*".into()));
    }
    let ay = linalg::matvec(&asm.a_r, y);
    let q = linalg::vdot(y, &ay).re;
    if !(q > 0.0) {
        return Err(Error::InvalidArgument("y^H A_r y must be positive".into()));
    }
    let s = 1.0 / q.sqrt();
    let ys: Vec<C64> = y.iter().map(|v| v * s).collect();
    let (z1, z2) = lift(disc, &ys)?;
    let w = w_kernel(mask.eps_i(), asm.gamma);
    let mut d = ZERO;
    for (k, f) in mask.inside3().into_iter().enumerate() {
        if f {
            let (a, b) = (z1[k], z2[k]);
            d += a.conj() * (w[0][0] * a + w[0][1] * b) + b.conj() * (w[1][0] * a + w[1][1] * b);
        }
    }
    Ok(d.re)
}
