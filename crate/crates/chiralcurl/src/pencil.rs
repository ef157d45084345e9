//! The chirality-dependent Hermitian pencil
//!
//! ```text
//! A_γ = [[0, −iC], [iCᴴ, −γ(IⁱC + CᴴIⁱ)]],   B_γ = diag(I₃ₙ, Φ(γ)),
//! Φ(γ) = I₃⊗[εₒI⁽ᵒ⁾ + (εᵢ−γ²)I⁽ⁱ⁾],
//! ```
//!
//! its quadratic form `Q_γ(ω) = CᴴC − ωγ(IⁱC + CᴴIⁱ) − ω²Φ`, Rayleigh
//! scalars, and a dense reference eigensolver. `Iⁱ` is shorthand for
//! `I₃⊗I⁽ⁱ⁾`.

use faer::linalg::solvers::Solve;
use faer::Mat;
use num_complex::Complex64 as C64;

use crate::error::{check_len, Error, Result};
use crate::lattice::MaterialMask;
use crate::linalg::{self, vdot, vnorm, I, ZERO};
use crate::Discretization;

/// Default cap on the pencil dimension `6n` for dense solves.
pub const DEFAULT_MAX_DIM: usize = 4000;

/// `(A_γ, B_γ)` at a fixed chirality. `B_γ` is diagonal and stored as such.
#[derive(Clone, Debug)]
pub struct PencilAssembly {
    pub gamma: f64,
    pub eps_i: f64,
    pub eps_o: f64,
    pub a: Mat<C64>,
    pub b: Vec<f64>,
}

impl PencilAssembly {
    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn n(&self) -> usize {
        self.dim() / 6
    }

    pub fn gamma_star(&self) -> f64 {
        self.eps_i.sqrt()
    }

    pub fn b_dense(&self) -> Mat<C64> {
        Mat::from_fn(self.dim(), self.dim(), |i, j| if i == j { C64::new(self.b[i], 0.0) } else { ZERO })
    }

    pub fn a_norm(&self) -> f64 {
        linalg::frob(&self.a)
    }

    pub fn b_norm(&self) -> f64 {
        self.b.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_b_definite(&self) -> bool {
        self.b.iter().all(|&x| x > 0.0)
    }

    pub fn is_b_singular(&self) -> bool {
        self.b.iter().any(|&x| x == 0.0)
    }

    /// `A − αB`.
    pub fn shifted(&self, alpha: f64) -> Mat<C64> {
        let mut m = self.a.clone();
        for (i, &b) in self.b.iter().enumerate() {
            m[(i, i)] -= alpha * b;
        }
        m
    }
}

/// Assemble `(A_γ, B_γ)`.
pub fn assemble_pencil(disc: &Discretization, mask: &MaterialMask, gamma: f64) -> Result<PencilAssembly> {
    let n = disc.n();
    check_len(n, mask.len())?;
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::InvalidArgument(format!("gamma must be finite and nonnegative, got {gamma}")));
    }
    let c = disc.dense_c();
    let inside = mask.inside3();
    let m = 3 * n;
    let mut a = Mat::<C64>::zeros(2 * m, 2 * m);
    for j in 0..m {
        for i in 0..m {
            let cij = c[(i, j)];
            if cij == ZERO {
                continue;
            }
            a[(i, m + j)] = -I * cij;
            a[(m + j, i)] = I * cij.conj();
            // −γ(IⁱC + CᴴIⁱ): Iⁱ scales row i of C and column i of Cᴴ
            if inside[i] {
                a[(m + i, m + j)] -= gamma * cij;
                a[(m + j, m + i)] -= gamma * cij.conj();
            }
        }
    }
    let b = b_diagonal(mask, gamma);
    Ok(PencilAssembly { gamma, eps_i: mask.eps_i(), eps_o: mask.eps_o(), a, b })
}

/// Scalars of `eᴴQ_γ(ω)e = c − ωγb − ω²φ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayleighScalars {
    pub a_i: f64,
    pub a_o: f64,
    pub b: f64,
    pub c: f64,
    /// `φ = εₒa_o + (εᵢ−γ²)a_i`.
    pub phi: f64,
    /// `Δ = γ²b² + 4cφ`.
    pub delta: f64,
    /// Roots `ω± = (γb ± √Δ)/(−2φ)`; `None` when `φ` vanishes.
    pub omega_plus: Option<C64>,
    pub omega_minus: Option<C64>,
    /// `c/(γb)`, the only root when `φ` vanishes and `γb ≠ 0`.
    pub linear_root: Option<f64>,
}

impl RayleighScalars {
    /// Roots that exist, nearest first to `target`.
    pub fn nearest_root(&self, target: C64) -> Option<C64> {
        [self.omega_plus, self.omega_minus, self.linear_root.map(|x| C64::new(x, 0.0))]
            .into_iter()
            .flatten()
            .min_by(|x, y| (x - target).norm().total_cmp(&(y - target).norm()))
    }
}

/// Rayleigh scalars of a nonzero `e` (length `3n`).
pub fn rayleigh(disc: &Discretization, mask: &MaterialMask, gamma: f64, e: &[C64]) -> Result<RayleighScalars> {
    check_len(3 * disc.n(), e.len())?;
    let nrm = vnorm(e);
    if nrm == 0.0 {
        return Err(Error::InvalidArgument("zero vector".into()));
    }
    let ce = disc.curl().apply(e)?;
    let inside = mask.inside3();
    let mut a_i = 0.0;
    let mut a_o = 0.0;
    let mut eic = ZERO;
    for k in 0..e.len() {
        if inside[k] {
            a_i += e[k].norm_sqr();
            eic += e[k].conj() * ce[k];
        } else {
            a_o += e[k].norm_sqr();
        }
    }
    let c = ce.iter().map(|x| x.norm_sqr()).sum::<f64>();
    let b = 2.0 * eic.re;
    let phi = mask.eps_o() * a_o + (mask.eps_i() - gamma * gamma) * a_i;
    let delta = gamma * gamma * b * b + 4.0 * c * phi;
    let scale = nrm * nrm * (mask.eps_o() + mask.eps_i() + gamma * gamma);
    let (omega_plus, omega_minus, linear_root) = if phi.abs() > 1e-14 * scale {
        let sq = C64::new(delta, 0.0).sqrt();
        let den = -2.0 * phi;
        (Some((gamma * b + sq) / den), Some((gamma * b - sq) / den), None)
    } else if (gamma * b).abs() > 0.0 {
        (None, None, Some(c / (gamma * b)))
    } else {
        (None, None, None)
    };
    Ok(RayleighScalars { a_i, a_o, b, c, phi, delta, omega_plus, omega_minus, linear_root })
}

/// `‖Q_γ(ω)e‖/‖e‖`.
pub fn qep_residual(disc: &Discretization, mask: &MaterialMask, gamma: f64, omega: C64, e: &[C64]) -> Result<f64> {
    check_len(3 * disc.n(), e.len())?;
    let nrm = vnorm(e);
    if nrm == 0.0 {
        return Err(Error::InvalidArgument("zero vector".into()));
    }
    let curl = disc.curl();
    let inside = mask.inside3();
    let ce = curl.apply(e)?;
    let cce = curl.apply_adjoint(&ce)?;
    let ie: Vec<C64> = e.iter().zip(&inside).map(|(x, &f)| if f { *x } else { ZERO }).collect();
    let chie = curl.apply_adjoint(&ie)?;
    let phi = mask.phi_diag(gamma);
    let r: Vec<C64> = (0..e.len())
        .map(|k| {
            let ic = if inside[k] { ce[k] } else { ZERO };
            cce[k] - omega * gamma * (ic + chie[k]) - omega * omega * phi[k] * e[k]
        })
        .collect();
    Ok(vnorm(&r) / nrm)
}

/// `[e; h] ↦ [h − iγIⁱe; e]`.
pub fn maxwell_to_pencil(mask: &MaterialMask, gamma: f64, e: &[C64], h: &[C64]) -> Result<Vec<C64>> {
    let m = 3 * mask.len();
    check_len(m, e.len())?;
    check_len(m, h.len())?;
    let inside = mask.inside3();
    let mut out: Vec<C64> = (0..m).map(|k| if inside[k] { h[k] - I * gamma * e[k] } else { h[k] }).collect();
    out.extend_from_slice(e);
    Ok(out)
}

/// Inverse of [`maxwell_to_pencil`]: returns `(e, h)`.
pub fn pencil_to_maxwell(mask: &MaterialMask, gamma: f64, x: &[C64]) -> Result<(Vec<C64>, Vec<C64>)> {
    let m = 3 * mask.len();
    check_len(2 * m, x.len())?;
    let inside = mask.inside3();
    let e = x[m..].to_vec();
    let h = (0..m).map(|k| if inside[k] { x[k] + I * gamma * e[k] } else { x[k] }).collect();
    Ok((e, h))
}

/// `h = i(γIⁱ − ω⁻¹C)e`.
pub fn e_to_h(disc: &Discretization, mask: &MaterialMask, gamma: f64, omega: C64, e: &[C64]) -> Result<Vec<C64>> {
    if omega == ZERO {
        return Err(Error::InvalidArgument("omega must be nonzero to recover h from e".into()));
    }
    let ce = disc.curl().apply(e)?;
    let inside = mask.inside3();
    Ok((0..e.len())
        .map(|k| {
            let g = if inside[k] { gamma * e[k] } else { ZERO };
            I * (g - ce[k] / omega)
        })
        .collect())
}

/// Relative residual of the discrete Maxwell system
/// `Ce = iω(h + ζe)`, `Cᴴh = −iω(εe + ξh)` with `ζ = −iγIⁱ`, `ξ = iγIⁱ`,
/// `ε = εₒIᵒ + εᵢIⁱ`.
pub fn maxwell_residual(disc: &Discretization, mask: &MaterialMask, gamma: f64, omega: C64, e: &[C64], h: &[C64]) -> Result<f64> {
    let curl = disc.curl();
    let ce = curl.apply(e)?;
    let ch = curl.apply_adjoint(h)?;
    let inside = mask.inside3();
    let mut r1 = 0.0;
    let mut r2 = 0.0;
    for k in 0..e.len() {
        let (zeta, xi, eps) = if inside[k] { (-I * gamma, I * gamma, mask.eps_i()) } else { (ZERO, ZERO, mask.eps_o()) };
        r1 += (ce[k] - I * omega * (h[k] + zeta * e[k])).norm_sqr();
        r2 += (ch[k] + I * omega * (eps * e[k] + xi * h[k])).norm_sqr();
    }
    let scale = (vnorm(&ce).powi(2) + vnorm(&ch).powi(2)).sqrt().max(omega.norm() * (vnorm(e) + vnorm(h)));
    Ok((r1 + r2).sqrt() / scale.max(f64::MIN_POSITIVE))
}

/// How the dense eigenproblem was solved.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStrategy {
    /// `B ≻ 0`: Hermitian eigenproblem of `B^{-1/2}AB^{-1/2}`.
    HermitianReduction,
    /// `B` nonsingular and indefinite: eigenproblem of `B⁻¹A`.
    Standard,
    /// `B` singular: eigenproblem of `(A − σB)⁻¹B` for a fixed complex shift `σ`.
    ShiftInvert,
}

#[derive(Clone, Debug)]
pub struct Eigenpair {
    /// `None` for an infinite eigenvalue.
    pub value: Option<C64>,
    pub vector: Option<Vec<C64>>,
}

#[derive(Clone, Debug)]
pub struct PencilSpectrum {
    pub pairs: Vec<Eigenpair>,
    pub strategy: SolveStrategy,
    pub a_norm: f64,
    pub b_norm: f64,
}

impl PencilSpectrum {
    pub fn finite_values(&self) -> Vec<C64> {
        self.pairs.iter().filter_map(|p| p.value).collect()
    }

    pub fn count_infinite(&self) -> usize {
        self.pairs.iter().filter(|p| p.value.is_none()).count()
    }

    /// Finite eigenvalues with `|λ| > threshold·‖A‖/‖B‖`: the numerical
    /// image of defective infinite eigenvalues, which split to roughly
    /// `ε_mach^{-1/2}` scale.
    pub fn count_near_infinite(&self, threshold: f64) -> usize {
        let s = threshold * self.a_norm / self.b_norm;
        self.finite_values().iter().filter(|v| v.norm() > s).count()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    pub vectors: bool,
    pub max_dim: usize,
    /// An eigenvalue is infinite when `|β|‖A‖ ≤ tol·|α|‖B‖`.
    pub infinite_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { vectors: false, max_dim: DEFAULT_MAX_DIM, infinite_tol: 1e-10 }
    }
}

fn sort_pairs(pairs: &mut [Eigenpair]) {
    let key = |p: &Eigenpair| match p.value {
        Some(v) => (0u8, v.re, v.im),
        None => (1u8, 0.0, 0.0),
    };
    pairs.sort_by(|x, y| {
        let (a, b) = (key(x), key(y));
        a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.total_cmp(&b.2))
    });
}

/// Dense eigensolve of `(A, B)`. Eigenvalues are sorted by real part, then
/// imaginary part, with infinite ones last.
pub fn solve_dense_pencil(p: &PencilAssembly, opts: SolveOptions) -> Result<PencilSpectrum> {
    let dim = p.dim();
    if dim > opts.max_dim {
        return Err(Error::DimensionCap { dim, cap: opts.max_dim });
    }
    let a_norm = p.a_norm();
    let b_norm = p.b_norm();
    let solver = |e: faer::linalg::evd::EvdError| Error::Solver(format!("{e:?}"));
    let mut pairs = Vec::with_capacity(dim);
    let strategy = if p.is_b_definite() {
        let s: Vec<f64> = p.b.iter().map(|x| 1.0 / x.sqrt()).collect();
        let h = Mat::<C64>::from_fn(dim, dim, |i, j| p.a[(i, j)] * (s[i] * s[j]));
        if opts.vectors {
            let (w, u) = linalg::hermitian_eigen(&h)?;
            for (k, &wk) in w.iter().enumerate() {
                let v = (0..dim).map(|i| u[(i, k)] * s[i]).collect();
                pairs.push(Eigenpair { value: Some(C64::new(wk, 0.0)), vector: Some(v) });
            }
        } else {
            for wk in linalg::hermitian_eigenvalues(&h)? {
                pairs.push(Eigenpair { value: Some(C64::new(wk, 0.0)), vector: None });
            }
        }
        SolveStrategy::HermitianReduction
    } else if !p.is_b_singular() {
        let m = Mat::<C64>::from_fn(dim, dim, |i, j| p.a[(i, j)] / p.b[i]);
        if opts.vectors {
            let e = m.eigen().map_err(solver)?;
            let (s, u) = (e.S(), e.U());
            for k in 0..dim {
                pairs.push(Eigenpair { value: Some(s[k]), vector: Some(linalg::col_vec(u, k)) });
            }
        } else {
            for v in m.eigenvalues().map_err(solver)? {
                pairs.push(Eigenpair { value: Some(v), vector: None });
            }
        }
        SolveStrategy::Standard
    } else {
        // λ = σ + 1/μ with μ an eigenvalue of (A − σB)⁻¹B; infinite λ ↦ μ = 0
        let sigma = C64::new(0.37, 0.61) * (a_norm / b_norm);
        let shifted = Mat::<C64>::from_fn(dim, dim, |i, j| if i == j { p.a[(i, j)] - sigma * p.b[i] } else { p.a[(i, j)] });
        let m = shifted.partial_piv_lu().solve(p.b_dense());
        let cut = opts.infinite_tol * b_norm / a_norm;
        let value = |mu: C64| if mu.norm() <= cut { None } else { Some(sigma + mu.inv()) };
        if opts.vectors {
            let e = m.eigen().map_err(solver)?;
            let (s, u) = (e.S(), e.U());
            for k in 0..dim {
                pairs.push(Eigenpair { value: value(s[k]), vector: Some(linalg::col_vec(u, k)) });
            }
        } else {
            for mu in m.eigenvalues().map_err(solver)? {
                pairs.push(Eigenpair { value: value(mu), vector: None });
            }
        }
        SolveStrategy::ShiftInvert
    };
    if opts.vectors {
        for pr in &mut pairs {
            if let Some(v) = pr.vector.as_mut() {
                let nrm = vnorm(v);
                if nrm > 0.0 {
                    v.iter_mut().for_each(|x| *x /= nrm);
                }
            }
        }
    }
    sort_pairs(&mut pairs);
    Ok(PencilSpectrum { pairs, strategy, a_norm, b_norm })
}

/// `‖Ax − λBx‖/((‖A‖ + |λ|‖B‖)‖x‖)`; for an infinite eigenvalue `‖Bx‖/(‖B‖‖x‖)`.
pub fn pair_residual(p: &PencilAssembly, value: Option<C64>, x: &[C64]) -> f64 {
    let nx = vnorm(x);
    match value {
        Some(l) => {
            let ax = linalg::matvec(&p.a, x);
            let r: Vec<C64> = ax.iter().zip(x).zip(&p.b).map(|((a, xi), b)| a - l * b * xi).collect();
            vnorm(&r) / ((p.a_norm() + l.norm() * p.b_norm()) * nx)
        }
        None => {
            let bx: Vec<C64> = x.iter().zip(&p.b).map(|(xi, b)| xi * b).collect();
            vnorm(&bx) / (p.b_norm() * nx)
        }
    }
}

/// Sign of `xᴴBx` for a unit vector: `Some(±1)` when `|xᴴBx| > 1e-8`.
pub fn sign_characteristic(p: &PencilAssembly, x: &[C64]) -> Option<i8> {
    sign_of_form(&p.b, x)
}

/// Sign of `xᴴdiag(b)x/‖x‖²` with the same `1e-8` dead zone.
pub fn sign_of_form(b: &[f64], x: &[C64]) -> Option<i8> {
    let nx = vnorm(x);
    if nx == 0.0 {
        return None;
    }
    let q: f64 = x.iter().zip(b).map(|(xi, b)| b * xi.norm_sqr()).sum::<f64>() / (nx * nx);
    if q > 1e-8 {
        Some(1)
    } else if q < -1e-8 {
        Some(-1)
    } else {
        None
    }
}

/// Diagonal of `B_γ`.
pub fn b_diagonal(mask: &MaterialMask, gamma: f64) -> Vec<f64> {
    let mut b = vec![1.0; 3 * mask.len()];
    b.extend(mask.phi_diag(gamma));
    b
}

/// `eᴴIⁱCe` helper used by the imaginary-axis checks.
pub fn inside_curl_form(disc: &Discretization, mask: &MaterialMask, e: &[C64]) -> Result<C64> {
    let ce = disc.curl().apply(e)?;
    let ie: Vec<C64> = e.iter().zip(mask.inside3()).map(|(x, f)| if f { *x } else { ZERO }).collect();
    Ok(vdot(&ie, &ce))
}
