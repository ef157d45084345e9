//! Cross-module invariant checks shared by the `verify` command and the
//! acceptance suite.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::lattice::MaterialMask;
use crate::linalg::{self, frob, ZERO};
use crate::nfgep::assemble_nfgep;
use crate::pencil::{assemble_pencil, solve_dense_pencil, SolveOptions};
use crate::{Discretization, C64};

/// One named residual with its threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tol: f64,
    pub pass: bool,
}

impl Check {
    /// `value ≤ tol`.
    pub fn below(name: impl Into<String>, value: f64, tol: f64) -> Self {
        Self { name: name.into(), value, tol, pass: value <= tol }
    }

    /// Exact equality of counts, reported as `|got − want|` with tolerance 0.
    pub fn count(name: impl Into<String>, got: usize, want: usize) -> Self {
        let d = got.abs_diff(want) as f64;
        Self { name: name.into(), value: d, tol: 0.0, pass: d == 0.0 }
    }
}

/// `max_ℓ‖TᴴC_ℓT − Λ_ℓ‖_F / max_ℓ‖C_ℓ‖_F`.
pub fn diagonalization_residual(disc: &Discretization) -> f64 {
    let t = disc.dense_t();
    let lam = disc.spectral().lambda_diagonals();
    let n = disc.n();
    let mut worst = 0.0f64;
    let mut cmax = 0.0f64;
    for (l, lam_l) in lam.iter().enumerate() {
        let c = disc.curl().block(l).to_dense();
        cmax = cmax.max(frob(&c));
        let mut d = t.adjoint() * &c * t;
        for i in 0..n {
            d[(i, i)] -= lam_l[i];
        }
        worst = worst.max(frob(&d));
    }
    worst / cmax
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvdCheck {
    /// `‖C − P_rΣQ_rᴴ‖_F / ‖C‖_F`.
    pub factor_rel: f64,
    /// `‖CQ₀‖_F / ‖C‖_F`.
    pub kernel_rel: f64,
    pub rank: usize,
    /// `‖[Q_r Q₀]ᴴ[Q_r Q₀] − I‖_max`.
    pub unitarity_q: f64,
    pub unitarity_p: f64,
}

pub fn svd_check(disc: &Discretization) -> Result<SvdCheck> {
    let c = disc.dense_c();
    let (pr, qr, p0, q0) = (disc.pr()?, disc.qr()?, disc.p0()?, disc.q0()?);
    let sig = disc.svd()?.sigma2();
    let sm = Mat::<C64>::from_fn(sig.len(), sig.len(), |i, j| if i == j { C64::new(sig[i], 0.0) } else { ZERO });
    let cn = frob(c);
    Ok(SvdCheck {
        factor_rel: frob(&(c - pr * &sm * qr.adjoint())) / cn,
        kernel_rel: frob(&(c * q0)) / cn,
        rank: linalg::rank(c, 1e-10)?,
        unitarity_q: linalg::unitarity_defect(&linalg::hcat(&[qr, q0])),
        unitarity_p: linalg::unitarity_defect(&linalg::hcat(&[pr, p0])),
    })
}

/// Zero/positive/negative counts of the dense pencil spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumCensus {
    pub gamma: f64,
    pub zero: usize,
    pub positive: usize,
    pub negative: usize,
    pub nonreal: usize,
    pub infinite: usize,
    /// Absolute threshold separating zero from nonzero eigenvalues.
    pub zero_tol: f64,
}

/// Classify the spectrum at `γ` with zero class `|λ| ≤ rel_tol·‖A‖`.
pub fn spectrum_census(disc: &Discretization, mask: &MaterialMask, gamma: f64, rel_tol: f64, max_dim: usize) -> Result<SpectrumCensus> {
    let p = assemble_pencil(disc, mask, gamma)?;
    let sp = solve_dense_pencil(&p, SolveOptions { max_dim, ..Default::default() })?;
    let zt = rel_tol * p.a_norm();
    let vals = sp.finite_values();
    let real = |v: &C64| v.im.abs() <= zt.max(1e-9 * v.re.abs());
    Ok(SpectrumCensus {
        gamma,
        zero: vals.iter().filter(|v| v.norm() <= zt).count(),
        positive: vals.iter().filter(|v| v.norm() > zt && real(v) && v.re > 0.0).count(),
        negative: vals.iter().filter(|v| v.norm() > zt && real(v) && v.re < 0.0).count(),
        nonreal: vals.iter().filter(|v| v.norm() > zt && !real(v)).count(),
        infinite: sp.count_infinite(),
        zero_tol: zt,
    })
}

/// Largest relative mismatch between the nonzero spectrum of `(A, B)` and
/// the spectrum of the reduced problem, after optimal one-to-one matching.
/// Returns `INFINITY` when the counts differ.
pub fn nfgep_mismatch(disc: &Discretization, mask: &MaterialMask, gamma: f64, max_dim: usize) -> Result<f64> {
    let red = assemble_nfgep(disc, mask, gamma)?.solve(false)?;
    let full = solve_dense_pencil(&assemble_pencil(disc, mask, gamma)?, SolveOptions { max_dim, ..Default::default() })?;
    let fin = full.finite_values();
    let scale = fin.iter().fold(0.0f64, |a, v| a.max(v.norm())).max(f64::MIN_POSITIVE);
    let nz: Vec<C64> = fin.into_iter().filter(|v| v.norm() > 1e-8 * scale).collect();
    if nz.len() != red.values.len() || nz.is_empty() {
        return Ok(if nz.len() == red.values.len() { 0.0 } else { f64::INFINITY });
    }
    let cost: Vec<Vec<f64>> = red.values.iter().map(|a| nz.iter().map(|b| (a - b).norm()).collect()).collect();
    let p = crate::assignment::solve(&cost);
    Ok(p.iter().enumerate().map(|(i, &j)| cost[i][j] / nz[j].norm()).fold(0.0, f64::max))
}
