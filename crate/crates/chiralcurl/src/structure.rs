//! Eigenstructure certificates at and beyond `γ*`: null spaces, regularity,
//! Jordan blocks at infinity, inertia, the coupling matrices `U₀, U₁, U₂`,
//! and the segment/rank sufficient condition for regularity.

use faer::Mat;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::lattice::{classify_boundary_with, MaterialMask};
use crate::linalg::{self, hcat, vcat, I, ZERO};
use crate::pencil::{assemble_pencil, sign_characteristic, solve_dense_pencil, PencilAssembly, SolveOptions};
use crate::Discretization;

/// Threshold on principal-angle sines for the null intersection.
pub const ANGLE_TOL: f64 = 1e-8;
/// Relative threshold for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

/// `L_γ = [[−iγIⁱQ₀, P₀], [Q₀, 0]]` (6n×2n); its columns span the trivial
/// zero eigenspace of `(A_γ, B_γ)`.
pub fn null_basis(disc: &Discretization, mask: &MaterialMask, gamma: f64) -> Result<Mat<C64>> {
    check_len(disc.n(), mask.len())?;
    let q0 = disc.q0()?;
    let p0 = disc.p0()?;
    let d: Vec<C64> = mask.inside3().into_iter().map(|f| if f { -I * gamma } else { ZERO }).collect();
    let top = hcat(&[&linalg::scale_rows(q0, &d), p0]);
    let bottom = hcat(&[q0, &Mat::zeros(q0.nrows(), p0.ncols())]);
    Ok(vcat(&[&top, &bottom]))
}

/// Rows of the pencil space spanned by `𝒩(B_{γ*}) = [0; I₃⊗I_σ⁽ⁱ⁾]`.
pub fn null_b_rows(mask: &MaterialMask) -> Vec<usize> {
    let m = 3 * mask.len();
    mask.inside3().into_iter().enumerate().filter(|&(_, f)| f).map(|(k, _)| m + k).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegularityReport {
    pub is_regular: bool,
    pub dim_intersection: usize,
    /// Smallest sine of the principal angles between `range(L_{γ*})` and
    /// `𝒩(B_{γ*})`.
    pub min_sine: f64,
}

/// Decide regularity of `(A_{γ*}, B_{γ*})` through
/// `dim(null A ∩ null B)`. With an orthonormal basis `Q_L` of
/// `range(L_{γ*})`, the sines of the principal angles to the coordinate
/// subspace `𝒩(B)` are the singular values of `Q_L` restricted to the
/// complementary rows.
pub fn regularity_test(disc: &Discretization, mask: &MaterialMask) -> Result<RegularityReport> {
    if mask.n_inside() == 0 {
        return Ok(RegularityReport { is_regular: true, dim_intersection: 0, min_sine: 1.0 });
    }
    let l = null_basis(disc, mask, mask.gamma_star())?;
    let q = linalg::thin_q(&l);
    let nb: std::collections::HashSet<usize> = null_b_rows(mask).into_iter().collect();
    let rows: Vec<usize> = (0..l.nrows()).filter(|r| !nb.contains(r)).collect();
    let qo = linalg::select_rows(&q, &rows);
    let s = linalg::singular_values(&qo)?;
    let k = q.ncols();
    let missing = k.saturating_sub(s.len());
    let dim = missing + s.iter().filter(|&&x| x <= ANGLE_TOL).count();
    let min_sine = if missing > 0 { 0.0 } else { s.iter().copied().fold(f64::INFINITY, f64::min) };
    Ok(RegularityReport { is_regular: dim == 0, dim_intersection: dim, min_sine })
}

/// `−γ*(I₃⊗I_σ⁽ⁱ⁾)ᴴ[C + Cᴴ](I₃⊗I_σ⁽ⁱ⁾)`, which equals `𝒩(B)ᴴA_{γ*}𝒩(B)`.
pub fn jordan_matrix(disc: &Discretization, mask: &MaterialMask) -> Mat<C64> {
    let c = disc.dense_c();
    let idx: Vec<usize> = mask.inside3().into_iter().enumerate().filter(|&(_, f)| f).map(|(k, _)| k).collect();
    let g = mask.gamma_star();
    Mat::from_fn(idx.len(), idx.len(), |i, j| {
        let (r, s) = (idx[i], idx[j]);
        -(c[(r, s)] + c[(s, r)].conj()) * g
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JordanReport {
    pub nullity: usize,
    /// `Some(nullity > 0)` when the pencil is known to be regular.
    pub has_defective_infinity: Option<bool>,
    /// First interior node of `𝒟ᵢ` (0-based offset), if any.
    pub interior_witness: Option<usize>,
    /// `‖Bv‖/‖v‖` for the witness `v = [0; Me_j]`.
    pub witness_b_residual: Option<f64>,
    /// Size of the component of `Av` in `𝒩(B)`, relative to `‖A‖‖v‖`.
    pub witness_range_residual: Option<f64>,
}

/// Witness vector `[0; Me_j]` of length `6n`.
pub fn witness_vector(disc: &Discretization, j: usize) -> Vec<C64> {
    let m = 3 * disc.n();
    let mut v = vec![ZERO; m];
    v.extend(disc.curl().m_column(j));
    v
}

/// Nullity of `𝒩(B)ᴴA𝒩(B)` and the interior-node witness.
pub fn jordan_block_test(disc: &Discretization, mask: &MaterialMask, regular: Option<bool>) -> Result<JordanReport> {
    check_len(disc.n(), mask.len())?;
    if mask.n_inside() == 0 {
        return Ok(JordanReport {
            nullity: 0,
            has_defective_infinity: Some(false),
            interior_witness: None,
            witness_b_residual: None,
            witness_range_residual: None,
        });
    }
    let h = jordan_matrix(disc, mask);
    let w = linalg::hermitian_eigenvalues(&h)?;
    let top = w.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let nullity = w.iter().filter(|x| x.abs() <= RANK_TOL * top.max(f64::MIN_POSITIVE)).count();
    let table = disc.curl().neighbor_table();
    let (_, interior) = classify_boundary_with(mask, &table);
    let witness = interior.first().copied();
    let (mut wb, mut wr) = (None, None);
    if let Some(j) = witness {
        let p = assemble_pencil(disc, mask, mask.gamma_star())?;
        let v = witness_vector(disc, j);
        let (b_res, r_res) = witness_residuals(&p, mask, &v);
        wb = Some(b_res);
        wr = Some(r_res);
    }
    Ok(JordanReport {
        nullity,
        has_defective_infinity: regular.filter(|&r| r).map(|_| nullity > 0),
        interior_witness: witness,
        witness_b_residual: wb,
        witness_range_residual: wr,
    })
}

/// `(‖Bv‖/‖v‖, ‖(Av)|_{𝒩(B)}‖/(‖A‖‖v‖))`.
pub fn witness_residuals(p: &PencilAssembly, mask: &MaterialMask, v: &[C64]) -> (f64, f64) {
    let nv = linalg::vnorm(v);
    let bv: Vec<C64> = v.iter().zip(&p.b).map(|(x, b)| x * b).collect();
    let av = linalg::matvec(&p.a, v);
    let on_null: Vec<C64> = null_b_rows(mask).into_iter().map(|r| av[r]).collect();
    (linalg::vnorm(&bv) / nv, linalg::vnorm(&on_null) / (p.a_norm() * nv))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainReport {
    /// Dimension of the kernel of `𝒩(B)ᴴA𝒩(B)`.
    pub kernel_dim: usize,
    /// Smallest singular value of `KᴴF`, relative to `‖A‖²/ min_{B_ii ≠ 0}|B_ii|`.
    pub min_singular: f64,
    pub has_chain_of_length_three: bool,
}

/// Test for a Jordan chain `Bu = 0, Bv = Au, Bw = Av` of length three at
/// infinity. With `K` spanning `null(𝒩(B)ᴴA𝒩(B))`, such a chain exists iff
/// `Kᴴ𝒩(B)ᴴAB⁺A𝒩(B)K` is singular.
pub fn jordan_chain_bound(disc: &Discretization, mask: &MaterialMask) -> Result<ChainReport> {
    let h = jordan_matrix(disc, mask);
    let k = if h.nrows() == 0 { Mat::zeros(0, 0) } else { linalg::null_space(&h, RANK_TOL)? };
    if k.ncols() == 0 {
        return Ok(ChainReport { kernel_dim: 0, min_singular: f64::INFINITY, has_chain_of_length_three: false });
    }
    let p = assemble_pencil(disc, mask, mask.gamma_star())?;
    let rows = null_b_rows(mask);
    let dim = p.dim();
    // 𝒩(B)K as a 6n×k matrix
    let nk = Mat::<C64>::from_fn(dim, k.ncols(), |i, j| match rows.binary_search(&i) {
        Ok(r) => k[(r, j)],
        Err(_) => ZERO,
    });
    let ank = &p.a * &nk;
    let bplus: Vec<C64> = p.b.iter().map(|&b| if b == 0.0 { ZERO } else { C64::new(1.0 / b, 0.0) }).collect();
    let x = &p.a * linalg::scale_rows(&ank, &bplus);
    let f = linalg::select_rows(&x, &rows);
    let kf = k.adjoint() * &f;
    let s = linalg::singular_values(&kf)?;
    let bmin = p.b.iter().filter(|&&b| b != 0.0).fold(f64::INFINITY, |a, &b| a.min(b.abs()));
    let scale = p.a_norm().powi(2) / bmin;
    let smin = s.iter().copied().fold(f64::INFINITY, f64::min) / scale;
    Ok(ChainReport { kernel_dim: k.ncols(), min_singular: smin, has_chain_of_length_three: smin <= RANK_TOL })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Census {
    pub count_infinite: usize,
    /// Finite eigenvalues so large that they are the numerical image of a
    /// defective infinite eigenvalue (`|λ| > 10⁵‖A‖/‖B‖`).
    pub count_near_infinite: usize,
    pub bound: usize,
    pub count_defective: usize,
    /// Finite real eigenvalues with `μ = +1` (reported, not asserted).
    pub finite_positive_type: usize,
}

/// Infinite-eigenvalue census of the dense solve at `γ*`.
pub fn infinite_eigen_census(disc: &Discretization, mask: &MaterialMask, max_dim: usize) -> Result<Census> {
    let p = assemble_pencil(disc, mask, mask.gamma_star())?;
    let sp = solve_dense_pencil(&p, SolveOptions { vectors: true, max_dim, ..Default::default() })?;
    let near = sp.count_near_infinite(1e5);
    let scale = sp.a_norm / sp.b_norm;
    let mut pos = 0;
    for pr in &sp.pairs {
        if let (Some(v), Some(x)) = (pr.value, pr.vector.as_ref()) {
            if v.im.abs() <= 1e-9 * (1.0 + v.re.abs()) && v.norm() <= 1e5 * scale && sign_characteristic(&p, x) == Some(1) {
                pos += 1;
            }
        }
    }
    let jt = jordan_block_test(disc, mask, None)?;
    Ok(Census {
        count_infinite: sp.count_infinite(),
        count_near_infinite: near,
        bound: 6 * mask.n_inside(),
        count_defective: jt.nullity,
        finite_positive_type: pos,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InertiaSignature {
    pub p_plus: usize,
    pub p_minus: usize,
    pub p_zero: usize,
    pub tol: f64,
}

/// Inertia with zero class `|λ| ≤ tol·max|λ|`.
pub fn inertia(h: &Mat<C64>, tol: f64) -> Result<InertiaSignature> {
    let scale = h.norm_max().max(f64::MIN_POSITIVE);
    if linalg::hermitian_defect(h) > 1e-12 * scale {
        return Err(Error::InvalidArgument("inertia requires a Hermitian matrix".into()));
    }
    let w = linalg::hermitian_eigenvalues(h)?;
    Ok(inertia_of_values(&w, tol))
}

pub fn inertia_of_values(w: &[f64], tol: f64) -> InertiaSignature {
    let top = w.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let t = tol * top;
    let p_plus = w.iter().filter(|&&x| x > t).count();
    let p_minus = w.iter().filter(|&&x| x < -t).count();
    InertiaSignature { p_plus, p_minus, p_zero: w.len() - p_plus - p_minus, tol }
}

#[derive(Clone, Debug)]
pub struct UMatrices {
    /// `(I₃⊗I⁽ᵒ⁾)Q₀` (3n×n).
    pub u0: Mat<C64>,
    /// `P_rᴴ(I₃⊗I⁽ⁱ⁾)Q₀` (2n×n).
    pub u1: Mat<C64>,
    /// `P₀ᴴ(I₃⊗I⁽ⁱ⁾)Q₀` (n×n).
    pub u2: Mat<C64>,
    pub rank_u2: usize,
    pub norm_u2: f64,
}

fn mask_rows(m: &Mat<C64>, keep: &[bool]) -> Mat<C64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| if keep[i] { m[(i, j)] } else { ZERO })
}

pub fn u_matrices(disc: &Discretization, mask: &MaterialMask) -> Result<UMatrices> {
    check_len(disc.n(), mask.len())?;
    let q0 = disc.q0()?;
    let inside = mask.inside3();
    let outside: Vec<bool> = inside.iter().map(|f| !f).collect();
    let iq0 = mask_rows(q0, &inside);
    let u0 = mask_rows(q0, &outside);
    let u1 = disc.pr()?.adjoint() * &iq0;
    let u2 = disc.p0()?.adjoint() * &iq0;
    let s = linalg::singular_values(&u2)?;
    let norm_u2 = s.first().copied().unwrap_or(0.0);
    let rank_u2 = if norm_u2 == 0.0 { 0 } else { s.iter().filter(|&&x| x > RANK_TOL * norm_u2).count() };
    Ok(UMatrices { u0, u1, u2, rank_u2, norm_u2 })
}

/// `U₂` from the Gram matrix `G = TᴴI⁽ⁱ⁾T`: `U₂ = Σ_ℓ diag(π₀,ℓ) G diag(π₀,ℓ)`.
pub fn u2_via_gram(disc: &Discretization, mask: &MaterialMask) -> Result<Mat<C64>> {
    let t = disc.dense_t();
    let d: Vec<C64> = mask.inside_flags().iter().map(|&f| if f { C64::new(1.0, 0.0) } else { ZERO }).collect();
    let g = t.adjoint() * linalg::scale_rows(t, &d);
    let pi0 = &disc.svd()?.pi0;
    Ok(Mat::from_fn(g.nrows(), g.ncols(), |i, j| {
        let s: C64 = (0..3).map(|l| pi0[i][l] * pi0[j][l]).sum();
        g[(i, j)] * s
    }))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CongruenceReport {
    pub gamma: f64,
    pub alpha: f64,
    pub pencil: InertiaSignature,
    pub block_form: InertiaSignature,
    pub matches: bool,
}

/// Compare `inertia(A_γ − αB_γ)` with the inertia of
/// `diag(−αI₃ₙ, Σ²/α, −α[εₒU₀ᴴU₀ + εᵢU₁ᴴU₁ + (εᵢ−γ²)U₂ᴴU₂])`.
pub fn small_alpha_congruence(disc: &Discretization, mask: &MaterialMask, gamma: f64, alpha: f64, tol: f64) -> Result<CongruenceReport> {
    if alpha == 0.0 || !alpha.is_finite() {
        return Err(Error::InvalidArgument("alpha must be finite and nonzero".into()));
    }
    let p = assemble_pencil(disc, mask, gamma)?;
    let lhs = inertia(&linalg::hermitize(&p.shifted(alpha)), tol)?;
    let u = u_matrices(disc, mask)?;
    let third = faer::Scale(C64::new(mask.eps_o(), 0.0)) * (u.u0.adjoint() * &u.u0)
        + faer::Scale(C64::new(mask.eps_i(), 0.0)) * (u.u1.adjoint() * &u.u1)
        + faer::Scale(C64::new(mask.eps_i() - gamma * gamma, 0.0)) * (u.u2.adjoint() * &u.u2);
    let w3 = linalg::hermitian_eigenvalues(&third)?;
    let n = disc.n();
    // blocks differ in scale by 1/α², so classify each block on its own
    let b1 = inertia_of_values(&vec![-alpha; 3 * n], tol);
    let s2: Vec<f64> = disc.svd()?.sigma2().iter().map(|s| s * s / alpha).collect();
    let b2 = inertia_of_values(&s2, tol);
    let w3: Vec<f64> = w3.iter().map(|x| -alpha * x).collect();
    let b3 = inertia_of_values(&w3, tol);
    let rhs = InertiaSignature {
        p_plus: b1.p_plus + b2.p_plus + b3.p_plus,
        p_minus: b1.p_minus + b2.p_minus + b3.p_minus,
        p_zero: b1.p_zero + b2.p_zero + b3.p_zero,
        tol,
    };
    Ok(CongruenceReport { gamma, alpha, pencil: lhs, block_form: rhs, matches: lhs.p_plus == rhs.p_plus && lhs.p_minus == rhs.p_minus && lhs.p_zero == rhs.p_zero })
}

/// Label of the singular-`Λ` case split: `I` (no `Λ_ℓ` singular), `II-ℓ`
/// (only `Λ_ℓ` singular), `III-ℓ` (only `Λ_ℓ` nonsingular) or `IV`.
pub fn case_label(lambda: &[Vec<C64>; 3], delta: [f64; 3]) -> String {
    let sing: Vec<bool> = (0..3).map(|l| lambda[l].iter().any(|z| z.norm() <= 1e-12 / delta[l])).collect();
    match sing.iter().filter(|&&s| s).count() {
        0 => "I".into(),
        1 => format!("II-{}", sing.iter().position(|&s| s).unwrap() + 1),
        2 => format!("III-{}", sing.iter().position(|&s| !s).unwrap() + 1),
        _ => "IV".into(),
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Names of the eight rank checks, in report order.
pub const U_CHECK_NAMES: [&str; 8] = ["n123", "n12", "n23", "n13", "n1", "n2", "n3", "1"];

/// Sizes `m` and active axes of the eight Vandermonde-product matrices.
pub fn u_check_sizes(dims: [usize; 3], m1: i64, m2: i64, mhat1: i64) -> [(usize, [bool; 3]); 8] {
    let nh = [dims[0], dims[1] + m1 as usize, dims[2] + (m2 + mhat1) as usize];
    [
        (gcd(gcd(nh[0], nh[1]), nh[2]), [true, true, true]),
        (gcd(nh[0], nh[1]), [true, true, false]),
        (gcd(nh[1], nh[2]), [false, true, true]),
        (gcd(nh[0], nh[2]), [true, false, true]),
        (dims[0], [true, false, false]),
        (dims[1], [false, true, false]),
        (dims[2], [false, false, true]),
        (1, [false, false, false]),
    ]
}

/// `U_m` with columns `V_{n₃}(x₃)⊗V_{n₂}(x₂)⊗V_{n₁}(x₁)`, `x_ℓ = η_m^p` on the
/// active axes and `1` elsewhere, `p = 1..m`.
pub fn vandermonde_product(dims: [usize; 3], m: usize, active: [bool; 3]) -> Mat<C64> {
    let [n1, n2, n3] = dims;
    let n = n1 * n2 * n3;
    Mat::from_fn(n, m, |row, col| {
        let p = (col + 1) as f64;
        let a = [row % n1, (row / n1) % n2, row / (n1 * n2)];
        let mut ph = 0.0;
        for l in 0..3 {
            if active[l] {
                ph += a[l] as f64 * p / m as f64;
            }
        }
        C64::from_polar(1.0, 2.0 * std::f64::consts::PI * ph)
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AppendixReport {
    /// Whether a full index line along axis ℓ lies in `𝒟ₒ`.
    pub segments: [bool; 3],
    /// One such line per axis as the fixed pair of the other two 1-based coordinates.
    pub segment_lines: [Option<[usize; 2]>; 3],
    /// Full-column-rank flags of `I⁽ᵒ⁾U` in the order of [`U_CHECK_NAMES`].
    pub u_rank_flags: [bool; 8],
    pub u_sizes: [usize; 8],
    pub case_label: String,
    pub regularity_guaranteed: bool,
}

fn find_line(mask: &MaterialMask, dims: [usize; 3], axis: usize) -> Option<[usize; 2]> {
    let map = crate::lattice::IndexMap::new(dims);
    let (a, b) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    for u in 1..=dims[a] {
        for v in 1..=dims[b] {
            let all_out = (1..=dims[axis]).all(|t| {
                let mut c = [0i64; 3];
                c[axis] = t as i64;
                c[a] = u as i64;
                c[b] = v as i64;
                !mask.is_inside(map.offset(c))
            });
            if all_out {
                return Some([u, v]);
            }
        }
    }
    None
}

/// Segment search plus the eight rank checks.
pub fn appendix_condition(disc: &Discretization, mask: &MaterialMask) -> Result<AppendixReport> {
    check_len(disc.n(), mask.len())?;
    let spec = disc.spec();
    let dims = spec.dims();
    let lines = [find_line(mask, dims, 0), find_line(mask, dims, 1), find_line(mask, dims, 2)];
    let segments = lines.map(|l| l.is_some());
    let outside = mask.outside_indices();
    let s = spec.shifts();
    let sizes = u_check_sizes(dims, s.m1(), s.m2, spec.mhat1());
    let mut flags = [false; 8];
    let mut u_sizes = [0; 8];
    for (i, &(m, active)) in sizes.iter().enumerate() {
        u_sizes[i] = m;
        if outside.len() < m {
            continue;
        }
        let u = linalg::select_rows(&vandermonde_product(dims, m, active), &outside);
        flags[i] = linalg::rank(&u, RANK_TOL)? == m;
    }
    let lambda = disc.spectral().lambda_diagonals();
    let label = case_label(&lambda, spec.delta());
    let guaranteed = mask.n_inside() == 0 || (segments.iter().all(|&b| b) && flags.iter().all(|&b| b));
    Ok(AppendixReport { segments, segment_lines: lines, u_rank_flags: flags, u_sizes, case_label: label, regularity_guaranteed: guaranteed })
}

/// Everything reported by the `analyze` command.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegularityCertificate {
    pub dim_intersection: usize,
    pub is_regular: bool,
    pub min_sine: f64,
    pub jordan: JordanReport,
    pub geometry: AppendixReport,
    pub rank_u2: usize,
    pub norm_u2: f64,
    pub census: Option<Census>,
}

pub fn certificate(disc: &Discretization, mask: &MaterialMask, census_max_dim: Option<usize>) -> Result<RegularityCertificate> {
    let reg = regularity_test(disc, mask)?;
    let jordan = jordan_block_test(disc, mask, Some(reg.is_regular))?;
    let geometry = appendix_condition(disc, mask)?;
    let u = u_matrices(disc, mask)?;
    let census = match census_max_dim {
        Some(cap) if 6 * disc.n() <= cap => Some(infinite_eigen_census(disc, mask, cap)?),
        _ => None,
    };
    Ok(RegularityCertificate {
        dim_intersection: reg.dim_intersection,
        is_regular: reg.is_regular,
        min_sine: reg.min_sine,
        jordan,
        geometry,
        rank_u2: u.rank_u2,
        norm_u2: u.norm_u2,
        census,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::lattice::LatticeSpec;
    use proptest::prelude::*;

    fn cubic(n: usize) -> Discretization {
        Discretization::new(LatticeSpec::simple_cubic([n, n, n], fixtures::K_FRAC).unwrap()).unwrap()
    }

    #[test]
    fn null_basis_annihilated_by_a() {
        let d = cubic(3);
        let m = MaterialMask::from_nodes(d.spec().index_map(), &[[2, 2, 2], [1, 2, 2]], 13.0, 1.0).unwrap();
        for g in [0.0, 1.5, 4.0] {
            let l = null_basis(&d, &m, g).unwrap();
            let p = assemble_pencil(&d, &m, g).unwrap();
            assert!(linalg::frob(&(&p.a * &l)) < 1e-10 * p.a_norm());
            assert_eq!(linalg::rank(&l, 1e-10).unwrap(), 2 * d.n());
        }
    }

    #[test]
    fn jordan_matrix_matches_pencil_block() {
        let d = cubic(4);
        let m = fixtures::interior_mask(d.spec());
        let p = assemble_pencil(&d, &m, m.gamma_star()).unwrap();
        let rows = null_b_rows(&m);
        let direct = linalg::select_cols(&linalg::select_rows(&p.a, &rows), &rows);
        assert!(linalg::max_abs_diff(&direct, &jordan_matrix(&d, &m)) < 1e-12 * p.a_norm());
    }

    #[test]
    fn interior_node_gives_jordan_block_and_witness() {
        let d = cubic(4);
        let m = fixtures::interior_mask(d.spec());
        let r = jordan_block_test(&d, &m, Some(true)).unwrap();
        assert!(r.nullity >= 1);
        assert_eq!(r.has_defective_infinity, Some(true));
        assert_eq!(r.interior_witness, Some(d.spec().index_map().offset([3, 3, 3])));
        assert!(r.witness_b_residual.unwrap() < 1e-10);
        assert!(r.witness_range_residual.unwrap() < 1e-10);
        let chain = jordan_chain_bound(&d, &m).unwrap();
        assert_eq!(chain.kernel_dim, r.nullity);
        assert!(!chain.has_chain_of_length_three);
    }

    #[test]
    fn empty_medium_is_trivial() {
        let d = cubic(3);
        let m = MaterialMask::empty(d.n(), 13.0, 1.0).unwrap();
        assert_eq!(regularity_test(&d, &m).unwrap().dim_intersection, 0);
        let j = jordan_block_test(&d, &m, None).unwrap();
        assert_eq!((j.nullity, j.has_defective_infinity), (0, Some(false)));
        let u = u_matrices(&d, &m).unwrap();
        assert_eq!(u.rank_u2, 0);
        assert!(linalg::max_abs_diff(&u.u0, d.q0().unwrap()) == 0.0);
        assert!(appendix_condition(&d, &m).unwrap().regularity_guaranteed);
        let c = infinite_eigen_census(&d, &m, 4000).unwrap();
        assert_eq!(c.count_infinite + c.count_near_infinite, 0);
    }

    #[test]
    fn full_medium_withholds_guarantee() {
        let d = cubic(3);
        let m = MaterialMask::full(d.n(), 13.0, 1.0).unwrap();
        let a = appendix_condition(&d, &m).unwrap();
        assert_eq!(a.segments, [false; 3]);
        assert!(!a.regularity_guaranteed);
    }

    #[test]
    fn u2_two_constructions_agree() {
        let d = Discretization::new(LatticeSpec::simple_cubic([5, 5, 5], [0.21, -0.13, 0.34]).unwrap()).unwrap();
        let m = fixtures::random_box_mask(d.spec(), 11, 0.15);
        let u = u_matrices(&d, &m).unwrap();
        let g = u2_via_gram(&d, &m).unwrap();
        assert!(linalg::max_abs_diff(&u.u2, &g) < 1e-12);
        assert!(u.norm_u2 > 0.0);
        let s = linalg::singular_values(&g).unwrap();
        let rank_g = s.iter().filter(|&&x| x > RANK_TOL * s[0]).count();
        assert_eq!(rank_g, u.rank_u2);
    }

    #[test]
    fn inertia_examples() {
        let h = Mat::<C64>::from_fn(3, 3, |i, j| if i == j { C64::new([1.0, -1.0, 0.0][i], 0.0) } else { ZERO });
        let s = inertia(&h, 1e-12).unwrap();
        assert_eq!((s.p_plus, s.p_minus, s.p_zero), (1, 1, 1));
        let bad = Mat::<C64>::from_fn(2, 2, |i, j| C64::new((i + 2 * j) as f64, 0.0));
        assert!(inertia(&bad, 1e-12).is_err());
    }

    #[test]
    fn sylvester_law() {
        use rand::{RngExt, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        let n = 50;
        let d: Vec<f64> = (0..n).map(|i| if i % 3 == 0 { -1.0 - i as f64 } else { 1.0 + i as f64 }).collect();
        let h = Mat::<C64>::from_fn(n, n, |i, j| if i == j { C64::new(d[i], 0.0) } else { ZERO });
        let x = Mat::<C64>::from_fn(n, n, |i, j| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) + if i == j { C64::new(3.0, 0.0) } else { ZERO });
        let g = linalg::hermitize(&(x.adjoint() * &h * &x));
        assert_eq!(inertia(&h, 1e-12).unwrap().p_plus, inertia(&g, 1e-12).unwrap().p_plus);
        assert_eq!(inertia(&h, 1e-12).unwrap().p_minus, inertia(&g, 1e-12).unwrap().p_minus);
    }

    #[test]
    fn congruence_small_grid() {
        let d = cubic(3);
        let m = MaterialMask::from_nodes(d.spec().index_map(), &fixtures::star_nodes([2, 2, 2]), 13.0, 1.0).unwrap();
        for g in [0.8 * m.gamma_star(), 1.3 * m.gamma_star()] {
            for a in [1e-6, -1e-6] {
                let r = small_alpha_congruence(&d, &m, g, a, 1e-12).unwrap();
                assert!(r.matches, "{r:?}");
            }
        }
        assert!(small_alpha_congruence(&d, &m, 1.0, 0.0, 1e-12).is_err());
    }

    #[test]
    fn case_labels() {
        let z = C64::new(0.0, 0.0);
        let o = C64::new(1.0, 0.0);
        let lam = [vec![o, o], vec![o, z], vec![o, o]];
        assert_eq!(case_label(&lam, [1.0; 3]), "II-2");
        let lam = [vec![z, o], vec![o, z], vec![o, o]];
        assert_eq!(case_label(&lam, [1.0; 3]), "III-3");
        let s = LatticeSpec::simple_cubic([4, 4, 4], [0.0, 0.1, 0.2]).unwrap();
        let l = crate::spectral::SpectralOps::new(&s).lambda_diagonals();
        assert_eq!(case_label(&l, s.delta()), "II-1");
    }

    #[test]
    fn sphere_with_open_corner_lines_is_guaranteed_and_regular() {
        let d = cubic(6);
        let m = crate::lattice::build_mask(&[crate::lattice::Shape::Sphere { center: [0.5, 0.5, 0.5], radius: 0.2 }], d.spec(), 13.0, 1.0).unwrap();
        let a = appendix_condition(&d, &m).unwrap();
        assert!(a.regularity_guaranteed, "{a:?}");
        assert_eq!(regularity_test(&d, &m).unwrap().dim_intersection, 0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn boundary_and_interior_partition(n1 in 3usize..8, n2 in 3usize..8, n3 in 3usize..8, seed in 0u64..1000, p in 0.1f64..0.9) {
            let s = LatticeSpec::simple_cubic([n1, n2, n3], [0.1, 0.2, 0.3]).unwrap();
            let m = fixtures::random_bernoulli_mask(s.n_total(), seed, p);
            let (b, i) = crate::lattice::classify_boundary(&m, &s);
            let mut all: Vec<usize> = b.iter().chain(i.iter()).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, m.inside_indices());
            prop_assert!(b.iter().all(|x| !i.contains(x)));
        }
    }
}
