//! The unitary basis `T` that simultaneously diagonalizes `C₁, C₂, C₃`, its
//! FFT-backed application, the diagonals `Λ_ℓ`, and the per-frequency SVD
//! factors of the block curl.
//!
//! Column `p = (p₁,p₂,p₃)` of `T` is
//! `n^{-1/2} V_{n₃}(x₃) ⊗ V_{n₂}(x₂) ⊗ V_{n₁}(x₁)` with
//!
//! ```text
//! x₁ = η_{n₁}^{κ₁+p₁}
//! x₂ = η_{n₂}^{κ₂+p₂} η_{n₁n₂}^{−m₁p₁}
//! x₃ = η_{n₃}^{κ₃+p₃} η_{n₂n₃}^{−m₂p₂} η_{n₁n₃}^{−m̂₁p₁} η_{n₁n₂n₃}^{m₁m₂p₁}
//! ```
//!
//! where `η_m^x = e^{2πix/m}` and `κ_ℓ = k·â_ℓ`. Applying `T` is a 3D inverse
//! DFT interleaved with two diagonal twiddles.

use std::f64::consts::PI;
use std::sync::Arc;

use faer::Mat;
use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

use crate::error::{check_len, Error, Result};
use crate::lattice::LatticeSpec;
use crate::linalg::ZERO;
use crate::par::{self, Execution};

fn eta(m: f64, x: f64) -> C64 {
    C64::from_polar(1.0, 2.0 * PI * x / m)
}

/// Dense or matrix-free access to `T` for a fixed lattice.
#[derive(Clone)]
pub struct SpectralOps {
    dims: [usize; 3],
    m1: i64,
    m2: i64,
    mhat1: i64,
    kappa: [f64; 3],
    delta: [f64; 3],
    inv: [Arc<dyn Fft<f64>>; 3],
    fwd: [Arc<dyn Fft<f64>>; 3],
    /// `e^{2πi Σ a_ℓ(κ_ℓ+1)/n_ℓ}/√n` per output offset.
    pre: Vec<C64>,
}

impl std::fmt::Debug for SpectralOps {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralOps").field("dims", &self.dims).field("kappa", &self.kappa).finish()
    }
}

impl SpectralOps {
    pub fn new(spec: &LatticeSpec) -> Self {
        let dims = spec.dims();
        let mut planner = FftPlanner::<f64>::new();
        let inv = dims.map(|d| planner.plan_fft_inverse(d));
        let fwd = dims.map(|d| planner.plan_fft_forward(d));
        let kappa = spec.kappa();
        let [n1, n2, n3] = dims;
        let n = n1 * n2 * n3;
        let scale = 1.0 / (n as f64).sqrt();
        let mut pre = Vec::with_capacity(n);
        for a3 in 0..n3 {
            for a2 in 0..n2 {
                for a1 in 0..n1 {
                    let ph = a1 as f64 * (kappa[0] + 1.0) / n1 as f64
                        + a2 as f64 * (kappa[1] + 1.0) / n2 as f64
                        + a3 as f64 * (kappa[2] + 1.0) / n3 as f64;
                    pre.push(C64::from_polar(scale, 2.0 * PI * ph));
                }
            }
        }
        let s = spec.shifts();
        Self { dims, m1: s.m1(), m2: s.m2, mhat1: spec.mhat1(), kappa, delta: spec.delta(), inv, fwd, pre }
    }

    pub fn n(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// The three generators `(x₁, x₂, x₃)` of column `p` (1-based coordinates).
    pub fn generators(&self, p: [usize; 3]) -> [C64; 3] {
        let [n1, n2, n3] = self.dims.map(|x| x as f64);
        let [p1, p2, p3] = p.map(|x| x as f64);
        let (m1, m2, mh) = (self.m1 as f64, self.m2 as f64, self.mhat1 as f64);
        let k = self.kappa;
        let x1 = eta(n1, k[0] + p1);
        let x2 = eta(n2, k[1] + p2) * eta(n1 * n2, -m1 * p1);
        let x3 = eta(n3, k[2] + p3) * eta(n2 * n3, -m2 * p2) * eta(n1 * n3, -mh * p1) * eta(n1 * n2 * n3, m1 * m2 * p1);
        [x1, x2, x3]
    }

    /// Column `t_p` of `T` built entrywise from the Vandermonde product.
    pub fn basis_vector(&self, p: [usize; 3]) -> Vec<C64> {
        let [n1, n2, n3] = self.dims;
        let [x1, x2, x3] = self.generators(p);
        let s = 1.0 / (self.n() as f64).sqrt();
        let mut v = Vec::with_capacity(self.n());
        let mut z3 = C64::new(s, 0.0);
        for _ in 0..n3 {
            let mut z2 = z3;
            for _ in 0..n2 {
                let mut z1 = z2;
                for _ in 0..n1 {
                    v.push(z1);
                    z1 *= x1;
                }
                z2 *= x2;
            }
            z3 *= x3;
        }
        v
    }

    /// `(Λ₁, Λ₂, Λ₃)` with `Λ_ℓ(p) = (x_ℓ(p) − 1)/δ_ℓ`, indexed by column offset.
    pub fn lambda_diagonals(&self) -> [Vec<C64>; 3] {
        let [n1, n2, n3] = self.dims;
        let mut out: [Vec<C64>; 3] = Default::default();
        for p3 in 1..=n3 {
            for p2 in 1..=n2 {
                for p1 in 1..=n1 {
                    let x = self.generators([p1, p2, p3]);
                    for l in 0..3 {
                        out[l].push((x[l] - 1.0) / self.delta[l]);
                    }
                }
            }
        }
        out
    }

    fn twiddle2(&self, a3: usize, p2: usize, conj: bool) -> C64 {
        let [_, n2, n3] = self.dims;
        let md = (n2 * n3) as i64;
        let num = (a3 as i64 * self.m2 * p2 as i64).rem_euclid(md);
        let s = if conj { 1.0 } else { -1.0 };
        C64::from_polar(1.0, s * 2.0 * PI * num as f64 / md as f64)
    }

    fn twiddle1(&self, a2: usize, a3: usize, p1: usize, conj: bool) -> C64 {
        let [n1, n2, n3] = self.dims.map(|x| x as i64);
        let md = n1 * n2 * n3;
        let inner = a2 as i64 * self.m1 * n3 + a3 as i64 * self.mhat1 * n2 - a3 as i64 * self.m1 * self.m2;
        let num = (p1 as i64 * inner.rem_euclid(md)).rem_euclid(md);
        let s = if conj { 1.0 } else { -1.0 };
        C64::from_polar(1.0, s * 2.0 * PI * num as f64 / md as f64)
    }

    fn fft_axis(&self, buf: &mut [C64], axis: usize, inverse: bool) {
        let [n1, n2, n3] = self.dims;
        let plan = if inverse { &self.inv[axis] } else { &self.fwd[axis] };
        match axis {
            0 => plan.process(buf),
            1 => {
                let mut line = vec![ZERO; n2];
                for s3 in 0..n3 {
                    for s1 in 0..n1 {
                        for (s2, l) in line.iter_mut().enumerate() {
                            *l = buf[s1 + n1 * (s2 + n2 * s3)];
                        }
                        plan.process(&mut line);
                        for (s2, l) in line.iter().enumerate() {
                            buf[s1 + n1 * (s2 + n2 * s3)] = *l;
                        }
                    }
                }
            }
            _ => {
                let mut line = vec![ZERO; n3];
                let plane = n1 * n2;
                for q in 0..plane {
                    for (s3, l) in line.iter_mut().enumerate() {
                        *l = buf[q + plane * s3];
                    }
                    plan.process(&mut line);
                    for (s3, l) in line.iter().enumerate() {
                        buf[q + plane * s3] = *l;
                    }
                }
            }
        }
    }

    /// `Tx` in `O(n log n)`.
    pub fn apply_t(&self, x: &[C64]) -> Result<Vec<C64>> {
        check_len(self.n(), x.len())?;
        let [n1, n2, n3] = self.dims;
        let mut b = x.to_vec();
        self.fft_axis(&mut b, 2, true);
        for a3 in 0..n3 {
            for s2 in 0..n2 {
                let w = self.twiddle2(a3, s2 + 1, false);
                for s1 in 0..n1 {
                    b[s1 + n1 * (s2 + n2 * a3)] *= w;
                }
            }
        }
        self.fft_axis(&mut b, 1, true);
        for a3 in 0..n3 {
            for a2 in 0..n2 {
                for s1 in 0..n1 {
                    b[s1 + n1 * (a2 + n2 * a3)] *= self.twiddle1(a2, a3, s1 + 1, false);
                }
            }
        }
        self.fft_axis(&mut b, 0, true);
        for (v, p) in b.iter_mut().zip(&self.pre) {
            *v *= p;
        }
        Ok(b)
    }

    /// `Tᴴx` in `O(n log n)`.
    pub fn apply_t_adjoint(&self, x: &[C64]) -> Result<Vec<C64>> {
        check_len(self.n(), x.len())?;
        let [n1, n2, n3] = self.dims;
        let mut b: Vec<C64> = x.iter().zip(&self.pre).map(|(v, p)| v * p.conj()).collect();
        self.fft_axis(&mut b, 0, false);
        for a3 in 0..n3 {
            for a2 in 0..n2 {
                for s1 in 0..n1 {
                    b[s1 + n1 * (a2 + n2 * a3)] *= self.twiddle1(a2, a3, s1 + 1, true);
                }
            }
        }
        self.fft_axis(&mut b, 1, false);
        for a3 in 0..n3 {
            for s2 in 0..n2 {
                let w = self.twiddle2(a3, s2 + 1, true);
                for s1 in 0..n1 {
                    b[s1 + n1 * (s2 + n2 * a3)] *= w;
                }
            }
        }
        self.fft_axis(&mut b, 2, false);
        Ok(b)
    }

    /// Dense `T` from the explicit column formula.
    pub fn dense_t_explicit(&self) -> Mat<C64> {
        let n = self.n();
        let map = crate::lattice::IndexMap::new(self.dims);
        let mut t = Mat::<C64>::zeros(n, n);
        for j in 0..n {
            let col = self.basis_vector(map.coords(j));
            for (i, v) in col.into_iter().enumerate() {
                t[(i, j)] = v;
            }
        }
        t
    }

    /// Dense `T` assembled by applying the FFT path to unit vectors.
    pub fn dense_t(&self, exec: Execution) -> Mat<C64> {
        let n = self.n();
        let cols = par::map_range(exec, n, |j| {
            let mut e = vec![ZERO; n];
            e[j] = C64::new(1.0, 0.0);
            self.apply_t(&e).expect("length checked")
        });
        Mat::from_fn(n, n, |i, j| cols[j][i])
    }
}

fn cross(a: &[C64; 3], b: &[C64; 3]) -> [C64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn unit(v: [C64; 3]) -> ([C64; 3], f64) {
    let r = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    (v.map(|x| x / r), r)
}

/// Per-frequency factors of `C = P_rΣQ_rᴴ`, `CQ₀ = 0`, `P₀ᴴC = 0`.
///
/// For frequency `j` with `λ = (Λ₁,Λ₂,Λ₃)(j)`: `Π₀ = λ/|λ|`,
/// `Π₂ = τ×λ̄/|τ×λ̄|`, `Π̄₁ = λ×Π₂/|λ|`, and `Π₁ = conj(Π̄₁)`. Then
/// `P_r = (I₃⊗T)[−Π̄₂, Π̄₁]`, `Q_r = (I₃⊗T)[Π₁, Π₂]`, `P₀ = (I₃⊗T)Π̄₀`,
/// `Q₀ = (I₃⊗T)Π₀`, and `Σ = diag(|λ|, |λ|)`.
#[derive(Clone, Debug)]
pub struct SpectralBasis {
    pub lambda: [Vec<C64>; 3],
    pub lambda_q: Vec<f64>,
    pub tau: [f64; 3],
    pub tau_perturbed: bool,
    pub pi0: Vec<[C64; 3]>,
    pub pibar1: Vec<[C64; 3]>,
    pub pi2: Vec<[C64; 3]>,
}

/// Default `τ`.
pub const DEFAULT_TAU: [f64; 3] = [1.0, 2.0, 3.0];

fn tau_distinct(tau: [f64; 3], delta: [f64; 3]) -> bool {
    tau_clash(tau, delta).is_none()
}

/// Index of the component to bump, if any pair `τ_ℓδ_ℓ` coincides.
fn tau_clash(tau: [f64; 3], delta: [f64; 3]) -> Option<usize> {
    let t = [tau[0] * delta[0], tau[1] * delta[1], tau[2] * delta[2]];
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
    if close(t[0], t[2]) || close(t[1], t[2]) {
        Some(2)
    } else if close(t[0], t[1]) {
        Some(1)
    } else {
        None
    }
}

/// Resolve `τ`: keep it when `τ_ℓδ_ℓ` are pairwise distinct, otherwise bump
/// `τ₃` by one until they are. A clash between the first two axes, which
/// `τ₃` cannot fix, bumps `τ₂` instead. Returns the final `τ` and whether it
/// changed.
pub fn resolve_tau(tau: [f64; 3], delta: [f64; 3]) -> Result<([f64; 3], bool)> {
    if tau.iter().any(|&t| !(t.is_finite() && t > 0.0)) {
        return Err(Error::InvalidArgument(format!("tau components must be positive, got {tau:?}")));
    }
    let mut t = tau;
    let mut changed = false;
    for _ in 0..16 {
        match tau_clash(t, delta) {
            None => return Ok((t, changed)),
            Some(l) => t[l] += 1.0,
        }
        changed = true;
    }
    Err(Error::InvalidArgument("could not make tau_l*delta_l pairwise distinct".into()))
}

impl SpectralBasis {
    /// Factorize with the given `τ` (see [`resolve_tau`]). Requires `k ≠ 0`.
    pub fn new(spec: &LatticeSpec, ops: &SpectralOps, tau: [f64; 3]) -> Result<Self> {
        if spec.is_k_zero() {
            return Err(Error::ZeroBlochVector);
        }
        let (tau, tau_perturbed) = resolve_tau(tau, spec.delta())?;
        let lambda = ops.lambda_diagonals();
        let n = ops.n();
        let dmax = spec.delta().iter().fold(f64::INFINITY, |a, &b| a.min(b));
        let mut lambda_q = Vec::with_capacity(n);
        let mut pi0 = Vec::with_capacity(n);
        let mut pibar1 = Vec::with_capacity(n);
        let mut pi2 = Vec::with_capacity(n);
        let tc = tau.map(|x| C64::new(x, 0.0));
        for j in 0..n {
            let l = [lambda[0][j], lambda[1][j], lambda[2][j]];
            let (p0, r) = unit(l);
            // entries are bounded by 2/δ; a vanishing frequency means k·a_ℓ ∈ ℤ for all ℓ
            if !(r > 1e-12 / dmax) {
                return Err(Error::ZeroBlochVector);
            }
            lambda_q.push(r * r);
            let (p2, _) = unit(cross(&tc, &l.map(|x| x.conj())));
            let (pb1, _) = unit(cross(&l, &p2));
            pi0.push(p0);
            pibar1.push(pb1);
            pi2.push(p2);
        }
        Ok(Self { lambda, lambda_q, tau, tau_perturbed, pi0, pibar1, pi2 })
    }

    pub fn n(&self) -> usize {
        self.lambda_q.len()
    }

    /// Singular values `|λ(j)|` (each has multiplicity two in `Σ`).
    pub fn sigma(&self) -> Vec<f64> {
        self.lambda_q.iter().map(|x| x.sqrt()).collect()
    }

    /// `Σ` diagonal of length `2n`.
    pub fn sigma2(&self) -> Vec<f64> {
        let s = self.sigma();
        s.iter().chain(s.iter()).copied().collect()
    }

    /// Per-frequency coefficient triples `(column block, coefficients)` for
    /// the named factor.
    pub fn coefficients(&self, which: Factor) -> Vec<Vec<[C64; 3]>> {
        let conj3 = |v: &[C64; 3]| v.map(|x| x.conj());
        match which {
            Factor::Pr => vec![
                self.pi2.iter().map(|v| conj3(v).map(|x| -x)).collect(),
                self.pibar1.clone(),
            ],
            Factor::Qr => vec![self.pibar1.iter().map(conj3).collect(), self.pi2.clone()],
            Factor::P0 => vec![self.pi0.iter().map(conj3).collect()],
            Factor::Q0 => vec![self.pi0.clone()],
        }
    }

    /// Dense `(I₃⊗T)Π` for a factor, given a dense `T`.
    pub fn dense(&self, t: &Mat<C64>, which: Factor) -> Mat<C64> {
        let n = self.n();
        let blocks = self.coefficients(which);
        let mut out = Mat::<C64>::zeros(3 * n, blocks.len() * n);
        for (b, coef) in blocks.iter().enumerate() {
            for j in 0..n {
                let c = coef[j];
                for l in 0..3 {
                    for i in 0..n {
                        out[(l * n + i, b * n + j)] = t[(i, j)] * c[l];
                    }
                }
            }
        }
        out
    }
}

/// Factors of the curl SVD.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Factor {
    Pr,
    Qr,
    P0,
    Q0,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curl::CurlBlocks;
    use crate::linalg::{frob, max_abs_diff, unitarity_defect};

    fn specs() -> Vec<LatticeSpec> {
        vec![
            LatticeSpec::simple_cubic([4, 4, 4], [0.3, 0.2, 0.1]).unwrap(),
            LatticeSpec::fcc([4, 6, 4], [0.1, -0.2, 0.35], 1.0).unwrap(),
            crate::fixtures::hexagonal([6, 5, 4], [0.2, 0.1, -0.3]).unwrap(),
            crate::fixtures::sheared([4, 5, 6], [0.13, -0.21, 0.34]).unwrap(),
            LatticeSpec::simple_cubic([3, 4, 5], [0.0, 0.0, 0.0]).unwrap(),
        ]
    }

    #[test]
    fn fft_matches_explicit_columns() {
        for s in specs() {
            let ops = SpectralOps::new(&s);
            let te = ops.dense_t_explicit();
            let tf = ops.dense_t(Execution::Sequential);
            assert!(max_abs_diff(&te, &tf) < 1e-12, "{:?}", s.dims());
            assert!(unitarity_defect(&te) < 1e-12);
            let n = ops.n();
            let x: Vec<C64> = (0..n).map(|i| C64::new((i as f64).cos(), (2.0 * i as f64).sin())).collect();
            let back = ops.apply_t_adjoint(&ops.apply_t(&x).unwrap()).unwrap();
            for (a, b) in x.iter().zip(&back) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn diagonalizes_all_blocks() {
        for s in specs() {
            let ops = SpectralOps::new(&s);
            let t = ops.dense_t_explicit();
            let curl = CurlBlocks::assemble(&s);
            let lam = ops.lambda_diagonals();
            for l in 0..3 {
                let c = curl.block(l).to_dense();
                let d = t.adjoint() * &c * &t;
                let want = Mat::<C64>::from_fn(ops.n(), ops.n(), |i, j| if i == j { lam[l][i] } else { ZERO });
                assert!(frob(&(&d - &want)) <= 1e-12 * frob(&c), "{:?} block {l}", s.dims());
            }
        }
    }

    #[test]
    fn constant_vector_at_zero_k() {
        let s = LatticeSpec::simple_cubic([3, 4, 5], [0.0, 0.0, 0.0]).unwrap();
        let ops = SpectralOps::new(&s);
        let v = ops.basis_vector([3, 4, 5]);
        let c = 1.0 / (60f64).sqrt();
        assert!(v.iter().all(|z| (z - C64::new(c, 0.0)).norm() < 1e-14));
        let lam = ops.lambda_diagonals();
        assert!(lam[0][2].norm() < 1e-14);
    }

    #[test]
    fn lambda_bounded() {
        let s = crate::fixtures::sheared([4, 5, 6], [0.13, -0.21, 0.34]).unwrap();
        let lam = SpectralOps::new(&s).lambda_diagonals();
        for l in 0..3 {
            assert!(lam[l].iter().all(|z| z.norm() <= 2.0 / s.delta()[l] + 1e-12));
        }
    }

    #[test]
    fn svd_factors() {
        for s in specs().into_iter().take(4) {
            let ops = SpectralOps::new(&s);
            let t = ops.dense_t_explicit();
            let b = SpectralBasis::new(&s, &ops, DEFAULT_TAU).unwrap();
            let c = CurlBlocks::assemble(&s).to_dense();
            let pr = b.dense(&t, Factor::Pr);
            let qr = b.dense(&t, Factor::Qr);
            let p0 = b.dense(&t, Factor::P0);
            let q0 = b.dense(&t, Factor::Q0);
            let sig = b.sigma2();
            let sm = Mat::<C64>::from_fn(sig.len(), sig.len(), |i, j| if i == j { C64::new(sig[i], 0.0) } else { ZERO });
            let r = &c - &pr * &sm * qr.adjoint();
            assert!(frob(&r) <= 1e-10 * frob(&c));
            assert!(frob(&(&c * &q0)) <= 1e-10 * frob(&c));
            assert!(frob(&(p0.adjoint() * &c)) <= 1e-10 * frob(&c));
            assert!(unitarity_defect(&crate::linalg::hcat(&[&qr, &q0])) < 1e-12);
            assert!(unitarity_defect(&crate::linalg::hcat(&[&pr, &p0])) < 1e-12);
            assert_eq!(crate::linalg::rank(&c, 1e-10).unwrap(), 2 * ops.n());
        }
    }

    #[test]
    fn zero_k_rejected() {
        let s = LatticeSpec::simple_cubic([3, 3, 3], [0.0, 0.0, 0.0]).unwrap();
        let ops = SpectralOps::new(&s);
        assert!(matches!(SpectralBasis::new(&s, &ops, DEFAULT_TAU), Err(Error::ZeroBlochVector)));
    }

    #[test]
    fn tau_bump() {
        let (t, ch) = resolve_tau([1.0, 2.0, 3.0], [0.25, 0.25, 0.25]).unwrap();
        assert!(!ch && t == [1.0, 2.0, 3.0]);
        let (t, ch) = resolve_tau([1.0, 2.0, 2.0], [0.25, 0.25, 0.25]).unwrap();
        assert!(ch && t == [1.0, 2.0, 3.0]);
        let (t, ch) = resolve_tau([1.0, 2.0, 3.0], [0.3, 0.3, 0.1]).unwrap();
        assert!(ch && t == [1.0, 2.0, 4.0]);
        let (t, ch) = resolve_tau([1.0, 2.0, 3.0], [0.5, 0.25, 0.5]).unwrap();
        assert!(ch && t == [1.0, 3.0, 3.0]);
        assert!(resolve_tau([1.0, -2.0, 3.0], [0.1; 3]).is_err());
    }
}
