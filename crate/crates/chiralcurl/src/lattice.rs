//! Grid indexing, lattice geometry, material masks and neighbor combinatorics.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

pub(crate) fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(s: f64, x: &Vec3, y: &Vec3) -> Vec3 {
    [y[0] + s * x[0], y[1] + s * x[1], y[2] + s * x[2]]
}

/// Relative tolerance for the orthogonality of the reduced lattice vectors.
const ORTHO_TOL: f64 = 1e-9;
/// Admissible bracket for each `k·a_ℓ`.
pub const K_LOWER: f64 = -2.0 / 3.0;
pub const K_UPPER: f64 = 5.0 / 6.0;

/// Integer shift flags and counts describing how the lattice wraps onto the
/// rectangular index grid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shifts {
    pub rho2: i64,
    pub rho11: i64,
    pub rho12: i64,
    pub rho13: i64,
    pub m2: i64,
    pub m11: i64,
    pub m12: i64,
    pub m13: i64,
}

impl Shifts {
    pub fn m1(&self) -> i64 {
        self.m11
    }

    pub fn rho1(&self) -> i64 {
        self.rho11
    }

    /// Effective axis-1 shift seen when wrapping along axis 3.
    pub fn mhat1(&self) -> i64 {
        self.rho2 * self.m11 + self.rho2 * self.m13 + (1 - self.rho2) * self.m12
    }

    pub fn rhohat1(&self) -> i64 {
        self.rho2 * self.rho11 + self.rho2 * self.rho13 + (1 - self.rho2) * self.rho12
    }

    fn validate(&self, n: [usize; 3]) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidLattice(msg));
        if !(0..=1).contains(&self.rho2) || !(0..=1).contains(&self.rho11) {
            return bad(format!("rho2 = {} and rho11 = {} must lie in {{0,1}}", self.rho2, self.rho11));
        }
        for (name, r) in [("rho12", self.rho12), ("rho13", self.rho13)] {
            if !(-1..=2).contains(&r) {
                return bad(format!("{name} = {r} must lie in {{-1,0,1,2}}"));
            }
        }
        let n1 = n[0] as i64;
        if !(0..=n[1] as i64).contains(&self.m2) {
            return bad(format!("m2 = {} outside [0, {}]", self.m2, n[1]));
        }
        for (name, m) in [("m11", self.m11), ("m12", self.m12), ("m13", self.m13)] {
            if !(0..=n1).contains(&m) {
                return bad(format!("{name} = {m} outside [0, {n1}]"));
            }
        }
        let dr = self.rho12 - self.rho13 - self.rho11;
        let dm = self.m12 - self.m13 - self.m11;
        if !((dr == 0 && dm == 0) || (dr == 1 && dm == n1)) {
            return bad(format!(
                "shift pair (rho12-rho13-rho11, m12-m13-m11) = ({dr}, {dm}) must be (0, 0) or (1, {n1})"
            ));
        }
        Ok(())
    }
}

/// Periodic index map `⟨i₁,i₂,i₃⟩` on an `n₁×n₂×n₃` grid.
///
/// Coordinates are 1-based as in the grid description; offsets are 0-based
/// storage positions with axis 1 fastest.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IndexMap {
    dims: [usize; 3],
}

impl IndexMap {
    pub fn new(dims: [usize; 3]) -> Self {
        assert!(dims.iter().all(|&d| d >= 1), "grid dimensions must be positive");
        Self { dims }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// 0-based storage offset of the (wrapped) 1-based coordinate.
    pub fn offset(&self, i: [i64; 3]) -> usize {
        let w = |x: i64, n: usize| (x - 1).rem_euclid(n as i64) as usize;
        let [n1, n2, n3] = self.dims;
        w(i[2], n3) * n1 * n2 + w(i[1], n2) * n1 + w(i[0], n1)
    }

    /// 1-based linear index in `[1, n]`.
    pub fn linear(&self, i: [i64; 3]) -> usize {
        self.offset(i) + 1
    }

    /// 1-based coordinates of a 0-based offset.
    pub fn coords(&self, offset: usize) -> [usize; 3] {
        let [n1, n2, _] = self.dims;
        [offset % n1 + 1, (offset / n1) % n2 + 1, offset / (n1 * n2) + 1]
    }
}

/// `⟨i₁,i₂,i₃⟩ = (i₃'−1)n₁n₂ + (i₂'−1)n₁ + i₁'` after periodic reduction.
pub fn linear_index(i1: i64, i2: i64, i3: i64, dims: [usize; 3]) -> usize {
    IndexMap::new(dims).linear([i1, i2, i3])
}

/// Bravais lattice, grid and Bloch vector together with the derived
/// orthogonalized frame.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeSpec {
    a: [Vec3; 3],
    n: [usize; 3],
    k: Vec3,
    shifts: Shifts,
    ahat: [Vec3; 3],
    delta: [f64; 3],
    k_dot_a: [f64; 3],
    kappa: [f64; 3],
}

impl LatticeSpec {
    /// Validating constructor. The shifts must make `â₁, â₂, â₃` mutually
    /// orthogonal, i.e. they must be consistent with the lattice vectors.
    pub fn new(a: [Vec3; 3], n: [usize; 3], k: Vec3, shifts: Shifts) -> Result<Self> {
        if n.iter().any(|&x| x == 0) {
            return Err(Error::InvalidLattice(format!("grid dimensions {n:?} must be positive")));
        }
        if a.iter().flatten().chain(k.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidLattice("non-finite lattice vector or Bloch vector".into()));
        }
        shifts.validate(n)?;
        let [n1, n2, _] = n.map(|x| x as f64);
        let s = &shifts;
        let c2 = s.rho1() as f64 - s.m1() as f64 / n1;
        let c3 = s.rho2 as f64 - s.m2 as f64 / n2;
        let c31 = s.rhohat1() as f64 - s.mhat1() as f64 / n1 - s.rho2 as f64 * c2;
        let ahat1 = a[0];
        let ahat2 = axpy(c2, &ahat1, &a[1]);
        let ahat3 = axpy(c31, &ahat1, &axpy(c3, &ahat2, &a[2]));
        let ahat = [ahat1, ahat2, ahat3];
        let lens = ahat.map(|v| norm(&v));
        if lens.iter().any(|&l| l <= 0.0) {
            return Err(Error::InvalidLattice("degenerate lattice vectors".into()));
        }
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let c = dot(&ahat[i], &ahat[j]) / (lens[i] * lens[j]);
            if c.abs() > ORTHO_TOL {
                return Err(Error::InvalidLattice(format!(
                    "shifts inconsistent with the lattice: reduced vectors {} and {} have cosine {c:.3e}",
                    i + 1,
                    j + 1
                )));
            }
        }
        let k_dot_a = [dot(&k, &a[0]), dot(&k, &a[1]), dot(&k, &a[2])];
        for (l, &v) in k_dot_a.iter().enumerate() {
            if v < K_LOWER - 1e-12 || v > K_UPPER + 1e-12 {
                return Err(Error::InvalidLattice(format!(
                    "k·a{} = {v} outside [{K_LOWER:.6}, {K_UPPER:.6}]",
                    l + 1
                )));
            }
        }
        let kappa1 = k_dot_a[0];
        let kappa2 = k_dot_a[1] + c2 * kappa1;
        let kappa3 = k_dot_a[2] + c3 * kappa2 + c31 * kappa1;
        let delta = [lens[0] / n[0] as f64, lens[1] / n[1] as f64, lens[2] / n[2] as f64];
        Ok(Self { a, n, k, shifts, ahat, delta, k_dot_a, kappa: [kappa1, kappa2, kappa3] })
    }

    /// Derive the shifts from arbitrary lattice vectors by projecting each
    /// vector onto the previously reduced ones. The grid must be compatible,
    /// i.e. every projection coefficient times the relevant grid count has to
    /// be an integer.
    pub fn from_vectors(a: [Vec3; 3], n: [usize; 3], k: Vec3) -> Result<Self> {
        let shifts = derive_shifts(&a, n)?;
        Self::new(a, n, k, shifts)
    }

    /// Unit simple cubic lattice with `k·a_ℓ = k_frac[ℓ]`.
    pub fn simple_cubic(n: [usize; 3], k_frac: Vec3) -> Result<Self> {
        let a = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        Self::new(a, n, k_frac, Shifts::default())
    }

    /// Face-centred cubic primitive cell with cubic lattice constant `a_len`.
    /// Requires `n₁` even and `n₂` divisible by 3.
    pub fn fcc(n: [usize; 3], k_frac: Vec3, a_len: f64) -> Result<Self> {
        let a = fcc_vectors(a_len);
        let k = k_from_fractional(&a, k_frac)?;
        Self::from_vectors(a, n, k)
    }

    pub fn a(&self) -> &[Vec3; 3] {
        &self.a
    }
    pub fn ahat(&self) -> &[Vec3; 3] {
        &self.ahat
    }
    pub fn dims(&self) -> [usize; 3] {
        self.n
    }
    pub fn n_total(&self) -> usize {
        self.n.iter().product()
    }
    pub fn k(&self) -> Vec3 {
        self.k
    }
    pub fn shifts(&self) -> &Shifts {
        &self.shifts
    }
    pub fn delta(&self) -> [f64; 3] {
        self.delta
    }
    /// `k·a_ℓ`.
    pub fn k_dot_a(&self) -> [f64; 3] {
        self.k_dot_a
    }
    /// `θ_ℓ = 2π k·a_ℓ`.
    pub fn theta(&self) -> [f64; 3] {
        self.k_dot_a.map(|x| 2.0 * PI * x)
    }
    /// `κ_ℓ = k·â_ℓ`.
    pub fn kappa(&self) -> [f64; 3] {
        self.kappa
    }
    pub fn mhat1(&self) -> i64 {
        self.shifts.mhat1()
    }
    pub fn rhohat1(&self) -> i64 {
        self.shifts.rhohat1()
    }
    pub fn is_k_zero(&self) -> bool {
        self.k.iter().all(|&x| x == 0.0)
    }
    pub fn index_map(&self) -> IndexMap {
        IndexMap::new(self.n)
    }

    /// Physical position of the node with 1-based coordinates `i`.
    pub fn node_position(&self, i: [usize; 3]) -> Vec3 {
        let mut p = [0.0; 3];
        for l in 0..3 {
            let s = (i[l] as f64 - 1.0) / self.n[l] as f64;
            p = axpy(s, &self.a[l], &p);
        }
        p
    }
}

/// FCC primitive vectors, orientation with `a₁` along x and `a₂` in the xy plane.
pub fn fcc_vectors(a_len: f64) -> [Vec3; 3] {
    let s = a_len / 2f64.sqrt();
    let r3 = 3f64.sqrt();
    [
        [s, 0.0, 0.0],
        [0.5 * s, 0.5 * r3 * s, 0.0],
        [0.5 * s, s / (2.0 * r3), (2.0f64 / 3.0).sqrt() * s],
    ]
}

/// Solve `k·a_ℓ = f_ℓ` for the Cartesian Bloch vector `k`.
pub fn k_from_fractional(a: &[Vec3; 3], f: Vec3) -> Result<Vec3> {
    let m = faer::Mat::<f64>::from_fn(3, 3, |i, j| a[i][j]);
    let rhs = faer::Mat::<f64>::from_fn(3, 1, |i, _| f[i]);
    let lu = m.full_piv_lu();
    use faer::linalg::solvers::Solve;
    let x = lu.solve(&rhs);
    let k = [x[(0, 0)], x[(1, 0)], x[(2, 0)]];
    if k.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidLattice("lattice vectors are linearly dependent".into()));
    }
    Ok(k)
}

fn grid_fraction(x: f64, n: usize, what: &str) -> Result<i64> {
    let m = x * n as f64;
    let r = m.round();
    if (m - r).abs() > 1e-9 * n as f64 {
        return Err(Error::InvalidLattice(format!(
            "{what}: projection {x} is not a multiple of 1/{n}; the grid is incompatible with the lattice"
        )));
    }
    Ok(r as i64)
}

fn derive_shifts(a: &[Vec3; 3], n: [usize; 3]) -> Result<Shifts> {
    let n1 = n[0] as i64;
    // â2 = a2 + c2·a1 with c2 = ρ1 − m1/n1
    let c2 = -dot(&a[1], &a[0]) / dot(&a[0], &a[0]);
    let t1 = grid_fraction(-c2, n[0], "a2 onto a1")?;
    let (rho11, m11) = if (0..=n1).contains(&t1) {
        (0, t1)
    } else if (0..=n1).contains(&(t1 + n1)) {
        (1, t1 + n1)
    } else {
        return Err(Error::InvalidLattice("a2 has a projection onto a1 outside [-1, 1]·|a1|; reduce the basis".into()));
    };
    let ahat2 = axpy(c2, &a[0], &a[1]);
    let c3 = -dot(&a[2], &ahat2) / dot(&ahat2, &ahat2);
    let t2 = grid_fraction(-c3, n[1], "a3 onto â2")?;
    let n2 = n[1] as i64;
    let (rho2, m2) = if (0..=n2).contains(&t2) {
        (0, t2)
    } else if (0..=n2).contains(&(t2 + n2)) {
        (1, t2 + n2)
    } else {
        return Err(Error::InvalidLattice("a3 has a projection onto â2 outside [-1, 1]·|â2|; reduce the basis".into()));
    };
    // X = ρ − m/n1 for the label (12 when ρ2 = 0, 13 when ρ2 = 1)
    let x = -dot(&a[2], &a[0]) / dot(&a[0], &a[0]);
    let tx = grid_fraction(-x, n[0], "a3 onto a1")?;
    for rho_x in -1..=2i64 {
        let m_x = tx + rho_x * n1;
        if !(0..=n1).contains(&m_x) {
            continue;
        }
        for (dr, dm) in [(0, 0), (1, n1)] {
            let (rho12, m12, rho13, m13) = if rho2 == 0 {
                (rho_x, m_x, rho_x - rho11 - dr, m_x - m11 - dm)
            } else {
                (rho_x + rho11 + dr, m_x + m11 + dm, rho_x, m_x)
            };
            let s = Shifts { rho2, rho11, rho12, rho13, m2, m11, m12, m13 };
            if s.validate(n).is_ok() {
                return Ok(s);
            }
        }
    }
    Err(Error::InvalidLattice("no admissible shift flags reproduce the lattice on this grid".into()))
}

/// Partition of the grid into inside (`𝒟ᵢ`) and outside (`𝒟ₒ`) nodes with
/// their permittivities. The permeability is 1 everywhere.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterialMask {
    inside: Vec<bool>,
    eps_i: f64,
    eps_o: f64,
}

impl MaterialMask {
    pub fn new(inside: Vec<bool>, eps_i: f64, eps_o: f64) -> Result<Self> {
        if !(eps_i > 0.0 && eps_o > 0.0 && eps_i.is_finite() && eps_o.is_finite()) {
            return Err(Error::InvalidMask(format!("permittivities must be positive, got eps_i = {eps_i}, eps_o = {eps_o}")));
        }
        if inside.is_empty() {
            return Err(Error::InvalidMask("empty grid".into()));
        }
        Ok(Self { inside, eps_i, eps_o })
    }

    pub fn empty(n: usize, eps_i: f64, eps_o: f64) -> Result<Self> {
        Self::new(vec![false; n], eps_i, eps_o)
    }

    pub fn full(n: usize, eps_i: f64, eps_o: f64) -> Result<Self> {
        Self::new(vec![true; n], eps_i, eps_o)
    }

    /// Mask whose inside set is the given list of 1-based (wrapped) coordinates.
    pub fn from_nodes(map: IndexMap, nodes: &[[i64; 3]], eps_i: f64, eps_o: f64) -> Result<Self> {
        let mut inside = vec![false; map.len()];
        for &c in nodes {
            inside[map.offset(c)] = true;
        }
        Self::new(inside, eps_i, eps_o)
    }

    pub fn len(&self) -> usize {
        self.inside.len()
    }
    pub fn is_empty(&self) -> bool {
        self.inside.is_empty()
    }
    pub fn eps_i(&self) -> f64 {
        self.eps_i
    }
    pub fn eps_o(&self) -> f64 {
        self.eps_o
    }
    /// `γ* = √εᵢ`.
    pub fn gamma_star(&self) -> f64 {
        self.eps_i.sqrt()
    }
    pub fn is_inside(&self, j: usize) -> bool {
        self.inside[j]
    }
    pub fn inside_flags(&self) -> &[bool] {
        &self.inside
    }
    pub fn n_inside(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }
    /// 0-based offsets of `𝒟ᵢ`, ascending.
    pub fn inside_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.inside[j]).collect()
    }
    /// 0-based offsets of `𝒟ₒ`, ascending.
    pub fn outside_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&j| !self.inside[j]).collect()
    }
    /// Inside flags repeated for the three field components (length `3n`).
    pub fn inside3(&self) -> Vec<bool> {
        let mut v = Vec::with_capacity(3 * self.len());
        for _ in 0..3 {
            v.extend_from_slice(&self.inside);
        }
        v
    }
    /// Diagonal of `Φ(γ) = I₃⊗[εₒI⁽ᵒ⁾ + (εᵢ−γ²)I⁽ⁱ⁾]` (length `3n`).
    pub fn phi_diag(&self, gamma: f64) -> Vec<f64> {
        let mut di = self.eps_i - gamma * gamma;
        // γ given as √εᵢ rounds; treat it as the critical value
        if di.abs() <= 1e-14 * self.eps_i {
            di = 0.0;
        }
        self.inside3().into_iter().map(|b| if b { di } else { self.eps_o }).collect()
    }
}

/// Closed geometric primitives used to paint a mask. Centres are given in
/// fractional coordinates of `(a₁, a₂, a₃)`; lengths are physical.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    Sphere { center: Vec3, radius: f64 },
    /// Spheroid with symmetry axis `axis` (physical direction), semi-axis
    /// `polar` along it and `equatorial` across it.
    Spheroid { center: Vec3, axis: Vec3, polar: f64, equatorial: f64 },
}

impl Shape {
    fn validate(&self) -> Result<()> {
        let ok = match self {
            Shape::Sphere { radius, .. } => *radius >= 0.0,
            Shape::Spheroid { axis, polar, equatorial, .. } => {
                *polar >= 0.0 && *equatorial >= 0.0 && norm(axis) > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidMask(format!("invalid shape {self:?}")))
        }
    }

    fn contains(&self, d: &Vec3) -> bool {
        const EDGE: f64 = 1e-12;
        match self {
            Shape::Sphere { radius, .. } => dot(d, d) <= radius * radius * (1.0 + EDGE) + EDGE,
            Shape::Spheroid { axis, polar, equatorial, .. } => {
                let u = axis.map(|x| x / norm(axis));
                let t = dot(d, &u);
                let r2 = dot(d, d) - t * t;
                let q = |x: f64, s: f64| {
                    if s == 0.0 {
                        if x.abs() <= EDGE { 0.0 } else { f64::INFINITY }
                    } else {
                        x / s
                    }
                };
                let v = q(t, *polar).powi(2) + q(r2.max(0.0).sqrt(), *equatorial).powi(2);
                v <= 1.0 + EDGE
            }
        }
    }

    fn center(&self) -> Vec3 {
        match self {
            Shape::Sphere { center, .. } | Shape::Spheroid { center, .. } => *center,
        }
    }
}

/// Paint the union of shapes onto the grid. A node is inside when its
/// position, or any nearest periodic image of it, lies in a shape; surface
/// points count as inside.
pub fn build_mask(shapes: &[Shape], spec: &LatticeSpec, eps_i: f64, eps_o: f64) -> Result<MaterialMask> {
    for s in shapes {
        s.validate()?;
    }
    let map = spec.index_map();
    let a = spec.a();
    let mut inside = vec![false; map.len()];
    for (j, flag) in inside.iter_mut().enumerate() {
        let x = spec.node_position(map.coords(j));
        *flag = shapes.iter().any(|s| {
            let c = s.center();
            let mut cp = [0.0; 3];
            for l in 0..3 {
                cp = axpy(c[l], &a[l], &cp);
            }
            images().any(|t| {
                let mut d = [x[0] - cp[0], x[1] - cp[1], x[2] - cp[2]];
                for l in 0..3 {
                    d = axpy(t[l] as f64, &a[l], &d);
                }
                s.contains(&d)
            })
        });
    }
    MaterialMask::new(inside, eps_i, eps_o)
}

fn images() -> impl Iterator<Item = [i32; 3]> {
    (-1..=1).flat_map(|x| (-1..=1).flat_map(move |y| (-1..=1).map(move |z| [x, y, z])))
}

/// Boundary `∂𝒟ᵢ` and interior `𝒟ᵢ°` of the inside set with respect to a
/// neighbor table (each entry lists the node itself and its lattice
/// neighbors). Both returned lists are ascending 0-based offsets.
pub fn classify_boundary_with(mask: &MaterialMask, neighbors: &[Vec<usize>]) -> (Vec<usize>, Vec<usize>) {
    let mut boundary = Vec::new();
    let mut interior = Vec::new();
    for j in mask.inside_indices() {
        if neighbors[j].iter().all(|&q| mask.is_inside(q)) {
            interior.push(j);
        } else {
            boundary.push(j);
        }
    }
    (boundary, interior)
}

/// Boundary and interior of `𝒟ᵢ` using the lattice neighbors of `spec`.
pub fn classify_boundary(mask: &MaterialMask, spec: &LatticeSpec) -> (Vec<usize>, Vec<usize>) {
    let table = crate::curl::CurlBlocks::assemble(spec).neighbor_table();
    classify_boundary_with(mask, &table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_index_examples() {
        let d = [4, 4, 4];
        assert_eq!(linear_index(1, 1, 1, d), 1);
        assert_eq!(linear_index(0, 1, 1, d), 4);
        assert_eq!(linear_index(2, 3, 1, d), 10);
    }

    #[test]
    fn linear_index_bijective_and_wrap_invariant() {
        for n1 in 1..=6 {
            for n2 in [1, 3, 6] {
                for n3 in [2, 5] {
                    let map = IndexMap::new([n1, n2, n3]);
                    let mut seen = vec![false; map.len()];
                    for i3 in 1..=n3 as i64 {
                        for i2 in 1..=n2 as i64 {
                            for i1 in 1..=n1 as i64 {
                                let j = map.offset([i1, i2, i3]);
                                assert!(!seen[j]);
                                seen[j] = true;
                                assert_eq!(map.coords(j), [i1 as usize, i2 as usize, i3 as usize]);
                                let shifted = [i1 - 2 * n1 as i64, i2 + n2 as i64, i3 + 3 * n3 as i64];
                                assert_eq!(map.offset(shifted), j);
                            }
                        }
                    }
                    assert!(seen.into_iter().all(|b| b));
                }
            }
        }
    }

    #[test]
    fn fcc_shifts() {
        let s = LatticeSpec::fcc([4, 6, 4], [0.1, 0.2, 0.05], 1.0).unwrap();
        let sh = s.shifts();
        assert_eq!((sh.m11, sh.m12, sh.m13, sh.m2), (2, 2, 0, 2));
        assert_eq!((sh.rho11, sh.rho12, sh.rho13, sh.rho2), (0, 0, 0, 0));
        assert_eq!(s.mhat1(), 2);
    }

    #[test]
    fn reduced_frame_is_orthogonal_with_mesh_lengths() {
        let s = LatticeSpec::fcc([6, 6, 6], [0.1, 0.2, 0.05], 1.3).unwrap();
        let ah = s.ahat();
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            assert!(dot(&ah[i], &ah[j]).abs() < 1e-12);
        }
        for l in 0..3 {
            assert!((norm(&ah[l]) - s.dims()[l] as f64 * s.delta()[l]).abs() < 1e-12);
        }
        let k = s.k();
        for l in 0..3 {
            assert!((dot(&k, &ah[l]) - s.kappa()[l]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_mismatched_shift_pair() {
        let a = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let s = Shifts { rho12: 1, ..Default::default() };
        assert!(matches!(LatticeSpec::new(a, [4, 4, 4], [0.1; 3], s), Err(Error::InvalidLattice(_))));
        let s = Shifts { m12: 4, ..Default::default() };
        assert!(LatticeSpec::new(a, [4, 4, 4], [0.1; 3], s).is_err());
    }

    #[test]
    fn rejects_k_out_of_bounds() {
        assert!(LatticeSpec::simple_cubic([4, 4, 4], [0.9, 0.0, 0.0]).is_err());
        assert!(LatticeSpec::simple_cubic([4, 4, 4], [-0.7, 0.0, 0.0]).is_err());
        assert!(LatticeSpec::simple_cubic([4, 4, 4], [5.0 / 6.0, -2.0 / 3.0, 0.0]).is_ok());
    }

    #[test]
    fn incompatible_grid_rejected() {
        assert!(LatticeSpec::fcc([5, 6, 4], [0.1, 0.1, 0.1], 1.0).is_err());
        assert!(LatticeSpec::fcc([4, 5, 4], [0.1, 0.1, 0.1], 1.0).is_err());
    }

    #[test]
    fn sphere_extremes() {
        let s = LatticeSpec::simple_cubic([6, 6, 6], [0.1, 0.1, 0.1]).unwrap();
        let dot_mask = build_mask(&[Shape::Sphere { center: [0.5, 0.5, 0.5], radius: 0.0 }], &s, 4.0, 1.0).unwrap();
        assert_eq!(dot_mask.inside_indices(), vec![s.index_map().offset([4, 4, 4])]);
        let off_grid = build_mask(&[Shape::Sphere { center: [0.51, 0.5, 0.5], radius: 0.0 }], &s, 4.0, 1.0).unwrap();
        assert_eq!(off_grid.n_inside(), 0);
        let all = build_mask(&[Shape::Sphere { center: [0.5, 0.5, 0.5], radius: 1.0 }], &s, 4.0, 1.0).unwrap();
        assert_eq!(all.n_inside(), 216);
    }

    #[test]
    fn spheroid_along_axis() {
        let s = LatticeSpec::simple_cubic([8, 8, 8], [0.1, 0.1, 0.1]).unwrap();
        let m = build_mask(
            &[Shape::Spheroid { center: [0.5, 0.5, 0.5], axis: [1.0, 0.0, 0.0], polar: 0.25, equatorial: 0.0 }],
            &s,
            4.0,
            1.0,
        )
        .unwrap();
        // five nodes on the x line through the centre: offsets -2..=2 steps of 1/8
        assert_eq!(m.n_inside(), 5);
    }

    #[test]
    fn mask_rejects_bad_permittivity() {
        assert!(MaterialMask::empty(8, 0.0, 1.0).is_err());
        assert!(MaterialMask::empty(8, 1.0, -1.0).is_err());
        assert!(MaterialMask::empty(0, 1.0, 1.0).is_err());
    }

    #[test]
    fn boundary_examples() {
        let s = LatticeSpec::simple_cubic([6, 6, 6], [0.1, 0.1, 0.1]).unwrap();
        let n = s.n_total();
        let (b, i) = classify_boundary(&MaterialMask::empty(n, 2.0, 1.0).unwrap(), &s);
        assert!(b.is_empty() && i.is_empty());
        let full = MaterialMask::full(n, 2.0, 1.0).unwrap();
        let (b, i) = classify_boundary(&full, &s);
        assert!(b.is_empty());
        assert_eq!(i.len(), n);
        let one = MaterialMask::from_nodes(s.index_map(), &[[3, 3, 3]], 2.0, 1.0).unwrap();
        let (b, i) = classify_boundary(&one, &s);
        assert_eq!(b, vec![s.index_map().offset([3, 3, 3])]);
        assert!(i.is_empty());
    }
}
