//! Sparse assembly of the three difference blocks `C₁, C₂, C₃` and the block
//! single-curl operator `C`.

use std::io::Write;

use faer::sparse::{SparseRowMat, Triplet};
use faer::Mat;
use num_complex::Complex64 as C64;

use crate::error::{check_len, Result};
use crate::lattice::{IndexMap, LatticeSpec};

fn cis(x: f64) -> C64 {
    C64::from_polar(1.0, x)
}

/// Square matrix with exactly one nonzero per row and column: row `r` holds
/// `vals[r]` in column `cols[r]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasedPermutation {
    pub cols: Vec<usize>,
    pub vals: Vec<C64>,
}

impl PhasedPermutation {
    pub fn dim(&self) -> usize {
        self.cols.len()
    }

    pub fn apply(&self, x: &[C64], y: &mut [C64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            *yr = self.vals[r] * x[self.cols[r]];
        }
    }

    pub fn apply_adjoint(&self, x: &[C64], y: &mut [C64]) {
        for (r, &c) in self.cols.iter().enumerate() {
            y[c] = self.vals[r].conj() * x[r];
        }
    }

    pub fn to_dense(&self) -> Mat<C64> {
        let n = self.dim();
        let mut m = Mat::<C64>::zeros(n, n);
        for r in 0..n {
            m[(r, self.cols[r])] += self.vals[r];
        }
        m
    }

    fn is_permutation(&self) -> bool {
        let mut seen = vec![false; self.dim()];
        for &c in &self.cols {
            if seen[c] {
                return false;
            }
            seen[c] = true;
        }
        true
    }
}

/// `J_{1,ℓ}`: cyclic shift on `n₁` points split at `m`, with prefactor
/// `e^{iθ₁ρ}` and an extra `e^{−iθ₁}` on the first `m` rows.
fn j1(n1: usize, m: i64, rho: i64, theta1: f64) -> PhasedPermutation {
    let m = m as usize;
    let pre = cis(theta1 * rho as f64);
    let (cols, vals) = (0..n1)
        .map(|r| if r < m { (n1 - m + r, pre * cis(-theta1)) } else { (r - m, pre) })
        .unzip();
    PhasedPermutation { cols, vals }
}

/// `J₂`: block shift on `n₂` blocks of size `n₁`, split at `m₂`. The first
/// `m₂` block rows use `e^{−iθ₂}J_{1,3}`, the rest `J_{1,2}`.
fn j2(n1: usize, n2: usize, m2: i64, rho2: i64, theta2: f64, j12: &PhasedPermutation, j13: &PhasedPermutation) -> PhasedPermutation {
    let m2 = m2 as usize;
    let pre = cis(theta2 * rho2 as f64);
    let mut cols = Vec::with_capacity(n1 * n2);
    let mut vals = Vec::with_capacity(n1 * n2);
    for b in 0..n2 {
        let (bc, inner, extra) = if b < m2 { (n2 - m2 + b, j13, cis(-theta2)) } else { (b - m2, j12, C64::new(1.0, 0.0)) };
        for r in 0..n1 {
            cols.push(bc * n1 + inner.cols[r]);
            vals.push(pre * extra * inner.vals[r]);
        }
    }
    PhasedPermutation { cols, vals }
}

/// Shift blocks `(J_{1,1}, J_{1,2}, J_{1,3}, J₂)`.
pub fn assemble_shift_blocks(spec: &LatticeSpec) -> (PhasedPermutation, PhasedPermutation, PhasedPermutation, PhasedPermutation) {
    let [n1, n2, _] = spec.dims();
    let th = spec.theta();
    let s = spec.shifts();
    let j11 = j1(n1, s.m11, s.rho11, th[0]);
    let j12 = j1(n1, s.m12, s.rho12, th[0]);
    let j13 = j1(n1, s.m13, s.rho13, th[0]);
    let jj2 = j2(n1, n2, s.m2, s.rho2, th[1], &j12, &j13);
    (j11, j12, j13, jj2)
}

/// One difference block `C_ℓ = δ_ℓ⁻¹(−I + P_ℓ)`.
#[derive(Clone, Debug)]
pub struct DiffBlock {
    pub shift: PhasedPermutation,
    pub inv_delta: f64,
}

impl DiffBlock {
    pub fn apply(&self, x: &[C64], y: &mut [C64]) {
        self.shift.apply(x, y);
        for (yr, &xr) in y.iter_mut().zip(x) {
            *yr = (*yr - xr) * self.inv_delta;
        }
    }

    pub fn apply_adjoint(&self, x: &[C64], y: &mut [C64]) {
        self.shift.apply_adjoint(x, y);
        for (yr, &xr) in y.iter_mut().zip(x) {
            *yr = (*yr - xr) * self.inv_delta;
        }
    }

    /// Row-major triplets with duplicates merged (a shift onto the diagonal
    /// happens when the axis has a single node).
    pub fn triplets(&self) -> Vec<(usize, usize, C64)> {
        let d = self.inv_delta;
        let mut t = Vec::with_capacity(2 * self.shift.dim());
        for r in 0..self.shift.dim() {
            let c = self.shift.cols[r];
            let v = self.shift.vals[r] * d;
            if c == r {
                t.push((r, r, v - d));
            } else if c < r {
                t.push((r, c, v));
                t.push((r, r, C64::new(-d, 0.0)));
            } else {
                t.push((r, r, C64::new(-d, 0.0)));
                t.push((r, c, v));
            }
        }
        t
    }

    pub fn to_dense(&self) -> Mat<C64> {
        let n = self.shift.dim();
        let mut m = Mat::<C64>::zeros(n, n);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    pub fn to_sparse(&self) -> SparseRowMat<usize, C64> {
        let n = self.shift.dim();
        let t: Vec<_> = self.triplets().into_iter().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        SparseRowMat::try_new_from_triplets(n, n, &t).expect("valid triplets")
    }

    /// Dense skew-Hermitian part `M_ℓ = C_ℓ − C_ℓᴴ`.
    pub fn skew_dense(&self) -> Mat<C64> {
        let c = self.to_dense();
        &c - c.adjoint()
    }
}

/// The three difference blocks together with the block curl
/// `C = [[0, −C₃, C₂], [C₃, 0, −C₁], [−C₂, C₁, 0]]`.
#[derive(Clone, Debug)]
pub struct CurlBlocks {
    map: IndexMap,
    blocks: [DiffBlock; 3],
}

impl CurlBlocks {
    pub fn assemble(spec: &LatticeSpec) -> Self {
        let [n1, n2, n3] = spec.dims();
        let n = n1 * n2 * n3;
        let map = spec.index_map();
        let th = spec.theta();
        let d = spec.delta();
        let (j11, _, _, jj2) = assemble_shift_blocks(spec);
        let one = C64::new(1.0, 0.0);
        let mut p1 = PhasedPermutation { cols: vec![0; n], vals: vec![one; n] };
        let mut p2 = p1.clone();
        let mut p3 = p1.clone();
        for r in 0..n {
            let [i1, i2, i3] = map.coords(r).map(|x| x - 1);
            if i1 + 1 < n1 {
                p1.cols[r] = r + 1;
            } else {
                p1.cols[r] = r + 1 - n1;
                p1.vals[r] = cis(th[0]);
            }
            if i2 + 1 < n2 {
                p2.cols[r] = r + n1;
            } else {
                p2.cols[r] = i3 * n1 * n2 + j11.cols[i1];
                p2.vals[r] = cis(th[1]) * j11.vals[i1];
            }
            if i3 + 1 < n3 {
                p3.cols[r] = r + n1 * n2;
            } else {
                let q = i2 * n1 + i1;
                p3.cols[r] = jj2.cols[q];
                p3.vals[r] = cis(th[2]) * jj2.vals[q];
            }
        }
        debug_assert!(p1.is_permutation() && p2.is_permutation() && p3.is_permutation());
        let blocks = [
            DiffBlock { shift: p1, inv_delta: 1.0 / d[0] },
            DiffBlock { shift: p2, inv_delta: 1.0 / d[1] },
            DiffBlock { shift: p3, inv_delta: 1.0 / d[2] },
        ];
        Self { map, blocks }
    }

    /// Grid size `n`.
    pub fn n(&self) -> usize {
        self.map.len()
    }

    pub fn index_map(&self) -> IndexMap {
        self.map
    }

    pub fn block(&self, l: usize) -> &DiffBlock {
        &self.blocks[l]
    }

    fn signed(&self) -> [[(usize, f64, usize); 2]; 3] {
        // output component i = s_a·C_{la} x_{ja} + s_b·C_{lb} x_{jb}
        [[(2, -1.0, 1), (1, 1.0, 2)], [(2, 1.0, 0), (0, -1.0, 2)], [(1, -1.0, 0), (0, 1.0, 1)]]
    }

    /// `y = Cx` for `x` of length `3n`.
    pub fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        self.apply_impl(x, false)
    }

    /// `y = Cᴴx`.
    pub fn apply_adjoint(&self, x: &[C64]) -> Result<Vec<C64>> {
        self.apply_impl(x, true)
    }

    fn apply_impl(&self, x: &[C64], adjoint: bool) -> Result<Vec<C64>> {
        let n = self.n();
        check_len(3 * n, x.len())?;
        let mut y = vec![C64::new(0.0, 0.0); 3 * n];
        let mut tmp = vec![C64::new(0.0, 0.0); n];
        for (i, terms) in self.signed().iter().enumerate() {
            for &(l, s, j) in terms {
                // Cᴴ has block (j,i) = (C_{ij})ᴴ
                let (row, col) = if adjoint { (j, i) } else { (i, j) };
                let xs = &x[col * n..(col + 1) * n];
                if adjoint {
                    self.blocks[l].apply_adjoint(xs, &mut tmp);
                } else {
                    self.blocks[l].apply(xs, &mut tmp);
                }
                for (yr, t) in y[row * n..(row + 1) * n].iter_mut().zip(&tmp) {
                    *yr += s * t;
                }
            }
        }
        Ok(y)
    }

    /// Row-major triplets of `C` (3n×3n).
    pub fn triplets(&self) -> Vec<(usize, usize, C64)> {
        let n = self.n();
        let per: Vec<Vec<(usize, usize, C64)>> = self.blocks.iter().map(|b| b.triplets()).collect();
        let mut out = Vec::new();
        for (i, terms) in self.signed().iter().enumerate() {
            let mut rows: Vec<(usize, usize, C64)> = Vec::new();
            for &(l, s, j) in terms {
                rows.extend(per[l].iter().map(|&(r, c, v)| (i * n + r, j * n + c, v * s)));
            }
            rows.sort_by_key(|&(r, c, _)| (r, c));
            out.extend(rows);
        }
        out
    }

    pub fn to_sparse(&self) -> SparseRowMat<usize, C64> {
        let n = 3 * self.n();
        let t: Vec<_> = self.triplets().into_iter().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        SparseRowMat::try_new_from_triplets(n, n, &t).expect("valid triplets")
    }

    pub fn to_dense(&self) -> Mat<C64> {
        let n = 3 * self.n();
        let mut m = Mat::<C64>::zeros(n, n);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    /// Dense skew parts `(M₁, M₂, M₃)`.
    pub fn skew_parts(&self) -> [Mat<C64>; 3] {
        [self.blocks[0].skew_dense(), self.blocks[1].skew_dense(), self.blocks[2].skew_dense()]
    }

    /// Column `j` of the stacked `M = [M₁; M₂; M₃]` (length `3n`).
    pub fn m_column(&self, j: usize) -> Vec<C64> {
        let n = self.n();
        let mut e = vec![C64::new(0.0, 0.0); n];
        e[j] = C64::new(1.0, 0.0);
        let mut out = Vec::with_capacity(3 * n);
        let mut a = vec![C64::new(0.0, 0.0); n];
        let mut b = vec![C64::new(0.0, 0.0); n];
        for blk in &self.blocks {
            blk.apply(&e, &mut a);
            blk.apply_adjoint(&e, &mut b);
            out.extend(a.iter().zip(&b).map(|(x, y)| x - y));
        }
        out
    }

    /// Lattice neighbors of every node: the node itself plus every node
    /// coupled to it through an off-diagonal of some `C_ℓ` or `C_ℓᴴ`. Each
    /// list is ascending.
    pub fn neighbor_table(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        let mut table: Vec<Vec<usize>> = (0..n).map(|j| vec![j]).collect();
        for blk in &self.blocks {
            for (r, &c) in blk.shift.cols.iter().enumerate() {
                table[r].push(c);
                table[c].push(r);
            }
        }
        for row in &mut table {
            row.sort_unstable();
            row.dedup();
        }
        table
    }

    /// Write `C` in Matrix Market coordinate format (1-based indices).
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let t = self.triplets();
        let n = 3 * self.n();
        writeln!(w, "%%MatrixMarket matrix coordinate complex general")?;
        writeln!(w, "{n} {n} {}", t.len())?;
        for (r, c, v) in t {
            writeln!(w, "{} {} {:.17e} {:.17e}", r + 1, c + 1, v.re, v.im)?;
        }
        Ok(())
    }
}

/// Neighbor set (0-based offsets) of the node with 1-based coordinates `i`.
pub fn neighbor_set(i: [i64; 3], spec: &LatticeSpec) -> Vec<usize> {
    let curl = CurlBlocks::assemble(spec);
    let j = spec.index_map().offset(i);
    curl.neighbor_table().swap_remove(j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Shifts;
    use crate::linalg::{frob, max_abs_diff};

    fn spec_5() -> LatticeSpec {
        let a = crate::fixtures::sheared_vectors();
        LatticeSpec::from_vectors(a, [4, 5, 6], crate::lattice::k_from_fractional(&a, [0.13, -0.21, 0.34]).unwrap()).unwrap()
    }

    #[test]
    fn shift_blocks_unitary() {
        let a = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let s = LatticeSpec::new(a, [5, 3, 2], [0.2, -0.3, 0.1], Shifts::default()).unwrap();
        let (j11, _, _, jj2) = assemble_shift_blocks(&s);
        for p in [j1(5, 2, 1, 0.7), j11, jj2, j1(5, 5, 2, -1.1), j1(5, 0, -1, 0.3)] {
            let d = p.to_dense();
            let g = d.adjoint() * &d;
            assert!(max_abs_diff(&g, &Mat::<C64>::identity(p.dim(), p.dim())) < 1e-14);
        }
    }

    #[test]
    fn plain_shift_without_split() {
        let p = j1(4, 0, 0, 0.0);
        assert_eq!(p.cols, vec![0, 1, 2, 3]);
        let p = j1(4, 1, 0, 0.0);
        assert_eq!(p.cols, vec![3, 0, 1, 2]);
        assert!(p.vals.iter().all(|v| (v - C64::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn two_node_hand_block() {
        let s = LatticeSpec::simple_cubic([2, 2, 2], [0.0, 0.0, 0.0]).unwrap();
        let c = CurlBlocks::assemble(&s);
        let c1 = c.block(0).to_dense();
        // δ = 1/2: each 2×2 diagonal block is 2·[[-1, 1], [1, -1]]
        for r in 0..8 {
            for col in 0..8 {
                let want = if r == col {
                    -2.0
                } else if r / 2 == col / 2 {
                    2.0
                } else {
                    0.0
                };
                assert!((c1[(r, col)] - C64::new(want, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn block_structure() {
        let s = spec_5();
        let c = CurlBlocks::assemble(&s);
        for l in 0..3 {
            let d = c.block(l).to_dense();
            let n = c.n();
            for r in 0..n {
                assert!((d[(r, r)] + C64::new(c.block(l).inv_delta, 0.0)).norm() < 1e-12);
                let off_row = (0..n).filter(|&q| q != r && d[(r, q)].norm() > 0.0).count();
                let off_col = (0..n).filter(|&q| q != r && d[(q, r)].norm() > 0.0).count();
                assert_eq!((off_row, off_col), (1, 1));
            }
            let m = c.block(l).skew_dense();
            assert!(max_abs_diff(&m.adjoint().to_owned(), &(-&m)) < 1e-14);
        }
    }

    #[test]
    fn matrix_free_matches_dense() {
        let s = spec_5();
        let c = CurlBlocks::assemble(&s);
        let dense = c.to_dense();
        let n = 3 * c.n();
        let x: Vec<C64> = (0..n).map(|i| C64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos())).collect();
        let xm = Mat::<C64>::from_fn(n, 1, |i, _| x[i]);
        let y = c.apply(&x).unwrap();
        let yd = &dense * &xm;
        let ya = c.apply_adjoint(&x).unwrap();
        let yad = dense.adjoint() * &xm;
        for i in 0..n {
            assert!((y[i] - yd[(i, 0)]).norm() < 1e-12);
            assert!((ya[i] - yad[(i, 0)]).norm() < 1e-12);
        }
        let sp = c.to_sparse();
        assert!(max_abs_diff(&sp.to_dense(), &dense) < 1e-14);
    }

    #[test]
    fn blocks_commute_and_identity() {
        let s = spec_5();
        let c = CurlBlocks::assemble(&s);
        let b: Vec<Mat<C64>> = (0..3).map(|l| c.block(l).to_dense()).collect();
        let scale = frob(&b[0]).max(frob(&b[1])).max(frob(&b[2]));
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let comm = &b[i] * &b[j] - &b[j] * &b[i];
            assert!(frob(&comm) < 1e-11 * scale * scale);
        }
        let n = c.n();
        for l in 0..3 {
            let dl = 1.0 / c.block(l).inv_delta;
            let id = Mat::<C64>::identity(n, n);
            let rhs = -(b[l].adjoint() * (&id + faer::Scale(C64::new(dl, 0.0)) * &b[l]));
            assert!(max_abs_diff(&b[l], &rhs) < 1e-12 * scale);
        }
        let m = c.skew_parts();
        let comm = &m[0] * &m[1] - &m[1] * &m[0];
        assert!(frob(&comm) < 1e-11 * scale * scale);
    }

    #[test]
    fn m_columns_nonzero() {
        let s = LatticeSpec::simple_cubic([4, 4, 4], [0.1, 0.2, 0.3]).unwrap();
        let c = CurlBlocks::assemble(&s);
        for j in 0..c.n() {
            assert!(c.m_column(j).iter().map(|v| v.norm_sqr()).sum::<f64>() > 1e-6);
        }
    }

    #[test]
    fn simple_cubic_neighbors() {
        let s = LatticeSpec::simple_cubic([5, 5, 5], [0.1, 0.2, 0.3]).unwrap();
        let m = s.index_map();
        let mut want: Vec<usize> = [[2, 2, 2], [1, 2, 2], [3, 2, 2], [2, 1, 2], [2, 3, 2], [2, 2, 1], [2, 2, 3]]
            .iter()
            .map(|&c| m.offset(c))
            .collect();
        want.sort_unstable();
        assert_eq!(neighbor_set([2, 2, 2], &s), want);
    }

    #[test]
    fn face_node_uses_shift_pattern() {
        let s = spec_5();
        let c = CurlBlocks::assemble(&s);
        let m = s.index_map();
        let [_, n2, _] = s.dims();
        // row on the i2 = n2 face couples through J_{1,1}
        let r = m.offset([1, n2 as i64, 2]);
        let d = c.block(1).to_dense();
        let cols: Vec<usize> = (0..c.n()).filter(|&q| q != r && d[(r, q)].norm() > 0.0).collect();
        let sh = s.shifts();
        let expect_i1 = if sh.m11 >= 1 { s.dims()[0] as i64 - sh.m11 + 1 } else { 1 };
        assert_eq!(cols, vec![m.offset([expect_i1, 1, 2])]);
    }

    #[test]
    fn neighbors_symmetric() {
        let s = spec_5();
        let t = CurlBlocks::assemble(&s).neighbor_table();
        for (i, row) in t.iter().enumerate() {
            assert!(row.len() <= 7);
            for &j in row {
                assert!(t[j].contains(&i));
            }
        }
    }

    #[test]
    fn matrix_market_header() {
        let s = LatticeSpec::simple_cubic([2, 2, 2], [0.1, 0.1, 0.1]).unwrap();
        let mut buf = Vec::new();
        CurlBlocks::assemble(&s).write_matrix_market(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "%%MatrixMarket matrix coordinate complex general");
        let nnz: usize = lines.next().unwrap().split_whitespace().nth(2).unwrap().parse().unwrap();
        assert_eq!(lines.count(), nnz);
    }
}
