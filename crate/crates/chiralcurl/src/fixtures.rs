//! Standard lattices and masks shared by tests, benches and the CLI.

use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};

use crate::error::Result;
use crate::lattice::{k_from_fractional, LatticeSpec, MaterialMask, Vec3};

/// Permittivity used by the reference fixtures.
pub const EPS_I: f64 = 13.0;
pub const EPS_O: f64 = 1.0;
/// Bloch vector, as `k·a_ℓ`, of the reference fixtures.
pub const K_FRAC: Vec3 = [0.3, 0.2, 0.1];

/// Hexagonal lattice with unit in-plane spacing and height `c = 1.2`.
pub fn hexagonal_vectors() -> [Vec3; 3] {
    [[1.0, 0.0, 0.0], [0.5, 0.5 * 3f64.sqrt(), 0.0], [0.0, 0.0, 1.2]]
}

/// A sheared cell whose shifts use `ρ₁ = ρ₂ = 1` and a nonzero `m̂₁`
/// (compatible with `n₁ = 4`, `n₂ = 5`).
pub fn sheared_vectors() -> [Vec3; 3] {
    [[1.0, 0.0, 0.0], [-0.25, 1.0, 0.0], [0.25, -0.4, 1.0]]
}

pub fn hexagonal(n: [usize; 3], k_frac: Vec3) -> Result<LatticeSpec> {
    let a = hexagonal_vectors();
    LatticeSpec::from_vectors(a, n, k_from_fractional(&a, k_frac)?)
}

pub fn sheared(n: [usize; 3], k_frac: Vec3) -> Result<LatticeSpec> {
    let a = sheared_vectors();
    LatticeSpec::from_vectors(a, n, k_from_fractional(&a, k_frac)?)
}

/// The four lattice families used for diagonalization checks, with grids
/// drawn from `{4, 5, 6}` where the lattice allows it.
pub fn lattice_family(k_frac: Vec3) -> Result<Vec<(&'static str, LatticeSpec)>> {
    Ok(vec![
        ("simple_cubic", LatticeSpec::simple_cubic([4, 5, 6], k_frac)?),
        ("fcc", LatticeSpec::fcc([4, 6, 4], k_frac, 1.0)?),
        ("hexagonal", hexagonal([6, 5, 4], k_frac)?),
        ("sheared", sheared([4, 5, 6], k_frac)?),
    ])
}

/// Random `k·a_ℓ` inside the admissible bracket, bounded away from zero.
pub fn random_k_frac(rng: &mut StdRng) -> Vec3 {
    let mut f = [0.0; 3];
    for x in &mut f {
        let mag = rng.random_range(0.05..0.6);
        *x = if rng.random::<bool>() { mag } else { -mag };
    }
    f
}

/// `4×4×4` simple cubic grid with `k·a = (0.3, 0.2, 0.1)`.
pub fn cubic4() -> LatticeSpec {
    LatticeSpec::simple_cubic([4, 4, 4], K_FRAC).expect("valid fixture")
}

const STAR: [[i64; 3]; 6] = [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]];

/// A node and its six axis neighbors, so the centre is an interior node.
pub fn star_nodes(center: [i64; 3]) -> Vec<[i64; 3]> {
    let mut v = vec![center];
    v.extend(STAR.iter().map(|d| [center[0] + d[0], center[1] + d[1], center[2] + d[2]]));
    v
}

/// Seven-node star centred at `(3,3,3)` on any grid.
pub fn interior_mask(spec: &LatticeSpec) -> MaterialMask {
    MaterialMask::from_nodes(spec.index_map(), &star_nodes([3, 3, 3]), EPS_I, EPS_O).expect("valid fixture")
}

/// Asymmetric nine-node mask on the `4³` grid: a star at `(2,2,2)` plus two
/// diagonal nodes. Its first eigenvalue collision above `γ*` happens near
/// `γ ≈ 3.8576` at a negative real location.
pub fn collision_mask(spec: &LatticeSpec) -> MaterialMask {
    let mut nodes = star_nodes([2, 2, 2]);
    nodes.push([3, 3, 2]);
    nodes.push([3, 2, 3]);
    MaterialMask::from_nodes(spec.index_map(), &nodes, EPS_I, EPS_O).expect("valid fixture")
}

/// Random mask built from axis-aligned boxes, reproducible from `seed`.
/// Roughly `fill` of the nodes end up inside.
pub fn random_box_mask(spec: &LatticeSpec, seed: u64, fill: f64) -> MaterialMask {
    let mut rng = StdRng::seed_from_u64(seed);
    let map = spec.index_map();
    let dims = spec.dims();
    let n = map.len();
    let target = ((fill * n as f64).round() as usize).clamp(1, n);
    let mut inside = vec![false; n];
    let mut count = 0;
    while count < target {
        let lo: [usize; 3] = std::array::from_fn(|l| rng.random_range(0..dims[l]));
        let ext: [usize; 3] = std::array::from_fn(|l| rng.random_range(1..=dims[l].div_ceil(2).max(1)));
        for d3 in 0..ext[2] {
            for d2 in 0..ext[1] {
                for d1 in 0..ext[0] {
                    let c = [(lo[0] + d1) as i64 + 1, (lo[1] + d2) as i64 + 1, (lo[2] + d3) as i64 + 1];
                    let j = map.offset(c);
                    if !inside[j] && count < target {
                        inside[j] = true;
                        count += 1;
                    }
                }
            }
        }
    }
    MaterialMask::new(inside, EPS_I, EPS_O).expect("valid fixture")
}

/// Random mask with each node inside independently with probability `p`.
pub fn random_bernoulli_mask(n: usize, seed: u64, p: f64) -> MaterialMask {
    let mut rng = StdRng::seed_from_u64(seed);
    let inside = (0..n).map(|_| rng.random::<f64>() < p).collect();
    MaterialMask::new(inside, EPS_I, EPS_O).expect("valid fixture")
}
