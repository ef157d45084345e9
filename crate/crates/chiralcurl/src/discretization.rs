use std::sync::OnceLock;

use faer::Mat;
use num_complex::Complex64 as C64;

use crate::curl::CurlBlocks;
use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;
use crate::par::Execution;
use crate::spectral::{Factor, SpectralBasis, SpectralOps, DEFAULT_TAU};

/// Everything that depends only on the lattice: the sparse curl, the FFT
/// basis, the SVD factors (when `k ≠ 0`) and lazily built dense copies.
#[derive(Debug)]
pub struct Discretization {
    spec: LatticeSpec,
    curl: CurlBlocks,
    ops: SpectralOps,
    svd: Option<SpectralBasis>,
    dense_t: OnceLock<Mat<C64>>,
    dense_c: OnceLock<Mat<C64>>,
    factors: OnceLock<[Mat<C64>; 4]>,
}

impl Discretization {
    pub fn new(spec: LatticeSpec) -> Result<Self> {
        Self::with_tau(spec, DEFAULT_TAU)
    }

    pub fn with_tau(spec: LatticeSpec, tau: [f64; 3]) -> Result<Self> {
        let curl = CurlBlocks::assemble(&spec);
        let ops = SpectralOps::new(&spec);
        let svd = match SpectralBasis::new(&spec, &ops, tau) {
            Ok(b) => Some(b),
            Err(Error::ZeroBlochVector) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            spec,
            curl,
            ops,
            svd,
            dense_t: OnceLock::new(),
            dense_c: OnceLock::new(),
            factors: OnceLock::new(),
        })
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    /// Number of grid nodes `n`.
    pub fn n(&self) -> usize {
        self.spec.n_total()
    }

    pub fn curl(&self) -> &CurlBlocks {
        &self.curl
    }

    pub fn spectral(&self) -> &SpectralOps {
        &self.ops
    }

    /// SVD factors; fails with [`Error::ZeroBlochVector`] when `k = 0`.
    pub fn svd(&self) -> Result<&SpectralBasis> {
        self.svd.as_ref().ok_or(Error::ZeroBlochVector)
    }

    pub fn dense_t(&self) -> &Mat<C64> {
        self.dense_t.get_or_init(|| self.ops.dense_t(Execution::Parallel))
    }

    pub fn dense_c(&self) -> &Mat<C64> {
        self.dense_c.get_or_init(|| self.curl.to_dense())
    }

    fn factors(&self) -> Result<&[Mat<C64>; 4]> {
        let svd = self.svd()?;
        Ok(self.factors.get_or_init(|| {
            let t = self.dense_t();
            [Factor::Pr, Factor::Qr, Factor::P0, Factor::Q0].map(|f| svd.dense(t, f))
        }))
    }

    /// Dense `P_r` (3n×2n).
    pub fn pr(&self) -> Result<&Mat<C64>> {
        Ok(&self.factors()?[0])
    }
    /// Dense `Q_r` (3n×2n).
    pub fn qr(&self) -> Result<&Mat<C64>> {
        Ok(&self.factors()?[1])
    }
    /// Dense `P₀` (3n×n).
    pub fn p0(&self) -> Result<&Mat<C64>> {
        Ok(&self.factors()?[2])
    }
    /// Dense `Q₀` (3n×n).
    pub fn q0(&self) -> Result<&Mat<C64>> {
        Ok(&self.factors()?[3])
    }
}
