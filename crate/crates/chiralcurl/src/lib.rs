//! Discrete single-curl operator of the 3D Maxwell equations with Pasteur
//! (reciprocal chiral) media on Bravais lattices.
//!
//! The crate assembles the Yee-grid curl `C` with Bloch phases, diagonalizes
//! it with an FFT-backed unitary basis `T`, builds the chirality-dependent
//! Hermitian pencil `(A_γ, B_γ)` and its null-space-free reduction, and
//! tracks how eigenvalues bifurcate as the chirality `γ` crosses
//! `γ* = √εᵢ`.
//!
//! Typical flow:
//!
//! ```no_run
//! use chiralcurl::{Discretization, LatticeSpec, MaterialMask};
//!
//! let spec = LatticeSpec::simple_cubic([4, 4, 4], [0.3, 0.2, 0.1]).unwrap();
//! let disc = Discretization::new(spec).unwrap();
//! let mask = MaterialMask::from_nodes(disc.spec().index_map(), &[[2, 2, 2]], 13.0, 1.0).unwrap();
//! let spectrum = chiralcurl::nfgep::assemble_nfgep(&disc, &mask, 2.0)
//!     .unwrap()
//!     .solve(false)
//!     .unwrap();
//! assert_eq!(spectrum.values.len(), 4 * disc.n());
//! ```

pub mod assignment;
pub mod checks;
pub mod commands;
pub mod continuation;
pub mod curl;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod lattice;
pub mod linalg;
pub mod nfgep;
pub mod par;
pub mod pencil;
pub mod spectral;
pub mod structure;

mod discretization;

pub use discretization::Discretization;
pub use error::{Error, Result};
pub use lattice::{IndexMap, LatticeSpec, MaterialMask, Shifts};

/// Complex double used throughout.
pub type C64 = num_complex::Complex64;

/// Crate version embedded in every output file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
