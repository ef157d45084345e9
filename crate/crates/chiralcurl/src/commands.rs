//! The four front-end commands. Each writes its outputs into a directory and
//! returns the report it wrote.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checks::{self, Check};
use crate::continuation::{self, BifurcationEvent, RefineOptions, SweepOptions};
use crate::error::{Error, Result};
use crate::io::{self, Cplx, Provenance, RunConfig, Task};
use crate::lattice::{LatticeSpec, MaterialMask};
use crate::nfgep::assemble_nfgep;
use crate::par::Execution;
use crate::structure::{self, RegularityCertificate};
use crate::Discretization;

pub const VERIFY_FILE: &str = "verify.json";
pub const CURVES_FILE: &str = "curves.csv";
pub const EVENTS_FILE: &str = "events.json";
pub const SWEEP_META_FILE: &str = "sweep_meta.json";
pub const CERTIFICATE_FILE: &str = "certificate.json";
pub const NFGEP_FILE: &str = "nfgep.json";

/// Process exit status for an error: 2 for anything the configuration
/// caused, 3 for the dimension cap, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::DimensionCap { .. } => 3,
        Error::Config(_)
        | Error::InvalidLattice(_)
        | Error::InvalidMask(_)
        | Error::ZeroBlochVector
        | Error::InvalidArgument(_)
        | Error::CriticalGamma(_)
        | Error::LengthMismatch { .. }
        | Error::Json(_) => 2,
        Error::Solver(_) | Error::Io(_) | Error::Csv(_) => 1,
    }
}

/// Lattice, mask and discretization described by a config.
pub struct Problem {
    pub spec: LatticeSpec,
    pub mask: MaterialMask,
    pub disc: Discretization,
}

impl Problem {
    pub fn build(cfg: &RunConfig) -> Result<Self> {
        let spec = cfg.lattice_spec()?;
        let mask = cfg.mask(&spec)?;
        let disc = Discretization::with_tau(spec.clone(), cfg.tau())?;
        Ok(Self { spec, mask, disc })
    }

    fn check_cap(&self, cfg: &RunConfig) -> Result<()> {
        let dim = 6 * self.disc.n();
        if dim > cfg.max_dim {
            return Err(Error::DimensionCap { dim, cap: cfg.max_dim });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyReport {
    pub provenance: Provenance,
    pub dims: [usize; 3],
    pub tau: [f64; 3],
    pub tau_perturbed: bool,
    pub gamma_star: f64,
    pub checks: Vec<Check>,
    pub pass: bool,
}

/// Diagonalization, SVD, census and reduced-problem equivalence checks.
pub fn cmd_verify(cfg: &RunConfig, out: &Path) -> Result<VerifyReport> {
    let p = Problem::build(cfg)?;
    p.check_cap(cfg)?;
    let (disc, mask) = (&p.disc, &p.mask);
    let basis = disc.svd()?;
    let n = disc.n();
    let gs = mask.gamma_star();
    let mut list = vec![Check::below("diagonalization", checks::diagonalization_residual(disc), 1e-12)];
    let svd = checks::svd_check(disc)?;
    list.push(Check::below("svd_factorization", svd.factor_rel, 1e-10));
    list.push(Check::below("svd_kernel", svd.kernel_rel, 1e-10));
    list.push(Check::count("svd_rank", svd.rank, 2 * n));
    list.push(Check::below("svd_unitary_q", svd.unitarity_q, 1e-12));
    list.push(Check::below("svd_unitary_p", svd.unitarity_p, 1e-12));
    let census = checks::spectrum_census(disc, mask, 0.5 * gs, 1e-9, cfg.max_dim)?;
    list.push(Check::count("census_zero", census.zero, 2 * n));
    list.push(Check::count("census_positive", census.positive, 2 * n));
    list.push(Check::count("census_negative", census.negative, 2 * n));
    for f in [0.5, 0.9, 1.2] {
        let mis = checks::nfgep_mismatch(disc, mask, f * gs, cfg.max_dim)?;
        list.push(Check::below(format!("nfgep_equivalence_{f}"), mis, 1e-8));
    }
    let report = VerifyReport {
        provenance: Provenance::of(cfg),
        dims: p.spec.dims(),
        tau: basis.tau,
        tau_perturbed: basis.tau_perturbed,
        gamma_star: gs,
        pass: list.iter().all(|c| c.pass),
        checks: list,
    };
    io::write_json(&out.join(VERIFY_FILE), &report)?;
    Ok(report)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepMeta {
    pub provenance: Provenance,
    pub gamma_star: f64,
    pub n_samples: usize,
    pub n_curves: usize,
    pub trivial_zeros: usize,
    /// Intervals whose matching stayed ambiguous after halving.
    pub flagged: Vec<[f64; 2]>,
    pub n_events: usize,
}

/// Sweep, detect, refine; writes the curves, the events and a metadata sidecar.
pub fn cmd_sweep(cfg: &RunConfig, out: &Path) -> Result<(SweepMeta, Vec<BifurcationEvent>)> {
    let sc = cfg.sweep.as_ref().ok_or_else(|| Error::Config("sweep: required for the sweep command".into()))?;
    let p = Problem::build(cfg)?;
    p.check_cap(cfg)?;
    let opts = SweepOptions { max_halvings: sc.max_halvings, max_dim: cfg.max_dim, ..Default::default() };
    let curves = continuation::sweep(&p.disc, &p.mask, &sc.grid(), opts)?;
    let coarse = continuation::detect_events(&curves);
    let ropts = RefineOptions { tol: sc.refine_tol, ..Default::default() };
    let events = continuation::refine_events(&p.disc, &p.mask, &curves, &coarse, ropts)?;
    curves.write_csv(&out.join(CURVES_FILE))?;
    continuation::write_events(&out.join(EVENTS_FILE), &events)?;
    let meta = SweepMeta {
        provenance: Provenance::of(cfg),
        gamma_star: curves.gamma_star,
        n_samples: curves.n_samples(),
        n_curves: curves.n_curves(),
        trivial_zeros: curves.trivial_zeros,
        flagged: curves.flagged.iter().map(|&(a, b)| [a, b]).collect(),
        n_events: events.len(),
    };
    io::write_json(&out.join(SWEEP_META_FILE), &meta)?;
    Ok((meta, events))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub provenance: Provenance,
    pub gamma_star: f64,
    pub n_inside: usize,
    pub n_boundary: usize,
    pub n_interior: usize,
    pub certificate: RegularityCertificate,
}

/// Regularity certificate at the critical chirality. The dense census is
/// included when `6n` is within the cap.
pub fn cmd_analyze(cfg: &RunConfig, out: &Path) -> Result<AnalyzeReport> {
    let p = Problem::build(cfg)?;
    let certificate = structure::certificate(&p.disc, &p.mask, Some(cfg.max_dim))?;
    let (boundary, interior) = crate::lattice::classify_boundary(&p.mask, &p.spec);
    let report = AnalyzeReport {
        provenance: Provenance::of(cfg),
        gamma_star: p.mask.gamma_star(),
        n_inside: p.mask.n_inside(),
        n_boundary: boundary.len(),
        n_interior: interior.len(),
        certificate,
    };
    io::write_json(&out.join(CERTIFICATE_FILE), &report)?;
    Ok(report)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NfgepSample {
    pub gamma: f64,
    pub dim: usize,
    pub nonreal: usize,
    pub values: Vec<Cplx>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NfgepReport {
    pub provenance: Provenance,
    pub gamma_star: f64,
    pub samples: Vec<NfgepSample>,
}

/// Spectra of the reduced problem at `cfg.gammas`, or on the sweep grid
/// when none are given.
pub fn cmd_nfgep(cfg: &RunConfig, out: &Path) -> Result<NfgepReport> {
    let gammas = match (&cfg.gammas[..], &cfg.sweep) {
        ([], Some(s)) => s.grid(),
        ([], None) => return Err(Error::Config("gammas: required for the nfgep command when no sweep is given".into())),
        (g, _) => g.to_vec(),
    };
    let p = Problem::build(cfg)?;
    if 4 * p.disc.n() > cfg.max_dim {
        return Err(Error::DimensionCap { dim: 4 * p.disc.n(), cap: cfg.max_dim });
    }
    let solve = |g: &f64| -> Result<NfgepSample> {
        let sp = assemble_nfgep(&p.disc, &p.mask, *g)?.solve(false)?;
        Ok(NfgepSample {
            gamma: *g,
            dim: sp.values.len(),
            nonreal: sp.values.iter().filter(|v| continuation::is_nonreal(**v)).count(),
            values: sp.values.iter().map(|&v| v.into()).collect(),
        })
    };
    let samples = crate::par::map(Execution::Parallel, &gammas, solve).into_iter().collect::<Result<Vec<_>>>()?;
    let report = NfgepReport { provenance: Provenance::of(cfg), gamma_star: p.mask.gamma_star(), samples };
    io::write_json(&out.join(NFGEP_FILE), &report)?;
    Ok(report)
}

/// Run one task; `Ok(false)` means an invariant check failed.
pub fn run_task(cfg: &RunConfig, task: Task, out: &Path) -> Result<bool> {
    match task {
        Task::Verify => Ok(cmd_verify(cfg, out)?.pass),
        Task::Sweep => cmd_sweep(cfg, out).map(|_| true),
        Task::Analyze => cmd_analyze(cfg, out).map(|_| true),
        Task::Nfgep => cmd_nfgep(cfg, out).map(|_| true),
    }
}
