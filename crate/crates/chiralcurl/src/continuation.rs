//! γ-sweeps: eigenvalue curves, branch matching, event detection and
//! bracket refinement.
//!
//! Every sample solves the reduced `4n × 4n` problem; the `2n` trivial zero
//! eigenvalues of `(A_γ, B_γ)` are carried along as constant curves.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::assignment;
use crate::error::{check_len, Error, Result};
use crate::io::{self, Cplx};
use crate::lattice::MaterialMask;
use crate::linalg::{self, vnorm};
use crate::nfgep::{assemble_nfgep, recover_fields};
use crate::par::{self, Execution};
use crate::pencil::{self, assemble_pencil, b_diagonal, maxwell_to_pencil, rayleigh, sign_of_form};
use crate::structure::{self, InertiaSignature};
use crate::{Discretization, C64};

/// `|Im λ| < COLLISION_TOL·(1 + |Re λ|)` counts as real.
pub const COLLISION_TOL: f64 = 1e-8;
/// Maximum bisection depth of every refinement.
pub const MAX_DEPTH: usize = 60;

pub fn is_nonreal(z: C64) -> bool {
    z.im.abs() > COLLISION_TOL * (1.0 + z.re.abs())
}

/// Sign characteristic of a curve point as written to the CSV.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurveType {
    #[serde(rename = "+1")]
    Positive,
    #[serde(rename = "-1")]
    Negative,
    #[serde(rename = "0")]
    Unknown,
    #[serde(rename = "inf")]
    Infinite,
}

impl CurveType {
    pub fn as_str(self) -> &'static str {
        match self {
            CurveType::Positive => "+1",
            CurveType::Negative => "-1",
            CurveType::Unknown => "0",
            CurveType::Infinite => "inf",
        }
    }

    pub fn sign(self) -> Option<i8> {
        match self {
            CurveType::Positive => Some(1),
            CurveType::Negative => Some(-1),
            _ => None,
        }
    }

    fn from_sign(s: Option<i8>) -> Self {
        match s {
            Some(1) => CurveType::Positive,
            Some(-1) => CurveType::Negative,
            _ => CurveType::Unknown,
        }
    }
}

/// `γ` moved off the critical value by a relative `10⁻⁹` when it sits
/// within rounding of `γ*`, where the reduced problem is undefined.
pub fn evaluable_gamma(mask: &MaterialMask, gamma: f64) -> f64 {
    let gs = mask.gamma_star();
    if (mask.eps_i() - gamma * gamma).abs() <= 1e-12 * mask.eps_i() {
        gs * (1.0 + 1e-9)
    } else {
        gamma
    }
}

/// One unordered spectrum of the reduced problem.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub gamma: f64,
    pub values: Vec<C64>,
    pub types: Vec<CurveType>,
}

/// Pencil-space eigenvector `[h − iγIⁱe; e]` of a reduced eigenvector.
pub fn pencil_vector(disc: &Discretization, mask: &MaterialMask, gamma: f64, y: &[C64]) -> Result<Vec<C64>> {
    let (h, e) = recover_fields(disc, mask, gamma, y)?;
    maxwell_to_pencil(mask, gamma, &e, &h)
}

/// Solve at `γ` (nudged off `γ*`). Types are computed for real eigenvalues
/// when `with_types` is set.
pub fn snapshot(disc: &Discretization, mask: &MaterialMask, gamma: f64, with_types: bool) -> Result<Snapshot> {
    let g = evaluable_gamma(mask, gamma);
    let sp = assemble_nfgep(disc, mask, g)?.solve(with_types)?;
    let mut types = vec![CurveType::Unknown; sp.values.len()];
    if let Some(v) = sp.vectors.as_ref() {
        let b = b_diagonal(mask, g);
        for (k, &w) in sp.values.iter().enumerate() {
            if !is_nonreal(w) {
                let x = pencil_vector(disc, mask, g, &linalg::col_vec(v.as_ref(), k))?;
                types[k] = CurveType::from_sign(sign_of_form(&b, &x));
            }
        }
    }
    Ok(Snapshot { gamma: g, values: sp.values, types })
}

/// Assignment between consecutive spectra.
#[derive(Clone, Debug)]
pub struct Matching {
    /// `perm[i]` is the index in `next` continuing `prev[i]`.
    pub perm: Vec<usize>,
    /// Some row had two distinct candidates at (nearly) equal cost.
    pub ambiguous: bool,
}

/// Minimum total `|Δλ|` assignment with a penalty on real↔nonreal pairs.
/// Among equal-distance assignments the one with the smallest `Σ|Δλ|²` wins.
pub fn match_spectra(prev: &[C64], next: &[C64]) -> Matching {
    let n = prev.len();
    assert_eq!(n, next.len(), "spectra must have equal length");
    if prev == next {
        return Matching { perm: (0..n).collect(), ambiguous: false };
    }
    let scale = prev.iter().chain(next).fold(1.0f64, |a, z| a.max(z.norm()));
    let penalty = 10.0 * scale;
    let cost: Vec<Vec<f64>> = prev
        .iter()
        .map(|p| {
            next.iter()
                .map(|q| {
                    // the small squared term breaks the ties |Δλ| has whenever values move past each other
                    let d = (p - q).norm();
                    d + 1e-6 * d * d / scale + if is_nonreal(*p) != is_nonreal(*q) { penalty } else { 0.0 }
                })
                .collect()
        })
        .collect();
    let perm = assignment::solve(&cost);
    // ambiguous when exchanging the targets of two rows costs (almost) nothing
    let degenerate = |i: usize| prev.iter().enumerate().any(|(k, p)| k != i && (p - prev[i]).norm() <= 1e-8 * (1.0 + p.norm()));
    let total = assignment::total_cost(&cost, &perm);
    let mut ambiguous = false;
    'outer: for i in 0..n {
        if degenerate(i) {
            continue;
        }
        for k in i + 1..n {
            let (j, l) = (perm[i], perm[k]);
            if degenerate(k) || (next[j] - next[l]).norm() <= 1e-8 * (1.0 + next[j].norm()) {
                continue;
            }
            let delta = cost[i][l] + cost[k][j] - cost[i][j] - cost[k][l];
            if delta <= 1e-13 * (1.0 + total) {
                ambiguous = true;
                break 'outer;
            }
        }
    }
    Matching { perm, ambiguous }
}

#[derive(Clone, Copy, Debug)]
pub struct SweepOptions {
    pub exec: Execution,
    /// Rounds of adaptive interval halving.
    pub max_halvings: usize,
    /// An interval is halved when a matched nonreal pair keeps less than
    /// this fraction of its `|Im|`.
    pub shrink: f64,
    pub with_types: bool,
    /// Cap on the pencil dimension `6n`.
    pub max_dim: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { exec: Execution::Parallel, max_halvings: 4, shrink: 0.5, with_types: true, max_dim: pencil::DEFAULT_MAX_DIM }
    }
}

/// Matched eigenvalue curves over a `γ` grid.
#[derive(Clone, Debug)]
pub struct EigenCurveSet {
    pub gammas: Vec<f64>,
    /// `values[s][c]`: curve `c` at sample `s`.
    pub values: Vec<Vec<C64>>,
    pub types: Vec<Vec<CurveType>>,
    /// Trivial zero eigenvalues carried at every sample (`2n`).
    pub trivial_zeros: usize,
    /// Sample intervals whose matching stayed ambiguous.
    pub flagged: Vec<(f64, f64)>,
    pub gamma_star: f64,
}

impl EigenCurveSet {
    pub fn n_samples(&self) -> usize {
        self.gammas.len()
    }

    /// Tracked (nontrivial) curves, `4n`.
    pub fn n_curves(&self) -> usize {
        self.values.first().map_or(0, |v| v.len())
    }

    /// Eigenvalue count per sample including the trivial zeros, `6n`.
    pub fn total_count(&self) -> usize {
        self.n_curves() + self.trivial_zeros
    }

    pub fn curve(&self, c: usize) -> Vec<(f64, C64)> {
        self.gammas.iter().zip(&self.values).map(|(&g, v)| (g, v[c])).collect()
    }

    pub fn nonreal_count(&self, s: usize) -> usize {
        self.values[s].iter().filter(|z| is_nonreal(**z)).count()
    }

    /// Largest relative distance from a nonreal value to the nearest
    /// conjugate of another value at sample `s`.
    pub fn conjugate_defect(&self, s: usize) -> f64 {
        conjugate_defect(&self.values[s])
    }

    /// Curve holding the smallest positive real value at sample `s`.
    pub fn ground(&self, s: usize) -> Option<usize> {
        ground_of(&self.values[s])
    }

    /// CSV rows `gamma,curve_id,re,im,type` sorted by `(curve_id, gamma)`;
    /// the trivial zeros follow the tracked curves.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["gamma", "curve_id", "re", "im", "type"])?;
        for c in 0..self.n_curves() {
            for (s, &g) in self.gammas.iter().enumerate() {
                let z = self.values[s][c];
                w.write_record([io::fmt_f64(g), c.to_string(), io::fmt_f64(z.re), io::fmt_f64(z.im), self.types[s][c].as_str().to_string()])?;
            }
        }
        for c in self.n_curves()..self.total_count() {
            for &g in &self.gammas {
                w.write_record([io::fmt_f64(g), c.to_string(), io::fmt_f64(0.0), io::fmt_f64(0.0), CurveType::Unknown.as_str().to_string()])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("ASCII output"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        io::atomic_write(path, self.to_csv()?.as_bytes())
    }
}

pub fn conjugate_defect(values: &[C64]) -> f64 {
    let mut worst = 0.0f64;
    for (i, z) in values.iter().enumerate() {
        if !is_nonreal(*z) {
            continue;
        }
        let best = values
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, w)| (w - z.conj()).norm())
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(best / (1.0 + z.norm()));
    }
    worst
}

fn ground_of(values: &[C64]) -> Option<usize> {
    values
        .iter()
        .enumerate()
        .filter(|(_, z)| !is_nonreal(**z) && z.re > 0.0)
        .min_by(|a, b| a.1.re.total_cmp(&b.1.re))
        .map(|(c, _)| c)
}

fn needs_halving(prev: &Snapshot, next: &Snapshot, shrink: f64) -> bool {
    if prev.gamma == next.gamma {
        return false;
    }
    let m = match_spectra(&prev.values, &next.values);
    m.ambiguous
        || m.perm.iter().enumerate().any(|(i, &j)| {
            let (p, q) = (prev.values[i], next.values[j]);
            is_nonreal(p) && is_nonreal(q) && q.im.abs() < shrink * p.im.abs()
        })
}

/// Sweep `grid` (non-decreasing). Samples are solved independently; the
/// matching and halving decisions run in grid order.
pub fn sweep(disc: &Discretization, mask: &MaterialMask, grid: &[f64], opts: SweepOptions) -> Result<EigenCurveSet> {
    let n = disc.n();
    check_len(n, mask.len())?;
    if 6 * n > opts.max_dim {
        return Err(Error::DimensionCap { dim: 6 * n, cap: opts.max_dim });
    }
    if grid.is_empty() || grid.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
        return Err(Error::InvalidArgument("gamma grid must be nonempty, finite and nonnegative".into()));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("gamma grid must be non-decreasing".into()));
    }
    let solve = |g: &f64| snapshot(disc, mask, *g, opts.with_types);
    let mut snaps: Vec<Snapshot> = par::map(opts.exec, grid, solve).into_iter().collect::<Result<_>>()?;
    for _ in 0..opts.max_halvings {
        let mids: Vec<f64> = snaps
            .windows(2)
            .filter(|w| needs_halving(&w[0], &w[1], opts.shrink))
            .map(|w| 0.5 * (w[0].gamma + w[1].gamma))
            .collect();
        if mids.is_empty() {
            break;
        }
        let extra: Vec<Snapshot> = par::map(opts.exec, &mids, solve).into_iter().collect::<Result<_>>()?;
        snaps.extend(extra);
        snaps.sort_by(|a, b| a.gamma.total_cmp(&b.gamma));
    }
    let m = snaps[0].values.len();
    let mut order: Vec<usize> = (0..m).collect();
    let mut values = Vec::with_capacity(snaps.len());
    let mut types = Vec::with_capacity(snaps.len());
    let mut flagged = Vec::new();
    for (s, snap) in snaps.iter().enumerate() {
        if s > 0 {
            let prev = &snaps[s - 1];
            let mt = match_spectra(&prev.values, &snap.values);
            if mt.ambiguous {
                flagged.push((prev.gamma, snap.gamma));
            }
            order = order.iter().map(|&i| mt.perm[i]).collect();
        }
        values.push(order.iter().map(|&i| snap.values[i]).collect::<Vec<_>>());
        types.push(order.iter().map(|&i| snap.types[i]).collect::<Vec<_>>());
    }
    Ok(EigenCurveSet {
        gammas: snaps.iter().map(|s| s.gamma).collect(),
        values,
        types,
        trivial_zeros: 2 * n,
        flagged,
        gamma_star: mask.gamma_star(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ImaginaryBirth,
    CollisionSplit,
    RealCollisionMerge,
    NewGroundState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BifurcationEvent {
    pub kind: EventKind,
    pub gamma_located: f64,
    pub location: Cplx,
    pub bracket: [f64; 2],
    /// `(μ_left, μ_right)` of the two real curves after a split.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub types_after: Option<[i8; 2]>,
    pub curve_ids: Vec<usize>,
    /// Conjugate pairs created (births and merges).
    pub pairs: usize,
    /// The indicator behaved as expected at both ends of the bracket.
    pub confident: bool,
    pub refined: bool,
    /// `(Δp₊, Δp₋)` of `A_γ − Re(location)·B_γ` across the event.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inertia_change: Option<[i64; 2]>,
    /// Radius of the disk around `location` probed during refinement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_radius: Option<f64>,
    /// Indices of the samples bounding the coarse bracket.
    #[serde(skip)]
    pub sample: usize,
    #[serde(skip)]
    pub sample_hi: usize,
}

impl BifurcationEvent {
    fn coarse(kind: EventKind, curves: &EigenCurveSet, s: usize, location: C64, curve_ids: Vec<usize>) -> Self {
        Self {
            kind,
            gamma_located: 0.5 * (curves.gammas[s] + curves.gammas[s + 1]),
            location: location.into(),
            bracket: [curves.gammas[s], curves.gammas[s + 1]],
            types_after: None,
            curve_ids,
            pairs: 0,
            confident: true,
            refined: false,
            inertia_change: None,
            probe_radius: None,
            sample: s,
            sample_hi: s + 1,
        }
    }

    pub fn width(&self) -> f64 {
        self.bracket[1] - self.bracket[0]
    }

    /// Whether `(Δp₊, Δp₋)` has the form `(t, −t)`.
    pub fn inertia_dichotomy(&self) -> Option<bool> {
        self.inertia_change.map(|[a, b]| a == -b)
    }
}

fn nearest(values: &[C64], target: C64, pred: impl Fn(usize) -> bool) -> Option<usize> {
    (0..values.len()).filter(|&i| pred(i)).min_by(|&a, &b| (values[a] - target).norm().total_cmp(&(values[b] - target).norm()))
}

/// Relative half-width of the band around the critical parameter whose
/// samples are too ill-conditioned to classify.
pub const CRITICAL_BAND: f64 = 1e-6;

/// Coarse events on consecutive samples. Brackets are sample intervals. The
/// samples inside the critical band are skipped; the birth is read off the
/// last sample below and the first sample above it.
pub fn detect_events(curves: &EigenCurveSet) -> Vec<BifurcationEvent> {
    let mut out = Vec::new();
    let gs = curves.gamma_star;
    let ns = curves.n_samples();
    let band = |g: f64| (g - gs).abs() <= CRITICAL_BAND * gs;
    let keep: Vec<usize> = (0..ns).filter(|&s| !band(curves.gammas[s])).collect();
    let upper = |v: &[C64], c: usize| is_nonreal(v[c]) && v[c].im > 0.0;
    let mut was_nonreal = vec![false; curves.n_curves()];
    for w in keep.windows(2) {
        let (s, t) = (w[0], w[1]);
        let (v0, v1) = (&curves.values[s], &curves.values[t]);
        for (c, z) in v0.iter().enumerate() {
            was_nonreal[c] |= is_nonreal(*z);
        }
        if curves.gammas[s] == curves.gammas[t] {
            continue;
        }
        let coarse = |kind, loc, ids| {
            let mut e = BifurcationEvent::coarse(kind, curves, s, loc, ids);
            e.bracket[1] = curves.gammas[t];
            e.sample_hi = t;
            e.gamma_located = 0.5 * (e.bracket[0] + e.bracket[1]);
            e
        };
        let born: Vec<usize> = (0..v1.len()).filter(|&c| upper(v1, c) && !is_nonreal(v0[c])).collect();
        if curves.gammas[s] < gs && curves.gammas[t] > gs {
            // everything at the crossing is attributed to the birth
            if !born.is_empty() {
                let mut ids = born.clone();
                for &c in &born {
                    if let Some(p) = nearest(v1, v1[c].conj(), |k| !is_nonreal(v0[k]) && is_nonreal(v1[k]) && v1[k].im < 0.0) {
                        ids.push(p);
                    }
                }
                let loc = born.iter().map(|&c| v1[c]).min_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
                let mut e = coarse(EventKind::ImaginaryBirth, loc, ids);
                e.pairs = born.len();
                out.push(e);
            }
            continue;
        }
        for &c in &born {
            let mut ids = vec![c];
            ids.extend(nearest(v1, v1[c].conj(), |k| k != c && !is_nonreal(v0[k]) && is_nonreal(v1[k])));
            let mut e = coarse(EventKind::RealCollisionMerge, v1[c], ids);
            e.pairs = 1;
            out.push(e);
        }
        // splits: upper members at s that are real at t
        for c in (0..v0.len()).filter(|&c| upper(v0, c) && !is_nonreal(v1[c])) {
            let mut ids = vec![c];
            if let Some(p) = nearest(v0, v0[c].conj(), |k| k != c && is_nonreal(v0[k]) && !is_nonreal(v1[k])) {
                ids.push(p);
            }
            let mut e = coarse(EventKind::CollisionSplit, v0[c], ids.clone());
            if ids.len() == 2 {
                let mut after: Vec<(f64, Option<i8>)> = ids.iter().map(|&k| (v1[k].re, curves.types[t][k].sign())).collect();
                after.sort_by(|a, b| a.0.total_cmp(&b.0));
                if let (Some(l), Some(r)) = (after[0].1, after[1].1) {
                    e.types_after = Some([l, r]);
                }
            } else {
                e.confident = false;
            }
            out.push(e);
        }
        if let (Some(g0), Some(g1)) = (curves.ground(s), curves.ground(t)) {
            if g0 != g1 && (was_nonreal[g1] || is_nonreal(v0[g1])) {
                out.push(coarse(EventKind::NewGroundState, v1[g1], vec![g1, g0]));
            }
        }
    }
    out
}

/// Result of a bisection on a boolean indicator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    pub depth: usize,
    /// The indicator had the expected values at the initial ends.
    pub consistent: bool,
}

/// Bisect `[lo, hi]` where `f(lo) = before` and `f(hi) = !before` until the
/// width is at most `tol` or `MAX_DEPTH` halvings were spent.
pub fn bisect(lo: f64, hi: f64, tol: f64, before: bool, mut f: impl FnMut(f64) -> Result<bool>) -> Result<Bracket> {
    let consistent = f(lo)? == before && f(hi)? != before;
    let (mut lo, mut hi) = (lo, hi);
    let mut depth = 0;
    while hi - lo > tol && depth < MAX_DEPTH {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid)? == before {
            lo = mid;
        } else {
            hi = mid;
        }
        depth += 1;
    }
    Ok(Bracket { lo, hi, depth, consistent })
}

/// Disk indicator: some nonreal eigenvalue lies within `radius` of `center`.
pub fn nonreal_in_disk(values: &[C64], center: C64, radius: f64) -> bool {
    values.iter().any(|w| is_nonreal(*w) && (w - center).norm() < radius)
}

/// Probe radius around a pair `β, β̄`: wide enough to follow the pair to the
/// real axis, at most half the distance to any other eigenvalue.
pub fn probe_radius(values: &[C64], beta: C64) -> f64 {
    let center = C64::new(beta.re, 0.0);
    let other = values
        .iter()
        .filter(|w| (*w - beta).norm() > 1e-12 * (1.0 + beta.norm()) && (*w - beta.conj()).norm() > 1e-12 * (1.0 + beta.norm()))
        .map(|w| (w - center).norm())
        .fold(f64::INFINITY, f64::min);
    let want = 3.0 * beta.im.abs() + 0.01;
    want.min(0.5 * other).max(1.5 * beta.im.abs())
}

/// Refine a collision of the pair near `beta` (nonreal at `lo`, real at
/// `hi`) with `spectrum(γ)` as the oracle.
pub fn refine_collision_with(lo: f64, hi: f64, beta: C64, radius: f64, tol: f64, spectrum: impl Fn(f64) -> Result<Vec<C64>>) -> Result<(Bracket, C64)> {
    let center = C64::new(beta.re, 0.0);
    let mut last = beta;
    let br = bisect(lo, hi, tol, true, |g| {
        let v = spectrum(g)?;
        let hit = v.iter().filter(|w| is_nonreal(**w) && w.im > 0.0 && (*w - center).norm() < radius).min_by(|a, b| (*a - last).norm().total_cmp(&(*b - last).norm())).copied();
        if let Some(w) = hit {
            last = w;
        }
        Ok(hit.is_some())
    })?;
    Ok((br, last))
}

#[derive(Clone, Copy, Debug)]
pub struct RefineOptions {
    pub tol: f64,
    pub exec: Execution,
    /// Offset above the bracket where post-split types are read.
    pub type_offset: f64,
    /// Compute the inertia change of `A_γ − ω₀B_γ` across the event.
    pub inertia: bool,
    /// Half-width of the interval around the located event on which the
    /// inertia is compared, clamped to the coarse bracket. Too close to the
    /// event a defective `ω₀` makes `A_γ − ω₀B_γ` numerically singular.
    pub inertia_offset: f64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self { tol: 1e-9, exec: Execution::Parallel, type_offset: 1e-6, inertia: true, inertia_offset: 1e-5 }
    }
}

fn values_at(disc: &Discretization, mask: &MaterialMask, g: f64) -> Result<Vec<C64>> {
    Ok(snapshot(disc, mask, g, false)?.values)
}

fn upper_count(values: &[C64]) -> usize {
    values.iter().filter(|w| is_nonreal(**w) && w.im > 0.0).count()
}

/// `(p₊, p₋, p₀)` of `A_γ − ω₀B_γ`.
pub fn shifted_inertia(disc: &Discretization, mask: &MaterialMask, gamma: f64, omega0: f64) -> Result<InertiaSignature> {
    let p = assemble_pencil(disc, mask, gamma)?;
    structure::inertia(&linalg::hermitize(&p.shifted(omega0)), 1e-12)
}

/// Inertia of `A_γ` alone.
pub fn inertia_of_a(disc: &Discretization, mask: &MaterialMask, gamma: f64) -> Result<InertiaSignature> {
    shifted_inertia(disc, mask, gamma, 0.0)
}

fn refine_one(disc: &Discretization, mask: &MaterialMask, curves: &EigenCurveSet, ev: &BifurcationEvent, opts: RefineOptions) -> Result<BifurcationEvent> {
    let mut e = ev.clone();
    let [lo, hi] = ev.bracket;
    let spectrum = |g: f64| values_at(disc, mask, g);
    match ev.kind {
        EventKind::ImaginaryBirth => {
            let before = upper_count(&curves.values[ev.sample]);
            let br = bisect(lo, hi, opts.tol, false, |g| Ok(upper_count(&spectrum(g)?) > before))?;
            // values right at the critical point are unreliable; keep the coarse location
            e.bracket = [br.lo, br.hi];
            e.confident = br.consistent;
        }
        EventKind::RealCollisionMerge => {
            let beta: C64 = ev.location.into();
            let r = probe_radius(&curves.values[ev.sample_hi], beta);
            let center = C64::new(beta.re, 0.0);
            let br = bisect(lo, hi, opts.tol, false, |g| Ok(nonreal_in_disk(&spectrum(g)?, center, r)))?;
            e.location = C64::new(beta.re, 0.0).into();
            e.bracket = [br.lo, br.hi];
            e.confident = br.consistent;
            e.probe_radius = Some(r);
        }
        EventKind::CollisionSplit => {
            let beta: C64 = ev.location.into();
            let r = probe_radius(&curves.values[ev.sample], beta);
            let (br, last) = refine_collision_with(lo, hi, beta, r, opts.tol, spectrum)?;
            e.bracket = [br.lo, br.hi];
            e.location = C64::new(last.re, 0.0).into();
            e.confident = br.consistent;
            e.probe_radius = Some(r);
            e.types_after = split_types(disc, mask, br.hi + opts.type_offset, last.re, r)?;
            if e.types_after.is_none() {
                e.confident = false;
            }
        }
        EventKind::NewGroundState => {
            let (br, loc) = refine_crossing(disc, mask, curves, ev, opts.tol)?;
            e.bracket = [br.lo, br.hi];
            e.location = C64::new(loc, 0.0).into();
            e.confident = br.consistent;
        }
    }
    e.gamma_located = 0.5 * (e.bracket[0] + e.bracket[1]);
    e.refined = true;
    if opts.inertia {
        let w0 = e.location.re;
        let g0 = (e.gamma_located - opts.inertia_offset).max(ev.bracket[0]);
        let g1 = (e.gamma_located + opts.inertia_offset).min(ev.bracket[1]);
        let a = shifted_inertia(disc, mask, evaluable_gamma(mask, g0), w0)?;
        let b = shifted_inertia(disc, mask, evaluable_gamma(mask, g1), w0)?;
        e.inertia_change = Some([b.p_plus as i64 - a.p_plus as i64, b.p_minus as i64 - a.p_minus as i64]);
    }
    Ok(e)
}

/// `(μ_left, μ_right)` of the two real eigenvalues nearest `center` inside
/// the probe disk at `γ`.
pub fn split_types(disc: &Discretization, mask: &MaterialMask, gamma: f64, center: f64, radius: f64) -> Result<Option<[i8; 2]>> {
    let snap = snapshot(disc, mask, gamma, true)?;
    let c = C64::new(center, 0.0);
    let mut idx: Vec<usize> = (0..snap.values.len()).filter(|&k| !is_nonreal(snap.values[k]) && (snap.values[k] - c).norm() < radius).collect();
    idx.sort_by(|&a, &b| (snap.values[a] - c).norm().total_cmp(&(snap.values[b] - c).norm()));
    if idx.len() < 2 {
        return Ok(None);
    }
    let (a, b) = if snap.values[idx[0]].re <= snap.values[idx[1]].re { (idx[0], idx[1]) } else { (idx[1], idx[0]) };
    Ok(match (snap.types[a].sign(), snap.types[b].sign()) {
        (Some(l), Some(r)) => Some([l, r]),
        _ => None,
    })
}

/// Locate where the new ground curve crosses below the old one. Curves are
/// followed through the bisection by eigenvector overlap, which stays
/// unambiguous when the two values meet.
fn refine_crossing(disc: &Discretization, mask: &MaterialMask, curves: &EigenCurveSet, ev: &BifurcationEvent, tol: f64) -> Result<(Bracket, f64)> {
    let s = ev.sample;
    let (c_new, c_old) = (ev.curve_ids[0], ev.curve_ids[1]);
    let v_new = curves.values[s][c_new];
    if is_nonreal(v_new) {
        // the new curve is born in this interval: the split bracket is the event
        return Ok((Bracket { lo: ev.bracket[0], hi: ev.bracket[1], depth: 0, consistent: true }, curves.values[ev.sample_hi][c_new].re));
    }
    let state = |g: f64| -> Result<(Vec<C64>, Vec<Vec<C64>>)> {
        let g = evaluable_gamma(mask, g);
        let sp = assemble_nfgep(disc, mask, g)?.solve(true)?;
        let v = sp.vectors.expect("requested");
        let xs = (0..sp.values.len())
            .map(|k| if is_nonreal(sp.values[k]) { Ok(Vec::new()) } else { pencil_vector(disc, mask, g, &linalg::col_vec(v.as_ref(), k)) })
            .collect::<Result<Vec<_>>>()?;
        Ok((sp.values, xs))
    };
    let pick = |vals: &[C64], target: C64| nearest(vals, target, |k| !is_nonreal(vals[k])).unwrap_or(0);
    let (vals, xs) = state(ev.bracket[0])?;
    let mut x_new = xs[pick(&vals, v_new)].clone();
    let mut x_old = xs[pick(&vals, curves.values[s][c_old])].clone();
    let overlap = |x: &[C64], y: &[C64]| if y.is_empty() { 0.0 } else { linalg::vdot(x, y).norm() / (vnorm(x) * vnorm(y)) };
    let mut located = curves.values[ev.sample_hi][c_new].re;
    let br = bisect(ev.bracket[0], ev.bracket[1], tol, false, |g| {
        let (vals, xs) = state(g)?;
        let best = |x: &[C64]| (0..vals.len()).max_by(|&a, &b| overlap(x, &xs[a]).total_cmp(&overlap(x, &xs[b]))).unwrap();
        let (kn, ko) = (best(&x_new), best(&x_old));
        let crossed = vals[kn].re < vals[ko].re;
        if !crossed {
            x_new = xs[kn].clone();
            x_old = xs[ko].clone();
        }
        located = 0.5 * (vals[kn].re + vals[ko].re);
        Ok(crossed)
    })?;
    Ok((br, located))
}

/// Refine every event independently. A new ground state born in a split
/// inherits the refined split bracket.
pub fn refine_events(disc: &Discretization, mask: &MaterialMask, curves: &EigenCurveSet, events: &[BifurcationEvent], opts: RefineOptions) -> Result<Vec<BifurcationEvent>> {
    let mut out: Vec<BifurcationEvent> = par::map(opts.exec, events, |e| refine_one(disc, mask, curves, e, opts)).into_iter().collect::<Result<_>>()?;
    for i in 0..out.len() {
        if out[i].kind != EventKind::NewGroundState || !is_nonreal(curves.values[out[i].sample][out[i].curve_ids[0]]) {
            continue;
        }
        let c = out[i].curve_ids[0];
        let split = out.iter().find(|e| e.kind == EventKind::CollisionSplit && e.sample == out[i].sample && e.curve_ids.contains(&c)).cloned();
        if let Some(sp) = split {
            out[i].bracket = sp.bracket;
            out[i].gamma_located = sp.gamma_located;
            out[i].confident = sp.confident;
            out[i].inertia_change = sp.inertia_change;
            out[i].location = sp.location;
        }
    }
    out.sort_by(|a, b| a.gamma_located.total_cmp(&b.gamma_located));
    Ok(out)
}

/// Events as a bare JSON array.
pub fn write_events(path: &Path, events: &[BifurcationEvent]) -> Result<()> {
    io::write_json(path, &events)
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalingReport {
    pub gamma_located: f64,
    pub offsets: Vec<f64>,
    /// `max |Im β|` inside the probe disk at `γ₁ − d`.
    pub imag_parts: Vec<f64>,
    /// `α_r − α_ℓ` inside the probe disk at `γ₁ + d`.
    pub splits: Vec<f64>,
    pub slope_imag: f64,
    pub slope_split: f64,
}

/// Square-root scaling on both sides of a refined collision.
pub fn collision_scaling(disc: &Discretization, mask: &MaterialMask, ev: &BifurcationEvent, offsets: &[f64], exec: Execution) -> Result<ScalingReport> {
    if ev.kind != EventKind::CollisionSplit {
        return Err(Error::InvalidArgument("scaling needs a collision_split event".into()));
    }
    let center = C64::from(ev.location);
    let r = ev.probe_radius.unwrap_or(0.1);
    let g1 = ev.gamma_located;
    let near = |v: Vec<C64>| -> Vec<C64> { v.into_iter().filter(|w| (w - center).norm() < r).collect() };
    let pts: Vec<f64> = offsets.iter().flat_map(|d| [g1 - d, g1 + d]).collect();
    let spectra: Vec<Vec<C64>> = par::map(exec, &pts, |&g| values_at(disc, mask, g)).into_iter().collect::<Result<_>>()?;
    let mut imag_parts = Vec::new();
    let mut splits = Vec::new();
    for pair in spectra.chunks(2) {
        let left = near(pair[0].clone());
        imag_parts.push(left.iter().map(|w| w.im.abs()).fold(0.0, f64::max));
        let right = near(pair[1].clone());
        let lo = right.iter().map(|w| w.re).fold(f64::INFINITY, f64::min);
        let hi = right.iter().map(|w| w.re).fold(f64::NEG_INFINITY, f64::max);
        splits.push(hi - lo);
    }
    Ok(ScalingReport {
        gamma_located: g1,
        offsets: offsets.to_vec(),
        slope_imag: loglog_slope(offsets, &imag_parts),
        slope_split: loglog_slope(offsets, &splits),
        imag_parts,
        splits,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ImaginaryPair {
    pub omega: Cplx,
    /// `max_k |e_k|` over outside rows, for `‖e‖₂ = 1`.
    pub outside_max: f64,
    /// `|Re eᴴIⁱCe| / ‖Ce‖`, for `‖e‖₂ = 1`.
    pub re_inside_form: f64,
    /// Relative error of `|ω| = (γ²−εᵢ)^{-1/2}‖Ce‖/‖e‖`.
    pub formula_rel_err: f64,
    /// Relative error of `|ω|² = ‖Ce‖²/((γ²−εᵢ)a_i − εₒa_o)`.
    pub identity_rel_err: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ImaginarySample {
    pub gamma: f64,
    pub pairs: Vec<ImaginaryPair>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ImaginaryAxisReport {
    pub samples: Vec<ImaginarySample>,
    pub max_outside: f64,
    pub max_formula_rel_err: f64,
    pub max_identity_rel_err: f64,
    /// `|ω|` of each upper nonreal curve strictly decreases over the samples.
    pub modulus_decreasing: bool,
}

impl ImaginaryAxisReport {
    /// All four checks at the given tolerances.
    pub fn passes(&self, formula_tol: f64, outside_tol: f64) -> bool {
        self.max_formula_rel_err <= formula_tol && self.max_outside <= outside_tol && self.modulus_decreasing
    }
}

/// Check the behaviour of nonreal eigenpairs just above `γ*` at ascending
/// samples `gammas`.
pub fn verify_imaginary_axis(disc: &Discretization, mask: &MaterialMask, gammas: &[f64]) -> Result<ImaginaryAxisReport> {
    let gs = mask.gamma_star();
    if gammas.iter().any(|&g| g <= gs) || gammas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("samples must be ascending and above gamma*".into()));
    }
    let curl = disc.curl();
    let inside = mask.inside3();
    let mut samples = Vec::new();
    let mut moduli: Vec<Vec<C64>> = Vec::new();
    for &g in gammas {
        let sp = assemble_nfgep(disc, mask, g)?.solve(true)?;
        let v = sp.vectors.as_ref().expect("requested");
        let mut pairs = Vec::new();
        let mut uppers = Vec::new();
        for (k, &w) in sp.values.iter().enumerate() {
            if !is_nonreal(w) {
                continue;
            }
            if w.im > 0.0 {
                uppers.push(w);
            }
            let (_, mut e) = recover_fields(disc, mask, g, &linalg::col_vec(v.as_ref(), k))?;
            let ne = vnorm(&e);
            e.iter_mut().for_each(|x| *x /= ne);
            let ce = curl.apply(&e)?;
            let nce = vnorm(&ce);
            let outside_max = e.iter().zip(&inside).filter(|(_, &f)| !f).map(|(x, _)| x.norm()).fold(0.0, f64::max);
            let form: C64 = e.iter().zip(&ce).zip(&inside).filter(|(_, &f)| f).map(|((x, y), _)| x.conj() * y).sum();
            let predicted = nce / (g * g - mask.eps_i()).sqrt();
            let r = rayleigh(disc, mask, g, &e)?;
            let ident = (r.c / ((g * g - mask.eps_i()) * r.a_i - mask.eps_o() * r.a_o)).sqrt();
            pairs.push(ImaginaryPair {
                omega: w.into(),
                outside_max,
                re_inside_form: form.re.abs() / nce.max(f64::MIN_POSITIVE),
                formula_rel_err: (predicted - w.norm()).abs() / w.norm(),
                identity_rel_err: (ident - w.norm()).abs() / w.norm(),
            });
        }
        moduli.push(uppers);
        samples.push(ImaginarySample { gamma: g, pairs });
    }
    let mut decreasing = moduli.iter().all(|m| !m.is_empty());
    if decreasing {
        for start in moduli[0].clone() {
            let mut cur = start;
            for next in &moduli[1..] {
                let k = nearest(next, cur, |_| true).expect("nonempty");
                if next[k].norm() >= cur.norm() {
                    decreasing = false;
                }
                cur = next[k];
            }
        }
    }
    let all = samples.iter().flat_map(|s| s.pairs.iter());
    let (mut mo, mut mf, mut mi) = (0.0f64, 0.0f64, 0.0f64);
    for p in all {
        mo = mo.max(p.outside_max);
        mf = mf.max(p.formula_rel_err);
        mi = mi.max(p.identity_rel_err);
    }
    Ok(ImaginaryAxisReport { samples, max_outside: mo, max_formula_rel_err: mf, max_identity_rel_err: mi, modulus_decreasing: decreasing })
}
