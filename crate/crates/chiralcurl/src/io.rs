//! Run configuration, machine-readable output formats and provenance.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lattice::{self, LatticeSpec, MaterialMask, Shape, Shifts, Vec3};
use crate::C64;

/// Complex number as `{"re": x, "im": y}`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Cplx {
    pub re: f64,
    pub im: f64,
}

impl From<C64> for Cplx {
    fn from(z: C64) -> Self {
        Self { re: z.re, im: z.im }
    }
}

impl From<Cplx> for C64 {
    fn from(z: Cplx) -> Self {
        C64::new(z.re, z.im)
    }
}

/// JSON formatter writing every double with 17 significant digits.
#[derive(Clone, Copy, Debug, Default)]
pub struct PreciseFormatter;

impl serde_json::ser::Formatter for PreciseFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{}", fmt_f64(value))
    }
}

/// `{:.16e}`, the shortest fixed-width form that round-trips every double.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Serialize with [`PreciseFormatter`], newline-terminated.
pub fn to_json(value: &impl Serialize) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, PreciseFormatter);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

/// Write through a temporary file in the same directory, then rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })?;
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    atomic_write(path, to_json(value)?.as_bytes())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatticeKind {
    SimpleCubic,
    Fcc,
    Vectors,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub kind: LatticeKind,
    pub n: [usize; 3],
    /// Bloch vector in fractional form: `k·a_ℓ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_frac: Option<Vec3>,
    /// Bloch vector in Cartesian form.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec3>,
    /// Lattice vectors (kind `vectors`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vectors: Option<[Vec3; 3]>,
    /// Lattice constant (kind `fcc`), default 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    /// Explicit shift flags (kind `vectors`); derived when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shifts: Option<Shifts>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub eps_i: f64,
    pub eps_o: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shapes: Vec<Shape>,
    /// Extra inside nodes as 1-based grid coordinates (wrapped periodically).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nodes: Vec<[i64; 3]>,
}

fn default_refine_tol() -> f64 {
    1e-9
}

fn default_halvings() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub steps: usize,
    #[serde(default = "default_refine_tol")]
    pub refine_tol: f64,
    #[serde(default = "default_halvings")]
    pub max_halvings: usize,
}

impl SweepConfig {
    /// Uniform grid of `steps` points.
    pub fn grid(&self) -> Vec<f64> {
        let h = (self.gamma_max - self.gamma_min) / (self.steps - 1) as f64;
        (0..self.steps).map(|i| if i + 1 == self.steps { self.gamma_max } else { self.gamma_min + h * i as f64 }).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Verify,
    Sweep,
    Analyze,
    Nfgep,
}

fn default_tasks() -> Vec<Task> {
    vec![Task::Verify]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_max_dim() -> usize {
    4000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub lattice: LatticeConfig,
    pub material: MaterialConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default = "default_tasks")]
    pub tasks: Vec<Task>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<[f64; 3]>,
    /// Chirality values for the `nfgep` task (defaults to the sweep grid).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gammas: Vec<f64>,
    /// Cap on the dense pencil dimension `6n`.
    #[serde(default = "default_max_dim")]
    pub max_dim: usize,
}

impl RunConfig {
    /// Parse and validate. Errors carry serde's line/column or the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let l = &self.lattice;
        if l.n.iter().any(|&x| x == 0) {
            return bad("lattice.n: every entry must be positive".into());
        }
        if l.k.is_some() == l.k_frac.is_some() {
            return bad("lattice: give exactly one of k and k_frac".into());
        }
        if l.kind == LatticeKind::Vectors && l.vectors.is_none() {
            return bad("lattice.vectors: required for kind \"vectors\"".into());
        }
        if l.kind != LatticeKind::Vectors && (l.vectors.is_some() || l.shifts.is_some()) {
            return bad("lattice.vectors/shifts: only allowed for kind \"vectors\"".into());
        }
        let m = &self.material;
        if !(m.eps_i > 0.0 && m.eps_o > 0.0 && m.eps_i.is_finite() && m.eps_o.is_finite()) {
            return bad("material.eps_i/eps_o: must be positive and finite".into());
        }
        if let Some(s) = &self.sweep {
            if !(s.gamma_min >= 0.0 && s.gamma_min.is_finite()) {
                return bad("sweep.gamma_min: must be finite and >= 0".into());
            }
            if !(s.gamma_max > s.gamma_min && s.gamma_max.is_finite()) {
                return bad("sweep.gamma_max: must be finite and > gamma_min".into());
            }
            if s.steps < 2 {
                return bad("sweep.steps: must be at least 2".into());
            }
            if !(s.refine_tol > 0.0) {
                return bad("sweep.refine_tol: must be positive".into());
            }
        } else if self.tasks.contains(&Task::Sweep) {
            return bad("sweep: required when tasks contains \"sweep\"".into());
        }
        if let Some(t) = self.tau {
            if t.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                return bad("tau: components must be positive".into());
            }
        }
        if self.gammas.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
            return bad("gammas: must be finite and >= 0".into());
        }
        if self.tasks.contains(&Task::Nfgep) && self.gammas.is_empty() && self.sweep.is_none() {
            return bad("gammas: required when tasks contains \"nfgep\" and no sweep is given".into());
        }
        if self.tasks.is_empty() {
            return bad("tasks: must not be empty".into());
        }
        Ok(())
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of [`Self::canonical_json`].
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn lattice_spec(&self) -> Result<LatticeSpec> {
        let l = &self.lattice;
        let a = match l.kind {
            LatticeKind::SimpleCubic => [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            LatticeKind::Fcc => lattice::fcc_vectors(l.a.unwrap_or(1.0)),
            LatticeKind::Vectors => l.vectors.expect("validated"),
        };
        let k = match (l.k, l.k_frac) {
            (Some(k), _) => k,
            (None, Some(f)) => lattice::k_from_fractional(&a, f)?,
            _ => unreachable!("validated"),
        };
        match (l.kind, l.shifts) {
            (LatticeKind::SimpleCubic, _) => LatticeSpec::new(a, l.n, k, Shifts::default()),
            (LatticeKind::Vectors, Some(s)) => LatticeSpec::new(a, l.n, k, s),
            _ => LatticeSpec::from_vectors(a, l.n, k),
        }
    }

    pub fn mask(&self, spec: &LatticeSpec) -> Result<MaterialMask> {
        let m = &self.material;
        let mut inside = lattice::build_mask(&m.shapes, spec, m.eps_i, m.eps_o)?.inside_flags().to_vec();
        let map = spec.index_map();
        for &c in &m.nodes {
            inside[map.offset(c)] = true;
        }
        MaterialMask::new(inside, m.eps_i, m.eps_o)
    }

    pub fn tau(&self) -> [f64; 3] {
        self.tau.unwrap_or(crate::spectral::DEFAULT_TAU)
    }
}

/// Provenance block attached to every output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub config_hash: String,
}

impl Provenance {
    pub fn of(cfg: &RunConfig) -> Self {
        Self { version: crate::VERSION.to_string(), config_hash: cfg.hash() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"{
        "lattice": {"kind": "simple_cubic", "n": [4, 4, 4], "k_frac": [0.3, 0.2, 0.1]},
        "material": {"eps_i": 13.0, "eps_o": 1.0, "nodes": [[2, 2, 2]]},
        "sweep": {"gamma_min": 3.0, "gamma_max": 4.0, "steps": 11},
        "tasks": ["verify", "sweep"]
    }"#;

    #[test]
    fn parse_defaults_and_round_trip() {
        let c = RunConfig::from_json(BASIC).unwrap();
        assert_eq!(c.max_dim, 4000);
        assert_eq!(c.sweep.as_ref().unwrap().refine_tol, 1e-9);
        let again = RunConfig::from_json(&c.canonical_json()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.canonical_json(), c.canonical_json());
        assert_eq!(c.hash().len(), 64);
        let g = c.sweep.as_ref().unwrap().grid();
        assert_eq!((g.len(), g[0], g[10]), (11, 3.0, 4.0));
    }

    #[test]
    fn builds_spec_and_mask() {
        let c = RunConfig::from_json(BASIC).unwrap();
        let s = c.lattice_spec().unwrap();
        assert_eq!(s.dims(), [4, 4, 4]);
        let m = c.mask(&s).unwrap();
        assert_eq!(m.n_inside(), 1);
        assert!(m.is_inside(s.index_map().offset([2, 2, 2])));
    }

    #[test]
    fn rejects_bad_configs() {
        let e = RunConfig::from_json(r#"{"lattice": {"kind": "simple_cubic", "n": [4,4,4], "k_frac": [0,0,0]}, "material": {"eps_i": 13, "eps_o": 1}, "bogus": 1}"#);
        assert!(matches!(e, Err(Error::Config(m)) if m.contains("bogus")));
        let e = RunConfig::from_json(r#"{"lattice": {"kind": "simple_cubic", "n": [4,4,4]}, "material": {"eps_i": 13, "eps_o": 1}}"#);
        assert!(matches!(e, Err(Error::Config(m)) if m.contains("k_frac")));
        let e = RunConfig::from_json(r#"{"lattice": {"kind": "simple_cubic", "n": [4,4,4], "k": [1,0,0]}, "material": {"eps_i": 13, "eps_o": 1}, "tasks": ["sweep"]}"#);
        assert!(matches!(e, Err(Error::Config(m)) if m.contains("sweep")));
        let e = RunConfig::from_json("{\n  \"lattice\": 3\n}");
        assert!(matches!(e, Err(Error::Config(m)) if m.contains("line 2")));
    }

    #[test]
    fn fcc_config_matches_direct_builder() {
        let c = RunConfig::from_json(r#"{"lattice": {"kind": "fcc", "n": [4,6,4], "k_frac": [0.1,0.2,0.05]}, "material": {"eps_i": 13, "eps_o": 1}}"#).unwrap();
        let s = c.lattice_spec().unwrap();
        let d = LatticeSpec::fcc([4, 6, 4], [0.1, 0.2, 0.05], 1.0).unwrap();
        assert_eq!(s.shifts(), d.shifts());
        assert!(s.k().iter().zip(d.k()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn precise_floats() {
        #[derive(Serialize)]
        struct S {
            x: f64,
            z: Cplx,
        }
        let s = to_json(&S { x: 0.1, z: C64::new(1.0, -2.5e-300).into() }).unwrap();
        assert_eq!(s, "{\"x\":1.0000000000000001e-1,\"z\":{\"re\":1.0000000000000000e0,\"im\":-2.5000000000000000e-300}}\n");
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["x"].as_f64(), Some(0.1));
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/a.json");
        atomic_write(&p, b"one").unwrap();
        atomic_write(&p, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
