//! Physical scenario description and its Hamiltonian / collapse operators.
//!
//! Units: frequencies in units of the intermediate-state decay rate, lengths
//! in units of the probe wavelength, `hbar = 1`.
//!
//! Rabi convention: the drive enters as `-Omega (sigma_eg + sigma_ge)` with no
//! factor of one half, so a two-level atom driven with `omega_p` undergoes
//! Rabi oscillations at angular frequency `2 * omega_p`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, Vector3};
use num_complex::Complex64;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::operator_algebra::{embed, hilbert_dim, level_of, sigma, Operator, E, G, R};

/// Largest supported ensemble.
pub const MAX_ATOMS: usize = 4;

/// Pairwise Rydberg-Rydberg level shift model.
#[derive(Debug, Clone, PartialEq)]
pub enum Interaction {
    /// Signed shift `V_ij` of the doubly-Rydberg state for every pair.
    Explicit(DMatrix<f64>),
    /// `|V(R)| = |c6| / R^6`, with `c6` in units of decay rate times wavelength^6.
    VanDerWaals { c6: f64 },
}

impl Interaction {
    /// Same shift `v` for every pair of `n_atoms` atoms.
    pub fn uniform(n_atoms: usize, v: f64) -> Self {
        Interaction::Explicit(DMatrix::from_fn(n_atoms, n_atoms, |i, j| if i == j { 0.0 } else { v }))
    }

    pub fn none(n_atoms: usize) -> Self {
        Self::uniform(n_atoms, 0.0)
    }
}

/// Whether the drive fields carry their spatial phases `exp(i k.r_i)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseMode {
    Physical,
    /// All drive phase factors set to one.
    Gauged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub n_atoms: usize,
    /// Positions in units of the probe wavelength.
    pub positions: Vec<Vector3<f64>>,
    /// Probe Rabi frequency on `g -> e`.
    pub omega_p: f64,
    /// Coupling Rabi frequency on `e -> r`.
    pub omega_c: f64,
    /// Decay rate of `|e>`.
    pub gamma_e: f64,
    pub interaction: Interaction,
    /// `|k_c| / |k_p|`. Probe propagates along `+z`, coupling along `-z`.
    pub k_ratio: f64,
    pub phase_mode: PhaseMode,
    /// Pure dephasing rate of `|r>`, used only to regularize dark steady states.
    pub gamma_reg: f64,
}

impl SystemSpec {
    /// `n_atoms` non-interacting atoms spaced one wavelength apart on the x axis,
    /// no drive, unit decay rate, gauged phases.
    pub fn new(n_atoms: usize) -> Self {
        SystemSpec {
            n_atoms,
            positions: (0..n_atoms).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect(),
            omega_p: 0.0,
            omega_c: 0.0,
            gamma_e: 1.0,
            interaction: Interaction::none(n_atoms),
            k_ratio: 1.0,
            phase_mode: PhaseMode::Gauged,
            gamma_reg: 0.0,
        }
    }

    /// Independent two-level atoms (coupling laser off).
    pub fn two_level(n_atoms: usize, omega_p: f64) -> Self {
        SystemSpec { omega_p, ..Self::new(n_atoms) }
    }

    /// Ladder EIT ensemble with the same shift `v` on every pair.
    pub fn blockaded(n_atoms: usize, omega_p: f64, omega_c: f64, v: f64) -> Self {
        SystemSpec { omega_p, omega_c, interaction: Interaction::uniform(n_atoms, v), ..Self::new(n_atoms) }
    }

    pub fn dim(&self) -> usize {
        hilbert_dim(self.n_atoms)
    }

    pub fn with_positions(mut self, positions: Vec<Vector3<f64>>) -> Self {
        self.positions = positions;
        self
    }

    pub fn with_phase_mode(mut self, mode: PhaseMode) -> Self {
        self.phase_mode = mode;
        self
    }

    pub fn with_regularization(mut self, gamma_reg: f64) -> Self {
        self.gamma_reg = gamma_reg;
        self
    }

    /// Copy with the pairwise shifts negated (explicit mode) or `c6` negated.
    pub fn with_flipped_interaction(&self) -> Self {
        let interaction = match &self.interaction {
            Interaction::Explicit(v) => Interaction::Explicit(-v),
            Interaction::VanDerWaals { c6 } => Interaction::VanDerWaals { c6: -c6 },
        };
        SystemSpec { interaction, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if self.n_atoms == 0 || self.n_atoms > MAX_ATOMS {
            return bad(format!("n_atoms must be between 1 and {MAX_ATOMS}, got {}", self.n_atoms));
        }
        if self.positions.len() != self.n_atoms {
            return bad(format!("{} positions given for {} atoms", self.positions.len(), self.n_atoms));
        }
        if self.positions.iter().any(|p| !p.iter().all(|x| x.is_finite())) {
            return bad("positions must be finite".into());
        }
        for (name, value) in [("omega_p", self.omega_p), ("omega_c", self.omega_c), ("gamma_reg", self.gamma_reg)] {
            if !(value >= 0.0) || !value.is_finite() {
                return bad(format!("{name} must be finite and non-negative, got {value}"));
            }
        }
        if !(self.gamma_e > 0.0) || !self.gamma_e.is_finite() {
            return bad(format!("gamma_e must be positive, got {}", self.gamma_e));
        }
        if !(self.k_ratio > 0.0) || !self.k_ratio.is_finite() {
            return bad(format!("k_ratio must be positive, got {}", self.k_ratio));
        }
        match &self.interaction {
            Interaction::Explicit(v) => {
                if v.shape() != (self.n_atoms, self.n_atoms) {
                    return bad(format!("interaction matrix is {}x{}, expected {n}x{n}", v.nrows(), v.ncols(), n = self.n_atoms));
                }
                for i in 0..self.n_atoms {
                    if v[(i, i)] != 0.0 {
                        return bad(format!("interaction matrix diagonal must be zero (entry {i})"));
                    }
                    for j in 0..i {
                        if v[(i, j)] != v[(j, i)] || !v[(i, j)].is_finite() {
                            return bad(format!("interaction matrix must be finite and symmetric (pair {j},{i})"));
                        }
                    }
                }
            }
            Interaction::VanDerWaals { c6 } => {
                if !c6.is_finite() {
                    return bad("c6 must be finite".into());
                }
            }
        }
        Ok(())
    }

    /// Stable textual form of every field, used for hashing and manifests.
    pub fn canonical_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n_atoms={}", self.n_atoms);
        for (i, p) in self.positions.iter().enumerate() {
            let _ = writeln!(s, "position.{i}={:?},{:?},{:?}", p.x, p.y, p.z);
        }
        let _ = writeln!(s, "omega_p={:?}", self.omega_p);
        let _ = writeln!(s, "omega_c={:?}", self.omega_c);
        let _ = writeln!(s, "gamma_e={:?}", self.gamma_e);
        match &self.interaction {
            Interaction::Explicit(v) => {
                let entries: Vec<String> = v.row_iter().flat_map(|r| r.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>()).collect();
                let _ = writeln!(s, "interaction=explicit:{}", entries.join(","));
            }
            Interaction::VanDerWaals { c6 } => {
                let _ = writeln!(s, "interaction=vdw:{c6:?}");
            }
        }
        let _ = writeln!(s, "k_ratio={:?}", self.k_ratio);
        let _ = writeln!(s, "phase_mode={}", match self.phase_mode {
            PhaseMode::Physical => "physical",
            PhaseMode::Gauged => "gauged",
        });
        let _ = writeln!(s, "gamma_reg={:?}", self.gamma_reg);
        s
    }

    /// First 16 hex digits of the SHA-256 of [`canonical_string`](Self::canonical_string).
    pub fn spec_hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_string().as_bytes());
        hex::encode(&digest[..8])
    }
}

/// `(c6 / omega_c)^(1/6)`: separation at which the pair shift equals the coupling Rabi frequency.
pub fn blockade_radius(c6: f64, omega_c: f64) -> Result<f64> {
    if !(c6 > 0.0) || !(omega_c > 0.0) {
        return Err(Error::InvalidArgument(format!("blockade radius needs c6 > 0 and omega_c > 0, got {c6}, {omega_c}")));
    }
    Ok((c6 / omega_c).powf(1.0 / 6.0))
}

/// Symmetric matrix of pair shifts with zero diagonal.
pub fn interaction_matrix(spec: &SystemSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    match &spec.interaction {
        Interaction::Explicit(v) => Ok(v.clone()),
        Interaction::VanDerWaals { c6 } => {
            let n = spec.n_atoms;
            let mut v = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in (i + 1)..n {
                    let r = (spec.positions[i] - spec.positions[j]).norm();
                    if r == 0.0 {
                        return Err(Error::CoincidentAtoms { i, j });
                    }
                    // magnitude only; the sign is irrelevant in gauged mode
                    let shift = (c6 / r.powi(6)).abs();
                    v[(i, j)] = shift;
                    v[(j, i)] = shift;
                }
            }
            Ok(v)
        }
    }
}

/// Drive phases `(probe, coupling)` seen by atom `i`.
fn drive_phases(spec: &SystemSpec, i: usize) -> (Complex64, Complex64) {
    match spec.phase_mode {
        PhaseMode::Gauged => (Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)),
        PhaseMode::Physical => {
            let z = spec.positions[i].z;
            let kz = 2.0 * PI * z;
            (Complex64::from_polar(1.0, kz), Complex64::from_polar(1.0, -spec.k_ratio * kz))
        }
    }
}

/// `H = -sum_i [Omega_p e^{i k_p.r_i} s_eg + Omega_c e^{i k_c.r_i} s_re + h.c.] + sum_{i<j} V_ij s_rr^i s_rr^j`.
pub fn build_hamiltonian(spec: &SystemSpec) -> Result<Operator> {
    let v = interaction_matrix(spec)?;
    let n = spec.n_atoms;
    let dim = spec.dim();
    let mut h = Operator::zeros(dim, dim);

    let s_eg = sigma(E, G);
    let s_re = sigma(R, E);
    for i in 0..n {
        let (probe_phase, coupling_phase) = drive_phases(spec, i);
        let mut local = s_eg.map(|z| -spec.omega_p * probe_phase * z) + s_re.map(|z| -spec.omega_c * coupling_phase * z);
        local += local.adjoint();
        h += embed(&local, i, n)?;
    }

    for state in 0..dim {
        let mut shift = 0.0;
        for i in 0..n {
            if level_of(state, i, n) != R {
                continue;
            }
            for j in (i + 1)..n {
                if level_of(state, j, n) == R {
                    shift += v[(i, j)];
                }
            }
        }
        h[(state, state)] += Complex64::new(shift, 0.0);
    }
    Ok(h)
}

/// `sqrt(gamma_e) s_ge` on every atom, then `sqrt(gamma_reg) s_rr` on every
/// atom when regularization is on.
pub fn build_collapse_ops(spec: &SystemSpec) -> Result<Vec<Operator>> {
    spec.validate()?;
    let n = spec.n_atoms;
    let mut ops = Vec::with_capacity(2 * n);
    let decay = sigma(G, E) * Complex64::new(spec.gamma_e.sqrt(), 0.0);
    for i in 0..n {
        ops.push(embed(&decay, i, n)?);
    }
    if spec.gamma_reg > 0.0 {
        let dephase = sigma(R, R) * Complex64::new(spec.gamma_reg.sqrt(), 0.0);
        for i in 0..n {
            ops.push(embed(&dephase, i, n)?);
        }
    }
    Ok(ops)
}

/// Per-atom lowering operator `|g><e|` on atom `i`.
pub fn lowering(atom: usize, n_atoms: usize) -> Result<Operator> {
    embed(&sigma(G, E), atom, n_atoms)
}
