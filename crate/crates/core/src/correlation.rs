//! Detection operators, conditional jumps and second-order correlations.
//!
//! For stationary driving the two-time correlation is evaluated as
//!
//! ```text
//! G2(tau) = Tr{ O_B exp(L tau) J_A(rho_ss) }
//! g2(tau) = G2(tau) / (Tr{O_A rho_ss} Tr{O_B rho_ss})
//! ```
//!
//! where `J_A` is the jump map of the first detector and `O_B` the intensity
//! observable of the second. A coherent detector along `r_hat` uses the
//! phased ensemble operator `P = sum_i exp(-2 pi i r_hat.r_i) s_ge^i`, with
//! `J(rho) = P rho P^dag` and `O = P^dag P`. An incoherent detector uses the
//! per-atom operator sum `J(rho) = sum_i s_ge^i rho s_eg^i`,
//! `O = sum_i s_eg^i s_ge^i` (or a single atom).

use std::f64::consts::PI;

use nalgebra::Vector3;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::liouville::{asymptotic_state, build_liouvillian, check_tau_grid, DensityMatrix, Propagator};
use crate::model::{build_collapse_ops, build_hamiltonian, lowering, PhaseMode, SystemSpec};
use crate::operator_algebra::Operator;

/// Rates below this are treated as zero and never divided by.
pub const DENOMINATOR_THRESHOLD: f64 = 1e-12;

/// Dephasing rate suggested for regularizing dark steady states.
pub const SUGGESTED_REGULARIZATION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionMode {
    /// Phased sum over all atoms; interference between atoms is kept.
    Coherent,
    /// Operator sum over per-atom jumps (atoms emit with scrambled phases).
    IncoherentTotal,
    /// Photons from one atom only.
    IncoherentAtom(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorSpec {
    direction: Vector3<f64>,
    mode: DetectionMode,
}

impl DetectorSpec {
    /// `direction` is normalized; it must not be parallel to the probe axis.
    pub fn new(direction: Vector3<f64>, mode: DetectionMode) -> Result<Self> {
        let norm = direction.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::OnAxisDetector);
        }
        let direction = direction / norm;
        if direction.z.abs() >= 1.0 - 1e-12 {
            return Err(Error::OnAxisDetector);
        }
        Ok(DetectorSpec { direction, mode })
    }

    pub fn coherent(direction: Vector3<f64>) -> Result<Self> {
        Self::new(direction, DetectionMode::Coherent)
    }

    pub fn incoherent_total() -> Self {
        DetectorSpec { direction: Vector3::x(), mode: DetectionMode::IncoherentTotal }
    }

    pub fn incoherent_atom(atom: usize) -> Self {
        DetectorSpec { direction: Vector3::x(), mode: DetectionMode::IncoherentAtom(atom) }
    }

    pub fn direction(&self) -> Vector3<f64> {
        self.direction
    }

    pub fn mode(&self) -> DetectionMode {
        self.mode
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DetectionOperator {
    /// Single ensemble lowering operator.
    Coherent(Operator),
    /// Per-atom lowering operators whose jump maps are summed.
    Incoherent(Vec<Operator>),
}

impl DetectionOperator {
    pub fn dim(&self) -> usize {
        match self {
            DetectionOperator::Coherent(p) => p.nrows(),
            DetectionOperator::Incoherent(ops) => ops.first().map_or(0, |p| p.nrows()),
        }
    }

    /// Unnormalized post-detection state; its trace is the detection rate.
    pub fn jump(&self, sigma: &DensityMatrix) -> DensityMatrix {
        let rho = sigma.matrix();
        let out = match self {
            DetectionOperator::Coherent(p) => p * rho * p.adjoint(),
            DetectionOperator::Incoherent(ops) => {
                let mut acc = Operator::zeros(rho.nrows(), rho.ncols());
                for p in ops {
                    acc += p * rho * p.adjoint();
                }
                acc
            }
        };
        DensityMatrix::conditional(out)
    }

    /// Intensity observable whose expectation is the detection rate.
    pub fn intensity(&self) -> Operator {
        match self {
            DetectionOperator::Coherent(p) => p.adjoint() * p,
            DetectionOperator::Incoherent(ops) => {
                let d = self.dim();
                ops.iter().fold(Operator::zeros(d, d), |acc, p| acc + p.adjoint() * p)
            }
        }
    }
}

pub fn detection_operator(spec: &SystemSpec, det: &DetectorSpec) -> Result<DetectionOperator> {
    spec.validate()?;
    let n = spec.n_atoms;
    match det.mode {
        DetectionMode::Coherent => {
            let d = spec.dim();
            let mut total = Operator::zeros(d, d);
            for (i, r) in spec.positions.iter().enumerate() {
                let phase = Complex64::from_polar(1.0, -2.0 * PI * det.direction.dot(r));
                total += lowering(i, n)? * phase;
            }
            Ok(DetectionOperator::Coherent(total))
        }
        DetectionMode::IncoherentTotal => {
            Ok(DetectionOperator::Incoherent((0..n).map(|i| lowering(i, n)).collect::<Result<_>>()?))
        }
        DetectionMode::IncoherentAtom(atom) => Ok(DetectionOperator::Incoherent(vec![lowering(atom, n)?])),
    }
}

pub fn conditional_jump(sigma: &DensityMatrix, d: &DetectionOperator) -> Result<DensityMatrix> {
    if sigma.dim() != d.dim() {
        return Err(Error::DimensionMismatch { expected: d.dim(), found: sigma.dim() });
    }
    Ok(d.jump(sigma))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CorrelationFlags {
    /// A steady-state detection rate fell below [`DENOMINATOR_THRESHOLD`].
    pub denominator_below_threshold: bool,
    /// The curve was recomputed with `|r>` dephasing to lift a dark state.
    pub regularized: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationResult {
    /// Delays (or histogram bin centres) in units of the inverse decay rate.
    pub tau_grid: Vec<f64>,
    /// `None` when the normalization vanishes and g2 is undefined.
    pub g2: Option<Vec<f64>>,
    pub numerator: Vec<f64>,
    pub denominator: Vec<f64>,
    /// Statistical standard errors of `g2`, for estimates from click data.
    pub std_err: Option<Vec<f64>>,
    pub flags: CorrelationFlags,
    /// Largest imaginary part discarded from a numerator.
    pub max_imag_residue: f64,
}

impl CorrelationResult {
    pub fn is_defined(&self) -> bool {
        self.g2.is_some()
    }

    /// g2 at grid index `k`, if defined.
    pub fn at(&self, k: usize) -> Option<f64> {
        self.g2.as_ref().and_then(|g| g.get(k).copied())
    }

    /// Grid index and value of the largest g2.
    pub fn max(&self) -> Option<(usize, f64)> {
        let g = self.g2.as_ref()?;
        g.iter().copied().enumerate().fold(None, |best, (k, v)| match best {
            Some((_, b)) if b >= v => best,
            _ => Some((k, v)),
        })
    }
}

/// Regression-theorem correlation with the generator of `spec` taken as-is.
fn correlate(
    spec: &SystemSpec,
    det_a: &DetectionOperator,
    det_b: &DetectionOperator,
    tau_grid: &[f64],
) -> Result<CorrelationResult> {
    let l = build_liouvillian(&build_hamiltonian(spec)?, &build_collapse_ops(spec)?)?;
    let rho_ss = asymptotic_state(&l, &DensityMatrix::ground(spec.dim()))?;
    let obs_a = det_a.intensity();
    let obs_b = det_b.intensity();
    let rate_a = rho_ss.expectation(&obs_a).re;
    let rate_b = rho_ss.expectation(&obs_b).re;
    let dark = rate_a < DENOMINATOR_THRESHOLD || rate_b < DENOMINATOR_THRESHOLD;

    let conditioned = det_a.jump(&rho_ss);
    let states = Propagator::new(&l).evolve_grid(&conditioned, tau_grid)?;
    let mut numerator = Vec::with_capacity(states.len());
    let mut max_imag = 0.0_f64;
    for s in &states {
        let z = s.expectation(&obs_b);
        max_imag = max_imag.max(z.im.abs());
        numerator.push(z.re);
    }
    let norm = rate_a * rate_b;
    let denominator = vec![norm; numerator.len()];
    let g2 = (!dark).then(|| numerator.iter().map(|x| x / norm).collect());
    Ok(CorrelationResult {
        tau_grid: tau_grid.to_vec(),
        g2,
        numerator,
        denominator,
        std_err: None,
        flags: CorrelationFlags { denominator_below_threshold: dark, regularized: false },
        max_imag_residue: max_imag,
    })
}

/// Correlation between arbitrary detection operators.
///
/// The physics is evaluated without `|r>` dephasing. If a detection rate
/// vanishes (a dark steady state) and `spec.gamma_reg > 0`, the curve is
/// recomputed with the dephasing switched on and flagged as regularized;
/// otherwise `g2` is left undefined.
pub fn g2_with_operators(
    spec: &SystemSpec,
    det_a: &DetectionOperator,
    det_b: &DetectionOperator,
    tau_grid: &[f64],
) -> Result<CorrelationResult> {
    spec.validate()?;
    check_tau_grid(tau_grid)?;
    for det in [det_a, det_b] {
        if det.dim() != spec.dim() {
            return Err(Error::DimensionMismatch { expected: spec.dim(), found: det.dim() });
        }
    }
    let bare = spec.clone().with_regularization(0.0);
    let result = correlate(&bare, det_a, det_b, tau_grid)?;
    if !result.flags.denominator_below_threshold || spec.gamma_reg == 0.0 {
        return Ok(result);
    }
    let mut regularized = correlate(spec, det_a, det_b, tau_grid)?;
    regularized.flags = CorrelationFlags { denominator_below_threshold: true, regularized: true };
    Ok(regularized)
}

/// Normalized second-order correlation between detectors A and B.
pub fn g2(spec: &SystemSpec, det_a: &DetectorSpec, det_b: &DetectorSpec, tau_grid: &[f64]) -> Result<CorrelationResult> {
    let a = detection_operator(spec, det_a)?;
    let b = detection_operator(spec, det_b)?;
    g2_with_operators(spec, &a, &b, tau_grid)
}

/// Correlation between photons from atom `i` and later photons from atom `j`.
pub fn g2_cross(spec: &SystemSpec, i: usize, j: usize, tau_grid: &[f64]) -> Result<CorrelationResult> {
    g2(spec, &DetectorSpec::incoherent_atom(i), &DetectorSpec::incoherent_atom(j), tau_grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanAxis {
    /// Atoms on the z axis, along the beams.
    ParallelToProbe,
    /// Atoms on the x axis.
    AlongDetectorAxis,
}

impl ScanAxis {
    pub fn unit(self) -> Vector3<f64> {
        match self {
            ScanAxis::ParallelToProbe => Vector3::z(),
            ScanAxis::AlongDetectorAxis => Vector3::x(),
        }
    }
}

/// Two atoms at `-R/2` and `+R/2` along `axis`.
pub fn pair_positions(axis: ScanAxis, separation: f64) -> Vec<Vector3<f64>> {
    let u = axis.unit();
    vec![-0.5 * separation * u, 0.5 * separation * u]
}

/// Coherent-detection g2 of an atom pair for each separation in `r_values`.
pub fn separation_scan(
    template: &SystemSpec,
    axis: ScanAxis,
    r_values: &[f64],
    det_a: &DetectorSpec,
    det_b: &DetectorSpec,
    tau_grid: &[f64],
) -> Result<Vec<CorrelationResult>> {
    if template.n_atoms != 2 {
        return Err(Error::InvalidArgument(format!("separation scans need two atoms, got {}", template.n_atoms)));
    }
    if template.phase_mode != PhaseMode::Physical {
        return Err(Error::InvalidArgument("separation scans need physical drive phases".into()));
    }
    if det_a.mode() != DetectionMode::Coherent || det_b.mode() != DetectionMode::Coherent {
        return Err(Error::InvalidArgument("separation scans need coherent detectors".into()));
    }
    if r_values.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(Error::InvalidArgument("separations must be finite and non-negative".into()));
    }
    r_values
        .par_iter()
        .map(|&r| {
            let spec = template.clone().with_positions(pair_positions(axis, r));
            g2(&spec, det_a, det_b, tau_grid)
        })
        .collect()
}
