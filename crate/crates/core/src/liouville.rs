//! Master-equation generator, steady states and time propagation.
//!
//! The generator is `L(s) = i[s, H] + sum_c (C s C^dag - {C^dag C, s}/2)`.
//! Every state we propagate is Hermitian (steady states and post-jump
//! conditional states alike), so the heavy numerics run on the real
//! `d^2 x d^2` matrix of `L` in an orthonormal Hermitian basis (see
//! [`to_hermitian_coords`]). Hermiticity is then exact by construction.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::operator_algebra::{
    from_hermitian_coords, hermiticity_defect, null_spaces, to_hermitian_coords, trace_product, unvectorize,
    vectorize, Operator, I, NULL_SPACE_TOL, ONE, ZERO,
};

/// Largest `d^2` handled with dense SVD / matrix exponentials (three atoms).
pub const DENSE_LIMIT: usize = 729;

/// Residual bound `max |L(rho_ss)|` accepted for a steady state.
pub const STEADY_STATE_RESIDUAL: f64 = 1e-10;

/// Most negative eigenvalue tolerated in a normalized state.
pub const POSITIVITY_TOL: f64 = 1e-10;

pub const DEFAULT_TAU_MAX: f64 = 20.0;
pub const DEFAULT_TAU_POINTS: usize = 400;

type Triplets = Vec<(usize, usize, Complex64)>;

fn triplets(op: &Operator) -> Triplets {
    let mut out = Vec::new();
    for j in 0..op.ncols() {
        for i in 0..op.nrows() {
            let z = op[(i, j)];
            if z != ZERO {
                out.push((i, j, z));
            }
        }
    }
    out
}

/// Vectorized master-equation generator.
///
/// Built once from a Hamiltonian and collapse operators; the dense complex
/// and real representations are materialized lazily and cached.
#[derive(Debug)]
pub struct SuperOperator {
    dim: usize,
    hamiltonian: Operator,
    collapse: Vec<Operator>,
    h_eff: Triplets,
    jumps: Vec<Triplets>,
    matrix: OnceLock<DMatrix<Complex64>>,
    hermitian: OnceLock<DMatrix<f64>>,
}

pub fn build_liouvillian(h: &Operator, collapse: &[Operator]) -> Result<SuperOperator> {
    let dim = h.nrows();
    if h.ncols() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: h.ncols() });
    }
    let scale = h.camax().max(1.0);
    if hermiticity_defect(h) > 1e-12 * scale {
        return Err(Error::InvalidArgument("Hamiltonian is not Hermitian".into()));
    }
    for c in collapse {
        if c.shape() != (dim, dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: c.nrows() });
        }
    }
    let mut h_eff = h.clone();
    for c in collapse {
        h_eff -= (c.adjoint() * c) * Complex64::new(0.0, 0.5);
    }
    Ok(SuperOperator {
        dim,
        hamiltonian: h.clone(),
        collapse: collapse.to_vec(),
        h_eff: triplets(&h_eff),
        jumps: collapse.iter().map(triplets).collect(),
        matrix: OnceLock::new(),
        hermitian: OnceLock::new(),
    })
}

impl SuperOperator {
    /// Hilbert-space dimension `d`; the generator acts on `d^2` numbers.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.hamiltonian
    }

    pub fn collapse_ops(&self) -> &[Operator] {
        &self.collapse
    }

    /// `H - (i/2) sum_c C^dag C`.
    pub fn effective_hamiltonian(&self) -> Operator {
        let mut h = Operator::zeros(self.dim, self.dim);
        for &(m, j, z) in &self.h_eff {
            h[(m, j)] = z;
        }
        h
    }

    /// `L(rho)` in operator form, exploiting the sparsity of `H_eff` and the jumps.
    pub fn apply(&self, rho: &Operator) -> Operator {
        let d = self.dim;
        let mut out = Operator::zeros(d, d);
        // -i H_eff rho
        for &(m, j, h) in &self.h_eff {
            let f = -I * h;
            for n in 0..d {
                out[(m, n)] += f * rho[(j, n)];
            }
        }
        // + i rho H_eff^dag
        for &(n, j, h) in &self.h_eff {
            let f = I * h.conj();
            for m in 0..d {
                out[(m, n)] += f * rho[(m, j)];
            }
        }
        for jump in &self.jumps {
            for &(m, j, a) in jump {
                for &(n, k, b) in jump {
                    out[(m, n)] += a * rho[(j, k)] * b.conj();
                }
            }
        }
        out
    }

    /// Dense `d^2 x d^2` complex matrix acting on column-major `vec(rho)`.
    pub fn matrix(&self) -> &DMatrix<Complex64> {
        self.matrix.get_or_init(|| {
            let d = self.dim;
            let mut m = DMatrix::zeros(d * d, d * d);
            let mut unit = Operator::zeros(d, d);
            for k in 0..d {
                for j in 0..d {
                    unit[(j, k)] = ONE;
                    m.set_column(j + k * d, &vectorize(&self.apply(&unit)));
                    unit[(j, k)] = ZERO;
                }
            }
            m
        })
    }

    /// Real `d^2 x d^2` matrix of the generator in the Hermitian basis.
    pub fn hermitian_matrix(&self) -> &DMatrix<f64> {
        self.hermitian.get_or_init(|| {
            let d = self.dim;
            let n = d * d;
            let mut m = DMatrix::zeros(n, n);
            let mut unit = DVector::zeros(n);
            for b in 0..n {
                unit[b] = 1.0;
                let basis = from_hermitian_coords(&unit, d);
                m.set_column(b, &to_hermitian_coords(&self.apply(&basis)));
                unit[b] = 0.0;
            }
            m
        })
    }

    /// `max |L(rho)|` over entries.
    pub fn residual(&self, rho: &Operator) -> f64 {
        self.apply(rho).camax()
    }
}

/// Density matrix, or the unnormalized conditional state left by a detection.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: Operator,
    normalized: bool,
}

impl DensityMatrix {
    pub fn normalized(matrix: Operator) -> Self {
        DensityMatrix { matrix, normalized: true }
    }

    /// Post-jump state; its trace is a rate, not one.
    pub fn conditional(matrix: Operator) -> Self {
        DensityMatrix { matrix, normalized: false }
    }

    /// `|g...g><g...g|`.
    pub fn ground(dim: usize) -> Self {
        let mut m = Operator::zeros(dim, dim);
        m[(0, 0)] = ONE;
        Self::normalized(m)
    }

    /// `|psi><psi| / <psi|psi>`.
    pub fn pure(psi: &DVector<Complex64>) -> Self {
        let norm2 = psi.norm_squared();
        Self::normalized(psi * psi.adjoint() / Complex64::new(norm2, 0.0))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Operator {
        &self.matrix
    }

    pub fn into_matrix(self) -> Operator {
        self.matrix
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    /// `Tr(op rho)`.
    pub fn expectation(&self, op: &Operator) -> Complex64 {
        trace_product(op, &self.matrix)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.matrix)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.matrix + self.matrix.adjoint()) * Complex64::new(0.5, 0.0);
        herm.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn population(&self, state: usize) -> f64 {
        self.matrix[(state, state)].re
    }

    pub fn coords(&self) -> DVector<f64> {
        to_hermitian_coords(&self.matrix)
    }

    fn from_coords(x: &DVector<f64>, dim: usize, normalized: bool) -> Self {
        DensityMatrix { matrix: from_hermitian_coords(x, dim), normalized }
    }
}

fn trace_of_coords(x: &DVector<f64>, dim: usize) -> f64 {
    (0..dim).map(|p| x[p * dim + p]).sum()
}

fn finish_steady_state(l: &SuperOperator, x: &DVector<f64>) -> Result<DensityMatrix> {
    let d = l.dim();
    let tr = trace_of_coords(x, d);
    if tr.abs() < 1e-300 {
        return Err(Error::NoSteadyState);
    }
    let rho = DensityMatrix::from_coords(&(x / tr), d, true);
    let min_eig = rho.min_eigenvalue();
    if min_eig < -POSITIVITY_TOL {
        return Err(Error::NegativeSteadyState { min_eigenvalue: min_eig });
    }
    if l.residual(rho.matrix()) > STEADY_STATE_RESIDUAL {
        return Err(Error::NoSteadyState);
    }
    Ok(rho)
}

/// The unique normalized stationary state of `l`.
///
/// Fails with [`Error::NonUniqueSteadyState`] when the null space of the
/// generator has dimension greater than one.
pub fn steady_state(l: &SuperOperator) -> Result<DensityMatrix> {
    let d = l.dim();
    if d * d <= DENSE_LIMIT {
        let ns = null_spaces(l.hermitian_matrix(), NULL_SPACE_TOL)?;
        match ns.right.len() {
            0 => Err(Error::NoSteadyState),
            1 => finish_steady_state(l, &ns.right[0]),
            k => Err(Error::NonUniqueSteadyState { dimension: k }),
        }
    } else {
        bordered_solve(l)
    }
}

/// Large systems: replace the first balance equation by the trace condition
/// and solve directly. A singular system means the state is not unique.
fn bordered_solve(l: &SuperOperator) -> Result<DensityMatrix> {
    let d = l.dim();
    let mut a = l.hermitian_matrix().clone();
    let mut row = DVector::<f64>::zeros(d * d);
    for p in 0..d {
        row[p * d + p] = 1.0;
    }
    a.set_row(0, &row.transpose());
    let mut b = DVector::zeros(d * d);
    b[0] = 1.0;
    let lu = a.lu();
    let x = lu.solve(&b).ok_or(Error::NonUniqueSteadyState { dimension: 2 })?;
    finish_steady_state(l, &x).map_err(|e| match e {
        Error::NoSteadyState => Error::NonUniqueSteadyState { dimension: 2 },
        other => other,
    })
}

/// `lim_{t -> inf} exp(L t) rho0`.
///
/// Equals [`steady_state`] when that is unique. Otherwise the limit depends
/// on `rho0` and is obtained from the spectral projector onto the null space,
/// built from matching left and right null vectors.
pub fn asymptotic_state(l: &SuperOperator, rho0: &DensityMatrix) -> Result<DensityMatrix> {
    let d = l.dim();
    if d != rho0.dim() {
        return Err(Error::DimensionMismatch { expected: d, found: rho0.dim() });
    }
    if d * d > DENSE_LIMIT {
        return match steady_state(l) {
            Err(Error::NonUniqueSteadyState { .. }) => relax(l, rho0),
            other => other,
        };
    }
    let ns = null_spaces(l.hermitian_matrix(), NULL_SPACE_TOL)?;
    match ns.right.len() {
        0 => Err(Error::NoSteadyState),
        1 => finish_steady_state(l, &ns.right[0]),
        k => {
            let right = DMatrix::from_columns(&ns.right);
            let left = DMatrix::from_columns(&ns.left);
            let overlap = left.transpose() * &right;
            let weights = overlap
                .lu()
                .solve(&(left.transpose() * rho0.coords()))
                .ok_or(Error::NonUniqueSteadyState { dimension: k })?;
            finish_steady_state(l, &(right * weights))
        }
    }
}

/// Integrate until the residual drops below [`STEADY_STATE_RESIDUAL`].
fn relax(l: &SuperOperator, rho0: &DensityMatrix) -> Result<DensityMatrix> {
    let prop = Propagator::with_method(l, Method::runge_kutta());
    let mut rho = rho0.clone();
    for _ in 0..200 {
        rho = prop.propagate(&rho, 20.0)?;
        if l.residual(rho.matrix()) < 0.1 * STEADY_STATE_RESIDUAL {
            let x = rho.coords();
            return finish_steady_state(l, &x);
        }
    }
    Err(Error::NoSteadyState)
}

/// `n` equally spaced points on `[0, tau_max]`.
pub fn tau_grid(tau_max: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|k| tau_max * k as f64 / (n - 1) as f64).collect(),
    }
}

/// 400 points on `[0, 20]` in units of the inverse decay rate.
pub fn default_tau_grid() -> Vec<f64> {
    tau_grid(DEFAULT_TAU_MAX, DEFAULT_TAU_POINTS)
}

pub(crate) fn check_tau_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidTauGrid("empty".into()));
    }
    if grid.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::InvalidTauGrid("entries must be finite and non-negative".into()));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidTauGrid("entries must be sorted".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Dense `exp(L h)` in the Hermitian basis, cached per step length.
    Exponential,
    /// Adaptive Dormand-Prince 5(4) in operator form.
    RungeKutta { rtol: f64, atol: f64 },
}

impl Method {
    pub fn runge_kutta() -> Self {
        Method::RungeKutta { rtol: 1e-10, atol: 1e-13 }
    }

    /// Exponentials up to three atoms, Runge-Kutta beyond.
    pub fn auto(dim: usize) -> Self {
        if dim * dim <= DENSE_LIMIT {
            Method::Exponential
        } else {
            Self::runge_kutta()
        }
    }
}

/// Time evolution under a fixed generator.
///
/// Step exponentials are cached by step length, so a uniform grid costs one
/// exponential plus one matrix-vector product per point. The cache is behind
/// a mutex; a propagator may be shared between threads.
pub struct Propagator<'a> {
    l: &'a SuperOperator,
    method: Method,
    cache: Mutex<HashMap<u64, Arc<DMatrix<f64>>>>,
}

impl<'a> Propagator<'a> {
    pub fn new(l: &'a SuperOperator) -> Self {
        Self::with_method(l, Method::auto(l.dim()))
    }

    pub fn with_method(l: &'a SuperOperator, method: Method) -> Self {
        Propagator { l, method, cache: Mutex::new(HashMap::new()) }
    }

    pub fn method(&self) -> Method {
        self.method
    }

    fn step_matrix(&self, h: f64) -> Arc<DMatrix<f64>> {
        let key = h.to_bits();
        if let Some(m) = self.cache.lock().unwrap().get(&key) {
            return Arc::clone(m);
        }
        let m = Arc::new((self.l.hermitian_matrix() * h).exp());
        self.cache.lock().unwrap().insert(key, Arc::clone(&m));
        m
    }

    /// `exp(L tau) sigma0`.
    pub fn propagate(&self, sigma0: &DensityMatrix, tau: f64) -> Result<DensityMatrix> {
        let mut out = self.evolve_grid(sigma0, &[tau])?;
        Ok(out.pop().expect("one grid point"))
    }

    /// States at every point of a sorted, non-negative `grid`.
    pub fn evolve_grid(&self, sigma0: &DensityMatrix, grid: &[f64]) -> Result<Vec<DensityMatrix>> {
        check_tau_grid(grid)?;
        if sigma0.dim() != self.l.dim() {
            return Err(Error::DimensionMismatch { expected: self.l.dim(), found: sigma0.dim() });
        }
        match self.method {
            Method::Exponential => Ok(self.evolve_exponential(sigma0, grid)),
            Method::RungeKutta { rtol, atol } => self.evolve_rk(sigma0, grid, rtol, atol),
        }
    }

    fn evolve_exponential(&self, sigma0: &DensityMatrix, grid: &[f64]) -> Vec<DensityMatrix> {
        let d = self.l.dim();
        let normalized = sigma0.is_normalized();
        let mut x = sigma0.coords();
        let mut out = Vec::with_capacity(grid.len());

        if grid[0] > 0.0 {
            x = &*self.step_matrix(grid[0]) * &x;
        }
        out.push(DensityMatrix::from_coords(&x, d, normalized));
        if grid.len() == 1 {
            return out;
        }

        let n_steps = grid.len() - 1;
        let mean_step = (grid[n_steps] - grid[0]) / n_steps as f64;
        let uniform = grid.windows(2).all(|w| ((w[1] - w[0]) - mean_step).abs() <= 1e-9 * mean_step.max(1e-300));
        for k in 1..grid.len() {
            let h = if uniform { mean_step } else { grid[k] - grid[k - 1] };
            if h > 0.0 {
                x = &*self.step_matrix(h) * &x;
            }
            out.push(DensityMatrix::from_coords(&x, d, normalized));
        }
        out
    }

    fn evolve_rk(&self, sigma0: &DensityMatrix, grid: &[f64], rtol: f64, atol: f64) -> Result<Vec<DensityMatrix>> {
        let normalized = sigma0.is_normalized();
        let mut y = sigma0.matrix().clone();
        let mut t = 0.0;
        let mut h: f64 = 0.05;
        let mut out = Vec::with_capacity(grid.len());
        for &target in grid {
            while t < target {
                h = h.min(target - t);
                let (y_new, err) = dopri_step(self.l, &y, h, rtol, atol);
                if err <= 1.0 {
                    t = if target - t <= h { target } else { t + h };
                    y = y_new;
                }
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                h *= factor;
                if h < 1e-14 * t.max(1.0) {
                    return Err(Error::IntegratorFailure { tau_reached: t });
                }
            }
            out.push(DensityMatrix { matrix: y.clone(), normalized });
        }
        Ok(out)
    }
}

/// One Dormand-Prince 5(4) step; returns the fifth-order solution and the
/// scaled error norm.
fn dopri_step(l: &SuperOperator, y: &Operator, h: f64, rtol: f64, atol: f64) -> (Operator, f64) {
    const C: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
    let mut k: Vec<Operator> = Vec::with_capacity(7);
    k.push(l.apply(y));
    for row in C.iter() {
        let mut stage = y.clone();
        for (coef, ki) in row.iter().zip(&k) {
            if *coef != 0.0 {
                stage += ki * Complex64::new(h * coef, 0.0);
            }
        }
        k.push(l.apply(&stage));
    }
    // with FSAL the last stage is evaluated at the fifth-order solution
    let mut y_new = y.clone();
    for (coef, ki) in C[5].iter().zip(&k) {
        if *coef != 0.0 {
            y_new += ki * Complex64::new(h * coef, 0.0);
        }
    }
    let mut err = Operator::zeros(y.nrows(), y.ncols());
    for (coef, ki) in E.iter().zip(&k) {
        if *coef != 0.0 {
            err += ki * Complex64::new(h * coef, 0.0);
        }
    }
    let mut worst = 0.0_f64;
    for ((e, a), b) in err.iter().zip(y.iter()).zip(y_new.iter()) {
        let scale = atol + rtol * a.norm().max(b.norm());
        worst = worst.max(e.norm() / scale);
    }
    (y_new, worst)
}

/// `exp(L tau) sigma0` with the default method for the system size.
pub fn propagate(sigma0: &DensityMatrix, l: &SuperOperator, tau: f64) -> Result<DensityMatrix> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidTauGrid(format!("tau must be non-negative, got {tau}")));
    }
    Propagator::new(l).propagate(sigma0, tau)
}

/// `L(rho)` through the dense column-major matrix form.
pub fn apply_matrix(l: &SuperOperator, rho: &Operator) -> Operator {
    unvectorize(&(l.matrix() * vectorize(rho)), l.dim())
}
