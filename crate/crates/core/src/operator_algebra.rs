//! Dense complex linear algebra over the N-atom Hilbert space.
//!
//! Every atom has three levels ordered `(g, e, r)`. An N-atom basis state
//! `|m_0 m_1 ... m_{N-1}>` sits at index `sum_i m_i * 3^(N-1-i)`, so atom 0 is
//! the slowest-varying digit. This matches `kron(a0, kron(a1, ...))`.

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense complex square matrix acting on the `3^N` dimensional space.
pub type Operator = DMatrix<Complex64>;

/// Number of internal levels per atom.
pub const LEVELS: usize = 3;

/// Ground state index.
pub const G: usize = 0;
/// Short-lived intermediate state index.
pub const E: usize = 1;
/// Rydberg state index.
pub const R: usize = 2;

/// Default relative tolerance for null-space extraction.
pub const NULL_SPACE_TOL: f64 = 1e-10;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub(crate) const I: Complex64 = Complex64::new(0.0, 1.0);

/// Single-atom outer product `|m><n|`.
pub fn sigma(m: usize, n: usize) -> Operator {
    assert!(m < LEVELS && n < LEVELS, "level index out of range");
    let mut op = Operator::zeros(LEVELS, LEVELS);
    op[(m, n)] = ONE;
    op
}

pub fn identity(dim: usize) -> Operator {
    Operator::identity(dim, dim)
}

/// Hilbert-space dimension for `n_atoms` three-level atoms.
pub fn hilbert_dim(n_atoms: usize) -> usize {
    LEVELS.pow(n_atoms as u32)
}

/// Tensor product with entry `(i*b.dim + k, j*b.dim + l) = a(i,j) b(k,l)`.
pub fn kron(a: &Operator, b: &Operator) -> Operator {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = Operator::zeros(ar * br, ac * bc);
    for j in 0..ac {
        for i in 0..ar {
            let aij = a[(i, j)];
            if aij == ZERO {
                continue;
            }
            for l in 0..bc {
                for k in 0..br {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Places a single-atom operator on `atom`, identity on every other site.
pub fn embed(op: &Operator, atom: usize, n_atoms: usize) -> Result<Operator> {
    if op.nrows() != LEVELS || op.ncols() != LEVELS {
        return Err(Error::NotSingleAtom(op.nrows()));
    }
    if atom >= n_atoms {
        return Err(Error::AtomOutOfRange { atom, n_atoms });
    }
    let left = identity(hilbert_dim(atom));
    let right = identity(hilbert_dim(n_atoms - atom - 1));
    Ok(kron(&kron(&left, op), &right))
}

/// Level of `atom` in the basis state with index `state`.
pub fn level_of(state: usize, atom: usize, n_atoms: usize) -> usize {
    (state / hilbert_dim(n_atoms - atom - 1)) % LEVELS
}

pub fn commutator(a: &Operator, b: &Operator) -> Operator {
    a * b - b * a
}

/// `Tr(a b)` without forming the product.
pub fn trace_product(a: &Operator, b: &Operator) -> Complex64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for j in 0..n {
        for k in 0..n {
            acc += a[(j, k)] * b[(k, j)];
        }
    }
    acc
}

/// Largest entrywise modulus of `a - a^dagger`.
pub fn hermiticity_defect(a: &Operator) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for k in j..n {
            worst = worst.max((a[(j, k)] - a[(k, j)].conj()).norm());
        }
    }
    worst
}

/// Orthonormal right and left null spaces of a matrix, from one SVD.
#[derive(Debug, Clone)]
pub struct NullSpaces<T: ComplexField> {
    /// Vectors `v` with `m v ~ 0`.
    pub right: Vec<DVector<T>>,
    /// Vectors `u` with `u^dagger m ~ 0`.
    pub left: Vec<DVector<T>>,
    pub largest_singular_value: f64,
}

/// Singular vectors whose singular value is at most `tol` times the largest.
pub fn null_spaces<T>(m: &DMatrix<T>, tol: f64) -> Result<NullSpaces<T>>
where
    T: ComplexField<RealField = f64>,
{
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("null-space tolerance must be positive, got {tol}")));
    }
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
    }
    let n = m.nrows();
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let s = &svd.singular_values;
    let largest = s.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = tol * largest;

    let mut right = Vec::new();
    let mut left = Vec::new();
    for k in 0..n {
        if s[k] <= cutoff {
            right.push(v_t.row(k).adjoint());
            left.push(u.column(k).into_owned());
        }
    }
    Ok(NullSpaces { right, left, largest_singular_value: largest })
}

/// Orthonormal basis of the right null space of `m`.
pub fn null_space<T>(m: &DMatrix<T>, tol: f64) -> Result<Vec<DVector<T>>>
where
    T: ComplexField<RealField = f64>,
{
    null_spaces(m, tol).map(|ns| ns.right)
}

/// Number of real coordinates of a `dim x dim` Hermitian matrix.
pub fn hermitian_coords_len(dim: usize) -> usize {
    dim * dim
}

/// Coordinates of a Hermitian matrix in the orthonormal basis
/// `{E_pp, (E_pq + E_qp)/sqrt2, i(E_pq - E_qp)/sqrt2}`.
///
/// Index `p*dim + q` with `p < q` holds `sqrt2 Re a_pq`, index `q*dim + p`
/// holds `sqrt2 Im a_pq`, and `p*dim + p` holds `a_pp`. The anti-Hermitian
/// part of `a`, if any, is discarded.
pub fn to_hermitian_coords(a: &Operator) -> DVector<f64> {
    let d = a.nrows();
    let mut x = DVector::zeros(d * d);
    for p in 0..d {
        x[p * d + p] = a[(p, p)].re;
        for q in (p + 1)..d {
            let z = 0.5 * (a[(p, q)] + a[(q, p)].conj());
            x[p * d + q] = std::f64::consts::SQRT_2 * z.re;
            x[q * d + p] = std::f64::consts::SQRT_2 * z.im;
        }
    }
    x
}

/// Inverse of [`to_hermitian_coords`].
pub fn from_hermitian_coords(x: &DVector<f64>, dim: usize) -> Operator {
    let mut a = Operator::zeros(dim, dim);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for p in 0..dim {
        a[(p, p)] = Complex64::new(x[p * dim + p], 0.0);
        for q in (p + 1)..dim {
            let z = Complex64::new(x[p * dim + q] * h, x[q * dim + p] * h);
            a[(p, q)] = z;
            a[(q, p)] = z.conj();
        }
    }
    a
}

/// Column-major vectorization: `vec(a)[j + k*dim] = a(j, k)`.
pub fn vectorize(a: &Operator) -> DVector<Complex64> {
    DVector::from_column_slice(a.as_slice())
}

pub fn unvectorize(v: &DVector<Complex64>, dim: usize) -> Operator {
    Operator::from_column_slice(dim, dim, v.as_slice())
}
