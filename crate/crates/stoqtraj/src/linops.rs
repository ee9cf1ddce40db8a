//! Dense complex linear algebra for small Hilbert spaces.
//!
//! Everything here is sized for desk-scale dimensions (dim ≲ 2^10): dense
//! storage, Hermitian eigendecomposition for matrix functions, and the
//! density-matrix diagnostics the cross-method comparisons rely on. All
//! quantities are dimensionless with ħ = 1; energies and rates carry units
//! of inverse time.
//!
//! Values are immutable once constructed and safe to share across threads.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Default absolute tolerance for Hermiticity checks, assuming O(1) entries.
pub const HERMITICITY_TOL: f64 = 1e-12;

/// A dense complex square matrix acting on the system Hilbert space.
///
/// Houses Hamiltonians, noise-coupling operators, Lindblad channels and
/// propagators alike; operations that require Hermiticity check it at entry
/// against [`HERMITICITY_TOL`] (or a caller-supplied tolerance).
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    mat: DMatrix<C64>,
}

impl Operator {
    /// Wrap a square matrix, rejecting NaN/Inf entries.
    pub fn new(mat: DMatrix<C64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch(mat.nrows(), mat.ncols()));
        }
        if !mat.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(Self { mat })
    }

    /// Build from row-major `[re, im]` pairs, the literal format used by
    /// configs and CSV dumps.
    pub fn from_rows(rows: &[Vec<[f64; 2]>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch(
                dim,
                rows.iter().map(Vec::len).max().unwrap_or(0),
            ));
        }
        let mat = DMatrix::from_fn(dim, dim, |i, j| C64::new(rows[i][j][0], rows[i][j][1]));
        Self::new(mat)
    }

    /// Row-major `[re, im]` pairs, inverse of [`Operator::from_rows`].
    pub fn to_rows(&self) -> Vec<Vec<[f64; 2]>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| [self.mat[(i, j)].re, self.mat[(i, j)].im]).collect())
            .collect()
    }

    pub fn zeros(dim: usize) -> Self {
        Self { mat: DMatrix::zeros(dim, dim) }
    }

    pub fn identity(dim: usize) -> Self {
        Self { mat: DMatrix::identity(dim, dim) }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn entry(&self, i: usize, j: usize) -> C64 {
        self.mat[(i, j)]
    }

    pub fn adjoint(&self) -> Self {
        Self { mat: self.mat.adjoint() }
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self { mat: &self.mat * factor }
    }

    pub fn trace(&self) -> C64 {
        self.mat.diagonal().sum()
    }

    /// Largest elementwise deviation from the adjoint, `max |A - A†|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = &self.mat - self.mat.adjoint();
        d.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_hermitian_within(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    /// Error out unless the operator is Hermitian within `tol`.
    pub fn require_hermitian(&self, tol: f64) -> Result<()> {
        let defect = self.hermiticity_defect();
        if defect <= tol {
            Ok(())
        } else {
            Err(Error::NonHermitianInput { defect, tol })
        }
    }

    /// Largest elementwise deviation of `A†A` from the identity.
    pub fn unitarity_defect(&self) -> f64 {
        let d = self.mat.adjoint() * &self.mat - DMatrix::<C64>::identity(self.dim(), self.dim());
        d.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.mat.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Spectral norm (largest |eigenvalue|) of a Hermitian operator.
    pub fn hermitian_spectral_norm(&self) -> f64 {
        hermitian_eigenvalues(&self.mat).into_iter().map(f64::abs).fold(0.0, f64::max)
    }

    /// Matrix-vector product `A ψ`.
    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        if self.dim() != psi.dim() {
            return Err(Error::DimensionMismatch(self.dim(), psi.dim()));
        }
        Ok(StateVector { amp: &self.mat * &psi.amp })
    }

    /// Conjugation `A ρ A†`, the action of a propagator on a density matrix.
    pub fn conjugate(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if self.dim() != rho.dim() {
            return Err(Error::DimensionMismatch(self.dim(), rho.dim()));
        }
        Ok(DensityMatrix { mat: &self.mat * &rho.mat * self.mat.adjoint() })
    }
}

impl std::ops::Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        Operator { mat: &self.mat + &rhs.mat }
    }
}

impl std::ops::Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        Operator { mat: &self.mat - &rhs.mat }
    }
}

impl std::ops::Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        Operator { mat: &self.mat * &rhs.mat }
    }
}

/// One trajectory's pure state: a complex amplitude vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amp: DVector<C64>,
}

impl StateVector {
    pub fn new(amp: DVector<C64>) -> Result<Self> {
        if !amp.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(Self { amp })
    }

    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self> {
        Self::new(DVector::from_vec(amps))
    }

    /// The computational basis state `|k>` in dimension `dim`.
    pub fn basis(dim: usize, k: usize) -> Self {
        let mut amp = DVector::zeros(dim);
        amp[k] = C64::new(1.0, 0.0);
        Self { amp }
    }

    pub fn dim(&self) -> usize {
        self.amp.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amp
    }

    pub fn amplitude(&self, k: usize) -> C64 {
        self.amp[k]
    }

    pub fn norm(&self) -> f64 {
        self.amp.norm()
    }

    pub fn norm_squared(&self) -> f64 {
        self.amp.norm_squared()
    }

    /// Rescale to unit norm.
    pub fn normalized(&self) -> Self {
        Self { amp: &self.amp / C64::new(self.norm(), 0.0) }
    }

    pub fn add_scaled(&self, other: &StateVector, factor: C64) -> StateVector {
        Self { amp: &self.amp + &other.amp * factor }
    }

    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amp.dotc(&other.amp)
    }
}

/// A complex (nominally Hermitian, trace-one) density matrix.
///
/// Normalization is not enforced on construction: Itō trajectory densities
/// legitimately carry a trace equal to the squared martingale norm, and the
/// diagnostics ([`DensityMatrix::trace`], [`DensityMatrix::hermiticity_defect`],
/// [`DensityMatrix::min_eigenvalue`]) exist so callers can check the
/// invariants that apply in their context.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn new(mat: DMatrix<C64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch(mat.nrows(), mat.ncols()));
        }
        if !mat.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(Self { mat })
    }

    /// Outer product `|ψ><ψ|`. The trace equals `||ψ||²`, which is only 1
    /// for normalized states.
    pub fn from_pure(psi: &StateVector) -> Self {
        let n = psi.dim();
        let mat = DMatrix::from_fn(n, n, |i, j| psi.amp[i] * psi.amp[j].conj());
        Self { mat }
    }

    /// The maximally mixed state `1/dim`.
    pub fn maximally_mixed(dim: usize) -> Self {
        Self { mat: DMatrix::identity(dim, dim) * C64::new(1.0 / dim as f64, 0.0) }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn entry(&self, i: usize, j: usize) -> C64 {
        self.mat[(i, j)]
    }

    pub fn trace(&self) -> C64 {
        self.mat.diagonal().sum()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let d = &self.mat - self.mat.adjoint();
        d.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Hermitian part `(ρ + ρ†)/2`; returns the largest entry moved.
    pub fn symmetrize(&mut self) -> f64 {
        let sym = (&self.mat + self.mat.adjoint()) * C64::new(0.5, 0.0);
        let correction = (&sym - &self.mat).iter().map(|z| z.norm()).fold(0.0, f64::max);
        self.mat = sym;
        correction
    }

    /// Smallest eigenvalue of the Hermitian part; negative values signal
    /// positivity violations.
    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.mat + self.mat.adjoint()) * C64::new(0.5, 0.0);
        hermitian_eigenvalues(&herm).into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Expectation value `Tr(O ρ)`.
    pub fn expectation(&self, observable: &Operator) -> Result<C64> {
        if self.dim() != observable.dim() {
            return Err(Error::DimensionMismatch(self.dim(), observable.dim()));
        }
        let mut tr = C64::new(0.0, 0.0);
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                tr += observable.mat[(i, j)] * self.mat[(j, i)];
            }
        }
        Ok(tr)
    }

    pub fn add_scaled(&self, other: &DensityMatrix, factor: C64) -> DensityMatrix {
        Self { mat: &self.mat + &other.mat * factor }
    }

    pub fn scale(&self, factor: C64) -> DensityMatrix {
        Self { mat: &self.mat * factor }
    }

    pub fn as_operator(&self) -> Operator {
        Operator { mat: self.mat.clone() }
    }

    pub fn from_operator(op: Operator) -> Self {
        Self { mat: op.mat }
    }
}

fn hermitian_eigenvalues(mat: &DMatrix<C64>) -> Vec<f64> {
    SymmetricEigen::new(mat.clone()).eigenvalues.iter().copied().collect()
}

/// Unitary exponential `exp(-i · scale · M)` of a Hermitian generator.
///
/// Computed through the eigendecomposition `M = V Λ V†`, so the result is
/// unitary up to rounding no matter how large `scale · Λ` is — the property
/// the per-step Stratonovich propagators rely on.
pub fn expm_generator(m: &Operator, scale: f64) -> Result<Operator> {
    m.require_hermitian(HERMITICITY_TOL)?;
    if !scale.is_finite() {
        return Err(Error::NonFiniteInput);
    }
    if m.dim() == 2 {
        return Ok(expm_generator_2x2(m, scale));
    }
    let eig = SymmetricEigen::new(m.mat.clone());
    let phases = DVector::from_iterator(
        m.dim(),
        eig.eigenvalues.iter().map(|&l| C64::from_polar(1.0, -scale * l)),
    );
    let v = &eig.eigenvectors;
    // U = V e^{-i s Λ} V†: scale the columns of V, then multiply by V†
    let mut u = v.clone();
    for j in 0..u.ncols() {
        let p = phases[j];
        for i in 0..u.nrows() {
            u[(i, j)] *= p;
        }
    }
    Ok(Operator { mat: u * v.adjoint() })
}

/// Analytic eigendecomposition of a 2x2 Hermitian generator: with
/// `M = m0·1 + n·σ`, `exp(-i s M) = e^{-i s m0}(cos(s r)·1 - i sin(s r)·n·σ/r)`
/// where `r = |n|`. This is the closed form of `V e^{-i s Λ} V†` and keeps
/// the unitary-to-rounding property; it only exists because the per-step
/// propagators dominate the trajectory engines' runtime.
fn expm_generator_2x2(m: &Operator, scale: f64) -> Operator {
    let m00 = m.mat[(0, 0)].re;
    let m11 = m.mat[(1, 1)].re;
    let c = (m.mat[(0, 1)] + m.mat[(1, 0)].conj()) * 0.5;
    let m0 = 0.5 * (m00 + m11);
    let mz = 0.5 * (m00 - m11);
    let r = (mz * mz + c.norm_sqr()).sqrt();

    let global = C64::from_polar(1.0, -scale * m0);
    let (cos_sr, sin_over_r) =
        if r > 0.0 { ((scale * r).cos(), (scale * r).sin() / r) } else { (1.0, 0.0) };
    let minus_i_sin = C64::new(0.0, -sin_over_r);
    let mat = DMatrix::from_row_slice(
        2,
        2,
        &[
            global * (C64::new(cos_sr, 0.0) + minus_i_sin * mz),
            global * minus_i_sin * c,
            global * minus_i_sin * c.conj(),
            global * (C64::new(cos_sr, 0.0) - minus_i_sin * mz),
        ],
    );
    Operator { mat }
}

/// Commutator `[A, B] = AB - BA`.
pub fn commutator(a: &Operator, b: &Operator) -> Result<Operator> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(a.dim(), b.dim()));
    }
    Ok(Operator { mat: &a.mat * &b.mat - &b.mat * &a.mat })
}

/// Anticommutator `{A, B} = AB + BA`.
pub fn anticommutator(a: &Operator, b: &Operator) -> Result<Operator> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(a.dim(), b.dim()));
    }
    Ok(Operator { mat: &a.mat * &b.mat + &b.mat * &a.mat })
}

/// Trace distance `½ Σ |λ_i|` over the eigenvalues of `ρ1 - ρ2`.
pub fn trace_distance(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<f64> {
    if rho1.dim() != rho2.dim() {
        return Err(Error::DimensionMismatch(rho1.dim(), rho2.dim()));
    }
    // Both inputs must be Hermitian for the eigenvalue formula to apply;
    // the bound is loose against harmless accumulation in ensemble means.
    let tol = 1e-8;
    for rho in [rho1, rho2] {
        let defect = rho.hermiticity_defect();
        if defect > tol {
            return Err(Error::NonHermitianInput { defect, tol });
        }
    }
    let diff = &rho1.mat - &rho2.mat;
    let herm = (&diff + diff.adjoint()) * C64::new(0.5, 0.0);
    Ok(0.5 * hermitian_eigenvalues(&herm).into_iter().map(f64::abs).sum::<f64>())
}

/// Purity `Tr(ρ²)`; lies in `[1/dim, 1]` for normalized states.
pub fn purity(rho: &DensityMatrix) -> f64 {
    let mut tr = 0.0;
    for i in 0..rho.dim() {
        for j in 0..rho.dim() {
            tr += (rho.mat[(i, j)] * rho.mat[(j, i)]).re;
        }
    }
    tr
}

/// The standard single-qubit matrices used throughout the tests, the gate
/// emitter and the example models.
pub mod pauli {
    use super::{DMatrix, Operator, C64};

    pub fn sigma_x() -> Operator {
        Operator::new(DMatrix::from_row_slice(
            2,
            2,
            &[C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
        ))
        .unwrap()
    }

    pub fn sigma_y() -> Operator {
        Operator::new(DMatrix::from_row_slice(
            2,
            2,
            &[C64::new(0.0, 0.0), C64::new(0.0, -1.0), C64::new(0.0, 1.0), C64::new(0.0, 0.0)],
        ))
        .unwrap()
    }

    pub fn sigma_z() -> Operator {
        Operator::new(DMatrix::from_row_slice(
            2,
            2,
            &[C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(-1.0, 0.0)],
        ))
        .unwrap()
    }

    /// Ladder operator mapping `|1>` to `|0>`; its adjoint maps `|0>` to `|1>`.
    /// Used as the relaxation channel that drives the ensemble toward
    /// `|0><0|`.
    pub fn lowering() -> Operator {
        Operator::new(DMatrix::from_row_slice(
            2,
            2,
            &[C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)],
        ))
        .unwrap()
    }
}
