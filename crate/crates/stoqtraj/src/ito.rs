//! Itō-form trajectory integration of the normalized linear stochastic
//! Schrödinger equation
//!
//! ```text
//! dψ = (-iH - ½σ²B†B) ψ dt + σ B ψ dW
//! ```
//!
//! with Euler–Maruyama and Milstein schemes. The coupling operator `B` may
//! be non-Hermitian; the drift is constructed so that `A + A† + σ²B†B = 0`,
//! which makes `E[||ψ||²]` a martingale. Individual trajectories are *not*
//! normalized — renormalizing them per step would bias the ensemble mean
//! away from the Lindblad form, so the density average is taken over raw
//! outer products.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linops::{DensityMatrix, Operator, StateVector, HERMITICITY_TOL};
use crate::noise::{sample_wiener_increments, RngStream};

/// Norm threshold that flags a numerically unstable run.
pub const BLOWUP_GUARD: f64 = 1e3;

/// Tolerance for the martingale drift identity `A + A† + σ²B†B = 0`.
pub const DRIFT_IDENTITY_TOL: f64 = 1e-10;

/// White-noise SSE model `dψ = Aψ dt + σBψ dW` with the drift
/// `A = -iH - ½σ²B†B` built at construction.
#[derive(Debug, Clone)]
pub struct ItoModel {
    h: Operator,
    b: Operator,
    sigma: f64,
    drift: Operator,
    b_squared: Operator,
}

impl ItoModel {
    /// Build the model, checking that `H` is Hermitian and verifying the
    /// constructed drift satisfies the martingale identity.
    ///
    /// `sigma = 0` is accepted as the deterministic limit.
    pub fn new(h: Operator, b: Operator, sigma: f64) -> Result<Self> {
        h.require_hermitian(HERMITICITY_TOL)?;
        if h.dim() != b.dim() {
            return Err(Error::DimensionMismatch(h.dim(), b.dim()));
        }
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::InvalidNoise(format!(
                "white-noise intensity must be finite and >= 0, got {sigma}"
            )));
        }

        let bdag_b = &b.adjoint() * &b;
        let drift =
            &h.scale(C64::new(0.0, -1.0)) + &bdag_b.scale(C64::new(-0.5 * sigma * sigma, 0.0));

        // A + A† + σ²B†B must vanish; a failure here means H was barely
        // Hermitian or the arithmetic lost more than it should.
        let residual = &(&drift + &drift.adjoint()) + &bdag_b.scale(C64::new(sigma * sigma, 0.0));
        let defect = residual.matrix().iter().map(|z| z.norm()).fold(0.0, f64::max);
        if defect > DRIFT_IDENTITY_TOL {
            return Err(Error::NonHermitianInput { defect, tol: DRIFT_IDENTITY_TOL });
        }

        let b_squared = &b * &b;
        Ok(Self { h, b, sigma, drift, b_squared })
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.h
    }

    pub fn coupling(&self) -> &Operator {
        &self.b
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// The drift operator `A = -iH - ½σ²B†B`.
    pub fn drift(&self) -> &Operator {
        &self.drift
    }

    /// Step-size scale below which the linear SDE is comfortably stable,
    /// `~ 1/(σ²||B||²)`; quoted in blow-up errors.
    pub fn stability_dt_hint(&self) -> f64 {
        let scale = self.sigma * self.sigma * self.b.frobenius_norm().powi(2);
        if scale > 0.0 {
            1.0 / scale
        } else {
            f64::INFINITY
        }
    }
}

/// Time-stepping scheme for [`run_ito_trajectory`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ItoScheme {
    EulerMaruyama,
    Milstein,
}

/// One Euler–Maruyama step `ψ' = ψ + Aψ dt + σBψ dW`. No renormalization.
pub fn em_step(model: &ItoModel, psi: &StateVector, dt: f64, dw: f64) -> Result<StateVector> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::InvalidTimeStep(dt));
    }
    let drift_part = model.drift.apply(psi)?;
    let noise_part = model.b.apply(psi)?;
    Ok(psi
        .add_scaled(&drift_part, C64::new(dt, 0.0))
        .add_scaled(&noise_part, C64::new(model.sigma * dw, 0.0)))
}

/// One Milstein step: Euler–Maruyama plus the constant-coefficient
/// correction `½σ²B²ψ (dW² - dt)`.
///
/// The coefficients are state-linear with a constant operator, so the
/// general Milstein derivative term reduces to exactly this.
pub fn milstein_step(model: &ItoModel, psi: &StateVector, dt: f64, dw: f64) -> Result<StateVector> {
    let em = em_step(model, psi, dt, dw)?;
    let correction = model.b_squared.apply(psi)?;
    let factor = 0.5 * model.sigma * model.sigma * (dw * dw - dt);
    Ok(em.add_scaled(&correction, C64::new(factor, 0.0)))
}

/// Integrate one trajectory over `n_steps` steps, returning all
/// `n_steps + 1` states including the initial one.
///
/// Deterministic given the stream. Fails with [`Error::NumericalBlowup`]
/// when the norm passes [`BLOWUP_GUARD`] — linear SDEs are not a.s. bounded
/// and a too-large `dt` shows up as runaway growth.
pub fn run_ito_trajectory(
    model: &ItoModel,
    psi0: &StateVector,
    dt: f64,
    n_steps: usize,
    scheme: ItoScheme,
    stream: &mut RngStream,
) -> Result<Vec<StateVector>> {
    check_normalized(psi0)?;
    let path = sample_wiener_increments(dt, n_steps, stream)?;
    run_ito_on_path(model, psi0, dt, &path.increments, scheme)
}

/// Same as [`run_ito_trajectory`] but with the Wiener increments supplied,
/// for convergence studies that reuse one Brownian path at several
/// resolutions.
pub fn run_ito_on_path(
    model: &ItoModel,
    psi0: &StateVector,
    dt: f64,
    increments: &[f64],
    scheme: ItoScheme,
) -> Result<Vec<StateVector>> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::InvalidTimeStep(dt));
    }
    let mut states = Vec::with_capacity(increments.len() + 1);
    states.push(psi0.clone());
    let mut psi = psi0.clone();
    for &dw in increments {
        psi = match scheme {
            ItoScheme::EulerMaruyama => em_step(model, &psi, dt, dw)?,
            ItoScheme::Milstein => milstein_step(model, &psi, dt, dw)?,
        };
        let norm = psi.norm();
        if !norm.is_finite() || norm > BLOWUP_GUARD {
            return Err(Error::NumericalBlowup {
                norm,
                guard: BLOWUP_GUARD,
                dt_hint: model.stability_dt_hint(),
            });
        }
        states.push(psi.clone());
    }
    Ok(states)
}

/// Outer products `|ψ><ψ|` per time point. Traces equal the squared norms;
/// Itō trajectories carry their martingale weight here.
pub fn trajectory_density(states: &[StateVector]) -> Vec<DensityMatrix> {
    states.iter().map(DensityMatrix::from_pure).collect()
}

pub(crate) fn check_normalized(psi: &StateVector) -> Result<()> {
    let norm = psi.norm();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidInitialState { norm });
    }
    Ok(())
}
