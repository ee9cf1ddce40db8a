//! Stratonovich-form trajectory propagation through exact per-step unitaries.
//!
//! With a Hermitian coupling `R`, each step applies
//!
//! ```text
//! U_k = exp(-i H dt - i σ R ΔW_k)
//! ```
//!
//! (a first-order Magnus step with the increment read at the midpoint-
//! consistent value), so trajectories are norm-preserving by construction.
//! This is the form that maps directly onto quantum-gate execution; the
//! [`crate::circuit`] module emits its Trotterized variant.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::ito::{check_normalized, ItoModel};
use crate::linops::{expm_generator, Operator, StateVector, HERMITICITY_TOL};
use crate::noise::{sample_wiener_increments, RngStream};

/// Stochastic-Hamiltonian model `H + Z_t R` with white-noise `Z` of
/// intensity `sigma`; both operators must be Hermitian.
#[derive(Debug, Clone)]
pub struct StratModel {
    h: Operator,
    r: Operator,
    sigma: f64,
}

impl StratModel {
    pub fn new(h: Operator, r: Operator, sigma: f64) -> Result<Self> {
        h.require_hermitian(HERMITICITY_TOL)?;
        r.require_hermitian(HERMITICITY_TOL)?;
        if h.dim() != r.dim() {
            return Err(Error::DimensionMismatch(h.dim(), r.dim()));
        }
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::InvalidNoise(format!(
                "white-noise intensity must be finite and >= 0, got {sigma}"
            )));
        }
        Ok(Self { h, r, sigma })
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.h
    }

    pub fn coupling(&self) -> &Operator {
        &self.r
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// The per-step propagator `exp(-i(H dt + σ R ΔW))`, unitary up to rounding.
pub fn strat_step_unitary(model: &StratModel, dt: f64, dw: f64) -> Result<Operator> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::InvalidTimeStep(dt));
    }
    let generator =
        &model.h.scale(C64::new(dt, 0.0)) + &model.r.scale(C64::new(model.sigma * dw, 0.0));
    expm_generator(&generator, 1.0)
}

/// Propagate one trajectory: `ψ_{k+1} = U_k ψ_k`, returning all
/// `n_steps + 1` states. Every state keeps unit norm to rounding.
pub fn run_strat_trajectory(
    model: &StratModel,
    psi0: &StateVector,
    dt: f64,
    n_steps: usize,
    stream: &mut RngStream,
) -> Result<Vec<StateVector>> {
    check_normalized(psi0)?;
    let path = sample_wiener_increments(dt, n_steps, stream)?;
    run_strat_on_path(model, psi0, dt, &path.increments)
}

/// [`run_strat_trajectory`] with the Wiener increments supplied.
pub fn run_strat_on_path(
    model: &StratModel,
    psi0: &StateVector,
    dt: f64,
    increments: &[f64],
) -> Result<Vec<StateVector>> {
    let mut states = Vec::with_capacity(increments.len() + 1);
    states.push(psi0.clone());
    let mut psi = psi0.clone();
    for &dw in increments {
        let u = strat_step_unitary(model, dt, dw)?;
        psi = u.apply(&psi)?;
        states.push(psi.clone());
    }
    Ok(states)
}

/// The Itō model equivalent to a Stratonovich one under `B = iR`.
#[derive(Debug, Clone)]
pub struct ItoEquivalent {
    /// The converted drift `-iH - ½σ²R²`.
    pub drift: Operator,
    /// The full equivalent model, whose own drift matches `drift` exactly
    /// (`B†B = (iR)†(iR) = R²`).
    pub model: ItoModel,
}

/// Stratonovich → Itō conversion: the noise-induced drift correction is
/// `-½σ²R²`, and the equivalent Itō coupling is `B = iR`.
pub fn strat_to_ito_drift(model: &StratModel) -> Result<ItoEquivalent> {
    let r_squared = &model.r * &model.r;
    let drift = &model.h.scale(C64::new(0.0, -1.0))
        + &r_squared.scale(C64::new(-0.5 * model.sigma * model.sigma, 0.0));
    let b = model.r.scale(C64::new(0.0, 1.0));
    let ito = ItoModel::new(model.h.clone(), b, model.sigma)?;
    Ok(ItoEquivalent { drift, model: ito })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::pauli;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand::SeedableRng;

    fn plus_state() -> StateVector {
        let a = 1.0 / 2.0f64.sqrt();
        StateVector::from_amplitudes(vec![C64::new(a, 0.0), C64::new(a, 0.0)]).unwrap()
    }

    fn max_entry_diff(a: &Operator, b: &Operator) -> f64 {
        (a.matrix() - b.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn random_hermitian(dim: usize, rng: &mut impl Rng) -> Operator {
        let raw = DMatrix::from_fn(dim, dim, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        Operator::new((&raw + raw.adjoint()) * C64::new(0.5, 0.0)).unwrap()
    }

    #[test]
    fn noiseless_step_is_the_hamiltonian_propagator() {
        let model = StratModel::new(pauli::sigma_z(), pauli::sigma_x(), 0.8).unwrap();
        let u = strat_step_unitary(&model, 0.3, 0.0).unwrap();
        let expected = expm_generator(&pauli::sigma_z(), 0.3).unwrap();
        assert!(max_entry_diff(&u, &expected) < 1e-14);
    }

    #[test]
    fn pure_noise_step_matches_closed_form_rotation() {
        // H = 0, R = σx: U = cos(θ)·1 - i sin(θ)·σx with θ = σ·ΔW
        let sigma = 0.6;
        let dw = 0.25;
        let model = StratModel::new(Operator::zeros(2), pauli::sigma_x(), sigma).unwrap();
        let u = strat_step_unitary(&model, 1e-9, dw).unwrap();
        let theta = sigma * dw;
        assert_abs_diff_eq!(u.entry(0, 0).re, theta.cos(), epsilon = 1e-10);
        assert_abs_diff_eq!(u.entry(0, 1).im, -theta.sin(), epsilon = 1e-10);
    }

    #[test]
    fn commuting_generators_factorize_exactly() {
        // [H, R] = 0: U = exp(-iH dt)·exp(-iσR dW)
        let h = pauli::sigma_z().scale(C64::new(2.0, 0.0));
        let model = StratModel::new(h.clone(), pauli::sigma_z(), 0.9).unwrap();
        let dt = 0.11;
        let dw = -0.37;
        let u = strat_step_unitary(&model, dt, dw).unwrap();
        let factored = &expm_generator(&h, dt).unwrap()
            * &expm_generator(&pauli::sigma_z(), 0.9 * dw).unwrap();
        assert!(max_entry_diff(&u, &factored) < 1e-12);
    }

    #[test]
    fn unitarity_and_norms_hold_for_random_models() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(17);
        for _ in 0..20 {
            let dim = rng.random_range(2..=4);
            let model = StratModel::new(
                random_hermitian(dim, &mut rng),
                random_hermitian(dim, &mut rng),
                rng.random_range(0.1..1.2),
            )
            .unwrap();
            let u = strat_step_unitary(&model, 0.05, 0.2).unwrap();
            assert!(u.unitarity_defect() < 1e-10);

            let psi0 = StateVector::basis(dim, 0);
            let states =
                run_strat_trajectory(&model, &psi0, 0.02, 100, &mut RngStream::new(3, 0)).unwrap();
            for s in &states {
                assert!((s.norm() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn deterministic_limit_matches_magnus_exactly() {
        let model = StratModel::new(pauli::sigma_z(), pauli::sigma_x(), 0.0).unwrap();
        let psi0 = plus_state();
        let n = 200;
        let dt = 1.0 / n as f64;
        let states = run_strat_trajectory(&model, &psi0, dt, n, &mut RngStream::new(0, 0)).unwrap();
        let exact = expm_generator(&pauli::sigma_z(), 1.0).unwrap().apply(&psi0).unwrap();
        let err = states.last().unwrap().add_scaled(&exact, C64::new(-1.0, 0.0)).norm();
        assert!(err < 1e-8, "error {err}");
    }

    #[test]
    fn dephasing_keeps_populations_constant() {
        // commuting generator: |<0|ψ_t>| is constant along every trajectory
        let model = StratModel::new(pauli::sigma_z(), pauli::sigma_z(), 0.7).unwrap();
        let psi0 = plus_state();
        let states =
            run_strat_trajectory(&model, &psi0, 0.01, 300, &mut RngStream::new(8, 1)).unwrap();
        for s in &states {
            assert_abs_diff_eq!(s.amplitude(0).norm(), 1.0 / 2.0f64.sqrt(), epsilon = 1e-10);
        }
    }

    #[test]
    fn conversion_examples() {
        // R = σz: drift = -iH - ½σ²·1
        let sigma = 0.8;
        let model = StratModel::new(pauli::sigma_z(), pauli::sigma_z(), sigma).unwrap();
        let conv = strat_to_ito_drift(&model).unwrap();
        let expected = &pauli::sigma_z().scale(C64::new(0.0, -1.0))
            + &Operator::identity(2).scale(C64::new(-0.5 * sigma * sigma, 0.0));
        assert!(max_entry_diff(&conv.drift, &expected) < 1e-15);

        // σ = 0: drift = -iH
        let free = StratModel::new(pauli::sigma_x(), pauli::sigma_z(), 0.0).unwrap();
        let conv = strat_to_ito_drift(&free).unwrap();
        assert!(max_entry_diff(&conv.drift, &pauli::sigma_x().scale(C64::new(0.0, -1.0))) < 1e-15);
    }

    #[test]
    fn conversion_agrees_with_ito_drift_for_random_couplings() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(23);
        for _ in 0..50 {
            let dim = rng.random_range(2..=4);
            let model = StratModel::new(
                random_hermitian(dim, &mut rng),
                random_hermitian(dim, &mut rng),
                rng.random_range(0.1..1.5),
            )
            .unwrap();
            let conv = strat_to_ito_drift(&model).unwrap();
            // B†B = R², so the ItoModel drift must equal the converted one
            assert!(max_entry_diff(&conv.drift, conv.model.drift()) < 1e-12);
        }
    }
}
