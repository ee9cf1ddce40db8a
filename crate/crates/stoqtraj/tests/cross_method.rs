//! Itō–Stratonovich–Lindblad consistency on a model where nothing
//! commutes: H = σz + 0.4 σx with coupling R = (σx + σz)/√2. The three
//! routes must land on the same mean density within Monte Carlo error.

use num_complex::Complex64 as C64;

use stoqtraj::ensemble::{compare, run_ensemble, Engine, ToleranceRule};
use stoqtraj::ito::ItoModel;
use stoqtraj::linops::{pauli, DensityMatrix, Operator, StateVector};
use stoqtraj::master::{lindblad_rhs, rk4_evolve, LindbladModel};
use stoqtraj::strat::{strat_to_ito_drift, StratModel};

fn model_pieces() -> (Operator, Operator, f64) {
    let h = &pauli::sigma_z() + &pauli::sigma_x().scale(C64::new(0.4, 0.0));
    let r = (&pauli::sigma_x() + &pauli::sigma_z()).scale(C64::new(1.0 / 2.0f64.sqrt(), 0.0));
    (h, r, 0.6)
}

fn observables() -> Vec<(String, Operator)> {
    vec![
        ("sx".into(), pauli::sigma_x()),
        ("sy".into(), pauli::sigma_y()),
        ("sz".into(), pauli::sigma_z()),
    ]
}

#[test]
fn noncommuting_model_is_consistent_across_methods() {
    let (h, r, sigma) = model_pieces();
    let psi0 = StateVector::basis(2, 0);
    let dt = 2e-3;
    let n_steps = 500;
    let n_traj = 4000;
    let rule = ToleranceRule::Stderr { k: 3.0, floor: 1.5e-2 };

    let strat_model = StratModel::new(h.clone(), r.clone(), sigma).unwrap();
    let strat = run_ensemble(
        &Engine::Strat { model: strat_model.clone(), psi0: psi0.clone() },
        n_traj,
        dt,
        n_steps,
        31_337,
        &observables(),
    )
    .unwrap();

    // unitary engines keep the mean trace pinned
    for rho in &strat.mean_rho {
        assert!((rho.trace().re - 1.0).abs() < 1e-9);
    }

    // equivalent Itō model via B = iR, independent seed
    let ito_model = strat_to_ito_drift(&strat_model).unwrap().model;
    let ito = run_ensemble(
        &Engine::ItoEm { model: ito_model, psi0: psi0.clone() },
        n_traj,
        dt,
        n_steps,
        42_424,
        &observables(),
    )
    .unwrap();
    let ito_vs_strat = compare(&strat, &ito.mean_rho, rule).unwrap();
    assert!(
        ito_vs_strat.pass,
        "ito vs strat: max distance {:.3e} at t={:.3}",
        ito_vs_strat.max_trace_distance, ito_vs_strat.time_of_max
    );

    // Lindblad oracle with the single channel L = R at rate σ²
    let lindblad = LindbladModel::new(h, vec![(r, sigma * sigma)]).unwrap();
    let oracle = rk4_evolve(
        |_, rho| lindblad_rhs(&lindblad, rho),
        &DensityMatrix::from_pure(&psi0),
        dt,
        n_steps,
    )
    .unwrap();
    let strat_vs_oracle = compare(&strat, &oracle.states, rule).unwrap();
    assert!(
        strat_vs_oracle.pass,
        "strat vs lindblad: max distance {:.3e} at t={:.3}",
        strat_vs_oracle.max_trace_distance, strat_vs_oracle.time_of_max
    );

    // the engine-specific discretization biases both land well inside the
    // Monte Carlo band, so the milstein route must agree too
    let milstein = run_ensemble(
        &Engine::ItoMilstein { model: strat_to_ito_drift(&strat_model).unwrap().model, psi0 },
        n_traj,
        dt,
        n_steps,
        55_555,
        &observables(),
    )
    .unwrap();
    let milstein_vs_oracle = compare(&milstein, &oracle.states, rule).unwrap();
    assert!(
        milstein_vs_oracle.pass,
        "milstein vs lindblad: max distance {:.3e}",
        milstein_vs_oracle.max_trace_distance
    );
}
