//! Deterministic master-equation oracles and trajectory-level density
//! evolution.
//!
//! Provides the right-hand sides and RK4 integration for
//!
//! * the Lindblad form `-i[H,ρ] + Σ_k γ_k (L_k ρ L_k† - ½{L_k†L_k, ρ})`,
//! * the white-noise double-commutator form `-i[H,ρ] - γ[R,[R,ρ]]`,
//! * the time-convolutionless (Redfield-type) equation with an
//!   Ornstein–Uhlenbeck memory kernel,
//!
//! plus the stochastic Liouville trajectory `dρ/dt = -i[H_eff,ρ] + D[ρ]`
//! with per-step unitary conjugation.
//!
//! # Rate conventions
//!
//! A white drive of intensity `σ` has covariance `σ²δ(t-s)`. The one-sided
//! memory integral `∫_0^t C(t-s)·…ds` picks up half of the delta mass, so
//! the double-commutator coefficient equivalent to that drive is
//! `γ = σ²/2`, and by the identity `-γ[R,[R,ρ]] = 2γ(RρR - ½{R²,ρ})` the
//! matching single-channel Lindblad rate is `2γ = σ²`. Use
//! [`gamma_from_white_intensity`] rather than squaring intensities by hand.
//! For an Ornstein–Uhlenbeck drive the corresponding white-noise limit
//! (τ_c → 0 at fixed `std²·τ_c`) has `γ = std²·τ_c`, the one-sided integral
//! of its covariance.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linops::{
    anticommutator, commutator, expm_generator, DensityMatrix, Operator, HERMITICITY_TOL,
};
use crate::noise::{sample_ou_path, sample_wiener_increments, NoiseSpec, RngStream};

/// Double-commutator coefficient equivalent to a white drive of intensity
/// `sigma`: `γ = σ²/2` (half the delta mass lands inside the one-sided
/// memory integral).
pub fn gamma_from_white_intensity(sigma: f64) -> f64 {
    0.5 * sigma * sigma
}

/// Markovian master-equation model: Hamiltonian plus weighted channels.
#[derive(Debug, Clone)]
pub struct LindbladModel {
    h: Operator,
    channels: Vec<(Operator, f64)>,
}

impl LindbladModel {
    pub fn new(h: Operator, channels: Vec<(Operator, f64)>) -> Result<Self> {
        h.require_hermitian(HERMITICITY_TOL)?;
        for (l, rate) in &channels {
            if l.dim() != h.dim() {
                return Err(Error::DimensionMismatch(h.dim(), l.dim()));
            }
            if !rate.is_finite() || *rate < 0.0 {
                return Err(Error::InvalidNoise(format!(
                    "channel rates must be finite and >= 0, got {rate}"
                )));
            }
        }
        Ok(Self { h, channels })
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.h
    }

    pub fn channels(&self) -> &[(Operator, f64)] {
        &self.channels
    }
}

/// Lindblad right-hand side `-i[H,ρ] + Σ_k γ_k (L_k ρ L_k† - ½{L_k†L_k, ρ})`.
/// The output is traceless to rounding.
pub fn lindblad_rhs(model: &LindbladModel, rho: &DensityMatrix) -> Result<Operator> {
    if model.dim() != rho.dim() {
        return Err(Error::DimensionMismatch(model.dim(), rho.dim()));
    }
    let rho_op = rho.as_operator();
    let mut rhs = commutator(&model.h, &rho_op)?.scale(C64::new(0.0, -1.0));
    for (l, rate) in &model.channels {
        if *rate == 0.0 {
            continue;
        }
        let l_dag = l.adjoint();
        let sandwich = &(l * &rho_op) * &l_dag;
        let ldl = &l_dag * l;
        let anti = anticommutator(&ldl, &rho_op)?;
        rhs = &rhs
            + &(&sandwich.scale(C64::new(*rate, 0.0)) + &anti.scale(C64::new(-0.5 * rate, 0.0)));
    }
    Ok(rhs)
}

/// White-noise stochastic-Liouville limit `-i[H,ρ] - γ[R,[R,ρ]]`.
///
/// Algebraically `-γ[R,[R,ρ]] = 2γ(RρR - ½{R²,ρ})`, i.e. a single Lindblad
/// channel `L = R` at rate `2γ`; see the module docs for how `γ` relates to
/// drive intensities.
pub fn white_noise_sle_rhs(
    h: &Operator,
    r: &Operator,
    gamma: f64,
    rho: &DensityMatrix,
) -> Result<Operator> {
    r.require_hermitian(HERMITICITY_TOL)?;
    if h.dim() != r.dim() || h.dim() != rho.dim() {
        return Err(Error::DimensionMismatch(h.dim(), r.dim().max(rho.dim())));
    }
    let rho_op = rho.as_operator();
    let von_neumann = commutator(h, &rho_op)?.scale(C64::new(0.0, -1.0));
    let inner = commutator(r, &rho_op)?;
    let double = commutator(r, &inner)?;
    Ok(&von_neumann + &double.scale(C64::new(-gamma, 0.0)))
}

/// Trajectory-level stochastic Liouville right-hand side
/// `-i[H_eff, ρ] + Σ_k γ_k D[L_k]ρ` for one noise sample frozen into
/// `H_eff = H + Z·R`.
pub fn sle_trajectory_rhs(
    h_eff: &Operator,
    channels: &[(Operator, f64)],
    rho: &DensityMatrix,
) -> Result<Operator> {
    h_eff.require_hermitian(HERMITICITY_TOL)?;
    let model = LindbladModel::new(h_eff.clone(), channels.to_vec())?;
    lindblad_rhs(&model, rho)
}

/// Positivity diagnostics collected by [`rk4_evolve`]; Redfield evolution is
/// not completely positive and may drive eigenvalues slightly negative.
#[derive(Debug, Clone, Default)]
pub struct PositivityReport {
    /// Steps whose minimum eigenvalue dropped below the warning threshold.
    pub violations: usize,
    pub worst_eigenvalue: f64,
    pub worst_time: f64,
}

/// Output of a deterministic evolution: the density series plus the
/// numerical hygiene log.
#[derive(Debug, Clone)]
pub struct MasterEvolution {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    /// Largest entry moved by the per-step symmetrization `(ρ+ρ†)/2`.
    pub max_hermitize_correction: f64,
    /// `Some` when any step dipped below `-1e-6`; never aborts the run.
    pub positivity: Option<PositivityReport>,
}

/// Eigenvalue floor below which a positivity warning is recorded.
pub const POSITIVITY_WARN: f64 = -1e-6;

/// CSV rendering of a density-matrix time series: columns `t`, re/im of
/// each entry row-major, `purity`, `trace`.
pub fn density_series_csv(times: &[f64], states: &[DensityMatrix]) -> String {
    use std::fmt::Write;
    let dim = states.first().map_or(0, DensityMatrix::dim);
    let mut out = String::from("t");
    for i in 0..dim {
        for j in 0..dim {
            let _ = write!(out, ",re_{i}_{j},im_{i}_{j}");
        }
    }
    out.push_str(",purity,trace\n");
    for (t, rho) in times.iter().zip(states) {
        let _ = write!(out, "{t}");
        for i in 0..dim {
            for j in 0..dim {
                let z = rho.entry(i, j);
                let _ = write!(out, ",{},{}", z.re, z.im);
            }
        }
        let _ = writeln!(out, ",{},{}", crate::linops::purity(rho), rho.trace().re);
    }
    out
}

/// Classical RK4 on a (possibly time-dependent) superoperator right-hand
/// side. Hermiticity is enforced by symmetrization each step; trace is
/// preserved by the rhs structure and only monitored here.
pub fn rk4_evolve<F>(
    mut rhs: F,
    rho0: &DensityMatrix,
    dt: f64,
    n_steps: usize,
) -> Result<MasterEvolution>
where
    F: FnMut(f64, &DensityMatrix) -> Result<Operator>,
{
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::InvalidTimeStep(dt));
    }
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    times.push(0.0);
    states.push(rho0.clone());

    let mut rho = rho0.clone();
    let mut max_correction: f64 = 0.0;
    let mut positivity: Option<PositivityReport> = None;

    let shift = |rho: &DensityMatrix, k: &Operator, f: f64| -> Result<DensityMatrix> {
        DensityMatrix::new(rho.matrix() + k.matrix() * C64::new(f, 0.0))
    };

    for step in 0..n_steps {
        let t = step as f64 * dt;
        let k1 = rhs(t, &rho)?;
        let k2 = rhs(t + 0.5 * dt, &shift(&rho, &k1, 0.5 * dt)?)?;
        let k3 = rhs(t + 0.5 * dt, &shift(&rho, &k2, 0.5 * dt)?)?;
        let k4 = rhs(t + dt, &shift(&rho, &k3, dt)?)?;

        let increment = (k1.matrix()
            + k2.matrix() * C64::new(2.0, 0.0)
            + k3.matrix() * C64::new(2.0, 0.0)
            + k4.matrix())
            * C64::new(dt / 6.0, 0.0);
        let mut next = DensityMatrix::new(rho.matrix() + increment)?;
        max_correction = max_correction.max(next.symmetrize());

        let min_eig = next.min_eigenvalue();
        if min_eig < POSITIVITY_WARN {
            let report = positivity.get_or_insert_with(PositivityReport::default);
            report.violations += 1;
            if min_eig < report.worst_eigenvalue {
                report.worst_eigenvalue = min_eig;
                report.worst_time = t + dt;
            }
        }

        rho = next;
        times.push((step + 1) as f64 * dt);
        states.push(rho.clone());
    }

    Ok(MasterEvolution { times, states, max_hermitize_correction: max_correction, positivity })
}

/// Time-convolutionless model driven by an Ornstein–Uhlenbeck covariance.
#[derive(Debug, Clone)]
pub struct RedfieldModel {
    h: Operator,
    r: Operator,
    /// OU parameters `(std, tau_c)` behind the covariance kernel.
    std: f64,
    tau_c: f64,
}

impl RedfieldModel {
    /// Build from an OU noise spec; white noise is rejected — its limit is
    /// handled in closed form by [`white_noise_sle_rhs`].
    pub fn new(h: Operator, r: Operator, noise: &NoiseSpec) -> Result<Self> {
        h.require_hermitian(HERMITICITY_TOL)?;
        r.require_hermitian(HERMITICITY_TOL)?;
        if h.dim() != r.dim() {
            return Err(Error::DimensionMismatch(h.dim(), r.dim()));
        }
        noise.validate()?;
        match *noise {
            NoiseSpec::OrnsteinUhlenbeck { std, tau_c, .. } => Ok(Self { h, r, std, tau_c }),
            NoiseSpec::White { .. } => Err(Error::InvalidNoise(
                "the memory-kernel equation needs an OU covariance; \
                 use white_noise_sle_rhs for the delta form"
                    .into(),
            )),
        }
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

    /// Covariance `C(τ) = std² e^{-|τ|/τ_c}` at lag `τ`.
    pub fn covariance_at(&self, lag: f64) -> f64 {
        self.std * self.std * (-lag.abs() / self.tau_c).exp()
    }
}

/// Integrate the time-local equation
///
/// ```text
/// dρ/dt = -i[H,ρ] - [R, [M(t), ρ]],   M(t) = ∫_0^t C(τ) R_τ dτ
/// ```
///
/// with `R_τ = e^{-iHτ} R e^{iHτ}`, i.e. `(R_τ)_{ab} = R_{ab} e^{-iω_{ab}τ}`
/// in the eigenbasis of `H`. The memory integral uses the trapezoid rule on
/// the step grid (the kernel is a smooth exponential, so the O(dt²) error
/// sits below the RK4 budget); RK4 half-step stages extend the running sum
/// by one partial trapezoid.
pub fn redfield_evolve(
    model: &RedfieldModel,
    rho0: &DensityMatrix,
    dt: f64,
    n_steps: usize,
) -> Result<MasterEvolution> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::InvalidTimeStep(dt));
    }
    if model.dim() != rho0.dim() {
        return Err(Error::DimensionMismatch(model.dim(), rho0.dim()));
    }

    let dim = model.dim();
    let eig = SymmetricEigen::new(model.h.matrix().clone());
    let energies: DVector<f64> = eig.eigenvalues.clone();
    let v = eig.eigenvectors;
    let r_tilde = v.adjoint() * model.r.matrix() * &v;

    // integrand in the eigenbasis: f(τ)_{ab} = C(τ) R̃_{ab} e^{-i(E_a-E_b)τ}
    let integrand = |tau: f64| -> DMatrix<C64> {
        let c = model.covariance_at(tau);
        DMatrix::from_fn(dim, dim, |a, b| {
            r_tilde[(a, b)] * C64::from_polar(c, -(energies[a] - energies[b]) * tau)
        })
    };

    // running trapezoid sum over grid points, advanced lazily as rk4 asks
    // for later times
    let mut grid_k: usize = 0;
    let mut grid_sum = DMatrix::<C64>::zeros(dim, dim);
    let mut f_at_grid = integrand(0.0);

    let h = model.h.clone();
    let r = model.r.clone();

    let rhs = move |t: f64, rho: &DensityMatrix| -> Result<Operator> {
        let k_target = ((t / dt) + 1e-9).floor() as usize;
        while grid_k < k_target {
            let next_t = (grid_k + 1) as f64 * dt;
            let f_next = integrand(next_t);
            grid_sum += (&f_at_grid + &f_next) * C64::new(0.5 * dt, 0.0);
            f_at_grid = f_next;
            grid_k += 1;
        }
        let grid_t = grid_k as f64 * dt;
        let mut m_tilde = grid_sum.clone();
        let partial = t - grid_t;
        if partial > 1e-12 * dt {
            m_tilde += (&f_at_grid + integrand(t)) * C64::new(0.5 * partial, 0.0);
        }
        let m = Operator::new(&v * m_tilde * v.adjoint())?;

        let rho_op = rho.as_operator();
        let von_neumann = commutator(&h, &rho_op)?.scale(C64::new(0.0, -1.0));
        let inner = commutator(&m, &rho_op)?;
        let memory = commutator(&r, &inner)?;
        Ok(&von_neumann + &memory.scale(C64::new(-1.0, 0.0)))
    };

    rk4_evolve(rhs, rho0, dt, n_steps)
}

/// Trajectory-density model: stochastic Hamiltonian `H + Z_t R` plus
/// deterministic extra dissipation channels (measurement and filtering
/// superoperators are out of scope).
#[derive(Debug, Clone)]
pub struct SleModel {
    h: Operator,
    r: Operator,
    noise: NoiseSpec,
    channels: Vec<(Operator, f64)>,
}

impl SleModel {
    pub fn new(
        h: Operator,
        r: Operator,
        noise: NoiseSpec,
        channels: Vec<(Operator, f64)>,
    ) -> Result<Self> {
        h.require_hermitian(HERMITICITY_TOL)?;
        r.require_hermitian(HERMITICITY_TOL)?;
        if h.dim() != r.dim() {
            return Err(Error::DimensionMismatch(h.dim(), r.dim()));
        }
        noise.validate()?;
        for (l, rate) in &channels {
            if l.dim() != h.dim() {
                return Err(Error::DimensionMismatch(h.dim(), l.dim()));
            }
            if !rate.is_finite() || *rate < 0.0 {
                return Err(Error::InvalidNoise(format!(
                    "channel rates must be finite and >= 0, got {rate}"
                )));
            }
        }
        Ok(Self { h, r, noise, channels })
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }
}

/// Propagate one stochastic-Liouville trajectory: unitary conjugation with
/// the sampled noise per step, then (when channels are present) an Euler
/// substep of the deterministic dissipator.
///
/// White noise uses the per-step Stratonovich unitary
/// `exp(-i(H dt + σ R ΔW))`; an OU drive freezes its half-grid midpoint
/// sample into `exp(-i(H + Z_mid R) dt)`.
pub fn run_sle_trajectory(
    model: &SleModel,
    rho0: &DensityMatrix,
    dt: f64,
    n_steps: usize,
    stream: &mut RngStream,
) -> Result<Vec<DensityMatrix>> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::InvalidTimeStep(dt));
    }
    if model.dim() != rho0.dim() {
        return Err(Error::DimensionMismatch(model.dim(), rho0.dim()));
    }

    // per-step Hermitian generators, dt already folded in
    let generators: Vec<Operator> = match model.noise {
        NoiseSpec::White { sigma } => {
            let path = sample_wiener_increments(dt, n_steps, stream)?;
            path.increments
                .iter()
                .map(|&dw| {
                    &model.h.scale(C64::new(dt, 0.0)) + &model.r.scale(C64::new(sigma * dw, 0.0))
                })
                .collect()
        }
        NoiseSpec::OrnsteinUhlenbeck { .. } => {
            let half = sample_ou_path(&model.noise, 0.5 * dt, 2 * n_steps, stream)?;
            (0..n_steps)
                .map(|k| {
                    let z_mid = half[2 * k + 1];
                    (&model.h + &model.r.scale(C64::new(z_mid, 0.0))).scale(C64::new(dt, 0.0))
                })
                .collect()
        }
    };

    let dissipator = |rho: &DensityMatrix| -> Result<Operator> {
        let rho_op = rho.as_operator();
        let mut d = Operator::zeros(model.dim());
        for (l, rate) in &model.channels {
            let l_dag = l.adjoint();
            let sandwich = &(l * &rho_op) * &l_dag;
            let anti = anticommutator(&(&l_dag * l), &rho_op)?;
            d = &d
                + &(&sandwich.scale(C64::new(*rate, 0.0))
                    + &anti.scale(C64::new(-0.5 * rate, 0.0)));
        }
        Ok(d)
    };

    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(rho0.clone());
    let mut rho = rho0.clone();
    for g in &generators {
        let u = expm_generator(g, 1.0)?;
        rho = u.conjugate(&rho)?;
        if !model.channels.is_empty() {
            let d = dissipator(&rho)?;
            rho = DensityMatrix::new(rho.matrix() + d.matrix() * C64::new(dt, 0.0))?;
            rho.symmetrize();
        }
        states.push(rho.clone());
    }
    Ok(states)
}
