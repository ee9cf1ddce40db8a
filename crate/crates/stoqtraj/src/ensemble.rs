//! Parallel Monte Carlo orchestration: run `N` trajectories of any engine,
//! average the densities, and compare the mean against a reference series.
//!
//! Trajectory `i` always draws from the stream `(seed, i)`, and the
//! reduction runs over fixed-size blocks folded in block order — a
//! deterministic two-level tree — so the result is bit-identical for any
//! worker count. Reproducibility beats the microscopic throughput gain of
//! a free-order reduction.
//!
//! Error estimates are computed on observable expectations, not on matrix
//! entries: per time, the sample standard deviation of `Tr(O ρ^(ω))` over
//! trajectories divided by `√N`, maximised over the supplied observables.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ito::{run_ito_trajectory, trajectory_density, ItoModel, ItoScheme};
use crate::linops::{
    purity, trace_distance, DensityMatrix, Operator, StateVector, HERMITICITY_TOL,
};
use crate::master::{run_sle_trajectory, SleModel};
use crate::noise::RngStream;
use crate::rode::{run_rode_trajectory, RodeModel, RodeScheme};
use crate::strat::{run_strat_trajectory, StratModel};

/// Trajectories per reduction block. Fixed: it shapes the deterministic
/// reduction tree, so changing it changes low-order bits of results.
const BLOCK: usize = 64;

/// An engine plus its initial state, ready to produce density trajectories.
#[derive(Debug, Clone)]
pub enum Engine {
    ItoEm { model: ItoModel, psi0: StateVector },
    ItoMilstein { model: ItoModel, psi0: StateVector },
    Strat { model: StratModel, psi0: StateVector },
    RodeMidpoint { model: RodeModel, psi0: StateVector },
    RodeHeun { model: RodeModel, psi0: StateVector },
    Sle { model: SleModel, rho0: DensityMatrix },
}

impl Engine {
    pub fn dim(&self) -> usize {
        match self {
            Engine::ItoEm { model, .. } | Engine::ItoMilstein { model, .. } => model.dim(),
            Engine::Strat { model, .. } => model.dim(),
            Engine::RodeMidpoint { model, .. } | Engine::RodeHeun { model, .. } => model.dim(),
            Engine::Sle { model, .. } => model.dim(),
        }
    }

    /// One trajectory's density series on the shared grid.
    pub fn run_trajectory(
        &self,
        dt: f64,
        n_steps: usize,
        stream: &mut RngStream,
    ) -> Result<Vec<DensityMatrix>> {
        match self {
            Engine::ItoEm { model, psi0 } => {
                let states =
                    run_ito_trajectory(model, psi0, dt, n_steps, ItoScheme::EulerMaruyama, stream)?;
                Ok(trajectory_density(&states))
            }
            Engine::ItoMilstein { model, psi0 } => {
                let states =
                    run_ito_trajectory(model, psi0, dt, n_steps, ItoScheme::Milstein, stream)?;
                Ok(trajectory_density(&states))
            }
            Engine::Strat { model, psi0 } => {
                let states = run_strat_trajectory(model, psi0, dt, n_steps, stream)?;
                Ok(trajectory_density(&states))
            }
            Engine::RodeMidpoint { model, psi0 } => {
                let states = run_rode_trajectory(
                    model,
                    psi0,
                    dt,
                    n_steps,
                    stream,
                    RodeScheme::MidpointUnitary,
                )?;
                Ok(trajectory_density(&states))
            }
            Engine::RodeHeun { model, psi0 } => {
                let states =
                    run_rode_trajectory(model, psi0, dt, n_steps, stream, RodeScheme::Heun)?;
                Ok(trajectory_density(&states))
            }
            Engine::Sle { model, rho0 } => run_sle_trajectory(model, rho0, dt, n_steps, stream),
        }
    }
}

/// Per-observable mean and standard error over the ensemble, per time point.
#[derive(Debug, Clone)]
pub struct ObservableSeries {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Ensemble average and statistics over `N` trajectories.
#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub times: Vec<f64>,
    /// Symmetrized mean density per time point.
    pub mean_rho: Vec<DensityMatrix>,
    /// Trace-distance-scale error estimate per time: the largest observable
    /// standard error (zero when no observables were supplied).
    pub stderr: Vec<f64>,
    /// Purity of the mean density per time point.
    pub purity: Vec<f64>,
    pub observables: BTreeMap<String, ObservableSeries>,
    pub n_requested: usize,
    /// Trajectories dropped after hitting the blow-up guard (at most 1% of
    /// `n_requested`, or the whole run aborts).
    pub n_blowups: usize,
}

impl EnsembleResult {
    /// CSV rendering: `t`, one column per observable mean, `purity`, one
    /// `stderr_<name>` column per observable, and optionally the full
    /// mean-density entries (row-major re/im pairs). Comma separated,
    /// `.` decimal, LF endings; floats in shortest round-trip form.
    pub fn to_csv(&self, include_rho: bool) -> String {
        use std::fmt::Write;
        let dim = self.mean_rho[0].dim();
        let mut out = String::new();
        let _ = writeln!(out, "# n_requested={} n_blowups={}", self.n_requested, self.n_blowups);
        out.push('t');
        for name in self.observables.keys() {
            let _ = write!(out, ",{name}");
        }
        out.push_str(",purity");
        for name in self.observables.keys() {
            let _ = write!(out, ",stderr_{name}");
        }
        if include_rho {
            for i in 0..dim {
                for j in 0..dim {
                    let _ = write!(out, ",re_{i}_{j},im_{i}_{j}");
                }
            }
        }
        out.push('\n');
        for (k, t) in self.times.iter().enumerate() {
            let _ = write!(out, "{t}");
            for series in self.observables.values() {
                let _ = write!(out, ",{}", series.mean[k]);
            }
            let _ = write!(out, ",{}", self.purity[k]);
            for series in self.observables.values() {
                let _ = write!(out, ",{}", series.stderr[k]);
            }
            if include_rho {
                let rho = &self.mean_rho[k];
                for i in 0..dim {
                    for j in 0..dim {
                        let z = rho.entry(i, j);
                        let _ = write!(out, ",{},{}", z.re, z.im);
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

struct BlockPartial {
    rho_sum: Vec<DMatrix<C64>>,
    obs_sum: Vec<Vec<f64>>,
    obs_sq_sum: Vec<Vec<f64>>,
    blowups: usize,
}

/// Run `n_traj` trajectories of `engine` and average per Monte Carlo.
///
/// Deterministic for a fixed `(engine, n_traj, dt, n_steps, seed)` tuple
/// regardless of thread count. Aborts with [`Error::EnsembleAbort`] when
/// more than 1% of trajectories blow up; engine errors other than blow-ups
/// abort immediately.
pub fn run_ensemble(
    engine: &Engine,
    n_traj: usize,
    dt: f64,
    n_steps: usize,
    seed: u64,
    observables: &[(String, Operator)],
) -> Result<EnsembleResult> {
    if n_traj == 0 {
        return Err(Error::EnsembleAbort { failed: 0, total: 0 });
    }
    let dim = engine.dim();
    for (name, op) in observables {
        op.require_hermitian(HERMITICITY_TOL)?;
        if op.dim() != dim {
            return Err(Error::DimensionMismatch(dim, op.dim()));
        }
        let _ = name;
    }

    let n_times = n_steps + 1;
    let n_obs = observables.len();
    let n_blocks = n_traj.div_ceil(BLOCK);

    let partials: Vec<Result<BlockPartial>> = (0..n_blocks)
        .into_par_iter()
        .map(|block| {
            let lo = block * BLOCK;
            let hi = ((block + 1) * BLOCK).min(n_traj);
            let mut partial = BlockPartial {
                rho_sum: vec![DMatrix::zeros(dim, dim); n_times],
                obs_sum: vec![vec![0.0; n_times]; n_obs],
                obs_sq_sum: vec![vec![0.0; n_times]; n_obs],
                blowups: 0,
            };
            for idx in lo..hi {
                let mut stream = RngStream::new(seed, idx as u64);
                let series = match engine.run_trajectory(dt, n_steps, &mut stream) {
                    Ok(series) => series,
                    Err(Error::NumericalBlowup { .. }) => {
                        partial.blowups += 1;
                        continue;
                    }
                    Err(other) => return Err(other),
                };
                if series.len() != n_times {
                    return Err(Error::GridMismatch(series.len(), n_times));
                }
                for (k, rho) in series.iter().enumerate() {
                    partial.rho_sum[k] += rho.matrix();
                    for (o, (_, op)) in observables.iter().enumerate() {
                        let x = rho.expectation(op)?.re;
                        partial.obs_sum[o][k] += x;
                        partial.obs_sq_sum[o][k] += x * x;
                    }
                }
            }
            Ok(partial)
        })
        .collect();

    // fold in block order: deterministic shape
    let mut rho_sum = vec![DMatrix::<C64>::zeros(dim, dim); n_times];
    let mut obs_sum = vec![vec![0.0; n_times]; n_obs];
    let mut obs_sq_sum = vec![vec![0.0; n_times]; n_obs];
    let mut blowups = 0usize;
    for partial in partials {
        let partial = partial?;
        blowups += partial.blowups;
        for (acc, p) in rho_sum.iter_mut().zip(&partial.rho_sum) {
            *acc += p;
        }
        for o in 0..n_obs {
            for k in 0..n_times {
                obs_sum[o][k] += partial.obs_sum[o][k];
                obs_sq_sum[o][k] += partial.obs_sq_sum[o][k];
            }
        }
    }

    if blowups * 100 > n_traj || blowups == n_traj {
        return Err(Error::EnsembleAbort { failed: blowups, total: n_traj });
    }
    let m = (n_traj - blowups) as f64;

    let times: Vec<f64> = (0..n_times).map(|k| k as f64 * dt).collect();
    let mut mean_rho = Vec::with_capacity(n_times);
    for sum in &rho_sum {
        let mut rho = DensityMatrix::new(sum / C64::new(m, 0.0))?;
        rho.symmetrize();
        mean_rho.push(rho);
    }
    let purity_series: Vec<f64> = mean_rho.iter().map(purity).collect();

    let mut observable_series = BTreeMap::new();
    let mut stderr = vec![0.0f64; n_times];
    for (o, (name, _)) in observables.iter().enumerate() {
        let mut mean = Vec::with_capacity(n_times);
        let mut se = Vec::with_capacity(n_times);
        for k in 0..n_times {
            let mu = obs_sum[o][k] / m;
            let var =
                if m > 1.0 { ((obs_sq_sum[o][k] - m * mu * mu) / (m - 1.0)).max(0.0) } else { 0.0 };
            let s = (var / m).sqrt();
            stderr[k] = stderr[k].max(s);
            mean.push(mu);
            se.push(s);
        }
        observable_series.insert(name.clone(), ObservableSeries { mean, stderr: se });
    }

    Ok(EnsembleResult {
        times,
        mean_rho,
        stderr,
        purity: purity_series,
        observables: observable_series,
        n_requested: n_traj,
        n_blowups: blowups,
    })
}

/// Pass/fail rule for [`compare`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ToleranceRule {
    /// Every per-time distance must stay below a fixed bound.
    Abs(f64),
    /// Per-time bound `max(k · stderr_t, floor)`.
    Stderr { k: f64, floor: f64 },
}

impl ToleranceRule {
    fn bound(&self, stderr: f64) -> f64 {
        match *self {
            ToleranceRule::Abs(eps) => eps,
            ToleranceRule::Stderr { k, floor } => (k * stderr).max(floor),
        }
    }
}

/// Trace-distance comparison between an ensemble mean and a reference
/// density series on the same grid.
#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub max_trace_distance: f64,
    pub time_of_max: f64,
    pub per_time_distance: Vec<f64>,
    pub per_time_stderr: Vec<f64>,
    pub pass: bool,
    pub rule: ToleranceRule,
}

impl ComparisonReport {
    /// Multi-line text form, the structure the CLI writes to disk.
    pub fn render(&self) -> String {
        let rule = match self.rule {
            ToleranceRule::Abs(eps) => format!("abs {eps:.6e}"),
            ToleranceRule::Stderr { k, floor } => format!("stderr k={k} floor={floor:.6e}"),
        };
        format!(
            "result: {}\nrule: {}\nmax_trace_distance: {:.6e}\ntime_of_max: {:.6}\npoints: {}\n",
            if self.pass { "PASS" } else { "FAIL" },
            rule,
            self.max_trace_distance,
            self.time_of_max,
            self.per_time_distance.len(),
        )
    }
}

/// Per-time trace distances of `result.mean_rho` against `reference`;
/// passes iff every distance satisfies the rule.
pub fn compare(
    result: &EnsembleResult,
    reference: &[DensityMatrix],
    rule: ToleranceRule,
) -> Result<ComparisonReport> {
    if result.mean_rho.len() != reference.len() {
        return Err(Error::GridMismatch(result.mean_rho.len(), reference.len()));
    }
    let mut per_time = Vec::with_capacity(reference.len());
    let mut max_d = 0.0;
    let mut time_of_max = 0.0;
    let mut pass = true;
    for (k, (rho, reference_rho)) in result.mean_rho.iter().zip(reference).enumerate() {
        let d = trace_distance(rho, reference_rho)?;
        if d > max_d {
            max_d = d;
            time_of_max = result.times[k];
        }
        if d > rule.bound(result.stderr[k]) {
            pass = false;
        }
        per_time.push(d);
    }
    Ok(ComparisonReport {
        max_trace_distance: max_d,
        time_of_max,
        per_time_distance: per_time,
        per_time_stderr: result.stderr.clone(),
        pass,
        rule,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::{expm_generator, pauli};

    fn plus_state() -> StateVector {
        let a = 1.0 / 2.0f64.sqrt();
        StateVector::from_amplitudes(vec![C64::new(a, 0.0), C64::new(a, 0.0)]).unwrap()
    }

    fn qubit_observables() -> Vec<(String, Operator)> {
        vec![
            ("sx".into(), pauli::sigma_x()),
            ("sy".into(), pauli::sigma_y()),
            ("sz".into(), pauli::sigma_z()),
        ]
    }

    fn dephasing_engine(sigma_sq: f64) -> Engine {
        let model = StratModel::new(pauli::sigma_z(), pauli::sigma_z(), sigma_sq.sqrt()).unwrap();
        Engine::Strat { model, psi0: plus_state() }
    }

    #[test]
    fn single_trajectory_ensemble_is_that_trajectory() {
        let engine = dephasing_engine(0.5);
        let result = run_ensemble(&engine, 1, 0.01, 50, 9, &qubit_observables()).unwrap();
        let mut stream = RngStream::new(9, 0);
        let direct = engine.run_trajectory(0.01, 50, &mut stream).unwrap();
        for (a, b) in result.mean_rho.iter().zip(&direct) {
            assert!(trace_distance(a, b).unwrap() < 1e-14);
        }
        assert_eq!(result.n_blowups, 0);
    }

    #[test]
    fn noiseless_ensemble_is_pure_unitary_evolution() {
        let engine = dephasing_engine(0.0);
        let n_steps = 40;
        let dt = 0.025;
        let result = run_ensemble(&engine, 16, dt, n_steps, 1, &qubit_observables()).unwrap();
        for p in &result.purity {
            assert!((p - 1.0).abs() < 1e-12, "purity {p}");
        }
        let reference: Vec<DensityMatrix> = (0..=n_steps)
            .map(|k| {
                let u = expm_generator(&pauli::sigma_z(), k as f64 * dt).unwrap();
                u.conjugate(&DensityMatrix::from_pure(&plus_state())).unwrap()
            })
            .collect();
        let report = compare(&result, &reference, ToleranceRule::Abs(1e-8)).unwrap();
        assert!(report.pass, "max distance {}", report.max_trace_distance);
    }

    #[test]
    fn dephasing_mean_tracks_the_analytic_envelope() {
        let sigma_sq = 0.5;
        let n_steps = 500;
        let dt = 2e-3;
        let n_traj = 1500;
        let result = run_ensemble(
            &dephasing_engine(sigma_sq),
            n_traj,
            dt,
            n_steps,
            21,
            &qubit_observables(),
        )
        .unwrap();
        // |ρ01(t)| = ½ e^{-2σ²t}, phase e^{-2iεt}
        let mut worst = 0.0f64;
        for (k, rho) in result.mean_rho.iter().enumerate() {
            let t = k as f64 * dt;
            let expected = 0.5 * (-2.0 * sigma_sq * t).exp();
            let dev = (rho.entry(0, 1).norm() - expected).abs();
            worst = worst.max(dev - 3.0 * result.stderr[k]);
        }
        assert!(worst <= 0.0, "worst 3σ excess {worst}");
    }

    #[test]
    fn comparison_against_itself_passes_with_zero_distance() {
        let result =
            run_ensemble(&dephasing_engine(0.5), 64, 0.01, 20, 5, &qubit_observables()).unwrap();
        let report = compare(&result, &result.mean_rho, ToleranceRule::Abs(1e-15)).unwrap();
        assert!(report.pass);
        assert_eq!(report.max_trace_distance, 0.0);
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let result = run_ensemble(&dephasing_engine(0.5), 8, 0.01, 20, 5, &[]).unwrap();
        let short: Vec<DensityMatrix> = result.mean_rho[..10].to_vec();
        assert!(matches!(
            compare(&result, &short, ToleranceRule::Abs(1.0)),
            Err(Error::GridMismatch(21, 10))
        ));
    }

    #[test]
    fn results_are_identical_across_thread_counts() {
        let run_with = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                run_ensemble(&dephasing_engine(0.4), 300, 0.01, 30, 77, &qubit_observables())
                    .unwrap()
            })
        };
        let a = run_with(1);
        let b = run_with(3);
        for (ra, rb) in a.mean_rho.iter().zip(&b.mean_rho) {
            assert_eq!(ra.matrix(), rb.matrix());
        }
        assert_eq!(a.stderr, b.stderr);
        for (name, series) in &a.observables {
            assert_eq!(series.mean, b.observables[name].mean);
        }
    }

    #[test]
    fn ensemble_purity_decays_under_noise() {
        // σ²T = 1.0 ≳ 0.5: decoherence must be resolved beyond error bars
        let result =
            run_ensemble(&dephasing_engine(0.5), 2000, 0.01, 200, 13, &qubit_observables())
                .unwrap();
        let final_purity = *result.purity.last().unwrap();
        let final_stderr = *result.stderr.last().unwrap();
        assert!(final_purity <= 1.0);
        assert!(final_purity < 1.0 - 3.0 * final_stderr, "purity {final_purity}");
    }

    #[test]
    fn sqrt_n_convergence_toward_the_dephasing_oracle() {
        // Itō dephasing: B = iσz. Fitted slope of log(max distance) against
        // log N should sit near -1/2.
        let sigma_sq = 0.5f64;
        let model = ItoModel::new(
            pauli::sigma_z(),
            pauli::sigma_z().scale(C64::new(0.0, 1.0)),
            sigma_sq.sqrt(),
        )
        .unwrap();
        let engine = Engine::ItoEm { model, psi0: plus_state() };
        let dt = 1e-3;
        let n_steps = 1000;

        let reference: Vec<DensityMatrix> = (0..=n_steps)
            .map(|k| {
                let t = k as f64 * dt;
                let coh = C64::from_polar(0.5 * (-2.0 * sigma_sq * t).exp(), -2.0 * t);
                DensityMatrix::new(DMatrix::from_row_slice(
                    2,
                    2,
                    &[C64::new(0.5, 0.0), coh, coh.conj(), C64::new(0.5, 0.0)],
                ))
                .unwrap()
            })
            .collect();

        let mut log_n = Vec::new();
        let mut log_d = Vec::new();
        for n_traj in [100usize, 1000, 10_000] {
            let result =
                run_ensemble(&engine, n_traj, dt, n_steps, 4242, &qubit_observables()).unwrap();
            let report = compare(&result, &reference, ToleranceRule::Abs(1.0)).unwrap();
            log_n.push((n_traj as f64).ln());
            log_d.push(report.max_trace_distance.ln());
        }
        let mean_x = log_n.iter().sum::<f64>() / 3.0;
        let mean_y = log_d.iter().sum::<f64>() / 3.0;
        let slope = log_n.iter().zip(&log_d).map(|(x, y)| (x - mean_x) * (y - mean_y)).sum::<f64>()
            / log_n.iter().map(|x| (x - mean_x).powi(2)).sum::<f64>();
        assert!((-0.7..=-0.3).contains(&slope), "Monte Carlo convergence slope {slope}");
    }

    #[test]
    fn widespread_blowups_abort_the_run() {
        // σ²||B||² dt ≫ 1: every trajectory trips the guard
        let model =
            ItoModel::new(Operator::zeros(2), pauli::sigma_z().scale(C64::new(0.0, 1.0)), 50.0)
                .unwrap();
        let engine = Engine::ItoEm { model, psi0: plus_state() };
        match run_ensemble(&engine, 100, 0.5, 100, 0, &[]) {
            Err(Error::EnsembleAbort { failed, total }) => {
                assert_eq!(total, 100);
                assert!(failed > 1);
            }
            other => panic!("expected abort, got {other:?}"),
        }
    }
}
