//! Mode dispatch and file outputs.
//!
//! Every file starts with `# config_sha256=<hex>` so results stay tied to
//! the exact configuration that produced them. CSV files are
//! comma-separated with a `.` decimal point, a header row and LF line
//! endings; floats print in Rust's shortest round-trip form.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64 as C64;

use stoqtraj::circuit::{emit_trajectory_circuit, render_gate_file};
use stoqtraj::ensemble::{
    compare, run_ensemble, ComparisonReport, Engine, EnsembleResult, ToleranceRule,
};
use stoqtraj::ito::{run_ito_on_path, run_ito_trajectory, trajectory_density, ItoModel, ItoScheme};
use stoqtraj::linops::{DensityMatrix, Operator, StateVector};
use stoqtraj::master::{
    density_series_csv, gamma_from_white_intensity, lindblad_rhs, redfield_evolve, rk4_evolve,
    run_sle_trajectory, white_noise_sle_rhs, LindbladModel, RedfieldModel, SleModel,
};
use stoqtraj::noise::{refine_wiener_path, sample_ou_path, sample_wiener_increments, RngStream};
use stoqtraj::rode::{run_rode_on_half_grid, run_rode_trajectory, RodeModel, RodeScheme};
use stoqtraj::strat::{run_strat_trajectory, StratModel};

use crate::config::{
    circuit_parameters, parse_matrix, parse_state, ConfigError, EngineKind, Mode, NoiseConfig,
    OracleKind, RunConfig, ToleranceConfig,
};

/// A run failure: either a config-level problem (exit 2) or a numerical /
/// tolerance one (exit 1), carrying the machine-readable code.
#[derive(Debug)]
pub struct RunError {
    pub exit: i32,
    pub code: String,
    pub message: String,
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError { exit: 2, code: e.code.to_string(), message: e.message }
    }
}

impl From<stoqtraj::Error> for RunError {
    fn from(e: stoqtraj::Error) -> Self {
        RunError { exit: 1, code: e.code().to_string(), message: e.to_string() }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError { exit: 1, code: "IoError".to_string(), message: e.to_string() }
    }
}

/// Execute a validated config, writing artifacts under `out_dir`.
/// Returns the process exit code (0 = pass).
pub fn execute(config: &RunConfig, out_dir: &Path, quiet: bool) -> Result<i32, RunError> {
    fs::create_dir_all(out_dir)?;
    let hash = config.hash();
    let say = |line: &str| {
        if !quiet {
            println!("{line}");
        }
    };

    match config.mode {
        Mode::Trajectory => {
            run_trajectory_mode(config, out_dir, &hash)?;
            say("trajectory written");
            Ok(0)
        }
        Mode::Ensemble => {
            let result = run_ensemble_mode(config)?;
            let path = out_dir.join("ensemble.csv");
            fs::write(&path, render_ensemble_csv(config, &result, &hash))?;
            say(&format!("ensemble written to {}", path.display()));
            Ok(0)
        }
        Mode::Master => {
            let (times, states) = run_oracle(config)?;
            let path = out_dir.join("oracle.csv");
            fs::write(&path, render_density_csv(&times, &states, &hash))?;
            say(&format!("oracle written to {}", path.display()));
            Ok(0)
        }
        Mode::Compare => {
            let result = run_ensemble_mode(config)?;
            let (_, reference) = run_oracle(config)?;
            let rule = tolerance_rule(config.tolerance);
            let report = compare(&result, &reference, rule)?;
            fs::write(out_dir.join("compare.txt"), report_text(&report, &hash))?;
            fs::write(
                out_dir.join("distances.csv"),
                render_distances_csv(&result, &report, &hash),
            )?;
            say(&format!(
                "compare: {} (max distance {:.6e} at t = {})",
                if report.pass { "PASS" } else { "FAIL" },
                report.max_trace_distance,
                report.time_of_max
            ));
            Ok(if report.pass { 0 } else { 1 })
        }
        Mode::EmitCircuit => {
            let n_files = emit_circuits(config, out_dir, &hash)?;
            say(&format!("{n_files} gate files written"));
            Ok(0)
        }
        Mode::Convergence => {
            let text = run_convergence(config, out_dir, &hash)?;
            say(&text);
            Ok(0)
        }
    }
}

fn tolerance_rule(t: ToleranceConfig) -> ToleranceRule {
    match t {
        ToleranceConfig::Abs { eps } => ToleranceRule::Abs(eps),
        ToleranceConfig::Stderr { k, floor } => ToleranceRule::Stderr { k, floor },
    }
}

fn initial_state(config: &RunConfig) -> Result<StateVector, ConfigError> {
    match &config.system.psi0 {
        Some(amplitudes) => parse_state(amplitudes, config.system.dim),
        None => Ok(StateVector::basis(config.system.dim, 0)),
    }
}

fn hamiltonian(config: &RunConfig) -> Result<Operator, ConfigError> {
    parse_matrix(&config.system.h, config.system.dim, "system.h")
}

fn coupling_r(config: &RunConfig) -> Result<Operator, ConfigError> {
    let literal = config.system.r.as_ref().expect("validated");
    parse_matrix(literal, config.system.dim, "system.r")
}

fn ito_model(config: &RunConfig) -> Result<ItoModel, RunError> {
    let h = hamiltonian(config)?;
    let sigma = config.noise.sigma().expect("validated: ito is white-noise only");
    let b = if config.system.b_is_ir {
        coupling_r(config)?.scale(C64::new(0.0, 1.0))
    } else {
        parse_matrix(config.system.b.as_ref().expect("validated"), config.system.dim, "system.b")?
    };
    Ok(ItoModel::new(h, b, sigma)?)
}

/// Build the engine described by the config.
pub fn build_engine(config: &RunConfig) -> Result<Engine, RunError> {
    let psi0 = initial_state(config)?;
    match config.integrator.engine {
        EngineKind::ItoEm => Ok(Engine::ItoEm { model: ito_model(config)?, psi0 }),
        EngineKind::ItoMilstein => Ok(Engine::ItoMilstein { model: ito_model(config)?, psi0 }),
        EngineKind::Strat => {
            let sigma = config.noise.sigma().expect("validated: strat is white-noise only");
            let model = StratModel::new(hamiltonian(config)?, coupling_r(config)?, sigma)?;
            Ok(Engine::Strat { model, psi0 })
        }
        EngineKind::RodeMidpoint | EngineKind::RodeHeun => {
            let model =
                RodeModel::new(hamiltonian(config)?, coupling_r(config)?, config.noise.to_spec())?;
            if config.integrator.engine == EngineKind::RodeMidpoint {
                Ok(Engine::RodeMidpoint { model, psi0 })
            } else {
                Ok(Engine::RodeHeun { model, psi0 })
            }
        }
        EngineKind::Sle => {
            let model = SleModel::new(
                hamiltonian(config)?,
                coupling_r(config)?,
                config.noise.to_spec(),
                vec![],
            )?;
            Ok(Engine::Sle { model, rho0: DensityMatrix::from_pure(&psi0) })
        }
    }
}

fn observables(config: &RunConfig) -> Result<Vec<(String, Operator)>, RunError> {
    config
        .outputs
        .observables
        .iter()
        .map(|(name, literal)| Ok((name.clone(), parse_matrix(literal, config.system.dim, name)?)))
        .collect()
}

fn run_ensemble_mode(config: &RunConfig) -> Result<EnsembleResult, RunError> {
    let engine = build_engine(config)?;
    let obs = observables(config)?;
    Ok(run_ensemble(
        &engine,
        config.ensemble.n,
        config.integrator.dt,
        config.integrator.n_steps,
        config.ensemble.seed,
        &obs,
    )?)
}

/// Deterministic oracle series on the run's time grid.
pub fn run_oracle(config: &RunConfig) -> Result<(Vec<f64>, Vec<DensityMatrix>), RunError> {
    let dt = config.integrator.dt;
    let n_steps = config.integrator.n_steps;
    let rho0 = DensityMatrix::from_pure(&initial_state(config)?);
    let h = hamiltonian(config)?;

    let evolution = match config.oracle {
        OracleKind::None => {
            return Err(ConfigError {
                code: "ValidationError",
                message: "this mode needs an oracle".into(),
            }
            .into())
        }
        OracleKind::Lindblad => {
            let sigma = config.noise.sigma().expect("validated: lindblad oracle is white-noise");
            // the channel is the engine's coupling: B for ito, R otherwise
            // (L and iL generate the same dissipator)
            let l = match config.integrator.engine {
                EngineKind::ItoEm | EngineKind::ItoMilstein if !config.system.b_is_ir => {
                    parse_matrix(
                        config.system.b.as_ref().expect("validated"),
                        config.system.dim,
                        "system.b",
                    )?
                }
                _ => coupling_r(config)?,
            };
            let model = LindbladModel::new(h, vec![(l, sigma * sigma)])?;
            rk4_evolve(|_, rho| lindblad_rhs(&model, rho), &rho0, dt, n_steps)?
        }
        OracleKind::WhiteSle => {
            let sigma = config.noise.sigma().expect("validated: white-sle oracle is white-noise");
            let r = coupling_r(config)?;
            let gamma = gamma_from_white_intensity(sigma);
            rk4_evolve(|_, rho| white_noise_sle_rhs(&h, &r, gamma, rho), &rho0, dt, n_steps)?
        }
        OracleKind::Redfield => {
            let model = RedfieldModel::new(h, coupling_r(config)?, &config.noise.to_spec())?;
            redfield_evolve(&model, &rho0, dt, n_steps)?
        }
    };
    Ok((evolution.times, evolution.states))
}

fn run_trajectory_mode(config: &RunConfig, out_dir: &Path, hash: &str) -> Result<(), RunError> {
    let dt = config.integrator.dt;
    let n_steps = config.integrator.n_steps;
    let seed = config.ensemble.seed;
    let psi0 = initial_state(config)?;
    let times: Vec<f64> = (0..=n_steps).map(|k| k as f64 * dt).collect();

    if config.outputs.dump_wiener {
        if let NoiseConfig::White { .. } = config.noise {
            // the engines draw their increments first, so a fresh stream
            // reproduces exactly the path the trajectory consumed
            let path = sample_wiener_increments(dt, n_steps, &mut RngStream::new(seed, 0))?;
            let mut buf = Vec::new();
            path.write_binary(&mut buf, seed, 0).map_err(RunError::from)?;
            fs::write(out_dir.join("wiener_traj0.bin"), buf)?;
        }
    }

    let engine = config.integrator.engine;
    match engine {
        EngineKind::Sle => {
            let model = SleModel::new(
                hamiltonian(config)?,
                coupling_r(config)?,
                config.noise.to_spec(),
                vec![],
            )?;
            let states = run_sle_trajectory(
                &model,
                &DensityMatrix::from_pure(&psi0),
                dt,
                n_steps,
                &mut RngStream::new(seed, 0),
            )?;
            fs::write(out_dir.join("trajectory.csv"), render_density_csv(&times, &states, hash))?;
        }
        _ => {
            let states: Vec<StateVector> = match engine {
                EngineKind::ItoEm | EngineKind::ItoMilstein => {
                    let scheme = if engine == EngineKind::ItoEm {
                        ItoScheme::EulerMaruyama
                    } else {
                        ItoScheme::Milstein
                    };
                    run_ito_trajectory(
                        &ito_model(config)?,
                        &psi0,
                        dt,
                        n_steps,
                        scheme,
                        &mut RngStream::new(seed, 0),
                    )?
                }
                EngineKind::Strat => {
                    let sigma = config.noise.sigma().expect("validated");
                    let model = StratModel::new(hamiltonian(config)?, coupling_r(config)?, sigma)?;
                    run_strat_trajectory(&model, &psi0, dt, n_steps, &mut RngStream::new(seed, 0))?
                }
                EngineKind::RodeMidpoint | EngineKind::RodeHeun => {
                    let model = RodeModel::new(
                        hamiltonian(config)?,
                        coupling_r(config)?,
                        config.noise.to_spec(),
                    )?;
                    let scheme = if engine == EngineKind::RodeMidpoint {
                        RodeScheme::MidpointUnitary
                    } else {
                        RodeScheme::Heun
                    };
                    run_rode_trajectory(
                        &model,
                        &psi0,
                        dt,
                        n_steps,
                        &mut RngStream::new(seed, 0),
                        scheme,
                    )?
                }
                EngineKind::Sle => unreachable!(),
            };
            fs::write(out_dir.join("trajectory.csv"), render_state_csv(&times, &states, hash))?;
            let densities = trajectory_density(&states);
            fs::write(
                out_dir.join("trajectory_density.csv"),
                render_density_csv(&times, &densities, hash),
            )?;
        }
    }
    Ok(())
}

fn emit_circuits(config: &RunConfig, out_dir: &Path, hash: &str) -> Result<usize, RunError> {
    let (eps, omega, sigma) = circuit_parameters(config)?;
    let dt = config.integrator.dt;
    let n_steps = config.integrator.n_steps;
    let seed = config.ensemble.seed;
    for index in 0..config.ensemble.n {
        let seq = emit_trajectory_circuit(
            eps,
            omega,
            sigma,
            dt,
            n_steps,
            &mut RngStream::new(seed, index as u64),
        )?;
        // hash goes after the version header so the file stays parseable
        let rendered = render_gate_file(&seq);
        let (version, rest) = rendered.split_once('\n').expect("non-empty rendering");
        let text = format!("{version}\n# config_sha256={hash}\n{rest}");
        fs::write(out_dir.join(format!("circuit_{index:06}.gates")), text)?;
    }
    Ok(config.ensemble.n)
}

/// Strong-order (ito) or halving-factor (rode-midpoint) measurement on the
/// configured model; reports slopes/factors and writes the error table.
fn run_convergence(config: &RunConfig, out_dir: &Path, hash: &str) -> Result<String, RunError> {
    let psi0 = initial_state(config)?;
    let base_dt = config.integrator.dt;
    let seed = config.ensemble.seed;
    let n_paths: u64 = 100;
    let t_final = base_dt * config.integrator.n_steps as f64;

    let mut csv = format!("# config_sha256={hash}\ndt,mean_endpoint_error\n");

    let summary = match config.integrator.engine {
        EngineKind::ItoEm | EngineKind::ItoMilstein => {
            let model = ito_model(config)?;
            let scheme = if config.integrator.engine == EngineKind::ItoEm {
                ItoScheme::EulerMaruyama
            } else {
                ItoScheme::Milstein
            };
            let dts: Vec<f64> = (0..4).map(|k| base_dt / 2f64.powi(k)).collect();
            let mut log_dt = Vec::new();
            let mut log_err = Vec::new();
            for &dt in &dts {
                let n = (t_final / dt).round() as usize;
                let mut total = 0.0;
                for p in 0..n_paths {
                    let coarse = sample_wiener_increments(dt, n, &mut RngStream::new(seed, p))?;
                    let fine = refine_wiener_path(&coarse, 16, &mut RngStream::new(seed + 1, p));
                    let a = run_ito_on_path(&model, &psi0, dt, &coarse.increments, scheme)?
                        .pop()
                        .expect("nonempty");
                    let b = run_ito_on_path(&model, &psi0, dt / 16.0, &fine.increments, scheme)?
                        .pop()
                        .expect("nonempty");
                    total += a.add_scaled(&b, C64::new(-1.0, 0.0)).norm();
                }
                let mean = total / n_paths as f64;
                let _ = writeln!(csv, "{dt},{mean}");
                log_dt.push(dt.ln());
                log_err.push(mean.ln());
            }
            let slope = least_squares_slope(&log_dt, &log_err);
            format!("scheme: {scheme:?}\nstrong_order_slope: {slope:.4}\n")
        }
        EngineKind::RodeMidpoint => {
            let model =
                RodeModel::new(hamiltonian(config)?, coupling_r(config)?, config.noise.to_spec())?;
            let n = config.integrator.n_steps;
            let mut err_coarse = 0.0;
            let mut err_half = 0.0;
            for p in 0..n_paths {
                let z16 = sample_ou_path(
                    &config.noise.to_spec(),
                    base_dt / 16.0,
                    16 * n,
                    &mut RngStream::new(seed, p),
                )?;
                let pick =
                    |stride: usize| -> Vec<f64> { z16.iter().copied().step_by(stride).collect() };
                let reference = run_rode_on_half_grid(
                    &model,
                    &psi0,
                    base_dt / 8.0,
                    &z16,
                    RodeScheme::MidpointUnitary,
                )?;
                let coarse = run_rode_on_half_grid(
                    &model,
                    &psi0,
                    base_dt,
                    &pick(8),
                    RodeScheme::MidpointUnitary,
                )?;
                let half = run_rode_on_half_grid(
                    &model,
                    &psi0,
                    base_dt / 2.0,
                    &pick(4),
                    RodeScheme::MidpointUnitary,
                )?;
                let rf = reference.last().expect("nonempty");
                err_coarse += coarse.last().unwrap().add_scaled(rf, C64::new(-1.0, 0.0)).norm();
                err_half += half.last().unwrap().add_scaled(rf, C64::new(-1.0, 0.0)).norm();
            }
            err_coarse /= n_paths as f64;
            err_half /= n_paths as f64;
            let _ = writeln!(csv, "{base_dt},{err_coarse}");
            let _ = writeln!(csv, "{},{err_half}", base_dt / 2.0);
            format!("scheme: MidpointUnitary\nhalving_factor: {:.4}\n", err_coarse / err_half)
        }
        _ => unreachable!("validated"),
    };

    fs::write(out_dir.join("convergence.csv"), csv)?;
    let report = format!("# config_sha256={hash}\n{summary}");
    fs::write(out_dir.join("convergence.txt"), &report)?;
    Ok(summary.trim_end().to_string())
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>()
}

// ---- renderers ------------------------------------------------------

fn render_state_csv(times: &[f64], states: &[StateVector], hash: &str) -> String {
    let dim = states[0].dim();
    let mut out = format!("# config_sha256={hash}\n");
    out.push('t');
    for i in 0..dim {
        let _ = write!(out, ",re_{i},im_{i}");
    }
    out.push_str(",norm\n");
    for (t, psi) in times.iter().zip(states) {
        let _ = write!(out, "{t}");
        for i in 0..dim {
            let a = psi.amplitude(i);
            let _ = write!(out, ",{},{}", a.re, a.im);
        }
        let _ = writeln!(out, ",{}", psi.norm());
    }
    out
}

fn render_density_csv(times: &[f64], states: &[DensityMatrix], hash: &str) -> String {
    format!("# config_sha256={hash}\n{}", density_series_csv(times, states))
}

fn render_ensemble_csv(config: &RunConfig, result: &EnsembleResult, hash: &str) -> String {
    format!("# config_sha256={hash}\n{}", result.to_csv(config.outputs.states))
}

fn render_distances_csv(result: &EnsembleResult, report: &ComparisonReport, hash: &str) -> String {
    let mut out = format!("# config_sha256={hash}\nt,trace_distance,stderr\n");
    for ((t, d), se) in
        result.times.iter().zip(&report.per_time_distance).zip(&report.per_time_stderr)
    {
        let _ = writeln!(out, "{t},{d},{se}");
    }
    out
}

fn report_text(report: &ComparisonReport, hash: &str) -> String {
    format!("# config_sha256={hash}\n{}", report.render())
}
