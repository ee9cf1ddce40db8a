//! Run configuration: one JSON document describes the system, the drive,
//! the integrator, and what to do with the results. Complex numbers are
//! `[re, im]` pairs; matrices are row-major nested arrays of those pairs.
//!
//! Physics parameters never come from positional CLI arguments — a run is
//! its config file, archivable and diffable, and every output embeds the
//! config hash.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use stoqtraj::linops::{Operator, StateVector, HERMITICITY_TOL};
use stoqtraj::noise::{NoiseSpec, OuInitial};

/// A failed parse or validation, with the stable code used in the CLI
/// `ERROR <code> <message>` line. Config problems exit with status 2.
#[derive(Debug, Clone)]
pub struct ConfigError {
    pub code: &'static str,
    pub message: String,
}

impl ConfigError {
    fn validation(message: impl Into<String>) -> Self {
        Self { code: "ValidationError", message: message.into() }
    }
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}", self.code, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Trajectory,
    Ensemble,
    Master,
    Compare,
    EmitCircuit,
    Convergence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EngineKind {
    ItoEm,
    ItoMilstein,
    Strat,
    RodeMidpoint,
    RodeHeun,
    Sle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    Lindblad,
    Redfield,
    WhiteSle,
    #[default]
    None,
}

type MatrixLiteral = Vec<Vec<[f64; 2]>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub dim: usize,
    /// Hamiltonian, row-major `[re, im]` pairs.
    pub h: MatrixLiteral,
    /// Hermitian coupling operator (strat, rode, sle; or ito with `b_is_ir`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<MatrixLiteral>,
    /// Arbitrary coupling operator for the ito engines.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<MatrixLiteral>,
    /// Use `B = iR` for the ito engines (requires `r`).
    #[serde(default)]
    pub b_is_ir: bool,
    /// Initial pure state amplitudes; defaults to the first basis state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi0: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Z0Config {
    #[default]
    Stationary,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseConfig {
    White {
        sigma: f64,
    },
    Ou {
        std: f64,
        tau_c: f64,
        #[serde(default)]
        z0: Z0Config,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub engine: EngineKind,
    pub dt: f64,
    pub n_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_n() -> usize {
    1
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { n: 1, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    /// Also write the full mean-density entries into the ensemble CSV.
    #[serde(default)]
    pub states: bool,
    /// Named Hermitian observables whose expectations are tracked.
    #[serde(default)]
    pub observables: BTreeMap<String, MatrixLiteral>,
    /// Audit dump of the Wiener path in trajectory mode (white noise only).
    #[serde(default)]
    pub dump_wiener: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ToleranceConfig {
    Abs { eps: f64 },
    Stderr { k: f64, floor: f64 },
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        ToleranceConfig::Stderr { k: 3.0, floor: 1e-2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub system: SystemConfig,
    pub noise: NoiseConfig,
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub oracle: OracleKind,
    #[serde(default)]
    pub outputs: OutputsConfig,
    #[serde(default)]
    pub tolerance: ToleranceConfig,
}

impl RunConfig {
    /// Canonical serialized form (field order is fixed by the struct).
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical form, echoed into every output file.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parse and validate a config document. Parse failures carry the JSON
/// line/column; validation failures name the violated rule.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let config: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError {
        code: "ParseError",
        message: format!("line {} column {}: {e}", e.line(), e.column()),
    })?;
    validate(&config)?;
    Ok(config)
}

fn validate(config: &RunConfig) -> Result<(), ConfigError> {
    let dim = config.system.dim;
    if dim == 0 {
        return Err(ConfigError::validation("system.dim must be positive"));
    }

    let h = parse_matrix(&config.system.h, dim, "system.h")?;
    h.require_hermitian(HERMITICITY_TOL)
        .map_err(|e| ConfigError::validation(format!("system.h: {e}")))?;

    let engine = config.integrator.engine;

    // engine/operator compatibility
    match engine {
        EngineKind::Strat | EngineKind::RodeMidpoint | EngineKind::RodeHeun | EngineKind::Sle => {
            let r_literal = config.system.r.as_ref().ok_or_else(|| {
                ConfigError::validation(format!("{} engine requires system.r", engine_name(engine)))
            })?;
            let r = parse_matrix(r_literal, dim, "system.r")?;
            r.require_hermitian(HERMITICITY_TOL).map_err(|_| {
                ConfigError::validation(format!(
                    "{} engine requires Hermitian R",
                    engine_name(engine)
                ))
            })?;
        }
        EngineKind::ItoEm | EngineKind::ItoMilstein => {
            if config.system.b_is_ir {
                let r_literal = config
                    .system
                    .r
                    .as_ref()
                    .ok_or_else(|| ConfigError::validation("b_is_ir requires system.r"))?;
                parse_matrix(r_literal, dim, "system.r")?;
            } else {
                let b_literal = config.system.b.as_ref().ok_or_else(|| {
                    ConfigError::validation(
                        "ito engines require system.b (or system.r with b_is_ir)",
                    )
                })?;
                parse_matrix(b_literal, dim, "system.b")?;
            }
        }
    }

    // engine/noise compatibility matrix:
    //   ito-*  <-> white      strat <-> white
    //   rode-* <-> ou         sle   <-> white or ou
    match (engine, &config.noise) {
        (EngineKind::ItoEm | EngineKind::ItoMilstein, NoiseConfig::Ou { .. }) => {
            return Err(ConfigError::validation("ito engine is white-noise only; use rode"));
        }
        (EngineKind::Strat, NoiseConfig::Ou { .. }) => {
            return Err(ConfigError::validation("strat engine is white-noise only; use rode"));
        }
        (EngineKind::RodeMidpoint | EngineKind::RodeHeun, NoiseConfig::White { .. }) => {
            return Err(ConfigError::validation(
                "rode engine needs a continuous process; use an ou noise spec",
            ));
        }
        _ => {}
    }

    // strict positivity at the config boundary
    match config.noise {
        NoiseConfig::White { sigma } => {
            if !(sigma.is_finite() && sigma > 0.0) {
                return Err(ConfigError::validation(format!(
                    "noise.sigma must be finite and > 0, got {sigma}"
                )));
            }
        }
        NoiseConfig::Ou { std, tau_c, z0 } => {
            if !(std.is_finite() && std > 0.0) {
                return Err(ConfigError::validation(format!(
                    "noise.std must be finite and > 0, got {std}"
                )));
            }
            if !(tau_c.is_finite() && tau_c > 0.0) {
                return Err(ConfigError::validation(format!(
                    "noise.tau_c must be finite and > 0, got {tau_c}"
                )));
            }
            if let Z0Config::Fixed(z) = z0 {
                if !z.is_finite() {
                    return Err(ConfigError::validation("noise.z0 fixed value must be finite"));
                }
            }
        }
    }

    let dt = config.integrator.dt;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(ConfigError {
            code: "InvalidTimeStep",
            message: format!("integrator.dt = {dt}"),
        });
    }
    if config.integrator.n_steps == 0 {
        return Err(ConfigError::validation("integrator.n_steps must be >= 1"));
    }
    if config.ensemble.n == 0 {
        return Err(ConfigError::validation("ensemble.n must be >= 1"));
    }

    if let Some(psi0) = &config.system.psi0 {
        let psi = parse_state(psi0, dim)?;
        if (psi.norm() - 1.0).abs() > 1e-10 {
            return Err(ConfigError {
                code: "InvalidInitialState",
                message: format!("system.psi0 must be normalized, got norm {}", psi.norm()),
            });
        }
    }

    for (name, literal) in &config.outputs.observables {
        let op = parse_matrix(literal, dim, &format!("outputs.observables.{name}"))?;
        op.require_hermitian(HERMITICITY_TOL)
            .map_err(|_| ConfigError::validation(format!("observable {name} must be Hermitian")))?;
    }

    // mode-specific requirements
    match config.mode {
        Mode::Compare => {
            if config.oracle == OracleKind::None {
                return Err(ConfigError::validation("compare mode requires an oracle"));
            }
        }
        Mode::EmitCircuit => {
            circuit_parameters(config).map(|_| ())?;
        }
        Mode::Convergence
            if !matches!(
                engine,
                EngineKind::ItoEm | EngineKind::ItoMilstein | EngineKind::RodeMidpoint
            ) =>
        {
            return Err(ConfigError::validation(
                "convergence mode supports ito-em, ito-milstein and rode-midpoint",
            ));
        }
        _ => {}
    }

    // oracle/noise compatibility
    match (config.oracle, &config.noise) {
        (OracleKind::Lindblad | OracleKind::WhiteSle, NoiseConfig::Ou { .. }) => {
            return Err(ConfigError::validation(
                "lindblad/white-sle oracles describe white noise; use the redfield oracle for ou",
            ));
        }
        (OracleKind::Redfield, NoiseConfig::White { .. }) => {
            return Err(ConfigError::validation(
                "the redfield oracle needs an ou covariance; use lindblad or white-sle",
            ));
        }
        _ => {}
    }

    Ok(())
}

fn engine_name(kind: EngineKind) -> &'static str {
    match kind {
        EngineKind::ItoEm => "ito-em",
        EngineKind::ItoMilstein => "ito-milstein",
        EngineKind::Strat => "strat",
        EngineKind::RodeMidpoint => "rode-midpoint",
        EngineKind::RodeHeun => "rode-heun",
        EngineKind::Sle => "sle",
    }
}

pub fn parse_matrix(
    literal: &MatrixLiteral,
    dim: usize,
    what: &str,
) -> Result<Operator, ConfigError> {
    if literal.len() != dim || literal.iter().any(|row| row.len() != dim) {
        return Err(ConfigError::validation(format!("{what} must be a {dim}x{dim} matrix")));
    }
    Operator::from_rows(literal).map_err(|e| ConfigError::validation(format!("{what}: {e}")))
}

pub fn parse_state(literal: &[[f64; 2]], dim: usize) -> Result<StateVector, ConfigError> {
    if literal.len() != dim {
        return Err(ConfigError::validation(format!(
            "system.psi0 must have {dim} amplitudes, got {}",
            literal.len()
        )));
    }
    StateVector::from_amplitudes(
        literal.iter().map(|[re, im]| num_complex::Complex64::new(*re, *im)).collect(),
    )
    .map_err(|e| ConfigError::validation(format!("system.psi0: {e}")))
}

impl NoiseConfig {
    pub fn to_spec(self) -> NoiseSpec {
        match self {
            NoiseConfig::White { sigma } => NoiseSpec::White { sigma },
            NoiseConfig::Ou { std, tau_c, z0 } => NoiseSpec::OrnsteinUhlenbeck {
                std,
                tau_c,
                z0: match z0 {
                    Z0Config::Stationary => OuInitial::StationaryDraw,
                    Z0Config::Fixed(value) => OuInitial::Fixed(value),
                },
            },
        }
    }

    pub fn sigma(&self) -> Option<f64> {
        match self {
            NoiseConfig::White { sigma } => Some(*sigma),
            NoiseConfig::Ou { .. } => None,
        }
    }
}

/// Extract `(eps, omega)` for the single-qubit circuit emitter, checking
/// that the configured system really is `H = ε σz + Ω σx` with `R = σx`
/// under white noise.
pub fn circuit_parameters(config: &RunConfig) -> Result<(f64, f64, f64), ConfigError> {
    if config.system.dim != 2 {
        return Err(ConfigError::validation("emit-circuit requires a single qubit (dim = 2)"));
    }
    let sigma = config
        .noise
        .sigma()
        .ok_or_else(|| ConfigError::validation("emit-circuit requires white noise"))?;
    let h = parse_matrix(&config.system.h, 2, "system.h")?;
    let eps = h.entry(0, 0).re;
    let omega = h.entry(0, 1).re;
    let tol = 1e-12;
    let structured = (h.entry(0, 0) + h.entry(1, 1)).norm() <= tol
        && h.entry(0, 1).im.abs() <= tol
        && (h.entry(0, 1) - h.entry(1, 0)).norm() <= tol;
    if !structured {
        return Err(ConfigError::validation(
            "emit-circuit requires H = eps*sigma_z + omega*sigma_x",
        ));
    }
    let r_literal = config
        .system
        .r
        .as_ref()
        .ok_or_else(|| ConfigError::validation("emit-circuit requires system.r = sigma_x"))?;
    let r = parse_matrix(r_literal, 2, "system.r")?;
    let is_sigma_x = (r.entry(0, 1) - num_complex::Complex64::new(1.0, 0.0)).norm() <= tol
        && (r.entry(1, 0) - num_complex::Complex64::new(1.0, 0.0)).norm() <= tol
        && r.entry(0, 0).norm() <= tol
        && r.entry(1, 1).norm() <= tol;
    if !is_sigma_x {
        return Err(ConfigError::validation("emit-circuit requires system.r = sigma_x"));
    }
    Ok((eps, omega, sigma))
}
