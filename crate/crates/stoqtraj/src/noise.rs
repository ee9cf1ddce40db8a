//! Reproducible stochastic drives: Wiener increments, Ornstein–Uhlenbeck
//! paths, and the covariance forms consumed by the master-equation oracles.
//!
//! Reproducibility contract: every sampling operation is a pure function of
//! `(spec, dt, n, master_seed, trajectory_index)`. Streams are derived from
//! the seed by a counter (the ChaCha stream index), so trajectory `i` draws
//! the same numbers whether it runs first, last, or on another thread.
//!
//! White noise is never instantiated pointwise — the formal derivative of a
//! Wiener path is a distribution, not a function. It exists here only as
//! increment arrays and as the symbolic [`CovarianceForm::Delta`] consumed
//! analytically downstream.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Description of the stochastic drive `Z_t` in `H + Z_t R`.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec {
    /// Gaussian white noise `ξ_t = σ dW/dt` of intensity `sigma`.
    White { sigma: f64 },
    /// Ornstein–Uhlenbeck process with stationary standard deviation `std`
    /// and correlation time `tau_c`: `C(t,s) = std² e^{-|t-s|/τ_c}`.
    OrnsteinUhlenbeck { std: f64, tau_c: f64, z0: OuInitial },
}

/// Initial condition for an Ornstein–Uhlenbeck path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OuInitial {
    /// Draw `Z_0 ~ N(0, std²)` from the stationary law (the default).
    StationaryDraw,
    /// Start every trajectory from a fixed value.
    Fixed(f64),
}

impl NoiseSpec {
    pub fn white(sigma: f64) -> Self {
        NoiseSpec::White { sigma }
    }

    pub fn ou(std: f64, tau_c: f64) -> Self {
        NoiseSpec::OrnsteinUhlenbeck { std, tau_c, z0: OuInitial::StationaryDraw }
    }

    /// Check parameter sanity. Zero amplitudes are accepted as the
    /// deterministic limit; correlation times must be strictly positive.
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseSpec::White { sigma } => {
                if !sigma.is_finite() || sigma < 0.0 {
                    return Err(Error::InvalidNoise(format!(
                        "white noise intensity must be finite and >= 0, got {sigma}"
                    )));
                }
            }
            NoiseSpec::OrnsteinUhlenbeck { std, tau_c, z0 } => {
                if !std.is_finite() || std < 0.0 {
                    return Err(Error::InvalidNoise(format!(
                        "OU stationary std must be finite and >= 0, got {std}"
                    )));
                }
                if !tau_c.is_finite() || tau_c <= 0.0 {
                    return Err(Error::InvalidNoise(format!(
                        "OU correlation time must be finite and > 0, got {tau_c}"
                    )));
                }
                if let OuInitial::Fixed(z) = z0 {
                    if !z.is_finite() {
                        return Err(Error::InvalidNoise(format!(
                            "fixed OU initial value must be finite, got {z}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// A per-trajectory random stream derived from `(master_seed, trajectory_index)`.
///
/// The draw sequence is a pure function of those two values — bit-identical
/// across runs, platforms with IEEE doubles, and thread schedules.
#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    trajectory_index: u64,
    rng: ChaCha12Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, trajectory_index: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
        rng.set_stream(trajectory_index);
        Self { master_seed, trajectory_index, rng }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn trajectory_index(&self) -> u64 {
        self.trajectory_index
    }

    /// One standard normal draw, advancing the stream.
    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }
}

/// Discretized Brownian increments: entry `k` covers `[k·dt, (k+1)·dt)` and
/// is distributed `N(0, dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerPath {
    pub dt: f64,
    pub increments: Vec<f64>,
}

impl WienerPath {
    pub fn n_steps(&self) -> usize {
        self.increments.len()
    }

    /// Audit dump: little-endian `f64` header `{dt}` + `u64` header
    /// `{n_steps, seed, index}` followed by the increments as little-endian
    /// doubles.
    pub fn write_binary<W: Write>(&self, w: &mut W, seed: u64, index: u64) -> std::io::Result<()> {
        w.write_all(&self.dt.to_le_bytes())?;
        w.write_all(&(self.increments.len() as u64).to_le_bytes())?;
        w.write_all(&seed.to_le_bytes())?;
        w.write_all(&index.to_le_bytes())?;
        for inc in &self.increments {
            w.write_all(&inc.to_le_bytes())?;
        }
        Ok(())
    }

    /// Read a dump written by [`WienerPath::write_binary`]; returns the path
    /// and the recorded `(seed, index)`.
    pub fn read_binary<R: Read>(r: &mut R) -> Result<(Self, u64, u64)> {
        let mut f = [0u8; 8];
        let mut read_u64 = |r: &mut R| -> Result<u64> {
            r.read_exact(&mut f).map_err(|e| Error::MalformedWienerDump(e.to_string()))?;
            Ok(u64::from_le_bytes(f))
        };
        let dt = f64::from_bits(read_u64(r)?);
        let n = read_u64(r)? as usize;
        let seed = read_u64(r)?;
        let index = read_u64(r)?;
        let mut increments = Vec::with_capacity(n);
        let mut buf = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut buf).map_err(|e| Error::MalformedWienerDump(e.to_string()))?;
            increments.push(f64::from_le_bytes(buf));
        }
        Ok((Self { dt, increments }, seed, index))
    }
}

/// Sample `n_steps` i.i.d. Wiener increments `ΔW ~ N(0, dt)`.
pub fn sample_wiener_increments(
    dt: f64,
    n_steps: usize,
    stream: &mut RngStream,
) -> Result<WienerPath> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::InvalidTimeStep(dt));
    }
    let sqrt_dt = dt.sqrt();
    let increments = (0..n_steps).map(|_| sqrt_dt * stream.standard_normal()).collect();
    Ok(WienerPath { dt, increments })
}

/// Refine a Wiener path by `factor` with Brownian-bridge insertion: the
/// refined increments over each coarse step sum to the original increment
/// exactly, and each refined increment keeps the marginal law `N(0, dt/factor)`.
///
/// Used to build reference solutions on the same Brownian path for
/// strong-convergence measurements.
pub fn refine_wiener_path(path: &WienerPath, factor: usize, stream: &mut RngStream) -> WienerPath {
    assert!(factor >= 2, "refinement factor must be >= 2");
    let fine_dt = path.dt / factor as f64;
    let sqrt_fine = fine_dt.sqrt();
    let mut refined = Vec::with_capacity(path.increments.len() * factor);
    let mut draw = vec![0.0; factor];
    for &coarse in &path.increments {
        // Conditionally on their sum, i.i.d. Gaussians are recentred
        // Gaussians: draw freely, then shift by the sum mismatch.
        let mut sum = 0.0;
        for d in draw.iter_mut() {
            *d = sqrt_fine * stream.standard_normal();
            sum += *d;
        }
        let shift = (coarse - sum) / factor as f64;
        refined.extend(draw.iter().map(|d| d + shift));
    }
    WienerPath { dt: fine_dt, increments: refined }
}

/// Sample an Ornstein–Uhlenbeck path on the grid `t_k = k·dt`, returning
/// `n_steps + 1` values including `Z_0`.
///
/// The update is the exact transition kernel
/// `Z_{k+1} = Z_k e^{-dt/τ_c} + std·sqrt(1 - e^{-2dt/τ_c})·N(0,1)`,
/// so the discrete path follows the continuous law at the grid points with
/// no discretization error.
pub fn sample_ou_path(
    spec: &NoiseSpec,
    dt: f64,
    n_steps: usize,
    stream: &mut RngStream,
) -> Result<Vec<f64>> {
    let (std, tau_c, z0_mode) = match *spec {
        NoiseSpec::OrnsteinUhlenbeck { std, tau_c, z0 } => (std, tau_c, z0),
        NoiseSpec::White { .. } => {
            return Err(Error::InvalidNoise(
                "an Ornstein-Uhlenbeck spec is required to sample a continuous path".into(),
            ))
        }
    };
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::InvalidTimeStep(dt));
    }
    spec.validate()?;

    let decay = (-dt / tau_c).exp();
    let kick = std * (1.0 - decay * decay).sqrt();
    let mut z = match z0_mode {
        OuInitial::StationaryDraw => std * stream.standard_normal(),
        OuInitial::Fixed(value) => value,
    };
    let mut path = Vec::with_capacity(n_steps + 1);
    path.push(z);
    for _ in 0..n_steps {
        z = z * decay + kick * stream.standard_normal();
        path.push(z);
    }
    Ok(path)
}

/// The covariance `C_Z(t,s) = E[Z_t Z_s]` of a drive, either as a number or
/// as a symbolic delta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovarianceForm {
    /// Pointwise value, for continuous processes.
    Value(f64),
    /// `weight · δ(t-s)`; never evaluated pointwise, consumed analytically
    /// by the master-equation module.
    Delta { weight: f64 },
}

/// Covariance of the drive at times `(t, s)`.
///
/// Ornstein–Uhlenbeck yields the analytic `std² e^{-|t-s|/τ_c}`; white noise
/// yields the tagged delta of weight `σ²`.
pub fn covariance(spec: &NoiseSpec, t: f64, s: f64) -> CovarianceForm {
    match *spec {
        NoiseSpec::White { sigma } => CovarianceForm::Delta { weight: sigma * sigma },
        NoiseSpec::OrnsteinUhlenbeck { std, tau_c, .. } => {
            CovarianceForm::Value(std * std * (-(t - s).abs() / tau_c).exp())
        }
    }
}
