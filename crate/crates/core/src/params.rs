use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::BlochVector;

/// Default initial state: the pure state at polar angle π/4 in the x–z plane.
pub const DEFAULT_INITIAL: BlochVector =
    BlochVector::raw(std::f64::consts::FRAC_1_SQRT_2, 0.0, std::f64::consts::FRAC_1_SQRT_2);

/// Physical and numerical parameters of a run.
///
/// The Hamiltonian is fixed to H = (ω/2)σ_y and the monitored observable to
/// σ_z; ħ = 1 throughout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    /// Drive angular frequency ω.
    pub omega: f64,
    /// Measurement strength κ.
    pub kappa: f64,
    /// Total duration τ.
    pub tau: f64,
    /// Integrator step.
    pub dt: f64,
    /// Initial Bloch vector; must be pure.
    pub initial: BlochVector,
    pub n_traj: u64,
    pub seed: u64,
    /// Largest tolerated |1 − |r|| after a raw Euler–Maruyama step before the
    /// step is rejected as too large.
    pub max_norm_excursion: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            omega: 1.0,
            kappa: 0.25,
            tau: 1.0,
            dt: 1e-3,
            initial: DEFAULT_INITIAL,
            n_traj: 10_000,
            seed: 42,
            max_norm_excursion: 0.25,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::params("omega", format!("must be > 0, got {}", self.omega)));
        }
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(Error::params("kappa", format!("must be >= 0, got {}", self.kappa)));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::params("tau", format!("must be > 0, got {}", self.tau)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::params("dt", format!("must be > 0, got {}", self.dt)));
        }
        if self.dt > self.tau {
            return Err(Error::params(
                "dt",
                format!("dt = {} exceeds tau = {}", self.dt, self.tau),
            ));
        }
        let ratio = self.tau / self.dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return Err(Error::params(
                "dt",
                format!("tau/dt = {ratio} is not an integer step count"),
            ));
        }
        self.initial
            .validate()
            .map_err(|e| Error::params("initial", e.to_string()))?;
        if !self.initial.is_pure() {
            return Err(Error::params(
                "initial",
                format!("initial state must be pure (|r| = 1), got |r| = {}", self.initial.norm()),
            ));
        }
        if self.n_traj == 0 {
            return Err(Error::params("n_traj", "must be at least 1"));
        }
        if !(self.max_norm_excursion > 0.0 && self.max_norm_excursion < 1.0) {
            return Err(Error::params(
                "max_norm_excursion",
                format!("must lie in (0, 1), got {}", self.max_norm_excursion),
            ));
        }
        Ok(())
    }

    /// Number of integrator steps, round(τ/dt).
    pub fn n_steps(&self) -> usize {
        (self.tau / self.dt).round() as usize
    }

    /// Time of grid point `i`.
    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_initial(mut self, initial: BlochVector) -> Self {
        self.initial = initial;
        self
    }

    pub fn with_n_traj(mut self, n_traj: u64) -> Self {
        self.n_traj = n_traj;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}
