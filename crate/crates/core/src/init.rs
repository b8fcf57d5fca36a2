//! Closed-form initial metrics.
//!
//! Every generator perturbs the flat metric by a single periodic profile
//! `A·q(θ)` with `θ = 2π Σ_j x_j / L_j` summed over the chosen real axes and
//! `q(θ) = (cos θ − ρ) / (1 − 2ρ cos θ + ρ²)`. With `ρ = 0` this is a plain
//! cosine; `ρ > 0` spreads energy geometrically over all Fourier modes
//! (`q = Σ_{n≥1} ρ^{n−1} cos nθ`).

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::forms::{i_ddbar, metric_from_omega, metric_from_psi, omega_from_metric, psi_from_metric, FormField};
use crate::lattice::{GridSpec, ScalarField};
use crate::tensor::MetricField;

#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub amplitude: f64,
    /// Real axes (0..6) the profile varies along; each must be active.
    pub axes: Vec<usize>,
    /// Geometric decay ρ of the Fourier modes, in [0, 1).
    pub decay: f64,
}

impl Profile {
    pub fn new(amplitude: f64, axes: &[usize]) -> Self {
        Profile {
            amplitude,
            axes: axes.to_vec(),
            decay: 0.0,
        }
    }

    pub fn with_decay(mut self, decay: f64) -> Self {
        self.decay = decay;
        self
    }

    fn check(&self, grid: &GridSpec) -> Result<()> {
        if !self.amplitude.is_finite() {
            return Err(Error::InvalidInput("profile amplitude must be finite".into()));
        }
        if !(0.0..1.0).contains(&self.decay) {
            return Err(Error::InvalidInput(format!("profile decay must lie in [0,1), got {}", self.decay)));
        }
        if self.axes.is_empty() {
            return Err(Error::InvalidInput("profile needs at least one axis".into()));
        }
        if let Some(a) = self.axes.iter().find(|a| !grid.is_active(**a)) {
            return Err(Error::InvalidInput(format!("profile axis {a} is not an active grid axis")));
        }
        Ok(())
    }

    /// `A·q(θ)` at a point given by real coordinates.
    pub fn eval(&self, periods: &[f64; 6], x: &[f64; 6]) -> f64 {
        let theta: f64 = self.axes.iter().map(|&j| 2.0 * PI * x[j] / periods[j]).sum();
        let r = self.decay;
        self.amplitude * (theta.cos() - r) / (1.0 - 2.0 * r * theta.cos() + r * r)
    }

    pub fn sample(&self, grid: &GridSpec) -> Result<ScalarField> {
        self.check(grid)?;
        let periods = grid.periods();
        Ok(grid.sample(|x| Complex64::new(self.eval(&periods, &x), 0.0)))
    }
}

/// g = e^{A q} · I.
pub fn conformal(grid: &GridSpec, profile: &Profile) -> Result<MetricField> {
    profile.check(grid)?;
    let periods = grid.periods();
    MetricField::from_fn(grid, |x| {
        crate::tensor::Mat3::from_diagonal_element(Complex64::new(profile.eval(&periods, &x).exp(), 0.0))
    })
}

/// Kähler metric ω = ω_flat + i∂∂̄(A q).
pub fn kahler_potential(grid: &GridSpec, profile: &Profile) -> Result<MetricField> {
    let phi = FormField::from_scalar(&profile.sample(grid)?);
    let w = omega_from_metric(&MetricField::identity(grid)).add(&i_ddbar(&phi)?)?;
    metric_from_omega(&w)
}

/// Conformally balanced metric recovered from the closed form
/// Ψ = Ψ_flat + i∂∂̄(A q · ω_flat).
pub fn balanced_psi(grid: &GridSpec, profile: &Profile) -> Result<MetricField> {
    let f = profile.sample(grid)?;
    let flat = MetricField::identity(grid);
    let w = omega_from_metric(&flat).mul_scalar(f.values());
    let psi = psi_from_metric(&flat)?.add(&i_ddbar(&w)?)?;
    metric_from_psi(&psi)
}
