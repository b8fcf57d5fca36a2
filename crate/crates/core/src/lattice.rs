//! Periodic sampling grid over the flat torus and Fourier differentiation.
//!
//! The torus is C^3 / Z^6 with holomorphic coordinates z^a = x^a + i y^a.
//! Real axes are numbered 0..6 in the order (x1, y1, x2, y2, x3, y3). Fields
//! may vary only along the *active* axes and are constant along the others,
//! so a field is stored as `N^k` samples where `k` is the number of active
//! axes. Samples are laid out row-major with the lowest active axis varying
//! slowest.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::tensor::MetricField;

/// Number of real axes of the torus.
pub const REAL_AXES: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    n: usize,
    active: [bool; REAL_AXES],
    periods: [f64; REAL_AXES],
}

impl GridSpec {
    /// Grid with `n` points per active axis and unit periods.
    pub fn new(n: usize, active_axes: &[usize]) -> Result<Self> {
        if n < 4 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be even and at least 4, got {n}"
            )));
        }
        let mut active = [false; REAL_AXES];
        for &axis in active_axes {
            if axis >= REAL_AXES {
                return Err(Error::InvalidGrid(format!("real axis {axis} out of range 0..6")));
            }
            if active[axis] {
                return Err(Error::InvalidGrid(format!("real axis {axis} listed twice")));
            }
            active[axis] = true;
        }
        Ok(GridSpec {
            n,
            active,
            periods: [1.0; REAL_AXES],
        })
    }

    pub fn with_periods(mut self, periods: [f64; REAL_AXES]) -> Result<Self> {
        if let Some(p) = periods.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::InvalidGrid(format!("period must be positive, got {p}")));
        }
        self.periods = periods;
        Ok(self)
    }

    /// Rebuild a grid from the bitmask form used by snapshots.
    pub fn from_mask(n: usize, mask: u8, periods: [f64; REAL_AXES]) -> Result<Self> {
        if mask >> REAL_AXES != 0 {
            return Err(Error::InvalidGrid(format!("active-axis mask {mask:#04x} has bits above 5")));
        }
        let axes: Vec<usize> = (0..REAL_AXES).filter(|a| mask & (1 << a) != 0).collect();
        GridSpec::new(n, &axes)?.with_periods(periods)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn periods(&self) -> [f64; REAL_AXES] {
        self.periods
    }

    pub fn is_active(&self, axis: usize) -> bool {
        axis < REAL_AXES && self.active[axis]
    }

    pub fn active_axes(&self) -> Vec<usize> {
        (0..REAL_AXES).filter(|&a| self.active[a]).collect()
    }

    pub fn active_mask(&self) -> u8 {
        (0..REAL_AXES)
            .filter(|&a| self.active[a])
            .fold(0u8, |m, a| m | (1 << a))
    }

    pub fn num_active(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    pub fn num_points(&self) -> usize {
        self.n.pow(self.num_active() as u32)
    }

    /// Real coordinates of a sample point; inactive axes sit at 0.
    pub fn coords(&self, point: usize) -> [f64; REAL_AXES] {
        let mut out = [0.0; REAL_AXES];
        let axes = self.active_axes();
        let mut rem = point;
        for &axis in axes.iter().rev() {
            let i = rem % self.n;
            rem /= self.n;
            out[axis] = self.periods[axis] * i as f64 / self.n as f64;
        }
        out
    }

    /// Euclidean measure of one cell: `period/N` along active axes and the
    /// full period along inactive ones.
    pub fn cell_volume(&self) -> f64 {
        (0..REAL_AXES)
            .map(|a| {
                if self.active[a] {
                    self.periods[a] / self.n as f64
                } else {
                    self.periods[a]
                }
            })
            .product()
    }

    pub(crate) fn location(&self, point: usize) -> crate::error::Location {
        crate::error::Location {
            point,
            coords: self.coords(point),
        }
    }

    /// Sample a closed-form function of the six real coordinates.
    pub fn sample<F: Fn([f64; REAL_AXES]) -> Complex64>(&self, f: F) -> ScalarField {
        let values = (0..self.num_points()).map(|p| f(self.coords(p))).collect();
        ScalarField {
            grid: self.clone(),
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub(crate) grid: GridSpec,
    pub(crate) values: Vec<Complex64>,
}

impl ScalarField {
    pub fn new(grid: GridSpec, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.num_points() {
            return Err(Error::InvalidInput(format!(
                "scalar field has {} samples, grid expects {}",
                values.len(),
                grid.num_points()
            )));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn constant(grid: &GridSpec, c: Complex64) -> Self {
        ScalarField {
            grid: grid.clone(),
            values: vec![c; grid.num_points()],
        }
    }

    pub fn from_real(grid: &GridSpec, values: &[f64]) -> Result<Self> {
        ScalarField::new(grid.clone(), values.iter().map(|v| Complex64::new(*v, 0.0)).collect())
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn conj(&self) -> Self {
        self.map(|v| v.conj())
    }

    pub fn map<F: Fn(Complex64) -> Complex64>(&self, f: F) -> Self {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

type PlanPair = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

fn plans(n: usize) -> PlanPair {
    static PLANS: OnceLock<Mutex<HashMap<usize, PlanPair>>> = OnceLock::new();
    let mut cache = PLANS
        .get_or_init(|| Mutex::new(HashMap::new()))
        .lock()
        .expect("fft plan cache poisoned");
    cache
        .entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
        })
        .clone()
}

/// Signed integer wavenumber of FFT bin `k`; the Nyquist bin maps to 0 so
/// that odd derivatives of real data stay real.
fn wavenumber(k: usize, n: usize) -> f64 {
    if k < n / 2 {
        k as f64
    } else if k == n / 2 {
        0.0
    } else {
        k as f64 - n as f64
    }
}

/// Adds `weight * d/d(axis)` of `values` into `out`. Inactive axes contribute nothing.
fn add_real_axis_derivative(
    grid: &GridSpec,
    values: &[Complex64],
    axis: usize,
    weight: Complex64,
    out: &mut [Complex64],
) {
    if !grid.is_active(axis) {
        return;
    }
    let n = grid.n;
    let axes = grid.active_axes();
    let pos = axes.iter().position(|a| *a == axis).expect("active axis");
    let stride = n.pow((axes.len() - 1 - pos) as u32);
    let outer = n.pow(pos as u32);
    let (fwd, inv) = plans(n);
    let two_pi_over_l = 2.0 * std::f64::consts::PI / grid.periods[axis];
    let scale = weight / n as f64;
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fwd.get_inplace_scratch_len()];
    for o in 0..outer {
        for i in 0..stride {
            let start = o * n * stride + i;
            for (j, b) in buf.iter_mut().enumerate() {
                *b = values[start + j * stride];
            }
            fwd.process_with_scratch(&mut buf, &mut scratch);
            for (k, b) in buf.iter_mut().enumerate() {
                *b *= Complex64::new(0.0, two_pi_over_l * wavenumber(k, n));
            }
            inv.process_with_scratch(&mut buf, &mut scratch);
            for (j, b) in buf.iter().enumerate() {
                out[start + j * stride] += scale * b;
            }
        }
    }
}

/// Holomorphic (`bar = false`) or antiholomorphic derivative along complex
/// axis `a` (0-based) of raw samples.
pub(crate) fn complex_derivative(
    grid: &GridSpec,
    values: &[Complex64],
    a: usize,
    bar: bool,
) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); values.len()];
    let y_weight = if bar {
        Complex64::new(0.0, 0.5)
    } else {
        Complex64::new(0.0, -0.5)
    };
    add_real_axis_derivative(grid, values, 2 * a, Complex64::new(0.5, 0.0), &mut out);
    add_real_axis_derivative(grid, values, 2 * a + 1, y_weight, &mut out);
    out
}

/// d/dz^a = (d/dx^a - i d/dy^a) / 2 for complex axis `a` in 1..=3.
pub fn partial_z(f: &ScalarField, a: usize) -> Result<ScalarField> {
    if !(1..=3).contains(&a) {
        return Err(Error::AxisOutOfRange(a));
    }
    Ok(ScalarField {
        grid: f.grid.clone(),
        values: complex_derivative(&f.grid, &f.values, a - 1, false),
    })
}

/// d/dzbar^a = (d/dx^a + i d/dy^a) / 2 for complex axis `a` in 1..=3.
pub fn partial_zbar(f: &ScalarField, a: usize) -> Result<ScalarField> {
    if !(1..=3).contains(&a) {
        return Err(Error::AxisOutOfRange(a));
    }
    Ok(ScalarField {
        grid: f.grid.clone(),
        values: complex_derivative(&f.grid, &f.values, a - 1, true),
    })
}

/// Integral of `f` against the metric volume form, normalized so that the
/// flat metric on the unit torus has volume 1: sum of `f * det(g) * cell`.
pub fn integrate(f: &ScalarField, g: &MetricField) -> Result<Complex64> {
    if f.grid != *g.grid() {
        return Err(Error::GridMismatch);
    }
    let cell = f.grid.cell_volume();
    let mut acc = Complex64::new(0.0, 0.0);
    for (p, v) in f.values.iter().enumerate() {
        let det = g.det_at(p);
        if !(det > 0.0) {
            return Err(Error::NonPositiveDeterminant(f.grid.location(p)));
        }
        acc += v * det;
    }
    Ok(acc * cell)
}
