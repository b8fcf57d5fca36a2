//! Time integration of the anomaly flow
//! `∂_t(‖Ω‖_ω ω²) = i∂∂̄ω − α′(tr(Rm∧Rm) − Φ)`.
//!
//! Two independent right-hand sides are available: the form equation
//! itself (evolving Ψ and recovering g pointwise) and the equivalent
//! evolution of the metric components.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::forms::{
    d_residual, form22_component, i_ddbar, metric_from_psi, omega_from_metric, omega_norm, psi_from_metric,
    psi_matrix, trace_rm_wedge_rm, FormField, OmegaNorm,
};
use crate::lattice::GridSpec;
use crate::tensor::{min_eigenvalue, Chern, MetricField, TensorField};

type C = Complex64;
const ZERO: C = C::new(0.0, 0.0);

/// Source of the closed (2,2)-form Φ, held fixed along the flow.
#[derive(Debug, Clone, PartialEq)]
pub enum PhiSource {
    Zero,
    /// Spatially constant form. Either 3 real values placed on the diagonal
    /// basis elements `dz^{pair a} ∧ dz̄^{pair a}`, or 18 values giving
    /// the real and imaginary parts of all 9 basis coefficients.
    ConstantForm(Vec<f64>),
    /// tr(Rm∧Rm) of a reference metric; `None` uses the initial metric.
    ChernWeilBackground(Option<MetricField>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhsMode {
    PsiEvolution,
    MetricEvolution,
    CrossCheck,
}

impl RhsMode {
    pub fn name(self) -> &'static str {
        match self {
            RhsMode::PsiEvolution => "psi_evolution",
            RhsMode::MetricEvolution => "metric_evolution",
            RhsMode::CrossCheck => "cross_check",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "psi_evolution" => Some(RhsMode::PsiEvolution),
            "metric_evolution" => Some(RhsMode::MetricEvolution),
            "cross_check" => Some(RhsMode::CrossCheck),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub alpha_prime: f64,
    pub phi_source: PhiSource,
    pub dt_initial: f64,
    pub dt_safety: f64,
    pub t_max: f64,
    pub rhs_mode: RhsMode,
    /// Relative tolerance for the cross-check between the two right-hand sides.
    pub cross_check_tolerance: f64,
    /// Step halvings allowed before giving up on positivity.
    pub max_retries: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            alpha_prime: 0.0,
            phi_source: PhiSource::Zero,
            dt_initial: 1e-3,
            dt_safety: 0.5,
            t_max: 0.1,
            rhs_mode: RhsMode::PsiEvolution,
            cross_check_tolerance: 1e-6,
            max_retries: 30,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_string()));
        if !(self.alpha_prime >= 0.0 && self.alpha_prime.is_finite()) {
            return bad("alpha_prime must be ≥ 0");
        }
        if !(self.dt_initial > 0.0 && self.dt_initial.is_finite()) {
            return bad("dt_initial must be > 0");
        }
        if !(self.dt_safety > 0.0 && self.dt_safety <= 1.0) {
            return bad("dt_safety must lie in (0, 1]");
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return bad("t_max must be > 0");
        }
        if !(self.cross_check_tolerance > 0.0) {
            return bad("cross_check_tolerance must be > 0");
        }
        if let PhiSource::ConstantForm(v) = &self.phi_source {
            if v.len() != 3 && v.len() != 18 {
                return bad("constant Φ needs 3 diagonal or 18 re/im coefficients");
            }
        }
        Ok(())
    }
}

/// Resolves a [`PhiSource`] into a form on `grid`.
pub fn resolve_phi(source: &PhiSource, grid: &GridSpec, g0: &MetricField) -> Result<FormField> {
    let phi = match source {
        PhiSource::Zero => FormField::zeros(grid, 2, 2)?,
        PhiSource::ConstantForm(v) => {
            let coeffs: Vec<C> = if v.len() == 3 {
                // basis block index of dz^{pair a} ∧ dz̄^{pair a} is (2-a)*3 + (2-a)
                let mut c = vec![ZERO; 9];
                for (a, val) in v.iter().enumerate() {
                    c[(2 - a) * 4] = C::new(*val, 0.0);
                }
                c
            } else if v.len() == 18 {
                v.chunks(2).map(|p| C::new(p[0], p[1])).collect()
            } else {
                return Err(Error::InvalidInput(
                    "constant Φ needs 3 diagonal or 18 re/im coefficients".into(),
                ));
            };
            FormField::constant(grid, 2, 2, &coeffs)?
        }
        PhiSource::ChernWeilBackground(reference) => {
            let g = reference.as_ref().unwrap_or(g0);
            if g.grid() != grid {
                return Err(Error::GridMismatch);
            }
            trace_rm_wedge_rm(&Chern::new(g)?.curvature())?
        }
    };
    let residual = d_residual(&phi);
    if residual > 1e-8 {
        return Err(Error::PhiNotClosed { residual });
    }
    Ok(phi)
}

/// Tensors derived from a metric, recomputed on every accepted step.
#[derive(Debug, Clone)]
pub struct Derived {
    pub chern: Chern,
    pub torsion: TensorField,
    pub curvature: TensorField,
    pub omega_norm: OmegaNorm,
}

impl Derived {
    pub fn new(g: &MetricField) -> Result<Self> {
        let chern = Chern::new(g)?;
        let torsion = chern.torsion();
        let curvature = chern.curvature();
        let omega_norm = omega_norm(g)?;
        Ok(Derived {
            chern,
            torsion,
            curvature,
            omega_norm,
        })
    }
}

/// Right-hand side of the form equation: `i∂∂̄ω − α′(tr(Rm∧Rm) − Φ)`.
pub fn rhs_psi(g: &MetricField, d: &Derived, phi: &FormField, alpha_prime: f64) -> Result<FormField> {
    let mut out = i_ddbar(&omega_from_metric(g))?;
    if alpha_prime != 0.0 {
        let src = trace_rm_wedge_rm(&d.curvature)?.sub(phi)?;
        out = out.lin_comb(C::new(1.0, 0.0), &src, C::new(-alpha_prime, 0.0))?;
    }
    Ok(out)
}

/// Right-hand side of the metric equation, as samples of `∂_t g_{p̄q}` in
/// the same component-major layout as [`MetricField`].
pub fn rhs_metric(g: &MetricField, d: &Derived, phi: &FormField, alpha_prime: f64) -> Result<Vec<C>> {
    let npts = g.grid().num_points();
    let ginv = d.chern.inverse();
    let ric = d.chern.ricci_tilde_of(&d.curvature)?;
    let t = &d.torsion;
    let rm = &d.curvature;
    let mut out = vec![ZERO; 9 * npts];
    for pt in 0..npts {
        let gi = &ginv[pt];
        let tv = |b: usize, s: usize, q: usize| t.data()[((b * 3 + s) * 3 + q) * npts + pt];
        let rv = |p: usize, s: usize, a: usize, b: usize| rm.data()[(((p * 3 + s) * 3 + a) * 3 + b) * npts + pt];
        // x[p][s][r][q] = R_{p̄s}{}^α{}_β R_{r̄q}{}^β{}_α
        let mut x = [[[[ZERO; 3]; 3]; 3]; 3];
        if alpha_prime != 0.0 {
            for p in 0..3 {
                for s in 0..3 {
                    for r in 0..3 {
                        for q in 0..3 {
                            let mut acc = ZERO;
                            for a in 0..3 {
                                for b in 0..3 {
                                    acc += rv(p, s, a, b) * rv(r, q, b, a);
                                }
                            }
                            x[p][s][r][q] = acc;
                        }
                    }
                }
            }
        }
        let factor = 0.5 / d.omega_norm.values[pt];
        for p in 0..3 {
            for q in 0..3 {
                let mut val = -ric.data()[(p * 3 + q) * npts + pt];
                for a in 0..3 {
                    for b in 0..3 {
                        for s in 0..3 {
                            for r in 0..3 {
                                val += gi[(a, b)] * gi[(s, r)] * tv(b, s, q) * tv(a, r, p).conj();
                            }
                        }
                    }
                }
                if alpha_prime != 0.0 {
                    let mut quad = ZERO;
                    for s in 0..3 {
                        for r in 0..3 {
                            let bracket = x[p][s][r][q] - x[r][s][p][q] - x[p][q][r][s] + x[r][q][p][s];
                            quad += gi[(s, r)] * (bracket - form22_component(phi, p, s, r, q, pt));
                        }
                    }
                    val -= quad * alpha_prime;
                }
                out[(p * 3 + q) * npts + pt] = val * factor;
            }
        }
    }
    Ok(out)
}

/// Largest `|a−b|` over all samples divided by the largest `|g|`.
pub fn relative_discrepancy(a: &MetricField, b: &MetricField) -> f64 {
    let scale = a.data().iter().map(|v| v.norm()).fold(0.0, f64::max);
    a.max_abs_diff(b) / scale.max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone)]
pub struct FlowState {
    pub t: f64,
    pub g: MetricField,
    pub psi: FormField,
    pub cache: Derived,
    pub last_dt: f64,
    pub step_count: usize,
}

impl FlowState {
    pub fn new(g: MetricField, t: f64) -> Result<Self> {
        let psi = psi_from_metric(&g)?;
        FlowState::with_psi(g, psi, t)
    }

    fn with_psi(g: MetricField, psi: FormField, t: f64) -> Result<Self> {
        let cache = Derived::new(&g)?;
        Ok(FlowState {
            t,
            g,
            psi,
            cache,
            last_dt: 0.0,
            step_count: 0,
        })
    }
}

/// Run failure with the last accepted state attached.
#[derive(Debug)]
pub struct RunError {
    pub error: Error,
    pub state: Box<FlowState>,
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (last accepted t = {})", self.error, self.state.t)
    }
}

impl std::error::Error for RunError {}

/// Stability constant of classical RK4 on the negative real axis, rounded down.
const RK4_STABILITY: f64 = 2.5;
const DT_MIN: f64 = 1e-12;
/// Relative slack for landing exactly on `t_max`.
const END_SNAP: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct AnomalyFlow {
    config: FlowConfig,
    phi: FormField,
}

impl AnomalyFlow {
    /// Validates the configuration and resolves Φ against the initial metric.
    pub fn new(config: FlowConfig, g0: &MetricField) -> Result<Self> {
        config.validate()?;
        let phi = resolve_phi(&config.phi_source, g0.grid(), g0)?;
        Ok(AnomalyFlow { config, phi })
    }

    pub fn config(&self) -> &FlowConfig {
        &self.config
    }

    pub fn phi(&self) -> &FormField {
        &self.phi
    }

    pub fn initial_state(&self, g0: &MetricField) -> Result<FlowState> {
        FlowState::new(g0.clone(), 0.0)
    }

    pub fn rhs_psi(&self, s: &FlowState) -> Result<FormField> {
        rhs_psi(&s.g, &s.cache, &self.phi, self.config.alpha_prime)
    }

    pub fn rhs_metric(&self, s: &FlowState) -> Result<Vec<C>> {
        rhs_metric(&s.g, &s.cache, &self.phi, self.config.alpha_prime)
    }

    fn psi_rate(&self, psi: &FormField) -> Result<(MetricField, FormField)> {
        let g = metric_from_psi(psi)?;
        let d = Derived::new(&g)?;
        let r = rhs_psi(&g, &d, &self.phi, self.config.alpha_prime)?;
        Ok((g, r))
    }

    fn metric_rate(&self, g: &MetricField) -> Result<Vec<C>> {
        let d = Derived::new(g)?;
        rhs_metric(g, &d, &self.phi, self.config.alpha_prime)
    }

    /// Spectral stability limit for the leading second-order part of the flow.
    fn stability_cap(&self, s: &FlowState) -> f64 {
        let grid = s.g.grid();
        let periods = grid.periods();
        let n = grid.n() as f64;
        let k2: f64 = grid
            .active_axes()
            .iter()
            .map(|&a| (std::f64::consts::PI * n / periods[a]).powi(2) / 4.0)
            .sum();
        if k2 == 0.0 {
            return f64::INFINITY;
        }
        let dil = 0.5 / s.cache.omega_norm.inf;
        let lam = s.g.min_eigenvalue();
        RK4_STABILITY * lam / (dil * k2)
    }

    /// Step size proposed for the next step from `s`.
    pub fn suggest_dt(&self, s: &FlowState) -> Result<f64> {
        let remaining = self.config.t_max - s.t;
        let mut dt = self.config.dt_initial.min(remaining).min(self.stability_cap(s));
        let (rate, lam) = match self.config.rhs_mode {
            RhsMode::MetricEvolution => {
                let r = self.rhs_metric(s)?;
                (r.iter().map(|v| v.norm()).fold(0.0, f64::max), s.g.min_eigenvalue())
            }
            _ => {
                let r = self.rhs_psi(s)?;
                let n = s.g.grid().num_points();
                let lam = (0..n)
                    .map(|pt| min_eigenvalue(&psi_matrix(&s.psi, pt)))
                    .fold(f64::INFINITY, f64::min);
                (r.max_abs(), lam)
            }
        };
        if rate > 0.0 {
            dt = dt.min(self.config.dt_safety * lam / rate);
        }
        // absorb a rounding-sized remainder instead of leaving a sliver step
        if remaining - dt <= END_SNAP * dt {
            dt = remaining;
        }
        Ok(dt)
    }

    fn rk4_psi(&self, s: &FlowState, dt: f64) -> Result<(MetricField, FormField)> {
        let one = C::new(1.0, 0.0);
        let k1 = self.rhs_psi(s)?;
        let (_, k2) = self.psi_rate(&s.psi.lin_comb(one, &k1, C::new(dt / 2.0, 0.0))?)?;
        let (_, k3) = self.psi_rate(&s.psi.lin_comb(one, &k2, C::new(dt / 2.0, 0.0))?)?;
        let (_, k4) = self.psi_rate(&s.psi.lin_comb(one, &k3, C::new(dt, 0.0))?)?;
        let incr = k1
            .add(&k4)?
            .lin_comb(one, &k2.add(&k3)?, C::new(2.0, 0.0))?;
        let psi = s.psi.lin_comb(one, &incr, C::new(dt / 6.0, 0.0))?;
        let g = metric_from_psi(&psi)?;
        Ok((g, psi))
    }

    fn stage_metric(g: &MetricField, k: &[C], h: f64) -> Result<MetricField> {
        let data: Vec<C> = g.data().iter().zip(k).map(|(a, b)| a + b * h).collect();
        hermitian_metric(g.grid(), data)
    }

    fn rk4_metric(&self, s: &FlowState, dt: f64) -> Result<MetricField> {
        let k1 = self.rhs_metric(s)?;
        let k2 = self.metric_rate(&Self::stage_metric(&s.g, &k1, dt / 2.0)?)?;
        let k3 = self.metric_rate(&Self::stage_metric(&s.g, &k2, dt / 2.0)?)?;
        let k4 = self.metric_rate(&Self::stage_metric(&s.g, &k3, dt)?)?;
        let incr: Vec<C> = (0..k1.len())
            .map(|i| k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i])
            .collect();
        Self::stage_metric(&s.g, &incr, dt / 6.0)
    }

    /// One RK4 step of exactly `dt` (which may be negative); no adaptation.
    pub fn step_with_dt(&self, s: &FlowState, dt: f64) -> Result<FlowState> {
        let (g, psi) = match self.config.rhs_mode {
            RhsMode::PsiEvolution => self.rk4_psi(s, dt)?,
            RhsMode::MetricEvolution => {
                let g = self.rk4_metric(s, dt)?;
                let psi = psi_from_metric(&g)?;
                (g, psi)
            }
            RhsMode::CrossCheck => {
                let (g, psi) = self.rk4_psi(s, dt)?;
                let other = self.rk4_metric(s, dt)?;
                let discrepancy = relative_discrepancy(&g, &other);
                if discrepancy > self.config.cross_check_tolerance {
                    return Err(Error::CrossCheck {
                        discrepancy,
                        tolerance: self.config.cross_check_tolerance,
                    });
                }
                (g, psi)
            }
        };
        let mut next = FlowState::with_psi(g, psi, s.t + dt)?;
        next.last_dt = dt;
        next.step_count = s.step_count + 1;
        Ok(next)
    }

    /// One adaptive step, halving `dt` while positivity fails.
    pub fn step(&self, s: &FlowState) -> Result<FlowState> {
        let remaining = self.config.t_max - s.t;
        let mut dt = self.suggest_dt(s)?;
        let mut retries = 0;
        loop {
            if dt < DT_MIN {
                return Err(Error::DtUnderflow { t: s.t, dt });
            }
            match self.step_with_dt(s, dt) {
                Ok(mut next) => {
                    if dt == remaining {
                        next.t = self.config.t_max;
                    }
                    return Ok(next);
                }
                Err(e) if e.is_breakdown() => {
                    if retries == self.config.max_retries {
                        return Err(Error::PositivityLoss {
                            t: s.t,
                            retries,
                            cause: Box::new(e),
                        });
                    }
                    retries += 1;
                    dt *= 0.5;
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Integrates to `t_max`, calling `observer` on the initial state, every
    /// `cadence` accepted steps, and on the final state.
    pub fn run_with_observer<F>(&self, g0: &MetricField, cadence: usize, observer: F) -> std::result::Result<FlowState, RunError>
    where
        F: FnMut(&FlowState) -> Result<()>,
    {
        let state = match self.initial_state(g0) {
            Ok(s) => s,
            Err(error) => {
                // initial metric is not usable; report it unchanged
                let psi = FormField::zeros(g0.grid(), 2, 2).expect("(2,2)");
                let cache = Derived::new(&MetricField::identity(g0.grid())).expect("flat metric");
                let state = FlowState {
                    t: 0.0,
                    g: g0.clone(),
                    psi,
                    cache,
                    last_dt: 0.0,
                    step_count: 0,
                };
                return Err(RunError {
                    error,
                    state: Box::new(state),
                });
            }
        };
        self.run_from(state, cadence, observer)
    }

    /// Integrates from `state` (at any `t ≤ t_max`) to `t_max`; observer
    /// calls as in [`AnomalyFlow::run_with_observer`].
    pub fn run_from<F>(&self, mut state: FlowState, cadence: usize, mut observer: F) -> std::result::Result<FlowState, RunError>
    where
        F: FnMut(&FlowState) -> Result<()>,
    {
        let cadence = cadence.max(1);
        let fail = |error, state: &FlowState| RunError {
            error,
            state: Box::new(state.clone()),
        };
        if let Err(e) = observer(&state) {
            return Err(fail(e, &state));
        }
        let mut last_observed = state.step_count;
        while state.t < self.config.t_max {
            match self.step(&state) {
                Ok(next) => state = next,
                Err(e) => return Err(fail(e, &state)),
            }
            if state.step_count % cadence == 0 {
                if let Err(e) = observer(&state) {
                    return Err(fail(e, &state));
                }
                last_observed = state.step_count;
            }
        }
        if last_observed != state.step_count {
            if let Err(e) = observer(&state) {
                return Err(fail(e, &state));
            }
        }
        Ok(state)
    }

    pub fn run(&self, g0: &MetricField) -> std::result::Result<FlowState, RunError> {
        self.run_with_observer(g0, usize::MAX, |_| Ok(()))
    }
}

/// Hermitian-symmetrizes raw metric samples, asserting the removed part is
/// at roundoff level, then validates positivity.
pub fn hermitian_metric(grid: &GridSpec, data: Vec<C>) -> Result<MetricField> {
    let mut g = MetricField::new_unchecked(grid.clone(), data);
    let scale = 1.0 + g.data().iter().map(|v| v.norm()).fold(0.0, f64::max);
    let dev = g.hermitize();
    if dev > 1e-12 * scale {
        let n = grid.num_points();
        let pt = (0..n)
            .max_by(|&a, &b| {
                let m = |pt: usize| {
                    let m = g.at(pt);
                    (m - m.adjoint()).norm()
                };
                m(a).total_cmp(&m(b))
            })
            .unwrap_or(0);
        return Err(Error::NotHermitian {
            location: grid.location(pt),
            deviation: dev,
        });
    }
    g.validate()?;
    Ok(g)
}
