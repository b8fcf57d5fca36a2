//! Estimate monitoring: dilaton and curvature bounds, the test functions
//! G_k, G, G′ and their L^p integrals, exact α′ thresholds, Grönwall
//! envelopes, the extension certificate and reference-metric diagnostics.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::flow::FlowState;
use crate::forms::d_residual;
use crate::lattice::{integrate, ScalarField};
use crate::tensor::{Chern, MetricField, Slot, TensorField};

type C = Complex64;

/// `C0` at or below this value counts as the flat regime.
pub const FLAT_C0: f64 = 1e-10;
/// Highest curvature derivative order the monitor measures.
pub const MAX_MONITOR_ORDER: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorConfig {
    pub p: f64,
    pub a0: f64,
    pub cadence: usize,
    pub max_order: usize,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            p: 3.0,
            a0: 1.0,
            cadence: 10,
            max_order: 2,
        }
    }
}

impl MonitorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(Error::InvalidInput("p must be ≥ 1".into()));
        }
        if !(self.a0 > 0.0 && self.a0.is_finite()) {
            return Err(Error::InvalidInput("a0 must be > 0".into()));
        }
        if self.cadence == 0 {
            return Err(Error::InvalidInput("cadence must be ≥ 1".into()));
        }
        if self.max_order > MAX_MONITOR_ORDER {
            return Err(Error::OrderGuard {
                order: self.max_order,
                max: MAX_MONITOR_ORDER,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionBounds {
    pub b: f64,
    pub c0: f64,
    /// `C_1, C_2, ...` up to the measured order.
    pub cq: Vec<f64>,
    pub a0: f64,
    pub measured_at: f64,
}

/// Pointwise `|D^q A|²` tables for Rm, T and T̄.
#[derive(Debug, Clone)]
pub struct NormTable {
    /// `rm[q] = |D^q Rm|²`, q = 0..=order
    pub rm: Vec<ScalarField>,
    /// `t[q] = |D^q T|²`, q = 0..=order+1
    pub t: Vec<ScalarField>,
    pub tbar: Vec<ScalarField>,
}

impl NormTable {
    pub fn new(s: &FlowState, order: usize) -> Result<Self> {
        if order > MAX_MONITOR_ORDER {
            return Err(Error::OrderGuard {
                order,
                max: MAX_MONITOR_ORDER,
            });
        }
        let ch = &s.cache.chern;
        Ok(NormTable {
            rm: ch.derivative_norms(&s.cache.curvature, order)?,
            t: ch.derivative_norms(&s.cache.torsion, order + 1)?,
            tbar: ch.derivative_norms(&s.cache.torsion.conj(), order + 1)?,
        })
    }

    pub fn order(&self) -> usize {
        self.rm.len() - 1
    }

    /// `G_k = |D^k Rm|² + |D^{k+1} T|²`, if measured.
    pub fn g(&self, k: usize) -> Option<ScalarField> {
        let rm = self.rm.get(k)?;
        let t = self.t.get(k + 1)?;
        let values = rm.values().iter().zip(t.values()).map(|(a, b)| a + b).collect();
        Some(ScalarField::new(rm.grid().clone(), values).expect("same grid"))
    }
}

fn sup_sqrt(f: &ScalarField) -> f64 {
    f.values().iter().map(|v| v.re.max(0.0).sqrt()).fold(0.0, f64::max)
}

/// B, C0 and C_q from a precomputed norm table.
pub fn bounds_from_table(s: &FlowState, table: &NormTable, a0: f64) -> AssumptionBounds {
    let on = &s.cache.omega_norm;
    // 1/(2‖Ω‖) ranges over [1/(2 sup), 1/(2 inf)]
    let f_sup = 0.5 / on.inf;
    let f_inf = 0.5 / on.sup;
    let b = f_sup.max(1.0 / f_inf);
    let c0 = [&table.t[0], &table.tbar[0], &table.rm[0], &table.t[1], &table.tbar[1]]
        .iter()
        .map(|f| sup_sqrt(f))
        .fold(0.0, f64::max);
    let cq = (1..=table.order())
        .map(|q| {
            [&table.rm[q], &table.t[q + 1], &table.tbar[q + 1]]
                .iter()
                .map(|f| sup_sqrt(f))
                .fold(0.0, f64::max)
        })
        .collect();
    AssumptionBounds {
        b,
        c0,
        cq,
        a0,
        measured_at: s.t,
    }
}

/// Measures B, C0 and C_1..C_{max_order}.
pub fn measure_bounds(s: &FlowState, a0: f64, max_order: usize) -> Result<AssumptionBounds> {
    let table = NormTable::new(s, max_order)?;
    Ok(bounds_from_table(s, &table, a0))
}

#[derive(Debug, Clone)]
pub struct ShiQuantities {
    pub g0: ScalarField,
    pub g1: ScalarField,
    pub g2: ScalarField,
    /// `(α′G0 + μ)·G1`
    pub g_weighted: ScalarField,
    /// `(α′G0 + μ′)·G2`
    pub gprime_weighted: ScalarField,
    pub mu: f64,
    pub mu_prime: f64,
    pub p: f64,
    /// `∫ X^p` for X in {G0, G1, G2, G, Gprime}.
    pub lp_integrals: BTreeMap<String, f64>,
}

/// ∫_X f^p against the metric volume.
pub fn lp_integral(f: &ScalarField, g: &MetricField, p: f64) -> Result<f64> {
    let pow = f.map(|v| C::new(v.re.max(0.0).powf(p), 0.0));
    Ok(integrate(&pow, g)?.re)
}

fn weighted(g0: &ScalarField, gk: &ScalarField, alpha_prime: f64, mu: f64) -> ScalarField {
    let values = g0
        .values()
        .iter()
        .zip(gk.values())
        .map(|(a, b)| (a * alpha_prime + mu) * b)
        .collect();
    ScalarField::new(g0.grid().clone(), values).expect("same grid")
}

pub fn shi_from_table(s: &FlowState, table: &NormTable, alpha_prime: f64, p: f64, mu: f64, mu_prime: f64) -> Result<ShiQuantities> {
    let need = |k| {
        table.g(k).ok_or(Error::OrderGuard {
            order: k,
            max: table.order(),
        })
    };
    let g0 = need(0)?;
    let g1 = need(1)?;
    let g2 = need(2)?;
    let g_weighted = weighted(&g0, &g1, alpha_prime, mu);
    let gprime_weighted = weighted(&g0, &g2, alpha_prime, mu_prime);
    let mut lp = BTreeMap::new();
    for (name, f) in [
        ("G0", &g0),
        ("G1", &g1),
        ("G2", &g2),
        ("G", &g_weighted),
        ("Gprime", &gprime_weighted),
    ] {
        lp.insert(name.to_string(), lp_integral(f, &s.g, p)?);
    }
    Ok(ShiQuantities {
        g0,
        g1,
        g2,
        g_weighted,
        gprime_weighted,
        mu,
        mu_prime,
        p,
        lp_integrals: lp,
    })
}

/// Test functions and their L^p integrals at state `s`.
pub fn shi_quantities(s: &FlowState, alpha_prime: f64, p: f64, mu: f64, mu_prime: f64) -> Result<ShiQuantities> {
    let table = NormTable::new(s, 2)?;
    shi_from_table(s, &table, alpha_prime, p, mu, mu_prime)
}

fn rat(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite input")
}

fn int(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// Weight μ (also used for μ′): `1/(100 a0 B² p)` for p ≥ 3 and
/// `1/(300 a0 B²)` below.
pub fn mu_exact(a0: f64, b: f64, p: f64) -> BigRational {
    let base = rat(a0) * rat(b) * rat(b);
    if p >= 3.0 {
        (int(100) * base * rat(p)).recip()
    } else {
        (int(300) * base).recip()
    }
}

pub fn default_mu(a0: f64, b: f64, p: f64) -> f64 {
    mu_exact(a0, b, p).to_f64().unwrap_or(f64::NAN)
}

/// Which family a bound belongs to; fixes its dimensionless form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Bounds of the form `1/(c a0 B² C0)`.
    Linear,
    /// Bounds of the form `1/(c a0 B⁶ max(1,C0)²)`.
    Quadratic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdEntry {
    pub name: &'static str,
    pub formula: &'static str,
    pub family: Family,
    /// `None` when the bound is infinite (C0 = 0 in a denominator).
    pub bound: Option<BigRational>,
    pub satisfied: bool,
}

impl ThresholdEntry {
    pub fn bound_f64(&self) -> f64 {
        self.bound
            .as_ref()
            .map_or(f64::INFINITY, |b| b.to_f64().unwrap_or(f64::NAN))
    }

    pub fn bound_string(&self) -> String {
        match &self.bound {
            None => "inf".to_string(),
            Some(b) => b.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdReport {
    pub a0: f64,
    pub b: f64,
    pub c0: f64,
    pub p: f64,
    pub alpha_prime: f64,
    pub flat_regime: bool,
    pub entries: Vec<ThresholdEntry>,
    /// `α′·max(1,C0)²` against `Π₁ = 1/(3·10⁷ a0 B⁶)`.
    pub quadratic_form: f64,
    pub pi1: BigRational,
    pub quadratic_ok: bool,
    /// `α′·C0` against `Π₂ = 1/(26 a0 B²)`.
    pub linear_form: f64,
    pub pi2: BigRational,
    pub linear_ok: bool,
}

impl ThresholdReport {
    pub fn entry(&self, name: &str) -> Option<&ThresholdEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

pub const ENTRY_SHI_LP: &str = "shi_k_ge2_lp";
pub const ENTRY_SHI_SUP: &str = "shi_k_ge2_sup";
pub const ENTRY_SHI3_SUP: &str = "shi_k_ge3_sup";
pub const ENTRY_K2_LP: &str = "shi_k2_lp";
pub const ENTRY_K2_SUP: &str = "shi_k2_sup";
pub const ENTRY_G_LP: &str = "weighted_g_lp";
pub const ENTRY_G_SUP: &str = "weighted_g_sup";
pub const ENTRY_GPRIME_LP: &str = "weighted_gprime_lp";
pub const ENTRY_GPRIME_SUP: &str = "weighted_gprime_sup";
pub const ENTRY_EXTENSION: &str = "extension";

/// Evaluates every α′ bound exactly. Exponents `p` below 3 are raised to 3.
pub fn alpha_thresholds(b: &AssumptionBounds, p: f64, alpha_prime: f64) -> ThresholdReport {
    let a0 = rat(b.a0);
    let bb = rat(b.b);
    let b2 = &bb * &bb;
    let b6 = &b2 * &b2 * &b2;
    let c0 = rat(b.c0);
    let m = if b.c0 > 1.0 { c0.clone() } else { BigRational::one() };
    let m2 = &m * &m;
    let p = rat(p.max(3.0));
    let half = BigRational::new(BigInt::from(1), BigInt::from(2));
    let flat = b.c0 <= FLAT_C0;
    let alpha = rat(alpha_prime);

    let linear = |den: BigRational| -> Option<BigRational> {
        let d = den * &a0 * &b2 * &c0;
        if d.is_zero() {
            None
        } else {
            Some(d.recip())
        }
    };
    let quadratic = |den: BigRational| -> Option<BigRational> { Some((den * &a0 * &b6 * &m2).recip()) };

    let specs: Vec<(&'static str, &'static str, Family, Option<BigRational>)> = vec![
        (ENTRY_SHI_LP, "1/(4 a0 B^2 C0 (p+1/2))", Family::Linear, linear(int(4) * (&p + &half))),
        (ENTRY_SHI_SUP, "1/(14 a0 B^2 C0)", Family::Linear, linear(int(14))),
        (ENTRY_SHI3_SUP, "1/(16 a0 B^2 C0)", Family::Linear, linear(int(16))),
        (ENTRY_K2_LP, "1/(4 a0 B^2 C0 (2p+1/2))", Family::Linear, linear(int(4) * (int(2) * &p + &half))),
        (ENTRY_K2_SUP, "1/(26 a0 B^2 C0)", Family::Linear, linear(int(26))),
        (ENTRY_G_LP, "1/(10^6 a0 B^6 max(1,C0)^2 p)", Family::Quadratic, quadratic(int(1_000_000) * &p)),
        (ENTRY_G_SUP, "1/(3*10^6 a0 B^6 max(1,C0)^2)", Family::Quadratic, quadratic(int(3_000_000))),
        (ENTRY_GPRIME_LP, "1/(10^7 a0 B^6 max(1,C0)^2 p)", Family::Quadratic, quadratic(int(10_000_000) * &p)),
        (ENTRY_GPRIME_SUP, "1/(3*10^7 a0 B^6 max(1,C0)^2)", Family::Quadratic, quadratic(int(30_000_000))),
        (ENTRY_EXTENSION, "1/(3*10^7 a0 B^6 max(1,C0)^2)", Family::Quadratic, quadratic(int(30_000_000))),
    ];
    let entries = specs
        .into_iter()
        .map(|(name, formula, family, bound)| {
            let satisfied = flat || bound.as_ref().map_or(true, |bd| alpha < *bd);
            ThresholdEntry {
                name,
                formula,
                family,
                bound,
                satisfied,
            }
        })
        .collect();
    let pi1 = (int(30_000_000) * &a0 * &b6).recip();
    let pi2 = (int(26) * &a0 * &b2).recip();
    let quadratic_form = alpha_prime * b.c0.max(1.0).powi(2);
    let linear_form = alpha_prime * b.c0;
    let quadratic_ok = flat || &alpha * &m2 < pi1;
    let linear_ok = flat || &alpha * &c0 < pi2;
    ThresholdReport {
        a0: b.a0,
        b: b.b,
        c0: b.c0,
        p: p.to_f64().unwrap_or(f64::NAN),
        alpha_prime,
        flat_regime: flat,
        entries,
        quadratic_form,
        pi1,
        quadratic_ok,
        linear_form,
        pi2,
        linear_ok,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Extendable,
    NotCertified,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Extendable => "EXTENDABLE",
            Verdict::NotCertified => "NOT_CERTIFIED",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub verdict: Verdict,
    pub bound: BigRational,
    pub explanation: String,
}

/// Checks the smallness hypothesis `α′ < 1/(3·10⁷ a0 B⁶ max(1,C0)²)` of the
/// continuation result. A failed check only withdraws the certificate; it
/// says nothing about whether the flow actually breaks down.
pub fn extension_certificate(b: &AssumptionBounds, alpha_prime: f64) -> Certificate {
    let report = alpha_thresholds(b, 3.0, alpha_prime);
    let entry = report.entry(ENTRY_EXTENSION).expect("extension entry");
    let bound = entry.bound.clone().expect("finite bound");
    let bound_f = entry.bound_f64();
    let alpha = rat(alpha_prime);
    let (verdict, explanation) = if b.c0 <= FLAT_C0 {
        (
            Verdict::Extendable,
            format!(
                "flat regime: C0 = {:e} <= {:e}, torsion and curvature vanish and every bound is vacuous",
                b.c0, FLAT_C0
            ),
        )
    } else if alpha < bound {
        (
            Verdict::Extendable,
            format!(
                "alpha' = {alpha_prime:e} < 1/(3e7 a0 B^6 max(1,C0)^2) = {bound_f:e} (a0 = {}, B = {}, C0 = {}); margin {:e}",
                b.a0,
                b.b,
                b.c0,
                bound_f - alpha_prime
            ),
        )
    } else {
        (
            Verdict::NotCertified,
            format!(
                "alpha' = {alpha_prime:e} >= 1/(3e7 a0 B^6 max(1,C0)^2) = {bound_f:e} (a0 = {}, B = {}, C0 = {}); exceeds by {:e}; hypothesis not met, no breakdown is implied",
                b.a0,
                b.b,
                b.c0,
                alpha_prime - bound_f
            ),
        )
    };
    Certificate {
        verdict,
        bound,
        explanation,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaRef {
    Fitted,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GronwallFit {
    pub quantity: String,
    pub p: f64,
    pub samples: Vec<(f64, f64)>,
    pub lambda: f64,
    pub envelope_violated: bool,
}

const ENVELOPE_TOL: f64 = 1e-9;

/// Fits (or takes) a growth rate Λ and checks `v(t) ≤ (1+v(t0)) e^{Λ(t−t0)}`.
pub fn gronwall_check(quantity: &str, p: f64, series: &[(f64, f64)], reference: LambdaRef) -> Result<GronwallFit> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    for (i, w) in series.windows(2).enumerate() {
        if !(w[1].0 > w[0].0) {
            return Err(Error::NonMonotoneTime(i + 1));
        }
    }
    let lambda = match reference {
        LambdaRef::Fixed(l) => l,
        LambdaRef::Fitted => series
            .windows(2)
            .map(|w| ((1.0 + w[1].1).ln() - (1.0 + w[0].1).ln()) / (w[1].0 - w[0].0))
            .fold(0.0, f64::max),
    };
    let (t0, v0) = series[0];
    let envelope_violated = series
        .iter()
        .any(|&(t, v)| v > (1.0 + v0) * (lambda * (t - t0)).exp() * (1.0 + ENVELOPE_TOL));
    Ok(GronwallFit {
        quantity: quantity.to_string(),
        p,
        samples: series.to_vec(),
        lambda,
        envelope_violated,
    })
}

#[derive(Debug, Clone)]
pub struct ReferenceDiagnostics {
    /// `h^α{}_β = ĝ^{αγ̄} g_{γ̄β}`, slots `[Upper, Lower]`.
    pub h: TensorField,
    /// `S^α{}_{kβ} = Γ̂ − Γ`, slots `[Upper, Lower, Lower]`.
    pub s: TensorField,
    /// `max |S − (−g^{αγ̄} ∇̂_k g_{γ̄β})|`.
    pub s_identity_residual: f64,
    /// `sup |D̂^q g|_ĝ` for q = 0..=max_order.
    pub hat_dq_g_norms: Vec<f64>,
}

pub fn reference_diagnostics(s: &FlowState, g_hat: &MetricField, max_order: usize) -> Result<ReferenceDiagnostics> {
    let g = &s.g;
    if g.grid() != g_hat.grid() {
        return Err(Error::GridMismatch);
    }
    let grid = g.grid();
    let npts = grid.num_points();
    let hat = Chern::new(g_hat)?;
    let hat_inv = hat.inverse();
    let ginv = s.cache.chern.inverse();
    let gm = g.matrices();
    let h = TensorField::from_fn(grid, vec![Slot::Upper, Slot::Lower], |i, pt| (hat_inv[pt] * gm[pt])[(i[0], i[1])])?;
    let s_diff = hat.christoffel().lin_comb(
        C::new(1.0, 0.0),
        s.cache.chern.christoffel(),
        C::new(-1.0, 0.0),
    )?;
    // −g^{αγ̄} ∇̂_k g_{γ̄β}, with ∇̂g in slots [k, γ̄, β]
    let dg = hat.nabla(&g.as_tensor())?;
    let alt = TensorField::from_fn(grid, vec![Slot::Upper, Slot::Lower, Slot::Lower], |i, pt| {
        let (a, k, b) = (i[0], i[1], i[2]);
        -(0..3)
            .map(|c| ginv[pt][(a, c)] * dg.data()[((k * 3 + c) * 3 + b) * npts + pt])
            .sum::<C>()
    })?;
    let s_identity_residual = s_diff.max_abs_diff(&alt)?;
    let norms = hat.derivative_norms(&g.as_tensor(), max_order)?;
    let hat_dq_g_norms = norms.iter().map(sup_sqrt).collect();
    Ok(ReferenceDiagnostics {
        h,
        s: s_diff,
        s_identity_residual,
        hat_dq_g_norms,
    })
}

/// One monitoring sample.
#[derive(Debug, Clone)]
pub struct MonitorReport {
    pub time: f64,
    pub step: usize,
    pub bounds: AssumptionBounds,
    pub alpha_prime: f64,
    pub p: f64,
    pub mu: f64,
    pub mu_prime: f64,
    /// `∫ X^p` for X in {G0, G1, G2, G, Gprime}.
    pub integrals: BTreeMap<String, f64>,
    pub balanced_residual: f64,
    pub thresholds: ThresholdReport,
    pub certificate: Certificate,
}

impl MonitorReport {
    pub fn integral(&self, name: &str) -> f64 {
        self.integrals.get(name).copied().unwrap_or(f64::NAN)
    }
}

/// Stateless monitor bound to a configuration.
#[derive(Debug, Clone)]
pub struct Monitor {
    pub config: MonitorConfig,
}

impl Monitor {
    pub fn new(config: MonitorConfig) -> Result<Self> {
        config.validate()?;
        Ok(Monitor { config })
    }

    pub fn report(&self, s: &FlowState, alpha_prime: f64) -> Result<MonitorReport> {
        let cfg = &self.config;
        let table = NormTable::new(s, cfg.max_order)?;
        let bounds = bounds_from_table(s, &table, cfg.a0);
        let mu = default_mu(cfg.a0, bounds.b, cfg.p);
        let integrals = if cfg.max_order >= 2 {
            shi_from_table(s, &table, alpha_prime, cfg.p, mu, mu)?.lp_integrals
        } else {
            let mut m = BTreeMap::new();
            for k in 0..=cfg.max_order {
                let gk = table.g(k).expect("measured order");
                m.insert(format!("G{k}"), lp_integral(&gk, &s.g, cfg.p)?);
            }
            if let (Some(g0), Some(g1)) = (table.g(0), table.g(1)) {
                m.insert("G".into(), lp_integral(&weighted(&g0, &g1, alpha_prime, mu), &s.g, cfg.p)?);
            }
            m
        };
        let thresholds = alpha_thresholds(&bounds, cfg.p, alpha_prime);
        let certificate = extension_certificate(&bounds, alpha_prime);
        Ok(MonitorReport {
            time: s.t,
            step: s.step_count,
            alpha_prime,
            p: cfg.p,
            mu,
            mu_prime: mu,
            integrals,
            balanced_residual: d_residual(&s.psi),
            thresholds,
            certificate,
            bounds,
        })
    }
}

/// Exact rational comparison helper used by tests and the CLI.
pub fn exact_eq(a: &BigRational, num: i64, den: i64) -> bool {
    *a == BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Sign of `a − b` for exact rationals.
pub fn cmp_sign(a: &BigRational, b: &BigRational) -> i32 {
    let d = a - b;
    if d.is_positive() {
        1
    } else if d.is_negative() {
        -1
    } else {
        0
    }
}
