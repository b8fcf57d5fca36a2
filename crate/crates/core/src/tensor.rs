//! Hermitian metrics, Chern connection, torsion, curvature and tensor norms.
//!
//! Index conventions: a metric is stored as the matrix `M[p][q] = g_{p̄q}`;
//! its inverse satisfies `g^{αβ̄} = M⁻¹[α][β]`. Complex indices are 0-based in
//! storage. Tensor components are stored component-major: the samples of a
//! fixed multi-index are contiguous, and the multi-index is read as base-3
//! digits with the first slot most significant.

use nalgebra::Matrix3;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{complex_derivative, GridSpec, ScalarField, REAL_AXES};

pub type C = Complex64;
pub type Mat3 = Matrix3<Complex64>;

/// Largest tensor rank any operation will build.
pub const MAX_RANK: usize = 8;
/// Largest derivative order accepted by [`dq_norm_sq`].
pub const MAX_ORDER: usize = 3;

const ZERO: C = C::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct MetricField {
    grid: GridSpec,
    /// `data[(p*3+q)*npts + pt] = g_{p̄q}(pt)`
    data: Vec<C>,
}

fn hermitian_deviation(m: &Mat3) -> f64 {
    let mut dev: f64 = 0.0;
    for p in 0..3 {
        for q in 0..3 {
            dev = dev.max((m[(p, q)] - m[(q, p)].conj()).norm());
        }
    }
    dev
}

/// Sylvester's criterion for a Hermitian 3×3 matrix.
pub fn is_positive(m: &Mat3) -> bool {
    let d1 = m[(0, 0)].re;
    let d2 = (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).re;
    let d3 = m.determinant().re;
    d1 > 0.0 && d2 > 0.0 && d3 > 0.0
}

impl MetricField {
    /// Validated metric from component-major samples.
    pub fn new(grid: GridSpec, data: Vec<C>) -> Result<Self> {
        if data.len() != 9 * grid.num_points() {
            return Err(Error::InvalidInput(format!(
                "metric has {} samples, grid expects {}",
                data.len(),
                9 * grid.num_points()
            )));
        }
        let g = MetricField { grid, data };
        g.validate()?;
        Ok(g)
    }

    pub(crate) fn new_unchecked(grid: GridSpec, data: Vec<C>) -> Self {
        debug_assert_eq!(data.len(), 9 * grid.num_points());
        MetricField { grid, data }
    }

    pub fn from_matrices(grid: &GridSpec, mats: &[Mat3]) -> Result<Self> {
        let npts = grid.num_points();
        if mats.len() != npts {
            return Err(Error::InvalidInput("one matrix per grid point expected".into()));
        }
        let mut data = vec![ZERO; 9 * npts];
        for (pt, m) in mats.iter().enumerate() {
            for p in 0..3 {
                for q in 0..3 {
                    data[(p * 3 + q) * npts + pt] = m[(p, q)];
                }
            }
        }
        MetricField::new(grid.clone(), data)
    }

    /// Metric sampled from a closed form `x -> M` with `M[p][q] = g_{p̄q}`.
    pub fn from_fn<F: Fn([f64; REAL_AXES]) -> Mat3>(grid: &GridSpec, f: F) -> Result<Self> {
        let mats: Vec<Mat3> = (0..grid.num_points()).map(|p| f(grid.coords(p))).collect();
        MetricField::from_matrices(grid, &mats)
    }

    pub fn identity(grid: &GridSpec) -> Self {
        MetricField::scaled_identity(grid, 1.0)
    }

    pub fn scaled_identity(grid: &GridSpec, c: f64) -> Self {
        let npts = grid.num_points();
        let mut data = vec![ZERO; 9 * npts];
        for a in 0..3 {
            data[(a * 4) * npts..(a * 4 + 1) * npts].fill(C::new(c, 0.0));
        }
        MetricField {
            grid: grid.clone(),
            data,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn data(&self) -> &[C] {
        &self.data
    }

    /// Samples of `g_{p̄q}` with 0-based `p`, `q`.
    pub fn component(&self, p: usize, q: usize) -> &[C] {
        let n = self.grid.num_points();
        &self.data[(p * 3 + q) * n..(p * 3 + q + 1) * n]
    }

    pub fn at(&self, pt: usize) -> Mat3 {
        let n = self.grid.num_points();
        Mat3::from_fn(|p, q| self.data[(p * 3 + q) * n + pt])
    }

    pub fn matrices(&self) -> Vec<Mat3> {
        (0..self.grid.num_points()).map(|pt| self.at(pt)).collect()
    }

    pub fn det_at(&self, pt: usize) -> f64 {
        self.at(pt).determinant().re
    }

    /// Checks Hermitian symmetry (relative 1e-12) and positive definiteness.
    pub fn validate(&self) -> Result<()> {
        for pt in 0..self.grid.num_points() {
            let m = self.at(pt);
            let scale = 1.0 + m.iter().map(|v| v.norm()).fold(0.0, f64::max);
            let dev = hermitian_deviation(&m);
            if !(dev <= 1e-12 * scale) {
                return Err(Error::NotHermitian {
                    location: self.grid.location(pt),
                    deviation: dev,
                });
            }
            if !is_positive(&m) {
                return Err(Error::MetricNotPositive(self.grid.location(pt)));
            }
        }
        Ok(())
    }

    /// Replaces each matrix by its Hermitian part and returns the largest
    /// deviation that was removed.
    pub fn hermitize(&mut self) -> f64 {
        let n = self.grid.num_points();
        let mut dev: f64 = 0.0;
        for pt in 0..n {
            for p in 0..3 {
                for q in p..3 {
                    let a = self.data[(p * 3 + q) * n + pt];
                    let b = self.data[(q * 3 + p) * n + pt];
                    dev = dev.max((a - b.conj()).norm());
                    let h = (a + b.conj()) * 0.5;
                    self.data[(p * 3 + q) * n + pt] = h;
                    self.data[(q * 3 + p) * n + pt] = h.conj();
                }
            }
        }
        dev
    }

    pub fn scale(&self, c: f64) -> Self {
        MetricField {
            grid: self.grid.clone(),
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &MetricField) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Smallest eigenvalue over the grid.
    pub fn min_eigenvalue(&self) -> f64 {
        (0..self.grid.num_points())
            .map(|pt| min_eigenvalue(&self.at(pt)))
            .fold(f64::INFINITY, f64::min)
    }

    /// The metric viewed as a tensor with slots `[LowerBar, Lower]`.
    pub fn as_tensor(&self) -> TensorField {
        TensorField {
            grid: self.grid.clone(),
            slots: vec![Slot::LowerBar, Slot::Lower],
            data: self.data.clone(),
        }
    }

    /// Pointwise inverse matrices `M⁻¹`.
    pub fn inverses(&self) -> Result<Vec<Mat3>> {
        (0..self.grid.num_points())
            .map(|pt| {
                self.at(pt)
                    .try_inverse()
                    .ok_or_else(|| Error::SingularMetric(self.grid.location(pt)))
            })
            .collect()
    }
}

/// Smallest eigenvalue of a Hermitian 3×3 matrix.
pub fn min_eigenvalue(m: &Mat3) -> f64 {
    // Embed as a real symmetric 6×6 matrix; its spectrum doubles the Hermitian one.
    let r = nalgebra::Matrix6::<f64>::from_fn(|i, j| {
        let v = m[(i % 3, j % 3)];
        match (i < 3, j < 3) {
            (true, true) | (false, false) => v.re,
            (true, false) => -v.im,
            (false, true) => v.im,
        }
    });
    let r = (r + r.transpose()) * 0.5;
    r.symmetric_eigenvalues().min()
}

/// Kind of tensor slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    Lower,
    LowerBar,
    Upper,
    UpperBar,
}

impl Slot {
    pub fn conj(self) -> Slot {
        match self {
            Slot::Lower => Slot::LowerBar,
            Slot::LowerBar => Slot::Lower,
            Slot::Upper => Slot::UpperBar,
            Slot::UpperBar => Slot::Upper,
        }
    }
}

/// Slot counts: (barred lower, unbarred lower, barred upper, unbarred upper).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Signature {
    pub lower_bar: usize,
    pub lower: usize,
    pub upper_bar: usize,
    pub upper: usize,
}

impl Signature {
    pub fn conj(self) -> Signature {
        Signature {
            lower_bar: self.lower,
            lower: self.lower_bar,
            upper_bar: self.upper,
            upper: self.upper_bar,
        }
    }
}

impl std::fmt::Display for Signature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{},{})", self.lower_bar, self.lower, self.upper_bar, self.upper)
    }
}

fn slots_string(slots: &[Slot]) -> String {
    let parts: Vec<&str> = slots
        .iter()
        .map(|s| match s {
            Slot::Lower => "_i",
            Slot::LowerBar => "_ī",
            Slot::Upper => "^i",
            Slot::UpperBar => "^ī",
        })
        .collect();
    format!("[{}]", parts.join(" "))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    grid: GridSpec,
    slots: Vec<Slot>,
    data: Vec<C>,
}

impl TensorField {
    pub fn new(grid: GridSpec, slots: Vec<Slot>, data: Vec<C>) -> Result<Self> {
        if slots.len() > MAX_RANK {
            return Err(Error::RankOverflow {
                rank: slots.len(),
                max: MAX_RANK,
            });
        }
        let expect = 3usize.pow(slots.len() as u32) * grid.num_points();
        if data.len() != expect {
            return Err(Error::InvalidInput(format!(
                "tensor has {} samples, signature and grid expect {expect}",
                data.len()
            )));
        }
        Ok(TensorField { grid, slots, data })
    }

    pub fn zeros(grid: &GridSpec, slots: Vec<Slot>) -> Result<Self> {
        let len = 3usize.pow(slots.len() as u32) * grid.num_points();
        TensorField::new(grid.clone(), slots, vec![ZERO; len])
    }

    /// Tensor whose components are produced by `f(multi_index, point)`.
    pub fn from_fn<F: Fn(&[usize], usize) -> C>(grid: &GridSpec, slots: Vec<Slot>, f: F) -> Result<Self> {
        let mut t = TensorField::zeros(grid, slots)?;
        let npts = grid.num_points();
        let rank = t.rank();
        let mut idx = vec![0usize; rank];
        for comp in 0..t.num_components() {
            decode(comp, &mut idx);
            for pt in 0..npts {
                t.data[comp * npts + pt] = f(&idx, pt);
            }
        }
        Ok(t)
    }

    pub fn scalar(f: &ScalarField) -> Self {
        TensorField {
            grid: f.grid().clone(),
            slots: Vec::new(),
            data: f.values().to_vec(),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn rank(&self) -> usize {
        self.slots.len()
    }

    pub fn num_components(&self) -> usize {
        3usize.pow(self.slots.len() as u32)
    }

    pub fn data(&self) -> &[C] {
        &self.data
    }

    pub fn signature(&self) -> Signature {
        let mut s = Signature::default();
        for slot in &self.slots {
            match slot {
                Slot::Lower => s.lower += 1,
                Slot::LowerBar => s.lower_bar += 1,
                Slot::Upper => s.upper += 1,
                Slot::UpperBar => s.upper_bar += 1,
            }
        }
        s
    }

    fn offset(&self, idx: &[usize]) -> usize {
        assert_eq!(idx.len(), self.rank(), "multi-index length must equal tensor rank");
        idx.iter().fold(0, |acc, &i| {
            assert!(i < 3, "complex index out of range");
            acc * 3 + i
        })
    }

    /// Samples of the component with the given 0-based multi-index.
    pub fn component(&self, idx: &[usize]) -> &[C] {
        let n = self.grid.num_points();
        let c = self.offset(idx);
        &self.data[c * n..(c + 1) * n]
    }

    pub fn component_mut(&mut self, idx: &[usize]) -> &mut [C] {
        let n = self.grid.num_points();
        let c = self.offset(idx);
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, idx: &[usize], pt: usize) -> C {
        self.component(idx)[pt]
    }

    /// Complex conjugate; every slot swaps barred and unbarred type.
    pub fn conj(&self) -> Self {
        TensorField {
            grid: self.grid.clone(),
            slots: self.slots.iter().map(|s| s.conj()).collect(),
            data: self.data.iter().map(|v| v.conj()).collect(),
        }
    }

    /// Reorders slots: slot `i` of the result is slot `perm[i]` of `self`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let r = self.rank();
        let mut seen = vec![false; r];
        if perm.len() != r || perm.iter().any(|&p| p >= r || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidInput(format!("{perm:?} is not a permutation of {r} slots")));
        }
        let slots: Vec<Slot> = perm.iter().map(|&p| self.slots[p]).collect();
        let npts = self.grid.num_points();
        let mut out = vec![ZERO; self.data.len()];
        let mut new_idx = vec![0usize; r];
        let mut old_idx = vec![0usize; r];
        for comp in 0..self.num_components() {
            decode(comp, &mut new_idx);
            for i in 0..r {
                old_idx[perm[i]] = new_idx[i];
            }
            let src = encode(&old_idx);
            out[comp * npts..(comp + 1) * npts].copy_from_slice(&self.data[src * npts..(src + 1) * npts]);
        }
        Ok(TensorField {
            grid: self.grid.clone(),
            slots,
            data: out,
        })
    }

    fn check_same_shape(&self, other: &TensorField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        if self.slots != other.slots {
            return Err(Error::SignatureMismatch {
                expected: slots_string(&self.slots),
                found: slots_string(&other.slots),
            });
        }
        Ok(())
    }

    /// `a·self + b·other`.
    pub fn lin_comb(&self, a: C, other: &TensorField, b: C) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(TensorField {
            grid: self.grid.clone(),
            slots: self.slots.clone(),
            data: self.data.iter().zip(&other.data).map(|(x, y)| a * x + b * y).collect(),
        })
    }

    pub fn scale(&self, a: C) -> Self {
        TensorField {
            grid: self.grid.clone(),
            slots: self.slots.clone(),
            data: self.data.iter().map(|x| a * x).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &TensorField) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }
}

fn decode(mut comp: usize, idx: &mut [usize]) {
    for slot in idx.iter_mut().rev() {
        *slot = comp % 3;
        comp /= 3;
    }
}

fn encode(idx: &[usize]) -> usize {
    idx.iter().fold(0, |acc, &i| acc * 3 + i)
}

/// The Chern connection of a metric with its pointwise inverse and
/// Christoffel symbols `Γ^α_{kβ} = g^{αγ̄} ∂_k g_{γ̄β}` cached.
#[derive(Debug, Clone)]
pub struct Chern {
    metric: MetricField,
    ginv: Vec<Mat3>,
    /// Slots `[Upper α, Lower k, Lower β]`.
    gamma: TensorField,
}

impl Chern {
    pub fn new(g: &MetricField) -> Result<Self> {
        let grid = g.grid().clone();
        let npts = grid.num_points();
        let ginv = g.inverses()?;
        let mut dg = Vec::with_capacity(3);
        for k in 0..3 {
            dg.push(
                (0..9)
                    .into_par_iter()
                    .map(|c| complex_derivative(&grid, &g.data[c * npts..(c + 1) * npts], k, false))
                    .collect::<Vec<_>>(),
            );
        }
        let mut data = vec![ZERO; 27 * npts];
        for a in 0..3 {
            for k in 0..3 {
                for b in 0..3 {
                    let out = &mut data[((a * 3 + k) * 3 + b) * npts..][..npts];
                    for (pt, o) in out.iter_mut().enumerate() {
                        *o = (0..3).map(|c| ginv[pt][(a, c)] * dg[k][c * 3 + b][pt]).sum();
                    }
                }
            }
        }
        let gamma = TensorField {
            grid,
            slots: vec![Slot::Upper, Slot::Lower, Slot::Lower],
            data,
        };
        Ok(Chern {
            metric: g.clone(),
            ginv,
            gamma,
        })
    }

    pub fn metric(&self) -> &MetricField {
        &self.metric
    }

    pub fn inverse(&self) -> &[Mat3] {
        &self.ginv
    }

    pub fn christoffel(&self) -> &TensorField {
        &self.gamma
    }

    fn check_grid(&self, a: &TensorField) -> Result<()> {
        if a.grid != *self.metric.grid() {
            return Err(Error::GridMismatch);
        }
        if a.rank() + 1 > MAX_RANK {
            return Err(Error::RankOverflow {
                rank: a.rank() + 1,
                max: MAX_RANK,
            });
        }
        Ok(())
    }

    /// ∇_k A with the new slot prepended. Only unbarred slots carry
    /// connection terms.
    pub fn nabla(&self, a: &TensorField) -> Result<TensorField> {
        self.covariant(a, false)
    }

    /// ∇_{k̄} A with the new slot prepended. Only barred slots carry
    /// (conjugate) connection terms.
    pub fn nabla_bar(&self, a: &TensorField) -> Result<TensorField> {
        self.covariant(a, true)
    }

    fn covariant(&self, a: &TensorField, bar: bool) -> Result<TensorField> {
        self.check_grid(a)?;
        let npts = a.grid.num_points();
        let ncomp = a.num_components();
        let rank = a.rank();
        let gamma = &self.gamma.data;
        let gam = |al: usize, k: usize, be: usize, pt: usize| {
            let v = gamma[((al * 3 + k) * 3 + be) * npts + pt];
            if bar {
                v.conj()
            } else {
                v
            }
        };
        let (up, low) = if bar {
            (Slot::UpperBar, Slot::LowerBar)
        } else {
            (Slot::Upper, Slot::Lower)
        };
        let mut data = vec![ZERO; 3 * ncomp * npts];
        data.par_chunks_mut(npts).enumerate().for_each(|(kc, out)| {
            let k = kc / ncomp;
            let c = kc % ncomp;
            let d = complex_derivative(&a.grid, &a.data[c * npts..(c + 1) * npts], k, bar);
            out.copy_from_slice(&d);
            for (s, slot) in a.slots.iter().enumerate() {
                let stride = 3usize.pow((rank - 1 - s) as u32);
                let digit = (c / stride) % 3;
                let base = c - digit * stride;
                if *slot == up {
                    for e in 0..3 {
                        let src = &a.data[(base + e * stride) * npts..][..npts];
                        for (pt, o) in out.iter_mut().enumerate() {
                            *o += gam(digit, k, e, pt) * src[pt];
                        }
                    }
                } else if *slot == low {
                    for e in 0..3 {
                        let src = &a.data[(base + e * stride) * npts..][..npts];
                        for (pt, o) in out.iter_mut().enumerate() {
                            *o -= gam(e, k, digit, pt) * src[pt];
                        }
                    }
                }
            }
        });
        let mut slots = Vec::with_capacity(rank + 1);
        slots.push(if bar { Slot::LowerBar } else { Slot::Lower });
        slots.extend_from_slice(&a.slots);
        Ok(TensorField {
            grid: a.grid.clone(),
            slots,
            data,
        })
    }

    /// Pointwise |A|² with every slot contracted through the metric.
    pub fn norm_sq(&self, a: &TensorField) -> Result<ScalarField> {
        if a.grid != *self.metric.grid() {
            return Err(Error::GridMismatch);
        }
        let npts = a.grid.num_points();
        let rank = a.rank();
        let gm = self.metric.matrices();
        let mut cur = a.data.clone();
        for (s, slot) in a.slots.iter().enumerate() {
            let stride = 3usize.pow((rank - 1 - s) as u32);
            let w = |pt: usize, i: usize, j: usize| match slot {
                Slot::Lower => self.ginv[pt][(j, i)],
                Slot::LowerBar => self.ginv[pt][(i, j)],
                Slot::Upper => gm[pt][(i, j)],
                Slot::UpperBar => gm[pt][(j, i)],
            };
            let src = &cur;
            let mut next = vec![ZERO; cur.len()];
            next.par_chunks_mut(npts).enumerate().for_each(|(c, out)| {
                let digit = (c / stride) % 3;
                let base = c - digit * stride;
                for j in 0..3 {
                    let col = &src[(base + j * stride) * npts..][..npts];
                    for (pt, o) in out.iter_mut().enumerate() {
                        *o += w(pt, digit, j) * col[pt];
                    }
                }
            });
            cur = next;
        }
        let mut values = vec![ZERO; npts];
        for (c, chunk) in cur.chunks(npts).enumerate() {
            let orig = &a.data[c * npts..(c + 1) * npts];
            for pt in 0..npts {
                values[pt] += orig[pt].conj() * chunk[pt];
            }
        }
        for v in values.iter_mut() {
            *v = C::new(v.re.max(0.0), 0.0);
        }
        ScalarField::new(a.grid.clone(), values)
    }

    /// `|D^q A|²` for q = 0..=qmax, where `|D^q A|² = Σ_{m+l=q} |∇^m ∇̄^l A|²`.
    pub fn derivative_norms(&self, a: &TensorField, qmax: usize) -> Result<Vec<ScalarField>> {
        if qmax > MAX_ORDER {
            return Err(Error::OrderGuard {
                order: qmax,
                max: MAX_ORDER,
            });
        }
        if a.rank() + qmax > MAX_RANK {
            return Err(Error::RankOverflow {
                rank: a.rank() + qmax,
                max: MAX_RANK,
            });
        }
        let npts = a.grid.num_points();
        let mut out = Vec::with_capacity(qmax + 1);
        // row[l] holds ∇^m ∇̄^l A for the current m.
        let mut bars = vec![a.clone()];
        for l in 1..=qmax {
            let next = self.nabla_bar(&bars[l - 1])?;
            bars.push(next);
        }
        let mut table: Vec<Vec<TensorField>> = vec![bars];
        for m in 1..=qmax {
            let mut row = Vec::with_capacity(qmax + 1 - m);
            for l in 0..=(qmax - m) {
                row.push(self.nabla(&table[m - 1][l])?);
            }
            table.push(row);
        }
        for q in 0..=qmax {
            let mut acc = vec![ZERO; npts];
            for m in 0..=q {
                let n = self.norm_sq(&table[m][q - m])?;
                for (x, y) in acc.iter_mut().zip(n.values()) {
                    *x += y;
                }
            }
            out.push(ScalarField::new(a.grid.clone(), acc)?);
        }
        Ok(out)
    }

    /// Torsion `T_{p̄qk} = ∂_q g_{p̄k} − ∂_k g_{p̄q}` with slots `[LowerBar, Lower, Lower]`.
    pub fn torsion(&self) -> TensorField {
        let g = &self.metric;
        let grid = g.grid().clone();
        let npts = grid.num_points();
        let mut d: Vec<Vec<C>> = Vec::with_capacity(27);
        for k in 0..3 {
            for c in 0..9 {
                d.push(complex_derivative(&grid, g.component(c / 3, c % 3), k, false));
            }
        }
        // d[k*9 + p*3 + q] = ∂_k g_{p̄q}
        let mut data = vec![ZERO; 27 * npts];
        for p in 0..3 {
            for q in 0..3 {
                for k in 0..3 {
                    let out = &mut data[((p * 3 + q) * 3 + k) * npts..][..npts];
                    if q == k {
                        continue;
                    }
                    let a = &d[q * 9 + p * 3 + k];
                    let b = &d[k * 9 + p * 3 + q];
                    for pt in 0..npts {
                        out[pt] = a[pt] - b[pt];
                    }
                }
            }
        }
        TensorField {
            grid,
            slots: vec![Slot::LowerBar, Slot::Lower, Slot::Lower],
            data,
        }
    }

    /// Torsion trace `T_i = g^{k p̄} T_{p̄ k i}` (first unbarred slot).
    pub fn torsion_trace_of(&self, t: &TensorField) -> Result<TensorField> {
        expect_slots(t, &[Slot::LowerBar, Slot::Lower, Slot::Lower])?;
        let npts = t.grid.num_points();
        let mut data = vec![ZERO; 3 * npts];
        for i in 0..3 {
            let out = &mut data[i * npts..(i + 1) * npts];
            for p in 0..3 {
                for k in 0..3 {
                    let src = t.component(&[p, k, i]);
                    for pt in 0..npts {
                        out[pt] += self.ginv[pt][(k, p)] * src[pt];
                    }
                }
            }
        }
        Ok(TensorField {
            grid: t.grid.clone(),
            slots: vec![Slot::Lower],
            data,
        })
    }

    /// Chern curvature `R_{p̄q}{}^r{}_s = −∂_{p̄} Γ^r_{qs}`, slots
    /// `[LowerBar p, Lower q, Upper r, Lower s]`.
    pub fn curvature(&self) -> TensorField {
        let grid = self.metric.grid().clone();
        let npts = grid.num_points();
        let gamma = &self.gamma.data;
        let mut data = vec![ZERO; 81 * npts];
        data.par_chunks_mut(npts).enumerate().for_each(|(c, out)| {
            let (p, q, r, s) = (c / 27, (c / 9) % 3, (c / 3) % 3, c % 3);
            let src = &gamma[((r * 3 + q) * 3 + s) * npts..][..npts];
            let d = complex_derivative(&grid, src, p, true);
            for (o, v) in out.iter_mut().zip(d) {
                *o = -v;
            }
        });
        TensorField {
            grid: self.metric.grid().clone(),
            slots: vec![Slot::LowerBar, Slot::Lower, Slot::Upper, Slot::Lower],
            data,
        }
    }

    /// `R̃_{p̄q} = g^{kℓ̄} g_{p̄α} R_{ℓ̄k}{}^α{}_q`, slots `[LowerBar, Lower]`.
    pub fn ricci_tilde_of(&self, rm: &TensorField) -> Result<TensorField> {
        expect_slots(rm, &CURVATURE_SLOTS)?;
        if rm.grid != *self.metric.grid() {
            return Err(Error::GridMismatch);
        }
        let npts = rm.grid.num_points();
        let gm = self.metric.matrices();
        // trace[α][q] = g^{kℓ̄} R_{ℓ̄k}{}^α{}_q
        let mut trace = vec![ZERO; 9 * npts];
        for al in 0..3 {
            for q in 0..3 {
                let out = &mut trace[(al * 3 + q) * npts..][..npts];
                for l in 0..3 {
                    for k in 0..3 {
                        let src = rm.component(&[l, k, al, q]);
                        for pt in 0..npts {
                            out[pt] += self.ginv[pt][(k, l)] * src[pt];
                        }
                    }
                }
            }
        }
        let mut data = vec![ZERO; 9 * npts];
        for p in 0..3 {
            for q in 0..3 {
                let out = &mut data[(p * 3 + q) * npts..][..npts];
                for al in 0..3 {
                    let src = &trace[(al * 3 + q) * npts..][..npts];
                    for pt in 0..npts {
                        out[pt] += gm[pt][(p, al)] * src[pt];
                    }
                }
            }
        }
        Ok(TensorField {
            grid: rm.grid.clone(),
            slots: vec![Slot::LowerBar, Slot::Lower],
            data,
        })
    }
}

pub const CURVATURE_SLOTS: [Slot; 4] = [Slot::LowerBar, Slot::Lower, Slot::Upper, Slot::Lower];

pub(crate) fn expect_slots(t: &TensorField, slots: &[Slot]) -> Result<()> {
    if t.slots != slots {
        return Err(Error::SignatureMismatch {
            expected: slots_string(slots),
            found: slots_string(&t.slots),
        });
    }
    Ok(())
}

/// Christoffel symbols `Γ^α_{kβ}`, slots `[Upper α, Lower k, Lower β]`.
pub fn christoffel(g: &MetricField) -> Result<TensorField> {
    Ok(Chern::new(g)?.gamma)
}

/// Torsion `T_{p̄qk}`.
pub fn torsion(g: &MetricField) -> Result<TensorField> {
    Ok(Chern::new(g)?.torsion())
}

/// Torsion trace `T_i`.
pub fn torsion_trace(g: &MetricField) -> Result<TensorField> {
    let ch = Chern::new(g)?;
    ch.torsion_trace_of(&ch.torsion())
}

/// Chern curvature `R_{p̄q}{}^r{}_s`.
pub fn curvature(g: &MetricField) -> Result<TensorField> {
    Ok(Chern::new(g)?.curvature())
}

pub fn ricci_tilde(rm: &TensorField, g: &MetricField) -> Result<TensorField> {
    Chern::new(g)?.ricci_tilde_of(rm)
}

pub fn nabla(a: &TensorField, g: &MetricField) -> Result<TensorField> {
    Chern::new(g)?.nabla(a)
}

pub fn nabla_bar(a: &TensorField, g: &MetricField) -> Result<TensorField> {
    Chern::new(g)?.nabla_bar(a)
}

pub fn norm_sq(a: &TensorField, g: &MetricField) -> Result<ScalarField> {
    Chern::new(g)?.norm_sq(a)
}

/// `|D^q A|²`.
pub fn dq_norm_sq(a: &TensorField, g: &MetricField, q: usize) -> Result<ScalarField> {
    let mut all = Chern::new(g)?.derivative_norms(a, q)?;
    Ok(all.pop().expect("q+1 entries"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn diag(v: f64) -> Mat3 {
        Mat3::from_diagonal_element(C::new(v, 0.0))
    }

    #[test]
    fn identity_has_no_connection_torsion_or_curvature() {
        let grid = GridSpec::new(8, &[0, 1]).unwrap();
        let g = MetricField::identity(&grid);
        let ch = Chern::new(&g).unwrap();
        assert_eq!(ch.christoffel().max_abs(), 0.0);
        assert_eq!(ch.torsion().max_abs(), 0.0);
        let rm = ch.curvature();
        assert_eq!(rm.max_abs(), 0.0);
        assert_eq!(ch.ricci_tilde_of(&rm).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn rejects_non_hermitian_and_indefinite() {
        let grid = GridSpec::new(4, &[]).unwrap();
        let mut m = diag(1.0);
        m[(0, 1)] = C::new(0.1, 0.0);
        assert!(matches!(
            MetricField::from_matrices(&grid, &[m]),
            Err(Error::NotHermitian { .. })
        ));
        let m = diag(-1.0);
        assert!(matches!(
            MetricField::from_matrices(&grid, &[m]),
            Err(Error::MetricNotPositive(_))
        ));
    }

    #[test]
    fn signature_and_conjugation() {
        let grid = GridSpec::new(4, &[0]).unwrap();
        let t = TensorField::from_fn(&grid, vec![Slot::LowerBar, Slot::Lower, Slot::Upper], |i, p| {
            C::new(i[0] as f64 + p as f64, i[1] as f64 - i[2] as f64)
        })
        .unwrap();
        let s = t.signature();
        assert_eq!((s.lower_bar, s.lower, s.upper_bar, s.upper), (1, 1, 0, 1));
        assert_eq!(t.conj().signature(), s.conj());
        assert_eq!(t.conj().conj(), t);
    }

    #[test]
    fn permute_moves_components() {
        let grid = GridSpec::new(4, &[]).unwrap();
        let t = TensorField::from_fn(&grid, vec![Slot::Lower, Slot::LowerBar], |i, _| {
            C::new((i[0] * 3 + i[1]) as f64, 0.0)
        })
        .unwrap();
        let u = t.permute(&[1, 0]).unwrap();
        assert_eq!(u.slots(), &[Slot::LowerBar, Slot::Lower]);
        assert_eq!(u.get(&[2, 1], 0), t.get(&[1, 2], 0));
        assert!(t.permute(&[0, 0]).is_err());
    }

    #[test]
    fn rank_guard() {
        let grid = GridSpec::new(4, &[]).unwrap();
        assert!(matches!(
            TensorField::zeros(&grid, vec![Slot::Lower; 9]),
            Err(Error::RankOverflow { .. })
        ));
        let g = MetricField::identity(&grid);
        let t = TensorField::zeros(&grid, vec![Slot::Lower; 8]).unwrap();
        assert!(matches!(nabla(&t, &g), Err(Error::RankOverflow { .. })));
    }

    #[test]
    fn norm_of_vector_under_scaled_metric() {
        let grid = GridSpec::new(4, &[]).unwrap();
        let g = MetricField::scaled_identity(&grid, 2.0);
        let v = TensorField::from_fn(&grid, vec![Slot::Upper], |i, _| C::new(1.0, i[0] as f64)).unwrap();
        // |V|² = 2 Σ |V^a|² = 2 (1 + 2 + 5)
        assert!((norm_sq(&v, &g).unwrap().values()[0].re - 16.0).abs() < 1e-14);
        let w = TensorField::from_fn(&grid, vec![Slot::LowerBar], |i, _| C::new(1.0, i[0] as f64)).unwrap();
        assert!((norm_sq(&w, &g).unwrap().values()[0].re - 4.0).abs() < 1e-14);
    }

    #[test]
    fn norm_is_nonnegative_on_nondiagonal_metric() {
        let grid = GridSpec::new(4, &[]).unwrap();
        let mut m = diag(2.0);
        m[(0, 1)] = C::new(0.3, 0.4);
        m[(1, 0)] = C::new(0.3, -0.4);
        let g = MetricField::from_matrices(&grid, &[m]).unwrap();
        let t = TensorField::from_fn(&grid, vec![Slot::Lower, Slot::UpperBar, Slot::LowerBar], |i, _| {
            C::new(i[0] as f64 - 1.0, i[1] as f64 * i[2] as f64)
        })
        .unwrap();
        let n = norm_sq(&t, &g).unwrap().values()[0];
        assert!(n.re > 0.0);
        // |conj T|² = |T|²
        let nc = norm_sq(&t.conj(), &g).unwrap().values()[0];
        assert!((n.re - nc.re).abs() < 1e-12);
    }

    #[test]
    fn torsion_of_conformal_diagonal_metric() {
        let grid = GridSpec::new(32, &[0]).unwrap();
        let g = MetricField::from_fn(&grid, |x| diag(1.0 + 0.1 * (2.0 * PI * x[0]).cos())).unwrap();
        let t = torsion(&g).unwrap();
        for pt in 0..grid.num_points() {
            let x = grid.coords(pt)[0];
            let expect = -0.1 * PI * (2.0 * PI * x).sin();
            assert!((t.get(&[1, 0, 1], pt) - C::new(expect, 0.0)).norm() < 1e-12);
            assert!((t.get(&[1, 1, 0], pt) + C::new(expect, 0.0)).norm() < 1e-12);
            assert_eq!(t.get(&[0, 0, 0], pt), ZERO);
        }
    }

    #[test]
    fn dq_norm_order_guard() {
        let grid = GridSpec::new(4, &[]).unwrap();
        let g = MetricField::identity(&grid);
        let t = TensorField::zeros(&grid, vec![]).unwrap();
        assert!(matches!(dq_norm_sq(&t, &g, 4), Err(Error::OrderGuard { .. })));
    }
}
