//! (p,q)-form fields, the Dolbeault operators, ω ↔ g, ‖Ω‖ and the anchor
//! form Ψ = ‖Ω‖ ω².
//!
//! A (p,q)-form is stored by its coefficients on the basis
//! `dz^I ∧ dz̄^J` with `I`, `J` strictly increasing; the antisymmetric
//! extension is available through [`FormField::component`].

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{complex_derivative, GridSpec, ScalarField};
use crate::tensor::{expect_slots, is_positive, Mat3, MetricField, TensorField, CURVATURE_SLOTS};

type C = Complex64;
const ZERO: C = C::new(0.0, 0.0);
const I: C = C::new(0.0, 1.0);

/// Increasing subsets of {0,1,2} of size k, in lexicographic order.
fn subsets(k: usize) -> &'static [&'static [usize]] {
    const S0: &[&[usize]] = &[&[]];
    const S1: &[&[usize]] = &[&[0], &[1], &[2]];
    const S2: &[&[usize]] = &[&[0, 1], &[0, 2], &[1, 2]];
    const S3: &[&[usize]] = &[&[0, 1, 2]];
    match k {
        0 => S0,
        1 => S1,
        2 => S2,
        3 => S3,
        _ => &[],
    }
}

fn subset_index(set: &[usize]) -> usize {
    subsets(set.len())
        .iter()
        .position(|s| *s == set)
        .expect("increasing subset")
}

/// Sorts an index list; returns the permutation sign, or `None` on a repeat.
fn sort_sign(idx: &[usize]) -> Option<(Vec<usize>, f64)> {
    let mut v = idx.to_vec();
    let mut sign = 1.0;
    for i in 0..v.len() {
        for j in 0..v.len() - 1 - i {
            if v[j] == v[j + 1] {
                return None;
            }
            if v[j] > v[j + 1] {
                v.swap(j, j + 1);
                sign = -sign;
            }
        }
    }
    if v.windows(2).any(|w| w[0] == w[1]) {
        return None;
    }
    Some((v, sign))
}

fn binom3(k: usize) -> usize {
    subsets(k).len()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormField {
    grid: GridSpec,
    p: usize,
    q: usize,
    /// `data[(iI * nJ + iJ) * npts + pt]`
    data: Vec<C>,
}

impl FormField {
    pub fn zeros(grid: &GridSpec, p: usize, q: usize) -> Result<Self> {
        if p > 3 || q > 3 {
            return Err(Error::BidegreeOverflow { p, q });
        }
        Ok(FormField {
            grid: grid.clone(),
            p,
            q,
            data: vec![ZERO; binom3(p) * binom3(q) * grid.num_points()],
        })
    }

    pub fn new(grid: GridSpec, p: usize, q: usize, data: Vec<C>) -> Result<Self> {
        let mut f = FormField::zeros(&grid, p, q)?;
        if data.len() != f.data.len() {
            return Err(Error::InvalidInput(format!(
                "({p},{q})-form has {} samples, expected {}",
                data.len(),
                f.data.len()
            )));
        }
        f.data = data;
        Ok(f)
    }

    /// A function viewed as a (0,0)-form.
    pub fn from_scalar(f: &ScalarField) -> Self {
        FormField {
            grid: f.grid().clone(),
            p: 0,
            q: 0,
            data: f.values().to_vec(),
        }
    }

    /// Spatially constant form from one coefficient per basis element.
    pub fn constant(grid: &GridSpec, p: usize, q: usize, coeffs: &[C]) -> Result<Self> {
        let mut f = FormField::zeros(grid, p, q)?;
        let nb = binom3(p) * binom3(q);
        if coeffs.len() != nb {
            return Err(Error::InvalidInput(format!(
                "({p},{q})-form needs {nb} coefficients, got {}",
                coeffs.len()
            )));
        }
        let npts = grid.num_points();
        for (b, c) in coeffs.iter().enumerate() {
            f.data[b * npts..(b + 1) * npts].fill(*c);
        }
        Ok(f)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn bidegree(&self) -> (usize, usize) {
        (self.p, self.q)
    }

    pub fn data(&self) -> &[C] {
        &self.data
    }

    fn nj(&self) -> usize {
        binom3(self.q)
    }

    fn block(&self, i: usize, j: usize) -> &[C] {
        let n = self.grid.num_points();
        let b = i * self.nj() + j;
        &self.data[b * n..(b + 1) * n]
    }

    fn block_mut(&mut self, i: usize, j: usize) -> &mut [C] {
        let n = self.grid.num_points();
        let b = i * self.nj() + j;
        &mut self.data[b * n..(b + 1) * n]
    }

    /// Basis coefficient of `dz^I ∧ dz̄^J` for strictly increasing `I`, `J`.
    pub fn coeff(&self, i_set: &[usize], j_set: &[usize]) -> &[C] {
        assert_eq!((i_set.len(), j_set.len()), (self.p, self.q), "index sets must match bidegree");
        self.block(subset_index(i_set), subset_index(j_set))
    }

    pub fn coeff_mut(&mut self, i_set: &[usize], j_set: &[usize]) -> &mut [C] {
        assert_eq!((i_set.len(), j_set.len()), (self.p, self.q), "index sets must match bidegree");
        let (i, j) = (subset_index(i_set), subset_index(j_set));
        self.block_mut(i, j)
    }

    /// Antisymmetric component `φ_{I J̄}` for arbitrary index lists at one point.
    pub fn component(&self, i_idx: &[usize], j_idx: &[usize], pt: usize) -> C {
        match (sort_sign(i_idx), sort_sign(j_idx)) {
            (Some((i, si)), Some((j, sj))) => self.coeff(&i, &j)[pt] * (si * sj),
            _ => ZERO,
        }
    }

    fn check_same(&self, other: &FormField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        if (self.p, self.q) != (other.p, other.q) {
            return Err(Error::InvalidInput(format!(
                "bidegree ({},{}) does not match ({},{})",
                self.p, self.q, other.p, other.q
            )));
        }
        Ok(())
    }

    /// `a·self + b·other`.
    pub fn lin_comb(&self, a: C, other: &FormField, b: C) -> Result<Self> {
        self.check_same(other)?;
        let mut out = self.clone();
        for (x, y) in out.data.iter_mut().zip(&other.data) {
            *x = a * *x + b * y;
        }
        Ok(out)
    }

    pub fn add(&self, other: &FormField) -> Result<Self> {
        self.lin_comb(C::new(1.0, 0.0), other, C::new(1.0, 0.0))
    }

    pub fn sub(&self, other: &FormField) -> Result<Self> {
        self.lin_comb(C::new(1.0, 0.0), other, C::new(-1.0, 0.0))
    }

    pub fn scale(&self, a: C) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|x| *x *= a);
        out
    }

    /// Multiplies every coefficient by a function.
    pub fn mul_scalar(&self, f: &[C]) -> Self {
        let n = self.grid.num_points();
        let mut out = self.clone();
        for chunk in out.data.chunks_mut(n) {
            for (x, y) in chunk.iter_mut().zip(f) {
                *x *= y;
            }
        }
        out
    }

    /// Complex conjugate, a (q,p)-form.
    pub fn conj(&self) -> Self {
        let mut out = FormField::zeros(&self.grid, self.q, self.p).expect("bidegree in range");
        let sign = if (self.p * self.q) % 2 == 1 { -1.0 } else { 1.0 };
        for i in 0..binom3(self.p) {
            for j in 0..self.nj() {
                let src: Vec<C> = self.block(i, j).iter().map(|v| v.conj() * sign).collect();
                out.block_mut(j, i).copy_from_slice(&src);
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &FormField) -> Result<f64> {
        self.check_same(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    /// Largest pointwise Euclidean norm of the coefficient vector.
    pub fn max_pointwise_norm(&self) -> f64 {
        let n = self.grid.num_points();
        (0..n)
            .map(|pt| {
                self.data
                    .chunks(n)
                    .map(|c| c[pt].norm_sqr())
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }
}

/// Exterior product.
pub fn wedge(a: &FormField, b: &FormField) -> Result<FormField> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    let (p, q) = (a.p + b.p, a.q + b.q);
    if p > 3 || q > 3 {
        return Err(Error::BidegreeOverflow { p, q });
    }
    let mut out = FormField::zeros(&a.grid, p, q)?;
    let n = a.grid.num_points();
    let cross = if (a.q * b.p) % 2 == 1 { -1.0 } else { 1.0 };
    for (ia, i1) in subsets(a.p).iter().enumerate() {
        for (ja, j1) in subsets(a.q).iter().enumerate() {
            for (ib, i2) in subsets(b.p).iter().enumerate() {
                let Some((iu, si)) = sort_sign(&[*i1, *i2].concat()) else {
                    continue;
                };
                for (jb, j2) in subsets(b.q).iter().enumerate() {
                    let Some((ju, sj)) = sort_sign(&[*j1, *j2].concat()) else {
                        continue;
                    };
                    let s = cross * si * sj;
                    let x = a.block(ia, ja).to_vec();
                    let y = b.block(ib, jb);
                    let dst = out.coeff_mut(&iu, &ju);
                    for pt in 0..n {
                        dst[pt] += x[pt] * y[pt] * s;
                    }
                }
            }
        }
    }
    Ok(out)
}

fn dolbeault(f: &FormField, bar: bool) -> Result<FormField> {
    let (p, q) = if bar { (f.p, f.q + 1) } else { (f.p + 1, f.q) };
    if p > 3 || q > 3 {
        return Err(Error::BidegreeOverflow { p, q });
    }
    let mut out = FormField::zeros(&f.grid, p, q)?;
    let n = f.grid.num_points();
    let ni = binom3(f.p);
    let nj = f.nj();
    // derivatives[(b * 3 + a)] = ∂_a (or ∂_ā) of block b
    let derivs: Vec<Vec<C>> = (0..ni * nj * 3)
        .into_par_iter()
        .map(|ba| complex_derivative(&f.grid, f.block(ba / 3 / nj, (ba / 3) % nj), ba % 3, bar))
        .collect();
    let lead = if bar && f.p % 2 == 1 { -1.0 } else { 1.0 };
    for (ii, iset) in subsets(f.p).iter().enumerate() {
        for (jj, jset) in subsets(f.q).iter().enumerate() {
            for a in 0..3 {
                let d = &derivs[(ii * nj + jj) * 3 + a];
                let (iu, ju, s) = if bar {
                    let Some((ju, s)) = sort_sign(&[&[a][..], jset].concat()) else {
                        continue;
                    };
                    (iset.to_vec(), ju, s * lead)
                } else {
                    let Some((iu, s)) = sort_sign(&[&[a][..], iset].concat()) else {
                        continue;
                    };
                    (iu, jset.to_vec(), s)
                };
                let dst = out.coeff_mut(&iu, &ju);
                for pt in 0..n {
                    dst[pt] += d[pt] * s;
                }
            }
        }
    }
    Ok(out)
}

/// ∂ of a form; errors on a (3,q)-form.
pub fn del(f: &FormField) -> Result<FormField> {
    dolbeault(f, false)
}

/// ∂̄ of a form; errors on a (p,3)-form.
pub fn delbar(f: &FormField) -> Result<FormField> {
    dolbeault(f, true)
}

/// The two bidegree pieces `(∂φ, ∂̄φ)` of dφ; a piece that would leave
/// the bidegree range is identically zero and reported as `None`.
pub fn d(f: &FormField) -> (Option<FormField>, Option<FormField>) {
    (del(f).ok(), delbar(f).ok())
}

/// Largest pointwise norm of dφ.
pub fn d_residual(f: &FormField) -> f64 {
    let (a, b) = d(f);
    let n = f.grid.num_points();
    let mut worst: f64 = 0.0;
    for pt in 0..n {
        let mut s = 0.0;
        for part in [&a, &b].into_iter().flatten() {
            s += part.data.chunks(n).map(|c| c[pt].norm_sqr()).sum::<f64>();
        }
        worst = worst.max(s.sqrt());
    }
    worst
}

/// `i ∂∂̄ φ`.
pub fn i_ddbar(f: &FormField) -> Result<FormField> {
    Ok(del(&delbar(f)?)?.scale(I))
}

/// ω = i g_{k̄j} dz^j ∧ dz̄^k.
pub fn omega_from_metric(g: &MetricField) -> FormField {
    let grid = g.grid();
    let mut w = FormField::zeros(grid, 1, 1).expect("(1,1)");
    for j in 0..3 {
        for k in 0..3 {
            let src: Vec<C> = g.component(k, j).iter().map(|v| I * v).collect();
            w.coeff_mut(&[j], &[k]).copy_from_slice(&src);
        }
    }
    w
}

/// Inverse of [`omega_from_metric`]; validates the result.
pub fn metric_from_omega(w: &FormField) -> Result<MetricField> {
    if w.bidegree() != (1, 1) {
        return Err(Error::InvalidInput("ω must be a (1,1)-form".into()));
    }
    let n = w.grid.num_points();
    let mut data = vec![ZERO; 9 * n];
    for k in 0..3 {
        for j in 0..3 {
            let src = w.coeff(&[j], &[k]);
            for pt in 0..n {
                data[(k * 3 + j) * n + pt] = -I * src[pt];
            }
        }
    }
    MetricField::new(w.grid.clone(), data)
}

/// ‖Ω‖_ω with Ω = dz¹∧dz²∧dz³, together with its extreme values.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaNorm {
    pub values: Vec<f64>,
    pub inf: f64,
    pub sup: f64,
}

impl OmegaNorm {
    pub fn as_scalar(&self, grid: &GridSpec) -> ScalarField {
        ScalarField::from_real(grid, &self.values).expect("one value per point")
    }
}

/// ‖Ω‖_ω = det(g)^{-1/2}.
pub fn omega_norm(g: &MetricField) -> Result<OmegaNorm> {
    let grid = g.grid();
    let mut values = Vec::with_capacity(grid.num_points());
    for pt in 0..grid.num_points() {
        let det = g.det_at(pt);
        if !(det > 0.0) {
            return Err(Error::NonPositiveDeterminant(grid.location(pt)));
        }
        values.push(det.powf(-0.5));
    }
    let inf = values.iter().copied().fold(f64::INFINITY, f64::min);
    let sup = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(OmegaNorm { values, inf, sup })
}

/// Ψ = ‖Ω‖_ω ω∧ω.
pub fn psi_from_metric(g: &MetricField) -> Result<FormField> {
    let w = omega_from_metric(g);
    let norm = omega_norm(g)?;
    let sq = wedge(&w, &w)?;
    let f: Vec<C> = norm.values.iter().map(|v| C::new(*v, 0.0)).collect();
    Ok(sq.mul_scalar(&f))
}

/// Complement pairs: `pair(a)` is {0,1,2} without `a`, so the (2,2) basis
/// element `dz^{pair a} ∧ dz̄^{pair b}` is labelled by `(a, b)`.
fn pair_block(a: usize) -> usize {
    2 - a
}

/// The Hermitian matrix `Q[a][b] = (−1)^{a+b} Ψ_{pair a, pair b} / 2` of a
/// (2,2)-form at one point. For Ψ = ω̃² it equals the adjugate of the
/// matrix of ω̃.
pub fn psi_matrix(psi: &FormField, pt: usize) -> Mat3 {
    Mat3::from_fn(|a, b| {
        let s = if (a + b) % 2 == 1 { -0.5 } else { 0.5 };
        psi.block(pair_block(a), pair_block(b))[pt] * s
    })
}

fn adjugate(m: &Mat3) -> Mat3 {
    let cof = |r: usize, c: usize| {
        let rows: Vec<usize> = (0..3).filter(|&x| x != r).collect();
        let cols: Vec<usize> = (0..3).filter(|&x| x != c).collect();
        let minor = m[(rows[0], cols[0])] * m[(rows[1], cols[1])] - m[(rows[0], cols[1])] * m[(rows[1], cols[0])];
        if (r + c) % 2 == 1 {
            -minor
        } else {
            minor
        }
    };
    Mat3::from_fn(|a, b| cof(b, a))
}

/// Pointwise inverse of [`psi_from_metric`].
pub fn metric_from_psi(psi: &FormField) -> Result<MetricField> {
    if psi.bidegree() != (2, 2) {
        return Err(Error::InvalidInput("Ψ must be a (2,2)-form".into()));
    }
    let grid = psi.grid.clone();
    let mut mats = Vec::with_capacity(grid.num_points());
    for pt in 0..grid.num_points() {
        let q = psi_matrix(psi, pt);
        let scale = 1.0 + q.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let herm = (0..3)
            .flat_map(|a| (0..3).map(move |b| (a, b)))
            .map(|(a, b)| (q[(a, b)] - q[(b, a)].conj()).norm())
            .fold(0.0, f64::max);
        if herm > 1e-10 * scale || !is_positive(&q) {
            return Err(Error::PsiNotPositive(grid.location(pt)));
        }
        let det_q = q.determinant().re;
        let root = adjugate(&q) / C::new(det_q.sqrt(), 0.0);
        let det_root = root.determinant().re;
        let mut g = root * C::new(det_root, 0.0);
        // exact Hermitian symmetry
        for a in 0..3 {
            g[(a, a)] = C::new(g[(a, a)].re, 0.0);
            for b in a + 1..3 {
                let h = (g[(a, b)] + g[(b, a)].conj()) * 0.5;
                g[(a, b)] = h;
                g[(b, a)] = h.conj();
            }
        }
        mats.push(g);
    }
    MetricField::from_matrices(&grid, &mats).map_err(|e| match e {
        Error::MetricNotPositive(l) => Error::PsiNotPositive(l),
        other => other,
    })
}

/// Largest pointwise norm of d(‖Ω‖_ω ω²).
pub fn balanced_residual(g: &MetricField) -> Result<f64> {
    Ok(d_residual(&psi_from_metric(g)?))
}

/// The (1,1)-form with coefficient `R_{k̄j}{}^α{}_γ` on `dz^j ∧ dz̄^k`.
fn curvature_block(rm: &TensorField, al: usize, ga: usize) -> FormField {
    let grid = rm.grid();
    let mut f = FormField::zeros(grid, 1, 1).expect("(1,1)");
    for j in 0..3 {
        for k in 0..3 {
            f.coeff_mut(&[j], &[k]).copy_from_slice(rm.component(&[k, j, al, ga]));
        }
    }
    f
}

/// tr(Rm∧Rm) with Rm the endomorphism-valued (1,1)-form
/// `R_{k̄j}{}^α{}_γ dz^j ∧ dz̄^k`.
pub fn trace_rm_wedge_rm(rm: &TensorField) -> Result<FormField> {
    expect_slots(rm, &CURVATURE_SLOTS)?;
    let blocks: Vec<FormField> = (0..9).map(|c| curvature_block(rm, c / 3, c % 3)).collect();
    let mut out = FormField::zeros(rm.grid(), 2, 2)?;
    for al in 0..3 {
        for ga in 0..3 {
            let w = wedge(&blocks[al * 3 + ga], &blocks[ga * 3 + al])?;
            out = out.add(&w)?;
        }
    }
    Ok(out)
}

/// Tensor components of a (2,2)-form written as
/// `¼ ρ_{p̄ s r̄ q} dz^s ∧ dz̄^p ∧ dz^q ∧ dz̄^r`, i.e. `ρ_{p̄sr̄q} = −φ_{sq, pr}`.
pub fn form22_component(f: &FormField, p: usize, s: usize, r: usize, q: usize, pt: usize) -> C {
    -f.component(&[s, q], &[p, r], pt)
}
