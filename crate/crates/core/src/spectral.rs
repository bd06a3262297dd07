//! Periodic-grid spectral representation.
//!
//! Fields on the box `[0, L)²` are stored as Fourier coefficients in the
//! amplitude convention: a pure mode `A·exp(iξ·x)` has coefficient `A` at `ξ`.
//! Coefficient arrays are row-major with the `x2` index running fastest, and
//! FFT index `i` maps to the signed wavenumber `i` or `i - n`.
//!
//! Odd multipliers (derivatives, projections, the magnetostatic solve) use the
//! wavevector with any Nyquist component set to zero, which keeps the output of
//! every operator Hermitian. Even multipliers (`-|ξ|²` and its inverse) use the
//! true wavevector.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{FerroError, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Tolerance on the relative Hermitian defect accepted by [`inverse_transform`].
pub const HERMITIAN_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    n1: usize,
    n2: usize,
    length: f64,
    dealias_fraction: f64,
}

impl Grid {
    pub fn new(n1: usize, n2: usize, length: f64) -> Result<Self> {
        for (name, n) in [("n1", n1), ("n2", n2)] {
            if n < 8 || n % 2 != 0 {
                return Err(FerroError::InvalidGrid(format!(
                    "{name} = {n} must be an even integer >= 8"
                )));
            }
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(FerroError::InvalidGrid(format!("box length {length} must be positive")));
        }
        Ok(Self {
            n1,
            n2,
            length,
            dealias_fraction: 2.0 / 3.0,
        })
    }

    pub fn square(n: usize, length: f64) -> Result<Self> {
        Self::new(n, n, length)
    }

    pub fn with_dealias_fraction(mut self, fraction: f64) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(FerroError::InvalidGrid(format!(
                "dealias fraction {fraction} must lie in (0, 1]"
            )));
        }
        self.dealias_fraction = fraction;
        Ok(self)
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dealias_fraction(&self) -> f64 {
        self.dealias_fraction
    }

    /// Number of grid points (and of Fourier modes).
    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Box area `L²`, the Parseval factor of the amplitude convention.
    pub fn area(&self) -> f64 {
        self.length * self.length
    }

    /// Smallest nonzero `|ξ|`, i.e. `2π/L`.
    pub fn fundamental(&self) -> f64 {
        2.0 * PI / self.length
    }

    pub fn spacing(&self) -> (f64, f64) {
        (self.length / self.n1 as f64, self.length / self.n2 as f64)
    }

    /// Largest `|ξ|` carried by the grid.
    pub fn max_xi_norm(&self) -> f64 {
        let k1 = (self.n1 / 2) as f64;
        let k2 = (self.n2 / 2) as f64;
        self.fundamental() * (k1 * k1 + k2 * k2).sqrt()
    }

    #[inline]
    pub fn wavenumber(&self, idx: usize) -> (i64, i64) {
        let i1 = idx / self.n2;
        let i2 = idx % self.n2;
        (signed(i1, self.n1), signed(i2, self.n2))
    }

    #[inline]
    pub fn xi(&self, idx: usize) -> (f64, f64) {
        let (k1, k2) = self.wavenumber(idx);
        let c = self.fundamental();
        (c * k1 as f64, c * k2 as f64)
    }

    #[inline]
    pub fn xi_norm2(&self, idx: usize) -> f64 {
        let (a, b) = self.xi(idx);
        a * a + b * b
    }

    /// Wavevector used by odd multipliers: Nyquist components are zeroed.
    #[inline]
    pub fn xi_odd(&self, idx: usize) -> (f64, f64) {
        let (k1, k2) = self.wavenumber(idx);
        let c = self.fundamental();
        let a = if k1 == -(self.n1 as i64 / 2) {
            0.0
        } else {
            c * k1 as f64
        };
        let b = if k2 == -(self.n2 as i64 / 2) {
            0.0
        } else {
            c * k2 as f64
        };
        (a, b)
    }

    pub fn is_nyquist(&self, idx: usize) -> bool {
        let (k1, k2) = self.wavenumber(idx);
        k1 == -(self.n1 as i64 / 2) || k2 == -(self.n2 as i64 / 2)
    }

    pub fn index_of(&self, k1: i64, k2: i64) -> Option<usize> {
        let h1 = (self.n1 / 2) as i64;
        let h2 = (self.n2 / 2) as i64;
        if k1 < -h1 || k1 >= h1 || k2 < -h2 || k2 >= h2 {
            return None;
        }
        let i1 = k1.rem_euclid(self.n1 as i64) as usize;
        let i2 = k2.rem_euclid(self.n2 as i64) as usize;
        Some(i1 * self.n2 + i2)
    }

    /// Index of the mode `-k` in FFT storage.
    #[inline]
    pub fn partner(&self, idx: usize) -> usize {
        let i1 = idx / self.n2;
        let i2 = idx % self.n2;
        ((self.n1 - i1) % self.n1) * self.n2 + (self.n2 - i2) % self.n2
    }

    /// Whether the mode survives the dealiasing rule `|k_i| < fraction·n_i/2`.
    /// The inequality is strict: at fraction 2/3 a product of two retained
    /// modes then never aliases back onto a retained mode.
    #[inline]
    pub fn keeps_dealiased(&self, idx: usize) -> bool {
        let (k1, k2) = self.wavenumber(idx);
        let c1 = self.dealias_fraction * self.n1 as f64 / 2.0;
        let c2 = self.dealias_fraction * self.n2 as f64 / 2.0;
        (k1.abs() as f64) < c1 && (k2.abs() as f64) < c2
    }

    /// Collocation point `(L/n1·i, L/n2·j)`.
    pub fn point(&self, i1: usize, i2: usize) -> (f64, f64) {
        let (d1, d2) = self.spacing();
        (d1 * i1 as f64, d2 * i2 as f64)
    }

    pub fn same_box(&self, other: &Grid) -> bool {
        self.length == other.length
    }
}

#[inline]
fn signed(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Fourier coefficients of a scalar (one component) or vector (two
/// components) field.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: Grid,
    comps: Vec<Vec<Complex64>>,
}

impl SpectralField {
    pub fn zeros(grid: Grid, ncomp: usize) -> Self {
        assert!(ncomp == 1 || ncomp == 2, "fields have 1 or 2 components");
        Self {
            grid,
            comps: vec![vec![ZERO; grid.len()]; ncomp],
        }
    }

    pub fn scalar_zeros(grid: Grid) -> Self {
        Self::zeros(grid, 1)
    }

    pub fn vector_zeros(grid: Grid) -> Self {
        Self::zeros(grid, 2)
    }

    pub fn from_components(grid: Grid, comps: Vec<Vec<Complex64>>) -> Result<Self> {
        if comps.is_empty() || comps.len() > 2 {
            return Err(FerroError::ComponentMismatch {
                expected: 2,
                found: comps.len(),
            });
        }
        if comps.iter().any(|c| c.len() != grid.len()) {
            return Err(FerroError::GridMismatch);
        }
        Ok(Self { grid, comps })
    }

    /// Stacks two scalar fields into a vector field.
    pub fn stack(first: SpectralField, second: SpectralField) -> Self {
        assert_eq!(first.grid, second.grid, "stacked fields must share a grid");
        assert!(first.ncomp() == 1 && second.ncomp() == 1);
        let mut comps = first.comps;
        comps.extend(second.comps);
        Self {
            grid: first.grid,
            comps,
        }
    }

    /// Builds a field mode by mode from the wavevector.
    pub fn from_fn(grid: Grid, ncomp: usize, f: impl Fn(usize, (f64, f64)) -> Complex64) -> Self {
        let mut out = Self::zeros(grid, ncomp);
        for (c, comp) in out.comps.iter_mut().enumerate() {
            for (idx, v) in comp.iter_mut().enumerate() {
                *v = f(c, grid.xi(idx));
            }
        }
        out
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn ncomp(&self) -> usize {
        self.comps.len()
    }

    pub fn is_vector(&self) -> bool {
        self.comps.len() == 2
    }

    pub fn comp(&self, c: usize) -> &[Complex64] {
        &self.comps[c]
    }

    pub fn comp_mut(&mut self, c: usize) -> &mut [Complex64] {
        &mut self.comps[c]
    }

    pub fn components(&self) -> &[Vec<Complex64>] {
        &self.comps
    }

    /// Copy of one component as a scalar field.
    pub fn component(&self, c: usize) -> SpectralField {
        Self {
            grid: self.grid,
            comps: vec![self.comps[c].clone()],
        }
    }

    pub fn into_components(self) -> Vec<Vec<Complex64>> {
        self.comps
    }

    /// Coefficient at integer wavevector `(k1, k2)`, zero when not carried.
    pub fn coeff(&self, c: usize, k1: i64, k2: i64) -> Complex64 {
        self.grid.index_of(k1, k2).map_or(ZERO, |idx| self.comps[c][idx])
    }

    /// Adds `value` at `k` and its conjugate at `-k`, keeping the field real.
    pub fn add_real_mode(&mut self, c: usize, k1: i64, k2: i64, value: Complex64) {
        let idx = self
            .grid
            .index_of(k1, k2)
            .unwrap_or_else(|| panic!("mode ({k1}, {k2}) is not carried by the grid"));
        let partner = self.grid.partner(idx);
        if partner == idx {
            self.comps[c][idx] += value.re;
        } else {
            self.comps[c][idx] += value;
            self.comps[c][partner] += value.conj();
        }
    }

    fn check_compatible(&self, other: &SpectralField) {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        assert_eq!(self.ncomp(), other.ncomp(), "component counts differ");
    }

    pub fn scale(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.scale_in_place(a);
        out
    }

    pub fn scale_in_place(&mut self, a: f64) {
        for comp in &mut self.comps {
            comp.iter_mut().for_each(|v| *v *= a);
        }
    }

    /// `self += a·other`.
    pub fn axpy(&mut self, a: f64, other: &SpectralField) {
        self.check_compatible(other);
        for (dst, src) in self.comps.iter_mut().zip(&other.comps) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s * a;
            }
        }
    }

    pub fn add(&self, other: &SpectralField) -> Self {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &SpectralField) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// `Σ|c|²·L²`, the squared L² norm by Parseval.
    pub fn norm2(&self) -> f64 {
        self.grid.area()
            * self
                .comps
                .iter()
                .flat_map(|c| c.iter())
                .map(|v| v.norm_sqr())
                .sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.norm2().sqrt()
    }

    /// Real L² inner product.
    pub fn inner(&self, other: &SpectralField) -> f64 {
        self.check_compatible(other);
        let mut acc = 0.0;
        for (a, b) in self.comps.iter().zip(&other.comps) {
            for (x, y) in a.iter().zip(b) {
                acc += (x * y.conj()).re;
            }
        }
        acc * self.grid.area()
    }

    pub fn max_abs(&self) -> f64 {
        self.comps
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.comps
            .iter()
            .flat_map(|c| c.iter())
            .all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Largest `|c(ξ)|` over the mean (ξ = 0) of all components.
    pub fn mean_abs(&self) -> f64 {
        self.comps.iter().fold(0.0, |m, c| m.max(c[0].norm()))
    }

    pub fn remove_mean(&mut self) {
        for comp in &mut self.comps {
            comp[0] = ZERO;
        }
    }

    /// `max |c(-ξ) - conj c(ξ)|` over all modes and components.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for comp in &self.comps {
            for (idx, v) in comp.iter().enumerate() {
                let p = self.grid.partner(idx);
                worst = worst.max((comp[p] - v.conj()).norm());
            }
        }
        worst
    }

    /// Projects onto exactly Hermitian spectra.
    pub fn symmetrize(&mut self) {
        for comp in &mut self.comps {
            for idx in 0..comp.len() {
                let p = self.grid.partner(idx);
                if p < idx {
                    continue;
                }
                if p == idx {
                    comp[idx] = Complex64::new(comp[idx].re, 0.0);
                } else {
                    let avg = (comp[idx] + comp[p].conj()) * 0.5;
                    comp[idx] = avg;
                    comp[p] = avg.conj();
                }
            }
        }
    }

    /// Applies a per-mode map to every component.
    pub fn map_modes(&self, f: impl Fn(usize, Complex64) -> Complex64) -> Self {
        let mut out = self.clone();
        for comp in &mut out.comps {
            for (idx, v) in comp.iter_mut().enumerate() {
                *v = f(idx, *v);
            }
        }
        out
    }

    /// Multiplies every component by a real Fourier multiplier.
    pub fn multiply(&self, m: impl Fn(usize) -> f64) -> Self {
        self.map_modes(|idx, v| v * m(idx))
    }
}

/// Real samples at the collocation points, row-major with `x2` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalField {
    grid: Grid,
    comps: Vec<Vec<f64>>,
}

impl PhysicalField {
    pub fn zeros(grid: Grid, ncomp: usize) -> Self {
        assert!(ncomp == 1 || ncomp == 2, "fields have 1 or 2 components");
        Self {
            grid,
            comps: vec![vec![0.0; grid.len()]; ncomp],
        }
    }

    pub fn from_components(grid: Grid, comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.is_empty() || comps.len() > 2 {
            return Err(FerroError::ComponentMismatch {
                expected: 2,
                found: comps.len(),
            });
        }
        if comps.iter().any(|c| c.len() != grid.len()) {
            return Err(FerroError::GridMismatch);
        }
        if comps.iter().flatten().any(|v| !v.is_finite()) {
            return Err(FerroError::Corrupted("non-finite sample".into()));
        }
        Ok(Self { grid, comps })
    }

    /// Samples `f(component, x1, x2)` at every collocation point.
    pub fn from_fn(grid: Grid, ncomp: usize, f: impl Fn(usize, f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(grid, ncomp);
        for (c, comp) in out.comps.iter_mut().enumerate() {
            for i1 in 0..grid.n1 {
                for i2 in 0..grid.n2 {
                    let (x1, x2) = grid.point(i1, i2);
                    comp[i1 * grid.n2 + i2] = f(c, x1, x2);
                }
            }
        }
        out
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn ncomp(&self) -> usize {
        self.comps.len()
    }

    pub fn comp(&self, c: usize) -> &[f64] {
        &self.comps[c]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.comps
    }

    pub fn into_components(self) -> Vec<Vec<f64>> {
        self.comps
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `∫|f|²` by the rectangle rule, which is exact for trigonometric
    /// polynomials resolved by the grid.
    pub fn quadrature_norm2(&self) -> f64 {
        let (d1, d2) = self.grid.spacing();
        self.comps.iter().flatten().map(|v| v * v).sum::<f64>() * d1 * d2
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

fn fft2_in_place(data: &mut [Complex64], n1: usize, n2: usize, inverse: bool) {
    plan(n2, inverse).process(data);
    let mut t = vec![ZERO; n1 * n2];
    for i1 in 0..n1 {
        for i2 in 0..n2 {
            t[i2 * n1 + i1] = data[i1 * n2 + i2];
        }
    }
    plan(n1, inverse).process(&mut t);
    for i2 in 0..n2 {
        for i1 in 0..n1 {
            data[i1 * n2 + i2] = t[i2 * n1 + i1];
        }
    }
}

pub(crate) fn real_to_spectral(grid: &Grid, values: &[f64]) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2_in_place(&mut data, grid.n1, grid.n2, false);
    let norm = 1.0 / grid.len() as f64;
    data.iter_mut().for_each(|v| *v *= norm);
    data
}

pub(crate) fn spectral_to_real(grid: &Grid, coeffs: &[Complex64]) -> Vec<f64> {
    let mut data = coeffs.to_vec();
    fft2_in_place(&mut data, grid.n1, grid.n2, true);
    data.into_iter().map(|v| v.re).collect()
}

/// Forward transforms of many real arrays, in parallel.
pub(crate) fn real_to_spectral_many(grid: &Grid, values: &[&[f64]]) -> Vec<Vec<Complex64>> {
    values.par_iter().map(|v| real_to_spectral(grid, v)).collect()
}

/// Inverse transforms of many coefficient arrays, in parallel.
pub(crate) fn spectral_to_real_many(grid: &Grid, coeffs: &[&[Complex64]]) -> Vec<Vec<f64>> {
    coeffs.par_iter().map(|c| spectral_to_real(grid, c)).collect()
}

pub fn forward_transform(f: &PhysicalField) -> SpectralField {
    let slices: Vec<&[f64]> = f.comps.iter().map(|c| c.as_slice()).collect();
    SpectralField {
        grid: f.grid,
        comps: real_to_spectral_many(&f.grid, &slices),
    }
}

/// Inverse transform; rejects spectra whose Hermitian defect exceeds
/// [`HERMITIAN_TOLERANCE`] relative to the largest coefficient.
pub fn inverse_transform(f: &SpectralField) -> Result<PhysicalField> {
    let defect = f.hermitian_defect();
    if defect > HERMITIAN_TOLERANCE * f.max_abs() {
        return Err(FerroError::NotHermitian { defect });
    }
    let slices: Vec<&[Complex64]> = f.comps.iter().map(|c| c.as_slice()).collect();
    Ok(PhysicalField {
        grid: f.grid,
        comps: spectral_to_real_many(&f.grid, &slices),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X1,
    X2,
}

fn expect_vector(v: &SpectralField, op: &str) {
    assert!(v.is_vector(), "{op} expects a two-component field");
}

fn expect_scalar(v: &SpectralField, op: &str) {
    assert!(v.ncomp() == 1, "{op} expects a scalar field");
}

/// Multiplication by `iξ_axis`.
pub fn derivative(f: &SpectralField, axis: Axis) -> SpectralField {
    let g = *f.grid();
    f.map_modes(|idx, v| {
        let (a, b) = g.xi_odd(idx);
        let x = match axis {
            Axis::X1 => a,
            Axis::X2 => b,
        };
        Complex64::new(-x * v.im, x * v.re)
    })
}

/// Multiplication by `-|ξ|²`.
pub fn laplacian(f: &SpectralField) -> SpectralField {
    let g = *f.grid();
    f.multiply(|idx| -g.xi_norm2(idx))
}

/// Multiplication by `-|ξ|⁻²`, with the mean mapped to zero.
pub fn inverse_laplacian(f: &SpectralField) -> SpectralField {
    let g = *f.grid();
    f.multiply(|idx| {
        let k2 = g.xi_norm2(idx);
        if k2 == 0.0 {
            0.0
        } else {
            -1.0 / k2
        }
    })
}

pub fn gradient(f: &SpectralField) -> SpectralField {
    expect_scalar(f, "gradient");
    SpectralField::stack(derivative(f, Axis::X1), derivative(f, Axis::X2))
}

pub fn divergence(v: &SpectralField) -> SpectralField {
    expect_vector(v, "divergence");
    let g = *v.grid();
    let mut out = vec![ZERO; g.len()];
    for (idx, o) in out.iter_mut().enumerate() {
        let (a, b) = g.xi_odd(idx);
        let s = v.comps[0][idx] * a + v.comps[1][idx] * b;
        *o = Complex64::new(-s.im, s.re);
    }
    SpectralField {
        grid: g,
        comps: vec![out],
    }
}

/// `∂1 v2 - ∂2 v1`.
pub fn curl2d(v: &SpectralField) -> SpectralField {
    expect_vector(v, "curl2d");
    let g = *v.grid();
    let mut out = vec![ZERO; g.len()];
    for (idx, o) in out.iter_mut().enumerate() {
        let (a, b) = g.xi_odd(idx);
        let s = v.comps[1][idx] * a - v.comps[0][idx] * b;
        *o = Complex64::new(-s.im, s.re);
    }
    SpectralField {
        grid: g,
        comps: vec![out],
    }
}

/// `(∂2 ω, -∂1 ω)`.
pub fn perp_grad(w: &SpectralField) -> SpectralField {
    expect_scalar(w, "perp_grad");
    let d1 = derivative(w, Axis::X1);
    let d2 = derivative(w, Axis::X2);
    SpectralField::stack(d2, d1.scale(-1.0))
}

/// Per-mode `(ξξᵀ/|ξ|²)v̂`, the projection onto gradients.
pub fn q_project(v: &SpectralField) -> SpectralField {
    expect_vector(v, "q_project");
    let g = *v.grid();
    let mut out = SpectralField::vector_zeros(g);
    for idx in 0..g.len() {
        let (a, b) = g.xi_odd(idx);
        let k2 = a * a + b * b;
        if k2 == 0.0 {
            continue;
        }
        let dot = (v.comps[0][idx] * a + v.comps[1][idx] * b) / k2;
        out.comps[0][idx] = dot * a;
        out.comps[1][idx] = dot * b;
    }
    out
}

/// Leray projection `v - Qv` onto divergence-free fields.
pub fn leray_project(v: &SpectralField) -> SpectralField {
    v.sub(&q_project(v))
}

/// Keeps modes with `0 < |ξ| <= radius`.
pub fn jn_truncate(f: &SpectralField, radius: f64) -> SpectralField {
    assert!(radius > 0.0, "truncation radius must be positive");
    let g = *f.grid();
    let r2 = radius * radius;
    f.multiply(|idx| {
        let k2 = g.xi_norm2(idx);
        if k2 == 0.0 || k2 > r2 {
            0.0
        } else {
            1.0
        }
    })
}

/// Zeroes modes with `|k_i| > fraction·n_i/2`.
pub fn dealias(f: &SpectralField) -> SpectralField {
    let g = *f.grid();
    f.multiply(|idx| if g.keeps_dealiased(idx) { 1.0 } else { 0.0 })
}

/// Copies the modes carried by both grids (same box length); Nyquist modes
/// of either grid are dropped.
pub fn resample(f: &SpectralField, target: Grid) -> SpectralField {
    assert!(f.grid().same_box(&target), "resampling needs equal box lengths");
    let src = *f.grid();
    let mut out = SpectralField::zeros(target, f.ncomp());
    for idx in 0..src.len() {
        if src.is_nyquist(idx) {
            continue;
        }
        let (k1, k2) = src.wavenumber(idx);
        if let Some(t) = target.index_of(k1, k2) {
            if target.is_nyquist(t) {
                continue;
            }
            for c in 0..f.ncomp() {
                out.comps[c][t] = f.comps[c][idx];
            }
        }
    }
    out
}

/// Product of two scalar fields formed on the grid itself (aliased).
pub fn grid_product(a: &SpectralField, b: &SpectralField) -> SpectralField {
    expect_scalar(a, "grid_product");
    expect_scalar(b, "grid_product");
    assert_eq!(a.grid, b.grid, "fields live on different grids");
    let g = a.grid;
    let p = spectral_to_real_many(&g, &[&a.comps[0], &b.comps[0]]);
    let prod: Vec<f64> = p[0].iter().zip(&p[1]).map(|(x, y)| x * y).collect();
    SpectralField {
        grid: g,
        comps: vec![real_to_spectral(&g, &prod)],
    }
}

/// Grid padded by the 3/2 rule (rounded up to even sizes).
pub fn padded_grid(g: &Grid) -> Grid {
    let pad = |n: usize| {
        let m = (3 * n).div_ceil(2);
        m + m % 2
    };
    Grid::new(pad(g.n1), pad(g.n2), g.length)
        .expect("padding a valid grid")
        .with_dealias_fraction(g.dealias_fraction)
        .expect("fraction already validated")
}

/// Alias-free product of two scalar fields: formed on the 3/2-padded grid
/// and truncated back. Exact for inputs without Nyquist content.
pub fn exact_product(a: &SpectralField, b: &SpectralField) -> SpectralField {
    expect_scalar(a, "exact_product");
    expect_scalar(b, "exact_product");
    assert_eq!(a.grid, b.grid, "fields live on different grids");
    let fine = padded_grid(&a.grid);
    let pa = resample(a, fine);
    let pb = resample(b, fine);
    resample(&grid_product(&pa, &pb), a.grid)
}

/// `v·∇w` for a vector `v` and a scalar or vector `w`, alias-free.
pub fn advect(v: &SpectralField, w: &SpectralField) -> SpectralField {
    expect_vector(v, "advect");
    let v1 = v.component(0);
    let v2 = v.component(1);
    let parts: Vec<SpectralField> = (0..w.ncomp())
        .map(|c| {
            let wc = w.component(c);
            exact_product(&v1, &derivative(&wc, Axis::X1)).add(&exact_product(&v2, &derivative(&wc, Axis::X2)))
        })
        .collect();
    let comps = parts.into_iter().flat_map(|p| p.comps).collect();
    SpectralField { grid: v.grid, comps }
}
