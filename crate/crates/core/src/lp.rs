//! Homogeneous Littlewood–Paley calculus on the periodic grid: dyadic blocks,
//! Sobolev norms, Bony paraproducts and numerical probes of the commutator and
//! product inequalities that drive the regularity estimates.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{FerroError, Result};
use crate::random::random_modes;
use crate::spectral::{
    derivative, padded_grid, real_to_spectral, resample, spectral_to_real, Axis, Grid, SpectralField,
};

/// Smooth radial profile: 1 on `[0, 1/2]`, 0 on `[2, ∞)`, non-increasing.
pub fn chi(r: f64) -> f64 {
    if r <= 0.5 {
        return 1.0;
    }
    if r >= 2.0 {
        return 0.0;
    }
    let g = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    let a = g(2.0 - r);
    let b = g(r - 0.5);
    a / (a + b)
}

#[inline]
fn pow2(j: i32) -> f64 {
    2f64.powi(j)
}

/// Block weight `χ(r/2^{j+1}) - χ(r/2^j)`.
#[inline]
pub fn phi(j: i32, r: f64) -> f64 {
    chi(r / pow2(j + 1)) - chi(r / pow2(j))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DyadicPartition {
    grid: Grid,
    j_min: i32,
    j_max: i32,
}

impl DyadicPartition {
    /// Block range covering every resolved nonzero mode.
    pub fn new(grid: Grid) -> Self {
        let j_min = grid.fundamental().log2().floor() as i32 - 1;
        let j_max = grid.max_xi_norm().log2().ceil() as i32 + 1;
        Self { grid, j_min, j_max }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn j_min(&self) -> i32 {
        self.j_min
    }

    pub fn j_max(&self) -> i32 {
        self.j_max
    }

    pub fn blocks(&self) -> std::ops::RangeInclusive<i32> {
        self.j_min..=self.j_max
    }

    fn check(&self, j: i32) -> Result<()> {
        if j < self.j_min || j > self.j_max {
            return Err(FerroError::BlockOutOfRange {
                j,
                j_min: self.j_min,
                j_max: self.j_max,
            });
        }
        Ok(())
    }

    /// Whether the whole support annulus `[2^{j-1}, 2^{j+2}]` of block `j`
    /// lies inside the grid's inscribed disc of non-Nyquist modes.
    pub fn is_resolved(&self, j: i32) -> bool {
        let nmin = self.grid.n1().min(self.grid.n2());
        let inscribed = (nmin / 2 - 1) as f64 * self.grid.fundamental();
        j >= self.j_min && j <= self.j_max && pow2(j + 2) <= inscribed && pow2(j + 2) > self.grid.fundamental()
    }
}

fn radial_multiplier(f: &SpectralField, w: impl Fn(f64) -> f64) -> SpectralField {
    let g = *f.grid();
    f.multiply(|idx| {
        let r = g.xi_norm2(idx).sqrt();
        if r == 0.0 {
            0.0
        } else {
            w(r)
        }
    })
}

/// `Δ̇_j f`, multiplier `φ_j(ξ)`.
pub fn dyadic_block(f: &SpectralField, j: i32, part: &DyadicPartition) -> Result<SpectralField> {
    part.check(j)?;
    Ok(radial_multiplier(f, |r| phi(j, r)))
}

/// `Ṡ_j f`, multiplier `χ(ξ/2^j)` (zero mode removed).
pub fn low_cutoff(f: &SpectralField, j: i32, _part: &DyadicPartition) -> SpectralField {
    radial_multiplier(f, |r| chi(r / pow2(j)))
}

/// `‖Δ̇_j f‖²_{L²}`.
pub fn block_norm2(f: &SpectralField, j: i32) -> f64 {
    let g = *f.grid();
    let mut acc = 0.0;
    for comp in f.components() {
        for (idx, v) in comp.iter().enumerate() {
            let r = g.xi_norm2(idx).sqrt();
            if r > 0.0 {
                let w = phi(j, r);
                acc += w * w * v.norm_sqr();
            }
        }
    }
    acc * g.area()
}

/// Regularity exponent, bounded by 8 in magnitude.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SobolevIndex(f64);

impl SobolevIndex {
    pub fn new(s: f64) -> Result<Self> {
        if !(s.is_finite() && s.abs() <= 8.0) {
            return Err(FerroError::InvalidParameter(format!(
                "Sobolev index {s} must satisfy |s| <= 8"
            )));
        }
        Ok(Self(s))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// `L²Σ_{ξ≠0} |ξ|^{2s} Re(f̂ ĝ*)`, summed over components.
pub fn sobolev_inner(f: &SpectralField, h: &SpectralField, s: f64) -> f64 {
    assert_eq!(f.grid(), h.grid(), "fields live on different grids");
    assert_eq!(f.ncomp(), h.ncomp(), "component counts differ");
    let g = *f.grid();
    let mut acc = 0.0;
    for (a, b) in f.components().iter().zip(h.components()) {
        for idx in 1..g.len() {
            let k2 = g.xi_norm2(idx);
            acc += k2.powf(s) * (a[idx] * b[idx].conj()).re;
        }
    }
    acc * g.area()
}

pub fn sobolev_norm2(f: &SpectralField, s: f64) -> f64 {
    let g = *f.grid();
    let mut acc = 0.0;
    for comp in f.components() {
        for (idx, v) in comp.iter().enumerate().skip(1) {
            acc += g.xi_norm2(idx).powf(s) * v.norm_sqr();
        }
    }
    acc * g.area()
}

/// `‖∇f‖²_{Ḣs}` with the grid's derivative convention.
pub fn gradient_norm2(f: &SpectralField, s: f64) -> f64 {
    let g = *f.grid();
    let mut acc = 0.0;
    for comp in f.components() {
        for (idx, v) in comp.iter().enumerate().skip(1) {
            let (a, b) = g.xi_odd(idx);
            acc += g.xi_norm2(idx).powf(s) * (a * a + b * b) * v.norm_sqr();
        }
    }
    acc * g.area()
}

pub fn sobolev_norm_direct(f: &SpectralField, s: SobolevIndex) -> f64 {
    sobolev_norm2(f, s.0).sqrt()
}

/// `(Σ_j 2^{2js}‖Δ̇_j f‖²)^{1/2}`.
pub fn sobolev_norm_lp(f: &SpectralField, s: SobolevIndex, part: &DyadicPartition) -> f64 {
    part.blocks()
        .map(|j| pow2(2 * j).powf(s.0) * block_norm2(f, j))
        .sum::<f64>()
        .sqrt()
}

/// Σ of pointwise products of scalar pairs, formed alias-free on the padded
/// grid and truncated back once.
fn sum_of_products(pairs: &[(SpectralField, SpectralField)]) -> SpectralField {
    let base = *pairs[0].0.grid();
    let fine = padded_grid(&base);
    let products: Vec<Vec<f64>> = pairs
        .par_iter()
        .map(|(a, b)| {
            let pa = spectral_to_real(&fine, resample(a, fine).comp(0));
            let pb = spectral_to_real(&fine, resample(b, fine).comp(0));
            pa.iter().zip(&pb).map(|(x, y)| x * y).collect()
        })
        .collect();
    let mut acc = vec![0.0; fine.len()];
    for p in &products {
        for (a, v) in acc.iter_mut().zip(p) {
            *a += v;
        }
    }
    let spec =
        SpectralField::from_components(fine, vec![real_to_spectral(&fine, &acc)]).expect("padded grid sizes agree");
    resample(&spec, base)
}

fn expect_scalar_pair(a: &SpectralField, b: &SpectralField) {
    assert!(a.ncomp() == 1 && b.ncomp() == 1, "paraproducts act on scalar fields");
    assert_eq!(a.grid(), b.grid(), "fields live on different grids");
}

/// `Ṫ_a b = Σ_j Ṡ_{j-1}a Δ̇_j b`.
pub fn paraproduct(a: &SpectralField, b: &SpectralField, part: &DyadicPartition) -> SpectralField {
    expect_scalar_pair(a, b);
    let pairs: Vec<_> = part
        .blocks()
        .map(|j| (low_cutoff(a, j - 1, part), radial_multiplier(b, |r| phi(j, r))))
        .collect();
    sum_of_products(&pairs)
}

/// `Ṙ(a, b) = Σ_j Σ_{|i|<=1} Δ̇_j a Δ̇_{j+i} b`.
pub fn remainder(a: &SpectralField, b: &SpectralField, part: &DyadicPartition) -> SpectralField {
    expect_scalar_pair(a, b);
    let mut pairs = Vec::new();
    for j in part.blocks() {
        let aj = radial_multiplier(a, |r| phi(j, r));
        for i in -1..=1 {
            let q = j + i;
            if q < part.j_min || q > part.j_max {
                continue;
            }
            pairs.push((aj.clone(), radial_multiplier(b, |r| phi(q, r))));
        }
    }
    sum_of_products(&pairs)
}

/// `Ṫ'_b a = Σ_j Δ̇_j a Ṡ_{j+2} b`, so that `ab = Ṫ_a b + Ṫ'_b a`.
pub fn paraproduct_remainder(a: &SpectralField, b: &SpectralField, part: &DyadicPartition) -> SpectralField {
    expect_scalar_pair(a, b);
    let pairs: Vec<_> = part
        .blocks()
        .map(|j| (radial_multiplier(a, |r| phi(j, r)), low_cutoff(b, j + 2, part)))
        .collect();
    sum_of_products(&pairs)
}

/// `‖∇u‖ / (2^j ‖u‖)`.
pub fn bernstein_ratio(u: &SpectralField, j: i32) -> f64 {
    let n = u.norm2();
    if n == 0.0 {
        return 0.0;
    }
    (gradient_norm2(u, 0.0) / n).sqrt() / pow2(j)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BernsteinStats {
    pub j: i32,
    pub min: f64,
    pub max: f64,
    pub ratios: Vec<f64>,
}

/// Random block-supported fields (random coefficients weighted by `φ_j`).
pub fn random_block_field(rng: &mut ChaCha8Rng, j: i32, part: &DyadicPartition) -> SpectralField {
    let g = part.grid;
    let c = g.fundamental();
    let reach = (pow2(j + 2) / c).ceil() as i64;
    random_modes(rng, g, 1, reach, |k1, k2| {
        let r = c * ((k1 * k1 + k2 * k2) as f64).sqrt();
        phi(j, r)
    })
}

pub fn bernstein_probe(j: i32, trials: usize, seed: u64, part: &DyadicPartition) -> Result<BernsteinStats> {
    if !part.is_resolved(j) {
        return Err(FerroError::UnresolvedBlock { j });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ratios: Vec<f64> = (0..trials)
        .map(|_| bernstein_ratio(&random_block_field(&mut rng, j, part), j))
        .collect();
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(BernsteinStats { j, min, max, ratios })
}

/// Alias-free `v·∇B` for a vector `v` and scalar or vector `B`.
fn transport(v: &SpectralField, b: &SpectralField) -> SpectralField {
    let comps = (0..b.ncomp())
        .map(|c| {
            let bc = b.component(c);
            let pairs = [
                (v.component(0), derivative(&bc, Axis::X1)),
                (v.component(1), derivative(&bc, Axis::X2)),
            ];
            sum_of_products(&pairs).into_components().remove(0)
        })
        .collect();
    SpectralField::from_components(*v.grid(), comps).expect("same grid")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommutatorReport {
    pub theta: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// `⟨v·∇B, B⟩_{Ḣϑ}` against `‖∇v‖ ‖∇B‖_{Ḣϑ} ‖B‖_{Ḣϑ}`.
pub fn commutator_probe(v: &SpectralField, b: &SpectralField, theta: f64) -> Result<CommutatorReport> {
    if !v.is_vector() {
        return Err(FerroError::ComponentMismatch {
            expected: 2,
            found: v.ncomp(),
        });
    }
    if !(theta > -1.0) {
        return Err(FerroError::InvalidParameter(format!(
            "commutator index {theta} must exceed -1"
        )));
    }
    let div = crate::spectral::divergence(v).norm();
    let grad_v = gradient_norm2(v, 0.0).sqrt();
    if div > 1e-10 * grad_v.max(1.0) {
        return Err(FerroError::NotSolenoidal(div));
    }
    let lhs = sobolev_inner(&transport(v, b), b, theta);
    let rhs = grad_v * gradient_norm2(b, theta).sqrt() * sobolev_norm2(b, theta).sqrt();
    Ok(CommutatorReport {
        theta,
        lhs,
        rhs,
        ratio: if rhs > 0.0 { lhs / rhs } else { 0.0 },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeKind {
    Lorentz,
    MCrossH,
    TsCommutator,
    Higreg,
}

impl ProbeKind {
    pub const ALL: [ProbeKind; 4] = [
        ProbeKind::Lorentz,
        ProbeKind::MCrossH,
        ProbeKind::TsCommutator,
        ProbeKind::Higreg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProbeKind::Lorentz => "lorentz",
            ProbeKind::MCrossH => "m_cross_h",
            ProbeKind::TsCommutator => "ts_commutator",
            ProbeKind::Higreg => "higreg",
        }
    }
}

impl fmt::Display for ProbeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProbeKind {
    type Err = FerroError;

    fn from_str(s: &str) -> Result<Self> {
        ProbeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| FerroError::UnknownProbe(s.to_string()))
    }
}

/// Inputs of an inequality probe. `lorentz` reads `u, m, h, g`; `m_cross_h`
/// reads `omega, m, h, g`; the commutator kinds read `v, w`. Here `g` is the
/// applied-field potential gradient `∇Δ⁻¹F`.
#[derive(Debug, Clone, Default)]
pub struct ProbeFields {
    pub u: Option<SpectralField>,
    pub omega: Option<SpectralField>,
    pub m: Option<SpectralField>,
    pub h: Option<SpectralField>,
    pub g: Option<SpectralField>,
    pub v: Option<SpectralField>,
    pub w: Option<SpectralField>,
}

/// One right-hand-side term and its degree of homogeneity in the inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhsTerm {
    pub value: f64,
    pub degree: i32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub kind: ProbeKind,
    pub s: f64,
    pub eps: f64,
    pub lhs: f64,
    pub lhs_degree: i32,
    pub terms: Vec<RhsTerm>,
    pub rhs: f64,
    pub ratio: f64,
}

impl ProbeReport {
    fn new(kind: ProbeKind, s: f64, eps: f64, lhs: f64, lhs_degree: i32, terms: Vec<RhsTerm>) -> Self {
        let rhs: f64 = terms.iter().map(|t| t.value).sum();
        Self {
            kind,
            s,
            eps,
            lhs,
            lhs_degree,
            rhs,
            ratio: if rhs > 0.0 { lhs / rhs } else { 0.0 },
            terms,
        }
    }

    /// Ratio expected after scaling every input by `lambda`.
    pub fn predicted_ratio(&self, lambda: f64) -> f64 {
        let rhs: f64 = self.terms.iter().map(|t| lambda.powi(t.degree) * t.value).sum();
        if rhs > 0.0 {
            lambda.powi(self.lhs_degree) * self.lhs / rhs
        } else {
            0.0
        }
    }
}

fn need<'a>(f: &'a Option<SpectralField>, name: &str, kind: ProbeKind) -> Result<&'a SpectralField> {
    f.as_ref()
        .ok_or_else(|| FerroError::InvalidParameter(format!("probe {kind} needs field `{name}`")))
}

/// Evaluates one product or commutator inequality with unit constant and
/// returns its left side, right-side terms and ratio.
pub fn inequality_probe(
    kind: ProbeKind,
    fields: &ProbeFields,
    s: f64,
    eps: f64,
    part: &DyadicPartition,
) -> Result<ProbeReport> {
    if !(s > 0.0 && s <= 4.0) {
        return Err(FerroError::InvalidParameter(format!(
            "probe index {s} must lie in (0, 4]"
        )));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(FerroError::InvalidParameter(format!(
            "probe weight {eps} must lie in (0, 1)"
        )));
    }
    let l2 = |f: &SpectralField| sobolev_norm2(f, 0.0);
    let grad = |f: &SpectralField| gradient_norm2(f, 0.0);
    let term = |value: f64, degree: i32| RhsTerm { value, degree };
    match kind {
        ProbeKind::Lorentz => {
            let u = need(&fields.u, "u", kind)?;
            let m = need(&fields.m, "m", kind)?;
            let h = need(&fields.h, "h", kind)?;
            let g = need(&fields.g, "g", kind)?;
            let lhs = sobolev_inner(&transport(m, h), u, s);
            let us = sobolev_norm2(u, s);
            let ms = sobolev_norm2(m, s);
            let terms = vec![
                term(eps * gradient_norm2(u, s), 2),
                term(eps * gradient_norm2(m, s), 2),
                term(grad(m) * (us + ms) / eps, 4),
                term(l2(m) * grad(m) * (us + ms) / eps, 6),
                term(grad(g) * (us + ms) / eps, 4),
                term(gradient_norm2(g, s), 2),
            ];
            Ok(ProbeReport::new(kind, s, eps, lhs, 3, terms))
        }
        ProbeKind::MCrossH => {
            let w = need(&fields.omega, "omega", kind)?;
            let m = need(&fields.m, "m", kind)?;
            let h = need(&fields.h, "h", kind)?;
            let g = need(&fields.g, "g", kind)?;
            let cross = sum_of_products(&[
                (m.component(0), h.component(1)),
                (m.component(1), h.component(0).scale(-1.0)),
            ]);
            let lhs = sobolev_inner(&cross, w, s);
            let ms = sobolev_norm2(m, s);
            let mm = l2(m) * grad(m);
            let terms = vec![
                term(eps * sobolev_norm2(w, s), 2),
                term(eps * gradient_norm2(m, s), 2),
                term(0.5 * eps * gradient_norm2(g, s), 2),
                term((mm + l2(h) * grad(h)) * ms / eps, 6),
                term(mm * sobolev_norm2(g, s) / eps, 6),
            ];
            Ok(ProbeReport::new(kind, s, eps, lhs, 3, terms))
        }
        ProbeKind::TsCommutator => {
            let v = need(&fields.v, "v", kind)?;
            let w = need(&fields.w, "w", kind)?;
            if v.ncomp() != 1 || w.ncomp() != 1 {
                return Err(FerroError::ComponentMismatch {
                    expected: 1,
                    found: v.ncomp().max(w.ncomp()),
                });
            }
            ts_commutator(v, w, s, eps, part)
        }
        ProbeKind::Higreg => {
            let v = need(&fields.v, "v", kind)?;
            let w = need(&fields.w, "w", kind)?;
            if !v.is_vector() {
                return Err(FerroError::ComponentMismatch {
                    expected: 2,
                    found: v.ncomp(),
                });
            }
            let lhs = higreg_lhs(v, w, s, part);
            let terms = vec![
                term(grad(v) * sobolev_norm2(w, s) / eps, 4),
                term(grad(w) * sobolev_norm2(v, s) / eps, 4),
                term(eps * gradient_norm2(w, s), 2),
            ];
            Ok(ProbeReport::new(kind, s, eps, lhs, 3, terms))
        }
    }
}

/// Worst block of `‖Δ̇_j(Ṫ_v w) - Ṡ_{j-1}v Δ̇_j w‖` against
/// `‖∇v‖ Σ_{|q-j|<=5} ‖Δ̇_q w‖`.
fn ts_commutator(
    v: &SpectralField,
    w: &SpectralField,
    s: f64,
    eps: f64,
    part: &DyadicPartition,
) -> Result<ProbeReport> {
    let tvw = paraproduct(v, w, part);
    let grad_v = gradient_norm2(v, 0.0).sqrt();
    let block_norms: Vec<f64> = part.blocks().map(|q| block_norm2(w, q).sqrt()).collect();
    let mut best = (0.0, 0.0, 0.0);
    for j in part.blocks() {
        let wj = dyadic_block(w, j, part)?;
        let local = sum_of_products(&[(low_cutoff(v, j - 1, part), wj)]);
        let lhs = dyadic_block(&tvw, j, part)?.sub(&local).norm();
        let near: f64 = part
            .blocks()
            .zip(&block_norms)
            .filter(|(q, _)| (q - j).abs() <= 5)
            .map(|(_, n)| n)
            .sum();
        let rhs = grad_v * near;
        if rhs > 0.0 && lhs / rhs > best.0 {
            best = (lhs / rhs, lhs, rhs);
        }
    }
    let terms = vec![RhsTerm {
        value: best.2,
        degree: 2,
    }];
    Ok(ProbeReport::new(ProbeKind::TsCommutator, s, eps, best.1, 2, terms))
}

/// `Σ_j 2^{2js}(I₁ʲ + I₂ʲ)` with
/// `I₁ʲ = ∫(Δ̇_j(Ṫ_v·∇w) - Ṡ_{j-1}v·∇Δ̇_j w)·Δ̇_j w` and
/// `I₂ʲ = ∫Δ̇_j(Ṫ'_{∇w} v)·Δ̇_j w`.
fn higreg_lhs(v: &SpectralField, w: &SpectralField, s: f64, part: &DyadicPartition) -> f64 {
    let axes = [Axis::X1, Axis::X2];
    let mut total = 0.0;
    for c in 0..w.ncomp() {
        let wc = w.component(c);
        let dw: Vec<SpectralField> = axes.iter().map(|&a| derivative(&wc, a)).collect();
        let mut para = SpectralField::scalar_zeros(*w.grid());
        let mut rem = SpectralField::scalar_zeros(*w.grid());
        for (k, dwk) in dw.iter().enumerate() {
            let vk = v.component(k);
            para.axpy(1.0, &paraproduct(&vk, dwk, part));
            rem.axpy(1.0, &paraproduct_remainder(&vk, dwk, part));
        }
        for j in part.blocks() {
            let wj = radial_multiplier(&wc, |r| phi(j, r));
            let local = sum_of_products(&[
                (low_cutoff(&v.component(0), j - 1, part), derivative(&wj, Axis::X1)),
                (low_cutoff(&v.component(1), j - 1, part), derivative(&wj, Axis::X2)),
            ]);
            let i1 = radial_multiplier(&para, |r| phi(j, r)).sub(&local).inner(&wj);
            let i2 = radial_multiplier(&rem, |r| phi(j, r)).inner(&wj);
            total += pow2(2 * j).powf(s) * (i1 + i2);
        }
    }
    total
}
