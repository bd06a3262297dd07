//! Fourier-space solution of `div(H + M) = F`, `curl H = 0` and audits of the
//! bounds the demagnetizing field obeys.
//!
//! Per mode, with `n = ξ/|ξ|`: `Ĥ = -n(n·M̂) - iξF̂/|ξ|²`, i.e. `H = -QM + G_F`
//! with `G_F = ∇Δ⁻¹F`. Odd multipliers use the Nyquist-free wavevector, so
//! modes whose odd wavevector vanishes carry no field.

use num_complex::Complex64;

use crate::error::{FerroError, Result};
use crate::lp::{gradient_norm2, sobolev_norm2};
use crate::spectral::{curl2d, divergence, q_project, SpectralField};

/// Relative tolerance on the mean of the applied field.
pub const COMPATIBILITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct MagnetostaticSolution {
    pub h: SpectralField,
    /// `∇Δ⁻¹F`.
    pub g_f: SpectralField,
}

fn check_inputs(m: &SpectralField, f: &SpectralField) -> Result<()> {
    if !m.is_vector() {
        return Err(FerroError::ComponentMismatch {
            expected: 2,
            found: m.ncomp(),
        });
    }
    if f.ncomp() != 1 {
        return Err(FerroError::ComponentMismatch {
            expected: 1,
            found: f.ncomp(),
        });
    }
    if m.grid() != f.grid() {
        return Err(FerroError::GridMismatch);
    }
    let mean = f.comp(0)[0].norm();
    if mean > COMPATIBILITY_TOLERANCE * f.max_abs() {
        return Err(FerroError::Compatibility(mean));
    }
    Ok(())
}

/// `G_F = ∇Δ⁻¹F`.
pub fn applied_gradient(f: &SpectralField) -> SpectralField {
    let g = *f.grid();
    let mut out = SpectralField::vector_zeros(g);
    for idx in 0..g.len() {
        let (a, b) = g.xi_odd(idx);
        let k2 = a * a + b * b;
        if k2 == 0.0 {
            continue;
        }
        let s = f.comp(0)[idx] / k2;
        let t = Complex64::new(s.im, -s.re); // -i·F̂/|ξ|²
        out.comp_mut(0)[idx] = t * a;
        out.comp_mut(1)[idx] = t * b;
    }
    out
}

pub fn solve_h(m: &SpectralField, f: &SpectralField) -> Result<MagnetostaticSolution> {
    check_inputs(m, f)?;
    let g_f = applied_gradient(f);
    let mut h = q_project(m);
    h.scale_in_place(-1.0);
    h.axpy(1.0, &g_f);
    h.remove_mean();
    Ok(MagnetostaticSolution { h, g_f })
}

/// Demagnetizing field of `M` alone, `-QM`.
pub fn demagnetizing_field(m: &SpectralField) -> SpectralField {
    q_project(m).scale(-1.0)
}

/// Residuals of the two constraints, relative to the input scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintResidual {
    pub ampere: f64,
    pub curl: f64,
}

/// `max|div(H+M) - F|` over modes with nonzero odd wavevector and
/// `max|curl H|`, both divided by `max(|ξ||M̂|, |F̂|)`.
pub fn constraint_residual(sol: &MagnetostaticSolution, m: &SpectralField, f: &SpectralField) -> ConstraintResidual {
    let g = *m.grid();
    let div = divergence(&sol.h.add(m));
    let curl = curl2d(&sol.h);
    let mut ampere: f64 = 0.0;
    let mut scale: f64 = f.max_abs();
    for idx in 0..g.len() {
        let (a, b) = g.xi_odd(idx);
        let k = (a * a + b * b).sqrt();
        scale = scale.max(k * m.comp(0)[idx].norm()).max(k * m.comp(1)[idx].norm());
        if k > 0.0 {
            ampere = ampere.max((div.comp(0)[idx] - f.comp(0)[idx]).norm());
        }
    }
    if scale == 0.0 {
        return ConstraintResidual {
            ampere,
            curl: curl.max_abs(),
        };
    }
    ConstraintResidual {
        ampere: ampere / scale,
        curl: curl.max_abs() / scale,
    }
}

/// Worst per-mode slack of `|Ĥ|² <= 2|M̂|² + |ξ|⁻²|F̂|²` and, for reference,
/// of the bound with constant 2 on both terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointwiseSlack {
    /// `min_ξ (2|M̂|² + |ξ|⁻²|F̂|² - |Ĥ|²)` over `ξ ≠ 0`.
    pub min_slack: f64,
    /// `min_ξ (2|M̂|² + 2|ξ|⁻²|F̂|² - |Ĥ|²)`.
    pub min_sharp_slack: f64,
    /// Largest right-hand side, the scale for round-off tolerances.
    pub scale: f64,
    /// Number of modes where the stated bound fails beyond `1e-12·scale`.
    pub violations: usize,
}

impl PointwiseSlack {
    pub fn holds(&self) -> bool {
        self.min_slack >= -1e-12 * self.scale
    }
}

pub fn pointwise_bound_check(sol: &MagnetostaticSolution, m: &SpectralField, f: &SpectralField) -> PointwiseSlack {
    let g = *m.grid();
    let mut rows = Vec::with_capacity(g.len());
    for idx in 1..g.len() {
        let (a, b) = g.xi_odd(idx);
        let mut k2 = a * a + b * b;
        if k2 == 0.0 {
            k2 = g.xi_norm2(idx);
        }
        let mm = m.comp(0)[idx].norm_sqr() + m.comp(1)[idx].norm_sqr();
        let ff = f.comp(0)[idx].norm_sqr() / k2;
        let hh = sol.h.comp(0)[idx].norm_sqr() + sol.h.comp(1)[idx].norm_sqr();
        rows.push((2.0 * mm + ff, 2.0 * mm + ff - hh, 2.0 * mm + 2.0 * ff - hh));
    }
    let scale = rows.iter().fold(0.0f64, |s, r| s.max(r.0));
    let min_slack = rows.iter().fold(f64::INFINITY, |s, r| s.min(r.1));
    let min_sharp_slack = rows.iter().fold(f64::INFINITY, |s, r| s.min(r.2));
    let violations = rows.iter().filter(|r| r.1 < -1e-12 * scale).count();
    PointwiseSlack {
        min_slack,
        min_sharp_slack,
        scale,
        violations,
    }
}

/// `‖H‖_{Ḣs} / (‖M‖_{Ḣs} + ‖G_F‖_{Ḣs})`.
pub fn hs_bound_check(m: &SpectralField, f: &SpectralField, s: f64) -> Result<f64> {
    let sol = solve_h(m, f)?;
    let num = sobolev_norm2(&sol.h, s).sqrt();
    let den = sobolev_norm2(m, s).sqrt() + sobolev_norm2(&sol.g_f, s).sqrt();
    if den == 0.0 {
        if num > 0.0 {
            return Err(FerroError::Corrupted(
                "nonzero field from zero magnetization and zero forcing".into(),
            ));
        }
        return Ok(0.0);
    }
    Ok(num / den)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaHIdentities {
    pub theta: f64,
    /// `‖δH‖_{Ḣϑ}/‖δM‖_{Ḣϑ}`, zero when `δM = 0`.
    pub norm_ratio: f64,
    /// `|‖∇δH‖_{Ḣϑ} - ‖div δM‖_{Ḣϑ}|`.
    pub grad_residual: f64,
    /// `‖div δM‖_{Ḣϑ}`, the scale of the residual.
    pub scale: f64,
}

/// Difference of two demagnetizing fields under a common applied field.
pub fn delta_h_identities(m_a: &SpectralField, m_b: &SpectralField, theta: f64) -> DeltaHIdentities {
    let dm = m_a.sub(m_b);
    let dh = demagnetizing_field(&dm);
    let dm_norm = sobolev_norm2(&dm, theta).sqrt();
    let norm_ratio = if dm_norm == 0.0 {
        0.0
    } else {
        sobolev_norm2(&dh, theta).sqrt() / dm_norm
    };
    let grad = gradient_norm2(&dh, theta).sqrt();
    let div = sobolev_norm2(&divergence(&dm), theta).sqrt();
    DeltaHIdentities {
        theta,
        norm_ratio,
        grad_residual: (grad - div).abs(),
        scale: div,
    }
}
