//! Seeded band-limited random fields.
//!
//! Coefficients are drawn per integer wavevector in a fixed order that does
//! not depend on the grid, so the same seed yields the same field on every
//! grid that carries the band.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::spectral::{Grid, SpectralField};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomSpec {
    pub seed: u64,
    /// Largest integer wavenumber magnitude `|k|` that receives energy.
    pub band: f64,
    /// Target root-mean-square amplitude `(‖f‖²/L²)^{1/2}`.
    pub amplitude: f64,
}

/// Fills the modes with `weight(k1, k2) > 0` with uniformly random complex
/// coefficients scaled by the weight. Draws happen over the square
/// `|k_i| <= reach` in a fixed order, whether or not the grid carries the mode.
pub fn random_modes<R: Rng>(
    rng: &mut R,
    grid: Grid,
    ncomp: usize,
    reach: i64,
    weight: impl Fn(i64, i64) -> f64,
) -> SpectralField {
    let mut out = SpectralField::zeros(grid, ncomp);
    for c in 0..ncomp {
        for k1 in 0..=reach {
            for k2 in -reach..=reach {
                if k1 == 0 && k2 <= 0 {
                    continue;
                }
                let re: f64 = rng.gen_range(-1.0..1.0);
                let im: f64 = rng.gen_range(-1.0..1.0);
                let w = weight(k1, k2);
                if w <= 0.0 {
                    continue;
                }
                let carried = grid
                    .index_of(k1, k2)
                    .zip(grid.index_of(-k1, -k2))
                    .is_some_and(|(i, _)| !grid.is_nyquist(i));
                if carried {
                    out.add_real_mode(c, k1, k2, Complex64::new(re, im) * w);
                }
            }
        }
    }
    out
}

/// Rescales `f` to the given root-mean-square amplitude; zero stays zero.
pub fn normalize_rms(f: &mut SpectralField, amplitude: f64) {
    let rms = (f.norm2() / f.grid().area()).sqrt();
    if rms > 0.0 {
        f.scale_in_place(amplitude / rms);
    }
}

/// Smooth random field with a Gaussian envelope of width `band/2` in
/// wavenumber, cut off at `|k| <= band`.
pub fn random_field_with<R: Rng>(rng: &mut R, grid: Grid, ncomp: usize, band: f64, amplitude: f64) -> SpectralField {
    let reach = band.floor() as i64;
    let mut f = random_modes(rng, grid, ncomp, reach, |k1, k2| {
        let r2 = (k1 * k1 + k2 * k2) as f64;
        if r2 > band * band {
            0.0
        } else {
            (-2.0 * r2 / (band * band)).exp()
        }
    });
    normalize_rms(&mut f, amplitude);
    f
}

pub fn random_field(grid: Grid, ncomp: usize, spec: RandomSpec) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    random_field_with(&mut rng, grid, ncomp, spec.band, spec.amplitude)
}
