//! Time integration of the two-dimensional Rosensweig system
//!
//! ```text
//! ρ0(∂t u + u·∇u) - (η+ζ)Δu + ∇p = μ0 M·∇H + 2ζ(∂2ω, -∂1ω),      div u = 0
//! ρ0k(∂t ω + u·∇ω) - η′Δω + 4ζω  = μ0 M×H + 2ζ curl u
//! ∂t M + u·∇M - σΔM             = ω(-M2, M1) - (M - χ0 H)/τ
//! div(H + M) = F,  curl H = 0
//! ```
//!
//! in Fourier space. The diagonal stiff part (viscous and diffusive terms,
//! `4ζω/(ρ0k)` and `M/τ`) is integrated exactly by exponential factors; all
//! other terms are explicit. Quadratic products are formed on the grid from
//! dealiased fields, which with the 2/3 rule makes them exact on the retained
//! band, so every Galerkin cancellation of the energy balance survives.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{FerroError, Result};
use crate::magnetostatics::solve_h;
use crate::random::random_field_with;
use crate::spectral::{leray_project, real_to_spectral_many, spectral_to_real_many, Grid, SpectralField};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Physical constants of the system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FerroParams {
    pub rho0: f64,
    pub k: f64,
    pub eta: f64,
    pub zeta: f64,
    pub eta_prime: f64,
    pub mu0: f64,
    pub sigma: f64,
    pub tau: f64,
    pub chi0: f64,
}

impl Default for FerroParams {
    fn default() -> Self {
        Self {
            rho0: 1.0,
            k: 1.0,
            eta: 1.0,
            zeta: 1.0,
            eta_prime: 1.0,
            mu0: 1.0,
            sigma: 1.0,
            tau: 1.0,
            chi0: 1.0,
        }
    }
}

impl FerroParams {
    pub fn named(&self) -> [(&'static str, f64); 9] {
        [
            ("rho0", self.rho0),
            ("k", self.k),
            ("eta", self.eta),
            ("zeta", self.zeta),
            ("eta_prime", self.eta_prime),
            ("mu0", self.mu0),
            ("sigma", self.sigma),
            ("tau", self.tau),
            ("chi0", self.chi0),
        ]
    }

    /// Every constant strictly positive.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.named() {
            if !(v.is_finite() && v > 0.0) {
                return Err(FerroError::InvalidParameter(format!("{name} must be > 0")));
            }
        }
        Ok(())
    }

    /// What the integrator itself needs: `ρ0, k, τ > 0`, the rest `>= 0`.
    /// Decoupled test problems (no vortex viscosity, no permeability) pass.
    pub fn validate_for_solver(&self) -> Result<()> {
        for (name, v) in self.named() {
            let strict = matches!(name, "rho0" | "k" | "tau");
            if !v.is_finite() || v < 0.0 || (strict && v == 0.0) {
                let bound = if strict { "> 0" } else { ">= 0" };
                return Err(FerroError::InvalidParameter(format!("{name} must be {bound}")));
            }
        }
        Ok(())
    }

    /// Dissipation rate `min{(η+ζ)/2, η′/2, 4ζ, σ/2, 1/τ, χ0/(2τ)}` of the energy law.
    pub fn energy_rate(&self) -> f64 {
        [
            (self.eta + self.zeta) / 2.0,
            self.eta_prime / 2.0,
            4.0 * self.zeta,
            self.sigma / 2.0,
            1.0 / self.tau,
            self.chi0 / (2.0 * self.tau),
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min)
    }
}

/// Velocity, micro-rotation and magnetization at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FerroState {
    pub t: f64,
    pub u: SpectralField,
    pub omega: SpectralField,
    pub m: SpectralField,
}

impl FerroState {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            t: 0.0,
            u: SpectralField::vector_zeros(grid),
            omega: SpectralField::scalar_zeros(grid),
            m: SpectralField::vector_zeros(grid),
        }
    }

    pub fn new(t: f64, u: SpectralField, omega: SpectralField, m: SpectralField) -> Result<Self> {
        if !u.is_vector() || !m.is_vector() {
            return Err(FerroError::ComponentMismatch {
                expected: 2,
                found: u.ncomp().min(m.ncomp()),
            });
        }
        if omega.ncomp() != 1 {
            return Err(FerroError::ComponentMismatch {
                expected: 1,
                found: omega.ncomp(),
            });
        }
        if u.grid() != omega.grid() || u.grid() != m.grid() {
            return Err(FerroError::GridMismatch);
        }
        Ok(Self { t, u, omega, m })
    }

    /// Smooth random data: `u` solenoidal, each field at the given RMS
    /// amplitude, drawn in the order `u, ω, M` from one seeded stream.
    pub fn random(grid: Grid, seed: u64, band: f64, amplitude: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = leray_project(&random_field_with(&mut rng, grid, 2, band, 1.0));
        crate::random::normalize_rms(&mut u, amplitude);
        let omega = random_field_with(&mut rng, grid, 1, band, amplitude);
        let m = random_field_with(&mut rng, grid, 2, band, amplitude);
        Self { t: 0.0, u, omega, m }
    }

    pub fn grid(&self) -> &Grid {
        self.u.grid()
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.omega.is_finite() && self.m.is_finite()
    }

    pub fn scale(&self, a: f64) -> Self {
        Self {
            t: self.t,
            u: self.u.scale(a),
            omega: self.omega.scale(a),
            m: self.m.scale(a),
        }
    }

    pub fn sub(&self, other: &FerroState) -> Self {
        Self {
            t: self.t,
            u: self.u.sub(&other.u),
            omega: self.omega.sub(&other.omega),
            m: self.m.sub(&other.m),
        }
    }

    /// `(‖u‖² + ‖ω‖² + ‖M‖²)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        (self.u.norm2() + self.omega.norm2() + self.m.norm2()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.u.max_abs().max(self.omega.max_abs()).max(self.m.max_abs())
    }
}

/// Applied field `F(t, x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Forcing {
    None,
    /// `√K (1+t)^{-(1+η_d)/2} cos(2π/L·mode·x)`.
    DecayingMode {
        k_amp: f64,
        eta_decay: f64,
        mode: (i64, i64),
    },
    /// Time-independent field.
    Field(SpectralField),
}

impl Forcing {
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        match self {
            Forcing::None => Ok(()),
            Forcing::DecayingMode { k_amp, eta_decay, mode } => {
                if !(k_amp.is_finite() && *k_amp >= 0.0) {
                    return Err(FerroError::InvalidParameter("forcing K must be >= 0".into()));
                }
                if !(*eta_decay > 0.0 && *eta_decay < 1.0) {
                    return Err(FerroError::InvalidParameter(
                        "forcing eta_decay must lie in (0, 1)".into(),
                    ));
                }
                if *mode == (0, 0) {
                    return Err(FerroError::Compatibility(k_amp.sqrt()));
                }
                let idx = grid.index_of(mode.0, mode.1).filter(|&i| !grid.is_nyquist(i));
                if idx.is_none() {
                    return Err(FerroError::InvalidParameter(format!(
                        "forcing mode {mode:?} is not carried by the grid"
                    )));
                }
                Ok(())
            }
            Forcing::Field(f) => {
                if f.ncomp() != 1 {
                    return Err(FerroError::ComponentMismatch {
                        expected: 1,
                        found: f.ncomp(),
                    });
                }
                if f.grid() != grid {
                    return Err(FerroError::GridMismatch);
                }
                let mean = f.comp(0)[0].norm();
                if mean > crate::magnetostatics::COMPATIBILITY_TOLERANCE * f.max_abs() {
                    return Err(FerroError::Compatibility(mean));
                }
                Ok(())
            }
        }
    }

    fn decaying_amplitude(k_amp: f64, eta_decay: f64, t: f64) -> f64 {
        k_amp.sqrt() * (1.0 + t).powf(-(1.0 + eta_decay) / 2.0)
    }

    pub fn field(&self, grid: &Grid, t: f64) -> SpectralField {
        match self {
            Forcing::None => SpectralField::scalar_zeros(*grid),
            Forcing::DecayingMode { k_amp, eta_decay, mode } => {
                let mut f = SpectralField::scalar_zeros(*grid);
                let a = Self::decaying_amplitude(*k_amp, *eta_decay, t);
                f.add_real_mode(0, mode.0, mode.1, Complex64::new(0.5 * a, 0.0));
                f
            }
            Forcing::Field(f) => f.clone(),
        }
    }

    /// `∂t F`.
    pub fn time_derivative(&self, grid: &Grid, t: f64) -> SpectralField {
        match self {
            Forcing::DecayingMode { eta_decay, .. } => {
                self.field(grid, t).scale(-(1.0 + eta_decay) / (2.0 * (1.0 + t)))
            }
            _ => SpectralField::scalar_zeros(*grid),
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, Forcing::None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    Etdrk2,
    ImexCn,
}

impl Integrator {
    pub fn name(self) -> &'static str {
        match self {
            Integrator::Etdrk2 => "etdrk2",
            Integrator::ImexCn => "imex_cn",
        }
    }
}

impl std::str::FromStr for Integrator {
    type Err = FerroError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "etdrk2" => Ok(Integrator::Etdrk2),
            "imex_cn" => Ok(Integrator::ImexCn),
            other => Err(FerroError::InvalidParameter(format!(
                "integrator `{other}` is not one of etdrk2, imex_cn"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub grid: Grid,
    pub params: FerroParams,
    pub dt: f64,
    pub t_end: f64,
    /// Radius of the Galerkin truncation `J_n`; `None` keeps the dealiased band.
    pub galerkin_n: Option<f64>,
    pub snapshot_stride: usize,
    pub integrator: Integrator,
}

impl SolverConfig {
    pub fn new(grid: Grid, params: FerroParams, dt: f64, t_end: f64) -> Self {
        Self {
            grid,
            params,
            dt,
            t_end,
            galerkin_n: None,
            snapshot_stride: 1,
            integrator: Integrator::Etdrk2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate_for_solver()?;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(FerroError::InvalidParameter("dt must be > 0".into()));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(FerroError::InvalidParameter("t_end must be >= 0".into()));
        }
        if self.snapshot_stride == 0 {
            return Err(FerroError::InvalidParameter("snapshot stride must be >= 1".into()));
        }
        if let Some(n) = self.galerkin_n {
            if !(n.is_finite() && n > 0.0) {
                return Err(FerroError::InvalidParameter("galerkin_n must be > 0".into()));
            }
        }
        self.steps().map(|_| ())
    }

    /// Number of steps `t_end/dt`, which must be an integer.
    pub fn steps(&self) -> Result<usize> {
        let n = (self.t_end / self.dt).round();
        if (n * self.dt - self.t_end).abs() > 1e-9 * self.t_end.max(self.dt) {
            return Err(FerroError::InvalidParameter(format!(
                "t_end = {} is not a whole number of steps dt = {}",
                self.t_end, self.dt
            )));
        }
        Ok(n as usize)
    }
}

/// Tendencies of the three unknowns.
#[derive(Debug, Clone, PartialEq)]
pub struct Tendencies {
    pub u: SpectralField,
    pub omega: SpectralField,
    pub m: SpectralField,
}

impl Tendencies {
    pub fn add(&self, other: &Tendencies) -> Tendencies {
        Tendencies {
            u: self.u.add(&other.u),
            omega: self.omega.add(&other.omega),
            m: self.m.add(&other.m),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.u.max_abs().max(self.omega.max_abs()).max(self.m.max_abs())
    }
}

/// Right-hand side split into its explicit and stiff diagonal parts.
#[derive(Debug, Clone, PartialEq)]
pub struct Rhs {
    pub explicit: Tendencies,
    pub stiff: Tendencies,
    pub h: SpectralField,
    /// Advective step bound `0.5·Δx/max(|u|, |ω|)`.
    pub cfl_bound: f64,
}

impl Rhs {
    pub fn total(&self) -> Tendencies {
        self.explicit.add(&self.stiff)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub state: FerroState,
    pub h: SpectralField,
    pub f: SpectralField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub config: SolverConfig,
    pub forcing: Forcing,
    pub snapshots: Vec<Snapshot>,
}

impl Trajectory {
    /// Time between consecutive snapshots.
    pub fn spacing(&self) -> f64 {
        self.config.dt * self.config.snapshot_stride as f64
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.state.t).collect()
    }

    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("trajectories hold the initial snapshot")
    }
}

/// A run stopped early; `partial` holds every snapshot taken before the failure.
#[derive(Debug, Clone)]
pub struct RunAborted {
    pub error: FerroError,
    pub partial: Box<Trajectory>,
}

impl std::fmt::Display for RunAborted {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let t = self.partial.snapshots.last().map_or(0.0, |s| s.state.t);
        write!(f, "{} (last snapshot at t = {t})", self.error)
    }
}

impl std::error::Error for RunAborted {}

/// Per-mode factors of one diagonal rate `λ`.
#[derive(Debug, Clone)]
struct Factors {
    /// ETDRK2: `e^{-λh}`, `hφ1(-λh)`, `hφ2(-λh)`.
    /// IMEX-CN: `(1 - hλ/2)/(1 + hλ/2)`, `h/(1 + hλ/2)`, unused.
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    rate: Vec<f64>,
}

/// `φ1(z) = (e^z - 1)/z` and `φ2(z) = (e^z - 1 - z)/z²`.
pub fn phi_functions(z: f64) -> (f64, f64) {
    if z.abs() < 0.1 {
        let mut p1 = 0.0;
        let mut p2 = 0.0;
        let mut term = 1.0; // z^k/k!
        for k in 0..14 {
            p1 += term / (k + 1) as f64;
            p2 += term / ((k + 1) * (k + 2)) as f64;
            term *= z / (k + 1) as f64;
        }
        (p1, p2)
    } else {
        let e = z.exp_m1();
        (e / z, (e - z) / (z * z))
    }
}

impl Factors {
    fn new(rate: Vec<f64>, h: f64, integrator: Integrator) -> Self {
        let n = rate.len();
        let (mut a, mut b, mut c) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for (i, &l) in rate.iter().enumerate() {
            match integrator {
                Integrator::Etdrk2 => {
                    let z = -l * h;
                    let (p1, p2) = phi_functions(z);
                    a[i] = z.exp();
                    b[i] = h * p1;
                    c[i] = h * p2;
                }
                Integrator::ImexCn => {
                    let d = 1.0 + 0.5 * h * l;
                    a[i] = (1.0 - 0.5 * h * l) / d;
                    b[i] = h / d;
                }
            }
        }
        Self { a, b, c, rate }
    }
}

pub struct Solver {
    config: SolverConfig,
    forcing: Forcing,
    keep: Vec<bool>,
    kx: Vec<f64>,
    ky: Vec<f64>,
    fac_u: Factors,
    fac_w: Factors,
    fac_m: Factors,
}

impl Solver {
    pub fn new(config: SolverConfig, forcing: Forcing) -> Result<Self> {
        config.validate()?;
        let g = config.grid;
        forcing.validate(&g)?;
        let p = config.params;
        let radius2 = config.galerkin_n.map(|n| n * n);
        let mut keep = vec![false; g.len()];
        let (mut kx, mut ky) = (vec![0.0; g.len()], vec![0.0; g.len()]);
        let (mut ru, mut rw, mut rm) = (vec![0.0; g.len()], vec![0.0; g.len()], vec![0.0; g.len()]);
        for idx in 0..g.len() {
            let k2 = g.xi_norm2(idx);
            keep[idx] = idx != 0 && g.keeps_dealiased(idx) && radius2.is_none_or(|r2| k2 <= r2);
            (kx[idx], ky[idx]) = g.xi_odd(idx);
            ru[idx] = (p.eta + p.zeta) / p.rho0 * k2;
            rw[idx] = p.eta_prime / (p.rho0 * p.k) * k2 + 4.0 * p.zeta / (p.rho0 * p.k);
            rm[idx] = p.sigma * k2 + 1.0 / p.tau;
        }
        if let Forcing::DecayingMode { mode, .. } = &forcing {
            let idx = g.index_of(mode.0, mode.1).expect("validated above");
            if !keep[idx] {
                return Err(FerroError::InvalidParameter(format!(
                    "forcing mode {mode:?} lies outside the retained band"
                )));
            }
        }
        let forcing = match forcing {
            Forcing::Field(f) => Forcing::Field(f.map_modes(|i, v| if keep[i] { v } else { ZERO })),
            other => other,
        };
        let h = config.dt;
        Ok(Self {
            fac_u: Factors::new(ru, h, config.integrator),
            fac_w: Factors::new(rw, h, config.integrator),
            fac_m: Factors::new(rm, h, config.integrator),
            config,
            forcing,
            keep,
            kx,
            ky,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn forcing(&self) -> &Forcing {
        &self.forcing
    }

    pub fn grid(&self) -> &Grid {
        &self.config.grid
    }

    /// Whether mode `idx` belongs to the retained band.
    pub fn keeps(&self, idx: usize) -> bool {
        self.keep[idx]
    }

    fn mask(&self, f: &mut SpectralField) {
        for c in 0..f.ncomp() {
            for (v, &k) in f.comp_mut(c).iter_mut().zip(&self.keep) {
                if !k {
                    *v = ZERO;
                }
            }
        }
    }

    fn project_in_place(&self, v: &mut SpectralField) {
        for idx in 0..self.keep.len() {
            let (a, b) = (self.kx[idx], self.ky[idx]);
            let k2 = a * a + b * b;
            if k2 == 0.0 {
                continue;
            }
            let dot = (v.comp(0)[idx] * a + v.comp(1)[idx] * b) / k2;
            v.comp_mut(0)[idx] -= dot * a;
            v.comp_mut(1)[idx] -= dot * b;
        }
    }

    /// Projects `u`, removes means and modes outside the retained band, and
    /// restores exact Hermitian symmetry.
    pub fn prepare(&self, state: &FerroState) -> Result<FerroState> {
        if state.grid() != self.grid() {
            return Err(FerroError::GridMismatch);
        }
        let mut s = state.clone();
        self.project_in_place(&mut s.u);
        for f in [&mut s.u, &mut s.omega, &mut s.m] {
            self.mask(f);
            f.symmetrize();
        }
        Ok(s)
    }

    fn deriv(&self, c: &[Complex64], along_x: bool) -> Vec<Complex64> {
        let k = if along_x { &self.kx } else { &self.ky };
        c.iter()
            .zip(k)
            .map(|(v, &x)| Complex64::new(-x * v.im, x * v.re))
            .collect()
    }

    /// Explicit tendencies, the stiff part and the magnetostatic field at `state.t`.
    pub fn compute_rhs(&self, state: &FerroState) -> Result<Rhs> {
        let g = *self.grid();
        if state.grid() != &g {
            return Err(FerroError::GridMismatch);
        }
        let p = self.config.params;
        let f = self.forcing.field(&g, state.t);
        let h = solve_h(&state.m, &f)?.h;

        let base: [&[Complex64]; 7] = [
            state.u.comp(0),
            state.u.comp(1),
            state.omega.comp(0),
            state.m.comp(0),
            state.m.comp(1),
            h.comp(0),
            h.comp(1),
        ];
        let mut spectra: Vec<Vec<Complex64>> = Vec::with_capacity(21);
        for c in base {
            spectra.push(self.deriv(c, true));
            spectra.push(self.deriv(c, false));
        }
        let mut slices: Vec<&[Complex64]> = base.to_vec();
        slices.extend(spectra.iter().map(|v| v.as_slice()));
        let phys = spectral_to_real_many(&g, &slices);
        let [u1, u2, w, m1, m2, h1, h2] = [0, 1, 2, 3, 4, 5, 6].map(|i| &phys[i]);
        let d = |field: usize, along_x: bool| &phys[7 + 2 * field + usize::from(!along_x)];
        let (du1x, du1y, du2x, du2y) = (d(0, true), d(0, false), d(1, true), d(1, false));
        let (dwx, dwy) = (d(2, true), d(2, false));
        let (dm1x, dm1y, dm2x, dm2y) = (d(3, true), d(3, false), d(4, true), d(4, false));
        let (dh1x, dh1y, dh2x, dh2y) = (d(5, true), d(5, false), d(6, true), d(6, false));

        let lorentz = p.mu0 / p.rho0;
        let torque = p.mu0 / (p.rho0 * p.k);
        let n = g.len();
        let mut out = vec![vec![0.0; n]; 5];
        let mut umax: f64 = 0.0;
        let mut wmax: f64 = 0.0;
        for i in 0..n {
            let (a1, a2) = (u1[i], u2[i]);
            umax = umax.max(a1.abs()).max(a2.abs());
            wmax = wmax.max(w[i].abs());
            out[0][i] = -(a1 * du1x[i] + a2 * du1y[i]) + lorentz * (m1[i] * dh1x[i] + m2[i] * dh1y[i]);
            out[1][i] = -(a1 * du2x[i] + a2 * du2y[i]) + lorentz * (m1[i] * dh2x[i] + m2[i] * dh2y[i]);
            out[2][i] = -(a1 * dwx[i] + a2 * dwy[i]) + torque * (m1[i] * h2[i] - m2[i] * h1[i]);
            out[3][i] = -(a1 * dm1x[i] + a2 * dm1y[i]) - w[i] * m2[i];
            out[4][i] = -(a1 * dm2x[i] + a2 * dm2y[i]) + w[i] * m1[i];
        }
        let outs: Vec<&[f64]> = out.iter().map(|v| v.as_slice()).collect();
        let mut spec = real_to_spectral_many(&g, &outs).into_iter();
        let mut take = |k: usize| -> Vec<Vec<Complex64>> { (0..k).map(|_| spec.next().unwrap()).collect() };
        let mut nu = SpectralField::from_components(g, take(2))?;
        let mut nw = SpectralField::from_components(g, take(1))?;
        let mut nm = SpectralField::from_components(g, take(2))?;

        let spin = 2.0 * p.zeta / p.rho0;
        let spin_w = 2.0 * p.zeta / (p.rho0 * p.k);
        let relax = p.chi0 / p.tau;
        for idx in 0..n {
            let (a, b) = (self.kx[idx], self.ky[idx]);
            let wv = state.omega.comp(0)[idx];
            // perp_grad ω = (iξ2 ω, -iξ1 ω); curl u = iξ1 u2 - iξ2 u1
            let i_w = Complex64::new(-wv.im, wv.re);
            nu.comp_mut(0)[idx] += i_w * (spin * b);
            nu.comp_mut(1)[idx] -= i_w * (spin * a);
            let curl = state.u.comp(1)[idx] * a - state.u.comp(0)[idx] * b;
            nw.comp_mut(0)[idx] += Complex64::new(-curl.im, curl.re) * spin_w;
            nm.comp_mut(0)[idx] += h.comp(0)[idx] * relax;
            nm.comp_mut(1)[idx] += h.comp(1)[idx] * relax;
        }
        self.project_in_place(&mut nu);
        for f in [&mut nu, &mut nw, &mut nm] {
            self.mask(f);
        }

        let stiff = |y: &SpectralField, fac: &Factors| y.multiply(|i| -fac.rate[i]);
        let stiff = Tendencies {
            u: stiff(&state.u, &self.fac_u),
            omega: stiff(&state.omega, &self.fac_w),
            m: stiff(&state.m, &self.fac_m),
        };
        let (dx1, dx2) = g.spacing();
        let speed = umax.max(wmax);
        let cfl_bound = if speed > 0.0 {
            0.5 * dx1.min(dx2) / speed
        } else {
            f64::INFINITY
        };
        Ok(Rhs {
            explicit: Tendencies {
                u: nu,
                omega: nw,
                m: nm,
            },
            stiff,
            h,
            cfl_bound,
        })
    }

    fn combine(y: &SpectralField, n0: &SpectralField, fac: &Factors) -> SpectralField {
        let mut out = y.clone();
        for c in 0..y.ncomp() {
            for (i, v) in out.comp_mut(c).iter_mut().enumerate() {
                *v = *v * fac.a[i] + n0.comp(c)[i] * fac.b[i];
            }
        }
        out
    }

    fn finish(&self, mut s: FerroState, step: usize) -> Result<FerroState> {
        self.project_in_place(&mut s.u);
        for f in [&mut s.u, &mut s.omega, &mut s.m] {
            self.mask(f);
            f.symmetrize();
        }
        if !s.is_finite() {
            return Err(FerroError::BlowUp { t: s.t, step });
        }
        Ok(s)
    }

    /// Advances one step of size `dt`.
    pub fn step(&self, state: &FerroState) -> Result<FerroState> {
        let step = (state.t / self.config.dt).round() as usize + 1;
        self.step_to(state, state.t + self.config.dt, step)
    }

    fn step_to(&self, y: &FerroState, t_next: f64, step: usize) -> Result<FerroState> {
        let dt = self.config.dt;
        let r0 = self.compute_rhs(y)?;
        if !r0.explicit.u.is_finite() || !r0.explicit.m.is_finite() || !r0.explicit.omega.is_finite() {
            return Err(FerroError::BlowUp { t: y.t, step });
        }
        if dt > r0.cfl_bound {
            return Err(FerroError::Cfl {
                dt,
                bound: r0.cfl_bound,
                t: y.t,
            });
        }
        let n0 = &r0.explicit;
        let a = FerroState {
            t: t_next,
            u: Self::combine(&y.u, &n0.u, &self.fac_u),
            omega: Self::combine(&y.omega, &n0.omega, &self.fac_w),
            m: Self::combine(&y.m, &n0.m, &self.fac_m),
        };
        let n1 = self.compute_rhs(&a)?.explicit;
        let next = match self.config.integrator {
            Integrator::Etdrk2 => {
                let corr = |base: &SpectralField, x1: &SpectralField, x0: &SpectralField, fac: &Factors| {
                    let mut out = base.clone();
                    for c in 0..base.ncomp() {
                        for (i, v) in out.comp_mut(c).iter_mut().enumerate() {
                            *v += (x1.comp(c)[i] - x0.comp(c)[i]) * fac.c[i];
                        }
                    }
                    out
                };
                FerroState {
                    t: t_next,
                    u: corr(&a.u, &n1.u, &n0.u, &self.fac_u),
                    omega: corr(&a.omega, &n1.omega, &n0.omega, &self.fac_w),
                    m: corr(&a.m, &n1.m, &n0.m, &self.fac_m),
                }
            }
            Integrator::ImexCn => {
                let avg = |x0: &SpectralField, x1: &SpectralField| x0.add(x1).scale(0.5);
                FerroState {
                    t: t_next,
                    u: Self::combine(&y.u, &avg(&n0.u, &n1.u), &self.fac_u),
                    omega: Self::combine(&y.omega, &avg(&n0.omega, &n1.omega), &self.fac_w),
                    m: Self::combine(&y.m, &avg(&n0.m, &n1.m), &self.fac_m),
                }
            }
        };
        self.finish(next, step)
    }

    fn snapshot(&self, state: FerroState) -> Result<Snapshot> {
        let f = self.forcing.field(self.grid(), state.t);
        let h = solve_h(&state.m, &f)?.h;
        Ok(Snapshot { state, h, f })
    }

    /// Runs from `initial` (prepared first) to `t_end`, handing every
    /// `snapshot_stride`-th state to `observer`. Returns the final state, or
    /// the error together with the last observed snapshot time.
    pub fn run_observed(
        &self,
        initial: &FerroState,
        mut observer: impl FnMut(&Snapshot),
    ) -> std::result::Result<FerroState, (FerroError, f64)> {
        let steps = self.config.steps().map_err(|e| (e, initial.t))?;
        let stride = self.config.snapshot_stride;
        let t0 = initial.t;
        let mut state = self.prepare(initial).map_err(|e| (e, t0))?;
        let mut last_t = t0;
        let first = self.snapshot(state.clone()).map_err(|e| (e, t0))?;
        observer(&first);
        for n in 1..=steps {
            let t_next = t0 + n as f64 * self.config.dt;
            state = self.step_to(&state, t_next, n).map_err(|e| (e, last_t))?;
            if n % stride == 0 || n == steps {
                let snap = self.snapshot(state.clone()).map_err(|e| (e, last_t))?;
                last_t = snap.state.t;
                observer(&snap);
            }
        }
        Ok(state)
    }

    pub fn run(&self, initial: &FerroState) -> std::result::Result<Trajectory, RunAborted> {
        let mut snapshots = Vec::new();
        let outcome = self.run_observed(initial, |s| snapshots.push(s.clone()));
        let traj = Trajectory {
            config: self.config.clone(),
            forcing: self.forcing.clone(),
            snapshots,
        };
        match outcome {
            Ok(_) => Ok(traj),
            Err((error, _)) => Err(RunAborted {
                error,
                partial: Box::new(traj),
            }),
        }
    }
}

/// Largest L² norm over interior snapshots of the central-difference time
/// derivative minus the full right-hand side. Needs stride-1 snapshots.
pub fn strong_residual(traj: &Trajectory) -> Result<f64> {
    let snaps = &traj.snapshots;
    if snaps.len() < 3 {
        return Err(FerroError::TooFewSnapshots(format!(
            "{} snapshots, central differences need at least 3",
            snaps.len()
        )));
    }
    if traj.config.snapshot_stride != 1 {
        return Err(FerroError::TooFewSnapshots("residual needs stride-1 snapshots".into()));
    }
    let solver = Solver::new(traj.config.clone(), traj.forcing.clone())?;
    let dt = traj.config.dt;
    let mut worst: f64 = 0.0;
    for w in snaps.windows(3) {
        let (prev, mid, next) = (&w[0].state, &w[1].state, &w[2].state);
        if ((next.t - prev.t) - 2.0 * dt).abs() > 1e-9 * dt {
            return Err(FerroError::NonuniformSpacing);
        }
        let rhs = solver.compute_rhs(mid)?.total();
        let diff = |a: &SpectralField, b: &SpectralField, r: &SpectralField| {
            let mut d = a.sub(b).scale(0.5 / dt);
            d.axpy(-1.0, r);
            d.norm2()
        };
        let r = diff(&next.u, &prev.u, &rhs.u)
            + diff(&next.omega, &prev.omega, &rhs.omega)
            + diff(&next.m, &prev.m, &rhs.m);
        worst = worst.max(r.sqrt());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{advect, curl2d, dealias, divergence, exact_product, jn_truncate, perp_grad};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn two_pi(n: usize) -> Grid {
        Grid::square(n, 2.0 * PI).unwrap()
    }

    fn real_field(g: Grid, ncomp: usize, f: impl Fn(usize, f64, f64) -> f64) -> SpectralField {
        crate::spectral::forward_transform(&crate::PhysicalField::from_fn(g, ncomp, f))
    }

    fn solver(g: Grid, params: FerroParams, dt: f64, t_end: f64) -> Solver {
        Solver::new(SolverConfig::new(g, params, dt, t_end), Forcing::None).unwrap()
    }

    fn rel(a: &SpectralField, b: &SpectralField) -> f64 {
        a.sub(b).norm() / b.norm().max(1e-300)
    }

    #[test]
    fn phi_series_matches_closed_form_at_the_switch() {
        for z in [-0.1f64, -0.0999999, 0.0999999, 0.1] {
            let (p1, p2) = phi_functions(z);
            let e = z.exp_m1();
            assert!((p1 - e / z).abs() < 1e-14);
            assert!((p2 - (e - z) / (z * z)).abs() < 1e-12);
        }
        assert_eq!(phi_functions(0.0), (1.0, 0.5));
    }

    #[test]
    fn energy_rate_is_the_smallest_rate() {
        assert_eq!(FerroParams::default().energy_rate(), 0.5);
        let p = FerroParams {
            zeta: 0.01,
            ..FerroParams::default()
        };
        assert!((p.energy_rate() - 0.04).abs() < 1e-15);
    }

    #[test]
    fn parameter_validation() {
        let mut p = FerroParams::default();
        assert!(p.validate().is_ok());
        p.zeta = 0.0;
        assert!(p.validate().is_err());
        assert!(p.validate_for_solver().is_ok());
        p.tau = 0.0;
        assert!(matches!(p.validate_for_solver(), Err(FerroError::InvalidParameter(_))));
        let mut cfg = SolverConfig::new(two_pi(16), FerroParams::default(), 0.3, 1.0);
        assert!(cfg.validate().is_err());
        cfg.dt = 0.25;
        assert_eq!(cfg.steps().unwrap(), 4);
        cfg.snapshot_stride = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn forcing_validation() {
        let g = two_pi(16);
        let bad = Forcing::DecayingMode {
            k_amp: 1.0,
            eta_decay: 1.5,
            mode: (1, 0),
        };
        assert!(bad.validate(&g).is_err());
        let mean = Forcing::DecayingMode {
            k_amp: 1.0,
            eta_decay: 0.5,
            mode: (0, 0),
        };
        assert!(matches!(mean.validate(&g), Err(FerroError::Compatibility(_))));
        let outside = Forcing::DecayingMode {
            k_amp: 1.0,
            eta_decay: 0.5,
            mode: (7, 0),
        };
        let cfg = SolverConfig::new(g, FerroParams::default(), 0.1, 1.0);
        assert!(Solver::new(cfg, outside).is_err());
        let mut f = SpectralField::scalar_zeros(g);
        f.comp_mut(0)[0] = Complex64::new(1.0, 0.0);
        assert!(matches!(
            Forcing::Field(f).validate(&g),
            Err(FerroError::Compatibility(_))
        ));
    }

    #[test]
    fn decaying_forcing_values() {
        let g = two_pi(16);
        let f = Forcing::DecayingMode {
            k_amp: 4.0,
            eta_decay: 0.5,
            mode: (1, 2),
        };
        let at = |t: f64| f.field(&g, t).coeff(0, 1, 2).re;
        assert!((at(0.0) - 1.0).abs() < 1e-15);
        assert!((at(3.0) - 4f64.powf(-0.75)).abs() < 1e-15);
        let h = 1e-5;
        let fd = (at(2.0 + h) - at(2.0 - h)) / (2.0 * h);
        assert!((f.time_derivative(&g, 2.0).coeff(0, 1, 2).re - fd).abs() < 1e-9);
        assert_eq!(f.field(&g, 0.0).coeff(0, -1, -2).re, 1.0);
    }

    #[test]
    fn zero_is_a_fixed_point() {
        let s = solver(two_pi(16), FerroParams::default(), 0.05, 0.5);
        let traj = s.run(&FerroState::zeros(two_pi(16))).unwrap();
        assert_eq!(traj.snapshots.len(), 11);
        let last = traj.last();
        assert_eq!(last.state.max_abs(), 0.0);
        assert!((last.state.t - 0.5).abs() < 1e-15);
    }

    #[test]
    fn solenoidal_magnetization_mode_decays_exactly() {
        // u = ω = 0 and div M = 0 give H = 0, so ∂t M = σΔM - M/τ.
        let g = two_pi(16);
        let m = real_field(g, 2, |c, _, y| if c == 0 { y.cos() } else { 0.0 });
        let state = FerroState::new(
            0.0,
            SpectralField::vector_zeros(g),
            SpectralField::scalar_zeros(g),
            m.clone(),
        )
        .unwrap();
        for integ in [Integrator::Etdrk2, Integrator::ImexCn] {
            let mut cfg = SolverConfig::new(g, FerroParams::default(), 0.01, 1.0);
            cfg.integrator = integ;
            let s = Solver::new(cfg, Forcing::None).unwrap();
            let rhs = s.compute_rhs(&state).unwrap();
            assert!(rel(&rhs.total().m, &m.scale(-2.0)) < 1e-14);
            assert!(rhs.h.max_abs() < 1e-15);
            let end = s.run(&state).unwrap().last().state.clone();
            let expected = m.scale((-2.0f64).exp());
            let tol = if integ == Integrator::Etdrk2 { 1e-13 } else { 1e-4 };
            assert!(rel(&end.m, &expected) < tol, "{integ:?}: {}", rel(&end.m, &expected));
            assert_eq!(end.u.max_abs(), 0.0);
        }
    }

    #[test]
    fn magnetization_mode_norms_follow_the_closed_form() {
        let g = two_pi(16);
        let m = real_field(g, 2, |c, _, y| if c == 0 { 0.8 * y.sin() } else { 0.0 });
        let state = FerroState::new(
            0.0,
            SpectralField::vector_zeros(g),
            SpectralField::scalar_zeros(g),
            m.clone(),
        )
        .unwrap();
        let mut cfg = SolverConfig::new(g, FerroParams::default(), 1e-3, 0.02);
        cfg.snapshot_stride = 1;
        let traj = Solver::new(cfg, Forcing::None).unwrap().run(&state).unwrap();
        assert_eq!(traj.snapshots.len(), 21);
        for snap in &traj.snapshots {
            let want = m.norm() * (-2.0 * snap.state.t).exp();
            assert!((snap.state.m.norm() - want).abs() < 1e-12 * want);
        }
        assert!(strong_residual(&traj).unwrap() <= 1e-5);
    }

    #[test]
    fn zero_length_runs_and_trajectories() {
        let g = two_pi(16);
        let st = FerroState::random(g, 6, 4.0, 0.3);
        let s = solver(g, FerroParams::default(), 0.01, 0.0);
        let traj = s.run(&st).unwrap();
        assert_eq!(traj.snapshots.len(), 1);
        assert_eq!(traj.snapshots[0].state, s.prepare(&st).unwrap());
        let zero = solver(g, FerroParams::default(), 0.01, 0.05)
            .run(&FerroState::zeros(g))
            .unwrap();
        assert_eq!(strong_residual(&zero).unwrap(), 0.0);
    }

    #[test]
    fn taylor_green_decays_at_the_viscous_rate() {
        let g = two_pi(32);
        let p = FerroParams {
            zeta: 0.0,
            mu0: 0.0,
            eta: 0.1,
            ..FerroParams::default()
        };
        let u = real_field(
            g,
            2,
            |c, x, y| {
                if c == 0 {
                    x.sin() * y.cos()
                } else {
                    -x.cos() * y.sin()
                }
            },
        );
        let state = FerroState::new(
            0.0,
            u.clone(),
            SpectralField::scalar_zeros(g),
            SpectralField::vector_zeros(g),
        )
        .unwrap();
        let s = solver(g, p, 0.05, 2.0);
        let end = s.run(&state).unwrap().last().state.clone();
        assert!(rel(&end.u, &u.scale((-0.4f64).exp())) < 1e-12);
        assert!(end.omega.max_abs() < 1e-14);
    }

    /// Independent route: every product on the padded grid through the
    /// public operators, then restricted to the dealiased mean-free band.
    fn padded_explicit(state: &FerroState, f: &SpectralField, p: FerroParams) -> Tendencies {
        let h = solve_h(&state.m, f).unwrap().h;
        let prod = |a: &SpectralField, b: &SpectralField| exact_product(a, b);
        let (m1, m2) = (state.m.component(0), state.m.component(1));
        let (h1, h2) = (h.component(0), h.component(1));
        let mut nu = advect(&state.u, &state.u).scale(-1.0);
        nu.axpy(p.mu0 / p.rho0, &advect(&state.m, &h));
        nu.axpy(2.0 * p.zeta / p.rho0, &perp_grad(&state.omega));
        let nu = leray_project(&nu);
        let mut nw = advect(&state.u, &state.omega).scale(-1.0);
        nw.axpy(p.mu0 / (p.rho0 * p.k), &prod(&m1, &h2).sub(&prod(&m2, &h1)));
        nw.axpy(2.0 * p.zeta / (p.rho0 * p.k), &curl2d(&state.u));
        let spin = SpectralField::stack(prod(&state.omega, &m2).scale(-1.0), prod(&state.omega, &m1));
        let mut nm = advect(&state.u, &state.m).scale(-1.0).add(&spin);
        nm.axpy(p.chi0 / p.tau, &h);
        let band = |f: &SpectralField| {
            let mut f = dealias(f);
            f.remove_mean();
            f
        };
        Tendencies {
            u: band(&nu),
            omega: band(&nw),
            m: band(&nm),
        }
    }

    fn awkward_params() -> FerroParams {
        FerroParams {
            rho0: 1.3,
            k: 0.7,
            eta: 0.4,
            zeta: 0.25,
            eta_prime: 0.6,
            mu0: 1.7,
            sigma: 0.3,
            tau: 0.8,
            chi0: 2.1,
        }
    }

    #[test]
    fn grid_products_agree_with_padded_products() {
        let g = two_pi(24);
        let p = awkward_params();
        let forcing = Forcing::DecayingMode {
            k_amp: 0.5,
            eta_decay: 0.4,
            mode: (2, -1),
        };
        let s = Solver::new(SolverConfig::new(g, p, 0.01, 1.0), forcing.clone()).unwrap();
        let state = s.prepare(&FerroState::random(g, 11, 8.0, 0.7)).unwrap();
        let state = FerroState { t: 0.3, ..state };
        let rhs = s.compute_rhs(&state).unwrap();
        let oracle = padded_explicit(&state, &forcing.field(&g, 0.3), p);
        assert!(rel(&rhs.explicit.u, &oracle.u) < 1e-12);
        assert!(rel(&rhs.explicit.omega, &oracle.omega) < 1e-12);
        assert!(rel(&rhs.explicit.m, &oracle.m) < 1e-12);
        // random data reaching beyond the band actually exercises the products
        assert!(state.m.coeff(0, 7, 0).norm() > 0.0);
    }

    #[test]
    fn coupling_terms_cancel_in_the_energy_balance() {
        // With ζ = χ0 = 0 and F = 0, H = -QM is curl-free and the transport,
        // Kelvin force, torque and spin terms exchange energy without loss.
        let g = two_pi(24);
        let p = FerroParams {
            zeta: 0.0,
            chi0: 0.0,
            ..awkward_params()
        };
        let s = solver(g, p, 0.01, 1.0);
        let state = s.prepare(&FerroState::random(g, 5, 9.0, 1.0)).unwrap();
        let r = s.compute_rhs(&state).unwrap();
        let n = &r.explicit;
        let exchange =
            p.rho0 * n.u.inner(&state.u) + p.rho0 * p.k * n.omega.inner(&state.omega) - p.mu0 * n.m.inner(&r.h);
        let scale = p.rho0 * n.u.norm() * state.u.norm() + p.mu0 * n.m.norm() * r.h.norm();
        assert!(exchange.abs() < 1e-12 * scale, "{exchange} vs {scale}");
        // transport and spin alone are orthogonal to each unknown
        assert!(n.omega.inner(&state.omega).abs() > 1e-6);
        let pure = solver(g, FerroParams { mu0: 0.0, ..p }, 0.01, 1.0)
            .compute_rhs(&state)
            .unwrap()
            .explicit;
        for (a, b) in [(&pure.u, &state.u), (&pure.omega, &state.omega), (&pure.m, &state.m)] {
            assert!(a.inner(b).abs() < 1e-12 * a.norm() * b.norm());
        }
    }

    #[test]
    fn galerkin_truncation_is_invariant() {
        let g = two_pi(32);
        let mut cfg = SolverConfig::new(g, awkward_params(), 0.01, 0.2);
        cfg.galerkin_n = Some(5.0);
        let s = Solver::new(cfg, Forcing::None).unwrap();
        let traj = s.run(&FerroState::random(g, 3, 10.0, 0.5)).unwrap();
        for snap in &traj.snapshots {
            let st = &snap.state;
            for f in [&st.u, &st.omega, &st.m] {
                assert_eq!(rel(&jn_truncate(f, 5.0), f), 0.0);
            }
        }
        assert!(traj.last().state.m.norm() > 0.0);
    }

    #[test]
    fn states_stay_real_solenoidal_and_mean_free() {
        let g = two_pi(24);
        let s = solver(g, awkward_params(), 0.01, 0.1);
        let traj = s.run(&FerroState::random(g, 8, 8.0, 1.0)).unwrap();
        for snap in &traj.snapshots {
            let st = &snap.state;
            assert!(divergence(&st.u).max_abs() < 1e-14 * st.u.max_abs().max(1.0));
            for f in [&st.u, &st.omega, &st.m, &snap.h] {
                assert_eq!(f.hermitian_defect(), 0.0);
                assert_eq!(f.mean_abs(), 0.0);
            }
        }
    }

    #[test]
    fn cfl_violation_and_blow_up_are_reported() {
        let g = two_pi(16);
        let s = solver(g, FerroParams::default(), 0.5, 1.0);
        let state = FerroState::random(g, 2, 4.0, 5.0);
        let err = s.run(&state).unwrap_err();
        assert!(matches!(err.error, FerroError::Cfl { .. }));
        assert_eq!(err.partial.snapshots.len(), 1);
        let mut nan = FerroState::zeros(g);
        nan.m.comp_mut(0)[1] = Complex64::new(f64::NAN, 0.0);
        assert!(matches!(s.step(&nan), Err(FerroError::BlowUp { .. })));
    }

    #[test]
    fn observer_sees_strided_snapshots() {
        let g = two_pi(16);
        let mut cfg = SolverConfig::new(g, FerroParams::default(), 0.01, 0.1);
        cfg.snapshot_stride = 4;
        let s = Solver::new(cfg, Forcing::None).unwrap();
        let mut times = Vec::new();
        s.run_observed(&FerroState::random(g, 1, 4.0, 0.2), |snap| times.push(snap.state.t))
            .unwrap();
        let expected = [0.0, 0.04, 0.08, 0.1];
        assert_eq!(times.len(), expected.len());
        for (a, b) in times.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn run_end(integ: Integrator, dt: f64) -> FerroState {
        let g = two_pi(16);
        let mut cfg = SolverConfig::new(g, awkward_params(), dt, 0.4);
        cfg.integrator = integ;
        let forcing = Forcing::DecayingMode {
            k_amp: 1.0,
            eta_decay: 0.5,
            mode: (1, 1),
        };
        let s = Solver::new(cfg, forcing).unwrap();
        s.run(&FerroState::random(g, 21, 4.0, 1.0))
            .unwrap()
            .last()
            .state
            .clone()
    }

    #[test]
    fn both_integrators_are_second_order() {
        for integ in [Integrator::Etdrk2, Integrator::ImexCn] {
            let a = run_end(integ, 0.04);
            let b = run_end(integ, 0.02);
            let c = run_end(integ, 0.01);
            let ratio = a.sub(&b).l2_norm() / b.sub(&c).l2_norm();
            assert!((ratio - 4.0).abs() < 0.6, "{integ:?}: {ratio}");
        }
    }

    #[test]
    fn strong_residual_shrinks_with_the_step() {
        let resid = |dt: f64| {
            let g = two_pi(16);
            let s = solver(g, awkward_params(), dt, 0.2);
            strong_residual(&s.run(&FerroState::random(g, 4, 4.0, 1.0)).unwrap()).unwrap()
        };
        let (a, b) = (resid(0.02), resid(0.01));
        assert!((a / b - 4.0).abs() < 1.0, "{a} {b}");
        let g = two_pi(16);
        let short = solver(g, FerroParams::default(), 0.1, 0.1)
            .run(&FerroState::zeros(g))
            .unwrap();
        assert!(matches!(strong_residual(&short), Err(FerroError::TooFewSnapshots(_))));
    }

    #[test]
    fn random_states_are_reproducible() {
        let g = two_pi(16);
        let a = FerroState::random(g, 9, 5.0, 0.5);
        assert_eq!(a, FerroState::random(g, 9, 5.0, 0.5));
        assert_ne!(a, FerroState::random(g, 10, 5.0, 0.5));
        assert!(divergence(&a.u).max_abs() < 1e-14);
        assert!((a.m.norm2() / g.area() - 0.25).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn unforced_energy_never_grows(seed in 0u64..1000, amp in 0.05f64..0.5) {
            let g = two_pi(16);
            let p = awkward_params();
            let s = solver(g, p, 0.01, 0.1);
            let traj = s.run(&FerroState::random(g, seed, 5.0, amp)).unwrap();
            let energy = |snap: &Snapshot| {
                let st = &snap.state;
                p.rho0 * st.u.norm2() + p.rho0 * p.k * st.omega.norm2() + p.mu0 * snap.h.norm2() + st.m.norm2()
            };
            for w in traj.snapshots.windows(2) {
                let (e0, e1) = (energy(&w[0]), energy(&w[1]));
                prop_assert!(e1 <= e0 + 10.0 * 1e-4 * e0, "{e0} -> {e1}");
            }
        }

        #[test]
        fn rhs_is_equivariant_under_translation(seed in 0u64..1000, s1 in -3i64..3, s2 in -3i64..3) {
            let g = two_pi(16);
            let s = solver(g, awkward_params(), 0.01, 0.1);
            let st = s.prepare(&FerroState::random(g, seed, 5.0, 0.6)).unwrap();
            let shift = |f: &SpectralField| f.map_modes(|i, v| {
                let (k1, k2) = g.wavenumber(i);
                let arg = -(k1 * s1 + k2 * s2) as f64 * PI / 8.0;
                v * Complex64::from_polar(1.0, arg)
            });
            let moved = FerroState { t: 0.0, u: shift(&st.u), omega: shift(&st.omega), m: shift(&st.m) };
            let a = s.compute_rhs(&moved).unwrap().total();
            let b = s.compute_rhs(&st).unwrap().total();
            prop_assert!(rel(&a.m, &shift(&b.m)) < 1e-12);
            prop_assert!(rel(&a.u, &shift(&b.u)) < 1e-12);
        }
    }
}
