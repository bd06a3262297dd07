//! Measurements taken along trajectories: energies and dissipations, the
//! energy inequality, twin-run stability in `Ḣ^{-1/2}`, algebraic decay fits,
//! per-mode Fourier bounds, higher-regularity budgets and the fractional
//! time-derivative norm used for compactness.
//!
//! Every inequality whose constant is left unspecified is audited by solving
//! for the smallest constant that makes it hold over the run.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{FerroError, Result};
use crate::lp::{gradient_norm2, sobolev_norm2, sobolev_norm_direct, sobolev_norm_lp, DyadicPartition, SobolevIndex};
use crate::magnetostatics::{pointwise_bound_check, solve_h};
use crate::solver::{FerroParams, FerroState, Forcing, Snapshot, Solver, SolverConfig, Trajectory};
use crate::spectral::{divergence, Grid, SpectralField};

/// Cumulative trapezoid rule, starting at zero.
pub fn cumulative_trapezoid(t: &[f64], y: &[f64]) -> Vec<f64> {
    assert_eq!(t.len(), y.len(), "abscissae and values differ in length");
    let mut out = Vec::with_capacity(t.len());
    let mut acc = 0.0;
    for i in 0..t.len() {
        if i > 0 {
            acc += 0.5 * (t[i] - t[i - 1]) * (y[i] + y[i - 1]);
        }
        out.push(acc);
    }
    out
}

fn check_uniform(t: &[f64]) -> Result<f64> {
    if t.len() < 2 {
        return Ok(0.0);
    }
    let h = t[1] - t[0];
    if t.windows(2)
        .any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs().max(1e-300))
    {
        return Err(FerroError::NonuniformSpacing);
    }
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    pub t: f64,
    /// `ρ0‖u‖² + ρ0k‖ω‖² + μ0‖H‖² + ‖M‖²`.
    pub energy: f64,
    /// `‖∇u‖² + ‖∇ω‖² + ‖∇M‖² + ‖div M‖² + ‖M‖² + ‖H‖²`.
    pub dissipation: f64,
    pub s: f64,
    /// `ρ0‖u‖²_{Ḣs} + ρ0k‖ω‖²_{Ḣs} + ‖M‖²_{Ḣs}`.
    pub energy_s: f64,
    /// `‖∇u‖²_{Ḣs} + ‖∇ω‖²_{Ḣs} + ‖∇M‖²_{Ḣs}`.
    pub dissipation_s: f64,
    /// Integrand of the forcing budget, `‖F‖² + ‖F‖²_{Ḣ⁻¹} + ‖∂tF‖²_{Ḣ⁻¹}`.
    pub forcing_density: f64,
}

pub fn energy_report(snap: &Snapshot, params: &FerroParams, forcing: &Forcing, s: f64) -> EnergyReport {
    let st = &snap.state;
    let p = params;
    let energy = p.rho0 * st.u.norm2() + p.rho0 * p.k * st.omega.norm2() + p.mu0 * snap.h.norm2() + st.m.norm2();
    let dissipation = gradient_norm2(&st.u, 0.0)
        + gradient_norm2(&st.omega, 0.0)
        + gradient_norm2(&st.m, 0.0)
        + divergence(&st.m).norm2()
        + st.m.norm2()
        + snap.h.norm2();
    let energy_s =
        p.rho0 * sobolev_norm2(&st.u, s) + p.rho0 * p.k * sobolev_norm2(&st.omega, s) + sobolev_norm2(&st.m, s);
    let dissipation_s = gradient_norm2(&st.u, s) + gradient_norm2(&st.omega, s) + gradient_norm2(&st.m, s);
    let dtf = forcing.time_derivative(st.grid(), st.t);
    let forcing_density = snap.f.norm2() + sobolev_norm2(&snap.f, -1.0) + sobolev_norm2(&dtf, -1.0);
    EnergyReport {
        t: st.t,
        energy,
        dissipation,
        s,
        energy_s,
        dissipation_s,
        forcing_density,
    }
}

pub fn energy_series(traj: &Trajectory, s: f64) -> Vec<EnergyReport> {
    traj.snapshots
        .iter()
        .map(|snap| energy_report(snap, &traj.config.params, &traj.forcing, s))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyAudit {
    pub reports: Vec<EnergyReport>,
    /// `∫₀ᵗ D` at each snapshot.
    pub dissipation_integral: Vec<f64>,
    /// `∫₀ᵗ (‖F‖² + ‖(F, ∂tF)‖²_{Ḣ⁻¹})` at each snapshot.
    pub forcing_budget: Vec<f64>,
    /// Smallest `C` with `E(t) + ∫D <= C(E(0) + budget(t))`; `None` when both sides vanish.
    pub constant: Option<f64>,
    /// Largest increase of `E` between consecutive snapshots.
    pub max_increase: f64,
    /// `10·dt²·E(0)`.
    pub monotone_tolerance: f64,
    /// Whether `E` is non-increasing within tolerance; only judged when `F ≡ 0`.
    pub monotone: Option<bool>,
}

impl EnergyAudit {
    /// `(E(T) + c∫₀ᵀD)/E(0)`, which the dissipation law keeps `<= 1` when `F ≡ 0`.
    pub fn dissipation_law_ratio(&self, c: f64) -> Option<f64> {
        let e0 = self.reports.first()?.energy;
        let last = self.reports.last()?.energy;
        let d = *self.dissipation_integral.last()?;
        (e0 > 0.0).then(|| (last + c * d) / e0)
    }
}

pub fn energy_inequality_audit(traj: &Trajectory) -> EnergyAudit {
    let reports = energy_series(traj, 0.0);
    let t: Vec<f64> = reports.iter().map(|r| r.t).collect();
    let dissipation_integral = cumulative_trapezoid(&t, &reports.iter().map(|r| r.dissipation).collect::<Vec<_>>());
    let forcing_budget = cumulative_trapezoid(&t, &reports.iter().map(|r| r.forcing_density).collect::<Vec<_>>());
    let e0 = reports.first().map_or(0.0, |r| r.energy);
    let mut constant: Option<f64> = None;
    for (i, r) in reports.iter().enumerate() {
        let lhs = r.energy + dissipation_integral[i];
        let rhs = e0 + forcing_budget[i];
        if rhs > 0.0 {
            constant = Some(constant.map_or(lhs / rhs, |c| c.max(lhs / rhs)));
        }
    }
    let max_increase = reports
        .windows(2)
        .map(|w| w[1].energy - w[0].energy)
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0);
    let dt = traj.config.dt;
    let monotone_tolerance = 10.0 * dt * dt * e0;
    let monotone = traj.forcing.is_none().then_some(max_increase <= monotone_tolerance);
    EnergyAudit {
        reports,
        dissipation_integral,
        forcing_budget,
        constant,
        max_increase,
        monotone_tolerance,
        monotone,
    }
}

/// One snapshot of a twin run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwinReport {
    pub t: f64,
    /// `ρ0‖δu‖²_{Ḣ^{-1/2}} + ρ0k‖δω‖²_{Ḣ^{-1/2}} + ‖δM‖²_{Ḣ^{-1/2}}`.
    pub delta_energy: f64,
    /// Gronwall factor sample `f(t)`.
    pub factor: f64,
    /// `∫₀ᵗ f`.
    pub factor_integral: f64,
}

impl TwinReport {
    /// `δ𝓔(0)·exp(C∫₀ᵗ f)`.
    pub fn envelope(&self, initial: f64, constant: f64) -> f64 {
        initial * (constant * self.factor_integral).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwinOutcome {
    pub eps: f64,
    pub mode: (i64, i64),
    pub reports: Vec<TwinReport>,
    /// Smallest `C_g` with `δ𝓔(t) <= δ𝓔(0)exp(C_g∫f)`, reported as found (it
    /// may be negative when the difference only contracts); `None` when `δ𝓔(0) = 0`.
    pub constant: Option<f64>,
}

impl TwinOutcome {
    pub fn initial(&self) -> f64 {
        self.reports.first().map_or(0.0, |r| r.delta_energy)
    }

    pub fn last(&self) -> &TwinReport {
        self.reports.last().expect("twin runs keep the initial snapshot")
    }
}

/// Mid-band perturbation wavevector `(⌊n1/6⌋, 0)`.
pub fn default_twin_mode(grid: &Grid) -> (i64, i64) {
    ((grid.n1() / 6) as i64, 0)
}

fn delta_energy(a: &FerroState, b: &FerroState, p: &FerroParams) -> f64 {
    p.rho0 * sobolev_norm2(&a.u.sub(&b.u), -0.5)
        + p.rho0 * p.k * sobolev_norm2(&a.omega.sub(&b.omega), -0.5)
        + sobolev_norm2(&a.m.sub(&b.m), -0.5)
}

/// `(1 + ‖(M, M̃, H, H̃, ω, ω̃, δM)‖² + ‖M‖^{2/3})(1 + ‖∇(u, ũ, ω, ω̃, M, M̃, H, H̃, δM)‖²)`.
pub fn gronwall_factor(a: &Snapshot, b: &Snapshot) -> f64 {
    let (x, y) = (&a.state, &b.state);
    let dm = x.m.sub(&y.m);
    let low = x.m.norm2() + y.m.norm2() + a.h.norm2() + b.h.norm2() + x.omega.norm2() + y.omega.norm2() + dm.norm2();
    let grads = [&x.u, &y.u, &x.omega, &y.omega, &x.m, &y.m, &a.h, &b.h, &dm]
        .iter()
        .map(|f| gradient_norm2(f, 0.0))
        .sum::<f64>();
    (1.0 + low + x.m.norm().powf(2.0 / 3.0)) * (1.0 + grads)
}

/// Runs `initial` and a copy whose `M1` carries an extra `eps·cos(ξ_mode·x)`,
/// and compares them snapshot by snapshot.
pub fn twin_experiment(
    config: &SolverConfig,
    forcing: &Forcing,
    initial: &FerroState,
    eps: f64,
    mode: (i64, i64),
) -> Result<TwinOutcome> {
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(FerroError::InvalidParameter("perturbation eps must be >= 0".into()));
    }
    let solver = Solver::new(config.clone(), forcing.clone())?;
    let g = *solver.grid();
    let idx = g.index_of(mode.0, mode.1).filter(|&i| solver.keeps(i)).ok_or_else(|| {
        FerroError::InvalidParameter(format!("perturbation mode {mode:?} is outside the retained band"))
    })?;
    let base = solver.prepare(initial)?;
    let mut twin = base.clone();
    twin.m.comp_mut(0)[idx] += Complex64::new(0.5 * eps, 0.0);
    twin.m.comp_mut(0)[g.partner(idx)] += Complex64::new(0.5 * eps, 0.0);

    let (ra, rb) = rayon::join(|| solver.run(&base), || solver.run(&twin));
    let ta = ra.map_err(|e| e.error)?;
    let tb = rb.map_err(|e| e.error)?;
    let p = config.params;
    let mut reports = Vec::with_capacity(ta.snapshots.len());
    let mut integral = 0.0;
    for (i, (a, b)) in ta.snapshots.iter().zip(&tb.snapshots).enumerate() {
        let factor = gronwall_factor(a, b);
        if i > 0 {
            let prev: &TwinReport = &reports[i - 1];
            integral += 0.5 * (a.state.t - prev.t) * (factor + prev.factor);
        }
        reports.push(TwinReport {
            t: a.state.t,
            delta_energy: delta_energy(&a.state, &b.state, &p),
            factor,
            factor_integral: integral,
        });
    }
    let d0 = reports[0].delta_energy;
    let constant = (d0 > 0.0).then(|| {
        reports
            .iter()
            .skip(1)
            .filter(|r| r.factor_integral > 0.0)
            .map(|r| (r.delta_energy / d0).ln() / r.factor_integral)
            .fold(f64::NEG_INFINITY, f64::max)
    });
    Ok(TwinOutcome {
        eps,
        mode,
        reports,
        constant: constant.filter(|c| c.is_finite()),
    })
}

/// Least-squares slope of `-log E` against `log(1+t)` over samples with
/// `t ∈ [t0, t1]` and `E > 0`; `None` with fewer than two usable samples.
pub fn fit_decay_exponent(t: &[f64], e: &[f64], window: (f64, f64)) -> Option<f64> {
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(e)
        .filter(|(&t, &e)| t >= window.0 && t <= window.1 && e > 0.0)
        .map(|(&t, &e)| ((1.0 + t).ln(), -e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    pub times: Vec<f64>,
    pub energies: Vec<f64>,
    pub alpha_target: f64,
    pub fit_window: (f64, f64),
    /// `None` when the energy vanishes on the window.
    pub fitted_alpha: Option<f64>,
    /// `max_t E(t)(1+t)^α`.
    pub envelope_constant: f64,
}

impl DecayReport {
    /// Splitting radius `ν(t) = (α/(1+t))^{1/2}`.
    pub fn nu(&self, t: f64) -> f64 {
        (self.alpha_target / (1.0 + t)).sqrt()
    }

    /// `∫₀ᵗ ν² = α log(1+t)`.
    pub fn nu_integral(&self, t: f64) -> f64 {
        self.alpha_target * (1.0 + t).ln()
    }

    /// Whether `E` decays at least as fast as `(1+t)^{-α}` up to `tolerance`;
    /// identically zero energy passes.
    pub fn passes(&self, tolerance: f64) -> bool {
        match self.fitted_alpha {
            Some(a) => a >= self.alpha_target - tolerance,
            None => self.energies.iter().all(|&e| e == 0.0),
        }
    }
}

/// Streams a run and fits the algebraic decay rate of `E` over `window`.
pub fn decay_experiment(
    config: &SolverConfig,
    forcing: &Forcing,
    initial: &FerroState,
    alpha: f64,
    window: (f64, f64),
) -> Result<DecayReport> {
    if !(window.0 >= 0.0 && window.1 > window.0) {
        return Err(FerroError::InvalidParameter(
            "fit window must satisfy 0 <= t0 < t1".into(),
        ));
    }
    if window.1 > config.t_end + 1e-9 * config.t_end {
        return Err(FerroError::InvalidParameter(format!(
            "fit window ends at {} after the horizon {}",
            window.1, config.t_end
        )));
    }
    if let Forcing::DecayingMode { eta_decay, .. } = forcing {
        if !(alpha < *eta_decay) {
            return Err(FerroError::InvalidParameter(format!(
                "alpha = {alpha} must be below the forcing exponent {eta_decay}"
            )));
        }
    }
    if !(alpha > 0.0) {
        return Err(FerroError::InvalidParameter("alpha must be > 0".into()));
    }
    let solver = Solver::new(config.clone(), forcing.clone())?;
    let params = config.params;
    let mut times = Vec::new();
    let mut energies = Vec::new();
    solver
        .run_observed(initial, |snap| {
            times.push(snap.state.t);
            energies.push(energy_report(snap, &params, forcing, 0.0).energy);
        })
        .map_err(|(e, _)| e)?;
    let fitted_alpha = fit_decay_exponent(&times, &energies, window);
    let envelope_constant = times
        .iter()
        .zip(&energies)
        .map(|(&t, &e)| e * (1.0 + t).powf(alpha))
        .fold(0.0, f64::max);
    Ok(DecayReport {
        times,
        energies,
        alpha_target: alpha,
        fit_window: window,
        fitted_alpha,
        envelope_constant,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointwiseAudit {
    /// Smallest `C` making the per-mode bound hold at the first snapshot.
    pub constant: f64,
    /// `min (initial terms + C + ∫|ξ|⁻²|F̂|² - LHS)` over later snapshots and modes.
    pub worst_slack: f64,
    /// Largest per-mode left-hand side seen, the scale for tolerances.
    pub scale: f64,
    /// Worst slack of `|Ĥ|² <= 2|M̂|² + |ξ|⁻²|F̂|²` over all snapshots.
    pub field_bound_slack: f64,
    /// Its scale.
    pub field_bound_scale: f64,
    /// Same with constant 2 on the forcing term.
    pub sharp_field_bound_slack: f64,
}

impl PointwiseAudit {
    pub fn field_bound_holds(&self) -> bool {
        self.field_bound_slack >= -1e-12 * self.field_bound_scale
    }
}

fn mode_energy(fields: &[&SpectralField], idx: usize) -> f64 {
    fields
        .iter()
        .map(|f| f.components().iter().map(|c| c[idx].norm_sqr()).sum::<f64>())
        .sum()
}

/// Per-mode audit of `|û|² + |ω̂|² + |M̂|² + |Ĥ|² <= |û0|² + |ω̂0|² + |M̂0|² + C + ∫|ξ|⁻²|F̂|²`
/// with coefficients in the grid's amplitude convention.
pub fn pointwise_fourier_audit(traj: &Trajectory) -> PointwiseAudit {
    let snaps = &traj.snapshots;
    let g = *snaps[0].state.grid();
    let lhs = |s: &Snapshot, idx: usize| mode_energy(&[&s.state.u, &s.state.omega, &s.state.m, &s.h], idx);
    let init: Vec<f64> = (0..g.len())
        .map(|i| mode_energy(&[&snaps[0].state.u, &snaps[0].state.omega, &snaps[0].state.m], i))
        .collect();
    let forcing_weight = |s: &Snapshot, idx: usize| {
        let k2 = g.xi_norm2(idx);
        if k2 == 0.0 {
            0.0
        } else {
            s.f.comp(0)[idx].norm_sqr() / k2
        }
    };
    let constant = (1..g.len()).map(|i| lhs(&snaps[0], i) - init[i]).fold(0.0, f64::max);
    let mut integral = vec![0.0; g.len()];
    let mut worst_slack = f64::INFINITY;
    let mut scale: f64 = 0.0;
    let mut field_bound_slack = f64::INFINITY;
    let mut field_bound_scale: f64 = 0.0;
    let mut sharp_field_bound_slack = f64::INFINITY;
    for (n, s) in snaps.iter().enumerate() {
        if n > 0 {
            let dt = s.state.t - snaps[n - 1].state.t;
            for (i, acc) in integral.iter_mut().enumerate() {
                *acc += 0.5 * dt * (forcing_weight(s, i) + forcing_weight(&snaps[n - 1], i));
            }
        }
        for i in 1..g.len() {
            let l = lhs(s, i);
            scale = scale.max(l);
            if n > 0 {
                worst_slack = worst_slack.min(init[i] + constant + integral[i] - l);
            }
        }
        if let Ok(sol) = solve_h(&s.state.m, &s.f) {
            let slack = pointwise_bound_check(&sol, &s.state.m, &s.f);
            field_bound_slack = field_bound_slack.min(slack.min_slack);
            field_bound_scale = field_bound_scale.max(slack.scale);
            sharp_field_bound_slack = sharp_field_bound_slack.min(slack.min_sharp_slack);
        }
    }
    if snaps.len() < 2 {
        worst_slack = 0.0;
    }
    PointwiseAudit {
        constant,
        worst_slack,
        scale,
        field_bound_slack,
        field_bound_scale,
        sharp_field_bound_slack,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityReport {
    pub s: f64,
    pub sup_energy_s: f64,
    /// `∫₀ᵀ D_s`.
    pub dissipation_integral: f64,
    /// `∫₀ᵀ (‖F‖²_{Ḣs} + ‖F‖²_{Ḣ^{s-1}} + ‖∂tF‖²_{Ḣ^{s-1}})`.
    pub forcing_integral: f64,
    /// Smallest `C` with `½E_s(t) + ∫₀ᵗD_s <= C(½E_s(0) + ∫₀ᵗ forcing)` over the run.
    pub constant: Option<f64>,
    /// Range of `‖·‖_{LP}/‖·‖_{direct}` over the fields of every snapshot.
    pub lp_ratio: (f64, f64),
}

/// Streaming form of [`regularity_audit`]: keeps only per-snapshot scalars,
/// so long runs can be audited without holding the trajectory.
#[derive(Debug, Clone)]
pub struct RegularityAccumulator {
    index: SobolevIndex,
    params: FerroParams,
    forcing: Forcing,
    part: DyadicPartition,
    t: Vec<f64>,
    es: Vec<f64>,
    ds: Vec<f64>,
    fs: Vec<f64>,
    lp_ratio: (f64, f64),
}

impl RegularityAccumulator {
    pub fn new(grid: Grid, params: FerroParams, forcing: Forcing, s: f64) -> Result<Self> {
        if !(s > 0.0) {
            return Err(FerroError::InvalidParameter("regularity index s must be > 0".into()));
        }
        Ok(Self {
            index: SobolevIndex::new(s)?,
            params,
            forcing,
            part: DyadicPartition::new(grid),
            t: Vec::new(),
            es: Vec::new(),
            ds: Vec::new(),
            fs: Vec::new(),
            lp_ratio: (f64::INFINITY, f64::NEG_INFINITY),
        })
    }

    /// Snapshots must arrive in time order.
    pub fn push(&mut self, snap: &Snapshot) {
        let s = self.index.value();
        let p = self.params;
        let st = &snap.state;
        self.t.push(st.t);
        self.es.push(
            p.rho0 * sobolev_norm2(&st.u, s) + p.rho0 * p.k * sobolev_norm2(&st.omega, s) + sobolev_norm2(&st.m, s),
        );
        self.ds
            .push(gradient_norm2(&st.u, s) + gradient_norm2(&st.omega, s) + gradient_norm2(&st.m, s));
        let dtf = self.forcing.time_derivative(st.grid(), st.t);
        self.fs
            .push(sobolev_norm2(&snap.f, s) + sobolev_norm2(&snap.f, s - 1.0) + sobolev_norm2(&dtf, s - 1.0));
        for f in [&st.u, &st.omega, &st.m] {
            let direct = sobolev_norm_direct(f, self.index);
            if direct > 0.0 {
                let r = sobolev_norm_lp(f, self.index, &self.part) / direct;
                self.lp_ratio = (self.lp_ratio.0.min(r), self.lp_ratio.1.max(r));
            }
        }
    }

    pub fn finish(&self) -> RegularityReport {
        let (t, es) = (&self.t, &self.es);
        let d_int = cumulative_trapezoid(t, &self.ds);
        let f_int = cumulative_trapezoid(t, &self.fs);
        let mut constant: Option<f64> = None;
        for i in 0..t.len() {
            let rhs = 0.5 * es[0] + f_int[i];
            if rhs > 0.0 {
                let c = (0.5 * es[i] + d_int[i]) / rhs;
                constant = Some(constant.map_or(c, |k| k.max(c)));
            }
        }
        let lp_ratio = if self.lp_ratio.0 > self.lp_ratio.1 {
            (1.0, 1.0)
        } else {
            self.lp_ratio
        };
        RegularityReport {
            s: self.index.value(),
            sup_energy_s: es.iter().copied().fold(0.0, f64::max),
            dissipation_integral: *d_int.last().unwrap_or(&0.0),
            forcing_integral: *f_int.last().unwrap_or(&0.0),
            constant,
            lp_ratio,
        }
    }
}

pub fn regularity_audit(traj: &Trajectory, s: f64) -> Result<RegularityReport> {
    let mut acc = RegularityAccumulator::new(traj.config.grid, traj.config.params, traj.forcing.clone(), s)?;
    for snap in &traj.snapshots {
        acc.push(snap);
    }
    Ok(acc.finish())
}

/// Components of `V = (u, ω, M)` in order `u1, u2, ω, M1, M2`.
fn state_component(s: &FerroState, c: usize) -> &[Complex64] {
    match c {
        0 | 1 => s.u.comp(c),
        2 => s.omega.comp(0),
        _ => s.m.comp(c - 3),
    }
}

/// `(∫|τ|^{2γ}‖ṽ(τ)‖²_{H^{-N}}dτ)^{1/2}` for the state sequence `V = (u, ω, M)`
/// sampled with spacing `h` and extended by zero: each sample stands for the
/// interval `[t_n, t_n + h)`, the time transform is taken with `e^{-2πiτt}`
/// on a zero-padded grid, `|τ|^{2γ}` is averaged over each frequency cell and
/// the spatial weight is `(1+|ξ|²)^{-N}`.
pub fn fractional_time_norm_of(states: &[FerroState], h: f64, gamma: f64, n_neg: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 0.5) {
        return Err(FerroError::InvalidParameter("gamma must lie in (0, 1/2)".into()));
    }
    if !(n_neg >= 0.0) {
        return Err(FerroError::InvalidParameter("N must be >= 0".into()));
    }
    if states.is_empty() {
        return Ok(0.0);
    }
    if !(h > 0.0) {
        return Err(FerroError::NonuniformSpacing);
    }
    let g = *states[0].grid();
    let nt = states.len();
    let len = (8 * nt).next_power_of_two();
    let dtau = 1.0 / (len as f64 * h);
    // |τ|^{2γ} averaged over each frequency cell, which resolves the cusp at 0
    let e = 2.0 * gamma + 1.0;
    let weight: Vec<f64> = (0..len)
        .map(|m| {
            let k = if m <= len / 2 { m as f64 } else { len as f64 - m as f64 };
            let (a, b) = ((k - 0.5).max(0.0) * dtau, (k + 0.5) * dtau);
            let cell = if k == 0.0 {
                2.0 * b.powf(e)
            } else {
                b.powf(e) - a.powf(e)
            };
            cell / (e * dtau)
        })
        .collect();
    let fft = FftPlanner::new().plan_fft_forward(len);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    let mut total = 0.0;
    for idx in 0..g.len() {
        let spatial = (1.0 + g.xi_norm2(idx)).powf(-n_neg);
        for c in 0..5 {
            if states
                .iter()
                .all(|s| state_component(s, c)[idx] == Complex64::new(0.0, 0.0))
            {
                continue;
            }
            buf.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
            for (n, s) in states.iter().enumerate() {
                buf[n] = state_component(s, c)[idx] * h;
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            let acc: f64 = buf.iter().zip(&weight).map(|(v, w)| w * v.norm_sqr()).sum();
            total += spatial * acc;
        }
    }
    Ok((total * g.area() * dtau).sqrt())
}

pub fn fractional_time_norm(traj: &Trajectory, gamma: f64, n_neg: f64) -> Result<f64> {
    let t = traj.times();
    let h = check_uniform(&t)?;
    let states: Vec<FerroState> = traj.snapshots.iter().map(|s| s.state.clone()).collect();
    let h = if states.len() == 1 { traj.spacing() } else { h };
    fractional_time_norm_of(&states, h, gamma, n_neg)
}
