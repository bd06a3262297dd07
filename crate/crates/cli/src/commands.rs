//! The subcommands. Each writes its CSV files into the output directory and
//! returns the list of failed assertions; the binary exits nonzero when that
//! list is not empty.

use std::path::{Path, PathBuf};

use num_complex::Complex64;

use ferro_core::diagnostics::{
    decay_experiment, default_twin_mode, energy_report, fractional_time_norm_of, twin_experiment, RegularityAccumulator,
};
use ferro_core::lp::{
    bernstein_probe, commutator_probe, inequality_probe, paraproduct, phi, remainder, DyadicPartition, ProbeFields,
    ProbeKind,
};
use ferro_core::magnetostatics::{constraint_residual, delta_h_identities, pointwise_bound_check, solve_h};
use ferro_core::random::{random_field, RandomSpec};
use ferro_core::solver::{FerroState, Solver};
use ferro_core::spectral::{exact_product, leray_project};
use ferro_core::{Grid, SpectralField};

use crate::config::{ExperimentConfig, FieldName, InitSpec};
use crate::dump::{read_dump, write_dump, FieldDump};
use crate::report::{float, Csv};
use crate::CliError;

/// Files written and assertions that failed.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Outcome {
    pub written: Vec<PathBuf>,
    pub failures: Vec<String>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn write(&mut self, csv: &Csv, dir: &Path, name: &str) -> Result<(), CliError> {
        let path = dir.join(name);
        csv.write(&path)?;
        self.written.push(path);
        Ok(())
    }

    fn fail(&mut self, msg: String) {
        self.failures.push(msg);
    }
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Initial state described by the configuration.
pub fn initial_state(cfg: &ExperimentConfig) -> Result<FerroState, CliError> {
    let g = cfg.grid()?;
    match &cfg.init {
        InitSpec::Zero => Ok(FerroState::zeros(g)),
        InitSpec::Random { seed, band, amplitude } => Ok(FerroState::random(g, *seed, *band, *amplitude)),
        InitSpec::File(path) => read_dump(path)?.to_state(&g),
        InitSpec::Modes(list) => {
            let mut s = FerroState::zeros(g);
            for m in list {
                if g.index_of(m.k.0, m.k.1)
                    .filter(|&i| !g.is_nyquist(i) && i != 0)
                    .is_none()
                {
                    return Err(CliError::Usage(format!(
                        "initial mode {:?} is not a nonzero non-Nyquist mode of the grid",
                        m.k
                    )));
                }
                // a cos + b sin = Re((a - ib) e^{iξx})
                let v = Complex64::new(0.5 * m.cos_amp, -0.5 * m.sin_amp);
                let (field, c) = match m.field {
                    FieldName::U1 => (&mut s.u, 0),
                    FieldName::U2 => (&mut s.u, 1),
                    FieldName::Omega => (&mut s.omega, 0),
                    FieldName::M1 => (&mut s.m, 0),
                    FieldName::M2 => (&mut s.m, 1),
                };
                field.add_real_mode(c, m.k.0, m.k.1, v);
            }
            Ok(s)
        }
    }
}

/// Fractional time regularity `‖V‖_{H^γ(H^{-N})}` requested from `simulate`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeNormRequest {
    pub gamma: f64,
    pub n_bound: f64,
}

/// Runs the configured experiment, dumping every snapshot and writing
/// `energy.csv`, plus `time_norm.csv` when a time norm is requested.
pub fn simulate(cfg: &ExperimentConfig, out: &Path, time_norm: Option<TimeNormRequest>) -> Result<Outcome, CliError> {
    prepare_dir(out)?;
    let solver = Solver::new(cfg.solver_config()?, cfg.forcing()?)?;
    let init = initial_state(cfg)?;
    let mut outcome = Outcome::default();
    let mut csv = Csv::new(&["t", "energy", "dissipation", "forcing_density"]);
    let mut io_error = None;
    let mut energies = Vec::new();
    let params = cfg.params;
    let forcing = solver.forcing().clone();
    let mut index = 0usize;
    let mut states = Vec::new();
    let result = solver.run_observed(&init, |snap| {
        if time_norm.is_some() {
            states.push(snap.state.clone());
        }
        let r = energy_report(snap, &params, &forcing, 0.0);
        csv.floats(&[r.t, r.energy, r.dissipation, r.forcing_density]);
        energies.push(r.energy);
        if io_error.is_none() {
            let path = out.join(format!("snap_{index:05}.ferr"));
            match FieldDump::from_snapshot(snap).and_then(|d| write_dump(&d, &path)) {
                Ok(()) => outcome.written.push(path),
                Err(e) => io_error = Some(e),
            }
        }
        index += 1;
    });
    if let Some(e) = io_error {
        return Err(e);
    }
    if let Err((e, t)) = result {
        outcome.fail(format!("run: {e} (last snapshot at t = {t})"));
    }
    if forcing.is_none() {
        let tol = 10.0 * cfg.dt * cfg.dt * energies.first().copied().unwrap_or(0.0);
        for (i, w) in energies.windows(2).enumerate() {
            if w[1] > w[0] + tol {
                outcome.fail(format!(
                    "energy: unforced energy grew from {} to {} between snapshots {i} and {}",
                    w[0],
                    w[1],
                    i + 1
                ));
            }
        }
    }
    outcome.write(&csv, out, "energy.csv")?;
    if let Some(req) = time_norm {
        let config = solver.config();
        // the final snapshot breaks the uniform spacing unless it lands on the stride
        if config.steps()? % config.snapshot_stride != 0 {
            states.pop();
        }
        let h = config.dt * config.snapshot_stride as f64;
        let norm = fractional_time_norm_of(&states, h, req.gamma, req.n_bound)?;
        let mut tn = Csv::new(&["gamma", "n_bound", "snapshots", "spacing", "norm"]);
        tn.row(vec![
            float(req.gamma),
            float(req.n_bound),
            states.len().to_string(),
            float(h),
            float(norm),
        ]);
        outcome.write(&tn, out, "time_norm.csv")?;
        if !norm.is_finite() {
            outcome.fail(format!("time norm: non-finite value {norm}"));
        }
    }
    Ok(outcome)
}

pub fn decay(cfg: &ExperimentConfig, out: &Path, alpha: f64, window: (f64, f64)) -> Result<Outcome, CliError> {
    prepare_dir(out)?;
    let report = decay_experiment(
        &cfg.solver_config()?,
        &cfg.forcing()?,
        &initial_state(cfg)?,
        alpha,
        window,
    )?;
    let mut outcome = Outcome::default();
    let mut series = Csv::new(&["t", "energy", "envelope"]);
    for (&t, &e) in report.times.iter().zip(&report.energies) {
        series.floats(&[t, e, report.envelope_constant * (1.0 + t).powf(-alpha)]);
    }
    outcome.write(&series, out, "decay_report.csv")?;
    let mut fit = Csv::new(&[
        "alpha_target",
        "fitted_alpha",
        "envelope_constant",
        "fit_start",
        "fit_end",
        "passed",
    ]);
    fit.row(vec![
        float(alpha),
        report.fitted_alpha.map_or("none".into(), float),
        float(report.envelope_constant),
        float(window.0),
        float(window.1),
        report.passes(0.0).to_string(),
    ]);
    outcome.write(&fit, out, "decay_fit.csv")?;
    if !report.passes(0.0) {
        outcome.fail(format!(
            "decay: fitted exponent {:?} is below the target {alpha}",
            report.fitted_alpha
        ));
    }
    Ok(outcome)
}

pub fn twin(cfg: &ExperimentConfig, out: &Path, eps: f64) -> Result<Outcome, CliError> {
    prepare_dir(out)?;
    let g = cfg.grid()?;
    let mode = default_twin_mode(&g);
    let tw = twin_experiment(&cfg.solver_config()?, &cfg.forcing()?, &initial_state(cfg)?, eps, mode)?;
    let mut outcome = Outcome::default();
    let c = tw.constant.unwrap_or(0.0);
    let d0 = tw.initial();
    let mut csv = Csv::new(&["t", "delta_energy", "factor", "factor_integral", "envelope"]);
    for r in &tw.reports {
        csv.floats(&[r.t, r.delta_energy, r.factor, r.factor_integral, r.envelope(d0, c)]);
        if r.delta_energy > r.envelope(d0, c) * (1.0 + 1e-9) {
            outcome.fail(format!(
                "twin: difference {} exceeds its envelope at t = {}",
                r.delta_energy, r.t
            ));
        }
    }
    outcome.write(&csv, out, "twin_report.csv")?;
    let mut summary = Csv::new(&["eps", "mode_k1", "mode_k2", "c_g"]);
    summary.row(vec![
        float(eps),
        mode.0.to_string(),
        mode.1.to_string(),
        tw.constant.map_or("none".into(), float),
    ]);
    outcome.write(&summary, out, "twin_summary.csv")?;
    Ok(outcome)
}

/// `[8^{-|s|}/√3, 8^{|s|}√3]`.
pub fn equivalence_band(s: f64) -> (f64, f64) {
    let spread = 8f64.powf(s.abs());
    (1.0 / (spread * 3f64.sqrt()), spread * 3f64.sqrt())
}

pub fn regsweep(cfg: &ExperimentConfig, out: &Path, indices: &[f64]) -> Result<Outcome, CliError> {
    prepare_dir(out)?;
    let solver = Solver::new(cfg.solver_config()?, cfg.forcing()?)?;
    let mut audits = indices
        .iter()
        .map(|&s| RegularityAccumulator::new(*solver.grid(), cfg.params, solver.forcing().clone(), s))
        .collect::<Result<Vec<_>, _>>()?;
    let mut outcome = Outcome::default();
    if let Err((e, t)) = solver.run_observed(&initial_state(cfg)?, |snap| {
        audits.iter_mut().for_each(|a| a.push(snap))
    }) {
        outcome.fail(format!("run: {e} (last snapshot at t = {t})"));
    }
    let mut csv = Csv::new(&[
        "s",
        "sup_energy_s",
        "dissipation_integral",
        "forcing_integral",
        "constant",
        "lp_ratio_min",
        "lp_ratio_max",
    ]);
    for r in audits.iter().map(RegularityAccumulator::finish) {
        let s = r.s;
        csv.row(vec![
            float(s),
            float(r.sup_energy_s),
            float(r.dissipation_integral),
            float(r.forcing_integral),
            r.constant.map_or("none".into(), float),
            float(r.lp_ratio.0),
            float(r.lp_ratio.1),
        ]);
        if !r.sup_energy_s.is_finite() || r.constant.is_some_and(|c| !c.is_finite()) {
            outcome.fail(format!("regularity s = {s}: unbounded budget"));
        }
        let (lo, hi) = equivalence_band(s);
        if r.lp_ratio.0 < lo || r.lp_ratio.1 > hi {
            outcome.fail(format!(
                "regularity s = {s}: LP/direct ratio range [{}, {}] leaves [{lo}, {hi}]",
                r.lp_ratio.0, r.lp_ratio.1
            ));
        }
    }
    outcome.write(&csv, out, "regularity.csv")?;
    Ok(outcome)
}

fn spec(seed: u64, band: f64) -> RandomSpec {
    RandomSpec {
        seed,
        band,
        amplitude: 1.0,
    }
}

/// Integer band reaching a third of the smaller grid size.
fn random_band(g: &Grid) -> f64 {
    (g.n1().min(g.n2()) / 3) as f64
}

pub fn max_relative_error(a: &SpectralField, b: &SpectralField) -> f64 {
    let scale = b.max_abs();
    if scale == 0.0 {
        a.max_abs()
    } else {
        a.sub(b).max_abs() / scale
    }
}

/// Worst `|Σ_j φ_j(|ξ|) - 1|` over the nonzero modes of the grid.
pub fn partition_of_unity_error(part: &DyadicPartition, g: &Grid) -> f64 {
    (1..g.len())
        .map(|i| {
            let r = g.xi_norm2(i).sqrt();
            (part.blocks().map(|j| phi(j, r)).sum::<f64>() - 1.0).abs()
        })
        .fold(0.0, f64::max)
}

pub fn lpcheck(cfg: &ExperimentConfig, out: &Path, trials: usize, seed: u64) -> Result<Outcome, CliError> {
    prepare_dir(out)?;
    let g = cfg.grid()?;
    let part = DyadicPartition::new(g);
    let band = random_band(&g);
    let mut outcome = Outcome::default();

    let mut bony = Csv::new(&["trial", "max_relative_error"]);
    let mut worst: f64 = 0.0;
    for t in 0..trials {
        let a = random_field(g, 1, spec(seed + 2 * t as u64, band));
        let b = random_field(g, 1, spec(seed + 2 * t as u64 + 1, band));
        let sum = paraproduct(&a, &b, &part)
            .add(&paraproduct(&b, &a, &part))
            .add(&remainder(&a, &b, &part));
        let err = max_relative_error(&sum, &exact_product(&a, &b));
        worst = worst.max(err);
        bony.row(vec![t.to_string(), float(err)]);
    }
    outcome.write(&bony, out, "bony.csv")?;
    if worst > 1e-11 {
        outcome.fail(format!("bony: reconstruction error {worst} exceeds 1e-11"));
    }
    let unity = partition_of_unity_error(&part, &g);
    let mut u = Csv::new(&["max_error"]);
    u.floats(&[unity]);
    outcome.write(&u, out, "unity.csv")?;
    if unity > 1e-12 {
        outcome.fail(format!("unity: partition of unity error {unity} exceeds 1e-12"));
    }

    let mut bern = Csv::new(&["j", "trials", "min_ratio", "max_ratio"]);
    // blocks the grid cannot carry are listed as unresolved, not failed
    for j in (1..=4).filter(|&j| part.is_resolved(j)) {
        match bernstein_probe(j, trials, seed + 1000 + j as u64, &part) {
            Ok(st) => {
                bern.row(vec![j.to_string(), trials.to_string(), float(st.min), float(st.max)]);
                if st.min < 0.25 || st.max > 4.0 {
                    outcome.fail(format!(
                        "bernstein j = {j}: ratios [{}, {}] leave [1/4, 4]",
                        st.min, st.max
                    ));
                }
            }
            Err(e) => outcome.fail(format!("bernstein j = {j}: {e}")),
        }
    }
    for j in (1..=4).filter(|&j| !part.is_resolved(j)) {
        bern.row(vec![
            j.to_string(),
            "0".into(),
            "unresolved".into(),
            "unresolved".into(),
        ]);
    }
    outcome.write(&bern, out, "bernstein.csv")?;

    let mut comm = Csv::new(&["trial", "theta", "lhs", "rhs", "ratio"]);
    let mut ineq = Csv::new(&["trial", "kind", "s", "eps", "lhs", "rhs", "ratio"]);
    for t in 0..trials.min(10) {
        let base = seed + 5000 + 10 * t as u64;
        let v = leray_project(&random_field(g, 2, spec(base, band)));
        let b = random_field(g, 1, spec(base + 1, band));
        for theta in [-0.5, 0.0, 0.5] {
            let r = commutator_probe(&v, &b, theta)?;
            comm.row(vec![
                t.to_string(),
                float(theta),
                float(r.lhs),
                float(r.rhs),
                float(r.ratio),
            ]);
        }
        let m = random_field(g, 2, spec(base + 2, band));
        let f = random_field(g, 1, spec(base + 3, band));
        let sol = solve_h(&m, &f)?;
        let fields = ProbeFields {
            u: Some(v.clone()),
            omega: Some(b.clone()),
            m: Some(m.clone()),
            h: Some(sol.h),
            g: Some(sol.g_f),
            v: None,
            w: None,
        };
        let scalar_pair = ProbeFields {
            v: Some(random_field(g, 1, spec(base + 4, band))),
            w: Some(b.clone()),
            ..ProbeFields::default()
        };
        let vector_pair = ProbeFields {
            v: Some(v.clone()),
            w: Some(m),
            ..ProbeFields::default()
        };
        for kind in ProbeKind::ALL {
            let input = match kind {
                ProbeKind::Lorentz | ProbeKind::MCrossH => &fields,
                ProbeKind::TsCommutator => &scalar_pair,
                ProbeKind::Higreg => &vector_pair,
            };
            let r = inequality_probe(kind, input, 1.0, 0.5, &part)?;
            ineq.row(vec![
                t.to_string(),
                kind.name().into(),
                float(r.s),
                float(r.eps),
                float(r.lhs),
                float(r.rhs),
                float(r.ratio),
            ]);
            if !r.ratio.is_finite() {
                outcome.fail(format!("probe {kind}: non-finite ratio"));
            }
        }
    }
    outcome.write(&comm, out, "commutator.csv")?;
    outcome.write(&ineq, out, "inequality.csv")?;
    Ok(outcome)
}

pub fn magcheck(cfg: &ExperimentConfig, out: &Path, trials: usize, seed: u64) -> Result<Outcome, CliError> {
    prepare_dir(out)?;
    let g = cfg.grid()?;
    let band = random_band(&g);
    let mut outcome = Outcome::default();
    let mut csv = Csv::new(&[
        "trial",
        "ampere_residual",
        "curl_residual",
        "field_bound_slack",
        "sharp_field_bound_slack",
        "scale",
        "violations",
        "delta_norm_ratio",
        "delta_grad_residual",
    ]);
    for t in 0..trials {
        let base = seed + 3 * t as u64;
        let m = random_field(g, 2, spec(base, band));
        let f = random_field(g, 1, spec(base + 1, band));
        let sol = solve_h(&m, &f)?;
        let res = constraint_residual(&sol, &m, &f);
        let slack = pointwise_bound_check(&sol, &m, &f);
        let other = random_field(g, 2, spec(base + 2, band));
        let delta = delta_h_identities(&m, &other, -0.5);
        csv.row(vec![
            t.to_string(),
            float(res.ampere),
            float(res.curl),
            float(slack.min_slack),
            float(slack.min_sharp_slack),
            float(slack.scale),
            slack.violations.to_string(),
            float(delta.norm_ratio),
            float(delta.grad_residual),
        ]);
        if res.ampere > 1e-12 || res.curl > 1e-12 {
            outcome.fail(format!(
                "magnetostatics trial {t}: constraint residuals {} / {}",
                res.ampere, res.curl
            ));
        }
        if !slack.holds() {
            outcome.fail(format!(
                "field bound trial {t}: |H|^2 <= 2|M|^2 + |xi|^-2|F|^2 fails at {} modes (worst slack {:e}, scale {:e})",
                slack.violations, slack.min_slack, slack.scale
            ));
        }
        if slack.min_sharp_slack < -1e-12 * slack.scale {
            outcome.fail(format!(
                "sharp field bound trial {t}: slack {:e}",
                slack.min_sharp_slack
            ));
        }
        if delta.norm_ratio > 1.0 + 1e-12 || delta.grad_residual > 1e-10 * delta.scale.max(1e-300) {
            outcome.fail(format!(
                "difference identities trial {t}: ratio {} residual {:e}",
                delta.norm_ratio, delta.grad_residual
            ));
        }
    }
    outcome.write(&csv, out, "magcheck.csv")?;
    Ok(outcome)
}
