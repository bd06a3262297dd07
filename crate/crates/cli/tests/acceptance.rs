//! Acceptance report: one PASS/FAIL line per criterion with its measured
//! values and runtime against the budget.
//!
//! A failed criterion is reported, not hidden, and does not abort the report;
//! the process exits 0 once every criterion has been evaluated. Set
//! `FERRO_ACCEPTANCE=1,4,11` to evaluate a subset.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ferro_cli::commands::initial_state;
use ferro_cli::config::{parse_config, serialize, ExperimentConfig};
use ferro_cli::dump::{read_dump, write_dump, FieldDump};
use ferro_core::diagnostics::{
    decay_experiment, default_twin_mode, energy_report, twin_experiment, RegularityAccumulator,
};
use ferro_core::lp::{
    bernstein_probe, paraproduct, phi, random_block_field, remainder, sobolev_norm_direct, sobolev_norm_lp,
    DyadicPartition, SobolevIndex,
};
use ferro_core::magnetostatics::{constraint_residual, pointwise_bound_check, solve_h};
use ferro_core::random::{random_field, RandomSpec};
use ferro_core::solver::{strong_residual, FerroParams, FerroState, Forcing, Integrator, Solver, SolverConfig};
use ferro_core::spectral::exact_product;
use ferro_core::{Grid, SpectralField};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn config(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_config(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn spec(seed: u64, band: f64) -> RandomSpec {
    RandomSpec {
        seed,
        band,
        amplitude: 1.0,
    }
}

fn two_pi(n: usize) -> Grid {
    Grid::square(n, 2.0 * PI).unwrap()
}

/// `‖f‖²_{Ḣs}` summed mode by mode from integer wavenumbers.
fn homogeneous_norm2(f: &SpectralField, s: f64) -> f64 {
    let g = *f.grid();
    let c = 2.0 * PI / g.length();
    let mut acc = 0.0;
    for comp in 0..f.ncomp() {
        for idx in 1..g.len() {
            let (k1, k2) = g.wavenumber(idx);
            let r2 = c * c * (k1 * k1 + k2 * k2) as f64;
            acc += r2.powf(s) * f.comp(comp)[idx].norm_sqr();
        }
    }
    acc * g.length() * g.length()
}

fn magnetostatic_exactness() -> Verdict {
    let g = two_pi(64);
    let (mut worst_residual, mut violating_trials, mut worst_relative_slack) = (0.0f64, 0, 0.0f64);
    for trial in 0..100u64 {
        let m = random_field(g, 2, spec(100 + 2 * trial, 21.0));
        let f = random_field(g, 1, spec(101 + 2 * trial, 21.0));
        let sol = solve_h(&m, &f).unwrap();
        let r = constraint_residual(&sol, &m, &f);
        worst_residual = worst_residual.max(r.ampere).max(r.curl);
        let slack = pointwise_bound_check(&sol, &m, &f);
        if !slack.holds() {
            violating_trials += 1;
        }
        worst_relative_slack = worst_relative_slack.min(slack.min_slack / slack.scale);
    }
    verdict(
        worst_residual <= 1e-12 && violating_trials == 0,
        format!(
            "constraint residual {worst_residual:.2e} (<= 1e-12); stated per-mode bound violated in {violating_trials}/100 \
             trials, worst slack/scale {worst_relative_slack:.3e} (>= -1e-12)"
        ),
    )
}

fn closed_form_linear_decay() -> Verdict {
    let cfg = config("linear.cfg");
    let solver = Solver::new(cfg.solver_config().unwrap(), cfg.forcing().unwrap()).unwrap();
    let initial = initial_state(&cfg).unwrap();
    let fin = solver.run_observed(&initial, |_| {}).unwrap();
    let p = cfg.params;
    let expected = (-(p.sigma + 1.0 / p.tau) * cfg.t_end).exp();
    let ratio = fin.m.norm() / initial.m.norm();
    let err = (ratio / expected - 1.0).abs();
    verdict(
        err <= 1e-6,
        format!("|M(T)|/|M0| = {ratio:.12}, closed form {expected:.12}, relative error {err:.2e} (<= 1e-6)"),
    )
}

fn unforced_energy_law() -> Verdict {
    let cfg = config("regularity.cfg");
    assert!(matches!(cfg.forcing().unwrap(), Forcing::None));
    let mut sc = cfg.solver_config().unwrap();
    sc.snapshot_stride = 2;
    let solver = Solver::new(sc, Forcing::None).unwrap();
    let p = cfg.params;
    let mut series = Vec::new();
    solver
        .run_observed(&initial_state(&cfg).unwrap(), |snap| {
            let r = energy_report(snap, &p, &Forcing::None, 0.0);
            series.push((r.t, r.energy, r.dissipation));
        })
        .unwrap();
    let e0 = series[0].1;
    let tol = 10.0 * cfg.dt * cfg.dt * e0;
    let worst_increase = series
        .windows(2)
        .map(|w| w[1].1 - w[0].1)
        .fold(f64::NEG_INFINITY, f64::max);
    let integral: f64 = series
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].2 + w[1].2))
        .sum();
    let rate = [
        (p.eta + p.zeta) / 2.0,
        p.eta_prime / 2.0,
        4.0 * p.zeta,
        p.sigma / 2.0,
        1.0 / p.tau,
        p.chi0 / (2.0 * p.tau),
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min);
    let rate_agrees = rate == p.energy_rate();
    let et = series.last().unwrap().1;
    let lhs = et + rate * integral;
    let budget = e0 * (1.0 + 1e-3);
    verdict(
        worst_increase <= tol && lhs <= budget && rate_agrees,
        format!(
            "largest step increase {worst_increase:.3e} (<= {tol:.3e}); E(T) + c*intD = {lhs:.6e} vs E(0)(1+1e-3) = \
             {budget:.6e} with c = {rate}"
        ),
    )
}

fn bony_reconstruction() -> Verdict {
    let g = two_pi(64);
    let part = DyadicPartition::new(g);
    let mut worst = 0.0f64;
    for trial in 0..50u64 {
        let band = 2.0 + (trial % 20) as f64;
        let a = random_field(g, 1, spec(400 + 2 * trial, band));
        let b = random_field(g, 1, spec(401 + 2 * trial, band));
        let sum = paraproduct(&a, &b, &part)
            .add(&paraproduct(&b, &a, &part))
            .add(&remainder(&a, &b, &part));
        let product = exact_product(&a, &b);
        worst = worst.max(sum.sub(&product).max_abs() / product.max_abs());
    }
    let mut unity = 0.0f64;
    for idx in 1..g.len() {
        let r = g.xi_norm2(idx).sqrt();
        let total: f64 = part.blocks().map(|j| phi(j, r)).sum();
        unity = unity.max((total - 1.0).abs());
    }
    verdict(
        worst <= 1e-11 && unity <= 1e-12,
        format!("reconstruction error {worst:.2e} (<= 1e-11); partition of unity error {unity:.2e} (<= 1e-12)"),
    )
}

fn lp_norm_equivalence() -> Verdict {
    let g = two_pi(64);
    let part = DyadicPartition::new(g);
    let mut pass = true;
    let mut detail = Vec::new();
    for s in [-0.5, 0.0, 1.0, 1.5] {
        let index = SobolevIndex::new(s).unwrap();
        let spread = 8f64.powf(f64::abs(s));
        let (lo, hi) = (1.0 / (spread * 3f64.sqrt()), spread * 3f64.sqrt());
        let (mut rmin, mut rmax, mut direct_err) = (f64::INFINITY, 0.0f64, 0.0f64);
        for trial in 0..50u64 {
            let f = random_field(g, 1, spec(700 + trial, 1.0 + (trial % 21) as f64));
            let direct = sobolev_norm_direct(&f, index);
            direct_err = direct_err.max((direct / homogeneous_norm2(&f, s).sqrt() - 1.0).abs());
            let r = sobolev_norm_lp(&f, index, &part) / direct;
            rmin = rmin.min(r);
            rmax = rmax.max(r);
        }
        pass &= rmin >= lo && rmax <= hi && direct_err <= 1e-12;
        detail.push(format!(
            "s={s}: [{rmin:.3}, {rmax:.3}] in [{lo:.3}, {hi:.3}], direct err {direct_err:.1e}"
        ));
    }
    verdict(pass, detail.join("; "))
}

fn bernstein_band() -> Verdict {
    // j = 4 needs 2^6 inside the inscribed disc, so n/2 - 1 >= 64 on the 2π box
    let g = two_pi(144);
    let part = DyadicPartition::new(g);
    let mut pass = true;
    let mut detail = Vec::new();
    for j in 1..=4 {
        let stats = match bernstein_probe(j, 100, 900 + j as u64, &part) {
            Ok(s) => s,
            Err(e) => return verdict(false, format!("j={j}: {e}")),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(950 + j as u64);
        let (mut omin, mut omax) = (f64::INFINITY, 0.0f64);
        for _ in 0..100 {
            let f = random_block_field(&mut rng, j, &part);
            let r = (homogeneous_norm2(&f, 1.0) / homogeneous_norm2(&f, 0.0)).sqrt() / 2f64.powi(j);
            omin = omin.min(r);
            omax = omax.max(r);
        }
        let lo = stats.min.min(omin);
        let hi = stats.max.max(omax);
        pass &= stats.ratios.len() == 100 && lo >= 0.25 && hi <= 4.0;
        detail.push(format!("j={j}: [{lo:.3}, {hi:.3}]"));
    }
    verdict(pass, format!("{} (all within [0.25, 4])", detail.join("; ")))
}

fn twin_uniqueness() -> Verdict {
    let cfg = config("twin.cfg");
    let sc = cfg.solver_config().unwrap();
    let forcing = cfg.forcing().unwrap();
    let init = initial_state(&cfg).unwrap();
    let mode = default_twin_mode(&sc.grid);
    let full = twin_experiment(&sc, &forcing, &init, 1e-6, mode).unwrap();
    let half = twin_experiment(&sc, &forcing, &init, 5e-7, mode).unwrap();
    let zero = twin_experiment(&sc, &forcing, &init, 0.0, mode).unwrap();
    let Some(c_g) = full.constant else {
        return verdict(false, "no C_g reported for eps = 1e-6".into());
    };
    let d0 = full.initial();
    let envelope_ok = full
        .reports
        .iter()
        .all(|r| r.delta_energy <= d0 * (c_g * r.factor_integral).exp() * (1.0 + 1e-9));
    let ratio = full.last().delta_energy / half.last().delta_energy;
    let zero_ok = zero.reports.iter().all(|r| r.delta_energy == 0.0);
    verdict(
        envelope_ok && (ratio / 4.0 - 1.0).abs() <= 0.05 && zero_ok && c_g.is_finite(),
        format!(
            "C_g = {c_g:.4e}, envelope holds at all {} snapshots: {envelope_ok}; final ratio eps/(eps/2) = {ratio:.4} \
             (4 +- 5%); eps = 0 identically zero: {zero_ok}",
            full.reports.len()
        ),
    )
}

/// Least-squares slope of `-log E` on `log(1+t)`, via the normal equations.
fn slope(t: &[f64], e: &[f64], window: (f64, f64)) -> f64 {
    let (mut n, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&t, &e) in t.iter().zip(e) {
        if t >= window.0 && t <= window.1 {
            let (x, y) = ((1.0 + t).ln(), -e.ln());
            n += 1.0;
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

fn decay_rate() -> Verdict {
    let cfg = config("decay.cfg");
    let alpha = 0.4;
    let window = (10.0, 100.0);
    let forcing = cfg.forcing().unwrap();
    let init = initial_state(&cfg).unwrap();
    let coarse_cfg = cfg.solver_config().unwrap();
    let mut fine_cfg = coarse_cfg.clone();
    fine_cfg.dt /= 2.0;
    fine_cfg.snapshot_stride *= 2;
    let coarse = match decay_experiment(&coarse_cfg, &forcing, &init, alpha, window) {
        Ok(r) => r,
        Err(e) => return verdict(false, format!("run failed: {e}")),
    };
    let fine = match decay_experiment(&fine_cfg, &forcing, &init, alpha, window) {
        Ok(r) => r,
        Err(e) => return verdict(false, format!("halved-dt run failed: {e}")),
    };
    let fitted = coarse.fitted_alpha.unwrap_or(f64::NAN);
    let oracle = slope(&coarse.times, &coarse.energies, window);
    let fit_agrees = (fitted - oracle).abs() <= 1e-9 * oracle.abs();
    let c = coarse.envelope_constant;
    let envelope_holds = coarse
        .times
        .iter()
        .zip(&coarse.energies)
        .all(|(&t, &e)| e <= c * (1.0 + t).powf(-alpha) * (1.0 + 1e-12));
    let drift = (fine.envelope_constant / c - 1.0).abs();
    // the run-wide constant sits at t = 0, so also compare it on the fit window
    let windowed = |r: &ferro_core::diagnostics::DecayReport| {
        r.times
            .iter()
            .zip(&r.energies)
            .filter(|(&t, _)| t >= window.0 && t <= window.1)
            .map(|(&t, &e)| e * (1.0 + t).powf(alpha))
            .fold(0.0, f64::max)
    };
    let (wc, wf) = (windowed(&coarse), windowed(&fine));
    let window_drift = (wf / wc - 1.0).abs();
    verdict(
        fitted >= alpha && fit_agrees && c.is_finite() && envelope_holds && drift <= 0.1 && window_drift <= 0.1,
        format!(
            "fitted alpha {fitted:.4} (>= {alpha}, oracle slope {oracle:.4}); C_alpha = {c:.6e}, halved dt {:.6e}, \
             drift {:.2}%; on [10, 100] {wc:.6e} vs {wf:.6e}, drift {:.3}% (both <= 10%); halved-dt fit {:.4}",
            fine.envelope_constant,
            100.0 * drift,
            100.0 * window_drift,
            fine.fitted_alpha.unwrap_or(f64::NAN)
        ),
    )
}

fn regularity_propagation() -> Verdict {
    let s = 1.5;
    let mut reports = Vec::new();
    for n in [128, 192] {
        let mut cfg = config("regularity.cfg");
        cfg.n1 = n;
        cfg.n2 = n;
        let mut sc = cfg.solver_config().unwrap();
        sc.snapshot_stride = 10;
        let solver = Solver::new(sc, cfg.forcing().unwrap()).unwrap();
        let mut audit = RegularityAccumulator::new(*solver.grid(), cfg.params, solver.forcing().clone(), s).unwrap();
        solver
            .run_observed(&initial_state(&cfg).unwrap(), |snap| audit.push(snap))
            .unwrap();
        reports.push(audit.finish());
    }
    let spread = 8f64.powf(s);
    let (lo, hi) = (1.0 / (spread * 3f64.sqrt()), spread * 3f64.sqrt());
    let (a, b) = (&reports[0], &reports[1]);
    let (ca, cb) = (a.constant.unwrap_or(f64::NAN), b.constant.unwrap_or(f64::NAN));
    let drift = (cb / ca - 1.0).abs();
    let band_ok = reports.iter().all(|r| r.lp_ratio.0 >= lo && r.lp_ratio.1 <= hi);
    verdict(
        a.sup_energy_s.is_finite() && b.sup_energy_s.is_finite() && drift <= 0.1 && band_ok,
        format!(
            "sup E_s {:.6e} / {:.6e}; int D_s {:.6e} / {:.6e}; constant {ca:.6} at 128^2, {cb:.6} at 192^2, drift \
             {:.2}% (<= 10%); LP/direct [{:.3}, {:.3}] within [{lo:.3}, {hi:.3}]",
            a.sup_energy_s,
            b.sup_energy_s,
            a.dissipation_integral,
            b.dissipation_integral,
            100.0 * drift,
            a.lp_ratio.0.min(b.lp_ratio.0),
            a.lp_ratio.1.max(b.lp_ratio.1)
        ),
    )
}

fn solver_order() -> Verdict {
    let g = two_pi(32);
    let forcing = Forcing::DecayingMode {
        k_amp: 1.0,
        eta_decay: 0.5,
        mode: (1, 0),
    };
    let init = FerroState::random(g, 21, 6.0, 1.0);
    let run = |dt: f64, stride: usize| {
        let mut sc = SolverConfig::new(g, FerroParams::default(), dt, 0.5);
        sc.integrator = Integrator::Etdrk2;
        sc.snapshot_stride = stride;
        Solver::new(sc, forcing.clone()).unwrap().run(&init).unwrap()
    };
    let finals: Vec<FerroState> = [0.02, 0.01, 0.005, 0.0003125]
        .iter()
        .map(|&dt| run(dt, 1_000_000).last().state.clone())
        .collect();
    let richardson = (finals[0].sub(&finals[1]).l2_norm() / finals[1].sub(&finals[2]).l2_norm()).log2();
    let reference = &finals[3];
    let observed = (finals[0].sub(reference).l2_norm() / finals[1].sub(reference).l2_norm()).log2();
    let r1 = strong_residual(&run(0.0025, 1)).unwrap();
    let r2 = strong_residual(&run(0.00125, 1)).unwrap();
    let ratio = r1 / r2;
    verdict(
        richardson >= 1.8 && observed >= 1.8 && (3.0..=5.0).contains(&ratio),
        format!(
            "Richardson order {richardson:.3}, order against a fine reference {observed:.3} (>= 1.8); strong residual \
             {r1:.3e} -> {r2:.3e}, ratio {ratio:.3} (4 +- 1)"
        ),
    )
}

fn io_round_trips() -> Verdict {
    let mut problems = Vec::new();
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut names: Vec<PathBuf> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "cfg"))
        .collect();
    names.sort();
    for p in &names {
        let text = std::fs::read_to_string(p).unwrap();
        match parse_config(&text) {
            Ok(cfg) if serialize(&cfg) == text => {}
            Ok(_) => problems.push(format!("{} does not re-serialize byte-identically", p.display())),
            Err(e) => problems.push(format!("{}: {e}", p.display())),
        }
    }
    let bad = "grid.n1=64\nparams.tau=-1\nbogus.key=3\nsolver.dt=abc\n";
    match parse_config(bad) {
        Ok(_) => problems.push("invalid config accepted".into()),
        Err(e) => {
            let lines: Vec<usize> = e.0.iter().map(|x| x.line).collect();
            let msg = e.to_string();
            if !(lines.contains(&2) && lines.contains(&3) && lines.contains(&4) && msg.contains("tau must be > 0")) {
                problems.push(format!("config diagnostics incomplete: {msg}"));
            }
        }
    }

    let tmp = tempfile::tempdir().unwrap();
    let g = Grid::square(24, 3.0).unwrap();
    let st = FerroState::random(g, 9, 5.0, 0.8);
    let h = random_field(g, 2, spec(10, 5.0));
    let f = random_field(g, 1, spec(11, 5.0));
    let dump = FieldDump::from_fields(
        0.375,
        &[("u", &st.u), ("omega", &st.omega), ("M", &st.m), ("H", &h), ("F", &f)],
    )
    .unwrap();
    let first = tmp.path().join("a.ferr");
    let second = tmp.path().join("b.ferr");
    write_dump(&dump, &first).unwrap();
    let back = read_dump(&first).unwrap();
    write_dump(&back, &second).unwrap();
    let bytes = std::fs::read(&first).unwrap();
    if back != dump || bytes != std::fs::read(&second).unwrap() || bytes.len() != dump.encoded_len() {
        problems.push("dump round trip is not bitwise identical".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut corruptions: Vec<(&str, Vec<u8>)> = vec![
        ("magic", {
            let mut b = bytes.clone();
            b[1] = b'Z';
            b
        }),
        ("version", {
            let mut b = bytes.clone();
            b[4..6].copy_from_slice(&2u16.to_le_bytes());
            b
        }),
        ("truncated", bytes[..bytes.len() - 8].to_vec()),
        ("size", {
            let mut b = bytes.clone();
            b.extend_from_slice(&[0u8; 8]);
            b
        }),
    ];
    for _ in 0..20 {
        let cut = rng.gen_range(0..bytes.len());
        corruptions.push(("random truncation", bytes[..cut].to_vec()));
    }
    for (what, b) in &corruptions {
        let path = tmp.path().join("bad.ferr");
        std::fs::write(&path, b).unwrap();
        match read_dump(&path) {
            Ok(_) => problems.push(format!("{what} corruption accepted")),
            Err(e) if e.to_string().is_empty() => problems.push(format!("{what} corruption without diagnostic")),
            Err(_) => {}
        }
    }
    verdict(
        problems.is_empty(),
        if problems.is_empty() {
            format!(
                "{} shipped configs round-trip byte-identically; dump of {} bytes round-trips bitwise; {} corrupted inputs rejected",
                names.len(),
                bytes.len(),
                corruptions.len()
            )
        } else {
            problems.join("; ")
        },
    )
}

type Check = fn() -> Verdict;

fn main() {
    let criteria: [(u32, &str, f64, Check); 11] = [
        (1, "magnetostatic exactness", 5.0, magnetostatic_exactness),
        (2, "closed-form linear decay", 10.0, closed_form_linear_decay),
        (3, "unforced energy law", 120.0, unforced_energy_law),
        (4, "Bony reconstruction", 30.0, bony_reconstruction),
        (5, "LP/direct norm equivalence", 30.0, lp_norm_equivalence),
        (6, "Bernstein band", 30.0, bernstein_band),
        (7, "twin-run uniqueness", 180.0, twin_uniqueness),
        (8, "forced decay rate", 1200.0, decay_rate),
        (9, "regularity propagation", 300.0, regularity_propagation),
        (10, "solver order", 120.0, solver_order),
        (11, "I/O round trips", 5.0, io_round_trips),
    ];
    let selected: Option<Vec<u32>> = std::env::var("FERRO_ACCEPTANCE")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut passed = 0;
    let mut evaluated = 0;
    for (id, name, budget, check) in criteria {
        if selected.as_ref().is_some_and(|s| !s.contains(&id)) {
            continue;
        }
        evaluated += 1;
        let start = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        let ok = v.pass && secs <= budget;
        passed += ok as usize;
        println!(
            "{} criterion {id:>2} {name}: {} [{secs:.1} s, budget {budget} s]",
            if ok { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    println!("acceptance: {passed}/{evaluated} criteria passed");
}
