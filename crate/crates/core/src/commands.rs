//! Command implementations behind the CLI: run, stationary, compare,
//! contraction, entropy validation, and single-step dumps. Each command
//! writes its artifacts into an output directory; every artifact embeds the
//! SHA-256 fingerprint of the config that produced it.

use crate::config::RunConfig;
use crate::density::GridDensity;
use crate::diagnostics::{
    self, emergence_check, flux_jump_check, phase_partition, plateau_harmonicity, DiagnosticRecord,
};
use crate::entropy::EntropySpec;
use crate::error::{Error, Result};
use crate::jko::{self, run_trajectory, JkoOptions, Trajectory};
use crate::pde_fd::{fd_run, FdOptions};
use crate::potential::Potential;
use crate::stationary::{stationary_log_linear, stationary_residual, StationaryProfile};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::Path;

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), text)?;
    Ok(())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(dir, name, &text)
}

/// CSV of trajectory frames: `t,x,rho,p,ls`, one row block per kept frame.
fn frames_csv(
    spec: &EntropySpec,
    traj: &Trajectory,
    tol_phase: f64,
    frames_every: usize,
    sha: &str,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# config_sha256 = {sha}");
    out.push_str("t,x,rho,p,ls\n");
    let last = traj.frames.len() - 1;
    for (k, frame) in traj.frames.iter().enumerate() {
        if frames_every > 1 && k % frames_every != 0 && k != last {
            continue;
        }
        for i in 0..frame.rho.n() {
            let rho = frame.rho.values()[i];
            let p = frame.pressure[i];
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                frame.t,
                frame.rho.cell_center(i),
                rho,
                p,
                spec.l_s_graph(rho, p, tol_phase)
            );
        }
    }
    out
}

/// Theorem checks over a completed trajectory, as report records.
pub fn trajectory_diagnostics(
    spec: &EntropySpec,
    phi: &Potential,
    traj: &Trajectory,
    opts: &JkoOptions,
    oracle: Option<&StationaryProfile>,
) -> Vec<DiagnosticRecord> {
    let mut records = Vec::new();
    let tol = opts.tol_phase;

    let worst_mass = traj
        .frames
        .iter()
        .map(|f| (f.rho.mass() - 1.0).abs())
        .fold(0.0, f64::max);
    records.push(DiagnosticRecord::pass_fail("mass_conservation", worst_mass, 1e-10, None));

    let worst_slack = traj.ledger.iter().skip(1).map(|e| e.dissipation_slack).fold(0.0, f64::max);
    records.push(DiagnosticRecord::pass_fail("energy_dissipation", worst_slack, 1e-8, None));

    let min_energy = traj.ledger.iter().map(|e| e.energy).fold(f64::INFINITY, f64::min);
    let budget: f64 =
        traj.ledger.iter().map(|e| e.w2_step * e.w2_step / (2.0 * traj.tau)).sum::<f64>()
            - (traj.ledger[0].energy - min_energy);
    records.push(DiagnosticRecord::pass_fail("w2_budget", budget, 1e-6, None));

    // Pressure pinned to the correct subdifferential endpoint off the plateau
    // (frame 0 is the raw datum, not solver output).
    let mut worst_pin = 0.0f64;
    let mut pin_loc = None;
    for f in traj.frames.iter().skip(1) {
        for (i, (&rho, &p)) in f.rho.values().iter().zip(&f.pressure).enumerate() {
            let r = if rho < 1.0 - tol {
                (p - spec.s_prime_1_minus).abs()
            } else if rho > 1.0 + tol {
                (p - spec.s_prime_1_plus).abs()
            } else {
                0.0
            };
            if r > worst_pin {
                worst_pin = r;
                pin_loc = Some(f.rho.cell_center(i));
            }
        }
    }
    records.push(DiagnosticRecord::pass_fail("pressure_pinning", worst_pin, 1e-8, pin_loc));

    match emergence_check(traj, tol) {
        Some(t) => records.push(DiagnosticRecord {
            check_name: "emergence_time".into(),
            status: "info".into(),
            worst_value: t,
            location: None,
            tolerances: serde_json::Value::Null,
        }),
        None => records.push(DiagnosticRecord::not_applicable("emergence_time")),
    }

    // Free-boundary structure is only meaningful once the run has settled;
    // gate on the final-step displacement velocity.
    let settled = traj
        .ledger
        .last()
        .map_or(false, |e| e.k > 0 && e.w2_step / traj.tau < 1e-3);
    let final_frame = traj.final_frame();
    if settled {
        match plateau_harmonicity(&final_frame.rho, &final_frame.pressure, phi, tol) {
            Some(worst) => {
                records.push(DiagnosticRecord::pass_fail("plateau_harmonicity", worst, 1e-4, None))
            }
            None => records.push(DiagnosticRecord::not_applicable("plateau_harmonicity")),
        }
        let jumps = flux_jump_check(&final_frame.rho, &final_frame.pressure, spec, tol);
        if jumps.is_empty() {
            records.push(DiagnosticRecord::not_applicable("flux_jump"));
        } else {
            let worst = jumps.iter().max_by(|a, b| {
                a.mismatch.abs().partial_cmp(&b.mismatch.abs()).unwrap()
            });
            let worst = worst.unwrap();
            records.push(DiagnosticRecord::pass_fail(
                "flux_jump",
                worst.mismatch.abs(),
                0.05,
                Some(worst.location),
            ));
        }
        let residual = stationary_residual(
            spec,
            phi,
            &final_frame.rho,
            &final_frame.pressure,
            tol,
        )
        .unwrap_or(f64::NAN);
        records.push(DiagnosticRecord {
            check_name: "stationary_flux_residual".into(),
            status: "info".into(),
            worst_value: residual,
            location: None,
            tolerances: serde_json::Value::Null,
        });
    } else {
        records.push(DiagnosticRecord::not_applicable("plateau_harmonicity"));
        records.push(DiagnosticRecord::not_applicable("flux_jump"));
    }

    if let Some(profile) = oracle {
        match profile.to_grid(final_frame.rho.n()) {
            Ok(target) => {
                let d = final_frame.rho.l1_distance(&target).unwrap_or(f64::NAN);
                records.push(DiagnosticRecord::pass_fail("stationary_distance_l1", d, 2e-2, None));
            }
            Err(_) => records.push(DiagnosticRecord::not_applicable("stationary_distance_l1")),
        }
    }
    records
}

#[derive(Debug, Serialize)]
struct RunMetadata {
    config_sha256: String,
    command: String,
    tau: f64,
    horizon: f64,
    cells: usize,
    frames: usize,
    failure: Option<String>,
}

/// Full run: trajectory, frames CSV, ledger JSON, diagnostics JSON. Returns
/// the process exit code (0 success, 2 truncated run; artifacts are written
/// in both cases).
pub fn cmd_run(config_path: &Path, out_dir: &Path, frames_every: usize) -> Result<i32> {
    let (cfg, sha) = RunConfig::load(config_path)?;
    let spec = cfg.build_entropy()?;
    let rho0 = cfg.build_initial()?;
    let opts = cfg.jko_options();
    let traj = run_trajectory(&spec, &cfg.potential, &rho0, cfg.tau, cfg.horizon, &opts)?;

    write_text(
        out_dir,
        "frames.csv",
        &frames_csv(&spec, &traj, opts.tol_phase, frames_every, &sha),
    )?;
    write_json(out_dir, "ledger.json", &traj.ledger)?;
    let oracle = if cfg.has_stationary_oracle() {
        Some(stationary_log_linear(cfg.domain_length)?)
    } else {
        None
    };
    let records = trajectory_diagnostics(&spec, &cfg.potential, &traj, &opts, oracle.as_ref());
    write_json(out_dir, "diagnostics.json", &records)?;
    write_json(
        out_dir,
        "metadata.json",
        &RunMetadata {
            config_sha256: sha,
            command: "run".into(),
            tau: cfg.tau,
            horizon: cfg.horizon,
            cells: cfg.cells,
            frames: traj.frames.len(),
            failure: traj.failure.clone(),
        },
    )?;
    Ok(if traj.failure.is_some() { 2 } else { 0 })
}

#[derive(Debug, Serialize)]
struct StationaryMetadata {
    l: f64,
    regime: crate::stationary::Regime,
    plateau_start: f64,
    plateau_end: f64,
    rho_at_0: f64,
    mass_check: f64,
    threshold_two_phase: f64,
    threshold_three_phase: f64,
}

/// Analytic stationary profile export: CSV `x,rho,p_expected` plus regime
/// metadata.
pub fn cmd_stationary(l: f64, n: usize, out_dir: &Path) -> Result<()> {
    let profile = stationary_log_linear(l)?;
    let mut csv = String::from("x,rho,p_expected\n");
    let h = l / n as f64;
    for i in 0..n {
        let x = (i as f64 + 0.5) * h;
        let _ = writeln!(
            csv,
            "{:.16e},{:.16e},{:.16e}",
            x,
            profile.density(x),
            profile.pressure(x)
        );
    }
    write_text(out_dir, "stationary.csv", &csv)?;
    write_json(
        out_dir,
        "stationary.json",
        &StationaryMetadata {
            l,
            regime: profile.regime,
            plateau_start: profile.plateau_start,
            plateau_end: profile.plateau_end,
            rho_at_0: profile.rho_at_0,
            mass_check: profile.mass_on(0.0, l),
            threshold_two_phase: crate::stationary::threshold_two_phase(),
            threshold_three_phase: crate::stationary::threshold_three_phase(),
        },
    )?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareLevel {
    pub cells: usize,
    pub tau: f64,
    pub epsilon: f64,
    pub fd_dt: f64,
    pub t: f64,
    pub jko_fd_l1: f64,
    pub jko_oracle_l1: Option<f64>,
    pub fd_oracle_l1: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct CompareReport {
    pub config_sha256: String,
    pub levels: Vec<CompareLevel>,
    pub monotone_trend: bool,
}

/// Cross-solver comparison at the configured resolution, optionally preceded
/// by coarser simultaneous-refinement levels (cells, tau, epsilon all scaled
/// by powers of two, finest level last).
pub fn compare_solvers(cfg: &RunConfig, sha: &str, epsilon: f64, levels: usize) -> Result<CompareReport> {
    let spec = cfg.build_entropy()?;
    let oracle = if cfg.has_stationary_oracle() {
        Some(stationary_log_linear(cfg.domain_length)?)
    } else {
        None
    };
    let mut out = Vec::new();
    for level in 0..levels.max(1) {
        let coarsen = 1usize << (levels.max(1) - 1 - level);
        let n = cfg.cells / coarsen;
        if n < 16 {
            return Err(Error::Config(format!(
                "{levels} refinement levels leave only {n} cells at the coarsest"
            )));
        }
        let tau = cfg.tau * coarsen as f64;
        let eps = epsilon * coarsen as f64;
        let rho0 = cfg.initial.build(cfg.domain_length, n)?;
        let traj =
            run_trajectory(&spec, &cfg.potential, &rho0, tau, cfg.horizon, &cfg.jko_options())?;
        if let Some(reason) = &traj.failure {
            return Err(Error::Oracle(format!("comparison trajectory failed: {reason}")));
        }
        let fd_opts = FdOptions { epsilon: eps, ..Default::default() };
        let fd = fd_run(&spec, &cfg.potential, &rho0, cfg.horizon, &fd_opts)?;
        let jko_final = &traj.final_frame().rho;
        let fd_final = &fd.final_frame().rho;
        let (jko_oracle_l1, fd_oracle_l1) = match &oracle {
            Some(p) => {
                let target = p.to_grid(n)?;
                (
                    Some(jko_final.l1_distance(&target)?),
                    Some(fd_final.l1_distance(&target)?),
                )
            }
            None => (None, None),
        };
        out.push(CompareLevel {
            cells: n,
            tau,
            epsilon: eps,
            fd_dt: fd.dt,
            t: cfg.horizon,
            jko_fd_l1: jko_final.l1_distance(fd_final)?,
            jko_oracle_l1,
            fd_oracle_l1,
        });
    }
    let monotone_trend = out.windows(2).all(|w| w[1].jko_fd_l1 <= w[0].jko_fd_l1);
    Ok(CompareReport { config_sha256: sha.to_string(), levels: out, monotone_trend })
}

pub fn cmd_compare(config_path: &Path, out_dir: &Path, epsilon: f64, levels: usize) -> Result<i32> {
    let (cfg, sha) = RunConfig::load(config_path)?;
    let report = compare_solvers(&cfg, &sha, epsilon, levels)?;
    write_json(out_dir, "compare.json", &report)?;
    Ok(0)
}

#[derive(Debug, Serialize)]
pub struct ContractionReport {
    pub config_sha256_1: String,
    pub config_sha256_2: String,
    pub pairs: usize,
    pub initial_l1: Vec<f64>,
    pub worst_violation: f64,
    pub slack: f64,
    pub pass: bool,
}

/// Contraction experiment between the two configured initial data, plus an
/// optional seeded randomized suite of extra pairs.
pub fn contraction_report(
    cfg1: &RunConfig,
    cfg2: &RunConfig,
    sha1: &str,
    sha2: &str,
    random_pairs: usize,
) -> Result<ContractionReport> {
    let mut probe1 = serde_json::to_value(cfg1)?;
    let mut probe2 = serde_json::to_value(cfg2)?;
    probe1.as_object_mut().unwrap().remove("initial");
    probe2.as_object_mut().unwrap().remove("initial");
    if probe1 != probe2 {
        return Err(Error::Config(
            "contraction configs must agree in every field except `initial`".into(),
        ));
    }
    let spec = cfg1.build_entropy()?;
    let opts = cfg1.jko_options();
    let h = cfg1.domain_length / cfg1.cells as f64;
    let slack = 1e-3 + 4.0 * h;

    let mut initial_l1 = Vec::new();
    let mut worst: f64 = 0.0;
    let mut run_pair = |a: &GridDensity, b: &GridDensity| -> Result<()> {
        let ta = run_trajectory(&spec, &cfg1.potential, a, cfg1.tau, cfg1.horizon, &opts)?;
        let tb = run_trajectory(&spec, &cfg1.potential, b, cfg1.tau, cfg1.horizon, &opts)?;
        for t in [&ta, &tb] {
            if let Some(reason) = &t.failure {
                return Err(Error::Oracle(format!("contraction trajectory failed: {reason}")));
            }
        }
        initial_l1.push(a.l1_distance(b)?);
        worst = worst.max(diagnostics::contraction_check(&ta, &tb)?);
        Ok(())
    };

    run_pair(&cfg1.build_initial()?, &cfg2.build_initial()?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg1.seed);
    for _ in 0..random_pairs {
        let mk = |rng: &mut ChaCha8Rng| -> Result<GridDensity> {
            let vals: Vec<f64> = (0..cfg1.cells).map(|_| rng.gen_range(0.1..3.0)).collect();
            Ok(GridDensity::new_normalized(cfg1.domain_length, vals)?.0)
        };
        let a = mk(&mut rng)?;
        let b = mk(&mut rng)?;
        run_pair(&a, &b)?;
    }

    Ok(ContractionReport {
        config_sha256_1: sha1.to_string(),
        config_sha256_2: sha2.to_string(),
        pairs: 1 + random_pairs,
        initial_l1,
        worst_violation: worst,
        slack,
        pass: worst <= slack,
    })
}

pub fn cmd_contraction(
    config1: &Path,
    config2: &Path,
    out_dir: &Path,
    random_pairs: usize,
) -> Result<i32> {
    let (cfg1, sha1) = RunConfig::load(config1)?;
    let (cfg2, sha2) = RunConfig::load(config2)?;
    let report = contraction_report(&cfg1, &cfg2, &sha1, &sha2, random_pairs)?;
    let pass = report.pass;
    write_json(out_dir, "contraction.json", &report)?;
    Ok(if pass { 0 } else { 1 })
}

#[derive(Debug, Serialize)]
struct EntropyValidationOut {
    config_sha256: String,
    passed: bool,
    report: crate::entropy::ValidationReport,
}

pub fn cmd_validate_entropy(config_path: &Path, out_dir: &Path) -> Result<i32> {
    let (cfg, sha) = RunConfig::load(config_path)?;
    let spec = cfg.build_entropy()?;
    let report = spec.validate_assumptions(1000);
    let passed = report.passed();
    write_json(
        out_dir,
        "entropy_validation.json",
        &EntropyValidationOut { config_sha256: sha, passed, report },
    )?;
    Ok(if passed { 0 } else { 1 })
}

#[derive(Debug, Serialize)]
struct StepMetadata {
    config_sha256: String,
    tau: f64,
    mass_constant: f64,
    w2_step: f64,
    iterations: usize,
    optimality_residual: f64,
    mass_residual: f64,
    below_measure: f64,
    plateau_measure: f64,
    above_measure: f64,
}

/// Single minimizing-movement step from the configured initial datum, with a
/// per-cell dump for inspection of the emerging phase structure.
pub fn cmd_step(config_path: &Path, out_dir: &Path) -> Result<i32> {
    let (cfg, sha) = RunConfig::load(config_path)?;
    let spec = cfg.build_entropy()?;
    let rho0 = cfg.build_initial()?;
    let opts = cfg.jko_options();
    let step = jko::jko_step(&spec, &cfg.potential, &rho0, cfg.tau, &opts)?;

    let mut csv = String::new();
    let _ = writeln!(csv, "# config_sha256 = {sha}");
    csv.push_str("x,rho_prev,rho_new,p,velocity,potential\n");
    for i in 0..rho0.n() {
        let _ = writeln!(
            csv,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            rho0.cell_center(i),
            rho0.values()[i],
            step.rho_new.values()[i],
            step.pressure[i],
            step.velocity[i],
            step.potential[i]
        );
    }
    write_text(out_dir, "step.csv", &csv)?;
    let part = phase_partition(&step.rho_new, opts.tol_phase);
    write_json(
        out_dir,
        "step.json",
        &StepMetadata {
            config_sha256: sha,
            tau: cfg.tau,
            mass_constant: step.mass_constant,
            w2_step: step.w2_step,
            iterations: step.iterations,
            optimality_residual: step.optimality_residual,
            mass_residual: step.mass_residual,
            below_measure: part.below_measure,
            plateau_measure: part.plateau_measure,
            above_measure: part.above_measure,
        },
    )?;
    Ok(0)
}
