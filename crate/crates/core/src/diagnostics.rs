//! Trajectory checkers for the qualitative theory: phase structure of the
//! critical region, L^1 contraction between solutions, pressure harmonicity
//! on the plateau, and flux continuity across the free boundaries.

use crate::density::GridDensity;
use crate::entropy::EntropySpec;
use crate::error::{Error, Result};
use crate::jko::Trajectory;
use crate::potential::Potential;
use serde::Serialize;

/// Decomposition of the domain into `{rho < 1}`, `{rho = 1}` (within
/// `tol_phase`), and `{rho > 1}`, by cell counting.
#[derive(Debug, Clone, Serialize)]
pub struct PhasePartition {
    pub tol_phase: f64,
    pub below_measure: f64,
    pub plateau_measure: f64,
    pub above_measure: f64,
    pub below_cells: Vec<usize>,
    pub plateau_cells: Vec<usize>,
    pub above_cells: Vec<usize>,
}

pub fn phase_partition(rho: &GridDensity, tol_phase: f64) -> PhasePartition {
    let h = rho.h();
    let mut part = PhasePartition {
        tol_phase,
        below_measure: 0.0,
        plateau_measure: 0.0,
        above_measure: 0.0,
        below_cells: Vec::new(),
        plateau_cells: Vec::new(),
        above_cells: Vec::new(),
    };
    for (i, &v) in rho.values().iter().enumerate() {
        if (v - 1.0).abs() <= tol_phase {
            part.plateau_cells.push(i);
        } else if v < 1.0 {
            part.below_cells.push(i);
        } else {
            part.above_cells.push(i);
        }
    }
    part.below_measure = part.below_cells.len() as f64 * h;
    part.plateau_measure = part.plateau_cells.len() as f64 * h;
    part.above_measure = part.above_cells.len() as f64 * h;
    part
}

/// Norm bookkeeping across frames. In one space dimension the critical
/// summability exponent of the theory is unbounded, so the report is purely
/// informational: nominal exponent, sup norms, and a chosen L^p norm per
/// frame.
#[derive(Debug, Clone, Serialize)]
pub struct SummabilityReport {
    /// `+inf` in one dimension.
    pub beta_nominal: f64,
    pub p: f64,
    pub sup_norms: Vec<f64>,
    pub lp_norms: Vec<f64>,
}

pub fn summability_report(traj: &Trajectory, p: f64) -> SummabilityReport {
    let mut sup_norms = Vec::with_capacity(traj.frames.len());
    let mut lp_norms = Vec::with_capacity(traj.frames.len());
    for f in &traj.frames {
        sup_norms.push(f.rho.max_value());
        let h = f.rho.h();
        let sum: f64 = f.rho.values().iter().map(|&v| v.powf(p)).sum();
        lp_norms.push((h * sum).powf(1.0 / p));
    }
    SummabilityReport { beta_nominal: f64::INFINITY, p, sup_norms, lp_norms }
}

/// Earliest frame time at which the critical region has measure above `2h`
/// while both side phases also have positive measure, or `None`.
pub fn emergence_check(traj: &Trajectory, tol_phase: f64) -> Option<f64> {
    for f in &traj.frames {
        let part = phase_partition(&f.rho, tol_phase);
        let h = f.rho.h();
        if part.plateau_measure > 2.0 * h && part.below_measure > 0.0 && part.above_measure > 0.0 {
            return Some(f.t);
        }
    }
    None
}

/// Worst violation of `||rho1_t - rho2_t||_1 <= ||rho1_0 - rho2_0||_1` over
/// the common frames (positive value = violation).
pub fn contraction_check(traj1: &Trajectory, traj2: &Trajectory) -> Result<f64> {
    if (traj1.tau - traj2.tau).abs() > 1e-12 * traj1.tau.max(traj2.tau) {
        return Err(Error::GridMismatch(format!(
            "time steps differ: {} vs {}",
            traj1.tau, traj2.tau
        )));
    }
    let frames = traj1.frames.len().min(traj2.frames.len());
    if frames == 0 {
        return Err(Error::GridMismatch("empty trajectory".into()));
    }
    let initial = traj1.frames[0].rho.l1_distance(&traj2.frames[0].rho)?;
    let mut worst = 0.0f64;
    for k in 1..frames {
        let d = traj1.frames[k].rho.l1_distance(&traj2.frames[k].rho)?;
        worst = worst.max(d - initial);
    }
    Ok(worst)
}

/// Max of `|D^2 p + D^2 Phi| / h^2` over interior plateau cells (both
/// neighbors also on the plateau); `None` when no plateau run has at least
/// three cells. The pressure should be harmonic relative to the drift there.
pub fn plateau_harmonicity(
    rho: &GridDensity,
    pressure: &[f64],
    phi: &Potential,
    tol_phase: f64,
) -> Option<f64> {
    let n = rho.n();
    assert_eq!(pressure.len(), n, "pressure length mismatch");
    let h = rho.h();
    let on_plateau =
        |i: usize| (rho.values()[i] - 1.0).abs() <= tol_phase;
    let mut worst: Option<f64> = None;
    for i in 1..n - 1 {
        if on_plateau(i - 1) && on_plateau(i) && on_plateau(i + 1) {
            let d2p = pressure[i + 1] - 2.0 * pressure[i] + pressure[i - 1];
            let x = rho.cell_center(i);
            let d2phi = phi.eval(x + h) - 2.0 * phi.eval(x) + phi.eval(x - h);
            let r = (d2p + d2phi).abs() / (h * h);
            worst = Some(worst.map_or(r, |w: f64| w.max(r)));
        }
    }
    worst
}

/// One free-boundary flux comparison: one-sided slopes of `L_S(rho, p)` on
/// either side of a plateau edge.
#[derive(Debug, Clone, Serialize)]
pub struct FluxJump {
    /// Position of the phase boundary (between two cell centers).
    pub location: f64,
    pub slope_inside: f64,
    pub slope_outside: f64,
    /// `|slope_outside| - |slope_inside|`; near zero when the flux is
    /// continuous across the boundary.
    pub mismatch: f64,
}

/// Flux-continuity check at every plateau edge. Each contiguous plateau run
/// with an adjacent non-plateau phase contributes one entry per edge,
/// provided two cells inside and three outside are available for the
/// one-sided differences.
pub fn flux_jump_check(
    rho: &GridDensity,
    pressure: &[f64],
    spec: &EntropySpec,
    tol_phase: f64,
) -> Vec<FluxJump> {
    let n = rho.n();
    assert_eq!(pressure.len(), n, "pressure length mismatch");
    let h = rho.h();
    let v = rho.values();
    let ls: Vec<f64> = (0..n).map(|i| spec.l_s_graph(v[i], pressure[i], tol_phase)).collect();
    let plateau: Vec<bool> = v.iter().map(|&x| (x - 1.0).abs() <= tol_phase).collect();

    let mut jumps = Vec::new();
    let mut i = 0;
    while i < n {
        if !plateau[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && plateau[i] {
            i += 1;
        }
        let end = i - 1; // inclusive
        // Left edge: outside cells start-3, start-2; inside start, start+1.
        // The cell immediately outside the plateau may average across the
        // phase interface, so the outside difference skips it.
        if start >= 3 && end >= start + 1 {
            let slope_outside = (ls[start - 2] - ls[start - 3]) / h;
            let slope_inside = (ls[start + 1] - ls[start]) / h;
            jumps.push(FluxJump {
                location: rho.cell_center(start) - 0.5 * h,
                slope_inside,
                slope_outside,
                mismatch: slope_outside.abs() - slope_inside.abs(),
            });
        }
        // Right edge: inside end-1, end; outside end+2, end+3 (again skipping
        // the straddling cell just outside the plateau).
        if end + 3 < n && end >= start + 1 {
            let slope_inside = (ls[end] - ls[end - 1]) / h;
            let slope_outside = (ls[end + 3] - ls[end + 2]) / h;
            jumps.push(FluxJump {
                location: rho.cell_center(end) + 0.5 * h,
                slope_inside,
                slope_outside,
                mismatch: slope_outside.abs() - slope_inside.abs(),
            });
        }
    }
    jumps
}

/// One row of the exported diagnostics report.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticRecord {
    pub check_name: String,
    /// `pass`, `fail`, or `not_applicable`.
    pub status: String,
    pub worst_value: f64,
    pub location: Option<f64>,
    pub tolerances: serde_json::Value,
}

impl DiagnosticRecord {
    pub fn pass_fail(
        check_name: &str,
        worst_value: f64,
        tolerance: f64,
        location: Option<f64>,
    ) -> Self {
        Self {
            check_name: check_name.to_string(),
            status: if worst_value <= tolerance { "pass" } else { "fail" }.to_string(),
            worst_value,
            location,
            tolerances: serde_json::json!({ "max": tolerance }),
        }
    }

    pub fn not_applicable(check_name: &str) -> Self {
        Self {
            check_name: check_name.to_string(),
            status: "not_applicable".to_string(),
            worst_value: f64::NAN,
            location: None,
            tolerances: serde_json::Value::Null,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jko::{run_trajectory, JkoOptions};
    use crate::stationary::stationary_log_linear;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn partition_examples() {
        let all_plateau = GridDensity::uniform(1.0, 64);
        let p = phase_partition(&all_plateau, 1e-6);
        assert_abs_diff_eq!(p.plateau_measure, 1.0, epsilon = 1e-14);
        assert_eq!(p.below_cells.len() + p.above_cells.len(), 0);

        // Stationary three-phase profile: plateau of length 1/2 up to a cell.
        let n = 512;
        let h = 1.0 / n as f64;
        let grid = stationary_log_linear(1.0).unwrap().to_grid(n).unwrap();
        let p = phase_partition(&grid, 1e-6);
        assert!((p.plateau_measure - 0.5).abs() <= 2.0 * h + 1e-12);

        // A strictly monotone profile crossing 1 once: plateau at most 2h.
        let cross = GridDensity::from_fn(1.0, n, |x| (-x).exp() / (1.0 - (-1.0f64).exp())).unwrap();
        let p = phase_partition(&cross, 1e-6);
        assert!(p.plateau_measure <= 2.0 * h);
        assert!(p.below_measure > 0.0 && p.above_measure > 0.0);

        // Measures always tile the domain.
        assert_abs_diff_eq!(
            p.below_measure + p.plateau_measure + p.above_measure,
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn partition_monotone_in_tolerance() {
        let g = GridDensity::from_fn(1.0, 128, |x| (-x).exp()).unwrap();
        let mut prev = 0.0;
        for tol in [1e-8, 1e-4, 1e-2, 0.5] {
            let m = phase_partition(&g, tol).plateau_measure;
            assert!(m >= prev);
            prev = m;
        }
    }

    #[test]
    fn emergence_at_first_step_for_exponential_data() {
        let spec = EntropySpec::log_log();
        let rho0 =
            GridDensity::from_fn(1.0, 256, |x| (-x).exp() / (1.0 - (-1.0f64).exp())).unwrap();
        let phi = Potential::Linear { slope: 2.0 };
        let tau = 0.05;
        let traj = run_trajectory(&spec, &phi, &rho0, tau, 0.2, &JkoOptions::default()).unwrap();
        assert_eq!(emergence_check(&traj, 1e-6), Some(tau));
    }

    #[test]
    fn no_emergence_for_strictly_subcritical_diffusion() {
        let spec = EntropySpec::log_log();
        let rho0 = GridDensity::from_fn(4.0, 64, |x| {
            0.25 * (1.0 + 0.5 * (std::f64::consts::PI * x / 2.0).cos())
        })
        .unwrap();
        let traj =
            run_trajectory(&spec, &Potential::Zero, &rho0, 0.05, 0.5, &JkoOptions::default())
                .unwrap();
        assert!(traj.failure.is_none());
        assert_eq!(emergence_check(&traj, 1e-6), None);
    }

    #[test]
    fn contraction_of_identical_trajectories_is_zero() {
        let spec = EntropySpec::log_log();
        let rho0 = GridDensity::from_fn(1.0, 64, |x| (-x).exp()).unwrap();
        let phi = Potential::Linear { slope: 2.0 };
        let t = run_trajectory(&spec, &phi, &rho0, 0.05, 0.25, &JkoOptions::default()).unwrap();
        assert_eq!(contraction_check(&t, &t).unwrap(), 0.0);
    }

    #[test]
    fn contraction_on_random_pairs() {
        let spec = EntropySpec::log_log();
        let phi = Potential::Linear { slope: 2.0 };
        let n = 128;
        let h = 1.0 / n as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let opts = JkoOptions::default();
        for trial in 0..5 {
            let mk = |rng: &mut ChaCha8Rng| {
                let vals: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..2.0)).collect();
                GridDensity::new_normalized(1.0, vals).unwrap().0
            };
            let a = mk(&mut rng);
            let b = mk(&mut rng);
            let ta = run_trajectory(&spec, &phi, &a, 0.05, 0.25, &opts).unwrap();
            let tb = run_trajectory(&spec, &phi, &b, 0.05, 0.25, &opts).unwrap();
            let v = contraction_check(&ta, &tb).unwrap();
            assert!(v <= 1e-3 + 4.0 * h, "trial {trial}: violation {v}");
        }
    }

    #[test]
    fn contraction_rejects_mismatched_tau() {
        let spec = EntropySpec::log_log();
        let rho0 = GridDensity::uniform(1.0, 32);
        let opts = JkoOptions::default();
        let a = run_trajectory(&spec, &Potential::Zero, &rho0, 0.1, 0.2, &opts).unwrap();
        let b = run_trajectory(&spec, &Potential::Zero, &rho0, 0.05, 0.2, &opts).unwrap();
        assert!(contraction_check(&a, &b).is_err());
    }

    #[test]
    fn harmonicity_of_affine_pressure() {
        let n = 512;
        let grid = stationary_log_linear(1.0).unwrap().to_grid(n).unwrap();
        let pressure = stationary_log_linear(1.0).unwrap().pressure_grid(n);
        let phi = Potential::Linear { slope: 2.0 };
        let worst = plateau_harmonicity(&grid, &pressure, &phi, 1e-6).unwrap();
        assert!(worst <= 1e-4, "harmonicity residual {worst}");

        // Constant pressure, no drift: exactly zero.
        let flat = GridDensity::uniform(1.0, 64);
        let worst = plateau_harmonicity(&flat, &vec![1.0; 64], &Potential::Zero, 1e-6).unwrap();
        assert_eq!(worst, 0.0);
    }

    #[test]
    fn harmonicity_flags_a_kink() {
        let n = 64;
        let flat = GridDensity::uniform(1.0, n);
        let h = 1.0 / n as f64;
        let pressure: Vec<f64> =
            (0..n).map(|i| 1.5 + ((i as f64 + 0.5) * h - 0.5).abs() * 0.2).collect();
        let worst = plateau_harmonicity(&flat, &pressure, &Potential::Zero, 1e-6).unwrap();
        assert!(worst > 1.0, "kink not flagged: {worst}");
    }

    #[test]
    fn harmonicity_not_applicable_without_plateau() {
        let g = GridDensity::from_fn(1.0, 64, |x| (-x).exp()).unwrap();
        assert!(plateau_harmonicity(&g, &vec![1.0; 64], &Potential::Zero, 1e-9).is_none());
    }

    #[test]
    fn flux_jump_on_stationary_profile() {
        let spec = EntropySpec::log_log();
        let n = 512;
        let profile = stationary_log_linear(1.0).unwrap();
        let grid = profile.to_grid(n).unwrap();
        let pressure = profile.pressure_grid(n);
        let jumps = flux_jump_check(&grid, &pressure, &spec, 1e-6);
        assert_eq!(jumps.len(), 2, "expected both plateau edges");
        for j in &jumps {
            assert!(j.mismatch.abs() <= 0.05, "mismatch {} at {}", j.mismatch, j.location);
        }
    }

    #[test]
    fn flux_jump_empty_without_interface() {
        let spec = EntropySpec::log_log();
        let flat = GridDensity::uniform(1.0, 64);
        assert!(flux_jump_check(&flat, &vec![1.5; 64], &spec, 1e-6).is_empty());
    }

    #[test]
    fn flux_jump_flags_synthetic_discontinuity() {
        // Supercritical left half with the wrong slope against a plateau:
        // inside slope 0 (constant pressure), outside slope of L_S large.
        let spec = EntropySpec::log_log();
        let n = 64;
        let mut raw: Vec<f64> = (0..n / 2).map(|i| 1.5 - (i as f64) * 0.01).collect();
        raw.extend(vec![1.0; n / 2]);
        let mass: f64 = raw.iter().sum::<f64>() / n as f64;
        let deficit = mass - 1.0;
        // Remove the excess from the supercritical side uniformly so the
        // plateau half keeps the exact value 1.
        let m_half: f64 = raw[..n / 2].iter().sum::<f64>() / n as f64;
        for v in &mut raw[..n / 2] {
            *v *= (m_half - deficit) / m_half;
        }
        let grid = GridDensity::new(1.0, raw).unwrap();
        let pressure = vec![1.5; n];
        let jumps = flux_jump_check(&grid, &pressure, &spec, 1e-9);
        assert!(!jumps.is_empty());
        // Outside slope ~ 2 * drho/dx = -0.01 * 2 / h; inside slope 0.
        assert!(jumps[0].mismatch.abs() > 0.1, "mismatch {}", jumps[0].mismatch);
    }

    #[test]
    fn summability_report_tracks_norms() {
        let spec = EntropySpec::log_log();
        let rho0 = GridDensity::from_fn(1.0, 64, |x| (-x).exp()).unwrap();
        let traj =
            run_trajectory(&spec, &Potential::Zero, &rho0, 0.05, 0.2, &JkoOptions::default())
                .unwrap();
        let rep = summability_report(&traj, 2.0);
        assert!(rep.beta_nominal.is_infinite());
        assert_eq!(rep.sup_norms.len(), traj.frames.len());
        // Diffusion flattens: sup norm nonincreasing.
        for w in rep.sup_norms.windows(2) {
            assert!(w[1] <= w[0] + 1e-8);
        }
        // L2 norm of a probability density on [0,1] is at least 1.
        assert!(rep.lp_norms.iter().all(|&v| v >= 1.0 - 1e-12));
    }
}
