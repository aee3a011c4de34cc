//! Closed-form stationary states for the two-slope logarithmic entropy with
//! linear drift `Phi(x) = 2x` on `[0, l]`, and the discrete stationarity
//! residual used to compare solver output against them.
//!
//! The stationary profile glues at most three pieces:
//! supercritical `rho = e^{A - x}` on `[0, A)` (rate-1 exponential),
//! a critical plateau `rho = 1` on `[A, A + 1/2]`,
//! and subcritical `rho = e^{1 + 2A - 2x}` beyond (rate-2 exponential).
//! Which pieces appear is decided by the domain length alone.

use crate::density::GridDensity;
use crate::entropy::EntropySpec;
use crate::error::{Error, Result};
use crate::potential::Potential;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `l <= ln 2`: the density is supercritical on the whole domain.
    Pure,
    /// `ln 2 < l <= ln(3/2) + 1/2`: supercritical region plus a plateau that
    /// reaches the right boundary.
    TwoPhase,
    /// `l > ln(3/2) + 1/2`: all three pieces, plateau of length exactly 1/2.
    ThreePhase,
}

/// Length threshold between the pure and two-phase regimes.
pub fn threshold_two_phase() -> f64 {
    2.0_f64.ln()
}

/// Length threshold between the two-phase and three-phase regimes.
pub fn threshold_three_phase() -> f64 {
    1.5_f64.ln() + 0.5
}

#[derive(Debug, Clone, Serialize)]
pub struct StationaryProfile {
    pub l: f64,
    pub regime: Regime,
    /// Left endpoint of the plateau; equals `l` in the pure regime (no
    /// plateau) and the root of the mass equation otherwise.
    pub plateau_start: f64,
    /// Right endpoint of the plateau (clipped to `l` in the two-phase regime).
    pub plateau_end: f64,
    /// Density value at the left boundary.
    pub rho_at_0: f64,
}

impl StationaryProfile {
    pub fn density(&self, x: f64) -> f64 {
        let a = self.plateau_start;
        match self.regime {
            Regime::Pure => (-x).exp() / (1.0 - (-self.l).exp()),
            _ => {
                if x < a {
                    (a - x).exp()
                } else if x <= self.plateau_end {
                    1.0
                } else {
                    (1.0 + 2.0 * a - 2.0 * x).exp()
                }
            }
        }
    }

    /// Pressure selection: pinned at `S'(1+) = 2` in the supercritical phase,
    /// affine `2A + 2 - 2x` across the plateau, pinned at `S'(1-) = 1` in the
    /// subcritical phase — i.e. the clamp of the affine profile to `[1, 2]`.
    pub fn pressure(&self, x: f64) -> f64 {
        match self.regime {
            Regime::Pure => 2.0,
            _ => (2.0 * self.plateau_start + 2.0 - 2.0 * x).clamp(1.0, 2.0),
        }
    }

    /// Exact mass of the profile on `[x0, x1]` (subinterval of the domain).
    pub fn mass_on(&self, x0: f64, x1: f64) -> f64 {
        if x1 <= x0 {
            return 0.0;
        }
        match self.regime {
            Regime::Pure => ((-x0).exp() - (-x1).exp()) / (1.0 - (-self.l).exp()),
            _ => {
                let a = self.plateau_start;
                let b = self.plateau_end;
                let mut m = 0.0;
                // Supercritical piece.
                let (s0, s1) = (x0.min(a), x1.min(a));
                if s1 > s0 {
                    m += a.exp() * ((-s0).exp() - (-s1).exp());
                }
                // Plateau piece.
                m += (x1.min(b) - x0.max(a)).max(0.0);
                // Subcritical piece.
                let (u0, u1) = (x0.max(b), x1.max(b));
                if u1 > u0 {
                    m += 0.5 * (1.0 + 2.0 * a).exp() * ((-2.0 * u0).exp() - (-2.0 * u1).exp());
                }
                m
            }
        }
    }

    /// Cell averages of the exact profile (per-cell closed-form integrals).
    pub fn to_grid(&self, n: usize) -> Result<GridDensity> {
        let h = self.l / n as f64;
        let values: Vec<f64> =
            (0..n).map(|i| self.mass_on(i as f64 * h, (i + 1) as f64 * h) / h).collect();
        let (grid, _) = GridDensity::new_normalized(self.l, values)?;
        Ok(grid)
    }

    /// Pressure sampled at the cell centers.
    pub fn pressure_grid(&self, n: usize) -> Vec<f64> {
        let h = self.l / n as f64;
        (0..n).map(|i| self.pressure((i as f64 + 0.5) * h)).collect()
    }
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// The unique stationary state of unit mass for the two-slope logarithmic
/// entropy with drift `2x` on `[0, l]`.
pub fn stationary_log_linear(l: f64) -> Result<StationaryProfile> {
    if !(l > 0.0) || !l.is_finite() {
        return Err(Error::Domain(format!("domain length {l} must be positive and finite")));
    }
    if l <= threshold_two_phase() {
        return Ok(StationaryProfile {
            l,
            regime: Regime::Pure,
            plateau_start: l,
            plateau_end: l,
            rho_at_0: 1.0 / (1.0 - (-l).exp()),
        });
    }
    if l <= threshold_three_phase() {
        // Mass balance e^A - A = 2 - l; the left side is increasing, with a
        // sign change on [l - 1/2, l].
        let a = bisect(l - 0.5, l, |a| a.exp() - a - (2.0 - l));
        return Ok(StationaryProfile {
            l,
            regime: Regime::TwoPhase,
            plateau_start: a,
            plateau_end: l,
            rho_at_0: a.exp(),
        });
    }
    // Mass balance e^A - e^{2A + 1 - 2l}/2 = 1 on (0, l - 1/2).
    let a = bisect(0.0, l - 0.5, |a| a.exp() - 0.5 * (2.0 * a + 1.0 - 2.0 * l).exp() - 1.0);
    Ok(StationaryProfile {
        l,
        regime: Regime::ThreePhase,
        plateau_start: a,
        plateau_end: a + 0.5,
        rho_at_0: a.exp(),
    })
}

/// Max magnitude of the discrete stationary flux `-d/dx L_S(rho, p) - rho Phi'`,
/// with the derivative taken as a centered difference of the per-cell `L_S`
/// values.
///
/// Cells are classified into phases (subcritical / critical / supercritical)
/// by `tol_phase`, and the flux is only evaluated at cells whose five-cell
/// window shares a single phase: a cell average straddling a phase interface
/// carries a graph-selected `L_S` value of the wrong branch, which would
/// pollute differences across the interface by `O(1)` regardless of `h`.
pub fn stationary_residual(
    spec: &EntropySpec,
    phi: &Potential,
    rho: &GridDensity,
    pressure: &[f64],
    tol_phase: f64,
) -> Result<f64> {
    let n = rho.n();
    if pressure.len() != n {
        return Err(Error::GridMismatch(format!(
            "pressure has {} entries, grid has {n} cells",
            pressure.len()
        )));
    }
    let h = rho.h();
    let v = rho.values();
    let ls: Vec<f64> =
        (0..n).map(|i| spec.l_s_graph(v[i], pressure[i], tol_phase)).collect();
    let phase = |i: usize| -> i8 {
        if v[i] < 1.0 - tol_phase {
            -1
        } else if v[i] > 1.0 + tol_phase {
            1
        } else {
            0
        }
    };
    let mut worst: f64 = 0.0;
    for i in 2..n.saturating_sub(2) {
        let p = phase(i);
        if (i - 2..=i + 2).any(|j| phase(j) != p) {
            continue;
        }
        let flux = -(ls[i + 1] - ls[i - 1]) / (2.0 * h) - v[i] * phi.deriv(rho.cell_center(i));
        worst = worst.max(flux.abs());
    }
    Ok(worst)
}
