//! Independent verification routes: an assignment-LP oracle for the 1D
//! Wasserstein distance, and a Lagrangian (particle) convex-minimization
//! oracle for a single minimizing-movement step.
//!
//! Everything here is deliberately implemented without reusing the solver
//! path it cross-checks: the LP oracle does not sort-and-match, and the step
//! oracle minimizes the smoothed objective directly instead of iterating the
//! optimality conditions.

use crate::density::GridDensity;
use crate::entropy::EntropySpec;
use crate::error::{Error, Result};
use crate::potential::Potential;
use rand::Rng;

/// Split a density into `n_atoms` equal-mass atoms at quantile midpoints.
pub fn atomize(rho: &GridDensity, n_atoms: usize) -> Result<Vec<f64>> {
    (0..n_atoms)
        .map(|j| rho.quantile((j as f64 + 0.5) / n_atoms as f64))
        .collect()
}

/// Mean quadratic cost of the optimal assignment between two equal-mass atom
/// clouds, solved as a linear assignment problem (Hungarian algorithm with
/// potentials, O(n^3)). Independent of any ordering argument.
pub fn assignment_w2_squared(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    let cost = |i: usize, j: usize| (xs[i] - ys[j]) * (xs[i] - ys[j]);

    // Row/column potentials; p[j] = row matched to column j (1-based, 0 is
    // the virtual column).
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut total = 0.0;
    for j in 1..=n {
        total += cost(p[j] - 1, j - 1);
    }
    total / n as f64
}

/// Mean quadratic cost of the monotone (sorted) matching: the 1D quantile
/// formula applied to the same atom clouds.
pub fn sorted_matching_w2_squared(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// Random density whose cell masses are multiples of `1/atoms`.
pub fn random_rational_density(rng: &mut impl Rng, l: f64, n: usize, atoms: usize) -> GridDensity {
    let mut counts = vec![0usize; n];
    for _ in 0..atoms {
        counts[rng.gen_range(0..n)] += 1;
    }
    let h = l / n as f64;
    let values: Vec<f64> = counts.iter().map(|&k| k as f64 / (atoms as f64 * h)).collect();
    GridDensity::new_normalized(l, values).expect("positive mass").0
}

/// `C^2` interpolation of a kinked entropy across `[1 - eps, 1 + eps]`:
/// quintic Hermite matching value, slope and curvature of both branches.
#[derive(Debug, Clone)]
pub struct SmoothedEntropy<'a> {
    spec: &'a EntropySpec,
    eps: f64,
    coeffs: [f64; 6],
}

impl<'a> SmoothedEntropy<'a> {
    pub fn new(spec: &'a EntropySpec, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Domain(format!("smoothing width {eps} outside (0, 1)")));
        }
        let (a, b) = (1.0 - eps, 1.0 + eps);
        let w = 2.0 * eps;
        let coeffs = quintic_hermite(
            w,
            spec.eval_unchecked(a),
            spec.s_prime(a),
            spec.s_double_prime(a),
            spec.eval_unchecked(b),
            spec.s_prime(b),
            spec.s_double_prime(b),
        );
        Ok(Self { spec, eps, coeffs })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    fn in_band(&self, rho: f64) -> bool {
        (rho - 1.0).abs() < self.eps
    }

    fn t(&self, rho: f64) -> f64 {
        (rho - (1.0 - self.eps)) / (2.0 * self.eps)
    }

    pub fn s(&self, rho: f64) -> f64 {
        if self.in_band(rho) {
            poly_eval(&self.coeffs, self.t(rho))
        } else {
            self.spec.eval_unchecked(rho)
        }
    }

    pub fn s_prime(&self, rho: f64) -> f64 {
        if self.in_band(rho) {
            poly_eval_deriv(&self.coeffs, self.t(rho)) / (2.0 * self.eps)
        } else {
            self.spec.s_prime(rho)
        }
    }

    pub fn s_double_prime(&self, rho: f64) -> f64 {
        if self.in_band(rho) {
            poly_eval_deriv2(&self.coeffs, self.t(rho)) / (4.0 * self.eps * self.eps)
        } else {
            self.spec.s_double_prime(rho)
        }
    }
}

/// Coefficients (in `t in [0,1]`) of the quintic matching `f, f', f''` at
/// both ends of an interval of length `w`.
fn quintic_hermite(w: f64, f0: f64, d0: f64, s0: f64, f1: f64, d1: f64, s1: f64) -> [f64; 6] {
    const H0: [f64; 6] = [1.0, 0.0, 0.0, -10.0, 15.0, -6.0];
    const H1: [f64; 6] = [0.0, 1.0, 0.0, -6.0, 8.0, -3.0];
    const H2: [f64; 6] = [0.0, 0.0, 0.5, -1.5, 1.5, -0.5];
    const H3: [f64; 6] = [0.0, 0.0, 0.0, 10.0, -15.0, 6.0];
    const H4: [f64; 6] = [0.0, 0.0, 0.0, -4.0, 7.0, -3.0];
    const H5: [f64; 6] = [0.0, 0.0, 0.0, 0.5, -1.0, 0.5];
    let weights = [f0, d0 * w, s0 * w * w, f1, d1 * w, s1 * w * w];
    let basis = [H0, H1, H2, H3, H4, H5];
    let mut c = [0.0; 6];
    for (wgt, base) in weights.iter().zip(&basis) {
        for (ck, bk) in c.iter_mut().zip(base) {
            *ck += wgt * bk;
        }
    }
    c
}

fn poly_eval(c: &[f64; 6], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ck| acc * t + ck)
}

fn poly_eval_deriv(c: &[f64; 6], t: f64) -> f64 {
    (1..6).rev().fold(0.0, |acc, k| acc * t + k as f64 * c[k])
}

fn poly_eval_deriv2(c: &[f64; 6], t: f64) -> f64 {
    (2..6).rev().fold(0.0, |acc, k| acc * t + (k * (k - 1)) as f64 * c[k])
}

/// Direct convex minimization of one minimizing-movement step in Lagrangian
/// coordinates: `n_nodes + 1` monotone nodes bound `n_nodes` gaps of mass
/// `1/n_nodes` each. The discretized objective is
///
/// ```text
///   sum_j gap_j S_eps(1/(N gap_j)) + sum_j w_j Phi(X_j)
///     + (1/2 tau) sum_j w_j (X_j - Y_j)^2
/// ```
///
/// with `Y` the quantiles of the previous density and trapezoid weights
/// `w_j`. Solved by damped projected Newton (the Hessian is tridiagonal and
/// positive definite) until the projected gradient sup-norm falls below
/// `1e-9`. Returns the cell-binned minimizer.
pub fn step_oracle_quantile(
    spec: &EntropySpec,
    phi: &Potential,
    rho_prev: &GridDensity,
    tau: f64,
    epsilon: f64,
    n_particles: usize,
) -> Result<GridDensity> {
    if n_particles < 32 {
        return Err(Error::Oracle(format!("need at least 32 particles, got {n_particles}")));
    }
    let smooth = SmoothedEntropy::new(spec, epsilon)?;
    let n = n_particles;
    let l = rho_prev.domain_length();
    let nf = n as f64;

    let target: Vec<f64> = (0..=n).map(|j| rho_prev.quantile(j as f64 / nf)).collect::<Result<_>>()?;
    let mut x = target.clone();
    let weight = |j: usize| if j == 0 || j == n { 0.5 / nf } else { 1.0 / nf };

    // Internal-energy contribution of one gap and its derivatives in the gap.
    let gap_terms = |g: f64| -> (f64, f64, f64) {
        let u = 1.0 / (nf * g);
        let s = smooth.s(u);
        let sp = smooth.s_prime(u);
        let spp = smooth.s_double_prime(u);
        (g * s, s - u * sp, u * u * spp / g)
    };

    let objective = |x: &[f64]| -> f64 {
        let mut val = 0.0;
        for j in 0..n {
            let g = x[j + 1] - x[j];
            val += gap_terms(g).0;
        }
        for (j, &xj) in x.iter().enumerate() {
            let w = weight(j);
            val += w * phi.eval(xj) + w * (xj - target[j]) * (xj - target[j]) / (2.0 * tau);
        }
        val
    };

    let mut f_cur = objective(&x);
    let mut grad = vec![0.0; n + 1];
    let mut diag = vec![0.0; n + 1];
    let mut off = vec![0.0; n];
    let mut converged = false;

    for _ in 0..500 {
        // Assemble gradient and tridiagonal Hessian.
        grad.iter_mut().for_each(|g| *g = 0.0);
        diag.iter_mut().for_each(|d| *d = 0.0);
        for j in 0..n {
            let g = x[j + 1] - x[j];
            if g <= 0.0 {
                return Err(Error::Oracle("particle ordering lost".into()));
            }
            let (_, t1, t2) = gap_terms(g);
            grad[j] -= t1;
            grad[j + 1] += t1;
            diag[j] += t2;
            diag[j + 1] += t2;
            off[j] = -t2;
        }
        for j in 0..=n {
            let w = weight(j);
            grad[j] += w * phi.deriv(x[j]) + w * (x[j] - target[j]) / tau;
            diag[j] += w * (phi.second_deriv() + 1.0 / tau);
        }

        // Projected gradient: clamped endpoints pressing outward do not count.
        let mut pg: f64 = 0.0;
        for j in 0..=n {
            let gj = grad[j];
            if (j == 0 && x[0] <= 0.0 && gj > 0.0) || (j == n && x[n] >= l && gj < 0.0) {
                continue;
            }
            pg = pg.max(gj.abs());
        }
        if pg <= 1e-9 {
            converged = true;
            break;
        }

        // Freeze nodes pinned at an active boundary clamp: their gradient
        // presses outward and must not contaminate the Newton direction of
        // the free nodes.
        let mut grad_free = grad.clone();
        if x[0] <= 0.0 && grad[0] > 0.0 {
            grad_free[0] = 0.0;
            diag[0] = 1.0;
            off[0] = 0.0;
        }
        if x[n] >= l && grad[n] < 0.0 {
            grad_free[n] = 0.0;
            diag[n] = 1.0;
            off[n - 1] = 0.0;
        }
        let dir = solve_tridiagonal(&diag, &off, &grad_free);

        // Cap the step so no gap shrinks below 10% of its current size.
        let mut alpha_max: f64 = 1.0;
        for j in 0..n {
            let dg = dir[j + 1] - dir[j]; // step is -alpha * dir
            let g = x[j + 1] - x[j];
            if dg > 0.0 {
                alpha_max = alpha_max.min(0.9 * g / dg);
            }
        }
        let mut alpha = alpha_max.min(1.0);
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> =
                x.iter().zip(&dir).map(|(&xj, &dj)| (xj - alpha * dj).clamp(0.0, l)).collect();
            if cand.windows(2).all(|w| w[1] > w[0]) {
                let f_cand = objective(&cand);
                if f_cand <= f_cur {
                    x = cand;
                    f_cur = f_cand;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            // Descent stalled below line-search resolution; report against
            // the convergence criterion below.
            break;
        }
    }

    if !converged {
        // Re-test: the stall may have happened exactly at the minimizer.
        let mut pg: f64 = 0.0;
        for j in 0..=n {
            let gj = grad[j];
            if (j == 0 && x[0] <= 0.0 && gj > 0.0) || (j == n && x[n] >= l && gj < 0.0) {
                continue;
            }
            pg = pg.max(gj.abs());
        }
        if pg > 1e-6 {
            return Err(Error::Oracle(format!("projected gradient {pg:.3e} did not reach tolerance")));
        }
    }

    bin_particles(&x, l, rho_prev.n())
}

/// Thomas algorithm for a symmetric positive-definite tridiagonal system.
fn solve_tridiagonal(diag: &[f64], off: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = off.first().copied().unwrap_or(0.0) / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - off[i - 1] * c[i - 1];
        if i < n - 1 {
            c[i] = off[i] / m;
        }
        d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    d
}

/// Piecewise-uniform reconstruction from monotone nodes: mass `1/N` spread
/// over each gap, overlapped onto the target grid.
fn bin_particles(x: &[f64], l: f64, n_cells: usize) -> Result<GridDensity> {
    let n_gaps = x.len() - 1;
    let h = l / n_cells as f64;
    let mut values = vec![0.0; n_cells];
    for j in 0..n_gaps {
        let (a, b) = (x[j], x[j + 1]);
        let mass = 1.0 / n_gaps as f64;
        let density = mass / (b - a);
        let i0 = ((a / h) as usize).min(n_cells - 1);
        let i1 = ((b / h) as usize).min(n_cells - 1);
        for i in i0..=i1 {
            let lo = (i as f64 * h).max(a);
            let hi = ((i + 1) as f64 * h).min(b);
            if hi > lo {
                values[i] += density * (hi - lo) / h;
            }
        }
    }
    Ok(GridDensity::new_normalized(l, values)?.0)
}
