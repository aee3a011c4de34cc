//! Convex internal-energy densities with a derivative jump at the critical
//! value `rho = 1`, their subdifferentials, generalized inverses, and the
//! effective flux operator `L_S`.
//!
//! The entropy `S` is strictly convex and superlinear on `[0, inf)`, smooth
//! away from 1, and has one-sided derivatives `S'(1-) <= S'(1+)`. The kink
//! encodes a jump in diffusion intensity between the phases `{rho < 1}` and
//! `{rho > 1}`.

use crate::error::{Error, Result};

/// Tolerance used when checking that a `(rho, p)` pair satisfies the pressure
/// constraints before evaluating `L_S`.
const CONSTRAINT_TOL: f64 = 1e-9;

/// Margins smaller than this are reported as inconclusive by the growth
/// validator (sampled checks cannot distinguish equality from strictness).
const INCONCLUSIVE_MARGIN: f64 = 1e-12;

/// Piecewise-linear table of `(rho, S'(rho))` breakpoints for user-supplied
/// entropies, together with the declared kink data at `rho = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomTable {
    /// Strictly increasing abscissae (all positive, none equal to 1).
    pub rho: Vec<f64>,
    /// S' at the breakpoints; must be nondecreasing for a convex entropy.
    pub s_prime: Vec<f64>,
    pub s_prime_1_minus: f64,
    pub s_prime_1_plus: f64,
    pub s_at_1: f64,
}

impl CustomTable {
    pub fn new(
        rho: Vec<f64>,
        s_prime: Vec<f64>,
        s_prime_1_minus: f64,
        s_prime_1_plus: f64,
        s_at_1: f64,
    ) -> Result<Self> {
        if rho.len() != s_prime.len() || rho.len() < 2 {
            return Err(Error::Domain(
                "custom table needs at least two (rho, s_prime) rows".into(),
            ));
        }
        if rho.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("custom table rho column must be strictly increasing".into()));
        }
        if rho[0] <= 0.0 {
            return Err(Error::Domain("custom table rho values must be positive".into()));
        }
        if s_prime_1_minus > s_prime_1_plus {
            return Err(Error::Domain("custom table requires s_prime_1_minus <= s_prime_1_plus".into()));
        }
        Ok(Self { rho, s_prime, s_prime_1_minus, s_prime_1_plus, s_at_1 })
    }

    /// Parse the custom entropy file format: a 3-line `key=value` preamble
    /// (`s_prime_1_minus=`, `s_prime_1_plus=`, `s_at_1=`) followed by a CSV
    /// with header `rho,s_prime`.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut s1m = None;
        let mut s1p = None;
        let mut s1 = None;
        let mut lines = text.lines();
        for _ in 0..3 {
            let line = lines
                .next()
                .ok_or_else(|| Error::Domain("custom table: missing preamble line".into()))?;
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Domain(format!("custom table preamble: expected key=value, got `{line}`")))?;
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::Domain(format!("custom table preamble: bad number `{value}`")))?;
            match key.trim() {
                "s_prime_1_minus" => s1m = Some(v),
                "s_prime_1_plus" => s1p = Some(v),
                "s_at_1" => s1 = Some(v),
                other => return Err(Error::Domain(format!("custom table preamble: unknown key `{other}`"))),
            }
        }
        let header = lines
            .next()
            .ok_or_else(|| Error::Domain("custom table: missing header".into()))?;
        if header.trim() != "rho,s_prime" {
            return Err(Error::Domain(format!("custom table: expected header `rho,s_prime`, got `{header}`")));
        }
        let mut rho = Vec::new();
        let mut sp = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (a, b) = line
                .split_once(',')
                .ok_or_else(|| Error::Domain(format!("custom table row {}: expected two fields", i + 5)))?;
            rho.push(a.trim().parse().map_err(|_| Error::Domain(format!("custom table row {}: bad rho", i + 5)))?);
            sp.push(b.trim().parse().map_err(|_| Error::Domain(format!("custom table row {}: bad s_prime", i + 5)))?);
        }
        let (s1m, s1p, s1) = match (s1m, s1p, s1) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => return Err(Error::Domain("custom table preamble incomplete".into())),
        };
        Self::new(rho, sp, s1m, s1p, s1)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }

    /// S' on the branch containing `rho` (constant extrapolation outside the
    /// table; the declared one-sided values govern at the kink).
    fn s_prime_at(&self, rho: f64) -> f64 {
        // Interpolation nodes on each side of 1 include the kink endpoint.
        let raw = if rho < 1.0 {
            interp_clamped(&self.rho, &self.s_prime, rho, |r| r < 1.0, 1.0, self.s_prime_1_minus)
        } else {
            interp_clamped(&self.rho, &self.s_prime, rho, |r| r > 1.0, 1.0, self.s_prime_1_plus)
        };
        raw
    }

    /// Exact integral of the piecewise-linear S' from 1 to `rho`.
    fn s_at(&self, rho: f64) -> f64 {
        let (lo, hi, sign) = if rho < 1.0 { (rho, 1.0, -1.0) } else { (1.0, rho, 1.0) };
        // Integrate trapezoid-exactly over the breakpoints inside [lo, hi].
        let mut nodes: Vec<f64> = vec![lo];
        for &r in &self.rho {
            if r > lo && r < hi {
                nodes.push(r);
            }
        }
        nodes.push(hi);
        // Evaluate S' on the branch being integrated: at the kink itself the
        // one-sided limit of that branch governs, not the other side's value.
        let branch_value = |r: f64| {
            if rho < 1.0 {
                if r >= 1.0 {
                    self.s_prime_1_minus
                } else {
                    self.s_prime_at(r)
                }
            } else if r <= 1.0 {
                self.s_prime_1_plus
            } else {
                self.s_prime_at(r)
            }
        };
        let mut integral = 0.0;
        for w in nodes.windows(2) {
            let (a, b) = (w[0], w[1]);
            integral += 0.5 * (branch_value(a) + branch_value(b)) * (b - a);
        }
        self.s_at_1 + sign * integral
    }

    /// Piecewise-constant S'' (segment slope of the S' table).
    fn s_double_prime_at(&self, rho: f64) -> f64 {
        let dr = 1e-7 * rho.max(1e-3);
        let side = if rho < 1.0 { (1.0 - rho).min(dr) } else { dr };
        let a = (rho - side).max(if rho < 1.0 { 0.0 } else { 1.0 + 1e-300 });
        let b = rho + if rho < 1.0 { (1.0 - rho - 1e-16).max(0.0).min(dr) } else { dr };
        if b - a <= 0.0 {
            return 0.0;
        }
        (self.s_prime_at(b) - self.s_prime_at(a)) / (b - a)
    }
}

fn interp_clamped(
    xs: &[f64],
    ys: &[f64],
    x: f64,
    side: impl Fn(f64) -> bool,
    kink_x: f64,
    kink_y: f64,
) -> f64 {
    let mut nx: Vec<f64> = Vec::new();
    let mut ny: Vec<f64> = Vec::new();
    for (&a, &b) in xs.iter().zip(ys) {
        if side(a) {
            nx.push(a);
            ny.push(b);
        }
    }
    // Anchor the branch at the kink so interpolation is continuous up to rho=1.
    if nx.is_empty() || (kink_x < nx[0]) {
        nx.insert(0, kink_x);
        ny.insert(0, kink_y);
    } else if kink_x > *nx.last().unwrap() {
        nx.push(kink_x);
        ny.push(kink_y);
    }
    if x <= nx[0] {
        return ny[0];
    }
    if x >= *nx.last().unwrap() {
        return *ny.last().unwrap();
    }
    let j = nx.partition_point(|&v| v <= x) - 1;
    let t = (x - nx[j]) / (nx[j + 1] - nx[j]);
    ny[j] + t * (ny[j + 1] - ny[j])
}

/// The concrete entropy family.
#[derive(Debug, Clone, PartialEq)]
pub enum EntropyFamily {
    /// `rho log rho` below 1, `2 rho log rho` above.
    LogLog,
    /// `rho log rho` below 1, `rho^m/(m-1) - 1/(m-1)` above.
    LogPow { m: f64 },
    /// `rho^m/(m-1)` below 1, `2 rho^m/(m-1) - 1/(m-1)` above.
    PowPowEqual { m: f64 },
    /// `rho^m/(m-1)` below 1, `rho^r/(r-1) - 1/(r-1) + 1/(m-1)` above (m >= r).
    PowPow { m: f64, r: f64 },
    /// Tabulated S' with declared kink data.
    Custom(CustomTable),
}

/// An entropy together with its kink data and growth parameters. Built-in
/// families compute the growth constants analytically.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropySpec {
    pub family: EntropyFamily,
    /// Growth exponent on (0,1): `rho^{m-2}/sigma2 < S''(rho)`.
    pub m: f64,
    /// Growth exponent on (1,inf): `S''(rho) <= sigma1 rho^{r-2}`.
    pub r: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    /// `S'(0+)`; `f64::NEG_INFINITY` when the slope is unbounded below.
    pub s_prime_0: f64,
    pub s_prime_1_minus: f64,
    pub s_prime_1_plus: f64,
    pub s_at_1: f64,
}

impl EntropySpec {
    pub fn log_log() -> Self {
        Self {
            family: EntropyFamily::LogLog,
            m: 1.0,
            r: 1.0,
            sigma1: 2.0,
            sigma2: 1.0,
            s_prime_0: f64::NEG_INFINITY,
            s_prime_1_minus: 1.0,
            s_prime_1_plus: 2.0,
            s_at_1: 0.0,
        }
    }

    pub fn log_pow(m: f64) -> Result<Self> {
        if m <= 1.0 {
            return Err(Error::Domain(format!("log_pow requires m > 1, got {m}")));
        }
        Ok(Self {
            family: EntropyFamily::LogPow { m },
            m: 1.0,
            r: m,
            sigma1: m,
            sigma2: 1.0,
            s_prime_0: f64::NEG_INFINITY,
            s_prime_1_minus: 1.0,
            s_prime_1_plus: m / (m - 1.0),
            s_at_1: 0.0,
        })
    }

    pub fn pow_pow_equal(m: f64) -> Result<Self> {
        if m <= 1.0 {
            return Err(Error::Domain(format!("pow_pow_equal requires m > 1, got {m}")));
        }
        Ok(Self {
            family: EntropyFamily::PowPowEqual { m },
            m,
            r: m,
            sigma1: 2.0 * m,
            sigma2: 1.0,
            s_prime_0: 0.0,
            s_prime_1_minus: m / (m - 1.0),
            s_prime_1_plus: 2.0 * m / (m - 1.0),
            s_at_1: 1.0 / (m - 1.0),
        })
    }

    pub fn pow_pow(m: f64, r: f64) -> Result<Self> {
        if !(m >= r && r > 1.0) {
            return Err(Error::Domain(format!("pow_pow requires m >= r > 1, got m={m}, r={r}")));
        }
        Ok(Self {
            family: EntropyFamily::PowPow { m, r },
            m,
            r,
            sigma1: r,
            sigma2: 1.0,
            s_prime_0: 0.0,
            s_prime_1_minus: m / (m - 1.0),
            s_prime_1_plus: r / (r - 1.0),
            s_at_1: 1.0 / (m - 1.0),
        })
    }

    pub fn custom(table: CustomTable) -> Self {
        // Growth constants for tabulated entropies are estimated from the
        // segment slopes of S' with a factor-2 headroom.
        let mut sigma1: f64 = 1.0;
        let mut sigma2: f64 = 1.0;
        for k in 0..64 {
            let rho_lo = 1e-3 + (1.0 - 2e-3) * k as f64 / 63.0;
            let spp = table.s_double_prime_at(rho_lo);
            if spp > 0.0 {
                sigma2 = sigma2.max(2.0 / (rho_lo * spp));
            }
            let rho_hi = 1.0 + 1e-3 + 10.0 * k as f64 / 63.0;
            let spp = table.s_double_prime_at(rho_hi);
            sigma1 = sigma1.max(2.0 * rho_hi * spp);
        }
        let s_prime_0 = table.s_prime_at(f64::MIN_POSITIVE);
        Self {
            m: 1.0,
            r: 1.0,
            sigma1,
            sigma2,
            s_prime_0,
            s_prime_1_minus: table.s_prime_1_minus,
            s_prime_1_plus: table.s_prime_1_plus,
            s_at_1: table.s_at_1,
            family: EntropyFamily::Custom(table),
        }
    }

    /// S(rho). For log families S(0) = 0 by continuous extension.
    pub fn eval(&self, rho: f64) -> Result<f64> {
        if rho < 0.0 || !rho.is_finite() {
            return Err(Error::Domain(format!("entropy evaluated at rho = {rho}")));
        }
        Ok(self.eval_unchecked(rho))
    }

    pub(crate) fn eval_unchecked(&self, rho: f64) -> f64 {
        match &self.family {
            EntropyFamily::LogLog => {
                if rho == 0.0 {
                    0.0
                } else if rho <= 1.0 {
                    rho * rho.ln()
                } else {
                    2.0 * rho * rho.ln()
                }
            }
            EntropyFamily::LogPow { m } => {
                if rho == 0.0 {
                    0.0
                } else if rho <= 1.0 {
                    rho * rho.ln()
                } else {
                    rho.powf(*m) / (m - 1.0) - 1.0 / (m - 1.0)
                }
            }
            EntropyFamily::PowPowEqual { m } => {
                if rho <= 1.0 {
                    rho.powf(*m) / (m - 1.0)
                } else {
                    2.0 * rho.powf(*m) / (m - 1.0) - 1.0 / (m - 1.0)
                }
            }
            EntropyFamily::PowPow { m, r } => {
                if rho <= 1.0 {
                    rho.powf(*m) / (m - 1.0)
                } else {
                    rho.powf(*r) / (r - 1.0) - 1.0 / (r - 1.0) + 1.0 / (m - 1.0)
                }
            }
            EntropyFamily::Custom(t) => t.s_at(rho),
        }
    }

    /// S'(rho) on the branch containing `rho`; at `rho = 1` returns the
    /// left value (use [`EntropySpec::subdifferential`] for the full interval).
    pub fn s_prime(&self, rho: f64) -> f64 {
        match &self.family {
            EntropyFamily::LogLog => {
                if rho <= 1.0 {
                    1.0 + rho.ln()
                } else {
                    2.0 * (1.0 + rho.ln())
                }
            }
            EntropyFamily::LogPow { m } => {
                if rho <= 1.0 {
                    1.0 + rho.ln()
                } else {
                    m * rho.powf(m - 1.0) / (m - 1.0)
                }
            }
            EntropyFamily::PowPowEqual { m } => {
                if rho <= 1.0 {
                    m * rho.powf(m - 1.0) / (m - 1.0)
                } else {
                    2.0 * m * rho.powf(m - 1.0) / (m - 1.0)
                }
            }
            EntropyFamily::PowPow { m, r } => {
                if rho <= 1.0 {
                    m * rho.powf(m - 1.0) / (m - 1.0)
                } else {
                    r * rho.powf(r - 1.0) / (r - 1.0)
                }
            }
            EntropyFamily::Custom(t) => t.s_prime_at(rho),
        }
    }

    /// S''(rho) away from the kink.
    pub fn s_double_prime(&self, rho: f64) -> f64 {
        match &self.family {
            EntropyFamily::LogLog => {
                if rho <= 1.0 {
                    1.0 / rho
                } else {
                    2.0 / rho
                }
            }
            EntropyFamily::LogPow { m } => {
                if rho <= 1.0 {
                    1.0 / rho
                } else {
                    m * rho.powf(m - 2.0)
                }
            }
            EntropyFamily::PowPowEqual { m } => {
                if rho <= 1.0 {
                    m * rho.powf(m - 2.0)
                } else {
                    2.0 * m * rho.powf(m - 2.0)
                }
            }
            EntropyFamily::PowPow { m, r } => {
                if rho <= 1.0 {
                    m * rho.powf(m - 2.0)
                } else {
                    r * rho.powf(r - 2.0)
                }
            }
            EntropyFamily::Custom(t) => t.s_double_prime_at(rho),
        }
    }

    /// The subdifferential of S at `rho > 0` as a closed interval `[lo, hi]`:
    /// a singleton off the kink, `[S'(1-), S'(1+)]` at `rho = 1`, and
    /// `(-inf, S'(0+)]` at `rho = 0`.
    pub fn subdifferential(&self, rho: f64) -> Result<(f64, f64)> {
        if rho < 0.0 || !rho.is_finite() {
            return Err(Error::Domain(format!("subdifferential at rho = {rho}")));
        }
        if rho == 0.0 {
            return Ok((f64::NEG_INFINITY, self.s_prime_0));
        }
        if rho == 1.0 {
            return Ok((self.s_prime_1_minus, self.s_prime_1_plus));
        }
        let v = self.s_prime(rho);
        Ok((v, v))
    }

    /// The generalized inverse of S': total, nondecreasing and continuous on
    /// the reals; 0 below `S'(0+)`, 1 on `[S'(1-), S'(1+)]`, `(S')^{-1}(v)`
    /// otherwise.
    pub fn generalized_inverse(&self, v: f64) -> f64 {
        if v <= self.s_prime_0 {
            return 0.0;
        }
        if v >= self.s_prime_1_minus {
            if v <= self.s_prime_1_plus {
                return 1.0;
            }
            return self.invert_upper(v);
        }
        self.invert_lower(v)
    }

    fn invert_lower(&self, v: f64) -> f64 {
        match &self.family {
            EntropyFamily::LogLog | EntropyFamily::LogPow { .. } => (v - 1.0).exp(),
            EntropyFamily::PowPowEqual { m } | EntropyFamily::PowPow { m, .. } => {
                ((m - 1.0) * v / m).powf(1.0 / (m - 1.0))
            }
            EntropyFamily::Custom(t) => invert_monotone(|r| t.s_prime_at(r), v, 0.0, 1.0),
        }
    }

    fn invert_upper(&self, v: f64) -> f64 {
        match &self.family {
            EntropyFamily::LogLog => (v / 2.0 - 1.0).exp(),
            EntropyFamily::LogPow { m } => ((m - 1.0) * v / m).powf(1.0 / (m - 1.0)),
            EntropyFamily::PowPowEqual { m } => ((m - 1.0) * v / (2.0 * m)).powf(1.0 / (m - 1.0)),
            EntropyFamily::PowPow { r, .. } => ((r - 1.0) * v / r).powf(1.0 / (r - 1.0)),
            EntropyFamily::Custom(t) => {
                let mut hi = 2.0;
                while t.s_prime_at(hi) < v && hi < 1e12 {
                    hi *= 2.0;
                }
                invert_monotone(|r| t.s_prime_at(r), v, 1.0, hi)
            }
        }
    }

    /// Check that `(rho, p)` satisfies the pressure constraints: `p = S'(1-)`
    /// on `{rho < 1}`, `p in [S'(1-), S'(1+)]` on `{rho = 1}`, `p = S'(1+)` on
    /// `{rho > 1}`.
    pub fn check_pressure(&self, rho: f64, p: f64) -> Result<()> {
        let (lo, hi) = (self.s_prime_1_minus, self.s_prime_1_plus);
        let ok = if rho < 1.0 {
            (p - lo).abs() <= CONSTRAINT_TOL
        } else if rho > 1.0 {
            (p - hi).abs() <= CONSTRAINT_TOL
        } else {
            p >= lo - CONSTRAINT_TOL && p <= hi + CONSTRAINT_TOL
        };
        if ok {
            Ok(())
        } else {
            Err(Error::PressureConstraint { rho, p, lo, hi })
        }
    }

    /// The effective flux `L_S(rho, p) = [rho S'(rho) - S(rho) + S(1)] 1_{rho != 1}
    /// + p 1_{rho = 1}`, with the `(rho, p)` constraint enforced.
    pub fn l_s(&self, rho: f64, p: f64) -> Result<f64> {
        if rho < 0.0 || !rho.is_finite() {
            return Err(Error::Domain(format!("l_s at rho = {rho}")));
        }
        self.check_pressure(rho, p)?;
        Ok(self.l_s_graph(rho, p, 0.0))
    }

    /// `L_S` with a phase tolerance: cells with `|rho - 1| <= tol_phase` use
    /// the plateau branch. Used on solver frames where `rho` only reaches 1
    /// up to the fixed-point residual. No constraint validation.
    pub fn l_s_graph(&self, rho: f64, p: f64, tol_phase: f64) -> f64 {
        if (rho - 1.0).abs() <= tol_phase || rho == 1.0 {
            p
        } else if rho == 0.0 {
            // rho S' - S -> 0 as rho -> 0 for every admissible family.
            self.s_at_1
        } else {
            rho * self.s_prime(rho) - self.eval_unchecked(rho) + self.s_at_1
        }
    }

    /// Split `S = S_a + S_b` with `S_a` carrying the kink and `S_b` smooth
    /// (`C^1` at 1 with `S_b'(1) = 0`). Log families use the logarithmic
    /// splitting (the exponent is ignored); power and tabulated families use
    /// the power splitting with exponent `l_exponent in (1, beta)`. In 1D
    /// `beta = +inf`, so any `l_exponent > 1` is admissible.
    pub fn decompose(&self, l_exponent: f64) -> Result<EntropyDecomposition<'_>> {
        let form = match &self.family {
            EntropyFamily::LogLog | EntropyFamily::LogPow { .. } => DecompositionForm::Log,
            _ => {
                if !(l_exponent > 1.0 && l_exponent.is_finite()) {
                    return Err(Error::Domain(format!(
                        "decomposition exponent must lie in (1, beta), got {l_exponent}"
                    )));
                }
                DecompositionForm::Power
            }
        };
        Ok(EntropyDecomposition { spec: self, form, l_exponent })
    }

    /// Sampled validation of the growth sandwiches
    /// `rho^{m-2}/sigma2 < S''` on (0,1) and `S'' <= sigma1 rho^{r-2}` on
    /// (1, inf), on log-spaced grids. Failures are reported, not thrown.
    pub fn validate_assumptions(&self, samples: usize) -> ValidationReport {
        assert!(samples >= 100, "validate_assumptions needs at least 100 samples");
        let mut lower = CheckResult::new();
        let mut upper = CheckResult::new();
        for i in 0..samples {
            let t = (i as f64 + 0.5) / samples as f64;
            // (1e-6, 1), log-spaced.
            let rho = 1e-6_f64.powf(1.0 - t);
            let margin = self.s_double_prime(rho) - rho.powf(self.m - 2.0) / self.sigma2;
            lower.update(margin, rho);
            // (1, 1e3), log-spaced.
            let rho = 1e3_f64.powf(t);
            let margin = self.sigma1 * rho.powf(self.r - 2.0) - self.s_double_prime(rho);
            upper.update(margin, rho);
        }
        ValidationReport {
            lower,
            upper,
            s_prime_0_unbounded: self.s_prime_0 == f64::NEG_INFINITY,
        }
    }
}

fn invert_monotone(f: impl Fn(f64) -> f64, v: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < v {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.abs().max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecompositionForm {
    Log,
    Power,
}

/// The `S = S_a + S_b` splitting: `S_a` is the minimal kink-carrying part,
/// `S_b := S - S_a` is smooth across 1.
#[derive(Debug, Clone)]
pub struct EntropyDecomposition<'a> {
    spec: &'a EntropySpec,
    pub form: DecompositionForm,
    pub l_exponent: f64,
}

impl EntropyDecomposition<'_> {
    fn side_coefficient(&self, rho: f64) -> f64 {
        if rho <= 1.0 {
            self.spec.s_prime_1_minus
        } else {
            self.spec.s_prime_1_plus
        }
    }

    pub fn s_a(&self, rho: f64) -> f64 {
        let c = self.side_coefficient(rho);
        match self.form {
            DecompositionForm::Log => {
                if rho == 0.0 {
                    0.0
                } else {
                    c * rho * rho.ln()
                }
            }
            DecompositionForm::Power => {
                let l = self.l_exponent;
                c * (rho.powf(l) - 1.0) / l
            }
        }
    }

    pub fn s_a_prime(&self, rho: f64) -> f64 {
        let c = self.side_coefficient(rho);
        match self.form {
            DecompositionForm::Log => c * (1.0 + rho.ln()),
            DecompositionForm::Power => c * rho.powf(self.l_exponent - 1.0),
        }
    }

    pub fn s_b(&self, rho: f64) -> f64 {
        self.spec.eval_unchecked(rho) - self.s_a(rho)
    }

    pub fn s_b_prime(&self, rho: f64) -> f64 {
        self.spec.s_prime(rho) - self.s_a_prime(rho)
    }

    pub fn s_b_double_prime(&self, rho: f64) -> f64 {
        let a = match self.form {
            DecompositionForm::Log => self.side_coefficient(rho) / rho,
            DecompositionForm::Power => {
                self.side_coefficient(rho) * (self.l_exponent - 1.0) * rho.powf(self.l_exponent - 2.0)
            }
        };
        self.spec.s_double_prime(rho) - a
    }

    /// `L_S` through the splitting identity:
    /// `p rho + rho S_b'(rho) - S_b(rho) + S_b(1)` in log form,
    /// `((l-1) rho^l + 1) p / l + rho S_b'(rho) - S_b(rho) + S_b(1)` in power
    /// form. Agrees with the direct formula on constraint-consistent pairs.
    pub fn l_s(&self, rho: f64, p: f64) -> Result<f64> {
        self.spec.check_pressure(rho, p)?;
        let kink_part = match self.form {
            DecompositionForm::Log => p * rho,
            DecompositionForm::Power => {
                let l = self.l_exponent;
                ((l - 1.0) * rho.powf(l) + 1.0) * p / l
            }
        };
        Ok(kink_part + rho * self.s_b_prime(rho) - self.s_b(rho) + self.s_b(1.0))
    }
}

/// One side of the growth sandwich: worst sampled margin and its location.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct CheckResult {
    pub worst_margin: f64,
    pub worst_rho: f64,
}

impl CheckResult {
    fn new() -> Self {
        Self { worst_margin: f64::INFINITY, worst_rho: f64::NAN }
    }

    fn update(&mut self, margin: f64, rho: f64) {
        if margin < self.worst_margin {
            self.worst_margin = margin;
            self.worst_rho = rho;
        }
    }

    pub fn ok(&self) -> bool {
        self.worst_margin >= -INCONCLUSIVE_MARGIN
    }

    /// A margin inside the sampling noise floor cannot certify strictness.
    pub fn conclusive(&self) -> bool {
        self.worst_margin.abs() > INCONCLUSIVE_MARGIN
    }
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ValidationReport {
    /// `S'' - rho^{m-2}/sigma2` on (0,1); must stay nonnegative.
    pub lower: CheckResult,
    /// `sigma1 rho^{r-2} - S''` on (1, inf); must stay nonnegative.
    pub upper: CheckResult,
    /// `S'(0+) = -inf` forces strict positivity of the scheme iterates.
    pub s_prime_0_unbounded: bool,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.lower.ok() && self.upper.ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng as _;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn families() -> Vec<EntropySpec> {
        vec![
            EntropySpec::log_log(),
            EntropySpec::log_pow(2.0).unwrap(),
            EntropySpec::pow_pow_equal(2.0).unwrap(),
            EntropySpec::pow_pow(3.0, 2.0).unwrap(),
        ]
    }

    /// Draw a constraint-consistent pressure for a given density.
    fn consistent_p(spec: &EntropySpec, rho: f64, u: f64) -> f64 {
        if rho < 1.0 {
            spec.s_prime_1_minus
        } else if rho > 1.0 {
            spec.s_prime_1_plus
        } else {
            spec.s_prime_1_minus + u * (spec.s_prime_1_plus - spec.s_prime_1_minus)
        }
    }

    #[test]
    fn eval_log_log_values() {
        let s = EntropySpec::log_log();
        assert_eq!(s.eval(1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(s.eval(2.0).unwrap(), 4.0 * 2.0_f64.ln(), epsilon = 1e-14);
        assert_eq!(s.eval(0.0).unwrap(), 0.0);
    }

    #[test]
    fn eval_pow_pow_equal_values() {
        let s = EntropySpec::pow_pow_equal(2.0).unwrap();
        assert_abs_diff_eq!(s.eval(0.5).unwrap(), 0.25, epsilon = 1e-14);
        assert_abs_diff_eq!(s.eval(1.0).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn eval_rejects_negative() {
        assert!(EntropySpec::log_log().eval(-0.1).is_err());
    }

    #[test]
    fn subdifferential_examples() {
        let s = EntropySpec::log_log();
        assert_eq!(s.subdifferential(1.0).unwrap(), (1.0, 2.0));
        let (lo, hi) = s.subdifferential(0.5).unwrap();
        assert_eq!(lo, hi);
        assert_abs_diff_eq!(lo, 1.0 + 0.5_f64.ln(), epsilon = 1e-14);

        let s = EntropySpec::pow_pow_equal(2.0).unwrap();
        assert_eq!(s.subdifferential(1.0).unwrap(), (2.0, 4.0));
    }

    #[test]
    fn generalized_inverse_examples() {
        let s = EntropySpec::log_log();
        assert_eq!(s.generalized_inverse(1.5), 1.0);
        assert_abs_diff_eq!(s.generalized_inverse(0.5), (-0.5_f64).exp(), epsilon = 1e-14);
        assert_abs_diff_eq!(s.generalized_inverse(3.0), 0.5_f64.exp(), epsilon = 1e-14);
    }

    #[test]
    fn l_s_examples() {
        let s = EntropySpec::log_log();
        assert_abs_diff_eq!(s.l_s(0.5, 1.0).unwrap(), 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(s.l_s(1.0, 1.3).unwrap(), 1.3, epsilon = 1e-14);
        let s = EntropySpec::pow_pow_equal(2.0).unwrap();
        assert_abs_diff_eq!(s.l_s(0.5, 2.0).unwrap(), 1.25, epsilon = 1e-14);
    }

    #[test]
    fn l_s_rejects_inconsistent_pair() {
        let s = EntropySpec::log_log();
        assert!(s.l_s(0.5, 1.7).is_err());
        assert!(s.l_s(2.0, 1.0).is_err());
        assert!(s.l_s(1.0, 2.5).is_err());
    }

    #[test]
    fn decompose_log_log_is_pure_kink_part() {
        let s = EntropySpec::log_log();
        let d = s.decompose(2.0).unwrap();
        for rho in [0.1, 0.5, 0.9, 1.0, 1.5, 3.0] {
            assert_abs_diff_eq!(d.s_b(rho), 0.0, epsilon = 1e-12);
        }
        // Identity reduces to L_S = p rho.
        assert_abs_diff_eq!(d.l_s(0.5, 1.0).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn decompose_smooth_part_is_c1_at_one() {
        for spec in families() {
            let d = spec.decompose(1.5).unwrap();
            let below = d.s_b_prime(1.0 - 1e-9);
            let above = d.s_b_prime(1.0 + 1e-9);
            assert!(below.abs() < 1e-7, "{spec:?}: S_b'(1-) = {below}");
            assert!(above.abs() < 1e-7, "{spec:?}: S_b'(1+) = {above}");
            assert_abs_diff_eq!(d.s_b(1.0), spec.s_at_1 - d.s_a(1.0), epsilon = 1e-12);
        }
    }

    #[test]
    fn decompose_sums_to_entropy() {
        let s = EntropySpec::pow_pow(3.0, 2.0).unwrap();
        let d = s.decompose(1.5).unwrap();
        for rho in [0.3, 1.0, 2.7] {
            assert_abs_diff_eq!(d.s_a(rho) + d.s_b(rho), s.eval(rho).unwrap(), epsilon = 1e-10);
        }
    }

    #[test]
    fn decompose_rejects_bad_exponent() {
        let s = EntropySpec::pow_pow_equal(2.0).unwrap();
        assert!(s.decompose(1.0).is_err());
        assert!(s.decompose(0.5).is_err());
    }

    #[test]
    fn validate_builtin_families() {
        for spec in families() {
            let report = spec.validate_assumptions(200);
            assert!(
                report.passed(),
                "{:?}: lower margin {} at {}, upper margin {} at {}",
                spec.family,
                report.lower.worst_margin,
                report.lower.worst_rho,
                report.upper.worst_margin,
                report.upper.worst_rho
            );
        }
        assert!(EntropySpec::log_log().validate_assumptions(200).s_prime_0_unbounded);
        assert!(!EntropySpec::pow_pow_equal(2.0).unwrap().validate_assumptions(200).s_prime_0_unbounded);
    }

    #[test]
    fn validate_flags_concave_dip() {
        // S' dips (decreasing segment) between 0.4 and 0.6: not convex.
        let table = CustomTable::new(
            vec![0.2, 0.4, 0.6, 0.8, 1.5, 2.0],
            vec![-1.0, -0.2, -0.5, 0.2, 2.5, 3.0],
            1.0,
            2.0,
            0.0,
        )
        .unwrap();
        let spec = EntropySpec::custom(table);
        let report = spec.validate_assumptions(500);
        assert!(!report.lower.ok(), "concave dip must fail: {:?}", report.lower);
        // The dip itself has negative curvature, independent of where the
        // sampled worst margin lands.
        assert!(spec.s_double_prime(0.5) < 0.0);
    }

    #[test]
    fn custom_table_csv_round_trip() {
        let text = "s_prime_1_minus=1.0\ns_prime_1_plus=2.0\ns_at_1=0.0\nrho,s_prime\n0.25,-0.5\n0.5,0.3\n2.0,3.0\n4.0,4.0\n";
        let t = CustomTable::from_csv_str(text).unwrap();
        assert_eq!(t.rho.len(), 4);
        assert_eq!(t.s_prime_1_plus, 2.0);
        let spec = EntropySpec::custom(t);
        // Generalized inverse maps the kink interval to 1.
        assert_eq!(spec.generalized_inverse(1.5), 1.0);
        // S integrates the table exactly: S(0.5) = S(1) - int_{0.5}^{1} S'.
        // On [0.5, 1]: S' linear from 0.3 to 1.0 -> integral 0.325.
        assert_abs_diff_eq!(spec.eval(0.5).unwrap(), -0.325, epsilon = 1e-12);
    }

    #[test]
    fn custom_table_rejects_malformed() {
        assert!(CustomTable::from_csv_str("nope\n").is_err());
        assert!(CustomTable::new(vec![0.5, 0.4], vec![0.0, 1.0], 1.0, 2.0, 0.0).is_err());
        assert!(CustomTable::new(vec![0.5, 0.8], vec![0.0, 1.0], 2.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn l_s_monotone_and_ratio_bounded() {
        // Lemma-style check: strict monotonicity of L_S in rho over
        // constraint-consistent pairs, and for m = 1 families the difference
        // ratio stays in [0, max(sigma1, sigma2)].
        let mut rng = ChaCha8Rng::seed_from_u64(0x6a6b);
        for spec in families() {
            let m_is_one = spec.m == 1.0;
            let sigma_max = spec.sigma1.max(spec.sigma2);
            for _ in 0..10_000 {
                let draw = |rng: &mut ChaCha8Rng| -> f64 {
                    match rng.gen_range(0..4) {
                        0 => rng.gen_range(1e-3..1.0),
                        1 => 1.0,
                        _ => rng.gen_range(1.0f64.next_up()..3.0),
                    }
                };
                let (mut r1, mut r2) = (draw(&mut rng), draw(&mut rng));
                if r1 == r2 {
                    continue;
                }
                if r1 > r2 {
                    std::mem::swap(&mut r1, &mut r2);
                }
                let p1 = consistent_p(&spec, r1, rng.gen());
                let p2 = consistent_p(&spec, r2, rng.gen());
                let l1 = spec.l_s(r1, p1).unwrap();
                let l2 = spec.l_s(r2, p2).unwrap();
                assert!(l1 < l2, "{:?}: L_S({r1},{p1})={l1} !< L_S({r2},{p2})={l2}", spec.family);
                if m_is_one {
                    let ratio = (r2 - r1) / (l2 - l1);
                    assert!(
                        (0.0..=sigma_max + 1e-9).contains(&ratio),
                        "{:?}: ratio {ratio} outside [0, {sigma_max}]",
                        spec.family
                    );
                }
            }
        }
    }

    proptest! {
        #[test]
        fn generalized_inverse_nondecreasing(v1 in -10.0f64..10.0, v2 in -10.0f64..10.0) {
            for spec in families() {
                let (a, b) = if v1 <= v2 { (v1, v2) } else { (v2, v1) };
                prop_assert!(spec.generalized_inverse(a) <= spec.generalized_inverse(b));
            }
        }

        #[test]
        fn generalized_inverse_left_inverse_off_plateau(rho in 1e-3f64..3.0) {
            for spec in families() {
                if (rho - 1.0).abs() < 1e-6 { continue; }
                let back = spec.generalized_inverse(spec.s_prime(rho));
                prop_assert!((back - rho).abs() < 1e-10, "{:?}: {} -> {}", spec.family, rho, back);
            }
        }

        #[test]
        fn decomposition_identity_matches_direct(rho in 1e-3f64..3.0, u in 0.0f64..1.0) {
            for spec in families() {
                let p = consistent_p(&spec, rho, u);
                let direct = spec.l_s(rho, p).unwrap();
                let via = spec.decompose(1.5).unwrap().l_s(rho, p).unwrap();
                prop_assert!((direct - via).abs() < 1e-9, "{:?}: {} vs {}", spec.family, direct, via);
            }
        }

        #[test]
        fn entropy_strictly_convex_by_second_differences(rho in 0.05f64..3.0) {
            let d = 1e-4;
            for spec in families() {
                if rho - d <= 0.0 || (rho - 1.0).abs() < 2.0 * d { continue; }
                let second = spec.eval(rho - d).unwrap() - 2.0 * spec.eval(rho).unwrap()
                    + spec.eval(rho + d).unwrap();
                prop_assert!(second > 0.0, "{:?} at {}", spec.family, rho);
            }
        }
    }

    #[test]
    fn continuity_and_superlinearity() {
        for spec in families() {
            let left = spec.eval(1.0 - 1e-13).unwrap();
            let right = spec.eval(1.0 + 1e-13).unwrap();
            assert!((left - spec.s_at_1).abs() < 1e-12, "{:?}", spec.family);
            assert!((right - spec.s_at_1).abs() < 1e-12, "{:?}", spec.family);
            // S(rho)/rho increasing for large rho.
            let mut prev = f64::NEG_INFINITY;
            for k in 1..50 {
                let rho = 2.0 + k as f64;
                let slope = spec.eval(rho).unwrap() / rho;
                assert!(slope > prev, "{:?}", spec.family);
                prev = slope;
            }
        }
    }
}
