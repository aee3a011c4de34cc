//! Cell-averaged probability densities on `[0, l]`, their piecewise-linear
//! CDF/quantile transforms, the exact 1D quadratic Wasserstein distance, and
//! monotone transport maps with Kantorovich potentials.

use crate::error::{Error, Result};

/// Mass defect tolerated by the validating constructor.
pub const MASS_TOL: f64 = 1e-12;

/// Cells with less mass density than this are treated as empty.
const VOID_TOL: f64 = 1e-300;

/// A nonnegative cell-averaged density on a uniform grid over `[0, l]` with
/// unit total mass.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    l: f64,
    values: Vec<f64>,
}

impl GridDensity {
    pub fn new(l: f64, values: Vec<f64>) -> Result<Self> {
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::InvalidDensity(format!("domain length {l}")));
        }
        if values.is_empty() {
            return Err(Error::InvalidDensity("empty grid".into()));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidDensity(format!("negative or non-finite cell value {v}")));
        }
        let h = l / values.len() as f64;
        let mass: f64 = values.iter().sum::<f64>() * h;
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidDensity(format!("total mass {mass} (must be 1 within {MASS_TOL})")));
        }
        Ok(Self { l, values })
    }

    /// Build from raw nonnegative values, rescaling to unit mass; returns the
    /// applied factor (new = factor * old).
    pub fn new_normalized(l: f64, mut values: Vec<f64>) -> Result<(Self, f64)> {
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidDensity("negative or non-finite cell value".into()));
        }
        let h = l / values.len() as f64;
        let mass: f64 = values.iter().sum::<f64>() * h;
        if !(mass > 0.0) {
            return Err(Error::InvalidDensity("zero total mass".into()));
        }
        let factor = 1.0 / mass;
        for v in &mut values {
            *v *= factor;
        }
        Ok((Self { l, values }, factor))
    }

    /// Sample `f` at cell centers and normalize to unit mass.
    pub fn from_fn(l: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let h = l / n as f64;
        let values: Vec<f64> = (0..n).map(|i| f((i as f64 + 0.5) * h)).collect();
        Ok(Self::new_normalized(l, values)?.0)
    }

    pub fn uniform(l: f64, n: usize) -> Self {
        Self { l, values: vec![1.0 / l; n] }
    }

    pub fn domain_length(&self) -> f64 {
        self.l
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn h(&self) -> f64 {
        self.l / self.values.len() as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cell_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.h()
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.h()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// CDF at a point, piecewise linear from the cell averages.
    pub fn cdf(&self, x: f64) -> f64 {
        let h = self.h();
        let x = x.clamp(0.0, self.l);
        let i = ((x / h) as usize).min(self.values.len() - 1);
        let mut acc = 0.0;
        for v in &self.values[..i] {
            acc += v * h;
        }
        (acc + self.values[i] * (x - i as f64 * h)).min(1.0)
    }

    /// Quantile segments: one `(s0, s1, x0, slope)` per positive-mass cell.
    fn quantile_segments(&self) -> Vec<QuantileSegment> {
        let h = self.h();
        let mut segs = Vec::with_capacity(self.values.len());
        let mut acc = 0.0;
        for (i, &v) in self.values.iter().enumerate() {
            let mass = v * h;
            if mass > VOID_TOL {
                segs.push(QuantileSegment {
                    s0: acc,
                    s1: acc + mass,
                    x0: i as f64 * h,
                    slope: h / mass,
                });
                acc += mass;
            }
        }
        // Close the last segment at exactly 1 so lookups at s = 1 resolve.
        if let Some(last) = segs.last_mut() {
            last.s1 = last.s1.max(1.0);
        }
        segs
    }

    /// Left-continuous generalized inverse of the CDF.
    pub fn quantile(&self, s: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::Domain(format!("quantile level {s} outside [0, 1]")));
        }
        let segs = self.quantile_segments();
        Ok(quantile_from_segments(&segs, s))
    }

    /// Exact `W_2` via closed-form integration of the piecewise-linear
    /// quantile difference.
    pub fn wasserstein2(&self, other: &GridDensity) -> Result<f64> {
        self.check_domain(other)?;
        Ok(self.wasserstein2_squared_unchecked(other).sqrt())
    }

    pub(crate) fn wasserstein2_squared_unchecked(&self, other: &GridDensity) -> f64 {
        let a = self.quantile_segments();
        let b = other.quantile_segments();
        let (mut ia, mut ib) = (0usize, 0usize);
        let mut total = 0.0;
        let mut s = 0.0;
        while ia < a.len() && ib < b.len() {
            let hi = a[ia].s1.min(b[ib].s1).min(1.0);
            if hi > s {
                let d0 = a[ia].x_at(s) - b[ib].x_at(s);
                let d1 = a[ia].x_at(hi) - b[ib].x_at(hi);
                total += (hi - s) * (d0 * d0 + d0 * d1 + d1 * d1) / 3.0;
                s = hi;
            }
            if a[ia].s1 <= hi + 0.0 && a[ia].s1 <= b[ib].s1 {
                ia += 1;
            } else {
                ib += 1;
            }
        }
        total
    }

    /// Monotone optimal map and Kantorovich potential from `self` to `target`.
    ///
    /// `T = F_target^{-1} o F_self` at cell centers; `phi` integrates
    /// `phi'(x) = x - T(x)` by trapezoids with `phi` zero at the first center.
    pub fn kantorovich(&self, target: &GridDensity) -> Result<TransportData> {
        self.check_domain(target)?;
        let n = self.n();
        let h = self.h();
        let segs = target.quantile_segments();
        let mut map_values = Vec::with_capacity(n);
        let mut acc = 0.0;
        for i in 0..n {
            // CDF at the cell center: previous cells plus half of this one.
            let level = (acc + 0.5 * self.values[i] * h).min(1.0);
            map_values.push(quantile_from_segments(&segs, level));
            acc += self.values[i] * h;
        }
        let mut potential_values = vec![0.0; n];
        for i in 1..n {
            let d_prev = self.cell_center(i - 1) - map_values[i - 1];
            let d_here = self.cell_center(i) - map_values[i];
            potential_values[i] = potential_values[i - 1] + 0.5 * h * (d_prev + d_here);
        }
        let w2 = self.wasserstein2_squared_unchecked(target).sqrt();
        Ok(TransportData { map_values, potential_values, w2 })
    }

    /// `L^p` distance of the cell values, `p in [1, inf]`.
    pub fn lp_distance(&self, other: &GridDensity, p: f64) -> Result<f64> {
        self.check_grid(other)?;
        if !(p >= 1.0) {
            return Err(Error::Domain(format!("lp exponent {p} < 1")));
        }
        let h = self.h();
        if p.is_infinite() {
            return Ok(self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max));
        }
        let sum: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs().powf(p))
            .sum();
        Ok((h * sum).powf(1.0 / p))
    }

    pub fn l1_distance(&self, other: &GridDensity) -> Result<f64> {
        self.lp_distance(other, 1.0)
    }

    fn check_domain(&self, other: &GridDensity) -> Result<()> {
        if (self.l - other.l).abs() > 1e-14 * self.l.max(other.l) {
            return Err(Error::GridMismatch(format!("domain lengths {} vs {}", self.l, other.l)));
        }
        Ok(())
    }

    fn check_grid(&self, other: &GridDensity) -> Result<()> {
        self.check_domain(other)?;
        if self.n() != other.n() {
            return Err(Error::GridMismatch(format!("cell counts {} vs {}", self.n(), other.n())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct QuantileSegment {
    s0: f64,
    s1: f64,
    x0: f64,
    slope: f64,
}

impl QuantileSegment {
    fn x_at(&self, s: f64) -> f64 {
        self.x0 + (s - self.s0) * self.slope
    }
}

fn quantile_from_segments(segs: &[QuantileSegment], s: f64) -> f64 {
    // First segment whose mass interval reaches s (left-continuous at flats).
    let j = segs.partition_point(|seg| seg.s1 < s).min(segs.len() - 1);
    let seg = &segs[j];
    seg.x_at(s.clamp(seg.s0, seg.s1))
}

/// Monotone rearrangement data between two grid densities.
#[derive(Debug, Clone)]
pub struct TransportData {
    /// `T` at cell centers of the source.
    pub map_values: Vec<f64>,
    /// Kantorovich potential at cell centers, normalized to 0 at the first.
    pub potential_values: Vec<f64>,
    pub w2: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng as _;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn half_block() -> GridDensity {
        // 2 on [0, 1/2], 0 on (1/2, 1].
        let mut v = vec![2.0; 32];
        v.extend(vec![0.0; 32]);
        GridDensity::new(1.0, v).unwrap()
    }

    #[test]
    fn constructor_validates() {
        assert!(GridDensity::new(1.0, vec![1.0, 1.0]).is_ok());
        assert!(GridDensity::new(1.0, vec![2.0, 1.0]).is_err());
        assert!(GridDensity::new(1.0, vec![-1.0, 3.0]).is_err());
        let (d, factor) = GridDensity::new_normalized(2.0, vec![1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(factor, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d.mass(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn quantile_examples() {
        let u = GridDensity::uniform(1.0, 64);
        assert_abs_diff_eq!(u.quantile(0.25).unwrap(), 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(u.quantile(0.0).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(u.quantile(1.0).unwrap(), 1.0, epsilon = 1e-12);

        let d = half_block();
        assert_abs_diff_eq!(d.quantile(0.5).unwrap(), 0.25, epsilon = 1e-12);
        // Full mass: right endpoint of the support.
        assert_abs_diff_eq!(d.quantile(1.0).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn quantile_rejects_out_of_range() {
        let u = GridDensity::uniform(1.0, 8);
        assert!(u.quantile(-0.1).is_err());
        assert!(u.quantile(1.1).is_err());
    }

    #[test]
    fn wasserstein_examples() {
        let u = GridDensity::uniform(1.0, 64);
        assert_eq!(u.wasserstein2(&u).unwrap(), 0.0);

        // Translation by 1 on [0, 2].
        let n = 128;
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        for i in 0..n / 2 {
            a[i] = 1.0;
            b[i + n / 2] = 1.0;
        }
        let a = GridDensity::new(2.0, a).unwrap();
        let b = GridDensity::new(2.0, b).unwrap();
        assert_abs_diff_eq!(a.wasserstein2(&b).unwrap(), 1.0, epsilon = 1e-12);

        // Uniform vs half block: quantiles s and s/2, integral 1/12.
        let d = half_block();
        let u = GridDensity::uniform(1.0, 64);
        assert_abs_diff_eq!(u.wasserstein2(&d).unwrap(), (1.0f64 / 12.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn wasserstein_domain_mismatch() {
        let a = GridDensity::uniform(1.0, 8);
        let b = GridDensity::uniform(2.0, 8);
        assert!(a.wasserstein2(&b).is_err());
    }

    #[test]
    fn kantorovich_identity() {
        let u = GridDensity::uniform(1.0, 32);
        let t = u.kantorovich(&u).unwrap();
        assert_eq!(t.w2, 0.0);
        for i in 0..32 {
            assert_abs_diff_eq!(t.map_values[i], u.cell_center(i), epsilon = 1e-12);
            assert_abs_diff_eq!(t.potential_values[i], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn kantorovich_translation_has_constant_displacement() {
        // Uniform on [0,1] vs uniform on [a, 1+a] inside [0,2]: phi' = -a.
        let n = 256;
        let a_shift = 0.5;
        let mut src = vec![0.0; n];
        let mut dst = vec![0.0; n];
        for i in 0..n / 2 {
            src[i] = 1.0;
            dst[i + n / 4] = 1.0;
        }
        let src = GridDensity::new(2.0, src).unwrap();
        let dst = GridDensity::new(2.0, dst).unwrap();
        let t = src.kantorovich(&dst).unwrap();
        for i in 0..n / 2 {
            assert_abs_diff_eq!(t.map_values[i], src.cell_center(i) + a_shift, epsilon = 1e-10);
        }
        // On the support, phi decreases with slope a_shift.
        let h = src.h();
        for i in 1..n / 2 {
            let slope = (t.potential_values[i] - t.potential_values[i - 1]) / h;
            assert_abs_diff_eq!(slope, -a_shift, epsilon = 1e-10);
        }
        // w2^2 = h * sum rho_i (x_i - T_i)^2 for a pure translation.
        let direct: f64 =
            (0..n).map(|i| src.values()[i] * (src.cell_center(i) - t.map_values[i]).powi(2)).sum::<f64>() * h;
        assert_abs_diff_eq!(t.w2 * t.w2, direct, epsilon = 1e-10);
    }

    #[test]
    fn lp_distance_examples() {
        let u = GridDensity::uniform(1.0, 64);
        let d = half_block();
        assert_eq!(u.lp_distance(&u, 1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(u.lp_distance(&d, 1.0).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(u.lp_distance(&d, f64::INFINITY).unwrap(), 1.0, epsilon = 1e-12);
        assert!(u.lp_distance(&d, 0.5).is_err());
    }

    #[test]
    fn quantile_formula_matches_assignment_lp() {
        // Random pairs on small grids with rational masses; the monotone
        // (sorted) matching must equal the assignment-LP optimum exactly.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let n = rng.gen_range(2..=16);
            let atoms = 24;
            let a = oracle::random_rational_density(&mut rng, 1.0, n, atoms);
            let b = oracle::random_rational_density(&mut rng, 1.0, n, atoms);
            let xs = oracle::atomize(&a, atoms).unwrap();
            let ys = oracle::atomize(&b, atoms).unwrap();
            let lp = oracle::assignment_w2_squared(&xs, &ys);
            let sorted = oracle::sorted_matching_w2_squared(&xs, &ys);
            assert!((lp - sorted).abs() <= 1e-9, "lp {lp} vs sorted {sorted}");
            // And the continuous quantile formula agrees with the atomized
            // value up to the atomization scale.
            let cont = a.wasserstein2_squared_unchecked(&b);
            assert!((cont - sorted).abs() < 1.0 / atoms as f64, "cont {cont} vs sorted {sorted}");
        }
    }

    fn arb_density(n: usize) -> impl Strategy<Value = GridDensity> {
        proptest::collection::vec(0.01f64..1.0, n)
            .prop_map(move |v| GridDensity::new_normalized(1.0, v).unwrap().0)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn metric_axioms(a in arb_density(24), b in arb_density(24), c in arb_density(24)) {
            let dab = a.wasserstein2(&b).unwrap();
            let dba = b.wasserstein2(&a).unwrap();
            prop_assert_eq!(dab, dba);
            let dac = a.wasserstein2(&c).unwrap();
            let dcb = c.wasserstein2(&b).unwrap();
            prop_assert!(dab <= dac + dcb + 1e-12);
        }

        #[test]
        fn quantile_inverts_cdf_on_support(a in arb_density(24), x in 0.01f64..0.99) {
            let back = a.quantile(a.cdf(x)).unwrap();
            prop_assert!((back - x).abs() <= a.h() + 1e-12);
        }

        #[test]
        fn transport_map_monotone(a in arb_density(24), b in arb_density(24)) {
            let t = a.kantorovich(&b).unwrap();
            for w in t.map_values.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-12);
            }
        }
    }
}
