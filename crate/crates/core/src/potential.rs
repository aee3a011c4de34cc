//! External drift potentials on `[0, l]`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// The drift potential entering the energy as `int Phi d rho`. Must be
/// Lipschitz on the domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Potential {
    Zero,
    /// `Phi(x) = slope * x`.
    Linear { slope: f64 },
    /// `Phi(x) = a x^2 + b x + c`.
    Quadratic { a: f64, b: f64, c: f64 },
    /// Piecewise-linear interpolation of `(x, Phi(x))` samples.
    Table { xs: Vec<f64>, ys: Vec<f64> },
}

impl Potential {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Potential::Zero => 0.0,
            Potential::Linear { slope } => slope * x,
            Potential::Quadratic { a, b, c } => a * x * x + b * x + c,
            Potential::Table { xs, ys } => {
                if x <= xs[0] {
                    return ys[0];
                }
                if x >= *xs.last().unwrap() {
                    return *ys.last().unwrap();
                }
                let j = xs.partition_point(|&v| v <= x) - 1;
                let t = (x - xs[j]) / (xs[j + 1] - xs[j]);
                ys[j] + t * (ys[j + 1] - ys[j])
            }
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        match self {
            Potential::Zero => 0.0,
            Potential::Linear { slope } => *slope,
            Potential::Quadratic { a, b, .. } => 2.0 * a * x + b,
            Potential::Table { xs, ys } => {
                let j = xs.partition_point(|&v| v < x).clamp(1, xs.len() - 1);
                (ys[j] - ys[j - 1]) / (xs[j] - xs[j - 1])
            }
        }
    }

    pub fn second_deriv(&self) -> f64 {
        match self {
            Potential::Quadratic { a, .. } => 2.0 * a,
            _ => 0.0,
        }
    }

    /// Bound on `|Phi'|` over `[0, l]`.
    pub fn lipschitz_bound(&self, l: f64) -> f64 {
        match self {
            Potential::Zero => 0.0,
            Potential::Linear { slope } => slope.abs(),
            Potential::Quadratic { a, b, .. } => (b.abs()).max((2.0 * a * l + b).abs()),
            Potential::Table { xs, ys } => xs
                .windows(2)
                .zip(ys.windows(2))
                .map(|(xw, yw)| ((yw[1] - yw[0]) / (xw[1] - xw[0])).abs())
                .fold(0.0, f64::max),
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Potential::Zero => true,
            Potential::Linear { slope } => *slope == 0.0,
            Potential::Quadratic { a, b, .. } => *a == 0.0 && *b == 0.0,
            Potential::Table { ys, .. } => ys.windows(2).all(|w| w[0] == w[1]),
        }
    }

    /// Whether the outward derivative of `Phi` is positive at both endpoints
    /// of `[0, l]` (drift pushes mass inward). Supremum-norm propagation
    /// statements are only armed when this holds or `Phi` is constant.
    pub fn boundary_inward(&self, l: f64) -> bool {
        -self.deriv(0.0) > 0.0 && self.deriv(l) > 0.0
    }

    pub fn validate(&self, l: f64) -> Result<()> {
        match self {
            Potential::Table { xs, ys } => {
                if xs.len() != ys.len() || xs.len() < 2 {
                    return Err(Error::Config("potential table needs at least two (x, y) rows".into()));
                }
                if xs.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::Config("potential table x column must be strictly increasing".into()));
                }
                if ys.iter().any(|y| !y.is_finite()) {
                    return Err(Error::Config("potential table values must be finite".into()));
                }
                let bound = self.lipschitz_bound(l);
                if !bound.is_finite() || bound > 1e8 {
                    return Err(Error::Config(format!("potential table slope bound {bound} too large")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}
