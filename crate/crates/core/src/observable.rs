//! Bounded mean-zero observables on the torus.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::flow::TorusPoint;
use crate::profiles::TWO_PI;
use crate::stats::compensated_sum;

/// Quadrature points per side for the mean-zero check.
pub const QUADRATURE_N: usize = 512;
pub const MEAN_ZERO_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observable {
    /// `amplitude · sin q`.
    SinQ { amplitude: f64 },
    /// `±amplitude` on a `cells × cells` checkerboard.
    Checkerboard { amplitude: f64, cells: usize },
    Zero,
}

impl Observable {
    pub fn sin_q(amplitude: f64) -> Self {
        Observable::SinQ { amplitude }
    }

    #[inline]
    pub fn eval(&self, x: &TorusPoint) -> f64 {
        match *self {
            Observable::SinQ { amplitude } => amplitude * x.q.sin(),
            Observable::Checkerboard { amplitude, cells } => {
                let i = (x.q / TWO_PI * cells as f64).floor() as i64;
                let j = (x.p / TWO_PI * cells as f64).floor() as i64;
                if (i + j).rem_euclid(2) == 0 {
                    amplitude
                } else {
                    -amplitude
                }
            }
            Observable::Zero => 0.0,
        }
    }

    pub fn sup_norm(&self) -> f64 {
        match *self {
            Observable::SinQ { amplitude } | Observable::Checkerboard { amplitude, .. } => amplitude.abs(),
            Observable::Zero => 0.0,
        }
    }

    /// Midpoint-rule mean over the torus.
    pub fn quadrature_mean(&self) -> f64 {
        let n = QUADRATURE_N;
        let h = TWO_PI / n as f64;
        let vals = (0..n * n).map(|k| {
            let (i, j) = (k / n, k % n);
            self.eval(&TorusPoint::new((i as f64 + 0.5) * h, (j as f64 + 0.5) * h))
        });
        compensated_sum(vals) / (n * n) as f64
    }

    pub fn validate(&self) -> Result<()> {
        if let Observable::Checkerboard { cells, .. } = *self {
            if cells == 0 || cells % 2 == 1 {
                return Err(invalid("observable", "checkerboard needs an even, positive cell count"));
            }
        }
        let mean = self.quadrature_mean();
        if mean.abs() > MEAN_ZERO_TOL * (1.0 + self.sup_norm()) {
            return Err(invalid("observable", format!("mean {mean:e} is not zero")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn means_vanish() {
        Observable::sin_q(2.0).validate().unwrap();
        Observable::Checkerboard { amplitude: 3.0, cells: 8 }.validate().unwrap();
        Observable::Zero.validate().unwrap();
        assert!(Observable::Checkerboard { amplitude: 3.0, cells: 3 }.validate().is_err());
    }

    #[test]
    fn checkerboard_values() {
        let g = Observable::Checkerboard { amplitude: 3.0, cells: 2 };
        assert_eq!(g.eval(&TorusPoint::new(0.1, 0.1)), 3.0);
        assert_eq!(g.eval(&TorusPoint::new(4.0, 0.1)), -3.0);
        assert_eq!(g.eval(&TorusPoint::new(4.0, 4.0)), 3.0);
    }
}
