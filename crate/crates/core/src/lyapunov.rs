//! Monte Carlo estimates of the top Lyapunov exponent and the exponent sum.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::flow::{stream_rng, DurationStream, Model, Purpose, TorusPoint};
use crate::stats::{compensated_sum, MeanEstimate};

/// Initial points closer than this to `F` are redrawn.
pub const EXCLUSION_RADIUS: f64 = 1e-9;

/// Which shears a run applies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShearMode {
    #[default]
    Both,
    /// Vertical durations forced to zero.
    HorizontalOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub horizon: f64,
    /// Per composed step.
    pub lambda1: f64,
    pub stderr: f64,
    pub m: usize,
    pub n_samples: usize,
    pub ci95: (f64, f64),
    pub seed: u64,
}

/// Uniform initial point off `F` and uniform initial direction for `sample`.
pub fn initial_state(model: &Model, seed: u64, sample: u64) -> (TorusPoint, [f64; 2]) {
    let mut rng = stream_rng(seed, sample, Purpose::InitialPoint);
    let x = loop {
        let x = TorusPoint::uniform(&mut rng);
        if model.dist_to_excluded(&x) > EXCLUSION_RADIUS {
            break x;
        }
    };
    let theta = stream_rng(seed, sample, Purpose::InitialDirection).gen::<f64>() * std::f64::consts::TAU;
    (x, [theta.cos(), theta.sin()])
}

/// `log |DΦ^m u₀|` for one sample by renormalized tangent iteration.
pub fn sample_log_growth(model: &Model, horizon: f64, m: usize, seed: u64, sample: u64, mode: ShearMode) -> f64 {
    let (mut x, mut u) = initial_state(model, seed, sample);
    let mut durations = DurationStream::new(seed, sample, horizon);
    let mut acc = 0.0;
    for _ in 0..m {
        let (t1, mut t2) = durations.next_pair();
        if mode == ShearMode::HorizontalOnly {
            t2 = 0.0;
        }
        let (y, j) = model.step(&x, t1, t2);
        let v = j.apply(u);
        let n = v[0].hypot(v[1]);
        acc += n.ln();
        u = [v[0] / n, v[1] / n];
        x = y;
    }
    acc
}

fn validate(m: usize, n_samples: usize, horizon: f64) -> Result<()> {
    if m < 1 {
        return Err(invalid("m", "m >= 1 required"));
    }
    if n_samples < 2 {
        return Err(invalid("samples", "at least 2 samples required"));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(invalid("T", format!("horizon must be finite and >= 0, got {horizon}")));
    }
    Ok(())
}

pub fn estimate_lambda1(model: &Model, horizon: f64, m: usize, n_samples: usize, seed: u64) -> Result<LyapunovEstimate> {
    estimate_lambda1_mode(model, horizon, m, n_samples, seed, ShearMode::Both)
}

pub fn estimate_lambda1_mode(
    model: &Model,
    horizon: f64,
    m: usize,
    n_samples: usize,
    seed: u64,
    mode: ShearMode,
) -> Result<LyapunovEstimate> {
    validate(m, n_samples, horizon)?;
    let per_sample: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|j| sample_log_growth(model, horizon, m, seed, j, mode) / m as f64)
        .collect();
    let est = MeanEstimate::from_samples(&per_sample);
    Ok(LyapunovEstimate {
        horizon,
        lambda1: est.mean,
        stderr: est.stderr,
        m,
        n_samples,
        ci95: est.ci95(),
        seed,
    })
}

/// Mean of `(1/m) Σ log|det DΦ|` over samples.
pub fn estimate_lambda_sum(model: &Model, horizon: f64, m: usize, n_samples: usize, seed: u64) -> Result<f64> {
    validate(m, n_samples, horizon)?;
    let per_sample: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|j| {
            let (mut x, _) = initial_state(model, seed, j);
            let mut durations = DurationStream::new(seed, j, horizon);
            let mut acc = crate::stats::CompensatedSum::new();
            for _ in 0..m {
                let (t1, t2) = durations.next_pair();
                let (y, jac) = model.step(&x, t1, t2);
                acc.add(jac.det().abs().ln());
                x = y;
            }
            acc.value() / m as f64
        })
        .collect();
    Ok(compensated_sum(per_sample.iter().copied()) / n_samples as f64)
}

pub fn lambda_vs_t(model: &Model, horizons: &[f64], m: usize, n_samples: usize, seed: u64) -> Result<Vec<LyapunovEstimate>> {
    if horizons.is_empty() {
        return Err(invalid("T", "horizon grid is empty"));
    }
    horizons
        .iter()
        .map(|&t| estimate_lambda1(model, t, m, n_samples, seed))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_horizon_gives_zero() {
        let e = estimate_lambda1(&Model::pierrehumbert(), 0.0, 100, 8, 3).unwrap();
        assert_eq!(e.lambda1, 0.0);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn validation() {
        let m = Model::pierrehumbert();
        assert!(estimate_lambda1(&m, 10.0, 0, 8, 1).is_err());
        assert!(estimate_lambda1(&m, 10.0, 5, 1, 1).is_err());
        assert!(lambda_vs_t(&m, &[], 5, 4, 1).is_err());
    }

    #[test]
    fn sum_vanishes() {
        let s = estimate_lambda_sum(&Model::chirikov(), 10.0, 200, 16, 5).unwrap();
        assert!(s.abs() < 1e-10);
    }

    #[test]
    fn repeated_horizons_repeat_rows() {
        let rows = lambda_vs_t(&Model::pierrehumbert(), &[0.0, 2.0, 2.0], 50, 4, 9).unwrap();
        assert_eq!(rows[0].lambda1, 0.0);
        assert_eq!(rows[1], rows[2]);
    }

    #[test]
    fn ci_is_symmetric() {
        let e = estimate_lambda1(&Model::pierrehumbert(), 10.0, 200, 16, 2).unwrap();
        assert!((e.ci95.0 + e.ci95.1 - 2.0 * e.lambda1).abs() < 1e-12);
        assert!((e.ci95.1 - e.lambda1 - 1.96 * e.stderr).abs() < 1e-12);
    }
}
