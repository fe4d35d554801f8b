//! Passive scalar advection by exact backward characteristics and the
//! geometric (ball-average) mixing scale.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::flow::{Model, Schedule, TorusPoint};
use crate::observable::Observable;
use crate::profiles::{ShearProfile, TWO_PI};
use crate::stats::{compensated_sum, linear_fit};

pub const MIX_THRESHOLD: f64 = 1.0;
/// Smallest default ball radius, in grid cells.
pub const MIN_RADIUS_CELLS: f64 = 4.0;
const SIMPSON_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub grid_n: usize,
    /// Row-major: `values[i * n + j]` sits at `(q, p) = (2πi/n, 2πj/n)`.
    pub values: Vec<f64>,
    pub initial: Observable,
    pub schedule: Schedule,
    pub steps: usize,
}

impl ScalarField {
    pub fn zeros(grid_n: usize) -> Self {
        Self {
            grid_n,
            values: vec![0.0; grid_n * grid_n],
            initial: Observable::Zero,
            schedule: Schedule::zeros(0),
            steps: 0,
        }
    }

    pub fn point(&self, i: usize, j: usize) -> TorusPoint {
        let h = TWO_PI / self.grid_n as f64;
        TorusPoint::new(i as f64 * h, j as f64 * h)
    }

    pub fn mean(&self) -> f64 {
        compensated_sum(self.values.iter().copied()) / self.values.len() as f64
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Image of `x` under the inverse of the first `m` steps, newest first.
pub fn pull_back(model: &Model, schedule: &Schedule, m: usize, x: &TorusPoint) -> TorusPoint {
    (0..m).rev().fold(*x, |y, k| {
        let (a, b) = schedule.pair(k);
        model.inverse_step(&y, a, b)
    })
}

/// `u_m(x) = u₀((Φ^m)^{-1} x)` sampled on an `n × n` grid.
pub fn advect(model: &Model, u0: &Observable, schedule: &Schedule, m: usize, grid_n: usize) -> Result<ScalarField> {
    u0.validate()?;
    if grid_n < 8 {
        return Err(invalid("grid", "grid must have at least 8 points per side"));
    }
    if schedule.steps() < m {
        return Err(invalid("m", format!("schedule has {} steps, {m} requested", schedule.steps())));
    }
    let h = TWO_PI / grid_n as f64;
    let mut values = vec![0.0; grid_n * grid_n];
    values.par_chunks_mut(grid_n).enumerate().for_each(|(i, row)| {
        for (j, slot) in row.iter_mut().enumerate() {
            let x = TorusPoint::new(i as f64 * h, j as f64 * h);
            *slot = u0.eval(&pull_back(model, schedule, m, &x));
        }
    });
    Ok(ScalarField {
        grid_n,
        values,
        initial: *u0,
        schedule: schedule.truncated(m),
        steps: m,
    })
}

/// `π / 2^k` for every `k ≥ 1` whose radius covers at least four cells.
pub fn dyadic_radii(grid_n: usize) -> Vec<f64> {
    let min = MIN_RADIUS_CELLS * TWO_PI / grid_n as f64 * (1.0 - 1e-12);
    (0..)
        .map(|k| std::f64::consts::PI / 2f64.powi(k))
        .skip(1)
        .take_while(|&r| r >= min)
        .collect()
}

struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    fn rows(&self, data: &mut [Complex<f64>], inverse: bool) {
        let fft = if inverse { &self.inverse } else { &self.forward };
        let scratch_len = fft.get_inplace_scratch_len();
        data.par_chunks_mut(self.n).for_each_init(
            || vec![Complex::default(); scratch_len],
            |scratch, row| fft.process_with_scratch(row, scratch),
        );
    }

    fn transpose(&self, data: &mut [Complex<f64>]) {
        let n = self.n;
        for i in 0..n {
            for j in i + 1..n {
                data.swap(i * n + j, j * n + i);
            }
        }
    }

    /// Unnormalized 2D transform.
    fn apply(&self, data: &mut [Complex<f64>], inverse: bool) {
        self.rows(data, inverse);
        self.transpose(data);
        self.rows(data, inverse);
        self.transpose(data);
    }
}

/// Ball averages of a field over all grid-centered quotient-metric disks.
pub struct BallMeans {
    fft: Fft2,
    spectrum: Vec<Complex<f64>>,
}

impl BallMeans {
    pub fn new(field: &ScalarField) -> Self {
        let fft = Fft2::new(field.grid_n);
        let mut spectrum: Vec<Complex<f64>> = field.values.iter().map(|&v| Complex::new(v, 0.0)).collect();
        fft.apply(&mut spectrum, false);
        Self { fft, spectrum }
    }

    /// Mean over the disk of radius `r` centered at every grid point.
    pub fn means(&self, r: f64) -> Vec<f64> {
        let n = self.fft.n;
        let h = TWO_PI / n as f64;
        let offset = |a: usize| if a <= n / 2 { a as f64 } else { a as f64 - n as f64 };
        let mut mask = vec![Complex::default(); n * n];
        let mut count = 0usize;
        for i in 0..n {
            for j in 0..n {
                if h * offset(i).hypot(offset(j)) <= r * (1.0 + 1e-12) {
                    mask[i * n + j] = Complex::new(1.0, 0.0);
                    count += 1;
                }
            }
        }
        self.fft.apply(&mut mask, false);
        for (m, s) in mask.iter_mut().zip(&self.spectrum) {
            *m *= s;
        }
        self.fft.apply(&mut mask, true);
        let scale = 1.0 / (count as f64 * (n * n) as f64);
        mask.iter().map(|c| c.re * scale).collect()
    }

    pub fn max_abs_mean(&self, r: f64) -> f64 {
        self.means(r).iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Largest radius in `radii` (sorted descending) at which some ball has
/// `|mean| > threshold`; 0 when none does.
pub fn mixing_scale(field: &ScalarField, radii: &[f64], threshold: f64) -> Result<f64> {
    check_radii(radii)?;
    let balls = BallMeans::new(field);
    Ok(radii
        .iter()
        .copied()
        .find(|&r| balls.max_abs_mean(r) > threshold)
        .unwrap_or(0.0))
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.is_empty() {
        return Err(invalid("radii", "radius list is empty"));
    }
    if radii.windows(2).any(|w| w[0] <= w[1]) {
        return Err(invalid("radii", "radii must be strictly decreasing"));
    }
    if radii.iter().any(|&r| !(r > 0.0 && r <= std::f64::consts::PI)) {
        return Err(invalid("radii", "radii must lie in (0, π]"));
    }
    Ok(())
}

/// `∫₀^{2π} |f'|` by adaptive Simpson between consecutive critical points.
pub fn profile_variation(f: &ShearProfile) -> Result<f64> {
    if f.is_identity() {
        return Ok(TWO_PI);
    }
    let mut cuts = f.zero_set(1)?.roots;
    if cuts.is_empty() {
        cuts.push(0.0);
    }
    let g = |z: f64| f.eval(z, 1).abs();
    let pieces = cuts.len();
    Ok(compensated_sum((0..pieces).map(|i| {
        let a = cuts[i];
        let b = if i + 1 < pieces { cuts[i + 1] } else { cuts[0] + TWO_PI };
        adaptive_simpson(&g, a, b, SIMPSON_TOL / pieces as f64)
    })))
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// `Σ_{k ≤ ϱ} τ_k · 2π ∫|f'|` over the first `ϱ` unit time slots of the
/// velocity field; odd slots carry `X₂`, even slots `X₁`.
pub fn grad_norm_l1(schedule: &Schedule, rho: usize, model: &Model) -> Result<f64> {
    if rho > schedule.durations.len() {
        return Err(invalid("rho", format!("schedule has {} slots, {rho} requested", schedule.durations.len())));
    }
    let v1 = profile_variation(&model.f1)?;
    let v2 = profile_variation(&model.f2)?;
    Ok(compensated_sum(schedule.durations[..rho].iter().enumerate().map(|(k, &tau)| {
        let variation = if (k + 1) % 2 == 1 { v2 } else { v1 };
        tau * TWO_PI * variation
    })))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixStep {
    pub m: usize,
    pub mix_scale: f64,
    pub grad_norm_l1_cum: f64,
    /// `max_{m' ≤ m} m' / |log r|` over exceeding balls with `r < 1/e`.
    pub eta_hat_running: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixReport {
    pub steps: Vec<MixStep>,
    pub radii: Vec<f64>,
    /// Lower estimate of `η`; `None` when no mixing is observed.
    pub eta_hat: Option<f64>,
    pub xi_hat: Option<f64>,
    pub rho: usize,
    pub slope: Option<f64>,
    pub r2: Option<f64>,
    pub fit_points: usize,
    pub no_mixing_observed: bool,
}

pub fn mix_run(
    model: &Model,
    u0: &Observable,
    schedule: &Schedule,
    m_max: usize,
    grid_n: usize,
    radii: Option<&[f64]>,
) -> Result<MixReport> {
    u0.validate()?;
    if !(u0.sup_norm() > MIX_THRESHOLD) {
        return Err(invalid("u0", "initial amplitude must exceed the mixing threshold 1"));
    }
    let radii = radii.map_or_else(|| dyadic_radii(grid_n), <[f64]>::to_vec);
    check_radii(&radii)?;
    let small = 1.0 / std::f64::consts::E;
    let mut steps = Vec::with_capacity(m_max + 1);
    let mut eta_running: f64 = 0.0;
    for m in 0..=m_max {
        let field = advect(model, u0, schedule, m, grid_n)?;
        let balls = BallMeans::new(&field);
        let mut mix_scale = 0.0;
        for &r in &radii {
            if balls.max_abs_mean(r) > MIX_THRESHOLD {
                if mix_scale == 0.0 {
                    mix_scale = r;
                }
                if r < small {
                    eta_running = eta_running.max(m as f64 / r.ln().abs());
                    break;
                }
            }
        }
        steps.push(MixStep {
            m,
            mix_scale,
            grad_norm_l1_cum: grad_norm_l1(schedule, m.min(schedule.durations.len()), model)?,
            eta_hat_running: eta_running,
        });
    }
    let fitted: Vec<&MixStep> = steps.iter().filter(|s| s.mix_scale > 0.0).collect();
    let fit = linear_fit(
        &fitted.iter().map(|s| s.m as f64).collect::<Vec<_>>(),
        &fitted.iter().map(|s| s.mix_scale.ln()).collect::<Vec<_>>(),
    );
    let no_mixing_observed = fit.is_none_or(|f| f.slope >= 0.0);
    let rho = fitted.last().map_or(0, |s| s.m);
    let fit_points = fitted.len();
    let xi_hat = if rho > 0 {
        let g = grad_norm_l1(schedule, rho, model)?;
        (g > 0.0).then(|| rho as f64 / g)
    } else {
        None
    };
    Ok(MixReport {
        steps,
        radii,
        eta_hat: (!no_mixing_observed).then_some(eta_running),
        xi_hat,
        rho,
        slope: fit.map(|f| f.slope),
        r2: fit.map(|f| f.r2),
        fit_points,
        no_mixing_observed,
    })
}
