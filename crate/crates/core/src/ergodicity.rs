//! Drift functions near the excluded set, their closed-form one-step bounds,
//! Monte Carlo drift ratios and two-point correlation decay.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chains::{dist_to_invariant, two_point_step, InvariantSetDescriptor, TwoPointState};
use crate::error::{invalid, Error, Result};
use crate::flow::{stream_rng, DurationStream, Model, Purpose, TorusPoint};
use crate::observable::Observable;
use crate::profiles::{circle_dist, TWO_PI};
use crate::stats::{linear_fit, MeanEstimate};

/// Draws per independent duration stream in Monte Carlo loops.
const BLOCK: usize = 4096;
/// Draws landing closer than this to `F` are clipped to it.
pub const CLIP_RADIUS: f64 = 1e-12;
/// Signal-to-noise threshold of the correlation fit window.
pub const FIT_SNR: f64 = 3.0;
pub const SWEEP_RADII: usize = 8;
pub const SWEEP_ANGLES: usize = 16;
pub const TWO_POINT_H_GRID: [f64; 3] = [0.1, 0.25, 0.5];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    pub beta: f64,
    pub b: f64,
    pub k: f64,
    pub horizon: f64,
    pub eps0: f64,
}

impl DriftSpec {
    /// `b = 1`, `ε₀ = 0.1`.
    pub fn new(beta: f64, k: f64, horizon: f64) -> Result<Self> {
        let spec = Self {
            beta,
            b: 1.0,
            k,
            horizon,
            eps0: 0.1,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 0.5) {
            return Err(invalid("beta", format!("beta must lie in (0, 1/2), got {}", self.beta)));
        }
        if !(self.b >= 0.0) {
            return Err(invalid("b", "b must be >= 0"));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(invalid("T", "horizon must be finite and >= 0"));
        }
        if !(self.eps0 > 0.0) {
            return Err(invalid("eps0", "eps0 must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoPointDriftSpec {
    pub h: f64,
    pub s_star: f64,
    pub a: f64,
    pub c0: f64,
    /// Radius around `F` excluded from the bounded region `C`.
    pub eps: f64,
}

impl Default for TwoPointDriftSpec {
    fn default() -> Self {
        Self {
            h: 0.25,
            s_star: 0.5,
            a: 0.1,
            c0: 1.0,
            eps: 0.1,
        }
    }
}

impl TwoPointDriftSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) {
            return Err(invalid("h", "h must be positive"));
        }
        if !(self.s_star > 0.0 && self.a > 0.0 && self.eps > 0.0) {
            return Err(invalid("s_star", "s_star, a and eps must be positive"));
        }
        if !(self.c0 >= 1.0) {
            return Err(invalid("c0", "c0 must be >= 1"));
        }
        Ok(())
    }
}

fn min_dist(z: f64, set: &[f64]) -> f64 {
    set.iter().map(|&r| circle_dist(z, r)).fold(f64::INFINITY, f64::min)
}

/// `max(d(q, C_{f₂}), d(p, C_{f₁}))`.
pub fn drift_radius(model: &Model, x: &TorusPoint) -> f64 {
    min_dist(x.q, model.zeros_f2()).max(min_dist(x.p, model.zeros_f1()))
}

/// `V(x) = max(d(q, C_{f₂}), d(p, C_{f₁}))^{−β} + b`; infinite on `F`.
pub fn eval_v(model: &Model, x: &TorusPoint, spec: &DriftSpec) -> f64 {
    let r = drift_radius(model, x);
    if r == 0.0 {
        f64::INFINITY
    } else {
        r.powf(-spec.beta) + spec.b
    }
}

/// `W(x, y) = max_k d(x(k), y)^{−h}`.
pub fn eval_w(s: &TwoPointState, delta: &InvariantSetDescriptor, h: f64) -> f64 {
    let d = dist_to_invariant(s, delta);
    if d == 0.0 {
        f64::INFINITY
    } else {
        d.powf(-h)
    }
}

/// Two-point drift function: `c₀` on the bounded region `C`, otherwise
/// `W + a(V₁(x) + V₁(y))`. Infinite on `Δ` and when either point is in `F`.
pub fn eval_v2(
    model: &Model,
    s: &TwoPointState,
    spec: &DriftSpec,
    spec2: &TwoPointDriftSpec,
    delta: &InvariantSetDescriptor,
) -> f64 {
    let d = dist_to_invariant(s, delta);
    let (vx, vy) = (eval_v(model, &s.x, spec), eval_v(model, &s.y, spec));
    if d == 0.0 || vx.is_infinite() || vy.is_infinite() {
        return f64::INFINITY;
    }
    let near_f = model.dist_to_excluded(&s.x).min(model.dist_to_excluded(&s.y));
    if d >= spec2.s_star && near_f >= spec2.eps {
        return spec2.c0;
    }
    d.powf(-spec2.h) + spec2.a * (vx - spec.b + vy - spec.b)
}

/// Closed-form one-step bound on `PV/V` near `F`; `case` is 1 or 2.
pub fn drift_bound(case: u8, k: f64, beta: f64, horizon: f64) -> Result<f64> {
    if !(k >= 1.0) {
        return Err(invalid("K", format!("K must be >= 1, got {k}")));
    }
    if !(beta > 0.0 && beta < 0.5) {
        return Err(invalid("beta", format!("beta must lie in (0, 1/2), got {beta}")));
    }
    if !(horizon > 0.0) {
        return Err(invalid("T", "T must be positive"));
    }
    let t = horizon;
    match case {
        1 => Ok(k * 2f64.powf(beta) / (t * t)
            + 2f64.powf(2.0 + beta) * k.powf(beta + 1.0) / t.powf(1.0 - beta)
            + 2f64.powf(-beta)),
        2 => Ok(4f64.powf(beta) * k.powf(beta) / t.powf(2.0 - beta)
            + 4f64.powf(1.0 + beta) * k.powf(2.0 + 2.0 * beta) / t.powf(0.5 - 2.0 * beta)
            + 3.0 * k / t.powf((1.0 - beta) / 2.0)
            + 2f64.powf(-beta)),
        _ => Err(invalid("case", "case must be 1 or 2")),
    }
}

fn max_bound(k: f64, beta: f64, t: f64) -> f64 {
    let a = drift_bound(1, k, beta, t).unwrap_or(f64::INFINITY);
    let b = drift_bound(2, k, beta, t).unwrap_or(f64::INFINITY);
    a.max(b)
}

/// Smallest `T` with both bounds below 1, to relative precision 1e-9;
/// `None` if no finite `T` achieves it.
pub fn find_min_t(k: f64, beta: f64) -> Result<Option<f64>> {
    if !(beta > 0.0 && beta < 0.25) {
        return Err(invalid("beta", format!("beta must lie in (0, 1/4), got {beta}")));
    }
    drift_bound(1, k, beta, 1.0)?;
    let mut lo = 1.0;
    if max_bound(k, beta, lo) < 1.0 {
        // every term blows up as T -> 0, so this terminates
        let mut hi = lo;
        while max_bound(k, beta, lo) < 1.0 {
            hi = lo;
            lo /= 2.0;
        }
        return Ok(Some(bisect_t(k, beta, lo, hi)));
    }
    let mut hi = 2.0;
    while max_bound(k, beta, hi) >= 1.0 {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() || hi > 1e300 {
            return Ok(None);
        }
    }
    Ok(Some(bisect_t(k, beta, lo, hi)))
}

fn bisect_t(k: f64, beta: f64, mut lo: f64, mut hi: f64) -> f64 {
    while hi / lo > 1.0 + 1e-9 {
        let mid = (lo * hi).sqrt();
        if max_bound(k, beta, mid) < 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftRatio {
    pub ratio: f64,
    pub stderr: f64,
    pub n: usize,
    /// Draws that landed within [`CLIP_RADIUS`] of `F`.
    pub clipped: usize,
}

impl DriftRatio {
    /// Upper end of the two-sided 95% interval.
    pub fn upper95(&self) -> f64 {
        self.ratio + 1.96 * self.stderr
    }
}

/// Evaluates `draw` for `n` Monte Carlo draws in blocks of independent
/// duration streams, returning values in draw order.
fn block_draws<T: Send>(n: usize, seed: u64, horizon: f64, draw: impl Fn(&mut DurationStream) -> T + Sync) -> Vec<T> {
    let blocks = n.div_ceil(BLOCK);
    (0..blocks)
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut stream = DurationStream::new(seed, b as u64, horizon);
            let len = BLOCK.min(n - b * BLOCK);
            (0..len).map(|_| draw(&mut stream)).collect::<Vec<_>>()
        })
        .collect()
}

/// Monte Carlo estimate of `PV(x) / V(x)` over one random step.
pub fn empirical_drift_ratio(model: &Model, x: &TorusPoint, spec: &DriftSpec, n: usize, seed: u64) -> Result<DriftRatio> {
    spec.validate()?;
    if n < 2 {
        return Err(invalid("samples", "at least 2 draws required"));
    }
    let v0 = eval_v(model, x, spec);
    if v0.is_infinite() {
        return Err(Error::Excluded(format!("({}, {}) is in F", x.q, x.p)));
    }
    if model.dist_to_excluded(x) > spec.eps0 * (1.0 + 1e-9) {
        return Err(invalid("x", format!("point is farther than eps0 = {} from F", spec.eps0)));
    }
    let draws = block_draws(n, seed, spec.horizon, |stream| {
        let (t1, t2) = stream.next_pair();
        let y = model.advance(x, t1, t2);
        let r = drift_radius(model, &y);
        let clipped = r < CLIP_RADIUS;
        (r.max(CLIP_RADIUS).powf(-spec.beta) + spec.b, clipped)
    });
    let clipped = draws.iter().filter(|d| d.1).count();
    let ratios: Vec<f64> = draws.iter().map(|d| d.0 / v0).collect();
    let est = MeanEstimate::from_samples(&ratios);
    Ok(DriftRatio {
        ratio: est.mean,
        stderr: est.stderr,
        n,
        clipped,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftSample {
    pub f_point: TorusPoint,
    pub radius: f64,
    pub angle: f64,
    pub x: TorusPoint,
    pub drift: DriftRatio,
}

impl DriftSample {
    pub fn contracts(&self) -> bool {
        self.drift.upper95() < 1.0
    }
}

/// Drift ratios on a polar grid of radii `ε₀ k / 8` (k = 1..8) and 16 angles
/// around every point of `F`.
pub fn drift_sweep(model: &Model, spec: &DriftSpec, n: usize, seed: u64) -> Result<Vec<DriftSample>> {
    let mut out = Vec::new();
    for f in model.excluded_points() {
        for i in 1..=SWEEP_RADII {
            let radius = spec.eps0 * i as f64 / SWEEP_RADII as f64;
            for j in 0..SWEEP_ANGLES {
                let angle = TWO_PI * j as f64 / SWEEP_ANGLES as f64;
                let x = TorusPoint::new(f.q + radius * angle.cos(), f.p + radius * angle.sin());
                let drift = empirical_drift_ratio(model, &x, spec, n, seed)?;
                out.push(DriftSample {
                    f_point: f,
                    radius,
                    angle,
                    x,
                    drift,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Geometric rate `exp(slope)`.
    pub lambda_hat: f64,
    pub slope: f64,
    pub r2: f64,
    /// Steps `0..window` were fitted.
    pub window: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSeries {
    pub c: Vec<f64>,
    pub stderr: Vec<f64>,
    pub fit: Option<RateFit>,
}

/// Uniform point of the quotient-metric ball.
pub fn sample_ball(center: &TorusPoint, radius: f64, rng: &mut impl Rng) -> TorusPoint {
    let r = radius * rng.gen::<f64>().sqrt();
    let th = TWO_PI * rng.gen::<f64>();
    TorusPoint::new(center.q + r * th.cos(), center.p + r * th.sin())
}

/// `ĉ_m = |E g(Φ^m x) g(Φ^m y)|` for independent uniform `x, y` in a ball,
/// with one fresh schedule per pair.
#[allow(clippy::too_many_arguments)]
pub fn correlation_series(
    model: &Model,
    g: &Observable,
    center: &TorusPoint,
    radius: f64,
    horizon: f64,
    n_pairs: usize,
    m_max: usize,
    seed: u64,
) -> Result<CorrelationSeries> {
    g.validate()?;
    if n_pairs < 2 {
        return Err(invalid("samples", "at least 2 pairs required"));
    }
    if !(radius > 0.0 && radius <= std::f64::consts::PI) {
        return Err(invalid("radius", "ball radius must lie in (0, π]"));
    }
    let products: Vec<Vec<f64>> = (0..n_pairs as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i, Purpose::Pair);
            let mut x = sample_ball(center, radius, &mut rng);
            let mut y = sample_ball(center, radius, &mut rng);
            let mut durations = DurationStream::new(seed, i, horizon);
            let mut row = Vec::with_capacity(m_max + 1);
            row.push(g.eval(&x) * g.eval(&y));
            for _ in 0..m_max {
                let (t1, t2) = durations.next_pair();
                x = model.advance(&x, t1, t2);
                y = model.advance(&y, t1, t2);
                row.push(g.eval(&x) * g.eval(&y));
            }
            row
        })
        .collect();
    let mut c = Vec::with_capacity(m_max + 1);
    let mut stderr = Vec::with_capacity(m_max + 1);
    let mut column = vec![0.0; n_pairs];
    for m in 0..=m_max {
        for (slot, row) in column.iter_mut().zip(&products) {
            *slot = row[m];
        }
        let est = MeanEstimate::from_samples(&column);
        c.push(est.mean.abs());
        stderr.push(est.stderr);
    }
    let fit = fit_rate(&c, &stderr);
    Ok(CorrelationSeries { c, stderr, fit })
}

/// Least squares on `log ĉ_m` over the longest prefix where
/// `ĉ_m > 3 · stderr_m`.
pub fn fit_rate(c: &[f64], stderr: &[f64]) -> Option<RateFit> {
    let window = c
        .iter()
        .zip(stderr)
        .take_while(|(c, s)| **c > 0.0 && **c > FIT_SNR * **s)
        .count();
    if window < 2 {
        return None;
    }
    let xs: Vec<f64> = (0..window).map(|m| m as f64).collect();
    let ys: Vec<f64> = c[..window].iter().map(|v| v.ln()).collect();
    let fit = linear_fit(&xs, &ys)?;
    Some(RateFit {
        lambda_hat: fit.slope.exp(),
        slope: fit.slope,
        r2: fit.r2,
        window,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoPointRatio {
    pub h: f64,
    pub ratio: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoPointDriftReport {
    pub per_h: Vec<TwoPointRatio>,
    pub best: TwoPointRatio,
    pub n: usize,
}

/// Monte Carlo `E V²(Φ̃(x, y)) / V²(x, y)` for each `h` in the sweep grid
/// and for `spec2.h`.
pub fn empirical_two_point_drift(
    model: &Model,
    s: &TwoPointState,
    spec: &DriftSpec,
    spec2: &TwoPointDriftSpec,
    delta: &InvariantSetDescriptor,
    n: usize,
    seed: u64,
) -> Result<TwoPointDriftReport> {
    spec.validate()?;
    spec2.validate()?;
    if n < 2 {
        return Err(invalid("samples", "at least 2 draws required"));
    }
    if dist_to_invariant(s, delta) < 1e-6 {
        return Err(Error::Excluded("pair lies within 1e-6 of the invariant set".into()));
    }
    if eval_v(model, &s.x, spec).is_infinite() || eval_v(model, &s.y, spec).is_infinite() {
        return Err(Error::Excluded("a point of the pair is in F".into()));
    }
    let images = block_draws(n, seed, spec.horizon, |stream| {
        let (t1, t2) = stream.next_pair();
        two_point_step(s, t1, t2, model)
    });
    let mut grid = TWO_POINT_H_GRID.to_vec();
    if !grid.contains(&spec2.h) {
        grid.push(spec2.h);
        grid.sort_by(f64::total_cmp);
    }
    let per_h: Vec<TwoPointRatio> = grid
        .iter()
        .map(|&h| {
            let spec_h = TwoPointDriftSpec { h, ..*spec2 };
            let v0 = eval_v2(model, s, spec, &spec_h, delta);
            let ratios: Vec<f64> = images
                .iter()
                .map(|t| eval_v2(model, t, spec, &spec_h, delta) / v0)
                .collect();
            let est = MeanEstimate::from_samples(&ratios);
            TwoPointRatio {
                h,
                ratio: est.mean,
                stderr: est.stderr,
            }
        })
        .collect();
    let best = *per_h
        .iter()
        .min_by(|a, b| a.ratio.total_cmp(&b.ratio))
        .expect("grid is non-empty");
    Ok(TwoPointDriftReport { per_h, best, n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chains::build_invariant_set;
    use std::f64::consts::PI;

    #[test]
    fn v_example() {
        let m = Model::pierrehumbert();
        let spec = DriftSpec::new(0.2, PI / 2.0, 10.0).unwrap();
        let v = eval_v(&m, &TorusPoint::new(PI / 2.0, PI / 2.0), &spec);
        assert!((v - ((PI / 2.0).powf(-0.2) + 1.0)).abs() < 1e-14);
        assert!(eval_v(&m, &TorusPoint::new(0.0, PI), &spec).is_infinite());
    }

    #[test]
    fn v_grows_towards_f() {
        let m = Model::pierrehumbert();
        let spec = DriftSpec::new(0.2, PI / 2.0, 10.0).unwrap();
        let mut last = 0.0;
        for k in (1..=50).rev() {
            let r = 0.02 * k as f64;
            let v = eval_v(&m, &TorusPoint::new(r, r), &spec);
            assert!(v > last);
            last = v;
        }
    }

    #[test]
    fn v2_markers() {
        let m = Model::pierrehumbert();
        let delta = build_invariant_set(&m);
        let spec = DriftSpec::new(0.2, PI / 2.0, 10.0).unwrap();
        let s2 = TwoPointDriftSpec::default();
        let x = TorusPoint::new(1.0, 2.0);
        assert!(eval_v2(&m, &TwoPointState::new(x, x), &spec, &s2, &delta).is_infinite());
        let far = TwoPointState::new(TorusPoint::new(1.0, 1.0), TorusPoint::new(2.5, 1.2));
        assert_eq!(eval_v2(&m, &far, &spec, &s2, &delta), 1.0);
        let near = TwoPointState::new(TorusPoint::new(1.0, 1.0), TorusPoint::new(1.1, 1.0));
        assert!(eval_v2(&m, &near, &spec, &s2, &delta) > 1.0);
    }

    #[test]
    fn bound_arithmetic() {
        let k = PI / 2.0;
        let b = drift_bound(1, k, 0.1, 100.0).unwrap();
        let expect = k * 2f64.powf(0.1) / 1e4 + 2f64.powf(2.1) * k.powf(1.1) / 100f64.powf(0.9) + 2f64.powf(-0.1);
        assert!((b - expect).abs() < 1e-15);
        assert!(drift_bound(3, k, 0.1, 1.0).is_err());
        assert!(drift_bound(1, 0.5, 0.1, 1.0).is_err());
    }

    #[test]
    fn threshold_contract() {
        let t = find_min_t(PI / 2.0, 0.2).unwrap().unwrap();
        assert!(max_bound(PI / 2.0, 0.2, t) < 1.0);
        assert!(max_bound(PI / 2.0, 0.2, t / 2.0) >= 1.0);
        assert!(find_min_t(PI / 2.0, 0.3).is_err());
    }

    #[test]
    fn identity_mode_ratio_is_one() {
        let m = Model::pierrehumbert();
        let spec = DriftSpec::new(0.2, PI / 2.0, 0.0).unwrap();
        let r = empirical_drift_ratio(&m, &TorusPoint::new(1e-3, 1e-3), &spec, 100, 1).unwrap();
        assert_eq!(r.ratio, 1.0);
        assert_eq!(r.stderr, 0.0);
    }

    #[test]
    fn zero_observable_has_zero_correlations() {
        let s = correlation_series(
            &Model::pierrehumbert(),
            &Observable::Zero,
            &TorusPoint::new(1.0, 1.0),
            0.1,
            10.0,
            50,
            5,
            3,
        )
        .unwrap();
        assert!(s.c.iter().all(|&c| c == 0.0));
        assert!(s.fit.is_none());
    }

    #[test]
    fn fit_window_stops_at_noise() {
        let c = [1.0, 0.5, 0.25, 0.01, 0.3];
        let se = [0.0, 0.01, 0.01, 0.01, 0.01];
        let f = fit_rate(&c, &se).unwrap();
        assert_eq!(f.window, 3);
        assert!((f.lambda_hat - 0.5).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn on_delta_pair_is_rejected() {
        let m = Model::pierrehumbert();
        let delta = build_invariant_set(&m);
        let spec = DriftSpec::new(0.2, PI / 2.0, 10.0).unwrap();
        let s = TwoPointState::new(TorusPoint::new(0.5, 0.3), TorusPoint::new(PI + 0.5, PI - 0.3));
        assert!(empirical_two_point_drift(&m, &s, &spec, &TwoPointDriftSpec::default(), &delta, 10, 1).is_err());
    }
}
