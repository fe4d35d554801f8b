//! Explicit steering schedules for the one-point chain, duration capping,
//! and a least-squares shooting solver for the projective and two-point chains.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chains::{projective_step, two_point_step, ProjectiveState, TwoPointState};
use crate::error::{invalid, Error, Result};
use crate::flow::{stream_rng, Model, Purpose, Schedule, TorusPoint};
use crate::profiles::{golden_min, wrap_angle, ShearProfile, TWO_PI};

/// Exact plans must land this close to the target.
pub const EXACT_TOL: f64 = 1e-9;
/// `|f₁(p)|` below this triggers the preliminary vertical move.
pub const DEGENERATE_SHEAR: f64 = 1e-4;
pub const NUMERIC_STARTS: usize = 64;
pub const NUMERIC_SUCCESS: f64 = 1e-3;
const START_BATCH: usize = 8;
const LM_ITERS: usize = 100;
/// Initial durations of numeric starts are drawn from `[0, START_SPAN]`.
const START_SPAN: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteeringMethod {
    Exact,
    Numeric,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteeringPlan {
    pub legs: Schedule,
    pub residual: f64,
    pub method: SteeringMethod,
    pub success: bool,
}

/// First location of `max |f|`; `π` for the identity.
pub fn anchor(f: &ShearProfile) -> f64 {
    if f.is_identity() {
        return std::f64::consts::PI;
    }
    let n = 4096;
    let h = TWO_PI / n as f64;
    let mut best = 0;
    let mut top = f.eval(0.0, 0).abs();
    for i in 1..n {
        let v = f.eval(i as f64 * h, 0).abs();
        if v > top {
            best = i;
            top = v;
        }
    }
    let z = best as f64 * h;
    let (mut lo, mut hi) = (z - h, z + h);
    let (dlo, dhi) = (f.eval(lo, 1), f.eval(hi, 1));
    if dlo * dhi > 0.0 {
        return wrap_angle(golden_min(|t| -f.eval(t, 0).abs(), lo, hi, 200));
    }
    // the maximum of |f| is a critical point: bisect f'
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f.eval(mid, 1) * dlo > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    wrap_angle(0.5 * (lo + hi))
}

/// Smallest non-negative `τ` with `z + τ·speed ≡ z + delta (mod 2π)`.
fn wrapped_duration(delta: f64, speed: f64) -> Result<f64> {
    if speed == 0.0 || !speed.is_finite() {
        return Err(Error::Steering("zero shear speed on a required leg".into()));
    }
    let mut d = delta.rem_euclid(TWO_PI);
    if !(1e-12..=TWO_PI - 1e-12).contains(&d) {
        d = 0.0;
    }
    if d == 0.0 {
        return Ok(0.0);
    }
    Ok(if speed > 0.0 { d / speed } else { (d - TWO_PI) / speed })
}

fn merge_legs(legs: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(legs.len());
    for (a, b) in legs {
        if a == 0.0 && b == 0.0 {
            continue;
        }
        match out.last_mut() {
            // horizontal, nothing, horizontal at the same row
            Some(last) if last.1 == 0.0 => {
                last.0 += a;
                last.1 = b;
            }
            // vertical, nothing, vertical at the same column
            Some(last) if a == 0.0 => last.1 += b,
            _ => out.push((a, b)),
        }
    }
    out
}

/// Explicit schedule from `x` to `target` through the anchor point
/// `(argmax|f₂|, argmax|f₁|)`, split so no duration exceeds `t_cap`.
pub fn steer_to(model: &Model, x: &TorusPoint, target: &TorusPoint, t_cap: f64) -> Result<SteeringPlan> {
    if !(t_cap > 0.0) {
        return Err(invalid("T_cap", "duration cap must be positive"));
    }
    for (name, pt) in [("start", x), ("target", target)] {
        if model.dist_to_excluded(pt) < 1e-12 {
            return Err(Error::Excluded(format!("{name} ({}, {}) is in F", pt.q, pt.p)));
        }
    }
    if x == target {
        return Ok(SteeringPlan {
            legs: Schedule::explicit(&[])?,
            residual: 0.0,
            method: SteeringMethod::Exact,
            success: true,
        });
    }
    let (f1, f2) = (&model.f1, &model.f2);
    let (q0, p0) = (anchor(f2), anchor(f1));
    let mut legs = Vec::new();
    let (q, mut p) = (x.q, x.p);

    if f1.eval(p, 0).abs() < DEGENERATE_SHEAR {
        let tau = preliminary_vertical(f1, p, f2.eval(q, 0))?;
        legs.push((0.0, tau));
        p = wrap_angle(p + tau * f2.eval(q, 0));
    }
    let t1 = wrapped_duration(q0 - q, f1.eval(p, 0))?;
    let t2 = wrapped_duration(p0 - p, f2.eval(q0, 0))?;
    legs.push((t1, t2));

    let (qt, pt) = (target.q, target.p);
    if f2.eval(qt, 0).abs() >= DEGENERATE_SHEAR {
        let t3 = wrapped_duration(qt - q0, f1.eval(p0, 0))?;
        let t4 = wrapped_duration(pt - p0, f2.eval(qt, 0))?;
        legs.push((t3, t4));
    } else {
        // the target column does not shear: arrive along the target row instead
        let ta = wrapped_duration(pt - p0, f2.eval(q0, 0))?;
        let tb = wrapped_duration(qt - q0, f1.eval(pt, 0))?;
        legs.push((0.0, ta));
        legs.push((tb, 0.0));
    }
    let schedule = Schedule::explicit(&merge_legs(legs))?;
    let legs = split_schedule(&schedule, t_cap)?;
    let residual = legs.apply(model, x).dist(target);
    if residual > EXACT_TOL {
        return Err(Error::Steering(format!("plan misses the target by {residual:e}")));
    }
    Ok(SteeringPlan {
        legs,
        residual,
        method: SteeringMethod::Exact,
        success: true,
    })
}

/// Smallest `τ` on a 10⁴-point grid over one vertical wrap with
/// `|f₁(p + τ speed)| ≥ DEGENERATE_SHEAR`, refined by bisection.
fn preliminary_vertical(f1: &ShearProfile, p: f64, speed: f64) -> Result<f64> {
    if speed == 0.0 {
        return Err(Error::Excluded("both shears vanish at the start".into()));
    }
    let span = TWO_PI / speed.abs();
    let n = 10_000;
    let ok = |t: f64| f1.eval(wrap_angle(p + t * speed), 0).abs() >= DEGENERATE_SHEAR;
    let first = (1..=n)
        .map(|i| span * i as f64 / n as f64)
        .find(|&t| ok(t))
        .ok_or_else(|| Error::Steering("no admissible preliminary vertical move".into()))?;
    let (mut lo, mut hi) = (first - span / n as f64, first);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Replaces each `(τ₁, τ₂)` by `(τ₁/k, 0), …, (τ₁/k, τ₂/j), (0, τ₂/j), …` so
/// every duration is at most `t_cap`; the forward map is unchanged.
pub fn split_schedule(s: &Schedule, t_cap: f64) -> Result<Schedule> {
    if !(t_cap > 0.0) {
        return Err(invalid("T_cap", "duration cap must be positive"));
    }
    let mut out = Vec::new();
    for (a, b) in s.pairs() {
        let k = ((a / t_cap).ceil() as usize).max(1);
        let j = ((b / t_cap).ceil() as usize).max(1);
        for _ in 0..k - 1 {
            out.push((a / k as f64, 0.0));
        }
        out.push((a / k as f64, b / j as f64));
        for _ in 0..j - 1 {
            out.push((0.0, b / j as f64));
        }
    }
    let mut split = Schedule::explicit(&out)?;
    split.seed = s.seed;
    Ok(split)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "chain", rename_all = "snake_case")]
pub enum SteerState {
    Projective(ProjectiveState),
    TwoPoint(TwoPointState),
}

impl SteerState {
    fn advance(&self, model: &Model, t1: f64, t2: f64) -> SteerState {
        match self {
            SteerState::Projective(s) => SteerState::Projective(projective_step(s, t1, t2, model)),
            SteerState::TwoPoint(s) => SteerState::TwoPoint(two_point_step(s, t1, t2, model)),
        }
    }

    /// Signed residual components; their Euclidean norm is the state distance.
    fn residual(&self, target: &SteerState) -> Vec<f64> {
        let dq = |a: f64, b: f64| wrap_angle(a - b + std::f64::consts::PI) - std::f64::consts::PI;
        match (self, target) {
            (SteerState::Projective(s), SteerState::Projective(t)) => vec![
                dq(s.x.q, t.x.q),
                dq(s.x.p, t.x.p),
                s.u[0] * t.u[1] - s.u[1] * t.u[0],
            ],
            (SteerState::TwoPoint(s), SteerState::TwoPoint(t)) => vec![
                dq(s.x.q, t.x.q),
                dq(s.x.p, t.x.p),
                dq(s.y.q, t.y.q),
                dq(s.y.p, t.y.p),
            ],
            _ => unreachable!("chain kinds are checked on entry"),
        }
    }

    pub fn dist(&self, target: &SteerState) -> f64 {
        self.residual(target).iter().map(|r| r * r).sum::<f64>().sqrt()
    }
}

fn terminal(model: &Model, start: &SteerState, theta: &[f64]) -> SteerState {
    theta
        .chunks_exact(2)
        .fold(*start, |s, c| s.advance(model, c[0] * c[0], c[1] * c[1]))
}

/// Damped Gauss-Newton on `½|r(θ)|²` with durations `τ = θ²`; steps are
/// accepted only when they reduce the objective.
fn levenberg_marquardt(model: &Model, start: &SteerState, target: &SteerState, mut theta: Vec<f64>) -> (Vec<f64>, f64) {
    let cost = |th: &[f64]| terminal(model, start, th).dist(target);
    let mut r = terminal(model, start, &theta).residual(target);
    let mut best = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut mu = 1e-3;
    let n = theta.len();
    for _ in 0..LM_ITERS {
        if best < 1e-12 {
            break;
        }
        let mut jac = DMatrix::zeros(r.len(), n);
        for k in 0..n {
            let h = 1e-6 * (1.0 + theta[k].abs());
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            plus[k] += h;
            minus[k] -= h;
            let rp = terminal(model, start, &plus).residual(target);
            let rm = terminal(model, start, &minus).residual(target);
            for i in 0..r.len() {
                jac[(i, k)] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let rv = DVector::from_vec(r.clone());
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * rv;
        let mut improved = false;
        for _ in 0..12 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += mu * (1.0 + jtj[(k, k)]);
            }
            let Some(delta) = a.lu().solve(&(-&jtr)) else {
                mu *= 4.0;
                continue;
            };
            let cand: Vec<f64> = theta.iter().zip(delta.iter()).map(|(t, d)| t + d).collect();
            let c = cost(&cand);
            if c < best {
                theta = cand;
                best = c;
                mu = (mu / 3.0).max(1e-12);
                improved = true;
                break;
            }
            mu *= 4.0;
        }
        if !improved {
            break;
        }
        r = terminal(model, start, &theta).residual(target);
    }
    (theta, best)
}

/// Multi-start least-squares shooting over `n_steps` steps.
pub fn numeric_steer(model: &Model, start: &SteerState, target: &SteerState, n_steps: usize, seed: u64) -> Result<SteeringPlan> {
    match (start, target) {
        (SteerState::Projective(_), SteerState::Projective(_)) | (SteerState::TwoPoint(_), SteerState::TwoPoint(_)) => {}
        _ => return Err(invalid("target", "start and target belong to different chains")),
    }
    if start.dist(target) == 0.0 {
        return Ok(SteeringPlan {
            legs: Schedule::explicit(&[])?,
            residual: 0.0,
            method: SteeringMethod::Numeric,
            success: true,
        });
    }
    if n_steps == 0 {
        return Err(invalid("n_steps", "at least one step required"));
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    for batch in 0..NUMERIC_STARTS / START_BATCH {
        let results: Vec<(Vec<f64>, f64)> = (0..START_BATCH)
            .into_par_iter()
            .map(|i| {
                let idx = (batch * START_BATCH + i) as u64;
                let mut rng = stream_rng(seed, idx, Purpose::Start);
                let theta0: Vec<f64> = (0..2 * n_steps).map(|_| (rng.gen::<f64>() * START_SPAN).sqrt()).collect();
                levenberg_marquardt(model, start, target, theta0)
            })
            .collect();
        for r in results {
            if best.as_ref().is_none_or(|b| r.1 < b.1) {
                best = Some(r);
            }
        }
        if best.as_ref().is_some_and(|b| b.1 < NUMERIC_SUCCESS * 1e-3) {
            break;
        }
    }
    let (theta, residual) = best.expect("at least one start");
    let pairs: Vec<(f64, f64)> = theta.chunks_exact(2).map(|c| (c[0] * c[0], c[1] * c[1])).collect();
    Ok(SteeringPlan {
        legs: Schedule::explicit(&pairs)?,
        residual,
        method: SteeringMethod::Numeric,
        success: residual < NUMERIC_SUCCESS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn trivial_plan() {
        let m = Model::pierrehumbert();
        let x = TorusPoint::new(1.0, 2.0);
        let plan = steer_to(&m, &x, &x, 10.0).unwrap();
        assert!(plan.legs.is_empty());
        assert_eq!(plan.residual, 0.0);
    }

    #[test]
    fn same_row_plan() {
        let m = Model::pierrehumbert();
        let plan = steer_to(&m, &TorusPoint::new(1.0, PI / 2.0), &TorusPoint::new(2.0, PI / 2.0), 10.0).unwrap();
        assert_eq!(plan.legs.steps(), 1);
        let (a, b) = plan.legs.pair(0);
        assert!((a - 1.0).abs() < 1e-9 && b == 0.0);
    }

    #[test]
    fn degenerate_start_and_target() {
        let m = Model::pierrehumbert();
        // f₁(p) = 0 at the start, f₂(q) = 0 at the target
        let plan = steer_to(&m, &TorusPoint::new(1.0, 0.0), &TorusPoint::new(PI, 2.0), 3.0).unwrap();
        assert!(plan.residual < EXACT_TOL);
        assert!(plan.legs.durations.iter().all(|&d| (0.0..=3.0).contains(&d)));
        assert!(steer_to(&m, &TorusPoint::new(0.0, 0.0), &TorusPoint::new(1.0, 1.0), 3.0).is_err());
    }

    #[test]
    fn chirikov_plan() {
        let m = Model::chirikov();
        let x = TorusPoint::new(4.0, 1.0);
        let t = TorusPoint::new(0.0, 2.0);
        let plan = steer_to(&m, &x, &t, 5.0).unwrap();
        assert!(plan.residual < EXACT_TOL);
    }

    #[test]
    fn split_examples() {
        let s = Schedule::explicit(&[(3.0, 1.0)]).unwrap();
        assert_eq!(split_schedule(&s, 2.0).unwrap().durations, vec![1.5, 0.0, 1.5, 1.0]);
        assert_eq!(split_schedule(&s, 5.0).unwrap().durations, s.durations);
        let s = Schedule::explicit(&[(5.0, 0.0)]).unwrap();
        let t = split_schedule(&s, 2.0).unwrap();
        assert_eq!(t.steps(), 3);
        assert!(t.pairs().all(|(a, b)| (a - 5.0 / 3.0).abs() < 1e-15 && b == 0.0));
        let m = Model::pierrehumbert();
        let x = TorusPoint::new(0.4, 1.3);
        assert!(s.apply(&m, &x).dist(&t.apply(&m, &x)) < 1e-12);
    }

    #[test]
    fn merge_rules() {
        assert_eq!(merge_legs(vec![(1.0, 0.0), (2.0, 3.0)]), vec![(3.0, 3.0)]);
        assert_eq!(merge_legs(vec![(1.0, 2.0), (0.0, 3.0)]), vec![(1.0, 5.0)]);
        assert_eq!(merge_legs(vec![(0.0, 2.0), (1.0, 3.0)]), vec![(0.0, 2.0), (1.0, 3.0)]);
    }

    #[test]
    fn numeric_identity_and_kinds() {
        let m = Model::pierrehumbert();
        let s = SteerState::Projective(ProjectiveState::from_angle(TorusPoint::new(1.0, 1.0), 0.3));
        let plan = numeric_steer(&m, &s, &s, 4, 1).unwrap();
        assert!(plan.legs.is_empty());
        let t = SteerState::TwoPoint(TwoPointState::new(TorusPoint::new(1.0, 1.0), TorusPoint::new(2.0, 2.0)));
        assert!(numeric_steer(&m, &s, &t, 4, 1).is_err());
    }

    #[test]
    fn numeric_projective_reaches_target() {
        let m = Model::pierrehumbert();
        let s = SteerState::Projective(ProjectiveState::from_angle(TorusPoint::new(1.0, 2.0), 0.3));
        let t = SteerState::Projective(ProjectiveState::from_angle(TorusPoint::new(4.0, 0.5), 2.0));
        let plan = numeric_steer(&m, &s, &t, 6, 7).unwrap();
        assert!(plan.success, "residual {}", plan.residual);
        let mut end = s;
        for (a, b) in plan.legs.pairs() {
            end = end.advance(&m, a, b);
        }
        assert!((end.dist(&t) - plan.residual).abs() < 1e-12);
    }
}
