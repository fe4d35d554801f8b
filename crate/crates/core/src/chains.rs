//! Tangent, projective and two-point chains, and the two-point invariant set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{Model, TorusPoint};
use crate::profiles::{sample_points, wrap_angle, ShearProfile, SYMMETRY_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangentState {
    pub x: TorusPoint,
    pub u: [f64; 2],
    pub log_norm: f64,
}

impl TangentState {
    pub fn new(x: TorusPoint, u: [f64; 2]) -> Result<Self> {
        if norm(u) == 0.0 || !norm(u).is_finite() {
            return Err(Error::ZeroTangent);
        }
        Ok(Self { x, u, log_norm: 0.0 })
    }
}

pub fn tangent_step(s: &TangentState, tau1: f64, tau2: f64, model: &Model, renormalize: bool) -> Result<TangentState> {
    if norm(s.u) == 0.0 {
        return Err(Error::ZeroTangent);
    }
    let (x, j) = model.step(&s.x, tau1, tau2);
    let u = j.apply(s.u);
    if !renormalize {
        return Ok(TangentState {
            x,
            u,
            log_norm: s.log_norm,
        });
    }
    let n = norm(u);
    if n == 0.0 {
        return Err(Error::ZeroTangent);
    }
    Ok(TangentState {
        x,
        u: [u[0] / n, u[1] / n],
        log_norm: s.log_norm + n.ln(),
    })
}

/// A point with a tangent direction; `u` and `−u` are the same state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectiveState {
    pub x: TorusPoint,
    pub u: [f64; 2],
}

impl ProjectiveState {
    pub fn new(x: TorusPoint, u: [f64; 2]) -> Result<Self> {
        let n = norm(u);
        if n == 0.0 || !n.is_finite() {
            return Err(Error::ZeroTangent);
        }
        Ok(Self {
            x,
            u: [u[0] / n, u[1] / n],
        })
    }

    pub fn from_angle(x: TorusPoint, theta: f64) -> Self {
        Self {
            x,
            u: [theta.cos(), theta.sin()],
        }
    }

    /// Distance between directions in `RP¹`, in `[0, 1]`.
    pub fn direction_dist(&self, other: &ProjectiveState) -> f64 {
        let cross = self.u[0] * other.u[1] - self.u[1] * other.u[0];
        cross.abs()
    }

    /// Product distance on `T² × RP¹`.
    pub fn dist(&self, other: &ProjectiveState) -> f64 {
        self.x.dist(&other.x).hypot(self.direction_dist(other))
    }
}

pub fn projective_step(s: &ProjectiveState, tau1: f64, tau2: f64, model: &Model) -> ProjectiveState {
    let (x, j) = model.step(&s.x, tau1, tau2);
    let v = j.apply(s.u);
    let n = norm(v);
    // unimodular Jacobians never annihilate a unit vector
    ProjectiveState {
        x,
        u: [v[0] / n, v[1] / n],
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoPointState {
    pub x: TorusPoint,
    pub y: TorusPoint,
}

impl TwoPointState {
    pub fn new(x: TorusPoint, y: TorusPoint) -> Self {
        Self { x, y }
    }

    /// Product metric on `T² × T²`.
    pub fn dist(&self, other: &TwoPointState) -> f64 {
        self.x.dist(&other.x).hypot(self.y.dist(&other.y))
    }
}

pub fn two_point_step(s: &TwoPointState, tau1: f64, tau2: f64, model: &Model) -> TwoPointState {
    TwoPointState {
        x: model.advance(&s.x, tau1, tau2),
        y: model.advance(&s.y, tau1, tau2),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    /// `y = x`.
    Diagonal,
    /// `y = (q + a, p + a')`, both shifts periods.
    Shift,
    /// `y = (q + b, 2b' − p)`.
    FlipP,
    /// `y = (2c − q, p + c')`.
    FlipQ,
    /// `y = (2d − q, 2d' − p)`.
    FlipBoth,
}

/// One affine component `{(x, y) : y = x(k)}` of the invariant set, with
/// `x(k) = (σ_q q + s_q, σ_p p + s_p)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantComponent {
    pub kind: ComponentKind,
    pub sigma_q: f64,
    pub shift_q: f64,
    pub sigma_p: f64,
    pub shift_p: f64,
}

impl InvariantComponent {
    pub fn apply(&self, x: &TorusPoint) -> TorusPoint {
        TorusPoint::new(self.sigma_q * x.q + self.shift_q, self.sigma_p * x.p + self.shift_p)
    }

    /// Residual of `f₁(σ_p t + s_p) = σ_q f₁(t)` and `f₂(σ_q t + s_q) = σ_p f₂(t)`.
    pub fn residual(&self, f1: &ShearProfile, f2: &ShearProfile, ts: &[f64]) -> f64 {
        ts.iter()
            .map(|&t| {
                let r1 = f1.eval(wrap_angle(self.sigma_p * t + self.shift_p), 0) - self.sigma_q * f1.eval(t, 0);
                let r2 = f2.eval(wrap_angle(self.sigma_q * t + self.shift_q), 0) - self.sigma_p * f2.eval(t, 0);
                r1.abs().max(r2.abs())
            })
            .fold(0.0, f64::max)
    }

    fn same_map(&self, other: &InvariantComponent) -> bool {
        let close = |a: f64, b: f64| crate::profiles::circle_dist(a, b) <= 1e-9;
        self.sigma_q == other.sigma_q
            && self.sigma_p == other.sigma_p
            && close(self.shift_q, other.shift_q)
            && close(self.shift_p, other.shift_p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantSetDescriptor {
    pub components: Vec<InvariantComponent>,
}

impl InvariantSetDescriptor {
    /// Non-diagonal components.
    pub fn nontrivial(&self) -> impl Iterator<Item = &InvariantComponent> {
        self.components.iter().filter(|c| c.kind != ComponentKind::Diagonal)
    }

    pub fn contains_map(&self, sigma_q: f64, shift_q: f64, sigma_p: f64, shift_p: f64) -> bool {
        let probe = InvariantComponent {
            kind: ComponentKind::Diagonal,
            sigma_q,
            shift_q: wrap_angle(shift_q),
            sigma_p,
            shift_p: wrap_angle(shift_p),
        };
        self.components.iter().any(|c| c.same_map(&probe))
    }
}

/// Kind, q sign, q shifts, p sign, p shifts.
type Family = (ComponentKind, f64, Vec<f64>, f64, Vec<f64>);

/// Pairs whose relative position is preserved by every shear: the diagonal
/// plus the shift and reflection families built from the profiles' symmetries.
pub fn build_invariant_set(model: &Model) -> InvariantSetDescriptor {
    let s1 = model.f1.symmetry_data();
    let s2 = model.f2.symmetry_data();
    let doubled = |v: &[f64]| v.iter().map(|c| wrap_angle(2.0 * c)).collect::<Vec<_>>();

    let families: [Family; 4] = [
        (ComponentKind::Shift, 1.0, s2.periods.clone(), 1.0, s1.periods.clone()),
        (ComponentKind::FlipP, 1.0, s2.antiperiods.clone(), -1.0, doubled(&s1.even_axes)),
        (ComponentKind::FlipQ, -1.0, doubled(&s2.even_axes), 1.0, s1.antiperiods.clone()),
        (ComponentKind::FlipBoth, -1.0, doubled(&s2.odd_centers), -1.0, doubled(&s1.odd_centers)),
    ];

    let ts = sample_points(64, 0.618);
    let mut components = vec![InvariantComponent {
        kind: ComponentKind::Diagonal,
        sigma_q: 1.0,
        shift_q: 0.0,
        sigma_p: 1.0,
        shift_p: 0.0,
    }];
    for (kind, sigma_q, shifts_q, sigma_p, shifts_p) in families {
        for &sq in &shifts_q {
            for &sp in &shifts_p {
                let c = InvariantComponent {
                    kind,
                    sigma_q,
                    shift_q: wrap_angle(sq),
                    sigma_p,
                    shift_p: wrap_angle(sp),
                };
                if c.residual(&model.f1, &model.f2, &ts) > SYMMETRY_TOL {
                    continue;
                }
                if components.iter().any(|e| e.same_map(&c)) {
                    continue;
                }
                components.push(c);
            }
        }
    }
    InvariantSetDescriptor { components }
}

/// `min_k d(x(k), y)`.
pub fn dist_to_invariant(s: &TwoPointState, delta: &InvariantSetDescriptor) -> f64 {
    delta
        .components
        .iter()
        .map(|c| c.apply(&s.x).dist(&s.y))
        .fold(f64::INFINITY, f64::min)
}

fn norm(u: [f64; 2]) -> f64 {
    u[0].hypot(u[1])
}
