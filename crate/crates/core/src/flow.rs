//! Horizontal and vertical shear maps, their composition into one Markov
//! step, and seeded duration schedules.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::profiles::{circle_dist, wrap_angle, ShearProfile, TWO_PI};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    pub q: f64,
    pub p: f64,
}

impl TorusPoint {
    pub fn new(q: f64, p: f64) -> Self {
        Self {
            q: wrap_angle(q),
            p: wrap_angle(p),
        }
    }

    /// Quotient (flat) metric on the torus.
    pub fn dist(&self, other: &TorusPoint) -> f64 {
        circle_dist(self.q, other.q).hypot(circle_dist(self.p, other.p))
    }

    pub fn uniform(rng: &mut impl Rng) -> Self {
        Self::new(rng.gen::<f64>() * TWO_PI, rng.gen::<f64>() * TWO_PI)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Horizontal,
    Vertical,
}

/// Row-major 2×2 matrix `[[a, b], [c, d]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jacobian2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Jacobian2 {
    pub const IDENTITY: Self = Self {
        a: 1.0,
        b: 0.0,
        c: 0.0,
        d: 1.0,
    };

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    /// `self · rhs`.
    pub fn compose(&self, rhs: &Jacobian2) -> Jacobian2 {
        Jacobian2 {
            a: self.a * rhs.a + self.b * rhs.c,
            b: self.a * rhs.b + self.b * rhs.d,
            c: self.c * rhs.a + self.d * rhs.c,
            d: self.c * rhs.b + self.d * rhs.d,
        }
    }

    pub fn apply(&self, u: [f64; 2]) -> [f64; 2] {
        [self.a * u[0] + self.b * u[1], self.c * u[0] + self.d * u[1]]
    }

    /// Spectral norm.
    pub fn norm(&self) -> f64 {
        let s = self.a * self.a + self.b * self.b + self.c * self.c + self.d * self.d;
        let det = self.det();
        let disc = (s * s - 4.0 * det * det).max(0.0).sqrt();
        (0.5 * (s + disc)).sqrt()
    }
}

/// A pair of shear profiles: `X₁ = (f₁(p), 0)` and `X₂ = (0, f₂(q))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelSpec", into = "ModelSpec")]
pub struct Model {
    pub name: String,
    pub f1: ShearProfile,
    pub f2: ShearProfile,
    zeros1: Vec<f64>,
    zeros2: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ModelSpec {
    name: String,
    f1: ShearProfile,
    f2: ShearProfile,
}

impl TryFrom<ModelSpec> for Model {
    type Error = crate::error::Error;
    fn try_from(s: ModelSpec) -> Result<Self> {
        Model::new(s.name, s.f1, s.f2)
    }
}

impl From<Model> for ModelSpec {
    fn from(m: Model) -> Self {
        ModelSpec {
            name: m.name,
            f1: m.f1,
            f2: m.f2,
        }
    }
}

impl Model {
    pub fn new(name: impl Into<String>, f1: ShearProfile, f2: ShearProfile) -> Result<Self> {
        let zeros1 = f1.zero_set(0)?.roots;
        let zeros2 = f2.zero_set(0)?.roots;
        Ok(Self {
            name: name.into(),
            f1,
            f2,
            zeros1,
            zeros2,
        })
    }

    /// `f₁ = f₂ = sin`.
    pub fn pierrehumbert() -> Self {
        Self::new("pierrehumbert", ShearProfile::sine(), ShearProfile::sine())
            .expect("sine profiles are valid")
    }

    /// `f₁ = sin`, `f₂` the circle identity.
    pub fn chirikov() -> Self {
        Self::new("chirikov", ShearProfile::sine(), ShearProfile::identity())
            .expect("profiles are valid")
    }

    /// Zeros of `f₁` (the `p` coordinates of the excluded set `F`).
    pub fn zeros_f1(&self) -> &[f64] {
        &self.zeros1
    }

    /// Zeros of `f₂` (the `q` coordinates of `F`).
    pub fn zeros_f2(&self) -> &[f64] {
        &self.zeros2
    }

    /// Points of `F = C_{f₂} × C_{f₁}`, where both shears vanish.
    pub fn excluded_points(&self) -> Vec<TorusPoint> {
        self.zeros2
            .iter()
            .flat_map(|&q| self.zeros1.iter().map(move |&p| TorusPoint::new(q, p)))
            .collect()
    }

    pub fn dist_to_excluded(&self, x: &TorusPoint) -> f64 {
        let dq = min_dist(x.q, &self.zeros2);
        let dp = min_dist(x.p, &self.zeros1);
        dq.hypot(dp)
    }

    pub fn shear_step(&self, x: &TorusPoint, tau: f64, direction: Direction) -> (TorusPoint, Jacobian2) {
        match direction {
            Direction::Horizontal => (
                TorusPoint::new(x.q + tau * self.f1.eval(x.p, 0), x.p),
                Jacobian2 {
                    b: tau * self.f1.eval(x.p, 1),
                    ..Jacobian2::IDENTITY
                },
            ),
            Direction::Vertical => (
                TorusPoint::new(x.q, x.p + tau * self.f2.eval(x.q, 0)),
                Jacobian2 {
                    c: tau * self.f2.eval(x.q, 1),
                    ..Jacobian2::IDENTITY
                },
            ),
        }
    }

    /// One chain step: horizontal shear for `tau1`, then vertical for `tau2`.
    pub fn step(&self, x: &TorusPoint, tau1: f64, tau2: f64) -> (TorusPoint, Jacobian2) {
        let (y, jh) = self.shear_step(x, tau1, Direction::Horizontal);
        let (z, jv) = self.shear_step(&y, tau2, Direction::Vertical);
        (z, jv.compose(&jh))
    }

    /// [`Model::step`] without the Jacobian.
    #[inline]
    pub fn advance(&self, x: &TorusPoint, tau1: f64, tau2: f64) -> TorusPoint {
        let q = wrap_angle(x.q + tau1 * self.f1.eval(x.p, 0));
        let p = wrap_angle(x.p + tau2 * self.f2.eval(q, 0));
        TorusPoint { q, p }
    }

    pub fn inverse_step(&self, x: &TorusPoint, tau1: f64, tau2: f64) -> TorusPoint {
        let p = wrap_angle(x.p - tau2 * self.f2.eval(x.q, 0));
        let q = wrap_angle(x.q - tau1 * self.f1.eval(p, 0));
        TorusPoint { q, p }
    }
}

fn min_dist(z: f64, set: &[f64]) -> f64 {
    set.iter().map(|&r| circle_dist(z, r)).fold(f64::INFINITY, f64::min)
}

/// Independent random streams derived from one run seed.
///
/// Stream `(seed, sample, purpose)` is a ChaCha8 keystream, so the draws for
/// a given sample never depend on which thread or in what order samples run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Schedule = 0,
    InitialPoint = 1,
    InitialDirection = 2,
    Pair = 3,
    Start = 4,
}

pub fn stream_rng(seed: u64, sample: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((sample << 3) | purpose as u64);
    rng
}

/// Draws `(τ₁, τ₂)` pairs uniformly from `[0, T]²`; `T = 0` gives zeros.
pub struct DurationStream {
    rng: ChaCha8Rng,
    horizon: f64,
}

impl DurationStream {
    pub fn new(seed: u64, sample: u64, horizon: f64) -> Self {
        Self {
            rng: stream_rng(seed, sample, Purpose::Schedule),
            horizon,
        }
    }

    #[inline]
    pub fn next_duration(&mut self) -> f64 {
        self.rng.gen::<f64>() * self.horizon
    }

    #[inline]
    pub fn next_pair(&mut self) -> (f64, f64) {
        let a = self.next_duration();
        let b = self.next_duration();
        (a, b)
    }
}

/// A finite alternating sequence `τ₁, τ₂, …` (horizontal, vertical, …).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub durations: Vec<f64>,
    pub horizon: f64,
    /// `None` for explicitly constructed schedules.
    pub seed: Option<u64>,
}

impl Schedule {
    pub fn explicit(pairs: &[(f64, f64)]) -> Result<Self> {
        let mut durations = Vec::with_capacity(2 * pairs.len());
        for &(a, b) in pairs {
            if !(a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite()) {
                return Err(invalid("durations", format!("({a}, {b}) is not non-negative and finite")));
            }
            durations.push(a);
            durations.push(b);
        }
        let horizon = durations.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            durations,
            horizon,
            seed: None,
        })
    }

    pub fn zeros(steps: usize) -> Self {
        Self {
            durations: vec![0.0; 2 * steps],
            horizon: 0.0,
            seed: None,
        }
    }

    pub fn steps(&self) -> usize {
        self.durations.len() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.durations.is_empty()
    }

    pub fn pairs(&self) -> impl DoubleEndedIterator<Item = (f64, f64)> + ExactSizeIterator + '_ {
        self.durations.chunks_exact(2).map(|c| (c[0], c[1]))
    }

    pub fn pair(&self, i: usize) -> (f64, f64) {
        (self.durations[2 * i], self.durations[2 * i + 1])
    }

    /// First `steps` pairs.
    pub fn truncated(&self, steps: usize) -> Schedule {
        Schedule {
            durations: self.durations[..2 * steps.min(self.steps())].to_vec(),
            ..self.clone()
        }
    }

    /// Forward image of `x` under every step.
    pub fn apply(&self, model: &Model, x: &TorusPoint) -> TorusPoint {
        self.pairs().fold(*x, |y, (a, b)| model.advance(&y, a, b))
    }

    /// Same durations with every vertical shear switched off.
    pub fn horizontal_only(&self) -> Schedule {
        let mut s = self.clone();
        for (i, d) in s.durations.iter_mut().enumerate() {
            if i % 2 == 1 {
                *d = 0.0;
            }
        }
        s
    }
}

/// `2m` i.i.d. `Uniform[0, T]` durations for sample index 0 of `seed`.
pub fn sample_schedule(seed: u64, steps: usize, horizon: f64) -> Result<Schedule> {
    sample_schedule_for(seed, 0, steps, horizon)
}

/// Schedule for sample `sample` of a run; `T = 0` is the identity run.
pub fn sample_schedule_for(seed: u64, sample: u64, steps: usize, horizon: f64) -> Result<Schedule> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(invalid("T", format!("horizon must be finite and >= 0, got {horizon}")));
    }
    let mut stream = DurationStream::new(seed, sample, horizon);
    let durations = (0..2 * steps).map(|_| stream.next_duration()).collect();
    Ok(Schedule {
        durations,
        horizon,
        seed: Some(seed),
    })
}
