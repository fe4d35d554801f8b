//! Analytic shear profiles `f : S¹ → R` and the zero-set and symmetry data
//! the dynamics depend on.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const TWO_PI: f64 = std::f64::consts::TAU;

/// Tolerance to which zeros are isolated.
pub const ZERO_TOL: f64 = 1e-10;
/// Minimum circle gap between `C_f` and `C_{f'}` for H1 to hold.
pub const H1_GAP: f64 = 1e-6;
/// Residual bound for a reported symmetry identity.
pub const SYMMETRY_TOL: f64 = 1e-9;

const ZERO_GRID: usize = 4096;
const SYMMETRY_GRID: usize = 4096;
const SYMMETRY_SAMPLES: usize = 64;
const DISTORTION_GRID: usize = 1 << 16;

/// Reduce an angle into `[0, 2π)`.
#[inline]
pub fn wrap_angle(z: f64) -> f64 {
    let r = z.rem_euclid(TWO_PI);
    if r >= TWO_PI {
        0.0
    } else {
        r
    }
}

/// Quotient distance on the circle, in `[0, π]`.
#[inline]
pub fn circle_dist(a: f64, b: f64) -> f64 {
    let d = wrap_angle(a - b);
    d.min(TWO_PI - d)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShearProfile {
    /// `a₀ + Σ aₖ cos kz + bₖ sin kz`; `sin_coeffs[0]` multiplies `sin z`.
    TrigPoly {
        cos_coeffs: Vec<f64>,
        sin_coeffs: Vec<f64>,
    },
    /// The circle identity `z ↦ z`, represented in `[0, 2π)`.
    CircleIdentity,
}

impl ShearProfile {
    pub fn trig(cos_coeffs: Vec<f64>, sin_coeffs: Vec<f64>) -> Result<Self> {
        if cos_coeffs.iter().chain(&sin_coeffs).any(|c| !c.is_finite()) {
            return Err(Error::InvalidProfile("non-finite coefficient".into()));
        }
        let varying = cos_coeffs.iter().skip(1).chain(&sin_coeffs).any(|&c| c != 0.0);
        if !varying {
            return Err(Error::InvalidProfile(
                "profile is constant: every coefficient of index >= 1 is zero".into(),
            ));
        }
        Ok(Self::TrigPoly {
            cos_coeffs,
            sin_coeffs,
        })
    }

    /// `amplitude · sin(k z)`.
    pub fn sin_mode(k: usize, amplitude: f64) -> Self {
        assert!(k >= 1 && amplitude != 0.0);
        let mut sin_coeffs = vec![0.0; k];
        sin_coeffs[k - 1] = amplitude;
        Self::TrigPoly {
            cos_coeffs: vec![0.0],
            sin_coeffs,
        }
    }

    pub fn sine() -> Self {
        Self::sin_mode(1, 1.0)
    }

    pub fn identity() -> Self {
        Self::CircleIdentity
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Self::CircleIdentity)
    }

    /// Highest harmonic with a nonzero coefficient (1 for the identity).
    pub fn degree(&self) -> usize {
        match self {
            Self::TrigPoly {
                cos_coeffs,
                sin_coeffs,
            } => {
                let c = cos_coeffs.iter().rposition(|&a| a != 0.0).unwrap_or(0);
                let s = sin_coeffs.iter().rposition(|&b| b != 0.0).map_or(0, |i| i + 1);
                c.max(s)
            }
            Self::CircleIdentity => 1,
        }
    }

    /// `factor · f`; `None` for the circle identity.
    pub fn scaled(&self, factor: f64) -> Option<Self> {
        match self {
            Self::TrigPoly {
                cos_coeffs,
                sin_coeffs,
            } => Some(Self::TrigPoly {
                cos_coeffs: cos_coeffs.iter().map(|c| c * factor).collect(),
                sin_coeffs: sin_coeffs.iter().map(|c| c * factor).collect(),
            }),
            Self::CircleIdentity => None,
        }
    }

    /// `order`-th derivative at `z`.
    pub fn eval(&self, z: f64, order: u32) -> f64 {
        match self {
            Self::TrigPoly {
                cos_coeffs,
                sin_coeffs,
            } => {
                let mut acc = 0.0;
                if order == 0 {
                    if let Some(&a0) = cos_coeffs.first() {
                        acc += a0;
                    }
                }
                let kmax = cos_coeffs.len().saturating_sub(1).max(sin_coeffs.len());
                for k in 1..=kmax {
                    let a = cos_coeffs.get(k).copied().unwrap_or(0.0);
                    let b = sin_coeffs.get(k - 1).copied().unwrap_or(0.0);
                    if a == 0.0 && b == 0.0 {
                        continue;
                    }
                    let kf = k as f64;
                    let (s, c) = (kf * z).sin_cos();
                    // d^n/dz^n of (a cos + b sin) cycles with period 4.
                    let term = match order % 4 {
                        0 => a * c + b * s,
                        1 => -a * s + b * c,
                        2 => -a * c - b * s,
                        _ => a * s - b * c,
                    };
                    acc += kf.powi(order as i32) * term;
                }
                acc
            }
            Self::CircleIdentity => match order {
                0 => wrap_angle(z),
                1 => 1.0,
                _ => 0.0,
            },
        }
    }

    /// Sum of |coefficient|·k^order: a bound on `max |f^(order)|`.
    pub fn amplitude_bound(&self, order: u32) -> f64 {
        match self {
            Self::TrigPoly {
                cos_coeffs,
                sin_coeffs,
            } => {
                let mut acc = if order == 0 {
                    cos_coeffs.first().map_or(0.0, |a| a.abs())
                } else {
                    0.0
                };
                for (k, a) in cos_coeffs.iter().enumerate().skip(1) {
                    acc += a.abs() * (k as f64).powi(order as i32);
                }
                for (i, b) in sin_coeffs.iter().enumerate() {
                    acc += b.abs() * ((i + 1) as f64).powi(order as i32);
                }
                acc
            }
            Self::CircleIdentity => match order {
                0 => TWO_PI,
                1 => 1.0,
                _ => 0.0,
            },
        }
    }

    /// Zeros of `f` (order 0) or `f'` (order 1) in `[0, 2π)`.
    pub fn zero_set(&self, order: u32) -> Result<ZeroSet> {
        if order > 1 {
            return Err(invalid("order", "zero sets are defined for order 0 or 1"));
        }
        if self.is_identity() {
            let roots = if order == 0 { vec![0.0] } else { Vec::new() };
            return Ok(ZeroSet {
                roots,
                tolerance: ZERO_TOL,
            });
        }
        let n = ZERO_GRID.max(64 * self.degree());
        let h = TWO_PI / n as f64;
        let g = |z: f64| self.eval(z, order);
        let vals: Vec<f64> = (0..n).map(|i| g(i as f64 * h)).collect();
        let scale = 1.0 + self.amplitude_bound(order + 1);
        let mut roots = Vec::new();
        for i in 0..n {
            let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
            let (ga, gb) = (vals[i], vals[(i + 1) % n]);
            if ga == 0.0 {
                roots.push(a);
            } else if ga * gb < 0.0 {
                roots.push(bisect(&g, a, b, ga));
            }
        }
        // Tangential zeros: local minima of |g| that refine below tolerance.
        for i in 0..n {
            let prev = vals[(i + n - 1) % n].abs();
            let cur = vals[i].abs();
            let next = vals[(i + 1) % n].abs();
            if cur <= prev && cur <= next && cur < 1e-3 * scale {
                let lo = (i as f64 - 1.0) * h;
                let hi = (i as f64 + 1.0) * h;
                let z = golden_min(|z| g(z).abs(), lo, hi, 200);
                let known = roots.iter().any(|&r| circle_dist(r, z) <= h);
                if !known && g(z).abs() <= ZERO_TOL * scale {
                    roots.push(z);
                }
            }
        }
        let roots = dedup_circle(roots, 1e-8);
        let bound = 2 * self.degree();
        if roots.len() > bound {
            return Err(Error::RootOverflow {
                found: roots.len(),
                bound,
            });
        }
        Ok(ZeroSet {
            roots,
            tolerance: ZERO_TOL,
        })
    }

    /// Gap between `C_f` and `C_{f'}`; H1 holds when it exceeds [`H1_GAP`].
    pub fn check_h1(&self) -> Result<H1Check> {
        let zeros = self.zero_set(0)?;
        let crit = self.zero_set(1)?;
        let mut min_gap = f64::INFINITY;
        for &a in &zeros.roots {
            for &b in &crit.roots {
                min_gap = min_gap.min(circle_dist(a, b));
            }
        }
        Ok(H1Check {
            pass: min_gap > H1_GAP,
            min_gap,
        })
    }

    pub fn symmetry_data(&self) -> SymmetryData {
        if self.is_identity() {
            return SymmetryData {
                fundamental_period: None,
                periods: vec![0.0],
                antiperiods: Vec::new(),
                even_axes: Vec::new(),
                odd_centers: vec![0.0, PI],
            };
        }
        let ts = sample_points(SYMMETRY_SAMPLES, 0.3719);
        let degree = self.degree();
        let mut divisor = 1;
        for d in (2..=degree).rev() {
            let shift = TWO_PI / d as f64;
            if self.symmetry_residual(SymmetryKind::Period, shift, &ts) <= SYMMETRY_TOL {
                divisor = d;
                break;
            }
        }
        let fundamental_period = (divisor > 1).then(|| TWO_PI / divisor as f64);
        let periods = (0..divisor).map(|k| k as f64 * TWO_PI / divisor as f64).collect();
        SymmetryData {
            fundamental_period,
            periods,
            antiperiods: self.symmetry_roots(SymmetryKind::Antiperiod, &ts),
            even_axes: self.symmetry_roots(SymmetryKind::EvenAxis, &ts),
            odd_centers: self.symmetry_roots(SymmetryKind::OddCenter, &ts),
        }
    }

    /// Largest deviation from the identity of `kind` at parameter `c`.
    ///
    /// The circle identity is compared as a circle-valued map, so residuals
    /// are measured modulo 2π.
    pub fn symmetry_residual(&self, kind: SymmetryKind, c: f64, ts: &[f64]) -> f64 {
        let f = |z: f64| self.eval(z, 0);
        ts.iter()
            .map(|&t| {
                let r = match kind {
                    SymmetryKind::Period => f(t + c) - f(t),
                    SymmetryKind::Antiperiod => f(t + c) + f(t),
                    SymmetryKind::EvenAxis => f(2.0 * c - t) - f(t),
                    SymmetryKind::OddCenter => f(2.0 * c - t) + f(t),
                };
                if self.is_identity() {
                    circle_dist(r, 0.0)
                } else {
                    r.abs()
                }
            })
            .fold(0.0, f64::max)
    }

    fn symmetry_roots(&self, kind: SymmetryKind, ts: &[f64]) -> Vec<f64> {
        let energy = |c: f64| -> f64 {
            let f = |z: f64| self.eval(z, 0);
            ts.iter()
                .map(|&t| {
                    let r = match kind {
                        SymmetryKind::Period => f(t + c) - f(t),
                        SymmetryKind::Antiperiod => f(t + c) + f(t),
                        SymmetryKind::EvenAxis => f(2.0 * c - t) - f(t),
                        SymmetryKind::OddCenter => f(2.0 * c - t) + f(t),
                    };
                    r * r
                })
                .sum()
        };
        let h = TWO_PI / SYMMETRY_GRID as f64;
        let vals: Vec<f64> = (0..SYMMETRY_GRID).map(|i| energy(i as f64 * h)).collect();
        let fresh = sample_points(SYMMETRY_SAMPLES, 0.8147);
        let mut found = Vec::new();
        for i in 0..SYMMETRY_GRID {
            let prev = vals[(i + SYMMETRY_GRID - 1) % SYMMETRY_GRID];
            let next = vals[(i + 1) % SYMMETRY_GRID];
            if vals[i] <= prev && vals[i] <= next {
                let c = golden_min(energy, (i as f64 - 1.0) * h, (i as f64 + 1.0) * h, 200);
                let c = snap(wrap_angle(c));
                if self.symmetry_residual(kind, c, &fresh) <= SYMMETRY_TOL {
                    found.push(c);
                }
            }
        }
        let mut out = dedup_circle(found, 1e-7);
        if kind == SymmetryKind::Antiperiod {
            out.retain(|&a| circle_dist(a, 0.0) > 1e-7);
        }
        out
    }

    /// Smallest `K ≥ 1` with `d(z, C_f)/K ≤ |f(z)| ≤ K d(z, C_f)`.
    ///
    /// For the circle identity `|f(z)|` is the circle distance of `f(z)`
    /// from 0, which makes both ratios identically 1.
    pub fn distortion_constant(&self) -> Result<f64> {
        let h1 = self.check_h1()?;
        if !h1.pass {
            return Err(Error::H1Violated(format!(
                "zeros of f and f' are {:.3e} apart",
                h1.min_gap
            )));
        }
        let zeros = self.zero_set(0)?.roots;
        if zeros.is_empty() {
            return Err(invalid("profile", "f has no zeros, so d(z, C_f) is undefined"));
        }
        let magnitude = |z: f64| {
            if self.is_identity() {
                circle_dist(self.eval(z, 0), 0.0)
            } else {
                self.eval(z, 0).abs()
            }
        };
        let dist = |z: f64| zeros.iter().map(|&r| circle_dist(z, r)).fold(f64::INFINITY, f64::min);
        // log of the worse of the two ratios; zeros contribute their slopes.
        let worst = |z: f64| -> f64 {
            let d = dist(z);
            if d < 1e-7 {
                return f64::NEG_INFINITY;
            }
            let m = magnitude(z);
            if m == 0.0 {
                return f64::INFINITY;
            }
            (m / d).ln().abs()
        };
        let mut k_log: f64 = 0.0;
        for &r in &zeros {
            let slope = self.eval(r, 1).abs();
            k_log = k_log.max(slope.ln().abs());
        }
        let h = TWO_PI / DISTORTION_GRID as f64;
        let vals: Vec<f64> = (0..DISTORTION_GRID).map(|i| worst(i as f64 * h)).collect();
        let (best, &best_val) = vals
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("grid is non-empty");
        if !best_val.is_finite() {
            return Err(Error::H1Violated("distortion ratio diverges".into()));
        }
        let z = golden_min(|z| -worst(z), (best as f64 - 1.0) * h, (best as f64 + 1.0) * h, 100);
        k_log = k_log.max(best_val).max(worst(z));
        Ok(k_log.exp().max(1.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SymmetryKind {
    Period,
    Antiperiod,
    EvenAxis,
    OddCenter,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroSet {
    pub roots: Vec<f64>,
    pub tolerance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct H1Check {
    pub pass: bool,
    /// `+∞` when either zero set is empty.
    pub min_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetryData {
    /// `None` when no period shorter than 2π exists.
    pub fundamental_period: Option<f64>,
    /// All periods in `[0, 2π)`, including 0.
    pub periods: Vec<f64>,
    /// Shifts `α` with `f(t + α) = −f(t)`.
    pub antiperiods: Vec<f64>,
    /// Axes `c` with `f(2c − t) = f(t)`.
    pub even_axes: Vec<f64>,
    /// Centers `c` with `f(2c − t) = −f(t)`.
    pub odd_centers: Vec<f64>,
}

pub(crate) fn sample_points(n: usize, offset: f64) -> Vec<f64> {
    // irrational stride keeps the samples off the lattice of special angles
    (0..n)
        .map(|j| wrap_angle(TWO_PI * ((j as f64 + offset) / n as f64) + 0.1 * (j as f64).sqrt()))
        .collect()
}

/// Snap values within 1e-12 of a multiple of π/12 onto it.
fn snap(c: f64) -> f64 {
    let unit = PI / 12.0;
    let k = (c / unit).round();
    if (c - k * unit).abs() < 1e-12 {
        wrap_angle(k * unit)
    } else {
        c
    }
}

fn bisect(g: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut ga: f64) -> f64 {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let gm = g(m);
        if gm == 0.0 {
            return wrap_angle(m);
        }
        if ga * gm < 0.0 {
            b = m;
        } else {
            a = m;
            ga = gm;
        }
    }
    wrap_angle(0.5 * (a + b))
}

pub(crate) fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if (b - a).abs() < 1e-15 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        c
    } else {
        d
    }
}

/// Sort into `[0, 2π)` and merge entries closer than `tol` on the circle.
pub(crate) fn dedup_circle(mut xs: Vec<f64>, tol: f64) -> Vec<f64> {
    for x in xs.iter_mut() {
        *x = wrap_angle(*x);
    }
    xs.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(xs.len());
    for x in xs {
        if out.last().is_none_or(|&l| circle_dist(l, x) > tol) {
            out.push(x);
        }
    }
    if out.len() > 1 && circle_dist(out[0], *out.last().unwrap()) <= tol {
        out.pop();
    }
    out
}
