//! Truncated nilpotent jets for exact iterated directional derivatives.
//!
//! A jet of order `k` is an element of `R[ε₁, …, ε_k] / (ε₁², …, ε_k²)`,
//! stored as `2^k` coefficients indexed by the bitmask of the infinitesimals
//! in each monomial. Evaluating a smooth map on `x + ε_{k+1} v` and reading
//! off the `ε_{k+1}` coefficient gives the directional derivative along `v`
//! exactly, so nested Lie brackets need no step sizes.

use std::ops::{Add, Mul, Neg, Sub};

use crate::profiles::ShearProfile;

#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    coeffs: Vec<f64>,
}

impl Jet {
    pub fn constant(value: f64, order: usize) -> Self {
        let mut coeffs = vec![0.0; 1 << order];
        coeffs[0] = value;
        Self { coeffs }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len().trailing_zeros() as usize
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    /// `self + ε_{k+1} · dir`, a jet of order `k + 1`.
    pub fn perturbed(&self, dir: &Jet) -> Self {
        debug_assert_eq!(self.coeffs.len(), dir.coeffs.len());
        let mut coeffs = self.coeffs.clone();
        coeffs.extend_from_slice(&dir.coeffs);
        Self { coeffs }
    }

    /// Coefficient of the newest infinitesimal, as a jet of order `k − 1`.
    pub fn newest_part(&self) -> Self {
        let half = self.coeffs.len() / 2;
        Self {
            coeffs: self.coeffs[half..].to_vec(),
        }
    }

    /// `f(self)` for `f` analytic, given `f^(n)` at the base value.
    pub fn compose(&self, derivative: impl Fn(u32) -> f64) -> Self {
        let k = self.order();
        let mut nil = self.clone();
        nil.coeffs[0] = 0.0;
        let mut out = Jet::constant(derivative(0), k);
        let mut power = Jet::constant(1.0, k);
        let mut factorial = 1.0;
        for n in 1..=k as u32 {
            power = &power * &nil;
            factorial *= n as f64;
            let d = derivative(n);
            if d != 0.0 {
                out = &out + &power.scale(d / factorial);
            }
        }
        out
    }

    pub fn sin(&self) -> Self {
        let (s, c) = self.value().sin_cos();
        self.compose(|n| match n % 4 {
            0 => s,
            1 => c,
            2 => -s,
            _ => -c,
        })
    }

    pub fn cos(&self) -> Self {
        let (s, c) = self.value().sin_cos();
        self.compose(|n| match n % 4 {
            0 => c,
            1 => -s,
            2 => -c,
            _ => s,
        })
    }
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        Jet {
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        Jet {
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        let n = self.coeffs.len();
        debug_assert_eq!(n, rhs.coeffs.len());
        let mut coeffs = vec![0.0; n];
        for (s, slot) in coeffs.iter_mut().enumerate() {
            // sum over submasks t of s
            let mut t = s;
            let mut acc = 0.0;
            loop {
                acc += self.coeffs[t] * rhs.coeffs[s ^ t];
                if t == 0 {
                    break;
                }
                t = (t - 1) & s;
            }
            *slot = acc;
        }
        Jet { coeffs }
    }
}

impl ShearProfile {
    /// `f^(offset)` evaluated on a jet argument.
    pub fn eval_jet(&self, z: &Jet, offset: u32) -> Jet {
        let base = z.value();
        z.compose(|n| self.eval(base, offset + n))
    }
}
