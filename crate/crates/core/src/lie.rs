//! Lie brackets of the shear vector fields and their lifts, and rank
//! certificates for the bracket-spanning hypotheses.
//!
//! Brackets follow `[A, B] = DB·A − DA·B`. Each bracket is evaluated exactly
//! with nilpotent jets and cross-checked against Richardson-extrapolated
//! central differences.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chains::{build_invariant_set, dist_to_invariant, TwoPointState};
use crate::error::{invalid, Error, Result};
use crate::flow::{stream_rng, Model, Purpose, TorusPoint};
use crate::jet::Jet;
use crate::profiles::{ShearProfile, TWO_PI};

/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOL: f64 = 1e-8;
/// Base step of the finite-difference cross-check.
pub const FD_STEP: f64 = 1e-3;
/// Allowed jet/finite-difference disagreement, relative to `1 + max |v_i|`.
pub const CROSS_CHECK_TOL: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldSpace {
    /// `(q, p)`.
    Base,
    /// `(q, p, u, v)` with `(u, v)` a tangent vector.
    Lifted,
    /// `(q, p, u₁, u₂)` with `(u₁, u₂)` a unit vector.
    Projective,
    /// `(q, p, q₁, p₁)`.
    TwoPoint,
}

impl FieldSpace {
    pub fn dim(self) -> usize {
        match self {
            FieldSpace::Base => 2,
            _ => 4,
        }
    }

    /// Dimension of the state manifold.
    pub fn target_rank(self) -> usize {
        match self {
            FieldSpace::Base => 2,
            FieldSpace::Projective => 3,
            _ => 4,
        }
    }
}

/// A word in the free Lie algebra on `X1`, `X2`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BracketWord {
    X1,
    X2,
    Bracket(Box<BracketWord>, Box<BracketWord>),
}

impl BracketWord {
    pub fn bracket(a: BracketWord, b: BracketWord) -> Self {
        BracketWord::Bracket(Box::new(a), Box::new(b))
    }

    pub fn depth(&self) -> usize {
        match self {
            BracketWord::Bracket(a, b) => 1 + a.depth().max(b.depth()),
            _ => 0,
        }
    }

    /// `X1, X2, [X1,X2]` and every depth-2 word.
    pub fn default_columns() -> Vec<BracketWord> {
        ["X1", "X2", "[X1,X2]", "[X1,[X1,X2]]", "[X2,[X1,X2]]"]
            .iter()
            .map(|s| s.parse().expect("static word"))
            .collect()
    }
}

impl fmt::Display for BracketWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BracketWord::X1 => write!(f, "X1"),
            BracketWord::X2 => write!(f, "X2"),
            BracketWord::Bracket(a, b) => write!(f, "[{a},{b}]"),
        }
    }
}

impl FromStr for BracketWord {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let (word, rest) = parse_word(&compact)?;
        if !rest.is_empty() {
            return Err(invalid("word", format!("trailing input `{rest}` in `{s}`")));
        }
        if word.depth() > 3 {
            return Err(invalid("word", format!("`{s}` nests deeper than 3 brackets")));
        }
        Ok(word)
    }
}

fn parse_word(s: &str) -> Result<(BracketWord, &str)> {
    if let Some(rest) = s.strip_prefix("X1") {
        return Ok((BracketWord::X1, rest));
    }
    if let Some(rest) = s.strip_prefix("X2") {
        return Ok((BracketWord::X2, rest));
    }
    let rest = s
        .strip_prefix('[')
        .ok_or_else(|| invalid("word", format!("expected X1, X2 or `[` at `{s}`")))?;
    let (a, rest) = parse_word(rest)?;
    let rest = rest
        .strip_prefix(',')
        .ok_or_else(|| invalid("word", format!("expected `,` at `{rest}`")))?;
    let (b, rest) = parse_word(rest)?;
    let rest = rest
        .strip_prefix(']')
        .ok_or_else(|| invalid("word", format!("expected `]` at `{rest}`")))?;
    Ok((BracketWord::bracket(a, b), rest))
}

fn check_point(space: FieldSpace, point: &[f64]) -> Result<()> {
    if point.len() != space.dim() {
        return Err(invalid(
            "point",
            format!("{space:?} points have {} coordinates, got {}", space.dim(), point.len()),
        ));
    }
    Ok(())
}

/// Field `X_index` (1 or 2) of the family at `point`.
pub fn eval_field(space: FieldSpace, model: &Model, index: u8, point: &[f64]) -> Result<Vec<f64>> {
    check_point(space, point)?;
    if index != 1 && index != 2 {
        return Err(invalid("index", "field index must be 1 or 2"));
    }
    Ok(field_f64(space, model, index, point))
}

fn field_f64(space: FieldSpace, model: &Model, index: u8, x: &[f64]) -> Vec<f64> {
    field_near(space, model, index, x, x)
}

/// Field at `x`, with the circle identity unwrapped continuously around
/// `base` so difference stencils never straddle the cut.
fn field_near(space: FieldSpace, model: &Model, index: u8, x: &[f64], base: &[f64]) -> Vec<f64> {
    let ev = |f: &ShearProfile, i: usize, order: u32| {
        if order == 0 && f.is_identity() {
            f.eval(base[i], 0) + (x[i] - base[i])
        } else {
            f.eval(x[i], order)
        }
    };
    let (f1, f2) = (&model.f1, &model.f2);
    match (space, index) {
        (FieldSpace::Base, 1) => vec![ev(f1, 1, 0), 0.0],
        (FieldSpace::Base, _) => vec![0.0, ev(f2, 0, 0)],
        (FieldSpace::Lifted, 1) => vec![ev(f1, 1, 0), 0.0, ev(f1, 1, 1) * x[3], 0.0],
        (FieldSpace::Lifted, _) => vec![0.0, ev(f2, 0, 0), 0.0, ev(f2, 0, 1) * x[2]],
        (FieldSpace::Projective, i) => {
            let d = if i == 1 {
                [ev(f1, 1, 1) * x[3], 0.0]
            } else {
                [0.0, ev(f2, 0, 1) * x[2]]
            };
            let dot = d[0] * x[2] + d[1] * x[3];
            let base = if i == 1 { [ev(f1, 1, 0), 0.0] } else { [0.0, ev(f2, 0, 0)] };
            vec![base[0], base[1], d[0] - dot * x[2], d[1] - dot * x[3]]
        }
        (FieldSpace::TwoPoint, 1) => vec![ev(f1, 1, 0), 0.0, ev(f1, 3, 0), 0.0],
        (FieldSpace::TwoPoint, _) => vec![0.0, ev(f2, 0, 0), 0.0, ev(f2, 2, 0)],
    }
}

fn field_jet(space: FieldSpace, model: &Model, index: u8, x: &[Jet]) -> Vec<Jet> {
    let (f1, f2) = (&model.f1, &model.f2);
    let zero = Jet::constant(0.0, x[0].order());
    match (space, index) {
        (FieldSpace::Base, 1) => vec![f1.eval_jet(&x[1], 0), zero],
        (FieldSpace::Base, _) => vec![zero, f2.eval_jet(&x[0], 0)],
        (FieldSpace::Lifted, 1) => vec![f1.eval_jet(&x[1], 0), zero.clone(), &f1.eval_jet(&x[1], 1) * &x[3], zero],
        (FieldSpace::Lifted, _) => vec![zero.clone(), f2.eval_jet(&x[0], 0), zero, &f2.eval_jet(&x[0], 1) * &x[2]],
        (FieldSpace::Projective, i) => {
            let (base, d) = if i == 1 {
                (
                    [f1.eval_jet(&x[1], 0), zero.clone()],
                    [&f1.eval_jet(&x[1], 1) * &x[3], zero.clone()],
                )
            } else {
                (
                    [zero.clone(), f2.eval_jet(&x[0], 0)],
                    [zero.clone(), &f2.eval_jet(&x[0], 1) * &x[2]],
                )
            };
            let dot = &(&d[0] * &x[2]) + &(&d[1] * &x[3]);
            let [b0, b1] = base;
            vec![b0, b1, &d[0] - &(&dot * &x[2]), &d[1] - &(&dot * &x[3])]
        }
        (FieldSpace::TwoPoint, 1) => vec![f1.eval_jet(&x[1], 0), zero.clone(), f1.eval_jet(&x[3], 0), zero],
        (FieldSpace::TwoPoint, _) => vec![zero.clone(), f2.eval_jet(&x[0], 0), zero, f2.eval_jet(&x[2], 0)],
    }
}

fn word_jet(space: FieldSpace, model: &Model, word: &BracketWord, x: &[Jet]) -> Vec<Jet> {
    match word {
        BracketWord::X1 => field_jet(space, model, 1, x),
        BracketWord::X2 => field_jet(space, model, 2, x),
        BracketWord::Bracket(a, b) => {
            let va = word_jet(space, model, a, x);
            let vb = word_jet(space, model, b, x);
            let along = |w: &BracketWord, dir: &[Jet]| -> Vec<Jet> {
                let lifted: Vec<Jet> = x.iter().zip(dir).map(|(xi, di)| xi.perturbed(di)).collect();
                word_jet(space, model, w, &lifted)
                    .iter()
                    .map(Jet::newest_part)
                    .collect()
            };
            let db_a = along(b, &va);
            let da_b = along(a, &vb);
            db_a.iter().zip(&da_b).map(|(p, q)| p - q).collect()
        }
    }
}

/// Exact value of `word` at `point`.
pub fn eval_word_exact(space: FieldSpace, model: &Model, word: &BracketWord, point: &[f64]) -> Result<Vec<f64>> {
    check_point(space, point)?;
    let x: Vec<Jet> = point.iter().map(|&v| Jet::constant(v, 0)).collect();
    Ok(word_jet(space, model, word, &x).iter().map(Jet::value).collect())
}

/// Value of `word` at `point` by nested central differences with one
/// Richardson step, base step `h`.
pub fn eval_word_fd(space: FieldSpace, model: &Model, word: &BracketWord, point: &[f64], h: f64) -> Result<Vec<f64>> {
    check_point(space, point)?;
    Ok(word_fd(space, model, word, point, point, h))
}

fn word_fd(space: FieldSpace, model: &Model, word: &BracketWord, x: &[f64], base: &[f64], h: f64) -> Vec<f64> {
    match word {
        BracketWord::X1 => field_near(space, model, 1, x, base),
        BracketWord::X2 => field_near(space, model, 2, x, base),
        BracketWord::Bracket(a, b) => {
            let va = word_fd(space, model, a, x, base, h);
            let vb = word_fd(space, model, b, x, base, h);
            let db_a = directional_fd(|y| word_fd(space, model, b, y, base, h), x, &va, h);
            let da_b = directional_fd(|y| word_fd(space, model, a, y, base, h), x, &vb, h);
            db_a.iter().zip(&da_b).map(|(p, q)| p - q).collect()
        }
    }
}

fn directional_fd(g: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], dir: &[f64], h: f64) -> Vec<f64> {
    let central = |step: f64| -> Vec<f64> {
        let plus: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a + step * d).collect();
        let minus: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a - step * d).collect();
        g(&plus)
            .iter()
            .zip(g(&minus))
            .map(|(p, m)| (p - m) / (2.0 * step))
            .collect()
    };
    let coarse = central(h);
    let fine = central(h / 2.0);
    fine.iter().zip(&coarse).map(|(f, c)| (4.0 * f - c) / 3.0).collect()
}

/// Value of `word` at `point`, cross-checked by finite differences.
pub fn eval_word(space: FieldSpace, model: &Model, word: &BracketWord, point: &[f64]) -> Result<Vec<f64>> {
    let exact = eval_word_exact(space, model, word, point)?;
    if word.depth() == 0 {
        return Ok(exact);
    }
    let fd = word_fd(space, model, word, point, point, FD_STEP);
    let scale = 1.0 + exact.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    for (e, d) in exact.iter().zip(&fd) {
        if (e - d).abs() > CROSS_CHECK_TOL * scale {
            return Err(Error::NumericalIntegrity(format!(
                "{word} at {point:?}: exact {exact:?} vs finite difference {fd:?}"
            )));
        }
    }
    Ok(exact)
}

/// `[a, b]` at `point`.
pub fn bracket(space: FieldSpace, model: &Model, a: &BracketWord, b: &BracketWord, point: &[f64]) -> Result<Vec<f64>> {
    eval_word(space, model, &BracketWord::bracket(a.clone(), b.clone()), point)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankCertificate {
    pub space: FieldSpace,
    pub point: Vec<f64>,
    pub columns: Vec<String>,
    /// Column vectors in the rank frame.
    pub matrix: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub target_rank: usize,
    pub pass: bool,
    pub determinant: Option<f64>,
}

/// Coordinates of an ambient vector in the rank frame. For the projective
/// family the fiber part is projected onto `u^⊥ = (u₂, −u₁)`.
fn to_frame(space: FieldSpace, point: &[f64], v: &[f64]) -> Vec<f64> {
    match space {
        FieldSpace::Projective => {
            let (u1, u2) = (point[2], point[3]);
            vec![v[0], v[1], v[2] * u2 - v[3] * u1]
        }
        _ => v.to_vec(),
    }
}

pub fn rank_certificate(space: FieldSpace, model: &Model, point: &[f64], columns: &[BracketWord]) -> Result<RankCertificate> {
    check_point(space, point)?;
    if space == FieldSpace::Projective {
        let n = point[2].hypot(point[3]);
        if (n - 1.0).abs() > 1e-12 {
            return Err(invalid("point", format!("projective direction must be a unit vector, |u| = {n}")));
        }
    }
    let mut matrix = Vec::with_capacity(columns.len());
    for w in columns {
        let v = eval_word(space, model, w, point)?;
        matrix.push(to_frame(space, point, &v));
    }
    let rows = space.target_rank();
    let m = DMatrix::from_fn(rows, columns.len(), |i, j| matrix[j][i]);
    let mut singular_values: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    singular_values.sort_by(|a, b| b.total_cmp(a));
    let largest = singular_values.first().copied().unwrap_or(0.0);
    let rank = singular_values.iter().filter(|&&s| s > RANK_TOL * largest && s > 0.0).count();
    let determinant = (rows == columns.len()).then(|| m.determinant());
    Ok(RankCertificate {
        space,
        point: point.to_vec(),
        columns: columns.iter().map(ToString::to_string).collect(),
        matrix,
        singular_values,
        rank,
        target_rank: rows,
        pass: rank >= rows,
        determinant,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HypothesisStatus {
    Established,
    /// No witness among the sampled points; not a disproof.
    NotEstablished,
    /// A profile fails the zero-set separation gate.
    NotApplicable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub space: FieldSpace,
    pub status: HypothesisStatus,
    pub points_tried: usize,
    pub witness: Option<RankCertificate>,
}

fn sample_point(space: FieldSpace, model: &Model, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let x = TorusPoint::uniform(rng);
        if model.dist_to_excluded(&x) < 1e-6 {
            continue;
        }
        return match space {
            FieldSpace::Base => vec![x.q, x.p],
            FieldSpace::Lifted | FieldSpace::Projective => {
                let th = rng.gen::<f64>() * TWO_PI;
                vec![x.q, x.p, th.cos(), th.sin()]
            }
            FieldSpace::TwoPoint => {
                let y = TorusPoint::uniform(rng);
                if model.dist_to_excluded(&y) < 1e-6 {
                    continue;
                }
                vec![x.q, x.p, y.q, y.p]
            }
        };
    }
}

/// Searches up to `n_points` sampled points for a full-rank witness using
/// the default columns.
pub fn check_hypothesis(space: FieldSpace, model: &Model, n_points: usize, seed: u64) -> Result<HypothesisReport> {
    let gate = model.f1.check_h1()?.pass && model.f2.check_h1()?.pass;
    if !gate {
        return Ok(HypothesisReport {
            space,
            status: HypothesisStatus::NotApplicable,
            points_tried: 0,
            witness: None,
        });
    }
    let delta = (space == FieldSpace::TwoPoint).then(|| build_invariant_set(model));
    let columns = BracketWord::default_columns();
    let mut rng = stream_rng(seed, 0, Purpose::Start);
    let mut tried = 0;
    while tried < n_points {
        let point = sample_point(space, model, &mut rng);
        if let Some(delta) = &delta {
            let s = TwoPointState::new(TorusPoint::new(point[0], point[1]), TorusPoint::new(point[2], point[3]));
            if dist_to_invariant(&s, delta) < 1e-3 {
                continue;
            }
        }
        tried += 1;
        let cert = rank_certificate(space, model, &point, &columns)?;
        if cert.pass {
            return Ok(HypothesisReport {
                space,
                status: HypothesisStatus::Established,
                points_tried: tried,
                witness: Some(cert),
            });
        }
    }
    Ok(HypothesisReport {
        space,
        status: HypothesisStatus::NotEstablished,
        points_tried: tried,
        witness: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn w(s: &str) -> BracketWord {
        s.parse().unwrap()
    }

    #[test]
    fn parse_and_display() {
        for s in ["X1", "X2", "[X1,X2]", "[[X1,X2],X1]", "[X1,[X1,[X1,X2]]]"] {
            assert_eq!(w(s).to_string(), s);
        }
        assert_eq!(w(" [ X1 , X2 ] ").depth(), 1);
        assert!("[X1,X2".parse::<BracketWord>().is_err());
        assert!("X3".parse::<BracketWord>().is_err());
        assert!("[X1,[X1,[X1,[X1,X2]]]]".parse::<BracketWord>().is_err());
    }

    #[test]
    fn field_examples() {
        let m = Model::pierrehumbert();
        let v = eval_field(FieldSpace::Base, &m, 1, &[0.0, PI / 2.0]).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-15 && v[1] == 0.0);
        let v = eval_field(FieldSpace::Projective, &m, 1, &[0.0, PI / 2.0, 1.0, 0.0]).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-15 && v[1..].iter().all(|c| c.abs() < 1e-15));
        let v = eval_field(FieldSpace::TwoPoint, &m, 2, &[PI / 2.0, 0.0, PI / 2.0, PI]).unwrap();
        assert_eq!(v, vec![0.0, 1.0, 0.0, 1.0]);
        assert!(eval_field(FieldSpace::Base, &m, 3, &[0.0, 0.0]).is_err());
        assert!(eval_field(FieldSpace::Lifted, &m, 1, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn base_bracket_example() {
        let m = Model::pierrehumbert();
        let v = bracket(FieldSpace::Base, &m, &BracketWord::X1, &BracketWord::X2, &[PI / 2.0, 0.0]).unwrap();
        assert!((v[0] + 1.0).abs() < 1e-14 && v[1].abs() < 1e-14);
    }

    #[test]
    fn self_bracket_vanishes() {
        let m = Model::chirikov();
        let p = [1.0, 2.0, 0.6, 0.8];
        for space in [FieldSpace::Lifted, FieldSpace::Projective, FieldSpace::TwoPoint] {
            let a = w("[X1,X2]");
            let v = bracket(space, &m, &a, &a, &p).unwrap();
            assert!(v.iter().all(|c| c.abs() < 1e-12));
        }
    }

    #[test]
    fn jet_and_fd_agree() {
        let m = Model::pierrehumbert();
        let p = [0.3, 1.7, -0.4, 0.9];
        for word in ["[X1,X2]", "[X1,[X1,X2]]", "[X2,[X1,[X1,X2]]]"] {
            let e = eval_word_exact(FieldSpace::Lifted, &m, &w(word), &p).unwrap();
            let f = eval_word_fd(FieldSpace::Lifted, &m, &w(word), &p, FD_STEP).unwrap();
            for (a, b) in e.iter().zip(&f) {
                assert!((a - b).abs() < 1e-6, "{word}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn projective_third_column_matches_display() {
        let f = crate::profiles::ShearProfile::trig(vec![0.2, 0.0, 0.3], vec![1.0, -0.4]).unwrap();
        let g = crate::profiles::ShearProfile::trig(vec![0.0, 0.5], vec![0.7]).unwrap();
        let m = Model::new("custom", f.clone(), g.clone()).unwrap();
        let (q, p, th) = (0.8, 2.1, 0.7f64);
        let (u1, u2) = (th.cos(), th.sin());
        let v = eval_word(FieldSpace::Projective, &m, &w("[X1,X2]"), &[q, p, u1, u2]).unwrap();
        let (a, da, dda) = (f.eval(p, 0), f.eval(p, 1), f.eval(p, 2));
        let (b, db, ddb) = (g.eval(q, 0), g.eval(q, 1), g.eval(q, 2));
        let third = -u1 * u1 * u2 * a * ddb - 2.0 * u1 * u2 * u2 * da * db - u2.powi(3) * b * dda;
        let fourth = u1.powi(3) * a * ddb + 2.0 * u1 * u1 * u2 * da * db + u1 * u2 * u2 * b * dda;
        let expect = [-da * b, a * db, third, fourth];
        for (x, y) in v.iter().zip(expect) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn square_certificate_reports_determinant() {
        let m = Model::pierrehumbert();
        let cols = [w("X1"), w("X2")];
        let c = rank_certificate(FieldSpace::Base, &m, &[1.0, 2.0], &cols).unwrap();
        let expect = 2f64.sin() * 1f64.sin();
        assert!((c.determinant.unwrap() - expect).abs() < 1e-14);
        assert_eq!(c.rank, 2);
        assert!(c.pass);
        let c = rank_certificate(FieldSpace::Base, &m, &[0.0, 2.0], &cols).unwrap();
        assert_eq!(c.rank, 1);
        assert!(!c.pass);
    }

    #[test]
    fn h1_failure_is_not_applicable() {
        let bumped = crate::profiles::ShearProfile::trig(vec![0.0], vec![1.0, 0.5]).unwrap();
        let m = Model::new("bumped", bumped.clone(), bumped).unwrap();
        let r = check_hypothesis(FieldSpace::Lifted, &m, 10, 1).unwrap();
        assert_eq!(r.status, HypothesisStatus::NotApplicable);
    }

    fn det(space: FieldSpace, m: &Model, p: &[f64], cols: &[&str]) -> f64 {
        let cols: Vec<BracketWord> = cols.iter().map(|c| w(c)).collect();
        rank_certificate(space, m, p, &cols).unwrap().determinant.unwrap()
    }

    #[test]
    fn lifted_determinants() {
        let cols = ["X1", "X2", "[X1,X2]", "[X1,[X1,X2]]"];
        let r = 0.5f64.sqrt();
        let p = [PI / 3.0, PI / 3.0, r, r];
        let a = det(FieldSpace::Lifted, &Model::pierrehumbert(), &p, &cols);
        assert!((a - 27.0 / 128.0).abs() < 1e-9, "{a}");
        let c = det(FieldSpace::Lifted, &Model::chirikov(), &p, &cols);
        assert!((c - (9.0 - 3f64.sqrt() * PI) / 16.0).abs() < 1e-9, "{c}");
    }

    #[test]
    fn two_point_determinants() {
        let p = [PI / 3.0, PI / 2.0, PI / 2.0, PI / 3.0];
        let d = det(FieldSpace::TwoPoint, &Model::pierrehumbert(), &p, &["X1", "X2", "[X1,X2]", "[[X1,X2],X1]"]);
        assert!((d - 3f64.sqrt() / 16.0).abs() < 1e-9, "{d}");
        let p = [PI, PI / 2.0, PI / 2.0, PI / 3.0];
        let d = det(FieldSpace::TwoPoint, &Model::chirikov(), &p, &["X1", "X2", "[X1,X2]", "[X1,[X1,X2]]"]);
        assert!((d - (3.0 - 3f64.sqrt()) * PI / 4.0).abs() < 1e-9, "{d}");
    }

    #[test]
    fn cross_check_survives_identity_cut() {
        let m = Model::chirikov();
        for q in [0.0, 3e-4, TWO_PI - 3e-4] {
            let v = eval_word(FieldSpace::Lifted, &m, &w("[X1,X2]"), &[q, 4.2, 0.6, 0.8]).unwrap();
            assert!(v.iter().all(|c| c.is_finite() && c.abs() < 10.0));
        }
    }

    #[test]
    fn lifted_double_bracket_matches_display() {
        let m = Model::pierrehumbert();
        let mut rng = stream_rng(3, 0, Purpose::Start);
        for _ in 0..1000 {
            let (q, p, th) = (rng.gen::<f64>() * TWO_PI, rng.gen::<f64>() * TWO_PI, rng.gen::<f64>() * TWO_PI);
            let v = eval_word(FieldSpace::Lifted, &m, &w("[X1,[X1,X2]]"), &[q, p, th.cos(), th.sin()]).unwrap();
            assert!((v[0] + 2.0 * p.cos() * q.cos() * p.sin()).abs() < 1e-6);
        }
    }
}
