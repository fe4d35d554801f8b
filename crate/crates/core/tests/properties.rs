use std::f64::consts::PI;

use proptest::prelude::*;
use rand::Rng;
use shearmix::chains::{build_invariant_set, dist_to_invariant, two_point_step, InvariantSetDescriptor, TwoPointState};
use shearmix::ergodicity::{correlation_series, eval_v, eval_w, DriftSpec};
use shearmix::flow::{stream_rng, DurationStream, Purpose};
use shearmix::lie::{eval_word, BracketWord, FieldSpace};
use shearmix::lyapunov::estimate_lambda1;
use shearmix::observable::Observable;
use shearmix::steering::split_schedule;
use shearmix::{Model, Schedule, ShearProfile, TorusPoint};

const TWO_PI: f64 = 2.0 * PI;

fn model(i: usize) -> Model {
    match i {
        0 => Model::pierrehumbert(),
        1 => Model::chirikov(),
        _ => Model::new(
            "mixed",
            ShearProfile::trig(vec![0.0, 0.3], vec![1.0, 0.2]).unwrap(),
            ShearProfile::sin_mode(2, 1.5),
        )
        .unwrap(),
    }
}

fn w(s: &str) -> BracketWord {
    s.parse().unwrap()
}

proptest! {
    #[test]
    fn inverse_undoes_step(i in 0usize..3, q in 0.0..TWO_PI, p in 0.0..TWO_PI, a in 0.0..20.0f64, b in 0.0..20.0f64) {
        let m = model(i);
        let x = TorusPoint::new(q, p);
        let (y, j) = m.step(&x, a, b);
        prop_assert!(m.inverse_step(&y, a, b).dist(&x) < 1e-9);
        prop_assert!((j.det() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn brackets_are_antisymmetric(i in 0usize..3, q in 0.0..TWO_PI, p in 0.0..TWO_PI, th in 0.0..TWO_PI) {
        let m = model(i);
        let pt = [q, p, th.cos(), th.sin()];
        let ab = eval_word(FieldSpace::Lifted, &m, &w("[X1,X2]"), &pt).unwrap();
        let ba = eval_word(FieldSpace::Lifted, &m, &w("[X2,X1]"), &pt).unwrap();
        for (u, v) in ab.iter().zip(&ba) {
            prop_assert!((u + v).abs() < 1e-9);
        }
    }

    #[test]
    fn jacobi_identity(i in 0usize..3, q in 0.0..TWO_PI, p in 0.0..TWO_PI, y in 0.0..TWO_PI, z in 0.0..TWO_PI) {
        let m = model(i);
        let pt = [q, p, y, z];
        let terms = ["[X1,[X2,[X1,X2]]]", "[X2,[[X1,X2],X1]]", "[[X1,X2],[X1,X2]]"];
        let mut total = [0.0; 4];
        for t in terms {
            let v = eval_word(FieldSpace::TwoPoint, &m, &w(t), &pt).unwrap();
            for (acc, x) in total.iter_mut().zip(&v) {
                *acc += x;
            }
        }
        for v in total {
            prop_assert!(v.abs() < 1e-8, "{total:?}");
        }
    }

    #[test]
    fn split_keeps_endpoint(i in 0usize..3, q in 0.0..TWO_PI, p in 0.0..TWO_PI, a in 0.0..10.0f64, b in 0.0..10.0f64, cap in 0.1..5.0f64) {
        let m = model(i);
        let x = TorusPoint::new(q, p);
        let s = Schedule::explicit(&[(a, b)]).unwrap();
        let split = split_schedule(&s, cap).unwrap();
        prop_assert!(split.durations.iter().all(|&d| d <= cap));
        prop_assert!(s.apply(&m, &x).dist(&split.apply(&m, &x)) < 1e-12);
    }

    #[test]
    fn invariant_set_is_invariant(q in 0.0..TWO_PI, p in 0.0..TWO_PI, a in 0.0..10.0f64, b in 0.0..10.0f64, k in 0usize..4) {
        let m = Model::pierrehumbert();
        let delta = build_invariant_set(&m);
        let x = TorusPoint::new(q, p);
        let s = TwoPointState::new(x, delta.components[k].apply(&x));
        let next = two_point_step(&s, a, b, &m);
        prop_assert!(dist_to_invariant(&next, &delta) < 1e-9);
    }

    #[test]
    fn profile_derivatives_match_differences(
        cos in prop::collection::vec(-1.0..1.0f64, 1..4),
        sin in prop::collection::vec(-1.0..1.0f64, 1..4),
        z in 0.0..TWO_PI,
    ) {
        let f = ShearProfile::trig(cos, sin).unwrap();
        let h = 1e-5;
        for order in 0..3u32 {
            let fd = (f.eval(z + h, order) - f.eval(z - h, order)) / (2.0 * h);
            let exact = f.eval(z, order + 1);
            prop_assert!((fd - exact).abs() < 1e-6 * (1.0 + exact.abs()), "order {order}: {fd} vs {exact}");
        }
    }

    #[test]
    fn drift_function_at_least_one(q in 0.0..TWO_PI, p in 0.0..TWO_PI) {
        let m = Model::pierrehumbert();
        let spec = DriftSpec::new(0.2, PI / 2.0, 10.0).unwrap();
        prop_assert!(eval_v(&m, &TorusPoint::new(q, p), &spec) >= 1.0);
    }

    #[test]
    fn w_ignores_component_order(q in 0.0..TWO_PI, p in 0.0..TWO_PI, r in 0.0..TWO_PI, s in 0.0..TWO_PI) {
        let delta = build_invariant_set(&Model::pierrehumbert());
        let mut reversed = delta.components.clone();
        reversed.reverse();
        let reversed = InvariantSetDescriptor { components: reversed };
        let st = TwoPointState::new(TorusPoint::new(q, p), TorusPoint::new(r, s));
        prop_assert_eq!(eval_w(&st, &delta, 0.25), eval_w(&st, &reversed, 0.25));
    }
}

#[test]
fn durations_have_uniform_moments() {
    let t = 3.0;
    let mut stream = DurationStream::new(7, 0, t);
    let n = 200_000;
    let xs: Vec<f64> = (0..n).map(|_| stream.next_duration()).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    assert!(xs.iter().all(|&x| (0.0..=t).contains(&x)));
    // 5 standard errors
    assert!((mean - t / 2.0).abs() < 5.0 * t / (12.0 * n as f64).sqrt());
    assert!((var - t * t / 12.0).abs() < 0.01 * t * t / 12.0);
}

/// Lebesgue measure is stationary: a chi-square test on an 8×8 partition of
/// the images of uniform points under one random step.
#[test]
fn lebesgue_measure_is_stationary() {
    let m = Model::pierrehumbert();
    let bins = 8;
    let n = 64_000;
    let mut counts = vec![0usize; bins * bins];
    let mut rng = stream_rng(11, 0, Purpose::InitialPoint);
    let mut stream = DurationStream::new(11, 0, 10.0);
    for _ in 0..n {
        let x = TorusPoint::uniform(&mut rng);
        let (a, b) = stream.next_pair();
        let y = m.advance(&x, a, b);
        let i = ((y.q / TWO_PI * bins as f64) as usize).min(bins - 1);
        let j = ((y.p / TWO_PI * bins as f64) as usize).min(bins - 1);
        counts[i * bins + j] += 1;
    }
    let expected = n as f64 / (bins * bins) as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 63 degrees of freedom; the 0.999 quantile is about 103.4
    assert!(chi2 < 103.4, "chi2 = {chi2}");
}

#[test]
fn correlation_is_sign_invariant() {
    let m = Model::pierrehumbert();
    let center = TorusPoint::new(1.0, 2.0);
    let run = |amp: f64| correlation_series(&m, &Observable::sin_q(amp), &center, 0.3, 10.0, 500, 5, 3).unwrap();
    let (a, b) = (run(2.0), run(-2.0));
    assert_eq!(a.c, b.c);
    assert_eq!(a.stderr, b.stderr);
}

#[test]
fn estimates_do_not_depend_on_thread_count() {
    let m = Model::chirikov();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| estimate_lambda1(&m, 5.0, 200, 64, 9).unwrap())
    };
    let (a, b) = (run(1), run(4));
    assert_eq!(a.lambda1.to_bits(), b.lambda1.to_bits());
    assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
}

/// Every affine map `(σ_q q + s_q, σ_p p + s_p)` with shifts on a 256-point
/// grid that satisfies both defining identities, counted by brute force.
fn brute_force_components(f1: &ShearProfile, f2: &ShearProfile) -> usize {
    let grid = 256;
    let mut rng = stream_rng(5, 0, Purpose::Start);
    let ts: Vec<f64> = (0..32).map(|_| rng.gen::<f64>() * TWO_PI).collect();
    let shift = |k: usize| k as f64 * TWO_PI / grid as f64;
    let holds = |f: &ShearProfile, sigma_in: f64, s: f64, sigma_out: f64| {
        ts.iter().all(|&t| (f.eval(sigma_in * t + s, 0) - sigma_out * f.eval(t, 0)).abs() < 1e-9)
    };
    let mut count = 0;
    for sq_sign in [1.0, -1.0] {
        for sp_sign in [1.0, -1.0] {
            let p_shifts: Vec<usize> = (0..grid).filter(|&k| holds(f1, sp_sign, shift(k), sq_sign)).collect();
            let q_shifts: Vec<usize> = (0..grid).filter(|&k| holds(f2, sq_sign, shift(k), sp_sign)).collect();
            count += p_shifts.len() * q_shifts.len();
        }
    }
    count
}

#[test]
fn double_frequency_invariant_set_matches_brute_force() {
    let f = ShearProfile::sin_mode(2, 1.0);
    let m = Model::new("double", f.clone(), f.clone()).unwrap();
    let delta = build_invariant_set(&m);
    assert_eq!(delta.components.len(), brute_force_components(&f, &f));
    assert_eq!(delta.components.len(), 16);
    let p = Model::pierrehumbert();
    assert_eq!(build_invariant_set(&p).components.len(), brute_force_components(&p.f1, &p.f2));
}
