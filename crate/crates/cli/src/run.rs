//! Subcommand dispatch and artifact writing.

use std::f64::consts::PI;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use shearmix::chains::{build_invariant_set, TwoPointState};
use shearmix::ergodicity::{
    correlation_series, drift_bound, drift_sweep, empirical_two_point_drift, find_min_t, DriftSpec, TwoPointDriftSpec,
};
use shearmix::flow::{sample_schedule, stream_rng, Purpose};
use shearmix::lie::{check_hypothesis, rank_certificate, BracketWord, FieldSpace, HypothesisStatus};
use shearmix::lyapunov::{estimate_lambda1, estimate_lambda_sum};
use shearmix::mixing::mix_run;
use shearmix::observable::Observable;
use shearmix::steering::steer_to;
use shearmix::{Model, TorusPoint};

use crate::config::{Command, RunConfig};
use crate::error::CliError;

/// Ball radius for the correlation statistic.
pub const CORRELATION_RADIUS: f64 = 0.05;
pub const OBSERVABLE_AMPLITUDE: f64 = 2.0;

#[derive(Debug)]
pub struct Outcome {
    /// `false` when the run completed but its statistical check came out empty.
    pub finding: bool,
    pub summary: String,
    pub artifacts: Vec<PathBuf>,
}

pub fn config_hash(cfg: &RunConfig) -> Result<String, CliError> {
    let canonical = serde_json::to_string(cfg)?;
    Ok(Sha256::digest(canonical.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

struct Artifacts<'a> {
    cfg: &'a RunConfig,
    hash: String,
    written: Vec<PathBuf>,
}

impl<'a> Artifacts<'a> {
    fn new(cfg: &'a RunConfig) -> Result<Self, CliError> {
        fs::create_dir_all(&cfg.out)?;
        Ok(Self {
            cfg,
            hash: config_hash(cfg)?,
            written: Vec::new(),
        })
    }

    fn path(&self, ext: &str) -> PathBuf {
        self.cfg.out.join(format!("{}.{ext}", self.cfg.command.name()))
    }

    fn json(&mut self, result: impl Serialize) -> Result<(), CliError> {
        let doc = json!({
            "config": self.cfg,
            "config_hash": self.hash,
            "result": result,
        });
        let path = self.path("json");
        let mut f = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut f, &doc)?;
        writeln!(f)?;
        f.flush()?;
        self.written.push(path);
        Ok(())
    }

    fn csv(&mut self, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
        let path = self.path("csv");
        let mut f = BufWriter::new(File::create(&path)?);
        writeln!(f, "# config_hash={}", self.hash)?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        self.written.push(path);
        Ok(())
    }
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn point(p: Option<[f64; 2]>, seed: u64, sample: u64) -> TorusPoint {
    match p {
        Some([q, p]) => TorusPoint::new(q, p),
        None => TorusPoint::uniform(&mut stream_rng(seed, sample, Purpose::Pair)),
    }
}

pub fn run(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let model = cfg.model.build()?;
    let mut art = Artifacts::new(cfg)?;
    let (finding, summary) = match cfg.command {
        Command::Simulate => simulate(cfg, &model, &mut art)?,
        Command::Lyapunov => lyapunov(cfg, &model, &mut art)?,
        Command::Hypotheses => hypotheses(cfg, &model, &mut art)?,
        Command::Drift => drift(cfg, &model, &mut art)?,
        Command::Correlations => correlations(cfg, &model, &mut art)?,
        Command::Steer => steer(cfg, &model, &mut art)?,
        Command::Mix => mix(cfg, &model, &mut art)?,
    };
    Ok(Outcome {
        finding,
        summary,
        artifacts: art.written,
    })
}

fn simulate(cfg: &RunConfig, model: &Model, art: &mut Artifacts) -> Result<(bool, String), CliError> {
    let start = match cfg.start {
        Some([q, p]) => TorusPoint::new(q, p),
        None => TorusPoint::uniform(&mut stream_rng(cfg.seed, 0, Purpose::InitialPoint)),
    };
    let schedule = sample_schedule(cfg.seed, cfg.m, cfg.horizon)?;
    let mut rows = vec![vec!["0".into(), String::new(), String::new(), num(start.q), num(start.p)]];
    let mut x = start;
    for (k, (a, b)) in schedule.pairs().enumerate() {
        x = model.advance(&x, a, b);
        rows.push(vec![(k + 1).to_string(), num(a), num(b), num(x.q), num(x.p)]);
    }
    art.csv(&["step", "tau1", "tau2", "q", "p"], rows)?;
    art.json(json!({ "start": start, "end": x, "steps": cfg.m }))?;
    Ok((true, format!("{} steps from ({}, {}) to ({}, {})", cfg.m, start.q, start.p, x.q, x.p)))
}

fn lyapunov(cfg: &RunConfig, model: &Model, art: &mut Artifacts) -> Result<(bool, String), CliError> {
    let mut estimates = Vec::new();
    for t in cfg.horizons() {
        estimates.push(estimate_lambda1(model, t, cfg.m, cfg.samples, cfg.seed)?);
    }
    let sums: Vec<f64> = cfg
        .horizons()
        .iter()
        .map(|&t| estimate_lambda_sum(model, t, cfg.m, cfg.samples, cfg.seed))
        .collect::<Result<_, _>>()?;
    art.csv(
        &["T", "m", "n_samples", "lambda1", "stderr", "ci_lo", "ci_hi", "seed"],
        estimates.iter().map(|e| {
            vec![
                num(e.horizon),
                e.m.to_string(),
                e.n_samples.to_string(),
                num(e.lambda1),
                num(e.stderr),
                num(e.ci95.0),
                num(e.ci95.1),
                e.seed.to_string(),
            ]
        }),
    )?;
    let rows: Vec<Value> = estimates
        .iter()
        .zip(&sums)
        .map(|(e, s)| json!({ "estimate": e, "lambda_sum": s, "lambda2_derived": -e.lambda1 }))
        .collect();
    art.json(json!({ "estimates": rows }))?;
    let positive = estimates.iter().all(|e| e.ci95.0 > 0.0);
    let summary = estimates
        .iter()
        .map(|e| format!("T={} lambda1={:.6} ci95=[{:.6}, {:.6}]", e.horizon, e.lambda1, e.ci95.0, e.ci95.1))
        .collect::<Vec<_>>()
        .join("\n");
    Ok((positive, summary))
}

fn reference_determinants() -> Result<Vec<Value>, CliError> {
    let r = 0.5f64.sqrt();
    let lifted = ["X1", "X2", "[X1,X2]", "[X1,[X1,X2]]"];
    let cases: [(Model, FieldSpace, [f64; 4], [&str; 4]); 4] = [
        (Model::pierrehumbert(), FieldSpace::Lifted, [PI / 3.0, PI / 3.0, r, r], lifted),
        (
            Model::pierrehumbert(),
            FieldSpace::TwoPoint,
            [PI / 3.0, PI / 2.0, PI / 2.0, PI / 3.0],
            ["X1", "X2", "[X1,X2]", "[[X1,X2],X1]"],
        ),
        (Model::chirikov(), FieldSpace::Lifted, [PI / 3.0, PI / 3.0, r, r], lifted),
        (Model::chirikov(), FieldSpace::TwoPoint, [PI, PI / 2.0, PI / 2.0, PI / 3.0], lifted),
    ];
    cases
        .iter()
        .map(|(m, space, p, cols)| {
            let words: Vec<BracketWord> = cols.iter().map(|c| c.parse()).collect::<Result<_, _>>()?;
            let cert = rank_certificate(*space, m, p, &words)?;
            Ok(json!({
                "model": m.name,
                "space": space,
                "point": p,
                "columns": cert.columns,
                "determinant": cert.determinant,
            }))
        })
        .collect()
}

fn hypotheses(cfg: &RunConfig, model: &Model, art: &mut Artifacts) -> Result<(bool, String), CliError> {
    let (c1, c2) = (model.f1.check_h1()?, model.f2.check_h1()?);
    let h1 = c1.pass && c2.pass;
    let mut reports = Vec::new();
    for (label, space) in [
        ("base", FieldSpace::Base),
        ("h2", FieldSpace::Lifted),
        ("h2_projective", FieldSpace::Projective),
        ("h3", FieldSpace::TwoPoint),
    ] {
        reports.push((label, check_hypothesis(space, model, cfg.samples, cfg.seed)?));
    }
    let established = |s: HypothesisStatus| s == HypothesisStatus::Established;
    let all = h1 && reports.iter().all(|(_, r)| established(r.status));
    let mut result = serde_json::Map::new();
    result.insert("h1".into(), json!({ "f1": c1, "f2": c2, "pass": h1 }));
    for (label, r) in &reports {
        result.insert((*label).into(), json!({ "pass": established(r.status), "report": r }));
    }
    result.insert("reference_determinants".into(), Value::Array(reference_determinants()?));
    art.json(Value::Object(result))?;
    let summary = std::iter::once(format!("h1: {h1}"))
        .chain(reports.iter().map(|(l, r)| format!("{l}: {:?} after {} points", r.status, r.points_tried)))
        .collect::<Vec<_>>()
        .join("\n");
    Ok((all, summary))
}

fn drift(cfg: &RunConfig, model: &Model, art: &mut Artifacts) -> Result<(bool, String), CliError> {
    let k = model.f1.distortion_constant()?.max(model.f2.distortion_constant()?);
    let spec = DriftSpec::new(cfg.beta, k, cfg.horizon)?;
    let t_star = if cfg.beta < 0.25 { find_min_t(k, cfg.beta)? } else { None };
    let sweep = drift_sweep(model, &spec, cfg.samples, cfg.seed)?;
    art.csv(
        &["f_q", "f_p", "radius", "angle", "q", "p", "ratio", "stderr", "upper95", "clipped"],
        sweep.iter().map(|s| {
            vec![
                num(s.f_point.q),
                num(s.f_point.p),
                num(s.radius),
                num(s.angle),
                num(s.x.q),
                num(s.x.p),
                num(s.drift.ratio),
                num(s.drift.stderr),
                num(s.drift.upper95()),
                s.drift.clipped.to_string(),
            ]
        }),
    )?;
    let alpha = sweep.iter().map(|s| s.drift.ratio).fold(f64::NEG_INFINITY, f64::max);
    let alpha_upper = sweep.iter().map(|s| s.drift.upper95()).fold(f64::NEG_INFINITY, f64::max);
    let contracting = sweep.iter().filter(|s| s.contracts()).count();

    let spec2 = TwoPointDriftSpec {
        h: cfg.h,
        ..TwoPointDriftSpec::default()
    };
    spec2.validate()?;
    let x = point(cfg.start, cfg.seed, 0);
    let y = match cfg.target {
        Some([q, p]) => TorusPoint::new(q, p),
        None => TorusPoint::new(x.q + 0.1, x.p),
    };
    let pair = TwoPointState::new(x, y);
    let two_point = empirical_two_point_drift(model, &pair, &spec, &spec2, &build_invariant_set(model), cfg.samples, cfg.seed);
    let two_point = match two_point {
        Ok(r) => json!(r),
        Err(shearmix::Error::Excluded(reason)) => json!({ "skipped": reason }),
        Err(e) => return Err(e.into()),
    };

    art.json(json!({
        "beta": cfg.beta,
        "K": k,
        "T": cfg.horizon,
        "T_star": t_star,
        "bound_case1": drift_bound(1, k, cfg.beta, cfg.horizon)?,
        "bound_case2": drift_bound(2, k, cfg.beta, cfg.horizon)?,
        "empirical_alpha": alpha,
        "empirical_alpha_upper95": alpha_upper,
        "points": sweep.len(),
        "contracting_points": contracting,
        "two_point": { "x": pair.x, "y": pair.y, "drift": two_point },
    }))?;
    let all = contracting == sweep.len();
    Ok((
        all,
        format!(
            "K={k:.6} T*={} empirical alpha={alpha:.6} (upper95 {alpha_upper:.6}); {contracting}/{} points contract",
            t_star.map_or("none".into(), |t| format!("{t:.6e}")),
            sweep.len()
        ),
    ))
}

fn correlations(cfg: &RunConfig, model: &Model, art: &mut Artifacts) -> Result<(bool, String), CliError> {
    let center = match cfg.start {
        Some([q, p]) => TorusPoint::new(q, p),
        None => TorusPoint::new(PI / 2.0, PI / 2.0),
    };
    let g = Observable::sin_q(OBSERVABLE_AMPLITUDE);
    let series = correlation_series(model, &g, &center, CORRELATION_RADIUS, cfg.horizon, cfg.samples, cfg.m, cfg.seed)?;
    art.csv(
        &["m", "c_m", "stderr"],
        series
            .c
            .iter()
            .zip(&series.stderr)
            .enumerate()
            .map(|(m, (c, s))| vec![m.to_string(), num(*c), num(*s)]),
    )?;
    let fit = series.fit.as_ref();
    art.json(json!({
        "center": center,
        "radius": CORRELATION_RADIUS,
        "observable": g,
        "lambda_hat": fit.map(|f| f.lambda_hat),
        "slope": fit.map(|f| f.slope),
        "r2": fit.map(|f| f.r2),
        "window": fit.map(|f| f.window),
    }))?;
    let decays = fit.is_some_and(|f| f.lambda_hat < 1.0);
    let summary = match fit {
        Some(f) => format!("lambda_hat={:.6} r2={:.4} over {} steps", f.lambda_hat, f.r2, f.window),
        None => "no fit window above the noise floor".into(),
    };
    Ok((decays, summary))
}

fn steer(cfg: &RunConfig, model: &Model, art: &mut Artifacts) -> Result<(bool, String), CliError> {
    let start = point(cfg.start, cfg.seed, 0);
    let target = match cfg.target {
        Some([q, p]) => TorusPoint::new(q, p),
        None => TorusPoint::uniform(&mut stream_rng(cfg.seed, 1, Purpose::Pair)),
    };
    let plan = steer_to(model, &start, &target, cfg.horizon)?;
    let legs: Vec<(f64, f64)> = plan.legs.pairs().collect();
    art.csv(
        &["leg", "tau1", "tau2"],
        legs.iter().enumerate().map(|(i, (a, b))| vec![(i + 1).to_string(), num(*a), num(*b)]),
    )?;
    art.json(json!({
        "start": start,
        "target": target,
        "t_cap": cfg.horizon,
        "legs": legs,
        "residual": plan.residual,
        "method": plan.method,
        "success": plan.success,
    }))?;
    let durations = plan.legs.durations.iter().map(|d| num(*d)).collect::<Vec<_>>().join(" ");
    Ok((plan.success, format!("durations: {durations}\nresidual: {:e}", plan.residual)))
}

fn mix(cfg: &RunConfig, model: &Model, art: &mut Artifacts) -> Result<(bool, String), CliError> {
    let schedule = sample_schedule(cfg.seed, cfg.m, cfg.horizon)?;
    let u0 = Observable::sin_q(OBSERVABLE_AMPLITUDE);
    let radii = (!cfg.radii.is_empty()).then_some(cfg.radii.as_slice());
    let rep = mix_run(model, &u0, &schedule, cfg.m, cfg.grid, radii)?;
    art.csv(
        &["m", "mix_scale", "grad_norm_l1_cum", "eta_hat_running"],
        rep.steps.iter().map(|s| {
            vec![
                s.m.to_string(),
                num(s.mix_scale),
                num(s.grad_norm_l1_cum),
                num(s.eta_hat_running),
            ]
        }),
    )?;
    art.json(json!({
        "slope": rep.slope,
        "r2": rep.r2,
        "eta_hat": rep.eta_hat,
        "xi_hat": rep.xi_hat,
        "rho": rep.rho,
        "fit_points": rep.fit_points,
        "no_mixing_observed": rep.no_mixing_observed,
        "radii": rep.radii,
        "grid": cfg.grid,
        "initial": u0,
    }))?;
    Ok((
        !rep.no_mixing_observed,
        format!(
            "slope={} r2={} eta_hat={} xi_hat={}",
            opt(rep.slope),
            opt(rep.r2),
            opt(rep.eta_hat),
            opt(rep.xi_hat)
        ),
    ))
}

/// Reads the `# config_hash=` line of a CSV artifact.
pub fn csv_hash(path: &Path) -> Result<Option<String>, CliError> {
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .next()
        .and_then(|l| l.strip_prefix("# config_hash="))
        .map(str::to_string))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_tracks_config() {
        let a = RunConfig::defaults(Command::Mix);
        let mut b = a.clone();
        assert_eq!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        b.seed += 1;
        assert_ne!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        assert_eq!(config_hash(&a).unwrap().len(), 64);
    }

    #[test]
    fn seeded_points_are_stable() {
        let a = point(None, 5, 0);
        let b = point(None, 5, 0);
        assert_eq!(a, b);
        assert_eq!(point(Some([1.0, 2.0]), 5, 0), TorusPoint::new(1.0, 2.0));
    }
}
