use heatlocus::asymptotics::{self, ratio_string, ExponentFit, GeodesicClassification};
use heatlocus::distance::{self, ProfileControls, ShootingControls};
use heatlocus::expr::Expr;
use heatlocus::flow::{self, FlowControls};
use heatlocus::laplace::{self, DiagonalPhase};
use heatlocus::singularity::{self, make_fixture, Fixture, MapFn, SmoothMapSample, M_MAX};
use heatlocus::{Covector, Error, HingedProfile, Point, Structure};
use nalgebra::DVector;
use num_dual::{second_derivative, Dual2_64};
use serde_json::{json, Value};
use std::sync::Arc;

use crate::config::{RunConfig, VerifyParams};
use crate::output::{csv_row, fmt_f64, json as to_json, opt};
use crate::CliError;

/// Main output plus an optional JSON sidecar.
pub struct Output {
    pub main: Vec<u8>,
    pub sidecar: Option<Vec<u8>>,
}

fn search(cfg: &RunConfig) -> ShootingControls {
    ShootingControls { seed: cfg.seed, ..ShootingControls::default() }
}

fn log_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>, CliError> {
    if !(lo > 0.0 && hi > lo) || count < 2 {
        return Err(CliError::Config(format!("bad time grid [{lo}, {hi}] with {count} points")));
    }
    let (a, b) = (lo.log10(), hi.log10());
    Ok((0..count).map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64)).collect())
}

fn fixture(cfg: &RunConfig) -> Result<Option<Fixture>, CliError> {
    match &cfg.fixture {
        None => Ok(None),
        Some(f) => Ok(Some(make_fixture(f.eta, f.sigma1, f.sigma3)?)),
    }
}

pub fn geodesic(cfg: &RunConfig) -> Result<Output, CliError> {
    let s = cfg.structure()?;
    let p = cfg.section(&cfg.geodesic, "geodesic")?;
    let q0 = Point::new(p.q0.clone());
    let ctrl = FlowControls { samples: p.samples, ..FlowControls::default() };
    let rec = flow::geodesic(&s, &q0, &Covector::new(p.lambda.clone()), p.t_end, &ctrl)?;
    let light = ShootingControls { seed: cfg.seed, ..ShootingControls::light() };
    let cut = distance::cut_time(&s, &q0, &rec.lambda0, p.t_end, &light)?;

    let n = s.n;
    let mut csv = String::new();
    let header = std::iter::once("t".to_string()).chain((1..=n).map(|i| format!("q{i}"))).chain((1..=n).map(|i| format!("p{i}")));
    csv.push_str(&csv_row(header));
    for st in &rec.samples {
        csv.push_str(&csv_row(std::iter::once(st.t).chain(st.q.iter().copied()).chain(st.p.iter().copied()).map(fmt_f64)));
    }
    let side = json!({
        "t_conj": rec.t_conj,
        "t_cut": cut.t_cut,
        "energy_drift": flow::energy_drift(&s, &rec.samples),
        "lambda0": rec.lambda0.as_slice(),
    });
    Ok(Output { main: csv.into_bytes(), sidecar: Some(to_json(&side)) })
}

fn minimizer_json(g: &heatlocus::GeodesicRecord, d: f64) -> Value {
    json!({
        "covector": (&g.lambda0.0 * d).as_slice(),
        "t_conj": g.t_conj,
    })
}

pub fn distance(cfg: &RunConfig) -> Result<Output, CliError> {
    let s = cfg.structure()?;
    let p = cfg.section(&cfg.distance, "distance")?;
    let res = distance::distance(&s, &Point::new(p.q1.clone()), &Point::new(p.q2.clone()), &search(cfg))?;
    let mins: Vec<Value> = res.minimizers.iter().map(|g| minimizer_json(g, res.d)).collect();
    let out = json!({ "d": res.d, "non_discrete": res.non_discrete, "minimizers": mins });
    Ok(Output { main: to_json(&out), sidecar: None })
}

pub fn cutlocus(cfg: &RunConfig) -> Result<Output, CliError> {
    let s = cfg.structure()?;
    let p = cfg.section(&cfg.cutlocus, "cutlocus")?;
    let light = ShootingControls { seed: cfg.seed, ..ShootingControls::light() };
    let rows = distance::cut_locus(&s, &Point::new(p.q0.clone()), p.directions, p.t_max, &light)?;
    let n = s.n;
    let mut csv = String::new();
    let header = (1..n)
        .map(|i| format!("theta{i}"))
        .chain(["t_cut".to_string(), "t_conj".to_string()])
        .chain((1..=n).map(|i| format!("x{i}")));
    csv.push_str(&csv_row(header));
    for r in &rows {
        let end: Vec<String> = match &r.endpoint {
            Some(e) => e.iter().copied().map(fmt_f64).collect(),
            None => vec![String::new(); n],
        };
        csv.push_str(&csv_row(r.theta.iter().copied().map(fmt_f64).chain([opt(r.t_cut), opt(r.t_conj)]).chain(end)));
    }
    Ok(Output { main: csv.into_bytes(), sidecar: None })
}

/// Distance search that refuses continuous families of minimizers.
fn discrete_minimizers(s: &Structure, q1: &Point, q2: &Point, search: &ShootingControls) -> Result<heatlocus::DistanceResult, CliError> {
    let res = distance::distance(s, q1, q2, search)?;
    if res.non_discrete {
        let report = json!({
            "error": "continuum",
            "d": res.d,
            "roots_found": res.minimizers.len(),
            "message": "the minimizing geodesics form a continuous family; midpoints are not isolated and no order can be assigned",
        });
        return Err(CliError::Continuum(to_json(&report)));
    }
    Ok(res)
}

fn profile_json(p: &HingedProfile) -> Value {
    json!({
        "z0": p.z0.as_slice(),
        "d": p.d,
        "h_min": p.h_min,
        "r": p.r,
        "m": p.m,
        "dexp_rank_deficit": p.dexp_rank_deficit,
        "hessian_eigenvalues": p.hessian.clone().symmetric_eigenvalues().as_slice(),
        "valley_coefficient": p.valley_coefficient,
    })
}

fn exp_singularity(s: &Structure, q1: &Point, covector: &DVector<f64>) -> Value {
    let (s2, q) = (s.clone(), q1.clone());
    let f: MapFn = Arc::new(move |l: &[f64]| Ok(flow::exp_map(&s2, &q, &Covector::new(l.to_vec()), 1.0)?.0.as_slice().to_vec()));
    let radius = 0.05 * covector.norm().max(1e-3);
    let report = SmoothMapSample::numeric(f, Point(covector.clone()), radius).and_then(|map| singularity::classify(&map, M_MAX));
    match report {
        Ok(r) => serde_json::to_value(r).expect("report serializes"),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

pub fn classify(cfg: &RunConfig) -> Result<Output, CliError> {
    if let Some(fx) = fixture(cfg)? {
        let a = fx.analysis()?;
        let out = json!({
            "fixture": { "eta": fx.eta, "expected_m": fx.expected_m() },
            "minimizers": [{
                "z0": fx.plane_point(&[0.0, 0.0]),
                "h_min": a.value,
                "r": a.r,
                "m": a.m,
                "admissible": a.r == 0 || (a.r == 1 && a.m.is_some_and(|m| m % 2 == 1)),
            }],
        });
        return Ok(Output { main: to_json(&out), sidecar: None });
    }
    let p = cfg.section(&cfg.classify, "classify")?;
    let s = cfg.structure()?;
    let (q1, q2) = (Point::new(p.q1.clone()), Point::new(p.q2.clone()));
    if q1 == q2 {
        return Err(CliError::Config("q1 and q2 coincide".into()));
    }
    let sc = search(cfg);
    let res = discrete_minimizers(&s, &q1, &q2, &sc)?;
    let mut mins = Vec::new();
    for g in &res.minimizers {
        let prof = distance::midpoint_profile(&s, &q1, &q2, g, &sc, &ProfileControls::default())?;
        let mut v = profile_json(&prof);
        v["covector"] = json!(prof.covector.as_slice());
        v["exp_map"] = exp_singularity(&s, &q1, &prof.covector);
        mins.push(v);
    }
    let out = json!({ "d": res.d, "minimizers": mins });
    Ok(Output { main: to_json(&out), sidecar: None })
}

fn fit_json(fit: &ExponentFit, predicted: f64) -> Value {
    json!({
        "fitted_exponent": fit.exponent,
        "slope": fit.slope,
        "r2": fit.r2,
        "grid": fit.grid,
        "values": fit.values,
        "abs_error": (fit.exponent - predicted).abs(),
        "within_tolerance": (fit.exponent - predicted).abs() <= 0.02,
    })
}

fn prediction_json(p: &heatlocus::AsymptoticPrediction, cls: &[GeodesicClassification]) -> Value {
    json!({
        "n": p.n,
        "exponent": ratio_string(p.exponent),
        "remainder": ratio_string(p.remainder_power),
        "leading_C": p.leading_c,
        "regime": p.regime,
        "classifications": cls,
    })
}

/// `Σ_{i<n} x_i² + x_n^{m+1}` over `[-1, 1]^n`.
fn verify_normal_form(n: usize, m: u32, v: &VerifyParams) -> Result<ExponentFit, CliError> {
    let grid = log_grid(v.t_min, v.t_max, v.points)?;
    let h = |z: &[f64]| Ok(z[..n - 1].iter().map(|x| x * x).sum::<f64>() + z[n - 1].powi(m as i32 + 1));
    let (lo, hi, peak) = (vec![-1.0; n], vec![1.0; n], vec![0.0; n]);
    Ok(asymptotics::midpoint_integral_exponent(&h, 0.0, &|_| 1.0, &lo, &hi, &peak, &grid, 1e-8)?)
}

pub fn predict(cfg: &RunConfig, verify: bool) -> Result<Output, CliError> {
    let p = cfg.section(&cfg.predict, "predict")?;
    let default_verify = |lo: f64, hi: f64| VerifyParams { t_min: lo, t_max: hi, points: 7, radius: 0.2 };

    if let Some(fx) = fixture(cfg)? {
        let a = fx.analysis()?;
        let m = a.m.ok_or_else(|| Error::Inconsistency("fixture valley order was not detected".into()))?;
        let cls = [GeodesicClassification { m, f_zi: 1.0, c0_product: None }];
        let pred = asymptotics::predict(2, &cls)?;
        let mut out = prediction_json(&pred, &cls);
        if verify {
            // the shear (x, u) ↦ (x, u + γ(x)) straightens the valley and has unit Jacobian
            let v = p.verify.clone().unwrap_or_else(|| default_verify(1e-11, 1e-8));
            let grid = log_grid(v.t_min, v.t_max, v.points)?;
            let weight = |w: &[f64]| {
                let z = fx.plane_point(w);
                fx.c0_left(&z).unwrap_or(f64::NAN) * fx.c0_right(&z) * fx.density(&z)
            };
            let r = v.radius;
            let fit = asymptotics::midpoint_integral_exponent(&|w| Ok(fx.excess(&fx.plane_point(w))), 0.0, &weight, &[-2.0 * r, -r], &[2.0 * r, r], &[0.0, 0.0], &grid, 1e-8)?;
            out["fit"] = fit_json(&fit, laplace::ratio_f64(pred.exponent));
        }
        return Ok(Output { main: to_json(&out), sidecar: None });
    }

    if let (Some(n), Some(ms)) = (p.n, &p.m) {
        let cls: Vec<GeodesicClassification> = ms.iter().map(|&m| GeodesicClassification { m, f_zi: 1.0, c0_product: None }).collect();
        let pred = asymptotics::predict(n, &cls)?;
        let mut out = prediction_json(&pred, &cls);
        if verify {
            let v = p.verify.clone().unwrap_or_else(|| default_verify(1e-5, 1e-2));
            let ell = cls.iter().map(|c| c.m).max().unwrap_or(1);
            // only the largest order sets the exponent; the fit uses a unit-weight normal form
            let fit = verify_normal_form(n, ell, &v)?;
            out["fit"] = fit_json(&fit, laplace::ratio_f64(pred.exponent));
        }
        return Ok(Output { main: to_json(&out), sidecar: None });
    }

    let (Some(q1), Some(q2)) = (&p.q1, &p.q2) else {
        return Err(CliError::Config("predict needs either q1 and q2, or n and m".into()));
    };
    let s = cfg.structure()?;
    let (q1, q2) = (Point::new(q1.clone()), Point::new(q2.clone()));
    let sc = search(cfg);
    let res = discrete_minimizers(&s, &q1, &q2, &sc)?;
    let mut profiles = Vec::new();
    for g in &res.minimizers {
        profiles.push(distance::midpoint_profile(&s, &q1, &q2, g, &sc, &ProfileControls::default())?);
    }
    let r_max = profiles.iter().map(|p| p.r).max().unwrap_or(0);
    if r_max >= 2 {
        if profiles.len() != 1 {
            return Err(Error::Unsupported(format!("rank deficit {r_max} with {} minimizers", profiles.len())).into());
        }
        let b = asymptotics::predict_bounds(s.n, r_max)?;
        let out = json!({
            "n": s.n,
            "regime": "bounds",
            "r": b.r,
            "lower_exponent": ratio_string(b.lower_exponent),
            "upper_exponent": ratio_string(b.upper_exponent),
            "minimizers": profiles.iter().map(profile_json).collect::<Vec<_>>(),
        });
        return Ok(Output { main: to_json(&out), sidecar: None });
    }
    let light = ShootingControls { seed: cfg.seed, ..ShootingControls::light() };
    let mut cls = Vec::new();
    for prof in &profiles {
        let c0 = if s.is_riemannian() {
            match (asymptotics::ben_arous_c0(&s, &q1, &prof.z0, &light), asymptotics::ben_arous_c0(&s, &prof.z0, &q2, &light)) {
                (Ok(a), Ok(b)) => Some(a * b),
                _ => None,
            }
        } else {
            None
        };
        cls.push(asymptotics::classification_from_profile(prof, c0)?);
    }
    let pred = asymptotics::predict(s.n, &cls)?;
    let mut out = prediction_json(&pred, &cls);
    if verify {
        let v = p.verify.clone().unwrap_or_else(|| default_verify(1e-5, 1e-2));
        let grid = log_grid(v.t_min, v.t_max, v.points)?;
        let ell = cls.iter().map(|c| c.m).max().unwrap_or(1);
        let k = cls.iter().position(|c| c.m == ell).unwrap_or(0);
        let c0 = cls[k].c0_product.unwrap_or(1.0);
        let fit = asymptotics::midpoint_integral_exponent_for(&s, &q1, &q2, &res.minimizers[k], &profiles[k], &|_| c0, v.radius, &grid, &sc)?;
        out["fit"] = fit_json(&fit, laplace::ratio_f64(pred.exponent));
    }
    Ok(Output { main: to_json(&out), sidecar: None })
}

pub fn laplace_check(cfg: &RunConfig) -> Result<Output, CliError> {
    let p = cfg.section(&cfg.laplace_check, "laplace_check")?;
    let phase = DiagonalPhase::new(p.g0, p.m.clone())?;
    let n = phase.n();
    if p.lo.len() != n || p.hi.len() != n {
        return Err(CliError::Config(format!("box bounds must have length {n}")));
    }
    let expr = Expr::parse(&p.f)?;
    if expr.arity() > n {
        return Err(CliError::Config(format!("amplitude uses x{} but the phase has dimension {n}", expr.arity())));
    }
    let f0 = expr.eval_f64(&vec![0.0; n]);
    let f_second: Vec<f64> = (phase.ell_index - 1..n)
        .map(|i| {
            let (_, _, d2) = second_derivative(
                |x: Dual2_64| {
                    let mut v = vec![Dual2_64::from_re(0.0); n];
                    v[i] = x;
                    expr.eval(&v)
                },
                0.0,
            );
            d2
        })
        .collect();
    let grid = log_grid(p.t_min, p.t_max, p.points)?;
    let f = |x: &[f64]| expr.eval_f64(x);
    let exp = laplace::expand(f0, &f_second, &phase)?;
    let check = laplace::check_two_term(&f, f0, &f_second, &phase, &p.lo, &p.hi, p.t_check, &grid)?;
    let out = json!({
        "power": ratio_string(exp.power),
        "c1_power": ratio_string(exp.c1_power),
        "exp_factor_rate": exp.exp_factor_rate,
        "c0_term": exp.c0_term,
        "c1_term": exp.c1_term,
        "check": check,
    });
    Ok(Output { main: to_json(&out), sidecar: None })
}
