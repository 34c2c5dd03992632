//! Distances by multiple-start shooting, cut times, sampled cut loci and the
//! hinged energy `h(q) = ½(d²(q₁,q) + d²(q,q₂))` near its minimum.
//!
//! Shooting draws covectors on the unit-energy level from a low-discrepancy
//! sequence, records the closest approach of each geodesic to the target and
//! refines the most promising ones with damped Gauss–Newton steps on
//! `λ ↦ E(λ) − q₂` (pseudo-inverse, so rank-deficient Jacobians are fine).

use crate::error::{Error, Result};
use crate::flow::{self, FlowControls, GeodesicRecord};
use crate::geometry::{numeric_rank, Covector, Point, Structure};
use crate::ode::Controls;
use crate::sampling;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShootingControls {
    /// Number of initial covectors.
    pub starts: usize,
    /// Number of closest-approach candidates passed to Newton refinement.
    pub refine: usize,
    /// Arclength horizon of the coarse scan.
    pub t_max: f64,
    /// Samples per geodesic in the coarse scan.
    pub coarse_grid: usize,
    /// Absolute endpoint residual at which Newton stops.
    pub tol: f64,
    /// Residual below which a stalled Newton run still counts as a root.
    pub accept: f64,
    pub max_iter: usize,
    /// Unit covectors closer than this are the same geodesic.
    pub same_root: f64,
    /// Roots with length at most `(1 + multiplicity)·d` are minimizers.
    pub multiplicity: f64,
    pub seed: u64,
    pub ode: Controls,
    /// Output samples per minimizer record.
    pub samples: usize,
}

impl Default for ShootingControls {
    fn default() -> Self {
        ShootingControls {
            starts: 512,
            refine: 48,
            t_max: 10.0,
            coarse_grid: 256,
            tol: 1e-11,
            accept: 1e-8,
            max_iter: 40,
            same_root: 1e-5,
            multiplicity: 1e-6,
            seed: 0,
            ode: Controls::default(),
            samples: 64,
        }
    }
}

impl ShootingControls {
    /// Smaller search used inside repeated solves (cut times, loci).
    pub fn light() -> Self {
        ShootingControls { starts: 128, refine: 12, coarse_grid: 160, ..Self::default() }
    }
}

#[derive(Clone, Debug)]
pub struct DistanceResult {
    pub d: f64,
    pub minimizers: Vec<GeodesicRecord>,
    /// Minimizers come in a continuous family; asymptotic predictions refuse these.
    pub non_discrete: bool,
}

#[derive(Clone, Debug)]
struct Root {
    lam: DVector<f64>,
    length: f64,
    jac: DMatrix<f64>,
}

fn pinv_solve(j: &DMatrix<f64>, r: &DVector<f64>) -> DVector<f64> {
    let svd = j.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cut = 1e-10 * smax;
    let u = svd.u.as_ref().unwrap();
    let vt = svd.v_t.as_ref().unwrap();
    let mut out = DVector::zeros(j.ncols());
    for (i, &sv) in svd.singular_values.iter().enumerate() {
        if sv > cut {
            let c = u.column(i).dot(r) / sv;
            out += vt.row(i).transpose() * c;
        }
    }
    out
}

/// Damped Gauss–Newton from `lam` towards `E_{q1}(λ) = q2`.
fn newton(s: &Structure, q1: &[f64], q2: &[f64], lam: DVector<f64>, c: &ShootingControls) -> Option<Root> {
    let eval = |l: &DVector<f64>| -> Option<(DVector<f64>, DMatrix<f64>)> {
        let (q, _, j) = flow::shoot(s, q1, l, true, &c.ode).ok()?;
        let r = s.displacement(q2, q.as_slice());
        r.iter().all(|x| x.is_finite()).then(|| (r, j.unwrap()))
    };
    let scale = q2.iter().fold(1.0f64, |a, x| a.max(x.abs()));
    let tol = c.tol * scale;
    let mut lam = lam;
    let (mut r, mut jac) = eval(&lam)?;
    let mut rn = r.norm();
    for _ in 0..c.max_iter {
        if rn < tol {
            break;
        }
        let mut step = -pinv_solve(&jac, &r);
        // trust region: never more than the current covector size (plus one)
        let limit = lam.norm() + 1.0;
        if step.norm() > limit {
            step *= limit / step.norm();
        }
        let mut accepted = false;
        let mut alpha = 1.0;
        for _ in 0..30 {
            let trial = &lam + &step * alpha;
            if let Some((rt, jt)) = eval(&trial) {
                let rtn = rt.norm();
                if rtn < rn {
                    lam = trial;
                    r = rt;
                    jac = jt;
                    rn = rtn;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if !(rn < c.accept * scale) {
        return None;
    }
    let length = (2.0 * s.hamiltonian_raw(q1, &lam)).sqrt();
    Some(Root { lam, length, jac })
}

/// Closest approach of the unit-speed geodesic with initial covector `unit`:
/// the best `(score, t)` among local minima of the residual, where the
/// score `t + 2·residual` prefers short near-hits.
fn closest_approach(s: &Structure, q1: &[f64], q2: &[f64], unit: &DVector<f64>, c: &ShootingControls) -> Option<(f64, f64)> {
    let n = s.n;
    let m = c.coarse_grid.max(4);
    let times: Vec<f64> = (0..=m).map(|i| c.t_max * i as f64 / m as f64).collect();
    let mut res = Vec::with_capacity(m + 1);
    let coarse = Controls { rtol: 1e-8, atol: 1e-10, ..c.ode };
    let mut y = Vec::with_capacity(2 * n);
    y.extend_from_slice(q1);
    y.extend_from_slice(unit.as_slice());
    let start = flow::ChartState { chart: 0, y };
    let out = flow::propagate(
        s,
        0.0,
        start,
        c.t_max,
        &coarse,
        &times,
        |t, st| {
            let q = flow::to_chart0(s, st);
            res.push((t, s.displacement(q2, &q.y[..n]).norm()));
        },
        None,
    );
    if out.is_err() && res.len() < 3 {
        return None;
    }
    let mut best: Option<(f64, f64)> = None;
    for i in 1..res.len() {
        let (t, r) = res[i];
        let is_min = r <= res[i - 1].1 && (i + 1 == res.len() || r <= res[i + 1].1);
        if is_min && r.is_finite() {
            let score = t + 2.0 * r;
            if best.is_none_or(|(b, _)| score < b) {
                best = Some((score, t));
            }
        }
    }
    best
}

fn unit_of(r: &Root) -> DVector<f64> {
    &r.lam / r.length
}

fn record(s: &Structure, q1: &Point, root: &Root, c: &ShootingControls) -> Result<GeodesicRecord> {
    let lambda0 = Covector(unit_of(root));
    let fc = FlowControls { ode: c.ode, samples: c.samples, ..FlowControls::default() };
    let samples = flow::flow(s, q1, &lambda0, root.length, &fc)?;
    Ok(GeodesicRecord { lambda0, q0: q1.clone(), samples, t_conj: None, t_cut: None, end_jacobian: root.jac.clone() })
}

/// All roots found, sorted by length, deduplicated.
fn shooting_roots(s: &Structure, q1: &[f64], q2: &[f64], hints: &[DVector<f64>], c: &ShootingControls) -> Vec<Root> {
    let n = s.n;
    let dirs = sampling::sphere_directions(c.starts, n, c.seed);
    let p1 = DVector::from_column_slice(q1);
    let mut cands: Vec<(f64, DVector<f64>)> = dirs
        .par_iter()
        .filter_map(|u| {
            let u = DVector::from_column_slice(u);
            let (unit, _) = flow::normalize(s, p1.as_slice(), &u).ok()?;
            if !unit.iter().all(|x| x.is_finite()) || unit.norm() > 1e6 {
                return None;
            }
            let (score, t) = closest_approach(s, q1, q2, &unit, c)?;
            Some((score, unit * t))
        })
        .collect();
    cands.sort_by(|a, b| a.0.total_cmp(&b.0));
    cands.truncate(c.refine);
    let mut starts: Vec<DVector<f64>> = hints.to_vec();
    starts.extend(cands.into_iter().map(|(_, l)| l));
    let mut roots: Vec<Root> = starts.into_par_iter().filter_map(|l| newton(s, q1, q2, l, c)).collect();
    roots.sort_by(|a, b| a.length.total_cmp(&b.length).then_with(|| lex_cmp(&a.lam, &b.lam)));
    let mut uniq: Vec<Root> = Vec::new();
    for r in roots {
        let u = unit_of(&r);
        if uniq.iter().all(|o| (unit_of(o) - &u).norm() >= c.same_root) {
            uniq.push(r);
        }
    }
    uniq
}

fn lex_cmp(a: &DVector<f64>, b: &DVector<f64>) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        let o = x.total_cmp(y);
        if o.is_ne() {
            return o;
        }
    }
    std::cmp::Ordering::Equal
}

/// Whether the best root sits in a continuous family: Newton restarted from
/// small perturbations lands on different equal-length roots.
fn continuum_probe(s: &Structure, q1: &[f64], q2: &[f64], best: &Root, d: f64, c: &ShootingControls) -> bool {
    let sv = best.jac.clone().svd(false, false).singular_values;
    if sv.min() > 1e-4 * sv.max() {
        return false;
    }
    let u0 = unit_of(best);
    let probes = sampling::sphere_directions(6, s.n, c.seed.wrapping_add(1));
    probes.par_iter().any(|w| {
        let start = &best.lam + DVector::from_column_slice(w) * (1e-2 * best.lam.norm());
        match newton(s, q1, q2, start, c) {
            Some(r) => r.length <= d * (1.0 + c.multiplicity) && (unit_of(&r) - &u0).norm() > 1e-4,
            None => false,
        }
    })
}

fn distance_impl(s: &Structure, q1: &Point, q2: &Point, hints: &[DVector<f64>], c: &ShootingControls) -> Result<DistanceResult> {
    s.check_point(q1.as_slice())?;
    s.check_point(q2.as_slice())?;
    if s.displacement(q1.as_slice(), q2.as_slice()).norm() == 0.0 {
        return Err(Error::InvalidInput("distance needs two distinct points".into()));
    }
    let roots = shooting_roots(s, q1.as_slice(), q2.as_slice(), hints, c);
    let Some(best) = roots.first() else {
        return Err(Error::NotFound(format!(
            "{} starts within arclength {}; enlarge the search",
            c.starts, c.t_max
        )));
    };
    let d = best.length;
    let minimal: Vec<&Root> = roots.iter().filter(|r| r.length <= d * (1.0 + c.multiplicity)).collect();
    let non_discrete = continuum_probe(s, q1.as_slice(), q2.as_slice(), best, d, c);
    let minimizers = minimal
        .par_iter()
        .map(|r| record(s, q1, r, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(DistanceResult { d, minimizers, non_discrete })
}

/// `d(q1, q2)` with every minimizing geodesic the search finds.
pub fn distance(s: &Structure, q1: &Point, q2: &Point, search: &ShootingControls) -> Result<DistanceResult> {
    distance_impl(s, q1, q2, &[], search)
}

/// As [`distance`], with extra initial covectors (full scale, not unit)
/// added to the refinement pool.
pub fn distance_with_hints(
    s: &Structure,
    q1: &Point,
    q2: &Point,
    hints: &[Covector],
    search: &ShootingControls,
) -> Result<DistanceResult> {
    let h: Vec<DVector<f64>> = hints.iter().map(|c| c.0.clone()).collect();
    distance_impl(s, q1, q2, &h, search)
}

/// Distance by Newton from a single initial covector, for points near a
/// known minimizer. Returns the length and the converged covector.
pub fn local_distance(s: &Structure, q1: &[f64], q2: &[f64], warm: &DVector<f64>, search: &ShootingControls) -> Result<(f64, DVector<f64>)> {
    if s.displacement(q1, q2).norm() == 0.0 {
        return Ok((0.0, DVector::zeros(s.n)));
    }
    newton(s, q1, q2, warm.clone(), search)
        .map(|r| (r.length, r.lam))
        .ok_or_else(|| Error::NotFound("local shooting did not converge".into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CutInfo {
    pub t_cut: Option<f64>,
    pub t_conj: Option<f64>,
    pub cut_equals_conjugate: bool,
}

/// Cut time along `t ↦ E(tλ₀)`: the earlier of the first conjugate time and
/// the first time a shorter competitor reaches the endpoint. Times are in
/// the parametrization of `lam0` (rescaled if `H ≠ ½`).
pub fn cut_time(s: &Structure, q0: &Point, lam0: &Covector, t_max: f64, search: &ShootingControls) -> Result<CutInfo> {
    s.check_point(q0.as_slice())?;
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::InvalidInput(format!("t_max must be positive, got {t_max}")));
    }
    let (unit, speed) = flow::normalize(s, q0.as_slice(), &lam0.0)?;
    let t_conj = flow::first_conjugate_time(s, q0, &Covector(unit.clone()), t_max * speed)?;
    let upper = t_conj.unwrap_or(t_max * speed);
    let optimal = |t: f64| -> Result<bool> {
        let (q, _, _) = flow::shoot(s, q0.as_slice(), &(&unit * t), false, &search.ode)?;
        let c = ShootingControls { t_max: (1.5 * t).max(1.0), ..*search };
        let res = distance_impl(s, q0, &Point(q), &[&unit * t], &c)?;
        Ok(res.d >= t * (1.0 - 1e-9) - 1e-12)
    };
    let equal = |a: f64, b: f64| (a - b).abs() <= 1e-7 * a.abs().max(1.0);
    if optimal(upper * (1.0 - 1e-6))? {
        return Ok(CutInfo {
            t_cut: t_conj.map(|t| t / speed),
            t_conj: t_conj.map(|t| t / speed),
            cut_equals_conjugate: t_conj.is_some(),
        });
    }
    let grid = 12;
    let mut lo = 0.0;
    let mut hi = upper;
    for i in 1..=grid {
        let t = upper * i as f64 / grid as f64 * if i == grid { 1.0 - 1e-6 } else { 1.0 };
        if optimal(t)? {
            lo = t;
        } else {
            hi = t;
            break;
        }
    }
    while hi - lo > 1e-8 * upper.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if optimal(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t_cut = 0.5 * (lo + hi);
    Ok(CutInfo {
        t_cut: Some(t_cut / speed),
        t_conj: t_conj.map(|t| t / speed),
        cut_equals_conjugate: t_conj.is_some_and(|tc| equal(tc, t_cut)),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CutLocusRow {
    /// Hyperspherical angles of the initial unit covector direction.
    pub theta: Vec<f64>,
    pub t_cut: Option<f64>,
    pub t_conj: Option<f64>,
    /// `E(t_cut λ₀)`, or the conjugate point if only that is known.
    pub endpoint: Option<Vec<f64>>,
}

/// Cut and conjugate times for `directions` initial covector directions.
pub fn cut_locus(s: &Structure, q0: &Point, directions: usize, t_max: f64, search: &ShootingControls) -> Result<Vec<CutLocusRow>> {
    let n = s.n;
    let dirs: Vec<Vec<f64>> = if n == 2 {
        (0..directions)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / directions as f64;
                vec![a.cos(), a.sin()]
            })
            .collect()
    } else {
        sampling::sphere_directions(directions, n, search.seed)
    };
    dirs.par_iter()
        .map(|u| {
            let raw = DVector::from_column_slice(u);
            let (unit, _) = flow::normalize(s, q0.as_slice(), &raw)?;
            let lam = Covector(unit.clone());
            let info = cut_time(s, q0, &lam, t_max, search)?;
            let endpoint = match info.t_cut.or(info.t_conj) {
                Some(t) => Some(flow::exp_map(s, q0, &lam, t)?.0.as_slice().to_vec()),
                None => None,
            };
            Ok(CutLocusRow { theta: sampling::hyperspherical_angles(u), t_cut: info.t_cut, t_conj: info.t_conj, endpoint })
        })
        .collect()
}

/// `½(d²(q1,q) + d²(q,q2))`, with global distance searches.
pub fn hinged(s: &Structure, q1: &Point, q2: &Point, q: &Point, search: &ShootingControls) -> Result<f64> {
    let dist = |a: &Point, b: &Point| -> Result<f64> {
        if s.displacement(a.as_slice(), b.as_slice()).norm() == 0.0 {
            Ok(0.0)
        } else {
            Ok(distance(s, a, b, search)?.d)
        }
    };
    let d1 = dist(q1, q)?;
    let d2 = dist(q, q2)?;
    Ok(0.5 * (d1 * d1 + d2 * d2))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProfileControls {
    /// Expected absolute noise of one evaluation of the function.
    pub noise: f64,
    /// Eigenvalues below `rank_tol · λ_max` count as zero.
    pub rank_tol: f64,
    /// Largest kernel offset used by order detection.
    pub probe_radius: f64,
    /// Number of radius halvings in order detection.
    pub halvings: usize,
}

impl Default for ProfileControls {
    fn default() -> Self {
        ProfileControls { noise: 1e-12, rank_tol: 1e-4, probe_radius: 0.1, halvings: 7 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrderEvidence {
    pub radii: Vec<f64>,
    /// Symmetrized valley values `φ(t) = min_w h(z0 + t v + w) − h_min`.
    pub valley: Vec<f64>,
    pub slopes: Vec<f64>,
}

/// Second-order data of a function at a minimum.
#[derive(Clone, Debug)]
pub struct MinimumAnalysis {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
    pub eigenvalues: DVector<f64>,
    /// Eigenvectors with nonzero eigenvalue, in decreasing order of eigenvalue.
    pub range_basis: Vec<DVector<f64>>,
    pub kernel_basis: Vec<DVector<f64>>,
    pub r: usize,
    /// `m` with `m + 1` the order of the valley along the kernel (r = 1 only).
    pub m: Option<u32>,
    pub evidence: Option<OrderEvidence>,
}

fn fd_hessian(f: &dyn Fn(&[f64]) -> Result<f64>, z: &[f64], f0: f64, step: f64) -> Result<DMatrix<f64>> {
    let n = z.len();
    let at = |d: &[(usize, f64)]| -> Result<f64> {
        let mut x = z.to_vec();
        for &(i, v) in d {
            x[i] += v;
        }
        f(&x)
    };
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        h[(i, i)] = (at(&[(i, step)])? - 2.0 * f0 + at(&[(i, -step)])?) / (step * step);
        for j in 0..i {
            let v = (at(&[(i, step), (j, step)])? - at(&[(i, step), (j, -step)])? - at(&[(i, -step), (j, step)])?
                + at(&[(i, -step), (j, -step)])?)
                / (4.0 * step * step);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    Ok(h)
}

/// The complement-minimized function `φ(τ) = min_w f(z0 + Kτ + Rw) − f0`,
/// with `K`, `R` the kernel and range bases. Returns `(φ, w)`.
fn valley(
    f: &dyn Fn(&[f64]) -> Result<f64>,
    z0: &[f64],
    f0: f64,
    a: &MinimumAnalysis,
    tau: &[f64],
    warm: Option<&DVector<f64>>,
    noise: f64,
) -> Result<(f64, DVector<f64>)> {
    let nr = a.range_basis.len();
    let mut base = DVector::from_column_slice(z0);
    for (t, k) in tau.iter().zip(&a.kernel_basis) {
        base += k * *t;
    }
    let point = |w: &DVector<f64>| -> DVector<f64> {
        let mut x = base.clone();
        for (wi, e) in w.iter().zip(&a.range_basis) {
            x += e * *wi;
        }
        x
    };
    let mut w = warm.cloned().unwrap_or_else(|| DVector::zeros(nr));
    let gstep = noise.powf(1.0 / 3.0).max(1e-6);
    for _ in 0..12 {
        let mut dw = DVector::zeros(nr);
        for i in 0..nr {
            let mut wp = w.clone();
            wp[i] += gstep;
            let mut wm = w.clone();
            wm[i] -= gstep;
            let g = (f(point(&wp).as_slice())? - f(point(&wm).as_slice())?) / (2.0 * gstep);
            dw[i] = -g / a.eigenvalues[i];
        }
        w += &dw;
        if dw.norm() < 1e-10 {
            break;
        }
    }
    Ok((f(point(&w).as_slice())? - f0, w))
}

/// Gradient, Hessian, rank deficit and (when `r = 1`) the valley order of a
/// function at a presumed minimum `z0`.
pub fn analyze_minimum(f: &dyn Fn(&[f64]) -> Result<f64>, z0: &[f64], ctrl: &ProfileControls) -> Result<MinimumAnalysis> {
    let n = z0.len();
    let f0 = f(z0)?;
    let scale = z0.iter().fold(1.0f64, |a, x| a.max(x.abs()));
    let gstep = ctrl.noise.powf(1.0 / 3.0) * scale;
    let mut gradient = DVector::zeros(n);
    for i in 0..n {
        let mut zp = z0.to_vec();
        zp[i] += gstep;
        let mut zm = z0.to_vec();
        zm[i] -= gstep;
        gradient[i] = (f(&zp)? - f(&zm)?) / (2.0 * gstep);
    }
    // central differences, Richardson-extrapolated once
    let hstep = ctrl.noise.powf(1.0 / 6.0) * scale;
    let h1 = fd_hessian(f, z0, f0, hstep)?;
    let h2 = fd_hessian(f, z0, f0, 2.0 * hstep)?;
    let hessian = (h1 * 4.0 - h2) / 3.0;
    let eig = SymmetricEigen::new(hessian.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lmax = eig.eigenvalues[order[0]].max(0.0);
    let lmin = eig.eigenvalues[order[n - 1]];
    if lmin < -(1e-8f64).max(10.0 * ctrl.rank_tol * lmax) {
        return Err(Error::Inconsistency(format!(
            "Hessian has eigenvalue {lmin:e}; the point is not a minimum"
        )));
    }
    let threshold = ctrl.rank_tol * lmax.max(1e-300);
    let mut range_basis = Vec::new();
    let mut kernel_basis = Vec::new();
    let mut eigenvalues = Vec::new();
    for &i in &order {
        let v = eig.eigenvectors.column(i).clone_owned();
        if eig.eigenvalues[i] > threshold {
            range_basis.push(v);
            eigenvalues.push(eig.eigenvalues[i]);
        } else {
            kernel_basis.push(v);
        }
    }
    let r = kernel_basis.len();
    let mut a = MinimumAnalysis {
        value: f0,
        gradient,
        hessian,
        eigenvalues: DVector::from_vec(eigenvalues),
        range_basis,
        kernel_basis,
        r,
        m: None,
        evidence: None,
    };
    if r == 1 {
        let (m, ev) = valley_order(f, z0, f0, &a, ctrl)?;
        a.m = m;
        a.evidence = Some(ev);
    }
    Ok(a)
}

fn valley_order(
    f: &dyn Fn(&[f64]) -> Result<f64>,
    z0: &[f64],
    f0: f64,
    a: &MinimumAnalysis,
    ctrl: &ProfileControls,
) -> Result<(Option<u32>, OrderEvidence)> {
    let mut radii = Vec::new();
    let mut vals = Vec::new();
    let mut warm_p: Option<DVector<f64>> = None;
    let mut warm_m: Option<DVector<f64>> = None;
    for k in 0..=ctrl.halvings {
        let t = ctrl.probe_radius * 0.5f64.powi(k as i32);
        let (vp, wp) = valley(f, z0, f0, a, &[t], warm_p.as_ref(), ctrl.noise)?;
        let (vm, wm) = valley(f, z0, f0, a, &[-t], warm_m.as_ref(), ctrl.noise)?;
        // the valley shrinks at least linearly with t
        warm_p = Some(wp * 0.5);
        warm_m = Some(wm * 0.5);
        radii.push(t);
        vals.push(0.5 * (vp + vm));
    }
    let floor = 1e3 * ctrl.noise.max(f64::EPSILON * f0.abs());
    let mut slopes = Vec::new();
    for k in 0..ctrl.halvings {
        if vals[k] > floor && vals[k + 1] > floor {
            slopes.push((vals[k] / vals[k + 1]).log2());
        }
    }
    let m = slopes.last().map(|&s| {
        let order = (2.0 * (s / 2.0).round()).max(2.0) as u32;
        order - 1
    });
    Ok((m, OrderEvidence { radii, valley: vals, slopes }))
}

/// Two-sided bound check `c_lo Σx² ≤ f − f0 ≤ c_hi (Σx² + Σy⁴)` in splitting
/// coordinates: `y` along the kernel, `x` the Hessian-scaled offset from
/// the valley bottom.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SandwichReport {
    pub lower: f64,
    pub upper: f64,
    pub radius: f64,
    pub samples: usize,
    pub holds: bool,
}

pub fn sandwich_check(
    f: &dyn Fn(&[f64]) -> Result<f64>,
    z0: &[f64],
    a: &MinimumAnalysis,
    radius: f64,
    samples: usize,
    ctrl: &ProfileControls,
) -> Result<SandwichReport> {
    let n = z0.len();
    let r = a.r;
    let nr = n - r;
    let pts = sampling::halton(samples, n, 11);
    let mut lower = f64::INFINITY;
    let mut upper: f64 = 0.0;
    for u in pts {
        let tau: Vec<f64> = (0..r).map(|j| radius * (2.0 * u[j] - 1.0)).collect();
        let x: DVector<f64> = DVector::from_iterator(nr, (0..nr).map(|i| radius * (2.0 * u[r + i] - 1.0)));
        let (_, w) = valley(f, z0, a.value, a, &tau, None, ctrl.noise)?;
        // offset from the valley bottom, scaled so Σx² is the quadratic part
        let mut z = DVector::from_column_slice(z0);
        for (t, k) in tau.iter().zip(&a.kernel_basis) {
            z += k * *t;
        }
        let mut sx = 0.0;
        for i in 0..nr {
            let wi = w[i] + x[i];
            z += &a.range_basis[i] * wi;
            sx += 0.5 * a.eigenvalues[i] * x[i] * x[i];
        }
        let val = f(z.as_slice())? - a.value;
        let sy: f64 = tau.iter().map(|t| t.powi(4)).sum();
        if sx > 1e3 * ctrl.noise {
            lower = lower.min(val / sx);
        }
        if sx + sy > 1e3 * ctrl.noise {
            upper = upper.max(val / (sx + sy));
        }
    }
    let holds = lower.is_finite() && lower > 0.25 && upper < 4.0;
    Ok(SandwichReport { lower, upper, radius, samples, holds })
}

#[derive(Clone, Debug)]
pub struct HingedProfile {
    pub z0: Point,
    pub h_min: f64,
    /// `d(q1, q2)` along the supplied minimizer.
    pub d: f64,
    pub hessian: DMatrix<f64>,
    pub gradient: DVector<f64>,
    pub r: usize,
    pub m: Option<u32>,
    pub kernel_basis: Vec<DVector<f64>>,
    pub evidence: Option<OrderEvidence>,
    /// Rank deficit of `D_{2λ}E_{q1}` with the same relative tolerance.
    pub dexp_rank_deficit: usize,
    /// Initial covector `2λ` (full length) of the minimizer.
    pub covector: DVector<f64>,
    /// `F(z₀)·∏ (λᵢ/2)^{-1/2}` over the nonzero Hessian eigenvalues: the
    /// density in coordinates where the quadratic part of `h` is `Σ xᵢ²`.
    pub nondegenerate_factor: f64,
    /// Leading coefficient `c` of the valley `φ(t) ≈ c t^{m+1}` (r = 1 only).
    pub valley_coefficient: Option<f64>,
}

/// The hinged energy near a local minimizer, evaluated with warm-started
/// local shooting from both endpoints.
pub struct LocalHinged<'a> {
    s: &'a Structure,
    q1: Vec<f64>,
    q2: Vec<f64>,
    warm1: DVector<f64>,
    warm2: DVector<f64>,
    search: ShootingControls,
}

impl LocalHinged<'_> {
    pub fn eval(&self, z: &[f64]) -> Result<f64> {
        let (d1, _) = local_distance(self.s, &self.q1, z, &self.warm1, &self.search)?;
        let (d2, _) = local_distance(self.s, &self.q2, z, &self.warm2, &self.search)?;
        Ok(0.5 * (d1 * d1 + d2 * d2))
    }
}

/// Midpoint `z0`, minimizer covector and a local evaluator of `h` around it.
pub fn local_hinged<'a>(
    s: &'a Structure,
    q1: &Point,
    q2: &Point,
    g: &GeodesicRecord,
    search: &ShootingControls,
) -> Result<(Point, f64, DVector<f64>, LocalHinged<'a>)> {
    let Some(last) = g.samples.last() else {
        return Err(Error::InvalidInput("geodesic record has no samples".into()));
    };
    let search = ShootingControls { tol: 1e-13, accept: 1e-9, ..*search };
    // polish the full covector so that E(λ) = q2 to the Newton tolerance
    let guess = &g.lambda0.0 * last.t;
    let root = newton(s, q1.as_slice(), q2.as_slice(), guess, &search)
        .ok_or_else(|| Error::Precondition("the geodesic does not reach q2".into()))?;
    let d = root.length;
    let half = &root.lam * 0.5;
    let (z0, _, _) = flow::shoot(s, q1.as_slice(), &half, false, &search.ode)?;
    // reverse covector at q2: minus the final momentum
    let (_, p_end, _) = flow::shoot(s, q1.as_slice(), &root.lam, false, &search.ode)?;
    let warm2 = -p_end * 0.5;
    let lh = LocalHinged {
        s,
        q1: q1.as_slice().to_vec(),
        q2: q2.as_slice().to_vec(),
        warm1: half,
        warm2,
        search,
    };
    Ok((Point(z0), d, root.lam, lh))
}

/// Hessian data and degenerate order of `h` at the midpoint of `g`.
pub fn midpoint_profile(
    s: &Structure,
    q1: &Point,
    q2: &Point,
    g: &GeodesicRecord,
    search: &ShootingControls,
    ctrl: &ProfileControls,
) -> Result<HingedProfile> {
    let (z0, d, lam, lh) = local_hinged(s, q1, q2, g, search)?;
    let f = |z: &[f64]| lh.eval(z);
    let a = analyze_minimum(&f, z0.as_slice(), ctrl)?;
    let (_, _, j) = flow::shoot(s, q1.as_slice(), &lam, true, &search.ode)?;
    let dexp_rank_deficit = s.n - numeric_rank(&j.unwrap(), ctrl.rank_tol);
    let mut eig: Vec<f64> = a.eigenvalues.iter().cloned().collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    let nondegenerate_factor = s.density(z0.as_slice()) * eig[..s.n - a.r].iter().map(|l| (0.5 * l).powf(-0.5)).product::<f64>();
    let valley_coefficient = match (&a.evidence, a.m) {
        (Some(ev), Some(m)) => ev
            .valley
            .iter()
            .zip(&ev.radii)
            .rev()
            .find(|(v, _)| **v > 1e3 * ctrl.noise)
            .map(|(v, t)| v / t.powi(m as i32 + 1)),
        _ => None,
    };
    Ok(HingedProfile {
        z0,
        h_min: a.value,
        d,
        hessian: a.hessian,
        gradient: a.gradient,
        r: a.r,
        m: a.m,
        kernel_basis: a.kernel_basis,
        evidence: a.evidence,
        dexp_rank_deficit,
        covector: lam,
        nondegenerate_factor,
        valley_coefficient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use std::f64::consts::PI;

    fn st(name: &str, p: serde_json::Value) -> Structure {
        Structure::builtin(name, &p).unwrap()
    }

    #[test]
    fn euclidean_distance_is_norm() {
        let s = st("euclidean", json!({"n": 3}));
        let r = distance(&s, &Point::new([0.0; 3]), &Point::new([1.0, 2.0, 2.0]), &ShootingControls::light()).unwrap();
        assert!((r.d - 3.0).abs() < 1e-9);
        assert_eq!(r.minimizers.len(), 1);
        assert!(!r.non_discrete);
        let end = r.minimizers[0].samples.last().unwrap();
        assert!((end.q[0] - 1.0).abs() < 1e-7 && (end.q[2] - 2.0).abs() < 1e-7);
    }

    #[test]
    fn same_point_rejected() {
        let s = st("euclidean", json!({"n": 2}));
        let p = Point::new([1.0, 1.0]);
        assert!(matches!(distance(&s, &p, &p, &ShootingControls::light()), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn hinged_one_dimensional() {
        let s = st("euclidean", json!({"n": 1}));
        let c = ShootingControls::light();
        let (q1, q2) = (Point::new([0.0]), Point::new([2.0]));
        assert!((hinged(&s, &q1, &q2, &Point::new([1.0]), &c).unwrap() - 1.0).abs() < 1e-9);
        assert!((hinged(&s, &q1, &q2, &Point::new([0.0]), &c).unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn euclidean_profile_is_nondegenerate() {
        let s = st("euclidean", json!({"n": 2}));
        let c = ShootingControls::light();
        let (q1, q2) = (Point::new([0.0, 0.0]), Point::new([1.0, 0.5]));
        let r = distance(&s, &q1, &q2, &c).unwrap();
        let prof = midpoint_profile(&s, &q1, &q2, &r.minimizers[0], &c, &ProfileControls::default()).unwrap();
        assert_eq!(prof.r, 0);
        assert_eq!(prof.m, None);
        assert!((prof.h_min - r.d * r.d / 4.0).abs() < 1e-9);
        // h = |z - mid|² + d²/4, Hessian 2I
        assert!((prof.hessian.clone() - DMatrix::identity(2, 2) * 2.0).amax() < 1e-5);
        assert!((prof.z0.0[0] - 0.5).abs() < 1e-9 && (prof.z0.0[1] - 0.25).abs() < 1e-9);
    }

    #[test]
    fn valley_order_of_polynomial() {
        // x² + y⁶ after a rotation: r = 1, m = 5
        let (c, s) = (0.6f64, 0.8f64);
        let f = |z: &[f64]| -> Result<f64> {
            let x = c * z[0] + s * z[1];
            let y = -s * z[0] + c * z[1];
            Ok(0.25 + x * x + y.powi(6) + x * y * y * y)
        };
        let ctrl = ProfileControls { noise: 1e-16, probe_radius: 0.2, ..Default::default() };
        let a = analyze_minimum(&f, &[0.0, 0.0], &ctrl).unwrap();
        assert_eq!(a.r, 1);
        assert_eq!(a.m, Some(5), "{:?}", a.evidence);
        let rep = sandwich_check(&f, &[0.0, 0.0], &a, 0.1, 64, &ctrl).unwrap();
        assert!(rep.holds, "{rep:?}");
    }

    #[test]
    fn indefinite_hessian_is_inconsistent() {
        let f = |z: &[f64]| -> Result<f64> { Ok(z[0] * z[0] - z[1] * z[1]) };
        assert!(matches!(
            analyze_minimum(&f, &[0.0, 0.0], &ProfileControls { noise: 1e-16, ..Default::default() }),
            Err(Error::Inconsistency(_))
        ));
    }

    #[test]
    fn sphere_cut_time_is_pi() {
        let s = st("round_sphere", json!({"radius": 1.0}));
        let q0 = Point::new([0.3, -0.2]);
        let lam = Covector(flow::normalize(&s, q0.as_slice(), &DVector::from_vec(vec![1.0, 0.4])).unwrap().0);
        let info = cut_time(&s, &q0, &lam, 5.0, &ShootingControls::light()).unwrap();
        assert!((info.t_cut.unwrap() - PI).abs() < 1e-6, "{info:?}");
        assert!(info.cut_equals_conjugate);
    }

    #[test]
    fn euclidean_cut_time_absent() {
        let s = st("euclidean", json!({"n": 2}));
        let info = cut_time(&s, &Point::new([0.0, 0.0]), &Covector::new([1.0, 0.0]), 3.0, &ShootingControls::light()).unwrap();
        assert_eq!(info.t_cut, None);
        assert!(!info.cut_equals_conjugate);
    }
}
