//! Normal geodesic flow, exponential map, its differential and conjugate times.
//!
//! With `u = F(q) p` the Hamiltonian is `½|u|²` and the equations read
//! `q̇ = Fᵀu`, `ṗ_j = −uᵀ(∂_j F) p`. The variational system is carried along
//! as two n×n blocks `(∂q/∂p₀, ∂p/∂p₀)` starting from `(0, I)`.
//!
//! Integration hops charts when the atlas asks for it; everything returned
//! to callers is expressed in chart 0.

use crate::error::{Error, Result};
use crate::geometry::{Atlas, Covector, Point, Structure};
use crate::ode::{self, Controls, Dense, Step};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowControls {
    pub ode: Controls,
    /// Number of uniform output intervals on `[0, T]`.
    pub samples: usize,
    /// Grid size of the conjugate-time scan.
    pub conj_grid: usize,
}

impl Default for FlowControls {
    fn default() -> Self {
        FlowControls { ode: Controls::default(), samples: 200, conj_grid: 400 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlowState {
    pub t: f64,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct GeodesicRecord {
    /// Initial covector normalized to `H = 1/2`.
    pub lambda0: Covector,
    pub q0: Point,
    pub samples: Vec<FlowState>,
    pub t_conj: Option<f64>,
    pub t_cut: Option<f64>,
    /// `D(tλ₀)E_{q₀}` at the final time.
    pub end_jacobian: DMatrix<f64>,
}

struct Rhs<'a> {
    s: &'a Structure,
    variational: bool,
}

impl ode::System for Rhs<'_> {
    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let n = self.s.n;
        let k = self.s.k;
        let q = &y[..n];
        let p = DVector::from_column_slice(&y[n..2 * n]);
        let jet = if self.variational { self.s.frame_jet2(q) } else { self.s.frame_jet(q) };
        let f = &jet.values;
        let u = f * &p;
        let qdot = f.transpose() * &u;
        // a_j = (∂_j F) p
        let a: Vec<DVector<f64>> = jet.first_derivs.iter().map(|d| d * &p).collect();
        dy[..n].copy_from_slice(qdot.as_slice());
        for j in 0..n {
            dy[n + j] = -u.dot(&a[j]);
        }
        if !self.variational {
            return;
        }
        let second = jet.second_derivs.as_ref().expect("second derivatives");
        // linearization A = [[A_qq, A_qp], [A_pq, A_pp]]
        let mut lin = DMatrix::<f64>::zeros(2 * n, 2 * n);
        let ftf = f.transpose() * f;
        for j in 0..n {
            let dj = &jet.first_derivs[j];
            let col = dj.transpose() * &u + f.transpose() * &a[j];
            for i in 0..n {
                lin[(i, j)] = col[i];
            }
            // ∂ṗ_j/∂p
            for i in 0..n {
                lin[(n + j, n + i)] = -col[i];
            }
            for l in 0..n {
                let djl = &second[j * n + l] * &p;
                let mut v = 0.0;
                for r in 0..k {
                    v += a[l][r] * a[j][r] + u[r] * djl[r];
                }
                lin[(n + j, l)] = -v;
            }
        }
        lin.view_mut((0, n), (n, n)).copy_from(&ftf);
        let base = 2 * n;
        let jq = DMatrix::from_column_slice(n, n, &y[base..base + n * n]);
        let jp = DMatrix::from_column_slice(n, n, &y[base + n * n..base + 2 * n * n]);
        let mut stacked = DMatrix::zeros(2 * n, n);
        stacked.view_mut((0, 0), (n, n)).copy_from(&jq);
        stacked.view_mut((n, 0), (n, n)).copy_from(&jp);
        let d = lin * stacked;
        let dq = d.view((0, 0), (n, n)).clone_owned();
        let dp = d.view((n, 0), (n, n)).clone_owned();
        dy[base..base + n * n].copy_from_slice(dq.as_slice());
        dy[base + n * n..].copy_from_slice(dp.as_slice());
    }
}

/// A state in a given chart.
#[derive(Clone, Debug)]
pub(crate) struct ChartState {
    pub chart: usize,
    pub y: Vec<f64>,
}

/// One accepted step with its continuous extension.
pub(crate) struct Segment {
    pub chart: usize,
    pub t1: f64,
    pub dense: Dense,
}

fn switch_chart(atlas: &Atlas, n: usize, st: &ChartState) -> ChartState {
    let q = DVector::from_column_slice(&st.y[..n]);
    let p = DVector::from_column_slice(&st.y[n..2 * n]);
    let (qn, pn, t) = atlas.transition(&q, &p);
    let mut y = st.y.clone();
    y[..n].copy_from_slice(qn.as_slice());
    y[n..2 * n].copy_from_slice(pn.as_slice());
    if st.y.len() > 2 * n {
        let base = 2 * n;
        let mut stacked = DMatrix::zeros(2 * n, n);
        stacked.view_mut((0, 0), (n, n)).copy_from(&DMatrix::from_column_slice(n, n, &st.y[base..base + n * n]));
        stacked
            .view_mut((n, 0), (n, n))
            .copy_from(&DMatrix::from_column_slice(n, n, &st.y[base + n * n..]));
        let moved = t * stacked;
        y[base..base + n * n].copy_from_slice(moved.view((0, 0), (n, n)).clone_owned().as_slice());
        y[base + n * n..].copy_from_slice(moved.view((n, 0), (n, n)).clone_owned().as_slice());
    }
    ChartState { chart: 1 - st.chart, y }
}

/// Expresses a state in chart 0.
pub(crate) fn to_chart0(s: &Structure, st: &ChartState) -> ChartState {
    if st.chart == 0 {
        st.clone()
    } else {
        switch_chart(&s.atlas(), s.n, st)
    }
}

/// Sign of the Jacobian determinant of the transition out of `chart`.
fn orientation(atlas: &Atlas, chart: usize) -> f64 {
    match (atlas, chart) {
        (Atlas::Inversion { .. }, 1) => -1.0,
        _ => 1.0,
    }
}

/// Integrates from `(t0, start)` to `t_end`, hopping charts as needed.
/// `sample_times` (sorted, within `[t0, t_end]`) are reported through `sink`
/// in the chart that was active; `segments`, if given, receives every step.
pub(crate) fn propagate(
    s: &Structure,
    t0: f64,
    start: ChartState,
    t_end: f64,
    ctrl: &Controls,
    sample_times: &[f64],
    mut sink: impl FnMut(f64, &ChartState),
    mut segments: Option<&mut Vec<Segment>>,
) -> Result<ChartState> {
    let n = s.n;
    let atlas = s.atlas();
    let variational = start.y.len() > 2 * n;
    let rhs = Rhs { s, variational };
    let want_dense = !sample_times.is_empty() || segments.is_some();
    let mut t = t0;
    let mut st = start;
    let mut next_sample = sample_times.partition_point(|&ts| ts < t0);
    while next_sample < sample_times.len() && sample_times[next_sample] <= t0 {
        sink(sample_times[next_sample], &st);
        next_sample += 1;
    }
    loop {
        let chart = st.chart;
        let mut switch = false;
        let (t_stop, y_stop) = ode::integrate(&rhs, t, &st.y, t_end, ctrl, want_dense, |info| {
            if let Some(d) = info.dense {
                while next_sample < sample_times.len() && sample_times[next_sample] <= info.t_new {
                    let ts = sample_times[next_sample];
                    let y = if ts == info.t_new { info.y_new.to_vec() } else { d.eval(ts) };
                    sink(ts, &ChartState { chart, y });
                    next_sample += 1;
                }
                if let Some(segs) = segments.as_deref_mut() {
                    segs.push(Segment { chart, t1: info.t_new, dense: d.clone() });
                }
            }
            if atlas.should_switch(&info.y_new[..n]) {
                switch = true;
                Step::Stop
            } else {
                Step::Continue
            }
        })?;
        t = t_stop;
        st = ChartState { chart, y: y_stop };
        if t >= t_end {
            return Ok(st);
        }
        if switch {
            st = switch_chart(&atlas, n, &st);
        }
    }
}

/// `(λ/√(2H), √(2H))`; rejects covectors with `H = 0`.
pub fn normalize(s: &Structure, q: &[f64], lam: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    if lam.len() != s.n {
        return Err(Error::InvalidInput(format!("covector has length {}, expected {}", lam.len(), s.n)));
    }
    if lam.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("non-finite covector".into()));
    }
    if lam.iter().all(|&x| x == 0.0) {
        return Err(Error::InvalidInput("zero covector".into()));
    }
    let h = s.hamiltonian_raw(q, lam);
    if !(h > 1e-300) {
        return Err(Error::InvalidInput("covector annihilates the distribution (H = 0)".into()));
    }
    let speed = (2.0 * h).sqrt();
    Ok((lam / speed, speed))
}

fn initial(n: usize, q0: &[f64], p0: &DVector<f64>, variational: bool) -> ChartState {
    let mut y = Vec::with_capacity(if variational { 2 * n + 2 * n * n } else { 2 * n });
    y.extend_from_slice(q0);
    y.extend_from_slice(p0.as_slice());
    if variational {
        y.extend(std::iter::repeat_n(0.0, n * n));
        let eye = DMatrix::<f64>::identity(n, n);
        y.extend_from_slice(eye.as_slice());
    }
    ChartState { chart: 0, y }
}

/// Samples `(q(t), p(t))` on a uniform grid of `ctrl.samples` intervals.
pub fn flow(s: &Structure, q0: &Point, p0: &Covector, t_end: f64, ctrl: &FlowControls) -> Result<Vec<FlowState>> {
    s.check_point(q0.as_slice())?;
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidInput(format!("final time must be positive, got {t_end}")));
    }
    normalize(s, q0.as_slice(), &p0.0)?;
    let n = s.n;
    let m = ctrl.samples.max(1);
    let times: Vec<f64> = (0..=m).map(|i| t_end * i as f64 / m as f64).collect();
    let mut out = Vec::with_capacity(m + 1);
    // keep steps no longer than the sample spacing so interpolated samples
    // are as accurate as step endpoints
    let ode_ctrl = Controls { h_max: ctrl.ode.h_max.min(t_end / m as f64), ..ctrl.ode };
    let res = propagate(
        s,
        0.0,
        initial(n, q0.as_slice(), &p0.0, false),
        t_end,
        &ode_ctrl,
        &times,
        |t, st| {
            let c0 = to_chart0(s, st);
            out.push(FlowState { t, q: c0.y[..n].to_vec(), p: c0.y[n..2 * n].to_vec() });
        },
        None,
    );
    match res {
        Ok(_) => Ok(out),
        Err(Error::Integration { t, reason, .. }) => Err(Error::Integration {
            t,
            reason,
            partial: out
                .iter()
                .map(|f| std::iter::once(f.t).chain(f.q.iter().cloned()).chain(f.p.iter().cloned()).collect())
                .collect(),
        }),
        Err(e) => Err(e),
    }
}

/// Endpoint of `p₀ = lam` after time 1, optionally with the variational blocks,
/// all in chart 0.
pub(crate) fn shoot(
    s: &Structure,
    q0: &[f64],
    lam: &DVector<f64>,
    variational: bool,
    ctrl: &Controls,
) -> Result<(DVector<f64>, DVector<f64>, Option<DMatrix<f64>>)> {
    let n = s.n;
    let end = propagate(s, 0.0, initial(n, q0, lam, variational), 1.0, ctrl, &[], |_, _| {}, None)?;
    let end = to_chart0(s, &end);
    let q = DVector::from_column_slice(&end.y[..n]);
    let p = DVector::from_column_slice(&end.y[n..2 * n]);
    let jac = variational.then(|| DMatrix::from_column_slice(n, n, &end.y[2 * n..2 * n + n * n]));
    Ok((q, p, jac))
}

/// `E_{q₀}(t·lam)`.
pub fn exp_map(s: &Structure, q0: &Point, lam: &Covector, t: f64) -> Result<Point> {
    s.check_point(q0.as_slice())?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidInput(format!("time must be nonnegative, got {t}")));
    }
    let (unit, speed) = normalize(s, q0.as_slice(), &lam.0)?;
    if t == 0.0 {
        return Ok(q0.clone());
    }
    let (q, _, _) = shoot(s, q0.as_slice(), &(unit * (speed * t)), false, &Controls::default())?;
    Ok(Point(q))
}

/// Jacobian of `λ ↦ E_{q₀}(λ)` at `lam`, from the variational flow.
pub fn d_exp(s: &Structure, q0: &Point, lam: &Covector) -> Result<DMatrix<f64>> {
    s.check_point(q0.as_slice())?;
    normalize(s, q0.as_slice(), &lam.0)?;
    let (_, _, j) = shoot(s, q0.as_slice(), &lam.0, true, &Controls::default())?;
    Ok(j.unwrap())
}

/// Hadamard-normalized `det(∂q/∂p₀)` with the chart orientation folded in.
fn conj_indicator(s: &Structure, st: &ChartState) -> f64 {
    let n = s.n;
    let jq = DMatrix::from_column_slice(n, n, &st.y[2 * n..2 * n + n * n]);
    let norms: f64 = jq.column_iter().map(|c| c.norm()).product();
    if norms == 0.0 {
        return 0.0;
    }
    orientation(&s.atlas(), st.chart) * jq.determinant() / norms
}

/// First conjugate time along `t ↦ E(tλ₀)` in `(0, t_max]`, using a
/// `grid`-point sign scan and bisection on the dense output.
pub fn first_conjugate_time_with(
    s: &Structure,
    q0: &Point,
    lam0: &Covector,
    t_max: f64,
    grid: usize,
    ctrl: &Controls,
) -> Result<Option<f64>> {
    s.check_point(q0.as_slice())?;
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::InvalidInput(format!("t_max must be positive, got {t_max}")));
    }
    let (unit, speed) = normalize(s, q0.as_slice(), &lam0.0)?;
    // integrate the unit-speed geodesic up to the rescaled horizon
    let horizon = t_max * speed;
    let grid = grid.max(2);
    let times: Vec<f64> = (1..=grid).map(|i| horizon * i as f64 / grid as f64).collect();
    let mut segs = Vec::new();
    let mut values = Vec::with_capacity(grid);
    propagate(
        s,
        0.0,
        initial(s.n, q0.as_slice(), &unit, true),
        horizon,
        ctrl,
        &times,
        |t, st| values.push((t, conj_indicator(s, st))),
        Some(&mut segs),
    )?;
    let reference = values[0].1.signum();
    let Some(idx) = values.iter().position(|&(_, v)| v.signum() != reference) else {
        return Ok(None);
    };
    let (mut lo, mut hi) = (if idx == 0 { 0.0 } else { values[idx - 1].0 }, values[idx].0);
    if values[idx].1 == 0.0 {
        return Ok(Some(hi / speed));
    }
    let eval = |t: f64| -> f64 {
        let k = segs.partition_point(|sg| sg.t1 < t).min(segs.len() - 1);
        let sg = &segs[k];
        conj_indicator(s, &ChartState { chart: sg.chart, y: sg.dense.eval(t) })
    };
    while hi - lo > 1e-12 * horizon.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if eval(mid).signum() == reference {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi) / speed))
}

pub fn first_conjugate_time(s: &Structure, q0: &Point, lam0: &Covector, t_max: f64) -> Result<Option<f64>> {
    first_conjugate_time_with(s, q0, lam0, t_max, FlowControls::default().conj_grid, &Controls::default())
}

/// Samples, conjugate time and end Jacobian of the geodesic `t ↦ E(tλ₀)`
/// on `[0, t_end]`. The cut time is left empty (see the distance module).
pub fn geodesic(s: &Structure, q0: &Point, lam0: &Covector, t_end: f64, ctrl: &FlowControls) -> Result<GeodesicRecord> {
    let (unit, _) = normalize(s, q0.as_slice(), &lam0.0)?;
    let lambda0 = Covector(unit);
    let samples = flow(s, q0, &lambda0, t_end, ctrl)?;
    let t_conj = first_conjugate_time_with(s, q0, &lambda0, t_end, ctrl.conj_grid, &ctrl.ode)?;
    let (_, _, j) = shoot(s, q0.as_slice(), &(&lambda0.0 * t_end), true, &ctrl.ode)?;
    Ok(GeodesicRecord { lambda0, q0: q0.clone(), samples, t_conj, t_cut: None, end_jacobian: j.unwrap() })
}

/// Largest `|H − H(0)|` over the samples.
pub fn energy_drift(s: &Structure, samples: &[FlowState]) -> f64 {
    let h = |f: &FlowState| s.hamiltonian_raw(&f.q, &DVector::from_column_slice(&f.p));
    let Some(first) = samples.first() else { return 0.0 };
    let h0 = h(first);
    samples.iter().map(|f| (h(f) - h0).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use std::f64::consts::PI;

    fn st(name: &str) -> Structure {
        Structure::builtin(name, &json!({})).unwrap()
    }

    #[test]
    fn euclidean_straight_line() {
        let s = st("euclidean");
        let out = flow(&s, &Point::new([0.0, 0.0]), &Covector::new([1.0, 0.0]), 2.0, &FlowControls::default()).unwrap();
        let last = out.last().unwrap();
        assert!((last.q[0] - 2.0).abs() < 1e-12 && last.q[1].abs() < 1e-12);
        assert_eq!(last.p, vec![1.0, 0.0]);
        assert_eq!(out.len(), 201);
    }

    #[test]
    fn heisenberg_horizontal_line_and_circle() {
        let s = st("heisenberg");
        let e = exp_map(&s, &Point::new([0.0; 3]), &Covector::new([1.0, 0.0, 0.0]), 1.0).unwrap();
        assert!((e.0 - DVector::from_vec(vec![1.0, 0.0, 0.0])).amax() < 1e-12);
        // p_z = c closes the projected circle at t = 2π/c
        let c = 1.3;
        let lam = Covector::new([0.6, 0.8, c]);
        let q = exp_map(&s, &Point::new([0.0; 3]), &lam, 2.0 * PI / c).unwrap();
        assert!(q.0[0].abs() < 1e-9 && q.0[1].abs() < 1e-9);
        // enclosed area: z = π / c² for a unit-speed loop of length 2π/c
        assert!((q.0[2] - PI / (c * c)).abs() < 1e-9, "{}", q.0[2]);
    }

    #[test]
    fn sphere_great_circles_close() {
        let s = st("round_sphere");
        let q0 = Point::new([0.3, -0.2]);
        for ang in [0.1, 1.0, 2.5, 4.0] {
            let raw = DVector::from_vec(vec![f64::cos(ang), f64::sin(ang)]);
            let lam = Covector(normalize(&s, q0.as_slice(), &raw).unwrap().0);
            let out = flow(&s, &q0, &lam, 2.0 * PI, &FlowControls::default()).unwrap();
            let last = out.last().unwrap();
            assert!((last.q[0] - 0.3).abs() < 1e-8 && (last.q[1] + 0.2).abs() < 1e-8);
            let drift = energy_drift(&s, &out);
            assert!(drift < 1e-9, "{drift}");
        }
    }

    #[test]
    fn variational_matches_finite_differences() {
        let s = st("heisenberg");
        let q0 = Point::new([0.1, -0.2, 0.3]);
        let lam = Covector::new([0.7, -0.4, 1.1]);
        let j = d_exp(&s, &q0, &lam).unwrap();
        let h = 1e-6;
        for c in 0..3 {
            let mut lp = lam.0.clone();
            lp[c] += h;
            let mut lm = lam.0.clone();
            lm[c] -= h;
            let (qp, _, _) = shoot(&s, q0.as_slice(), &lp, false, &Controls::default()).unwrap();
            let (qm, _, _) = shoot(&s, q0.as_slice(), &lm, false, &Controls::default()).unwrap();
            let fd = (qp - qm) / (2.0 * h);
            assert!((fd - j.column(c)).norm() < 1e-6 * j.norm());
        }
    }

    #[test]
    fn conjugate_times() {
        let e = st("euclidean");
        assert_eq!(first_conjugate_time(&e, &Point::new([0.0, 0.0]), &Covector::new([1.0, 0.0]), 10.0).unwrap(), None);
        let s = st("round_sphere");
        let q0 = Point::new([0.3, -0.2]);
        let lam = Covector(normalize(&s, q0.as_slice(), &DVector::from_vec(vec![0.2, 0.5])).unwrap().0);
        let t = first_conjugate_time(&s, &q0, &lam, 5.0).unwrap().unwrap();
        assert!((t - PI).abs() < 1e-6, "{t}");
        let h = st("heisenberg");
        let lam = Covector::new([0.6, 0.8, 1.5]);
        let t = first_conjugate_time(&h, &Point::new([0.0; 3]), &lam, 8.0).unwrap().unwrap();
        assert!((t - 2.0 * PI / 1.5).abs() < 1e-6, "{t}");
    }

    #[test]
    fn zero_covector_rejected() {
        let s = st("heisenberg");
        assert!(matches!(
            exp_map(&s, &Point::new([0.0; 3]), &Covector::new([0.0; 3]), 1.0),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            flow(&s, &Point::new([0.0; 3]), &Covector::new([1.0, 0.0, 0.0]), -1.0, &FlowControls::default()),
            Err(Error::InvalidInput(_))
        ));
    }
}
