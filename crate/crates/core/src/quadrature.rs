//! Adaptive Gauss–Kronrod (7/15) quadrature in one dimension and nested
//! over boxes. Error estimates follow QUADPACK's `qk15`.

#![allow(clippy::excessive_precision)]

use crate::error::{Error, Result};
use std::cell::Cell;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadControls {
    pub rtol: f64,
    pub atol: f64,
    pub max_intervals: usize,
    /// Extra splits at `peak ± w·4^{−k}`, `k = 1..=grading`, `w` the distance
    /// from the peak to the bound. Lets panels resolve peaks far narrower
    /// than the box.
    pub grading: usize,
}

impl Default for QuadControls {
    fn default() -> Self {
        QuadControls { rtol: 1e-10, atol: 0.0, max_intervals: 2000, grading: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// One 15-point Kronrod panel on `[a, b]` with QUADPACK's error estimate.
pub fn gk15(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64) -> Estimate {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut resg = fc * WG[3];
    let mut resk = fc * WGK[7];
    let mut resabs = resk.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        resk += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }
    let reskh = resk * 0.5;
    let mut resasc = WGK[7] * (fc - reskh).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv1[j] - reskh).abs() + (fv2[j] - reskh).abs());
    }
    let hl = h.abs();
    let value = resk * h;
    resabs *= hl;
    resasc *= hl;
    let mut err = ((resk - resg) * h).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    Estimate { value, error: err }
}

struct Panel {
    a: f64,
    b: f64,
    est: Estimate,
}

impl PartialEq for Panel {
    fn eq(&self, o: &Self) -> bool {
        self.est.error == o.est.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Panel {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.est.error.total_cmp(&o.est.error)
    }
}

/// Globally adaptive integral of `f` over `[a, b]`, starting from panels
/// split at `splits` (points outside `(a, b)` are ignored).
pub fn integrate_1d(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, splits: &[f64], ctrl: &QuadControls) -> Result<Estimate> {
    if !(a.is_finite() && b.is_finite()) || a > b {
        return Err(Error::InvalidInput(format!("bad interval [{a}, {b}]")));
    }
    if a == b {
        return Ok(Estimate { value: 0.0, error: 0.0 });
    }
    let mut pts = vec![a];
    let mut inner: Vec<f64> = splits.iter().cloned().filter(|&s| s > a && s < b).collect();
    inner.sort_by(f64::total_cmp);
    pts.extend(inner);
    pts.push(b);
    let mut heap = BinaryHeap::new();
    for w in pts.windows(2) {
        heap.push(Panel { a: w[0], b: w[1], est: gk15(f, w[0], w[1]) });
    }
    let rtol = ctrl.rtol.max(50.0 * f64::EPSILON);
    let mut count = heap.len();
    loop {
        let (value, error) = heap.iter().fold((0.0, 0.0), |(v, e), p| (v + p.est.value, e + p.est.error));
        if error <= ctrl.atol.max(rtol * value.abs()) {
            return Ok(Estimate { value, error });
        }
        let worst = heap.pop().unwrap();
        let mid = 0.5 * (worst.a + worst.b);
        if count >= ctrl.max_intervals.max(4 * pts.len()) || mid <= worst.a || mid >= worst.b {
            heap.push(worst);
            let (value, error) = heap.iter().fold((0.0, 0.0), |(v, e), p| (v + p.est.value, e + p.est.error));
            // accept panels that cannot be refined further if they are at the noise floor
            if error <= 2.0 * ctrl.atol.max(rtol * value.abs()) {
                return Ok(Estimate { value, error });
            }
            return Err(Error::Quadrature { achieved: error / value.abs().max(f64::MIN_POSITIVE) });
        }
        heap.push(Panel { a: worst.a, b: mid, est: gk15(f, worst.a, mid) });
        heap.push(Panel { a: mid, b: worst.b, est: gk15(f, mid, worst.b) });
        count += 1;
    }
}

/// Nested adaptive integral of `f` over the box `[lo, hi]`. `peak`, if
/// given, is a point every axis is split at.
pub fn integrate_box(f: &dyn Fn(&[f64]) -> f64, lo: &[f64], hi: &[f64], peak: Option<&[f64]>, ctrl: &QuadControls) -> Result<Estimate> {
    let n = lo.len();
    if hi.len() != n || n == 0 {
        return Err(Error::InvalidInput("box bounds must have the same positive length".into()));
    }
    let failure = Cell::new(None::<f64>);
    let inner_err = Cell::new(0.0f64);
    let mut x = vec![0.0; n];
    let est = nest(f, lo, hi, peak, ctrl, 0, &mut x, &failure, &inner_err)?;
    if let Some(achieved) = failure.get() {
        return Err(Error::Quadrature { achieved });
    }
    Ok(est)
}

#[allow(clippy::too_many_arguments)]
fn nest(
    f: &dyn Fn(&[f64]) -> f64,
    lo: &[f64],
    hi: &[f64],
    peak: Option<&[f64]>,
    ctrl: &QuadControls,
    axis: usize,
    x: &mut Vec<f64>,
    failure: &Cell<Option<f64>>,
    inner_err: &Cell<f64>,
) -> Result<Estimate> {
    let n = lo.len();
    let mut splits = Vec::new();
    if let Some(p) = peak {
        let c = p[axis];
        splits.push(c);
        let (wl, wr) = (c - lo[axis], hi[axis] - c);
        let mut r = 1.0;
        for _ in 0..ctrl.grading {
            r *= 0.25;
            splits.push(c - wl * r);
            splits.push(c + wr * r);
        }
    }
    if axis + 1 == n {
        let mut g = |t: f64| {
            x[axis] = t;
            f(x)
        };
        return integrate_1d(&mut g, lo[axis], hi[axis], &splits, ctrl);
    }
    let mut xs = x.clone();
    let mut g = |t: f64| {
        xs[axis] = t;
        let mut sub = xs.clone();
        match nest(f, lo, hi, peak, ctrl, axis + 1, &mut sub, failure, inner_err) {
            Ok(e) => {
                inner_err.set(inner_err.get().max(e.error / e.value.abs().max(f64::MIN_POSITIVE)));
                e.value
            }
            Err(Error::Quadrature { achieved }) => {
                failure.set(Some(failure.get().unwrap_or(0.0).max(achieved)));
                0.0
            }
            Err(_) => {
                failure.set(Some(f64::INFINITY));
                0.0
            }
        }
    };
    integrate_1d(&mut g, lo[axis], hi[axis], &splits, ctrl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_exact_on_one_panel() {
        // Kronrod-15 integrates degree 22 exactly
        let e = gk15(&mut |x| x.powi(10), -1.0, 1.0);
        assert!((e.value - 2.0 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn gaussian_with_tails() {
        let t = 0.01;
        let e = integrate_1d(&mut |x| (-x * x / t).exp(), -5.0, 5.0, &[0.0], &QuadControls { rtol: 1e-13, ..Default::default() }).unwrap();
        assert!((e.value - (PI * t).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn box_integral_separable() {
        let f = |x: &[f64]| (-(x[0] * x[0]) - x[1].powi(4)).exp();
        let e = integrate_box(&f, &[-6.0, -3.0], &[6.0, 3.0], Some(&[0.0, 0.0]), &QuadControls { rtol: 1e-12, ..Default::default() }).unwrap();
        let exact = PI.sqrt() * 2.0 * libm::tgamma(1.25);
        assert!((e.value - exact).abs() < 1e-10 * exact);
    }

    #[test]
    fn endpoint_singularity_reports_or_converges() {
        let e = integrate_1d(&mut |x: f64| x.sqrt(), 0.0, 1.0, &[], &QuadControls::default()).unwrap();
        assert!((e.value - 2.0 / 3.0).abs() < 1e-9);
        let bad = integrate_1d(&mut |x: f64| 1.0 / x, 0.0, 1.0, &[], &QuadControls { max_intervals: 50, ..Default::default() });
        assert!(matches!(bad, Err(Error::Quadrature { .. })));
    }
}
