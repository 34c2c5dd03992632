//! Small-time heat-kernel predictions from midpoint classifications, and
//! their numerical check through the midpoint integral
//! `(2/t)^n ∫ e^{−(h−h_min)/t} c₀c₀ F dz`.

use crate::distance::{self, HingedProfile, ShootingControls};
use crate::error::{Error, Result};
use crate::geometry::{Point, Structure};
use crate::laplace::{leading_constant_ci, loglog_fit, LogLogFit};
use crate::quadrature::{integrate_box, QuadControls};
use num_rational::Ratio;
use serde::Serialize;
use std::cell::RefCell;

/// One minimizing geodesic as seen from its midpoint. `m = 1` encodes a
/// nondegenerate midpoint (no conjugate point).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeodesicClassification {
    pub m: u32,
    /// Volume density at the midpoint in coordinates where `h` has its
    /// normal form.
    pub f_zi: f64,
    /// `c₀(q₁,z)·c₀(z,q₂)`, unavailable for sub-Riemannian structures.
    pub c0_product: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Smooth,
    Ogrande,
    Bounds,
}

/// `p_t ≈ (C + O(t^{remainder})) / t^{exponent}`.
#[derive(Clone, Debug, PartialEq)]
pub struct AsymptoticPrediction {
    pub n: usize,
    pub exponent: Ratio<i64>,
    pub leading_c: Option<f64>,
    pub remainder_power: Ratio<i64>,
    pub regime: Regime,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundsPrediction {
    pub lower_exponent: Ratio<i64>,
    pub upper_exponent: Ratio<i64>,
    pub r: usize,
}

/// `"p/q"`, or `"p"` for integers.
pub fn ratio_string(r: Ratio<i64>) -> String {
    if *r.denom() == 1 {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Exponent `(n+1)/2 − 1/(ℓ+1)` for the largest type `ℓ` among the
/// minimizers, summing the leading constants of the dominant ones.
pub fn predict(n: usize, classifications: &[GeodesicClassification]) -> Result<AsymptoticPrediction> {
    if classifications.is_empty() {
        return Err(Error::Precondition("no minimizing geodesics given".into()));
    }
    if n == 0 {
        return Err(Error::InvalidInput("dimension must be positive".into()));
    }
    if let Some(c) = classifications.iter().find(|c| c.m % 2 == 0 || c.m == 0) {
        return Err(Error::InvalidInput(format!("m = {} is not odd: not a minimizing midpoint", c.m)));
    }
    let ell = classifications.iter().map(|c| c.m).max().unwrap();
    let l1 = ell as i64 + 1;
    let exponent = Ratio::new(n as i64 + 1, 2) - Ratio::new(1, l1);
    let remainder_power = Ratio::new(2, l1);
    let mut leading = Some(0.0);
    for c in classifications.iter().filter(|c| c.m == ell) {
        leading = match (leading, c.c0_product) {
            (Some(acc), Some(c0)) => Some(acc + leading_constant_ci(c.f_zi, c0, 1.0, n, ell)?),
            _ => None,
        };
    }
    let regime = if ell == 1 { Regime::Smooth } else { Regime::Ogrande };
    Ok(AsymptoticPrediction { n, exponent, leading_c: leading, remainder_power, regime })
}

/// Two-sided exponents `n/2 + r/4 ≤ · ≤ n/2 + r/2` for a Hessian rank
/// deficit `r` at a unique midpoint.
pub fn predict_bounds(n: usize, r: usize) -> Result<BoundsPrediction> {
    if n == 0 || r >= n {
        return Err(Error::InvalidInput(format!("rank deficit {r} must lie in 0..{n}")));
    }
    let half = Ratio::new(n as i64, 2);
    Ok(BoundsPrediction { lower_exponent: half + Ratio::new(r as i64, 4), upper_exponent: half + Ratio::new(r as i64, 2), r })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentFit {
    pub grid: Vec<f64>,
    /// `e^{h_min/t}(2/t)^n ∫ e^{−h/t} w dz` on the grid.
    pub values: Vec<f64>,
    pub slope: f64,
    pub r2: f64,
    /// `−slope`, comparable with a predicted exponent.
    pub exponent: f64,
}

/// Integrates the midpoint integral over the box `[lo, hi]` for each `t`
/// and fits its power law (weights `1/t`). `h` may fail; the first error
/// is returned.
#[allow(clippy::too_many_arguments)]
pub fn midpoint_integral_exponent(
    h: &dyn Fn(&[f64]) -> Result<f64>,
    h_min: f64,
    weight: &dyn Fn(&[f64]) -> f64,
    lo: &[f64],
    hi: &[f64],
    peak: &[f64],
    t_grid: &[f64],
    rtol: f64,
) -> Result<ExponentFit> {
    let n = lo.len();
    if t_grid.len() < 6 {
        return Err(Error::InvalidInput(format!("need at least 6 grid times, got {}", t_grid.len())));
    }
    let (tmin, tmax) = t_grid.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &t| (a.min(t), b.max(t)));
    if !(tmin > 0.0 && tmax <= 0.1) {
        return Err(Error::InvalidInput("grid times must lie in (0, 0.1]".into()));
    }
    if tmax / tmin < 100.0 {
        return Err(Error::InvalidInput("grid must span at least two decades".into()));
    }
    let reach = (0..n).map(|i| (peak[i] - lo[i]).max(hi[i] - peak[i])).fold(0.0, f64::max);
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let mut values = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let integrand = |z: &[f64]| match h(z) {
            Ok(v) => (-(v - h_min) / t).exp() * weight(z),
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        };
        // graded splits down to a tenth of the narrowest Gaussian width √t
        let grading = ((reach / (0.1 * t.sqrt())).log(4.0).ceil().max(0.0) as usize).min(20);
        let est = integrate_box(&integrand, lo, hi, Some(peak), &QuadControls { rtol, grading, ..Default::default() });
        if let Some(e) = failure.borrow_mut().take() {
            return Err(e);
        }
        values.push((2.0 / t).powi(n as i32) * est?.value);
    }
    let w: Vec<f64> = t_grid.iter().map(|t| 1.0 / t).collect();
    let LogLogFit { slope, r2, .. } = loglog_fit(t_grid, &values, &w)?;
    if r2 < 0.999 {
        return Err(Error::FitQuality { r2, slope });
    }
    Ok(ExponentFit { grid: t_grid.to_vec(), values, slope, r2, exponent: -slope })
}

/// The midpoint integral of a structure's own hinged energy around a
/// profiled midpoint, over the box `z₀ ± radius`.
#[allow(clippy::too_many_arguments)]
pub fn midpoint_integral_exponent_for(
    s: &Structure,
    q1: &Point,
    q2: &Point,
    minimizer: &crate::flow::GeodesicRecord,
    profile: &HingedProfile,
    c0_product: &dyn Fn(&[f64]) -> f64,
    radius: f64,
    t_grid: &[f64],
    search: &ShootingControls,
) -> Result<ExponentFit> {
    if profile.r > 1 {
        return Err(Error::Precondition(format!("rank deficit {} > 1", profile.r)));
    }
    let (_, _, _, lh) = distance::local_hinged(s, q1, q2, minimizer, search)?;
    let z0 = profile.z0.as_slice();
    let lo: Vec<f64> = z0.iter().map(|z| z - radius).collect();
    let hi: Vec<f64> = z0.iter().map(|z| z + radius).collect();
    let weight = |z: &[f64]| c0_product(z) * s.density(z);
    midpoint_integral_exponent(&|z| lh.eval(z), profile.h_min, &weight, &lo, &hi, z0, t_grid, 1e-6)
}

/// Leading Ben Arous coefficient `c₀(q₁, z)`: the reciprocal square root
/// of the Jacobian of the exponential map between metric volumes.
pub fn ben_arous_c0(s: &Structure, q1: &Point, z: &Point, search: &ShootingControls) -> Result<f64> {
    if !s.is_riemannian() {
        return Err(Error::Unsupported("c0 for sub-Riemannian structures".into()));
    }
    let res = distance::distance(s, q1, z, search)?;
    if res.non_discrete || res.minimizers.len() != 1 {
        return Err(Error::Domain(format!("{} minimizers reach z: it lies on the cut locus", res.minimizers.len())));
    }
    let g = &res.minimizers[0];
    if let Some(tc) = g.t_conj {
        if tc <= res.d * (1.0 + 1e-9) {
            return Err(Error::Domain("z is at or beyond the first conjugate point".into()));
        }
    }
    let jac = g.end_jacobian.determinant().abs();
    let vol = (s.metric(q1.as_slice())?.determinant() * s.metric(z.as_slice())?.determinant()).sqrt();
    let j = jac * vol;
    if !(j > 0.0) {
        return Err(Error::Domain("exponential map is singular at z".into()));
    }
    Ok(j.powf(-0.5))
}

/// Reads `m` and the normal-form density off a midpoint profile. `r = 0`
/// gives `m = 1`; `r = 1` needs an odd detected order.
pub fn classification_from_profile(profile: &HingedProfile, c0_product: Option<f64>) -> Result<GeodesicClassification> {
    match profile.r {
        0 => Ok(GeodesicClassification { m: 1, f_zi: profile.nondegenerate_factor, c0_product }),
        1 => {
            let m = profile.m.ok_or_else(|| Error::Inconsistency("valley order was not detected".into()))?;
            if m % 2 == 0 {
                return Err(Error::Inconsistency(format!("valley order m = {m} is even at a minimum")));
            }
            let c = profile.valley_coefficient.ok_or_else(|| Error::Inconsistency("valley coefficient missing".into()))?;
            let f_zi = profile.nondegenerate_factor * c.powf(-1.0 / (m as f64 + 1.0));
            Ok(GeodesicClassification { m, f_zi, c0_product })
        }
        r => Err(Error::Unsupported(format!("rank deficit {r}: only exponent bounds are available"))),
    }
}
