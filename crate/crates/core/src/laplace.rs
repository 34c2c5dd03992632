//! Two-term small-`t` expansion of Laplace integrals with diagonal phase
//! `g(x) = g(0) + Σ x_i^{2m_i}`, a brute-force quadrature oracle, and the
//! leading heat-kernel constant built from the same Gamma factors.

use crate::error::{Error, Result};
use crate::quadrature::{integrate_box, Estimate, QuadControls};
use num_rational::Ratio;

/// Γ(x) for real `x` (musl's Lanczos-based `tgamma`).
pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalPhase {
    pub g0: f64,
    pub m_list: Vec<u32>,
    /// 1-based `ℓ`: smallest index with `m_ℓ = m_n`.
    pub ell_index: usize,
}

impl DiagonalPhase {
    pub fn new(g0: f64, m_list: Vec<u32>) -> Result<Self> {
        if m_list.is_empty() || m_list.contains(&0) {
            return Err(Error::InvalidInput("m_list must be nonempty with entries ≥ 1".into()));
        }
        if m_list.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidInput(format!("m_list must be nondecreasing, got {m_list:?}")));
        }
        if !g0.is_finite() {
            return Err(Error::InvalidInput("g0 must be finite".into()));
        }
        let top = *m_list.last().unwrap();
        let ell_index = m_list.iter().position(|&m| m == top).unwrap() + 1;
        Ok(DiagonalPhase { g0, m_list, ell_index })
    }

    pub fn n(&self) -> usize {
        self.m_list.len()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.g0 + x.iter().zip(&self.m_list).map(|(xi, &m)| xi.powi(2 * m as i32)).sum::<f64>()
    }
}

/// `∫ f e^{−g/t} ≈ e^{−g₀/t} t^{power} (c₀ + c₁ t^{c1_power})`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpansionResult {
    pub exp_factor_rate: f64,
    pub power: Ratio<i64>,
    pub c0_term: f64,
    pub c1_term: f64,
    pub c1_power: Ratio<i64>,
}

impl ExpansionResult {
    /// The two-term approximation without the exponential factor.
    pub fn eval_scaled(&self, t: f64) -> f64 {
        let p = ratio_f64(self.power);
        let q = ratio_f64(self.c1_power);
        t.powf(p) * (self.c0_term + self.c1_term * t.powf(q))
    }
}

pub fn ratio_f64(r: Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// `∫ e^{−x^{2m}/t} dx = t^{1/2m} Γ(1/2m)/m`, the one-dimensional factor.
fn axis_factor(m: u32) -> f64 {
    let m = m as f64;
    gamma(1.0 / (2.0 * m)) / m
}

/// Two-term expansion. `f_second` holds `∂²f/∂x_ξ²(0)` for `ξ = ℓ..n`.
pub fn expand(f0: f64, f_second: &[f64], phase: &DiagonalPhase) -> Result<ExpansionResult> {
    let n = phase.n();
    let ell = phase.ell_index;
    if f_second.len() != n - ell + 1 {
        return Err(Error::InvalidInput(format!("need {} second derivatives (indices {ell}..{n}), got {}", n - ell + 1, f_second.len())));
    }
    let mn = phase.m_list[n - 1];
    let power = phase.m_list.iter().map(|&m| Ratio::new(1, 2 * m as i64)).sum();
    let c0_term = phase.m_list.iter().map(|&m| axis_factor(m)).product::<f64>() * f0;
    let lower: f64 = phase.m_list[..n - 1].iter().map(|&m| axis_factor(m)).product();
    let mnf = mn as f64;
    // x² moment along a top-order axis, with the ½ of the Taylor term
    let c1_term = gamma(3.0 / (2.0 * mnf)) / (2.0 * mnf) * lower * f_second.iter().sum::<f64>();
    Ok(ExpansionResult { exp_factor_rate: phase.g0, power, c0_term, c1_term, c1_power: Ratio::new(1, mn as i64) })
}

/// `e^{g(0)/t} ∫_D f e^{−g/t}` by nested adaptive quadrature, split at the
/// origin. The rescaling keeps values representable for small `t`.
pub fn quadrature_oracle(f: &dyn Fn(&[f64]) -> f64, g: &dyn Fn(&[f64]) -> f64, lo: &[f64], hi: &[f64], t: f64, rtol: f64) -> Result<Estimate> {
    if !(t > 0.0) {
        return Err(Error::InvalidInput(format!("t must be positive, got {t}")));
    }
    if lo.len() != hi.len() || lo.iter().zip(hi).any(|(a, b)| !(*a < 0.0 && *b > 0.0)) {
        return Err(Error::InvalidInput("box must contain the origin in its interior".into()));
    }
    let origin = vec![0.0; lo.len()];
    let g0 = g(&origin);
    let integrand = |x: &[f64]| f(x) * (-(g(x) - g0) / t).exp();
    integrate_box(&integrand, lo, hi, Some(&origin), &QuadControls { rtol, ..Default::default() })
}

/// `F(z) c₀(q₁,z) c₀(z,q₂) · 4/(m+1) · (4π)^{(n−1)/2} · Γ(1/(m+1))`.
pub fn leading_constant_ci(f_zi: f64, c0_left: f64, c0_right: f64, n: usize, m: u32) -> Result<f64> {
    if m.is_multiple_of(2) {
        return Err(Error::InvalidInput(format!("m = {m} is even: such a point cannot be a minimizing midpoint")));
    }
    if !(f_zi > 0.0 && c0_left > 0.0 && c0_right > 0.0) || n == 0 {
        return Err(Error::InvalidInput("density and c0 factors must be positive".into()));
    }
    let m1 = (m + 1) as f64;
    Ok(f_zi * c0_left * c0_right * 4.0 / m1 * (4.0 * std::f64::consts::PI).powf((n as f64 - 1.0) / 2.0) * gamma(1.0 / m1))
}

/// Result of a weighted least-squares line fit in log–log coordinates.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Fits `log y = intercept + slope · log t` with weights `w`.
pub fn loglog_fit(ts: &[f64], ys: &[f64], w: &[f64]) -> Result<LogLogFit> {
    if ts.len() < 2 || ts.len() != ys.len() || ts.len() != w.len() {
        return Err(Error::InvalidInput("fit needs at least two matching points".into()));
    }
    if ys.iter().any(|y| !(*y > 0.0)) || ts.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::InvalidInput("log-log fit needs positive data".into()));
    }
    let x: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let y: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..x.len() {
        sxx += w[i] * (x[i] - mx).powi(2);
        sxy += w[i] * (x[i] - mx) * (y[i] - my);
        syy += w[i] * (y[i] - my).powi(2);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LogLogFit { slope, intercept, r2 })
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct TwoTermCheck {
    pub c0_formula: f64,
    /// `oracle(t)/t^{power}` at the check time, Richardson-extrapolated in
    /// powers of `t^{1/m_n}`.
    pub c0_extrapolated: f64,
    pub c0_rel_error: f64,
    /// Slope of `|oracle − two-term|` against `t`, or `None` when the
    /// residual is below the quadrature error on the whole grid.
    pub residual_exponent: Option<f64>,
    /// `power + 1/m_n`.
    pub residual_threshold: f64,
    /// Grid points whose residual rose above the quadrature error.
    pub residual_points: usize,
}

/// Compares the oracle with the expansion: Richardson estimate of the
/// leading coefficient at `t_check`, and the residual exponent over
/// `t_grid`. `lo`, `hi` bound the integration box.
pub fn check_two_term(
    f: &dyn Fn(&[f64]) -> f64,
    f0: f64,
    f_second: &[f64],
    phase: &DiagonalPhase,
    lo: &[f64],
    hi: &[f64],
    t_check: f64,
    t_grid: &[f64],
) -> Result<TwoTermCheck> {
    let exp = expand(f0, f_second, phase)?;
    let g = |x: &[f64]| phase.eval(x);
    let p = ratio_f64(exp.power);
    let q = ratio_f64(exp.c1_power);
    let rtol = 1e-13;

    // L(t) = c₀ + c₁ t^q + c₂ t^{2q} + ...; remove the first two corrections
    let l = |t: f64| -> Result<f64> { Ok(quadrature_oracle(f, &g, lo, hi, t, rtol)?.value / t.powf(p)) };
    let (l0, l1, l2) = (l(t_check)?, l(t_check / 2.0)?, l(t_check / 4.0)?);
    let r = 2f64.powf(q);
    let a0 = (r * l1 - l0) / (r - 1.0);
    let a1 = (r * l2 - l1) / (r - 1.0);
    let r2 = r * r;
    let c0_extrapolated = (r2 * a1 - a0) / (r2 - 1.0);
    let c0_rel_error = ((c0_extrapolated - exp.c0_term) / exp.c0_term).abs();

    let mut ts = Vec::new();
    let mut rs = Vec::new();
    for &t in t_grid {
        let est = quadrature_oracle(f, &g, lo, hi, t, rtol)?;
        let resid = (est.value - exp.eval_scaled(t)).abs();
        if resid > 10.0 * est.error.max(f64::EPSILON * est.value.abs()) {
            ts.push(t);
            rs.push(resid);
        }
    }
    let residual_exponent = if ts.len() >= 3 {
        let w = vec![1.0; ts.len()];
        Some(loglog_fit(&ts, &rs, &w)?.slope)
    } else {
        None
    };
    Ok(TwoTermCheck {
        c0_formula: exp.c0_term,
        c0_extrapolated,
        c0_rel_error,
        residual_exponent,
        residual_threshold: p + q,
        residual_points: ts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn gamma_values() {
        assert!((gamma(0.5) - PI.sqrt()).abs() < 1e-14);
        for i in 1..50 {
            let z = 0.1 * i as f64;
            assert!((gamma(z + 1.0) - z * gamma(z)).abs() < 1e-13 * gamma(z + 1.0));
        }
    }

    #[test]
    fn gaussian_expansion() {
        let ph = DiagonalPhase::new(0.0, vec![1]).unwrap();
        let e = expand(1.0, &[0.0], &ph).unwrap();
        assert!((e.c0_term - PI.sqrt()).abs() < 1e-15);
        assert_eq!(e.power, Ratio::new(1, 2));
    }

    #[test]
    fn quartic_and_product() {
        let ph = DiagonalPhase::new(0.0, vec![2]).unwrap();
        let e = expand(1.0, &[0.0], &ph).unwrap();
        assert!((e.c0_term - 1.812_804_954_110_954).abs() < 1e-14);
        assert_eq!(e.power, Ratio::new(1, 4));
        let ph = DiagonalPhase::new(0.0, vec![1, 2]).unwrap();
        assert_eq!(ph.ell_index, 2);
        let e = expand(1.0, &[0.0], &ph).unwrap();
        assert!((e.c0_term - PI.sqrt() * gamma(0.25) / 2.0).abs() < 1e-14);
        assert_eq!(e.power, Ratio::new(3, 4));
        assert_eq!(e.c1_power, Ratio::new(1, 2));
    }

    #[test]
    fn unsorted_phase_rejected() {
        assert!(matches!(DiagonalPhase::new(0.0, vec![2, 1]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn oracle_examples() {
        let one = |_: &[f64]| 1.0;
        let e = quadrature_oracle(&one, &|x| x[0] * x[0], &[-5.0], &[5.0], 0.01, 1e-13).unwrap();
        assert!((e.value - (PI * 0.01).sqrt()).abs() < 1e-12);
        let e = quadrature_oracle(&one, &|x| x[0].powi(4), &[-3.0], &[3.0], 0.01, 1e-10).unwrap();
        let formula = gamma(0.25) / 2.0 * 0.01f64.powf(0.25);
        assert!((e.value / formula - 1.0).abs() < 1e-6);
    }

    #[test]
    fn oracle_box_independence() {
        let f = |x: &[f64]| 1.0 + x[0] * x[0];
        let g = |x: &[f64]| x[0].powi(4);
        let t = 0.01;
        // e^{−g/t} < 1e-16 once x⁴ > 0.37
        let a = quadrature_oracle(&f, &g, &[-1.0], &[1.0], t, 1e-14).unwrap().value;
        let b = quadrature_oracle(&f, &g, &[-2.0], &[3.0], t, 1e-14).unwrap().value;
        assert!((a - b).abs() < 1e-12 * a);
    }

    #[test]
    fn second_term_from_oracle() {
        // f = 1 + x², g = x⁴: the expansion is exact, so (I − c₀t^{1/4})/t^{3/4} = c₁
        let ph = DiagonalPhase::new(0.0, vec![2]).unwrap();
        let e = expand(1.0, &[2.0], &ph).unwrap();
        let f = |x: &[f64]| 1.0 + x[0] * x[0];
        for t in [1e-2, 1e-3, 1e-4] {
            let i = quadrature_oracle(&f, &|x| x[0].powi(4), &[-3.0], &[3.0], t, 1e-13).unwrap().value;
            let c1 = (i - e.c0_term * t.powf(0.25)) / t.powf(0.75);
            assert!((c1 - e.c1_term).abs() < 1e-8, "t={t}: {c1} vs {}", e.c1_term);
        }
    }

    #[test]
    fn leading_constant_examples() {
        assert!((leading_constant_ci(1.0, 1.0, 1.0, 1, 1).unwrap() - 2.0 * PI.sqrt()).abs() < 1e-14);
        let c = leading_constant_ci(1.0, 1.0, 1.0, 3, 3).unwrap();
        assert!((c - 4.0 * PI * gamma(0.25)).abs() < 1e-12);
        assert!(leading_constant_ci(1.0, 1.0, 1.0, 2, 2).is_err());
    }

    #[test]
    fn fit_recovers_power() {
        let ts: Vec<f64> = (0..8).map(|i| 10f64.powf(-2.0 - 0.4 * i as f64)).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 3.0 * t.powf(1.25)).collect();
        let w: Vec<f64> = ts.iter().map(|t| 1.0 / t).collect();
        let fit = loglog_fit(&ts, &ys, &w).unwrap();
        assert!((fit.slope - 1.25).abs() < 1e-12);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
    }
}
