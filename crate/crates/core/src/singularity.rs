//! Singular points of maps ℝⁿ → ℝⁿ: rank deficit, type `(1,m)`, the
//! order-3 admissibility test, Arnol'd labels and the A/D/E catalog.
//!
//! Curve jets are built by sequential annihilation: with `ξ` spanning the
//! kernel, the curve `γ(s) = b + ξs + Σ a_k s^k` gets, at each order `k`,
//! the minimum-norm `a_k` cancelling the range part of the image
//! coefficient. Kernel components of `a_k` only reparametrize the curve, so
//! the first order whose cokernel part survives is the type.

use crate::distance::{analyze_minimum, MinimumAnalysis, ProfileControls};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::quadrature::{integrate_1d, QuadControls};
use crate::series::{Poly, Ring, Series};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use std::sync::Arc;

pub type MapFn = Arc<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync>;

/// Default largest order searched by [`type_1m`].
pub const M_MAX: usize = 9;

/// Relative threshold below which a singular value or Taylor coefficient
/// counts as zero.
const RANK_TOL: f64 = 1e-7;
const COEFF_TOL: f64 = 1e-6;

#[derive(Clone)]
enum Model {
    Poly(Vec<Poly>),
    /// `x ↦ A f(Bx + u) + v`
    Affine { inner: Box<Model>, a: DMatrix<f64>, b: DMatrix<f64>, u: DVector<f64>, v: DVector<f64> },
    /// Black-box map; curve jets come from polynomial fits on `[−radius, radius]`.
    Numeric { f: MapFn, radius: f64 },
}

/// Image of a curve: Taylor coefficients per component and their estimated
/// standard errors (zero for exact jets).
struct CurveJet {
    value: Vec<Series>,
    sigma: Vec<Vec<f64>>,
}

impl Model {
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Model::Poly(ps) => Ok(ps.iter().map(|p| p.eval(x)).collect()),
            Model::Affine { inner, a, b, u, v } => {
                let y = b * DVector::from_column_slice(x) + u;
                let fy = DVector::from_vec(inner.eval(y.as_slice())?);
                Ok((a * fy + v).as_slice().to_vec())
            }
            Model::Numeric { f, .. } => f(x),
        }
    }

    fn curve_image(&self, curve: &[Series]) -> Result<CurveJet> {
        let deg = curve[0].degree();
        match self {
            Model::Poly(ps) => {
                let value: Vec<Series> = ps.iter().map(|p| pad(p.eval(curve), deg)).collect();
                let sigma = vec![vec![0.0; deg + 1]; value.len()];
                Ok(CurveJet { value, sigma })
            }
            Model::Affine { inner, a, b, u, v } => {
                let n = curve.len();
                let moved: Vec<Series> = (0..b.nrows())
                    .map(|i| {
                        let mut s = Series::constant(u[i]);
                        for j in 0..n {
                            s = s + curve[j].scale(b[(i, j)]);
                        }
                        pad(s, deg)
                    })
                    .collect();
                let img = inner.curve_image(&moved)?;
                let m = img.value.len();
                let mut value = Vec::with_capacity(a.nrows());
                let mut sigma = Vec::with_capacity(a.nrows());
                for i in 0..a.nrows() {
                    let mut s = Series::constant(v[i]);
                    let mut e = vec![0.0; deg + 1];
                    for j in 0..m {
                        s = s + img.value[j].scale(a[(i, j)]);
                        for k in 0..=deg {
                            e[k] += a[(i, j)].abs() * img.sigma[j][k];
                        }
                    }
                    value.push(pad(s, deg));
                    sigma.push(e);
                }
                Ok(CurveJet { value, sigma })
            }
            Model::Numeric { f, radius } => fit_curve(f, curve, *radius),
        }
    }
}

fn pad(mut s: Series, deg: usize) -> Series {
    s.0.resize(deg + 1, 0.0);
    s
}

/// Least-squares polynomial fit of `s ↦ f(γ(s))` on Chebyshev nodes.
fn fit_curve(f: &MapFn, curve: &[Series], radius: f64) -> Result<CurveJet> {
    let deg = curve[0].degree();
    let fit_deg = deg + 6;
    let nodes = 2 * fit_deg + 6;
    let us: Vec<f64> = (0..nodes)
        .map(|j| (std::f64::consts::PI * (j as f64 + 0.5) / nodes as f64).cos())
        .collect();
    let mut rows = Vec::with_capacity(nodes);
    for &u in &us {
        let x: Vec<f64> = curve.iter().map(|c| c.eval(u * radius)).collect();
        rows.push(f(&x)?);
    }
    let m = rows[0].len();
    let vand = DMatrix::from_fn(nodes, fit_deg + 1, |i, k| us[i].powi(k as i32));
    let svd = vand.clone().svd(true, true);
    let gram_inv = {
        let vt = svd.v_t.as_ref().unwrap();
        let mut g = DMatrix::zeros(fit_deg + 1, fit_deg + 1);
        for (i, &s) in svd.singular_values.iter().enumerate() {
            let r = vt.row(i).transpose();
            g += &r * r.transpose() / (s * s);
        }
        g
    };
    let dof = (nodes - fit_deg - 1) as f64;
    let mut value = Vec::with_capacity(m);
    let mut sigma = Vec::with_capacity(m);
    for comp in 0..m {
        let y = DVector::from_iterator(nodes, rows.iter().map(|r| r[comp]));
        let c = svd.solve(&y, 0.0).map_err(|e| Error::Inconsistency(e.to_string()))?;
        let resid = (&vand * &c - &y).norm();
        let rho = (resid * resid / dof).sqrt().max(f64::EPSILON * y.amax());
        let mut coeffs = Vec::with_capacity(deg + 1);
        let mut errs = Vec::with_capacity(deg + 1);
        for k in 0..=deg {
            let scale = radius.powi(k as i32);
            coeffs.push(c[k] / scale);
            errs.push(rho * gram_inv[(k, k)].sqrt() / scale);
        }
        value.push(Series(coeffs));
        sigma.push(errs);
    }
    Ok(CurveJet { value, sigma })
}

/// A map ℝⁿ → ℝⁿ together with the point where it is classified.
#[derive(Clone)]
pub struct SmoothMapSample {
    pub n: usize,
    model: Model,
    pub basepoint: Point,
    /// Highest derivative order the classifier may request.
    pub jet_order: usize,
}

impl std::fmt::Debug for SmoothMapSample {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.model {
            Model::Poly(_) => "polynomial",
            Model::Affine { .. } => "affine conjugate",
            Model::Numeric { .. } => "numeric",
        };
        f.debug_struct("SmoothMapSample").field("n", &self.n).field("model", &kind).field("basepoint", &self.basepoint).finish()
    }
}

impl SmoothMapSample {
    pub fn polynomial(components: Vec<Poly>, basepoint: Point) -> Result<Self> {
        let n = basepoint.dim();
        if components.len() != n || components.iter().any(|p| p.terms.iter().any(|(_, e)| e.len() != n)) {
            return Err(Error::InvalidInput(format!("polynomial map must have {n} components in {n} variables")));
        }
        Ok(SmoothMapSample { n, model: Model::Poly(components), basepoint, jet_order: M_MAX + 1 })
    }

    /// A black-box map; jets are fitted on curves of parameter radius `radius`.
    pub fn numeric(f: MapFn, basepoint: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidInput("fit radius must be positive".into()));
        }
        let n = basepoint.dim();
        Ok(SmoothMapSample { n, model: Model::Numeric { f, radius }, basepoint, jet_order: M_MAX + 1 })
    }

    /// `x ↦ A f(B(x − base) + b₀) + v`, classified at `base`. Invertible
    /// `A`, `B` leave every invariant computed here unchanged.
    pub fn affine_conjugate(&self, a: DMatrix<f64>, b: DMatrix<f64>, base: Point, v: DVector<f64>) -> Result<Self> {
        let n = self.n;
        if a.shape() != (n, n) || b.shape() != (n, n) || base.dim() != n || v.len() != n {
            return Err(Error::InvalidInput("affine change has wrong dimensions".into()));
        }
        let u = &self.basepoint.0 - &b * &base.0;
        Ok(SmoothMapSample {
            n,
            model: Model::Affine { inner: Box::new(self.model.clone()), a, b, u, v },
            basepoint: base,
            jet_order: self.jet_order,
        })
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.model.eval(x)
    }

    /// Image of `γ(s) = b + Σ_{k≥1} coeffs[k−1] s^k` up to order `deg`.
    fn image(&self, coeffs: &[DVector<f64>], deg: usize) -> Result<CurveJet> {
        let curve: Vec<Series> = (0..self.n)
            .map(|i| {
                let mut c = vec![0.0; deg + 1];
                c[0] = self.basepoint.0[i];
                for (k, a) in coeffs.iter().enumerate().take(deg) {
                    c[k + 1] = a[i];
                }
                Series(c)
            })
            .collect();
        self.model.curve_image(&curve)
    }

    pub fn jacobian(&self) -> Result<DMatrix<f64>> {
        let n = self.n;
        let mut j = DMatrix::zeros(n, n);
        for c in 0..n {
            let img = self.image(&[DVector::from_fn(n, |i, _| if i == c { 1.0 } else { 0.0 })], 1)?;
            for r in 0..n {
                j[(r, c)] = img.value[r].coeff(1);
            }
        }
        Ok(j)
    }
}

/// Kernel, cokernel and pseudo-inverse of the differential at the basepoint.
struct Linear {
    jac: DMatrix<f64>,
    smax: f64,
    kernel: Vec<DVector<f64>>,
    coker: Vec<DVector<f64>>,
    pinv: DMatrix<f64>,
}

fn linear(map: &SmoothMapSample) -> Result<Linear> {
    let jac = map.jacobian()?;
    let n = map.n;
    let svd = jac.clone().svd(true, true);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let smax = svd.singular_values.max();
    let mut kernel = Vec::new();
    let mut coker = Vec::new();
    let mut pinv = DMatrix::zeros(n, n);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    for i in idx {
        let s = svd.singular_values[i];
        if smax > 0.0 && s > RANK_TOL * smax {
            pinv += vt.row(i).transpose() * u.column(i).transpose() / s;
        } else {
            kernel.push(vt.row(i).transpose());
            coker.push(u.column(i).clone_owned());
        }
    }
    Ok(Linear { jac, smax, kernel, coker, pinv })
}

/// `n` minus the numerical rank of the differential at the basepoint.
pub fn rank_deficit(map: &SmoothMapSample) -> Result<usize> {
    Ok(linear(map)?.kernel.len())
}

/// Kernel vectors of the differential at the basepoint.
pub fn kernel_basis(map: &SmoothMapSample) -> Result<Vec<DVector<f64>>> {
    Ok(linear(map)?.kernel)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Evidence {
    /// Orders whose cokernel part vanished (so the curve was extended past them).
    pub orders_annihilated: Vec<usize>,
    /// Curve coefficients `[ξ, a₂, a₃, ...]`.
    pub curve_jets: Vec<Vec<f64>>,
    /// Cokernel part of the image coefficient at the stopping order.
    pub leading_coefficient: Option<f64>,
}

/// Builds the curve from `xi`, annihilating range parts, until the
/// component along `ell` becomes significant. Returns that order.
fn annihilate(map: &SmoothMapSample, lin: &Linear, xi: &DVector<f64>, ell: &DVector<f64>, m_max: usize) -> Result<(Option<usize>, Evidence)> {
    let mut coeffs = vec![xi.clone()];
    let mut done = Vec::new();
    // absolute floor: cancellation leaves ~1e-16 residues in exactly-zero coefficients
    let floor = 1e-12 * lin.smax.max(1e-300);
    for k in 2..=m_max {
        let img = map.image(&coeffs, k)?;
        let ck = DVector::from_iterator(map.n, img.value.iter().map(|s| s.coeff(k)));
        let sk: f64 = img.sigma.iter().zip(ell.iter()).map(|(e, l)| e[k] * l.abs()).sum();
        let w = ell.dot(&ck);
        if w.abs() > (COEFF_TOL * ck.amax()).max(floor).max(10.0 * sk) {
            let ev = Evidence {
                orders_annihilated: done,
                curve_jets: coeffs.iter().map(|c| c.as_slice().to_vec()).collect(),
                leading_coefficient: Some(w),
            };
            return Ok((Some(k), ev));
        }
        done.push(k);
        coeffs.push(-&lin.pinv * ck);
    }
    let ev = Evidence {
        orders_annihilated: done,
        curve_jets: coeffs.iter().map(|c| c.as_slice().to_vec()).collect(),
        leading_coefficient: None,
    };
    Ok((None, ev))
}

/// The order `m` of a corank-one singular point, or `None` if every order
/// up to `m_max` can be annihilated.
pub fn type_1m(map: &SmoothMapSample, m_max: usize) -> Result<Option<usize>> {
    Ok(type_1m_with_evidence(map, m_max)?.0)
}

pub fn type_1m_with_evidence(map: &SmoothMapSample, m_max: usize) -> Result<(Option<usize>, Evidence)> {
    let lin = linear(map)?;
    if lin.kernel.len() != 1 {
        return Err(Error::Precondition(format!("type (1,m) needs rank deficit 1, found {}", lin.kernel.len())));
    }
    if m_max + 1 > map.jet_order.max(2) {
        return Err(Error::Precondition(format!("jet order {} is too small for m_max {m_max}", map.jet_order)));
    }
    annihilate(map, &lin, &lin.kernel[0], &lin.coker[0], m_max)
}

/// Second-order cokernel forms `Q_ℓ(ξ) = ℓ·½D²f(ξ,ξ)` on the kernel, one
/// symmetric r×r matrix per cokernel vector.
fn kernel_forms(map: &SmoothMapSample, lin: &Linear) -> Result<Vec<DMatrix<f64>>> {
    let r = lin.kernel.len();
    let c2 = |xi: &DVector<f64>| -> Result<DVector<f64>> {
        let img = map.image(std::slice::from_ref(xi), 2)?;
        Ok(DVector::from_iterator(map.n, img.value.iter().map(|s| s.coeff(2))))
    };
    let diag: Vec<DVector<f64>> = lin.kernel.iter().map(&c2).collect::<Result<_>>()?;
    let mut forms = vec![DMatrix::zeros(r, r); lin.coker.len()];
    for i in 0..r {
        for (l, ell) in lin.coker.iter().enumerate() {
            forms[l][(i, i)] = ell.dot(&diag[i]);
        }
        for j in 0..i {
            let mixed = c2(&(&lin.kernel[i] + &lin.kernel[j]))?;
            for (l, ell) in lin.coker.iter().enumerate() {
                let v = 0.5 * (ell.dot(&mixed) - ell.dot(&diag[i]) - ell.dot(&diag[j]));
                forms[l][(i, j)] = v;
                forms[l][(j, i)] = v;
            }
        }
    }
    Ok(forms)
}

/// Whether the singular point can sit at the end of a minimizing geodesic:
/// nonsingular, or corank one of odd type `m ≥ 3`, or (corank ≥ 2) every
/// kernel direction admits a curve whose image agrees to order 3.
pub fn admissible(map: &SmoothMapSample) -> Result<bool> {
    let lin = linear(map)?;
    match lin.kernel.len() {
        0 => Ok(true),
        1 => {
            let (m, _) = annihilate(map, &lin, &lin.kernel[0], &lin.coker[0], M_MAX.min(map.jet_order.saturating_sub(1)).max(2))?;
            Ok(matches!(m, Some(m) if m >= 3 && m % 2 == 1))
        }
        _ => {
            let forms = kernel_forms(map, &lin)?;
            let scale = lin.smax.max(forms.iter().map(|f| f.amax()).fold(0.0, f64::max));
            Ok(forms.iter().all(|f| f.amax() <= COEFF_TOL * scale))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SingularityReport {
    pub rank_deficit: usize,
    pub type_m: Option<usize>,
    pub admissible: bool,
    pub label: String,
    pub evidence: Option<Evidence>,
}

fn null_vector_2(m: &DMatrix<f64>) -> DVector<f64> {
    let e = nalgebra::SymmetricEigen::new(m.clone());
    let i = if e.eigenvalues[0].abs() <= e.eigenvalues[1].abs() { 0 } else { 1 };
    e.eigenvectors.column(i).clone_owned()
}

/// Label of a corank-two point from the pencil of its kernel forms.
fn label_corank2(map: &SmoothMapSample, lin: &Linear) -> Result<String> {
    let forms = kernel_forms(map, lin)?;
    let (a, b) = (&forms[0], &forms[1]);
    let s = a.amax().max(b.amax());
    if s <= COEFF_TOL * lin.smax.max(1e-300) {
        return Ok("unrecognized".into());
    }
    // det(αA + βB) = pa α² + pb αβ + pc β²
    let pa = a.determinant();
    let pc = b.determinant();
    let pb = a[(0, 0)] * b[(1, 1)] + a[(1, 1)] * b[(0, 0)] - 2.0 * a[(0, 1)] * b[(0, 1)];
    let s2 = s * s;
    let tol = 1e-6;
    let order_along = |xi: &DVector<f64>, ell: &DVector<f64>| -> Result<(Option<usize>, f64)> {
        let (m, ev) = annihilate(map, lin, xi, ell, 6)?;
        Ok((m, ev.leading_coefficient.unwrap_or(0.0)))
    };
    let kvec = |v: &DVector<f64>| &lin.kernel[0] * v[0] + &lin.kernel[1] * v[1];
    if pa.abs() <= tol * s2 && pb.abs() <= tol * s2 && pc.abs() <= tol * s2 {
        // every member has rank ≤ 1: E-type if one functional kills all forms
        let (big, small, lb, ls) = if a.amax() >= b.amax() {
            (a, b, &lin.coker[0], &lin.coker[1])
        } else {
            (b, a, &lin.coker[1], &lin.coker[0])
        };
        let mu = small.dot(big) / big.dot(big);
        if (small - big * mu).amax() > tol * s {
            return Ok("unrecognized".into());
        }
        let ell = (ls - lb * mu).normalize();
        let xi = kvec(&null_vector_2(big));
        return Ok(match order_along(&xi, &ell)? {
            (Some(3), c) => format!("E6{}", if c > 0.0 { "+" } else { "-" }),
            _ => "unrecognized".into(),
        });
    }
    let disc = (pb * pb - 4.0 * pa * pc) / (s2 * s2);
    if disc > tol {
        return Ok("D4+".into());
    }
    if disc < -tol {
        return Ok("D4-".into());
    }
    let (al, be) = if pa.abs() >= pc.abs() { (-pb, 2.0 * pa) } else { (2.0 * pc, -pb) };
    let member = a * al + b * be;
    let ell = (&lin.coker[0] * al + &lin.coker[1] * be).normalize();
    let nu = null_vector_2(&member);
    let eta = DVector::from_vec(vec![-nu[1], nu[0]]);
    let q_eta = (eta.transpose() * &member * &eta)[(0, 0)] * ell.dot(&(&lin.coker[0] * al + &lin.coker[1] * be)).signum();
    let xi = kvec(&nu);
    Ok(match order_along(&xi, &ell)? {
        (Some(k @ (3 | 4)), c) => format!("D{}{}", k + 2, if c * q_eta > 0.0 { "+" } else { "-" }),
        _ => "unrecognized".into(),
    })
}

/// Full classification: rank deficit, type, admissibility and label.
pub fn classify(map: &SmoothMapSample, m_max: usize) -> Result<SingularityReport> {
    let lin = linear(map)?;
    let r = lin.kernel.len();
    match r {
        0 => Ok(SingularityReport { rank_deficit: 0, type_m: None, admissible: true, label: "nonsingular".into(), evidence: None }),
        1 => {
            let (m, ev) = annihilate(map, &lin, &lin.kernel[0], &lin.coker[0], m_max)?;
            let label = match m {
                Some(k) if (2..=6).contains(&k) => format!("A{k}"),
                _ => "unrecognized".into(),
            };
            let admissible = matches!(m, Some(k) if k >= 3 && k % 2 == 1);
            Ok(SingularityReport { rank_deficit: 1, type_m: m, admissible, label, evidence: Some(ev) })
        }
        2 => Ok(SingularityReport {
            rank_deficit: 2,
            type_m: None,
            admissible: admissible(map)?,
            label: label_corank2(map, &lin)?,
            evidence: None,
        }),
        _ => Ok(SingularityReport { rank_deficit: r, type_m: None, admissible: admissible(map)?, label: "unrecognized".into(), evidence: None }),
    }
    .map(|mut rep| {
        let _ = &lin.jac;
        if rep.label == "nonsingular" {
            rep.evidence = None;
        }
        rep
    })
}

/// Catalog labels with the dimension of their normal form.
pub const CATALOG: [(&str, usize); 13] = [
    ("A2", 1),
    ("A3", 2),
    ("A4", 3),
    ("D4+", 3),
    ("D4-", 3),
    ("A5", 4),
    ("D5+", 4),
    ("D5-", 4),
    ("A6", 5),
    ("D6+", 5),
    ("D6-", 5),
    ("E6+", 5),
    ("E6-", 5),
];

fn mono(c: f64, e: &[u32]) -> (f64, Vec<u32>) {
    (c, e.to_vec())
}

fn normal_form(label: &str) -> Option<Vec<Poly>> {
    let p = |t: Vec<(f64, Vec<u32>)>| Poly::new(t);
    let forms = match label {
        "A2" => vec![p(vec![mono(1.0, &[2])])],
        "A3" => vec![p(vec![mono(1.0, &[3, 0]), mono(1.0, &[1, 1])]), Poly::var(1, 2)],
        "A4" => vec![
            p(vec![mono(1.0, &[4, 0, 0]), mono(1.0, &[2, 1, 0]), mono(1.0, &[1, 0, 1])]),
            Poly::var(1, 3),
            Poly::var(2, 3),
        ],
        "A5" => vec![
            p(vec![mono(1.0, &[5, 0, 0, 0]), mono(1.0, &[3, 1, 0, 0]), mono(1.0, &[2, 0, 1, 0]), mono(1.0, &[1, 0, 0, 1])]),
            Poly::var(1, 4),
            Poly::var(2, 4),
            Poly::var(3, 4),
        ],
        "A6" => vec![
            p(vec![
                mono(1.0, &[6, 0, 0, 0, 0]),
                mono(1.0, &[4, 1, 0, 0, 0]),
                mono(1.0, &[3, 0, 1, 0, 0]),
                mono(1.0, &[2, 0, 0, 1, 0]),
                mono(1.0, &[1, 0, 0, 0, 1]),
            ]),
            Poly::var(1, 5),
            Poly::var(2, 5),
            Poly::var(3, 5),
            Poly::var(4, 5),
        ],
        "D4+" | "D4-" => {
            let sg = if label == "D4+" { 1.0 } else { -1.0 };
            vec![
                p(vec![mono(1.0, &[2, 0, 0]), mono(sg, &[0, 2, 0]), mono(1.0, &[1, 0, 1])]),
                p(vec![mono(1.0, &[1, 1, 0])]),
                Poly::var(2, 3),
            ]
        }
        "D5+" | "D5-" => {
            let sg = if label == "D5+" { 1.0 } else { -1.0 };
            vec![
                p(vec![mono(sg, &[3, 0, 0, 0]), mono(1.0, &[0, 2, 0, 0]), mono(1.0, &[2, 0, 1, 0]), mono(1.0, &[1, 0, 0, 1])]),
                p(vec![mono(1.0, &[1, 1, 0, 0])]),
                Poly::var(2, 4),
                Poly::var(3, 4),
            ]
        }
        "D6+" | "D6-" => {
            let sg = if label == "D6+" { 1.0 } else { -1.0 };
            vec![
                p(vec![
                    mono(sg, &[4, 0, 0, 0, 0]),
                    mono(1.0, &[0, 2, 0, 0, 0]),
                    mono(1.0, &[3, 0, 1, 0, 0]),
                    mono(1.0, &[2, 0, 0, 1, 0]),
                    mono(1.0, &[1, 0, 0, 0, 1]),
                ]),
                p(vec![mono(1.0, &[1, 1, 0, 0, 0])]),
                Poly::var(2, 5),
                Poly::var(3, 5),
                Poly::var(4, 5),
            ]
        }
        "E6+" | "E6-" => {
            let sg = if label == "E6+" { 1.0 } else { -1.0 };
            vec![
                p(vec![mono(1.0, &[2, 0, 0, 0, 0]), mono(1.0, &[1, 1, 1, 0, 0]), mono(1.0, &[0, 1, 0, 1, 0]), mono(1.0, &[1, 0, 0, 0, 1])]),
                p(vec![mono(sg, &[0, 3, 0, 0, 0]), mono(1.0, &[2, 0, 1, 0, 0]), mono(1.0, &[1, 0, 0, 1, 0])]),
                Poly::var(2, 5),
                Poly::var(3, 5),
                Poly::var(4, 5),
            ]
        }
        _ => return None,
    };
    Some(forms)
}

/// The normal form `label`, suspended to dimension `n`, at the origin.
pub fn catalog(label: &str, n: usize) -> Result<SmoothMapSample> {
    let Some(&(_, base)) = CATALOG.iter().find(|(l, _)| *l == label) else {
        return Err(Error::Catalog(label.to_string()));
    };
    if n < base || n > 5 {
        return Err(Error::InvalidInput(format!("{label} lives in dimension {base}..=5, asked for {n}")));
    }
    let forms = normal_form(label).expect("listed label");
    let extra = n - base;
    let mut comps: Vec<Poly> = forms.iter().map(|p| p.widen(extra)).collect();
    for i in base..n {
        comps.push(Poly::var(i, n));
    }
    SmoothMapSample::polynomial(comps, Point(DVector::zeros(n)))
}

/// Planar fixture with a degenerate hinged-energy minimum.
///
/// Endpoints `q₁ = (0,−½)`, `q₂ = (0,½)`; the metric is Euclidean near the
/// origin, the front at distance ½ from `q₂` is the circle `ξ` and the one
/// from `q₁` is the truncated series `γ_η(x) = Σ_{k<η} C_{k−1} x^{2k}`
/// (Catalan coefficients), tangent to `ξ` to order `2η − 1`. So
/// `d(q₂, z) = |z − q₂|`, `d(q₁, z) = ½ + signed distance to γ_η`, and
/// `h − ¼ ≍ u₁² + u₂^{2η}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fixture {
    pub eta: u32,
    /// `σ'(0) > 0`: arclength of `γ_η` per unit angle at `q₁`.
    pub sigma1: f64,
    /// `σ'''(0)`.
    pub sigma3: f64,
}

fn catalan(k: u32) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c = c * 2.0 * (2.0 * i as f64 + 1.0) / (i as f64 + 2.0);
    }
    c
}

pub fn make_fixture(eta: u32, sigma1: f64, sigma3: f64) -> Result<Fixture> {
    if eta < 3 {
        return Err(Error::InvalidInput(format!("eta must be at least 3, got {eta}")));
    }
    if !(sigma1 > 0.0) || !sigma3.is_finite() {
        return Err(Error::InvalidInput("sigma1 must be positive and sigma3 finite".into()));
    }
    Ok(Fixture { eta, sigma1, sigma3 })
}

impl Fixture {
    pub const Q1: [f64; 2] = [0.0, -0.5];
    pub const Q2: [f64; 2] = [0.0, 0.5];
    pub const H_MIN: f64 = 0.25;

    /// `(γ, γ', γ'')` at `x`.
    pub fn gamma(&self, x: f64) -> (f64, f64, f64) {
        let (mut g, mut g1, mut g2) = (0.0, 0.0, 0.0);
        for k in 1..self.eta {
            let c = catalan(k - 1);
            let p = 2 * k as i32;
            g += c * x.powi(p);
            g1 += c * p as f64 * x.powi(p - 1);
            g2 += c * (p * (p - 1)) as f64 * x.powi(p - 2);
        }
        (g, g1, g2)
    }

    /// Abscissa of the closest point of `γ_η` to `z`.
    pub fn foot(&self, z: &[f64]) -> f64 {
        let mut x = z[0];
        for _ in 0..60 {
            let (g, g1, g2) = self.gamma(x);
            let f = (x - z[0]) + (g - z[1]) * g1;
            let df = 1.0 + g1 * g1 + (g - z[1]) * g2;
            let dx = f / df;
            x -= dx;
            if dx.abs() <= 1e-16 * (1.0 + x.abs()) {
                break;
            }
        }
        x
    }

    /// Signed distance from `z` to the front `γ_η` (positive above).
    fn front_offset(&self, z: &[f64]) -> f64 {
        let xf = self.foot(z);
        let (g, _, _) = self.gamma(xf);
        let dist = ((z[0] - xf).powi(2) + (z[1] - g).powi(2)).sqrt();
        if z[1] >= g {
            dist
        } else {
            -dist
        }
    }

    /// `d(z, q₂) − ½`, without cancellation.
    fn circle_offset(&self, z: &[f64]) -> f64 {
        (z[0] * z[0] + z[1] * z[1] - z[1]) / (self.d2(z) + 0.5)
    }

    /// `d(q₁, z)`.
    pub fn d1(&self, z: &[f64]) -> f64 {
        0.5 + self.front_offset(z)
    }

    /// `d(z, q₂)`.
    pub fn d2(&self, z: &[f64]) -> f64 {
        (z[0] * z[0] + (z[1] - 0.5).powi(2)).sqrt()
    }

    pub fn h(&self, z: &[f64]) -> f64 {
        Self::H_MIN + self.excess(z)
    }

    /// `h − ¼` computed from the two offsets, accurate far below `ε·¼`.
    pub fn excess(&self, z: &[f64]) -> f64 {
        let (a, b) = (self.front_offset(z), self.circle_offset(z));
        0.5 * (a + b) + 0.5 * (a * a + b * b)
    }

    /// Angle at `q₁` of the geodesic through `z`: solves `σ(θ) = s` with
    /// `s` the arclength of `γ_η` up to the foot point and
    /// `σ(θ) = σ₁θ + σ₃θ³/6`.
    pub fn theta(&self, z: &[f64]) -> Result<f64> {
        let xf = self.foot(z);
        let mut speed = |x: f64| (1.0 + self.gamma(x).1.powi(2)).sqrt();
        let (lo, hi, sign) = if xf >= 0.0 { (0.0, xf, 1.0) } else { (xf, 0.0, -1.0) };
        let s = sign * integrate_1d(&mut speed, lo, hi, &[], &QuadControls { rtol: 1e-14, ..Default::default() })?.value;
        let mut th = s / self.sigma1;
        for _ in 0..50 {
            let f = self.sigma1 * th + self.sigma3 * th.powi(3) / 6.0 - s;
            let d = self.sigma_prime(th);
            if !(d > 0.0) {
                return Err(Error::Domain(format!("σ' vanishes near θ = {th}")));
            }
            let dt = f / d;
            th -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        Ok(th)
    }

    pub fn sigma_prime(&self, theta: f64) -> f64 {
        self.sigma1 + 0.5 * self.sigma3 * theta * theta
    }

    /// `c₀(q₁, z) = √(1/(2σ'(θ)))`.
    pub fn c0_left(&self, z: &[f64]) -> Result<f64> {
        let th = self.theta(z)?;
        Ok((1.0 / (2.0 * self.sigma_prime(th))).sqrt())
    }

    /// `c₀(z, q₂) = 1`: the metric is flat along that segment.
    pub fn c0_right(&self, _z: &[f64]) -> f64 {
        1.0
    }

    /// `(x, u) ↦ (x, u + γ_η(x))`: straightens the front, with unit Jacobian.
    /// In these coordinates the valley of `h` hugs `u = 0`.
    pub fn plane_point(&self, v: &[f64]) -> [f64; 2] {
        [v[0], v[1] + self.gamma(v[0]).0]
    }

    /// Density of the volume in these coordinates.
    pub fn density(&self, _z: &[f64]) -> f64 {
        1.0
    }

    /// Expected type: `2η − 1`.
    pub fn expected_m(&self) -> u32 {
        2 * self.eta - 1
    }

    /// Hessian data and valley order of `h` at the origin.
    pub fn analysis(&self) -> Result<MinimumAnalysis> {
        let ctrl = ProfileControls { noise: 1e-15, probe_radius: 0.1, halvings: 6, ..Default::default() };
        let mut a = analyze_minimum(&|z: &[f64]| Ok(self.excess(z)), &[0.0, 0.0], &ctrl)?;
        a.value += Self::H_MIN;
        Ok(a)
    }

    /// `x^{2η}/C ≤ h − ¼ ≤ C x^{2η}` along the tangency axis, between the
    /// two fronts: returns the smallest such `C` over `samples` points of
    /// `[radius/4, radius]` (closer in, `h − ¼` drowns in rounding).
    pub fn axis_sandwich(&self, radius: f64, samples: usize) -> f64 {
        let p = 2 * self.eta as i32;
        let mut c: f64 = 1.0;
        for i in 1..=samples {
            let x = radius * (0.25 + 0.75 * i as f64 / samples as f64);
            for frac in [0.0, 0.5, 1.0] {
                let y_lo = self.gamma(x).0;
                let y_hi = 0.5 - (0.25 - x * x).sqrt();
                let y = y_lo + frac * (y_hi - y_lo);
                let ratio = self.excess(&[x, y]) / x.powi(p);
                c = c.max(ratio).max(1.0 / ratio);
            }
        }
        c
    }
}
