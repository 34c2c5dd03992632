//! Chart-level (sub)-Riemannian structures given by orthonormal frames.
//!
//! A structure is a k×n frame matrix `F(q)` whose rows are the vector
//! fields `X_i`, plus a volume density. Frames of the built-in models are
//! written once, generically over dual numbers, so first and second
//! derivatives are exact. Closure frames fall back to central differences.

use crate::error::{Error, Result};
use crate::expr::Expr;
use nalgebra::{Const, DMatrix, DVector, U1};
use num_dual::{Dual2SVec64, DualNum, DualSVec64};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// A point in chart coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Point(pub DVector<f64>);

/// A covector in the coordinate cobasis.
#[derive(Clone, Debug, PartialEq)]
pub struct Covector(pub DVector<f64>);

macro_rules! vector_newtype {
    ($t:ident) => {
        impl $t {
            pub fn new(v: impl Into<Vec<f64>>) -> Self {
                $t(DVector::from_vec(v.into()))
            }

            pub fn dim(&self) -> usize {
                self.0.len()
            }

            pub fn as_slice(&self) -> &[f64] {
                self.0.as_slice()
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|x| x.is_finite())
            }
        }

        impl From<DVector<f64>> for $t {
            fn from(v: DVector<f64>) -> Self {
                $t(v)
            }
        }
    };
}

vector_newtype!(Point);
vector_newtype!(Covector);

/// Frame values and derivatives at a point.
///
/// `first_derivs[j]` is `∂F/∂q_j`; `second_derivs[j * n + l]` is
/// `∂²F/∂q_j∂q_l` when requested.
#[derive(Clone, Debug)]
pub struct FrameJet {
    pub values: DMatrix<f64>,
    pub first_derivs: Vec<DMatrix<f64>>,
    pub second_derivs: Option<Vec<DMatrix<f64>>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Riemannian,
    Contact3d,
    Quasicontact4d,
    Other,
}

pub type FrameFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
pub type DensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
enum FrameModel {
    Euclidean,
    Stereographic { radius: f64 },
    Revolution { profile: Expr },
    Heisenberg,
    Contact { eps: f64 },
    Quasicontact,
    Closure(FrameFn),
}

#[derive(Clone)]
pub enum Volume {
    Lebesgue,
    /// Riemannian volume `1/|det F|`; only for k = n.
    Riemannian,
    Density(Expr),
    Closure(DensityFn),
}

impl fmt::Debug for Volume {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Volume::Lebesgue => f.write_str("Lebesgue"),
            Volume::Riemannian => f.write_str("Riemannian"),
            Volume::Density(e) => write!(f, "Density({e})"),
            Volume::Closure(_) => f.write_str("Closure"),
        }
    }
}

/// Chart bookkeeping. `Inversion` is a two-chart atlas whose transition is
/// `x ↦ x/|x|²`, used for the stereographic sphere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Atlas {
    Single,
    Inversion { switch_radius: f64 },
}

impl Atlas {
    /// True when the flow should hop to the other chart.
    pub fn should_switch(&self, q: &[f64]) -> bool {
        match self {
            Atlas::Single => false,
            Atlas::Inversion { switch_radius } => {
                q.iter().map(|x| x * x).sum::<f64>() > switch_radius * switch_radius
            }
        }
    }

    /// Maps a point to the other chart.
    pub fn map_point(&self, q: &DVector<f64>) -> DVector<f64> {
        match self {
            Atlas::Single => q.clone(),
            Atlas::Inversion { .. } => q / q.norm_squared(),
        }
    }

    /// Jacobian of the point transition at `q`.
    pub fn point_jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let n = q.len();
        match self {
            Atlas::Single => DMatrix::identity(n, n),
            Atlas::Inversion { .. } => {
                let r2 = q.norm_squared();
                (DMatrix::identity(n, n) * r2 - q * q.transpose() * 2.0) / (r2 * r2)
            }
        }
    }

    /// Transition of `(q, p)` together with the full 2n×2n Jacobian.
    pub fn transition(
        &self,
        q: &DVector<f64>,
        p: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>, DMatrix<f64>) {
        let n = q.len();
        match self {
            Atlas::Single => (q.clone(), p.clone(), DMatrix::identity(2 * n, 2 * n)),
            Atlas::Inversion { .. } => {
                let r2 = q.norm_squared();
                let qp = q.dot(p);
                let eye = DMatrix::<f64>::identity(n, n);
                let qn = q / r2;
                let pn = p * r2 - q * (2.0 * qp);
                let dqdq = self.point_jacobian(q);
                let dpdq = p * q.transpose() * 2.0 - &eye * (2.0 * qp) - q * p.transpose() * 2.0;
                let dpdp = &eye * r2 - q * q.transpose() * 2.0;
                let mut t = DMatrix::zeros(2 * n, 2 * n);
                t.view_mut((0, 0), (n, n)).copy_from(&dqdq);
                t.view_mut((n, 0), (n, n)).copy_from(&dpdq);
                t.view_mut((n, n), (n, n)).copy_from(&dpdp);
                (qn, pn, t)
            }
        }
    }
}

/// A (sub)-Riemannian structure on a single chart (plus an optional twin chart).
#[derive(Clone)]
pub struct Structure {
    pub n: usize,
    pub k: usize,
    pub kind: Kind,
    pub name: String,
    frame: FrameModel,
    volume: Volume,
    atlas: Atlas,
    periods: Vec<Option<f64>>,
    sample_box: Vec<(f64, f64)>,
}

impl fmt::Debug for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Structure")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("k", &self.k)
            .field("kind", &self.kind)
            .field("volume", &self.volume)
            .finish()
    }
}

/// Config form of a structure: `{name, params, volume}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StructureConfig {
    pub name: String,
    #[serde(default)]
    pub params: serde_json::Value,
    #[serde(default)]
    pub volume: Option<VolumeConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VolumeConfig {
    Named(String),
    Density { density_expr: String },
}

fn param_f64(params: &serde_json::Value, key: &str, default: f64) -> Result<f64> {
    match params.get(key) {
        None | Some(serde_json::Value::Null) => Ok(default),
        Some(v) => v
            .as_f64()
            .ok_or_else(|| Error::InvalidInput(format!("parameter '{key}' must be a number"))),
    }
}

fn param_str<'a>(params: &'a serde_json::Value, key: &str, default: &'a str) -> Result<&'a str> {
    match params.get(key) {
        None | Some(serde_json::Value::Null) => Ok(default),
        Some(v) => v
            .as_str()
            .ok_or_else(|| Error::InvalidInput(format!("parameter '{key}' must be a string"))),
    }
}

pub const BUILTIN_NAMES: [&str; 6] = [
    "euclidean",
    "round_sphere",
    "revolution_surface",
    "heisenberg",
    "contact3d_perturbed",
    "quasicontact4d",
];

/// Dispatches a const-generic function on the dimension (1..=5).
macro_rules! by_dim {
    ($n:expr, $f:ident ( $($arg:expr),* )) => {
        match $n {
            1 => $f::<1>($($arg),*),
            2 => $f::<2>($($arg),*),
            3 => $f::<3>($($arg),*),
            4 => $f::<4>($($arg),*),
            5 => $f::<5>($($arg),*),
            _ => unreachable!("dimension checked at construction"),
        }
    };
}

pub(crate) const MAX_DIM: usize = 5;

/// Determinant by elimination with partial pivoting on the real parts.
fn det_generic<T: DualNum<Primitive = f64> + Copy>(mut a: Vec<T>, n: usize) -> T {
    let mut det = T::from(1.0);
    for c in 0..n {
        let piv = (c..n)
            .max_by(|&i, &j| a[i * n + c].re().abs().total_cmp(&a[j * n + c].re().abs()))
            .unwrap();
        if a[piv * n + c].re() == 0.0 {
            return T::from(0.0);
        }
        if piv != c {
            for j in 0..n {
                a.swap(c * n + j, piv * n + j);
            }
            det = -det;
        }
        let d = a[c * n + c];
        det *= d;
        for i in c + 1..n {
            let f = a[i * n + c] / d;
            for j in c..n {
                let v = a[c * n + j];
                a[i * n + j] -= f * v;
            }
        }
    }
    det
}

impl Structure {
    fn validate_dims(n: usize, k: usize) -> Result<()> {
        if n == 0 || n > MAX_DIM {
            return Err(Error::InvalidInput(format!("dimension {n} outside 1..={MAX_DIM}")));
        }
        if k == 0 || k > n {
            return Err(Error::InvalidInput(format!("rank {k} must satisfy 1 <= k <= n = {n}")));
        }
        Ok(())
    }

    fn from_model(
        name: &str,
        n: usize,
        k: usize,
        kind: Kind,
        frame: FrameModel,
        volume: Volume,
    ) -> Result<Self> {
        Self::validate_dims(n, k)?;
        if matches!(volume, Volume::Riemannian) && k != n {
            return Err(Error::InvalidStructure(
                "Riemannian volume needs a full-rank frame".into(),
            ));
        }
        Ok(Structure {
            n,
            k,
            kind,
            name: name.to_string(),
            frame,
            volume,
            atlas: Atlas::Single,
            periods: vec![None; n],
            sample_box: vec![(-1.0, 1.0); n],
        })
    }

    /// A structure from an arbitrary frame closure returning a k×n matrix.
    /// Derivatives are taken by central differences.
    pub fn custom(name: &str, n: usize, k: usize, frame: FrameFn, volume: Volume) -> Result<Self> {
        let kind = if k == n { Kind::Riemannian } else { Kind::Other };
        Self::from_model(name, n, k, kind, FrameModel::Closure(frame), volume)
    }

    pub fn builtin(name: &str, params: &serde_json::Value) -> Result<Self> {
        match name {
            "euclidean" => {
                let n = param_f64(params, "n", 2.0)?;
                if n.fract() != 0.0 || n < 1.0 {
                    return Err(Error::InvalidInput(format!("euclidean n = {n}")));
                }
                Self::from_model(
                    "euclidean",
                    n as usize,
                    n as usize,
                    Kind::Riemannian,
                    FrameModel::Euclidean,
                    Volume::Riemannian,
                )
            }
            "round_sphere" => {
                let radius = param_f64(params, "radius", 1.0)?;
                if !(radius > 0.0 && radius.is_finite()) {
                    return Err(Error::InvalidInput(format!("radius must be positive, got {radius}")));
                }
                let mut s = Self::from_model(
                    "round_sphere",
                    2,
                    2,
                    Kind::Riemannian,
                    FrameModel::Stereographic { radius },
                    Volume::Riemannian,
                )?;
                s.atlas = Atlas::Inversion { switch_radius: 2.0 };
                s.sample_box = vec![(-1.5, 1.5); 2];
                Ok(s)
            }
            "revolution_surface" => {
                let src = param_str(params, "profile", "1+0.5*cos(x1)")?;
                let profile = Expr::parse(src)?;
                if profile.arity() > 1 {
                    return Err(Error::InvalidInput("profile may only use x1".into()));
                }
                for i in 0..=200 {
                    let s = -10.0 + 0.1 * i as f64;
                    let r = profile.eval_f64(&[s]);
                    if !(r > 0.0 && r.is_finite()) {
                        return Err(Error::InvalidStructure(format!(
                            "profile not positive at x1 = {s}"
                        )));
                    }
                }
                let mut s = Self::from_model(
                    "revolution_surface",
                    2,
                    2,
                    Kind::Riemannian,
                    FrameModel::Revolution { profile },
                    Volume::Riemannian,
                )?;
                s.periods = vec![None, Some(2.0 * std::f64::consts::PI)];
                s.sample_box = vec![(-2.0, 2.0), (-3.0, 3.0)];
                Ok(s)
            }
            "heisenberg" => Self::from_model(
                "heisenberg",
                3,
                2,
                Kind::Contact3d,
                FrameModel::Heisenberg,
                Volume::Lebesgue,
            ),
            "contact3d_perturbed" => {
                let eps = param_f64(params, "epsilon", 0.1)?;
                if !(eps.abs() < 0.5) {
                    return Err(Error::InvalidInput(format!(
                        "epsilon must satisfy |epsilon| < 0.5, got {eps}"
                    )));
                }
                Self::from_model(
                    "contact3d_perturbed",
                    3,
                    2,
                    Kind::Contact3d,
                    FrameModel::Contact { eps },
                    Volume::Lebesgue,
                )
            }
            "quasicontact4d" => Self::from_model(
                "quasicontact4d",
                4,
                3,
                Kind::Quasicontact4d,
                FrameModel::Quasicontact,
                Volume::Lebesgue,
            ),
            other => Err(Error::Catalog(other.to_string())),
        }
    }

    pub fn from_config(cfg: &StructureConfig) -> Result<Self> {
        let mut s = Self::builtin(&cfg.name, &cfg.params)?;
        match &cfg.volume {
            None => {}
            Some(VolumeConfig::Named(v)) => match v.as_str() {
                "lebesgue" => s.volume = Volume::Lebesgue,
                "riemannian" if s.k == s.n => s.volume = Volume::Riemannian,
                other => {
                    return Err(Error::InvalidInput(format!("unknown volume '{other}'")));
                }
            },
            Some(VolumeConfig::Density { density_expr }) => {
                let e = Expr::parse(density_expr)?;
                if e.arity() > s.n {
                    return Err(Error::InvalidInput(format!(
                        "density uses x{} but dimension is {}",
                        e.arity(),
                        s.n
                    )));
                }
                s.volume = Volume::Density(e);
            }
        }
        Ok(s)
    }

    pub fn with_volume(mut self, volume: Volume) -> Result<Self> {
        if matches!(volume, Volume::Riemannian) && self.k != self.n {
            return Err(Error::InvalidStructure(
                "Riemannian volume needs a full-rank frame".into(),
            ));
        }
        self.volume = volume;
        Ok(self)
    }

    pub fn is_riemannian(&self) -> bool {
        self.k == self.n
    }

    pub fn atlas(&self) -> Atlas {
        self.atlas
    }

    pub fn volume(&self) -> &Volume {
        &self.volume
    }

    /// Period of each coordinate, if it is an angle.
    pub fn periods(&self) -> &[Option<f64>] {
        &self.periods
    }

    /// Default box used for grid checks.
    pub fn sample_box(&self) -> &[(f64, f64)] {
        &self.sample_box
    }

    /// `to - from`, with periodic coordinates wrapped into `(-P/2, P/2]`.
    pub fn displacement(&self, from: &[f64], to: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.n,
            (0..self.n).map(|i| {
                let d = to[i] - from[i];
                match self.periods[i] {
                    Some(p) => d - p * (d / p).round(),
                    None => d,
                }
            }),
        )
    }

    pub(crate) fn check_point(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.n {
            return Err(Error::InvalidInput(format!(
                "point has length {}, expected {}",
                q.len(),
                self.n
            )));
        }
        if q.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite coordinate".into()));
        }
        Ok(())
    }

    /// Frame entries (row-major k×n), generically.
    fn frame_generic<T: DualNum<Primitive = f64> + Copy>(&self, q: &[T]) -> Vec<T> {
        let n = self.n;
        let zero = T::from(0.0);
        let one = T::from(1.0);
        let mut f = vec![zero; self.k * n];
        match &self.frame {
            FrameModel::Euclidean => {
                for i in 0..n {
                    f[i * n + i] = one;
                }
            }
            FrameModel::Stereographic { radius } => {
                let r2 = q.iter().fold(zero, |acc, &x| acc + x * x);
                let s = (one + r2) / (2.0 * radius);
                for i in 0..n {
                    f[i * n + i] = s;
                }
            }
            FrameModel::Revolution { profile } => {
                let r = profile.eval(&q[..1]);
                f[0] = one;
                f[3] = r.recip();
            }
            FrameModel::Heisenberg => {
                f[0] = one;
                f[2] = -q[1] * 0.5;
                f[4] = one;
                f[5] = q[0] * 0.5;
            }
            FrameModel::Contact { eps } => {
                f[0] = one;
                f[2] = -q[1] * 0.5;
                f[4] = one;
                f[5] = q[0] * 0.5 + q[0] * q[0] * *eps;
            }
            FrameModel::Quasicontact => {
                f[0] = one;
                f[5] = one;
                f[6] = q[0];
                f[4 + 4 + 2] = q[0] * q[0] * 0.5;
                f[4 + 4 + 3] = one;
            }
            FrameModel::Closure(_) => unreachable!("closure frames are not generic"),
        }
        f
    }

    fn density_generic<T: DualNum<Primitive = f64> + Copy>(&self, q: &[T]) -> T {
        match &self.volume {
            Volume::Lebesgue => T::from(1.0),
            Volume::Riemannian => det_generic(self.frame_generic(q), self.n).abs().recip(),
            Volume::Density(e) => e.eval(q),
            Volume::Closure(_) => unreachable!("closure densities are not generic"),
        }
    }

    fn frame_is_generic(&self) -> bool {
        !matches!(self.frame, FrameModel::Closure(_))
    }

    fn density_is_generic(&self) -> bool {
        match self.volume {
            Volume::Closure(_) => false,
            Volume::Riemannian => self.frame_is_generic(),
            _ => true,
        }
    }

    /// The k×n frame matrix at `q`.
    pub fn frame_matrix(&self, q: &[f64]) -> DMatrix<f64> {
        match &self.frame {
            FrameModel::Closure(f) => f(q),
            _ => DMatrix::from_row_slice(self.k, self.n, &self.frame_generic(q)),
        }
    }

    /// Frame values and first derivatives.
    pub fn frame_jet(&self, q: &[f64]) -> FrameJet {
        if self.frame_is_generic() {
            by_dim!(self.n, jet1_ad(self, q))
        } else {
            self.jet_fd(q, false)
        }
    }

    /// Frame values with first and second derivatives.
    pub fn frame_jet2(&self, q: &[f64]) -> FrameJet {
        if self.frame_is_generic() {
            by_dim!(self.n, jet2_ad(self, q))
        } else {
            self.jet_fd(q, true)
        }
    }

    fn jet_fd(&self, q: &[f64], second: bool) -> FrameJet {
        let n = self.n;
        let f = |x: &[f64]| self.frame_matrix(x);
        let values = f(q);
        let mut first = Vec::with_capacity(n);
        let mut x = q.to_vec();
        for j in 0..n {
            let h = 1e-6 * q[j].abs().max(1.0);
            x[j] = q[j] + h;
            let fp = f(&x);
            x[j] = q[j] - h;
            let fm = f(&x);
            x[j] = q[j];
            first.push((fp - fm) / (2.0 * h));
        }
        let second_derivs = second.then(|| {
            let mut out = vec![DMatrix::zeros(self.k, n); n * n];
            for j in 0..n {
                for l in j..n {
                    let hj = 1e-4 * q[j].abs().max(1.0);
                    let hl = 1e-4 * q[l].abs().max(1.0);
                    let eval = |sj: f64, sl: f64| {
                        let mut y = q.to_vec();
                        y[j] += sj * hj;
                        y[l] += sl * hl;
                        f(&y)
                    };
                    let d = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0))
                        / (4.0 * hj * hl);
                    out[j * n + l] = d.clone();
                    out[l * n + j] = d;
                }
            }
            out
        });
        FrameJet { values, first_derivs: first, second_derivs }
    }

    /// Volume density with respect to chart Lebesgue measure.
    pub fn density(&self, q: &[f64]) -> f64 {
        match &self.volume {
            Volume::Closure(f) => f(q),
            Volume::Riemannian if !self.frame_is_generic() => {
                self.frame_matrix(q).determinant().abs().recip()
            }
            _ => self.density_generic(q),
        }
    }

    /// Density and its gradient.
    pub fn density_jet(&self, q: &[f64]) -> (f64, DVector<f64>) {
        if self.density_is_generic() {
            by_dim!(self.n, density_grad_ad(self, q))
        } else {
            let rho = self.density(q);
            let mut g = DVector::zeros(self.n);
            let mut x = q.to_vec();
            for j in 0..self.n {
                let h = 1e-6 * q[j].abs().max(1.0);
                x[j] = q[j] + h;
                let a = self.density(&x);
                x[j] = q[j] - h;
                let b = self.density(&x);
                x[j] = q[j];
                g[j] = (a - b) / (2.0 * h);
            }
            (rho, g)
        }
    }

    /// Inverse metric `FᵀF` (n×n cometric).
    pub fn cometric(&self, q: &[f64]) -> DMatrix<f64> {
        let f = self.frame_matrix(q);
        f.transpose() * f
    }

    /// Metric tensor; Riemannian structures only.
    pub fn metric(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        if !self.is_riemannian() {
            return Err(Error::Unsupported("metric of a sub-Riemannian structure".into()));
        }
        self.cometric(q)
            .try_inverse()
            .ok_or_else(|| Error::InvalidStructure("degenerate frame".into()))
    }

    /// Rank of the frame matrix at `q`.
    pub fn frame_rank(&self, q: &[f64]) -> usize {
        numeric_rank(&self.frame_matrix(q), 1e-10)
    }

    /// Dimension of the span of the frame and its brackets of length ≤ 3.
    pub fn bracket_rank(&self, q: &[f64]) -> usize {
        let n = self.n;
        let jet = self.frame_jet2(q);
        let second = jet.second_derivs.as_ref().unwrap();
        let field = |i: usize| -> DVector<f64> { jet.values.row(i).transpose() };
        // (DX)_{b,a} = ∂_a X^b
        let dfield = |i: usize| -> DMatrix<f64> {
            DMatrix::from_fn(n, n, |b, a| jet.first_derivs[a][(i, b)])
        };
        let mut vecs: Vec<DVector<f64>> = (0..self.k).map(field).collect();
        for i in 0..self.k {
            for j in i + 1..self.k {
                let (xi, xj) = (field(i), field(j));
                let (dxi, dxj) = (dfield(i), dfield(j));
                let br = &dxj * &xi - &dxi * &xj;
                vecs.push(br.clone());
                // derivative of the bracket, then [X_l, [X_i, X_j]]
                let mut dbr = DMatrix::zeros(n, n);
                for c in 0..n {
                    for b in 0..n {
                        let mut s = 0.0;
                        for a in 0..n {
                            s += second[c * n + a][(j, b)] * xi[a] + dxj[(b, a)] * dxi[(a, c)]
                                - second[c * n + a][(i, b)] * xj[a]
                                - dxi[(b, a)] * dxj[(a, c)];
                        }
                        dbr[(b, c)] = s;
                    }
                }
                for l in 0..self.k {
                    let xl = field(l);
                    vecs.push(&dbr * &xl - dfield(l) * &br);
                }
            }
        }
        let m = DMatrix::from_columns(&vecs);
        numeric_rank(&m, 1e-8)
    }

    /// Checks the bracket condition on a uniform grid of `per_axis^n` points
    /// in [-1, 1]^n. Returns the first failing point.
    pub fn check_hormander(&self, per_axis: usize) -> Result<()> {
        let n = self.n;
        let total = per_axis.pow(n as u32);
        for idx in 0..total {
            let mut rem = idx;
            let q: Vec<f64> = (0..n)
                .map(|_| {
                    let i = rem % per_axis;
                    rem /= per_axis;
                    -1.0 + 2.0 * i as f64 / (per_axis.max(2) - 1) as f64
                })
                .collect();
            if self.bracket_rank(&q) < n {
                return Err(Error::InvalidStructure(format!(
                    "brackets do not span at {q:?}"
                )));
            }
        }
        Ok(())
    }

    /// `H(q, p) = ½ Σ ⟨p, X_i(q)⟩²`.
    pub fn hamiltonian(&self, q: &Point, p: &Covector) -> Result<f64> {
        self.check_point(q.as_slice())?;
        if p.dim() != self.n {
            return Err(Error::InvalidInput(format!(
                "covector has length {}, expected {}",
                p.dim(),
                self.n
            )));
        }
        Ok(self.hamiltonian_raw(q.as_slice(), &p.0))
    }

    pub fn hamiltonian_raw(&self, q: &[f64], p: &DVector<f64>) -> f64 {
        let u = self.frame_matrix(q) * p;
        0.5 * u.norm_squared()
    }

    /// Coefficients of `Δ = Σ X_i² + (div X_i) X_i`: the second-order
    /// matrix `Σ X_i X_iᵀ` and the drift vector.
    pub fn sublaplacian_coeffs(&self, q: &Point) -> Result<(DMatrix<f64>, DVector<f64>)> {
        self.check_point(q.as_slice())?;
        let q = q.as_slice();
        let n = self.n;
        let (rho, grad_rho) = self.density_jet(q);
        if !(rho > 0.0) {
            return Err(Error::InvalidStructure(format!("density {rho} at {q:?}")));
        }
        let jet = self.frame_jet(q);
        let f = &jet.values;
        let second = f.transpose() * f;
        let mut first = DVector::zeros(n);
        for i in 0..self.k {
            let mut div = 0.0;
            for a in 0..n {
                div += jet.first_derivs[a][(i, a)] + f[(i, a)] * grad_rho[a] / rho;
            }
            for b in 0..n {
                let mut adv = 0.0;
                for a in 0..n {
                    adv += f[(i, a)] * jet.first_derivs[a][(i, b)];
                }
                first[b] += adv + div * f[(i, b)];
            }
        }
        Ok((second, first))
    }

    /// Gauss curvature of a 2D Riemannian structure (Brioschi formula).
    pub fn gauss_curvature(&self, q: &Point) -> Result<f64> {
        if !(self.n == 2 && self.k == 2) {
            return Err(Error::Unsupported("curvature probe needs a 2D Riemannian structure".into()));
        }
        self.check_point(q.as_slice())?;
        let q = q.as_slice();
        // metric entries with gradient and Hessian
        let (g, dg, ddg) = if self.frame_is_generic() {
            metric2_ad(self, q)
        } else {
            metric2_fd(self, q)
        };
        let (e, f, gg) = (g[0], g[1], g[2]);
        let (e_u, e_v, f_u, f_v, g_u, g_v) = (dg[0][0], dg[0][1], dg[1][0], dg[1][1], dg[2][0], dg[2][1]);
        let e_vv = ddg[0][3];
        let f_uv = ddg[1][1];
        let g_uu = ddg[2][0];
        let m1 = nalgebra::Matrix3::new(
            -0.5 * e_vv + f_uv - 0.5 * g_uu,
            0.5 * e_u,
            f_u - 0.5 * e_v,
            f_v - 0.5 * g_u,
            e,
            f,
            0.5 * g_v,
            f,
            gg,
        );
        let m2 = nalgebra::Matrix3::new(0.0, 0.5 * e_v, 0.5 * g_u, 0.5 * e_v, e, f, 0.5 * g_u, f, gg);
        let w = e * gg - f * f;
        Ok((m1.determinant() - m2.determinant()) / (w * w))
    }
}

/// Number of singular values above `rel_tol · σ_max`.
pub fn numeric_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

fn jet1_ad<const N: usize>(s: &Structure, q: &[f64]) -> FrameJet {
    let x: Vec<DualSVec64<N>> =
        (0..N).map(|i| DualSVec64::<N>::from_re(q[i]).derivative(i)).collect();
    let vals = s.frame_generic(&x);
    let (k, n) = (s.k, s.n);
    let mut values = DMatrix::zeros(k, n);
    let mut first = vec![DMatrix::zeros(k, n); n];
    for i in 0..k {
        for a in 0..n {
            let v = &vals[i * n + a];
            values[(i, a)] = v.re;
            let g = v.eps.unwrap_generic(Const::<N>, U1);
            for j in 0..n {
                first[j][(i, a)] = g[j];
            }
        }
    }
    FrameJet { values, first_derivs: first, second_derivs: None }
}

fn jet2_ad<const N: usize>(s: &Structure, q: &[f64]) -> FrameJet {
    let x: Vec<Dual2SVec64<N>> =
        (0..N).map(|i| Dual2SVec64::<N>::from_re(q[i]).derivative(i)).collect();
    let vals = s.frame_generic(&x);
    let (k, n) = (s.k, s.n);
    let mut values = DMatrix::zeros(k, n);
    let mut first = vec![DMatrix::zeros(k, n); n];
    let mut second = vec![DMatrix::zeros(k, n); n * n];
    for i in 0..k {
        for a in 0..n {
            let v = &vals[i * n + a];
            values[(i, a)] = v.re;
            let g = v.v1.unwrap_generic(U1, Const::<N>);
            let h = v.v2.unwrap_generic(Const::<N>, Const::<N>);
            for j in 0..n {
                first[j][(i, a)] = g[j];
                for l in 0..n {
                    second[j * n + l][(i, a)] = h[(j, l)];
                }
            }
        }
    }
    FrameJet { values, first_derivs: first, second_derivs: Some(second) }
}

fn density_grad_ad<const N: usize>(s: &Structure, q: &[f64]) -> (f64, DVector<f64>) {
    let x: Vec<DualSVec64<N>> =
        (0..N).map(|i| DualSVec64::<N>::from_re(q[i]).derivative(i)).collect();
    let d = s.density_generic(&x);
    let g = d.eps.unwrap_generic(Const::<N>, U1);
    (d.re, DVector::from_iterator(N, g.iter().cloned()))
}

/// Metric entries `[E, F, G]` of a 2D structure, their gradients and
/// Hessians (row-major 2×2), from `g = (FᵀF)⁻¹`.
type Metric2 = ([f64; 3], [[f64; 2]; 3], [[f64; 4]; 3]);

fn metric2_generic<T: DualNum<Primitive = f64> + Copy>(f: &[T]) -> [T; 3] {
    // cometric entries
    let a = f[0] * f[0] + f[2] * f[2];
    let b = f[0] * f[1] + f[2] * f[3];
    let c = f[1] * f[1] + f[3] * f[3];
    let det = a * c - b * b;
    [c / det, -b / det, a / det]
}

fn metric2_ad(s: &Structure, q: &[f64]) -> Metric2 {
    let x: Vec<Dual2SVec64<2>> =
        (0..2).map(|i| Dual2SVec64::<2>::from_re(q[i]).derivative(i)).collect();
    let m = metric2_generic(&s.frame_generic(&x));
    let mut g = [0.0; 3];
    let mut dg = [[0.0; 2]; 3];
    let mut ddg = [[0.0; 4]; 3];
    for e in 0..3 {
        g[e] = m[e].re;
        let gr = m[e].v1.unwrap_generic(U1, Const::<2>);
        let h = m[e].v2.unwrap_generic(Const::<2>, Const::<2>);
        dg[e] = [gr[0], gr[1]];
        ddg[e] = [h[(0, 0)], h[(0, 1)], h[(1, 0)], h[(1, 1)]];
    }
    (g, dg, ddg)
}

fn metric2_fd(s: &Structure, q: &[f64]) -> Metric2 {
    let eval = |x: &[f64]| -> [f64; 3] {
        let f = s.frame_matrix(x);
        metric2_generic(&[f[(0, 0)], f[(0, 1)], f[(1, 0)], f[(1, 1)]])
    };
    let g = eval(q);
    let h = 1e-4;
    let at = |du: f64, dv: f64| eval(&[q[0] + du, q[1] + dv]);
    let (pu, mu, pv, mv) = (at(h, 0.0), at(-h, 0.0), at(0.0, h), at(0.0, -h));
    let (pp, pm, mp, mm) = (at(h, h), at(h, -h), at(-h, h), at(-h, -h));
    let mut dg = [[0.0; 2]; 3];
    let mut ddg = [[0.0; 4]; 3];
    for e in 0..3 {
        dg[e] = [(pu[e] - mu[e]) / (2.0 * h), (pv[e] - mv[e]) / (2.0 * h)];
        let uu = (pu[e] - 2.0 * g[e] + mu[e]) / (h * h);
        let vv = (pv[e] - 2.0 * g[e] + mv[e]) / (h * h);
        let uv = (pp[e] - pm[e] - mp[e] + mm[e]) / (4.0 * h * h);
        ddg[e] = [uu, uv, uv, vv];
    }
    (g, dg, ddg)
}
