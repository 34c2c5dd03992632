//! Truncated power series in one variable and sparse polynomials that can
//! be evaluated on them.

use std::ops::{Add, Mul, Neg, Sub};

/// Arithmetic shared by `f64` and [`Series`].
pub trait Ring: Clone + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self> {
    fn constant(c: f64) -> Self;
    fn scale(&self, c: f64) -> Self;
}

impl Ring for f64 {
    fn constant(c: f64) -> Self {
        c
    }
    fn scale(&self, c: f64) -> Self {
        self * c
    }
}

/// `Σ c_k s^k` truncated after `c.len() − 1`. Mixed lengths combine to the
/// longer one, so constants can be length 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Series(pub Vec<f64>);

impl Series {
    pub fn zero(degree: usize) -> Self {
        Series(vec![0.0; degree + 1])
    }

    pub fn degree(&self) -> usize {
        self.0.len() - 1
    }

    pub fn coeff(&self, k: usize) -> f64 {
        self.0.get(k).copied().unwrap_or(0.0)
    }

    /// Value at `s`, by Horner.
    pub fn eval(&self, s: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * s + c)
    }
}

impl Add for Series {
    type Output = Series;
    fn add(self, o: Series) -> Series {
        let (mut long, short) = if self.0.len() >= o.0.len() { (self, o) } else { (o, self) };
        for (a, b) in long.0.iter_mut().zip(short.0) {
            *a += b;
        }
        long
    }
}

impl Neg for Series {
    type Output = Series;
    fn neg(self) -> Series {
        Series(self.0.into_iter().map(|c| -c).collect())
    }
}

impl Sub for Series {
    type Output = Series;
    fn sub(self, o: Series) -> Series {
        self + (-o)
    }
}

impl Mul for Series {
    type Output = Series;
    fn mul(self, o: Series) -> Series {
        let len = self.0.len().max(o.0.len());
        let mut out = vec![0.0; len];
        for (i, a) in self.0.iter().enumerate() {
            if *a == 0.0 {
                continue;
            }
            for (j, b) in o.0.iter().enumerate().take(len - i) {
                out[i + j] += a * b;
            }
        }
        Series(out)
    }
}

impl Ring for Series {
    fn constant(c: f64) -> Self {
        Series(vec![c])
    }
    fn scale(&self, c: f64) -> Self {
        Series(self.0.iter().map(|x| x * c).collect())
    }
}

/// Sparse polynomial `Σ c · x^α`.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    pub terms: Vec<(f64, Vec<u32>)>,
}

impl Poly {
    /// Parses a list of `(coefficient, exponents)`.
    pub fn new(terms: Vec<(f64, Vec<u32>)>) -> Self {
        Poly { terms }
    }

    /// The coordinate function `x_i` in `n` variables.
    pub fn var(i: usize, n: usize) -> Self {
        let mut e = vec![0; n];
        e[i] = 1;
        Poly { terms: vec![(1.0, e)] }
    }

    pub fn eval<R: Ring>(&self, x: &[R]) -> R {
        let mut acc = R::constant(0.0);
        for (c, e) in &self.terms {
            let mut t = R::constant(*c);
            for (xi, &p) in x.iter().zip(e) {
                for _ in 0..p {
                    t = t * xi.clone();
                }
            }
            acc = acc + t;
        }
        acc
    }

    /// Same polynomial with `extra` unused trailing variables.
    pub fn widen(&self, extra: usize) -> Self {
        Poly {
            terms: self
                .terms
                .iter()
                .map(|(c, e)| (*c, e.iter().cloned().chain(std::iter::repeat_n(0, extra)).collect()))
                .collect(),
        }
    }
}
