//! Shared inputs for the kernel benchmarks.

use heatlocus::{Covector, Point, Structure};

/// A built-in structure with default parameters.
pub fn builtin(name: &str) -> Structure {
    Structure::builtin(name, &Default::default()).expect("built-in structure")
}

/// A base point and a unit-speed covector for each sub-Riemannian built-in.
pub fn sr_geodesic(name: &str) -> (Structure, Point, Covector) {
    let s = builtin(name);
    let q = Point::new(vec![0.1; s.n]);
    let mut raw = vec![0.6, 0.8, 1.1, -0.4];
    raw.truncate(s.n);
    let p = Covector::new(raw);
    let h = s.hamiltonian(&q, &p).expect("hamiltonian");
    let unit = Covector(&p.0 / (2.0 * h).sqrt());
    (s, q, unit)
}
