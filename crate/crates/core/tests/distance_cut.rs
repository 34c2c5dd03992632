use heatlocus::distance::{self, ShootingControls};
use heatlocus::flow;
use heatlocus::{Covector, Point, Structure};
use nalgebra::DVector;
use serde_json::json;
use std::f64::consts::PI;

fn st(name: &str) -> Structure {
    Structure::builtin(name, &json!({})).unwrap()
}

#[test]
fn sphere_antipodal_is_a_continuum() {
    let s = st("round_sphere");
    let q1 = [0.3, -0.2];
    let r2 = q1[0] * q1[0] + q1[1] * q1[1];
    let anti = Point::new([-q1[0] / r2, -q1[1] / r2]);
    let res = distance::distance(&s, &Point::new(q1), &anti, &ShootingControls::default()).unwrap();
    assert!((res.d - PI).abs() < 1e-7, "{}", res.d);
    assert!(res.non_discrete);
    assert!(res.minimizers.len() > 2);
}

#[test]
fn heisenberg_vertical_axis() {
    let s = st("heisenberg");
    let z = 0.7;
    let res = distance::distance(&s, &Point::new([0.0; 3]), &Point::new([0.0, 0.0, z]), &ShootingControls::default()).unwrap();
    assert!((res.d - (4.0 * PI * z).sqrt()).abs() < 1e-7, "{}", res.d);
    assert!(res.non_discrete);
}

#[test]
fn heisenberg_generic_point_has_unique_minimizer() {
    let s = st("heisenberg");
    let res = distance::distance(&s, &Point::new([0.0; 3]), &Point::new([0.8, -0.3, 0.2]), &ShootingControls::default()).unwrap();
    assert_eq!(res.minimizers.len(), 1);
    assert!(!res.non_discrete);
    for g in &res.minimizers {
        let end = g.samples.last().unwrap();
        assert!((end.t - res.d).abs() < 1e-7);
        assert!((end.q[0] - 0.8).abs() < 1e-7 && (end.q[1] + 0.3).abs() < 1e-7 && (end.q[2] - 0.2).abs() < 1e-7);
    }
}

#[test]
fn heisenberg_cut_equals_conjugate() {
    let s = st("heisenberg");
    let q0 = Point::new([0.0; 3]);
    let c = 1.7;
    let lam = Covector(flow::normalize(&s, q0.as_slice(), &DVector::from_vec(vec![0.6, 0.8, c])).unwrap().0);
    let info = distance::cut_time(&s, &q0, &Covector(lam.0.clone()), 10.0, &ShootingControls::light()).unwrap();
    let expect = 2.0 * PI / lam.0[2].abs();
    assert!((info.t_cut.unwrap() - expect).abs() < 1e-6, "{info:?} vs {expect}");
    assert!(info.cut_equals_conjugate);
}
