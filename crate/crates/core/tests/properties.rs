use heatlocus::distance::{self, ShootingControls};
use heatlocus::flow::{self, FlowControls};
use heatlocus::geometry::FrameFn;
use heatlocus::{Covector, Point, Structure, Volume};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use serde_json::json;
use std::sync::Arc;

const ALL: [&str; 6] = ["euclidean", "round_sphere", "revolution_surface", "heisenberg", "contact3d_perturbed", "quasicontact4d"];
const RIEMANNIAN: [&str; 3] = ["euclidean", "round_sphere", "revolution_surface"];

fn st(name: &str) -> Structure {
    Structure::builtin(name, &json!({})).unwrap()
}

/// Maps `u ∈ [0,1]^n` into the central half of the structure's sample box.
fn point_in(s: &Structure, u: &[f64]) -> Point {
    let coords: Vec<f64> = s.sample_box().iter().zip(u).map(|((a, b), t)| 0.5 * (a + b) + 0.5 * (b - a) * (t - 0.5)).collect();
    Point::new(coords)
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-3);
    v.iter().map(|x| x / n).collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn hamiltonian_is_quadratic(which in 0usize..6, u in prop::collection::vec(0.0f64..1.0, 4), p in prop::collection::vec(-3.0f64..3.0, 4), k in -4i32..=4) {
        let s = st(ALL[which]);
        let q = point_in(&s, &u[..s.n]);
        let p = Covector::new(p[..s.n].to_vec());
        let alpha = 2f64.powi(k);
        let h = s.hamiltonian(&q, &p).unwrap();
        let scaled = s.hamiltonian(&q, &Covector(&p.0 * alpha)).unwrap();
        prop_assert!(h >= 0.0);
        prop_assert_eq!(scaled, alpha * alpha * h);
    }

    #[test]
    fn hamiltonian_ignores_frame_rotation(which in 0usize..3, u in prop::collection::vec(0.0f64..1.0, 2), p in prop::collection::vec(-3.0f64..3.0, 2), w in -2.0f64..2.0) {
        let s = st(RIEMANNIAN[which]);
        let base = s.clone();
        // pointwise rotation by an angle that varies over the chart
        let frame: FrameFn = Arc::new(move |q: &[f64]| {
            let x = base.frame_matrix(q);
            let a = w * (q[0] + 0.3 * q[1]).sin();
            let r = DMatrix::from_row_slice(2, 2, &[a.cos(), -a.sin(), a.sin(), a.cos()]);
            r * x
        });
        let rotated = Structure::custom("rotated", 2, 2, frame, Volume::Lebesgue).unwrap();
        let q = point_in(&s, &u);
        let p = Covector::new(p);
        let h0 = s.hamiltonian(&q, &p).unwrap();
        let h1 = rotated.hamiltonian(&q, &p).unwrap();
        prop_assert!((h0 - h1).abs() <= 1e-12 * h0.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn exponential_map_depends_on_t_lambda(which in 0usize..3, u in prop::collection::vec(0.0f64..1.0, 2), dir in prop::collection::vec(-1.0f64..1.0, 2), len in 0.2f64..1.5, si in 0usize..3) {
        let s = st(RIEMANNIAN[which]);
        let q = point_in(&s, &u);
        let lam = Covector::new(unit(&dir).iter().map(|x| x * len).collect::<Vec<_>>());
        let sc = [0.5, 2.0, 3.0][si];
        let t = 0.8;
        let a = flow::exp_map(&s, &q, &lam, sc * t).unwrap();
        let b = flow::exp_map(&s, &q, &Covector(&lam.0 * sc), t).unwrap();
        prop_assert!((&a.0 - &b.0).norm() <= 1e-10 * (1.0 + a.0.norm()), "{} vs {}", a.0, b.0);
    }

    #[test]
    fn energy_is_conserved(which in 0usize..6, u in prop::collection::vec(0.0f64..1.0, 4), dir in prop::collection::vec(-1.0f64..1.0, 4), t_end in 1.0f64..10.0) {
        let s = st(ALL[which]);
        let q = point_in(&s, &u[..s.n]);
        let lam = Covector::new(unit(&dir[..s.n]));
        let (unit_lam, _) = flow::normalize(&s, q.as_slice(), &lam.0).unwrap();
        let samples = flow::flow(&s, &q, &Covector(unit_lam), t_end, &FlowControls::default()).unwrap();
        let drift = flow::energy_drift(&s, &samples);
        prop_assert!(drift <= 1e-9, "drift {drift}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, ..ProptestConfig::default() })]

    #[test]
    fn d_exp_matches_finite_differences(which in 0usize..6, u in prop::collection::vec(0.0f64..1.0, 4), dir in prop::collection::vec(-1.0f64..1.0, 4), len in 0.3f64..2.0) {
        let s = st(ALL[which]);
        let q = point_in(&s, &u[..s.n]);
        let (lam_unit, _) = flow::normalize(&s, q.as_slice(), &DVector::from_column_slice(&unit(&dir[..s.n]))).unwrap();
        let lam = Covector(lam_unit * len);
        let j = flow::d_exp(&s, &q, &lam).unwrap();
        let h = 1e-5 * lam.0.norm();
        let mut fd = DMatrix::zeros(s.n, s.n);
        for c in 0..s.n {
            let mut lp = lam.0.clone();
            lp[c] += h;
            let mut lm = lam.0.clone();
            lm[c] -= h;
            let qp = flow::exp_map(&s, &q, &Covector(lp), 1.0).unwrap();
            let qm = flow::exp_map(&s, &q, &Covector(lm), 1.0).unwrap();
            fd.set_column(c, &((qp.0 - qm.0) / (2.0 * h)));
        }
        prop_assert!((&fd - &j).norm() <= 1e-6 * j.norm(), "{} vs {}", fd, j);
    }
}

#[test]
fn det_d_exp_keeps_its_sign_before_conjugate_time() {
    for (name, lam) in [("round_sphere", vec![0.4, -0.3]), ("heisenberg", vec![0.6, 0.8, 1.3]), ("contact3d_perturbed", vec![0.5, -0.2, 0.9])] {
        let s = st(name);
        let q = Point::new(vec![0.1; s.n]);
        let (u, _) = flow::normalize(&s, q.as_slice(), &DVector::from_vec(lam)).unwrap();
        let lam0 = Covector(u);
        let tc = flow::first_conjugate_time(&s, &q, &lam0, 12.0).unwrap().expect(name);
        let sign0 = flow::d_exp(&s, &q, &Covector(&lam0.0 * (0.01 * tc))).unwrap().determinant().signum();
        for k in 1..80 {
            let t = tc * k as f64 / 80.0;
            let d = flow::d_exp(&s, &q, &Covector(&lam0.0 * t)).unwrap().determinant();
            assert_eq!(d.signum(), sign0, "{name}: sign change before t_conj at {t}");
        }
        let after = flow::d_exp(&s, &q, &Covector(&lam0.0 * (tc * 1.02))).unwrap().determinant();
        assert_eq!(after.signum(), -sign0, "{name}");
    }
}

#[test]
fn hinged_energy_bounded_below() {
    let c = ShootingControls::light();
    for (name, q1, q2) in [("euclidean", [0.0, 0.0], [1.0, 0.5]), ("round_sphere", [0.2, -0.1], [-0.3, 0.4])] {
        let s = st(name);
        let (q1, q2) = (Point::new(q1), Point::new(q2));
        let d = distance::distance(&s, &q1, &q2, &c).unwrap().d;
        for i in 0..4 {
            for j in 0..4 {
                let q = Point::new([-0.6 + 0.4 * i as f64, -0.6 + 0.4 * j as f64]);
                let h = distance::hinged(&s, &q1, &q2, &q, &c).unwrap();
                assert!(h >= d * d / 4.0 - 1e-9, "{name} at {q:?}: {h} < {}", d * d / 4.0);
            }
        }
    }
}

#[test]
fn midpoint_of_sphere_geodesic() {
    let s = st("round_sphere");
    let q1 = Point::new([0.1, 0.2]);
    let (u, _) = flow::normalize(&s, q1.as_slice(), &DVector::from_vec(vec![1.0, -0.5])).unwrap();
    let q2 = flow::exp_map(&s, &q1, &Covector(&u * 1.0), 1.0).unwrap();
    let mid = flow::exp_map(&s, &q1, &Covector(&u * 0.5), 1.0).unwrap();
    let h = distance::hinged(&s, &q1, &q2, &mid, &ShootingControls::light()).unwrap();
    assert!((h - 0.25).abs() < 1e-9, "{h}");
}
