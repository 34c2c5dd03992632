use heatlocus::flow;
use heatlocus::singularity::{self, catalog, classify, make_fixture, MapFn, SmoothMapSample, CATALOG, M_MAX};
use heatlocus::{Covector, Point, Structure};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

#[test]
fn catalog_rank_deficits() {
    for (label, base) in CATALOG {
        let m = catalog(label, base).unwrap();
        let r = singularity::rank_deficit(&m).unwrap();
        let expected = if label.starts_with('A') { 1 } else { 2 };
        assert_eq!(r, expected, "{label}");
    }
    // D4: kernel is span{∂x, ∂y}
    let k = singularity::kernel_basis(&catalog("D4+", 3).unwrap()).unwrap();
    for v in k {
        assert!(v[2].abs() < 1e-12);
    }
}

#[test]
fn a_m_has_type_m() {
    for m in 2..=6 {
        let label = format!("A{m}");
        for n in m.max(2) - 1..=5 {
            if n < CATALOG.iter().find(|(l, _)| *l == label).unwrap().1 {
                continue;
            }
            let map = catalog(&label, n).unwrap();
            assert_eq!(singularity::type_1m(&map, M_MAX).unwrap(), Some(m), "{label} n={n}");
        }
    }
}

#[test]
fn catalog_a5_formula() {
    let m = catalog("A5", 4).unwrap();
    let (x, y, z, t) = (0.3, -0.7, 1.1, 0.4);
    let v = m.eval(&[x, y, z, t]).unwrap();
    let first = x.powi(5) + x.powi(3) * y + x * x * z + x * t;
    assert!((v[0] - first).abs() < 1e-15);
    assert_eq!(&v[1..], &[y, z, t]);
    let d = catalog("D4-", 3).unwrap().eval(&[x, y, z]).unwrap();
    assert!((d[0] - (x * x - y * y + x * z)).abs() < 1e-15);
    assert!((d[1] - x * y).abs() < 1e-15);
}

#[test]
fn suspension_keeps_extra_coordinates() {
    let m = catalog("A3", 5).unwrap();
    let v = m.eval(&[0.5, 0.2, 0.1, -0.3, 0.9]).unwrap();
    assert!((v[0] - (0.125 + 0.1)).abs() < 1e-15);
    assert_eq!(&v[1..], &[0.2, 0.1, -0.3, 0.9]);
}

#[test]
fn only_a3_and_a5_are_admissible() {
    for (label, base) in CATALOG {
        for n in base..=5 {
            let rep = classify(&catalog(label, n).unwrap(), M_MAX).unwrap();
            assert_eq!(rep.admissible, label == "A3" || label == "A5", "{label} n={n}");
        }
    }
}

#[test]
fn labels_are_recovered() {
    for (label, base) in CATALOG {
        let rep = classify(&catalog(label, base).unwrap(), M_MAX).unwrap();
        assert_eq!(rep.label, label);
        if label.starts_with('A') {
            assert_eq!(rep.type_m, Some(label[1..].parse().unwrap()));
        } else {
            assert_eq!(rep.type_m, None);
        }
    }
}

fn random_invertible(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    loop {
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let s = m.clone().svd(false, false).singular_values;
        if s.min() > 0.2 * s.max() {
            return m;
        }
    }
}

#[test]
fn classification_is_invariant_under_affine_changes() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let labels = ["A2", "A3", "A4", "A5", "A6", "D4+", "D4-", "D5+", "D6-", "E6+", "E6-"];
    for i in 0..20 {
        let label = labels[i % labels.len()];
        let base_n = CATALOG.iter().find(|(l, _)| *l == label).unwrap().1;
        let n = base_n.max(2);
        let map = catalog(label, n).unwrap();
        let reference = classify(&map, M_MAX).unwrap();
        let a = random_invertible(&mut rng, n);
        let b = random_invertible(&mut rng, n);
        let base = Point(DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0)));
        let v = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        let moved = map.affine_conjugate(a, b, base, v).unwrap();
        let rep = classify(&moved, M_MAX).unwrap();
        assert_eq!(rep.rank_deficit, reference.rank_deficit, "{label}");
        assert_eq!(rep.type_m, reference.type_m, "{label}");
        assert_eq!(rep.admissible, reference.admissible, "{label}");
        // D5± and E6± are exchanged by sign flips of source and target
        // coordinates, so only their stem survives a general linear change
        if label.starts_with("D5") || label.starts_with("E6") {
            assert_eq!(rep.label[..2], reference.label[..2], "{label}");
        } else {
            assert_eq!(rep.label, reference.label, "{label}");
        }
    }
}

#[test]
fn d5_and_e6_signs_are_linearly_equivalent() {
    // x ↦ −x, t ↦ −t on the source and y₁, y₂ ↦ −y₂, −y₄ on the target
    // turns D5+ into D5−
    let plus = catalog("D5+", 4).unwrap();
    let minus = catalog("D5-", 4).unwrap();
    let b = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1.0, 1.0, -1.0]));
    let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0, 1.0, -1.0]));
    let moved = plus.affine_conjugate(a, b, Point::new([0.0; 4]), DVector::zeros(4)).unwrap();
    for x in [[0.3, -0.2, 0.5, 0.7], [-1.1, 0.4, 0.2, -0.3]] {
        let (u, v) = (moved.eval(&x).unwrap(), minus.eval(&x).unwrap());
        for i in 0..4 {
            assert!((u[i] - v[i]).abs() < 1e-14);
        }
    }
    let b = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1.0, -1.0, 1.0, -1.0]));
    let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0, -1.0, 1.0, -1.0]));
    let moved = catalog("E6+", 5).unwrap().affine_conjugate(a, b, Point::new([0.0; 5]), DVector::zeros(5)).unwrap();
    let minus = catalog("E6-", 5).unwrap();
    let x = [0.3, -0.2, 0.5, 0.7, -0.4];
    let (u, v) = (moved.eval(&x).unwrap(), minus.eval(&x).unwrap());
    for i in 0..5 {
        assert!((u[i] - v[i]).abs() < 1e-14);
    }
}

#[test]
fn sphere_exponential_map_at_first_conjugate_covector() {
    let s = Structure::builtin("round_sphere", &serde_json::json!({})).unwrap();
    let q = Point::new([0.5, 0.0]);
    let unit = {
        let h = s.hamiltonian(&q, &Covector::new([1.0, 0.0])).unwrap();
        1.0 / (2.0 * h).sqrt()
    };
    let lam0 = [std::f64::consts::PI * unit, 0.0];
    let s2 = s.clone();
    let q2 = q.clone();
    let f: MapFn = Arc::new(move |l: &[f64]| Ok(flow::exp_map(&s2, &q2, &Covector::new(l.to_vec()), 1.0)?.0.as_slice().to_vec()));
    let map = SmoothMapSample::numeric(f, Point::new(lam0), 0.05).unwrap();
    assert_eq!(singularity::rank_deficit(&map).unwrap(), 1);
    // every covector of this length reaches the antipode: the kernel direction
    // is a symmetry family and no finite order is certified
    assert_eq!(singularity::type_1m(&map, 6).unwrap(), None);
}

#[test]
fn fixture_orders() {
    for eta in [3, 4] {
        let fx = make_fixture(eta, 1.0, 0.3).unwrap();
        let a = fx.analysis().unwrap();
        assert_eq!(a.r, 1, "eta={eta}");
        assert_eq!(a.m, Some(2 * eta - 1), "eta={eta}: {:?}", a.evidence);
        assert!((a.value - 0.25).abs() < 1e-14);
        let c = fx.axis_sandwich(0.2, 20);
        assert!(c > 1.0 && c < 10.0, "eta={eta}: C={c}");
    }
    assert!(make_fixture(2, 1.0, 0.0).is_err());
}

#[test]
fn fixture_c0_left_at_origin() {
    let fx = make_fixture(3, 2.0, 0.5).unwrap();
    assert!(fx.theta(&[0.0, 0.0]).unwrap().abs() < 1e-15);
    assert!((fx.c0_left(&[0.0, 0.0]).unwrap() - 0.5).abs() < 1e-15);
    // along the front, θ inverts σ
    let z = [0.2, fx.gamma(0.2).0];
    let th = fx.theta(&z).unwrap();
    let arclength = heatlocus::quadrature::integrate_1d(
        &mut |x: f64| (1.0 + fx.gamma(x).1.powi(2)).sqrt(),
        0.0,
        0.2,
        &[],
        &Default::default(),
    )
    .unwrap()
    .value;
    assert!((2.0 * th + 0.5 * th.powi(3) / 6.0 - arclength).abs() < 1e-12);
}
