//! Deterministic low-discrepancy directions on spheres.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Radical inverse of `i` in base `b`.
pub fn radical_inverse(mut i: u64, b: u64) -> f64 {
    let inv = 1.0 / b as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % b) as f64;
        i /= b;
        f *= inv;
    }
    r
}

/// `count` Halton points in `[0,1)^dim`, shifted modulo 1 by a seeded offset.
pub fn halton(count: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    assert!(dim <= PRIMES.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..dim).map(|_| if seed == 0 { 0.0 } else { rng.random::<f64>() }).collect();
    (1..=count as u64)
        .map(|i| (0..dim).map(|d| (radical_inverse(i, PRIMES[d]) + shift[d]).fract()).collect())
        .collect()
}

/// `count` well-spread unit vectors in ℝⁿ. Pairs of Halton coordinates go
/// through the Box–Muller map, which makes the direction uniform.
pub fn sphere_directions(count: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    if n == 1 {
        return (0..count).map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 }]).collect();
    }
    let pairs = n.div_ceil(2);
    halton(count, 2 * pairs, seed)
        .into_iter()
        .map(|u| {
            let mut g = Vec::with_capacity(2 * pairs);
            for k in 0..pairs {
                let r = (-2.0 * u[2 * k].max(1e-12).ln()).sqrt();
                let a = 2.0 * std::f64::consts::PI * u[2 * k + 1];
                g.push(r * a.cos());
                g.push(r * a.sin());
            }
            g.truncate(n);
            let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            g.iter().map(|x| x / norm).collect()
        })
        .collect()
}

/// Hyperspherical angles of a unit vector: `n − 1` values, the last in `(−π, π]`.
pub fn hyperspherical_angles(u: &[f64]) -> Vec<f64> {
    let n = u.len();
    let mut out = Vec::with_capacity(n.saturating_sub(1));
    for i in 0..n.saturating_sub(1) {
        let tail: f64 = u[i + 1..].iter().map(|x| x * x).sum::<f64>().sqrt();
        if i == n - 2 {
            out.push(u[n - 1].atan2(u[n - 2]));
        } else {
            out.push(tail.atan2(u[i]));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radical_inverse_base2() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(2, 2), 0.25);
        assert_eq!(radical_inverse(3, 2), 0.75);
        assert!((radical_inverse(5, 3) - (2.0 / 3.0 + 1.0 / 9.0)).abs() < 1e-15);
    }

    #[test]
    fn directions_are_unit_and_deterministic() {
        for n in 1..=5 {
            let a = sphere_directions(64, n, 7);
            let b = sphere_directions(64, n, 7);
            assert_eq!(a, b);
            for v in &a {
                let norm: f64 = v.iter().map(|x| x * x).sum();
                assert!((norm - 1.0).abs() < 1e-12);
            }
        }
        assert_ne!(sphere_directions(8, 3, 1), sphere_directions(8, 3, 2));
    }

    #[test]
    fn directions_cover_the_circle() {
        let d = sphere_directions(512, 2, 0);
        let mut angles: Vec<f64> = d.iter().map(|v| v[1].atan2(v[0])).collect();
        angles.sort_by(f64::total_cmp);
        let gap = angles.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        assert!(gap < 0.05, "{gap}");
    }

    #[test]
    fn angles_of_axis_vectors() {
        let a = hyperspherical_angles(&[0.0, 1.0]);
        assert!((a[0] - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        let a = hyperspherical_angles(&[0.0, 0.0, 1.0]);
        assert!((a[0] - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }
}
