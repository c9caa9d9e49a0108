use deformrecon::functionals::{tv_sum, RegKind, RegOperatorB};
use deformrecon::prox::{prox_l2_source, prox_quadratic, prox_tv, prox_tv_1d_exact};
use deformrecon::CellGrid;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn piecewise_signal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut level = rng.gen_range(-1.0..1.0);
    (0..n)
        .map(|_| {
            if rng.gen_bool(0.1) {
                level = rng.gen_range(-1.0..1.0);
            }
            level + 0.1 * rng.gen_range(-1.0..1.0)
        })
        .collect()
}

/// Optimality of `x` for the 1-D TV prox: the dual `u_k = sum_{i<=k} (y_i - x_i)`
/// must satisfy `|u| <= lambda`, `u_{n-1} = 0` and `u_k = -lambda sign(x_{k+1} - x_k)`
/// across every jump.
fn kkt_violation(y: &[f64], x: &[f64], lambda: f64) -> f64 {
    let mut u = 0.0;
    let mut worst: f64 = 0.0;
    for k in 0..y.len() {
        u += y[k] - x[k];
        if k + 1 == y.len() {
            worst = worst.max(u.abs());
        } else {
            worst = worst.max(u.abs() - lambda);
            let jump = x[k + 1] - x[k];
            if jump.abs() > 1e-9 {
                worst = worst.max((u + lambda * jump.signum()).abs());
            }
        }
    }
    worst
}

#[test]
fn taut_string_satisfies_optimality() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let n = rng.gen_range(1..80);
        let y = piecewise_signal(&mut rng, n);
        let lambda = rng.gen_range(0.0..0.5);
        let x = prox_tv_1d_exact(&y, lambda);
        let viol = kkt_violation(&y, &x, lambda);
        assert!(viol < 1e-10, "n={n} lambda={lambda} viol={viol} y={y:?} x={x:?}");
    }
}

#[test]
fn taut_string_two_variable_closed_form() {
    // minimize 1/2 (x0 - a)^2 + 1/2 (x1 - b)^2 + w |x1 - x0|: the jump
    // b - a shrinks by 2w, or the pair merges to its mean.
    for (a, b, w) in [(0.0, 2.0, 0.3), (1.0, -1.0, 0.25), (0.2, 0.5, 0.4)] {
        let x = prox_tv_1d_exact(&[a, b], w);
        let jump: f64 = b - a;
        let expected = if jump.abs() > 2.0 * w {
            let s = w * jump.signum();
            [a + s, b - s]
        } else {
            [(a + b) / 2.0; 2]
        };
        assert!((x[0] - expected[0]).abs() < 1e-15 && (x[1] - expected[1]).abs() < 1e-15);
    }
}

#[test]
fn taut_string_keeps_monotone_signals_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let n = rng.gen_range(2..60);
        let mut y: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        y.sort_by(f64::total_cmp);
        let x = prox_tv_1d_exact(&y, rng.gen_range(0.0..0.3));
        assert!(x.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }
}

#[test]
fn pdhg_matches_taut_string_on_columns() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let m = 32;
        let h = 1.0 / m as f64;
        let y = piecewise_signal(&mut rng, m);
        let w = rng.gen_range(0.5..5.0);
        let out = prox_tv(&y, &[m, 1], h, w, 1e-14, 200_000, None).unwrap();
        // mu sum |dx/h| with mu = w h^2
        let exact = prox_tv_1d_exact(&y, w * h);
        let err = out.x.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "sup error {err}, iterations {}", out.iterations);
    }
}

#[test]
fn pdhg_beats_rowwise_competitor() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let m = 16;
    let h = 1.0 / m as f64;
    let shape = [m, m];
    for _ in 0..5 {
        let z: Vec<f64> = (0..m * m).map(|_| rng.gen_range(0.0..1.0)).collect();
        let w = 2.0;
        let mu = w * h * h;
        let obj = |x: &[f64]| {
            0.5 * x.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() + mu * tv_sum(x, &shape, h)
        };
        let out = prox_tv(&z, &shape, h, w, 1e-8, 5000, None).unwrap();
        let rows: Vec<f64> = z.chunks(m).flat_map(|r| prox_tv_1d_exact(r, mu / h)).collect();
        assert!(obj(&out.x) <= obj(&z) + 1e-12);
        assert!(obj(&out.x) <= obj(&rows) + 1e-12);
    }
}

#[test]
fn quadratic_prox_residual() {
    let g = CellGrid::new(2, 12, 1).unwrap();
    let reg = RegOperatorB::new(RegKind::ThirdOrder, &g);
    let lam = [0.001, 0.001, 1e-6];
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let v: Vec<f64> = (0..g.velocity_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let out = prox_quadratic(&v, 1.0, &reg, &lam, 1e-8, 5000).unwrap();
    let s = reg.quadrature();
    let bx = reg.normal_apply(&out.x, &lam);
    let r: f64 = v.iter().zip(&out.x).zip(&bx).map(|((vi, xi), bi)| (xi + s * bi - vi).powi(2)).sum::<f64>().sqrt();
    let vn: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    assert!(r / vn < 1e-8);
    assert_eq!(prox_quadratic(&v, 0.0, &reg, &lam, 1e-8, 10).unwrap().x, v);
}

#[test]
fn l2_prox_first_order_condition() {
    let z = [0.3, -1.2, 2.5];
    let (sigma, vol) = (0.7, 1.0 / 64.0);
    let x = prox_l2_source(&z, sigma, vol).unwrap();
    for (xi, zi) in x.iter().zip(&z) {
        assert!(((xi - zi) / sigma + vol * xi).abs() < 1e-14);
    }
    assert!(prox_l2_source(&[0.0; 3], sigma, vol).unwrap().iter().all(|&a| a == 0.0));
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn taut_string_nonexpansive(a in prop::collection::vec(-2.0f64..2.0, 20), b in prop::collection::vec(-2.0f64..2.0, 20), lam in 0.0f64..1.0) {
        let (pa, pb) = (prox_tv_1d_exact(&a, lam), prox_tv_1d_exact(&b, lam));
        prop_assert!(dist(&pa, &pb) <= dist(&a, &b) + 1e-10);
    }

    #[test]
    fn quadratic_prox_nonexpansive(seed in 0u64..1000) {
        let g = CellGrid::new(2, 8, 1).unwrap();
        let reg = RegOperatorB::new(RegKind::Curvature, &g);
        let lam = [0.01, 0.01, 1e-3];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..g.velocity_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..g.velocity_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pa = prox_quadratic(&a, 2.0, &reg, &lam, 1e-12, 5000).unwrap().x;
        let pb = prox_quadratic(&b, 2.0, &reg, &lam, 1e-12, 5000).unwrap().x;
        prop_assert!(dist(&pa, &pb) <= dist(&a, &b) + 1e-10);
    }

    #[test]
    fn l2_prox_nonexpansive(a in prop::collection::vec(-2.0f64..2.0, 10), b in prop::collection::vec(-2.0f64..2.0, 10), s in 0.0f64..100.0) {
        let pa = prox_l2_source(&a, s, 0.01).unwrap();
        let pb = prox_l2_source(&b, s, 0.01).unwrap();
        prop_assert!(dist(&pa, &pb) <= dist(&a, &b) + 1e-10);
    }
}
