use deformrecon::flow::{jacobian_determinants, solve_backward_flow, SolverConfig, TimeScheme};
use deformrecon::phantom::DeformPreset;
use deformrecon::{CellGrid, VelocityField};
use nalgebra::Matrix2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Linear field `v(x) = A (x - c)`; the backward flow from t = 1 to 0 maps
/// `x` to `c + exp(-A) (x - c)`.
fn linear_field(grid: CellGrid, a: Matrix2<f64>) -> VelocityField {
    VelocityField::from_fn(grid, move |_, x| {
        let y = a * nalgebra::Vector2::new(x[0] - 0.5, x[1] - 0.5);
        [y[0], y[1], 0.0]
    })
}

fn max_error(grid: &CellGrid, a: Matrix2<f64>, steps: usize, scheme: TimeScheme) -> f64 {
    let flow = solve_backward_flow(&linear_field(*grid, a), &SolverConfig { steps, scheme }).unwrap();
    let e = (-a).exp();
    let mut worst: f64 = 0.0;
    for p in 0..grid.num_cells() {
        let x = grid.center(p);
        if (x[0] - 0.5).hypot(x[1] - 0.5) > 0.2 {
            continue;
        }
        let want = e * nalgebra::Vector2::new(x[0] - 0.5, x[1] - 0.5);
        let got = flow.phi0().point(p);
        worst = worst.max((got[0] - 0.5 - want[0]).abs().max((got[1] - 0.5 - want[1]).abs()));
    }
    worst
}

fn observed_orders(scheme: TimeScheme) -> Vec<f64> {
    let grid = CellGrid::new(2, 32, 0).unwrap();
    let a = Matrix2::new(0.3, -1.6, 1.4, -0.2);
    let errs: Vec<f64> = [5, 10, 20, 40].iter().map(|&n| max_error(&grid, a, n, scheme)).collect();
    errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

#[test]
fn rk4_is_fourth_order_on_linear_fields() {
    let orders = observed_orders(TimeScheme::Rk4);
    assert!(orders.iter().all(|&p| p > 3.9), "{orders:?}");
}

#[test]
fn euler_is_first_order_on_linear_fields() {
    let orders = observed_orders(TimeScheme::Euler);
    assert!(orders.iter().all(|&p| (p - 1.0).abs() < 0.15), "{orders:?}");
}

#[test]
fn presets_are_diffeomorphic() {
    let grid = CellGrid::new(2, 64, 1).unwrap();
    for preset in ["swirl", "bend", "translate-bump"] {
        let v = preset.parse::<DeformPreset>().unwrap().velocity(&grid);
        let flow = solve_backward_flow(&v, &SolverConfig::default()).unwrap();
        let det = jacobian_determinants(&flow);
        let min = det.iter().filter(|d| d.is_finite()).fold(f64::INFINITY, |a, &b| a.min(b));
        assert!(min > 0.0, "{preset}: {min}");
    }
}

fn random_field(grid: CellGrid, rng: &mut ChaCha8Rng, amp: f64) -> VelocityField {
    let vals = (0..grid.velocity_len()).map(|_| rng.gen_range(-amp..amp)).collect();
    VelocityField::new(grid, vals).unwrap()
}

#[test]
fn derivative_matches_finite_differences() {
    let grid = CellGrid::new(2, 12, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    // a smooth base field keeps trajectories away from cell faces under the
    // small perturbation
    let v = linear_field(grid, Matrix2::new(0.1, -0.3, 0.25, 0.05));
    let dv = random_field(grid, &mut rng, 1.0);
    let cfg = SolverConfig::default();
    let flow = solve_backward_flow(&v, &cfg).unwrap();
    let lin = flow.apply(dv.values()).unwrap();
    let eps = 1e-7;
    let shifted = |s: f64| {
        let vals = v.values().iter().zip(dv.values()).map(|(a, b)| a + s * b).collect();
        solve_backward_flow(&VelocityField::new(grid, vals).unwrap(), &cfg).unwrap()
    };
    let (p, m) = (shifted(eps), shifted(-eps));
    let fd: Vec<f64> = p.phi0().coords().iter().zip(m.phi0().coords()).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
    let num: f64 = fd.iter().zip(&lin).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let den: f64 = lin.iter().map(|a| a * a).sum::<f64>().sqrt();
    assert!(num / den < 1e-6, "relative error {}", num / den);
}

proptest! {
    #[test]
    fn transpose_is_the_adjoint(seed in 0u64..500, m_t in 0usize..3) {
        let grid = CellGrid::new(2, 8, m_t).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_field(grid, &mut rng, 0.1);
        let flow = solve_backward_flow(&v, &SolverConfig::default()).unwrap();
        let dv = random_field(grid, &mut rng, 1.0);
        let w: Vec<f64> = (0..2 * grid.num_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a: f64 = flow.apply(dv.values()).unwrap().iter().zip(&w).map(|(x, y)| x * y).sum();
        let b: f64 = flow.apply_transpose(&w).unwrap().iter().zip(dv.values()).map(|(x, y)| x * y).sum();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn constant_fields_translate_exactly(bx in -0.1f64..0.1, by in -0.1f64..0.1, steps in 1usize..8) {
        let grid = CellGrid::new(2, 8, 1).unwrap();
        let v = VelocityField::from_fn(grid, |_, _| [bx, by, 0.0]);
        let flow = solve_backward_flow(&v, &SolverConfig { steps, scheme: TimeScheme::Rk4 }).unwrap();
        for p in 0..grid.num_cells() {
            let x = grid.center(p);
            let y = flow.phi0().point(p);
            prop_assert!((y[0] - x[0] + bx).abs() < 1e-14 && (y[1] - x[1] + by).abs() < 1e-14);
        }
    }
}
