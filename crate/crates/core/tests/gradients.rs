use deformrecon::functionals::{
    e1_value_grad, ncc_grad_values, ncc_values, ssd_grad_values, ssd_values, DataTerm, Objective, ObjectiveConfig,
    RegKind, RegOperatorB,
};
use deformrecon::phantom::{make_phantom, Phantom};
use deformrecon::radon::{radon_forward, RadonOperator, SinogramGeometry};
use deformrecon::{CellGrid, VelocityField};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, amp: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-amp..amp)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit(mut d: Vec<f64>) -> Vec<f64> {
    let n = dot(&d, &d).sqrt();
    d.iter_mut().for_each(|a| *a /= n);
    d
}

fn shift(x: &[f64], d: &[f64], s: f64) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + s * b).collect()
}

/// Relative mismatch between a central difference of `f` along `d` and
/// `<grad, d>`. Directions are unit vectors: the solution map is only
/// piecewise smooth (trajectories crossing cell faces), and short steps
/// rarely straddle a crease.
fn directional_error(f: impl Fn(&[f64]) -> f64, x: &[f64], grad: &[f64], d: &[f64], eps: f64) -> f64 {
    let fd = (f(&shift(x, d, eps)) - f(&shift(x, d, -eps))) / (2.0 * eps);
    let an = dot(grad, d);
    (fd - an).abs() / an.abs().max(1e-300)
}

struct Problem {
    template: deformrecon::ScalarField,
    op: RadonOperator,
    data: Vec<f64>,
}

fn problem(m: usize) -> Problem {
    let template = make_phantom(Phantom::GaussBump, m).unwrap();
    let geom = SinogramGeometry::for_level(SinogramGeometry::equispaced_angles(10), m.trailing_zeros())
        .unwrap()
        .with_length_scale(m as f64);
    let op = RadonOperator::new(template.grid(), &geom).unwrap();
    let target = make_phantom(Phantom::Disk, m).unwrap();
    let data = radon_forward(&target, &geom).unwrap().data;
    Problem { template, op, data }
}

fn check_objective_gradients(term: DataTerm, seeds: std::ops::Range<u64>) {
    let p = problem(16);
    let cfg = ObjectiveConfig { data_term: term, ..ObjectiveConfig::default() };
    let obj = Objective::new(&p.template, &p.op, &p.data, &cfg).unwrap();
    let nv = obj.grid().velocity_len();
    let nz = obj.grid().num_cells();
    for seed in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = rand_vec(&mut rng, nv, 0.05);
        let z = rand_vec(&mut rng, nz, 0.1);
        let eval = obj.smooth(&v, &z).unwrap();
        let gv = obj.grad_v(&eval).unwrap();
        let gz = obj.grad_z(&eval);
        let dv = unit(rand_vec(&mut rng, nv, 1.0));
        let dz = unit(rand_vec(&mut rng, nz, 1.0));
        let ev = directional_error(|x| obj.smooth_value(x, &z).unwrap(), &v, &gv, &dv, 1e-5);
        let ez = directional_error(|x| obj.smooth_value(&v, x).unwrap(), &z, &gz, &dz, 1e-5);
        assert!(ev < 1e-5, "{term:?} seed {seed}: grad_v error {ev}");
        assert!(ez < 1e-5, "{term:?} seed {seed}: grad_z error {ez}");
    }
}

#[test]
fn ssd_objective_gradients() {
    check_objective_gradients(DataTerm::Ssd, 0..8);
}

#[test]
fn ncc_objective_gradients() {
    check_objective_gradients(DataTerm::Ncc, 10..18);
}

#[test]
fn jacobian_transpose_is_adjoint() {
    let p = problem(16);
    let obj = Objective::new(&p.template, &p.op, &p.data, &ObjectiveConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let v = rand_vec(&mut rng, obj.grid().velocity_len(), 0.05);
    let eval = obj.smooth(&v, &vec![0.0; obj.grid().num_cells()]).unwrap();
    let dv = rand_vec(&mut rng, v.len(), 1.0);
    let w = rand_vec(&mut rng, p.data.len(), 1.0);
    let a = dot(&obj.jacobian_apply(&eval, &dv).unwrap(), &w);
    let b = dot(&obj.jacobian_transpose_apply(&eval, &w).unwrap(), &dv);
    assert!((a - b).abs() < 1e-12 * a.abs());
}

#[test]
fn e1_gradients_for_every_regularizer() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for d in [2, 3] {
        for m_t in [0, 1, 2] {
            let grid = CellGrid::new(d, 6, m_t).unwrap();
            for kind in [RegKind::ThirdOrder, RegKind::Curvature, RegKind::Diffusion] {
                let reg = RegOperatorB::new(kind, &grid);
                let lam = [0.3, 0.7, 0.01];
                let v = rand_vec(&mut rng, grid.velocity_len(), 1.0);
                let dv = rand_vec(&mut rng, v.len(), 1.0);
                let f = |x: &[f64]| e1_value_grad(&VelocityField::new(grid, x.to_vec()).unwrap(), &reg, &lam).unwrap().0;
                let (_, g) = e1_value_grad(&VelocityField::new(grid, v.clone()).unwrap(), &reg, &lam).unwrap();
                // quadratic: the central difference is exact up to rounding
                let err = directional_error(f, &v, &g, &dv, 1e-3);
                assert!(err < 1e-8, "{kind:?} d={d} m_t={m_t}: {err}");
            }
        }
    }
}

#[test]
fn regularizer_annihilates_low_order_polynomials() {
    // third partials vanish on quadratics away from the padded boundary
    let grid = CellGrid::new(2, 12, 0).unwrap();
    let reg = RegOperatorB::new(RegKind::ThirdOrder, &grid);
    let v = VelocityField::from_fn(grid, |_, x| [x[0] * x[1] + x[0] * x[0], 1.0 - x[1] * x[1], 0.0]);
    let rows = reg.spatial().mul(v.values());
    let per_cell = reg.spatial_rows_per_cell();
    let n = grid.num_cells();
    for comp in 0..2 {
        for i in 0..n {
            let idx = grid.multi_index(i);
            if idx[..2].iter().all(|&a| (3..9).contains(&a)) {
                for r in 0..per_cell {
                    let val = rows[(comp * n + i) * per_cell + r];
                    assert!(val.abs() < 1e-8, "component {comp}, cell {i}, stencil {r}: {val}");
                }
            }
        }
    }
}

proptest! {
    #[test]
    fn ssd_gradient_matches_differences(seed in 0u64..1000, w in 0.01f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand_vec(&mut rng, 30, 2.0);
        let y = rand_vec(&mut rng, 30, 2.0);
        let d = rand_vec(&mut rng, 30, 1.0);
        let g = ssd_grad_values(&x, &y, w).unwrap();
        let err = directional_error(|a| ssd_values(a, &y, w).unwrap(), &x, &g, &d, 1e-5);
        prop_assert!(err < 1e-7);
    }

    #[test]
    fn ncc_gradient_matches_differences(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand_vec(&mut rng, 30, 2.0);
        let y = rand_vec(&mut rng, 30, 2.0);
        let d = rand_vec(&mut rng, 30, 1.0);
        let g = ncc_grad_values(&x, &y).unwrap();
        let err = directional_error(|a| ncc_values(a, &y).unwrap(), &x, &g, &d, 1e-5);
        prop_assert!(err < 1e-6);
    }

    #[test]
    fn ncc_is_scale_invariant_and_bounded(seed in 0u64..1000, s in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand_vec(&mut rng, 20, 1.0);
        let y = rand_vec(&mut rng, 20, 1.0);
        let base = ncc_values(&x, &y).unwrap();
        let xs: Vec<f64> = x.iter().map(|a| a * s).collect();
        prop_assert!((ncc_values(&xs, &y).unwrap() - base).abs() < 1e-13);
        prop_assert!((0.0..=1.0).contains(&base));
        prop_assert!(dot(&ncc_grad_values(&x, &y).unwrap(), &x).abs() < 1e-12);
    }
}
