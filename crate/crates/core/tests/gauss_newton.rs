use deformrecon::flow::{SolverConfig, TimeScheme};
use deformrecon::functionals::{ForwardOperator, Objective, ObjectiveConfig};
use deformrecon::interp::InterpOrder;
use deformrecon::ipalm::{gauss_newton_direction, gauss_newton_run, GaussNewtonConfig};
use deformrecon::radon::{RadonOperator, SinogramGeometry};
use deformrecon::{CellGrid, ScalarField, VelocityField};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const M: usize = 8;

/// Affine template, linear interpolation and a single Euler step: the
/// reconstruction is affine in `v` as long as every sample point stays
/// inside the hull of the cell centers, so the objective is an exact
/// quadratic there and Gauss-Newton coincides with Newton.
struct Setup {
    template: ScalarField,
    op: RadonOperator,
    cfg: ObjectiveConfig,
    v_true: Vec<f64>,
}

fn setup() -> Setup {
    let grid = CellGrid::new(2, M, 0).unwrap();
    let template = ScalarField::from_fn(grid, |x| 0.3 + 0.4 * x[0] + 0.2 * x[1]);
    let geom = SinogramGeometry::equispaced(4, 12).unwrap().with_length_scale(M as f64);
    let op = RadonOperator::new(&grid, &geom).unwrap();
    let cfg = ObjectiveConfig {
        template_order: InterpOrder::Linear,
        time_intervals: 0,
        flow: SolverConfig { steps: 1, scheme: TimeScheme::Euler },
        lambda1: [1e-3, 0.0, 1e-4],
        ..ObjectiveConfig::default()
    };
    // phi = x - v: every point moves 0.3 cells towards the center
    let h = grid.h();
    let v_true = VelocityField::from_fn(grid, |_, x| {
        [0.3 * h * (x[0] - 0.5).signum(), 0.3 * h * (x[1] - 0.5).signum(), 0.0]
    })
    .into_values();
    Setup { template, op, cfg, v_true }
}

fn full_gradient(obj: &Objective, v: &[f64], z: &[f64]) -> Vec<f64> {
    let eval = obj.smooth(v, z).unwrap();
    let q = obj.reg().quadrature();
    let reg = obj.reg().normal_apply(v, &obj.config().lambda1);
    obj.grad_v(&eval).unwrap().iter().zip(&reg).map(|(a, b)| a + q * b).collect()
}

#[test]
fn gauss_newton_is_newton_on_affine_problems() {
    let s = setup();
    let n = s.template.grid().num_cells();
    let z = vec![0.0; n];
    let clean = {
        let zeros = vec![0.0; s.op.output_len()];
        let obj = Objective::new(&s.template, &s.op, &zeros, &s.cfg).unwrap();
        s.op.forward(&obj.smooth(&s.v_true, &z).unwrap().r)
    };
    let obj = Objective::new(&s.template, &s.op, &clean, &s.cfg).unwrap();
    let nv = obj.grid().velocity_len();
    let h = obj.grid().h();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let v0: Vec<f64> = s.v_true.iter().map(|a| a + rng.gen_range(-0.05..0.05) * h).collect();

    // dense Newton Hessian from differences of the analytic gradient
    let eps = 1e-6 * h;
    let mut hess = DMatrix::zeros(nv, nv);
    let mut gn = DMatrix::zeros(nv, nv);
    let eval = obj.smooth(&v0, &z).unwrap();
    let w = obj.operator().quadrature_weight();
    let q = obj.reg().quadrature();
    for j in 0..nv {
        let mut e = vec![0.0; nv];
        e[j] = 1.0;
        let mut vp = v0.clone();
        let mut vm = v0.clone();
        vp[j] += eps;
        vm[j] -= eps;
        let (gp, gm) = (full_gradient(&obj, &vp, &z), full_gradient(&obj, &vm, &z));
        let je = obj.jacobian_apply(&eval, &e).unwrap();
        let jtje = obj.jacobian_transpose_apply(&eval, &je).unwrap();
        let be = obj.reg().normal_apply(&e, &s.cfg.lambda1);
        for i in 0..nv {
            hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * eps);
            gn[(i, j)] = w * jtje[i] + q * be[i];
        }
    }
    let scale = gn.norm();
    assert!((&hess - &gn).norm() < 1e-6 * scale, "Hessian mismatch {}", (&hess - &gn).norm() / scale);

    let g0 = DVector::from_vec(full_gradient(&obj, &v0, &z));
    let newton = gn.clone().lu().solve(&(-&g0)).unwrap();
    let (_, d) = gauss_newton_direction(&obj, &v0, &z, 1e-13, 5000).unwrap();
    let d = DVector::from_vec(d);
    assert!((&d - &newton).norm() < 1e-8 * newton.norm(), "direction mismatch {}", (&d - &newton).norm() / newton.norm());

    // along a Newton step of a quadratic the gradient shrinks linearly; the
    // full step would push boundary points outside the hull, a tenth stays
    // well inside
    let t = 0.1;
    assert!(t * d.amax() < 0.1 * h);
    let v1: Vec<f64> = v0.iter().zip(d.iter()).map(|(a, b)| a + t * b).collect();
    let g1 = DVector::from_vec(full_gradient(&obj, &v1, &z));
    let res = (&g1 - (1.0 - t) * &g0).norm();
    assert!(res < 1e-8 * g0.norm(), "gradient after the step {}", res / g0.norm());
}

#[test]
fn refinement_never_increases_the_objective() {
    let s = setup();
    let n = s.template.grid().num_cells();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data: Vec<f64> = (0..s.op.output_len()).map(|_| rng.gen_range(0.0..4.0)).collect();
    let cfg = ObjectiveConfig { template_order: InterpOrder::Cubic, flow: SolverConfig::default(), ..s.cfg.clone() };
    let obj = Objective::new(&s.template, &s.op, &data, &cfg).unwrap();
    let z = ScalarField::zeros(*s.template.grid());
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v0 = VelocityField::new(*obj.grid(), (0..obj.grid().velocity_len()).map(|_| rng.gen_range(-0.05..0.05)).collect()).unwrap();
        let out = gauss_newton_run(&obj, &z, &v0, &GaussNewtonConfig::default()).unwrap();
        assert!(out.objective_after <= out.objective_before);
        let f = |v: &[f64]| obj.smooth_value(v, z.values()).unwrap() + obj.g1(v).unwrap();
        assert!((f(out.v.values()) - out.objective_after).abs() < 1e-12 * out.objective_after.abs().max(1.0));
        assert!((f(v0.values()) - out.objective_before).abs() < 1e-12 * out.objective_before.abs().max(1.0));
    }
    assert_eq!(n, M * M);
}
