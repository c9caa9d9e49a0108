use deformrecon::baseline::{l2tv_baseline, l2tv_objective, BaselineConfig};
use deformrecon::functionals::{tv_value, IdentityOperator};
use deformrecon::phantom::{add_noise, make_phantom, Phantom};
use deformrecon::pipeline::to_cell_units;
use deformrecon::radon::{radon_forward, RadonOperator, SinogramGeometry};
use deformrecon::{CellGrid, ScalarField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noisy_image(m: usize) -> (CellGrid, Vec<f64>) {
    let grid = CellGrid::new(2, m, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let f = make_phantom(Phantom::Disk, m).unwrap();
    (grid, f.values().iter().map(|v| v + rng.gen_range(-0.1..0.1)).collect())
}

#[test]
fn zero_weight_denoising_returns_the_data() {
    let (grid, g) = noisy_image(16);
    let op = IdentityOperator { len: g.len(), weight: 1.0 };
    let cfg = BaselineConfig { lambda: 0.0, ..BaselineConfig::default() };
    let out = l2tv_baseline(&grid, &op, &g, &cfg, None).unwrap();
    assert!(out.converged);
    let err = out.image.values().iter().zip(&g).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-6, "{err}");
}

#[test]
fn huge_weight_flattens_to_the_mean() {
    let (grid, g) = noisy_image(16);
    let op = IdentityOperator { len: g.len(), weight: 1.0 };
    let cfg = BaselineConfig { lambda: 1e6, tol: 1e-10, max_iter: 100_000, ..BaselineConfig::default() };
    let out = l2tv_baseline(&grid, &op, &g, &cfg, None).unwrap();
    let mean = g.iter().sum::<f64>() / g.len() as f64;
    assert!(tv_value(&out.image) < 1e-6);
    assert!(out.image.values().iter().all(|v| (v - mean).abs() < 1e-6));
}

#[test]
fn tomographic_solution_beats_trivial_images() {
    let m = 32;
    let truth = make_phantom(Phantom::SheppLogan, m).unwrap();
    let geom = SinogramGeometry::for_level(SinogramGeometry::equispaced_angles(10), 5).unwrap();
    let g = to_cell_units(&add_noise(&radon_forward(&truth, &geom).unwrap(), 0.05, 1).unwrap(), m).unwrap();
    let op = RadonOperator::new(truth.grid(), &g.geometry).unwrap();
    let cfg = BaselineConfig { lambda: 1.0, ..BaselineConfig::default() };
    let out = l2tv_baseline(truth.grid(), &op, &g.data, &cfg, None).unwrap();
    let obj = |x: &[f64]| l2tv_objective(x, truth.grid(), &op, &g.data, 1.0);
    assert!((obj(out.image.values()) - out.objective).abs() < 1e-12 * out.objective);
    assert!(out.objective <= obj(&vec![0.0; m * m]));
    assert!(out.objective <= obj(truth.values()));
    assert!(out.image.values().iter().all(|&v| (-1.0..=2.0).contains(&v)));

    // a warm start at the solution stops almost immediately
    let again = l2tv_baseline(truth.grid(), &op, &g.data, &cfg, Some(out.image.values())).unwrap();
    assert!(again.objective <= out.objective * (1.0 + 1e-4));
}

#[test]
fn invalid_settings_are_rejected() {
    let (grid, g) = noisy_image(8);
    let op = IdentityOperator { len: g.len(), weight: 1.0 };
    for cfg in [
        BaselineConfig { lambda: -1.0, ..BaselineConfig::default() },
        BaselineConfig { tol: 0.0, ..BaselineConfig::default() },
        BaselineConfig { bounds: (1.0, 0.0), ..BaselineConfig::default() },
    ] {
        assert!(l2tv_baseline(&grid, &op, &g, &cfg, None).is_err());
    }
    let short = IdentityOperator { len: 10, weight: 1.0 };
    assert!(l2tv_baseline(&grid, &short, &g, &BaselineConfig::default(), None).is_err());
    assert!(ScalarField::new(grid, vec![0.0; 3]).is_err());
}
