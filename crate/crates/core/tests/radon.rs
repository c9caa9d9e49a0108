use deformrecon::radon::{downsample_sinogram, radon_forward, trace_ray, RadonOperator, Sinogram, SinogramGeometry};
use deformrecon::{CellGrid, ScalarField};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dense(op: &RadonOperator) -> DMatrix<f64> {
    let rows = op.matrix().to_dense();
    DMatrix::from_fn(rows.len(), op.grid().num_cells(), |i, j| rows[i][j])
}

#[test]
fn operator_norm_matches_dense_svd() {
    for (m, p) in [(8, 5), (16, 3)] {
        let grid = CellGrid::new(2, m, 1).unwrap();
        let geom = SinogramGeometry::for_level(SinogramGeometry::equispaced_angles(p), m.trailing_zeros()).unwrap();
        let op = RadonOperator::new(&grid, &geom).unwrap();
        let smax = dense(&op).singular_values().max();
        let est = op.opnorm_ktk();
        assert!((est - smax * smax).abs() < 1e-8 * smax * smax, "m={m}: {est} vs {}", smax * smax);
    }
}

#[test]
fn dense_transpose_is_the_adjoint() {
    let grid = CellGrid::new(2, 8, 1).unwrap();
    let geom = SinogramGeometry::equispaced(4, 12).unwrap();
    let op = RadonOperator::new(&grid, &geom).unwrap();
    let a = dense(&op);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let y: Vec<f64> = (0..geom.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let back = op.adjoint_values(&y);
    let expect = a.transpose() * nalgebra::DVector::from_vec(y);
    for (u, v) in back.iter().zip(expect.iter()) {
        assert!((u - v).abs() < 1e-14);
    }
}

#[test]
fn cell_units_scale_the_projection() {
    let grid = CellGrid::new(2, 16, 1).unwrap();
    let f = ScalarField::from_fn(grid, |x| x[0] + x[1] * x[1]);
    let geom = SinogramGeometry::for_level(SinogramGeometry::equispaced_angles(6), 4).unwrap();
    let unit = radon_forward(&f, &geom).unwrap();
    let cells = radon_forward(&f, &geom.clone().with_length_scale(16.0)).unwrap();
    for (a, b) in unit.data.iter().zip(&cells.data) {
        assert!((16.0 * a - b).abs() < 1e-12);
    }
}

#[test]
fn axis_aligned_rays_see_single_columns() {
    let m = 8;
    let grid = CellGrid::new(2, m, 1).unwrap();
    // column profile depends on x only: a vertical ray integrates one column
    let f = ScalarField::from_fn(grid, |x| (x[0] * m as f64).floor());
    let geom = SinogramGeometry::new(vec![0.0], 2 * m + 1).unwrap();
    let g = radon_forward(&f, &geom).unwrap();
    for (j, v) in g.data.iter().enumerate() {
        let x = 0.5 + geom.detector_offset(j);
        let expect = if (0.0..1.0).contains(&x) { (x * m as f64).floor() } else { 0.0 };
        assert!((v - expect).abs() < 1e-12, "detector {j}: {v} vs {expect}");
    }
}

#[test]
fn downsampling_quarters_the_total() {
    let geom = SinogramGeometry::for_level(SinogramGeometry::equispaced_angles(3), 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let s = Sinogram::new(geom.clone(), (0..geom.len()).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
    let c = downsample_sinogram(&s).unwrap();
    assert_eq!(c.geometry.detectors, geom.detectors / 2);
    assert_eq!(c.geometry.level, 3);
    let (a, b): (f64, f64) = (s.data.iter().sum(), c.data.iter().sum());
    assert!((a - 4.0 * b).abs() < 1e-12);
    let odd = SinogramGeometry::new(vec![0.0], 3).unwrap();
    assert!(downsample_sinogram(&Sinogram::zeros(odd)).is_err());
}

#[test]
fn mismatched_sizes_are_rejected() {
    let geom = SinogramGeometry::new(vec![0.0, 90.0], 4).unwrap();
    assert!(Sinogram::new(geom.clone(), vec![0.0; 7]).is_err());
    assert!(SinogramGeometry::new(vec![], 4).is_err());
    assert!(SinogramGeometry::new(vec![0.0], 0).is_err());
}

proptest! {
    #[test]
    fn ray_through_unit_square_has_chord_length(s in -0.69f64..0.69, m in 1usize..40) {
        // at 45 degrees the chord of the unit square is sqrt(2) - 2|s|
        let len: f64 = trace_ray(m, 45.0, s).iter().map(|&(_, l)| l).sum();
        let expect = (2f64.sqrt() - 2.0 * s.abs()).max(0.0);
        prop_assert!((len - expect).abs() < 1e-12);
        let len0: f64 = trace_ray(m, 0.0, s).iter().map(|&(_, l)| l).sum();
        let expect0 = if s.abs() < 0.5 { 1.0 } else { 0.0 };
        prop_assert!((len0 - expect0).abs() < 1e-12);
    }

    #[test]
    fn ray_lengths_are_nonnegative_and_cells_distinct(theta in 0.0f64..180.0, s in -0.7f64..0.7, m in 1usize..24) {
        let r = trace_ray(m, theta, s);
        let mut cells: Vec<usize> = r.iter().map(|&(c, _)| c).collect();
        prop_assert!(r.iter().all(|&(c, l)| l > 0.0 && c < m * m));
        cells.sort_unstable();
        cells.dedup();
        prop_assert_eq!(cells.len(), r.len());
    }

    #[test]
    fn projection_is_linear(seed in 0u64..1000, a in -2.0f64..2.0) {
        let grid = CellGrid::new(2, 8, 1).unwrap();
        let geom = SinogramGeometry::equispaced(5, 12).unwrap();
        let op = RadonOperator::new(&grid, &geom).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let comb: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + q).collect();
        let (kx, ky, kc) = (op.forward_values(&x), op.forward_values(&y), op.forward_values(&comb));
        for i in 0..kc.len() {
            prop_assert!((kc[i] - a * kx[i] - ky[i]).abs() < 1e-12);
        }
    }
}
