//! Parallel-beam projection: sinogram of a phantom, adjointness of the
//! projector, its operator norm and the measurement pyramid.
//!
//! cargo run --release --example projection

use deformrecon::phantom::{add_noise, make_phantom, Phantom};
use deformrecon::radon::{downsample_sinogram, radon_adjoint, radon_forward, RadonOperator, SinogramGeometry};
use deformrecon::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    let m = 64;
    let f = make_phantom(Phantom::SheppLogan, m)?;
    let geom = SinogramGeometry::for_level(SinogramGeometry::equispaced_angles(10), m.trailing_zeros())?;
    println!("{} angles, {} detectors, spacing {:.5}", geom.num_angles(), geom.detectors, geom.detector_spacing());

    let g = radon_forward(&f, &geom)?;
    for (a, theta) in geom.angles_deg.iter().enumerate() {
        let row = g.angle(a);
        let mass: f64 = row.iter().sum::<f64>() * geom.detector_spacing();
        println!("theta {theta:6.1}  peak {:.4}  integral {mass:.5}", row.iter().cloned().fold(0.0, f64::max));
    }
    let area: f64 = f.values().iter().sum::<f64>() * f.grid().cell_volume();
    println!("image integral {area:.5} (each projection integrates to about the same)");

    let op = RadonOperator::new(f.grid(), &geom)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x: Vec<f64> = (0..m * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..geom.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let lhs: f64 = op.forward_values(&x).iter().zip(&y).map(|(a, b)| a * b).sum();
    let rhs: f64 = x.iter().zip(op.adjoint_values(&y)).map(|(a, b)| a * b).sum();
    println!("<Kx, y> = {lhs:.12}, <x, K^T y> = {rhs:.12}");
    println!("||K^T K|| = {:.5}", op.opnorm_ktk());

    let back = radon_adjoint(&g, f.grid())?;
    println!("backprojection max {:.4}", back.values().iter().cloned().fold(0.0, f64::max));

    let noisy = add_noise(&g, 0.05, 7)?;
    let err: f64 = noisy.data.iter().zip(&g.data).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let norm: f64 = g.data.iter().map(|a| a * a).sum::<f64>().sqrt();
    println!("5% noise: ||e|| / ||g|| = {:.4}", err / norm);

    let mut s = noisy;
    while s.geometry.detectors % 2 == 0 && s.geometry.level > 3 {
        s = downsample_sinogram(&s)?;
        println!("level {}: {} detectors, total {:.3}", s.geometry.level, s.geometry.detectors, s.data.iter().sum::<f64>());
    }
    Ok(())
}
