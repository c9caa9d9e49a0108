//! Proximal maps of the regularizers: exact 1-D total variation, the
//! primal-dual 2-D version, and the quadratic velocity prox.
//!
//! cargo run --release --example prox

use deformrecon::functionals::{tv_sum, RegKind, RegOperatorB};
use deformrecon::phantom::{make_phantom, Phantom};
use deformrecon::prox::{prox_l2_source, prox_quadratic, prox_tv, prox_tv_1d_exact};
use deformrecon::{CellGrid, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);

    let steps: Vec<f64> = (0..40).map(|i| if (10..25).contains(&i) { 1.0 } else { 0.0 } + 0.2 * rng.gen_range(-1.0..1.0)).collect();
    let flat = prox_tv_1d_exact(&steps, 0.5);
    let jumps = flat.windows(2).filter(|w| (w[1] - w[0]).abs() > 1e-9).count();
    println!("1-D taut string: {jumps} jumps remain of {}", steps.len() - 1);

    let m = 64;
    let h = 1.0 / m as f64;
    let clean = make_phantom(Phantom::SheppLogan, m)?;
    let noisy: Vec<f64> = clean.values().iter().map(|v| v + 0.1 * rng.gen_range(-1.0..1.0)).collect();
    let shape = [m, m];
    for w in [0.5, 2.0, 8.0] {
        let out = prox_tv(&noisy, &shape, h, w, 1e-6, 5000, None)?;
        let err: f64 = out.x.iter().zip(clean.values()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() * h;
        println!(
            "TV prox weight {w:>3}: {} iterations, gap {:.1e}, TV {:.3} -> {:.3}, error {err:.4}",
            out.iterations,
            out.rel_gap,
            h * h * tv_sum(&noisy, &shape, h),
            h * h * tv_sum(&out.x, &shape, h)
        );
    }

    let z: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
    println!("L2 source prox shrinks by {:.4}", prox_l2_source(&z, 2.0, h * h)?[0] / z[0]);

    let grid = CellGrid::new(2, 32, 1)?;
    let v: Vec<f64> = (0..grid.velocity_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for kind in [RegKind::ThirdOrder, RegKind::Curvature, RegKind::Diffusion] {
        let reg = RegOperatorB::new(kind, &grid);
        let out = prox_quadratic(&v, 10.0, &reg, &[0.001, 0.001, 1e-6], 1e-10, 100)?;
        let before = reg.energies(&v)?;
        let after = reg.energies(&out.x)?;
        println!(
            "{kind:?} prox: {} CG steps, residual {:.1e}, spatial energy {:.3e} -> {:.3e}",
            out.iterations, out.rel_residual, before[0], after[0]
        );
    }
    Ok(())
}
