//! Image quality measures: SSD, SSIM and the contrast-stretched error map.
//!
//! cargo run --release --example metrics

use deformrecon::metrics::{error_map, metric_ssd, metric_ssim};
use deformrecon::phantom::{make_phantom, synth_deform, DeformPreset, Phantom};
use deformrecon::{Result, ScalarField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    let m = 64;
    let reference = make_phantom(Phantom::SheppLogan, m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let noisy = ScalarField::new(*reference.grid(), reference.values().iter().map(|v| v + 0.05 * rng.gen_range(-1.0..1.0)).collect())?;
    let shifted = synth_deform(&reference, DeformPreset::Translate([0.02, 0.0]))?;
    let flat = ScalarField::constant(*reference.grid(), reference.values().iter().sum::<f64>() / (m * m) as f64);
    let inverted = ScalarField::new(*reference.grid(), reference.values().iter().map(|v| 1.0 - v).collect())?;

    for (name, img) in [("identical", &reference), ("noisy", &noisy), ("shifted", &shifted), ("constant", &flat), ("inverted", &inverted)] {
        println!("{name:<10} SSD {:.3e}  SSIM {:+.4}", metric_ssd(img, &reference)?, metric_ssim(img, &reference)?);
    }
    let err = error_map(&shifted, &reference, 0.2)?;
    let saturated = err.values().iter().filter(|&&e| e >= 1.0).count();
    println!("error map of the shift: {saturated} of {} cells saturate at stretch 0.2", m * m);
    Ok(())
}
