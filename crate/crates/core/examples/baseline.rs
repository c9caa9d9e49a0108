//! Direct L2-TV reconstruction of the same data for a range of weights.
//!
//! cargo run --release --example baseline

use deformrecon::baseline::{l2tv_baseline, BaselineConfig};
use deformrecon::metrics::{metric_ssd, metric_ssim};
use deformrecon::phantom::{add_noise, add_square, make_phantom, synth_deform, DeformPreset, Phantom};
use deformrecon::pipeline::to_cell_units;
use deformrecon::radon::{radon_forward, RadonOperator, SinogramGeometry};
use deformrecon::{Result, ScalarField};

fn main() -> Result<()> {
    let m = 32;
    let truth = add_square(&synth_deform(&make_phantom(Phantom::SheppLogan, m)?, DeformPreset::Bend { amp: 0.02 })?)?;
    let geom = SinogramGeometry::for_level(SinogramGeometry::equispaced_angles(10), 5)?;
    let g = to_cell_units(&add_noise(&radon_forward(&truth, &geom)?, 0.05, 7)?, m)?;
    let op = RadonOperator::new(truth.grid(), &g.geometry)?;

    for lambda in [0.1, 0.3, 1.0, 3.0, 10.0] {
        let cfg = BaselineConfig { lambda, ..BaselineConfig::default() };
        let out = l2tv_baseline(truth.grid(), &op, &g.data, &cfg, None)?;
        let img = ScalarField::new(*truth.grid(), out.image.values().to_vec())?;
        println!(
            "lambda {lambda:>4}: {:>5} iterations, gap {:.1e}{}  SSD {:.3e}  SSIM {:.3}",
            out.iterations,
            out.gap,
            if out.converged { "" } else { " (cap)" },
            metric_ssd(&img, &truth)?,
            metric_ssim(&img, &truth)?
        );
    }
    Ok(())
}
