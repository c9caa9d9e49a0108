//! Evaluates the variational objective term by term and checks its
//! gradients against central differences.
//!
//! cargo run --release --example objective

use deformrecon::functionals::{DataTerm, Objective, ObjectiveConfig};
use deformrecon::phantom::{make_phantom, synth_deform, DeformPreset, Phantom};
use deformrecon::radon::{radon_forward, RadonOperator, SinogramGeometry};
use deformrecon::{Result, VelocityField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    let m = 32;
    let template = make_phantom(Phantom::SheppLogan, m)?;
    let target = synth_deform(&template, DeformPreset::Swirl { omega: 0.3 })?;
    // the solver works in cell units: lengths measured in cells of this grid
    let geom = SinogramGeometry::for_level(SinogramGeometry::equispaced_angles(10), 5)?.with_length_scale(m as f64);
    let g = radon_forward(&target, &geom)?;
    let op = RadonOperator::new(template.grid(), &geom)?;

    for term in [DataTerm::Ssd, DataTerm::Ncc] {
        let cfg = ObjectiveConfig { data_term: term, ..ObjectiveConfig::default() };
        let obj = Objective::new(&template, &op, &g.data, &cfg)?;
        let zero_v = vec![0.0; obj.grid().velocity_len()];
        let zero_z = vec![0.0; m * m];
        let truth_v = DeformPreset::Swirl { omega: 0.3 }.velocity(obj.grid());
        println!("{term:?}");
        for (name, v) in [("v = 0", zero_v.as_slice()), ("true swirl", truth_v.values())] {
            let p = obj.parts(v, &zero_z)?;
            println!("  {name:<11} data {:.5e}  E1 {:.3e}  E2 {:.3e}  total {:.5e}", p.data, p.e1_weighted(), p.e2, p.total());
        }

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..zero_v.len()).map(|_| rng.gen_range(-0.03..0.03)).collect();
        let z: Vec<f64> = (0..m * m).map(|_| rng.gen_range(-0.1..0.1)).collect();
        let eval = obj.smooth(&v, &z)?;
        let gv = obj.grad_v(&eval)?;
        let d = VelocityField::new(*obj.grid(), (0..v.len()).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
        let norm = d.values().iter().map(|a| a * a).sum::<f64>().sqrt();
        let eps = 1e-5;
        let at = |s: f64| -> Result<f64> {
            let x: Vec<f64> = v.iter().zip(d.values()).map(|(a, b)| a + s * b / norm).collect();
            obj.smooth_value(&x, &z)
        };
        let fd = (at(eps)? - at(-eps)?) / (2.0 * eps);
        let an: f64 = gv.iter().zip(d.values()).map(|(a, b)| a * b / norm).sum();
        println!("  directional derivative: analytic {an:.8e}, difference {fd:.8e}");
    }
    Ok(())
}
