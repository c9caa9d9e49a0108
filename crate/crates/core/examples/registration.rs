//! With `K = Id` the model reduces to image registration plus a source
//! term. Runs single-level iPALM in both step-size modes and the
//! Gauss-Newton refinement.
//!
//! cargo run --release --example registration

use deformrecon::functionals::{IdentityOperator, Objective, ObjectiveConfig};
use deformrecon::ipalm::{gauss_newton_run, ipalm_run, IpalmConfig, StepMode};
use deformrecon::metrics::metric_ssd;
use deformrecon::phantom::{make_phantom, synth_deform, DeformPreset, Phantom};
use deformrecon::Result;

fn main() -> Result<()> {
    let m = 32;
    let template = make_phantom(Phantom::SheppLogan, m)?;
    let target = synth_deform(&template, DeformPreset::Swirl { omega: 0.3 })?;
    let op = IdentityOperator { len: m * m, weight: template.grid().cell_volume() };
    let cfg = ObjectiveConfig { lambda2: 1.0, ..ObjectiveConfig::default() };
    let obj = Objective::new(&template, &op, target.values(), &cfg)?;
    println!("template vs target SSD {:.3e}", metric_ssd(&template, &target)?);

    for mode in [StepMode::Guaranteed, StepMode::Heuristic] {
        let alg = IpalmConfig { mode, max_iter: 150, gauss_newton: false, ..IpalmConfig::default() };
        let out = ipalm_run(&obj, &alg, None)?;
        let last = out.records.last().expect("at least one iteration");
        println!(
            "{mode:?}: {} iterations ({:?}), objective {:.4e} -> {:.4e}, SSD to target {:.3e}, backtracks {}",
            out.records.len(),
            out.stop,
            out.initial.total(),
            last.j,
            metric_ssd(&out.r, &target)?,
            out.records.iter().map(|r| r.bt_count).sum::<usize>()
        );
        if mode == StepMode::Heuristic {
            let gn = gauss_newton_run(&obj, &out.z, &out.v, &Default::default())?;
            println!("Gauss-Newton on v: {:.6e} -> {:.6e} in {} steps", gn.objective_before, gn.objective_after, gn.iterations);
        }
    }
    Ok(())
}
