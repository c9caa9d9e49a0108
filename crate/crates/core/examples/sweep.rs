//! Parameter sweep over the regularization weights on a coarse grid,
//! run in parallel.
//!
//! cargo run --release --example sweep

use deformrecon::experiment::{prepare, run_sweep, sweep_csv, ExperimentSpec};
use deformrecon::Result;

const SPEC: &str = "
[data]
template = shepp-logan
deform = bend
add_square = true
m = 32
angles = 10
noise = 0.05

[solver]
max_iter = 100
coarsest_m = 16

[sweep]
lambda1_scale = 0.01, 0.1, 1
lambda2 = 0.02, 0.2, 2
";

fn main() -> Result<()> {
    let spec = ExperimentSpec::parse(SPEC, std::path::Path::new("."))?;
    let data = prepare(&spec.data)?;
    let rows = run_sweep(&spec, &data)?;
    print!("{}", sweep_csv(&rows));
    let best = rows.iter().max_by(|a, b| a.ssim.total_cmp(&b.ssim)).expect("non-empty sweep");
    println!("best SSIM {:.4} at lambda1 scale {}, lambda2 {}", best.ssim, best.lambda1_scale, best.lambda2);
    Ok(())
}
