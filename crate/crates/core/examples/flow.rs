//! Characteristics of the deformation presets: displacement, Jacobian
//! determinants, and how Euler and RK4 converge as the step count grows.
//!
//! cargo run --release --example flow

use deformrecon::flow::{jacobian_determinants, solve_backward_flow, SolverConfig, TimeScheme};
use deformrecon::phantom::DeformPreset;
use deformrecon::{CellGrid, Result};

fn displacement(grid: &CellGrid, flow: &deformrecon::flow::FlowResult) -> f64 {
    (0..grid.num_cells())
        .map(|p| {
            let (x, y) = (grid.center(p), flow.phi0().point(p));
            (x[0] - y[0]).hypot(x[1] - y[1])
        })
        .fold(0.0, f64::max)
}

fn main() -> Result<()> {
    let grid = CellGrid::new(2, 64, 1)?;
    for name in ["translate", "swirl", "bend", "translate-bump"] {
        let v = name.parse::<DeformPreset>()?.velocity(&grid);
        let flow = solve_backward_flow(&v, &SolverConfig::default())?;
        let det = jacobian_determinants(&flow);
        let (lo, hi) = det.iter().filter(|d| d.is_finite()).fold((f64::MAX, f64::MIN), |(a, b), &d| (a.min(d), b.max(d)));
        println!("{name:<15} max |v| {:.4}  max displacement {:.4}  det in [{lo:.3}, {hi:.3}]", v.max_abs(), displacement(&grid, &flow));
    }

    let v = DeformPreset::Swirl { omega: 1.5 }.velocity(&grid);
    let reference = solve_backward_flow(&v, &SolverConfig { steps: 320, scheme: TimeScheme::Rk4 })?;
    println!("\nstrong swirl, error against 320 RK4 steps:");
    for steps in [5, 10, 20, 40] {
        let mut line = format!("{steps:>3} steps");
        for scheme in [TimeScheme::Euler, TimeScheme::Rk4] {
            let flow = solve_backward_flow(&v, &SolverConfig { steps, scheme })?;
            let err = flow.phi0().coords().iter().zip(reference.phi0().coords()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            line += &format!("  {scheme:?} {err:.2e}");
        }
        println!("{line}");
    }
    Ok(())
}
