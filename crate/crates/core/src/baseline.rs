//! Direct L2-TV reconstruction used for comparison:
//!
//! ```text
//! min_R  h_Y ||K R - g||^2 + lambda h^d sum_i ||(grad_h R)_i||,   lo <= R <= hi
//! ```
//!
//! solved with diagonally preconditioned primal-dual iterations. The box
//! keeps the dual objective finite, so the primal-dual gap is a valid
//! stopping criterion; its default is wide enough to be inactive for images
//! in `[0, 1]`.

use crate::error::{Error, Result};
use crate::functionals::{forward_gradient, forward_gradient_adjoint, tv_sum, ForwardOperator};
use crate::grid::{CellGrid, ScalarField};

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub lambda: f64,
    /// Relative primal-dual gap.
    pub tol: f64,
    pub max_iter: usize,
    pub bounds: (f64, f64),
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { lambda: 0.1, tol: 1e-5, max_iter: 20_000, bounds: (-1.0, 2.0) }
    }
}

#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    pub image: ScalarField,
    pub objective: f64,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `h_Y ||K x - g||^2 + lambda TV(x)`
pub fn l2tv_objective(x: &[f64], grid: &CellGrid, op: &dyn ForwardOperator, g: &[f64], lambda: f64) -> f64 {
    let kx = op.forward(x);
    let w = op.quadrature_weight();
    let fit: f64 = kx.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).sum();
    w * fit + lambda * grid.cell_volume() * tv_sum(x, &grid.shape(), grid.h())
}

/// Runs the solver from `x0` (zeros if `None`). When the iteration cap is
/// hit, the checked iterate with the lowest objective is returned and
/// `converged` is false.
pub fn l2tv_baseline(
    grid: &CellGrid,
    op: &dyn ForwardOperator,
    g: &[f64],
    cfg: &BaselineConfig,
    x0: Option<&[f64]>,
) -> Result<BaselineOutcome> {
    let n = grid.num_cells();
    let d = grid.dim();
    let shape = grid.shape();
    let h = grid.h();
    if op.input_len() != n || op.output_len() != g.len() {
        return Err(Error::invalid("operator, grid and data sizes are inconsistent"));
    }
    if !(cfg.lambda >= 0.0) || !(cfg.tol > 0.0) || !(cfg.bounds.0 < cfg.bounds.1) {
        return Err(Error::invalid("invalid baseline configuration"));
    }
    let (lo, hi) = cfg.bounds;
    let w = op.quadrature_weight();
    let radius = cfg.lambda * grid.cell_volume();

    // Diagonal steps from absolute row and column sums of [K; D].
    let ones = vec![1.0; n];
    let k_rows = op.forward(&ones);
    let k_cols = op.adjoint(&vec![1.0; g.len()]);
    if k_rows.iter().chain(&k_cols).any(|&v| v < 0.0) {
        return Err(Error::invalid("diagonal step sizes need a non-negative forward operator"));
    }
    let sigma_y: Vec<f64> = k_rows.iter().map(|&r| if r > 0.0 { 1.0 / r } else { 0.0 }).collect();
    let sigma_p = h / 2.0;
    let tau: Vec<f64> = k_cols.iter().map(|&c| 1.0 / (c + 2.0 * d as f64 / h)).collect();

    let mut x: Vec<f64> = match x0 {
        Some(v) if v.len() == n => v.iter().map(|a| a.clamp(lo, hi)).collect(),
        Some(_) => return Err(Error::invalid("initial image has the wrong size")),
        None => vec![0.0f64.clamp(lo, hi); n],
    };
    let mut xbar = x.clone();
    // Rows no ray reaches keep their optimal dual value; their misfit is a
    // constant of the problem.
    let mut y: Vec<f64> = k_rows.iter().zip(g).map(|(&r, &gi)| if r > 0.0 { 0.0 } else { -2.0 * w * gi }).collect();
    let mut p = vec![0.0; n * d];
    let mut grad = vec![0.0; n * d];
    let mut dtp = vec![0.0; n];

    let gap_of = |x: &[f64], y: &[f64], p: &[f64], dtp: &mut Vec<f64>| -> (f64, f64) {
        let primal = l2tv_objective(x, grid, op, g, cfg.lambda);
        forward_gradient_adjoint(p, &shape, h, dtp);
        let kty = op.adjoint(y);
        let f1_conj: f64 = y.iter().zip(g).map(|(a, b)| a * b + a * a / (4.0 * w)).sum();
        let box_conj: f64 = kty.iter().zip(dtp.iter()).map(|(a, b)| { let u = -(a + b); (lo * u).max(hi * u) }).sum();
        let dual = -f1_conj - box_conj;
        (primal, primal - dual)
    };

    // the floor lets problems whose optimal value is zero converge
    let floor = 1e-8 * w * g.iter().map(|v| v * v).sum::<f64>();
    let done = |primal: f64, gap: f64| gap <= cfg.tol * primal.abs().max(floor);
    let mut it = 0;
    let (mut primal, mut gap) = gap_of(&x, &y, &p, &mut dtp);
    let mut best = (x.clone(), primal, gap);
    while it < cfg.max_iter && !done(primal, gap) {
        // dual ascent on the data block: prox of sigma f1*
        let kx = op.forward(&xbar);
        for i in 0..y.len() {
            let s = sigma_y[i];
            y[i] = (y[i] + s * kx[i] - s * g[i]) / (1.0 + s / (2.0 * w));
        }
        // dual ascent on the TV block: projection on balls
        forward_gradient(&xbar, &shape, h, &mut grad);
        for (pi, gi) in p.iter_mut().zip(&grad) {
            *pi += sigma_p * gi;
        }
        for i in 0..n {
            let s: f64 = (0..d).map(|k| p[k * n + i] * p[k * n + i]).sum::<f64>().sqrt();
            if s > radius {
                let f = if radius > 0.0 { radius / s } else { 0.0 };
                (0..d).for_each(|k| p[k * n + i] *= f);
            }
        }
        // primal descent with box projection
        let kty = op.adjoint(&y);
        forward_gradient_adjoint(&p, &shape, h, &mut dtp);
        for i in 0..n {
            let xn = (x[i] - tau[i] * (kty[i] + dtp[i])).clamp(lo, hi);
            xbar[i] = 2.0 * xn - x[i];
            x[i] = xn;
        }
        it += 1;
        if it % 20 == 0 || it == cfg.max_iter {
            (primal, gap) = gap_of(&x, &y, &p, &mut dtp);
            if primal < best.1 {
                best = (x.clone(), primal, gap);
            }
        }
    }
    let converged = done(primal, gap);
    let (x, objective, gap) = if converged { (x, primal, gap) } else { best };
    let image = ScalarField::new(*grid, x)?;
    Ok(BaselineOutcome { image, objective, gap, iterations: it, converged })
}
