//! Proximal maps of the two regularizer blocks and the linear solver they need.

use crate::error::{Error, Result};
use crate::functionals::{dct_matrix, forward_gradient, forward_gradient_adjoint, tv_sum, RegOperatorB};
use crate::grid::CellGrid;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Result of a conjugate gradient solve.
#[derive(Debug, Clone)]
pub struct PcgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `||b - A x|| / ||b||`, recomputed from scratch at exit.
    pub rel_residual: f64,
    pub converged: bool,
}

/// Preconditioned conjugate gradients for a symmetric positive definite
/// operator. `precond` applies the inverse of the preconditioner.
pub fn pcg(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> PcgOutcome {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return PcgOutcome { x: vec![0.0; n], iterations: 0, rel_residual: 0.0, converged: true };
    }
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let ax = apply(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut zv = precond(&r);
    let mut p = zv.clone();
    let mut rz = dot(&r, &zv);
    let mut it = 0;
    while it < max_iter && norm(&r) > tol * bnorm {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let a = rz / pap;
        for i in 0..n {
            x[i] += a * p[i];
            r[i] -= a * ap[i];
        }
        zv = precond(&r);
        let rz_new = dot(&r, &zv);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = zv[i] + beta * p[i];
        }
        it += 1;
    }
    let ax = apply(&x);
    let rel = b.iter().zip(&ax).map(|(b, a)| (b - a) * (b - a)).sum::<f64>().sqrt() / bnorm;
    PcgOutcome { x, iterations: it, rel_residual: rel, converged: rel <= tol }
}

/// Separable transform of a box array: `C` (forward) or `C^T` (inverse)
/// along every axis.
fn separable(x: &mut [f64], m: usize, d: usize, c: &[f64], inverse: bool) {
    let mut line = vec![0.0; m];
    let mut stride = 1;
    for _ in 0..d {
        let n = x.len();
        for start in 0..n {
            if (start / stride) % m != 0 {
                continue;
            }
            for k in 0..m {
                line[k] = (0..m)
                    .map(|i| {
                        let w = if inverse { c[i * m + k] } else { c[k * m + i] };
                        w * x[start + i * stride]
                    })
                    .sum();
            }
            for k in 0..m {
                x[start + k * stride] = line[k];
            }
        }
        stride *= m;
    }
}

/// Direct solver for `(a I + b N) x = r` with `N = sum_l lambda_l B_l^T B_l`
/// as in [`RegOperatorB::normal_apply`].
/// Spatial blocks are diagonal in the DCT-II basis; the temporal block
/// leaves one tridiagonal system over the time nodes per mode.
#[derive(Debug, Clone)]
pub struct SpectralSolver {
    grid: CellGrid,
    c: Vec<f64>,
    /// Diagonal per mode (without the temporal coupling).
    diag: Vec<f64>,
    /// Coupling between consecutive time nodes.
    coupling: f64,
}

impl SpectralSolver {
    pub fn new(reg: &RegOperatorB, lambda: &[f64; 3], a: f64, b: f64) -> Self {
        let grid = *reg.grid();
        let diag = reg.mode_symbols().iter().map(|s| a + b * (lambda[0] * s + lambda[2])).collect();
        let coupling = if grid.m_t() == 0 { 0.0 } else { b * lambda[1] / (grid.h_t() * grid.h_t()) };
        Self { grid, c: dct_matrix(grid.m()), diag, coupling }
    }

    pub fn solve(&self, r: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let (n, d, m, nt) = (g.num_cells(), g.dim(), g.m(), g.time_nodes());
        let mut x = r.to_vec();
        for block in x.chunks_mut(n) {
            separable(block, m, d, &self.c, false);
        }
        // Thomas algorithm over time nodes for every component and mode
        let cpl = self.coupling;
        let mut cp = vec![0.0; nt];
        let mut rhs = vec![0.0; nt];
        for comp in 0..d {
            for mode in 0..n {
                let idx = |t: usize| (t * d + comp) * n + mode;
                let base = self.diag[mode];
                let dt = |t: usize| {
                    let ends = if nt == 1 { 0.0 } else if t == 0 || t == nt - 1 { 1.0 } else { 2.0 };
                    (base + ends * cpl).max(f64::MIN_POSITIVE)
                };
                for t in 0..nt {
                    rhs[t] = x[idx(t)];
                }
                let mut denom = dt(0);
                cp[0] = -cpl / denom;
                rhs[0] /= denom;
                for t in 1..nt {
                    denom = dt(t) + cpl * cp[t - 1];
                    cp[t] = -cpl / denom;
                    rhs[t] = (rhs[t] + cpl * rhs[t - 1]) / denom;
                }
                for t in (0..nt.saturating_sub(1)).rev() {
                    rhs[t] -= cp[t] * rhs[t + 1];
                }
                for t in 0..nt {
                    x[idx(t)] = rhs[t];
                }
            }
        }
        for block in x.chunks_mut(n) {
            separable(block, m, d, &self.c, true);
        }
        x
    }
}

/// Result of [`prox_quadratic`].
#[derive(Debug, Clone)]
pub struct QuadProx {
    pub x: Vec<f64>,
    pub rel_residual: f64,
    pub iterations: usize,
}

/// Solves `(I + sigma h_t h^d sum_b lambda_b B_b^T B_b) x = v` by CG,
/// preconditioned with the direct spectral solver (exact up to rounding,
/// so CG usually stops after one or two steps).
pub fn prox_quadratic(
    v: &[f64],
    sigma: f64,
    reg: &RegOperatorB,
    lambda: &[f64; 3],
    tol: f64,
    max_iter: usize,
) -> Result<QuadProx> {
    if !(sigma >= 0.0) {
        return Err(Error::invalid("prox parameter must be non-negative"));
    }
    if v.len() != reg.grid().velocity_len() {
        return Err(Error::invalid("velocity vector does not match the regularizer grid"));
    }
    let s = sigma * reg.quadrature();
    if s == 0.0 || lambda.iter().all(|&l| l == 0.0) {
        return Ok(QuadProx { x: v.to_vec(), rel_residual: 0.0, iterations: 0 });
    }
    let spectral = SpectralSolver::new(reg, lambda, 1.0, s);
    let apply = |x: &[f64]| {
        let bx = reg.normal_apply(x, lambda);
        x.iter().zip(&bx).map(|(a, b)| a + s * b).collect::<Vec<_>>()
    };
    let out = pcg(apply, |r| spectral.solve(r), v, Some(v), tol, max_iter);
    if !out.converged {
        return Err(Error::Convergence { what: "quadratic prox".into(), residual: out.rel_residual });
    }
    Ok(QuadProx { x: out.x, rel_residual: out.rel_residual, iterations: out.iterations })
}

/// Result of [`prox_tv`].
#[derive(Debug, Clone)]
pub struct TvProx {
    pub x: Vec<f64>,
    /// Final dual variable, reusable as a warm start.
    pub dual: Vec<f64>,
    pub gap: f64,
    pub rel_gap: f64,
    pub iterations: usize,
    /// False if `max_iter` was reached before the gap closed.
    pub converged: bool,
}

/// `1/2 ||x - z||^2 + mu TV(x)` and its dual `<z, D^T q> - 1/2 ||D^T q||^2`.
fn tv_gap(x: &[f64], z: &[f64], dtq: &[f64], mu: f64, shape: &[usize], h: f64) -> (f64, f64) {
    let primal = 0.5 * x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() + mu * tv_sum(x, shape, h);
    let dual = dot(z, dtq) - 0.5 * dot(dtq, dtq);
    (primal, primal - dual)
}

/// Approximates `argmin_x 1/2 ||x - z||^2 + weight h^d TV_h(x)` on a box of
/// the given shape by primal-dual hybrid gradient iterations.
///
/// The dual variable lives on the `d` forward-difference components and is
/// constrained to pointwise balls of radius `weight h^d`. Stops when the
/// primal-dual gap relative to the primal value drops below `tol`; returns
/// the best iterate seen otherwise.
pub fn prox_tv(
    z: &[f64],
    shape: &[usize],
    h: f64,
    weight: f64,
    tol: f64,
    max_iter: usize,
    warm_dual: Option<&[f64]>,
) -> Result<TvProx> {
    let n: usize = shape.iter().product();
    let d = shape.len();
    if z.len() != n {
        return Err(Error::invalid("image does not match the prox shape"));
    }
    if !(weight >= 0.0) || !(h > 0.0) {
        return Err(Error::invalid("prox weight must be non-negative"));
    }
    let mu = weight * h.powi(d as i32);
    if mu == 0.0 {
        return Ok(TvProx { x: z.to_vec(), dual: vec![0.0; n * d], gap: 0.0, rel_gap: 0.0, iterations: 0, converged: true });
    }
    let tau = 1.0 / (2.0 * (d as f64).sqrt());
    let sig = h * h / (2.0 * (d as f64).sqrt());

    let mut q = match warm_dual {
        Some(w) if w.len() == n * d => w.to_vec(),
        _ => vec![0.0; n * d],
    };
    project_balls(&mut q, n, d, mu);
    let mut dtq = vec![0.0; n];
    forward_gradient_adjoint(&q, shape, h, &mut dtq);
    // primal start: the minimizer of the Lagrangian for the current dual
    let mut x: Vec<f64> = z.iter().zip(&dtq).map(|(a, b)| a - b).collect();
    let mut xbar = x.clone();
    let mut g = vec![0.0; n * d];

    let (p0, gap0) = tv_gap(&x, z, &dtq, mu, shape, h);
    let mut best = (gap0, x.clone(), q.clone(), p0);
    let check_every = 10;
    let mut it = 0;
    while it < max_iter && best.0 > tol * best.3.abs() {
        forward_gradient(&xbar, shape, h, &mut g);
        for (qi, gi) in q.iter_mut().zip(&g) {
            *qi += sig * gi;
        }
        project_balls(&mut q, n, d, mu);
        forward_gradient_adjoint(&q, shape, h, &mut dtq);
        for i in 0..n {
            let xn = (x[i] - tau * dtq[i] + tau * z[i]) / (1.0 + tau);
            xbar[i] = 2.0 * xn - x[i];
            x[i] = xn;
        }
        it += 1;
        if it % check_every == 0 || it == max_iter {
            let (p, gap) = tv_gap(&x, z, &dtq, mu, shape, h);
            if gap < best.0 {
                best = (gap, x.clone(), q.clone(), p);
            }
        }
    }
    let (gap, x, dual, p) = best;
    let rel_gap = if p.abs() > 0.0 { gap / p.abs() } else { gap.max(0.0) };
    Ok(TvProx { x, dual, gap, rel_gap, iterations: it, converged: gap <= tol * p.abs() })
}

fn project_balls(q: &mut [f64], n: usize, d: usize, radius: f64) {
    for i in 0..n {
        let s: f64 = (0..d).map(|k| q[k * n + i] * q[k * n + i]).sum::<f64>().sqrt();
        if s > radius {
            let f = radius / s;
            for k in 0..d {
                q[k * n + i] *= f;
            }
        }
    }
}

/// Exact solution of `argmin_x 1/2 ||x - y||^2 + lambda sum_i |x_{i+1} - x_i|`
/// by the direct taut-string algorithm of Condat.
pub fn prox_tv_1d_exact(y: &[f64], lambda: f64) -> Vec<f64> {
    let n = y.len();
    let mut out = vec![0.0; n];
    if n == 0 {
        return out;
    }
    if lambda <= 0.0 {
        out.copy_from_slice(y);
        return out;
    }
    let (mut k, mut k0, mut kplus, mut kminus) = (0usize, 0usize, 0usize, 0usize);
    let (mut umin, mut umax) = (lambda, -lambda);
    let (mut vmin, mut vmax) = (y[0] - lambda, y[0] + lambda);
    loop {
        while k == n - 1 {
            if umin < 0.0 {
                loop {
                    out[k0] = vmin;
                    k0 += 1;
                    if k0 > kminus {
                        break;
                    }
                }
                k = k0;
                kminus = k0;
                vmin = y[k0];
                umin = lambda;
                umax = vmin + umin - vmax;
            } else if umax > 0.0 {
                loop {
                    out[k0] = vmax;
                    k0 += 1;
                    if k0 > kplus {
                        break;
                    }
                }
                k = k0;
                kplus = k0;
                vmax = y[k0];
                umax = -lambda;
                umin = vmax + umax - vmin;
            } else {
                vmin += umin / (k - k0 + 1) as f64;
                out[k0..=k].iter_mut().for_each(|o| *o = vmin);
                return out;
            }
        }
        umin += y[k + 1] - vmin;
        if umin < -lambda {
            out[k0..=kminus].iter_mut().for_each(|o| *o = vmin);
            k0 = kminus + 1;
            k = k0;
            kplus = k0;
            kminus = k0;
            vmin = y[k0];
            vmax = vmin + 2.0 * lambda;
            umin = lambda;
            umax = -lambda;
            continue;
        }
        umax += y[k + 1] - vmax;
        if umax > lambda {
            out[k0..=kplus].iter_mut().for_each(|o| *o = vmax);
            k0 = kplus + 1;
            k = k0;
            kplus = k0;
            kminus = k0;
            vmax = y[k0];
            vmin = vmax - 2.0 * lambda;
            umin = lambda;
            umax = -lambda;
            continue;
        }
        k += 1;
        if umin >= lambda {
            kminus = k;
            vmin += (umin - lambda) / (kminus - k0 + 1) as f64;
            umin = lambda;
        }
        if umax <= -lambda {
            kplus = k;
            vmax += (umax + lambda) / (kplus - k0 + 1) as f64;
            umax = -lambda;
        }
    }
}

/// `argmin_x 1/2 h^d ||x||^2 + 1/(2 sigma) ||x - z||^2 = z / (1 + sigma h^d)`.
pub fn prox_l2_source(z: &[f64], sigma: f64, cell_volume: f64) -> Result<Vec<f64>> {
    if !(sigma >= 0.0) {
        return Err(Error::invalid("prox parameter must be non-negative"));
    }
    let f = 1.0 / (1.0 + sigma * cell_volume);
    Ok(z.iter().map(|a| a * f).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taut_string_two_samples() {
        // jump 3 with lambda 0.5 shrinks to 2
        assert_eq!(prox_tv_1d_exact(&[0.0, 3.0], 0.5), vec![0.5, 2.5]);
        // lambda beyond half the jump merges to the mean
        assert_eq!(prox_tv_1d_exact(&[0.0, 3.0], 2.0), vec![1.5, 1.5]);
    }

    #[test]
    fn l2_prox_halves() {
        let z = vec![1.0, -2.0, 4.0];
        assert_eq!(prox_l2_source(&z, 16.0, 1.0 / 16.0).unwrap(), vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn tv_prox_constant() {
        let z = vec![0.3; 16];
        let out = prox_tv(&z, &[4, 4], 0.25, 1.0, 1e-10, 100, None).unwrap();
        assert!(out.x.iter().all(|&a| (a - 0.3).abs() < 1e-14));
    }

    #[test]
    fn spectral_solver_is_exact() {
        use crate::functionals::RegKind;
        for (d, m, mt) in [(2, 8, 1), (2, 7, 0), (2, 6, 3), (3, 4, 1)] {
            let g = CellGrid::new(d, m, mt).unwrap();
            for kind in [RegKind::ThirdOrder, RegKind::Curvature, RegKind::Diffusion] {
                let reg = RegOperatorB::new(kind, &g);
                let lam = [0.3, 0.7, 0.1];
                let solver = SpectralSolver::new(&reg, &lam, 1.0, 1e-4);
                let r: Vec<f64> = (0..g.velocity_len()).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect();
                let x = solver.solve(&r);
                let nx = reg.normal_apply(&x, &lam);
                let res: f64 = x.iter().zip(&nx).zip(&r).map(|((a, b), c)| (a + 1e-4 * b - c).powi(2)).sum::<f64>().sqrt();
                assert!(res < 1e-10 * norm(&r), "{kind:?} d={d} m={m} mt={mt}: {res}");
            }
        }
    }

    #[test]
    fn pcg_small_system() {
        let a = [[4.0, 1.0], [1.0, 3.0]];
        let apply = |x: &[f64]| vec![a[0][0] * x[0] + a[0][1] * x[1], a[1][0] * x[0] + a[1][1] * x[1]];
        let out = pcg(apply, |r| r.to_vec(), &[1.0, 2.0], None, 1e-12, 10);
        assert!(out.converged);
        assert!((out.x[0] - 1.0 / 11.0).abs() < 1e-12 && (out.x[1] - 7.0 / 11.0).abs() < 1e-12);
    }
}
