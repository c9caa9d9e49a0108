//! Backward characteristics of a velocity field and the solution map
//! `(v, z) -> R = T(phi(0, x_c)) + z`.
//!
//! The trajectories start at the cell centers at `t = 1` and are integrated
//! down to `t = 0` with an explicit Runge-Kutta scheme, `t_k = 1 - k / N_t`.
//! Every stage keeps the velocity derivative with respect to the point and
//! the interpolation stencil with respect to the coefficients, so the
//! derivative `d phi(0, x_c) / d v` is available matrix-free through
//! [`FlowResult::apply`] and [`FlowResult::apply_transpose`].

use crate::error::{Error, Result};
use crate::grid::{CellGrid, PointSet, ScalarField, VelocityField};
use crate::interp::{sample_velocity, Interpolant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimeScheme {
    Euler,
    #[default]
    Rk4,
}

impl std::str::FromStr for TimeScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(TimeScheme::Euler),
            "rk4" => Ok(TimeScheme::Rk4),
            other => Err(Error::invalid(format!("unknown time scheme '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolverConfig {
    /// Number of time steps `N_t`.
    pub steps: usize,
    pub scheme: TimeScheme,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { steps: 5, scheme: TimeScheme::Rk4 }
    }
}

struct Tableau {
    stages: usize,
    a: [[f64; 4]; 4],
    b: [f64; 4],
    c: [f64; 4],
}

impl TimeScheme {
    fn tableau(self) -> Tableau {
        match self {
            TimeScheme::Euler => Tableau { stages: 1, a: [[0.0; 4]; 4], b: [1.0, 0.0, 0.0, 0.0], c: [0.0; 4] },
            TimeScheme::Rk4 => Tableau {
                stages: 4,
                a: [[0.0; 4], [0.5, 0.0, 0.0, 0.0], [0.0, 0.5, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]],
                b: [1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
                c: [0.0, 0.5, 0.5, 1.0],
            },
        }
    }
}

/// End points `phi(0, x_c)` and the recorded stage derivatives.
#[derive(Debug, Clone)]
pub struct FlowResult {
    grid: CellGrid,
    cfg: SolverConfig,
    phi0: PointSet,
    /// `d*d` point Jacobian per stage sample.
    jac: Vec<f64>,
    /// Stencil bases (component 0) and weights, `stride` slots per sample.
    base: Vec<u32>,
    weight: Vec<f64>,
    stride: usize,
}

impl FlowResult {
    pub fn grid(&self) -> &CellGrid {
        &self.grid
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    /// `phi(0, x_c)` for every cell center.
    pub fn phi0(&self) -> &PointSet {
        &self.phi0
    }

    fn samples_per_point(&self) -> usize {
        self.cfg.steps * self.cfg.scheme.tableau().stages
    }

    /// Applies `d phi0 / d v` to a velocity perturbation. Output is
    /// point-major with `d` entries per cell.
    pub fn apply(&self, dv: &[f64]) -> Result<Vec<f64>> {
        if dv.len() != self.grid.velocity_len() {
            return Err(Error::invalid("velocity perturbation has the wrong length"));
        }
        let d = self.grid.dim();
        let n = self.grid.num_cells();
        let tab = self.cfg.scheme.tableau();
        let dt = -1.0 / self.cfg.steps as f64;
        let per_point = self.samples_per_point();
        let mut out = vec![0.0; n * d];
        for p in 0..n {
            let mut dy = [0.0; 3];
            for k in 0..self.cfg.steps {
                let mut dk = [[0.0; 3]; 4];
                for s in 0..tab.stages {
                    let sample = p * per_point + k * tab.stages + s;
                    let mut dys = dy;
                    for j in 0..s {
                        for c in 0..d {
                            dys[c] += dt * tab.a[s][j] * dk[j][c];
                        }
                    }
                    let jac = &self.jac[sample * d * d..(sample + 1) * d * d];
                    let sb = &self.base[sample * self.stride..(sample + 1) * self.stride];
                    let sw = &self.weight[sample * self.stride..(sample + 1) * self.stride];
                    for c in 0..d {
                        let mut acc = 0.0;
                        for kk in 0..d {
                            acc += jac[c * d + kk] * dys[kk];
                        }
                        for (&b, &w) in sb.iter().zip(sw) {
                            acc += w * dv[b as usize + c * n];
                        }
                        dk[s][c] = acc;
                    }
                }
                for c in 0..d {
                    for s in 0..tab.stages {
                        dy[c] += dt * tab.b[s] * dk[s][c];
                    }
                }
            }
            out[p * d..(p + 1) * d].copy_from_slice(&dy[..d]);
        }
        Ok(out)
    }

    /// Applies the transpose of `d phi0 / d v` to a point-major cotangent.
    pub fn apply_transpose(&self, w: &[f64]) -> Result<Vec<f64>> {
        let d = self.grid.dim();
        let n = self.grid.num_cells();
        if w.len() != n * d {
            return Err(Error::invalid("cotangent has the wrong length"));
        }
        let tab = self.cfg.scheme.tableau();
        let dt = -1.0 / self.cfg.steps as f64;
        let per_point = self.samples_per_point();
        let mut vbar = vec![0.0; self.grid.velocity_len()];
        for p in 0..n {
            let mut ybar = [0.0; 3];
            ybar[..d].copy_from_slice(&w[p * d..(p + 1) * d]);
            for k in (0..self.cfg.steps).rev() {
                let mut kbar = [[0.0; 3]; 4];
                for s in 0..tab.stages {
                    for c in 0..d {
                        kbar[s][c] = dt * tab.b[s] * ybar[c];
                    }
                }
                for s in (0..tab.stages).rev() {
                    let sample = p * per_point + k * tab.stages + s;
                    let jac = &self.jac[sample * d * d..(sample + 1) * d * d];
                    let sb = &self.base[sample * self.stride..(sample + 1) * self.stride];
                    let sw = &self.weight[sample * self.stride..(sample + 1) * self.stride];
                    let mut ysbar = [0.0; 3];
                    for kk in 0..d {
                        for c in 0..d {
                            ysbar[kk] += jac[c * d + kk] * kbar[s][c];
                        }
                    }
                    for (&b, &wt) in sb.iter().zip(sw) {
                        for c in 0..d {
                            vbar[b as usize + c * n] += wt * kbar[s][c];
                        }
                    }
                    for c in 0..d {
                        ybar[c] += ysbar[c];
                    }
                    for j in 0..s {
                        for c in 0..d {
                            kbar[j][c] += dt * tab.a[s][j] * ysbar[c];
                        }
                    }
                }
            }
        }
        Ok(vbar)
    }
}

/// Integrates `d phi / dt = v(t, phi)` from `phi(1) = x_c` down to `t = 0`.
pub fn solve_backward_flow(v: &VelocityField, cfg: &SolverConfig) -> Result<FlowResult> {
    if cfg.steps == 0 {
        return Err(Error::invalid("the flow solver needs at least one time step"));
    }
    let grid = *v.grid();
    let d = grid.dim();
    let n = grid.num_cells();
    let tab = cfg.scheme.tableau();
    let stride = 1usize << (d + 1);
    let per_point = cfg.steps * tab.stages;
    let total = n * per_point;
    let mut jac = vec![0.0; total * d * d];
    let mut base = vec![0u32; total * stride];
    let mut weight = vec![0.0; total * stride];
    let mut phi = grid.cell_centers().into_coords();
    let dt = -1.0 / cfg.steps as f64;

    for p in 0..n {
        let mut y = [0.0; 3];
        y[..d].copy_from_slice(&phi[p * d..(p + 1) * d]);
        for k in 0..cfg.steps {
            let t = 1.0 - k as f64 / cfg.steps as f64;
            let mut ks = [[0.0; 3]; 4];
            for s in 0..tab.stages {
                let mut ys = y;
                for j in 0..s {
                    for c in 0..d {
                        ys[c] += dt * tab.a[s][j] * ks[j][c];
                    }
                }
                let ts = (t + tab.c[s] * dt).clamp(0.0, 1.0);
                let smp = sample_velocity(v, ts, &ys[..d]);
                ks[s] = smp.value;
                let sample = p * per_point + k * tab.stages + s;
                for c in 0..d {
                    for kk in 0..d {
                        jac[sample * d * d + c * d + kk] = smp.jac[c][kk];
                    }
                }
                // unused slots keep weight 0
                for e in 0..smp.len {
                    base[sample * stride + e] = smp.base[e] as u32;
                    weight[sample * stride + e] = smp.weight[e];
                }
            }
            for c in 0..d {
                for s in 0..tab.stages {
                    y[c] += dt * tab.b[s] * ks[s][c];
                }
            }
            if y[..d].iter().any(|x| !x.is_finite()) {
                return Err(Error::NumericalBlowup(format!(
                    "trajectory of cell {p} became non-finite at time step {}",
                    k + 1
                )));
            }
        }
        phi[p * d..(p + 1) * d].copy_from_slice(&y[..d]);
    }
    Ok(FlowResult { grid, cfg: *cfg, phi0: PointSet::new(d, phi)?, jac, base, weight, stride })
}

/// Reconstruction `R = T(phi0) + z` and the flow that produced it.
pub fn solution_map(
    template: &Interpolant,
    v: &VelocityField,
    z: &ScalarField,
    cfg: &SolverConfig,
) -> Result<(ScalarField, FlowResult)> {
    if template.grid().m() != v.grid().m() || z.grid() != v.grid() || template.grid().dim() != v.grid().dim() {
        return Err(Error::invalid("template, velocity and source must share one grid"));
    }
    let flow = solve_backward_flow(v, cfg)?;
    let mut r = template.values_at(flow.phi0());
    for (ri, zi) in r.iter_mut().zip(z.values()) {
        *ri += zi;
    }
    Ok((ScalarField::new(*v.grid(), r)?, flow))
}

/// The deformation part `T(phi0)` on the grid of `flow`.
pub fn deformed_template(template: &Interpolant, flow: &FlowResult) -> Result<ScalarField> {
    ScalarField::new(*flow.grid(), template.values_at(flow.phi0()))
}

/// Jacobian-vector product of the solution map with respect to `v`.
pub fn apply_dr_dv(flow: &FlowResult, template: &Interpolant, dv: &VelocityField) -> Result<Vec<f64>> {
    if dv.grid() != flow.grid() {
        return Err(Error::invalid("perturbation grid differs from the flow grid"));
    }
    let d = flow.grid().dim();
    let dphi = flow.apply(dv.values())?;
    Ok((0..flow.phi0().len())
        .map(|p| {
            let (_, g) = template.eval(flow.phi0().point(p));
            (0..d).map(|k| g[k] * dphi[p * d + k]).sum()
        })
        .collect())
}

/// Transposed Jacobian-vector product of the solution map with respect to `v`.
pub fn apply_dr_dv_transpose(flow: &FlowResult, template: &Interpolant, w: &[f64]) -> Result<Vec<f64>> {
    let n = flow.grid().num_cells();
    if w.len() != n {
        return Err(Error::invalid("image cotangent has the wrong length"));
    }
    let d = flow.grid().dim();
    let mut cot = vec![0.0; n * d];
    for p in 0..n {
        let (_, g) = template.eval(flow.phi0().point(p));
        for k in 0..d {
            cot[p * d + k] = g[k] * w[p];
        }
    }
    flow.apply_transpose(&cot)
}

/// Determinant of the central-difference Jacobian of `x_c -> phi0(x_c)` at
/// interior cells (boundary cells report `NaN`).
pub fn jacobian_determinants(flow: &FlowResult) -> Vec<f64> {
    let grid = flow.grid();
    let d = grid.dim();
    let m = grid.m();
    let h = grid.h();
    let phi = flow.phi0();
    (0..grid.num_cells())
        .map(|i| {
            let idx = grid.multi_index(i);
            if idx[..d].iter().any(|&a| a == 0 || a + 1 == m) {
                return f64::NAN;
            }
            let mut j = [[0.0; 3]; 3];
            for k in 0..d {
                let mut lo = idx;
                let mut hi = idx;
                lo[k] -= 1;
                hi[k] += 1;
                let pl = phi.point(grid.flat_index(&lo[..d]));
                let ph = phi.point(grid.flat_index(&hi[..d]));
                for c in 0..d {
                    j[c][k] = (ph[c] - pl[c]) / (2.0 * h);
                }
            }
            if d == 2 {
                j[0][0] * j[1][1] - j[0][1] * j[1][0]
            } else {
                j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1]) - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0])
                    + j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0])
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::InterpOrder;

    fn grid(m: usize) -> CellGrid {
        CellGrid::new(2, m, 1).unwrap()
    }

    #[test]
    fn zero_field_fixes_points() {
        let g = grid(8);
        let flow = solve_backward_flow(&VelocityField::zeros(g), &SolverConfig::default()).unwrap();
        assert_eq!(flow.phi0(), &g.cell_centers());
        // derivative is nonzero even though v = 0
        let mut dv = vec![0.0; g.velocity_len()];
        dv[3] = 1.0;
        assert!(flow.apply(&dv).unwrap().iter().any(|&x| x != 0.0));
        assert!(flow.apply(&vec![0.0; g.velocity_len()]).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn constant_field_translates() {
        let g = grid(8);
        let b = [0.03, -0.05];
        let v = VelocityField::from_fn(g, |_, _| [b[0], b[1], 0.0]);
        for scheme in [TimeScheme::Euler, TimeScheme::Rk4] {
            let flow = solve_backward_flow(&v, &SolverConfig { steps: 5, scheme }).unwrap();
            for p in 0..g.num_cells() {
                let x = g.center(p);
                let y = flow.phi0().point(p);
                assert!((y[0] - (x[0] - b[0])).abs() < 1e-15);
                assert!((y[1] - (x[1] - b[1])).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn identity_solution_map() {
        let g = grid(6);
        let t = ScalarField::from_fn(g, |x| (3.0 * x[0]).sin() + x[1]);
        let z = ScalarField::from_fn(g, |x| x[0] * x[1]);
        let it = Interpolant::new(&t, InterpOrder::Cubic);
        let (r, _) = solution_map(&it, &VelocityField::zeros(g), &ScalarField::zeros(g), &SolverConfig::default())
            .unwrap();
        for (a, b) in r.values().iter().zip(t.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        let (r, _) = solution_map(&it, &VelocityField::zeros(g), &z, &SolverConfig::default()).unwrap();
        for i in 0..g.num_cells() {
            assert!((r.values()[i] - t.values()[i] - z.values()[i]).abs() < 1e-12);
        }
        assert!(solution_map(&it, &VelocityField::zeros(grid(8)), &z, &SolverConfig::default()).is_err());
    }

    #[test]
    fn constant_template_has_zero_derivative() {
        let g = grid(6);
        let it = Interpolant::new(&ScalarField::constant(g, 0.4), InterpOrder::Cubic);
        let v = VelocityField::from_fn(g, |t, x| [0.1 * x[1] * t, -0.05 * x[0], 0.0]);
        let flow = solve_backward_flow(&v, &SolverConfig::default()).unwrap();
        let dv = VelocityField::from_fn(g, |_, x| [x[0], x[1], 0.0]);
        assert!(apply_dr_dv(&flow, &it, &dv).unwrap().iter().all(|&x| x.abs() < 1e-12));
    }
}
