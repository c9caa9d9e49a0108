//! Interpolation on cell-centered grids with analytic derivatives.
//!
//! Query coordinates are clamped to the bounding box of the cell centers,
//! so values outside the box repeat the nearest boundary value and the
//! gradient component along a clamped axis is zero.
//!
//! Cubic interpolation uses interpolating B-splines: coefficients come from
//! the natural-spline prefilter (ghost coefficients are linear
//! extrapolations), so the interpolant passes through the samples and
//! reproduces affine functions on the whole box.

use crate::error::{ensure_finite, Error, Result};
use crate::grid::{CellGrid, PointSet, ScalarField, VelocityField};
use crate::sparse::CsrMatrix;

/// Interpolation order for scalar images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InterpOrder {
    Linear,
    #[default]
    Cubic,
}

impl std::str::FromStr for InterpOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(InterpOrder::Linear),
            "cubic" => Ok(InterpOrder::Cubic),
            other => Err(Error::invalid(format!("unknown interpolation order '{other}'"))),
        }
    }
}

/// One-dimensional interpolation weights along a single axis.
#[derive(Debug, Clone, Copy)]
pub(crate) struct AxisStencil {
    pub idx: [usize; 6],
    pub w: [f64; 6],
    pub dw: [f64; 6],
    pub len: usize,
}

impl AxisStencil {
    const UNIT: AxisStencil = AxisStencil { idx: [0; 6], w: [1.0, 0., 0., 0., 0., 0.], dw: [0.0; 6], len: 1 };

    fn empty() -> Self {
        Self { idx: [0; 6], w: [0.0; 6], dw: [0.0; 6], len: 0 }
    }

    fn push(&mut self, i: usize, w: f64, dw: f64) {
        self.idx[self.len] = i;
        self.w[self.len] = w;
        self.dw[self.len] = dw;
        self.len += 1;
    }
}

/// Maps a physical coordinate to a clamped continuous cell index and the
/// chain-rule factor `du/dx` (zero when clamped).
fn clamped_index(x: f64, m: usize) -> (f64, f64) {
    let mf = m as f64;
    let u = x * mf - 0.5;
    let hi = mf - 1.0;
    if u < 0.0 {
        (0.0, 0.0)
    } else if u > hi {
        (hi, 0.0)
    } else {
        (u, mf)
    }
}

pub(crate) fn linear_axis(x: f64, m: usize) -> AxisStencil {
    if m == 1 {
        return AxisStencil::UNIT;
    }
    let (u, slope) = clamped_index(x, m);
    let j = (u.floor() as usize).min(m - 2);
    let f = u - j as f64;
    let mut s = AxisStencil::empty();
    s.push(j, 1.0 - f, -slope);
    s.push(j + 1, f, slope);
    s
}

pub(crate) fn cubic_axis(x: f64, m: usize) -> AxisStencil {
    if m == 1 {
        return AxisStencil::UNIT;
    }
    let (u, slope) = clamped_index(x, m);
    let j = (u.floor() as usize).min(m - 2);
    let f = u - j as f64;
    let g = 1.0 - f;
    let w = [
        g * g * g / 6.0,
        (3.0 * f * f * f - 6.0 * f * f + 4.0) / 6.0,
        (-3.0 * f * f * f + 3.0 * f * f + 3.0 * f + 1.0) / 6.0,
        f * f * f / 6.0,
    ];
    let dw = [
        -g * g / 2.0 * slope,
        (3.0 * f * f - 4.0 * f) / 2.0 * slope,
        (-3.0 * f * f + 2.0 * f + 1.0) / 2.0 * slope,
        f * f / 2.0 * slope,
    ];
    let mut s = AxisStencil::empty();
    for (k, (&wk, &dk)) in w.iter().zip(&dw).enumerate() {
        let i = j as isize - 1 + k as isize;
        if i < 0 {
            // ghost c_{-1} = 2 c_0 - c_1
            s.push(0, 2.0 * wk, 2.0 * dk);
            s.push(1, -wk, -dk);
        } else if i as usize >= m {
            // ghost c_m = 2 c_{m-1} - c_{m-2}
            s.push(m - 1, 2.0 * wk, 2.0 * dk);
            s.push(m - 2, -wk, -dk);
        } else {
            s.push(i as usize, wk, dk);
        }
    }
    s
}

/// Tensor-product evaluation of `coeffs` with per-axis stencils. Returns the
/// value and the gradient (only the first `d` entries are meaningful).
pub(crate) fn tensor_eval(st: &[AxisStencil; 3], m: usize, coeffs: &[f64]) -> (f64, [f64; 3]) {
    let mut val = 0.0;
    let mut grad = [0.0; 3];
    let s0 = &st[0];
    let s1 = &st[1];
    let s2 = &st[2];
    for c in 0..s2.len {
        let base2 = s2.idx[c] * m * m;
        for b in 0..s1.len {
            let base1 = base2 + s1.idx[b] * m;
            let (w12, dw1w2, w1dw2) = (s1.w[b] * s2.w[c], s1.dw[b] * s2.w[c], s1.w[b] * s2.dw[c]);
            for a in 0..s0.len {
                let coef = coeffs[base1 + s0.idx[a]];
                val += s0.w[a] * w12 * coef;
                grad[0] += s0.dw[a] * w12 * coef;
                grad[1] += s0.w[a] * dw1w2 * coef;
                grad[2] += s0.w[a] * w1dw2 * coef;
            }
        }
    }
    (val, grad)
}

/// Solves the natural cubic-spline interpolation system along every axis.
fn spline_prefilter(grid: &CellGrid, values: &[f64]) -> Vec<f64> {
    let m = grid.m();
    let mut c = values.to_vec();
    if m <= 2 {
        return c;
    }
    let n = grid.num_cells();
    let inner = m - 2;
    let mut diag = vec![0.0; inner];
    let mut rhs = vec![0.0; inner];
    for axis in 0..grid.dim() {
        let stride = m.pow(axis as u32);
        for start in 0..n {
            if (start / stride) % m != 0 {
                continue;
            }
            let at = |i: usize| start + i * stride;
            let c0 = c[at(0)];
            let cl = c[at(m - 1)];
            for i in 0..inner {
                rhs[i] = 6.0 * c[at(i + 1)];
            }
            rhs[0] -= c0;
            rhs[inner - 1] -= cl;
            // Thomas algorithm for tridiag(1, 4, 1)
            diag[0] = 4.0;
            for i in 1..inner {
                let f = 1.0 / diag[i - 1];
                diag[i] = 4.0 - f;
                rhs[i] -= f * rhs[i - 1];
            }
            rhs[inner - 1] /= diag[inner - 1];
            for i in (0..inner - 1).rev() {
                rhs[i] = (rhs[i] - rhs[i + 1]) / diag[i];
            }
            for i in 0..inner {
                c[at(i + 1)] = rhs[i];
            }
        }
    }
    c
}

/// A scalar image prepared for off-grid evaluation.
#[derive(Debug, Clone)]
pub struct Interpolant {
    grid: CellGrid,
    order: InterpOrder,
    coeffs: Vec<f64>,
}

impl Interpolant {
    pub fn new(field: &ScalarField, order: InterpOrder) -> Self {
        let coeffs = match order {
            InterpOrder::Linear => field.values().to_vec(),
            InterpOrder::Cubic => spline_prefilter(field.grid(), field.values()),
        };
        Self { grid: *field.grid(), order, coeffs }
    }

    pub fn grid(&self) -> &CellGrid {
        &self.grid
    }

    pub fn order(&self) -> InterpOrder {
        self.order
    }

    fn stencils(&self, x: &[f64]) -> [AxisStencil; 3] {
        let m = self.grid.m();
        let mut st = [AxisStencil::UNIT; 3];
        for (k, &xk) in x.iter().enumerate().take(self.grid.dim()) {
            st[k] = match self.order {
                InterpOrder::Linear => linear_axis(xk, m),
                InterpOrder::Cubic => cubic_axis(xk, m),
            };
        }
        st
    }

    /// Value and gradient at one point.
    pub fn eval(&self, x: &[f64]) -> (f64, [f64; 3]) {
        tensor_eval(&self.stencils(x), self.grid.m(), &self.coeffs)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.eval(x).0
    }

    /// Values at every point of `pts` (gradient discarded).
    pub fn values_at(&self, pts: &PointSet) -> Vec<f64> {
        (0..pts.len()).map(|i| self.value(pts.point(i))).collect()
    }

    /// Values and point-major gradients at every point of `pts`.
    pub fn eval_points(&self, pts: &PointSet) -> (Vec<f64>, Vec<f64>) {
        let d = self.grid.dim();
        let mut vals = Vec::with_capacity(pts.len());
        let mut grads = Vec::with_capacity(pts.len() * d);
        for i in 0..pts.len() {
            let (v, g) = self.eval(pts.point(i));
            vals.push(v);
            grads.extend_from_slice(&g[..d]);
        }
        (vals, grads)
    }
}

/// Interpolated values and gradients of `field` at `pts`.
pub fn interp_spline(field: &ScalarField, pts: &PointSet, order: InterpOrder) -> Result<(Vec<f64>, Vec<f64>)> {
    ensure_finite("field", field.values())?;
    if pts.dim() != field.grid().dim() {
        return Err(Error::invalid("point dimension does not match grid dimension"));
    }
    ensure_finite("points", pts.coords())?;
    Ok(Interpolant::new(field, order).eval_points(pts))
}

/// Velocity at one space-time point together with both derivatives.
///
/// `jac[c][k] = d v_c / d x_k`. The derivative with respect to the velocity
/// coefficients is the stencil `(base[e], weight[e])`: component `c` reads
/// coefficient `base[e] + c * m^d`.
#[derive(Debug, Clone, Copy)]
pub struct VelocitySample {
    pub value: [f64; 3],
    pub jac: [[f64; 3]; 3],
    pub base: [usize; 16],
    pub weight: [f64; 16],
    pub len: usize,
}

fn time_stencil(grid: &CellGrid, t: f64) -> ([usize; 2], [f64; 2], usize) {
    let mt = grid.m_t();
    if mt == 0 {
        return ([0, 0], [1.0, 0.0], 1);
    }
    let s = (t * mt as f64).clamp(0.0, mt as f64);
    let j = (s.floor() as usize).min(mt - 1);
    let f = s - j as f64;
    ([j, j + 1], [1.0 - f, f], 2)
}

/// Multilinear-in-space, linear-in-time velocity interpolation. `t` is
/// clamped to `[0, 1]`; callers validate it.
pub(crate) fn sample_velocity(v: &VelocityField, t: f64, x: &[f64]) -> VelocitySample {
    let grid = v.grid();
    let d = grid.dim();
    let m = grid.m();
    let n = grid.num_cells();
    let mut st = [AxisStencil::UNIT; 3];
    for k in 0..d {
        st[k] = linear_axis(x[k], m);
    }
    let (tn, tw, tlen) = time_stencil(grid, t);
    let vals = v.values();
    let mut out = VelocitySample { value: [0.0; 3], jac: [[0.0; 3]; 3], base: [0; 16], weight: [0.0; 16], len: 0 };
    for ti in 0..tlen {
        let toff = tn[ti] * d * n;
        for c2 in 0..st[2].len {
            for c1 in 0..st[1].len {
                for c0 in 0..st[0].len {
                    let s = st[0].idx[c0] + m * (st[1].idx[c1] + m * st[2].idx[c2]);
                    let ws = [st[0].w[c0], st[1].w[c1], st[2].w[c2]];
                    let dws = [st[0].dw[c0], st[1].dw[c1], st[2].dw[c2]];
                    let w = tw[ti] * ws[0] * ws[1] * ws[2];
                    let base = toff + s;
                    out.base[out.len] = base;
                    out.weight[out.len] = w;
                    out.len += 1;
                    let gw = [
                        tw[ti] * dws[0] * ws[1] * ws[2],
                        tw[ti] * ws[0] * dws[1] * ws[2],
                        tw[ti] * ws[0] * ws[1] * dws[2],
                    ];
                    for c in 0..d {
                        let coef = vals[base + c * n];
                        out.value[c] += w * coef;
                        for k in 0..d {
                            out.jac[c][k] += gw[k] * coef;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Batch velocity interpolation at time `t`.
#[derive(Debug, Clone)]
pub struct VelocityInterp {
    /// `n * d`, point-major.
    pub values: Vec<f64>,
    /// `n * d * d`, point-major then `[c][k]`.
    pub jac_pts: Vec<f64>,
    /// Derivative w.r.t. the velocity coefficients, `n * d` rows.
    pub jac_v: CsrMatrix,
}

pub fn interp_velocity(v: &VelocityField, t: f64, pts: &PointSet) -> Result<VelocityInterp> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!("time {t} outside [0, 1]")));
    }
    let grid = v.grid();
    let d = grid.dim();
    if pts.dim() != d {
        return Err(Error::invalid("point dimension does not match grid dimension"));
    }
    let n = grid.num_cells();
    let mut values = Vec::with_capacity(pts.len() * d);
    let mut jac_pts = Vec::with_capacity(pts.len() * d * d);
    let mut rows = Vec::with_capacity(pts.len() * d);
    for i in 0..pts.len() {
        let s = sample_velocity(v, t, pts.point(i));
        for c in 0..d {
            values.push(s.value[c]);
            jac_pts.extend_from_slice(&s.jac[c][..d]);
            rows.push((0..s.len).map(|e| (s.base[e] + c * n, s.weight[e])).collect());
        }
    }
    Ok(VelocityInterp { values, jac_pts, jac_v: CsrMatrix::from_rows(grid.velocity_len(), rows) })
}

fn check_doubling(coarse: &CellGrid, fine: &CellGrid) -> Result<()> {
    if fine.dim() != coarse.dim() || fine.m() != 2 * coarse.m() {
        return Err(Error::invalid(format!(
            "prolongation needs fine m = 2 * coarse m (got {} -> {})",
            coarse.m(),
            fine.m()
        )));
    }
    Ok(())
}

fn prolongate_values(coarse: &CellGrid, values: &[f64], fine: &CellGrid) -> Vec<f64> {
    let d = coarse.dim();
    let m = coarse.m();
    (0..fine.num_cells())
        .map(|i| {
            let x = fine.center(i);
            let mut st = [AxisStencil::UNIT; 3];
            for k in 0..d {
                st[k] = linear_axis(x[k], m);
            }
            tensor_eval(&st, m, values).0
        })
        .collect()
}

/// Multilinear prolongation of a scalar field onto a grid with twice the
/// resolution.
pub fn prolongate(field: &ScalarField, fine: &CellGrid) -> Result<ScalarField> {
    check_doubling(field.grid(), fine)?;
    let mut out = ScalarField::new(*fine, prolongate_values(field.grid(), field.values(), fine))?;
    out.range_hint = field.range_hint;
    Ok(out)
}

/// Multilinear prolongation of every time node and component of `v`.
pub fn prolongate_velocity(v: &VelocityField, fine: &CellGrid) -> Result<VelocityField> {
    let coarse = v.grid();
    check_doubling(coarse, fine)?;
    if fine.m_t() != coarse.m_t() {
        return Err(Error::invalid("prolongation keeps the number of time nodes"));
    }
    let n = coarse.num_cells();
    let mut out = Vec::with_capacity(fine.velocity_len());
    for block in v.values().chunks(n) {
        out.extend(prolongate_values(coarse, block, fine));
    }
    VelocityField::new(*fine, out)
}

fn restrict_values(fine: &CellGrid, values: &[f64], coarse: &CellGrid) -> Vec<f64> {
    let d = fine.dim();
    let scale = 1.0 / (1usize << d) as f64;
    (0..coarse.num_cells())
        .map(|i| {
            let idx = coarse.multi_index(i);
            let mut acc = 0.0;
            for corner in 0..(1usize << d) {
                let mut f = [0usize; 3];
                for k in 0..d {
                    f[k] = 2 * idx[k] + ((corner >> k) & 1);
                }
                acc += values[fine.flat_index(&f[..d])];
            }
            acc * scale
        })
        .collect()
}

fn coarse_of(fine: &CellGrid) -> Result<CellGrid> {
    if fine.m() % 2 != 0 {
        return Err(Error::invalid(format!("cannot halve a grid with odd m = {}", fine.m())));
    }
    fine.with_m(fine.m() / 2)
}

/// Restriction by averaging each `2^d` block of fine cells.
pub fn restrict(field: &ScalarField) -> Result<ScalarField> {
    let coarse = coarse_of(field.grid())?;
    let mut out = ScalarField::new(coarse, restrict_values(field.grid(), field.values(), &coarse))?;
    out.range_hint = field.range_hint;
    Ok(out)
}

pub fn restrict_velocity(v: &VelocityField) -> Result<VelocityField> {
    let coarse = coarse_of(v.grid())?;
    let n = v.grid().num_cells();
    let mut out = Vec::with_capacity(coarse.velocity_len());
    for block in v.values().chunks(n) {
        out.extend(restrict_values(v.grid(), block, &coarse));
    }
    VelocityField::new(coarse, out)
}
