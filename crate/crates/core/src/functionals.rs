//! Data-fidelity terms, regularizers and the assembled objective
//!
//! ```text
//! J(v, z) = D(K R(v, z), g) + sum_b lambda1[b] * E1_b(v) + lambda2 * E2(z)
//! ```
//!
//! with `E1_b(v) = 1/2 h_t h^d ||B_b v||^2` for the spatial, temporal and
//! identity blocks of the velocity regularizer and `E2` either the discrete
//! total variation or `1/2 h^d ||z||^2`.

use crate::error::{ensure_finite, Error, Result};
use crate::flow::{apply_dr_dv, apply_dr_dv_transpose, solve_backward_flow, FlowResult, SolverConfig};
use crate::grid::{CellGrid, ScalarField, VelocityField};
use crate::interp::{Interpolant, InterpOrder};
use crate::radon::{RadonOperator, Sinogram};
use crate::sparse::CsrMatrix;

// ---------------------------------------------------------------------------
// data terms

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!("data vectors differ in length ({} vs {})", x.len(), y.len())));
    }
    Ok(())
}

/// `1/2 w ||x - y||^2`
pub fn ssd_values(x: &[f64], y: &[f64], weight: f64) -> Result<f64> {
    check_pair(x, y)?;
    Ok(0.5 * weight * x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
}

/// `w (x - y)`
pub fn ssd_grad_values(x: &[f64], y: &[f64], weight: f64) -> Result<Vec<f64>> {
    check_pair(x, y)?;
    Ok(x.iter().zip(y).map(|(a, b)| weight * (a - b)).collect())
}

fn same_geometry(x: &Sinogram, y: &Sinogram) -> Result<()> {
    if x.geometry != y.geometry {
        return Err(Error::invalid("sinograms have different geometries"));
    }
    Ok(())
}

/// Midpoint-rule sum of squared differences, `1/2 h_Y ||x - y||^2`.
pub fn ssd(x: &Sinogram, y: &Sinogram) -> Result<f64> {
    same_geometry(x, y)?;
    ssd_values(&x.data, &y.data, x.geometry.quadrature_weight())
}

pub fn ssd_grad(x: &Sinogram, y: &Sinogram) -> Result<Vec<f64>> {
    same_geometry(x, y)?;
    ssd_grad_values(&x.data, &y.data, x.geometry.quadrature_weight())
}

fn ncc_parts(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    check_pair(x, y)?;
    let xy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let xx: f64 = x.iter().map(|a| a * a).sum();
    let yy: f64 = y.iter().map(|a| a * a).sum();
    if xx == 0.0 || yy == 0.0 {
        return Err(Error::invalid("normalized cross correlation is undefined for a zero vector"));
    }
    Ok((xy, xx, yy))
}

/// `1 - (x.y)^2 / (|x|^2 |y|^2)`, in `[0, 1]`.
pub fn ncc_values(x: &[f64], y: &[f64]) -> Result<f64> {
    let (xy, xx, yy) = ncc_parts(x, y)?;
    Ok((1.0 - xy * xy / (xx * yy)).clamp(0.0, 1.0))
}

/// Gradient of [`ncc_values`] with respect to `x`.
pub fn ncc_grad_values(x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let (xy, xx, yy) = ncc_parts(x, y)?;
    let a = -2.0 * xy / (xx * yy);
    let b = 2.0 * xy * xy / (xx * xx * yy);
    Ok(x.iter().zip(y).map(|(xi, yi)| a * yi + b * xi).collect())
}

pub fn ncc(x: &Sinogram, y: &Sinogram) -> Result<f64> {
    same_geometry(x, y)?;
    ncc_values(&x.data, &y.data)
}

pub fn ncc_grad(x: &Sinogram, y: &Sinogram) -> Result<Vec<f64>> {
    same_geometry(x, y)?;
    ncc_grad_values(&x.data, &y.data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DataTerm {
    #[default]
    Ssd,
    Ncc,
}

impl std::str::FromStr for DataTerm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ssd" => Ok(DataTerm::Ssd),
            "ncc" => Ok(DataTerm::Ncc),
            other => Err(Error::invalid(format!("unknown data term '{other}'"))),
        }
    }
}

impl DataTerm {
    pub fn value(self, x: &[f64], y: &[f64], weight: f64) -> Result<f64> {
        match self {
            DataTerm::Ssd => ssd_values(x, y, weight),
            DataTerm::Ncc => ncc_values(x, y),
        }
    }

    pub fn grad(self, x: &[f64], y: &[f64], weight: f64) -> Result<Vec<f64>> {
        match self {
            DataTerm::Ssd => ssd_grad_values(x, y, weight),
            DataTerm::Ncc => ncc_grad_values(x, y),
        }
    }
}

// ---------------------------------------------------------------------------
// velocity regularizer

/// Differential operator of the velocity regularizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RegKind {
    /// All distinct third partial derivatives (central differences).
    #[default]
    ThirdOrder,
    /// Laplacian.
    Curvature,
    /// Gradient (forward differences).
    Diffusion,
}

impl std::str::FromStr for RegKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "third-order" => Ok(RegKind::ThirdOrder),
            "curvature" => Ok(RegKind::Curvature),
            "diffusion" => Ok(RegKind::Diffusion),
            other => Err(Error::invalid(format!("unknown regularizer '{other}'"))),
        }
    }
}

type Stencil = Vec<([isize; 3], f64)>;

fn stencil_1d(order: usize, h: f64) -> Vec<(isize, f64)> {
    match order {
        0 => vec![(0, 1.0)],
        1 => vec![(-1, -0.5 / h), (1, 0.5 / h)],
        2 => vec![(-1, 1.0 / (h * h)), (0, -2.0 / (h * h)), (1, 1.0 / (h * h))],
        3 => {
            let s = 1.0 / (h * h * h);
            vec![(-2, -0.5 * s), (-1, s), (1, -s), (2, 0.5 * s)]
        }
        _ => unreachable!("derivative order above 3"),
    }
}

fn tensor_stencil(orders: &[usize], h: f64) -> Stencil {
    let mut st: Stencil = vec![([0; 3], 1.0)];
    for (axis, &o) in orders.iter().enumerate() {
        let one = stencil_1d(o, h);
        st = st
            .iter()
            .flat_map(|(off, w)| {
                one.iter().map(move |&(k, c)| {
                    let mut o2 = *off;
                    o2[axis] += k;
                    (o2, w * c)
                })
            })
            .collect();
    }
    st
}

fn multi_indices(d: usize, total: usize) -> Vec<Vec<usize>> {
    fn rec(d: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == d - 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for k in (0..=left).rev() {
            cur.push(k);
            rec(d, left - k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(d, total, &mut Vec::new(), &mut out);
    out
}

fn spatial_stencils(kind: RegKind, d: usize, h: f64) -> Vec<Stencil> {
    match kind {
        RegKind::ThirdOrder => multi_indices(d, 3).iter().map(|a| tensor_stencil(a, h)).collect(),
        RegKind::Curvature => {
            let mut lap: Stencil = Vec::new();
            for axis in 0..d {
                let mut orders = vec![0; d];
                orders[axis] = 2;
                lap.extend(tensor_stencil(&orders, h));
            }
            vec![lap]
        }
        RegKind::Diffusion => (0..d)
            .map(|axis| {
                let mut a = [0; 3];
                a[axis] = 1;
                vec![([0; 3], -1.0 / h), (a, 1.0 / h)]
            })
            .collect(),
    }
}

/// Half-sample symmetric reflection, i.e. zero-Neumann padding of a
/// cell-centered array.
fn reflect(mut i: isize, m: usize) -> usize {
    let m = m as isize;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= m {
            i = 2 * m - i - 1;
        } else {
            return i as usize;
        }
    }
}

/// Finite-difference regularization operator acting on a velocity field.
#[derive(Debug, Clone)]
pub struct RegOperatorB {
    kind: RegKind,
    grid: CellGrid,
    spatial: CsrMatrix,
    temporal: CsrMatrix,
}

/// Padding width of the zero-Neumann extension used by the stencils.
pub const REG_PADDING: usize = 3;

impl RegOperatorB {
    pub fn new(kind: RegKind, grid: &CellGrid) -> Self {
        let d = grid.dim();
        let n = grid.num_cells();
        let m = grid.m();
        let nn = grid.velocity_len();
        let stencils = spatial_stencils(kind, d, grid.h());
        let mut rows = Vec::with_capacity(nn * stencils.len());
        for block in 0..grid.time_nodes() * d {
            let off = block * n;
            for s in 0..n {
                let idx = grid.multi_index(s);
                for st in &stencils {
                    let row = st
                        .iter()
                        .map(|(o, w)| {
                            let mut j = [0usize; 3];
                            for k in 0..d {
                                j[k] = reflect(idx[k] as isize + o[k], m);
                            }
                            (off + grid.flat_index(&j[..d]), *w)
                        })
                        .collect();
                    rows.push(row);
                }
            }
        }
        let spatial = CsrMatrix::from_rows(nn, rows);
        let temporal = if grid.m_t() == 0 {
            CsrMatrix::zeros(0, nn)
        } else {
            let inv_ht = 1.0 / grid.h_t();
            let mut rows = Vec::with_capacity(grid.m_t() * d * n);
            for j in 0..grid.m_t() {
                for c in 0..d {
                    for s in 0..n {
                        let a = (j * d + c) * n + s;
                        let b = ((j + 1) * d + c) * n + s;
                        rows.push(vec![(a, -inv_ht), (b, inv_ht)]);
                    }
                }
            }
            CsrMatrix::from_rows(nn, rows)
        };
        Self { kind, grid: *grid, spatial, temporal }
    }

    pub fn kind(&self) -> RegKind {
        self.kind
    }

    pub fn grid(&self) -> &CellGrid {
        &self.grid
    }

    pub fn spatial(&self) -> &CsrMatrix {
        &self.spatial
    }

    pub fn temporal(&self) -> &CsrMatrix {
        &self.temporal
    }

    /// Number of spatial rows per velocity coefficient.
    pub fn spatial_rows_per_cell(&self) -> usize {
        self.spatial.nrows() / self.grid.velocity_len()
    }

    /// `h_t h^d`
    pub fn quadrature(&self) -> f64 {
        self.grid.h_t() * self.grid.cell_volume()
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.grid.velocity_len() {
            return Err(Error::invalid("velocity vector does not match the regularizer grid"));
        }
        Ok(())
    }

    /// Unweighted block energies `1/2 h_t h^d ||B_b v||^2` for the spatial,
    /// temporal and identity blocks.
    pub fn energies(&self, v: &[f64]) -> Result<[f64; 3]> {
        self.check(v)?;
        let q = 0.5 * self.quadrature();
        let sq = |x: Vec<f64>| x.iter().map(|a| a * a).sum::<f64>();
        Ok([
            q * sq(self.spatial.mul(v)),
            q * sq(self.temporal.mul(v)),
            q * v.iter().map(|a| a * a).sum::<f64>(),
        ])
    }

    /// `sum_b lambda_b B_b^T B_b v` (without the quadrature factor).
    pub fn normal_apply(&self, v: &[f64], lambda: &[f64; 3]) -> Vec<f64> {
        let mut out: Vec<f64> = v.iter().map(|a| lambda[2] * a).collect();
        for (mat, lam) in [(&self.spatial, lambda[0]), (&self.temporal, lambda[1])] {
            if lam == 0.0 || mat.nrows() == 0 {
                continue;
            }
            let bv = mat.mul(v);
            // B^T (B v) without materializing B^T
            for r in 0..mat.nrows() {
                let (idx, val) = mat.row(r);
                for (&c, &w) in idx.iter().zip(val) {
                    out[c] += lam * w * bv[r];
                }
            }
        }
        out
    }

    /// Diagonal of `sum_b lambda_b B_b^T B_b`.
    pub fn normal_diagonal(&self, lambda: &[f64; 3]) -> Vec<f64> {
        let ds = self.spatial.gram_diagonal();
        let dt = self.temporal.gram_diagonal();
        ds.iter().zip(&dt).map(|(a, b)| lambda[0] * a + lambda[1] * b + lambda[2]).collect()
    }
}

/// Orthonormal DCT-II matrix, row `k` holding mode `k`.
pub(crate) fn dct_matrix(m: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * m];
    for k in 0..m {
        let a = if k == 0 { (1.0 / m as f64).sqrt() } else { (2.0 / m as f64).sqrt() };
        for i in 0..m {
            c[k * m + i] = a * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / m as f64).cos();
        }
    }
    c
}

/// Applies a 1-D stencil with reflected indices to every DCT mode and
/// returns `<D u_k, u_k>` and `||D u_k||^2` per mode (modes have unit norm).
fn mode_response(st: &[(isize, f64)], m: usize, c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut signed = vec![0.0; m];
    let mut energy = vec![0.0; m];
    for k in 0..m {
        let u = &c[k * m..(k + 1) * m];
        for i in 0..m {
            let du: f64 = st.iter().map(|&(o, w)| w * u[reflect(i as isize + o, m)]).sum();
            signed[k] += du * u[i];
            energy[k] += du * du;
        }
    }
    (signed, energy)
}

fn forward_difference_energy(m: usize, h: f64, c: &[f64]) -> Vec<f64> {
    (0..m)
        .map(|k| {
            let u = &c[k * m..(k + 1) * m];
            (0..m - 1).map(|i| ((u[i + 1] - u[i]) / h).powi(2)).sum()
        })
        .collect()
}

impl RegOperatorB {
    /// Eigenvalues of the spatial `B^T B` (one velocity component, one time
    /// node) for the tensor DCT-II modes, indexed like grid cells. With
    /// half-sample symmetric padding every block maps these modes to
    /// mutually orthogonal vectors, so `B^T B` is diagonal in this basis.
    pub fn mode_symbols(&self) -> Vec<f64> {
        let g = &self.grid;
        let (d, m, h) = (g.dim(), g.m(), g.h());
        let c = dct_matrix(m);
        let energy: Vec<Vec<f64>> = (0..4).map(|o| mode_response(&stencil_1d(o, h), m, &c).1).collect();
        let (lap, _) = mode_response(&stencil_1d(2, h), m, &c);
        let fwd = forward_difference_energy(m, h, &c);
        (0..g.num_cells())
            .map(|flat| {
                let k = g.multi_index(flat);
                match self.kind {
                    RegKind::ThirdOrder => multi_indices(d, 3)
                        .iter()
                        .map(|a| (0..d).map(|ax| energy[a[ax]][k[ax]]).product::<f64>())
                        .sum(),
                    RegKind::Curvature => (0..d).map(|ax| lap[k[ax]]).sum::<f64>().powi(2),
                    RegKind::Diffusion => (0..d).map(|ax| fwd[k[ax]]).sum(),
                }
            })
            .collect()
    }
}

/// Weighted velocity energy `sum_b lambda_b E1_b(v)` and its gradient
/// `h_t h^d sum_b lambda_b B_b^T B_b v`.
pub fn e1_value_grad(v: &VelocityField, reg: &RegOperatorB, lambda: &[f64; 3]) -> Result<(f64, Vec<f64>)> {
    if v.grid() != reg.grid() {
        return Err(Error::invalid("velocity grid differs from the regularizer grid"));
    }
    let e = reg.energies(v.values())?;
    let value = lambda.iter().zip(&e).map(|(l, x)| l * x).sum();
    let q = reg.quadrature();
    let grad = reg.normal_apply(v.values(), lambda).into_iter().map(|x| q * x).collect();
    Ok((value, grad))
}

// ---------------------------------------------------------------------------
// total variation

/// Forward differences with zero at the last index of each axis, divided by
/// `h`. `out` holds `d` blocks of `n` values (axis-major).
pub fn forward_gradient(x: &[f64], shape: &[usize], h: f64, out: &mut [f64]) {
    let n = x.len();
    let mut stride = 1;
    for (k, &mk) in shape.iter().enumerate() {
        let blk = &mut out[k * n..(k + 1) * n];
        for i in 0..n {
            let ik = (i / stride) % mk;
            blk[i] = if ik + 1 < mk { (x[i + stride] - x[i]) / h } else { 0.0 };
        }
        stride *= mk;
    }
}

/// Adjoint of [`forward_gradient`] (negative divergence).
pub fn forward_gradient_adjoint(p: &[f64], shape: &[usize], h: f64, out: &mut [f64]) {
    let n = out.len();
    out.iter_mut().for_each(|v| *v = 0.0);
    let mut stride = 1;
    for (k, &mk) in shape.iter().enumerate() {
        let blk = &p[k * n..(k + 1) * n];
        for i in 0..n {
            let ik = (i / stride) % mk;
            if ik + 1 < mk {
                out[i + stride] += blk[i] / h;
                out[i] -= blk[i] / h;
            }
        }
        stride *= mk;
    }
}

/// `sum_i ||(grad_h x)_i||_2` on an arbitrary box shape (no `h^d` factor).
pub fn tv_sum(x: &[f64], shape: &[usize], h: f64) -> f64 {
    let n = x.len();
    let d = shape.len();
    let mut g = vec![0.0; n * d];
    forward_gradient(x, shape, h, &mut g);
    (0..n).map(|i| (0..d).map(|k| g[k * n + i] * g[k * n + i]).sum::<f64>().sqrt()).sum()
}

/// Discrete isotropic total variation `h^d sum_i ||(grad_h z)_i||`.
pub fn tv_value(z: &ScalarField) -> f64 {
    let g = z.grid();
    g.cell_volume() * tv_sum(z.values(), &g.shape(), g.h())
}

/// Regularizer of the source image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SourceReg {
    #[default]
    Tv,
    /// `1/2 h^d ||z||^2`
    L2,
}

impl std::str::FromStr for SourceReg {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tv" => Ok(SourceReg::Tv),
            "l2" => Ok(SourceReg::L2),
            other => Err(Error::invalid(format!("unknown source regularizer '{other}'"))),
        }
    }
}

// ---------------------------------------------------------------------------
// forward operators and the objective

/// Linear measurement operator with its adjoint.
pub trait ForwardOperator: Sync {
    fn input_len(&self) -> usize;
    fn output_len(&self) -> usize;
    fn forward(&self, x: &[f64]) -> Vec<f64>;
    fn adjoint(&self, y: &[f64]) -> Vec<f64>;
    /// Midpoint-rule weight of one measurement in the SSD term.
    fn quadrature_weight(&self) -> f64;
    /// Largest eigenvalue of `K^T K`.
    fn opnorm_ktk(&self) -> f64 {
        crate::radon::power_iteration(self.input_len(), |x| self.adjoint(&self.forward(x)), 1e-10, 10_000)
    }
}

impl ForwardOperator for RadonOperator {
    fn input_len(&self) -> usize {
        self.grid().num_cells()
    }

    fn output_len(&self) -> usize {
        self.geometry().len()
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_values(x)
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        self.adjoint_values(y)
    }

    fn quadrature_weight(&self) -> f64 {
        self.geometry().quadrature_weight()
    }

    fn opnorm_ktk(&self) -> f64 {
        RadonOperator::opnorm_ktk(self)
    }
}

/// `K = Id` with a configurable quadrature weight; images are measured
/// directly.
#[derive(Debug, Clone, Copy)]
pub struct IdentityOperator {
    pub len: usize,
    pub weight: f64,
}

impl ForwardOperator for IdentityOperator {
    fn input_len(&self) -> usize {
        self.len
    }

    fn output_len(&self) -> usize {
        self.len
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        y.to_vec()
    }

    fn quadrature_weight(&self) -> f64 {
        self.weight
    }

    fn opnorm_ktk(&self) -> f64 {
        1.0
    }
}

/// Model and solver settings of the variational problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveConfig {
    pub data_term: DataTerm,
    pub reg_kind: RegKind,
    /// Weights of the spatial, temporal and L2 blocks of the velocity energy.
    pub lambda1: [f64; 3],
    pub source_reg: SourceReg,
    pub lambda2: f64,
    pub template_order: InterpOrder,
    /// Number of time intervals `m_t` of the velocity (0 = stationary).
    pub time_intervals: usize,
    pub flow: SolverConfig,
    pub pcg_tol: f64,
    pub pcg_max_iter: usize,
    pub pdhg_tol: f64,
    pub pdhg_max_iter: usize,
    /// Backtracking factor for Lipschitz estimates.
    pub backtrack: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            data_term: DataTerm::Ssd,
            reg_kind: RegKind::ThirdOrder,
            lambda1: [0.001, 0.001, 1e-6],
            source_reg: SourceReg::Tv,
            lambda2: 0.1,
            template_order: InterpOrder::Cubic,
            time_intervals: 1,
            flow: SolverConfig::default(),
            pcg_tol: 1e-8,
            pcg_max_iter: 2000,
            pdhg_tol: 1e-6,
            pdhg_max_iter: 500,
            backtrack: 2.0,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda1.iter().any(|&l| !(l >= 0.0 && l.is_finite())) || !(self.lambda2 >= 0.0) {
            return Err(Error::invalid("regularization weights must be non-negative"));
        }
        if !(self.pcg_tol > 0.0 && self.pdhg_tol > 0.0) {
            return Err(Error::invalid("solver tolerances must be positive"));
        }
        if !(self.backtrack > 1.0) {
            return Err(Error::invalid("backtracking factor must exceed 1"));
        }
        Ok(())
    }
}

/// Individual terms of the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveParts {
    pub data: f64,
    /// Unweighted spatial, temporal and L2 velocity energies.
    pub e1: [f64; 3],
    /// Unweighted source energy.
    pub e2: f64,
    pub lambda1: [f64; 3],
    pub lambda2: f64,
}

impl ObjectiveParts {
    pub fn e1_weighted(&self) -> f64 {
        self.lambda1.iter().zip(&self.e1).map(|(l, e)| l * e).sum()
    }

    pub fn total(&self) -> f64 {
        self.data + self.e1_weighted() + self.lambda2 * self.e2
    }
}

/// Smooth part evaluated at one `(v, z)`, with what the gradients need.
#[derive(Debug, Clone)]
pub struct SmoothEval {
    pub r: Vec<f64>,
    pub flow: FlowResult,
    pub kr: Vec<f64>,
    pub data: f64,
    /// `K^T D'(K R)`: gradient of the data term with respect to the image.
    pub image_grad: Vec<f64>,
}

/// The discrete problem on one grid level.
pub struct Objective<'a> {
    grid: CellGrid,
    template: Interpolant,
    op: &'a dyn ForwardOperator,
    data: &'a [f64],
    cfg: ObjectiveConfig,
    reg: RegOperatorB,
}

impl<'a> Objective<'a> {
    pub fn new(
        template: &ScalarField,
        op: &'a dyn ForwardOperator,
        data: &'a [f64],
        cfg: &ObjectiveConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let grid = CellGrid::new(template.grid().dim(), template.grid().m(), cfg.time_intervals)?;
        if op.input_len() != grid.num_cells() || op.output_len() != data.len() {
            return Err(Error::invalid("operator, template and data sizes are inconsistent"));
        }
        ensure_finite("data", data)?;
        Ok(Self {
            grid,
            template: Interpolant::new(template, cfg.template_order),
            op,
            data,
            cfg: cfg.clone(),
            reg: RegOperatorB::new(cfg.reg_kind, &grid),
        })
    }

    pub fn grid(&self) -> &CellGrid {
        &self.grid
    }

    pub fn config(&self) -> &ObjectiveConfig {
        &self.cfg
    }

    pub fn template(&self) -> &Interpolant {
        &self.template
    }

    pub fn operator(&self) -> &dyn ForwardOperator {
        self.op
    }

    pub fn data(&self) -> &[f64] {
        self.data
    }

    pub fn reg(&self) -> &RegOperatorB {
        &self.reg
    }

    fn velocity(&self, v: &[f64]) -> Result<VelocityField> {
        VelocityField::new(self.grid, v.to_vec())
    }

    /// Evaluates the smooth data term `H(v, z)`.
    pub fn smooth(&self, v: &[f64], z: &[f64]) -> Result<SmoothEval> {
        if z.len() != self.grid.num_cells() {
            return Err(Error::invalid("source has the wrong length"));
        }
        let vf = self.velocity(v)?;
        let flow = solve_backward_flow(&vf, &self.cfg.flow)?;
        let mut r = self.template.values_at(flow.phi0());
        for (ri, zi) in r.iter_mut().zip(z) {
            *ri += zi;
        }
        let kr = self.op.forward(&r);
        let w = self.op.quadrature_weight();
        let data = self.cfg.data_term.value(&kr, self.data, w)?;
        if !data.is_finite() {
            return Err(Error::NumericalBlowup("data term is not finite".into()));
        }
        let dgrad = self.cfg.data_term.grad(&kr, self.data, w)?;
        let image_grad = self.op.adjoint(&dgrad);
        Ok(SmoothEval { r, flow, kr, data, image_grad })
    }

    pub fn smooth_value(&self, v: &[f64], z: &[f64]) -> Result<f64> {
        Ok(self.smooth(v, z)?.data)
    }

    /// `grad_v H = (dR/dv)^T K^T D'`
    pub fn grad_v(&self, eval: &SmoothEval) -> Result<Vec<f64>> {
        apply_dr_dv_transpose(&eval.flow, &self.template, &eval.image_grad)
    }

    /// `K (dR/dv) dv` at the point of `eval`.
    pub fn jacobian_apply(&self, eval: &SmoothEval, dv: &[f64]) -> Result<Vec<f64>> {
        let dvf = self.velocity(dv)?;
        Ok(self.op.forward(&apply_dr_dv(&eval.flow, &self.template, &dvf)?))
    }

    /// `(dR/dv)^T K^T w` at the point of `eval`.
    pub fn jacobian_transpose_apply(&self, eval: &SmoothEval, w: &[f64]) -> Result<Vec<f64>> {
        apply_dr_dv_transpose(&eval.flow, &self.template, &self.op.adjoint(w))
    }

    /// `grad_z H = K^T D'`
    pub fn grad_z(&self, eval: &SmoothEval) -> Vec<f64> {
        eval.image_grad.clone()
    }

    pub fn e1_energies(&self, v: &[f64]) -> Result<[f64; 3]> {
        self.reg.energies(v)
    }

    /// Weighted velocity energy.
    pub fn g1(&self, v: &[f64]) -> Result<f64> {
        let e = self.reg.energies(v)?;
        Ok(self.cfg.lambda1.iter().zip(&e).map(|(l, x)| l * x).sum())
    }

    /// Unweighted source energy.
    pub fn e2(&self, z: &[f64]) -> f64 {
        let h = self.grid.h();
        let vol = self.grid.cell_volume();
        match self.cfg.source_reg {
            SourceReg::Tv => vol * tv_sum(z, &self.grid.shape(), h),
            SourceReg::L2 => 0.5 * vol * z.iter().map(|a| a * a).sum::<f64>(),
        }
    }

    pub fn parts(&self, v: &[f64], z: &[f64]) -> Result<ObjectiveParts> {
        let data = self.smooth_value(v, z)?;
        Ok(ObjectiveParts {
            data,
            e1: self.e1_energies(v)?,
            e2: self.e2(z),
            lambda1: self.cfg.lambda1,
            lambda2: self.cfg.lambda2,
        })
    }

    pub fn value(&self, v: &[f64], z: &[f64]) -> Result<f64> {
        Ok(self.parts(v, z)?.total())
    }
}

/// Full objective of one `(v, z)`; convenience wrapper over [`Objective`].
pub fn objective_eval(
    template: &ScalarField,
    v: &VelocityField,
    z: &ScalarField,
    data: &[f64],
    op: &dyn ForwardOperator,
    cfg: &ObjectiveConfig,
) -> Result<(f64, ObjectiveParts)> {
    if v.grid().m_t() != cfg.time_intervals {
        return Err(Error::invalid("velocity time discretization differs from the configuration"));
    }
    let obj = Objective::new(template, op, data, cfg)?;
    let parts = obj.parts(v.values(), z.values())?;
    Ok((parts.total(), parts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ssd_examples() {
        let x = vec![1.0; 4];
        let y = vec![0.0; 4];
        assert_eq!(ssd_values(&x, &y, 0.25).unwrap(), 0.5);
        assert_eq!(ssd_values(&x, &x, 0.25).unwrap(), 0.0);
        assert!(ssd_grad_values(&x, &x, 0.25).unwrap().iter().all(|&g| g == 0.0));
        assert!(ssd_values(&x, &[0.0; 3], 1.0).is_err());
    }

    #[test]
    fn ncc_examples() {
        let x = vec![1.0, 2.0, -0.5];
        assert!(ncc_values(&x, &x).unwrap().abs() < 1e-15);
        assert_eq!(ncc_values(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 1.0);
        assert!(ncc_values(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn tv_examples() {
        let g = CellGrid::new(2, 4, 1).unwrap();
        assert_eq!(tv_value(&ScalarField::constant(g, 3.0)), 0.0);
        // indicator of the 2x2 lower-left block: cells (1,0),(0,1) have a
        // single unit jump of 4; cell (1,1) has two, so ||.|| = 4 sqrt 2.
        // h^2 * (4 + 4 + 4 sqrt 2) = (8 + 4 sqrt 2) / 16
        let z = ScalarField::from_fn(g, |x| if x[0] < 0.5 && x[1] < 0.5 { 1.0 } else { 0.0 });
        let expected = (8.0 + 4.0 * 2f64.sqrt()) / 16.0;
        assert!((tv_value(&z) - expected).abs() < 1e-14);
    }

    #[test]
    fn reflect_indices() {
        assert_eq!(reflect(-1, 5), 0);
        assert_eq!(reflect(-3, 5), 2);
        assert_eq!(reflect(5, 5), 4);
        assert_eq!(reflect(6, 5), 3);
        assert_eq!(reflect(-3, 2), 1);
    }

    #[test]
    fn third_order_row_count() {
        for (d, k) in [(2, 4), (3, 10)] {
            let g = CellGrid::new(d, 5, 1).unwrap();
            let b = RegOperatorB::new(RegKind::ThirdOrder, &g);
            assert_eq!(b.spatial_rows_per_cell(), k);
        }
    }

    #[test]
    fn zero_velocity_energy() {
        let g = CellGrid::new(2, 6, 1).unwrap();
        let b = RegOperatorB::new(RegKind::ThirdOrder, &g);
        let (e, grad) = e1_value_grad(&VelocityField::zeros(g), &b, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(e, 0.0);
        assert!(grad.iter().all(|&x| x == 0.0));
    }
}
