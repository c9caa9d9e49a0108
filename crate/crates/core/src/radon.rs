//! Matrix-free-style parallel-beam Radon transform on the pixel basis.
//!
//! Every detector cell is one ray through its center; the weights are the
//! exact intersection lengths of that ray with the image cells (Siddon
//! tracing), multiplied by the geometry's `length_scale`. The operator is
//! stored once as a sparse matrix together with its explicit transpose, so
//! the adjoint uses the very same weights.
//!
//! Geometry: the ray for angle `theta` and offset `s` is
//! `{ c + s * n + t * e }` with `c = (1/2, 1/2)`, `n = (cos theta, sin theta)`,
//! `e = (-sin theta, cos theta)`. The detector line has length `sqrt(2)` and
//! `q` cells; the quadrature weight of the data term is still `h_Y = 1/q`.
//! Three-dimensional volumes are projected slice by slice (rotation about
//! the third axis), giving `rows = m` detector rows.

use rayon::prelude::*;

use crate::error::{ensure_finite, Error, Result};
use crate::grid::{CellGrid, ScalarField};
use crate::sparse::CsrMatrix;

/// Parallel-beam acquisition layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SinogramGeometry {
    /// Projection angles in degrees.
    pub angles_deg: Vec<f64>,
    /// Detector cells per row, `q`.
    pub detectors: usize,
    /// Detector rows: 1 for planar images, `m` for stacked 3-D slices.
    pub rows: usize,
    /// Pyramid level `k`; the multi-level rule uses `q = 1.5 * 2^k`.
    pub level: u32,
    /// Unit of the line integrals: 1 measures lengths on the unit square,
    /// `m` measures them in cells of an `m`-cell grid.
    pub length_scale: f64,
}

impl SinogramGeometry {
    pub fn new(angles_deg: Vec<f64>, detectors: usize) -> Result<Self> {
        let g = Self { angles_deg, detectors, rows: 1, level: 0, length_scale: 1.0 };
        g.validate()?;
        Ok(g)
    }

    /// `p` angles equally distributed in `[0, 180)`.
    pub fn equispaced(p: usize, detectors: usize) -> Result<Self> {
        Self::new(Self::equispaced_angles(p), detectors)
    }

    pub fn equispaced_angles(p: usize) -> Vec<f64> {
        (0..p).map(|i| 180.0 * i as f64 / p as f64).collect()
    }

    /// Detector count of pyramid level `k`: `1.5 * 2^k`.
    pub fn detectors_for_level(k: u32) -> Result<usize> {
        if k == 0 {
            return Err(Error::invalid("level 0 has a fractional detector count"));
        }
        Ok(3usize << (k - 1))
    }

    /// Geometry of pyramid level `k` for an `m = 2^k` grid.
    pub fn for_level(angles_deg: Vec<f64>, k: u32) -> Result<Self> {
        let mut g = Self::new(angles_deg, Self::detectors_for_level(k)?)?;
        g.level = k;
        Ok(g)
    }

    pub fn with_length_scale(mut self, scale: f64) -> Self {
        self.length_scale = scale;
        self
    }

    pub fn with_rows(mut self, rows: usize) -> Self {
        self.rows = rows;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.angles_deg.is_empty() || self.detectors == 0 || self.rows == 0 {
            return Err(Error::invalid("sinogram geometry needs at least one angle, detector and row"));
        }
        ensure_finite("angles", &self.angles_deg)?;
        if !(self.length_scale.is_finite() && self.length_scale > 0.0) {
            return Err(Error::invalid("length scale must be positive"));
        }
        Ok(())
    }

    pub fn num_angles(&self) -> usize {
        self.angles_deg.len()
    }

    /// `M = p * q * rows`
    pub fn len(&self) -> usize {
        self.num_angles() * self.detectors * self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `h_Y = 1/q`
    pub fn h_y(&self) -> f64 {
        1.0 / self.detectors as f64
    }

    /// Midpoint-rule weight of one measurement.
    pub fn quadrature_weight(&self) -> f64 {
        1.0 / (self.detectors * self.rows) as f64
    }

    pub fn detector_spacing(&self) -> f64 {
        std::f64::consts::SQRT_2 / self.detectors as f64
    }

    /// Signed offset of detector cell `j` from the rotation center.
    pub fn detector_offset(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.detector_spacing() - std::f64::consts::FRAC_1_SQRT_2
    }
}

/// Measurement vector, angle-major then row then detector.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub geometry: SinogramGeometry,
    pub data: Vec<f64>,
}

impl Sinogram {
    pub fn new(geometry: SinogramGeometry, data: Vec<f64>) -> Result<Self> {
        geometry.validate()?;
        if data.len() != geometry.len() {
            return Err(Error::invalid(format!("sinogram needs {} values, got {}", geometry.len(), data.len())));
        }
        ensure_finite("sinogram", &data)?;
        Ok(Self { geometry, data })
    }

    pub fn zeros(geometry: SinogramGeometry) -> Self {
        let data = vec![0.0; geometry.len()];
        Self { geometry, data }
    }

    /// Detector readings of one angle (all rows).
    pub fn angle(&self, a: usize) -> &[f64] {
        let w = self.geometry.detectors * self.geometry.rows;
        &self.data[a * w..(a + 1) * w]
    }
}

/// Exact intersection lengths of one planar ray with an `m x m` grid on the
/// unit square. Returns `(cell, length)` pairs in traversal order.
pub fn trace_ray(m: usize, theta_deg: f64, offset: f64) -> Vec<(usize, f64)> {
    let th = theta_deg.to_radians();
    let (sn, cs) = th.sin_cos();
    let n = [cs, sn];
    let e = [-sn, cs];
    let o = [0.5 + offset * n[0], 0.5 + offset * n[1]];
    let mut tmin = f64::NEG_INFINITY;
    let mut tmax = f64::INFINITY;
    const PARALLEL: f64 = 1e-14;
    for k in 0..2 {
        if e[k].abs() < PARALLEL {
            if o[k] <= 0.0 || o[k] >= 1.0 {
                return Vec::new();
            }
        } else {
            let t0 = -o[k] / e[k];
            let t1 = (1.0 - o[k]) / e[k];
            tmin = tmin.max(t0.min(t1));
            tmax = tmax.min(t0.max(t1));
        }
    }
    if tmax <= tmin {
        return Vec::new();
    }
    let mut ts = vec![tmin, tmax];
    for k in 0..2 {
        if e[k].abs() < PARALLEL {
            continue;
        }
        for i in 1..m {
            let t = (i as f64 / m as f64 - o[k]) / e[k];
            if t > tmin && t < tmax {
                ts.push(t);
            }
        }
    }
    ts.sort_by(f64::total_cmp);
    let mf = m as f64;
    let min_len = 1e-12 / mf;
    let mut out = Vec::with_capacity(ts.len());
    for w in ts.windows(2) {
        let len = w[1] - w[0];
        if len <= min_len {
            continue;
        }
        let tm = 0.5 * (w[0] + w[1]);
        let cell = |k: usize| ((o[k] + tm * e[k]) * mf).floor().clamp(0.0, mf - 1.0) as usize;
        out.push((cell(0) + m * cell(1), len));
    }
    out
}

/// Discrete Radon transform for one grid/geometry pair.
#[derive(Debug, Clone)]
pub struct RadonOperator {
    grid: CellGrid,
    geometry: SinogramGeometry,
    forward: CsrMatrix,
    adjoint: CsrMatrix,
}

impl RadonOperator {
    pub fn new(grid: &CellGrid, geometry: &SinogramGeometry) -> Result<Self> {
        geometry.validate()?;
        let m = grid.m();
        let slices = match grid.dim() {
            2 => 1,
            _ => m,
        };
        if geometry.rows != slices {
            return Err(Error::invalid(format!(
                "geometry has {} detector rows but the grid needs {slices}",
                geometry.rows
            )));
        }
        let q = geometry.detectors;
        let scale = geometry.length_scale;
        let planar: Vec<Vec<(usize, f64)>> = geometry
            .angles_deg
            .iter()
            .flat_map(|&a| (0..q).map(move |j| (a, j)))
            .map(|(a, j)| trace_ray(m, a, geometry.detector_offset(j)))
            .collect();
        let mut rows = Vec::with_capacity(geometry.len());
        for a in 0..geometry.num_angles() {
            for r in 0..slices {
                for j in 0..q {
                    let off = r * m * m;
                    rows.push(planar[a * q + j].iter().map(|&(c, l)| (c + off, l * scale)).collect());
                }
            }
        }
        let forward = CsrMatrix::from_rows(grid.num_cells(), rows);
        let adjoint = forward.transpose();
        Ok(Self { grid: *grid, geometry: geometry.clone(), forward, adjoint })
    }

    pub fn grid(&self) -> &CellGrid {
        &self.grid
    }

    pub fn geometry(&self) -> &SinogramGeometry {
        &self.geometry
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.forward
    }

    pub fn forward_values(&self, f: &[f64]) -> Vec<f64> {
        par_matvec(&self.forward, f)
    }

    pub fn adjoint_values(&self, y: &[f64]) -> Vec<f64> {
        par_matvec(&self.adjoint, y)
    }

    pub fn apply(&self, f: &ScalarField) -> Result<Sinogram> {
        if f.grid() != &self.grid && f.grid().m() != self.grid.m() {
            return Err(Error::invalid("image grid differs from the operator grid"));
        }
        Sinogram::new(self.geometry.clone(), self.forward_values(f.values()))
    }

    pub fn apply_adjoint(&self, s: &Sinogram) -> Result<ScalarField> {
        if s.geometry != self.geometry {
            return Err(Error::invalid("sinogram geometry differs from the operator geometry"));
        }
        ScalarField::new(self.grid, self.adjoint_values(&s.data))
    }

    /// Largest eigenvalue of `K^T K` by power iteration.
    pub fn opnorm_ktk(&self) -> f64 {
        power_iteration(self.grid.num_cells(), |x| self.adjoint_values(&self.forward_values(x)), 1e-10, 10_000)
    }
}

fn par_matvec(a: &CsrMatrix, x: &[f64]) -> Vec<f64> {
    assert_eq!(x.len(), a.ncols());
    (0..a.nrows())
        .into_par_iter()
        .map(|r| {
            let (idx, val) = a.row(r);
            idx.iter().zip(val).map(|(&c, &v)| v * x[c]).sum()
        })
        .collect()
}

/// Dominant eigenvalue of a symmetric positive semidefinite operator.
/// Stops when the Rayleigh quotient changes by less than `rtol` (relative).
pub fn power_iteration(n: usize, op: impl Fn(&[f64]) -> Vec<f64>, rtol: f64, max_iter: usize) -> f64 {
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.01 * ((i * 7919) % 101) as f64 / 101.0).collect();
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nx == 0.0 {
            return 0.0;
        }
        x.iter_mut().for_each(|v| *v /= nx);
        let y = op(&x);
        let next: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let done = (next - lambda).abs() <= rtol * next.abs();
        lambda = next;
        x = y;
        if done {
            break;
        }
    }
    lambda
}

/// Forward projection of `f`.
pub fn radon_forward(f: &ScalarField, geom: &SinogramGeometry) -> Result<Sinogram> {
    RadonOperator::new(f.grid(), geom)?.apply(f)
}

/// Back-projection of `s` onto `grid`.
pub fn radon_adjoint(s: &Sinogram, grid: &CellGrid) -> Result<ScalarField> {
    RadonOperator::new(grid, &s.geometry)?.apply_adjoint(s)
}

/// `||K^T K||` for a geometry/grid pair.
pub fn opnorm_ktk(geom: &SinogramGeometry, grid: &CellGrid) -> Result<f64> {
    Ok(RadonOperator::new(grid, geom)?.opnorm_ktk())
}

/// One level down the measurement pyramid: neighboring detector pairs are
/// combined as `(g_j + g_{j+1}) / 4` (the average, halved because the coarse
/// cells are twice as long). Stacked 3-D sinograms combine 2x2 blocks of
/// detector cells and rows with weight `1/8`.
pub fn downsample_sinogram(s: &Sinogram) -> Result<Sinogram> {
    let g = &s.geometry;
    let q = g.detectors;
    if q % 2 != 0 {
        return Err(Error::invalid(format!("cannot downsample an odd detector count q = {q}")));
    }
    let rows = g.rows;
    if rows > 1 && rows % 2 != 0 {
        return Err(Error::invalid(format!("cannot downsample an odd row count {rows}")));
    }
    let (q2, rows2) = (q / 2, if rows > 1 { rows / 2 } else { 1 });
    let mut data = Vec::with_capacity(g.num_angles() * q2 * rows2);
    for a in 0..g.num_angles() {
        let block = s.angle(a);
        for r in 0..rows2 {
            for j in 0..q2 {
                let v = if rows == 1 {
                    (block[2 * j] + block[2 * j + 1]) / 4.0
                } else {
                    let r0 = 2 * r * q;
                    let r1 = r0 + q;
                    (block[r0 + 2 * j] + block[r0 + 2 * j + 1] + block[r1 + 2 * j] + block[r1 + 2 * j + 1]) / 8.0
                };
                data.push(v);
            }
        }
    }
    let geometry = SinogramGeometry {
        angles_deg: g.angles_deg.clone(),
        detectors: q2,
        rows: rows2,
        level: g.level.saturating_sub(1),
        length_scale: g.length_scale / 2.0,
    };
    Sinogram::new(geometry, data)
}
