//! Cell-centered grids on the unit cube and the fields that live on them.
//!
//! Spatial arrays are stored lexicographically with axis 0 varying fastest:
//! `flat = i0 + m * (i1 + m * i2)`. Cell `i` along an axis has its center at
//! `(i + 1/2) * h`, `h = 1/m`.

use crate::error::{ensure_finite, Error, Result};

/// Uniform cell-centered discretization of `(0,1)^d` together with the
/// number of time intervals `m_t` used for velocity fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellGrid {
    dim: usize,
    m: usize,
    m_t: usize,
}

impl CellGrid {
    pub fn new(dim: usize, m: usize, m_t: usize) -> Result<Self> {
        if !(dim == 2 || dim == 3) {
            return Err(Error::invalid(format!("grid dimension must be 2 or 3, got {dim}")));
        }
        if m == 0 {
            return Err(Error::invalid("grid needs at least one cell per axis"));
        }
        Ok(Self { dim, m, m_t })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn m_t(&self) -> usize {
        self.m_t
    }

    /// Spatial cell width.
    pub fn h(&self) -> f64 {
        1.0 / self.m as f64
    }

    /// Time spacing. A stationary field (`m_t = 0`) integrates over the
    /// whole unit interval, so its quadrature weight is 1.
    pub fn h_t(&self) -> f64 {
        if self.m_t == 0 {
            1.0
        } else {
            1.0 / self.m_t as f64
        }
    }

    pub fn time_nodes(&self) -> usize {
        self.m_t + 1
    }

    /// `m^d`
    pub fn num_cells(&self) -> usize {
        self.m.pow(self.dim as u32)
    }

    /// `h^d`
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    /// `d * (m_t + 1) * m^d`
    pub fn velocity_len(&self) -> usize {
        self.dim * self.time_nodes() * self.num_cells()
    }

    pub fn shape(&self) -> Vec<usize> {
        vec![self.m; self.dim]
    }

    /// Same dimension and time discretization, different spatial resolution.
    pub fn with_m(&self, m: usize) -> Result<Self> {
        Self::new(self.dim, m, self.m_t)
    }

    pub fn multi_index(&self, flat: usize) -> [usize; 3] {
        let m = self.m;
        let mut idx = [0usize; 3];
        let mut rest = flat;
        for slot in idx.iter_mut().take(self.dim) {
            *slot = rest % m;
            rest /= m;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().rev().fold(0, |acc, &i| acc * self.m + i)
    }

    pub fn center(&self, flat: usize) -> [f64; 3] {
        let idx = self.multi_index(flat);
        let h = self.h();
        let mut x = [0.0; 3];
        for k in 0..self.dim {
            x[k] = (idx[k] as f64 + 0.5) * h;
        }
        x
    }

    /// All cell centers in storage order.
    pub fn cell_centers(&self) -> PointSet {
        let d = self.dim;
        let mut coords = Vec::with_capacity(self.num_cells() * d);
        for i in 0..self.num_cells() {
            coords.extend_from_slice(&self.center(i)[..d]);
        }
        PointSet { dim: d, coords }
    }
}

/// Scalar image sampled at the cell centers of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: CellGrid,
    values: Vec<f64>,
    /// Intensity window used when exporting previews; has no numerical role.
    pub range_hint: Option<(f64, f64)>,
}

impl ScalarField {
    pub fn new(grid: CellGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_cells() {
            return Err(Error::invalid(format!(
                "scalar field needs {} values, got {}",
                grid.num_cells(),
                values.len()
            )));
        }
        ensure_finite("scalar field", &values)?;
        Ok(Self { grid, values, range_hint: None })
    }

    pub fn zeros(grid: CellGrid) -> Self {
        Self { grid, values: vec![0.0; grid.num_cells()], range_hint: None }
    }

    pub fn constant(grid: CellGrid, c: f64) -> Self {
        Self { grid, values: vec![c; grid.num_cells()], range_hint: None }
    }

    /// Samples `f` at every cell center.
    pub fn from_fn(grid: CellGrid, f: impl Fn(&[f64]) -> f64) -> Self {
        let d = grid.dim();
        let values = (0..grid.num_cells()).map(|i| f(&grid.center(i)[..d])).collect();
        Self { grid, values, range_hint: None }
    }

    pub fn grid(&self) -> &CellGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Time-dependent velocity field. Storage is time-major, then component,
/// then lexicographic space: `index = (t * d + c) * m^d + s`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    grid: CellGrid,
    values: Vec<f64>,
}

impl VelocityField {
    pub fn new(grid: CellGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.velocity_len() {
            return Err(Error::invalid(format!(
                "velocity field needs {} values, got {}",
                grid.velocity_len(),
                values.len()
            )));
        }
        ensure_finite("velocity field", &values)?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: CellGrid) -> Self {
        Self { grid, values: vec![0.0; grid.velocity_len()] }
    }

    /// Samples `f(t, x) -> [v_0, .., v_{d-1}]` at every time node and cell center.
    pub fn from_fn(grid: CellGrid, f: impl Fn(f64, &[f64]) -> [f64; 3]) -> Self {
        let d = grid.dim();
        let n = grid.num_cells();
        let mut values = vec![0.0; grid.velocity_len()];
        for tn in 0..grid.time_nodes() {
            let t = tn as f64 * grid.h_t();
            for s in 0..n {
                let v = f(t, &grid.center(s)[..d]);
                for c in 0..d {
                    values[(tn * d + c) * n + s] = v[c];
                }
            }
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> &CellGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Offset of component `c` at time node `tn` in the flat storage.
    pub fn offset(&self, tn: usize, c: usize) -> usize {
        (tn * self.grid.dim() + c) * self.grid.num_cells()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, &x| a.max(x.abs()))
    }
}

/// A set of points in `R^d`, stored point-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || coords.is_empty() || coords.len() % dim != 0 {
            return Err(Error::invalid("point set needs a positive multiple of dim coordinates"));
        }
        ensure_finite("point set", &coords)?;
        Ok(Self { dim, coords })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }
}
