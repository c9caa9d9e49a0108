//! Synthetic test images and deformation presets.
//!
//! Analytic phantoms are rasterized as cell averages estimated on a fixed
//! sampling lattice of 1024 points per axis (for `m <= 1024`), so the phantom
//! at resolution `m` equals the 2x2 block average of the phantom at `2m`.

use crate::error::{Error, Result};
use crate::flow::{solution_map, SolverConfig};
use crate::grid::{CellGrid, ScalarField, VelocityField};
use crate::interp::{Interpolant, InterpOrder};
use crate::radon::Sinogram;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const RASTER: usize = 1024;

/// Side length of the square added by the `shepp-logan-square` phantom.
pub const SQUARE_SIDE: f64 = 0.08;
/// Lower-left corner of that square (inside the gray matter, below the right
/// ventricle).
pub const SQUARE_ORIGIN: [f64; 2] = [0.58, 0.22];

/// Built-in phantoms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phantom {
    SheppLogan,
    SheppLoganSquare,
    GaussBump,
    Disk,
}

impl std::str::FromStr for Phantom {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shepp-logan" => Ok(Phantom::SheppLogan),
            "shepp-logan-square" => Ok(Phantom::SheppLoganSquare),
            "gauss-bump" => Ok(Phantom::GaussBump),
            "disk" => Ok(Phantom::Disk),
            other => Err(Error::invalid(format!("unknown phantom '{other}'"))),
        }
    }
}

// (intensity, semi-axis a, semi-axis b, center x, center y, rotation in degrees)
// on [-1, 1]^2; the modified table whose sums stay within [0, 1].
const SHEPP_LOGAN: [[f64; 6]; 10] = [
    [1.0, 0.69, 0.92, 0.0, 0.0, 0.0],
    [-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0],
    [-0.2, 0.11, 0.31, 0.22, 0.0, -18.0],
    [-0.2, 0.16, 0.41, -0.22, 0.0, 18.0],
    [0.1, 0.21, 0.25, 0.0, 0.35, 0.0],
    [0.1, 0.046, 0.046, 0.0, 0.1, 0.0],
    [0.1, 0.046, 0.046, 0.0, -0.1, 0.0],
    [0.1, 0.046, 0.023, -0.08, -0.605, 0.0],
    [0.1, 0.023, 0.023, 0.0, -0.606, 0.0],
    [0.1, 0.023, 0.046, 0.06, -0.605, 0.0],
];

fn shepp_logan_at(x: f64, y: f64) -> f64 {
    let (px, py) = (2.0 * x - 1.0, 2.0 * y - 1.0);
    let mut v = 0.0;
    for e in &SHEPP_LOGAN {
        let (s, c) = e[5].to_radians().sin_cos();
        let (dx, dy) = (px - e[3], py - e[4]);
        let u = (dx * c + dy * s) / e[1];
        let w = (-dx * s + dy * c) / e[2];
        if u * u + w * w <= 1.0 {
            v += e[0];
        }
    }
    v.clamp(0.0, 1.0)
}

fn in_square(x: f64, y: f64) -> bool {
    let [x0, y0] = SQUARE_ORIGIN;
    (x0..x0 + SQUARE_SIDE).contains(&x) && (y0..y0 + SQUARE_SIDE).contains(&y)
}

/// Indicator of the added square sampled at cell centers.
pub fn square_mask(grid: &CellGrid) -> Vec<bool> {
    (0..grid.num_cells())
        .map(|i| {
            let c = grid.center(i);
            in_square(c[0], c[1])
        })
        .collect()
}

/// Fraction of `sum |z|` inside the square mask dilated by `cells` cells
/// (Chebyshev distance). Planar grids only.
pub fn square_mass_fraction(z: &ScalarField, cells: usize) -> Result<f64> {
    let grid = z.grid();
    if grid.dim() != 2 {
        return Err(Error::invalid("square mass fraction needs a planar field"));
    }
    let mask = square_mask(grid);
    let m = grid.m();
    let (mut lo, mut hi) = ([usize::MAX; 2], [0usize; 2]);
    for (i, _) in mask.iter().enumerate().filter(|(_, &b)| b) {
        let idx = grid.multi_index(i);
        for k in 0..2 {
            lo[k] = lo[k].min(idx[k]);
            hi[k] = hi[k].max(idx[k]);
        }
    }
    let total: f64 = z.values().iter().map(|x| x.abs()).sum();
    if lo[0] == usize::MAX || total == 0.0 {
        return Ok(0.0);
    }
    let inside: f64 = (0..grid.num_cells())
        .filter(|&i| {
            let idx = grid.multi_index(i);
            (0..2).all(|k| idx[k] + cells >= lo[k] && idx[k] <= (hi[k] + cells).min(m - 1))
        })
        .map(|i| z.values()[i].abs())
        .sum();
    Ok(inside / total)
}

impl Phantom {
    fn point(self, x: &[f64]) -> f64 {
        match self {
            Phantom::SheppLogan => shepp_logan_at(x[0], x[1]),
            Phantom::SheppLoganSquare => {
                if in_square(x[0], x[1]) {
                    1.0
                } else {
                    shepp_logan_at(x[0], x[1])
                }
            }
            Phantom::GaussBump => {
                let r2: f64 = x.iter().map(|&a| (a - 0.5) * (a - 0.5)).sum();
                (-r2 / (2.0 * 0.1 * 0.1)).exp()
            }
            Phantom::Disk => {
                let r2: f64 = x.iter().map(|&a| (a - 0.5) * (a - 0.5)).sum();
                if r2 <= 0.09 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Rasterizes a built-in phantom on an `m x m` grid.
pub fn make_phantom(phantom: Phantom, m: usize) -> Result<ScalarField> {
    if m < 8 {
        return Err(Error::invalid(format!("phantoms need m >= 8, got {m}")));
    }
    let grid = CellGrid::new(2, m, 1)?;
    let sub = (RASTER / m).max(1);
    let hs = 1.0 / (m * sub) as f64;
    let norm = 1.0 / (sub * sub) as f64;
    let values = (0..grid.num_cells())
        .map(|i| {
            let idx = grid.multi_index(i);
            let mut acc = 0.0;
            for b in 0..sub {
                let y = ((idx[1] * sub + b) as f64 + 0.5) * hs;
                for a in 0..sub {
                    let x = ((idx[0] * sub + a) as f64 + 0.5) * hs;
                    acc += phantom.point(&[x, y]);
                }
            }
            acc * norm
        })
        .collect();
    let mut f = ScalarField::new(grid, values)?;
    f.range_hint = Some((0.0, 1.0));
    Ok(f)
}

/// Smooth velocity presets used to manufacture deformed targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeformPreset {
    Zero,
    /// Constant velocity `b`; the image moves by `+b`.
    Translate([f64; 2]),
    /// Rotation about the center with Gaussian falloff (width 0.2) and
    /// peak angular speed `omega`.
    Swirl { omega: f64 },
    /// Sinusoidal bend vanishing on the boundary, amplitude `amp`.
    Bend { amp: f64 },
    /// Translation by `b` localized by a Gaussian bump at the center.
    TranslateBump([f64; 2]),
}

impl std::str::FromStr for DeformPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" | "none" => Ok(DeformPreset::Zero),
            "translate" => Ok(DeformPreset::Translate([0.05, 0.0])),
            "swirl" => Ok(DeformPreset::Swirl { omega: 0.3 }),
            "bend" => Ok(DeformPreset::Bend { amp: 0.02 }),
            "translate-bump" => Ok(DeformPreset::TranslateBump([0.04, 0.02])),
            other => Err(Error::invalid(format!("unknown deformation preset '{other}'"))),
        }
    }
}

impl DeformPreset {
    pub fn velocity(self, grid: &CellGrid) -> VelocityField {
        VelocityField::from_fn(*grid, move |_, x| {
            let (dx, dy) = (x[0] - 0.5, x[1] - 0.5);
            match self {
                DeformPreset::Zero => [0.0; 3],
                DeformPreset::Translate(b) => [b[0], b[1], 0.0],
                DeformPreset::Swirl { omega } => {
                    let fall = (-(dx * dx + dy * dy) / (2.0 * 0.04)).exp();
                    [-omega * fall * dy, omega * fall * dx, 0.0]
                }
                DeformPreset::Bend { amp } => {
                    let (sx, sy) = ((std::f64::consts::PI * x[0]).sin(), (std::f64::consts::PI * x[1]).sin());
                    [amp * sx * sy * (std::f64::consts::PI * x[1]).cos() * 2.0, amp * sx * sx * sy, 0.0]
                }
                DeformPreset::TranslateBump(b) => {
                    let fall = (-(dx * dx + dy * dy) / (2.0 * 0.0225)).exp();
                    [b[0] * fall, b[1] * fall, 0.0]
                }
            }
        })
    }
}

/// Warps `field` by the flow of a preset velocity: returns `T(phi(0, x_c))`.
pub fn synth_deform(field: &ScalarField, preset: DeformPreset) -> Result<ScalarField> {
    let grid = field.grid();
    let v = preset.velocity(grid);
    let it = Interpolant::new(field, InterpOrder::Cubic);
    let (mut r, _) = solution_map(&it, &v, &ScalarField::zeros(*grid), &SolverConfig::default())?;
    r.range_hint = field.range_hint;
    Ok(r)
}

/// Overwrites the cells of the added square with intensity 1.
pub fn add_square(field: &ScalarField) -> Result<ScalarField> {
    let grid = *field.grid();
    let sq = make_phantom_mask_avg(&grid);
    let values = field.values().iter().zip(&sq).map(|(&v, &w)| v * (1.0 - w) + w).collect();
    let mut out = ScalarField::new(grid, values)?;
    out.range_hint = field.range_hint;
    Ok(out)
}

/// Cell-averaged coverage of the added square.
fn make_phantom_mask_avg(grid: &CellGrid) -> Vec<f64> {
    let m = grid.m();
    let sub = (RASTER / m).max(1);
    let hs = 1.0 / (m * sub) as f64;
    (0..grid.num_cells())
        .map(|i| {
            let idx = grid.multi_index(i);
            let mut hits = 0usize;
            for b in 0..sub {
                for a in 0..sub {
                    let x = ((idx[0] * sub + a) as f64 + 0.5) * hs;
                    let y = ((idx[1] * sub + b) as f64 + 0.5) * hs;
                    hits += in_square(x, y) as usize;
                }
            }
            hits as f64 / (sub * sub) as f64
        })
        .collect()
}

/// Adds white Gaussian noise with standard deviation `level ||g|| / sqrt(M)`,
/// so the expected noise energy is `level^2 ||g||^2`.
pub fn add_noise(g: &Sinogram, level: f64, seed: u64) -> Result<Sinogram> {
    if !(level >= 0.0 && level.is_finite()) {
        return Err(Error::invalid("noise level must be non-negative"));
    }
    if level == 0.0 || g.data.is_empty() {
        return Ok(g.clone());
    }
    let norm = g.data.iter().map(|x| x * x).sum::<f64>().sqrt();
    let sd = level * norm / (g.data.len() as f64).sqrt();
    let dist = Normal::new(0.0, sd).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = g.data.iter().map(|x| x + dist.sample(&mut rng)).collect();
    Sinogram::new(g.geometry.clone(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::restrict;

    #[test]
    fn disk_values() {
        let d = make_phantom(Phantom::Disk, 32).unwrap();
        let g = d.grid();
        assert_eq!(d.values()[g.flat_index(&[16, 16])], 1.0);
        assert_eq!(d.values()[0], 0.0);
        assert!("blob".parse::<Phantom>().is_err());
        assert!(make_phantom(Phantom::Disk, 4).is_err());
    }

    #[test]
    fn shepp_logan_range_and_doubling() {
        let fine = make_phantom(Phantom::SheppLogan, 256).unwrap();
        let coarse = make_phantom(Phantom::SheppLogan, 128).unwrap();
        assert!(coarse.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(coarse.values().contains(&1.0));
        let down = restrict(&fine).unwrap();
        let quantum = 1.0 / 255.0;
        let close = down.values().iter().zip(coarse.values()).filter(|(a, b)| (*a - *b).abs() <= quantum).count();
        assert!(close as f64 >= 0.99 * coarse.len() as f64);
    }

    #[test]
    fn square_is_white() {
        let f = make_phantom(Phantom::SheppLoganSquare, 64).unwrap();
        let g = *f.grid();
        let h = g.h();
        let [x0, y0] = SQUARE_ORIGIN;
        let inside = |c: f64, lo: f64| c - h / 2.0 >= lo && c + h / 2.0 <= lo + SQUARE_SIDE;
        let mut covered = 0;
        for i in 0..g.num_cells() {
            let c = g.center(i);
            if inside(c[0], x0) && inside(c[1], y0) {
                covered += 1;
                assert!((f.values()[i] - 1.0).abs() < 1e-12);
            }
        }
        assert!(covered > 0);
    }

    #[test]
    fn zero_preset_is_identity() {
        let f = make_phantom(Phantom::SheppLogan, 32).unwrap();
        let w = synth_deform(&f, DeformPreset::Zero).unwrap();
        for (a, b) in w.values().iter().zip(f.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
