//! Image quality measures.

use crate::error::{Error, Result};
use crate::grid::ScalarField;

fn same_grid(a: &ScalarField, b: &ScalarField) -> Result<()> {
    if a.grid() != b.grid() {
        return Err(Error::invalid("images live on different grids"));
    }
    Ok(())
}

/// `1/2 h^d ||a - b||^2`
pub fn metric_ssd(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    same_grid(a, b)?;
    let s: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(0.5 * a.grid().cell_volume() * s)
}

/// Side length of the SSIM window.
pub const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn gaussian_window() -> Vec<f64> {
    let c = (SSIM_WINDOW / 2) as f64;
    let w: Vec<f64> = (0..SSIM_WINDOW).map(|i| (-(i as f64 - c).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Separable valid-mode filtering of an `m x m` image.
fn filter_valid(x: &[f64], m: usize, w: &[f64]) -> Vec<f64> {
    let k = w.len();
    let n = m - k + 1;
    let mut tmp = vec![0.0; n * m];
    for j in 0..m {
        for i in 0..n {
            tmp[j * n + i] = (0..k).map(|t| w[t] * x[j * m + i + t]).sum();
        }
    }
    let mut out = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            out[j * n + i] = (0..k).map(|t| w[t] * tmp[(j + t) * n + i]).sum();
        }
    }
    out
}

/// Mean structural similarity of two planar images with dynamic range 1,
/// Gaussian window 11x11 (sigma 1.5), averaged over all windows that fit
/// inside the image.
pub fn metric_ssim(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    same_grid(a, b)?;
    let g = a.grid();
    if g.dim() != 2 || g.m() < SSIM_WINDOW {
        return Err(Error::invalid(format!("SSIM needs a planar image of at least {SSIM_WINDOW}x{SSIM_WINDOW} cells")));
    }
    let m = g.m();
    let w = gaussian_window();
    let (x, y) = (a.values(), b.values());
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(s, t)| s * t).collect::<Vec<_>>();
    let mu_x = filter_valid(x, m, &w);
    let mu_y = filter_valid(y, m, &w);
    let xx = filter_valid(&prod(x, x), m, &w);
    let yy = filter_valid(&prod(y, y), m, &w);
    let xy = filter_valid(&prod(x, y), m, &w);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    for i in 0..mu_x.len() {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let vx = xx[i] - mx * mx;
        let vy = yy[i] - my * my;
        let cov = xy[i] - mx * my;
        total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    Ok(total / mu_x.len() as f64)
}

/// `|a - b|` scaled so that `stretch` maps to 1 (clamped).
pub fn error_map(a: &ScalarField, b: &ScalarField, stretch: f64) -> Result<ScalarField> {
    same_grid(a, b)?;
    let values = a.values().iter().zip(b.values()).map(|(x, y)| ((x - y).abs() / stretch).min(1.0)).collect();
    let mut f = ScalarField::new(*a.grid(), values)?;
    f.range_hint = Some((0.0, 1.0));
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::CellGrid;

    #[test]
    fn identical_images() {
        let g = CellGrid::new(2, 16, 1).unwrap();
        let a = ScalarField::from_fn(g, |x| x[0] * x[1]);
        assert_eq!(metric_ssd(&a, &a).unwrap(), 0.0);
        assert!((metric_ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn window_is_normalized() {
        let w = gaussian_window();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(w[0], w[10]);
    }
}
