//! Coarse-to-fine reconstruction.
//!
//! Level `k` works on an `m = 2^k` grid with the template block-averaged and
//! the measurements combined pairwise. Sinograms are handled in cell units
//! (`length_scale = m`) so that the pairwise `/4` rule keeps data and
//! operator consistent on every level.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::flow::{deformed_template, solve_backward_flow};
use crate::functionals::{ForwardOperator, Objective, ObjectiveConfig, ObjectiveParts};
use crate::grid::{CellGrid, ScalarField, VelocityField};
use crate::interp::{prolongate, prolongate_velocity, restrict};
use crate::ipalm::{gauss_newton_run, ipalm_run, GaussNewtonConfig, IpalmConfig, StopReason};
use crate::metrics::{metric_ssd, metric_ssim};
use crate::radon::{downsample_sinogram, RadonOperator, Sinogram};

/// Data of one pyramid level.
#[derive(Debug, Clone)]
pub struct Level {
    pub grid: CellGrid,
    pub template: ScalarField,
    pub sinogram: Sinogram,
    pub operator: RadonOperator,
}

impl Level {
    pub fn m(&self) -> usize {
        self.grid.m()
    }
}

/// Rescales a sinogram to cell units of an `m`-cell grid.
pub fn to_cell_units(g: &Sinogram, m: usize) -> Result<Sinogram> {
    let f = m as f64 / g.geometry.length_scale;
    let geometry = g.geometry.clone().with_length_scale(m as f64);
    Sinogram::new(geometry, g.data.iter().map(|x| x * f).collect())
}

/// Builds the level list, coarsest first.
pub fn build_pyramid(template: &ScalarField, g: &Sinogram, coarsest_m: usize) -> Result<Vec<Level>> {
    let finest = template.grid().m();
    if !finest.is_power_of_two() || !coarsest_m.is_power_of_two() {
        return Err(Error::invalid(format!("grid sizes must be powers of two (finest {finest}, coarsest {coarsest_m})")));
    }
    if coarsest_m > finest {
        return Err(Error::invalid(format!("coarsest level {coarsest_m} exceeds the finest grid {finest}")));
    }
    if template.grid().dim() == 2 && g.geometry.rows != 1 {
        return Err(Error::invalid("planar template needs a single-row sinogram"));
    }
    let mut levels = Vec::new();
    let mut t = template.clone();
    let mut s = to_cell_units(g, finest)?;
    s.geometry.level = finest.trailing_zeros();
    loop {
        let grid = *t.grid();
        let operator = RadonOperator::new(&grid, &s.geometry)?;
        levels.push(Level { grid, template: t.clone(), sinogram: s.clone(), operator });
        if grid.m() == coarsest_m {
            break;
        }
        t = restrict(&t)?;
        s = downsample_sinogram(&s)?;
    }
    levels.reverse();
    Ok(levels)
}

/// Settings of the multi-level driver.
#[derive(Debug, Clone, Default)]
pub struct PipelineConfig {
    pub coarsest_m: usize,
    pub gauss_newton: GaussNewtonConfig,
    /// Directory for per-level iteration logs.
    pub log_dir: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn new() -> Self {
        Self { coarsest_m: 32, gauss_newton: GaussNewtonConfig::default(), log_dir: None }
    }
}

/// Summary of one level.
#[derive(Debug, Clone)]
pub struct LevelReport {
    pub m: usize,
    pub detectors: usize,
    pub iterations: usize,
    pub stop: StopReason,
    /// Objective at `(0, 0)` and at the prolongated initial iterate.
    pub j_zero: f64,
    pub initial: ObjectiveParts,
    pub final_parts: ObjectiveParts,
    pub max_quad_residual: f64,
    pub prox_warnings: usize,
    pub backtracks: usize,
    pub first_stationarity: f64,
    pub last_stationarity: f64,
    /// Per-iteration objective values.
    pub history: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub levels: Vec<LevelReport>,
    /// Objective before and after the Gauss-Newton step, if it ran.
    pub gauss_newton: Option<(f64, f64, bool)>,
    pub final_parts: ObjectiveParts,
    pub ssd: Option<f64>,
    pub ssim: Option<f64>,
    pub header: Vec<(String, String)>,
}

impl Report {
    pub fn final_objective(&self) -> f64 {
        self.final_parts.total()
    }

    /// `key = value` text with one section per level.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.header {
            let _ = writeln!(s, "{k} = {v}");
        }
        for l in &self.levels {
            let _ = writeln!(s, "\n[level {}]", l.m);
            let _ = writeln!(s, "detectors = {}", l.detectors);
            let _ = writeln!(s, "iterations = {}", l.iterations);
            let _ = writeln!(s, "stop = {:?}", l.stop);
            let _ = writeln!(s, "j_zero = {:.12e}", l.j_zero);
            let _ = writeln!(s, "j_initial = {:.12e}", l.initial.total());
            let _ = writeln!(s, "j_final = {:.12e}", l.final_parts.total());
            let _ = writeln!(s, "data = {:.12e}", l.final_parts.data);
            let _ = writeln!(s, "e1 = {:.12e}", l.final_parts.e1_weighted());
            let _ = writeln!(s, "e2 = {:.12e}", l.final_parts.e2);
            let _ = writeln!(s, "backtracks = {}", l.backtracks);
            let _ = writeln!(s, "max_quad_residual = {:.3e}", l.max_quad_residual);
            let _ = writeln!(s, "prox_warnings = {}", l.prox_warnings);
        }
        let _ = writeln!(s, "\n[final]");
        if let Some((a, b, failed)) = self.gauss_newton {
            let _ = writeln!(s, "gauss_newton_before = {a:.12e}");
            let _ = writeln!(s, "gauss_newton_after = {b:.12e}");
            let _ = writeln!(s, "gauss_newton_line_search_failed = {failed}");
        }
        let _ = writeln!(s, "objective = {:.12e}", self.final_objective());
        let _ = writeln!(s, "data = {:.12e}", self.final_parts.data);
        let _ = writeln!(s, "e1 = {:.12e}", self.final_parts.e1_weighted());
        let _ = writeln!(s, "e2 = {:.12e}", self.final_parts.e2);
        if let Some(v) = self.ssd {
            let _ = writeln!(s, "ssd = {v:.6e}");
        }
        if let Some(v) = self.ssim {
            let _ = writeln!(s, "ssim = {v:.6}");
        }
        s
    }
}

/// Output of [`reconstruct`].
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub r: ScalarField,
    pub v: VelocityField,
    pub z: ScalarField,
    /// Deformation part `T o phi^{-1}`.
    pub deformed: ScalarField,
    pub report: Report,
}

/// Runs iPALM on every level from coarse to fine and the optional
/// Gauss-Newton refinement of `v` on the finest level.
pub fn reconstruct(
    template: &ScalarField,
    g: &Sinogram,
    cfg_obj: &ObjectiveConfig,
    cfg_alg: &IpalmConfig,
    cfg: &PipelineConfig,
    truth: Option<&ScalarField>,
) -> Result<Reconstruction> {
    let levels = build_pyramid(template, g, cfg.coarsest_m)?;
    if let Some(dir) = &cfg.log_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut state: Option<(VelocityField, ScalarField)> = None;
    let mut reports = Vec::new();
    let mut gn = None;
    let mut finest = None;
    for (i, level) in levels.iter().enumerate() {
        let fail = |e: Error| match e {
            Error::InvalidInput(m) => Error::InvalidInput(format!("level m = {}: {m}", level.m())),
            Error::NumericalBlowup(m) => Error::NumericalBlowup(format!("level m = {}: {m}", level.m())),
            Error::Convergence { what, residual } => Error::Convergence { what: format!("level m = {}: {what}", level.m()), residual },
            other => other,
        };
        let obj = Objective::new(&level.template, &level.operator, &level.sinogram.data, cfg_obj).map_err(fail)?;
        let vgrid = *obj.grid();
        let init = match &state {
            Some((v, z)) => Some((prolongate_velocity(v, &vgrid)?, prolongate(z, &level.grid)?)),
            None => None,
        };
        let mut alg = cfg_alg.clone();
        alg.log = cfg.log_dir.as_ref().map(|d| d.join(format!("ipalm_m{}.tsv", level.m())));
        let j_zero = obj.value(&vec![0.0; vgrid.velocity_len()], &vec![0.0; level.grid.num_cells()]).map_err(fail)?;
        let out = ipalm_run(&obj, &alg, init.as_ref().map(|(v, z)| (v, z))).map_err(fail)?;
        reports.push(LevelReport {
            m: level.m(),
            detectors: level.sinogram.geometry.detectors,
            iterations: out.records.len(),
            stop: out.stop,
            j_zero,
            initial: out.initial,
            final_parts: out.final_parts(),
            max_quad_residual: out.records.iter().map(|r| r.quad_residual).fold(0.0, f64::max),
            prox_warnings: out.records.iter().filter(|r| r.prox_warning).count(),
            backtracks: out.records.iter().map(|r| r.bt_count).sum(),
            first_stationarity: out.records.first().map_or(0.0, |r| r.stationarity),
            last_stationarity: out.records.last().map_or(0.0, |r| r.stationarity),
            history: out.records.iter().map(|r| r.j).collect(),
        });
        let mut v = out.v;
        let z = out.z;
        if i + 1 == levels.len() {
            if cfg_alg.gauss_newton && cfg_obj.data_term == crate::functionals::DataTerm::Ssd {
                let res = gauss_newton_run(&obj, &z, &v, &cfg.gauss_newton).map_err(fail)?;
                gn = Some((res.objective_before, res.objective_after, res.line_search_failed));
                v = res.v;
            }
            let parts = obj.parts(v.values(), z.values()).map_err(fail)?;
            let flow = solve_backward_flow(&v, &cfg_obj.flow)?;
            let deformed = deformed_template(obj.template(), &flow)?;
            finest = Some((parts, deformed));
        }
        state = Some((v, z));
    }
    let (v, z) = state.expect("pyramid has at least one level");
    let (final_parts, deformed) = finest.expect("finest level processed");
    let values = deformed.values().iter().zip(z.values()).map(|(a, b)| a + b).collect();
    let mut r = ScalarField::new(*template.grid(), values)?;
    r.range_hint = template.range_hint;
    let (ssd, ssim) = match truth {
        Some(t) => (Some(metric_ssd(&r, t)?), metric_ssim(&r, t).ok()),
        None => (None, None),
    };
    let report = Report { levels: reports, gauss_newton: gn, final_parts, ssd, ssim, header: Vec::new() };
    Ok(Reconstruction { r, v, z, deformed, report })
}

/// Evaluates the finest-level objective of a finished reconstruction.
pub fn objective_at_finest(
    template: &ScalarField,
    g: &Sinogram,
    cfg_obj: &ObjectiveConfig,
    v: &VelocityField,
    z: &ScalarField,
) -> Result<ObjectiveParts> {
    let m = template.grid().m();
    let s = to_cell_units(g, m)?;
    let op = RadonOperator::new(template.grid(), &s.geometry)?;
    let obj = Objective::new(template, &op as &dyn ForwardOperator, &s.data, cfg_obj)?;
    obj.parts(v.values(), z.values())
}
