//! Experiment description files and the drivers behind the command line tool.
//!
//! A spec file is a flat `key = value` list grouped in sections; `#` starts a
//! comment. Relative paths are resolved against the directory of the file.
//!
//! ```text
//! [data]
//! template = shepp-logan        # built-in phantom name or image file
//! target = shepp-logan          # optional, defaults to the template
//! deform = bend                 # preset applied to the target (default none)
//! add_square = true             # paint the white square (default false)
//! sinogram = g.csv              # measured data instead of a simulated target
//! raw = g.f32                   # or raw float32 data ...
//! raw_sidecar = g.txt           # ... described by key = value lines
//! m = 64
//! angles = 10
//! noise = 0.05                  # relative, sigma = noise ||g|| / sqrt(M)
//! seed = 7
//!
//! [model]
//! data_term = ssd               # ssd | ncc
//! regularizer = third-order     # third-order | curvature | diffusion
//! lambda1 = 0.001, 0.001, 1e-6  # spatial, temporal, L2 weights
//! source = tv                   # tv | l2
//! lambda2 = 0.1
//! template_interp = cubic       # cubic | linear
//! time_intervals = 1
//! time_steps = 5
//! scheme = rk4                  # rk4 | euler
//!
//! [solver]
//! mode = heuristic              # heuristic | guaranteed
//! max_iter = 200
//! rel_tol = 1e-6
//! patience = 5
//! gauss_newton = true
//! coarsest_m = 32
//! pdhg_tol = 1e-6
//! pdhg_max_iter = 500
//!
//! [sweep]
//! lambda1_scale = 0.01, 0.1, 1, 10, 100
//! lambda2 = 0.02, 0.2, 2, 20
//!
//! [baseline]
//! lambda = 0.1, 0.3, 1, 3, 10
//!
//! [output]
//! dir = out
//! ```

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::baseline::{l2tv_baseline, BaselineConfig, BaselineOutcome};
use crate::error::{Error, Result};
use crate::functionals::ObjectiveConfig;
use crate::grid::{CellGrid, ScalarField};
use crate::io::{read_image, read_raw_sinogram, read_sinogram_csv, write_image, write_png, write_sinogram_csv, KeyValues};
use crate::ipalm::IpalmConfig;
use crate::metrics::{error_map, metric_ssd, metric_ssim};
use crate::phantom::{add_noise, add_square, make_phantom, square_mass_fraction, synth_deform, DeformPreset, Phantom};
use crate::pipeline::{reconstruct, to_cell_units, PipelineConfig, Reconstruction};
use crate::radon::{radon_forward, RadonOperator, Sinogram, SinogramGeometry};

/// Error maps show `|R - U|` with this value mapped to white.
pub const ERROR_STRETCH: f64 = 0.2;
/// Dilation (in cells) of the square support when measuring where `z` lives.
pub const SQUARE_DILATION: usize = 2;

const KNOWN_KEYS: &[&str] = &[
    "data.template",
    "data.target",
    "data.deform",
    "data.add_square",
    "data.sinogram",
    "data.raw",
    "data.raw_sidecar",
    "data.m",
    "data.angles",
    "data.noise",
    "data.seed",
    "model.data_term",
    "model.regularizer",
    "model.lambda1",
    "model.source",
    "model.lambda2",
    "model.template_interp",
    "model.time_intervals",
    "model.time_steps",
    "model.scheme",
    "solver.mode",
    "solver.max_iter",
    "solver.rel_tol",
    "solver.patience",
    "solver.gauss_newton",
    "solver.coarsest_m",
    "solver.pdhg_tol",
    "solver.pdhg_max_iter",
    "sweep.lambda1_scale",
    "sweep.lambda2",
    "baseline.lambda",
    "output.dir",
];

/// Built-in phantom or image file.
#[derive(Debug, Clone, PartialEq)]
pub enum ImageSource {
    Builtin(Phantom),
    File(PathBuf),
}

impl ImageSource {
    fn parse(value: &str, base: &Path) -> Self {
        match value.parse::<Phantom>() {
            Ok(p) => ImageSource::Builtin(p),
            Err(_) => ImageSource::File(base.join(value)),
        }
    }

    pub fn load(&self, m: usize) -> Result<ScalarField> {
        match self {
            ImageSource::Builtin(p) => make_phantom(*p, m),
            ImageSource::File(path) => {
                let f = read_image(path)?;
                if f.grid().m() != m {
                    return Err(Error::invalid(format!("{} has m = {}, the spec asks for {m}", path.display(), f.grid().m())));
                }
                Ok(f)
            }
        }
    }
}

/// Where the measurements come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Measurement {
    /// Project the target and add noise.
    Simulated,
    Csv(PathBuf),
    Raw { data: PathBuf, sidecar: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSpec {
    pub template: ImageSource,
    /// Image the target is built from; the template if `None`.
    pub target: Option<ImageSource>,
    pub deform: DeformPreset,
    pub add_square: bool,
    pub measurement: Measurement,
    pub m: usize,
    pub angles: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            template: ImageSource::Builtin(Phantom::SheppLogan),
            target: None,
            deform: DeformPreset::Zero,
            add_square: false,
            measurement: Measurement::Simulated,
            m: 64,
            angles: 10,
            noise: 0.05,
            seed: 7,
        }
    }
}

/// Complete description of one experiment.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub data: DataSpec,
    pub objective: ObjectiveConfig,
    pub ipalm: IpalmConfig,
    pub pipeline: PipelineConfig,
    pub sweep_lambda1_scale: Vec<f64>,
    pub sweep_lambda2: Vec<f64>,
    pub baseline_lambdas: Vec<f64>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            data: DataSpec::default(),
            objective: ObjectiveConfig::default(),
            ipalm: IpalmConfig::default(),
            pipeline: PipelineConfig::new(),
            sweep_lambda1_scale: vec![0.01, 0.1, 1.0, 10.0, 100.0],
            sweep_lambda2: vec![0.02, 0.2, 2.0, 20.0],
            baseline_lambdas: vec![0.1, 0.3, 1.0, 3.0, 10.0],
            output_dir: PathBuf::from("out"),
        }
    }
}

fn parse_bool(kv: &KeyValues, key: &str) -> Result<Option<bool>> {
    match kv.get(key) {
        None => Ok(None),
        Some("true" | "yes" | "1") => Ok(Some(true)),
        Some("false" | "no" | "0") => Ok(Some(false)),
        Some(v) => Err(Error::Parse { line: kv.line_of(key), msg: format!("invalid boolean '{v}' for '{key}'") }),
    }
}

fn parse_enum<T: std::str::FromStr<Err = Error>>(kv: &KeyValues, key: &str) -> Result<Option<T>> {
    match kv.get(key) {
        None => Ok(None),
        Some(v) => v.parse::<T>().map(Some).map_err(|e| Error::Parse { line: kv.line_of(key), msg: format!("{key}: {e}") }),
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl ExperimentSpec {
    /// Parses spec text; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        kv.check_known(KNOWN_KEYS)?;
        let mut s = ExperimentSpec::default();

        let d = &mut s.data;
        if let Some(v) = kv.get("data.template") {
            d.template = ImageSource::parse(v, base);
        }
        d.target = kv.get("data.target").map(|v| ImageSource::parse(v, base));
        set(&mut d.deform, parse_enum(&kv, "data.deform")?);
        set(&mut d.add_square, parse_bool(&kv, "data.add_square")?);
        set(&mut d.m, kv.parse_value("data.m")?);
        set(&mut d.angles, kv.parse_value("data.angles")?);
        set(&mut d.noise, kv.parse_value("data.noise")?);
        set(&mut d.seed, kv.parse_value("data.seed")?);
        match (kv.get("data.sinogram"), kv.get("data.raw"), kv.get("data.raw_sidecar")) {
            (None, None, None) => {}
            (Some(p), None, None) => d.measurement = Measurement::Csv(base.join(p)),
            (None, Some(r), Some(h)) => d.measurement = Measurement::Raw { data: base.join(r), sidecar: base.join(h) },
            _ => {
                let line = kv.line_of("data.sinogram").max(kv.line_of("data.raw")).max(kv.line_of("data.raw_sidecar"));
                return Err(Error::Parse { line, msg: "give either 'sinogram' or both 'raw' and 'raw_sidecar'".into() });
            }
        }
        if d.angles == 0 {
            return Err(Error::Parse { line: kv.line_of("data.angles"), msg: "need at least one angle".into() });
        }
        if !(d.noise >= 0.0) {
            return Err(Error::Parse { line: kv.line_of("data.noise"), msg: "noise level must be non-negative".into() });
        }

        let o = &mut s.objective;
        set(&mut o.data_term, parse_enum(&kv, "model.data_term")?);
        set(&mut o.reg_kind, parse_enum(&kv, "model.regularizer")?);
        set(&mut o.source_reg, parse_enum(&kv, "model.source")?);
        set(&mut o.template_order, parse_enum(&kv, "model.template_interp")?);
        set(&mut o.flow.scheme, parse_enum(&kv, "model.scheme")?);
        set(&mut o.lambda2, kv.parse_value("model.lambda2")?);
        set(&mut o.time_intervals, kv.parse_value("model.time_intervals")?);
        set(&mut o.flow.steps, kv.parse_value("model.time_steps")?);
        set(&mut o.pdhg_tol, kv.parse_value("solver.pdhg_tol")?);
        set(&mut o.pdhg_max_iter, kv.parse_value("solver.pdhg_max_iter")?);
        if let Some(l) = kv.list("model.lambda1")? {
            if l.is_empty() || l.len() > 3 {
                return Err(Error::Parse { line: kv.line_of("model.lambda1"), msg: "lambda1 takes one to three weights".into() });
            }
            o.lambda1 = [0.0; 3];
            o.lambda1[..l.len()].copy_from_slice(&l);
        }
        o.validate().map_err(|e| Error::Parse { line: kv.line_of("model.lambda1").max(kv.line_of("model.lambda2")), msg: e.to_string() })?;

        let a = &mut s.ipalm;
        set(&mut a.mode, parse_enum(&kv, "solver.mode")?);
        set(&mut a.max_iter, kv.parse_value("solver.max_iter")?);
        set(&mut a.rel_tol, kv.parse_value("solver.rel_tol")?);
        set(&mut a.patience, kv.parse_value("solver.patience")?);
        set(&mut a.gauss_newton, parse_bool(&kv, "solver.gauss_newton")?);
        a.validate().map_err(|e| Error::Parse { line: kv.line_of("solver.max_iter"), msg: e.to_string() })?;
        set(&mut s.pipeline.coarsest_m, kv.parse_value("solver.coarsest_m")?);

        set(&mut s.sweep_lambda1_scale, kv.list("sweep.lambda1_scale")?);
        set(&mut s.sweep_lambda2, kv.list("sweep.lambda2")?);
        set(&mut s.baseline_lambdas, kv.list("baseline.lambda")?);
        if let Some(dir) = kv.get("output.dir") {
            s.output_dir = base.join(dir);
        }
        Ok(s)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Copy with `lambda1` scaled by `s1` and `lambda2` replaced.
    pub fn with_lambdas(&self, s1: f64, lambda2: f64) -> Self {
        let mut s = self.clone();
        s.objective.lambda1.iter_mut().for_each(|l| *l *= s1);
        s.objective.lambda2 = lambda2;
        s
    }
}

/// Inputs of a reconstruction.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub template: ScalarField,
    /// Ground truth, when the data were simulated.
    pub truth: Option<ScalarField>,
    /// Measurements in unit-square length units.
    pub sinogram: Sinogram,
}

/// Loads the template and builds or loads the measurements.
pub fn prepare(spec: &DataSpec) -> Result<Prepared> {
    let template = spec.template.load(spec.m)?;
    let m = spec.m;
    match &spec.measurement {
        Measurement::Simulated => {
            let base = match &spec.target {
                Some(t) => t.load(m)?,
                None => template.clone(),
            };
            let mut truth = synth_deform(&base, spec.deform)?;
            if spec.add_square {
                truth = add_square(&truth)?;
            }
            let geom = simulation_geometry(template.grid(), spec.angles)?;
            let clean = radon_forward(&truth, &geom)?;
            let sinogram = add_noise(&clean, spec.noise, spec.seed)?;
            Ok(Prepared { template, truth: Some(truth), sinogram })
        }
        Measurement::Csv(path) => {
            let sinogram = read_sinogram_csv(path)?;
            Ok(Prepared { template, truth: None, sinogram })
        }
        Measurement::Raw { data, sidecar } => {
            let sinogram = read_raw_sinogram(data, sidecar)?;
            Ok(Prepared { template, truth: None, sinogram })
        }
    }
}

/// Equispaced angles and the finest-level detector count of `grid`.
pub fn simulation_geometry(grid: &CellGrid, angles: usize) -> Result<SinogramGeometry> {
    let m = grid.m();
    if !m.is_power_of_two() || m < 2 {
        return Err(Error::invalid(format!("grid size {m} is not a power of two")));
    }
    let mut g = SinogramGeometry::for_level(SinogramGeometry::equispaced_angles(angles), m.trailing_zeros())?;
    if grid.dim() == 3 {
        g = g.with_rows(m);
    }
    Ok(g)
}

fn header(spec: &ExperimentSpec) -> Vec<(String, String)> {
    let o = &spec.objective;
    let d = &spec.data;
    let mut h = vec![
        ("m".to_string(), d.m.to_string()),
        ("angles".to_string(), d.angles.to_string()),
        ("noise".to_string(), format!("{} (sigma = noise * ||g|| / sqrt(M))", d.noise)),
        ("seed".to_string(), d.seed.to_string()),
        ("data_term".to_string(), format!("{:?}", o.data_term)),
        ("regularizer".to_string(), format!("{:?}", o.reg_kind)),
        ("lambda1".to_string(), format!("{:?}", o.lambda1)),
        ("source".to_string(), format!("{:?}", o.source_reg)),
        ("lambda2".to_string(), o.lambda2.to_string()),
        ("mode".to_string(), format!("{:?}", spec.ipalm.mode)),
    ];
    if d.measurement != Measurement::Simulated {
        h.retain(|(k, _)| k != "noise" && k != "seed");
    }
    h
}

/// Result of [`run_reconstruction`].
#[derive(Debug, Clone)]
pub struct RunResult {
    pub reconstruction: Reconstruction,
    /// Share of `sum |z|` near the added square, when one was painted.
    pub square_fraction: Option<f64>,
}

/// Runs the multi-level reconstruction described by `spec`.
pub fn run_reconstruction(spec: &ExperimentSpec, data: &Prepared) -> Result<RunResult> {
    let mut rec = reconstruct(&data.template, &data.sinogram, &spec.objective, &spec.ipalm, &spec.pipeline, data.truth.as_ref())?;
    rec.report.header = header(spec);
    let square_fraction = if spec.data.add_square && rec.z.grid().dim() == 2 {
        let f = square_mass_fraction(&rec.z, SQUARE_DILATION)?;
        rec.report.header.push(("z_square_fraction".into(), format!("{f:.6}")));
        Some(f)
    } else {
        None
    };
    Ok(RunResult { reconstruction: rec, square_fraction })
}

/// Writes `reconstruction`, `deformation`, `source` and (with a ground
/// truth) `error` images plus `report.txt` to `dir`; every image also gets
/// a PNG preview.
pub fn write_artifacts(dir: &Path, run: &RunResult, truth: Option<&ScalarField>) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let rec = &run.reconstruction;
    let mut written = Vec::new();
    let mut save = |name: &str, f: &ScalarField, range: Option<(f64, f64)>| -> Result<()> {
        let img = dir.join(format!("{name}.img"));
        write_image(&img, f)?;
        write_png(&dir.join(format!("{name}.png")), f, range)?;
        written.push(img);
        Ok(())
    };
    save("reconstruction", &rec.r, Some((0.0, 1.0)))?;
    save("deformation", &rec.deformed, Some((0.0, 1.0)))?;
    save("source", &rec.z, None)?;
    if let Some(t) = truth {
        save("error", &error_map(&rec.r, t, ERROR_STRETCH)?, Some((0.0, 1.0)))?;
        save("truth", t, Some((0.0, 1.0)))?;
    }
    let report = dir.join("report.txt");
    std::fs::write(&report, rec.report.to_text())?;
    written.push(report);
    Ok(written)
}

/// One row of a parameter sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub lambda1_scale: f64,
    pub lambda2: f64,
    pub ssd: f64,
    pub ssim: f64,
    pub objective: f64,
    pub square_fraction: Option<f64>,
}

/// Reconstructs for every `(lambda1_scale, lambda2)` pair in parallel.
/// Rows come back in grid order (scale major).
pub fn run_sweep(spec: &ExperimentSpec, data: &Prepared) -> Result<Vec<SweepRow>> {
    let truth = data.truth.as_ref().ok_or_else(|| Error::invalid("a sweep needs simulated data with a ground truth"))?;
    let pairs: Vec<(f64, f64)> =
        spec.sweep_lambda1_scale.iter().flat_map(|&a| spec.sweep_lambda2.iter().map(move |&b| (a, b))).collect();
    if pairs.is_empty() {
        return Err(Error::invalid("empty sweep grid"));
    }
    pairs
        .par_iter()
        .map(|&(s1, l2)| {
            let mut job = spec.with_lambdas(s1, l2);
            job.pipeline.log_dir = None;
            let run = run_reconstruction(&job, data)?;
            let r = &run.reconstruction;
            Ok(SweepRow {
                lambda1_scale: s1,
                lambda2: l2,
                ssd: metric_ssd(&r.r, truth)?,
                ssim: metric_ssim(&r.r, truth)?,
                objective: r.report.final_objective(),
                square_fraction: run.square_fraction,
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("lambda1_scale,lambda2,ssd,ssim,objective,z_square_fraction\n");
    for r in rows {
        let frac = r.square_fraction.map_or(String::new(), |f| format!("{f:.6}"));
        s += &format!("{},{},{:.6e},{:.6},{:.6e},{frac}\n", r.lambda1_scale, r.lambda2, r.ssd, r.ssim, r.objective);
    }
    s
}

/// Baseline reconstruction for each candidate weight.
#[derive(Debug, Clone)]
pub struct BaselineSearch {
    /// `(lambda, ssd)`; the SSD is `NaN` without ground truth.
    pub scores: Vec<(f64, f64)>,
    pub best_lambda: f64,
    pub best: BaselineOutcome,
}

/// Runs the L2-TV baseline for every weight in the spec and keeps the one
/// with the smallest image SSD. Without ground truth exactly one weight is
/// allowed.
pub fn baseline_search(spec: &ExperimentSpec, data: &Prepared) -> Result<BaselineSearch> {
    let lambdas = &spec.baseline_lambdas;
    if lambdas.is_empty() || (data.truth.is_none() && lambdas.len() != 1) {
        return Err(Error::invalid("baseline needs one weight, or a ground truth to choose among several"));
    }
    let grid = *data.template.grid();
    let s = to_cell_units(&data.sinogram, grid.m())?;
    let op = RadonOperator::new(&grid, &s.geometry)?;
    let runs: Vec<(f64, BaselineOutcome)> = lambdas
        .par_iter()
        .map(|&lambda| {
            let cfg = BaselineConfig { lambda, ..BaselineConfig::default() };
            l2tv_baseline(&grid, &op, &s.data, &cfg, None).map(|b| (lambda, b))
        })
        .collect::<Result<_>>()?;
    let mut scores = Vec::new();
    let mut best: Option<(f64, f64, BaselineOutcome)> = None;
    for (lambda, out) in runs {
        let ssd = match &data.truth {
            Some(t) => metric_ssd(&out.image, t)?,
            None => f64::NAN,
        };
        scores.push((lambda, ssd));
        if best.as_ref().is_none_or(|b| ssd < b.1) {
            best = Some((lambda, ssd, out));
        }
    }
    let (best_lambda, _, best) = best.expect("at least one weight");
    Ok(BaselineSearch { scores, best_lambda, best })
}

/// Writes the simulated sinogram next to the other artifacts.
pub fn write_measurements(dir: &Path, data: &Prepared) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let p = dir.join("sinogram.csv");
    write_sinogram_csv(&p, &data.sinogram)?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_spec() {
        let text = "[data]\ntemplate = disk\nm = 32\nangles = 6\n[model]\nlambda1 = 0.1, 0.2\nsource = l2\n[output]\ndir = res\n";
        let s = ExperimentSpec::parse(text, Path::new("/base")).unwrap();
        assert_eq!(s.data.template, ImageSource::Builtin(Phantom::Disk));
        assert_eq!(s.data.m, 32);
        assert_eq!(s.objective.lambda1, [0.1, 0.2, 0.0]);
        assert_eq!(s.output_dir, PathBuf::from("/base/res"));
        assert_eq!(ExperimentSpec::parse("[data]\ntemplate = t.img\n", Path::new("d")).unwrap().data.template, ImageSource::File("d/t.img".into()));
    }

    #[test]
    fn parse_errors_carry_lines() {
        let bad = |t: &str| match ExperimentSpec::parse(t, Path::new(".")) {
            Err(Error::Parse { line, .. }) => line,
            other => panic!("{other:?}"),
        };
        assert_eq!(bad("[data]\nm = 64\nbogus = 1\n"), 3);
        assert_eq!(bad("[model]\n\nlambda2 = abc\n"), 3);
        assert_eq!(bad("[model]\nregularizer = fourth\n"), 2);
        assert_eq!(bad("[data]\nraw = x\n"), 2);
    }
}
