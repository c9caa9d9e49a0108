//! Inertial proximal alternating linearized minimization over `(v, z)` and
//! a Gauss-Newton refinement of the velocity.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::functionals::{DataTerm, ForwardOperator, Objective, ObjectiveConfig, ObjectiveParts, SourceReg};
use crate::grid::{ScalarField, VelocityField};
use crate::prox::{pcg, prox_l2_source, prox_quadratic, prox_tv, SpectralSolver};

/// Step-size rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepMode {
    /// `sigma = (1 + 2 alpha) / (2 (1 - alpha)) L` with constant `alpha`.
    Guaranteed,
    /// `sigma = L` with `alpha_k = (k - 1) / (k + 2)`.
    #[default]
    Heuristic,
}

impl std::str::FromStr for StepMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "guaranteed" => Ok(StepMode::Guaranteed),
            "heuristic" => Ok(StepMode::Heuristic),
            other => Err(Error::invalid(format!("unknown step mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpalmConfig {
    pub mode: StepMode,
    pub max_iter: usize,
    /// Stop once the relative objective change stays below this for
    /// `patience` consecutive iterations.
    pub rel_tol: f64,
    pub patience: usize,
    pub initial_l1: f64,
    /// Inertia of guaranteed mode; must lie in `[0, 0.5)`.
    pub guaranteed_alpha: f64,
    /// Overrides the inertia schedule of either mode.
    pub fixed_alpha: Option<f64>,
    /// Upper bound on backtracked Lipschitz estimates.
    pub max_lipschitz: f64,
    pub gauss_newton: bool,
    /// Tab-separated iteration log.
    pub log: Option<PathBuf>,
}

impl Default for IpalmConfig {
    fn default() -> Self {
        Self {
            mode: StepMode::Heuristic,
            max_iter: 200,
            rel_tol: 1e-6,
            patience: 5,
            initial_l1: 1.0,
            guaranteed_alpha: 0.4,
            fixed_alpha: None,
            max_lipschitz: 1e12,
            gauss_newton: true,
            log: None,
        }
    }
}

impl IpalmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.guaranteed_alpha) {
            return Err(Error::invalid("guaranteed-mode inertia must lie in [0, 0.5)"));
        }
        if let Some(a) = self.fixed_alpha {
            if !(0.0..1.0).contains(&a) || (self.mode == StepMode::Guaranteed && a >= 0.5) {
                return Err(Error::invalid("fixed inertia out of range"));
            }
        }
        if !(self.initial_l1 > 0.0) || !(self.rel_tol >= 0.0) {
            return Err(Error::invalid("initial Lipschitz estimate must be positive"));
        }
        Ok(())
    }

    /// Inertia used in iteration `k >= 1`.
    pub fn alpha(&self, k: usize) -> f64 {
        if let Some(a) = self.fixed_alpha {
            return a;
        }
        match self.mode {
            StepMode::Guaranteed => self.guaranteed_alpha,
            StepMode::Heuristic => (k as f64 - 1.0) / (k as f64 + 2.0),
        }
    }

    /// Ratio `sigma / L` for inertia `alpha`.
    pub fn step_factor(&self, alpha: f64) -> f64 {
        match self.mode {
            StepMode::Guaranteed => (1.0 + 2.0 * alpha) / (2.0 * (1.0 - alpha)),
            StepMode::Heuristic => 1.0,
        }
    }
}

/// One iteration of the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    pub j: f64,
    pub parts: ObjectiveParts,
    /// Lipschitz estimates used for the accepted steps.
    pub l1: f64,
    pub l2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub alpha: f64,
    pub bt_count: usize,
    /// Largest relative residual of the quadratic prox solves.
    pub quad_residual: f64,
    /// Primal-dual gap of the source prox (0 for the closed form).
    pub tv_gap: f64,
    pub prox_warning: bool,
    /// `sigma1 ||v+ - vbar|| + sigma2 ||z+ - zbar||`.
    pub stationarity: f64,
}

/// Internal state of the iteration.
#[derive(Debug, Clone)]
pub struct IpalmState {
    pub v: Vec<f64>,
    pub v_prev: Vec<f64>,
    pub z: Vec<f64>,
    pub z_prev: Vec<f64>,
    pub l1: f64,
    pub l2: f64,
    pub k: usize,
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Tolerance,
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct IpalmOutcome {
    pub v: VelocityField,
    pub z: ScalarField,
    pub r: ScalarField,
    pub initial: ObjectiveParts,
    pub records: Vec<IterRecord>,
    pub stop: StopReason,
}

impl IpalmOutcome {
    pub fn final_parts(&self) -> ObjectiveParts {
        self.records.last().map_or(self.initial, |r| r.parts)
    }
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn extrapolate(x: &[f64], prev: &[f64], alpha: f64) -> Vec<f64> {
    x.iter().zip(prev).map(|(a, b)| a + alpha * (a - b)).collect()
}

/// Rounding allowance in descent-lemma comparisons.
fn slack(h: f64) -> f64 {
    1e-14 * h.abs()
}

struct Log {
    out: Option<BufWriter<File>>,
}

impl Log {
    fn open(path: &Option<PathBuf>) -> Result<Self> {
        let out = match path {
            Some(p) => {
                let mut w = BufWriter::new(File::create(p)?);
                writeln!(w, "iter\tJ\tdata\te1\te2\tL1\talpha\tbt_count")?;
                Some(w)
            }
            None => None,
        };
        Ok(Self { out })
    }

    fn record(&mut self, r: &IterRecord) -> Result<()> {
        if let Some(w) = &mut self.out {
            if r.prox_warning {
                writeln!(w, "# iter {}: source prox stopped at gap {:e}", r.iter, r.tv_gap)?;
            }
            writeln!(
                w,
                "{}\t{:.12e}\t{:.12e}\t{:.12e}\t{:.12e}\t{:.6e}\t{:.6}\t{}",
                r.iter,
                r.j,
                r.parts.data,
                r.parts.e1_weighted(),
                r.parts.e2,
                r.l1,
                r.alpha,
                r.bt_count
            )?;
        }
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        if let Some(w) = &mut self.out {
            w.flush()?;
        }
        Ok(())
    }
}

fn dump_iterate(log: &Option<PathBuf>, v: &[f64], z: &[f64]) -> String {
    let Some(p) = log else { return String::from("no dump written") };
    let path = p.with_extension("blowup.txt");
    let body = format!(
        "v {}\nz {}\n",
        v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" "),
        z.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ")
    );
    match std::fs::write(&path, body) {
        Ok(()) => format!("iterate dumped to {}", path.display()),
        Err(e) => format!("iterate dump failed: {e}"),
    }
}

/// Minimizes the objective over `(v, z)` starting from `init` (zeros if
/// `None`).
pub fn ipalm_solve(
    template: &ScalarField,
    data: &[f64],
    op: &dyn ForwardOperator,
    cfg_obj: &ObjectiveConfig,
    cfg: &IpalmConfig,
    init: Option<(&VelocityField, &ScalarField)>,
) -> Result<IpalmOutcome> {
    let obj = Objective::new(template, op, data, cfg_obj)?;
    ipalm_run(&obj, cfg, init)
}

/// [`ipalm_solve`] on a prepared objective.
pub fn ipalm_run(obj: &Objective, cfg: &IpalmConfig, init: Option<(&VelocityField, &ScalarField)>) -> Result<IpalmOutcome> {
    cfg.validate()?;
    let grid = *obj.grid();
    let ocfg = obj.config().clone();
    let (v0, z0) = match init {
        Some((v, z)) => {
            if *v.grid() != grid || z.grid().m() != grid.m() || z.grid().dim() != grid.dim() {
                return Err(Error::invalid("initial iterate does not match the objective grid"));
            }
            (v.values().to_vec(), z.values().to_vec())
        }
        None => (vec![0.0; grid.velocity_len()], vec![0.0; grid.num_cells()]),
    };
    let l2_fixed = match ocfg.data_term {
        DataTerm::Ssd => Some(obj.operator().quadrature_weight() * obj.operator().opnorm_ktk()),
        DataTerm::Ncc => None,
    };
    let initial = obj.parts(&v0, &z0)?;
    let mut st = IpalmState {
        v_prev: v0.clone(),
        v: v0,
        z_prev: z0.clone(),
        z: z0,
        l1: cfg.initial_l1,
        l2: l2_fixed.unwrap_or(1.0),
        k: 0,
        history: vec![initial.total()],
    };
    let mut log = Log::open(&cfg.log)?;
    let mut records = Vec::new();
    let mut tv_dual: Option<Vec<f64>> = None;
    let mut quiet = 0;
    let shape = grid.shape();
    let eta = ocfg.backtrack;
    let lam1 = ocfg.lambda1;

    let stop = loop {
        if st.k >= cfg.max_iter {
            break StopReason::MaxIter;
        }
        st.k += 1;
        let k = st.k;
        let alpha = cfg.alpha(k);
        let factor = cfg.step_factor(alpha);
        let mut bt_count = 0;
        let mut quad_residual: f64 = 0.0;

        // velocity block
        let vbar = extrapolate(&st.v, &st.v_prev, alpha);
        let at_vbar = obj.smooth(&vbar, &st.z)?;
        let gv = obj.grad_v(&at_vbar)?;
        let (v_new, l1_used, sigma1) = loop {
            let sigma1 = factor * st.l1;
            let w: Vec<f64> = vbar.iter().zip(&gv).map(|(a, g)| a - g / sigma1).collect();
            let qp = prox_quadratic(&w, 1.0 / sigma1, obj.reg(), &lam1, ocfg.pcg_tol, ocfg.pcg_max_iter)?;
            quad_residual = quad_residual.max(qp.rel_residual);
            let d: Vec<f64> = qp.x.iter().zip(&vbar).map(|(a, b)| a - b).collect();
            let bound = at_vbar.data + dot(&gv, &d) + 0.5 * st.l1 * dot(&d, &d);
            let accepted = match obj.smooth_value(&qp.x, &st.z) {
                Ok(hv) => hv <= bound + slack(bound),
                Err(Error::NumericalBlowup(_)) => false,
                Err(e) => return Err(e),
            };
            if accepted {
                break (qp.x, st.l1, sigma1);
            }
            bt_count += 1;
            st.l1 *= eta;
            if st.l1 > cfg.max_lipschitz {
                return Err(Error::Convergence { what: "velocity backtracking".into(), residual: st.l1 });
            }
        };
        st.l1 = (l1_used / eta).max(f64::MIN_POSITIVE);

        // source block
        let zbar = extrapolate(&st.z, &st.z_prev, alpha);
        let at_zbar = obj.smooth(&v_new, &zbar)?;
        let gz = obj.grad_z(&at_zbar);
        let mut tv_gap;
        let mut prox_warning = false;
        let (z_new, l2_used, sigma2) = loop {
            let sigma2 = factor * st.l2;
            let w: Vec<f64> = zbar.iter().zip(&gz).map(|(a, g)| a - g / sigma2).collect();
            let weight = ocfg.lambda2 / sigma2;
            let zn = match ocfg.source_reg {
                SourceReg::L2 => {
                    tv_gap = 0.0;
                    prox_l2_source(&w, weight, grid.cell_volume())?
                }
                SourceReg::Tv => {
                    let mut tol = ocfg.pdhg_tol;
                    let mut iters = ocfg.pdhg_max_iter;
                    let mut tries = 0;
                    loop {
                        let out = prox_tv(&w, &shape, grid.h(), weight, tol, iters, tv_dual.as_deref())?;
                        let step2 = out.x.iter().zip(&zbar).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                        tv_dual = Some(out.dual);
                        tv_gap = out.gap;
                        tries += 1;
                        if out.gap <= 0.25 * step2 || out.gap == 0.0 {
                            break out.x;
                        }
                        if tries >= 4 {
                            prox_warning = true;
                            break out.x;
                        }
                        tol *= 1e-2;
                        iters *= 2;
                    }
                }
            };
            match l2_fixed {
                Some(_) => break (zn, st.l2, sigma2),
                None => {
                    let d: Vec<f64> = zn.iter().zip(&zbar).map(|(a, b)| a - b).collect();
                    let bound = at_zbar.data + dot(&gz, &d) + 0.5 * st.l2 * dot(&d, &d);
                    if obj.smooth_value(&v_new, &zn)? <= bound + slack(bound) {
                        break (zn, st.l2, sigma2);
                    }
                    bt_count += 1;
                    st.l2 *= eta;
                    if st.l2 > cfg.max_lipschitz {
                        return Err(Error::Convergence { what: "source backtracking".into(), residual: st.l2 });
                    }
                }
            }
        };
        if l2_fixed.is_none() {
            st.l2 = (l2_used / eta).max(f64::MIN_POSITIVE);
        }

        let stationarity = sigma1 * norm_diff(&v_new, &vbar) + sigma2 * norm_diff(&z_new, &zbar);
        st.v_prev = std::mem::replace(&mut st.v, v_new);
        st.z_prev = std::mem::replace(&mut st.z, z_new);
        let parts = match obj.parts(&st.v, &st.z) {
            Ok(p) if p.total().is_finite() => p,
            Ok(_) | Err(Error::NumericalBlowup(_)) => {
                let note = dump_iterate(&cfg.log, &st.v, &st.z);
                return Err(Error::NumericalBlowup(format!("objective not finite at iteration {k}; {note}")));
            }
            Err(e) => return Err(e),
        };
        let j = parts.total();
        let prev = *st.history.last().unwrap_or(&j);
        st.history.push(j);
        let rec = IterRecord {
            iter: k,
            j,
            parts,
            l1: l1_used,
            l2: l2_used,
            sigma1,
            sigma2,
            alpha,
            bt_count,
            quad_residual,
            tv_gap,
            prox_warning,
            stationarity,
        };
        log.record(&rec)?;
        records.push(rec);

        let change = (prev - j).abs() / prev.abs().max(f64::MIN_POSITIVE);
        quiet = if change < cfg.rel_tol { quiet + 1 } else { 0 };
        if quiet >= cfg.patience {
            break StopReason::Tolerance;
        }
    };
    log.finish()?;

    let v = VelocityField::new(grid, st.v)?;
    let zf = ScalarField::new(*obj.template().grid(), st.z)?;
    let eval = obj.smooth(v.values(), zf.values())?;
    let r = ScalarField::new(*obj.template().grid(), eval.r)?;
    Ok(IpalmOutcome { v, z: zf, r, initial, records, stop })
}

// ---------------------------------------------------------------------------
// Gauss-Newton refinement

#[derive(Debug, Clone, PartialEq)]
pub struct GaussNewtonConfig {
    pub max_iter: usize,
    /// Relative residual of the inner CG solve.
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    /// Armijo slope factor.
    pub armijo: f64,
    pub max_halvings: usize,
    /// Stop when the relative objective decrease falls below this.
    pub rel_tol: f64,
}

impl Default for GaussNewtonConfig {
    fn default() -> Self {
        Self { max_iter: 10, cg_tol: 1e-2, cg_max_iter: 20, armijo: 1e-4, max_halvings: 10, rel_tol: 1e-6 }
    }
}

#[derive(Debug, Clone)]
pub struct GaussNewtonOutcome {
    pub v: VelocityField,
    pub objective_before: f64,
    pub objective_after: f64,
    pub iterations: usize,
    /// Set when a line search found no acceptable step.
    pub line_search_failed: bool,
}

/// `F(v) = data(v, z) + sum_b lambda_b E1_b(v)` for fixed `z`.
fn gn_objective(obj: &Objective, v: &[f64], z: &[f64]) -> Result<f64> {
    Ok(obj.smooth_value(v, z)? + obj.g1(v)?)
}

/// Gradient of `F` and the Gauss-Newton direction solving
/// `(w J^T J + h_t h^d sum_b lambda_b B_b^T B_b) d = -grad F` by
/// preconditioned CG.
pub fn gauss_newton_direction(
    obj: &Objective,
    v: &[f64],
    z: &[f64],
    cg_tol: f64,
    cg_max_iter: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if obj.config().data_term != DataTerm::Ssd {
        return Err(Error::invalid("Gauss-Newton refinement needs the SSD data term"));
    }
    let lam = obj.config().lambda1;
    let q = obj.reg().quadrature();
    let w = obj.operator().quadrature_weight();
    let eval = obj.smooth(v, z)?;
    let mut grad = obj.grad_v(&eval)?;
    let reg_grad = obj.reg().normal_apply(v, &lam);
    for (g, r) in grad.iter_mut().zip(&reg_grad) {
        *g += q * r;
    }
    let apply = |x: &[f64]| -> Vec<f64> {
        let jx = obj.jacobian_apply(&eval, x).expect("velocity length checked");
        let jtjx = obj.jacobian_transpose_apply(&eval, &jx).expect("image length checked");
        let bx = obj.reg().normal_apply(x, &lam);
        jtjx.iter().zip(&bx).map(|(a, b)| w * a + q * b).collect()
    };
    let gnorm2 = dot(&grad, &grad);
    let rayleigh = if gnorm2 > 0.0 {
        let jg = obj.jacobian_apply(&eval, &grad)?;
        w * dot(&jg, &jg) / gnorm2
    } else {
        0.0
    };
    // regularizer part inverted exactly, data part replaced by its Rayleigh
    // quotient along the gradient
    let spectral = SpectralSolver::new(obj.reg(), &lam, rayleigh.max(f64::MIN_POSITIVE), q);
    let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
    let precond = |r: &[f64]| spectral.solve(r);
    let out = pcg(apply, precond, &rhs, None, cg_tol, cg_max_iter);
    Ok((grad, out.x))
}

/// Refines `v` for fixed `z` by Gauss-Newton steps with an Armijo line
/// search. Never returns a velocity with a larger objective than `v0`.
pub fn gauss_newton_refine_v(
    template: &ScalarField,
    data: &[f64],
    op: &dyn ForwardOperator,
    z: &ScalarField,
    v0: &VelocityField,
    cfg_obj: &ObjectiveConfig,
    cfg: &GaussNewtonConfig,
) -> Result<GaussNewtonOutcome> {
    let obj = Objective::new(template, op, data, cfg_obj)?;
    gauss_newton_run(&obj, z, v0, cfg)
}

/// [`gauss_newton_refine_v`] on a prepared objective.
pub fn gauss_newton_run(obj: &Objective, z: &ScalarField, v0: &VelocityField, cfg: &GaussNewtonConfig) -> Result<GaussNewtonOutcome> {
    if v0.grid() != obj.grid() {
        return Err(Error::invalid("velocity does not match the objective grid"));
    }
    let zv = z.values();
    let mut v = v0.values().to_vec();
    let f0 = gn_objective(obj, &v, zv)?;
    let mut f = f0;
    let mut failed = false;
    let mut it = 0;
    while it < cfg.max_iter {
        let (grad, d) = gauss_newton_direction(obj, &v, zv, cfg.cg_tol, cfg.cg_max_iter)?;
        let slope = dot(&grad, &d);
        if !(slope < 0.0) {
            break;
        }
        it += 1;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let trial: Vec<f64> = v.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            match gn_objective(obj, &trial, zv) {
                Ok(ft) if ft <= f + cfg.armijo * t * slope => {
                    accepted = Some((trial, ft));
                    break;
                }
                Ok(_) | Err(Error::NumericalBlowup(_)) => {}
                Err(e) => return Err(e),
            }
            t *= 0.5;
        }
        let Some((trial, ft)) = accepted else {
            failed = true;
            break;
        };
        let decrease = (f - ft) / f.abs().max(f64::MIN_POSITIVE);
        v = trial;
        f = ft;
        if decrease < cfg.rel_tol {
            break;
        }
    }
    Ok(GaussNewtonOutcome {
        v: VelocityField::new(*obj.grid(), v)?,
        objective_before: f0,
        objective_after: f,
        iterations: it,
        line_search_failed: failed,
    })
}
