//! Epsilon sweeps comparing fine-scale and homogenised solutions, and numerical experiments on
//! weak convergence of oscillating functions and multiscale convergence of gradients.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::cell::{solve_local, CellError, CellLayout, CellSolution, MacroPoint, SolverSettings};
use crate::config::{Config, ConfigError, MeshPolicy, ModeChoice};
use crate::evolution::{solve_direct, solve_homogenized, EpsilonFlux, EpsilonInstance, MeshSpec, SolutionField, SolveError};
use crate::expr::{Expr, Point};
use crate::flux::{Flux, FluxModel};
use crate::grid::PeriodicGrid;
use crate::homogenize::{tabulate, Axis, HomError, HomogenizedFlux, MacroFlux, MacroLattice};
use crate::scales::{classify, Regime, RegimeClassification, ScaleError, ScalePair};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Scale(#[from] ScaleError),
    #[error(transparent)]
    Cell(#[from] CellError),
    #[error(transparent)]
    Hom(#[from] HomError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("mesh budget exceeded: {0}")]
    Budget(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl HarnessError {
    pub fn is_non_convergence(&self) -> bool {
        matches!(
            self,
            HarnessError::Cell(CellError::NonConvergence { .. } | CellError::PeriodNonConvergence { .. })
                | HarnessError::Hom(HomError::Cell { .. })
                | HarnessError::Solve(SolveError::NonConvergence { .. })
                | HarnessError::Solve(SolveError::Flux(HomError::Cell { .. }))
        )
    }

    /// The scale pair falls outside the supported homogenisation scope.
    pub fn is_out_of_scope(&self) -> bool {
        matches!(
            self,
            HarnessError::Scale(
                ScaleError::NotJointlyWellSeparated(_) | ScaleError::OutsideScope(_) | ScaleError::SpatialCount(_)
            )
        )
    }

    pub fn module(&self) -> &'static str {
        match self {
            HarnessError::Config(_) => "cli",
            HarnessError::Scale(_) => "scales",
            HarnessError::Cell(_) => "cellsolver",
            HarnessError::Hom(_) => "homogenizer",
            HarnessError::Solve(_) => "macrosolver",
            HarnessError::Budget(_) | HarnessError::Unsupported(_) => "harness",
        }
    }
}

/// A validated configuration with the flux built and the regime classified.
#[derive(Clone, Debug)]
pub struct Setup {
    pub config: Config,
    pub flux: Arc<FluxModel>,
    pub classification: RegimeClassification,
    pub grid: PeriodicGrid,
    pub cell: SolverSettings,
    pub macro_step: SolverSettings,
}

impl Setup {
    pub fn new(config: Config) -> Result<Setup, HarnessError> {
        let config = config.resolve();
        config.validate()?;
        let classification = classify(&config.scales)?;
        let flux = Arc::new(config.build_flux()?);
        Ok(Setup {
            grid: config.grid()?,
            cell: config.cell_settings(),
            macro_step: config.macro_settings(),
            flux,
            classification,
            config,
        })
    }

    /// Fine mesh of the direct solve at `eps` under the mesh policy.
    pub fn fine_mesh(&self, eps: f64) -> Result<(EpsilonInstance, MeshSpec), HarnessError> {
        let inst = EpsilonInstance::new(&self.config.scales, eps)?;
        let mesh = policy_mesh(&inst, self.config.problem.t_final, &self.config.mesh)?;
        Ok((inst, mesh))
    }

    /// The homogenised flux in the configured mode.
    pub fn homogenized(&self) -> Result<HomogenizedFlux, HarnessError> {
        let hom = HomogenizedFlux::new(self.flux.clone(), self.classification, self.grid, self.cell)?;
        let tabulated = match self.config.study.homogenized_mode {
            ModeChoice::Auto => !self.flux.is_linear(),
            ModeChoice::OnDemand => false,
            ModeChoice::Tabulated => true,
        };
        if !tabulated {
            return Ok(hom);
        }
        let r = self.config.study.xi_max.unwrap_or(4.0);
        let count = self.config.study.xi_count.unwrap_or(33);
        let d = self.config.dim();
        Ok(tabulate(&hom, &vec![Axis::new(-r, r, count); d], &MacroLattice::single(d))?)
    }
}

fn policy_mesh(inst: &EpsilonInstance, t_final: f64, policy: &MeshPolicy) -> Result<MeshSpec, HarnessError> {
    let need = inst.required_mesh(t_final, policy.rho);
    let mesh = MeshSpec { nx: need.nx.max(policy.nx_min), nt: need.nt.max(policy.nt_min) };
    if mesh.nx > policy.nx_max || mesh.nt > policy.nt_max {
        return Err(HarnessError::Budget(format!(
            "eps = {} needs nx = {}, nt = {} (limits {}, {})",
            inst.eps, mesh.nx, mesh.nt, policy.nx_max, policy.nt_max
        )));
    }
    Ok(mesh)
}

/// Round-off floor below which an error counts as zero in the verdicts.
const FLOOR: f64 = 1e-14;

/// Every entry below `slack` times its predecessor (entries at the round-off floor pass).
pub fn decreasing(values: &[f64], slack: f64) -> bool {
    values.windows(2).all(|w| w[1] < slack * w[0] || w[1] <= FLOOR)
}

/// The last entry is below half the first.
pub fn halved(values: &[f64]) -> bool {
    match (values.first(), values.last()) {
        (Some(&a), Some(&b)) => b < 0.5 * a || b <= FLOOR,
        _ => false,
    }
}

/// `(max/min < factor and no step-by-step growth beyond slack, max/min)`.
pub fn bounded_without_growth(values: &[f64], factor: f64, slack: f64) -> (bool, f64) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let ratio = if max == 0.0 { 1.0 } else { max / min };
    let growth = values.len() >= 2 && values.windows(2).all(|w| w[1] > slack * w[0]);
    (ratio < factor && !growth && ratio.is_finite(), ratio)
}

/// Factor bounding the spread of the a priori norms over the sweep.
pub const BOUND_FACTOR: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub eps: f64,
    pub nx: usize,
    pub nt: usize,
    pub l2_error: f64,
    pub flux_weak_error: f64,
    pub l2_space_time: f64,
    pub l2_h01: f64,
    pub dual_norm_estimate: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    fn new(name: &str, passed: bool, detail: String) -> Verdict {
        Verdict { name: name.to_string(), passed, detail }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub valid: bool,
    pub error: Option<String>,
    pub regime: RegimeClassification,
    pub flux: String,
    pub homogenized: String,
    pub mesh_policy: MeshPolicy,
    pub homogenized_mesh: Option<MeshSpec>,
    pub slack: f64,
    pub rows: Vec<ReportRow>,
    pub verdicts: Vec<Verdict>,
}

impl ConvergenceReport {
    pub fn passed(&self) -> bool {
        self.valid && self.verdicts.iter().all(|v| v.passed)
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    pub fn column(&self, f: impl Fn(&ReportRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }
}

/// Result of a sweep: the report and the computed fields.
#[derive(Clone, Debug)]
pub struct StudyOutcome {
    pub report: ConvergenceReport,
    pub direct: Vec<SolutionField>,
    pub homogenized: SolutionField,
}

/// A failed sweep with whatever was computed.
#[derive(Clone, Debug, Error)]
#[error("{error}")]
pub struct StudyFailure {
    pub error: HarnessError,
    pub partial: Option<Box<ConvergenceReport>>,
}

impl From<HarnessError> for StudyFailure {
    fn from(error: HarnessError) -> Self {
        StudyFailure { error, partial: None }
    }
}

/// `int_{Omega_T} flux(Du) . psi` by the midpoint rule over cells and the implicit Euler levels.
pub fn flux_functional(field: &SolutionField, flux: &dyn MacroFlux, psi: &[Expr]) -> Result<f64, HomError> {
    let mesh = field.space_mesh();
    let d = field.dim;
    let dt = field.dt();
    let w = mesh.sample_weight() * mesh.volume() * dt;
    let centres: Vec<[f64; 2]> = (0..mesh.cells()).map(|c| mesh.cell_centre(c)).collect();
    let mut total = 0.0;
    let mut a = [0.0; 2];
    for n in 1..=field.mesh.nt {
        let t = n as f64 * dt;
        let u = field.level(n);
        for (cell, c) in centres.iter().enumerate() {
            let x = &c[..d];
            let p: Vec<f64> = psi.iter().map(|e| e.eval_macro(x, t)).collect();
            let g = mesh.cell_gradients(u, cell);
            for gq in g.iter().take(mesh.samples_per_cell()) {
                flux.eval_into(x, t, &gq[..d], &mut a[..d])?;
                total += w * a[..d].iter().zip(&p).map(|(ai, pi)| ai * pi).sum::<f64>();
            }
        }
    }
    Ok(total)
}

fn direct_solves(setup: &Setup) -> Vec<Result<(EpsilonInstance, SolutionField), HarnessError>> {
    let problem = &setup.config.problem;
    let rho = setup.config.mesh.rho;
    setup
        .config
        .eps()
        .par_iter()
        .map(|&eps| {
            let (inst, mesh) = setup.fine_mesh(eps)?;
            let field = solve_direct(problem, setup.flux.as_ref(), &inst, mesh, &setup.macro_step, rho)?;
            Ok((inst, field))
        })
        .collect()
}

fn homogenized_mesh(setup: &Setup) -> Result<MeshSpec, HarnessError> {
    let mut mesh = MeshSpec { nx: setup.config.mesh.nx_min, nt: setup.config.mesh.nt_min };
    for eps in setup.config.eps() {
        let (_, m) = setup.fine_mesh(eps)?;
        mesh.nx = mesh.nx.max(m.nx);
        mesh.nt = mesh.nt.max(m.nt);
    }
    Ok(mesh)
}

/// Runs the epsilon sweep of a configuration.
pub fn run_convergence_study(config: &Config) -> Result<StudyOutcome, StudyFailure> {
    let setup = Setup::new(config.clone())?;
    run_study(&setup)
}

pub fn run_study(setup: &Setup) -> Result<StudyOutcome, StudyFailure> {
    let cfg = &setup.config;
    let psi = cfg.study.psi.clone().unwrap_or_default();
    let slack = cfg.slack();
    let hom_flux = setup.homogenized()?;
    let mut report = ConvergenceReport {
        valid: false,
        error: None,
        regime: setup.classification,
        flux: setup.flux.describe(),
        homogenized: hom_flux.describe(),
        mesh_policy: cfg.mesh,
        homogenized_mesh: None,
        slack,
        rows: Vec::new(),
        verdicts: Vec::new(),
    };
    let fail = |mut report: ConvergenceReport, error: HarnessError| {
        report.error = Some(error.to_string());
        StudyFailure { error, partial: Some(Box::new(report)) }
    };

    let hmesh = match homogenized_mesh(setup) {
        Ok(m) => m,
        Err(e) => return Err(fail(report, e)),
    };
    report.homogenized_mesh = Some(hmesh);
    let (hom, direct) = rayon::join(
        || -> Result<(SolutionField, f64), HarnessError> {
            let u = solve_homogenized(&cfg.problem, &hom_flux, hmesh, &setup.macro_step)?;
            let functional = flux_functional(&u, &hom_flux, &psi)?;
            Ok((u, functional))
        },
        || direct_solves(setup),
    );
    let mut fields = Vec::new();
    let mut first_error = None;
    let mut rows = Vec::new();
    for r in direct {
        match r {
            Ok((inst, field)) => {
                rows.push((inst, field.norms, field.mesh, field.iterations));
                fields.push(field);
            }
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    let (hom_field, hom_functional) = match hom {
        Ok(v) => v,
        Err(e) => return Err(fail(report, e)),
    };
    for ((inst, norms, mesh, iterations), field) in rows.iter().zip(&fields) {
        let a = match EpsilonFlux::new(setup.flux.as_ref(), inst) {
            Ok(a) => a,
            Err(e) => return Err(fail(report, e.into())),
        };
        let functional = match flux_functional(field, &a, &psi) {
            Ok(v) => v,
            Err(e) => return Err(fail(report, e.into())),
        };
        let reference = hom_field.resample(field.mesh);
        report.rows.push(ReportRow {
            eps: inst.eps,
            nx: mesh.nx,
            nt: mesh.nt,
            l2_error: field.l2_distance(&reference),
            flux_weak_error: (functional - hom_functional).abs(),
            l2_space_time: norms.l2_space_time,
            l2_h01: norms.l2_h01,
            dual_norm_estimate: norms.dual_norm_estimate,
            iterations: *iterations,
        });
    }
    if let Some(e) = first_error {
        return Err(fail(report, e));
    }
    report.valid = true;
    report.verdicts = verdicts(&report, slack);
    Ok(StudyOutcome { report, direct: fields, homogenized: hom_field })
}

fn verdicts(report: &ConvergenceReport, slack: f64) -> Vec<Verdict> {
    let l2 = report.column(|r| r.l2_error);
    let fw = report.column(|r| r.flux_weak_error);
    let h1 = report.column(|r| r.l2_h01);
    let dual = report.column(|r| r.dual_norm_estimate);
    let (h1_ok, h1_ratio) = bounded_without_growth(&h1, BOUND_FACTOR, slack);
    let (dual_ok, dual_ratio) = bounded_without_growth(&dual, BOUND_FACTOR, slack);
    vec![
        Verdict::new("l2_error_decreasing", decreasing(&l2, slack), format!("{l2:?}")),
        Verdict::new("l2_error_halved", halved(&l2), format!("first {:e}, last {:e}", l2[0], l2[l2.len() - 1])),
        Verdict::new("flux_weak_error_decreasing", decreasing(&fw, slack), format!("{fw:?}")),
        Verdict::new("a_priori_h01_bound", h1_ok, format!("max/min = {h1_ratio}")),
        Verdict::new("a_priori_dual_bound", dual_ok, format!("max/min = {dual_ratio}")),
    ]
}

// composite 4-point Gauss-Legendre on [0, 1]
const GL_NODES: [f64; 4] = [-0.861_136_311_594_052_6, -0.339_981_043_584_856_3, 0.339_981_043_584_856_3, 0.861_136_311_594_052_6];
const GL_WEIGHTS: [f64; 4] = [0.347_854_845_137_453_9, 0.652_145_154_862_546_1, 0.652_145_154_862_546_1, 0.347_854_845_137_453_9];

fn gauss_rule(panels: usize, length: f64) -> Vec<(f64, f64)> {
    let h = length / panels as f64;
    (0..panels)
        .flat_map(|p| {
            GL_NODES.iter().zip(&GL_WEIGHTS).map(move |(x, w)| (h * (p as f64 + 0.5 + 0.5 * x), 0.5 * h * w))
        })
        .collect()
}

/// Tensor-product nodes `(point, weight)` over a box of the given side lengths.
fn tensor(rules: &[Vec<(f64, f64)>]) -> Vec<(Vec<f64>, f64)> {
    let mut out = vec![(Vec::new(), 1.0)];
    for rule in rules {
        out = out
            .iter()
            .flat_map(|(p, w)| {
                rule.iter().map(move |(x, v)| {
                    let mut p = p.clone();
                    p.push(*x);
                    (p, w * v)
                })
            })
            .collect();
    }
    out
}

fn midpoint(n: usize) -> Vec<(f64, f64)> {
    (0..n).map(|i| ((i as f64 + 0.5) / n as f64, 1.0 / n as f64)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeakMeanRow {
    pub eps: f64,
    pub nx: usize,
    pub nt: usize,
    pub integral: f64,
    pub limit: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeakMeanReport {
    pub v: String,
    pub phi: String,
    pub rows: Vec<WeakMeanRow>,
    pub decreasing: bool,
}

/// Midpoint quadrature of `v(x, t, x/eps_1, t/eps'_1, ..) phi(x, t)` over `(0,1)^N x (0,T)`.
fn oscillating_integral(v: &Expr, phi: &Expr, inst: &EpsilonInstance, dim: usize, t_final: f64, mesh: MeshSpec) -> f64 {
    let hx = 1.0 / mesh.nx as f64;
    let dt = t_final / mesh.nt as f64;
    let e = inst.spatial[0];
    let cells = mesh.nx.pow(dim as u32);
    let rows: Vec<f64> = (0..mesh.nt)
        .into_par_iter()
        .map(|n| {
            let t = (n as f64 + 0.5) * dt;
            let s: Vec<f64> = inst.temporal.iter().map(|ej| (t / ej).rem_euclid(1.0)).collect();
            let mut sum = 0.0;
            for c in 0..cells {
                let x: Vec<f64> = if dim == 1 {
                    vec![(c as f64 + 0.5) * hx]
                } else {
                    vec![((c / mesh.nx) as f64 + 0.5) * hx, ((c % mesh.nx) as f64 + 0.5) * hx]
                };
                let y: Vec<f64> = x.iter().map(|xi| (xi / e).rem_euclid(1.0)).collect();
                sum += v.eval(&Point { x: &x, t, y: &y, s: &s }) * phi.eval_macro(&x, t);
            }
            sum
        })
        .collect();
    rows.iter().sum::<f64>() * hx.powi(dim as i32) * dt
}

/// `int int (cell mean of v) phi` by Gauss-Legendre in `(x, t)` and the midpoint rule in the cell.
fn mean_limit(v: &Expr, phi: &Expr, dim: usize, m: usize, t_final: f64) -> f64 {
    let cell_dims = dim + m;
    let n_cell = match cell_dims {
        0..=2 => 32,
        3 => 16,
        _ => 8,
    };
    let cell = tensor(&vec![midpoint(n_cell); cell_dims]);
    let panels = if dim == 1 { 16 } else { 4 };
    let mut rules = vec![gauss_rule(panels, 1.0); dim];
    rules.push(gauss_rule(panels, t_final));
    let outer = tensor(&rules);
    let cell_mean = |x: &[f64], t: f64| -> f64 {
        cell.iter().map(|(z, w)| w * v.eval(&Point { x, t, y: &z[..dim], s: &z[dim..] })).sum()
    };
    let constant = (!v.uses_macro_variables()).then(|| cell_mean(&vec![0.0; dim], 0.0));
    let parts: Vec<f64> = outer
        .par_iter()
        .map(|(p, w)| {
            let (x, t) = (&p[..dim], p[dim]);
            w * constant.unwrap_or_else(|| cell_mean(x, t)) * phi.eval_macro(x, t)
        })
        .collect();
    parts.iter().sum()
}

/// Numerical weak convergence of `v(x, t, x/eps, t/eps')` to its cell mean, tested against `phi`.
pub fn test_weak_mean_convergence(
    v: &Expr,
    pair: &ScalePair,
    eps_list: &[f64],
    phi: &Expr,
    dim: usize,
    t_final: f64,
    policy: &MeshPolicy,
    slack: f64,
) -> Result<WeakMeanReport, HarnessError> {
    crate::scales::check_jointly(pair, crate::scales::SeparationMode::WellSeparated)
        .failure
        .map_or(Ok(()), |f| Err(ScaleError::NotJointlyWellSeparated(f)))?;
    if pair.spatial.len() != 1 {
        return Err(HarnessError::Unsupported("weak-mean test needs a single spatial scale".into()));
    }
    let m = pair.temporal.len();
    v.check_variables(dim, m, true).map_err(|e| ConfigError(e.to_string()))?;
    phi.check_variables(dim, 0, false).map_err(|e| ConfigError(e.to_string()))?;
    let limit = if v.uses_cell_variables() { Some(mean_limit(v, phi, dim, m, t_final)) } else { None };
    let mut rows = Vec::new();
    for &eps in eps_list {
        let inst = EpsilonInstance::new(pair, eps)?;
        let mesh = policy_mesh(&inst, t_final, policy)?;
        let integral = oscillating_integral(v, phi, &inst, dim, t_final, mesh);
        let lim = limit.unwrap_or(integral);
        rows.push(WeakMeanRow { eps, nx: mesh.nx, nt: mesh.nt, integral, limit: lim, error: (integral - lim).abs() });
    }
    let errors: Vec<f64> = rows.iter().map(|r| r.error).collect();
    Ok(WeakMeanReport { v: v.source().into(), phi: phi.source().into(), decreasing: decreasing(&errors, slack), rows })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientRow {
    pub eps: f64,
    pub j: f64,
    pub j_star: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientReport {
    pub chi: String,
    pub theta: String,
    /// `int_{Omega_T} chi du/dx`.
    pub macro_factor: f64,
    /// Cell average of `(1 + dw/dy) theta` with `w` the corrector for unit gradient.
    pub cell_factor: f64,
    pub rows: Vec<GradientRow>,
    pub decreasing: bool,
}

/// Cell average of `(1 + dw/dy) theta(y, s)` over `Y x S` (1D, one temporal scale).
fn corrector_average(setup: &Setup, theta: &Expr) -> Result<f64, HarnessError> {
    let flux = setup.flux.as_ref();
    let regime: Regime = setup.classification.regime;
    let grid = setup.grid;
    let nodes = grid.s_nodes();
    let mesh = grid.mesh();
    let mut cache: HashMap<Vec<u64>, CellSolution> = HashMap::new();
    let mut total = 0.0;
    for (j, &s) in nodes.iter().enumerate() {
        let layout = CellLayout::for_regime(&regime, 1, &[s])?;
        let fixed = if flux.depends_on_s(0) { layout.fixed.clone() } else { vec![0.5; layout.fixed.len()] };
        let key: Vec<u64> = fixed.iter().map(|v| v.to_bits()).collect();
        if !cache.contains_key(&key) {
            let sol = solve_local(flux, &MacroPoint::origin(1), &[1.0], &regime, &fixed, grid, &setup.cell)?;
            cache.insert(key.clone(), sol);
        }
        let sol = &cache[&key];
        let slice = if layout.evolving { j } else { 0 };
        let cells = mesh.cells();
        for c in 0..cells {
            let y = mesh.cell_centre(c)[0];
            let gy = sol.grad_y[slice * cells + c];
            total += (1.0 + gy) * theta.eval(&Point { x: &[], t: 0.0, y: &[y], s: &[s] });
        }
    }
    Ok(total / (nodes.len() * mesh.cells()) as f64)
}

/// `int chi(x, t) theta(x/eps, t/eps') du/dx dx dt` on the field's mesh.
fn gradient_functional(field: &SolutionField, chi: &Expr, theta: Option<(&Expr, &EpsilonInstance)>) -> f64 {
    let mesh = field.space_mesh();
    let dt = field.dt();
    let h = mesh.h();
    let mut total = 0.0;
    for n in 1..=field.mesh.nt {
        let t = n as f64 * dt;
        let u = field.level(n);
        for cell in 0..mesh.cells() {
            let x = mesh.cell_centre(cell)[0];
            let g = mesh.cell_gradients(u, cell)[0][0];
            let mut w = chi.eval_macro(&[x], t);
            if let Some((th, inst)) = theta {
                let y = (x / inst.spatial[0]).rem_euclid(1.0);
                let s = (t / inst.temporal[0]).rem_euclid(1.0);
                w *= th.eval(&Point { x: &[], t: 0.0, y: &[y], s: &[s] });
            }
            total += h * dt * g * w;
        }
    }
    total
}

/// Numerical multiscale convergence of `du_eps/dx` to `du/dx + d u1/dy` against
/// `psi = chi(x, t) theta(y, s)`; 1D linear fluxes with one temporal scale only.
pub fn test_gradient_twoscale(config: &Config) -> Result<GradientReport, HarnessError> {
    let setup = Setup::new(config.clone())?;
    if setup.config.dim() != 1 || setup.config.m() != 1 || !setup.flux.is_linear() {
        return Err(HarnessError::Unsupported("gradient test needs N = 1, m = 1 and a linear flux".into()));
    }
    let hom_flux = setup.homogenized()?;
    let hmesh = homogenized_mesh(&setup)?;
    let hom = solve_homogenized(&setup.config.problem, &hom_flux, hmesh, &setup.macro_step)?;
    let direct: Vec<(EpsilonInstance, SolutionField)> = direct_solves(&setup).into_iter().collect::<Result<_, _>>()?;
    gradient_report(&setup, &hom, &direct)
}

pub fn gradient_report(
    setup: &Setup,
    hom: &SolutionField,
    direct: &[(EpsilonInstance, SolutionField)],
) -> Result<GradientReport, HarnessError> {
    let chi = setup.config.multiscale.chi.clone().unwrap_or_else(|| Expr::constant(1.0));
    let theta = setup.config.multiscale.theta.clone().unwrap_or_else(|| Expr::constant(1.0));
    let macro_factor = gradient_functional(hom, &chi, None);
    let cell_factor = corrector_average(setup, &theta)?;
    let j_star = macro_factor * cell_factor;
    let rows: Vec<GradientRow> = direct
        .iter()
        .map(|(inst, field)| {
            let j = gradient_functional(field, &chi, Some((&theta, inst)));
            GradientRow { eps: inst.eps, j, j_star, error: (j - j_star).abs() }
        })
        .collect();
    let errors: Vec<f64> = rows.iter().map(|r| r.error).collect();
    Ok(GradientReport {
        chi: chi.source().into(),
        theta: theta.source().into(),
        macro_factor,
        cell_factor,
        decreasing: decreasing(&errors, setup.config.slack()),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_helpers() {
        assert!(decreasing(&[1.0, 0.5, 0.51, 0.2], 1.05));
        assert!(!decreasing(&[1.0, 1.2], 1.05));
        assert!(decreasing(&[0.0, 0.0], 1.05));
        assert!(halved(&[1.0, 0.4]));
        assert!(!halved(&[1.0, 0.6]));
        assert!(bounded_without_growth(&[1.0, 1.5, 1.2], 10.0, 1.05).0);
        assert!(!bounded_without_growth(&[1.0, 1.5, 2.0], 10.0, 1.05).0);
        assert!(!bounded_without_growth(&[1.0, 20.0, 2.0], 10.0, 1.05).0);
    }

    #[test]
    fn gauss_rule_integrates_polynomials() {
        let r = gauss_rule(3, 2.0);
        let int: f64 = r.iter().map(|(x, w)| w * x.powi(5)).sum();
        assert!((int - 64.0 / 6.0).abs() < 1e-12);
    }
}
