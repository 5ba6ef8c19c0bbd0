//! Run configuration: JSON with rational exponents as strings. `resolve` fills every default so
//! the resolved form written next to the outputs reproduces the run exactly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cell::SolverSettings;
use crate::evolution::EvolutionProblem;
use crate::expr::Expr;
use crate::flux::{FluxModel, FluxSpec};
use crate::grid::PeriodicGrid;
use crate::scales::ScalePair;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid configuration: {0}")]
pub struct ConfigError(pub String);

fn bad<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshPolicy {
    /// Points per smallest microscale.
    pub rho: f64,
    pub nx_min: usize,
    pub nt_min: usize,
    pub nx_max: usize,
    pub nt_max: usize,
}

impl Default for MeshPolicy {
    fn default() -> Self {
        MeshPolicy { rho: 8.0, nx_min: 64, nt_min: 256, nx_max: 4096, nt_max: 1 << 20 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub ny: Option<usize>,
    pub ns: Option<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Cell residual tolerance.
    pub cell: Option<f64>,
    /// Time-step residual tolerance of the macro solver.
    #[serde(rename = "macro")]
    pub macro_step: Option<f64>,
    pub max_iter: Option<usize>,
    /// Relative slack of the structure checks.
    pub structure: Option<f64>,
    /// Slack factor of the decrease verdicts.
    pub slack: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeChoice {
    /// On demand for linear fluxes, tabulated otherwise.
    #[default]
    Auto,
    OnDemand,
    Tabulated,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySpec {
    /// Vector test field of the flux functional, one expression per component.
    pub psi: Option<Vec<Expr>>,
    #[serde(default)]
    pub homogenized_mode: ModeChoice,
    /// Half-width of the xi lattice of a tabulated homogenised flux.
    pub xi_max: Option<f64>,
    pub xi_count: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiscaleSpec {
    /// Cell-periodic integrand of the weak-mean experiment.
    pub v: Option<Expr>,
    /// Macroscopic weight of the weak-mean experiment.
    pub phi: Option<Expr>,
    /// Macroscopic factor of the gradient test function.
    pub chi: Option<Expr>,
    /// Cell factor of the gradient test function.
    pub theta: Option<Expr>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSpec {
    pub count: Option<usize>,
    pub k_radius: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub problem: EvolutionProblem,
    pub flux: FluxSpec,
    pub scales: ScalePair,
    #[serde(default)]
    pub eps_list: Option<Vec<f64>>,
    #[serde(default)]
    pub mesh: MeshPolicy,
    #[serde(default)]
    pub cell: CellSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub study: StudySpec,
    #[serde(default)]
    pub multiscale: MultiscaleSpec,
    #[serde(default)]
    pub sampler: SamplerSpec,
}

fn expr(src: &str) -> Expr {
    Expr::parse(src).expect("built-in default expression")
}

impl Config {
    pub fn from_json(text: &str) -> Result<Config, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn dim(&self) -> usize {
        self.problem.dim
    }

    pub fn m(&self) -> usize {
        self.scales.temporal.len()
    }

    /// Fills every default.
    pub fn resolve(mut self) -> Config {
        let d = self.dim();
        self.eps_list.get_or_insert_with(|| {
            let last = if d == 1 { 5 } else { 4 };
            (2..=last).map(|k| 0.5f64.powi(k)).collect()
        });
        self.cell.ny.get_or_insert(if d == 1 { 64 } else { 32 });
        self.cell.ns.get_or_insert(8);
        let t = &mut self.tolerances;
        t.cell.get_or_insert(if d == 1 { 1e-8 } else { 1e-6 });
        t.macro_step.get_or_insert(if d == 1 { 1e-8 } else { 1e-6 });
        t.max_iter.get_or_insert(10_000);
        t.structure.get_or_insert(1e-9);
        t.slack.get_or_insert(1.05);
        self.study.psi.get_or_insert_with(|| {
            if d == 1 {
                vec![expr("cos(pi*x)")]
            } else {
                vec![expr("cos(pi*x1)*sin(pi*x2)"), expr("sin(pi*x1)*cos(pi*x2)")]
            }
        });
        self.study.xi_max.get_or_insert(4.0);
        self.study.xi_count.get_or_insert(33);
        let ms = &mut self.multiscale;
        ms.v.get_or_insert_with(|| expr(if d == 1 { "sin(2*pi*y)*sin(2*pi*s1)" } else { "sin(2*pi*y1)*sin(2*pi*s1)" }));
        ms.phi.get_or_insert_with(|| expr(if d == 1 { "x*(1+t)" } else { "x1*x2*(1+t)" }));
        ms.chi.get_or_insert_with(|| expr("1 + t"));
        ms.theta.get_or_insert_with(|| expr(if d == 1 { "sin(2*pi*y)" } else { "sin(2*pi*y1)" }));
        self.sampler.count.get_or_insert(10_000);
        self.sampler.k_radius.get_or_insert(4.0);
        self
    }

    /// Validates a resolved configuration.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let d = self.dim();
        self.problem.validate().map_err(|e| ConfigError(e.to_string()))?;
        if self.scales.spatial.is_empty() || self.scales.temporal.is_empty() {
            return bad("scale lists must be nonempty");
        }
        self.build_flux()?;
        let eps = self.eps();
        if eps.is_empty() {
            return bad("eps_list is empty");
        }
        for e in &eps {
            if !(*e > 0.0 && *e < (-1.0f64).exp()) {
                return bad(format!("eps = {e} outside (0, 1/e)"));
            }
        }
        if eps.windows(2).any(|w| w[1] >= w[0]) {
            return bad("eps_list must be strictly decreasing");
        }
        let m = &self.mesh;
        if m.rho.is_nan() || m.rho < 8.0 {
            return bad(format!("mesh.rho = {} must be at least 8", m.rho));
        }
        if m.nx_min < 2 || m.nt_min < 1 || m.nx_max < m.nx_min || m.nt_max < m.nt_min {
            return bad("mesh counts must satisfy 2 <= nx_min <= nx_max and 1 <= nt_min <= nt_max");
        }
        self.grid()?;
        let t = &self.tolerances;
        for (name, v) in [("cell", t.cell), ("macro", t.macro_step), ("structure", t.structure)] {
            if !v.is_some_and(|v| v > 0.0) {
                return bad(format!("tolerances.{name} must be positive"));
            }
        }
        if !t.slack.is_some_and(|s| s >= 1.0) {
            return bad("tolerances.slack must be at least 1");
        }
        if t.max_iter == Some(0) {
            return bad("tolerances.max_iter must be positive");
        }
        let psi = self.study.psi.as_deref().unwrap_or_default();
        if psi.len() != d {
            return bad(format!("study.psi needs {d} components"));
        }
        for p in psi {
            p.check_variables(d, 0, false).map_err(|e| ConfigError(e.to_string()))?;
        }
        if !self.study.xi_max.is_some_and(|v| v > 0.0) || !self.study.xi_count.is_some_and(|c| c >= 2) {
            return bad("study.xi_max must be positive and study.xi_count at least 2");
        }
        let ms = &self.multiscale;
        let check = |e: &Option<Expr>, cell: bool, name: &str| -> Result<(), ConfigError> {
            match e {
                Some(e) => e.check_variables(d, self.m(), cell).map_err(|err| ConfigError(format!("multiscale.{name}: {err}"))),
                None => Ok(()),
            }
        };
        check(&ms.v, true, "v")?;
        check(&ms.phi, false, "phi")?;
        check(&ms.chi, false, "chi")?;
        check(&ms.theta, true, "theta")?;
        if let Some(th) = &ms.theta {
            if th.uses_macro_variables() {
                return bad("multiscale.theta must depend on cell variables only");
            }
        }
        if !self.sampler.count.is_some_and(|c| c >= 1) || !self.sampler.k_radius.is_some_and(|r| r > 0.0) {
            return bad("sampler.count must be at least 1 and sampler.k_radius positive");
        }
        Ok(())
    }

    pub fn eps(&self) -> Vec<f64> {
        self.eps_list.clone().unwrap_or_default()
    }

    pub fn build_flux(&self) -> Result<FluxModel, ConfigError> {
        self.flux.build(self.dim(), self.m()).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn grid(&self) -> Result<PeriodicGrid, ConfigError> {
        PeriodicGrid::new(self.dim(), self.cell.ny.unwrap_or(64), self.cell.ns.unwrap_or(8))
            .map_err(|e| ConfigError(e.to_string()))
    }

    pub fn cell_settings(&self) -> SolverSettings {
        let d = SolverSettings::default_for(self.dim());
        SolverSettings {
            tol: self.tolerances.cell.unwrap_or(d.tol),
            max_iter: self.tolerances.max_iter.unwrap_or(d.max_iter),
        }
    }

    pub fn macro_settings(&self) -> SolverSettings {
        let d = SolverSettings::default_for(self.dim());
        SolverSettings {
            tol: self.tolerances.macro_step.unwrap_or(d.tol),
            max_iter: self.tolerances.max_iter.unwrap_or(d.max_iter),
        }
    }

    pub fn slack(&self) -> f64 {
        self.tolerances.slack.unwrap_or(1.05)
    }
}
