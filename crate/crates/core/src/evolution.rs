//! Implicit Euler solves of `du/dt - div a(x, t, Du) = f` on `(0,1)^N x (0,T)` with homogeneous
//! Dirichlet data, for the oscillating flux `a^eps` and for homogenised fluxes.

use std::cell::RefCell;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cell::SolverSettings;
use crate::expr::{Expr, ExprError, Point, Var};
use crate::flux::{Flux, StructureConstants};
use crate::grid::{damped_fixed_point, Damping, Mesh, SpectralSolver};
use crate::homogenize::{HomError, MacroFlux};
use crate::scales::ScalePair;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("mesh under-resolves the microstructure: need nx >= {required_nx} and nt >= {required_nt}, got nx = {nx}, nt = {nt}")]
    UnderResolved { required_nx: usize, required_nt: usize, nx: usize, nt: usize },
    #[error("time step {step} did not converge: {iterations} iterations, residual {residual:e}")]
    NonConvergence { step: usize, iterations: usize, residual: f64 },
    #[error(transparent)]
    Flux(#[from] HomError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("invalid problem: {0}")]
    Invalid(String),
}

/// Data of the evolution problem on the unit cube.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionProblem {
    pub dim: usize,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub f: Expr,
    pub u0: Expr,
}

impl EvolutionProblem {
    pub fn validate(&self) -> Result<(), SolveError> {
        if !(1..=2).contains(&self.dim) {
            return Err(SolveError::Invalid(format!("dimension {} not supported", self.dim)));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(SolveError::Invalid(format!("T must be positive, got {}", self.t_final)));
        }
        self.f.check_variables(self.dim, 0, false)?;
        self.u0.check_variables(self.dim, 0, false)?;
        if self.u0.variables().contains(&Var::T) {
            return Err(SolveError::Invalid("u0 must not depend on t".into()));
        }
        let probe = 33;
        for i in 0..=probe {
            let c = i as f64 / probe as f64;
            let pts: Vec<Vec<f64>> = if self.dim == 1 {
                vec![vec![0.0], vec![1.0]]
            } else {
                vec![vec![c, 0.0], vec![c, 1.0], vec![0.0, c], vec![1.0, c]]
            };
            for p in pts {
                let v = self.u0.eval_macro(&p, 0.0);
                if v.abs() > 1e-12 {
                    return Err(SolveError::Invalid(format!("u0 = {v} at boundary point {p:?}; must vanish")));
                }
            }
        }
        Ok(())
    }
}

/// Space-time mesh: `nx` intervals per direction, `nt` time steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub nx: usize,
    pub nt: usize,
}

/// A concrete value of the scale parameter with the realised scales.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpsilonInstance {
    pub pair: ScalePair,
    pub eps: f64,
    pub spatial: Vec<f64>,
    pub temporal: Vec<f64>,
}

impl EpsilonInstance {
    pub fn new(pair: &ScalePair, eps: f64) -> Result<EpsilonInstance, SolveError> {
        if !(eps > 0.0 && eps < (-1.0f64).exp()) {
            return Err(SolveError::Invalid(format!("eps = {eps} outside (0, 1/e)")));
        }
        Ok(EpsilonInstance {
            pair: pair.clone(),
            eps,
            spatial: pair.spatial.iter().map(|s| s.eval(eps)).collect(),
            temporal: pair.temporal.iter().map(|s| s.eval(eps)).collect(),
        })
    }

    /// Mesh counts resolving every scale with `rho` points.
    pub fn required_mesh(&self, t_final: f64, rho: f64) -> MeshSpec {
        let smallest_space = self.spatial.iter().copied().fold(f64::INFINITY, f64::min);
        let smallest_time = self.temporal.iter().copied().fold(f64::INFINITY, f64::min);
        MeshSpec {
            nx: (rho / smallest_space - 1e-9).ceil().max(2.0) as usize,
            nt: (rho * t_final / smallest_time - 1e-9).ceil().max(1.0) as usize,
        }
    }
}

/// The oscillating flux `a^eps(x, t; k) = a(x, t, x/eps_1, t/eps'_1, ..., t/eps'_m; k)`.
pub struct EpsilonFlux<'a> {
    flux: &'a dyn Flux,
    inst: &'a EpsilonInstance,
}

impl<'a> EpsilonFlux<'a> {
    pub fn new(flux: &'a dyn Flux, inst: &'a EpsilonInstance) -> Result<EpsilonFlux<'a>, SolveError> {
        if inst.spatial.len() != 1 {
            return Err(SolveError::Invalid("direct solves support a single spatial microscale".into()));
        }
        if inst.temporal.len() != flux.temporal_dim() {
            return Err(SolveError::Invalid(format!(
                "flux has m = {} temporal arguments, scale pair {}",
                flux.temporal_dim(),
                inst.temporal.len()
            )));
        }
        Ok(EpsilonFlux { flux, inst })
    }
}

impl MacroFlux for EpsilonFlux<'_> {
    fn dim(&self) -> usize {
        self.flux.dim()
    }

    fn constants(&self) -> StructureConstants {
        self.flux.constants()
    }

    fn eval_into(&self, x: &[f64], t: f64, xi: &[f64], out: &mut [f64]) -> Result<(), HomError> {
        let e = self.inst.spatial[0];
        let mut y = [0.0; 2];
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = (xi / e).rem_euclid(1.0);
        }
        let mut s = [0.0; 16];
        let m = self.inst.temporal.len();
        for (sj, ej) in s.iter_mut().zip(&self.inst.temporal) {
            *sj = (t / ej).rem_euclid(1.0);
        }
        self.flux.eval_into(x, t, &y[..x.len()], &s[..m], xi, out);
        Ok(())
    }

    fn describe(&self) -> String {
        format!("{} at eps = {}", self.flux.describe(), self.inst.eps)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    /// Discrete `L^2(Omega_T)`.
    pub l2_space_time: f64,
    /// Discrete `L^2(0,T; H^1_0)`.
    pub l2_h01: f64,
    /// Discrete `L^2(0,T; H^-1)` norm of the time difference quotient.
    pub dual_norm_estimate: f64,
}

/// Nodal space-time solution. Boundary nodes are zero and not stored.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolutionField {
    pub dim: usize,
    pub mesh: MeshSpec,
    pub t_final: f64,
    /// `(nt + 1) x unknowns`, time level major.
    pub values: Vec<f64>,
    pub norms: Norms,
    pub iterations: usize,
    pub eps: Option<f64>,
}

impl SolutionField {
    pub fn space_mesh(&self) -> Mesh {
        Mesh::dirichlet(self.dim, self.mesh.nx)
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.mesh.nt as f64
    }

    pub fn level(&self, n: usize) -> &[f64] {
        let len = self.space_mesh().unknowns();
        &self.values[n * len..(n + 1) * len]
    }

    /// Values on the full vertex grid `(nx + 1)^N` of level `n`, boundary included.
    pub fn full_level(&self, n: usize) -> Vec<f64> {
        let nx = self.mesh.nx;
        let inner = self.level(n);
        if self.dim == 1 {
            let mut out = vec![0.0; nx + 1];
            out[1..nx].copy_from_slice(inner);
            out
        } else {
            let mut out = vec![0.0; (nx + 1) * (nx + 1)];
            for i in 1..nx {
                for j in 1..nx {
                    out[i * (nx + 1) + j] = inner[(i - 1) * (nx - 1) + (j - 1)];
                }
            }
            out
        }
    }

    fn spatial_interp(&self, full: &[f64], x: &[f64]) -> f64 {
        let nx = self.mesh.nx;
        let locate = |c: f64| {
            let p = (c.clamp(0.0, 1.0) * nx as f64).min(nx as f64);
            let i = (p.floor() as usize).min(nx - 1);
            (i, p - i as f64)
        };
        if self.dim == 1 {
            let (i, w) = locate(x[0]);
            (1.0 - w) * full[i] + w * full[i + 1]
        } else {
            let (i, wx) = locate(x[0]);
            let (j, wy) = locate(x[1]);
            let at = |a: usize, b: usize| full[a * (nx + 1) + b];
            (1.0 - wx) * ((1.0 - wy) * at(i, j) + wy * at(i, j + 1)) + wx * ((1.0 - wy) * at(i + 1, j) + wy * at(i + 1, j + 1))
        }
    }

    /// Multilinear interpolation in space and time.
    pub fn value_at(&self, x: &[f64], t: f64) -> f64 {
        let p = (t / self.dt()).clamp(0.0, self.mesh.nt as f64);
        let n = (p.floor() as usize).min(self.mesh.nt.saturating_sub(1));
        let w = p - n as f64;
        let a = self.spatial_interp(&self.full_level(n), x);
        if w == 0.0 {
            return a;
        }
        (1.0 - w) * a + w * self.spatial_interp(&self.full_level(n + 1), x)
    }

    /// Interpolates onto another mesh, returning the field in the same layout.
    pub fn resample(&self, mesh: MeshSpec) -> SolutionField {
        let target = Mesh::dirichlet(self.dim, mesh.nx);
        let dt = self.t_final / mesh.nt as f64;
        let own_dt = self.dt();
        let mut values = Vec::with_capacity((mesh.nt + 1) * target.unknowns());
        let levels: Vec<Vec<f64>> = (0..=self.mesh.nt).map(|n| self.full_level(n)).collect();
        for n in 0..=mesh.nt {
            let p = (n as f64 * dt / own_dt).clamp(0.0, self.mesh.nt as f64);
            let k = (p.floor() as usize).min(self.mesh.nt.saturating_sub(1));
            let w = p - k as f64;
            for idx in 0..target.unknowns() {
                let c = target.node_coords(idx);
                let x = &c[..self.dim];
                let mut v = (1.0 - w) * self.spatial_interp(&levels[k], x);
                if w != 0.0 {
                    v += w * self.spatial_interp(&levels[k + 1], x);
                }
                values.push(v);
            }
        }
        let mut out = SolutionField { dim: self.dim, mesh, t_final: self.t_final, values, norms: Norms::default(), iterations: 0, eps: None };
        out.norms = compute_norms(&out);
        out
    }

    /// Discrete `L^2(Omega_T)` norm of `self - other` (same mesh).
    pub fn l2_distance(&self, other: &SolutionField) -> f64 {
        assert_eq!(self.mesh, other.mesh);
        let sm = self.space_mesh();
        let len = sm.unknowns();
        let dt = self.dt();
        let mut total = 0.0;
        for n in 1..=self.mesh.nt {
            let d: Vec<f64> = self.values[n * len..(n + 1) * len]
                .iter()
                .zip(&other.values[n * len..(n + 1) * len])
                .map(|(a, b)| a - b)
                .collect();
            total += dt * sm.inner(&d, &d);
        }
        total.sqrt()
    }

    /// Discrete `L^2(Omega)` norm of level `n`.
    pub fn level_norm(&self, n: usize) -> f64 {
        let l = self.level(n);
        self.space_mesh().inner(l, l).sqrt()
    }
}

fn compute_norms(field: &SolutionField) -> Norms {
    let mesh = field.space_mesh();
    let solver = SpectralSolver::new(mesh);
    let dt = field.dt();
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    let mut dual = 0.0;
    let mut lifted = vec![0.0; mesh.unknowns()];
    for n in 1..=field.mesh.nt {
        let u = field.level(n);
        l2 += dt * mesh.inner(u, u);
        h1 += dt * mesh.dirichlet_energy(u);
        let d: Vec<f64> = u.iter().zip(field.level(n - 1)).map(|(a, b)| (a - b) / dt).collect();
        solver.solve(0.0, 1.0, &d, &mut lifted);
        dual += dt * mesh.inner(&d, &lifted);
    }
    Norms { l2_space_time: l2.sqrt(), l2_h01: h1.sqrt(), dual_norm_estimate: dual.max(0.0).sqrt() }
}

/// Implicit Euler with the damped fixed point `P = I/dt + c1 L` at every step.
pub fn solve_evolution(
    problem: &EvolutionProblem,
    flux: &dyn MacroFlux,
    mesh: MeshSpec,
    settings: &SolverSettings,
) -> Result<SolutionField, SolveError> {
    problem.validate()?;
    if flux.dim() != problem.dim {
        return Err(SolveError::Invalid(format!("flux dimension {} but problem N = {}", flux.dim(), problem.dim)));
    }
    if mesh.nx < 2 || mesh.nt < 1 {
        return Err(SolveError::Invalid(format!("mesh counts must be positive (nx >= 2), got {mesh:?}")));
    }
    let space = Mesh::dirichlet(problem.dim, mesh.nx);
    let solver = SpectralSolver::new(space);
    let len = space.unknowns();
    let dt = problem.t_final / mesh.nt as f64;
    let c = flux.constants();
    let damping = Damping::implicit_step(c.c0, c.c1, dt);
    let nodes: Vec<[f64; 2]> = (0..len).map(|i| space.node_coords(i)).collect();
    let centres: Vec<[f64; 2]> = (0..space.cells()).map(|i| space.cell_centre(i)).collect();
    let d = problem.dim;

    let mut values = Vec::with_capacity((mesh.nt + 1) * len);
    let mut u: Vec<f64> = nodes.iter().map(|p| problem.u0.eval_macro(&p[..d], 0.0)).collect();
    values.extend_from_slice(&u);
    let mut src = vec![0.0; len];
    let mut iterations = 0;
    let failure: RefCell<Option<HomError>> = RefCell::new(None);
    let zero = [0.0; 2];
    for step in 1..=mesh.nt {
        let t = step as f64 * dt;
        for (s, p) in src.iter_mut().zip(&nodes) {
            *s = problem.f.eval(&Point { x: &p[..d], t, y: &[], s: &[] });
        }
        let prev = u.clone();
        let out = damped_fixed_point(&solver, damping, &mut u, settings.tol, settings.max_iter, false, |u, r| {
            space.divergence_form(u, &zero[..d], r, |cell, k, a| {
                if let Err(e) = flux.eval_into(&centres[cell][..d], t, k, a) {
                    failure.borrow_mut().get_or_insert(e);
                    a.iter_mut().for_each(|v| *v = 0.0);
                }
            });
            for ((ri, ui), (pi, fi)) in r.iter_mut().zip(u).zip(prev.iter().zip(&src)) {
                *ri += (ui - pi) / dt - fi;
            }
        });
        if let Some(e) = failure.borrow_mut().take() {
            return Err(SolveError::Flux(e));
        }
        iterations += out.iterations;
        if !out.converged {
            return Err(SolveError::NonConvergence { step, iterations: out.iterations, residual: out.residual });
        }
        values.extend_from_slice(&u);
    }
    let mut field =
        SolutionField { dim: d, mesh, t_final: problem.t_final, values, norms: Norms::default(), iterations, eps: None };
    field.norms = compute_norms(&field);
    Ok(field)
}

/// Fine-scale solve for one value of `eps`; the mesh must resolve every scale with `rho` points.
pub fn solve_direct(
    problem: &EvolutionProblem,
    flux: &dyn Flux,
    inst: &EpsilonInstance,
    mesh: MeshSpec,
    settings: &SolverSettings,
    rho: f64,
) -> Result<SolutionField, SolveError> {
    let need = inst.required_mesh(problem.t_final, rho);
    if mesh.nx < need.nx || mesh.nt < need.nt {
        return Err(SolveError::UnderResolved { required_nx: need.nx, required_nt: need.nt, nx: mesh.nx, nt: mesh.nt });
    }
    let a = EpsilonFlux::new(flux, inst)?;
    let mut field = solve_evolution(problem, &a, mesh, settings)?;
    field.eps = Some(inst.eps);
    Ok(field)
}

/// Homogenised solve; no resolution requirement.
pub fn solve_homogenized(
    problem: &EvolutionProblem,
    b: &dyn MacroFlux,
    mesh: MeshSpec,
    settings: &SolverSettings,
) -> Result<SolutionField, SolveError> {
    solve_evolution(problem, b, mesh, settings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::TrigSum;
    use crate::flux::{Coefficient, FluxModel};
    use crate::scales::LogPowerScale;
    use std::f64::consts::PI;

    struct Constant(f64, usize);

    impl MacroFlux for Constant {
        fn dim(&self) -> usize {
            self.1
        }
        fn constants(&self) -> StructureConstants {
            StructureConstants { c0: self.0, c1: self.0, alpha: 1.0 }
        }
        fn eval_into(&self, _x: &[f64], _t: f64, xi: &[f64], out: &mut [f64]) -> Result<(), HomError> {
            for (o, k) in out.iter_mut().zip(xi) {
                *o = self.0 * k;
            }
            Ok(())
        }
        fn describe(&self) -> String {
            "constant".into()
        }
    }

    fn problem(dim: usize, f: &str, u0: &str, t: f64) -> EvolutionProblem {
        EvolutionProblem { dim, t_final: t, f: Expr::parse(f).unwrap(), u0: Expr::parse(u0).unwrap() }
    }

    fn settings() -> SolverSettings {
        SolverSettings { tol: 1e-11, max_iter: 10_000 }
    }

    #[test]
    fn zero_data_gives_zero() {
        let p = problem(1, "0", "0", 0.5);
        let f = solve_evolution(&p, &Constant(2.0, 1), MeshSpec { nx: 16, nt: 10 }, &settings()).unwrap();
        assert!(f.values.iter().all(|&v| v == 0.0));
        assert_eq!(f.norms, Norms::default());
    }

    #[test]
    fn separation_of_variables() {
        // discrete exact: sin(pi x) is an eigenvector with eigenvalue (4/h^2) sin^2(pi h / 2)
        let c = 1.5;
        let (nx, nt, t) = (32, 400, 0.2);
        let p = problem(1, "0", "sin(pi*x)", t);
        let f = solve_evolution(&p, &Constant(c, 1), MeshSpec { nx, nt }, &settings()).unwrap();
        let h = 1.0 / nx as f64;
        let dt = t / nt as f64;
        let lam = 4.0 / (h * h) * (PI * h / 2.0).sin().powi(2);
        let amp = (1.0 / (1.0 + dt * c * lam)).powi(nt as i32);
        let mesh = f.space_mesh();
        let mut worst: f64 = 0.0;
        for (i, v) in f.level(nt).iter().enumerate() {
            let x = mesh.node_coords(i)[0];
            worst = worst.max((v - amp * (PI * x).sin()).abs());
        }
        assert!(worst < 1e-9, "{worst}");
        // continuous solution to discretisation accuracy
        let exact = (-c * PI * PI * t).exp();
        assert!((f.value_at(&[0.5], t) - exact).abs() < 0.02 * exact);
    }

    #[test]
    fn energy_decays_without_source() {
        let p = problem(2, "0", "x1*(1-x1)*x2*(1-x2)*(1 + 3*x1)", 0.1);
        let f = solve_evolution(&p, &Constant(1.0, 2), MeshSpec { nx: 12, nt: 20 }, &settings()).unwrap();
        for n in 1..=20 {
            assert!(f.level_norm(n) <= f.level_norm(n - 1) + 1e-14);
        }
    }

    #[test]
    fn two_dimensional_product_mode() {
        let (nx, nt, t, c) = (16, 20, 0.05, 1.0);
        let p = problem(2, "0", "sin(pi*x1)*sin(pi*x2)", t);
        let f = solve_evolution(&p, &Constant(c, 2), MeshSpec { nx, nt }, &settings()).unwrap();
        let h = 1.0 / nx as f64;
        let lam = 2.0 * 4.0 / (h * h) * (PI * h / 2.0).sin().powi(2);
        let amp = (1.0 / (1.0 + t / nt as f64 * c * lam)).powi(nt as i32);
        assert!((f.value_at(&[0.5, 0.5], t) - amp).abs() < 1e-9);
    }

    #[test]
    fn resolution_check_and_eps_range() {
        let pair = ScalePair::new(vec![LogPowerScale::frac(1, 1, 0, 1)], vec![LogPowerScale::frac(3, 2, 0, 1)]).unwrap();
        assert!(EpsilonInstance::new(&pair, 0.5).is_err());
        let inst = EpsilonInstance::new(&pair, 0.25).unwrap();
        let need = inst.required_mesh(0.5, 8.0);
        assert_eq!(need, MeshSpec { nx: 32, nt: 32 });
        let flux = FluxModel::linear(
            1,
            1,
            Coefficient::Isotropic(TrigSum::from_expr(&Expr::parse("2 + sin(2*pi*y)").unwrap()).unwrap()),
        )
        .unwrap();
        let p = problem(1, "1", "0", 0.5);
        let r = solve_direct(&p, &flux, &inst, MeshSpec { nx: 16, nt: 32 }, &settings(), 8.0);
        assert!(matches!(r, Err(SolveError::UnderResolved { required_nx: 32, .. })));
        let ok = solve_direct(&p, &flux, &inst, need, &SolverSettings::default_for(1), 8.0).unwrap();
        assert!(ok.norms.l2_h01 > 0.0 && ok.eps == Some(0.25));
    }

    #[test]
    fn boundary_condition_validation() {
        assert!(problem(1, "0", "1", 0.5).validate().is_err());
        assert!(problem(1, "0", "x*(1-x)", 0.0).validate().is_err());
        assert!(problem(1, "sin(2*pi*y)", "0", 1.0).validate().is_err());
    }

    #[test]
    fn resample_is_identity_on_same_mesh() {
        let p = problem(1, "1", "0", 0.1);
        let f = solve_evolution(&p, &Constant(1.0, 1), MeshSpec { nx: 8, nt: 4 }, &settings()).unwrap();
        let g = f.resample(f.mesh);
        assert!(f.l2_distance(&g) < 1e-15);
    }
}
