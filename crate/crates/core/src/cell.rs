//! Local (cell) problems for the corrector `u1`.
//!
//! All four regimes share one discrete problem on the periodic cell. The temporal cell
//! coordinates split into a fixed prefix, at most one evolving coordinate in which the problem is
//! time-periodic and parabolic, and a trailing block over which the flux is averaged (midpoint
//! rule). Stationary problems are solved by the damped fixed point with `P = L`; the parabolic
//! problems march implicit Euler over one period inside a Picard loop on the period map.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flux::Flux;
use crate::grid::{damped_fixed_point, Damping, Mesh, PeriodicGrid, SpectralSolver};
use crate::scales::Regime;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CellError {
    #[error("cell iteration did not converge in {stage}: {iterations} iterations, residual {residual:e}")]
    NonConvergence { stage: String, iterations: usize, residual: f64 },
    #[error("period map did not converge after {sweeps} sweeps (gap {gap:e})")]
    PeriodNonConvergence { sweeps: usize, gap: f64 },
    #[error("invalid cell problem: {0}")]
    Invalid(String),
}

/// A macroscopic point `(x, t)` at which the local problem is posed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacroPoint {
    pub x: Vec<f64>,
    pub t: f64,
}

impl MacroPoint {
    pub fn new(x: &[f64], t: f64) -> MacroPoint {
        MacroPoint { x: x.to_vec(), t }
    }

    pub fn origin(dim: usize) -> MacroPoint {
        MacroPoint { x: vec![0.0; dim], t: 0.0 }
    }
}

/// Residual tolerance and iteration cap of the cell iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl SolverSettings {
    pub fn default_for(dim: usize) -> SolverSettings {
        SolverSettings { tol: if dim == 1 { 1e-8 } else { 1e-6 }, max_iter: 10_000 }
    }
}

/// Maximum number of period-map sweeps of the time-periodic solve.
const MAX_SWEEPS: usize = 200;

/// How the temporal cell coordinates enter a local problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellLayout {
    /// Values of the leading coordinates, held fixed.
    pub fixed: Vec<f64>,
    /// Whether the next coordinate is evolving (parabolic in it).
    pub evolving: bool,
    /// Total number `m` of temporal cell coordinates; the rest are averaged.
    pub m: usize,
}

impl CellLayout {
    /// Layout for `regime` with `m` coordinates; `s` supplies at least the fixed prefix.
    pub fn for_regime(regime: &Regime, m: usize, s: &[f64]) -> Result<CellLayout, CellError> {
        let (fixed, evolving) = match *regime {
            Regime::SlowTemporal => (m, false),
            Regime::SlowResonant => {
                if m == 0 {
                    return Err(CellError::Invalid("slow resonance needs m >= 1".into()));
                }
                (m - 1, true)
            }
            Regime::RapidTemporal { lbar } => {
                if lbar < 1 || lbar > m {
                    return Err(CellError::Invalid(format!("lbar = {lbar} outside [1, {m}]")));
                }
                (lbar - 1, false)
            }
            Regime::RapidResonant { lring } => {
                if lring < 2 || lring > m {
                    return Err(CellError::Invalid(format!("lring = {lring} outside [2, {m}]")));
                }
                (lring - 2, true)
            }
        };
        if s.len() < fixed {
            return Err(CellError::Invalid(format!("{fixed} fixed temporal coordinates needed, got {}", s.len())));
        }
        Ok(CellLayout { fixed: s[..fixed].to_vec(), evolving, m })
    }

    /// Zero-based indices of the averaged coordinates.
    pub fn averaged(&self) -> std::ops::Range<usize> {
        (self.fixed.len() + self.evolving as usize)..self.m
    }

    /// Zero-based index of the evolving coordinate.
    pub fn evolving_index(&self) -> Option<usize> {
        self.evolving.then_some(self.fixed.len())
    }
}

/// The discrete corrector.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellSolution {
    pub grid: PeriodicGrid,
    pub layout: CellLayout,
    /// `slices x ny^N` nodal values; one slice per evolving-coordinate node (or a single slice).
    pub values: Vec<f64>,
    /// `slices x cells x N` cell-centred y-gradients (average of the cell's gradient samples).
    pub grad_y: Vec<f64>,
    pub mean: f64,
    pub residual: f64,
    pub iterations: usize,
    /// Period-map sweeps (parabolic problems only).
    pub sweeps: usize,
    /// Discrete `L^2` norm of the derivative in the evolving coordinate (parabolic problems only).
    pub ds_norm: Option<f64>,
    /// Residual after each iteration of the stationary solve (empty for parabolic problems).
    pub history: Vec<f64>,
}

impl CellSolution {
    pub fn slices(&self) -> usize {
        if self.layout.evolving {
            self.grid.ns
        } else {
            1
        }
    }

    pub fn slice(&self, j: usize) -> &[f64] {
        let len = self.grid.mesh().unknowns();
        &self.values[j * len..(j + 1) * len]
    }

    /// Maximum nodal discrepancy between slices (zero for stationary problems).
    pub fn variation_in_s(&self) -> f64 {
        let first = self.slice(0);
        (1..self.slices())
            .flat_map(|j| self.slice(j).iter().zip(first).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    }

    /// Discrete `L^2(Y x S)` norm of the values.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() / self.values.len() as f64).sqrt()
    }
}

/// A local problem with the averaged flux prepared.
pub struct LocalProblem<'a> {
    flux: &'a dyn Flux,
    point: MacroPoint,
    xi: Vec<f64>,
    grid: PeriodicGrid,
    layout: CellLayout,
    mesh: Mesh,
    solver: SpectralSolver,
    /// Averaged-coordinate nodes; coordinates the flux ignores use a single node.
    tails: Vec<Vec<f64>>,
    centres: Vec<[f64; 2]>,
}

impl<'a> LocalProblem<'a> {
    pub fn new(
        flux: &'a dyn Flux,
        point: &MacroPoint,
        xi: &[f64],
        layout: CellLayout,
        grid: PeriodicGrid,
    ) -> Result<LocalProblem<'a>, CellError> {
        let n = flux.dim();
        if grid.dim != n || xi.len() != n || point.x.len() != n {
            return Err(CellError::Invalid(format!(
                "dimension mismatch: flux N = {n}, grid {}, xi {}, x {}",
                grid.dim,
                xi.len(),
                point.x.len()
            )));
        }
        if layout.m != flux.temporal_dim() {
            return Err(CellError::Invalid(format!(
                "flux has m = {} temporal arguments, layout {}",
                flux.temporal_dim(),
                layout.m
            )));
        }
        let nodes = grid.s_nodes();
        let mut tails: Vec<Vec<f64>> = vec![Vec::new()];
        for j in layout.averaged() {
            let coord: Vec<f64> = if flux.depends_on_s(j) { nodes.clone() } else { vec![0.5] };
            tails = tails
                .iter()
                .flat_map(|t| {
                    coord.iter().map(move |&c| {
                        let mut t = t.clone();
                        t.push(c);
                        t
                    })
                })
                .collect();
        }
        let mesh = grid.mesh();
        let centres = (0..mesh.cells()).map(|c| mesh.cell_centre(c)).collect();
        Ok(LocalProblem {
            flux,
            point: point.clone(),
            xi: xi.to_vec(),
            grid,
            layout,
            mesh,
            solver: SpectralSolver::new(mesh),
            tails,
            centres,
        })
    }

    /// Averaged flux at sample gradient `k` of `cell`, with evolving coordinate `se`.
    fn eval(&self, cell: usize, se: f64, k: &[f64], out: &mut [f64], s: &mut Vec<f64>) {
        let n = self.flux.dim();
        let y = &self.centres[cell][..n];
        let mut tmp = [0.0; 2];
        out.iter_mut().for_each(|v| *v = 0.0);
        for tail in &self.tails {
            s.clear();
            s.extend_from_slice(&self.layout.fixed);
            if self.layout.evolving {
                s.push(se);
            }
            s.extend_from_slice(tail);
            self.flux.eval_into(&self.point.x, self.point.t, y, s, k, &mut tmp[..n]);
            for (o, v) in out.iter_mut().zip(&tmp) {
                *o += v;
            }
        }
        let w = 1.0 / self.tails.len() as f64;
        out.iter_mut().for_each(|v| *v *= w);
    }

    fn residual(&self, u: &[f64], se: f64, prev: Option<(&[f64], f64)>, out: &mut [f64]) {
        let mut s = Vec::with_capacity(self.layout.m);
        self.mesh.divergence_form(u, &self.xi, out, |cell, k, a| self.eval(cell, se, k, a, &mut s));
        if let Some((p, inv_ds)) = prev {
            for ((o, ui), pi) in out.iter_mut().zip(u).zip(p) {
                *o += (ui - pi) * inv_ds;
            }
        }
    }

    pub fn solve(&self, settings: &SolverSettings) -> Result<CellSolution, CellError> {
        if self.layout.evolving {
            self.solve_parabolic(settings)
        } else {
            self.solve_stationary(settings)
        }
    }

    fn solve_stationary(&self, settings: &SolverSettings) -> Result<CellSolution, CellError> {
        let c = self.flux.constants();
        let mut u = vec![0.0; self.mesh.unknowns()];
        let out = damped_fixed_point(
            &self.solver,
            Damping::elliptic(c.c0, c.c1),
            &mut u,
            settings.tol,
            settings.max_iter,
            true,
            |u, r| self.residual(u, 0.5, None, r),
        );
        if !out.converged {
            return Err(CellError::NonConvergence {
                stage: "stationary cell problem".into(),
                iterations: out.iterations,
                residual: out.residual,
            });
        }
        Ok(self.package(u, out.residual, out.iterations, 0, None, out.history))
    }

    fn solve_parabolic(&self, settings: &SolverSettings) -> Result<CellSolution, CellError> {
        let c = self.flux.constants();
        let ns = self.grid.ns;
        let ds = self.grid.hs();
        let nodes = self.grid.s_nodes();
        let len = self.mesh.unknowns();
        let damping = Damping::implicit_step(c.c0, c.c1, ds);
        let mut start = vec![0.0; len];
        let mut slices = vec![0.0; ns * len];
        let mut iterations = 0;
        for sweep in 1..=MAX_SWEEPS {
            let mut prev = start.clone();
            let mut worst = 0.0f64;
            for (j, &se) in nodes.iter().enumerate() {
                let mut u = prev.clone();
                let out = damped_fixed_point(&self.solver, damping, &mut u, settings.tol, settings.max_iter, true, |u, r| {
                    self.residual(u, se, Some((&prev, 1.0 / ds)), r)
                });
                iterations += out.iterations;
                if !out.converged {
                    return Err(CellError::NonConvergence {
                        stage: format!("time-periodic step {j} of sweep {sweep}"),
                        iterations: out.iterations,
                        residual: out.residual,
                    });
                }
                worst = worst.max(out.residual);
                slices[j * len..(j + 1) * len].copy_from_slice(&u);
                prev = u;
            }
            let diff: Vec<f64> = prev.iter().zip(&start).map(|(a, b)| a - b).collect();
            let gap = self.mesh.inner(&diff, &diff).sqrt();
            if gap <= settings.tol {
                let mut ds_sq = 0.0;
                for j in 0..ns {
                    let jm = (j + ns - 1) % ns;
                    let d: Vec<f64> = (0..len).map(|i| (slices[j * len + i] - slices[jm * len + i]) / ds).collect();
                    ds_sq += ds * self.mesh.inner(&d, &d);
                }
                return Ok(self.package(slices, worst, iterations, sweep, Some(ds_sq.sqrt()), Vec::new()));
            }
            start = prev;
        }
        let last = &slices[(ns - 1) * len..];
        let diff: Vec<f64> = last.iter().zip(&start).map(|(a, b)| a - b).collect();
        Err(CellError::PeriodNonConvergence { sweeps: MAX_SWEEPS, gap: self.mesh.inner(&diff, &diff).sqrt() })
    }

    fn package(
        &self,
        values: Vec<f64>,
        residual: f64,
        iterations: usize,
        sweeps: usize,
        ds_norm: Option<f64>,
        history: Vec<f64>,
    ) -> CellSolution {
        let n = self.grid.dim;
        let len = self.mesh.unknowns();
        let q = self.mesh.samples_per_cell();
        let mut grad_y = Vec::with_capacity(values.len() / len * self.mesh.cells() * n);
        for slice in values.chunks(len) {
            for cell in 0..self.mesh.cells() {
                let g = self.mesh.cell_gradients(slice, cell);
                for r in 0..n {
                    grad_y.push(g.iter().take(q).map(|v| v[r]).sum::<f64>() / q as f64);
                }
            }
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        CellSolution {
            grid: self.grid,
            layout: self.layout.clone(),
            values,
            grad_y,
            mean,
            residual,
            iterations,
            sweeps,
            ds_norm,
            history,
        }
    }

    /// Midpoint quadrature of `a(x, t, y, s; xi + grad_y u1)` over the cell, the evolving
    /// coordinate and the averaged coordinates (the fixed coordinates are held at their values).
    pub fn flux_average(&self, sol: &CellSolution) -> Vec<f64> {
        let n = self.flux.dim();
        let len = self.mesh.unknowns();
        let q = self.mesh.samples_per_cell();
        let nodes = if self.layout.evolving { self.grid.s_nodes() } else { vec![0.5] };
        let mut total = vec![0.0; n];
        let mut s = Vec::with_capacity(self.layout.m);
        let mut k = [0.0; 2];
        let mut a = [0.0; 2];
        for (j, &se) in nodes.iter().enumerate() {
            let slice = &sol.values[j * len..(j + 1) * len];
            for cell in 0..self.mesh.cells() {
                let g = self.mesh.cell_gradients(slice, cell);
                for gq in g.iter().take(q) {
                    for r in 0..n {
                        k[r] = self.xi[r] + gq[r];
                    }
                    self.eval(cell, se, &k[..n], &mut a[..n], &mut s);
                    for r in 0..n {
                        total[r] += a[r];
                    }
                }
            }
        }
        let w = 1.0 / (nodes.len() * self.mesh.cells() * q) as f64;
        total.iter_mut().for_each(|v| *v *= w);
        total
    }
}

fn run(
    flux: &dyn Flux,
    point: &MacroPoint,
    xi: &[f64],
    layout: CellLayout,
    grid: PeriodicGrid,
    settings: &SolverSettings,
) -> Result<CellSolution, CellError> {
    LocalProblem::new(flux, point, xi, layout, grid)?.solve(settings)
}

/// Stationary local problem with every temporal coordinate fixed at `s` (length `m`).
pub fn solve_elliptic_cell(
    flux: &dyn Flux,
    point: &MacroPoint,
    xi: &[f64],
    s: &[f64],
    grid: PeriodicGrid,
    settings: &SolverSettings,
) -> Result<CellSolution, CellError> {
    let m = flux.temporal_dim();
    if s.len() != m {
        return Err(CellError::Invalid(format!("expected {m} temporal coordinates, got {}", s.len())));
    }
    run(flux, point, xi, CellLayout { fixed: s.to_vec(), evolving: false, m }, grid, settings)
}

/// Time-periodic local problem in the last temporal coordinate; `s_head` fixes the first `m - 1`.
pub fn solve_parabolic_cell(
    flux: &dyn Flux,
    point: &MacroPoint,
    xi: &[f64],
    s_head: &[f64],
    grid: PeriodicGrid,
    settings: &SolverSettings,
) -> Result<CellSolution, CellError> {
    let layout = CellLayout::for_regime(&Regime::SlowResonant, flux.temporal_dim(), s_head)?;
    run(flux, point, xi, layout, grid, settings)
}

/// Stationary local problem with the flux averaged over coordinates `lbar..=m` (one-based).
pub fn solve_averaged_elliptic_cell(
    flux: &dyn Flux,
    point: &MacroPoint,
    xi: &[f64],
    s_kept: &[f64],
    lbar: usize,
    grid: PeriodicGrid,
    settings: &SolverSettings,
) -> Result<CellSolution, CellError> {
    let layout = CellLayout::for_regime(&Regime::RapidTemporal { lbar }, flux.temporal_dim(), s_kept)?;
    run(flux, point, xi, layout, grid, settings)
}

/// Time-periodic local problem in coordinate `lring - 1` with the flux averaged over
/// `lring..=m` (one-based).
pub fn solve_averaged_parabolic_cell(
    flux: &dyn Flux,
    point: &MacroPoint,
    xi: &[f64],
    s_kept: &[f64],
    lring: usize,
    grid: PeriodicGrid,
    settings: &SolverSettings,
) -> Result<CellSolution, CellError> {
    let layout = CellLayout::for_regime(&Regime::RapidResonant { lring }, flux.temporal_dim(), s_kept)?;
    run(flux, point, xi, layout, grid, settings)
}

/// Dispatches on the regime. `s` supplies the fixed temporal coordinates (a longer slice is
/// allowed; only its prefix is read).
pub fn solve_local(
    flux: &dyn Flux,
    point: &MacroPoint,
    xi: &[f64],
    regime: &Regime,
    s: &[f64],
    grid: PeriodicGrid,
    settings: &SolverSettings,
) -> Result<CellSolution, CellError> {
    let layout = CellLayout::for_regime(regime, flux.temporal_dim(), s)?;
    run(flux, point, xi, layout, grid, settings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{Expr, TrigSum};
    use crate::flux::{Coefficient, FluxModel};
    use std::f64::consts::PI;

    fn linear(src: &str, m: usize) -> FluxModel {
        FluxModel::linear(1, m, Coefficient::Isotropic(TrigSum::from_expr(&Expr::parse(src).unwrap()).unwrap())).unwrap()
    }

    fn discrete_harmonic(ny: usize, a: impl Fn(f64) -> f64) -> f64 {
        let s: f64 = (0..ny).map(|j| 1.0 / a((j as f64 + 0.5) / ny as f64)).sum::<f64>() / ny as f64;
        1.0 / s
    }

    fn tight() -> SolverSettings {
        SolverSettings { tol: 1e-12, max_iter: 10_000 }
    }

    #[test]
    fn harmonic_mean_corrector() {
        let f = linear("2 + sin(2*pi*y)", 1);
        let grid = PeriodicGrid::new(1, 32, 4).unwrap();
        let p = MacroPoint::origin(1);
        let sol = solve_elliptic_cell(&f, &p, &[1.0], &[0.3], grid, &tight()).unwrap();
        let a = |y: f64| 2.0 + (2.0 * PI * y).sin();
        let mh = discrete_harmonic(32, a);
        for (j, g) in sol.grad_y.iter().enumerate() {
            let y = (j as f64 + 0.5) / 32.0;
            assert!((g - (mh / a(y) - 1.0)).abs() < 1e-10);
        }
        let lp = LocalProblem::new(&f, &p, &[1.0], sol.layout.clone(), grid).unwrap();
        let b = lp.flux_average(&sol);
        assert!((b[0] - mh).abs() < 1e-10);
        assert!((mh - 3f64.sqrt()).abs() < 1e-8);
        assert!(sol.mean.abs() <= 1e-12 * sol.l2_norm().max(1e-300));
    }

    #[test]
    fn grid_refinement_approaches_harmonic_mean() {
        let f = linear("2 + sin(2*pi*y)", 1);
        let p = MacroPoint::origin(1);
        let mut errs = Vec::new();
        for ny in [4, 8, 16] {
            let grid = PeriodicGrid::new(1, ny, 4).unwrap();
            let sol = solve_elliptic_cell(&f, &p, &[1.0], &[0.0], grid, &tight()).unwrap();
            let lp = LocalProblem::new(&f, &p, &[1.0], sol.layout.clone(), grid).unwrap();
            errs.push((lp.flux_average(&sol)[0] - 3f64.sqrt()).abs());
        }
        for w in errs.windows(2) {
            assert!(w[1] * 3.0 <= w[0] || w[1] < 1e-11, "{errs:?}");
        }
    }

    #[test]
    fn zero_gradient_and_constant_coefficient() {
        let p = MacroPoint::origin(1);
        let grid = PeriodicGrid::new(1, 16, 4).unwrap();
        let f = linear("2 + sin(2*pi*y)", 1);
        let sol = solve_elliptic_cell(&f, &p, &[0.0], &[0.0], grid, &tight()).unwrap();
        assert!(sol.values.iter().all(|&v| v == 0.0));
        assert_eq!(sol.residual, 0.0);
        let c = linear("3", 1);
        let sol = solve_elliptic_cell(&c, &p, &[2.5], &[0.0], grid, &tight()).unwrap();
        assert!(sol.values.iter().all(|&v| v.abs() < 1e-14));
    }

    #[test]
    fn residual_is_non_increasing() {
        let f = FluxModel::perturbed(
            2,
            1,
            Coefficient::Isotropic(TrigSum::from_expr(&Expr::parse("2 + sin(2*pi*y1)*cos(2*pi*y2)").unwrap()).unwrap()),
            TrigSum::from_expr(&Expr::parse("1 + cos(2*pi*s)/2").unwrap()).unwrap(),
            0.5,
        )
        .unwrap();
        let grid = PeriodicGrid::new(2, 16, 4).unwrap();
        let sol = solve_elliptic_cell(&f, &MacroPoint::origin(2), &[1.0, -0.5], &[0.2], grid, &SolverSettings::default_for(2))
            .unwrap();
        for w in sol.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-10, "{:?}", sol.history);
        }
        assert!(sol.residual <= 1e-6);
        assert!(sol.mean.abs() <= 1e-12 * sol.l2_norm());
    }

    #[test]
    fn laminate_2d() {
        // A depends on y1 only: b1 is the harmonic mean, b2 the arithmetic mean.
        let f = FluxModel::linear(
            2,
            1,
            Coefficient::Isotropic(TrigSum::from_expr(&Expr::parse("2 + sin(2*pi*y1)").unwrap()).unwrap()),
        )
        .unwrap();
        let grid = PeriodicGrid::new(2, 16, 4).unwrap();
        let p = MacroPoint::origin(2);
        let tol = SolverSettings { tol: 1e-11, max_iter: 10_000 };
        let b = |xi: [f64; 2]| {
            let sol = solve_elliptic_cell(&f, &p, &xi, &[0.0], grid, &tol).unwrap();
            LocalProblem::new(&f, &p, &xi, sol.layout.clone(), grid).unwrap().flux_average(&sol)
        };
        let e1 = b([1.0, 0.0]);
        let e2 = b([0.0, 1.0]);
        assert!((e1[0] - 3f64.sqrt()).abs() < 1e-7 && e1[1].abs() < 1e-9, "{e1:?}");
        assert!((e2[1] - 2.0).abs() < 1e-9 && e2[0].abs() < 1e-9, "{e2:?}");
    }

    #[test]
    fn parabolic_with_s_independent_flux_is_stationary() {
        let f = linear("2 + sin(2*pi*y)", 1);
        let grid = PeriodicGrid::new(1, 16, 8).unwrap();
        let p = MacroPoint::origin(1);
        let st = SolverSettings { tol: 1e-11, max_iter: 10_000 };
        let ell = solve_elliptic_cell(&f, &p, &[1.0], &[0.0], grid, &st).unwrap();
        let par = solve_parabolic_cell(&f, &p, &[1.0], &[], grid, &st).unwrap();
        assert_eq!(par.slices(), 8);
        assert!(par.variation_in_s() < 1e-8);
        for j in 0..8 {
            for (a, b) in par.slice(j).iter().zip(ell.slice(0)) {
                assert!((a - b).abs() < 1e-8);
            }
        }
        assert!(par.ds_norm.unwrap() < 1e-7);
        let zero = solve_parabolic_cell(&f, &p, &[0.0], &[], grid, &st).unwrap();
        assert!(zero.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn parabolic_grid_convergence() {
        let f = linear("2 + sin(2*pi*y)*cos(2*pi*s)", 1);
        let p = MacroPoint::origin(1);
        let st = SolverSettings { tol: 1e-10, max_iter: 10_000 };
        let b = |ny: usize, ns: usize| {
            let grid = PeriodicGrid::new(1, ny, ns).unwrap();
            let sol = solve_parabolic_cell(&f, &p, &[1.0], &[], grid, &st).unwrap();
            let lp = LocalProblem::new(&f, &p, &[1.0], sol.layout.clone(), grid).unwrap();
            (lp.flux_average(&sol)[0], sol)
        };
        let (coarse, sc) = b(16, 16);
        let (mid, _) = b(32, 32);
        let (fine, sf) = b(64, 64);
        assert!((fine - coarse).abs() < 0.05, "{coarse} {fine}");
        assert!((fine - mid).abs() < (fine - coarse).abs(), "{coarse} {mid} {fine}");
        assert!(sc.ds_norm.unwrap() > 1e-3);
        // compare the corrector gradient at the coarse nodes (s nodes coincide every 4th)
        let g_c = &sc.grad_y;
        let g_f = &sf.grad_y;
        let mut worst: f64 = 0.0;
        for j in 0..16 {
            for c in 0..16 {
                let jf = 4 * j + 1;
                let fine_avg: f64 = (0..4).map(|d| g_f[(jf) * 64 + 4 * c + d]).sum::<f64>() / 4.0;
                worst = worst.max((g_c[j * 16 + c] - fine_avg).abs());
            }
        }
        assert!(worst < 0.1, "{worst}");
    }

    #[test]
    fn averaged_elliptic_matches_averaged_coefficient() {
        let f = linear("2 + sin(2*pi*y)*(1 + cos(2*pi*s2))/2", 2);
        let grid = PeriodicGrid::new(1, 32, 8).unwrap();
        let p = MacroPoint::origin(1);
        let sol = solve_averaged_elliptic_cell(&f, &p, &[1.0], &[0.4], 2, grid, &tight()).unwrap();
        let lp = LocalProblem::new(&f, &p, &[1.0], sol.layout.clone(), grid).unwrap();
        let b = lp.flux_average(&sol)[0];
        let mh = discrete_harmonic(32, |y| 2.0 + (2.0 * PI * y).sin() / 2.0);
        assert!((b - mh).abs() < 1e-10, "{b} {mh}");
        let avg = linear("2 + sin(2*pi*y)/2", 2);
        let direct = solve_elliptic_cell(&avg, &p, &[1.0], &[0.4, 0.1], grid, &tight()).unwrap();
        for (a, b) in sol.values.iter().zip(&direct.values) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn averaged_parabolic_matches_parabolic_on_s1() {
        let f2 = linear("2 + sin(2*pi*y)*cos(2*pi*s1)", 2);
        let f1 = linear("2 + sin(2*pi*y)*cos(2*pi*s)", 1);
        let grid = PeriodicGrid::new(1, 16, 8).unwrap();
        let p = MacroPoint::origin(1);
        let st = SolverSettings { tol: 1e-10, max_iter: 10_000 };
        let a = solve_averaged_parabolic_cell(&f2, &p, &[1.0], &[], 2, grid, &st).unwrap();
        let b = solve_parabolic_cell(&f1, &p, &[1.0], &[], grid, &st).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn dispatch() {
        let f = linear("2 + sin(2*pi*y)", 3);
        let grid = PeriodicGrid::new(1, 8, 4).unwrap();
        let p = MacroPoint::origin(1);
        let st = SolverSettings::default_for(1);
        let s = [0.1, 0.2, 0.3];
        let sol = solve_local(&f, &p, &[1.0], &Regime::RapidResonant { lring: 3 }, &s, grid, &st).unwrap();
        assert_eq!(sol.layout.fixed, vec![0.1]);
        assert_eq!(sol.layout.evolving_index(), Some(1));
        assert_eq!(sol.layout.averaged(), 2..3);
        let sol = solve_local(&f, &p, &[1.0], &Regime::SlowTemporal, &s, grid, &st).unwrap();
        assert_eq!(sol.slices(), 1);
        assert_eq!(sol.layout.fixed.len(), 3);
        let sol = solve_local(&f, &p, &[1.0], &Regime::SlowResonant, &s, grid, &st).unwrap();
        assert_eq!(sol.slices(), 4);
        assert!(solve_local(&f, &p, &[1.0], &Regime::RapidTemporal { lbar: 4 }, &s, grid, &st).is_err());
    }
}
