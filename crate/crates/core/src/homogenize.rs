//! The homogenised flux `b(x, t; xi)`: the cell average of `a(x, t, y, s; xi + grad_y u1)`.
//! Evaluated on demand (cached) or interpolated from a table over a lattice in `xi` and `(x, t)`.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cell::{CellError, CellLayout, LocalProblem, MacroPoint, SolverSettings};
use crate::flux::{Condition, ConditionCheck, Flux, SampleTuple, Sampler, StructureConstants};
use crate::grid::PeriodicGrid;
use crate::scales::{Regime, RegimeClassification};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HomError {
    #[error("cell solve failed at temporal node {node:?}: {source}")]
    Cell { node: Vec<f64>, source: CellError },
    #[error("invalid homogenisation request: {0}")]
    Invalid(String),
}

/// A flux of the macroscopic problem, `(x, t, xi) -> R^N`.
pub trait MacroFlux: Send + Sync {
    fn dim(&self) -> usize;
    /// Constants used to damp the macro iteration.
    fn constants(&self) -> StructureConstants;
    fn eval_into(&self, x: &[f64], t: f64, xi: &[f64], out: &mut [f64]) -> Result<(), HomError>;
    fn describe(&self) -> String;
}

fn fixed_nodes(flux: &dyn Flux, regime: &Regime, grid: &PeriodicGrid) -> Result<Vec<Vec<f64>>, HomError> {
    let m = flux.temporal_dim();
    let layout = CellLayout::for_regime(regime, m, &vec![0.0; m]).map_err(|e| HomError::Invalid(e.to_string()))?;
    let nodes = grid.s_nodes();
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for j in 0..layout.fixed.len() {
        let coord: Vec<f64> = if flux.depends_on_s(j) { nodes.clone() } else { vec![0.5] };
        out = out
            .iter()
            .flat_map(|p| {
                coord.iter().map(move |&c| {
                    let mut p = p.clone();
                    p.push(c);
                    p
                })
            })
            .collect();
    }
    Ok(out)
}

/// Solves the regime's local problem at every quadrature node of the fixed temporal coordinates
/// and returns the quadrature of the flux over `Y x S^m`.
pub fn homogenized_flux(
    flux: &dyn Flux,
    point: &MacroPoint,
    xi: &[f64],
    regime: &Regime,
    grid: PeriodicGrid,
    settings: &SolverSettings,
) -> Result<Vec<f64>, HomError> {
    let n = flux.dim();
    let nodes = fixed_nodes(flux, regime, &grid)?;
    let mut total = vec![0.0; n];
    for node in &nodes {
        let wrap = |source| HomError::Cell { node: node.clone(), source };
        let layout = CellLayout::for_regime(regime, flux.temporal_dim(), node).map_err(wrap)?;
        let problem = LocalProblem::new(flux, point, xi, layout, grid).map_err(wrap)?;
        let sol = problem.solve(settings).map_err(wrap)?;
        for (t, v) in total.iter_mut().zip(problem.flux_average(&sol)) {
            *t += v;
        }
    }
    let w = 1.0 / nodes.len() as f64;
    total.iter_mut().for_each(|v| *v *= w);
    Ok(total)
}

/// Uniform lattice axis; `count = 1` places a single node at `min`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, count: usize) -> Axis {
        Axis { min, max, count }
    }

    pub fn point(v: f64) -> Axis {
        Axis { min: v, max: v, count: 1 }
    }

    pub fn nodes(&self) -> Vec<f64> {
        if self.count <= 1 {
            return vec![self.min];
        }
        let step = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count).map(|i| if i + 1 == self.count { self.max } else { self.min + i as f64 * step }).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacroLattice {
    pub x: Vec<Axis>,
    pub t: Axis,
}

impl MacroLattice {
    pub fn single(dim: usize) -> MacroLattice {
        MacroLattice { x: vec![Axis::point(0.5); dim], t: Axis::point(0.0) }
    }
}

/// Tabulated values; axes are `xi_1.., x_1.., t` with the last axis fastest.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table {
    pub dim: usize,
    pub xi_axes: Vec<Vec<f64>>,
    pub x_axes: Vec<Vec<f64>>,
    pub t_axis: Vec<f64>,
    /// `nodes x dim` values.
    pub values: Vec<f64>,
}

impl Table {
    fn axes(&self) -> Vec<&Vec<f64>> {
        self.xi_axes.iter().chain(&self.x_axes).chain(std::iter::once(&self.t_axis)).collect()
    }

    pub fn node_count(&self) -> usize {
        self.axes().iter().map(|a| a.len()).product()
    }

    /// Lattice coordinates of node `idx`, in axis order.
    pub fn node(&self, idx: usize) -> Vec<f64> {
        let axes = self.axes();
        let mut rem = idx;
        let mut out = vec![0.0; axes.len()];
        for (a, axis) in axes.iter().enumerate().rev() {
            out[a] = axis[rem % axis.len()];
            rem /= axis.len();
        }
        out
    }

    /// Multilinear interpolation. `xi` is extrapolated linearly beyond the lattice, `(x, t)` is
    /// clamped; returns whether clamping occurred.
    pub fn interpolate(&self, x: &[f64], t: f64, xi: &[f64], out: &mut [f64]) -> bool {
        let axes = self.axes();
        let coords: Vec<f64> = xi.iter().chain(x).copied().chain(std::iter::once(t)).collect();
        let mut clamped = false;
        // (lower index, weight of the upper node) per axis
        let mut cells = Vec::with_capacity(axes.len());
        for (a, (axis, &c)) in axes.iter().zip(&coords).enumerate() {
            if axis.len() == 1 {
                clamped |= a >= self.dim && c != axis[0];
                cells.push((0usize, 0.0));
                continue;
            }
            let mut c = c;
            if a >= self.dim {
                let (lo, hi) = (axis[0], axis[axis.len() - 1]);
                if c < lo || c > hi {
                    clamped = true;
                    c = c.clamp(lo, hi);
                }
            }
            let i = match axis.partition_point(|&v| v <= c) {
                0 => 0,
                p => (p - 1).min(axis.len() - 2),
            };
            cells.push((i, (c - axis[i]) / (axis[i + 1] - axis[i])));
        }
        let mut strides = vec![1usize; axes.len()];
        for a in (0..axes.len().saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * axes[a + 1].len();
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        for corner in 0..(1usize << axes.len()) {
            let mut w = 1.0;
            let mut idx = 0;
            for (a, &(i, f)) in cells.iter().enumerate() {
                let up = corner >> a & 1 == 1;
                if axes[a].len() == 1 && up {
                    w = 0.0;
                    break;
                }
                w *= if up { f } else { 1.0 - f };
                idx += (i + up as usize) * strides[a];
            }
            if w == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(&self.values[idx * self.dim..(idx + 1) * self.dim]) {
                *o += w * v;
            }
        }
        clamped
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Mode {
    OnDemand,
    Tabulated,
}

/// Raw fitted monotonicity and Lipschitz constants of `b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FittedConstants {
    pub c0: f64,
    pub c1: f64,
}

/// Safety factor applied to fitted constants before they damp the macro iteration.
const FIT_MARGIN: f64 = 1.1;

type Key = Vec<u64>;

/// Homogenised flux for one microscopic flux and regime.
pub struct HomogenizedFlux {
    flux: Arc<dyn Flux>,
    regime: RegimeClassification,
    grid: PeriodicGrid,
    settings: SolverSettings,
    table: Option<Table>,
    cache: Mutex<HashMap<Key, Vec<f64>>>,
    fitted: OnceLock<FittedConstants>,
    /// Coefficient matrix of a linear flux that ignores `(x, t)`.
    uniform: OnceLock<Vec<f64>>,
    warned: AtomicBool,
}

impl std::fmt::Debug for HomogenizedFlux {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HomogenizedFlux")
            .field("flux", &self.flux)
            .field("regime", &self.regime)
            .field("grid", &self.grid)
            .field("mode", &self.mode())
            .finish()
    }
}

fn key(parts: &[&[f64]]) -> Key {
    parts.iter().flat_map(|p| p.iter().map(|v| v.to_bits())).collect()
}

impl HomogenizedFlux {
    pub fn new(
        flux: Arc<dyn Flux>,
        regime: RegimeClassification,
        grid: PeriodicGrid,
        settings: SolverSettings,
    ) -> Result<HomogenizedFlux, HomError> {
        if grid.dim != flux.dim() {
            return Err(HomError::Invalid(format!("grid dimension {} but flux N = {}", grid.dim, flux.dim())));
        }
        fixed_nodes(flux.as_ref(), &regime.regime, &grid)?;
        Ok(HomogenizedFlux {
            flux,
            regime,
            grid,
            settings,
            table: None,
            cache: Mutex::new(HashMap::new()),
            fitted: OnceLock::new(),
            uniform: OnceLock::new(),
            warned: AtomicBool::new(false),
        })
    }

    pub fn mode(&self) -> Mode {
        if self.table.is_some() {
            Mode::Tabulated
        } else {
            Mode::OnDemand
        }
    }

    pub fn table(&self) -> Option<&Table> {
        self.table.as_ref()
    }

    pub fn regime(&self) -> &RegimeClassification {
        &self.regime
    }

    pub fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    pub fn settings(&self) -> SolverSettings {
        self.settings
    }

    pub fn micro(&self) -> &Arc<dyn Flux> {
        &self.flux
    }

    fn solve(&self, x: &[f64], t: f64, xi: &[f64]) -> Result<Vec<f64>, HomError> {
        homogenized_flux(self.flux.as_ref(), &MacroPoint::new(x, t), xi, &self.regime.regime, self.grid, &self.settings)
    }

    /// Homogenised coefficient matrix at `(x, t)` (linear fluxes), column-major.
    fn matrix(&self, x: &[f64], t: f64) -> Result<Vec<f64>, HomError> {
        let k = if self.flux.depends_on_macro() { key(&[x, &[t]]) } else { Vec::new() };
        if let Some(v) = self.cache.lock().unwrap().get(&k) {
            return Ok(v.clone());
        }
        let n = self.flux.dim();
        let mut cols = Vec::with_capacity(n * n);
        for r in 0..n {
            let mut e = vec![0.0; n];
            e[r] = 1.0;
            cols.extend(self.solve(x, t, &e)?);
        }
        self.cache.lock().unwrap().insert(k, cols.clone());
        Ok(cols)
    }

    /// On-demand value, bypassing any table.
    pub fn evaluate_direct(&self, x: &[f64], t: f64, xi: &[f64]) -> Result<Vec<f64>, HomError> {
        let n = self.flux.dim();
        if xi.len() != n || x.len() != n {
            return Err(HomError::Invalid(format!("expected x and xi of length {n}")));
        }
        if self.flux.is_linear() {
            let b = self.matrix(x, t)?;
            return Ok((0..n).map(|r| (0..n).map(|c| b[c * n + r] * xi[c]).sum()).collect());
        }
        let k = if self.flux.depends_on_macro() { key(&[x, &[t], xi]) } else { key(&[xi]) };
        if let Some(v) = self.cache.lock().unwrap().get(&k) {
            return Ok(v.clone());
        }
        let v = self.solve(x, t, xi)?;
        self.cache.lock().unwrap().insert(k, v.clone());
        Ok(v)
    }

    pub fn evaluate(&self, x: &[f64], t: f64, xi: &[f64]) -> Result<Vec<f64>, HomError> {
        match &self.table {
            None => self.evaluate_direct(x, t, xi),
            Some(table) => {
                let mut out = vec![0.0; self.flux.dim()];
                if table.interpolate(x, t, xi, &mut out)
                    && self.flux.depends_on_macro()
                    && !self.warned.swap(true, Ordering::Relaxed)
                {
                    log::warn!("homogenised flux table queried outside its (x, t) lattice; clamping");
                }
                Ok(out)
            }
        }
    }

    pub fn fitted(&self) -> FittedConstants {
        *self.fitted.get_or_init(|| self.fit())
    }

    fn fit(&self) -> FittedConstants {
        let n = self.flux.dim();
        let micro = self.flux.constants();
        let fallback = FittedConstants { c0: micro.c0, c1: micro.c1 * micro.c1 / micro.c0 };
        let fitted = match &self.table {
            Some(t) => fit_table(t),
            None => {
                let x = vec![0.5; n];
                if self.flux.is_linear() {
                    self.matrix(&x, 0.0).ok().map(|b| matrix_constants(&b, n))
                } else {
                    fit_probe(|xi| self.evaluate_direct(&x, 0.0, xi).ok(), n)
                }
            }
        };
        match fitted {
            Some(f) if f.c0.is_finite() && f.c0 > 0.0 && f.c1.is_finite() && f.c1 >= f.c0 => f,
            _ => fallback,
        }
    }
}

fn matrix_constants(b: &[f64], n: usize) -> FittedConstants {
    if n == 1 {
        return FittedConstants { c0: b[0], c1: b[0].abs() };
    }
    // column-major [b11, b21, b12, b22]
    let (p, q, r, s) = (b[0], b[2], b[1], b[3]);
    let off = 0.5 * (q + r);
    let c0 = 0.5 * (p + s) - (0.25 * (p - s).powi(2) + off * off).sqrt();
    // largest eigenvalue of B^T B
    let (g11, g12, g22) = (p * p + r * r, p * q + r * s, q * q + s * s);
    let c1 = (0.5 * (g11 + g22) + (0.25 * (g11 - g22).powi(2) + g12 * g12).sqrt()).sqrt();
    FittedConstants { c0, c1 }
}

fn fit_probe(mut eval: impl FnMut(&[f64]) -> Option<Vec<f64>>, n: usize) -> Option<FittedConstants> {
    let mut c0 = f64::INFINITY;
    let mut c1: f64 = 0.0;
    let levels = [-4.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 4.0];
    for r in 0..n {
        let vals: Vec<Vec<f64>> = levels
            .iter()
            .map(|&l| {
                let mut xi = vec![0.0; n];
                xi[r] = l;
                eval(&xi)
            })
            .collect::<Option<_>>()?;
        for i in 0..levels.len() - 1 {
            let h = levels[i + 1] - levels[i];
            let d: Vec<f64> = vals[i + 1].iter().zip(&vals[i]).map(|(a, b)| (a - b) / h).collect();
            c0 = c0.min(d[r]);
            c1 = c1.max(d.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
    }
    Some(FittedConstants { c0, c1 })
}

fn fit_table(t: &Table) -> Option<FittedConstants> {
    let n = t.dim;
    let axes = t.axes();
    let mut strides = vec![1usize; axes.len()];
    for a in (0..axes.len() - 1).rev() {
        strides[a] = strides[a + 1] * axes[a + 1].len();
    }
    let mut c0 = f64::INFINITY;
    let mut c1: f64 = 0.0;
    for idx in 0..t.node_count() {
        for r in 0..n {
            let pos = idx / strides[r] % axes[r].len();
            if pos + 1 >= axes[r].len() {
                continue;
            }
            let j = idx + strides[r];
            let h = axes[r][pos + 1] - axes[r][pos];
            let d: Vec<f64> = (0..n).map(|c| (t.values[j * n + c] - t.values[idx * n + c]) / h).collect();
            c0 = c0.min(d[r]);
            c1 = c1.max(d.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
    }
    (c0.is_finite()).then_some(FittedConstants { c0, c1 })
}

impl MacroFlux for HomogenizedFlux {
    fn dim(&self) -> usize {
        self.flux.dim()
    }

    fn constants(&self) -> StructureConstants {
        let f = self.fitted();
        StructureConstants { c0: f.c0 / FIT_MARGIN, c1: f.c1 * FIT_MARGIN, alpha: 1.0 }
    }

    fn eval_into(&self, x: &[f64], t: f64, xi: &[f64], out: &mut [f64]) -> Result<(), HomError> {
        let n = self.flux.dim();
        if self.table.is_none() && self.flux.is_linear() && !self.flux.depends_on_macro() && xi.len() == n {
            let b = match self.uniform.get() {
                Some(b) => b,
                None => {
                    let b = self.matrix(x, t)?;
                    self.uniform.get_or_init(|| b)
                }
            };
            for (r, o) in out.iter_mut().enumerate() {
                *o = (0..n).map(|c| b[c * n + r] * xi[c]).sum();
            }
            return Ok(());
        }
        let v = self.evaluate(x, t, xi)?;
        out.copy_from_slice(&v);
        Ok(())
    }

    fn describe(&self) -> String {
        format!("homogenised {} ({:?}, regime {})", self.flux.describe(), self.mode(), self.regime.regime.name())
    }
}

/// Fills a table by independent on-demand evaluations at every lattice node. The `(x, t)`
/// lattice collapses to a single node when the flux does not depend on `(x, t)`.
pub fn tabulate(
    hom: &HomogenizedFlux,
    xi_lattice: &[Axis],
    macro_lattice: &MacroLattice,
) -> Result<HomogenizedFlux, HomError> {
    let n = hom.flux.dim();
    if xi_lattice.len() != n || macro_lattice.x.len() != n {
        return Err(HomError::Invalid(format!("lattices must have {n} axes")));
    }
    if xi_lattice.iter().chain(&macro_lattice.x).chain(std::iter::once(&macro_lattice.t)).any(|a| a.count == 0) {
        return Err(HomError::Invalid("lattice axes need at least one node".into()));
    }
    let lattice = if hom.flux.depends_on_macro() { macro_lattice.clone() } else { MacroLattice::single(n) };
    let mut table = Table {
        dim: n,
        xi_axes: xi_lattice.iter().map(Axis::nodes).collect(),
        x_axes: lattice.x.iter().map(Axis::nodes).collect(),
        t_axis: lattice.t.nodes(),
        values: Vec::new(),
    };
    let values: Vec<Vec<f64>> = (0..table.node_count())
        .into_par_iter()
        .map(|idx| {
            let node = table.node(idx);
            hom.evaluate_direct(&node[n..2 * n], node[2 * n], &node[..n])
        })
        .collect::<Result<_, _>>()?;
    table.values = values.concat();
    Ok(HomogenizedFlux {
        flux: hom.flux.clone(),
        regime: hom.regime,
        grid: hom.grid,
        settings: hom.settings,
        table: Some(table),
        cache: Mutex::new(HashMap::new()),
        fitted: OnceLock::new(),
        uniform: OnceLock::new(),
        warned: AtomicBool::new(false),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HomogenizedReport {
    pub samples: usize,
    /// Zero at zero and monotonicity; the only asserted conditions.
    pub checks: Vec<ConditionCheck>,
    /// Smallest observed ratio `(b - b').(xi - xi') / |xi - xi'|^2`.
    pub fitted_c0: f64,
    /// Largest observed `|b - b'| / ((1 + |xi| + |xi'|)^(1 - beta) |xi - xi'|^beta)`.
    pub fitted_c1: f64,
    /// Exponent `beta = alpha / (2 - alpha)`.
    pub exponent: f64,
}

impl HomogenizedReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Sampled check that `b(0) = 0` and that `b` is monotone; growth constants are fitted.
/// Evaluations run in parallel; the reduction is sequential so the report is deterministic.
pub fn verify_homogenized(
    b: &dyn MacroFlux,
    alpha: f64,
    sampler: &Sampler,
    tol: f64,
) -> Result<HomogenizedReport, HomError> {
    let n = b.dim();
    let beta = alpha / (2.0 - alpha);
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed);
    let ball = |rng: &mut ChaCha8Rng| loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-sampler.k_radius..=sampler.k_radius)).collect();
        if norm(&v) <= sampler.k_radius {
            return v;
        }
    };
    let tuples: Vec<SampleTuple> = (0..sampler.count.max(1))
        .map(|_| {
            let x = (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect();
            let t = rng.gen_range(0.0..=sampler.t_max);
            let k = ball(&mut rng);
            let k_prime = ball(&mut rng);
            SampleTuple { x, t, y: Vec::new(), s: Vec::new(), k, k_prime }
        })
        .collect();
    let measured: Vec<(f64, f64, f64)> = tuples
        .par_iter()
        .map(|tp| {
            let mut zero = vec![0.0; n];
            let mut bk = vec![0.0; n];
            let mut bp = vec![0.0; n];
            b.eval_into(&tp.x, tp.t, &vec![0.0; n], &mut zero)?;
            b.eval_into(&tp.x, tp.t, &tp.k, &mut bk)?;
            b.eval_into(&tp.x, tp.t, &tp.k_prime, &mut bp)?;
            let dk: Vec<f64> = tp.k.iter().zip(&tp.k_prime).map(|(p, q)| p - q).collect();
            let db: Vec<f64> = bk.iter().zip(&bp).map(|(p, q)| p - q).collect();
            let d = norm(&dk);
            if d == 0.0 {
                return Ok((norm(&zero), f64::INFINITY, 0.0));
            }
            let mono = db.iter().zip(&dk).map(|(p, q)| p * q).sum::<f64>() / (d * d);
            let scale = (1.0 + norm(&tp.k) + norm(&tp.k_prime)).powf(1.0 - beta) * d.powf(beta);
            Ok((norm(&zero), mono, norm(&db) / scale))
        })
        .collect::<Result<_, HomError>>()?;

    let (mut zmax, mut zi) = (f64::NEG_INFINITY, 0);
    let (mut mmin, mut mi) = (f64::INFINITY, 0);
    let mut cmax: f64 = 0.0;
    for (i, &(z, m, c)) in measured.iter().enumerate() {
        if z > zmax || z.is_nan() {
            zmax = z;
            zi = i;
        }
        if m < mmin || m.is_nan() {
            mmin = m;
            mi = i;
        }
        cmax = cmax.max(c);
    }
    let checks = vec![
        ConditionCheck {
            condition: Condition::ZeroAtZero,
            passed: zmax <= tol,
            worst_value: zmax,
            threshold: tol,
            worst_sample: Some(tuples[zi].clone()),
        },
        ConditionCheck {
            condition: Condition::Monotonicity,
            passed: mmin >= -tol,
            worst_value: mmin,
            threshold: -tol,
            worst_sample: Some(tuples[mi].clone()),
        },
    ];
    Ok(HomogenizedReport { samples: tuples.len(), checks, fitted_c0: mmin, fitted_c1: cmax, exponent: beta })
}
