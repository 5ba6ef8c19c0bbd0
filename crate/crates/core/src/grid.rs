//! Uniform meshes on the unit cube, the discrete gradient/divergence pair, spectral solvers for
//! the shifted discrete Laplacian and the damped preconditioned fixed-point iteration.
//!
//! Nodal unknowns live on the mesh vertices. Each mesh cell carries gradient samples: one in 1D,
//! four in 2D (every combination of a bottom/top x-difference and a left/right y-difference).
//! The flux is evaluated once per sample at the cell centre and the residual is `G^T W a`, so the
//! discrete operator inherits the monotonicity and Lipschitz constants of the flux and `G^T W G`
//! is the standard 3- or 5-point Laplacian.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("unsupported dimension {0} (must be 1 or 2)")]
    Dimension(usize),
    #[error("{what} = {got} is too small (minimum {min})")]
    TooSmall { what: &'static str, got: usize, min: usize },
}

/// Discretisation of the unit cell `Y` (and of each temporal cell `S_j`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodicGrid {
    pub dim: usize,
    pub ny: usize,
    pub ns: usize,
}

impl PeriodicGrid {
    pub fn new(dim: usize, ny: usize, ns: usize) -> Result<PeriodicGrid, GridError> {
        if !(1..=2).contains(&dim) {
            return Err(GridError::Dimension(dim));
        }
        if ny < 4 {
            return Err(GridError::TooSmall { what: "ny", got: ny, min: 4 });
        }
        if ns < 4 {
            return Err(GridError::TooSmall { what: "ns", got: ns, min: 4 });
        }
        Ok(PeriodicGrid { dim, ny, ns })
    }

    pub fn hy(&self) -> f64 {
        1.0 / self.ny as f64
    }

    pub fn hs(&self) -> f64 {
        1.0 / self.ns as f64
    }

    /// Midpoint nodes `(j + 1/2) / ns` of a temporal cell coordinate.
    pub fn s_nodes(&self) -> Vec<f64> {
        (0..self.ns).map(|j| (j as f64 + 0.5) / self.ns as f64).collect()
    }

    pub fn mesh(&self) -> Mesh {
        Mesh::periodic(self.dim, self.ny)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    Periodic,
    /// Homogeneous Dirichlet: boundary vertices are fixed at zero and not stored.
    Dirichlet,
}

/// A uniform mesh of `n` intervals per direction on `(0,1)^dim`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mesh {
    dim: usize,
    n: usize,
    boundary: Boundary,
}

/// Gradient samples of one cell: up to four vectors of length two (unused slots are zero).
pub type Samples = [[f64; 2]; 4];

impl Mesh {
    pub fn periodic(dim: usize, n: usize) -> Mesh {
        assert!((1..=2).contains(&dim) && n >= 2);
        Mesh { dim, n, boundary: Boundary::Periodic }
    }

    pub fn dirichlet(dim: usize, n: usize) -> Mesh {
        assert!((1..=2).contains(&dim) && n >= 2);
        Mesh { dim, n, boundary: Boundary::Dirichlet }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// `h^dim`, the volume of one cell.
    pub fn volume(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    fn line(&self) -> usize {
        match self.boundary {
            Boundary::Periodic => self.n,
            Boundary::Dirichlet => self.n - 1,
        }
    }

    pub fn unknowns(&self) -> usize {
        self.line().pow(self.dim as u32)
    }

    pub fn cells(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn samples_per_cell(&self) -> usize {
        if self.dim == 1 {
            1
        } else {
            4
        }
    }

    /// Quadrature weight of one gradient sample.
    pub fn sample_weight(&self) -> f64 {
        1.0 / self.samples_per_cell() as f64
    }

    /// Cell centre coordinates (second entry unused in 1D).
    pub fn cell_centre(&self, cell: usize) -> [f64; 2] {
        let h = self.h();
        if self.dim == 1 {
            [(cell as f64 + 0.5) * h, 0.0]
        } else {
            let (i, j) = (cell / self.n, cell % self.n);
            [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]
        }
    }

    /// Coordinates of unknown `idx`.
    pub fn node_coords(&self, idx: usize) -> [f64; 2] {
        let h = self.h();
        let off = match self.boundary {
            Boundary::Periodic => 0,
            Boundary::Dirichlet => 1,
        };
        if self.dim == 1 {
            [(idx + off) as f64 * h, 0.0]
        } else {
            let line = self.line();
            [((idx / line) + off) as f64 * h, ((idx % line) + off) as f64 * h]
        }
    }

    /// Storage index of vertex `(i, j)`, `None` for a Dirichlet boundary vertex.
    #[inline]
    fn vertex(&self, i: usize, j: usize) -> Option<usize> {
        let n = self.n;
        match self.boundary {
            Boundary::Periodic => Some(if self.dim == 1 { i % n } else { (i % n) * n + j % n }),
            Boundary::Dirichlet => {
                if i == 0 || i == n || (self.dim == 2 && (j == 0 || j == n)) {
                    None
                } else if self.dim == 1 {
                    Some(i - 1)
                } else {
                    Some((i - 1) * (n - 1) + (j - 1))
                }
            }
        }
    }

    #[inline]
    fn corners(&self, cell: usize) -> [Option<usize>; 4] {
        if self.dim == 1 {
            [self.vertex(cell, 0), self.vertex(cell + 1, 0), None, None]
        } else {
            let (i, j) = (cell / self.n, cell % self.n);
            [self.vertex(i, j), self.vertex(i + 1, j), self.vertex(i, j + 1), self.vertex(i + 1, j + 1)]
        }
    }

    /// Gradient samples `G_q u` of one cell.
    #[inline]
    pub fn cell_gradients(&self, u: &[f64], cell: usize) -> Samples {
        let inv_h = self.n as f64;
        let c = self.corners(cell);
        let val = |k: usize| c[k].map_or(0.0, |i| u[i]);
        let mut g = [[0.0; 2]; 4];
        if self.dim == 1 {
            g[0][0] = (val(1) - val(0)) * inv_h;
        } else {
            let (u00, u10, u01, u11) = (val(0), val(1), val(2), val(3));
            let dx = [(u10 - u00) * inv_h, (u11 - u01) * inv_h];
            let dy = [(u01 - u00) * inv_h, (u11 - u10) * inv_h];
            for (q, gq) in g.iter_mut().enumerate() {
                *gq = [dx[q / 2], dy[q % 2]];
            }
        }
        g
    }

    /// Adds `w * G_q^T a_q` of one cell into `out`.
    #[inline]
    fn scatter(&self, cell: usize, fluxes: &Samples, out: &mut [f64]) {
        let c = self.corners(cell);
        let scale = self.n as f64 * self.sample_weight();
        let mut add = |k: usize, v: f64| {
            if let Some(i) = c[k] {
                out[i] += scale * v;
            }
        };
        if self.dim == 1 {
            add(1, fluxes[0][0]);
            add(0, -fluxes[0][0]);
        } else {
            for (q, a) in fluxes.iter().enumerate() {
                // x-difference: bottom edge (0 -> 1) or top edge (2 -> 3)
                let (xa, xb) = if q / 2 == 0 { (0, 1) } else { (2, 3) };
                add(xb, a[0]);
                add(xa, -a[0]);
                // y-difference: left edge (0 -> 2) or right edge (1 -> 3)
                let (ya, yb) = if q % 2 == 0 { (0, 2) } else { (1, 3) };
                add(yb, a[1]);
                add(ya, -a[1]);
            }
        }
    }

    /// `out = G^T W a(xi + G u)`, the nodal discrete form of `-div a(xi + grad u)`.
    /// `flux(cell, k, a)` writes the flux for gradient sample `k` of `cell`.
    pub fn divergence_form<F>(&self, u: &[f64], xi: &[f64], out: &mut [f64], mut flux: F)
    where
        F: FnMut(usize, &[f64], &mut [f64]),
    {
        out.iter_mut().for_each(|v| *v = 0.0);
        let d = self.dim;
        let mut k = [0.0; 2];
        let mut a = [0.0; 2];
        for cell in 0..self.cells() {
            let g = self.cell_gradients(u, cell);
            let mut fluxes = [[0.0; 2]; 4];
            for q in 0..self.samples_per_cell() {
                for r in 0..d {
                    k[r] = xi.get(r).copied().unwrap_or(0.0) + g[q][r];
                }
                flux(cell, &k[..d], &mut a[..d]);
                fluxes[q][..d].copy_from_slice(&a[..d]);
            }
            self.scatter(cell, &fluxes, out);
        }
    }

    /// `<L u, u>_h = h^dim sum_cells sum_q w |G_q u|^2`.
    pub fn dirichlet_energy(&self, u: &[f64]) -> f64 {
        let w = self.sample_weight();
        let mut total = 0.0;
        for cell in 0..self.cells() {
            let g = self.cell_gradients(u, cell);
            for gq in g.iter().take(self.samples_per_cell()) {
                total += w * (gq[0] * gq[0] + gq[1] * gq[1]);
            }
        }
        total * self.volume()
    }

    /// Discrete `<u, v>_h`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() * self.volume()
    }

    pub fn mean(&self, u: &[f64]) -> f64 {
        u.iter().sum::<f64>() / u.len() as f64
    }
}

/// Solves `(alpha I + beta L) x = r` by diagonalising the discrete Laplacian `L`:
/// FFT for periodic meshes, DST-I (through a length-`2n` FFT) for Dirichlet meshes.
/// With `alpha = 0` on a periodic mesh the mean-zero pseudo-inverse is returned.
#[derive(Clone)]
pub struct SpectralSolver {
    mesh: Mesh,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    eigen: Vec<f64>,
}

impl std::fmt::Debug for SpectralSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralSolver").field("mesh", &self.mesh).finish()
    }
}

impl SpectralSolver {
    pub fn new(mesh: Mesh) -> SpectralSolver {
        let n = mesh.n;
        let h2 = mesh.h() * mesh.h();
        let mut planner = FftPlanner::new();
        let (len, eigen) = match mesh.boundary {
            Boundary::Periodic => {
                let e = (0..n).map(|k| 4.0 / h2 * (std::f64::consts::PI * k as f64 / n as f64).sin().powi(2)).collect();
                (n, e)
            }
            Boundary::Dirichlet => {
                let e = (1..n)
                    .map(|k| 4.0 / h2 * (std::f64::consts::PI * k as f64 / (2 * n) as f64).sin().powi(2))
                    .collect();
                (2 * n, e)
            }
        };
        SpectralSolver {
            mesh,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
            eigen,
        }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    fn symbol(&self, idx: usize, alpha: f64, beta: f64) -> f64 {
        let line = self.eigen.len();
        let lam = if self.mesh.dim == 1 { self.eigen[idx] } else { self.eigen[idx / line] + self.eigen[idx % line] };
        alpha + beta * lam
    }

    pub fn solve(&self, alpha: f64, beta: f64, rhs: &[f64], out: &mut [f64]) {
        match self.mesh.boundary {
            Boundary::Periodic => self.solve_periodic(alpha, beta, rhs, out),
            Boundary::Dirichlet => self.solve_dirichlet(alpha, beta, rhs, out),
        }
    }

    fn along_axes(&self, data: &mut [Complex<f64>], fft: &dyn Fft<f64>) {
        let n = self.mesh.n;
        if self.mesh.dim == 1 {
            fft.process(data);
            return;
        }
        for row in data.chunks_mut(n) {
            fft.process(row);
        }
        let mut col = vec![Complex::new(0.0, 0.0); n];
        for j in 0..n {
            for i in 0..n {
                col[i] = data[i * n + j];
            }
            fft.process(&mut col);
            for i in 0..n {
                data[i * n + j] = col[i];
            }
        }
    }

    fn solve_periodic(&self, alpha: f64, beta: f64, rhs: &[f64], out: &mut [f64]) {
        let mut data: Vec<Complex<f64>> = rhs.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.along_axes(&mut data, self.forward.as_ref());
        for (idx, z) in data.iter_mut().enumerate() {
            let sym = self.symbol(idx, alpha, beta);
            *z = if sym == 0.0 { Complex::new(0.0, 0.0) } else { *z / sym };
        }
        self.along_axes(&mut data, self.inverse.as_ref());
        let scale = 1.0 / data.len() as f64;
        for (o, z) in out.iter_mut().zip(&data) {
            *o = z.re * scale;
        }
    }

    /// Unnormalised DST-I of one line of length `n - 1`, in place.
    fn dst_line(&self, line: &mut [f64], buf: &mut [Complex<f64>]) {
        let n = self.mesh.n;
        buf.iter_mut().for_each(|z| *z = Complex::new(0.0, 0.0));
        for (j, &v) in line.iter().enumerate() {
            buf[j + 1] = Complex::new(v, 0.0);
            buf[2 * n - j - 1] = Complex::new(-v, 0.0);
        }
        self.forward.process(buf);
        for (k, v) in line.iter_mut().enumerate() {
            *v = -0.5 * buf[k + 1].im;
        }
    }

    fn dst(&self, data: &mut [f64]) {
        let m = self.mesh.n - 1;
        let mut buf = vec![Complex::new(0.0, 0.0); 2 * self.mesh.n];
        if self.mesh.dim == 1 {
            self.dst_line(data, &mut buf);
            return;
        }
        for row in data.chunks_mut(m) {
            self.dst_line(row, &mut buf);
        }
        let mut col = vec![0.0; m];
        for j in 0..m {
            for i in 0..m {
                col[i] = data[i * m + j];
            }
            self.dst_line(&mut col, &mut buf);
            for i in 0..m {
                data[i * m + j] = col[i];
            }
        }
    }

    fn solve_dirichlet(&self, alpha: f64, beta: f64, rhs: &[f64], out: &mut [f64]) {
        out.copy_from_slice(rhs);
        self.dst(out);
        for (idx, v) in out.iter_mut().enumerate() {
            *v /= self.symbol(idx, alpha, beta);
        }
        self.dst(out);
        let scale = (2.0 / self.mesh.n as f64).powi(self.mesh.dim as i32);
        out.iter_mut().for_each(|v| *v *= scale);
    }
}

/// Preconditioner `P = alpha I + beta L` and damping `tau` of the iteration
/// `u <- u - tau P^{-1} F(u)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Damping {
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
}

impl Damping {
    /// Stationary problems: `P = L`, `tau = c0 / c1^2`.
    pub fn elliptic(c0: f64, c1: f64) -> Damping {
        Damping { alpha: 0.0, beta: 1.0, tau: c0 / (c1 * c1) }
    }

    /// One implicit Euler step of size `dt`: `P = I/dt + c1 L`, `tau = c0 / c1`.
    pub fn implicit_step(c0: f64, c1: f64, dt: f64) -> Damping {
        Damping { alpha: 1.0 / dt, beta: c1, tau: c0 / c1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationOutcome {
    pub converged: bool,
    pub iterations: usize,
    /// Residual `sqrt(<F, P^{-1} F>_h)` at the returned iterate.
    pub residual: f64,
    pub history: Vec<f64>,
}

/// Runs the damped fixed point from the initial `u` until the residual drops to `tol`.
/// `residual(u, out)` writes `F(u)`. With `mean_zero` the iterate is recentred after each update.
pub fn damped_fixed_point<F>(
    solver: &SpectralSolver,
    damping: Damping,
    u: &mut [f64],
    tol: f64,
    max_iter: usize,
    mean_zero: bool,
    mut residual: F,
) -> IterationOutcome
where
    F: FnMut(&[f64], &mut [f64]),
{
    let mesh = *solver.mesh();
    let mut r = vec![0.0; u.len()];
    let mut d = vec![0.0; u.len()];
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        residual(u, &mut r);
        solver.solve(damping.alpha, damping.beta, &r, &mut d);
        let res = mesh.inner(&r, &d).max(0.0).sqrt();
        history.push(res);
        if res <= tol || !res.is_finite() {
            return IterationOutcome { converged: res <= tol, iterations, residual: res, history };
        }
        if iterations >= max_iter {
            return IterationOutcome { converged: false, iterations, residual: res, history };
        }
        for (ui, di) in u.iter_mut().zip(&d) {
            *ui -= damping.tau * di;
        }
        if mean_zero {
            let m = mesh.mean(u);
            u.iter_mut().for_each(|v| *v -= m);
        }
        iterations += 1;
    }
}
