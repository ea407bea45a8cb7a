//! Cell-centered radial mesh and fields living on it.
//!
//! Cell i covers [i h, (i+1) h] and is sampled at its center r_i = (i + 1/2) h,
//! so the singular weights r^{-b} are never evaluated at the origin. Integrals
//! of |u|^p against r^{N-1-b} dr use the exact moment of the weight over each
//! cell, which is exact for piecewise-constant integrands and second order
//! otherwise. The Dirichlet energy is built from differences across cell faces
//! (zero flux at the origin, Dirichlet wall at r_max), so its Hessian is the
//! same three-point radial Laplacian used by the linearization and the time
//! stepper.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Surface measure of the unit sphere in R^N, 2π^{N/2}/Γ(N/2); 2 for N = 1.
pub fn unit_sphere_area(dim: u32) -> f64 {
    // Γ(N/2) for integer N via Γ(1/2) = √π and Γ(1) = 1.
    let mut gamma = if dim % 2 == 0 { 1.0 } else { PI.sqrt() };
    let mut x = if dim % 2 == 0 { 1.0 } else { 0.5 };
    let target = dim as f64 / 2.0;
    while x < target - 1e-12 {
        gamma *= x;
        x += 1.0;
    }
    2.0 * PI.powf(dim as f64 / 2.0) / gamma
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    pub dim: u32,
    pub r_max: f64,
    pub n: usize,
    pub h: f64,
    pub nodes: Vec<f64>,
    /// Shell volumes ω_{N-1} ∫_cell r^{N-1} dr.
    pub weights: Vec<f64>,
    surface: f64,
}

impl RadialGrid {
    pub fn new(dim: u32, r_max: f64, n: usize) -> Result<Self> {
        if dim == 0 || !(r_max > 0.0) || !r_max.is_finite() || n < 4 {
            return Err(Error::InvalidGrid(format!(
                "dim = {dim}, r_max = {r_max}, n = {n}"
            )));
        }
        let h = r_max / n as f64;
        let nodes: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * h).collect();
        let surface = unit_sphere_area(dim);
        let mut g = Self {
            dim,
            r_max,
            n,
            h,
            nodes,
            weights: Vec::new(),
            surface,
        };
        g.weights = g.moment_weights(0.0)?;
        Ok(g)
    }

    pub fn shared(dim: u32, r_max: f64, n: usize) -> Result<Arc<Self>> {
        Ok(Arc::new(Self::new(dim, r_max, n)?))
    }

    pub fn surface(&self) -> f64 {
        self.surface
    }

    /// Face radius j h for j = 0..=n.
    pub fn face(&self, j: usize) -> f64 {
        j as f64 * self.h
    }

    /// ω_{N-1} ∫_cell r^{N-1-b} dr for every cell.
    pub fn moment_weights(&self, b: f64) -> Result<Vec<f64>> {
        let k = self.dim as f64 - b;
        if !(k > 0.0) {
            return Err(Error::DivergentWeight { b, dim: self.dim });
        }
        let s = self.surface;
        Ok((0..self.n)
            .map(|i| {
                let lo = self.face(i);
                let hi = self.face(i + 1);
                s * (hi.powf(k) - lo.powf(k)) / k
            })
            .collect())
    }

    /// Cell averages of r^{-b}: the effective singular weight seen by a node.
    pub fn weight_averages(&self, b: f64) -> Result<Vec<f64>> {
        let wb = self.moment_weights(b)?;
        Ok(wb.iter().zip(&self.weights).map(|(a, w)| a / w).collect())
    }

    /// Face conductances ω_{N-1} r_f^{N-1}/h for faces 1..n-1, followed by the
    /// wall term 2 ω_{N-1} r_max^{N-1}/h acting on the last cell.
    pub fn conductances(&self) -> (Vec<f64>, f64) {
        let nm1 = self.dim as i32 - 1;
        let inner = (1..self.n)
            .map(|j| self.surface * self.face(j).powi(nm1) / self.h)
            .collect();
        let wall = 2.0 * self.surface * self.r_max.powi(nm1) / self.h;
        (inner, wall)
    }

    /// ‖∇u‖² as a sum of squared face differences (no cancellation).
    pub fn dirichlet_energy(&self, u: &[Complex64]) -> f64 {
        let nm1 = self.dim as i32 - 1;
        let mut s = 0.0;
        for j in 1..self.n {
            s += self.surface * self.face(j).powi(nm1) / self.h * (u[j] - u[j - 1]).norm_sqr();
        }
        s + 2.0 * self.surface * self.r_max.powi(nm1) / self.h * u[self.n - 1].norm_sqr()
    }

    /// Stiffness matrix A (tridiagonal, symmetric) with u^T A u = ‖∇u‖².
    pub fn stiffness(&self) -> Tridiag {
        let (c, wall) = self.conductances();
        let n = self.n;
        let mut diag = vec![0.0; n];
        for (j, cj) in c.iter().enumerate() {
            diag[j] += cj;
            diag[j + 1] += cj;
        }
        diag[n - 1] += wall;
        let off = c.iter().map(|x| -x).collect();
        Tridiag { diag, off }
    }

    /// Index of the last node with r_i ≤ r.
    pub fn index_at_or_below(&self, r: f64) -> Option<usize> {
        let x = r / self.h - 0.5;
        if x < 0.0 {
            None
        } else {
            Some((x.floor() as usize).min(self.n - 1))
        }
    }
}

/// Symmetric tridiagonal matrix: `diag` has length n, `off` length n-1.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl Tridiag {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut y: Vec<f64> = (0..n).map(|i| self.diag[i] * x[i]).collect();
        for i in 0..n - 1 {
            y[i] += self.off[i] * x[i + 1];
            y[i + 1] += self.off[i] * x[i];
        }
        y
    }

    pub fn apply_complex(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = self.len();
        let mut y: Vec<Complex64> = (0..n).map(|i| x[i] * self.diag[i]).collect();
        for i in 0..n - 1 {
            y[i] += x[i + 1] * self.off[i];
            y[i + 1] += x[i] * self.off[i];
        }
        y
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let n = self.len();
        let mut s: f64 = (0..n).map(|i| self.diag[i] * x[i] * x[i]).sum();
        for i in 0..n - 1 {
            s += 2.0 * self.off[i] * x[i] * x[i + 1];
        }
        s
    }

    /// Solve (self + diag(shift)) x = rhs by the Thomas algorithm.
    pub fn solve_shifted(&self, shift: &[f64], rhs: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut beta = self.diag[0] + shift[0];
        c[0] = if n > 1 { self.off[0] / beta } else { 0.0 };
        d[0] = rhs[0] / beta;
        for i in 1..n {
            beta = self.diag[i] + shift[i] - self.off[i - 1] * c[i - 1];
            if i < n - 1 {
                c[i] = self.off[i] / beta;
            }
            d[i] = (rhs[i] - self.off[i - 1] * d[i - 1]) / beta;
        }
        for i in (0..n - 1).rev() {
            d[i] -= c[i] * d[i + 1];
        }
        d
    }
}

/// Complex samples on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialField {
    pub grid: Arc<RadialGrid>,
    pub values: Vec<Complex64>,
}

impl RadialField {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.n {
            return Err(Error::InvalidGrid(format!(
                "{} values for {} nodes",
                values.len(),
                grid.n
            )));
        }
        if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidGrid("non-finite field value".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<RadialGrid>) -> Self {
        let n = grid.n;
        Self {
            grid,
            values: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn from_real(grid: Arc<RadialGrid>, values: &[f64]) -> Result<Self> {
        Self::new(grid, values.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes.iter().map(|&r| Complex64::new(f(r), 0.0)).collect();
        Self { grid, values }
    }

    pub fn real_part(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }

    pub fn moduli(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm()).collect()
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|z| z * c).collect(),
        }
    }

    pub fn scaled_real(&self, c: f64) -> Self {
        self.scaled(Complex64::new(c, 0.0))
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Linear interpolation of the samples at radius r: flat inside the first
    /// node (radial symmetry), linear to zero at the wall, zero beyond r_max.
    pub fn interpolate(&self, r: f64) -> Complex64 {
        interpolate_samples(&self.grid, &self.values, r)
    }
}

pub(crate) fn interpolate_samples(grid: &RadialGrid, v: &[Complex64], r: f64) -> Complex64 {
    let n = grid.n;
    if r >= grid.r_max {
        return Complex64::new(0.0, 0.0);
    }
    if r <= grid.nodes[0] {
        return v[0];
    }
    if r >= grid.nodes[n - 1] {
        let s = (grid.r_max - r) / (grid.r_max - grid.nodes[n - 1]);
        return v[n - 1] * s;
    }
    let x = r / grid.h - 0.5;
    let i = (x.floor() as usize).min(n - 2);
    let s = x - i as f64;
    v[i] * (1.0 - s) + v[i + 1] * s
}

/// Nodal derivative: centered differences inside, one-sided second order at
/// the first and last nodes.
pub fn nodal_derivative(h: f64, u: &[f64]) -> Vec<f64> {
    let n = u.len();
    let mut d = vec![0.0; n];
    if n < 3 {
        return d;
    }
    for i in 1..n - 1 {
        d[i] = (u[i + 1] - u[i - 1]) / (2.0 * h);
    }
    d[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h);
    d[n - 1] = (3.0 * u[n - 1] - 4.0 * u[n - 2] + u[n - 3]) / (2.0 * h);
    d
}

pub fn nodal_derivative_complex(h: f64, u: &[Complex64]) -> Vec<Complex64> {
    let re: Vec<f64> = u.iter().map(|z| z.re).collect();
    let im: Vec<f64> = u.iter().map(|z| z.im).collect();
    let dr = nodal_derivative(h, &re);
    let di = nodal_derivative(h, &im);
    dr.into_iter()
        .zip(di)
        .map(|(a, b)| Complex64::new(a, b))
        .collect()
}

/// Result of the mass-preserving rescaling u ↦ λ^{N/2} u(λ r).
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledField {
    pub field: RadialField,
    /// Set when the resampled mass differs from the original by more than 1%,
    /// i.e. the rescaled profile is no longer resolved by (or contained in) the grid.
    pub resolution_loss: bool,
}

pub fn scale_field(u: &RadialField, lambda: f64) -> Result<ScaledField> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::MalformedParameters(format!("scale factor {lambda}")));
    }
    let g = &u.grid;
    let amp = lambda.powf(g.dim as f64 / 2.0);
    let values: Vec<Complex64> = if lambda == 1.0 {
        u.values.clone()
    } else {
        g.nodes
            .iter()
            .map(|&r| interpolate_samples(g, &u.values, lambda * r) * amp)
            .collect()
    };
    let field = RadialField {
        grid: g.clone(),
        values,
    };
    let m0 = l2_sq(g, &u.values);
    let m1 = l2_sq(g, &field.values);
    let resolution_loss = m0 > 0.0 && ((m1 - m0) / m0).abs() > 1e-2;
    Ok(ScaledField {
        field,
        resolution_loss,
    })
}

pub(crate) fn l2_sq(g: &RadialGrid, v: &[Complex64]) -> f64 {
    v.iter().zip(&g.weights).map(|(z, w)| z.norm_sqr() * w).sum()
}
