//! Radial sectors of the linearized operator around a ground state Q:
//!
//! L₊,ₖ = -∂_rr - (N-1)/r ∂_r + k(k+N-2)/r² + ω
//!        + (p1-1) r^{-b1} Q^{p1-2} - (p2-1) r^{-b2} Q^{p2-2}.
//!
//! The matrix is the second variation of the discrete action (stiffness plus
//! weighted potentials) with the centrifugal term added at the nodes; the
//! generalized problem L v = λ W v is made symmetric by conjugating with W^{1/2}.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::Discretization;
use crate::grid::RadialGrid;
use crate::linalg::{inverse_iteration, lowest_eigenvalues, sturm_count, tridiag_apply};
use crate::params::ModelParams;

#[derive(Debug, Clone)]
pub struct SectorOperator {
    pub k: u32,
    pub grid: Arc<RadialGrid>,
    /// Unsymmetrized matrix (acts on nodal values, output is integrated against cells).
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
    /// W^{-1/2} L W^{-1/2}.
    pub sym_diag: Vec<f64>,
    pub sym_off: Vec<f64>,
}

impl SectorOperator {
    /// Nodal values of L f.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        tridiag_apply(&self.diag, &self.off, f)
            .into_iter()
            .zip(&self.grid.weights)
            .map(|(a, w)| a / w)
            .collect()
    }

    /// ⟨L f, g⟩ = Σ (L f)_i g_i W_i.
    pub fn form(&self, f: &[f64], g: &[f64]) -> f64 {
        tridiag_apply(&self.diag, &self.off, f)
            .iter()
            .zip(g)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Largest |M_ij - M_ji| over the symmetric form, relative to its norm.
    /// Zero by construction since only one off-diagonal is stored; kept as the
    /// quantity the invariants refer to.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        let w = &self.grid.weights;
        let mut norm: f64 = 0.0;
        for i in 0..self.off.len() {
            let upper = self.off[i] / (w[i] * w[i + 1]).sqrt();
            let lower = self.off[i] / (w[i + 1] * w[i]).sqrt();
            worst = worst.max((upper - lower).abs());
            norm = norm.max(upper.abs());
        }
        for d in &self.sym_diag {
            norm = norm.max(d.abs());
        }
        if norm == 0.0 {
            0.0
        } else {
            worst / norm
        }
    }
}

/// Centrifugal weight k(k+N-2)/r_i² at the nodes.
pub fn centrifugal(grid: &RadialGrid, k: u32) -> Vec<f64> {
    let c = (k as f64) * (k as f64 + grid.dim as f64 - 2.0);
    grid.nodes.iter().map(|r| c / (r * r)).collect()
}

pub fn assemble_sector(p: &ModelParams, q: &[f64], grid: Arc<RadialGrid>, k: u32) -> Result<SectorOperator> {
    if q.len() != grid.n {
        return Err(Error::GridMismatch);
    }
    let d = Discretization::new(p, grid.clone())?;
    let w = &grid.weights;
    let cf = centrifugal(&grid, k);
    let mut diag = d.stiffness.diag.clone();
    for i in 0..grid.n {
        let m = q[i].abs();
        let (v1, v2) = if m > 0.0 {
            (
                (p.p1 - 1.0) * d.wb1[i] * m.powf(p.p1 - 2.0),
                (p.p2 - 1.0) * d.wb2[i] * m.powf(p.p2 - 2.0),
            )
        } else {
            (0.0, 0.0)
        };
        diag[i] += w[i] * (cf[i] + p.omega) + v1 - v2;
    }
    let off = d.stiffness.off.clone();
    let sym_diag = diag.iter().zip(w).map(|(a, b)| a / b).collect();
    let sym_off = off
        .iter()
        .enumerate()
        .map(|(i, a)| a / (w[i] * w[i + 1]).sqrt())
        .collect();
    Ok(SectorOperator {
        k,
        grid,
        diag,
        off,
        sym_diag,
        sym_off,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub k: u32,
    pub lowest_eigs: Vec<f64>,
    /// ‖Mv - λv‖ for the unit eigenvectors of the symmetrized matrix.
    pub residuals: Vec<f64>,
    pub negative_count: usize,
    /// (eigenvalue, index among lowest_eigs) with |λ| below the kernel tolerance.
    pub kernel_candidates: Vec<(f64, usize)>,
    pub kernel_tolerance: f64,
    /// Nodal eigenvectors (not exported unless asked for).
    #[serde(skip)]
    pub vectors: Vec<Vec<f64>>,
}

/// Kernel tolerance C·h².
pub const KERNEL_CONSTANT: f64 = 10.0;

pub fn low_spectrum(op: &SectorOperator, count: usize) -> Result<SpectrumReport> {
    let eigs = lowest_eigenvalues(&op.sym_diag, &op.sym_off, count, 1e-13);
    let mut residuals = Vec::with_capacity(eigs.len());
    let mut vectors = Vec::with_capacity(eigs.len());
    for &l in &eigs {
        let (v, res) = inverse_iteration(&op.sym_diag, &op.sym_off, l)?;
        residuals.push(res);
        // Back to nodal values: f = W^{-1/2} v.
        vectors.push(
            v.iter()
                .zip(&op.grid.weights)
                .map(|(a, w)| a / w.sqrt())
                .collect(),
        );
    }
    let h = op.grid.h;
    let kernel_tolerance = KERNEL_CONSTANT * h * h;
    let kernel_candidates = eigs
        .iter()
        .enumerate()
        .filter(|(_, l)| l.abs() < kernel_tolerance)
        .map(|(i, l)| (*l, i))
        .collect();
    Ok(SpectrumReport {
        k: op.k,
        negative_count: sturm_count(&op.sym_diag, &op.sym_off, 0.0),
        lowest_eigs: eigs,
        residuals,
        kernel_candidates,
        kernel_tolerance,
        vectors,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NondegeneracyCertificate {
    pub sectors: Vec<SpectrumReport>,
    pub morse_index: usize,
    /// ‖L₊,₁[∂_r Q]‖ / ‖∂_r Q‖ in the weighted norm.
    pub k1_residual: f64,
    pub kernel_dim_k0: usize,
    pub lowest_k2: f64,
    /// ⟨L₊,₀[∂_r Q], ∂_r Q⟩.
    pub l0_form: f64,
    /// |⟨v, ∂_r Q⟩|/(‖v‖‖∂_r Q‖) for the eigenvector of the smallest-|λ| k=1 eigenvalue.
    pub k1_alignment: f64,
    pub sectors_increasing: bool,
    pub morse_index_one: bool,
    pub k1_residual_small: bool,
    pub kernel_k0_empty: bool,
    pub k2_positive: bool,
    pub l0_negative: bool,
}

impl NondegeneracyCertificate {
    pub fn all_expectations_met(&self) -> bool {
        self.morse_index_one
            && self.k1_residual_small
            && self.kernel_k0_empty
            && self.k2_positive
            && self.l0_negative
            && self.sectors_increasing
    }
}

fn weighted_dot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum()
}

/// Sectors k = 0, 1, 2 around the profile `q` with radial derivative `q_r`.
pub fn nondegeneracy_report(
    p: &ModelParams,
    q: &[f64],
    q_r: &[f64],
    grid: Arc<RadialGrid>,
) -> Result<NondegeneracyCertificate> {
    let ops: Vec<SectorOperator> = (0..3)
        .map(|k| assemble_sector(p, q, grid.clone(), k))
        .collect::<Result<_>>()?;
    let sectors: Vec<SpectrumReport> = ops
        .par_iter()
        .map(|op| low_spectrum(op, 5))
        .collect::<Result<_>>()?;
    let w = &grid.weights;
    let nq = weighted_dot(w, q_r, q_r).sqrt();
    let l1 = ops[1].apply(q_r);
    let k1_residual = weighted_dot(w, &l1, &l1).sqrt() / nq;
    let l0_form = ops[0].form(q_r, q_r);
    let s1 = &sectors[1];
    let closest = s1
        .lowest_eigs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let v = &s1.vectors[closest];
    let k1_alignment =
        weighted_dot(w, v, q_r).abs() / (weighted_dot(w, v, v).sqrt() * nq);
    let sectors_increasing = sectors
        .windows(2)
        .all(|s| s[1].lowest_eigs[0] > s[0].lowest_eigs[0]);
    let morse_index = sectors[0].negative_count;
    let kernel_dim_k0 = sectors[0].kernel_candidates.len();
    let lowest_k2 = sectors[2].lowest_eigs[0];
    Ok(NondegeneracyCertificate {
        morse_index,
        k1_residual,
        kernel_dim_k0,
        lowest_k2,
        l0_form,
        k1_alignment,
        sectors_increasing,
        morse_index_one: morse_index == 1,
        k1_residual_small: k1_residual <= 1e-3,
        kernel_k0_empty: kernel_dim_k0 == 0,
        k2_positive: lowest_k2 > 0.0,
        l0_negative: l0_form < 0.0,
        sectors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn zero_profile(g: &RadialGrid) -> Vec<f64> {
        vec![0.0; g.n]
    }

    #[test]
    fn free_operator_with_mass_is_positive() {
        let p = ModelParams::benchmark();
        let g = RadialGrid::shared(3, 20.0, 400).unwrap();
        let op = assemble_sector(&p, &zero_profile(&g), g.clone(), 0).unwrap();
        let s = low_spectrum(&op, 5).unwrap();
        assert!(s.lowest_eigs[0] >= 1.0);
        assert_eq!(s.negative_count, 0);
    }

    #[test]
    fn centrifugal_at_k1() {
        let g = RadialGrid::new(3, 5.0, 50).unwrap();
        let c = centrifugal(&g, 1);
        for (r, v) in g.nodes.iter().zip(&c) {
            assert!((v - 2.0 / (r * r)).abs() < 1e-14 * v);
        }
    }

    /// Positive roots of tan x = x (zeros of the spherical Bessel j_1).
    fn j1_zeros(m: usize) -> Vec<f64> {
        (1..=m)
            .map(|k| {
                let mut x = (k as f64 + 0.5) * PI - 1e-3;
                for _ in 0..50 {
                    let f = x.sin() - x * x.cos();
                    let d = x * x.sin();
                    x -= f / d;
                }
                x
            })
            .collect()
    }

    #[test]
    fn dirichlet_laplacian_matches_bessel_zeros() {
        let p = ModelParams::benchmark().with_omega(0.0);
        let r_max = 10.0;
        let g = RadialGrid::shared(3, r_max, 2000).unwrap();
        let z = zero_profile(&g);
        let s0 = low_spectrum(&assemble_sector(&p, &z, g.clone(), 0).unwrap(), 4).unwrap();
        for (m, l) in s0.lowest_eigs.iter().enumerate() {
            let exact = ((m + 1) as f64 * PI / r_max).powi(2);
            assert!((l - exact).abs() < 1e-4 * exact, "k=0 m={m}: {l} vs {exact}");
        }
        let s1 = low_spectrum(&assemble_sector(&p, &z, g.clone(), 1).unwrap(), 3).unwrap();
        for (l, j) in s1.lowest_eigs.iter().zip(j1_zeros(3)) {
            let exact = (j / r_max).powi(2);
            assert!((l - exact).abs() < 1e-3 * exact, "k=1: {l} vs {exact}");
        }
        for r in s0.residuals.iter().chain(&s1.residuals) {
            assert!(*r < 1e-6, "{r}");
        }
    }

    #[test]
    fn sectors_increase_with_k() {
        let p = ModelParams::benchmark();
        let g = RadialGrid::shared(3, 20.0, 800).unwrap();
        let q: Vec<f64> = g.nodes.iter().map(|r| 3.0 * (-r * r).exp()).collect();
        let mut prev = f64::NEG_INFINITY;
        for k in 0..4 {
            let op = assemble_sector(&p, &q, g.clone(), k).unwrap();
            assert!(op.asymmetry() <= 1e-12);
            let l = low_spectrum(&op, 1).unwrap().lowest_eigs[0];
            assert!(l > prev);
            prev = l;
        }
    }

    #[test]
    fn similarity_preserves_spectrum() {
        // The symmetrized matrix and the generalized problem share eigenvalues:
        // L f = λ W f for f = W^{-1/2} v.
        let p = ModelParams::benchmark();
        let g = RadialGrid::shared(3, 15.0, 300).unwrap();
        let q: Vec<f64> = g.nodes.iter().map(|r| 2.0 * (-r * r / 2.0).exp()).collect();
        let op = assemble_sector(&p, &q, g.clone(), 0).unwrap();
        let s = low_spectrum(&op, 3).unwrap();
        for (l, f) in s.lowest_eigs.iter().zip(&s.vectors) {
            let lf = op.apply(f);
            let err: f64 = lf.iter().zip(f).map(|(a, b)| (a - l * b).abs()).fold(0.0, f64::max);
            let scale = f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            assert!(err < 1e-6 * scale * l.abs().max(1.0), "{err}");
        }
    }
}
