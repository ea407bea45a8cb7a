//! Virial weights, localized virial quantities, Morawetz averages and the
//! scattering and coercivity monitors.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::Trajectory;
use crate::functionals::Discretization;
use crate::grid::{RadialField, RadialGrid};
use crate::linalg::solve_dense;
use crate::params::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightKind {
    /// ψ = r².
    Quadratic,
    /// r² on [0, R], 0 beyond 2R.
    CutoffPsi,
    /// r²/2 on [0, R/2], R r beyond R.
    MorawetzZeta,
}

/// Degree-7 polynomial on [a, a + len] matching value and three derivatives
/// at both ends.
#[derive(Debug, Clone, PartialEq)]
struct Blend {
    a: f64,
    len: f64,
    coeffs: [f64; 8],
}

impl Blend {
    fn new(a: f64, b: f64, left: [f64; 4], right: [f64; 4]) -> Result<Self> {
        let len = b - a;
        // P(s) = Σ c_k s^k on s ∈ [0, 1]; d^m/dr^m = L^{-m} d^m/ds^m.
        let mut rows = Vec::with_capacity(8);
        let mut rhs = Vec::with_capacity(8);
        for (s, vals) in [(0.0, left), (1.0, right)] {
            for (m, v) in vals.iter().enumerate() {
                let row = (0..8)
                    .map(|k| {
                        if k < m {
                            0.0
                        } else {
                            falling(k, m) * if k == m { 1.0 } else { f64::powi(s, (k - m) as i32) }
                        }
                    })
                    .collect();
                rows.push(row);
                rhs.push(v * len.powi(m as i32));
            }
        }
        let c = solve_dense(rows, rhs)?;
        let mut coeffs = [0.0; 8];
        coeffs.copy_from_slice(&c);
        Ok(Self { a, len, coeffs })
    }

    /// Value and first four derivatives at r.
    fn eval(&self, r: f64) -> [f64; 5] {
        let s = (r - self.a) / self.len;
        let mut out = [0.0; 5];
        for (m, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in (m..8).rev() {
                acc = acc * s + self.coeffs[k] * falling(k, m);
            }
            *o = acc / self.len.powi(m as i32);
        }
        out
    }
}

/// k (k-1) ... (k-m+1).
fn falling(k: usize, m: usize) -> f64 {
    (0..m).map(|j| (k - j) as f64).product()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintViolation {
    pub constraint: String,
    /// Worst sample: where and what value.
    pub r: f64,
    pub value: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VirialWeight {
    pub kind: WeightKind,
    pub radius: f64,
    pub dim: u32,
    blend: Option<Blend>,
    /// Sampled constraint checks that failed, one entry per constraint
    /// (warnings, not errors).
    pub violations: Vec<ConstraintViolation>,
}

impl VirialWeight {
    /// ψ, ψ′, ψ″, ψ‴, ψ⁗ at r.
    pub fn derivatives(&self, r: f64) -> [f64; 5] {
        let big_r = self.radius;
        match self.kind {
            WeightKind::Quadratic => [r * r, 2.0 * r, 2.0, 0.0, 0.0],
            WeightKind::CutoffPsi => {
                if r <= big_r {
                    [r * r, 2.0 * r, 2.0, 0.0, 0.0]
                } else if r >= 2.0 * big_r {
                    [0.0; 5]
                } else {
                    self.blend.as_ref().unwrap().eval(r)
                }
            }
            WeightKind::MorawetzZeta => {
                if r <= 0.5 * big_r {
                    [0.5 * r * r, r, 1.0, 0.0, 0.0]
                } else if r >= big_r {
                    [big_r * r, big_r, 0.0, 0.0, 0.0]
                } else {
                    self.blend.as_ref().unwrap().eval(r)
                }
            }
        }
    }

    pub fn psi(&self, r: f64) -> f64 {
        self.derivatives(r)[0]
    }

    /// Δψ = ψ″ + (N-1)ψ′/r.
    pub fn laplacian(&self, r: f64) -> f64 {
        let d = self.derivatives(r);
        d[2] + (self.dim as f64 - 1.0) * d[1] / r
    }

    /// Δ²ψ = ψ⁗ + 2(N-1)ψ‴/r + (N-1)(N-3)(ψ″/r² - ψ′/r³).
    pub fn bilaplacian(&self, r: f64) -> f64 {
        let d = self.derivatives(r);
        let n = self.dim as f64;
        d[4] + 2.0 * (n - 1.0) * d[3] / r + (n - 1.0) * (n - 3.0) * (d[2] / (r * r) - d[1] / (r * r * r))
    }
}

/// Build a weight of the given kind and scale. The transition layers are
/// Hermite blends; the stated inequalities are sampled and reported.
pub fn make_weight(kind: WeightKind, radius: f64, grid: &RadialGrid) -> Result<VirialWeight> {
    let dim = grid.dim;
    if kind == WeightKind::Quadratic {
        return Ok(VirialWeight {
            kind,
            radius: 0.0,
            dim,
            blend: None,
            violations: Vec::new(),
        });
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::MalformedParameters(format!("weight scale R = {radius}")));
    }
    if radius >= 0.5 * grid.r_max {
        return Err(Error::WeightExceedsDomain {
            radius,
            r_max: grid.r_max,
        });
    }
    let r = radius;
    let blend = match kind {
        WeightKind::CutoffPsi => Blend::new(r, 2.0 * r, [r * r, 2.0 * r, 2.0, 0.0], [0.0; 4])?,
        WeightKind::MorawetzZeta => {
            Blend::new(0.5 * r, r, [r * r / 8.0, 0.5 * r, 1.0, 0.0], [r * r, r, 0.0, 0.0])?
        }
        WeightKind::Quadratic => unreachable!(),
    };
    let mut w = VirialWeight {
        kind,
        radius,
        dim,
        blend: Some(blend),
        violations: Vec::new(),
    };
    let samples = 1000;
    let tol = 1e-12;
    let mut found: Vec<Violation> = Vec::new();
    for k in 0..=samples {
        let x = 3.0 * r * k as f64 / samples as f64;
        let d = w.derivatives(x);
        // `excess` > 0 measures how badly the sample fails.
        let mut flag = |name: &str, value: f64, excess: f64| {
            match found.iter_mut().find(|v| v.constraint == name) {
                Some(v) => {
                    v.count += 1;
                    if excess > v.excess {
                        v.r = x;
                        v.value = value;
                        v.excess = excess;
                    }
                }
                None => found.push(Violation {
                    constraint: name.into(),
                    r: x,
                    value,
                    count: 1,
                    excess,
                }),
            }
        };
        match kind {
            WeightKind::CutoffPsi => {
                let scale = (x * x).max(1.0) * tol;
                if d[0] < -scale || d[0] > x * x + scale {
                    flag("0 <= psi <= r^2", d[0], (-d[0]).max(d[0] - x * x));
                }
                if d[1] > 2.0 * x + scale {
                    flag("psi' <= 2r", d[1], d[1] - 2.0 * x);
                }
                if d[2] > 2.0 + tol {
                    flag("psi'' <= 2", d[2], d[2] - 2.0);
                }
                if d[4].abs() > 4.0 / (r * r) + tol {
                    flag("|psi''''| <= 4/R^2", d[4], d[4].abs() - 4.0 / (r * r));
                }
            }
            WeightKind::MorawetzZeta => {
                if x > 0.5 * r && x < r {
                    if d[1] <= 0.0 {
                        flag("zeta' > 0", d[1], -d[1]);
                    }
                    if d[2] < -tol {
                        flag("zeta'' >= 0", d[2], -d[2]);
                    }
                }
            }
            WeightKind::Quadratic => {}
        }
    }
    w.violations = found
        .into_iter()
        .map(|v| ConstraintViolation {
            constraint: v.constraint,
            r: v.r,
            value: v.value,
            count: v.count,
        })
        .collect();
    Ok(w)
}

struct Violation {
    constraint: String,
    r: f64,
    value: f64,
    count: usize,
    excess: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VirialRecord {
    pub t: f64,
    pub i_psi: f64,
    pub di_psi: f64,
    pub d2i_psi: f64,
    /// Second difference of I_ψ over the neighbouring records.
    pub d2i_fd: Option<f64>,
}

/// Evaluates virial quantities of one weight on one grid.
pub struct VirialEvaluator {
    disc: Discretization,
    psi: Vec<f64>,
    bilap: Vec<f64>,
    /// ψ″ at the faces r_j, j = 1..n-1, then at r_max.
    psi2_faces: Vec<f64>,
    psi2_wall: f64,
    /// ψ″ + (N-1)ψ′/r and ψ′/r at the nodes.
    lap: Vec<f64>,
    drift: Vec<f64>,
}

impl VirialEvaluator {
    pub fn new(p: &ModelParams, grid: std::sync::Arc<RadialGrid>, w: &VirialWeight) -> Result<Self> {
        let disc = Discretization::new(p, grid)?;
        let g = &disc.grid;
        let n = g.dim as f64;
        let mut psi = Vec::with_capacity(g.n);
        let mut bilap = Vec::with_capacity(g.n);
        let mut lap = Vec::with_capacity(g.n);
        let mut drift = Vec::with_capacity(g.n);
        for &r in &g.nodes {
            let d = w.derivatives(r);
            psi.push(d[0]);
            bilap.push(w.bilaplacian(r));
            lap.push(d[2] + (n - 1.0) * d[1] / r);
            drift.push(d[1] / r);
        }
        let psi2_faces = (1..g.n).map(|j| w.derivatives(g.face(j))[2]).collect();
        let psi2_wall = w.derivatives(g.r_max)[2];
        Ok(Self {
            disc,
            psi,
            bilap,
            psi2_faces,
            psi2_wall,
            lap,
            drift,
        })
    }

    pub fn record(&self, t: f64, u: &[Complex64]) -> VirialRecord {
        let p = &self.disc.params;
        let g = &self.disc.grid;
        let (c, wall) = g.conductances();
        let mut i_psi = 0.0;
        let mut bi = 0.0;
        for i in 0..g.n {
            let m = u[i].norm_sqr() * g.weights[i];
            i_psi += self.psi[i] * m;
            bi += self.bilap[i] * m;
        }
        // Face form of 2 Im ∫ψ′ u_r ū: exact time derivative of I_ψ under
        // the semi-discrete flow.
        let mut di = 0.0;
        let mut grad = 0.0;
        for j in 1..g.n {
            let z = u[j - 1].conj() * u[j];
            di += c[j - 1] * (self.psi[j] - self.psi[j - 1]) * z.im;
            grad += c[j - 1] * self.psi2_faces[j - 1] * (u[j] - u[j - 1]).norm_sqr();
        }
        grad += wall * self.psi2_wall * u[g.n - 1].norm_sqr();
        let mut t1 = [0.0; 2];
        let mut t2 = [0.0; 2];
        for i in 0..g.n {
            let m2 = u[i].norm_sqr();
            if m2 == 0.0 {
                continue;
            }
            let l = m2.ln();
            let a = self.disc.wb1[i] * (0.5 * p.p1 * l).exp();
            let b = self.disc.wb2[i] * (0.5 * p.p2 * l).exp();
            t1[0] += self.lap[i] * a;
            t1[1] += self.lap[i] * b;
            t2[0] += self.drift[i] * a;
            t2[1] += self.drift[i] * b;
        }
        let d2 = 4.0 * grad - bi + 2.0 * (p.p1 - 2.0) / p.p1 * t1[0] + 4.0 * p.b1 / p.p1 * t2[0]
            - 2.0 * (p.p2 - 2.0) / p.p2 * t1[1]
            - 4.0 * p.b2 / p.p2 * t2[1];
        VirialRecord {
            t,
            i_psi,
            di_psi: 2.0 * di,
            d2i_psi: d2,
            d2i_fd: None,
        }
    }
}

pub fn virial_record(p: &ModelParams, u: &RadialField, w: &VirialWeight, t: f64) -> Result<VirialRecord> {
    Ok(VirialEvaluator::new(p, u.grid.clone(), w)?.record(t, &u.values))
}

/// Fill `d2i_fd` with the three-point second derivative on the (possibly
/// uneven) record times.
pub fn fill_second_differences(records: &mut [VirialRecord]) {
    for k in 1..records.len().saturating_sub(1) {
        let (a, b, c) = (records[k - 1], records[k], records[k + 1]);
        let (h1, h2) = (b.t - a.t, c.t - b.t);
        if h1 > 0.0 && h2 > 0.0 {
            records[k].d2i_fd =
                Some(2.0 * (h1 * c.i_psi - (h1 + h2) * b.i_psi + h2 * a.i_psi) / (h1 * h2 * (h1 + h2)));
        }
    }
}

pub fn local_mass(u: &RadialField, radius: f64) -> f64 {
    let g = &u.grid;
    g.nodes
        .iter()
        .zip(&g.weights)
        .zip(&u.values)
        .filter(|((r, _), _)| **r <= radius)
        .map(|((_, w), z)| w * z.norm_sqr())
        .sum()
}

/// 2N/(N-2).
fn critical_power(dim: u32) -> Result<f64> {
    if dim <= 2 {
        return Err(Error::NotApplicable(format!(
            "the Morawetz average needs N >= 3, got N = {dim}"
        )));
    }
    let n = dim as f64;
    Ok(2.0 * n / (n - 2.0))
}

/// ∫_{|x|≤R} |u|^{2N/(N-2)} dx.
pub fn morawetz_density(grid: &RadialGrid, u: &[Complex64], radius: f64) -> Result<f64> {
    let q = critical_power(grid.dim)?;
    if radius > grid.r_max {
        return Err(Error::WeightExceedsDomain {
            radius,
            r_max: grid.r_max,
        });
    }
    Ok(grid
        .nodes
        .iter()
        .zip(&grid.weights)
        .zip(u)
        .filter(|((r, _), _)| **r <= radius)
        .map(|((_, w), z)| w * z.norm().powf(q))
        .sum())
}

/// (1/T)∫_0^T of sampled densities (t, ∫_{|x|≤R}|u|^{2N/(N-2)}), by the
/// trapezoid rule. Samples must start at t = 0 and reach T.
pub fn morawetz_average(samples: &[(f64, f64)], t_final: f64) -> Result<f64> {
    if samples.is_empty() || samples[0].0 != 0.0 || !(t_final > 0.0) {
        return Err(Error::WindowError("Morawetz samples must start at t = 0".into()));
    }
    let mut acc = 0.0;
    for w in samples.windows(2) {
        let (t0, f0) = w[0];
        let (t1, f1) = w[1];
        if t0 >= t_final {
            break;
        }
        if t1 > t_final {
            let f = f0 + (f1 - f0) * (t_final - t0) / (t1 - t0);
            acc += 0.5 * (t_final - t0) * (f0 + f);
            return Ok(acc / t_final);
        }
        acc += 0.5 * (t1 - t0) * (f0 + f1);
    }
    if samples.last().unwrap().0 < t_final * (1.0 - 1e-12) {
        return Err(Error::WindowError("samples do not reach T".into()));
    }
    Ok(acc / t_final)
}

/// Running Morawetz integrals for several (R, T) pairs, fed from the
/// evolution observer. Only moduli are used, so unsynced steps are fine.
pub struct MorawetzAccumulator {
    grid: std::sync::Arc<RadialGrid>,
    pairs: Vec<(f64, f64)>,
    integrals: Vec<f64>,
    last: Option<(f64, Vec<f64>)>,
    done: Vec<Option<f64>>,
}

impl MorawetzAccumulator {
    pub fn new(grid: std::sync::Arc<RadialGrid>, pairs: &[(f64, f64)]) -> Result<Self> {
        critical_power(grid.dim)?;
        for &(r, t) in pairs {
            if r > grid.r_max || !(r > 0.0) || !(t > 0.0) {
                return Err(Error::WeightExceedsDomain {
                    radius: r,
                    r_max: grid.r_max,
                });
            }
        }
        Ok(Self {
            grid,
            pairs: pairs.to_vec(),
            integrals: vec![0.0; pairs.len()],
            last: None,
            done: vec![None; pairs.len()],
        })
    }

    pub fn observe(&mut self, t: f64, u: &[Complex64]) {
        let dens: Vec<f64> = self
            .pairs
            .iter()
            .map(|&(r, _)| morawetz_density(&self.grid, u, r).unwrap_or(0.0))
            .collect();
        if let Some((t0, prev)) = &self.last {
            for k in 0..self.pairs.len() {
                if self.done[k].is_some() {
                    continue;
                }
                let tk = self.pairs[k].1;
                if t >= tk {
                    let f = prev[k] + (dens[k] - prev[k]) * (tk - t0) / (t - t0);
                    let total = self.integrals[k] + 0.5 * (tk - t0) * (prev[k] + f);
                    self.done[k] = Some(total / tk);
                }
                self.integrals[k] += 0.5 * (t - t0) * (prev[k] + dens[k]);
            }
        }
        self.last = Some((t, dens));
    }

    /// Averages for each (R, T) pair; `None` where the run ended before T.
    pub fn averages(&self) -> Vec<Option<f64>> {
        self.done.clone()
    }
}

/// C in the bound C·(R/T + R^{-min b}), taken as the smallest constant
/// covering all observed (R, T, average) triples.
pub fn calibrate_morawetz_constant(p: &ModelParams, points: &[(f64, f64, f64)]) -> f64 {
    points
        .iter()
        .map(|&(r, t, avg)| avg / morawetz_shape(p, r, t))
        .fold(0.0, f64::max)
}

pub fn morawetz_shape(p: &ModelParams, radius: f64, t: f64) -> f64 {
    radius / t + radius.powf(-p.b1.min(p.b2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum ScatteringVerdict {
    CriterionMet { t: f64, local_mass: f64 },
    NotObservedByT { t_final: f64, min_local_mass: f64 },
}

/// Looks for a sample where ∫_{|x|≤R}|u|² < ε². Samples are (t, local mass).
pub fn scattering_monitor(samples: &[(f64, f64)], eps: f64) -> ScatteringVerdict {
    let target = eps * eps;
    let mut min = f64::INFINITY;
    for &(t, m) in samples {
        if m < target {
            return ScatteringVerdict::CriterionMet { t, local_mass: m };
        }
        min = min.min(m);
    }
    ScatteringVerdict::NotObservedByT {
        t_final: samples.last().map_or(0.0, |s| s.0),
        min_local_mass: min,
    }
}

/// The monitor applied to the local-mass column of an evolution history
/// (radius `EvolutionOptions::local_radius`).
pub fn scattering_monitor_trajectory(traj: &Trajectory, eps: f64) -> ScatteringVerdict {
    let s: Vec<(f64, f64)> = traj.history.iter().map(|h| (h.t, h.local_mass)).collect();
    scattering_monitor(&s, eps)
}

/// Smooth step: 1 on [0, R/2], 0 beyond R.
pub fn cutoff_chi(radius: f64, r: f64) -> f64 {
    if r <= 0.5 * radius {
        1.0
    } else if r >= radius {
        0.0
    } else {
        let s = (r - 0.5 * radius) / (0.5 * radius);
        // Degree-7 smoothstep: value 1→0 with three vanishing derivatives.
        1.0 - s.powi(4) * (35.0 - 84.0 * s + 70.0 * s * s - 20.0 * s.powi(3))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoercivityReport {
    /// K(χ_R u)/‖∇(χ_R u)‖².
    pub ratio: f64,
    /// M(u)/R², the size of the cutoff correction.
    pub correction: f64,
    pub i_omega: f64,
    pub s_omega: f64,
    pub below_threshold: bool,
    /// Correction above 10% of I_ω(u): R too small for the estimate.
    pub flagged: bool,
}

pub fn coercivity_check(p: &ModelParams, u: &RadialField, radius: f64, m_omega: f64) -> Result<CoercivityReport> {
    let d = Discretization::new(p, u.grid.clone())?;
    let cut: Vec<Complex64> = u
        .grid
        .nodes
        .iter()
        .zip(&u.values)
        .map(|(r, z)| z * cutoff_chi(radius, *r))
        .collect();
    let rc = d.report(&cut);
    if rc.grad_sq == 0.0 {
        return Err(Error::UndefinedQuotient);
    }
    let full = d.report(&u.values);
    let correction = full.mass / (radius * radius);
    Ok(CoercivityReport {
        ratio: rc.pohozaev / rc.grad_sq,
        correction,
        i_omega: full.i_omega,
        s_omega: full.action,
        below_threshold: full.action < m_omega,
        flagged: correction > 0.1 * full.i_omega.abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{evolve, EvolutionOptions};
    use proptest::prelude::*;

    fn grid() -> std::sync::Arc<RadialGrid> {
        RadialGrid::shared(3, 30.0, 2048).unwrap()
    }

    #[test]
    fn quadratic_weight_identities() {
        let w = make_weight(WeightKind::Quadratic, 0.0, &grid()).unwrap();
        for r in [0.01, 0.5, 3.0, 20.0] {
            assert!((w.laplacian(r) - 6.0).abs() < 1e-12);
            assert!(w.bilaplacian(r).abs() < 1e-12);
        }
    }

    #[test]
    fn cutoff_junctions_are_smooth() {
        let big_r = 5.0;
        let w = make_weight(WeightKind::CutoffPsi, big_r, &grid()).unwrap();
        assert!((w.psi(big_r) - big_r * big_r).abs() < 1e-10);
        assert_eq!(w.psi(2.0 * big_r), 0.0);
        let eps = 1e-9;
        for x in [big_r, 2.0 * big_r] {
            let (a, b) = (w.derivatives(x - eps), w.derivatives(x + eps));
            for k in 0..4 {
                assert!((a[k] - b[k]).abs() < 1e-6 * (1.0 + a[k].abs()), "r={x} k={k}: {} {}", a[k], b[k]);
            }
        }
        // Coming down from r² to 0 over [R, 2R] with ψ″ = 2 at the left end
        // forces ψ″ above 2 and a large fourth derivative; both are reported.
        let names: Vec<&str> = w.violations.iter().map(|v| v.constraint.as_str()).collect();
        assert!(names.contains(&"psi'' <= 2"), "{names:?}");
        assert!(names.contains(&"|psi''''| <= 4/R^2"), "{names:?}");
        assert!(!names.contains(&"0 <= psi <= r^2"), "{names:?}");
    }

    #[test]
    fn morawetz_weight_shape() {
        let big_r = 6.0;
        let w = make_weight(WeightKind::MorawetzZeta, big_r, &grid()).unwrap();
        // ζ(R/2) = R²/8 and ζ(R) = R² need a mean slope 7R/4 > ζ′(R) = R on
        // the annulus, so ζ″ ≥ 0 cannot hold there and is reported; ζ′ > 0 holds.
        let names: Vec<&str> = w.violations.iter().map(|v| v.constraint.as_str()).collect();
        assert_eq!(names, ["zeta'' >= 0"]);
        for r in [6.0, 7.5, 14.0] {
            assert!((w.derivatives(r)[1] - big_r).abs() < 1e-10);
        }
        assert!((w.psi(2.0) - 2.0).abs() < 1e-14);
        let (a, b) = (w.derivatives(3.0 - 1e-9), w.derivatives(3.0 + 1e-9));
        for k in 0..4 {
            assert!((a[k] - b[k]).abs() < 1e-6 * (1.0 + a[k].abs()));
        }
    }

    #[test]
    fn weight_must_fit_the_domain() {
        assert!(matches!(
            make_weight(WeightKind::CutoffPsi, 15.0, &grid()),
            Err(Error::WeightExceedsDomain { .. })
        ));
        assert!(make_weight(WeightKind::MorawetzZeta, -1.0, &grid()).is_err());
    }

    #[test]
    fn real_field_has_no_virial_velocity() {
        let p = ModelParams::benchmark();
        let u = RadialField::from_fn(grid(), |r| (-(r * r) / 3.0).exp() * (1.0 + 0.3 * r.sin()));
        for kind in [WeightKind::Quadratic, WeightKind::CutoffPsi, WeightKind::MorawetzZeta] {
            let w = make_weight(kind, 4.0, &u.grid).unwrap();
            assert_eq!(virial_record(&p, &u, &w, 0.0).unwrap().di_psi, 0.0);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn quadratic_second_derivative_is_eight_k(
            amp in 0.1f64..4.0, width in 0.5f64..4.0, k in 0.0f64..3.0, phase in 0.0f64..6.0,
        ) {
            let p = ModelParams::benchmark();
            let g = grid();
            let vals = g.nodes.iter().map(|&r| {
                Complex64::from_polar(amp * (-(r * r) / (width * width)).exp(), phase + k * r)
            }).collect();
            let u = RadialField::new(g.clone(), vals).unwrap();
            let w = make_weight(WeightKind::Quadratic, 0.0, &g).unwrap();
            let rec = virial_record(&p, &u, &w, 0.0).unwrap();
            let k8 = 8.0 * crate::compute_functionals(&p, &u).unwrap().pohozaev;
            prop_assert!((rec.d2i_psi - k8).abs() <= 1e-8 * (rec.d2i_psi.abs() + k8.abs() + 1.0));
        }
    }

    #[test]
    fn virial_derivatives_match_the_flow() {
        // Smooth small-data run; compare I′ with a centered difference of I
        // and I″ with the second difference, at two sampling intervals.
        let p = ModelParams::benchmark();
        let g = RadialGrid::shared(3, 30.0, 2048).unwrap();
        let u0 = RadialField::from_fn(g.clone(), |r| 0.8 * (-(r * r) / 4.0).exp());
        let w = make_weight(WeightKind::CutoffPsi, 5.0, &g).unwrap();
        let ev = VirialEvaluator::new(&p, g, &w).unwrap();
        let mut errs = Vec::new();
        for stride in [0.04, 0.02] {
            let opts = EvolutionOptions {
                t_final: 0.5,
                fixed_dt: Some(1e-4),
                record_interval: stride,
                record_growth: f64::INFINITY,
                ..Default::default()
            };
            let mut recs = Vec::new();
            evolve(&p, &u0, &opts, |v| {
                if v.synced {
                    recs.push(ev.record(v.t, v.values));
                }
            })
            .unwrap();
            let mut e1: f64 = 0.0;
            for k in 1..recs.len() - 1 {
                let fd = (recs[k + 1].i_psi - recs[k - 1].i_psi) / (recs[k + 1].t - recs[k - 1].t);
                e1 = e1.max((fd - recs[k].di_psi).abs());
            }
            fill_second_differences(&mut recs);
            let e2 = recs
                .iter()
                .filter_map(|r| r.d2i_fd.map(|f| (f - r.d2i_psi).abs()))
                .fold(0.0, f64::max);
            errs.push((e1, e2));
        }
        let r1 = errs[0].0 / errs[1].0;
        let r2 = errs[0].1 / errs[1].1;
        assert!(r1 > 3.0, "{errs:?}");
        assert!(r2 > 2.0, "{errs:?}");
    }

    #[test]
    fn morawetz_average_of_standing_profile_is_its_density() {
        let g = grid();
        let u = RadialField::from_fn(g.clone(), |r| (-(r * r)).exp());
        let d = morawetz_density(&g, &u.values, 4.0).unwrap();
        let samples: Vec<(f64, f64)> = (0..=10).map(|k| (k as f64, d)).collect();
        assert!((morawetz_average(&samples, 7.5).unwrap() - d).abs() < 1e-14 * d);
        let zero = vec![(0.0, 0.0), (1.0, 0.0)];
        assert_eq!(morawetz_average(&zero, 1.0).unwrap(), 0.0);
        let g2 = RadialGrid::shared(2, 10.0, 64).unwrap();
        assert!(morawetz_density(&g2, &vec![Complex64::new(1.0, 0.0); 64], 1.0).is_err());
    }

    #[test]
    fn accumulator_matches_trapezoid() {
        let g = RadialGrid::shared(3, 10.0, 64).unwrap();
        let mut acc = MorawetzAccumulator::new(g.clone(), &[(2.0, 1.0), (5.0, 3.0)]).unwrap();
        let mut s2 = Vec::new();
        for k in 0..=40 {
            let t = k as f64 * 0.1;
            let u = RadialField::from_fn(g.clone(), |r| (-(r * r) / (1.0 + t)).exp());
            acc.observe(t, &u.values);
            s2.push((t, morawetz_density(&g, &u.values, 5.0).unwrap()));
        }
        let a = acc.averages();
        assert!((a[1].unwrap() - morawetz_average(&s2, 3.0).unwrap()).abs() < 1e-12);
        assert!(a[0].is_some());
    }

    #[test]
    fn scattering_verdicts() {
        assert!(matches!(
            scattering_monitor(&[(0.0, 0.0)], 1e-3),
            ScatteringVerdict::CriterionMet { t, .. } if t == 0.0
        ));
        let standing: Vec<(f64, f64)> = (0..10).map(|k| (k as f64, 2.0)).collect();
        assert!(matches!(
            scattering_monitor(&standing, 1.0),
            ScatteringVerdict::NotObservedByT { .. }
        ));
    }

    #[test]
    fn coercivity_cutoff_is_identity_on_compact_support() {
        let p = ModelParams::benchmark();
        let g = grid();
        let u = RadialField::from_fn(g.clone(), |r| if r < 2.0 { (1.0 - r * r / 4.0).powi(4) } else { 0.0 });
        let rep = coercivity_check(&p, &u, 5.0, 1.0).unwrap();
        let full = crate::compute_functionals(&p, &u).unwrap();
        assert!((rep.ratio - full.pohozaev / full.grad_sq).abs() < 1e-14);
        assert_eq!(cutoff_chi(4.0, 1.9), 1.0);
        assert_eq!(cutoff_chi(4.0, 4.0), 0.0);
        assert!((cutoff_chi(4.0, 3.0) - 0.5).abs() < 1e-14);
    }
}
