//! The ground-state level m_ω = inf{S_ω(u) : u ≠ 0, K(u) = 0}.
//!
//! `project_to_pohozaev` moves a field onto K = 0 along the mass-preserving
//! scaling u_t = t^{N/2} u(t·). `minimize_action` runs Riesz-gradient descent
//! of S_ω tangent to K = 0 and retracts after every step by amplitude scaling
//! s·u, which keeps the iterate exactly on the grid.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{Discretization, FunctionalReport};
use crate::grid::{scale_field, RadialField, RadialGrid, Tridiag};
use crate::params::ModelParams;

#[derive(Debug, Clone)]
pub struct ProjectionResult {
    pub t_u: f64,
    pub projected: RadialField,
    pub k_residual: f64,
    /// k_residual / ‖∇(projected)‖².
    pub k_relative: f64,
    pub resolution_loss: bool,
}

/// t ↦ K(u_t)/t² = G + c1 t^{e1-2} W1 - c2 t^{e2-2} W2 for the exact scaling.
pub fn projection_scalar(p: &ModelParams, r: &FunctionalReport, t: f64) -> f64 {
    let (c1, c2) = p.pohozaev_coeffs();
    let (e1, e2) = p.scaling_exponents();
    r.grad_sq + c1 * t.powf(e1 - 2.0) * r.w1 - c2 * t.powf(e2 - 2.0) * r.w2
}

fn projection_scalar_dt(p: &ModelParams, r: &FunctionalReport, t: f64) -> f64 {
    let (c1, c2) = p.pohozaev_coeffs();
    let (e1, e2) = p.scaling_exponents();
    c1 * (e1 - 2.0) * t.powf(e1 - 3.0) * r.w1 - c2 * (e2 - 2.0) * t.powf(e2 - 3.0) * r.w2
}

/// Root of `projection_scalar`: bracket by doubling, then Newton steps that
/// fall back to bisection whenever they leave the bracket.
fn scalar_root(p: &ModelParams, r: &FunctionalReport) -> Result<f64> {
    if !(r.w2 > 0.0) || !(r.grad_sq > 0.0) {
        return Err(Error::NoProjection);
    }
    let f = |t: f64| projection_scalar(p, r, t);
    let (mut lo, mut hi) = (1.0, 1.0);
    if f(1.0) > 0.0 {
        while f(hi) > 0.0 {
            hi *= 2.0;
            if hi > 1e150 {
                return Err(Error::NoProjection);
            }
        }
        lo = hi / 2.0;
    } else {
        while f(lo) <= 0.0 {
            lo /= 2.0;
            if lo < 1e-150 {
                return Err(Error::NoProjection);
            }
        }
        hi = lo * 2.0;
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..200 {
        let ft = f(t);
        if ft == 0.0 {
            break;
        }
        if ft > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let d = projection_scalar_dt(p, r, t);
        let newton = t - ft / d;
        t = if d != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (hi - lo) <= 1e-15 * hi {
            break;
        }
    }
    Ok(t)
}

/// Sign changes of the projection scalar on a log-spaced scan t ∈ [10^-4, 10^4].
pub fn projection_sign_changes(p: &ModelParams, r: &FunctionalReport, samples: usize) -> usize {
    let mut prev = None;
    let mut changes = 0;
    for i in 0..samples {
        let t = 10f64.powf(-4.0 + 8.0 * i as f64 / (samples - 1) as f64);
        let s = projection_scalar(p, r, t) > 0.0;
        if let Some(q) = prev {
            if q != s {
                changes += 1;
            }
        }
        prev = Some(s);
    }
    changes
}

pub fn project_to_pohozaev(p: &ModelParams, u: &RadialField) -> Result<ProjectionResult> {
    let d = Discretization::new(p, u.grid.clone())?;
    let r0 = d.report(&u.values);
    if r0.grad_sq == 0.0 {
        return Err(Error::MalformedParameters("zero field".into()));
    }
    if r0.pohozaev.abs() <= 1e-10 * r0.grad_sq {
        return Ok(ProjectionResult {
            t_u: 1.0,
            projected: u.clone(),
            k_residual: r0.pohozaev.abs(),
            k_relative: r0.pohozaev.abs() / r0.grad_sq,
            resolution_loss: false,
        });
    }
    let t0 = scalar_root(p, &r0)?;
    // The resampled field only approximately inherits the scaling law, so the
    // root of the discrete K along t is polished by secant steps.
    let k_at = |t: f64| -> Result<(f64, f64, RadialField, bool)> {
        let s = scale_field(u, t)?;
        let rep = d.report(&s.field.values);
        Ok((rep.pohozaev, rep.grad_sq, s.field, s.resolution_loss))
    };
    let (mut ta, mut tb) = (t0, t0 * (1.0 + 1e-6));
    let (mut ka, _, _, _) = k_at(ta)?;
    let (mut kb, mut gb, mut fb, mut lb) = k_at(tb)?;
    for _ in 0..60 {
        if kb.abs() <= 1e-10 * gb || kb == ka {
            break;
        }
        let tn = tb - kb * (tb - ta) / (kb - ka);
        if !(tn > 0.0) {
            break;
        }
        ta = tb;
        ka = kb;
        tb = tn;
        let (k, g, f, l) = k_at(tb)?;
        kb = k;
        gb = g;
        fb = f;
        lb = l;
    }
    Ok(ProjectionResult {
        t_u: tb,
        projected: fb,
        k_residual: kb.abs(),
        k_relative: kb.abs() / gb,
        resolution_loss: lb,
    })
}

/// Amplitude s > 0 with K(s u) = 0: s²G + c1 s^{p1} W1 - c2 s^{p2} W2 = 0.
fn amplitude_root(p: &ModelParams, r: &FunctionalReport) -> Result<f64> {
    if !(r.w2 > 0.0) {
        return Err(Error::NoProjection);
    }
    let (c1, c2) = p.pohozaev_coeffs();
    let f = |s: f64| r.grad_sq + c1 * s.powf(p.p1 - 2.0) * r.w1 - c2 * s.powf(p.p2 - 2.0) * r.w2;
    let (mut lo, mut hi) = (1.0, 1.0);
    if f(1.0) > 0.0 {
        while f(hi) > 0.0 {
            hi *= 2.0;
            if hi > 1e150 {
                return Err(Error::NoProjection);
            }
        }
        lo = hi / 2.0;
    } else {
        while f(lo) <= 0.0 {
            lo /= 2.0;
            if lo < 1e-150 {
                return Err(Error::NoProjection);
            }
        }
        hi = lo * 2.0;
    }
    let mut s = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fs = f(s);
        if fs == 0.0 {
            break;
        }
        if fs > 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        let d = c1 * (p.p1 - 2.0) * s.powf(p.p1 - 3.0) * r.w1
            - c2 * (p.p2 - 2.0) * s.powf(p.p2 - 3.0) * r.w2;
        let newton = s - fs / d;
        s = if d != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (hi - lo) <= 1e-15 * hi {
            break;
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy)]
pub struct DescentOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub armijo: f64,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 20_000,
            armijo: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DescentTrace {
    pub iterations: usize,
    /// (S_ω, relative projected-gradient norm) per accepted iterate.
    pub history: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct Minimizer {
    pub m_omega: f64,
    pub minimizer: RadialField,
    pub report: FunctionalReport,
    pub k_relative: f64,
    pub trace: DescentTrace,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn retract(d: &Discretization, u: &[f64]) -> Result<(Vec<f64>, FunctionalReport)> {
    let cu: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let r = d.report(&cu);
    let s = amplitude_root(&d.params, &r)?;
    let v: Vec<f64> = u.iter().map(|x| s * x).collect();
    let cv: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let rv = d.report(&cv);
    Ok((v, rv))
}

pub fn minimize_action(p: &ModelParams, seed: &RadialField) -> Result<Minimizer> {
    minimize_action_with(p, seed, &DescentOptions::default())
}

pub fn minimize_action_with(p: &ModelParams, seed: &RadialField, opts: &DescentOptions) -> Result<Minimizer> {
    if p.omega < 0.0 {
        return Err(Error::NotApplicable("m_omega needs omega >= 0".into()));
    }
    let d = Discretization::new(p, seed.grid.clone())?;
    let g = &d.grid;
    // H¹ metric A + ωW; at ω = 0 the stiffness alone (positive through the
    // wall term) plays the role of the X-topology surrogate.
    let metric = Tridiag {
        diag: d.stiffness.diag.clone(),
        off: d.stiffness.off.clone(),
    };
    let shift: Vec<f64> = g.weights.iter().map(|w| p.omega * w).collect();
    let norm_sq = |v: &[f64]| metric.quad_form(v) + dot(&shift, &v.iter().map(|x| x * x).collect::<Vec<_>>());
    let (mut u, mut rep) = retract(&d, &seed.real_part())?;
    let mut history = vec![];
    let mut iterations = 0;
    loop {
        let (gs, gk) = d.action_and_pohozaev_gradients(&u);
        let rg = metric.solve_shifted(&shift, &gs);
        let rk = metric.solve_shifted(&shift, &gk);
        let coef = dot(&gk, &rg) / dot(&gk, &rk);
        let dir: Vec<f64> = rg.iter().zip(&rk).map(|(a, b)| a - coef * b).collect();
        let rel = (norm_sq(&dir) / norm_sq(&u)).sqrt();
        history.push((rep.action, rel));
        if rel < opts.tol {
            break;
        }
        if iterations >= opts.max_iter {
            return Err(Error::NonConvergence(format!(
                "descent stopped after {iterations} iterations at relative gradient {rel:.3e}, S = {}",
                rep.action
            )));
        }
        iterations += 1;
        let slope = dot(&gs, &dir);
        let mut tau = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = u.iter().zip(&dir).map(|(a, b)| a - tau * b).collect();
            if let Ok((v, rv)) = retract(&d, &trial) {
                if rv.action <= rep.action - opts.armijo * tau * slope {
                    u = v;
                    rep = rv;
                    accepted = true;
                    break;
                }
            }
            tau *= 0.5;
        }
        if !accepted {
            // No decrease left at machine precision.
            break;
        }
    }
    let minimizer = RadialField::from_real(seed.grid.clone(), &u)?;
    Ok(Minimizer {
        m_omega: rep.action,
        k_relative: rep.pohozaev.abs() / rep.grad_sq,
        report: rep,
        minimizer,
        trace: DescentTrace { iterations, history },
    })
}

/// Newton iteration on the discrete stationary equation
/// A u + W(ωu + v1 u^{p1-1} - v2 u^{p2-1}) = 0 started from `q0` (typically
/// the shooting profile sampled on the grid). The result is an exact critical
/// point of the discrete action, hence a discrete standing wave.
pub fn discrete_ground_state(p: &ModelParams, q0: &RadialField) -> Result<RadialField> {
    let d = Discretization::new(p, q0.grid.clone())?;
    let w = &d.grid.weights;
    let mut u = q0.real_part();
    for _ in 0..50 {
        let au = d.stiffness.apply(&u);
        let mut f = vec![0.0; u.len()];
        let mut jd = d.stiffness.diag.clone();
        for i in 0..u.len() {
            let a = u[i].abs();
            let (n1, n2, j1, j2) = if a > 0.0 {
                let s1 = d.wb1[i] * a.powf(p.p1 - 2.0);
                let s2 = d.wb2[i] * a.powf(p.p2 - 2.0);
                (s1 * u[i], s2 * u[i], (p.p1 - 1.0) * s1, (p.p2 - 1.0) * s2)
            } else {
                (0.0, 0.0, 0.0, 0.0)
            };
            f[i] = au[i] + p.omega * w[i] * u[i] + n1 - n2;
            jd[i] += p.omega * w[i] + j1 - j2;
        }
        let du = crate::linalg::solve_shifted_pivoting(&jd, &d.stiffness.off, 0.0, &f);
        let step = du.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let size = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (a, b) in u.iter_mut().zip(&du) {
            *a -= b;
        }
        if !step.is_finite() {
            break;
        }
        if step <= 1e-13 * size {
            return RadialField::from_real(q0.grid.clone(), &u);
        }
    }
    Err(Error::NonConvergence("Newton on the discrete stationary equation".into()))
}

/// a·exp(-r²/σ²) on the grid.
pub fn gaussian_seed(grid: Arc<RadialGrid>, a: f64, sigma: f64) -> RadialField {
    RadialField::from_fn(grid, |r| a * (-r * r / (sigma * sigma)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataLabel {
    APlus,
    AMinus,
    AboveThreshold,
    OnManifold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataClass {
    pub label: DataLabel,
    pub s_omega: f64,
    pub m_omega: f64,
    pub k_value: f64,
}

/// Relative tolerance for the on-manifold tie: |K| ≤ tol·‖∇u‖² and
/// |S_ω - m_ω| ≤ tol·m_ω.
pub const TIE_TOLERANCE: f64 = 1e-6;

pub fn classify_data(p: &ModelParams, u0: &RadialField, m_omega: f64) -> Result<DataClass> {
    let d = Discretization::new(p, u0.grid.clone())?;
    let r = d.report(&u0.values);
    let (s, k) = (r.action, r.pohozaev);
    let k_tie = k.abs() <= TIE_TOLERANCE * r.grad_sq.max(f64::MIN_POSITIVE);
    let s_tie = (s - m_omega).abs() <= TIE_TOLERANCE * m_omega.abs();
    let label = if k_tie && (s_tie || s < m_omega) {
        DataLabel::OnManifold
    } else if s < m_omega && !s_tie {
        if k > 0.0 {
            DataLabel::APlus
        } else {
            DataLabel::AMinus
        }
    } else {
        DataLabel::AboveThreshold
    };
    Ok(DataClass {
        label,
        s_omega: s,
        m_omega,
        k_value: k,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ConcavityReport {
    pub t_u: f64,
    /// Largest second difference of t ↦ E(u_t) on [t_u, 4 t_u].
    pub max_second_difference: f64,
    /// E(u_{t_u}) - max over sampled t of E(u_t) (≥ 0 when the maximum is at t_u).
    pub max_gap: f64,
    /// |dE(u_t)/dt at t = 1 - K(u)| / |K(u)|, derivative by central differences
    /// of the resampled field.
    pub derivative_error: f64,
}

/// E(u_t) from the integrals of u under the exact scaling law.
fn scaled_energy(p: &ModelParams, r: &FunctionalReport, t: f64) -> f64 {
    let (e1, e2) = p.scaling_exponents();
    0.5 * t * t * r.grad_sq + t.powf(e1) * r.w1 / p.p1 - t.powf(e2) * r.w2 / p.p2
}

pub fn action_concavity_check(p: &ModelParams, u: &RadialField) -> Result<ConcavityReport> {
    let d = Discretization::new(p, u.grid.clone())?;
    let r = d.report(&u.values);
    let t_u = scalar_root(p, &r)?;
    let m = 400;
    let ts: Vec<f64> = (0..=m).map(|i| t_u * (1.0 + 3.0 * i as f64 / m as f64)).collect();
    let es: Vec<f64> = ts.iter().map(|&t| scaled_energy(p, &r, t)).collect();
    let scale = es[0].abs().max(1.0);
    let max_second_difference = es
        .windows(3)
        .map(|w| (w[0] - 2.0 * w[1] + w[2]) / scale)
        .fold(f64::NEG_INFINITY, f64::max);
    let e_star = scaled_energy(p, &r, t_u);
    let sampled_max = (0..=800)
        .map(|i| scaled_energy(p, &r, t_u * 10f64.powf(-2.0 + 4.0 * i as f64 / 800.0)))
        .fold(f64::NEG_INFINITY, f64::max);
    let h = 1e-3;
    let e_at = |t: f64| -> Result<f64> {
        let s = scale_field(u, t)?;
        Ok(d.report(&s.field.values).energy)
    };
    let fd = (e_at(1.0 + h)? - e_at(1.0 - h)?) / (2.0 * h);
    Ok(ConcavityReport {
        t_u,
        max_second_difference,
        max_gap: e_star - sampled_max,
        derivative_error: (fd - r.pohozaev).abs() / r.pohozaev.abs().max(f64::MIN_POSITIVE),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bench_grid() -> Arc<RadialGrid> {
        RadialGrid::shared(3, 20.0, 1024).unwrap()
    }

    #[test]
    fn scalar_signs_at_ends() {
        let p = ModelParams::benchmark();
        let u = gaussian_seed(bench_grid(), 2.0, 1.5);
        let r = Discretization::new(&p, u.grid.clone()).unwrap().report(&u.values);
        assert!(projection_scalar(&p, &r, 1e-6) > 0.0);
        assert!(projection_scalar(&p, &r, 1e6) < 0.0);
        assert_eq!(projection_sign_changes(&p, &r, 2001), 1);
    }

    #[test]
    fn projection_lands_on_manifold() {
        let p = ModelParams::benchmark();
        for (a, s) in [(0.5, 2.0), (3.0, 1.0), (10.0, 0.3)] {
            let u = gaussian_seed(bench_grid(), a, s);
            let k0 = compute(&p, &u).pohozaev;
            let pr = project_to_pohozaev(&p, &u).unwrap();
            assert!(pr.k_relative <= 1e-10, "{}", pr.k_relative);
            if k0 < 0.0 {
                assert!(pr.t_u > 0.0 && pr.t_u < 1.0);
            } else {
                assert!(pr.t_u > 1.0);
            }
        }
    }

    fn compute(p: &ModelParams, u: &RadialField) -> FunctionalReport {
        Discretization::new(p, u.grid.clone()).unwrap().report(&u.values)
    }

    #[test]
    fn projection_of_projected_is_identity() {
        let p = ModelParams::benchmark();
        let u = gaussian_seed(bench_grid(), 3.0, 1.0);
        let pr = project_to_pohozaev(&p, &u).unwrap();
        let again = project_to_pohozaev(&p, &pr.projected).unwrap();
        assert!((again.t_u - 1.0).abs() < 1e-6, "{}", again.t_u);
    }

    #[test]
    fn no_focusing_mass_means_no_projection() {
        let p = ModelParams::benchmark();
        let g = bench_grid();
        let u = RadialField::zeros(g.clone());
        assert!(project_to_pohozaev(&p, &u).is_err());
        let r = FunctionalReport {
            mass: 1.0,
            energy: 0.0,
            action: 0.0,
            pohozaev: 1.0,
            i_omega: 0.0,
            grad_sq: 1.0,
            w1: 1.0,
            w2: 0.0,
            tail_mass: 0.0,
        };
        assert!(matches!(scalar_root(&p, &r), Err(Error::NoProjection)));
    }

    #[test]
    fn descent_reaches_stationary_point_on_manifold() {
        let p = ModelParams::benchmark();
        let g = RadialGrid::shared(3, 20.0, 1024).unwrap();
        let m = minimize_action(&p, &gaussian_seed(g, 5.0, 0.7)).unwrap();
        assert!(m.m_omega > 0.0);
        assert!(m.k_relative < 1e-8);
        for w in m.trace.history.windows(2) {
            assert!(w[1].0 <= w[0].0 + 1e-12 * w[0].0.abs());
        }
        let u = m.minimizer.real_part();
        assert!(u.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn classification_of_scaled_minimizer() {
        let p = ModelParams::benchmark();
        let g = RadialGrid::shared(3, 20.0, 1024).unwrap();
        let m = minimize_action(&p, &gaussian_seed(g, 5.0, 0.7)).unwrap();
        let q = &m.minimizer;
        assert_eq!(classify_data(&p, q, m.m_omega).unwrap().label, DataLabel::OnManifold);
        for eps in [0.05, 0.1] {
            let up = classify_data(&p, &q.scaled_real(1.0 + eps), m.m_omega).unwrap();
            assert_eq!(up.label, DataLabel::AMinus, "eps {eps}");
            let down = classify_data(&p, &q.scaled_real(1.0 - eps), m.m_omega).unwrap();
            assert_eq!(down.label, DataLabel::APlus, "eps {eps}");
        }
    }

    #[test]
    fn discrete_ground_state_is_critical_point() {
        let p = ModelParams::benchmark();
        let g = RadialGrid::shared(3, 20.0, 1024).unwrap();
        let m = minimize_action(&p, &gaussian_seed(g.clone(), 5.0, 0.7)).unwrap();
        let q = discrete_ground_state(&p, &m.minimizer).unwrap();
        let d = Discretization::new(&p, g).unwrap();
        let (gs, _) = d.action_and_pohozaev_gradients(&q.real_part());
        let scale = d.stiffness.apply(&q.real_part()).iter().fold(0.0f64, |a, x| a.max(x.abs()));
        assert!(gs.iter().all(|x| x.abs() < 1e-10 * scale));
        // Nearby, but not equal to, the constrained minimizer.
        let s = d.report(&q.values).action;
        assert!((s - m.m_omega).abs() < 1e-2 * m.m_omega);
    }

    #[test]
    fn energy_along_scaling_is_concave_past_projection() {
        let p = ModelParams::benchmark();
        let u = gaussian_seed(RadialGrid::shared(3, 20.0, 8000).unwrap(), 2.0, 1.2);
        let c = action_concavity_check(&p, &u).unwrap();
        assert!(c.max_second_difference <= 1e-8);
        assert!(c.max_gap >= -1e-12, "{c:?}");
        assert!(c.derivative_error < 1e-4, "{}", c.derivative_error);
    }
}
