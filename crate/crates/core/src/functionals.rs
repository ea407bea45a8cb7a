//! Static functionals: mass, energy, action, Pohozaev functional K, I_ω,
//! X-norm and Gagliardo–Nirenberg quotients.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{RadialField, RadialGrid, Tridiag};
use crate::params::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub mass: f64,
    pub energy: f64,
    pub action: f64,
    pub pohozaev: f64,
    pub i_omega: f64,
    pub grad_sq: f64,
    pub w1: f64,
    pub w2: f64,
    /// |u(r_{n-1})|² r_max^{N-1} h: how much mass the truncation may be hiding.
    pub tail_mass: f64,
}

/// Grid-level data shared by every discrete functional for one parameter set.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub params: ModelParams,
    pub grid: Arc<RadialGrid>,
    pub stiffness: Tridiag,
    /// Moment weights for r^{-b1} and r^{-b2}.
    pub wb1: Vec<f64>,
    pub wb2: Vec<f64>,
    /// Cell averages of r^{-b1} and r^{-b2}.
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
}

impl Discretization {
    pub fn new(params: &ModelParams, grid: Arc<RadialGrid>) -> Result<Self> {
        if grid.dim != params.dim {
            return Err(Error::GridMismatch);
        }
        let wb1 = grid.moment_weights(params.b1)?;
        let wb2 = grid.moment_weights(params.b2)?;
        let v1 = wb1.iter().zip(&grid.weights).map(|(a, w)| a / w).collect();
        let v2 = wb2.iter().zip(&grid.weights).map(|(a, w)| a / w).collect();
        Ok(Self {
            params: *params,
            stiffness: grid.stiffness(),
            grid,
            wb1,
            wb2,
            v1,
            v2,
        })
    }

    pub fn grad_sq(&self, u: &[Complex64]) -> f64 {
        self.grid.dirichlet_energy(u)
    }

    pub fn mass(&self, u: &[Complex64]) -> f64 {
        u.iter()
            .zip(&self.grid.weights)
            .map(|(z, w)| z.norm_sqr() * w)
            .sum()
    }

    /// (w1, w2) = (Σ wb1 |u|^{p1}, Σ wb2 |u|^{p2}).
    pub fn potential_integrals(&self, u: &[Complex64]) -> (f64, f64) {
        let (p1, p2) = (self.params.p1, self.params.p2);
        let mut w1 = 0.0;
        let mut w2 = 0.0;
        for i in 0..u.len() {
            let m2 = u[i].norm_sqr();
            if m2 == 0.0 {
                continue;
            }
            let l = m2.ln();
            w1 += self.wb1[i] * (0.5 * p1 * l).exp();
            w2 += self.wb2[i] * (0.5 * p2 * l).exp();
        }
        (w1, w2)
    }

    pub fn report(&self, u: &[Complex64]) -> FunctionalReport {
        let p = &self.params;
        let g = &self.grid;
        let grad_sq = self.grad_sq(u);
        let mass = self.mass(u);
        let (w1, w2) = self.potential_integrals(u);
        let energy = 0.5 * grad_sq + w1 / p.p1 - w2 / p.p2;
        let action = energy + 0.5 * p.omega * mass;
        let (c1, c2) = p.pohozaev_coeffs();
        let pohozaev = grad_sq + c1 * w1 - c2 * w2;
        let (e1, _) = p.scaling_exponents();
        let i_omega = action - pohozaev / e1;
        let tail_mass =
            u[g.n - 1].norm_sqr() * g.r_max.powi(g.dim as i32 - 1) * g.h;
        FunctionalReport {
            mass,
            energy,
            action,
            pohozaev,
            i_omega,
            grad_sq,
            w1,
            w2,
            tail_mass,
        }
    }

    /// Derivatives of S_ω and K with respect to the (real) nodal values.
    pub fn action_and_pohozaev_gradients(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let p = &self.params;
        let (c1, c2) = p.pohozaev_coeffs();
        let au = self.stiffness.apply(u);
        let w = &self.grid.weights;
        let mut gs = vec![0.0; u.len()];
        let mut gk = vec![0.0; u.len()];
        for i in 0..u.len() {
            let a = u[i].abs();
            let (n1, n2) = if a == 0.0 {
                (0.0, 0.0)
            } else {
                (
                    self.wb1[i] * a.powf(p.p1 - 2.0) * u[i],
                    self.wb2[i] * a.powf(p.p2 - 2.0) * u[i],
                )
            };
            gs[i] = au[i] + p.omega * w[i] * u[i] + n1 - n2;
            gk[i] = 2.0 * au[i] + c1 * p.p1 * n1 - c2 * p.p2 * n2;
        }
        (gs, gk)
    }

    /// Nodal residual of -Δ_h u + ω u + r^{-b1}|u|^{p1-2}u - r^{-b2}|u|^{p2-2}u
    /// (the discrete stationary equation, divided by the cell volumes).
    pub fn stationary_residual(&self, u: &[f64]) -> Vec<f64> {
        let p = &self.params;
        let au = self.stiffness.apply(u);
        (0..u.len())
            .map(|i| {
                let a = u[i].abs();
                let nl = if a == 0.0 {
                    0.0
                } else {
                    self.v1[i] * a.powf(p.p1 - 2.0) * u[i] - self.v2[i] * a.powf(p.p2 - 2.0) * u[i]
                };
                au[i] / self.grid.weights[i] + p.omega * u[i] + nl
            })
            .collect()
    }
}

pub fn compute_functionals(p: &ModelParams, u: &RadialField) -> Result<FunctionalReport> {
    let d = Discretization::new(p, u.grid.clone())?;
    Ok(d.report(&u.values))
}

/// ω_{N-1} ∫_0^{r_max} r^{N-1-b} |u|^p dr.
pub fn weighted_lp(u: &RadialField, b: f64, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::MalformedParameters(format!("power {p} < 1")));
    }
    let wb = u.grid.moment_weights(b)?;
    Ok(u
        .values
        .iter()
        .zip(&wb)
        .map(|(z, w)| w * z.norm().powf(p))
        .sum())
}

/// ‖∇u‖₂ + (∫|x|^{-b1}|u|^{p1})^{1/p1}, the zero-frequency energy norm.
pub fn x_norm(u: &RadialField, p: &ModelParams) -> Result<f64> {
    if p.dim < 3 || u.grid.dim < 3 {
        return Err(Error::NotApplicable("X-norm needs N >= 3".into()));
    }
    let g = u.grid.dirichlet_energy(&u.values).sqrt();
    let w1 = weighted_lp(u, p.b1, p.p1)?;
    Ok(g + w1.powf(1.0 / p.p1))
}

/// ∫|x|^{-b}|u|^p / (‖∇u‖^{N(p-2)/2+b} ‖u‖^{p-N(p-2)/2-b}).
pub fn gn_quotient(u: &RadialField, b: f64, p: f64) -> Result<f64> {
    let g = &u.grid;
    let grad = g.dirichlet_energy(&u.values).sqrt();
    let mass = crate::grid::l2_sq(g, &u.values).sqrt();
    if grad == 0.0 || mass == 0.0 {
        return Err(Error::UndefinedQuotient);
    }
    let n = g.dim as f64;
    let eg = n * (p - 2.0) / 2.0 + b;
    let em = p - eg;
    Ok(weighted_lp(u, b, p)? / (grad.powf(eg) * mass.powf(em)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::scale_field;
    use std::f64::consts::PI;

    fn gaussian(g: &Arc<RadialGrid>, s: f64) -> RadialField {
        RadialField::from_fn(g.clone(), |r| (-r * r / (s * s)).exp())
    }

    /// Composite Simpson on [0, r_max] of f(r) r^{N-1-b} with the sphere area.
    fn simpson(f: impl Fn(f64) -> f64, r_max: f64, m: usize) -> f64 {
        let h = r_max / m as f64;
        let mut s = f(0.0) + f(r_max);
        for i in 1..m {
            let c = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += c * f(i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn zero_field_has_zero_functionals() {
        let g = RadialGrid::shared(3, 10.0, 100).unwrap();
        let r = compute_functionals(&ModelParams::benchmark(), &RadialField::zeros(g)).unwrap();
        for x in [r.mass, r.energy, r.action, r.pohozaev, r.i_omega, r.grad_sq, r.w1, r.w2] {
            assert_eq!(x, 0.0);
        }
    }

    #[test]
    fn weighted_lp_gaussian_and_constant() {
        let g = RadialGrid::shared(3, 12.0, 6000).unwrap();
        let u = RadialField::from_fn(g, |r| (-r * r / 2.0).exp());
        let v = weighted_lp(&u, 0.0, 2.0).unwrap();
        assert!((v - PI.powf(1.5)).abs() < 1e-5 * PI.powf(1.5));

        let g1 = RadialGrid::shared(3, 1.0, 7).unwrap();
        let one = RadialField::from_fn(g1, |_| 1.0);
        let v = weighted_lp(&one, 1.0, 2.0).unwrap();
        assert!((v - 2.0 * PI).abs() < 1e-13);
        let z = RadialField::zeros(one.grid.clone());
        assert_eq!(weighted_lp(&z, 0.5, 3.0).unwrap(), 0.0);
        assert!(weighted_lp(&one, 3.0, 2.0).is_err());
    }

    #[test]
    fn weighted_lp_converges_at_second_order() {
        let oracle = {
            let f = |r: f64| 4.0 * PI * r.powf(1.5) * (-3.2 * r * r).exp();
            simpson(f, 8.0, 400_000)
        };
        let err = |n: usize| {
            let g = RadialGrid::shared(3, 8.0, n).unwrap();
            let u = RadialField::from_fn(g, |r| (-r * r).exp());
            (weighted_lp(&u, 0.5, 3.2).unwrap() - oracle).abs() / oracle
        };
        let (e1, e2) = (err(400), err(800));
        assert!(e1 / e2 > 3.5, "ratio {}", e1 / e2);
    }

    #[test]
    fn functionals_match_refined_oracle() {
        let p = ModelParams::benchmark();
        let g = RadialGrid::shared(3, 8.0, 40_000).unwrap();
        let r = compute_functionals(&p, &gaussian(&g, 1.0)).unwrap();
        let m = 400_000;
        let surf = 4.0 * PI;
        let mass = simpson(|r| surf * r * r * (-2.0 * r * r).exp(), 8.0, m);
        let grad = simpson(|r| surf * r * r * (2.0 * r * (-r * r).exp()).powi(2), 8.0, m);
        let w1 = simpson(|r| surf * r.powf(1.5) * (-p.p1 * r * r).exp(), 8.0, m);
        let w2 = simpson(|r| surf * r * (-p.p2 * r * r).exp(), 8.0, m);
        for (a, b) in [(r.mass, mass), (r.grad_sq, grad), (r.w1, w1), (r.w2, w2)] {
            assert!((a - b).abs() < 1e-6 * b, "{a} vs {b}");
        }
    }

    #[test]
    fn report_identities_hold() {
        let p = ModelParams::benchmark();
        let g = RadialGrid::shared(3, 10.0, 500).unwrap();
        let u = gaussian(&g, 0.7).scaled_real(1.7);
        let r = compute_functionals(&p, &u).unwrap();
        let (c1, c2) = p.pohozaev_coeffs();
        let (e1, _) = p.scaling_exponents();
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
        assert!(rel(r.action, r.energy + 0.5 * p.omega * r.mass) < 1e-12);
        assert!(rel(r.pohozaev, r.grad_sq + c1 * r.w1 - c2 * r.w2) < 1e-12);
        assert!(rel(r.i_omega, r.action - 2.0 * r.pohozaev / (2.0 * e1)) < 1e-12);
    }

    #[test]
    fn phase_invariance() {
        let p = ModelParams::benchmark();
        let g = RadialGrid::shared(3, 10.0, 300).unwrap();
        let u = gaussian(&g, 1.2).scaled_real(2.0);
        let a = compute_functionals(&p, &u).unwrap();
        let b = compute_functionals(&p, &u.scaled(Complex64::from_polar(1.0, 0.731))).unwrap();
        for (x, y) in [(a.mass, b.mass), (a.energy, b.energy), (a.action, b.action), (a.pohozaev, b.pohozaev)] {
            assert!((x - y).abs() <= 1e-12 * x.abs());
        }
    }

    #[test]
    fn pohozaev_is_scaling_derivative_of_action() {
        let p = ModelParams::benchmark();
        let g = RadialGrid::shared(3, 12.0, 8000).unwrap();
        let u = gaussian(&g, 1.0).scaled_real(1.5);
        let k = compute_functionals(&p, &u).unwrap().pohozaev;
        let d = 1e-3;
        let s = |t: f64| {
            let v = scale_field(&u, t).unwrap().field;
            compute_functionals(&p, &v).unwrap().action
        };
        let fd = (s(1.0 + d) - s(1.0 - d)) / (2.0 * d);
        assert!((fd - k).abs() < 1e-4 * k.abs(), "{fd} vs {k}");
    }

    #[test]
    fn x_norm_properties() {
        let p = ModelParams::benchmark().with_omega(0.0);
        let g = RadialGrid::shared(3, 8.0, 20_000).unwrap();
        let u = gaussian(&g, 1.0);
        assert_eq!(x_norm(&RadialField::zeros(g.clone()), &p).unwrap(), 0.0);
        let x1 = x_norm(&u, &p).unwrap();
        let x3 = x_norm(&u.scaled_real(-3.0), &p).unwrap();
        assert!((x3 - 3.0 * x1).abs() < 1e-12 * x1, "{x3} {x1}");
        let m = 400_000;
        let surf = 4.0 * PI;
        let grad = simpson(|r| surf * r * r * (2.0 * r * (-r * r).exp()).powi(2), 8.0, m);
        let w1 = simpson(|r| surf * r.powf(1.5) * (-p.p1 * r * r).exp(), 8.0, m);
        let oracle = grad.sqrt() + w1.powf(1.0 / p.p1);
        assert!((x1 - oracle).abs() < 1e-6 * oracle);
        let g2 = RadialGrid::shared(2, 8.0, 100).unwrap();
        assert!(x_norm(&gaussian(&g2, 1.0), &p.with_omega(0.0)).is_err());
    }

    #[test]
    fn gn_quotient_invariances() {
        let p = ModelParams::benchmark();
        let g = RadialGrid::shared(3, 16.0, 16_000).unwrap();
        let u = gaussian(&g, 1.0);
        let q = gn_quotient(&u, p.b2, p.p2).unwrap();
        assert!(q.is_finite() && q > 0.0);
        let qc = gn_quotient(&u.scaled_real(3.7), p.b2, p.p2).unwrap();
        assert!((q - qc).abs() < 1e-10 * q, "{q} {qc}");
        let ql = gn_quotient(&scale_field(&u, 1.4).unwrap().field, p.b2, p.p2).unwrap();
        assert!((q - ql).abs() < 1e-4 * q, "{q} vs {ql}");
        assert!(matches!(
            gn_quotient(&RadialField::zeros(g), p.b2, p.p2),
            Err(Error::UndefinedQuotient)
        ));
    }
}
