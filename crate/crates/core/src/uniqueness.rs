//! The weighted Pohozaev quantity
//!
//! J(r; u) = ½A u_r² + B u_r u + ½C u² + (A r^{-b2}/p2) u^{p2} - (A r^{-b1}/p1) u^{p1}
//!
//! with power-law coefficients chosen so that along solutions of the radial
//! ODE dJ/dr = G u² + H u^{p2}, plus the sign conditions built from H.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::shooting::Terms;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JCoefficients {
    pub params: ModelParams,
    /// Exponent of A: (2b1 + 2(N-1)p1)/(p1+2).
    pub alpha: f64,
    b0: f64,
    c_const: f64,
    g_omega: f64,
    g_const: f64,
    h0: f64,
}

impl JCoefficients {
    pub fn new(p: &ModelParams) -> Self {
        let n = p.n();
        let (b1, p1) = (p.b1, p.p1);
        let alpha = (2.0 * b1 + 2.0 * (n - 1.0) * p1) / (p1 + 2.0);
        let k1 = 2.0 * (n - 1.0) - b1;
        let k2 = 2.0 * (n - b1) - p1 * (n - 2.0);
        let cond = uniqueness_lhs(p);
        Self {
            params: *p,
            alpha,
            b0: k1 / (p1 + 2.0),
            c_const: k1 * k2 / (p1 + 2.0).powi(2),
            g_omega: ((n - 1.0) * (2.0 - p1) - 2.0 * b1) / (p1 + 2.0),
            g_const: k1 * k2 * ((b1 - 2.0) + (n - 2.0) * p1) / (p1 + 2.0).powi(3),
            h0: -cond.0,
        }
    }

    pub fn a(&self, r: f64) -> f64 {
        r.powf(self.alpha)
    }

    pub fn b(&self, r: f64) -> f64 {
        self.b0 * r.powf(self.alpha - 1.0)
    }

    pub fn c(&self, r: f64) -> f64 {
        -self.params.omega * r.powf(self.alpha) + self.c_const * r.powf(self.alpha - 2.0)
    }

    pub fn g(&self, r: f64) -> f64 {
        self.params.omega * self.g_omega * r.powf(self.alpha - 1.0)
            + self.g_const * r.powf(self.alpha - 3.0)
    }

    pub fn h(&self, r: f64) -> f64 {
        self.h0 * r.powf(self.alpha - 1.0 - self.params.b2)
    }
}

pub fn j_quantity(p: &ModelParams, r: f64, u: f64, u_r: f64) -> f64 {
    j_quantity_with(&JCoefficients::new(p), Terms::FULL, r, u, u_r)
}

/// J with the potential terms dropped for disabled nonlinearities.
pub fn j_quantity_with(c: &JCoefficients, terms: Terms, r: f64, u: f64, u_r: f64) -> f64 {
    let p = &c.params;
    let a = c.a(r);
    let mut j = 0.5 * a * u_r * u_r + c.b(r) * u_r * u + 0.5 * c.c(r) * u * u;
    let m = u.abs();
    if terms.focusing && m > 0.0 {
        j += a * r.powf(-p.b2) / p.p2 * m.powf(p.p2);
    }
    if terms.defocusing && m > 0.0 {
        j -= a * r.powf(-p.b1) / p.p1 * m.powf(p.p1);
    }
    j
}

/// G u² + H u^{p2} (the H term only when the focusing term is on).
pub fn j_derivative_model(c: &JCoefficients, terms: Terms, r: f64, u: f64) -> f64 {
    let mut d = c.g(r) * u * u;
    if terms.focusing && u != 0.0 {
        d += c.h(r) * u.abs().powf(c.params.p2);
    }
    d
}

/// Max over interior nodes of |ΔJ/Δr - (G u² + H u^{p2})| (centered
/// differences on a uniform grid) over max |G u² + H u^{p2}|, restricted to
/// nodes with r ≥ r_min. Zero when both sides vanish.
pub fn dj_identity_residual_with(
    p: &ModelParams,
    terms: Terms,
    r: &[f64],
    u: &[f64],
    u_r: &[f64],
    r_min: f64,
) -> f64 {
    let c = JCoefficients::new(p);
    let n = r.len();
    if n < 3 {
        return 0.0;
    }
    let j: Vec<f64> = (0..n).map(|i| j_quantity_with(&c, terms, r[i], u[i], u_r[i])).collect();
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 1..n - 1 {
        if r[i] < r_min {
            continue;
        }
        let rhs = j_derivative_model(&c, terms, r[i], u[i]);
        let fd = (j[i + 1] - j[i - 1]) / (r[i + 1] - r[i - 1]);
        worst = worst.max((fd - rhs).abs());
        scale = scale.max(rhs.abs());
    }
    if scale == 0.0 {
        if worst == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        worst / scale
    }
}

pub fn dj_identity_residual(p: &ModelParams, r: &[f64], u: &[f64], u_r: &[f64]) -> f64 {
    dj_identity_residual_with(p, Terms::FULL, r, u, u_r, 0.0)
}

/// (lhs_main, lhs_swapped).
fn uniqueness_lhs(p: &ModelParams) -> (f64, f64) {
    let n = p.n();
    let (b1, b2, p1, p2) = (p.b1, p.b2, p.p1, p.p2);
    let main = (2.0 * (n - 1.0) - b1) / (p1 + 2.0)
        - (2.0 * b1 + 2.0 * (n - 1.0) * p1) / (p2 * (p1 + 2.0))
        + b2 / p2;
    let swapped = (2.0 * (n - 1.0) - b2) / (p2 + 2.0)
        - (2.0 * b2 + 2.0 * (n - 1.0) * p2) / (p1 * (p2 + 2.0))
        + b1 / p1;
    (main, swapped)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniquenessCondition {
    pub lhs_main: f64,
    pub lhs_swapped: f64,
    /// lhs_main ≤ 0.
    pub holds_main: bool,
    /// lhs_swapped ≥ 0.
    pub holds_swapped: bool,
}

pub fn uniqueness_condition(p: &ModelParams) -> Result<UniquenessCondition> {
    if p.dim < 3 {
        return Err(Error::NotApplicable("uniqueness condition needs N >= 3".into()));
    }
    let (lhs_main, lhs_swapped) = uniqueness_lhs(p);
    Ok(UniquenessCondition {
        lhs_main,
        lhs_swapped,
        holds_main: lhs_main <= 0.0,
        holds_swapped: lhs_swapped >= 0.0,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JScan {
    pub r: Vec<f64>,
    pub j: Vec<f64>,
    /// Centered differences of J (one-sided at the ends).
    pub dj: Vec<f64>,
    pub model: Vec<f64>,
    pub min_j: f64,
    pub dj_sign_changes: usize,
    pub unique_turning_point: bool,
    /// Whether J ≥ 0 is expected (the main condition holds).
    pub expect_nonnegative: bool,
    pub residual: f64,
}

pub fn sign_scan(p: &ModelParams, r: &[f64], u: &[f64], u_r: &[f64]) -> JScan {
    let c = JCoefficients::new(p);
    let n = r.len();
    let j: Vec<f64> = (0..n).map(|i| j_quantity_with(&c, Terms::FULL, r[i], u[i], u_r[i])).collect();
    let model: Vec<f64> = (0..n).map(|i| j_derivative_model(&c, Terms::FULL, r[i], u[i])).collect();
    let dj: Vec<f64> = (0..n)
        .map(|i| {
            if n < 2 {
                0.0
            } else if i == 0 {
                (j[1] - j[0]) / (r[1] - r[0])
            } else if i == n - 1 {
                (j[n - 1] - j[n - 2]) / (r[n - 1] - r[n - 2])
            } else {
                (j[i + 1] - j[i - 1]) / (r[i + 1] - r[i - 1])
            }
        })
        .collect();
    let min_j = j.iter().copied().fold(f64::INFINITY, f64::min);
    let mut changes = 0;
    let mut prev = 0.0;
    for &d in &dj {
        if d != 0.0 {
            if prev != 0.0 && (d > 0.0) != (prev > 0.0) {
                changes += 1;
            }
            prev = d;
        }
    }
    let expect_nonnegative = uniqueness_lhs(p).0 <= 0.0;
    JScan {
        residual: dj_identity_residual(p, r, u, u_r),
        r: r.to_vec(),
        j,
        dj,
        model,
        min_j: if n == 0 { 0.0 } else { min_j },
        dj_sign_changes: changes,
        unique_turning_point: changes == 1,
        expect_nonnegative,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn alpha_at_benchmark() {
        let c = JCoefficients::new(&ModelParams::benchmark());
        assert!((c.alpha - 13.8 / 5.2).abs() < 1e-14);
        assert!(c.alpha > 2.0);
    }

    #[test]
    fn condition_values_at_benchmark() {
        let u = uniqueness_condition(&ModelParams::benchmark()).unwrap();
        assert!((u.lhs_main - 0.2006).abs() < 1e-4, "{}", u.lhs_main);
        assert!((u.lhs_swapped + 0.2074).abs() < 1e-4, "{}", u.lhs_swapped);
        assert!(!u.holds_main && !u.holds_swapped);
        let two = ModelParams::benchmark();
        let two = ModelParams { dim: 2, ..two };
        assert!(uniqueness_condition(&two).is_err());
    }

    #[test]
    fn degenerate_parameters_are_symmetric() {
        let p = ModelParams::new(3, 0.7, 0.7, 3.3, 3.3, 1.0);
        let u = uniqueness_condition(&p).unwrap();
        assert!((u.lhs_main - u.lhs_swapped).abs() < 1e-15);
    }

    #[test]
    fn zero_profile() {
        let p = ModelParams::benchmark();
        let r: Vec<f64> = (0..50).map(|i| 0.1 + 0.2 * i as f64).collect();
        let z = vec![0.0; 50];
        assert_eq!(dj_identity_residual(&p, &r, &z, &z), 0.0);
        let s = sign_scan(&p, &r, &z, &z);
        assert_eq!(s.min_j, 0.0);
        assert!(s.j.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn decaying_linear_solution_satisfies_identity() {
        // N = 3, no nonlinearity: u = e^{-kr}/r solves u'' + 2u'/r = k² u.
        let p = ModelParams::benchmark().with_omega(2.0);
        let k = 2f64.sqrt();
        let lin = Terms::LINEAR;
        let res = |n: usize| {
            let h = 9.0 / n as f64;
            let r: Vec<f64> = (0..=n).map(|i| 1.0 + h * i as f64).collect();
            let u: Vec<f64> = r.iter().map(|x| (-k * x).exp() / x).collect();
            let ur: Vec<f64> = r.iter().zip(&u).map(|(x, v)| -v * (k + 1.0 / x)).collect();
            dj_identity_residual_with(&p, lin, &r, &u, &ur, 0.0)
        };
        let (a, b) = (res(2000), res(4000));
        assert!(a < 1e-4, "{a}");
        assert!(a / b > 3.5 && a / b < 4.5, "{a} {b}");
    }

    proptest! {
        #[test]
        fn defining_relations(r in 0.05f64..20.0, b1 in 0.1f64..0.9, dp in 0.05f64..0.5, om in 0.0f64..3.0) {
            let p = ModelParams::new(3, b1, 1.0, 3.0 + dp, 3.6, om);
            let c = JCoefficients::new(&p);
            let n = 3.0;
            let da = c.alpha * r.powf(c.alpha - 1.0);
            // ½A' - (N-1)A/r + B = 0
            let e1 = 0.5 * da - (n - 1.0) * c.a(r) / r + c.b(r);
            prop_assert!(e1.abs() <= 1e-12 * c.b(r).abs().max(c.a(r) / r));
            // B r^{-b1} = (A r^{-b1})'/p1
            let lhs = c.b(r) * r.powf(-b1);
            let rhs = (c.alpha - b1) * r.powf(c.alpha - b1 - 1.0) / p.p1;
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs());
            // G = ωB + C'/2, C' by central differences
            let h = 1e-5 * r;
            let dc = (c.c(r + h) - c.c(r - h)) / (2.0 * h);
            let g = om * c.b(r) + 0.5 * dc;
            prop_assert!((g - c.g(r)).abs() <= 1e-6 * (c.g(r).abs() + om * c.b(r).abs() + 1e-12));
            // H = -B r^{-b2} + (A r^{-b2})'/p2
            let hh = -c.b(r) * r.powf(-p.b2) + (c.alpha - p.b2) * r.powf(c.alpha - p.b2 - 1.0) / p.p2;
            prop_assert!((hh - c.h(r)).abs() <= 1e-12 * hh.abs().max(1e-300));
        }
    }
}
