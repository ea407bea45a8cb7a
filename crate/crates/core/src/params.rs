//! Model parameters and their admissibility.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

/// The sextuple (N, b1, b2, p1, p2, ω).
///
/// Index 1 is the defocusing lower-order term, index 2 the focusing one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub dim: u32,
    pub b1: f64,
    pub b2: f64,
    pub p1: f64,
    pub p2: f64,
    pub omega: f64,
}

impl ModelParams {
    pub fn new(dim: u32, b1: f64, b2: f64, p1: f64, p2: f64, omega: f64) -> Self {
        Self {
            dim,
            b1,
            b2,
            p1,
            p2,
            omega,
        }
    }

    /// N = 3, b1 = 0.5, b2 = 1, p1 = 3.2, p2 = 3.5, ω = 1.
    pub fn benchmark() -> Self {
        Self::new(3, 0.5, 1.0, 3.2, 3.5, 1.0)
    }

    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega = omega;
        self
    }

    pub fn n(&self) -> f64 {
        self.dim as f64
    }

    /// Exponent of t in w_j(u_t)/w_j(u): N(p_j-2)/2 + b_j.
    pub fn scaling_exponents(&self) -> (f64, f64) {
        let n = self.n();
        (
            n * (self.p1 - 2.0) / 2.0 + self.b1,
            n * (self.p2 - 2.0) / 2.0 + self.b2,
        )
    }

    /// Coefficients of w1 and w2 in K: (N(p_j-2)+2b_j)/(2p_j).
    pub fn pohozaev_coeffs(&self) -> (f64, f64) {
        let (e1, e2) = self.scaling_exponents();
        (e1 / self.p1, e2 / self.p2)
    }

    /// s_{c,j} = N/2 - (2-b_j)/(p_j-2).
    pub fn critical_indices(&self) -> (f64, f64) {
        let n = self.n();
        (
            n / 2.0 - (2.0 - self.b1) / (self.p1 - 2.0),
            n / 2.0 - (2.0 - self.b2) / (self.p2 - 2.0),
        )
    }

    /// Upper power 2(N-b)/(N-2), infinite for N ≤ 2.
    pub fn critical_power(&self, b: f64) -> f64 {
        if self.dim <= 2 {
            f64::INFINITY
        } else {
            2.0 * (self.n() - b) / (self.n() - 2.0)
        }
    }

    fn all_finite(&self) -> bool {
        [self.b1, self.b2, self.p1, self.p2, self.omega]
            .iter()
            .all(|x| x.is_finite())
    }

    /// Key used for caching results that depend only on the parameters.
    pub fn cache_key(&self) -> String {
        format!(
            "N{}_b1{:.6}_b2{:.6}_p1{:.6}_p2{:.6}_w{:.6}",
            self.dim, self.b1, self.b2, self.p1, self.p2, self.omega
        )
    }
}

/// One inequality of the admissibility set that failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    DimensionZero,
    B1Range,
    B2Range,
    P1Range,
    P2Range,
    MassSupercritical,
    Ordering,
    NegativeFrequencyLowDim,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Violation::DimensionZero => "N >= 1",
            Violation::B1Range => "0 < b1 < min{2, N}",
            Violation::B2Range => "0 < b2 < min{2, N}",
            Violation::P1Range => "2 < p1 < 2(N-b1)/(N-2)+",
            Violation::P2Range => "2 < p2 < 2(N-b2)/(N-2)+",
            Violation::MassSupercritical => "N(p1-2)/2 + b1 > 2",
            Violation::Ordering => "N(p1-2) + 2b1 < N(p2-2) + 2b2",
            Violation::NegativeFrequencyLowDim => "omega < 0 requires N >= 2",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Admissibility {
    Accepted,
    /// All inequalities hold but ω < 0: only the elliptic nonexistence scan makes sense.
    ValidForEllipticNonexistenceDemo,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub status: Admissibility,
    pub violations: Vec<Violation>,
    pub sc1: f64,
    pub sc2: f64,
    pub crit_power1: f64,
    pub crit_power2: f64,
}

impl AdmissibilityReport {
    pub fn accepted(&self) -> bool {
        self.status == Admissibility::Accepted
    }
}

pub fn validate_params(p: &ModelParams) -> Result<AdmissibilityReport> {
    if !p.all_finite() {
        return Err(Error::MalformedParameters(format!("{:?}", p)));
    }
    let mut v = Vec::new();
    if p.dim == 0 {
        v.push(Violation::DimensionZero);
    }
    let n = p.n();
    let bmax = n.min(2.0);
    if !(p.b1 > 0.0 && p.b1 < bmax) {
        v.push(Violation::B1Range);
    }
    if !(p.b2 > 0.0 && p.b2 < bmax) {
        v.push(Violation::B2Range);
    }
    let (c1, c2) = (p.critical_power(p.b1), p.critical_power(p.b2));
    if !(p.p1 > 2.0 && p.p1 < c1) {
        v.push(Violation::P1Range);
    }
    if !(p.p2 > 2.0 && p.p2 < c2) {
        v.push(Violation::P2Range);
    }
    if !(n * (p.p1 - 2.0) / 2.0 + p.b1 > 2.0) {
        v.push(Violation::MassSupercritical);
    }
    if !(n * (p.p1 - 2.0) + 2.0 * p.b1 < n * (p.p2 - 2.0) + 2.0 * p.b2) {
        v.push(Violation::Ordering);
    }
    if p.omega < 0.0 && p.dim < 2 {
        v.push(Violation::NegativeFrequencyLowDim);
    }
    let status = if !v.is_empty() {
        Admissibility::Rejected
    } else if p.omega < 0.0 {
        Admissibility::ValidForEllipticNonexistenceDemo
    } else {
        Admissibility::Accepted
    };
    let (sc1, sc2) = p.critical_indices();
    Ok(AdmissibilityReport {
        status,
        violations: v,
        sc1,
        sc2,
        crit_power1: c1,
        crit_power2: c2,
    })
}

/// Interpolation exponents (θ1, θ2, θ0) of the zero-frequency embedding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingExponents {
    pub theta1: f64,
    pub theta2: f64,
    pub theta0: f64,
}

/// θ1 solves p2 = θ1 p1 + (1-θ1) 2(N-b2)/(N-2), θ2 solves
/// b2 = θ2 b1 + (1-θ2)(2N - p1(N-2))/2, and
/// θ0 = θ1θ2 + θ1(1-θ2)p1/2 + (1-θ1)(N-b2)/(N-2).
pub fn embedding_exponents(p: &ModelParams) -> Result<EmbeddingExponents> {
    if p.dim < 3 {
        return Err(Error::NotApplicable("embedding needs N >= 3".into()));
    }
    if !(p.b1 < p.b2 && p.p1 < p.p2) {
        return Err(Error::NotApplicable("embedding needs b1 < b2 and p1 < p2".into()));
    }
    let n = p.n();
    let q = 2.0 * (n - p.b2) / (n - 2.0);
    let s = (2.0 * n - p.p1 * (n - 2.0)) / 2.0;
    let theta1 = (p.p2 - q) / (p.p1 - q);
    let theta2 = (p.b2 - s) / (p.b1 - s);
    let theta0 = theta1 * theta2
        + theta1 * (1.0 - theta2) * p.p1 / 2.0
        + (1.0 - theta1) * (n - p.b2) / (n - 2.0);
    let inside = |t: f64| t > 0.0 && t < 1.0 && t.is_finite();
    if !inside(theta1) || !inside(theta2) {
        return Err(Error::NotApplicable(format!(
            "interpolation exponents outside (0,1): theta1 = {theta1}, theta2 = {theta2}"
        )));
    }
    if !(theta0 > 1.0) {
        return Err(Error::NotApplicable(format!("theta0 = {theta0} is not > 1")));
    }
    Ok(EmbeddingExponents {
        theta1,
        theta2,
        theta0,
    })
}
