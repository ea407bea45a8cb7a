//! Explicit integrators for planar first-order systems y' = f(r, y).
//!
//! `Dopri5` is the Dormand–Prince 5(4) embedded pair with step-size control;
//! `rk4_step` is the classical fixed-step fourth-order method, used as an
//! independent re-integration of accepted adaptive steps.

use crate::error::{Error, Result};

pub type State = [f64; 2];

#[derive(Debug, Clone, Copy)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    /// Smallest admissible step relative to the current radius.
    pub min_rel_step: f64,
    pub max_steps: usize,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Self {
            rtol: 1e-11,
            atol: 1e-14,
            min_rel_step: 1e-15,
            max_steps: 5_000_000,
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy(y: &State, terms: &[(f64, &State)], h: f64) -> State {
    let mut out = *y;
    for (c, k) in terms {
        out[0] += h * c * k[0];
        out[1] += h * c * k[1];
    }
    out
}

/// What the driver should do after an accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Summary of a driven integration.
#[derive(Debug, Clone)]
pub struct DriveEnd {
    pub r: f64,
    pub y: State,
    pub stopped: bool,
    /// Radii of all accepted step endpoints, starting with the initial radius.
    pub accepted: Vec<f64>,
    pub states: Vec<State>,
}

impl Dopri5 {
    /// One trial step. Returns the fifth-order solution and a scaled error norm.
    pub fn trial<F: Fn(f64, &State) -> State>(&self, f: &F, r: f64, y: &State, h: f64) -> (State, f64) {
        let k1 = f(r, y);
        let k2 = f(r + C2 * h, &axpy(y, &[(A21, &k1)], h));
        let k3 = f(r + C3 * h, &axpy(y, &[(A31, &k1), (A32, &k2)], h));
        let k4 = f(r + C4 * h, &axpy(y, &[(A41, &k1), (A42, &k2), (A43, &k3)], h));
        let k5 = f(
            r + C5 * h,
            &axpy(y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], h),
        );
        let k6 = f(
            r + h,
            &axpy(y, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], h),
        );
        let y5 = axpy(y, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)], h);
        let k7 = f(r + h, &y5);
        let mut err: f64 = 0.0;
        for i in 0..2 {
            let e = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = self.atol + self.rtol * y[i].abs().max(y5[i].abs());
            err = err.max((e / sc).abs());
        }
        (y5, err)
    }

    /// Integrate from (r0, y0) towards r_end, landing exactly on each radius in
    /// `targets` (sorted ascending). `on_step(r, y, hit_target)` is called after
    /// every accepted step and may stop the integration.
    pub fn drive<F, C>(
        &self,
        f: F,
        r0: f64,
        y0: State,
        r_end: f64,
        h0: f64,
        targets: &[f64],
        mut on_step: C,
    ) -> Result<DriveEnd>
    where
        F: Fn(f64, &State) -> State,
        C: FnMut(f64, &State, bool) -> Control,
    {
        let mut r = r0;
        let mut y = y0;
        let mut h = h0;
        let mut ti = targets.partition_point(|&t| t <= r0);
        let mut accepted = vec![r0];
        let mut states = vec![y0];
        let mut steps = 0usize;
        while r < r_end {
            steps += 1;
            if steps > self.max_steps {
                return Err(Error::StiffFailure { r, u: y[0], u_r: y[1] });
            }
            let next = if ti < targets.len() {
                targets[ti].min(r_end)
            } else {
                r_end
            };
            let clipped = h >= next - r;
            let h_try = if clipped { next - r } else { h };
            let (yn, err) = self.trial(&f, r, &y, h_try);
            if err <= 1.0 && yn[0].is_finite() && yn[1].is_finite() {
                r = if clipped { next } else { r + h_try };
                y = yn;
                let hit = clipped && ti < targets.len() && next == targets[ti];
                if hit {
                    ti += 1;
                }
                accepted.push(r);
                states.push(y);
                let fac = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                if !clipped {
                    h = h_try * fac;
                } else {
                    h = h.max(h_try * fac);
                }
                if on_step(r, &y, hit) == Control::Stop {
                    return Ok(DriveEnd { r, y, stopped: true, accepted, states });
                }
            } else {
                let fac = if err.is_finite() {
                    (0.9 * err.powf(-0.2)).clamp(0.1, 0.5)
                } else {
                    0.1
                };
                h = h_try * fac;
                if h < self.min_rel_step * r.abs().max(1e-300) {
                    return Err(Error::StiffFailure { r, u: y[0], u_r: y[1] });
                }
            }
        }
        Ok(DriveEnd { r, y, stopped: false, accepted, states })
    }
}

pub fn rk4_step<F: Fn(f64, &State) -> State>(f: &F, r: f64, y: &State, h: f64) -> State {
    let k1 = f(r, y);
    let k2 = f(r + 0.5 * h, &axpy(y, &[(0.5, &k1)], h));
    let k3 = f(r + 0.5 * h, &axpy(y, &[(0.5, &k2)], h));
    let k4 = f(r + h, &axpy(y, &[(1.0, &k3)], h));
    axpy(y, &[(1.0 / 6.0, &k1), (1.0 / 3.0, &k2), (1.0 / 3.0, &k3), (1.0 / 6.0, &k4)], h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_to_tolerance() {
        let f = |_r: f64, y: &State| [y[1], -y[0]];
        let d = Dopri5 { rtol: 1e-12, atol: 1e-14, ..Default::default() };
        let end = d.drive(f, 0.0, [1.0, 0.0], 10.0, 0.01, &[], |_, _, _| Control::Continue).unwrap();
        assert!((end.y[0] - 10f64.cos()).abs() < 1e-9);
        assert!((end.y[1] + 10f64.sin()).abs() < 1e-9);
    }

    #[test]
    fn lands_on_targets() {
        let f = |_r: f64, y: &State| [y[1], -y[0]];
        let targets = [0.5, 1.0, 2.5];
        let mut hits = Vec::new();
        Dopri5::default()
            .drive(f, 0.0, [1.0, 0.0], 3.0, 0.7, &targets, |r, y, hit| {
                if hit {
                    hits.push((r, y[0]));
                }
                Control::Continue
            })
            .unwrap();
        assert_eq!(hits.len(), 3);
        for ((r, u), t) in hits.iter().zip(targets) {
            assert_eq!(*r, t);
            assert!((u - t.cos()).abs() < 1e-9);
        }
    }

    #[test]
    fn rk4_fourth_order() {
        let f = |_r: f64, y: &State| [y[1], -y[0]];
        let err = |n: usize| {
            let h = 1.0 / n as f64;
            let mut y = [1.0, 0.0];
            for i in 0..n {
                y = rk4_step(&f, i as f64 * h, &y, h);
            }
            (y[0] - 1f64.cos()).abs()
        };
        let ratio = err(20) / err(40);
        assert!(ratio > 14.0 && ratio < 18.0, "ratio {ratio}");
    }
}
