//! Radial time stepping: Strang splitting of an exact nonlinear phase rotation
//! and a Crank–Nicolson step for the discrete Laplacian, with blow-up triggers
//! and rate fits.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::Discretization;
use crate::grid::{RadialField, RadialGrid};
use crate::params::ModelParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolutionOptions {
    pub t_final: f64,
    /// Upper bound on the adaptive step.
    pub dt_max: f64,
    /// c in dt = min(dt_max, c/(1 + ‖∇u‖²)).
    pub dt_scale: f64,
    /// Overrides the adaptive rule.
    pub fixed_dt: Option<f64>,
    pub dt_min: f64,
    /// Stop once ‖∇u‖ exceeds this multiple of its initial value.
    pub growth_trigger: f64,
    /// Stop once h·‖∇u‖/‖u‖ exceeds this (the grid no longer resolves u).
    pub resolution_trigger: Option<f64>,
    pub sponge: bool,
    pub sponge_strength: f64,
    pub record_interval: f64,
    /// Also record whenever ‖∇u‖ moved by this fraction since the last record.
    pub record_growth: f64,
    /// Radius of the ball used for the local mass column.
    pub local_radius: f64,
    pub snapshot_interval: Option<f64>,
    pub max_steps: Option<usize>,
}

impl Default for EvolutionOptions {
    fn default() -> Self {
        Self {
            t_final: 1.0,
            dt_max: 1e-3,
            dt_scale: 5e-4,
            fixed_dt: None,
            dt_min: 1e-14,
            growth_trigger: 1e3,
            resolution_trigger: Some(0.1),
            sponge: false,
            sponge_strength: 5.0,
            record_interval: 0.05,
            record_growth: 0.01,
            local_radius: 10.0,
            snapshot_interval: None,
            max_steps: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    ReachedFinalTime,
    GradientTrigger,
    DtUnderflow,
    ResolutionLimit,
    StepLimit,
}

impl Termination {
    pub fn blowup_suspected(self) -> bool {
        matches!(
            self,
            Termination::GradientTrigger | Termination::DtUnderflow | Termination::ResolutionLimit
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub t: f64,
    pub dt: f64,
    pub mass: f64,
    /// Mass inside the un-sponged region (equals `mass` without sponge).
    pub mass_inner: f64,
    pub energy: f64,
    pub pohozaev: f64,
    pub grad_norm: f64,
    pub local_mass: f64,
}

/// What the per-step observer sees. Between records the nonlinear phase of
/// the last half step is still pending, so only the moduli are exact.
pub struct StepView<'a> {
    pub t: f64,
    pub dt: f64,
    pub values: &'a [Complex64],
    pub synced: bool,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub params: ModelParams,
    pub history: Vec<HistoryRow>,
    pub termination: Termination,
    pub final_field: RadialField,
    pub snapshots: Vec<(f64, RadialField)>,
    pub steps: usize,
    pub sponge: bool,
}

impl Trajectory {
    pub fn initial(&self) -> &HistoryRow {
        &self.history[0]
    }

    pub fn last(&self) -> &HistoryRow {
        self.history.last().unwrap()
    }

    /// max |M(t) - M(0)|/M(0) over the records (un-sponged region if sponged).
    pub fn mass_drift(&self) -> f64 {
        let m0 = if self.sponge { self.initial().mass_inner } else { self.initial().mass };
        if m0 == 0.0 {
            return 0.0;
        }
        self.history
            .iter()
            .map(|h| ((if self.sponge { h.mass_inner } else { h.mass }) - m0).abs() / m0)
            .fold(0.0, f64::max)
    }

    /// max |E(t) - E(0)| / max(|E(0)|, ‖∇u₀‖²).
    pub fn energy_drift(&self) -> f64 {
        let h0 = self.initial();
        let scale = h0.energy.abs().max(h0.grad_norm * h0.grad_norm);
        if scale == 0.0 {
            return 0.0;
        }
        self.history
            .iter()
            .map(|h| (h.energy - h0.energy).abs() / scale)
            .fold(0.0, f64::max)
    }
}

/// The split-step propagator on a fixed grid.
pub struct Propagator {
    pub disc: Discretization,
    /// Absorption rate per node (empty when the sponge is off).
    absorption: Vec<f64>,
    /// Scratch for the tridiagonal sweep.
    work: Vec<Complex64>,
    rhs: Vec<Complex64>,
}

impl Propagator {
    pub fn new(p: &ModelParams, grid: Arc<RadialGrid>, sponge: Option<f64>) -> Result<Self> {
        let disc = Discretization::new(p, grid)?;
        let g = &disc.grid;
        let absorption = match sponge {
            Some(strength) => {
                let start = 0.9 * g.r_max;
                let width = 0.1 * g.r_max;
                g.nodes
                    .iter()
                    .map(|&r| if r > start { strength * ((r - start) / width).powi(2) } else { 0.0 })
                    .collect()
            }
            None => Vec::new(),
        };
        let n = g.n;
        Ok(Self {
            disc,
            absorption,
            work: vec![Complex64::new(0.0, 0.0); n],
            rhs: vec![Complex64::new(0.0, 0.0); n],
        })
    }

    /// u ← u·exp(-i dt W), W = r^{-b1}|u|^{p1-2} - r^{-b2}|u|^{p2-2}
    /// (cell averages of the weights). Leaves |u| unchanged.
    pub fn nonlinear_phase_step(&self, u: &mut [Complex64], dt: f64) {
        if dt == 0.0 {
            return;
        }
        let p = &self.disc.params;
        let (a1, a2) = (0.5 * (p.p1 - 2.0), 0.5 * (p.p2 - 2.0));
        for (i, z) in u.iter_mut().enumerate() {
            let m2 = z.norm_sqr();
            if m2 == 0.0 {
                continue;
            }
            let l = m2.ln();
            let w = self.disc.v1[i] * (a1 * l).exp() - self.disc.v2[i] * (a2 * l).exp();
            let (s, c) = (-dt * w).sin_cos();
            *z *= Complex64::new(c, s);
        }
    }

    /// One Crank–Nicolson step of i u_t = A u / W (then the sponge, if any).
    pub fn linear_step(&mut self, u: &mut [Complex64], dt: f64) -> Result<()> {
        if dt == 0.0 {
            return Ok(());
        }
        let a = &self.disc.stiffness;
        let w = &self.disc.grid.weights;
        let n = u.len();
        let half = Complex64::new(0.0, 0.5 * dt);
        // rhs = (W - i dt/2 A) u
        for i in 0..n {
            let mut au = a.diag[i] * u[i];
            if i > 0 {
                au += a.off[i - 1] * u[i - 1];
            }
            if i + 1 < n {
                au += a.off[i] * u[i + 1];
            }
            self.rhs[i] = w[i] * u[i] - half * au;
        }
        // Thomas sweep on (W + i dt/2 A); diagonally dominant since W > 0.
        let mut prev_c = Complex64::new(0.0, 0.0);
        for i in 0..n {
            let lower = if i > 0 { half * a.off[i - 1] } else { Complex64::new(0.0, 0.0) };
            let d = w[i] + half * a.diag[i] - lower * prev_c;
            if d.norm() == 0.0 || !d.is_finite() {
                return Err(Error::NonConvergence("Crank–Nicolson solve".into()));
            }
            let upper = if i + 1 < n { half * a.off[i] } else { Complex64::new(0.0, 0.0) };
            prev_c = upper / d;
            self.work[i] = prev_c;
            let prev_x = if i > 0 { self.rhs[i - 1] } else { Complex64::new(0.0, 0.0) };
            self.rhs[i] = (self.rhs[i] - lower * prev_x) / d;
        }
        u[n - 1] = self.rhs[n - 1];
        for i in (0..n - 1).rev() {
            u[i] = self.rhs[i] - self.work[i] * u[i + 1];
        }
        if !self.absorption.is_empty() {
            for (z, s) in u.iter_mut().zip(&self.absorption) {
                if *s > 0.0 {
                    *z *= (-dt * s).exp();
                }
            }
        }
        Ok(())
    }

    /// Half nonlinear, full linear, half nonlinear.
    pub fn strang_step(&mut self, u: &mut [Complex64], dt: f64) -> Result<()> {
        self.nonlinear_phase_step(u, 0.5 * dt);
        self.linear_step(u, dt)?;
        self.nonlinear_phase_step(u, 0.5 * dt);
        Ok(())
    }

    fn row(&self, u: &[Complex64], t: f64, dt: f64, local_radius: f64) -> HistoryRow {
        let rep = self.disc.report(u);
        let g = &self.disc.grid;
        let mut local = 0.0;
        let mut inner = 0.0;
        for i in 0..g.n {
            let m = u[i].norm_sqr() * g.weights[i];
            if g.nodes[i] <= local_radius {
                local += m;
            }
            if self.absorption.is_empty() || self.absorption[i] == 0.0 {
                inner += m;
            }
        }
        HistoryRow {
            t,
            dt,
            mass: rep.mass,
            mass_inner: inner,
            energy: rep.energy,
            pohozaev: rep.pohozaev,
            grad_norm: rep.grad_sq.sqrt(),
            local_mass: local,
        }
    }
}

/// Run the split-step scheme from u0 up to `opts.t_final` or a blow-up trigger.
pub fn evolve(
    p: &ModelParams,
    u0: &RadialField,
    opts: &EvolutionOptions,
    mut observer: impl FnMut(&StepView),
) -> Result<Trajectory> {
    if !(opts.t_final >= 0.0) || !(opts.dt_max > 0.0) || !(opts.dt_scale > 0.0) {
        return Err(Error::MalformedParameters("evolution time and step controls".into()));
    }
    if let Some(dt) = opts.fixed_dt {
        if !(dt > 0.0) {
            return Err(Error::MalformedParameters("fixed_dt must be positive".into()));
        }
    }
    let grid = u0.grid.clone();
    let mut prop = Propagator::new(p, grid.clone(), opts.sponge.then_some(opts.sponge_strength))?;
    let mut u = u0.values.clone();
    let mut history = vec![prop.row(&u, 0.0, 0.0, opts.local_radius)];
    let mut snapshots = Vec::new();
    if opts.snapshot_interval.is_some() {
        snapshots.push((0.0, u0.clone()));
    }
    let g0 = history[0].grad_norm;
    if let Some(thr) = opts.resolution_trigger {
        let m0 = history[0].mass;
        if m0 > 0.0 && grid.h * g0 / m0.sqrt() >= thr {
            return Err(Error::InvalidGrid(format!(
                "initial data not resolved: h |grad u|/|u| = {:.3} >= {thr}",
                grid.h * g0 / m0.sqrt()
            )));
        }
    }
    let mut last_recorded_g = g0;
    let mut next_record = opts.record_interval;
    let mut next_snapshot = opts.snapshot_interval.unwrap_or(f64::INFINITY);
    let mut t = 0.0;
    let mut pending = 0.0;
    let mut steps = 0usize;
    let termination;
    loop {
        if t >= opts.t_final * (1.0 - 1e-14) {
            termination = Termination::ReachedFinalTime;
            break;
        }
        if opts.max_steps.is_some_and(|m| steps >= m) {
            termination = Termination::StepLimit;
            break;
        }
        // G is read before the pending phase is applied; the difference is
        // O(dt) and only affects step selection.
        let dt = match opts.fixed_dt {
            Some(dt) => dt,
            None => {
                let gsq = prop.disc.grad_sq(&u);
                opts.dt_max.min(opts.dt_scale / (1.0 + gsq))
            }
        };
        // A remainder below 1e-6 dt (accumulated rounding) joins this step.
        let remaining = opts.t_final - t;
        let dt = if dt >= remaining * (1.0 - 1e-6) { remaining } else { dt };
        if dt < opts.dt_min && t + dt < opts.t_final * (1.0 - 1e-14) {
            termination = Termination::DtUnderflow;
            break;
        }
        // Adjacent half steps merge exactly since |u| does not change.
        prop.nonlinear_phase_step(&mut u, pending + 0.5 * dt);
        prop.linear_step(&mut u, dt)?;
        pending = 0.5 * dt;
        t += dt;
        steps += 1;
        observer(&StepView {
            t,
            dt,
            values: &u,
            synced: false,
        });

        let g = prop.disc.grad_sq(&u).sqrt();
        let mass = prop.disc.mass(&u);
        let growth = g0 > 0.0 && g >= opts.growth_trigger * g0;
        let unresolved = opts
            .resolution_trigger
            .is_some_and(|thr| mass > 0.0 && grid.h * g / mass.sqrt() >= thr);
        let moved = (g - last_recorded_g).abs() > opts.record_growth * last_recorded_g;
        let done = t >= opts.t_final * (1.0 - 1e-14);
        let snap = t >= next_snapshot;
        if t >= next_record || moved || growth || unresolved || done || snap {
            prop.nonlinear_phase_step(&mut u, pending);
            pending = 0.0;
            let row = prop.row(&u, t, dt, opts.local_radius);
            last_recorded_g = row.grad_norm;
            history.push(row);
            while next_record <= t {
                next_record += opts.record_interval;
            }
            if snap {
                snapshots.push((t, RadialField::new(grid.clone(), u.clone())?));
                while next_snapshot <= t {
                    next_snapshot += opts.snapshot_interval.unwrap();
                }
            }
            observer(&StepView {
                t,
                dt,
                values: &u,
                synced: true,
            });
        }
        if growth {
            termination = Termination::GradientTrigger;
            break;
        }
        if unresolved {
            termination = Termination::ResolutionLimit;
            break;
        }
    }
    if pending != 0.0 {
        prop.nonlinear_phase_step(&mut u, pending);
        history.push(prop.row(&u, t, 0.0, opts.local_radius));
    }
    Ok(Trajectory {
        params: *p,
        history,
        termination,
        final_field: RadialField::new(grid, u)?,
        snapshots,
        steps,
        sponge: opts.sponge,
    })
}

/// Closed-form exponents of the blow-up rate bounds. `None` where the
/// corresponding hypothesis on (N, b_j, p_j) fails.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateExponents {
    /// Lower bound on the decay exponent of ∫_t^T (T-τ)‖∇u‖² (energy-subcritical case).
    pub integral: Option<f64>,
    /// Upper bound on the growth exponent of ‖∇u‖ along a sequence.
    pub gradient: Option<f64>,
    /// Mass-subcritical counterparts.
    pub integral_mass_subcritical: Option<f64>,
    pub gradient_mass_subcritical: Option<f64>,
}

pub fn rate_exponents(p: &ModelParams) -> RateExponents {
    let n = p.n();
    let pairs = [(p.b1, p.p1), (p.b2, p.p2)];
    let energy_sub = n >= 3.0 && pairs.iter().all(|&(_, q)| q < 2.0 + 4.0 / (n - 2.0));
    let denom = |b: f64, q: f64| (n - 2.0) * (q - 2.0) + 2.0 * (b + 2.0);
    let (integral, gradient) = if energy_sub {
        (
            Some(pairs.iter().map(|&(b, q)| 2.0 * (6.0 - q) / denom(b, q)).fold(f64::INFINITY, f64::min)),
            Some(
                pairs
                    .iter()
                    .map(|&(b, q)| ((n - 1.0) * (q - 2.0) + 2.0 * b) / denom(b, q))
                    .fold(f64::NEG_INFINITY, f64::max),
            ),
        )
    } else {
        (None, None)
    };
    let mass_sub = pairs.iter().all(|&(_, q)| q < 2.0 + 4.0 / n);
    let d2 = |b: f64, q: f64| 4.0 - n * (q - 2.0) + 2.0 * b;
    let (im, gm) = if mass_sub {
        (
            Some(pairs.iter().map(|&(b, q)| 2.0 * (4.0 - n * (q - 2.0)) / d2(b, q)).fold(f64::INFINITY, f64::min)),
            Some(pairs.iter().map(|&(b, q)| 2.0 * b / d2(b, q)).fold(f64::NEG_INFINITY, f64::max)),
        )
    } else {
        (None, None)
    };
    RateExponents {
        integral,
        gradient,
        integral_mass_subcritical: im,
        gradient_mass_subcritical: gm,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupFit {
    pub t_est: f64,
    pub kappa_fit: f64,
    pub theta_fit: f64,
    pub reference: RateExponents,
    pub samples: usize,
    pub low_confidence: bool,
}

fn slope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let s = sxy / sxx;
    (s, my - s * mx)
}

/// Estimate the blow-up time from the recorded gradient norms and fit the
/// growth exponent κ (‖∇u‖ ~ (T-t)^{-κ}) and the decay exponent θ of
/// ∫_t^T (T-τ)‖∇u(τ)‖² dτ ~ (T-t)^θ.
pub fn detect_and_fit_blowup(traj: &Trajectory) -> Result<BlowupFit> {
    if !traj.termination.blowup_suspected() {
        return Err(Error::WindowError("run did not end at a blow-up trigger".into()));
    }
    let h: Vec<&HistoryRow> = traj.history.iter().filter(|r| r.dt > 0.0 || r.t == 0.0).collect();
    let last = h.last().unwrap();
    let g_last = last.grad_norm;
    let t_last = last.t;
    let g0 = h[0].grad_norm;
    // Window: the last three quarters of the growth, in logarithmic terms.
    let g_start = (g0 * (g_last / g0).powf(0.25)).max(g0);
    let window: Vec<&&HistoryRow> = h.iter().filter(|r| r.grad_norm >= g_start).collect();
    let mut low_confidence = window.len() < 6;
    if window.len() < 3 {
        return Err(Error::WindowError("fewer than three samples near the blow-up time".into()));
    }
    // 1/g → 0 at T: pick the T for which log g against log(T - t) is most
    // nearly a straight line, scanning the gap T - t_last logarithmically.
    let span = (t_last - window[0].t).max(f64::MIN_POSITIVE);
    let ys: Vec<f64> = window.iter().map(|r| r.grad_norm.ln()).collect();
    let sse = |t_est: f64| {
        let xs: Vec<f64> = window.iter().map(|r| -(t_est - r.t).ln()).collect();
        let (s, c) = slope(&xs, &ys);
        xs.iter().zip(&ys).map(|(x, y)| (y - s * x - c).powi(2)).sum::<f64>()
    };
    let (lo, hi) = ((1e-9 * span).ln(), (10.0 * span).ln());
    let mut best = (f64::INFINITY, hi);
    let grid_pts = 400;
    for k in 0..=grid_pts {
        let lg = lo + (hi - lo) * k as f64 / grid_pts as f64;
        let e = sse(t_last + lg.exp());
        if e < best.0 {
            best = (e, lg);
        }
    }
    let step = (hi - lo) / grid_pts as f64;
    let (mut a, mut b) = (best.1 - step, best.1 + step);
    for _ in 0..60 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if sse(t_last + m1.exp()) < sse(t_last + m2.exp()) {
            b = m2;
        } else {
            a = m1;
        }
    }
    let lg = 0.5 * (a + b);
    if lg <= lo + step || lg >= hi - step {
        // Optimum at the edge of the scan: the record does not pin T down.
        low_confidence = true;
    }
    let t_est = t_last + lg.exp();
    let xs: Vec<f64> = window.iter().map(|r| -(t_est - r.t).ln()).collect();
    let (kappa_fit, _) = slope(&xs, &ys);

    // ∫_t^{T_est}: trapezoid over the records plus g_last² held constant on
    // the final gap.
    let m = h.len();
    let mut integral = vec![0.0; m];
    let gap = t_est - t_last;
    integral[m - 1] = 0.5 * g_last * g_last * gap * gap;
    for k in (0..m - 1).rev() {
        let f = |r: &HistoryRow| (t_est - r.t) * r.grad_norm * r.grad_norm;
        integral[k] = integral[k + 1] + 0.5 * (h[k + 1].t - h[k].t) * (f(h[k]) + f(h[k + 1]));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (k, r) in h.iter().enumerate() {
        if r.grad_norm >= g_start && integral[k] > 0.0 {
            xs.push((t_est - r.t).ln());
            ys.push(integral[k].ln());
        }
    }
    if xs.len() < 2 {
        return Err(Error::WindowError("integral bound window is empty".into()));
    }
    let (theta_fit, _) = slope(&xs, &ys);
    Ok(BlowupFit {
        t_est,
        kappa_fit,
        theta_fit,
        reference: rate_exponents(&traj.params),
        samples: window.len(),
        low_confidence,
    })
}
