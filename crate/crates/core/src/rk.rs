//! Classical Runge–Kutta integration of Hamilton's equations.
//!
//! Rotation matrices are integrated as nine raw reals, so nothing keeps them
//! on SO(3) unless `reorthonormalize` projects them back after every step.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::liegroup::{nearest_rotation, Configuration, Mat3, Momentum, Rotation, Vec3};
use crate::model::{hamilton_rhs, SystemParams, SystemState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RkMode {
    /// Classical fourth-order method with constant step.
    Fixed { h: f64 },
    /// Dormand–Prince 5(4) with PI step control.
    Adaptive { rel_tol: f64, abs_tol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RkSettings {
    pub mode: RkMode,
    pub reorthonormalize: bool,
}

impl RkSettings {
    pub const DEFAULT_REL_TOL: f64 = 1e-8;
    pub const DEFAULT_ABS_TOL: f64 = 1e-10;

    pub fn fixed(h: f64) -> Self {
        RkSettings {
            mode: RkMode::Fixed { h },
            reorthonormalize: false,
        }
    }

    pub fn adaptive(rel_tol: f64, abs_tol: f64) -> Self {
        RkSettings {
            mode: RkMode::Adaptive { rel_tol, abs_tol },
            reorthonormalize: false,
        }
    }

    pub fn with_reorthonormalization(mut self, on: bool) -> Self {
        self.reorthonormalize = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        match self.mode {
            RkMode::Fixed { h } if !ok(h) => Err(Error::InvalidSettings(format!("step size must be positive, got {h}"))),
            RkMode::Adaptive { rel_tol, abs_tol } if !ok(rel_tol) || !ok(abs_tol) => Err(Error::InvalidSettings(
                format!("tolerances must be positive, got rel {rel_tol}, abs {abs_tol}"),
            )),
            _ => Ok(()),
        }
    }
}

impl Default for RkSettings {
    fn default() -> Self {
        Self::adaptive(Self::DEFAULT_REL_TOL, Self::DEFAULT_ABS_TOL)
    }
}

fn push_matrix(out: &mut Vec<f64>, m: &Mat3) {
    for r in 0..3 {
        for c in 0..3 {
            out.push(m[(r, c)]);
        }
    }
}

fn read_matrix(y: &[f64]) -> Mat3 {
    Mat3::from_row_slice(&y[..9])
}

/// Flat layout: `R₀` row-major, `x`, each `Rᵢ` row-major, then `μ`.
fn flatten(state: &SystemState) -> DVector<f64> {
    let p = state.config.num_peripherals();
    let mut out = Vec::with_capacity(12 + 9 * p + 6 + 3 * p);
    push_matrix(&mut out, state.config.r0.matrix());
    out.extend(state.config.x.iter());
    for r in &state.config.peripherals {
        push_matrix(&mut out, r.matrix());
    }
    out.extend(state.momentum.to_vector().iter());
    DVector::from_vec(out)
}

fn unflatten(y: &DVector<f64>, p: usize, time: f64) -> Result<SystemState> {
    let y = y.as_slice();
    let mu = 12 + 9 * p;
    Ok(SystemState {
        config: Configuration {
            r0: Rotation::from_matrix_unchecked(read_matrix(y)),
            x: Vec3::from_column_slice(&y[9..12]),
            peripherals: (0..p)
                .map(|k| Rotation::from_matrix_unchecked(read_matrix(&y[12 + 9 * k..])))
                .collect(),
        },
        momentum: Momentum::from_slice(&y[mu..])?,
        time,
    })
}

fn derivative(params: &SystemParams, y: &DVector<f64>) -> Result<DVector<f64>> {
    let p = params.num_peripherals();
    let state = unflatten(y, p, 0.0)?;
    let d = hamilton_rhs(params, &state)?;
    let mut out = Vec::with_capacity(y.len());
    push_matrix(&mut out, &d.r0dot);
    out.extend(d.xdot.iter());
    for r in &d.rdots {
        push_matrix(&mut out, r);
    }
    out.extend(d.momentum.to_vector().iter());
    Ok(DVector::from_vec(out))
}

fn rk4<F>(f: &F, y: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let k1 = f(y)?;
    let k2 = f(&(y + &k1 * (0.5 * h)))?;
    let k3 = f(&(y + &k2 * (0.5 * h)))?;
    let k4 = f(&(y + &k3 * h))?;
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

// Dormand–Prince 5(4) tableau; the system is autonomous so the nodes are
// not needed.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One Dormand–Prince step: returns the fifth-order solution and the
/// embedded error estimate.
fn dopri<F>(f: &F, y: &DVector<f64>, h: f64) -> Result<(DVector<f64>, DVector<f64>)>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
    for s in 0..7 {
        let mut ys = y.clone();
        for (j, kj) in k.iter().enumerate() {
            if A[s][j] != 0.0 {
                ys.axpy(h * A[s][j], kj, 1.0);
            }
        }
        k.push(f(&ys)?);
    }
    let mut y5 = y.clone();
    let mut err = DVector::zeros(y.len());
    for s in 0..7 {
        y5.axpy(h * B5[s], &k[s], 1.0);
        err.axpy(h * (B5[s] - B4[s]), &k[s], 1.0);
    }
    Ok((y5, err))
}

/// Classical RK4 step of the flattened state, without any projection.
pub fn rk_step(params: &SystemParams, state: &SystemState, h: f64) -> Result<SystemState> {
    params.check_config(&state.config)?;
    params.check_momentum(&state.momentum)?;
    let y = rk4(&|y: &DVector<f64>| derivative(params, y), &flatten(state), h)?;
    unflatten(&y, params.num_peripherals(), state.time + h)
}

/// Streaming Runge–Kutta integrator.
#[derive(Debug, Clone)]
pub struct Rk<'a> {
    params: &'a SystemParams,
    settings: RkSettings,
    y: DVector<f64>,
    t: f64,
    h_next: f64,
    err_prev: f64,
    last_h: f64,
    accepted: usize,
    rejected: usize,
}

impl<'a> Rk<'a> {
    pub fn new(params: &'a SystemParams, initial: &SystemState, settings: RkSettings) -> Result<Self> {
        settings.validate()?;
        params.check_config(&initial.config)?;
        params.check_momentum(&initial.momentum)?;
        let y = flatten(initial);
        let h_next = match settings.mode {
            RkMode::Fixed { h } => h,
            RkMode::Adaptive { rel_tol, abs_tol } => {
                let f0 = derivative(params, &y)?;
                let scale = |i: usize| abs_tol + rel_tol * y[i].abs();
                let d0 = (0..y.len()).map(|i| (y[i] / scale(i)).powi(2)).sum::<f64>().sqrt();
                let d1 = (0..y.len()).map(|i| (f0[i] / scale(i)).powi(2)).sum::<f64>().sqrt();
                if d0 < 1e-5 || d1 < 1e-5 {
                    1e-6
                } else {
                    0.01 * d0 / d1
                }
            }
        };
        Ok(Rk {
            params,
            settings,
            y,
            t: initial.time,
            h_next,
            err_prev: 1e-4,
            last_h: 0.0,
            accepted: 0,
            rejected: 0,
        })
    }

    pub fn state(&self) -> Result<SystemState> {
        unflatten(&self.y, self.params.num_peripherals(), self.t)
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    /// Size of the most recent accepted step.
    pub fn last_step_size(&self) -> f64 {
        self.last_h
    }

    pub fn accepted_steps(&self) -> usize {
        self.accepted
    }

    pub fn rejected_steps(&self) -> usize {
        self.rejected
    }

    fn project(&mut self) {
        if !self.settings.reorthonormalize {
            return;
        }
        let blocks = std::iter::once(0).chain((0..self.params.num_peripherals()).map(|k| 12 + 9 * k));
        for start in blocks.collect::<Vec<_>>() {
            let m = nearest_rotation(&read_matrix(&self.y.as_slice()[start..]));
            for r in 0..3 {
                for c in 0..3 {
                    self.y[start + 3 * r + c] = m[(r, c)];
                }
            }
        }
    }

    /// Takes one accepted step, never stepping past `t_stop`.
    pub fn step(&mut self, t_stop: f64) -> Result<f64> {
        let remaining = t_stop - self.t;
        if !(remaining > 0.0) {
            return Ok(0.0);
        }
        let params = self.params;
        let rhs = move |y: &DVector<f64>| derivative(params, y);
        match self.settings.mode {
            RkMode::Fixed { h } => {
                // absorb a floating-point sliver instead of taking a tiny step
                let h = if remaining <= h * (1.0 + 1e-9) { remaining } else { h };
                self.y = rk4(&rhs, &self.y, h)?;
                self.t = if h == remaining { t_stop } else { self.t + h };
                self.finish_step(h);
                Ok(h)
            }
            RkMode::Adaptive { rel_tol, abs_tol } => loop {
                let clipped = self.h_next >= remaining;
                let h = if clipped { remaining } else { self.h_next };
                if h < 1e-14 * self.t.abs().max(1.0) {
                    return Err(Error::SolveFailure(format!("step size underflow at t = {}", self.t)));
                }
                let (y5, err) = dopri(&rhs, &self.y, h)?;
                let norm = (0..y5.len())
                    .map(|i| {
                        let sc = abs_tol + rel_tol * self.y[i].abs().max(y5[i].abs());
                        (err[i] / sc).powi(2)
                    })
                    .sum::<f64>()
                    / y5.len() as f64;
                let norm = norm.sqrt();
                if !norm.is_finite() {
                    self.h_next = h * 0.2;
                    self.rejected += 1;
                    continue;
                }
                if norm <= 1.0 {
                    let e = norm.max(1e-10);
                    let fac = (0.9 * e.powf(-0.7 / 5.0) * self.err_prev.powf(0.4 / 5.0)).clamp(0.2, 5.0);
                    self.err_prev = e;
                    // a clipped step says nothing about the natural step size
                    if !clipped || h * fac > self.h_next {
                        self.h_next = h * fac;
                    }
                    self.y = y5;
                    self.t = if clipped { t_stop } else { self.t + h };
                    self.finish_step(h);
                    return Ok(h);
                }
                self.h_next = h * (0.9 * norm.powf(-0.2)).max(0.2);
                self.rejected += 1;
            },
        }
    }

    fn finish_step(&mut self, h: f64) {
        self.project();
        self.last_h = h;
        self.accepted += 1;
    }

    /// Steps until the integrator reaches `t` exactly.
    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        while self.t < t {
            self.step(t)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RkTrajectory {
    /// One state per accepted step, starting with the initial one.
    pub states: Vec<SystemState>,
    /// Accepted step sizes; empty for the initial state.
    pub step_sizes: Vec<f64>,
}

pub fn run_rk(params: &SystemParams, initial: SystemState, settings: &RkSettings, t_final: f64) -> Result<RkTrajectory> {
    if !(t_final >= 0.0) {
        return Err(Error::InvalidSettings(format!("duration must be non-negative, got {t_final}")));
    }
    let end = initial.time + t_final;
    let mut rk = Rk::new(params, &initial, *settings)?;
    let mut traj = RkTrajectory {
        states: vec![initial],
        step_sizes: Vec::new(),
    };
    while rk.time() < end {
        let h = rk.step(end)?;
        traj.states.push(rk.state()?);
        traj.step_sizes.push(h);
    }
    Ok(traj)
}
