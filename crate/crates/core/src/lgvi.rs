//! Lie group variational integrator.
//!
//! A step `f_k = (F₀, Δx, F₁, …, F_P)` maps `g_k` to `g_{k+1} = g_k f_k`.
//! Given `(g_k, μ_k)` the step is found by solving the implicit discrete
//! Legendre relation `μ_k = μ⁻(g_k, f_k)` with Newton's method, after which
//! `μ_{k+1} = μ⁺(g_k, f_k)` is explicit.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::liegroup::{exp_so3, skew_vee, Configuration, DiscreteStep, Mat3, Momentum, Vec3};
use crate::model::{legendre_to_velocity, SystemParams, SystemState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub h: f64,
    /// Absolute tolerance on the Euclidean norm of the h-scaled residual.
    pub newton_tol: f64,
    pub max_iters: usize,
}

impl SolverSettings {
    pub const DEFAULT_TOL: f64 = 1e-13;
    pub const DEFAULT_MAX_ITERS: usize = 50;

    pub fn new(h: f64) -> Result<Self> {
        Self::with_tolerance(h, Self::DEFAULT_TOL, Self::DEFAULT_MAX_ITERS)
    }

    pub fn with_tolerance(h: f64, newton_tol: f64, max_iters: usize) -> Result<Self> {
        let s = SolverSettings {
            h,
            newton_tol,
            max_iters,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::InvalidSettings(format!("step size must be positive, got {}", self.h)));
        }
        if !(self.newton_tol > 0.0 && self.newton_tol.is_finite()) {
            return Err(Error::InvalidSettings(format!(
                "Newton tolerance must be positive, got {}",
                self.newton_tol
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidSettings("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

fn check_step(params: &SystemParams, config: &Configuration, step: &DiscreteStep) -> Result<()> {
    check_len(params.num_peripherals(), config.num_peripherals())?;
    check_len(params.num_peripherals(), step.num_peripherals())
}

/// Joint coupling vectors `(A_i, B_i)`:
/// `B_i = Δx + R₀(F₀ − I)d_{0i}`, `A_i = RᵢMᵢ(RᵢᵀBᵢ − (Fᵢ − I)d_{i0})`.
pub fn coupling_terms(
    params: &SystemParams,
    config: &Configuration,
    step: &DiscreteStep,
) -> Result<(Vec<Vec3>, Vec<Vec3>)> {
    check_step(params, config, step)?;
    Ok(coupling_unchecked(params, config, step))
}

fn coupling_unchecked(params: &SystemParams, config: &Configuration, step: &DiscreteStep) -> (Vec<Vec3>, Vec<Vec3>) {
    let r0 = config.r0.matrix();
    let f0 = step.f0.matrix() - Mat3::identity();
    let mut a = Vec::with_capacity(params.num_peripherals());
    let mut b = Vec::with_capacity(params.num_peripherals());
    for k in 0..params.num_peripherals() {
        let ri = config.peripherals[k].matrix();
        let fi = step.fis[k].matrix() - Mat3::identity();
        let bi = step.dx + r0 * (f0 * params.d0i[k]);
        let ai = ri * (params.mass_matrix(k + 1) * (ri.tr_mul(&bi) - fi * params.di0[k]));
        a.push(ai);
        b.push(bi);
    }
    (a, b)
}

/// The discrete Lagrangian `L_d(g_k, f_k)`, an approximation of the action
/// over one step of length `h`.
pub fn discrete_lagrangian(params: &SystemParams, config: &Configuration, step: &DiscreteStep, h: f64) -> Result<f64> {
    check_step(params, config, step)?;
    let r0 = config.r0.matrix();
    let dx = &step.dx;
    let f0 = step.f0.matrix() - Mat3::identity();
    let m0 = params.mass_matrix(0);
    let ns = &params.nonstandard;

    let mut l = dx.dot(&(r0 * m0 * r0.tr_mul(dx))) / (2.0 * h) - (f0 * ns.jd0).trace() / h;
    for k in 0..params.num_peripherals() {
        let ri = config.peripherals[k].matrix();
        let mi = params.mass_matrix(k + 1);
        let fi = step.fis[k].matrix() - Mat3::identity();
        let world = ri * mi * ri.transpose();
        let lever = r0 * (f0 * params.d0i[k]);
        let swing = ri * (mi * (fi * params.di0[k]));
        l += dx.dot(&(world * dx)) / (2.0 * h) - (fi * ns.jdi[k]).trace() / h
            + lever.dot(&(world * lever)) / (2.0 * h)
            + dx.dot(&(world * lever)) / h
            - dx.dot(&swing) / h
            - lever.dot(&swing) / h;
    }
    Ok(l)
}

/// `h μ⁻(g, f)`, the momentum at the start of the step times `h`.
fn start_momentum_scaled(params: &SystemParams, config: &Configuration, step: &DiscreteStep) -> Momentum {
    let (a, b) = coupling_unchecked(params, config, step);
    let r0 = config.r0.matrix();
    let m0 = params.mass_matrix(0);
    let ns = &params.nonstandard;
    let u = r0.tr_mul(&step.dx);

    let mut p0 = skew_vee(&(step.f0.matrix() * ns.jd0)) - (m0 * u).cross(&u);
    let mut px = r0 * (m0 * u);
    let mut ps = Vec::with_capacity(params.num_peripherals());
    for k in 0..params.num_peripherals() {
        let ri = config.peripherals[k].matrix();
        let fi = step.fis[k].matrix();
        let mi = params.mass_matrix(k + 1);
        p0 += params.d0i[k].cross(&r0.tr_mul(&a[k]));
        px += a[k];
        ps.push(
            skew_vee(&(fi * ns.jdi[k])) - (fi * params.di0[k]).cross(&(mi * ri.tr_mul(&b[k])))
                - ri.tr_mul(&a[k].cross(&b[k])),
        );
    }
    Momentum { p0, px, ps }
}

/// `h μ⁺(g, f)`, the momentum at the end of the step times `h`.
fn end_momentum_scaled(params: &SystemParams, config: &Configuration, step: &DiscreteStep) -> Momentum {
    let (a, b) = coupling_unchecked(params, config, step);
    let r0 = config.r0.matrix();
    let r0_next = r0 * step.f0.matrix();
    let ns = &params.nonstandard;

    let mut p0 = skew_vee(&(ns.jd0 * step.f0.matrix()));
    let mut px = r0 * (params.mass_matrix(0) * r0.tr_mul(&step.dx));
    let mut ps = Vec::with_capacity(params.num_peripherals());
    for k in 0..params.num_peripherals() {
        let ri = config.peripherals[k].matrix();
        let fi = step.fis[k].matrix();
        p0 += params.d0i[k].cross(&r0_next.tr_mul(&a[k]));
        px += a[k];
        ps.push(
            skew_vee(&(ns.jdi[k] * fi))
                - params.di0[k].cross(&fi.tr_mul(&(params.mass_matrix(k + 1) * ri.tr_mul(&b[k])))),
        );
    }
    Momentum { p0, px, ps }
}

fn unscale(m: Momentum, h: f64) -> Momentum {
    Momentum {
        p0: m.p0 / h,
        px: m.px / h,
        ps: m.ps.into_iter().map(|p| p / h).collect(),
    }
}

/// Discrete Legendre transforms `(μ_k, μ_{k+1})` generated by the step
/// `f_k` taken from `g_k`.
pub fn discrete_momenta(
    params: &SystemParams,
    config: &Configuration,
    step: &DiscreteStep,
    h: f64,
) -> Result<(Momentum, Momentum)> {
    check_step(params, config, step)?;
    Ok((
        unscale(start_momentum_scaled(params, config, step), h),
        unscale(end_momentum_scaled(params, config, step), h),
    ))
}

/// Solves `h μ⁻(g, exp(z)) = target` for `z = [φ₀; Δx; φᵢ]`.
fn newton_solve(
    params: &SystemParams,
    config: &Configuration,
    target: &DVector<f64>,
    mut z: DVector<f64>,
    settings: &SolverSettings,
) -> Result<(DiscreteStep, usize, f64)> {
    let residual = |z: &DVector<f64>| -> Result<(DiscreteStep, DVector<f64>)> {
        let step = DiscreteStep::from_exponential(z.as_slice())?;
        let r = start_momentum_scaled(params, config, &step).to_vector() - target;
        Ok((step, r))
    };
    let n = z.len();
    let (mut step, mut r) = residual(&z)?;
    let mut norm = r.norm();
    let mut iterations = 0;
    while !(norm <= settings.newton_tol) {
        if iterations >= settings.max_iters || !norm.is_finite() {
            return Err(Error::NewtonDivergence {
                step: None,
                iterations,
                residual: norm,
            });
        }
        let mut jac = DMatrix::zeros(n, n);
        for j in 0..n {
            let block = z.fixed_rows::<3>(j - j % 3).norm();
            let eps = 1e-7 * block.max(1.0);
            let mut zp = z.clone();
            zp[j] += eps;
            let (_, rp) = residual(&zp)?;
            jac.set_column(j, &((rp - &r) / eps));
        }
        let dz = jac.lu().solve(&(-&r)).ok_or(Error::NewtonDivergence {
            step: None,
            iterations,
            residual: norm,
        })?;
        z += dz;
        (step, r) = residual(&z)?;
        norm = r.norm();
        iterations += 1;
    }
    Ok((step, iterations, norm))
}

fn step_to_exponential(step: &DiscreteStep) -> DVector<f64> {
    let mut z = DVector::zeros(6 + 3 * step.num_peripherals());
    z.fixed_rows_mut::<3>(0).copy_from(&log_so3(step.f0.matrix()));
    z.fixed_rows_mut::<3>(3).copy_from(&step.dx);
    for (k, f) in step.fis.iter().enumerate() {
        z.fixed_rows_mut::<3>(6 + 3 * k).copy_from(&log_so3(f.matrix()));
    }
    z
}

/// Rotation vector of a rotation with angle below π.
fn log_so3(r: &Mat3) -> Vec3 {
    let axis = skew_vee(r) * 0.5;
    let s = axis.norm();
    let c = 0.5 * (r.trace() - 1.0);
    if s < 1e-12 {
        return axis;
    }
    axis * (s.atan2(c) / s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub step: DiscreteStep,
    pub state: SystemState,
    pub iterations: usize,
    pub residual: f64,
}

/// One step of the discrete Hamiltonian flow `(g_k, μ_k) ↦ (g_{k+1}, μ_{k+1})`.
pub fn implicit_step(params: &SystemParams, state: &SystemState, settings: &SolverSettings) -> Result<StepOutcome> {
    settings.validate()?;
    params.check_config(&state.config)?;
    params.check_momentum(&state.momentum)?;
    let h = settings.h;

    let xi = legendre_to_velocity(params, &state.config, &state.momentum)?;
    // z = [φ₀; Δx; φᵢ] shares the layout of ξ, so hξ is the predictor
    let guess = xi.to_vector() * h;
    let target = state.momentum.to_vector() * h;
    let (step, iterations, residual) = newton_solve(params, &state.config, &target, guess, settings)?;

    let end = unscale(end_momentum_scaled(params, &state.config, &step), h);
    let momentum = Momentum {
        p0: end.p0,
        px: state.momentum.px,
        ps: end.ps,
    };
    let config = state.config.compose(&step)?;
    Ok(StepOutcome {
        step,
        state: SystemState {
            config,
            momentum,
            time: state.time + h,
        },
        iterations,
        residual,
    })
}

/// The Lagrangian form: given `(g_k, f_k)`, solves the discrete
/// Euler–Lagrange equations `μ⁺(g_k, f_k) = μ⁻(g_{k+1}, f_{k+1})` for
/// `f_{k+1}`.
pub fn lagrangian_two_step(
    params: &SystemParams,
    config: &Configuration,
    step: &DiscreteStep,
    settings: &SolverSettings,
) -> Result<DiscreteStep> {
    settings.validate()?;
    check_step(params, config, step)?;
    let next = config.compose(step)?;
    let target = end_momentum_scaled(params, config, step).to_vector();
    let guess = step_to_exponential(step);
    newton_solve(params, &next, &target, guess, settings).map(|(s, _, _)| s)
}

/// Streaming form of the integrator; one call to [`Lgvi::advance`] per step.
#[derive(Debug, Clone)]
pub struct Lgvi<'a> {
    params: &'a SystemParams,
    settings: SolverSettings,
    state: SystemState,
    steps: usize,
}

impl<'a> Lgvi<'a> {
    pub fn new(params: &'a SystemParams, initial: SystemState, settings: SolverSettings) -> Result<Self> {
        settings.validate()?;
        params.check_config(&initial.config)?;
        params.check_momentum(&initial.momentum)?;
        Ok(Lgvi {
            params,
            settings,
            state: initial,
            steps: 0,
        })
    }

    pub fn state(&self) -> &SystemState {
        &self.state
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn advance(&mut self) -> Result<StepOutcome> {
        let out = implicit_step(self.params, &self.state, &self.settings).map_err(|e| e.with_step(self.steps))?;
        self.state = out.state.clone();
        self.steps += 1;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LgviTrajectory {
    /// `n_steps + 1` states, starting with the initial one.
    pub states: Vec<SystemState>,
    pub steps: Vec<DiscreteStep>,
    pub iterations: Vec<usize>,
}

pub fn run_lgvi(
    params: &SystemParams,
    initial: SystemState,
    settings: &SolverSettings,
    n_steps: usize,
) -> Result<LgviTrajectory> {
    let mut lgvi = Lgvi::new(params, initial.clone(), *settings)?;
    let mut traj = LgviTrajectory {
        states: Vec::with_capacity(n_steps + 1),
        steps: Vec::with_capacity(n_steps),
        iterations: Vec::with_capacity(n_steps),
    };
    traj.states.push(initial);
    for _ in 0..n_steps {
        let out = lgvi.advance()?;
        traj.states.push(out.state);
        traj.steps.push(out.step);
        traj.iterations.push(out.iterations);
    }
    Ok(traj)
}

/// Step generated by the exponential of `h ξ`, used as a smooth test curve.
pub fn step_from_velocity(xi: &crate::liegroup::Velocity, h: f64) -> DiscreteStep {
    DiscreteStep {
        f0: exp_so3(&(xi.omega0 * h)),
        dx: xi.xdot * h,
        fis: xi.omegas.iter().map(|w| exp_so3(&(w * h))).collect(),
    }
}
