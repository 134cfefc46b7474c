//! Continuous-time model of a star of ball-jointed ellipsoids in an ideal
//! fluid.
//!
//! Body 0 is the central body; each peripheral body `i ≥ 1` is attached to
//! it by a ball joint located at `d_{0i}` in the frame of body 0 and at
//! `d_{i0}` in the frame of body `i`. The kinetic energy is the quadratic
//! form `T = ½ ξᵀ 𝕀(R₀, R₁, …, R_P) ξ` and there is no potential, so the
//! Lagrangian equals `T`.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::hydro::{nonstandard_inertias, BodyParams, NonstandardInertia};
use crate::liegroup::{coad_continuous, hat, Configuration, Mat3, Momentum, Vec3, Velocity};

#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    pub central: BodyParams,
    pub peripherals: Vec<BodyParams>,
    /// Joint position relative to the centre of body 0, body-0 frame.
    pub d0i: Vec<Vec3>,
    /// Joint position relative to the centre of body `i`, body-`i` frame.
    pub di0: Vec<Vec3>,
    pub nonstandard: NonstandardInertia,
}

impl SystemParams {
    pub fn new(
        central: BodyParams,
        peripherals: Vec<BodyParams>,
        d0i: Vec<Vec3>,
        di0: Vec<Vec3>,
    ) -> Result<Self> {
        check_len(peripherals.len(), d0i.len())?;
        check_len(peripherals.len(), di0.len())?;
        let bad: Vec<String> = d0i
            .iter()
            .enumerate()
            .filter(|(_, d)| !d.iter().all(|x| x.is_finite()))
            .map(|(i, _)| format!("d0i[{i}]: must be finite"))
            .chain(
                di0.iter()
                    .enumerate()
                    .filter(|(_, d)| !d.iter().all(|x| x.is_finite()))
                    .map(|(i, _)| format!("di0[{i}]: must be finite")),
            )
            .collect();
        if !bad.is_empty() {
            return Err(Error::Validation(bad));
        }
        let nonstandard = nonstandard_inertias(&central, &peripherals, &di0)?;
        Ok(SystemParams {
            central,
            peripherals,
            d0i,
            di0,
            nonstandard,
        })
    }

    pub fn num_peripherals(&self) -> usize {
        self.peripherals.len()
    }

    pub fn num_bodies(&self) -> usize {
        self.peripherals.len() + 1
    }

    /// Length of stacked velocity and momentum vectors, `6 + 3P`.
    pub fn dim(&self) -> usize {
        6 + 3 * self.peripherals.len()
    }

    /// Total mass matrix `M_i` of body `i`.
    pub fn mass_matrix(&self, i: usize) -> &Mat3 {
        if i == 0 {
            &self.central.total_mass_matrix
        } else {
            &self.peripherals[i - 1].total_mass_matrix
        }
    }

    /// Total rotational inertia `J_i` of body `i`.
    pub fn inertia(&self, i: usize) -> &Mat3 {
        if i == 0 {
            &self.central.total_inertia
        } else {
            &self.peripherals[i - 1].total_inertia
        }
    }

    pub(crate) fn check_config(&self, config: &Configuration) -> Result<()> {
        check_len(self.num_peripherals(), config.num_peripherals())
    }

    pub(crate) fn check_velocity(&self, xi: &Velocity) -> Result<()> {
        check_len(self.num_peripherals(), xi.num_peripherals())
    }

    pub(crate) fn check_momentum(&self, mu: &Momentum) -> Result<()> {
        check_len(self.num_peripherals(), mu.num_peripherals())
    }
}

/// The configuration-dependent inertia `𝕀` in the `[Ω₀; ẋ; Ω₁; …; Ω_P]`
/// block layout.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockInertia(DMatrix<f64>);

impl BlockInertia {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn apply(&self, xi: &Velocity) -> Result<Momentum> {
        check_len(self.dim(), xi.dim())?;
        Momentum::from_slice((&self.0 * xi.to_vector()).as_slice())
    }

    /// Solves `𝕀 ξ = μ` by Cholesky factorization.
    pub fn solve(&self, mu: &Momentum) -> Result<Velocity> {
        check_len(self.dim(), mu.dim())?;
        let chol = self.0.clone().cholesky().ok_or_else(|| {
            Error::SolveFailure("block inertia is not positive definite".into())
        })?;
        let xi = chol.solve(&mu.to_vector());
        if !xi.iter().all(|v| v.is_finite()) {
            return Err(Error::SolveFailure("non-finite velocity".into()));
        }
        Velocity::from_slice(xi.as_slice())
    }
}

/// A point `(g, μ)` of the Hamiltonian flow.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub config: Configuration,
    pub momentum: Momentum,
    pub time: f64,
}

impl SystemState {
    pub fn from_velocity(
        params: &SystemParams,
        config: Configuration,
        xi: &Velocity,
        time: f64,
    ) -> Result<Self> {
        let momentum = legendre_to_momentum(params, &config, xi)?;
        Ok(SystemState {
            config,
            momentum,
            time,
        })
    }

    pub fn velocity(&self, params: &SystemParams) -> Result<Velocity> {
        legendre_to_velocity(params, &self.config, &self.momentum)
    }
}

/// Velocity of the mass centre of body `i` in its own frame:
/// `V₀ = R₀ᵀẋ`, `Vᵢ = Rᵢᵀẋ − RᵢᵀR₀ d̂_{0i} Ω₀ + d̂_{i0} Ωᵢ`.
pub fn body_velocity(
    params: &SystemParams,
    config: &Configuration,
    xi: &Velocity,
    i: usize,
) -> Result<Vec3> {
    params.check_config(config)?;
    params.check_velocity(xi)?;
    if i > params.num_peripherals() {
        return Err(Error::IndexOutOfRange {
            index: i,
            bodies: params.num_bodies(),
        });
    }
    Ok(body_velocity_unchecked(params, config, xi, i))
}

fn body_velocity_unchecked(params: &SystemParams, config: &Configuration, xi: &Velocity, i: usize) -> Vec3 {
    let r0 = config.r0.matrix();
    if i == 0 {
        return r0.tr_mul(&xi.xdot);
    }
    let k = i - 1;
    let ri = config.peripherals[k].matrix();
    let joint = xi.xdot - r0 * params.d0i[k].cross(&xi.omega0);
    ri.tr_mul(&joint) + params.di0[k].cross(&xi.omegas[k])
}

pub fn assemble_inertia(params: &SystemParams, config: &Configuration) -> Result<BlockInertia> {
    params.check_config(config)?;
    let n = params.dim();
    let mut m = DMatrix::zeros(n, n);
    let r0 = config.r0.matrix();

    let mut i00 = params.central.total_inertia;
    let mut i0x = Mat3::zeros();
    let mut ixx = r0 * params.central.total_mass_matrix * r0.transpose();

    for k in 0..params.num_peripherals() {
        let ri = config.peripherals[k].matrix();
        let mi = &params.peripherals[k].total_mass_matrix;
        let d0 = hat(&params.d0i[k]);
        let di = hat(&params.di0[k]);
        let r0t_ri = r0.tr_mul(ri);
        let world_mass = ri * mi * ri.transpose();

        i00 -= d0 * r0t_ri * mi * r0t_ri.transpose() * d0;
        i0x += d0 * r0.transpose() * world_mass;
        ixx += world_mass;

        let c = 6 + 3 * k;
        m.fixed_view_mut::<3, 3>(0, c).copy_from(&(d0 * r0t_ri * mi * di));
        m.fixed_view_mut::<3, 3>(3, c).copy_from(&(ri * mi * di));
        m.fixed_view_mut::<3, 3>(c, c).copy_from(&params.nonstandard.jprime[k]);
    }
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&i00);
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(&i0x);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&ixx);

    // lower triangle mirrors the upper one so 𝕀 is exactly symmetric
    for c in 0..n {
        for r in (c + 1)..n {
            m[(r, c)] = m[(c, r)];
        }
    }
    Ok(BlockInertia(m))
}

/// `T = ½ ξᵀ 𝕀 ξ`.
pub fn kinetic_energy(params: &SystemParams, config: &Configuration, xi: &Velocity) -> Result<f64> {
    params.check_velocity(xi)?;
    let inertia = assemble_inertia(params, config)?;
    let v = xi.to_vector();
    Ok(0.5 * v.dot(&(inertia.matrix() * &v)))
}

/// `μ = 𝕀 ξ`.
pub fn legendre_to_momentum(
    params: &SystemParams,
    config: &Configuration,
    xi: &Velocity,
) -> Result<Momentum> {
    params.check_velocity(xi)?;
    assemble_inertia(params, config)?.apply(xi)
}

/// `ξ = 𝕀⁻¹ μ`.
pub fn legendre_to_velocity(
    params: &SystemParams,
    config: &Configuration,
    mu: &Momentum,
) -> Result<Velocity> {
    params.check_momentum(mu)?;
    assemble_inertia(params, config)?.solve(mu)
}

/// Time derivatives of `(μ, g)` along the Hamiltonian flow.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDerivative {
    pub momentum: Momentum,
    pub r0dot: Mat3,
    pub xdot: Vec3,
    pub rdots: Vec<Mat3>,
    /// The velocity `ξ = 𝕀⁻¹μ` the derivatives were evaluated at.
    pub velocity: Velocity,
}

pub fn hamilton_rhs(params: &SystemParams, state: &SystemState) -> Result<StateDerivative> {
    let config = &state.config;
    let xi = legendre_to_velocity(params, config, &state.momentum)?;
    let coad = coad_continuous(&xi, &state.momentum)?;
    let r0 = config.r0.matrix();

    let u0 = r0.tr_mul(&xi.xdot);
    let mut p0dot = coad.p0 - u0.cross(&(params.central.total_mass_matrix * u0));
    let mut psdot = Vec::with_capacity(params.num_peripherals());

    for k in 0..params.num_peripherals() {
        let ri = config.peripherals[k].matrix();
        let mi = &params.peripherals[k].total_mass_matrix;
        let vi = body_velocity_unchecked(params, config, &xi, k + 1);
        let mv = mi * vi;
        let w = params.d0i[k].cross(&xi.omega0);
        p0dot -= w.cross(&(r0.tr_mul(&(ri * mv))));
        psdot.push(coad.ps[k] + mv.cross(&ri.tr_mul(&(xi.xdot - r0 * w))));
    }

    Ok(StateDerivative {
        momentum: Momentum {
            p0: p0dot,
            px: Vec3::zeros(),
            ps: psdot,
        },
        r0dot: r0 * hat(&xi.omega0),
        xdot: xi.xdot,
        rdots: config
            .peripherals
            .iter()
            .zip(&xi.omegas)
            .map(|(r, w)| r.matrix() * hat(w))
            .collect(),
        velocity: xi,
    })
}

/// Left-hand side of the Euler–Lagrange equations, `𝕀 ξ̇ + (gyroscopic and
/// coupling terms)`. Vanishes along exact trajectories.
pub fn euler_lagrange_residual(
    params: &SystemParams,
    config: &Configuration,
    xi: &Velocity,
    xidot: &Velocity,
) -> Result<DVector<f64>> {
    params.check_velocity(xidot)?;
    let inertia = assemble_inertia(params, config)?;
    params.check_velocity(xi)?;
    let mut out = inertia.matrix() * xidot.to_vector();

    let r0 = config.r0.matrix();
    let w0 = xi.omega0;
    let m0 = &params.central.total_mass_matrix;
    let j0 = &params.central.total_inertia;
    let u0 = r0.tr_mul(&xi.xdot);
    let w0_hat = hat(&w0);

    let mut row0 = w0.cross(&(j0 * w0)) + u0.cross(&(m0 * u0));
    let mut rowx = r0 * (w0_hat * m0 - m0 * w0_hat) * u0;

    for k in 0..params.num_peripherals() {
        let ri = config.peripherals[k].matrix();
        let mi = &params.peripherals[k].total_mass_matrix;
        let ji = &params.peripherals[k].total_inertia;
        let wi = xi.omegas[k];
        let wi_hat = hat(&wi);
        let d0 = hat(&params.d0i[k]);
        let di = hat(&params.di0[k]);
        let r0t_ri = r0.tr_mul(ri);

        let transport = ri.tr_mul(&xi.xdot) - r0t_ri.transpose() * d0 * w0;
        let w = (wi_hat * mi - mi * wi_hat) * transport - mi * r0t_ri.transpose() * w0_hat * d0 * w0
            + wi_hat * mi * di * wi;
        let vi = body_velocity_unchecked(params, config, xi, k + 1);

        row0 += d0 * r0t_ri * w;
        rowx += ri * w;
        let rowi = wi.cross(&(ji * wi)) + vi.cross(&(mi * vi)) - di * w;
        let mut seg = out.fixed_rows_mut::<3>(6 + 3 * k);
        seg += rowi;
    }
    let mut seg = out.fixed_rows_mut::<3>(0);
    seg += row0;
    let mut seg = out.fixed_rows_mut::<3>(3);
    seg += rowx;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservedQuantities {
    pub energy: f64,
    /// Total linear momentum.
    pub px: Vec3,
    /// Total angular momentum about the inertial origin, `x̂ p_x + Σ Rᵢ pᵢ`.
    pub p_omega: Vec3,
}

pub fn conserved_quantities(params: &SystemParams, state: &SystemState) -> Result<ConservedQuantities> {
    let xi = state.velocity(params)?;
    let mu = &state.momentum;
    let energy = 0.5 * mu.to_vector().dot(&xi.to_vector());
    Ok(ConservedQuantities {
        energy,
        px: mu.px,
        p_omega: angular_momentum(&state.config, mu),
    })
}

pub fn angular_momentum(config: &Configuration, mu: &Momentum) -> Vec3 {
    let mut total = config.x.cross(&mu.px) + config.r0.matrix() * mu.p0;
    for (r, p) in config.peripherals.iter().zip(&mu.ps) {
        total += r.matrix() * p;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hydro::{build_body_params, EllipsoidGeometry};
    use crate::liegroup::{exp_so3, Rotation};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn body(a: f64, b: f64, c: f64, m: f64) -> BodyParams {
        build_body_params(&EllipsoidGeometry::new(a, b, c).unwrap(), m).unwrap()
    }

    fn three_body() -> SystemParams {
        let p = body(5.0, 0.8, 1.5, 0.25);
        SystemParams::new(
            body(8.0, 1.5, 2.0, 1.0),
            vec![p.clone(), p],
            vec![Vec3::new(8.8, 0.0, 0.0), Vec3::new(-8.8, 0.0, 0.0)],
            vec![Vec3::new(-5.5, 0.0, 0.0), Vec3::new(5.5, 0.0, 0.0)],
        )
        .unwrap()
    }

    fn rand_vec(rng: &mut ChaCha8Rng, s: f64) -> Vec3 {
        Vec3::new(rng.gen_range(-s..s), rng.gen_range(-s..s), rng.gen_range(-s..s))
    }

    fn rand_config(rng: &mut ChaCha8Rng, p: usize) -> Configuration {
        Configuration {
            r0: exp_so3(&rand_vec(rng, 3.0)),
            x: rand_vec(rng, 10.0),
            peripherals: (0..p).map(|_| exp_so3(&rand_vec(rng, 3.0))).collect(),
        }
    }

    fn rand_velocity(rng: &mut ChaCha8Rng, p: usize) -> Velocity {
        Velocity {
            omega0: rand_vec(rng, 1.0),
            xdot: rand_vec(rng, 1.0),
            omegas: (0..p).map(|_| rand_vec(rng, 1.0)).collect(),
        }
    }

    /// Kinetic energy summed body by body, with each centre velocity taken
    /// from the time derivative of `x + R₀d_{0i} − Rᵢd_{i0}`.
    fn bodywise_energy(params: &SystemParams, g: &Configuration, xi: &Velocity) -> f64 {
        let r0 = g.r0.matrix();
        let v0 = r0.transpose() * xi.xdot;
        let mut t = 0.5 * v0.dot(&(params.mass_matrix(0) * v0)) + 0.5 * xi.omega0.dot(&(params.inertia(0) * xi.omega0));
        for k in 0..params.num_peripherals() {
            let ri = g.peripherals[k].matrix();
            let cdot = xi.xdot + r0 * hat(&xi.omega0) * params.d0i[k] - ri * hat(&xi.omegas[k]) * params.di0[k];
            let vi = ri.transpose() * cdot;
            t += 0.5 * vi.dot(&(params.mass_matrix(k + 1) * vi))
                + 0.5 * xi.omegas[k].dot(&(params.inertia(k + 1) * xi.omegas[k]));
        }
        t
    }

    #[test]
    fn body_velocity_examples() {
        let params = three_body();
        let g = Configuration::identity(2);
        for i in 0..3 {
            assert_eq!(body_velocity(&params, &g, &Velocity::zeros(2), i).unwrap(), Vec3::zeros());
        }
        let mut xi = Velocity::zeros(2);
        xi.xdot = Vec3::x();
        for i in 0..3 {
            assert_eq!(body_velocity(&params, &g, &xi, i).unwrap(), Vec3::x());
        }
        let mut xi = Velocity::zeros(2);
        xi.omega0 = Vec3::z();
        assert_relative_eq!(body_velocity(&params, &g, &xi, 1).unwrap(), Vec3::new(0.0, 8.8, 0.0));
        assert!(matches!(
            body_velocity(&params, &g, &xi, 3),
            Err(Error::IndexOutOfRange { index: 3, bodies: 3 })
        ));
    }

    #[test]
    fn single_body_inertia_is_block_diagonal() {
        let params = SystemParams::new(body(3.0, 2.0, 1.0, 2.0), vec![], vec![], vec![]).unwrap();
        let g = Configuration {
            r0: exp_so3(&Vec3::new(0.3, -0.4, 1.2)),
            x: Vec3::new(1.0, 2.0, 3.0),
            peripherals: vec![],
        };
        let m = assemble_inertia(&params, &g).unwrap();
        let r0 = g.r0.matrix();
        assert_eq!(m.matrix().fixed_view::<3, 3>(0, 0).into_owned(), params.central.total_inertia);
        assert_eq!(m.matrix().fixed_view::<3, 3>(0, 3).into_owned(), Mat3::zeros());
        assert_relative_eq!(
            m.matrix().fixed_view::<3, 3>(3, 3).into_owned(),
            r0 * params.central.total_mass_matrix * r0.transpose(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn identity_configuration_diagonal_block_is_jprime() {
        let params = three_body();
        let m = assemble_inertia(&params, &Configuration::identity(2)).unwrap();
        assert_eq!(m.matrix().fixed_view::<3, 3>(6, 6).into_owned(), params.nonstandard.jprime[0]);
        assert_eq!(m.matrix().fixed_view::<3, 3>(6, 9).into_owned(), Mat3::zeros());
    }

    #[test]
    fn quadratic_form_matches_bodywise_energy() {
        let params = three_body();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let g = rand_config(&mut rng, 2);
            let xi = rand_velocity(&mut rng, 2);
            let t = kinetic_energy(&params, &g, &xi).unwrap();
            let oracle = bodywise_energy(&params, &g, &xi);
            assert!((t - oracle).abs() <= 1e-12 * oracle.abs(), "{t} vs {oracle}");
            let m = assemble_inertia(&params, &g).unwrap();
            assert!((m.matrix() - m.matrix().transpose()).norm() <= 1e-12 * m.matrix().norm());
            assert!(m.matrix().clone().symmetric_eigenvalues().min() > 0.0);
        }
    }

    #[test]
    fn kinetic_energy_examples() {
        let params = three_body();
        let g = Configuration::identity(2);
        assert_eq!(kinetic_energy(&params, &g, &Velocity::zeros(2)).unwrap(), 0.0);

        let sphere = SystemParams::new(body(1.0, 1.0, 1.0, 2.0), vec![], vec![], vec![]).unwrap();
        let mut xi = Velocity::zeros(0);
        xi.xdot = Vec3::x();
        let t = kinetic_energy(&sphere, &Configuration::identity(0), &xi).unwrap();
        assert_relative_eq!(t, 1.5, epsilon = 1e-10);
    }

    #[test]
    fn kinetic_energy_is_frame_invariant() {
        let params = three_body();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let g = rand_config(&mut rng, 2);
            let xi = rand_velocity(&mut rng, 2);
            let q = exp_so3(&rand_vec(&mut rng, 3.0));
            let moved = Configuration {
                r0: &q * &g.r0,
                x: q.matrix() * g.x,
                peripherals: g.peripherals.iter().map(|r| &q * r).collect(),
            };
            let mut xi_moved = xi.clone();
            xi_moved.xdot = q.matrix() * xi.xdot;
            let a = kinetic_energy(&params, &g, &xi).unwrap();
            let b = kinetic_energy(&params, &moved, &xi_moved).unwrap();
            assert!((a - b).abs() <= 1e-11 * a);
        }
    }

    #[test]
    fn legendre_roundtrip() {
        let params = three_body();
        let g = Configuration::identity(2);
        assert_eq!(legendre_to_momentum(&params, &g, &Velocity::zeros(2)).unwrap(), Momentum::zeros(2));

        let single = SystemParams::new(body(3.0, 2.0, 1.0, 1.0), vec![], vec![], vec![]).unwrap();
        let mut xi = Velocity::zeros(0);
        xi.xdot = Vec3::new(0.3, -1.0, 2.0);
        let mu = legendre_to_momentum(&single, &Configuration::identity(0), &xi).unwrap();
        assert_eq!(mu.px, single.central.total_mass_matrix * xi.xdot);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let g = rand_config(&mut rng, 2);
            let xi = rand_velocity(&mut rng, 2);
            let mu = legendre_to_momentum(&params, &g, &xi).unwrap();
            let back = legendre_to_velocity(&params, &g, &mu).unwrap();
            assert!((back.to_vector() - xi.to_vector()).norm() <= 1e-12 * xi.to_vector().norm());
        }
    }

    #[test]
    fn legendre_reports_dimension_errors() {
        let params = three_body();
        let g = Configuration::identity(2);
        assert!(matches!(
            legendre_to_velocity(&params, &g, &Momentum::zeros(1)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(assemble_inertia(&params, &Configuration::identity(3)).is_err());
    }

    #[test]
    fn singular_inertia_is_a_solve_failure() {
        let m = BlockInertia(DMatrix::zeros(6, 6));
        assert!(matches!(m.solve(&Momentum::zeros(0)), Err(Error::SolveFailure(_))));
    }

    #[test]
    fn rhs_at_rest_is_zero() {
        let params = three_body();
        let state = SystemState {
            config: Configuration::identity(2),
            momentum: Momentum::zeros(2),
            time: 0.0,
        };
        let d = hamilton_rhs(&params, &state).unwrap();
        assert_eq!(d.momentum, Momentum::zeros(2));
        assert_eq!(d.r0dot, Mat3::zeros());
        assert_eq!(d.xdot, Vec3::zeros());
    }

    #[test]
    fn principal_axis_spin_is_steady() {
        let params = SystemParams::new(body(3.0, 2.0, 1.0, 1.0), vec![], vec![], vec![]).unwrap();
        let mut xi = Velocity::zeros(0);
        xi.omega0 = Vec3::new(0.0, 0.0, 0.7);
        let state = SystemState::from_velocity(&params, Configuration::identity(0), &xi, 0.0).unwrap();
        let d = hamilton_rhs(&params, &state).unwrap();
        assert!(d.momentum.p0.norm() < 1e-15);
        assert_eq!(d.momentum.px, Vec3::zeros());
    }

    /// Finite-difference directional derivative of the energy and angular
    /// momentum along the Hamiltonian vector field.
    #[test]
    fn rhs_conserves_energy_and_angular_momentum() {
        let params = three_body();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let g = rand_config(&mut rng, 2);
            let xi = rand_velocity(&mut rng, 2);
            let state = SystemState::from_velocity(&params, g, &xi, 0.0).unwrap();
            let d = hamilton_rhs(&params, &state).unwrap();
            let shifted = |s: f64| SystemState {
                config: Configuration {
                    r0: Rotation::from_matrix_unchecked(state.config.r0.matrix() + d.r0dot * s),
                    x: state.config.x + d.xdot * s,
                    peripherals: state
                        .config
                        .peripherals
                        .iter()
                        .zip(&d.rdots)
                        .map(|(r, rd)| Rotation::from_matrix_unchecked(r.matrix() + rd * s))
                        .collect(),
                },
                momentum: Momentum::from_slice(
                    (state.momentum.to_vector() + d.momentum.to_vector() * s).as_slice(),
                )
                .unwrap(),
                time: s,
            };
            let delta = 1e-5;
            let plus = conserved_quantities(&params, &shifted(delta)).unwrap();
            let minus = conserved_quantities(&params, &shifted(-delta)).unwrap();
            let c = conserved_quantities(&params, &state).unwrap();
            let rate = xi.to_vector().norm();
            let de = (plus.energy - minus.energy) / (2.0 * delta);
            let dl = (plus.p_omega - minus.p_omega) / (2.0 * delta);
            assert!(de.abs() <= 1e-6 * c.energy * rate, "dE/dt = {de}");
            assert!(dl.norm() <= 1e-6 * (c.p_omega.norm() + c.px.norm()) * rate, "dL/dt = {dl}");
            assert_eq!(d.momentum.px, Vec3::zeros());
        }
    }

    #[test]
    fn conserved_quantities_examples() {
        let params = three_body();
        let state = SystemState {
            config: Configuration::identity(2),
            momentum: Momentum::zeros(2),
            time: 0.0,
        };
        let c = conserved_quantities(&params, &state).unwrap();
        assert_eq!(c.energy, 0.0);
        assert_eq!(c.px, Vec3::zeros());
        assert_eq!(c.p_omega, Vec3::zeros());

        // whole assembly spinning rigidly about e3: every Ωᵢ = ω e3 and the
        // joints move consistently with ẋ = 0 for the straight chain
        let mut xi = Velocity::zeros(2);
        xi.omega0 = Vec3::z() * 0.4;
        xi.omegas = vec![Vec3::z() * 0.4; 2];
        let state = SystemState::from_velocity(&params, Configuration::identity(2), &xi, 0.0).unwrap();
        let c = conserved_quantities(&params, &state).unwrap();
        assert!(c.p_omega.x.abs() < 1e-14 && c.p_omega.y.abs() < 1e-14);
        assert!(c.p_omega.z > 0.0);
    }

    #[test]
    fn el_residual_at_rest_is_zero() {
        let params = three_body();
        let r = euler_lagrange_residual(
            &params,
            &Configuration::identity(2),
            &Velocity::zeros(2),
            &Velocity::zeros(2),
        )
        .unwrap();
        assert_eq!(r.norm(), 0.0);
    }

    /// The residual at the acceleration implied by Hamilton's equations must
    /// vanish: ξ̇ is obtained by differentiating ξ = 𝕀⁻¹μ along the flow with
    /// central differences.
    #[test]
    fn el_residual_vanishes_on_hamiltonian_flow() {
        let params = three_body();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..10 {
            let g = rand_config(&mut rng, 2);
            let xi = rand_velocity(&mut rng, 2);
            let state = SystemState::from_velocity(&params, g.clone(), &xi, 0.0).unwrap();
            let d = hamilton_rhs(&params, &state).unwrap();
            let velocity_at = |s: f64| {
                let cfg = Configuration {
                    r0: &g.r0 * &exp_so3(&(d.velocity.omega0 * s)),
                    x: g.x + d.xdot * s,
                    peripherals: g
                        .peripherals
                        .iter()
                        .zip(&d.velocity.omegas)
                        .map(|(r, w)| r * &exp_so3(&(w * s)))
                        .collect(),
                };
                let mu = Momentum::from_slice((state.momentum.to_vector() + d.momentum.to_vector() * s).as_slice())
                    .unwrap();
                legendre_to_velocity(&params, &cfg, &mu).unwrap().to_vector()
            };
            let delta = 1e-5;
            let xidot = (velocity_at(delta) - velocity_at(-delta)) / (2.0 * delta);
            let xidot = Velocity::from_slice(xidot.as_slice()).unwrap();
            let r = euler_lagrange_residual(&params, &g, &xi, &xidot).unwrap();
            let scale = assemble_inertia(&params, &g).unwrap().matrix() * xidot.to_vector();
            assert!(r.norm() <= 1e-7 * scale.norm().max(1.0), "residual {}", r.norm());
        }
    }
}
