//! Rotation-group and product-group primitives.
//!
//! The configuration space of a star of `P` ball-jointed bodies is
//! `SO(3) × R³ × SO(3)^P`: the central body's attitude and position plus one
//! attitude per peripheral body. Algebra and co-algebra elements are stacked
//! as `[Ω₀; ẋ; Ω₁; …; Ω_P]` and `[p₀; p_x; p₁; …; p_P]`.

use nalgebra::{DVector, Matrix3, Vector3};

use crate::error::{check_len, Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Construction tolerance for [`Rotation::new`] on `‖RᵀR − I‖_F`.
pub const ROTATION_TOLERANCE: f64 = 1e-10;

/// Tolerance on `‖m + mᵀ‖_F` accepted by [`vee`].
pub const SKEW_TOLERANCE: f64 = 1e-8;

const SMALL_ANGLE: f64 = 1e-6;

/// Skew-symmetric matrix with `hat(v) * w == v × w`.
#[inline]
pub fn hat(v: &Vec3) -> Mat3 {
    #[rustfmt::skip]
    let m = Mat3::new(
        0.0, -v.z, v.y,
        v.z, 0.0, -v.x,
        -v.y, v.x, 0.0,
    );
    m
}

/// Inverse of [`hat`]. Only the skew part of `m` is used.
pub fn vee(m: &Mat3) -> Result<Vec3> {
    let asymmetry = (m + m.transpose()).norm();
    if !(asymmetry <= SKEW_TOLERANCE) {
        return Err(Error::NotSkew { asymmetry });
    }
    Ok(0.5 * skew_vee(m))
}

/// `(m − mᵀ)^∨`, i.e. twice the axial vector of the skew part of `m`.
///
/// Expressions such as `(F J − J Fᵀ)^∨` are exactly of this form with
/// `m = F J`, so they never need the tolerance check in [`vee`].
#[inline]
pub fn skew_vee(m: &Mat3) -> Vec3 {
    Vec3::new(
        m[(2, 1)] - m[(1, 2)],
        m[(0, 2)] - m[(2, 0)],
        m[(1, 0)] - m[(0, 1)],
    )
}

/// Frobenius norm of `I − RᵀR`.
pub fn orthogonality_error(r: &Mat3) -> f64 {
    (Mat3::identity() - r.transpose() * r).norm()
}

/// Rodrigues formula, with Taylor coefficients below `1e-6` rad.
pub fn exp_so3(v: &Vec3) -> Rotation {
    Rotation(exp_matrix(v))
}

fn exp_matrix(v: &Vec3) -> Mat3 {
    let theta2 = v.norm_squared();
    let theta = theta2.sqrt();
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    let k = hat(v);
    Mat3::identity() + a * k + b * (k * k)
}

/// Nearest rotation in the Frobenius sense (orthogonal polar factor).
pub fn nearest_rotation(m: &Mat3) -> Mat3 {
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}

/// An element of SO(3).
///
/// [`Rotation::new`] enforces `‖RᵀR − I‖_F ≤ 1e-10` and `det R > 0`. Products
/// of rotations stay rotations and are not re-checked; integrators that do not
/// respect the group (the Runge–Kutta baseline) construct values through
/// [`Rotation::from_matrix_unchecked`] and report the drift separately.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Mat3);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    pub fn new(m: Mat3) -> Result<Self> {
        let orthogonality = orthogonality_error(&m);
        let determinant = m.determinant();
        if orthogonality <= ROTATION_TOLERANCE && determinant > 0.0 && m.iter().all(|x| x.is_finite())
        {
            Ok(Rotation(m))
        } else {
            Err(Error::InvalidRotation {
                orthogonality,
                determinant,
            })
        }
    }

    pub fn from_matrix_unchecked(m: Mat3) -> Self {
        Rotation(m)
    }

    /// Rotation by `|v|` radians about `v / |v|`.
    pub fn from_axis_angle(v: &Vec3) -> Self {
        exp_so3(v)
    }

    #[inline]
    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    #[inline]
    pub fn transpose(&self) -> Mat3 {
        self.0.transpose()
    }

    pub fn inverse(&self) -> Self {
        Rotation(self.0.transpose())
    }

    pub fn orthogonality_error(&self) -> f64 {
        orthogonality_error(&self.0)
    }

    pub fn reorthonormalized(&self) -> Self {
        Rotation(nearest_rotation(&self.0))
    }
}

impl std::ops::Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl std::ops::Mul<&Rotation> for &Rotation {
    type Output = Rotation;
    fn mul(self, rhs: &Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

/// Group element `g = (R₀, x, R₁, …, R_P)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    pub r0: Rotation,
    pub x: Vec3,
    pub peripherals: Vec<Rotation>,
}

impl Configuration {
    pub fn identity(p: usize) -> Self {
        Configuration {
            r0: Rotation::identity(),
            x: Vec3::zeros(),
            peripherals: vec![Rotation::identity(); p],
        }
    }

    pub fn num_peripherals(&self) -> usize {
        self.peripherals.len()
    }

    /// Attitude of body `i` (0 is the central body).
    pub fn rotation(&self, i: usize) -> &Rotation {
        if i == 0 {
            &self.r0
        } else {
            &self.peripherals[i - 1]
        }
    }

    pub fn rotations(&self) -> impl Iterator<Item = &Rotation> {
        std::iter::once(&self.r0).chain(self.peripherals.iter())
    }

    /// Right multiplication `g f`.
    pub fn compose(&self, f: &DiscreteStep) -> Result<Configuration> {
        check_len(self.num_peripherals(), f.fis.len())?;
        Ok(Configuration {
            r0: &self.r0 * &f.f0,
            x: self.x + f.dx,
            peripherals: self
                .peripherals
                .iter()
                .zip(&f.fis)
                .map(|(r, fi)| r * fi)
                .collect(),
        })
    }

    pub fn max_orthogonality_error(&self) -> f64 {
        self.rotations()
            .map(Rotation::orthogonality_error)
            .fold(0.0, f64::max)
    }
}

/// Left-trivialized velocity `ξ = [Ω₀; ẋ; Ω₁; …; Ω_P]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Velocity {
    pub omega0: Vec3,
    pub xdot: Vec3,
    pub omegas: Vec<Vec3>,
}

/// Momentum `μ = [p₀; p_x; p₁; …; p_P]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Momentum {
    pub p0: Vec3,
    pub px: Vec3,
    pub ps: Vec<Vec3>,
}

macro_rules! stacked_vector {
    ($ty:ident, $rot0:ident, $lin:ident, $rest:ident) => {
        impl $ty {
            pub fn zeros(p: usize) -> Self {
                $ty {
                    $rot0: Vec3::zeros(),
                    $lin: Vec3::zeros(),
                    $rest: vec![Vec3::zeros(); p],
                }
            }

            pub fn num_peripherals(&self) -> usize {
                self.$rest.len()
            }

            pub fn dim(&self) -> usize {
                6 + 3 * self.$rest.len()
            }

            pub fn to_vector(&self) -> DVector<f64> {
                let mut out = DVector::zeros(self.dim());
                out.fixed_rows_mut::<3>(0).copy_from(&self.$rot0);
                out.fixed_rows_mut::<3>(3).copy_from(&self.$lin);
                for (i, v) in self.$rest.iter().enumerate() {
                    out.fixed_rows_mut::<3>(6 + 3 * i).copy_from(v);
                }
                out
            }

            pub fn from_slice(v: &[f64]) -> Result<Self> {
                if v.len() < 6 || v.len() % 3 != 0 {
                    return Err(Error::DimensionMismatch {
                        expected: if v.len() < 6 { 6 } else { v.len() - v.len() % 3 },
                        found: v.len(),
                    });
                }
                let at = |k: usize| Vec3::new(v[k], v[k + 1], v[k + 2]);
                Ok($ty {
                    $rot0: at(0),
                    $lin: at(3),
                    $rest: (6..v.len()).step_by(3).map(at).collect(),
                })
            }

            pub fn components(&self) -> impl Iterator<Item = &Vec3> {
                [&self.$rot0, &self.$lin].into_iter().chain(self.$rest.iter())
            }

            pub fn is_finite(&self) -> bool {
                self.components().all(|v| v.iter().all(|x| x.is_finite()))
            }
        }
    };
}

stacked_vector!(Velocity, omega0, xdot, omegas);
stacked_vector!(Momentum, p0, px, ps);

/// Relative update `f_k = (F₀, Δx, F₁, …, F_P)` with `g_{k+1} = g_k f_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteStep {
    pub f0: Rotation,
    pub dx: Vec3,
    pub fis: Vec<Rotation>,
}

impl DiscreteStep {
    pub fn identity(p: usize) -> Self {
        DiscreteStep {
            f0: Rotation::identity(),
            dx: Vec3::zeros(),
            fis: vec![Rotation::identity(); p],
        }
    }

    /// Step generated by exponential coordinates `[φ₀; Δx; φ₁; …; φ_P]`.
    pub fn from_exponential(z: &[f64]) -> Result<Self> {
        let v = Velocity::from_slice(z)?;
        Ok(DiscreteStep {
            f0: exp_so3(&v.omega0),
            dx: v.xdot,
            fis: v.omegas.iter().map(exp_so3).collect(),
        })
    }

    pub fn num_peripherals(&self) -> usize {
        self.fis.len()
    }
}

/// `ad*_ξ μ = [−Ω̂₀p₀; p_x; −Ω̂₁p₁; …; −Ω̂_P p_P]`.
///
/// The translational slot is passed through unchanged. The translation
/// factor is abelian, so Hamilton's equations never read that slot and set
/// `ṗ_x = 0` directly.
pub fn coad_continuous(xi: &Velocity, mu: &Momentum) -> Result<Momentum> {
    check_len(xi.num_peripherals(), mu.num_peripherals())?;
    Ok(Momentum {
        p0: -xi.omega0.cross(&mu.p0),
        px: mu.px,
        ps: xi
            .omegas
            .iter()
            .zip(&mu.ps)
            .map(|(w, p)| -w.cross(p))
            .collect(),
    })
}

/// `Ad*_{f⁻¹} μ = [F₀p₀; p_x; F₁p₁; …; F_P p_P]`.
pub fn coad_discrete(f: &DiscreteStep, mu: &Momentum) -> Result<Momentum> {
    check_len(f.num_peripherals(), mu.num_peripherals())?;
    Ok(Momentum {
        p0: f.f0.matrix() * mu.p0,
        px: mu.px,
        ps: f
            .fis
            .iter()
            .zip(&mu.ps)
            .map(|(fi, p)| fi.matrix() * p)
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn arb_vec3(bound: f64) -> impl Strategy<Value = Vec3> {
        prop::array::uniform3(-bound..bound).prop_map(|a| Vec3::new(a[0], a[1], a[2]))
    }

    #[test]
    fn hat_examples() {
        assert_eq!(hat(&Vec3::zeros()), Mat3::zeros());
        #[rustfmt::skip]
        let e1 = Mat3::new(
            0.0, 0.0, 0.0,
            0.0, 0.0, -1.0,
            0.0, 1.0, 0.0,
        );
        assert_eq!(hat(&Vec3::x()), e1);
        let w = hat(&Vec3::new(1.0, 2.0, 3.0)) * Vec3::new(4.0, 5.0, 6.0);
        assert_eq!(w, Vec3::new(-3.0, 6.0, -3.0));
    }

    #[test]
    fn vee_examples() {
        assert_eq!(vee(&Mat3::zeros()).unwrap(), Vec3::zeros());
        for v in [Vec3::new(1.0, 2.0, 3.0), Vec3::new(-0.5, 0.25, 7.0)] {
            assert_eq!(vee(&hat(&v)).unwrap(), v);
        }
    }

    #[test]
    fn vee_rejects_symmetric_part() {
        let m = hat(&Vec3::new(1.0, 2.0, 3.0)) + Mat3::identity() * 1e-6;
        assert!(matches!(vee(&m), Err(Error::NotSkew { .. })));
        let m = hat(&Vec3::new(1.0, 2.0, 3.0)) + Mat3::identity() * 1e-10;
        assert_relative_eq!(vee(&m).unwrap(), Vec3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn exp_examples() {
        assert_eq!(*exp_so3(&Vec3::zeros()).matrix(), Mat3::identity());
        let q = exp_so3(&Vec3::new(FRAC_PI_2, 0.0, 0.0));
        assert_relative_eq!(q.matrix() * Vec3::y(), Vec3::z(), epsilon = 1e-15);
        let v = Vec3::new(0.1, 0.2, 0.3);
        let r = exp_so3(&v);
        assert_relative_eq!(r.matrix().trace(), 1.0 + 2.0 * 0.14f64.sqrt().cos(), epsilon = 1e-15);
    }

    #[test]
    fn exp_small_angle_branch_is_continuous() {
        let axis = Vec3::new(0.3, -0.5, 0.8).normalize();
        let below = exp_so3(&(axis * 0.999_999e-6));
        let above = exp_so3(&(axis * 1.000_001e-6));
        assert!((below.matrix() - above.matrix()).norm() < 1e-11);
        assert!(below.orthogonality_error() < 1e-15);
    }

    #[test]
    fn orthogonality_examples() {
        assert_eq!(orthogonality_error(&Mat3::identity()), 0.0);
        assert_relative_eq!(
            orthogonality_error(&(2.0 * Mat3::identity())),
            3.0 * 3f64.sqrt(),
            epsilon = 1e-14
        );
        assert!(exp_so3(&Vec3::new(0.3, -0.2, 0.9)).orthogonality_error() <= 1e-14);
    }

    #[test]
    fn rotation_construction_checks() {
        assert!(Rotation::new(Mat3::identity()).is_ok());
        assert!(matches!(
            Rotation::new(2.0 * Mat3::identity()),
            Err(Error::InvalidRotation { .. })
        ));
        // reflection: orthogonal but det = -1
        assert!(Rotation::new(-Mat3::identity()).is_err());
    }

    #[test]
    fn nearest_rotation_recovers_perturbed_rotation() {
        let r = exp_so3(&Vec3::new(0.4, -1.1, 0.3));
        let perturbed = r.matrix() * 1.001 + Mat3::from_element(1e-4);
        let q = nearest_rotation(&perturbed);
        assert!(orthogonality_error(&q) < 1e-14);
        assert!((q - r.matrix()).norm() < 1e-3);
    }

    #[test]
    fn coad_continuous_examples() {
        let mu = Momentum {
            p0: Vec3::new(1.0, 2.0, 3.0),
            px: Vec3::new(4.0, 5.0, 6.0),
            ps: vec![Vec3::new(7.0, 8.0, 9.0); 2],
        };
        let out = coad_continuous(&Velocity::zeros(2), &mu).unwrap();
        assert_eq!(out.p0, Vec3::zeros());
        assert_eq!(out.px, mu.px);
        assert!(out.ps.iter().all(|p| *p == Vec3::zeros()));

        let mut xi = Velocity::zeros(2);
        xi.omega0 = Vec3::z();
        let mut mu = Momentum::zeros(2);
        mu.p0 = Vec3::x();
        assert_eq!(coad_continuous(&xi, &mu).unwrap().p0, Vec3::new(0.0, -1.0, 0.0));

        let zero = coad_continuous(&xi, &Momentum::zeros(2)).unwrap();
        assert_eq!(zero, Momentum::zeros(2));

        assert!(matches!(
            coad_continuous(&Velocity::zeros(1), &Momentum::zeros(2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn coad_discrete_examples() {
        let mu = Momentum {
            p0: Vec3::new(1.0, -2.0, 0.5),
            px: Vec3::new(0.1, 0.2, 0.3),
            ps: vec![Vec3::new(3.0, 1.0, 4.0)],
        };
        assert_eq!(coad_discrete(&DiscreteStep::identity(1), &mu).unwrap(), mu);

        let mut f = DiscreteStep::identity(0);
        f.f0 = exp_so3(&Vec3::new(0.0, 0.0, FRAC_PI_2));
        let mut mu = Momentum::zeros(0);
        mu.p0 = Vec3::x();
        let out = coad_discrete(&f, &mu).unwrap();
        assert_relative_eq!(out.p0, Vec3::y(), epsilon = 1e-15);
        assert_eq!(coad_discrete(&f, &Momentum::zeros(0)).unwrap(), Momentum::zeros(0));
    }

    #[test]
    fn stacked_vector_layout() {
        let v: Vec<f64> = (0..12).map(f64::from).collect();
        let xi = Velocity::from_slice(&v).unwrap();
        assert_eq!(xi.xdot, Vec3::new(3.0, 4.0, 5.0));
        assert_eq!(xi.omegas[1], Vec3::new(9.0, 10.0, 11.0));
        assert_eq!(xi.to_vector().as_slice(), v.as_slice());
        assert!(Velocity::from_slice(&v[..7]).is_err());
    }

    #[test]
    fn compose_is_group_multiplication() {
        let g = Configuration {
            r0: exp_so3(&Vec3::new(0.1, 0.2, 0.3)),
            x: Vec3::new(1.0, 2.0, 3.0),
            peripherals: vec![exp_so3(&Vec3::new(-0.4, 0.0, 0.2))],
        };
        let f = DiscreteStep::from_exponential(&[0.0, 0.0, 0.5, 1.0, 0.0, 0.0, 0.2, 0.0, 0.0])
            .unwrap();
        let h = g.compose(&f).unwrap();
        assert_eq!(*h.r0.matrix(), g.r0.matrix() * f.f0.matrix());
        assert_eq!(h.x, Vec3::new(2.0, 2.0, 3.0));
        assert!(g.compose(&DiscreteStep::identity(2)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn vee_inverts_hat(v in arb_vec3(1e3)) {
            prop_assert_eq!(vee(&hat(&v)).unwrap(), v);
        }

        #[test]
        fn hat_is_cross_product(v in arb_vec3(10.0), w in arb_vec3(10.0)) {
            let lhs = hat(&v) * w;
            let rhs = v.cross(&w);
            prop_assert!((lhs - rhs).norm() <= 1e-15 * (v.norm() * w.norm()).max(1.0));
            prop_assert_eq!(hat(&v), -hat(&v).transpose());
        }

        #[test]
        fn exp_is_a_rotation(v in arb_vec3(10.0 / 3f64.sqrt())) {
            let r = exp_so3(&v);
            prop_assert!(Rotation::new(*r.matrix()).is_ok());
            let theta = v.norm();
            prop_assert!((r.matrix().trace() - (1.0 + 2.0 * theta.cos())).abs() < 1e-12);
        }

        #[test]
        fn exp_of_negation_is_transpose(v in arb_vec3(5.0)) {
            let diff = exp_so3(&-v).matrix() - exp_so3(&v).transpose();
            prop_assert!(diff.norm() <= 1e-13);
        }

        #[test]
        fn identity_coad_is_identity(a in arb_vec3(10.0), b in arb_vec3(10.0), c in arb_vec3(10.0)) {
            let mu = Momentum { p0: a, px: b, ps: vec![c, a + b] };
            prop_assert_eq!(coad_discrete(&DiscreteStep::identity(2), &mu).unwrap(), mu);
        }
    }
}
