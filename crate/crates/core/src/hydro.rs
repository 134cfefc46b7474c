//! Added inertia of ellipsoids in potential flow and the per-body inertia
//! matrices derived from it.
//!
//! An ellipsoid with semi-axes `l₁, l₂, l₃` moving through an ideal fluid
//! carries the classical Lamb added inertias. With the shape factors
//!
//! ```text
//! γ_q = l₁l₂l₃ ∫₀^∞ dν / ((l_q² + ν) √((l₁² + ν)(l₂² + ν)(l₃² + ν)))
//! ```
//!
//! the added mass is `M^f = m diag[γ_q / (2 − γ_q)]` and the added rotational
//! inertia `J^f = diag[λ₁, λ₂, λ₃]`. Cross-coupling `D^f` vanishes for an
//! ellipsoid about its centre, and body–body added inertia is neglected.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::liegroup::{hat, Mat3, Vec3};
use crate::quadrature;

/// Absolute tolerance on each shape factor.
pub const GAMMA_TOLERANCE: f64 = 1e-12;
const GAMMA_MAX_INTERVALS: usize = 4000;
const DEGENERATE_AXES: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidGeometry {
    semi_axes: [f64; 3],
}

impl EllipsoidGeometry {
    pub fn new(l1: f64, l2: f64, l3: f64) -> Result<Self> {
        let semi_axes = [l1, l2, l3];
        let bad: Vec<String> = semi_axes
            .iter()
            .enumerate()
            .filter(|(_, l)| !(l.is_finite() && **l > 0.0))
            .map(|(q, l)| format!("semi_axes[{q}]: must be positive and finite, got {l}"))
            .collect();
        if bad.is_empty() {
            Ok(EllipsoidGeometry { semi_axes })
        } else {
            Err(Error::Validation(bad))
        }
    }

    pub fn sphere(radius: f64) -> Result<Self> {
        Self::new(radius, radius, radius)
    }

    pub fn semi_axes(&self) -> [f64; 3] {
        self.semi_axes
    }

    pub fn volume(&self) -> f64 {
        let [a, b, c] = self.semi_axes;
        4.0 / 3.0 * PI * a * b * c
    }

    /// Mass of a body of uniform `density`; with the fluid density this is
    /// the neutrally buoyant mass.
    pub fn mass_for_density(&self, density: f64) -> f64 {
        density * self.volume()
    }
}

/// Lamb shape factors `(γ₁, γ₂, γ₃)`; they sum to 2 and depend only on the
/// axis ratios.
pub fn gamma_factors(geom: &EllipsoidGeometry) -> Result<[f64; 3]> {
    let l = geom.semi_axes;
    let l2 = l.map(|x| x * x);
    let product = l[0] * l[1] * l[2];
    // ν = c t / (1 − t) maps [0, ∞) onto [0, 1); c carries units of length²
    // so the integrand in t is scale free.
    let c = product.powf(2.0 / 3.0);

    let mut out = [0.0; 3];
    for (q, gamma) in out.iter_mut().enumerate() {
        let integrand = |t: f64| {
            let w = 1.0 - t;
            let ct = c * t;
            let d = [l2[0] * w + ct, l2[1] * w + ct, l2[2] * w + ct];
            product * c * w.sqrt() / (d[q] * (d[0] * d[1] * d[2]).sqrt())
        };
        *gamma =
            quadrature::integrate(integrand, 0.0, 1.0, GAMMA_TOLERANCE, GAMMA_MAX_INTERVALS)?.value;
    }
    Ok(out)
}

fn lambda_from(l: [f64; 3], gamma: [f64; 3], mass: f64) -> [f64; 3] {
    let l2 = l.map(|x| x * x);
    let scale = l2.iter().cloned().fold(0.0, f64::max);
    let mut out = [0.0; 3];
    for (q, lambda) in out.iter_mut().enumerate() {
        let (a, b) = ((q + 1) % 3, (q + 2) % 3);
        let diff = l2[a] - l2[b];
        if diff.abs() < DEGENERATE_AXES * scale {
            continue;
        }
        let num = diff * diff * (gamma[b] - gamma[a]);
        let den = 2.0 * diff + (l2[a] + l2[b]) * (gamma[a] - gamma[b]);
        *lambda = mass / 5.0 * num / den;
    }
    out
}

/// Added rotational inertias `(λ₁, λ₂, λ₃)`; zero about an axis of symmetry.
pub fn lambda_factors(geom: &EllipsoidGeometry, mass: f64) -> Result<[f64; 3]> {
    Ok(lambda_from(geom.semi_axes, gamma_factors(geom)?, mass))
}

pub fn added_mass_matrix(geom: &EllipsoidGeometry, mass: f64) -> Result<Mat3> {
    let gamma = gamma_factors(geom)?;
    Ok(added_mass_from(gamma, mass))
}

fn added_mass_from(gamma: [f64; 3], mass: f64) -> Mat3 {
    Mat3::from_diagonal(&Vec3::from(gamma.map(|g| mass * g / (2.0 - g))))
}

/// Inertia of a solid homogeneous ellipsoid about its principal axes.
pub fn solid_ellipsoid_inertia(geom: &EllipsoidGeometry, mass: f64) -> Mat3 {
    let [a, b, c] = geom.semi_axes.map(|x| x * x);
    Mat3::from_diagonal(&Vec3::new(b + c, a + c, a + b)) * (mass / 5.0)
}

/// One rigid ellipsoid with its fluid loading.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyParams {
    pub geometry: EllipsoidGeometry,
    pub mass: f64,
    pub body_inertia: Mat3,
    pub added_mass: Mat3,
    pub added_inertia: Mat3,
    /// `M = m I + M^f`
    pub total_mass_matrix: Mat3,
    /// `J = J^b + J^f`
    pub total_inertia: Mat3,
}

pub fn build_body_params(geom: &EllipsoidGeometry, mass: f64) -> Result<BodyParams> {
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::Validation(vec![format!(
            "mass: must be positive and finite, got {mass}"
        )]));
    }
    let gamma = gamma_factors(geom)?;
    let added_mass = added_mass_from(gamma, mass);
    let added_inertia = Mat3::from_diagonal(&Vec3::from(lambda_from(geom.semi_axes, gamma, mass)));
    let body_inertia = solid_ellipsoid_inertia(geom, mass);
    Ok(BodyParams {
        geometry: *geom,
        mass,
        body_inertia,
        added_mass,
        added_inertia,
        total_mass_matrix: Mat3::identity() * mass + added_mass,
        total_inertia: body_inertia + added_inertia,
    })
}

/// Inertias that appear in the discrete Lagrangian.
#[derive(Debug, Clone, PartialEq)]
pub struct NonstandardInertia {
    /// `J_{d₀} = ½ tr(J₀) I − J₀`
    pub jd0: Mat3,
    /// `J'_{dᵢ} = ½ tr(J'ᵢ) I − J'ᵢ`
    pub jdi: Vec<Mat3>,
    /// `J'ᵢ = Jᵢ − d̂_{i0} Mᵢ d̂_{i0}`
    pub jprime: Vec<Mat3>,
}

fn nonstandard(j: &Mat3) -> Mat3 {
    Mat3::identity() * (0.5 * j.trace()) - j
}

pub fn nonstandard_inertias(
    central: &BodyParams,
    peripherals: &[BodyParams],
    di0: &[Vec3],
) -> Result<NonstandardInertia> {
    check_len(peripherals.len(), di0.len())?;
    let jprime: Vec<Mat3> = peripherals
        .iter()
        .zip(di0)
        .map(|(b, d)| {
            let dh = hat(d);
            b.total_inertia - dh * b.total_mass_matrix * dh
        })
        .collect();
    Ok(NonstandardInertia {
        jd0: nonstandard(&central.total_inertia),
        jdi: jprime.iter().map(nonstandard).collect(),
        jprime,
    })
}
