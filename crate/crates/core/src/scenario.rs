//! Scenario files: a versioned JSON description of bodies, joints, initial
//! conditions and integrator settings.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hydro::{build_body_params, BodyParams, EllipsoidGeometry};
use crate::lgvi::SolverSettings;
use crate::liegroup::{Configuration, Mat3, Momentum, Rotation, Vec3, Velocity};
use crate::model::{legendre_to_momentum, SystemParams, SystemState};
use crate::rk::RkSettings;

pub const SCHEMA: &str = "fluidchain.scenario/1";
pub const DEFAULT_CADENCE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lgvi,
    Rk4,
    Rk45,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lgvi" => Ok(Method::Lgvi),
            "rk4" => Ok(Method::Rk4),
            "rk45" => Ok(Method::Rk45),
            other => Err(Error::Parse(format!("unknown integrator '{other}'"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Lgvi => "lgvi",
            Method::Rk4 => "rk4",
            Method::Rk45 => "rk45",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodySpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub semi_axes: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    /// Body density; the mass is density times ellipsoid volume.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d0i: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub di0: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Attitude {
    AxisAngle([f64; 3]),
    /// Row-major rotation matrix.
    Matrix([f64; 9]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocitySpec {
    pub omega0: [f64; 3],
    pub xdot: [f64; 3],
    #[serde(default)]
    pub omegas: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentumSpec {
    pub p0: [f64; 3],
    pub px: [f64; 3],
    #[serde(default)]
    pub ps: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    /// One attitude per body, central body first. Missing means identity.
    #[serde(default)]
    pub attitudes: Vec<Attitude>,
    #[serde(default)]
    pub position: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<VelocitySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub momentum: Option<MomentumSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    pub method: Method,
    /// Step size for LGVI and RK4; output spacing is `cadence * h` for all.
    pub h: f64,
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
    #[serde(default)]
    pub reorthonormalize: bool,
}

fn default_newton_tol() -> f64 {
    SolverSettings::DEFAULT_TOL
}
fn default_max_iters() -> usize {
    SolverSettings::DEFAULT_MAX_ITERS
}
fn default_rel_tol() -> f64 {
    RkSettings::DEFAULT_REL_TOL
}
fn default_abs_tol() -> f64 {
    RkSettings::DEFAULT_ABS_TOL
}
fn default_cadence() -> usize {
    DEFAULT_CADENCE
}

/// The on-disk form of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    /// Recorded with the scenario; the added inertia is expressed through
    /// each body's mass, so it does not enter the dynamics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fluid_density: Option<f64>,
    pub bodies: Vec<BodySpec>,
    #[serde(default)]
    pub joints: Vec<JointSpec>,
    pub initial: InitialSpec,
    pub integrator: IntegratorSpec,
    pub duration: f64,
    #[serde(default = "default_cadence")]
    pub cadence: usize,
}

/// A validated scenario with body parameters and initial state resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub params: SystemParams,
    pub initial: SystemState,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IntegratorSettings {
    Lgvi(SolverSettings),
    Rk(RkSettings),
}

impl Scenario {
    pub fn from_file(file: ScenarioFile) -> Result<Self> {
        let (params, initial) = resolve(&file)?;
        Ok(Scenario { file, params, initial })
    }

    pub fn method(&self) -> Method {
        self.file.integrator.method
    }

    pub fn step_size(&self) -> f64 {
        self.file.integrator.h
    }

    /// Number of base steps of length `h` covering the duration.
    pub fn num_steps(&self) -> usize {
        (self.file.duration / self.file.integrator.h).round() as usize
    }

    pub fn settings(&self) -> IntegratorSettings {
        let s = &self.file.integrator;
        match s.method {
            Method::Lgvi => IntegratorSettings::Lgvi(SolverSettings {
                h: s.h,
                newton_tol: s.newton_tol,
                max_iters: s.max_iters,
            }),
            Method::Rk4 => IntegratorSettings::Rk(RkSettings::fixed(s.h).with_reorthonormalization(s.reorthonormalize)),
            Method::Rk45 => IntegratorSettings::Rk(
                RkSettings::adaptive(s.rel_tol, s.abs_tol).with_reorthonormalization(s.reorthonormalize),
            ),
        }
    }
}

fn finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

fn check_vec(errors: &mut Vec<String>, path: &str, v: &[f64]) {
    if !finite(v) {
        errors.push(format!("{path}: values must be finite"));
    }
}

fn resolve_mass(errors: &mut Vec<String>, path: &str, body: &BodySpec) -> Option<BodyParams> {
    let geom = match EllipsoidGeometry::new(body.semi_axes[0], body.semi_axes[1], body.semi_axes[2]) {
        Ok(g) => g,
        Err(_) => {
            errors.push(format!("{path}.semi_axes: all semi-axes must be positive and finite"));
            return None;
        }
    };
    let mass = match (body.mass, body.density) {
        (Some(m), None) => m,
        (None, Some(rho)) => {
            if !(rho > 0.0 && rho.is_finite()) {
                errors.push(format!("{path}.density: must be positive, got {rho}"));
                return None;
            }
            geom.mass_for_density(rho)
        }
        (Some(_), Some(_)) => {
            errors.push(format!("{path}: give exactly one of mass and density"));
            return None;
        }
        (None, None) => {
            errors.push(format!("{path}: one of mass and density is required"));
            return None;
        }
    };
    if !(mass > 0.0 && mass.is_finite()) {
        errors.push(format!("{path}.mass: must be positive, got {mass}"));
        return None;
    }
    match build_body_params(&geom, mass) {
        Ok(b) => Some(b),
        Err(e) => {
            errors.push(format!("{path}: {e}"));
            None
        }
    }
}

fn resolve_attitude(errors: &mut Vec<String>, path: &str, a: &Attitude) -> Rotation {
    match a {
        Attitude::AxisAngle(v) => {
            check_vec(errors, path, v);
            Rotation::from_axis_angle(&Vec3::from_column_slice(v))
        }
        Attitude::Matrix(m) => match Rotation::new(Mat3::from_row_slice(m)) {
            Ok(r) => r,
            Err(e) => {
                errors.push(format!("{path}: {e}"));
                Rotation::identity()
            }
        },
    }
}

fn resolve(file: &ScenarioFile) -> Result<(SystemParams, SystemState)> {
    let mut errors = Vec::new();
    if file.schema != SCHEMA {
        errors.push(format!("schema: expected '{SCHEMA}', found '{}'", file.schema));
    }
    if file.bodies.is_empty() {
        errors.push("bodies: at least the central body is required".into());
    }
    let p = file.bodies.len().saturating_sub(1);

    if let Some(rho) = file.fluid_density {
        if !(rho > 0.0 && rho.is_finite()) {
            errors.push(format!("fluid_density: must be positive, got {rho}"));
        }
    }
    let bodies: Vec<Option<BodyParams>> = file
        .bodies
        .iter()
        .enumerate()
        .map(|(i, b)| resolve_mass(&mut errors, &format!("bodies[{i}]"), b))
        .collect();

    if file.joints.len() != p {
        errors.push(format!("joints: expected {p} entries (one per peripheral body), found {}", file.joints.len()));
    }
    let mut d0i = Vec::with_capacity(p);
    let mut di0 = Vec::with_capacity(p);
    for i in 0..p {
        let joint = file.joints.get(i);
        for (name, value, out) in [
            ("d0i", joint.and_then(|j| j.d0i), &mut d0i),
            ("di0", joint.and_then(|j| j.di0), &mut di0),
        ] {
            match value {
                Some(v) => {
                    check_vec(&mut errors, &format!("joints[{i}].{name}"), &v);
                    out.push(Vec3::from(v));
                }
                None => {
                    errors.push(format!("joints[{i}].{name}: missing"));
                    out.push(Vec3::zeros());
                }
            }
        }
    }

    let init = &file.initial;
    if !init.attitudes.is_empty() && init.attitudes.len() != p + 1 {
        errors.push(format!(
            "initial.attitudes: expected {} entries, found {}",
            p + 1,
            init.attitudes.len()
        ));
    }
    let rotations: Vec<Rotation> = (0..=p)
        .map(|i| match init.attitudes.get(i) {
            Some(a) => resolve_attitude(&mut errors, &format!("initial.attitudes[{i}]"), a),
            None => Rotation::identity(),
        })
        .collect();
    check_vec(&mut errors, "initial.position", &init.position);

    match (&init.velocity, &init.momentum) {
        (Some(_), Some(_)) => errors.push("initial: give exactly one of velocity and momentum".into()),
        (None, None) => errors.push("initial: one of velocity and momentum is required".into()),
        (Some(v), None) => {
            check_vec(&mut errors, "initial.velocity.omega0", &v.omega0);
            check_vec(&mut errors, "initial.velocity.xdot", &v.xdot);
            if v.omegas.len() != p {
                errors.push(format!("initial.velocity.omegas: expected {p} entries, found {}", v.omegas.len()));
            }
            for (i, w) in v.omegas.iter().enumerate() {
                check_vec(&mut errors, &format!("initial.velocity.omegas[{i}]"), w);
            }
        }
        (None, Some(m)) => {
            check_vec(&mut errors, "initial.momentum.p0", &m.p0);
            check_vec(&mut errors, "initial.momentum.px", &m.px);
            if m.ps.len() != p {
                errors.push(format!("initial.momentum.ps: expected {p} entries, found {}", m.ps.len()));
            }
            for (i, w) in m.ps.iter().enumerate() {
                check_vec(&mut errors, &format!("initial.momentum.ps[{i}]"), w);
            }
        }
    }

    let s = &file.integrator;
    if !(s.h > 0.0 && s.h.is_finite()) {
        errors.push(format!("integrator.h: must be positive, got {}", s.h));
    }
    if !(s.newton_tol > 0.0 && s.newton_tol.is_finite()) {
        errors.push(format!("integrator.newton_tol: must be positive, got {}", s.newton_tol));
    }
    if s.max_iters == 0 {
        errors.push("integrator.max_iters: must be at least 1".into());
    }
    if !(s.rel_tol > 0.0 && s.rel_tol.is_finite()) {
        errors.push(format!("integrator.rel_tol: must be positive, got {}", s.rel_tol));
    }
    if !(s.abs_tol > 0.0 && s.abs_tol.is_finite()) {
        errors.push(format!("integrator.abs_tol: must be positive, got {}", s.abs_tol));
    }
    if !(file.duration >= 0.0 && file.duration.is_finite()) {
        errors.push(format!("duration: must be non-negative, got {}", file.duration));
    }
    if file.cadence == 0 {
        errors.push("cadence: must be at least 1".into());
    }

    if !errors.is_empty() {
        return Err(Error::Validation(errors));
    }

    let mut bodies = bodies.into_iter().map(|b| b.expect("validated"));
    let central = bodies.next().expect("validated");
    let params = SystemParams::new(central, bodies.collect(), d0i, di0)?;
    let config = Configuration {
        r0: rotations[0].clone(),
        x: Vec3::from(init.position),
        peripherals: rotations[1..].to_vec(),
    };
    let momentum = match (&init.velocity, &init.momentum) {
        (Some(v), _) => {
            let xi = Velocity {
                omega0: Vec3::from(v.omega0),
                xdot: Vec3::from(v.xdot),
                omegas: v.omegas.iter().map(|w| Vec3::from(*w)).collect(),
            };
            legendre_to_momentum(&params, &config, &xi)?
        }
        (None, Some(m)) => Momentum {
            p0: Vec3::from(m.p0),
            px: Vec3::from(m.px),
            ps: m.ps.iter().map(|w| Vec3::from(*w)).collect(),
        },
        (None, None) => unreachable!("validated"),
    };
    Ok((
        params,
        SystemState {
            config,
            momentum,
            time: 0.0,
        },
    ))
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    Scenario::from_file(file)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_scenario(&text).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn scenario_to_string(file: &ScenarioFile) -> Result<String> {
    serde_json::to_string_pretty(file).map_err(|e| Error::Parse(e.to_string()))
}

pub fn write_scenario(path: impl AsRef<Path>, file: &ScenarioFile) -> Result<()> {
    let mut text = scenario_to_string(file)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
