//! Ball-jointed ellipsoids immersed in an ideal fluid.

pub mod app;
pub mod error;
pub mod hydro;
pub mod lgvi;
pub mod liegroup;
pub mod model;
pub mod quadrature;
pub mod rk;
pub mod scenario;

pub use error::{Error, Result};
