//! Geometry engine for the left-invariant metrics
//! `g_a = Σ e^{-2 a_i x_{N+1}} dx_i² + dx_{N+1}²` on `ℝ^{N+1}`.

pub mod checks;
pub mod distance;
pub mod entropy;
pub mod error;
pub mod geodesic;
pub mod hyperbolic;
pub mod jacobi;
pub mod metric;
pub mod ode;
pub mod params;
pub mod quadrature;
pub mod rng;
pub mod volume;

pub use error::{Error, IntegrationError, Result};
pub use geodesic::{exp_map, trace, GeodesicState, IntegratorConfig};
pub use params::{MetricParams, Point, SignClass, Tangent};
