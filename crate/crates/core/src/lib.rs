//! Reconstruction of immersed bodies from their fundamental forms.
//!
//! Given a metric g, a second fundamental form B and a normal connection ∇ᴱ on
//! a rectangular chart, the crate assembles the Cartan connection form,
//! integrates the Pfaff system dA = 𝐖A and the Poincaré system df = wA, and
//! reports discrete residuals of the Gauss, Codazzi and Ricci equations. It
//! also computes the forward map f ↦ (g, B, ∇ᴱ), rigid alignment, distance to
//! the rotation group, and diagnostics for oscillating membrane sequences.

pub mod asymptotics;
pub mod cartan;
pub mod curvature;
pub mod error;
pub mod fields;
pub mod fixtures;
pub mod immersion;
pub mod linalg;
pub mod rigidity;

pub use cartan::{ConnectionForm, CoframeField, FrameField};
pub use curvature::{ChristoffelField, ResidualReport, RiemannField};
pub use error::{Error, Result};
pub use fields::{
    Chart, Field, ImmersionField, MetricField, NormalConnectionField, SecondFormField,
    VectorOneFormField,
};
pub use immersion::RigidMotion;
pub use rigidity::{RigidityReport, SphereMap};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
