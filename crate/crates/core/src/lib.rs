//! Subelliptic harmonic maps with potential on periodic sub-Riemannian grids.
//!
//! A domain is a 3-torus carrying an adapted orthonormal frame `{e_1, e_2 | e_3}`
//! whose first `m` vectors span the horizontal distribution. Maps into a sphere
//! or flat space are sampled on the grid and differentiated along the frame with
//! periodic central differences. On top of that calculus the crate provides
//!
//! * the horizontal energy with potential and its tension field,
//! * first/second variation residuals checked against finite differences in `t`,
//! * a backtracking geodesic gradient flow producing approximate critical maps,
//! * stability tooling: index form probing, Rayleigh quotient minimization and
//!   the conformal-field identities behind instability of maps into spheres.

pub mod domain;
pub mod error;
pub mod fields;
pub mod flow;
pub mod stability;
pub mod target;
pub mod variational;

mod vecops;

pub use domain::{build_chart, integrate, koszul_connection, ChartKind, DomainChart, GridShape, Stencil};
pub use error::{Error, Result};
pub use fields::{
    frame_derivative, horizontal_differential, pullback_covariant_derivative, random_section, MapField, SectionField,
};
pub use flow::{
    flow_step, flow_until, flow_until_with, initial_map, FlowOptions, FlowOutcome, FlowRecord, FlowStatus, FlowTrace,
    InitialMap, StepResult,
};
pub use stability::{
    conformal_field, instability_certificate, leung_sum, rayleigh_minimize, sphere_index_identity, stability_probe,
    CertificateOptions, ConformalField, IdentityCheck, LeungSum, ProbeOptions, RayleighResult, StabilityVerdict,
    Verdict, Witness,
};
pub use target::{AmbientFunction, AmbientQuadratic, Hessian, Potential, PotentialEval, Target};
pub use variational::{
    divergence_identity_residual, energy_density, first_variation_residual, index_form, index_form_polarized,
    second_variation_residual, tension_with_potential, total_energy, ConvergenceStudy, SecondVariationForm,
    VariationReport,
};
