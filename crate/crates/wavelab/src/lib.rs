//! Numerical laboratory for the defocusing subcritical wave equation
//! `u_tt - Δu = -|u|^{p-1} u` in dimensions 3-5.
//!
//! The crate measures, at desk scale, the objects that control the late-time
//! behaviour of finite-energy solutions: energy fluxes through light cones
//! `|x| = t + R`, the cutoff decomposition `u = v_T + w_T`, outgoing radiation
//! profiles and the exterior scattering residual against a reconstructed free
//! wave. Exponent bookkeeping (admissible pairs, Hölder interpolation
//! coefficients) is done in exact rational arithmetic.
//!
//! Modules:
//! - [`exponents`]: exact rational exponent algebra and admissibility checks.
//! - [`grid`]: grids, field storage, discrete operators, region quadrature.
//! - [`solver`]: leapfrog / energy-conserving time integration, exact linear
//!   solutions for validation.
//! - [`diagnostics`]: energies, cone fluxes, shell norms, mixed space-time
//!   norms.
//! - [`radiation`]: outgoing profile extraction, free-wave reconstruction,
//!   scattering residuals.
//! - [`decomposition`]: the cone-shell cutoff decomposition and its identity
//!   checks.
//! - [`config`], [`manifest`], [`presets`]: experiment configuration, run
//!   manifests and the preset pipelines used by the acceptance suite.

pub mod config;
pub mod csvout;
pub mod decomposition;
pub mod diagnostics;
pub mod exponents;
pub mod grid;
pub mod manifest;
pub mod presets;
pub mod radiation;
pub mod snapshot;
pub mod solver;
