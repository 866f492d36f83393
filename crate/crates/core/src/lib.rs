//! Fluid models of explicit-rate congestion control: a delay-differential
//! solver, linear stability analysis, characteristic-root computation and
//! numerical bifurcation sweeps.
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`); the aliases at the
//! crate root fix the scalar to `f64`.

pub mod bifurcation;
pub mod dde;
pub mod error;
pub mod linear;
pub mod models;
pub mod scalar;
pub mod specroots;
pub mod types;

pub use bifurcation::{
    estimate_period, measure_point, onset_of_cycle, phase_portrait, run_sweep, BifurcationPoint, Classification,
    PortraitError,
};
pub use dde::{integrate, ConstantHistory, DdeProblem, DelaySystem, FnSystem, History, SmoothHistory};
pub use error::{Error, IntegrateError, Result, RhsFault};
pub use linear::{
    hopf_transversality, model_a_stable_band, optimal_a_no_queue, stability_chart, stability_model_a,
    stability_model_b, ChartModel, ParamGrid, Sign, StabilityChart, StabilityVerdict,
};
pub use models::{rhs_model_a, rhs_model_b, ModelSpec, Variant};
pub use scalar::Scalar;
pub use specroots::{rightmost_real_part, rightmost_roots, CharEq, Root, SearchBox, SpectrumResult};
pub use types::{equilibrium_model_a, equilibrium_model_b, map_beta_to_b, Equilibrium, ModelAParams, ModelBParams};

pub type ModelA = types::ModelAParams<f64>;
pub type ModelB = types::ModelBParams<f64>;
pub type Model = models::ModelSpec<f64>;
pub type Trajectory = types::Trajectory<f64>;
pub type Verdict = linear::StabilityVerdict<f64>;
pub type Chart = linear::StabilityChart<f64>;
pub type Equation = specroots::CharEq<f64>;
pub type Spectrum = specroots::SpectrumResult<f64>;
pub type SweepConfig = bifurcation::SweepConfig<f64>;
pub type Point = bifurcation::BifurcationPoint<f64>;
pub type Portrait = bifurcation::PhasePortrait<f64>;

pub type ModelA32 = types::ModelAParams<f32>;
pub type ModelB32 = types::ModelBParams<f32>;
pub type Trajectory32 = types::Trajectory<f32>;
