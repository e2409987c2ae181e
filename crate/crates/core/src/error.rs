use thiserror::Error;

use crate::vec3::Vec3;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("physical constants must be finite and strictly positive (hbar={hbar}, mass={mass}, c={c})")]
    InvalidConstants { hbar: f64, mass: f64, c: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("wave function vanishes at x={x:?}, t={t}: phase is undefined (node singularity)")]
    SingularNode { x: Vec3, t: f64 },

    #[error("point x={x:?}, t={t} is not admissible: dS/dt = {ds_dt} must be negative")]
    NonAdmissiblePoint { x: Vec3, t: f64, ds_dt: f64 },

    #[error("proper time {tau} exceeds the accumulated proper time {available} of the path")]
    OutOfHorizon { tau: f64, available: f64 },

    #[error("non-finite state on path {path} at step {step}")]
    NonFinite { path: usize, step: usize },

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("components must differ (got {0} twice)")]
    SameComponent(usize),

    #[error("component index {0} out of range (expected 0..3)")]
    ComponentOutOfRange(usize),

    #[error("stability bound violated: {0}")]
    Cfl(String),

    #[error("test function does not vanish on the quadrature box boundary: {0}")]
    SupportViolation(String),

    #[error("ensemble is empty")]
    EmptyEnsemble,

    #[error("time index {index} has no neighbour on both sides (grid has {len} points)")]
    NoNeighbours { index: usize, len: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
