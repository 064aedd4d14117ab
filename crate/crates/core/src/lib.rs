//! Explicit strong-order integrators for SDEs whose drift grows superlinearly
//! and may be only Hölder continuous in time.
//!
//! The main integrator is the randomized-tamed Milstein scheme: the drift is
//! tamed by `1 + |x|^{2ξ}/n` and evaluated at a uniformly drawn time inside
//! each step, while the diffusion and Milstein correction stay frozen at the
//! left endpoint. Around it sit the coupled Brownian grids, the Monte-Carlo
//! strong-error harness and the `sde-rtm` command-line front end.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod model;
pub mod noise;
pub mod schemes;

pub use error::{Result, SdeError};
pub use model::{make_builtin, Builtin, NoiseStructure, SdeProblem};
pub use noise::{BrownianGrid, RandomizationStream, Role, SeedPolicy};
pub use schemes::{integrate_path, step, tame_drift, PathOutcome, SchemeKind, StepContext};
