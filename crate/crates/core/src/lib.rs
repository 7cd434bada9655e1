//! Feedback-linearised single-track vehicle: model, linearising laws,
//! proportional tracking loop and closed-loop stability analysis.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod control;
pub mod eigen;
pub mod error;
pub mod integrate;
pub mod linearise;
pub mod model;

pub use analysis::{
    closed_loop_field, hopf_bisect, jacobian, stability_sweep, EquilibriumSpec, HopfPoint,
    ReducedState, StabilityMap, SweepGrid, SweepOptions, Verdict,
};
pub use control::{
    apply_dropout, default_step_schedule, reference_point, run_open_loop, run_tracking,
    tracking_law, DropoutModel, Episode, ReferenceTrajectory, RunLog, Segment, TrackingGains,
    TrackingOptions,
};
pub use eigen::{eigenvalues, qr_eigenvalues};
pub use error::{Error, Result};
pub use integrate::{integrate, Integrator, Substeps, Trajectory};
pub use linearise::{
    linearise, linearising_law_alternative, linearising_law_nominal, linearising_law_uncertain,
    point_p_position, point_p_velocity, ControlCommand, Law, LinearisationConfig, Point,
    PointVelocityCommand,
};
pub use model::{dynamics, ModelInput, SingleTrack, VehicleParams, VehicleState};
