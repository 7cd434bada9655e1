//! Point-P output maps and the feedback linearising laws.
//!
//! Two placements of the output point are supported:
//!
//! * [`Law::FrontAxleOffset`]: P sits a distance `p` ahead of the front
//!   axle along the steering direction. The law outputs speed and steering
//!   *rate* and does not need any model parameter except the centre-of-mass
//!   position `l_f`.
//! * [`Law::VelocityDirection`]: P sits a distance `p` ahead of the centre
//!   of mass along the velocity vector. The law outputs speed and steering
//!   *angle* and needs mass and cornering stiffnesses.
//!
//! Both laws turn the map from `(v_Px, v_Py)` to the velocity of P into the
//! identity, i.e. two decoupled integrators, when the model is exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dynamics, ModelInput, VehicleParams, VehicleState, DEFAULT_SPEED_FLOOR};

/// Default offset of point P [m].
pub const DEFAULT_P: f64 = 0.35;

/// Default guard around the `beta - delta = pi/2 + k pi` singular set, 5°.
pub const DEFAULT_SINGULARITY_MARGIN: f64 = 5.0 * std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Law {
    FrontAxleOffset,
    VelocityDirection,
}

impl Law {
    pub fn name(self) -> &'static str {
        match self {
            Law::FrontAxleOffset => "front-axle-offset",
            Law::VelocityDirection => "velocity-direction",
        }
    }

    /// Dimension of the closed-loop state that does not depend on P.
    pub fn reduced_dim(self) -> usize {
        match self {
            Law::FrontAxleOffset => 4,
            Law::VelocityDirection => 3,
        }
    }
}

impl std::fmt::Display for Law {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearisationConfig {
    p: f64,
    l_f_est: f64,
    law: Law,
    singularity_margin: f64,
}

impl LinearisationConfig {
    pub fn new(law: Law, p: f64, l_f_est: f64) -> Result<Self> {
        Self {
            p,
            l_f_est,
            law,
            singularity_margin: DEFAULT_SINGULARITY_MARGIN,
        }
        .validated()
    }

    /// Configuration for a centre-of-mass deviation `dl = l_f_est - l_f`.
    pub fn with_deviation(law: Law, p: f64, params: &VehicleParams, dl: f64) -> Result<Self> {
        Self::new(law, p, params.l_f + dl)
    }

    pub fn with_singularity_margin(mut self, margin: f64) -> Result<Self> {
        self.singularity_margin = margin;
        self.validated()
    }

    pub fn with_l_f_est(mut self, l_f_est: f64) -> Result<Self> {
        self.l_f_est = l_f_est;
        self.validated()
    }

    fn validated(self) -> Result<Self> {
        if !(self.p.is_finite() && self.p > 0.0) {
            return Err(Error::invalid(
                "p",
                format!(
                    "point P must not coincide with its reference point (p > 0), got {}",
                    self.p
                ),
            ));
        }
        // l_f_est <= 0 (estimated centre of mass at or ahead of the front axle)
        // is unphysical but still a well-defined law; stability sweeps cross it
        if !self.l_f_est.is_finite() {
            return Err(Error::invalid(
                "l_f_est",
                format!("must be finite, got {}", self.l_f_est),
            ));
        }
        let m = self.singularity_margin;
        if !(m > 0.0 && m < std::f64::consts::FRAC_PI_2) {
            return Err(Error::invalid(
                "singularity_margin",
                format!("must lie in (0, pi/2), got {m}"),
            ));
        }
        Ok(self)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn l_f_est(&self) -> f64 {
        self.l_f_est
    }

    pub fn law(&self) -> Law {
        self.law
    }

    pub fn singularity_margin(&self) -> f64 {
        self.singularity_margin
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point) -> f64 {
        (self - other).norm()
    }
}

impl std::ops::Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

/// Desired velocity of point P [m/s].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PointVelocityCommand {
    pub v_px: f64,
    pub v_py: f64,
}

impl PointVelocityCommand {
    pub const fn new(v_px: f64, v_py: f64) -> Self {
        Self { v_px, v_py }
    }
}

/// Output of a linearising law. The variant fixes which steering channel it drives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ControlCommand {
    SteeringRate { v: f64, u_delta: f64 },
    SteeringAngle { v: f64, delta: f64 },
}

impl ControlCommand {
    pub fn law(&self) -> Law {
        match self {
            ControlCommand::SteeringRate { .. } => Law::FrontAxleOffset,
            ControlCommand::SteeringAngle { .. } => Law::VelocityDirection,
        }
    }

    pub fn speed(&self) -> f64 {
        match *self {
            ControlCommand::SteeringRate { v, .. } | ControlCommand::SteeringAngle { v, .. } => v,
        }
    }

    /// Steering-rate or steering-angle value, whichever the law produces.
    pub fn steering(&self) -> f64 {
        match *self {
            ControlCommand::SteeringRate { u_delta, .. } => u_delta,
            ControlCommand::SteeringAngle { delta, .. } => delta,
        }
    }

    /// Model input held over a controller step of length `dt`. A steering-angle
    /// command is tracked by a servo that reaches it at the end of the step.
    pub fn to_model_input(&self, state: &VehicleState, dt: f64) -> ModelInput {
        match *self {
            ControlCommand::SteeringRate { v, u_delta } => ModelInput::new(v, u_delta),
            ControlCommand::SteeringAngle { v, delta } => {
                ModelInput::new(v, (delta - state.delta) / dt)
            }
        }
    }
}

/// Position of P as seen through `cfg.l_f_est`. Pass a configuration whose
/// `l_f_est` equals the true `l_f` for the physical point.
pub fn point_p_position(state: &VehicleState, cfg: &LinearisationConfig) -> Point {
    let p = cfg.p;
    match cfg.law {
        Law::FrontAxleOffset => {
            let l = cfg.l_f_est;
            let steer = state.psi + state.delta;
            Point::new(
                state.x_g + l * state.psi.cos() + p * steer.cos(),
                state.y_g + l * state.psi.sin() + p * steer.sin(),
            )
        }
        Law::VelocityDirection => {
            let course = state.psi + state.beta;
            Point::new(state.x_g + p * course.cos(), state.y_g + p * course.sin())
        }
    }
}

/// Time derivative of [`point_p_position`] under `input`.
pub fn point_p_velocity(
    state: &VehicleState,
    input: &ModelInput,
    cfg: &LinearisationConfig,
    params: &VehicleParams,
) -> Result<Point> {
    let ModelInput { v, u_delta } = *input;
    let p = cfg.p;
    match cfg.law {
        Law::FrontAxleOffset => {
            let l = cfg.l_f_est;
            let VehicleState {
                psi,
                r,
                beta,
                delta,
                ..
            } = *state;
            let steer_rate = p * (r + u_delta);
            Ok(Point::new(
                v * (psi + beta).cos() - l * r * psi.sin() - steer_rate * (psi + delta).sin(),
                v * (psi + beta).sin() + l * r * psi.cos() + steer_rate * (psi + delta).cos(),
            ))
        }
        Law::VelocityDirection => {
            let d = dynamics(state, input, params)?;
            let course = state.psi + state.beta;
            let course_rate = d.psi + d.beta;
            Ok(Point::new(
                v * course.cos() - p * course_rate * course.sin(),
                v * course.sin() + p * course_rate * course.cos(),
            ))
        }
    }
}

fn require_law(cfg: &LinearisationConfig, expected: Law) -> Result<()> {
    if cfg.law != expected {
        return Err(Error::LawMismatch {
            expected: expected.name(),
            found: cfg.law.name(),
        });
    }
    Ok(())
}

fn front_axle_law(
    state: &VehicleState,
    cmd: &PointVelocityCommand,
    p: f64,
    l_f: f64,
    margin: f64,
) -> Result<ControlCommand> {
    let VehicleState {
        psi,
        r,
        beta,
        delta,
        ..
    } = *state;
    let slip = beta - delta;
    let c = slip.cos();
    if c.abs() <= margin.sin() {
        return Err(Error::Singularity {
            angle: slip,
            cos: c,
        });
    }
    let PointVelocityCommand { v_px, v_py } = *cmd;
    let v = (v_px * (psi + delta).cos() + v_py * (psi + delta).sin() - r * l_f * delta.sin()) / c;
    let u_delta = (v_py * (psi + beta).cos() - v_px * (psi + beta).sin() - r * l_f * beta.cos())
        / (p * c)
        - r;
    Ok(ControlCommand::SteeringRate { v, u_delta })
}

/// Front-axle law with the true centre-of-mass position `params.l_f`.
pub fn linearising_law_nominal(
    state: &VehicleState,
    cmd: &PointVelocityCommand,
    cfg: &LinearisationConfig,
    params: &VehicleParams,
) -> Result<ControlCommand> {
    require_law(cfg, Law::FrontAxleOffset)?;
    front_axle_law(state, cmd, cfg.p, params.l_f, cfg.singularity_margin)
}

/// Front-axle law with the estimate `cfg.l_f_est`.
///
/// Against the true model, P moves with `(v_Px + dl sin(psi) r, v_Py - dl cos(psi) r)`
/// where `dl = l_f_est - l_f`.
pub fn linearising_law_uncertain(
    state: &VehicleState,
    cmd: &PointVelocityCommand,
    cfg: &LinearisationConfig,
) -> Result<ControlCommand> {
    require_law(cfg, Law::FrontAxleOffset)?;
    front_axle_law(state, cmd, cfg.p, cfg.l_f_est, cfg.singularity_margin)
}

/// Velocity-direction law. Mass and stiffnesses come from `params`; the
/// centre of mass is placed at `cfg.l_f_est` behind the front axle on the
/// known wheelbase, so `l_r` is estimated as `l_f + l_r - l_f_est`.
pub fn linearising_law_alternative(
    state: &VehicleState,
    cmd: &PointVelocityCommand,
    cfg: &LinearisationConfig,
    params: &VehicleParams,
) -> Result<ControlCommand> {
    require_law(cfg, Law::VelocityDirection)?;
    let VehicleState { psi, r, beta, .. } = *state;
    let course = psi + beta;
    let (s, c) = course.sin_cos();
    let PointVelocityCommand { v_px, v_py } = *cmd;
    let v = v_px * c + v_py * s;
    if !(v.abs() > DEFAULT_SPEED_FLOOR) {
        return Err(Error::ZeroVelocity {
            v,
            floor: DEFAULT_SPEED_FLOOR,
        });
    }
    let omega = (v_py * c - v_px * s) / cfg.p;
    let l_f = cfg.l_f_est;
    let l_r = params.wheelbase() - l_f;
    let VehicleParams { m, c_f, c_r, .. } = *params;
    let delta =
        m * omega * v / c_f - (c_r * l_r - c_f * l_f) / c_f * r / v + (c_r + c_f) / c_f * beta;
    Ok(ControlCommand::SteeringAngle { v, delta })
}

/// Dispatches on `cfg.law`. The front-axle law uses `cfg.l_f_est`.
pub fn linearise(
    state: &VehicleState,
    cmd: &PointVelocityCommand,
    cfg: &LinearisationConfig,
    params: &VehicleParams,
) -> Result<ControlCommand> {
    match cfg.law {
        Law::FrontAxleOffset => linearising_law_uncertain(state, cmd, cfg),
        Law::VelocityDirection => linearising_law_alternative(state, cmd, cfg, params),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn params() -> VehicleParams {
        VehicleParams::default()
    }

    fn front(p: f64) -> LinearisationConfig {
        LinearisationConfig::new(Law::FrontAxleOffset, p, params().l_f).unwrap()
    }

    fn velocity_dir(p: f64) -> LinearisationConfig {
        LinearisationConfig::new(Law::VelocityDirection, p, params().l_f).unwrap()
    }

    #[test]
    fn config_rejects_zero_offset() {
        let err = LinearisationConfig::new(Law::FrontAxleOffset, 0.0, 0.1).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter { name: "p", .. }));
        assert!(LinearisationConfig::new(Law::FrontAxleOffset, 0.35, f64::NAN).is_err());
        assert!(LinearisationConfig::new(Law::FrontAxleOffset, 0.35, -0.1).is_ok());
        assert!(front(0.35).with_singularity_margin(FRAC_PI_2).is_err());
    }

    #[test]
    fn point_positions() {
        let s = VehicleState::default();
        let a = point_p_position(&s, &front(0.35));
        assert!((a.x - 0.4868).abs() < 1e-15 && a.y == 0.0);
        let b = point_p_position(&s, &velocity_dir(0.35));
        assert_eq!(b, Point::new(0.35, 0.0));
        let rotated = VehicleState {
            psi: FRAC_PI_2,
            ..Default::default()
        };
        let c = point_p_position(&rotated, &front(0.35));
        assert!(c.x.abs() < 1e-15 && (c.y - 0.4868).abs() < 1e-15);
    }

    #[test]
    fn point_velocities() {
        let cfg = front(0.35);
        let s = VehicleState::default();
        let a = point_p_velocity(&s, &ModelInput::new(1.0, 0.0), &cfg, &params()).unwrap();
        assert_eq!(a, Point::new(1.0, 0.0));
        let spinning = VehicleState {
            r: 1.0,
            ..Default::default()
        };
        let b = point_p_velocity(&spinning, &ModelInput::new(0.0, 0.0), &cfg, &params()).unwrap();
        assert_eq!(b.x, 0.0);
        assert!((b.y - 0.4868).abs() < 1e-15);
    }

    #[test]
    fn nominal_law_examples() {
        let cfg = front(0.35);
        let s = VehicleState::default();
        let a = linearising_law_nominal(&s, &PointVelocityCommand::new(1.0, 0.0), &cfg, &params())
            .unwrap();
        assert_eq!(
            a,
            ControlCommand::SteeringRate {
                v: 1.0,
                u_delta: 0.0
            }
        );
        let b = linearising_law_nominal(&s, &PointVelocityCommand::new(0.0, 1.0), &cfg, &params())
            .unwrap();
        assert_eq!(b.speed(), 0.0);
        assert!((b.steering() - 1.0 / 0.35).abs() < 1e-12);
        assert!((b.steering() - 2.857).abs() < 1e-3);
    }

    #[test]
    fn singular_slip_is_rejected() {
        let s = VehicleState {
            beta: 0.6,
            delta: 0.6 - FRAC_PI_2,
            ..Default::default()
        };
        let err = linearising_law_uncertain(&s, &PointVelocityCommand::new(1.0, 0.0), &front(0.35))
            .unwrap_err();
        assert!(matches!(err, Error::Singularity { .. }));
        // inside the envelope |beta| <= 40°, |delta| <= 40° the guard never fires
        let fine = VehicleState {
            beta: 40f64.to_radians(),
            delta: -40f64.to_radians(),
            ..Default::default()
        };
        assert!(linearising_law_uncertain(
            &fine,
            &PointVelocityCommand::new(1.0, 0.0),
            &front(0.35)
        )
        .is_ok());
    }

    #[test]
    fn uncertain_with_zero_deviation_equals_nominal() {
        let s = VehicleState {
            psi: 0.4,
            r: 0.7,
            beta: -0.1,
            delta: 0.2,
            x_g: 1.0,
            y_g: 2.0,
        };
        let cmd = PointVelocityCommand::new(0.3, -0.8);
        let cfg = front(0.35);
        assert_eq!(
            linearising_law_uncertain(&s, &cmd, &cfg).unwrap(),
            linearising_law_nominal(&s, &cmd, &cfg, &params()).unwrap()
        );
    }

    #[test]
    fn law_mismatch_is_reported() {
        let s = VehicleState::default();
        let cmd = PointVelocityCommand::new(1.0, 0.0);
        assert!(matches!(
            linearising_law_uncertain(&s, &cmd, &velocity_dir(0.35)),
            Err(Error::LawMismatch { .. })
        ));
        assert!(matches!(
            linearising_law_alternative(&s, &cmd, &front(0.35), &params()),
            Err(Error::LawMismatch { .. })
        ));
    }

    #[test]
    fn alternative_law_examples() {
        let cfg = velocity_dir(0.35);
        let s = VehicleState::default();
        let a =
            linearising_law_alternative(&s, &PointVelocityCommand::new(1.0, 0.0), &cfg, &params())
                .unwrap();
        assert_eq!(a, ControlCommand::SteeringAngle { v: 1.0, delta: 0.0 });

        let omega0 = 0.5;
        let b = linearising_law_alternative(
            &s,
            &PointVelocityCommand::new(1.0, 0.35 * omega0),
            &cfg,
            &params(),
        )
        .unwrap();
        assert_eq!(b.speed(), 1.0);
        assert!((b.steering() - 1.9 * 0.5 / 58.085).abs() < 1e-15);

        let err =
            linearising_law_alternative(&s, &PointVelocityCommand::new(0.0, 0.0), &cfg, &params())
                .unwrap_err();
        assert!(matches!(err, Error::ZeroVelocity { .. }));
    }

    #[test]
    fn steering_angle_command_becomes_one_step_servo() {
        let s = VehicleState {
            delta: 0.1,
            ..Default::default()
        };
        let cmd = ControlCommand::SteeringAngle { v: 1.0, delta: 0.2 };
        let u = cmd.to_model_input(&s, 0.01);
        assert!((u.u_delta - 10.0).abs() < 1e-12);
        assert_eq!(cmd.law(), Law::VelocityDirection);
    }
}
