//! Linear-tyre single-track (bicycle) model with a steering-rate channel.
//!
//! The lateral states `(r, beta)` follow the frozen-speed linear model,
//! the yaw angle integrates the yaw rate, the steering angle integrates the
//! steering-rate input, and the centre of mass moves along the velocity
//! direction `psi + beta`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest speed magnitude accepted by [`dynamics`].
pub const DEFAULT_SPEED_FLOOR: f64 = 1e-6;

/// Default steering range, ±50°.
pub const DEFAULT_STEERING_LIMIT: f64 = 50.0 * std::f64::consts::PI / 180.0;

/// Physical parameters of the vehicle. Defaults are the 1:10 scale platform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams {
    /// Mass [kg].
    pub m: f64,
    /// Yaw inertia about the centre of mass [kg m^2].
    pub i_z: f64,
    /// Centre of mass to front axle [m].
    pub l_f: f64,
    /// Centre of mass to rear axle [m].
    pub l_r: f64,
    /// Front cornering stiffness [N/rad].
    pub c_f: f64,
    /// Rear cornering stiffness [N/rad].
    pub c_r: f64,
    /// Tyre-ground friction coefficient. Carried as metadata; the linear
    /// tyre model folds friction into the cornering stiffnesses.
    pub mu: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            m: 1.9,
            i_z: 0.0251,
            l_f: 0.1368,
            l_r: 0.1232,
            c_f: 58.085,
            c_r: 130.805,
            mu: 0.25,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m", self.m),
            ("i_z", self.i_z),
            ("l_f", self.l_f),
            ("l_r", self.l_r),
            ("c_f", self.c_f),
            ("c_r", self.c_r),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::invalid(
                    name,
                    format!("must be finite and > 0, got {value}"),
                ));
            }
        }
        if !self.mu.is_finite() || self.mu < 0.0 {
            return Err(Error::invalid(
                "mu",
                format!("must be finite and >= 0, got {}", self.mu),
            ));
        }
        Ok(())
    }

    pub fn wheelbase(&self) -> f64 {
        self.l_f + self.l_r
    }

    /// Physically meaningful centre-of-mass deviations `[-l_f, l_r]`.
    pub fn physical_dl_range(&self) -> (f64, f64) {
        (-self.l_f, self.l_r)
    }
}

/// Full state of the vehicle. Angles are not wrapped.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub psi: f64,
    pub r: f64,
    pub beta: f64,
    pub delta: f64,
    pub x_g: f64,
    pub y_g: f64,
}

impl VehicleState {
    pub const DIM: usize = 6;

    pub fn to_array(self) -> [f64; 6] {
        [self.psi, self.r, self.beta, self.delta, self.x_g, self.y_g]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            psi: a[0],
            r: a[1],
            beta: a[2],
            delta: a[3],
            x_g: a[4],
            y_g: a[5],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// `self + h * rate`, component-wise.
    pub fn add_scaled(self, h: f64, rate: &VehicleState) -> Self {
        let a = self.to_array();
        let b = rate.to_array();
        Self::from_array(std::array::from_fn(|i| a[i] + h * b[i]))
    }

    pub fn check_steering(&self, limit: f64) -> Result<()> {
        if self.delta.abs() > limit {
            return Err(Error::SteeringRange {
                delta: self.delta,
                limit,
            });
        }
        Ok(())
    }
}

/// Inputs of the model: speed and steering rate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelInput {
    pub v: f64,
    pub u_delta: f64,
}

impl ModelInput {
    pub fn new(v: f64, u_delta: f64) -> Self {
        Self { v, u_delta }
    }
}

/// Coefficients of the lateral model at a frozen speed:
/// `r' = a_rb beta + a_rr r + a_rd delta`, `beta' = a_bb beta + a_br r + a_bd delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LateralCoefficients {
    pub a_rb: f64,
    pub a_rr: f64,
    pub a_rd: f64,
    pub a_bb: f64,
    pub a_br: f64,
    pub a_bd: f64,
}

impl LateralCoefficients {
    pub fn at(params: &VehicleParams, v: f64) -> Self {
        let VehicleParams {
            m,
            i_z,
            l_f,
            l_r,
            c_f,
            c_r,
            ..
        } = *params;
        let moment = c_r * l_r - c_f * l_f;
        Self {
            a_rb: moment / i_z,
            a_rr: -(c_f * l_f * l_f + c_r * l_r * l_r) / (i_z * v),
            a_rd: c_f * l_f / i_z,
            a_bb: -(c_f + c_r) / (m * v),
            a_br: moment / (m * v * v) - 1.0,
            a_bd: c_f / (m * v),
        }
    }

    /// Spectral radius of the frozen-speed `(r, beta)` block.
    pub fn stiffness_bound(&self) -> f64 {
        let half_trace = 0.5 * (self.a_rr + self.a_bb);
        let det = self.a_rr * self.a_bb - self.a_rb * self.a_br;
        let disc = half_trace * half_trace - det;
        if disc >= 0.0 {
            let root = disc.sqrt();
            (half_trace + root).abs().max((half_trace - root).abs())
        } else {
            det.sqrt()
        }
    }
}

/// Single-track model with an explicit speed floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleTrack {
    pub params: VehicleParams,
    pub speed_floor: f64,
}

impl SingleTrack {
    pub fn new(params: VehicleParams) -> Self {
        Self {
            params,
            speed_floor: DEFAULT_SPEED_FLOOR,
        }
    }

    pub fn with_speed_floor(mut self, floor: f64) -> Self {
        self.speed_floor = floor;
        self
    }

    pub fn derivative(&self, state: &VehicleState, input: &ModelInput) -> Result<VehicleState> {
        let v = input.v;
        if !(v.abs() > self.speed_floor) {
            return Err(Error::SpeedBelowFloor {
                v,
                floor: self.speed_floor,
            });
        }
        let k = LateralCoefficients::at(&self.params, v);
        let VehicleState {
            psi,
            r,
            beta,
            delta,
            ..
        } = *state;
        let heading = psi + beta;
        Ok(VehicleState {
            psi: r,
            r: k.a_rb * beta + k.a_rr * r + k.a_rd * delta,
            beta: k.a_bb * beta + k.a_br * r + k.a_bd * delta,
            delta: input.u_delta,
            x_g: v * heading.cos(),
            y_g: v * heading.sin(),
        })
    }
}

/// State derivative `(psi', r', beta', delta', x_G', y_G')` with the default speed floor.
pub fn dynamics(
    state: &VehicleState,
    input: &ModelInput,
    params: &VehicleParams,
) -> Result<VehicleState> {
    SingleTrack::new(*params).derivative(state, input)
}
