//! Fixed-step RK4 with a zero-order-hold controller.
//!
//! The controller is sampled once per step of length `dt` and its output is
//! held over the step. Each step may be split into equal RK4 substeps; the
//! lateral modes of the single-track model scale like `1/v` and are stiff
//! at low speed, so by default the substep count is derived from the
//! frozen-speed stiffness bound of the held input.

use crate::error::{Error, Result};
use crate::model::{LateralCoefficients, ModelInput, SingleTrack, VehicleParams, VehicleState};

/// Default controller period (100 Hz).
pub const DEFAULT_DT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Substeps {
    /// Always this many RK4 substeps per controller step.
    Fixed(usize),
    /// Enough substeps that `stiffness_bound * h <= max_lambda_h`, capped at `limit`.
    Stiffness { max_lambda_h: f64, limit: usize },
}

impl Default for Substeps {
    fn default() -> Self {
        Substeps::Stiffness {
            max_lambda_h: 1.0,
            limit: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integrator {
    pub dt: f64,
    pub horizon: f64,
    pub substeps: Substeps,
}

/// States sampled every `dt`, including the initial one. `inputs[k]` is the
/// input held over `[times[k], times[k+1])`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<VehicleState>,
    pub inputs: Vec<ModelInput>,
}

impl Trajectory {
    pub fn last(&self) -> Option<&VehicleState> {
        self.states.last()
    }
}

impl Integrator {
    pub fn new(dt: f64, horizon: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid("dt", format!("must be > 0, got {dt}")));
        }
        if !(horizon.is_finite() && horizon >= dt) {
            return Err(Error::invalid(
                "horizon",
                format!("must be >= dt = {dt}, got {horizon}"),
            ));
        }
        Ok(Self {
            dt,
            horizon,
            substeps: Substeps::default(),
        })
    }

    pub fn with_substeps(mut self, substeps: Substeps) -> Self {
        self.substeps = substeps;
        self
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    fn substep_count(&self, model: &SingleTrack, input: &ModelInput) -> Result<usize> {
        match self.substeps {
            Substeps::Fixed(n) => Ok(n.max(1)),
            Substeps::Stiffness {
                max_lambda_h,
                limit,
            } => {
                if !(input.v.abs() > model.speed_floor) {
                    // dynamics() reports the floor violation
                    return Ok(1);
                }
                let rho = LateralCoefficients::at(&model.params, input.v).stiffness_bound();
                let n = (self.dt * rho / max_lambda_h).ceil().max(1.0);
                if !n.is_finite() || n > limit as f64 {
                    return Err(Error::TooStiff {
                        required: if n.is_finite() {
                            n as usize
                        } else {
                            usize::MAX
                        },
                        limit,
                    });
                }
                Ok(n as usize)
            }
        }
    }

    /// Advances `state` over one controller step with `input` held.
    pub fn step(
        &self,
        model: &SingleTrack,
        state: &VehicleState,
        input: &ModelInput,
    ) -> Result<VehicleState> {
        let n = self.substep_count(model, input)?;
        let h = self.dt / n as f64;
        let mut s = *state;
        for _ in 0..n {
            s = rk4(model, &s, input, h)?;
        }
        Ok(s)
    }

    pub fn run<C>(
        &self,
        state0: VehicleState,
        params: &VehicleParams,
        mut controller: C,
    ) -> Result<Trajectory>
    where
        C: FnMut(f64, &VehicleState) -> Result<ModelInput>,
    {
        let model = SingleTrack::new(*params);
        let steps = self.steps();
        let mut traj = Trajectory {
            times: Vec::with_capacity(steps + 1),
            states: Vec::with_capacity(steps + 1),
            inputs: Vec::with_capacity(steps),
        };
        traj.times.push(0.0);
        traj.states.push(state0);
        let mut state = state0;
        for k in 0..steps {
            let t = k as f64 * self.dt;
            let input = controller(t, &state).map_err(|e| e.at(t))?;
            state = self.step(&model, &state, &input).map_err(|e| e.at(t))?;
            let t_next = (k + 1) as f64 * self.dt;
            if !state.is_finite() {
                return Err(Error::Diverged { t: t_next });
            }
            traj.times.push(t_next);
            traj.states.push(state);
            traj.inputs.push(input);
        }
        Ok(traj)
    }
}

fn rk4(model: &SingleTrack, s: &VehicleState, u: &ModelInput, h: f64) -> Result<VehicleState> {
    let k1 = model.derivative(s, u)?;
    let k2 = model.derivative(&s.add_scaled(0.5 * h, &k1), u)?;
    let k3 = model.derivative(&s.add_scaled(0.5 * h, &k2), u)?;
    let k4 = model.derivative(&s.add_scaled(h, &k3), u)?;
    let a = s.to_array();
    let (b1, b2, b3, b4) = (k1.to_array(), k2.to_array(), k3.to_array(), k4.to_array());
    Ok(VehicleState::from_array(std::array::from_fn(|i| {
        a[i] + h / 6.0 * (b1[i] + 2.0 * b2[i] + 2.0 * b3[i] + b4[i])
    })))
}

/// Integrates with the default substep policy.
pub fn integrate<C>(
    state0: VehicleState,
    controller: C,
    params: &VehicleParams,
    dt: f64,
    horizon: f64,
) -> Result<Trajectory>
where
    C: FnMut(f64, &VehicleState) -> Result<ModelInput>,
{
    Integrator::new(dt, horizon)?.run(state0, params, controller)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> VehicleParams {
        VehicleParams::default()
    }

    #[test]
    fn straight_running_stays_put() {
        let s0 = VehicleState {
            psi: 0.3,
            ..Default::default()
        };
        let traj = integrate(
            s0,
            |_, _| Ok(ModelInput::new(1.0, 0.0)),
            &params(),
            0.01,
            2.0,
        )
        .unwrap();
        let end = traj.last().unwrap();
        assert_eq!(end.psi, 0.3);
        assert_eq!(end.r, 0.0);
        assert_eq!(end.beta, 0.0);
        assert_eq!(traj.states.len(), 201);
        assert_eq!(traj.inputs.len(), 200);
    }

    #[test]
    fn pure_translation() {
        let traj = integrate(
            VehicleState::default(),
            |_, _| Ok(ModelInput::new(1.0, 0.0)),
            &params(),
            0.01,
            1.0,
        )
        .unwrap();
        let end = traj.last().unwrap();
        assert!((end.x_g - 1.0).abs() < 1e-12);
        assert_eq!(end.y_g, 0.0);
    }

    #[test]
    fn rejects_bad_step() {
        assert!(Integrator::new(0.0, 1.0).is_err());
        assert!(Integrator::new(0.1, 0.05).is_err());
    }

    #[test]
    fn controller_errors_carry_timestamp() {
        let err = integrate(
            VehicleState::default(),
            |t, _| Ok(ModelInput::new(if t > 0.5 { 0.0 } else { 1.0 }, 0.0)),
            &params(),
            0.1,
            1.0,
        )
        .unwrap_err();
        match err {
            Error::AtTime { t, source } => {
                assert!((t - 0.6).abs() < 1e-9);
                assert!(matches!(*source, Error::SpeedBelowFloor { .. }));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn stiffness_substeps_grow_at_low_speed() {
        let model = SingleTrack::new(params());
        let it = Integrator::new(0.01, 1.0).unwrap();
        let slow = it
            .substep_count(&model, &ModelInput::new(0.1, 0.0))
            .unwrap();
        let fast = it
            .substep_count(&model, &ModelInput::new(2.0, 0.0))
            .unwrap();
        assert!(slow > 3 * fast, "{slow} vs {fast}");
        assert!(slow >= 10);
    }

    #[test]
    fn single_step_rk4_blows_up_on_stiff_lateral_modes() {
        let s0 = VehicleState {
            beta: 0.05,
            ..Default::default()
        };
        let stiff = Integrator::new(0.01, 5.0)
            .unwrap()
            .with_substeps(Substeps::Fixed(1));
        let r = stiff.run(s0, &params(), |_, _| Ok(ModelInput::new(0.3, 0.0)));
        let blew_up = match r {
            Err(_) => true,
            Ok(t) => t.last().unwrap().beta.abs() > 1.0,
        };
        assert!(blew_up);
        let ok = Integrator::new(0.01, 5.0)
            .unwrap()
            .run(s0, &params(), |_, _| Ok(ModelInput::new(0.3, 0.0)))
            .unwrap();
        assert!(ok.last().unwrap().beta.abs() < 1e-6);
    }
}
