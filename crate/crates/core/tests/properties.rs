use std::f64::consts::PI;

use fblin_core::linearise::{
    linearising_law_alternative, linearising_law_nominal, linearising_law_uncertain,
    point_p_velocity, ControlCommand, Law, LinearisationConfig, PointVelocityCommand, DEFAULT_P,
};
use fblin_core::model::{dynamics, ModelInput, VehicleParams, VehicleState};
use fblin_core::Error;
use proptest::prelude::*;

const DEG: f64 = PI / 180.0;

fn params() -> VehicleParams {
    VehicleParams::default()
}

fn front(l_f_est: f64) -> LinearisationConfig {
    LinearisationConfig::new(Law::FrontAxleOffset, DEFAULT_P, l_f_est).unwrap()
}

prop_compose! {
    fn envelope_state()(
        psi in -PI..PI,
        r in -3.0..3.0f64,
        beta in -40.0 * DEG..40.0 * DEG,
        delta in -50.0 * DEG..50.0 * DEG,
        x_g in -10.0..10.0f64,
        y_g in -10.0..10.0f64,
    ) -> VehicleState {
        VehicleState { psi, r, beta, delta, x_g, y_g }
    }
}

prop_compose! {
    fn command()(v_px in -2.0..2.0f64, v_py in -2.0..2.0f64) -> PointVelocityCommand {
        PointVelocityCommand::new(v_px, v_py)
    }
}

fn rate(c: ControlCommand) -> ModelInput {
    let ControlCommand::SteeringRate { v, u_delta } = c else {
        panic!("expected a steering-rate command")
    };
    ModelInput::new(v, u_delta)
}

fn off_singular(s: &VehicleState) -> bool {
    (s.beta - s.delta).cos().abs() > (5.0 * DEG).sin()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn nominal_law_reproduces_command(s in envelope_state(), cmd in command()) {
        prop_assume!(off_singular(&s));
        let p = params();
        let cfg = front(p.l_f);
        let input = rate(linearising_law_nominal(&s, &cmd, &cfg, &p).unwrap());
        prop_assume!(input.v.abs() > 1e-6);
        let vel = point_p_velocity(&s, &input, &cfg, &p).unwrap();
        let scale = cmd.v_px.hypot(cmd.v_py).max(1.0);
        prop_assert!((vel.x - cmd.v_px).abs() <= 1e-12 * scale, "{} vs {}", vel.x, cmd.v_px);
        prop_assert!((vel.y - cmd.v_py).abs() <= 1e-12 * scale, "{} vs {}", vel.y, cmd.v_py);
    }

    #[test]
    fn deviation_adds_yaw_rate_residual(s in envelope_state(), cmd in command(), dl in -0.1368..0.1232f64) {
        prop_assume!(off_singular(&s));
        let p = params();
        let input = rate(linearising_law_uncertain(&s, &cmd, &front(p.l_f + dl)).unwrap());
        let vel = point_p_velocity(&s, &input, &front(p.l_f), &p).unwrap();
        let rx = vel.x - cmd.v_px - dl * s.psi.sin() * s.r;
        let ry = vel.y - cmd.v_py + dl * s.psi.cos() * s.r;
        prop_assert!(rx.abs() + ry.abs() <= 1e-10, "{rx} {ry}");
    }

    #[test]
    fn front_axle_law_is_rotation_equivariant(s in envelope_state(), cmd in command(), theta in -PI..PI) {
        prop_assume!(off_singular(&s));
        let p = params();
        let cfg = front(p.l_f);
        let a = rate(linearising_law_nominal(&s, &cmd, &cfg, &p).unwrap());
        let (st, ct) = theta.sin_cos();
        let turned = VehicleState { psi: s.psi + theta, ..s };
        let cmd_turned = PointVelocityCommand::new(ct * cmd.v_px - st * cmd.v_py, st * cmd.v_px + ct * cmd.v_py);
        let b = rate(linearising_law_nominal(&turned, &cmd_turned, &cfg, &p).unwrap());
        let scale = a.v.abs().max(a.u_delta.abs()).max(1.0);
        prop_assert!((a.v - b.v).abs() <= 1e-11 * scale);
        prop_assert!((a.u_delta - b.u_delta).abs() <= 1e-11 * scale);
    }

    #[test]
    fn alternative_law_assigns_course_rate(s in envelope_state(), cmd in command()) {
        let p = params();
        let cfg = LinearisationConfig::new(Law::VelocityDirection, DEFAULT_P, p.l_f).unwrap();
        let course = s.psi + s.beta;
        let v = cmd.v_px * course.cos() + cmd.v_py * course.sin();
        prop_assume!(v.abs() > 0.05);
        let ControlCommand::SteeringAngle { v: v_law, delta } = linearising_law_alternative(&s, &cmd, &cfg, &p).unwrap() else {
            panic!("expected a steering-angle command")
        };
        prop_assert!((v_law - v).abs() <= 1e-14);
        let steered = VehicleState { delta, ..s };
        let d = dynamics(&steered, &ModelInput::new(v, 0.0), &p).unwrap();
        let omega = (cmd.v_py * course.cos() - cmd.v_px * course.sin()) / DEFAULT_P;
        prop_assert!((d.psi + d.beta - omega).abs() <= 1e-10 * omega.abs().max(1.0), "{} vs {omega}", d.psi + d.beta);
        let vel = point_p_velocity(&steered, &ModelInput::new(v, 0.0), &cfg, &p).unwrap();
        prop_assert!((vel.x - cmd.v_px).abs() <= 1e-10 && (vel.y - cmd.v_py).abs() <= 1e-10);
    }

    #[test]
    fn lateral_model_is_affine_at_frozen_speed(
        s1 in envelope_state(),
        s2 in envelope_state(),
        alpha in 0.0..1.0f64,
        v in 0.05..5.0f64,
        u in -2.0..2.0f64,
    ) {
        let p = params();
        let input = ModelInput::new(v, u);
        let mix = VehicleState {
            r: alpha * s1.r + (1.0 - alpha) * s2.r,
            beta: alpha * s1.beta + (1.0 - alpha) * s2.beta,
            delta: alpha * s1.delta + (1.0 - alpha) * s2.delta,
            ..s1
        };
        let (d1, d2, dm) = (
            dynamics(&s1, &input, &p).unwrap(),
            dynamics(&s2, &input, &p).unwrap(),
            dynamics(&mix, &input, &p).unwrap(),
        );
        for (a, b, m) in [(d1.r, d2.r, dm.r), (d1.beta, d2.beta, dm.beta), (d1.delta, d2.delta, dm.delta)] {
            let expected = alpha * a + (1.0 - alpha) * b;
            prop_assert!((m - expected).abs() <= 1e-9 * expected.abs().max(1.0), "{m} vs {expected}");
        }
    }

    #[test]
    fn centre_of_mass_speed_is_commanded_speed(s in envelope_state(), v in -5.0..5.0f64) {
        prop_assume!(v.abs() > 1e-3);
        let d = dynamics(&s, &ModelInput::new(v, 0.0), &params()).unwrap();
        prop_assert!((d.x_g.hypot(d.y_g) - v.abs()).abs() <= 1e-14 * v.abs().max(1.0));
    }

    #[test]
    fn straight_running_is_invariant(psi in -PI..PI, v in 1e-3..10.0f64) {
        let s = VehicleState { psi, ..Default::default() };
        let d = dynamics(&s, &ModelInput::new(v, 0.0), &params()).unwrap();
        prop_assert_eq!((d.psi, d.r, d.beta, d.delta), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn singular_set_is_rejected(psi in -PI..PI, delta in -50.0 * DEG..50.0 * DEG, off in -4.9 * DEG..4.9 * DEG, cmd in command()) {
        let s = VehicleState { psi, delta, beta: delta + PI / 2.0 + off, ..Default::default() };
        let p = params();
        let r = linearising_law_nominal(&s, &cmd, &front(p.l_f), &p);
        prop_assert!(matches!(r, Err(Error::Singularity { .. })), "{r:?}");
    }
}
