//! Proportional point-P tracking around a linearising law, reference
//! generators and the pose-dropout disturbance.
//!
//! The pose channels `(psi, x_G, y_G)` come from an external tracker that
//! occasionally loses the vehicle; during an episode the controller keeps
//! the last pose it received. Yaw rate, sideslip and steering angle are
//! always fresh.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::Integrator;
use crate::linearise::{
    linearise, point_p_position, ControlCommand, Law, LinearisationConfig, Point,
    PointVelocityCommand,
};
use crate::model::{ModelInput, SingleTrack, VehicleParams, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingGains {
    /// [1/s]
    pub k_px: f64,
    /// [1/s]
    pub k_py: f64,
}

impl Default for TrackingGains {
    fn default() -> Self {
        Self {
            k_px: 1.0,
            k_py: 1.0,
        }
    }
}

impl TrackingGains {
    pub fn new(k_px: f64, k_py: f64) -> Result<Self> {
        let g = Self { k_px, k_py };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, k) in [("k_px", self.k_px), ("k_py", self.k_py)] {
            if !(k.is_finite() && k > 0.0) {
                return Err(Error::invalid(name, format!("gain must be > 0, got {k}")));
            }
        }
        Ok(())
    }
}

/// `v_P = K (P_ref - P_meas)`, per axis.
pub fn tracking_law(
    reference: Point,
    measured: Point,
    gains: &TrackingGains,
) -> PointVelocityCommand {
    PointVelocityCommand::new(
        gains.k_px * (reference.x - measured.x),
        gains.k_py * (reference.y - measured.y),
    )
}

/// Constant P-velocity command held for `duration` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub duration: f64,
    pub v_px: f64,
    pub v_py: f64,
}

/// Five 4 s steps, `v_Py` alternating in sign, `v_Px` kept positive.
pub fn default_step_schedule() -> Vec<Segment> {
    [(0.4, 0.2), (0.4, -0.2), (0.5, 0.1), (0.3, -0.2), (0.4, 0.0)]
        .into_iter()
        .map(|(v_px, v_py)| Segment {
            duration: 4.0,
            v_px,
            v_py,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ReferenceTrajectory {
    Circle {
        radius: f64,
        /// [rad/s]
        omega: f64,
        center: Point,
        phase: f64,
    },
    /// Running integral of the segment velocities, starting at `start`.
    PiecewiseConstantVelocity {
        start: Point,
        segments: Vec<Segment>,
    },
    /// Linear interpolation between strictly increasing time stamps.
    ExternalSamples { samples: Vec<(f64, Point)> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSample {
    pub position: Point,
    /// Time derivative of `position`; zero once a finite schedule has ended.
    pub feedforward: PointVelocityCommand,
}

impl ReferenceTrajectory {
    pub fn circle(radius: f64, omega: f64) -> Self {
        Self::Circle {
            radius,
            omega,
            center: Point::default(),
            phase: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Circle {
                radius,
                omega,
                center,
                phase,
            } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::invalid(
                        "radius",
                        format!("must be > 0, got {radius}"),
                    ));
                }
                if ![*omega, center.x, center.y, *phase]
                    .iter()
                    .all(|v| v.is_finite())
                {
                    return Err(Error::invalid(
                        "circle",
                        "omega, center and phase must be finite",
                    ));
                }
            }
            Self::PiecewiseConstantVelocity { start, segments } => {
                if !(start.x.is_finite() && start.y.is_finite()) {
                    return Err(Error::invalid("start", "must be finite"));
                }
                if segments.is_empty() {
                    return Err(Error::invalid("segments", "schedule is empty"));
                }
                for (i, s) in segments.iter().enumerate() {
                    if !(s.duration.is_finite() && s.duration > 0.0) {
                        return Err(Error::invalid(
                            "segments",
                            format!("segment {i}: duration must be > 0"),
                        ));
                    }
                    if !(s.v_px.is_finite() && s.v_py.is_finite()) {
                        return Err(Error::invalid(
                            "segments",
                            format!("segment {i}: velocity must be finite"),
                        ));
                    }
                }
            }
            Self::ExternalSamples { samples } => {
                if samples.is_empty() {
                    return Err(Error::invalid("samples", "no samples"));
                }
                if samples
                    .iter()
                    .any(|(t, p)| !(t.is_finite() && p.x.is_finite() && p.y.is_finite()))
                {
                    return Err(Error::invalid("samples", "non-finite entry"));
                }
                if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::invalid(
                        "samples",
                        "time stamps must be strictly increasing",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Time after which the reference is held, if any.
    pub fn end_time(&self) -> Option<f64> {
        match self {
            Self::Circle { .. } => None,
            Self::PiecewiseConstantVelocity { segments, .. } => {
                Some(segments.iter().map(|s| s.duration).sum())
            }
            Self::ExternalSamples { samples } => samples.last().map(|s| s.0),
        }
    }
}

/// Reference position and its derivative at time `t >= 0`.
pub fn reference_point(reference: &ReferenceTrajectory, t: f64) -> Result<ReferenceSample> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::invalid("t", format!("must be >= 0, got {t}")));
    }
    let hold = |position| ReferenceSample {
        position,
        feedforward: PointVelocityCommand::default(),
    };
    Ok(match reference {
        ReferenceTrajectory::Circle {
            radius,
            omega,
            center,
            phase,
        } => {
            let (s, c) = (omega * t + phase).sin_cos();
            ReferenceSample {
                position: Point::new(center.x + radius * c, center.y + radius * s),
                feedforward: PointVelocityCommand::new(-radius * omega * s, radius * omega * c),
            }
        }
        ReferenceTrajectory::PiecewiseConstantVelocity { start, segments } => {
            let mut p = *start;
            let mut t0 = 0.0;
            for s in segments {
                let t1 = t0 + s.duration;
                if t < t1 {
                    let tau = t - t0;
                    return Ok(ReferenceSample {
                        position: Point::new(p.x + s.v_px * tau, p.y + s.v_py * tau),
                        feedforward: PointVelocityCommand::new(s.v_px, s.v_py),
                    });
                }
                p = Point::new(p.x + s.v_px * s.duration, p.y + s.v_py * s.duration);
                t0 = t1;
            }
            hold(p)
        }
        ReferenceTrajectory::ExternalSamples { samples } => {
            let k = samples.partition_point(|(ts, _)| *ts <= t);
            if k == 0 {
                hold(samples[0].1)
            } else if k == samples.len() {
                hold(samples[k - 1].1)
            } else {
                let ((ta, a), (tb, b)) = (samples[k - 1], samples[k]);
                let w = (t - ta) / (tb - ta);
                ReferenceSample {
                    position: Point::new(a.x + w * (b.x - a.x), a.y + w * (b.y - a.y)),
                    feedforward: PointVelocityCommand::new(
                        (b.x - a.x) / (tb - ta),
                        (b.y - a.y) / (tb - ta),
                    ),
                }
            }
        }
    })
}

/// Pose measurements are missing on the open interval `(start, start + duration)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Episode {
    pub start: f64,
    pub duration: f64,
}

impl Episode {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    pub fn contains(&self, t: f64) -> bool {
        t > self.start && t < self.end()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub enum DropoutModel {
    #[default]
    Disabled,
    Episodes(Vec<Episode>),
    /// Poisson arrivals at `rate` [1/s] with durations uniform in
    /// `[duration_min, duration_max]`, drawn from a ChaCha8 stream seeded by `seed`.
    Stochastic {
        rate: f64,
        duration_min: f64,
        duration_max: f64,
        seed: u64,
    },
}

/// Sorts episodes and merges those that overlap or touch.
pub fn normalize_episodes(mut episodes: Vec<Episode>) -> Vec<Episode> {
    episodes.sort_by(|a, b| a.start.total_cmp(&b.start));
    let mut out: Vec<Episode> = Vec::with_capacity(episodes.len());
    for e in episodes {
        match out.last_mut() {
            Some(last) if e.start <= last.end() => {
                last.duration = last.end().max(e.end()) - last.start;
            }
            _ => out.push(e),
        }
    }
    out
}

impl DropoutModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Disabled => Ok(()),
            Self::Episodes(list) => {
                for (i, e) in list.iter().enumerate() {
                    if !(e.start.is_finite()
                        && e.start >= 0.0
                        && e.duration.is_finite()
                        && e.duration > 0.0)
                    {
                        return Err(Error::invalid(
                            "episodes",
                            format!("episode {i}: need start >= 0 and duration > 0"),
                        ));
                    }
                }
                Ok(())
            }
            Self::Stochastic {
                rate,
                duration_min,
                duration_max,
                ..
            } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return Err(Error::invalid("rate", format!("must be > 0, got {rate}")));
                }
                if !(duration_min.is_finite()
                    && *duration_min > 0.0
                    && duration_max >= duration_min
                    && duration_max.is_finite())
                {
                    return Err(Error::invalid(
                        "duration",
                        format!("need 0 < duration_min <= duration_max, got [{duration_min}, {duration_max}]"),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Normalized episodes starting before `horizon`.
    pub fn episodes(&self, horizon: f64) -> Result<Vec<Episode>> {
        self.validate()?;
        Ok(match self {
            Self::Disabled => Vec::new(),
            Self::Episodes(list) => {
                normalize_episodes(list.iter().copied().filter(|e| e.start < horizon).collect())
            }
            Self::Stochastic {
                rate,
                duration_min,
                duration_max,
                seed,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let gap = Exp::new(*rate).map_err(|e| Error::invalid("rate", e.to_string()))?;
                let length = Uniform::new_inclusive(*duration_min, *duration_max)
                    .map_err(|e| Error::invalid("duration", e.to_string()))?;
                let mut list = Vec::new();
                let mut t = 0.0;
                loop {
                    t += gap.sample(&mut rng);
                    if t >= horizon {
                        break;
                    }
                    let duration = length.sample(&mut rng);
                    list.push(Episode { start: t, duration });
                    t += duration;
                }
                normalize_episodes(list)
            }
        })
    }
}

/// Zero-order hold of the pose channels over dropout episodes. Feed samples in time order.
#[derive(Debug, Clone)]
pub struct DropoutFilter {
    episodes: Vec<Episode>,
    held: Option<VehicleState>,
}

impl DropoutFilter {
    pub fn new(episodes: Vec<Episode>) -> Self {
        Self {
            episodes: normalize_episodes(episodes),
            held: None,
        }
    }

    pub fn is_active(&self, t: f64) -> bool {
        self.episodes.iter().any(|e| e.contains(t))
    }

    /// Returns the measurement seen by the controller and whether the pose is held.
    pub fn filter(&mut self, t: f64, state: &VehicleState) -> (VehicleState, bool) {
        match self.held {
            Some(last) if self.is_active(t) => (
                VehicleState {
                    psi: last.psi,
                    x_g: last.x_g,
                    y_g: last.y_g,
                    ..*state
                },
                true,
            ),
            _ => {
                self.held = Some(*state);
                (*state, false)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub t: f64,
    pub state: VehicleState,
}

/// Replaces heading and position inside each episode by the last sample taken before it.
pub fn apply_dropout(stream: &[Measurement], model: &DropoutModel) -> Result<Vec<Measurement>> {
    let horizon = stream.last().map_or(0.0, |m| m.t);
    let mut filter = DropoutFilter::new(model.episodes(horizon)?);
    Ok(stream
        .iter()
        .map(|m| Measurement {
            t: m.t,
            state: filter.filter(m.t, &m.state).0,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingOptions {
    /// Add the reference derivative to the proportional command.
    pub feedforward: bool,
    /// Abort once `|delta|` exceeds this.
    pub steering_limit: Option<f64>,
    pub integrator: Integrator,
}

impl TrackingOptions {
    pub fn new(integrator: Integrator) -> Self {
        Self {
            feedforward: false,
            steering_limit: None,
            integrator,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub state: VehicleState,
    pub v_cmd: f64,
    /// Steering rate for the front-axle law, steering angle for the velocity-direction law.
    pub steering_cmd: f64,
    /// Physical point P.
    pub p: Point,
    pub p_ref: Point,
    /// Point P as the controller computes it from its measurement.
    pub p_meas: Point,
    pub command: PointVelocityCommand,
    pub dropout_active: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub law: Law,
    /// One row per controller sample, including `t = T`. The last row repeats the held command.
    pub rows: Vec<LogRow>,
}

impl RunLog {
    pub const CSV_HEADER: [&'static str; 16] = [
        "t",
        "x_G",
        "y_G",
        "psi",
        "r",
        "beta",
        "delta",
        "v_cmd",
        "u_delta_or_delta_cmd",
        "x_P",
        "y_P",
        "x_P_ref",
        "y_P_ref",
        "v_Px",
        "v_Py",
        "dropout_active",
    ];

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CSV_HEADER)?;
        for r in &self.rows {
            let s = &r.state;
            let values = [
                r.t,
                s.x_g,
                s.y_g,
                s.psi,
                s.r,
                s.beta,
                s.delta,
                r.v_cmd,
                r.steering_cmd,
                r.p.x,
                r.p.y,
                r.p_ref.x,
                r.p_ref.y,
                r.command.v_px,
                r.command.v_py,
            ];
            let mut record: Vec<String> = values.iter().map(|v| v.to_string()).collect();
            record.push(u8::from(r.dropout_active).to_string());
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn final_deviation(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.p.distance(r.p_ref))
    }

    pub fn max_deviation(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.p.distance(r.p_ref))
            .fold(0.0, f64::max)
    }

    pub fn rms_error(&self, from: f64) -> f64 {
        let e: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.t >= from)
            .map(|r| r.p.distance(r.p_ref))
            .collect();
        if e.is_empty() {
            return 0.0;
        }
        (e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64).sqrt()
    }
}

fn true_point(
    state: &VehicleState,
    cfg: &LinearisationConfig,
    params: &VehicleParams,
) -> Result<Point> {
    Ok(point_p_position(state, &cfg.with_l_f_est(params.l_f)?))
}

struct Applied {
    control: ControlCommand,
    p_ref: Point,
    p_meas: Point,
    command: PointVelocityCommand,
    dropout_active: bool,
}

/// Shared stepping loop: `command(t, measured, p_meas)` returns the P-velocity
/// command and the reference point logged for that sample.
fn simulate<F>(
    state0: VehicleState,
    params: &VehicleParams,
    cfg: &LinearisationConfig,
    dropout: &DropoutModel,
    options: &TrackingOptions,
    mut command: F,
) -> Result<RunLog>
where
    F: FnMut(f64, Point) -> Result<(PointVelocityCommand, Point)>,
{
    params.validate()?;
    let it = &options.integrator;
    let steps = it.steps();
    let mut filter = DropoutFilter::new(dropout.episodes(it.horizon)?);
    let model = SingleTrack::new(*params);
    let mut rows = Vec::with_capacity(steps + 1);
    let mut state = state0;
    let mut held: Option<Applied> = None;

    for k in 0..=steps {
        let t = k as f64 * it.dt;
        let p = true_point(&state, cfg, params)?;
        if k == steps {
            let (p_ref, active) = (command(t, p).map(|c| c.1).unwrap_or(p), filter.is_active(t));
            if let Some(a) = held {
                rows.push(LogRow {
                    t,
                    state,
                    v_cmd: a.control.speed(),
                    steering_cmd: a.control.steering(),
                    p,
                    p_ref,
                    p_meas: a.p_meas,
                    command: a.command,
                    dropout_active: active,
                });
            }
            break;
        }
        let step = |state: &VehicleState,
                    filter: &mut DropoutFilter,
                    command: &mut F|
         -> Result<(Applied, ModelInput)> {
            if let Some(limit) = options.steering_limit {
                state.check_steering(limit)?;
            }
            let (measured, dropout_active) = filter.filter(t, state);
            let p_meas = point_p_position(&measured, cfg);
            let (cmd, p_ref) = command(t, p_meas)?;
            let control = linearise(&measured, &cmd, cfg, params)?;
            let input = control.to_model_input(state, it.dt);
            Ok((
                Applied {
                    control,
                    p_ref,
                    p_meas,
                    command: cmd,
                    dropout_active,
                },
                input,
            ))
        };
        let (applied, input) = step(&state, &mut filter, &mut command).map_err(|e| e.at(t))?;
        rows.push(LogRow {
            t,
            state,
            v_cmd: applied.control.speed(),
            steering_cmd: applied.control.steering(),
            p,
            p_ref: applied.p_ref,
            p_meas: applied.p_meas,
            command: applied.command,
            dropout_active: applied.dropout_active,
        });
        held = Some(applied);
        state = it.step(&model, &state, &input).map_err(|e| e.at(t))?;
        if !state.is_finite() {
            return Err(Error::Diverged { t: t + it.dt });
        }
    }
    Ok(RunLog {
        law: cfg.law(),
        rows,
    })
}

/// Closed-loop tracking: proportional law on the measured P, then the linearising law.
pub fn run_tracking(
    reference: &ReferenceTrajectory,
    gains: &TrackingGains,
    dropout: &DropoutModel,
    state0: VehicleState,
    params: &VehicleParams,
    cfg: &LinearisationConfig,
    options: &TrackingOptions,
) -> Result<RunLog> {
    reference.validate()?;
    gains.validate()?;
    simulate(state0, params, cfg, dropout, options, |t, p_meas| {
        let r = reference_point(reference, t)?;
        let mut cmd = tracking_law(r.position, p_meas, gains);
        if options.feedforward {
            cmd.v_px += r.feedforward.v_px;
            cmd.v_py += r.feedforward.v_py;
        }
        Ok((cmd, r.position))
    })
}

/// Open-loop P-velocity steps. The logged reference is the nominal P path,
/// the integral of the commands from the true initial P.
pub fn run_open_loop(
    segments: &[Segment],
    dropout: &DropoutModel,
    state0: VehicleState,
    params: &VehicleParams,
    cfg: &LinearisationConfig,
    options: &TrackingOptions,
) -> Result<RunLog> {
    let nominal = ReferenceTrajectory::PiecewiseConstantVelocity {
        start: true_point(&state0, cfg, params)?,
        segments: segments.to_vec(),
    };
    nominal.validate()?;
    let end = nominal.end_time().unwrap_or(0.0);
    if options.integrator.horizon > end + 1e-9 {
        return Err(Error::invalid(
            "horizon",
            format!("exceeds the step schedule ({end} s); the command would drop to zero speed"),
        ));
    }
    simulate(state0, params, cfg, dropout, options, |t, _| {
        let r = reference_point(&nominal, t)?;
        Ok((r.feedforward, r.position))
    })
}

/// Vehicle state whose physical P sits at `p`, with heading `psi` and
/// zero yaw rate, sideslip and steering.
pub fn state_with_point(
    p: Point,
    psi: f64,
    params: &VehicleParams,
    cfg: &LinearisationConfig,
) -> Result<VehicleState> {
    let mut s = VehicleState {
        psi,
        ..Default::default()
    };
    let offset = true_point(&s, cfg, params)?;
    s.x_g = p.x - offset.x;
    s.y_g = p.y - offset.y;
    Ok(s)
}

/// Start for a circle run: P displaced `offset` outward from the reference
/// at `t = 0`, vehicle facing the reference point. With `offset = 0` the
/// vehicle faces along the circle.
pub fn circle_start(
    reference: &ReferenceTrajectory,
    offset: f64,
    params: &VehicleParams,
    cfg: &LinearisationConfig,
) -> Result<VehicleState> {
    let ReferenceTrajectory::Circle { center, .. } = reference else {
        return Err(Error::invalid(
            "reference",
            "circle start needs a circular reference",
        ));
    };
    let r0 = reference_point(reference, 0.0)?;
    let out = r0.position - *center;
    let n = out.norm();
    let p = Point::new(
        r0.position.x + offset * out.x / n,
        r0.position.y + offset * out.y / n,
    );
    let psi = if offset != 0.0 {
        (r0.position.y - p.y).atan2(r0.position.x - p.x)
    } else {
        r0.feedforward.v_py.atan2(r0.feedforward.v_px)
    };
    state_with_point(p, psi, params, cfg)
}

/// Least-squares fit `y = c + A cos(omega t - phi)`; returns `(A, phi, c)`.
pub fn fit_sinusoid(t: &[f64], y: &[f64], omega: f64) -> Result<(f64, f64, f64)> {
    if t.len() != y.len() || t.len() < 3 {
        return Err(Error::invalid(
            "sinusoid fit",
            "need at least three aligned samples",
        ));
    }
    let mut ata = Matrix3::zeros();
    let mut aty = Vector3::zeros();
    for (&ti, &yi) in t.iter().zip(y) {
        let row = Vector3::new((omega * ti).cos(), (omega * ti).sin(), 1.0);
        ata += row * row.transpose();
        aty += row * yi;
    }
    let coef = ata
        .lu()
        .solve(&aty)
        .ok_or_else(|| Error::invalid("sinusoid fit", "window too short for the frequency"))?;
    Ok((coef[0].hypot(coef[1]), coef[1].atan2(coef[0]), coef[2]))
}

fn wrap(angle: f64) -> f64 {
    let a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a - 2.0 * PI
    } else {
        a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrackingSummary {
    /// RMS of `| |P - c| - R |` over the steady window.
    pub rms_radial_error: f64,
    /// Actual over reference sinusoid amplitude.
    pub amplitude_ratio_x: f64,
    pub amplitude_ratio_y: f64,
    /// Positive when the actual P lags the reference [rad].
    pub phase_lag_x: f64,
    pub phase_lag_y: f64,
    /// First time after which the distance to the path stays within
    /// `0.05 R` of its steady value.
    pub convergence_time: Option<f64>,
    pub steady_window_start: f64,
}

/// Circle-tracking metrics over the second half of the run.
pub fn summarize_circle(log: &RunLog, reference: &ReferenceTrajectory) -> Result<TrackingSummary> {
    let ReferenceTrajectory::Circle {
        radius,
        omega,
        center,
        ..
    } = *reference
    else {
        return Err(Error::invalid(
            "reference",
            "summary needs a circular reference",
        ));
    };
    let horizon = log.rows.last().map_or(0.0, |r| r.t);
    let from = 0.5 * horizon;
    let steady: Vec<&LogRow> = log.rows.iter().filter(|r| r.t >= from).collect();
    let ts: Vec<f64> = steady.iter().map(|r| r.t).collect();
    let channel = |f: &dyn Fn(&LogRow) -> f64| steady.iter().map(|r| f(r)).collect::<Vec<f64>>();
    let (ax, phx, _) = fit_sinusoid(&ts, &channel(&|r| r.p.x), omega)?;
    let (ay, phy, _) = fit_sinusoid(&ts, &channel(&|r| r.p.y), omega)?;
    let (rx, prx, _) = fit_sinusoid(&ts, &channel(&|r| r.p_ref.x), omega)?;
    let (ry, pry, _) = fit_sinusoid(&ts, &channel(&|r| r.p_ref.y), omega)?;

    let dist = |r: &LogRow| ((r.p - center).norm() - radius).abs();
    let rms_radial_error =
        (steady.iter().map(|r| dist(r).powi(2)).sum::<f64>() / steady.len() as f64).sqrt();

    let tail_from = 0.75 * horizon;
    let tail: Vec<f64> = log
        .rows
        .iter()
        .filter(|r| r.t >= tail_from)
        .map(dist)
        .collect();
    let d_ss = tail.iter().sum::<f64>() / tail.len() as f64;
    let band = 0.05 * radius;
    let convergence_time = match log.rows.iter().rposition(|r| (dist(r) - d_ss).abs() > band) {
        None => Some(0.0),
        Some(i) if i + 1 < log.rows.len() && log.rows[i + 1].t < tail_from => {
            Some(log.rows[i + 1].t)
        }
        Some(_) => None,
    };

    Ok(TrackingSummary {
        rms_radial_error,
        amplitude_ratio_x: ax / rx,
        amplitude_ratio_y: ay / ry,
        phase_lag_x: wrap(phx - prx),
        phase_lag_y: wrap(phy - pry),
        convergence_time,
        steady_window_start: from,
    })
}

/// Ratio of the RMS tracking errors of a disturbed and an undisturbed run over `t >= from`.
pub fn error_inflation(disturbed: &RunLog, clean: &RunLog, from: f64) -> f64 {
    disturbed.rms_error(from) / clean.rms_error(from)
}
