//! Scenario files. Every section is optional and falls back to the
//! defaults below; unknown keys are rejected.

use std::path::{Path, PathBuf};

use fblin_core::analysis::{SweepGrid, SweepOptions, DEFAULT_PSI_BAR};
use fblin_core::control::{
    default_step_schedule, DropoutModel, Episode, ReferenceTrajectory, Segment, TrackingGains,
    TrackingOptions,
};
use fblin_core::integrate::{Integrator, Substeps};
use fblin_core::linearise::{Law, LinearisationConfig, Point, DEFAULT_P};
use fblin_core::model::VehicleParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    #[default]
    OpenLoopSteps,
    CircleTracking,
    StabilitySweep,
    HopfThreshold,
    Custom,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::OpenLoopSteps => "open-loop-steps",
            ExperimentKind::CircleTracking => "circle-tracking",
            ExperimentKind::StabilitySweep => "stability-sweep",
            ExperimentKind::HopfThreshold => "hopf-threshold",
            ExperimentKind::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub vehicle: VehicleParams,
    pub linearisation: LinearisationSection,
    pub integrator: IntegratorSection,
    pub dropout: DropoutSection,
    pub tracking: TrackingSection,
    pub open_loop: OpenLoopSection,
    pub sweep: SweepSection,
    pub hopf: HopfSection,
    pub custom: CustomSection,
    pub output: OutputSection,
}

/// `dl` and `l_f_est` are alternative spellings of the centre-of-mass
/// estimate; at most one may be given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearisationSection {
    pub law: Law,
    pub p: f64,
    pub dl: Option<f64>,
    pub l_f_est: Option<f64>,
    pub singularity_margin_deg: f64,
}

impl Default for LinearisationSection {
    fn default() -> Self {
        Self {
            law: Law::FrontAxleOffset,
            p: DEFAULT_P,
            dl: None,
            l_f_est: None,
            singularity_margin_deg: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSection {
    pub dt: f64,
    /// Defaults per experiment: the schedule length for open-loop steps,
    /// 60 s for circle tracking, the reference length for custom runs.
    pub horizon: Option<f64>,
    /// RK4 substeps keep `stiffness * h` at or below this.
    pub max_lambda_h: f64,
    pub max_substeps: usize,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        Self {
            dt: 0.01,
            horizon: None,
            max_lambda_h: 1.0,
            max_substeps: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropoutMode {
    #[default]
    Disabled,
    Episodes,
    Stochastic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DropoutSection {
    pub mode: DropoutMode,
    pub episodes: Vec<Episode>,
    /// Episode arrival rate [1/s] in stochastic mode.
    pub rate: f64,
    pub duration_min: f64,
    pub duration_max: f64,
    /// Falls back to the scenario seed.
    pub seed: Option<u64>,
}

impl Default for DropoutSection {
    fn default() -> Self {
        Self {
            mode: DropoutMode::Disabled,
            episodes: Vec::new(),
            rate: 0.2,
            duration_min: 0.1,
            duration_max: 0.3,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackingSection {
    pub radius: f64,
    pub omega: f64,
    pub center: [f64; 2],
    pub phase: f64,
    pub k_px: f64,
    pub k_py: f64,
    /// Initial radial offset of P from the reference [m].
    pub start_offset: f64,
    pub feedforward: bool,
    pub steering_limit_deg: Option<f64>,
}

impl Default for TrackingSection {
    fn default() -> Self {
        Self {
            radius: 1.0,
            omega: 0.5,
            center: [0.0, 0.0],
            phase: 0.0,
            k_px: 1.0,
            k_py: 1.0,
            start_offset: 0.3,
            feedforward: false,
            steering_limit_deg: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OpenLoopSection {
    pub segments: Vec<Segment>,
}

impl Default for OpenLoopSection {
    fn default() -> Self {
        Self {
            segments: default_step_schedule(),
        }
    }
}

/// Speeds come from `v_bars` when given, otherwise from the evenly spaced
/// range `v_min..=v_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub v_bars: Option<Vec<f64>>,
    pub v_min: f64,
    pub v_max: f64,
    pub v_step: f64,
    pub dl_min: f64,
    pub dl_max: f64,
    pub dl_step: f64,
    pub psi_bar: f64,
    pub cross_check: bool,
    pub locate_boundaries: bool,
    pub parallel: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            v_bars: None,
            v_min: 0.1,
            v_max: 5.0,
            v_step: 0.1,
            dl_min: -0.70,
            dl_max: 0.20,
            dl_step: 0.001,
            psi_bar: DEFAULT_PSI_BAR,
            cross_check: true,
            locate_boundaries: true,
            parallel: true,
        }
    }
}

/// Without a `bracket`, each speed is scanned over `[scan_min, scan_max]`
/// (default: the physical range `[-l_f, l_r]`) at `scan_step` and every
/// verdict change is bisected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HopfSection {
    pub v_bars: Vec<f64>,
    pub bracket: Option<[f64; 2]>,
    pub scan_min: Option<f64>,
    pub scan_max: Option<f64>,
    pub scan_step: f64,
    pub psi_bar: f64,
}

impl Default for HopfSection {
    fn default() -> Self {
        Self {
            v_bars: vec![0.1, 0.5, 1.0, 2.0, 3.0],
            bracket: None,
            scan_min: None,
            scan_max: None,
            scan_step: 0.001,
            psi_bar: DEFAULT_PSI_BAR,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CustomReference {
    /// Piecewise-linear through `samples = [[t, x, y], ...]`.
    #[default]
    Samples,
    /// Integral of `segments` starting at `start`.
    Segments,
}

/// Closed-loop tracking of a user-supplied reference with the gains of
/// `[tracking]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CustomSection {
    pub reference: CustomReference,
    pub samples: Vec<[f64; 3]>,
    pub segments: Vec<Segment>,
    pub start: [f64; 2],
    /// Initial physical P; defaults to the reference at `t = 0`.
    pub initial_p: Option<[f64; 2]>,
    pub initial_psi: f64,
}

impl Default for CustomSection {
    fn default() -> Self {
        Self {
            reference: CustomReference::Samples,
            samples: Vec::new(),
            segments: Vec::new(),
            start: [0.0, 0.0],
            initial_p: None,
            initial_psi: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Emit the stability-map SVG for sweeps.
    pub plot: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            plot: true,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CliError::config(
            path,
            format!("must be finite and > 0, got {v}"),
        ))
    }
}

fn finite(path: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(CliError::config(path, format!("must be finite, got {v}")))
    }
}

/// Grid values rounded to 12 significant digits so that `0.1 + 2 * 0.1`
/// prints as `0.3`.
fn tidy(v: f64) -> f64 {
    if v == 0.0 {
        return 0.0;
    }
    let scale = 10f64.powi(11 - v.abs().log10().floor() as i32);
    (v * scale).round() / scale
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de =
            toml::Deserializer::parse(text).map_err(|e| CliError::config("config", e.message()))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let path = if path == "." {
                "config".to_string()
            } else {
                path
            };
            CliError::config(path, e.inner().message())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(dir) = &o.out {
            self.output.dir = dir.clone();
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(dt) = o.dt {
            self.integrator.dt = dt;
        }
        if let Some(h) = o.horizon {
            self.integrator.horizon = Some(h);
        }
    }

    /// Checks every section, including those the chosen experiment does not read.
    pub fn validate(&self) -> Result<()> {
        self.vehicle
            .validate()
            .map_err(|e| CliError::in_section("vehicle", e))?;
        self.linearisation_config()?;
        positive("integrator.dt", self.integrator.dt)?;
        if let Some(h) = self.integrator.horizon {
            positive("integrator.horizon", h)?;
            if h < self.integrator.dt {
                return Err(CliError::config(
                    "integrator.horizon",
                    format!("must be >= dt = {}", self.integrator.dt),
                ));
            }
        }
        positive("integrator.max_lambda_h", self.integrator.max_lambda_h)?;
        if self.integrator.max_substeps == 0 {
            return Err(CliError::config("integrator.max_substeps", "must be >= 1"));
        }
        self.dropout_model()?
            .validate()
            .map_err(|e| CliError::in_section("dropout", e))?;
        self.tracking_gains()?;
        self.circle()?;
        finite("tracking.start_offset", self.tracking.start_offset)?;
        if let Some(l) = self.tracking.steering_limit_deg {
            positive("tracking.steering_limit_deg", l)?;
        }
        for (i, s) in self.open_loop.segments.iter().enumerate() {
            positive(&format!("open_loop.segments[{i}].duration"), s.duration)?;
            finite(&format!("open_loop.segments[{i}].v_px"), s.v_px)?;
            finite(&format!("open_loop.segments[{i}].v_py"), s.v_py)?;
        }
        if self.open_loop.segments.is_empty() {
            return Err(CliError::config("open_loop.segments", "is empty"));
        }
        self.sweep_grid()?;
        self.validate_hopf()?;
        if self.experiment == ExperimentKind::Custom {
            self.custom_reference()?;
        }
        Ok(())
    }

    pub fn linearisation_config(&self) -> Result<LinearisationConfig> {
        let s = &self.linearisation;
        let l_f_est = match (s.dl, s.l_f_est) {
            (Some(_), Some(_)) => {
                return Err(CliError::config(
                    "linearisation",
                    "set either dl or l_f_est, not both",
                ));
            }
            (Some(dl), None) => {
                finite("linearisation.dl", dl)?;
                self.vehicle.l_f + dl
            }
            (None, Some(l)) => {
                finite("linearisation.l_f_est", l)?;
                l
            }
            (None, None) => self.vehicle.l_f,
        };
        LinearisationConfig::new(s.law, s.p, l_f_est)
            .and_then(|c| c.with_singularity_margin(s.singularity_margin_deg.to_radians()))
            .map_err(|e| match e {
                fblin_core::Error::InvalidParameter {
                    name: "singularity_margin",
                    reason,
                } => CliError::config("linearisation.singularity_margin_deg", reason),
                other => CliError::in_section("linearisation", other),
            })
    }

    /// Centre-of-mass deviation `l_f_est - l_f` of the configured law.
    pub fn dl(&self) -> Result<f64> {
        Ok(self.linearisation_config()?.l_f_est() - self.vehicle.l_f)
    }

    pub fn dropout_model(&self) -> Result<DropoutModel> {
        let d = &self.dropout;
        Ok(match d.mode {
            DropoutMode::Disabled => DropoutModel::Disabled,
            DropoutMode::Episodes => {
                if d.episodes.is_empty() {
                    return Err(CliError::config(
                        "dropout.episodes",
                        "episodes mode needs at least one episode",
                    ));
                }
                DropoutModel::Episodes(d.episodes.clone())
            }
            DropoutMode::Stochastic => DropoutModel::Stochastic {
                rate: d.rate,
                duration_min: d.duration_min,
                duration_max: d.duration_max,
                seed: d.seed.unwrap_or(self.seed),
            },
        })
    }

    pub fn tracking_gains(&self) -> Result<TrackingGains> {
        TrackingGains::new(self.tracking.k_px, self.tracking.k_py)
            .map_err(|e| CliError::in_section("tracking", e))
    }

    pub fn circle(&self) -> Result<ReferenceTrajectory> {
        let t = &self.tracking;
        let r = ReferenceTrajectory::Circle {
            radius: t.radius,
            omega: t.omega,
            center: Point::new(t.center[0], t.center[1]),
            phase: t.phase,
        };
        r.validate()
            .map_err(|e| CliError::in_section("tracking", e))?;
        Ok(r)
    }

    pub fn custom_reference(&self) -> Result<ReferenceTrajectory> {
        let c = &self.custom;
        let r = match c.reference {
            CustomReference::Samples => {
                if c.samples.is_empty() {
                    return Err(CliError::config("custom.samples", "is empty"));
                }
                ReferenceTrajectory::ExternalSamples {
                    samples: c
                        .samples
                        .iter()
                        .map(|&[t, x, y]| (t, Point::new(x, y)))
                        .collect(),
                }
            }
            CustomReference::Segments => {
                if c.segments.is_empty() {
                    return Err(CliError::config("custom.segments", "is empty"));
                }
                ReferenceTrajectory::PiecewiseConstantVelocity {
                    start: Point::new(c.start[0], c.start[1]),
                    segments: c.segments.clone(),
                }
            }
        };
        r.validate()
            .map_err(|e| CliError::in_section("custom", e))?;
        if let Some([x, y]) = c.initial_p {
            finite("custom.initial_p", x + y)?;
        }
        finite("custom.initial_psi", c.initial_psi)?;
        Ok(r)
    }

    pub fn sweep_speeds(&self) -> Result<Vec<f64>> {
        let s = &self.sweep;
        if let Some(v) = &s.v_bars {
            return Ok(v.clone());
        }
        positive("sweep.v_min", s.v_min)?;
        positive("sweep.v_step", s.v_step)?;
        finite("sweep.v_max", s.v_max)?;
        if s.v_max < s.v_min {
            return Err(CliError::config(
                "sweep.v_max",
                format!("empty speed range [{}, {}]", s.v_min, s.v_max),
            ));
        }
        let n = ((s.v_max - s.v_min) / s.v_step + 1e-9).floor() as usize;
        Ok((0..=n)
            .map(|i| tidy(s.v_min + i as f64 * s.v_step))
            .collect())
    }

    pub fn sweep_grid(&self) -> Result<SweepGrid> {
        let s = &self.sweep;
        finite("sweep.psi_bar", s.psi_bar)?;
        let grid = SweepGrid::new(self.sweep_speeds()?, s.dl_min, s.dl_max, s.dl_step).map_err(
            |e| match e {
                fblin_core::Error::InvalidParameter { name, reason } => {
                    let key = match name {
                        "v_bar grid" => "sweep.v_bars",
                        "dl step" => "sweep.dl_step",
                        _ => "sweep.dl_min",
                    };
                    CliError::config(key, reason)
                }
                other => CliError::Model(other),
            },
        )?;
        Ok(grid.with_psi_bar(s.psi_bar))
    }

    pub fn sweep_options(&self) -> SweepOptions {
        SweepOptions {
            cross_check: self.sweep.cross_check,
            locate_boundaries: self.sweep.locate_boundaries,
            parallel: self.sweep.parallel,
        }
    }

    fn validate_hopf(&self) -> Result<()> {
        let h = &self.hopf;
        if h.v_bars.is_empty() {
            return Err(CliError::config("hopf.v_bars", "is empty"));
        }
        for (i, &v) in h.v_bars.iter().enumerate() {
            positive(&format!("hopf.v_bars[{i}]"), v)?;
        }
        finite("hopf.psi_bar", h.psi_bar)?;
        if let Some([a, b]) = h.bracket {
            finite("hopf.bracket", a)?;
            finite("hopf.bracket", b)?;
            if a == b {
                return Err(CliError::config(
                    "hopf.bracket",
                    format!("degenerate bracket [{a}, {b}]: endpoints must differ"),
                ));
            }
        }
        let (lo, hi) = self.hopf_scan_range();
        finite("hopf.scan_min", lo)?;
        finite("hopf.scan_max", hi)?;
        if lo >= hi {
            return Err(CliError::config(
                "hopf.scan_max",
                format!("empty scan range [{lo}, {hi}]"),
            ));
        }
        positive("hopf.scan_step", h.scan_step)
    }

    pub fn hopf_scan_range(&self) -> (f64, f64) {
        let (lo, hi) = self.vehicle.physical_dl_range();
        (
            self.hopf.scan_min.unwrap_or(lo),
            self.hopf.scan_max.unwrap_or(hi),
        )
    }

    /// Horizon for time-domain experiments.
    pub fn horizon(&self, kind: ExperimentKind) -> Result<f64> {
        if let Some(h) = self.integrator.horizon {
            return Ok(h);
        }
        Ok(match kind {
            ExperimentKind::OpenLoopSteps => {
                self.open_loop.segments.iter().map(|s| s.duration).sum()
            }
            ExperimentKind::Custom => self.custom_reference()?.end_time().ok_or_else(|| {
                CliError::config("integrator.horizon", "required for this reference")
            })?,
            _ => 60.0,
        })
    }

    pub fn tracking_options(&self, kind: ExperimentKind) -> Result<TrackingOptions> {
        let i = &self.integrator;
        let integrator = Integrator::new(i.dt, self.horizon(kind)?)
            .map_err(|e| CliError::in_section("integrator", e))?
            .with_substeps(Substeps::Stiffness {
                max_lambda_h: i.max_lambda_h,
                limit: i.max_substeps,
            });
        let mut o = TrackingOptions::new(integrator);
        o.feedforward = self.tracking.feedforward;
        o.steering_limit = self.tracking.steering_limit_deg.map(f64::to_radians);
        Ok(o)
    }

    /// SHA-256 of the canonical JSON form, without the `[output]` section.
    /// Object keys are sorted, so the hash ignores key order in the file.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("output");
        }
        hex::encode(Sha256::digest(canonical_json(&value).as_bytes()))
    }
}

fn canonical_json(value: &serde_json::Value) -> String {
    use serde_json::Value;
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let body: Vec<String> = keys
                .into_iter()
                .map(|k| format!("{}:{}", Value::String(k.clone()), canonical_json(&map[k])))
                .collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(items) => format!(
            "[{}]",
            items
                .iter()
                .map(canonical_json)
                .collect::<Vec<_>>()
                .join(",")
        ),
        other => other.to_string(),
    }
}
