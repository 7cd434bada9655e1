//! The experiments behind each subcommand. Every command validates the
//! configuration, writes its outputs under `output.dir` and finishes with
//! a manifest listing them.

use fblin_core::analysis::{
    hopf_bisect, stability_sweep, HopfPoint, SweepGrid, SweepOptions, Verdict,
};
use fblin_core::control::{
    circle_start, error_inflation, reference_point, run_open_loop, run_tracking, state_with_point,
    summarize_circle, DropoutModel, RunLog, TrackingSummary,
};
use fblin_core::linearise::Point;
use fblin_core::Error;
use serde::Serialize;

use crate::config::{ExperimentKind, ScenarioConfig};
use crate::error::{CliError, Result};
use crate::manifest::{OutputDir, RunManifest};
use crate::plot::stability_svg;

/// Eigenvalue as `{re, im}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Eig {
    pub re: f64,
    pub im: f64,
}

fn pair(h: &HopfPoint) -> [Eig; 2] {
    // spectra are sorted by decreasing real part, so the crossing pair leads
    [0, 1].map(|k| Eig {
        re: h.eigenvalues[k].re,
        im: h.eigenvalues[k].im,
    })
}

/// Hopf points located here are not classified; this label is metadata only.
pub const CRITICALITY_NOTE: &str = "subcritical (assumed; first Lyapunov coefficient not computed)";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Runs whatever `experiment` the configuration selects.
    Simulate,
    Sweep,
    Hopf,
    Track,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
            Command::Hopf => "hopf",
            Command::Track => "track",
        }
    }

    fn experiment(self, cfg: &ScenarioConfig) -> ExperimentKind {
        match self {
            Command::Simulate => cfg.experiment,
            Command::Sweep => ExperimentKind::StabilitySweep,
            Command::Hopf => ExperimentKind::HopfThreshold,
            Command::Track => ExperimentKind::CircleTracking,
        }
    }
}

pub fn execute(command: Command, cfg: &ScenarioConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let kind = command.experiment(cfg);
    let mut out = OutputDir::create(&cfg.output.dir)?;
    match kind {
        ExperimentKind::OpenLoopSteps => open_loop(cfg, &mut out)?,
        ExperimentKind::CircleTracking => circle(cfg, &mut out)?,
        ExperimentKind::Custom => custom(cfg, &mut out)?,
        ExperimentKind::StabilitySweep => sweep(cfg, &mut out)?,
        ExperimentKind::HopfThreshold => hopf(cfg, &mut out)?,
    }
    out.finish(command.name(), kind.name(), cfg.hash(), cfg.seed)
}

/// Resolved configuration and its hash, without running anything.
pub fn validate_report(cfg: &ScenarioConfig) -> Result<serde_json::Value> {
    cfg.validate()?;
    Ok(serde_json::json!({
        "valid": true,
        "experiment": cfg.experiment.name(),
        "config_hash": cfg.hash(),
        "config": cfg,
    }))
}

fn write_log(out: &mut OutputDir, log: &RunLog) -> Result<()> {
    out.write_csv("run.csv", |buf| log.write_csv(buf))
}

#[derive(Serialize)]
struct DropoutReport {
    episodes: usize,
    dropout_steps: usize,
    /// Same metric for the run without dropout.
    clean: f64,
    inflation: f64,
}

fn dropout_steps(log: &RunLog) -> usize {
    log.rows.iter().filter(|r| r.dropout_active).count()
}

#[derive(Serialize)]
struct OpenLoopSummary {
    law: String,
    dl: f64,
    horizon: f64,
    /// `|P - P_nominal|`, where the nominal path integrates the commanded velocities.
    max_deviation: f64,
    final_deviation: f64,
    /// Compares final deviations.
    dropout: Option<DropoutReport>,
}

fn open_loop(cfg: &ScenarioConfig, out: &mut OutputDir) -> Result<()> {
    let lin = cfg.linearisation_config()?;
    let options = cfg.tracking_options(ExperimentKind::OpenLoopSteps)?;
    let schedule: f64 = cfg.open_loop.segments.iter().map(|s| s.duration).sum();
    if options.integrator.horizon > schedule + 1e-9 {
        return Err(CliError::config(
            "integrator.horizon",
            format!("exceeds the open-loop schedule length {schedule} s"),
        ));
    }
    let dropout = cfg.dropout_model()?;
    let run = |d: &DropoutModel| {
        run_open_loop(
            &cfg.open_loop.segments,
            d,
            Default::default(),
            &cfg.vehicle,
            &lin,
            &options,
        )
    };
    let log = run(&dropout)?;
    let report = if dropout == DropoutModel::Disabled {
        None
    } else {
        let clean = run(&DropoutModel::Disabled)?.final_deviation();
        Some(DropoutReport {
            episodes: dropout.episodes(options.integrator.horizon)?.len(),
            dropout_steps: dropout_steps(&log),
            clean,
            inflation: log.final_deviation() / clean,
        })
    };
    write_log(out, &log)?;
    out.write_json(
        "summary.json",
        &OpenLoopSummary {
            law: lin.law().name().to_string(),
            dl: cfg.dl()?,
            horizon: options.integrator.horizon,
            max_deviation: log.max_deviation(),
            final_deviation: log.final_deviation(),
            dropout: report,
        },
    )
}

#[derive(Serialize)]
struct CircleSummary {
    law: String,
    dl: f64,
    horizon: f64,
    #[serde(flatten)]
    tracking: TrackingSummary,
    /// RMS of `|P - P_ref|` over the steady window; the dropout inflation compares this.
    rms_tracking_error: f64,
    dropout: Option<DropoutReport>,
}

fn circle(cfg: &ScenarioConfig, out: &mut OutputDir) -> Result<()> {
    let lin = cfg.linearisation_config()?;
    let options = cfg.tracking_options(ExperimentKind::CircleTracking)?;
    let reference = cfg.circle()?;
    let gains = cfg.tracking_gains()?;
    let dropout = cfg.dropout_model()?;
    let s0 = circle_start(&reference, cfg.tracking.start_offset, &cfg.vehicle, &lin)?;
    let run =
        |d: &DropoutModel| run_tracking(&reference, &gains, d, s0, &cfg.vehicle, &lin, &options);
    let log = run(&dropout)?;
    let tracking = summarize_circle(&log, &reference)?;
    let from = tracking.steady_window_start;
    let report = if dropout == DropoutModel::Disabled {
        None
    } else {
        let clean = run(&DropoutModel::Disabled)?;
        Some(DropoutReport {
            episodes: dropout.episodes(options.integrator.horizon)?.len(),
            dropout_steps: dropout_steps(&log),
            clean: clean.rms_error(from),
            inflation: error_inflation(&log, &clean, from),
        })
    };
    write_log(out, &log)?;
    out.write_json(
        "summary.json",
        &CircleSummary {
            law: lin.law().name().to_string(),
            dl: cfg.dl()?,
            horizon: options.integrator.horizon,
            tracking,
            rms_tracking_error: log.rms_error(from),
            dropout: report,
        },
    )
}

#[derive(Serialize)]
struct CustomSummary {
    law: String,
    dl: f64,
    horizon: f64,
    rms_tracking_error: f64,
    max_deviation: f64,
    final_deviation: f64,
    dropout_steps: usize,
}

fn custom(cfg: &ScenarioConfig, out: &mut OutputDir) -> Result<()> {
    let lin = cfg.linearisation_config()?;
    let options = cfg.tracking_options(ExperimentKind::Custom)?;
    let reference = cfg.custom_reference()?;
    let start = match cfg.custom.initial_p {
        Some([x, y]) => Point::new(x, y),
        None => reference_point(&reference, 0.0)?.position,
    };
    let s0 = state_with_point(start, cfg.custom.initial_psi, &cfg.vehicle, &lin)?;
    let log = run_tracking(
        &reference,
        &cfg.tracking_gains()?,
        &cfg.dropout_model()?,
        s0,
        &cfg.vehicle,
        &lin,
        &options,
    )?;
    write_log(out, &log)?;
    out.write_json(
        "summary.json",
        &CustomSummary {
            law: lin.law().name().to_string(),
            dl: cfg.dl()?,
            horizon: options.integrator.horizon,
            rms_tracking_error: log.rms_error(0.0),
            max_deviation: log.max_deviation(),
            final_deviation: log.final_deviation(),
            dropout_steps: dropout_steps(&log),
        },
    )
}

#[derive(Serialize)]
struct SpeedRow {
    v_bar: f64,
    stable: usize,
    unstable: usize,
    invalid: usize,
    /// Over the valid cells inside `[-l_f, l_r]`.
    unstable_fraction_physical: f64,
}

#[derive(Serialize)]
struct HopfRecord {
    v_bar: f64,
    dl_star: f64,
    frequency: f64,
    max_re: f64,
    crossing_pair: [Eig; 2],
}

impl HopfRecord {
    fn new(h: &HopfPoint) -> Self {
        Self {
            v_bar: h.v_bar,
            dl_star: h.dl_star,
            frequency: h.frequency,
            max_re: h.max_re,
            crossing_pair: pair(h),
        }
    }
}

#[derive(Serialize)]
struct SweepSummary {
    law: String,
    psi_bar: f64,
    cells: usize,
    stable: usize,
    unstable: usize,
    invalid: usize,
    max_oracle_gap: Option<f64>,
    speeds: Vec<SpeedRow>,
    hopf_points: Vec<HopfRecord>,
    other_boundaries: usize,
    criticality: &'static str,
}

fn sweep(cfg: &ScenarioConfig, out: &mut OutputDir) -> Result<()> {
    let lin = cfg.linearisation_config()?;
    let grid = cfg.sweep_grid()?;
    let map = stability_sweep(&grid, &cfg.vehicle, &lin, cfg.sweep_options())?;
    let (lo, hi) = cfg.vehicle.physical_dl_range();

    out.write_csv("cells.csv", |buf| map.write_cells_csv(buf))?;
    out.write_csv("hopf.csv", |buf| map.write_hopf_csv(buf))?;
    out.write_csv("boundaries.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["v_bar", "bracket_stable", "bracket_unstable", "reason"])?;
        for b in &map.other_boundaries {
            w.write_record([
                b.v_bar.to_string(),
                b.bracket.0.to_string(),
                b.bracket.1.to_string(),
                b.reason.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    if cfg.output.plot {
        out.write(
            "stability_map.svg",
            stability_svg(&map, (lo, hi)).as_bytes(),
        )?;
    }

    let speeds = (0..map.v_bar_grid.len())
        .map(|iv| {
            let row = map.row(iv);
            let count = |v: Verdict| row.iter().filter(|c| c.verdict == v).count();
            SpeedRow {
                v_bar: map.v_bar_grid[iv],
                stable: count(Verdict::Stable),
                unstable: count(Verdict::Unstable),
                invalid: count(Verdict::Invalid),
                unstable_fraction_physical: map.unstable_fraction(iv, lo, hi),
            }
        })
        .collect();
    out.write_json(
        "summary.json",
        &SweepSummary {
            law: map.law.name().to_string(),
            psi_bar: map.psi_bar,
            cells: map.cells.len(),
            stable: map.count(Verdict::Stable),
            unstable: map.count(Verdict::Unstable),
            invalid: map.count(Verdict::Invalid),
            max_oracle_gap: map.max_oracle_gap(),
            speeds,
            hopf_points: map.hopf_points.iter().map(HopfRecord::new).collect(),
            other_boundaries: map.other_boundaries.len(),
            criticality: CRITICALITY_NOTE,
        },
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct HopfEntry {
    pub v_bar: f64,
    /// `crossing`, `no-crossing`, `non-hopf` or `failed`.
    pub status: &'static str,
    pub bracket: [f64; 2],
    pub dl_star: Option<f64>,
    pub frequency: Option<f64>,
    pub max_re: Option<f64>,
    pub crossing_pair: Option<[Eig; 2]>,
    pub eigenvalues: Vec<Eig>,
    pub detail: String,
}

impl HopfEntry {
    fn found(h: &HopfPoint, bracket: [f64; 2]) -> Self {
        Self {
            v_bar: h.v_bar,
            status: "crossing",
            bracket,
            dl_star: Some(h.dl_star),
            frequency: Some(h.frequency),
            max_re: Some(h.max_re),
            crossing_pair: Some(pair(h)),
            eigenvalues: h
                .eigenvalues
                .iter()
                .map(|z| Eig { re: z.re, im: z.im })
                .collect(),
            detail: format!("bisection bracket width {:.3e} m", h.bracket_width),
        }
    }

    fn missing(v_bar: f64, status: &'static str, bracket: [f64; 2], detail: String) -> Self {
        Self {
            v_bar,
            status,
            bracket,
            dl_star: None,
            frequency: None,
            max_re: None,
            crossing_pair: None,
            eigenvalues: Vec::new(),
            detail,
        }
    }

    fn from_error(v_bar: f64, bracket: [f64; 2], e: Error) -> Self {
        let status = match e.root() {
            Error::SameVerdictBracket { .. } => "no-crossing",
            Error::NonHopfBoundary { .. } => "non-hopf",
            _ => "failed",
        };
        Self::missing(v_bar, status, bracket, e.to_string())
    }
}

/// Hopf search per speed: bisection of the configured bracket, or a scan
/// followed by bisection of every verdict change.
pub fn hopf_entries(cfg: &ScenarioConfig) -> Result<Vec<HopfEntry>> {
    let lin = cfg.linearisation_config()?;
    let h = &cfg.hopf;
    let mut entries = Vec::new();
    for &v in &h.v_bars {
        if let Some(bracket) = h.bracket {
            match hopf_bisect(v, (bracket[0], bracket[1]), &cfg.vehicle, &lin, h.psi_bar) {
                Ok(p) => entries.push(HopfEntry::found(&p, bracket)),
                Err(e) => entries.push(HopfEntry::from_error(v, bracket, e)),
            }
            continue;
        }
        let (lo, hi) = cfg.hopf_scan_range();
        let grid = SweepGrid::new(vec![v], lo, hi, h.scan_step)
            .map_err(|e| CliError::in_section("hopf", e))?
            .with_psi_bar(h.psi_bar);
        let options = SweepOptions {
            cross_check: false,
            ..SweepOptions::default()
        };
        let map = stability_sweep(&grid, &cfg.vehicle, &lin, options)?;
        let before = entries.len();
        for p in &map.hopf_points {
            entries.push(HopfEntry::found(p, [lo, hi]));
        }
        for b in &map.other_boundaries {
            let status = if b.reason.contains("not a Hopf point") {
                "non-hopf"
            } else {
                "failed"
            };
            entries.push(HopfEntry::missing(
                v,
                status,
                [b.bracket.0, b.bracket.1],
                b.reason.clone(),
            ));
        }
        if entries.len() == before {
            let count = |x: Verdict| map.count(x);
            entries.push(HopfEntry::missing(
                v,
                "no-crossing",
                [lo, hi],
                format!(
                    "no stability change on [{lo}, {hi}] m at {} m spacing ({} stable, {} unstable, {} invalid cells)",
                    h.scan_step,
                    count(Verdict::Stable),
                    count(Verdict::Unstable),
                    count(Verdict::Invalid)
                ),
            ));
        }
    }
    Ok(entries)
}

#[derive(Serialize)]
struct HopfReport<'a> {
    law: String,
    psi_bar: f64,
    criticality: &'static str,
    entries: &'a [HopfEntry],
}

fn hopf(cfg: &ScenarioConfig, out: &mut OutputDir) -> Result<()> {
    let entries = hopf_entries(cfg)?;
    out.write_csv("hopf.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record([
            "v_bar",
            "status",
            "dl_star",
            "hopf_freq",
            "max_re",
            "pair_re",
            "pair_im",
            "bracket_lo",
            "bracket_hi",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for e in &entries {
            let pair = e.crossing_pair.map(|p| p[0]);
            w.write_record([
                e.v_bar.to_string(),
                e.status.to_string(),
                opt(e.dl_star),
                opt(e.frequency),
                opt(e.max_re),
                opt(pair.map(|z| z.re)),
                opt(pair.map(|z| z.im)),
                e.bracket[0].to_string(),
                e.bracket[1].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    out.write_json(
        "hopf_report.json",
        &HopfReport {
            law: cfg.linearisation.law.name().to_string(),
            psi_bar: cfg.hopf.psi_bar,
            criticality: CRITICALITY_NOTE,
            entries: &entries,
        },
    )
}
