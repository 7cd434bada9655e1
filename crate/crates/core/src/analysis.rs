//! Stability of the steady straight-line motion under a linearising law.
//!
//! With the P-velocity command frozen at `v_bar (cos psi_bar, sin psi_bar)`,
//! the heading, yaw-rate, sideslip (and, for the front-axle law, steering)
//! states evolve independently of the position of P. Their equilibrium
//! `(psi_bar, 0, 0, 0)` exists for every centre-of-mass deviation `dl`, and
//! its stability is read off the eigenvalues of a central-difference
//! Jacobian. Sweeps over `(v_bar, dl)` map the stable region and locate the
//! boundary by bisection on the largest real part.

use std::f64::consts::FRAC_PI_4;
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::eigen::{eigenvalues, max_real_part, qr_eigenvalues, spectrum_distance};
use crate::error::{Error, Result};
use crate::linearise::{
    linearising_law_alternative, linearising_law_uncertain, ControlCommand, Law,
    LinearisationConfig, PointVelocityCommand,
};
use crate::model::{dynamics, ModelInput, VehicleParams, VehicleState};

pub const DEFAULT_PSI_BAR: f64 = FRAC_PI_4;

/// Cells with `max Re < -STABILITY_TOL` are stable.
pub const STABILITY_TOL: f64 = 1e-9;

/// Relative central-difference step.
pub const FD_REL_STEP: f64 = 1e-6;

/// Largest accepted field residual at the nominal equilibrium.
pub const EQUILIBRIUM_TOL: f64 = 1e-10;

/// Hopf bisection stops once `|max Re| <= HOPF_RE_TOL` and the bracket is at most `HOPF_WIDTH_TOL`.
pub const HOPF_RE_TOL: f64 = 1e-8;
pub const HOPF_WIDTH_TOL: f64 = 1e-7;

/// Imaginary parts at or below this are treated as a real crossing.
const REAL_CROSSING_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumSpec {
    pub v_bar: f64,
    pub psi_bar: f64,
}

impl EquilibriumSpec {
    pub fn new(v_bar: f64, psi_bar: f64) -> Result<Self> {
        if !(v_bar.is_finite() && v_bar > 0.0) {
            return Err(Error::invalid("v_bar", format!("must be > 0, got {v_bar}")));
        }
        if !psi_bar.is_finite() {
            return Err(Error::invalid("psi_bar", "must be finite"));
        }
        Ok(Self { v_bar, psi_bar })
    }

    pub fn command(&self) -> PointVelocityCommand {
        let (s, c) = self.psi_bar.sin_cos();
        PointVelocityCommand::new(self.v_bar * c, self.v_bar * s)
    }

    pub fn point(&self, law: Law) -> ReducedState {
        match law {
            Law::FrontAxleOffset => ReducedState::FrontAxle([self.psi_bar, 0.0, 0.0, 0.0]),
            Law::VelocityDirection => ReducedState::VelocityDirection([self.psi_bar, 0.0, 0.0]),
        }
    }
}

/// `(psi, r, beta, delta)` for the front-axle law, `(psi, r, beta)` for the
/// velocity-direction law, whose steering angle is an output of the law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReducedState {
    FrontAxle([f64; 4]),
    VelocityDirection([f64; 3]),
}

impl ReducedState {
    pub fn from_slice(law: Law, values: &[f64]) -> Result<Self> {
        match (law, values) {
            (Law::FrontAxleOffset, &[psi, r, beta, delta]) => {
                Ok(Self::FrontAxle([psi, r, beta, delta]))
            }
            (Law::VelocityDirection, &[psi, r, beta]) => {
                Ok(Self::VelocityDirection([psi, r, beta]))
            }
            _ => Err(Error::invalid(
                "reduced state",
                format!(
                    "{law} needs {} components, got {}",
                    law.reduced_dim(),
                    values.len()
                ),
            )),
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        match self {
            Self::FrontAxle(a) => a,
            Self::VelocityDirection(a) => a,
        }
    }

    pub fn law(&self) -> Law {
        match self {
            Self::FrontAxle(_) => Law::FrontAxleOffset,
            Self::VelocityDirection(_) => Law::VelocityDirection,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.as_slice().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Closed-loop derivative of the reduced state. The law in `cfg` is
/// evaluated with `l_f_est = params.l_f + dl`, whatever `cfg.l_f_est` holds.
pub fn closed_loop_field(
    xi: &ReducedState,
    eq: &EquilibriumSpec,
    dl: f64,
    params: &VehicleParams,
    cfg: &LinearisationConfig,
) -> Result<ReducedState> {
    if xi.law() != cfg.law() {
        return Err(Error::LawMismatch {
            expected: cfg.law().name(),
            found: xi.law().name(),
        });
    }
    let cfg = cfg.with_l_f_est(params.l_f + dl)?;
    let cmd = eq.command();
    match *xi {
        ReducedState::FrontAxle([psi, r, beta, delta]) => {
            let state = VehicleState {
                psi,
                r,
                beta,
                delta,
                ..Default::default()
            };
            let ControlCommand::SteeringRate { v, u_delta } =
                linearising_law_uncertain(&state, &cmd, &cfg)?
            else {
                unreachable!("front-axle law yields a steering rate")
            };
            let d = dynamics(&state, &ModelInput::new(v, u_delta), params)?;
            Ok(ReducedState::FrontAxle([d.psi, d.r, d.beta, d.delta]))
        }
        ReducedState::VelocityDirection([psi, r, beta]) => {
            let mut state = VehicleState {
                psi,
                r,
                beta,
                ..Default::default()
            };
            let ControlCommand::SteeringAngle { v, delta } =
                linearising_law_alternative(&state, &cmd, &cfg, params)?
            else {
                unreachable!("velocity-direction law yields a steering angle")
            };
            state.delta = delta;
            let d = dynamics(&state, &ModelInput::new(v, 0.0), params)?;
            Ok(ReducedState::VelocityDirection([d.psi, d.r, d.beta]))
        }
    }
}

/// Central-difference Jacobian of [`closed_loop_field`] at an arbitrary point.
pub fn jacobian_at(
    xi: &ReducedState,
    eq: &EquilibriumSpec,
    dl: f64,
    params: &VehicleParams,
    cfg: &LinearisationConfig,
    rel_step: f64,
) -> Result<DMatrix<f64>> {
    let law = xi.law();
    let x0 = xi.as_slice();
    let n = x0.len();
    let mut jac = DMatrix::zeros(n, n);
    let mut probe = x0.to_vec();
    for j in 0..n {
        let h = rel_step * x0[j].abs().max(1.0);
        probe[j] = x0[j] + h;
        let plus = closed_loop_field(&ReducedState::from_slice(law, &probe)?, eq, dl, params, cfg)?;
        probe[j] = x0[j] - h;
        let minus =
            closed_loop_field(&ReducedState::from_slice(law, &probe)?, eq, dl, params, cfg)?;
        probe[j] = x0[j];
        for (i, (a, b)) in plus.as_slice().iter().zip(minus.as_slice()).enumerate() {
            jac[(i, j)] = (a - b) / (2.0 * h);
        }
    }
    if jac.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("jacobian", "non-finite entry"));
    }
    Ok(jac)
}

/// Jacobian at the equilibrium `(psi_bar, 0, 0[, 0])` with a custom relative step.
pub fn jacobian_with_step(
    eq: &EquilibriumSpec,
    dl: f64,
    params: &VehicleParams,
    cfg: &LinearisationConfig,
    rel_step: f64,
) -> Result<DMatrix<f64>> {
    let xi = eq.point(cfg.law());
    let residual = closed_loop_field(&xi, eq, dl, params, cfg)?.max_abs();
    if !(residual <= EQUILIBRIUM_TOL) {
        return Err(Error::EquilibriumResidual {
            residual,
            tolerance: EQUILIBRIUM_TOL,
        });
    }
    jacobian_at(&xi, eq, dl, params, cfg, rel_step)
}

/// Jacobian at the equilibrium with the default step [`FD_REL_STEP`].
pub fn jacobian(
    eq: &EquilibriumSpec,
    dl: f64,
    params: &VehicleParams,
    cfg: &LinearisationConfig,
) -> Result<DMatrix<f64>> {
    jacobian_with_step(eq, dl, params, cfg, FD_REL_STEP)
}

/// Closed-loop spectrum at the equilibrium, sorted by decreasing real part.
pub fn spectrum(
    eq: &EquilibriumSpec,
    dl: f64,
    params: &VehicleParams,
    cfg: &LinearisationConfig,
) -> Result<Vec<Complex64>> {
    eigenvalues(&jacobian(eq, dl, params, cfg)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Stable,
    Unstable,
    /// The law or the model could not be evaluated for this cell.
    Invalid,
}

impl Verdict {
    pub fn from_max_re(max_re: f64) -> Self {
        if max_re < -STABILITY_TOL {
            Verdict::Stable
        } else {
            Verdict::Unstable
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Verdict::Stable => "stable",
            Verdict::Unstable => "unstable",
            Verdict::Invalid => "invalid",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub v_bar: f64,
    pub dl: f64,
    pub verdict: Verdict,
    pub max_re: Option<f64>,
    pub eigenvalues: Vec<Complex64>,
    /// Distance between the primary spectrum and the Schur-based one, when cross-checked.
    pub oracle_gap: Option<f64>,
    pub error: Option<String>,
}

/// Speeds and an evenly spaced `dl` range.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub v_bars: Vec<f64>,
    pub dl_min: f64,
    pub dl_max: f64,
    pub dl_step: f64,
    pub psi_bar: f64,
}

impl SweepGrid {
    pub fn new(v_bars: Vec<f64>, dl_min: f64, dl_max: f64, dl_step: f64) -> Result<Self> {
        let grid = Self {
            v_bars,
            dl_min,
            dl_max,
            dl_step,
            psi_bar: DEFAULT_PSI_BAR,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn with_psi_bar(mut self, psi_bar: f64) -> Self {
        self.psi_bar = psi_bar;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.v_bars.is_empty() {
            return Err(Error::invalid("v_bar grid", "is empty"));
        }
        if let Some(v) = self.v_bars.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::invalid(
                "v_bar grid",
                format!("speeds must be > 0, got {v}"),
            ));
        }
        if !(self.dl_min.is_finite() && self.dl_max.is_finite() && self.dl_min <= self.dl_max) {
            return Err(Error::invalid(
                "dl range",
                format!(
                    "need finite dl_min <= dl_max, got [{}, {}]",
                    self.dl_min, self.dl_max
                ),
            ));
        }
        if !(self.dl_step.is_finite() && self.dl_step > 0.0) {
            return Err(Error::invalid(
                "dl step",
                format!("must be > 0, got {}", self.dl_step),
            ));
        }
        Ok(())
    }

    pub fn dl_values(&self) -> Vec<f64> {
        let n = ((self.dl_max - self.dl_min) / self.dl_step + 1e-9).floor() as usize;
        (0..=n)
            .map(|i| self.dl_min + i as f64 * self.dl_step)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    /// Recompute every spectrum with the Schur route and record the gap.
    pub cross_check: bool,
    /// Bisect every stable/unstable transition along `dl`.
    pub locate_boundaries: bool,
    pub parallel: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            cross_check: true,
            locate_boundaries: true,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HopfPoint {
    pub v_bar: f64,
    pub dl_star: f64,
    /// Imaginary part of the crossing pair [rad/s].
    pub frequency: f64,
    pub max_re: f64,
    pub bracket_width: f64,
    pub eigenvalues: Vec<Complex64>,
}

impl HopfPoint {
    /// Exactly one conjugate pair on the axis, every other eigenvalue strictly stable.
    pub fn is_simple(&self) -> bool {
        let on_axis: Vec<_> = self
            .eigenvalues
            .iter()
            .filter(|v| v.re.abs() <= HOPF_RE_TOL)
            .collect();
        let rest_stable = self
            .eigenvalues
            .iter()
            .filter(|v| v.re.abs() > HOPF_RE_TOL)
            .all(|v| v.re < 0.0);
        on_axis.len() == 2
            && on_axis[0].im.abs() > REAL_CROSSING_TOL
            && (on_axis[0].conj() - on_axis[1]).norm() <= 1e-9 * (1.0 + on_axis[0].norm())
            && rest_stable
    }
}

/// A verdict change along `dl` that bisection could not classify as Hopf.
#[derive(Debug, Clone, PartialEq)]
pub struct Boundary {
    pub v_bar: f64,
    pub bracket: (f64, f64),
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityMap {
    pub law: Law,
    pub psi_bar: f64,
    pub v_bar_grid: Vec<f64>,
    pub dl_grid: Vec<f64>,
    /// Row-major: `cells[iv * dl_grid.len() + idl]`.
    pub cells: Vec<Cell>,
    pub hopf_points: Vec<HopfPoint>,
    pub other_boundaries: Vec<Boundary>,
}

impl StabilityMap {
    pub fn cell(&self, iv: usize, idl: usize) -> &Cell {
        &self.cells[iv * self.dl_grid.len() + idl]
    }

    pub fn row(&self, iv: usize) -> &[Cell] {
        let n = self.dl_grid.len();
        &self.cells[iv * n..(iv + 1) * n]
    }

    /// Unstable share of the valid cells of row `iv` whose `dl` lies in `[lo, hi]`.
    pub fn unstable_fraction(&self, iv: usize, lo: f64, hi: f64) -> f64 {
        let valid: Vec<&Cell> = self
            .row(iv)
            .iter()
            .filter(|c| c.verdict != Verdict::Invalid && c.dl >= lo && c.dl <= hi)
            .collect();
        if valid.is_empty() {
            return 0.0;
        }
        valid
            .iter()
            .filter(|c| c.verdict == Verdict::Unstable)
            .count() as f64
            / valid.len() as f64
    }

    pub fn count(&self, verdict: Verdict) -> usize {
        self.cells.iter().filter(|c| c.verdict == verdict).count()
    }

    pub fn max_oracle_gap(&self) -> Option<f64> {
        self.cells
            .iter()
            .filter_map(|c| c.oracle_gap)
            .reduce(f64::max)
    }

    /// `v_bar, dl, verdict, max_re, re_l1..re_l4, im_l1..im_l4`.
    pub fn write_cells_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "v_bar", "dl", "verdict", "max_re", "re_l1", "re_l2", "re_l3", "re_l4", "im_l1",
            "im_l2", "im_l3", "im_l4",
        ])?;
        for c in &self.cells {
            let mut record = vec![
                c.v_bar.to_string(),
                c.dl.to_string(),
                c.verdict.name().to_string(),
            ];
            record.push(c.max_re.map(|v| v.to_string()).unwrap_or_default());
            for k in 0..4 {
                record.push(
                    c.eigenvalues
                        .get(k)
                        .map(|v| v.re.to_string())
                        .unwrap_or_default(),
                );
            }
            for k in 0..4 {
                record.push(
                    c.eigenvalues
                        .get(k)
                        .map(|v| v.im.to_string())
                        .unwrap_or_default(),
                );
            }
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    /// `v_bar, dl_star, hopf_freq`.
    pub fn write_hopf_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["v_bar", "dl_star", "hopf_freq"])?;
        for h in &self.hopf_points {
            w.write_record([
                h.v_bar.to_string(),
                h.dl_star.to_string(),
                h.frequency.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn evaluate_cell(
    v_bar: f64,
    dl: f64,
    psi_bar: f64,
    params: &VehicleParams,
    cfg: &LinearisationConfig,
    cross_check: bool,
) -> Cell {
    let attempt = || -> Result<(Vec<Complex64>, Option<f64>)> {
        let eq = EquilibriumSpec::new(v_bar, psi_bar)?;
        let jac = jacobian(&eq, dl, params, cfg)?;
        let ev = eigenvalues(&jac)?;
        let gap = if cross_check {
            Some(spectrum_distance(&ev, &qr_eigenvalues(&jac)?))
        } else {
            None
        };
        Ok((ev, gap))
    };
    match attempt() {
        Ok((ev, gap)) => {
            let max_re = max_real_part(&ev);
            Cell {
                v_bar,
                dl,
                verdict: Verdict::from_max_re(max_re),
                max_re: Some(max_re),
                eigenvalues: ev,
                oracle_gap: gap,
                error: None,
            }
        }
        Err(e) => Cell {
            v_bar,
            dl,
            verdict: Verdict::Invalid,
            max_re: None,
            eigenvalues: Vec::new(),
            oracle_gap: None,
            error: Some(e.to_string()),
        },
    }
}

/// Evaluates every `(v_bar, dl)` cell. Cells whose field cannot be
/// evaluated are marked [`Verdict::Invalid`]; the output order does not
/// depend on scheduling.
pub fn stability_sweep(
    grid: &SweepGrid,
    params: &VehicleParams,
    cfg: &LinearisationConfig,
    options: SweepOptions,
) -> Result<StabilityMap> {
    grid.validate()?;
    let dl_grid = grid.dl_values();
    let keys: Vec<(f64, f64)> = grid
        .v_bars
        .iter()
        .flat_map(|&v| dl_grid.iter().map(move |&dl| (v, dl)))
        .collect();
    let eval = |&(v, dl): &(f64, f64)| {
        evaluate_cell(v, dl, grid.psi_bar, params, cfg, options.cross_check)
    };
    let cells: Vec<Cell> = if options.parallel {
        keys.par_iter().map(eval).collect()
    } else {
        keys.iter().map(eval).collect()
    };

    let mut map = StabilityMap {
        law: cfg.law(),
        psi_bar: grid.psi_bar,
        v_bar_grid: grid.v_bars.clone(),
        dl_grid,
        cells,
        hopf_points: Vec::new(),
        other_boundaries: Vec::new(),
    };
    if options.locate_boundaries {
        locate_boundaries(&mut map, params, cfg);
    }
    Ok(map)
}

fn locate_boundaries(map: &mut StabilityMap, params: &VehicleParams, cfg: &LinearisationConfig) {
    let n = map.dl_grid.len();
    for iv in 0..map.v_bar_grid.len() {
        let v_bar = map.v_bar_grid[iv];
        for idl in 1..n {
            let (a, b) = (map.cell(iv, idl - 1), map.cell(iv, idl));
            let bracket = match (a.verdict, b.verdict) {
                (Verdict::Stable, Verdict::Unstable) => (a.dl, b.dl),
                (Verdict::Unstable, Verdict::Stable) => (b.dl, a.dl),
                _ => continue,
            };
            match hopf_bisect(v_bar, bracket, params, cfg, map.psi_bar) {
                Ok(h) => map.hopf_points.push(h),
                Err(e) => map.other_boundaries.push(Boundary {
                    v_bar,
                    bracket,
                    reason: e.to_string(),
                }),
            }
        }
    }
}

/// Locates the stability boundary between `stable_dl` and `unstable_dl` at
/// speed `v_bar` and checks that it is crossed by a complex pair.
pub fn hopf_bisect(
    v_bar: f64,
    (stable_dl, unstable_dl): (f64, f64),
    params: &VehicleParams,
    cfg: &LinearisationConfig,
    psi_bar: f64,
) -> Result<HopfPoint> {
    let eq = EquilibriumSpec::new(v_bar, psi_bar)?;
    if !(stable_dl.is_finite() && unstable_dl.is_finite()) || stable_dl == unstable_dl {
        return Err(Error::invalid(
            "dl bracket",
            format!("endpoints must be finite and distinct, got ({stable_dl}, {unstable_dl})"),
        ));
    }
    let g = |dl: f64| -> Result<f64> { Ok(max_real_part(&spectrum(&eq, dl, params, cfg)?)) };

    let (mut a, mut ga) = (stable_dl, g(stable_dl)?);
    let (mut b, mut gb) = (unstable_dl, g(unstable_dl)?);
    let (va, vb) = (Verdict::from_max_re(ga), Verdict::from_max_re(gb));
    if va == vb {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        return Err(Error::SameVerdictBracket {
            lo,
            hi,
            verdict: va.name(),
        });
    }
    if va == Verdict::Unstable {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut ga, &mut gb);
    }

    // Illinois false position, falling back to bisection when it stalls
    let mut best = if ga.abs() < gb.abs() {
        (a, ga)
    } else {
        (b, gb)
    };
    let mut side = 0i8;
    for iteration in 0..400 {
        let width = (b - a).abs();
        if best.1.abs() <= HOPF_RE_TOL && width <= HOPF_WIDTH_TOL {
            break;
        }
        if width <= 1e-15 * (1.0 + a.abs()) {
            return Err(Error::HopfNonConvergence {
                dl: best.0,
                max_re: best.1,
            });
        }
        let secant = a - ga * (b - a) / (gb - ga);
        let inside = secant.is_finite() && (secant - a) * (secant - b) < 0.0;
        let x = if inside && iteration % 3 != 2 {
            secant
        } else {
            0.5 * (a + b)
        };
        let gx = g(x)?;
        if gx.abs() < best.1.abs() {
            best = (x, gx);
        }
        if Verdict::from_max_re(gx) == Verdict::Stable {
            a = x;
            ga = gx;
            if side == -1 {
                gb *= 0.5;
            }
            side = -1;
        } else {
            b = x;
            gb = gx;
            if side == 1 {
                ga *= 0.5;
            }
            side = 1;
        }
    }
    let width = (b - a).abs();
    if !(best.1.abs() <= HOPF_RE_TOL && width <= HOPF_WIDTH_TOL) {
        return Err(Error::HopfNonConvergence {
            dl: best.0,
            max_re: best.1,
        });
    }

    let dl_star = best.0;
    let ev = spectrum(&eq, dl_star, params, cfg)?;
    let leading = ev[0];
    if leading.im.abs() <= REAL_CROSSING_TOL {
        return Err(Error::NonHopfBoundary {
            dl: dl_star,
            re: leading.re,
            im: leading.im,
        });
    }
    Ok(HopfPoint {
        v_bar,
        dl_star,
        frequency: leading.im.abs(),
        max_re: max_real_part(&ev),
        bracket_width: width,
        eigenvalues: ev,
    })
}
