//! Scenario configuration: the TOML surface of the solver.
//!
//! A scenario file has sections `[kernel]`, `[efficiency]`, `[daughter]`,
//! `[initial]`, `[grid]`, `[truncation]`, `[integrator]`, `[output]`.
//! Unknown keys are hard errors everywhere. Overrides (`--set a.b.c=value`)
//! are applied to the parsed TOML tree after file values, then the whole
//! tree is deserialized, so a mistyped override path fails exactly like a
//! mistyped file key.
//!
//! [`Scenario::resolve`] turns the configuration into runnable pieces (grid,
//! tables inputs, discretized initial state) and evaluates the admissibility
//! report without judging it; [`Scenario::validate`] is the hard gate that
//! refuses any scenario whose report does not fully pass.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};
use crate::grid::{CellLocation, Grid, Tau, TruncationConfig};
use crate::integrator::{IntegratorConfig, Method};
use crate::kernel::{
    check_admissibility, AdmissibilityReport, DaughterSpec, EfficiencySpec, KernelSpec,
};
use crate::operators::State;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EfficiencySection {
    pub model: EfficiencySpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Truncation size: the mesh covers `(v_min, n)`.
    pub n: f64,
    pub cells: usize,
    /// Mesh floor; defaults to `min(1e-4, 1/(2n))`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_min: Option<f64>,
}

impl GridSection {
    pub fn resolved_v_min(&self) -> f64 {
        self.v_min.unwrap_or_else(|| Grid::default_v_min(self.n))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationSection {
    /// 1 = conservative truncation, 0 = non-conservative.
    pub tau: u8,
}

/// Integrator selector as written in scenario files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    #[serde(alias = "rk4-fixed")]
    Rk4,
    #[serde(alias = "rk23-adaptive")]
    Rk23,
}

impl MethodName {
    pub fn to_method(self) -> Method {
        match self {
            MethodName::Rk4 => Method::Rk4Fixed,
            MethodName::Rk23 => Method::Rk23Adaptive,
        }
    }
}

impl fmt::Display for MethodName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MethodName::Rk4 => "rk4",
            MethodName::Rk23 => "rk23",
        })
    }
}

fn default_method() -> MethodName {
    MethodName::Rk4
}
fn default_rel_tol() -> f64 {
    1e-6
}
fn default_abs_tol() -> f64 {
    1e-12
}
fn default_max_steps() -> u64 {
    1_000_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    #[serde(default = "default_method")]
    pub method: MethodName,
    pub t_end: f64,
    pub save_every: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_init: Option<f64>,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
}

impl IntegratorSection {
    pub fn to_config(&self) -> IntegratorConfig {
        IntegratorConfig {
            method: self.method.to_method(),
            dt_init: self.dt_init,
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            t_end: self.t_end,
            save_every: self.save_every,
            max_steps: self.max_steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: String,
    /// How many density snapshots to emit, spread evenly over the save
    /// times (the initial and final states are always among them).
    pub density_snapshots: usize,
    pub emit_bounds: bool,
    pub emit_weak_residuals: bool,
    pub emit_equicontinuity: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: "out".to_string(),
            density_snapshots: 5,
            emit_bounds: true,
            emit_weak_residuals: true,
            emit_equicontinuity: true,
        }
    }
}

/// Initial-condition section. One flat struct rather than a tagged enum so
/// that unknown keys stay hard errors; `resolve` checks that exactly the
/// fields of the named family are present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    /// "exponential" (default), "monodisperse", or "table".
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub number: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volumes: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub densities: Option<Vec<f64>>,
}

impl Default for InitialSection {
    fn default() -> Self {
        InitialSection {
            family: "exponential".to_string(),
            amplitude: None,
            mean: None,
            v0: None,
            number: None,
            volumes: None,
            densities: None,
        }
    }
}

/// Validated initial condition.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    /// `g^in(v) = amplitude * exp(-v / mean)`. The default with amplitude and
    /// mean 1 is the canonical integrable datum with unit volume.
    Exponential { amplitude: f64, mean: f64 },
    /// `number` particles per unit volume concentrated in the cell
    /// containing `v0`.
    Monodisperse { v0: f64, number: f64 },
    /// Piecewise-linear density through `(volumes[i], densities[i])`,
    /// extended by zero outside the tabulated range, sampled at cell
    /// representatives.
    Table { volumes: Vec<f64>, densities: Vec<f64> },
}

/// The part of the initial datum that the truncated grid cannot represent:
/// continuum tails below `v_min` and above `n`. Reported, never silently
/// absorbed; the mass accounts start at zero regardless.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncationNote {
    pub below_vmin_number: f64,
    pub below_vmin_mass: f64,
    pub above_n_number: f64,
    pub above_n_mass: f64,
}

impl TruncationNote {
    fn zero() -> TruncationNote {
        TruncationNote {
            below_vmin_number: 0.0,
            below_vmin_mass: 0.0,
            above_n_number: 0.0,
            above_n_mass: 0.0,
        }
    }
}

/// `1 - (1 + x) e^-x = int_0^x t e^-t dt`, series-stabilised near zero.
fn one_minus_exp_linear(x: f64) -> f64 {
    if x < 1e-2 {
        let x2 = x * x;
        x2 / 2.0 - x2 * x / 3.0 + x2 * x2 / 8.0 - x2 * x2 * x / 30.0
    } else {
        1.0 - (1.0 + x) * (-x).exp()
    }
}

impl InitialSection {
    fn require(&self, field: &str, value: Option<f64>) -> Result<f64> {
        value.ok_or_else(|| {
            Error::Config(format!(
                "initial family {:?} requires the field {field}",
                self.family
            ))
        })
    }

    fn forbid(&self, fields: &[(&str, bool)]) -> Result<()> {
        for (name, present) in fields {
            if *present {
                return Err(Error::Config(format!(
                    "initial family {:?} does not use the field {name}",
                    self.family
                )));
            }
        }
        Ok(())
    }

    pub fn resolve(&self) -> Result<InitialCondition> {
        let fin = |name: &str, x: f64, positive: bool| -> Result<f64> {
            if x.is_finite() && (!positive || x > 0.0) {
                Ok(x)
            } else {
                Err(Error::Config(format!(
                    "initial field {name} must be {} finite, got {x}",
                    if positive { "positive and" } else { "" }
                )))
            }
        };
        match self.family.as_str() {
            "exponential" => {
                self.forbid(&[
                    ("v0", self.v0.is_some()),
                    ("number", self.number.is_some()),
                    ("volumes", self.volumes.is_some()),
                    ("densities", self.densities.is_some()),
                ])?;
                Ok(InitialCondition::Exponential {
                    amplitude: fin("amplitude", self.amplitude.unwrap_or(1.0), true)?,
                    mean: fin("mean", self.mean.unwrap_or(1.0), true)?,
                })
            }
            "monodisperse" => {
                self.forbid(&[
                    ("amplitude", self.amplitude.is_some()),
                    ("mean", self.mean.is_some()),
                    ("volumes", self.volumes.is_some()),
                    ("densities", self.densities.is_some()),
                ])?;
                Ok(InitialCondition::Monodisperse {
                    v0: fin("v0", self.require("v0", self.v0)?, true)?,
                    number: fin("number", self.require("number", self.number)?, true)?,
                })
            }
            "table" => {
                self.forbid(&[
                    ("amplitude", self.amplitude.is_some()),
                    ("mean", self.mean.is_some()),
                    ("v0", self.v0.is_some()),
                    ("number", self.number.is_some()),
                ])?;
                let volumes = self.volumes.clone().ok_or_else(|| {
                    Error::Config("initial family \"table\" requires the field volumes".into())
                })?;
                let densities = self.densities.clone().ok_or_else(|| {
                    Error::Config("initial family \"table\" requires the field densities".into())
                })?;
                if volumes.len() != densities.len() || volumes.len() < 2 {
                    return Err(Error::Config(format!(
                        "initial table needs matching volumes/densities of length >= 2, \
                         got {} and {}",
                        volumes.len(),
                        densities.len()
                    )));
                }
                for w in volumes.windows(2) {
                    if !(w[0] < w[1]) {
                        return Err(Error::Config(
                            "initial table volumes must be strictly increasing".into(),
                        ));
                    }
                }
                for (i, (v, d)) in volumes.iter().zip(&densities).enumerate() {
                    if !(v.is_finite() && *v > 0.0 && d.is_finite() && *d >= 0.0) {
                        return Err(Error::Config(format!(
                            "initial table entry {i} must have positive volume and \
                             nonnegative density, got ({v}, {d})"
                        )));
                    }
                }
                Ok(InitialCondition::Table { volumes, densities })
            }
            other => Err(Error::Config(format!(
                "unknown initial family {other:?}; expected \"exponential\", \
                 \"monodisperse\", or \"table\""
            ))),
        }
    }
}

impl InitialCondition {
    /// Cell-average the datum onto the grid (which truncates it to
    /// `(v_min, n)` by construction) and account the continuum tails.
    pub fn discretize(&self, grid: &Grid) -> Result<(State, TruncationNote)> {
        let mut state = State::zeros(grid.cells());
        let note = match self {
            InitialCondition::Exponential { amplitude, mean } => {
                let (a0, mu) = (*amplitude, *mean);
                for c in 0..grid.cells() {
                    let (a, b) = (grid.edges()[c], grid.edges()[c + 1]);
                    // Exact cell number A mu (e^(-a/mu) - e^(-b/mu)), written
                    // through expm1 so narrow cells keep full precision.
                    let number = -a0 * mu * (-a / mu).exp() * (-(b - a) / mu).exp_m1();
                    state.g[c] = number / grid.widths()[c];
                }
                let (xl, xh) = (grid.v_min() / mu, grid.n() / mu);
                TruncationNote {
                    below_vmin_number: -a0 * mu * (-xl).exp_m1(),
                    below_vmin_mass: a0 * mu * mu * one_minus_exp_linear(xl),
                    above_n_number: a0 * mu * (-xh).exp(),
                    above_n_mass: a0 * mu * (-xh).exp() * (grid.n() + mu),
                }
            }
            InitialCondition::Monodisperse { v0, number } => {
                match grid.locate(*v0) {
                    CellLocation::Inside(c) => state.g[c] = number / grid.widths()[c],
                    _ => {
                        return Err(Error::Config(format!(
                            "monodisperse volume v0 = {v0} lies outside the grid \
                             ({}, {})",
                            grid.v_min(),
                            grid.n()
                        )));
                    }
                }
                TruncationNote::zero()
            }
            InitialCondition::Table { volumes, densities } => {
                for c in 0..grid.cells() {
                    let v = grid.reps()[c];
                    state.g[c] = match volumes.partition_point(|x| *x <= v) {
                        0 => 0.0,
                        k if k == volumes.len() => 0.0,
                        k => {
                            let (v0, v1) = (volumes[k - 1], volumes[k]);
                            let (d0, d1) = (densities[k - 1], densities[k]);
                            d0 + (d1 - d0) * (v - v0) / (v1 - v0)
                        }
                    };
                }
                TruncationNote::zero()
            }
        };
        Ok((state, note))
    }
}

/// Full solver configuration, mirroring the scenario file 1:1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub kernel: KernelSpec,
    pub efficiency: EfficiencySection,
    pub daughter: DaughterSpec,
    #[serde(default)]
    pub initial: InitialSection,
    pub grid: GridSection,
    pub truncation: TruncationSection,
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// A scenario resolved into runnable pieces. Obtained from
/// [`Scenario::resolve`] (report included, unjudged) or
/// [`Scenario::validate`] (report guaranteed to pass).
#[derive(Debug, Clone)]
pub struct Resolved {
    pub grid: Grid,
    pub truncation: TruncationConfig,
    pub integrator: IntegratorConfig,
    pub initial: InitialCondition,
    pub state: State,
    pub truncation_note: TruncationNote,
    pub admissibility: AdmissibilityReport,
}

impl Scenario {
    /// Parse a scenario from TOML text. Unknown keys are hard errors.
    pub fn parse_str(text: &str) -> Result<Scenario> {
        Scenario::parse_with_overrides(text, &[])
    }

    /// Parse with `key.path=value` overrides applied after file values.
    /// Values are interpreted as TOML scalars when they parse as one
    /// (numbers, booleans) and as strings otherwise, so
    /// `efficiency.model=constant:0.9` needs no extra quoting.
    pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<Scenario> {
        let mut tree: toml::Table = text
            .parse()
            .map_err(|e| Error::Config(format!("scenario file is not valid TOML: {e}")))?;
        for entry in overrides {
            let (path, raw) = entry.split_once('=').ok_or_else(|| {
                Error::Config(format!("override {entry:?} is not of the form key.path=value"))
            })?;
            set_path(&mut tree, path.trim(), parse_override_value(raw.trim()))?;
        }
        toml::Value::Table(tree)
            .try_into()
            .map_err(|e| Error::Config(format!("invalid scenario: {e}")))
    }

    /// Serialize back to TOML. `parse_str(to_toml(s)) == s` for every valid
    /// scenario.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("cannot serialize scenario: {e}")))
    }

    /// Build the runnable pieces and evaluate admissibility without judging
    /// it: configuration errors (malformed grid, integrator, initial data)
    /// still fail, but an inadmissible parameter set comes back as a report
    /// with failed flags, so callers can display it.
    pub fn resolve(&self) -> Result<Resolved> {
        let tau = Tau::from_flag(self.truncation.tau)?;
        let truncation = TruncationConfig::new(self.grid.n, tau)?;
        let grid = Grid::geometric(self.grid.n, self.grid.cells, self.grid.resolved_v_min())?;
        let integrator = self.integrator.to_config();
        integrator.validate()?;
        let initial = self.initial.resolve()?;
        let (state, truncation_note) = initial.discretize(&grid)?;

        let mut admissibility =
            check_admissibility(&self.kernel, &self.efficiency.model, &self.daughter);
        merge_a4(&mut admissibility, &state, &grid, self.kernel.alpha);

        Ok(Resolved {
            grid,
            truncation,
            integrator,
            initial,
            state,
            truncation_note,
            admissibility,
        })
    }

    /// The hard admissibility gate: like [`Scenario::resolve`], but refuses
    /// any scenario whose report does not pass all four hypotheses.
    pub fn validate(&self) -> Result<Resolved> {
        let resolved = self.resolve()?;
        if resolved.admissibility.passes() {
            Ok(resolved)
        } else {
            Err(Error::Inadmissible(format!(
                "scenario rejected by the admissibility gate:\n  - {}",
                resolved.admissibility.reasons.join("\n  - ")
            )))
        }
    }
}

/// Fill in the initial-datum flag: the discretized state must be nonnegative
/// with finite singular and volume moments on the grid.
fn merge_a4(report: &mut AdmissibilityReport, state: &State, grid: &Grid, alpha: f64) {
    let mut ok = true;
    let mut worst = 0.0f64;
    for c in 0..grid.cells() {
        let g = state.g[c];
        if !g.is_finite() || g < 0.0 {
            ok = false;
            worst = g;
            break;
        }
    }
    if !ok {
        report.passes_a4 = false;
        report
            .reasons
            .push(format!("(a4) initial density has an invalid cell value {worst}"));
        return;
    }
    // Finite moments: p = -2 alpha needs alpha < 1/2, which (a1) certifies;
    // evaluate only when the exponent is usable so an (a1) failure does not
    // double-report.
    let p = -2.0 * alpha;
    if p > -1.0 {
        let (mut m, mut m1) = (0.0, 0.0);
        for c in 0..grid.cells() {
            let ws = grid
                .cell_weight_integral(c, p)
                .and_then(|w| grid.cell_weight_integral(c, 1.0).map(|w1| (w, w1)));
            match ws {
                Ok((w, w1)) => {
                    m += state.g[c] * w;
                    m1 += state.g[c] * w1;
                }
                Err(_) => return,
            }
        }
        if !(m.is_finite() && m1.is_finite()) {
            report.passes_a4 = false;
            report.reasons.push(format!(
                "(a4) initial moments are not finite: m_(-2 alpha) = {m}, m_1 = {m1}"
            ));
        }
    }
}

/// Interpret an override value: TOML scalar when it parses as one, string
/// otherwise.
fn parse_override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut table) => table.remove("v").expect("value key just written"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Set `path` (dot-separated) in the TOML tree, creating intermediate
/// tables. Refuses to tunnel through a non-table value.
fn set_path(root: &mut toml::Table, path: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override path {path:?} has an empty segment")));
    }
    let mut table = root;
    for part in &parts[..parts.len() - 1] {
        table = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| {
                Error::Config(format!(
                    "override path {path:?} descends into the non-table key {part:?}"
                ))
            })?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
