//! End-to-end orchestration: validate a scenario, integrate it, run every
//! audit, and collect hard-invariant verdicts; plus the truncation-refinement
//! convergence study.
//!
//! Runs are strictly serial and deterministic: identical scenarios produce
//! bitwise-identical trajectories and reports.

use serde::Serialize;

use crate::diagnostics::{
    convergence_metric, equicontinuity, gronwall_bounds, moments, weak_residual, BoundReport,
    EquicontinuityReport, MomentSeries, WeakResidualRow,
};
use crate::error::{Error, Result};
use crate::grid::{Grid, Tau};
use crate::integrator::{integrate, Trajectory};
use crate::kernel::AdmissibilityReport;
use crate::operators::{build_tables, loss_rate, KernelTables};
use crate::scenario::{Resolved, Scenario, TruncationNote};
use crate::testfn::TestFunction;

/// Balance-identity tolerance: the scheme is mass-exact, so any drift is
/// integrator round-off and must stay at this scale.
pub const BALANCE_TOL: f64 = 1e-8;

/// Cross-check of the `lost_mass` account for non-conservative runs: the
/// account is compared against an independent trapezoid quadrature of the
/// instantaneous loss rate over the save times.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LossAudit {
    pub lost_final: f64,
    pub quadrature: f64,
    pub rel_error: f64,
}

/// Everything a run produces, audits included.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub scenario: Scenario,
    pub grid: Grid,
    pub truncation_note: TruncationNote,
    pub admissibility: AdmissibilityReport,
    pub trajectory: Trajectory,
    pub moments: MomentSeries,
    pub bounds: Option<BoundReport>,
    pub weak: Vec<WeakResidualRow>,
    pub equicontinuity: Option<EquicontinuityReport>,
    /// Present for non-conservative runs.
    pub loss_audit: Option<LossAudit>,
    /// Hard-invariant failures, empty on a clean run.
    pub violations: Vec<String>,
    /// Set when integration stopped early; the trajectory then holds the
    /// partial history up to the failure time.
    pub integration_failure: Option<String>,
}

impl RunReport {
    /// Process exit code: 0 clean, 1 invariant violation, 3 integration
    /// failure. (Configuration and admissibility problems never reach a
    /// report; they surface as errors with code 2.)
    pub fn exit_code(&self) -> u8 {
        if self.integration_failure.is_some() {
            3
        } else if self.violations.is_empty() {
            0
        } else {
            1
        }
    }
}

/// Validate, integrate, audit. Fails only on configuration or admissibility
/// errors; integration failures are recorded in the report so partial
/// results can still be emitted.
pub fn run(scenario: &Scenario) -> Result<RunReport> {
    let resolved = scenario.validate()?;
    let tables = build_tables(
        &resolved.grid,
        &resolved.truncation,
        &scenario.kernel,
        &scenario.efficiency.model,
        &scenario.daughter,
    )?;
    let (trajectory, integration_failure) =
        match integrate(&resolved.state, &resolved.grid, &tables, &resolved.integrator) {
            Ok(t) => (t, None),
            Err(e) => {
                let msg = format!("{} (reached t = {})", e.reason, e.t_reached);
                (e.partial, Some(msg))
            }
        };
    audit(scenario.clone(), resolved, &tables, trajectory, integration_failure)
}

fn audit(
    scenario: Scenario,
    resolved: Resolved,
    tables: &KernelTables,
    trajectory: Trajectory,
    integration_failure: Option<String>,
) -> Result<RunReport> {
    let grid = resolved.grid;
    let alpha = scenario.kernel.alpha;
    let family = TestFunction::default_family();
    let mut violations = Vec::new();

    let moments = moments(&trajectory, &grid, alpha)?;
    let worst_balance = moments.max_balance_residual();
    if worst_balance > BALANCE_TOL {
        violations.push(format!(
            "balance identity violated: max residual {worst_balance:.3e} > {BALANCE_TOL:.0e}"
        ));
    }

    for (t, state) in trajectory.times.iter().zip(&trajectory.states) {
        let min = state.min_density();
        if !(min >= 0.0) {
            violations.push(format!("negative density {min:.3e} at t = {t}"));
            break;
        }
    }

    if resolved.truncation.tau == Tau::Conservative {
        if let Some((t, state)) = trajectory
            .times
            .iter()
            .zip(&trajectory.states)
            .find(|(_, s)| s.lost_mass != 0.0)
        {
            violations.push(format!(
                "conservative run booked lost mass {} at t = {t}",
                state.lost_mass
            ));
        }
    }

    let enough_saves = trajectory.states.len() >= 2;

    let bounds = if enough_saves {
        let report = gronwall_bounds(&scenario.kernel, &scenario.daughter, &grid, &trajectory)?;
        if !report.sup_satisfied {
            violations.push(format!(
                "growth bound violated: observed sup {:.6e} > bound {:.6e}",
                report.observed_sup, report.b_sup
            ));
        }
        if !report.convex_satisfied {
            violations.push(format!(
                "convex-moment bound violated: observed {:.6e}, ln bound {:.6e}",
                report.observed_convex_sup, report.g_bound_ln
            ));
        }
        Some(report)
    } else {
        None
    };

    let mut weak = Vec::new();
    if enough_saves {
        for h in &family {
            weak.push(weak_residual(&trajectory, &grid, tables, h)?);
        }
    }

    let equicontinuity = match &bounds {
        Some(b) if enough_saves => {
            let report = equicontinuity(&trajectory, &grid, alpha, b.theta_rate, &family)?;
            if !report.satisfied {
                violations.push(format!(
                    "equicontinuity violated: worst ratio {:.6} between t = {} and t = {}",
                    report.worst_ratio, report.worst_pair.0, report.worst_pair.1
                ));
            }
            Some(report)
        }
        _ => None,
    };

    let loss_audit = if resolved.truncation.tau == Tau::NonConservative && enough_saves {
        let rates: Vec<f64> = trajectory
            .states
            .iter()
            .map(|s| loss_rate(s, &grid, tables))
            .collect::<Result<_>>()?;
        let mut quadrature = 0.0;
        for k in 0..rates.len() - 1 {
            let dt = trajectory.times[k + 1] - trajectory.times[k];
            quadrature += 0.5 * (rates[k] + rates[k + 1]) * dt;
        }
        let lost_final = trajectory.states.last().expect("non-empty").lost_mass;
        let scale = lost_final.abs().max(quadrature.abs());
        let rel_error =
            if scale > 0.0 { (lost_final - quadrature).abs() / scale } else { 0.0 };
        Some(LossAudit { lost_final, quadrature, rel_error })
    } else {
        None
    };

    Ok(RunReport {
        scenario,
        grid,
        truncation_note: resolved.truncation_note,
        admissibility: resolved.admissibility,
        trajectory,
        moments,
        bounds,
        weak,
        equicontinuity,
        loss_audit,
        violations,
        integration_failure,
    })
}

/// One row of the convergence study: the distance from the run at `n` to the
/// run at the next size (same truncation regime), plus the distance between
/// the two regimes at this size, measured at the final time.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConvergenceRow {
    pub n: f64,
    pub tau: u8,
    /// Weighted distance to the next-larger truncation size; absent on the
    /// largest size.
    pub metric_to_next: Option<f64>,
    /// Distance between the conservative and non-conservative runs at this
    /// size, final save only.
    pub cross_final: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceStudy {
    /// Shared mesh floor used by every run.
    pub v_min: f64,
    pub rows: Vec<ConvergenceRow>,
}

/// Run the base scenario at each truncation size in `ns` (non-decreasing,
/// at least three sizes) under both truncation regimes, all on a shared mesh
/// floor so the grids nest, and measure pairwise refinement distances plus
/// the conservative/non-conservative cross-distance.
pub fn convergence_study(base: &Scenario, ns: &[f64]) -> Result<ConvergenceStudy> {
    if ns.len() < 3 {
        return Err(Error::Config(format!(
            "a refinement sequence needs at least three sizes, got {}",
            ns.len()
        )));
    }
    if ns.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("truncation sizes must be non-decreasing".into()));
    }
    let n_max = *ns.last().expect("non-empty");
    let v_min = base.grid.v_min.unwrap_or_else(|| Grid::default_v_min(n_max));
    let alpha = base.kernel.alpha;
    let family = TestFunction::default_family();

    struct Run {
        grid: Grid,
        traj: Trajectory,
    }
    let mut runs: Vec<Vec<Run>> = Vec::with_capacity(2); // [tau=1, tau=0]
    for tau in [1u8, 0u8] {
        let mut regime = Vec::with_capacity(ns.len());
        for &n in ns {
            let mut s = base.clone();
            s.grid.n = n;
            s.grid.v_min = Some(v_min);
            s.truncation.tau = tau;
            let resolved = s.validate()?;
            let tables = build_tables(
                &resolved.grid,
                &resolved.truncation,
                &s.kernel,
                &s.efficiency.model,
                &s.daughter,
            )?;
            let traj = integrate(&resolved.state, &resolved.grid, &tables, &resolved.integrator)
                .map_err(Error::from)?;
            regime.push(Run { grid: resolved.grid, traj });
        }
        runs.push(regime);
    }

    let mut rows = Vec::with_capacity(2 * ns.len());
    for (regime_idx, tau) in [(0usize, 1u8), (1usize, 0u8)] {
        for (k, &n) in ns.iter().enumerate() {
            let run = &runs[regime_idx][k];
            let metric_to_next = if k + 1 < ns.len() {
                let next = &runs[regime_idx][k + 1];
                Some(convergence_metric(
                    &run.traj.times,
                    &run.traj.states,
                    &run.grid,
                    &next.traj.times,
                    &next.traj.states,
                    &next.grid,
                    alpha,
                    &family,
                )?)
            } else {
                None
            };
            let (a, b) = (&runs[0][k], &runs[1][k]);
            let last = a.traj.states.len() - 1;
            let cross_final = convergence_metric(
                &a.traj.times[last..],
                &a.traj.states[last..],
                &a.grid,
                &b.traj.times[last..],
                &b.traj.states[last..],
                &b.grid,
                alpha,
                &family,
            )?;
            rows.push(ConvergenceRow { n, tau, metric_to_next, cross_final });
        }
    }
    Ok(ConvergenceStudy { v_min, rows })
}
