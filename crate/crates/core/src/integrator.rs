//! Time stepping: classic fixed-step RK4 and the adaptive Bogacki-Shampine
//! RK23 pair, both with positivity rejection.
//!
//! The integrated vector is the whole [`State`] (densities plus the two mass
//! accounts), advanced uniformly so that linear invariants of the right-hand
//! side survive any Runge-Kutta combination exactly. A step is rejected if
//! any stage argument or the proposed end state carries a negative density;
//! rejection halves the step, down to `dt_init * 2^-20`, below which the
//! integration fails hard. RK23 additionally rejects on the embedded error
//! estimate.
//!
//! Save times fall exactly on the requested cadence: steps are clipped to
//! the next save boundary and the clock is assigned (not accumulated) there,
//! so runs with different step-size histories share bitwise-identical save
//! times.

use serde::Serialize;

use crate::error::Error;
use crate::grid::Grid;
use crate::operators::{rhs, KernelTables, Rhs, State};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    Rk4Fixed,
    Rk23Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Initial (RK4: permanent) step size; defaults to
    /// [`default_dt_init`] when absent.
    pub dt_init: Option<f64>,
    /// RK23 relative error tolerance.
    pub rel_tol: f64,
    /// RK23 absolute error tolerance.
    pub abs_tol: f64,
    pub t_end: f64,
    /// Cadence of saved states; the final time is always saved.
    pub save_every: f64,
    /// Attempt budget (accepted + rejected steps).
    pub max_steps: u64,
}

impl IntegratorConfig {
    pub fn validate(&self) -> crate::error::Result<()> {
        let pos = |x: f64| x.is_finite() && x > 0.0;
        if !pos(self.t_end) {
            return Err(Error::Config(format!("t_end must be > 0, got {}", self.t_end)));
        }
        if !pos(self.save_every) {
            return Err(Error::Config(format!(
                "save_every must be > 0, got {}",
                self.save_every
            )));
        }
        if !(pos(self.rel_tol) && pos(self.abs_tol)) {
            return Err(Error::Config(format!(
                "tolerances must be > 0, got rel_tol = {}, abs_tol = {}",
                self.rel_tol, self.abs_tol
            )));
        }
        if let Some(dt) = self.dt_init {
            if !pos(dt) {
                return Err(Error::Config(format!("dt_init must be > 0, got {dt}")));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct StepStats {
    pub accepted: u64,
    pub rejected_positivity: u64,
    pub rejected_error: u64,
    pub rhs_evals: u64,
    pub dt_min_used: f64,
    pub dt_max_used: f64,
}

impl StepStats {
    fn new() -> StepStats {
        StepStats {
            accepted: 0,
            rejected_positivity: 0,
            rejected_error: 0,
            rhs_evals: 0,
            dt_min_used: f64::INFINITY,
            dt_max_used: 0.0,
        }
    }
}

/// Saved states at the save cadence, always including `t = 0` and the final
/// time reached.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub stats: StepStats,
}

/// Integration failure carrying the partial trajectory accumulated so far.
#[derive(Debug)]
pub struct IntegrationError {
    pub reason: String,
    pub t_reached: f64,
    pub partial: Trajectory,
}

impl From<IntegrationError> for Error {
    fn from(e: IntegrationError) -> Error {
        Error::Integration { reason: e.reason, t_reached: e.t_reached }
    }
}

/// Default initial step: a tenth of the fastest per-cell collision time,
/// `0.1 / max_i sum_j phi(xi_i, xi_j) N_j(0)`, falling back to `t_end` for
/// collisionless states.
pub fn default_dt_init(state: &State, grid: &Grid, tables: &KernelTables, t_end: f64) -> f64 {
    let widths = grid.widths();
    let mut row = vec![0.0; state.g.len()];
    for p in tables.pair_rates() {
        let (i, j, phi) = p;
        row[i] += phi * state.g[j] * widths[j];
        if i != j {
            row[j] += phi * state.g[i] * widths[i];
        }
    }
    let max_rate = row.iter().copied().fold(0.0, f64::max);
    if max_rate > 0.0 {
        (0.1 / max_rate).min(t_end)
    } else {
        t_end
    }
}

fn axpy(y: &State, c: f64, k: &Rhs) -> State {
    State {
        g: y.g.iter().zip(&k.dg).map(|(y, d)| y + c * d).collect(),
        lost_mass: y.lost_mass + c * k.dlost_mass,
        subgrid_mass: y.subgrid_mass + c * k.dsubgrid_mass,
    }
}

fn combine(y: &State, dt: f64, terms: &[(f64, &Rhs)]) -> State {
    let mut g = y.g.clone();
    for (c, k) in terms {
        for (gi, di) in g.iter_mut().zip(&k.dg) {
            *gi += dt * c * di;
        }
    }
    let mut lost = y.lost_mass;
    let mut sub = y.subgrid_mass;
    for (c, k) in terms {
        lost += dt * c * k.dlost_mass;
        sub += dt * c * k.dsubgrid_mass;
    }
    State { g, lost_mass: lost, subgrid_mass: sub }
}

fn negative(state: &State) -> bool {
    state.g.iter().any(|&g| g < 0.0)
}

enum Attempt {
    Accepted { next: State, error_ratio: f64 },
    RejectedPositivity,
    RejectedError { error_ratio: f64 },
}

/// One RK4 or RK23 attempt from `(t, y)` with step `dt`. Checks every stage
/// argument and the result for positivity before evaluating the right-hand
/// side there.
fn attempt_step(
    y: &State,
    dt: f64,
    grid: &Grid,
    tables: &KernelTables,
    cfg: &IntegratorConfig,
    stats: &mut StepStats,
) -> crate::error::Result<Attempt> {
    let mut eval = |s: &State| -> crate::error::Result<Rhs> {
        stats.rhs_evals += 1;
        rhs(s, grid, tables)
    };
    match cfg.method {
        Method::Rk4Fixed => {
            let k1 = eval(y)?;
            let s2 = axpy(y, 0.5 * dt, &k1);
            if negative(&s2) {
                return Ok(Attempt::RejectedPositivity);
            }
            let k2 = eval(&s2)?;
            let s3 = axpy(y, 0.5 * dt, &k2);
            if negative(&s3) {
                return Ok(Attempt::RejectedPositivity);
            }
            let k3 = eval(&s3)?;
            let s4 = axpy(y, dt, &k3);
            if negative(&s4) {
                return Ok(Attempt::RejectedPositivity);
            }
            let k4 = eval(&s4)?;
            let next = combine(
                y,
                dt,
                &[(1.0 / 6.0, &k1), (1.0 / 3.0, &k2), (1.0 / 3.0, &k3), (1.0 / 6.0, &k4)],
            );
            if negative(&next) {
                return Ok(Attempt::RejectedPositivity);
            }
            Ok(Attempt::Accepted { next, error_ratio: 0.0 })
        }
        Method::Rk23Adaptive => {
            // Bogacki-Shampine 3(2) pair.
            let k1 = eval(y)?;
            let s2 = axpy(y, 0.5 * dt, &k1);
            if negative(&s2) {
                return Ok(Attempt::RejectedPositivity);
            }
            let k2 = eval(&s2)?;
            let s3 = axpy(y, 0.75 * dt, &k2);
            if negative(&s3) {
                return Ok(Attempt::RejectedPositivity);
            }
            let k3 = eval(&s3)?;
            let next = combine(
                y,
                dt,
                &[(2.0 / 9.0, &k1), (1.0 / 3.0, &k2), (4.0 / 9.0, &k3)],
            );
            if negative(&next) {
                return Ok(Attempt::RejectedPositivity);
            }
            let k4 = eval(&next)?;
            // Embedded 2nd-order error estimate.
            let coeff = [-5.0 / 72.0, 1.0 / 12.0, 1.0 / 9.0, -1.0 / 8.0];
            let ks = [&k1, &k2, &k3, &k4];
            let mut ratio = 0.0f64;
            for c in 0..y.g.len() {
                let err: f64 = (0..4).map(|m| coeff[m] * ks[m].dg[c]).sum::<f64>() * dt;
                let scale = cfg.abs_tol + cfg.rel_tol * y.g[c].abs().max(next.g[c].abs());
                ratio = ratio.max((err / scale).abs());
            }
            type AccountLens = fn(&Rhs) -> f64;
            let accounts: [(AccountLens, f64, f64); 2] = [
                (|r| r.dlost_mass, y.lost_mass, next.lost_mass),
                (|r| r.dsubgrid_mass, y.subgrid_mass, next.subgrid_mass),
            ];
            for (sel, ya, yb) in accounts {
                let err: f64 = (0..4).map(|m| coeff[m] * sel(ks[m])).sum::<f64>() * dt;
                let scale = cfg.abs_tol + cfg.rel_tol * ya.abs().max(yb.abs());
                ratio = ratio.max((err / scale).abs());
            }
            if ratio > 1.0 {
                Ok(Attempt::RejectedError { error_ratio: ratio })
            } else {
                Ok(Attempt::Accepted { next, error_ratio: ratio })
            }
        }
    }
}

/// Integrate from `initial` to `cfg.t_end`, saving on the `save_every`
/// cadence. Deterministic for identical inputs. On failure the error carries
/// the partial trajectory saved so far.
// The error variant intentionally carries the partial trajectory so callers
// can emit what was computed before the failure.
#[allow(clippy::result_large_err)]
pub fn integrate(
    initial: &State,
    grid: &Grid,
    tables: &KernelTables,
    cfg: &IntegratorConfig,
) -> std::result::Result<Trajectory, IntegrationError> {
    let fail_cfg = |msg: String| IntegrationError {
        reason: msg,
        t_reached: 0.0,
        partial: Trajectory {
            times: vec![0.0],
            states: vec![initial.clone()],
            stats: StepStats::new(),
        },
    };
    if let Err(e) = cfg.validate() {
        return Err(fail_cfg(e.to_string()));
    }
    if negative(initial) || initial.g.len() != tables.cells() {
        return Err(fail_cfg("initial state is negative or mis-sized".into()));
    }

    let dt0 = cfg
        .dt_init
        .unwrap_or_else(|| default_dt_init(initial, grid, tables, cfg.t_end))
        .min(cfg.t_end);
    let dt_floor = dt0 * 2.0f64.powi(-20);

    let mut stats = StepStats::new();
    let mut times = vec![0.0];
    let mut states = vec![initial.clone()];
    let mut state = initial.clone();
    let mut t = 0.0f64;
    let mut dt_prop = dt0;
    let mut attempts: u64 = 0;
    let mut boundary_index: u64 = 1;

    let fail = |reason: String,
                t: f64,
                times: Vec<f64>,
                states: Vec<State>,
                stats: StepStats| IntegrationError {
        reason,
        t_reached: t,
        partial: Trajectory { times, states, stats },
    };

    while t < cfg.t_end {
        let target = (boundary_index as f64 * cfg.save_every).min(cfg.t_end);
        if target <= t {
            boundary_index += 1;
            continue;
        }
        while t < target {
            if attempts >= cfg.max_steps {
                return Err(fail(
                    format!("step budget of {} attempts exhausted", cfg.max_steps),
                    t,
                    times,
                    states,
                    stats,
                ));
            }
            attempts += 1;
            let gap = target - t;
            let dt = dt_prop.min(gap);
            let outcome = match attempt_step(&state, dt, grid, tables, cfg, &mut stats) {
                Ok(o) => o,
                Err(e) => {
                    return Err(fail(e.to_string(), t, times, states, stats));
                }
            };
            match outcome {
                Attempt::Accepted { next, error_ratio } => {
                    stats.accepted += 1;
                    stats.dt_min_used = stats.dt_min_used.min(dt);
                    stats.dt_max_used = stats.dt_max_used.max(dt);
                    state = next;
                    if dt >= gap {
                        t = target; // land on the boundary exactly
                    } else {
                        t += dt;
                    }
                    dt_prop = match cfg.method {
                        Method::Rk4Fixed => dt0,
                        Method::Rk23Adaptive => {
                            let grow = if error_ratio > 0.0 {
                                (0.9 * error_ratio.powf(-1.0 / 3.0)).clamp(0.2, 5.0)
                            } else {
                                5.0
                            };
                            dt * grow
                        }
                    };
                }
                Attempt::RejectedPositivity => {
                    stats.rejected_positivity += 1;
                    dt_prop = dt * 0.5;
                    if dt_prop < dt_floor {
                        return Err(fail(
                            format!(
                                "positivity rejection drove the step below \
                                 dt_init * 2^-20 = {dt_floor:.3e}"
                            ),
                            t,
                            times,
                            states,
                            stats,
                        ));
                    }
                }
                Attempt::RejectedError { error_ratio } => {
                    stats.rejected_error += 1;
                    dt_prop = dt * (0.9 * error_ratio.powf(-1.0 / 3.0)).clamp(0.2, 0.9);
                    if dt_prop < dt_floor {
                        return Err(fail(
                            format!(
                                "error control drove the step below \
                                 dt_init * 2^-20 = {dt_floor:.3e}"
                            ),
                            t,
                            times,
                            states,
                            stats,
                        ));
                    }
                }
            }
        }
        times.push(t);
        states.push(state.clone());
        boundary_index += 1;
    }

    Ok(Trajectory { times, states, stats })
}
