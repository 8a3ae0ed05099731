//! Run audits: moment series and volume balance, a-priori growth bounds,
//! weak-form residuals, equicontinuity of the singular moment, and the
//! weighted distance between runs on nested grids.
//!
//! Two mass readings appear side by side. `m1` is the quadrature moment
//! `sum_c g_c int_cell v dv` of the piecewise-constant density; it carries an
//! O((cell ratio - 1)^2) representation offset. `mass_pivot` is the
//! sectional mass functional `sum_c xi_c g_c width_c`, the quantity the
//! redistribution rules conserve exactly; balance audits use it so that
//! conservation is checked at round-off scale, not at discretisation scale.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::integrator::Trajectory;
use crate::kernel::{compute_eta, DaughterSpec, KernelFamily, KernelSpec};
use crate::operators::{neumaier_add, KernelTables, PairKind, State};
use crate::testfn::TestFunction;

/// One saved time in a [`MomentSeries`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MomentRow {
    pub t: f64,
    pub m_neg2alpha: f64,
    pub m_negalpha: f64,
    pub m0: f64,
    pub m1: f64,
    pub m2: f64,
    pub mass_pivot: f64,
    pub lost_mass: f64,
    pub subgrid_mass: f64,
    /// `|mass_pivot + lost_mass + subgrid_mass - reference| / reference`,
    /// the round-off-scale conservation audit.
    pub balance_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentSeries {
    pub alpha: f64,
    /// Initial total volume `mass_pivot(0) + lost(0) + subgrid(0)`.
    pub mass_reference: f64,
    pub rows: Vec<MomentRow>,
}

impl MomentSeries {
    pub fn max_balance_residual(&self) -> f64 {
        self.rows.iter().map(|r| r.balance_residual).fold(0.0, f64::max)
    }
}

/// Quadrature moment `sum_c g_c int_cell v^p dv`.
pub fn moment(state: &State, grid: &Grid, p: f64) -> Result<f64> {
    let (mut sum, mut comp) = (0.0, 0.0);
    for c in 0..grid.cells() {
        neumaier_add(&mut sum, &mut comp, state.g[c] * grid.cell_weight_integral(c, p)?);
    }
    Ok(sum + comp)
}

/// Sectional mass functional `sum_c xi_c g_c width_c`, conserved exactly by
/// the redistribution rules.
pub fn pivot_mass(state: &State, grid: &Grid) -> f64 {
    let (mut sum, mut comp) = (0.0, 0.0);
    for c in 0..grid.cells() {
        neumaier_add(&mut sum, &mut comp, grid.reps()[c] * state.g[c] * grid.widths()[c]);
    }
    sum + comp
}

/// Convex moment `sum_c g_c int_cell v^(3/2) dv`, the functional the
/// uniform-integrability bound controls.
pub fn convex_moment(state: &State, grid: &Grid) -> Result<f64> {
    moment(state, grid, 1.5)
}

/// Moment series over a trajectory, with the balance audit column.
pub fn moments(traj: &Trajectory, grid: &Grid, alpha: f64) -> Result<MomentSeries> {
    if traj.states.is_empty() {
        return Err(Error::Domain("trajectory has no saved states".into()));
    }
    let first = &traj.states[0];
    let mass_reference = pivot_mass(first, grid) + first.lost_mass + first.subgrid_mass;
    let mut rows = Vec::with_capacity(traj.states.len());
    for (t, state) in traj.times.iter().zip(&traj.states) {
        let mass_pivot = pivot_mass(state, grid);
        let total = mass_pivot + state.lost_mass + state.subgrid_mass;
        let drift = (total - mass_reference).abs();
        let balance_residual = if mass_reference > 0.0 { drift / mass_reference } else { drift };
        rows.push(MomentRow {
            t: *t,
            m_neg2alpha: moment(state, grid, -2.0 * alpha)?,
            m_negalpha: moment(state, grid, -alpha)?,
            m0: moment(state, grid, 0.0)?,
            m1: moment(state, grid, 1.0)?,
            m2: moment(state, grid, 2.0)?,
            mass_pivot,
            lost_mass: state.lost_mass,
            subgrid_mass: state.subgrid_mass,
            balance_residual,
        });
    }
    Ok(MomentSeries { alpha, mass_reference, rows })
}

/// Growth-bound constants `(a, b)` of the singular-plus-mass norm:
/// `a = 4 k N1 (1 + eta)`, `b = 2 k N1^2 (2 + eta)`.
pub fn gronwall_constants(k: f64, n1_in: f64, eta: f64) -> (f64, f64) {
    (
        4.0 * k * n1_in * (1.0 + eta),
        2.0 * k * n1_in * n1_in * (2.0 + eta),
    )
}

/// Equicontinuity rate constant (modulus slope per unit time gap) at
/// window scale lambda = 1:
/// `(1/2) k ||width||_inf (3 (1 + lambda) + 13 (theta+2)/(theta+1-alpha)) B^2`.
pub fn theta_rate_bound(k: f64, max_width: f64, theta: f64, alpha: f64, b_sup: f64) -> f64 {
    let lambda = 1.0;
    0.5 * k
        * max_width
        * (3.0 * (1.0 + lambda) + 13.0 * (theta + 2.0) / (theta + 1.0 - alpha))
        * b_sup
        * b_sup
}

/// A-priori bounds compared against the observed trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub k: f64,
    pub alpha: f64,
    pub theta: f64,
    pub eta: f64,
    pub t_end: f64,
    /// Initial volume moment `N1 = m1(0)`.
    pub n1_in: f64,
    /// Initial combined norm `m_{-2 alpha}(0) + m1(0)`.
    pub norm_in: f64,
    pub a: f64,
    pub b: f64,
    /// Bound on the combined norm at `t_end`.
    pub b1: f64,
    /// Bound `B = B1 + N1` entering the rate constants.
    pub b_sup: f64,
    /// Equicontinuity rate constant at lambda = 1.
    pub theta_rate: f64,
    /// Initial convex moment `int v^(3/2) g dv`.
    pub upsilon_in: f64,
    /// Uniform-integrability bound on the convex moment; may overflow to
    /// infinity for stiff parameters, in which case `g_bound_ln` stays
    /// meaningful.
    pub g_bound: f64,
    pub g_bound_ln: f64,
    pub observed_sup: f64,
    pub observed_convex_sup: f64,
    pub sup_satisfied: bool,
    pub convex_satisfied: bool,
}

/// Evaluate the a-priori growth bounds along a trajectory and compare them
/// with the observed moments. Requires an envelope-form kernel (the
/// singular bound itself or a constant): `sum`/`product` kernels have no
/// admissible envelope constant.
pub fn gronwall_bounds(
    kernel: &KernelSpec,
    daughter: &DaughterSpec,
    grid: &Grid,
    traj: &Trajectory,
) -> Result<BoundReport> {
    match kernel.family {
        KernelFamily::SingularBound | KernelFamily::Constant => {}
        other => {
            return Err(Error::Inadmissible(format!(
                "growth bounds need an envelope-form kernel, got {other}"
            )));
        }
    }
    if traj.states.is_empty() {
        return Err(Error::Domain("trajectory has no saved states".into()));
    }
    let k = kernel.k;
    let alpha = kernel.alpha;
    let theta = daughter.theta;
    let eta = compute_eta(theta, alpha)?;
    let t_end = *traj.times.last().expect("non-empty trajectory");

    let first = &traj.states[0];
    let n1_in = moment(first, grid, 1.0)?;
    let norm_in = moment(first, grid, -2.0 * alpha)? + n1_in;
    let upsilon_in = convex_moment(first, grid)?;

    let (a, b) = gronwall_constants(k, n1_in, eta);
    let b1 = if a > 0.0 {
        let ea = (a * t_end).exp();
        ea * norm_in + b / a * (ea - 1.0)
    } else {
        norm_in // collisionless limit: no growth
    };
    let b_sup = b1 + n1_in;
    let max_width = grid.widths().iter().copied().fold(0.0, f64::max);
    let theta_rate = theta_rate_bound(k, max_width, theta, alpha, b_sup);

    let linear = upsilon_in + 48.0 * k * b_sup * b_sup * t_end;
    let g_bound = linear * (40.0 * k * b_sup * t_end).exp();
    let g_bound_ln = linear.ln() + 40.0 * k * b_sup * t_end;

    let mut observed_sup = 0.0f64;
    let mut observed_convex_sup = 0.0f64;
    for state in &traj.states {
        let norm = moment(state, grid, -2.0 * alpha)? + moment(state, grid, 1.0)?;
        observed_sup = observed_sup.max(norm);
        observed_convex_sup = observed_convex_sup.max(convex_moment(state, grid)?);
    }

    let sup_satisfied = observed_sup <= b_sup || b_sup.is_infinite();
    // Compare in log space so an overflowed bound still certifies.
    let convex_satisfied = if g_bound.is_finite() {
        observed_convex_sup <= g_bound
    } else {
        observed_convex_sup.ln() <= g_bound_ln
    };

    Ok(BoundReport {
        k,
        alpha,
        theta,
        eta,
        t_end,
        n1_in,
        norm_in,
        a,
        b,
        b1,
        b_sup,
        theta_rate,
        upsilon_in,
        g_bound,
        g_bound_ln,
        observed_sup,
        observed_convex_sup,
        sup_satisfied,
        convex_satisfied,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EquicontinuityReport {
    /// Rate constant: the bound on the singular-moment increment per unit
    /// time gap.
    pub theta_rate: f64,
    /// Worst observed ratio increment / (rate * gap) over all save pairs and
    /// test functions.
    pub worst_ratio: f64,
    /// Save-time pair realising the worst ratio.
    pub worst_pair: (f64, f64),
    pub satisfied: bool,
}

/// Check equicontinuity in time of the singular moment over the unit
/// window: for every pair of save times `s < t` and every test function `h`,
/// `|int_0^1 v^-alpha h (g(t) - g(s)) dv| <= theta_rate * (t - s)`.
///
/// The window endpoint is fixed at lambda = 1, the tightest admissible
/// choice (the rate bound is monotone in lambda).
pub fn equicontinuity(
    traj: &Trajectory,
    grid: &Grid,
    alpha: f64,
    theta_rate: f64,
    family: &[TestFunction],
) -> Result<EquicontinuityReport> {
    if traj.states.len() < 2 {
        return Err(Error::Domain("equicontinuity needs at least two saves".into()));
    }
    let cells = grid.cells();
    // Per-cell weights int_{cell intersect (0,1)} v^-alpha h dv, one row per
    // test function.
    let mut weights = Vec::with_capacity(family.len());
    for h in family {
        let mut w = Vec::with_capacity(cells);
        for c in 0..cells {
            let lo = grid.edges()[c];
            let hi = grid.edges()[c + 1].min(1.0);
            w.push(if lo < 1.0 { h.weighted_integral(lo, hi, -alpha)? } else { 0.0 });
        }
        weights.push(w);
    }

    let mut worst_ratio = 0.0f64;
    let mut worst_pair = (0.0, 0.0);
    for si in 0..traj.states.len() {
        for ti in si + 1..traj.states.len() {
            let gap = traj.times[ti] - traj.times[si];
            if gap <= 0.0 {
                continue;
            }
            for w in &weights {
                let (mut sum, mut comp) = (0.0, 0.0);
                for ((gt, gs), wc) in traj.states[ti].g.iter().zip(&traj.states[si].g).zip(w) {
                    neumaier_add(&mut sum, &mut comp, (gt - gs) * wc);
                }
                let ratio = (sum + comp).abs() / (theta_rate * gap);
                if ratio > worst_ratio {
                    worst_ratio = ratio;
                    worst_pair = (traj.times[si], traj.times[ti]);
                }
            }
        }
    }
    Ok(EquicontinuityReport {
        theta_rate,
        worst_ratio,
        worst_pair,
        satisfied: worst_ratio <= 1.0 + 1e-9,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct WeakResidualRow {
    pub h: String,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// Instantaneous weak-form collision rate `sum_pairs rate * credit(h)`,
/// where the credit uses exactly the tables' redistribution targets. The
/// subgrid account carries no test-function credit: fragments below `v_min`
/// leave the resolved description on both sides of the identity.
fn weak_rate(
    state: &State,
    grid: &Grid,
    tables: &KernelTables,
    hbar: &[f64],
    prefix: &[f64],
) -> f64 {
    let widths = grid.widths();
    let (mut sum, mut comp) = (0.0, 0.0);
    for p in tables.pairs() {
        let (i, j) = (p.i as usize, p.j as usize);
        let sym = if i == j { 0.5 } else { 1.0 };
        let rate = sym * p.phi * state.g[i] * widths[i] * state.g[j] * widths[j];
        if rate == 0.0 {
            continue;
        }
        let death = hbar[i] + hbar[j];
        let credit = match p.kind {
            PairKind::Loss => -death,
            PairKind::Active {
                coag_lo,
                coag_frac_lo,
                coag_frac_hi,
                brk_top,
                brk_pl,
                brk_ph,
                s_pow,
            } => {
                let lo = coag_lo as usize;
                let mut coag = coag_frac_lo * hbar[lo];
                if coag_frac_hi > 0.0 {
                    coag += coag_frac_hi * hbar[lo + 1];
                }
                let top = brk_top as usize;
                let mut brk = tables.k_bot() * hbar[0] + prefix[top] + brk_pl * hbar[top];
                if brk_ph > 0.0 {
                    brk += brk_ph * hbar[top + 1];
                }
                brk *= s_pow;
                p.e * coag + (1.0 - p.e) * brk - death
            }
        };
        neumaier_add(&mut sum, &mut comp, rate * credit);
    }
    sum + comp
}

/// Weak-form audit for one test function: compares the exact change of
/// `int h g dv` over the trajectory against the trapezoid time quadrature of
/// the weak collision rate. Both sides use the same sectional lens, so the
/// residual isolates time-quadrature error and shrinks linearly (in fact
/// quadratically) with the save cadence.
pub fn weak_residual(
    traj: &Trajectory,
    grid: &Grid,
    tables: &KernelTables,
    h: &TestFunction,
) -> Result<WeakResidualRow> {
    if traj.states.len() < 2 {
        return Err(Error::Domain("weak residual needs at least two saves".into()));
    }
    let cells = grid.cells();
    let mut hbar = Vec::with_capacity(cells);
    for c in 0..cells {
        hbar.push(h.cell_mean(grid.edges()[c], grid.edges()[c + 1])?);
    }
    let prefix = tables.hat_credit_prefix(&hbar);

    let rates: Vec<f64> = traj
        .states
        .iter()
        .map(|s| weak_rate(s, grid, tables, &hbar, &prefix))
        .collect();
    let (mut rhs_sum, mut rhs_comp) = (0.0, 0.0);
    for k in 0..rates.len() - 1 {
        let dt = traj.times[k + 1] - traj.times[k];
        neumaier_add(&mut rhs_sum, &mut rhs_comp, 0.5 * (rates[k] + rates[k + 1]) * dt);
    }
    let rhs = rhs_sum + rhs_comp;

    let first = &traj.states[0];
    let last = traj.states.last().expect("non-empty");
    let (mut lhs_sum, mut lhs_comp) = (0.0, 0.0);
    for (((gl, gf), width), hb) in
        last.g.iter().zip(&first.g).zip(grid.widths()).zip(&hbar)
    {
        neumaier_add(&mut lhs_sum, &mut lhs_comp, (gl - gf) * width * hb);
    }
    let lhs = lhs_sum + lhs_comp;

    let normalizer = lhs.abs().max(rhs.abs()).max(pivot_mass(first, grid));
    let residual = if normalizer > 0.0 {
        (lhs - rhs).abs() / normalizer
    } else {
        (lhs - rhs).abs()
    };
    Ok(WeakResidualRow { h: h.to_string(), lhs, rhs, residual })
}

/// Conservative projection of cell numbers from `grid_a` onto `grid_b`
/// (both geometric, same floor, `n_a <= n_b`): returns densities on
/// `grid_b`.
fn project_density(g_a: &[f64], grid_a: &Grid, grid_b: &Grid) -> Vec<f64> {
    let ea = grid_a.edges();
    let eb = grid_b.edges();
    let mut number = vec![0.0; grid_b.cells()];
    let (mut k, mut d) = (0usize, 0usize);
    while k < grid_a.cells() && d < grid_b.cells() {
        let lo = ea[k].max(eb[d]);
        let hi = ea[k + 1].min(eb[d + 1]);
        if hi > lo {
            number[d] += g_a[k] * (hi - lo);
        }
        if ea[k + 1] <= eb[d + 1] {
            k += 1;
        } else {
            d += 1;
        }
    }
    number
        .iter()
        .zip(grid_b.widths())
        .map(|(n, w)| n / w)
        .collect()
}

/// Weighted distance between two runs sharing save times: project run `a`
/// onto the (equal or larger, nested) grid of run `b` and take the largest,
/// over save times and test functions, of
/// `sum_d |g_a->b - g_b|_d int_cell (v^-alpha + v) h dv`.
#[allow(clippy::too_many_arguments)]
pub fn convergence_metric(
    times_a: &[f64],
    states_a: &[State],
    grid_a: &Grid,
    times_b: &[f64],
    states_b: &[State],
    grid_b: &Grid,
    alpha: f64,
    family: &[TestFunction],
) -> Result<f64> {
    if times_a.len() != times_b.len() || times_a.is_empty() {
        return Err(Error::Domain(format!(
            "runs must share save times, got {} vs {}",
            times_a.len(),
            times_b.len()
        )));
    }
    for (ta, tb) in times_a.iter().zip(times_b) {
        if (ta - tb).abs() > 1e-9 * ta.abs().max(1.0) {
            return Err(Error::Domain(format!("save times differ: {ta} vs {tb}")));
        }
    }
    let vmin_gap = (grid_a.v_min() - grid_b.v_min()).abs();
    if vmin_gap > 1e-12 * grid_b.v_min() {
        return Err(Error::Domain(format!(
            "grids must share the mesh floor, got {} vs {}",
            grid_a.v_min(),
            grid_b.v_min()
        )));
    }
    if grid_a.n() > grid_b.n() * (1.0 + 1e-12) {
        return Err(Error::Domain(format!(
            "projection target must be the larger domain: {} > {}",
            grid_a.n(),
            grid_b.n()
        )));
    }

    let cells = grid_b.cells();
    let mut weights = Vec::with_capacity(family.len());
    for h in family {
        let mut w = Vec::with_capacity(cells);
        for c in 0..cells {
            let (lo, hi) = (grid_b.edges()[c], grid_b.edges()[c + 1]);
            w.push(h.weighted_integral(lo, hi, -alpha)? + h.weighted_integral(lo, hi, 1.0)?);
        }
        weights.push(w);
    }

    let mut metric = 0.0f64;
    for (sa, sb) in states_a.iter().zip(states_b) {
        let projected = project_density(&sa.g, grid_a, grid_b);
        for w in &weights {
            let (mut sum, mut comp) = (0.0, 0.0);
            for c in 0..cells {
                neumaier_add(&mut sum, &mut comp, (projected[c] - sb.g[c]).abs() * w[c]);
            }
            metric = metric.max(sum + comp);
        }
    }
    Ok(metric)
}
