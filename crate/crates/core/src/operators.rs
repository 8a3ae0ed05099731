//! Sectional collision operators: precomputed pair tables and the
//! right-hand side of the truncated coagulation-breakage system.
//!
//! The state tracks cell densities `g_i` plus two scalar accounts:
//! `lost_mass` (volume destroyed by over-`n` collisions in the
//! non-conservative regime) and `subgrid_mass` (fragment volume below the
//! mesh floor `v_min`). Collisions are enumerated as unordered cell pairs
//! `(i, j)`, `i <= j`, with event rate `sym * phi(xi_i, xi_j) * N_i * N_j`
//! where `N = g * width` and `sym = 1/2` on the diagonal. Every collision
//! destroys both colliders. A fraction `E` coagulates into volume
//! `s = xi_i + xi_j`, the rest shatters into the power-law fragment cloud.
//!
//! Redistribution rules, fixed so that the scheme satisfies exact discrete
//! invariants rather than merely approximate ones:
//!
//! * Coagulation children and full fragment spans are split over the two
//!   bracketing pivots preserving both number and volume (two-point "hat"
//!   weights). A child or fragment span beyond the last pivot is booked at
//!   the last pivot preserving volume only.
//! * Fragment volume below the first pivot is booked at the first pivot
//!   (volume exact); below `v_min` it goes to `subgrid_mass`.
//! * Summed over a whole breakage event the binned volume telescopes to
//!   exactly `s` in exact arithmetic: the per-event mass identity is
//!   structural, not a quadrature approximation.
//!
//! The daughter law enters through `s`-independent reduced span integrals
//! (`v^theta`-weighted number and volume per span), so each pair only
//! carries one extra factor `s^-(1+theta)`. Grouping pairs by their top
//! fragment span and suffix-summing turns the per-pair redistribution into
//! O(cells) work after an O(pairs) sweep.

use crate::error::{Error, Result};
use crate::grid::{Grid, Tau, TruncationConfig};
use crate::kernel::{
    check_admissibility, eval_phi, AdmissibilityReport, DaughterSpec, EfficiencySpec, KernelSpec,
};

/// Neumaier compensated accumulation: adds `x` into `(sum, comp)`.
#[inline]
pub(crate) fn neumaier_add(sum: &mut f64, comp: &mut f64, x: f64) {
    let t = *sum + x;
    if sum.abs() >= x.abs() {
        *comp += (*sum - t) + x;
    } else {
        *comp += (x - t) + *sum;
    }
    *sum = t;
}

/// Solver state: cell densities plus the two mass accounts.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub g: Vec<f64>,
    pub lost_mass: f64,
    pub subgrid_mass: f64,
}

impl State {
    pub fn zeros(cells: usize) -> State {
        State { g: vec![0.0; cells], lost_mass: 0.0, subgrid_mass: 0.0 }
    }

    pub fn min_density(&self) -> f64 {
        self.g.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Time derivative of a [`State`].
#[derive(Debug, Clone, PartialEq)]
pub struct Rhs {
    pub dg: Vec<f64>,
    pub dlost_mass: f64,
    pub dsubgrid_mass: f64,
}

/// What a collision pair does under the active truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum PairKind {
    /// Merged volume leaves the domain in the non-conservative regime: both
    /// colliders die, their whole volume moves to `lost_mass`, nothing is
    /// born in either channel.
    Loss,
    /// In-domain collision with precomputed redistribution targets.
    Active {
        /// Lower pivot receiving the coagulation child.
        coag_lo: u32,
        /// Child number fraction to `coag_lo` (a volume-exact count when the
        /// child sits beyond the last pivot).
        coag_frac_lo: f64,
        /// Child number fraction to `coag_lo + 1`; 0 in the top-cell case.
        coag_frac_hi: f64,
        /// Top fragment span index `m*`: the largest pivot at or below `s`.
        brk_top: u32,
        /// Reduced partial-span credit to pivot `m*`.
        brk_pl: f64,
        /// Reduced partial-span credit to pivot `m* + 1`; 0 in the top case.
        brk_ph: f64,
        /// `s^-(1+theta)`, the only `s`-dependent factor of the fragment
        /// redistribution.
        s_pow: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct PairRule {
    pub(crate) i: u32,
    pub(crate) j: u32,
    /// Pair volume `xi_i + xi_j`.
    pub(crate) s: f64,
    /// Kernel value at the pivots (after truncation gating, always > 0).
    pub(crate) phi: f64,
    /// Coagulation efficiency at the pivots.
    pub(crate) e: f64,
    pub(crate) kind: PairKind,
}

/// Precomputed pair rules and reduced daughter-span tables for one
/// (grid, truncation, kernel, efficiency, daughter) combination.
#[derive(Debug, Clone)]
pub struct KernelTables {
    cells: usize,
    tau: Tau,
    n: f64,
    theta: f64,
    pairs: Vec<PairRule>,
    /// Reduced full-span fragment credit to the lower pivot, one per span
    /// `[xi_m, xi_{m+1}]` (length `cells - 1`).
    hat_low: Vec<f64>,
    /// Reduced full-span fragment credit to the upper pivot.
    hat_high: Vec<f64>,
    /// Reduced credit of the bottom stub `(v_min, xi_0)` to pivot 0
    /// (volume exact by construction).
    k_bot: f64,
    /// Reduced fragment volume below `v_min`, booked to `subgrid_mass`.
    k_sub: f64,
    admissibility: AdmissibilityReport,
}

/// Reduced daughter number on `[a, b]`: `int_a^b (theta+2) v^theta dv`.
fn reduced_number(theta: f64, a: f64, b: f64) -> f64 {
    let q = theta + 1.0;
    (theta + 2.0) / q * (b.powf(q) - a.powf(q))
}

/// Reduced daughter volume on `[a, b]`: `int_a^b (theta+2) v^(theta+1) dv`.
fn reduced_volume(theta: f64, a: f64, b: f64) -> f64 {
    let q = theta + 2.0;
    b.powf(q) - a.powf(q)
}

/// Build the pair tables. Refuses structurally inadmissible parameters: a
/// kernel above the singular envelope (a1) or daughter exponents outside the
/// admissible box (a3) leave the scheme without meaning. The efficiency
/// floor (a2) and initial-datum hypothesis (a4) are continuum-limit
/// certifications: they are evaluated and carried in the returned tables'
/// report, but only scenario validation treats them as fatal, so library
/// callers can study regimes such as pure breakage (`E = 0`) directly.
pub fn build_tables(
    grid: &Grid,
    trunc: &TruncationConfig,
    kernel: &KernelSpec,
    efficiency: &EfficiencySpec,
    daughter: &DaughterSpec,
) -> Result<KernelTables> {
    efficiency.validate()?;
    if grid.n() != trunc.n {
        return Err(Error::Config(format!(
            "grid upper bound {} does not match truncation scale {}",
            grid.n(),
            trunc.n
        )));
    }
    let report = check_admissibility(kernel, efficiency, daughter);
    if !(report.passes_a1 && report.passes_a3) {
        return Err(Error::Inadmissible(report.reasons.join("; ")));
    }

    let cells = grid.cells();
    let reps = grid.reps();
    let theta = daughter.theta;
    let cutoff = trunc.cutoff_low();
    let n = trunc.n;

    let mut pairs = Vec::new();
    for i in 0..cells {
        let xi = reps[i];
        if xi <= cutoff {
            continue; // collisionally inert band below 1/n
        }
        for j in i..cells {
            let xj = reps[j];
            if xj <= cutoff {
                continue;
            }
            let s = xi + xj;
            if s >= n && trunc.tau == Tau::Conservative {
                continue; // conservative truncation suppresses the event
            }
            let phi = eval_phi(kernel, xi, xj)?;
            let e = efficiency.eval(xi, xj);
            let kind = if s >= n {
                PairKind::Loss
            } else {
                // Largest pivot at or below s; s >= 2 xi_0 > xi_0 keeps the
                // index in range.
                let top = reps.partition_point(|x| *x <= s) - 1;
                let (coag_frac_lo, coag_frac_hi) = if top == cells - 1 {
                    (s / reps[top], 0.0)
                } else {
                    let a = (reps[top + 1] - s) / (reps[top + 1] - reps[top]);
                    (a, 1.0 - a)
                };
                let pn = reduced_number(theta, reps[top], s);
                let pv = reduced_volume(theta, reps[top], s);
                let (brk_pl, brk_ph) = if top == cells - 1 {
                    (pv / reps[top], 0.0)
                } else {
                    let d = reps[top + 1] - reps[top];
                    (
                        ((reps[top + 1] * pn - pv) / d).max(0.0),
                        ((pv - reps[top] * pn) / d).max(0.0),
                    )
                };
                PairKind::Active {
                    coag_lo: top as u32,
                    coag_frac_lo,
                    coag_frac_hi,
                    brk_top: top as u32,
                    brk_pl,
                    brk_ph,
                    s_pow: s.powf(-(1.0 + theta)),
                }
            };
            pairs.push(PairRule { i: i as u32, j: j as u32, s, phi, e, kind });
        }
    }

    let mut hat_low = Vec::with_capacity(cells - 1);
    let mut hat_high = Vec::with_capacity(cells - 1);
    for m in 0..cells - 1 {
        let (lo, hi) = (reps[m], reps[m + 1]);
        let pn = reduced_number(theta, lo, hi);
        let pv = reduced_volume(theta, lo, hi);
        let d = hi - lo;
        hat_low.push(((hi * pn - pv) / d).max(0.0));
        hat_high.push(((pv - lo * pn) / d).max(0.0));
    }
    let k_bot = reduced_volume(theta, grid.v_min(), reps[0]) / reps[0];
    let k_sub = grid.v_min().powf(theta + 2.0);

    Ok(KernelTables {
        cells,
        tau: trunc.tau,
        n,
        theta,
        pairs,
        hat_low,
        hat_high,
        k_bot,
        k_sub,
        admissibility: report,
    })
}

impl KernelTables {
    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn tau(&self) -> Tau {
        self.tau
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Admissibility report recorded at build time (includes the
    /// certification-only flags a2 and a4).
    pub fn admissibility(&self) -> &AdmissibilityReport {
        &self.admissibility
    }

    /// Number of collision pairs that survive truncation gating.
    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }

    /// Surviving pairs as `(i, j, phi)`, for collision-rate estimates.
    pub fn pair_rates(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.pairs.iter().map(|p| (p.i as usize, p.j as usize, p.phi))
    }

    pub(crate) fn pairs(&self) -> &[PairRule] {
        &self.pairs
    }

    #[cfg(test)]
    pub(crate) fn hat_low(&self) -> &[f64] {
        &self.hat_low
    }

    #[cfg(test)]
    pub(crate) fn hat_high(&self) -> &[f64] {
        &self.hat_high
    }

    pub(crate) fn k_bot(&self) -> f64 {
        self.k_bot
    }

    #[cfg(test)]
    pub(crate) fn k_sub(&self) -> f64 {
        self.k_sub
    }

    /// Prefix sums of the reduced full-span test-function credit:
    /// `prefix[q] = sum_{m < q} (hat_low[m] hbar_m + hat_high[m] hbar_{m+1})`,
    /// so a pair with top span `m*` credits `prefix[m*]` for its full spans.
    pub(crate) fn hat_credit_prefix(&self, hbar: &[f64]) -> Vec<f64> {
        let mut prefix = Vec::with_capacity(self.cells);
        let (mut sum, mut comp) = (0.0, 0.0);
        prefix.push(0.0);
        for m in 0..self.cells - 1 {
            neumaier_add(&mut sum, &mut comp, self.hat_low[m] * hbar[m]);
            neumaier_add(&mut sum, &mut comp, self.hat_high[m] * hbar[m + 1]);
            if m + 1 < self.cells {
                prefix.push(sum + comp);
            }
        }
        prefix
    }
}

fn validate_state(state: &State, tables: &KernelTables) -> Result<()> {
    if state.g.len() != tables.cells {
        return Err(Error::Domain(format!(
            "state has {} cells, tables expect {}",
            state.g.len(),
            tables.cells
        )));
    }
    for (i, &g) in state.g.iter().enumerate() {
        if !g.is_finite() || g < 0.0 {
            return Err(Error::Domain(format!(
                "density must be finite and nonnegative, got g[{i}] = {g}"
            )));
        }
    }
    Ok(())
}

/// Time derivative of the truncated system at `state`.
///
/// Deterministic: the pair sweep runs in a fixed order and every
/// accumulator is Neumaier-compensated, so results are reproducible bitwise
/// and insensitive to pair order to near round-off.
pub fn rhs(state: &State, grid: &Grid, tables: &KernelTables) -> Result<Rhs> {
    rhs_impl(state, grid, tables, None)
}

/// [`rhs`] with an explicit pair visiting order; exists so tests can verify
/// that accumulation order does not leak into results beyond round-off.
#[doc(hidden)]
pub fn rhs_with_pair_order(
    state: &State,
    grid: &Grid,
    tables: &KernelTables,
    order: &[usize],
) -> Result<Rhs> {
    if order.len() != tables.pairs.len() {
        return Err(Error::Domain(format!(
            "pair order has length {}, tables have {} pairs",
            order.len(),
            tables.pairs.len()
        )));
    }
    rhs_impl(state, grid, tables, Some(order))
}

fn rhs_impl(
    state: &State,
    grid: &Grid,
    tables: &KernelTables,
    order: Option<&[usize]>,
) -> Result<Rhs> {
    validate_state(state, tables)?;
    let cells = tables.cells;
    let widths = grid.widths();

    let number: Vec<f64> = state.g.iter().zip(widths).map(|(g, w)| g * w).collect();

    let mut dn = vec![0.0; cells];
    let mut dn_c = vec![0.0; cells];
    // Per-top-span fragment factors, suffix-summed after the sweep.
    let mut bucket = vec![0.0; cells];
    let mut bucket_c = vec![0.0; cells];
    let (mut dlost, mut dlost_c) = (0.0, 0.0);

    for k in 0..tables.pairs.len() {
        let p = &tables.pairs[order.map_or(k, |o| o[k])];
        let (i, j) = (p.i as usize, p.j as usize);
        let sym = if i == j { 0.5 } else { 1.0 };
        let rate = sym * p.phi * number[i] * number[j];
        if rate == 0.0 {
            continue;
        }
        // Every collision destroys both colliders.
        neumaier_add(&mut dn[i], &mut dn_c[i], -rate);
        neumaier_add(&mut dn[j], &mut dn_c[j], -rate);
        match p.kind {
            PairKind::Loss => {
                neumaier_add(&mut dlost, &mut dlost_c, rate * p.s);
            }
            PairKind::Active {
                coag_lo,
                coag_frac_lo,
                coag_frac_hi,
                brk_top,
                brk_pl,
                brk_ph,
                s_pow,
            } => {
                let born = p.e * rate;
                if born > 0.0 {
                    let lo = coag_lo as usize;
                    neumaier_add(&mut dn[lo], &mut dn_c[lo], born * coag_frac_lo);
                    if coag_frac_hi > 0.0 {
                        neumaier_add(&mut dn[lo + 1], &mut dn_c[lo + 1], born * coag_frac_hi);
                    }
                }
                let frag = (1.0 - p.e) * rate * s_pow;
                if frag > 0.0 {
                    let top = brk_top as usize;
                    neumaier_add(&mut bucket[top], &mut bucket_c[top], frag);
                    neumaier_add(&mut dn[top], &mut dn_c[top], frag * brk_pl);
                    if brk_ph > 0.0 {
                        neumaier_add(&mut dn[top + 1], &mut dn_c[top + 1], frag * brk_ph);
                    }
                }
            }
        }
    }

    // suffix[m] = total fragment factor of pairs whose top span is >= m:
    // span m is fully covered exactly by pairs with top > m.
    let mut suffix = vec![0.0; cells + 1];
    {
        let (mut sum, mut comp) = (0.0, 0.0);
        for m in (0..cells).rev() {
            neumaier_add(&mut sum, &mut comp, bucket[m] + bucket_c[m]);
            suffix[m] = sum + comp;
        }
    }
    for m in 0..cells - 1 {
        let w = suffix[m + 1];
        if w > 0.0 {
            neumaier_add(&mut dn[m], &mut dn_c[m], tables.hat_low[m] * w);
            neumaier_add(&mut dn[m + 1], &mut dn_c[m + 1], tables.hat_high[m] * w);
        }
    }
    neumaier_add(&mut dn[0], &mut dn_c[0], tables.k_bot * suffix[0]);
    let dsubgrid = tables.k_sub * suffix[0];

    let dg = dn
        .iter()
        .zip(&dn_c)
        .zip(widths)
        .map(|((s, c), w)| (s + c) / w)
        .collect();
    Ok(Rhs { dg, dlost_mass: dlost + dlost_c, dsubgrid_mass: dsubgrid })
}

/// Instantaneous rate at which volume moves to `lost_mass` (non-conservative
/// over-`n` collisions). Identically 0 in the conservative regime.
pub fn loss_rate(state: &State, grid: &Grid, tables: &KernelTables) -> Result<f64> {
    validate_state(state, tables)?;
    let widths = grid.widths();
    let (mut sum, mut comp) = (0.0, 0.0);
    for p in &tables.pairs {
        if let PairKind::Loss = p.kind {
            let (i, j) = (p.i as usize, p.j as usize);
            let sym = if i == j { 0.5 } else { 1.0 };
            let ni = state.g[i] * widths[i];
            let nj = state.g[j] * widths[j];
            neumaier_add(&mut sum, &mut comp, sym * p.phi * ni * nj * p.s);
        }
    }
    Ok(sum + comp)
}
