//! Geometric volume mesh on the truncated domain `(v_min, n)` and the
//! truncation bookkeeping that selects the conservative or non-conservative
//! regime.
//!
//! Cells are `[edge_i, edge_{i+1})` with geometrically spaced edges; each
//! cell is represented by the geometric mean of its edges (the pivot). Edges
//! are built by log-linear interpolation between `ln v_min` and `ln n`, so
//! doubling the cell count reproduces every coarse edge bitwise: the
//! exponent fraction `i / cells` takes the same floating-point value as
//! `2i / (2 cells)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Truncation mode: `tau = 1` (conservative) suppresses collisions whose
/// merged volume leaves `(0, n)`; `tau = 0` (non-conservative) keeps them and
/// books the destroyed volume as `lost_mass`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tau {
    NonConservative,
    Conservative,
}

impl Tau {
    pub fn from_flag(tau: u8) -> Result<Tau> {
        match tau {
            0 => Ok(Tau::NonConservative),
            1 => Ok(Tau::Conservative),
            other => Err(Error::Config(format!("tau must be 0 or 1, got {other}"))),
        }
    }

    pub fn flag(&self) -> u8 {
        match self {
            Tau::NonConservative => 0,
            Tau::Conservative => 1,
        }
    }
}

/// Truncation parameters: domain scale `n` and regime flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationConfig {
    pub n: f64,
    pub tau: Tau,
}

impl TruncationConfig {
    pub fn new(n: f64, tau: Tau) -> Result<Self> {
        if !(n.is_finite() && n > 1.0) {
            return Err(Error::Config(format!(
                "truncation scale n must be finite and > 1, got {n}"
            )));
        }
        Ok(TruncationConfig { n, tau })
    }

    /// Lower indicator cutoff `1/n`: volumes at or below it are collisionally
    /// inert under the truncated kernel.
    pub fn cutoff_low(&self) -> f64 {
        1.0 / self.n
    }
}

/// Where a volume falls relative to a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellLocation {
    Below,
    Inside(usize),
    Above,
}

/// Geometric sectional mesh on `(v_min, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    edges: Vec<f64>,
    reps: Vec<f64>,
    widths: Vec<f64>,
}

impl Grid {
    /// Default mesh floor: `min(1e-4, 1/(2n))` keeps the inert band
    /// `(v_min, 1/n)` resolvable whenever it exists.
    pub fn default_v_min(n: f64) -> f64 {
        (1e-4f64).min(1.0 / (2.0 * n))
    }

    /// Build a geometric mesh with `cells >= 8` cells spanning `(v_min, n)`.
    pub fn geometric(n: f64, cells: usize, v_min: f64) -> Result<Grid> {
        if cells < 8 {
            return Err(Error::Config(format!(
                "grid needs at least 8 cells, got {cells}"
            )));
        }
        Self::geometric_unchecked(n, cells, v_min)
    }

    /// Same as [`Grid::geometric`] without the cell-count floor; used by unit
    /// tests that exercise single-cell closed forms.
    pub(crate) fn geometric_unchecked(n: f64, cells: usize, v_min: f64) -> Result<Grid> {
        if cells == 0 {
            return Err(Error::Config("grid needs at least one cell".into()));
        }
        if !(v_min.is_finite() && n.is_finite() && v_min > 0.0 && v_min < n) {
            return Err(Error::Config(format!(
                "grid bounds must satisfy 0 < v_min < n, got v_min = {v_min}, n = {n}"
            )));
        }
        let (lo, hi) = (v_min.ln(), n.ln());
        let count = cells as f64;
        let mut edges: Vec<f64> = (0..=cells)
            .map(|i| (lo + (i as f64 / count) * (hi - lo)).exp())
            .collect();
        // Pin the endpoints exactly; exp(ln x) can be one ulp off.
        edges[0] = v_min;
        edges[cells] = n;
        for w in edges.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Config(format!(
                    "grid edges are not strictly increasing near {}; \
                     v_min and n are too close for {cells} cells",
                    w[0]
                )));
            }
        }
        let reps: Vec<f64> = edges.windows(2).map(|w| (w[0] * w[1]).sqrt()).collect();
        let widths: Vec<f64> = edges.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Grid { edges, reps, widths })
    }

    pub fn cells(&self) -> usize {
        self.reps.len()
    }

    pub fn v_min(&self) -> f64 {
        self.edges[0]
    }

    pub fn n(&self) -> f64 {
        *self.edges.last().expect("grid has edges")
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// Cell pivots (geometric means of neighbouring edges), strictly
    /// increasing and strictly inside their cells.
    pub fn reps(&self) -> &[f64] {
        &self.reps
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    /// Locate a volume. Cells are half-open `[edge_i, edge_{i+1})`, so
    /// `v = v_min` is inside cell 0 and `v = n` is already outside.
    pub fn locate(&self, v: f64) -> CellLocation {
        if !(v >= self.v_min()) {
            return CellLocation::Below;
        }
        if v >= self.n() {
            return CellLocation::Above;
        }
        // Number of edges <= v, minus one, is the enclosing cell index.
        let idx = self.edges.partition_point(|e| *e <= v) - 1;
        CellLocation::Inside(idx.min(self.cells() - 1))
    }

    /// Exact per-cell weight integral `int_cell v^p dv`. The logarithmic
    /// case `p = -1` never arises from the supported weights and is
    /// unsupported by contract.
    pub fn cell_weight_integral(&self, cell: usize, p: f64) -> Result<f64> {
        if cell >= self.cells() {
            return Err(Error::Domain(format!(
                "cell index {cell} out of range for {} cells",
                self.cells()
            )));
        }
        if !p.is_finite() || p == -1.0 {
            return Err(Error::Domain(format!(
                "cell weight exponent must be finite and != -1, got {p}"
            )));
        }
        let (a, b) = (self.edges[cell], self.edges[cell + 1]);
        let q = p + 1.0;
        Ok((b.powf(q) - a.powf(q)) / q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncation_basics() {
        let t = TruncationConfig::new(10.0, Tau::Conservative).unwrap();
        assert_eq!(t.cutoff_low(), 0.1);
        assert!(TruncationConfig::new(1.0, Tau::NonConservative).is_err());
        assert!(Tau::from_flag(2).is_err());
        assert_eq!(Tau::from_flag(0).unwrap(), Tau::NonConservative);
        assert_eq!(Tau::from_flag(1).unwrap().flag(), 1);
    }

    #[test]
    fn single_cell_closed_forms() {
        // One cell on (0.25, 1): pivot is the geometric mean 0.5, and the
        // p = 1 weight integral is (1 - 0.0625) / 2.
        let g = Grid::geometric_unchecked(1.0, 1, 0.25).unwrap();
        assert_eq!(g.reps()[0], 0.5);
        assert_eq!(g.widths()[0], 0.75);
        assert!((g.cell_weight_integral(0, 1.0).unwrap() - 0.46875).abs() < 1e-16);
        // p = 0 weight integral is the width.
        assert_eq!(g.cell_weight_integral(0, 0.0).unwrap(), 0.75);
    }

    #[test]
    fn builder_validates_inputs() {
        assert!(Grid::geometric(10.0, 4, 1e-4).is_err()); // too few cells
        assert!(Grid::geometric(10.0, 64, 0.0).is_err());
        assert!(Grid::geometric(10.0, 64, 20.0).is_err());
        assert!(Grid::geometric(f64::NAN, 64, 1e-4).is_err());
    }

    #[test]
    fn geometric_mesh_shape() {
        let g = Grid::geometric(10.0, 64, 1e-4).unwrap();
        assert_eq!(g.cells(), 64);
        assert_eq!(g.v_min(), 1e-4);
        assert_eq!(g.n(), 10.0);
        // Constant ratio between consecutive edges.
        let r0 = g.edges()[1] / g.edges()[0];
        for w in g.edges().windows(2) {
            assert!(((w[1] / w[0]) / r0 - 1.0).abs() < 1e-12);
        }
        // Pivots strictly inside their cells.
        for i in 0..g.cells() {
            assert!(g.edges()[i] < g.reps()[i] && g.reps()[i] < g.edges()[i + 1]);
        }
    }

    #[test]
    fn locate_edges_and_pivots() {
        let g = Grid::geometric(10.0, 32, 1e-3).unwrap();
        assert_eq!(g.locate(1e-3), CellLocation::Inside(0));
        assert_eq!(g.locate(0.9e-3), CellLocation::Below);
        assert_eq!(g.locate(10.0), CellLocation::Above);
        assert_eq!(g.locate(9.9999), CellLocation::Inside(31));
        for i in 0..g.cells() {
            assert_eq!(g.locate(g.reps()[i]), CellLocation::Inside(i));
            assert_eq!(g.locate(g.edges()[i]), CellLocation::Inside(i));
        }
    }

    #[test]
    fn refinement_nests_bitwise() {
        let coarse = Grid::geometric(10.0, 32, 1e-4).unwrap();
        let fine = Grid::geometric(10.0, 64, 1e-4).unwrap();
        for (i, e) in coarse.edges().iter().enumerate() {
            assert_eq!(
                e.to_bits(),
                fine.edges()[2 * i].to_bits(),
                "edge {i} does not nest"
            );
        }
    }

    #[test]
    fn weight_integral_domain() {
        let g = Grid::geometric(10.0, 8, 1e-2).unwrap();
        assert!(g.cell_weight_integral(0, -1.0).is_err());
        assert!(g.cell_weight_integral(99, 0.0).is_err());
        // Negative non-log exponents are fine (singular moment weights).
        let w = g.cell_weight_integral(0, -0.5).unwrap();
        let (a, b) = (g.edges()[0], g.edges()[1]);
        assert!((w - 2.0 * (b.sqrt() - a.sqrt())).abs() < 1e-15);
    }
}
