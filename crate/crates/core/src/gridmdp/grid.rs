use serde::{Deserialize, Serialize};

use crate::dynamics::{wrap_periodic, ControlVector, StateVector, SystemSpec};
use crate::error::{contract, Result};

/// Flat row-major cell index; the first dimension varies slowest.
pub type CellIndex = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDim {
    pub cells: usize,
    pub lower: f64,
    pub upper: f64,
    pub periodic: bool,
}

impl GridDim {
    pub fn width(&self) -> f64 {
        (self.upper - self.lower) / self.cells as f64
    }

    /// Bin a coordinate. Cells are half-open `[lo, hi)` except that the global upper
    /// edge of a non-periodic dimension belongs to the last cell.
    pub fn bin(&self, v: f64) -> Option<usize> {
        let v = if self.periodic {
            wrap_periodic(v, self.lower, self.upper)
        } else {
            if !(v >= self.lower && v <= self.upper) {
                return None;
            }
            v
        };
        let k = ((v - self.lower) / self.width()).floor();
        Some((k.max(0.0) as usize).min(self.cells - 1))
    }

    pub fn center(&self, k: usize) -> f64 {
        self.lower + (k as f64 + 0.5) * self.width()
    }
}

/// Axis-aligned uniform grid over the state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dims: Vec<GridDim>,
}

impl GridSpec {
    pub fn new(dims: Vec<GridDim>) -> Result<Self> {
        if dims.is_empty() {
            return Err(contract("grid needs at least one dimension"));
        }
        for (i, d) in dims.iter().enumerate() {
            if d.cells == 0 {
                return Err(contract(format!("grid dim {i} has zero cells")));
            }
            if !(d.lower < d.upper) {
                return Err(contract(format!("grid dim {i} has empty extent")));
            }
        }
        Ok(GridSpec { dims })
    }

    /// Uniform grid over the system's state bounds with `cells[i]` cells on dim `i`.
    pub fn from_system(system: &SystemSpec, cells: &[usize]) -> Result<Self> {
        if cells.len() != system.state_len() {
            return Err(contract(format!(
                "grid has {} cell counts for a {}-dimensional state",
                cells.len(),
                system.state_len()
            )));
        }
        GridSpec::new(
            system
                .state_dims
                .iter()
                .zip(cells)
                .map(|(d, &n)| GridDim {
                    cells: n,
                    lower: d.lower,
                    upper: d.upper,
                    periodic: d.periodic,
                })
                .collect(),
        )
    }

    pub fn n_states(&self) -> usize {
        self.dims.iter().map(|d| d.cells).product()
    }

    pub fn coords_of(&self, x: &[f64]) -> Option<Vec<usize>> {
        if x.len() != self.dims.len() || x.iter().any(|v| !v.is_finite()) {
            return None;
        }
        self.dims.iter().zip(x).map(|(d, &v)| d.bin(v)).collect()
    }

    /// Cell containing `x`, or `None` when a non-periodic coordinate is out of bounds.
    pub fn cell_of(&self, x: &[f64]) -> Option<CellIndex> {
        self.coords_of(x).map(|c| self.flat_index(&c))
    }

    pub fn flat_index(&self, coords: &[usize]) -> CellIndex {
        coords.iter().zip(&self.dims).fold(0, |acc, (&c, d)| acc * d.cells + c)
    }

    pub fn coords(&self, mut cell: CellIndex) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for (slot, d) in out.iter_mut().zip(&self.dims).rev() {
            *slot = cell % d.cells;
            cell /= d.cells;
        }
        out
    }

    pub fn center_of(&self, cell: CellIndex) -> StateVector {
        assert!(cell < self.n_states(), "cell {cell} out of range");
        StateVector(
            self.coords(cell)
                .iter()
                .zip(&self.dims)
                .map(|(&k, d)| d.center(k))
                .collect(),
        )
    }

    /// All cells that share `x`'s cell coordinate on every dim in `dims`; other dims
    /// are free. `None` if `x` is outside the grid on one of `dims`.
    pub fn cells_matching(&self, x: &[f64], dims: &[usize]) -> Option<Vec<CellIndex>> {
        let fixed: Vec<(usize, usize)> = dims
            .iter()
            .map(|&d| self.dims[d].bin(x[d]).map(|k| (d, k)))
            .collect::<Option<_>>()?;
        Some(
            (0..self.n_states())
                .filter(|&c| {
                    let coords = self.coords(c);
                    fixed.iter().all(|&(d, k)| coords[d] == k)
                })
                .collect(),
        )
    }

    /// Half-width of a cell along every dimension.
    pub fn half_widths(&self) -> Vec<f64> {
        self.dims.iter().map(|d| 0.5 * d.width()).collect()
    }
}

/// Discrete actions: the Cartesian product of evenly spaced levels per control dim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSet {
    pub actions: Vec<ControlVector>,
}

impl ActionSet {
    pub fn new(actions: Vec<ControlVector>) -> Result<Self> {
        if actions.is_empty() {
            return Err(contract("action set is empty"));
        }
        Ok(ActionSet { actions })
    }

    /// `levels[i]` evenly spaced values from lower to upper bound on control dim `i`;
    /// a single level sits at the midpoint.
    pub fn evenly_spaced(system: &SystemSpec, levels: &[usize]) -> Result<Self> {
        if levels.len() != system.control_len() {
            return Err(contract(format!(
                "{} action level counts for {} control dims",
                levels.len(),
                system.control_len()
            )));
        }
        if levels.contains(&0) {
            return Err(contract("action level count of zero"));
        }
        let per_dim: Vec<Vec<f64>> = system
            .control_dims
            .iter()
            .zip(levels)
            .map(|(d, &n)| {
                if n == 1 {
                    vec![0.5 * (d.lower + d.upper)]
                } else {
                    (0..n)
                        .map(|k| d.lower + (d.upper - d.lower) * k as f64 / (n - 1) as f64)
                        .collect()
                }
            })
            .collect();
        let mut actions = vec![Vec::new()];
        for values in &per_dim {
            actions = actions
                .into_iter()
                .flat_map(|prefix: Vec<f64>| {
                    values.iter().map(move |&v| {
                        let mut next = prefix.clone();
                        next.push(v);
                        next
                    })
                })
                .collect();
        }
        ActionSet::new(actions.into_iter().map(ControlVector).collect())
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}
