//! Uniform rectangular mesh, cell/edge fields, ghost-cell boundary closure
//! and the discrete differential/averaging operators.
//!
//! Cells are indexed (i, j) with i along x and j along y; storage is j-major
//! (`idx = j * nx + i`), so a "row" is a fixed j. A vertical edge with index
//! (e, j) is the interface between cells (e-1, j) and (e, j); under periodic
//! closure e runs over 0..nx (edge 0 wrapping to cell nx-1), otherwise over
//! 0..=nx so that the two boundary interfaces are included. Horizontal edges
//! are analogous in j.
//!
//! Every operator reads its input through a one-ghost-layer [`Padded`] view,
//! so the interior stencils never special-case boundaries. Composed operators
//! (e.g. the wide second derivative d_x(d_x .)) re-close the intermediate
//! field with its own ghost layer.

use crate::error::{Error, Result};

/// Boundary closure mode of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcMode {
    /// Wrap-around indices; the domain is a torus.
    Periodic,
    /// Zero-gradient: ghost value copies the nearest interior value.
    Extrapolation,
    /// Dirichlet-hold: ghost values frozen at the initial (equilibrium) data.
    EquilibriumHold,
}

/// Uniform rectangular primal mesh.
#[derive(Debug, Clone)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub dx: f64,
    pub dy: f64,
    pub bc: BcMode,
}

impl Grid {
    /// Build a grid; centered stencils need at least two neighbours per
    /// direction, hence nx, ny >= 3.
    pub fn new(
        nx: usize,
        ny: usize,
        (x0, x1): (f64, f64),
        (y0, y1): (f64, f64),
        bc: BcMode,
    ) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::Grid(format!("need nx, ny >= 3, got {nx}x{ny}")));
        }
        if !(x1 > x0) || !(y1 > y0) {
            return Err(Error::Grid(format!(
                "degenerate bounds [{x0}, {x1}] x [{y0}, {y1}]"
            )));
        }
        let dx = (x1 - x0) / nx as f64;
        let dy = (y1 - y0) / ny as f64;
        Ok(Grid {
            nx,
            ny,
            x0,
            y0,
            x1,
            y1,
            dx,
            dy,
            bc,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    /// Cell area dx * dy.
    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }

    /// Center of cell (i, j), including logical ghost indices.
    #[inline]
    pub fn center(&self, i: isize, j: isize) -> (f64, f64) {
        (
            self.x0 + (i as f64 + 0.5) * self.dx,
            self.y0 + (j as f64 + 0.5) * self.dy,
        )
    }

    /// Number of vertical-edge columns (x-interfaces per row).
    pub fn n_edges_x(&self) -> usize {
        match self.bc {
            BcMode::Periodic => self.nx,
            _ => self.nx + 1,
        }
    }

    /// Number of horizontal-edge rows (y-interfaces per column).
    pub fn n_edges_y(&self) -> usize {
        match self.bc {
            BcMode::Periodic => self.ny,
            _ => self.ny + 1,
        }
    }

    /// Vertical edge to the left of cell i.
    #[inline]
    pub fn edge_left(&self, i: usize) -> usize {
        i
    }

    /// Vertical edge to the right of cell i.
    #[inline]
    pub fn edge_right(&self, i: usize) -> usize {
        match self.bc {
            BcMode::Periodic => (i + 1) % self.nx,
            _ => i + 1,
        }
    }

    /// Horizontal edge below cell j.
    #[inline]
    pub fn edge_below(&self, j: usize) -> usize {
        j
    }

    /// Horizontal edge above cell j.
    #[inline]
    pub fn edge_above(&self, j: usize) -> usize {
        match self.bc {
            BcMode::Periodic => (j + 1) % self.ny,
            _ => j + 1,
        }
    }
}

/// Scalar data on primal cells, j-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    pub nx: usize,
    pub ny: usize,
    values: Vec<f64>,
}

impl CellField {
    pub fn zeros(grid: &Grid) -> Self {
        CellField {
            nx: grid.nx,
            ny: grid.ny,
            values: vec![0.0; grid.n_cells()],
        }
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        CellField {
            nx: grid.nx,
            ny: grid.ny,
            values: vec![c; grid.n_cells()],
        }
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.n_cells());
        CellField {
            nx: grid.nx,
            ny: grid.ny,
            values,
        }
    }

    pub(crate) fn from_shape_values((nx, ny): (usize, usize), values: Vec<f64>) -> Self {
        assert_eq!(values.len(), nx * ny);
        CellField { nx, ny, values }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[j * self.nx + i] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn same_shape(&self, other: &CellField) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::GridMismatch {
                expected: self.shape(),
                got: other.shape(),
            });
        }
        Ok(())
    }

    /// Elementwise product.
    pub fn mul(&self, other: &CellField) -> CellField {
        debug_assert_eq!(self.shape(), other.shape());
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .collect();
        CellField {
            nx: self.nx,
            ny: self.ny,
            values,
        }
    }

    pub fn scaled(&self, s: f64) -> CellField {
        CellField {
            nx: self.nx,
            ny: self.ny,
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Orientation of an edge set: vertical edges have an x-normal, horizontal
/// edges a y-normal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    VerticalEdges,
    HorizontalEdges,
}

/// Scalar data on one edge set of the dual grids.
///
/// Storage is j-major over (n_i, n_j) where n_i x n_j is the edge count for
/// the orientation under the grid's closure mode.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeField {
    pub orientation: Orientation,
    pub n_i: usize,
    pub n_j: usize,
    values: Vec<f64>,
}

impl EdgeField {
    pub fn zeros(grid: &Grid, orientation: Orientation) -> Self {
        let (n_i, n_j) = match orientation {
            Orientation::VerticalEdges => (grid.n_edges_x(), grid.ny),
            Orientation::HorizontalEdges => (grid.nx, grid.n_edges_y()),
        };
        EdgeField {
            orientation,
            n_i,
            n_j,
            values: vec![0.0; n_i * n_j],
        }
    }

    #[inline]
    pub fn get(&self, e_i: usize, e_j: usize) -> f64 {
        self.values[e_j * self.n_i + e_i]
    }

    #[inline]
    pub fn set(&mut self, e_i: usize, e_j: usize, v: f64) {
        self.values[e_j * self.n_i + e_i] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Ghost policy for closing one field.
///
/// `Frozen` carries the padded initial-equilibrium values of the same field;
/// its ghost ring provides the held Dirichlet data.
#[derive(Clone, Copy)]
pub enum FieldBc<'a> {
    Periodic,
    Extrapolation,
    Frozen(&'a Padded),
}

impl<'a> FieldBc<'a> {
    /// Resolve a grid closure mode to a per-field policy. Fails when the
    /// grid holds equilibrium ghosts but no frozen data was supplied.
    pub fn resolve(mode: BcMode, frozen: Option<&'a Padded>) -> Result<Self> {
        match mode {
            BcMode::Periodic => Ok(FieldBc::Periodic),
            BcMode::Extrapolation => Ok(FieldBc::Extrapolation),
            BcMode::EquilibriumHold => frozen.map(FieldBc::Frozen).ok_or(Error::MissingFrozen),
        }
    }
}

/// Cell data with one ghost layer, indexable at i in -1..=nx, j in -1..=ny.
#[derive(Debug, Clone)]
pub struct Padded {
    pub nx: usize,
    pub ny: usize,
    values: Vec<f64>,
}

impl Padded {
    fn empty(nx: usize, ny: usize) -> Self {
        Padded {
            nx,
            ny,
            values: vec![0.0; (nx + 2) * (ny + 2)],
        }
    }

    #[inline]
    fn slot(&self, i: isize, j: isize) -> usize {
        debug_assert!(i >= -1 && i <= self.nx as isize);
        debug_assert!(j >= -1 && j <= self.ny as isize);
        ((j + 1) as usize) * (self.nx + 2) + (i + 1) as usize
    }

    #[inline]
    pub fn get(&self, i: isize, j: isize) -> f64 {
        self.values[self.slot(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: isize, j: isize, v: f64) {
        let s = self.slot(i, j);
        self.values[s] = v;
    }

    /// Build a padded view directly from a function of logical cell indices
    /// (used for frozen equilibrium data, where ghosts carry analytic values).
    pub fn from_fn(nx: usize, ny: usize, mut f: impl FnMut(isize, isize) -> f64) -> Self {
        let mut p = Padded::empty(nx, ny);
        for j in -1..=(ny as isize) {
            for i in -1..=(nx as isize) {
                p.set(i, j, f(i, j));
            }
        }
        p
    }

    /// Interior part as a cell field.
    pub fn interior(&self) -> CellField {
        let mut values = Vec::with_capacity(self.nx * self.ny);
        for j in 0..self.ny as isize {
            for i in 0..self.nx as isize {
                values.push(self.get(i, j));
            }
        }
        CellField {
            nx: self.nx,
            ny: self.ny,
            values,
        }
    }

    /// Uniform scaling of interior and ghosts.
    pub fn scaled(&self, s: f64) -> Padded {
        Padded {
            nx: self.nx,
            ny: self.ny,
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    /// Elementwise product over interior and ghosts.
    pub fn mul(&self, other: &Padded) -> Padded {
        debug_assert_eq!((self.nx, self.ny), (other.nx, other.ny));
        Padded {
            nx: self.nx,
            ny: self.ny,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .collect(),
        }
    }
}

/// Close a cell field with one ghost layer according to the field policy.
///
/// This is the realization of the ghost-cell closure: periodic wraps,
/// extrapolation copies the nearest interior value (zero gradient), frozen
/// copies the held equilibrium ghost ring.
pub fn pad(z: &CellField, bc: FieldBc) -> Padded {
    let (nx, ny) = (z.nx, z.ny);
    let mut p = Padded::empty(nx, ny);
    for j in 0..ny {
        for i in 0..nx {
            p.set(i as isize, j as isize, z.get(i, j));
        }
    }
    let nxi = nx as isize;
    let nyi = ny as isize;
    let ghost = |p: &Padded, i: isize, j: isize, bc: &FieldBc| -> f64 {
        match bc {
            FieldBc::Periodic => {
                let iw = i.rem_euclid(nxi);
                let jw = j.rem_euclid(nyi);
                p.get(iw, jw)
            }
            FieldBc::Extrapolation => {
                let ic = i.clamp(0, nxi - 1);
                let jc = j.clamp(0, nyi - 1);
                p.get(ic, jc)
            }
            FieldBc::Frozen(frozen) => frozen.get(i, j),
        }
    };
    // Side columns/rows, then corners (corners only matter for diagnostics).
    for j in 0..nyi {
        let w = ghost(&p, -1, j, &bc);
        p.set(-1, j, w);
        let e = ghost(&p, nxi, j, &bc);
        p.set(nxi, j, e);
    }
    for i in -1..=nxi {
        let s = ghost(&p, i, -1, &bc);
        p.set(i, -1, s);
        let n = ghost(&p, i, nyi, &bc);
        p.set(i, nyi, n);
    }
    p
}

/// Midpoint-rule projection of a pointwise function onto cell averages.
pub fn project(f: impl Fn(f64, f64) -> f64, grid: &Grid) -> CellField {
    let mut out = CellField::zeros(grid);
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let (x, y) = grid.center(i as isize, j as isize);
            out.set(i, j, f(x, y));
        }
    }
    out
}

/// Edge average {{z}} on vertical edges: ({{z}})_(e-1/2, j) = (z_(e-1,j) + z_(e,j)) / 2.
pub fn avg_edge_x(z: &Padded, grid: &Grid) -> EdgeField {
    let mut out = EdgeField::zeros(grid, Orientation::VerticalEdges);
    for j in 0..grid.ny {
        for e in 0..out.n_i {
            let l = z.get(e as isize - 1, j as isize);
            let r = z.get(e as isize, j as isize);
            out.set(e, j, 0.5 * (l + r));
        }
    }
    out
}

/// Edge average {{z}} on horizontal edges.
pub fn avg_edge_y(z: &Padded, grid: &Grid) -> EdgeField {
    let mut out = EdgeField::zeros(grid, Orientation::HorizontalEdges);
    for e in 0..out.n_j {
        for i in 0..grid.nx {
            let b = z.get(i as isize, e as isize - 1);
            let t = z.get(i as isize, e as isize);
            out.set(i, e, 0.5 * (b + t));
        }
    }
    out
}

/// Edge jump [[z]] on vertical edges: z_(e,j) - z_(e-1,j).
pub fn jump_edge_x(z: &Padded, grid: &Grid) -> EdgeField {
    let mut out = EdgeField::zeros(grid, Orientation::VerticalEdges);
    for j in 0..grid.ny {
        for e in 0..out.n_i {
            out.set(
                e,
                j,
                z.get(e as isize, j as isize) - z.get(e as isize - 1, j as isize),
            );
        }
    }
    out
}

/// Edge jump [[z]] on horizontal edges.
pub fn jump_edge_y(z: &Padded, grid: &Grid) -> EdgeField {
    let mut out = EdgeField::zeros(grid, Orientation::HorizontalEdges);
    for e in 0..out.n_j {
        for i in 0..grid.nx {
            out.set(
                i,
                e,
                z.get(i as isize, e as isize) - z.get(i as isize, e as isize - 1),
            );
        }
    }
    out
}

/// Centered derivative d_x z = (z_(i+1,j) - z_(i-1,j)) / (2 dx).
pub fn ddx_centered(z: &Padded, grid: &Grid) -> CellField {
    let mut out = CellField::zeros(grid);
    let inv2dx = 1.0 / (2.0 * grid.dx);
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let d = z.get(i as isize + 1, j as isize) - z.get(i as isize - 1, j as isize);
            out.set(i, j, d * inv2dx);
        }
    }
    out
}

/// Centered derivative d_y z = (z_(i,j+1) - z_(i,j-1)) / (2 dy).
pub fn ddy_centered(z: &Padded, grid: &Grid) -> CellField {
    let mut out = CellField::zeros(grid);
    let inv2dy = 1.0 / (2.0 * grid.dy);
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let d = z.get(i as isize, j as isize + 1) - z.get(i as isize, j as isize - 1);
            out.set(i, j, d * inv2dy);
        }
    }
    out
}

/// Dual-grid derivative on vertical edges: (z_(e,j) - z_(e-1,j)) / dx.
pub fn ddx_dual(z: &Padded, grid: &Grid) -> EdgeField {
    let mut out = jump_edge_x(z, grid);
    let inv = 1.0 / grid.dx;
    for v in out.values.iter_mut() {
        *v *= inv;
    }
    out
}

/// Dual-grid derivative on horizontal edges: (z_(i,e) - z_(i,e-1)) / dy.
pub fn ddy_dual(z: &Padded, grid: &Grid) -> EdgeField {
    let mut out = jump_edge_y(z, grid);
    let inv = 1.0 / grid.dy;
    for v in out.values.iter_mut() {
        *v *= inv;
    }
    out
}

/// Deterministic pairwise (fixed-tree) summation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 32 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// dx*dy-weighted sum of a cell field.
pub fn weighted_sum(z: &CellField, grid: &Grid) -> f64 {
    grid.cell_area() * pairwise_sum(z.values())
}


#[cfg(test)]
mod tests {
    use super::testutil::Rng;
    use super::*;

    fn unit_grid(nx: usize, ny: usize, bc: BcMode) -> Grid {
        Grid::new(nx, ny, (0.0, 1.0), (0.0, 1.0), bc).unwrap()
    }

    /// 1D-style helper: a ny=3 strip with the given row values in every row.
    fn row_field(grid: &Grid, row: &[f64]) -> CellField {
        assert_eq!(row.len(), grid.nx);
        let mut z = CellField::zeros(grid);
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                z.set(i, j, row[i]);
            }
        }
        z
    }

    fn random_field(grid: &Grid, rng: &mut Rng) -> CellField {
        let mut z = CellField::zeros(grid);
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                z.set(i, j, rng.range(-2.0, 2.0));
            }
        }
        z
    }

    #[test]
    fn grid_rejects_too_small_and_degenerate() {
        assert!(Grid::new(2, 3, (0.0, 1.0), (0.0, 1.0), BcMode::Periodic).is_err());
        assert!(Grid::new(4, 4, (1.0, 1.0), (0.0, 1.0), BcMode::Periodic).is_err());
    }

    #[test]
    fn cell_centers_are_midpoints() {
        let g = unit_grid(4, 4, BcMode::Periodic);
        assert_eq!(g.center(0, 0), (0.125, 0.125));
        assert_eq!(g.center(3, 3), (0.875, 0.875));
    }

    #[test]
    fn project_constant_is_constant() {
        let g = unit_grid(5, 4, BcMode::Periodic);
        let z = project(|_, _| 3.25, &g);
        assert!(z.values().iter().all(|&v| v == 3.25));
    }

    #[test]
    fn project_linear_by_midpoint_rule() {
        // f(x,y) = x on [0,1]^2 with nx = ny = 2 is below the minimum grid
        // size, so check the same midpoint values on the x-column pattern of
        // a 2-wide period embedded in a 4x4 grid instead: centers 0.25/0.75.
        let g = Grid::new(2, 2, (0.0, 1.0), (0.0, 1.0), BcMode::Periodic);
        assert!(g.is_err()); // documents why the 4x4 embedding is used

        let g = unit_grid(4, 4, BcMode::Periodic);
        let z = project(|x, _| x, &g);
        for j in 0..4 {
            assert_eq!(z.get(0, j), 0.125);
            assert_eq!(z.get(1, j), 0.375);
            assert_eq!(z.get(2, j), 0.625);
            assert_eq!(z.get(3, j), 0.875);
        }
    }

    #[test]
    fn project_sine_at_midpoints() {
        let g = Grid::new(4, 3, (0.0, 1.0), (0.0, 1.0), BcMode::Periodic).unwrap();
        let z = project(|x, _| (2.0 * std::f64::consts::PI * x).sin(), &g);
        let expect = [
            (std::f64::consts::PI / 4.0).sin(),
            (3.0 * std::f64::consts::PI / 4.0).sin(),
            (5.0 * std::f64::consts::PI / 4.0).sin(),
            (7.0 * std::f64::consts::PI / 4.0).sin(),
        ];
        for i in 0..4 {
            assert!((z.get(i, 1) - expect[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn ghost_closure_modes() {
        let g = unit_grid(4, 3, BcMode::Periodic);
        let z = row_field(&g, &[0.0, 1.0, 2.0, 3.0]);

        let p = pad(&z, FieldBc::Periodic);
        assert_eq!(p.get(-1, 1), 3.0);
        assert_eq!(p.get(4, 1), 0.0);

        let p = pad(&z, FieldBc::Extrapolation);
        assert_eq!(p.get(-1, 1), 0.0);
        assert_eq!(p.get(4, 1), 3.0);

        let frozen = Padded::from_fn(4, 3, |i, _| if i < 0 { 9.0 } else { i as f64 });
        let p = pad(&z, FieldBc::Frozen(&frozen));
        assert_eq!(p.get(-1, 1), 9.0);
        assert_eq!(p.get(4, 1), 4.0);
    }

    #[test]
    fn field_bc_requires_frozen_for_equilibrium_hold() {
        assert!(matches!(
            FieldBc::resolve(BcMode::EquilibriumHold, None),
            Err(Error::MissingFrozen)
        ));
        assert!(FieldBc::resolve(BcMode::Periodic, None).is_ok());
    }

    #[test]
    fn avg_edge_hand_values_with_wrap() {
        let g = unit_grid(4, 3, BcMode::Periodic);
        let z = row_field(&g, &[0.0, 1.0, 2.0, 3.0]);
        let a = avg_edge_x(&pad(&z, FieldBc::Periodic), &g);
        // Right edge of cell i holds sigma_(i+1/2): [0.5, 1.5, 2.5, 1.5].
        let right: Vec<f64> = (0..4).map(|i| a.get(g.edge_right(i), 1)).collect();
        assert_eq!(right, vec![0.5, 1.5, 2.5, 1.5]);
    }

    #[test]
    fn avg_edge_constant_and_single_spike() {
        let g = unit_grid(4, 3, BcMode::Periodic);
        let c = CellField::constant(&g, 7.0);
        let a = avg_edge_x(&pad(&c, FieldBc::Periodic), &g);
        assert!(a.values().iter().all(|&v| v == 7.0));

        let mut z = CellField::zeros(&g);
        z.set(1, 1, 2.0);
        let a = avg_edge_x(&pad(&z, FieldBc::Periodic), &g);
        assert_eq!(a.get(g.edge_left(1), 1), 1.0);
        assert_eq!(a.get(g.edge_right(1), 1), 1.0);
        assert_eq!(a.get(g.edge_right(2), 1), 0.0);
    }

    #[test]
    fn jump_edge_hand_values_and_antisymmetry() {
        let g = unit_grid(4, 3, BcMode::Periodic);
        let z = row_field(&g, &[0.0, 1.0, 2.0, 3.0]);
        let jp = jump_edge_x(&pad(&z, FieldBc::Periodic), &g);
        let right: Vec<f64> = (0..4).map(|i| jp.get(g.edge_right(i), 1)).collect();
        assert_eq!(right, vec![1.0, 1.0, 1.0, -3.0]);

        let neg = z.scaled(-1.0);
        let jn = jump_edge_x(&pad(&neg, FieldBc::Periodic), &g);
        for (a, b) in jp.values().iter().zip(jn.values()) {
            assert_eq!(*a, -*b);
        }

        let c = CellField::constant(&g, 4.0);
        let jc = jump_edge_x(&pad(&c, FieldBc::Periodic), &g);
        assert!(jc.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ddx_centered_hand_values() {
        let g = Grid::new(4, 3, (0.0, 4.0), (0.0, 3.0), BcMode::Periodic).unwrap(); // dx = 1
        let z = row_field(&g, &[0.0, 1.0, 2.0, 3.0]);
        let d = ddx_centered(&pad(&z, FieldBc::Periodic), &g);
        let got: Vec<f64> = (0..4).map(|i| d.get(i, 1)).collect();
        assert_eq!(got, vec![-1.0, 1.0, 1.0, -1.0]);

        let c = CellField::constant(&g, 5.0);
        let dc = ddx_centered(&pad(&c, FieldBc::Periodic), &g);
        assert!(dc.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ddx_centered_linear_profile_extrapolation_interior() {
        let g = Grid::new(8, 3, (0.0, 8.0), (0.0, 3.0), BcMode::Extrapolation).unwrap();
        let z = project(|x, _| x, &g);
        let d = ddx_centered(&pad(&z, FieldBc::Extrapolation), &g);
        for i in 1..7 {
            assert!((d.get(i, 1) - 1.0).abs() < 1e-14);
        }
        // Zero-gradient ghosts halve the one-sided derivative at the ends.
        assert!((d.get(0, 1) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn ddx_dual_matches_scaled_jump() {
        let g = Grid::new(4, 3, (0.0, 4.0), (0.0, 3.0), BcMode::Periodic).unwrap();
        let z = row_field(&g, &[0.0, 1.0, 2.0, 3.0]);
        let p = pad(&z, FieldBc::Periodic);
        let d = ddx_dual(&p, &g);
        let right: Vec<f64> = (0..4).map(|i| d.get(g.edge_right(i), 1)).collect();
        assert_eq!(right, vec![1.0, 1.0, 1.0, -3.0]);

        let mut rng = Rng::new(7);
        for _ in 0..10 {
            let z = random_field(&g, &mut rng);
            let p = pad(&z, FieldBc::Periodic);
            let d = ddx_dual(&p, &g);
            let j = jump_edge_x(&p, &g);
            for (a, b) in d.values().iter().zip(j.values()) {
                assert!((a - b / g.dx).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn grad_div_duality_on_periodic_grids() {
        let g = Grid::new(12, 9, (0.0, 2.0), (-1.0, 1.0), BcMode::Periodic).unwrap();
        let mut rng = Rng::new(42);
        for _ in 0..20 {
            let w = random_field(&g, &mut rng);
            let z = random_field(&g, &mut rng);
            let dzx = ddx_centered(&pad(&z, FieldBc::Periodic), &g);
            let dwx = ddx_centered(&pad(&w, FieldBc::Periodic), &g);
            let sx = weighted_sum(&w.mul(&dzx), &g) + weighted_sum(&z.mul(&dwx), &g);
            let scale = w.max_abs() * z.max_abs() + 1e-300;
            assert!(sx.abs() <= 1e-12 * scale, "x-duality residual {sx:.3e}");

            let dzy = ddy_centered(&pad(&z, FieldBc::Periodic), &g);
            let dwy = ddy_centered(&pad(&w, FieldBc::Periodic), &g);
            let sy = weighted_sum(&w.mul(&dzy), &g) + weighted_sum(&z.mul(&dwy), &g);
            assert!(sy.abs() <= 1e-12 * scale, "y-duality residual {sy:.3e}");
        }
    }

    #[test]
    fn telescoping_derivative_sums_vanish_on_periodic_grids() {
        let g = Grid::new(10, 7, (0.0, 1.0), (0.0, 1.0), BcMode::Periodic).unwrap();
        let mut rng = Rng::new(3);
        for _ in 0..10 {
            let z = random_field(&g, &mut rng);
            let dx = ddx_centered(&pad(&z, FieldBc::Periodic), &g);
            let dy = ddy_centered(&pad(&z, FieldBc::Periodic), &g);
            assert!(weighted_sum(&dx, &g).abs() < 1e-13);
            assert!(weighted_sum(&dy, &g).abs() < 1e-13);
        }
    }

    #[test]
    fn ddx_centered_equals_avg_edge_difference() {
        let g = Grid::new(9, 5, (0.0, 3.0), (0.0, 1.0), BcMode::Periodic).unwrap();
        let mut rng = Rng::new(11);
        for _ in 0..10 {
            let z = random_field(&g, &mut rng);
            let p = pad(&z, FieldBc::Periodic);
            let d = ddx_centered(&p, &g);
            let a = avg_edge_x(&p, &g);
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let via_edges = (a.get(g.edge_right(i), j) - a.get(g.edge_left(i), j)) / g.dx;
                    assert!((d.get(i, j) - via_edges).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn operators_are_linear() {
        let g = Grid::new(8, 6, (0.0, 1.0), (0.0, 1.0), BcMode::Periodic).unwrap();
        let mut rng = Rng::new(5);
        let (a, b) = (1.7, -0.4);
        for _ in 0..5 {
            let z = random_field(&g, &mut rng);
            let w = random_field(&g, &mut rng);
            let mut combo = CellField::zeros(&g);
            for j in 0..g.ny {
                for i in 0..g.nx {
                    combo.set(i, j, a * z.get(i, j) + b * w.get(i, j));
                }
            }
            let lhs = ddx_centered(&pad(&combo, FieldBc::Periodic), &g);
            let dz = ddx_centered(&pad(&z, FieldBc::Periodic), &g);
            let dw = ddx_centered(&pad(&w, FieldBc::Periodic), &g);
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let rhs = a * dz.get(i, j) + b * dw.get(i, j);
                    assert!((lhs.get(i, j) - rhs).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn edge_counts_match_closure_mode() {
        let gp = unit_grid(4, 5, BcMode::Periodic);
        assert_eq!(EdgeField::zeros(&gp, Orientation::VerticalEdges).values().len(), 4 * 5);
        assert_eq!(
            EdgeField::zeros(&gp, Orientation::HorizontalEdges).values().len(),
            4 * 5
        );
        let ge = unit_grid(4, 5, BcMode::Extrapolation);
        assert_eq!(EdgeField::zeros(&ge, Orientation::VerticalEdges).values().len(), 5 * 5);
        assert_eq!(
            EdgeField::zeros(&ge, Orientation::HorizontalEdges).values().len(),
            4 * 6
        );
    }

    #[test]
    fn pairwise_sum_matches_naive_on_small_inputs() {
        let mut rng = Rng::new(9);
        let vals: Vec<f64> = (0..1000).map(|_| rng.range(-1.0, 1.0)).collect();
        let naive: f64 = vals.iter().sum();
        assert!((pairwise_sum(&vals) - naive).abs() < 1e-10);
    }
}
