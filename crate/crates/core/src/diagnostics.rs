//! Scalar and field diagnostics: energy, mass, momenta, potential vorticity,
//! errors, experimental orders of convergence, steady-state residuals, grid
//! restriction, and the per-run ledger.
//!
//! All reductions use a fixed pairwise summation tree so ledgers are
//! bit-reproducible run to run.

use crate::error::{Error, Result};
use crate::grid::{
    ddx_centered, ddy_centered, pad, pairwise_sum, weighted_sum, CellField, FieldBc, Grid,
};
use crate::state::{potential, Bathymetry, FrozenEquilibrium, Params, State};

/// Total discrete energy: sum dx dy [ g h^2 / 2 + g b h + h (u^2 + v^2) / 2 ].
pub fn total_energy(state: &State, bath: &Bathymetry, g: f64, grid: &Grid) -> f64 {
    let n = grid.n_cells();
    let mut e = Vec::with_capacity(n);
    let h = state.h.values();
    let u = state.u.values();
    let v = state.v.values();
    let b = bath.b.values();
    for k in 0..n {
        e.push(0.5 * g * h[k] * h[k] + g * b[k] * h[k] + 0.5 * h[k] * (u[k] * u[k] + v[k] * v[k]));
    }
    grid.cell_area() * pairwise_sum(&e)
}

/// Potential vorticity (omega + d_x v - d_y u) / h with centered operators.
pub fn potential_vorticity(
    state: &State,
    omega: f64,
    grid: &Grid,
    frozen: Option<&FrozenEquilibrium>,
) -> Result<CellField> {
    let bc_u = FieldBc::resolve(grid.bc, frozen.map(|f| &f.u))?;
    let bc_v = FieldBc::resolve(grid.bc, frozen.map(|f| &f.v))?;
    let dvdx = ddx_centered(&pad(&state.v, bc_v), grid);
    let dudy = ddy_centered(&pad(&state.u, bc_u), grid);
    let mut out = CellField::zeros(grid);
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let curl = dvdx.get(i, j) - dudy.get(i, j);
            out.set(i, j, (omega + curl) / state.h.get(i, j));
        }
    }
    Ok(out)
}

/// dx dy-weighted L2 error sqrt( sum dx dy (a - b)^2 ).
pub fn l2_error(a: &CellField, b_ref: &CellField, grid: &Grid) -> Result<f64> {
    a.same_shape(b_ref)?;
    let sq: Vec<f64> = a
        .values()
        .iter()
        .zip(b_ref.values())
        .map(|(x, y)| (x - y) * (x - y))
        .collect();
    Ok((grid.cell_area() * pairwise_sum(&sq)).sqrt())
}

/// dx dy-weighted L1 error sum dx dy |a - b|.
pub fn l1_error(a: &CellField, b_ref: &CellField, area: f64) -> Result<f64> {
    a.same_shape(b_ref)?;
    let abs: Vec<f64> = a
        .values()
        .iter()
        .zip(b_ref.values())
        .map(|(x, y)| (x - y).abs())
        .collect();
    Ok(area * pairwise_sum(&abs))
}

/// Block cell-averaging onto a grid coarsened by `factor` in each direction.
pub fn restrict(fine: &CellField, factor: usize) -> Result<CellField> {
    let (nx, ny) = fine.shape();
    if factor == 0 || nx % factor != 0 || ny % factor != 0 {
        return Err(Error::IndivisibleDims { nx, ny, factor });
    }
    let cnx = nx / factor;
    let cny = ny / factor;
    let inv = 1.0 / (factor * factor) as f64;
    let mut values = Vec::with_capacity(cnx * cny);
    for cj in 0..cny {
        for ci in 0..cnx {
            let mut block = Vec::with_capacity(factor * factor);
            for j in 0..factor {
                for i in 0..factor {
                    block.push(fine.get(ci * factor + i, cj * factor + j));
                }
            }
            values.push(pairwise_sum(&block) * inv);
        }
    }
    Ok(CellField::from_shape_values((cnx, cny), values))
}

/// Experimental orders of convergence: EOC_k = log(e_{k-1}/e_k) / log(r_k/r_{k-1}).
pub fn eoc(errors: &[f64], resolutions: &[usize]) -> Result<Vec<f64>> {
    if errors.len() != resolutions.len() || errors.len() < 2 {
        return Err(Error::Config(format!(
            "EOC needs matching error/resolution lists of length >= 2, got {}/{}",
            errors.len(),
            resolutions.len()
        )));
    }
    for &e in errors {
        if !(e > 0.0) {
            return Err(Error::NonpositiveError(e));
        }
    }
    let mut out = Vec::with_capacity(errors.len() - 1);
    for k in 1..errors.len() {
        let ratio = resolutions[k] as f64 / resolutions[k - 1] as f64;
        out.push((errors[k - 1] / errors[k]).ln() / ratio.ln());
    }
    Ok(out)
}

/// Residual magnitudes of the discrete x-jet steady-state conditions:
/// (max |d_x phi - omega v|, max |d_y phi + omega u|, max |d_y h|, max |u|).
pub fn wb_residuals(
    state: &State,
    bath: &Bathymetry,
    params: &Params,
    grid: &Grid,
    frozen: Option<&FrozenEquilibrium>,
) -> Result<(f64, f64, f64, f64)> {
    let phi = potential(state, bath, params.g);
    let bc_phi = FieldBc::resolve(grid.bc, frozen.map(|f| &f.phi))?;
    let bc_h = FieldBc::resolve(grid.bc, frozen.map(|f| &f.h))?;
    let phi_pad = pad(&phi, bc_phi);
    let dxphi = ddx_centered(&phi_pad, grid);
    let dyphi = ddy_centered(&phi_pad, grid);
    let dyh = ddy_centered(&pad(&state.h, bc_h), grid);

    let mut rq: f64 = 0.0;
    let mut rr: f64 = 0.0;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            rq = rq.max((dxphi.get(i, j) - params.omega * state.v.get(i, j)).abs());
            rr = rr.max((dyphi.get(i, j) + params.omega * state.u.get(i, j)).abs());
        }
    }
    Ok((rq, rr, dyh.max_abs(), state.u.max_abs()))
}

/// One row of the per-step diagnostics time series.
#[derive(Debug, Clone, Copy)]
pub struct LedgerRow {
    pub t: f64,
    pub dt: f64,
    pub energy: f64,
    pub mass: f64,
    pub momx: f64,
    pub momy: f64,
    pub min_h: f64,
    pub max_h: f64,
    /// Squared L2 norms of the stabilisation fields.
    pub q2: f64,
    pub r2: f64,
    pub iters: usize,
}

/// Per-run diagnostics: time series plus the accumulated sums of the global
/// energy estimate (height increments and stabilisation dissipation).
#[derive(Debug, Clone)]
pub struct RunLedger {
    pub rows: Vec<LedgerRow>,
    pub energy0: f64,
    pub mass0: f64,
    /// Accumulated g/2 sum dx dy (h^{k+1} - h^k)^2.
    pub acc_height_increments: f64,
    /// Accumulated sum dx dy (1 - zeta)/eta^2 (eta - 3/2 h^{k+1}) (q^2 + r^2).
    pub acc_stabilisation: f64,
}

impl RunLedger {
    /// Start a ledger from the initial state (row at t = 0 with dt = 0).
    pub fn start(state: &State, bath: &Bathymetry, params: &Params, grid: &Grid) -> Self {
        let energy0 = total_energy(state, bath, params.g, grid);
        let mass0 = weighted_sum(&state.h, grid);
        let momx = weighted_sum(&state.h.mul(&state.u), grid);
        let momy = weighted_sum(&state.h.mul(&state.v), grid);
        RunLedger {
            rows: vec![LedgerRow {
                t: state.t,
                dt: 0.0,
                energy: energy0,
                mass: mass0,
                momx,
                momy,
                min_h: state.h.min(),
                max_h: state.h.max(),
                q2: 0.0,
                r2: 0.0,
                iters: 0,
            }],
            energy0,
            mass0,
            acc_height_increments: 0.0,
            acc_stabilisation: 0.0,
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn record(&mut self, row: LedgerRow, dh2_increment: f64, stab_increment: f64) {
        self.acc_height_increments += dh2_increment;
        self.acc_stabilisation += stab_increment;
        self.rows.push(row);
    }

    pub fn last(&self) -> &LedgerRow {
        self.rows.last().expect("ledger always has the initial row")
    }

    /// Mass drift relative to the initial mass.
    pub fn relative_mass_drift(&self) -> f64 {
        self.rows
            .iter()
            .fold(0.0f64, |m, r| m.max((r.mass - self.mass0).abs()))
            / self.mass0.abs().max(f64::MIN_POSITIVE)
    }

    /// Largest per-step energy increase, relative to the initial energy.
    pub fn max_relative_energy_increase(&self) -> f64 {
        let mut worst = 0.0f64;
        for w in self.rows.windows(2) {
            worst = worst.max(w[1].energy - w[0].energy);
        }
        worst / self.energy0.abs().max(f64::MIN_POSITIVE)
    }

    /// Check of the global energy estimate: current energy plus both
    /// accumulated sums must not exceed the initial energy (within slack).
    pub fn global_estimate_ok(&self, relative_slack: f64) -> bool {
        let bound = self.energy0 + relative_slack * self.energy0.abs();
        self.last().energy + self.acc_height_increments + self.acc_stabilisation <= bound
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{project, BcMode};

    fn grid(nx: usize, ny: usize) -> Grid {
        Grid::new(nx, ny, (0.0, 1.0), (0.0, 1.0), BcMode::Periodic).unwrap()
    }

    fn rest_state(grid: &Grid, h: f64) -> State {
        State::new(
            CellField::constant(grid, h),
            CellField::zeros(grid),
            CellField::zeros(grid),
            0.0,
        )
    }

    #[test]
    fn energy_of_unit_column_on_unit_domain() {
        let g = grid(4, 4);
        let state = rest_state(&g, 1.0);
        let bath = Bathymetry {
            b: CellField::zeros(&g),
        };
        assert!((total_energy(&state, &bath, 1.0, &g) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn energy_shifts_linearly_with_bottom_offset() {
        let g = grid(5, 3);
        let state = rest_state(&g, 2.0);
        let zero = Bathymetry {
            b: CellField::zeros(&g),
        };
        let lifted = Bathymetry {
            b: CellField::constant(&g, 0.7),
        };
        let grav = 9.81;
        let e0 = total_energy(&state, &zero, grav, &g);
        let e1 = total_energy(&state, &lifted, grav, &g);
        let mass = weighted_sum(&state.h, &g);
        assert!((e1 - e0 - 0.7 * grav * mass).abs() < 1e-12);
    }

    #[test]
    fn kinetic_energy_vanishes_iff_velocities_do() {
        let g = grid(4, 4);
        let mut state = rest_state(&g, 1.0);
        let bath = Bathymetry {
            b: CellField::zeros(&g),
        };
        let e_rest = total_energy(&state, &bath, 1.0, &g);
        state.u = CellField::constant(&g, 0.5);
        let e_moving = total_energy(&state, &bath, 1.0, &g);
        assert!(e_moving > e_rest);
        assert!((e_moving - e_rest - 0.5 * 1.0 * 0.25).abs() < 1e-14);
    }

    #[test]
    fn pv_of_still_uniform_column() {
        let g = grid(6, 6);
        let state = rest_state(&g, 2.0);
        let pv = potential_vorticity(&state, 3.0, &g, None).unwrap();
        for &v in pv.values() {
            assert!((v - 1.5).abs() < 1e-15);
        }
    }

    #[test]
    fn pv_of_rigid_rotation_interior() {
        // u = -Omega y, v = Omega x: curl = 2 Omega, exact for the centered
        // stencil on linear fields away from the (non-periodic) boundary.
        let g = Grid::new(8, 8, (0.0, 1.0), (0.0, 1.0), BcMode::Extrapolation).unwrap();
        let big_omega = 0.8;
        let state = State::new(
            CellField::constant(&g, 1.0),
            project(|_, y| -big_omega * y, &g),
            project(|x, _| big_omega * x, &g),
            0.0,
        );
        let pv = potential_vorticity(&state, 1.0, &g, None).unwrap();
        for j in 1..7 {
            for i in 1..7 {
                assert!((pv.get(i, j) - (1.0 + 2.0 * big_omega)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn pv_halves_when_depth_doubles() {
        let g = grid(6, 6);
        let u = project(|x, y| (x + 2.0 * y).sin(), &g);
        let v = project(|x, y| (x * y).cos(), &g);
        let s1 = State::new(CellField::constant(&g, 1.0), u.clone(), v.clone(), 0.0);
        let s2 = State::new(CellField::constant(&g, 2.0), u, v, 0.0);
        let p1 = potential_vorticity(&s1, 1.0, &g, None).unwrap();
        let p2 = potential_vorticity(&s2, 1.0, &g, None).unwrap();
        for (a, b) in p1.values().iter().zip(p2.values()) {
            assert!((a - 2.0 * b).abs() < 1e-14);
        }
    }

    #[test]
    fn l2_error_basics() {
        let g = grid(4, 4);
        let a = CellField::constant(&g, 2.0);
        assert_eq!(l2_error(&a, &a, &g).unwrap(), 0.0);

        let b = CellField::constant(&g, 1.0);
        // Difference 1 on the unit-area domain.
        assert!((l2_error(&a, &b, &g).unwrap() - 1.0).abs() < 1e-15);

        let c = CellField::constant(&g, -1.0);
        // Linear scaling with the difference amplitude.
        assert!((l2_error(&a, &c, &g).unwrap() - 3.0).abs() < 1e-14);

        let g2 = grid(5, 4);
        let d = CellField::constant(&g2, 0.0);
        assert!(matches!(
            l2_error(&a, &d, &g),
            Err(Error::GridMismatch { .. })
        ));
    }

    #[test]
    fn restrict_block_average() {
        let g = grid(4, 4);
        let f = project(|x, y| x + 10.0 * y, &g);
        let c = restrict(&f, 2).unwrap();
        assert_eq!(c.shape(), (2, 2));
        // 2x2 block mean equals the value at the block center for linear data.
        assert!((c.get(0, 0) - (0.25 + 10.0 * 0.25)).abs() < 1e-14);

        let constant = CellField::constant(&g, 3.0);
        let rc = restrict(&constant, 2).unwrap();
        assert!(rc.values().iter().all(|&v| v == 3.0));

        // Explicit 2x2 block [0, 1; 2, 3] -> 1.5.
        let vals = CellField::from_shape_values(
            (4, 4),
            (0..16).map(|k| (k % 2 + 2 * ((k / 4) % 2)) as f64).collect(),
        );
        let r = restrict(&vals, 2).unwrap();
        assert!(r.values().iter().all(|&v| v == 1.5));

        assert!(matches!(
            restrict(&f, 3),
            Err(Error::IndivisibleDims { .. })
        ));
    }

    #[test]
    fn restrict_preserves_mass() {
        let g = grid(8, 8);
        let f = project(|x, y| 1.0 + (6.0 * x).sin() * (4.0 * y).cos(), &g);
        let c = restrict(&f, 4).unwrap();
        let fine_mass = g.cell_area() * pairwise_sum(f.values());
        let coarse_area = g.cell_area() * 16.0;
        let coarse_mass = coarse_area * pairwise_sum(c.values());
        assert!((fine_mass - coarse_mass).abs() < 1e-13);
    }

    #[test]
    fn eoc_halving_errors_gives_order_one() {
        let e = eoc(&[0.4, 0.2, 0.1], &[16, 32, 64]).unwrap();
        for v in e {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let z = eoc(&[0.3, 0.3], &[16, 32]).unwrap();
        assert!(z[0].abs() < 1e-12);
        assert!(matches!(
            eoc(&[0.1, 0.0], &[16, 32]),
            Err(Error::NonpositiveError(_))
        ));
    }

    #[test]
    fn eoc_reproduces_reported_convergence_table() {
        // First-order scheme errors against mesh doubling; the reference
        // orders were computed from unrounded errors, hence the 0.02 slack.
        let errs = [0.2038, 0.0897, 0.0368, 0.0147, 0.0047];
        let res = [16, 32, 64, 128, 256];
        let got = eoc(&errs, &res).unwrap();
        let reported = [1.18, 1.28, 1.32, 1.63];
        for (g, r) in got.iter().zip(reported) {
            assert!(
                (g - r).abs() <= 0.02,
                "EOC {g:.4} deviates from reported {r}"
            );
        }
    }

    #[test]
    fn wb_residuals_flag_local_perturbations() {
        let g = grid(8, 8);
        let params = Params {
            g: 1.0,
            omega: 1.0,
            eta: 2.0,
            zeta: 0.9,
            alpha: 0.0,
            cfl_safety: 0.9,
        };
        let bath = Bathymetry {
            b: CellField::zeros(&g),
        };
        let state = rest_state(&g, 1.0);
        let (rq, rr, dyh, umax) = wb_residuals(&state, &bath, &params, &g, None).unwrap();
        assert!(rq.abs() < 1e-15 && rr.abs() < 1e-15 && dyh < 1e-15 && umax == 0.0);

        let mut bumped = rest_state(&g, 1.0);
        bumped.h.set(3, 3, 1.1);
        let (rq, _, _, _) = wb_residuals(&bumped, &bath, &params, &g, None).unwrap();
        assert!(rq > 1e-3);
    }

    #[test]
    fn ledger_tracks_initial_row_and_accumulators() {
        let g = grid(4, 4);
        let params = Params {
            g: 1.0,
            omega: 1.0,
            eta: 2.0,
            zeta: 0.9,
            alpha: 0.0,
            cfl_safety: 0.9,
        };
        let bath = Bathymetry {
            b: CellField::zeros(&g),
        };
        let state = rest_state(&g, 1.0);
        let mut ledger = RunLedger::start(&state, &bath, &params, &g);
        assert_eq!(ledger.rows.len(), 1);
        assert!((ledger.mass0 - 1.0).abs() < 1e-14);
        ledger.record(
            LedgerRow {
                t: 0.1,
                dt: 0.1,
                energy: ledger.energy0 - 1e-3,
                mass: ledger.mass0,
                momx: 0.0,
                momy: 0.0,
                min_h: 1.0,
                max_h: 1.0,
                q2: 0.0,
                r2: 0.0,
                iters: 2,
            },
            5e-4,
            1e-4,
        );
        assert!(ledger.global_estimate_ok(1e-10));
        assert_eq!(ledger.relative_mass_drift(), 0.0);
        assert_eq!(ledger.max_relative_energy_increase(), 0.0);
    }
}
