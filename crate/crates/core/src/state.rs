//! Physical state container, parameter set and derived quantities.

use crate::error::{Error, Result};
use crate::grid::{CellField, Grid, Padded};

/// Physical and scheme parameters for one run.
#[derive(Debug, Clone, Copy)]
pub struct Params {
    /// Gravitational acceleration, > 0.
    pub g: f64,
    /// Coriolis parameter.
    pub omega: f64,
    /// Stabilisation strength; must stay above 15/8 * max(h) throughout a run.
    pub eta: f64,
    /// Safety factor of the auxiliary rotation time-step bound, in (0, 1).
    pub zeta: f64,
    /// Momentum-diffusion strength; 0 disables the extra diffusion.
    pub alpha: f64,
    /// Multiplier applied to the sufficient time-step bound, in (0, 1].
    pub cfl_safety: f64,
}

impl Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.g > 0.0) {
            return Err(Error::Params(format!("g must be positive, got {}", self.g)));
        }
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            return Err(Error::Params(format!(
                "zeta must lie in (0, 1), got {}",
                self.zeta
            )));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::Params(format!(
                "cfl_safety must lie in (0, 1], got {}",
                self.cfl_safety
            )));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::Params(format!(
                "alpha must be non-negative, got {}",
                self.alpha
            )));
        }
        if !(self.eta > 0.0) {
            return Err(Error::Params(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        Ok(())
    }

    /// Default stabilisation strength for given initial data: 1.9 * max(h0),
    /// strictly above the 15/8 threshold.
    pub fn default_eta(h0: &CellField) -> f64 {
        1.9 * h0.max()
    }
}

/// Water depth and velocities on cells at one time level.
#[derive(Debug, Clone)]
pub struct State {
    pub h: CellField,
    pub u: CellField,
    pub v: CellField,
    pub t: f64,
}

impl State {
    pub fn new(h: CellField, u: CellField, v: CellField, t: f64) -> Self {
        debug_assert_eq!(h.shape(), u.shape());
        debug_assert_eq!(h.shape(), v.shape());
        State { h, u, v, t }
    }

    /// Strict positivity of the depth; offending cells otherwise.
    pub fn check_positive_depth(&self) -> Result<()> {
        let (nx, _) = self.h.shape();
        let mut first = Vec::new();
        let mut count = 0usize;
        for (idx, &h) in self.h.values().iter().enumerate() {
            if !(h > 0.0) {
                count += 1;
                if first.len() < 8 {
                    first.push((idx % nx, idx / nx, h));
                }
            }
        }
        if count > 0 {
            return Err(Error::PositivityFailure { count, first });
        }
        Ok(())
    }
}

/// Fixed bottom topography.
#[derive(Debug, Clone)]
pub struct Bathymetry {
    pub b: CellField,
}

/// Scalar potential phi = g (h + b).
pub fn potential(state: &State, bath: &Bathymetry, g: f64) -> CellField {
    debug_assert_eq!(state.h.shape(), bath.b.shape());
    let values = state
        .h
        .values()
        .iter()
        .zip(bath.b.values())
        .map(|(h, b)| g * (h + b))
        .collect();
    CellField::from_shape_values(state.h.shape(), values)
}

/// Momentum components (m_x, m_y) = (h u, h v).
pub fn momenta(state: &State) -> (CellField, CellField) {
    (state.h.mul(&state.u), state.h.mul(&state.v))
}

/// Frozen equilibrium boundary data for the Dirichlet-hold closure.
///
/// Each member is a one-ghost-layer padded view of the corresponding field
/// evaluated from the initial (equilibrium) data, including on ghost cells.
/// Derived fields (products, potential derivatives, geostrophic residuals)
/// are precomputed so every closure a time step needs is available.
#[derive(Debug, Clone)]
pub struct FrozenEquilibrium {
    pub h: Padded,
    pub u: Padded,
    pub v: Padded,
    pub b: Padded,
    pub phi: Padded,
    /// Products h*u, h*v (mass-flux ghosts; h is held, so these serve h^{n+1} u^n too).
    pub hu: Padded,
    pub hv: Padded,
    /// Products b*u, b*v and phi*u, phi*v for the elliptic right-hand side
    /// and advection operator.
    pub bu: Padded,
    pub bv: Padded,
    pub phiu: Padded,
    pub phiv: Padded,
    /// Centered potential derivatives d_x phi, d_y phi.
    pub dxphi: Padded,
    pub dyphi: Padded,
    /// Geostrophic residuals d_x phi - omega v and d_y phi + omega u.
    pub geo_x: Padded,
    pub geo_y: Padded,
}

impl FrozenEquilibrium {
    /// Build frozen closure data from pointwise initial-data functions.
    ///
    /// `v_from_discrete_balance` replaces the analytic v by the discrete
    /// geostrophic relation v = d_x phi / omega (centered differences on the
    /// extended grid), which makes jet initial data an exact discrete steady
    /// state rather than one polluted by O(dx^2) projection error.
    pub fn from_functions(
        grid: &Grid,
        g: f64,
        omega: f64,
        h0: impl Fn(f64, f64) -> f64,
        u0: impl Fn(f64, f64) -> f64,
        v0: impl Fn(f64, f64) -> f64,
        b0: impl Fn(f64, f64) -> f64,
        v_from_discrete_balance: bool,
    ) -> Self {
        let (nx, ny) = (grid.nx, grid.ny);
        let nxi = nx as isize;
        let nyi = ny as isize;

        // phi needs a two-layer extension so its centered derivative exists
        // on the one-layer ghost ring.
        let ext = |i: isize, j: isize, f: &dyn Fn(f64, f64) -> f64| -> f64 {
            let (x, y) = grid.center(i, j);
            f(x, y)
        };
        let phi2 = |i: isize, j: isize| -> f64 {
            let (x, y) = grid.center(i, j);
            g * (h0(x, y) + b0(x, y))
        };

        let h = Padded::from_fn(nx, ny, |i, j| ext(i, j, &h0));
        let u = Padded::from_fn(nx, ny, |i, j| ext(i, j, &u0));
        let b = Padded::from_fn(nx, ny, |i, j| ext(i, j, &b0));
        let phi = Padded::from_fn(nx, ny, &phi2);

        let dxphi = Padded::from_fn(nx, ny, |i, j| {
            (phi2(i + 1, j) - phi2(i - 1, j)) / (2.0 * grid.dx)
        });
        let dyphi = Padded::from_fn(nx, ny, |i, j| {
            (phi2(i, j + 1) - phi2(i, j - 1)) / (2.0 * grid.dy)
        });

        let v = if v_from_discrete_balance {
            let mut p = Padded::from_fn(nx, ny, |_, _| 0.0);
            for j in -1..=nyi {
                for i in -1..=nxi {
                    p.set(i, j, dxphi.get(i, j) / omega);
                }
            }
            p
        } else {
            Padded::from_fn(nx, ny, |i, j| ext(i, j, &v0))
        };

        let mut geo_x = Padded::from_fn(nx, ny, |_, _| 0.0);
        let mut geo_y = Padded::from_fn(nx, ny, |_, _| 0.0);
        for j in -1..=nyi {
            for i in -1..=nxi {
                geo_x.set(i, j, dxphi.get(i, j) - omega * v.get(i, j));
                geo_y.set(i, j, dyphi.get(i, j) + omega * u.get(i, j));
            }
        }

        let hu = h.mul(&u);
        let hv = h.mul(&v);
        let bu = b.mul(&u);
        let bv = b.mul(&v);
        let phiu = phi.mul(&u);
        let phiv = phi.mul(&v);

        FrozenEquilibrium {
            h,
            u,
            v,
            b,
            phi,
            hu,
            hv,
            bu,
            bv,
            phiu,
            phiv,
            dxphi,
            dyphi,
            geo_x,
            geo_y,
        }
    }
}
