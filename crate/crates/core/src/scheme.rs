//! One full semi-implicit time step: time-step selection, assembly and
//! solution of the elliptic problem for the new potential, stabilisation
//! fields, mass fluxes, upwind momentum update, and the positivity/energy
//! audits.
//!
//! Outline of a step from (h, u, v) at level n:
//!
//! 1. dt from the sufficient edge-wise bound plus the rotation bound, with
//!    the unknown h^{n+1} replaced by the worst-case ends of the bracket
//!    3/4 h^n <= h^{n+1} <= 5/4 h^n.
//! 2. Solve the linear elliptic problem for phi^{n+1}:
//!    phi - g eta dt^2 [d_x(d_x phi) + d_y(d_y phi)] + dt [d_x(phi u) + d_y(phi v)]
//!      = phi^n + g dt [d_x(b u) + d_y(b v)] - g omega eta dt^2 d_x v
//!        + g omega eta dt^2 d_y u,
//!    where d_x(d_x .) is the composed wide centered stencil. Strict diagonal
//!    dominance holds under the dt bound; red-black Gauss-Seidel from the
//!    initial guess phi^n converges (and returns phi^n untouched at discrete
//!    steady states, which is what makes the balancing exact).
//! 3. Stabilisation fields q = eta dt (d_x phi^{n+1} - omega v^n),
//!    r = eta dt (d_y phi^{n+1} + omega u^n); mass fluxes
//!    F = {{h^{n+1} u^n}} - {{q}}, G = {{h^{n+1} v^n}} - {{r}}.
//! 4. The new height is taken from the explicit flux-difference form (exactly
//!    mass-conservative); the recovered phi^{n+1}/g - b must agree with it to
//!    solver tolerance, which cross-checks the assembly.
//! 5. Upwind momentum update with Coriolis/stabilisation sources and the
//!    optional momentum diffusion (alpha > 0).

use crate::diagnostics::total_energy;
use crate::error::{Error, Result};
use crate::grid::{
    avg_edge_x, avg_edge_y, ddx_centered, ddy_centered, pad, pairwise_sum, weighted_sum, BcMode,
    CellField, EdgeField, FieldBc, Grid, Orientation, Padded,
};
use crate::state::{momenta, potential, Bathymetry, FrozenEquilibrium, Params, State};
use crate::linear::{StencilSystem, SystemBuilder};

/// Relative residual tolerance of the elliptic solve.
pub const SOLVE_TOL: f64 = 1e-12;

/// Default retry budget when the height bracket is violated.
const MAX_DT_RETRIES: u32 = 3;

/// Static per-run data for the stepper: grid, parameters, bathymetry and the
/// frozen equilibrium ghosts (when the grid uses the Dirichlet-hold closure).
pub struct SchemeContext<'a> {
    pub grid: &'a Grid,
    pub params: &'a Params,
    pub bath: &'a Bathymetry,
    pub frozen: Option<&'a FrozenEquilibrium>,
    db_dx: CellField,
    db_dy: CellField,
}

impl<'a> SchemeContext<'a> {
    pub fn new(
        grid: &'a Grid,
        params: &'a Params,
        bath: &'a Bathymetry,
        frozen: Option<&'a FrozenEquilibrium>,
    ) -> Result<Self> {
        params.validate()?;
        if grid.bc == BcMode::EquilibriumHold && frozen.is_none() {
            return Err(Error::MissingFrozen);
        }
        let b_pad = pad(
            &bath.b,
            FieldBc::resolve(grid.bc, frozen.map(|f| &f.b))?,
        );
        let db_dx = ddx_centered(&b_pad, grid);
        let db_dy = ddy_centered(&b_pad, grid);
        Ok(SchemeContext {
            grid,
            params,
            bath,
            frozen,
            db_dx,
            db_dy,
        })
    }

    /// Field closure policy, selecting the matching frozen data under the
    /// equilibrium-hold mode.
    fn bc(&self, select: impl FnOnce(&'a FrozenEquilibrium) -> &'a Padded) -> FieldBc<'a> {
        match self.grid.bc {
            BcMode::Periodic => FieldBc::Periodic,
            BcMode::Extrapolation => FieldBc::Extrapolation,
            BcMode::EquilibriumHold => {
                FieldBc::Frozen(select(self.frozen.expect("validated in new")))
            }
        }
    }

    pub fn bathymetry_gradient(&self) -> (&CellField, &CellField) {
        (&self.db_dx, &self.db_dy)
    }
}

/// Ghost closure of the centered potential derivative d_x phi.
///
/// Under extrapolation the potential is extended with zero gradient, so the
/// normal derivative component vanishes on x-ghosts (this is also what keeps
/// the elliptic operator diagonally dominant at boundary rows); tangential
/// ghosts copy the nearest interior value. Held and periodic closures behave
/// like any other field.
pub(crate) fn pad_dxphi(ctx: &SchemeContext, dxphi: &CellField) -> Padded {
    match ctx.grid.bc {
        BcMode::Periodic => pad(dxphi, FieldBc::Periodic),
        BcMode::EquilibriumHold => pad(
            dxphi,
            FieldBc::Frozen(&ctx.frozen.expect("validated in new").dxphi),
        ),
        BcMode::Extrapolation => {
            let mut p = pad(dxphi, FieldBc::Extrapolation);
            let (nxi, nyi) = (ctx.grid.nx as isize, ctx.grid.ny as isize);
            for j in -1..=nyi {
                p.set(-1, j, 0.0);
                p.set(nxi, j, 0.0);
            }
            p
        }
    }
}

/// Ghost closure of d_y phi; the normal (y) ghosts vanish under extrapolation.
pub(crate) fn pad_dyphi(ctx: &SchemeContext, dyphi: &CellField) -> Padded {
    match ctx.grid.bc {
        BcMode::Periodic => pad(dyphi, FieldBc::Periodic),
        BcMode::EquilibriumHold => pad(
            dyphi,
            FieldBc::Frozen(&ctx.frozen.expect("validated in new").dyphi),
        ),
        BcMode::Extrapolation => {
            let mut p = pad(dyphi, FieldBc::Extrapolation);
            let (nxi, nyi) = (ctx.grid.nx as isize, ctx.grid.ny as isize);
            for i in -1..=nxi {
                p.set(i, -1, 0.0);
                p.set(i, nyi, 0.0);
            }
            p
        }
    }
}

/// Closed geostrophic-residual fields (d_x phi - omega v, d_y phi + omega u),
/// combined slotwise from the closed derivative and velocity views so the
/// ghost policy matches the elliptic assembly exactly.
fn geo_pads(
    ctx: &SchemeContext,
    phi_pad: &Padded,
    u: &CellField,
    v: &CellField,
) -> (Padded, Padded) {
    let grid = ctx.grid;
    let omega = ctx.params.omega;
    let px = pad_dxphi(ctx, &ddx_centered(phi_pad, grid));
    let py = pad_dyphi(ctx, &ddy_centered(phi_pad, grid));
    let pu = pad(u, ctx.bc(|f| &f.u));
    let pv = pad(v, ctx.bc(|f| &f.v));
    let (nxi, nyi) = (grid.nx as isize, grid.ny as isize);
    let mut gx = px.clone();
    let mut gy = py;
    for j in -1..=nyi {
        for i in -1..=nxi {
            gx.set(i, j, px.get(i, j) - omega * pv.get(i, j));
            gy.set(i, j, gy.get(i, j) + omega * pu.get(i, j));
        }
    }
    (gx, gy)
}

/// Sufficient time step for the state at level n.
///
/// Edge-wise advective bound with the unknown h^{n+1} replaced by the
/// worst-case bracket ends (3/4 h^n where a small new height is adverse,
/// 5/4 h^n where a large one is), the edge speeds evaluated with the lagged
/// potential phi^n, then capped by the explicit rotation bound
/// dt^2 <= zeta h (eta - 15/8 h) / (2 omega^2 eta^2), all scaled by the
/// configured safety factor.
pub fn compute_dt(ctx: &SchemeContext, state: &State) -> Result<f64> {
    let grid = ctx.grid;
    let p = ctx.params;
    let max_h = state.h.max();
    let threshold = 15.0 / 8.0 * max_h;
    if !(p.eta > threshold) {
        return Err(Error::NonpositiveDt {
            eta: p.eta,
            threshold,
        });
    }

    let h_pad = pad(&state.h, ctx.bc(|f| &f.h));
    let u_pad = pad(&state.u, ctx.bc(|f| &f.u));
    let v_pad = pad(&state.v, ctx.bc(|f| &f.v));
    let phi = potential(state, ctx.bath, p.g);
    let phi_pad = pad(&phi, ctx.bc(|f| &f.phi));
    let (gx_pad, gy_pad) = geo_pads(ctx, &phi_pad, &state.u, &state.v);

    let sum_inv = 2.0 / grid.dx + 2.0 / grid.dy;
    let mut bound = f64::INFINITY;

    let edge_bound = |hl: f64, hr: f64, wmax: f64, geo: f64| -> f64 {
        let hmax_old = hl.max(hr);
        let hmin_old = hl.min(hr);
        let lambda = geo.sqrt();
        let speed = wmax + (p.eta / (0.75 * hmax_old)).sqrt() * lambda;
        if speed <= 0.0 {
            return f64::INFINITY;
        }
        let rhs = 1.0f64.min(hmin_old / (1.25 * hmax_old));
        rhs / (sum_inv * speed)
    };

    for j in 0..grid.ny {
        let ji = j as isize;
        for e in 0..grid.n_edges_x() {
            let (l, r) = (e as isize - 1, e as isize);
            let wmax = u_pad.get(l, ji).abs().max(u_pad.get(r, ji).abs());
            let geo = gx_pad.get(l, ji).abs().max(gx_pad.get(r, ji).abs());
            bound = bound.min(edge_bound(h_pad.get(l, ji), h_pad.get(r, ji), wmax, geo));
        }
    }
    for e in 0..grid.n_edges_y() {
        let (b, t) = (e as isize - 1, e as isize);
        for i in 0..grid.nx {
            let ii = i as isize;
            let wmax = v_pad.get(ii, b).abs().max(v_pad.get(ii, t).abs());
            let geo = gy_pad.get(ii, b).abs().max(gy_pad.get(ii, t).abs());
            bound = bound.min(edge_bound(h_pad.get(ii, b), h_pad.get(ii, t), wmax, geo));
        }
    }

    if p.omega != 0.0 {
        let denom = 2.0 * p.omega * p.omega * p.eta * p.eta;
        for &h in state.h.values() {
            let aux2 = p.zeta * h * (p.eta - 15.0 / 8.0 * h) / denom;
            bound = bound.min(aux2.sqrt());
        }
    }

    if p.alpha > 0.0 {
        // Explicit-diffusion bound for the optional momentum smoothing: its
        // diffusivity g alpha dt / beta must satisfy the von Neumann limit
        // nu dt (1/dx^2 + 1/dy^2) <= 1/2; half of that keeps the shocked
        // boundary cells clear of the threshold.
        let inv_beta = 2.0 / grid.dx + 2.0 / grid.dy;
        let lap = 1.0 / (grid.dx * grid.dx) + 1.0 / (grid.dy * grid.dy);
        let diff2 = 0.25 / (p.g * p.alpha * inv_beta * lap);
        bound = bound.min(diff2.sqrt());
    }

    Ok(p.cfl_safety * bound)
}

/// Reference to a potential unknown resolved through the grid closure: either
/// an interior cell (possibly wrapped/clamped) or a held Dirichlet constant.
enum PhiRef {
    Cell(usize),
    Held(f64),
}

struct Assembler<'c, 'a> {
    ctx: &'c SchemeContext<'a>,
    builder: SystemBuilder,
    u_pad: Padded,
    v_pad: Padded,
}

impl Assembler<'_, '_> {
    fn phi_ref(&self, i: isize, j: isize) -> PhiRef {
        let grid = self.ctx.grid;
        let (nxi, nyi) = (grid.nx as isize, grid.ny as isize);
        if i >= 0 && i < nxi && j >= 0 && j < nyi {
            return PhiRef::Cell((j * nxi + i) as usize);
        }
        match grid.bc {
            BcMode::Periodic => {
                let iw = i.rem_euclid(nxi);
                let jw = j.rem_euclid(nyi);
                PhiRef::Cell((jw * nxi + iw) as usize)
            }
            BcMode::Extrapolation => {
                let ic = i.clamp(0, nxi - 1);
                let jc = j.clamp(0, nyi - 1);
                PhiRef::Cell((jc * nxi + ic) as usize)
            }
            BcMode::EquilibriumHold => {
                PhiRef::Held(self.ctx.frozen.expect("validated").phi.get(i, j))
            }
        }
    }

    /// Accumulate `w * phi_(i,j)` into `row`.
    fn add_phi(&mut self, row: usize, i: isize, j: isize, w: f64) {
        match self.phi_ref(i, j) {
            PhiRef::Cell(col) => self.builder.add(row, col, w),
            PhiRef::Held(value) => self.builder.add_rhs(row, -w * value),
        }
    }

    /// Accumulate `w * (phi u^n)_(i,j)` into `row` (x-advection neighbour).
    fn add_phi_u(&mut self, row: usize, i: isize, j: isize, w: f64) {
        match self.phi_ref(i, j) {
            PhiRef::Cell(col) => self.builder.add(row, col, w * self.u_pad.get(i, j)),
            PhiRef::Held(_) => {
                let phiu = self.ctx.frozen.expect("validated").phiu.get(i, j);
                self.builder.add_rhs(row, -w * phiu);
            }
        }
    }

    fn add_phi_v(&mut self, row: usize, i: isize, j: isize, w: f64) {
        match self.phi_ref(i, j) {
            PhiRef::Cell(col) => self.builder.add(row, col, w * self.v_pad.get(i, j)),
            PhiRef::Held(_) => {
                let phiv = self.ctx.frozen.expect("validated").phiv.get(i, j);
                self.builder.add_rhs(row, -w * phiv);
            }
        }
    }

    /// Accumulate `scale * (d_x phi)_(k,j)` into `row`, re-closing the
    /// intermediate derivative field at ghost positions exactly like the
    /// field-level operator composition does.
    fn add_dxphi(&mut self, row: usize, k: isize, j: isize, scale: f64) {
        let grid = self.ctx.grid;
        let (nxi, nyi) = (grid.nx as isize, grid.ny as isize);
        if k >= 0 && k < nxi && j >= 0 && j < nyi {
            let half = scale / (2.0 * grid.dx);
            self.add_phi(row, k + 1, j, half);
            self.add_phi(row, k - 1, j, -half);
            return;
        }
        match grid.bc {
            BcMode::Periodic => self.add_dxphi(row, k.rem_euclid(nxi), j.rem_euclid(nyi), scale),
            // Zero-gradient closure: the normal derivative vanishes on
            // x-ghosts, so a ghost d_x phi contributes nothing.
            BcMode::Extrapolation => {}
            BcMode::EquilibriumHold => {
                let held = self.ctx.frozen.expect("validated").dxphi.get(k, j);
                self.builder.add_rhs(row, -scale * held);
            }
        }
    }

    fn add_dyphi(&mut self, row: usize, i: isize, k: isize, scale: f64) {
        let grid = self.ctx.grid;
        let (nxi, nyi) = (grid.nx as isize, grid.ny as isize);
        if i >= 0 && i < nxi && k >= 0 && k < nyi {
            let half = scale / (2.0 * grid.dy);
            self.add_phi(row, i, k + 1, half);
            self.add_phi(row, i, k - 1, -half);
            return;
        }
        match grid.bc {
            BcMode::Periodic => self.add_dyphi(row, i.rem_euclid(nxi), k.rem_euclid(nyi), scale),
            BcMode::Extrapolation => {}
            BcMode::EquilibriumHold => {
                let held = self.ctx.frozen.expect("validated").dyphi.get(i, k);
                self.builder.add_rhs(row, -scale * held);
            }
        }
    }
}

/// Assemble the elliptic system for phi^{n+1} at the given dt.
pub fn assemble_phi_system(ctx: &SchemeContext, state: &State, dt: f64) -> StencilSystem {
    let grid = ctx.grid;
    let p = ctx.params;
    let phi_n = potential(state, ctx.bath, p.g);

    let u_pad = pad(&state.u, ctx.bc(|f| &f.u));
    let v_pad = pad(&state.v, ctx.bc(|f| &f.v));

    // Right-hand side:
    // phi^n + g dt [d_x(b u) + d_y(b v)] - g omega eta dt^2 d_x v
    //       + g omega eta dt^2 d_y u.
    let bu_pad = pad(&ctx.bath.b.mul(&state.u), ctx.bc(|f| &f.bu));
    let bv_pad = pad(&ctx.bath.b.mul(&state.v), ctx.bc(|f| &f.bv));
    let dx_bu = ddx_centered(&bu_pad, grid);
    let dy_bv = ddy_centered(&bv_pad, grid);
    let dx_v = ddx_centered(&v_pad, grid);
    let dy_u = ddy_centered(&u_pad, grid);

    let rot = p.g * p.omega * p.eta * dt * dt;
    let mut builder = SystemBuilder::new(grid.nx, grid.ny);
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let row = grid.idx(i, j);
            let rhs = phi_n.get(i, j) + p.g * dt * (dx_bu.get(i, j) + dy_bv.get(i, j))
                - rot * dx_v.get(i, j)
                + rot * dy_u.get(i, j);
            builder.add_rhs(row, rhs);
        }
    }

    let mut asm = Assembler {
        ctx,
        builder,
        u_pad,
        v_pad,
    };
    let diff = p.g * p.eta * dt * dt;
    for j in 0..grid.ny as isize {
        for i in 0..grid.nx as isize {
            let row = grid.idx(i as usize, j as usize);
            asm.builder.add(row, row, 1.0);

            // dt d_x(phi u) + dt d_y(phi v), centered.
            let wx = dt / (2.0 * grid.dx);
            asm.add_phi_u(row, i + 1, j, wx);
            asm.add_phi_u(row, i - 1, j, -wx);
            let wy = dt / (2.0 * grid.dy);
            asm.add_phi_v(row, i, j + 1, wy);
            asm.add_phi_v(row, i, j - 1, -wy);

            // -g eta dt^2 [d_x(d_x phi) + d_y(d_y phi)], composed wide stencils.
            let sx = diff / (2.0 * grid.dx);
            asm.add_dxphi(row, i + 1, j, -sx);
            asm.add_dxphi(row, i - 1, j, sx);
            let sy = diff / (2.0 * grid.dy);
            asm.add_dyphi(row, i, j + 1, -sy);
            asm.add_dyphi(row, i, j - 1, sy);
        }
    }
    asm.builder.finish()
}

/// Height recovered from the solved potential: h = phi/g - b, all entries
/// strictly positive.
pub fn recover_height(phi: &CellField, bath: &Bathymetry, g: f64) -> Result<CellField> {
    let (nx, _ny) = phi.shape();
    let values: Vec<f64> = phi
        .values()
        .iter()
        .zip(bath.b.values())
        .map(|(p, b)| p / g - b)
        .collect();
    let mut first = Vec::new();
    let mut count = 0usize;
    for (k, &h) in values.iter().enumerate() {
        if !(h > 0.0) {
            count += 1;
            if first.len() < 8 {
                first.push((k % nx, k / nx, h));
            }
        }
    }
    if count > 0 {
        return Err(Error::PositivityFailure { count, first });
    }
    Ok(CellField::from_shape_values(phi.shape(), values))
}

/// Stabilisation fields q = eta dt (d_x phi^{n+1} - omega v^n) and
/// r = eta dt (d_y phi^{n+1} + omega u^n), returned with their ghost closure
/// (the scaled geostrophic residual is the field that gets closed).
pub fn stabilisation_fields(
    ctx: &SchemeContext,
    phi_next_pad: &Padded,
    state_n: &State,
    dt: f64,
) -> (Padded, Padded) {
    let (gx, gy) = geo_pads(ctx, phi_next_pad, &state_n.u, &state_n.v);
    let scale = ctx.params.eta * dt;
    (gx.scaled(scale), gy.scaled(scale))
}

/// Convective mass fluxes F = {{h^{n+1} u^n}} - {{q}} on vertical edges and
/// G = {{h^{n+1} v^n}} - {{r}} on horizontal edges.
pub fn mass_fluxes(
    ctx: &SchemeContext,
    h_next: &CellField,
    state_n: &State,
    q_pad: &Padded,
    r_pad: &Padded,
) -> (EdgeField, EdgeField) {
    let grid = ctx.grid;
    let hu_pad = pad(&h_next.mul(&state_n.u), ctx.bc(|f| &f.hu));
    let hv_pad = pad(&h_next.mul(&state_n.v), ctx.bc(|f| &f.hv));

    let mut f = avg_edge_x(&hu_pad, grid);
    let qa = avg_edge_x(q_pad, grid);
    for j in 0..f.n_j {
        for e in 0..f.n_i {
            f.set(e, j, f.get(e, j) - qa.get(e, j));
        }
    }
    let mut g = avg_edge_y(&hv_pad, grid);
    let ra = avg_edge_y(r_pad, grid);
    for e in 0..g.n_j {
        for i in 0..g.n_i {
            g.set(i, e, g.get(i, e) - ra.get(i, e));
        }
    }
    (f, g)
}

/// Explicit flux-difference height update. This is the exactly conservative
/// form of the mass balance; it must agree with [`recover_height`] to solver
/// tolerance.
pub fn mass_update(
    ctx: &SchemeContext,
    h_n: &CellField,
    f: &EdgeField,
    g: &EdgeField,
    dt: f64,
) -> CellField {
    let grid = ctx.grid;
    let mut out = CellField::zeros(grid);
    let cx = dt / grid.dx;
    let cy = dt / grid.dy;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let div = cx * (f.get(grid.edge_right(i), j) - f.get(grid.edge_left(i), j))
                + cy * (g.get(i, grid.edge_above(j)) - g.get(i, grid.edge_below(j)));
            out.set(i, j, h_n.get(i, j) - div);
        }
    }
    out
}

/// Upwind edge values of a padded cell quantity against the flux signs:
/// the left (resp. bottom) cell value where the flux is >= 0, the right
/// (resp. top) value otherwise.
pub fn upwind_edge_velocity(
    grid: &Grid,
    w_pad: &Padded,
    f: &EdgeField,
    g: &EdgeField,
) -> (EdgeField, EdgeField) {
    let mut wx = EdgeField::zeros(grid, Orientation::VerticalEdges);
    for j in 0..wx.n_j {
        let ji = j as isize;
        for e in 0..wx.n_i {
            let val = if f.get(e, j) >= 0.0 {
                w_pad.get(e as isize - 1, ji)
            } else {
                w_pad.get(e as isize, ji)
            };
            wx.set(e, j, val);
        }
    }
    let mut wy = EdgeField::zeros(grid, Orientation::HorizontalEdges);
    for e in 0..wy.n_j {
        for i in 0..wy.n_i {
            let val = if g.get(i, e) >= 0.0 {
                w_pad.get(i as isize, e as isize - 1)
            } else {
                w_pad.get(i as isize, e as isize)
            };
            wy.set(i, e, val);
        }
    }
    (wx, wy)
}

/// Divergence of the optional momentum-diffusion fluxes, active for
/// alpha > 0: returns (d^T_x Lambda, d^T_y Theta) with
/// Lambda_(e,j) = (g alpha dt / beta) d^E_x (h^{n+1} u^n) and beta the
/// harmonic mesh factor 1 / (2/dx + 2/dy).
pub fn momentum_diffusion(
    ctx: &SchemeContext,
    h_next: &CellField,
    state_n: &State,
    dt: f64,
) -> Option<(CellField, CellField)> {
    let p = ctx.params;
    if p.alpha == 0.0 {
        return None;
    }
    let grid = ctx.grid;
    let inv_beta = 2.0 / grid.dx + 2.0 / grid.dy;
    let scale = p.g * p.alpha * dt * inv_beta;

    let hu_pad = pad(&h_next.mul(&state_n.u), ctx.bc(|f| &f.hu));
    let hv_pad = pad(&h_next.mul(&state_n.v), ctx.bc(|f| &f.hv));

    let mut dtx = CellField::zeros(grid);
    let mut dty = CellField::zeros(grid);
    let lam = |e: isize, j: isize| -> f64 {
        scale * (hu_pad.get(e, j) - hu_pad.get(e - 1, j)) / grid.dx
    };
    let theta = |i: isize, e: isize| -> f64 {
        scale * (hv_pad.get(i, e) - hv_pad.get(i, e - 1)) / grid.dy
    };
    for j in 0..grid.ny {
        let ji = j as isize;
        for i in 0..grid.nx {
            let ii = i as isize;
            dtx.set(i, j, (lam(ii + 1, ji) - lam(ii, ji)) / grid.dx);
            dty.set(i, j, (theta(ii, ji + 1) - theta(ii, ji)) / grid.dy);
        }
    }
    Some((dtx, dty))
}

/// Explicit velocity update from the momentum balances.
#[allow(clippy::too_many_arguments)]
pub fn momentum_update(
    ctx: &SchemeContext,
    state_n: &State,
    h_next: &CellField,
    phi_next_pad: &Padded,
    f: &EdgeField,
    g: &EdgeField,
    q_pad: &Padded,
    r_pad: &Padded,
    diffusion: Option<&(CellField, CellField)>,
    dt: f64,
) -> (CellField, CellField) {
    let grid = ctx.grid;
    let p = ctx.params;

    let u_pad = pad(&state_n.u, ctx.bc(|fr| &fr.u));
    let v_pad = pad(&state_n.v, ctx.bc(|fr| &fr.v));
    let (ux, uy) = upwind_edge_velocity(grid, &u_pad, f, g);
    let (vx, vy) = upwind_edge_velocity(grid, &v_pad, f, g);

    let dxphi = ddx_centered(phi_next_pad, grid);
    let dyphi = ddy_centered(phi_next_pad, grid);

    let cx = dt / grid.dx;
    let cy = dt / grid.dy;
    let mut u_next = CellField::zeros(grid);
    let mut v_next = CellField::zeros(grid);
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let (el, er) = (grid.edge_left(i), grid.edge_right(i));
            let (eb, ea) = (grid.edge_below(j), grid.edge_above(j));
            let hn = state_n.h.get(i, j);
            let hp = h_next.get(i, j);
            let (dlx, dly) = match diffusion {
                Some((dx, dy)) => (dx.get(i, j), dy.get(i, j)),
                None => (0.0, 0.0),
            };
            let q = q_pad.get(i as isize, j as isize);
            let r = r_pad.get(i as isize, j as isize);

            let conv_u = cx * (f.get(er, j) * ux.get(er, j) - f.get(el, j) * ux.get(el, j))
                + cy * (g.get(i, ea) * uy.get(i, ea) - g.get(i, eb) * uy.get(i, eb));
            let numer_u = hn * state_n.u.get(i, j) - conv_u
                - dt * hp * (dxphi.get(i, j) - dlx)
                + dt * p.omega * (hp * state_n.v.get(i, j) - r);
            u_next.set(i, j, numer_u / hp);

            let conv_v = cx * (f.get(er, j) * vx.get(er, j) - f.get(el, j) * vx.get(el, j))
                + cy * (g.get(i, ea) * vy.get(i, ea) - g.get(i, eb) * vy.get(i, eb));
            let numer_v = hn * state_n.v.get(i, j) - conv_v
                - dt * hp * (dyphi.get(i, j) - dly)
                + dt * p.omega * (-hp * state_n.u.get(i, j) + q);
            v_next.set(i, j, numer_v / hp);
        }
    }
    (u_next, v_next)
}

/// Per-step diagnostics and audit results.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub dt: f64,
    pub solve_iterations: usize,
    /// Final linear-solve residual relative to ||rhs||_inf.
    pub solve_residual: f64,
    pub dominance_margin: f64,
    /// Squared L2 norms of the stabilisation fields.
    pub q_norm2: f64,
    pub r_norm2: f64,
    /// Max-norms of the stabilisation fields.
    pub q_max_abs: f64,
    pub r_max_abs: f64,
    pub energy_before: f64,
    pub energy_after: f64,
    pub min_h: f64,
    pub max_h: f64,
    /// Whether 3/4 h^n <= h^{n+1} <= 5/4 h^n held cellwise.
    pub bracket_ok: bool,
    /// dt halvings needed before the bracket held.
    pub retries: u32,
    /// Max |flux-form height - recovered height| when the cross-check ran.
    pub mass_check: Option<f64>,
    /// Relative residuals of the total-momentum balance identities.
    pub mom_residual_x: f64,
    pub mom_residual_y: f64,
    /// Increment g/2 sum dx dy (h^{n+1} - h^n)^2 of the global estimate.
    pub dh2_increment: f64,
    /// Increment sum dx dy (1-zeta)/eta^2 (eta - 3/2 h^{n+1}) (q^2 + r^2).
    pub stab_increment: f64,
}

/// Owns the per-run step loop state (cross-check sampling counter).
pub struct Stepper<'a> {
    pub ctx: SchemeContext<'a>,
    steps_taken: u64,
    pub solve_tol: f64,
    pub max_iterations: usize,
}

impl<'a> Stepper<'a> {
    pub fn new(
        grid: &'a Grid,
        params: &'a Params,
        bath: &'a Bathymetry,
        frozen: Option<&'a FrozenEquilibrium>,
    ) -> Result<Self> {
        let ctx = SchemeContext::new(grid, params, bath, frozen)?;
        let max_iterations = 20 * (grid.nx + grid.ny);
        Ok(Stepper {
            ctx,
            steps_taken: 0,
            solve_tol: SOLVE_TOL,
            max_iterations,
        })
    }

    /// Advance one step, with dt capped by `max_dt` (used to land exactly on
    /// snapshot times and the final time). The height bracket is re-tried
    /// with a halved dt at most three times before failing.
    pub fn step(&mut self, state: &State, max_dt: Option<f64>) -> Result<(State, StepReport)> {
        state.check_positive_depth()?;
        let mut dt = compute_dt(&self.ctx, state)?;
        if let Some(cap) = max_dt {
            dt = dt.min(cap);
        }
        if !dt.is_finite() || !(dt > 0.0) {
            return Err(Error::Config(format!(
                "non-positive or unbounded time step {dt}; cap it with a final time"
            )));
        }
        let energy_before = total_energy(state, self.ctx.bath, self.ctx.params.g, self.ctx.grid);

        let mut last_err = None;
        for retry in 0..=MAX_DT_RETRIES {
            match self.attempt(state, dt, energy_before) {
                Ok((next, mut report)) => {
                    report.retries = retry;
                    self.steps_taken += 1;
                    return Ok((next, report));
                }
                Err(e @ (Error::BracketViolation { .. } | Error::PositivityFailure { .. })) => {
                    dt *= 0.5;
                    last_err = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(match last_err.expect("retry loop only exits with an error") {
            Error::BracketViolation {
                i,
                j,
                h_old,
                h_new,
                ..
            } => Error::BracketViolation {
                i,
                j,
                h_old,
                h_new,
                retries: MAX_DT_RETRIES,
            },
            e => e,
        })
    }

    fn attempt(&self, state: &State, dt: f64, energy_before: f64) -> Result<(State, StepReport)> {
        let ctx = &self.ctx;
        let grid = ctx.grid;
        let p = ctx.params;
        let area = grid.cell_area();

        let phi_n = potential(state, ctx.bath, p.g);
        let sys = assemble_phi_system(ctx, state, dt);
        let dominance_margin = sys.dominance_margin();
        let (phi_next, stats) = sys.solve(&phi_n, self.solve_tol, self.max_iterations)?;

        let h_rec = recover_height(&phi_next, ctx.bath, p.g)?;
        let phi_next_pad = pad(&phi_next, ctx.bc(|f| &f.phi));
        let (q_pad, r_pad) = stabilisation_fields(ctx, &phi_next_pad, state, dt);
        let (flux_x, flux_y) = mass_fluxes(ctx, &h_rec, state, &q_pad, &r_pad);
        let h_next = mass_update(ctx, &state.h, &flux_x, &flux_y, dt);

        // Positivity bracket, cellwise against the old height. A violation
        // aborts the attempt; the caller retries with a halved dt.
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let h_old = state.h.get(i, j);
                let h_new = h_next.get(i, j);
                if !(h_new >= 0.75 * h_old && h_new <= 1.25 * h_old) {
                    return Err(Error::BracketViolation {
                        i,
                        j,
                        h_old,
                        h_new,
                        retries: 0,
                    });
                }
            }
        }
        let bracket_ok = true;

        // Flux-form vs recovered height: an algebraic identity up to the
        // solver residual; disagreement beyond it signals an assembly bug.
        // Checked every step in debug builds, every 10th step otherwise.
        let check_every = if cfg!(debug_assertions) { 1 } else { 10 };
        let mass_check = if self.steps_taken % check_every == 0 {
            let rhs_norm = sys.rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let tolerance = 100.0 * self.solve_tol * rhs_norm.max(1.0) / p.g;
            let max_diff = h_next
                .values()
                .iter()
                .zip(h_rec.values())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if max_diff > tolerance {
                return Err(Error::MassBalanceMismatch {
                    max_diff,
                    tolerance,
                });
            }
            Some(max_diff)
        } else {
            None
        };

        let diffusion = momentum_diffusion(ctx, &h_next, state, dt);
        let (u_next, v_next) = momentum_update(
            ctx,
            state,
            &h_next,
            &phi_next_pad,
            &flux_x,
            &flux_y,
            &q_pad,
            &r_pad,
            diffusion.as_ref(),
            dt,
        );
        let next = State::new(h_next, u_next, v_next, state.t + dt);

        let energy_after = total_energy(&next, ctx.bath, p.g, grid);
        if grid.bc == BcMode::Periodic {
            let slack = 1e-10 * energy_before.abs();
            if energy_after > energy_before + slack {
                return Err(Error::EnergyIncrease {
                    before: energy_before,
                    after: energy_after,
                    slack,
                });
            }
        }

        let q = q_pad.interior();
        let r = r_pad.interior();
        let q_norm2 = area * pairwise_sum(&q.values().iter().map(|v| v * v).collect::<Vec<_>>());
        let r_norm2 = area * pairwise_sum(&r.values().iter().map(|v| v * v).collect::<Vec<_>>());
        let q_max_abs = q.max_abs();
        let r_max_abs = r.max_abs();

        let dh2: Vec<f64> = next
            .h
            .values()
            .iter()
            .zip(state.h.values())
            .map(|(a, b)| (a - b) * (a - b))
            .collect();
        let dh2_increment = 0.5 * p.g * area * pairwise_sum(&dh2);

        let stab: Vec<f64> = next
            .h
            .values()
            .iter()
            .zip(q.values().iter().zip(r.values()))
            .map(|(h, (qv, rv))| {
                (1.0 - p.zeta) / (p.eta * p.eta)
                    * (p.eta - 1.5 * h)
                    * (qv * qv + rv * rv)
            })
            .collect();
        let stab_increment = area * pairwise_sum(&stab);

        let (mom_residual_x, mom_residual_y) =
            momentum_balance_residuals(ctx, state, &next, &q, &r, diffusion.as_ref(), dt);

        let report = StepReport {
            dt,
            solve_iterations: stats.iterations,
            solve_residual: stats.relative_residual,
            dominance_margin,
            q_norm2,
            r_norm2,
            q_max_abs,
            r_max_abs,
            energy_before,
            energy_after,
            min_h: next.h.min(),
            max_h: next.h.max(),
            bracket_ok,
            retries: 0,
            mass_check,
            mom_residual_x,
            mom_residual_y,
            dh2_increment,
            stab_increment,
        };
        Ok((next, report))
    }
}

/// Relative residuals of the discrete total-momentum balances: the change of
/// total momentum must equal the bathymetry source, the Coriolis exchange,
/// the stabilisation source and (when active) the diffusion term. Exact on
/// periodic grids, reported informatively otherwise.
fn momentum_balance_residuals(
    ctx: &SchemeContext,
    state: &State,
    next: &State,
    q: &CellField,
    r: &CellField,
    diffusion: Option<&(CellField, CellField)>,
    dt: f64,
) -> (f64, f64) {
    let grid = ctx.grid;
    let p = ctx.params;
    let (db_dx, db_dy) = ctx.bathymetry_gradient();

    let (mx_new, my_new) = momenta(next);
    let (mx_old, my_old) = momenta(state);

    let bath_x = weighted_sum(&next.h.mul(db_dx), grid);
    let bath_y = weighted_sum(&next.h.mul(db_dy), grid);
    let cor_x = weighted_sum(&next.h.mul(&state.v), grid) * p.omega
        - p.omega * weighted_sum(r, grid);
    let cor_y = -weighted_sum(&next.h.mul(&state.u), grid) * p.omega
        + p.omega * weighted_sum(q, grid);
    let (diff_x, diff_y) = match diffusion {
        Some((dx, dy)) => (
            weighted_sum(&next.h.mul(dx), grid),
            weighted_sum(&next.h.mul(dy), grid),
        ),
        None => (0.0, 0.0),
    };

    let lhs_x = weighted_sum(&mx_new, grid);
    let rhs_x = weighted_sum(&mx_old, grid) - dt * p.g * bath_x + dt * cor_x + dt * diff_x;
    let lhs_y = weighted_sum(&my_new, grid);
    let rhs_y = weighted_sum(&my_old, grid) - dt * p.g * bath_y + dt * cor_y + dt * diff_y;

    let scale_x = mx_new.max_abs().max(mx_old.max_abs()) * grid.cell_area() * grid.n_cells() as f64
        + dt * (bath_x.abs() + cor_x.abs() + diff_x.abs())
        + f64::MIN_POSITIVE;
    let scale_y = my_new.max_abs().max(my_old.max_abs()) * grid.cell_area() * grid.n_cells() as f64
        + dt * (bath_y.abs() + cor_y.abs() + diff_y.abs())
        + f64::MIN_POSITIVE;

    ((lhs_x - rhs_x).abs() / scale_x, (lhs_y - rhs_y).abs() / scale_y)
}
