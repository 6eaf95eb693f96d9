//! Run orchestration: configuration ingestion, the time loop with snapshot
//! scheduling, ledger/snapshot/manifest output, and the sweep and refinement
//! drivers.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cases::{self, CaseSetup, ExactSolution};
use crate::diagnostics::{l2_error, potential_vorticity, restrict, LedgerRow, RunLedger};
use crate::error::{Error, Result};
use crate::grid::{weighted_sum, BcMode, CellField, Grid};
use crate::kconv::{error_ladder, LadderEntry, Snapshot};
use crate::scheme::Stepper;
use crate::state::{momenta, potential, State};

/// Environment variable that re-roots relative output directories.
pub const OUT_ROOT_ENV: &str = "RSW_OUT_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Vtk,
}

/// On-disk run configuration. Every field is optional; unset fields fall
/// back to the case defaults, so a manifest echoing the resolved values is
/// itself a complete configuration.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunConfig {
    pub case: Option<String>,
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    pub t_final: Option<f64>,
    pub g: Option<f64>,
    pub omega: Option<f64>,
    pub eta: Option<f64>,
    pub zeta: Option<f64>,
    pub alpha: Option<f64>,
    pub cfl_safety: Option<f64>,
    pub snapshot_times: Option<Vec<f64>>,
    pub snapshot_every_steps: Option<usize>,
    pub formats: Option<Vec<String>>,
    pub out_dir: Option<String>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Overlay: fields set in `self` win over `base`.
    pub fn merged_over(self, base: RunConfig) -> RunConfig {
        RunConfig {
            case: self.case.or(base.case),
            nx: self.nx.or(base.nx),
            ny: self.ny.or(base.ny),
            t_final: self.t_final.or(base.t_final),
            g: self.g.or(base.g),
            omega: self.omega.or(base.omega),
            eta: self.eta.or(base.eta),
            zeta: self.zeta.or(base.zeta),
            alpha: self.alpha.or(base.alpha),
            cfl_safety: self.cfl_safety.or(base.cfl_safety),
            snapshot_times: self.snapshot_times.or(base.snapshot_times),
            snapshot_every_steps: self.snapshot_every_steps.or(base.snapshot_every_steps),
            formats: self.formats.or(base.formats),
            out_dir: self.out_dir.or(base.out_dir),
        }
    }

    /// Build the case, apply overrides and validate the schedule.
    pub fn resolve(&self) -> Result<ResolvedRun> {
        let name = self
            .case
            .clone()
            .ok_or_else(|| Error::Config("no case selected".into()))?;
        let resolution = match (self.nx, self.ny) {
            (None, None) => None,
            (nx, ny) => {
                let info = cases::info(&name)?;
                let nx = nx.unwrap_or(info.default_nx);
                let ny = ny.unwrap_or(info.default_ny);
                Some((nx, ny))
            }
        };
        let mut setup = cases::build(&name, resolution)?;

        if let Some(g) = self.g {
            setup.params.g = g;
        }
        if let Some(omega) = self.omega {
            setup.params.omega = omega;
        }
        if let Some(eta) = self.eta {
            setup.params.eta = eta;
        }
        if let Some(zeta) = self.zeta {
            setup.params.zeta = zeta;
        }
        if let Some(alpha) = self.alpha {
            setup.params.alpha = alpha;
        }
        if let Some(cfl) = self.cfl_safety {
            setup.params.cfl_safety = cfl;
        }
        setup.params.validate().map_err(|e| match e {
            Error::Params(m) => Error::Config(m),
            other => other,
        })?;

        let t_final = self.t_final.unwrap_or(setup.t_final);
        if !(t_final >= 0.0) {
            return Err(Error::Config(format!("t_final must be >= 0, got {t_final}")));
        }
        let mut snapshot_times = self.snapshot_times.clone().unwrap_or_default();
        snapshot_times.retain(|t| *t > 0.0);
        snapshot_times.sort_by(f64::total_cmp);
        snapshot_times.dedup();
        if snapshot_times.iter().any(|t| *t > t_final) {
            return Err(Error::Config(
                "snapshot times must lie within [0, t_final]".into(),
            ));
        }

        let formats = match &self.formats {
            None => vec![OutputFormat::Csv],
            Some(list) => {
                let mut out = Vec::new();
                for f in list {
                    match f.as_str() {
                        "csv" => out.push(OutputFormat::Csv),
                        "vtk" => out.push(OutputFormat::Vtk),
                        other => {
                            return Err(Error::Config(format!("unknown output format `{other}`")))
                        }
                    }
                }
                out
            }
        };

        let out_dir = self.out_dir.as_ref().map(|dir| {
            let path = PathBuf::from(dir);
            match std::env::var_os(OUT_ROOT_ENV) {
                Some(root) if path.is_relative() => PathBuf::from(root).join(path),
                _ => path,
            }
        });

        // Fully resolved echo: re-running from the manifest reproduces this run.
        let echo = RunConfig {
            case: Some(name),
            nx: Some(setup.grid.nx),
            ny: Some(setup.grid.ny),
            t_final: Some(t_final),
            g: Some(setup.params.g),
            omega: Some(setup.params.omega),
            eta: Some(setup.params.eta),
            zeta: Some(setup.params.zeta),
            alpha: Some(setup.params.alpha),
            cfl_safety: Some(setup.params.cfl_safety),
            snapshot_times: Some(snapshot_times.clone()),
            snapshot_every_steps: self.snapshot_every_steps,
            formats: Some(
                formats
                    .iter()
                    .map(|f| {
                        match f {
                            OutputFormat::Csv => "csv",
                            OutputFormat::Vtk => "vtk",
                        }
                        .to_string()
                    })
                    .collect(),
            ),
            out_dir: self.out_dir.clone(),
        };

        Ok(ResolvedRun {
            setup,
            t_final,
            snapshot_times,
            snapshot_every_steps: self.snapshot_every_steps,
            formats,
            out_dir,
            echo,
        })
    }
}

pub struct ResolvedRun {
    pub setup: CaseSetup,
    pub t_final: f64,
    pub snapshot_times: Vec<f64>,
    pub snapshot_every_steps: Option<usize>,
    pub formats: Vec<OutputFormat>,
    pub out_dir: Option<PathBuf>,
    pub echo: RunConfig,
}

/// Aggregated outcome of one run.
pub struct RunOutput {
    pub setup: CaseSetup,
    pub final_state: State,
    pub ledger: RunLedger,
    pub steps: usize,
    pub wall_seconds: f64,
    pub min_dominance_margin: f64,
    pub max_solve_residual: f64,
    pub max_solve_iterations: usize,
    pub max_mom_residual_x: f64,
    pub max_mom_residual_y: f64,
    pub max_mass_check: f64,
    pub total_retries: u64,
    /// Largest max-norms of the stabilisation fields seen over the run.
    pub max_q_abs: f64,
    pub max_r_abs: f64,
    /// Global energy estimate held at every recorded step (periodic runs).
    pub global_estimate_ok: bool,
    /// Exact solution error, max over recorded steps of the total-momentum
    /// components, when the case has a closed form.
    pub exact_momentum_error: Option<f64>,
}

impl RunOutput {
    /// Conservative-variable snapshot of the final state.
    pub fn final_snapshot(&self) -> Snapshot {
        let (mx, my) = momenta(&self.final_state);
        Snapshot {
            resolution: self.setup.grid.nx,
            h: self.final_state.h.clone(),
            mx,
            my,
        }
    }
}

/// Execute the time loop of a resolved run, writing outputs when an output
/// directory is configured.
pub fn execute_run(run: ResolvedRun) -> Result<RunOutput> {
    let started = Instant::now();
    let ResolvedRun {
        setup,
        t_final,
        snapshot_times,
        snapshot_every_steps,
        formats,
        out_dir,
        echo,
    } = run;

    let grid = &setup.grid;
    let params = &setup.params;
    let mut stepper = Stepper::new(grid, params, &setup.bathymetry, setup.frozen.as_ref())?;
    let mut state = setup.state.clone();
    let mut ledger = RunLedger::start(&state, &setup.bathymetry, params, grid);

    let mut writer = match &out_dir {
        Some(dir) => Some(SnapshotWriter::new(dir, &formats)?),
        None => None,
    };
    if let Some(w) = writer.as_mut() {
        w.write(&setup, &state)?;
    }

    // Event times the loop must land on exactly.
    let mut events: Vec<f64> = snapshot_times.clone();
    if t_final > 0.0 {
        events.push(t_final);
    }
    events.sort_by(f64::total_cmp);
    events.dedup();
    let snapshot_set: BTreeSet<u64> = snapshot_times.iter().map(|t| t.to_bits()).collect();

    let mut steps = 0usize;
    let mut min_dominance_margin = f64::INFINITY;
    let mut max_solve_residual = 0.0f64;
    let mut max_solve_iterations = 0usize;
    let mut max_mom_residual_x = 0.0f64;
    let mut max_mom_residual_y = 0.0f64;
    let mut max_mass_check = 0.0f64;
    let mut total_retries = 0u64;
    let mut max_q_abs = 0.0f64;
    let mut max_r_abs = 0.0f64;
    let mut global_estimate_ok = true;
    let mut exact_err: f64 = 0.0;

    let mut event_idx = 0;
    while event_idx < events.len() {
        let target = events[event_idx];
        let cap = target - state.t;
        let (mut next, report) = stepper.step(&state, Some(cap))?;
        if (next.t - target).abs() <= 1e-9 * target.abs().max(1e-300) {
            next.t = target;
        }
        state = next;

        let mass = weighted_sum(&state.h, grid);
        let momx = weighted_sum(&state.h.mul(&state.u), grid);
        let momy = weighted_sum(&state.h.mul(&state.v), grid);
        ledger.record(
            LedgerRow {
                t: state.t,
                dt: report.dt,
                energy: report.energy_after,
                mass,
                momx,
                momy,
                min_h: report.min_h,
                max_h: report.max_h,
                q2: report.q_norm2,
                r2: report.r_norm2,
                iters: report.solve_iterations,
            },
            report.dh2_increment,
            report.stab_increment,
        );
        steps += 1;
        min_dominance_margin = min_dominance_margin.min(report.dominance_margin);
        max_solve_residual = max_solve_residual.max(report.solve_residual);
        max_solve_iterations = max_solve_iterations.max(report.solve_iterations);
        max_mom_residual_x = max_mom_residual_x.max(report.mom_residual_x);
        max_mom_residual_y = max_mom_residual_y.max(report.mom_residual_y);
        if let Some(diff) = report.mass_check {
            max_mass_check = max_mass_check.max(diff);
        }
        total_retries += report.retries as u64;
        max_q_abs = max_q_abs.max(report.q_max_abs);
        max_r_abs = max_r_abs.max(report.r_max_abs);
        if grid.bc == BcMode::Periodic && !ledger.global_estimate_ok(1e-10) {
            global_estimate_ok = false;
        }
        if let Some(exact) = &setup.exact {
            exact_err = exact_err.max(exact_momentum_error(exact, &state, grid));
        }

        if state.t == target {
            event_idx += 1;
            if snapshot_set.contains(&target.to_bits()) {
                if let Some(w) = writer.as_mut() {
                    w.write(&setup, &state)?;
                }
            }
        }
        if let Some(every) = snapshot_every_steps {
            if every > 0 && steps % every == 0 {
                if let Some(w) = writer.as_mut() {
                    w.write(&setup, &state)?;
                }
            }
        }
    }

    // Final snapshot (t == t_final, or the initial state when t_final == 0).
    if t_final > 0.0 {
        if let Some(w) = writer.as_mut() {
            w.write(&setup, &state)?;
        }
    }

    drop(stepper);
    let exact_momentum_error = setup.exact.map(|_| exact_err);
    let out = RunOutput {
        final_state: state,
        ledger,
        steps,
        wall_seconds: started.elapsed().as_secs_f64(),
        min_dominance_margin,
        max_solve_residual,
        max_solve_iterations,
        max_mom_residual_x,
        max_mom_residual_y,
        max_mass_check,
        total_retries,
        max_q_abs,
        max_r_abs,
        global_estimate_ok,
        exact_momentum_error,
        setup,
    };

    if let (Some(dir), Some(w)) = (&out_dir, writer.as_ref()) {
        write_ledger_csv(&dir.join("ledger.csv"), &out.ledger)?;
        write_manifest(&dir.join("manifest.toml"), &echo, &out, &w.written)?;
    }
    Ok(out)
}

/// Max-norm error of the total momenta against a spatially constant exact
/// solution, normalized by the domain area.
fn exact_momentum_error(exact: &ExactSolution, state: &State, grid: &Grid) -> f64 {
    let (h, u, v) = exact.eval(state.t);
    let domain = grid.cell_area() * grid.n_cells() as f64;
    let momx = weighted_sum(&state.h.mul(&state.u), grid) / domain;
    let momy = weighted_sum(&state.h.mul(&state.v), grid) / domain;
    (momx - h * u).abs().max((momy - h * v).abs())
}

/// Convenience: resolve a bare config and run it.
pub fn run_from_config(config: RunConfig) -> Result<RunOutput> {
    execute_run(config.resolve()?)
}

// ---------------------------------------------------------------------------
// Sweep driver (error/EOC tables against a self-generated fine reference)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct SweepRow {
    pub k: usize,
    /// L2 errors of (h, u, v) against the restricted reference.
    pub err: [f64; 3],
    /// Orders against the previous row (empty for the first row).
    pub eoc: [Option<f64>; 3],
}

fn validate_ladder(resolutions: &[usize], reference: usize, minimum: usize) -> Result<()> {
    if resolutions.len() < minimum {
        return Err(Error::Config(format!(
            "need at least {minimum} resolutions, got {}",
            resolutions.len()
        )));
    }
    for w in resolutions.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Config(
                "resolutions must be strictly ascending (duplicates rejected)".into(),
            ));
        }
        let ratio = w[1] / w[0];
        if w[1] % w[0] != 0 || !ratio.is_power_of_two() {
            return Err(Error::Config(format!(
                "resolution step {} -> {} is not a power-of-two multiple",
                w[0], w[1]
            )));
        }
    }
    let finest = *resolutions.last().expect("non-empty");
    if reference < finest || reference % finest != 0 || !(reference / finest).is_power_of_two() {
        return Err(Error::Config(format!(
            "reference {reference} must be a power-of-two multiple of the finest resolution {finest}"
        )));
    }
    Ok(())
}

/// Run a case at the listed resolutions plus a finer reference, and tabulate
/// L2 errors of (h, u, v) at the final time with their convergence orders.
pub fn execute_sweep(
    base: &RunConfig,
    resolutions: &[usize],
    reference: usize,
) -> Result<Vec<SweepRow>> {
    validate_ladder(resolutions, reference, 1)?;
    let name = base
        .case
        .clone()
        .ok_or_else(|| Error::Config("no case selected".into()))?;
    let case_info = cases::info(&name)?;

    let run_at = |k: usize| -> Result<RunOutput> {
        let (nx, ny) = cases::resolution_for(&case_info, k);
        let cfg = RunConfig {
            nx: Some(nx),
            ny: Some(ny),
            out_dir: None,
            snapshot_times: None,
            snapshot_every_steps: None,
            ..base.clone()
        };
        execute_run(cfg.resolve()?)
    };

    let reference_run = run_at(reference)?;
    let mut rows: Vec<SweepRow> = Vec::new();
    for &k in resolutions {
        let run = run_at(k)?;
        let factor = reference / k;
        let grid = &run.setup.grid;
        let restrict_field = |f: &CellField| -> Result<CellField> {
            if case_info.quasi_1d {
                restrict_x(f, factor)
            } else {
                restrict(f, factor)
            }
        };
        let href = restrict_field(&reference_run.final_state.h)?;
        let uref = restrict_field(&reference_run.final_state.u)?;
        let vref = restrict_field(&reference_run.final_state.v)?;
        let err = [
            l2_error(&run.final_state.h, &href, grid)?,
            l2_error(&run.final_state.u, &uref, grid)?,
            l2_error(&run.final_state.v, &vref, grid)?,
        ];
        let eoc = match rows.last() {
            None => [None, None, None],
            Some(prev) => {
                let ratio = (k as f64 / prev.k as f64).ln();
                [0, 1, 2].map(|i| {
                    (prev.err[i] > 0.0 && err[i] > 0.0)
                        .then(|| (prev.err[i] / err[i]).ln() / ratio)
                })
            }
        };
        rows.push(SweepRow { k, err, eoc });
    }
    Ok(rows)
}

/// x-only block restriction for quasi-1D strips (the 3-row transverse
/// direction is left untouched).
fn restrict_x(fine: &CellField, factor: usize) -> Result<CellField> {
    let (nx, ny) = fine.shape();
    if factor == 0 || nx % factor != 0 {
        return Err(Error::IndivisibleDims { nx, ny, factor });
    }
    let cnx = nx / factor;
    let inv = 1.0 / factor as f64;
    let mut values = Vec::with_capacity(cnx * ny);
    for j in 0..ny {
        for ci in 0..cnx {
            let mut acc = 0.0;
            for i in 0..factor {
                acc += fine.get(ci * factor + i, j);
            }
            values.push(acc * inv);
        }
    }
    Ok(CellField::from_shape_values((cnx, ny), values))
}

// ---------------------------------------------------------------------------
// Refinement-ladder driver
// ---------------------------------------------------------------------------

/// Run the refinement ladder of a 2D case and compute the E1-E4 table
/// against a self-generated reference run.
pub fn execute_kconv(
    base: &RunConfig,
    resolutions: &[usize],
    reference: usize,
) -> Result<Vec<LadderEntry>> {
    validate_ladder(resolutions, reference, 3)?;
    let name = base
        .case
        .clone()
        .ok_or_else(|| Error::Config("no case selected".into()))?;
    let case_info = cases::info(&name)?;
    if case_info.quasi_1d {
        return Err(Error::Config(
            "refinement ladders need a two-dimensional case".into(),
        ));
    }

    // With an output directory configured, each ladder run writes its own
    // ledger and snapshots under <out>/k<resolution>/.
    let run_at = |k: usize| -> Result<Snapshot> {
        let cfg = RunConfig {
            nx: Some(k),
            ny: Some(k),
            out_dir: base.out_dir.as_ref().map(|d| format!("{d}/k{k}")),
            snapshot_times: None,
            snapshot_every_steps: None,
            ..base.clone()
        };
        Ok(execute_run(cfg.resolve()?)?.final_snapshot())
    };

    let mut snapshots = Vec::with_capacity(resolutions.len());
    for &k in resolutions {
        snapshots.push(run_at(k)?);
    }
    // The reference statistics are those of the full refinement family (all
    // ladder runs plus the finest reference run): the truncated ensembles
    // then converge to the reference ensemble as k grows, which is the
    // observable form of convergence in distribution. A lone reference run
    // would pin the reference variance at zero and make E3 compare against
    // an empty spread.
    let mut reference_ensemble = snapshots.clone();
    reference_ensemble.push(run_at(reference)?);
    error_ladder(&snapshots, &reference_ensemble)
}

// ---------------------------------------------------------------------------
// Formatting and file output
// ---------------------------------------------------------------------------

/// Shortest fixed/scientific representation with 17 significant digits
/// (the `%.17g` convention): enough digits for bit-exact f64 round trips.
pub fn format_g17(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.16e}", x);
    let epos = sci.find('e').expect("scientific format");
    let exp: i32 = sci[epos + 1..].parse().expect("exponent");
    if exp < -4 || exp >= 17 {
        let mantissa = sci[..epos].trim_end_matches('0').trim_end_matches('.');
        format!("{mantissa}e{exp:+03}")
    } else {
        let prec = (16 - exp).max(0) as usize;
        let fixed = format!("{x:.prec$}");
        if fixed.contains('.') {
            fixed.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            fixed
        }
    }
}

pub fn write_ledger_csv(path: &Path, ledger: &RunLedger) -> Result<()> {
    fs::write(path, ledger_csv_string(ledger))?;
    Ok(())
}

pub fn ledger_csv_string(ledger: &RunLedger) -> String {
    let mut s = String::from("t,dt,energy,mass,momx,momy,minh,maxh,q2,r2,iters\n");
    for r in &ledger.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            format_g17(r.t),
            format_g17(r.dt),
            format_g17(r.energy),
            format_g17(r.mass),
            format_g17(r.momx),
            format_g17(r.momy),
            format_g17(r.min_h),
            format_g17(r.max_h),
            format_g17(r.q2),
            format_g17(r.r2),
            r.iters
        );
    }
    s
}

/// Snapshot CSV: `x,y,h,u,v,b,phi,pv`, rows j-major.
pub fn snapshot_csv_string(setup: &CaseSetup, state: &State) -> Result<String> {
    let grid = &setup.grid;
    let phi = potential(state, &setup.bathymetry, setup.params.g);
    let pv = potential_vorticity(state, setup.params.omega, grid, setup.frozen.as_ref())?;
    let mut s = String::from("x,y,h,u,v,b,phi,pv\n");
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let (x, y) = grid.center(i as isize, j as isize);
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                format_g17(x),
                format_g17(y),
                format_g17(state.h.get(i, j)),
                format_g17(state.u.get(i, j)),
                format_g17(state.v.get(i, j)),
                format_g17(setup.bathymetry.b.get(i, j)),
                format_g17(phi.get(i, j)),
                format_g17(pv.get(i, j)),
            );
        }
    }
    Ok(s)
}

/// Legacy structured-points VTK snapshot with one scalar block per field.
pub fn snapshot_vtk_string(setup: &CaseSetup, state: &State) -> Result<String> {
    let grid = &setup.grid;
    let phi = potential(state, &setup.bathymetry, setup.params.g);
    let pv = potential_vorticity(state, setup.params.omega, grid, setup.frozen.as_ref())?;
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "rsw snapshot t={}", format_g17(state.t));
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET STRUCTURED_POINTS");
    let _ = writeln!(s, "DIMENSIONS {} {} 1", grid.nx, grid.ny);
    let (ox, oy) = grid.center(0, 0);
    let _ = writeln!(s, "ORIGIN {} {} 0", format_g17(ox), format_g17(oy));
    let _ = writeln!(
        s,
        "SPACING {} {} 1",
        format_g17(grid.dx),
        format_g17(grid.dy)
    );
    let _ = writeln!(s, "POINT_DATA {}", grid.n_cells());
    let fields: [(&str, &CellField); 6] = [
        ("h", &state.h),
        ("u", &state.u),
        ("v", &state.v),
        ("b", &setup.bathymetry.b),
        ("phi", &phi),
        ("pv", &pv),
    ];
    for (name, field) in fields {
        let _ = writeln!(s, "SCALARS {name} double 1");
        let _ = writeln!(s, "LOOKUP_TABLE default");
        for v in field.values() {
            let _ = writeln!(s, "{}", format_g17(*v));
        }
    }
    Ok(s)
}

struct SnapshotWriter {
    dir: PathBuf,
    formats: Vec<OutputFormat>,
    index: usize,
    written: Vec<(f64, String)>,
    last_time: Option<f64>,
}

impl SnapshotWriter {
    fn new(dir: &Path, formats: &[OutputFormat]) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(SnapshotWriter {
            dir: dir.to_path_buf(),
            formats: formats.to_vec(),
            index: 0,
            written: Vec::new(),
            last_time: None,
        })
    }

    fn write(&mut self, setup: &CaseSetup, state: &State) -> Result<()> {
        // A scheduled snapshot time coinciding with the final time would
        // otherwise be written twice.
        if self.last_time == Some(state.t) {
            return Ok(());
        }
        self.last_time = Some(state.t);
        let stem = format!("snap_{:04}", self.index);
        for format in &self.formats {
            match format {
                OutputFormat::Csv => {
                    let name = format!("{stem}.csv");
                    fs::write(self.dir.join(&name), snapshot_csv_string(setup, state)?)?;
                    self.written.push((state.t, name));
                }
                OutputFormat::Vtk => {
                    let name = format!("{stem}.vtk");
                    fs::write(self.dir.join(&name), snapshot_vtk_string(setup, state)?)?;
                    self.written.push((state.t, name));
                }
            }
        }
        self.index += 1;
        Ok(())
    }
}

fn write_manifest(
    path: &Path,
    echo: &RunConfig,
    out: &RunOutput,
    snapshots: &[(f64, String)],
) -> Result<()> {
    #[derive(Serialize)]
    struct SnapshotEntry {
        t: f64,
        file: String,
    }
    #[derive(Serialize)]
    struct Meta {
        version: String,
        wall_seconds: f64,
        steps: usize,
        snapshots: Vec<SnapshotEntry>,
    }
    #[derive(Serialize)]
    struct Manifest<'a> {
        #[serde(flatten)]
        config: &'a RunConfig,
        meta: Meta,
    }
    let manifest = Manifest {
        config: echo,
        meta: Meta {
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_seconds: out.wall_seconds,
            steps: out.steps,
            snapshots: snapshots
                .iter()
                .map(|(t, file)| SnapshotEntry {
                    t: *t,
                    file: file.clone(),
                })
                .collect(),
        },
    };
    let text = toml::to_string_pretty(&manifest)
        .map_err(|e| Error::Config(format!("manifest serialization: {e}")))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn sweep_csv_string(rows: &[SweepRow]) -> String {
    let with_eoc = rows.len() > 1;
    let mut s = if with_eoc {
        String::from("k,err_h,eoc_h,err_u,eoc_u,err_v,eoc_v\n")
    } else {
        String::from("k,err_h,err_u,err_v\n")
    };
    for row in rows {
        if with_eoc {
            let fmt_eoc = |o: Option<f64>| o.map(|v| format!("{v:.4}")).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                row.k,
                format_g17(row.err[0]),
                fmt_eoc(row.eoc[0]),
                format_g17(row.err[1]),
                fmt_eoc(row.eoc[1]),
                format_g17(row.err[2]),
                fmt_eoc(row.eoc[2]),
            );
        } else {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                row.k,
                format_g17(row.err[0]),
                format_g17(row.err[1]),
                format_g17(row.err[2]),
            );
        }
    }
    s
}

pub fn ladder_csv_string(entries: &[LadderEntry]) -> String {
    let mut s = String::from("k,component,E1,E2,E3,E4\n");
    for e in entries {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            e.k,
            e.component.label(),
            format_g17(e.e1),
            format_g17(e.e2),
            format_g17(e.e3),
            format_g17(e.e4),
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::testutil::Rng;

    #[test]
    fn g17_round_trips_random_doubles() {
        let mut rng = Rng::new(1);
        for _ in 0..2000 {
            let bits = rng.next_u64();
            let x = f64::from_bits(bits);
            if !x.is_finite() {
                continue;
            }
            let s = format_g17(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{x:e} formatted as {s}");
        }
    }

    #[test]
    fn g17_chooses_fixed_or_scientific_like_printf() {
        // Reference strings produced by printf("%.17g", x).
        assert_eq!(format_g17(0.0), "0");
        assert_eq!(format_g17(1.0), "1");
        assert_eq!(format_g17(-2.5), "-2.5");
        assert_eq!(format_g17(1.0e-5), "1.0000000000000001e-05");
        assert_eq!(format_g17(12345.0), "12345");
        assert_eq!(format_g17(1.0e17), "1e+17");
        assert_eq!(format_g17(0.0001), "0.0001");
        assert_eq!(format_g17(0.05), "0.050000000000000003");
        assert_eq!(format_g17(123456789.123), "123456789.123");
    }

    #[test]
    fn config_merge_prefers_overlay() {
        let base = RunConfig {
            case: Some("wb_test4".into()),
            nx: Some(100),
            t_final: Some(1.0),
            ..Default::default()
        };
        let overlay = RunConfig {
            nx: Some(50),
            ..Default::default()
        };
        let merged = overlay.merged_over(base);
        assert_eq!(merged.nx, Some(50));
        assert_eq!(merged.case.as_deref(), Some("wb_test4"));
        assert_eq!(merged.t_final, Some(1.0));
    }

    #[test]
    fn resolve_rejects_bad_schedules_and_formats() {
        let cfg = RunConfig {
            case: Some("wb_test4".into()),
            nx: Some(64),
            t_final: Some(0.1),
            snapshot_times: Some(vec![0.5]),
            ..Default::default()
        };
        assert!(matches!(cfg.resolve(), Err(Error::Config(_))));

        let cfg = RunConfig {
            case: Some("wb_test4".into()),
            formats: Some(vec!["png".into()]),
            ..Default::default()
        };
        assert!(matches!(cfg.resolve(), Err(Error::Config(_))));

        let cfg = RunConfig {
            case: Some("nope".into()),
            ..Default::default()
        };
        assert!(matches!(cfg.resolve(), Err(Error::UnknownCase(_))));
    }

    #[test]
    fn zero_final_time_yields_initial_snapshot_only() {
        let dir = test_dir("t0");
        let cfg = RunConfig {
            case: Some("wb_test4".into()),
            nx: Some(64),
            t_final: Some(0.0),
            out_dir: Some(dir.to_string_lossy().into_owned()),
            ..Default::default()
        };
        let out = run_from_config(cfg).unwrap();
        assert_eq!(out.steps, 0);
        assert_eq!(out.ledger.rows.len(), 1);
        assert!(dir.join("snap_0000.csv").exists());
        assert!(!dir.join("snap_0001.csv").exists());
        assert!(dir.join("ledger.csv").exists());
        assert!(dir.join("manifest.toml").exists());
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn runs_are_bit_deterministic() {
        let cfg = RunConfig {
            case: Some("wb_test4".into()),
            nx: Some(64),
            t_final: Some(0.05),
            ..Default::default()
        };
        let a = run_from_config(cfg.clone()).unwrap();
        let b = run_from_config(cfg).unwrap();
        assert_eq!(ledger_csv_string(&a.ledger), ledger_csv_string(&b.ledger));
        assert_eq!(
            snapshot_csv_string(&a.setup, &a.final_state).unwrap(),
            snapshot_csv_string(&b.setup, &b.final_state).unwrap()
        );
    }

    #[test]
    fn manifest_round_trip_reproduces_the_run() {
        let dir = test_dir("manifest");
        let cfg = RunConfig {
            case: Some("constant_rotation".into()),
            nx: Some(48),
            t_final: Some(0.02),
            out_dir: Some(dir.to_string_lossy().into_owned()),
            ..Default::default()
        };
        let first = run_from_config(cfg).unwrap();
        let manifest = RunConfig::from_file(&dir.join("manifest.toml")).unwrap();
        // Strip the output directory so the replay writes nothing.
        let replay_cfg = RunConfig {
            out_dir: None,
            ..manifest
        };
        let replay = run_from_config(replay_cfg).unwrap();
        assert_eq!(
            ledger_csv_string(&first.ledger),
            ledger_csv_string(&replay.ledger)
        );
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn snapshot_csv_round_trips_state_bit_exactly() {
        let cfg = RunConfig {
            case: Some("geostrophic_adjustment".into()),
            nx: Some(24),
            ny: Some(24),
            t_final: Some(0.2),
            ..Default::default()
        };
        let out = run_from_config(cfg).unwrap();
        let csv = snapshot_csv_string(&out.setup, &out.final_state).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("x,y,h,u,v,b,phi,pv"));
        let grid = &out.setup.grid;
        for (row, line) in lines.enumerate() {
            let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
            let (i, j) = (row % grid.nx, row / grid.nx);
            assert_eq!(cols[2].to_bits(), out.final_state.h.get(i, j).to_bits());
            assert_eq!(cols[3].to_bits(), out.final_state.u.get(i, j).to_bits());
            assert_eq!(cols[4].to_bits(), out.final_state.v.get(i, j).to_bits());
        }
    }

    #[test]
    fn sweep_single_resolution_has_no_eoc_column() {
        let cfg = RunConfig {
            case: Some("eoc_convergence".into()),
            t_final: Some(0.002),
            ..Default::default()
        };
        let rows = execute_sweep(&cfg, &[16], 32).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].eoc.iter().all(|e| e.is_none()));
        let csv = sweep_csv_string(&rows);
        assert!(csv.starts_with("k,err_h,err_u,err_v\n"));
    }

    #[test]
    fn sweep_restricts_strips_along_x_only() {
        // Steady strip case: the per-resolution solution equals its own
        // initial data, so the error against the restricted reference is
        // pure projection mismatch, which shrinks at second order.
        let cfg = RunConfig {
            case: Some("wb_test4".into()),
            t_final: Some(0.05),
            ..Default::default()
        };
        let rows = execute_sweep(&cfg, &[125, 250], 500).unwrap();
        assert!(rows[0].err[0] < 1e-12, "h is exactly constant");
        assert!(rows[1].err[2] < rows[0].err[2]);
        let eoc_v = rows[1].eoc[2].unwrap();
        assert!(
            eoc_v > 1.5,
            "projection mismatch must beat first order, got {eoc_v}"
        );
    }

    #[test]
    fn ladder_validation_rejects_bad_lists() {
        let cfg = RunConfig {
            case: Some("vortex_pair".into()),
            ..Default::default()
        };
        // Too few resolutions.
        assert!(matches!(
            execute_kconv(&cfg, &[32, 64], 128),
            Err(Error::Config(_))
        ));
        // Duplicates.
        assert!(matches!(
            execute_kconv(&cfg, &[32, 32, 64], 128),
            Err(Error::Config(_))
        ));
        // Non power-of-two step.
        assert!(matches!(
            execute_kconv(&cfg, &[32, 96, 192], 384),
            Err(Error::Config(_))
        ));
        // 1D cases have no 2D refinement ladder.
        let cfg1d = RunConfig {
            case: Some("rossby_adjustment".into()),
            ..Default::default()
        };
        assert!(matches!(
            execute_kconv(&cfg1d, &[32, 64, 128], 256),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn out_root_env_reroots_relative_dirs() {
        let root = test_dir("root");
        std::env::set_var(OUT_ROOT_ENV, &root);
        let cfg = RunConfig {
            case: Some("wb_test4".into()),
            nx: Some(64),
            t_final: Some(0.0),
            out_dir: Some("inner".into()),
            ..Default::default()
        };
        let resolved = cfg.resolve().unwrap();
        assert_eq!(resolved.out_dir.as_deref(), Some(root.join("inner").as_path()));
        std::env::remove_var(OUT_ROOT_ENV);
        fs::remove_dir_all(&root).ok();
    }

    fn test_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!(
            "rsw_test_{tag}_{}",
            std::process::id()
        ));
        fs::remove_dir_all(&dir).ok();
        dir
    }
}
