//! Assembly storage and iterative solution of the sparse elliptic system for
//! the potential.
//!
//! The system is strictly diagonally dominant under the scheme's time-step
//! restriction, so a stationary red-black Gauss-Seidel iteration converges;
//! the fixed sweep order keeps solves bit-reproducible.

use crate::error::{Error, Result};
use crate::grid::CellField;

/// Sparse linear system over the cells of an nx x ny grid.
///
/// Rows follow the j-major cell ordering. The diagonal is stored separately
/// from the off-diagonal entries (CSR-like) because the Gauss-Seidel update
/// divides by it on every visit.
#[derive(Debug, Clone)]
pub struct StencilSystem {
    pub nx: usize,
    pub ny: usize,
    diag: Vec<f64>,
    off_cols: Vec<u32>,
    off_vals: Vec<f64>,
    row_ptr: Vec<u32>,
    pub rhs: Vec<f64>,
}

/// Accumulates stencil coefficients row by row before freezing them into a
/// [`StencilSystem`]. Duplicate (row, col) contributions are merged.
pub struct SystemBuilder {
    nx: usize,
    ny: usize,
    rows: Vec<Vec<(u32, f64)>>,
    rhs: Vec<f64>,
}

impl SystemBuilder {
    pub fn new(nx: usize, ny: usize) -> Self {
        SystemBuilder {
            nx,
            ny,
            rows: vec![Vec::with_capacity(9); nx * ny],
            rhs: vec![0.0; nx * ny],
        }
    }

    /// Add `coeff * x[col]` to row `row` of the operator.
    pub fn add(&mut self, row: usize, col: usize, coeff: f64) {
        let entries = &mut self.rows[row];
        for e in entries.iter_mut() {
            if e.0 as usize == col {
                e.1 += coeff;
                return;
            }
        }
        entries.push((col as u32, coeff));
    }

    /// Add a constant to the right-hand side of row `row`.
    pub fn add_rhs(&mut self, row: usize, value: f64) {
        self.rhs[row] += value;
    }

    pub fn finish(self) -> StencilSystem {
        let n = self.nx * self.ny;
        let mut diag = vec![0.0; n];
        let mut off_cols = Vec::with_capacity(n * 8);
        let mut off_vals = Vec::with_capacity(n * 8);
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0u32);
        for (row, mut entries) in self.rows.into_iter().enumerate() {
            entries.sort_by_key(|e| e.0);
            for (col, val) in entries {
                if col as usize == row {
                    diag[row] += val;
                } else {
                    off_cols.push(col);
                    off_vals.push(val);
                }
            }
            row_ptr.push(off_cols.len() as u32);
        }
        StencilSystem {
            nx: self.nx,
            ny: self.ny,
            diag,
            off_cols,
            off_vals,
            row_ptr,
            rhs: self.rhs,
        }
    }
}

/// Convergence record of one solve.
#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    /// Full red-black sweeps performed (0 when the initial guess already
    /// meets the tolerance).
    pub iterations: usize,
    /// Final residual relative to the max-norm of the right-hand side.
    pub relative_residual: f64,
}

impl StencilSystem {
    pub fn n(&self) -> usize {
        self.nx * self.ny
    }

    /// min over rows of (|diag| - sum |off-diagonal|) / |diag|; positive iff
    /// the system is strictly diagonally dominant.
    pub fn dominance_margin(&self) -> f64 {
        let mut margin = f64::INFINITY;
        for row in 0..self.n() {
            let d = self.diag[row].abs();
            let lo = self.row_ptr[row] as usize;
            let hi = self.row_ptr[row + 1] as usize;
            let off: f64 = self.off_vals[lo..hi].iter().map(|v| v.abs()).sum();
            margin = margin.min((d - off) / d);
        }
        margin
    }

    /// Matrix-vector product A x.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n());
        let mut out = vec![0.0; self.n()];
        for row in 0..self.n() {
            let lo = self.row_ptr[row] as usize;
            let hi = self.row_ptr[row + 1] as usize;
            let mut acc = self.diag[row] * x[row];
            for k in lo..hi {
                acc += self.off_vals[k] * x[self.off_cols[k] as usize];
            }
            out[row] = acc;
        }
        out
    }

    /// Max-norm residual ||A x - rhs||_inf.
    pub fn residual_inf(&self, x: &[f64]) -> f64 {
        let ax = self.apply(x);
        ax.iter()
            .zip(&self.rhs)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Solve A x = rhs by red-black ordered Gauss-Seidel sweeps, starting
    /// from `initial`, until ||A x - rhs||_inf <= tol * ||rhs||_inf.
    ///
    /// Requires strict diagonal dominance; the iteration then contracts and
    /// the solution is unique.
    pub fn solve(
        &self,
        initial: &CellField,
        tol: f64,
        max_iter: usize,
    ) -> Result<(CellField, SolveStats)> {
        let margin = self.dominance_margin();
        if !(margin > 0.0) {
            return Err(Error::DominanceViolation { margin });
        }
        let rhs_norm = self.rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let threshold = if rhs_norm > 0.0 { tol * rhs_norm } else { tol };

        let mut x: Vec<f64> = initial.values().to_vec();
        debug_assert_eq!(x.len(), self.n());

        let mut residual = self.residual_inf(&x);
        let mut iterations = 0usize;
        while residual > threshold {
            if iterations >= max_iter {
                return Err(Error::NonConvergence {
                    iterations,
                    residual: residual / rhs_norm.max(f64::MIN_POSITIVE),
                });
            }
            self.sweep_color(&mut x, 0);
            self.sweep_color(&mut x, 1);
            iterations += 1;
            residual = self.residual_inf(&x);
        }
        let stats = SolveStats {
            iterations,
            relative_residual: residual / rhs_norm.max(f64::MIN_POSITIVE),
        };
        Ok((
            CellField::from_shape_values((self.nx, self.ny), x),
            stats,
        ))
    }

    fn sweep_color(&self, x: &mut [f64], color: usize) {
        for row in 0..self.n() {
            let i = row % self.nx;
            let j = row / self.nx;
            if (i + j) % 2 != color {
                continue;
            }
            let lo = self.row_ptr[row] as usize;
            let hi = self.row_ptr[row + 1] as usize;
            let mut acc = self.rhs[row];
            for k in lo..hi {
                acc -= self.off_vals[k] * x[self.off_cols[k] as usize];
            }
            x[row] = acc / self.diag[row];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::testutil::Rng;

    fn identity(n: usize, rhs: Vec<f64>) -> StencilSystem {
        let mut b = SystemBuilder::new(n, 1);
        for row in 0..n {
            b.add(row, row, 1.0);
            b.add_rhs(row, rhs[row]);
        }
        b.finish()
    }

    #[test]
    fn identity_system_has_margin_one_and_solves_in_zero_or_one_sweeps() {
        let sys = identity(6, vec![1.0, -2.0, 3.0, 0.5, 0.0, 4.0]);
        assert_eq!(sys.dominance_margin(), 1.0);
        let guess = CellField::from_shape_values((6, 1), vec![0.0; 6]);
        let (x, stats) = sys.solve(&guess, 1e-12, 10).unwrap();
        assert!(stats.iterations <= 1);
        for (a, b) in x.values().iter().zip(&sys.rhs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pure_laplacian_margin_is_zero() {
        // Compact periodic 5-point Laplacian rows: diag 4c, four neighbours -c.
        let (nx, ny) = (4, 4);
        let c = 0.7;
        let mut b = SystemBuilder::new(nx, ny);
        for j in 0..ny {
            for i in 0..nx {
                let row = j * nx + i;
                b.add(row, row, 4.0 * c);
                b.add(row, j * nx + (i + 1) % nx, -c);
                b.add(row, j * nx + (i + nx - 1) % nx, -c);
                b.add(row, ((j + 1) % ny) * nx + i, -c);
                b.add(row, ((j + ny - 1) % ny) * nx + i, -c);
            }
        }
        let sys = b.finish();
        assert!(sys.dominance_margin().abs() < 1e-15);
        let guess = CellField::from_shape_values((nx, ny), vec![0.0; nx * ny]);
        assert!(matches!(
            sys.solve(&guess, 1e-12, 10),
            Err(Error::DominanceViolation { .. })
        ));
    }

    #[test]
    fn row_sum_one_system_maps_constant_rhs_to_constant_solution() {
        // 1D periodic 3-cell system {diag 2, neighbours -0.5}: row sums are 1,
        // so the constant vector solves it exactly.
        let n = 3;
        let mut b = SystemBuilder::new(n, 1);
        for i in 0..n {
            b.add(i, i, 2.0);
            b.add(i, (i + 1) % n, -0.5);
            b.add(i, (i + n - 1) % n, -0.5);
            b.add_rhs(i, 1.0);
        }
        let sys = b.finish();
        let guess = CellField::from_shape_values((n, 1), vec![0.0; n]);
        let (x, _) = sys.solve(&guess, 1e-13, 100).unwrap();
        for &v in x.values() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    fn random_dominant_system(nx: usize, ny: usize, rng: &mut Rng) -> StencilSystem {
        // Identity plus a small advection/diffusion-like perturbation, the
        // regime the scheme actually produces.
        let mut b = SystemBuilder::new(nx, ny);
        for j in 0..ny {
            for i in 0..nx {
                let row = j * nx + i;
                let neigh = [
                    j * nx + (i + 1) % nx,
                    j * nx + (i + nx - 1) % nx,
                    ((j + 1) % ny) * nx + i,
                    ((j + ny - 1) % ny) * nx + i,
                ];
                let mut off_sum = 0.0;
                for col in neigh {
                    let w = 0.2 * rng.f64();
                    off_sum += w.abs();
                    b.add(row, col, w);
                }
                b.add(row, row, 1.0 + off_sum * rng.range(0.05, 0.8));
                b.add_rhs(row, rng.range(-3.0, 3.0));
            }
        }
        b.finish()
    }

    #[test]
    fn random_dominant_systems_meet_tolerance_a_posteriori() {
        let mut rng = Rng::new(1234);
        for _ in 0..10 {
            let sys = random_dominant_system(8, 7, &mut rng);
            assert!(sys.dominance_margin() > 0.0);
            let guess = CellField::from_shape_values((8, 7), vec![0.0; 56]);
            let (x, stats) = sys.solve(&guess, 1e-12, 2000).unwrap();
            let rhs_norm = sys.rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(sys.residual_inf(x.values()) <= 1e-12 * rhs_norm);
            assert!(stats.relative_residual <= 1e-12);
        }
    }

    #[test]
    fn solution_is_unique_across_initial_guesses() {
        let mut rng = Rng::new(99);
        let sys = random_dominant_system(6, 6, &mut rng);
        let tol = 1e-12;
        let zero = CellField::from_shape_values((6, 6), vec![0.0; 36]);
        let mut other_vals = vec![0.0; 36];
        for v in other_vals.iter_mut() {
            *v = rng.range(-10.0, 10.0);
        }
        let other = CellField::from_shape_values((6, 6), other_vals);
        let (x1, _) = sys.solve(&zero, tol, 2000).unwrap();
        let (x2, _) = sys.solve(&other, tol, 2000).unwrap();
        let xnorm = x1.max_abs();
        for (a, b) in x1.values().iter().zip(x2.values()) {
            assert!((a - b).abs() <= 10.0 * tol * xnorm);
        }
    }

    #[test]
    fn residual_is_monotone_nonincreasing_across_sweeps() {
        let mut rng = Rng::new(7);
        for _ in 0..5 {
            let sys = random_dominant_system(7, 5, &mut rng);
            let mut x = vec![0.0; sys.n()];
            let mut prev = sys.residual_inf(&x);
            for _ in 0..30 {
                sys.sweep_color(&mut x, 0);
                sys.sweep_color(&mut x, 1);
                let res = sys.residual_inf(&x);
                assert!(
                    res <= prev * (1.0 + 1e-12) + 1e-300,
                    "residual rose {prev:.3e} -> {res:.3e}"
                );
                prev = res;
            }
        }
    }

    #[test]
    fn exhausted_iteration_budget_reports_nonconvergence() {
        let mut rng = Rng::new(55);
        let sys = random_dominant_system(8, 8, &mut rng);
        let guess = CellField::from_shape_values((8, 8), vec![0.0; 64]);
        match sys.solve(&guess, 1e-14, 1) {
            Err(Error::NonConvergence { residual, .. }) => assert!(residual > 0.0),
            other => panic!("expected NonConvergence, got {other:?}"),
        }
    }
}
