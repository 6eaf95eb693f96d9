//! Statistical refinement diagnostics: Cesaro means, first variance,
//! pointwise 1-Wasserstein distances between empirical distributions, and
//! the E1-E4 error ladder over a sequence of mesh refinements.
//!
//! The ladder treats the solutions at resolutions up to k as k samples of an
//! empirical measure at each point of a common comparison grid. Strong
//! convergence of the Cesaro averages (E2), of the first variance (E3) and
//! of the pointwise Wasserstein field (E4) is the observable signature of
//! convergence in distribution, while the plain solution error E1 may stall.

use crate::diagnostics::{l1_error, restrict};
use crate::error::{Error, Result};
use crate::grid::CellField;

/// Conserved components tracked by the ladder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    H,
    MomentumX,
    MomentumY,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::H, Component::MomentumX, Component::MomentumY];

    pub fn label(&self) -> &'static str {
        match self {
            Component::H => "h",
            Component::MomentumX => "mx",
            Component::MomentumY => "my",
        }
    }
}

/// Conservative-variable snapshot (h, h u, h v) at a common physical time,
/// tagged with its native resolution.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub resolution: usize,
    pub h: CellField,
    pub mx: CellField,
    pub my: CellField,
}

impl Snapshot {
    fn component(&self, c: Component) -> &CellField {
        match c {
            Component::H => &self.h,
            Component::MomentumX => &self.mx,
            Component::MomentumY => &self.my,
        }
    }

    /// Block-restrict to a coarser resolution (must divide evenly).
    pub fn restrict_to(&self, resolution: usize) -> Result<Snapshot> {
        if self.resolution == resolution {
            return Ok(self.clone());
        }
        if resolution == 0 || self.resolution % resolution != 0 {
            return Err(Error::IndivisibleDims {
                nx: self.h.shape().0,
                ny: self.h.shape().1,
                factor: resolution.max(1),
            });
        }
        let factor = self.resolution / resolution;
        Ok(Snapshot {
            resolution,
            h: restrict(&self.h, factor)?,
            mx: restrict(&self.mx, factor)?,
            my: restrict(&self.my, factor)?,
        })
    }
}

/// An ordered collection of snapshots at one physical time, comparable on a
/// common (coarsest) grid.
#[derive(Debug, Clone)]
pub struct SolutionEnsemble {
    members: Vec<Snapshot>,
    comparison_resolution: usize,
}

impl SolutionEnsemble {
    /// Restrict all members to the comparison resolution up front.
    pub fn new(members: Vec<Snapshot>, comparison_resolution: usize) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        let members = members
            .into_iter()
            .map(|s| s.restrict_to(comparison_resolution))
            .collect::<Result<Vec<_>>>()?;
        Ok(SolutionEnsemble {
            members,
            comparison_resolution,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[Snapshot] {
        &self.members
    }

    pub fn last(&self) -> &Snapshot {
        self.members.last().expect("non-empty by construction")
    }

    fn shape(&self) -> (usize, usize) {
        self.members[0].h.shape()
    }

    /// Componentwise arithmetic mean over the members.
    pub fn cesaro_mean(&self) -> Result<Snapshot> {
        if self.members.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        let inv = 1.0 / self.members.len() as f64;
        let (nx, ny) = self.shape();
        let mean = |c: Component| -> CellField {
            let mut acc = vec![0.0; nx * ny];
            for m in &self.members {
                for (a, v) in acc.iter_mut().zip(m.component(c).values()) {
                    *a += v;
                }
            }
            for a in acc.iter_mut() {
                *a *= inv;
            }
            CellField::from_shape_values((nx, ny), acc)
        };
        Ok(Snapshot {
            resolution: self.comparison_resolution,
            h: mean(Component::H),
            mx: mean(Component::MomentumX),
            my: mean(Component::MomentumY),
        })
    }

    /// Pointwise mean absolute deviation from the Cesaro mean, componentwise.
    pub fn first_variance(&self) -> Result<Snapshot> {
        let mean = self.cesaro_mean()?;
        let inv = 1.0 / self.members.len() as f64;
        let (nx, ny) = self.shape();
        let dev = |c: Component| -> CellField {
            let mu = mean.component(c).values();
            let mut acc = vec![0.0; nx * ny];
            for m in &self.members {
                for ((a, v), mv) in acc.iter_mut().zip(m.component(c).values()).zip(mu) {
                    *a += (v - mv).abs();
                }
            }
            for a in acc.iter_mut() {
                *a *= inv;
            }
            CellField::from_shape_values((nx, ny), acc)
        };
        Ok(Snapshot {
            resolution: self.comparison_resolution,
            h: dev(Component::H),
            mx: dev(Component::MomentumX),
            my: dev(Component::MomentumY),
        })
    }
}

/// 1-Wasserstein distance between the empirical measures of two sample
/// lists.
///
/// With equal counts this is the mean absolute difference of the sorted
/// samples; with unequal counts the quantile functions are integrated
/// exactly over their merged piecewise-constant support.
pub fn wasserstein1_point(samples_a: &[f64], samples_b: &[f64]) -> Result<f64> {
    if samples_a.is_empty() || samples_b.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut a = samples_a.to_vec();
    let mut b = samples_b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);

    if a.len() == b.len() {
        let n = a.len() as f64;
        return Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / n);
    }

    // Integrate |F_a^{-1}(q) - F_b^{-1}(q)| dq over the merged quantile grid.
    let na = a.len() as f64;
    let nb = b.len() as f64;
    let mut dist = 0.0;
    let mut q_prev = 0.0;
    let (mut ia, mut ib) = (0usize, 0usize);
    while ia < a.len() && ib < b.len() {
        let qa = (ia + 1) as f64 / na;
        let qb = (ib + 1) as f64 / nb;
        let q = qa.min(qb);
        dist += (q - q_prev) * (a[ia] - b[ib]).abs();
        q_prev = q;
        if qa <= q + 1e-15 && qa <= qb {
            ia += 1;
        }
        if qb <= q + 1e-15 && qb <= qa {
            ib += 1;
        }
    }
    Ok(dist)
}

/// One row of the refinement error table.
#[derive(Debug, Clone, Copy)]
pub struct LadderEntry {
    pub k: usize,
    pub component: Component,
    /// L1 error of the solution at resolution k against the reference.
    pub e1: f64,
    /// L1 error of the Cesaro means.
    pub e2: f64,
    /// L1 error of the first variances.
    pub e3: f64,
    /// L1 norm of the pointwise Wasserstein distance between the empirical
    /// measures of the run ensemble and of the reference ensemble.
    pub e4: f64,
}

/// Compute the E1-E4 ladder for snapshots at ascending resolutions against a
/// reference ensemble (typically a single finest run). The ensemble at
/// resolution k consists of all runs at resolutions <= k; everything is
/// compared on the coarsest grid.
pub fn error_ladder(snapshots: &[Snapshot], reference: &[Snapshot]) -> Result<Vec<LadderEntry>> {
    if snapshots.is_empty() || reference.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let comparison = snapshots
        .iter()
        .chain(reference)
        .map(|s| s.resolution)
        .min()
        .expect("non-empty");

    let ref_ensemble = SolutionEnsemble::new(reference.to_vec(), comparison)?;
    let ref_last = ref_ensemble.last().clone();
    let ref_mean = ref_ensemble.cesaro_mean()?;
    let ref_var = ref_ensemble.first_variance()?;

    let (nx, ny) = ref_last.h.shape();
    let area = 1.0 / (nx * ny) as f64; // normalized cell weight, see below

    // L1 norms here use the normalized measure (mean |.|): the comparison
    // grid's physical area factors out of every monotonicity statement and
    // keeps entries comparable across domains.
    let mut out = Vec::new();
    for upto in 0..snapshots.len() {
        let k = snapshots[upto].resolution;
        let ens = SolutionEnsemble::new(snapshots[..=upto].to_vec(), comparison)?;
        let mean = ens.cesaro_mean()?;
        let var = ens.first_variance()?;
        let last = ens.last();

        for c in Component::ALL {
            let e1 = l1_error(last.component(c), ref_last.component(c), area)?;
            let e2 = l1_error(mean.component(c), ref_mean.component(c), area)?;
            let e3 = l1_error(var.component(c), ref_var.component(c), area)?;

            let mut w1_sum = 0.0;
            let mut samples_run = Vec::with_capacity(ens.len());
            let mut samples_ref = Vec::with_capacity(ref_ensemble.len());
            for cell in 0..nx * ny {
                samples_run.clear();
                samples_ref.clear();
                for m in ens.members() {
                    samples_run.push(m.component(c).values()[cell]);
                }
                for m in ref_ensemble.members() {
                    samples_ref.push(m.component(c).values()[cell]);
                }
                w1_sum += wasserstein1_point(&samples_run, &samples_ref)?;
            }
            let e4 = w1_sum * area;

            out.push(LadderEntry {
                k,
                component: c,
                e1,
                e2,
                e3,
                e4,
            });
        }
    }
    Ok(out)
}
