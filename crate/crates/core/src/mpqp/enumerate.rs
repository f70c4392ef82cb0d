//! Critical-region enumeration by exhaustive active-set search.
//!
//! For each candidate active set `A` with linearly independent rows `G_A`
//! the KKT system is solved parametrically, giving `z(x)` and `λ_A(x)` as
//! affine functions of the state. The region is then
//! `{x ∈ X : G_I z(x) ≤ E_I x + h_I, λ_A(x) ≥ 0}`.

use subsets::Combinations;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::condense::CondensedQp;
use super::controller::{CriticalRegion, PwaController};
use super::model::Polyhedron;
use super::{SynthesisError, Tolerances};
use crate::lp::{self, LpOutcome};

#[derive(Debug, Clone, PartialEq)]
pub struct EnumerationReport {
    pub candidates: usize,
    pub degenerate: usize,
    pub empty: usize,
    pub merged: usize,
}

/// Affine solution of the KKT system for a fixed active set.
struct ParametricSolution {
    z_gain: DMatrix<f64>,
    z_offset: DVector<f64>,
    lambda_gain: DMatrix<f64>,
    lambda_offset: DVector<f64>,
}

fn parametric_kkt(qp: &CondensedQp, active: &[usize]) -> Option<ParametricSolution> {
    let nz = qp.n_vars();
    let n = qp.n;
    let k = active.len();
    let mut kkt = DMatrix::zeros(nz + k, nz + k);
    kkt.view_mut((0, 0), (nz, nz)).copy_from(&qp.h);
    for (r, &i) in active.iter().enumerate() {
        for c in 0..nz {
            kkt[(nz + r, c)] = qp.g[(i, c)];
            kkt[(c, nz + r)] = qp.g[(i, c)];
        }
    }
    // [H Gᵀ; G 0][z; λ] = [−F; E_A] x + [0; h_A]
    let mut rhs = DMatrix::zeros(nz + k, n + 1);
    rhs.view_mut((0, 0), (nz, n)).copy_from(&(-&qp.f));
    for (r, &i) in active.iter().enumerate() {
        for c in 0..n {
            rhs[(nz + r, c)] = qp.e[(i, c)];
        }
        rhs[(nz + r, n)] = qp.w[i];
    }
    let sol = kkt.lu().solve(&rhs)?;
    Some(ParametricSolution {
        z_gain: sol.view((0, 0), (nz, n)).into_owned(),
        z_offset: sol.view((0, n), (nz, 1)).column(0).into_owned(),
        lambda_gain: sol.view((nz, 0), (k, n)).into_owned(),
        lambda_offset: sol.view((nz, n), (k, 1)).column(0).into_owned(),
    })
}

/// Normalizes rows, drops trivially satisfied zero rows, removes duplicates.
/// Returns `None` if a zero row is violated.
fn normalize(rows: Vec<(DVector<f64>, f64)>, tol: f64) -> Option<Vec<(DVector<f64>, f64)>> {
    let mut out: Vec<(DVector<f64>, f64)> = Vec::with_capacity(rows.len());
    for (a, b) in rows {
        let norm = a.norm();
        if norm <= 1e-12 {
            if b < -tol {
                return None;
            }
            continue;
        }
        let (a, b) = (a / norm, b / norm);
        let dup = out.iter_mut().find(|(a2, _)| (a2 - &a).amax() <= 1e-12);
        match dup {
            Some(existing) => existing.1 = existing.1.min(b),
            None => out.push((a, b)),
        }
    }
    Some(out)
}

fn to_poly(rows: &[(DVector<f64>, f64)], dim: usize) -> Polyhedron {
    let a = DMatrix::from_fn(rows.len(), dim, |i, j| rows[i].0[j]);
    let b = DVector::from_fn(rows.len(), |i, _| rows[i].1);
    Polyhedron::new(a, b)
}

/// Drops rows implied by the remaining ones.
fn remove_redundant(rows: Vec<(DVector<f64>, f64)>, dim: usize, tol: f64) -> Vec<(DVector<f64>, f64)> {
    let mut keep = rows;
    let mut i = 0;
    while i < keep.len() {
        let others: Vec<(DVector<f64>, f64)> =
            keep.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, r)| r.clone()).collect();
        let redundant = if others.is_empty() {
            false
        } else {
            let poly = to_poly(&others, dim);
            match lp::maximize(&keep[i].0, &poly.a, &poly.b) {
                LpOutcome::Optimal { value, .. } => value <= keep[i].1 + tol,
                _ => false,
            }
        };
        if redundant {
            keep.remove(i);
        } else {
            i += 1;
        }
    }
    keep
}

enum Candidate {
    Degenerate,
    Empty,
    Region(CriticalRegion),
}

fn build_region(qp: &CondensedQp, active: &[usize], tol: &Tolerances) -> Candidate {
    let n = qp.n;
    if !active.is_empty() {
        let g_a = DMatrix::from_fn(active.len(), qp.n_vars(), |r, c| qp.g[(active[r], c)]);
        if g_a.rank(tol.rank) < active.len() {
            return Candidate::Degenerate;
        }
    }
    let Some(sol) = parametric_kkt(qp, active) else {
        return Candidate::Degenerate;
    };

    let mut rows: Vec<(DVector<f64>, f64)> = Vec::with_capacity(qp.n_constraints() + qp.param_set.rows());
    for i in 0..qp.n_constraints() {
        if active.binary_search(&i).is_ok() {
            continue;
        }
        // G_i (Zx x + z0) ≤ E_i x + h_i
        let gi = qp.g.row(i);
        let a = (gi * &sol.z_gain - qp.e.row(i)).transpose();
        let b = qp.w[i] - (gi * &sol.z_offset)[0];
        rows.push((a, b));
    }
    for r in 0..active.len() {
        // −λ_r(x) ≤ 0
        let a = -sol.lambda_gain.row(r).transpose();
        rows.push((a, sol.lambda_offset[r]));
    }
    for r in 0..qp.param_set.rows() {
        rows.push((qp.param_set.a.row(r).transpose(), qp.param_set.b[r]));
    }

    let Some(rows) = normalize(rows, tol.feasibility) else {
        return Candidate::Empty;
    };
    let (_, radius) = to_poly(&rows, n).chebyshev_center();
    if !(radius > tol.chebyshev_radius) {
        return Candidate::Empty;
    }
    let rows = remove_redundant(rows, n, tol.feasibility);

    let gain = sol.z_gain.rows(0, qp.m).into_owned();
    let offset = sol.z_offset.rows(0, qp.m).into_owned();
    Candidate::Region(CriticalRegion { poly: to_poly(&rows, n), gain, offset, active_set: active.to_vec() })
}

fn same_region(a: &CriticalRegion, b: &CriticalRegion, tol: f64) -> bool {
    if (&a.gain - &b.gain).amax() > tol || (&a.offset - &b.offset).amax() > tol {
        return false;
    }
    if a.poly.rows() != b.poly.rows() {
        return false;
    }
    (0..a.poly.rows()).all(|i| {
        (0..b.poly.rows()).any(|j| {
            (a.poly.a.row(i) - b.poly.a.row(j)).amax() <= tol && (a.poly.b[i] - b.poly.b[j]).abs() <= tol
        })
    })
}

/// Enumerates all critical regions of the condensed problem.
///
/// Candidates are every subset of at most `min(q, mN)` constraint indices.
/// The output is ordered by active-set size, then lexicographically.
pub fn enumerate_regions(qp: &CondensedQp, tol: &Tolerances) -> Result<(PwaController, EnumerationReport), SynthesisError> {
    let q = qp.n_constraints();
    let max_size = q.min(qp.n_vars());
    let mut candidates: Vec<Vec<usize>> = Vec::new();
    for size in 0..=max_size {
        candidates.extend(Combinations::new(q, size));
    }

    let results: Vec<Candidate> = candidates.par_iter().map(|a| build_region(qp, a, tol)).collect();

    let mut report = EnumerationReport { candidates: candidates.len(), degenerate: 0, empty: 0, merged: 0 };
    let mut regions: Vec<CriticalRegion> = Vec::new();
    for cand in results {
        match cand {
            Candidate::Degenerate => report.degenerate += 1,
            Candidate::Empty => report.empty += 1,
            Candidate::Region(r) => {
                if regions.iter().any(|kept| same_region(kept, &r, 1e-9)) {
                    report.merged += 1;
                } else {
                    regions.push(r);
                }
            }
        }
    }
    let ctrl = PwaController::new(qp.n, qp.m, regions)?;
    Ok((ctrl, report))
}

/// Lexicographic k-subsets of `0..n`.
mod subsets {
    pub struct Combinations {
        n: usize,
        idx: Vec<usize>,
        done: bool,
    }

    impl Combinations {
        pub fn new(n: usize, k: usize) -> Self {
            Self { n, idx: (0..k).collect(), done: k > n }
        }
    }

    impl Iterator for Combinations {
        type Item = Vec<usize>;

        fn next(&mut self) -> Option<Vec<usize>> {
            if self.done {
                return None;
            }
            let out = self.idx.clone();
            let k = self.idx.len();
            let mut i = k;
            loop {
                if i == 0 {
                    self.done = true;
                    break;
                }
                i -= 1;
                if self.idx[i] < self.n - k + i {
                    self.idx[i] += 1;
                    for j in i + 1..k {
                        self.idx[j] = self.idx[j - 1] + 1;
                    }
                    break;
                }
            }
            Some(out)
        }
    }

    #[cfg(test)]
    #[test]
    fn counts_match_binomials() {
        assert_eq!(Combinations::new(5, 0).count(), 1);
        assert_eq!(Combinations::new(5, 2).count(), 10);
        assert_eq!(Combinations::new(30, 5).count(), 142_506);
        assert_eq!(Combinations::new(2, 3).count(), 0);
        assert_eq!(Combinations::new(3, 2).collect::<Vec<_>>(), vec![vec![0, 1], vec![0, 2], vec![1, 2]]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpqp::condense::condense;
    use crate::mpqp::testing::{scalar_problem, unconstrained_problem};

    #[test]
    fn unconstrained_gives_single_lq_region() {
        let (sys, spec) = unconstrained_problem();
        let qp = condense(&sys, &spec).unwrap();
        let (ctrl, _) = enumerate_regions(&qp, &Tolerances::default()).unwrap();
        assert_eq!(ctrl.len(), 1);
        let expected = -(qp.selector() * qp.h.clone().cholesky().unwrap().solve(&qp.f));
        assert!((&ctrl.regions[0].gain - expected).amax() < 1e-12);
        assert!(ctrl.regions[0].offset.amax() == 0.0);
    }

    #[test]
    fn scalar_problem_has_three_regions() {
        // u = −x/2 on |x| ≤ 2, saturated at ±1 outside.
        let (sys, spec) = scalar_problem(1);
        let qp = condense(&sys, &spec).unwrap();
        let (ctrl, report) = enumerate_regions(&qp, &Tolerances::default()).unwrap();
        assert_eq!(ctrl.len(), 3);
        assert_eq!(report.candidates, 3);
        assert_eq!(ctrl.regions[0].active_set, Vec::<usize>::new());
        assert!((ctrl.regions[0].gain[(0, 0)] + 0.5).abs() < 1e-12);
        // active {0}: u ≤ 1 binding, x ≤ −2
        assert_eq!(ctrl.regions[1].active_set, vec![0]);
        assert_eq!(ctrl.regions[1].gain[(0, 0)], 0.0);
        assert!((ctrl.regions[1].offset[0] - 1.0).abs() < 1e-12);
        assert_eq!(ctrl.regions[2].active_set, vec![1]);
        assert!((ctrl.regions[2].offset[0] + 1.0).abs() < 1e-12);
        let u = |x: f64| {
            let x = DVector::from_vec(vec![x]);
            ctrl.control(&x).unwrap().1[0]
        };
        assert!((u(-3.0) - 1.0).abs() < 1e-12);
        assert!((u(1.0) + 0.5).abs() < 1e-12);
        assert!((u(7.0) + 1.0).abs() < 1e-12);
    }
}
