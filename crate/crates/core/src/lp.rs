//! Dense two-phase simplex for small linear programs.
//!
//! Solves `max cᵀy  s.t.  A y ≤ b` with every component of `y` free in sign.
//! Free variables are split as `y = y⁺ − y⁻`. Pivoting follows Bland's rule,
//! so the method terminates on degenerate problems.

use nalgebra::{DMatrix, DVector};

const PIVOT_EPS: f64 = 1e-11;
/// Reduced costs at or below this are treated as zero.
const DUAL_EPS: f64 = 1e-9;
const FEAS_EPS: f64 = 1e-9;
const MAX_PIVOTS: usize = 50_000;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { y: DVector<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn optimal(&self) -> Option<(&DVector<f64>, f64)> {
        match self {
            LpOutcome::Optimal { y, value } => Some((y, *value)),
            _ => None,
        }
    }
}

struct Tableau {
    rows: usize,
    cols: usize,
    // `rows` constraint rows followed by one objective row; last column is the rhs.
    data: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * (self.cols + 1) + c]
    }

    #[inline]
    fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * (self.cols + 1) + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let width = self.cols + 1;
        let p = self.at(pr, pc);
        for c in 0..width {
            *self.at_mut(pr, c) /= p;
        }
        let pivot_row: Vec<f64> = self.data[pr * width..(pr + 1) * width].to_vec();
        for r in 0..=self.rows {
            if r == pr {
                continue;
            }
            let f = self.at(r, pc);
            if f == 0.0 {
                continue;
            }
            let row = &mut self.data[r * width..(r + 1) * width];
            for (x, pv) in row.iter_mut().zip(&pivot_row) {
                *x -= f * pv;
            }
        }
        self.basis[pr] = pc;
    }

    /// Runs Bland-rule iterations maximizing the objective row, whose entries
    /// hold reduced costs `c_j − z_j`. Columns with `allowed[c] == false` never enter.
    fn optimize(&mut self, allowed: &[bool]) -> Result<(), LpOutcome> {
        let obj = self.rows;
        for _ in 0..MAX_PIVOTS {
            let entering = (0..self.cols).find(|&c| allowed[c] && self.at(obj, c) > DUAL_EPS);
            let Some(pc) = entering else {
                return Ok(());
            };
            let mut best: Option<(f64, usize, usize)> = None;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > PIVOT_EPS {
                    let ratio = self.rhs(r) / a;
                    let cand = (ratio, self.basis[r], r);
                    best = match best {
                        None => Some(cand),
                        Some(b) => {
                            if ratio < b.0 - 1e-12 || ((ratio - b.0).abs() <= 1e-12 && cand.1 < b.1)
                            {
                                Some(cand)
                            } else {
                                Some(b)
                            }
                        }
                    };
                }
            }
            match best {
                None => return Err(LpOutcome::Unbounded),
                Some((_, _, pr)) => self.pivot(pr, pc),
            }
        }
        // Bland's rule cannot cycle; hitting the cap means numerical trouble.
        Err(LpOutcome::Infeasible)
    }

    fn set_objective(&mut self, costs: &[f64]) {
        let obj = self.rows;
        for c in 0..=self.cols {
            *self.at_mut(obj, c) = if c < self.cols { costs[c] } else { 0.0 };
        }
        // Eliminate basic columns from the objective row.
        for r in 0..self.rows {
            let bc = self.basis[r];
            let f = self.at(obj, bc);
            if f != 0.0 {
                for c in 0..=self.cols {
                    let v = self.at(r, c);
                    *self.at_mut(obj, c) -= f * v;
                }
            }
        }
    }
}

/// Maximizes `cᵀy` subject to `a·y ≤ b` with `y` free.
pub fn maximize(c: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> LpOutcome {
    let m = a.nrows();
    let nv = a.ncols();
    assert_eq!(c.len(), nv, "objective length mismatch");
    assert_eq!(b.len(), m, "rhs length mismatch");

    let n_split = 2 * nv;
    let negative_rows: Vec<usize> = (0..m).filter(|&i| b[i] < 0.0).collect();
    let n_art = negative_rows.len();
    let slack0 = n_split;
    let art0 = n_split + m;
    let cols = n_split + m + n_art;

    let mut t = Tableau {
        rows: m,
        cols,
        data: vec![0.0; (m + 1) * (cols + 1)],
        basis: vec![0; m],
    };
    let mut art_idx = 0;
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..nv {
            *t.at_mut(i, j) = sign * a[(i, j)];
            *t.at_mut(i, nv + j) = -sign * a[(i, j)];
        }
        *t.at_mut(i, slack0 + i) = sign;
        *t.at_mut(i, cols) = sign * b[i];
        if b[i] < 0.0 {
            *t.at_mut(i, art0 + art_idx) = 1.0;
            t.basis[i] = art0 + art_idx;
            art_idx += 1;
        } else {
            t.basis[i] = slack0 + i;
        }
    }

    if n_art > 0 {
        let mut phase1 = vec![0.0; cols];
        for k in 0..n_art {
            phase1[art0 + k] = -1.0;
        }
        t.set_objective(&phase1);
        let allowed = vec![true; cols];
        if let Err(outcome) = t.optimize(&allowed) {
            // Phase 1 is bounded by construction.
            debug_assert!(outcome != LpOutcome::Unbounded);
            return LpOutcome::Infeasible;
        }
        let infeas: f64 = (0..m)
            .filter(|&r| t.basis[r] >= art0)
            .map(|r| t.rhs(r))
            .sum();
        if infeas > FEAS_EPS * (1.0 + b.amax()) {
            return LpOutcome::Infeasible;
        }
        // Drive zero-level artificials out of the basis where possible.
        for r in 0..m {
            if t.basis[r] >= art0 {
                if let Some(pc) = (0..art0).find(|&c| t.at(r, c).abs() > 1e-9) {
                    t.pivot(r, pc);
                }
            }
        }
    }

    let mut costs = vec![0.0; cols];
    for j in 0..nv {
        costs[j] = c[j];
        costs[nv + j] = -c[j];
    }
    t.set_objective(&costs);
    let allowed: Vec<bool> = (0..cols).map(|c| c < art0).collect();
    if let Err(outcome) = t.optimize(&allowed) {
        return outcome;
    }

    let mut split = vec![0.0; cols];
    for r in 0..m {
        split[t.basis[r]] = t.rhs(r);
    }
    let y = DVector::from_fn(nv, |j, _| split[j] - split[nv + j]);
    let value = c.dot(&y);
    LpOutcome::Optimal { y, value }
}

/// Feasibility-only query: returns a point satisfying `a·y ≤ b` if one exists.
pub fn feasible_point(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let c = DVector::zeros(a.ncols());
    match maximize(&c, a, b) {
        LpOutcome::Optimal { y, .. } => Some(y),
        _ => None,
    }
}
