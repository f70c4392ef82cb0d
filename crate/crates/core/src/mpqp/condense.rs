use nalgebra::{DMatrix, DVector};

use super::model::{min_eigenvalue, LtiSystem, MpcSpec, Polyhedron};
use super::{SynthesisError, PD_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Input,
    State,
    Terminal,
}

/// Origin of one stacked constraint row: which set, which prediction step,
/// and which row of that set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstraintTag {
    pub kind: ConstraintKind,
    pub step: usize,
    pub row: usize,
}

/// `min ½zᵀHz + xᵀFᵀz  s.t.  Gz ≤ Ex + h,  x ∈ param_set`.
///
/// Rows of `G` are stacked as: input constraints for steps `0..N`, state
/// constraints for steps `1..N`, then the terminal constraint on step `N`.
/// The step-0 state constraint involves no decision variable and is kept
/// separately as `param_set`.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedQp {
    pub h: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub w: DVector<f64>,
    pub param_set: Polyhedron,
    pub tags: Vec<ConstraintTag>,
    pub n: usize,
    pub m: usize,
    pub horizon: usize,
}

impl CondensedQp {
    pub fn n_vars(&self) -> usize {
        self.h.nrows()
    }

    pub fn n_constraints(&self) -> usize {
        self.g.nrows()
    }

    /// `[I_m 0 … 0]`, extracting the first input of a stacked sequence.
    pub fn selector(&self) -> DMatrix<f64> {
        selector(self.m, self.horizon)
    }

    /// Right-hand side `Ex + h` for a given state.
    pub fn rhs(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.e * x + &self.w
    }

    /// Linear cost term `Fx`.
    pub fn linear_term(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.f * x
    }
}

pub fn selector(m: usize, horizon: usize) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(m, m * horizon);
    for i in 0..m {
        c[(i, i)] = 1.0;
    }
    c
}

pub fn condense(sys: &LtiSystem, spec: &MpcSpec) -> Result<CondensedQp, SynthesisError> {
    sys.validate()?;
    spec.validate(sys)?;
    let (n, m, big_n) = (sys.n(), sys.m(), spec.horizon);
    let nz = m * big_n;

    // powers[k] = A^k, k = 0..=N
    let mut powers = Vec::with_capacity(big_n + 1);
    powers.push(DMatrix::identity(n, n));
    for k in 1..=big_n {
        let next = &sys.a * &powers[k - 1];
        powers.push(next);
    }
    // su[k] maps z to the input contribution of x̄(k).
    let su: Vec<DMatrix<f64>> = (0..=big_n)
        .map(|k| {
            let mut s = DMatrix::zeros(n, nz);
            for j in 0..k {
                let blk = &powers[k - 1 - j] * &sys.b;
                s.view_mut((0, j * m), (n, m)).copy_from(&blk);
            }
            s
        })
        .collect();

    let mut h = DMatrix::zeros(nz, nz);
    for j in 0..big_n {
        h.view_mut((j * m, j * m), (m, m)).copy_from(&spec.r);
    }
    let mut f = DMatrix::zeros(nz, n);
    for k in 1..=big_n {
        let weight = if k == big_n { &spec.p_term } else { &spec.q };
        let wsu = weight * &su[k];
        h += su[k].transpose() * &wsu;
        f += su[k].transpose() * (weight * &powers[k]);
    }
    h = (&h + h.transpose()) * 0.5;

    if min_eigenvalue(&h) <= PD_TOL || h.clone().cholesky().is_none() {
        return Err(SynthesisError::InvalidProblem("condensed Hessian is not positive definite".into()));
    }

    let q_rows = big_n * spec.input_set.rows()
        + big_n.saturating_sub(1) * spec.state_set.rows()
        + spec.terminal_set.rows();
    let mut g = DMatrix::zeros(q_rows, nz);
    let mut e = DMatrix::zeros(q_rows, n);
    let mut w = DVector::zeros(q_rows);
    let mut tags = Vec::with_capacity(q_rows);
    let mut row = 0;

    for k in 0..big_n {
        let set = &spec.input_set;
        for i in 0..set.rows() {
            for c in 0..m {
                g[(row, k * m + c)] = set.a[(i, c)];
            }
            w[row] = set.b[i];
            tags.push(ConstraintTag { kind: ConstraintKind::Input, step: k, row: i });
            row += 1;
        }
    }
    let mut push_state = |set: &Polyhedron, k: usize, kind: ConstraintKind, row: &mut usize| {
        let gs = &set.a * &su[k];
        let es = -(&set.a * &powers[k]);
        for i in 0..set.rows() {
            g.row_mut(*row).copy_from(&gs.row(i));
            e.row_mut(*row).copy_from(&es.row(i));
            w[*row] = set.b[i];
            tags.push(ConstraintTag { kind, step: k, row: i });
            *row += 1;
        }
    };
    for k in 1..big_n {
        push_state(&spec.state_set, k, ConstraintKind::State, &mut row);
    }
    push_state(&spec.terminal_set, big_n, ConstraintKind::Terminal, &mut row);
    debug_assert_eq!(row, q_rows);

    Ok(CondensedQp {
        h,
        f,
        g,
        e,
        w,
        param_set: spec.state_set.clone(),
        tags,
        n,
        m,
        horizon: big_n,
    })
}
