use nalgebra::{DMatrix, DVector};

use super::SynthesisError;
use crate::lp::{self, LpOutcome};

/// Discrete-time plant `x⁺ = A x + B u`, `y = C x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl LtiSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self, SynthesisError> {
        let sys = Self { a, b, c };
        sys.validate()?;
        Ok(sys)
    }

    pub fn validate(&self) -> Result<(), SynthesisError> {
        let n = self.a.nrows();
        if self.a.ncols() != n || self.b.nrows() != n || self.c.ncols() != n {
            return Err(SynthesisError::InvalidProblem(format!(
                "inconsistent plant dimensions: A {}x{}, B {}x{}, C {}x{}",
                self.a.nrows(),
                self.a.ncols(),
                self.b.nrows(),
                self.b.ncols(),
                self.c.nrows(),
                self.c.ncols()
            )));
        }
        let finite = self.a.iter().chain(self.b.iter()).chain(self.c.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(SynthesisError::InvalidProblem("non-finite plant entry".into()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn p(&self) -> usize {
        self.c.nrows()
    }
}

/// The set `{v : a·v ≤ b}`. Zero rows describe all of space.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyhedron {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Polyhedron {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Self {
        assert_eq!(a.nrows(), b.len(), "polyhedron row mismatch");
        Self { a, b }
    }

    pub fn universe(dim: usize) -> Self {
        Self { a: DMatrix::zeros(0, dim), b: DVector::zeros(0) }
    }

    /// Axis-aligned box `lo ≤ v ≤ hi`.
    pub fn from_bounds(lo: &[f64], hi: &[f64]) -> Self {
        assert_eq!(lo.len(), hi.len());
        let d = lo.len();
        let mut a = DMatrix::zeros(2 * d, d);
        let mut b = DVector::zeros(2 * d);
        for i in 0..d {
            a[(2 * i, i)] = 1.0;
            b[2 * i] = hi[i];
            a[(2 * i + 1, i)] = -1.0;
            b[2 * i + 1] = -lo[i];
        }
        Self { a, b }
    }

    /// Symmetric box `|v_i| ≤ bound_i`.
    pub fn symmetric_box(bounds: &[f64]) -> Self {
        let lo: Vec<f64> = bounds.iter().map(|b| -b).collect();
        Self::from_bounds(&lo, bounds)
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn contains(&self, v: &DVector<f64>, tol: f64) -> bool {
        self.max_violation(v) <= tol
    }

    /// Largest `a_i·v − b_i` over the rows (−∞ for the universe).
    pub fn max_violation(&self, v: &DVector<f64>) -> f64 {
        (0..self.rows())
            .map(|i| self.a.row(i).dot(&v.transpose()) - self.b[i])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Chebyshev center and radius. A negative radius means the interior is
    /// empty; `+∞` means the set contains arbitrarily large balls.
    pub fn chebyshev_center(&self) -> (DVector<f64>, f64) {
        let d = self.dim();
        let r = self.rows();
        // Zero rows never constrain the ball; an infeasible zero row empties the set.
        let mut keep = Vec::with_capacity(r);
        for i in 0..r {
            let norm = self.a.row(i).norm();
            if norm <= 1e-14 {
                if self.b[i] < 0.0 {
                    return (DVector::zeros(d), f64::NEG_INFINITY);
                }
            } else {
                keep.push((i, norm));
            }
        }
        if keep.is_empty() {
            return (DVector::zeros(d), f64::INFINITY);
        }
        let mut a = DMatrix::zeros(keep.len(), d + 1);
        let mut b = DVector::zeros(keep.len());
        for (k, &(i, norm)) in keep.iter().enumerate() {
            for j in 0..d {
                a[(k, j)] = self.a[(i, j)];
            }
            a[(k, d)] = norm;
            b[k] = self.b[i];
        }
        let mut c = DVector::zeros(d + 1);
        c[d] = 1.0;
        match lp::maximize(&c, &a, &b) {
            LpOutcome::Optimal { y, .. } => {
                let center = y.rows(0, d).into_owned();
                (center, y[d])
            }
            LpOutcome::Unbounded => (DVector::zeros(d), f64::INFINITY),
            // The ball LP is always feasible once zero rows are removed.
            LpOutcome::Infeasible => (DVector::zeros(d), f64::NEG_INFINITY),
        }
    }
}

/// Finite-horizon quadratic MPC problem data.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcSpec {
    pub horizon: usize,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub p_term: DMatrix<f64>,
    pub state_set: Polyhedron,
    pub input_set: Polyhedron,
    pub terminal_set: Polyhedron,
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= 1e-12 * (1.0 + m.amax())
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

impl MpcSpec {
    pub fn validate(&self, sys: &LtiSystem) -> Result<(), SynthesisError> {
        let (n, m) = (sys.n(), sys.m());
        let bad = |msg: &str| Err(SynthesisError::InvalidProblem(msg.to_string()));
        if self.horizon == 0 {
            return bad("horizon must be positive");
        }
        if self.q.shape() != (n, n) || self.p_term.shape() != (n, n) || self.r.shape() != (m, m) {
            return bad("weight dimensions do not match the plant");
        }
        if self.state_set.dim() != n || self.terminal_set.dim() != n || self.input_set.dim() != m {
            return bad("constraint set dimensions do not match the plant");
        }
        if !is_symmetric(&self.q) || !is_symmetric(&self.p_term) || !is_symmetric(&self.r) {
            return bad("weights must be symmetric");
        }
        if min_eigenvalue(&self.r) <= super::PD_TOL {
            return bad("R must be positive definite");
        }
        if min_eigenvalue(&self.q) < -super::PD_TOL || min_eigenvalue(&self.p_term) < -super::PD_TOL {
            return bad("Q and P must be positive semidefinite");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_box_chebyshev() {
        let p = Polyhedron::symmetric_box(&[1.0, 1.0]);
        let (c, r) = p.chebyshev_center();
        assert!(c.norm() < 1e-12);
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_interval_has_negative_radius() {
        // x ≤ 0 and x ≥ 1
        let p = Polyhedron::new(
            DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            DVector::from_vec(vec![0.0, -1.0]),
        );
        let (_, r) = p.chebyshev_center();
        assert!(r < 0.0);
    }

    #[test]
    fn halfspace_is_unbounded() {
        let p = Polyhedron::new(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), DVector::from_vec(vec![1.0]));
        assert_eq!(p.chebyshev_center().1, f64::INFINITY);
        assert_eq!(Polyhedron::universe(3).chebyshev_center().1, f64::INFINITY);
    }

    #[test]
    fn random_simplex_center_has_slack() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            // Simplex conv{v0,v1,v2} in 2D written as three half-planes.
            let pts: Vec<[f64; 2]> =
                (0..3).map(|_| [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]).collect();
            let area = (pts[1][0] - pts[0][0]) * (pts[2][1] - pts[0][1])
                - (pts[2][0] - pts[0][0]) * (pts[1][1] - pts[0][1]);
            if area.abs() < 0.1 {
                continue;
            }
            let mut a = DMatrix::zeros(3, 2);
            let mut b = DVector::zeros(3);
            for k in 0..3 {
                let (p, q, o) = (pts[k], pts[(k + 1) % 3], pts[(k + 2) % 3]);
                let mut nrm = [q[1] - p[1], p[0] - q[0]];
                let mut off = nrm[0] * p[0] + nrm[1] * p[1];
                if nrm[0] * o[0] + nrm[1] * o[1] > off {
                    nrm = [-nrm[0], -nrm[1]];
                    off = -off;
                }
                a[(k, 0)] = nrm[0];
                a[(k, 1)] = nrm[1];
                b[k] = off;
            }
            let poly = Polyhedron::new(a.clone(), b.clone());
            let (c, r) = poly.chebyshev_center();
            assert!(r > 0.0);
            for k in 0..3 {
                let slack = b[k] - a.row(k).dot(&c.transpose());
                assert!(slack >= r * a.row(k).norm() - 1e-8);
            }
        }
    }
}
