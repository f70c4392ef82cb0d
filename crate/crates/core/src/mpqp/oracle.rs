//! Direct QP solve used to cross-check the explicit controller.
//!
//! Primal active-set method started from a phase-1 LP vertex. Every
//! equality-constrained subproblem is solved through the full KKT matrix.

use nalgebra::{DMatrix, DVector};

use super::condense::CondensedQp;
use super::{SynthesisError, FEAS_TOL};
use crate::lp;

const MAX_ITERS: usize = 2_000;
const STEP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: DVector<f64>,
    /// Indices of the working set at termination, sorted.
    pub active_set: Vec<usize>,
    /// One multiplier per stacked constraint (zero off the active set).
    pub multipliers: DVector<f64>,
    pub kkt_residual: f64,
}

fn kkt_solve(
    h: &DMatrix<f64>,
    g_w: &DMatrix<f64>,
    top: &DVector<f64>,
    bottom: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let nz = h.nrows();
    let k = g_w.nrows();
    let mut kkt = DMatrix::zeros(nz + k, nz + k);
    kkt.view_mut((0, 0), (nz, nz)).copy_from(h);
    if k > 0 {
        kkt.view_mut((0, nz), (nz, k)).copy_from(&g_w.transpose());
        kkt.view_mut((nz, 0), (k, nz)).copy_from(g_w);
    }
    let mut rhs = DVector::zeros(nz + k);
    rhs.rows_mut(0, nz).copy_from(top);
    rhs.rows_mut(nz, k).copy_from(bottom);
    let sol = kkt.lu().solve(&rhs)?;
    Some((sol.rows(0, nz).into_owned(), sol.rows(nz, k).into_owned()))
}

fn rows_of(g: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), g.ncols(), |r, c| g[(idx[r], c)])
}

fn independent_with(g: &DMatrix<f64>, working: &[usize], cand: usize) -> bool {
    let mut idx = working.to_vec();
    idx.push(cand);
    let sub = rows_of(g, &idx);
    sub.rank(1e-10) == idx.len()
}

/// Solves the condensed QP at state `x`. Returns `Infeasible` when `x` lies
/// outside the state set or no input sequence satisfies the constraints.
pub fn solve_qp_oracle(qp: &CondensedQp, x: &DVector<f64>) -> Result<QpSolution, SynthesisError> {
    if !qp.param_set.contains(x, FEAS_TOL) {
        return Err(SynthesisError::Infeasible);
    }
    let d = qp.rhs(x);
    let c = qp.linear_term(x);
    let nq = qp.n_constraints();

    let mut z = if nq == 0 {
        DVector::zeros(qp.n_vars())
    } else {
        lp::feasible_point(&qp.g, &d).ok_or(SynthesisError::Infeasible)?
    };

    let mut working: Vec<usize> = Vec::new();
    for i in 0..nq {
        let slack = d[i] - qp.g.row(i).dot(&z.transpose());
        if slack.abs() <= FEAS_TOL && qp.g.row(i).norm() > 0.0 && independent_with(&qp.g, &working, i) {
            working.push(i);
        }
    }

    let mut converged = false;
    for _ in 0..MAX_ITERS {
        let g_w = rows_of(&qp.g, &working);
        let grad = &qp.h * &z + &c;
        let (p, lam) = kkt_solve(&qp.h, &g_w, &(-&grad), &DVector::zeros(working.len()))
            .ok_or_else(|| SynthesisError::InvalidProblem("singular KKT system in oracle".into()))?;

        if p.amax() <= STEP_TOL * (1.0 + z.amax()) {
            // Stationary on the working set: check dual feasibility.
            let most_negative = lam
                .iter()
                .enumerate()
                .filter(|(_, &l)| l < -1e-12)
                .min_by(|a, b| a.1.partial_cmp(b.1).unwrap());
            match most_negative {
                None => {
                    converged = true;
                    break;
                }
                Some((pos, _)) => {
                    working.remove(pos);
                }
            }
            continue;
        }

        let mut alpha = 1.0;
        let mut blocking = None;
        for i in 0..nq {
            if working.contains(&i) {
                continue;
            }
            let gp = qp.g.row(i).dot(&p.transpose());
            if gp > 1e-14 {
                let slack = (d[i] - qp.g.row(i).dot(&z.transpose())).max(0.0);
                let step = slack / gp;
                if step < alpha {
                    alpha = step;
                    blocking = Some(i);
                }
            }
        }
        z += &p * alpha;
        if let Some(i) = blocking {
            if independent_with(&qp.g, &working, i) {
                working.push(i);
            }
        }
    }
    if !converged {
        return Err(SynthesisError::InvalidProblem("active-set oracle did not converge".into()));
    }

    // Final solve on the optimal working set for full precision.
    working.sort_unstable();
    let g_w = rows_of(&qp.g, &working);
    let d_w = DVector::from_fn(working.len(), |r, _| d[working[r]]);
    let (z_opt, lam) = kkt_solve(&qp.h, &g_w, &(-&c), &d_w)
        .ok_or_else(|| SynthesisError::InvalidProblem("singular KKT system in oracle".into()))?;
    let mut multipliers = DVector::zeros(nq);
    for (r, &i) in working.iter().enumerate() {
        multipliers[i] = lam[r];
    }
    let stationarity = &qp.h * &z_opt + &c + qp.g.transpose() * &multipliers;
    let kkt_residual = stationarity.amax();

    Ok(QpSolution { z: z_opt, active_set: working, multipliers, kkt_residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpqp::condense::condense;
    use crate::mpqp::testing::{double_integrator, scalar_problem, unconstrained_problem};

    #[test]
    fn unconstrained_is_newton_step() {
        let (sys, spec) = unconstrained_problem();
        let qp = condense(&sys, &spec).unwrap();
        assert_eq!(qp.n_constraints(), 0);
        let x = DVector::from_vec(vec![0.7, -1.1]);
        let sol = solve_qp_oracle(&qp, &x).unwrap();
        let expected = -qp.h.clone().cholesky().unwrap().solve(&(&qp.f * &x));
        assert!((sol.z - expected).amax() < 1e-12);
        assert!(sol.active_set.is_empty());
    }

    #[test]
    fn interior_state_has_empty_active_set() {
        let (sys, spec) = scalar_problem(1);
        let qp = condense(&sys, &spec).unwrap();
        let sol = solve_qp_oracle(&qp, &DVector::from_vec(vec![0.5])).unwrap();
        assert!(sol.active_set.is_empty());
        assert!((sol.z[0] + 0.25).abs() < 1e-12);
    }

    #[test]
    fn scalar_saturation_matches_grid_search() {
        // x = −3: unconstrained optimum u = 1.5 violates u ≤ 1.
        let (sys, spec) = scalar_problem(1);
        let qp = condense(&sys, &spec).unwrap();
        let x = -3.0;
        let sol = solve_qp_oracle(&qp, &DVector::from_vec(vec![x])).unwrap();
        // brute-force grid over the feasible interval
        let cost = |u: f64| 0.5 * 2.0 * u * u + x * u;
        let best = (0..=20_000)
            .map(|i| -1.0 + 2.0 * i as f64 / 20_000.0)
            .min_by(|a, b| cost(*a).partial_cmp(&cost(*b)).unwrap())
            .unwrap();
        assert!((best - 1.0).abs() < 1e-12);
        assert!((sol.z[0] - best).abs() < 1e-12);
        assert_eq!(sol.active_set, vec![0]);
        assert!(sol.multipliers[0] > 0.0);
    }

    #[test]
    fn kkt_residual_and_dual_feasibility_on_benchmark() {
        use rand::{Rng, SeedableRng};
        let (sys, spec) = double_integrator();
        let qp = condense(&sys, &spec).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut solved = 0;
        for _ in 0..400 {
            let x = DVector::from_vec(vec![rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]);
            match solve_qp_oracle(&qp, &x) {
                Ok(sol) => {
                    solved += 1;
                    assert!(sol.kkt_residual <= 1e-8, "residual {}", sol.kkt_residual);
                    assert!(sol.multipliers.iter().all(|&l| l >= -1e-9));
                    let viol = (&qp.g * &sol.z - qp.rhs(&x)).max();
                    assert!(viol <= 1e-9);
                }
                Err(SynthesisError::Infeasible) => {}
                Err(e) => panic!("{e}"),
            }
        }
        assert!(solved > 100);
    }

    #[test]
    fn out_of_state_set_is_infeasible() {
        let (sys, spec) = double_integrator();
        let qp = condense(&sys, &spec).unwrap();
        let r = solve_qp_oracle(&qp, &DVector::from_vec(vec![50.0, 0.0]));
        assert_eq!(r, Err(SynthesisError::Infeasible));
    }
}
