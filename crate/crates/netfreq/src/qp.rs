//! Dense convex QP solver: primal active set over two-sided inequality rows
//! with equality-constrained KKT solves on the working set.
//!
//!   minimize ½ xᵀHx + gᵀx
//!   subject to A_eq x = b_eq,  lo ≤ A_in x ≤ hi  (entries may be ±∞)
//!
//! H must be positive semidefinite and positive definite on the null space of
//! the equality rows together with any working set (KKT systems are solved by
//! SVD least squares, so flat directions in auxiliary problems are tolerated).
//! Starts from a caller-supplied feasible point and maintains feasibility.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QpError {
    #[error("starting point infeasible: max violation {0:.3e}")]
    InfeasibleStart(f64),
    #[error("active-set iteration limit reached ({0})")]
    MaxIterations(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Lower,
    Upper,
}

#[derive(Debug, Clone)]
pub struct Qp {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Multipliers ν for A_eq x = b_eq, in the convention Hx + g + A_eqᵀν + A_inᵀμ = 0.
    pub eq_duals: DVector<f64>,
    /// Signed inequality multipliers μ: ≥ 0 when the row sits at its upper
    /// bound, ≤ 0 at the lower bound, 0 when inactive.
    pub in_duals: DVector<f64>,
    pub active: Vec<(usize, Side)>,
    pub iterations: usize,
    pub objective: f64,
}

const FEAS_TOL: f64 = 1e-7;
const DUAL_TOL: f64 = 1e-9;
const STEP_TOL: f64 = 1e-11;
const RANK_TOL: f64 = 1e-9;

impl Qp {
    fn check_dims(&self) -> Result<(), QpError> {
        let n = self.h.nrows();
        let ok = self.h.ncols() == n
            && self.g.len() == n
            && self.a_eq.ncols() == n
            && self.b_eq.len() == self.a_eq.nrows()
            && self.a_in.ncols() == n
            && self.lo.len() == self.a_in.nrows()
            && self.hi.len() == self.a_in.nrows();
        if ok {
            Ok(())
        } else {
            Err(QpError::Dimension(format!(
                "H {}x{}, g {}, A_eq {}x{}, A_in {}x{}",
                self.h.nrows(),
                self.h.ncols(),
                self.g.len(),
                self.a_eq.nrows(),
                self.a_eq.ncols(),
                self.a_in.nrows(),
                self.a_in.ncols()
            )))
        }
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * (x.transpose() * &self.h * x)[(0, 0)] + self.g.dot(x)
    }

    fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let mut v: f64 = 0.0;
        let r_eq = &self.a_eq * x - &self.b_eq;
        for i in 0..r_eq.len() {
            v = v.max(r_eq[i].abs());
        }
        let ax = &self.a_in * x;
        for i in 0..ax.len() {
            v = v.max(self.lo[i] - ax[i]).max(ax[i] - self.hi[i]);
        }
        v
    }
}

/// Solve the equality-constrained subproblem on working set `w_set`.
/// Returns (x̂, ν, working-set duals in w_set order).
fn solve_kkt(
    qp: &Qp,
    w_set: &[(usize, Side)],
) -> (DVector<f64>, DVector<f64>, Vec<f64>) {
    let n = qp.h.nrows();
    let p_eq = qp.a_eq.nrows();
    let p = p_eq + w_set.len();
    let dim = n + p;
    let mut kkt = DMatrix::zeros(dim, dim);
    kkt.view_mut((0, 0), (n, n)).copy_from(&qp.h);
    let mut rhs = DVector::zeros(dim);
    for i in 0..n {
        rhs[i] = -qp.g[i];
    }
    for r in 0..p_eq {
        for c in 0..n {
            kkt[(n + r, c)] = qp.a_eq[(r, c)];
            kkt[(c, n + r)] = qp.a_eq[(r, c)];
        }
        rhs[n + r] = qp.b_eq[r];
    }
    for (k, &(row, side)) in w_set.iter().enumerate() {
        for c in 0..n {
            kkt[(n + p_eq + k, c)] = qp.a_in[(row, c)];
            kkt[(c, n + p_eq + k)] = qp.a_in[(row, c)];
        }
        rhs[n + p_eq + k] = match side {
            Side::Lower => qp.lo[row],
            Side::Upper => qp.hi[row],
        };
    }
    let svd = kkt.svd(true, true);
    let sol = svd.solve(&rhs, 1e-12).expect("kkt svd solve");
    let x = DVector::from_iterator(n, (0..n).map(|i| sol[i]));
    let nu = DVector::from_iterator(p_eq, (0..p_eq).map(|i| sol[n + i]));
    let mu_w: Vec<f64> = (0..w_set.len()).map(|k| sol[n + p_eq + k]).collect();
    (x, nu, mu_w)
}

/// Would row `cand` be linearly independent of A_eq plus the working set?
fn independent_if_added(qp: &Qp, w_set: &[(usize, Side)], cand: usize) -> bool {
    let n = qp.h.nrows();
    let rows = qp.a_eq.nrows() + w_set.len() + 1;
    let mut a = DMatrix::zeros(rows, n);
    a.view_mut((0, 0), (qp.a_eq.nrows(), n)).copy_from(&qp.a_eq);
    for (k, &(row, _)) in w_set.iter().enumerate() {
        for c in 0..n {
            a[(qp.a_eq.nrows() + k, c)] = qp.a_in[(row, c)];
        }
    }
    for c in 0..n {
        a[(rows - 1, c)] = qp.a_in[(cand, c)];
    }
    if rows > n {
        return false;
    }
    let svd = a.svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    smin > RANK_TOL * smax.max(1.0)
}

pub fn solve(qp: &Qp, x0: &DVector<f64>) -> Result<QpSolution, QpError> {
    qp.check_dims()?;
    let viol = qp.max_violation(x0);
    if viol > FEAS_TOL {
        return Err(QpError::InfeasibleStart(viol));
    }
    let n_in = qp.a_in.nrows();
    let mut x = x0.clone();
    let mut w_set: Vec<(usize, Side)> = Vec::new();
    // Seed the working set with bounds active at x0, keeping rows independent.
    let ax0 = &qp.a_in * &x;
    for i in 0..n_in {
        let side = if (ax0[i] - qp.hi[i]).abs() <= FEAS_TOL && qp.hi[i].is_finite() {
            Some(Side::Upper)
        } else if (ax0[i] - qp.lo[i]).abs() <= FEAS_TOL && qp.lo[i].is_finite() {
            Some(Side::Lower)
        } else {
            None
        };
        if let Some(side) = side {
            if independent_if_added(qp, &w_set, i) {
                w_set.push((i, side));
            }
        }
    }

    let max_iter = 100 * (qp.h.nrows() + n_in).max(10);
    let scale = 1.0 + x.amax();
    for iter in 0..max_iter {
        let (xh, nu, mu_w) = solve_kkt(qp, &w_set);
        let d = &xh - &x;
        if d.amax() <= STEP_TOL * scale.max(1.0 + xh.amax()) {
            // Stationary on the working set; check multiplier signs.
            let mut worst: Option<(usize, f64)> = None; // (index into w_set, margin)
            for (k, &(_, side)) in w_set.iter().enumerate() {
                let margin = match side {
                    Side::Upper => mu_w[k],
                    Side::Lower => -mu_w[k],
                };
                if margin < -DUAL_TOL {
                    let better = match worst {
                        None => true,
                        Some((_, m)) => margin < m,
                    };
                    if better {
                        worst = Some((k, margin));
                    }
                }
            }
            match worst {
                None => {
                    let mut in_duals = DVector::zeros(n_in);
                    for (k, &(row, _)) in w_set.iter().enumerate() {
                        in_duals[row] = mu_w[k];
                    }
                    return Ok(QpSolution {
                        objective: qp.objective(&xh),
                        x: xh,
                        eq_duals: nu,
                        in_duals,
                        active: w_set,
                        iterations: iter + 1,
                    });
                }
                Some((k, _)) => {
                    w_set.remove(k);
                    continue;
                }
            }
        }
        // Ratio test: longest step along d before a new bound blocks.
        let ad = &qp.a_in * &d;
        let ax = &qp.a_in * &x;
        let mut alpha = 1.0f64;
        let mut blocker: Option<(usize, Side)> = None;
        for i in 0..n_in {
            if w_set.iter().any(|&(r, _)| r == i) {
                continue;
            }
            if ad[i] > 1e-13 && qp.hi[i].is_finite() {
                let limit = (qp.hi[i] - ax[i]) / ad[i];
                if limit < alpha - 1e-12 {
                    alpha = limit.max(0.0);
                    blocker = Some((i, Side::Upper));
                }
            } else if ad[i] < -1e-13 && qp.lo[i].is_finite() {
                let limit = (qp.lo[i] - ax[i]) / ad[i];
                if limit < alpha - 1e-12 {
                    alpha = limit.max(0.0);
                    blocker = Some((i, Side::Lower));
                }
            }
        }
        x = &x + &d * alpha;
        if let Some((i, side)) = blocker {
            // Dependent rows (e.g. full graph cycles) are not added; the step
            // to the boundary already happened and feasibility is preserved.
            if independent_if_added(qp, &w_set, i) {
                w_set.push((i, side));
            }
        }
    }
    Err(QpError::MaxIterations(max_iter))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn free_bounds(n: usize) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
        (
            DMatrix::zeros(0, n),
            DVector::zeros(0),
            DVector::zeros(0),
        )
    }

    #[test]
    fn equality_only() {
        // min ½‖x‖² s.t. x1 + x2 = 1 → (0.5, 0.5), ν = −0.5
        let (a_in, lo, hi) = free_bounds(2);
        let qp = Qp {
            h: DMatrix::identity(2, 2),
            g: dvector![0.0, 0.0],
            a_eq: dmatrix![1.0, 1.0],
            b_eq: dvector![1.0],
            a_in,
            lo,
            hi,
        };
        let sol = solve(&qp, &dvector![0.7, 0.3]).unwrap();
        assert!((sol.x[0] - 0.5).abs() < 1e-10);
        assert!((sol.x[1] - 0.5).abs() < 1e-10);
        assert!((sol.eq_duals[0] + 0.5).abs() < 1e-10);
    }

    #[test]
    fn box_clamps_unconstrained_optimum() {
        // min ½(x−3)² with x ≤ 1 → x = 1, μ = 2 ≥ 0 at upper bound
        let qp = Qp {
            h: DMatrix::identity(1, 1),
            g: dvector![-3.0],
            a_eq: DMatrix::zeros(0, 1),
            b_eq: DVector::zeros(0),
            a_in: dmatrix![1.0],
            lo: dvector![-10.0],
            hi: dvector![1.0],
        };
        let sol = solve(&qp, &dvector![0.0]).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-10);
        assert!((sol.in_duals[0] - 2.0).abs() < 1e-10);
        assert_eq!(sol.active, vec![(0, Side::Upper)]);
    }

    #[test]
    fn releases_wrongly_active_bound() {
        // start pinned at lower bound that is not active at the optimum
        let qp = Qp {
            h: DMatrix::identity(1, 1),
            g: dvector![-0.5],
            a_eq: DMatrix::zeros(0, 1),
            b_eq: DVector::zeros(0),
            a_in: dmatrix![1.0],
            lo: dvector![0.0],
            hi: dvector![10.0],
        };
        let sol = solve(&qp, &dvector![0.0]).unwrap();
        assert!((sol.x[0] - 0.5).abs() < 1e-10);
        assert!(sol.in_duals[0].abs() < 1e-10);
    }

    #[test]
    fn two_var_resource_split() {
        // min ½(x1² + x2²) s.t. x1 + x2 = 10, x1 ≤ 3 → (3, 7)
        let qp = Qp {
            h: DMatrix::identity(2, 2),
            g: dvector![0.0, 0.0],
            a_eq: dmatrix![1.0, 1.0],
            b_eq: dvector![10.0],
            a_in: dmatrix![1.0, 0.0],
            lo: dvector![-100.0],
            hi: dvector![3.0],
        };
        let sol = solve(&qp, &dvector![3.0, 7.0]).unwrap();
        assert!((sol.x[0] - 3.0).abs() < 1e-9);
        assert!((sol.x[1] - 7.0).abs() < 1e-9);
        // stationarity: x1 + ν + μ = 0, x2 + ν = 0 → ν = −7, μ = 4
        assert!((sol.eq_duals[0] + 7.0).abs() < 1e-9);
        assert!((sol.in_duals[0] - 4.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_start_rejected() {
        let qp = Qp {
            h: DMatrix::identity(1, 1),
            g: dvector![0.0],
            a_eq: DMatrix::zeros(0, 1),
            b_eq: DVector::zeros(0),
            a_in: dmatrix![1.0],
            lo: dvector![0.0],
            hi: dvector![1.0],
        };
        match solve(&qp, &dvector![5.0]) {
            Err(QpError::InfeasibleStart(v)) => assert!(v > 3.9),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn singular_hessian_least_squares_stage() {
        // min ½(x1 − x2 − 1)²: flat along x1 = x2 + c; bounds force x2 ≤ 0.25.
        let j = dmatrix![1.0, -1.0];
        let h = j.transpose() * &j;
        let qp = Qp {
            h,
            g: dvector![-1.0, 1.0], // Jᵀ·(−r) with r = 1
            a_eq: DMatrix::zeros(0, 2),
            b_eq: DVector::zeros(0),
            a_in: dmatrix![0.0, 1.0],
            lo: dvector![-0.25],
            hi: dvector![0.25],
        };
        let sol = solve(&qp, &dvector![0.0, 0.0]).unwrap();
        // optimum has x1 − x2 = 1 (residual 0), objective −½ after constant
        assert!((sol.x[0] - sol.x[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn random_qps_match_projected_gradient() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for case in 0..25 {
            let n = 4;
            // PD Hessian H = GᵀG + I
            let gmat = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let h = gmat.transpose() * &gmat + DMatrix::identity(n, n);
            let g = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
            let lo = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..-0.1));
            let hi = DVector::from_fn(n, |_, _| rng.gen_range(0.1..1.0));
            let qp = Qp {
                h: h.clone(),
                g: g.clone(),
                a_eq: DMatrix::zeros(0, n),
                b_eq: DVector::zeros(0),
                a_in: DMatrix::identity(n, n),
                lo: lo.clone(),
                hi: hi.clone(),
            };
            let sol = solve(&qp, &DVector::zeros(n)).unwrap();
            // projected gradient descent reference
            let mut x = DVector::zeros(n);
            let step = 1.0 / (h.norm() + 1.0);
            for _ in 0..200_000 {
                let grad = &h * &x + &g;
                x = &x - &grad * step;
                for i in 0..n {
                    x[i] = x[i].clamp(lo[i], hi[i]);
                }
            }
            assert!(
                (&sol.x - &x).amax() < 1e-5,
                "case {case}: {:?} vs {:?}",
                sol.x,
                x
            );
        }
    }
}
