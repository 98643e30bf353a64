//! Network balancing optimization (the NBO problem) and its KKT certificates.
//!
//! Variables x = (θr, φr, ω, Pᵍ, Pˡ) with reference angles θ₀ = φ₀ = 0
//! eliminated, so the two power-balance equality blocks are square:
//!   (5a)  Pᵍ = Pˡ + p + Dω + CBCᵀθ
//!   (5b)  Pᵍ = Pˡ + p + CBCᵀφ
//! plus capacity boxes on (Pᵍ, Pˡ) and line intervals θ̲ ≤ Cᵀφ ≤ θ̄.
//! Solved by the primal active-set QP in [`crate::qp`] — fully independent of
//! the simulator. A bounds-only least-squares stage provides the feasible
//! start and doubles as the A2 feasibility check.

use crate::model::Scenario;
use crate::qp::{self, Qp, QpError, Side};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NboError {
    #[error("NBO infeasible (A2 violated): phase-1 balance residual {0:.3e} MW")]
    Infeasible(f64),
    #[error("qp solver failed: {0}")]
    Solver(#[from] QpError),
}

#[derive(Debug, Clone)]
pub struct NboProblem {
    pub n: usize,
    pub m: usize,
    /// Reduced edge-incidence map: φ̃ = ct_red · φr (m × (n−1)).
    pub ct_red: DMatrix<f64>,
    /// CB·ct_red (n × (n−1)).
    pub cb_red: DMatrix<f64>,
    pub p: DVector<f64>,
    pub qp: Qp,
    scenario: Scenario,
}

/// Offsets into the decision vector.
impl NboProblem {
    fn o_theta(&self) -> usize {
        0
    }
    fn o_phi(&self) -> usize {
        self.n - 1
    }
    fn o_omega(&self) -> usize {
        2 * (self.n - 1)
    }
    fn o_pg(&self) -> usize {
        2 * (self.n - 1) + self.n
    }
    fn o_pl(&self) -> usize {
        2 * (self.n - 1) + 2 * self.n
    }
    fn dim(&self) -> usize {
        5 * self.n - 2
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NboSolution {
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    pub theta_t: Vec<f64>,
    pub phi_t: Vec<f64>,
    pub omega: Vec<f64>,
    pub pg: Vec<f64>,
    pub pl: Vec<f64>,
    /// Multiplier for (5b) — the consensus variable λ of the controller.
    pub lambda: Vec<f64>,
    /// Multiplier for (5a) — identified with ω at optimality.
    pub mu: Vec<f64>,
    pub eta_p: Vec<f64>,
    pub eta_m: Vec<f64>,
    /// ½(ΣαPᵍ² + ΣβPˡ² + ΣDω² + Σz²).
    pub objective: f64,
    pub active: Vec<String>,
    pub iterations: usize,
}

pub fn assemble_nbo(scenario: &Scenario) -> NboProblem {
    let model = &scenario.model;
    let n = model.n_nodes;
    let m = model.n_edges();
    let mut ct_red = DMatrix::zeros(m, n - 1);
    for (e, &(i, j)) in model.edges.iter().enumerate() {
        if i > 0 {
            ct_red[(e, i - 1)] = 1.0;
        }
        if j > 0 {
            ct_red[(e, j - 1)] = -1.0;
        }
    }
    let c = model.build_incidence();
    let b_diag = DMatrix::from_diagonal(&DVector::from_vec(model.b.clone()));
    let cb_red = &c * &b_diag * &ct_red;

    let dim = 5 * n - 2;
    let o_theta = 0;
    let o_phi = n - 1;
    let o_omega = 2 * (n - 1);
    let o_pg = o_omega + n;
    let o_pl = o_pg + n;

    // z = Pg − Pl − CB·Cᵀφ − p = J·x − p
    let mut j_z = DMatrix::zeros(n, dim);
    for r in 0..n {
        j_z[(r, o_pg + r)] = 1.0;
        j_z[(r, o_pl + r)] = -1.0;
        for c2 in 0..n - 1 {
            j_z[(r, o_phi + c2)] = -cb_red[(r, c2)];
        }
    }
    let p = DVector::from_vec(scenario.p.clone());

    let mut h = j_z.transpose() * &j_z;
    for r in 0..n {
        h[(o_omega + r, o_omega + r)] += model.d_damping[r];
        h[(o_pg + r, o_pg + r)] += model.alpha[r];
        h[(o_pl + r, o_pl + r)] += model.beta[r];
    }
    let g = -(j_z.transpose() * &p);

    // Equalities: rows 0..n are (5a), rows n..2n are (5b); both with RHS p.
    let mut a_eq = DMatrix::zeros(2 * n, dim);
    let mut b_eq = DVector::zeros(2 * n);
    for r in 0..n {
        a_eq[(r, o_pg + r)] = 1.0;
        a_eq[(r, o_pl + r)] = -1.0;
        a_eq[(r, o_omega + r)] = -model.d_damping[r];
        for c2 in 0..n - 1 {
            a_eq[(r, o_theta + c2)] = -cb_red[(r, c2)];
        }
        b_eq[r] = scenario.p[r];
        a_eq[(n + r, o_pg + r)] = 1.0;
        a_eq[(n + r, o_pl + r)] = -1.0;
        for c2 in 0..n - 1 {
            a_eq[(n + r, o_phi + c2)] = -cb_red[(r, c2)];
        }
        b_eq[n + r] = scenario.p[r];
    }

    // Inequalities: Pg box, Pl box, then line intervals on Cᵀφ.
    let n_in = 2 * n + m;
    let mut a_in = DMatrix::zeros(n_in, dim);
    let mut lo = DVector::zeros(n_in);
    let mut hi = DVector::zeros(n_in);
    for r in 0..n {
        a_in[(r, o_pg + r)] = 1.0;
        lo[r] = model.pg_lo[r];
        hi[r] = model.pg_hi[r];
        a_in[(n + r, o_pl + r)] = 1.0;
        lo[n + r] = model.pl_lo[r];
        hi[n + r] = model.pl_hi[r];
    }
    for e in 0..m {
        for c2 in 0..n - 1 {
            a_in[(2 * n + e, o_phi + c2)] = ct_red[(e, c2)];
        }
        lo[2 * n + e] = model.theta_lo[e];
        hi[2 * n + e] = model.theta_hi[e];
    }

    NboProblem {
        n,
        m,
        ct_red,
        cb_red,
        p,
        qp: Qp {
            h,
            g,
            a_eq,
            b_eq,
            a_in,
            lo,
            hi,
        },
        scenario: scenario.clone(),
    }
}

/// Bounds-only least-squares feasibility stage: minimize ½‖Pᵍ − Pˡ − p − CBCᵀφ‖²
/// over the boxes and intervals, started at the origin (feasible by A1).
fn phase1(prob: &NboProblem) -> Result<DVector<f64>, NboError> {
    let dim = prob.dim();
    let n = prob.n;
    // Same J as the z-term of the objective.
    let mut j_z = DMatrix::zeros(n, dim);
    for r in 0..n {
        j_z[(r, prob.o_pg() + r)] = 1.0;
        j_z[(r, prob.o_pl() + r)] = -1.0;
        for c2 in 0..n - 1 {
            j_z[(r, prob.o_phi() + c2)] = -prob.cb_red[(r, c2)];
        }
    }
    let aux = Qp {
        h: j_z.transpose() * &j_z,
        g: -(j_z.transpose() * &prob.p),
        a_eq: DMatrix::zeros(0, dim),
        b_eq: DVector::zeros(0),
        a_in: prob.qp.a_in.clone(),
        lo: prob.qp.lo.clone(),
        hi: prob.qp.hi.clone(),
    };
    let sol = qp::solve(&aux, &DVector::zeros(dim))?;
    let residual = (&j_z * &sol.x - &prob.p).norm();
    if residual > 1e-6 {
        return Err(NboError::Infeasible(residual));
    }
    Ok(sol.x)
}

/// Complete (ω, θr) from (Pᵍ, Pˡ, φr) so that (5a) holds exactly.
fn complete_start(prob: &NboProblem, x: &mut DVector<f64>) {
    let n = prob.n;
    let model = &prob.scenario.model;
    let q: Vec<f64> = (0..n)
        .map(|r| x[prob.o_pg() + r] - x[prob.o_pl() + r] - prob.p[r])
        .collect();
    let total: f64 = q.iter().sum();
    let d_total: f64 = model.d_damping.iter().sum();
    let omega_u = total / d_total;
    for r in 0..n {
        x[prob.o_omega() + r] = omega_u;
    }
    // CB·Cᵀθ = q − Dω, reduced to nodes 1..n (row 0 redundant by Σ = 0)
    let mut rhs = DVector::zeros(n - 1);
    for r in 1..n {
        rhs[r - 1] = q[r] - model.d_damping[r] * omega_u;
    }
    let l_red = prob.cb_red.rows(1, n - 1).clone_owned();
    let theta = l_red.lu().solve(&rhs).expect("reduced laplacian solve");
    for c2 in 0..n - 1 {
        x[prob.o_theta() + c2] = theta[c2];
    }
}

pub fn solve_nbo(prob: &NboProblem) -> Result<NboSolution, NboError> {
    let mut x0 = phase1(prob)?;
    complete_start(prob, &mut x0);
    let sol = qp::solve(&prob.qp, &x0)?;

    let n = prob.n;
    let m = prob.m;
    let model = &prob.scenario.model;
    let take = |o: usize, len: usize| -> Vec<f64> { (0..len).map(|i| sol.x[o + i]).collect() };
    let theta_r = take(prob.o_theta(), n - 1);
    let phi_r = take(prob.o_phi(), n - 1);
    let omega = take(prob.o_omega(), n);
    let pg = take(prob.o_pg(), n);
    let pl = take(prob.o_pl(), n);
    let mut theta = vec![0.0; n];
    let mut phi = vec![0.0; n];
    theta[1..].copy_from_slice(&theta_r);
    phi[1..].copy_from_slice(&phi_r);
    let theta_t = model.edge_differences(&theta);
    let phi_t = model.edge_differences(&phi);

    let mu: Vec<f64> = (0..n).map(|r| sol.eq_duals[r]).collect();
    let lambda: Vec<f64> = (0..n).map(|r| sol.eq_duals[n + r]).collect();
    let mut eta_p = vec![0.0; m];
    let mut eta_m = vec![0.0; m];
    for e in 0..m {
        let mu_e = sol.in_duals[2 * n + e];
        if mu_e >= 0.0 {
            eta_p[e] = mu_e;
        } else {
            eta_m[e] = -mu_e;
        }
    }

    let z = crate::controller::compute_z(&pg, &pl, &prob.scenario.p, &phi_t, model);
    let objective = 0.5
        * (0..n)
            .map(|j| {
                model.alpha[j] * pg[j] * pg[j]
                    + model.beta[j] * pl[j] * pl[j]
                    + model.d_damping[j] * omega[j] * omega[j]
                    + z[j] * z[j]
            })
            .sum::<f64>();

    let active = sol
        .active
        .iter()
        .map(|&(row, side)| {
            let side = match side {
                Side::Lower => "lo",
                Side::Upper => "hi",
            };
            if row < n {
                format!("pg[{row}]:{side}")
            } else if row < 2 * n {
                format!("pl[{}]:{side}", row - n)
            } else {
                format!("line[{}]:{side}", row - 2 * n)
            }
        })
        .collect();

    Ok(NboSolution {
        theta,
        phi,
        theta_t,
        phi_t,
        omega,
        pg,
        pl,
        lambda,
        mu,
        eta_p,
        eta_m,
        objective,
        active,
        iterations: sol.iterations,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct KktReport {
    pub stationarity: f64,
    pub primal_feas: f64,
    pub dual_feas: f64,
    pub complementarity: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal_feas)
            .max(self.dual_feas)
            .max(self.complementarity)
    }
}

/// Evaluate the L₂ gradient blocks at (x*, ρ*) with μ* read from the solution.
/// Box-bound blocks use the projected-gradient residual since the capacity box
/// is handled by projection, not multipliers.
pub fn kkt_residuals(sol: &NboSolution, scenario: &Scenario) -> KktReport {
    let model = &scenario.model;
    let n = model.n_nodes;
    let m = model.n_edges();
    let z = crate::controller::compute_z(&sol.pg, &sol.pl, &scenario.p, &sol.phi_t, model);

    let mut stationarity = 0.0f64;
    for j in 0..n {
        let g_pg = model.alpha[j] * sol.pg[j] + z[j] + sol.lambda[j] + sol.mu[j];
        let proj = (sol.pg[j] - g_pg).clamp(model.pg_lo[j], model.pg_hi[j]);
        stationarity = stationarity.max((sol.pg[j] - proj).abs());
        let g_pl = model.beta[j] * sol.pl[j] - z[j] - sol.lambda[j] - sol.mu[j];
        let proj = (sol.pl[j] - g_pl).clamp(model.pl_lo[j], model.pl_hi[j]);
        stationarity = stationarity.max((sol.pl[j] - proj).abs());
        let g_om = model.d_damping[j] * (sol.omega[j] - sol.mu[j]);
        stationarity = stationarity.max(g_om.abs());
    }
    // θr block: −(CBCᵀ)ᵀμ; φr block: −(CBCᵀ)ᵀ(λ+z) + Cᵀᵀ(η⁺−η⁻), reduced to
    // non-reference nodes via Cᵀ structure.
    let mu_edge = model.edge_differences(&sol.mu);
    let lamz: Vec<f64> = (0..n).map(|j| sol.lambda[j] + z[j]).collect();
    let lamz_edge = model.edge_differences(&lamz);
    let mut g_theta = vec![0.0; n];
    let mut g_phi = vec![0.0; n];
    for (e, &(i, j)) in model.edges.iter().enumerate() {
        let t = -model.b[e] * mu_edge[e];
        g_theta[i] += t;
        g_theta[j] -= t;
        let f = -model.b[e] * lamz_edge[e] + (sol.eta_p[e] - sol.eta_m[e]);
        g_phi[i] += f;
        g_phi[j] -= f;
    }
    for j in 1..n {
        stationarity = stationarity.max(g_theta[j].abs()).max(g_phi[j].abs());
    }

    let mut primal = 0.0f64;
    let line_inj = model.hat_u(&sol.theta_t);
    let hat_u_phi = model.hat_u(&sol.phi_t);
    for j in 0..n {
        let r5a = sol.pg[j]
            - sol.pl[j]
            - scenario.p[j]
            - model.d_damping[j] * sol.omega[j]
            - line_inj[j];
        let r5b = sol.pg[j] - sol.pl[j] - scenario.p[j] - hat_u_phi[j];
        primal = primal.max(r5a.abs()).max(r5b.abs());
        primal = primal
            .max(model.pg_lo[j] - sol.pg[j])
            .max(sol.pg[j] - model.pg_hi[j])
            .max(model.pl_lo[j] - sol.pl[j])
            .max(sol.pl[j] - model.pl_hi[j]);
    }
    for e in 0..m {
        primal = primal
            .max(model.theta_lo[e] - sol.phi_t[e])
            .max(sol.phi_t[e] - model.theta_hi[e]);
    }

    let mut dual = 0.0f64;
    let mut compl = 0.0f64;
    for e in 0..m {
        dual = dual.max(-sol.eta_p[e]).max(-sol.eta_m[e]);
        compl = compl
            .max((sol.eta_p[e] * (sol.phi_t[e] - model.theta_hi[e])).abs())
            .max((sol.eta_m[e] * (model.theta_lo[e] - sol.phi_t[e])).abs());
    }

    KktReport {
        stationarity,
        primal_feas: primal.max(0.0),
        dual_feas: dual.max(0.0),
        complementarity: compl,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DiffReport {
    /// max |ωⱼ| at the simulated equilibrium (Theorem: frequency restored).
    pub omega_abs_max: f64,
    /// per-block gaps, simulator vs oracle.
    pub pg_gap: f64,
    pub pl_gap: f64,
    pub lambda_gap: f64,
    pub flow_gap: f64,
    /// max |θ̃* − φ̃*| (oracle / simulator).
    pub theta_phi_gap_oracle: f64,
    pub theta_phi_gap_sim: f64,
    /// |Σⱼ(Pᵍ* − Pˡ* − pⱼ)| at the oracle optimum (Eq. 4 network balance).
    pub balance_residual: f64,
    /// equilibrium flows (oracle), MW deviations.
    pub flows: Vec<f64>,
    pub line_limits_ok: bool,
}

pub fn compare_equilibrium(
    sim_eq: &[f64],
    sol: &NboSolution,
    scenario: &Scenario,
) -> DiffReport {
    let model = &scenario.model;
    let l = crate::sim::StateLayout::of(model);
    let max_gap = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()))
    };
    let sim_theta = &sim_eq[l.theta_t()];
    let sim_phi = &sim_eq[l.phi_t()];
    let sim_flows = crate::plant::tie_line_flows(sim_theta, model);
    let oracle_flows = crate::plant::tie_line_flows(&sol.theta_t, model);
    let balance: f64 = (0..model.n_nodes)
        .map(|j| sol.pg[j] - sol.pl[j] - scenario.p[j])
        .sum();
    let line_ok = oracle_flows.iter().enumerate().all(|(e, f)| {
        *f >= model.theta_lo[e] * model.b[e] - 1e-6 && *f <= model.theta_hi[e] * model.b[e] + 1e-6
    });
    DiffReport {
        omega_abs_max: sim_eq[l.omega()]
            .iter()
            .fold(0.0f64, |a, &x| a.max(x.abs())),
        pg_gap: max_gap(&sim_eq[l.pg()], &sol.pg),
        pl_gap: max_gap(&sim_eq[l.pl()], &sol.pl),
        lambda_gap: max_gap(&sim_eq[l.lambda()], &sol.lambda),
        flow_gap: max_gap(&sim_flows, &oracle_flows),
        theta_phi_gap_oracle: max_gap(&sol.theta_t, &sol.phi_t),
        theta_phi_gap_sim: max_gap(sim_theta, sim_phi),
        balance_residual: balance.abs(),
        flows: oracle_flows,
        line_limits_ok: line_ok,
    }
}
