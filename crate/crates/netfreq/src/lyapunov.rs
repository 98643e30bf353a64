//! Stability machinery: σ± sets, the canonical field F(w), the projection
//! H(w), the gain matrix Γ₂, the Lyapunov function V₂, and the Q matrix —
//! plus trajectory audits of the monotonicity and PSD claims.
//!
//! Everything uses the canonical ordering w = (θ̃, ω, Pᵍ, Pˡ, η⁺, η⁻, λ, φ̃);
//! the closed loop satisfies ẇ = Γ₂(H(w) − w).

use crate::model::Scenario;
use crate::nbo::NboSolution;
use crate::sim::{StateLayout, Trajectory};
use nalgebra::DMatrix;
use serde::Serialize;

/// Edges whose η-multiplier sits at 0 while the constraint is strictly slack
/// (the projection gate is closed there).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct SigmaSets {
    pub sigma_p: Vec<bool>,
    pub sigma_m: Vec<bool>,
}

impl SigmaSets {
    pub fn empty(m: usize) -> Self {
        SigmaSets {
            sigma_p: vec![false; m],
            sigma_m: vec![false; m],
        }
    }
    pub fn full(m: usize) -> Self {
        SigmaSets {
            sigma_p: vec![true; m],
            sigma_m: vec![true; m],
        }
    }
}

pub fn sigma_sets(w: &[f64], scenario: &Scenario) -> SigmaSets {
    let model = &scenario.model;
    let l = StateLayout::of(model);
    let m = l.m;
    let mut s = SigmaSets::empty(m);
    for e in 0..m {
        let eta_p = w[l.eta_p()][e];
        let eta_m = w[l.eta_m()][e];
        let phi = w[l.phi_t()][e];
        s.sigma_p[e] = eta_p <= 0.0 && phi - model.theta_hi[e] < 0.0;
        s.sigma_m[e] = eta_m <= 0.0 && model.theta_lo[e] - phi < 0.0;
    }
    s
}

/// Diagonal of Γ₂ = diag(B^{−1/2}, M^{−1/2}, (Tᵍ)⁻¹, (Tˡ)⁻¹, (Γ^η)^{1/2},
/// (Γ^η)^{1/2}, (Γ^λ)^{1/2}, (Γ^φ̃)^{1/2}).
pub fn gamma2(scenario: &Scenario) -> Vec<f64> {
    let model = &scenario.model;
    let l = StateLayout::of(model);
    let mut g = vec![0.0; l.dim()];
    for (e, i) in l.theta_t().enumerate() {
        g[i] = model.b[e].powf(-0.5);
    }
    for (j, i) in l.omega().enumerate() {
        g[i] = model.m_inertia[j].powf(-0.5);
    }
    for (j, i) in l.pg().enumerate() {
        g[i] = 1.0 / model.t_gen[j];
    }
    for (j, i) in l.pl().enumerate() {
        g[i] = 1.0 / model.t_load[j];
    }
    for (e, i) in l.eta_p().enumerate() {
        g[i] = scenario.gains.eta[e].sqrt();
    }
    for (e, i) in l.eta_m().enumerate() {
        g[i] = scenario.gains.eta[e].sqrt();
    }
    for (j, i) in l.lambda().enumerate() {
        g[i] = scenario.gains.lambda[j].sqrt();
    }
    for (e, i) in l.phi_t().enumerate() {
        g[i] = scenario.gains.phi[e].sqrt();
    }
    g
}

/// The 8-block field F(w) with state-dependent projection gates.
pub fn field_f(w: &[f64], scenario: &Scenario) -> Vec<f64> {
    let gates = sigma_sets(w, scenario);
    field_f_fixed_sigma(w, &gates, scenario)
}

/// F(w) on the smooth piece selected by σ±: gated η-blocks are identically 0
/// on σ edges and fully open elsewhere.
pub fn field_f_fixed_sigma(w: &[f64], sigma: &SigmaSets, scenario: &Scenario) -> Vec<f64> {
    let model = &scenario.model;
    let l = StateLayout::of(model);
    let mut f = vec![0.0; l.dim()];
    let omega = &w[l.omega()];
    let pg = &w[l.pg()];
    let pl = &w[l.pl()];
    let lambda = &w[l.lambda()];
    let phi = &w[l.phi_t()];
    let theta = &w[l.theta_t()];
    let z = crate::controller::compute_z(pg, pl, &scenario.p, phi, model);

    let omega_diff = model.edge_differences(omega);
    for (e, i) in l.theta_t().enumerate() {
        f[i] = -model.b[e].sqrt() * omega_diff[e];
    }
    let line_inj = model.hat_u(theta);
    for (j, i) in l.omega().enumerate() {
        f[i] = -(pg[j] - pl[j] - scenario.p[j] - model.d_damping[j] * omega[j] - line_inj[j])
            / model.m_inertia[j].sqrt();
    }
    for (j, i) in l.pg().enumerate() {
        f[i] = (model.alpha[j] * pg[j] + omega[j] + z[j] + lambda[j]) / model.t_gen[j];
    }
    for (j, i) in l.pl().enumerate() {
        f[i] = (model.beta[j] * pl[j] - omega[j] - z[j] - lambda[j]) / model.t_load[j];
    }
    for (e, i) in l.eta_p().enumerate() {
        f[i] = if sigma.sigma_p[e] {
            0.0
        } else {
            -scenario.gains.eta[e].sqrt() * (phi[e] - model.theta_hi[e])
        };
    }
    for (e, i) in l.eta_m().enumerate() {
        f[i] = if sigma.sigma_m[e] {
            0.0
        } else {
            -scenario.gains.eta[e].sqrt() * (model.theta_lo[e] - phi[e])
        };
    }
    for (j, i) in l.lambda().enumerate() {
        f[i] = -scenario.gains.lambda[j].sqrt() * z[j];
    }
    let lamz: Vec<f64> = (0..l.n).map(|j| lambda[j] + z[j]).collect();
    let lamz_diff = model.edge_differences(&lamz);
    let eta_p = &w[l.eta_p()];
    let eta_m = &w[l.eta_m()];
    for (e, i) in l.phi_t().enumerate() {
        f[i] = -scenario.gains.phi[e].sqrt()
            * (model.b[e] * lamz_diff[e] + eta_m[e] - eta_p[e]);
    }
    f
}

/// H(w) = Proj_S(w − F(w)); S clamps only the (Pᵍ, Pˡ) blocks.
pub fn project_h(w: &[f64], scenario: &Scenario) -> Vec<f64> {
    let model = &scenario.model;
    let l = StateLayout::of(model);
    let f = field_f(w, scenario);
    let mut h: Vec<f64> = w.iter().zip(&f).map(|(a, b)| a - b).collect();
    for (j, i) in l.pg().enumerate() {
        h[i] = h[i].clamp(model.pg_lo[j], model.pg_hi[j]);
    }
    for (j, i) in l.pl().enumerate() {
        h[i] = h[i].clamp(model.pl_lo[j], model.pl_hi[j]);
    }
    h
}

#[derive(Debug, Clone)]
pub struct LyapunovConfig {
    pub k: f64,
    pub w_star: Vec<f64>,
    pub gamma2: Vec<f64>,
}

impl LyapunovConfig {
    /// k = 0.5·min(diag Γ₂²) keeps Γ₂ − kΓ₂⁻¹ positive definite.
    pub fn new(scenario: &Scenario, w_star: Vec<f64>) -> Self {
        let g = gamma2(scenario);
        let k = 0.5 * g.iter().fold(f64::INFINITY, |a, &x| a.min(x * x));
        LyapunovConfig {
            k,
            w_star,
            gamma2: g,
        }
    }
}

/// Reference equilibrium in canonical coordinates, built from the oracle.
pub fn w_star_from_solution(sol: &NboSolution, scenario: &Scenario) -> Vec<f64> {
    let l = StateLayout::of(&scenario.model);
    let x = crate::plant::PlantState {
        theta_t: sol.theta_t.clone(),
        omega: sol.omega.clone(),
        pg: sol.pg.clone(),
        pl: sol.pl.clone(),
    };
    let c = crate::controller::ControllerState {
        lambda: sol.lambda.clone(),
        eta_p: sol.eta_p.clone(),
        eta_m: sol.eta_m.clone(),
        phi_t: sol.phi_t.clone(),
    };
    crate::sim::pack(&x, &c, l)
}

/// V₂(w) = −(H−w)ᵀF − ½‖H−w‖² + ½k(w−w*)ᵀΓ₂⁻²(w−w*) ≥ 0 on S.
pub fn lyapunov_value(w: &[f64], cfg: &LyapunovConfig, scenario: &Scenario) -> f64 {
    let f = field_f(w, scenario);
    let h = project_h(w, scenario);
    let mut v = 0.0;
    for i in 0..w.len() {
        let d = h[i] - w[i];
        v += -d * f[i] - 0.5 * d * d;
        let e = w[i] - cfg.w_star[i];
        v += 0.5 * cfg.k * e * e / (cfg.gamma2[i] * cfg.gamma2[i]);
    }
    v
}

/// Q in canonical ordering for fixed σ±, satisfying Γ₂Q = ∇F on the piece
/// (up to the restricted η↔φ̃ identity blocks, which the printed form zeroes
/// on σ edges).
pub fn q_matrix(sigma: &SigmaSets, scenario: &Scenario) -> DMatrix<f64> {
    let model = &scenario.model;
    let l = StateLayout::of(model);
    let (n, m) = (l.n, l.m);
    let dim = l.dim();
    let mut q = DMatrix::zeros(dim, dim);
    let c = model.build_incidence();
    // cb[(j, e)] = C_{j,e}·B_e
    let cb = |j: usize, e: usize| c[(j, e)] * model.b[e];

    let ot = l.theta_t().start;
    let oo = l.omega().start;
    let og = l.pg().start;
    let ol = l.pl().start;
    let oep = l.eta_p().start;
    let oem = l.eta_m().start;
    let ola = l.lambda().start;
    let oph = l.phi_t().start;

    for e in 0..m {
        for j in 0..n {
            // θ̃ row: −BCᵀω
            q[(ot + e, oo + j)] = -cb(j, e);
            // ω row: CBθ̃
            q[(oo + j, ot + e)] = cb(j, e);
            // Pg row: −CBφ̃ (through z); Pl row: +CBφ̃
            q[(og + j, oph + e)] = -cb(j, e);
            q[(ol + j, oph + e)] = cb(j, e);
            // λ row: +CBφ̃
            q[(ola + j, oph + e)] = cb(j, e);
            // φ̃ row: −BCᵀPg, +BCᵀPl, −BCᵀλ
            q[(oph + e, og + j)] = -cb(j, e);
            q[(oph + e, ol + j)] = cb(j, e);
            q[(oph + e, ola + j)] = -cb(j, e);
        }
        // φ̃ row, φ̃ col: BCᵀCB
        for e2 in 0..m {
            let mut acc = 0.0;
            for j in 0..n {
                acc += cb(j, e) * cb(j, e2);
            }
            q[(oph + e, oph + e2)] = acc;
        }
        // restricted identity blocks between η and φ̃
        if !sigma.sigma_p[e] {
            q[(oep + e, oph + e)] = -1.0;
            q[(oph + e, oep + e)] = 1.0;
        }
        if !sigma.sigma_m[e] {
            q[(oem + e, oph + e)] = 1.0;
            q[(oph + e, oem + e)] = -1.0;
        }
    }
    for j in 0..n {
        q[(oo + j, oo + j)] = model.d_damping[j];
        q[(oo + j, og + j)] = -1.0;
        q[(oo + j, ol + j)] = 1.0;
        q[(og + j, oo + j)] = 1.0;
        q[(og + j, og + j)] = model.alpha[j] + 1.0;
        q[(og + j, ol + j)] = -1.0;
        q[(og + j, ola + j)] = 1.0;
        q[(ol + j, oo + j)] = -1.0;
        q[(ol + j, og + j)] = -1.0;
        q[(ol + j, ol + j)] = model.beta[j] + 1.0;
        q[(ol + j, ola + j)] = -1.0;
        q[(ola + j, og + j)] = -1.0;
        q[(ola + j, ol + j)] = 1.0;
    }
    q
}

/// Min eigenvalue of the symmetric part (Q + Qᵀ)/2.
pub fn q_min_eigenvalue(q: &DMatrix<f64>) -> f64 {
    let sym = (q + q.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);
    eig.eigenvalues.iter().fold(f64::INFINITY, |a, &x| a.min(x))
}

/// Compare Γ₂Q against a central-difference Jacobian of the fixed-σ field at
/// a random state consistent with σ. Entries (φ̃-row, η_σ-column) are skipped:
/// the printed Q zeroes them while the smooth piece keeps the ±I coupling.
pub fn q_jacobian_gap(sigma: &SigmaSets, scenario: &Scenario, seed: u64) -> f64 {
    use rand::{Rng, SeedableRng};
    let model = &scenario.model;
    let l = StateLayout::of(model);
    let dim = l.dim();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut w = vec![0.0; dim];
    for (e, i) in l.theta_t().enumerate() {
        let span = (model.theta_hi[e] - model.theta_lo[e]).min(1.0);
        w[i] = rng.gen_range(-0.2..0.2) * span;
    }
    for i in l.omega() {
        w[i] = rng.gen_range(-0.5..0.5);
    }
    for (j, i) in l.pg().enumerate() {
        w[i] = rng.gen_range(0.4 * model.pg_lo[j]..0.4 * model.pg_hi[j]);
    }
    for (j, i) in l.pl().enumerate() {
        w[i] = rng.gen_range(0.4 * model.pl_lo[j]..0.4 * model.pl_hi[j]);
    }
    for i in l.lambda() {
        w[i] = rng.gen_range(-50.0..50.0);
    }
    // η and φ̃ consistent with σ: σ edges hold η = 0 with strict slack; others
    // keep η > 0 so the gate stays open under perturbation.
    for e in 0..l.m {
        let span = (model.theta_hi[e] - model.theta_lo[e]).min(1.0);
        let mid = 0.5 * (model.theta_hi[e] + model.theta_lo[e]);
        let i_phi = l.phi_t().start + e;
        if sigma.sigma_p[e] || sigma.sigma_m[e] {
            w[i_phi] = mid; // strictly slack on both sides
        } else {
            w[i_phi] = mid + rng.gen_range(-0.2..0.2) * span;
        }
        w[l.eta_p().start + e] = if sigma.sigma_p[e] {
            0.0
        } else {
            rng.gen_range(1.0..5.0)
        };
        w[l.eta_m().start + e] = if sigma.sigma_m[e] {
            0.0
        } else {
            rng.gen_range(1.0..5.0)
        };
    }

    let h = 1e-6;
    let q = q_matrix(sigma, scenario);
    let g2 = gamma2(scenario);
    let mut gap = 0.0f64;
    for col in 0..dim {
        let mut wp = w.clone();
        let mut wm = w.clone();
        wp[col] += h;
        wm[col] -= h;
        let fp = field_f_fixed_sigma(&wp, sigma, scenario);
        let fm = field_f_fixed_sigma(&wm, sigma, scenario);
        for row in 0..dim {
            let in_eta_col = (l.eta_p().contains(&col)
                && sigma.sigma_p[col - l.eta_p().start])
                || (l.eta_m().contains(&col) && sigma.sigma_m[col - l.eta_m().start]);
            if l.phi_t().contains(&row) && in_eta_col {
                continue;
            }
            let jac = (fp[row] - fm[row]) / (2.0 * h);
            gap = gap.max((g2[row] * q[(row, col)] - jac).abs());
        }
    }
    gap
}

#[derive(Debug, Clone, Serialize)]
pub struct V2Violation {
    pub t_prev: f64,
    pub t: f64,
    pub v_prev: f64,
    pub v: f64,
    pub at_switch: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotonicityReport {
    pub violations: Vec<V2Violation>,
    pub switch_times: Vec<f64>,
    pub v2_first: f64,
    pub v2_final: f64,
    pub v2_min: f64,
    /// true iff on the trailing segment with V̇₂ ≈ 0 the (ω, Pᵍ, Pˡ) blocks of
    /// the closed-loop field stay below eq_tol (invariant-set diagnostic).
    pub invariant_set_ok: bool,
}

/// Fill `traj.v2` with V₂ along the trajectory.
pub fn evaluate_v2(traj: &mut Trajectory, cfg: &LyapunovConfig, scenario: &Scenario) {
    traj.v2 = traj
        .states
        .iter()
        .map(|w| lyapunov_value(w, cfg, scenario))
        .collect();
}

pub fn monotonicity_audit(
    traj: &Trajectory,
    cfg: &LyapunovConfig,
    scenario: &Scenario,
) -> MonotonicityReport {
    let vals: Vec<f64> = traj
        .states
        .iter()
        .map(|w| lyapunov_value(w, cfg, scenario))
        .collect();
    let sigs: Vec<SigmaSets> = traj
        .states
        .iter()
        .map(|w| sigma_sets(w, scenario))
        .collect();
    let mut violations = Vec::new();
    let mut switch_times = Vec::new();
    for i in 1..vals.len() {
        let switched = sigs[i] != sigs[i - 1];
        if switched {
            switch_times.push(traj.times[i]);
        }
        let tol = if switched {
            1e-9 * vals[i - 1].abs().max(1.0)
        } else {
            1e-6 * vals[i - 1].abs().max(1.0)
        };
        if vals[i] > vals[i - 1] + tol {
            violations.push(V2Violation {
                t_prev: traj.times[i - 1],
                t: traj.times[i],
                v_prev: vals[i - 1],
                v: vals[i],
                at_switch: switched,
            });
        }
    }
    // invariant-set diagnostic on the trailing 5% where V̇₂ ≈ 0
    let t_end = *traj.times.last().unwrap_or(&0.0);
    let mut invariant_ok = true;
    for i in 1..vals.len() {
        if traj.times[i] < 0.95 * t_end {
            continue;
        }
        let dt = traj.times[i] - traj.times[i - 1];
        let vdot = (vals[i] - vals[i - 1]) / dt.max(1e-12);
        if vdot.abs() < 1e-8 * vals[i].abs().max(1.0) {
            let rhs = crate::sim::closed_loop_rhs(&traj.states[i], scenario);
            let l = traj.layout;
            let blocks = rhs[l.omega()]
                .iter()
                .chain(&rhs[l.pg()])
                .chain(&rhs[l.pl()])
                .fold(0.0f64, |a, &x| a.max(x.abs()));
            if blocks >= scenario.eq_tol {
                invariant_ok = false;
            }
        }
    }
    MonotonicityReport {
        violations,
        switch_times,
        v2_first: *vals.first().unwrap_or(&f64::NAN),
        v2_final: *vals.last().unwrap_or(&f64::NAN),
        v2_min: vals.iter().fold(f64::INFINITY, |a, &x| a.min(x)),
        invariant_set_ok: invariant_ok,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::load_scenario;
    use crate::nbo::{assemble_nbo, solve_nbo};

    fn scenario(name: &str) -> Scenario {
        load_scenario(format!(
            "{}/scenarios/{name}.json",
            env!("CARGO_MANIFEST_DIR")
        ))
        .unwrap()
    }

    #[test]
    fn gamma2_identity_when_all_parameters_one() {
        let mut s = scenario("fourarea_nominal");
        let n = 4;
        s.model.b = vec![1.0; 4];
        s.model.m_inertia = vec![1.0; n];
        s.model.t_gen = vec![1.0; n];
        s.model.t_load = vec![1.0; n];
        s.gains.eta = vec![1.0; 4];
        s.gains.lambda = vec![1.0; n];
        s.gains.phi = vec![1.0; 4];
        assert!(gamma2(&s).iter().all(|&g| (g - 1.0).abs() < 1e-15));
    }

    #[test]
    fn field_zero_at_origin_without_disturbance() {
        let mut s = scenario("fourarea_nominal");
        s.p = vec![0.0; 4];
        let w = vec![0.0; 32];
        assert!(field_f(&w, &s).iter().all(|&v| v == 0.0));
        let h = project_h(&w, &s);
        assert!(h.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn canonical_field_matches_closed_loop_rhs() {
        // ẇ = Γ₂(H(w) − w) must equal the plant+controller field exactly when
        // γᵍ = 1/Tᵍ and γˡ = 1/Tˡ (as in the bundled scenarios).
        use rand::{Rng, SeedableRng};
        let s = scenario("fourarea_congestion");
        let l = StateLayout::of(&s.model);
        let g2 = gamma2(&s);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let mut w = vec![0.0; 32];
            for i in 0..32 {
                w[i] = rng.gen_range(-0.5..0.5);
            }
            for (j, i) in l.pg().enumerate() {
                w[i] = rng.gen_range(0.9 * s.model.pg_lo[j]..0.9 * s.model.pg_hi[j]);
            }
            for (j, i) in l.pl().enumerate() {
                w[i] = rng.gen_range(0.9 * s.model.pl_lo[j]..0.9 * s.model.pl_hi[j]);
            }
            for i in l.eta_p().chain(l.eta_m()) {
                w[i] = w[i].abs();
            }
            let h = project_h(&w, &s);
            let canonical: Vec<f64> = (0..32).map(|i| g2[i] * (h[i] - w[i])).collect();
            let direct = crate::sim::closed_loop_rhs(&w, &s);
            for i in 0..32 {
                assert!(
                    (canonical[i] - direct[i]).abs() < 1e-10 * direct[i].abs().max(1.0),
                    "component {i}: {} vs {}",
                    canonical[i],
                    direct[i]
                );
            }
        }
    }

    #[test]
    fn v2_zero_at_equilibrium_and_quadratic_reduction() {
        let s = scenario("fourarea_nominal");
        let sol = solve_nbo(&assemble_nbo(&s)).unwrap();
        let w_star = w_star_from_solution(&sol, &s);
        let cfg = LyapunovConfig::new(&s, w_star.clone());
        let v = lyapunov_value(&w_star, &cfg, &s);
        assert!(v.abs() < 1e-8, "V2(w*) = {v}");
        // H(w*) = w* and the fixed point of one simulator step
        let h = project_h(&w_star, &s);
        for i in 0..32 {
            assert!((h[i] - w_star[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn q_psd_for_extreme_sigma() {
        let s = scenario("fourarea_nominal");
        for sigma in [SigmaSets::empty(4), SigmaSets::full(4)] {
            let q = q_matrix(&sigma, &s);
            let min_eig = q_min_eigenvalue(&q);
            assert!(min_eig >= -1e-9, "min eig {min_eig}");
        }
    }

    #[test]
    fn q_quadratic_form_identity_empty_sigma() {
        // wᵀQw = ωᵀDω + PᵍᵀAᵍPᵍ + PˡᵀAˡPˡ + ‖CBφ̃ − Pᵍ + Pˡ‖²
        use rand::{Rng, SeedableRng};
        let s = scenario("fourarea_nominal");
        let l = StateLayout::of(&s.model);
        let q = q_matrix(&SigmaSets::empty(4), &s);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let w: Vec<f64> = (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let wv = nalgebra::DVector::from_column_slice(&w);
            let quad = (wv.transpose() * &q * &wv)[(0, 0)];
            let model = &s.model;
            let mut expect = 0.0;
            for j in 0..4 {
                expect += model.d_damping[j] * w[l.omega().start + j].powi(2)
                    + model.alpha[j] * w[l.pg().start + j].powi(2)
                    + model.beta[j] * w[l.pl().start + j].powi(2);
            }
            let phi = &w[l.phi_t()];
            let cbphi = model.hat_u(phi);
            for j in 0..4 {
                expect += (cbphi[j] - w[l.pg().start + j] + w[l.pl().start + j]).powi(2);
            }
            assert!((quad - expect).abs() < 1e-9 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn q_matches_fd_jacobian() {
        let s = scenario("fourarea_nominal");
        for (seed, sigma) in [
            (1, SigmaSets::empty(4)),
            (2, SigmaSets::full(4)),
            (3, {
                let mut s4 = SigmaSets::empty(4);
                s4.sigma_p[2] = true;
                s4.sigma_m[3] = true;
                s4
            }),
        ] {
            let gap = q_jacobian_gap(&sigma, &s, seed);
            assert!(gap < 1e-6, "gap {gap} for sigma {sigma:?}");
        }
    }
}
