//! Distributed primal-dual controller: multiplier dynamics, virtual angles,
//! and saturated control laws.

use crate::model::{Gains, NetworkModel};
use crate::plant::PlantState;

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    /// Per-node multiplier for the virtual power balance.
    pub lambda: Vec<f64>,
    /// Per-edge multipliers for the upper / lower line limits, both ≥ 0.
    pub eta_p: Vec<f64>,
    pub eta_m: Vec<f64>,
    /// Per-edge virtual angle differences φ̃, rad.
    pub phi_t: Vec<f64>,
}

impl ControllerState {
    pub fn zeros(model: &NetworkModel) -> Self {
        ControllerState {
            lambda: vec![0.0; model.n_nodes],
            eta_p: vec![0.0; model.n_edges()],
            eta_m: vec![0.0; model.n_edges()],
            phi_t: vec![0.0; model.n_edges()],
        }
    }
}

/// Gated projection [x]⁺ₐ: passes x when the gate is open (a > 0) or x > 0,
/// returns 0 otherwise. Keeps a ≥ 0 invariant under ȧ = [x]⁺ₐ.
pub fn positive_projection(x: f64, a: f64) -> f64 {
    if a > 0.0 || x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Componentwise clamp [x]ʰⁱ_lo.
pub fn saturate(x: f64, lo: f64, hi: f64) -> f64 {
    assert!(lo <= hi, "saturate: lo {lo} > hi {hi}");
    x.clamp(lo, hi)
}

/// z = Pᵍ − Pˡ − p − Û(φ̃) per node, with Û = CBφ̃.
pub fn compute_z(pg: &[f64], pl: &[f64], p: &[f64], phi_t: &[f64], model: &NetworkModel) -> Vec<f64> {
    let hat_u = model.hat_u(phi_t);
    (0..model.n_nodes)
        .map(|j| pg[j] - pl[j] - p[j] - hat_u[j])
        .collect()
}

/// z reconstructed from measurements instead of the load disturbance:
/// zⱼ = Mⱼω̇ⱼ + Dⱼωⱼ − (net tie-line inflow)ⱼ − Ûⱼ(φ̃).
///
/// `flows` are the per-edge line flows Bθ̃; the net inflow at node j is
/// Σ_in − Σ_out = −(C·flow)ⱼ. Identical to `compute_z` whenever Mω̇ comes
/// from the swing equation.
pub fn estimate_z_measured(
    m_omega_dot: &[f64],
    omega: &[f64],
    flows: &[f64],
    phi_t: &[f64],
    model: &NetworkModel,
) -> Vec<f64> {
    let net_out = model.accumulate_nodes(flows); // (C·flow)ⱼ = Σ_out − Σ_in
    let hat_u = model.hat_u(phi_t);
    (0..model.n_nodes)
        .map(|j| m_omega_dot[j] + model.d_damping[j] * omega[j] + net_out[j] - hat_u[j])
        .collect()
}

/// Time derivative of the controller state (Eq. 7a–7d).
pub fn controller_rhs(
    c: &ControllerState,
    x: &PlantState,
    p: &[f64],
    model: &NetworkModel,
    gains: &Gains,
) -> ControllerState {
    let m = model.n_edges();
    assert!(
        c.eta_p.iter().chain(&c.eta_m).all(|&e| e >= 0.0),
        "negative eta input"
    );
    let z = compute_z(&x.pg, &x.pl, p, &c.phi_t, model);
    let lambda_dot: Vec<f64> = (0..model.n_nodes).map(|j| gains.lambda[j] * z[j]).collect();

    let mut eta_p_dot = vec![0.0; m];
    let mut eta_m_dot = vec![0.0; m];
    for e in 0..m {
        eta_p_dot[e] =
            gains.eta[e] * positive_projection(c.phi_t[e] - model.theta_hi[e], c.eta_p[e]);
        eta_m_dot[e] =
            gains.eta[e] * positive_projection(model.theta_lo[e] - c.phi_t[e], c.eta_m[e]);
    }

    // φ̃̇ = Γ^φ̃ (BCᵀ(λ+z) + η⁻ − η⁺)
    let lam_z: Vec<f64> = (0..model.n_nodes).map(|j| c.lambda[j] + z[j]).collect();
    let diffs = model.edge_differences(&lam_z);
    let phi_dot: Vec<f64> = (0..m)
        .map(|e| gains.phi[e] * (model.b[e] * diffs[e] + c.eta_m[e] - c.eta_p[e]))
        .collect();

    ControllerState {
        lambda: lambda_dot,
        eta_p: eta_p_dot,
        eta_m: eta_m_dot,
        phi_t: phi_dot,
    }
}

/// Saturated control laws (Eq. 7e–7f). The droop term ω/R sits outside the
/// generation bracket.
pub fn control_inputs(
    c: &ControllerState,
    x: &PlantState,
    p: &[f64],
    model: &NetworkModel,
    gains: &Gains,
) -> (Vec<f64>, Vec<f64>) {
    let z = compute_z(&x.pg, &x.pl, p, &c.phi_t, model);
    let n = model.n_nodes;
    let mut ug = vec![0.0; n];
    let mut ul = vec![0.0; n];
    for j in 0..n {
        let grad_g = model.alpha[j] * x.pg[j] + x.omega[j] + z[j] + c.lambda[j];
        ug[j] = saturate(
            x.pg[j] - gains.gen[j] * grad_g,
            model.pg_lo[j],
            model.pg_hi[j],
        ) + x.omega[j] / model.r_droop[j];
        let grad_l = model.beta[j] * x.pl[j] - x.omega[j] - z[j] - c.lambda[j];
        ul[j] = saturate(
            x.pl[j] - gains.load[j] * grad_l,
            model.pl_lo[j],
            model.pl_hi[j],
        );
    }
    (ug, ul)
}
