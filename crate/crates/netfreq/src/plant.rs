//! Swing-equation plant dynamics in edge coordinates.
//!
//! θ̃̇ = Cᵀω;  Mω̇ = Pᵍ − Pˡ − p − Dω − CBθ̃;
//! Tᵍ Ṗᵍ = −Pᵍ + uᵍ − ω/R;  Tˡ Ṗˡ = −Pˡ + uˡ.

use crate::model::NetworkModel;

#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    /// Per-edge angle differences θ̃ = Cᵀθ, rad.
    pub theta_t: Vec<f64>,
    /// Per-node frequency deviation.
    pub omega: Vec<f64>,
    /// Per-node generation deviation, MW.
    pub pg: Vec<f64>,
    /// Per-node controllable-load deviation, MW.
    pub pl: Vec<f64>,
}

impl PlantState {
    pub fn zeros(model: &NetworkModel) -> Self {
        PlantState {
            theta_t: vec![0.0; model.n_edges()],
            omega: vec![0.0; model.n_nodes],
            pg: vec![0.0; model.n_nodes],
            pl: vec![0.0; model.n_nodes],
        }
    }
}

/// Per-edge flow Pᵢⱼ = Bᵢⱼ·θ̃ᵢⱼ (positive = source → sink).
pub fn tie_line_flows(theta_t: &[f64], model: &NetworkModel) -> Vec<f64> {
    theta_t.iter().zip(&model.b).map(|(t, b)| t * b).collect()
}

/// Time derivative of the plant state under controls (uᵍ, uˡ) and disturbance p.
pub fn plant_rhs(
    x: &PlantState,
    ug: &[f64],
    ul: &[f64],
    p: &[f64],
    model: &NetworkModel,
) -> PlantState {
    let n = model.n_nodes;
    let m = model.n_edges();
    assert_eq!(x.omega.len(), n, "omega dimension mismatch");
    assert_eq!(x.theta_t.len(), m, "theta_t dimension mismatch");
    assert_eq!(ug.len(), n, "ug dimension mismatch");
    assert_eq!(ul.len(), n, "ul dimension mismatch");
    assert_eq!(p.len(), n, "p dimension mismatch");

    let theta_dot = model.edge_differences(&x.omega);
    let line_inj = model.hat_u(&x.theta_t); // CBθ̃ per node
    let mut omega_dot = vec![0.0; n];
    let mut pg_dot = vec![0.0; n];
    let mut pl_dot = vec![0.0; n];
    for j in 0..n {
        omega_dot[j] = (x.pg[j] - x.pl[j] - p[j] - model.d_damping[j] * x.omega[j] - line_inj[j])
            / model.m_inertia[j];
        pg_dot[j] = (-x.pg[j] + ug[j] - x.omega[j] / model.r_droop[j]) / model.t_gen[j];
        pl_dot[j] = (-x.pl[j] + ul[j]) / model.t_load[j];
    }
    PlantState {
        theta_t: theta_dot,
        omega: omega_dot,
        pg: pg_dot,
        pl: pl_dot,
    }
}
