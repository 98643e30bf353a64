//! Closed-loop integration of plant + controller, trajectory recording,
//! equilibrium detection, and constraint monitoring.
//!
//! The canonical state vector is w = (θ̃, ω, Pᵍ, Pˡ, η⁺, η⁻, λ, φ̃); blocks are
//! laid out contiguously in that order.

use crate::controller::{control_inputs, controller_rhs, ControllerState};
use crate::model::{NetworkModel, Scenario};
use crate::plant::{plant_rhs, tie_line_flows, PlantState};
use std::io::Write;
use std::ops::Range;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("state diverged at step {step} (t = {t:.6} s): |w|inf = {norm:.3e}")]
    Diverged { step: usize, t: f64, norm: f64 },
    #[error("non-finite state at step {step} (t = {t:.6} s)")]
    NonFinite { step: usize, t: f64 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Block layout of the canonical state vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub n: usize,
    pub m: usize,
}

impl StateLayout {
    pub fn of(model: &NetworkModel) -> Self {
        StateLayout {
            n: model.n_nodes,
            m: model.n_edges(),
        }
    }
    pub fn dim(&self) -> usize {
        4 * self.m + 4 * self.n
    }
    pub fn theta_t(&self) -> Range<usize> {
        0..self.m
    }
    pub fn omega(&self) -> Range<usize> {
        self.m..self.m + self.n
    }
    pub fn pg(&self) -> Range<usize> {
        self.m + self.n..self.m + 2 * self.n
    }
    pub fn pl(&self) -> Range<usize> {
        self.m + 2 * self.n..self.m + 3 * self.n
    }
    pub fn eta_p(&self) -> Range<usize> {
        self.m + 3 * self.n..2 * self.m + 3 * self.n
    }
    pub fn eta_m(&self) -> Range<usize> {
        2 * self.m + 3 * self.n..3 * self.m + 3 * self.n
    }
    pub fn lambda(&self) -> Range<usize> {
        3 * self.m + 3 * self.n..3 * self.m + 4 * self.n
    }
    pub fn phi_t(&self) -> Range<usize> {
        3 * self.m + 4 * self.n..4 * self.m + 4 * self.n
    }
}

pub fn unpack(w: &[f64], l: StateLayout) -> (PlantState, ControllerState) {
    (
        PlantState {
            theta_t: w[l.theta_t()].to_vec(),
            omega: w[l.omega()].to_vec(),
            pg: w[l.pg()].to_vec(),
            pl: w[l.pl()].to_vec(),
        },
        ControllerState {
            lambda: w[l.lambda()].to_vec(),
            eta_p: w[l.eta_p()].to_vec(),
            eta_m: w[l.eta_m()].to_vec(),
            phi_t: w[l.phi_t()].to_vec(),
        },
    )
}

pub fn pack(x: &PlantState, c: &ControllerState, l: StateLayout) -> Vec<f64> {
    let mut w = vec![0.0; l.dim()];
    w[l.theta_t()].copy_from_slice(&x.theta_t);
    w[l.omega()].copy_from_slice(&x.omega);
    w[l.pg()].copy_from_slice(&x.pg);
    w[l.pl()].copy_from_slice(&x.pl);
    w[l.eta_p()].copy_from_slice(&c.eta_p);
    w[l.eta_m()].copy_from_slice(&c.eta_m);
    w[l.lambda()].copy_from_slice(&c.lambda);
    w[l.phi_t()].copy_from_slice(&c.phi_t);
    w
}

/// Combined closed-loop vector field (Eq. 1 under the control laws of Eq. 7).
///
/// Inside the RK4 stages η may dip below 0; the projection gates treat any
/// such value as a closed gate, matching [x]⁺ with η clamped at 0.
pub fn closed_loop_rhs(w: &[f64], scenario: &Scenario) -> Vec<f64> {
    let l = StateLayout::of(&scenario.model);
    let (mut x, mut c) = unpack(w, l);
    // Gate logic expects η ≥ 0; mid-stage excursions are equivalent to 0.
    for e in c.eta_p.iter_mut().chain(c.eta_m.iter_mut()) {
        if *e < 0.0 {
            *e = 0.0;
        }
    }
    let (ug, ul) = control_inputs(&c, &x, &scenario.p, &scenario.model, &scenario.gains);
    let dx = plant_rhs(&x, &ug, &ul, &scenario.p, &scenario.model);
    let dc = controller_rhs(&c, &x, &scenario.p, &scenario.model, &scenario.gains);
    // reuse the (x, c) buffers for the derivative
    x = dx;
    c = dc;
    pack(&x, &c, l)
}

fn clamp_state(w: &mut [f64], scenario: &Scenario) {
    let l = StateLayout::of(&scenario.model);
    let model = &scenario.model;
    for (k, i) in l.pg().enumerate() {
        w[i] = w[i].clamp(model.pg_lo[k], model.pg_hi[k]);
    }
    for (k, i) in l.pl().enumerate() {
        w[i] = w[i].clamp(model.pl_lo[k], model.pl_hi[k]);
    }
    for i in l.eta_p().chain(l.eta_m()) {
        if w[i] < 0.0 {
            w[i] = 0.0;
        }
    }
}

/// One RK4 step followed by the discrete safeguards (η ≥ 0, capacity box).
pub fn step(w: &[f64], scenario: &Scenario, dt: f64) -> Vec<f64> {
    let k1 = closed_loop_rhs(w, scenario);
    let mut tmp: Vec<f64> = w.iter().zip(&k1).map(|(a, b)| a + 0.5 * dt * b).collect();
    let k2 = closed_loop_rhs(&tmp, scenario);
    for i in 0..w.len() {
        tmp[i] = w[i] + 0.5 * dt * k2[i];
    }
    let k3 = closed_loop_rhs(&tmp, scenario);
    for i in 0..w.len() {
        tmp[i] = w[i] + dt * k3[i];
    }
    let k4 = closed_loop_rhs(&tmp, scenario);
    let mut out: Vec<f64> = (0..w.len())
        .map(|i| w[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    clamp_state(&mut out, scenario);
    out
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub layout: StateLayout,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// V₂ along the trajectory; NaN until a Lyapunov evaluation fills it in.
    pub v2: Vec<f64>,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least t = 0")
    }
}

/// Integrate the scenario from its x0 over the full horizon.
pub fn simulate(scenario: &Scenario) -> Result<Trajectory, SimError> {
    simulate_with(scenario, scenario.dt, scenario.horizon)
}

/// Integrate with overridden step / horizon (used by dt-robustness checks).
pub fn simulate_with(scenario: &Scenario, dt: f64, horizon: f64) -> Result<Trajectory, SimError> {
    let layout = StateLayout::of(&scenario.model);
    let nsteps = (horizon / dt).round() as usize;
    let mut w = scenario.x0.clone();
    clamp_state(&mut w, scenario);
    let mut times = Vec::with_capacity(nsteps / scenario.record_every + 2);
    let mut states = Vec::with_capacity(times.capacity());
    times.push(0.0);
    states.push(w.clone());
    for k in 0..nsteps {
        w = step(&w, scenario, dt);
        let t = (k + 1) as f64 * dt;
        if w.iter().any(|x| !x.is_finite()) {
            return Err(SimError::NonFinite { step: k + 1, t });
        }
        let norm = w.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        if norm > scenario.max_norm {
            return Err(SimError::Diverged {
                step: k + 1,
                t,
                norm,
            });
        }
        if (k + 1) % scenario.record_every == 0 || k + 1 == nsteps {
            times.push(t);
            states.push(w.clone());
        }
    }
    let v2 = vec![f64::NAN; times.len()];
    Ok(Trajectory {
        layout,
        times,
        states,
        v2,
    })
}

/// Norm of the closed-loop field at w (the equilibrium-detection residual).
pub fn field_norm(w: &[f64], scenario: &Scenario) -> f64 {
    closed_loop_rhs(w, scenario)
        .iter()
        .fold(0.0f64, |a, &x| a.max(x.abs()))
}

/// Returns the final state iff the field norm stays below `eq_tol` over the
/// trailing 5% of the horizon.
pub fn detect_equilibrium(traj: &Trajectory, scenario: &Scenario, eq_tol: f64) -> Option<Vec<f64>> {
    let t_end = *traj.times.last()?;
    let t_tail = t_end - 0.05 * t_end;
    let mut any = false;
    for (t, w) in traj.times.iter().zip(&traj.states) {
        if *t >= t_tail {
            any = true;
            if field_norm(w, scenario) >= eq_tol {
                return None;
            }
        }
    }
    if any && t_end > 0.0 {
        Some(traj.last().to_vec())
    } else {
        None
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ConstraintReport {
    pub capacity_ok_all_t: bool,
    pub max_box_violation: f64,
    /// None when no equilibrium was detected.
    pub line_limit_ok_at_eq: Option<bool>,
    pub max_line_excess_transient: f64,
    /// max over samples of the θ̃ component outside colspace(Cᵀ) (cycle residual).
    pub theta_cycle_residual: f64,
    /// same diagnostic for φ̃ (may be nonzero on cyclic graphs; reported only).
    pub phi_cycle_residual: f64,
}

struct CtSvd {
    ct: nalgebra::DMatrix<f64>,
    svd: nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl CtSvd {
    fn new(model: &NetworkModel) -> Self {
        let ct = model.build_incidence().transpose();
        let svd = nalgebra::SVD::new(ct.clone(), true, true);
        CtSvd { ct, svd }
    }

    /// Distance of a per-edge vector from the column space of Cᵀ.
    fn subspace_residual(&self, x_edge: &[f64]) -> f64 {
        let x = nalgebra::DVector::from_column_slice(x_edge);
        let v = self.svd.solve(&x, 1e-12).expect("svd solve");
        (&self.ct * v - x).norm()
    }
}

pub fn monitor_constraints(
    traj: &Trajectory,
    scenario: &Scenario,
    equilibrium: Option<&[f64]>,
) -> ConstraintReport {
    let l = traj.layout;
    let model = &scenario.model;
    let mut max_box = 0.0f64;
    let mut max_line_excess = 0.0f64;
    let mut theta_res = 0.0f64;
    let mut phi_res = 0.0f64;
    let ct_svd = CtSvd::new(model);
    for w in &traj.states {
        for (k, i) in l.pg().enumerate() {
            max_box = max_box.max(model.pg_lo[k] - w[i]).max(w[i] - model.pg_hi[k]);
        }
        for (k, i) in l.pl().enumerate() {
            max_box = max_box.max(model.pl_lo[k] - w[i]).max(w[i] - model.pl_hi[k]);
        }
        let flows = tie_line_flows(&w[l.theta_t()], model);
        for (e, f) in flows.iter().enumerate() {
            let excess = (model.theta_lo[e] * model.b[e] - f).max(f - model.theta_hi[e] * model.b[e]);
            max_line_excess = max_line_excess.max(excess);
        }
        theta_res = theta_res.max(ct_svd.subspace_residual(&w[l.theta_t()]));
        phi_res = phi_res.max(ct_svd.subspace_residual(&w[l.phi_t()]));
    }
    let line_limit_ok_at_eq = equilibrium.map(|w| {
        let flows = tie_line_flows(&w[l.theta_t()], model);
        flows.iter().enumerate().all(|(e, f)| {
            *f >= model.theta_lo[e] * model.b[e] - scenario.eq_tol * 10.0
                && *f <= model.theta_hi[e] * model.b[e] + scenario.eq_tol * 10.0
        })
    });
    ConstraintReport {
        capacity_ok_all_t: max_box <= 0.0,
        max_box_violation: max_box.max(0.0),
        line_limit_ok_at_eq,
        max_line_excess_transient: max_line_excess.max(0.0),
        theta_cycle_residual: theta_res,
        phi_cycle_residual: phi_res,
    }
}

/// CSV with one row per recorded sample; f64 formatting round-trips exactly.
pub fn write_csv<W: Write>(traj: &Trajectory, scenario: &Scenario, mut out: W) -> std::io::Result<()> {
    let l = traj.layout;
    let mut header = vec!["t".to_string()];
    let block = |name: &str, count: usize| -> Vec<String> {
        (0..count).map(|i| format!("{name}{i}")).collect()
    };
    header.extend(block("theta_t", l.m));
    header.extend(block("omega", l.n));
    header.extend(block("pg", l.n));
    header.extend(block("pl", l.n));
    header.extend(block("eta_p", l.m));
    header.extend(block("eta_m", l.m));
    header.extend(block("lambda", l.n));
    header.extend(block("phi_t", l.m));
    header.extend(block("flow", l.m));
    header.push("V2".to_string());
    writeln!(out, "{}", header.join(","))?;
    for (i, (t, w)) in traj.times.iter().zip(&traj.states).enumerate() {
        let mut row = Vec::with_capacity(header.len());
        row.push(format!("{t}"));
        for &x in w.iter() {
            row.push(format!("{x}"));
        }
        for f in tie_line_flows(&w[l.theta_t()], &scenario.model) {
            row.push(format!("{f}"));
        }
        row.push(format!("{}", traj.v2[i]));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
