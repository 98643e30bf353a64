//! Network graph, physical parameters, operating limits, and scenario ingestion.
//!
//! All powers are MW deviations from the pre-disturbance operating point;
//! angle-difference bounds come from line limits via θ = P/B.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error in {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
    #[error("scenario validation failed:\n{}", .0.join("\n"))]
    Validation(Vec<String>),
}

/// Physical network description. Node 0 is the reference node.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub n_nodes: usize,
    /// Directed edges (i, j); positive flow runs from i to j.
    pub edges: Vec<(usize, usize)>,
    /// Per-edge susceptance, MW/rad.
    pub b: Vec<f64>,
    /// Per-node inertia (MW·s² per ω-unit).
    pub m_inertia: Vec<f64>,
    /// Per-node damping (MW per ω-unit).
    pub d_damping: Vec<f64>,
    /// Per-node droop; enters the turbine dynamics as ω/R.
    pub r_droop: Vec<f64>,
    pub t_gen: Vec<f64>,
    pub t_load: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub pg_lo: Vec<f64>,
    pub pg_hi: Vec<f64>,
    pub pl_lo: Vec<f64>,
    pub pl_hi: Vec<f64>,
    /// Per-edge angle-difference bounds, rad (line limit / B).
    pub theta_lo: Vec<f64>,
    pub theta_hi: Vec<f64>,
}

impl NetworkModel {
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Canonical state dimension: m + 3(n+1) + 2m + (n+1) + m.
    pub fn state_dim(&self) -> usize {
        4 * self.n_edges() + 4 * self.n_nodes
    }

    /// Node-edge incidence matrix C, (n+1)×m: +1 at the edge source, −1 at the sink.
    pub fn build_incidence(&self) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(self.n_nodes, self.n_edges());
        for (e, &(i, j)) in self.edges.iter().enumerate() {
            c[(i, e)] = 1.0;
            c[(j, e)] = -1.0;
        }
        c
    }

    /// y = C x for per-edge x (accumulate edge quantities onto nodes).
    pub fn accumulate_nodes(&self, x_edge: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_nodes];
        for (e, &(i, j)) in self.edges.iter().enumerate() {
            out[i] += x_edge[e];
            out[j] -= x_edge[e];
        }
        out
    }

    /// y = Cᵀ v for per-node v (edge differences v_i − v_j).
    pub fn edge_differences(&self, v_node: &[f64]) -> Vec<f64> {
        self.edges
            .iter()
            .map(|&(i, j)| v_node[i] - v_node[j])
            .collect()
    }

    /// Û(φ̃) = C B φ̃ per node.
    pub fn hat_u(&self, phi_t: &[f64]) -> Vec<f64> {
        let scaled: Vec<f64> = phi_t.iter().zip(&self.b).map(|(p, b)| p * b).collect();
        self.accumulate_nodes(&scaled)
    }

    fn connected(&self) -> bool {
        if self.n_nodes == 0 {
            return false;
        }
        let mut seen = vec![false; self.n_nodes];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &(i, j) in &self.edges {
                if i == v && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                } else if j == v && !seen[i] {
                    seen[i] = true;
                    stack.push(i);
                }
            }
        }
        seen.iter().all(|&s| s)
    }
}

/// Controller gain families, all strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct Gains {
    pub lambda: Vec<f64>,
    pub eta: Vec<f64>,
    pub phi: Vec<f64>,
    pub gen: Vec<f64>,
    pub load: Vec<f64>,
}

/// Absolute operating point used only for reporting paper-style absolute values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasePoint {
    pub pg0: Vec<f64>,
    pub pl0: Vec<f64>,
    pub flow0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub model: NetworkModel,
    /// Load disturbance per node, MW, applied from t = 0.
    pub p: Vec<f64>,
    pub gains: Gains,
    pub x0: Vec<f64>,
    pub dt: f64,
    pub horizon: f64,
    pub eq_tol: f64,
    /// Record every `record_every`-th step (plus t = 0).
    pub record_every: usize,
    /// Abort integration if ‖w‖∞ exceeds this.
    pub max_norm: f64,
    pub base: Option<BasePoint>,
}

pub const DEFAULT_B: f64 = 100.0;
pub const DEFAULT_M: f64 = 10.0;
pub const DEFAULT_GAIN: f64 = 1.0;
pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_HORIZON: f64 = 200.0;
pub const DEFAULT_EQ_TOL: f64 = 1e-4;
pub const DEFAULT_RECORD_EVERY: usize = 100;
pub const DEFAULT_MAX_NORM: f64 = 1e8;

// --- JSON document layer -------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeDoc {
    #[serde(rename = "M", default = "default_m")]
    pub m: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "Tg")]
    pub tg: f64,
    #[serde(rename = "Tl")]
    pub tl: f64,
    pub alpha: f64,
    pub beta: f64,
    pub pg: [f64; 2],
    pub pl: [f64; 2],
    #[serde(default)]
    pub dp: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeDoc {
    pub from: usize,
    pub to: usize,
    #[serde(rename = "B", default = "default_b")]
    pub b: f64,
    #[serde(default = "default_p_line")]
    pub p_line: [f64; 2],
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GainsDoc {
    #[serde(default)]
    pub lambda: Option<Vec<f64>>,
    #[serde(default)]
    pub eta: Option<Vec<f64>>,
    #[serde(default)]
    pub phi: Option<Vec<f64>>,
    #[serde(default)]
    pub g: Option<Vec<f64>>,
    #[serde(default)]
    pub l: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SimDoc {
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub eq_tol: Option<f64>,
    #[serde(default)]
    pub record_every: Option<usize>,
    #[serde(default)]
    pub max_norm: Option<f64>,
}

/// On-disk scenario document. `Scenario::to_doc` writes every field explicitly
/// so that echo output records applied defaults and round-trips bit-identically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioDoc {
    pub nodes: Vec<NodeDoc>,
    pub edges: Vec<EdgeDoc>,
    #[serde(default)]
    pub gains: GainsDoc,
    #[serde(default)]
    pub sim: SimDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<BasePoint>,
}

fn default_b() -> f64 {
    DEFAULT_B
}
fn default_m() -> f64 {
    DEFAULT_M
}
fn default_p_line() -> [f64; 2] {
    [-f64::INFINITY, f64::INFINITY]
}

fn gain_vec(doc: &Option<Vec<f64>>, len: usize, name: &str, errs: &mut Vec<String>) -> Vec<f64> {
    match doc {
        None => vec![DEFAULT_GAIN; len],
        Some(v) if v.len() == len => v.clone(),
        Some(v) => {
            errs.push(format!(
                "gain family `{name}` has length {} but expected {len}",
                v.len()
            ));
            vec![DEFAULT_GAIN; len]
        }
    }
}

impl Scenario {
    pub fn from_doc(doc: &ScenarioDoc) -> Result<Scenario, ModelError> {
        let mut errs = Vec::new();
        let n = doc.nodes.len();
        let m = doc.edges.len();
        if n == 0 {
            errs.push("scenario has no nodes".into());
        }
        for (e, ed) in doc.edges.iter().enumerate() {
            if ed.from >= n || ed.to >= n {
                errs.push(format!(
                    "edge {e} endpoint ({},{}) out of range for {n} nodes",
                    ed.from, ed.to
                ));
            }
            if ed.from == ed.to {
                errs.push(format!("edge {e} is a self-loop"));
            }
        }
        if !errs.is_empty() {
            return Err(ModelError::Validation(errs));
        }

        let model = NetworkModel {
            n_nodes: n,
            edges: doc.edges.iter().map(|e| (e.from, e.to)).collect(),
            b: doc.edges.iter().map(|e| e.b).collect(),
            m_inertia: doc.nodes.iter().map(|nd| nd.m).collect(),
            d_damping: doc.nodes.iter().map(|nd| nd.d).collect(),
            r_droop: doc.nodes.iter().map(|nd| nd.r).collect(),
            t_gen: doc.nodes.iter().map(|nd| nd.tg).collect(),
            t_load: doc.nodes.iter().map(|nd| nd.tl).collect(),
            alpha: doc.nodes.iter().map(|nd| nd.alpha).collect(),
            beta: doc.nodes.iter().map(|nd| nd.beta).collect(),
            pg_lo: doc.nodes.iter().map(|nd| nd.pg[0]).collect(),
            pg_hi: doc.nodes.iter().map(|nd| nd.pg[1]).collect(),
            pl_lo: doc.nodes.iter().map(|nd| nd.pl[0]).collect(),
            pl_hi: doc.nodes.iter().map(|nd| nd.pl[1]).collect(),
            theta_lo: doc.edges.iter().map(|e| e.p_line[0] / e.b).collect(),
            theta_hi: doc.edges.iter().map(|e| e.p_line[1] / e.b).collect(),
        };

        let gains = Gains {
            lambda: gain_vec(&doc.gains.lambda, n, "lambda", &mut errs),
            eta: gain_vec(&doc.gains.eta, m, "eta", &mut errs),
            phi: gain_vec(&doc.gains.phi, m, "phi", &mut errs),
            gen: gain_vec(&doc.gains.g, n, "g", &mut errs),
            load: gain_vec(&doc.gains.l, n, "l", &mut errs),
        };
        let x0 = doc.x0.clone().unwrap_or_else(|| vec![0.0; model.state_dim()]);

        let scenario = Scenario {
            p: doc.nodes.iter().map(|nd| nd.dp).collect(),
            gains,
            x0,
            dt: doc.sim.dt.unwrap_or(DEFAULT_DT),
            horizon: doc.sim.horizon.unwrap_or(DEFAULT_HORIZON),
            eq_tol: doc.sim.eq_tol.unwrap_or(DEFAULT_EQ_TOL),
            record_every: doc.sim.record_every.unwrap_or(DEFAULT_RECORD_EVERY),
            max_norm: doc.sim.max_norm.unwrap_or(DEFAULT_MAX_NORM),
            base: doc.base.clone(),
            model,
        };
        if !errs.is_empty() {
            return Err(ModelError::Validation(errs));
        }
        scenario.validate()
    }

    /// Full echo of the scenario with every default made explicit.
    pub fn to_doc(&self) -> ScenarioDoc {
        let m = &self.model;
        ScenarioDoc {
            nodes: (0..m.n_nodes)
                .map(|j| NodeDoc {
                    m: m.m_inertia[j],
                    d: m.d_damping[j],
                    r: m.r_droop[j],
                    tg: m.t_gen[j],
                    tl: m.t_load[j],
                    alpha: m.alpha[j],
                    beta: m.beta[j],
                    pg: [m.pg_lo[j], m.pg_hi[j]],
                    pl: [m.pl_lo[j], m.pl_hi[j]],
                    dp: self.p[j],
                })
                .collect(),
            edges: m
                .edges
                .iter()
                .enumerate()
                .map(|(e, &(i, j))| EdgeDoc {
                    from: i,
                    to: j,
                    b: m.b[e],
                    p_line: [m.theta_lo[e] * m.b[e], m.theta_hi[e] * m.b[e]],
                })
                .collect(),
            gains: GainsDoc {
                lambda: Some(self.gains.lambda.clone()),
                eta: Some(self.gains.eta.clone()),
                phi: Some(self.gains.phi.clone()),
                g: Some(self.gains.gen.clone()),
                l: Some(self.gains.load.clone()),
            },
            sim: SimDoc {
                dt: Some(self.dt),
                horizon: Some(self.horizon),
                eq_tol: Some(self.eq_tol),
                record_every: Some(self.record_every),
                max_norm: Some(self.max_norm),
            },
            x0: Some(self.x0.clone()),
            base: self.base.clone(),
        }
    }

    /// Check every type invariant; on failure return the complete violation list.
    pub fn validate(self) -> Result<Scenario, ModelError> {
        let mut errs = Vec::new();
        let m = &self.model;
        let n = m.n_nodes;

        if !m.connected() {
            errs.push("graph is not connected".into());
        }
        let pos = |v: &[f64], name: &str, errs: &mut Vec<String>| {
            for (j, &x) in v.iter().enumerate() {
                if !(x > 0.0) || !x.is_finite() {
                    errs.push(format!("{name}[{j}] = {x} must be strictly positive"));
                }
            }
        };
        pos(&m.b, "B", &mut errs);
        pos(&m.m_inertia, "M", &mut errs);
        pos(&m.d_damping, "D", &mut errs);
        pos(&m.r_droop, "R", &mut errs);
        pos(&m.t_gen, "Tg", &mut errs);
        pos(&m.t_load, "Tl", &mut errs);
        pos(&m.alpha, "alpha", &mut errs);
        pos(&m.beta, "beta", &mut errs);
        pos(&self.gains.lambda, "gains.lambda", &mut errs);
        pos(&self.gains.eta, "gains.eta", &mut errs);
        pos(&self.gains.phi, "gains.phi", &mut errs);
        pos(&self.gains.gen, "gains.g", &mut errs);
        pos(&self.gains.load, "gains.l", &mut errs);

        for j in 0..n {
            if !(m.pg_lo[j] < 0.0) {
                errs.push(format!(
                    "A1 violated: lower generation bound not negative at node {j} (pg_lo = {})",
                    m.pg_lo[j]
                ));
            }
            if !(m.pg_hi[j] > 0.0) {
                errs.push(format!(
                    "A1 violated: upper generation bound not positive at node {j} (pg_hi = {})",
                    m.pg_hi[j]
                ));
            }
            if !(m.pl_lo[j] < 0.0) {
                errs.push(format!(
                    "A1 violated: lower load bound not negative at node {j} (pl_lo = {})",
                    m.pl_lo[j]
                ));
            }
            if !(m.pl_hi[j] > 0.0) {
                errs.push(format!(
                    "A1 violated: upper load bound not positive at node {j} (pl_hi = {})",
                    m.pl_hi[j]
                ));
            }
        }
        for e in 0..m.n_edges() {
            if !(m.theta_lo[e] <= 0.0 && m.theta_hi[e] >= 0.0) {
                errs.push(format!(
                    "A1 violated: angle bounds [{}, {}] on edge {e} do not straddle zero",
                    m.theta_lo[e], m.theta_hi[e]
                ));
            }
        }

        if self.p.len() != n {
            errs.push(format!("p has length {}, expected {n}", self.p.len()));
        }
        if self.x0.len() != m.state_dim() {
            errs.push(format!(
                "x0 has length {}, expected {}",
                self.x0.len(),
                m.state_dim()
            ));
        } else {
            let me = m.n_edges();
            let pg0 = &self.x0[me + n..me + 2 * n];
            let pl0 = &self.x0[me + 2 * n..me + 3 * n];
            for j in 0..n {
                if pg0[j] < m.pg_lo[j] - 1e-12 || pg0[j] > m.pg_hi[j] + 1e-12 {
                    errs.push(format!("A3 violated: x0 Pg[{j}] = {} outside box", pg0[j]));
                }
                if pl0[j] < m.pl_lo[j] - 1e-12 || pl0[j] > m.pl_hi[j] + 1e-12 {
                    errs.push(format!("A3 violated: x0 Pl[{j}] = {} outside box", pl0[j]));
                }
            }
            if self.x0.iter().any(|x| !x.is_finite()) {
                errs.push("x0 contains non-finite entries".into());
            }
        }
        if !(self.dt > 0.0) {
            errs.push(format!("dt = {} must be positive", self.dt));
        }
        if self.horizon < 0.0 {
            errs.push(format!("horizon = {} must be nonnegative", self.horizon));
        }
        if !(self.eq_tol > 0.0) {
            errs.push(format!("eq_tol = {} must be positive", self.eq_tol));
        }
        if self.record_every == 0 {
            errs.push("record_every must be >= 1".into());
        }
        if let Some(base) = &self.base {
            if base.pg0.len() != n || base.pl0.len() != n || base.flow0.len() != m.n_edges() {
                errs.push("base block dimensions do not match model".into());
            }
        }

        if errs.is_empty() {
            Ok(self)
        } else {
            Err(ModelError::Validation(errs))
        }
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ModelError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let doc: ScenarioDoc = serde_json::from_str(&text).map_err(|source| ModelError::Parse {
        path: path.display().to_string(),
        source,
    })?;
    Scenario::from_doc(&doc)
}

/// Laplacian L = C B Cᵀ.
pub fn laplacian(model: &NetworkModel) -> DMatrix<f64> {
    let c = model.build_incidence();
    let bd = DMatrix::from_diagonal(&DVector::from_vec(model.b.clone()));
    &c * bd * c.transpose()
}
