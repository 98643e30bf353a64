//! Command-line front end: simulate scenarios, solve the NBO, verify the
//! equilibrium↔optimum correspondence, and run Lyapunov audits.
//!
//! Exit codes: 0 pass, 1 verification/audit gap, 2 divergence, 3 input error.

use clap::{Args, Parser, Subcommand};
use netfreq::lyapunov::{self, LyapunovConfig, SigmaSets};
use netfreq::model::{load_scenario, Scenario};
use netfreq::nbo::{assemble_nbo, compare_equilibrium, kkt_residuals, solve_nbo, NboError};
use netfreq::plant::tie_line_flows;
use netfreq::sim::{self, SimError, StateLayout, Trajectory};
use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_OK: u8 = 0;
const EXIT_GAP: u8 = 1;
const EXIT_DIVERGED: u8 = 2;
const EXIT_INPUT: u8 = 3;

#[derive(Parser)]
#[command(
    name = "netfreq",
    about = "Distributed optimal frequency control: simulation, QP oracle, and stability audits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SimOverrides {
    /// Integration step override, s
    #[arg(long)]
    dt: Option<f64>,
    /// Horizon override, s
    #[arg(long)]
    horizon: Option<f64>,
    /// Equilibrium field-norm tolerance override
    #[arg(long, value_name = "TOL")]
    eq_tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the closed loop and write trajectory/summary artifacts
    Simulate {
        /// Scenario JSON file(s)
        scenarios: Vec<PathBuf>,
        /// Trajectory CSV output (single scenario only)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Summary JSON output (single scenario only)
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Directory for SVG charts (single scenario only)
        #[arg(long)]
        plot: Option<PathBuf>,
        /// Parallel workers for multiple scenarios
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        overrides: SimOverrides,
    },
    /// Solve the NBO oracle and print/write the solution document
    Solve {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate + solve + compare; prints a paper-style equilibrium table
    Verify {
        scenario: PathBuf,
        #[command(flatten)]
        overrides: SimOverrides,
    },
    /// Lyapunov monotonicity + Q-matrix audit
    Audit {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: SimOverrides,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Simulate {
            scenarios,
            out,
            summary,
            plot,
            jobs,
            overrides,
        } => cmd_simulate(&scenarios, out, summary, plot, jobs, &overrides),
        Command::Solve { scenario, out } => cmd_solve(&scenario, out),
        Command::Verify {
            scenario,
            overrides,
        } => cmd_verify(&scenario, &overrides),
        Command::Audit {
            scenario,
            out,
            overrides,
        } => cmd_audit(&scenario, out, &overrides),
    };
    ExitCode::from(code)
}

fn load(path: &Path, overrides: &SimOverrides) -> Result<Scenario, u8> {
    match load_scenario(path) {
        Ok(mut s) => {
            if let Some(dt) = overrides.dt {
                s.dt = dt;
            }
            if let Some(h) = overrides.horizon {
                s.horizon = h;
            }
            if let Some(t) = overrides.eq_tol {
                s.eq_tol = t;
            }
            s.validate().map_err(|e| {
                eprintln!("error: {e}");
                EXIT_INPUT
            })
        }
        Err(e) => {
            eprintln!("error: {e}");
            Err(EXIT_INPUT)
        }
    }
}

fn run_sim(scenario: &Scenario) -> Result<Trajectory, u8> {
    sim::simulate(scenario).map_err(|e| {
        eprintln!("error: {e}");
        match e {
            SimError::Io(_) => EXIT_INPUT,
            _ => EXIT_DIVERGED,
        }
    })
}

#[derive(serde::Serialize)]
struct SimulateSummary<'a> {
    scenario: String,
    final_time: f64,
    equilibrium: Option<Vec<f64>>,
    omega_abs_max_final: f64,
    constraints: &'a sim::ConstraintReport,
    v2_final: Option<f64>,
}

fn simulate_one(
    path: &Path,
    out: Option<&Path>,
    summary: Option<&Path>,
    plot: Option<&Path>,
    overrides: &SimOverrides,
) -> u8 {
    let scenario = match load(path, overrides) {
        Ok(s) => s,
        Err(c) => return c,
    };
    let mut traj = match run_sim(&scenario) {
        Ok(t) => t,
        Err(c) => return c,
    };
    // V₂ needs the oracle equilibrium; fill it in when the NBO is solvable.
    let cfg = solve_nbo(&assemble_nbo(&scenario))
        .ok()
        .map(|sol| LyapunovConfig::new(&scenario, lyapunov::w_star_from_solution(&sol, &scenario)));
    if let Some(cfg) = &cfg {
        lyapunov::evaluate_v2(&mut traj, cfg, &scenario);
    }
    let eq = sim::detect_equilibrium(&traj, &scenario, scenario.eq_tol);
    let constraints = sim::monitor_constraints(&traj, &scenario, eq.as_deref());
    let l = traj.layout;
    let omega_max = traj.last()[l.omega()]
        .iter()
        .fold(0.0f64, |a, &x| a.max(x.abs()));
    let doc = SimulateSummary {
        scenario: path.display().to_string(),
        final_time: *traj.times.last().unwrap(),
        equilibrium: eq.clone(),
        omega_abs_max_final: omega_max,
        constraints: &constraints,
        v2_final: traj.v2.last().copied().filter(|v| v.is_finite()),
    };
    if let Some(out) = out {
        let file = match std::fs::File::create(out) {
            Ok(f) => f,
            Err(e) => {
                eprintln!("error: cannot write {}: {e}", out.display());
                return EXIT_INPUT;
            }
        };
        if let Err(e) = sim::write_csv(&traj, &scenario, std::io::BufWriter::new(file)) {
            eprintln!("error: {e}");
            return EXIT_INPUT;
        }
    }
    let summary_text = serde_json::to_string_pretty(&doc).expect("serialize summary");
    match summary {
        Some(p) => {
            if let Err(e) = std::fs::write(p, summary_text + "\n") {
                eprintln!("error: cannot write {}: {e}", p.display());
                return EXIT_INPUT;
            }
        }
        None => println!("{summary_text}"),
    }
    if let Some(dir) = plot {
        if let Err(e) = write_plots(dir, &traj, &scenario) {
            eprintln!("error: plot output failed: {e}");
            return EXIT_INPUT;
        }
    }
    EXIT_OK
}

fn cmd_simulate(
    scenarios: &[PathBuf],
    out: Option<PathBuf>,
    summary: Option<PathBuf>,
    plot: Option<PathBuf>,
    jobs: usize,
    overrides: &SimOverrides,
) -> u8 {
    if scenarios.is_empty() {
        eprintln!("error: no scenario given");
        return EXIT_INPUT;
    }
    if scenarios.len() == 1 {
        return simulate_one(
            &scenarios[0],
            out.as_deref(),
            summary.as_deref(),
            plot.as_deref(),
            overrides,
        );
    }
    if out.is_some() || summary.is_some() || plot.is_some() {
        eprintln!("error: --out/--summary/--plot require a single scenario");
        return EXIT_INPUT;
    }
    // Independent runs; spread over up to `jobs` workers.
    let jobs = jobs.max(1);
    let codes = std::sync::Mutex::new(vec![0u8; scenarios.len()]);
    let next = std::sync::atomic::AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(scenarios.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= scenarios.len() {
                    break;
                }
                let code = simulate_one(&scenarios[i], None, None, None, overrides);
                codes.lock().unwrap()[i] = code;
            });
        }
    });
    codes
        .into_inner()
        .unwrap()
        .into_iter()
        .fold(EXIT_OK, |acc, c| acc.max(c))
}

fn cmd_solve(path: &Path, out: Option<PathBuf>) -> u8 {
    let scenario = match load(path, &SimOverrides { dt: None, horizon: None, eq_tol: None }) {
        Ok(s) => s,
        Err(c) => return c,
    };
    let sol = match solve_nbo(&assemble_nbo(&scenario)) {
        Ok(s) => s,
        Err(e @ NboError::Infeasible(_)) => {
            eprintln!("error: {e}");
            return EXIT_INPUT;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_GAP;
        }
    };
    let kkt = kkt_residuals(&sol, &scenario);
    let doc = serde_json::json!({
        "scenario": path.display().to_string(),
        "solution": sol,
        "kkt": kkt,
    });
    let text = serde_json::to_string_pretty(&doc).expect("serialize solution");
    match out {
        Some(p) => {
            if let Err(e) = std::fs::write(&p, text + "\n") {
                eprintln!("error: cannot write {}: {e}", p.display());
                return EXIT_INPUT;
            }
        }
        None => println!("{text}"),
    }
    if kkt.max() < 1e-8 {
        EXIT_OK
    } else {
        EXIT_GAP
    }
}

fn fmt_row(label: &str, values: &[f64]) -> String {
    let cells: Vec<String> = values.iter().map(|v| format!("{v:>10.2}")).collect();
    format!("{label:<18}{}", cells.join(" "))
}

fn cmd_verify(path: &Path, overrides: &SimOverrides) -> u8 {
    let scenario = match load(path, overrides) {
        Ok(s) => s,
        Err(c) => return c,
    };
    let sol = match solve_nbo(&assemble_nbo(&scenario)) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INPUT;
        }
    };
    let traj = match run_sim(&scenario) {
        Ok(t) => t,
        Err(c) => return c,
    };
    let Some(eq) = sim::detect_equilibrium(&traj, &scenario, scenario.eq_tol) else {
        eprintln!("error: no equilibrium detected within the horizon");
        return EXIT_GAP;
    };
    let diff = compare_equilibrium(&eq, &sol, &scenario);
    let kkt = kkt_residuals(&sol, &scenario);
    let l = StateLayout::of(&scenario.model);

    let (pg0, pl0, f0) = match &scenario.base {
        Some(b) => (b.pg0.clone(), b.pl0.clone(), b.flow0.clone()),
        None => (
            vec![0.0; scenario.model.n_nodes],
            vec![0.0; scenario.model.n_nodes],
            vec![0.0; scenario.model.n_edges()],
        ),
    };
    let add = |dev: &[f64], base: &[f64]| -> Vec<f64> {
        dev.iter().zip(base).map(|(d, b)| d + b).collect()
    };
    let unit = if scenario.base.is_some() {
        "abs MW"
    } else {
        "dev MW"
    };
    println!("equilibrium table ({unit}), scenario {}", path.display());
    println!("{}", fmt_row("Pg* (oracle)", &add(&sol.pg, &pg0)));
    println!("{}", fmt_row("Pg* (sim)", &add(&eq[l.pg()], &pg0)));
    println!("{}", fmt_row("Pl* (oracle)", &add(&sol.pl, &pl0)));
    println!("{}", fmt_row("Pl* (sim)", &add(&eq[l.pl()], &pl0)));
    println!("{}", fmt_row("lambda*", &sol.lambda));
    let sim_flows = tie_line_flows(&eq[l.theta_t()], &scenario.model);
    println!("{}", fmt_row("flow* (oracle)", &add(&diff.flows, &f0)));
    println!("{}", fmt_row("flow* (sim)", &add(&sim_flows, &f0)));
    println!();
    println!(
        "gaps: pg {:.3e}  pl {:.3e}  lambda {:.3e}  flow {:.3e} MW",
        diff.pg_gap, diff.pl_gap, diff.lambda_gap, diff.flow_gap
    );
    println!(
        "omega* max {:.3e}   theta-phi gap (oracle {:.3e}, sim {:.3e}) rad",
        diff.omega_abs_max, diff.theta_phi_gap_oracle, diff.theta_phi_gap_sim
    );
    println!(
        "balance residual {:.3e} MW   line limits ok: {}",
        diff.balance_residual, diff.line_limits_ok
    );
    println!(
        "kkt: stationarity {:.3e}  primal {:.3e}  dual {:.3e}  compl {:.3e}",
        kkt.stationarity, kkt.primal_feas, kkt.dual_feas, kkt.complementarity
    );

    let pass = diff.pg_gap < 1e-3
        && diff.pl_gap < 1e-3
        && diff.flow_gap < 1e-3
        && diff.omega_abs_max < 1e-4
        && diff.theta_phi_gap_oracle < 1e-6
        && diff.balance_residual < 1e-6
        && diff.line_limits_ok
        && kkt.max() < 1e-8;
    println!("verify: {}", if pass { "PASS" } else { "FAIL" });
    if pass {
        EXIT_OK
    } else {
        EXIT_GAP
    }
}

fn cmd_audit(path: &Path, out: Option<PathBuf>, overrides: &SimOverrides) -> u8 {
    let scenario = match load(path, overrides) {
        Ok(s) => s,
        Err(c) => return c,
    };
    let sol = match solve_nbo(&assemble_nbo(&scenario)) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INPUT;
        }
    };
    let traj = match run_sim(&scenario) {
        Ok(t) => t,
        Err(c) => return c,
    };
    let cfg = LyapunovConfig::new(&scenario, lyapunov::w_star_from_solution(&sol, &scenario));
    let report = lyapunov::monotonicity_audit(&traj, &cfg, &scenario);

    // Q checks over every σ± configuration seen, plus the two extremes.
    let m = scenario.model.n_edges();
    let mut configs: Vec<SigmaSets> = vec![SigmaSets::empty(m), SigmaSets::full(m)];
    let mut seen: HashSet<(Vec<bool>, Vec<bool>)> = configs
        .iter()
        .map(|s| (s.sigma_p.clone(), s.sigma_m.clone()))
        .collect();
    for w in &traj.states {
        let s = lyapunov::sigma_sets(w, &scenario);
        if seen.insert((s.sigma_p.clone(), s.sigma_m.clone())) {
            configs.push(s);
        }
    }
    let q_checks: Vec<serde_json::Value> = configs
        .iter()
        .enumerate()
        .map(|(i, sigma)| {
            let q = lyapunov::q_matrix(sigma, &scenario);
            let min_eig = lyapunov::q_min_eigenvalue(&q);
            let jac_gap = lyapunov::q_jacobian_gap(sigma, &scenario, 1000 + i as u64);
            serde_json::json!({
                "sigma": sigma,
                "min_eig_symmetric_part": min_eig,
                "jacobian_gap": jac_gap,
                "psd_ok": min_eig >= -1e-9,
                "jacobian_ok": jac_gap < 1e-6,
            })
        })
        .collect();

    let q_ok = q_checks
        .iter()
        .all(|c| c["psd_ok"].as_bool().unwrap() && c["jacobian_ok"].as_bool().unwrap());
    let v2_nonneg = report.v2_min >= -1e-9;
    let pass = report.violations.is_empty() && q_ok && v2_nonneg && report.invariant_set_ok;
    let doc = serde_json::json!({
        "scenario": path.display().to_string(),
        "monotonicity": report,
        "q_checks": q_checks,
        "pass": pass,
    });
    let text = serde_json::to_string_pretty(&doc).expect("serialize audit");
    match out {
        Some(p) => {
            if let Err(e) = std::fs::write(&p, text + "\n") {
                eprintln!("error: cannot write {}: {e}", p.display());
                return EXIT_INPUT;
            }
        }
        None => println!("{text}"),
    }
    if pass {
        EXIT_OK
    } else {
        EXIT_GAP
    }
}

// --- SVG charts ----------------------------------------------------------

fn write_plots(dir: &Path, traj: &Trajectory, scenario: &Scenario) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let l = traj.layout;
    let series_of = |range: std::ops::Range<usize>, prefix: &str| -> Vec<(String, Vec<f64>)> {
        range
            .clone()
            .enumerate()
            .map(|(k, i)| {
                (
                    format!("{prefix}{k}"),
                    traj.states.iter().map(|w| w[i]).collect(),
                )
            })
            .collect()
    };
    svg_chart(
        &dir.join("frequency.svg"),
        "frequency deviation",
        &traj.times,
        &series_of(l.omega(), "omega"),
    )?;
    let flows: Vec<(String, Vec<f64>)> = (0..l.m)
        .map(|e| {
            (
                format!("flow{e}"),
                traj.states
                    .iter()
                    .map(|w| tie_line_flows(&w[l.theta_t()], &scenario.model)[e])
                    .collect(),
            )
        })
        .collect();
    svg_chart(&dir.join("flows.svg"), "tie-line flows (MW)", &traj.times, &flows)?;
    let mut power = series_of(l.pg(), "pg");
    power.extend(series_of(l.pl(), "pl"));
    svg_chart(&dir.join("power.svg"), "Pg / Pl deviations (MW)", &traj.times, &power)?;
    if traj.v2.iter().all(|v| v.is_finite()) {
        svg_chart(
            &dir.join("v2.svg"),
            "Lyapunov function V2",
            &traj.times,
            &[("V2".to_string(), traj.v2.clone())],
        )?;
    }
    Ok(())
}

fn svg_chart(
    path: &Path,
    title: &str,
    times: &[f64],
    series: &[(String, Vec<f64>)],
) -> std::io::Result<()> {
    let (w, h, ml, mb) = (800.0, 400.0, 60.0, 40.0);
    let t_max = times.last().copied().unwrap_or(1.0).max(1e-9);
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for (_, ys) in series {
        for &y in ys {
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if !y_min.is_finite() || y_min == y_max {
        y_min -= 1.0;
        y_max += 1.0;
    }
    let pad = 0.05 * (y_max - y_min);
    let (y_min, y_max) = (y_min - pad, y_max + pad);
    let sx = |t: f64| ml + (t / t_max) * (w - ml - 10.0);
    let sy = |y: f64| (h - mb) - (y - y_min) / (y_max - y_min) * (h - mb - 30.0);
    let palette = [
        "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    ];
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>\n",
        ml
    ));
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"#333\"/>\n",
        h - mb,
        w - 10.0
    ));
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"30\" x2=\"{ml}\" y2=\"{}\" stroke=\"#333\"/>\n",
        h - mb
    ));
    for (lab, v) in [(y_min, y_min), (y_max, y_max)] {
        svg.push_str(&format!(
            "<text x=\"5\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{lab:.3}</text>\n",
            sy(v) + 4.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">t = {t_max:.1} s</text>\n",
        w - 80.0,
        h - 10.0
    ));
    for (k, (label, ys)) in series.iter().enumerate() {
        let color = palette[k % palette.len()];
        let pts: Vec<String> = times
            .iter()
            .zip(ys)
            .map(|(&t, &y)| format!("{:.2},{:.2}", sx(t), sy(y)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.2\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{color}\">{label}</text>\n",
            w - 70.0,
            40.0 + 14.0 * k as f64
        ));
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg)
}
