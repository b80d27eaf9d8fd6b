//! Subcommand pipelines. Each one reads a resolved scenario and fills an
//! artifact set; nothing touches the disk here.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use aubrykit::aubry_mather::{
    detect_gaps, gap_report_json, gap_solution, oscillation_gap_criterion, orbit_closure, GapOutcome, GapSolutionParams,
    GAP_TOL,
};
use aubrykit::flow::{flow, write_trace_csv, FlowParams};
use aubrykit::ghost::{assemble_ghost_circle, ghost_circle_limit, GhostLimitOptions, GhostParams};
use aubrykit::lattice::{Configuration, ConfigurationRecord, PeriodLattice};
use aubrykit::minimizers::{find_critical_points, minimize_action, verify_global_minimizer};
use aubrykit::potentials::{fk_potential, is_morse, FkSpec};
use aubrykit::twist::{
    invariant_curve_verdict, iterate, jacobian_determinant, lifted_orbit_of_configuration, orbit_from_configuration,
    orbit_from_sequence, TwistOrbit,
};

use crate::artifacts::Artifacts;
use crate::scenario::{LatticeSpec, Scenario, ScenarioError};
use crate::verify;

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{message}")]
    Numerical { message: String, detail: Value },
}

impl From<aubrykit::Error> for CommandError {
    fn from(e: aubrykit::Error) -> Self {
        CommandError::Numerical { message: e.to_string(), detail: Value::Null }
    }
}

type Result<T> = std::result::Result<T, CommandError>;

fn scenario_err(msg: impl Into<String>) -> CommandError {
    CommandError::Scenario(ScenarioError::Invalid(msg.into()))
}

fn numerical(msg: impl Into<String>) -> CommandError {
    CommandError::Numerical { message: msg.into(), detail: Value::Null }
}

fn lattice_json(l: &PeriodLattice) -> Value {
    json!({ "d": l.dim(), "p": l.p(), "q": l.q(), "omega": l.rotation_vector_f64() })
}

fn uniform_grid(n: usize) -> Vec<f64> {
    (0..n).map(|g| g as f64 / n as f64).collect()
}

/// Checks command-specific scenario requirements; runs before any computation.
pub fn validate(s: &Scenario) -> std::result::Result<(), ScenarioError> {
    let needs_lattice = !matches!(s.command.as_str(), "verify" | "standard-map" | "ghost-limit");
    if needs_lattice {
        s.period_lattice()?;
    }
    let fk_like = matches!(s.potential_kind.as_str(), "fk" | "free") && s.morse.is_none();
    match s.command.as_str() {
        "ghost-limit" => {
            s.convergent_lattices()?;
            if s.morse.is_some() {
                return Err(ScenarioError::Invalid("ghost-limit applies its own Morse approximation".into()));
            }
        }
        "standard-map" => {
            if !fk_like || s.dim() != 1 {
                return Err(ScenarioError::Invalid("standard-map needs a one-dimensional fk or free potential".into()));
            }
            if s.lattice == LatticeSpec::Unspecified && s.options.x0.is_none() && s.options.y0.is_none() {
                return Err(ScenarioError::Invalid("standard-map needs --p/--q, --omega or options.x0/y0".into()));
            }
        }
        _ => {}
    }
    Ok(())
}

pub fn run(s: &Scenario, art: &mut Artifacts) -> Result<()> {
    match s.command.as_str() {
        "minimize" => minimize(s, art),
        "critical-points" => critical_points(s, art),
        "flow" => run_flow(s, art),
        "ghost-circle" => ghost_circle(s, art),
        "aubry-mather" => aubry_mather(s, art, false),
        "gap-solution" => aubry_mather(s, art, true),
        "standard-map" => standard_map(s, art),
        "ghost-limit" => ghost_limit(s, art),
        "verify" => {
            let report = verify::run_suites(s.quick, s.seed);
            let failed = report.failed();
            let value = serde_json::to_value(&report).expect("report serializes");
            if failed > 0 {
                return Err(CommandError::Numerical { message: format!("{failed} verification checks failed"), detail: value });
            }
            art.json("verify.json", value);
            Ok(())
        }
        other => Err(scenario_err(format!("unknown command {other:?}"))),
    }
}

fn minimize(s: &Scenario, art: &mut Artifacts) -> Result<()> {
    let lat = s.period_lattice()?;
    let pot = s.potential(&lat)?;
    let cp = minimize_action(&pot, &lat, s.options.multistart.unwrap_or(8), s.seed)?;
    let check = verify_global_minimizer(&pot, &cp, 2, if s.quick { 8 } else { 32 }, s.seed)?;
    art.json(
        "minimize.json",
        json!({
            "lattice": lattice_json(&lat),
            "potential": { "name": pot.name(), "parameters": pot.parameters() },
            "minimizer": cp.record(),
            "global_minimizer_check": check,
        }),
    );
    Ok(())
}

fn critical_points(s: &Scenario, art: &mut Artifacts) -> Result<()> {
    let lat = s.period_lattice()?;
    let pot = s.potential(&lat)?;
    let cat = find_critical_points(&pot, &lat, s.options.grid_per_dof.unwrap_or(8), 1e-11, 1e-7)?;
    if cat.is_empty() {
        return Err(numerical("no critical points found"));
    }
    let configs: Vec<Configuration> = cat.iter().map(|c| c.config.clone()).collect();
    let morse = is_morse(&pot, &lat, &configs, s.tol)?;
    let max_index = cat.iter().map(|c| c.index).max().unwrap_or(0);
    let counts: Vec<usize> = (0..=max_index).map(|i| cat.iter().filter(|c| c.index == i).count()).collect();
    art.json(
        "critical_points.json",
        json!({
            "lattice": lattice_json(&lat),
            "potential": { "name": pot.name(), "parameters": pot.parameters() },
            "critical_points": cat.iter().map(|c| c.record()).collect::<Vec<_>>(),
            "count_by_index": counts,
            "morse": { "is_morse": morse.morse, "min_abs_eigenvalue": morse.min_abs_eigenvalue, "worst": morse.worst, "tol": s.tol },
        }),
    );
    Ok(())
}

fn run_flow(s: &Scenario, art: &mut Artifacts) -> Result<()> {
    let lat = s.period_lattice()?;
    let pot = s.potential(&lat)?;
    let mut x = Configuration::linear(&lat, s.options.x0.unwrap_or(0.1));
    let amp = s.options.perturbation.unwrap_or(0.0);
    if amp != 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        for v in x.values_mut() {
            *v += rng.gen_range(-amp.abs()..=amp.abs());
        }
    }
    let t = s.options.t.unwrap_or(1.0);
    let params = FlowParams { atol: s.tol, rtol: s.tol, ..FlowParams::default() };
    let res = flow(&pot, &x, t, &params)?;
    let (w0, w1) = (res.trace[0].w, res.trace.last().unwrap().w);
    art.json(
        "flow.json",
        json!({
            "lattice": lattice_json(&lat),
            "start": ConfigurationRecord::from(&x),
            "endpoint": ConfigurationRecord::from(&res.endpoint),
            "t": res.t,
            "reached": res.converged,
            "steps": res.steps,
            "W_start": w0,
            "W_end": w1,
            "dissipation": res.dissipation,
            "energy_identity_residual": (w1 - w0 + res.dissipation).abs(),
        }),
    );
    let mut csv = Vec::new();
    write_trace_csv(&res.trace, &mut csv).expect("in-memory write");
    art.csv("flow_trace.csv", csv);
    Ok(())
}

fn ghost_params(s: &Scenario) -> GhostParams {
    GhostParams { grid_per_dof: s.options.grid_per_dof.unwrap_or(8), ..GhostParams::default() }
}

fn ghost_circle(s: &Scenario, art: &mut Artifacts) -> Result<()> {
    let lat = s.period_lattice()?;
    let pot = s.potential(&lat)?;
    let gc = assemble_ghost_circle(&pot, &lat, &ghost_params(s))?;
    let grid = uniform_grid(s.options.grid.unwrap_or(64));
    let k = vec![0; lat.dim()];
    let mut body = gc.to_json(&grid)?;
    body["minima"] = json!(gc.minima().len());
    body["saddles"] = json!(gc.saddles().len());
    art.json("ghost_circle.json", body);
    let mut csv = Vec::new();
    gc.write_t_map_csv(&grid, &k, &mut csv)?;
    art.csv("t_map.csv", csv);
    Ok(())
}

fn aubry_mather(s: &Scenario, art: &mut Artifacts, solve: bool) -> Result<()> {
    let lat = s.period_lattice()?;
    let pot = s.potential(&lat)?;
    let cp = minimize_action(&pot, &lat, s.options.multistart.unwrap_or(8), s.seed)?;
    let set = orbit_closure(&cp, &lat)?;
    let gaps = detect_gaps(&pot, &set, GAP_TOL)?;
    if !solve {
        let oscillation = if matches!(s.potential_kind.as_str(), "fk" | "free") && s.morse.is_none() {
            serde_json::to_value(oscillation_gap_criterion(&fk_potential(FkSpec::free(lat.dim())), &s.v, &lat)?)
                .expect("report serializes")
        } else {
            Value::Null
        };
        let gap_json: Vec<Value> = gaps.iter().map(|g| gap_report_json(g, None)).collect::<aubrykit::Result<_>>()?;
        art.json(
            "aubry_mather.json",
            json!({ "lattice": lattice_json(&lat), "set": set.to_json(), "gaps": gap_json, "oscillation_criterion": oscillation }),
        );
        return Ok(());
    }
    let gc = assemble_ghost_circle(&pot, &lat, &ghost_params(s))?;
    let params = GapSolutionParams { seed: s.seed, verify_trials: if s.quick { 8 } else { 32 }, ..GapSolutionParams::default() };
    let mut reports = Vec::new();
    let (mut nonmin, mut foliated) = (0, 0);
    for g in &gaps {
        let outcome = gap_solution(&pot, &gc, g, &params)?;
        match outcome {
            GapOutcome::NonMinimizing { .. } => nonmin += 1,
            GapOutcome::Foliated { .. } => foliated += 1,
        }
        reports.push(gap_report_json(g, Some(&outcome))?);
    }
    art.json(
        "gap_solution.json",
        json!({
            "lattice": lattice_json(&lat),
            "set": set.to_json(),
            "gaps": reports,
            "non_minimizing": nonmin,
            "foliated": foliated,
        }),
    );
    Ok(())
}

fn standard_map(s: &Scenario, art: &mut Artifacts) -> Result<()> {
    let v = s.v.clone();
    let steps = s.options.steps.unwrap_or(300);
    let verdict = invariant_curve_verdict(&v);
    let (orbit, extra) = if s.lattice == LatticeSpec::Unspecified {
        let pts = iterate(&v, s.options.x0.unwrap_or(0.0), s.options.y0.unwrap_or(0.0), steps);
        (TwistOrbit { points: pts, v: v.clone() }, json!({ "source": "initial_point" }))
    } else {
        let lat = s.period_lattice()?;
        let pot = s.potential(&lat)?;
        let cp = minimize_action(&pot, &lat, s.options.multistart.unwrap_or(8), s.seed)?;
        let short = orbit_from_configuration(&cp.config, &v, lat.p()[0].unsigned_abs() as usize)?;
        let (xs, refine_residual) = lifted_orbit_of_configuration(&cp.config, &v, steps)?;
        let mut dev: f64 = 0.0;
        for (i, x) in xs.iter().enumerate() {
            let d = (x.rem_euclid(1.0) - cp.config.value_at(&[i as i64]).rem_euclid(1.0)).abs();
            dev = dev.max(d.min(1.0 - d));
        }
        let extra = json!({
            "source": "stationary_configuration",
            "lattice": lattice_json(&lat),
            "configuration": cp.record(),
            "step_residual": short.max_residual(),
            "refinement_residual": refine_residual,
            "lifted_deviation_mod1": dev,
        });
        (orbit_from_sequence(&xs, &v), extra)
    };
    let det = orbit.points.iter().map(|&(x, y)| (jacobian_determinant(&v, x, y) - 1.0).abs()).fold(0.0, f64::max);
    art.json(
        "standard_map.json",
        json!({
            "steps": steps,
            "orbit": extra,
            "max_residual": orbit.max_residual(),
            "max_jacobian_defect": det,
            "invariant_curves": verdict,
        }),
    );
    let mut csv = Vec::new();
    orbit.write_csv(&mut csv).expect("in-memory write");
    art.csv("standard_map.csv", csv);
    Ok(())
}

fn ghost_limit(s: &Scenario, art: &mut Artifacts) -> Result<()> {
    let lats = s.convergent_lattices()?;
    let omega = match &s.lattice {
        LatticeSpec::Rotation { omega, .. } => omega.clone(),
        _ => unreachable!("validated"),
    };
    let pot = s.base_potential(1);
    let grid = uniform_grid(s.options.grid.unwrap_or(32));
    let opts = GhostLimitOptions { seed: s.seed, params: ghost_params(s), ..GhostLimitOptions::default() };
    let report = ghost_circle_limit(&pot, &omega, &lats, &grid, s.tol, &opts)?;
    let ok: Vec<_> = report.convergents.iter().filter(|c| c.error.is_none()).collect();
    if ok.is_empty() {
        let detail = serde_json::to_value(&report).expect("report serializes");
        return Err(CommandError::Numerical { message: "no convergent produced a ghost circle".into(), detail });
    }
    let mut csv = String::from("xi");
    for c in &ok {
        csv += &format!(",T_{}_{}", -c.q[0], c.p[0]);
    }
    csv.push('\n');
    for (g, xi) in grid.iter().enumerate() {
        csv += &format!("{xi:.17e}");
        for c in &ok {
            csv += &format!(",{:.17e}", c.t_values[0][g]);
        }
        csv.push('\n');
    }
    let summary = json!({
        "monotone_after_first": report.monotone_after_first(0),
        "final_delta": report.final_delta(0),
    });
    let mut body = serde_json::to_value(&report).expect("report serializes");
    body["summary"] = summary;
    art.json("ghost_limit.json", body);
    art.csv("ghost_limit.csv", csv.into_bytes());
    Ok(())
}
