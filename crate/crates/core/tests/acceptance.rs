//! Acceptance gate: runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line each. Exits non-zero when any criterion fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use aubrykit::aubry_mather::{
    detect_gaps, gap_solution, gap_summability_check, oscillation_gap_criterion, orbit_closure, GapOutcome,
    GapSolutionParams, OscillationVerdict, GAP_TOL,
};
use aubrykit::flow::{comparison_check, lyapunov_check, parabolic_harnack_check, FlowParams};
use aubrykit::ghost::{assemble_ghost_circle, ghost_circle_limit, GhostCircle, GhostLimitOptions, GhostParams};
use aubrykit::lattice::{convergents, Configuration, PeriodLattice};
use aubrykit::linalg::sym_eigenvalues;
use aubrykit::minimizers::{find_critical_points, minimize_action, verify_global_minimizer};
use aubrykit::potentials::{
    fk_potential, is_morse, morse_approximation, FkSpec, LocalPotential, PeriodicAction, TrigSeries, TrigTerm,
};
use aubrykit::twist::{jacobian_determinant, lifted_orbit_of_configuration, orbit_from_configuration};

type Check = std::result::Result<String, String>;

fn list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.2e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn ensure(ok: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn e2s(e: aubrykit::Error) -> String {
    e.to_string()
}

fn fk(k: f64) -> LocalPotential {
    fk_potential(FkSpec::standard(1, k))
}

fn lat(p: i64, q: i64) -> PeriodLattice {
    PeriodLattice::one_dim(p, q).unwrap()
}

/// Closed-form standard onsite potential `(k/8π²) cos 2πξ`.
fn v_standard(k: f64, x: f64) -> f64 {
    k / (8.0 * PI * PI) * (2.0 * PI * x).cos()
}

fn scalar_pipeline() -> Check {
    let pot = fk(1.0);
    let l = lat(1, 0);
    let min = minimize_action(&pot, &l, 8, 1).map_err(e2s)?;
    let w_ref = v_standard(1.0, 0.5);
    ensure((min.x0() - 0.5).abs() <= 1e-10, format!("minimizer at {}", min.x0()))?;
    ensure((min.value - w_ref).abs() <= 1e-10, format!("W = {} vs {}", min.value, w_ref))?;

    let cat = find_critical_points(&pot, &l, 8, 1e-11, 1e-7).map_err(e2s)?;
    let saddle = cat
        .iter()
        .find(|c| (c.x0() - c.x0().round()).abs() <= 1e-10)
        .ok_or("no critical point at integer height")?;
    ensure(saddle.index == 1, format!("saddle index {}", saddle.index))?;

    let gc = assemble_ghost_circle(&pot, &l, &GhostParams::default()).map_err(e2s)?;
    for s in 0..41 {
        let xi = -1.0 + 0.075 * s as f64;
        let c = gc.evaluate(xi).map_err(e2s)?;
        ensure((c.values()[0] - xi).abs() <= 1e-8, format!("Γ(ξ={xi}) = {}", c.values()[0]))?;
    }

    let am = orbit_closure(&min, &l).map_err(e2s)?;
    let gaps = detect_gaps(&pot, &am, GAP_TOL).map_err(e2s)?;
    ensure(gaps.len() == 1, format!("{} gaps", gaps.len()))?;
    let g = &gaps[0];
    ensure((g.y_minus.x0() - 0.5).abs() <= 1e-10 && (g.y_plus.x0() - 1.5).abs() <= 1e-10, "gap endpoints")?;
    let l1 = gap_summability_check(g, &l).map_err(e2s)?;
    ensure((l1.sum - 1.0).abs() <= 1e-8, format!("l1 sum {}", l1.sum))?;

    let w_gap_ref = v_standard(1.0, 1.0) - v_standard(1.0, 0.5);
    match gap_solution(&pot, &gc, g, &GapSolutionParams::default()).map_err(e2s)? {
        GapOutcome::NonMinimizing { point, w_gap, .. } => {
            ensure((point.x0() - 1.0).abs() <= 1e-8, format!("gap solution at {}", point.x0()))?;
            ensure((w_gap - w_gap_ref).abs() <= 1e-8, format!("W_gap = {w_gap} vs {w_gap_ref}"))?;
            Ok(format!("W = {:.12e}, l1 = {:.10}, W_gap = {:.12e}", min.value, l1.sum, w_gap))
        }
        o => Err(format!("gap classified as {o:?}")),
    }
}

fn degeneracy() -> Check {
    let pot = fk_potential(FkSpec::free(1));
    let l = lat(2, -1);
    let action = PeriodicAction::new(&pot, &l).map_err(e2s)?;
    for xi in [0.0, 0.3, 0.77] {
        let c = Configuration::linear(&l, xi);
        let ev = sym_eigenvalues(&action.hessian(c.values()));
        ensure(ev[0].abs() <= 1e-10 && (ev[1] - 2.0).abs() <= 1e-10, format!("eigenvalues {ev:?}"))?;
    }
    let before = is_morse(&pot, &l, &[Configuration::linear(&l, 0.0)], 1e-8).map_err(e2s)?;
    ensure(!before.morse, "free chain reported Morse")?;
    let approx = morse_approximation(&pot, &l, 100.0, 1, 1e-3).map_err(e2s)?;
    let cat = find_critical_points(&approx, &l, 8, 1e-11, 1e-7).map_err(e2s)?;
    let configs: Vec<Configuration> = cat.iter().map(|c| c.config.clone()).collect();
    let after = is_morse(&approx, &l, &configs, 1e-8).map_err(e2s)?;
    ensure(after.morse, format!("approximation not Morse: min |eig| {}", after.min_abs_eigenvalue))?;
    Ok(format!("{} critical points after approximation, min |eig| = {:.3e}", cat.len(), after.min_abs_eigenvalue))
}

fn comparison_suite() -> Check {
    let pot = fk(0.5);
    let l = lat(2, -1);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = FlowParams::default();
    let mut worst = f64::INFINITY;
    for pair in 0..100 {
        let mut x = Configuration::linear(&l, rng.gen_range(0.0..1.0));
        for v in x.values_mut() {
            *v += rng.gen_range(-0.3..0.3);
        }
        let mut y = x.clone();
        let zero_site = rng.gen_range(0..2);
        for (i, v) in y.values_mut().iter_mut().enumerate() {
            if i != zero_site || pair % 2 == 0 {
                *v += rng.gen_range(1e-3..0.2);
            }
        }
        for t in [0.1, 1.0, 5.0] {
            let r = comparison_check(&pot, &x, &y, t, &params).map_err(e2s)?;
            ensure(r.ordered && r.margin > 0.0, format!("pair {pair}, t = {t}: margin {}", r.margin))?;
            worst = worst.min(r.margin);
        }
    }
    Ok(format!("300/300 ordered, smallest margin {worst:.3e}"))
}

/// `x_i = φ(ωi + ξ)` with `φ(s) = s + a sin(2πs)/2π`.
fn birkhoff(l: &PeriodLattice, xi: f64, a: f64) -> Configuration {
    let lin = Configuration::linear(l, xi);
    let vals = lin.values().iter().map(|s| s + a * (2.0 * PI * s).sin() / (2.0 * PI)).collect();
    Configuration::new(l.clone(), vals).unwrap()
}

fn harnack_suite() -> Check {
    let pot = fk(0.5);
    let l = lat(2, -1);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let params = FlowParams::default();
    let mut checks = 0;
    let mut tightest = f64::INFINITY;
    for pair in 0..100 {
        let a = rng.gen_range(-0.9..0.9);
        let xi = rng.gen_range(0.0..1.0);
        let x = birkhoff(&l, xi, a);
        let y = birkhoff(&l, xi + rng.gen_range(0.01..0.5), a);
        let i0: i64 = rng.gen_range(-2..=2);
        for dist in 0..=2i64 {
            let r = parabolic_harnack_check(&pot, &x, &y, 1.0, &[i0], &[i0 + dist], &params).map_err(e2s)?;
            ensure(r.verdict, format!("pair {pair}, ||i-k|| = {dist}: {} < {}", r.lhs, r.rhs))?;
            tightest = tightest.min(r.lhs / r.rhs);
            checks += 1;
        }
    }
    Ok(format!("{checks}/{checks} hold, smallest lhs/rhs = {tightest:.3}"))
}

fn energy_identity() -> Check {
    let pot = fk(1.0);
    let l = lat(3, -1);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for run in 0..20 {
        let mut x = Configuration::linear(&l, rng.gen_range(0.0..1.0));
        for v in x.values_mut() {
            *v += rng.gen_range(-0.3..0.3);
        }
        let t = rng.gen_range(0.5..5.0);
        let r = lyapunov_check(&pot, &x, t, &FlowParams::default()).map_err(e2s)?;
        ensure(r.residual <= 1e-6, format!("run {run}: residual {}", r.residual))?;
        worst = worst.max(r.residual);
    }
    Ok(format!("20/20, largest residual {worst:.3e}"))
}

fn derivative_check(action: &PeriodicAction, x: &[f64]) -> std::result::Result<(f64, f64), String> {
    let h = 1e-5;
    let n = x.len();
    let g = action.gradient(x);
    let hess = action.hessian(x);
    let mut y = x.to_vec();
    let (mut gerr, mut herr): (f64, f64) = (0.0, 0.0);
    let gscale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let hscale = hess.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for a in 0..n {
        y[a] = x[a] + h;
        let (wp, gp) = (action.value(&y), action.gradient(&y));
        y[a] = x[a] - h;
        let (wm, gm) = (action.value(&y), action.gradient(&y));
        y[a] = x[a];
        gerr = gerr.max(((wp - wm) / (2.0 * h) - g[a]).abs());
        for b in 0..n {
            herr = herr.max(((gp[b] - gm[b]) / (2.0 * h) - hess[(b, a)]).abs());
        }
    }
    let (rg, rh) = (gerr / gscale, herr / hscale);
    ensure(rg <= 1e-6 && rh <= 1e-6, format!("relative errors {rg:.3e}, {rh:.3e}"))?;
    Ok((rg, rh))
}

fn derivatives() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let l1 = lat(3, -1);
    let l2 = PeriodLattice::diagonal(&[2, 2], &[-1, 0]).unwrap();
    let fk1 = PeriodicAction::new(&fk(1.0), &l1).unwrap();
    let fk2 = PeriodicAction::new(&fk_potential(FkSpec::standard(2, 1.0)), &l2).unwrap();
    let morse = PeriodicAction::new(&morse_approximation(&fk(1.0), &l1, 100.0, 2, 1e-3).map_err(e2s)?, &l1).unwrap();
    let cases: [(&PeriodicAction, &PeriodLattice, usize); 3] = [(&fk1, &l1, 20), (&fk2, &l2, 10), (&morse, &l1, 20)];
    let (mut wg, mut wh): (f64, f64) = (0.0, 0.0);
    let mut count = 0;
    for (action, l, m) in cases {
        for _ in 0..m {
            let mut x = Configuration::linear(l, rng.gen_range(0.0..1.0));
            for v in x.values_mut() {
                *v += rng.gen_range(-0.4..0.4);
            }
            let (g, h) = derivative_check(action, x.values())?;
            wg = wg.max(g);
            wh = wh.max(h);
            count += 1;
        }
    }
    Ok(format!("{count} configurations, worst relative errors {wg:.3e} (gradient), {wh:.3e} (Hessian)"))
}

fn aubry_ordering() -> Check {
    let pot = fk(1.0);
    let mut worst: f64 = 0.0;
    for (p, q) in [(1, 0), (2, -1), (3, -1)] {
        let l = lat(p, q);
        let min = minimize_action(&pot, &l, 8, 1).map_err(e2s)?;
        let am = orbit_closure(&min, &l).map_err(|e| format!("ω = {}/{}: {e}", -q, p))?;
        ensure(am.len() == p as usize, format!("ω = {}/{}: {} translates", -q, p, am.len()))?;
        let rep = verify_global_minimizer(&pot, &min, 1, 16, 1).map_err(e2s)?;
        ensure(rep.ordering_pass, format!("ω = {}/{}: translates not strictly ordered", -q, p))?;
        for n in [2, 3] {
            let fine = l.refine(n).map_err(e2s)?;
            let fmin = minimize_action(&pot, &fine, 8, 1).map_err(e2s)?;
            let density = fmin.value / n as f64;
            let d = (density - min.value).abs();
            ensure(d <= 1e-8, format!("ω = {}/{}, n = {n}: density {density} vs {}", -q, p, min.value))?;
            worst = worst.max(d);
        }
    }
    Ok(format!("ω ∈ {{0, 1/2, 1/3}} ordered; density mismatch ≤ {worst:.3e}"))
}

fn twist_correspondence() -> Check {
    let k = 0.9;
    let pot = fk(k);
    let l = lat(3, -1);
    let min = minimize_action(&pot, &l, 8, 1).map_err(e2s)?;
    let v = TrigSeries::standard(k);
    let orbit = orbit_from_configuration(&min.config, &v, 3).map_err(e2s)?;
    let res = orbit.max_residual();
    ensure(res <= 1e-9, format!("step residual {res}"))?;
    let (xs, _) = lifted_orbit_of_configuration(&min.config, &v, 300).map_err(e2s)?;
    let mut dev: f64 = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let d = (x.rem_euclid(1.0) - min.config.value_at(&[i as i64]).rem_euclid(1.0)).abs();
        dev = dev.max(d.min(1.0 - d));
    }
    ensure(dev <= 1e-7, format!("300-step deviation {dev}"))?;
    let mut jac: f64 = 0.0;
    for &(x, y) in &orbit.points {
        jac = jac.max((jacobian_determinant(&v, x, y) - 1.0).abs());
    }
    ensure(jac <= 1e-12, format!("|det - 1| = {jac}"))?;
    Ok(format!("residual {res:.2e}, 300-step deviation {dev:.2e}, |det - 1| {jac:.2e}"))
}

fn oscillation() -> Check {
    let v = TrigSeries { terms: vec![TrigTerm { harmonic: 1, cos: 1.25, sin: 0.0 }] };
    let base = fk_potential(FkSpec::free(1));
    let mut widths = Vec::new();
    for (p, q) in [(1, 0), (2, -1)] {
        let l = lat(p, q);
        let r = oscillation_gap_criterion(&base, &v, &l).map_err(e2s)?;
        ensure((r.osc_v - 2.5).abs() <= 1e-12, format!("osc V = {}", r.osc_v))?;
        ensure(r.verdict == OscillationVerdict::GapsMustExist, "criterion silent at osc V = 2.5")?;
        ensure(r.cross_check.gaps > 0 && r.cross_check.max_width > 1e-3, format!("ω = {}/{}: no gap found", -q, p))?;
        ensure(r.standard_form_threshold == "k > 8π²" && r.percival_bound == "63/64", "threshold metadata")?;
        widths.push(r.cross_check.max_width);
    }
    let free = fk_potential(FkSpec::free(1));
    let l = lat(2, -1);
    let members = (0..64).map(|i| Configuration::linear(&l, i as f64 / 64.0)).collect();
    let gc = GhostCircle::from_family(&free, &l, members).map_err(e2s)?;
    let min = minimize_action(&free, &l, 4, 1).map_err(e2s)?;
    let am = orbit_closure(&min, &l).map_err(e2s)?;
    ensure(detect_gaps(&free, &am, GAP_TOL).map_err(e2s)?.is_empty(), "gaps reported for V ≡ 0")?;
    let gap = aubrykit::aubry_mather::Gap::new(am.elements[0].clone(), am.elements[1].clone()).map_err(e2s)?;
    match gap_solution(&free, &gc, &gap, &GapSolutionParams::default()).map_err(e2s)? {
        GapOutcome::Foliated { samples, .. } => Ok(format!("gap widths {}; V ≡ 0 foliated over {samples} samples", list(&widths))),
        o => Err(format!("V ≡ 0 classified as {o:?}")),
    }
}

fn ghost_limit() -> Check {
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    let lats: Vec<PeriodLattice> = convergents(golden, 7)
        .into_iter()
        .filter(|&(num, den)| num >= 1 && den <= 13)
        .map(|(num, den)| PeriodLattice::from_fraction(num, den).unwrap())
        .collect();
    let fr: Vec<String> = lats.iter().map(|l| format!("{}/{}", -l.q()[0], l.p()[0])).collect();
    ensure(fr == ["1/1", "1/2", "2/3", "3/5", "5/8", "8/13"], format!("convergents {fr:?}"))?;
    let grid: Vec<f64> = (0..32).map(|i| i as f64 / 32.0).collect();
    let opts = GhostLimitOptions { ks: vec![vec![0], vec![1]], ..Default::default() };
    let rep = ghost_circle_limit(&fk(0.5), &[golden], &lats, &grid, 1e-8, &opts).map_err(e2s)?;
    for c in &rep.convergents {
        ensure(c.error.is_none(), format!("{:?}/{:?}: {:?}", c.q, c.p, c.error))?;
    }
    let d = &rep.deltas[0];
    ensure(rep.monotone_after_first(0), format!("T_0 deltas not monotone: {}", list(d)))?;
    let last = rep.final_delta(0).unwrap();
    ensure(last < 1e-2, format!("final T_0 delta {last}"))?;
    Ok(format!("T_0 deltas {}; T_1 deltas (information) {}", list(d), list(&rep.deltas[1])))
}

fn main() {
    let criteria: [(&str, fn() -> Check, u64); 10] = [
        ("scalar FK pipeline", scalar_pipeline, 2),
        ("degeneracy handling", degeneracy, 2),
        ("comparison principle", comparison_suite, 20),
        ("parabolic Harnack", harnack_suite, 30),
        ("energy identity", energy_identity, 0),
        ("analytic derivatives", derivatives, 0),
        ("Aubry ordering and refinement", aubry_ordering, 0),
        ("twist-map correspondence", twist_correspondence, 0),
        ("oscillation criterion", oscillation, 0),
        ("ghost-circle convergence", ghost_limit, 120),
    ];
    let mut failed = 0;
    for (i, (name, run, bound)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let el = start.elapsed();
        let out = match out {
            Ok(m) if *bound > 0 && el > Duration::from_secs(*bound) => Err(format!("{m}; took {el:.2?} > {bound} s")),
            o => o,
        };
        match out {
            Ok(m) => println!("PASS {:>2} {name} ({el:.2?}): {m}", i + 1),
            Err(m) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({el:.2?}): {m}", i + 1);
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
