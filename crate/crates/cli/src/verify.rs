//! Invariant suites over built-in FK scenarios.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use aubrykit::aubry_mather::{
    detect_gaps, gap_solution, gap_summability_check, orbit_closure, renormalized_action, GapOutcome, GapSolutionParams,
    GAP_TOL,
};
use aubrykit::flow::{comparison_check, lyapunov_check, parabolic_harnack_check, FlowParams};
use aubrykit::ghost::{assemble_ghost_circle, GhostParams};
use aubrykit::lattice::{compare, Configuration, OrderRelation, PeriodLattice};
use aubrykit::minimizers::{minimize_action, minmax_combine, verify_global_minimizer};
use aubrykit::potentials::{
    fk_potential, morse_approximation, verify_conditions, FkSpec, LocalPotential, PeriodicAction, TrigSeries,
};
use aubrykit::twist::{jacobian_determinant, orbit_from_configuration};

type Check = Result<(), String>;

#[derive(Debug, Serialize)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: usize,
    pub total: usize,
    pub failures: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub quick: bool,
    pub passed: usize,
    pub total: usize,
    pub suites: Vec<SuiteReport>,
}

impl VerifyReport {
    pub fn failed(&self) -> usize {
        self.total - self.passed
    }
}

struct Suite {
    report: SuiteReport,
}

impl Suite {
    fn new(name: &'static str) -> Self {
        Suite { report: SuiteReport { name, passed: 0, total: 0, failures: Vec::new() } }
    }

    fn check(&mut self, label: impl Into<String>, f: impl FnOnce() -> Check) {
        self.report.total += 1;
        match f() {
            Ok(()) => self.report.passed += 1,
            Err(e) => self.report.failures.push(format!("{}: {e}", label.into())),
        }
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s(e: aubrykit::Error) -> String {
    e.to_string()
}

fn fk(d: usize, k: f64) -> LocalPotential {
    fk_potential(FkSpec::standard(d, k))
}

fn lat(p: i64, q: i64) -> PeriodLattice {
    PeriodLattice::one_dim(p, q).expect("valid lattice")
}

fn noisy(l: &PeriodLattice, rng: &mut ChaCha8Rng, amp: f64) -> Configuration {
    let mut x = Configuration::linear(l, rng.gen_range(0.0..1.0));
    for v in x.values_mut() {
        *v += rng.gen_range(-amp..amp);
    }
    x
}

fn raised(x: &Configuration, rng: &mut ChaCha8Rng) -> Configuration {
    let mut y = x.clone();
    for v in y.values_mut() {
        *v += rng.gen_range(0.0..0.2);
    }
    y.values_mut()[0] += 1e-3;
    y
}

/// `x_i = φ(⟨ω,i⟩ + ξ)` with the monotone lift `φ(s) = s + a sin(2πs)/2π`.
fn birkhoff(l: &PeriodLattice, xi: f64, a: f64) -> Configuration {
    let lin = Configuration::linear(l, xi);
    let vals = lin.values().iter().map(|s| s + a * (2.0 * PI * s).sin() / (2.0 * PI)).collect();
    Configuration::new(l.clone(), vals).expect("same lattice")
}

fn lattice_suite(n: usize, seed: u64) -> Suite {
    let mut s = Suite::new("lattice_core");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lats = [lat(3, -1), PeriodLattice::diagonal(&[2, 2], &[-1, 0]).unwrap()];
    for l in &lats {
        let d = l.dim();
        for _ in 0..n {
            let x = noisy(l, &mut rng, 0.3);
            let k: Vec<i64> = (0..d).map(|_| rng.gen_range(-3..=3)).collect();
            let k2: Vec<i64> = (0..d).map(|_| rng.gen_range(-3..=3)).collect();
            let (a, b) = (rng.gen_range(-2..=2), rng.gen_range(-2..=2));
            s.check("shift composition", || {
                let lhs = x.shift(&k, a).shift(&k2, b);
                let ks: Vec<i64> = k.iter().zip(&k2).map(|(u, v)| u + v).collect();
                let dist = lhs.sup_distance(&x.shift(&ks, a + b));
                ensure(dist < 1e-12, || format!("distance {dist:.3e}"))
            });
            s.check("period shifts act trivially", || {
                let mut dist: f64 = 0.0;
                for j in 0..d {
                    let (p, q) = (l.period(j), l.q()[j]);
                    ensure(l.in_period_group(&p, q), || format!("period {j} not in group"))?;
                    dist = dist.max(x.shift(&p, q).sup_distance(&x));
                }
                ensure(dist < 1e-12, || format!("distance {dist:.3e}"))
            });
            let y = raised(&x, &mut rng);
            s.check("shifts preserve order", || {
                let r = compare(&x.shift(&k, a), &y.shift(&k, a)).map_err(e2s)?;
                ensure(r.is_le() && r != OrderRelation::Equal, || format!("relation {}", r.symbol()))
            });
        }
    }
    s
}

fn fd_errors(action: &PeriodicAction, x: &[f64]) -> (f64, f64) {
    let h = 1e-5;
    let g = action.gradient(x);
    let hess = action.hessian(x);
    let mut y = x.to_vec();
    let (mut ge, mut he): (f64, f64) = (0.0, 0.0);
    for a in 0..x.len() {
        y[a] = x[a] + h;
        let (wp, gp) = (action.value(&y), action.gradient(&y));
        y[a] = x[a] - h;
        let (wm, gm) = (action.value(&y), action.gradient(&y));
        y[a] = x[a];
        ge = ge.max(((wp - wm) / (2.0 * h) - g[a]).abs());
        for b in 0..x.len() {
            he = he.max(((gp[b] - gm[b]) / (2.0 * h) - hess[(b, a)]).abs());
        }
    }
    let gs = g.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let hs = hess.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    (ge / gs, he / hs)
}

fn potentials_suite(n: usize, seed: u64) -> Suite {
    let mut s = Suite::new("potentials");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x11);
    let l = lat(3, -1);
    s.check("conditions hold for FK", || {
        let r = verify_conditions(&fk(1, 1.0), 64, (-2.0, 2.0));
        ensure(r.all_pass(), || r.summary())
    });
    let morse = match morse_approximation(&fk(1, 1.0), &l, 100.0, seed, 1e-3) {
        Ok(p) => p,
        Err(e) => {
            s.check("Morse approximation builds", || Err(e2s(e)));
            return s;
        }
    };
    let actions = [PeriodicAction::new(&fk(1, 1.0), &l).unwrap(), PeriodicAction::new(&morse, &l).unwrap()];
    for action in &actions {
        for _ in 0..n {
            let x = noisy(&l, &mut rng, 0.4);
            s.check("analytic derivatives match differences", || {
                let (g, h) = fd_errors(action, x.values());
                ensure(g <= 1e-6 && h <= 1e-6, || format!("relative errors {g:.3e}, {h:.3e}"))
            });
        }
    }
    s.check("scalar FK potential value", || {
        let a = PeriodicAction::new(&fk(1, 1.0), &lat(1, 0)).unwrap();
        let w = a.value(&[0.0]);
        let want = 1.0 / (8.0 * PI * PI);
        ensure((w - want).abs() < 1e-15, || format!("W(0) = {w}"))
    });
    s
}

fn flow_suite(n: usize, seed: u64) -> Suite {
    let mut s = Suite::new("gradient_flow");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x22);
    let pot = fk(1, 0.5);
    let l = lat(2, -1);
    let params = FlowParams::default();
    let pairs: Vec<(Configuration, Configuration)> = (0..n)
        .map(|_| {
            let (a, xi) = (rng.gen_range(-0.9..0.9), rng.gen_range(0.0..1.0));
            (birkhoff(&l, xi, a), birkhoff(&l, xi + rng.gen_range(0.01..0.5), a))
        })
        .collect();
    let results: Vec<(Check, Check, Check)> = pairs
        .par_iter()
        .map(|(x, y)| {
            let cmp = [0.1, 1.0].iter().try_for_each(|&t| {
                let r = comparison_check(&pot, x, y, t, &params).map_err(e2s)?;
                ensure(r.ordered && r.margin > 0.0, || format!("t = {t}: margin {:.3e}", r.margin))
            });
            let harn = parabolic_harnack_check(&pot, x, y, 1.0, &[0], &[1], &params).map_err(e2s).and_then(|r| {
                ensure(r.verdict, || format!("lhs {:.3e} < rhs {:.3e}", r.lhs, r.rhs))
            });
            let lyap = lyapunov_check(&pot, x, 1.0, &params).map_err(e2s).and_then(|r| {
                ensure(r.residual <= 1e-6 && r.monotone, || format!("residual {:.3e}", r.residual))
            });
            (cmp, harn, lyap)
        })
        .collect();
    for (cmp, harn, lyap) in results {
        s.check("comparison principle", || cmp);
        s.check("parabolic Harnack", || harn);
        s.check("energy identity", || lyap);
    }
    s
}

fn minimizers_suite(n: usize, seed: u64) -> Suite {
    let mut s = Suite::new("minimizers");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x33);
    s.check("scalar minimizer", || {
        let m = minimize_action(&fk(1, 1.0), &lat(1, 0), 8, seed).map_err(e2s)?;
        let want = -1.0 / (8.0 * PI * PI);
        ensure((m.x0() - 0.5).abs() <= 1e-10 && (m.value - want).abs() <= 1e-10, || {
            format!("x = {}, W = {}", m.x0(), m.value)
        })
    });
    let l = lat(3, -1);
    let pot = fk(1, 1.0);
    for _ in 0..n {
        let (x, y) = (noisy(&l, &mut rng, 0.4), noisy(&l, &mut rng, 0.4));
        s.check("min-max does not raise action", || {
            let r = minmax_combine(&pot, &x, &y).map_err(e2s)?;
            ensure(r.excess >= -1e-12, || format!("excess {:.3e}", r.excess))
        });
    }
    s.check("minimizer passes global test", || {
        let m = minimize_action(&pot, &l, 8, seed).map_err(e2s)?;
        let r = verify_global_minimizer(&pot, &m, 2, n.max(4), seed).map_err(e2s)?;
        ensure(r.verdict, || format!("worst margin {:.3e}", r.worst_margin))
    });
    s.check("refined action density", || {
        let m = minimize_action(&pot, &l, 8, seed).map_err(e2s)?;
        let f = minimize_action(&pot, &l.refine(2).map_err(e2s)?, 8, seed).map_err(e2s)?;
        let d = (f.value / 2.0 - m.value).abs();
        ensure(d <= 1e-8, || format!("density mismatch {d:.3e}"))
    });
    s
}

fn ghost_suite(n: usize) -> Suite {
    let mut s = Suite::new("ghost_circle");
    let pot = fk(1, 1.0);
    let l = lat(2, -1);
    let gc = match assemble_ghost_circle(&pot, &l, &GhostParams::default()) {
        Ok(g) => g,
        Err(e) => {
            s.check("assembly", || Err(e2s(e)));
            return s;
        }
    };
    let grid: Vec<f64> = (0..=4 * n).map(|g| -0.5 + 2.0 * g as f64 / (4 * n) as f64).collect();
    s.check("parametrized by x_0 and strictly ordered", || {
        let pts: Vec<Configuration> = grid.iter().map(|&xi| gc.evaluate(xi)).collect::<Result<_, _>>().map_err(e2s)?;
        for (xi, p) in grid.iter().zip(&pts) {
            ensure((p.x0() - xi).abs() < 1e-9, || format!("x_0 = {} at ξ = {xi}", p.x0()))?;
        }
        for w in pts.windows(2) {
            let r = compare(&w[0], &w[1]).map_err(e2s)?;
            ensure(r == OrderRelation::StrictlyBelow, || format!("relation {}", r.symbol()))?;
        }
        Ok(())
    });
    s.check("T-map is monotone", || {
        let t: Vec<f64> = grid.iter().map(|&xi| gc.t_map(xi, &[0])).collect::<Result<_, _>>().map_err(e2s)?;
        ensure(t.windows(2).all(|w| w[0] <= w[1] + 1e-12), || "T decreases".into())
    });
    s.check("contains the global minimizer", || {
        let m = minimize_action(&pot, &l, 8, 1).map_err(e2s)?;
        let c = gc.evaluate(m.x0()).map_err(e2s)?;
        let d = c.sup_distance(&m.config);
        ensure(d < 1e-7, || format!("distance {d:.3e}"))
    });
    s.check("skeleton alternates minima and saddles", || {
        let (a, b) = (gc.minima(), gc.saddles());
        ensure(!a.is_empty() && a.len() == b.len(), || format!("{} minima, {} saddles", a.len(), b.len()))?;
        ensure(a.iter().all(|c| c.index == 0) && b.iter().all(|c| c.index == 1), || "wrong Morse indices".into())
    });
    s
}

fn aubry_suite(seed: u64) -> Suite {
    let mut s = Suite::new("aubry_mather");
    let pot = fk(1, 1.0);
    for (p, q) in [(1, 0), (2, -1), (3, -1)] {
        s.check(format!("ω = {}/{p}: translates strictly ordered", -q), || {
            let l = lat(p, q);
            let m = minimize_action(&pot, &l, 8, seed).map_err(e2s)?;
            let set = orbit_closure(&m, &l).map_err(e2s)?;
            ensure(set.len() == p as usize, || format!("{} translates", set.len()))
        });
    }
    s.check("scalar gap and gap solution", || {
        let l = lat(1, 0);
        let m = minimize_action(&pot, &l, 8, seed).map_err(e2s)?;
        let set = orbit_closure(&m, &l).map_err(e2s)?;
        let gaps = detect_gaps(&pot, &set, GAP_TOL).map_err(e2s)?;
        ensure(gaps.len() == 1, || format!("{} gaps", gaps.len()))?;
        let l1 = gap_summability_check(&gaps[0], &l).map_err(e2s)?;
        ensure((l1.sum - 1.0).abs() <= 1e-8, || format!("l1 sum {}", l1.sum))?;
        let gc = assemble_ghost_circle(&pot, &l, &GhostParams::default()).map_err(e2s)?;
        let want = 1.0 / (4.0 * PI * PI);
        match gap_solution(&pot, &gc, &gaps[0], &GapSolutionParams::default()).map_err(e2s)? {
            GapOutcome::NonMinimizing { point, w_gap, .. } => {
                let w = renormalized_action(&pot, &gaps[0], &point.config).map_err(e2s)?;
                ensure((w_gap - want).abs() <= 1e-8 && (w - w_gap).abs() <= 1e-12, || format!("W_gap = {w_gap}"))
            }
            o => Err(format!("classified as {o:?}")),
        }
    });
    s
}

fn twist_suite(n: usize, seed: u64) -> Suite {
    let mut s = Suite::new("twist_map");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x44);
    let k = 0.9;
    let v = TrigSeries::standard(k);
    s.check("stationary configuration is an orbit", || {
        let l = lat(3, -1);
        let m = minimize_action(&fk(1, k), &l, 8, seed).map_err(e2s)?;
        let o = orbit_from_configuration(&m.config, &v, 3).map_err(e2s)?;
        let r = o.max_residual();
        ensure(r <= 1e-9, || format!("residual {r:.3e}"))
    });
    for _ in 0..n {
        let (x, y) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        s.check("area preserving", || {
            let d = (jacobian_determinant(&v, x, y) - 1.0).abs();
            ensure(d <= 1e-12, || format!("|det - 1| = {d:.3e}"))
        });
    }
    s
}

/// Runs every suite; `quick` shrinks the sample counts.
pub fn run_suites(quick: bool, seed: u64) -> VerifyReport {
    let n = if quick { 4 } else { 25 };
    let suites: Vec<SuiteReport> = vec![
        lattice_suite(n, seed),
        potentials_suite(n, seed),
        flow_suite(n, seed),
        minimizers_suite(n, seed),
        ghost_suite(n),
        aubry_suite(seed),
        twist_suite(n, seed),
    ]
    .into_iter()
    .map(|s| s.report)
    .collect();
    let passed = suites.iter().map(|s| s.passed).sum();
    let total = suites.iter().map(|s| s.total).sum();
    VerifyReport { quick, passed, total, suites }
}
