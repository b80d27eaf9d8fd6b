//! Critical points of `W_{p,q}`: minimization, catalogs, Morse data and
//! falsification tests for global minimality.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{flow_to_equilibrium_with, newton_polish, FlowParams};
use crate::lattice::{ball, compare_with_tol, Configuration, ConfigurationRecord, OrderRelation, PeriodLattice};
use crate::linalg::{morse_index, norm2, solve_shifted, sym_eigen, sym_eigenvalues};
use crate::potentials::{is_morse, morse_approximation_with_degree, default_morse_degree, LocalPotential, PeriodicAction};

/// Eigenvalues with `|λ| <= DEGENERACY_TOL` flag a critical point degenerate.
pub const DEGENERACY_TOL: f64 = 1e-8;

/// Seed budget above which [`find_critical_points`] switches from the full
/// grid to Birkhoff seeds.
pub const FULL_GRID_LIMIT: usize = 20_000;

/// A stationary configuration with its Hessian spectrum.
#[derive(Clone, Debug)]
pub struct CriticalPoint {
    pub config: Configuration,
    pub value: f64,
    pub gradient_norm: f64,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Number of negative eigenvalues.
    pub index: usize,
    pub degenerate: bool,
}

impl CriticalPoint {
    pub fn evaluate(pot: &LocalPotential, config: &Configuration) -> Result<Self> {
        Ok(Self::evaluate_with(&PeriodicAction::new(pot, config.lattice())?, config))
    }

    pub fn evaluate_with(action: &PeriodicAction, config: &Configuration) -> Self {
        let (value, g) = action.value_gradient(config.values());
        let eigenvalues = sym_eigenvalues(&action.hessian(config.values()));
        let index = morse_index(&eigenvalues, DEGENERACY_TOL);
        let degenerate = eigenvalues.iter().any(|v| v.abs() <= DEGENERACY_TOL);
        CriticalPoint { config: config.clone(), value, gradient_norm: norm2(&g), eigenvalues, index, degenerate }
    }

    pub fn min_abs_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }

    pub fn x0(&self) -> f64 {
        self.config.x0()
    }

    /// The same point moved by `x ↦ x + c` with `c` an integer.
    pub fn vertical(&self, c: i64) -> Self {
        CriticalPoint { config: self.config.offset(c as f64), ..self.clone() }
    }

    /// `τ_{k,l}` applied to the configuration; spectral data is shift invariant.
    pub fn shifted(&self, k: &[i64], l: i64) -> Self {
        CriticalPoint { config: self.config.shift(k, l), ..self.clone() }
    }

    pub fn record(&self) -> CriticalPointRecord {
        CriticalPointRecord {
            config: ConfigurationRecord::from(&self.config),
            w: self.value,
            gradient_norm: self.gradient_norm,
            eigenvalues: self.eigenvalues.clone(),
            index: self.index,
            degenerate: self.degenerate,
        }
    }
}

/// JSON form of a catalog entry.
#[derive(Clone, Debug, Serialize, serde::Deserialize)]
pub struct CriticalPointRecord {
    pub config: ConfigurationRecord,
    #[serde(rename = "W")]
    pub w: f64,
    pub gradient_norm: f64,
    pub eigenvalues: Vec<f64>,
    pub index: usize,
    pub degenerate: bool,
}

/// Flow parameters used by the searches in this module.
pub fn search_params() -> FlowParams {
    FlowParams::default()
}

fn perturbed_linear(lattice: &PeriodLattice, xi: f64, amp: f64, rng: &mut ChaCha8Rng) -> Configuration {
    let mut c = Configuration::linear(lattice, xi);
    for v in c.values_mut() {
        *v += rng.gen_range(-amp..=amp);
    }
    c
}

/// Best polished critical point over linear starts `x^{ω,ξ}` with `ξ` on a
/// uniform grid plus seeded perturbations of them.
pub fn minimize_action(pot: &LocalPotential, lattice: &PeriodLattice, multistart: usize, seed: u64) -> Result<CriticalPoint> {
    if multistart == 0 {
        return Err(Error::InvalidArgument("multistart must be at least 1".into()));
    }
    let action = PeriodicAction::new(pot, lattice)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts: Vec<Configuration> =
        (0..multistart).map(|s| Configuration::linear(lattice, (s as f64 + 0.5) / multistart as f64)).collect();
    for _ in 0..multistart {
        let xi = rng.gen_range(0.0..1.0);
        starts.push(perturbed_linear(lattice, xi, 0.25, &mut rng));
    }
    minimize_from(&action, &starts)
}

/// Lowest converged equilibrium of the flow from the given starts. A best
/// point with negative directions is pushed off along them and re-flowed.
pub fn minimize_from(action: &PeriodicAction, starts: &[Configuration]) -> Result<CriticalPoint> {
    let params = search_params();
    let results: Vec<Option<CriticalPoint>> = starts
        .par_iter()
        .map(|s| flow_to_equilibrium_with(action, s, params.grad_tol, &params).ok().and_then(|e| e.candidate))
        .collect();
    let mut best = pick_lowest(results.into_iter().flatten()).ok_or(Error::NoConvergence)?;
    for _ in 0..4 {
        if best.index == 0 {
            break;
        }
        let e = sym_eigen(&action.hessian(best.config.values()));
        let v = e.vectors.column(0);
        let mut improved = None;
        for sgn in [1.0, -1.0] {
            let mut c = best.config.clone();
            for (i, x) in c.values_mut().iter_mut().enumerate() {
                *x += sgn * 1e-3 * v[i];
            }
            if let Ok(eq) = flow_to_equilibrium_with(action, &c, params.grad_tol, &params) {
                if let Some(cp) = eq.candidate {
                    if cp.value < best.value - 1e-14 && improved.as_ref().is_none_or(|b: &CriticalPoint| cp.value < b.value) {
                        improved = Some(cp);
                    }
                }
            }
        }
        match improved {
            Some(cp) => best = cp,
            None => break,
        }
    }
    Ok(canonical_vertical(best))
}

fn pick_lowest(it: impl Iterator<Item = CriticalPoint>) -> Option<CriticalPoint> {
    let mut best: Option<CriticalPoint> = None;
    for cp in it {
        let cp = canonical_vertical(cp);
        let better = match &best {
            None => true,
            Some(b) => {
                cp.value < b.value - 1e-12 * (1.0 + b.value.abs())
                    || ((cp.value - b.value).abs() <= 1e-12 * (1.0 + b.value.abs()) && cp.x0() < b.x0())
            }
        };
        if better {
            best = Some(cp);
        }
    }
    best
}

/// Moves the point vertically so that `x_0 ∈ [0, 1)`.
pub fn canonical_vertical(cp: CriticalPoint) -> CriticalPoint {
    let f = cp.x0().floor() as i64;
    if f == 0 {
        cp
    } else {
        cp.vertical(-f)
    }
}

/// Damped Newton on `∇W` from `x0`; any critical point is a valid limit.
pub(crate) fn newton_critical(action: &PeriodicAction, x0: &[f64], grad_tol: f64, max_iter: usize) -> Option<Vec<f64>> {
    let mut x = x0.to_vec();
    let mut g = action.gradient(&x);
    let mut gn = norm2(&g);
    for _ in 0..max_iter {
        if gn <= grad_tol {
            break;
        }
        let h = action.hessian(&x);
        let mut step = solve_shifted(&h, &g, 1e-10);
        let sn = norm2(&step);
        if !sn.is_finite() {
            return None;
        }
        if sn > 1.0 {
            step.iter_mut().for_each(|v| *v /= sn);
        }
        let mut s = 1.0;
        let mut moved = false;
        for _ in 0..30 {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, d)| a - s * d).collect();
            let gt = action.gradient(&trial);
            let gtn = norm2(&gt);
            if gtn < (1.0 - 1e-4 * s) * gn {
                x = trial;
                g = gt;
                gn = gtn;
                moved = true;
                break;
            }
            s *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let (x, gn) = newton_polish(action, &x, grad_tol, 6);
    (gn <= grad_tol).then_some(x)
}

/// All shift-class translates of `x`, each moved vertically to `x_0 ∈ [0,1)`.
pub fn canonical_translates(x: &Configuration) -> Vec<Configuration> {
    x.lattice()
        .shift_classes()
        .iter()
        .map(|c| {
            let y = x.shift(&c.k, c.l);
            let f = y.x0().floor();
            y.offset(-f)
        })
        .collect()
}

/// Whether `a` and `b` agree modulo shift classes and `x ↦ x + 1`.
pub fn same_orbit(a: &Configuration, b: &Configuration, tol: f64) -> bool {
    let f = b.x0().floor();
    let bn = b.offset(-f);
    canonical_translates(a).iter().any(|t| {
        t.sup_distance(&bn) <= tol || t.offset(1.0).sup_distance(&bn) <= tol || t.offset(-1.0).sup_distance(&bn) <= tol
    })
}

/// Newton from seeds over `[0,1)^{|B_p|}` relative to the linear
/// configuration, deduplicated modulo shift classes and `x ↦ x + 1`, ordered
/// by `x_0 ∈ [0,1)`.
///
/// When `grid_per_dof^{|B_p|}` exceeds [`FULL_GRID_LIMIT`] the seeds are the
/// linear family plus seeded perturbations of it, and the equilibria of the
/// flow from the linear family are added so every index-0 class reachable from
/// Birkhoff starts is present.
pub fn find_critical_points(
    pot: &LocalPotential,
    lattice: &PeriodLattice,
    grid_per_dof: usize,
    grad_tol: f64,
    dedupe_tol: f64,
) -> Result<Vec<CriticalPoint>> {
    if grid_per_dof < 2 {
        return Err(Error::InvalidArgument("grid_per_dof must be at least 2".into()));
    }
    let action = PeriodicAction::new(pot, lattice)?;
    let n = lattice.size();
    let base = Configuration::linear(lattice, 0.0);
    let total = (grid_per_dof as f64).powi(n as i32);
    let mut seeds: Vec<Vec<f64>> = Vec::new();
    if total <= FULL_GRID_LIMIT as f64 {
        let g = grid_per_dof;
        let mut digits = vec![0usize; n];
        loop {
            seeds.push(base.values().iter().zip(&digits).map(|(b, &d)| b + d as f64 / g as f64).collect());
            let mut a = 0;
            loop {
                if a == n {
                    break;
                }
                digits[a] += 1;
                if digits[a] == g {
                    digits[a] = 0;
                    a += 1;
                } else {
                    break;
                }
            }
            if a == n {
                break;
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0x00c0_ffee);
        let m = grid_per_dof * n;
        for s in 0..m {
            let xi = s as f64 / m as f64;
            seeds.push(Configuration::linear(lattice, xi).into_values());
            for _ in 0..4 {
                seeds.push(perturbed_linear(lattice, xi, 0.5 / n as f64, &mut rng).into_values());
            }
        }
    }
    let found: Vec<Option<Vec<f64>>> = seeds.par_iter().map(|s| newton_critical(&action, s, grad_tol, 60)).collect();
    let mut points: Vec<CriticalPoint> = found
        .into_iter()
        .flatten()
        .map(|v| canonical_vertical(CriticalPoint::evaluate_with(&action, &Configuration::new(lattice.clone(), v).unwrap())))
        .collect();

    // flow equilibria from the linear family reach every reachable minimum
    let params = search_params();
    let m = (2 * grid_per_dof).max(8);
    let flows: Vec<Option<CriticalPoint>> = (0..m)
        .into_par_iter()
        .map(|s| {
            let x = Configuration::linear(lattice, (s as f64 + 0.5) / m as f64);
            flow_to_equilibrium_with(&action, &x, grad_tol, &params).ok().and_then(|e| e.candidate)
        })
        .collect();
    points.extend(flows.into_iter().flatten().map(canonical_vertical));
    Ok(dedupe(points, dedupe_tol))
}

/// Keeps one representative per orbit, ordered by `(x_0, W)`.
pub fn dedupe(mut points: Vec<CriticalPoint>, tol: f64) -> Vec<CriticalPoint> {
    points.sort_by(|a, b| a.gradient_norm.total_cmp(&b.gradient_norm));
    let mut out: Vec<CriticalPoint> = Vec::new();
    for p in points {
        if !out.iter().any(|q| same_orbit(&q.config, &p.config, tol)) {
            out.push(p);
        }
    }
    out.sort_by(|a, b| a.x0().total_cmp(&b.x0()).then(a.value.total_cmp(&b.value)));
    out
}

/// Outcome of [`verify_global_minimizer`].
#[derive(Clone, Debug, Serialize)]
pub struct GlobalMinimizerReport {
    pub verdict: bool,
    /// Smallest `W(competitor) - W(x)` seen in parts (a) and (b).
    pub worst_margin: f64,
    pub perturbations_pass: bool,
    pub reminimization_pass: bool,
    pub ordering_pass: bool,
}

/// Falsification test for global minimality of a critical point, run on the
/// refined lattice `(np, nq)`.
pub fn verify_global_minimizer(
    pot: &LocalPotential,
    x: &CriticalPoint,
    n: i64,
    trials: usize,
    seed: u64,
) -> Result<GlobalMinimizerReport> {
    if n < 1 {
        return Err(Error::InvalidArgument("refinement n must be at least 1".into()));
    }
    let coarse = x.config.lattice();
    let fine_lat = coarse.refine(n)?;
    let fine_x = x.config.refine(n)?;
    let action = PeriodicAction::new(pot, &fine_lat)?;
    let w_ref = action.value(fine_x.values());
    let tol = 1e-10 * (1.0 + w_ref.abs());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;

    // (a) perturbations supported on the r-interior of B_{np}
    let r = pot.range() as i64;
    let dom = fine_lat.fundamental_domain();
    let interior: Vec<usize> = (0..dom.len())
        .filter(|&a| {
            ball(fine_lat.dim(), r as usize).iter().all(|o| {
                let idx: Vec<i64> = dom[a].iter().zip(o).map(|(u, v)| u + v).collect();
                fine_lat.decompose(&idx).1.iter().all(|m| *m == 0)
            })
        })
        .collect();
    let support: Vec<usize> = if interior.is_empty() { (0..dom.len()).collect() } else { interior };
    let amps = [0.5, 0.1, 1e-2, 1e-3];
    for tr in 0..trials {
        let amp = amps[tr % amps.len()];
        let mut y = fine_x.values().to_vec();
        if tr % 2 == 0 {
            let c = rng.gen_range(-amp..=amp);
            for &a in &support {
                y[a] += c;
            }
        } else {
            for &a in &support {
                y[a] += rng.gen_range(-amp..=amp);
            }
        }
        worst = worst.min(action.value(&y) - w_ref);
    }
    let perturbations_pass = worst >= -tol;

    // (b) re-minimization on the refined lattice from perturbed starts
    let params = search_params();
    let restarts = (trials / 8).clamp(2, 8);
    let starts: Vec<Configuration> = (0..restarts)
        .map(|_| {
            let mut y = fine_x.clone();
            for v in y.values_mut() {
                *v += rng.gen_range(-0.3..=0.3);
            }
            y
        })
        .collect();
    let mut reminimization_pass = true;
    let eqs: Vec<Option<f64>> = starts
        .par_iter()
        .map(|s| flow_to_equilibrium_with(&action, s, params.grad_tol, &params).ok().map(|e| action.value(e.flow.endpoint.values())))
        .collect();
    for w in eqs.into_iter().flatten() {
        let m = w - w_ref;
        worst = worst.min(m);
        if m < -tol {
            reminimization_pass = false;
        }
    }

    // (c) every distinct translate is strictly comparable
    let mut ordering_pass = true;
    for c in coarse.shift_classes() {
        let t = x.config.shift(&c.k, c.l);
        for dl in -2..=2i64 {
            let y = t.offset(dl as f64);
            let rel = compare_with_tol(&x.config, &y, 1e-12)?;
            match rel {
                OrderRelation::Equal | OrderRelation::StrictlyBelow | OrderRelation::StrictlyAbove => {}
                _ => ordering_pass = false,
            }
        }
    }
    Ok(GlobalMinimizerReport {
        verdict: perturbations_pass && reminimization_pass && ordering_pass,
        worst_margin: worst,
        perturbations_pass,
        reminimization_pass,
        ordering_pass,
    })
}

/// Componentwise min and max with the energy excess
/// `W(x) + W(y) - W(min) - W(max)`.
#[derive(Clone, Debug)]
pub struct MinMaxReport {
    pub min: Configuration,
    pub max: Configuration,
    pub excess: f64,
}

pub fn minmax_combine(pot: &LocalPotential, x: &Configuration, y: &Configuration) -> Result<MinMaxReport> {
    let (lo, hi) = x.min_max(y)?;
    let action = PeriodicAction::new(pot, x.lattice())?;
    let excess = action.value(x.values()) + action.value(y.values()) - action.value(lo.values()) - action.value(hi.values());
    Ok(MinMaxReport { min: lo, max: hi, excess })
}

/// Settings for [`morsify`].
#[derive(Clone, Copy, Debug)]
pub struct MorseOptions {
    pub n: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// `None` selects [`default_morse_degree`].
    pub degree: Option<u32>,
    pub max_attempts: usize,
    pub grid_per_dof: usize,
    pub tol: f64,
}

impl MorseOptions {
    pub fn new(n: f64, epsilon: f64, seed: u64) -> Self {
        MorseOptions { n, epsilon, seed, degree: None, max_attempts: 8, grid_per_dof: 8, tol: 1e-8 }
    }
}

/// A Morse approximation together with its verified catalog.
#[derive(Clone, Debug)]
pub struct Morsified {
    pub potential: LocalPotential,
    pub catalog: Vec<CriticalPoint>,
    pub seed: u64,
    pub attempts: usize,
}

/// Draws Morse approximations with seeds `seed, seed+1, ...` until the catalog
/// found by [`find_critical_points`] is nondegenerate.
pub fn morsify(pot: &LocalPotential, lattice: &PeriodLattice, o: &MorseOptions) -> Result<Morsified> {
    let degree = o.degree.unwrap_or_else(|| default_morse_degree(lattice));
    let mut last = 0.0;
    for attempt in 0..o.max_attempts.max(1) {
        let seed = o.seed.wrapping_add(attempt as u64);
        let p = morse_approximation_with_degree(pot, lattice, o.n, seed, o.epsilon, degree)?;
        let catalog = find_critical_points(&p, lattice, o.grid_per_dof, 1e-11, 1e-6)?;
        if catalog.is_empty() {
            continue;
        }
        let configs: Vec<Configuration> = catalog.iter().map(|c| c.config.clone()).collect();
        let v = is_morse(&p, lattice, &configs, o.tol)?;
        if v.morse {
            return Ok(Morsified { potential: p, catalog, seed, attempts: attempt + 1 });
        }
        last = v.min_abs_eigenvalue;
    }
    Err(Error::MorseRetriesExhausted { attempts: o.max_attempts, eigenvalue: last })
}
