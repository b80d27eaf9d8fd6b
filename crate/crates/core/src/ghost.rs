//! Periodic ghost circles: the index-0 skeleton, mountain-pass saddles, the
//! heteroclinic orbits joining them, the induced parametrization by `x_0`,
//! and the backward time-one map `T^Γ` evaluated along stored orbits.

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::flow::{flow_to_equilibrium_with, integrate_flow, FlowParams};
use crate::lattice::{compare, ConfigurationRecord, Configuration, Index, OrderRelation, PeriodLattice};
use crate::linalg::{norm2, sup_norm, sym_eigen};
use crate::minimizers::{
    canonical_vertical, find_critical_points, minimize_from, morsify, newton_critical, same_orbit, CriticalPoint,
    MorseOptions, DEGENERACY_TOL,
};
use crate::ode::Control;
use crate::potentials::{LocalPotential, PeriodicAction};

/// Settings of the ghost-circle construction.
#[derive(Clone, Copy, Debug)]
pub struct GhostParams {
    pub grid_per_dof: usize,
    pub bisection_steps: usize,
    /// Launch offset from a saddle relative to the sup-gap of its neighbours.
    pub eps_scale: f64,
    pub flow: FlowParams,
    /// Orbits stop once within this sup distance of their target.
    pub orbit_tol: f64,
    pub max_orbit_time: f64,
    /// Largest sup-norm spacing between stored orbit samples.
    pub max_sample_spacing: f64,
}

impl Default for GhostParams {
    fn default() -> Self {
        GhostParams {
            grid_per_dof: 8,
            bisection_steps: 60,
            eps_scale: 1e-6,
            flow: FlowParams::default(),
            orbit_tol: 1e-7,
            max_orbit_time: 1e6,
            max_sample_spacing: 2e-3,
        }
    }
}

/// A stored point of a flow orbit with its velocity `-∇W`.
#[derive(Clone, Debug, Serialize)]
pub struct OrbitSample {
    pub t: f64,
    pub values: Vec<f64>,
    pub velocity: Vec<f64>,
}

/// Flow orbit from a saddle `z` to a neighbouring index-0 point.
///
/// Time `0` is the launch point `z + direction·ε·e_max`. For `t < 0` the orbit
/// is continued by the linearization `z + direction·ε e^{λt} e_max`.
#[derive(Clone, Debug)]
pub struct Heteroclinic {
    pub saddle: CriticalPoint,
    pub target: CriticalPoint,
    /// `+1` travels upward (`≫ z`), `-1` downward.
    pub direction: i8,
    /// Unstable rate `-λ_min(D²W(z))`.
    pub lambda: f64,
    /// Unstable eigenvector, strictly positive with maximal entry 1.
    pub e_max: Vec<f64>,
    pub epsilon: f64,
    pub samples: Vec<OrbitSample>,
}

enum Located {
    Saddle,
    Time(f64),
    /// Fraction of the way from the last sample to the target.
    Tail(f64),
}

fn hermite(a: &OrbitSample, b: &OrbitSample, t: f64, out: &mut [f64]) {
    let h = b.t - a.t;
    if h <= 0.0 {
        out.copy_from_slice(&a.values);
        return;
    }
    let s = ((t - a.t) / h).clamp(0.0, 1.0);
    let (s2, s3) = (s * s, s * s * s);
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    for i in 0..out.len() {
        out[i] = h00 * a.values[i] + h10 * h * a.velocity[i] + h01 * b.values[i] + h11 * h * b.velocity[i];
    }
}

impl Heteroclinic {
    fn origin(&self) -> usize {
        self.saddle.config.lattice().origin()
    }

    /// State at orbit time `t` (any real `t` up to the last sample).
    pub fn state_at(&self, t: f64) -> Vec<f64> {
        let z = self.saddle.config.values();
        if t <= 0.0 {
            let f = self.direction as f64 * self.epsilon * (self.lambda * t).exp();
            return z.iter().zip(&self.e_max).map(|(a, e)| a + f * e).collect();
        }
        let last = self.samples.last().unwrap();
        if t >= last.t {
            return last.values.clone();
        }
        let i = self.samples.partition_point(|s| s.t <= t).saturating_sub(1);
        let mut out = vec![0.0; z.len()];
        hermite(&self.samples[i], &self.samples[i + 1], t, &mut out);
        out
    }

    fn locate(&self, xi: f64) -> Option<Located> {
        let o = self.origin();
        let d = self.direction as f64;
        let z0 = self.saddle.config.values()[o];
        let m0 = self.target.config.values()[o];
        if xi == z0 {
            return Some(Located::Saddle);
        }
        if d * (xi - z0) < 0.0 || d * (xi - m0) > 0.0 {
            return None;
        }
        let l0 = self.samples[0].values[o];
        if d * (xi - l0) < 0.0 {
            let t = ((xi - z0).abs() / (self.epsilon * self.e_max[o])).ln() / self.lambda;
            return Some(Located::Time(t));
        }
        let n = self.samples.len();
        let i = self.samples.partition_point(|s| d * (s.values[o] - xi) <= 0.0);
        // samples[..i] are at or before xi
        if i >= n {
            let last = self.samples[n - 1].values[o];
            let frac = if m0 == last { 1.0 } else { (xi - last) / (m0 - last) };
            return Some(Located::Tail(frac.clamp(0.0, 1.0)));
        }
        let (a, b) = (&self.samples[i - 1], &self.samples[i]);
        let (mut lo, mut hi) = (a.t, b.t);
        let mut buf = vec![0.0; a.values.len()];
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            hermite(a, b, mid, &mut buf);
            if d * (buf[o] - xi) <= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(Located::Time(0.5 * (lo + hi)))
    }

    /// Applies `τ_{k,l}` to the whole orbit.
    fn shifted(&self, action: &PeriodicAction, k: &[i64], l: i64) -> Heteroclinic {
        let lat = self.saddle.config.lattice();
        let z = &self.saddle.config;
        let ze = Configuration::new(lat.clone(), z.values().iter().zip(&self.e_max).map(|(a, e)| a + e).collect()).unwrap();
        let (sz, sze) = (z.shift(k, l), ze.shift(k, l));
        let e_max = sze.values().iter().zip(sz.values()).map(|(a, b)| a - b).collect();
        let samples = self
            .samples
            .iter()
            .map(|s| {
                let c = Configuration::new(lat.clone(), s.values.clone()).unwrap().shift(k, l);
                let velocity = action.gradient(c.values()).iter().map(|v| -v).collect();
                OrbitSample { t: s.t, values: c.into_values(), velocity }
            })
            .collect();
        Heteroclinic {
            saddle: self.saddle.shifted(k, l),
            target: self.target.shifted(k, l),
            direction: self.direction,
            lambda: self.lambda,
            e_max,
            epsilon: self.epsilon,
            samples,
        }
    }
}

/// How Γ is represented.
#[derive(Clone, Debug)]
pub enum GhostKind {
    /// Skeleton of index-0 points over one vertical period (sorted by `x_0`),
    /// the saddle of each gap and its two heteroclinics `[down, up]`.
    Assembled { minima: Vec<CriticalPoint>, saddles: Vec<CriticalPoint>, orbits: Vec<[Heteroclinic; 2]> },
    /// Ordered family of stationary configurations over one vertical period.
    Family { members: Vec<Configuration> },
}

/// A strictly ordered, shift-invariant, flow-invariant family parametrized by
/// `ξ = x_0`.
#[derive(Clone, Debug)]
pub struct GhostCircle {
    pub lattice: PeriodLattice,
    pub potential: LocalPotential,
    pub kind: GhostKind,
}

impl GhostCircle {
    /// Γ given directly by an ordered family of stationary configurations.
    pub fn from_family(potential: &LocalPotential, lattice: &PeriodLattice, mut members: Vec<Configuration>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidArgument("empty family".into()));
        }
        let base = members[0].x0().floor();
        for m in &mut members {
            let f = (m.x0() - base).floor();
            *m = m.offset(-f);
        }
        members.sort_by(|a, b| a.x0().total_cmp(&b.x0()));
        members.dedup_by(|a, b| a.sup_distance(b) < 1e-12);
        Ok(GhostCircle { lattice: lattice.clone(), potential: potential.clone(), kind: GhostKind::Family { members } })
    }

    fn base(&self) -> f64 {
        match &self.kind {
            GhostKind::Assembled { minima, .. } => minima[0].x0(),
            GhostKind::Family { members } => members[0].x0(),
        }
    }

    /// Critical points on Γ over one period (minima and saddles).
    pub fn critical_points(&self) -> Vec<CriticalPoint> {
        match &self.kind {
            GhostKind::Assembled { minima, saddles, .. } => {
                let mut v: Vec<CriticalPoint> = minima.iter().chain(saddles).cloned().collect();
                v.sort_by(|a, b| a.x0().total_cmp(&b.x0()));
                v
            }
            GhostKind::Family { .. } => Vec::new(),
        }
    }

    pub fn minima(&self) -> Vec<CriticalPoint> {
        match &self.kind {
            GhostKind::Assembled { minima, .. } => minima.clone(),
            GhostKind::Family { .. } => Vec::new(),
        }
    }

    pub fn saddles(&self) -> Vec<CriticalPoint> {
        match &self.kind {
            GhostKind::Assembled { saddles, .. } => saddles.clone(),
            GhostKind::Family { .. } => Vec::new(),
        }
    }

    fn reduce(&self, xi: f64) -> (f64, f64) {
        let m = (xi - self.base()).floor();
        (xi - m, m)
    }

    /// `(π_0|_Γ)^{-1}(ξ)`: the element of Γ with `x_0 = ξ`.
    pub fn evaluate(&self, xi: f64) -> Result<Configuration> {
        if !xi.is_finite() {
            return Err(Error::Locate(xi));
        }
        let (x, m) = self.reduce(xi);
        let values = self.point(x, 0.0)?;
        Ok(Configuration::new(self.lattice.clone(), values)?.offset(m))
    }

    /// `T^Γ_k(ξ) = (Ψ_{-1}(evaluate(ξ)))_k`, by stepping back one time unit on
    /// the stored orbit through `evaluate(ξ)`.
    pub fn t_map(&self, xi: f64, k: &[i64]) -> Result<f64> {
        if !xi.is_finite() {
            return Err(Error::Locate(xi));
        }
        let (x, m) = self.reduce(xi);
        let values = self.point(x, 1.0)?;
        Ok(Configuration::new(self.lattice.clone(), values)?.value_at(k) + m)
    }

    /// The point at `x_0 = xi` moved back along its orbit by `back` time units.
    fn point(&self, xi: f64, back: f64) -> Result<Vec<f64>> {
        match &self.kind {
            GhostKind::Family { members } => {
                let n = members.len();
                let i = members.partition_point(|c| c.x0() <= xi);
                let a = &members[i - 1];
                let b = if i < n { members[i].clone() } else { members[0].offset(1.0) };
                let s = if b.x0() == a.x0() { 0.0 } else { (xi - a.x0()) / (b.x0() - a.x0()) };
                Ok(a.lerp(&b, s)?.into_values())
            }
            GhostKind::Assembled { minima, saddles, orbits } => {
                let i = minima.partition_point(|c| c.x0() <= xi).saturating_sub(1);
                if xi == minima[i].x0() {
                    return Ok(minima[i].config.values().to_vec());
                }
                let z = &saddles[i];
                if xi == z.x0() {
                    return Ok(z.config.values().to_vec());
                }
                let orbit = if xi < z.x0() { &orbits[i][0] } else { &orbits[i][1] };
                match orbit.locate(xi).ok_or(Error::Locate(xi))? {
                    Located::Saddle => Ok(z.config.values().to_vec()),
                    Located::Time(t) => Ok(orbit.state_at(t - back)),
                    Located::Tail(frac) => {
                        let last = orbit.samples.last().unwrap();
                        let start = if back == 0.0 { last.values.clone() } else { orbit.state_at(last.t - back) };
                        let target = orbit.target.config.values();
                        Ok(start.iter().zip(target).map(|(a, b)| a + frac * (b - a)).collect())
                    }
                }
            }
        }
    }

    /// `(ξ, T^Γ_k(ξ))` rows for plotting.
    pub fn write_t_map_csv<W: std::io::Write>(&self, grid: &[f64], k: &[i64], mut out: W) -> Result<()> {
        writeln!(out, "xi,T").map_err(|e| Error::InvalidArgument(e.to_string()))?;
        for &xi in grid {
            let t = self.t_map(xi, k)?;
            writeln!(out, "{xi:.17e},{t:.17e}").map_err(|e| Error::InvalidArgument(e.to_string()))?;
        }
        Ok(())
    }

    /// JSON with skeleton, heteroclinic samples and the parametrization on `grid`.
    pub fn to_json(&self, grid: &[f64]) -> Result<serde_json::Value> {
        let param: Vec<serde_json::Value> = grid
            .iter()
            .map(|&xi| self.evaluate(xi).map(|c| json!({ "xi": xi, "values": c.values() })))
            .collect::<Result<_>>()?;
        let body = match &self.kind {
            GhostKind::Assembled { minima, saddles, orbits } => {
                let mut skeleton = Vec::new();
                for (m, z) in minima.iter().zip(saddles) {
                    skeleton.push(json!({ "kind": "minimum", "point": m.record() }));
                    skeleton.push(json!({ "kind": "saddle", "point": z.record() }));
                }
                let het: Vec<serde_json::Value> = orbits
                    .iter()
                    .flat_map(|pair| pair.iter())
                    .map(|h| {
                        json!({
                            "direction": h.direction,
                            "lambda": h.lambda,
                            "epsilon": h.epsilon,
                            "e_max": h.e_max,
                            "saddle_x0": h.saddle.x0(),
                            "target_x0": h.target.x0(),
                            "samples": h.samples.iter().map(|s| json!({ "t": s.t, "values": s.values })).collect::<Vec<_>>(),
                        })
                    })
                    .collect();
                json!({ "kind": "assembled", "skeleton": skeleton, "heteroclinics": het })
            }
            GhostKind::Family { members } => json!({
                "kind": "family",
                "members": members.iter().map(ConfigurationRecord::from).collect::<Vec<_>>(),
            }),
        };
        Ok(json!({
            "lattice": { "d": self.lattice.dim(), "p": self.lattice.p(), "q": self.lattice.q() },
            "potential": { "name": self.potential.name(), "parameters": self.potential.parameters() },
            "circle": body,
            "parametrization": param,
        }))
    }
}

/// Index-0 points of the catalog closed under shift classes and `x ↦ x + 1`,
/// listed over one vertical period with `x_0 ∈ [0, 1)` and strictly ordered.
pub fn index0_skeleton(criticals: &[CriticalPoint], lattice: &PeriodLattice) -> Result<Vec<CriticalPoint>> {
    if let Some(c) = criticals.iter().find(|c| c.degenerate) {
        return Err(Error::Degenerate(c.min_abs_eigenvalue()));
    }
    let mut out: Vec<CriticalPoint> = Vec::new();
    for c in criticals.iter().filter(|c| c.index == 0) {
        if c.config.lattice() != lattice {
            return Err(Error::LatticeMismatch);
        }
        for s in lattice.shift_classes() {
            let t = canonical_vertical(c.shifted(&s.k, s.l));
            if !out.iter().any(|o| o.config.sup_distance(&t.config) <= 1e-8) {
                out.push(t);
            }
        }
    }
    if out.is_empty() {
        return Err(Error::CatalogIncomplete("no index-0 point in the catalog".into()));
    }
    out.sort_by(|a, b| a.x0().total_cmp(&b.x0()));
    for w in 0..out.len() {
        let a = &out[w].config;
        let b = if w + 1 < out.len() { out[w + 1].config.clone() } else { out[0].config.offset(1.0) };
        if compare(a, &b)? != OrderRelation::StrictlyBelow {
            return Err(Error::AubryViolation);
        }
    }
    Ok(out)
}

enum Basin {
    Lo,
    Hi,
    Saddle(CriticalPoint),
    Other(CriticalPoint),
}

/// Internal result: either the value or an index-0 point missing from the
/// catalog.
enum Found<T> {
    Done(T),
    NewMinimum(CriticalPoint),
}

fn classify(action: &PeriodicAction, y: &Configuration, lo: &CriticalPoint, hi: &CriticalPoint, p: &GhostParams) -> Result<Basin> {
    let eq = flow_to_equilibrium_with(action, y, p.flow.grad_tol, &p.flow)?;
    let end = &eq.flow.endpoint;
    let dl = end.sup_distance(&lo.config);
    let dh = end.sup_distance(&hi.config);
    let scale = lo.config.sup_distance(&hi.config);
    match eq.candidate {
        Some(cp) if dl <= 1e-6 * scale.max(1e-3) => {
            let _ = cp;
            Ok(Basin::Lo)
        }
        Some(cp) if dh <= 1e-6 * scale.max(1e-3) => {
            let _ = cp;
            Ok(Basin::Hi)
        }
        Some(cp) if cp.index == 0 => Ok(Basin::Other(cp)),
        Some(cp) => Ok(Basin::Saddle(cp)),
        None => Ok(if dl <= dh { Basin::Lo } else { Basin::Hi }),
    }
}

fn strictly_between(lo: &CriticalPoint, z: &CriticalPoint, hi: &CriticalPoint) -> bool {
    compare(&lo.config, &z.config).map(|r| r == OrderRelation::StrictlyBelow).unwrap_or(false)
        && compare(&z.config, &hi.config).map(|r| r == OrderRelation::StrictlyBelow).unwrap_or(false)
}

fn accept_saddle(lo: &CriticalPoint, z: &CriticalPoint, hi: &CriticalPoint) -> bool {
    z.index == 1 && !z.degenerate && strictly_between(lo, z, hi)
}

fn lerp(a: &Configuration, b: &Configuration, s: f64) -> Configuration {
    a.lerp(b, s).expect("same lattice")
}

/// Bisects `[a, b]` (a in the lower basin, b in the upper) by basin label.
fn bisect(
    action: &PeriodicAction,
    a: &Configuration,
    b: &Configuration,
    lo: &CriticalPoint,
    hi: &CriticalPoint,
    p: &GhostParams,
) -> Result<Found<std::result::Result<CriticalPoint, (Configuration, Configuration)>>> {
    let (mut sa, mut sb) = (0.0, 1.0);
    for _ in 0..p.bisection_steps {
        let sm = 0.5 * (sa + sb);
        let y = lerp(a, b, sm);
        match classify(action, &y, lo, hi, p)? {
            Basin::Lo => sa = sm,
            Basin::Hi => sb = sm,
            Basin::Saddle(z) => {
                if accept_saddle(lo, &z, hi) {
                    return Ok(Found::Done(Ok(z)));
                }
                // an unexpected saddle: keep bisecting on the side nearer lo
                sb = sm;
            }
            Basin::Other(m) => return Ok(Found::NewMinimum(m)),
        }
        if lerp(a, b, sa).sup_distance(&lerp(a, b, sb)) < 1e-15 {
            break;
        }
    }
    Ok(Found::Done(Err((lerp(a, b, sa), lerp(a, b, sb)))))
}

/// Flows `y` until its gradient has passed through a minimum, returning the
/// state of smallest gradient and its time.
fn min_gradient_state(action: &PeriodicAction, y: &Configuration, p: &GhostParams) -> Result<(Vec<f64>, f64)> {
    let mut best = (y.values().to_vec(), 0.0, norm2(&action.gradient(y.values())));
    integrate_flow(action, y.values(), p.flow.max_time, &p.flow, |step, state| {
        let g = norm2(&action.gradient(state));
        if g < best.2 {
            best = (state.to_vec(), step.t1(), g);
        }
        if g > 100.0 * best.2 && best.2 < 1e-2 {
            Control::Stop
        } else {
            Control::Continue
        }
    })?;
    Ok((best.0, best.1))
}

fn mountain_pass(action: &PeriodicAction, lo: &CriticalPoint, hi: &CriticalPoint, p: &GhostParams) -> Result<Found<CriticalPoint>> {
    if compare(&lo.config, &hi.config)? != OrderRelation::StrictlyBelow {
        return Err(Error::Precondition("mountain pass needs x_lo << x_hi".into()));
    }
    // coarse scan for the basin pattern
    let scan = 9;
    let mut labels = Vec::with_capacity(scan);
    for s in 1..=scan {
        let y = lerp(&lo.config, &hi.config, s as f64 / (scan + 1) as f64);
        let b = classify(action, &y, lo, hi, p)?;
        if let Basin::Other(m) = b {
            return Ok(Found::NewMinimum(m));
        }
        if let Basin::Saddle(z) = &b {
            if accept_saddle(lo, z, hi) {
                return Ok(Found::Done(z.clone()));
            }
        }
        labels.push(b);
    }
    let is_hi = |b: &Basin| matches!(b, Basin::Hi);
    let first_hi = labels.iter().position(is_hi).unwrap_or(scan);
    if labels[first_hi..].iter().any(|b| matches!(b, Basin::Lo)) {
        return Err(Error::CatalogIncomplete("segment crosses more than one basin boundary".into()));
    }
    let sa = first_hi as f64 / (scan + 1) as f64;
    let sb = (first_hi + 1) as f64 / (scan + 1) as f64;
    let mut a = lerp(&lo.config, &hi.config, sa);
    let mut b = lerp(&lo.config, &hi.config, sb);
    for _round in 0..8 {
        match bisect(action, &a, &b, lo, hi, p)? {
            Found::NewMinimum(m) => return Ok(Found::NewMinimum(m)),
            Found::Done(Ok(z)) => return Ok(Found::Done(z)),
            Found::Done(Err((na, nb))) => {
                a = na;
                b = nb;
            }
        }
        let mid = lerp(&a, &b, 0.5);
        let (state, t_min) = min_gradient_state(action, &mid, p)?;
        if let Some(v) = newton_critical(action, &state, p.flow.grad_tol, 60) {
            let z = CriticalPoint::evaluate_with(action, &Configuration::new(mid.lattice().clone(), v)?);
            if accept_saddle(lo, &z, hi) {
                return Ok(Found::Done(z));
            }
        }
        // follow the straddling pair towards the saddle and bisect again
        let adv = |c: &Configuration| -> Result<Configuration> {
            let out = integrate_flow(action, c.values(), t_min.max(1e-3), &p.flow, |_, _| Control::Continue)?;
            Configuration::new(c.lattice().clone(), out.y)
        };
        a = adv(&a)?;
        b = adv(&b)?;
    }
    Err(Error::Polish("mountain-pass refinement did not reach an index-1 point".into()))
}

/// Index-1 critical point between consecutive skeleton entries, by bisection
/// of the straight segment on basin labels followed by a Newton polish.
pub fn mountain_pass_saddle(pot: &LocalPotential, lo: &CriticalPoint, hi: &CriticalPoint, params: &GhostParams) -> Result<CriticalPoint> {
    let action = PeriodicAction::new(pot, lo.config.lattice())?;
    match mountain_pass(&action, lo, hi, params)? {
        Found::Done(z) => Ok(z),
        Found::NewMinimum(m) => Err(Error::CatalogIncomplete(format!(
            "index-0 point with x_0 = {:.12} lies between the skeleton entries",
            m.x0()
        ))),
    }
}

/// Unstable rate and positive unit-max eigenvector of an index-1 point.
fn unstable_direction(action: &PeriodicAction, z: &CriticalPoint) -> Result<(f64, Vec<f64>)> {
    if z.index != 1 {
        return Err(Error::Precondition(format!("saddle has index {}", z.index)));
    }
    let e = sym_eigen(&action.hessian(z.config.values()));
    let lambda = -e.values[0];
    let mut v: Vec<f64> = e.vectors.column(0).iter().copied().collect();
    let s: f64 = v.iter().sum();
    if s < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    v.iter_mut().for_each(|x| *x /= m);
    if v.iter().any(|x| *x <= 0.0) {
        return Err(Error::Precondition("unstable eigenvector is not strictly positive".into()));
    }
    Ok((lambda, v))
}

fn launch_orbit(
    action: &PeriodicAction,
    z: &CriticalPoint,
    lambda: f64,
    e_max: &[f64],
    eps: f64,
    direction: i8,
    expected: Option<&CriticalPoint>,
    p: &GhostParams,
) -> Result<Found<Heteroclinic>> {
    let lat = z.config.lattice().clone();
    let d = direction as f64;
    let start: Vec<f64> = z.config.values().iter().zip(e_max).map(|(a, e)| a + d * eps * e).collect();
    let vel = |y: &[f64]| -> Vec<f64> { action.gradient(y).iter().map(|v| -v).collect() };
    let mut samples = vec![OrbitSample { t: 0.0, velocity: vel(&start), values: start.clone() }];
    let mut prev = start.clone();
    let fine = FlowParams { atol: p.flow.atol.min(1e-12), rtol: p.flow.rtol.min(1e-12), ..p.flow };
    integrate_flow(action, &start, p.max_orbit_time, &fine, |step, y| {
        let disp = prev.iter().zip(y).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let pieces = (disp / p.max_sample_spacing).ceil().max(1.0) as usize;
        for j in 1..pieces {
            let t = step.t0 + step.h * j as f64 / pieces as f64;
            let v = step.eval(t);
            samples.push(OrbitSample { t, velocity: vel(&v), values: v });
        }
        samples.push(OrbitSample { t: step.t1(), velocity: vel(y), values: y.to_vec() });
        prev.copy_from_slice(y);
        let done = match expected {
            Some(m) => m.config.values().iter().zip(y).fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs())) <= p.orbit_tol,
            None => false,
        };
        if done || sup_norm(&samples.last().unwrap().velocity) <= p.orbit_tol * 1e-2 {
            Control::Stop
        } else {
            Control::Continue
        }
    })?;
    let end = Configuration::new(lat, samples.last().unwrap().values.clone())?;
    let target = match expected {
        Some(m) if end.sup_distance(&m.config) <= 1e-6 => m.clone(),
        _ => {
            let eq = flow_to_equilibrium_with(action, &end, p.flow.grad_tol, &p.flow)?;
            let cp = eq.candidate.ok_or_else(|| Error::CatalogIncomplete("heteroclinic did not reach an equilibrium".into()))?;
            if cp.index != 0 {
                return Err(Error::CatalogIncomplete(format!("heteroclinic ended at an index-{} point", cp.index)));
            }
            match expected {
                Some(m) if cp.config.sup_distance(&m.config) <= 1e-6 => m.clone(),
                Some(_) => return Ok(Found::NewMinimum(cp)),
                None => cp,
            }
        }
    };
    Ok(Found::Done(Heteroclinic {
        saddle: z.clone(),
        target,
        direction,
        lambda,
        e_max: e_max.to_vec(),
        epsilon: eps,
        samples,
    }))
}

/// Both orbits leaving an index-1 point along `±e_max`: `(down, up)`.
pub fn heteroclinics_from_saddle(
    pot: &LocalPotential,
    z: &CriticalPoint,
    eps: f64,
    params: &GhostParams,
) -> Result<(Heteroclinic, Heteroclinic)> {
    let action = PeriodicAction::new(pot, z.config.lattice())?;
    let (lambda, e) = unstable_direction(&action, z)?;
    let run = |dir: i8| -> Result<Heteroclinic> {
        match launch_orbit(&action, z, lambda, &e, eps, dir, None, params)? {
            Found::Done(h) => Ok(h),
            Found::NewMinimum(_) => unreachable!("no expected target given"),
        }
    };
    Ok((run(-1)?, run(1)?))
}

struct GapSolution {
    saddle: CriticalPoint,
    orbits: [Heteroclinic; 2],
}

fn solve_gap(action: &PeriodicAction, lo: &CriticalPoint, hi: &CriticalPoint, p: &GhostParams) -> Result<Found<GapSolution>> {
    let z = match mountain_pass(action, lo, hi, p)? {
        Found::Done(z) => z,
        Found::NewMinimum(m) => return Ok(Found::NewMinimum(m)),
    };
    let (lambda, e) = unstable_direction(action, &z)?;
    let eps = p.eps_scale * lo.config.sup_distance(&hi.config);
    let down = match launch_orbit(action, &z, lambda, &e, eps, -1, Some(lo), p)? {
        Found::Done(h) => h,
        Found::NewMinimum(m) => return Ok(Found::NewMinimum(m)),
    };
    let up = match launch_orbit(action, &z, lambda, &e, eps, 1, Some(hi), p)? {
        Found::Done(h) => h,
        Found::NewMinimum(m) => return Ok(Found::NewMinimum(m)),
    };
    Ok(Found::Done(GapSolution { saddle: z, orbits: [down, up] }))
}

/// Shift `(k, l)` carrying gap `(a0, a1)` onto `(b0, b1)`, if any.
fn gap_shift(
    lattice: &PeriodLattice,
    a0: &Configuration,
    a1: &Configuration,
    b0: &Configuration,
    b1: &Configuration,
) -> Option<(Index, i64)> {
    for c in lattice.shift_classes() {
        let s0 = a0.shift(&c.k, c.l);
        let dl = (b0.x0() - s0.x0()).round() as i64;
        let l = c.l + dl;
        let s0 = a0.shift(&c.k, l);
        if s0.sup_distance(b0) <= 1e-7 && a1.shift(&c.k, l).sup_distance(b1) <= 1e-7 {
            return Some((c.k.clone(), l));
        }
    }
    None
}

/// Full construction from a nondegenerate catalog. Index-0 points discovered
/// along the way are added to the catalog and the construction restarts.
pub fn assemble_from_catalog(
    pot: &LocalPotential,
    lattice: &PeriodLattice,
    mut catalog: Vec<CriticalPoint>,
    params: &GhostParams,
) -> Result<GhostCircle> {
    let action = PeriodicAction::new(pot, lattice)?;
    if let Some(c) = catalog.iter().find(|c| c.degenerate) {
        return Err(Error::Degenerate(c.min_abs_eigenvalue()));
    }
    // the global minimizer belongs to every ghost circle
    let starts: Vec<Configuration> = (0..8).map(|s| Configuration::linear(lattice, (s as f64 + 0.5) / 8.0)).collect();
    if let Ok(min) = minimize_from(&action, &starts) {
        if !catalog.iter().any(|c| same_orbit(&c.config, &min.config, 1e-7)) {
            catalog.push(min);
        }
    }
    for _attempt in 0..8 {
        let minima = index0_skeleton(&catalog, lattice)?;
        let n = minima.len();
        let ends: Vec<(Configuration, Configuration)> = (0..n)
            .map(|i| {
                let a = minima[i].config.clone();
                let b = if i + 1 < n { minima[i + 1].config.clone() } else { minima[0].config.offset(1.0) };
                (a, b)
            })
            .collect();
        // one representative per gap orbit
        let mut rep_of: Vec<(usize, Index, i64)> = Vec::with_capacity(n);
        let mut reps: Vec<usize> = Vec::new();
        for i in 0..n {
            let hit = reps.iter().find_map(|&r| {
                gap_shift(lattice, &ends[r].0, &ends[r].1, &ends[i].0, &ends[i].1).map(|(k, l)| (r, k, l))
            });
            match hit {
                Some(h) => rep_of.push(h),
                None => {
                    reps.push(i);
                    rep_of.push((i, vec![0; lattice.dim()], 0));
                }
            }
        }
        let solved: Vec<Result<Found<GapSolution>>> = reps
            .par_iter()
            .map(|&r| {
                let lo = &minima[r];
                let hi = if r + 1 < n { minima[r + 1].clone() } else { minima[0].vertical(1) };
                solve_gap(&action, lo, &hi, params)
            })
            .collect();
        let mut fresh = Vec::new();
        let mut sols: Vec<Option<GapSolution>> = Vec::new();
        for s in solved {
            match s? {
                Found::Done(g) => sols.push(Some(g)),
                Found::NewMinimum(m) => {
                    fresh.push(m);
                    sols.push(None);
                }
            }
        }
        if !fresh.is_empty() {
            for m in fresh {
                if !catalog.iter().any(|c| same_orbit(&c.config, &m.config, 1e-7)) {
                    catalog.push(m);
                }
            }
            continue;
        }
        let mut saddles = Vec::with_capacity(n);
        let mut orbits = Vec::with_capacity(n);
        for (r, k, l) in &rep_of {
            let sol = sols[reps.iter().position(|x| x == r).unwrap()].as_ref().unwrap();
            if k.iter().all(|v| *v == 0) && *l == 0 {
                saddles.push(sol.saddle.clone());
                orbits.push(sol.orbits.clone());
            } else {
                saddles.push(sol.saddle.shifted(k, *l));
                orbits.push([sol.orbits[0].shifted(&action, k, *l), sol.orbits[1].shifted(&action, k, *l)]);
            }
        }
        // mapped orbits end at the skeleton entries up to rounding; pin them
        for i in 0..n {
            orbits[i][0].target = minima[i].clone();
            orbits[i][1].target = if i + 1 < n { minima[i + 1].clone() } else { minima[0].vertical(1) };
        }
        return Ok(GhostCircle {
            lattice: lattice.clone(),
            potential: pot.clone(),
            kind: GhostKind::Assembled { minima, saddles, orbits },
        });
    }
    Err(Error::CatalogIncomplete("index-0 points kept appearing during assembly".into()))
}

/// Catalog, skeleton, saddles and heteroclinics stitched into Γ. The action
/// must be Morse on this lattice.
pub fn assemble_ghost_circle(pot: &LocalPotential, lattice: &PeriodLattice, params: &GhostParams) -> Result<GhostCircle> {
    let catalog = find_critical_points(pot, lattice, params.grid_per_dof, 1e-11, 1e-7)?;
    assemble_from_catalog(pot, lattice, catalog, params)
}

/// Settings of [`ghost_circle_limit`].
#[derive(Clone, Debug)]
pub struct GhostLimitOptions {
    /// Lattice indices `k` at which `T^Γ_k` is tabulated.
    pub ks: Vec<Index>,
    /// Convergent `m` (from 0) uses monotonization `n0·(m+1)`.
    pub n0: f64,
    /// Convergent `m` uses onsite amplitude `eps0/(m+1)`.
    pub eps0: f64,
    pub seed: u64,
    pub params: GhostParams,
}

impl Default for GhostLimitOptions {
    fn default() -> Self {
        GhostLimitOptions { ks: vec![vec![0]], n0: 1000.0, eps0: 1e-4, seed: 1, params: GhostParams::default() }
    }
}

/// Per-convergent outcome of [`ghost_circle_limit`].
#[derive(Clone, Debug, Serialize)]
pub struct ConvergentReport {
    pub p: Vec<i64>,
    pub q: Vec<i64>,
    pub omega: Vec<f64>,
    pub distance_to_target: f64,
    pub morse_n: f64,
    pub morse_epsilon: f64,
    pub morse_seed: Option<u64>,
    pub minima: usize,
    pub error: Option<String>,
    /// `t_values[a][g] = T^Γ_{ks[a]}(grid[g])`.
    pub t_values: Vec<Vec<f64>>,
}

/// Cauchy diagnostic over a sequence of periodic ghost circles.
#[derive(Clone, Debug, Serialize)]
pub struct GhostLimitReport {
    pub omega_target: Vec<f64>,
    pub sample_grid: Vec<f64>,
    pub ks: Vec<Index>,
    pub convergents: Vec<ConvergentReport>,
    /// `deltas[a][m]`: sup over the grid of `|T^{m+1}_k - T^m_k|` for `k = ks[a]`,
    /// between successive successful convergents.
    pub deltas: Vec<Vec<f64>>,
    /// Last successful circle on the grid: `(ξ, values on B_p)`.
    pub limit_samples: Vec<(f64, Vec<f64>)>,
    pub limit_lattice: Option<(Vec<i64>, Vec<i64>)>,
}

impl GhostLimitReport {
    /// Whether the deltas of `ks[a]` are non-increasing after the first one.
    pub fn monotone_after_first(&self, a: usize) -> bool {
        self.deltas[a].iter().skip(1).collect::<Vec<_>>().windows(2).all(|w| w[1] <= w[0])
    }

    pub fn final_delta(&self, a: usize) -> Option<f64> {
        self.deltas[a].last().copied()
    }
}

/// Assembles `Γ_m` for each convergent lattice (after a Morse approximation
/// of vanishing size) and tabulates `T^{Γ_m}_k` on the grid. Failures are
/// reported per convergent; the remaining ones still run.
pub fn ghost_circle_limit(
    pot: &LocalPotential,
    omega_target: &[f64],
    convergents: &[PeriodLattice],
    sample_grid: &[f64],
    tol: f64,
    opts: &GhostLimitOptions,
) -> Result<GhostLimitReport> {
    if convergents.is_empty() || sample_grid.is_empty() {
        return Err(Error::InvalidArgument("need at least one convergent and one sample".into()));
    }
    let mut reports = Vec::new();
    let mut last: Option<GhostCircle> = None;
    for (m, lat) in convergents.iter().enumerate() {
        let omega = lat.rotation_vector_f64().to_vec();
        let dist = omega.iter().zip(omega_target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let n = opts.n0 * (m + 1) as f64;
        let eps = opts.eps0 / (m + 1) as f64;
        let mut rep = ConvergentReport {
            p: lat.p().to_vec(),
            q: lat.q().to_vec(),
            omega,
            distance_to_target: dist,
            morse_n: n,
            morse_epsilon: eps,
            morse_seed: None,
            minima: 0,
            error: None,
            t_values: Vec::new(),
        };
        let mo = MorseOptions { tol, grid_per_dof: opts.params.grid_per_dof, ..MorseOptions::new(n, eps, opts.seed) };
        let built = morsify(pot, lat, &mo).and_then(|ms| {
            rep.morse_seed = Some(ms.seed);
            assemble_from_catalog(&ms.potential, lat, ms.catalog, &opts.params)
        });
        match built {
            Ok(gc) => {
                rep.minima = gc.minima().len();
                let table: Result<Vec<Vec<f64>>> = opts
                    .ks
                    .iter()
                    .map(|k| sample_grid.iter().map(|&xi| gc.t_map(xi, k)).collect())
                    .collect();
                match table {
                    Ok(t) => {
                        rep.t_values = t;
                        last = Some(gc);
                    }
                    Err(e) => rep.error = Some(e.to_string()),
                }
            }
            Err(e) => rep.error = Some(e.to_string()),
        }
        reports.push(rep);
    }
    let ok: Vec<&ConvergentReport> = reports.iter().filter(|r| r.error.is_none()).collect();
    let deltas = (0..opts.ks.len())
        .map(|a| {
            ok.windows(2)
                .map(|w| {
                    w[0].t_values[a].iter().zip(&w[1].t_values[a]).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
                })
                .collect()
        })
        .collect();
    let (limit_samples, limit_lattice) = match &last {
        Some(gc) => (
            sample_grid
                .iter()
                .map(|&xi| gc.evaluate(xi).map(|c| (xi, c.into_values())))
                .collect::<Result<Vec<_>>>()?,
            Some((gc.lattice.p().to_vec(), gc.lattice.q().to_vec())),
        ),
        None => (Vec::new(), None),
    };
    Ok(GhostLimitReport {
        omega_target: omega_target.to_vec(),
        sample_grid: sample_grid.to_vec(),
        ks: opts.ks.clone(),
        convergents: reports,
        deltas,
        limit_samples,
        limit_lattice,
    })
}

/// `DEGENERACY_TOL` re-exported for callers checking saddle spectra.
pub const SADDLE_DEGENERACY_TOL: f64 = DEGENERACY_TOL;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{fk_potential, FkSpec};

    fn scalar_circle() -> GhostCircle {
        let lat = PeriodLattice::one_dim(1, 0).unwrap();
        assemble_ghost_circle(&fk_potential(FkSpec::standard(1, 1.0)), &lat, &GhostParams::default()).unwrap()
    }

    #[test]
    fn scalar_circle_is_the_constants() {
        let gc = scalar_circle();
        let mins = gc.minima();
        assert_eq!(mins.len(), 1);
        assert!((mins[0].x0() - 0.5).abs() < 1e-10);
        let sad = gc.saddles();
        assert!((sad[0].x0() - 1.0).abs() < 1e-10);
        assert!((sad[0].eigenvalues[0] + 0.5).abs() < 1e-9);
        for s in 0..40 {
            let xi = -0.3 + 0.05 * s as f64;
            let c = gc.evaluate(xi).unwrap();
            assert!((c.values()[0] - xi).abs() < 1e-9, "xi {xi} -> {}", c.values()[0]);
        }
    }

    #[test]
    fn scalar_t_map_fixed_points_and_monotone() {
        let gc = scalar_circle();
        assert!((gc.t_map(0.5, &[0]).unwrap() - 0.5).abs() < 1e-12);
        assert!((gc.t_map(1.0, &[0]).unwrap() - 1.0).abs() < 1e-9);
        let mut prev = f64::NEG_INFINITY;
        for s in 0..200 {
            let xi = 0.5 + s as f64 / 200.0;
            let t = gc.t_map(xi, &[0]).unwrap();
            assert!(t >= prev - 1e-12);
            prev = t;
        }
    }

    #[test]
    fn scalar_heteroclinics() {
        let pot = fk_potential(FkSpec::standard(1, 1.0));
        let lat = PeriodLattice::one_dim(1, 0).unwrap();
        let z = CriticalPoint::evaluate(&pot, &Configuration::new(lat, vec![1.0]).unwrap()).unwrap();
        let (down, up) = heteroclinics_from_saddle(&pot, &z, 1e-6, &GhostParams::default()).unwrap();
        assert!((down.target.x0() - 0.5).abs() < 1e-9);
        assert!((up.target.x0() - 1.5).abs() < 1e-9);
        assert_eq!(down.e_max, vec![1.0]);
        assert!(down.samples.windows(2).all(|w| w[1].values[0] <= w[0].values[0] + 1e-14));
        assert!(down.samples.last().unwrap().values[0] >= 0.5 - 1e-12);
    }

    #[test]
    fn skeleton_scalar() {
        let pot = fk_potential(FkSpec::standard(1, 1.0));
        let lat = PeriodLattice::one_dim(1, 0).unwrap();
        let cat = find_critical_points(&pot, &lat, 8, 1e-11, 1e-7).unwrap();
        let sk = index0_skeleton(&cat, &lat).unwrap();
        assert_eq!(sk.len(), 1);
        assert!((sk[0].x0() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn skeleton_two_site_is_ordered() {
        let pot = fk_potential(FkSpec::standard(1, 1.0));
        let lat = PeriodLattice::one_dim(2, -1).unwrap();
        let cat = find_critical_points(&pot, &lat, 8, 1e-11, 1e-7).unwrap();
        let sk = index0_skeleton(&cat, &lat).unwrap();
        assert_eq!(sk.len(), 2);
        assert_eq!(compare(&sk[0].config, &sk[1].config).unwrap(), OrderRelation::StrictlyBelow);
    }

    #[test]
    fn degenerate_catalog_rejected() {
        let lat = PeriodLattice::one_dim(2, -1).unwrap();
        let pot = fk_potential(FkSpec::free(1));
        let cp = CriticalPoint::evaluate(&pot, &Configuration::linear(&lat, 0.0)).unwrap();
        assert!(matches!(index0_skeleton(&[cp], &lat), Err(Error::Degenerate(_))));
    }

    fn two_site() -> (LocalPotential, PeriodLattice, GhostCircle) {
        let pot = fk_potential(FkSpec::standard(1, 1.0));
        let lat = PeriodLattice::one_dim(2, -1).unwrap();
        let gc = assemble_ghost_circle(&pot, &lat, &GhostParams::default()).unwrap();
        (pot, lat, gc)
    }

    #[test]
    fn two_site_circle_ordered_and_shift_closed() {
        let (pot, lat, gc) = two_site();
        let grid: Vec<f64> = (0..64).map(|i| -0.5 + 2.0 * i as f64 / 64.0).collect();
        let pts: Vec<Configuration> = grid.iter().map(|&x| gc.evaluate(x).unwrap()).collect();
        for w in pts.windows(2) {
            assert_eq!(compare(&w[0], &w[1]).unwrap(), OrderRelation::StrictlyBelow);
        }
        for c in &pts {
            for s in lat.shift_classes() {
                let t = c.shift(&s.k, s.l);
                let back = gc.evaluate(t.x0()).unwrap();
                assert!(back.sup_distance(&t) < 1e-5, "shift closure {}", back.sup_distance(&t));
            }
        }
        let action = PeriodicAction::new(&pot, &lat).unwrap();
        for z in gc.saddles() {
            assert_eq!(z.index, 1);
            let (_, e) = unstable_direction(&action, &z).unwrap();
            assert!(e.iter().all(|v| *v > 0.0));
        }
        let mins = gc.minima();
        for (i, z) in gc.saddles().iter().enumerate() {
            let hi = if i + 1 < mins.len() { mins[i + 1].value } else { mins[0].value };
            assert!(z.value > mins[i].value.max(hi));
        }
        assert!(gc.critical_points().iter().any(|c| c.gradient_norm <= 1e-8));
    }

    #[test]
    fn two_site_flow_invariance() {
        let (pot, _lat, gc) = two_site();
        for i in 0..8 {
            let xi = 0.05 + 0.11 * i as f64;
            let c = gc.evaluate(xi).unwrap();
            for t in [0.1, 0.5, 1.0] {
                let moved = crate::flow::flow(&pot, &c, t, &FlowParams::default()).unwrap().endpoint;
                let on = gc.evaluate(moved.x0()).unwrap();
                assert!(on.sup_distance(&moved) < 1e-5, "xi {xi} t {t}: {}", on.sup_distance(&moved));
            }
        }
    }

    #[test]
    fn t_map_inverts_forward_flow() {
        let (pot, _lat, gc) = two_site();
        for i in 0..6 {
            let xi = 0.1 + 0.13 * i as f64;
            let c = gc.evaluate(xi).unwrap();
            let back = gc.t_map(xi, &[0]).unwrap();
            let pre = gc.evaluate(back).unwrap();
            let fwd = crate::flow::flow(&pot, &pre, 1.0, &FlowParams::default()).unwrap().endpoint;
            assert!((fwd.x0() - c.x0()).abs() < 1e-5, "{} vs {}", fwd.x0(), c.x0());
        }
    }

    #[test]
    fn morsified_free_mountain_pass_level() {
        let lat = PeriodLattice::one_dim(2, -1).unwrap();
        let ms = morsify(&fk_potential(FkSpec::free(1)), &lat, &MorseOptions::new(100.0, 1e-3, 3)).unwrap();
        let sk = index0_skeleton(&ms.catalog, &lat).unwrap();
        let hi = if sk.len() > 1 { sk[1].clone() } else { sk[0].vertical(1) };
        let z = mountain_pass_saddle(&ms.potential, &sk[0], &hi, &GhostParams::default()).unwrap();
        assert_eq!(z.index, 1);
        assert!(z.value > sk[0].value.max(hi.value));
    }

    #[test]
    fn limit_of_identical_lattices_is_flat() {
        let pot = fk_potential(FkSpec::standard(1, 0.5));
        let lat = PeriodLattice::one_dim(2, -1).unwrap();
        let grid: Vec<f64> = (0..8).map(|i| i as f64 / 8.0).collect();
        let opts = GhostLimitOptions { n0: 1000.0, eps0: 1e-6, ..Default::default() };
        let rep = ghost_circle_limit(&pot, &[0.5], &[lat.clone(), lat], &grid, 1e-8, &opts).unwrap();
        assert!(rep.deltas[0][0] < 1e-4, "{:?}", rep.deltas);
    }
}
