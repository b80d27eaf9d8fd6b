//! The negative gradient flow `dx/dt = -∇W_{p,q}(x)` and numerical checks of
//! its order-theoretic properties.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{compare, is_birkhoff, norm1, Configuration, OrderRelation};
use crate::linalg::{norm2, solve_shifted, sym_eigen};
use crate::minimizers::CriticalPoint;
use crate::ode::{integrate, Control, DenseStep, Dopri5Options, OdeOutcome, GAUSS5};
use crate::potentials::{LocalPotential, PeriodicAction};

/// Safety factor applied to empirical Harnack constants.
pub const HARNACK_SAFETY: f64 = 0.9;
/// Points per axis of the `(t, τ)` sampling grid for empirical constants.
pub const HARNACK_GRID: usize = 16;

/// Integrator and termination settings.
#[derive(Clone, Copy, Debug)]
pub struct FlowParams {
    pub atol: f64,
    pub rtol: f64,
    pub max_step: f64,
    pub max_time: f64,
    /// `||∇W||_2` at which an equilibrium is declared.
    pub grad_tol: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams { atol: 1e-9, rtol: 1e-9, max_step: f64::INFINITY, max_time: 1e4, grad_tol: 1e-10 }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.atol > 0.0 && self.rtol > 0.0 && self.max_step > 0.0 && self.max_time > 0.0 && self.grad_tol > 0.0) {
            return Err(Error::InvalidArgument("flow tolerances and limits must be positive".into()));
        }
        Ok(())
    }

    fn ode(&self) -> Dopri5Options {
        Dopri5Options { atol: self.atol, rtol: self.rtol, h_max: self.max_step, ..Default::default() }
    }
}

/// One accepted step of a flow trace.
#[derive(Clone, Debug, Serialize)]
pub struct TracePoint {
    pub t: f64,
    pub w: f64,
    pub grad_sq: f64,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct FlowResult {
    pub endpoint: Configuration,
    pub t: f64,
    pub trace: Vec<TracePoint>,
    /// For [`flow`]: the requested time was reached. For
    /// [`flow_to_equilibrium`]: the gradient tolerance was met.
    pub converged: bool,
    /// `∫ ||∇W||² dt` over the integrated interval.
    pub dissipation: f64,
    pub steps: usize,
}

/// Integrates the flow on raw domain values, reporting every accepted step.
pub fn integrate_flow<C>(action: &PeriodicAction, x0: &[f64], t_end: f64, params: &FlowParams, on_step: C) -> Result<OdeOutcome>
where
    C: FnMut(&DenseStep, &[f64]) -> Control,
{
    integrate(
        |y, dy| {
            action.gradient_into(y, dy);
            dy.iter_mut().for_each(|v| *v = -*v);
        },
        x0,
        t_end,
        &params.ode(),
        on_step,
    )
}

/// `∫ ||∇W||²` over one dense step by five-point Gauss-Legendre quadrature.
fn step_dissipation(action: &PeriodicAction, step: &DenseStep, buf: &mut [f64]) -> f64 {
    GAUSS5
        .iter()
        .map(|&(x, w)| {
            step.eval_into(step.t0 + x * step.h, buf);
            let g = action.gradient(buf);
            w * g.iter().map(|v| v * v).sum::<f64>()
        })
        .sum::<f64>()
        * step.h
}

/// `Ψ_t(x)` with a per-step trace of `W`, `||∇W||²` and the state.
pub fn flow(pot: &LocalPotential, x: &Configuration, t: f64, params: &FlowParams) -> Result<FlowResult> {
    let action = PeriodicAction::new(pot, x.lattice())?;
    flow_with(&action, x, t, params)
}

pub fn flow_with(action: &PeriodicAction, x: &Configuration, t: f64, params: &FlowParams) -> Result<FlowResult> {
    params.validate()?;
    if t < 0.0 || !t.is_finite() {
        return Err(Error::InvalidArgument("flow time must be finite and non-negative".into()));
    }
    let (w0, g0) = action.value_gradient(x.values());
    let mut trace = vec![TracePoint { t: 0.0, w: w0, grad_sq: g0.iter().map(|v| v * v).sum(), values: x.values().to_vec() }];
    let mut dissipation = 0.0;
    let mut buf = vec![0.0; x.values().len()];
    let out = integrate_flow(action, x.values(), t, params, |step, y| {
        dissipation += step_dissipation(action, step, &mut buf);
        let (w, g) = action.value_gradient(y);
        trace.push(TracePoint { t: step.t1(), w, grad_sq: g.iter().map(|v| v * v).sum(), values: y.to_vec() });
        Control::Continue
    })?;
    Ok(FlowResult {
        endpoint: Configuration::new(x.lattice().clone(), out.y)?,
        t: out.t,
        trace,
        converged: out.t >= t,
        dissipation,
        steps: out.steps,
    })
}

/// Newton steps on `∇W` with a Tikhonov shift; keeps the best iterate.
pub fn newton_polish(action: &PeriodicAction, x: &[f64], grad_tol: f64, max_iter: usize) -> (Vec<f64>, f64) {
    let mut best = x.to_vec();
    let mut best_g = norm2(&action.gradient(x));
    let mut cur = best.clone();
    for _ in 0..max_iter {
        if best_g <= grad_tol * 1e-3 {
            break;
        }
        let g = action.gradient(&cur);
        let h = action.hessian(&cur);
        let step = solve_shifted(&h, &g, 1e-10);
        if step.iter().any(|v| !v.is_finite()) {
            break;
        }
        let next: Vec<f64> = cur.iter().zip(&step).map(|(a, s)| a - s).collect();
        let gn = norm2(&action.gradient(&next));
        cur = next;
        if gn < best_g {
            best_g = gn;
            best = cur.clone();
        } else {
            break;
        }
    }
    (best, best_g)
}

/// Largest sup-norm step of [`descent_newton`].
pub const DESCENT_STEP_CAP: f64 = 0.02;

/// Newton with the Hessian replaced by `|H|` (eigenvalues floored) and a
/// backtracking line search on `W`. The step is a descent direction whose
/// component along each eigenvector keeps the sign of the flow, so near a
/// saddle it leaves along the same unstable side the flow would. Returns the
/// final point and whether the gradient tolerance was met.
pub fn descent_newton(action: &PeriodicAction, x: &[f64], grad_tol: f64, max_iter: usize) -> (Vec<f64>, bool) {
    let mut cur = x.to_vec();
    let (mut w, mut g) = action.value_gradient(&cur);
    for _ in 0..max_iter {
        let gn = norm2(&g);
        if gn <= grad_tol {
            return (cur, true);
        }
        let e = sym_eigen(&action.hessian(&cur));
        let n = cur.len();
        let mut dir = vec![0.0; n];
        for k in 0..n {
            let v = e.vectors.column(k);
            let c: f64 = (0..n).map(|i| v[i] * g[i]).sum();
            let lam = e.values[k].abs().max(1e-8);
            for i in 0..n {
                dir[i] -= c / lam * v[i];
            }
        }
        let cap = dir.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if cap > DESCENT_STEP_CAP {
            dir.iter_mut().for_each(|v| *v *= DESCENT_STEP_CAP / cap);
        }
        let slope: f64 = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
        let mut s = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = cur.iter().zip(&dir).map(|(a, d)| a + s * d).collect();
            let (wt, gt) = action.value_gradient(&trial);
            let gtn = norm2(&gt);
            // Armijo on W; once W is flat to rounding, a gradient decrease or an
            // escape along negative curvature.
            let flat = wt <= w + 1e-13 * w.abs().max(1.0);
            if wt <= w + 1e-4 * s * slope || (flat && (gtn < gn || e.values[0] < 0.0)) {
                cur = trial;
                w = wt;
                g = gt;
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let ok = norm2(&g) <= grad_tol;
    (cur, ok)
}

/// Result of [`flow_to_equilibrium`].
#[derive(Clone, Debug)]
pub struct Equilibrium {
    pub flow: FlowResult,
    /// Present when the gradient tolerance was met.
    pub candidate: Option<CriticalPoint>,
}

/// Follows the flow until `||∇W||_2 <= grad_tol` or `params.max_time`.
///
/// Once the gradient is small the slow tail of the flow is finished by
/// [`descent_newton`]; the endpoint is then polished by [`newton_polish`].
pub fn flow_to_equilibrium(pot: &LocalPotential, x: &Configuration, grad_tol: f64, params: &FlowParams) -> Result<Equilibrium> {
    let action = PeriodicAction::new(pot, x.lattice())?;
    flow_to_equilibrium_with(&action, x, grad_tol, params)
}

pub fn flow_to_equilibrium_with(
    action: &PeriodicAction,
    x: &Configuration,
    grad_tol: f64,
    params: &FlowParams,
) -> Result<Equilibrium> {
    params.validate()?;
    if !(grad_tol > 0.0) {
        return Err(Error::InvalidArgument("grad_tol must be positive".into()));
    }
    let lattice = x.lattice().clone();
    let mut y = x.values().to_vec();
    let mut t = 0.0;
    let mut steps = 0;
    let mut trace = Vec::new();
    let mut check_tol = grad_tol.max(1e-3);
    let mut converged = false;
    let (w0, g0) = action.value_gradient(&y);
    trace.push(TracePoint { t, w: w0, grad_sq: g0.iter().map(|v| v * v).sum(), values: y.clone() });

    loop {
        let gn = norm2(&action.gradient(&y));
        if gn <= grad_tol {
            converged = true;
            break;
        }
        if gn <= check_tol {
            let (z, ok) = descent_newton(action, &y, grad_tol, 500);
            if ok {
                y = z;
                converged = true;
                break;
            }
            if action.value(&z) < action.value(&y) {
                y = z;
            }
            check_tol = (check_tol * 0.1).max(grad_tol);
        }
        if t >= params.max_time {
            break;
        }
        let tol_now = check_tol;
        let out = integrate_flow(action, &y, params.max_time - t, params, |_, state| {
            let g = action.gradient(state);
            if norm2(&g) <= tol_now {
                Control::Stop
            } else {
                Control::Continue
            }
        })?;
        t += out.t;
        steps += out.steps;
        y = out.y;
        let (w, g) = action.value_gradient(&y);
        trace.push(TracePoint { t, w, grad_sq: g.iter().map(|v| v * v).sum(), values: y.clone() });
        if !out.stopped && t >= params.max_time {
            let gn = norm2(&g);
            converged = gn <= grad_tol;
            if !converged {
                let (z, ok) = descent_newton(action, &y, grad_tol, 500);
                if ok {
                    y = z;
                    converged = true;
                }
            }
            break;
        }
    }
    if converged {
        let (z, _) = newton_polish(action, &y, grad_tol, 8);
        y = z;
    }
    let endpoint = Configuration::new(lattice, y)?;
    let candidate = if converged { Some(CriticalPoint::evaluate_with(action, &endpoint)) } else { None };
    let (w, g) = action.value_gradient(endpoint.values());
    if trace.last().map(|p| p.values != endpoint.values()).unwrap_or(true) {
        trace.push(TracePoint { t, w, grad_sq: g.iter().map(|v| v * v).sum(), values: endpoint.values().to_vec() });
    }
    Ok(Equilibrium {
        flow: FlowResult { endpoint, t, trace, converged, dissipation: w0 - w, steps },
        candidate,
    })
}

/// Outcome of [`comparison_check`].
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ComparisonResult {
    pub ordered: bool,
    /// `min_i [(Ψ_t y)_i - (Ψ_t x)_i]`.
    pub margin: f64,
}

/// Checks `Ψ_t x ≪ Ψ_t y` for `x < y`.
pub fn comparison_check(
    pot: &LocalPotential,
    x: &Configuration,
    y: &Configuration,
    t: f64,
    params: &FlowParams,
) -> Result<ComparisonResult> {
    let rel = compare(x, y)?;
    if !matches!(rel, OrderRelation::Below | OrderRelation::StrictlyBelow) {
        return Err(Error::Precondition(format!("expected x < y, found x {} y", rel.symbol())));
    }
    let action = PeriodicAction::new(pot, x.lattice())?;
    let fx = flow_with(&action, x, t, params)?.endpoint;
    let fy = flow_with(&action, y, t, params)?.endpoint;
    let margin = fx.values().iter().zip(fy.values()).map(|(a, b)| b - a).fold(f64::INFINITY, f64::min);
    Ok(ComparisonResult { ordered: margin > 0.0, margin })
}

/// Outcome of [`parabolic_harnack_check`].
#[derive(Clone, Copy, Debug, Serialize)]
pub struct HarnackResult {
    /// `(Ψ_t y)_i - (Ψ_t x)_i`.
    pub lhs: f64,
    /// `L (y_k - x_k)`.
    pub rhs: f64,
    pub l: f64,
    pub lambda: f64,
    pub m: f64,
    pub verdict: bool,
}

/// States of the flow from `x` at `HARNACK_GRID` equally spaced times in
/// `[0, t]`.
fn sampled_states(action: &PeriodicAction, x: &[f64], t: f64, params: &FlowParams) -> Result<Vec<Vec<f64>>> {
    let times: Vec<f64> = (0..HARNACK_GRID).map(|a| t * a as f64 / (HARNACK_GRID - 1) as f64).collect();
    let mut out = vec![x.to_vec()];
    let mut next = 1;
    let res = integrate_flow(action, x, t, params, |step, _| {
        while next < times.len() && times[next] <= step.t1() + 1e-15 {
            out.push(step.eval(times[next].min(step.t1())));
            next += 1;
        }
        Control::Continue
    })?;
    while out.len() < times.len() {
        out.push(res.y.clone());
    }
    Ok(out)
}

/// Empirical `(λ, M)` on the states `(1-τ) a + τ b`.
///
/// `λ` is the smallest nearest-neighbour coupling `-∂_{j,j+e} S_j`; `M` is the
/// largest unfolded diagonal `Σ_j ∂_{a,a} S_j` (the diagonal of the Hessian on
/// the whole lattice, before periodic folding).
fn empirical_constants(action: &PeriodicAction, pairs: &[(Vec<f64>, Vec<f64>)]) -> (f64, f64) {
    let st = action.potential().stencil();
    let n = action.n();
    let mut lambda = f64::INFINITY;
    let mut m = f64::NEG_INFINITY;
    for (a, b) in pairs {
        for s in 0..HARNACK_GRID {
            let tau = s as f64 / (HARNACK_GRID - 1) as f64;
            let z: Vec<f64> = a.iter().zip(b).map(|(u, v)| (1.0 - tau) * u + tau * v).collect();
            let hs = action.site_hessians(&z);
            let mut diag = vec![0.0; n];
            for (j, h) in hs.iter().enumerate() {
                for &nb in st.neighbors() {
                    lambda = lambda.min(-h[(0, nb)]);
                }
                let row = action.fold_row(j);
                for (o, &pos) in row.iter().enumerate() {
                    diag[pos] += h[(o, o)];
                }
            }
            m = m.max(diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        }
    }
    (lambda, m.max(0.0))
}

/// Checks `(Ψ_t y)_i - (Ψ_t x)_i >= L (y_k - x_k)` with
/// `L = 0.9 e^{-Mt} (λt/N)^N`, `N = ||i - k||`, and empirical `λ`, `M`.
pub fn parabolic_harnack_check(
    pot: &LocalPotential,
    x: &Configuration,
    y: &Configuration,
    t: f64,
    i: &[i64],
    k: &[i64],
    params: &FlowParams,
) -> Result<HarnackResult> {
    if !(t > 0.0) {
        return Err(Error::Precondition("t must be positive".into()));
    }
    let rel = compare(x, y)?;
    if !matches!(rel, OrderRelation::Below | OrderRelation::StrictlyBelow) {
        return Err(Error::Precondition(format!("expected x < y, found x {} y", rel.symbol())));
    }
    if !is_birkhoff(x, 2)?.birkhoff || !is_birkhoff(y, 2)?.birkhoff {
        return Err(Error::Precondition("both configurations must be Birkhoff".into()));
    }
    let action = PeriodicAction::new(pot, x.lattice())?;
    let sx = sampled_states(&action, x.values(), t, params)?;
    let sy = sampled_states(&action, y.values(), t, params)?;
    let pairs: Vec<_> = sx.into_iter().zip(sy).collect();
    let (lambda, m) = empirical_constants(&action, &pairs);
    let diff: Vec<i64> = i.iter().zip(k).map(|(a, b)| a - b).collect();
    let nn = norm1(&diff);
    let l = if nn == 0 {
        HARNACK_SAFETY * (-m * t).exp()
    } else {
        HARNACK_SAFETY * (-m * t).exp() * (lambda * t / nn as f64).powi(nn as i32)
    };
    let (fx, fy) = (&pairs.last().unwrap().0, &pairs.last().unwrap().1);
    let ex = Configuration::new(x.lattice().clone(), fx.clone())?;
    let ey = Configuration::new(x.lattice().clone(), fy.clone())?;
    let lhs = ey.value_at(i) - ex.value_at(i);
    let rhs = l * (y.value_at(k) - x.value_at(k));
    Ok(HarnackResult { lhs, rhs, l, lambda, m, verdict: lhs >= rhs })
}

/// Outcome of [`elliptic_harnack_check`].
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EllipticHarnackResult {
    /// `y_k - x_k`.
    pub lhs: f64,
    /// `δ (y_i - x_i)`.
    pub rhs: f64,
    pub delta: f64,
    pub verdict: bool,
}

/// For ordered stationary `x < y`: `(y_k - x_k) <= δ (y_i - x_i)` with
/// `δ = ((2r)^d C / (2dλ))^{||i-k||}` and `λ`, `C` sampled on the segment.
pub fn elliptic_harnack_check(
    pot: &LocalPotential,
    x: &Configuration,
    y: &Configuration,
    i: &[i64],
    k: &[i64],
) -> Result<EllipticHarnackResult> {
    let rel = compare(x, y)?;
    if !matches!(rel, OrderRelation::Below | OrderRelation::StrictlyBelow) {
        return Err(Error::Precondition(format!("expected x < y, found x {} y", rel.symbol())));
    }
    let action = PeriodicAction::new(pot, x.lattice())?;
    let st = pot.stencil();
    let (mut lambda, mut c) = (f64::INFINITY, 0.0f64);
    for s in 0..HARNACK_GRID {
        let tau = s as f64 / (HARNACK_GRID - 1) as f64;
        let z: Vec<f64> = x.values().iter().zip(y.values()).map(|(u, v)| (1.0 - tau) * u + tau * v).collect();
        for h in action.site_hessians(&z) {
            for &nb in st.neighbors() {
                lambda = lambda.min(-h[(0, nb)]);
            }
            c = c.max(h.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        }
    }
    let d = pot.dim() as i32;
    let r = pot.range() as f64;
    let diff: Vec<i64> = i.iter().zip(k).map(|(a, b)| a - b).collect();
    let base = (2.0 * r).powi(d) * c / (2.0 * d as f64 * lambda);
    let delta = base.powi(norm1(&diff) as i32);
    let lhs = y.value_at(k) - x.value_at(k);
    let rhs = delta * (y.value_at(i) - x.value_at(i));
    Ok(EllipticHarnackResult { lhs, rhs, delta, verdict: lhs <= rhs * (1.0 + 1e-12) + 1e-14 })
}

/// Outcome of [`lyapunov_check`].
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LyapunovResult {
    /// `|W(Ψ_t x) - W(x) + ∫ ||∇W||²|`.
    pub residual: f64,
    pub w_start: f64,
    pub w_end: f64,
    pub dissipation: f64,
    /// `W` never increased along the trace beyond integrator tolerance.
    pub monotone: bool,
}

/// Energy identity along `[0, t]` with the integral taken on dense output.
pub fn lyapunov_check(pot: &LocalPotential, x: &Configuration, t: f64, params: &FlowParams) -> Result<LyapunovResult> {
    if !(t > 0.0) {
        return Err(Error::Precondition("t must be positive".into()));
    }
    let res = flow(pot, x, t, params)?;
    let w_start = res.trace.first().unwrap().w;
    let w_end = res.trace.last().unwrap().w;
    let slack = 10.0 * (params.atol + params.rtol * w_start.abs());
    let monotone = res.trace.windows(2).all(|p| p[1].w <= p[0].w + slack);
    Ok(LyapunovResult {
        residual: (w_end - w_start + res.dissipation).abs(),
        w_start,
        w_end,
        dissipation: res.dissipation,
        monotone,
    })
}

/// CSV with columns `t, W, grad_norm_sq, x_0, x_1, ...` (domain order).
pub fn write_trace_csv<W: Write>(trace: &[TracePoint], mut out: W) -> std::io::Result<()> {
    let n = trace.first().map(|p| p.values.len()).unwrap_or(0);
    write!(out, "t,W,grad_norm_sq")?;
    for k in 0..n {
        write!(out, ",x{k}")?;
    }
    writeln!(out)?;
    for p in trace {
        write!(out, "{:.17e},{:.17e},{:.17e}", p.t, p.w, p.grad_sq)?;
        for v in &p.values {
            write!(out, ",{v:.17e}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::PeriodLattice;
    use crate::potentials::{fk_potential, FkSpec};
    use std::f64::consts::PI;

    fn scalar(v: f64) -> Configuration {
        Configuration::new(PeriodLattice::one_dim(1, 0).unwrap(), vec![v]).unwrap()
    }

    #[test]
    fn free_linear_is_stationary() {
        let lat = PeriodLattice::one_dim(3, -1).unwrap();
        let x = Configuration::linear(&lat, 0.2);
        let r = flow(&fk_potential(FkSpec::free(1)), &x, 3.0, &FlowParams::default()).unwrap();
        assert!(r.endpoint.sup_distance(&x) < 1e-14);
    }

    #[test]
    fn scalar_flow_matches_reference_solve() {
        let pot = fk_potential(FkSpec::standard(1, 1.0));
        let r = flow(&pot, &scalar(0.25), 5.0, &FlowParams::default()).unwrap();
        // independent reference: classical RK4 with a tiny fixed step on dc/dt = sin(2πc)/(4π)
        let f = |c: f64| (2.0 * PI * c).sin() / (4.0 * PI);
        let (mut c, h) = (0.25f64, 1e-4);
        for _ in 0..50_000 {
            let k1 = f(c);
            let k2 = f(c + 0.5 * h * k1);
            let k3 = f(c + 0.5 * h * k2);
            let k4 = f(c + h * k3);
            c += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        assert!((r.endpoint.values()[0] - c).abs() < 1e-7);
    }

    #[test]
    fn equilibrium_scalar_cases() {
        let pot = fk_potential(FkSpec::standard(1, 1.0));
        let p = FlowParams::default();
        let e = flow_to_equilibrium(&pot, &scalar(0.25), 1e-10, &p).unwrap();
        assert!(e.flow.converged);
        assert!((e.flow.endpoint.values()[0] - 0.5).abs() < 1e-10);
        let e = flow_to_equilibrium(&pot, &scalar(0.0), 1e-10, &p).unwrap();
        assert_eq!(e.flow.endpoint.values()[0], 0.0);
        assert_eq!(e.candidate.unwrap().index, 1);
    }

    #[test]
    fn equilibrium_free_two_site() {
        let lat = PeriodLattice::one_dim(2, -1).unwrap();
        let x = Configuration::new(lat, vec![0.1, 0.9]).unwrap();
        let pot = fk_potential(FkSpec::free(1));
        let e = flow_to_equilibrium(&pot, &x, 1e-10, &FlowParams::default()).unwrap();
        assert!(e.flow.converged);
        let v = e.flow.endpoint.values();
        assert!((v[1] - v[0] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn comparison_examples() {
        let lat = PeriodLattice::one_dim(2, -1).unwrap();
        let x = Configuration::new(lat.clone(), vec![0.1, 0.4]).unwrap();
        let free = fk_potential(FkSpec::free(1));
        let c = comparison_check(&free, &x, &x.offset(1.0), 2.0, &FlowParams::default()).unwrap();
        assert!(c.ordered && (c.margin - 1.0).abs() < 1e-8);

        let pot = fk_potential(FkSpec::standard(1, 0.5));
        let y = Configuration::new(lat, vec![0.1, 0.5]).unwrap();
        let c = comparison_check(&pot, &x, &y, 0.5, &FlowParams::default()).unwrap();
        assert!(c.ordered && c.margin > 0.0);
        assert!(comparison_check(&pot, &x, &x, 0.5, &FlowParams::default()).is_err());
    }

    #[test]
    fn harnack_fk_pair() {
        let lat = PeriodLattice::one_dim(2, -1).unwrap();
        let pot = fk_potential(FkSpec::standard(1, 0.5));
        let x = Configuration::linear(&lat, 0.1);
        let y = Configuration::linear(&lat, 0.3);
        let h = parabolic_harnack_check(&pot, &x, &y, 1.0, &[0], &[1], &FlowParams::default()).unwrap();
        assert!(h.verdict);
        assert!((h.lambda - 0.25).abs() < 1e-15);
    }

    #[test]
    fn lyapunov_scalar() {
        let pot = fk_potential(FkSpec::standard(1, 1.0));
        let r = lyapunov_check(&pot, &scalar(0.25), 3.0, &FlowParams::default()).unwrap();
        assert!(r.residual <= 1e-6, "{}", r.residual);
        assert!(r.monotone);
        let r = lyapunov_check(&pot, &scalar(0.5), 3.0, &FlowParams::default()).unwrap();
        assert!(r.residual < 1e-15);
    }

    #[test]
    fn trace_csv_header() {
        let pot = fk_potential(FkSpec::standard(1, 1.0));
        let r = flow(&pot, &scalar(0.25), 0.1, &FlowParams::default()).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&r.trace, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("t,W,grad_norm_sq,x0\n"));
        assert_eq!(s.lines().count(), r.trace.len() + 1);
    }
}
