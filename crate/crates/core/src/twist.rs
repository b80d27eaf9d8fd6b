//! The standard twist map `T_V` of the cylinder and its correspondence with
//! stationary one-dimensional Frenkel-Kontorova configurations.
//!
//! Generating function `S(x, X) = ½(x - X)² + 2V(x)`, momentum
//! `y = -∂_x S(x, X)`. Its stationary sequences are exactly those of the
//! FK action, whose per-site energy is half of this one.

use astro_float::{BigFloat, Consts, RoundingMode};
use serde::Serialize;

use crate::aubry_mather::{PERCIVAL_BOUND, STANDARD_FORM_THRESHOLD};
use crate::error::{Error, Result};
use crate::lattice::Configuration;
use crate::potentials::TrigSeries;

/// Finite-difference step of [`jacobian_determinant`]. Truncation errors of
/// the two derivative pairs cancel in the determinant, so a large step only
/// reduces rounding.
pub const JACOBIAN_STEP: f64 = 1e-3;

/// Lift `(x, y) ↦ (x + y + 2V'(x), y + 2V'(x))`.
pub fn standard_map_step(v: &TrigSeries, x: f64, y: f64) -> (f64, f64) {
    let y1 = y + 2.0 * v.d1(x);
    (x + y1, y1)
}

/// `n` lifted iterations from `(x, y)`, starting point included.
pub fn iterate(v: &TrigSeries, x: f64, y: f64, n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n + 1);
    let mut p = (x, y);
    out.push(p);
    for _ in 0..n {
        p = standard_map_step(v, p.0, p.1);
        out.push(p);
    }
    out
}

/// Lifted orbit points `(x_i, y_i)`.
#[derive(Clone, Debug, Serialize)]
pub struct TwistOrbit {
    pub points: Vec<(f64, f64)>,
    pub v: TrigSeries,
}

impl TwistOrbit {
    /// `r_i = ||T_V(x_i, y_i) - (x_{i+1}, y_{i+1})||_∞`.
    pub fn residuals(&self) -> Vec<f64> {
        self.points
            .windows(2)
            .map(|w| {
                let (x, y) = standard_map_step(&self.v, w[0].0, w[0].1);
                (x - w[1].0).abs().max((y - w[1].1).abs())
            })
            .collect()
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals().into_iter().fold(0.0, f64::max)
    }

    /// Rows `i,x_lift,x_mod1,y`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "i,x_lift,x_mod1,y")?;
        for (i, (x, y)) in self.points.iter().enumerate() {
            writeln!(out, "{i},{x:.17e},{:.17e},{y:.17e}", x.rem_euclid(1.0))?;
        }
        Ok(())
    }
}

/// `y_i = (x_{i+1} - x_i) - 2V'(x_i)` for every `i` with a successor.
pub fn orbit_from_sequence(xs: &[f64], v: &TrigSeries) -> TwistOrbit {
    let points = xs.windows(2).map(|w| (w[0], w[1] - w[0] - 2.0 * v.d1(w[0]))).collect();
    TwistOrbit { points, v: v.clone() }
}

/// Orbit of a one-dimensional configuration over `steps` sites from `i = 0`.
pub fn orbit_from_configuration(config: &Configuration, v: &TrigSeries, steps: usize) -> Result<TwistOrbit> {
    if config.lattice().dim() != 1 {
        return Err(Error::Dimension("the twist-map correspondence is one-dimensional".into()));
    }
    let xs: Vec<f64> = (0..=steps as i64).map(|i| config.value_at(&[i])).collect();
    Ok(orbit_from_sequence(&xs, v))
}

/// `max_i |(x_i - x_{i-1}) - (x_{i+1} - x_i) + 2V'(x_i)|` over interior `i`.
pub fn stationarity_residual_1d(xs: &[f64], v: &TrigSeries) -> f64 {
    xs.windows(3)
        .map(|w| ((w[1] - w[0]) - (w[2] - w[1]) + 2.0 * v.d1(w[1])).abs())
        .fold(0.0, f64::max)
}

/// Determinant of the central-difference Jacobian of one step.
pub fn jacobian_determinant(v: &TrigSeries, x: f64, y: f64) -> f64 {
    let h = JACOBIAN_STEP;
    let (xp, yp) = standard_map_step(v, x + h, y);
    let (xm, ym) = standard_map_step(v, x - h, y);
    let (xq, yq) = standard_map_step(v, x, y + h);
    let (xn, yn) = standard_map_step(v, x, y - h);
    let (a, c) = ((xp - xm) / (2.0 * h), (yp - ym) / (2.0 * h));
    let (b, d) = ((xq - xn) / (2.0 * h), (yq - yn) / (2.0 * h));
    a * d - b * c
}

/// Working precision in bits of [`refine_periodic_orbit`] and
/// [`iterate_precise`]. Periodic orbits of `T_V` are typically hyperbolic, so
/// rounding errors grow geometrically along lifted iterations.
pub const PRECISE_BITS: usize = 320;

struct Ctx {
    p: usize,
    rm: RoundingMode,
    cc: Consts,
}

impl Ctx {
    fn new(p: usize) -> Result<Self> {
        let cc = Consts::new().map_err(|e| Error::InvalidArgument(format!("precision context: {e:?}")))?;
        Ok(Ctx { p, rm: RoundingMode::ToEven, cc })
    }

    fn num(&self, x: f64) -> BigFloat {
        BigFloat::from_f64(x, self.p)
    }

    fn add(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.add(b, self.p, self.rm)
    }

    fn sub(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.sub(b, self.p, self.rm)
    }

    fn mul(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.mul(b, self.p, self.rm)
    }

    fn div(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.div(b, self.p, self.rm)
    }

    /// `(V'(x), V''(x))`.
    fn dv(&mut self, v: &TrigSeries, x: &BigFloat) -> (BigFloat, BigFloat) {
        let pi = self.cc.pi(self.p, self.rm);
        let two_pi = self.mul(&self.num(2.0), &pi);
        let (mut d1, mut d2) = (self.num(0.0), self.num(0.0));
        for t in &v.terms {
            if t.harmonic == 0 {
                continue;
            }
            let w = self.mul(&two_pi, &self.num(t.harmonic as f64));
            let a = self.mul(&w, x);
            let (s, c) = (a.sin(self.p, self.rm, &mut self.cc), a.cos(self.p, self.rm, &mut self.cc));
            let (tc, ts) = (self.num(t.cos), self.num(t.sin));
            let first = self.sub(&self.mul(&ts, &c), &self.mul(&tc, &s));
            d1 = self.add(&d1, &self.mul(&w, &first));
            let second = self.add(&self.mul(&tc, &c), &self.mul(&ts, &s));
            d2 = self.sub(&d2, &self.mul(&self.mul(&w, &w), &second));
        }
        (d1, d2)
    }
}

fn to_f64(x: &BigFloat) -> f64 {
    x.to_string().parse().unwrap_or(f64::NAN)
}

/// Newton refinement, at `bits` precision, of a periodic stationary sequence
/// given by one period `xs` with `x_{i+n} = x_i + shift`. Returns the refined
/// period and its residual.
pub fn refine_periodic_orbit(xs: &[f64], shift: i64, v: &TrigSeries, bits: usize) -> Result<(Vec<BigFloat>, f64)> {
    let n = xs.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty period".into()));
    }
    let mut c = Ctx::new(bits)?;
    let mut x: Vec<BigFloat> = xs.iter().map(|&a| c.num(a)).collect();
    let s = c.num(shift as f64);
    let mut residual = f64::INFINITY;
    for _ in 0..(bits / 8).max(20) {
        let at = |x: &[BigFloat], i: isize, c: &Ctx| -> BigFloat {
            let m = i.rem_euclid(n as isize) as usize;
            let wraps = (i - m as isize) / n as isize;
            c.add(&x[m], &c.mul(&s, &c.num(wraps as f64)))
        };
        // F_i = x_{i+1} - 2x_i + x_{i-1} - 2V'(x_i)
        let mut f = Vec::with_capacity(n);
        let mut jac = vec![vec![c.num(0.0); n]; n];
        for i in 0..n {
            let (d1, d2) = c.dv(v, &x[i]);
            let lap = c.add(&c.sub(&at(&x, i as isize + 1, &c), &c.mul(&c.num(2.0), &x[i])), &at(&x, i as isize - 1, &c));
            f.push(c.sub(&lap, &c.mul(&c.num(2.0), &d1)));
            let diag = c.sub(&c.num(-2.0), &c.mul(&c.num(2.0), &d2));
            jac[i][i] = c.add(&jac[i][i], &diag);
            for j in [(i + 1) % n, (i + n - 1) % n] {
                jac[i][j] = c.add(&jac[i][j], &c.num(1.0));
            }
        }
        residual = f.iter().map(|v| to_f64(v).abs()).fold(0.0, f64::max);
        if residual == 0.0 {
            break;
        }
        let dx = solve_dense(&c, jac, f)?;
        for i in 0..n {
            x[i] = c.sub(&x[i], &dx[i]);
        }
    }
    Ok((x, residual))
}

fn solve_dense(c: &Ctx, mut a: Vec<Vec<BigFloat>>, mut b: Vec<BigFloat>) -> Result<Vec<BigFloat>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap();
        if a[piv][col].is_zero() {
            return Err(Error::Degenerate(0.0));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let m = c.div(&a[r][col], &a[col][col]);
            for k in col..n {
                let t = c.mul(&m, &a[col][k]);
                a[r][k] = c.sub(&a[r][k], &t);
            }
            let t = c.mul(&m, &b[col]);
            b[r] = c.sub(&b[r], &t);
        }
    }
    let mut x = vec![c.num(0.0); n];
    for r in (0..n).rev() {
        let mut acc = b[r].clone();
        for k in r + 1..n {
            acc = c.sub(&acc, &c.mul(&a[r][k], &x[k]));
        }
        x[r] = c.div(&acc, &a[r][r]);
    }
    Ok(x)
}

/// `n` lifted iterations at `bits` precision from `(x_0, y_0)` with
/// `y_0 = x_1 - x_0 - 2V'(x_0)`; returns the `x` lifts rounded to `f64`.
pub fn iterate_precise(v: &TrigSeries, x0: &BigFloat, x1: &BigFloat, n: usize, bits: usize) -> Result<Vec<f64>> {
    let mut c = Ctx::new(bits)?;
    let two = c.num(2.0);
    let (d1, _) = c.dv(v, x0);
    let mut y = c.sub(&c.sub(x1, x0), &c.mul(&two, &d1));
    let mut x = x0.clone();
    let mut out = Vec::with_capacity(n + 1);
    out.push(to_f64(&x));
    for _ in 0..n {
        let (d1, _) = c.dv(v, &x);
        y = c.add(&y, &c.mul(&two, &d1));
        x = c.add(&x, &y);
        out.push(to_f64(&x));
    }
    Ok(out)
}

/// Refines the stationary configuration `config` (one-dimensional) and
/// iterates its orbit `n` steps at [`PRECISE_BITS`]. Returns the lifts and
/// the refinement residual.
pub fn lifted_orbit_of_configuration(config: &Configuration, v: &TrigSeries, n: usize) -> Result<(Vec<f64>, f64)> {
    let lat = config.lattice();
    if lat.dim() != 1 {
        return Err(Error::Dimension("the twist-map correspondence is one-dimensional".into()));
    }
    let p = lat.p()[0].abs();
    let xs: Vec<f64> = (0..p).map(|i| config.value_at(&[i])).collect();
    let shift = (config.value_at(&[p]) - xs[0]).round() as i64;
    let (period, residual) = refine_periodic_orbit(&xs, shift, v, PRECISE_BITS)?;
    let x1 = if p > 1 {
        period[1].clone()
    } else {
        period[0].add(&BigFloat::from_f64(shift as f64, PRECISE_BITS), PRECISE_BITS, RoundingMode::ToEven)
    };
    Ok((iterate_precise(v, &period[0], &x1, n, PRECISE_BITS)?, residual))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CurveVerdict {
    /// `osc V > 2`: no rotational invariant curve.
    NoneExist,
    Silent,
}

#[derive(Clone, Debug, Serialize)]
pub struct InvariantCurveReport {
    pub osc_v: f64,
    pub threshold: f64,
    pub verdict: CurveVerdict,
    pub standard_form_threshold: String,
    pub standard_form_k: f64,
    /// Literature bound for the standard form, reported and not asserted.
    pub percival_bound: String,
}

pub fn invariant_curve_verdict(v: &TrigSeries) -> InvariantCurveReport {
    let osc_v = v.oscillation();
    InvariantCurveReport {
        osc_v,
        threshold: 2.0,
        verdict: if osc_v > 2.0 { CurveVerdict::NoneExist } else { CurveVerdict::Silent },
        standard_form_threshold: STANDARD_FORM_THRESHOLD.into(),
        standard_form_k: 8.0 * std::f64::consts::PI.powi(2),
        percival_bound: PERCIVAL_BOUND.into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::PeriodLattice;
    use crate::potentials::TrigTerm;
    use std::f64::consts::PI;

    #[test]
    fn shear_and_fixed_points() {
        let zero = TrigSeries::zero();
        assert_eq!(standard_map_step(&zero, 0.3, 0.2), (0.5, 0.2));
        let v = TrigSeries::standard(1.0);
        let (x, y) = standard_map_step(&v, 0.5, 0.0);
        assert!((x - 0.5).abs() < 1e-15 && y.abs() < 1e-15);
    }

    #[test]
    fn matches_chirikov_form() {
        let k = 0.9;
        let v = TrigSeries::standard(k);
        for &(x, y) in &[(0.1, 0.3), (0.77, -0.4), (2.3, 1.1)] {
            let (xs, ys) = standard_map_step(&v, x, y);
            let kick = k / (2.0 * PI) * (2.0 * PI * x).sin();
            assert!((xs - (x + y - kick)).abs() < 1e-14);
            assert!((ys - (y - kick)).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_sequence_orbit() {
        let lat = PeriodLattice::one_dim(3, -1).unwrap();
        let c = Configuration::linear(&lat, 0.2);
        let o = orbit_from_configuration(&c, &TrigSeries::zero(), 6).unwrap();
        for (_, y) in &o.points {
            assert!((y - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!(o.max_residual() < 1e-15);
        assert!(stationarity_residual_1d(&[0.2, 0.5, 0.8, 1.1], &TrigSeries::zero()) < 1e-15);
    }

    #[test]
    fn constant_sequences() {
        let v = TrigSeries::standard(1.0);
        let o = orbit_from_sequence(&[0.5, 0.5, 0.5], &v);
        assert!(o.points.iter().all(|&(x, y)| x == 0.5 && y.abs() < 1e-16));
        assert!(stationarity_residual_1d(&[0.5; 3], &v) < 1e-16);
        let r = stationarity_residual_1d(&[0.25; 3], &v);
        assert!((r - 1.0 / (2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn verdicts() {
        let k100 = invariant_curve_verdict(&TrigSeries::standard(100.0));
        assert_eq!(k100.verdict, CurveVerdict::NoneExist);
        assert_eq!(invariant_curve_verdict(&TrigSeries::zero()).verdict, CurveVerdict::Silent);
        let v = TrigSeries { terms: vec![TrigTerm { harmonic: 1, cos: 1.25, sin: 0.0 }] };
        assert_eq!(invariant_curve_verdict(&v).verdict, CurveVerdict::NoneExist);
        let below = invariant_curve_verdict(&TrigSeries::standard(78.0));
        assert_eq!(below.verdict, CurveVerdict::Silent);
        assert_eq!(k100.percival_bound, "63/64");
    }

    #[test]
    fn lift_is_degree_one_and_area_preserving() {
        let v = TrigSeries::standard(0.9);
        for &(x, y) in &[(0.1, 0.3), (0.77, -0.4), (2.3, 1.1)] {
            let (a, b) = standard_map_step(&v, x, y);
            let (c, d) = standard_map_step(&v, x + 1.0, y);
            assert!((c - a - 1.0).abs() < 1e-14 && (d - b).abs() < 1e-14);
            assert!((jacobian_determinant(&v, x, y) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn precise_iteration_tracks_hyperbolic_orbit() {
        // the fixed point x = 1/2 has trace 3
        let v = TrigSeries::standard(1.0);
        let (orbit, res) = refine_periodic_orbit(&[0.501], 0, &v, PRECISE_BITS).unwrap();
        assert!(res < 1e-12);
        let xs = iterate_precise(&v, &orbit[0], &orbit[0], 200, PRECISE_BITS).unwrap();
        assert!(xs.iter().all(|x| (x - 0.5).abs() < 1e-15));
        let plain = iterate(&v, 0.5 + 1e-12, 0.0, 200);
        assert!(plain.iter().any(|p| (p.0 - 0.5).abs() > 1e-3));
    }

    #[test]
    fn csv_wraps_x() {
        let o = orbit_from_sequence(&[1.25, 2.5], &TrigSeries::zero());
        let mut buf = Vec::new();
        o.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("i,x_lift,x_mod1,y\n0,1.25"));
        assert!(s.contains(",2.50000000000000000e-1,"));
    }
}
